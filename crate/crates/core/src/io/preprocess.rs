use std::fmt;
use std::str::FromStr;

use super::Dataset;
use crate::error::{Error, Result};

/// How a 2-D image is laid out along the chain of sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PixelOrder {
    /// Row by row, left to right.
    Raster,
    /// Row by row, alternating direction, so that consecutive sites are
    /// always spatial neighbours.
    Snake,
}

impl PixelOrder {
    pub fn tag(self) -> u8 {
        match self {
            PixelOrder::Raster => 0,
            PixelOrder::Snake => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(PixelOrder::Raster),
            1 => Some(PixelOrder::Snake),
            _ => None,
        }
    }
}

impl fmt::Display for PixelOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PixelOrder::Raster => "raster",
            PixelOrder::Snake => "snake",
        })
    }
}

impl FromStr for PixelOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raster" => Ok(PixelOrder::Raster),
            "snake" => Ok(PixelOrder::Snake),
            other => Err(Error::Config(format!(
                "unknown pixel order {other:?} (expected raster or snake)"
            ))),
        }
    }
}

/// Raster index of the pixel stored at chain position `site`.
fn raster_index(order: PixelOrder, width: usize, site: usize) -> usize {
    let (row, col) = (site / width, site % width);
    match order {
        PixelOrder::Snake if row % 2 == 1 => row * width + (width - 1 - col),
        _ => site,
    }
}

/// Reorders a raster-ordered image into `order`.
pub fn from_raster(image: &[f64], width: usize, order: PixelOrder) -> Vec<f64> {
    (0..image.len()).map(|k| image[raster_index(order, width, k)]).collect()
}

/// Inverse of [`from_raster`].
pub fn to_raster<T: Copy + Default>(image: &[T], width: usize, order: PixelOrder) -> Vec<T> {
    let mut out = vec![T::default(); image.len()];
    for (k, &v) in image.iter().enumerate() {
        out[raster_index(order, width, k)] = v;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessConfig {
    /// Side of the square mean-pooling window; 1 keeps the resolution.
    pub downscale: usize,
    /// Pixels at or above the threshold become 1, the rest 0.
    pub binarize: Option<f64>,
    pub order: PixelOrder,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            downscale: 1,
            binarize: None,
            order: PixelOrder::Raster,
        }
    }
}

fn pool(image: &[f64], height: usize, width: usize, f: usize) -> Vec<f64> {
    let (h, w) = (height / f, width / f);
    let area = (f * f) as f64;
    let mut out = vec![0.0; h * w];
    for (i, v) in out.iter_mut().enumerate() {
        let (r, c) = (i / w, i % w);
        let mut acc = 0.0;
        for dr in 0..f {
            let row = &image[(r * f + dr) * width + c * f..][..f];
            acc += row.iter().sum::<f64>();
        }
        *v = acc / area;
    }
    out
}

/// Pooling, optional binarization and reordering, applied in that order.
pub fn preprocess(d: &Dataset, cfg: &PreprocessConfig) -> Result<Dataset> {
    let f = cfg.downscale;
    if f == 0 || d.height % f != 0 || d.width % f != 0 {
        return Err(Error::Config(format!(
            "downscale factor {f} does not divide the {}x{} image size",
            d.height, d.width
        )));
    }
    if let Some(t) = cfg.binarize {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Config(format!("binarize threshold {t} outside [0, 1]")));
        }
    }
    let (h, w) = (d.height / f, d.width / f);
    let images = d
        .images
        .iter()
        .map(|img| {
            let raster = to_raster(img, d.width, d.pixel_order);
            let mut x = if f == 1 {
                raster
            } else {
                pool(&raster, d.height, d.width, f)
            };
            if let Some(t) = cfg.binarize {
                x.iter_mut().for_each(|v| *v = if *v >= t { 1.0 } else { 0.0 });
            }
            // pooling sums can overshoot 1 by an ulp
            x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            from_raster(&x, w, cfg.order)
        })
        .collect();
    let mut provenance = d.provenance.clone();
    if f != 1 {
        provenance.push(format!("mean-pool {f}x{f} -> {h}x{w}"));
    }
    if let Some(t) = cfg.binarize {
        provenance.push(format!("binarize at {t}"));
    }
    if cfg.order != d.pixel_order {
        provenance.push(format!("order {}", cfg.order));
    }
    Ok(Dataset {
        images,
        labels: d.labels.clone(),
        height: h,
        width: w,
        pixel_order: cfg.order,
        provenance,
    })
}
