//! CSV metrics and curves, PGM/PBM images.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::C64;

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub chi: usize,
    pub strategy: String,
    pub map_id: String,
    pub accuracy: Option<f64>,
    pub mean_sq_overlap: Option<f64>,
    pub wall_time_s: f64,
}

pub fn export_metrics(records: &[MetricRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    let mut r = reader(path.as_ref())?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub re: f64,
    pub im: f64,
    pub abs: f64,
}

/// One row per grid point of a complex-valued curve such as `Ψ(x)`.
pub fn export_curve(xs: &[f64], values: &[C64], path: impl AsRef<Path>) -> Result<()> {
    if xs.len() != values.len() {
        return Err(Error::Dimension(format!(
            "{} grid points, {} values",
            xs.len(),
            values.len()
        )));
    }
    let path = path.as_ref();
    let mut w = writer(path)?;
    for (&x, v) in xs.iter().zip(values) {
        w.serialize(CurvePoint {
            x,
            re: v.re,
            im: v.im,
            abs: v.norm(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_curve(path: impl AsRef<Path>) -> Result<Vec<CurvePoint>> {
    let mut r = reader(path.as_ref())?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn check_size(len: usize, height: usize, width: usize) -> Result<()> {
    if len != height * width {
        return Err(Error::Dimension(format!("{len} pixels for a {height}x{width} image")));
    }
    Ok(())
}

/// Binary greyscale PGM, values in `[0, 1]` quantized to 8 bits.
pub fn encode_pgm(pixels: &[f64], height: usize, width: usize) -> Result<Vec<u8>> {
    check_size(pixels.len(), height, width)?;
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

/// Plain PBM. Bit 1 (ink) is drawn white as in MNIST, so it is written as
/// PBM 0.
pub fn encode_pbm(bits: &[usize], height: usize, width: usize) -> Result<Vec<u8>> {
    check_size(bits.len(), height, width)?;
    let mut out = format!("P1\n{width} {height}\n");
    for row in bits.chunks(width.max(1)) {
        let line: Vec<&str> = row.iter().map(|&b| if b == 0 { "1" } else { "0" }).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out.into_bytes())
}

pub fn export_pgm(pixels: &[f64], height: usize, width: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(pixels, height, width)?).map_err(|e| Error::io(path, e))
}

pub fn export_pbm(bits: &[usize], height: usize, width: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pbm(bits, height, width)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featuremap::{unit_grid, FeatureMap};

    fn record(chi: usize) -> MetricRecord {
        MetricRecord {
            chi,
            strategy: "tree".into(),
            map_id: "cos-sin".into(),
            accuracy: Some(0.8125),
            mean_sq_overlap: None,
            wall_time_s: 1.25,
        }
    }

    #[test]
    fn one_record_two_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        export_metrics(&[record(8)], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "chi,strategy,map_id,accuracy,mean_sq_overlap,wall_time_s");
        assert_eq!(lines[1], "8,tree,cos-sin,0.8125,,1.25");
        assert_eq!(read_metrics(&path).unwrap(), vec![record(8)]);
    }

    #[test]
    fn zero_grey_image() {
        let bytes = encode_pgm(&[0.0; 4], 2, 2).unwrap();
        assert!(bytes.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 0, 0, 0]);
        assert_eq!(*encode_pgm(&[1.0], 1, 1).unwrap().last().unwrap(), 255);
        assert!(encode_pgm(&[0.0; 3], 2, 2).is_err());
    }

    #[test]
    fn binary_image() {
        let text = String::from_utf8(encode_pbm(&[0, 1, 1, 0], 2, 2).unwrap()).unwrap();
        assert_eq!(text, "P1\n2 2\n1 0\n0 1\n");
    }

    #[test]
    fn curve_round_trip() {
        let xs = unit_grid(1000);
        let map = FeatureMap::SinBasis(40);
        let values = map.smooth_delta(0.5, &xs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        export_curve(&xs, &values, &path).unwrap();
        let back = read_curve(&path).unwrap();
        assert_eq!(back.len(), xs.len());
        for (p, v) in back.iter().zip(&values) {
            let scale = v.norm().max(1e-300);
            assert!((p.abs - v.norm()).abs() <= 1e-6 * scale);
            assert!((C64::new(p.re, p.im) - v).norm() <= 1e-6 * scale.max(1e-12));
        }
    }
}
