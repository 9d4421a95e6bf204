//! Dataset ingestion, preprocessing, model files and exports.

pub mod export;
pub mod idx;
pub mod model_file;
pub mod preprocess;

use std::collections::BTreeMap;

pub use preprocess::PixelOrder;

/// Images with values in `[0, 1]`, row length `height * width`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub height: usize,
    pub width: usize,
    pub pixel_order: PixelOrder,
    /// Source digests and applied transforms, oldest first.
    pub provenance: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Images grouped by label, input order kept within each group.
    pub fn by_label(&self) -> BTreeMap<u8, Vec<Vec<f64>>> {
        let mut out: BTreeMap<u8, Vec<Vec<f64>>> = BTreeMap::new();
        for (x, &l) in self.images.iter().zip(&self.labels) {
            out.entry(l).or_default().push(x.clone());
        }
        out
    }

    /// The first `n` images of every label, input order kept.
    pub fn take_per_label(&self, n: usize) -> Self {
        let mut seen: BTreeMap<u8, usize> = BTreeMap::new();
        let mut out = self.subset(|_, _| false);
        for (x, &l) in self.images.iter().zip(&self.labels) {
            let count = seen.entry(l).or_default();
            if *count < n {
                *count += 1;
                out.images.push(x.clone());
                out.labels.push(l);
            }
        }
        out.provenance.push(format!("first {n} per label"));
        out
    }

    /// The first `n` images.
    pub fn take(&self, n: usize) -> Self {
        let mut out = self.subset(|i, _| i < n);
        out.provenance.push(format!("first {n}"));
        out
    }

    fn subset(&self, keep: impl Fn(usize, u8) -> bool) -> Self {
        let (images, labels) = self
            .images
            .iter()
            .zip(&self.labels)
            .enumerate()
            .filter(|(i, (_, &l))| keep(*i, l))
            .map(|(_, (x, &l))| (x.clone(), l))
            .unzip();
        Self {
            images,
            labels,
            height: self.height,
            width: self.width,
            pixel_order: self.pixel_order,
            provenance: self.provenance.clone(),
        }
    }
}
