//! Big-endian IDX files as distributed with MNIST.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Dataset, PixelOrder};
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.pos + 4;
        let Some(chunk) = self.bytes.get(self.pos..end) else {
            return Err(Error::format(
                self.pos as u64,
                format!("file ends inside the {what} field"),
            ));
        };
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("four bytes")))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(Error::format(
                self.bytes.len() as u64,
                format!("{what}: expected {n} bytes, found {available}"),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(
                self.pos as u64,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn check_magic(r: &mut Reader<'_>, expected: u32) -> Result<()> {
    let magic = r.u32("magic")?;
    if magic != expected {
        return Err(Error::format(
            0,
            format!("magic {magic:#010x}, expected {expected:#010x}"),
        ));
    }
    Ok(())
}

/// Raw image file: `(rows, cols, pixels)` with one byte per pixel.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    let mut r = Reader { bytes, pos: 0 };
    check_magic(&mut r, IMAGE_MAGIC)?;
    let count = r.u32("image count")? as usize;
    let rows = r.u32("row count")? as usize;
    let cols = r.u32("column count")? as usize;
    let size = rows * cols;
    let payload = r.take(count * size, "pixel data")?;
    r.finish()?;
    let images = if size == 0 {
        vec![Vec::new(); count]
    } else {
        payload.chunks_exact(size).map(<[u8]>::to_vec).collect()
    };
    Ok((rows, cols, images))
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut r = Reader { bytes, pos: 0 };
    check_magic(&mut r, LABEL_MAGIC)?;
    let count = r.u32("label count")? as usize;
    let labels = r.take(count, "label data")?.to_vec();
    r.finish()?;
    Ok(labels)
}

pub fn encode_images(rows: usize, cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IMAGE_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        debug_assert_eq!(img.len(), rows * cols);
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Loads an image/label file pair, scaling bytes by `1/255`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let image_bytes = read(ip)?;
    let label_bytes = read(lp)?;
    let (rows, cols, raw) = parse_images(&image_bytes).map_err(|e| locate(e, ip))?;
    let labels = parse_labels(&label_bytes).map_err(|e| locate(e, lp))?;
    if raw.len() != labels.len() {
        return Err(Error::Consistency(format!(
            "{} holds {} images but {} holds {} labels",
            ip.display(),
            raw.len(),
            lp.display(),
            labels.len()
        )));
    }
    let images = raw
        .iter()
        .map(|img| img.iter().map(|&b| f64::from(b) / 255.0).collect())
        .collect();
    Ok(Dataset {
        images,
        labels,
        height: rows,
        width: cols,
        pixel_order: PixelOrder::Raster,
        provenance: vec![
            format!("images {} sha256:{}", ip.display(), digest(&image_bytes)),
            format!("labels {} sha256:{}", lp.display(), digest(&label_bytes)),
        ],
    })
}

fn locate(err: Error, path: &Path) -> Error {
    match err {
        Error::Format { offset, reason } => Error::Format {
            offset,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let images = vec![vec![0, 255, 128, 64], vec![1, 2, 3, 254]];
        (encode_images(2, 2, &images), encode_labels(&[7, 3]))
    }

    #[test]
    fn crafted_fixture_scales_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = fixture();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        fs::write(&ip, &img).unwrap();
        fs::write(&lp, &lab).unwrap();
        let d = load_idx(&ip, &lp).unwrap();
        assert_eq!((d.height, d.width, d.len()), (2, 2, 2));
        assert_eq!(d.images[0], vec![0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
        assert_eq!(d.labels, vec![7, 3]);
        assert!(d.provenance[0].contains("sha256:"));
    }

    #[test]
    fn round_trip_is_lossless() {
        let (img, lab) = fixture();
        let (rows, cols, raw) = parse_images(&img).unwrap();
        assert_eq!(encode_images(rows, cols, &raw), img);
        assert_eq!(encode_labels(&parse_labels(&lab).unwrap()), lab);
    }

    #[test]
    fn truncation_and_magic_errors() {
        let (img, lab) = fixture();
        for cut in [0, 3, 10, img.len() - 1] {
            let err = parse_images(&img[..cut]).unwrap_err();
            assert!(matches!(err, Error::Format { .. }), "cut {cut}: {err}");
        }
        let mut bad = img.clone();
        bad[3] = 0x01;
        assert!(matches!(parse_images(&bad), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(parse_labels(&img), Err(Error::Format { offset: 0, .. })));
        let mut long = lab.clone();
        long.push(0);
        assert!(matches!(parse_labels(&long), Err(Error::Format { offset: 10, .. })));
    }

    #[test]
    fn count_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (img, _) = fixture();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        fs::write(&ip, &img).unwrap();
        fs::write(&lp, encode_labels(&[1])).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Consistency(_))));
        assert!(matches!(
            load_idx(dir.path().join("missing"), &lp),
            Err(Error::Io { .. })
        ));
    }
}
