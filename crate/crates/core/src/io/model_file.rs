//! The `MPSM` model container.
//!
//! ```text
//! "MPSM"  u16 version  u64 payload length  payload  u32 CRC32(payload)
//! ```
//!
//! All integers and floats are little-endian. The payload holds the shared
//! metadata (map id, chi, pixel order, height, width, key/value run
//! description), one record per model
//! (label, `ln C_Norm`, gauge, site count) and then, model by model, every
//! site tensor as three `u32` extents followed by `(re, im)` double pairs.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::featuremap::FeatureMap;
use crate::inference::{ClassModel, ModelSet};
use crate::io::PixelOrder;
use crate::mps::{Canonical, Mps};
use crate::tensor::{DenseTensor, C64};

pub const MAGIC: &[u8; 4] = b"MPSM";
pub const VERSION: u16 = 1;
const HEADER: usize = 4 + 2 + 8;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u16(s.len() as u16);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let Some(out) = self.bytes.get(self.pos..self.pos + n) else {
            return Err(Error::format(
                (self.base + self.pos) as u64,
                format!("payload ends inside {what}"),
            ));
        };
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("two bytes")))
    }
    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("four bytes")) as usize)
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("eight bytes")))
    }
    fn str(&mut self, what: &str) -> Result<String> {
        let n = self.u16(what)? as usize;
        let at = self.base + self.pos;
        String::from_utf8(self.take(n, what)?.to_vec())
            .map_err(|_| Error::format(at as u64, format!("{what} is not UTF-8")))
    }
    fn offset(&self) -> u64 {
        (self.base + self.pos) as u64
    }
}

fn canonical_tag(c: Canonical) -> (u8, usize) {
    match c {
        Canonical::None => (0, 0),
        Canonical::Left => (1, 0),
        Canonical::Right => (2, 0),
        Canonical::Mixed(k) => (3, k),
    }
}

fn canonical_from_tag(tag: u8, center: usize) -> Option<Canonical> {
    match tag {
        0 => Some(Canonical::None),
        1 => Some(Canonical::Left),
        2 => Some(Canonical::Right),
        3 => Some(Canonical::Mixed(center)),
        _ => None,
    }
}

pub fn to_bytes(set: &ModelSet) -> Vec<u8> {
    let mut p = Writer(Vec::new());
    p.str(&set.map().to_string());
    p.u32(set.chi());
    p.u8(set.pixel_order().tag());
    p.u32(set.height);
    p.u32(set.width);
    p.u32(set.metadata.len());
    for (k, v) in &set.metadata {
        p.str(k);
        p.str(v);
    }
    p.u32(set.models().len());
    for m in set.models() {
        let (tag, center) = canonical_tag(m.state().canonical());
        p.u8(m.label);
        p.f64(m.log_cnorm);
        p.u8(tag);
        p.u32(center);
        p.u32(m.sites());
    }
    for m in set.models() {
        for site in m.state().sites() {
            for &e in site.shape() {
                p.u32(e);
            }
            for z in site.data() {
                p.f64(z.re);
                p.f64(z.im);
            }
        }
    }
    let payload = p.0;
    let mut out = Vec::with_capacity(HEADER + payload.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelSet> {
    if bytes.len() < HEADER {
        return Err(Error::format(bytes.len() as u64, "file shorter than the header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(0, "missing MPSM magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let len = u64::from_le_bytes(bytes[6..14].try_into().expect("eight bytes"));
    let expected = (HEADER as u64).checked_add(len).and_then(|v| v.checked_add(4));
    if expected != Some(bytes.len() as u64) {
        return Err(Error::format(
            6,
            format!("payload length {len} does not match a file of {} bytes", bytes.len()),
        ));
    }
    let payload = &bytes[HEADER..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("four bytes"));
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    parse_payload(payload)
}

fn parse_payload(payload: &[u8]) -> Result<ModelSet> {
    let mut r = Reader {
        bytes: payload,
        pos: 0,
        base: HEADER,
    };
    let at = r.offset();
    let map_id = r.str("map id")?;
    let map: FeatureMap = map_id
        .parse()
        .map_err(|_| Error::format(at, format!("unknown map id {map_id:?}")))?;
    let chi = r.u32("chi")?;
    let at = r.offset();
    let order = PixelOrder::from_tag(r.u8("pixel order")?).ok_or_else(|| Error::format(at, "unknown pixel order"))?;
    let height = r.u32("height")?;
    let width = r.u32("width")?;
    let entries = r.u32("metadata count")?;
    let mut metadata = Vec::with_capacity(entries.min(256));
    for _ in 0..entries {
        metadata.push((r.str("metadata key")?, r.str("metadata value")?));
    }
    let count = r.u32("model count")?;
    let mut records = Vec::with_capacity(count.min(256));
    for _ in 0..count {
        let label = r.u8("label")?;
        let log_cnorm = r.f64("log C_Norm")?;
        let at = r.offset();
        let tag = r.u8("gauge")?;
        let center = r.u32("gauge center")?;
        let canonical =
            canonical_from_tag(tag, center).ok_or_else(|| Error::format(at, format!("unknown gauge tag {tag}")))?;
        let sites = r.u32("site count")?;
        records.push((label, log_cnorm, canonical, sites));
    }
    let mut models = Vec::with_capacity(records.len());
    for (label, log_cnorm, canonical, n) in records {
        let mut sites = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let shape = vec![r.u32("extent")?, r.u32("extent")?, r.u32("extent")?];
            let len = shape.iter().try_fold(1usize, |acc, &e| acc.checked_mul(e));
            let len = len
                .filter(|&l| l.checked_mul(16).is_some_and(|b| b <= payload.len()))
                .ok_or_else(|| Error::format(r.offset(), format!("implausible tensor shape {shape:?}")))?;
            let raw = r.take(16 * len, "tensor values")?;
            let data = raw
                .chunks_exact(16)
                .map(|c| {
                    C64::new(
                        f64::from_le_bytes(c[..8].try_into().expect("eight bytes")),
                        f64::from_le_bytes(c[8..].try_into().expect("eight bytes")),
                    )
                })
                .collect();
            sites.push(DenseTensor::new(shape, data)?);
        }
        let state = Mps::new(sites, 0.0)?.with_canonical(canonical);
        models.push(ClassModel::new(label, state, map, log_cnorm, chi, order)?);
    }
    if r.pos != payload.len() {
        return Err(Error::format(r.offset(), "trailing bytes after the last tensor"));
    }
    let mut set = ModelSet::new(models, height, width)?;
    set.metadata = metadata;
    Ok(set)
}

pub fn save_model(set: &ModelSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(set)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_set(seed: u64) -> ModelSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let models = [3u8, 0, 7]
            .iter()
            .map(|&l| {
                let state = Mps::random(6, 2, 3, &mut rng).canonicalize(Canonical::Left);
                ClassModel::new(l, state, FeatureMap::Phased, 1.5 + l as f64, 3, PixelOrder::Snake).unwrap()
            })
            .collect();
        ModelSet::new(models, 2, 3)
            .unwrap()
            .with_metadata("strategy", "tree")
            .with_metadata("source", "unit test")
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let set = random_set(1);
        let bytes = to_bytes(&set);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, set);
        assert_eq!(to_bytes(&back), bytes);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mpsm");
        save_model(&set, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), set);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = to_bytes(&random_set(2));
        for at in [HEADER, HEADER + 40, bytes.len() - 5, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[at] ^= 0x10;
            assert!(matches!(from_bytes(&bad), Err(Error::Checksum { .. })), "byte {at}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(Error::Format { offset: 0, .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(from_bytes(&bad), Err(Error::Version { found: 9, .. })));
        assert!(matches!(
            from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Format { .. })
        ));
        assert!(matches!(from_bytes(&bytes[..5]), Err(Error::Format { .. })));
    }

    #[test]
    fn malformed_payload_with_valid_checksum() {
        let bytes = to_bytes(&random_set(3));
        let mut payload = bytes[HEADER..bytes.len() - 4].to_vec();
        payload.truncate(payload.len() - 16);
        let mut file = Vec::new();
        file.extend_from_slice(MAGIC);
        file.extend_from_slice(&VERSION.to_le_bytes());
        file.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        file.extend_from_slice(&payload);
        file.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        assert!(matches!(from_bytes(&file), Err(Error::Format { .. })));
    }
}
