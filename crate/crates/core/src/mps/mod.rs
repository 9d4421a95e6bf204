//! Matrix product states with an explicit log-magnitude factor.
//!
//! A state is `exp(log_scale) * contraction(sites)`. Every operation that can
//! grow or shrink magnitudes (encoding 784 pixels, summing thousands of
//! images) moves the magnitude into `log_scale` so that the site tensors stay
//! of order one.

mod canonical;
pub(crate) mod kernels;
mod logval;
mod sample;
mod variational;

pub use logval::LogComplex;
pub use variational::VariationalOutcome;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use log::warn;
use rand::Rng;

use crate::error::{Error, Result};
use crate::featuremap::FeatureMap;
use crate::tensor::{DenseTensor, C64};

/// Above this gap in `log_scale`, the smaller operand of [`Mps::add`] is
/// numerically zero and is dropped.
pub const ADD_DROP_GAP: f64 = 200.0;

/// `to_dense` refuses states with more amplitudes than this.
pub const DENSE_LIMIT: usize = 1 << 20;

/// Gauge of an MPS.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Canonical {
    None,
    /// Every site left of the last is a left isometry.
    Left,
    /// Every site right of the first is a right isometry.
    Right,
    /// Left isometries before the center, right isometries after it.
    Mixed(usize),
}

impl Canonical {
    /// Orthogonality center for a chain of `n` sites.
    pub fn center(&self, n: usize) -> Option<usize> {
        match *self {
            Canonical::None => None,
            Canonical::Left => Some(n.saturating_sub(1)),
            Canonical::Right => Some(0),
            Canonical::Mixed(c) => Some(c),
        }
    }
}

/// A discrete configuration `s = (s_1, ..., s_N)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpinConfig(pub Vec<usize>);

impl SpinConfig {
    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mps {
    sites: Vec<DenseTensor>,
    log_scale: f64,
    canonical: Canonical,
    map: Option<FeatureMap>,
}

impl Mps {
    /// Validates shapes: rank-3 sites, unit boundary bonds, matching interior
    /// bonds, finite values.
    pub fn new(sites: Vec<DenseTensor>, log_scale: f64) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Dimension("an MPS needs at least one site".into()));
        }
        if !log_scale.is_finite() {
            return Err(Error::Contract(format!("log_scale {log_scale} is not finite")));
        }
        for (k, site) in sites.iter().enumerate() {
            if site.rank() != 3 {
                return Err(Error::Dimension(format!(
                    "site {k} has shape {:?}, expected [left, phys, right]",
                    site.shape()
                )));
            }
            if !site.is_finite() {
                return Err(Error::Contract(format!("site {k} has non-finite entries")));
            }
        }
        let n = sites.len();
        if sites[0].shape()[0] != 1 || sites[n - 1].shape()[2] != 1 {
            return Err(Error::Dimension("boundary bond dimensions must be 1".into()));
        }
        for k in 1..n {
            let (left, right) = (sites[k - 1].shape()[2], sites[k].shape()[0]);
            if left != right {
                return Err(Error::Dimension(format!(
                    "bond between sites {} and {k}: {left} vs {right}",
                    k - 1
                )));
            }
        }
        Ok(Self {
            sites,
            log_scale,
            canonical: Canonical::None,
            map: None,
        })
    }

    pub(crate) fn from_parts(sites: Vec<DenseTensor>, log_scale: f64, canonical: Canonical) -> Self {
        Self {
            sites,
            log_scale,
            canonical,
            map: None,
        }
    }

    /// Encoding of one image: amplitude at `s` is `Π_k phi^{s_k}(x_k)`.
    ///
    /// Each site vector is stored with unit norm; its norm goes to `log_scale`.
    pub fn product_state(map: FeatureMap, x: &[f64]) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Dimension("cannot encode an empty image".into()));
        }
        let d = map.dim();
        let mut log_scale = 0.0;
        let mut sites = Vec::with_capacity(x.len());
        let mut zero = false;
        for (k, &xk) in x.iter().enumerate() {
            if !(0.0..=1.0).contains(&xk) {
                return Err(Error::Domain {
                    value: xk,
                    context: format!("pixel {k}"),
                });
            }
            let mut v = vec![C64::new(0.0, 0.0); d];
            map.eval_into(xk, &mut v);
            let norm = v.iter().map(C64::norm_sqr).sum::<f64>().sqrt();
            if norm > 0.0 {
                if norm != 1.0 {
                    v.iter_mut().for_each(|z| *z /= norm);
                    log_scale += norm.ln();
                }
            } else {
                zero = true;
            }
            sites.push(DenseTensor::from_parts(vec![1, d, 1], v));
        }
        if zero {
            log_scale = 0.0;
        }
        Ok(Self {
            sites,
            log_scale,
            canonical: Canonical::None,
            map: Some(map),
        })
    }

    /// The zero vector as a bond-1 MPS.
    pub fn zero(n: usize, d: usize) -> Self {
        let sites = (0..n.max(1)).map(|_| DenseTensor::zeros(vec![1, d, 1])).collect();
        Self::from_parts(sites, 0.0, Canonical::None)
    }

    /// Uniform bond dimension `chi`, entries uniform in the complex unit square.
    pub fn random<R: Rng + ?Sized>(n: usize, d: usize, chi: usize, rng: &mut R) -> Self {
        let n = n.max(1);
        let sites = (0..n)
            .map(|k| {
                let l = if k == 0 { 1 } else { chi };
                let r = if k + 1 == n { 1 } else { chi };
                DenseTensor::from_fn(vec![l, d, r], |_| {
                    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                })
            })
            .collect();
        Self::from_parts(sites, 0.0, Canonical::None)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[DenseTensor] {
        &self.sites
    }

    pub fn into_sites(self) -> Vec<DenseTensor> {
        self.sites
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn canonical(&self) -> Canonical {
        self.canonical
    }

    pub fn map(&self) -> Option<FeatureMap> {
        self.map
    }

    pub fn with_map(mut self, map: Option<FeatureMap>) -> Self {
        self.map = map;
        self
    }

    pub fn with_log_scale(mut self, log_scale: f64) -> Self {
        self.log_scale = log_scale;
        self
    }

    /// Declares the gauge; callers vouch for it (used when loading from disk).
    pub fn with_canonical(mut self, canonical: Canonical) -> Self {
        self.canonical = canonical;
        self
    }

    pub fn phys_dims(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s.shape()[1]).collect()
    }

    /// Interior bond dimensions, `len() - 1` of them.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.len() - 1].iter().map(|s| s.shape()[2]).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.sites.iter().map(DenseTensor::max_abs).fold(0.0, f64::max)
    }

    fn check_compatible(&self, other: &Self, op: &str) -> Result<()> {
        if self.phys_dims() != other.phys_dims() {
            return Err(Error::Dimension(format!(
                "{op}: physical dimensions {:?} vs {:?}",
                summarize(&self.phys_dims()),
                summarize(&other.phys_dims())
            )));
        }
        Ok(())
    }

    /// Exact sum. Interior bonds add; the operand with the smaller
    /// `log_scale` is rescaled onto the larger one's scale.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other, "add")?;
        let (big, small) = if self.log_scale >= other.log_scale {
            (self, other)
        } else {
            (other, self)
        };
        let gap = big.log_scale - small.log_scale;
        if gap > ADD_DROP_GAP {
            warn!("add: dropping operand {gap:.1} e-folds below the other");
            let mut out = big.clone();
            out.canonical = Canonical::None;
            out.map = common_map(self, other);
            return Ok(out);
        }
        let factor = (-gap).exp();
        let n = self.len();
        let mut sites = Vec::with_capacity(n);
        for k in 0..n {
            let (a, b) = (&big.sites[k], &small.sites[k]);
            let scale_b = if k == 0 { factor } else { 1.0 };
            sites.push(block_site(a, b, k == 0, k + 1 == n, scale_b));
        }
        Ok(Self {
            sites,
            log_scale: big.log_scale,
            canonical: Canonical::None,
            map: common_map(self, other),
        })
    }

    /// Exact sum of many states as one block-diagonal MPS.
    pub fn sum<'a>(states: impl IntoIterator<Item = &'a Mps>) -> Result<Self> {
        let states: Vec<&Mps> = states.into_iter().collect();
        let Some(first) = states.first() else {
            return Err(Error::Dimension("sum of no states".into()));
        };
        for s in &states[1..] {
            first.check_compatible(s, "sum")?;
        }
        let top = states.iter().map(|s| s.log_scale).fold(f64::NEG_INFINITY, f64::max);
        let kept: Vec<&Mps> = states
            .iter()
            .copied()
            .filter(|s| {
                let keep = top - s.log_scale <= ADD_DROP_GAP;
                if !keep {
                    warn!(
                        "sum: dropping a term {:.1} e-folds below the largest",
                        top - s.log_scale
                    );
                }
                keep
            })
            .collect();
        let n = first.len();
        let mut sites = Vec::with_capacity(n);
        for k in 0..n {
            let d = first.sites[k].shape()[1];
            let lefts: Vec<usize> = kept.iter().map(|s| s.sites[k].shape()[0]).collect();
            let rights: Vec<usize> = kept.iter().map(|s| s.sites[k].shape()[2]).collect();
            let l_tot = if k == 0 { 1 } else { lefts.iter().sum() };
            let r_tot = if k + 1 == n { 1 } else { rights.iter().sum() };
            let mut data = vec![C64::new(0.0, 0.0); l_tot * d * r_tot];
            let (mut l_off, mut r_off) = (0, 0);
            for (term, s) in kept.iter().enumerate() {
                let factor = if k == 0 { (s.log_scale - top).exp() } else { 1.0 };
                let site = &s.sites[k];
                let (l, _, r) = kernels::dims(site);
                for i in 0..l {
                    for p in 0..d {
                        for j in 0..r {
                            let dst = ((l_off + i) * d + p) * r_tot + r_off + j;
                            data[dst] += site.data()[(i * d + p) * r + j] * factor;
                        }
                    }
                }
                if k != 0 {
                    l_off += lefts[term];
                }
                if k + 1 != n {
                    r_off += rights[term];
                }
            }
            sites.push(DenseTensor::from_parts(vec![l_tot, d, r_tot], data));
        }
        let map = if kept.iter().all(|s| s.map == first.map) {
            first.map
        } else {
            None
        };
        Ok(Self {
            sites,
            log_scale: top,
            canonical: Canonical::None,
            map,
        })
    }

    /// Amplitude at one configuration, in log form.
    pub fn amplitude(&self, config: &SpinConfig) -> Result<LogComplex> {
        if config.len() != self.len() {
            return Err(Error::Dimension(format!(
                "configuration of length {} for {} sites",
                config.len(),
                self.len()
            )));
        }
        for (k, (&s, site)) in config.values().iter().zip(&self.sites).enumerate() {
            let d = site.shape()[1];
            if s >= d {
                return Err(Error::Dimension(format!("s_{k} = {s} but d = {d}")));
            }
        }
        let mut v = vec![C64::new(1.0, 0.0)];
        let mut log = self.log_scale;
        for (&s, site) in config.values().iter().zip(&self.sites) {
            let (l, d, r) = kernels::dims(site);
            let mut next = vec![C64::new(0.0, 0.0); r];
            for (i, vi) in v.iter().enumerate().take(l) {
                let row = &site.data()[(i * d + s) * r..(i * d + s + 1) * r];
                for (acc, a) in next.iter_mut().zip(row) {
                    *acc += vi * a;
                }
            }
            let m = next.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if m == 0.0 {
                return Ok(LogComplex::ZERO);
            }
            next.iter_mut().for_each(|z| *z /= m);
            log += m.ln();
            v = next;
        }
        Ok(LogComplex::from_complex(v[0]).scale_log(log))
    }

    /// `<self|other>` by left-to-right transfer matrices, rescaled per site.
    pub fn inner(&self, other: &Self) -> Result<LogComplex> {
        if self.len() != other.len() {
            return Err(Error::Dimension(format!(
                "inner: {} vs {} sites",
                self.len(),
                other.len()
            )));
        }
        self.check_compatible(other, "inner")?;
        let mut env = Mat::<C64>::from_fn(1, 1, |_, _| C64::new(1.0, 0.0));
        let mut log = self.log_scale + other.log_scale;
        for (a, b) in self.sites.iter().zip(&other.sites) {
            env = kernels::transfer_left(env.as_ref(), a, b);
            let m = max_abs(&env);
            if m == 0.0 {
                return Ok(LogComplex::ZERO);
            }
            kernels::scale(&mut env, 1.0 / m);
            log += m.ln();
        }
        Ok(LogComplex::from_complex(env[(0, 0)]).scale_log(log))
    }

    pub fn norm_log(&self) -> f64 {
        0.5 * self.inner(self).map(|z| z.log_magnitude).unwrap_or(f64::NEG_INFINITY)
    }

    /// `|<self|other>|² / (<self|self> <other|other>)`.
    pub fn fidelity(&self, other: &Self) -> Result<f64> {
        let overlap = self.inner(other)?;
        if overlap.is_zero() {
            return Ok(0.0);
        }
        Ok((2.0 * overlap.log_magnitude - 2.0 * self.norm_log() - 2.0 * other.norm_log()).exp())
    }

    /// `Σ_s conj(Φ^s(x)) m^s`, the overlap of the encoding of `x` with `m`.
    pub fn amplitude_continuous(&self, map: FeatureMap, x: &[f64]) -> Result<LogComplex> {
        Ok(self.amplitudes_continuous(map, std::slice::from_ref(&x))?[0])
    }

    /// [`Mps::amplitude_continuous`] for many images in one pass over the
    /// site tensors.
    pub fn amplitudes_continuous<X: AsRef<[f64]>>(&self, map: FeatureMap, xs: &[X]) -> Result<Vec<LogComplex>> {
        const CHUNK: usize = 64;
        let d = map.dim();
        if let Some(k) = self.sites.iter().position(|site| site.shape()[1] != d) {
            return Err(Error::Dimension(format!(
                "site {k} has d = {} but {map} has d = {d}",
                self.sites[k].shape()[1]
            )));
        }
        for x in xs {
            let x = x.as_ref();
            if x.len() != self.len() {
                return Err(Error::Dimension(format!(
                    "image of {} pixels for {} sites",
                    x.len(),
                    self.len()
                )));
            }
            if let Some(k) = x.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Domain {
                    value: x[k],
                    context: format!("pixel {k}"),
                });
            }
        }
        let mut out = Vec::with_capacity(xs.len());
        let mut phi = vec![C64::new(0.0, 0.0); d];
        for chunk in xs.chunks(CHUNK) {
            let n = chunk.len();
            // conj(phi^s(x_k)) for every image of the chunk, [image][s]
            let mut coef = vec![C64::new(0.0, 0.0); n * d];
            let mut v = Mat::<C64>::from_fn(n, 1, |_, _| C64::new(1.0, 0.0));
            let mut logs = vec![self.log_scale; n];
            let mut alive = vec![true; n];
            for (k, site) in self.sites.iter().enumerate() {
                for (j, x) in chunk.iter().enumerate() {
                    map.eval_into(x.as_ref()[k], &mut phi);
                    for (c, p) in coef[j * d..(j + 1) * d].iter_mut().zip(&phi) {
                        *c = p.conj();
                    }
                }
                let (l, _, r) = kernels::dims(site);
                let mut next = Mat::<C64>::zeros(n, r);
                for s in 0..d {
                    let w = Mat::<C64>::from_fn(n, l, |j, i| v[(j, i)] * coef[j * d + s]);
                    let a = MatRef::from_row_major_slice_with_stride(&site.data()[s * r..], l, r, d * r);
                    matmul(next.as_mut(), Accum::Add, w.as_ref(), a, C64::new(1.0, 0.0), Par::Seq);
                }
                for j in 0..n {
                    let m = (0..r).map(|c| next[(j, c)].norm()).fold(0.0, f64::max);
                    if m == 0.0 || !alive[j] {
                        alive[j] = false;
                        continue;
                    }
                    (0..r).for_each(|c| next[(j, c)] /= m);
                    logs[j] += m.ln();
                }
                v = next;
            }
            for j in 0..n {
                out.push(if alive[j] {
                    LogComplex::from_complex(v[(j, 0)]).scale_log(logs[j])
                } else {
                    LogComplex::ZERO
                });
            }
        }
        Ok(out)
    }

    /// The full state vector, `exp(log_scale)` included; `s_1` is the most
    /// significant index.
    pub fn to_dense(&self) -> Result<Vec<C64>> {
        let total = self
            .phys_dims()
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d).filter(|&t| t <= DENSE_LIMIT));
        let Some(_) = total else {
            return Err(Error::Capacity(format!(
                "dense vector of a {}-site MPS exceeds {DENSE_LIMIT} amplitudes",
                self.len()
            )));
        };
        // rows: configurations so far, cols: current right bond
        let mut acc = Mat::<C64>::from_fn(1, 1, |_, _| C64::new(1.0, 0.0));
        for site in &self.sites {
            let (_, d, r) = kernels::dims(site);
            let prod = &acc * kernels::right_mat(site);
            let rows = acc.nrows();
            acc = Mat::from_fn(rows * d, r, |i, j| prod[(i / d, (i % d) * r + j)]);
        }
        let scale = self.log_scale.exp();
        Ok((0..acc.nrows()).map(|i| acc[(i, 0)] * scale).collect())
    }
}

fn common_map(a: &Mps, b: &Mps) -> Option<FeatureMap> {
    if a.map == b.map {
        a.map
    } else {
        None
    }
}

fn summarize(dims: &[usize]) -> String {
    match dims {
        [first, rest @ ..] if rest.iter().all(|d| d == first) => format!("{} x {first}", dims.len()),
        _ => format!("{dims:?}"),
    }
}

pub(crate) fn max_abs(m: &Mat<C64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            best = best.max(m[(i, j)].norm());
        }
    }
    best
}

/// Direct-sum site for addition: concatenated along the right bond on the
/// first site, along the left bond on the last, block diagonal in between.
fn block_site(a: &DenseTensor, b: &DenseTensor, first: bool, last: bool, scale_b: f64) -> DenseTensor {
    let (la, d, ra) = kernels::dims(a);
    let (lb, _, rb) = kernels::dims(b);
    let l = if first { 1 } else { la + lb };
    let r = if last { 1 } else { ra + rb };
    let mut data = vec![C64::new(0.0, 0.0); l * d * r];
    for i in 0..la {
        for p in 0..d {
            for j in 0..ra {
                data[(i * d + p) * r + j] += a.data()[(i * d + p) * ra + j];
            }
        }
    }
    let (l_off, r_off) = (if first { 0 } else { la }, if last { 0 } else { ra });
    for i in 0..lb {
        for p in 0..d {
            for j in 0..rb {
                data[((l_off + i) * d + p) * r + r_off + j] += b.data()[(i * d + p) * rb + j] * scale_b;
            }
        }
    }
    DenseTensor::from_parts(vec![l, d, r], data)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Dense vector by explicit per-configuration amplitudes (independent of
    /// the left-to-right dense contraction).
    pub fn dense_by_enumeration(m: &Mps) -> Vec<C64> {
        let dims = m.phys_dims();
        let total: usize = dims.iter().product();
        (0..total)
            .map(|flat| {
                let cfg = unflatten(flat, &dims);
                m.amplitude(&cfg).unwrap().to_complex()
            })
            .collect()
    }

    pub fn unflatten(mut flat: usize, dims: &[usize]) -> SpinConfig {
        let mut v = vec![0; dims.len()];
        for k in (0..dims.len()).rev() {
            v[k] = flat % dims[k];
            flat /= dims[k];
        }
        SpinConfig(v)
    }

    pub fn kron_encoding(map: FeatureMap, x: &[f64]) -> Vec<C64> {
        let mut out = vec![C64::new(1.0, 0.0)];
        for &xk in x {
            let phi = map.evaluate(xk).unwrap();
            out = out.iter().flat_map(|a| phi.iter().map(move |p| a * p)).collect();
        }
        out
    }

    pub fn dot(a: &[C64], b: &[C64]) -> C64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    }

    pub fn rel_diff(a: &[C64], b: &[C64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(C64::norm_sqr).sum::<f64>().sqrt();
        num / den.max(f64::MIN_POSITIVE)
    }

    pub fn random_image<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>()).collect()
    }
}
