//! Local feature maps `phi^s(x)` embedding one pixel intensity in `[0, 1]`
//! into a `d`-component complex vector.
//!
//! All maps share the measure density `w(x) = 2` on `[0, 1]`: integrals are
//! `∫ f(x) w(x) dx`. Under that measure the phased, indicator and sine-basis
//! maps are orthonormal; cos-sin is only pointwise normalized.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, C64};

/// Uniform measure density on `[0, 1]` shared by every built-in map.
pub const MEASURE_DENSITY: f64 = 2.0;

/// Knots in each inverse-CDF table.
pub const CDF_KNOTS: usize = 4096;

/// Interval width at which inverse-CDF bisection stops.
pub const CDF_TOLERANCE: f64 = 1e-10;

/// Default number of Simpson intervals for [`FeatureMap::gram`].
pub const DEFAULT_QUADRATURE: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureMap {
    /// `[cos(πx/2), sin(πx/2)]`.
    CosSin,
    /// `[e^{i3πx/2} cos(πx/2), e^{-i3πx/2} sin(πx/2)]`.
    Phased,
    /// `[1(x < 0.5), 1(x >= 0.5)]`.
    Indicator,
    /// `[sin(πx), sin(2πx), ..., sin(nπx)]`.
    SinBasis(usize),
}

impl FeatureMap {
    /// Physical dimension `d`.
    pub fn dim(&self) -> usize {
        match self {
            FeatureMap::CosSin | FeatureMap::Phased | FeatureMap::Indicator => 2,
            FeatureMap::SinBasis(n) => *n,
        }
    }

    pub fn measure_density(&self, _x: f64) -> f64 {
        MEASURE_DENSITY
    }

    /// Whether `Σ_s |phi^s(x)|² = 1` for every `x`.
    pub fn claims_normalized(&self) -> bool {
        !matches!(self, FeatureMap::SinBasis(_))
    }

    /// Whether the Gram matrix under the measure is the identity.
    pub fn claims_orthonormal(&self) -> bool {
        !matches!(self, FeatureMap::CosSin)
    }

    /// Interior points where the map is discontinuous.
    fn breakpoints(&self) -> &'static [f64] {
        match self {
            FeatureMap::Indicator => &[0.5],
            _ => &[],
        }
    }

    fn check_domain(x: f64, context: &str) -> Result<()> {
        if (0.0..=1.0).contains(&x) {
            Ok(())
        } else {
            Err(Error::Domain {
                value: x,
                context: context.to_string(),
            })
        }
    }

    pub fn evaluate(&self, x: f64) -> Result<Vec<C64>> {
        Self::check_domain(x, "feature map argument")?;
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        self.eval_into(x, &mut out);
        Ok(out)
    }

    /// Writes `phi(x)` into `out`; `x` must already be in range.
    pub(crate) fn eval_into(&self, x: f64, out: &mut [C64]) {
        match self {
            FeatureMap::CosSin => {
                out[0] = C64::new((FRAC_PI_2 * x).cos(), 0.0);
                out[1] = C64::new((FRAC_PI_2 * x).sin(), 0.0);
            }
            FeatureMap::Phased => {
                let phase = C64::from_polar(1.0, 1.5 * PI * x);
                out[0] = phase * (FRAC_PI_2 * x).cos();
                out[1] = phase.conj() * (FRAC_PI_2 * x).sin();
            }
            FeatureMap::Indicator => {
                let upper = x >= 0.5;
                out[0] = C64::new(if upper { 0.0 } else { 1.0 }, 0.0);
                out[1] = C64::new(if upper { 1.0 } else { 0.0 }, 0.0);
            }
            FeatureMap::SinBasis(n) => {
                for (k, slot) in out.iter_mut().enumerate().take(*n) {
                    *slot = C64::new(((k + 1) as f64 * PI * x).sin(), 0.0);
                }
            }
        }
    }

    fn component_density(&self, s: usize, x: f64, scratch: &mut [C64]) -> f64 {
        self.eval_into(x, scratch);
        scratch[s].norm_sqr() * self.measure_density(x)
    }

    /// Gram matrix `G[s][s'] = ∫ conj(phi^s) phi^{s'} w dx`.
    ///
    /// Smooth maps use composite Simpson with `quadrature_points` intervals
    /// (raised to at least 64 and made even). Piecewise-constant maps are
    /// integrated exactly piece by piece.
    pub fn gram(&self, quadrature_points: usize) -> DenseTensor {
        let d = self.dim();
        let mut g = vec![C64::new(0.0, 0.0); d * d];
        let mut phi = vec![C64::new(0.0, 0.0); d];
        let mut accumulate = |x: f64, weight: f64, phi: &mut [C64]| {
            self.eval_into(x, phi);
            let w = weight * self.measure_density(x);
            for s in 0..d {
                for t in 0..d {
                    g[s * d + t] += phi[s].conj() * phi[t] * w;
                }
            }
        };
        if matches!(self, FeatureMap::Indicator) {
            let mut edges = vec![0.0];
            edges.extend_from_slice(self.breakpoints());
            edges.push(1.0);
            for piece in edges.windows(2) {
                let (a, b) = (piece[0], piece[1]);
                accumulate(0.5 * (a + b), b - a, &mut phi);
            }
        } else {
            let mut n = quadrature_points.max(64);
            n += n % 2;
            let h = 1.0 / n as f64;
            for i in 0..=n {
                let coeff = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                accumulate(i as f64 * h, coeff * h / 3.0, &mut phi);
            }
        }
        DenseTensor::from_parts(vec![d, d], g)
    }

    /// Projection of `δ(x - xi)` onto the finite basis,
    /// `Ψ(x) = Σ_s phi^s(x) conj(phi^s(xi))`, at each grid point.
    pub fn smooth_delta(&self, xi: f64, xs: &[f64]) -> Result<Vec<C64>> {
        let centre = self.evaluate(xi)?;
        let mut phi = vec![C64::new(0.0, 0.0); self.dim()];
        xs.iter()
            .map(|&x| {
                Self::check_domain(x, "smoothing grid point")?;
                self.eval_into(x, &mut phi);
                Ok(phi.iter().zip(&centre).map(|(p, c)| p * c.conj()).sum())
            })
            .collect()
    }

    /// Largest deviation of `Σ_s |phi^s(x)|²` from one over the grid.
    pub fn check_normalization(&self, xs: &[f64]) -> f64 {
        let mut phi = vec![C64::new(0.0, 0.0); self.dim()];
        xs.iter()
            .filter(|x| (0.0..=1.0).contains(*x))
            .map(|&x| {
                self.eval_into(x, &mut phi);
                (phi.iter().map(C64::norm_sqr).sum::<f64>() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Inverse-CDF tables for every component. Fails for non-orthonormal maps,
    /// whose `|phi^s|² w` is not a probability density.
    pub fn conditional_sampler(&self) -> Result<ConditionalSampler> {
        ConditionalSampler::new(*self)
    }

    /// Draws `x ~ |phi^s(x)|² w(x)`. Builds the tables on every call; reuse a
    /// [`ConditionalSampler`] when drawing many values.
    pub fn sample_conditional<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> Result<f64> {
        self.conditional_sampler()?.sample(s, rng)
    }
}

impl fmt::Display for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureMap::CosSin => f.write_str("cos-sin"),
            FeatureMap::Phased => f.write_str("phased"),
            FeatureMap::Indicator => f.write_str("indicator"),
            FeatureMap::SinBasis(n) => write!(f, "sin-{n}"),
        }
    }
}

impl FromStr for FeatureMap {
    type Err = Error;

    fn from_str(id: &str) -> Result<Self> {
        match id {
            "cos-sin" => Ok(FeatureMap::CosSin),
            "phased" => Ok(FeatureMap::Phased),
            "indicator" => Ok(FeatureMap::Indicator),
            other => other
                .strip_prefix("sin-")
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n >= 1)
                .map(FeatureMap::SinBasis)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "unknown feature map {other:?} (expected cos-sin, phased, indicator or sin-N)"
                    ))
                }),
        }
    }
}

// 5-point Gauss-Legendre on [-1, 1].
const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// Precomputed inverse-CDF sampler for `x | s` under an orthonormal map.
#[derive(Clone, Debug)]
pub struct ConditionalSampler {
    map: FeatureMap,
    // cdf[s][i] = ∫_0^{i/CDF_KNOTS} |phi^s|² w dx
    cdf: Vec<Vec<f64>>,
}

impl ConditionalSampler {
    pub fn new(map: FeatureMap) -> Result<Self> {
        if !map.claims_orthonormal() {
            return Err(Error::Contract(format!(
                "conditional sampling needs an orthonormal feature map, {map} is not"
            )));
        }
        let h = 1.0 / CDF_KNOTS as f64;
        let mut scratch = vec![C64::new(0.0, 0.0); map.dim()];
        let cdf = (0..map.dim())
            .map(|s| {
                let mut table = Vec::with_capacity(CDF_KNOTS + 1);
                let mut acc = 0.0;
                table.push(0.0);
                for i in 0..CDF_KNOTS {
                    let a = i as f64 * h;
                    acc += integrate(map, s, a, a + h, &mut scratch);
                    table.push(acc);
                }
                table
            })
            .collect();
        Ok(Self { map, cdf })
    }

    pub fn map(&self) -> FeatureMap {
        self.map
    }

    /// Analytic-quality CDF of component `s` at `x`, normalized to one.
    pub fn cdf(&self, s: usize, x: f64) -> f64 {
        let table = &self.cdf[s];
        let x = x.clamp(0.0, 1.0);
        let h = 1.0 / CDF_KNOTS as f64;
        let i = ((x / h) as usize).min(CDF_KNOTS - 1);
        let mut scratch = vec![C64::new(0.0, 0.0); self.map.dim()];
        let partial = integrate(self.map, s, i as f64 * h, x, &mut scratch);
        (table[i] + partial) / table[CDF_KNOTS]
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> Result<f64> {
        let table = self.cdf.get(s).ok_or_else(|| {
            Error::Dimension(format!(
                "component {s} out of range for {} (d = {})",
                self.map,
                self.map.dim()
            ))
        })?;
        let total = table[CDF_KNOTS];
        let target = rng.random::<f64>() * total;
        let j = table.partition_point(|&c| c <= target).clamp(1, CDF_KNOTS);
        let i = j - 1;
        let h = 1.0 / CDF_KNOTS as f64;
        let (mut lo, mut hi) = (i as f64 * h, j as f64 * h);
        let (c_lo, c_hi) = (table[i], table[j]);
        let mut scratch = vec![C64::new(0.0, 0.0); self.map.dim()];
        // first probe at the linear interpolant, then plain bisection
        let mut probe = if c_hi > c_lo {
            lo + (target - c_lo) / (c_hi - c_lo) * h
        } else {
            0.5 * (lo + hi)
        };
        while hi - lo > CDF_TOLERANCE {
            let value = c_lo + integrate(self.map, s, i as f64 * h, probe, &mut scratch);
            if value <= target {
                lo = probe;
            } else {
                hi = probe;
            }
            probe = 0.5 * (lo + hi);
        }
        Ok(0.5 * (lo + hi))
    }
}

fn integrate(map: FeatureMap, s: usize, a: f64, b: f64, scratch: &mut [C64]) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS)
        .map(|(t, w)| w * map.component_density(s, mid + half * t, scratch))
        .sum::<f64>()
        * half
}

/// Full width of the contiguous region around the peak of `|values|` where
/// the magnitude stays at or above half the peak.
pub fn half_max_width(xs: &[f64], values: &[C64]) -> f64 {
    let mags: Vec<f64> = values.iter().map(|v| v.norm()).collect();
    let Some(peak) = argmax(&mags) else {
        return 0.0;
    };
    let half = 0.5 * mags[peak];
    let mut lo = peak;
    while lo > 0 && mags[lo - 1] >= half {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < mags.len() && mags[hi + 1] >= half {
        hi += 1;
    }
    xs[hi] - xs[lo]
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

/// `n` evenly spaced points covering `[0, 1]` inclusive.
pub fn unit_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}
