//! Pre-training: a class wavefunction is the normalized sum of the
//! product-state encodings of its training images, compressed to bond
//! dimension `chi` either in one shot (direct) or pairwise up a binary tree.

use std::fmt;
use std::str::FromStr;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::featuremap::FeatureMap;
use crate::mps::{Canonical, LogComplex, Mps};
use crate::tensor::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Direct,
    Tree,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Direct => "direct",
            Strategy::Tree => "tree",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Strategy::Direct),
            "tree" => Ok(Strategy::Tree),
            other => Err(Error::Config(format!(
                "unknown strategy {other:?} (expected direct or tree)"
            ))),
        }
    }
}

/// Default cap on the entries of the exact sum built by direct compression
/// (16 bytes each).
pub const DIRECT_ENTRY_CAP: usize = 1 << 26;

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionPlan {
    pub chi: usize,
    pub strategy: Strategy,
    /// Images per exact leaf of the tree.
    pub leaf_batch: usize,
    /// Variational sweeps after each SVD compression.
    pub sweeps: usize,
    pub tol: f64,
    pub seed: Option<u64>,
    /// Largest number of reduce tasks in flight.
    pub worker_limit: usize,
    pub direct_entry_cap: usize,
}

impl ReductionPlan {
    pub fn new(chi: usize, strategy: Strategy) -> Self {
        Self {
            chi,
            strategy,
            leaf_batch: chi,
            sweeps: 2,
            tol: 1e-9,
            seed: None,
            worker_limit: 1,
            direct_entry_cap: DIRECT_ENTRY_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chi == 0 {
            return Err(Error::Config("chi must be at least 1".into()));
        }
        if self.leaf_batch == 0 {
            return Err(Error::Config("leaf_batch must be at least 1".into()));
        }
        if self.worker_limit == 0 {
            return Err(Error::Config("worker_limit must be at least 1".into()));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::Config(format!("tol {} must be nonnegative", self.tol)));
        }
        Ok(())
    }
}

/// Unnormalized `Σ_i Φ(x_i)` with bond dimension `xs.len()`.
pub fn exact_batch(map: FeatureMap, xs: &[Vec<f64>]) -> Result<Mps> {
    if xs.is_empty() {
        return Err(Error::Dimension("empty batch".into()));
    }
    let states = xs
        .iter()
        .map(|x| Mps::product_state(map, x))
        .collect::<Result<Vec<_>>>()?;
    Mps::sum(&states)
}

/// `compress(a + b)` to `plan.chi`; unit-norm tensors, magnitude in `log_scale`.
pub fn reduce_pair(a: &Mps, b: &Mps, plan: &ReductionPlan) -> Result<Mps> {
    let sum = a.add(b)?;
    Ok(sum.compress_polished(plan.chi, plan.sweeps, plan.tol).0)
}

/// A normalized leaf: canonicalized if it already fits, compressed otherwise.
fn leaf(map: FeatureMap, xs: &[Vec<f64>], plan: &ReductionPlan) -> Result<Mps> {
    let exact = exact_batch(map, xs)?;
    if exact.max_bond() > plan.chi {
        Ok(exact.compress_polished(plan.chi, plan.sweeps, plan.tol).0)
    } else {
        Ok(exact.canonicalize(Canonical::Left))
    }
}

fn pool(plan: &ReductionPlan) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(plan.worker_limit)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", plan.worker_limit)))
}

/// Fan-in reduction over exact leaves of `plan.leaf_batch` images. Nodes are
/// paired left to right at every level; an odd last node moves up as is.
pub fn tree_reduce(map: FeatureMap, images: &[Vec<f64>], plan: &ReductionPlan) -> Result<Mps> {
    plan.validate()?;
    if images.is_empty() {
        return Err(Error::Dimension("no images to reduce".into()));
    }
    let pool = pool(plan)?;
    pool.install(|| {
        let mut level: Vec<Mps> = images
            .par_chunks(plan.leaf_batch)
            .map(|xs| leaf(map, xs, plan))
            .collect::<Result<_>>()?;
        let mut depth = 0;
        while level.len() > 1 {
            log::debug!("tree level {depth}: {} nodes", level.len());
            let mut next: Vec<Mps> = level
                .par_chunks(2)
                .filter(|pair| pair.len() == 2)
                .map(|pair| reduce_pair(&pair[0], &pair[1], plan))
                .collect::<Result<_>>()?;
            if level.len() % 2 == 1 {
                next.push(level.pop().expect("odd level is nonempty"));
            }
            level = next;
            depth += 1;
        }
        Ok(level.pop().expect("nonempty input yields a root"))
    })
}

/// Exact sum of all images, then one variational compression to `plan.chi`.
pub fn direct_sum_compress(map: FeatureMap, images: &[Vec<f64>], plan: &ReductionPlan) -> Result<Mps> {
    plan.validate()?;
    let Some(first) = images.first() else {
        return Err(Error::Dimension("no images to reduce".into()));
    };
    let entries = images
        .len()
        .saturating_mul(images.len())
        .saturating_mul(map.dim())
        .saturating_mul(first.len());
    if entries > plan.direct_entry_cap {
        return Err(Error::Capacity(format!(
            "the exact sum of {} images would hold {entries} entries (cap {}); \
             use a subset or the tree strategy",
            images.len(),
            plan.direct_entry_cap
        )));
    }
    let exact = exact_batch(map, images)?;
    Ok(exact.compress_variational(plan.chi, plan.sweeps.max(1), plan.tol).state)
}

pub fn reduce(map: FeatureMap, images: &[Vec<f64>], plan: &ReductionPlan) -> Result<Mps> {
    match plan.strategy {
        Strategy::Tree => tree_reduce(map, images, plan),
        Strategy::Direct => direct_sum_compress(map, images, plan),
    }
}

/// Controls the pairwise sum behind `C_Norm² = Σ_ij <Φ(x_i)|Φ(x_j)>`.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlapOptions {
    /// Largest number of off-diagonal pairs evaluated exactly.
    pub pair_cap: usize,
    /// Beyond the cap, estimate the off-diagonal sum from `pair_cap`
    /// uniformly drawn pairs instead of failing.
    pub estimate: bool,
    pub seed: u64,
}

impl Default for OverlapOptions {
    fn default() -> Self {
        Self {
            pair_cap: 1 << 22,
            estimate: false,
            seed: 0,
        }
    }
}

/// Feature vectors of one image, site by site.
pub(crate) fn encode(map: FeatureMap, x: &[f64]) -> Result<Vec<C64>> {
    let d = map.dim();
    let mut out = vec![C64::new(0.0, 0.0); d * x.len()];
    for (k, &xk) in x.iter().enumerate() {
        if !(0.0..=1.0).contains(&xk) {
            return Err(Error::Domain {
                value: xk,
                context: format!("pixel {k}"),
            });
        }
        map.eval_into(xk, &mut out[k * d..(k + 1) * d]);
    }
    Ok(out)
}

/// `<Φ(x)|Φ(y)>` as a product of local overlaps.
pub(crate) fn product_overlap(a: &[C64], b: &[C64], d: usize) -> LogComplex {
    let mut z = C64::new(1.0, 0.0);
    let mut log = 0.0;
    for (pa, pb) in a.chunks_exact(d).zip(b.chunks_exact(d)) {
        let local: C64 = pa.iter().zip(pb).map(|(u, v)| u.conj() * v).sum();
        z *= local;
        let mag = z.norm();
        if mag == 0.0 {
            return LogComplex::ZERO;
        }
        if !(1e-100..=1e100).contains(&mag) {
            z /= mag;
            log += mag.ln();
        }
    }
    LogComplex::from_complex(z).scale_log(log)
}

/// `ln C_Norm`, the log norm of the exact sum of encodings.
pub fn log_cnorm(map: FeatureMap, images: &[Vec<f64>], opts: &OverlapOptions) -> Result<f64> {
    let n = images.len();
    if n == 0 {
        return Err(Error::Dimension("no images".into()));
    }
    let d = map.dim();
    let enc = images.iter().map(|x| encode(map, x)).collect::<Result<Vec<_>>>()?;
    let diagonal = LogComplex::sum(enc.iter().map(|e| product_overlap(e, e, d)));
    let pairs = n * (n - 1) / 2;
    let off = if pairs <= opts.pair_cap {
        let rows: Vec<LogComplex> = (0..n)
            .into_par_iter()
            .map(|i| LogComplex::sum((i + 1..n).map(|j| real_part(product_overlap(&enc[i], &enc[j], d)))))
            .collect();
        LogComplex::sum(rows)
    } else if opts.estimate && opts.pair_cap > 0 {
        // unbiased: (number of pairs) * mean over uniformly drawn pairs
        let mut rng = StdRng::seed_from_u64(opts.seed);
        let draws: Vec<(usize, usize)> = (0..opts.pair_cap)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                (i, j)
            })
            .collect();
        let total = LogComplex::sum(
            draws
                .iter()
                .map(|&(i, j)| real_part(product_overlap(&enc[i], &enc[j], d))),
        );
        log::info!("C_Norm estimated from {} of {pairs} pairs", opts.pair_cap);
        total.scale_log((pairs as f64).ln() - (opts.pair_cap as f64).ln())
    } else {
        return Err(Error::Capacity(format!(
            "{pairs} image pairs exceed the cap of {}; enable the subset estimate or raise the cap",
            opts.pair_cap
        )));
    };
    let total = diagonal.add(off.scale_log(2f64.ln()));
    if total.is_zero() || total.phase.re <= 0.0 {
        return Err(Error::Consistency("sum of encodings has nonpositive norm".into()));
    }
    Ok(0.5 * total.log_magnitude)
}

fn real_part(z: LogComplex) -> LogComplex {
    let re = z.phase.re;
    if z.is_zero() || re == 0.0 {
        return LogComplex::ZERO;
    }
    LogComplex {
        log_magnitude: z.log_magnitude + re.abs().ln(),
        phase: C64::new(re.signum(), 0.0),
    }
}

/// `|<model|Σ>|²` with `Σ` the normalized exact sum of the encodings of
/// `images`, evaluated through product-state overlaps only.
pub fn mean_sq_overlap(model: &Mps, map: FeatureMap, images: &[Vec<f64>], opts: &OverlapOptions) -> Result<f64> {
    let log_c = log_cnorm(map, images, opts)?;
    let chunks = images
        .par_chunks(64)
        .map(|chunk| model.amplitudes_continuous(map, chunk))
        .collect::<Result<Vec<_>>>()?;
    let overlap = LogComplex::sum(chunks.into_iter().flatten()).conj();
    if overlap.is_zero() {
        return Ok(0.0);
    }
    let log_fid = 2.0 * (overlap.log_magnitude - model.norm_log() - log_c);
    Ok(log_fid.exp())
}
