use faer::Mat;

use super::canonical::svd_sweep;
use super::kernels::{
    adjoint, dims, effective_site, left_mat, right_mat, site_from_mat, transfer_left, transfer_right,
};
use super::{Canonical, Mps};
use crate::tensor::{qr_mat, DenseTensor, C64};

#[derive(Clone, Debug)]
pub struct VariationalOutcome {
    /// Left-canonical, unit-norm tensors; `log_scale` carries the norm of the
    /// projection of the target onto the variational manifold.
    pub state: Mps,
    /// `|<state|target>|² / (<state|state> <target|target>)`.
    pub fidelity: f64,
    /// Full (right-to-left then left-to-right) sweeps performed.
    pub sweeps: usize,
    pub converged: bool,
    /// Discarded weight of the SVD initialization.
    pub svd_discarded: f64,
}

fn unit() -> Mat<C64> {
    Mat::from_fn(1, 1, |_, _| C64::new(1.0, 0.0))
}

fn norm_sqr(site: &DenseTensor) -> f64 {
    site.norm_sqr()
}

impl Mps {
    /// One-site least-squares fit of bond dimension `chi`, started from the
    /// SVD sweep. Runs at least one sweep and stops once the fidelity gain of
    /// a sweep drops below `tol`.
    pub fn compress_variational(&self, chi: usize, max_sweeps: usize, tol: f64) -> VariationalOutcome {
        let target = self.canonicalize(Canonical::Right);
        let (guess, svd_discarded) = svd_sweep(&target, chi, 0.0);
        fit(&target, guess, max_sweeps, tol, svd_discarded)
    }

    /// SVD sweep to `chi`, then up to `sweeps` variational sweeps. The polish
    /// is skipped when the SVD sweep discarded (numerically) nothing.
    /// Returns the state and the SVD discarded weight.
    pub fn compress_polished(&self, chi: usize, sweeps: usize, tol: f64) -> (Mps, f64) {
        let target = self.canonicalize(Canonical::Right);
        let (guess, discarded) = svd_sweep(&target, chi, 0.0);
        if sweeps == 0 || discarded <= LOSSLESS_WEIGHT {
            return (guess, discarded);
        }
        (fit(&target, guess, sweeps, tol, discarded).state, discarded)
    }
}

/// Discarded weights at or below this are rounding noise.
const LOSSLESS_WEIGHT: f64 = 1e-15;

/// Polishes `guess` (left-canonical) against `target` (right-canonical,
/// unit-norm center). Both carry their magnitudes in `log_scale`.
pub(crate) fn fit(target: &Mps, guess: Mps, max_sweeps: usize, tol: f64, svd_discarded: f64) -> VariationalOutcome {
    let n = target.len();
    let t = &target.sites;
    let mut g = guess.sites;

    // fidelity of the starting point: the guess has a unit-norm center at
    // the last site, the target at the first
    let mut left: Vec<Mat<C64>> = Vec::with_capacity(n);
    left.push(unit());
    for k in 0..n - 1 {
        let next = transfer_left(left[k].as_ref(), &g[k], &t[k]);
        left.push(next);
    }
    let last = transfer_left(left[n - 1].as_ref(), &g[n - 1], &t[n - 1]);
    let mut fidelity = last[(0, 0)].norm_sqr() / norm_sqr(&g[n - 1]).max(f64::MIN_POSITIVE);

    let mut right: Vec<Mat<C64>> = vec![unit(); n];
    let mut sweeps = 0;
    let mut converged = false;
    let mut best = (fidelity, g.clone());
    while sweeps < max_sweeps.max(1) {
        let before = fidelity;
        // right to left
        for k in (1..n).rev() {
            let m = effective_site(left[k].as_ref(), &t[k], right[k].as_ref());
            let (_, d, r) = dims(&m);
            let (q, _) = qr_mat(adjoint(right_mat(&m).as_ref()).as_ref());
            let q_adj = adjoint(q.as_ref());
            g[k] = site_from_mat(q_adj.as_ref(), q.ncols(), d, r);
            right[k - 1] = transfer_right(right[k].as_ref(), &g[k], &t[k]);
        }
        // left to right, starting with the optimal first site
        for k in 0..n - 1 {
            let m = effective_site(left[k].as_ref(), &t[k], right[k].as_ref());
            let (l, d, _) = dims(&m);
            let (q, _) = qr_mat(left_mat(&m).as_ref());
            g[k] = site_from_mat(q.as_ref(), l, d, q.ncols());
            left[k + 1] = transfer_left(left[k].as_ref(), &g[k], &t[k]);
        }
        g[n - 1] = effective_site(left[n - 1].as_ref(), &t[n - 1], right[n - 1].as_ref());
        fidelity = norm_sqr(&g[n - 1]);
        sweeps += 1;
        if fidelity > best.0 {
            best = (fidelity, g.clone());
        }
        if (fidelity - before).abs() < tol {
            converged = true;
            break;
        }
    }

    let (fidelity, mut sites) = best;
    let mut log = target.log_scale;
    let norm = sites[n - 1].frobenius_norm();
    if norm > 0.0 {
        sites[n - 1].scale(C64::new(1.0 / norm, 0.0));
        log += norm.ln();
    }
    let state = Mps {
        sites,
        log_scale: log,
        canonical: Canonical::Left,
        map: target.map,
    };
    VariationalOutcome {
        state,
        fidelity: fidelity.min(1.0),
        sweeps,
        converged,
        svd_discarded,
    }
}
