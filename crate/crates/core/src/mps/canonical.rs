use faer::Mat;

use super::kernels::{self, dims, left_mat, right_mat, site_from_mat};
use super::{Canonical, Mps};
use crate::error::{Error, Result};
use crate::tensor::{qr_mat, svd_mat, truncation_rank, DenseTensor, C64};

/// Moves the norm of `m` into `log`, leaving `m` with unit Frobenius norm.
/// A zero matrix is left untouched.
fn absorb_norm(m: &mut Mat<C64>, log: &mut f64) {
    let norm = kernels::frobenius(m.as_ref());
    if norm > 0.0 && norm.is_finite() {
        kernels::scale(m, 1.0 / norm);
        *log += norm.ln();
    }
}

/// Makes site `k` a left isometry and pushes the remainder into site `k + 1`.
fn shift_right(sites: &mut [DenseTensor], k: usize, log: &mut f64) {
    let (l, d, _) = dims(&sites[k]);
    let (q, mut r) = qr_mat(left_mat(&sites[k]).as_ref());
    absorb_norm(&mut r, log);
    let m = q.ncols();
    sites[k] = site_from_mat(q.as_ref(), l, d, m);
    let (_, d2, r2) = dims(&sites[k + 1]);
    let next = &r * right_mat(&sites[k + 1]);
    sites[k + 1] = site_from_mat(next.as_ref(), m, d2, r2);
}

/// Makes site `k` a right isometry and pushes the remainder into site `k - 1`.
fn shift_left(sites: &mut [DenseTensor], k: usize, log: &mut f64) {
    let (_, d, r) = dims(&sites[k]);
    let (q, mut rr) = qr_mat(kernels::adjoint(right_mat(&sites[k]).as_ref()).as_ref());
    absorb_norm(&mut rr, log);
    let m = q.ncols();
    sites[k] = site_from_mat(kernels::adjoint(q.as_ref()).as_ref(), m, d, r);
    let (l0, d0, _) = dims(&sites[k - 1]);
    let prev = left_mat(&sites[k - 1]) * rr.adjoint();
    sites[k - 1] = site_from_mat(prev.as_ref(), l0, d0, m);
}

fn normalize_site(site: &mut DenseTensor, log: &mut f64) {
    let norm = site.frobenius_norm();
    if norm > 0.0 && norm.is_finite() {
        site.scale(C64::new(1.0 / norm, 0.0));
        *log += norm.ln();
    }
}

impl Mps {
    /// Brings the state into the requested gauge with a unit-norm center;
    /// the norm lands in `log_scale`. `Canonical::None` returns a copy.
    pub fn canonicalize(&self, form: Canonical) -> Self {
        let n = self.len();
        let Some(center) = form.center(n) else {
            return self.clone();
        };
        let center = center.min(n - 1);
        let mut sites = self.sites.clone();
        let mut log = self.log_scale;
        for k in 0..center {
            shift_right(&mut sites, k, &mut log);
        }
        for k in (center + 1..n).rev() {
            shift_left(&mut sites, k, &mut log);
        }
        normalize_site(&mut sites[center], &mut log);
        let canonical = match form {
            Canonical::Mixed(0) => Canonical::Right,
            Canonical::Mixed(c) if c + 1 >= n => Canonical::Left,
            other => other,
        };
        Self {
            sites,
            log_scale: log,
            canonical,
            map: self.map,
        }
    }

    /// Largest deviation from the isometry conditions implied by the gauge.
    pub fn isometry_error(&self) -> f64 {
        let n = self.len();
        let Some(center) = self.canonical.center(n) else {
            return f64::INFINITY;
        };
        let mut worst = 0.0f64;
        for (k, site) in self.sites.iter().enumerate() {
            if k == center {
                continue;
            }
            let m = if k < center {
                let a = left_mat(site);
                a.adjoint() * &a
            } else {
                let a = right_mat(site);
                &a * a.adjoint()
            };
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((m[(i, j)] - target).norm());
                }
            }
        }
        worst
    }

    /// One canonicalization pass followed by a left-to-right SVD truncation
    /// sweep. Returns the left-canonical result (unit-norm tensors, projected
    /// magnitude in `log_scale`) and the summed discarded weight of the
    /// normalized state.
    pub fn compress_svd(&self, chi_max: usize, eps_cut: f64) -> (Self, f64) {
        let target = self.canonicalize(Canonical::Right);
        svd_sweep(&target, chi_max, eps_cut)
    }

    /// Truncates only the bond between sites `cut - 1` and `cut`.
    /// Returns the truncated state and the discarded Schmidt weight.
    pub fn truncate_cut(&self, cut: usize, chi_max: usize) -> Result<(Self, f64)> {
        self.check_cut(cut)?;
        let mut state = self.canonicalize(Canonical::Mixed(cut - 1));
        let k = cut - 1;
        let (l, d, _) = dims(&state.sites[k]);
        let dec = svd_mat(left_mat(&state.sites[k]).as_ref())?;
        let keep = truncation_rank(&dec.s, chi_max.max(1), 0.0);
        let discarded: f64 = dec.s[keep..].iter().map(|x| x * x).sum();
        let u = dec.u.subcols(0, keep).to_owned();
        state.sites[k] = site_from_mat(u.as_ref(), l, d, keep);
        let sv = Mat::from_fn(keep, dec.v_adj.ncols(), |i, j| dec.v_adj[(i, j)] * dec.s[i]);
        let (_, d2, r2) = dims(&state.sites[cut]);
        let next = &sv * right_mat(&state.sites[cut]);
        state.sites[cut] = site_from_mat(next.as_ref(), keep, d2, r2);
        let mut log = state.log_scale;
        normalize_site(&mut state.sites[cut], &mut log);
        state.log_scale = log;
        state.canonical = if cut + 1 == self.len() {
            Canonical::Left
        } else {
            Canonical::Mixed(cut)
        };
        Ok((state, discarded))
    }

    /// Singular values across the bond between sites `cut - 1` and `cut` of
    /// the normalized state, nonincreasing, numerical zeros removed.
    pub fn schmidt_spectrum(&self, cut: usize) -> Result<Vec<f64>> {
        self.check_cut(cut)?;
        let state = self.canonicalize(Canonical::Mixed(cut - 1));
        let dec = svd_mat(left_mat(&state.sites[cut - 1]).as_ref())?;
        let keep = truncation_rank(&dec.s, usize::MAX, 0.0);
        let mut s = dec.s;
        s.truncate(keep);
        let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            s.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(s)
    }

    fn check_cut(&self, cut: usize) -> Result<()> {
        if cut == 0 || cut >= self.len() {
            return Err(Error::Dimension(format!(
                "cut {cut} outside 1..={} for {} sites",
                self.len().saturating_sub(1),
                self.len()
            )));
        }
        Ok(())
    }
}

/// SVD truncation sweep over a right-canonical, unit-norm `target`.
pub(crate) fn svd_sweep(target: &Mps, chi_max: usize, eps_cut: f64) -> (Mps, f64) {
    debug_assert_eq!(target.canonical, Canonical::Right);
    let n = target.len();
    let mut sites = target.sites.clone();
    let mut log = target.log_scale;
    let mut discarded = 0.0;
    for k in 0..n.saturating_sub(1) {
        let (l, d, _) = dims(&sites[k]);
        let dec = match svd_mat(left_mat(&sites[k]).as_ref()) {
            Ok(dec) => dec,
            Err(err) => {
                // QR still gives an exact (untruncated) gauge move
                log::warn!("svd failed at site {k} ({err}); keeping the bond");
                shift_right(&mut sites, k, &mut log);
                continue;
            }
        };
        let keep = truncation_rank(&dec.s, chi_max.max(1), eps_cut.max(0.0));
        let total: f64 = dec.s.iter().map(|x| x * x).sum();
        let kept: f64 = dec.s[..keep].iter().map(|x| x * x).sum();
        if total > 0.0 {
            discarded += (total - kept) / total;
        }
        let kept_norm = kept.sqrt();
        let inv = if kept_norm > 0.0 { 1.0 / kept_norm } else { 1.0 };
        if kept_norm > 0.0 {
            log += kept_norm.ln();
        }
        let u = dec.u.subcols(0, keep).to_owned();
        sites[k] = site_from_mat(u.as_ref(), l, d, keep);
        let sv = Mat::from_fn(keep, dec.v_adj.ncols(), |i, j| dec.v_adj[(i, j)] * (dec.s[i] * inv));
        let (_, d2, r2) = dims(&sites[k + 1]);
        let next = &sv * right_mat(&sites[k + 1]);
        sites[k + 1] = site_from_mat(next.as_ref(), keep, d2, r2);
    }
    normalize_site(&mut sites[n - 1], &mut log);
    let out = Mps {
        sites,
        log_scale: log,
        canonical: Canonical::Left,
        map: target.map,
    };
    (out, discarded)
}
