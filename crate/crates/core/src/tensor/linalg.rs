use faer::{Mat, MatRef};

use super::{DenseTensor, C64};
use crate::error::{Error, Result};

/// Singular values below `RANK_CUTOFF * max(s)` do not count toward the rank.
pub const RANK_CUTOFF: f64 = 1e-14;

pub(crate) fn mat_from_slice(rows: usize, cols: usize, data: &[C64]) -> Mat<C64> {
    debug_assert_eq!(rows * cols, data.len());
    Mat::from_fn(rows, cols, |i, j| data[i * cols + j])
}

/// Thin SVD in faer form: `a = u * diag(s) * v_adj`, `s` nonincreasing.
pub(crate) struct MatSvd {
    pub u: Mat<C64>,
    pub s: Vec<f64>,
    pub v_adj: Mat<C64>,
}

pub(crate) fn svd_mat(a: MatRef<'_, C64>) -> Result<MatSvd> {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Ok(MatSvd {
            u: Mat::zeros(m, 0),
            s: Vec::new(),
            v_adj: Mat::zeros(0, n),
        });
    }
    let dec = a.thin_svd().map_err(|e| Error::Numerical {
        rows: m,
        cols: n,
        reason: format!("{e:?}"),
    })?;
    let diag = dec.S().column_vector();
    let s: Vec<f64> = (0..k).map(|i| diag[i].re).collect();
    let mut order: Vec<usize> = (0..k).collect();
    if s.windows(2).any(|w| w[0] < w[1]) {
        order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    }
    let (u, v) = (dec.U(), dec.V());
    let u_sorted = Mat::from_fn(m, k, |i, j| u[(i, order[j])]);
    let v_adj = Mat::from_fn(k, n, |i, j| v[(j, order[i])].conj());
    let s = order.iter().map(|&i| s[i].max(0.0)).collect();
    Ok(MatSvd { u: u_sorted, s, v_adj })
}

/// Thin QR with the diagonal of `r` made real and nonnegative.
pub(crate) fn qr_mat(a: MatRef<'_, C64>) -> (Mat<C64>, Mat<C64>) {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return (Mat::zeros(m, 0), Mat::zeros(0, n));
    }
    let dec = a.qr();
    let mut q = dec.compute_thin_Q();
    let mut r = dec.thin_R().to_owned();
    for i in 0..k {
        let d = r[(i, i)];
        let mag = d.norm();
        if mag > 0.0 {
            let phase = d / mag;
            for row in 0..m {
                q[(row, i)] *= phase;
            }
            let conj = phase.conj();
            for col in 0..n {
                r[(i, col)] *= conj;
            }
        }
    }
    (q, r)
}

/// Number of singular values to keep.
///
/// The smallest count whose discarded tail weight is at most
/// `eps_cut * sum(s^2)`, capped at `chi_max` and at the numerical rank, never
/// below one.
pub(crate) fn truncation_rank(s: &[f64], chi_max: usize, eps_cut: f64) -> usize {
    if s.is_empty() {
        return 0;
    }
    let smax = s[0];
    let numerical_rank = s.iter().take_while(|&&x| x > RANK_CUTOFF * smax).count();
    let total: f64 = s.iter().map(|x| x * x).sum();
    let budget = eps_cut * total;
    let mut k = s.len();
    let mut tail = 0.0;
    while k > 0 {
        let next = tail + s[k - 1] * s[k - 1];
        if next > budget {
            break;
        }
        tail = next;
        k -= 1;
    }
    k.min(numerical_rank).min(chi_max).max(1)
}

#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DenseTensor,
    pub s: Vec<f64>,
    pub vh: DenseTensor,
}

impl Svd {
    pub fn reconstruct(&self) -> DenseTensor {
        let k = self.s.len();
        let mut us = self.u.clone();
        let cols = us.shape()[1];
        for (i, z) in us.data_mut().iter_mut().enumerate() {
            *z *= self.s[i % cols.max(1)];
        }
        debug_assert_eq!(cols, k);
        us.matmul(&self.vh).expect("factor shapes agree")
    }
}

fn require_matrix(m: &DenseTensor, op: &str) -> Result<()> {
    if m.rank() != 2 {
        return Err(Error::Dimension(format!(
            "{op} needs a rank-2 tensor, got shape {:?}",
            m.shape()
        )));
    }
    Ok(())
}

/// Thin SVD, singular values nonincreasing.
pub fn svd(m: &DenseTensor) -> Result<Svd> {
    require_matrix(m, "svd")?;
    let dec = svd_mat(m.to_mat().as_ref())?;
    Ok(Svd {
        u: DenseTensor::from_mat(dec.u.as_ref()),
        s: dec.s,
        vh: DenseTensor::from_mat(dec.v_adj.as_ref()),
    })
}

#[derive(Clone, Debug)]
pub struct Truncation {
    pub u: DenseTensor,
    pub s: Vec<f64>,
    pub vh: DenseTensor,
    pub discarded_weight: f64,
}

pub fn truncate(svd: Svd, chi_max: usize, eps_cut: f64) -> Truncation {
    let Svd { u, s, vh } = svd;
    let k = truncation_rank(&s, chi_max.max(1), eps_cut.max(0.0));
    let discarded_weight = s[k..].iter().map(|x| x * x).sum();
    let (rows, full) = (u.shape()[0], u.shape()[1]);
    let u_data = (0..rows)
        .flat_map(|i| u.data()[i * full..i * full + k].iter().copied())
        .collect();
    let cols = vh.shape()[1];
    let vh_data = vh.data()[..k * cols].to_vec();
    Truncation {
        u: DenseTensor::from_parts(vec![rows, k], u_data),
        s: s[..k].to_vec(),
        vh: DenseTensor::from_parts(vec![k, cols], vh_data),
        discarded_weight,
    }
}

/// Thin QR: `q` has orthonormal columns, `r` is upper triangular with a real
/// nonnegative diagonal.
pub fn qr(m: &DenseTensor) -> Result<(DenseTensor, DenseTensor)> {
    require_matrix(m, "qr")?;
    let (q, r) = qr_mat(m.to_mat().as_ref());
    Ok((DenseTensor::from_mat(q.as_ref()), DenseTensor::from_mat(r.as_ref())))
}
