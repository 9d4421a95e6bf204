//! Matrix views of rank-3 site tensors `[left, phys, right]` and the
//! environment contractions built on them.

use faer::{Mat, MatRef};

use crate::tensor::{mat_from_slice, DenseTensor, C64};

pub(crate) fn dims(site: &DenseTensor) -> (usize, usize, usize) {
    let s = site.shape();
    (s[0], s[1], s[2])
}

/// `(left * phys) x right`.
pub(crate) fn left_mat(site: &DenseTensor) -> Mat<C64> {
    let (l, d, r) = dims(site);
    mat_from_slice(l * d, r, site.data())
}

/// `left x (phys * right)`.
pub(crate) fn right_mat(site: &DenseTensor) -> Mat<C64> {
    let (l, d, r) = dims(site);
    mat_from_slice(l, d * r, site.data())
}

pub(crate) fn site_from_mat(m: MatRef<'_, C64>, l: usize, d: usize, r: usize) -> DenseTensor {
    debug_assert_eq!(m.nrows() * m.ncols(), l * d * r);
    let cols = m.ncols();
    let mut data = Vec::with_capacity(l * d * r);
    for i in 0..m.nrows() {
        for j in 0..cols {
            data.push(m[(i, j)]);
        }
    }
    DenseTensor::from_parts(vec![l, d, r], data)
}

/// Row-major reinterpretation of `m` with a new shape.
pub(crate) fn reshape(m: MatRef<'_, C64>, rows: usize, cols: usize) -> Mat<C64> {
    let old_cols = m.ncols();
    debug_assert_eq!(m.nrows() * old_cols, rows * cols);
    Mat::from_fn(rows, cols, |i, j| {
        let flat = i * cols + j;
        m[(flat / old_cols, flat % old_cols)]
    })
}

pub(crate) fn frobenius(m: MatRef<'_, C64>) -> f64 {
    m.norm_l2()
}

pub(crate) fn scale(m: &mut Mat<C64>, factor: f64) {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            m[(i, j)] *= factor;
        }
    }
}

/// `E'[ra, rb] = Σ_{la, lb, s} conj(A[la, s, ra]) E[la, lb] B[lb, s, rb]`.
pub(crate) fn transfer_left(env: MatRef<'_, C64>, a: &DenseTensor, b: &DenseTensor) -> Mat<C64> {
    let (la, d, _) = dims(a);
    let (_, _, rb) = dims(b);
    let eb = env * right_mat(b);
    let eb = reshape(eb.as_ref(), la * d, rb);
    left_mat(a).adjoint() * eb
}

/// `E'[la, lb] = Σ_{s, ra, rb} conj(A[la, s, ra]) B[lb, s, rb] E[ra, rb]`.
pub(crate) fn transfer_right(env: MatRef<'_, C64>, a: &DenseTensor, b: &DenseTensor) -> Mat<C64> {
    let (_, d, ra) = dims(a);
    let (lb, _, _) = dims(b);
    // X[lb, s, ra] = Σ_rb B[lb, s, rb] E[ra, rb]
    let x = left_mat(b) * env.transpose();
    let x = reshape(x.as_ref(), lb, d * ra);
    let a_right = right_mat(a);
    a_right.conjugate() * x.transpose()
}

/// Local optimum for one site of the fit: `M[a, s, a'] = Σ L[a, b] T[b, s, b'] R[a', b']`.
pub(crate) fn effective_site(left: MatRef<'_, C64>, target: &DenseTensor, right: MatRef<'_, C64>) -> DenseTensor {
    let (_, d, rt) = dims(target);
    let la = left.nrows();
    let ra = right.nrows();
    let lt = left * right_mat(target);
    let lt = reshape(lt.as_ref(), la * d, rt);
    let m = lt * right.transpose();
    site_from_mat(m.as_ref(), la, d, ra)
}

pub(crate) fn adjoint(m: MatRef<'_, C64>) -> Mat<C64> {
    Mat::from_fn(m.ncols(), m.nrows(), |i, j| m[(j, i)].conj())
}
