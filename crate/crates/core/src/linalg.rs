//! Dense linear-algebra helpers on top of nalgebra.

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use nalgebra::{Complex, DMatrix, DVector};

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

/// Symmetric eigen-decomposition with ascending eigenvalues.
///
/// The eigenvector matrix is polished by Newton–Schulz steps so that
/// long products of `Q diag Qᵀ` stay unitary to roundoff.
pub fn sym_eigen<T: Real>(m: &DMatrix<T>) -> Result<(DVector<T>, DMatrix<T>)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::InvalidInput("eigen: matrix not square".into()));
    }
    let sym = (m + m.transpose()) * lit::<T>(0.5);
    let eig = sym
        .try_symmetric_eigen(T::default_epsilon(), 10_000)
        .ok_or_else(|| Error::EigenFailure(format!("no convergence for n = {n}")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        // deterministic sign: largest component positive
        let imax = col.iamax();
        if col[imax] < T::zero() {
            col = -col;
        }
        vecs.set_column(c, &col);
    }
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }
    Ok((vals, orthonormalize(vecs)))
}

/// Newton–Schulz polish of a nearly orthogonal matrix.
///
/// The residual QᵀQ − I is accumulated with error-free transformations, so
/// the result is orthogonal to the rounding of its own entries rather than
/// to the roundoff of a plain matrix product.
pub fn orthonormalize<T: Real>(mut q: DMatrix<T>) -> DMatrix<T> {
    let mut last = T::max_value().unwrap();
    for _ in 0..4 {
        let r = gram_residual(&q);
        let dev = r.amax();
        if dev == T::zero() || !(dev < last) {
            break;
        }
        last = dev;
        q -= &q * r * lit::<T>(0.5);
    }
    q
}

/// QᵀQ − I with compensated dot products.
pub fn gram_residual<T: Real>(q: &DMatrix<T>) -> DMatrix<T> {
    let n = q.ncols();
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        let ci = q.column(i);
        for j in i..n {
            let cj = q.column(j);
            let (mut hi, mut lo) = (T::zero(), T::zero());
            for k in 0..q.nrows() {
                let p = ci[k] * cj[k];
                let pe = ci[k].mul_add(cj[k], -p);
                let s = hi + p;
                let z = s - hi;
                lo += (hi - (s - z)) + (p - z) + pe;
                hi = s;
            }
            let v = if i == j { (hi - T::one()) + lo } else { hi + lo };
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// 2-norm condition number via singular values.
pub fn condition_number<T: Real>(m: &DMatrix<T>) -> T {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(T::zero(), |a, b| a.max(b));
    let min = sv.iter().cloned().fold(T::max_value().unwrap(), |a, b| a.min(b));
    if min == T::zero() {
        T::max_value().unwrap()
    } else {
        max / min
    }
}

/// Solves a square real system by LU.
pub fn solve<T: Real>(m: &DMatrix<T>, rhs: &DVector<T>) -> Result<DVector<T>> {
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::InvalidInput("singular linear system".into()))
}

/// Matrix exponential of a complex matrix.
pub fn expm<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    m.clone().exp()
}

pub fn to_complex<T: Real>(m: &DMatrix<T>) -> CMatrix<T> {
    m.map(|x| Complex::new(x, T::zero()))
}

/// Annihilation operator on `n` Fock levels.
pub fn annihilation<T: Real>(n: usize) -> DMatrix<T> {
    let mut a = DMatrix::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = T::usize(k).sqrt();
    }
    a
}

/// Quadrature (a + a†)/√2 on `n` Fock levels.
pub fn quadrature<T: Real>(n: usize) -> DMatrix<T> {
    let a = annihilation::<T>(n);
    (&a + a.transpose()) * lit::<T>(std::f64::consts::FRAC_1_SQRT_2)
}

/// Powers 0..=pmax of the quadrature, computed on `n + pad` levels and
/// truncated to `n`, so that every retained element is exact.
pub fn quadrature_powers<T: Real>(n: usize, pmax: usize) -> Vec<DMatrix<T>> {
    let big = n + pmax + 2;
    let q = quadrature::<T>(big);
    let mut out = Vec::with_capacity(pmax + 1);
    let mut acc = DMatrix::<T>::identity(big, big);
    for _ in 0..=pmax {
        out.push(acc.view((0, 0), (n, n)).into_owned());
        acc = &acc * &q;
    }
    out
}

pub fn cnorm_sqr<T: Real>(v: &CVector<T>) -> T {
    v.iter().fold(T::zero(), |a, z| a + z.norm_sqr())
}

/// ⟨a|b⟩
pub fn cdot<T: Real>(a: &CVector<T>, b: &CVector<T>) -> Complex<T> {
    a.iter()
        .zip(b.iter())
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}
