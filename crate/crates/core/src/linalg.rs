//! Minimal dense complex linear algebra: just enough for per-block Hermitian
//! eigenproblems and operator-norm estimates. Blocks are tiny at desk scale,
//! so a cyclic Jacobi sweep is both robust and fast.

use num_complex::Complex;

use crate::Scalar;

/// Dense complex matrix, row major.
#[derive(Clone, Debug)]
pub struct CMat<S: Scalar> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<Complex<S>>,
}

impl<S: Scalar> CMat<S> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        CMat {
            n_rows,
            n_cols,
            data: vec![Complex::new(S::zero(), S::zero()); n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(S::one(), S::zero());
        }
        m
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex<S> {
        self.data[i * self.n_cols + j]
    }

    /// `A^dagger B`.
    pub fn adjoint_mul(&self, rhs: &CMat<S>) -> CMat<S> {
        assert_eq!(self.n_rows, rhs.n_rows);
        let mut out = CMat::zeros(self.n_cols, rhs.n_cols);
        for k in 0..self.n_rows {
            for i in 0..self.n_cols {
                let a = self.at(k, i).conj();
                if a.norm_sqr() == S::zero() {
                    continue;
                }
                for j in 0..rhs.n_cols {
                    out[(i, j)] = out[(i, j)] + a * rhs.at(k, j);
                }
            }
        }
        out
    }

    /// `A B`.
    pub fn mul(&self, rhs: &CMat<S>) -> CMat<S> {
        assert_eq!(self.n_cols, rhs.n_rows);
        let mut out = CMat::zeros(self.n_rows, rhs.n_cols);
        for i in 0..self.n_rows {
            for k in 0..self.n_cols {
                let a = self.at(i, k);
                if a.norm_sqr() == S::zero() {
                    continue;
                }
                for j in 0..rhs.n_cols {
                    out[(i, j)] = out[(i, j)] + a * rhs.at(k, j);
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().map(|c| c.norm()).fold(S::zero(), S::max)
    }
}

impl<S: Scalar> std::ops::Index<(usize, usize)> for CMat<S> {
    type Output = Complex<S>;
    fn index(&self, (i, j): (usize, usize)) -> &Complex<S> {
        &self.data[i * self.n_cols + j]
    }
}

impl<S: Scalar> std::ops::IndexMut<(usize, usize)> for CMat<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<S> {
        &mut self.data[i * self.n_cols + j]
    }
}

/// Eigen-decomposition `M = U diag(d) U^dagger` of a Hermitian matrix by
/// cyclic Jacobi rotations. Eigenvalues ascending, `U` columns aligned.
pub fn hermitian_eigen<S: Scalar>(m: &CMat<S>) -> (Vec<S>, CMat<S>) {
    let n = m.n_rows;
    assert_eq!(n, m.n_cols);
    let mut a = m.clone();
    let mut u = CMat::identity(n);
    if n == 0 {
        return (Vec::new(), u);
    }
    let scale = a.max_abs().max(S::one());
    let tol = scale * S::sc(1e-14) * S::sc(1e-2);
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut off = S::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a.at(p, q).norm());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.at(p, q);
                let napq = apq.norm();
                if napq <= tol * S::sc(1e-2) {
                    continue;
                }
                let app = a.at(p, p).re;
                let aqq = a.at(q, q).re;
                // Complex Jacobi rotation annihilating a_pq.
                let theta = (aqq - app) / (S::sc(2.0) * napq);
                let t = {
                    let s = if theta >= S::zero() { S::one() } else { -S::one() };
                    s / (theta.abs() + (S::one() + theta * theta).sqrt())
                };
                let c = S::one() / (S::one() + t * t).sqrt();
                let s = t * c;
                let phase = apq / Complex::new(napq, S::zero());
                let cs = Complex::new(c, S::zero());
                let ss = phase * Complex::new(s, S::zero());
                // Columns p and q of A and U: right-multiply by the rotation,
                // left-multiply A by its adjoint.
                for i in 0..n {
                    let aip = a.at(i, p);
                    let aiq = a.at(i, q);
                    a[(i, p)] = aip * cs - aiq * ss.conj();
                    a[(i, q)] = aip * ss + aiq * cs;
                }
                for j in 0..n {
                    let apj = a.at(p, j);
                    let aqj = a.at(q, j);
                    a[(p, j)] = apj * cs - aqj * ss;
                    a[(q, j)] = apj * ss.conj() + aqj * cs;
                }
                for i in 0..n {
                    let uip = u.at(i, p);
                    let uiq = u.at(i, q);
                    u[(i, p)] = uip * cs - uiq * ss.conj();
                    u[(i, q)] = uip * ss + uiq * cs;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let evals: Vec<S> = (0..n).map(|i| a.at(i, i).re).collect();
    order.sort_by(|&i, &j| evals[i].partial_cmp(&evals[j]).unwrap());
    let sorted: Vec<S> = order.iter().map(|&i| evals[i]).collect();
    let mut usort = CMat::zeros(n, n);
    for (newj, &oldj) in order.iter().enumerate() {
        for i in 0..n {
            usort[(i, newj)] = u.at(i, oldj);
        }
    }
    (sorted, usort)
}

/// Operator norm of a dense matrix by power iteration on `A^dagger A`.
/// Deterministic start vector; adequate for norm reporting.
pub fn op_norm<S: Scalar>(m: &CMat<S>) -> S {
    if m.n_rows == 0 || m.n_cols == 0 {
        return S::zero();
    }
    let mut v = vec![Complex::new(S::one(), S::zero()); m.n_cols];
    let mut lam = S::zero();
    for _ in 0..300 {
        // w = A v, v' = A^dagger w
        let mut w = vec![Complex::new(S::zero(), S::zero()); m.n_rows];
        for i in 0..m.n_rows {
            let mut acc = Complex::new(S::zero(), S::zero());
            for j in 0..m.n_cols {
                acc = acc + m.at(i, j) * v[j];
            }
            w[i] = acc;
        }
        let mut vn = vec![Complex::new(S::zero(), S::zero()); m.n_cols];
        for i in 0..m.n_rows {
            let wi = w[i];
            if wi.norm_sqr() == S::zero() {
                continue;
            }
            for j in 0..m.n_cols {
                vn[j] = vn[j] + m.at(i, j).conj() * wi;
            }
        }
        let norm = vn.iter().map(|c| c.norm_sqr()).sum::<S>().sqrt();
        if norm == S::zero() {
            return S::zero();
        }
        let new_lam = norm.sqrt();
        let rel = (new_lam - lam).abs() / new_lam.max(S::sc(1e-300));
        lam = new_lam;
        let inv = Complex::new(S::one() / norm, S::zero());
        for c in vn.iter_mut() {
            *c = *c * inv;
        }
        v = vn;
        if rel < S::sc(1e-13) {
            break;
        }
    }
    lam
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonalizes_hermitian() {
        let n = 6;
        let mut m = CMat::<f64>::zeros(n, n);
        // Deterministic Hermitian fill.
        for i in 0..n {
            for j in i..n {
                let re = ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4;
                let im = if i == j { 0.0 } else { ((i + 2 * j) % 5) as f64 / 5.0 - 0.3 };
                m[(i, j)] = Complex::new(re, im);
                m[(j, i)] = Complex::new(re, -im);
            }
        }
        let (evals, u) = hermitian_eigen(&m);
        // Residual M U - U D
        let mu = m.mul(&u);
        let mut err: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                let d = mu.at(i, j) - u.at(i, j) * Complex::new(evals[j], 0.0);
                err = err.max(d.norm());
            }
        }
        assert!(err < 1e-12, "residual {err}");
        // Orthonormality
        let g = u.adjoint_mul(&u);
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g.at(i, j) - Complex::new(want, 0.0)).norm() < 1e-12);
            }
        }
        for w in evals.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn op_norm_of_diagonal() {
        let mut m = CMat::<f64>::zeros(3, 3);
        m[(0, 0)] = Complex::new(2.0, 0.0);
        m[(1, 1)] = Complex::new(-5.0, 0.0);
        m[(2, 2)] = Complex::new(1.0, 0.0);
        assert!((op_norm(&m) - 5.0).abs() < 1e-9);
    }
}
