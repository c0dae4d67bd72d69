//! Complex 2x2 blocks of lattice matrices and the projector splitting them
//! into their rotation-like and reflection-like parts.

use num_complex::Complex;

use crate::Scalar;

/// A 2x2 complex matrix, row major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gl2<S: Scalar>(pub [[Complex<S>; 2]; 2]);

impl<S: Scalar> Gl2<S> {
    pub fn zero() -> Self {
        Gl2([[Complex::new(S::zero(), S::zero()); 2]; 2])
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        m.0[0][0] = Complex::new(S::one(), S::zero());
        m.0[1][1] = Complex::new(S::one(), S::zero());
        m
    }

    pub fn from_real(m: [[S; 2]; 2]) -> Self {
        let c = |x: S| Complex::new(x, S::zero());
        Gl2([[c(m[0][0]), c(m[0][1])], [c(m[1][0]), c(m[1][1])]])
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut r = *self;
        for i in 0..2 {
            for j in 0..2 {
                r.0[i][j] = r.0[i][j] + o.0[i][j];
            }
        }
        r
    }

    pub fn sub(&self, o: &Self) -> Self {
        let mut r = *self;
        for i in 0..2 {
            for j in 0..2 {
                r.0[i][j] = r.0[i][j] - o.0[i][j];
            }
        }
        r
    }

    pub fn scale(&self, s: Complex<S>) -> Self {
        let mut r = *self;
        for i in 0..2 {
            for j in 0..2 {
                r.0[i][j] = r.0[i][j] * s;
            }
        }
        r
    }

    pub fn transpose(&self) -> Self {
        Gl2([[self.0[0][0], self.0[1][0]], [self.0[0][1], self.0[1][1]]])
    }

    pub fn is_zero(&self) -> bool {
        self.0
            .iter()
            .flatten()
            .all(|c| c.re == S::zero() && c.im == S::zero())
    }

    pub fn max_abs(&self) -> S {
        self.0
            .iter()
            .flatten()
            .map(|c| c.norm())
            .fold(S::zero(), S::max)
    }

    /// pi A = 1/2 [[a+d, b-c], [c-b, a+d]]; the part commuting with the
    /// symplectic rotation. Idempotent.
    pub fn pi(&self) -> Self {
        let half = Complex::new(S::sc(0.5), S::zero());
        let [[a, b], [c, d]] = self.0;
        let s = (a + d) * half;
        let t = (b - c) * half;
        Gl2([[s, t], [-t, s]])
    }

    pub fn one_minus_pi(&self) -> Self {
        self.sub(&self.pi())
    }

    /// Operator norm (largest singular value) of the matrix.
    pub fn op_norm(&self) -> S {
        // Singular values of a 2x2 from the Gram matrix eigenvalues.
        let [[a, b], [c, d]] = self.0;
        let g11 = a.norm_sqr() + c.norm_sqr();
        let g22 = b.norm_sqr() + d.norm_sqr();
        let g12 = a.conj() * b + c.conj() * d;
        let tr = g11 + g22;
        let half = S::sc(0.5);
        let disc = ((g11 - g22) * (g11 - g22) + S::sc(4.0) * g12.norm_sqr()).max(S::zero());
        ((tr + disc.sqrt()) * half).max(S::zero()).sqrt()
    }

    /// Operator norm of the entrywise absolute-value matrix [A].
    pub fn abs_op_norm(&self) -> S {
        let n = |c: Complex<S>| Complex::new(c.norm(), S::zero());
        let [[a, b], [c, d]] = self.0;
        Gl2([[n(a), n(b)], [n(c), n(d)]]).op_norm()
    }

    /// Entrywise conjugation `C^T A C` with `C = (1/sqrt 2) [[1, 1], [-i, i]]`,
    /// mapping real symplectic blocks to their complex-coordinate form.
    pub fn complexify(&self) -> Self {
        let [[b11, b12], [b21, b22]] = self.0;
        let i = Complex::new(S::zero(), S::one());
        let half = Complex::new(S::sc(0.5), S::zero());
        let uu = (b11 - i * b21 - i * b12 - b22) * half;
        let uv = (b11 - i * b21 + i * b12 + b22) * half;
        let vu = (b11 + i * b21 - i * b12 + b22) * half;
        let vv = (b11 + i * b21 + i * b12 - b22) * half;
        Gl2([[uu, uv], [vu, vv]])
    }

    /// Inverse of [`Self::complexify`]: `(C^T)^{-1} A C^{-1}`.
    pub fn decomplexify(&self) -> Self {
        // C (C^T M C)^... direct inverse of the linear map above.
        let [[uu, uv], [vu, vv]] = self.0;
        let i = Complex::new(S::zero(), S::one());
        let half = Complex::new(S::sc(0.5), S::zero());
        let b11 = (uu + uv + vu + vv) * half;
        let b22 = (-uu + uv + vu - vv) * half;
        let b12 = (i * uu - i * uv + i * vu - i * vv) * half;
        let b21 = (i * uu + i * uv - i * vu - i * vv) * half;
        Gl2([[b11, b12], [b21, b22]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn pi_is_idempotent_and_splits() {
        let a = Gl2([[c(1.0, 0.5), c(2.0, 0.0)], [c(0.0, -1.0), c(3.0, 0.2)]]);
        let p = a.pi();
        let q = a.one_minus_pi();
        assert!(p.pi().sub(&p).max_abs() < 1e-15);
        assert!(p.add(&q).sub(&a).max_abs() < 1e-15);
        // pi kills the [[0,1],[1,0]] pattern
        let sym = Gl2::from_real([[0.0, 1.0], [1.0, 0.0]]);
        assert!(sym.pi().max_abs() < 1e-15);
        assert!(Gl2::<f64>::identity().pi().sub(&Gl2::identity()).max_abs() < 1e-15);
    }

    #[test]
    fn complexify_normal_form_lands_in_uv_corner() {
        // alpha I + beta J maps to [[0, alpha + i beta], [alpha - i beta, 0]]
        let (alpha, beta) = (1.3, -0.7);
        let a = Gl2::from_real([[alpha, beta], [-beta, alpha]]);
        let q = a.complexify();
        assert!(q.0[0][0].norm() < 1e-15);
        assert!(q.0[1][1].norm() < 1e-15);
        assert!((q.0[0][1] - c(alpha, beta)).norm() < 1e-15);
        assert!((q.0[1][0] - c(alpha, -beta)).norm() < 1e-15);
    }

    #[test]
    fn complexify_round_trips() {
        let a = Gl2([[c(1.0, 2.0), c(-0.3, 0.1)], [c(0.4, 0.0), c(0.9, -1.1)]]);
        let back = a.complexify().decomplexify();
        assert!(back.sub(&a).max_abs() < 1e-14);
    }

    #[test]
    fn op_norm_matches_known_values() {
        assert!((Gl2::<f64>::identity().op_norm() - 1.0).abs() < 1e-15);
        let a: Gl2<f64> = Gl2::from_real([[3.0, 0.0], [0.0, -4.0]]);
        assert!((a.op_norm() - 4.0).abs() < 1e-14);
    }
}
