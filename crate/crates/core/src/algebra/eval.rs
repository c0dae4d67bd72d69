//! Pointwise evaluation of polynomials and of their Hamiltonian vector
//! fields at real phase-space points.

use num_complex::Complex;

use super::TfPoly;
use crate::Scalar;

/// Value of the Hamiltonian vector field `X_f = (f_r, -f_phi, (f_eta,
/// -f_xi))` at a point: `phi_dot = f_r`, `r_dot = -f_phi`,
/// `zeta_dot = (f_eta, -f_xi)` per normal site.
#[derive(Clone, Debug)]
pub struct VectorFieldValue<S> {
    pub phi_dot: Vec<S>,
    pub r_dot: Vec<S>,
    /// (xi_dot, eta_dot) per normal site.
    pub zeta_dot: Vec<(S, S)>,
}

impl<S: Scalar> TfPoly<S> {
    /// Evaluate at a real point; the result is complex, with a vanishing
    /// imaginary part when the polynomial satisfies the reality pairing.
    pub fn eval(&self, phi: &[S], r: &[S], zeta: &[(S, S)]) -> Complex<S> {
        let lattice = self.lattice();
        let l = lattice.n_normal();
        debug_assert_eq!(phi.len(), lattice.n_tangential());
        debug_assert_eq!(r.len(), lattice.n_tangential());
        debug_assert_eq!(zeta.len(), l);
        let mut acc = Complex::new(S::zero(), S::zero());
        for (idx, c) in self.terms() {
            let mut phase = S::zero();
            for (ka, &ph) in idx.k.iter().zip(phi.iter()) {
                phase += S::sc(*ka as f64) * ph;
            }
            let mut v = Complex::new(phase.cos(), phase.sin()) * *c;
            for (a, &deg) in idx.alpha.iter().enumerate() {
                for _ in 0..deg {
                    v = v * Complex::new(r[a], S::zero());
                }
            }
            for &(slot, deg) in idx.beta.iter() {
                let (site, comp) = lattice.slot_site(slot);
                let val = match comp {
                    super::ZetaComponent::Xi => zeta[site].0,
                    super::ZetaComponent::Eta => zeta[site].1,
                };
                for _ in 0..deg {
                    v = v * Complex::new(val, S::zero());
                }
            }
            acc = acc + v;
        }
        acc
    }

    /// Evaluate the Hamiltonian vector field of `self` at a real point.
    /// Consistent with the bracket: `g_dot = {g, self}` along the flow.
    pub fn eval_vector_field(&self, phi: &[S], r: &[S], zeta: &[(S, S)]) -> VectorFieldValue<S> {
        let lattice = self.lattice();
        let n_t = lattice.n_tangential();
        let l = lattice.n_normal();
        let mut phi_dot = vec![S::zero(); n_t];
        let mut r_dot = vec![S::zero(); n_t];
        let mut grad_xi = vec![S::zero(); l];
        let mut grad_eta = vec![S::zero(); l];
        for (idx, c) in self.terms() {
            let mut phase = S::zero();
            for (ka, &ph) in idx.k.iter().zip(phi.iter()) {
                phase += S::sc(*ka as f64) * ph;
            }
            let base = Complex::new(phase.cos(), phase.sin()) * *c;
            // Factor values per coordinate for cheap single-derivative drops.
            let r_pow: Vec<S> = idx
                .alpha
                .iter()
                .enumerate()
                .map(|(a, &deg)| r[a].powi(deg as i32))
                .collect();
            let z_val = |slot: u16| {
                let (site, comp) = lattice.slot_site(slot);
                match comp {
                    super::ZetaComponent::Xi => zeta[site].0,
                    super::ZetaComponent::Eta => zeta[site].1,
                }
            };
            let z_pow: Vec<S> = idx
                .beta
                .iter()
                .map(|&(slot, deg)| z_val(slot).powi(deg as i32))
                .collect();
            let full_r: S = r_pow.iter().copied().product();
            let full_z: S = z_pow.iter().copied().product();
            // phi-gradient: i k_a * monomial.
            for (a, &ka) in idx.k.iter().enumerate() {
                if ka != 0 {
                    let v = base
                        * Complex::new(S::zero(), S::sc(ka as f64))
                        * Complex::new(full_r * full_z, S::zero());
                    r_dot[a] -= v.re;
                }
            }
            // r-gradient: deg * r^{deg-1} * rest.
            for (a, &deg) in idx.alpha.iter().enumerate() {
                if deg == 0 {
                    continue;
                }
                let rest: S = r_pow
                    .iter()
                    .enumerate()
                    .map(|(b, &v)| if b == a { S::one() } else { v })
                    .product();
                let dv = S::sc(deg as f64) * r[a].powi(deg as i32 - 1);
                let v = base * Complex::new(dv * rest * full_z, S::zero());
                phi_dot[a] += v.re;
            }
            // zeta-gradient.
            for (pos, &(slot, deg)) in idx.beta.iter().enumerate() {
                if deg == 0 {
                    continue;
                }
                let rest: S = z_pow
                    .iter()
                    .enumerate()
                    .map(|(q, &v)| if q == pos { S::one() } else { v })
                    .product();
                let dv = S::sc(deg as f64) * z_val(slot).powi(deg as i32 - 1);
                let v = base * Complex::new(dv * rest * full_r, S::zero());
                let (site, comp) = lattice.slot_site(slot);
                match comp {
                    // xi_dot = f_eta, eta_dot = -f_xi.
                    super::ZetaComponent::Xi => grad_xi[site] += v.re,
                    super::ZetaComponent::Eta => grad_eta[site] += v.re,
                }
            }
        }
        let zeta_dot = grad_xi
            .iter()
            .zip(grad_eta.iter())
            .map(|(&gxi, &geta)| (geta, -gxi))
            .collect();
        VectorFieldValue {
            phi_dot,
            r_dot,
            zeta_dot,
        }
    }
}
