//! Vector-field norms of Hamiltonians on the working domain.
//!
//! Both norms decompose the polynomial into homogeneous zeta-degree layers.
//! On degrees 0..2 the layer values are computed exactly in the operator
//! sense (weighted l2 sums for degrees 0 and 1, operator norms of the
//! modulus matrix under diagonal site weights for degree 2); degrees >= 3
//! use a monomial-wise majorant. The weighted norm takes the p-weighted
//! zeta component only; the p-tame norm takes the max of the p- and
//! 1-weighted variants, so `vf_weighted_norm <= vf_ptame_norm` holds by
//! construction. Component vectors over the tangential set are majorized by
//! l1 sums, and the Fourier factor by `e^{|k|_1 rho}` (the exact sup over
//! the polystrip).

use num_complex::Complex;

use super::{DomainRadii, MultiIndex, TfPoly};
use crate::linalg::{op_norm, CMat};
use crate::{FxHashMap, Scalar};

fn fourier_weight<S: Scalar>(idx: &MultiIndex, rho: S) -> S {
    (S::sc(idx.k_l1() as f64) * rho).exp()
}

/// Probe-normalized norms of one homogeneous layer.
struct LayerParts<S> {
    fr_1: S,
    fphi_1: S,
    fzeta_p: S,
    fzeta_1: S,
}

impl<S: Scalar> TfPoly<S> {
    /// Majorant of the weighted vector-field norm
    /// `sup(|f_r| + |f_phi|/mu + ||f_zeta||_p / sigma)` over the domain.
    pub fn vf_weighted_norm(&self, d: &DomainRadii<S>) -> S {
        self.layered_norm(d, false)
    }

    /// The p-tame vector-field norm, exact on zeta-degrees <= 2.
    pub fn vf_ptame_norm(&self, d: &DomainRadii<S>) -> S {
        self.layered_norm(d, true)
    }

    fn layered_norm(&self, d: &DomainRadii<S>, tame: bool) -> S {
        let mut layers: FxHashMap<u32, Vec<(&MultiIndex, &Complex<S>)>> = FxHashMap::default();
        for (idx, c) in self.terms() {
            layers.entry(idx.beta_total()).or_default().push((idx, c));
        }
        let mut keys: Vec<u32> = layers.keys().copied().collect();
        keys.sort_unstable();
        let mut total = S::zero();
        for h in keys {
            let parts = self.layer_parts(&layers[&h], h, d);
            let sig_h = d.sigma.powi(h as i32);
            total += (parts.fr_1 + parts.fphi_1 / d.mu) * sig_h;
            if h >= 1 {
                let zeta = if tame {
                    parts.fzeta_p.max(parts.fzeta_1)
                } else {
                    parts.fzeta_p
                };
                total += zeta * d.sigma.powi(h as i32 - 1) / d.sigma;
            }
        }
        total
    }

    fn layer_parts(
        &self,
        terms: &[(&MultiIndex, &Complex<S>)],
        h: u32,
        d: &DomainRadii<S>,
    ) -> LayerParts<S> {
        let lattice = self.lattice();
        let p = lattice.p;
        let n_slots = lattice.n_slots();
        let amp = |idx: &MultiIndex, c: &Complex<S>| {
            c.norm() * fourier_weight(idx, d.rho) * d.mu.powi(idx.alpha_total() as i32)
        };
        let site_w = |slot: u16, q: S| {
            let (site_idx, _) = lattice.slot_site(slot);
            lattice.normal_sites[site_idx].angle_bracket::<S>().powf(q)
        };
        // Modulus of the r-gradient (l1 over tangential components, one mu
        // power dropped) and of the phi-gradient.
        let r_factor = |idx: &MultiIndex| {
            let degs: S = idx.alpha.iter().map(|&a| S::sc(a as f64)).sum();
            degs / d.mu
        };
        let phi_factor = |idx: &MultiIndex| S::sc(idx.k_l1() as f64);

        let scalar_component = |factor: &dyn Fn(&MultiIndex) -> S| -> S {
            match h {
                0 => {
                    let mut s = S::zero();
                    for (idx, c) in terms {
                        s += amp(idx, c) * factor(idx);
                    }
                    s
                }
                1 => {
                    // Dual norm against 1-weighted probes: l2 with 1/<a>.
                    let mut v = vec![S::zero(); n_slots];
                    for (idx, c) in terms {
                        let a = amp(idx, c) * factor(idx);
                        if a > S::zero() {
                            v[idx.beta[0].0 as usize] += a;
                        }
                    }
                    let mut s2 = S::zero();
                    for (slot, val) in v.iter().enumerate() {
                        if *val > S::zero() {
                            let r = *val / site_w(slot as u16, S::one());
                            s2 += r * r;
                        }
                    }
                    s2.sqrt()
                }
                2 => {
                    let m = modulus_matrix(self, terms, d, Some(factor));
                    op_norm(&scale_rows_cols(&m, n_slots, |s| {
                        S::one() / site_w(s, S::one())
                    }))
                }
                _ => {
                    // Probe bound |zeta_t| <= ||zeta||_1 / <t> per factor.
                    let mut s = S::zero();
                    for (idx, c) in terms {
                        let mut gain = S::one();
                        for &(slot, deg) in idx.beta.iter() {
                            gain *= site_w(slot, S::one()).powi(deg as i32).recip();
                        }
                        s += amp(idx, c) * factor(idx) * gain;
                    }
                    s
                }
            }
        };
        let fr_1 = scalar_component(&r_factor);
        let fphi_1 = scalar_component(&phi_factor);

        let zeta_component = |w_out: S| -> S {
            match h {
                0 => S::zero(),
                1 => {
                    let mut v = vec![S::zero(); n_slots];
                    for (idx, c) in terms {
                        v[idx.beta[0].0 as usize] += amp(idx, c);
                    }
                    let mut s2 = S::zero();
                    for (slot, val) in v.iter().enumerate() {
                        if *val > S::zero() {
                            let r = *val * site_w(slot as u16, w_out);
                            s2 += r * r;
                        }
                    }
                    s2.sqrt()
                }
                2 => {
                    let m = modulus_matrix(self, terms, d, None);
                    op_norm(&conjugate_rows_cols(&m, n_slots, |s| site_w(s, w_out)))
                }
                _ => {
                    let mut s = S::zero();
                    for (idx, c) in terms {
                        let mut acc = S::zero();
                        for &(slot, deg) in idx.beta.iter() {
                            // Output site weight, remaining factors bounded
                            // by 1-weighted probes.
                            let mut gain = site_w(slot, w_out);
                            for &(s2, d2) in idx.beta.iter() {
                                let dd = if s2 == slot { d2 - 1 } else { d2 };
                                gain *= site_w(s2, S::one()).powi(dd as i32).recip();
                            }
                            acc += S::sc(deg as f64) * gain;
                        }
                        s += amp(idx, c) * acc;
                    }
                    s
                }
            }
        };
        let fzeta_p = zeta_component(p);
        let fzeta_1 = zeta_component(S::one());
        LayerParts {
            fr_1,
            fphi_1,
            fzeta_p,
            fzeta_1,
        }
    }
}

/// Symmetric modulus matrix of a zeta-degree-2 layer, with the 1/2
/// quadratic-form convention unfolded (M_ss = 2 * coeff of zeta_s^2).
fn modulus_matrix<S: Scalar>(
    poly: &TfPoly<S>,
    terms: &[(&MultiIndex, &Complex<S>)],
    d: &DomainRadii<S>,
    factor: Option<&dyn Fn(&MultiIndex) -> S>,
) -> CMat<S> {
    let n = poly.lattice().n_slots();
    let mut m = CMat::zeros(n, n);
    for (idx, c) in terms {
        let mut a = c.norm() * fourier_weight(idx, d.rho) * d.mu.powi(idx.alpha_total() as i32);
        if let Some(f) = factor {
            a = a * f(idx);
        }
        if a == S::zero() {
            continue;
        }
        let (s, t) = match idx.beta.len() {
            1 => (idx.beta[0].0 as usize, idx.beta[0].0 as usize),
            _ => (idx.beta[0].0 as usize, idx.beta[1].0 as usize),
        };
        let aa = Complex::new(a, S::zero());
        if s == t {
            m[(s, s)] = m[(s, s)] + aa + aa;
        } else {
            m[(s, t)] = m[(s, t)] + aa;
            m[(t, s)] = m[(t, s)] + aa;
        }
    }
    m
}

/// D M D with D = diag(w): norm of a bilinear form against weighted probes.
fn scale_rows_cols<S: Scalar>(m: &CMat<S>, n: usize, w: impl Fn(u16) -> S) -> CMat<S> {
    let mut out = CMat::zeros(n, n);
    for i in 0..n {
        let wi = w(i as u16);
        for j in 0..n {
            let v = m.at(i, j);
            if v.re != S::zero() || v.im != S::zero() {
                out[(i, j)] = v * Complex::new(wi * w(j as u16), S::zero());
            }
        }
    }
    out
}

/// D M D^{-1} with D = diag(w): operator between identically weighted spaces.
fn conjugate_rows_cols<S: Scalar>(m: &CMat<S>, n: usize, w: impl Fn(u16) -> S) -> CMat<S> {
    let mut out = CMat::zeros(n, n);
    for i in 0..n {
        let wi = w(i as u16);
        for j in 0..n {
            let v = m.at(i, j);
            if v.re != S::zero() || v.im != S::zero() {
                out[(i, j)] = v * Complex::new(wi / w(j as u16), S::zero());
            }
        }
    }
    out
}
