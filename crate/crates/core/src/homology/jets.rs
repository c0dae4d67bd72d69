//! Extraction of the four low-jet components of a weight <= 2 polynomial
//! into Fourier-mode-indexed vectors and matrices, and the reassembly of
//! solved jets back into polynomials.

use num_complex::Complex;

use crate::algebra::{Caps, KVec, LatticeConfig, MultiIndex, TfPoly, ZetaComponent};
use crate::error::Result;
use crate::{FxHashMap, Scalar};

/// Symmetric slot matrix of a quadratic form `1/2 <zeta, M zeta>`, entries
/// stored once per unordered pair.
#[derive(Clone, Debug)]
pub struct SlotMat<S: Scalar> {
    entries: FxHashMap<(u16, u16), Complex<S>>,
}

impl<S: Scalar> Default for SlotMat<S> {
    fn default() -> Self {
        SlotMat {
            entries: FxHashMap::default(),
        }
    }
}

impl<S: Scalar> SlotMat<S> {
    pub fn get(&self, s: u16, t: u16) -> Complex<S> {
        let key = if s <= t { (s, t) } else { (t, s) };
        self.entries
            .get(&key)
            .copied()
            .unwrap_or_else(|| Complex::new(S::zero(), S::zero()))
    }

    pub fn add(&mut self, s: u16, t: u16, c: Complex<S>) {
        let key = if s <= t { (s, t) } else { (t, s) };
        let e = self
            .entries
            .entry(key)
            .or_insert_with(|| Complex::new(S::zero(), S::zero()));
        *e = *e + c;
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter_entries(&self) -> impl Iterator<Item = (&(u16, u16), &Complex<S>)> {
        self.entries.iter()
    }

    /// Normal-site index pairs (a <= b) with any nonzero entry.
    pub fn site_pairs(&self, lattice: &LatticeConfig<S>) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = self
            .entries
            .keys()
            .map(|&(s, t)| {
                let (sa, _) = lattice.slot_site(s);
                let (sb, _) = lattice.slot_site(t);
                if sa <= sb {
                    (sa, sb)
                } else {
                    (sb, sa)
                }
            })
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }
}

/// The four weight <= 2 jet components of a polynomial, per Fourier mode.
#[derive(Clone, Debug)]
pub struct LowJets<S: Scalar> {
    pub fphi: FxHashMap<KVec, Complex<S>>,
    /// r-linear coefficients over the tangential set.
    pub f0: FxHashMap<KVec, Vec<Complex<S>>>,
    /// zeta-linear coefficients over the slots.
    pub f1: FxHashMap<KVec, Vec<Complex<S>>>,
    /// Quadratic forms.
    pub f2: FxHashMap<KVec, SlotMat<S>>,
}

impl<S: Scalar> LowJets<S> {
    pub fn extract(poly: &TfPoly<S>) -> Result<Self> {
        let lattice = poly.lattice();
        let n_t = lattice.n_tangential();
        let n_slots = lattice.n_slots();
        let mut jets = LowJets {
            fphi: FxHashMap::default(),
            f0: FxHashMap::default(),
            f1: FxHashMap::default(),
            f2: FxHashMap::default(),
        };
        for (idx, c) in poly.terms() {
            match (idx.alpha_total(), idx.beta_total()) {
                (0, 0) => {
                    let e = jets
                        .fphi
                        .entry(idx.k.clone())
                        .or_insert_with(|| Complex::new(S::zero(), S::zero()));
                    *e = *e + *c;
                }
                (1, 0) => {
                    let a = idx.alpha.iter().position(|&d| d == 1).unwrap();
                    let v = jets
                        .f0
                        .entry(idx.k.clone())
                        .or_insert_with(|| vec![Complex::new(S::zero(), S::zero()); n_t]);
                    v[a] = v[a] + *c;
                }
                (0, 1) => {
                    let slot = idx.beta[0].0 as usize;
                    let v = jets
                        .f1
                        .entry(idx.k.clone())
                        .or_insert_with(|| vec![Complex::new(S::zero(), S::zero()); n_slots]);
                    v[slot] = v[slot] + *c;
                }
                (0, 2) => {
                    let m = jets.f2.entry(idx.k.clone()).or_default();
                    match idx.beta.len() {
                        1 => {
                            // c zeta_s^2 means M_ss = 2c.
                            let s = idx.beta[0].0;
                            m.add(s, s, *c + *c);
                        }
                        _ => {
                            let (s, t) = (idx.beta[0].0, idx.beta[1].0);
                            m.add(s, t, *c);
                        }
                    }
                }
                _ => {
                    return Err(crate::CoreError::Contract(
                        "jet extraction requires a weight <= 2 polynomial".into(),
                    ))
                }
            }
        }
        Ok(jets)
    }

    pub fn sorted_modes<'a, T>(map: &'a FxHashMap<KVec, T>) -> Vec<&'a KVec> {
        let mut keys: Vec<&KVec> = map.keys().collect();
        keys.sort();
        keys
    }
}

/// Reassemble a zeta-linear jet into a polynomial.
pub fn linear_jet_to_poly<S: Scalar>(
    jet: &FxHashMap<KVec, Vec<Complex<S>>>,
    lattice: &std::sync::Arc<LatticeConfig<S>>,
    caps: Caps,
) -> Result<TfPoly<S>> {
    let n_t = lattice.n_tangential();
    let mut p = TfPoly::zero(lattice.clone(), caps);
    let mut keys: Vec<&KVec> = jet.keys().collect();
    keys.sort();
    for k in keys {
        for (slot, c) in jet[k].iter().enumerate() {
            if c.re == S::zero() && c.im == S::zero() {
                continue;
            }
            let mut idx = MultiIndex::zeta(slot as u16, n_t);
            idx.k = k.clone();
            p.insert_checked(idx, *c)?;
        }
    }
    Ok(p)
}

/// Reassemble a quadratic jet `1/2 <zeta, M zeta>` into a polynomial.
pub fn quadratic_jet_to_poly<S: Scalar>(
    jet: &FxHashMap<KVec, SlotMat<S>>,
    lattice: &std::sync::Arc<LatticeConfig<S>>,
    caps: Caps,
) -> Result<TfPoly<S>> {
    let n_t = lattice.n_tangential();
    let half = Complex::new(S::sc(0.5), S::zero());
    let mut p = TfPoly::zero(lattice.clone(), caps);
    let mut keys: Vec<&KVec> = jet.keys().collect();
    keys.sort();
    for k in keys {
        let m = &jet[k];
        let mut entries: Vec<(&(u16, u16), &Complex<S>)> = m.entries.iter().collect();
        entries.sort_by_key(|(key, _)| **key);
        for (&(s, t), &c) in entries {
            if c.re == S::zero() && c.im == S::zero() {
                continue;
            }
            let mut idx = MultiIndex::zeta_pair(s, t, n_t);
            idx.k = k.clone();
            let coeff = if s == t { c * half } else { c };
            p.insert_checked(idx, coeff)?;
        }
    }
    Ok(p)
}

/// Transform a slot vector to complex per-site (u, v) components:
/// `u = (v_xi - i v_eta)/sqrt2`, `v = (v_xi + i v_eta)/sqrt2`.
pub fn slots_to_complex<S: Scalar>(
    v: &[Complex<S>],
    lattice: &LatticeConfig<S>,
) -> (Vec<Complex<S>>, Vec<Complex<S>>) {
    let l = lattice.n_normal();
    let inv_sqrt2 = Complex::new(S::sc(1.0 / std::f64::consts::SQRT_2), S::zero());
    let i = Complex::new(S::zero(), S::one());
    let mut u = Vec::with_capacity(l);
    let mut w = Vec::with_capacity(l);
    for site in 0..l {
        let vx = v[lattice.slot(site, ZetaComponent::Xi) as usize];
        let ve = v[lattice.slot(site, ZetaComponent::Eta) as usize];
        u.push((vx - i * ve) * inv_sqrt2);
        w.push((vx + i * ve) * inv_sqrt2);
    }
    (u, w)
}

/// Inverse of [`slots_to_complex`].
pub fn complex_to_slots<S: Scalar>(
    u: &[Complex<S>],
    w: &[Complex<S>],
    lattice: &LatticeConfig<S>,
) -> Vec<Complex<S>> {
    let l = lattice.n_normal();
    let inv_sqrt2 = Complex::new(S::sc(1.0 / std::f64::consts::SQRT_2), S::zero());
    let i = Complex::new(S::zero(), S::one());
    let mut v = vec![Complex::new(S::zero(), S::zero()); 2 * l];
    for site in 0..l {
        let vx = (u[site] + w[site]) * inv_sqrt2;
        let ve = (u[site] - w[site]) * i * inv_sqrt2;
        v[lattice.slot(site, ZetaComponent::Xi) as usize] = vx;
        v[lattice.slot(site, ZetaComponent::Eta) as usize] = ve;
    }
    v
}
