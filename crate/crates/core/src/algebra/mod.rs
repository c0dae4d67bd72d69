//! Sparse truncated Taylor–Fourier polynomials over the phase-space
//! coordinates (phi, r, zeta) with Poisson bracket, weight grading,
//! truncation operators and vector-field norms.
//!
//! A polynomial is a sparse map from multi-indices `(k, alpha, beta)` to
//! complex coefficients: `k` the Fourier index over the tangential set A,
//! `alpha` the `r`-degrees over A, `beta` the degrees over the doubled
//! normal lattice (xi-copy followed by eta-copy). The weight of a monomial
//! is `2|alpha| + |beta|`; "low" means weight <= 2.
//!
//! Reality convention: a polynomial is real on real phase space iff
//! `coeff(-k, alpha, beta) = conj(coeff(k, alpha, beta))`.

mod eval;
mod norms;
mod text;

pub use eval::VectorFieldValue;

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use smallvec::SmallVec;

use crate::error::Result;
use crate::gl2::Gl2;
use crate::{CoreError, FxHashMap, Scalar};

/// A lattice site in Z^d, `d <= 4`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Site(pub SmallVec<[i16; 4]>);

impl Site {
    pub fn new(coords: &[i16]) -> Self {
        Site(SmallVec::from_slice(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Squared Euclidean norm |a|^2, exact in integers.
    pub fn norm2(&self) -> i64 {
        self.0.iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    pub fn sup_norm(&self) -> i16 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn dist2(&self, other: &Site) -> i64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(&a, &b)| {
                let d = a as i64 - b as i64;
                d * d
            })
            .sum()
    }

    /// |a + b|^2, used by the reflection-type truncation.
    pub fn sum_norm2(&self, other: &Site) -> i64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(&a, &b)| {
                let s = a as i64 + b as i64;
                s * s
            })
            .sum()
    }

    /// The weight <a> = max(|a|, 1).
    pub fn angle_bracket<S: Scalar>(&self) -> S {
        S::sc((self.norm2() as f64).sqrt().max(1.0))
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Which member of the doubled coordinate pair a slot refers to.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ZetaComponent {
    Xi,
    Eta,
}

/// The finite lattice: tangential set A and the normal box sites.
#[derive(Debug)]
pub struct LatticeConfig<S: Scalar> {
    pub dim: usize,
    /// Sobolev exponent, p > d/2.
    pub p: S,
    pub box_radius: i16,
    /// Tangential sites, in the order given at construction.
    pub tangential_sites: Vec<Site>,
    /// Normal sites, lexicographically sorted.
    pub normal_sites: Vec<Site>,
    tangential_index: FxHashMap<Site, usize>,
    normal_index: FxHashMap<Site, usize>,
}

impl<S: Scalar> PartialEq for LatticeConfig<S> {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.box_radius == other.box_radius
            && self.tangential_sites == other.tangential_sites
            && self.normal_sites == other.normal_sites
    }
}

impl<S: Scalar> LatticeConfig<S> {
    pub fn new(dim: usize, p: S, box_radius: i16, tangential: Vec<Site>) -> Result<Arc<Self>> {
        if tangential.is_empty() {
            return Err(CoreError::Config("tangential set must be nonempty".into()));
        }
        if dim == 0 || dim > 4 {
            return Err(CoreError::Config(format!("unsupported dimension {dim}")));
        }
        if p.to_f64_lossy() <= dim as f64 / 2.0 {
            return Err(CoreError::Config(format!(
                "Sobolev exponent p={p} must exceed d/2={}",
                dim as f64 / 2.0
            )));
        }
        let mut tangential_index = FxHashMap::default();
        for (i, s) in tangential.iter().enumerate() {
            if s.dim() != dim {
                return Err(CoreError::Config(format!("site {s} has wrong dimension")));
            }
            if tangential_index.insert(s.clone(), i).is_some() {
                return Err(CoreError::Config(format!("duplicate tangential site {s}")));
            }
        }
        let mut normal_sites = Vec::new();
        let mut cursor: Vec<i16> = vec![-box_radius; dim];
        'outer: loop {
            let site = Site(cursor.iter().copied().collect());
            if !tangential_index.contains_key(&site) {
                normal_sites.push(site);
            }
            for axis in (0..dim).rev() {
                if cursor[axis] < box_radius {
                    cursor[axis] += 1;
                    continue 'outer;
                }
                cursor[axis] = -box_radius;
            }
            break;
        }
        normal_sites.sort();
        let normal_index = normal_sites
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(Arc::new(LatticeConfig {
            dim,
            p,
            box_radius,
            tangential_sites: tangential,
            normal_sites,
            tangential_index,
            normal_index,
        }))
    }

    pub fn n_tangential(&self) -> usize {
        self.tangential_sites.len()
    }

    pub fn n_normal(&self) -> usize {
        self.normal_sites.len()
    }

    /// Number of zeta slots (xi-copy then eta-copy of the normal sites).
    pub fn n_slots(&self) -> usize {
        2 * self.normal_sites.len()
    }

    pub fn tangential_index_of(&self, s: &Site) -> Option<usize> {
        self.tangential_index.get(s).copied()
    }

    pub fn normal_index_of(&self, s: &Site) -> Option<usize> {
        self.normal_index.get(s).copied()
    }

    pub fn slot(&self, normal_idx: usize, comp: ZetaComponent) -> u16 {
        match comp {
            ZetaComponent::Xi => normal_idx as u16,
            ZetaComponent::Eta => (self.n_normal() + normal_idx) as u16,
        }
    }

    pub fn slot_site(&self, slot: u16) -> (usize, ZetaComponent) {
        let l = self.n_normal();
        let s = slot as usize;
        if s < l {
            (s, ZetaComponent::Xi)
        } else {
            (s - l, ZetaComponent::Eta)
        }
    }

    /// All sites of the model, tangential first.
    pub fn all_sites(&self) -> impl Iterator<Item = &Site> {
        self.tangential_sites.iter().chain(self.normal_sites.iter())
    }
}

/// Storage caps of a polynomial: sup-norm Fourier cap, total r-degree,
/// total zeta-degree.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Caps {
    pub k_max: u16,
    pub deg_r: u8,
    pub deg_z: u8,
}

impl Caps {
    pub fn new(k_max: u16, deg_r: u8, deg_z: u8) -> Self {
        Caps { k_max, deg_r, deg_z }
    }

    pub fn doubled(self) -> Self {
        Caps {
            k_max: self.k_max * 2,
            deg_r: self.deg_r.saturating_mul(2),
            deg_z: self.deg_z.saturating_mul(2),
        }
    }

    pub fn admits(&self, idx: &MultiIndex) -> bool {
        idx.k.iter().all(|k| k.unsigned_abs() <= self.k_max)
            && idx.alpha_total() <= self.deg_r as u32
            && idx.beta_total() <= self.deg_z as u32
    }
}

pub type KVec = SmallVec<[i16; 4]>;

/// Monomial index: Fourier vector over A, r-degrees over A, sparse sorted
/// zeta-degrees over the doubled normal lattice.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct MultiIndex {
    pub k: KVec,
    pub alpha: SmallVec<[u8; 4]>,
    pub beta: SmallVec<[(u16, u8); 6]>,
}

impl MultiIndex {
    pub fn constant(n_tangential: usize) -> Self {
        MultiIndex {
            k: smallvec::smallvec![0; n_tangential],
            alpha: smallvec::smallvec![0; n_tangential],
            beta: SmallVec::new(),
        }
    }

    pub fn fourier(k: KVec, n_tangential: usize) -> Self {
        debug_assert_eq!(k.len(), n_tangential);
        MultiIndex {
            k,
            alpha: smallvec::smallvec![0; n_tangential],
            beta: SmallVec::new(),
        }
    }

    pub fn action(a_idx: usize, n_tangential: usize) -> Self {
        let mut m = Self::constant(n_tangential);
        m.alpha[a_idx] = 1;
        m
    }

    pub fn zeta(slot: u16, n_tangential: usize) -> Self {
        let mut m = Self::constant(n_tangential);
        m.beta.push((slot, 1));
        m
    }

    pub fn zeta_pair(s: u16, t: u16, n_tangential: usize) -> Self {
        let mut m = Self::constant(n_tangential);
        if s == t {
            m.beta.push((s, 2));
        } else {
            let (lo, hi) = if s < t { (s, t) } else { (t, s) };
            m.beta.push((lo, 1));
            m.beta.push((hi, 1));
        }
        m
    }

    pub fn alpha_total(&self) -> u32 {
        self.alpha.iter().map(|&a| a as u32).sum()
    }

    pub fn beta_total(&self) -> u32 {
        self.beta.iter().map(|&(_, d)| d as u32).sum()
    }

    /// The grading 2|alpha| + |beta|.
    pub fn weight(&self) -> u32 {
        2 * self.alpha_total() + self.beta_total()
    }

    pub fn k_sup(&self) -> u16 {
        self.k.iter().map(|k| k.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn k_norm2(&self) -> i64 {
        self.k.iter().map(|&k| (k as i64) * (k as i64)).sum()
    }

    pub fn k_l1(&self) -> u32 {
        self.k.iter().map(|k| k.unsigned_abs() as u32).sum()
    }

    pub fn negate_k(&self) -> Self {
        let mut m = self.clone();
        for k in m.k.iter_mut() {
            *k = -*k;
        }
        m
    }

    pub fn beta_degree(&self, slot: u16) -> u8 {
        self.beta
            .iter()
            .find(|&&(s, _)| s == slot)
            .map(|&(_, d)| d)
            .unwrap_or(0)
    }

    fn product(&self, other: &Self) -> Self {
        let k = self
            .k
            .iter()
            .zip(other.k.iter())
            .map(|(&a, &b)| a + b)
            .collect();
        let alpha = self
            .alpha
            .iter()
            .zip(other.alpha.iter())
            .map(|(&a, &b)| a + b)
            .collect();
        let mut beta: SmallVec<[(u16, u8); 6]> = SmallVec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.beta.len() || j < other.beta.len() {
            let take_left = j >= other.beta.len()
                || (i < self.beta.len() && self.beta[i].0 <= other.beta[j].0);
            if take_left {
                let (s, d) = self.beta[i];
                if j < other.beta.len() && other.beta[j].0 == s {
                    beta.push((s, d + other.beta[j].1));
                    j += 1;
                } else {
                    beta.push((s, d));
                }
                i += 1;
            } else {
                beta.push(other.beta[j]);
                j += 1;
            }
        }
        MultiIndex { k, alpha, beta }
    }

    /// Decrement the r-degree at tangential slot `a` (degree must be >= 1).
    fn lower_alpha(&self, a: usize) -> Self {
        let mut m = self.clone();
        m.alpha[a] -= 1;
        m
    }

    /// Decrement the zeta-degree at `slot` (degree must be >= 1).
    fn lower_beta(&self, slot: u16) -> Self {
        let mut m = self.clone();
        let pos = m.beta.iter().position(|&(s, _)| s == slot).unwrap();
        if m.beta[pos].1 == 1 {
            m.beta.remove(pos);
        } else {
            m.beta[pos].1 -= 1;
        }
        m
    }
}

/// Analyticity radii of the working domain: angle strip, action radius,
/// normal radius, lattice exponential weight.
#[derive(Clone, Copy, Debug)]
pub struct DomainRadii<S: Scalar> {
    pub rho: S,
    pub mu: S,
    pub sigma: S,
    pub gamma: S,
}

impl<S: Scalar> DomainRadii<S> {
    pub fn new(rho: S, mu: S, sigma: S, gamma: S) -> Result<Self> {
        for (name, v) in [("rho", rho), ("mu", mu), ("sigma", sigma)] {
            if v <= S::zero() || v >= S::one() {
                return Err(CoreError::Config(format!(
                    "domain radius {name}={v} must lie in (0,1)"
                )));
            }
        }
        if gamma < S::zero() {
            return Err(CoreError::Config("gamma must be nonnegative".into()));
        }
        Ok(DomainRadii { rho, mu, sigma, gamma })
    }

    /// The convention rho = sigma, mu = sigma^2.
    pub fn sigma_convention(sigma: S, gamma: S) -> Result<Self> {
        Self::new(sigma, sigma * sigma, sigma, gamma)
    }
}

/// Mass dropped by a truncating operation, as an l1 sum of coefficient
/// magnitudes.
#[derive(Clone, Copy, Debug, Default)]
pub struct DroppedMass<S> {
    pub by_caps: S,
    pub by_prune: S,
}

/// Sparse truncated Taylor–Fourier polynomial. Immutable by convention:
/// operations return fresh values.
#[derive(Clone, Debug)]
pub struct TfPoly<S: Scalar> {
    lattice: Arc<LatticeConfig<S>>,
    caps: Caps,
    coeffs: FxHashMap<MultiIndex, Complex<S>>,
}

impl<S: Scalar> TfPoly<S> {
    pub fn zero(lattice: Arc<LatticeConfig<S>>, caps: Caps) -> Self {
        TfPoly {
            lattice,
            caps,
            coeffs: FxHashMap::default(),
        }
    }

    pub fn constant(lattice: Arc<LatticeConfig<S>>, caps: Caps, c: Complex<S>) -> Self {
        let mut p = Self::zero(lattice, caps);
        let n = p.lattice.n_tangential();
        p.accumulate(MultiIndex::constant(n), c);
        p
    }

    pub fn lattice(&self) -> &Arc<LatticeConfig<S>> {
        &self.lattice
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn n_terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, idx: &MultiIndex) -> Complex<S> {
        self.coeffs
            .get(idx)
            .copied()
            .unwrap_or_else(|| Complex::new(S::zero(), S::zero()))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Complex<S>)> {
        self.coeffs.iter()
    }

    /// Terms in canonical (lexicographic) order; use for any output.
    pub fn sorted_terms(&self) -> Vec<(&MultiIndex, &Complex<S>)> {
        let mut v: Vec<_> = self.coeffs.iter().collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }

    /// Merge a term in, keeping the no-zero-coefficients invariant.
    /// The index must already satisfy the caps.
    pub fn accumulate(&mut self, idx: MultiIndex, c: Complex<S>) {
        debug_assert!(self.caps.admits(&idx), "index outside caps: {idx:?}");
        if c.re == S::zero() && c.im == S::zero() {
            return;
        }
        use std::collections::hash_map::Entry;
        match self.coeffs.entry(idx) {
            Entry::Occupied(mut e) => {
                let v = *e.get() + c;
                if v.re == S::zero() && v.im == S::zero() {
                    e.remove();
                } else {
                    *e.get_mut() = v;
                }
            }
            Entry::Vacant(e) => {
                e.insert(c);
            }
        }
    }

    /// Insert a term, erroring when the index exceeds the caps.
    pub fn insert_checked(&mut self, idx: MultiIndex, c: Complex<S>) -> Result<()> {
        if !self.caps.admits(&idx) {
            return Err(CoreError::Contract(format!(
                "index {idx:?} exceeds caps {:?}",
                self.caps
            )));
        }
        self.accumulate(idx, c);
        Ok(())
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if !Arc::ptr_eq(&self.lattice, &other.lattice) && *self.lattice != *other.lattice {
            return Err(CoreError::Config("mismatched lattice configurations".into()));
        }
        if self.caps != other.caps {
            return Err(CoreError::Config(format!(
                "mismatched caps {:?} vs {:?}",
                self.caps, other.caps
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (idx, c) in other.coeffs.iter() {
            out.accumulate(idx.clone(), *c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (idx, c) in other.coeffs.iter() {
            out.accumulate(idx.clone(), -*c);
        }
        Ok(out)
    }

    pub fn scale(&self, s: Complex<S>) -> Self {
        let mut out = Self::zero(self.lattice.clone(), self.caps);
        if s.re == S::zero() && s.im == S::zero() {
            return out;
        }
        for (idx, c) in self.coeffs.iter() {
            out.accumulate(idx.clone(), *c * s);
        }
        out
    }

    pub fn scale_real(&self, s: S) -> Self {
        self.scale(Complex::new(s, S::zero()))
    }

    pub fn neg(&self) -> Self {
        self.scale_real(-S::one())
    }

    /// Product, truncated back to the caps. Dropped l1 mass is reported.
    pub fn mul_diag(&self, other: &Self) -> Result<(Self, S)> {
        self.check_compatible(other)?;
        let mut out = Self::zero(self.lattice.clone(), self.caps);
        let mut dropped = S::zero();
        for (i1, c1) in self.coeffs.iter() {
            for (i2, c2) in other.coeffs.iter() {
                let idx = i1.product(i2);
                let c = *c1 * *c2;
                if self.caps.admits(&idx) {
                    out.accumulate(idx, c);
                } else {
                    dropped += c.norm();
                }
            }
        }
        Ok((out, dropped))
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        Ok(self.mul_diag(other)?.0)
    }

    /// Poisson bracket {f, g} under the convention
    /// `{f,g} = <f_phi, g_r> - <f_r, g_phi> + <f_xi, g_eta> - <f_eta, g_xi>`,
    /// so that `g_dot = {g, s}` along the flow of X_s = (s_r, -s_phi,
    /// (s_eta, -s_xi)). Results outside the caps are dropped silently and
    /// accounted in the returned diagnostic.
    pub fn poisson_bracket_diag(
        &self,
        other: &Self,
        prune_below: S,
    ) -> Result<(Self, DroppedMass<S>)> {
        self.check_compatible(other)?;
        if std::ptr::eq(self, other) {
            // {f, f} = 0: the integer derivative factors of the (m1, m2)
            // and (m2, m1) pair cancel before any rounding.
            return Ok((
                Self::zero(self.lattice.clone(), self.caps),
                DroppedMass {
                    by_caps: S::zero(),
                    by_prune: S::zero(),
                },
            ));
        }
        let n_t = self.lattice.n_tangential();
        let l = self.lattice.n_normal() as u16;
        let mut out = Self::zero(self.lattice.clone(), self.caps);
        let mut dropped = DroppedMass {
            by_caps: S::zero(),
            by_prune: S::zero(),
        };
        let i_unit = Complex::new(S::zero(), S::one());
        let push = |out: &mut Self, idx: MultiIndex, c: Complex<S>, dropped: &mut DroppedMass<S>| {
            if !out.caps.admits(&idx) {
                dropped.by_caps += c.norm();
            } else {
                out.accumulate(idx, c);
            }
        };
        for (i1, c1) in self.coeffs.iter() {
            for (i2, c2) in other.coeffs.iter() {
                let c12 = *c1 * *c2;
                // phi-r terms: i (k1_a alpha2_a - alpha1_a k2_a) at
                // (k1+k2, alpha1+alpha2-e_a, beta1+beta2).
                for a in 0..n_t {
                    let k1a = i1.k[a] as i64;
                    let k2a = i2.k[a] as i64;
                    let al1 = i1.alpha[a] as i64;
                    let al2 = i2.alpha[a] as i64;
                    let factor = k1a * al2 - al1 * k2a;
                    if factor == 0 {
                        continue;
                    }
                    let base = i1.product(i2).lower_alpha(a);
                    let c = c12 * i_unit * Complex::new(S::sc(factor as f64), S::zero());
                    push(&mut out, base, c, &mut dropped);
                }
                // zeta terms: per normal site s,
                // beta1_xi beta2_eta - beta1_eta beta2_xi.
                for &(slot1, d1) in i1.beta.iter() {
                    let (partner, sign) = if slot1 < l {
                        (slot1 + l, S::one())
                    } else {
                        (slot1 - l, -S::one())
                    };
                    let d2 = i2.beta_degree(partner);
                    if d2 == 0 {
                        continue;
                    }
                    let factor = S::sc(d1 as f64 * d2 as f64) * sign;
                    let base = i1.product(i2).lower_beta(slot1).lower_beta(partner);
                    push(
                        &mut out,
                        base,
                        c12 * Complex::new(factor, S::zero()),
                        &mut dropped,
                    );
                }
            }
        }
        if prune_below > S::zero() {
            let keys: Vec<MultiIndex> = out
                .coeffs
                .iter()
                .filter(|(_, c)| c.norm() < prune_below)
                .map(|(k, _)| k.clone())
                .collect();
            for k in keys {
                if let Some(c) = out.coeffs.remove(&k) {
                    dropped.by_prune += c.norm();
                }
            }
        }
        Ok((out, dropped))
    }

    pub fn poisson_bracket(&self, other: &Self) -> Result<Self> {
        Ok(self.poisson_bracket_diag(other, S::zero())?.0)
    }

    /// Exact direct-sum split into the weight <= 2 jet and the rest.
    pub fn split_low_high(&self) -> (Self, Self) {
        let mut low = Self::zero(self.lattice.clone(), self.caps);
        let mut high = Self::zero(self.lattice.clone(), self.caps);
        for (idx, c) in self.coeffs.iter() {
            if idx.weight() <= 2 {
                low.coeffs.insert(idx.clone(), *c);
            } else {
                high.coeffs.insert(idx.clone(), *c);
            }
        }
        (low, high)
    }

    pub fn low_part(&self) -> Self {
        self.split_low_high().0
    }

    /// Truncation of a weight <= 2 jet: Fourier modes kept for |k|_2 <= cutoff
    /// in all four components, and the reflection/rotation matrix truncation
    /// applied to the quadratic part entrywise.
    pub fn truncate_low_jet(&self, cutoff: S) -> Result<Self> {
        if self.coeffs.keys().any(|idx| idx.weight() > 2) {
            return Err(CoreError::Contract(
                "truncate_low_jet requires a weight <= 2 jet".into(),
            ));
        }
        let cut2 = cutoff * cutoff;
        let mut out = Self::zero(self.lattice.clone(), self.caps);
        // Quadratic part: gather 2x2 site-pair blocks per Fourier mode.
        #[allow(clippy::type_complexity)]
        let mut blocks: FxHashMap<(KVec, usize, usize), Gl2<S>> = FxHashMap::default();
        for (idx, c) in self.coeffs.iter() {
            if S::sc(idx.k_norm2() as f64) > cut2 {
                continue;
            }
            if idx.beta_total() != 2 {
                out.coeffs.insert(idx.clone(), *c);
                continue;
            }
            let (sa, sb) = match idx.beta.len() {
                1 => (idx.beta[0].0, idx.beta[0].0),
                _ => (idx.beta[0].0, idx.beta[1].0),
            };
            let (site_a, comp_a) = self.lattice.slot_site(sa);
            let (site_b, comp_b) = self.lattice.slot_site(sb);
            // Matrix entry convention: f^2 = 1/2 <zeta, M zeta>, so the
            // monomial coefficient is M_st off-diagonal and M_ss / 2 on the
            // diagonal slot.
            let (lo, hi, ci, cj) = if (site_a, comp_a as usize) <= (site_b, comp_b as usize) {
                (site_a, site_b, comp_a, comp_b)
            } else {
                (site_b, site_a, comp_b, comp_a)
            };
            let entry = blocks
                .entry((idx.k.clone(), lo, hi))
                .or_insert_with(Gl2::zero);
            let (i, j) = (ci as usize, cj as usize);
            if lo == hi {
                if i == j {
                    let two = Complex::new(S::sc(2.0), S::zero());
                    entry.0[i][j] = entry.0[i][j] + *c * two;
                } else {
                    // One monomial carries both symmetric entries.
                    entry.0[i][j] = entry.0[i][j] + *c;
                    entry.0[j][i] = entry.0[j][i] + *c;
                }
            } else {
                entry.0[i][j] = entry.0[i][j] + *c;
            }
        }
        let n_t = self.lattice.n_tangential();
        for ((k, a_idx, b_idx), block) in blocks.into_iter() {
            let a = &self.lattice.normal_sites[a_idx];
            let b = &self.lattice.normal_sites[b_idx];
            let keep_pi = S::sc(a.dist2(b) as f64) <= cut2;
            let keep_refl = S::sc(a.sum_norm2(b) as f64) <= cut2;
            let mut kept = Gl2::zero();
            if keep_pi {
                kept = kept.add(&block.pi());
            }
            if keep_refl {
                kept = kept.add(&block.one_minus_pi());
            }
            if kept.is_zero() {
                continue;
            }
            let half = Complex::new(S::sc(0.5), S::zero());
            for i in 0..2 {
                for j in 0..2 {
                    let v = kept.0[i][j];
                    if v.re == S::zero() && v.im == S::zero() {
                        continue;
                    }
                    let sa = self.lattice.slot(
                        a_idx,
                        if i == 0 { ZetaComponent::Xi } else { ZetaComponent::Eta },
                    );
                    let sb = self.lattice.slot(
                        b_idx,
                        if j == 0 { ZetaComponent::Xi } else { ZetaComponent::Eta },
                    );
                    if a_idx == b_idx {
                        // Diagonal block: write each entry once. The block is
                        // symmetric, so take i <= j and halve the diagonal.
                        if i > j {
                            continue;
                        }
                        let mut m = MultiIndex::zeta_pair(sa, sb, n_t);
                        m.k = k.clone();
                        let coeff = if i == j { v * half } else { v };
                        out.accumulate(m, coeff);
                    } else {
                        let mut m = MultiIndex::zeta_pair(sa, sb, n_t);
                        m.k = k.clone();
                        out.accumulate(m, v);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Check the reality pairing coeff(-k) = conj(coeff(k)) within `tol`.
    pub fn reality_defect(&self) -> S {
        let mut worst = S::zero();
        for (idx, c) in self.coeffs.iter() {
            let partner = self.coeff(&idx.negate_k());
            worst = worst.max((*c - partner.conj()).norm());
        }
        worst
    }

    /// l1 norm of the raw coefficients (diagnostic).
    pub fn coeff_l1(&self) -> S {
        self.coeffs.values().map(|c| c.norm()).sum()
    }

    pub fn max_coeff(&self) -> S {
        self.coeffs.values().map(|c| c.norm()).fold(S::zero(), S::max)
    }

    /// Drop coefficients with |c| < floor; returns removed l1 mass.
    pub fn pruned(&self, floor: S) -> (Self, S) {
        let mut out = Self::zero(self.lattice.clone(), self.caps);
        let mut removed = S::zero();
        for (idx, c) in self.coeffs.iter() {
            if c.norm() < floor {
                removed += c.norm();
            } else {
                out.coeffs.insert(idx.clone(), *c);
            }
        }
        (out, removed)
    }

    /// Rebuild with different caps; terms that no longer fit are dropped and
    /// their mass returned.
    pub fn with_caps(&self, caps: Caps) -> (Self, S) {
        let mut out = Self::zero(self.lattice.clone(), caps);
        let mut dropped = S::zero();
        for (idx, c) in self.coeffs.iter() {
            if caps.admits(idx) {
                out.coeffs.insert(idx.clone(), *c);
            } else {
                dropped += c.norm();
            }
        }
        (out, dropped)
    }
}
