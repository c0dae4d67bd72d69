//! Sparse lattice matrices with 2x2 complex blocks, their projector
//! splitting, decay norms, truncations and the change to complex
//! coordinates.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex;

use crate::algebra::LatticeConfig;
use crate::error::Result;
use crate::gl2::Gl2;
use crate::{CoreError, FxHashMap, Scalar};

/// `A : L_box x L_box -> gl(2, C)`, sparse over site-index pairs.
#[derive(Clone, Debug)]
pub struct LatticeMatrix<S: Scalar> {
    lattice: Arc<LatticeConfig<S>>,
    entries: FxHashMap<(usize, usize), Gl2<S>>,
}

impl<S: Scalar> LatticeMatrix<S> {
    pub fn zero(lattice: Arc<LatticeConfig<S>>) -> Self {
        LatticeMatrix {
            lattice,
            entries: FxHashMap::default(),
        }
    }

    pub fn lattice(&self) -> &Arc<LatticeConfig<S>> {
        &self.lattice
    }

    pub fn n_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, a: usize, b: usize) -> Gl2<S> {
        self.entries.get(&(a, b)).copied().unwrap_or_else(Gl2::zero)
    }

    pub fn set_entry(&mut self, a: usize, b: usize, block: Gl2<S>) {
        if block.is_zero() {
            self.entries.remove(&(a, b));
        } else {
            self.entries.insert((a, b), block);
        }
    }

    pub fn add_entry(&mut self, a: usize, b: usize, block: &Gl2<S>) {
        let sum = self.entry(a, b).add(block);
        self.set_entry(a, b, sum);
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(usize, usize), &Gl2<S>)> {
        self.entries.iter()
    }

    pub fn sorted_entries(&self) -> Vec<(&(usize, usize), &Gl2<S>)> {
        let mut v: Vec<_> = self.entries.iter().collect();
        v.sort_by_key(|(k, _)| **k);
        v
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (&(a, b), blk) in other.entries.iter() {
            out.add_entry(a, b, blk);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (&(a, b), blk) in other.entries.iter() {
            out.add_entry(a, b, &blk.scale(Complex::new(-S::one(), S::zero())));
        }
        out
    }

    pub fn scale(&self, s: Complex<S>) -> Self {
        let mut out = Self::zero(self.lattice.clone());
        for (&k, blk) in self.entries.iter() {
            out.entries.insert(k, blk.scale(s));
        }
        out
    }

    /// Largest entrywise deviation from `A_a^b = (A_b^a)^T`.
    pub fn symmetry_defect(&self) -> S {
        let mut worst = S::zero();
        for (&(a, b), blk) in self.entries.iter() {
            let mirror = self.entry(b, a).transpose();
            worst = worst.max(blk.sub(&mirror).max_abs());
        }
        worst
    }

    /// Largest imaginary part over entries (a real matrix has none).
    pub fn reality_defect(&self) -> S {
        let mut worst = S::zero();
        for blk in self.entries.values() {
            for row in blk.0.iter() {
                for c in row.iter() {
                    worst = worst.max(c.im.abs());
                }
            }
        }
        worst
    }

    /// Entrywise split through the rotation projector: `(pi A, (1 - pi) A)`.
    pub fn pi_project(&self) -> (Self, Self) {
        let mut p = Self::zero(self.lattice.clone());
        let mut q = Self::zero(self.lattice.clone());
        for (&(a, b), blk) in self.entries.iter() {
            p.set_entry(a, b, blk.pi());
            q.set_entry(a, b, blk.one_minus_pi());
        }
        (p, q)
    }

    /// Decay norm |A|_gamma: sup over entries of the operator norm of the
    /// entrywise modulus, weighted `e^{gamma |a-b|}` on the rotation part
    /// and `e^{gamma |a+b|}` on the reflection part.
    pub fn gamma_norm(&self, gamma: S) -> S {
        let sites = &self.lattice.normal_sites;
        let mut worst = S::zero();
        for (&(a, b), blk) in self.entries.iter() {
            let dist = S::sc((sites[a].dist2(&sites[b]) as f64).sqrt());
            let summ = S::sc((sites[a].sum_norm2(&sites[b]) as f64).sqrt());
            let wp = (gamma * dist).exp();
            let wm = (gamma * summ).exp();
            worst = worst
                .max(blk.pi().abs_op_norm() * wp)
                .max(blk.one_minus_pi().abs_op_norm() * wm);
        }
        worst
    }

    /// Truncation `T_delta A`: rotation part restricted to |a-b| <= delta,
    /// reflection part to |a+b| <= delta.
    pub fn truncate(&self, delta: S) -> Self {
        let sites = &self.lattice.normal_sites;
        let delta2 = (delta * delta).to_f64_lossy();
        let mut out = Self::zero(self.lattice.clone());
        for (&(a, b), blk) in self.entries.iter() {
            let keep_pi = (sites[a].dist2(&sites[b]) as f64) <= delta2;
            let keep_refl = (sites[a].sum_norm2(&sites[b]) as f64) <= delta2;
            let mut kept = Gl2::zero();
            if keep_pi {
                kept = kept.add(&blk.pi());
            }
            if keep_refl {
                kept = kept.add(&blk.one_minus_pi());
            }
            out.set_entry(a, b, kept);
        }
        out
    }

    /// Entrywise change to complex coordinates `C^T A_a^b C` (and back via
    /// [`Self::from_complex`]). A normal-form matrix lands in the
    /// off-diagonal corners with the Hermitian scalar matrix `Q` in the
    /// (u,v) position.
    pub fn to_complex(&self) -> Self {
        let mut out = Self::zero(self.lattice.clone());
        for (&k, blk) in self.entries.iter() {
            out.entries.insert(k, blk.complexify());
        }
        out
    }

    pub fn from_complex(&self) -> Self {
        let mut out = Self::zero(self.lattice.clone());
        for (&k, blk) in self.entries.iter() {
            out.entries.insert(k, blk.decomplexify());
        }
        out
    }

    /// Operator norm of the matrix as an l2 operator, computed exactly on
    /// the complex form (unitary equivalence) via dense blocks. Intended
    /// for normal-form matrices where entries are block-diagonal; for a
    /// general sparse matrix this assembles the full dense form, which is
    /// fine at desk scale.
    pub fn op_norm(&self) -> S {
        let n = self.lattice.n_normal();
        if self.entries.is_empty() || n == 0 {
            return S::zero();
        }
        let mut dense = crate::linalg::CMat::zeros(2 * n, 2 * n);
        for (&(a, b), blk) in self.entries.iter() {
            for i in 0..2 {
                for j in 0..2 {
                    dense[(a + i * n, b + j * n)] = blk.0[i][j];
                }
            }
        }
        crate::linalg::op_norm(&dense)
    }

    /// Text dump mirroring the polynomial format: one line per entry,
    /// `a=<coords> b=<coords> m=<re,im re,im re,im re,im>` row major.
    pub fn to_text(&self) -> String {
        let sites = &self.lattice.normal_sites;
        let mut out = String::new();
        for (&(a, b), blk) in self.sorted_entries() {
            write!(out, "a={} b={} m=", sites[a], sites[b]).unwrap();
            for (pos, c) in blk.0.iter().flatten().enumerate() {
                if pos > 0 {
                    out.push(' ');
                }
                write!(out, "{:e},{:e}", c.re, c.im).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, lattice: Arc<LatticeConfig<S>>) -> Result<Self> {
        let mut out = Self::zero(lattice.clone());
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |what: &str| CoreError::Parse(format!("line {}: {what}", lineno + 1));
            let mut fields = line.splitn(3, ' ');
            let a_str = fields.next().ok_or_else(|| err("missing a"))?;
            let b_str = fields.next().ok_or_else(|| err("missing b"))?;
            let m_str = fields.next().ok_or_else(|| err("missing m"))?;
            let parse_site = |s: &str| -> Result<usize> {
                let s = s
                    .strip_prefix("a=")
                    .or_else(|| s.strip_prefix("b="))
                    .ok_or_else(|| err("bad site field"))?;
                let coords: Vec<i16> = s
                    .trim_start_matches('(')
                    .trim_end_matches(')')
                    .split(',')
                    .map(|c| c.parse().map_err(|_| err("bad coordinate")))
                    .collect::<Result<_>>()?;
                lattice
                    .normal_index_of(&crate::algebra::Site::new(&coords))
                    .ok_or_else(|| err("site not in lattice"))
            };
            let a = parse_site(a_str)?;
            let b = parse_site(b_str)?;
            let nums = m_str.strip_prefix("m=").ok_or_else(|| err("bad m field"))?;
            let mut blk = Gl2::zero();
            let mut it = nums.split(' ');
            for i in 0..2 {
                for j in 0..2 {
                    let pair = it.next().ok_or_else(|| err("short entry"))?;
                    let (re, im) = pair.split_once(',').ok_or_else(|| err("bad pair"))?;
                    let re: f64 = re.parse().map_err(|_| err("bad re"))?;
                    let im: f64 = im.parse().map_err(|_| err("bad im"))?;
                    blk.0[i][j] = Complex::new(S::sc(re), S::sc(im));
                }
            }
            out.set_entry(a, b, blk);
        }
        Ok(out)
    }
}
