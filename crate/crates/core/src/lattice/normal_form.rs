//! The integrable part of the Hamiltonian: tangential frequencies, normal
//! frequencies, a normal-form correction matrix, and the numeric checks of
//! the standing assumptions on them.

use std::sync::Arc;

use num_complex::Complex;
use serde::Serialize;

use super::{BlockDecomposition, LatticeMatrix};
use crate::algebra::{Caps, LatticeConfig, MultiIndex, TfPoly, ZetaComponent};
use crate::error::Result;
use crate::linalg::{hermitian_eigen, CMat};
use crate::{CoreError, Scalar};

/// The constants appearing in the standing assumptions on the normal form.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AssumptionConstants<S> {
    pub c1: S,
    pub c2: S,
    pub c3: S,
    pub c4: S,
    pub c5: S,
}

/// `h = <omega, r> + 1/2 <zeta, (Omega + H) zeta>` with `H` real, symmetric,
/// rotation-invariant (`pi H = H`) and block diagonal at scale `delta`.
#[derive(Clone, Debug)]
pub struct NormalForm<S: Scalar> {
    pub lattice: Arc<LatticeConfig<S>>,
    /// Tangential frequencies over A.
    pub omega: Vec<S>,
    /// Normal frequencies over the box sites (diagonal part).
    pub big_omega: Vec<S>,
    /// Normal-form correction.
    pub h: LatticeMatrix<S>,
    /// Block scale the correction is diagonal at.
    pub delta: S,
    pub constants: AssumptionConstants<S>,
}

impl<S: Scalar> NormalForm<S> {
    /// Structural validation: reality, symmetry, rotation invariance of H,
    /// and block diagonality over the given decomposition.
    pub fn validate(&self, blocks: &BlockDecomposition<S>, tol: S) -> Result<()> {
        if self.h.reality_defect() > tol {
            return Err(CoreError::Invariant("correction matrix not real".into()));
        }
        if self.h.symmetry_defect() > tol {
            return Err(CoreError::Invariant("correction matrix not symmetric".into()));
        }
        let (pi, _) = self.h.pi_project();
        if pi.sub(&self.h).entries().map(|(_, b)| b.max_abs()).fold(S::zero(), S::max) > tol {
            return Err(CoreError::Invariant(
                "correction matrix not rotation invariant (pi H != H)".into(),
            ));
        }
        for (&(a, b), blk) in self.h.entries() {
            if blocks.block_of[a] != blocks.block_of[b] && blk.max_abs() > tol {
                return Err(CoreError::Invariant(format!(
                    "correction matrix couples blocks {} and {}",
                    blocks.block_of[a], blocks.block_of[b]
                )));
            }
        }
        Ok(())
    }

    /// The Hermitian scalar matrix of one block in complex coordinates:
    /// `Q = diag(Omega) + (C^T H C)_uv`, restricted to the block's sites.
    pub fn block_q(&self, blocks: &BlockDecomposition<S>, block_id: usize) -> CMat<S> {
        let sites = &blocks.blocks[block_id];
        let n = sites.len();
        let mut q = CMat::zeros(n, n);
        for (row, &a) in sites.iter().enumerate() {
            q[(row, row)] = Complex::new(self.big_omega[a], S::zero());
            for (col, &b) in sites.iter().enumerate() {
                let blk = self.h.entry(a, b);
                if blk.is_zero() {
                    continue;
                }
                let uv = blk.complexify().0[0][1];
                q[(row, col)] = q[(row, col)] + uv;
            }
        }
        q
    }

    /// Sorted real eigenvalues of the Hermitian block `(Omega + H)_[a]`.
    pub fn block_spectrum(
        &self,
        blocks: &BlockDecomposition<S>,
        block_id: usize,
    ) -> Result<Vec<S>> {
        let q = self.block_q(blocks, block_id);
        let n = q.n_rows;
        let mut defect = S::zero();
        for i in 0..n {
            for j in 0..n {
                defect = defect.max((q.at(i, j) - q.at(j, i).conj()).norm());
            }
        }
        let scale = q.max_abs().max(S::one());
        if defect > S::sc(1e-10) * scale {
            return Err(CoreError::Invariant(format!(
                "block {block_id} not Hermitian in complex coordinates (defect {defect:e})"
            )));
        }
        Ok(hermitian_eigen(&q).0)
    }

    /// Eigen-decompositions of every block, for the homological solver.
    pub fn block_eigens(
        &self,
        blocks: &BlockDecomposition<S>,
    ) -> Result<Vec<(Vec<S>, CMat<S>)>> {
        (0..blocks.n_blocks())
            .map(|bid| {
                let q = self.block_q(blocks, bid);
                let n = q.n_rows;
                let mut defect = S::zero();
                for i in 0..n {
                    for j in 0..n {
                        defect = defect.max((q.at(i, j) - q.at(j, i).conj()).norm());
                    }
                }
                if defect > S::sc(1e-10) * q.max_abs().max(S::one()) {
                    return Err(CoreError::Invariant(format!(
                        "block {bid} not Hermitian in complex coordinates"
                    )));
                }
                Ok(hermitian_eigen(&q))
            })
            .collect()
    }

    /// The normal form as a polynomial:
    /// `<omega, r> + 1/2 sum Omega_a (xi_a^2 + eta_a^2) + 1/2 <zeta, H zeta>`.
    pub fn to_poly(&self, caps: Caps) -> Result<TfPoly<S>> {
        let lattice = &self.lattice;
        let n_t = lattice.n_tangential();
        let mut p = TfPoly::zero(lattice.clone(), caps);
        for (a, &w) in self.omega.iter().enumerate() {
            p.insert_checked(MultiIndex::action(a, n_t), Complex::new(w, S::zero()))?;
        }
        let half = S::sc(0.5);
        for (s, &om) in self.big_omega.iter().enumerate() {
            for comp in [ZetaComponent::Xi, ZetaComponent::Eta] {
                let slot = lattice.slot(s, comp);
                p.insert_checked(
                    MultiIndex::zeta_pair(slot, slot, n_t),
                    Complex::new(half * om, S::zero()),
                )?;
            }
        }
        if self.h.symmetry_defect() > S::sc(1e-9) {
            return Err(CoreError::Invariant(
                "correction matrix must be symmetric to define a quadratic form".into(),
            ));
        }
        for (&(a, b), blk) in self.h.sorted_entries() {
            use std::cmp::Ordering;
            match a.cmp(&b) {
                Ordering::Greater => continue,
                Ordering::Equal => {
                    for i in 0..2 {
                        let comp = if i == 0 { ZetaComponent::Xi } else { ZetaComponent::Eta };
                        let slot = lattice.slot(a, comp);
                        let c = blk.0[i][i];
                        p.insert_checked(
                            MultiIndex::zeta_pair(slot, slot, n_t),
                            c * Complex::new(half, S::zero()),
                        )?;
                    }
                    let sxi = lattice.slot(a, ZetaComponent::Xi);
                    let seta = lattice.slot(a, ZetaComponent::Eta);
                    p.insert_checked(MultiIndex::zeta_pair(sxi, seta, n_t), blk.0[0][1])?;
                }
                Ordering::Less => {
                    for i in 0..2 {
                        for j in 0..2 {
                            let c = blk.0[i][j];
                            if c.re == S::zero() && c.im == S::zero() {
                                continue;
                            }
                            let sa = lattice
                                .slot(a, if i == 0 { ZetaComponent::Xi } else { ZetaComponent::Eta });
                            let sb = lattice
                                .slot(b, if j == 0 { ZetaComponent::Xi } else { ZetaComponent::Eta });
                            p.insert_checked(MultiIndex::zeta_pair(sa, sb, n_t), c)?;
                        }
                    }
                }
            }
        }
        Ok(p)
    }

    /// Numeric margins of the standing assumptions at the stored constants.
    /// Positive margin = satisfied. The parametrization conditions are
    /// structural under the direct `w_a = V_hat(a)` setup; derivative- and
    /// Lipschitz-type quantities are reported against the computable decay
    /// norm only.
    pub fn check_assumptions(&self) -> AssumptionReport<S> {
        let sites = &self.lattice.normal_sites;
        let c = &self.constants;
        let mut margins = Vec::new();
        margins.push(AssumptionMargin {
            id: "parametrization".into(),
            margin: S::zero(),
            structural: true,
            note: "direct parametrization of the tangential frequencies by w".into(),
        });
        // |Omega_a - |a|^2| <= c1 e^{-c2 |a|}
        let mut worst = S::infinity();
        for (i, s) in sites.iter().enumerate() {
            let dist = (self.big_omega[i] - S::sc(s.norm2() as f64)).abs();
            let bound = c.c1 * (-c.c2 * S::sc((s.norm2() as f64).sqrt())).exp();
            worst = worst.min(bound - dist);
        }
        margins.push(AssumptionMargin {
            id: "asymptotic-decay".into(),
            margin: worst,
            structural: false,
            note: String::new(),
        });
        let min_abs = self
            .big_omega
            .iter()
            .map(|&x| x.abs())
            .fold(S::infinity(), S::min);
        margins.push(AssumptionMargin {
            id: "normal-lower-bound".into(),
            margin: min_abs - c.c3,
            structural: false,
            note: String::new(),
        });
        let mut min_sum = S::infinity();
        let mut min_diff = S::infinity();
        for (i, a) in sites.iter().enumerate() {
            for (j, b) in sites.iter().enumerate() {
                min_sum = min_sum.min((self.big_omega[i] + self.big_omega[j]).abs());
                if a.norm2() != b.norm2() {
                    min_diff = min_diff.min((self.big_omega[i] - self.big_omega[j]).abs());
                }
            }
        }
        margins.push(AssumptionMargin {
            id: "sum-lower-bound".into(),
            margin: min_sum - c.c3,
            structural: false,
            note: String::new(),
        });
        margins.push(AssumptionMargin {
            id: "difference-lower-bound".into(),
            margin: min_diff - c.c3,
            structural: false,
            note: "over pairs with distinct |a|".into(),
        });
        margins.push(AssumptionMargin {
            id: "correction-size".into(),
            margin: c.c3 / S::sc(4.0) - self.h.op_norm(),
            structural: false,
            note: String::new(),
        });
        margins.push(AssumptionMargin {
            id: "correction-derivative".into(),
            margin: c.c4,
            structural: true,
            note: "w held fixed per run; the correction carries no tracked w-derivative".into(),
        });
        margins.push(AssumptionMargin {
            id: "correction-decay".into(),
            margin: c.c5 - self.h.gamma_norm(S::zero()),
            structural: false,
            note: "decay norm only; Lipschitz component not modeled".into(),
        });
        AssumptionReport { margins }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionMargin<S> {
    pub id: String,
    pub margin: S,
    pub structural: bool,
    pub note: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport<S> {
    pub margins: Vec<AssumptionMargin<S>>,
}

impl<S: Scalar> AssumptionReport<S> {
    pub fn all_pass(&self) -> bool {
        self.margins
            .iter()
            .all(|m| m.structural || m.margin >= S::zero())
    }

    pub fn to_json(&self) -> String
    where
        S: Serialize,
    {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}
