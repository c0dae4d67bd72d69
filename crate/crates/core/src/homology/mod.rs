//! The coupled homological equations of one iteration step, solved in the
//! triangular order: angle component, then the zeta-linear component with
//! its coupling jet, then the action and quadratic components with theirs.
//!
//! The equation solved is
//! `{h, s} = -T f_low - T {f_high, s}_low + h1`
//! where `T` truncates Fourier modes at the cutoff and applies the matrix
//! truncation to the quadratic part, and `h1` absorbs the angle-free
//! resonant part (a constant, a frequency shift, and a normal-form matrix).
//! Grading makes the coupling triangular: the zeta-linear part of
//! `{f_high, s}` only involves the angle component of `s`, and the action
//! and quadratic parts only the angle and zeta-linear components.

mod jets;

pub use jets::{complex_to_slots, linear_jet_to_poly, quadratic_jet_to_poly, slots_to_complex, LowJets, SlotMat};

use num_complex::Complex;
use serde::Serialize;

use crate::algebra::{DomainRadii, KVec, MultiIndex, TfPoly};
use crate::error::Result;
use crate::gl2::Gl2;
use crate::lattice::{BlockDecomposition, LatticeMatrix, NormalForm};
use crate::linalg::CMat;
use crate::{CoreError, FxHashMap, Scalar};

/// Parameters of one homological solve.
#[derive(Clone, Copy, Debug)]
pub struct StepParams<S: Scalar> {
    /// Small-divisor floor, 0 < kappa < 1.
    pub kappa: S,
    /// Fourier / matrix cutoff, > 1.
    pub delta_prime: S,
    /// Analyticity loss per substep (diagnostic bookkeeping).
    pub tau: S,
    /// Lipschitz-scale parameter, carried as a diagnostic only.
    pub lambda: S,
    /// Radii of the working domain, for norm evaluation.
    pub radii: DomainRadii<S>,
}

/// Norms of the solution components, for the step log.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ComponentNorms<S> {
    pub s_phi: S,
    pub s_action: S,
    pub s_linear: S,
    pub s_quadratic: S,
    pub h1: S,
}

#[derive(Clone, Debug, Serialize)]
pub struct HomologyDiagnostics<S> {
    pub min_divisor: S,
    /// Relative residual of the full equation.
    pub residual: S,
    pub component_norms: ComponentNorms<S>,
    pub excluded: bool,
    pub offending_condition: Option<String>,
}

impl<S: Scalar + Serialize> HomologyDiagnostics<S> {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

/// Solution of the homological equation: the generator `s` (weight <= 2,
/// bounded Fourier support) and the angle-free increment `h1`.
#[derive(Clone, Debug)]
pub struct HomologicalSolution<S: Scalar> {
    pub s: TfPoly<S>,
    pub h1: TfPoly<S>,
    /// Constant part of the increment.
    pub a1: S,
    /// Frequency shift (r-linear part of the increment).
    pub chi1: Vec<S>,
    /// Normal-form matrix of the increment's quadratic part.
    pub h1_matrix: LatticeMatrix<S>,
    pub diagnostics: HomologyDiagnostics<S>,
}

struct DivisorTracker<S> {
    min_abs: S,
    kappa: S,
}

impl<S: Scalar> DivisorTracker<S> {
    fn new(kappa: S) -> Self {
        DivisorTracker {
            min_abs: S::infinity(),
            kappa,
        }
    }

    fn check(
        &mut self,
        value: S,
        condition: &'static str,
        k: &KVec,
        block_a: Option<usize>,
        block_b: Option<usize>,
    ) -> Result<()> {
        let a = value.abs();
        self.min_abs = self.min_abs.min(a);
        if a < self.kappa {
            return Err(CoreError::SmallDivisor {
                condition,
                k: k.to_vec(),
                block_a,
                block_b,
                value: a.to_f64_lossy(),
            });
        }
        Ok(())
    }
}

fn k_dot_omega<S: Scalar>(k: &KVec, omega: &[S]) -> S {
    k.iter()
        .zip(omega.iter())
        .map(|(&ki, &w)| S::sc(ki as f64) * w)
        .sum()
}

/// Whether `k` is in the canonical half-space (first nonzero entry
/// positive) or zero; solutions at the mirrored mode are set by conjugation
/// so the reality pairing holds bit exactly.
fn canonical_mode(k: &KVec) -> bool {
    for &ki in k.iter() {
        if ki > 0 {
            return true;
        }
        if ki < 0 {
            return false;
        }
    }
    true
}

fn is_zero_mode(k: &KVec) -> bool {
    k.iter().all(|&ki| ki == 0)
}

/// Solve the angle equation: `S(k) = F(k) / (i <k, omega>)` for the
/// truncated nonzero modes; the zero mode becomes the constant `a1`.
fn solve_angle_jet<S: Scalar>(
    fphi: &FxHashMap<KVec, Complex<S>>,
    omega: &[S],
    tracker: &mut DivisorTracker<S>,
    lattice: &std::sync::Arc<crate::algebra::LatticeConfig<S>>,
    caps: crate::algebra::Caps,
) -> Result<(TfPoly<S>, S)> {
    let n_t = lattice.n_tangential();
    let mut s_phi = TfPoly::zero(lattice.clone(), caps);
    let mut a1 = S::zero();
    for k in LowJets::<S>::sorted_modes(fphi) {
        let c = fphi[k];
        if is_zero_mode(k) {
            a1 = c.re;
            continue;
        }
        if !canonical_mode(k) {
            continue;
        }
        let kw = k_dot_omega(k, omega);
        tracker.check(kw, "k", k, None, None)?;
        let coeff = c / Complex::new(S::zero(), kw);
        let idx = MultiIndex::fourier(k.clone(), n_t);
        s_phi.insert_checked(idx.clone(), coeff)?;
        s_phi.insert_checked(idx.negate_k(), coeff.conj())?;
    }
    Ok((s_phi, a1))
}

/// Solve the action equation componentwise; the zero mode becomes the
/// frequency shift.
#[allow(clippy::too_many_arguments)]
fn solve_action_jet<S: Scalar>(
    f0: &FxHashMap<KVec, Vec<Complex<S>>>,
    omega: &[S],
    tracker: &mut DivisorTracker<S>,
    lattice: &std::sync::Arc<crate::algebra::LatticeConfig<S>>,
    caps: crate::algebra::Caps,
) -> Result<(TfPoly<S>, Vec<S>)> {
    let n_t = lattice.n_tangential();
    let mut s0 = TfPoly::zero(lattice.clone(), caps);
    let mut chi1 = vec![S::zero(); n_t];
    for k in LowJets::<S>::sorted_modes(f0) {
        let v = &f0[k];
        if is_zero_mode(k) {
            for (a, c) in v.iter().enumerate() {
                chi1[a] = c.re;
            }
            continue;
        }
        if !canonical_mode(k) {
            continue;
        }
        let kw = k_dot_omega(k, omega);
        tracker.check(kw, "k", k, None, None)?;
        let div = Complex::new(S::zero(), kw);
        for (a, c) in v.iter().enumerate() {
            if c.re == S::zero() && c.im == S::zero() {
                continue;
            }
            let coeff = *c / div;
            let mut idx = MultiIndex::action(a, n_t);
            idx.k = k.clone();
            s0.insert_checked(idx.clone(), coeff)?;
            s0.insert_checked(idx.negate_k(), coeff.conj())?;
        }
    }
    Ok((s0, chi1))
}

/// Apply `U^dagger R` for a block eigenbasis restricted to given rows.
fn project_to_eigen<S: Scalar>(u: &CMat<S>, r: &[Complex<S>], conj_u: bool) -> Vec<Complex<S>> {
    let n = u.n_rows;
    let mut out = vec![Complex::new(S::zero(), S::zero()); n];
    for j in 0..n {
        let mut acc = Complex::new(S::zero(), S::zero());
        for i in 0..n {
            let uij = if conj_u { u.at(i, j).conj() } else { u.at(i, j) };
            // (U^dagger r)_j = sum_i conj(U_ij) r_i; with conj_u the basis is
            // conj(U), whose adjoint is U^T.
            acc = acc + uij.conj() * r[i];
        }
        out[j] = acc;
    }
    out
}

fn back_from_eigen<S: Scalar>(u: &CMat<S>, t: &[Complex<S>], conj_u: bool) -> Vec<Complex<S>> {
    let n = u.n_rows;
    let mut out = vec![Complex::new(S::zero(), S::zero()); n];
    for i in 0..n {
        let mut acc = Complex::new(S::zero(), S::zero());
        for j in 0..n {
            let uij = if conj_u { u.at(i, j).conj() } else { u.at(i, j) };
            acc = acc + uij * t[j];
        }
        out[i] = acc;
    }
    out
}

/// Solve the zeta-linear equation by per-block eigen-division in complex
/// coordinates: the u component divides by `alpha - <k, omega>`, the v
/// component by `alpha + <k, omega>`.
#[allow(clippy::too_many_arguments)]
fn solve_linear_jet<S: Scalar>(
    rhs: &FxHashMap<KVec, Vec<Complex<S>>>,
    nf: &NormalForm<S>,
    blocks: &BlockDecomposition<S>,
    eigens: &[(Vec<S>, CMat<S>)],
    tracker: &mut DivisorTracker<S>,
    caps: crate::algebra::Caps,
) -> Result<TfPoly<S>> {
    let lattice = nf.lattice.clone();
    let i_unit = Complex::new(S::zero(), S::one());
    let mut solution: FxHashMap<KVec, Vec<Complex<S>>> = FxHashMap::default();
    for k in LowJets::<S>::sorted_modes(rhs) {
        if !canonical_mode(k) && !is_zero_mode(k) {
            continue;
        }
        let kw = k_dot_omega(k, &nf.omega);
        let v = &rhs[k];
        let (ru, rv) = slots_to_complex(v, &lattice);
        let l = lattice.n_normal();
        let mut su = vec![Complex::new(S::zero(), S::zero()); l];
        let mut sv = vec![Complex::new(S::zero(), S::zero()); l];
        for (bid, sites) in blocks.blocks.iter().enumerate() {
            let ru_block: Vec<Complex<S>> = sites.iter().map(|&s| ru[s]).collect();
            let rv_block: Vec<Complex<S>> = sites.iter().map(|&s| rv[s]).collect();
            let any_u = ru_block.iter().any(|c| c.norm_sqr() > S::zero());
            let any_v = rv_block.iter().any(|c| c.norm_sqr() > S::zero());
            if !any_u && !any_v {
                continue;
            }
            let (evals, u_mat) = &eigens[bid];
            // u component: i (Q - kw)^{-1} R'_u.
            if any_u {
                let mut t = project_to_eigen(u_mat, &ru_block, false);
                for (j, tj) in t.iter_mut().enumerate() {
                    let div = evals[j] - kw;
                    tracker.check(div, "k+alpha", k, Some(bid), None)?;
                    *tj = *tj * i_unit / Complex::new(div, S::zero());
                }
                let sol = back_from_eigen(u_mat, &t, false);
                for (row, &site) in sites.iter().enumerate() {
                    su[site] = sol[row];
                }
            }
            // v component: -i (conj(Q) + kw)^{-1} R'_v.
            if any_v {
                let mut t = project_to_eigen(u_mat, &rv_block, true);
                for (j, tj) in t.iter_mut().enumerate() {
                    let div = evals[j] + kw;
                    tracker.check(div, "k+alpha", k, Some(bid), None)?;
                    *tj = -(*tj * i_unit) / Complex::new(div, S::zero());
                }
                let sol = back_from_eigen(u_mat, &t, true);
                for (row, &site) in sites.iter().enumerate() {
                    sv[site] = sol[row];
                }
            }
        }
        let slots = complex_to_slots(&su, &sv, &lattice);
        if is_zero_mode(k) {
            // Real data, real solution; enforce exactly.
            let real: Vec<Complex<S>> = slots
                .iter()
                .map(|c| Complex::new(c.re, S::zero()))
                .collect();
            solution.insert(k.clone(), real);
        } else {
            let mirrored: Vec<Complex<S>> = slots.iter().map(|c| c.conj()).collect();
            solution.insert(k.clone(), slots);
            solution.insert(
                {
                    let mut nk = k.clone();
                    for x in nk.iter_mut() {
                        *x = -*x;
                    }
                    nk
                },
                mirrored,
            );
        }
    }
    linear_jet_to_poly(&solution, &lattice, caps)
}

/// Solve the quadratic equation blockwise. For the zero mode, the part of
/// the data coupling equal-norm blocks in the (u, v) corner is moved into
/// the normal-form increment instead of being divided.
#[allow(clippy::too_many_arguments)]
fn solve_quadratic_jet<S: Scalar>(
    rhs: &FxHashMap<KVec, SlotMat<S>>,
    nf: &NormalForm<S>,
    blocks: &BlockDecomposition<S>,
    eigens: &[(Vec<S>, CMat<S>)],
    tracker: &mut DivisorTracker<S>,
    caps: crate::algebra::Caps,
) -> Result<(TfPoly<S>, LatticeMatrix<S>)> {
    let lattice = nf.lattice.clone();
    let i_unit = Complex::new(S::zero(), S::one());
    let mut h1 = LatticeMatrix::zero(lattice.clone());
    let mut solution: FxHashMap<KVec, SlotMat<S>> = FxHashMap::default();
    for k in LowJets::<S>::sorted_modes(rhs) {
        if !canonical_mode(k) && !is_zero_mode(k) {
            continue;
        }
        let zero_mode = is_zero_mode(k);
        let kw = k_dot_omega(k, &nf.omega);
        let m = &rhs[k];
        // Complexified blocks per site pair with data.
        let mut uu: FxHashMap<(usize, usize), Complex<S>> = FxHashMap::default();
        let mut uv: FxHashMap<(usize, usize), Complex<S>> = FxHashMap::default();
        let mut vu: FxHashMap<(usize, usize), Complex<S>> = FxHashMap::default();
        let mut vv: FxHashMap<(usize, usize), Complex<S>> = FxHashMap::default();
        for (a, b) in m.site_pairs(&lattice) {
            // Both orders so the assembled complex matrices are complete.
            for (x, y) in if a == b { vec![(a, b)] } else { vec![(a, b), (b, a)] } {
                let mut blk = Gl2::zero();
                for i in 0..2 {
                    for j in 0..2 {
                        let sx = lattice.slot(x, if i == 0 { crate::algebra::ZetaComponent::Xi } else { crate::algebra::ZetaComponent::Eta });
                        let sy = lattice.slot(y, if j == 0 { crate::algebra::ZetaComponent::Xi } else { crate::algebra::ZetaComponent::Eta });
                        blk.0[i][j] = m.get(sx, sy);
                    }
                }
                let cblk = blk.complexify();
                if cblk.0[0][0].norm_sqr() > S::zero() {
                    uu.insert((x, y), cblk.0[0][0]);
                }
                if cblk.0[0][1].norm_sqr() > S::zero() {
                    uv.insert((x, y), cblk.0[0][1]);
                }
                if cblk.0[1][0].norm_sqr() > S::zero() {
                    vu.insert((x, y), cblk.0[1][0]);
                }
                if cblk.0[1][1].norm_sqr() > S::zero() {
                    vv.insert((x, y), cblk.0[1][1]);
                }
            }
        }
        // Group data by block pairs.
        let mut pairs: Vec<(usize, usize)> = uu
            .keys()
            .chain(uv.keys())
            .chain(vu.keys())
            .chain(vv.keys())
            .map(|&(a, b)| (blocks.block_of[a], blocks.block_of[b]))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        let mut suu: FxHashMap<(usize, usize), Complex<S>> = FxHashMap::default();
        let mut suv: FxHashMap<(usize, usize), Complex<S>> = FxHashMap::default();
        let mut svu: FxHashMap<(usize, usize), Complex<S>> = FxHashMap::default();
        let mut svv: FxHashMap<(usize, usize), Complex<S>> = FxHashMap::default();
        for (ba, bb) in pairs {
            let sites_a = &blocks.blocks[ba];
            let sites_b = &blocks.blocks[bb];
            let (da, ua) = &eigens[ba];
            let (db, ub) = &eigens[bb];
            let gather = |map: &FxHashMap<(usize, usize), Complex<S>>| -> Option<CMat<S>> {
                let mut any = false;
                let mut r = CMat::zeros(sites_a.len(), sites_b.len());
                for (ia, &sa) in sites_a.iter().enumerate() {
                    for (ib, &sb) in sites_b.iter().enumerate() {
                        if let Some(&c) = map.get(&(sa, sb)) {
                            r[(ia, ib)] = c;
                            any = true;
                        }
                    }
                }
                any.then_some(r)
            };
            // uu: divisor -kw + alpha_i + beta_j; S = U_A T conj(U_B)^dagger.
            if let Some(r) = gather(&uu) {
                let t = sylvester_eigen(
                    &r, ua, da, ub, db, false, true, -kw, S::one(), S::one(),
                    tracker, "k+alpha+beta", k, ba, bb, i_unit,
                )?;
                scatter(&mut suu, sites_a, sites_b, &t);
            }
            // vv: divisor -kw - alpha_i - beta_j; S = conj(U_A) T U_B^dagger.
            if let Some(r) = gather(&vv) {
                let t = sylvester_eigen(
                    &r, ua, da, ub, db, true, false, -kw, -S::one(), -S::one(),
                    tracker, "k+alpha+beta", k, ba, bb, i_unit,
                )?;
                scatter(&mut svv, sites_a, sites_b, &t);
            }
            // uv: divisor -kw + alpha_i - beta_j, resonant at the zero mode
            // on equal-norm block pairs, where the data feeds h1 instead.
            if let Some(r) = gather(&uv) {
                if zero_mode && blocks.norm2[ba] == blocks.norm2[bb] {
                    for (ia, &sa) in sites_a.iter().enumerate() {
                        for (ib, &sb) in sites_b.iter().enumerate() {
                            let q = r.at(ia, ib);
                            if q.norm_sqr() > S::zero() {
                                // Real normal-form block from the Hermitian
                                // scalar q: [[re, im], [-im, re]].
                                let blk = Gl2([
                                    [
                                        Complex::new(q.re, S::zero()),
                                        Complex::new(q.im, S::zero()),
                                    ],
                                    [
                                        Complex::new(-q.im, S::zero()),
                                        Complex::new(q.re, S::zero()),
                                    ],
                                ]);
                                h1.add_entry(sa, sb, &blk.scale(Complex::new(S::sc(0.5), S::zero())));
                                h1.add_entry(sb, sa, &blk.transpose().scale(Complex::new(S::sc(0.5), S::zero())));
                            }
                        }
                    }
                } else {
                    let t = sylvester_eigen(
                        &r, ua, da, ub, db, false, false, -kw, S::one(), -S::one(),
                        tracker, "k+alpha-beta", k, ba, bb, i_unit,
                    )?;
                    scatter(&mut suv, sites_a, sites_b, &t);
                }
            }
            // vu: divisor -kw - alpha_i + beta_j.
            if let Some(r) = gather(&vu) {
                if zero_mode && blocks.norm2[ba] == blocks.norm2[bb] {
                    // Mirror of the uv resonant branch; already absorbed
                    // through the symmetric write above.
                } else {
                    let t = sylvester_eigen(
                        &r, ua, da, ub, db, true, true, -kw, -S::one(), S::one(),
                        tracker, "k+alpha-beta", k, ba, bb, i_unit,
                    )?;
                    scatter(&mut svu, sites_a, sites_b, &t);
                }
            }
        }
        // Back to real coordinates, per site pair.
        let mut out = SlotMat::default();
        let mut keys: Vec<(usize, usize)> = suu
            .keys()
            .chain(suv.keys())
            .chain(svu.keys())
            .chain(svv.keys())
            .copied()
            .collect();
        keys.sort_unstable();
        keys.dedup();
        let zero = Complex::new(S::zero(), S::zero());
        for (a, b) in keys {
            if a > b {
                continue;
            }
            let cblk = Gl2([
                [
                    suu.get(&(a, b)).copied().unwrap_or(zero),
                    suv.get(&(a, b)).copied().unwrap_or(zero),
                ],
                [
                    svu.get(&(a, b)).copied().unwrap_or(zero),
                    svv.get(&(a, b)).copied().unwrap_or(zero),
                ],
            ]);
            let real_blk = cblk.decomplexify();
            // Mirror block for the symmetric slot matrix.
            let mirror = if a == b {
                None
            } else {
                Some(
                    Gl2([
                        [
                            suu.get(&(b, a)).copied().unwrap_or(zero),
                            suv.get(&(b, a)).copied().unwrap_or(zero),
                        ],
                        [
                            svu.get(&(b, a)).copied().unwrap_or(zero),
                            svv.get(&(b, a)).copied().unwrap_or(zero),
                        ],
                    ])
                    .decomplexify(),
                )
            };
            for i in 0..2 {
                for j in 0..2 {
                    let sa = lattice.slot(a, if i == 0 { crate::algebra::ZetaComponent::Xi } else { crate::algebra::ZetaComponent::Eta });
                    let sb = lattice.slot(b, if j == 0 { crate::algebra::ZetaComponent::Xi } else { crate::algebra::ZetaComponent::Eta });
                    if a == b {
                        if sa > sb {
                            continue;
                        }
                        // Diagonal block is symmetric; average the pair.
                        let v = if sa == sb {
                            real_blk.0[i][j]
                        } else {
                            (real_blk.0[i][j] + real_blk.0[j][i]) * Complex::new(S::sc(0.5), S::zero())
                        };
                        if v.norm_sqr() > S::zero() {
                            out.add(sa, sb, v);
                        }
                    } else {
                        // Average with the transpose of the mirror block.
                        let v = (real_blk.0[i][j] + mirror.as_ref().unwrap().0[j][i])
                            * Complex::new(S::sc(0.5), S::zero());
                        if v.norm_sqr() > S::zero() {
                            out.add(sa, sb, v);
                        }
                    }
                }
            }
        }
        if zero_mode {
            solution.insert(k.clone(), realify_slotmat(&out));
        } else {
            let mut nk = k.clone();
            for x in nk.iter_mut() {
                *x = -*x;
            }
            solution.insert(nk, conj_slotmat(&out));
            solution.insert(k.clone(), out);
        }
    }
    // Hermitian symmetrization of the increment in complex form; defect
    // beyond tolerance is an invariant failure.
    let defect = h1.symmetry_defect().max(h1.reality_defect());
    let scale = h1
        .entries()
        .map(|(_, b)| b.max_abs())
        .fold(S::zero(), S::max)
        .max(S::one());
    if defect > S::sc(1e-10) * scale {
        return Err(CoreError::Invariant(format!(
            "normal-form increment defect {defect:e} beyond tolerance"
        )));
    }
    let s2 = quadratic_jet_to_poly(&solution, &lattice, caps)?;
    Ok((s2, h1))
}

fn realify_slotmat<S: Scalar>(m: &SlotMat<S>) -> SlotMat<S> {
    let mut out = SlotMat::default();
    for ((s, t), c) in m.iter_entries() {
        out.add(*s, *t, Complex::new(c.re, S::zero()));
    }
    out
}

fn conj_slotmat<S: Scalar>(m: &SlotMat<S>) -> SlotMat<S> {
    let mut out = SlotMat::default();
    for ((s, t), c) in m.iter_entries() {
        out.add(*s, *t, c.conj());
    }
    out
}

fn scatter<S: Scalar>(
    map: &mut FxHashMap<(usize, usize), Complex<S>>,
    sites_a: &[usize],
    sites_b: &[usize],
    t: &CMat<S>,
) {
    for (ia, &sa) in sites_a.iter().enumerate() {
        for (ib, &sb) in sites_b.iter().enumerate() {
            let c = t.at(ia, ib);
            if c.norm_sqr() > S::zero() {
                map.insert((sa, sb), c);
            }
        }
    }
}

/// Solve `(-kw + sign_a alpha_i + sign_b beta_j) T = i R` in the block
/// eigenbases, with optional conjugation of either basis.
#[allow(clippy::too_many_arguments)]
fn sylvester_eigen<S: Scalar>(
    r: &CMat<S>,
    ua: &CMat<S>,
    da: &[S],
    ub: &CMat<S>,
    db: &[S],
    conj_a: bool,
    conj_b: bool,
    neg_kw: S,
    sign_a: S,
    sign_b: S,
    tracker: &mut DivisorTracker<S>,
    condition: &'static str,
    k: &KVec,
    block_a: usize,
    block_b: usize,
    i_unit: Complex<S>,
) -> Result<CMat<S>> {
    let na = ua.n_rows;
    let nb = ub.n_rows;
    // T' = A^dagger (iR) B where A, B are the (possibly conjugated) bases.
    let mut left = CMat::zeros(na, nb);
    for i in 0..na {
        for j in 0..nb {
            let mut acc = Complex::new(S::zero(), S::zero());
            for m2 in 0..na {
                let a = if conj_a { ua.at(m2, i) } else { ua.at(m2, i).conj() };
                acc = acc + a * r.at(m2, j) * i_unit;
            }
            left[(i, j)] = acc;
        }
    }
    let mut t = CMat::zeros(na, nb);
    for i in 0..na {
        for j in 0..nb {
            let mut acc = Complex::new(S::zero(), S::zero());
            for m2 in 0..nb {
                let b = if conj_b { ub.at(m2, j).conj() } else { ub.at(m2, j) };
                acc = acc + left.at(i, m2) * b;
            }
            t[(i, j)] = acc;
        }
    }
    for i in 0..na {
        for j in 0..nb {
            let div = neg_kw + sign_a * da[i] + sign_b * db[j];
            tracker.check(div, condition, k, Some(block_a), Some(block_b))?;
            t[(i, j)] = t.at(i, j) / Complex::new(div, S::zero());
        }
    }
    // Back to site coordinates: S = A T B^dagger.
    let mut half = CMat::zeros(na, nb);
    for i in 0..na {
        for j in 0..nb {
            let mut acc = Complex::new(S::zero(), S::zero());
            for m2 in 0..na {
                let a = if conj_a { ua.at(i, m2).conj() } else { ua.at(i, m2) };
                acc = acc + a * t.at(m2, j);
            }
            half[(i, j)] = acc;
        }
    }
    let mut s = CMat::zeros(na, nb);
    for i in 0..na {
        for j in 0..nb {
            let mut acc = Complex::new(S::zero(), S::zero());
            for m2 in 0..nb {
                let b = if conj_b { ub.at(j, m2) } else { ub.at(j, m2).conj() };
                acc = acc + half.at(i, m2) * b;
            }
            s[(i, j)] = acc;
        }
    }
    Ok(s)
}

/// The full triangular solve. Returns the generator, the increment and the
/// back-substitution diagnostics.
pub fn solve_homological<S: Scalar>(
    nf: &NormalForm<S>,
    f: &TfPoly<S>,
    sp: &StepParams<S>,
    blocks: &BlockDecomposition<S>,
) -> Result<HomologicalSolution<S>> {
    let lattice = f.lattice().clone();
    let caps = f.caps();
    let n_t = lattice.n_tangential();
    let mut tracker = DivisorTracker::new(sp.kappa);

    let (f_low, f_high) = f.split_low_high();
    let t_low = f_low.truncate_low_jet(sp.delta_prime)?;
    let jets = LowJets::extract(&t_low)?;
    let eigens = nf.block_eigens(blocks)?;

    // Angle component and constant.
    let (s_phi, a1) = solve_angle_jet(&jets.fphi, &nf.omega, &mut tracker, &lattice, caps)?;

    // Coupling from the angle component; only its zeta-linear class feeds
    // the next solve.
    let b1 = f_high.poisson_bracket(&s_phi)?;
    let tb1 = b1.low_part().truncate_low_jet(sp.delta_prime)?;
    let jets_b1 = LowJets::extract(&tb1)?;

    let mut rhs1 = jets.f1.clone();
    merge_vec_jets(&mut rhs1, &jets_b1.f1);
    let s1 = solve_linear_jet(&rhs1, nf, blocks, &eigens, &mut tracker, caps)?;

    // Coupling from the zeta-linear component.
    let b2 = f_high.poisson_bracket(&s1)?;
    let tb2 = b2.low_part().truncate_low_jet(sp.delta_prime)?;
    let jets_b2 = LowJets::extract(&tb2)?;
    debug_assert!(jets_b2.f1.values().all(|v| v
        .iter()
        .all(|c| c.norm() < S::sc(1e-12))),
        "grading: the zeta-linear class of the second coupling must vanish");

    let mut rhs0 = jets.f0.clone();
    merge_vec_jets(&mut rhs0, &jets_b1.f0);
    merge_vec_jets(&mut rhs0, &jets_b2.f0);
    let (s0, chi1) = solve_action_jet(&rhs0, &nf.omega, &mut tracker, &lattice, caps)?;

    let mut rhs2 = jets.f2.clone();
    merge_mat_jets(&mut rhs2, &jets_b1.f2);
    merge_mat_jets(&mut rhs2, &jets_b2.f2);
    let (s2, h1_matrix) = solve_quadratic_jet(&rhs2, nf, blocks, &eigens, &mut tracker, caps)?;

    let s = s_phi.add(&s0)?.add(&s1)?.add(&s2)?;

    // h1 = a1 + <chi1, r> + 1/2 <zeta, H1 zeta>.
    let mut h1 = TfPoly::zero(lattice.clone(), caps);
    if a1 != S::zero() {
        h1.insert_checked(MultiIndex::constant(n_t), Complex::new(a1, S::zero()))?;
    }
    for (a, &x) in chi1.iter().enumerate() {
        if x != S::zero() {
            h1.insert_checked(MultiIndex::action(a, n_t), Complex::new(x, S::zero()))?;
        }
    }
    let h1_quad = quadratic_matrix_poly(&h1_matrix, caps)?;
    let h1 = h1.add(&h1_quad)?;

    // Back-substitution residual of the full equation.
    let h_poly = nf.to_poly(caps)?;
    let hs = h_poly.poisson_bracket(&s)?;
    let g_full = f_high.poisson_bracket(&s)?;
    let tg = g_full.low_part().truncate_low_jet(sp.delta_prime)?;
    let residual_poly = hs.add(&t_low)?.add(&tg)?.sub(&h1)?;
    let fnorm = f.vf_weighted_norm(&sp.radii);
    let residual = residual_poly.vf_weighted_norm(&sp.radii) / (S::one() + fnorm);

    let d = &sp.radii;
    let diagnostics = HomologyDiagnostics {
        min_divisor: tracker.min_abs,
        residual,
        component_norms: ComponentNorms {
            s_phi: s_phi.vf_weighted_norm(d),
            s_action: s0.vf_weighted_norm(d),
            s_linear: s1.vf_weighted_norm(d),
            s_quadratic: s2.vf_weighted_norm(d),
            h1: h1.vf_weighted_norm(d),
        },
        excluded: false,
        offending_condition: None,
    };
    Ok(HomologicalSolution {
        s,
        h1,
        a1,
        chi1,
        h1_matrix,
        diagnostics,
    })
}

/// `1/2 <zeta, M zeta>` for a symmetric lattice matrix, as a polynomial.
pub fn quadratic_matrix_poly<S: Scalar>(
    m: &LatticeMatrix<S>,
    caps: crate::algebra::Caps,
) -> Result<TfPoly<S>> {
    let lattice = m.lattice().clone();
    let n_t = lattice.n_tangential();
    let half = Complex::new(S::sc(0.5), S::zero());
    let mut p = TfPoly::zero(lattice.clone(), caps);
    for (&(a, b), blk) in m.sorted_entries() {
        use std::cmp::Ordering;
        match a.cmp(&b) {
            Ordering::Greater => continue,
            Ordering::Equal => {
                for i in 0..2 {
                    let slot = lattice.slot(a, comp_of(i));
                    let c = blk.0[i][i];
                    if c.norm_sqr() > S::zero() {
                        p.insert_checked(MultiIndex::zeta_pair(slot, slot, n_t), c * half)?;
                    }
                }
                let sxi = lattice.slot(a, comp_of(0));
                let seta = lattice.slot(a, comp_of(1));
                let c = (blk.0[0][1] + blk.0[1][0]) * half;
                if c.norm_sqr() > S::zero() {
                    p.insert_checked(MultiIndex::zeta_pair(sxi, seta, n_t), c)?;
                }
            }
            Ordering::Less => {
                for i in 0..2 {
                    for j in 0..2 {
                        let c = blk.0[i][j];
                        if c.norm_sqr() > S::zero() {
                            let sa = lattice.slot(a, comp_of(i));
                            let sb = lattice.slot(b, comp_of(j));
                            p.insert_checked(MultiIndex::zeta_pair(sa, sb, n_t), c)?;
                        }
                    }
                }
            }
        }
    }
    Ok(p)
}

fn comp_of(i: usize) -> crate::algebra::ZetaComponent {
    if i == 0 {
        crate::algebra::ZetaComponent::Xi
    } else {
        crate::algebra::ZetaComponent::Eta
    }
}

fn merge_vec_jets<S: Scalar>(
    dst: &mut FxHashMap<KVec, Vec<Complex<S>>>,
    src: &FxHashMap<KVec, Vec<Complex<S>>>,
) {
    for (k, v) in src.iter() {
        match dst.get_mut(k) {
            Some(d) => {
                for (di, si) in d.iter_mut().zip(v.iter()) {
                    *di = *di + *si;
                }
            }
            None => {
                dst.insert(k.clone(), v.clone());
            }
        }
    }
}

fn merge_mat_jets<S: Scalar>(
    dst: &mut FxHashMap<KVec, SlotMat<S>>,
    src: &FxHashMap<KVec, SlotMat<S>>,
) {
    for (k, m) in src.iter() {
        let d = dst.entry(k.clone()).or_default();
        for ((s, t), c) in m.iter_entries() {
            d.add(*s, *t, *c);
        }
    }
}
