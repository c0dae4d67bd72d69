//! Lie transforms, the single iteration step, the inner normal-form loop
//! and the outer iteration with its schedules; the endpoint is a set of
//! limit frequencies, a limit correction matrix, the generator sequence of
//! the conjugation and a remainder with no angle-dependent low part.

mod schedules;
mod transform;

pub use schedules::{delta_for, kappa_for, InnerSchedule, OuterSchedule};
pub use transform::{PhasePoint, TransformCache};

use num_complex::Complex;
use serde::Serialize;

use crate::algebra::{DomainRadii, DroppedMass, TfPoly};
use crate::error::Result;
use crate::homology::{solve_homological, StepParams};
use crate::lattice::{build_blocks, BlockDecomposition, LatticeMatrix, NormalForm};
use crate::melnikov::{carve, ParameterGrid};
use crate::{CoreError, Scalar};

/// Lie-series diagnostics: terms used, the last term's norm (a remainder
/// estimate), and whether the series failed to decay within the budget.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LieDiag<S> {
    pub terms: usize,
    pub last_term_norm: S,
    pub diverged: bool,
    pub dropped_by_caps: S,
    pub dropped_by_prune: S,
}

/// `f` composed with the time-1 flow of `X_s`, as the exponential series of
/// `ad_s f = {f, s}`, truncated when terms fall below `tol` relative to the
/// input scale or after `n_max` terms. Coefficients below `prune` are
/// dropped from intermediate terms and accounted in the diagnostics.
pub fn lie_transform<S: Scalar>(
    f: &TfPoly<S>,
    s: &TfPoly<S>,
    radii: &DomainRadii<S>,
    tol: S,
    n_max: usize,
    prune: S,
) -> Result<(TfPoly<S>, LieDiag<S>)> {
    let scale = f.vf_weighted_norm(radii).max(S::one());
    let threshold = tol * scale;
    let mut acc = f.clone();
    let mut term = f.clone();
    let mut diag = LieDiag {
        terms: 0,
        last_term_norm: S::zero(),
        diverged: false,
        dropped_by_caps: S::zero(),
        dropped_by_prune: S::zero(),
    };
    let mut prev_norm = S::infinity();
    for n in 1..=n_max {
        let (br, dropped) = term.poisson_bracket_diag(s, prune)?;
        diag.dropped_by_caps += dropped.by_caps;
        diag.dropped_by_prune += dropped.by_prune;
        term = br.scale_real(S::one() / S::sc(n as f64));
        if term.is_zero() {
            diag.terms = n;
            diag.last_term_norm = S::zero();
            return Ok((acc, diag));
        }
        acc = acc.add(&term)?;
        let norm = term.vf_weighted_norm(radii);
        diag.terms = n;
        diag.last_term_norm = norm;
        if norm < threshold {
            return Ok((acc, diag));
        }
        if n == n_max && norm >= prev_norm {
            diag.diverged = true;
        }
        prev_norm = norm;
    }
    Ok((acc, diag))
}

/// Per-substep record for the run log.
#[derive(Clone, Debug, Serialize)]
pub struct KamStepDiag<S> {
    pub pre_low_norm: S,
    pub post_low_norm: S,
    pub pre_high_norm: S,
    pub post_high_norm: S,
    pub a1: S,
    pub omega_shift: Vec<S>,
    pub h_shift_norm: S,
    pub min_divisor: S,
    pub residual: S,
    pub generator_norm: S,
    pub lie: LieDiag<S>,
}

/// Numerical knobs of the iteration.
#[derive(Clone, Copy, Debug)]
pub struct IterOpts<S> {
    pub lie_tol: S,
    pub lie_n_max: usize,
    pub prune: S,
    /// Inner loop exits early once the low norm falls below this floor.
    pub low_floor: S,
}

impl<S: Scalar> Default for IterOpts<S> {
    fn default() -> Self {
        IterOpts {
            lie_tol: S::sc(1e-14),
            lie_n_max: 30,
            prune: S::sc(1e-22),
            low_floor: S::sc(1e-14),
        }
    }
}

/// One iteration step: solve the homological equation, push the
/// Hamiltonian through the time-1 flow of the generator, absorb the
/// increment into the normal form (the constant is discarded from the
/// dynamics but logged).
pub fn kam_step<S: Scalar>(
    nf: &NormalForm<S>,
    f: &TfPoly<S>,
    sp: &StepParams<S>,
    blocks: &BlockDecomposition<S>,
    opts: &IterOpts<S>,
) -> Result<(NormalForm<S>, TfPoly<S>, TfPoly<S>, KamStepDiag<S>)> {
    let d = &sp.radii;
    let (f_low, f_high) = f.split_low_high();
    let pre_low = f_low.vf_weighted_norm(d);
    let pre_high = f_high.vf_weighted_norm(d);

    let sol = solve_homological(nf, f, sp, blocks)?;

    let caps = f.caps();
    let h_poly = nf.to_poly(caps)?;
    let total = h_poly.add(f)?;
    let (transformed, lie) =
        lie_transform(&total, &sol.s, d, opts.lie_tol, opts.lie_n_max, opts.prune)?;

    let mut nf_new = nf.clone();
    for (w, &shift) in nf_new.omega.iter_mut().zip(sol.chi1.iter()) {
        *w += shift;
    }
    nf_new.h = nf_new.h.add(&sol.h1_matrix);
    let h_new_poly = nf_new.to_poly(caps)?;
    let f_new = transformed
        .sub(&h_new_poly)?
        .sub(&TfPoly::constant(f.lattice().clone(), caps, Complex::new(sol.a1, S::zero())))?;

    let (new_low, new_high) = f_new.split_low_high();
    let diag = KamStepDiag {
        pre_low_norm: pre_low,
        post_low_norm: new_low.vf_weighted_norm(d),
        pre_high_norm: pre_high,
        post_high_norm: new_high.vf_weighted_norm(d),
        a1: sol.a1,
        omega_shift: sol.chi1.clone(),
        h_shift_norm: sol.h1_matrix.op_norm(),
        min_divisor: sol.diagnostics.min_divisor,
        residual: sol.diagnostics.residual,
        generator_norm: sol.s.vf_weighted_norm(d),
        lie,
    };
    Ok((nf_new, f_new, sol.s, diag))
}

/// Result of the inner normal-form loop.
pub struct InnerOutcome<S: Scalar> {
    pub nf: NormalForm<S>,
    pub f: TfPoly<S>,
    pub generators: Vec<TfPoly<S>>,
    pub steps: Vec<KamStepDiag<S>>,
}

/// Run the scheduled number of steps at a fixed cutoff and divisor floor,
/// absorbing each increment; exits early when the low part undershoots the
/// floor.
pub fn inner_loop<S: Scalar>(
    nf: &NormalForm<S>,
    f: &TfPoly<S>,
    sched: &InnerSchedule<S>,
    kappa: S,
    gamma: S,
    blocks: &BlockDecomposition<S>,
    opts: &IterOpts<S>,
) -> Result<InnerOutcome<S>> {
    let mut out = InnerOutcome {
        nf: nf.clone(),
        f: f.clone(),
        generators: Vec::new(),
        steps: Vec::new(),
    };
    for j in 1..=sched.n {
        let radii = DomainRadii {
            rho: sched.rho[j - 1],
            mu: sched.mu[j - 1],
            sigma: sched.sigma[j - 1],
            gamma,
        };
        let sp = StepParams {
            kappa,
            delta_prime: sched.delta_prime,
            tau: (sched.rho[j - 1] - sched.rho[j]).max(S::sc(1e-12)) / S::sc(8.0),
            lambda: sched.lambda[j - 1],
            radii,
        };
        let (nf_new, f_new, s, diag) = kam_step(&out.nf, &out.f, &sp, blocks, opts)?;
        let post_low = diag.post_low_norm;
        out.nf = nf_new;
        out.f = f_new;
        out.generators.push(s);
        out.steps.push(diag);
        if post_low < opts.low_floor {
            break;
        }
    }
    Ok(out)
}

/// Whole-run options for the outer iteration.
#[derive(Clone, Debug)]
pub struct OuterOpts<S> {
    pub rho: S,
    pub sigma: S,
    pub gamma: S,
    pub tol: S,
    pub m_max: usize,
    /// The unresolved constant of the block-scale ladder; carried as a
    /// diagnostic factor in Lambda only.
    pub cte: S,
    pub kappa_base: S,
    pub delta0: S,
    pub retries: usize,
    pub iter: IterOpts<S>,
    /// Cutoff cap when the schedule formula degenerates on the finite box.
    pub delta_prime_cap: S,
}

#[derive(Clone, Debug, Serialize)]
pub struct OuterStepLog<S> {
    pub m: usize,
    pub eps_entry: S,
    pub kappa: S,
    pub delta: S,
    pub delta_used: S,
    pub delta_prime: S,
    pub gamma: S,
    pub rho: S,
    pub sigma: S,
    pub mu: S,
    pub lambda: S,
    pub survivors: usize,
    pub excluded_fraction: S,
    pub w: Vec<S>,
    pub inner: Vec<KamStepDiag<S>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum KamStatus {
    Converged,
    StepLimit,
}

/// The iteration endpoint: limit frequencies and correction, the generator
/// sequence defining the conjugation, the remainder, and the per-step logs.
pub struct KamResult<S: Scalar> {
    pub status: KamStatus,
    pub w: Vec<S>,
    pub omega_base: Vec<S>,
    pub omega_inf: Vec<S>,
    pub h_inf: LatticeMatrix<S>,
    pub h_drift_norm: S,
    pub generators: Vec<TfPoly<S>>,
    pub f_inf: TfPoly<S>,
    pub eps_history: Vec<S>,
    pub final_radii: DomainRadii<S>,
    pub logs: Vec<OuterStepLog<S>>,
}

impl<S: Scalar> KamResult<S> {
    pub fn omega_drift(&self) -> S {
        self.omega_inf
            .iter()
            .zip(self.omega_base.iter())
            .map(|(&a, &b)| (a - b).abs())
            .fold(S::zero(), S::max)
    }
}

/// The outer iteration: rebuild blocks at the growing scale, re-carve the
/// parameter grid at the shrinking divisor floor, run the inner loop at the
/// first surviving point (excluding it and retrying on a divisor
/// violation), and stop at tolerance or the step bound.
pub fn outer_iterate<S, F>(
    base_nf: F,
    f0: &TfPoly<S>,
    grid: &mut ParameterGrid<S>,
    opts: &OuterOpts<S>,
) -> Result<KamResult<S>>
where
    S: Scalar,
    F: Fn(&[S]) -> NormalForm<S> + Sync,
{
    let lattice = f0.lattice().clone();
    let n_t = lattice.n_tangential();
    let outer = OuterSchedule::new(opts.rho, opts.sigma);
    // Conditions are only meaningful for modes the truncated algebra can
    // carry: |k|_inf <= k_max bounds |k|_2 by k_max sqrt(#A).
    let enum_cap = S::sc(f0.caps().k_max as f64) * S::sc(n_t as f64).sqrt();

    let mut f = f0.clone();
    let mut generators: Vec<TfPoly<S>> = Vec::new();
    let mut logs: Vec<OuterStepLog<S>> = Vec::new();
    let mut eps_history: Vec<S> = Vec::new();
    let mut w_current: Option<Vec<S>> = None;
    let mut drift_omega = vec![S::zero(); n_t];
    let mut h_acc = LatticeMatrix::zero(lattice.clone());
    let mut delta_used_prev = opts.delta0;
    let mut gamma_prev = opts.gamma;
    // Overwritten on the first pass; the loop always runs once.
    let mut final_radii = DomainRadii {
        rho: opts.rho,
        mu: opts.sigma * opts.sigma,
        sigma: opts.sigma,
        gamma: opts.gamma,
    };
    let _ = &final_radii;

    let mut m = 0usize;
    let status = loop {
        let rho_m = outer.rho_m(m);
        let sigma_m = outer.sigma_m(m);
        let mu_m = outer.mu_m(m);
        let rho_next = outer.rho_m(m + 1);
        let sigma_next = outer.sigma_m(m + 1);

        // Block scale for this step.
        let delta_m = if m == 0 {
            opts.delta0
        } else {
            delta_for(eps_history[m - 1], gamma_prev, rho_m - rho_next)
                .min(S::sc(1e9))
                .max(opts.delta0)
        };
        let blocks_m = build_blocks(&lattice, delta_m.min(S::sc(1e6)));
        let gamma_m = if blocks_m.d_delta > S::zero() {
            opts.gamma.min(S::one() / blocks_m.d_delta)
        } else {
            opts.gamma
        };
        let radii_m = DomainRadii {
            rho: rho_m,
            mu: mu_m,
            sigma: sigma_m,
            gamma: gamma_m,
        };
        final_radii = radii_m;

        let eps_m = f.low_part().vf_weighted_norm(&radii_m);
        eps_history.push(eps_m);
        if eps_m < opts.tol {
            break KamStatus::Converged;
        }
        if m >= opts.m_max {
            break KamStatus::StepLimit;
        }

        // Next scales, needed by the cutoff formula.
        let delta_next = delta_for(eps_m, gamma_m, rho_m - rho_next).min(S::sc(1e9));
        let blocks_next = build_blocks(&lattice, delta_next.min(S::sc(1e6)));
        let gamma_next = if blocks_next.d_delta > S::zero() {
            opts.gamma.min(S::one() / blocks_next.d_delta)
        } else {
            opts.gamma
        };

        let kappa_m = kappa_for(eps_m, opts.kappa_base);
        let sched = InnerSchedule::new(
            eps_m,
            kappa_m,
            gamma_m,
            gamma_next,
            rho_m,
            rho_next,
            sigma_m,
            sigma_next,
            blocks_m.d_delta,
            opts.cte * blocks_m.d_delta * blocks_m.d_delta,
            opts.delta_prime_cap,
        );
        // Solving happens on blocks wide enough to keep every absorbed
        // increment block diagonal: entries are truncated at the cutoff.
        let delta_used = delta_used_prev
            .max(delta_m)
            .max(sched.delta_prime)
            .min(S::sc(1e6));
        let blocks_used = build_blocks(&lattice, delta_used);
        delta_used_prev = delta_used;

        // Re-carve the grid at this step's floor against the current
        // normal-form data.
        let drift = drift_omega.clone();
        let h_now = h_acc.clone();
        let nf_at = |w: &[S]| -> NormalForm<S> {
            let mut nf = base_nf(w);
            for (o, &d) in nf.omega.iter_mut().zip(drift.iter()) {
                *o += d;
            }
            nf.h = nf.h.add(&h_now);
            nf.delta = delta_used;
            nf
        };
        let sp_carve = StepParams {
            kappa: kappa_m,
            delta_prime: sched.delta_prime.min(enum_cap),
            tau: S::sc(1e-3),
            lambda: opts.cte * blocks_m.d_delta * blocks_m.d_delta,
            radii: radii_m,
        };
        let outcome = carve(grid, &nf_at, &blocks_used, &sp_carve, m)?;

        // Work at the first surviving point, excluding and retrying on a
        // divisor violation inside the loop.
        let mut attempt = 0usize;
        let inner_result = loop {
            let Some(widx) = grid.first_alive() else {
                return Err(CoreError::EmptySurvivors);
            };
            let w = grid.points[widx].clone();
            let nf_w = nf_at(&w);
            nf_w.validate(&blocks_used, S::sc(1e-8))?;
            match inner_loop(&nf_w, &f, &sched, kappa_m, gamma_m, &blocks_used, &opts.iter) {
                Ok(out) => break (w, out),
                Err(CoreError::SmallDivisor {
                    condition,
                    k,
                    block_a,
                    block_b,
                    value,
                }) => {
                    grid.kill(
                        widx,
                        crate::melnikov::ExclusionRecord {
                            iteration: m,
                            condition: condition.to_string(),
                            k,
                            block_a,
                            block_b,
                            margin: S::sc(value) - kappa_m,
                        },
                    );
                    attempt += 1;
                    if attempt > opts.retries {
                        return Err(CoreError::SmallDivisor {
                            condition,
                            k: Vec::new(),
                            block_a: None,
                            block_b: None,
                            value,
                        });
                    }
                }
                Err(e) => return Err(e),
            }
        };
        let (w, inner_out) = inner_result;

        // Absorb the increments relative to the model at the working point.
        let base = base_nf(&w);
        for ((d, &after), &before) in drift_omega
            .iter_mut()
            .zip(inner_out.nf.omega.iter())
            .zip(base.omega.iter())
        {
            *d = after - before;
        }
        h_acc = inner_out.nf.h.sub(&base.h);
        f = inner_out.f;
        generators.extend(inner_out.generators);
        w_current = Some(w.clone());
        gamma_prev = gamma_m;

        logs.push(OuterStepLog {
            m,
            eps_entry: eps_m,
            kappa: kappa_m,
            delta: delta_m,
            delta_used,
            delta_prime: sched.delta_prime,
            gamma: gamma_m,
            rho: rho_m,
            sigma: sigma_m,
            mu: mu_m,
            lambda: opts.cte * blocks_m.d_delta * blocks_m.d_delta,
            survivors: outcome.alive,
            excluded_fraction: outcome.excluded_fraction,
            w,
            inner: inner_out.steps.clone(),
        });
        m += 1;
    };

    let w = match w_current {
        Some(w) => w,
        None => {
            let widx = grid.first_alive().ok_or(CoreError::EmptySurvivors)?;
            grid.points[widx].clone()
        }
    };
    let base = base_nf(&w);
    let omega_inf: Vec<S> = base
        .omega
        .iter()
        .zip(drift_omega.iter())
        .map(|(&b, &d)| b + d)
        .collect();
    let h_inf = base.h.add(&h_acc);
    Ok(KamResult {
        status,
        w,
        omega_base: base.omega.clone(),
        omega_inf,
        h_drift_norm: h_acc.op_norm(),
        h_inf,
        generators,
        f_inf: f,
        eps_history,
        final_radii,
        logs,
    })
}

/// Drop accounting helper re-exported for the step logs.
pub type Dropped<S> = DroppedMass<S>;
