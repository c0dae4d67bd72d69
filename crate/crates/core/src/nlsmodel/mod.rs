//! The lattice NLS Hamiltonian in action-angle / normal coordinates, a
//! symplectic spectral integrator for the Galerkin-truncated flow, and the
//! long-time stability experiment near a constructed torus.

mod expansion;
mod integrate;

pub use expansion::build_hamiltonian;
pub use integrate::{SpectralIntegrator, Trajectory};

use num_complex::Complex;

use crate::algebra::{Caps, LatticeConfig, Site};
use crate::error::Result;
use crate::kamflow::{KamResult, PhasePoint};
use crate::{CoreError, FxHashMap, Scalar};

/// Model data: convolution potential coefficients, nonlinearity power
/// `2m + 2` with an optional finite Fourier table in x, perturbation size,
/// tangential amplitudes and storage caps.
#[derive(Clone, Debug)]
pub struct NlsSpec<S: Scalar> {
    pub v_hat: FxHashMap<Site, S>,
    /// Power index m: the nonlinearity integrand is |u|^{2m+2}.
    pub m: u32,
    /// Fourier table of the x-dependent coefficient; must be symmetric
    /// (c(-g) = c(g)) so the integrand stays real. Defaults to {0: 1}.
    pub x_coeffs: Vec<(Site, S)>,
    pub eps: S,
    /// Amplitudes q_a > 0 over the tangential set, aligned with its order.
    pub q: Vec<S>,
    pub caps: Caps,
}

impl<S: Scalar> NlsSpec<S> {
    pub fn validate(&self, cfg: &LatticeConfig<S>) -> Result<()> {
        if self.q.len() != cfg.n_tangential() {
            return Err(CoreError::Config("q must cover the tangential set".into()));
        }
        if self.q.iter().any(|&q| q <= S::zero()) {
            return Err(CoreError::Config(
                "q_a must be positive (the action-angle chart is singular at 0)".into(),
            ));
        }
        if (self.caps.k_max as u32) < self.m + 1 {
            return Err(CoreError::Config(format!(
                "k_max {} cannot hold the degree-{} expansion",
                self.caps.k_max,
                2 * self.m + 2
            )));
        }
        for (g, c) in &self.x_coeffs {
            let neg = Site(g.0.iter().map(|&x| -x).collect());
            let partner = self
                .x_coeffs
                .iter()
                .find(|(h, _)| *h == neg)
                .map(|(_, v)| *v);
            if partner != Some(*c) {
                return Err(CoreError::Config(
                    "x-coefficient table must be symmetric".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn v_at(&self, site: &Site) -> S {
        self.v_hat.get(site).copied().unwrap_or_else(S::zero)
    }
}

/// Galerkin field state: one complex amplitude per model site (tangential
/// sites first, then the sorted normal sites).
#[derive(Clone, Debug)]
pub struct FieldState<S: Scalar> {
    pub u: Vec<Complex<S>>,
    pub t: S,
}

impl<S: Scalar> FieldState<S> {
    pub fn zero(cfg: &LatticeConfig<S>) -> Self {
        FieldState {
            u: vec![Complex::new(S::zero(), S::zero()); cfg.n_tangential() + cfg.n_normal()],
            t: S::zero(),
        }
    }

    /// Weighted l2 norm `sqrt(sum |u_a|^2 <a>^{2p})` over all sites.
    pub fn sobolev_norm(&self, cfg: &LatticeConfig<S>, p: S) -> S {
        let mut acc = S::zero();
        for (site, ua) in cfg.all_sites().zip(self.u.iter()) {
            let w = site.angle_bracket::<S>().powf(p);
            acc += ua.norm_sqr() * w * w;
        }
        acc.sqrt()
    }

    pub fn sub(&self, other: &Self) -> Self {
        FieldState {
            u: self
                .u
                .iter()
                .zip(other.u.iter())
                .map(|(&a, &b)| a - b)
                .collect(),
            t: self.t,
        }
    }
}

/// Embed a phase-space point into the field: tangential sites through the
/// action-angle chart `u_a = sqrt(r_a + q_a) e^{i phi_a}`, normal sites
/// through `u_c = (xi_c + i eta_c)/sqrt 2`.
pub fn embed_point<S: Scalar>(
    point: &PhasePoint<S>,
    spec: &NlsSpec<S>,
    cfg: &LatticeConfig<S>,
) -> Result<FieldState<S>> {
    let mut state = FieldState::zero(cfg);
    for a in 0..cfg.n_tangential() {
        let amp2 = point.r[a] + spec.q[a];
        if amp2 < S::zero() {
            return Err(CoreError::Contract(
                "action below the chart singularity".into(),
            ));
        }
        let amp = amp2.sqrt();
        state.u[a] = Complex::new(amp * point.phi[a].cos(), amp * point.phi[a].sin());
    }
    let inv_sqrt2 = S::sc(1.0 / std::f64::consts::SQRT_2);
    for c in 0..cfg.n_normal() {
        let (xi, eta) = point.zeta[c];
        state.u[cfg.n_tangential() + c] = Complex::new(xi * inv_sqrt2, eta * inv_sqrt2);
    }
    Ok(state)
}

/// The C(t) profile of one stability run.
#[derive(Clone, Debug)]
pub struct CProfile<S> {
    pub times: Vec<S>,
    pub hp_distance: Vec<S>,
    pub c_of_t: Vec<S>,
    /// Energy samples of the perturbed trajectory.
    pub energy: Vec<S>,
    pub sup_c: S,
    pub max_energy_drift: S,
}

/// Integrate a torus point and a delta-perturbed neighbor to |t| = t_end in
/// both time directions, recording the normalized separation
/// `C(t) = ||u - u0||_{H^p} / delta`.
#[allow(clippy::too_many_arguments)]
pub fn stability_experiment<S: Scalar + rustfft::FftNum>(
    kam: Option<&KamResult<S>>,
    spec: &NlsSpec<S>,
    cfg: &std::sync::Arc<LatticeConfig<S>>,
    delta: S,
    p: S,
    dt: S,
    t_end: S,
    sample_every: usize,
) -> Result<CProfile<S>> {
    if delta <= S::zero() || delta >= S::one() {
        return Err(CoreError::Contract(
            "perturbation size must lie in (0,1)".into(),
        ));
    }
    spec.validate(cfg)?;
    let torus_point = PhasePoint {
        phi: vec![S::zero(); cfg.n_tangential()],
        r: vec![S::zero(); cfg.n_tangential()],
        zeta: vec![(S::zero(), S::zero()); cfg.n_normal()],
    };
    let mapped = match kam {
        Some(result) => {
            let cache = result.transform_cache(
                &result.final_radii,
                S::sc(1e-12),
                20,
                S::sc(1e-20),
            )?;
            cache.apply(&torus_point)
        }
        None => torus_point,
    };
    let u0 = embed_point(&mapped, spec, cfg)?;

    // Perturbation: equidistributed over the eight lowest-weight normal
    // sites, sized to H^p norm delta exactly.
    let mut order: Vec<usize> = (0..cfg.n_normal()).collect();
    order.sort_by_key(|&i| (cfg.normal_sites[i].norm2(), i));
    let picks: Vec<usize> = order.into_iter().take(8).collect();
    let amp_share = delta / S::sc(picks.len() as f64).sqrt();
    let mut u_pert = u0.clone();
    for &i in &picks {
        let w = cfg.normal_sites[i].angle_bracket::<S>().powf(p);
        u_pert.u[cfg.n_tangential() + i] =
            u_pert.u[cfg.n_tangential() + i] + Complex::new(amp_share / w, S::zero());
    }

    let integrator = SpectralIntegrator::new(cfg, spec)?;
    let mut times = vec![S::zero()];
    let mut dist = vec![u_pert.sub(&u0).sobolev_norm(cfg, p)];
    let mut energy = vec![integrator.energy(&u_pert)];
    for direction in [S::one(), -S::one()] {
        let mut a = u0.clone();
        let mut b = u_pert.clone();
        let step = dt * direction;
        let n_steps = (t_end / dt).to_f64_lossy().round() as usize;
        let mut done = 0usize;
        while done < n_steps {
            let chunk = sample_every.min(n_steps - done);
            for _ in 0..chunk {
                integrator.step(&mut a, step);
                integrator.step(&mut b, step);
            }
            done += chunk;
            times.push(step * S::sc(done as f64));
            dist.push(b.sub(&a).sobolev_norm(cfg, p));
            energy.push(integrator.energy(&b));
        }
    }
    let c_of_t: Vec<S> = dist.iter().map(|&d| d / delta).collect();
    let sup_c = c_of_t.iter().copied().fold(S::zero(), S::max);
    let e0 = energy[0];
    let max_energy_drift = energy
        .iter()
        .map(|&e| ((e - e0) / e0.abs().max(S::sc(1e-300))).abs())
        .fold(S::zero(), S::max);
    Ok(CProfile {
        times,
        hp_distance: dist,
        c_of_t,
        energy,
        sup_c,
        max_energy_drift,
    })
}
