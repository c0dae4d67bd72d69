//! The iteration schedules: the geometric ladder of the inner normal-form
//! loop and the slowly-shrinking outer domain ladder whose radii stay
//! bounded below by half (a quarter for the action radius).

use serde::Serialize;

use crate::Scalar;

/// Inner-loop schedule for one outer step: `n = floor(ln 1/eps)` substeps
/// with a fixed cutoff and linearly interpolated radii.
#[derive(Clone, Debug, Serialize)]
pub struct InnerSchedule<S> {
    pub n: usize,
    /// eps_j = (eps / kappa^20) eps_{j-1}, starting at eps.
    pub eps: Vec<S>,
    pub gamma: Vec<S>,
    pub rho: Vec<S>,
    pub sigma: Vec<S>,
    pub mu: Vec<S>,
    pub lambda: Vec<S>,
    pub delta_prime: S,
}

impl<S: Scalar> InnerSchedule<S> {
    /// Build from the outer step's entry data. `cutoff_cap` bounds the
    /// cutoff when the schedule formula degenerates on the finite box
    /// (vanishing gamma decrement).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        eps: S,
        kappa: S,
        gamma: S,
        gamma_next: S,
        rho: S,
        rho_next: S,
        sigma: S,
        sigma_next: S,
        d_delta: S,
        lambda0: S,
        cutoff_cap: S,
    ) -> Self {
        let log_inv = (S::one() / eps).ln().max(S::zero());
        let n = log_inv.to_f64_lossy().floor().max(0.0) as usize;
        let dg = gamma - gamma_next;
        let dr = rho - rho_next;
        let denom = [dg, dr]
            .into_iter()
            .filter(|v| *v > S::zero())
            .fold(S::infinity(), S::min);
        let delta_prime = if denom.is_finite() {
            (S::sc(80.0) * log_inv * log_inv / denom).min(cutoff_cap)
        } else {
            cutoff_cap
        };
        let steps = n.max(1);
        let mut out = InnerSchedule {
            n,
            eps: vec![eps],
            gamma: vec![gamma],
            rho: vec![rho],
            sigma: vec![sigma],
            mu: vec![sigma * sigma],
            lambda: vec![lambda0],
            delta_prime,
        };
        let kappa20 = kappa.powi(20);
        for j in 1..=steps {
            let t = S::sc(j as f64 / steps as f64);
            out.eps.push(eps / kappa20 * out.eps[j - 1]);
            out.gamma.push(gamma - t * dg);
            out.rho.push(rho - t * dr);
            let sig = sigma - t * (sigma - sigma_next);
            out.sigma.push(sig);
            out.mu.push(sig * sig);
            out.lambda.push(out.lambda[j - 1] + d_delta + S::sc(30.0));
        }
        out
    }
}

/// Closed-form outer schedule: partial sums of 1/j^2 normalized by twice
/// the full series drive the radii from (rho, sigma, mu) down to exactly
/// half (a quarter for mu).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OuterSchedule<S> {
    pub rho: S,
    pub sigma: S,
}

impl<S: Scalar> OuterSchedule<S> {
    pub fn new(rho: S, sigma: S) -> Self {
        OuterSchedule { rho, sigma }
    }

    /// zeta(2) = pi^2 / 6.
    pub fn zeta2() -> S {
        let pi = S::PI();
        pi * pi / S::sc(6.0)
    }

    /// theta_m = (sum_{j<=m} 1/j^2) / (2 zeta(2)); theta_0 = 0.
    pub fn theta(m: usize) -> S {
        let mut partial = S::zero();
        for j in 1..=m {
            let jj = S::sc(j as f64);
            partial += S::one() / (jj * jj);
        }
        partial / (S::sc(2.0) * Self::zeta2())
    }

    pub fn rho_m(&self, m: usize) -> S {
        (S::one() - Self::theta(m)) * self.rho
    }

    pub fn sigma_m(&self, m: usize) -> S {
        (S::one() - Self::theta(m)) * self.sigma
    }

    pub fn mu_m(&self, m: usize) -> S {
        let s = self.sigma_m(m);
        s * s
    }

    /// The limit of theta_m: the full series over twice itself, one half
    /// exactly.
    pub fn theta_limit() -> S {
        Self::zeta2() / (S::sc(2.0) * Self::zeta2())
    }

    /// Limits of the radii ladder: (rho/2, mu/4, sigma/2).
    pub fn limit_radii(&self) -> (S, S, S) {
        let t = S::one() - Self::theta_limit();
        let rho = self.rho * t;
        let sigma = self.sigma * t;
        (rho, sigma * sigma, sigma)
    }
}

/// The outer-step divisor floor: `kappa_base * eps^{1/400}`, the base
/// scaled by the twentieth root of the twentieth root of eps.
pub fn kappa_for<S: Scalar>(eps: S, kappa_base: S) -> S {
    kappa_base * eps.powf(S::one() / S::sc(400.0))
}

/// The block-scale formula `80 (ln 1/eps)^2 / min(gamma, rho - rho_next)`.
pub fn delta_for<S: Scalar>(eps_prev: S, gamma_prev: S, rho_step: S) -> S {
    let log_inv = (S::one() / eps_prev).ln().max(S::zero());
    let denom = [gamma_prev, rho_step]
        .into_iter()
        .filter(|v| *v > S::zero())
        .fold(S::infinity(), S::min);
    if denom.is_finite() {
        S::sc(80.0) * log_inv * log_inv / denom
    } else {
        S::infinity()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules_match_an_independent_transcription() {
        // Straight re-implementation of the closed forms, kept separate on
        // purpose.
        let (eps, kappa) = (1e-5f64, 1e-2f64);
        let (gamma, gamma_next) = (0.1, 0.08);
        let (rho, rho_next) = (0.3, 0.27);
        let (sigma, sigma_next) = (0.3, 0.27);
        let d_delta = 4.0;
        let lambda0 = 1.0;
        let sched = InnerSchedule::new(
            eps, kappa, gamma, gamma_next, rho, rho_next, sigma, sigma_next, d_delta, lambda0,
            1e6,
        );
        let n = (1.0f64 / eps).ln().floor() as usize;
        assert_eq!(sched.n, n);
        let dp = 80.0 * (1.0f64 / eps).ln().powi(2) / (gamma - gamma_next).min(rho - rho_next);
        assert!((sched.delta_prime - dp).abs() < 1e-9 * dp);
        let mut e = eps;
        for j in 1..=n {
            e = eps / kappa.powi(20) * e;
            assert!((sched.eps[j] - e).abs() <= 1e-12 * e.abs().max(1e-300), "j={j}");
            let t = j as f64 / n as f64;
            assert!((sched.rho[j] - (rho - t * (rho - rho_next))).abs() < 1e-15);
            assert!((sched.gamma[j] - (gamma - t * (gamma - gamma_next))).abs() < 1e-15);
            let s = sigma - t * (sigma - sigma_next);
            assert!((sched.sigma[j] - s).abs() < 1e-15);
            assert!((sched.mu[j] - s * s).abs() < 1e-15);
            assert!((sched.lambda[j] - (lambda0 + j as f64 * (d_delta + 30.0))).abs() < 1e-12);
        }
        // outer: theta and the radii
        let outer = OuterSchedule::new(rho, sigma);
        for m in [0usize, 1, 2, 5, 17] {
            let partial: f64 = (1..=m).map(|j| 1.0 / (j as f64 * j as f64)).sum();
            let theta = partial / (2.0 * std::f64::consts::PI.powi(2) / 6.0);
            assert!((OuterSchedule::<f64>::theta(m) - theta).abs() < 1e-15);
            assert!((outer.rho_m(m) - (1.0 - theta) * rho).abs() < 1e-15);
            assert!((outer.mu_m(m) - ((1.0 - theta) * sigma).powi(2)).abs() < 1e-15);
        }
        // kappa scaling law: kappa^20 proportional to eps^{1/20}.
        let k = kappa_for(1e-5f64, 1e-2);
        assert!((k / 1e-2 - 1e-5f64.powf(1.0 / 400.0)).abs() < 1e-15);
    }

    #[test]
    fn outer_limits_are_half_radii() {
        let outer = OuterSchedule::new(0.3f64, 0.25);
        let (r, m, s) = outer.limit_radii();
        assert!((r - 0.15).abs() < 1e-12);
        assert!((s - 0.125).abs() < 1e-12);
        assert!((m - 0.015625).abs() < 1e-12);
    }
}
