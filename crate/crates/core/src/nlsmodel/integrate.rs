//! Strang-splitting spectral integrator for the Galerkin-truncated flow:
//! the linear half-steps rotate each mode exactly, the nonlinear step is an
//! exact pointwise phase rotation on a collocation grid sized to dealias
//! the cubic product, followed by projection back onto the model modes.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftNum, FftPlanner};

use super::{FieldState, NlsSpec};
use crate::algebra::LatticeConfig;
use crate::error::Result;
use crate::{CoreError, Scalar};

pub struct SpectralIntegrator<S: Scalar + FftNum> {
    cfg: Arc<LatticeConfig<S>>,
    eps: S,
    power_m: u32,
    n_axis: usize,
    dim: usize,
    n_total: usize,
    fwd: Arc<dyn Fft<S>>,
    inv: Arc<dyn Fft<S>>,
    /// Flattened grid index per model site.
    site_grid: Vec<usize>,
    /// Linear frequency |a|^2 + V(a) per model site.
    omega_lin: Vec<S>,
    /// x-coefficient of the nonlinearity on the grid.
    c_grid: Vec<S>,
}

/// Sampled trajectory points.
pub type Trajectory<S> = Vec<(S, FieldState<S>)>;

impl<S: Scalar + FftNum> SpectralIntegrator<S> {
    pub fn new(cfg: &Arc<LatticeConfig<S>>, spec: &NlsSpec<S>) -> Result<Self> {
        spec.validate(cfg)?;
        let r_eff = cfg
            .all_sites()
            .map(|s| s.sup_norm())
            .max()
            .unwrap_or(0)
            .max(cfg.box_radius) as usize;
        let min_n = 2 * (2 * r_eff + 1);
        let mut n_axis = 1usize;
        while n_axis < min_n {
            n_axis *= 2;
        }
        let dim = cfg.dim;
        let n_total = n_axis.pow(dim as u32);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n_axis);
        let inv = planner.plan_fft_inverse(n_axis);
        let flatten = |coords: &[usize]| -> usize {
            coords.iter().fold(0usize, |acc, &c| acc * n_axis + c)
        };
        let site_grid: Vec<usize> = cfg
            .all_sites()
            .map(|s| {
                let coords: Vec<usize> = s
                    .0
                    .iter()
                    .map(|&c| (c as i64).rem_euclid(n_axis as i64) as usize)
                    .collect();
                flatten(&coords)
            })
            .collect();
        if site_grid.len()
            != site_grid
                .iter()
                .collect::<std::collections::HashSet<_>>()
                .len()
        {
            return Err(CoreError::Config(
                "grid too small: distinct sites alias to one grid mode".into(),
            ));
        }
        let omega_lin: Vec<S> = cfg
            .all_sites()
            .map(|s| S::sc(s.norm2() as f64) + spec.v_at(s))
            .collect();
        // c(x) on the grid: a short real Fourier sum.
        let mut c_grid = vec![S::zero(); n_total];
        let two_pi = S::sc(2.0) * S::PI();
        for (j, cj) in c_grid.iter_mut().enumerate() {
            let mut rem = j;
            let mut coords = vec![0usize; dim];
            for d in (0..dim).rev() {
                coords[d] = rem % n_axis;
                rem /= n_axis;
            }
            let mut val = S::zero();
            for (g, cg) in &spec.x_coeffs {
                let mut phase = S::zero();
                for (d, &gc) in g.0.iter().enumerate() {
                    phase += S::sc(gc as f64) * two_pi * S::sc(coords[d] as f64)
                        / S::sc(n_axis as f64);
                }
                val += *cg * phase.cos();
            }
            *cj = val;
        }
        Ok(SpectralIntegrator {
            cfg: cfg.clone(),
            eps: spec.eps,
            power_m: spec.m,
            n_axis,
            dim,
            n_total,
            fwd,
            inv,
            site_grid,
            omega_lin,
            c_grid,
        })
    }

    pub fn grid_points(&self) -> usize {
        self.n_total
    }

    fn fft_all_axes(&self, data: &mut [Complex<S>], forward: bool) {
        let n = self.n_axis;
        let fft = if forward { &self.fwd } else { &self.inv };
        let mut line = vec![Complex::new(S::zero(), S::zero()); n];
        // Row-major layout: axis d has stride n^{dim-1-d}.
        for d in 0..self.dim {
            let stride = n.pow((self.dim - 1 - d) as u32);
            let outer = self.n_total / (n * stride);
            for o in 0..outer {
                for inner in 0..stride {
                    let base = o * n * stride + inner;
                    for (t, l) in line.iter_mut().enumerate() {
                        *l = data[base + t * stride];
                    }
                    fft.process(&mut line);
                    for (t, l) in line.iter().enumerate() {
                        data[base + t * stride] = *l;
                    }
                }
            }
        }
    }

    /// Collocation values of the field (unnormalized inverse transform of
    /// the modes placed on the grid).
    fn to_grid(&self, u: &[Complex<S>]) -> Vec<Complex<S>> {
        let mut grid = vec![Complex::new(S::zero(), S::zero()); self.n_total];
        for (site, &gidx) in self.site_grid.iter().enumerate() {
            grid[gidx] = u[site];
        }
        self.fft_all_axes(&mut grid, false);
        grid
    }

    fn from_grid(&self, grid: &mut [Complex<S>], u: &mut [Complex<S>]) {
        self.fft_all_axes(grid, true);
        let scale = Complex::new(S::one() / S::sc(self.n_total as f64), S::zero());
        for (site, &gidx) in self.site_grid.iter().enumerate() {
            u[site] = grid[gidx] * scale;
        }
    }

    /// One Strang step of size dt (negative dt integrates backwards).
    pub fn step(&self, state: &mut FieldState<S>, dt: S) {
        let half = dt / S::sc(2.0);
        for (ua, &w) in state.u.iter_mut().zip(self.omega_lin.iter()) {
            let ph = Complex::new((w * half).cos(), -(w * half).sin());
            *ua = *ua * ph;
        }
        if self.eps != S::zero() {
            let mut grid = self.to_grid(&state.u);
            let strength = self.eps * S::sc(self.power_m as f64 + 1.0) * dt;
            for (v, &c) in grid.iter_mut().zip(self.c_grid.iter()) {
                let amp2 = v.norm_sqr();
                let theta = strength * c * amp2.powi(self.power_m as i32);
                let ph = Complex::new(theta.cos(), -theta.sin());
                *v = *v * ph;
            }
            self.from_grid(&mut grid, &mut state.u);
        }
        for (ua, &w) in state.u.iter_mut().zip(self.omega_lin.iter()) {
            let ph = Complex::new((w * half).cos(), -(w * half).sin());
            *ua = *ua * ph;
        }
        state.t += dt;
    }

    /// Conserved energy of the truncated flow: the quadratic form plus the
    /// grid mean of the nonlinearity.
    pub fn energy(&self, state: &FieldState<S>) -> S {
        let mut e: S = state
            .u
            .iter()
            .zip(self.omega_lin.iter())
            .map(|(ua, &w)| w * ua.norm_sqr())
            .sum();
        if self.eps != S::zero() {
            let grid = self.to_grid(&state.u);
            let mut nl = S::zero();
            for (v, &c) in grid.iter().zip(self.c_grid.iter()) {
                nl += c * v.norm_sqr().powi(self.power_m as i32 + 1);
            }
            e += self.eps * nl / S::sc(self.n_total as f64);
        }
        e
    }

    /// H^0 norm of the field (conserved by both subflows).
    pub fn mass(&self, state: &FieldState<S>) -> S {
        state.sobolev_norm(&self.cfg, S::zero())
    }

    /// Integrate to `t_end`, sampling every `sample_every` steps.
    pub fn integrate(
        &self,
        state: &FieldState<S>,
        dt: S,
        t_end: S,
        sample_every: usize,
    ) -> Trajectory<S> {
        let mut cur = state.clone();
        let n_steps = (t_end / dt).abs().to_f64_lossy().round() as usize;
        let mut out = vec![(cur.t, cur.clone())];
        let mut done = 0;
        while done < n_steps {
            let chunk = sample_every.min(n_steps - done);
            for _ in 0..chunk {
                self.step(&mut cur, dt);
            }
            done += chunk;
            out.push((cur.t, cur.clone()));
        }
        out
    }
}
