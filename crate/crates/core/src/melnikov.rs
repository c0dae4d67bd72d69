//! Parameter-set management: sample the cube [-1,1]^A, test the
//! non-resonance conditions at a given floor and cutoff, carve the
//! surviving set and report empirical measure estimates.

use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::KVec;
use crate::homology::StepParams;
use crate::lattice::{BlockDecomposition, NormalForm};
use crate::Scalar;

/// One exclusion event: which condition failed, at which mode and blocks.
#[derive(Clone, Debug, Serialize)]
pub struct ExclusionRecord<S> {
    pub iteration: usize,
    pub condition: String,
    pub k: Vec<i16>,
    pub block_a: Option<usize>,
    pub block_b: Option<usize>,
    pub margin: S,
}

/// Grid over the parameter cube with liveness mask and exclusion history.
#[derive(Clone, Debug)]
pub struct ParameterGrid<S: Scalar> {
    pub points: Vec<Vec<S>>,
    pub alive: Vec<bool>,
    pub history: Vec<Vec<ExclusionRecord<S>>>,
}

impl<S: Scalar> ParameterGrid<S> {
    pub fn from_points(points: Vec<Vec<S>>) -> Self {
        let n = points.len();
        ParameterGrid {
            points,
            alive: vec![true; n],
            history: vec![Vec::new(); n],
        }
    }

    /// Uniform grid, `n_per_axis` points per axis of [-1,1]^dim.
    pub fn uniform(n_per_axis: usize, dim: usize) -> Self {
        assert!(n_per_axis >= 1);
        let mut points = Vec::new();
        let mut idx = vec![0usize; dim];
        loop {
            let p: Vec<S> = idx
                .iter()
                .map(|&i| {
                    if n_per_axis == 1 {
                        S::zero()
                    } else {
                        S::sc(-1.0 + 2.0 * i as f64 / (n_per_axis - 1) as f64)
                    }
                })
                .collect();
            points.push(p);
            let mut axis = dim;
            loop {
                if axis == 0 {
                    return Self::from_points(points);
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < n_per_axis {
                    break;
                }
                idx[axis] = 0;
            }
        }
    }

    /// Low-discrepancy (Halton) sample of the cube, for higher-dimensional
    /// tangential sets.
    pub fn halton(n_points: usize, dim: usize) -> Self {
        const PRIMES: [u64; 6] = [2, 3, 5, 7, 11, 13];
        let radical_inverse = |mut n: u64, base: u64| -> f64 {
            let mut inv = 0.0;
            let mut denom = 1.0;
            while n > 0 {
                denom *= base as f64;
                inv += (n % base) as f64 / denom;
                n /= base;
            }
            inv
        };
        let points = (1..=n_points as u64)
            .map(|n| {
                (0..dim)
                    .map(|d| S::sc(2.0 * radical_inverse(n, PRIMES[d % PRIMES.len()]) - 1.0))
                    .collect()
            })
            .collect();
        Self::from_points(points)
    }

    /// Default sampling: uniform per axis up to two tangential sites, a
    /// Halton sample of the same cardinality above.
    pub fn default_for(dim: usize, n_per_axis: usize) -> Self {
        if dim <= 2 {
            Self::uniform(n_per_axis, dim)
        } else {
            Self::halton(n_per_axis * n_per_axis, dim)
        }
    }

    pub fn n_alive(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn first_alive(&self) -> Option<usize> {
        self.alive.iter().position(|&a| a)
    }

    pub fn kill(&mut self, idx: usize, record: ExclusionRecord<S>) {
        self.alive[idx] = false;
        self.history[idx].push(record);
    }
}

/// Outcome of checking the non-resonance conditions at one parameter point.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionVerdict<S> {
    pub pass: bool,
    /// min over all checks of |divisor| - kappa.
    pub min_margin: S,
    pub witness_condition: String,
    pub witness_k: Vec<i16>,
    pub witness_block_a: Option<usize>,
    pub witness_block_b: Option<usize>,
}

/// Enumerate nonzero integer vectors with |k|_2 <= cutoff.
pub fn enumerate_modes(dim: usize, cutoff: f64) -> Vec<KVec> {
    let lim = cutoff.floor() as i64;
    let mut out = Vec::new();
    let mut k = vec![-lim; dim];
    'outer: loop {
        let n2: i64 = k.iter().map(|&x| x * x).sum();
        if n2 != 0 && (n2 as f64) <= cutoff * cutoff {
            out.push(k.iter().map(|&x| x as i16).collect());
        }
        for axis in (0..dim).rev() {
            if k[axis] < lim {
                k[axis] += 1;
                continue 'outer;
            }
            k[axis] = -lim;
        }
        break;
    }
    out.sort();
    out
}

/// Evaluate the four non-resonance conditions at the given normal form:
/// for every nonzero mode within the cutoff, the frequency combination, the
/// combination shifted by one block eigenvalue, by a sum of two, and by a
/// difference of two (the last restricted to block pairs within
/// `cutoff + 2 d_Delta`) must all stay at least `kappa` in magnitude.
pub fn check_conditions<S: Scalar>(
    nf: &NormalForm<S>,
    blocks: &BlockDecomposition<S>,
    sp: &StepParams<S>,
) -> crate::error::Result<ConditionVerdict<S>> {
    let spectra: Vec<Vec<S>> = (0..blocks.n_blocks())
        .map(|b| {
            let mut evs = nf.block_spectrum(blocks, b)?;
            evs.dedup();
            Ok(evs)
        })
        .collect::<crate::error::Result<_>>()?;
    let modes = enumerate_modes(nf.lattice.n_tangential(), sp.delta_prime.to_f64_lossy());
    let dist_bound = sp.delta_prime + S::sc(2.0) * blocks.d_delta;
    let n_blocks = blocks.n_blocks();
    let mut near: Vec<Vec<usize>> = vec![Vec::new(); n_blocks];
    for a in 0..n_blocks {
        for b in 0..n_blocks {
            if blocks.block_distance(&nf.lattice, a, b) <= dist_bound {
                near[a].push(b);
            }
        }
    }
    let mut best = ConditionVerdict {
        pass: true,
        min_margin: S::infinity(),
        witness_condition: String::new(),
        witness_k: Vec::new(),
        witness_block_a: None,
        witness_block_b: None,
    };
    fn consider<S: Scalar>(
        value: S,
        kappa: S,
        cond: &str,
        k: &KVec,
        ba: Option<usize>,
        bb: Option<usize>,
        best: &mut ConditionVerdict<S>,
    ) {
        let margin = value.abs() - kappa;
        if margin < best.min_margin {
            best.min_margin = margin;
            best.witness_condition = cond.to_string();
            best.witness_k = k.to_vec();
            best.witness_block_a = ba;
            best.witness_block_b = bb;
            if margin < S::zero() {
                best.pass = false;
            }
        }
    }
    for k in &modes {
        let kw: S = k
            .iter()
            .zip(nf.omega.iter())
            .map(|(&ki, &w)| S::sc(ki as f64) * w)
            .sum();
        consider(kw, sp.kappa, "k", k, None, None, &mut best);
        if !best.pass {
            return Ok(best);
        }
        for (ba, evs_a) in spectra.iter().enumerate() {
            for &alpha in evs_a {
                consider(kw + alpha, sp.kappa, "k+alpha", k, Some(ba), None, &mut best);
                if !best.pass {
                    return Ok(best);
                }
            }
        }
        for (ba, evs_a) in spectra.iter().enumerate() {
            for bb in ba..n_blocks {
                for &alpha in evs_a {
                    for &beta in &spectra[bb] {
                        consider(
                            kw + alpha + beta,
                            sp.kappa,
                            "k+alpha+beta",
                            k,
                            Some(ba),
                            Some(bb),
                            &mut best,
                        );
                        if !best.pass {
                            return Ok(best);
                        }
                    }
                }
            }
            for &bb in &near[ba] {
                for &alpha in evs_a {
                    for &beta in &spectra[bb] {
                        consider(
                            kw + alpha - beta,
                            sp.kappa,
                            "k+alpha-beta",
                            k,
                            Some(ba),
                            Some(bb),
                            &mut best,
                        );
                        if !best.pass {
                            return Ok(best);
                        }
                    }
                }
            }
        }
    }
    Ok(best)
}

/// Summary of one carve pass.
#[derive(Clone, Debug, Serialize)]
pub struct CarveOutcome<S> {
    pub kappa: S,
    pub total: usize,
    pub alive: usize,
    pub excluded_fraction: S,
}

/// Mark failing points dead, with reproducible witnesses. Monotone: a point
/// once dead never comes back.
pub fn carve<S: Scalar>(
    grid: &mut ParameterGrid<S>,
    nf_builder: impl Fn(&[S]) -> NormalForm<S> + Sync,
    blocks: &BlockDecomposition<S>,
    sp: &StepParams<S>,
    iteration: usize,
) -> crate::error::Result<CarveOutcome<S>> {
    let verdicts: Vec<Option<ConditionVerdict<S>>> = grid
        .points
        .par_iter()
        .zip(grid.alive.par_iter())
        .map(|(w, &alive)| {
            if !alive {
                return Ok(None);
            }
            let nf = nf_builder(w);
            check_conditions(&nf, blocks, sp).map(Some)
        })
        .collect::<crate::error::Result<_>>()?;
    for (idx, verdict) in verdicts.into_iter().enumerate() {
        if let Some(v) = verdict {
            if !v.pass {
                grid.kill(
                    idx,
                    ExclusionRecord {
                        iteration,
                        condition: v.witness_condition,
                        k: v.witness_k,
                        block_a: v.witness_block_a,
                        block_b: v.witness_block_b,
                        margin: v.min_margin,
                    },
                );
            }
        }
    }
    let total = grid.points.len();
    let alive = grid.n_alive();
    Ok(CarveOutcome {
        kappa: sp.kappa,
        total,
        alive,
        excluded_fraction: S::sc((total - alive) as f64 / total as f64),
    })
}

/// Least-squares fit of `fraction ~ C kappa^e` over the positive samples.
/// Returns (C, e), or None with fewer than two usable points.
pub fn fit_measure_exponent<S: Scalar>(kappas: &[S], fractions: &[S]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = kappas
        .iter()
        .zip(fractions.iter())
        .filter(|(_, &f)| f > S::zero())
        .map(|(&k, &f)| (k.to_f64_lossy().ln(), f.to_f64_lossy().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return None;
    }
    let e = (n * sxy - sx * sy) / denom;
    let logc = (sy - e * sx) / n;
    Some((logc.exp(), e))
}
