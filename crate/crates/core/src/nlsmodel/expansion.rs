//! Expansion of the NLS Hamiltonian into the polynomial ring: the
//! quadratic part becomes the normal form, the nonlinearity expands over
//! momentum-conserving index tuples with the tangential factors pushed
//! through the action-angle chart (the square root Taylor-expanded in
//! r/q up to the r-degree cap).

use std::sync::Arc;

use num_complex::Complex;
use smallvec::SmallVec;

use super::NlsSpec;
use crate::algebra::{LatticeConfig, MultiIndex, Site, TfPoly};
use crate::error::Result;
use crate::lattice::{AssumptionConstants, LatticeMatrix, NormalForm};
use crate::{FxHashMap, Scalar};

/// Build the integrable part and the perturbation of the model:
/// `omega_a = |a|^2 + V(a)` on the tangential set, the same on the normal
/// box, vanishing correction, and `eps * integral of c(x) |u|^{2m+2}`
/// expanded over momentum-conserving tuples.
pub fn build_hamiltonian<S: Scalar>(
    spec: &NlsSpec<S>,
    cfg: &Arc<LatticeConfig<S>>,
) -> Result<(NormalForm<S>, TfPoly<S>)> {
    spec.validate(cfg)?;
    let omega: Vec<S> = cfg
        .tangential_sites
        .iter()
        .map(|s| S::sc(s.norm2() as f64) + spec.v_at(s))
        .collect();
    let big_omega: Vec<S> = cfg
        .normal_sites
        .iter()
        .map(|s| S::sc(s.norm2() as f64) + spec.v_at(s))
        .collect();
    let constants = derive_constants(&big_omega, cfg, spec);
    let nf = NormalForm {
        lattice: cfg.clone(),
        omega,
        big_omega,
        h: LatticeMatrix::zero(cfg.clone()),
        delta: S::sc(3.0),
        constants,
    };

    let mut f = TfPoly::zero(cfg.clone(), spec.caps);
    if spec.eps != S::zero() {
        expand_nonlinearity(spec, cfg, &mut f)?;
        f = f.scale_real(spec.eps);
    }
    Ok((nf, f))
}

fn derive_constants<S: Scalar>(
    big_omega: &[S],
    cfg: &LatticeConfig<S>,
    spec: &NlsSpec<S>,
) -> AssumptionConstants<S> {
    let c2 = S::one();
    let mut c1 = S::sc(0.5);
    for (i, s) in cfg.normal_sites.iter().enumerate() {
        let dist = (big_omega[i] - S::sc(s.norm2() as f64)).abs();
        let needed = dist * (c2 * S::sc((s.norm2() as f64).sqrt())).exp();
        c1 = c1.max(needed * S::sc(1.001));
    }
    let mut c3 = S::infinity();
    for (i, a) in cfg.normal_sites.iter().enumerate() {
        c3 = c3.min(big_omega[i].abs());
        for (j, b) in cfg.normal_sites.iter().enumerate() {
            c3 = c3.min((big_omega[i] + big_omega[j]).abs());
            if a.norm2() != b.norm2() {
                c3 = c3.min((big_omega[i] - big_omega[j]).abs());
            }
        }
    }
    let c3 = (c3 * S::sc(0.9)).max(S::sc(1e-6));
    let _ = spec;
    AssumptionConstants {
        c1,
        c2,
        c3,
        c4: S::one(),
        c5: S::one(),
    }
}

/// A multiset of site indices with its ordered-tuple multiplicity.
struct Multiset {
    sites: SmallVec<[usize; 4]>,
    weight: f64,
    momentum: Vec<i64>,
}

fn enumerate_multisets<S: Scalar>(cfg: &LatticeConfig<S>, order: usize) -> Vec<Multiset> {
    let all: Vec<&Site> = cfg.all_sites().collect();
    let n = all.len();
    let mut out = Vec::new();
    let mut stack: SmallVec<[usize; 4]> = SmallVec::new();
    fn rec<S: Scalar>(
        all: &[&Site],
        n: usize,
        order: usize,
        start: usize,
        stack: &mut SmallVec<[usize; 4]>,
        out: &mut Vec<Multiset>,
        dim: usize,
        _cfg: &LatticeConfig<S>,
    ) {
        if stack.len() == order {
            let mut momentum = vec![0i64; dim];
            for &i in stack.iter() {
                for (d, &c) in all[i].0.iter().enumerate() {
                    momentum[d] += c as i64;
                }
            }
            // (order)! / prod(multiplicities!)
            let mut weight = 1.0;
            for k in 1..=order {
                weight *= k as f64;
            }
            let mut run = 1usize;
            for w in stack.windows(2) {
                if w[0] == w[1] {
                    run += 1;
                    weight /= run as f64;
                } else {
                    run = 1;
                }
            }
            out.push(Multiset {
                sites: stack.clone(),
                weight,
                momentum,
            });
            return;
        }
        for i in start..n {
            stack.push(i);
            rec(all, n, order, i, stack, out, dim, _cfg);
            stack.pop();
        }
    }
    rec(&all, n, order, 0, &mut stack, &mut out, cfg.dim, cfg);
    out
}

/// Expand `sum over tuples u_{a_1}..u_{a_{m+1}} conj(u)_{b_1}..` with
/// momentum `sum a - sum b + g = 0` per x-mode g, into the polynomial ring.
fn expand_nonlinearity<S: Scalar>(
    spec: &NlsSpec<S>,
    cfg: &Arc<LatticeConfig<S>>,
    f: &mut TfPoly<S>,
) -> Result<()> {
    let order = (spec.m + 1) as usize;
    let multisets = enumerate_multisets(cfg, order);
    let mut by_momentum: FxHashMap<Vec<i64>, Vec<usize>> = FxHashMap::default();
    for (i, ms) in multisets.iter().enumerate() {
        by_momentum.entry(ms.momentum.clone()).or_default().push(i);
    }
    let n_t = cfg.n_tangential();
    for (g, cg) in &spec.x_coeffs {
        if *cg == S::zero() {
            continue;
        }
        // sum(U) + g = sum(V)
        for (mu, u_ids) in by_momentum.iter() {
            let target: Vec<i64> = mu
                .iter()
                .zip(g.0.iter())
                .map(|(&m, &gc)| m + gc as i64)
                .collect();
            let Some(v_ids) = by_momentum.get(&target) else {
                continue;
            };
            for &ui in u_ids {
                for &vi in v_ids {
                    let msu = &multisets[ui];
                    let msv = &multisets[vi];
                    let base = *cg * S::sc(msu.weight * msv.weight);
                    expand_tuple(spec, cfg, msu, msv, base, n_t, f)?;
                }
            }
        }
    }
    Ok(())
}

/// Expand one (U; V) tuple pair into monomials: per site, tangential
/// factors turn into Fourier shifts and the truncated sqrt series in r,
/// normal factors into binomial expansions of (xi +- i eta)/sqrt2.
fn expand_tuple<S: Scalar>(
    spec: &NlsSpec<S>,
    cfg: &Arc<LatticeConfig<S>>,
    msu: &Multiset,
    msv: &Multiset,
    base: S,
    n_t: usize,
    f: &mut TfPoly<S>,
) -> Result<()> {
    // site participation: (n_u, n_v) per distinct site index
    let mut participation: FxHashMap<usize, (u32, u32)> = FxHashMap::default();
    for &i in msu.sites.iter() {
        participation.entry(i).or_insert((0, 0)).0 += 1;
    }
    for &i in msv.sites.iter() {
        participation.entry(i).or_insert((0, 0)).1 += 1;
    }
    let mut sites: Vec<(usize, (u32, u32))> = participation.into_iter().collect();
    sites.sort_unstable();

    // working set of partial monomials
    let mut acc: Vec<(MultiIndex, Complex<S>)> = vec![(
        MultiIndex::constant(n_t),
        Complex::new(base, S::zero()),
    )];
    let all: Vec<&Site> = cfg.all_sites().collect();
    let deg_r = f.caps().deg_r as u32;
    let inv_sqrt2 = S::sc(1.0 / std::f64::consts::SQRT_2);
    for (site_idx, (nu, nv)) in sites {
        let site = all[site_idx];
        let mut next: Vec<(MultiIndex, Complex<S>)> = Vec::new();
        if let Some(t) = cfg.tangential_index_of(site) {
            // u^nu v^nv = (r+q)^{(nu+nv)/2} e^{i (nu-nv) phi}
            let s_tot = nu + nv;
            let q = spec.q[t];
            let half_pow = s_tot as f64 / 2.0;
            for j in 0..=deg_r.min(s_tot * 2 + deg_r) {
                let coeff = general_binomial(half_pow, j) * q.powf(S::sc(half_pow - j as f64));
                if coeff == S::zero() {
                    continue;
                }
                for (idx, c) in acc.iter() {
                    let mut m = idx.clone();
                    m.k[t] += nu as i16 - nv as i16;
                    m.alpha[t] += j as u8;
                    next.push((m, *c * Complex::new(coeff, S::zero())));
                }
            }
        } else {
            let nidx = cfg.normal_index_of(site).expect("normal site");
            let sxi = cfg.slot(nidx, crate::algebra::ZetaComponent::Xi);
            let seta = cfg.slot(nidx, crate::algebra::ZetaComponent::Eta);
            // (xi + i eta)^nu (xi - i eta)^nv / sqrt2^{nu+nv}
            let scale = inv_sqrt2.powi((nu + nv) as i32);
            let i_unit = Complex::new(S::zero(), S::one());
            for p in 0..=nu {
                for q2 in 0..=nv {
                    let xi_deg = p + q2;
                    let eta_deg = nu + nv - xi_deg;
                    let coeff = Complex::new(
                        S::sc(binomial(nu, p) * binomial(nv, q2)) * scale,
                        S::zero(),
                    ) * i_unit.powu(nu - p)
                        * (-i_unit).powu(nv - q2);
                    for (idx, c) in acc.iter() {
                        let mut m = idx.clone();
                        if xi_deg > 0 {
                            add_beta(&mut m, sxi, xi_deg as u8);
                        }
                        if eta_deg > 0 {
                            add_beta(&mut m, seta, eta_deg as u8);
                        }
                        next.push((m, *c * coeff));
                    }
                }
            }
        }
        acc = next;
    }
    for (idx, c) in acc {
        if f.caps().admits(&idx) {
            f.accumulate(idx, c);
        }
        // indices beyond the caps are the truncated tail of the expansion
    }
    Ok(())
}

fn add_beta(m: &mut MultiIndex, slot: u16, deg: u8) {
    match m.beta.iter_mut().find(|(s, _)| *s == slot) {
        Some((_, d)) => *d += deg,
        None => {
            m.beta.push((slot, deg));
            m.beta.sort_unstable();
        }
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut out = 1.0;
    for i in 0..k {
        out *= (n - i) as f64 / (i + 1) as f64;
    }
    out
}

/// Generalized binomial coefficient `C(x, k)` for real x.
fn general_binomial<S: Scalar>(x: f64, k: u32) -> S {
    let mut out = 1.0;
    for i in 0..k {
        out *= (x - i as f64) / (i + 1) as f64;
    }
    S::sc(out)
}
