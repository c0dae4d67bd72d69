//! Shared helpers for the integration tests: deterministic random
//! polynomials and small lattice fixtures.
#![allow(dead_code)]

use std::sync::Arc;

use num_complex::Complex;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smallvec::SmallVec;

use kamnls_core::algebra::{Caps, LatticeConfig, MultiIndex, Site, TfPoly};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// d=2 box with two tangential sites, the standing small fixture.
pub fn small_lattice(box_radius: i16) -> Arc<LatticeConfig<f64>> {
    LatticeConfig::new(
        2,
        2.0,
        box_radius,
        vec![Site::new(&[0, 0]), Site::new(&[1, 0])],
    )
    .unwrap()
}

pub fn one_site_lattice() -> Arc<LatticeConfig<f64>> {
    LatticeConfig::new(1, 1.0, 2, vec![Site::new(&[1])]).unwrap()
}

/// Random multi-index within the caps, with weight at most `max_weight` and
/// Fourier entries at most `k_lim` in absolute value.
fn random_index(
    lattice: &LatticeConfig<f64>,
    caps: Caps,
    rng: &mut ChaCha8Rng,
    max_weight: u32,
    k_lim: i16,
) -> MultiIndex {
    let n_t = lattice.n_tangential();
    let n_slots = lattice.n_slots();
    loop {
        let k: SmallVec<[i16; 4]> = (0..n_t).map(|_| rng.gen_range(-k_lim..=k_lim)).collect();
        let mut alpha: SmallVec<[u8; 4]> = smallvec::smallvec![0; n_t];
        let mut beta: SmallVec<[(u16, u8); 6]> = SmallVec::new();
        let mut weight = 0u32;
        while weight < max_weight {
            if rng.gen_bool(0.4) {
                break;
            }
            if rng.gen_bool(0.35) && weight + 2 <= max_weight {
                alpha[rng.gen_range(0..n_t)] += 1;
                weight += 2;
            } else {
                let slot = rng.gen_range(0..n_slots) as u16;
                match beta.iter_mut().find(|(s, _)| *s == slot) {
                    Some((_, d)) => *d += 1,
                    None => beta.push((slot, 1)),
                }
                weight += 1;
            }
        }
        beta.sort_unstable();
        let idx = MultiIndex { k, alpha, beta };
        if caps.admits(&idx) {
            return idx;
        }
    }
}

/// Random polynomial satisfying the reality pairing.
pub fn random_real_poly(
    lattice: &Arc<LatticeConfig<f64>>,
    caps: Caps,
    rng: &mut ChaCha8Rng,
    n_terms: usize,
    max_weight: u32,
    k_lim: i16,
) -> TfPoly<f64> {
    let mut p = TfPoly::zero(lattice.clone(), caps);
    for _ in 0..n_terms {
        let idx = random_index(lattice, caps, rng, max_weight, k_lim);
        let c = Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let half = Complex::new(0.5, 0.0);
        p.insert_checked(idx.clone(), c * half).unwrap();
        p.insert_checked(idx.negate_k(), c.conj() * half).unwrap();
    }
    p
}

pub fn max_coeff_diff(a: &TfPoly<f64>, b: &TfPoly<f64>) -> f64 {
    let d = a.sub(b).unwrap();
    d.max_coeff()
}
