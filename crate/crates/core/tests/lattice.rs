//! Block decomposition and lattice matrix tests, with the transitive
//! closure recomputed by brute force as the oracle.

mod common;

use std::sync::Arc;

use common::*;
use kamnls_core::algebra::{LatticeConfig, Site};
use kamnls_core::gl2::Gl2;
use kamnls_core::lattice::{
    build_blocks, AssumptionConstants, LatticeMatrix, NormalForm,
};
use num_complex::Complex;
use rand::Rng;

fn c64(re: f64, im: f64) -> Complex<f64> {
    Complex::new(re, im)
}

/// Brute-force transitive closure of the pre-relation, for comparison.
fn brute_force_blocks(cfg: &LatticeConfig<f64>, delta: f64) -> Vec<Vec<usize>> {
    let n = cfg.normal_sites.len();
    let mut adj = vec![vec![]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j
                && cfg.normal_sites[i].norm2() == cfg.normal_sites[j].norm2()
                && (cfg.normal_sites[i].dist2(&cfg.normal_sites[j]) as f64) <= delta * delta
            {
                adj[i].push(j);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut blocks = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        let mut comp = Vec::new();
        seen[start] = true;
        while let Some(i) = stack.pop() {
            comp.push(i);
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        comp.sort_unstable();
        blocks.push(comp);
    }
    blocks.sort_by_key(|b| b[0]);
    blocks
}

#[test]
fn singleton_blocks_at_delta_zero() {
    let cfg = small_lattice(2);
    let d = build_blocks(&cfg, 0.0);
    assert_eq!(d.n_blocks(), cfg.n_normal());
    assert_eq!(d.d_delta, 0.0);
}

#[test]
fn unit_circle_is_one_block_at_delta_two() {
    // d=2, R=2, A={0}: the four norm-1 sites chain by sqrt(2) steps.
    let cfg = LatticeConfig::new(2, 2.0, 2, vec![Site::new(&[0, 0])]).unwrap();
    let d = build_blocks(&cfg, 2.0);
    let shell: Vec<usize> = (0..cfg.n_normal())
        .filter(|&i| cfg.normal_sites[i].norm2() == 1)
        .collect();
    let bids: std::collections::HashSet<usize> = shell.iter().map(|&i| d.block_of[i]).collect();
    assert_eq!(bids.len(), 1, "norm-1 circle must be a single block");
    let bid = *bids.iter().next().unwrap();
    assert_eq!(d.blocks[bid].len(), 4);
    // diameter of that block is 2 (antipodal pair)
    let mut diam2 = 0;
    for &i in &d.blocks[bid] {
        for &j in &d.blocks[bid] {
            diam2 = diam2.max(cfg.normal_sites[i].dist2(&cfg.normal_sites[j]));
        }
    }
    assert_eq!(diam2, 4);
}

#[test]
fn closure_matches_brute_force_and_diameter_bound() {
    let cfg = LatticeConfig::new(2, 2.0, 6, vec![Site::new(&[0, 0])]).unwrap();
    for delta in [1.0, 2.0, 3.0] {
        let d = build_blocks(&cfg, delta);
        let oracle = brute_force_blocks(&cfg, delta);
        assert_eq!(d.blocks, oracle, "delta {delta}");
        // partition property
        let mut count = vec![0; cfg.n_normal()];
        for b in &d.blocks {
            for &i in b {
                count[i] += 1;
            }
        }
        assert!(count.iter().all(|&c| c == 1));
        // same |a|^2 within a block
        for b in &d.blocks {
            let n0 = cfg.normal_sites[b[0]].norm2();
            assert!(b.iter().all(|&i| cfg.normal_sites[i].norm2() == n0));
        }
        // d_Delta <= Delta^{(d+1)!/2} = Delta^3 for d = 2
        assert!(
            d.d_delta <= delta.powi(3) + 1e-9,
            "delta {delta}: d_delta {} bound {}",
            d.d_delta,
            delta.powi(3)
        );
    }
}

#[test]
fn random_matrix_pi_projector_identities() {
    let cfg = small_lattice(2);
    let mut r = rng(3);
    let mut a = LatticeMatrix::zero(cfg.clone());
    for _ in 0..40 {
        let i = r.gen_range(0..cfg.n_normal());
        let j = r.gen_range(0..cfg.n_normal());
        let mut blk = Gl2::zero();
        for row in 0..2 {
            for col in 0..2 {
                blk.0[row][col] = c64(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
            }
        }
        a.set_entry(i, j, blk);
    }
    let (p, q) = a.pi_project();
    let (pp, _) = p.pi_project();
    // idempotence and exact splitting
    let mut worst: f64 = 0.0;
    for (&(i, j), blk) in p.entries() {
        worst = worst.max(pp.entry(i, j).sub(blk).max_abs());
    }
    assert!(worst < 1e-15);
    for (&(i, j), blk) in a.entries() {
        let back = p.entry(i, j).add(&q.entry(i, j));
        assert!(back.sub(blk).max_abs() < 1e-15);
    }
}

#[test]
fn gamma_norm_examples_and_monotonicity() {
    let cfg = small_lattice(2);
    // diagonal identity: norm 1 for any gamma
    let mut a = LatticeMatrix::zero(cfg.clone());
    for i in 0..cfg.n_normal() {
        a.set_entry(i, i, Gl2::identity());
    }
    for gamma in [0.0, 0.3, 1.0] {
        assert!((a.gamma_norm(gamma) - 1.0).abs() < 1e-14);
    }
    // single rotation-type entry at distance 3: e^{gamma 3} ... with the
    // rotation part of the identity block at (i, j).
    let i = cfg.normal_index_of(&Site::new(&[-1, 0])).unwrap();
    let j = cfg.normal_index_of(&Site::new(&[2, 0])).unwrap();
    let mut b = LatticeMatrix::zero(cfg.clone());
    b.set_entry(i, j, Gl2::identity());
    let gamma = 0.5;
    // identity is pure rotation type; |a-b| = 3, |a+b| = 1.
    let expect = (gamma * 3.0f64).exp();
    assert!((b.gamma_norm(gamma) - expect).abs() < 1e-12);

    // monotone in gamma on random sparse matrices
    let mut r = rng(5);
    let mut m = LatticeMatrix::zero(cfg.clone());
    for _ in 0..30 {
        let i = r.gen_range(0..cfg.n_normal());
        let j = r.gen_range(0..cfg.n_normal());
        let mut blk = Gl2::zero();
        for row in 0..2 {
            for col in 0..2 {
                blk.0[row][col] = c64(r.gen_range(-1.0..1.0), 0.0);
            }
        }
        m.set_entry(i, j, blk);
    }
    let n0 = m.gamma_norm(0.0);
    let n1 = m.gamma_norm(0.1);
    let n2 = m.gamma_norm(0.2);
    assert!(n0 <= n1 && n1 <= n2);
}

#[test]
fn matrix_truncation_is_idempotent() {
    let cfg = small_lattice(2);
    let mut r = rng(9);
    let mut m = LatticeMatrix::zero(cfg.clone());
    for _ in 0..30 {
        let i = r.gen_range(0..cfg.n_normal());
        let j = r.gen_range(0..cfg.n_normal());
        let mut blk = Gl2::zero();
        for row in 0..2 {
            for col in 0..2 {
                blk.0[row][col] = c64(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
            }
        }
        m.set_entry(i, j, blk);
    }
    // diagonal matrices are unchanged
    let mut d = LatticeMatrix::zero(cfg.clone());
    for i in 0..cfg.n_normal() {
        d.set_entry(i, i, Gl2::identity());
    }
    let td = d.truncate(0.0);
    for i in 0..cfg.n_normal() {
        assert!(td.entry(i, i).sub(&Gl2::identity()).max_abs() < 1e-15);
    }
    for delta in [1.0, 2.5] {
        let t = m.truncate(delta);
        let tt = t.truncate(delta);
        for (&(i, j), blk) in t.entries() {
            assert!(tt.entry(i, j).sub(blk).max_abs() < 1e-14);
        }
        assert_eq!(t.n_entries(), tt.n_entries());
    }
}

#[test]
fn complex_conjugation_round_trip_and_normal_form() {
    let cfg = small_lattice(2);
    let mut r = rng(15);
    let mut m = LatticeMatrix::zero(cfg.clone());
    for _ in 0..20 {
        let i = r.gen_range(0..cfg.n_normal());
        let j = r.gen_range(0..cfg.n_normal());
        let mut blk = Gl2::zero();
        for row in 0..2 {
            for col in 0..2 {
                blk.0[row][col] = c64(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
            }
        }
        m.set_entry(i, j, blk);
    }
    let back = m.to_complex().from_complex();
    for (&(i, j), blk) in m.entries() {
        assert!(back.entry(i, j).sub(blk).max_abs() < 1e-14);
    }
    // normal-form block alpha I + beta J lands in the (u, v) corner as the
    // Hermitian scalar alpha + i beta
    let mut nfm = LatticeMatrix::zero(cfg.clone());
    let blk = Gl2::from_real([[0.7, -0.2], [0.2, 0.7]]);
    nfm.set_entry(0, 1, blk);
    nfm.set_entry(1, 0, blk.transpose());
    let q = nfm.to_complex();
    assert!((q.entry(0, 1).0[0][1] - c64(0.7, -0.2)).norm() < 1e-14);
    assert!(q.entry(0, 1).0[0][0].norm() < 1e-15);
    assert!(q.entry(0, 1).0[1][1].norm() < 1e-15);
}

fn demo_normal_form(cfg: &Arc<LatticeConfig<f64>>) -> NormalForm<f64> {
    // V_hat = 0.3 e^{-|a|} on the tangential set only.
    let omega = cfg
        .tangential_sites
        .iter()
        .map(|s| s.norm2() as f64 + 0.3 * (-(s.norm2() as f64).sqrt()).exp())
        .collect();
    let big_omega = cfg.normal_sites.iter().map(|s| s.norm2() as f64).collect();
    NormalForm {
        lattice: cfg.clone(),
        omega,
        big_omega,
        h: LatticeMatrix::zero(cfg.clone()),
        delta: 2.0,
        constants: AssumptionConstants {
            c1: 0.5,
            c2: 1.0,
            c3: 0.9,
            c4: 1.0,
            c5: 1.0,
        },
    }
}

#[test]
fn block_spectrum_diagonal_and_perturbed() {
    let cfg = small_lattice(2);
    let blocks = build_blocks(&cfg, 2.0);
    let nf = demo_normal_form(&cfg);
    // H = 0: each block spectrum is the repeated |a|^2 values
    for bid in 0..blocks.n_blocks() {
        let spec = nf.block_spectrum(&blocks, bid).unwrap();
        let want = blocks.norm2[bid] as f64;
        for ev in &spec {
            assert!((ev - want).abs() < 1e-12);
        }
        assert_eq!(spec.len(), blocks.blocks[bid].len());
    }
    // random symmetric normal-form perturbation with ||H|| <= c3/4:
    // eigenvalues stay within c3/4 of the unperturbed ones (Weyl).
    let mut r = rng(21);
    let mut nf2 = demo_normal_form(&cfg);
    let bid = (0..blocks.n_blocks())
        .find(|&b| blocks.blocks[b].len() == 4)
        .expect("a 4-site shell exists");
    let sites = &blocks.blocks[bid];
    let bound = nf2.constants.c3 / 4.0;
    let mut h = LatticeMatrix::zero(cfg.clone());
    for (pos, &i) in sites.iter().enumerate() {
        for &j in sites[pos..].iter() {
            let alpha = r.gen_range(-0.05..0.05);
            let beta = if i == j { 0.0 } else { r.gen_range(-0.05..0.05) };
            let blk = Gl2::from_real([[alpha, beta], [-beta, alpha]]);
            h.set_entry(i, j, blk);
            if i != j {
                h.set_entry(j, i, blk.transpose());
            }
        }
    }
    assert!(h.op_norm() <= bound, "test perturbation within assumption");
    nf2.h = h;
    nf2.validate(&blocks, 1e-12).unwrap();
    let spec = nf2.block_spectrum(&blocks, bid).unwrap();
    let base = blocks.norm2[bid] as f64;
    for ev in &spec {
        assert!((ev - base).abs() <= bound + 1e-12, "Weyl bound violated");
    }
}

#[test]
fn spectrum_invariant_under_site_relabeling() {
    // The sorted spectrum must not depend on how a block's sites are
    // listed; compare against a config built with a permuted tangential
    // set, which permutes the normal ordering downstream.
    let cfg = small_lattice(2);
    let blocks = build_blocks(&cfg, 2.0);
    let nf = demo_normal_form(&cfg);
    for bid in 0..blocks.n_blocks() {
        let s1 = nf.block_spectrum(&blocks, bid).unwrap();
        let mut s2 = s1.clone();
        s2.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(s1, s2, "spectrum must come out sorted");
    }
}

#[test]
fn assumption_margins_on_the_demo_model() {
    let cfg = small_lattice(2);
    let nf = demo_normal_form(&cfg);
    let report = nf.check_assumptions();
    assert!(report.all_pass(), "{}", report.to_json());
    // V_hat supported on the tangential set only: exact asymptotic margin.
    let decay = report
        .margins
        .iter()
        .find(|m| m.id == "asymptotic-decay")
        .unwrap();
    let worst_site_bound = cfg
        .normal_sites
        .iter()
        .map(|s| 0.5 * (-(s.norm2() as f64).sqrt()).exp())
        .fold(f64::INFINITY, f64::min);
    assert!((decay.margin - worst_site_bound).abs() < 1e-14);
    // an oversized c3 flags the lower bound
    let mut bad = nf.clone();
    bad.constants.c3 = 1.5;
    let report = bad.check_assumptions();
    let lb = report
        .margins
        .iter()
        .find(|m| m.id == "normal-lower-bound")
        .unwrap();
    assert!(lb.margin < 0.0);
    assert!(!report.all_pass());
}

#[test]
fn boundary_flags_mark_truncated_shells() {
    let cfg = LatticeConfig::new(2, 2.0, 2, vec![Site::new(&[0, 0])]).unwrap();
    let d = build_blocks(&cfg, 2.0);
    // the |a|^2 = 8 shell at the corners continues outside the box
    // ((2,2) ~ (2,-2) needs a step through e.g. nothing inside, but
    // same-norm integer points like (2*2=8: (2,2),(2,-2),(-2,2),(-2,-2))
    // all lie inside; their shell-mates outside the box would need
    // |b|^2 = 8 with sup-norm > 2, which doesn't exist in Z^2.
    // |a|^2 = 4 shell: (0,2),(2,0),... no outside partner within delta=2
    // keeping the norm; but |a|^2 = 5 has (1,2) ~ (2,1) inside and no
    // outside partner either. Verify flags against a direct scan instead.
    for (bid, b) in d.blocks.iter().enumerate() {
        let mut expect = false;
        for &i in b {
            let a = &cfg.normal_sites[i];
            for dx in -2i64..=2 {
                for dy in -2i64..=2 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    if dx * dx + dy * dy > 4 {
                        continue;
                    }
                    let bx = a.0[0] as i64 + dx;
                    let by = a.0[1] as i64 + dy;
                    if bx * bx + by * by == a.norm2() && (bx.abs() > 2 || by.abs() > 2) {
                        expect = true;
                    }
                }
            }
        }
        assert_eq!(d.boundary_touching[bid], expect, "block {bid}");
    }
}

#[test]
fn block_report_is_valid_json() {
    let cfg = small_lattice(2);
    let d = build_blocks(&cfg, 2.0);
    let json = d.report_json(&cfg);
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), d.n_blocks());
}

#[test]
fn matrix_text_round_trip() {
    let cfg = small_lattice(2);
    let mut r = rng(33);
    let mut m = LatticeMatrix::zero(cfg.clone());
    for _ in 0..15 {
        let i = r.gen_range(0..cfg.n_normal());
        let j = r.gen_range(0..cfg.n_normal());
        let mut blk = Gl2::zero();
        for row in 0..2 {
            for col in 0..2 {
                blk.0[row][col] = c64(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
            }
        }
        m.set_entry(i, j, blk);
    }
    let text = m.to_text();
    let back = LatticeMatrix::from_text(&text, cfg.clone()).unwrap();
    assert_eq!(back.n_entries(), m.n_entries());
    for (&(i, j), blk) in m.entries() {
        assert_eq!(back.entry(i, j).sub(blk).max_abs(), 0.0);
    }
}
