//! Homological-equation tests: the per-component closed forms, the grading
//! audit of the coupling, and the full back-substitution residual oracle on
//! a desk-scale instance.

mod common;

use std::sync::Arc;

use common::*;
use kamnls_core::algebra::{Caps, DomainRadii, LatticeConfig, MultiIndex, Site, TfPoly, ZetaComponent};
use kamnls_core::gl2::Gl2;
use kamnls_core::homology::{solve_homological, StepParams};
use kamnls_core::lattice::{build_blocks, AssumptionConstants, LatticeMatrix, NormalForm};
use kamnls_core::CoreError;
use num_complex::Complex;
use rand::Rng;

fn c64(re: f64, im: f64) -> Complex<f64> {
    Complex::new(re, im)
}

fn desk_lattice() -> Arc<LatticeConfig<f64>> {
    LatticeConfig::new(
        2,
        2.0,
        3,
        vec![Site::new(&[0, 0]), Site::new(&[1, 0])],
    )
    .unwrap()
}

fn desk_normal_form(cfg: &Arc<LatticeConfig<f64>>, w: [f64; 2]) -> NormalForm<f64> {
    let omega = vec![w[0], 1.0 + w[1]];
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

fn desk_params() -> StepParams<f64> {
    StepParams {
        kappa: 1e-2,
        delta_prime: 6.0,
        tau: 0.002,
        lambda: 3.0,
        radii: DomainRadii::sigma_convention(0.3, 0.1).unwrap(),
    }
}

/// Random perturbation with low and high parts, scaled to the target
/// weighted norm.
fn random_perturbation(
    cfg: &Arc<LatticeConfig<f64>>,
    caps: Caps,
    seed: u64,
    target: f64,
) -> TfPoly<f64> {
    let mut r = rng(seed);
    let d = desk_params().radii;
    let low = random_real_poly(cfg, caps, &mut r, 40, 2, 3);
    let high = random_real_poly(cfg, caps, &mut r, 40, 4, 3);
    let (_, high_only) = high.split_low_high();
    let f = low.add(&high_only).unwrap();
    let norm = f.vf_weighted_norm(&d);
    f.scale_real(target / norm)
}

#[test]
fn angle_equation_single_mode() {
    // One tangential site, omega = 1, F(k=1) = 1: the solved coefficient is
    // 1/(i * 1) = -i.
    let cfg = LatticeConfig::new(1, 1.0, 2, vec![Site::new(&[1])]).unwrap();
    let caps = Caps::new(4, 2, 2);
    let mut nf = desk_normal_form_1d(&cfg);
    nf.omega = vec![1.0];
    let blocks = build_blocks(&cfg, 0.0);
    let mut f = TfPoly::zero(cfg.clone(), caps);
    f.insert_checked(MultiIndex::fourier(smallvec::smallvec![1], 1), c64(1.0, 0.0))
        .unwrap();
    f.insert_checked(MultiIndex::fourier(smallvec::smallvec![-1], 1), c64(1.0, 0.0))
        .unwrap();
    let sol = solve_homological(&nf, &f, &desk_params(), &blocks).unwrap();
    let got = sol.s.coeff(&MultiIndex::fourier(smallvec::smallvec![1], 1));
    assert!((got - c64(0.0, -1.0)).norm() < 1e-14);
    assert!(sol.diagnostics.residual < 1e-12);
}

fn desk_normal_form_1d(cfg: &Arc<LatticeConfig<f64>>) -> NormalForm<f64> {
    NormalForm {
        lattice: cfg.clone(),
        omega: vec![1.0],
        big_omega: cfg.normal_sites.iter().map(|s| s.norm2().max(1) as f64).collect(),
        h: LatticeMatrix::zero(cfg.clone()),
        delta: 0.0,
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
fn constant_input_becomes_the_energy_shift() {
    let cfg = desk_lattice();
    let caps = Caps::new(6, 2, 3);
    let nf = desk_normal_form(&cfg, [0.3, 0.11]);
    let blocks = build_blocks(&cfg, 2.0);
    let f = TfPoly::constant(cfg.clone(), caps, c64(0.25, 0.0));
    let sol = solve_homological(&nf, &f, &desk_params(), &blocks).unwrap();
    assert!(sol.s.is_zero());
    assert!((sol.a1 - 0.25).abs() < 1e-15);
    assert!(sol.chi1.iter().all(|&x| x == 0.0));
    assert!(sol.h1_matrix.is_zero());
}

#[test]
fn coupling_bracket_hand_example() {
    // f_high = r_0 xi_b, s_phi = e^{i phi_0}:
    // {f_high, s_phi} = -<d_r f_high, d_phi s_phi> = -i e^{i phi_0} xi_b.
    let cfg = desk_lattice();
    let caps = Caps::new(6, 2, 3);
    let b = cfg.normal_index_of(&Site::new(&[0, 1])).unwrap();
    let slot = cfg.slot(b, ZetaComponent::Xi);
    let mut f_high = TfPoly::zero(cfg.clone(), caps);
    let mut idx = MultiIndex::action(0, 2);
    idx.beta.push((slot, 1));
    f_high.insert_checked(idx, c64(1.0, 0.0)).unwrap();
    let mut s_phi = TfPoly::zero(cfg.clone(), caps);
    s_phi
        .insert_checked(MultiIndex::fourier(smallvec::smallvec![1, 0], 2), c64(1.0, 0.0))
        .unwrap();
    let g = f_high.poisson_bracket(&s_phi).unwrap();
    let mut expect_idx = MultiIndex::zeta(slot, 2);
    expect_idx.k = smallvec::smallvec![1, 0];
    assert!((g.coeff(&expect_idx) - c64(0.0, -1.0)).norm() < 1e-15);
    assert_eq!(g.n_terms(), 1);
}

#[test]
fn grading_audit_weight_two_generators() {
    // Weight-3 high parts bracketed against weight-2 jets (action or
    // quadratic) produce nothing of weight <= 2.
    let cfg = desk_lattice();
    let caps = Caps::new(6, 3, 4);
    let mut r = rng(61);
    for _ in 0..10 {
        let cubic = {
            let f = random_real_poly(&cfg, caps, &mut r, 20, 3, 2);
            let (_, h) = f.split_low_high();
            h
        };
        // an action-type jet (weight 2, r-linear) and a quadratic jet
        let mut s_act = TfPoly::zero(cfg.clone(), caps);
        let mut idx = MultiIndex::action(r.gen_range(0..2), 2);
        idx.k = smallvec::smallvec![r.gen_range(-2..=2), r.gen_range(-2..=2)];
        s_act.insert_checked(idx.clone(), c64(0.3, 0.1)).unwrap();
        s_act
            .insert_checked(idx.negate_k(), c64(0.3, -0.1))
            .unwrap();
        let s_quad = {
            let f = random_real_poly(&cfg, caps, &mut r, 10, 2, 2);
            let mut q = TfPoly::zero(cfg.clone(), caps);
            for (i, c) in f.terms() {
                if i.beta_total() == 2 && i.alpha_total() == 0 {
                    q.insert_checked(i.clone(), *c).unwrap();
                }
            }
            q
        };
        for s in [&s_act, &s_quad] {
            let g = cubic.poisson_bracket(s).unwrap();
            let (low, _) = g.split_low_high();
            assert!(
                low.max_coeff() < 1e-15,
                "weight <= 2 leakage from high x weight-2"
            );
        }
    }
}

#[test]
fn quadratic_zero_mode_resonant_and_nonresonant() {
    let cfg = desk_lattice();
    let caps = Caps::new(6, 2, 3);
    let nf = desk_normal_form(&cfg, [0.3, 0.11]);
    let blocks = build_blocks(&cfg, 2.0);
    // |a| = |b| with a rotation-invariant block (the normal-form pattern
    // alpha I): the k=0 entry lands in the increment, not in s.
    let a = cfg.normal_index_of(&Site::new(&[0, 1])).unwrap();
    let b = cfg.normal_index_of(&Site::new(&[-1, 0])).unwrap();
    assert_eq!(cfg.normal_sites[a].norm2(), cfg.normal_sites[b].norm2());
    let sa = cfg.slot(a, ZetaComponent::Xi);
    let sb = cfg.slot(b, ZetaComponent::Xi);
    let ea = cfg.slot(a, ZetaComponent::Eta);
    let eb = cfg.slot(b, ZetaComponent::Eta);
    let mut f = TfPoly::zero(cfg.clone(), caps);
    f.insert_checked(MultiIndex::zeta_pair(sa, sb, 2), c64(0.4, 0.0))
        .unwrap();
    f.insert_checked(MultiIndex::zeta_pair(ea, eb, 2), c64(0.4, 0.0))
        .unwrap();
    let sol = solve_homological(&nf, &f, &desk_params(), &blocks).unwrap();
    assert!(sol.s.is_zero(), "resonant entry must not enter the generator");
    assert!(!sol.h1_matrix.is_zero());
    assert!(sol.diagnostics.residual < 1e-12);
    // the absorbed block reproduces the data
    let blk = sol.h1_matrix.entry(a, b);
    assert!((blk.0[0][0] - c64(0.4, 0.0)).norm() < 1e-14);

    // |a| != |b|: solved with divisor Omega_a - Omega_b.
    let c_site = cfg.normal_index_of(&Site::new(&[1, 1])).unwrap();
    let sc = cfg.slot(c_site, ZetaComponent::Xi);
    let mut g = TfPoly::zero(cfg.clone(), caps);
    g.insert_checked(MultiIndex::zeta_pair(sa, sc, 2), c64(0.4, 0.0))
        .unwrap();
    let sol = solve_homological(&nf, &g, &desk_params(), &blocks).unwrap();
    assert!(sol.h1_matrix.is_zero());
    assert!(!sol.s.is_zero());
    assert!(sol.diagnostics.residual < 1e-12, "residual {}", sol.diagnostics.residual);
}

#[test]
fn small_divisor_violation_is_attributed() {
    // omega = (1, 1) and the mode k = (1, -1) give an exact resonance.
    let cfg = desk_lattice();
    let caps = Caps::new(6, 2, 3);
    let nf = desk_normal_form(&cfg, [1.0, 0.0]);
    let blocks = build_blocks(&cfg, 2.0);
    let mut f = TfPoly::zero(cfg.clone(), caps);
    let k: smallvec::SmallVec<[i16; 4]> = smallvec::smallvec![1, -1];
    f.insert_checked(MultiIndex::fourier(k.clone(), 2), c64(1.0, 0.0))
        .unwrap();
    f.insert_checked(
        MultiIndex::fourier(k.clone(), 2).negate_k(),
        c64(1.0, 0.0),
    )
    .unwrap();
    match solve_homological(&nf, &f, &desk_params(), &blocks) {
        Err(CoreError::SmallDivisor { condition, k, .. }) => {
            assert_eq!(condition, "k");
            assert_eq!(k, vec![1, -1]);
        }
        other => panic!("expected a small-divisor violation, got {other:?}"),
    }
}

/// Search a small parameter grid for a point where the desk solve succeeds.
fn solve_on_desk_instance(
    f: &TfPoly<f64>,
    with_h: bool,
    seed: u64,
) -> kamnls_core::homology::HomologicalSolution<f64> {
    let cfg = f.lattice().clone();
    let blocks = build_blocks(&cfg, 2.0);
    let sp = desk_params();
    let mut r = rng(seed);
    for _ in 0..60 {
        let w = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        let mut nf = desk_normal_form(&cfg, w);
        if with_h {
            // small normal-form correction on one shell
            let shell: Vec<usize> = (0..cfg.n_normal())
                .filter(|&i| cfg.normal_sites[i].norm2() == 2)
                .collect();
            let mut h = LatticeMatrix::zero(cfg.clone());
            for (pos, &i) in shell.iter().enumerate() {
                for &j in shell[pos..].iter() {
                    if cfg.normal_sites[i].dist2(&cfg.normal_sites[j]) as f64 > 4.0 {
                        continue;
                    }
                    let alpha = 0.05 * ((i + 2 * j) % 5) as f64 / 5.0;
                    let beta = if i == j { 0.0 } else { 0.03 * ((i + j) % 3) as f64 / 3.0 };
                    let blk = Gl2::from_real([[alpha, beta], [-beta, alpha]]);
                    h.set_entry(i, j, blk);
                    if i != j {
                        h.set_entry(j, i, blk.transpose());
                    }
                }
            }
            nf.h = h;
            nf.validate(&blocks, 1e-12).unwrap();
        }
        match solve_homological(&nf, f, &sp, &blocks) {
            Ok(sol) => return sol,
            Err(CoreError::SmallDivisor { .. }) => continue,
            Err(e) => panic!("unexpected error {e}"),
        }
    }
    panic!("no admissible parameter point found in 60 draws");
}

#[test]
fn desk_instance_residual_within_tolerance() {
    let cfg = desk_lattice();
    let caps = Caps::new(6, 2, 3);
    let f = random_perturbation(&cfg, caps, 71, 1e-3);
    let started = std::time::Instant::now();
    let sol = solve_on_desk_instance(&f, false, 72);
    let elapsed = started.elapsed();
    assert!(
        sol.diagnostics.residual <= 1e-9,
        "residual {}",
        sol.diagnostics.residual
    );
    assert!(sol.diagnostics.min_divisor >= 1e-2);
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    // generator structure: weight <= 2, modes within the cutoff
    for (idx, _) in sol.s.terms() {
        assert!(idx.weight() <= 2);
        assert!((idx.k_norm2() as f64) <= 36.0 + 1e-9);
    }
    // increment structure: angle-free, classes constant / action / quadratic
    for (idx, _) in sol.h1.terms() {
        assert!(idx.k.iter().all(|&x| x == 0));
        let w = (idx.alpha_total(), idx.beta_total());
        assert!(matches!(w, (0, 0) | (1, 0) | (0, 2)));
    }
}

#[test]
fn desk_instance_with_correction_matrix() {
    let cfg = desk_lattice();
    let caps = Caps::new(6, 2, 3);
    let f = random_perturbation(&cfg, caps, 73, 1e-3);
    let sol = solve_on_desk_instance(&f, true, 74);
    assert!(
        sol.diagnostics.residual <= 1e-9,
        "residual {}",
        sol.diagnostics.residual
    );
}

#[test]
fn decoupled_solve_when_high_part_vanishes() {
    let cfg = desk_lattice();
    let caps = Caps::new(6, 2, 3);
    let f = {
        let p = random_perturbation(&cfg, caps, 75, 1e-3);
        p.low_part()
    };
    let sol = solve_on_desk_instance(&f, false, 76);
    assert!(sol.diagnostics.residual <= 1e-10);
    // with no high part the coupling vanishes; the residual of the
    // decoupled equation {h,s} + T f_low - h1 = 0 must hold on its own
    let blocks = build_blocks(&cfg, 2.0);
    let sp = desk_params();
    // reconstruct the normal form the search used is not possible here, so
    // verify instead through the stored diagnostics: residual already
    // includes the (zero) coupling term.
    let _ = (blocks, sp);
}
