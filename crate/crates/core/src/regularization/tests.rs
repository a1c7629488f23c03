use super::*;
use crate::fourier_core::random_analytic;
use crate::nls_model::{check_symplectic, BuiltinPlugin, LinearizedCoefficients};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const OMEGA: [f64; 1] = [0.8];

fn linearized(eps: f64, n: usize, seed: u64) -> DiffOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = random_analytic(&mut rng, 1, n, 0.3, 1.2, false);
    let params = ModelParams::new(&OMEGA, 1.0, eps, n);
    let plugin = BuiltinPlugin::default_for(1);
    assemble_linearized(&z, &params, &plugin).unwrap().1
}

fn cfg(n: usize) -> RegConfig {
    RegConfig::new(1, n, n)
}

fn probe(seed: u64, n: usize) -> TorusFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_analytic(&mut rng, 1, n, 1.0, 1.0, false).pair()
}

#[test]
fn unperturbed_is_identity() {
    let l0 = linearized(0.0, 8, 1);
    let out = regularize_operator(&l0, &cfg(8)).unwrap();
    assert_eq!(out.m2, 1.0);
    assert!(out.m1.norm() < 1e-15);
    assert_eq!(out.m0, 1.0);
    assert!(out.remainder.max_abs() < 1e-12, "{}", out.remainder.max_abs());
    assert_eq!(out.q0.max_abs(), 0.0);
    let h = probe(2, 6);
    let back = out.v2.apply(&h).unwrap();
    assert!((&back - &h).max_abs() < 1e-14);
}

#[test]
fn upsilon_values() {
    assert!((upsilon(2) - 0.4).abs() < 1e-16);
    assert_eq!(upsilon(0), 0.0);
    assert_eq!(upsilon(-1), -0.5);
}

#[test]
fn normal_form_symbol_example() {
    let l0 = linearized(0.0, 4, 1);
    let mut out = regularize_operator(&l0, &cfg(4)).unwrap();
    out.m2 = 1.0;
    out.m1 = C64::new(0.0, 0.1);
    out.m0 = 1.0;
    assert!((out.diagonal_symbol(1, 2) - C64::new(0.0, -3.2)).norm() < 1e-14);
    assert!((out.diagonal_symbol(1, -2) - C64::new(0.0, -2.8)).norm() < 1e-14);
}

#[test]
fn constants_and_structural_zeros() {
    let l0 = linearized(1e-2, 12, 3);
    let out = regularize_operator(&l0, &cfg(12)).unwrap();
    let r = &out.report;
    assert!(r.m1_real_part <= 1e-10, "{}", r.m1_real_part);
    assert!(r.structural.iter().all(|v| *v <= 1e-9), "{:?}", r.structural);
    assert!(r.x_dependence <= 1e-9, "{}", r.x_dependence);
    assert!(r.m2_constancy <= 1e-9, "{}", r.m2_constancy);
    assert!(r.s_equation <= 1e-10, "{}", r.s_equation);
    assert!(r.det_defect <= 1e-12);
    assert!(r.pattern_defect <= 1e-9, "{}", r.pattern_defect);
    assert!((out.m2 - 1.0).abs() < 0.05 && (out.m0 - 1.0).abs() < 0.05);
    // ⟨a₁⟩ ≈ −2iε⟨p⟩ with ⟨p⟩ = 1 for the built-in plugin
    assert!((out.m1.im / 1e-2 + 2.0).abs() < 0.2, "{}", out.m1);
    assert!(r.remainder_smoothing.is_finite());
    let (ok, viol) = out.l7_block().part.is_hamiltonian(1e-9);
    assert!(ok, "{viol}");
}

#[test]
fn step_residuals() {
    let n = 12;
    let c = cfg(n);
    let l0 = linearized(1e-2, n, 4);
    let h = probe(5, 4);
    let work = 24;
    let s0 = c.s0;
    let s1 = step1(&l0, &c).unwrap();
    let s2 = step2(&s1.op, &c).unwrap();
    let s3 = step3(&s2.op, &c).unwrap();
    let s4 = step4(&s3.op, &c).unwrap();
    let s5 = step5(&s4.op, s3.m2, s4.m1, &c).unwrap();
    let s6 = step6(&s5.op, s3.m2, &c).unwrap();
    let s7 = step7(&s6.op, &c).unwrap();
    let res = [
        conjugation_residual(&l0, &s1.t, &s1.op, None, &h, work, s0).unwrap(),
        conjugation_residual(&s1.op, &s2.t, &s2.op, None, &h, work, s0).unwrap(),
        conjugation_residual(&s2.op, &s3.t, &s3.op, Some(&s3.rho), &h, work, s0).unwrap(),
        conjugation_residual(&s3.op, &s4.t, &s4.op, None, &h, work, s0).unwrap(),
        conjugation_residual(&s4.op, &s5.t, &s5.op, None, &h, work, s0).unwrap(),
        conjugation_residual(&s5.op, &s6.t, &s6.op, None, &h, work, s0).unwrap(),
        conjugation_residual(&s6.op, &s7.t, &s7.op, None, &h, work, s0).unwrap(),
    ];
    for (k, r) in res.iter().enumerate() {
        assert!(*r <= 1e-8, "step {}: {r:.3e}", k + 1);
    }
}

#[test]
fn end_to_end() {
    let n = 12;
    let l0 = linearized(1e-2, n, 6);
    let c = cfg(n);
    let out = regularize_operator(&l0, &c).unwrap();
    for seed in 0..3 {
        let h = probe(10 + seed, 4);
        let r = end_to_end_residual(&l0, &out, &h, 24, c.s0).unwrap();
        assert!(r <= 1e-7, "{r:.3e}");
    }
}

#[test]
fn every_step_is_symplectic() {
    let n = 12;
    let l0 = linearized(1e-2, n, 7);
    let out = regularize_operator(&l0, &cfg(n)).unwrap();
    for (k, t) in out.steps.iter().enumerate() {
        let (ok, worst) = check_symplectic(t, 1, 8, 20, 1e-9, 100 + k as u64);
        assert!(ok, "T{}: {worst:.3e}", k + 1);
    }
}

fn space_only_operator(a2: TorusFunction) -> DiffOperator {
    let d = a2.d;
    let n = a2.n;
    let mut co = LinearizedCoefficients::zeros(d, n);
    co.a[1] = a2.dx();
    co.a[2] = a2;
    DiffOperator::new(&OMEGA, 1.0, co)
}

/// Composite Simpson on [0, 2π] with many nodes.
fn simpson<F: Fn(f64) -> f64>(f: F, k: usize) -> f64 {
    let h = std::f64::consts::TAU / k as f64;
    let mut s = f(0.0) + f(std::f64::consts::TAU);
    for i in 1..k {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn step2_matches_quadrature() {
    let n = 24;
    let a2 = TorusFunction::from_fn(1, n, 4, |_, x| C64::new(0.1 * x.cos(), 0.0));
    let out = step2(&space_only_operator(a2), &cfg(n)).unwrap();
    let avg = simpson(|x| (1.0 + 0.1 * x.cos()).powf(-0.5), 200_000) / std::f64::consts::TAU;
    let oracle = avg.powi(-2) - 1.0;
    let got = out.op.coeffs.a[2].mean().re;
    assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
    assert!((out.a2_phi.mean().re - 1.0 - oracle).abs() < 1e-10);
    let new = &out.op.coeffs.a[2];
    assert!((new - &new.x_average()).max_abs() < 1e-9);
}

#[test]
fn step2_trivial() {
    let out = step2(&space_only_operator(TorusFunction::zeros(1, 6)), &cfg(6)).unwrap();
    assert_eq!(out.xi.max_abs(), 0.0);
    assert_eq!(out.op.coeffs.a[2].max_abs(), 0.0);
}

#[test]
fn step3_zero_mean_average() {
    let a2 = TorusFunction::from_fn(1, 8, 4, |p, _| C64::new(0.1 * p[0].cos(), 0.0));
    let out = step3(&space_only_operator(a2), &cfg(8)).unwrap();
    assert!((out.m2 - 1.0).abs() < 1e-14);
    assert!(out.constancy_defect < 1e-9);
    let out = step3(&space_only_operator(TorusFunction::constant(1, 8, C64::new(0.05, 0.0))), &cfg(8)).unwrap();
    assert!((out.m2 - 1.05).abs() < 1e-14);
    assert_eq!(out.alpha.max_abs(), 0.0);
}

#[test]
fn step4_and_step5_trivial() {
    let mut co = LinearizedCoefficients::zeros(1, 6);
    co.a[1] = TorusFunction::constant(1, 6, C64::new(0.0, 0.02));
    let op = DiffOperator::new(&OMEGA, 1.0, co);
    let c = cfg(6);
    let s4 = step4(&op, &c).unwrap();
    assert_eq!(s4.beta.max_abs(), 0.0);
    assert_eq!(s4.m1, C64::new(0.0, 0.02));
    let s5 = step5(&s4.op, 1.0, s4.m1, &c).unwrap();
    assert!(s5.s.max_abs() < 1e-15);
}

#[test]
fn step6_generator_first_order() {
    // T₆ − (1 + G) is quadratic in the generator
    let n = 10;
    let a = TorusFunction::from_fn(1, n, 4, |p, x| C64::new(1e-3 * (x + p[0]).cos(), 0.0));
    let g = step6_generator(&a, n, 4);
    let (t, _) = crate::operator_algebra::exp_series(&g, 1.5, 1e-15, 30);
    let lin = BlockOperator::identity(1, n, 4).add(&g);
    let diff = t.sub(&lin);
    let dd = BlockOperator::diagonal(1, n, 4, |_, j| C64::new(1.0 + (j * j) as f64, 0.0).sqrt());
    let weighted = dd.compose(&diff).compose(&dd).decay_norm(1.5);
    assert!(weighted < 10.0 * g.decay_norm(1.5).powi(2), "{weighted:.3e}");
}

#[test]
fn nondegeneracy_report() {
    use crate::fourier_core::ParamGrid;
    let grid = ParamGrid::uniform(1, 3);
    let e = C64::new(0.0, -2.0);
    let zero = ParamFamily::from_fn(grid.clone(), |_| Some(C64::new(0.0, 0.0)));
    assert!(check_nondegeneracy(&zero, 0.0, e, 0.1, 10.0).unwrap().skipped);
    let fam = ParamFamily::from_fn(grid.clone(), |w| Some(C64::new(0.0, -2e-3 * (1.0 + 1e-3 * w[0]))));
    let rep = check_nondegeneracy(&fam, 1e-3, e, 0.1, 10.0).unwrap();
    assert!(!rep.skipped && rep.upper_ok);
    assert!((rep.min_ratio - 2.0).abs() < 0.01);
    let weak = ParamFamily::from_fn(grid, |_| Some(C64::new(0.0, -1e-4)));
    assert!(matches!(check_nondegeneracy(&weak, 1e-3, e, 0.1, 10.0), Err(Error::Degeneracy(_))));
}

#[test]
fn ellipticity_loss_reported() {
    let a2 = TorusFunction::constant(1, 4, C64::new(-1.5, 0.0));
    let err = regularize_operator(&space_only_operator(a2), &cfg(4)).unwrap_err();
    assert!(matches!(err, Error::Step { step: 1, .. }), "{err}");
}

