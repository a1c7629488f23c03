use super::*;
use crate::fourier_core::random_analytic;
use crate::nls_model::{assemble_linearized, BuiltinPlugin, ModelParams};
use crate::operator_algebra::random_hamiltonian;
use crate::regularization::{regularize_operator, RegConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const W: f64 = 0.7548776662;

fn desk(eps: f64, n: usize, seed: u64, omega: f64) -> RegularizationOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = random_analytic(&mut rng, 1, n, 0.3 * eps, 1.2, false);
    let params = ModelParams::new(&[omega], 1.0, eps, n);
    let plugin = BuiltinPlugin::default_for(1);
    let l0 = assemble_linearized(&z, &params, &plugin).unwrap().1;
    regularize_operator(&l0, &RegConfig::new(1, n, n)).unwrap()
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Away from the m = 1 structural degeneracy: m₀ − m₂ = 0.3.
fn generic_nf(jc: usize) -> NormalForm {
    NormalForm::unperturbed(&[W], 1, jc, 1.0, 1.0, c(0.0, -0.02), 1.3)
}

fn schur_eigs(b: &DMatrix<C64>) -> Vec<C64> {
    b.clone().schur().eigenvalues().unwrap().iter().cloned().collect()
}

#[test]
fn eigenvalue_example() {
    let nf = NormalForm::unperturbed(&[1.0], 1, 3, 1.0, 1.0, c(0.0, 0.1), 1.0);
    let (p, m) = nf.eigenvalues(1, 2);
    assert!((p - c(0.0, -2.8)).norm() < 1e-14, "{p}");
    assert!((m - c(0.0, -3.2)).norm() < 1e-14, "{m}");
    let mut oracle = schur_eigs(nf.block(1, 2));
    oracle.sort_by(|a, b| b.im.partial_cmp(&a.im).unwrap());
    assert!((oracle[0] - p).norm() < 1e-14 && (oracle[1] - m).norm() < 1e-14);
    assert!((plus_branch_formula(nf.block(1, 2), 1) - p).norm() < 1e-14);
}

#[test]
fn zero_mode_block_is_scalar() {
    let nf = NormalForm::unperturbed(&[1.0], 1, 3, 1.0, 1.0, c(0.0, 0.1), 1.0);
    for sigma in [1i8, -1] {
        let (p, m) = nf.eigenvalues(sigma, 0);
        assert_eq!(p, m);
        assert!((p - c(0.0, sigma as f64)).norm() < 1e-15);
    }
}

fn random_cluster<R: Rng>(rng: &mut R, sigma: i8, scale: f64) -> DMatrix<C64> {
    let a = rng.gen_range(-scale..scale);
    let d = rng.gen_range(-scale..scale);
    let b = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let h = DMatrix::from_row_slice(2, 2, &[c(a, 0.0), b, b.conj(), c(d, 0.0)]);
    h * (I * sigma as f64)
}

#[test]
fn hamiltonian_blocks_have_imaginary_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in 0..200 {
        let sigma = if k % 2 == 0 { 1 } else { -1 };
        let b = random_cluster(&mut rng, sigma, 50.0);
        let (p, m) = eigenvalues_of_block(&b, sigma);
        assert!(p.re.abs() < 1e-12 * (1.0 + p.norm()) && m.re.abs() < 1e-12 * (1.0 + m.norm()));
        assert!((plus_branch_formula(&b, sigma) - p).norm() < 1e-11);
    }
}

#[test]
fn u_diagonalizes_large_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let j: f64 = rng.gen_range(50.0..200.0);
        let mut b = random_cluster(&mut rng, 1, 1.0);
        b[(0, 0)] += c(0.0, -j * j);
        b[(1, 1)] += c(0.0, -j * j);
        let h = &b * (-I);
        let (lam, u) = eig_hermitian_2x2(&h);
        let inv = u.clone().try_inverse().unwrap();
        let dg = inv * &b * &u;
        let scale = j * j;
        assert!((dg[(0, 0)] - I * lam[0]).norm() < 1e-10 * scale);
        assert!((dg[(1, 1)] - I * lam[1]).norm() < 1e-10 * scale);
        assert!(dg[(0, 1)].norm() < 1e-10 * scale && dg[(1, 0)].norm() < 1e-10 * scale);
    }
}

#[test]
fn zero_remainder_gives_zero_generator() {
    let nf = generic_nf(4);
    let sched = KamSchedule::new(1, 8, 1e-3, 0.03, 2.0);
    let r = BlockOperator::zeros(1, 4, 4);
    let (psi, _) = solve_homological(&nf, &r, 8, &sched).unwrap();
    assert!(psi.is_zero());
    let state = KamState::new(nf.clone(), r);
    let (next, rec) = kam_step(&state, &sched).unwrap();
    assert!(next.r.is_zero() && next.phis.is_empty());
    assert_eq!(rec.psi_norm, 0.0);
    assert_eq!(next.nf.blocks, nf.blocks);
}

#[test]
fn scalar_homological_instance() {
    let nf = NormalForm::unperturbed(&[1.0], 1, 3, 1.0, 1.0, c(0.0, 0.1), 1.0);
    let mut sched = KamSchedule::new(1, 8, 1e-3, 0.03, 2.0);
    sched.screen = false;
    let mut r = BlockOperator::zeros(1, 3, 2);
    let v = c(0.3, -0.2);
    r.set_entry(1, 1, 1, 2, &[1], v);
    let (psi, _) = solve_homological(&nf, &r, 2, &sched).unwrap();
    let div = c(0.0, 1.0) + diagonal_symbol(1.0, c(0.0, 0.1), 1.0, 1, 1) - diagonal_symbol(1.0, c(0.0, 0.1), 1.0, 1, 2);
    let got = psi.entry(1, 1, 1, 2, &[1]);
    assert!((got - (-v / div)).norm() < 1e-15, "{got}");
    assert_eq!(psi.max_abs(), got.norm());
    let q = r.smooth_truncate(2).0.sub(&kernel_projection(&r));
    assert!(homological_residual(&nf, &psi, &q, 1.5) < 1e-14);
}

#[test]
fn kernel_entries_of_generator_vanish() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let nf = generic_nf(5);
    let mut sched = KamSchedule::new(1, 4, 1e-3, 0.03, 2.0);
    sched.screen = false;
    let r = random_hamiltonian(&mut rng, 1, 5, 3, 1e-3, 0.8);
    let (psi, _) = solve_homological(&nf, &r, 4, &sched).unwrap();
    assert!(kernel_projection(&psi).is_zero());
    let k = kernel_projection(&r);
    assert!(k.max_abs() > 0.0);
    let q = r.smooth_truncate(4).0.sub(&k);
    assert!(homological_residual(&nf, &psi, &q, 1.5) < 1e-12);
    let (ok, viol) = psi.is_hamiltonian(1e-10);
    assert!(ok, "{viol:.3e}");
}

#[test]
fn small_divisor_is_named() {
    // ω·ℓ + μ_{+,1} − μ_{+,2} = 0 at ω = 3, ℓ = −1 (unperturbed, m₁ = 0)
    let nf = NormalForm::unperturbed(&[3.0], 1, 3, 1.0, 1.0, c(0.0, 0.0), 1.0);
    let sched = KamSchedule::new(1, 4, 1e-3, 0.03, 2.0);
    let mut r = BlockOperator::zeros(1, 3, 2);
    r.set_entry(1, 1, 1, 2, &[-1], c(1e-3, 0.0));
    match solve_homological(&nf, &r, 2, &sched) {
        Err(Error::SmallDivisor { context, .. }) => assert!(context.contains("j=1") && context.contains("j'=2"), "{context}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn eigenvalue_drift_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut sched = KamSchedule::new(1, 4, 1e-3, 0.03, 2.0);
    sched.screen = false;
    for _ in 0..5 {
        let r = random_hamiltonian(&mut rng, 1, 5, 3, 1e-3, 0.8);
        let (_, rec) = kam_step(&KamState::new(generic_nf(5), r), &sched).unwrap();
        assert!(rec.mu_drift <= rec.drift_bound, "{} > {}", rec.mu_drift, rec.drift_bound);
    }
}

#[test]
fn one_step_is_quadratic() {
    // |R₊| ≤ C(N^{−β}|R|_{s₀+β} + N^{2τ+1}γ^{−1}|R|²), C fitted once over three sizes
    let mut sched = KamSchedule::new(1, 4, 1e-3, 0.03, 2.0);
    sched.screen = false;
    let n = 4;
    let mut ratios = vec![];
    for amp in [1e-3, 1e-4, 1e-5] {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let r = random_hamiltonian(&mut rng, 1, 5, 6, amp, 0.8);
        let s0 = sched.s0;
        let bound = (n as f64).powf(-sched.beta_exp) * r.decay_norm(s0 + sched.beta_exp)
            + (n as f64).powf(2.0 * sched.tau + 1.0) / sched.gamma * r.decay_norm(s0).powi(2);
        let (next, _) = kam_step(&KamState::new(generic_nf(5), r), &sched).unwrap();
        ratios.push(next.r.decay_norm(s0) / bound);
    }
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    assert!(hi < 1.0, "{ratios:?}");
}

#[test]
fn unperturbed_needs_no_iteration() {
    let reg = desk(0.0, 8, 1, W);
    let out = reduce(&reg, &KamSchedule::new(1, 8, 0.0, 0.0, 2.0)).unwrap();
    assert_eq!(out.iterations(), 0);
    assert!(out.converged);
    let base = NormalForm::unperturbed(&[W], 1, 8, 1.0, 1.0, c(0.0, 0.0), 1.0);
    for s in 0..2 {
        for j in 0..=8 {
            assert!((&out.nf.blocks[s][j] - &base.blocks[s][j]).norm() < 1e-14);
        }
    }
}

#[test]
fn desk_reduction() {
    let eps = 1e-3;
    let reg = desk(eps, 12, 1, W);
    let sched = KamSchedule::new(1, 8, eps, eps.sqrt(), 2.0);
    let out = reduce(&reg, &sched).unwrap();
    assert!(out.converged && out.iterations() >= 3, "{:?}", out.history);
    for h in &out.history {
        assert!(h.max_re_mu <= 1e-10);
        assert!(h.hamiltonian_violation <= 1e-8 * (1.0 + h.r_s0));
        assert!(h.homological_residual <= 1e-10);
        assert!(h.diag_smoothing <= 2.0 * h.r_s0 + 1e-300);
    }
    let rep = check_decay_schedule(&out.history, sched.tau + 1.0);
    assert!(!rep.insufficient && rep.meets_threshold && rep.quadratic_ok, "{rep:?}");
    assert!(rep.quadratic_pairs >= 3);
    // corrections decay like ε/⟨j⟩
    assert!(out.nf.correction_fit(eps) < 10.0, "{}", out.nf.correction_fit(eps));
    // e^{−Ψ} composed with e^{Ψ} is the identity on a coarse probe
    let id = out.phi_inv.compose(&out.phi_fwd).sub(&BlockOperator::identity(1, 12, 12));
    assert!(id.resize(6, 4).max_abs() < 1e-12);
}

#[test]
fn stagnation_is_reported() {
    // a resonant ℓ = 0 coupling that is not in the kernel cannot be removed
    // with screening off and the floor at zero; force two stalled iterates
    let mut sched = KamSchedule::new(1, 2, 1e-3, 0.03, 2.0);
    sched.screen = false;
    sched.chi = 1.0;
    sched.n_cap = 2;
    let mut r = BlockOperator::zeros(1, 3, 6);
    // only modes beyond N = 2: untouched by the homological equation
    r.set_entry(1, 1, 1, 1, &[5], c(1e-3, 0.0));
    r.set_entry(-1, -1, -1, -1, &[-5], c(1e-3, 0.0));
    match reduce_from(generic_nf(3), r, &sched) {
        Err(Error::Reducibility(_)) => {}
        other => panic!("{:?}", other.map(|o| o.history)),
    }
}

fn rec(nu: usize, n: usize, r: f64) -> KamRecord {
    KamRecord { nu, n, r_s0: r, r_sbeta: r, ..Default::default() }
}

#[test]
fn decay_report_edges() {
    let one = check_decay_schedule(&[rec(0, 0, 1e-3)], 4.0);
    assert!(one.insufficient);
    let r0: f64 = 1e-4;
    let two = check_decay_schedule(&[rec(0, 0, r0), rec(1, 8, r0.powf(1.5))], 4.0);
    assert!(!two.insufficient && two.quadratic_ok && two.quadratic_pairs == 1);
    // α = ½·ln(1/r₀)/ln 8
    assert!((two.exponent - 0.5 * (1.0 / r0).ln() / 8f64.ln()).abs() < 1e-12);
}

#[test]
fn schedule_is_increasing() {
    let s = KamSchedule::new(1, 8, 1e-3, 0.03, 2.0);
    assert_eq!(s.n_at(0), 8);
    assert_eq!(s.n_at(1), 22);
    assert!((1..6).all(|k| s.n_at(k) > s.n_at(k - 1)));
    assert_eq!(s.alpha_exp, 24.0);
    assert_eq!(s.beta_exp, 26.0);
}
