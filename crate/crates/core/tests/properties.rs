//! Randomized invariants across the modules. Each property draws a seed and
//! builds its inputs from a seeded generator.

use nalgebra::DMatrix;
use proptest::prelude::*;
use qpnls::fourier_core::{inverse_identity_residual, invert_diffeo, random_analytic, TorusFunction, DEFAULT_OVERSAMPLE};
use qpnls::kam_reducibility::NormalForm;
use qpnls::nls_model::{eval_F, BuiltinPlugin, ModelParams};
use qpnls::operator_algebra::{exp_series, random_hamiltonian, random_operator, solve_sylvester_small, Transformation};
use qpnls::solver_driver::{newton_rate, scale_schedule, stability_check};
use qpnls::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn hermitian(r: &mut ChaCha8Rng, shift: f64) -> DMatrix<C64> {
    let b = C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
    DMatrix::from_row_slice(2, 2, &[C64::new(shift + r.gen_range(-1.0..1.0), 0.0), b, b.conj(), C64::new(shift + r.gen_range(-1.0..1.0), 0.0)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parseval(seed in any::<u64>(), d in 1usize..=2, n in 2usize..6) {
        let u = random_analytic(&mut rng(seed), d, n, 1.0, 0.5, false);
        let m = 2 * n + 2;
        let vals = u.to_grid(m);
        let mean = vals.iter().map(|v| v.norm_sqr()).sum::<f64>() / vals.len() as f64;
        let l2 = u.sobolev_norm(0.0).powi(2);
        prop_assert!((mean - l2).abs() <= 1e-12 * l2);
    }

    #[test]
    fn sobolev_norm_is_monotone(seed in any::<u64>(), s in 0.0f64..4.0, ds in 0.0f64..2.0) {
        let u = random_analytic(&mut rng(seed), 1, 6, 1.0, 0.7, false);
        prop_assert!(u.sobolev_norm(s) <= u.sobolev_norm(s + ds) * (1.0 + 1e-14));
    }

    #[test]
    fn projections_obey_smoothing(seed in any::<u64>(), cut in 1usize..7, s in 0.0f64..3.0, b in 0.0f64..3.0) {
        let u = random_analytic(&mut rng(seed), 1, 8, 1.0, 0.4, false);
        let (lo, hi) = u.project(cut);
        let nb = (cut as f64).powf(b);
        prop_assert!(hi.sobolev_norm(s) * nb <= u.sobolev_norm(s + b) * (1.0 + 1e-12));
        prop_assert!(lo.sobolev_norm(s + b) <= nb * lo.sobolev_norm(s) * (1.0 + 1e-12));
        prop_assert!((&(&lo + &hi) - &u).max_abs() == 0.0);
    }

    #[test]
    fn real_functions_stay_real(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_analytic(&mut r, 1, 5, 1.0, 0.8, true);
        let b = random_analytic(&mut r, 1, 5, 1.0, 0.8, true);
        prop_assert!(a.multiply(&b).reality_defect() <= 1e-13);
        prop_assert!(a.dx().reality_defect() <= 1e-15);
        prop_assert!(a.dx_inverse().reality_defect() <= 1e-15);
        prop_assert!(a.omega_dphi(&[0.7548776662]).reality_defect() <= 1e-14);
    }

    #[test]
    fn space_diffeo_inverse(seed in any::<u64>(), amp in 0.005f64..0.05) {
        let xi = random_analytic(&mut rng(seed), 1, 10, amp, 2.0, true);
        let hat = invert_diffeo(&xi, 1e-14, DEFAULT_OVERSAMPLE).unwrap();
        let res = inverse_identity_residual(&xi, &hat, DEFAULT_OVERSAMPLE);
        // the inverse is truncated at the same cutoff, so only a spectrally small tail is left
        prop_assert!(res <= 1e-9, "{res:.3e} at {amp}");
    }

    #[test]
    fn decay_norm_monotone_and_bounds_entries(seed in any::<u64>(), s in 0.0f64..3.0, ds in 0.0f64..1.5) {
        let a = random_operator(&mut rng(seed), 1, 4, 4, 1.0, 0.5);
        prop_assert!(a.decay_norm(s) <= a.decay_norm(s + ds) * (1.0 + 1e-14));
        let norm = a.decay_norm(s);
        for t in 0..a.tlen() {
            let l = a.ell(t)[0].abs();
            for row in 0..a.dim() {
                for col in 0..a.dim() {
                    let (_, j) = a.label(row);
                    let (_, jp) = a.label(col);
                    let w = (l.max((j - jp).abs()).max(1) as f64).powf(s);
                    prop_assert!(a.symbols[t][(row, col)].norm() * w <= norm * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn smoothing_bound_on_operators(seed in any::<u64>(), cut in 1usize..6, s in 0.0f64..2.0, b in 0.0f64..3.0) {
        let a = random_operator(&mut rng(seed), 1, 3, 6, 1.0, 0.3);
        let (_, hi) = a.smooth_truncate(cut);
        prop_assert!(hi.decay_norm(s) <= (cut as f64).powf(-b) * a.decay_norm(s + b) * (1.0 + 1e-12));
    }

    #[test]
    fn sylvester_matches_kronecker_system(seed in any::<u64>(), gap in 1.0f64..6.0) {
        let mut r = rng(seed);
        let a = hermitian(&mut r, gap);
        let b = hermitian(&mut r, -gap);
        let rhs = DMatrix::from_fn(2, 2, |_, _| C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)));
        let x = solve_sylvester_small(&a, &b, &rhs, 1e-12).unwrap();
        let id = DMatrix::<C64>::identity(2, 2);
        let k = id.kronecker(&a) - b.transpose().kronecker(&id);
        let vx = k.lu().solve(&DMatrix::from_column_slice(4, 1, rhs.as_slice())).unwrap();
        let xo = DMatrix::from_column_slice(2, 2, vx.as_slice());
        prop_assert!((&x - &xo).norm() <= 1e-12 * xo.norm());
    }

    #[test]
    fn hamiltonian_commutator_closure(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_hamiltonian(&mut r, 1, 3, 3, 1.0, 0.8);
        let b = random_hamiltonian(&mut r, 1, 3, 3, 1.0, 0.8);
        let (ok, viol) = a.commutator(&b).is_hamiltonian(1e-12);
        prop_assert!(ok, "{}", viol);
    }

    #[test]
    fn exponential_inverse(seed in any::<u64>()) {
        let psi = random_hamiltonian(&mut rng(seed), 1, 3, 3, 0.05, 1.0);
        let (e, _) = exp_series(&psi, 1.0, 1e-16, 40);
        let (einv, _) = exp_series(&psi.scale(C64::new(-1.0, 0.0)), 1.0, 1e-16, 40);
        let id = einv.compose(&e).sub(&qpnls::operator_algebra::BlockOperator::identity(1, 3, 3));
        // truncation at the time cutoff only touches the outer modes
        prop_assert!(id.resize(3, 1).max_abs() <= 1e-6);
    }

    #[test]
    fn residual_pair_is_conjugate(seed in any::<u64>(), eps in 0.0f64..0.05) {
        let u = random_analytic(&mut rng(seed), 1, 5, 0.2, 1.0, false);
        let params = ModelParams::new(&[0.7548776662], 1.0, eps, 5);
        let f = eval_F(&u, &params, &BuiltinPlugin::default_for(1)).unwrap();
        prop_assert!(f.pair_defect() <= 1e-13 * (1.0 + f.max_abs()));
    }

    #[test]
    fn reduced_flow_conserves_cluster_mass(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut nf = NormalForm::unperturbed(&[0.7548776662], 1, 5, 1.0, 1.0, C64::new(0.0, -0.01), 1.02);
        let i = C64::new(0.0, 1.0);
        for j in 1..=5usize {
            let h = hermitian(&mut r, 0.0) * C64::new(1e-3, 0.0);
            nf.blocks[0][j] += &h * i;
            nf.blocks[1][j] -= h.map(|v| v.conj()) * i;
        }
        let h0 = random_analytic(&mut r, 1, 5, 1.0, 1.0, false).phi_average().pair();
        let rep = stability_check(&nf, &Transformation::Identity, &h0, 50.0, 1.5, 40, 4, 1e-3).unwrap();
        prop_assert!(rep.conserved, "{} {}", rep.norm_drift, rep.cluster_drift);
        prop_assert!(rep.oscillation <= 1e-12 * (1.0 + rep.h0_norm));
    }

    #[test]
    fn scales_grow_until_capped(n0 in 2usize..12, cap in 12usize..200) {
        let mut prev = 0;
        for k in 0..5 {
            let s = scale_schedule(n0, k, cap).unwrap();
            prop_assert!(s.n >= prev && s.n <= cap);
            prop_assert_eq!(s.capped, s.n == cap && scale_schedule(n0, k, usize::MAX).unwrap().n > cap);
            prev = s.n;
        }
    }

    #[test]
    fn linear_rate_is_not_superlinear(r0 in 1e-4f64..1e-3, q in 0.01f64..0.5) {
        let seq: Vec<f64> = (0..5).map(|k| r0 * q.powi(k)).collect();
        prop_assert!(!newton_rate(&seq, 1e-2, 1e-14).0);
    }
}

#[test]
fn zero_datum_stays_zero() {
    let nf = NormalForm::unperturbed(&[0.7548776662], 1, 4, 1.0, 1.0, C64::new(0.0, 0.0), 1.0);
    let rep = stability_check(&nf, &Transformation::Identity, &TorusFunction::zeros_pair(1, 4), 10.0, 1.5, 10, 2, 1e-3).unwrap();
    assert_eq!(rep.oscillation, 0.0);
    assert!(rep.samples.iter().all(|s| s.v_norm == 0.0));
}
