use super::*;
use crate::fourier_core::random_analytic;
use crate::nls_model::BuiltinPlugin;
use rand_chacha::ChaCha8Rng;

const W: f64 = 0.7548776662;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn desk_cfg(eps: f64) -> SolverConfig {
    SolverConfig { eps, grid: GridSpec { points: 0, omegas: vec![vec![W]] }, ..Default::default() }
}

#[test]
fn schedule_values() {
    assert_eq!(scale_schedule(8, 0, 1000).unwrap(), Scale { n: 8, capped: false });
    assert_eq!(scale_schedule(10, 2, 1000).unwrap().n, 177);
    assert_eq!(scale_schedule(8, 1, 1000).unwrap().n, 22);
    let mut prev = 0;
    for k in 0..4 {
        let s = scale_schedule(4, k, 1000).unwrap();
        assert!(s.n > prev);
        prev = s.n;
    }
    let s = scale_schedule(8, 2, 50).unwrap();
    assert_eq!(s, Scale { n: 50, capped: true });
    assert!(matches!(scale_schedule(1, 0, 10), Err(Error::Usage(_))));
}

#[test]
fn diagonal_inversion_is_scalar_division() {
    let nf = NormalForm::unperturbed(&[W], 1, 4, 1.0, 1.0, c(0.0, 0.0), 1.0);
    let mut g = TorusFunction::zeros_pair(1, 4);
    g.set(0, &[2], 3, c(0.3, -0.1));
    let (h, st) = invert_normal_form(&nf, &g, 0.01, 3.0, 1e-10).unwrap();
    let mu = nf.mu(1, 3);
    let expect = c(0.3, -0.1) / (I * 2.0 * W + mu);
    assert!((h.get(0, &[2], 3) - expect).norm() < 1e-15);
    assert!(st.max_block_residual < 1e-14);
    assert!(h.comps[1].iter().all(|v| *v == c(0.0, 0.0)));
    let (z, _) = invert_normal_form(&nf, &TorusFunction::zeros_pair(1, 4), 0.01, 3.0, 1e-10).unwrap();
    assert_eq!(z.max_abs(), 0.0);
}

#[test]
fn coupled_blocks_have_small_residual() {
    let mut nf = NormalForm::unperturbed(&[W], 1, 5, 1.0, 1.0, c(0.0, -0.02), 1.01);
    for j in 1..=5usize {
        let b = c(0.003 / j as f64, 0.001);
        nf.blocks[0][j][(0, 1)] += I * b;
        nf.blocks[0][j][(1, 0)] += I * b.conj();
        nf.blocks[1][j][(0, 1)] -= I * b.conj();
        nf.blocks[1][j][(1, 0)] -= I * b;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = random_analytic(&mut rng, 1, 5, 1.0, 1.0, false).pair();
    // drop the (ℓ, j) = (0, ±1) near-kernel of m = 1
    let mut g = g;
    for cc in 0..2 {
        for j in [-1, 1] {
            g.set(cc, &[0], j, c(0.0, 0.0));
        }
    }
    let (h, st) = invert_normal_form(&nf, &g, 1e-3, 3.0, 1e-10).unwrap();
    assert!(st.max_block_residual < 1e-12, "{}", st.max_block_residual);
    // independent check: apply ω·∂ + D and compare
    let back = crate::operator_algebra::LinearOperator { omega: vec![W], part: nf.to_operator(10) }.apply(&h);
    assert!((&back - &g).max_abs() < 1e-12 * g.max_abs());
}

#[test]
fn first_melnikov_failure_names_the_mode() {
    // ω·ℓ + σ(m − j²) = 0 at ω = 3, ℓ = 1, j = 2, σ = +
    let nf = NormalForm::unperturbed(&[3.0], 1, 3, 1.0, 1.0, c(0.0, 0.0), 1.0);
    let g = TorusFunction::pair_of(&TorusFunction::mode(1, 3, &[1], 2, c(1.0, 0.0)), &TorusFunction::zeros(1, 3));
    match invert_normal_form(&nf, &g, 0.01, 3.0, 1e-10) {
        Err(Error::SmallDivisor { context, .. }) => assert!(context.contains("ℓ = [1]") && context.contains("σ = 1"), "{context}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unperturbed_chain_is_direct_solve() {
    let omega = [W];
    let params = ModelParams::new(&omega, 1.0, 0.0, 6);
    let p = BuiltinPlugin::default_for(1);
    let (_, l0) = assemble_linearized(&TorusFunction::zeros(1, 6), &params, &p).unwrap();
    let reg = regularize_operator(&l0, &RegConfig::new(1, 6, 6)).unwrap();
    let sched = KamSchedule::new(1, 8, 0.0, 0.1, 2.0);
    let kam = reduce(&reg, &sched).unwrap();
    let chain = ReducedChain::new(&l0, &reg, &kam);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut g = random_analytic(&mut rng, 1, 6, 1.0, 1.0, false).pair();
    for cc in 0..2 {
        for j in [-1, 1] {
            g.set(cc, &[0], j, c(0.0, 0.0));
        }
    }
    let (h, rep) = invert_l(&chain, &g, 1e-4, 3.0, 1e-10, 1.5).unwrap();
    for (l, j) in [(0i64, 0i64), (1, 2), (-2, 3), (3, -1)] {
        // component +: (iω·ℓ + i(m − j²)) h = g
        let expect = g.get(0, &[l], j) / (I * (W * l as f64 + 1.0 - (j * j) as f64));
        assert!((h.get(0, &[l], j) - expect).norm() < 1e-13, "({l}, {j})");
    }
    assert!(rep.end_to_end < 1e-13, "{}", rep.end_to_end);
}

#[test]
fn zero_forcing_accepts_zero() {
    let cfg = desk_cfg(0.0);
    let res = nash_moser_run(&cfg).unwrap();
    let p = &res.points[0];
    assert!(p.converged && p.records.len() == 1, "{p:?}");
    assert_eq!(p.records[0].residual, 0.0);
    assert_eq!(p.u.as_ref().unwrap().max_abs(), 0.0);
}

#[test]
fn desk_newton_run() {
    let mut cfg = desk_cfg(1e-3);
    cfg.n_cap = 10;
    let res = nash_moser_run(&cfg).unwrap();
    let p = &res.points[0];
    for r in &p.records {
        eprintln!("{} n={} res={:.3e} inc={:.3e} e2e={:.3e} tame={:.3e} kam={}", r.iterate, r.n, r.residual, r.increment, r.inversion.end_to_end, r.inversion.tame_ratio, r.kam_iterations);
    }
    eprintln!("colloc {:?} err {:?}", p.collocation, p.error);
    assert!(p.converged, "{:?}", p.error);
    assert!(p.records.len() >= 3);
    assert!(p.collocation.unwrap() < 1e-8);
    let (ok, worst, _) = newton_rate(&p.residuals(), 1e-2, 1e-14);
    assert!(ok, "{worst}");
    assert_eq!(res.masks.len(), p.records.len());
}

#[test]
fn config_roundtrip_and_errors() {
    let cfg = SolverConfig::from_toml("eps = 1e-4\ngamma_exp = 0.5\n[grid]\npoints = 9\n").unwrap();
    assert!((cfg.gamma() - 1e-2).abs() < 1e-15);
    assert_eq!(cfg.grid().len(), 9);
    assert!(matches!(SolverConfig::from_toml("gamma_exp = 1.5"), Err(Error::Config(_))));
    assert!(matches!(SolverConfig::from_toml("tol = -1.0"), Err(Error::Config(_))));
    assert!(matches!(SolverConfig::from_toml("bogus = 1"), Err(Error::Config(_))));
    assert!(matches!(SolverConfig::from_toml("[plugin]\nkind = \"other\""), Err(Error::Config(_))));
}

#[test]
fn newton_rate_edges() {
    assert!(newton_rate(&[1e-3, 1e-6, 1e-11], 1e-2, 1e-14).0);
    assert!(!newton_rate(&[1e-3, 1e-4, 1e-5], 1e-2, 1e-14).0);
    // a step into the roundoff floor is not judged
    let (ok, _, pairs) = newton_rate(&[1e-3, 1e-12, 3e-15], 1e-2, 1e-14);
    assert!(ok && pairs == 1);
}

#[test]
fn runs_are_reproducible_and_warm_start_agrees() {
    let mut cfg = desk_cfg(1e-3);
    cfg.n_cap = 10;
    let a = nash_moser_run(&cfg).unwrap();
    let b = nash_moser_run(&cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    cfg.warm_start = true;
    let w = nash_moser_run(&cfg).unwrap();
    let (pa, pw) = (&a.points[0], &w.points[0]);
    assert!(pw.converged, "{:?}", pw.error);
    let diff = (pa.u.as_ref().unwrap() - pw.u.as_ref().unwrap()).sobolev_norm(1.5);
    assert!(diff < 1e-12, "{diff}");
}

#[test]
fn first_iterate_solves_the_linearized_problem() {
    // f has no quadratic part, so (R(tu) − R(−tu))/2t = dR(0)u + O(εt²|u|³)
    let mut cfg = desk_cfg(1e-3);
    cfg.n_cap = 10;
    cfg.max_iters = 1;
    let res = nash_moser_run(&cfg).unwrap();
    let u1 = res.points[0].u.clone().unwrap();
    let params = ModelParams::new(&[W], 1.0, 1e-3, 10);
    let p = BuiltinPlugin::default_for(1);
    let r0 = residual(&TorusFunction::zeros(1, 10), &params, &p).unwrap();
    let t = 1e-2;
    let plus = residual(&u1.scale(c(t, 0.0)), &params, &p).unwrap();
    let minus = residual(&u1.scale(c(-t, 0.0)), &params, &p).unwrap();
    let lin = (&plus - &minus).scale(c(0.5 / t, 0.0));
    let rel = (&lin + &r0).sobolev_norm(1.5) / r0.sobolev_norm(1.5);
    assert!(rel < 1e-11, "{rel:.3e}");
    assert!(u1.max_abs() > 1e-4);
}
