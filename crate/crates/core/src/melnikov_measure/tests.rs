use super::*;
use crate::operator_algebra::sidx;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn flat(omega: &[f64], jc: usize) -> NormalForm {
    NormalForm::unperturbed(omega, omega.len(), jc, 1.0, 1.0, c(0.0, 0.0), 1.0)
}

#[test]
fn vacuous_s_test() {
    let nf = flat(&[0.9], 4);
    let q = melnikov_test(MelnikovKind::S, &nf, &[0], 1, 2, 1, 2, 0.1, 3.0).unwrap();
    assert_eq!(q.divisor, 0.0);
    assert_eq!(q.threshold, 0.0);
    assert!(q.pass);
    let q = melnikov_test(MelnikovKind::S, &nf, &[0], -1, 3, -1, -3, 0.1, 3.0).unwrap();
    assert!(q.pass && q.threshold == 0.0);
}

#[test]
fn first_melnikov_example() {
    let nf = flat(&[1.0], 4);
    let q = melnikov_test(MelnikovKind::P, &nf, &[1], 1, 0, 1, 0, 0.5, 3.0).unwrap();
    // |ω·ℓ + σ(m − j²)| computed directly
    let direct: f64 = (1.0f64 * 1.0 + 1.0 * (1.0 - 0.0)).abs();
    assert!((q.divisor - direct).abs() < 1e-15);
    assert!((q.threshold - 1.0).abs() < 1e-15);
    assert!(q.pass);
}

#[test]
fn o_test_usage() {
    let nf = flat(&[1.0], 4);
    assert!(matches!(melnikov_test(MelnikovKind::O, &nf, &[0], 1, 2, 1, -2, 0.1, 3.0), Err(Error::Usage(_))));
    assert!(matches!(melnikov_test(MelnikovKind::O, &nf, &[1], 1, 2, 1, 3, 0.1, 3.0), Err(Error::Usage(_))));
    assert!(matches!(melnikov_test(MelnikovKind::O, &nf, &[1], 1, 2, -1, 2, 0.1, 3.0), Err(Error::Usage(_))));
    assert!(melnikov_test(MelnikovKind::O, &nf, &[1], 1, 2, 1, -2, 0.1, 3.0).is_ok());
}

#[test]
fn diophantine_examples() {
    let one = ParamGrid::single(&[1.0]);
    for g0 in [0.1, 0.5, 1.0] {
        assert!(diophantine_mask(&one, g0, 2.0, 20)[0]);
    }
    let two = ParamGrid::single(&[1.0, 2.0 / 3.0]);
    assert!(!diophantine_mask(&two, 1e-6, 3.0, 3)[0]);
    // ℓ = (2, −3) is the witness: below |ℓ|∞ = 3 the point passes a small γ₀
    assert!(diophantine_mask(&two, 1e-3, 3.0, 2)[0]);
    let grid = ParamGrid::uniform(1, 65);
    let mut prev = usize::MAX;
    for g0 in [0.01, 0.05, 0.1, 0.2, 0.4] {
        let cnt = diophantine_mask(&grid, g0, 2.0, 16).iter().filter(|b| **b).count();
        assert!(cnt <= prev);
        prev = cnt;
    }
}

#[test]
fn cutoff_with_constant_b() {
    let m1: f64 = 0.01;
    let omega = [0.8317];
    for l in 1..6i64 {
        let r = cutoff_j_range(&[l], &omega, 1e-3, 2.0, None, 10_000, |j| 2.0 * m1 * j as f64);
        let wl = 0.8317 * l as f64;
        let lo = (wl / (4.0 * m1)).ceil() as i64;
        let hi = (wl / m1).floor() as i64;
        let expect: Vec<i64> = (lo..=hi).filter(|j| (*j as f64) <= r.jbound).collect();
        assert_eq!(r.js, expect, "ℓ = {l}");
    }
    assert!(cutoff_j_range(&[0], &omega, 1e-3, 2.0, None, 100, |_| 1.0).js.is_empty());
}

/// Unperturbed constants plus small Hermitian corrections on every cluster.
fn random_nf<R: Rng>(rng: &mut R, omega: &[f64], jc: usize, eps: f64) -> NormalForm {
    let mut nf = NormalForm::unperturbed(omega, 1, jc, 1.0, 1.0 + eps * rng.gen_range(-1.0..1.0), c(0.0, -2.0 * eps), 1.0 + eps * rng.gen_range(-1.0..1.0));
    for sigma in [1i8, -1] {
        for j in 1..=jc {
            let w = eps / j as f64;
            let a = rng.gen_range(-w..w);
            let d = rng.gen_range(-w..w);
            let b = c(rng.gen_range(-w..w), rng.gen_range(-w..w));
            let is = c(0.0, sigma as f64);
            let blk = &mut nf.blocks[sidx(sigma)][j];
            blk[(0, 0)] += is * a;
            blk[(1, 1)] += is * d;
            blk[(0, 1)] += is * b;
            blk[(1, 0)] += is * b.conj();
        }
    }
    nf
}

#[test]
fn cutoff_soundness_exhaustive() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let grid = ParamGrid::uniform(1, 33);
    let eps: f64 = 1e-2;
    let cfg = GoodSetConfig::new(eps.sqrt(), 3.0, eps, 2.0);
    let fam: Vec<Option<NormalForm>> = grid.points.iter().map(|w| Some(random_nf(&mut rng, w, 40, eps))).collect();
    let gs = build_good_sets(&[fam], &grid, &[12], &cfg);
    assert_eq!(gs.stats[0].soundness_violations, 0);
    assert!(gs.stats[0].cutoff_skipped > 0);
}

#[test]
fn unperturbed_p_failures_match_enumeration() {
    let grid = ParamGrid::uniform(1, 65);
    let (gamma, tau, jc, lmax) = (0.05, 3.0, 6usize, 8usize);
    let cfg = GoodSetConfig::new(gamma, tau, 0.0, 2.0);
    let fam: Vec<Option<NormalForm>> = grid.points.iter().map(|w| Some(flat(w, jc))).collect();
    let gs = build_good_sets(&[fam], &grid, &[lmax], &cfg);
    let gamma0 = 2.0 * gamma;
    for (k, w) in grid.points.iter().enumerate() {
        let mut fail = false;
        for l in -(lmax as i64)..=lmax as i64 {
            for j in -(jc as i64)..=jc as i64 {
                if l == 0 && j * j == 1 {
                    continue;
                }
                for s in [1.0, -1.0] {
                    let div = (w[0] * l as f64 + s * (1.0 - (j * j) as f64)).abs();
                    let thr = 2.0 * gamma0 * (j.abs().max(1) as f64).powi(2) / (l.abs().max(1) as f64).powf(tau);
                    fail |= div < thr || div == 0.0;
                }
            }
        }
        assert_eq!(!gs.p[0][k], fail, "ω = {}", w[0]);
    }
}

#[test]
fn masks_are_nested() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let grid = ParamGrid::uniform(1, 33);
    let eps: f64 = 1e-3;
    let cfg = GoodSetConfig::new(eps.sqrt(), 3.0, eps, 2.0);
    let fams: Vec<Vec<Option<NormalForm>>> = (0..3)
        .map(|n| grid.points.iter().enumerate().map(|(k, w)| if n == 2 && k == 5 { None } else { Some(random_nf(&mut rng, w, 8, eps)) }).collect())
        .collect();
    let gs = build_good_sets(&fams, &grid, &[8, 22, 103], &cfg);
    for n in 1..3 {
        for k in 0..grid.len() {
            for m in [&gs.g, &gs.h, &gs.p, &gs.combined] {
                assert!(!m[n][k] || m[n - 1][k]);
            }
        }
    }
    assert!(!gs.combined[2][5]);
    assert!(gs.stats.iter().all(|s| (0.0..=1.0).contains(&s.excluded_fraction)));
}

#[test]
fn zero_gamma_excludes_exact_resonances_only() {
    let grid = ParamGrid::uniform(1, 17);
    let cfg = GoodSetConfig::new(0.0, 3.0, 0.0, 2.0);
    let fam: Vec<Option<NormalForm>> = grid.points.iter().map(|w| Some(flat(w, 4))).collect();
    let gs = build_good_sets(&[fam], &grid, &[4], &cfg);
    for (k, w) in grid.points.iter().enumerate() {
        // every eigenvalue difference is an integer: exact resonance iff ω·ℓ ∈ Z for some 0 < |ℓ| ≤ 4
        let integer_multiple = (1..=4).any(|l| (w[0] * l as f64).fract() == 0.0);
        assert_eq!(!gs.combined[0][k], integer_multiple, "ω = {}", w[0]);
    }
}

#[test]
fn nbar_behaviour() {
    let a = nbar(1e-3, 1e-3f64.sqrt(), 8, 10.0, 3.0, 1.0).unwrap();
    let b = nbar(0.5e-3, 1e-3f64.sqrt(), 8, 10.0, 3.0, 1.0).unwrap();
    assert!(b.value >= a.value && b.value <= a.value + 1);
    assert!(b.raw > a.raw);
    let clamped = nbar(0.9, 0.9, 8, 10.0, 3.0, 1.0).unwrap();
    assert!(clamped.clamped && clamped.value == 0);
    assert!(matches!(nbar(1e-3, 0.03, 8, 5.0, 3.0, 1.0), Err(Error::Usage(_))));
    let mut prev = f64::NEG_INFINITY;
    for k in 1..8 {
        let r = nbar(10f64.powi(-k), 0.1, 8, 10.0, 3.0, 1.0).unwrap().raw;
        assert!(r >= prev);
        prev = r;
    }
}

#[test]
fn single_eps_skips_trend() {
    let grid = ParamGrid::uniform(1, 9);
    let cfg = GoodSetConfig::new(0.03, 3.0, 1e-3, 2.0);
    let fam: Vec<Option<NormalForm>> = grid.points.iter().map(|w| Some(flat(w, 3))).collect();
    let gs = build_good_sets(&[fam], &grid, &[4], &cfg);
    let rep = measure_report(&[(1e-3, 0.03, gs)], grid.len());
    assert!(!rep.trend_checked && !rep.trend_ok);
    assert!(rep.csv().starts_with("eps,gamma,iterate,kind,excluded_fraction\n"));
    assert!(rep.text().contains("skipped"));
}
