//! Ω(u, v) = Re ∫_T i u v̄ dx and the checks built on it.

use crate::fourier_core::{random_analytic, Reality, TorusFunction};
use crate::operator_algebra::Transformation;
use num_complex::Complex64 as C64;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2, TAU};

/// Ω on space-only coefficient vectors indexed j = −N..N (same N for both).
pub fn symplectic_form(u: &[C64], v: &[C64]) -> f64 {
    assert_eq!(u.len(), v.len());
    let s: C64 = u.iter().zip(v).map(|(a, b)| a * b.conj()).sum();
    2.0 * PI * (C64::new(0.0, 1.0) * s).re
}

/// Ω(u(φ,·), v(φ,·)) on the first components.
pub fn symplectic_form_at(u: &TorusFunction, v: &TorusFunction, phi: &[f64]) -> f64 {
    let n = u.n.max(v.n);
    symplectic_form(&u.resize(n).slice_phi(0, phi), &v.resize(n).slice_phi(0, phi))
}

/// ∫_T (ξ₁η₂ − ξ₂η₁) dx for real pairs (ξ, η) at fixed φ.
pub fn symplectic_form_real(w1: &TorusFunction, w2: &TorusFunction, phi: &[f64]) -> f64 {
    let n = w1.n.max(w2.n);
    let (a, b) = (w1.resize(n), w2.resize(n));
    let (x1, e1, x2, e2) = (a.slice_phi(0, phi), a.slice_phi(1, phi), b.slice_phi(0, phi), b.slice_phi(1, phi));
    // ∫ f g = 2π Σ_j f_j g_{−j}
    let pairing = |f: &[C64], g: &[C64]| -> C64 { f.iter().zip(g.iter().rev()).map(|(p, q)| p * q).sum::<C64>() * (2.0 * PI) };
    (pairing(&x1, &e2) - pairing(&x2, &e1)).re
}

/// (v⁽¹⁾, v⁽²⁾) ↦ (v, v̄), v = v⁽¹⁾ + iv⁽²⁾, written as T₁⁻¹T with
/// T = [[i, −1], [1, −i]]/√2 and T₁⁻¹ = diag(−i√2, √2).
pub fn real_to_pair(w: &TorusFunction) -> TorusFunction {
    let i = C64::new(0.0, 1.0);
    let (v1, v2) = (w.component(0), w.component(1));
    let t_plus = &v1.scale(i * FRAC_1_SQRT_2) - &(&v2 * FRAC_1_SQRT_2);
    let t_minus = &(&v1 * FRAC_1_SQRT_2) - &v2.scale(i * FRAC_1_SQRT_2);
    let mut out = TorusFunction::pair_of(&t_plus.scale(-i * SQRT_2), &(&t_minus * SQRT_2));
    out.reality = Reality::ConjugatePair;
    out
}

/// Inverse of `real_to_pair` on the constraint set.
pub fn pair_to_real(u: &TorusFunction) -> TorusFunction {
    let up = u.component(0);
    TorusFunction::pair_of(&up.real_part(), &up.imag_part())
}

/// |Ω(Tu, Tv) − Ω(u, v)| over random truncated pairs at random φ, with the
/// input sampled at the transformation's source time. Passes iff the worst
/// violation is ≤ tol·(1 + ‖u‖₁‖v‖₁).
pub fn check_symplectic(t: &Transformation, d: usize, n: usize, samples: usize, tol: f64, seed: u64) -> (bool, f64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for _ in 0..samples {
        let u = random_analytic(&mut rng, d, n / 2, 1.0, 1.0, false).resize(n);
        let v = random_analytic(&mut rng, d, n / 2, 1.0, 1.0, false).resize(n);
        // room for the image's tail
        let (tu, tv) = match (t.apply(&u.resize(2 * n).pair()), t.apply(&v.resize(2 * n).pair())) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return (false, f64::INFINITY),
        };
        let phi: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..TAU)).collect();
        let src = t.source_time(&phi);
        let after = symplectic_form_at(&tu, &tv, &phi);
        let before = symplectic_form_at(&u, &v, &src);
        let viol = (after - before).abs();
        worst = worst.max(viol);
        if viol > tol * (1.0 + u.sobolev_norm(1.0) * v.sobolev_norm(1.0)) {
            pass = false;
        }
    }
    (pass, worst)
}
