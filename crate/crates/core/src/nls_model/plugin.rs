//! Hamiltonian nonlinearities given by a real density G(φ, x, ξ, η, ξ_x, η_x),
//! u = ξ + iη, with f = ∂_{z̄₀}G − d/dx ∂_{z̄₁}G and ∂_{z̄} = ∂_ξ + i∂_η.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Pointwise evaluators. All derivatives of f are Wirtinger derivatives
/// ∂/∂z = ½(∂_a − i∂_b), ∂/∂z̄ = ½(∂_a + i∂_b) with z = a + ib, taken in
/// the slots z = (u, u_x, u_xx).
pub trait NonlinearityPlugin: Send + Sync {
    fn name(&self) -> &str;
    fn density(&self, phi: &[f64], x: f64, w: [f64; 4]) -> f64;
    fn density_grad(&self, phi: &[f64], x: f64, w: [f64; 4]) -> [f64; 4];
    fn density_hessian(&self, phi: &[f64], x: f64, w: [f64; 4]) -> [[f64; 4]; 4];
    fn f(&self, phi: &[f64], x: f64, z: [C64; 3]) -> C64;
    /// (∂f/∂z_i, ∂f/∂z̄_i) for i = 0, 1, 2.
    fn f_partials(&self, phi: &[f64], x: f64, z: [C64; 3]) -> ([C64; 3], [C64; 3]);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub ell: Vec<i64>,
    pub j: i64,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Finite sum Σ c e^{i(ℓ·φ + jx)}.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    pub terms: Vec<TrigTerm>,
}

impl TrigPoly {
    pub fn term(ell: &[i64], j: i64, c: C64) -> TrigTerm {
        TrigTerm { ell: ell.to_vec(), j, re: c.re, im: c.im }
    }

    fn phase(t: &TrigTerm, phi: &[f64], x: f64) -> C64 {
        let arg: f64 = t.ell.iter().zip(phi).map(|(l, p)| *l as f64 * p).sum::<f64>() + t.j as f64 * x;
        C64::new(t.re, t.im) * C64::from_polar(1.0, arg)
    }

    pub fn eval(&self, phi: &[f64], x: f64) -> C64 {
        self.terms.iter().map(|t| Self::phase(t, phi, x)).sum()
    }

    pub fn eval_dx(&self, phi: &[f64], x: f64) -> C64 {
        self.terms.iter().map(|t| Self::phase(t, phi, x) * C64::new(0.0, t.j as f64)).sum()
    }

    pub fn mean(&self) -> C64 {
        self.terms
            .iter()
            .filter(|t| t.j == 0 && t.ell.iter().all(|l| *l == 0))
            .map(|t| C64::new(t.re, t.im))
            .sum()
    }

    pub fn scaled(&self, a: f64) -> TrigPoly {
        let terms = self.terms.iter().map(|t| TrigTerm { re: t.re * a, im: t.im * a, ..t.clone() }).collect();
        TrigPoly { terms }
    }

    /// max over terms of |c_{ℓ,j} − conj c_{−ℓ,−j}|.
    pub fn reality_defect(&self) -> f64 {
        let coeff = |ell: &[i64], j: i64| -> C64 {
            self.terms.iter().filter(|t| t.j == j && t.ell == ell).map(|t| C64::new(t.re, t.im)).sum()
        };
        self.terms
            .iter()
            .map(|t| {
                let neg: Vec<i64> = t.ell.iter().map(|l| -l).collect();
                (coeff(&t.ell, t.j) - coeff(&neg, -t.j).conj()).norm()
            })
            .fold(0.0, f64::max)
    }
}

fn unit(d: usize, k: usize, s: i64) -> Vec<i64> {
    let mut e = vec![0; d];
    e[k] = s;
    e
}

/// G = ξ Re h + η Im h + p(ξη_x − ηξ_x) + κ(ξ² + η²)(ξ_x² + η_x²), so that
/// f = h − 2ip u_x − ip_x u − 2κ(ū u_x² + |u|² u_xx).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuiltinPlugin {
    pub h: TrigPoly,
    pub p: TrigPoly,
    pub kappa: f64,
}

impl BuiltinPlugin {
    /// h = cos φ₁ cos x, p = 1 + cos(φ₁ + x), κ = 1.
    pub fn default_for(d: usize) -> Self {
        let q = C64::new(0.25, 0.0);
        let half = C64::new(0.5, 0.0);
        let mut h = TrigPoly::default();
        for s in [-1, 1] {
            for j in [-1, 1] {
                h.terms.push(TrigPoly::term(&unit(d, 0, s), j, q));
            }
        }
        let p = TrigPoly {
            terms: vec![
                TrigPoly::term(&vec![0; d], 0, C64::new(1.0, 0.0)),
                TrigPoly::term(&unit(d, 0, 1), 1, half),
                TrigPoly::term(&unit(d, 0, -1), -1, half),
            ],
        };
        BuiltinPlugin { h, p, kappa: 1.0 }
    }

    fn pr(&self, phi: &[f64], x: f64) -> f64 {
        self.p.eval(phi, x).re
    }
}

impl NonlinearityPlugin for BuiltinPlugin {
    fn name(&self) -> &str {
        "builtin"
    }

    fn density(&self, phi: &[f64], x: f64, w: [f64; 4]) -> f64 {
        let [xi, eta, xix, etax] = w;
        let h = self.h.eval(phi, x);
        let p = self.pr(phi, x);
        xi * h.re + eta * h.im + p * (xi * etax - eta * xix) + self.kappa * (xi * xi + eta * eta) * (xix * xix + etax * etax)
    }

    fn density_grad(&self, phi: &[f64], x: f64, w: [f64; 4]) -> [f64; 4] {
        let [xi, eta, xix, etax] = w;
        let h = self.h.eval(phi, x);
        let p = self.pr(phi, x);
        let k = self.kappa;
        let pp = xi * xi + eta * eta;
        let qq = xix * xix + etax * etax;
        [
            h.re + p * etax + 2.0 * k * xi * qq,
            h.im - p * xix + 2.0 * k * eta * qq,
            -p * eta + 2.0 * k * pp * xix,
            p * xi + 2.0 * k * pp * etax,
        ]
    }

    fn density_hessian(&self, phi: &[f64], x: f64, w: [f64; 4]) -> [[f64; 4]; 4] {
        let [xi, eta, xix, etax] = w;
        let p = self.pr(phi, x);
        let k = self.kappa;
        let pp = xi * xi + eta * eta;
        let qq = xix * xix + etax * etax;
        [
            [2.0 * k * qq, 0.0, 4.0 * k * xi * xix, p + 4.0 * k * xi * etax],
            [0.0, 2.0 * k * qq, -p + 4.0 * k * eta * xix, 4.0 * k * eta * etax],
            [4.0 * k * xi * xix, -p + 4.0 * k * eta * xix, 2.0 * k * pp, 0.0],
            [p + 4.0 * k * xi * etax, 4.0 * k * eta * etax, 0.0, 2.0 * k * pp],
        ]
    }

    fn f(&self, phi: &[f64], x: f64, z: [C64; 3]) -> C64 {
        let [u, ux, uxx] = z;
        let i = C64::new(0.0, 1.0);
        let h = self.h.eval(phi, x);
        let p = self.pr(phi, x);
        let px = self.p.eval_dx(phi, x).re;
        h - i * 2.0 * p * ux - i * px * u - 2.0 * self.kappa * (u.conj() * ux * ux + u.norm_sqr() * uxx)
    }

    fn f_partials(&self, phi: &[f64], x: f64, z: [C64; 3]) -> ([C64; 3], [C64; 3]) {
        let [u, ux, uxx] = z;
        let i = C64::new(0.0, 1.0);
        let k = self.kappa;
        let p = self.pr(phi, x);
        let px = self.p.eval_dx(phi, x).re;
        let zero = C64::new(0.0, 0.0);
        (
            [-i * px - 2.0 * k * u.conj() * uxx, -i * 2.0 * p - 4.0 * k * u.conj() * ux, C64::new(-2.0 * k * u.norm_sqr(), 0.0)],
            [-2.0 * k * (ux * ux + u * uxx), zero, zero],
        )
    }
}

/// Largest mismatch between the supplied derivatives and central finite
/// differences, relative to 1 + |value|, over `samples` random arguments.
pub fn validate_plugin<P: NonlinearityPlugin + ?Sized>(plugin: &P, d: usize, samples: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let hstep = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let phi: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        let x = rng.gen_range(0.0..std::f64::consts::TAU);
        let w: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let g = plugin.density_grad(&phi, x, w);
        let hs = plugin.density_hessian(&phi, x, w);
        for k in 0..4 {
            let mut wp = w;
            let mut wm = w;
            wp[k] += hstep;
            wm[k] -= hstep;
            let fd = (plugin.density(&phi, x, wp) - plugin.density(&phi, x, wm)) / (2.0 * hstep);
            worst = worst.max((fd - g[k]).abs() / (1.0 + g[k].abs()));
            let gp = plugin.density_grad(&phi, x, wp);
            let gm = plugin.density_grad(&phi, x, wm);
            for l in 0..4 {
                let fd = (gp[l] - gm[l]) / (2.0 * hstep);
                worst = worst.max((fd - hs[l][k]).abs() / (1.0 + hs[l][k].abs()));
            }
        }
        let z: [C64; 3] = std::array::from_fn(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let (dz, dzb) = plugin.f_partials(&phi, x, z);
        for k in 0..3 {
            let diff = |dir: C64| {
                let mut zp = z;
                let mut zm = z;
                zp[k] += dir * hstep;
                zm[k] -= dir * hstep;
                (plugin.f(&phi, x, zp) - plugin.f(&phi, x, zm)) / (2.0 * hstep)
            };
            let da = diff(C64::new(1.0, 0.0));
            let db = diff(C64::new(0.0, 1.0));
            let wz = (da - C64::new(0.0, 1.0) * db) * 0.5;
            let wzb = (da + C64::new(0.0, 1.0) * db) * 0.5;
            worst = worst.max((wz - dz[k]).norm() / (1.0 + dz[k].norm()));
            worst = worst.max((wzb - dzb[k]).norm() / (1.0 + dzb[k].norm()));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_derivatives_match_finite_differences() {
        for d in 1..=2 {
            let p = BuiltinPlugin::default_for(d);
            assert!(validate_plugin(&p, d, 20, 5) < 1e-7);
        }
    }

    #[test]
    fn default_coefficients() {
        let p = BuiltinPlugin::default_for(1);
        assert!((p.h.eval(&[0.3], 0.7).re - 0.3f64.cos() * 0.7f64.cos()).abs() < 1e-15);
        assert!((p.p.eval(&[0.3], 0.7).re - (1.0 + 1.0f64.cos())).abs() < 1e-15);
        assert!((p.p.eval_dx(&[0.3], 0.7).re + 1.0f64.sin()).abs() < 1e-15);
        assert_eq!(p.p.mean(), C64::new(1.0, 0.0));
        assert_eq!(p.p.reality_defect(), 0.0);
    }

    #[test]
    fn density_is_real_form_of_f_at_zero() {
        let p = BuiltinPlugin::default_for(1);
        let z = [C64::new(0.0, 0.0); 3];
        assert_eq!(p.f(&[0.0], 0.0, z), C64::new(1.0, 0.0));
    }
}
