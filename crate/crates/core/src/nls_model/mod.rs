//! The forced NLS  i ω·∂φ u = u_xx + m u + ε f(φ, x, u, u_x, u_xx),
//! its linearization in complex coordinates and the Hamiltonian checks.

mod operator;
mod plugin;
mod symplectic;

pub use operator::{DiffOperator, LinearizedCoefficients};
pub use plugin::{validate_plugin, BuiltinPlugin, NonlinearityPlugin, TrigPoly, TrigTerm};
pub use symplectic::{check_symplectic, pair_to_real, real_to_pair, symplectic_form, symplectic_form_at, symplectic_form_real};

use crate::error::{Error, Result};
use crate::fourier_core::{grid_point, grid_side, Reality, TorusFunction, DEFAULT_OVERSAMPLE};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub d: usize,
    pub m: f64,
    pub eps: f64,
    pub omega: Vec<f64>,
    pub n: usize,
    pub oversample: usize,
}

impl ModelParams {
    pub fn new(omega: &[f64], m: f64, eps: f64, n: usize) -> Self {
        ModelParams { d: omega.len(), m, eps, omega: omega.to_vec(), n, oversample: DEFAULT_OVERSAMPLE }
    }

    pub fn with_omega(&self, omega: &[f64]) -> Self {
        ModelParams { omega: omega.to_vec(), ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0) {
            return Err(Error::Config(format!("mass must be positive, got {}", self.m)));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::Config(format!("ε must be ≥ 0, got {}", self.eps)));
        }
        if self.omega.len() != self.d || !(1..=3).contains(&self.d) {
            return Err(Error::Config("ω must have 1 ≤ d ≤ 3 entries".into()));
        }
        Ok(())
    }
}

/// u, u_x, u_xx on the physical grid of side m.
pub(crate) struct GridState {
    pub m: usize,
    pub z: [Vec<C64>; 3],
}

pub(crate) fn grid_state(u: &TorusFunction, m: usize) -> GridState {
    let u0 = u.component(0);
    GridState { m, z: [u0.to_grid(m), u0.dx().to_grid(m), u0.dxx().to_grid(m)] }
}

fn finite_or_err(v: C64) -> Result<C64> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::Model("non-finite nonlinearity value".into()))
    }
}

/// f(φ, x, u, u_x, u_xx) projected to the cutoff of u.
pub fn nonlinearity<P: NonlinearityPlugin + ?Sized>(u: &TorusFunction, params: &ModelParams, plugin: &P) -> Result<TorusFunction> {
    let d = u.d;
    let m = grid_side(u.n, params.oversample);
    let gs = grid_state(u, m);
    let vals: Vec<C64> = (0..gs.z[0].len())
        .into_par_iter()
        .map(|p| {
            let (phi, x) = grid_point(d, m, p);
            finite_or_err(plugin.f(&phi[..d], x, [gs.z[0][p], gs.z[1][p], gs.z[2][p]]))
        })
        .collect::<Result<_>>()?;
    Ok(TorusFunction::from_grid(d, u.n, m, vals, Reality::Complex))
}

/// Complex-form residual iω·∂φu − u_xx − mu − εf.
pub fn residual<P: NonlinearityPlugin + ?Sized>(u: &TorusFunction, params: &ModelParams, plugin: &P) -> Result<TorusFunction> {
    let u0 = u.component(0);
    let lin = &(&u0.omega_dphi(&params.omega).scale(C64::new(0.0, 1.0)) - &u0.dxx()) - &(&u0 * params.m);
    if params.eps == 0.0 {
        return Ok(lin);
    }
    let f = nonlinearity(&u0, params, plugin)?;
    Ok(&lin - &(&f * params.eps))
}

/// F on a pair (u, ū): the residual and its conjugate.
#[allow(non_snake_case)]
pub fn eval_F<P: NonlinearityPlugin + ?Sized>(u: &TorusFunction, params: &ModelParams, plugin: &P) -> Result<TorusFunction> {
    let r = residual(u, params, plugin)?;
    let mut out = TorusFunction::pair_of(&r, &r.conj_reflect());
    out.reality = Reality::ConjugatePair;
    Ok(out)
}

/// Real form D_ω w + εg(w), w = (ξ, η), g = (−f₂, f₁), f = f₁ + if₂.
#[allow(non_snake_case)]
pub fn eval_F_real<P: NonlinearityPlugin + ?Sized>(w: &TorusFunction, params: &ModelParams, plugin: &P) -> Result<TorusFunction> {
    let xi = w.component(0);
    let eta = w.component(1);
    let om = &params.omega;
    let u = &xi + &eta.scale(C64::new(0.0, 1.0));
    let f = if params.eps == 0.0 { TorusFunction::zeros(w.d, w.n) } else { &nonlinearity(&u, params, plugin)? * params.eps };
    let (f1, f2) = (f.real_part(), f.imag_part());
    let row1 = &(&xi.omega_dphi(om) - &eta.dxx()) - &(&(&eta * params.m) + &f2);
    let row2 = &(&(&xi.dxx() + &(&xi * params.m)) + &eta.omega_dphi(om)) + &f1;
    Ok(TorusFunction::pair_of(&row1, &row2))
}

/// Coefficients a_i = ε ∂f/∂z_i, b_i = ε ∂f/∂z̄_i along z, and L(z).
pub fn assemble_linearized<P: NonlinearityPlugin + ?Sized>(
    z: &TorusFunction,
    params: &ModelParams,
    plugin: &P,
) -> Result<(LinearizedCoefficients, DiffOperator)> {
    let d = z.d;
    let n = params.n;
    let z0 = z.component(0).resize(n);
    let m = grid_side(n, params.oversample);
    let gs = grid_state(&z0, m);
    let total = gs.z[0].len();
    let parts: Vec<([C64; 3], [C64; 3])> = (0..total)
        .into_par_iter()
        .map(|p| {
            let (phi, x) = grid_point(d, gs.m, p);
            plugin.f_partials(&phi[..d], x, [gs.z[0][p], gs.z[1][p], gs.z[2][p]])
        })
        .collect();
    let field = |k: usize, conj: bool| {
        let vals: Vec<C64> = parts.iter().map(|(a, b)| if conj { b[k] } else { a[k] } * params.eps).collect();
        TorusFunction::from_grid(d, n, m, vals, Reality::Complex)
    };
    let coeffs = LinearizedCoefficients {
        a: [field(0, false), field(1, false), field(2, false)],
        b: [field(0, true), field(1, true), field(2, true)],
    };
    let scale = 1.0 + coeffs.max_abs();
    let defect = coeffs.structure_defect();
    if defect > 1e-8 * scale {
        return Err(Error::Structure(format!("linearized coefficients violate the Hamiltonian relations by {defect:.3e}")));
    }
    let op = DiffOperator::new(&params.omega, params.m, coeffs.clone());
    Ok((coeffs, op))
}

/// Reconstructs f from the density on `samples` random states and compares
/// with the plugin's f. Returns (passes, max coefficient mismatch).
pub fn check_hyp1<P: NonlinearityPlugin + ?Sized>(plugin: &P, d: usize, n: usize, samples: usize, tol: f64, seed: u64) -> (bool, f64) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let m = grid_side(n, DEFAULT_OVERSAMPLE);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let u = crate::fourier_core::random_analytic(&mut rng, d, n, 0.5, 0.8, false);
        let gs = grid_state(&u, m);
        let total = gs.z[0].len();
        let mut d0 = vec![C64::new(0.0, 0.0); total];
        let mut d1 = vec![C64::new(0.0, 0.0); total];
        let mut fv = vec![C64::new(0.0, 0.0); total];
        for p in 0..total {
            let (phi, x) = grid_point(d, m, p);
            let (u0, ux) = (gs.z[0][p], gs.z[1][p]);
            let g = plugin.density_grad(&phi[..d], x, [u0.re, u0.im, ux.re, ux.im]);
            d0[p] = C64::new(g[0], g[1]);
            d1[p] = C64::new(g[2], g[3]);
            fv[p] = plugin.f(&phi[..d], x, [u0, ux, gs.z[2][p]]);
        }
        let nn = n;
        let rec = &TorusFunction::from_grid(d, nn, m, d0, Reality::Complex) - &TorusFunction::from_grid(d, nn, m, d1, Reality::Complex).dx();
        let direct = TorusFunction::from_grid(d, nn, m, fv, Reality::Complex);
        worst = worst.max((&rec - &direct).max_abs());
    }
    (worst <= tol, worst)
}

/// e = (φ,x)-average of ∂f/∂u_x at the zero state.
pub fn check_hyp2<P: NonlinearityPlugin + ?Sized>(plugin: &P, d: usize, floor: f64) -> Result<C64> {
    let m = 16usize;
    let total = m.pow(d as u32 + 1);
    let zero = [C64::new(0.0, 0.0); 3];
    let sum: C64 = (0..total)
        .map(|p| {
            let (phi, x) = grid_point(d, m, p);
            plugin.f_partials(&phi[..d], x, zero).0[1]
        })
        .sum();
    let e = sum / total as f64;
    if e.norm() < floor {
        return Err(Error::Degeneracy(format!("|e| = {:.3e} below floor {floor:.3e}", e.norm())));
    }
    Ok(e)
}

/// ∫∫ G(u) over the torus (normalized measure).
pub fn density_integral<P: NonlinearityPlugin + ?Sized>(u: &TorusFunction, plugin: &P, m: usize) -> f64 {
    let d = u.d;
    let gs = grid_state(u, m);
    let total = gs.z[0].len();
    (0..total)
        .map(|p| {
            let (phi, x) = grid_point(d, m, p);
            let (u0, ux) = (gs.z[0][p], gs.z[1][p]);
            plugin.density(&phi[..d], x, [u0.re, u0.im, ux.re, ux.im])
        })
        .sum::<f64>()
        / total as f64
}

/// Checks that f is the L² gradient of ∫G: the central difference of ∫G
/// along h against Re ∫ f h̄, on `samples` random (u, h). Returns the largest
/// relative mismatch.
pub fn hamiltonian_consistency<P: NonlinearityPlugin + ?Sized>(plugin: &P, d: usize, n: usize, samples: usize, seed: u64) -> Result<f64> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let m = grid_side(n, DEFAULT_OVERSAMPLE);
    let params = ModelParams::new(&vec![1.0; d], 1.0, 1.0, n);
    let mut worst: f64 = 0.0;
    let delta = 1e-4;
    for _ in 0..samples {
        let u = crate::fourier_core::random_analytic(&mut rng, d, n, 0.5, 0.8, false);
        let h = crate::fourier_core::random_analytic(&mut rng, d, n, 0.5, 0.8, false);
        let up = &u + &(&h * delta);
        let um = &u - &(&h * delta);
        let fd = (density_integral(&up, plugin, m) - density_integral(&um, plugin, m)) / (2.0 * delta);
        let f = nonlinearity(&u, &params, plugin)?;
        let fg = f.to_grid(m);
        let hg = h.to_grid(m);
        let pairing = fg.iter().zip(&hg).map(|(a, b)| (a * b.conj()).re).sum::<f64>() / fg.len() as f64;
        worst = worst.max((fd - pairing).abs() / (1.0 + pairing.abs()));
    }
    Ok(worst)
}
