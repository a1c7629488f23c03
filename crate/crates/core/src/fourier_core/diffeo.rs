//! Composition with diffeomorphisms of the torus by trigonometric
//! interpolation at off-grid points.

use super::{grid_side, Reality, Shape, TorusFunction, MAX_D};
use crate::error::{Error, Result};
use crate::grid::{fft_axis, wrap};
use num_complex::Complex64 as C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const MAX_FIXED_POINT: usize = 400;

/// Coefficients transformed to physical φ on an m-grid, j kept spectral.
/// Layout: [m; d] × (2N+1), j fastest.
fn phi_physical(u: &[C64], sh: Shape, m: usize) -> Vec<C64> {
    let side = sh.side();
    let tl = m.pow(sh.d as u32);
    let mut buf = vec![ZERO; tl * side];
    for (i, v) in u.iter().enumerate() {
        if *v == ZERO {
            continue;
        }
        let (ell, j) = sh.decode(i);
        let mut p = 0usize;
        for &l in &ell[..sh.d] {
            p = p * m + wrap(l, m);
        }
        buf[p * side + (j + sh.n as i64) as usize] = *v;
    }
    let mut dims = vec![m; sh.d];
    dims.push(side);
    for axis in 0..sh.d {
        fft_axis(&mut buf, &dims, axis, true);
    }
    buf
}

/// Coefficients transformed to physical x on an m-grid, ℓ kept spectral.
/// Layout: [(2N+1); d] × m.
fn x_physical(u: &[C64], sh: Shape, m: usize) -> Vec<C64> {
    let side = sh.side();
    let tl = sh.time_len();
    let mut buf = vec![ZERO; tl * m];
    for (i, v) in u.iter().enumerate() {
        if *v == ZERO {
            continue;
        }
        let t = i / side;
        let j = (i % side) as i64 - sh.n as i64;
        buf[t * m + wrap(j, m)] = *v;
    }
    let mut dims = vec![side; sh.d];
    dims.push(m);
    fft_axis(&mut buf, &dims, sh.d, true);
    buf
}

/// Σ_j c_j e^{ijy} for j = −n..n.
#[inline]
fn eval_x_series(c: &[C64], n: usize, y: f64) -> C64 {
    let step = C64::from_polar(1.0, y);
    let mut e = C64::from_polar(1.0, -(n as f64) * y);
    let mut acc = ZERO;
    for v in c {
        acc += v * e;
        e *= step;
    }
    acc
}

fn grid_values_real(f: &TorusFunction, m: usize) -> Vec<f64> {
    f.to_grid(m).into_iter().map(|v| v.re).collect()
}

fn check_space_diffeo(xi: &TorusFunction, m: usize) -> Result<Vec<f64>> {
    if xi.reality_defect() > 1e-10 * (1.0 + xi.max_abs()) {
        return Err(Error::NonInvertibleDiffeo("ξ is not real-valued".into()));
    }
    let xx = grid_values_real(&xi.dx(), m);
    let sup = xx.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if sup > 0.5 {
        return Err(Error::NonInvertibleDiffeo(format!("sup|ξ_x| = {sup:.3} > 1/2")));
    }
    Ok(xx)
}

/// u(φ, x + ξ(φ,x)), optionally times √(1 + ξ_x), re-projected to u's cutoff.
pub fn compose_space_diffeo(
    u: &TorusFunction,
    xi: &TorusFunction,
    oversample: usize,
    with_jacobian: bool,
) -> Result<TorusFunction> {
    assert_eq!(u.d, xi.d);
    if oversample < 2 {
        return Err(Error::Usage("oversample must be ≥ 2".into()));
    }
    let d = u.d;
    let m = grid_side(u.n.max(xi.n), oversample);
    let xi_x = check_space_diffeo(xi, m)?;
    let xi_g = grid_values_real(xi, m);
    let sh = u.shape();
    let side = sh.side();
    let tl = m.pow(d as u32);
    let h = 2.0 * std::f64::consts::PI / m as f64;
    let mut comps = Vec::with_capacity(u.ncomp());
    for c in 0..u.ncomp() {
        let part = phi_physical(&u.comps[c], sh, m);
        let mut vals = vec![ZERO; tl * m];
        for p in 0..tl {
            let row = &part[p * side..(p + 1) * side];
            for i in 0..m {
                let g = p * m + i;
                let y = i as f64 * h + xi_g[g];
                let mut v = eval_x_series(row, u.n, y);
                if with_jacobian {
                    v *= (1.0 + xi_x[g]).sqrt();
                }
                vals[g] = v;
            }
        }
        let r = if u.reality == Reality::Real { Reality::Real } else { Reality::Complex };
        comps.push(TorusFunction::from_grid(d, u.n, m, vals, r).comps.remove(0));
    }
    Ok(TorusFunction { d, n: u.n, comps, reality: u.reality })
}

/// ξ̂ with x = y + ξ̂(φ,y) inverting y = x + ξ(φ,x).
pub fn invert_diffeo(xi: &TorusFunction, tol: f64, oversample: usize) -> Result<TorusFunction> {
    let d = xi.d;
    let m = grid_side(xi.n, oversample.max(2));
    check_space_diffeo(xi, m)?;
    let sh = xi.shape();
    let side = sh.side();
    let part = phi_physical(&xi.comps[0], sh, m);
    let tl = m.pow(d as u32);
    let h = 2.0 * std::f64::consts::PI / m as f64;
    let mut vals = vec![ZERO; tl * m];
    for p in 0..tl {
        let row = &part[p * side..(p + 1) * side];
        for i in 0..m {
            let y = i as f64 * h;
            let mut g = 0.0;
            let mut converged = false;
            for _ in 0..MAX_FIXED_POINT {
                let next = -eval_x_series(row, xi.n, y + g).re;
                let delta = (next - g).abs();
                g = next;
                if delta <= tol {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Convergence("inverse diffeomorphism fixed point".into()));
            }
            vals[p * m + i] = C64::new(g, 0.0);
        }
    }
    Ok(TorusFunction::from_grid(d, xi.n, m, vals, Reality::Real))
}

/// max over grid points y of |ξ_x(x) + ξ̂_y(y) + ξ_x(x)ξ̂_y(y)|, x = y + ξ̂(y).
pub fn inverse_identity_residual(xi: &TorusFunction, xihat: &TorusFunction, oversample: usize) -> f64 {
    let d = xi.d;
    let m = grid_side(xi.n.max(xihat.n), oversample);
    let sh = xi.shape();
    let side = sh.side();
    let part_x = phi_physical(&xi.dx().comps[0], sh, m);
    let hat = grid_values_real(xihat, m);
    let hat_y = grid_values_real(&xihat.dx(), m);
    let tl = m.pow(d as u32);
    let h = 2.0 * std::f64::consts::PI / m as f64;
    let mut worst: f64 = 0.0;
    for p in 0..tl {
        let row = &part_x[p * side..(p + 1) * side];
        for i in 0..m {
            let g = p * m + i;
            let x = i as f64 * h + hat[g];
            let a = eval_x_series(row, xi.n, x).re;
            worst = worst.max((a + hat_y[g] + a * hat_y[g]).abs());
        }
    }
    worst
}

fn time_points(m: usize, d: usize, p: usize) -> [f64; MAX_D] {
    let h = 2.0 * std::f64::consts::PI / m as f64;
    let mut phi = [0.0; MAX_D];
    let mut r = p;
    for k in (0..d).rev() {
        phi[k] = (r % m) as f64 * h;
        r /= m;
    }
    phi
}

/// Values of an x-independent function at φ-grid points (m^d of them).
fn time_grid_real(alpha: &TorusFunction, m: usize) -> Vec<f64> {
    let g = alpha.to_grid(m);
    // x is the fastest axis; take x = 0 column.
    (0..m.pow(alpha.d as u32)).map(|p| g[p * m].re).collect()
}

/// Σ_ℓ c_ℓ e^{iℓ·θ} over the (2N+1)^d time modes.
fn eval_time_series(c: &[C64], sh: Shape, theta: &[f64], stride: usize, offset: usize) -> C64 {
    let side = sh.side();
    let n = sh.n as i64;
    let d = sh.d;
    let mut pw: Vec<Vec<C64>> = Vec::with_capacity(d);
    for &t in theta.iter().take(d) {
        let step = C64::from_polar(1.0, t);
        let mut e = C64::from_polar(1.0, -(n as f64) * t);
        let mut row = Vec::with_capacity(side);
        for _ in 0..side {
            row.push(e);
            e *= step;
        }
        pw.push(row);
    }
    let tl = sh.time_len();
    let mut acc = ZERO;
    for t in 0..tl {
        let v = c[t * stride + offset];
        if v == ZERO {
            continue;
        }
        let mut r = t;
        let mut w = C64::new(1.0, 0.0);
        for k in (0..d).rev() {
            w *= pw[k][r % side];
            r /= side;
        }
        acc += v * w;
    }
    acc
}

fn check_time_diffeo(alpha: &TorusFunction, omega: &[f64], m: usize) -> Result<()> {
    if alpha.reality_defect() > 1e-10 * (1.0 + alpha.max_abs()) {
        return Err(Error::NonInvertibleDiffeo("α is not real-valued".into()));
    }
    if alpha.dx().max_abs() > 1e-12 * (1.0 + alpha.max_abs()) {
        return Err(Error::NonInvertibleDiffeo("α depends on x".into()));
    }
    let jac = time_grid_real(&alpha.omega_dphi(omega), m);
    if let Some(bad) = jac.iter().find(|v| 1.0 + **v <= 0.0) {
        return Err(Error::NonInvertibleDiffeo(format!("Jacobian 1 + ω·∂α = {:.3} ≤ 0", 1.0 + bad)));
    }
    Ok(())
}

/// u(φ + ωα(φ), x).
pub fn compose_time_diffeo(u: &TorusFunction, alpha: &TorusFunction, omega: &[f64], oversample: usize) -> Result<TorusFunction> {
    let d = u.d;
    assert_eq!(omega.len(), d);
    if oversample < 2 {
        return Err(Error::Usage("oversample must be ≥ 2".into()));
    }
    let m = grid_side(u.n.max(alpha.n), oversample);
    check_time_diffeo(alpha, omega, m)?;
    let al = time_grid_real(alpha, m);
    let sh = u.shape();
    let tl = m.pow(d as u32);
    let mut comps = Vec::with_capacity(u.ncomp());
    for c in 0..u.ncomp() {
        let part = x_physical(&u.comps[c], sh, m);
        let mut vals = vec![ZERO; tl * m];
        for p in 0..tl {
            let phi = time_points(m, d, p);
            let mut theta = [0.0; MAX_D];
            for k in 0..d {
                theta[k] = phi[k] + omega[k] * al[p];
            }
            for i in 0..m {
                vals[p * m + i] = eval_time_series(&part, sh, &theta[..d], m, i);
            }
        }
        let r = if u.reality == Reality::Real { Reality::Real } else { Reality::Complex };
        comps.push(TorusFunction::from_grid(d, u.n, m, vals, r).comps.remove(0));
    }
    Ok(TorusFunction { d, n: u.n, comps, reality: u.reality })
}

/// α̃ with φ = θ + ωα̃(θ) inverting θ = φ + ωα(φ).
pub fn invert_time_diffeo(alpha: &TorusFunction, omega: &[f64], tol: f64, oversample: usize) -> Result<TorusFunction> {
    let d = alpha.d;
    let m = grid_side(alpha.n, oversample.max(2));
    check_time_diffeo(alpha, omega, m)?;
    let sh = alpha.shape();
    let side = sh.side();
    let n = alpha.n as i64;
    // time-only coefficients (j = 0 column)
    let coeffs: Vec<C64> = (0..sh.time_len()).map(|t| alpha.comps[0][t * side + n as usize]).collect();
    let tl = m.pow(d as u32);
    let mut vals = vec![ZERO; tl * m];
    for p in 0..tl {
        let th = time_points(m, d, p);
        let mut g = 0.0;
        let mut converged = false;
        for _ in 0..MAX_FIXED_POINT {
            let mut pt = [0.0; MAX_D];
            for k in 0..d {
                pt[k] = th[k] + omega[k] * g;
            }
            let next = -eval_time_series(&coeffs, sh, &pt[..d], 1, 0).re;
            let delta = (next - g).abs();
            g = next;
            if delta <= tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence("inverse time reparametrization".into()));
        }
        for i in 0..m {
            vals[p * m + i] = C64::new(g, 0.0);
        }
    }
    Ok(TorusFunction::from_grid(d, alpha.n, m, vals, Reality::Real))
}
