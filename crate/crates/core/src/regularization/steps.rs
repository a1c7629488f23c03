//! The seven conjugations. Steps 1–5 and the differential part of step 7
//! act on coefficient functions; steps 6 and 7 act on the remainder in the
//! block algebra.

use super::conj::{conjugate_pointwise, from_grid};
use super::RegConfig;
use crate::error::{Error, Result};
use crate::fourier_core::{compose_space_diffeo, compose_time_diffeo, grid_side, invert_diffeo, invert_time_diffeo, TorusFunction};
use crate::nls_model::{DiffOperator, LinearizedCoefficients};
use crate::operator_algebra::{exp_series, BlockOperator, Transformation};
use num_complex::Complex64 as C64;

const I: C64 = C64::new(0.0, 1.0);
const ONE: C64 = C64::new(1.0, 0.0);

fn constant(d: usize, n: usize, c: C64) -> TorusFunction {
    TorusFunction::constant(d, n, c)
}

/// Pointwise combination of several functions on the grid of side mg.
fn grid_map<F: Fn(&[C64]) -> C64>(fs: &[&TorusFunction], n: usize, mg: usize, f: F) -> TorusFunction {
    let d = fs[0].d;
    let grids: Vec<Vec<C64>> = fs.iter().map(|g| g.to_grid(mg)).collect();
    let mut buf = vec![C64::new(0.0, 0.0); fs.len()];
    let vals = (0..grids[0].len())
        .map(|p| {
            for (b, g) in buf.iter_mut().zip(&grids) {
                *b = g[p];
            }
            f(&buf)
        })
        .collect();
    from_grid(d, n, mg, vals)
}

fn imaginary(f: &TorusFunction) -> TorusFunction {
    f.imag_part().scale(I)
}

fn exp_fn(f: &TorusFunction, os: usize) -> TorusFunction {
    f.map_pointwise(os, |v| v.exp())
}

/// Diagonal pointwise map diag(e^g, e^ḡ) and its inverse, g purely imaginary.
fn diag_exp(g: &TorusFunction, os: usize) -> ([TorusFunction; 4], [TorusFunction; 4]) {
    let z = TorusFunction::zeros(g.d, g.n);
    let e = exp_fn(g, os);
    let ei = exp_fn(&g.scale(-ONE), os);
    let m = [e.clone(), z.clone(), z.clone(), e.conj_reflect()];
    let minv = [ei.clone(), z.clone(), z, ei.conj_reflect()];
    (m, minv)
}

pub(crate) fn pointwise(m: [TorusFunction; 4], minv: [TorusFunction; 4]) -> Transformation {
    Transformation::Pointwise { m: Box::new(m), minv: Box::new(minv) }
}

pub struct Step1 {
    pub op: DiffOperator,
    pub t: Transformation,
    /// max |det T₁ − 1| on the grid.
    pub det_defect: f64,
    pub pattern_defect: f64,
}

/// Diagonalizes E + A₂ pointwise.
pub fn step1(op: &DiffOperator, cfg: &RegConfig) -> Result<Step1> {
    let co = &op.coeffs;
    let (d, n) = (op.d(), co.a[0].n);
    let mg = grid_side(n, cfg.oversample);
    let a2 = co.a[2].to_grid(mg);
    let b2 = co.b[2].to_grid(mg);
    let total = a2.len();
    let mut m: [Vec<C64>; 4] = std::array::from_fn(|_| Vec::with_capacity(total));
    let mut mi: [Vec<C64>; 4] = std::array::from_fn(|_| Vec::with_capacity(total));
    let mut det_defect: f64 = 0.0;
    for p in 0..total {
        let c = 1.0 + a2[p].re;
        let b = b2[p];
        let rad = c * c - b.norm_sqr();
        if !(rad > 0.0) || c <= 0.0 {
            return Err(Error::Ellipticity(format!("(1+a₂)² − |b₂|² = {rad:.3e} at grid point {p}")));
        }
        let lam = rad.sqrt();
        let k = 1.0 / (2.0 * lam * (c + lam)).sqrt();
        let diag = C64::new((c + lam) * k, 0.0);
        let entries = [diag, -b * k, -b.conj() * k, diag];
        let inv = [diag, b * k, b.conj() * k, diag];
        det_defect = det_defect.max((entries[0] * entries[3] - entries[1] * entries[2] - 1.0).norm());
        for q in 0..4 {
            m[q].push(entries[q]);
            mi[q].push(inv[q]);
        }
    }
    let m = m.map(|v| from_grid(d, n, mg, v));
    let mi = mi.map(|v| from_grid(d, n, mg, v));
    let (out, pattern_defect) = conjugate_pointwise(op, &m, &mi, cfg.oversample);
    Ok(Step1 { op: out, t: pointwise(m, mi), det_defect, pattern_defect })
}

pub struct Step2 {
    pub op: DiffOperator,
    pub t: Transformation,
    pub xi: TorusFunction,
    /// [(1/2π)∫(1+a₂)^{−1/2}dx]^{−2} as a function of φ.
    pub a2_phi: TorusFunction,
}

/// y = x + ξ(φ,x) making the second-order coefficient x-independent.
pub fn step2(op: &DiffOperator, cfg: &RegConfig) -> Result<Step2> {
    let co = &op.coeffs;
    let (d, n) = (op.d(), co.a[0].n);
    let os = cfg.oversample;
    let mg = grid_side(n, os);
    let c2: Vec<f64> = co.a[2].to_grid(mg).iter().map(|v| 1.0 + v.re).collect();
    if let Some(bad) = c2.iter().find(|v| **v <= 0.5) {
        return Err(Error::Ellipticity(format!("1 + a₂ = {bad:.3e} on the grid")));
    }
    // x-quadrature per time node; the grid is x-fastest
    let mut m2phi = vec![C64::new(0.0, 0.0); c2.len()];
    for (t, chunk) in c2.chunks(mg).enumerate() {
        let avg = chunk.iter().map(|v| v.powf(-0.5)).sum::<f64>() / mg as f64;
        m2phi[t * mg..(t + 1) * mg].fill(C64::new(avg.powi(-2), 0.0));
    }
    let rho0: Vec<C64> = m2phi.iter().zip(&c2).map(|(m, c)| C64::new((m.re / c).sqrt() - 1.0, 0.0)).collect();
    let a2_phi = from_grid(d, n, mg, m2phi).real_part();
    let xi = from_grid(d, n, mg, rho0).dx_inverse().real_part();
    let xihat = invert_diffeo(&xi, cfg.diffeo_tol, os)?;

    let yx = &constant(d, n, ONE) + &xi.dx();
    let yxx = xi.dxx();
    let w = yx.map_pointwise(os, |v| v.sqrt());
    let (wx, wxx) = (w.dx(), w.dxx());
    let xt = xi.omega_dphi(&op.omega);
    let wt = w.omega_dphi(&op.omega);
    let [a0, a1, a2] = &co.a;
    let [b0, b1, b2] = &co.b;
    let fs = [a0, a1, a2, b0, b1, b2, &yx, &yxx, &w, &wx, &wxx, &xt, &wt];
    let pick = |f: fn(&[C64]) -> C64| grid_map(&fs, n, mg, f);
    let new = [
        // a₀
        pick(|v| (1.0 + v[2]) * v[10] / v[8] + v[1] * v[9] / v[8] + v[0] - I * v[12] / v[8]),
        // a₁
        pick(|v| (1.0 + v[2]) * (2.0 * v[9] * v[6] / v[8] + v[7]) + v[1] * v[6] - I * v[11]),
        // a₂
        pick(|v| (1.0 + v[2]) * v[6] * v[6] - 1.0),
        // b₀
        pick(|v| v[5] * v[10] / v[8] + v[4] * v[9] / v[8] + v[3]),
        // b₁
        pick(|v| v[5] * (2.0 * v[9] * v[6] / v[8] + v[7]) + v[4] * v[6]),
        // b₂
        pick(|v| v[5] * v[6] * v[6]),
    ];
    let mut composed = Vec::with_capacity(6);
    for f in &new {
        composed.push(compose_space_diffeo(f, &xihat, os, false)?);
    }
    let mut it = composed.into_iter();
    let mut next = || it.next().unwrap();
    let coeffs = LinearizedCoefficients { a: [next(), next(), next()], b: [next(), next(), next()] };
    Ok(Step2 {
        op: DiffOperator::new(&op.omega, op.m, coeffs),
        t: Transformation::SpaceDiffeo { xi: xi.clone(), xihat, jacobian: true },
        xi,
        a2_phi,
    })
}

pub struct Step3 {
    pub op: DiffOperator,
    pub t: Transformation,
    pub alpha: TorusFunction,
    pub rho: TorusFunction,
    pub m2: f64,
    /// Largest deviation of the conjugated ∂xx coefficient from m₂.
    pub constancy_defect: f64,
}

/// θ = φ + ωα(φ) followed by division by ρ(θ).
pub fn step3(op: &DiffOperator, cfg: &RegConfig) -> Result<Step3> {
    let co = &op.coeffs;
    let (d, n) = (op.d(), co.a[0].n);
    let os = cfg.oversample;
    let mg = grid_side(n, os);
    let om = &op.omega;
    let m2phi = (&co.a[2] + &constant(d, n, ONE)).x_average().real_part();
    let m2 = m2phi.mean().re;
    let ratio = &m2phi * (1.0 / m2);
    let alpha = (&ratio - &constant(d, n, ONE)).omega_dphi_inverse(om, cfg.divisor_floor)?.real_part();
    let alpha_inv = invert_time_diffeo(&alpha, om, cfg.diffeo_tol, os)?;
    let rho = compose_time_diffeo(&ratio, &alpha_inv, om, os)?.real_part();
    if let Some(bad) = rho.to_grid(mg).iter().find(|v| v.re <= 0.0) {
        return Err(Error::NonInvertibleDiffeo(format!("ρ = {:.3e} ≤ 0", bad.re)));
    }
    let mass = constant(d, n, C64::new(op.m, 0.0));
    let shifted = [&co.a[0] + &mass, co.a[1].clone(), co.a[2].clone(), co.b[0].clone(), co.b[1].clone(), co.b[2].clone()];
    let mut new = Vec::with_capacity(6);
    for f in &shifted {
        let g = compose_time_diffeo(f, &alpha_inv, om, os)?;
        new.push(grid_map(&[&g, &rho], n, mg, |v| v[0] / v[1]));
    }
    // ∂xx coefficient: (1 + a₂)/ρ − 1
    let a2c = grid_map(&[&new[2], &rho], n, mg, |v| v[0] + 1.0 / v[1] - 1.0);
    let constancy_defect = (&a2c - &constant(d, n, C64::new(m2 - 1.0, 0.0))).max_abs();
    let mut it = new.into_iter();
    let a0 = &it.next().unwrap() - &mass;
    let a1 = it.next().unwrap();
    let _ = it.next();
    let coeffs = LinearizedCoefficients {
        a: [a0, a1, constant(d, n, C64::new(m2 - 1.0, 0.0))],
        b: [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()],
    };
    Ok(Step3 {
        op: DiffOperator::new(om, op.m, coeffs),
        t: Transformation::TimeDiffeo { alpha: alpha.clone(), alpha_inv, omega: om.clone() },
        alpha,
        rho,
        m2,
        constancy_defect,
    })
}

pub struct Step4 {
    pub op: DiffOperator,
    pub t: Transformation,
    pub beta: TorusFunction,
    pub m1: C64,
    /// |Re m₁| before projection onto iR.
    pub real_defect: f64,
    /// max |x-average of a₁⁽⁴⁾ − m₁|.
    pub average_defect: f64,
}

/// x ↦ x + β(φ) making the x-average of a₁ constant.
pub fn step4(op: &DiffOperator, cfg: &RegConfig) -> Result<Step4> {
    let co = &op.coeffs;
    let (d, n) = (op.d(), co.a[0].n);
    let os = cfg.oversample;
    let om = &op.omega;
    let raw = co.a[1].mean();
    let m1 = C64::new(0.0, raw.im);
    let v = &co.a[1].x_average() - &constant(d, n, m1);
    let beta_c = v.scale(-I).omega_dphi_inverse(om, cfg.divisor_floor)?;
    let imag = beta_c.imag_part().max_abs();
    if imag > cfg.structure_tol * (1.0 + beta_c.max_abs()) {
        return Err(Error::Structure(format!("β has imaginary part {imag:.3e}")));
    }
    let beta = beta_c.real_part();
    let back = -&beta;
    let a1 = &co.a[1] - &beta.omega_dphi(om).scale(I);
    let src = [&co.a[0], &a1, &co.a[2], &co.b[0], &co.b[1], &co.b[2]];
    let mut new = Vec::with_capacity(6);
    for f in src {
        new.push(compose_space_diffeo(f, &back, os, false)?);
    }
    let average_defect = (&new[1].x_average() - &constant(d, n, m1)).max_abs();
    let mut it = new.into_iter();
    let mut next = || it.next().unwrap();
    let coeffs = LinearizedCoefficients { a: [next(), next(), next()], b: [next(), next(), next()] };
    Ok(Step4 {
        op: DiffOperator::new(om, op.m, coeffs),
        t: Transformation::SpaceDiffeo { xi: beta.clone(), xihat: back, jacobian: true },
        beta,
        m1,
        real_defect: raw.re.abs(),
        average_defect,
    })
}

pub struct Step5 {
    pub op: DiffOperator,
    pub t: Transformation,
    pub s: TorusFunction,
    /// max |2m₂s_x + a₁⁽⁴⁾ − m₁|.
    pub equation_residual: f64,
    /// max |a₁⁽⁵⁾ − m₁| before it is replaced by the constant.
    pub first_order_defect: f64,
    pub pattern_defect: f64,
}

/// Multiplication by e^{s(φ,x)} removing the x-dependence of a₁.
pub fn step5(op: &DiffOperator, m2: f64, m1: C64, cfg: &RegConfig) -> Result<Step5> {
    let co = &op.coeffs;
    let (d, n) = (op.d(), co.a[0].n);
    let m1c = constant(d, n, m1);
    let s = imaginary(&(&m1c - &co.a[1]).dx_inverse().scale(C64::new(0.5 / m2, 0.0)));
    let equation_residual = (&(&(&s.dx() * (2.0 * m2)) + &co.a[1]) - &m1c).max_abs();
    let (m, minv) = diag_exp(&s, cfg.oversample);
    let (mut out, pattern_defect) = conjugate_pointwise(op, &m, &minv, cfg.oversample);
    let first_order_defect = (&out.coeffs.a[1] - &m1c).max_abs();
    out.coeffs.a[1] = m1c;
    Ok(Step5 { op: out, t: pointwise(m, minv), s, equation_residual, first_order_defect, pattern_defect })
}

/// Υe^{ijx} = j/(1+j²) e^{ijx}.
pub fn upsilon(j: i64) -> f64 {
    let j = j as f64;
    j / (1.0 + j * j)
}

/// ½(aΥ + Υa) on both diagonal channels, scaled by i.
pub fn step6_generator(a: &TorusFunction, jc: usize, lc: usize) -> BlockOperator {
    let mut g = BlockOperator::zeros(a.d, jc, lc);
    let (jc, an) = (jc as i64, a.n as i64);
    let lmax = (lc as i64).min(an);
    let side = g.side();
    for t in 0..g.tlen() {
        let ell = g.ell(t);
        if ell[..a.d].iter().any(|l| l.abs() > lmax) {
            continue;
        }
        for j in -jc..=jc {
            for jp in -jc..=jc {
                if (j - jp).abs() > an {
                    continue;
                }
                let v = a.get(0, &ell[..a.d], j - jp) * I * (0.5 * (upsilon(j) + upsilon(jp)));
                for s in 0..2 {
                    g.symbols[t][(s * side + (j + jc) as usize, s * side + (jp + jc) as usize)] = v;
                }
            }
        }
    }
    g
}

/// Multiplies each ℓ-symbol by iω·ℓ: the commutator [ω·∂, T].
pub struct Step6 {
    /// Principal part with â₀(φ) on the diagonal; remainder R₆ at the work cutoffs.
    pub op: DiffOperator,
    pub t: Transformation,
    pub a: TorusFunction,
    pub a0_hat: TorusFunction,
    pub series_terms: usize,
}

/// T₆ = exp(i·½(aΥ + Υa)), 2m₂a_x = a₀⁽⁵⁾ − â₀⁽⁵⁾.
pub fn step6(op: &DiffOperator, m2: f64, cfg: &RegConfig) -> Result<Step6> {
    let co = &op.coeffs;
    let (jw, lw) = cfg.work_cutoffs();
    let a0_hat = co.a[0].x_average().real_part();
    let a = (&co.a[0] - &a0_hat).dx_inverse().scale(C64::new(0.5 / m2, 0.0)).real_part();
    if a.max_abs() == 0.0 {
        // nothing to remove: T₆ = 1
        let mut principal = op.clone();
        principal.coeffs.a[0] = a0_hat.clone();
        let r6 = op.to_block(jw, lw).part.sub(&principal.to_block(jw, lw).part);
        principal.remainder = Some(r6);
        return Ok(Step6 { op: principal, t: Transformation::Identity, a, a0_hat, series_terms: 0 });
    }
    let gen = step6_generator(&a, jw, lw);
    let size = gen.decay_norm(cfg.s0);
    if size > 0.5 {
        return Err(Error::NoInverse(format!("step-6 generator norm {size:.3e} > 1/2")));
    }
    let (fwd, k1) = exp_series(&gen, cfg.s0, cfg.series_tol, cfg.series_cap);
    let (inv, k2) = exp_series(&gen.scale(-ONE), cfg.s0, cfg.series_tol, cfg.series_cap);
    if k1.max(k2) >= cfg.series_cap {
        return Err(Error::Convergence(format!("step-6 series needs more than {} terms", cfg.series_cap)));
    }
    let l5 = op.to_block(jw, lw).part;
    let conj = inv.compose(&fwd.omega_dphi(&op.omega)).add(&inv.compose(&l5.compose(&fwd)));
    let mut principal = op.clone();
    principal.coeffs.a[0] = a0_hat.clone();
    principal.remainder = None;
    let r6 = conj.sub(&principal.to_block(jw, lw).part);
    principal.remainder = Some(r6);
    Ok(Step6 {
        op: principal,
        t: Transformation::Operator { fwd: Box::new(fwd), inv: Box::new(inv) },
        a,
        a0_hat,
        series_terms: k1.max(k2),
    })
}

pub struct Step7 {
    pub op: DiffOperator,
    pub t: Transformation,
    pub gamma: TorusFunction,
    pub m0: f64,
    /// max |a₀⁽⁷⁾ − (m₀ − m)| before it is replaced by the constant.
    pub zero_order_defect: f64,
    pub pattern_defect: f64,
}

/// Multiplication by e^{Γ(φ)} making the diagonal zero-order part constant.
pub fn step7(op: &DiffOperator, cfg: &RegConfig) -> Result<Step7> {
    let co = &op.coeffs;
    let (d, n) = (op.d(), co.a[0].n);
    let ahat = &co.a[0];
    let mean = ahat.mean().re;
    let m0 = op.m + mean;
    let centered = ahat - &constant(d, n, C64::new(mean, 0.0));
    let gamma = imaginary(&centered.omega_dphi_inverse(&op.omega, cfg.divisor_floor)?.scale(-I));
    let (m, minv) = diag_exp(&gamma, cfg.oversample);
    let mut principal = op.clone();
    let remainder = principal.remainder.take();
    let (mut out, pattern_defect) = conjugate_pointwise(&principal, &m, &minv, cfg.oversample);
    let target = constant(d, n, C64::new(m0 - op.m, 0.0));
    let zero_order_defect = (&out.coeffs.a[0] - &target).max_abs();
    out.coeffs.a[0] = target;
    out.coeffs.a[1] = co.a[1].clone();
    out.coeffs.a[2] = co.a[2].clone();
    if let Some(r6) = remainder {
        let (jw, lw) = (r6.jc, r6.lc);
        let mut fwd = BlockOperator::zeros(d, jw, lw);
        let mut inv = BlockOperator::zeros(d, jw, lw);
        fwd.add_multiplication(1, 1, &m[0], 0, ONE);
        fwd.add_multiplication(-1, -1, &m[3], 0, ONE);
        inv.add_multiplication(1, 1, &minv[0], 0, ONE);
        inv.add_multiplication(-1, -1, &minv[3], 0, ONE);
        out.remainder = Some(inv.compose(&r6.compose(&fwd)));
    }
    Ok(Step7 { op: out, t: pointwise(m, minv), gamma, m0, zero_order_defect, pattern_defect })
}
