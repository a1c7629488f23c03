//! Conjugation of L(z) to
//!   L₇ = ω·∂ + i m₂E∂xx + i m₁∂x + i m₀E + i[[0, q₀], [−q̄₀, 0]] + R
//! with R of order −1, through seven explicit changes of variables.

mod conj;
mod steps;

pub use steps::{step1, step2, step3, step4, step5, step6, step6_generator, step7, upsilon};
pub use steps::{Step1, Step2, Step3, Step4, Step5, Step6, Step7};

use crate::error::{Error, Result};
use crate::fourier_core::{lip_norm, ParamFamily, TorusFunction};
use crate::nls_model::{assemble_linearized, DiffOperator, ModelParams, NonlinearityPlugin};
use crate::operator_algebra::{BlockOperator, LinearOperator, Transformation};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Debug)]
pub struct RegConfig {
    /// Space and time cutoffs of the final remainder.
    pub jc: usize,
    pub lc: usize,
    /// Extra modes carried through the block-algebra steps.
    pub pad_j: usize,
    pub pad_l: usize,
    pub oversample: usize,
    pub divisor_floor: f64,
    pub diffeo_tol: f64,
    pub structure_tol: f64,
    pub series_tol: f64,
    pub series_cap: usize,
    pub s0: f64,
}

impl RegConfig {
    pub fn new(d: usize, jc: usize, lc: usize) -> Self {
        RegConfig {
            jc,
            lc,
            pad_j: (jc / 2).max(4),
            pad_l: (lc / 2).max(2),
            oversample: crate::fourier_core::DEFAULT_OVERSAMPLE,
            divisor_floor: 1e-10,
            diffeo_tol: 1e-14,
            structure_tol: 1e-8,
            series_tol: 1e-15,
            series_cap: 30,
            s0: (d as f64 + 2.0) / 2.0,
        }
    }

    pub fn work_cutoffs(&self) -> (usize, usize) {
        (self.jc + self.pad_j, self.lc + self.pad_l)
    }
}

/// Functions produced along the way.
#[derive(Clone, Debug)]
pub struct StepArtifacts {
    pub xi: TorusFunction,
    pub a2_phi: TorusFunction,
    pub alpha: TorusFunction,
    pub rho: TorusFunction,
    pub beta: TorusFunction,
    pub s: TorusFunction,
    /// Real multiplier a of the step-6 generator ½(aΥ + Υa).
    pub w: TorusFunction,
    pub gamma: TorusFunction,
}

/// Per-step diagnostics; all entries are sup-norm violations.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RegReport {
    pub omega: Vec<f64>,
    pub det_defect: f64,
    /// Deviation from the [[a, b], [−b̄, −ā]] pattern in steps 1, 5, 7.
    pub pattern_defect: f64,
    /// j ≠ 0 modes of the ∂xx coefficient after step 2.
    pub x_dependence: f64,
    pub m2_constancy: f64,
    pub m1_real_part: f64,
    pub m1_average: f64,
    pub s_equation: f64,
    pub first_order: f64,
    pub zero_order: f64,
    /// Worst structural zero (b₂, b₁, Re a₁, Im a₀⁽⁵⁾) after each step.
    pub structural: [f64; 7],
    pub series_terms: usize,
    /// |R∘D|_{s₀} with D = diag(j).
    pub remainder_smoothing: f64,
    pub m2: f64,
    pub m1_im: f64,
    pub m0: f64,
}

#[derive(Clone, Debug)]
pub struct RegularizationOutput {
    pub omega: Vec<f64>,
    pub m2: f64,
    pub m1: C64,
    pub m0: f64,
    pub q0: TorusFunction,
    /// Constant-coefficient differential part, q₀ and the remainder.
    pub l7: DiffOperator,
    pub remainder: BlockOperator,
    pub steps: Vec<Transformation>,
    /// T₁T₂T₃ρT₄T₅T₆T₇.
    pub v1: Transformation,
    /// T₁T₂T₃T₄T₅T₆T₇.
    pub v2: Transformation,
    pub artifacts: StepArtifacts,
    pub report: RegReport,
}

impl RegularizationOutput {
    pub fn l7_block(&self) -> LinearOperator {
        self.l7.to_block(self.remainder.jc, self.remainder.lc)
    }

    /// Normal-form eigenvalue i(m₀ − m₂j² − μ₁σj) for channel σ, μ₁ = Im m₁.
    pub fn diagonal_symbol(&self, sigma: i8, j: i64) -> C64 {
        let s = sigma as f64;
        let j = j as f64;
        C64::new(0.0, s * (self.m0 - self.m2 * j * j - s * self.m1.im * j))
    }
}

fn structural(op: &DiffOperator, step: usize) -> f64 {
    let co = &op.coeffs;
    let mut v = co.b[2].max_abs().max(co.b[1].max_abs());
    if step >= 2 {
        v = v.max(co.a[1].real_part().max_abs());
    }
    if step >= 5 {
        v = v.max(co.a[0].imag_part().max_abs());
    }
    v
}

/// |R∘D|_s with D = diag(j) on both diagonal channels.
pub fn remainder_smoothing(r: &BlockOperator, s: f64) -> f64 {
    let dm = BlockOperator::diagonal(r.d, r.jc, r.lc, |_, j| C64::new(j as f64, 0.0));
    r.compose(&dm).decay_norm(s)
}

/// Runs the seven steps on a given operator (no remainder).
pub fn regularize_operator(l0: &DiffOperator, cfg: &RegConfig) -> Result<RegularizationOutput> {
    let om = l0.omega.clone();
    let tag = |k: usize| move |e: Error| e.at_step(k, &l0.omega);
    let mut report = RegReport { omega: om.clone(), ..Default::default() };
    if l0.remainder.is_none() && l0.coeffs.a.iter().chain(&l0.coeffs.b).all(|c| c.max_abs() == 0.0) {
        return Ok(unperturbed_output(l0, cfg, report));
    }

    let s1 = step1(l0, cfg).map_err(tag(1))?;
    report.det_defect = s1.det_defect;
    report.pattern_defect = s1.pattern_defect;
    report.structural[0] = structural(&s1.op, 1);

    let s2 = step2(&s1.op, cfg).map_err(tag(2))?;
    let a2 = &s2.op.coeffs.a[2];
    report.x_dependence = (a2 - &a2.x_average()).max_abs();
    report.structural[1] = structural(&s2.op, 2);

    let s3 = step3(&s2.op, cfg).map_err(tag(3))?;
    report.m2_constancy = s3.constancy_defect;
    report.structural[2] = structural(&s3.op, 3);
    let m2 = s3.m2;

    let s4 = step4(&s3.op, cfg).map_err(tag(4))?;
    report.m1_real_part = s4.real_defect;
    report.m1_average = s4.average_defect;
    report.structural[3] = structural(&s4.op, 4);
    let m1 = s4.m1;

    let s5 = step5(&s4.op, m2, m1, cfg).map_err(tag(5))?;
    report.s_equation = s5.equation_residual;
    report.first_order = s5.first_order_defect;
    report.pattern_defect = report.pattern_defect.max(s5.pattern_defect);
    report.structural[4] = structural(&s5.op, 5);

    let s6 = step6(&s5.op, m2, cfg).map_err(tag(6))?;
    report.series_terms = s6.series_terms;
    report.structural[5] = structural(&s6.op, 6);

    let s7 = step7(&s6.op, cfg).map_err(tag(7))?;
    report.zero_order = s7.zero_order_defect;
    report.pattern_defect = report.pattern_defect.max(s7.pattern_defect);
    report.structural[6] = structural(&s7.op, 7);
    let m0 = s7.m0;

    let mut l7 = s7.op;
    let work = l7.remainder.take().expect("step 6 always produces a remainder");
    let remainder = work.resize(cfg.jc, cfg.lc);
    report.remainder_smoothing = remainder_smoothing(&remainder, cfg.s0);
    l7.remainder = Some(remainder.clone());
    report.m2 = m2;
    report.m1_im = m1.im;
    report.m0 = m0;

    let rho = s3.rho.clone();
    let rho_inv = rho.map_pointwise(cfg.oversample, |v| 1.0 / v).real_part();
    let steps = vec![s1.t, s2.t, s3.t, s4.t, s5.t, s6.t, s7.t];
    let v2 = Transformation::Chain(steps.clone());
    let mut with_rho = steps.clone();
    with_rho.insert(3, Transformation::TimeFactor { rho: rho.clone(), rho_inv });
    let v1 = Transformation::Chain(with_rho);

    Ok(RegularizationOutput {
        omega: om,
        m2,
        m1,
        m0,
        q0: l7.coeffs.b[0].clone(),
        l7,
        remainder,
        steps,
        v1,
        v2,
        artifacts: StepArtifacts {
            xi: s2.xi,
            a2_phi: s2.a2_phi,
            alpha: s3.alpha,
            rho,
            beta: s4.beta,
            s: s5.s,
            w: s6.a,
            gamma: s7.gamma,
        },
        report,
    })
}

/// Constant coefficients already: every T_i is the identity.
fn unperturbed_output(l0: &DiffOperator, cfg: &RegConfig, mut report: RegReport) -> RegularizationOutput {
    let d = l0.d();
    let n = l0.coeffs.a[0].n;
    let zero = TorusFunction::zeros(d, n);
    let one = TorusFunction::constant(d, n, C64::new(1.0, 0.0));
    let remainder = BlockOperator::zeros(d, cfg.jc, cfg.lc);
    let mut l7 = l0.clone();
    l7.remainder = Some(remainder.clone());
    report.m2 = 1.0;
    report.m0 = l0.m;
    let steps = vec![Transformation::Identity; 7];
    RegularizationOutput {
        omega: l0.omega.clone(),
        m2: 1.0,
        m1: C64::new(0.0, 0.0),
        m0: l0.m,
        q0: zero.clone(),
        l7,
        remainder,
        steps: steps.clone(),
        v1: Transformation::Chain(steps.clone()),
        v2: Transformation::Chain(steps),
        artifacts: StepArtifacts {
            xi: zero.clone(),
            a2_phi: one.clone(),
            alpha: zero.clone(),
            rho: one,
            beta: zero.clone(),
            s: zero.clone(),
            w: zero.clone(),
            gamma: zero,
        },
        report,
    }
}

/// Linearizes at z and regularizes.
pub fn regularize<P: NonlinearityPlugin + ?Sized>(z: &TorusFunction, params: &ModelParams, plugin: &P, cfg: &RegConfig) -> Result<RegularizationOutput> {
    let (_, l0) = assemble_linearized(z, params, plugin).map_err(|e| e.at_step(0, &params.omega))?;
    regularize_operator(&l0, cfg)
}

/// Runs `regularize` at every active grid point in parallel.
pub fn regularize_family<P: NonlinearityPlugin + ?Sized>(
    z: &ParamFamily<TorusFunction>,
    params: &ModelParams,
    plugin: &P,
    cfg: &RegConfig,
) -> Result<ParamFamily<RegularizationOutput>> {
    let values: Vec<Option<RegularizationOutput>> = z
        .grid
        .points
        .par_iter()
        .zip(&z.values)
        .map(|(w, v)| match v {
            Some(zw) => regularize(zw, &params.with_omega(w), plugin, cfg).map(Some),
            None => Ok(None),
        })
        .collect::<Result<_>>()?;
    Ok(ParamFamily::new(z.grid.clone(), values))
}

/// ‖a − b‖_s over modes |ℓ|,|j| ≤ ncmp, divided by ‖h‖_{s+2}.
pub fn relative_residual(a: &TorusFunction, b: &TorusFunction, h: &TorusFunction, ncmp: usize, s: f64) -> f64 {
    (a - b).resize(ncmp).sobolev_norm(s) / h.sobolev_norm(s + 2.0).max(f64::MIN_POSITIVE)
}

/// ‖T⁻¹L_prev T h − ρ·L_next h‖ relative to ‖h‖_{s+2}; h is evaluated at
/// cutoff `work` and compared on modes ≤ h.n.
pub fn conjugation_residual(
    prev: &DiffOperator,
    t: &Transformation,
    next: &DiffOperator,
    rho: Option<&TorusFunction>,
    h: &TorusFunction,
    work: usize,
    s: f64,
) -> Result<f64> {
    let hw = h.resize(work);
    let lhs = t.apply_inverse(&prev.apply(&t.apply(&hw)?))?;
    let mut rhs = next.apply(&hw);
    if let Some(r) = rho {
        rhs = Transformation::TimeFactor { rho: r.clone(), rho_inv: r.clone() }.apply(&rhs)?;
    }
    Ok(relative_residual(&lhs, &rhs, h, h.n, s))
}

/// ‖V₁⁻¹ L V₂ h − L₇ h‖ relative to ‖h‖_{s+2}.
pub fn end_to_end_residual(l0: &DiffOperator, out: &RegularizationOutput, h: &TorusFunction, work: usize, s: f64) -> Result<f64> {
    let hw = h.resize(work);
    let lhs = out.v1.apply_inverse(&l0.apply(&out.v2.apply(&hw)?))?;
    let rhs = out.l7.apply(&hw);
    Ok(relative_residual(&lhs, &rhs, h, h.n, s))
}

#[derive(Clone, Debug, Serialize)]
pub struct NondegeneracyReport {
    pub skipped: bool,
    pub lower_bound: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Largest |m₁(ω) − m₁(ω')|/|ω − ω'| over the grid.
    pub lipschitz: f64,
    /// lipschitz·γ/ε².
    pub lipschitz_constant: f64,
    pub upper_ok: bool,
}

/// c·ε ≤ |m₁(ω)| ≤ C·ε on the mask with c = |e|/4, and the Lipschitz
/// quotient of m₁ against ε²/γ.
pub fn check_nondegeneracy(m1: &ParamFamily<C64>, eps: f64, e: C64, gamma: f64, upper: f64) -> Result<NondegeneracyReport> {
    let ratios: Vec<f64> = m1.active().map(|(_, v)| v.norm()).collect();
    if eps == 0.0 || ratios.is_empty() {
        return Ok(NondegeneracyReport {
            skipped: true,
            lower_bound: 0.0,
            min_ratio: 0.0,
            max_ratio: 0.0,
            lipschitz: 0.0,
            lipschitz_constant: 0.0,
            upper_ok: true,
        });
    }
    let lower_bound = e.norm() / 4.0;
    let min_ratio = ratios.iter().fold(f64::INFINITY, |a, v| a.min(v / eps));
    let max_ratio = ratios.iter().fold(0.0f64, |a, v| a.max(v / eps));
    let lip = lip_norm(m1, gamma, 0.0, false).lip;
    if min_ratio < lower_bound {
        return Err(Error::Degeneracy(format!("min |m₁|/ε = {min_ratio:.3e} below |e|/4 = {lower_bound:.3e}")));
    }
    Ok(NondegeneracyReport {
        skipped: false,
        lower_bound,
        min_ratio,
        max_ratio,
        lipschitz: lip,
        lipschitz_constant: lip * gamma / (eps * eps),
        upper_ok: max_ratio <= upper,
    })
}

#[cfg(test)]
mod tests;
