//! Inversion of the linearized operator through the conjugation chain, the
//! Newton loop over scales, linear stability and the run report.

mod config;
mod stability;
#[cfg(test)]
mod tests;

pub use config::{GridSpec, KamSpec, PluginSpec, SolverConfig};
pub use stability::{stability_check, StabilityReport, StabilitySample};

use crate::error::{Error, Result};
use crate::fourier_core::{dot, TorusFunction};
use crate::kam_reducibility::{reduce, reduce_from, KamOutput, KamRecord, KamSchedule, NormalForm};
use crate::melnikov_measure::p_threshold;
use crate::nls_model::{assemble_linearized, check_hyp2, residual, DiffOperator, ModelParams, NonlinearityPlugin};
use crate::operator_algebra::{eig_hermitian_2x2, sidx, BlockOperator, Transformation};
use crate::regularization::{regularize_operator, RegConfig, RegularizationOutput};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Scale {
    pub n: usize,
    /// The uncapped value reached the cap: the schedule is exhausted.
    pub capped: bool,
}

/// N_n = ⌊N₀^{(3/2)^n}⌋, capped.
pub fn scale_schedule(n0: usize, n: usize, cap: usize) -> Result<Scale> {
    if n0 < 2 {
        return Err(Error::Usage(format!("scale schedule needs N₀ ≥ 2, got {n0}")));
    }
    let v = ((n0 as f64).ln() * 1.5f64.powi(n as i32)).exp();
    let v = (v + 1e-9).floor();
    if v >= cap as f64 {
        Ok(Scale { n: cap, capped: v > cap as f64 })
    } else {
        Ok(Scale { n: v as usize, capped: false })
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct InversionStats {
    pub min_divisor: f64,
    /// Smallest divisor/threshold ratio among the solved directions.
    pub min_margin: f64,
    /// Directions below the floor whose right side was at roundoff level.
    pub zeroed: usize,
    pub max_block_residual: f64,
}

/// Solves (ω·∂φ + D)h = g blockwise: for each (ℓ, σ, |j|) the system
/// (iω·ℓ + Ω_{σ,j})h = g on the cluster, in the eigenbasis of Ω/(iσ).
/// The floor at each direction is max(divisor_floor, first-Melnikov
/// threshold), or divisor_floor alone at ℓ = 0 when m = j².
pub fn invert_normal_form(nf: &NormalForm, g: &TorusFunction, gamma: f64, tau: f64, divisor_floor: f64) -> Result<(TorusFunction, InversionStats)> {
    if g.ncomp() != 2 || g.d != nf.d {
        return Err(Error::Usage("invert_normal_form needs a pair on the normal form's torus".into()));
    }
    if g.n > nf.jc {
        return Err(Error::Usage(format!("right side cutoff {} exceeds the normal form's {}", g.n, nf.jc)));
    }
    let n = g.n as i64;
    let d = g.d;
    let sh = g.shape();
    let gmax = g.max_abs();
    let eig: Vec<Vec<(Vec<f64>, DMatrix<C64>)>> = [1i8, -1]
        .iter()
        .map(|&sigma| (0..=n).map(|j| eig_hermitian_2x2(&(nf.block(sigma, j) / (I * sigma as f64)))).collect())
        .collect();
    let mut h = TorusFunction::zeros_pair(d, g.n);
    let mut stats = InversionStats { min_divisor: f64::INFINITY, min_margin: f64::INFINITY, ..Default::default() };
    for t in 0..sh.time_len() {
        let ell = &sh.decode_time(t)[..d];
        let wl = dot(&nf.omega, ell);
        let at_zero = ell.iter().all(|l| *l == 0);
        for sigma in [1i8, -1] {
            let c = sidx(sigma);
            for j in 0..=n {
                let js: Vec<i64> = if j == 0 { vec![0] } else { vec![j, -j] };
                let rhs = DVector::from_iterator(js.len(), js.iter().map(|&k| g.get(c, ell, k)));
                if rhs.iter().all(|v| *v == C64::new(0.0, 0.0)) {
                    continue;
                }
                let (lam, u) = &eig[c][j as usize];
                let floor = if at_zero && nf.structural_single(j) {
                    divisor_floor
                } else {
                    divisor_floor.max(p_threshold(gamma, tau, ell, j))
                };
                let mut y = u.adjoint() * &rhs;
                for (k, l) in lam.iter().enumerate() {
                    let div = wl + sigma as f64 * l;
                    if div.abs() < floor || div == 0.0 {
                        if y[k].norm() <= 1e-13 * gmax {
                            y[k] = C64::new(0.0, 0.0);
                            stats.zeroed += 1;
                            continue;
                        }
                        return Err(Error::SmallDivisor {
                            context: format!("first Melnikov at ℓ = {ell:?}, σ = {sigma}, j = {}", if k == 0 { j } else { -j }),
                            gap: div.abs(),
                            floor,
                        });
                    }
                    stats.min_divisor = stats.min_divisor.min(div.abs());
                    stats.min_margin = stats.min_margin.min(div.abs() / floor);
                    y[k] /= I * div;
                }
                let x = u * y;
                let a = DMatrix::from_diagonal_element(js.len(), js.len(), I * wl) + nf.block(sigma, j);
                let res = (&a * &x - &rhs).norm() / rhs.norm();
                stats.max_block_residual = stats.max_block_residual.max(res);
                for (k, &jj) in js.iter().enumerate() {
                    h.set(c, ell, jj, x[k]);
                }
            }
        }
    }
    Ok((h, stats))
}

/// L(z) = W₁(ω·∂ + D_∞)W₂⁻¹ with W₁ = V₁Φ_∞, W₂ = V₂Φ_∞, from one
/// regularize + reduce run.
#[derive(Clone, Debug)]
pub struct ReducedChain {
    pub omega: Vec<f64>,
    pub l0: DiffOperator,
    pub nf: NormalForm,
    pub w1: Transformation,
    pub w2: Transformation,
    pub kam_remainder: f64,
}

impl ReducedChain {
    pub fn new(l0: &DiffOperator, reg: &RegularizationOutput, kam: &KamOutput) -> Self {
        let phi = Transformation::Operator { fwd: Box::new(kam.phi_fwd.clone()), inv: Box::new(kam.phi_inv.clone()) };
        ReducedChain {
            omega: reg.omega.clone(),
            l0: l0.clone(),
            nf: kam.nf.clone(),
            w1: reg.v1.clone().then(phi.clone()),
            w2: reg.v2.clone().then(phi),
            kam_remainder: kam.history.last().map(|r| r.r_s0).unwrap_or(0.0),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct InversionReport {
    pub stats: InversionStats,
    /// ‖L(z)h − g‖_{s₀} / ‖g‖_{s₀+2}.
    pub end_to_end: f64,
    /// γ‖h‖_{s₀} / ‖g‖_{s₀+2τ+5}.
    pub tame_ratio: f64,
}

/// h = W₂ ∘ (ω·∂ + D_∞)⁻¹ ∘ W₁⁻¹ g.
pub fn invert_l(chain: &ReducedChain, g: &TorusFunction, gamma: f64, tau: f64, divisor_floor: f64, s0: f64) -> Result<(TorusFunction, InversionReport)> {
    let v = chain.w1.apply_inverse(g)?;
    let (y, stats) = invert_normal_form(&chain.nf, &v, gamma, tau, divisor_floor)?;
    let h = chain.w2.apply(&y)?;
    let lh = chain.l0.apply(&h);
    let gn = g.sobolev_norm(s0 + 2.0).max(f64::MIN_POSITIVE);
    let end_to_end = (&lh - g).sobolev_norm(s0) / gn;
    let tame_ratio = gamma * h.sobolev_norm(s0) / g.sobolev_norm(s0 + 2.0 * tau + 5.0).max(f64::MIN_POSITIVE);
    Ok((h, InversionReport { stats, end_to_end, tame_ratio }))
}

fn lift_identity(b: &BlockOperator, jc: usize, lc: usize) -> BlockOperator {
    let id = BlockOperator::identity(b.d, b.jc, b.lc);
    BlockOperator::identity(b.d, jc, lc).add(&b.sub(&id).resize(jc, lc))
}

/// Reduction started from Φ_prev⁻¹ L₇ Φ_prev.
pub fn reduce_warm(reg: &RegularizationOutput, prev: &KamOutput, sched: &KamSchedule) -> Result<KamOutput> {
    let a = reg.l7_block().part;
    let (jc, lc) = (a.jc, a.lc);
    let fwd = lift_identity(&prev.phi_fwd, jc, lc);
    let inv = lift_identity(&prev.phi_inv, jc, lc);
    let b = inv.compose(&fwd.omega_dphi(&reg.omega)).add(&inv.compose(&a).compose(&fwd));
    let mut nf = NormalForm::from_regularization(reg);
    let k = b.sub(&nf.to_operator(lc));
    nf.absorb(&k);
    let r0 = b.sub(&nf.to_operator(lc));
    let mut out = reduce_from(nf, r0, sched)?;
    let prev_phi = Transformation::Operator { fwd: Box::new(fwd.clone()), inv: Box::new(inv.clone()) };
    out.phi = prev_phi.then(out.phi);
    out.phi_fwd = fwd.compose(&out.phi_fwd);
    out.phi_inv = out.phi_inv.compose(&inv);
    out.nf0 = NormalForm::from_regularization(reg);
    Ok(out)
}

/// max |iω·∂φu − u_xx − mu − εf| at random points, by direct Fourier summation.
pub fn collocation_residual<P: NonlinearityPlugin + ?Sized>(u: &TorusFunction, params: &ModelParams, plugin: &P, points: usize, seed: u64) -> f64 {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let u0 = u.component(0);
    let (ux, uxx, ut) = (u0.dx(), u0.dxx(), u0.omega_dphi(&params.omega));
    let tau = std::f64::consts::TAU;
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let phi: Vec<f64> = (0..u.d).map(|_| rng.gen_range(0.0..tau)).collect();
        let x = rng.gen_range(0.0..tau);
        let z = [u0.eval(0, &phi, x), ux.eval(0, &phi, x), uxx.eval(0, &phi, x)];
        let f = if params.eps == 0.0 { C64::new(0.0, 0.0) } else { plugin.f(&phi, x, z) };
        let r = I * ut.eval(0, &phi, x) - z[2] - z[0] * params.m - f * params.eps;
        worst = worst.max(r.norm());
    }
    worst
}

/// Per-iterate diagnostics at one ω.
#[derive(Clone, Debug, Default, Serialize)]
pub struct NewtonRecord {
    pub iterate: usize,
    pub n: usize,
    pub capped: bool,
    /// ‖F(u_n)‖_{s₀} at the cutoff of u_n.
    pub residual: f64,
    /// ‖u_n − u_{n−1}‖_{s₀}.
    pub increment: f64,
    pub kam_iterations: usize,
    pub kam_converged: bool,
    pub inversion: InversionReport,
    pub m2: f64,
    pub m1_im: f64,
    pub m0: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct PointResult {
    pub omega: Vec<f64>,
    pub converged: bool,
    pub error: Option<String>,
    pub failed_at: Option<usize>,
    pub records: Vec<NewtonRecord>,
    pub collocation: Option<f64>,
    pub stability: Option<StabilityReport>,
    #[serde(skip)]
    pub kam_history: Vec<Vec<KamRecord>>,
    #[serde(skip)]
    pub u: Option<TorusFunction>,
    #[serde(skip)]
    pub chain: Option<ReducedChain>,
}

impl PointResult {
    pub fn residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual).collect()
    }
}

struct Ctx<'a, P: NonlinearityPlugin + ?Sized> {
    cfg: &'a SolverConfig,
    plugin: &'a P,
    sched: KamSchedule,
}

/// One Newton step at cutoff n: linearize, regularize, reduce, invert.
fn newton_step<P: NonlinearityPlugin + ?Sized>(
    ctx: &Ctx<P>,
    u: &TorusFunction,
    params: &ModelParams,
    prev: Option<&KamOutput>,
) -> Result<(TorusFunction, KamOutput, ReducedChain, InversionReport, RegularizationOutput)> {
    let cfg = ctx.cfg;
    let n = params.n;
    let r = residual(u, params, ctx.plugin)?;
    let ir = r.scale(I);
    let g = TorusFunction::pair_of(&ir, &ir.conj_reflect());
    let (_, l0) = assemble_linearized(u, params, ctx.plugin)?;
    let reg = regularize_operator(&l0, &RegConfig::new(cfg.d, n, n))?;
    let kam = match prev {
        Some(p) if cfg.warm_start => reduce_warm(&reg, p, &ctx.sched)?,
        _ => reduce(&reg, &ctx.sched)?,
    };
    let chain = ReducedChain::new(&l0, &reg, &kam);
    let (h, rep) = invert_l(&chain, &g, cfg.gamma(), cfg.tau(), cfg.divisor_floor, cfg.s0())?;
    Ok((h, kam, chain, rep, reg))
}

fn solve_point<P: NonlinearityPlugin + ?Sized>(ctx: &Ctx<P>, omega: &[f64], index: usize) -> PointResult {
    let cfg = ctx.cfg;
    let s0 = cfg.s0();
    let mut out = PointResult { omega: omega.to_vec(), ..Default::default() };
    let scale0 = scale_schedule(cfg.n0, 0, cfg.n_cap).expect("validated config");
    let mut params = ModelParams::new(omega, cfg.m, cfg.eps, scale0.n);
    let mut u = TorusFunction::zeros(cfg.d, scale0.n);
    let mut prev: Option<KamOutput> = None;
    let mut increment = 0.0;
    let mut pending: Option<(Scale, KamOutput, InversionReport, RegularizationOutput)> = None;
    for it in 0..=cfg.max_iters {
        let res = match residual(&u, &params, ctx.plugin) {
            Ok(r) => r.sobolev_norm(s0),
            Err(e) => {
                out.error = Some(e.to_string());
                out.failed_at = Some(it);
                return out;
            }
        };
        let mut rec = NewtonRecord { iterate: it, n: params.n, residual: res, increment, ..Default::default() };
        if let Some((sc, kam, inv, reg)) = pending.take() {
            rec.capped = sc.capped;
            rec.kam_iterations = kam.iterations();
            rec.kam_converged = kam.converged;
            rec.inversion = inv;
            rec.m2 = reg.m2;
            rec.m1_im = reg.m1.im;
            rec.m0 = reg.m0;
            out.kam_history.push(kam.history.clone());
            prev = Some(kam);
        }
        let tame_ok = rec.inversion.tame_ratio <= cfg.tame_cap;
        out.records.push(rec);
        if !tame_ok {
            out.error = Some(format!("tame ratio above cap {:.3e}", cfg.tame_cap));
            out.failed_at = Some(it);
            return out;
        }
        if res <= cfg.tol {
            out.converged = true;
            break;
        }
        if it == cfg.max_iters {
            break;
        }
        let sc = scale_schedule(cfg.n0, it + 1, cfg.n_cap).expect("validated config");
        params.n = sc.n;
        u = u.resize(sc.n);
        match newton_step(ctx, &u, &params, prev.as_ref()) {
            Ok((h, kam, chain, inv, reg)) => {
                let du = h.component(0);
                increment = du.sobolev_norm(s0);
                u = &u + &du;
                out.chain = Some(chain);
                pending = Some((sc, kam, inv, reg));
            }
            Err(e) => {
                out.error = Some(e.to_string());
                out.failed_at = Some(it + 1);
                return out;
            }
        }
    }
    out.collocation = Some(collocation_residual(&u, &params, ctx.plugin, cfg.collocation_points, cfg.seed ^ (index as u64).wrapping_mul(0x9e37_79b9)));
    out.u = Some(u);
    out
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Bookkeeping {
    pub tau: f64,
    pub kam_alpha: f64,
    pub kam_beta: f64,
    /// Sobolev gain in the tame ratio reported for the inversion.
    pub tame_loss: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SolveResult {
    pub eps: f64,
    pub gamma: f64,
    pub e_abs: f64,
    pub points: Vec<PointResult>,
    /// masks[n][k]: ω_k survives iterate n.
    pub masks: Vec<Vec<bool>>,
    pub survivors: usize,
    pub no_parameters_survive: bool,
    pub bookkeeping: Bookkeeping,
}

pub fn nash_moser_run(cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let plugin = cfg.plugin();
    let gamma = cfg.gamma();
    if cfg.eps > 0.0 && cfg.eps / gamma > cfg.smallness {
        return Err(Error::Config(format!("ε/γ = {:.3e} above the smallness gate {}", cfg.eps / gamma, cfg.smallness)));
    }
    let e_abs = check_hyp2(&plugin, cfg.d, 1e-12)?.norm();
    let sched = cfg.kam_schedule(e_abs);
    let ctx = Ctx { cfg, plugin: &plugin, sched };
    let grid = cfg.grid();
    let points: Vec<PointResult> = grid.points.par_iter().enumerate().map(|(k, w)| solve_point(&ctx, w, k)).collect();
    let depth = points.iter().map(|p| p.records.len()).max().unwrap_or(1);
    let masks: Vec<Vec<bool>> = (0..depth)
        .map(|n| {
            points
                .iter()
                .map(|p| match p.failed_at {
                    Some(f) => n < f,
                    None => true,
                })
                .collect()
        })
        .collect();
    let survivors = points.iter().filter(|p| p.converged).count();
    Ok(SolveResult {
        eps: cfg.eps,
        gamma,
        e_abs,
        points,
        masks,
        survivors,
        no_parameters_survive: survivors == 0,
        bookkeeping: Bookkeeping { tau: cfg.tau(), kam_alpha: ctx.sched.alpha_exp, kam_beta: ctx.sched.beta_exp, tame_loss: 2.0 * cfg.tau() + 5.0 },
    })
}

/// (passes, smallest observed exponent): log r_{n+1}/log r_n ≥ 1.5 for
/// each pair with r_n < threshold and r_{n+1} above the roundoff floor.
pub fn newton_rate(residuals: &[f64], threshold: f64, floor: f64) -> (bool, f64, usize) {
    let mut worst = f64::INFINITY;
    let mut pairs = 0;
    for w in residuals.windows(2) {
        if w[0] < threshold && w[0] < 1.0 && w[1] > floor {
            let e = w[1].ln() / w[0].ln();
            worst = worst.min(e);
            pairs += 1;
        }
    }
    (worst >= 1.5, worst, pairs)
}

/// Slope κ̂ of log‖u_n − u_{n−1}‖ against log N_n by least squares, with
/// whether the increments decrease.
pub fn increment_shape(records: &[NewtonRecord]) -> (bool, f64) {
    let pts: Vec<(f64, f64)> = records.iter().filter(|r| r.increment > 0.0).map(|r| ((r.n as f64).ln(), r.increment.ln())).collect();
    let decreasing = pts.windows(2).all(|w| w[1].1 < w[0].1);
    if pts.len() < 2 {
        return (decreasing, f64::NAN);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { -sxy / sxx } else { f64::INFINITY };
    (decreasing, slope)
}

impl SolveResult {
    pub fn residuals_csv(&self) -> String {
        let mut s = String::from("omega,iterate,n,residual,increment,end_to_end,tame_ratio,min_divisor,kam_iterations\n");
        for p in &self.points {
            for r in &p.records {
                s += &format!(
                    "{},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{}\n",
                    fmt_omega(&p.omega),
                    r.iterate,
                    r.n,
                    r.residual,
                    r.increment,
                    r.inversion.end_to_end,
                    r.inversion.tame_ratio,
                    r.inversion.stats.min_divisor,
                    r.kam_iterations
                );
            }
        }
        s
    }

    pub fn kam_history_csv(&self) -> String {
        let mut s = String::from("omega,newton_iterate,nu,n,r_s0,r_sbeta,max_re_mu,psi_norm,min_divisor,homological_residual\n");
        for p in &self.points {
            for (it, hist) in p.kam_history.iter().enumerate() {
                for r in hist {
                    s += &format!(
                        "{},{},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}\n",
                        fmt_omega(&p.omega),
                        it + 1,
                        r.nu,
                        r.n,
                        r.r_s0,
                        r.r_sbeta,
                        r.max_re_mu,
                        r.psi_norm,
                        r.min_divisor,
                        r.homological_residual
                    );
                }
            }
        }
        s
    }

    pub fn stability_csv(&self) -> String {
        let mut s = String::from("omega,t,v_norm,h_norm\n");
        for p in &self.points {
            if let Some(st) = &p.stability {
                for x in &st.samples {
                    let h = x.h_norm.map(|v| format!("{v:.12e}")).unwrap_or_default();
                    s += &format!("{},{:.6},{:.12e},{}\n", fmt_omega(&p.omega), x.t, x.v_norm, h);
                }
            }
        }
        s
    }
}

pub fn fmt_omega(w: &[f64]) -> String {
    w.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ")
}

/// Stability of the reduced flow at every converged ω, from a seeded random
/// x-only datum.
pub fn attach_stability(cfg: &SolverConfig, result: &mut SolveResult) {
    let horizon = cfg.stability_periods * std::f64::consts::TAU;
    let eps = result.eps;
    result.points.par_iter_mut().enumerate().for_each(|(k, p)| {
        let Some(chain) = p.chain.as_ref().filter(|_| p.converged) else { return };
        let n = chain.nf.jc;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1000 + k as u64));
        let h0 = crate::fourier_core::random_analytic(&mut rng, cfg.d, n, 1.0, 1.0, false).phi_average().pair();
        p.stability = Some(match stability_check(&chain.nf, &chain.w2, &h0, horizon, cfg.s0(), cfg.stability_samples, 16, eps) {
            Ok(r) => r,
            Err(e) => StabilityReport { omega: p.omega.clone(), conserved: false, samples: vec![], ..failed(e) },
        });
    });
}

fn failed(e: Error) -> StabilityReport {
    eprintln!("stability check failed: {e}");
    StabilityReport::default()
}

/// Normal form of L(0) at every grid point (None where the reduction fails).
pub fn normal_forms_at_zero(cfg: &SolverConfig) -> Result<(Vec<Option<NormalForm>>, Vec<Option<KamOutput>>, f64)> {
    cfg.validate()?;
    let plugin = cfg.plugin();
    let e_abs = check_hyp2(&plugin, cfg.d, 1e-12)?.norm();
    let sched = cfg.kam_schedule(e_abs);
    let n = cfg.n0;
    let grid = cfg.grid();
    let outs: Vec<Option<KamOutput>> = grid
        .points
        .par_iter()
        .map(|w| {
            let params = ModelParams::new(w, cfg.m, cfg.eps, n);
            let (_, l0) = assemble_linearized(&TorusFunction::zeros(cfg.d, n), &params, &plugin).ok()?;
            let reg = regularize_operator(&l0, &RegConfig::new(cfg.d, n, n)).ok()?;
            reduce(&reg, &sched).ok()
        })
        .collect();
    let nfs = outs.iter().map(|o| o.as_ref().map(|k| k.nf.clone())).collect();
    Ok((nfs, outs, e_abs))
}

/// Excluded fractions over several ε with γ = ε^a, from the normal forms of
/// L(0) at cutoff N₀.
pub fn measure_run(cfg: &SolverConfig, eps_list: &[f64]) -> Result<crate::melnikov_measure::MeasureReport> {
    use crate::melnikov_measure::{build_good_sets, measure_report, GoodSetConfig};
    let grid = cfg.grid();
    let mut runs = vec![];
    for &eps in eps_list {
        let c = SolverConfig { eps, ..cfg.clone() };
        let (nfs, _, e_abs) = normal_forms_at_zero(&c)?;
        let gs = build_good_sets(&[nfs], &grid, &[c.n0], &GoodSetConfig::new(c.gamma(), c.tau(), eps, e_abs));
        runs.push((eps, c.gamma(), gs));
    }
    Ok(measure_report(&runs, grid.len()))
}
