//! Non-resonance predicates on a frequency grid and the measured size of
//! the excluded sets. "Measure" is the fraction of grid points.

mod thresholds;
#[cfg(test)]
mod tests;

pub use thresholds::{bracket, bracket_j, diophantine_threshold, o_threshold, p_threshold, s_threshold};

use crate::error::{Error, Result};
use crate::fourier_core::{dot, ParamGrid};
use crate::kam_reducibility::NormalForm;
use num_complex::Complex64 as C64;
use serde::Serialize;
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MelnikovKind {
    Diophantine,
    /// Second Melnikov between different clusters.
    S,
    /// Second Melnikov inside one cluster, ℓ ≠ 0.
    O,
    /// First Melnikov.
    P,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResonanceQuery {
    pub kind: MelnikovKind,
    pub ell: Vec<i64>,
    pub sigma: i8,
    pub j: i64,
    pub sigma_p: i8,
    pub jp: i64,
    pub gamma: f64,
    pub tau: f64,
    pub divisor: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Evaluates one condition at the normal form's ω. The diophantine kind
/// ignores the spectral indices.
#[allow(clippy::too_many_arguments)]
pub fn melnikov_test(kind: MelnikovKind, nf: &NormalForm, ell: &[i64], sigma: i8, j: i64, sigma_p: i8, jp: i64, gamma: f64, tau: f64) -> Result<ResonanceQuery> {
    if ell.len() != nf.omega.len() {
        return Err(Error::Usage(format!("ℓ has {} components, ω has {}", ell.len(), nf.omega.len())));
    }
    let zero_ell = ell.iter().all(|l| *l == 0);
    let wl = C64::new(0.0, dot(&nf.omega, ell));
    let (divisor, threshold) = match kind {
        MelnikovKind::Diophantine => {
            if zero_ell {
                return Err(Error::Usage("diophantine test needs ℓ ≠ 0".into()));
            }
            (wl.norm(), diophantine_threshold(gamma, tau, ell))
        }
        MelnikovKind::S => {
            let d = wl + nf.mu(sigma, j) - nf.mu(sigma_p, jp);
            (d.norm(), s_threshold(gamma, tau, ell, sigma, j, sigma_p, jp))
        }
        MelnikovKind::O => {
            if zero_ell {
                return Err(Error::Usage("O-condition needs ℓ ≠ 0".into()));
            }
            if sigma_p != sigma || jp.abs() != j.abs() {
                return Err(Error::Usage(format!("O-condition needs σ' = σ and j' = ±j, got ({sigma},{j}), ({sigma_p},{jp})")));
            }
            let d = wl + nf.mu(sigma, j) - nf.mu(sigma_p, jp);
            (d.norm(), o_threshold(gamma, tau, ell, j))
        }
        MelnikovKind::P => {
            let d = wl + nf.mu(sigma, j);
            (d.norm(), p_threshold(gamma, tau, ell, j))
        }
    };
    Ok(ResonanceQuery { kind, ell: ell.to_vec(), sigma, j, sigma_p, jp, gamma, tau, divisor, threshold, pass: divisor >= threshold })
}

/// All ℓ ∈ Z^d with 0 < |ℓ|∞ ≤ lmax.
pub fn ell_box(d: usize, lmax: usize, include_zero: bool) -> Vec<Vec<i64>> {
    let side = 2 * lmax + 1;
    let mut out = Vec::with_capacity(side.pow(d as u32));
    for k in 0..side.pow(d as u32) {
        let mut r = k;
        let ell: Vec<i64> = (0..d)
            .map(|_| {
                let v = (r % side) as i64 - lmax as i64;
                r /= side;
                v
            })
            .collect();
        if include_zero || ell.iter().any(|l| *l != 0) {
            out.push(ell);
        }
    }
    out
}

/// ω passing |ω·ℓ| ≥ γ₀/|ℓ|^τ₀ for all 0 < |ℓ|∞ ≤ lmax (|ℓ| the ℓ¹ norm).
pub fn diophantine_mask(grid: &ParamGrid, gamma0: f64, tau0: f64, lmax: usize) -> Vec<bool> {
    let ells = ell_box(grid.d, lmax, false);
    grid.points
        .iter()
        .map(|w| ells.iter().all(|l| dot(w, l).abs() >= diophantine_threshold(gamma0, tau0, l)))
        .collect()
}

/// The j ≥ 1 that can fail the O-condition at ℓ, and the bound used.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CutoffRange {
    pub js: Vec<i64>,
    /// C|ℓ|/(ε|e|).
    pub jbound: f64,
}

/// S_ℓ = {j : |ω·ℓ|/2 ≤ |j|b_j ≤ 2|ω·ℓ|} ∩ {|j| ≤ C|ℓ|/(ε|e|)}, scanning
/// 1 ≤ j ≤ jmax; `jb(j)` returns |j|b_j = |μ_{σ,j} − μ_{σ,−j}|.
pub fn cutoff_j_range<F: Fn(i64) -> f64>(ell: &[i64], omega: &[f64], eps: f64, e_abs: f64, c: Option<f64>, jmax: usize, jb: F) -> CutoffRange {
    if ell.iter().all(|l| *l == 0) {
        return CutoffRange::default();
    }
    let wl = dot(omega, ell).abs();
    let c = c.unwrap_or_else(|| 4.0 * omega.iter().fold(0.0f64, |m, w| m.max(w.abs())));
    let lnorm = ell.iter().map(|l| l.unsigned_abs()).max().unwrap() as f64;
    let jbound = if eps * e_abs > 0.0 { c * lnorm / (eps * e_abs) } else { f64::INFINITY };
    let top = (jmax as f64).min(jbound.floor()) as i64;
    let js = (1..=top)
        .filter(|&j| {
            let v = jb(j);
            v >= 0.5 * wl && v <= 2.0 * wl
        })
        .collect();
    CutoffRange { js, jbound }
}

#[derive(Clone, Debug, Serialize)]
pub struct GoodSetConfig {
    pub gamma: f64,
    pub tau: f64,
    pub abs_floor: f64,
    pub eps: f64,
    pub e_abs: f64,
    pub cutoff_c: Option<f64>,
    /// Also scan every j for the O-condition to check the cutoff prediction.
    pub exhaustive_o: bool,
    /// Largest |ℓ|∞ scanned regardless of N_n.
    pub l_cap: usize,
}

impl GoodSetConfig {
    pub fn new(gamma: f64, tau: f64, eps: f64, e_abs: f64) -> Self {
        GoodSetConfig { gamma, tau, abs_floor: 1e-10, eps, e_abs, cutoff_c: None, exhaustive_o: true, l_cap: 64 }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct IterateStats {
    pub iterate: usize,
    pub n: usize,
    pub gamma_n: f64,
    pub survivors: usize,
    pub excluded_fraction: f64,
    /// Points newly failing each family at this iterate (a point can count twice).
    pub new_g: usize,
    pub new_h: usize,
    pub new_p: usize,
    pub new_missing: usize,
    /// ℓ = 0 tests whose unperturbed divisor vanishes identically in ω; they
    /// never exclude a point.
    pub structural_tests: usize,
    /// Of those, the ones below the absolute floor.
    pub structural_below_floor: usize,
    pub cutoff_scanned: usize,
    pub cutoff_skipped: usize,
    /// O-failures at j outside the predicted range (must be zero).
    pub soundness_violations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct GoodSets {
    pub g: Vec<Vec<bool>>,
    pub h: Vec<Vec<bool>>,
    pub p: Vec<Vec<bool>>,
    /// G ∩ H ∩ P ∩ {normal form available}.
    pub combined: Vec<Vec<bool>>,
    pub stats: Vec<IterateStats>,
    /// Excluded points by the smallest |ℓ|∞ among their failing tests.
    pub shell_histogram: Vec<usize>,
}

#[derive(Default)]
struct PointScan {
    g: bool,
    h: bool,
    p: bool,
    min_shell: Option<usize>,
    structural: usize,
    structural_below: usize,
    scanned: usize,
    skipped: usize,
    violations: usize,
}

fn note_shell(ps: &mut PointScan, ell: &[i64]) {
    let w = ell.iter().map(|l| l.unsigned_abs() as usize).max().unwrap_or(0);
    ps.min_shell = Some(ps.min_shell.map_or(w, |m| m.min(w)));
}

/// Below the threshold, or an exact resonance when the threshold is zero.
fn fails(divisor: f64, threshold: f64) -> bool {
    divisor < threshold || divisor == 0.0
}

fn scan_point(nf: &NormalForm, lmax: usize, gamma: f64, cfg: &GoodSetConfig) -> PointScan {
    let mut ps = PointScan { g: true, h: true, p: true, ..Default::default() };
    let jc = nf.jc as i64;
    let tau = cfg.tau;
    let mus: Vec<[C64; 2]> = (-jc..=jc).map(|j| [nf.mu(1, j), nf.mu(-1, j)]).collect();
    let mu = |sigma: i8, j: i64| mus[(j + jc) as usize][if sigma > 0 { 0 } else { 1 }];
    for ell in ell_box(nf.d, lmax, true) {
        let zero = ell.iter().all(|l| *l == 0);
        let wl = C64::new(0.0, dot(&nf.omega, &ell));
        let lt = bracket(&ell).powf(tau);
        for sigma in [1i8, -1] {
            for j in -jc..=jc {
                // P
                let dv = (wl + mu(sigma, j)).norm();
                if zero && nf.structural_single(j) {
                    ps.structural += 1;
                    ps.structural_below += (dv < cfg.abs_floor) as usize;
                } else if fails(dv, 2.0 * gamma * bracket_j(j).powi(2) / lt) {
                    ps.p = false;
                    note_shell(&mut ps, &ell);
                }
                // S
                for sigma_p in [1i8, -1] {
                    for jp in -jc..=jc {
                        if sigma == sigma_p && j.abs() == jp.abs() {
                            continue;
                        }
                        let dv = (wl + mu(sigma, j) - mu(sigma_p, jp)).norm();
                        if zero && nf.structural_pair(sigma, j, sigma_p, jp) {
                            ps.structural += 1;
                            ps.structural_below += (dv < cfg.abs_floor) as usize;
                        } else if fails(dv, s_threshold(gamma, tau, &ell, sigma, j, sigma_p, jp)) {
                            ps.g = false;
                            note_shell(&mut ps, &ell);
                        }
                    }
                }
            }
            // O, j ≥ 1 inside the cutoff range
            if zero {
                continue;
            }
            let jb = |j: i64| (mu(sigma, j) - mu(sigma, -j)).norm();
            let range = cutoff_j_range(&ell, &nf.omega, cfg.eps, cfg.e_abs, cfg.cutoff_c, nf.jc, jb);
            let fails_o = |j: i64| fails((wl + mu(sigma, j) - mu(sigma, -j)).norm(), o_threshold(gamma, tau, &ell, j));
            ps.scanned += range.js.len();
            ps.skipped += nf.jc - range.js.len();
            for &j in &range.js {
                if fails_o(j) {
                    ps.h = false;
                    note_shell(&mut ps, &ell);
                }
            }
            if cfg.exhaustive_o {
                for j in 1..=jc {
                    if !range.js.contains(&j) && fails_o(j) {
                        ps.violations += 1;
                    }
                }
            }
        }
    }
    ps
}

/// Nested G_n, H_n, P_n with γ_n = (1 + 2^{−n})γ. `nfs[n][k]` is the normal
/// form at iterate n and grid point k (None: reduction failed there);
/// `ns[n]` bounds |ℓ|∞ at iterate n.
pub fn build_good_sets(nfs: &[Vec<Option<NormalForm>>], grid: &ParamGrid, ns: &[usize], cfg: &GoodSetConfig) -> GoodSets {
    let npts = grid.len();
    let mut g = vec![true; npts];
    let mut h = vec![true; npts];
    let mut p = vec![true; npts];
    let mut alive = vec![true; npts];
    let mut out = GoodSets { g: vec![], h: vec![], p: vec![], combined: vec![], stats: vec![], shell_histogram: vec![] };
    for (n, fam) in nfs.iter().enumerate() {
        assert_eq!(fam.len(), npts);
        let gamma_n = (1.0 + 0.5f64.powi(n as i32)) * cfg.gamma;
        let lmax = ns[n].min(cfg.l_cap);
        let mut st = IterateStats { iterate: n, n: ns[n], gamma_n, ..Default::default() };
        for k in 0..npts {
            let was = g[k] && h[k] && p[k] && alive[k];
            let Some(nf) = &fam[k] else {
                if alive[k] {
                    st.new_missing += 1;
                }
                alive[k] = false;
                continue;
            };
            if !was {
                continue;
            }
            let ps = scan_point(nf, lmax, gamma_n, cfg);
            st.structural_tests += ps.structural;
            st.structural_below_floor += ps.structural_below;
            st.cutoff_scanned += ps.scanned;
            st.cutoff_skipped += ps.skipped;
            st.soundness_violations += ps.violations;
            st.new_g += (!ps.g) as usize;
            st.new_h += (!ps.h) as usize;
            st.new_p += (!ps.p) as usize;
            g[k] &= ps.g;
            h[k] &= ps.h;
            p[k] &= ps.p;
            if let Some(sh) = ps.min_shell.filter(|_| !(ps.g && ps.h && ps.p)) {
                if out.shell_histogram.len() <= sh {
                    out.shell_histogram.resize(sh + 1, 0);
                }
                out.shell_histogram[sh] += 1;
            }
        }
        let comb: Vec<bool> = (0..npts).map(|k| g[k] && h[k] && p[k] && alive[k]).collect();
        st.survivors = comb.iter().filter(|b| **b).count();
        st.excluded_fraction = 1.0 - st.survivors as f64 / npts as f64;
        out.g.push(g.clone());
        out.h.push(h.clone());
        out.p.push(p.clone());
        out.combined.push(comb);
        out.stats.push(st);
    }
    out
}

/// n̄ = log[ log(1/(Cγε)) / ((κ − τ − 3) log N₀) ] / log(3/2), clamped at 0.
#[derive(Clone, Debug, Serialize)]
pub struct Nbar {
    pub value: usize,
    pub raw: f64,
    pub clamped: bool,
}

pub fn nbar(eps: f64, gamma: f64, n0: usize, kappa: f64, tau: f64, c: f64) -> Result<Nbar> {
    if !(eps > 0.0 && gamma > 0.0 && c > 0.0 && n0 >= 2) {
        return Err(Error::Usage("n̄ needs ε, γ, C > 0 and N₀ ≥ 2".into()));
    }
    if kappa <= tau + 3.0 {
        return Err(Error::Usage(format!("n̄ needs κ > τ + 3, got κ = {kappa}, τ = {tau}")));
    }
    let inner = (1.0 / (c * gamma * eps)).ln() / ((kappa - tau - 3.0) * (n0 as f64).ln());
    if inner <= 1.0 {
        return Ok(Nbar { value: 0, raw: if inner > 0.0 { inner.ln() / 1.5f64.ln() } else { f64::NEG_INFINITY }, clamped: true });
    }
    let raw = inner.ln() / 1.5f64.ln();
    Ok(Nbar { value: raw.floor() as usize, raw, clamped: false })
}

#[derive(Clone, Debug, Serialize)]
pub struct MeasureRow {
    pub eps: f64,
    pub gamma: f64,
    pub iterate: usize,
    pub kind: String,
    pub excluded_fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeasureReport {
    pub rows: Vec<MeasureRow>,
    /// (ε, final excluded fraction), in the order given.
    pub trend: Vec<(f64, f64)>,
    pub trend_checked: bool,
    /// Fractions strictly decrease as ε decreases.
    pub trend_ok: bool,
    pub soundness_violations: usize,
    pub cutoff_skipped: usize,
    pub shell_histograms: Vec<Vec<usize>>,
}

/// Tabulates one GoodSets per ε (any order) and checks the trend.
pub fn measure_report(runs: &[(f64, f64, GoodSets)], npts: usize) -> MeasureReport {
    let mut rows = vec![];
    let mut trend = vec![];
    let mut viol = 0;
    let mut skipped = 0;
    let frac = |c: usize| c as f64 / npts as f64;
    for (eps, gamma, gs) in runs {
        for st in &gs.stats {
            for (kind, v) in [("S", frac(st.new_g)), ("O", frac(st.new_h)), ("P", frac(st.new_p)), ("reduction", frac(st.new_missing)), ("total", st.excluded_fraction)] {
                rows.push(MeasureRow { eps: *eps, gamma: *gamma, iterate: st.iterate, kind: kind.into(), excluded_fraction: v });
            }
            viol += st.soundness_violations;
            skipped += st.cutoff_skipped;
        }
        trend.push((*eps, gs.stats.last().map_or(0.0, |s| s.excluded_fraction)));
    }
    let mut sorted = trend.clone();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let trend_checked = sorted.len() >= 2;
    let trend_ok = trend_checked && sorted.windows(2).all(|w| w[1].1 < w[0].1);
    MeasureReport {
        rows,
        trend,
        trend_checked,
        trend_ok,
        soundness_violations: viol,
        cutoff_skipped: skipped,
        shell_histograms: runs.iter().map(|r| r.2.shell_histogram.clone()).collect(),
    }
}

impl MeasureReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("eps,gamma,iterate,kind,excluded_fraction\n");
        for r in &self.rows {
            let _ = writeln!(s, "{:e},{:e},{},{},{:.6}", r.eps, r.gamma, r.iterate, r.kind, r.excluded_fraction);
        }
        s
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "excluded fraction by epsilon:");
        for (e, f) in &self.trend {
            let _ = writeln!(s, "  eps = {e:e}: {f:.4}");
        }
        if self.trend_checked {
            let _ = writeln!(s, "trend strictly decreasing: {}", self.trend_ok);
        } else {
            let _ = writeln!(s, "trend check skipped (single epsilon)");
        }
        let _ = writeln!(s, "cutoff soundness violations: {}", self.soundness_violations);
        let _ = writeln!(s, "O-tests skipped by the cutoff: {}", self.cutoff_skipped);
        for (k, h) in self.shell_histograms.iter().enumerate() {
            let _ = writeln!(s, "run {k} exclusions by |l| shell: {h:?}");
        }
        s
    }
}
