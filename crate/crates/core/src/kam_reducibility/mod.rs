//! KAM reduction of ω·∂φ + D + R, D constant and block-diagonal on the
//! clusters {(σ, j), (σ, −j)}, to a constant-coefficient normal form.
//! Each step solves the homological equation
//!   ω·∂Ψ + DΨ − ΨD = [R] − Π_N R
//! and conjugates by e^Ψ, which leaves D + [R] and a quadratically smaller
//! remainder.

#[cfg(test)]
mod tests;

use crate::error::{Error, Result};
use crate::melnikov_measure::{o_threshold, s_threshold};
use crate::operator_algebra::{eig_hermitian_2x2, exp_operator, solve_sylvester_small, BlockOperator, Transformation};
use crate::regularization::RegularizationOutput;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Debug, Serialize)]
pub struct KamSchedule {
    pub n0: usize,
    pub chi: f64,
    pub tau: f64,
    pub gamma: f64,
    pub alpha_exp: f64,
    pub beta_exp: f64,
    pub max_iters: usize,
    /// Stop once |R|_{s₀} falls below this; the regularized operator carries
    /// roundoff of order 1e-14 even at ε = 0.
    pub stop_tol: f64,
    pub s0: f64,
    pub eps: f64,
    pub e_abs: f64,
    /// C in the large-j threshold C|ℓ|/(ε|e|); None means 4·max|ω|.
    pub large_j_const: Option<f64>,
    pub abs_floor: f64,
    /// Screen divisors against the γ thresholds, not only the absolute floor.
    pub screen: bool,
    /// Composition constant used in the smallness gate of e^Ψ.
    pub comp_const: f64,
    pub series_tol: f64,
    pub series_cap: usize,
    pub n_cap: usize,
}

impl KamSchedule {
    pub fn new(d: usize, n0: usize, eps: f64, gamma: f64, e_abs: f64) -> Self {
        let tau = d as f64 + 2.0;
        KamSchedule {
            n0,
            chi: 1.5,
            tau,
            gamma,
            alpha_exp: 7.0 * tau + 3.0,
            beta_exp: 7.0 * tau + 5.0,
            max_iters: 10,
            stop_tol: 1e-13,
            s0: (d as f64 + 2.0) / 2.0,
            eps,
            e_abs,
            large_j_const: None,
            abs_floor: 1e-10,
            screen: true,
            comp_const: 1.0,
            series_tol: 1e-17,
            series_cap: 30,
            n_cap: 1 << 20,
        }
    }

    /// N_ν = ⌊N₀^{χ^ν}⌋, capped.
    pub fn n_at(&self, nu: usize) -> usize {
        let v = (self.n0 as f64).powf(self.chi.powi(nu as i32)).floor();
        if v >= self.n_cap as f64 {
            self.n_cap
        } else {
            v as usize
        }
    }

    /// Blocks with both |j|, |j'| above this use the explicit U-diagonalization.
    pub fn large_j_threshold(&self, omega: &[f64], ell: &[i64]) -> f64 {
        let c = self.large_j_const.unwrap_or_else(|| 4.0 * omega.iter().fold(0.0f64, |m, w| m.max(w.abs())));
        let l = ell.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as f64;
        let den = self.eps * self.e_abs;
        if den == 0.0 {
            return f64::INFINITY;
        }
        c * l / den
    }
}

/// i σ (m₀ − m₂ j² − σ μ₁ j), μ₁ = Im m₁.
pub fn diagonal_symbol(m2: f64, m1: C64, m0: f64, sigma: i8, j: i64) -> C64 {
    let s = sigma as f64;
    let j = j as f64;
    C64::new(0.0, s * (m0 - m2 * j * j - s * m1.im * j))
}

/// Rows of the cluster {(σ, j), (σ, −j)}, j ≥ 0.
pub fn cluster(a: &BlockOperator, sigma: i8, j: usize) -> Vec<usize> {
    let j = j as i64;
    if j == 0 {
        vec![a.row(sigma, 0)]
    } else {
        vec![a.row(sigma, j), a.row(sigma, -j)]
    }
}

fn extract(m: &DMatrix<C64>, rows: &[usize], cols: &[usize]) -> DMatrix<C64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

fn insert(m: &mut DMatrix<C64>, rows: &[usize], cols: &[usize], x: &DMatrix<C64>) {
    for (r, &rr) in rows.iter().enumerate() {
        for (c, &cc) in cols.iter().enumerate() {
            m[(rr, cc)] = x[(r, c)];
        }
    }
}

/// Both eigenvalues of a cluster block Ω from trace and determinant of
/// H = Ω/(iσ): returned as (iσ(½tr H + √Δ), iσ(½tr H − √Δ)), Δ = ¼(tr H)² − det H.
pub fn eigenvalues_of_block(block: &DMatrix<C64>, sigma: i8) -> (C64, C64) {
    let is = I * sigma as f64;
    if block.nrows() == 1 {
        return (block[(0, 0)], block[(0, 0)]);
    }
    let h = block / is;
    let tr = h[(0, 0)] + h[(1, 1)];
    let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
    let disc = (tr * tr * 0.25 - det).sqrt();
    (is * (tr * 0.5 + disc), is * (tr * 0.5 - disc))
}

/// The + branch written as iσ(½(h₊ + h₋) + ½|j|b_j) with
/// |j|b_j = √((h₊ − h₋)² + 4|r|²); agrees with the characteristic polynomial
/// for Hermitian H.
pub fn plus_branch_formula(block: &DMatrix<C64>, sigma: i8) -> C64 {
    let is = I * sigma as f64;
    if block.nrows() == 1 {
        return block[(0, 0)];
    }
    let h = block / is;
    let (a, d) = (h[(0, 0)].re, h[(1, 1)].re);
    let jb = ((a - d).powi(2) + 4.0 * h[(0, 1)].norm_sqr()).sqrt();
    is * (0.5 * (a + d) + 0.5 * jb)
}

/// Constant part of the reduced operator: Ω_{σ,j} on each cluster.
#[derive(Clone, Debug)]
pub struct NormalForm {
    pub omega: Vec<f64>,
    pub d: usize,
    pub jc: usize,
    /// Mass of the unperturbed operator.
    pub m: f64,
    pub m2: f64,
    pub m1: C64,
    pub m0: f64,
    /// Ω_{σ,j}, indexed [σ index][j], j = 0..=J; rows and columns ordered (j, −j).
    pub blocks: [Vec<DMatrix<C64>>; 2],
}

impl NormalForm {
    pub fn unperturbed(omega: &[f64], d: usize, jc: usize, m: f64, m2: f64, m1: C64, m0: f64) -> Self {
        let mk = |sigma: i8| {
            (0..=jc as i64)
                .map(|j| {
                    if j == 0 {
                        DMatrix::from_element(1, 1, diagonal_symbol(m2, m1, m0, sigma, 0))
                    } else {
                        let mut b = DMatrix::zeros(2, 2);
                        b[(0, 0)] = diagonal_symbol(m2, m1, m0, sigma, j);
                        b[(1, 1)] = diagonal_symbol(m2, m1, m0, sigma, -j);
                        b
                    }
                })
                .collect()
        };
        NormalForm { omega: omega.to_vec(), d, jc, m, m2, m1, m0, blocks: [mk(1), mk(-1)] }
    }

    pub fn from_regularization(reg: &RegularizationOutput) -> Self {
        let r = &reg.remainder;
        Self::unperturbed(&reg.omega, r.d, r.jc, reg.l7.m, reg.m2, reg.m1, reg.m0)
    }

    pub fn block(&self, sigma: i8, j: i64) -> &DMatrix<C64> {
        &self.blocks[crate::operator_algebra::sidx(sigma)][j.unsigned_abs() as usize]
    }

    /// Adds the ℓ = 0 cluster entries of k.
    pub fn absorb(&mut self, k: &BlockOperator) {
        let z = k.zero_index();
        for sigma in [1i8, -1] {
            for j in 0..=self.jc {
                let rows = cluster(k, sigma, j);
                let add = extract(&k.symbols[z], &rows, &rows);
                self.blocks[crate::operator_algebra::sidx(sigma)][j] += add;
            }
        }
    }

    pub fn to_operator(&self, lc: usize) -> BlockOperator {
        let mut a = BlockOperator::zeros(self.d, self.jc, lc);
        let z = a.zero_index();
        for sigma in [1i8, -1] {
            for j in 0..=self.jc {
                let rows = cluster(&a, sigma, j);
                insert(&mut a.symbols[z], &rows, &rows, self.block(sigma, j as i64));
            }
        }
        a
    }

    /// (plus, minus) branch of the cluster at |j|.
    pub fn eigenvalues(&self, sigma: i8, j: i64) -> (C64, C64) {
        eigenvalues_of_block(self.block(sigma, j), sigma)
    }

    /// μ_{σ,j}: the + branch for j > 0, the − branch for j < 0.
    pub fn mu(&self, sigma: i8, j: i64) -> C64 {
        let (p, m) = self.eigenvalues(sigma, j);
        if j >= 0 {
            p
        } else {
            m
        }
    }

    /// ℓ = 0 pair whose unperturbed divisor σ(m − j²) − σ'(m − j'²) vanishes
    /// identically in ω, outside the kernel σ = σ', |j| = |j'|.
    pub fn structural_pair(&self, sigma: i8, j: i64, sigma_p: i8, jp: i64) -> bool {
        sigma != sigma_p && (2.0 * self.m - (j * j + jp * jp) as f64).abs() < 1e-12
    }

    /// ℓ = 0 first-Melnikov index with m − j² = 0.
    pub fn structural_single(&self, j: i64) -> bool {
        (self.m - (j * j) as f64).abs() < 1e-12
    }

    /// max |Re μ| / (1 + |μ|) over all clusters.
    pub fn max_re_ratio(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for sigma in [1i8, -1] {
            for j in 0..=self.jc as i64 {
                let (p, m) = self.eigenvalues(sigma, j);
                worst = worst.max(p.re.abs() / (1.0 + p.norm())).max(m.re.abs() / (1.0 + m.norm()));
            }
        }
        worst
    }

    /// sup over σ and k = ±j of |r_j^k|, the departure of Ω_{σ,j} from the constants.
    pub fn corrections(&self) -> Vec<f64> {
        let base = Self::unperturbed(&self.omega, self.d, self.jc, self.m, self.m2, self.m1, self.m0);
        (0..=self.jc)
            .map(|j| {
                let mut v: f64 = 0.0;
                for s in 0..2 {
                    v = v.max((&self.blocks[s][j] - &base.blocks[s][j]).iter().map(|x| x.norm()).fold(0.0, f64::max));
                }
                v
            })
            .collect()
    }

    /// max_j ⟨j⟩ |r_j| / ε.
    pub fn correction_fit(&self, eps: f64) -> f64 {
        if eps == 0.0 {
            return 0.0;
        }
        self.corrections().iter().enumerate().map(|(j, r)| (j.max(1) as f64) * r / eps).fold(0.0, f64::max)
    }
}

/// [R]: the ℓ = 0 entries with σ = σ' and j' = ±j.
pub fn kernel_projection(r: &BlockOperator) -> BlockOperator {
    let mut out = BlockOperator::zeros(r.d, r.jc, r.lc);
    let z = r.zero_index();
    for sigma in [1i8, -1] {
        for j in 0..=r.jc {
            let rows = cluster(r, sigma, j);
            let b = extract(&r.symbols[z], &rows, &rows);
            insert(&mut out.symbols[z], &rows, &rows, &b);
        }
    }
    out
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct HomologicalStats {
    pub min_divisor: f64,
    pub solved_blocks: usize,
    pub large_j_blocks: usize,
    /// Eigen-pairs below the floor whose right side vanished; left unsolved.
    pub zeroed_pairs: usize,
    /// Smallest divisor among ℓ = 0 pairs whose unperturbed divisor vanishes.
    pub structural_min: f64,
}

impl HomologicalStats {
    fn merge(mut self, o: HomologicalStats) -> Self {
        self.min_divisor = self.min_divisor.min(o.min_divisor);
        self.solved_blocks += o.solved_blocks;
        self.large_j_blocks += o.large_j_blocks;
        self.zeroed_pairs += o.zeroed_pairs;
        self.structural_min = self.structural_min.min(o.structural_min);
        self
    }

    fn empty() -> Self {
        HomologicalStats { min_divisor: f64::INFINITY, structural_min: f64::INFINITY, ..Default::default() }
    }
}

struct Eig {
    lam: Vec<f64>,
    u: DMatrix<C64>,
}

fn cluster_eigs(nf: &NormalForm) -> [Vec<Eig>; 2] {
    let mk = |s: usize| {
        nf.blocks[s]
            .iter()
            .map(|b| {
                // Ω = iH with H Hermitian
                let h = b * (-I);
                let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
                let (lam, u) = eig_hermitian_2x2(&h);
                Eig { lam, u }
            })
            .collect()
    };
    [mk(0), mk(1)]
}

/// Ψ with ω·∂Ψ + DΨ − ΨD = [R] − Π_N R on the modes |ℓ| ≤ N.
pub fn solve_homological(nf: &NormalForm, r: &BlockOperator, n: usize, sched: &KamSchedule) -> Result<(BlockOperator, HomologicalStats)> {
    let omega = &nf.omega;
    let d = r.d;
    let eig = cluster_eigs(nf);
    let rmax = r.max_abs();
    let zero_tol = 1e-13 * rmax;
    let jc = r.jc;
    let results: Vec<Result<(DMatrix<C64>, HomologicalStats)>> = (0..r.tlen())
        .into_par_iter()
        .map(|t| {
            let ell = r.ell(t);
            let ell = &ell[..d];
            let mut out = DMatrix::zeros(r.dim(), r.dim());
            let mut st = HomologicalStats::empty();
            let lw = ell.iter().map(|v| v.unsigned_abs() as usize).max().unwrap_or(0);
            let sym = &r.symbols[t];
            if lw > n || sym.iter().all(|v| *v == ZERO) {
                return Ok((out, st));
            }
            let wl: f64 = omega.iter().zip(ell).map(|(o, l)| o * *l as f64).sum();
            let is_zero_mode = lw == 0;
            let thr = sched.large_j_threshold(omega, ell);
            for (si, sigma) in [(0usize, 1i8), (1, -1)] {
                for j in 0..=jc {
                    let rows = cluster(r, sigma, j);
                    for (sj, sigma_p) in [(0usize, 1i8), (1, -1)] {
                        for jp in 0..=jc {
                            if is_zero_mode && sigma == sigma_p && j == jp {
                                continue;
                            }
                            let cols = cluster(r, sigma_p, jp);
                            let rb = extract(sym, &rows, &cols);
                            if rb.iter().all(|v| *v == ZERO) {
                                continue;
                            }
                            let rhs = -rb;
                            let structural = is_zero_mode && nf.structural_pair(sigma, j as i64, sigma_p, jp as i64);
                            let needed = if !sched.screen || structural {
                                sched.abs_floor
                            } else if sigma == sigma_p && j == jp {
                                o_threshold(sched.gamma, sched.tau, ell, j as i64).max(sched.abs_floor)
                            } else {
                                s_threshold(sched.gamma, sched.tau, ell, sigma, j as i64, sigma_p, jp as i64).max(sched.abs_floor)
                            };
                            let (ea, eb) = (&eig[si][j], &eig[sj][jp]);
                            let mut y = ea.u.adjoint() * &rhs * &eb.u;
                            let mut zeroed = 0;
                            for a in 0..ea.lam.len() {
                                for b in 0..eb.lam.len() {
                                    let div = wl + ea.lam[a] - eb.lam[b];
                                    let gap = div.abs();
                                    if structural {
                                        st.structural_min = st.structural_min.min(gap);
                                    }
                                    if gap < needed {
                                        if y[(a, b)].norm() <= zero_tol {
                                            y[(a, b)] = ZERO;
                                            zeroed += 1;
                                            continue;
                                        }
                                        return Err(Error::SmallDivisor {
                                            context: format!("(σ={sigma}, j={j}, σ'={sigma_p}, j'={jp}, ℓ={ell:?})"),
                                            gap,
                                            floor: needed,
                                        });
                                    }
                                    st.min_divisor = st.min_divisor.min(gap);
                                    y[(a, b)] /= C64::new(0.0, div);
                                }
                            }
                            let large = (j as f64) > thr && (jp as f64) > thr;
                            let x = if large || zeroed > 0 {
                                st.large_j_blocks += large as usize;
                                &ea.u * y * eb.u.adjoint()
                            } else {
                                let a = DMatrix::identity(rows.len(), rows.len()) * C64::new(0.0, wl) + nf.block(sigma, j as i64);
                                solve_sylvester_small(&a, nf.block(sigma_p, jp as i64), &rhs, 0.0)?
                            };
                            st.zeroed_pairs += zeroed;
                            st.solved_blocks += 1;
                            insert(&mut out, &rows, &cols, &x);
                        }
                    }
                }
            }
            Ok((out, st))
        })
        .collect();
    let mut psi = BlockOperator::zeros(d, r.jc, r.lc);
    let mut stats = HomologicalStats::empty();
    for (t, res) in results.into_iter().enumerate() {
        let (m, st) = res?;
        psi.symbols[t] = m;
        stats = stats.merge(st);
    }
    Ok((psi, stats))
}

/// |ω·∂Ψ + DΨ − ΨD + Q|_s / |Q|_s.
pub fn homological_residual(nf: &NormalForm, psi: &BlockOperator, q: &BlockOperator, s: f64) -> f64 {
    let dop = nf.to_operator(psi.lc);
    let lhs = psi.omega_dphi(&nf.omega).add(&dop.compose(psi)).sub(&psi.compose(&dop)).add(q);
    let qn = q.decay_norm(s);
    if qn == 0.0 {
        lhs.decay_norm(s)
    } else {
        lhs.decay_norm(s) / qn
    }
}

/// |R_σ^σ ∘ diag(j)|_s on the diagonal channels.
pub fn diagonal_smoothing(r: &BlockOperator, s: f64) -> f64 {
    let mut rd = r.clone();
    let side = r.side();
    for m in rd.symbols.iter_mut() {
        for c in 0..r.dim() {
            let (_, j) = r.label(c);
            for row in 0..r.dim() {
                let same = (row < side) == (c < side);
                m[(row, c)] *= if same { j as f64 } else { 0.0 };
            }
        }
    }
    let ch = rd.channel_norms(s);
    ch[0].max(ch[3])
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct KamRecord {
    pub nu: usize,
    /// N_{ν−1}: the truncation used to produce this iterate (0 for ν = 0).
    pub n: usize,
    pub r_s0: f64,
    pub r_sbeta: f64,
    pub max_re_mu: f64,
    pub psi_norm: f64,
    pub hamiltonian_violation: f64,
    pub homological_residual: f64,
    pub min_divisor: f64,
    pub structural_min: f64,
    pub zeroed_pairs: usize,
    pub mu_drift: f64,
    /// |R_σ^σ|_{s₀} of the previous remainder, the bound on the drift.
    pub drift_bound: f64,
    pub diag_smoothing: f64,
    /// |R₊|_{s₀} > |R|_{s₀}^{1.2} while |R|_{s₀} < 1.
    pub tripwire: bool,
}

#[derive(Clone, Debug)]
pub struct KamState {
    pub nu: usize,
    pub nf: NormalForm,
    pub r: BlockOperator,
    pub phis: Vec<Transformation>,
    /// Φ₀ ∘ … ∘ Φ_{ν−1} and its inverse, composed at the cutoffs.
    pub phi_fwd: BlockOperator,
    pub phi_inv: BlockOperator,
}

impl KamState {
    pub fn new(nf: NormalForm, r: BlockOperator) -> Self {
        let id = BlockOperator::identity(r.d, r.jc, r.lc);
        KamState { nu: 0, nf, r, phis: Vec::new(), phi_fwd: id.clone(), phi_inv: id }
    }

    fn record(&self, sched: &KamSchedule) -> KamRecord {
        let (_, viol) = self.r.is_hamiltonian(1e-9);
        KamRecord {
            nu: self.nu,
            r_s0: self.r.decay_norm(sched.s0),
            r_sbeta: self.r.decay_norm(sched.s0 + sched.beta_exp),
            max_re_mu: self.nf.max_re_ratio(),
            hamiltonian_violation: viol,
            min_divisor: f64::INFINITY,
            structural_min: f64::INFINITY,
            diag_smoothing: diagonal_smoothing(&self.r, sched.s0),
            ..Default::default()
        }
    }
}

fn ad(x: &BlockOperator, psi: &BlockOperator) -> BlockOperator {
    x.compose(psi).sub(&psi.compose(x))
}

/// One conjugation by e^Ψ.
pub fn kam_step(state: &KamState, sched: &KamSchedule) -> Result<(KamState, KamRecord)> {
    let s0 = sched.s0;
    let n = sched.n_at(state.nu);
    let kern = kernel_projection(&state.r);
    let (lo, hi) = state.r.smooth_truncate(n);
    let q = lo.sub(&kern);
    let (psi, stats) = solve_homological(&state.nf, &state.r, n, sched)?;
    let r_norm = state.r.decay_norm(s0);
    let ch = state.r.channel_norms(s0);
    let mut nf = state.nf.clone();
    nf.absorb(&kern);
    let mut drift: f64 = 0.0;
    for sigma in [1i8, -1] {
        for j in 0..=nf.jc as i64 {
            let (p0, m0) = state.nf.eigenvalues(sigma, j);
            let (p1, m1) = nf.eigenvalues(sigma, j);
            drift = drift.max((p1 - p0).norm()).max((m1 - m0).norm());
        }
    }
    let hom_res = homological_residual(&state.nf, &psi, &q, s0);
    let mut next = state.clone();
    next.nu += 1;
    next.nf = nf;
    if psi.is_zero() {
        next.r = hi;
    } else {
        let phi = exp_operator(&psi, s0, sched.comp_const, sched.series_tol, sched.series_cap)?;
        let scale = sched.series_tol * r_norm.max(f64::MIN_POSITIVE);
        let mut acc = hi;
        let mut a = state.r.clone();
        for k in 1..=sched.series_cap {
            a = ad(&a, &psi).scale(C64::new(1.0 / k as f64, 0.0));
            acc = acc.add(&a);
            if a.decay_norm(s0) < scale {
                break;
            }
        }
        let mut b = q;
        for k in 2..=sched.series_cap {
            b = ad(&b, &psi).scale(C64::new(1.0 / k as f64, 0.0));
            acc = acc.sub(&b);
            if b.decay_norm(s0) < scale {
                break;
            }
        }
        next.r = acc;
        if let Transformation::Operator { fwd, inv } = &phi {
            next.phi_fwd = state.phi_fwd.compose(fwd);
            next.phi_inv = inv.compose(&state.phi_inv);
        }
        next.phis.push(phi);
    }
    let mut rec = next.record(sched);
    rec.n = n;
    rec.psi_norm = psi.decay_norm(s0);
    rec.homological_residual = hom_res;
    rec.min_divisor = stats.min_divisor;
    rec.structural_min = stats.structural_min;
    rec.zeroed_pairs = stats.zeroed_pairs;
    rec.mu_drift = drift;
    rec.drift_bound = ch[0].max(ch[3]);
    rec.tripwire = r_norm < 1.0 && rec.r_s0 > r_norm.powf(1.2);
    Ok((next, rec))
}

#[derive(Clone, Debug)]
pub struct KamOutput {
    pub omega: Vec<f64>,
    pub nf: NormalForm,
    pub nf0: NormalForm,
    /// Φ_∞ = Φ₀ ∘ Φ₁ ∘ …
    pub phi: Transformation,
    pub phi_fwd: BlockOperator,
    pub phi_inv: BlockOperator,
    pub remainder: BlockOperator,
    pub history: Vec<KamRecord>,
    pub converged: bool,
}

impl KamOutput {
    pub fn iterations(&self) -> usize {
        self.history.len().saturating_sub(1)
    }
}

/// Runs kam_step from L₇ until |R|_{s₀} ≤ stop_tol or max_iters.
pub fn reduce(reg: &RegularizationOutput, sched: &KamSchedule) -> Result<KamOutput> {
    let nf0 = NormalForm::from_regularization(reg);
    let r0 = reg.l7_block().part.sub(&nf0.to_operator(reg.remainder.lc));
    reduce_from(nf0, r0, sched)
}

/// Reduction of ω·∂ + D₀ + R₀ for an arbitrary starting pair.
pub fn reduce_from(nf0: NormalForm, r0: BlockOperator, sched: &KamSchedule) -> Result<KamOutput> {
    let mut state = KamState::new(nf0.clone(), r0);
    let mut history = vec![state.record(sched)];
    let mut stalls = 0;
    while state.nu < sched.max_iters && history.last().unwrap().r_s0 > sched.stop_tol {
        let prev = history.last().unwrap().r_s0;
        let (next, rec) = kam_step(&state, sched)?;
        if rec.r_s0 >= prev {
            stalls += 1;
            if stalls >= 2 {
                return Err(Error::Reducibility(format!(
                    "ω = {:?}: remainder did not decrease over 2 iterates ({prev:.3e} → {:.3e})",
                    nf0.omega, rec.r_s0
                )));
            }
        } else {
            stalls = 0;
        }
        state = next;
        history.push(rec);
    }
    let converged = history.last().unwrap().r_s0 <= sched.stop_tol;
    let phi = match state.phis.len() {
        0 => Transformation::Identity,
        _ => Transformation::Chain(state.phis.clone()),
    };
    Ok(KamOutput {
        omega: nf0.omega.clone(),
        nf: state.nf,
        nf0,
        phi,
        phi_fwd: state.phi_fwd,
        phi_inv: state.phi_inv,
        remainder: state.r,
        history,
        converged,
    })
}

/// Per-ω reduction; entries that fail carry the error.
pub fn reduce_family(regs: &[Option<RegularizationOutput>], sched: &KamSchedule) -> Vec<Option<Result<KamOutput>>> {
    regs.par_iter().map(|r| r.as_ref().map(|reg| reduce(reg, sched))).collect()
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct DecayReport {
    pub insufficient: bool,
    /// α in |R_ν|_{s₀} ≈ |R₀|_{s₀+β} N_{ν−1}^{−α}, least squares through the origin.
    pub exponent: f64,
    pub threshold: f64,
    pub meets_threshold: bool,
    /// |R_{ν+1}| ≤ |R_ν|^{1.5} whenever |R_ν| < 10⁻³.
    pub quadratic_ok: bool,
    pub quadratic_pairs: usize,
}

pub fn check_decay_schedule(history: &[KamRecord], threshold: f64) -> DecayReport {
    let mut rep = DecayReport { threshold, ..Default::default() };
    if history.len() < 2 {
        rep.insufficient = true;
        return rep;
    }
    let base = history[0].r_sbeta.max(history[0].r_s0);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for h in &history[1..] {
        if h.r_s0 <= 0.0 || h.n < 2 {
            continue;
        }
        let x = (h.n as f64).ln();
        let y = (h.r_s0 / base).ln();
        sxy += x * y;
        sxx += x * x;
    }
    if sxx == 0.0 {
        rep.insufficient = true;
        return rep;
    }
    rep.exponent = -sxy / sxx;
    rep.meets_threshold = rep.exponent >= threshold;
    rep.quadratic_ok = true;
    for w in history.windows(2) {
        if w[0].r_s0 < 1e-3 && w[0].r_s0 > 0.0 {
            rep.quadratic_pairs += 1;
            if w[1].r_s0 > w[0].r_s0.powf(1.5) {
                rep.quadratic_ok = false;
            }
        }
    }
    rep
}
