//! Töplitz-in-time block operators A_{σ,j}^{σ',j'}(ℓ) acting on pairs
//! (h⁺, h⁻), with the off-diagonal decay norm and its calculus.
//!
//! Storage is one dense matrix per time mode ℓ, |ℓ|∞ ≤ L; rows and columns
//! are indexed by (σ, j) with σ = +1 first, then σ = −1, j = −J..J.

mod sylvester;
mod transform;

pub use sylvester::{eig_hermitian_2x2, solve_sylvester_2x2, solve_sylvester_small, SelfAdjointKind};
pub use transform::{exp_operator, exp_series, Transformation};

use crate::error::{Error, Result};
use crate::fourier_core::{dot, Shape, TorusFunction, MAX_D};
use crate::grid::{fft_axis, wrap};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::fmt::Write as _;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[inline]
pub fn sidx(sigma: i8) -> usize {
    if sigma > 0 {
        0
    } else {
        1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    Diagonal,
    Antidiagonal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockOperator {
    pub d: usize,
    pub jc: usize,
    pub lc: usize,
    pub symbols: Vec<DMatrix<C64>>,
}

impl BlockOperator {
    pub fn zeros(d: usize, jc: usize, lc: usize) -> Self {
        let n = 2 * (2 * jc + 1);
        let t = Shape::new(d, lc).time_len();
        BlockOperator { d, jc, lc, symbols: vec![DMatrix::zeros(n, n); t] }
    }

    pub fn identity(d: usize, jc: usize, lc: usize) -> Self {
        let mut a = Self::zeros(d, jc, lc);
        let z = a.zero_index();
        a.symbols[z] = DMatrix::identity(a.dim(), a.dim());
        a
    }

    /// Constant-coefficient block-diagonal operator with entries f(σ, j).
    pub fn diagonal<F: Fn(i8, i64) -> C64>(d: usize, jc: usize, lc: usize, f: F) -> Self {
        let mut a = Self::zeros(d, jc, lc);
        let z = a.zero_index();
        for sigma in [1i8, -1] {
            for j in -(jc as i64)..=jc as i64 {
                let r = a.row(sigma, j);
                a.symbols[z][(r, r)] = f(sigma, j);
            }
        }
        a
    }

    #[inline]
    pub fn dim(&self) -> usize {
        2 * (2 * self.jc + 1)
    }

    #[inline]
    pub fn side(&self) -> usize {
        2 * self.jc + 1
    }

    #[inline]
    pub fn row(&self, sigma: i8, j: i64) -> usize {
        sidx(sigma) * self.side() + (j + self.jc as i64) as usize
    }

    /// (σ, j) of a row index.
    #[inline]
    pub fn label(&self, r: usize) -> (i8, i64) {
        let s = self.side();
        (if r < s { 1 } else { -1 }, (r % s) as i64 - self.jc as i64)
    }

    #[inline]
    pub fn tshape(&self) -> Shape {
        Shape::new(self.d, self.lc)
    }

    pub fn tlen(&self) -> usize {
        self.symbols.len()
    }

    pub fn zero_index(&self) -> usize {
        self.tshape().flat_time(&[0; MAX_D][..self.d]).unwrap()
    }

    pub fn ell(&self, t: usize) -> [i64; MAX_D] {
        self.tshape().decode_time(t)
    }

    pub fn ell_index(&self, ell: &[i64]) -> Option<usize> {
        self.tshape().flat_time(ell)
    }

    /// Index of −ℓ.
    pub fn ell_reflect(&self, t: usize) -> usize {
        self.tlen() - 1 - t
    }

    pub fn entry(&self, sigma: i8, j: i64, sigma_p: i8, jp: i64, ell: &[i64]) -> C64 {
        match self.ell_index(ell) {
            Some(t) if j.unsigned_abs() as usize <= self.jc && jp.unsigned_abs() as usize <= self.jc => {
                self.symbols[t][(self.row(sigma, j), self.row(sigma_p, jp))]
            }
            _ => ZERO,
        }
    }

    pub fn set_entry(&mut self, sigma: i8, j: i64, sigma_p: i8, jp: i64, ell: &[i64], v: C64) {
        let t = self.ell_index(ell).expect("ℓ outside cutoff");
        let (r, c) = (self.row(sigma, j), self.row(sigma_p, jp));
        self.symbols[t][(r, c)] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.symbols.iter().flat_map(|m| m.iter()).map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.symbols.iter().all(|m| m.iter().all(|v| *v == ZERO))
    }

    pub fn scale(&self, a: C64) -> Self {
        let mut out = self.clone();
        out.symbols.iter_mut().for_each(|m| *m *= a);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_compatible(other);
        let mut out = self.clone();
        for (a, b) in out.symbols.iter_mut().zip(&other.symbols) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check_compatible(other);
        let mut out = self.clone();
        for (a, b) in out.symbols.iter_mut().zip(&other.symbols) {
            *a -= b;
        }
        out
    }

    pub fn axpy(&mut self, a: C64, other: &Self) {
        self.check_compatible(other);
        for (x, y) in self.symbols.iter_mut().zip(&other.symbols) {
            *x += y * a;
        }
    }

    fn check_compatible(&self, other: &Self) {
        assert_eq!((self.d, self.jc, self.lc), (other.d, other.jc, other.lc), "incompatible cutoffs");
    }

    /// Copy into new cutoffs, dropping or zero-padding.
    pub fn resize(&self, jc: usize, lc: usize) -> Self {
        let mut out = Self::zeros(self.d, jc, lc);
        let jm = self.jc.min(jc) as i64;
        for t in 0..self.tlen() {
            let ell = self.ell(t);
            let Some(u) = out.ell_index(&ell[..self.d]) else { continue };
            for s in [1i8, -1] {
                for sp in [1i8, -1] {
                    for j in -jm..=jm {
                        for jp in -jm..=jm {
                            let (r, c) = (out.row(s, j), out.row(sp, jp));
                            out.symbols[u][(r, c)] = self.symbols[t][(self.row(s, j), self.row(sp, jp))];
                        }
                    }
                }
            }
        }
        out
    }

    /// Per-channel decay norms |A_σ^{σ'}|_s, ordered (+,+), (+,−), (−,+), (−,−).
    pub fn channel_norms(&self, s: f64) -> [f64; 4] {
        let s = s.min(crate::fourier_core::S_CAP);
        let side = self.side();
        let jc = self.jc as i64;
        let nd = 4 * self.jc + 1;
        let mut out = [0.0; 4];
        for (ch, (si, sj)) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
            let mut total = 0.0;
            let mut sup = vec![0.0f64; nd];
            for t in 0..self.tlen() {
                let m = &self.symbols[t];
                sup.iter_mut().for_each(|v| *v = 0.0);
                for c in 0..side {
                    for r in 0..side {
                        let v = m[(si * side + r, sj * side + c)].norm_sqr();
                        let k = r + side - 1 - c;
                        if v > sup[k] {
                            sup[k] = v;
                        }
                    }
                }
                let ell = self.ell(t);
                let lw = ell[..self.d].iter().map(|x| x.abs()).max().unwrap_or(0);
                for (k, v) in sup.iter().enumerate() {
                    if *v == 0.0 {
                        continue;
                    }
                    let h = (k as i64 - 2 * jc).abs();
                    let w = lw.max(h).max(1) as f64;
                    total += w.powf(2.0 * s) * v;
                }
            }
            out[ch] = total.sqrt();
        }
        out
    }

    /// |A|_s: sup over (σ,σ') channels of the stripe-sup weighted ℓ² sum.
    pub fn decay_norm(&self, s: f64) -> f64 {
        self.channel_norms(s).into_iter().fold(0.0, f64::max)
    }

    /// Multiplication by a(φ,x) placed in the diagonal or antidiagonal channels.
    pub fn from_multiplication(a: &TorusFunction, placement: Placement, jc: usize, lc: usize) -> Self {
        let mut out = Self::zeros(a.d, jc, lc);
        for s in [1i8, -1] {
            let sp = match placement {
                Placement::Diagonal => s,
                Placement::Antidiagonal => -s,
            };
            out.add_multiplication(s, sp, a, 0, C64::new(1.0, 0.0));
        }
        out
    }

    /// Adds factor · a(φ,x) · ∂_x^k into channel (σ, σ'):
    /// entries factor · a_{ℓ, j−j'} · (i j')^k.
    pub fn add_multiplication(&mut self, sigma: i8, sigma_p: i8, a: &TorusFunction, k: u32, factor: C64) {
        assert_eq!(a.d, self.d);
        let jc = self.jc as i64;
        let an = a.n as i64;
        let lmax = (self.lc as i64).min(an);
        let side = self.side();
        for t in 0..self.tlen() {
            let ell = self.ell(t);
            if ell[..self.d].iter().any(|l| l.abs() > lmax) {
                continue;
            }
            let m = &mut self.symbols[t];
            for jp in -jc..=jc {
                let dk = C64::new(0.0, jp as f64).powu(k) * factor;
                for j in -jc..=jc {
                    let dj = j - jp;
                    if dj.abs() > an {
                        continue;
                    }
                    let v = a.get(0, &ell[..self.d], dj);
                    if v == ZERO {
                        continue;
                    }
                    m[(sidx(sigma) * side + (j + jc) as usize, sidx(sigma_p) * side + (jp + jc) as usize)] += v * dk;
                }
            }
        }
    }

    fn nonzero_times(&self) -> Vec<usize> {
        (0..self.tlen()).filter(|&t| self.symbols[t].iter().any(|v| *v != ZERO)).collect()
    }

    /// Matrix product restricted to the cutoffs.
    pub fn compose(&self, other: &Self) -> Self {
        self.check_compatible(other);
        let na = self.nonzero_times();
        let nb = other.nonzero_times();
        let mgrid = fft_time_side(self.lc);
        let fft_cost = mgrid.pow(self.d as u32);
        if na.len() * nb.len() <= fft_cost {
            self.compose_direct(other, &na, &nb)
        } else {
            self.compose_fft(other, mgrid)
        }
    }

    fn compose_direct(&self, other: &Self, na: &[usize], nb: &[usize]) -> Self {
        let mut out = Self::zeros(self.d, self.jc, self.lc);
        let sh = self.tshape();
        for &ta in na {
            let la = self.ell(ta);
            for &tb in nb {
                let lb = other.ell(tb);
                let mut sum = [0i64; MAX_D];
                for k in 0..self.d {
                    sum[k] = la[k] + lb[k];
                }
                if let Some(t) = sh.flat_time(&sum[..self.d]) {
                    out.symbols[t].gemm(C64::new(1.0, 0.0), &self.symbols[ta], &other.symbols[tb], C64::new(1.0, 0.0));
                }
            }
        }
        out
    }

    fn to_time_grid(&self, m: usize) -> Vec<C64> {
        let n = self.dim();
        let nn = n * n;
        let tl = m.pow(self.d as u32);
        let mut buf = vec![ZERO; tl * nn];
        for t in 0..self.tlen() {
            let ell = self.ell(t);
            let mut p = 0usize;
            for &l in &ell[..self.d] {
                p = p * m + wrap(l, m);
            }
            buf[p * nn..(p + 1) * nn].copy_from_slice(self.symbols[t].as_slice());
        }
        let mut dims = vec![m; self.d];
        dims.push(nn);
        for axis in 0..self.d {
            fft_axis(&mut buf, &dims, axis, true);
        }
        buf
    }

    fn from_time_grid(d: usize, jc: usize, lc: usize, m: usize, mut buf: Vec<C64>) -> Self {
        let mut out = Self::zeros(d, jc, lc);
        let n = out.dim();
        let nn = n * n;
        let mut dims = vec![m; d];
        dims.push(nn);
        for axis in 0..d {
            fft_axis(&mut buf, &dims, axis, false);
        }
        let norm = 1.0 / m.pow(d as u32) as f64;
        for t in 0..out.tlen() {
            let ell = out.ell(t);
            let mut p = 0usize;
            for &l in &ell[..d] {
                p = p * m + wrap(l, m);
            }
            let src = &buf[p * nn..(p + 1) * nn];
            out.symbols[t] = DMatrix::from_column_slice(n, n, src) * C64::new(norm, 0.0);
        }
        out
    }

    fn compose_fft(&self, other: &Self, m: usize) -> Self {
        let n = self.dim();
        let nn = n * n;
        let a = self.to_time_grid(m);
        let b = other.to_time_grid(m);
        let mut c = vec![ZERO; a.len()];
        c.par_chunks_mut(nn).enumerate().for_each(|(p, out)| {
            let am = DMatrix::from_column_slice(n, n, &a[p * nn..(p + 1) * nn]);
            let bm = DMatrix::from_column_slice(n, n, &b[p * nn..(p + 1) * nn]);
            out.copy_from_slice((am * bm).as_slice());
        });
        Self::from_time_grid(self.d, self.jc, self.lc, m, c)
    }

    /// Symbol of ω·∂φ A: each A(ℓ) multiplied by iω·ℓ.
    pub fn omega_dphi(&self, omega: &[f64]) -> Self {
        let mut out = self.clone();
        for (k, sym) in out.symbols.iter_mut().enumerate() {
            let ell = self.ell(k);
            let w: f64 = omega.iter().zip(&ell[..self.d]).map(|(o, l)| o * *l as f64).sum();
            *sym *= C64::new(0.0, w);
        }
        out
    }

    /// Commutator [A, B] = AB − BA.
    pub fn commutator(&self, other: &Self) -> Self {
        self.compose(other).sub(&other.compose(self))
    }

    /// (Π_N A, Π_N^⊥ A): split by |ℓ| ≤ N.
    pub fn smooth_truncate(&self, n: usize) -> (Self, Self) {
        let mut lo = self.clone();
        let mut hi = self.clone();
        for t in 0..self.tlen() {
            let ell = self.ell(t);
            let w = ell[..self.d].iter().map(|x| x.unsigned_abs() as usize).max().unwrap_or(0);
            if w <= n {
                hi.symbols[t].fill(ZERO);
            } else {
                lo.symbols[t].fill(ZERO);
            }
        }
        (lo, hi)
    }

    /// A(φ) = Σ_ℓ A(ℓ) e^{iℓ·φ}.
    pub fn phase_slice(&self, phi: &[f64]) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        for t in 0..self.tlen() {
            let ell = self.ell(t);
            out += &self.symbols[t] * C64::from_polar(1.0, dot(phi, &ell[..self.d]));
        }
        out
    }

    /// Apply to a pair (h⁺, h⁻) with h.n = J; time modes beyond h.n are dropped.
    pub fn apply(&self, h: &TorusFunction) -> TorusFunction {
        assert_eq!(h.ncomp(), 2, "operators act on pairs");
        assert_eq!(h.n, self.jc, "space cutoff mismatch");
        let hs = h.shape();
        let side = hs.side();
        let n = self.dim();
        let tlh = hs.time_len();
        let vecs: Vec<nalgebra::DVector<C64>> = (0..tlh)
            .map(|p| {
                let mut v = nalgebra::DVector::zeros(n);
                for c in 0..2 {
                    for k in 0..side {
                        v[c * side + k] = h.comps[c][p * side + k];
                    }
                }
                v
            })
            .collect();
        let nz = self.nonzero_times();
        let outs: Vec<nalgebra::DVector<C64>> = (0..tlh)
            .into_par_iter()
            .map(|p| {
                let lp = hs.decode_time(p);
                let mut acc = nalgebra::DVector::zeros(n);
                for &t in &nz {
                    let l = self.ell(t);
                    let mut q = [0i64; MAX_D];
                    for k in 0..self.d {
                        q[k] = lp[k] - l[k];
                    }
                    if let Some(qi) = hs.flat_time(&q[..self.d]) {
                        acc.gemv(C64::new(1.0, 0.0), &self.symbols[t], &vecs[qi], C64::new(1.0, 0.0));
                    }
                }
                acc
            })
            .collect();
        let mut out = TorusFunction::zeros_pair(h.d, h.n);
        for (p, v) in outs.iter().enumerate() {
            for c in 0..2 {
                for k in 0..side {
                    out.comps[c][p * side + k] = v[c * side + k];
                }
            }
        }
        out
    }

    /// Checks reality B_{−σ,−j}^{−σ',−j'}(−ℓ) = conj B_{σ,j}^{σ',j'}(ℓ) and
    /// infinitesimal symplecticity σ B_{−σ,−j}^{σ',j'}(ℓ) = σ' B_{−σ',−j'}^{σ,j}(ℓ).
    /// Returns (passes, max violation); the tolerance is relative to 1 + max|entry|.
    pub fn is_hamiltonian(&self, tol: f64) -> (bool, f64) {
        let n = self.dim();
        let side = self.side();
        let sg = |r: usize| if r < side { 1.0 } else { -1.0 };
        let mut viol: f64 = 0.0;
        for t in 0..self.tlen() {
            let a = &self.symbols[t];
            let b = &self.symbols[self.ell_reflect(t)];
            for c in 0..n {
                for r in 0..n {
                    let v1 = (b[(n - 1 - r, n - 1 - c)] - a[(r, c)].conj()).norm();
                    let v2 = (a[(n - 1 - r, c)] * sg(r) - a[(n - 1 - c, r)] * sg(c)).norm();
                    viol = viol.max(v1).max(v2);
                }
            }
        }
        (viol <= tol * (1.0 + self.max_abs()), viol)
    }

    /// Maximum entry of the reality defect only.
    pub fn reality_defect(&self) -> f64 {
        let n = self.dim();
        let mut viol: f64 = 0.0;
        for t in 0..self.tlen() {
            let a = &self.symbols[t];
            let b = &self.symbols[self.ell_reflect(t)];
            for c in 0..n {
                for r in 0..n {
                    viol = viol.max((b[(n - 1 - r, n - 1 - c)] - a[(r, c)].conj()).norm());
                }
            }
        }
        viol
    }

    /// Text dump: header "d J L", then "σ j σ' j' ℓ… re im" for nonzero entries,
    /// sorted lexicographically by index tuple.
    pub fn dump(&self) -> String {
        let mut rows: Vec<(Vec<i64>, C64)> = Vec::new();
        let n = self.dim();
        for t in 0..self.tlen() {
            let ell = self.ell(t);
            for r in 0..n {
                for c in 0..n {
                    let v = self.symbols[t][(r, c)];
                    if v == ZERO {
                        continue;
                    }
                    let (s, j) = self.label(r);
                    let (sp, jp) = self.label(c);
                    let mut key = vec![s as i64, j, sp as i64, jp];
                    key.extend_from_slice(&ell[..self.d]);
                    rows.push((key, v));
                }
            }
        }
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out = format!("{} {} {}\n", self.d, self.jc, self.lc);
        for (k, v) in rows {
            for x in &k {
                write!(out, "{x} ").unwrap();
            }
            writeln!(out, "{:.17e} {:.17e}", v.re, v.im).unwrap();
        }
        out
    }

    pub fn parse_dump(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let head: Vec<usize> = lines
            .next()
            .ok_or_else(|| Error::Config("empty operator dump".into()))?
            .split_whitespace()
            .map(|s| s.parse::<usize>().map_err(|e| Error::Config(format!("operator dump header: {e}"))))
            .collect::<Result<_>>()?;
        if head.len() != 3 {
            return Err(Error::Config("operator dump header must be \"d J L\"".into()));
        }
        let mut a = Self::zeros(head[0], head[1], head[2]);
        let d = head[0];
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 + d {
                return Err(Error::Config(format!("bad operator record: {line}")));
            }
            let int = |s: &str| s.parse::<i64>().map_err(|e| Error::Config(format!("operator record: {e}")));
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Config(format!("operator record: {e}")));
            let ell: Vec<i64> = f[4..4 + d].iter().map(|s| int(s)).collect::<Result<_>>()?;
            let v = C64::new(num(f[4 + d])?, num(f[5 + d])?);
            a.set_entry(int(f[0])? as i8, int(f[1])?, int(f[2])? as i8, int(f[3])?, &ell, v);
        }
        Ok(a)
    }
}

/// ω·∂φ + A with A a Töplitz-in-time block operator.
#[derive(Clone, Debug)]
pub struct LinearOperator {
    pub omega: Vec<f64>,
    pub part: BlockOperator,
}

impl LinearOperator {
    pub fn apply(&self, h: &TorusFunction) -> TorusFunction {
        let hh = h.resize(self.part.jc);
        (&hh.omega_dphi(&self.omega) + &self.part.apply(&hh)).resize(h.n)
    }

    /// Dense matrix on time modes |ℓ|∞ ≤ lt and the operator's space modes;
    /// the row/column index is t·dim + r. Symbol modes beyond the part's
    /// cutoff are absent, so lc ≥ 2·lt makes the truncation exact.
    pub fn dense(&self, lt: usize) -> DMatrix<C64> {
        let a = &self.part;
        let d = a.d;
        let ts = Shape::new(d, lt);
        let tl = ts.time_len();
        let n = a.dim();
        let mut out = DMatrix::zeros(tl * n, tl * n);
        for p in 0..tl {
            let lp = ts.decode_time(p);
            for q in 0..tl {
                let lq = ts.decode_time(q);
                let mut diff = [0i64; MAX_D];
                for k in 0..d {
                    diff[k] = lp[k] - lq[k];
                }
                if let Some(t) = a.ell_index(&diff[..d]) {
                    out.view_mut((p * n, q * n), (n, n)).copy_from(&a.symbols[t]);
                }
            }
            let w = C64::new(0.0, dot(&self.omega, &lp[..d]));
            for r in 0..n {
                out[(p * n + r, p * n + r)] += w;
            }
        }
        out
    }
}

/// Time-grid side for alias-free truncated products: ≥ 3L+1, even.
pub fn fft_time_side(lc: usize) -> usize {
    let m = 3 * lc + 2;
    m + (m % 2)
}

/// Largest ratio |AB|_s / (|A|_s |B|_s) over random operators; used as C(s).
pub fn fit_composition_constant(d: usize, jc: usize, lc: usize, s: f64, samples: usize, seed: u64) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let a = random_operator(&mut rng, d, jc, lc, 1.0, 0.6);
        let b = random_operator(&mut rng, d, jc, lc, 1.0, 0.6);
        let r = a.compose(&b).decay_norm(s) / (a.decay_norm(s) * b.decay_norm(s));
        worst = worst.max(r);
    }
    worst
}

/// Random operator with entries decaying like e^{−rate·(|ℓ| + |j−j'|)}.
pub fn random_operator<R: rand::Rng>(rng: &mut R, d: usize, jc: usize, lc: usize, amp: f64, rate: f64) -> BlockOperator {
    let mut a = BlockOperator::zeros(d, jc, lc);
    let n = a.dim();
    for t in 0..a.tlen() {
        let ell = a.ell(t);
        let lw: i64 = ell[..d].iter().map(|x| x.abs()).sum();
        for r in 0..n {
            for c in 0..n {
                let (_, j) = a.label(r);
                let (_, jp) = a.label(c);
                let w = amp * (-rate * (lw + (j - jp).abs()) as f64).exp();
                a.symbols[t][(r, c)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * w;
            }
        }
    }
    a
}

/// Random Hamiltonian operator: symmetrized so that `is_hamiltonian` holds.
pub fn random_hamiltonian<R: rand::Rng>(rng: &mut R, d: usize, jc: usize, lc: usize, amp: f64, rate: f64) -> BlockOperator {
    let a = random_operator(rng, d, jc, lc, amp, rate);
    hamiltonian_projection(&a)
}

/// Projection onto operators satisfying both Hamiltonian relations.
pub fn hamiltonian_projection(a: &BlockOperator) -> BlockOperator {
    let n = a.dim();
    let side = a.side();
    let sg = |r: usize| if r < side { 1.0 } else { -1.0 };
    // symplectic symmetry: Q = J_s B symmetric, Q_{r,c} = σ(r) B_{flip r, c}
    let mut b = a.clone();
    for t in 0..a.tlen() {
        let m = &a.symbols[t];
        let mut q = DMatrix::<C64>::zeros(n, n);
        for c in 0..n {
            for r in 0..n {
                q[(r, c)] = m[(n - 1 - r, c)] * sg(r);
            }
        }
        let qs = (&q + q.transpose()) * C64::new(0.5, 0.0);
        for c in 0..n {
            for r in 0..n {
                // B_{r,c} = σ(flip r) Q_{flip r, c}
                b.symbols[t][(r, c)] = qs[(n - 1 - r, c)] * sg(n - 1 - r);
            }
        }
    }
    // reality
    let mut out = b.clone();
    for t in 0..b.tlen() {
        let tr = b.ell_reflect(t);
        for c in 0..n {
            for r in 0..n {
                let v = b.symbols[t][(r, c)];
                let w = b.symbols[tr][(n - 1 - r, n - 1 - c)].conj();
                out.symbols[t][(r, c)] = (v + w) * 0.5;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier_core::random_analytic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_zero_norms() {
        let id = BlockOperator::identity(1, 4, 3);
        for s in [0.0, 1.5, 4.0] {
            assert!((id.decay_norm(s) - 1.0).abs() < 1e-15);
        }
        assert_eq!(BlockOperator::zeros(1, 4, 3).decay_norm(2.0), 0.0);
    }

    #[test]
    fn multiplication_norm_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let a = random_analytic(&mut rng, 1, 4, 1.0, 0.3, false);
            let op = BlockOperator::from_multiplication(&a, Placement::Diagonal, 4, 4);
            for s in [0.0, 1.5, 3.0] {
                let r = op.decay_norm(s) / a.sobolev_norm(s);
                assert!((r - 1.0).abs() < 1e-14, "ratio {r}");
            }
        }
    }

    #[test]
    fn unit_multiplication_is_identity() {
        let one = TorusFunction::constant(1, 3, C64::new(1.0, 0.0));
        let op = BlockOperator::from_multiplication(&one, Placement::Diagonal, 3, 3);
        assert_eq!(op, BlockOperator::identity(1, 3, 3));
        let e = TorusFunction::mode(1, 3, &[0], 1, C64::new(1.0, 0.0));
        let op = BlockOperator::from_multiplication(&e, Placement::Diagonal, 3, 3);
        let z = op.zero_index();
        for t in 0..op.tlen() {
            for r in 0..op.dim() {
                for c in 0..op.dim() {
                    let (s, j) = op.label(r);
                    let (sp, jp) = op.label(c);
                    let want = t == z && s == sp && j - jp == 1;
                    assert_eq!(op.symbols[t][(r, c)] != ZERO, want);
                }
            }
        }
    }

    #[test]
    fn compose_multiplications_matches_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let a = random_analytic(&mut rng, 1, 8, 1.0, 2.5, false);
        let b = random_analytic(&mut rng, 1, 8, 1.0, 2.5, false);
        let (jc, lc) = (8, 8);
        let pa = BlockOperator::from_multiplication(&a, Placement::Diagonal, jc, lc);
        let pb = BlockOperator::from_multiplication(&b, Placement::Diagonal, jc, lc);
        let prod = pa.compose(&pb);
        let want = BlockOperator::from_multiplication(&a.multiply(&b), Placement::Diagonal, jc, lc);
        // interior entries only: near |j| = J the truncated product misses modes
        let diff = prod.sub(&want).resize(3, 3);
        assert!(diff.max_abs() < 1e-9, "{}", diff.max_abs());
    }

    #[test]
    fn fft_and_direct_compose_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a = random_operator(&mut rng, 1, 3, 4, 1.0, 0.5);
        let b = random_operator(&mut rng, 1, 3, 4, 1.0, 0.5);
        let all: Vec<usize> = (0..a.tlen()).collect();
        let direct = a.compose_direct(&b, &all, &all);
        let fft = a.compose_fft(&b, fft_time_side(4));
        assert!(direct.sub(&fft).max_abs() < 1e-13);
        let id = BlockOperator::identity(1, 3, 4);
        assert!(a.compose(&id).sub(&a).max_abs() < 1e-15);
    }

    #[test]
    fn composition_constant_is_stable() {
        let c1 = fit_composition_constant(1, 4, 4, 1.5, 20, 1);
        let c2 = fit_composition_constant(1, 4, 4, 1.5, 20, 2);
        assert!(c1 > 0.0 && c1 < 10.0);
        assert!((c1 / c2).max(c2 / c1) < 2.0);
    }

    #[test]
    fn smoothing_truncation() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let a = random_operator(&mut rng, 1, 3, 5, 1.0, 0.5);
        assert_eq!(a.smooth_truncate(5).0, a);
        let (lo, _) = a.smooth_truncate(0);
        for t in 0..a.tlen() {
            if t != a.zero_index() {
                assert!(lo.symbols[t].iter().all(|v| *v == ZERO));
            }
        }
        for _ in 0..50 {
            let a = random_operator(&mut rng, 1, 3, 6, 1.0, 0.4);
            for n in 1..5 {
                for beta in [0.5, 1.0, 3.0] {
                    let (_, hi) = a.smooth_truncate(n);
                    assert!(hi.decay_norm(1.5) <= (n as f64).powf(-beta) * a.decay_norm(1.5 + beta) * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn hamiltonian_model_case() {
        let op = BlockOperator::diagonal(1, 4, 2, |s, j| C64::new(0.0, -(s as f64) * (j * j) as f64));
        assert!(op.is_hamiltonian(1e-14).0);
        let mut bad = op.clone();
        let z = bad.zero_index();
        let tol = 1e-6;
        bad.symbols[z][(3, 5)] += C64::new(2.0 * tol * (1.0 + op.max_abs()), 0.0);
        assert!(!bad.is_hamiltonian(tol).0);
    }

    #[test]
    fn phase_slice_of_multiplication() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let a = random_analytic(&mut rng, 1, 3, 1.0, 0.3, false);
        let op = BlockOperator::from_multiplication(&a, Placement::Diagonal, 3, 3);
        let phi = [0.7];
        let sl = op.phase_slice(&phi);
        let aslice = a.slice_phi(0, &phi);
        for j in -3i64..=3 {
            for jp in -3i64..=3 {
                let want = if (j - jp).abs() <= 3 { aslice[(j - jp + 3) as usize] } else { ZERO };
                assert!((sl[(op.row(1, j), op.row(1, jp))] - want).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn apply_matches_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let a = random_analytic(&mut rng, 1, 6, 1.0, 3.0, false);
        let h = random_analytic(&mut rng, 1, 6, 1.0, 3.0, false).pair();
        let op = BlockOperator::from_multiplication(&a, Placement::Diagonal, 6, 6);
        let out = op.apply(&h);
        let want = a.multiply(&h.component(0));
        let diff = (&out.component(0) - &want).resize(2);
        assert!(diff.max_abs() < 1e-12);
    }

    #[test]
    fn dump_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let a = random_operator(&mut rng, 1, 2, 1, 1.0, 0.5);
        let t = a.dump();
        assert!(t.starts_with("1 2 1\n"));
        assert_eq!(BlockOperator::parse_dump(&t).unwrap(), a);
    }

    #[test]
    fn hamiltonian_projection_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let h = random_hamiltonian(&mut rng, 1, 3, 2, 1.0, 0.5);
        assert!(h.is_hamiltonian(1e-14).0);
        assert!(hamiltonian_projection(&h).sub(&h).max_abs() < 1e-15);
    }
}
