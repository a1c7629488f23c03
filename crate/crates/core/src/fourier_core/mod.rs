//! Truncated Fourier series on T^{d+1} = T^d_φ × T_x.
//!
//! Coefficients live on the cube |ℓ|∞ ≤ N, |j| ≤ N, row-major with the
//! space index j fastest. u(φ,x) = Σ u_{ℓ,j} e^{i(ℓ·φ + jx)}.

mod diffeo;
mod dump;
mod param;

pub use diffeo::{compose_space_diffeo, compose_time_diffeo, inverse_identity_residual, invert_diffeo, invert_time_diffeo};
pub use dump::{parse_dump, write_dump};
pub use param::{lip_norm, LipNorm, ParamFamily, ParamGrid, PayloadNorm};

use crate::error::{Error, Result};
use crate::grid::{fft_nd, wrap};
use num_complex::Complex64 as C64;
use std::ops::{Add, Mul, Neg, Sub};

pub const MAX_D: usize = 3;
pub const DEFAULT_OVERSAMPLE: usize = 4;
pub const S_CAP: f64 = 12.0;
pub const N_CAP: usize = 512;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Multiindex {
    pub ell: Vec<i64>,
    pub j: i64,
}

impl Multiindex {
    pub fn new(ell: &[i64], j: i64) -> Self {
        Multiindex { ell: ell.to_vec(), j }
    }

    /// ⟨i⟩ = max(|ℓ|, |j|, 1).
    pub fn weight(&self) -> f64 {
        let l = self.ell.iter().map(|x| x.abs()).max().unwrap_or(0);
        l.max(self.j.abs()).max(1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reality {
    Real,
    Complex,
    ConjugatePair,
}

impl Reality {
    pub fn tag(&self) -> &'static str {
        match self {
            Reality::Real => "real-valued",
            Reality::Complex => "complex",
            Reality::ConjugatePair => "conjugate-pair",
        }
    }

    pub fn from_tag(s: &str) -> Option<Reality> {
        match s {
            "real-valued" => Some(Reality::Real),
            "complex" => Some(Reality::Complex),
            "conjugate-pair" => Some(Reality::ConjugatePair),
            _ => None,
        }
    }
}

/// Index arithmetic for the coefficient cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub d: usize,
    pub n: usize,
}

impl Shape {
    pub fn new(d: usize, n: usize) -> Self {
        assert!((1..=MAX_D).contains(&d), "d must be in 1..=3");
        Shape { d, n }
    }

    #[inline]
    pub fn side(&self) -> usize {
        2 * self.n + 1
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.side().pow(self.d as u32 + 1)
    }

    /// Number of time modes (2N+1)^d.
    #[inline]
    pub fn time_len(&self) -> usize {
        self.side().pow(self.d as u32)
    }

    pub fn flat(&self, ell: &[i64], j: i64) -> Option<usize> {
        let n = self.n as i64;
        let side = self.side();
        let mut idx = 0usize;
        for &l in ell.iter().take(self.d) {
            if l.abs() > n {
                return None;
            }
            idx = idx * side + (l + n) as usize;
        }
        if j.abs() > n {
            return None;
        }
        Some(idx * side + (j + n) as usize)
    }

    #[inline]
    pub fn decode(&self, mut idx: usize) -> ([i64; MAX_D], i64) {
        let side = self.side();
        let n = self.n as i64;
        let j = (idx % side) as i64 - n;
        idx /= side;
        let mut ell = [0i64; MAX_D];
        for k in (0..self.d).rev() {
            ell[k] = (idx % side) as i64 - n;
            idx /= side;
        }
        (ell, j)
    }

    /// Decode a flat time index into ℓ.
    #[inline]
    pub fn decode_time(&self, mut idx: usize) -> [i64; MAX_D] {
        let side = self.side();
        let n = self.n as i64;
        let mut ell = [0i64; MAX_D];
        for k in (0..self.d).rev() {
            ell[k] = (idx % side) as i64 - n;
            idx /= side;
        }
        ell
    }

    pub fn flat_time(&self, ell: &[i64]) -> Option<usize> {
        let n = self.n as i64;
        let mut idx = 0usize;
        for &l in ell.iter().take(self.d) {
            if l.abs() > n {
                return None;
            }
            idx = idx * self.side() + (l + n) as usize;
        }
        Some(idx)
    }

    /// Index of (−ℓ, −j); the cube is symmetric so this is a flip.
    #[inline]
    pub fn reflect(&self, idx: usize) -> usize {
        self.len() - 1 - idx
    }

    #[inline]
    pub fn weight(&self, idx: usize) -> f64 {
        let (ell, j) = self.decode(idx);
        let l = ell[..self.d].iter().map(|x| x.abs()).max().unwrap_or(0);
        l.max(j.abs()).max(1) as f64
    }
}

/// Physical grid side for a cutoff and oversampling factor.
pub fn grid_side(n: usize, oversample: usize) -> usize {
    let m = oversample.max(2) * (n + 1);
    m + (m % 2)
}

#[derive(Clone, Copy, Debug)]
pub enum Deriv<'a> {
    X,
    Phi(usize),
    OmegaDphi(&'a [f64]),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TorusFunction {
    pub d: usize,
    pub n: usize,
    pub comps: Vec<Vec<C64>>,
    pub reality: Reality,
}

impl TorusFunction {
    pub fn zeros(d: usize, n: usize) -> Self {
        let len = Shape::new(d, n).len();
        TorusFunction { d, n, comps: vec![vec![ZERO; len]], reality: Reality::Complex }
    }

    pub fn zeros_pair(d: usize, n: usize) -> Self {
        let len = Shape::new(d, n).len();
        TorusFunction { d, n, comps: vec![vec![ZERO; len]; 2], reality: Reality::Complex }
    }

    pub fn constant(d: usize, n: usize, c: C64) -> Self {
        let mut u = Self::zeros(d, n);
        let i0 = u.shape().flat(&[0; MAX_D], 0).unwrap();
        u.comps[0][i0] = c;
        if c.im == 0.0 {
            u.reality = Reality::Real;
        }
        u
    }

    pub fn mode(d: usize, n: usize, ell: &[i64], j: i64, amp: C64) -> Self {
        let mut u = Self::zeros(d, n);
        if let Some(i) = u.shape().flat(ell, j) {
            u.comps[0][i] = amp;
        }
        u
    }

    pub fn from_components(d: usize, n: usize, comps: Vec<Vec<C64>>, reality: Reality) -> Self {
        let len = Shape::new(d, n).len();
        assert!(comps.len() == 1 || comps.len() == 2);
        assert!(comps.iter().all(|c| c.len() == len));
        TorusFunction { d, n, comps, reality }
    }

    /// Sample f(φ, x) on the grid of side m and transform.
    pub fn from_fn<F: Fn(&[f64], f64) -> C64>(d: usize, n: usize, oversample: usize, f: F) -> Self {
        let m = grid_side(n, oversample);
        let total = m.pow(d as u32 + 1);
        let mut vals = vec![ZERO; total];
        let h = 2.0 * std::f64::consts::PI / m as f64;
        let mut phi = [0.0; MAX_D];
        for (p, v) in vals.iter_mut().enumerate() {
            let mut r = p;
            let x = (r % m) as f64 * h;
            r /= m;
            for k in (0..d).rev() {
                phi[k] = (r % m) as f64 * h;
                r /= m;
            }
            *v = f(&phi[..d], x);
        }
        Self::from_grid(d, n, m, vals, Reality::Complex)
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        Shape::new(self.d, self.n)
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    pub fn get(&self, c: usize, ell: &[i64], j: i64) -> C64 {
        self.shape().flat(ell, j).map(|i| self.comps[c][i]).unwrap_or(ZERO)
    }

    pub fn set(&mut self, c: usize, ell: &[i64], j: i64, v: C64) {
        if let Some(i) = self.shape().flat(ell, j) {
            self.comps[c][i] = v;
        }
    }

    pub fn component(&self, c: usize) -> TorusFunction {
        let reality = if self.reality == Reality::Real { Reality::Real } else { Reality::Complex };
        TorusFunction { d: self.d, n: self.n, comps: vec![self.comps[c].clone()], reality }
    }

    /// Coefficients of the conjugate function: (ū)_{ℓ,j} = conj(u_{−ℓ,−j}).
    pub fn conj_reflect(&self) -> TorusFunction {
        let sh = self.shape();
        let comps = self
            .comps
            .iter()
            .map(|c| (0..c.len()).map(|i| c[sh.reflect(i)].conj()).collect())
            .collect();
        TorusFunction { d: self.d, n: self.n, comps, reality: self.reality }
    }

    /// The pair (u, ū) in the constraint set U.
    pub fn pair(&self) -> TorusFunction {
        let u = self.component(0);
        let ub = u.conj_reflect();
        TorusFunction {
            d: self.d,
            n: self.n,
            comps: vec![u.comps[0].clone(), ub.comps[0].clone()],
            reality: Reality::ConjugatePair,
        }
    }

    pub fn pair_of(a: &TorusFunction, b: &TorusFunction) -> TorusFunction {
        assert_eq!((a.d, a.n), (b.d, b.n));
        TorusFunction {
            d: a.d,
            n: a.n,
            comps: vec![a.comps[0].clone(), b.comps[0].clone()],
            reality: Reality::Complex,
        }
    }

    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let s = s.min(S_CAP);
        let sh = self.shape();
        self.comps
            .iter()
            .map(|c| {
                c.iter()
                    .enumerate()
                    .map(|(i, v)| v.norm_sqr() * sh.weight(i).powf(2.0 * s))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// (Π_N u, Π_N^⊥ u), both stored at the original cutoff.
    pub fn project(&self, n: usize) -> (TorusFunction, TorusFunction) {
        let sh = self.shape();
        let mut lo = self.clone();
        let mut hi = self.clone();
        for c in 0..self.ncomp() {
            for i in 0..sh.len() {
                let (ell, j) = sh.decode(i);
                let w = ell[..self.d].iter().map(|x| x.abs()).max().unwrap_or(0).max(j.abs());
                if w as usize <= n {
                    hi.comps[c][i] = ZERO;
                } else {
                    lo.comps[c][i] = ZERO;
                }
            }
        }
        (lo, hi)
    }

    /// Pad with zeros or drop modes to reach cutoff n.
    pub fn resize(&self, n: usize) -> TorusFunction {
        if n == self.n {
            return self.clone();
        }
        let src = self.shape();
        let dst = Shape::new(self.d, n);
        let mut out = TorusFunction {
            d: self.d,
            n,
            comps: vec![vec![ZERO; dst.len()]; self.ncomp()],
            reality: self.reality,
        };
        for i in 0..src.len() {
            let (ell, j) = src.decode(i);
            if let Some(k) = dst.flat(&ell[..self.d], j) {
                for c in 0..self.ncomp() {
                    out.comps[c][k] = self.comps[c][i];
                }
            }
        }
        out
    }

    pub fn map_modes<F: Fn([i64; MAX_D], i64, C64) -> C64>(&self, f: F) -> TorusFunction {
        let sh = self.shape();
        let mut out = self.clone();
        for c in out.comps.iter_mut() {
            for (i, v) in c.iter_mut().enumerate() {
                let (ell, j) = sh.decode(i);
                *v = f(ell, j, *v);
            }
        }
        out
    }

    pub fn scale(&self, a: C64) -> TorusFunction {
        let mut out = self.clone();
        out.comps.iter_mut().flatten().for_each(|v| *v *= a);
        if a.im != 0.0 && out.reality == Reality::Real {
            out.reality = Reality::Complex;
        }
        out
    }

    pub fn derivative(&self, which: Deriv) -> TorusFunction {
        let d = self.d;
        match which {
            Deriv::X => self.map_modes(|_, j, v| v * C64::new(0.0, j as f64)),
            Deriv::Phi(k) => {
                assert!(k < d);
                self.map_modes(move |ell, _, v| v * C64::new(0.0, ell[k] as f64))
            }
            Deriv::OmegaDphi(om) => {
                assert_eq!(om.len(), d);
                self.map_modes(|ell, _, v| v * C64::new(0.0, dot(om, &ell[..d])))
            }
        }
    }

    pub fn dx(&self) -> TorusFunction {
        self.derivative(Deriv::X)
    }

    pub fn dxx(&self) -> TorusFunction {
        self.map_modes(|_, j, v| v * (-(j * j) as f64))
    }

    pub fn omega_dphi(&self, omega: &[f64]) -> TorusFunction {
        self.derivative(Deriv::OmegaDphi(omega))
    }

    /// ∂_x^{-1}: e^{ijx} ↦ e^{ijx}/(ij), zero on j = 0.
    pub fn dx_inverse(&self) -> TorusFunction {
        self.map_modes(|_, j, v| if j == 0 { ZERO } else { v / C64::new(0.0, j as f64) })
    }

    /// (ω·∂φ)^{-1}: e^{iℓ·φ} ↦ e^{iℓ·φ}/(iω·ℓ), zero on ℓ = 0.
    pub fn omega_dphi_inverse(&self, omega: &[f64], divisor_floor: f64) -> Result<TorusFunction> {
        let d = self.d;
        let sh = self.shape();
        let mut out = self.clone();
        for c in out.comps.iter_mut() {
            for (i, v) in c.iter_mut().enumerate() {
                let (ell, _) = sh.decode(i);
                if ell[..d].iter().all(|&l| l == 0) {
                    *v = ZERO;
                    continue;
                }
                if *v == ZERO {
                    continue;
                }
                let w = dot(omega, &ell[..d]);
                if w.abs() < divisor_floor {
                    return Err(Error::Resonance {
                        ell: ell[..d].to_vec(),
                        divisor: w.abs(),
                        floor: divisor_floor,
                    });
                }
                *v /= C64::new(0.0, w);
            }
        }
        Ok(out)
    }

    /// Keep only j = 0 modes: the x-average as a function of φ.
    pub fn x_average(&self) -> TorusFunction {
        self.map_modes(|_, j, v| if j == 0 { v } else { ZERO })
    }

    /// Keep only ℓ = 0 modes: the φ-average as a function of x.
    pub fn phi_average(&self) -> TorusFunction {
        let d = self.d;
        self.map_modes(move |ell, _, v| if ell[..d].iter().all(|&l| l == 0) { v } else { ZERO })
    }

    pub fn mean(&self) -> C64 {
        self.get(0, &[0; MAX_D][..self.d], 0)
    }

    pub fn real_part(&self) -> TorusFunction {
        let mut r = (self + &self.conj_reflect()).scale(C64::new(0.5, 0.0));
        r.reality = Reality::Real;
        r
    }

    pub fn imag_part(&self) -> TorusFunction {
        let mut r = (self - &self.conj_reflect()).scale(C64::new(0.0, -0.5));
        r.reality = Reality::Real;
        r
    }

    /// max |u_{ℓ,j} − conj(u_{−ℓ,−j})|, zero for real-valued functions.
    pub fn reality_defect(&self) -> f64 {
        let sh = self.shape();
        self.comps
            .iter()
            .map(|c| {
                (0..c.len())
                    .map(|i| (c[i] - c[sh.reflect(i)].conj()).norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Second component minus the conjugate reflection of the first.
    pub fn pair_defect(&self) -> f64 {
        if self.ncomp() < 2 {
            return 0.0;
        }
        let sh = self.shape();
        (0..sh.len())
            .map(|i| (self.comps[1][i] - self.comps[0][sh.reflect(i)].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Values of component `c` on the physical grid of side m (row-major, x fastest).
    pub fn to_grid_comp(&self, c: usize, m: usize) -> Vec<C64> {
        let sh = self.shape();
        let dims = vec![m; self.d + 1];
        let total = m.pow(self.d as u32 + 1);
        let mut buf = vec![ZERO; total];
        assert!(m >= sh.side(), "grid too coarse for cutoff");
        for (i, v) in self.comps[c].iter().enumerate() {
            if *v == ZERO {
                continue;
            }
            let (ell, j) = sh.decode(i);
            let mut p = 0usize;
            for &l in &ell[..self.d] {
                p = p * m + wrap(l, m);
            }
            p = p * m + wrap(j, m);
            buf[p] = *v;
        }
        fft_nd(&mut buf, &dims, true);
        buf
    }

    pub fn to_grid(&self, m: usize) -> Vec<C64> {
        self.to_grid_comp(0, m)
    }

    /// Transform grid values back and keep the modes with |k| ≤ n.
    pub fn from_grid(d: usize, n: usize, m: usize, mut vals: Vec<C64>, reality: Reality) -> Self {
        let dims = vec![m; d + 1];
        fft_nd(&mut vals, &dims, false);
        let norm = 1.0 / (m.pow(d as u32 + 1) as f64);
        let sh = Shape::new(d, n);
        let mut coeffs = vec![ZERO; sh.len()];
        for (i, cf) in coeffs.iter_mut().enumerate() {
            let (ell, j) = sh.decode(i);
            let mut p = 0usize;
            for &l in &ell[..d] {
                p = p * m + wrap(l, m);
            }
            p = p * m + wrap(j, m);
            *cf = vals[p] * norm;
        }
        let mut u = TorusFunction { d, n, comps: vec![coeffs], reality: Reality::Complex };
        if reality == Reality::Real {
            u = u.real_part();
        }
        u
    }

    /// Product via the physical grid; result cutoff n_out. Also returns the
    /// s=0 norm of the discarded modes within the grid band.
    pub fn multiply_with(&self, other: &TorusFunction, n_out: usize, oversample: usize) -> (TorusFunction, f64) {
        assert_eq!(self.d, other.d);
        let nmax = self.n.max(other.n).max(n_out);
        let m = grid_side(nmax, oversample).max(3 * nmax + 2);
        let a = self.to_grid(m);
        let b = other.to_grid(m);
        let mut prod: Vec<C64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let dims = vec![m; self.d + 1];
        fft_nd(&mut prod, &dims, false);
        let norm = 1.0 / (m.pow(self.d as u32 + 1) as f64);
        let sh = Shape::new(self.d, n_out);
        let mut coeffs = vec![ZERO; sh.len()];
        let mut kept = vec![false; prod.len()];
        for (i, cf) in coeffs.iter_mut().enumerate() {
            let (ell, j) = sh.decode(i);
            let mut p = 0usize;
            for &l in &ell[..self.d] {
                p = p * m + wrap(l, m);
            }
            p = p * m + wrap(j, m);
            *cf = prod[p] * norm;
            kept[p] = true;
        }
        let tail = prod
            .iter()
            .zip(&kept)
            .filter(|(_, k)| !**k)
            .map(|(v, _)| (v * norm).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let reality = if self.reality == Reality::Real && other.reality == Reality::Real {
            Reality::Real
        } else {
            Reality::Complex
        };
        (TorusFunction { d: self.d, n: n_out, comps: vec![coeffs], reality }, tail)
    }

    pub fn multiply(&self, other: &TorusFunction) -> TorusFunction {
        self.multiply_with(other, self.n.max(other.n), DEFAULT_OVERSAMPLE).0
    }

    /// Apply a pointwise map on the grid (oversampled) and re-project.
    pub fn map_pointwise<F: Fn(C64) -> C64>(&self, oversample: usize, f: F) -> TorusFunction {
        let m = grid_side(self.n, oversample);
        let vals: Vec<C64> = self.to_grid(m).into_iter().map(f).collect();
        TorusFunction::from_grid(self.d, self.n, m, vals, Reality::Complex)
    }

    /// Evaluate component c at a point (φ, x) by direct summation.
    pub fn eval(&self, c: usize, phi: &[f64], x: f64) -> C64 {
        let sh = self.shape();
        let mut acc = ZERO;
        for (i, v) in self.comps[c].iter().enumerate() {
            if *v == ZERO {
                continue;
            }
            let (ell, j) = sh.decode(i);
            let arg = dot(phi, &ell[..self.d]) + j as f64 * x;
            acc += v * C64::from_polar(1.0, arg);
        }
        acc
    }

    /// Space-only slice at fixed φ: coefficients in j of u(φ, ·), length 2N+1.
    pub fn slice_phi(&self, c: usize, phi: &[f64]) -> Vec<C64> {
        let sh = self.shape();
        let side = sh.side();
        let mut out = vec![ZERO; side];
        for (i, v) in self.comps[c].iter().enumerate() {
            if *v == ZERO {
                continue;
            }
            let (ell, j) = sh.decode(i);
            out[(j + self.n as i64) as usize] += v * C64::from_polar(1.0, dot(phi, &ell[..self.d]));
        }
        out
    }

    fn zip_with<F: Fn(C64, C64) -> C64>(&self, other: &TorusFunction, f: F) -> TorusFunction {
        assert_eq!(self.d, other.d);
        assert_eq!(self.ncomp(), other.ncomp());
        let n = self.n.max(other.n);
        let a = self.resize(n);
        let b = other.resize(n);
        let comps = a
            .comps
            .iter()
            .zip(&b.comps)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| f(*p, *q)).collect())
            .collect();
        let reality = if self.reality == other.reality { self.reality } else { Reality::Complex };
        TorusFunction { d: self.d, n, comps, reality }
    }
}

impl<'a> Add for &'a TorusFunction {
    type Output = TorusFunction;
    fn add(self, rhs: &TorusFunction) -> TorusFunction {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl<'a> Sub for &'a TorusFunction {
    type Output = TorusFunction;
    fn sub(self, rhs: &TorusFunction) -> TorusFunction {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl<'a> Neg for &'a TorusFunction {
    type Output = TorusFunction;
    fn neg(self) -> TorusFunction {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl<'a> Mul<f64> for &'a TorusFunction {
    type Output = TorusFunction;
    fn mul(self, rhs: f64) -> TorusFunction {
        let mut out = self.clone();
        out.comps.iter_mut().flatten().for_each(|v| *v *= rhs);
        out
    }
}

/// Coordinates (φ, x) of flat grid point p on the side-m grid (x fastest).
pub fn grid_point(d: usize, m: usize, p: usize) -> ([f64; MAX_D], f64) {
    let h = 2.0 * std::f64::consts::PI / m as f64;
    let mut r = p;
    let x = (r % m) as f64 * h;
    r /= m;
    let mut phi = [0.0; MAX_D];
    for k in (0..d).rev() {
        phi[k] = (r % m) as f64 * h;
        r /= m;
    }
    (phi, x)
}

#[inline]
pub fn dot(omega: &[f64], ell: &[i64]) -> f64 {
    omega.iter().zip(ell).map(|(w, l)| w * *l as f64).sum()
}

/// A random function with coefficients decaying like e^{−rate·|k|}.
pub fn random_analytic<R: rand::Rng>(rng: &mut R, d: usize, n: usize, amp: f64, rate: f64, real: bool) -> TorusFunction {
    let sh = Shape::new(d, n);
    let mut u = TorusFunction::zeros(d, n);
    for i in 0..sh.len() {
        let (ell, j) = sh.decode(i);
        let k = ell[..d].iter().map(|x| x.abs()).sum::<i64>() + j.abs();
        let a = amp * (-rate * k as f64).exp();
        u.comps[0][i] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * a;
    }
    if real {
        u = u.real_part();
    }
    u
}
