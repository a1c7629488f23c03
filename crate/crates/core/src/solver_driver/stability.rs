//! Linear stability through the reduced flow v̇ = −Ω v, evolved with exact
//! 2×2 exponentials and pulled back by W₂(ωt).

use crate::error::{Error, Result};
use crate::fourier_core::TorusFunction;
use crate::kam_reducibility::NormalForm;
use crate::operator_algebra::{eig_hermitian_2x2, sidx, Transformation};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::Serialize;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Debug, Default, Serialize)]
pub struct StabilitySample {
    pub t: f64,
    pub v_norm: f64,
    pub h_norm: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct StabilityReport {
    pub omega: Vec<f64>,
    pub horizon: f64,
    pub s: f64,
    pub max_re_eigenvalue: f64,
    /// max_t |‖v(t)‖_s/‖v(0)‖_s − 1|.
    pub norm_drift: f64,
    /// max over t, j of ||v_{+,j}|² + |v_{+,−j}|² − (same at 0)| / ‖v(0)‖².
    pub cluster_drift: f64,
    pub h0_norm: f64,
    pub h0_norm_s1: f64,
    pub pullback_min_ratio: f64,
    pub pullback_max_ratio: f64,
    /// max_t |‖h(t)‖_s − ‖h(0)‖_s|.
    pub oscillation: f64,
    /// oscillation / (ε‖h(0)‖_{s+1}).
    pub fitted_constant: f64,
    pub conserved: bool,
    pub samples: Vec<StabilitySample>,
}

/// Per (σ, |j|): eigenvalues of H = Ω/(iσ) and the unitary U.
struct Flow {
    jc: usize,
    eig: [Vec<(Vec<f64>, DMatrix<C64>)>; 2],
}

impl Flow {
    fn new(nf: &NormalForm, jc: usize) -> Self {
        let mk = |sigma: i8| (0..=jc).map(|j| eig_hermitian_2x2(&(nf.block(sigma, j as i64) / (I * sigma as f64)))).collect();
        Flow { jc, eig: [mk(1), mk(-1)] }
    }

    /// v(t) = U e^{−iσΛt} U* v(0), per cluster.
    fn evolve(&self, v0: &[Vec<C64>; 2], t: f64) -> [Vec<C64>; 2] {
        let n = self.jc as i64;
        let mut out = [vec![C64::new(0.0, 0.0); v0[0].len()], vec![C64::new(0.0, 0.0); v0[1].len()]];
        for sigma in [1i8, -1] {
            let c = sidx(sigma);
            for j in 0..=n {
                let idx: Vec<usize> = if j == 0 { vec![n as usize] } else { vec![(n + j) as usize, (n - j) as usize] };
                let (lam, u) = &self.eig[c][j as usize];
                let x = DVector::from_iterator(idx.len(), idx.iter().map(|&k| v0[c][k]));
                let mut y = u.adjoint() * x;
                for (k, l) in lam.iter().enumerate() {
                    y[k] *= C64::from_polar(1.0, -(sigma as f64) * l * t);
                }
                let z = u * y;
                for (k, &i) in idx.iter().enumerate() {
                    out[c][i] = z[k];
                }
            }
        }
        out
    }
}

fn hs_norm(v: &[Vec<C64>; 2], n: usize, s: f64) -> f64 {
    let mut acc = 0.0;
    for comp in v {
        for (k, a) in comp.iter().enumerate() {
            let j = k as i64 - n as i64;
            acc += (j.unsigned_abs().max(1) as f64).powf(2.0 * s) * a.norm_sqr();
        }
    }
    acc.sqrt()
}

/// x-only pair embedded as a φ-independent function.
fn embed(v: &[Vec<C64>; 2], d: usize, n: usize) -> TorusFunction {
    let mut f = TorusFunction::zeros_pair(d, n);
    let zero = vec![0i64; d];
    for c in 0..2 {
        for (k, a) in v[c].iter().enumerate() {
            f.set(c, &zero, k as i64 - n as i64, *a);
        }
    }
    f
}

fn slice(f: &TorusFunction, phi: &[f64]) -> [Vec<C64>; 2] {
    [f.slice_phi(0, phi), f.slice_phi(1, phi)]
}

/// Evolves the reduced flow from v(0) = (W₂⁻¹h₀)(0, ·) over [0, horizon] at
/// `samples` equally spaced times; `pullback` of them also evaluate
/// h(t) = W₂(ωt)v(t). Only the ℓ = 0 modes of h0 are used.
#[allow(clippy::too_many_arguments)]
pub fn stability_check(
    nf: &NormalForm,
    w2: &Transformation,
    h0: &TorusFunction,
    horizon: f64,
    s: f64,
    samples: usize,
    pullback: usize,
    eps: f64,
) -> Result<StabilityReport> {
    if h0.ncomp() != 2 || h0.n > nf.jc {
        return Err(Error::Usage("stability_check needs a pair within the normal-form cutoff".into()));
    }
    let (d, n) = (h0.d, h0.n);
    let mut max_re: f64 = 0.0;
    for sigma in [1i8, -1] {
        for j in 0..=n as i64 {
            let (p, m) = nf.eigenvalues(sigma, j);
            max_re = max_re.max(p.re.abs() / (1.0 + p.norm())).max(m.re.abs() / (1.0 + m.norm()));
        }
    }
    if max_re > 1e-8 {
        return Err(Error::Structure(format!("normal form has non-imaginary spectrum: {max_re:.3e}")));
    }
    let zero = vec![0.0; d];
    let v0 = slice(&w2.apply_inverse(&embed(&slice(h0, &zero), d, n))?, &zero);
    let flow = Flow::new(nf, n);
    let nv0 = hs_norm(&v0, n, s);
    let pair_mass = |v: &[Vec<C64>; 2], j: usize| {
        let a = v[0][n + j].norm_sqr();
        if j == 0 {
            a
        } else {
            a + v[0][n - j].norm_sqr()
        }
    };
    let mass0: Vec<f64> = (0..=n).map(|j| pair_mass(&v0, j)).collect();
    let total0: f64 = v0.iter().flatten().map(|a| a.norm_sqr()).sum::<f64>().max(f64::MIN_POSITIVE);

    let h_at = |v: &[Vec<C64>; 2], t: f64| -> Result<[Vec<C64>; 2]> {
        let phi: Vec<f64> = nf.omega.iter().map(|w| w * t).collect();
        Ok(slice(&w2.apply(&embed(v, d, n))?, &phi))
    };
    let h_start = h_at(&v0, 0.0)?;
    let hn0 = hs_norm(&h_start, n, s);
    let hn0_s1 = hs_norm(&h_start, n, s + 1.0);

    let mut rep = StabilityReport {
        omega: nf.omega.clone(),
        horizon,
        s,
        max_re_eigenvalue: max_re,
        h0_norm: hn0,
        h0_norm_s1: hn0_s1,
        pullback_min_ratio: 1.0,
        pullback_max_ratio: 1.0,
        ..Default::default()
    };
    let every = if pullback == 0 { usize::MAX } else { (samples / pullback).max(1) };
    for k in 0..=samples {
        let t = horizon * k as f64 / samples.max(1) as f64;
        let v = flow.evolve(&v0, t);
        let nv = hs_norm(&v, n, s);
        if nv0 > 0.0 {
            rep.norm_drift = rep.norm_drift.max((nv / nv0 - 1.0).abs());
        }
        for j in 0..=n {
            rep.cluster_drift = rep.cluster_drift.max((pair_mass(&v, j) - mass0[j]).abs() / total0);
        }
        let mut sample = StabilitySample { t, v_norm: nv, h_norm: None };
        if k % every == 0 {
            let hn = hs_norm(&h_at(&v, t)?, n, s);
            rep.oscillation = rep.oscillation.max((hn - hn0).abs());
            if hn0 > 0.0 {
                rep.pullback_min_ratio = rep.pullback_min_ratio.min(hn / hn0);
                rep.pullback_max_ratio = rep.pullback_max_ratio.max(hn / hn0);
            }
            sample.h_norm = Some(hn);
        }
        rep.samples.push(sample);
    }
    rep.fitted_constant = if eps > 0.0 && hn0_s1 > 0.0 { rep.oscillation / (eps * hn0_s1) } else { 0.0 };
    rep.conserved = rep.norm_drift <= 1e-8 && rep.cluster_drift <= 1e-10;
    Ok(rep)
}
