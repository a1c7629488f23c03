//! L = ω·∂φ + i(E + A₂)∂xx + iA₁∂x + i(mE + A₀) + R, with
//! A_i = [[a_i, b_i], [−b̄_i, −ā_i]] and an optional bounded remainder R.

use crate::fourier_core::{TorusFunction, DEFAULT_OVERSAMPLE};
use crate::operator_algebra::{BlockOperator, LinearOperator};
use num_complex::Complex64 as C64;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedCoefficients {
    pub a: [TorusFunction; 3],
    pub b: [TorusFunction; 3],
}

impl LinearizedCoefficients {
    pub fn zeros(d: usize, n: usize) -> Self {
        let z = TorusFunction::zeros(d, n);
        LinearizedCoefficients { a: [z.clone(), z.clone(), z.clone()], b: [z.clone(), z.clone(), z] }
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().chain(&self.b).map(|f| f.max_abs()).fold(0.0, f64::max)
    }

    /// Largest violation of: a₂ real, Re a₁ = ∂x a₂, b₁ = ∂x b₂,
    /// Im a₀ = ½ ∂x Im a₁.
    pub fn structure_defect(&self) -> f64 {
        let [a0, a1, a2] = &self.a;
        let [_, b1, b2] = &self.b;
        let v1 = a2.imag_part().max_abs();
        let v2 = (&a1.real_part() - &a2.dx()).max_abs();
        let v3 = (b1 - &b2.dx()).max_abs();
        let v4 = (&a0.imag_part() - &(&a1.imag_part().dx() * 0.5)).max_abs();
        v1.max(v2).max(v3).max(v4)
    }

    pub fn resize(&self, n: usize) -> Self {
        LinearizedCoefficients { a: self.a.clone().map(|f| f.resize(n)), b: self.b.clone().map(|f| f.resize(n)) }
    }
}

#[derive(Clone, Debug)]
pub struct DiffOperator {
    pub omega: Vec<f64>,
    pub m: f64,
    pub coeffs: LinearizedCoefficients,
    pub remainder: Option<BlockOperator>,
}

fn mul(a: &TorusFunction, h: &TorusFunction) -> TorusFunction {
    a.multiply_with(h, h.n, DEFAULT_OVERSAMPLE).0
}

impl DiffOperator {
    pub fn new(omega: &[f64], m: f64, coeffs: LinearizedCoefficients) -> Self {
        DiffOperator { omega: omega.to_vec(), m, coeffs, remainder: None }
    }

    pub fn d(&self) -> usize {
        self.omega.len()
    }

    /// Pseudo-spectral application to a pair (h⁺, h⁻), result at h's cutoff.
    pub fn apply(&self, h: &TorusFunction) -> TorusFunction {
        assert_eq!(h.ncomp(), 2);
        let i = C64::new(0.0, 1.0);
        let hp = h.component(0);
        let hm = h.component(1);
        let dp = [hp.clone(), hp.dx(), hp.dxx()];
        let dm = [hm.clone(), hm.dx(), hm.dxx()];
        let mut up = &hp.omega_dphi(&self.omega) + &(&(&dp[2] + &(&hp * self.m)).scale(i));
        let mut um = &hm.omega_dphi(&self.omega) - &(&(&dm[2] + &(&hm * self.m)).scale(i));
        for k in 0..3 {
            let a = &self.coeffs.a[k];
            let b = &self.coeffs.b[k];
            let plus = &mul(a, &dp[k]) + &mul(b, &dm[k]);
            let minus = &mul(&a.conj_reflect(), &dm[k]) + &mul(&b.conj_reflect(), &dp[k]);
            up = &up + &plus.scale(i);
            um = &um - &minus.scale(i);
        }
        let mut out = TorusFunction::pair_of(&up, &um);
        if let Some(r) = &self.remainder {
            let rh = r.apply(&h.resize(r.jc)).resize(h.n);
            out = &out + &rh;
        }
        out
    }

    /// Töplitz-in-time block form with space cutoff jc and time cutoff lc.
    pub fn to_block(&self, jc: usize, lc: usize) -> LinearOperator {
        let d = self.d();
        let n = self.coeffs.a[0].n;
        let i = C64::new(0.0, 1.0);
        let one = TorusFunction::constant(d, n, C64::new(1.0, 0.0));
        let mass = TorusFunction::constant(d, n, C64::new(self.m, 0.0));
        let diag = [&self.coeffs.a[0] + &mass, self.coeffs.a[1].clone(), &self.coeffs.a[2] + &one];
        let mut part = BlockOperator::zeros(d, jc, lc);
        for k in 0..3 {
            let b = &self.coeffs.b[k];
            part.add_multiplication(1, 1, &diag[k], k as u32, i);
            part.add_multiplication(1, -1, b, k as u32, i);
            part.add_multiplication(-1, 1, &b.conj_reflect(), k as u32, -i);
            part.add_multiplication(-1, -1, &diag[k].conj_reflect(), k as u32, -i);
        }
        if let Some(r) = &self.remainder {
            part = part.add(&r.resize(jc, lc));
        }
        LinearOperator { omega: self.omega.clone(), part }
    }
}
