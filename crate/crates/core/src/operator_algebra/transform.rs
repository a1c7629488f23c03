//! Changes of variables acting on pairs (h⁺, h⁻), with their inverses.

use super::BlockOperator;
use crate::error::{Error, Result};
use crate::fourier_core::{compose_space_diffeo, compose_time_diffeo};
use crate::fourier_core::{TorusFunction, DEFAULT_OVERSAMPLE};
use num_complex::Complex64 as C64;

#[derive(Clone, Debug)]
pub enum Transformation {
    Identity,
    /// (M h)_σ = Σ_σ' M_{σσ'}(φ,x) h_σ', entries row-major.
    Pointwise { m: Box<[TorusFunction; 4]>, minv: Box<[TorusFunction; 4]> },
    /// h ↦ √(1+ξ_x)^{[jacobian]} h(φ, x + ξ(φ,x)).
    SpaceDiffeo { xi: TorusFunction, xihat: TorusFunction, jacobian: bool },
    /// h ↦ h(φ + ωα(φ), x).
    TimeDiffeo { alpha: TorusFunction, alpha_inv: TorusFunction, omega: Vec<f64> },
    /// Multiplication by a scalar ρ(φ) on both components; not symplectic.
    TimeFactor { rho: TorusFunction, rho_inv: TorusFunction },
    Operator { fwd: Box<BlockOperator>, inv: Box<BlockOperator> },
    /// T₁ ∘ T₂ ∘ … ∘ T_k: the last entry acts first.
    Chain(Vec<Transformation>),
}

fn mul(a: &TorusFunction, h: &TorusFunction) -> TorusFunction {
    a.multiply_with(h, h.n, DEFAULT_OVERSAMPLE).0
}

fn apply_pointwise(m: &[TorusFunction; 4], h: &TorusFunction) -> TorusFunction {
    let hp = h.component(0);
    let hm = h.component(1);
    let up = &mul(&m[0], &hp) + &mul(&m[1], &hm);
    let um = &mul(&m[2], &hp) + &mul(&m[3], &hm);
    TorusFunction::pair_of(&up, &um)
}

impl Transformation {
    pub fn apply(&self, h: &TorusFunction) -> Result<TorusFunction> {
        assert_eq!(h.ncomp(), 2);
        Ok(match self {
            Transformation::Identity => h.clone(),
            Transformation::Pointwise { m, .. } => apply_pointwise(m, h),
            Transformation::SpaceDiffeo { xi, jacobian, .. } => compose_space_diffeo(h, xi, DEFAULT_OVERSAMPLE, *jacobian)?,
            Transformation::TimeDiffeo { alpha, omega, .. } => compose_time_diffeo(h, alpha, omega, DEFAULT_OVERSAMPLE)?,
            Transformation::TimeFactor { rho, .. } => apply_scalar(rho, h),
            Transformation::Operator { fwd, .. } => apply_op(fwd, h),
            Transformation::Chain(ts) => {
                let mut v = h.clone();
                for t in ts.iter().rev() {
                    v = t.apply(&v)?;
                }
                v
            }
        })
    }

    pub fn apply_inverse(&self, h: &TorusFunction) -> Result<TorusFunction> {
        assert_eq!(h.ncomp(), 2);
        Ok(match self {
            Transformation::Identity => h.clone(),
            Transformation::Pointwise { minv, .. } => apply_pointwise(minv, h),
            Transformation::SpaceDiffeo { xihat, jacobian, .. } => compose_space_diffeo(h, xihat, DEFAULT_OVERSAMPLE, *jacobian)?,
            Transformation::TimeDiffeo { alpha_inv, omega, .. } => compose_time_diffeo(h, alpha_inv, omega, DEFAULT_OVERSAMPLE)?,
            Transformation::TimeFactor { rho_inv, .. } => apply_scalar(rho_inv, h),
            Transformation::Operator { inv, .. } => apply_op(inv, h),
            Transformation::Chain(ts) => {
                let mut v = h.clone();
                for t in ts {
                    v = t.apply_inverse(&v)?;
                }
                v
            }
        })
    }

    /// The time at which the input is sampled to produce the output at φ.
    pub fn source_time(&self, phi: &[f64]) -> Vec<f64> {
        match self {
            Transformation::TimeDiffeo { alpha, omega, .. } => {
                let a = alpha.eval(0, phi, 0.0).re;
                phi.iter().zip(omega).map(|(p, w)| p + w * a).collect()
            }
            Transformation::Chain(ts) => {
                let mut p = phi.to_vec();
                for t in ts {
                    p = t.source_time(&p);
                }
                p
            }
            _ => phi.to_vec(),
        }
    }

    pub fn is_symplectic_kind(&self) -> bool {
        match self {
            Transformation::TimeFactor { .. } => false,
            Transformation::Chain(ts) => ts.iter().all(|t| t.is_symplectic_kind()),
            _ => true,
        }
    }

    pub fn then(self, inner: Transformation) -> Transformation {
        match (self, inner) {
            (Transformation::Chain(mut a), Transformation::Chain(b)) => {
                a.extend(b);
                Transformation::Chain(a)
            }
            (Transformation::Chain(mut a), t) => {
                a.push(t);
                Transformation::Chain(a)
            }
            (t, Transformation::Chain(mut b)) => {
                b.insert(0, t);
                Transformation::Chain(b)
            }
            (a, b) => Transformation::Chain(vec![a, b]),
        }
    }
}

fn apply_scalar(rho: &TorusFunction, h: &TorusFunction) -> TorusFunction {
    let up = mul(rho, &h.component(0));
    let um = mul(rho, &h.component(1));
    TorusFunction::pair_of(&up, &um)
}

fn apply_op(a: &BlockOperator, h: &TorusFunction) -> TorusFunction {
    if h.n == a.jc {
        a.apply(h)
    } else {
        a.apply(&h.resize(a.jc)).resize(h.n)
    }
}

/// Σ_k Ψ^k / k! until the term norm at s drops below tol (at most max_terms).
/// Returns the sum and the number of terms used.
pub fn exp_series(psi: &BlockOperator, s: f64, tol: f64, max_terms: usize) -> (BlockOperator, usize) {
    let mut sum = BlockOperator::identity(psi.d, psi.jc, psi.lc);
    let mut term = sum.clone();
    for k in 1..=max_terms {
        term = term.compose(psi).scale(C64::new(1.0 / k as f64, 0.0));
        sum = sum.add(&term);
        if term.decay_norm(s) < tol {
            return (sum, k);
        }
    }
    (sum, max_terms)
}

/// e^{Ψ} together with e^{−Ψ}; refuses when C(s)|Ψ|_s > 1/2.
pub fn exp_operator(psi: &BlockOperator, s: f64, c_s: f64, tol: f64, max_terms: usize) -> Result<Transformation> {
    let size = c_s * psi.decay_norm(s);
    if size > 0.5 {
        return Err(Error::NoInverse(format!("C(s)|Ψ|_s = {size:.3e} > 1/2")));
    }
    let (fwd, _) = exp_series(psi, s, tol, max_terms);
    let (inv, _) = exp_series(&psi.scale(C64::new(-1.0, 0.0)), s, tol, max_terms);
    Ok(Transformation::Operator { fwd: Box::new(fwd), inv: Box::new(inv) })
}
