//! Right-hand sides of the non-resonance conditions.

/// ⟨ℓ⟩ = max(1, |ℓ|∞).
pub fn bracket(ell: &[i64]) -> f64 {
    ell.iter().map(|l| l.unsigned_abs()).max().unwrap_or(0).max(1) as f64
}

/// ⟨j⟩ = max(1, |j|).
pub fn bracket_j(j: i64) -> f64 {
    j.unsigned_abs().max(1) as f64
}

/// Second Melnikov, separated clusters: 2γ|σj² − σ'j'²| / ⟨ℓ⟩^τ.
pub fn s_threshold(gamma: f64, tau: f64, ell: &[i64], sigma: i8, j: i64, sigma_p: i8, jp: i64) -> f64 {
    let diff = (sigma as f64) * (j * j) as f64 - (sigma_p as f64) * (jp * jp) as f64;
    2.0 * gamma * diff.abs() / bracket(ell).powf(tau)
}

/// Second Melnikov inside one cluster (k = ±j, ℓ ≠ 0): 2γ / (⟨ℓ⟩^τ⟨j⟩).
pub fn o_threshold(gamma: f64, tau: f64, ell: &[i64], j: i64) -> f64 {
    2.0 * gamma / (bracket(ell).powf(tau) * bracket_j(j))
}

/// First Melnikov: 2γ⟨j⟩² / ⟨ℓ⟩^τ.
pub fn p_threshold(gamma: f64, tau: f64, ell: &[i64], j: i64) -> f64 {
    2.0 * gamma * bracket_j(j).powi(2) / bracket(ell).powf(tau)
}

/// Diophantine: γ₀ / |ℓ|^τ₀ with |ℓ| the ℓ¹ norm.
pub fn diophantine_threshold(gamma0: f64, tau0: f64, ell: &[i64]) -> f64 {
    let n: i64 = ell.iter().map(|l| l.abs()).sum();
    gamma0 / (n.max(1) as f64).powf(tau0)
}
