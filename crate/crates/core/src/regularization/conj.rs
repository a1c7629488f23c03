//! Conjugation of L = ω·∂ + i(P₂∂xx + P₁∂x + P₀) by a pointwise 2×2
//! matrix M(φ,x):
//!   P₂' = M⁻¹P₂M,  P₁' = M⁻¹(2P₂M_x + P₁M),
//!   P₀' = M⁻¹(P₂M_xx + P₁M_x + P₀M) − iM⁻¹ω·∂M.

use crate::fourier_core::{grid_side, Reality, TorusFunction};
use crate::nls_model::{DiffOperator, LinearizedCoefficients};
use num_complex::Complex64 as C64;

pub(crate) type M2 = [C64; 4];

#[inline]
pub(crate) fn mm(a: &M2, b: &M2) -> M2 {
    [a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3], a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]]
}

#[inline]
fn add(a: &M2, b: &M2) -> M2 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

#[inline]
fn sc(a: &M2, k: C64) -> M2 {
    [a[0] * k, a[1] * k, a[2] * k, a[3] * k]
}

pub(crate) fn grids(fs: &[TorusFunction; 4], mg: usize) -> [Vec<C64>; 4] {
    [fs[0].to_grid(mg), fs[1].to_grid(mg), fs[2].to_grid(mg), fs[3].to_grid(mg)]
}

fn at(g: &[Vec<C64>; 4], p: usize) -> M2 {
    [g[0][p], g[1][p], g[2][p], g[3][p]]
}

/// [[a, b], [−b̄, −ā]] + c·E on the grid.
fn hamiltonian_grid(a: &TorusFunction, b: &TorusFunction, c: f64, mg: usize) -> [Vec<C64>; 4] {
    let ag = a.to_grid(mg);
    let bg = b.to_grid(mg);
    let lower_left = bg.iter().map(|v| -v.conj()).collect();
    let lower_right = ag.iter().map(|v| -(v.conj() + c)).collect();
    let upper_left = ag.iter().map(|v| v + c).collect();
    [upper_left, bg, lower_left, lower_right]
}

pub(crate) fn from_grid(d: usize, n: usize, mg: usize, vals: Vec<C64>) -> TorusFunction {
    TorusFunction::from_grid(d, n, mg, vals, Reality::Complex)
}

/// Conjugated operator and the largest violation of the [[a, b], [−b̄, −ā]]
/// pattern in the new coefficient matrices.
pub(crate) fn conjugate_pointwise(op: &DiffOperator, m: &[TorusFunction; 4], minv: &[TorusFunction; 4], oversample: usize) -> (DiffOperator, f64) {
    assert!(op.remainder.is_none(), "pointwise conjugation of a remainder is not supported");
    let co = &op.coeffs;
    let d = op.d();
    let n = co.a[0].n;
    let mg = grid_side(n, oversample);
    let p2 = hamiltonian_grid(&co.a[2], &co.b[2], 1.0, mg);
    let p1 = hamiltonian_grid(&co.a[1], &co.b[1], 0.0, mg);
    let p0 = hamiltonian_grid(&co.a[0], &co.b[0], op.m, mg);
    let mx: [TorusFunction; 4] = std::array::from_fn(|k| m[k].dx());
    let mxx: [TorusFunction; 4] = std::array::from_fn(|k| m[k].dxx());
    let mt: [TorusFunction; 4] = std::array::from_fn(|k| m[k].omega_dphi(&op.omega));
    let (gm, gmx, gmxx, gmt, gmi) = (grids(m, mg), grids(&mx, mg), grids(&mxx, mg), grids(&mt, mg), grids(minv, mg));
    let total = gm[0].len();
    let mut out: [[Vec<C64>; 4]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| Vec::with_capacity(total)));
    let two = C64::new(2.0, 0.0);
    let mi = C64::new(0.0, -1.0);
    for p in 0..total {
        let (mp, mxp, mxxp, mtp, mip) = (at(&gm, p), at(&gmx, p), at(&gmxx, p), at(&gmt, p), at(&gmi, p));
        let (a2, a1, a0) = (at(&p2, p), at(&p1, p), at(&p0, p));
        let n2 = mm(&mip, &mm(&a2, &mp));
        let n1 = mm(&mip, &add(&sc(&mm(&a2, &mxp), two), &mm(&a1, &mp)));
        let inner = add(&add(&mm(&a2, &mxxp), &mm(&a1, &mxp)), &mm(&a0, &mp));
        let n0 = add(&mm(&mip, &inner), &sc(&mm(&mip, &mtp), mi));
        for (slot, val) in out.iter_mut().zip([n0, n1, n2]) {
            for k in 0..4 {
                slot[k].push(val[k]);
            }
        }
    }
    let consts = [op.m, 0.0, 1.0];
    let mut defect: f64 = 0.0;
    for o in &out {
        for p in 0..total {
            defect = defect.max((o[2][p] + o[1][p].conj()).norm());
            defect = defect.max((o[3][p] + o[0][p].conj()).norm());
        }
    }
    let mut coeffs = LinearizedCoefficients::zeros(d, n);
    for k in 0..3 {
        let [ul, ur, _, _] = std::mem::take(&mut out[k]);
        let ul: Vec<C64> = ul.into_iter().map(|v| v - consts[k]).collect();
        coeffs.a[k] = from_grid(d, n, mg, ul);
        coeffs.b[k] = from_grid(d, n, mg, ur);
    }
    (DiffOperator::new(&op.omega, op.m, coeffs), defect)
}
