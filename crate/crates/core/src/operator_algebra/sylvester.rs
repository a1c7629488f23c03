//! A X − X B = R for 1×1 and 2×2 blocks that are self-adjoint or
//! skew-adjoint, via closed-form Hermitian eigendecompositions.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64 as C64;

const ADJOINT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelfAdjointKind {
    Hermitian,
    SkewHermitian,
}

fn classify(a: &DMatrix<C64>) -> Result<SelfAdjointKind> {
    let scale = 1.0 + a.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let herm = (a - a.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
    let skew = (a + a.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
    if herm <= ADJOINT_TOL * scale && herm <= skew {
        Ok(SelfAdjointKind::Hermitian)
    } else if skew <= ADJOINT_TOL * scale {
        Ok(SelfAdjointKind::SkewHermitian)
    } else {
        Err(Error::NotSelfAdjoint(herm.min(skew) / scale))
    }
}

/// Eigenvalues (descending) and unitary eigenvectors of a Hermitian matrix
/// of size 1 or 2.
pub fn eig_hermitian_2x2(h: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    match h.nrows() {
        1 => (vec![h[(0, 0)].re], DMatrix::identity(1, 1)),
        2 => {
            let a = h[(0, 0)].re;
            let d = h[(1, 1)].re;
            let b = 0.5 * (h[(0, 1)] + h[(1, 0)].conj());
            let mid = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
            let lam = [mid + rad, mid - rad];
            if b.norm() <= 1e-300 {
                let (l, u) = if a >= d {
                    ([a, d], DMatrix::identity(2, 2))
                } else {
                    ([d, a], DMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)]))
                };
                return (l.to_vec(), u);
            }
            let mut u = DMatrix::zeros(2, 2);
            for (k, l) in lam.iter().enumerate() {
                // two candidate null vectors of H − λ; keep the better-conditioned one
                let v1 = [b, C64::new(l - a, 0.0)];
                let v2 = [C64::new(l - d, 0.0), b.conj()];
                let n1 = (v1[0].norm_sqr() + v1[1].norm_sqr()).sqrt();
                let n2 = (v2[0].norm_sqr() + v2[1].norm_sqr()).sqrt();
                let (v, n) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
                u[(0, k)] = v[0] / n;
                u[(1, k)] = v[1] / n;
            }
            (lam.to_vec(), u)
        }
        n => panic!("eig_hermitian_2x2 on a {n}×{n} block"),
    }
}

/// X with A X − X B = R. A and B must both be Hermitian or both
/// skew-Hermitian; their spectra must be separated by at least `floor`.
pub fn solve_sylvester_small(a: &DMatrix<C64>, b: &DMatrix<C64>, r: &DMatrix<C64>, floor: f64) -> Result<DMatrix<C64>> {
    let ka = classify(a)?;
    let kb = classify(b)?;
    // a zero block classifies as Hermitian; treat it as matching the other side
    let kind = if ka == kb || is_zero(a) { kb } else if is_zero(b) { ka } else {
        return Err(Error::NotSelfAdjoint(f64::NAN));
    };
    let (ha, hb, rr) = match kind {
        SelfAdjointKind::Hermitian => (a.clone(), b.clone(), r.clone()),
        SelfAdjointKind::SkewHermitian => {
            let mi = C64::new(0.0, -1.0);
            (a * mi, b * mi, r * mi)
        }
    };
    let ha = (&ha + ha.adjoint()) * C64::new(0.5, 0.0);
    let hb = (&hb + hb.adjoint()) * C64::new(0.5, 0.0);
    let (la, ua) = eig_hermitian_2x2(&ha);
    let (lb, ub) = eig_hermitian_2x2(&hb);
    let mut gap = f64::INFINITY;
    for x in &la {
        for y in &lb {
            gap = gap.min((x - y).abs());
        }
    }
    if gap < floor {
        return Err(Error::SmallDivisor { context: "block Sylvester equation".into(), gap, floor });
    }
    let mut t = ua.adjoint() * rr * &ub;
    for p in 0..la.len() {
        for q in 0..lb.len() {
            t[(p, q)] /= la[p] - lb[q];
        }
    }
    Ok(ua * t * ub.adjoint())
}

fn is_zero(a: &DMatrix<C64>) -> bool {
    a.iter().all(|v| v.norm() == 0.0)
}

pub fn solve_sylvester_2x2(a: &Matrix2<C64>, b: &Matrix2<C64>, r: &Matrix2<C64>, floor: f64) -> Result<Matrix2<C64>> {
    let to = |m: &Matrix2<C64>| DMatrix::from_column_slice(2, 2, m.as_slice());
    let x = solve_sylvester_small(&to(a), &to(b), &to(r), floor)?;
    Ok(Matrix2::from_column_slice(x.as_slice()))
}
