//! Frequency grids over Λ = [1/2, 3/2]^d and Lipschitz families on them.

use super::TorusFunction;
use num_complex::Complex64 as C64;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrid {
    pub d: usize,
    pub points: Vec<Vec<f64>>,
    pub spacing: f64,
    /// (γ₀, τ₀, L_max) used by the diophantine mask.
    pub diophantine: (f64, f64, usize),
}

impl ParamGrid {
    /// Uniform tensor grid with `per_axis` points per axis on [1/2, 3/2].
    pub fn uniform(d: usize, per_axis: usize) -> Self {
        assert!(per_axis >= 1);
        let spacing = if per_axis > 1 { 1.0 / (per_axis - 1) as f64 } else { 0.0 };
        let axis: Vec<f64> = (0..per_axis)
            .map(|k| if per_axis > 1 { 0.5 + k as f64 * spacing } else { 1.0 })
            .collect();
        let mut points = vec![vec![]];
        for _ in 0..d {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&a| {
                        let mut q = p.clone();
                        q.push(a);
                        q
                    })
                })
                .collect();
        }
        ParamGrid { d, points, spacing, diophantine: (0.1, d as f64 + 1.0, 32) }
    }

    pub fn single(omega: &[f64]) -> Self {
        ParamGrid { d: omega.len(), points: vec![omega.to_vec()], spacing: 0.0, diophantine: (0.1, omega.len() as f64 + 1.0, 32) }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Norm of a payload and of a difference of two payloads.
pub trait PayloadNorm {
    fn payload_norm(&self, s: f64) -> f64;
    fn diff_norm(&self, other: &Self, s: f64) -> f64;
}

impl PayloadNorm for f64 {
    fn payload_norm(&self, _s: f64) -> f64 {
        self.abs()
    }
    fn diff_norm(&self, other: &Self, _s: f64) -> f64 {
        (self - other).abs()
    }
}

impl PayloadNorm for C64 {
    fn payload_norm(&self, _s: f64) -> f64 {
        self.norm()
    }
    fn diff_norm(&self, other: &Self, _s: f64) -> f64 {
        (self - other).norm()
    }
}

impl PayloadNorm for TorusFunction {
    fn payload_norm(&self, s: f64) -> f64 {
        self.sobolev_norm(s)
    }
    fn diff_norm(&self, other: &Self, s: f64) -> f64 {
        (self - other).sobolev_norm(s)
    }
}

#[derive(Clone, Debug)]
pub struct ParamFamily<T> {
    pub grid: ParamGrid,
    /// None outside the active mask.
    pub values: Vec<Option<T>>,
}

impl<T> ParamFamily<T> {
    pub fn new(grid: ParamGrid, values: Vec<Option<T>>) -> Self {
        assert_eq!(grid.len(), values.len());
        ParamFamily { grid, values }
    }

    pub fn from_fn<F: FnMut(&[f64]) -> Option<T>>(grid: ParamGrid, mut f: F) -> Self {
        let values = grid.points.iter().map(|w| f(w)).collect();
        ParamFamily { grid, values }
    }

    pub fn mask(&self) -> Vec<bool> {
        self.values.iter().map(|v| v.is_some()).collect()
    }

    pub fn active(&self) -> impl Iterator<Item = (&[f64], &T)> {
        self.grid.points.iter().zip(&self.values).filter_map(|(w, v)| v.as_ref().map(|x| (w.as_slice(), x)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipNorm {
    pub sup: f64,
    pub lip: f64,
    pub value: f64,
    /// Set when the mask has a single point and the quotient is undefined.
    pub single_point: bool,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// sup + γ·lip over the active mask. `adjacent_only` restricts quotients to
/// neighbouring grid points.
pub fn lip_norm<T: PayloadNorm>(f: &ParamFamily<T>, gamma: f64, s: f64, adjacent_only: bool) -> LipNorm {
    let act: Vec<(&[f64], &T)> = f.active().collect();
    let sup = act.iter().map(|(_, v)| v.payload_norm(s)).fold(0.0, f64::max);
    if act.len() < 2 {
        return LipNorm { sup, lip: 0.0, value: sup, single_point: true };
    }
    let h = f.grid.spacing;
    let mut lip: f64 = 0.0;
    for a in 0..act.len() {
        for b in a + 1..act.len() {
            let r = dist(act[a].0, act[b].0);
            if r == 0.0 || (adjacent_only && r > h * (1.0 + 1e-9)) {
                continue;
            }
            lip = lip.max(act[a].1.diff_norm(act[b].1, s) / r);
        }
    }
    LipNorm { sup, lip, value: sup + gamma * lip, single_point: false }
}
