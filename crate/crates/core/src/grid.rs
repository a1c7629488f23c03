//! Multi-axis FFT on cubic grids, with a per-thread plan cache.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

type Plan = Arc<dyn Fft<f64>>;

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Plan>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, inverse: bool) -> Plan {
    PLANS.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        cache
            .entry((len, inverse))
            .or_insert_with(|| {
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    })
}

/// Unnormalized transform along `axis` of a row-major array with the given dims.
/// Forward uses e^{-2πi nk/M}, inverse e^{+2πi nk/M}.
pub fn fft_axis(data: &mut [Complex64], dims: &[usize], axis: usize, inverse: bool) {
    let len = dims[axis];
    if len <= 1 {
        return;
    }
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let fft = plan(len, inverse);
    if inner == 1 {
        fft.process(data);
        return;
    }
    let mut line = vec![Complex64::new(0.0, 0.0); len];
    for o in 0..outer {
        let base = o * len * inner;
        for i in 0..inner {
            for k in 0..len {
                line[k] = data[base + k * inner + i];
            }
            fft.process(&mut line);
            for k in 0..len {
                data[base + k * inner + i] = line[k];
            }
        }
    }
}

pub fn fft_nd(data: &mut [Complex64], dims: &[usize], inverse: bool) {
    for axis in 0..dims.len() {
        fft_axis(data, dims, axis, inverse);
    }
}

/// Index of a signed frequency on an M-periodic axis.
#[inline]
pub fn wrap(k: i64, m: usize) -> usize {
    k.rem_euclid(m as i64) as usize
}
