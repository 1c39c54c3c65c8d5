//! Globally adaptive Gauss–Kronrod (7/15) quadrature for vector integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Integral {
    pub value: Vec<f64>,
    pub error: f64,
    pub intervals: usize,
}

struct Piece {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 15-point Kronrod rule with its embedded 7-point Gauss rule. The
/// error is the largest component difference.
fn kronrod<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, dim: usize) -> (Vec<f64>, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut buf = vec![0.0; dim];
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    f(center, &mut buf);
    for c in 0..dim {
        kron[c] = WGK[7] * buf[c];
        gauss[c] = WG[3] * buf[c];
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        for x in [center - dx, center + dx] {
            f(x, &mut buf);
            for c in 0..dim {
                kron[c] += WGK[j] * buf[c];
                if j % 2 == 1 {
                    gauss[c] += WG[j / 2] * buf[c];
                }
            }
        }
    }
    let mut err = 0.0f64;
    for c in 0..dim {
        kron[c] *= half;
        gauss[c] *= half;
        err = err.max((kron[c] - gauss[c]).abs());
    }
    (kron, err)
}

/// Integrates a vector-valued `f` over `[a, b]`. `f(x, out)` writes `dim`
/// components. Stops once the summed error estimate falls below
/// `max(abs_tol, rel_tol · max|I_c|)`.
pub fn integrate_vec<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    a: f64,
    b: f64,
    dim: usize,
    options: QuadratureOptions,
) -> Result<Integral> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::Quadrature(format!("invalid interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(Integral {
            value: vec![0.0; dim],
            error: 0.0,
            intervals: 0,
        });
    }
    let (value, error) = kronrod(&mut f, a, b, dim);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, error });
    loop {
        let mut total = vec![0.0; dim];
        let mut err = 0.0;
        for p in heap.iter() {
            total.iter_mut().zip(&p.value).for_each(|(t, v)| *t += v);
            err += p.error;
        }
        if !err.is_finite() || total.iter().any(|v| !v.is_finite()) {
            return Err(Error::Quadrature("integrand is not finite".into()));
        }
        let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if err <= options.abs_tol.max(options.rel_tol * scale) {
            return Ok(Integral {
                value: total,
                error: err,
                intervals: heap.len(),
            });
        }
        if heap.len() >= options.max_intervals {
            return Err(Error::Quadrature(format!(
                "error estimate {err:e} above tolerance after {} intervals",
                heap.len()
            )));
        }
        let worst = heap.pop().unwrap();
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further; accept it as is.
            return Ok(Integral {
                value: total,
                error: err,
                intervals: heap.len() + 1,
            });
        }
        for (lo, hi) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = kronrod(&mut f, lo, hi, dim);
            heap.push(Piece { a: lo, b: hi, value, error });
        }
    }
}

pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, options: QuadratureOptions) -> Result<f64> {
    Ok(integrate_vec(|x, out| out[0] = f(x), a, b, 1, options)?.value[0])
}
