//! Row-wise building blocks with explicit backward passes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use super::Real;
use crate::error::{Result, TribeError};

pub(crate) const LN_EPS: f64 = 1e-5;

#[inline]
pub(crate) fn c<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("representable constant")
}

#[derive(Debug, Clone)]
pub(crate) struct LnCache<T> {
    pub xhat: Array2<T>,
    pub rstd: Array1<T>,
}

pub(crate) fn layer_norm<T: Real>(
    x: ArrayView2<T>,
    gain: ArrayView1<T>,
    bias: ArrayView1<T>,
) -> (Array2<T>, LnCache<T>) {
    let (rows, cols) = x.dim();
    let n: T = c(cols as f64);
    let eps: T = c(LN_EPS);
    let mut xhat = Array2::<T>::zeros((rows, cols));
    let mut rstd = Array1::<T>::zeros(rows);
    for ((xr, mut hr), r) in x.outer_iter().zip(xhat.outer_iter_mut()).zip(rstd.iter_mut()) {
        let mean = xr.sum() / n;
        let var = xr.fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean)) / n;
        let inv = T::one() / (var + eps).sqrt();
        *r = inv;
        Zip::from(&mut hr).and(&xr).for_each(|h, &v| *h = (v - mean) * inv);
    }
    let mut y = xhat.clone();
    y *= &gain;
    y += &bias;
    (y, LnCache { xhat, rstd })
}

/// Returns `(dx, dgain, dbias)`.
pub(crate) fn layer_norm_backward<T: Real>(
    dy: ArrayView2<T>,
    cache: &LnCache<T>,
    gain: ArrayView1<T>,
) -> (Array2<T>, Array1<T>, Array1<T>) {
    let cols = dy.ncols();
    let n: T = c(cols as f64);
    let dgain = (&dy * &cache.xhat).sum_axis(Axis(0));
    let dbias = dy.sum_axis(Axis(0));
    let mut dxhat = dy.to_owned();
    dxhat *= &gain;
    let mut dx = Array2::<T>::zeros(dy.dim());
    for (((dh, xh), mut dxr), &inv) in dxhat
        .outer_iter()
        .zip(cache.xhat.outer_iter())
        .zip(dx.outer_iter_mut())
        .zip(cache.rstd.iter())
    {
        let mean_dh = dh.sum() / n;
        let mean_dh_xh = dh.iter().zip(xh.iter()).fold(T::zero(), |a, (&d, &x)| a + d * x) / n;
        Zip::from(&mut dxr)
            .and(&dh)
            .and(&xh)
            .for_each(|o, &d, &x| *o = inv * (d - mean_dh - x * mean_dh_xh));
    }
    (dx, dgain, dbias)
}

pub(crate) fn linear<T: Real>(x: ArrayView2<T>, w: ArrayView2<T>, b: ArrayView1<T>) -> Array2<T> {
    let mut y = x.dot(&w);
    y += &b;
    y
}

/// Returns `(dx, dw, db)`; `dx` is skipped when `need_dx` is false.
pub(crate) fn linear_backward<T: Real>(
    x: ArrayView2<T>,
    w: ArrayView2<T>,
    dy: ArrayView2<T>,
    need_dx: bool,
) -> (Option<Array2<T>>, Array2<T>, Array1<T>) {
    let dw = x.t().dot(&dy);
    let db = dy.sum_axis(Axis(0));
    let dx = need_dx.then(|| dy.dot(&w.t()));
    (dx, dw, db)
}

const GELU_A: f64 = 0.044_715;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Tanh approximation of GELU.
pub(crate) fn gelu<T: Real>(x: &Array2<T>) -> Array2<T> {
    let a: T = c(GELU_A);
    let k: T = c(SQRT_2_OVER_PI);
    let half: T = c(0.5);
    x.mapv(|v| half * v * (T::one() + (k * (v + a * v * v * v)).tanh()))
}

pub(crate) fn gelu_backward<T: Real>(x: &Array2<T>, dy: &Array2<T>) -> Array2<T> {
    let a: T = c(GELU_A);
    let k: T = c(SQRT_2_OVER_PI);
    let half: T = c(0.5);
    let three: T = c(3.0);
    let mut out = Array2::<T>::zeros(x.dim());
    Zip::from(&mut out).and(x).and(dy).for_each(|o, &v, &d| {
        let t = (k * (v + a * v * v * v)).tanh();
        let grad = half * (T::one() + t) + half * v * (T::one() - t * t) * k * (T::one() + three * a * v * v);
        *o = d * grad;
    });
    out
}

pub(crate) fn softmax_rows<T: Real>(scores: &mut Array2<T>) {
    for mut row in scores.outer_iter_mut() {
        let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Segment `i` of adaptive average pooling covers input rows
/// `[floor(T·i/out), ceil(T·(i+1)/out))`.
pub fn pool_segments(in_len: usize, out_len: usize) -> Vec<(usize, usize)> {
    (0..out_len)
        .map(|i| {
            let lo = (in_len * i) / out_len;
            let hi = (in_len * (i + 1)).div_ceil(out_len);
            (lo, hi)
        })
        .collect()
}

/// Adaptive average pooling along rows, `[T_in, C] -> [out_len, C]`.
pub fn adaptive_avg_pool<T: Real>(x: ArrayView2<T>, out_len: usize) -> Result<Array2<T>> {
    let in_len = x.nrows();
    if out_len == 0 || out_len > in_len {
        return Err(TribeError::Shape(format!(
            "adaptive pooling from {in_len} to {out_len} rows"
        )));
    }
    let mut out = Array2::<T>::zeros((out_len, x.ncols()));
    for (i, (lo, hi)) in pool_segments(in_len, out_len).into_iter().enumerate() {
        let seg = x.slice(ndarray::s![lo..hi, ..]);
        let mean = seg.sum_axis(Axis(0)) / c::<T>((hi - lo) as f64);
        out.row_mut(i).assign(&mean);
    }
    Ok(out)
}

pub(crate) fn adaptive_avg_pool_backward<T: Real>(dy: ArrayView2<T>, in_len: usize) -> Array2<T> {
    let out_len = dy.nrows();
    let mut dx = Array2::<T>::zeros((in_len, dy.ncols()));
    for (i, (lo, hi)) in pool_segments(in_len, out_len).into_iter().enumerate() {
        let share = dy.row(i).mapv(|v| v / c::<T>((hi - lo) as f64));
        for r in lo..hi {
            let mut row = dx.row_mut(r);
            row += &share;
        }
    }
    dx
}
