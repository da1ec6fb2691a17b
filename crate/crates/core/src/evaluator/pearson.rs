use ndarray::ArrayView1;

use crate::error::{Result, TribeError};

/// Product-moment correlation. Returns NaN when either input has zero
/// variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(TribeError::Shape(format!(
            "pearson over vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(TribeError::Shape("pearson needs at least two samples".into()));
    }
    Ok(pearson_iter(x.iter().copied(), y.iter().copied(), x.len()))
}

pub(crate) fn pearson_columns(x: ArrayView1<f32>, y: ArrayView1<f32>) -> f64 {
    pearson_iter(
        x.iter().map(|&v| v as f64),
        y.iter().map(|&v| v as f64),
        x.len(),
    )
}

fn pearson_iter<I, J>(x: I, y: J, n: usize) -> f64
where
    I: Iterator<Item = f64> + Clone,
    J: Iterator<Item = f64> + Clone,
{
    let nf = n as f64;
    let mx = x.clone().sum::<f64>() / nf;
    let my = y.clone().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return f64::NAN;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}
