use ndarray::{Array3, ArrayView3, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TribeError};
use crate::tribenet::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Mse,
    Pearson,
    SmoothL1,
    Huber,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Mse, LossKind::Pearson, LossKind::SmoothL1, LossKind::Huber];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Pearson => "pearson",
            LossKind::SmoothL1 => "smooth_l1",
            LossKind::Huber => "huber",
        }
    }
}

/// Transition point of the smooth L1 and Huber losses. At 1.0 the two
/// coincide.
pub const HUBER_DELTA: f64 = 1.0;

/// Loss over `[B, N, P]` predictions and its gradient with respect to `pred`.
///
/// The Pearson loss is `1 - mean_{b,p} r(pred[b,:,p], target[b,:,p])`, where
/// a window with zero variance on either side counts as `r = 0` and passes
/// no gradient.
pub fn compute_loss<T: Real>(
    pred: ArrayView3<T>,
    target: ArrayView3<T>,
    kind: LossKind,
) -> Result<(f64, Array3<T>)> {
    if pred.dim() != target.dim() {
        return Err(TribeError::Shape(format!(
            "loss over prediction {:?} and target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let n = pred.len();
    if n == 0 {
        return Err(TribeError::Shape("loss over an empty batch".into()));
    }
    let to64 = |v: T| v.to_f64().unwrap();
    let from64 = |v: f64| T::from_f64(v).unwrap();
    let mut grad = Array3::<T>::zeros(pred.dim());
    let loss = match kind {
        LossKind::Mse => {
            let scale = 1.0 / n as f64;
            let mut total = 0.0;
            Zip::from(&mut grad).and(&pred).and(&target).for_each(|g, &p, &t| {
                let d = to64(p) - to64(t);
                total += d * d;
                *g = from64(2.0 * d * scale);
            });
            total * scale
        }
        LossKind::SmoothL1 | LossKind::Huber => {
            let scale = 1.0 / n as f64;
            let mut total = 0.0;
            Zip::from(&mut grad).and(&pred).and(&target).for_each(|g, &p, &t| {
                let d = to64(p) - to64(t);
                let (l, dl) = if d.abs() < HUBER_DELTA {
                    (0.5 * d * d / HUBER_DELTA, d / HUBER_DELTA)
                } else {
                    (d.abs() - 0.5 * HUBER_DELTA, d.signum())
                };
                total += l;
                *g = from64(dl * scale);
            });
            total * scale
        }
        LossKind::Pearson => {
            let (b, steps, p) = pred.dim();
            if steps < 2 {
                return Err(TribeError::Shape(format!(
                    "pearson loss needs at least two time steps, got {steps}"
                )));
            }
            let scale = 1.0 / (b * p) as f64;
            let mut r_sum = 0.0;
            for bi in 0..b {
                let pb = pred.index_axis(Axis(0), bi);
                let tb = target.index_axis(Axis(0), bi);
                for pi in 0..p {
                    let x: Vec<f64> = pb.column(pi).iter().map(|&v| to64(v)).collect();
                    let y: Vec<f64> = tb.column(pi).iter().map(|&v| to64(v)).collect();
                    let mx = x.iter().sum::<f64>() / steps as f64;
                    let my = y.iter().sum::<f64>() / steps as f64;
                    let dx: Vec<f64> = x.iter().map(|v| v - mx).collect();
                    let dy: Vec<f64> = y.iter().map(|v| v - my).collect();
                    let sxx: f64 = dx.iter().map(|v| v * v).sum();
                    let syy: f64 = dy.iter().map(|v| v * v).sum();
                    if sxx <= 0.0 || syy <= 0.0 {
                        continue;
                    }
                    let sxy: f64 = dx.iter().zip(&dy).map(|(a, b)| a * b).sum();
                    let denom = (sxx * syy).sqrt();
                    let r = sxy / denom;
                    r_sum += r;
                    for i in 0..steps {
                        let dr = dy[i] / denom - r * dx[i] / sxx;
                        grad[[bi, i, pi]] = from64(-dr * scale);
                    }
                }
            }
            1.0 - r_sum * scale
        }
    };
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn batch(values: &[f64], n: usize) -> Array3<f64> {
        Array3::from_shape_vec((1, n, values.len() / n), values.to_vec()).unwrap()
    }

    #[test]
    fn identical_inputs_give_zero_loss() {
        let t = batch(&[0.5, -1.0, 2.0, 0.1, 0.3, -0.7], 3);
        for kind in LossKind::ALL {
            let (l, _) = compute_loss(t.view(), t.view(), kind).unwrap();
            assert!(l.abs() < 1e-12, "{kind:?} gave {l}");
        }
    }

    #[test]
    fn anticorrelated_pearson_loss_is_two() {
        let t = batch(&[1.0, -2.0, 1.0], 3);
        let p = t.mapv(|v| -v);
        let (l, _) = compute_loss(p.view(), t.view(), LossKind::Pearson).unwrap();
        assert!((l - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_target_contributes_one() {
        let p = batch(&[1.0, 3.0], 2);
        let t = batch(&[0.0, 0.0], 2);
        let (l, g) = compute_loss(p.view(), t.view(), LossKind::Pearson).unwrap();
        assert_eq!(l, 1.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pearson_needs_two_steps() {
        let p = batch(&[1.0, 2.0], 1);
        assert!(compute_loss(p.view(), p.view(), LossKind::Pearson).is_err());
    }

    #[test]
    fn smooth_l1_and_huber_agree_at_unit_delta() {
        let p = batch(&[0.2, 3.0, -4.0, 0.9], 2);
        let t = batch(&[0.0, 0.0, 0.5, -0.3], 2);
        let a = compute_loss(p.view(), t.view(), LossKind::SmoothL1).unwrap();
        let b = compute_loss(p.view(), t.view(), LossKind::Huber).unwrap();
        assert_eq!(a, b);
        // 0.02, 2.5, 4.0, 0.7 averaged
        assert!((a.0 - (0.02 + 2.5 + 4.0 + 0.7) / 4.0).abs() < 1e-12);
    }
}
