use ndarray::{Array3, ArrayView3, Axis};

use crate::error::{Result, TribeError};

/// Block-mean resampling along time. Output step `j` covers
/// `[j/dst, (j+1)/dst)` and averages the source steps whose centers
/// `(i + 0.5)/src` fall inside it. A block with no source center (possible
/// near the tail for non-integral ratios) copies the nearest source step.
pub fn resample_audio(series: ArrayView3<f32>, src_hz: f64, dst_hz: f64) -> Result<Array3<f32>> {
    if !(dst_hz > 0.0) || src_hz < dst_hz {
        return Err(TribeError::InvalidConfig(format!(
            "resampling needs src_hz >= dst_hz > 0, got {src_hz} -> {dst_hz}"
        )));
    }
    let (t_src, layers, dim) = series.dim();
    let t_dst = ((t_src as f64 * dst_hz) / src_hz + 1e-9).floor() as usize;
    let mut out = Array3::<f32>::zeros((t_dst, layers, dim));
    if t_src == 0 {
        return Ok(out);
    }
    let first_center = |j: usize| -> usize {
        let x = (j as f64 * src_hz) / dst_hz - 0.5;
        (x - 1e-9).ceil().max(0.0) as usize
    };
    for j in 0..t_dst {
        let lo = first_center(j).min(t_src);
        let hi = first_center(j + 1).min(t_src);
        let mut slot = out.index_axis_mut(Axis(0), j);
        if hi > lo {
            let block = series.slice(ndarray::s![lo..hi, .., ..]);
            let n = (hi - lo) as f64;
            for ((l, d), v) in slot.indexed_iter_mut() {
                let sum: f64 = block.slice(ndarray::s![.., l, d]).iter().map(|&x| x as f64).sum();
                *v = (sum / n) as f32;
            }
        } else {
            let center = ((j as f64 + 0.5) * src_hz / dst_hz - 0.5).round_ties_even();
            let nearest = center.clamp(0.0, (t_src - 1) as f64) as usize;
            slot.assign(&series.index_axis(Axis(0), nearest));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifty_to_two_hz_averages_blocks_of_25() {
        let series = Array3::from_shape_fn((100, 1, 2), |(t, _, d)| (t * (d + 1)) as f32);
        let out = resample_audio(series.view(), 50.0, 2.0).unwrap();
        assert_eq!(out.dim(), (4, 1, 2));
        // mean of 0..=24 is 12
        assert_eq!(out[[0, 0, 0]], 12.0);
        assert_eq!(out[[0, 0, 1]], 24.0);
        assert_eq!(out[[3, 0, 0]], 87.0);
    }

    #[test]
    fn unit_ratio_is_identity() {
        let series = Array3::from_shape_fn((7, 2, 3), |(t, l, d)| (t * 6 + l * 3 + d) as f32 * 0.37);
        let out = resample_audio(series.view(), 2.0, 2.0).unwrap();
        assert_eq!(out, series);
    }

    #[test]
    fn constant_input_stays_constant_for_non_integral_ratio() {
        let series = Array3::from_elem((53, 2, 2), 1.75f32);
        let out = resample_audio(series.view(), 50.0 / 3.0, 2.0).unwrap();
        assert_eq!(out.dim().0, 6);
        assert!(out.iter().all(|&v| (v - 1.75).abs() < 1e-6));
    }

    #[test]
    fn upsampling_is_rejected() {
        let series = Array3::<f32>::zeros((4, 1, 1));
        assert!(resample_audio(series.view(), 1.0, 2.0).is_err());
    }
}
