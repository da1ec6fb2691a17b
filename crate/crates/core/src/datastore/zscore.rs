use ndarray::Array2;

use super::BoldSeries;
use crate::error::{Result, TribeError};

/// Parcels whose column was constant and therefore emitted as zeros.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ZScoreReport {
    pub constant_parcels: Vec<usize>,
}

/// Z-scores every parcel column of a session with its own mean and
/// population standard deviation. Constant columns become zeros.
pub fn zscore_session(bold: &BoldSeries) -> Result<(BoldSeries, ZScoreReport)> {
    let mut data = bold.data.clone();
    let constant_parcels = zscore_columns(&mut data)?;
    if !constant_parcels.is_empty() {
        log::warn!(
            "session {}: {} constant parcel column(s) z-scored to zero",
            bold.session_id,
            constant_parcels.len()
        );
    }
    Ok((
        BoldSeries {
            data,
            meta: bold.meta,
            session_id: bold.session_id.clone(),
            subject_id: bold.subject_id.clone(),
        },
        ZScoreReport { constant_parcels },
    ))
}

pub(crate) fn zscore_columns(data: &mut Array2<f32>) -> Result<Vec<usize>> {
    let rows = data.nrows();
    if rows < 2 {
        return Err(TribeError::Shape(format!(
            "z-scoring needs at least 2 TRs, got {rows}"
        )));
    }
    let mut constant = Vec::new();
    for (p, mut col) in data.columns_mut().into_iter().enumerate() {
        let n = rows as f64;
        let mean = col.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = col.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if std <= 1e-9 * mean.abs().max(1.0) {
            col.fill(0.0);
            constant.push(p);
        } else {
            col.mapv_inplace(|v| ((v as f64 - mean) / std) as f32);
        }
    }
    Ok(constant)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::BoldMeta;
    use ndarray::array;

    fn series(data: Array2<f32>) -> BoldSeries {
        BoldSeries {
            data,
            meta: BoldMeta {
                num_parcels: 1,
                tr_seconds: 1.49,
            },
            session_id: "s".into(),
            subject_id: "a".into(),
        }
    }

    #[test]
    fn three_values_use_population_std() {
        let (z, report) = zscore_session(&series(array![[1.0], [2.0], [3.0]])).unwrap();
        let expected = [-1.224_744_9, 0.0, 1.224_744_9];
        for (got, want) in z.data.iter().zip(expected) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
        assert!(report.constant_parcels.is_empty());
    }

    #[test]
    fn constant_column_becomes_zero_with_warning() {
        let (z, report) = zscore_session(&series(array![[5.0], [5.0], [5.0]])).unwrap();
        assert!(z.data.iter().all(|&v| v == 0.0));
        assert_eq!(report.constant_parcels, vec![0]);
    }

    #[test]
    fn normalized_input_is_unchanged() {
        let s = 1.224_744_9f32;
        let input = array![[-s], [0.0], [s]];
        let (z, _) = zscore_session(&series(input.clone())).unwrap();
        for (a, b) in z.data.iter().zip(input.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn single_tr_is_rejected() {
        assert!(zscore_session(&series(array![[1.0, 2.0]])).is_err());
    }
}
