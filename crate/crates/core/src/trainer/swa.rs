use crate::tribenet::Real;

/// Running arithmetic mean of parameter snapshots, summed in f64.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SwaAccumulator {
    sum: Vec<f64>,
    count: usize,
}

impl SwaAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fold<T: Real>(&mut self, params: &[T]) {
        if self.sum.is_empty() {
            self.sum = vec![0.0; params.len()];
        }
        assert_eq!(self.sum.len(), params.len(), "snapshot size changed");
        for (s, p) in self.sum.iter_mut().zip(params) {
            *s += p.to_f64().unwrap();
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean<T: Real>(&self) -> Option<Vec<T>> {
        if self.count == 0 {
            return None;
        }
        let n = self.count as f64;
        Some(self.sum.iter().map(|s| T::from_f64(s / n).unwrap()).collect())
    }
}
