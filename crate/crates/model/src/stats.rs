//! Mean and covariance of activation vectors.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("no activation vectors")]
    Empty,
    #[error("vector {index} has length {got}, expected {expected}")]
    Ragged { index: usize, got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationStats {
    pub mean: Vec<f64>,
    /// Row-major `dim × dim`, unbiased (n − 1) normalization.
    pub cov: Vec<f64>,
    pub count: usize,
}

impl ActivationStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cov_at(&self, i: usize, j: usize) -> f64 {
        self.cov[i * self.dim() + j]
    }

    /// Sample mean and covariance. A single vector gives zero covariance.
    pub fn from_vectors(vectors: &[Vec<f64>]) -> Result<ActivationStats, StatsError> {
        let first = vectors.first().ok_or(StatsError::Empty)?;
        let d = first.len();
        for (index, v) in vectors.iter().enumerate() {
            if v.len() != d {
                return Err(StatsError::Ragged {
                    index,
                    got: v.len(),
                    expected: d,
                });
            }
        }
        let n = vectors.len();
        let mut mean = vec![0.0; d];
        for v in vectors {
            mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = vec![0.0; d * d];
        if n > 1 {
            for v in vectors {
                for i in 0..d {
                    let di = v[i] - mean[i];
                    for j in i..d {
                        cov[i * d + j] += di * (v[j] - mean[j]);
                    }
                }
            }
            for i in 0..d {
                for j in i..d {
                    let c = cov[i * d + j] / (n - 1) as f64;
                    cov[i * d + j] = c;
                    cov[j * d + i] = c;
                }
            }
        }
        Ok(ActivationStats { mean, cov, count: n })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_hand_computation() {
        let s = ActivationStats::from_vectors(&[vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 4.0]]).unwrap();
        assert_eq!(s.mean, vec![3.0, 4.0]);
        // var x = 4, var y = 4, cov = (−2·−2 + 0 + 2·0)/2 = 2
        assert_eq!(s.cov, vec![4.0, 2.0, 2.0, 4.0]);
        assert_eq!(s.count, 3);
    }

    #[test]
    fn errors() {
        assert_eq!(ActivationStats::from_vectors(&[]), Err(StatsError::Empty));
        assert!(matches!(
            ActivationStats::from_vectors(&[vec![1.0], vec![1.0, 2.0]]),
            Err(StatsError::Ragged { index: 1, .. })
        ));
    }
}
