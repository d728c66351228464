//! Seed aggregation: mean with a two-sided 95% Student-t half-width.

use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    /// Absent for fewer than two values.
    pub half_width: Option<f64>,
}

pub const CONFIDENCE: f64 = 0.95;

/// `None` only for an empty slice.
pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    if values.iter().all(|v| *v == values[0]) {
        let half_width = (n >= 2).then_some(0.0);
        return Some(Aggregate {
            n,
            mean: values[0],
            half_width,
        });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let half_width = (n >= 2).then(|| {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("degrees of freedom are positive")
            .inverse_cdf(0.5 + CONFIDENCE / 2.0);
        t * var.sqrt() / (n as f64).sqrt()
    });
    Some(Aggregate { n, mean, half_width })
}

impl std::fmt::Display for Aggregate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.half_width {
            Some(h) => write!(f, "{:.6e} ± {:.6e} (n={})", self.mean, h, self.n),
            None => write!(f, "{:.6e} (n={})", self.mean, self.n),
        }
    }
}
