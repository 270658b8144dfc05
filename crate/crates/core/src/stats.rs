//! Confidence intervals used by the simulator reports.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Sample mean and unbiased standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Two-sided Student-t interval for the mean; `None` with fewer than two
/// samples.
pub fn t_interval(xs: &[f64], confidence: f64) -> Option<Interval> {
    if xs.len() < 2 {
        return None;
    }
    let (mean, sd) = mean_sd(xs);
    let dof = (xs.len() - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, dof)
        .expect("dof >= 1")
        .inverse_cdf(0.5 + 0.5 * confidence);
    let hw = t * sd / (xs.len() as f64).sqrt();
    Some(Interval {
        estimate: mean,
        lower: mean - hw,
        upper: mean + hw,
    })
}

fn z(confidence: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + 0.5 * confidence)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson(successes: u64, trials: u64, confidence: f64) -> Option<Interval> {
    if trials == 0 {
        return None;
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = z(confidence);
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let hw = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Some(Interval {
        estimate: p,
        lower: (centre - hw).max(0.0),
        upper: (centre + hw).min(1.0),
    })
}

/// Exact (Garwood) interval for a Poisson mean from one observed count.
pub fn garwood(count: u64, confidence: f64) -> Interval {
    let alpha = 1.0 - confidence;
    let x = count as f64;
    let lower = if count == 0 {
        0.0
    } else {
        ChiSquared::new(2.0 * x).expect("dof > 0").inverse_cdf(alpha / 2.0) / 2.0
    };
    let upper = ChiSquared::new(2.0 * x + 2.0)
        .expect("dof > 0")
        .inverse_cdf(1.0 - alpha / 2.0)
        / 2.0;
    Interval {
        estimate: x,
        lower,
        upper,
    }
}
