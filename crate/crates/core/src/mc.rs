//! Monte Carlo plumbing: counter-derived random streams and mean/stderr
//! estimates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::io::KeyValueReport;

/// Independent generator for item `index` of a run seeded with `seed`.
///
/// Streams depend only on `(seed, index)`, so parallel loops give the same
/// numbers whatever the scheduling.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A point estimate with its one-sigma standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64) -> Self {
        Self { value, stderr }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    /// Sample mean and `sd / √n`, summed in order (bitwise reproducible).
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self::new(f64::NAN, f64::NAN);
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self::new(mean, 0.0);
        }
        let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        Self::new(mean, (ss / (n - 1) as f64 / n as f64).sqrt())
    }

    /// `|value|` with the stderr carried over unchanged (delta method).
    pub fn abs(self) -> Self {
        Self::new(self.value.abs(), self.stderr)
    }

    /// Value measured in units of its stderr.
    pub fn z(&self) -> f64 {
        self.value / self.stderr
    }

    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }

    pub fn push_into(&self, report: &mut KeyValueReport, key: &str) {
        report.push_num(key, self.value);
        report.push_num(format!("{key}_stderr"), self.stderr);
    }
}
