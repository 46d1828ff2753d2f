//! Signals sampled on a uniform time grid.

use crate::{grid_steps, CVector, Error, Result, C64};

/// Input signal with samples at `t_k = k dt`, `k = 0..=n_steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    dt: f64,
    dim: usize,
    samples: Vec<CVector>,
}

impl Signal {
    pub fn new(dt: f64, samples: Vec<CVector>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("signal step must be positive, got {dt}")));
        }
        let dim = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("signal needs at least one sample".into()))?
            .len();
        if samples.iter().any(|s| s.len() != dim) {
            return Err(Error::Dimension("signal samples have different lengths".into()));
        }
        Ok(Self { dt, dim, samples })
    }

    pub fn zeros(dim: usize, dt: f64, n_steps: usize) -> Self {
        Self::from_fn(dim, dt, n_steps, |_| CVector::zeros(dim))
    }

    pub fn from_fn(dim: usize, dt: f64, n_steps: usize, f: impl Fn(f64) -> CVector) -> Self {
        assert!(dt > 0.0, "signal step must be positive");
        let samples = (0..=n_steps)
            .map(|k| {
                let v = f(k as f64 * dt);
                assert_eq!(v.len(), dim, "signal sample dimension");
                v
            })
            .collect();
        Self { dt, dim, samples }
    }

    /// Scalar real signal.
    pub fn scalar(dt: f64, n_steps: usize, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(1, dt, n_steps, |t| CVector::from_element(1, C64::new(f(t), 0.0)))
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps() as f64 * self.dt
    }

    pub fn samples(&self) -> &[CVector] {
        &self.samples
    }

    pub fn at(&self, k: usize) -> &CVector {
        &self.samples[k]
    }

    /// Number of steps to reach `t`, checking that `t` is on this grid and covered.
    pub fn steps_to(&self, t: f64) -> Result<usize> {
        let k = grid_steps(t, self.dt).ok_or(Error::OffGridTime { t, dt: self.dt })?;
        if k > self.n_steps() {
            return Err(Error::GridMismatch(format!(
                "signal covers [0, {}] but t = {t} was requested",
                self.horizon()
            )));
        }
        Ok(k)
    }

    /// `L2(0, T)` norm of the zero-order hold of the samples.
    pub fn l2_norm(&self) -> f64 {
        (self.dt * self.samples[..self.n_steps()].iter().map(|s| s.norm_squared()).sum::<f64>()).sqrt()
    }

    /// Prefix covering the first `n_steps` steps.
    pub fn truncated(&self, n_steps: usize) -> Self {
        Self {
            dt: self.dt,
            dim: self.dim,
            samples: self.samples[..=n_steps].to_vec(),
        }
    }

    pub fn scale(&self, a: C64) -> Self {
        Self {
            dt: self.dt,
            dim: self.dim,
            samples: self.samples.iter().map(|s| s * a).collect(),
        }
    }

    /// `self + a * other` on a shared grid.
    pub fn axpy(&self, a: C64, other: &Signal) -> Result<Self> {
        if other.dt != self.dt || other.samples.len() != self.samples.len() || other.dim != self.dim {
            return Err(Error::GridMismatch("signals live on different grids".into()));
        }
        Ok(Self {
            dt: self.dt,
            dim: self.dim,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(x, y)| x + y * a)
                .collect(),
        })
    }
}

/// Observation samples on the time grid; `None` marks a sample whose
/// extension limit did not settle.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub dt: f64,
    pub samples: Vec<Option<CVector>>,
}

impl Observation {
    pub fn gaps(&self) -> usize {
        self.samples.iter().filter(|s| s.is_none()).count()
    }

    /// Left-rectangle `L2(0, T)` norm over the non-gap samples.
    pub fn l2_norm(&self) -> f64 {
        let n = self.samples.len().saturating_sub(1);
        (self.dt
            * self.samples[..n]
                .iter()
                .flatten()
                .map(|s| s.norm_squared())
                .sum::<f64>())
        .sqrt()
    }

    /// Errors with `TooManyGaps` when more than 1% of samples are gaps.
    pub fn check_gaps(self) -> Result<Self> {
        let gaps = self.gaps();
        let total = self.samples.len();
        if gaps * 100 > total {
            return Err(Error::TooManyGaps { gaps, total });
        }
        Ok(self)
    }
}
