//! Concrete systems on `[0, 1]`: a stochastic heat equation with Neumann
//! boundary control, a one-dimensional Schrödinger analogue with Dirichlet
//! control and collocated observation, and a scalar toy system with closed
//! forms for everything.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::boundary::{BoundaryTriple, Geometry};
use crate::delay::DelayMeasure;
use crate::lift::LiftedSystem;
use crate::sde::NoiseOp;
use crate::semigroup::Metric;
use crate::{re, CMatrix, Error, Result, C64};

pub const DEFAULT_R: f64 = 1.0;
pub const DEFAULT_M: usize = 32;
pub const DEFAULT_CELLS: usize = 64;
pub const DEFAULT_HORIZON: f64 = 2.0;
pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Heat,
    Schrodinger,
    Toy,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Left,
    #[default]
    Right,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservationSpec {
    /// `y = c(x_b) X(t, x_b)` at the controlled end; `c` sampled uniformly on `[0, 1]`.
    Coefficient { c: Vec<f64> },
    /// Observation equal to the adjoint of the control operator.
    Collocated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self { a: 1.0, b: 1.0, c: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub family: Family,
    /// Number of grid cells `N`.
    #[serde(default = "default_cells")]
    pub n: usize,
    #[serde(default)]
    pub control_boundary: Endpoint,
    #[serde(default)]
    pub observation: Option<ObservationSpec>,
    /// Noise strength; the family fixes the shape.
    #[serde(default)]
    pub noise_scale: Option<f64>,
    #[serde(default)]
    pub toy: ToyParams,
    #[serde(default = "default_lambda")]
    pub lambda_ref: f64,
}

fn default_cells() -> usize {
    DEFAULT_CELLS
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

impl SystemSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            n: DEFAULT_CELLS,
            control_boundary: Endpoint::Right,
            observation: None,
            noise_scale: None,
            toy: ToyParams::default(),
            lambda_ref: DEFAULT_LAMBDA,
        }
    }

    pub fn heat() -> Self {
        Self::new(Family::Heat)
    }

    pub fn schrodinger() -> Self {
        Self::new(Family::Schrodinger)
    }

    pub fn toy() -> Self {
        Self::new(Family::Toy)
    }

    pub fn with_cells(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_noise_scale(mut self, s: f64) -> Self {
        self.noise_scale = Some(s);
        self
    }

    pub fn noise(&self) -> f64 {
        self.noise_scale.unwrap_or(match self.family {
            Family::Heat => 0.3,
            Family::Schrodinger => 0.5,
            Family::Toy => 0.3,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.family != Family::Toy && self.n < 8 {
            return Err(Error::BadSpec(format!("need at least 8 cells, got {}", self.n)));
        }
        if !self.noise().is_finite() {
            return Err(Error::BadSpec("noise scale must be finite".into()));
        }
        if !(self.lambda_ref.is_finite()) {
            return Err(Error::BadSpec("reference λ must be finite".into()));
        }
        match (self.family, &self.observation) {
            (Family::Heat, Some(ObservationSpec::Collocated)) => Err(Error::BadSpec(
                "the heat system observes through a coefficient, not collocated".into(),
            )),
            (Family::Schrodinger, Some(ObservationSpec::Coefficient { .. })) => Err(Error::BadSpec(
                "the Schrödinger analogue uses the collocated observation".into(),
            )),
            (Family::Toy, Some(_)) => Err(Error::BadSpec(
                "the toy system sets its observation through toy.c".into(),
            )),
            (_, Some(ObservationSpec::Coefficient { c })) if c.is_empty() || c.iter().any(|v| !v.is_finite()) => {
                Err(Error::BadSpec("observation coefficient needs finite samples".into()))
            }
            (Family::Toy, None) if !(self.toy.a > 0.0) => {
                Err(Error::BadSpec(format!("toy decay rate a must be positive, got {}", self.toy.a)))
            }
            _ => Ok(()),
        }
    }

    /// Builds the system with the given delay on `m` history cells.
    pub fn build(&self, nu: DelayMeasure, m: usize) -> Result<LiftedSystem> {
        self.validate()?;
        let (bt, noise, complex) = match self.family {
            Family::Heat => heat_parts(self)?,
            Family::Schrodinger => schrodinger_parts(self)?,
            Family::Toy => toy_parts(self)?,
        };
        let label = match self.family {
            Family::Toy => "toy".to_string(),
            f => format!("{f:?}-n{}", self.n).to_lowercase(),
        };
        LiftedSystem::new(bt, nu, noise, m, self.lambda_ref, label, complex)
    }
}

/// Piecewise-linear interpolation of uniform samples on `[0, 1]`.
fn coefficient_at(c: &[f64], x: f64) -> f64 {
    if c.len() == 1 {
        return c[0];
    }
    let s = x.clamp(0.0, 1.0) * (c.len() - 1) as f64;
    let i = (s.floor() as usize).min(c.len() - 2);
    let w = s - i as f64;
    c[i] * (1.0 - w) + c[i + 1] * w
}

/// Maps a computational coordinate (controlled end at 1) to the physical one.
fn physical(spec: &SystemSpec, s: f64) -> f64 {
    match spec.control_boundary {
        Endpoint::Right => s,
        Endpoint::Left => 1.0 - s,
    }
}

fn heat_parts(spec: &SystemSpec) -> Result<(BoundaryTriple, NoiseOp, bool)> {
    let cells = spec.n;
    let n = cells;
    let h = 1.0 / cells as f64;
    let ih2 = 1.0 / (h * h);
    // Free nodes 0..N-1, boundary slot = node N.
    let mut full = CMatrix::zeros(n, n + 1);
    full[(0, 0)] = re(-2.0 * ih2);
    full[(0, 1)] = re(2.0 * ih2);
    for i in 1..n {
        full[(i, i - 1)] = re(ih2);
        full[(i, i)] = re(-2.0 * ih2);
        full[(i, i + 1)] = re(ih2);
    }
    let mut trace = CMatrix::zeros(1, n + 1);
    trace[(0, n)] = re(3.0 / (2.0 * h));
    trace[(0, n - 1)] = re(-4.0 / (2.0 * h));
    trace[(0, n - 2)] = re(1.0 / (2.0 * h));
    let c = match &spec.observation {
        Some(ObservationSpec::Coefficient { c }) => c.clone(),
        _ => vec![1.0],
    };
    let xb = physical(spec, 1.0);
    let mut obs = CMatrix::zeros(1, n + 1);
    obs[(0, n)] = re(coefficient_at(&c, xb));
    let mut weights = vec![h; n];
    weights[0] = 0.5 * h;
    weights[n - 1] = 1.5 * h;
    let metric = Metric::weights(weights.clone())?;
    let positions: Vec<f64> = (0..n).map(|j| physical(spec, j as f64 * h)).collect();
    let geometry = Geometry {
        cells,
        h,
        free_positions: positions.clone(),
        boundary_positions: vec![xb],
    };
    let bt = BoundaryTriple::new(full, trace, obs, metric.clone(), geometry, "heat")?;
    let noise = NoiseOp::kernel(|x, y| (-(x - y) * (x - y)).exp(), &positions, &weights, &metric)?
        .scaled(spec.noise());
    Ok((bt, noise, false))
}

/// Tridiagonal second difference with homogeneous Dirichlet data on `n` interior nodes.
pub fn dirichlet_laplacian(n: usize, h: f64) -> DMatrix<f64> {
    let ih2 = 1.0 / (h * h);
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            -2.0 * ih2
        } else if i.abs_diff(j) == 1 {
            ih2
        } else {
            0.0
        }
    })
}

fn schrodinger_parts(spec: &SystemSpec) -> Result<(BoundaryTriple, NoiseOp, bool)> {
    let cells = spec.n;
    let n = cells - 1;
    let h = 1.0 / cells as f64;
    let lap = dirichlet_laplacian(n, h);
    let minus_i = C64::new(0.0, -1.0);
    // Free nodes 1..N-1, boundary slot = node N, node 0 held at zero.
    let mut full = CMatrix::zeros(n, n + 1);
    full.view_mut((0, 0), (n, n)).copy_from(&(lap.map(re) * minus_i));
    full[(n - 1, n)] = minus_i * (1.0 / (h * h));
    let mut trace = CMatrix::zeros(1, n + 1);
    trace[(0, n)] = re(1.0);
    // i * one-sided normal derivative of w = Δ_h^{-1} x at the controlled end (w_N = 0).
    let mut stencil = nalgebra::DVector::<f64>::zeros(n);
    stencil[n - 1] = -4.0 / (2.0 * h);
    stencil[n - 2] = 1.0 / (2.0 * h);
    let lap_lu = lap.clone().lu();
    let row = lap_lu
        .solve(&stencil)
        .ok_or_else(|| Error::BadSpec("discrete Laplacian is singular".into()))?;
    let mut obs = CMatrix::zeros(1, n + 1);
    for j in 0..n {
        obs[(0, j)] = C64::new(0.0, row[j]);
    }
    let neg_inv = lap_lu
        .try_inverse()
        .ok_or_else(|| Error::BadSpec("discrete Laplacian is singular".into()))?
        * (-h);
    let gram = (&neg_inv + neg_inv.transpose()) * 0.5;
    let metric = Metric::gram(gram)?;
    let positions: Vec<f64> = (1..cells).map(|j| physical(spec, j as f64 * h)).collect();
    let geometry = Geometry {
        cells,
        h,
        free_positions: positions.clone(),
        boundary_positions: vec![physical(spec, 1.0)],
    };
    let bt = BoundaryTriple::new(full, trace, obs, metric.clone(), geometry, "schrodinger")?;
    let q: Vec<f64> = positions.iter().map(|x| spec.noise() * (1.0 + x)).collect();
    let noise = NoiseOp::multiplication(&q, &metric)?;
    Ok((bt, noise, true))
}

fn toy_parts(spec: &SystemSpec) -> Result<(BoundaryTriple, NoiseOp, bool)> {
    let ToyParams { a, b, c } = spec.toy;
    let full = CMatrix::from_row_slice(1, 2, &[re(-a), re(b)]);
    let trace = CMatrix::from_row_slice(1, 2, &[re(0.0), re(1.0)]);
    let obs = CMatrix::from_row_slice(1, 2, &[re(c), re(0.0)]);
    let metric = Metric::euclidean(1);
    let geometry = Geometry {
        cells: 1,
        h: 1.0,
        free_positions: vec![0.0],
        boundary_positions: vec![1.0],
    };
    let bt = BoundaryTriple::new(full, trace, obs, metric.clone(), geometry, "toy")?;
    let noise = NoiseOp::multiplication(&[spec.noise()], &metric)?;
    Ok((bt, noise, false))
}

fn check_family(spec: &SystemSpec, family: Family) -> Result<()> {
    if spec.family != family {
        return Err(Error::BadSpec(format!(
            "expected family {family:?}, got {:?}",
            spec.family
        )));
    }
    Ok(())
}

/// Heat system with the default delay `δ_{-r}` on `m = 32` cells.
pub fn make_heat(spec: &SystemSpec) -> Result<LiftedSystem> {
    check_family(spec, Family::Heat)?;
    spec.build(DelayMeasure::dead_time(DEFAULT_R, 1), DEFAULT_M)
}

pub fn make_schrodinger(spec: &SystemSpec) -> Result<LiftedSystem> {
    check_family(spec, Family::Schrodinger)?;
    spec.build(DelayMeasure::dead_time(DEFAULT_R, 1), DEFAULT_M)
}

pub fn make_toy(spec: &SystemSpec) -> Result<LiftedSystem> {
    check_family(spec, Family::Toy)?;
    spec.build(DelayMeasure::dead_time(DEFAULT_R, 1), DEFAULT_M)
}

/// `||C - B^†||` in the state metric: how far the observation is from the exact adjoint of the control.
pub fn collocation_defect(bt: &BoundaryTriple) -> (f64, f64) {
    let gram = bt.metric().gram_matrix();
    let b_adj = bt.b_matrix().adjoint() * gram;
    let inv_half = bt.metric().inv_half();
    let defect = ((bt.c_matrix() - &b_adj) * inv_half).singular_values().max();
    let scale = (&b_adj * inv_half).singular_values().max();
    (defect, scale)
}
