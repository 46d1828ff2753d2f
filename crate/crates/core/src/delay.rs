//! The input history on `[-r, 0]`: its left-shift semigroup, the delay
//! functional `L g = ∫ dμ(θ) g(θ)`, and the exponential boundary elements.
//!
//! Histories are sampled at the nodes `θ_j = -r + j r/m`, `j = 0..=m`. With
//! the time step locked to `r/m` the shift is exact on the grid.

use serde::{Deserialize, Serialize};

use crate::signal::Signal;
use crate::{grid_steps, re, CMatrix, CVector, Error, Result, C64};

/// Node values of a `U`-valued function on `[-r, 0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HistorySegment {
    r: f64,
    m: usize,
    u_dim: usize,
    values: Vec<CVector>,
}

impl HistorySegment {
    pub fn new(r: f64, m: usize, values: Vec<CVector>) -> Result<Self> {
        check_grid(r, m)?;
        if values.len() != m + 1 {
            return Err(Error::Dimension(format!(
                "history with m = {m} cells needs {} samples, got {}",
                m + 1,
                values.len()
            )));
        }
        let u_dim = values[0].len();
        if values.iter().any(|v| v.len() != u_dim) {
            return Err(Error::Dimension("history samples have different lengths".into()));
        }
        Ok(Self { r, m, u_dim, values })
    }

    pub fn zeros(r: f64, m: usize, u_dim: usize) -> Self {
        Self::from_fn(r, m, u_dim, |_| CVector::zeros(u_dim))
    }

    pub fn from_fn(r: f64, m: usize, u_dim: usize, f: impl Fn(f64) -> CVector) -> Self {
        check_grid(r, m).expect("history grid");
        let dt = r / m as f64;
        let values = (0..=m)
            .map(|j| {
                let v = f(-r + j as f64 * dt);
                assert_eq!(v.len(), u_dim, "history sample dimension");
                v
            })
            .collect();
        Self { r, m, u_dim, values }
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn u_dim(&self) -> usize {
        self.u_dim
    }

    pub fn dt(&self) -> f64 {
        self.r / self.m as f64
    }

    pub fn theta(&self, j: usize) -> f64 {
        -self.r + j as f64 * self.dt()
    }

    pub fn values(&self) -> &[CVector] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [CVector] {
        &mut self.values
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.m == other.m && self.u_dim == other.u_dim && self.r == other.r
    }

    /// Trapezoidal `L2(-r, 0)` norm.
    pub fn l2_norm(&self) -> f64 {
        let dt = self.dt();
        let inner: f64 = self.values[1..self.m].iter().map(|v| v.norm_squared()).sum();
        let ends = 0.5 * (self.values[0].norm_squared() + self.values[self.m].norm_squared());
        (dt * (inner + ends)).sqrt()
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, a: C64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= a);
        out
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: C64, other: &Self) -> Result<Self> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch("history segments on different grids".into()));
        }
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v += w * a;
        }
        Ok(out)
    }

    /// Left shift by `t`: `g(t + θ)` for `θ < -t`, zero on `[-t, 0]`.
    pub fn shift_apply(&self, t: f64) -> Result<Self> {
        let k = grid_steps(t, self.dt()).ok_or(Error::OffGridTime { t, dt: self.dt() })?;
        Ok(self.shifted_by(k))
    }

    /// Shift by `k` grid steps.
    pub fn shifted_by(&self, k: usize) -> Self {
        if k == 0 {
            return self.clone();
        }
        let m = self.m;
        let values = (0..=m)
            .map(|j| {
                if j + k < m {
                    self.values[j + k].clone()
                } else {
                    CVector::zeros(self.u_dim)
                }
            })
            .collect();
        Self { values, ..*self }
    }
}

fn check_grid(r: f64, m: usize) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidArgument(format!("delay horizon must be positive, got {r}")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("history needs at least one cell".into()));
    }
    Ok(())
}

/// Segment holding `u(t + θ)` on `[-min(t, r), 0]` and zero before.
pub fn phi_shift(t: f64, u: &Signal, r: f64, m: usize) -> Result<HistorySegment> {
    check_grid(r, m)?;
    let dt = r / m as f64;
    if (u.dt() - dt).abs() > 1e-12 * dt {
        return Err(Error::GridMismatch(format!(
            "signal step {} differs from history step {dt}",
            u.dt()
        )));
    }
    let k = u.steps_to(t)?;
    let u_dim = u.dim();
    let values = (0..=m)
        .map(|j| {
            if j + k >= m {
                u.at(j + k - m).clone()
            } else {
                CVector::zeros(u_dim)
            }
        })
        .collect();
    HistorySegment::new(r, m, values)
}

/// Samples of `θ ↦ e^{λθ} v`.
pub fn e_lambda(lambda: C64, v: &CVector, r: f64, m: usize) -> HistorySegment {
    HistorySegment::from_fn(r, m, v.len(), |theta| v * (lambda * theta).exp())
}

/// Checks `U_{t+s} = S(s) U_t + Φ_s(u(t + ·))` exactly on the grid.
pub fn history_cocycle_check(u: &Signal, t: f64, s: f64, r: f64, m: usize) -> Result<bool> {
    let direct = phi_shift(t + s, u, r, m)?;
    let at_t = phi_shift(t, u, r, m)?;
    let kt = u.steps_to(t)?;
    if u.steps_to(t + s)? == kt {
        return Ok(true);
    }
    let tail = Signal::new(u.dt(), u.samples()[kt..].to_vec())?;
    let fresh = phi_shift(s, &tail, r, m)?;
    let propagated = at_t.shift_apply(s)?.axpy(re(1.0), &fresh)?;
    Ok(direct == propagated)
}

/// Scalar profile of a delay density, from a fixed catalogue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// `p(θ) = value`.
    Const { value: f64 },
    /// `p(θ) = scale · exp(rate · θ)`.
    Exp { scale: f64, rate: f64 },
    /// Piecewise-linear interpolation of `(theta, value)` pairs covering `[-r, 0]`.
    Table { theta: Vec<f64>, value: Vec<f64> },
}

impl Profile {
    pub fn eval(&self, theta: f64) -> f64 {
        match self {
            Profile::Const { value } => *value,
            Profile::Exp { scale, rate } => scale * (rate * theta).exp(),
            Profile::Table { theta: ts, value } => {
                let i = ts.partition_point(|&x| x <= theta).clamp(1, ts.len() - 1);
                let (t0, t1) = (ts[i - 1], ts[i]);
                let w = (theta - t0) / (t1 - t0);
                value[i - 1] * (1.0 - w) + value[i] * w
            }
        }
    }

    fn validate(&self, r: f64) -> Result<()> {
        match self {
            Profile::Const { value } if !value.is_finite() => {
                Err(Error::BadMeasure("density value must be finite".into()))
            }
            Profile::Exp { scale, rate } if !scale.is_finite() || !rate.is_finite() => {
                Err(Error::BadMeasure("density parameters must be finite".into()))
            }
            Profile::Table { theta, value } => {
                if theta.len() < 2 || theta.len() != value.len() {
                    return Err(Error::BadMeasure(
                        "density table needs at least two (theta, value) pairs of equal length".into(),
                    ));
                }
                if theta.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::BadMeasure("density table theta must be increasing".into()));
                }
                let tol = 1e-12 * r;
                if theta[0] > -r + tol || *theta.last().unwrap() < -tol {
                    return Err(Error::BadMeasure(format!(
                        "density table must cover [-{r}, 0]"
                    )));
                }
                if value.iter().any(|v| !v.is_finite()) {
                    return Err(Error::BadMeasure("density table values must be finite".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `∫_{-r}^0 |p(θ)| dθ`.
    pub fn abs_integral(&self, r: f64) -> f64 {
        match self {
            Profile::Const { value } => value.abs() * r,
            Profile::Exp { scale, rate } => {
                if rate.abs() * r < 1e-8 {
                    scale.abs() * r
                } else {
                    scale.abs() * (1.0 - (-rate * r).exp()) / rate
                }
            }
            Profile::Table { .. } => {
                // Exact for the piecewise-linear interpolant: integrate |p| per
                // piece between breakpoints clipped to [-r, 0], splitting at roots.
                let Profile::Table { theta, .. } = self else { unreachable!() };
                let mut knots: Vec<f64> = theta.iter().copied().filter(|&t| t > -r && t < 0.0).collect();
                knots.insert(0, -r);
                knots.push(0.0);
                knots
                    .windows(2)
                    .map(|w| {
                        let (a, b) = (w[0], w[1]);
                        let (pa, pb) = (self.eval(a), self.eval(b));
                        if pa * pb >= 0.0 {
                            0.5 * (pa.abs() + pb.abs()) * (b - a)
                        } else {
                            let root = a + (b - a) * pa.abs() / (pa.abs() + pb.abs());
                            0.5 * pa.abs() * (root - a) + 0.5 * pb.abs() * (b - root)
                        }
                    })
                    .sum()
            }
        }
    }
}

/// Point mass `weight · δ_θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub theta: f64,
    pub weight: CMatrix,
}

/// Absolutely continuous part `p(θ) · weight dθ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Density {
    pub profile: Profile,
    pub weight: CMatrix,
}

/// Operator-valued Stieltjes measure on `[-r, 0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayMeasure {
    r: f64,
    u_dim: usize,
    atoms: Vec<Atom>,
    density: Option<Density>,
    no_delay: bool,
}

impl DelayMeasure {
    /// `no_delay` allows an atom at `θ = 0`; every other measure must be continuous at zero.
    pub fn new(
        r: f64,
        u_dim: usize,
        atoms: Vec<Atom>,
        density: Option<Density>,
        no_delay: bool,
    ) -> Result<Self> {
        check_grid(r, 1).map_err(|e| Error::BadMeasure(e.to_string()))?;
        if u_dim == 0 {
            return Err(Error::BadMeasure("boundary space dimension must be positive".into()));
        }
        let tol = 1e-12 * r;
        for a in &atoms {
            if !(a.theta >= -r - tol && a.theta <= tol) {
                return Err(Error::BadMeasure(format!("atom at {} lies outside [-{r}, 0]", a.theta)));
            }
            if a.weight.shape() != (u_dim, u_dim) {
                return Err(Error::BadMeasure(format!(
                    "atom weight must be {u_dim}x{u_dim}, got {:?}",
                    a.weight.shape()
                )));
            }
            if a.theta.abs() <= tol && !no_delay {
                return Err(Error::BadMeasure(
                    "atom at theta = 0 requires the no-delay flag".into(),
                ));
            }
        }
        if let Some(d) = &density {
            d.profile.validate(r)?;
            if d.weight.shape() != (u_dim, u_dim) {
                return Err(Error::BadMeasure(format!(
                    "density weight must be {u_dim}x{u_dim}, got {:?}",
                    d.weight.shape()
                )));
            }
        }
        Ok(Self {
            r,
            u_dim,
            atoms,
            density,
            no_delay,
        })
    }

    /// `δ_θ` with identity weight.
    pub fn point(r: f64, u_dim: usize, theta: f64) -> Result<Self> {
        let atom = Atom {
            theta,
            weight: CMatrix::identity(u_dim, u_dim),
        };
        Self::new(r, u_dim, vec![atom], None, false)
    }

    /// `δ_{-r}`: the input arrives exactly `r` late.
    pub fn dead_time(r: f64, u_dim: usize) -> Self {
        Self::point(r, u_dim, -r).expect("dead-time measure is valid")
    }

    /// `δ_0` with the no-delay flag.
    pub fn no_delay(r: f64, u_dim: usize) -> Self {
        let atom = Atom {
            theta: 0.0,
            weight: CMatrix::identity(u_dim, u_dim),
        };
        Self::new(r, u_dim, vec![atom], None, true).expect("no-delay measure is valid")
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn u_dim(&self) -> usize {
        self.u_dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&Density> {
        self.density.as_ref()
    }

    pub fn is_no_delay(&self) -> bool {
        self.no_delay
    }

    /// `|ν|([-r, 0])` with spectral norms on the weights.
    pub fn total_variation(&self) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| spectral_norm(&a.weight)).sum();
        let dens = self
            .density
            .as_ref()
            .map_or(0.0, |d| spectral_norm(&d.weight) * d.profile.abs_integral(self.r));
        atoms + dens
    }

    /// Node weights of `L` on the grid with `m` cells.
    pub fn stencil(&self, m: usize) -> Result<DelayStencil> {
        check_grid(self.r, m)?;
        let dt = self.r / m as f64;
        let mut weights = vec![CMatrix::zeros(self.u_dim, self.u_dim); m + 1];
        let mut max_snap: f64 = 0.0;
        for a in &self.atoms {
            let j = ((a.theta + self.r) / dt).round() as usize;
            let j = j.min(m);
            let snap = (-self.r + j as f64 * dt - a.theta).abs();
            if snap > 0.5 * dt * (1.0 + 1e-12) {
                return Err(Error::GridMismatch(format!(
                    "atom at {} is {snap} from the nearest node (step {dt})",
                    a.theta
                )));
            }
            if j == m && !self.no_delay {
                return Err(Error::GridMismatch(format!(
                    "atom at {} snaps onto theta = 0 at step {dt}; refine the grid or flag no-delay",
                    a.theta
                )));
            }
            max_snap = max_snap.max(snap);
            weights[j] += &a.weight;
        }
        if let Some(d) = &self.density {
            for (j, w) in weights.iter_mut().enumerate() {
                let theta = -self.r + j as f64 * dt;
                let trap = if j == 0 || j == m { 0.5 * dt } else { dt };
                *w += &d.weight * re(trap * d.profile.eval(theta));
            }
        }
        Ok(DelayStencil {
            r: self.r,
            m,
            weights,
            max_snap,
        })
    }
}

fn spectral_norm(w: &CMatrix) -> f64 {
    w.clone().singular_values().max()
}

/// The delay functional `L` bound to a history grid.
#[derive(Clone, Debug)]
pub struct DelayStencil {
    r: f64,
    m: usize,
    weights: Vec<CMatrix>,
    max_snap: f64,
}

impl DelayStencil {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn weights(&self) -> &[CMatrix] {
        &self.weights
    }

    /// Largest distance an atom was moved to reach a node.
    pub fn max_snap(&self) -> f64 {
        self.max_snap
    }

    /// Weight sitting on the node `θ = 0`.
    pub fn weight_at_zero(&self) -> &CMatrix {
        &self.weights[self.m]
    }

    /// `Σ_j ||W_j||`, the grid version of the total variation.
    pub fn variation(&self) -> f64 {
        self.weights.iter().map(spectral_norm).sum()
    }

    pub fn apply(&self, g: &HistorySegment) -> Result<CVector> {
        if g.m() != self.m || (g.r() - self.r).abs() > 1e-12 * self.r {
            return Err(Error::GridMismatch(format!(
                "history grid (r = {}, m = {}) does not match functional grid (r = {}, m = {})",
                g.r(),
                g.m(),
                self.r,
                self.m
            )));
        }
        Ok(self.apply_nodes(g.values(), true))
    }

    /// `Σ_j W_j g_j`, optionally leaving out the node at `θ = 0`.
    pub fn apply_nodes(&self, values: &[CVector], include_zero: bool) -> CVector {
        let last = if include_zero { self.m + 1 } else { self.m };
        let u_dim = self.weights[0].nrows();
        let mut out = CVector::zeros(u_dim);
        for (w, g) in self.weights[..last].iter().zip(values) {
            if w.iter().any(|c| *c != C64::new(0.0, 0.0)) {
                out += w * g;
            }
        }
        out
    }
}

/// `L g` for a measure and a segment on the segment's own grid.
pub fn delay_functional(nu: &DelayMeasure, g: &HistorySegment) -> Result<CVector> {
    if (nu.r() - g.r()).abs() > 1e-12 * nu.r() || nu.u_dim() != g.u_dim() {
        return Err(Error::GridMismatch(
            "measure and history disagree on horizon or boundary dimension".into(),
        ));
    }
    nu.stencil(g.m())?.apply(g)
}

/// `max sqrt(∫_0^α ||L S(t) g||² dt) / ||g||_{L2}` over the probe segments, with the
/// time integral taken on the grid: the admissibility constant of `L` for the
/// left shift as far as the probes can see it.
pub fn shift_observation_gamma(nu: &DelayMeasure, alpha: f64, probes: &[HistorySegment]) -> Result<f64> {
    let mut best: f64 = 0.0;
    for g in probes {
        let stencil = nu.stencil(g.m())?;
        let n = grid_steps(alpha, g.dt()).ok_or(Error::OffGridTime { t: alpha, dt: g.dt() })?;
        let energy: f64 = (0..n)
            .map(|k| stencil.apply_nodes(g.shifted_by(k).values(), true).norm_squared())
            .sum::<f64>()
            * g.dt();
        let norm = g.l2_norm();
        if norm > 0.0 {
            best = best.max(energy.sqrt() / norm);
        }
    }
    Ok(best)
}

/// Concatenated input record: the initial history for `s < 0`, the input for `s >= 0`.
pub struct InputRecord<'a> {
    phi: &'a HistorySegment,
    u: &'a Signal,
}

impl<'a> InputRecord<'a> {
    pub fn new(phi: &'a HistorySegment, u: &'a Signal) -> Result<Self> {
        if (phi.dt() - u.dt()).abs() > 1e-12 * phi.dt() || phi.u_dim() != u.dim() {
            return Err(Error::GridMismatch(
                "initial history and input use different steps or dimensions".into(),
            ));
        }
        Ok(Self { phi, u })
    }

    /// Record value at `s = i dt`, `i >= -m`.
    pub fn at(&self, i: isize) -> &CVector {
        if i < 0 {
            &self.phi.values()[(self.phi.m() as isize + i) as usize]
        } else {
            self.u.at(i as usize)
        }
    }

    /// The segment `θ ↦ record(t_k + θ)`.
    pub fn segment_at(&self, k: usize) -> HistorySegment {
        let m = self.phi.m();
        let values = (0..=m)
            .map(|j| self.at(k as isize + j as isize - m as isize).clone())
            .collect();
        HistorySegment::new(self.phi.r(), m, values).expect("record segment shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(v: f64) -> CVector {
        CVector::from_element(1, re(v))
    }

    #[test]
    fn shift_zeroes_the_recent_window() {
        let g = HistorySegment::from_fn(1.0, 4, 1, |_| scalar(1.0));
        assert_eq!(g.shift_apply(0.0).unwrap(), g);
        let s = g.shift_apply(0.25).unwrap();
        assert_eq!(s.values()[2][0].re, 1.0); // θ = -0.5
        assert_eq!(s.values()[3][0].re, 0.0); // θ = -0.25
        assert_eq!(s.values()[4][0].re, 0.0); // θ = 0
        assert_eq!(g.shift_apply(1.0).unwrap(), HistorySegment::zeros(1.0, 4, 1));
        assert_eq!(g.shift_apply(3.0).unwrap(), HistorySegment::zeros(1.0, 4, 1));
        assert!(matches!(g.shift_apply(0.1), Err(Error::OffGridTime { .. })));
    }

    #[test]
    fn functional_examples() {
        let g = HistorySegment::from_fn(1.0, 8, 1, |_| scalar(3.5));
        let dead = DelayMeasure::dead_time(1.0, 1);
        assert_eq!(delay_functional(&dead, &g).unwrap()[0].re, 3.5);

        let ramp = HistorySegment::from_fn(1.0, 8, 1, |t| scalar(2.0 * t + 1.0));
        let nd = DelayMeasure::no_delay(1.0, 1);
        assert_eq!(delay_functional(&nd, &ramp).unwrap()[0].re, 1.0);

        let dens = DelayMeasure::new(
            1.0,
            1,
            vec![],
            Some(Density {
                profile: Profile::Const { value: 1.0 },
                weight: CMatrix::identity(1, 1),
            }),
            false,
        )
        .unwrap();
        let theta = HistorySegment::from_fn(1.0, 16, 1, scalar);
        let v = delay_functional(&dens, &theta).unwrap()[0].re;
        assert!((v + 0.5).abs() <= (1.0f64 / 16.0).powi(2));
    }

    #[test]
    fn atom_at_zero_needs_flag() {
        assert!(matches!(DelayMeasure::point(1.0, 1, 0.0), Err(Error::BadMeasure(_))));
        let near = DelayMeasure::point(1.0, 1, -0.01).unwrap();
        assert!(matches!(near.stencil(8), Err(Error::GridMismatch(_))));
        assert!(DelayMeasure::point(1.0, 1, 0.5).is_err());
    }

    #[test]
    fn atoms_snap_to_nearest_node() {
        let nu = DelayMeasure::point(1.0, 1, -0.51).unwrap();
        let st = nu.stencil(4).unwrap();
        assert_eq!(st.weights()[2][(0, 0)].re, 1.0);
        assert!((st.max_snap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn phi_shift_examples() {
        let u = Signal::scalar(0.125, 8, |s| s);
        let seg = phi_shift(0.5, &u, 1.0, 8).unwrap();
        assert_eq!(seg.values()[6][0].re, 0.25);
        assert_eq!(seg.values()[2][0].re, 0.0);
        let ones = Signal::scalar(0.125, 8, |_| 1.0);
        let full = phi_shift(1.0, &ones, 1.0, 8).unwrap();
        assert!(full.values().iter().all(|v| v[0].re == 1.0));
        let zero = Signal::zeros(1, 0.125, 8);
        assert_eq!(phi_shift(0.75, &zero, 1.0, 8).unwrap(), HistorySegment::zeros(1.0, 8, 1));
        assert!(matches!(phi_shift(0.1, &u, 1.0, 8), Err(Error::OffGridTime { .. })));
        let coarse = Signal::scalar(0.25, 4, |s| s);
        assert!(matches!(phi_shift(0.5, &coarse, 1.0, 8), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn e_lambda_examples() {
        let v = scalar(1.0);
        let e = e_lambda(re(1.0), &v, 1.0, 4);
        assert!((e.values()[0][0].re - (-1.0f64).exp()).abs() < 1e-15);
        let c = e_lambda(re(0.0), &scalar(2.0), 1.0, 4);
        assert!(c.values().iter().all(|x| x[0].re == 2.0));
        assert_eq!(e_lambda(re(3.0), &scalar(0.0), 1.0, 4), HistorySegment::zeros(1.0, 4, 1));
    }

    #[test]
    fn cocycle_sine() {
        let u = Signal::scalar(1.0 / 16.0, 32, |s| (5.0 * s).sin());
        assert!(history_cocycle_check(&u, 0.25, 0.5, 1.0, 16).unwrap());
        assert!(history_cocycle_check(&u, 0.25, 0.0, 1.0, 16).unwrap());
        assert!(history_cocycle_check(&u, 0.5, 1.5, 1.0, 16).unwrap());
    }

    #[test]
    fn total_variation_of_catalogue() {
        let id = CMatrix::identity(1, 1);
        let mk = |p: Profile| {
            DelayMeasure::new(1.0, 1, vec![], Some(Density { profile: p, weight: id.clone() }), false).unwrap()
        };
        assert!((mk(Profile::Const { value: -2.0 }).total_variation() - 2.0).abs() < 1e-15);
        let e = mk(Profile::Exp { scale: 1.0, rate: 1.0 }).total_variation();
        assert!((e - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
        let t = mk(Profile::Table {
            theta: vec![-1.0, 0.0],
            value: vec![-1.0, 1.0],
        })
        .total_variation();
        assert!((t - 0.5).abs() < 1e-15);
    }

    #[test]
    fn record_switches_at_zero() {
        let phi = HistorySegment::from_fn(1.0, 4, 1, |_| scalar(-1.0));
        let u = Signal::scalar(0.25, 8, |_| 1.0);
        let rec = InputRecord::new(&phi, &u).unwrap();
        let seg = rec.segment_at(0);
        assert_eq!(seg.values()[3][0].re, -1.0);
        assert_eq!(seg.values()[4][0].re, 1.0);
        assert_eq!(rec.segment_at(2), phi_shift(0.5, &u, 1.0, 4).unwrap().axpy(re(1.0), &phi.shifted_by(2)).unwrap());
    }

    fn signal_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-5.0f64..5.0, n + 1)
    }

    proptest! {
        #[test]
        fn shift_semigroup_law(vals in signal_strategy(16), a in 0usize..20, b in 0usize..20) {
            let g = HistorySegment::new(1.0, 16, vals.iter().map(|v| scalar(*v)).collect()).unwrap();
            prop_assert_eq!(g.shifted_by(a).shifted_by(b), g.shifted_by(a + b));
        }

        #[test]
        fn cocycle_random(vals in signal_strategy(48), kt in 0usize..24, ks in 0usize..24) {
            let dt = 1.0 / 16.0;
            let u = Signal::new(dt, vals.iter().map(|v| scalar(*v)).collect()).unwrap();
            prop_assert!(history_cocycle_check(&u, kt as f64 * dt, ks as f64 * dt, 1.0, 16).unwrap());
        }

        #[test]
        fn functional_linear_and_bounded(
            vals in signal_strategy(32),
            other in signal_strategy(32),
            a in -3.0f64..3.0,
            rate in -2.0f64..2.0,
            theta in -1.0f64..-0.1,
        ) {
            let nu = DelayMeasure::new(
                1.0,
                1,
                vec![Atom { theta, weight: CMatrix::from_element(1, 1, re(0.7)) }],
                Some(Density { profile: Profile::Exp { scale: 1.5, rate }, weight: CMatrix::identity(1, 1) }),
                false,
            ).unwrap();
            let g = HistorySegment::new(1.0, 32, vals.iter().map(|v| scalar(*v)).collect()).unwrap();
            let h = HistorySegment::new(1.0, 32, other.iter().map(|v| scalar(*v)).collect()).unwrap();
            let st = nu.stencil(32).unwrap();
            let lhs = st.apply(&g.axpy(re(a), &h).unwrap()).unwrap();
            let rhs = st.apply(&g).unwrap() + st.apply(&h).unwrap() * re(a);
            prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + g.max_norm() + a.abs() * h.max_norm()));
            let lg = st.apply(&g).unwrap().norm();
            prop_assert!(lg <= st.variation() * g.max_norm() * (1.0 + 1e-12));
            // the trapezoid sum of |p| tracks the exact variation to second order
            let dt: f64 = 1.0 / 32.0;
            prop_assert!((st.variation() - nu.total_variation()).abs() <= 1.5 * 4.0 * dt * dt);
        }
    }
}
