//! Boundary triples `(A_m, G, 𝒞)` on an extended node set, Dirichlet maps,
//! the input/output maps and the empirical admissibility and regularity probes.
//!
//! Extended states are laid out as `[free nodes..., boundary slots...]`. The
//! boundary slots are eliminated through the trace, which gives the generator
//! `A = A_m` on `ker G`, the control operator `B = (λ - A) P 𝔻_λ` and the
//! observation `C = 𝒞` on `ker G`.

use nalgebra::DMatrix;

use crate::exec::Exec;
use crate::report::{refinement_verdict, EstimateReport, EstimateRow, Verdict};
use crate::semigroup::{phi_scalars, Generator, Metric, MetricKind, OperatorMatrix, Propagator};
use crate::sde::standard_normals;
use crate::signal::{Observation, Signal};
use crate::{grid_steps, re, CMatrix, CVector, Error, Result, C64};

/// Node layout of a one-dimensional discretization.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    /// Number of grid cells.
    pub cells: usize,
    pub h: f64,
    /// Physical coordinates of the free nodes.
    pub free_positions: Vec<f64>,
    /// Physical coordinates of the boundary slots.
    pub boundary_positions: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BoundaryTriple {
    full_op: CMatrix,
    trace: CMatrix,
    obs: CMatrix,
    restricted: Generator,
    extension: CMatrix,
    control: CMatrix,
    observation: CMatrix,
    obs_eig: Option<CMatrix>,
    ext_metric: Metric,
    pub geometry: Geometry,
}

impl BoundaryTriple {
    /// `full_op` is `n x (n+u)`, `trace` is `u x (n+u)`, `obs` is `y x (n+u)`;
    /// `metric` lives on the `n` free nodes.
    pub fn new(
        full_op: CMatrix,
        trace: CMatrix,
        obs: CMatrix,
        metric: Metric,
        geometry: Geometry,
        label: &str,
    ) -> Result<Self> {
        let n = full_op.nrows();
        let ext = full_op.ncols();
        if ext <= n {
            return Err(Error::Dimension("extended node set must add boundary slots".into()));
        }
        let u = ext - n;
        if trace.shape() != (u, ext) {
            return Err(Error::Dimension(format!(
                "trace must be {u}x{ext}, got {:?}",
                trace.shape()
            )));
        }
        if obs.ncols() != ext || obs.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "observation must have {ext} columns, got {:?}",
                obs.shape()
            )));
        }
        let g_free = trace.columns(0, n).into_owned();
        let g_bnd = trace.columns(n, u).into_owned();
        let g_bnd_inv = g_bnd.clone().try_inverse().ok_or_else(|| {
            Error::SingularBoundarySystem("trace is not onto the boundary space through the boundary slots".into())
        })?;
        if g_bnd.clone().singular_values().min() < 1e-12 * g_bnd.norm() {
            return Err(Error::SingularBoundarySystem("trace block is numerically singular".into()));
        }
        let mut extension = CMatrix::zeros(ext, n);
        extension.view_mut((0, 0), (n, n)).fill_with_identity();
        extension
            .view_mut((n, 0), (u, n))
            .copy_from(&(-(&g_bnd_inv * &g_free)));
        let resid = (&trace * &extension).norm();
        if resid > 1e-10 * (1.0 + trace.norm()) {
            return Err(Error::SingularBoundarySystem(format!(
                "kernel extension residual {resid:.3e}"
            )));
        }
        let a = &full_op * &extension;
        let restricted = Generator::new(a, metric, label)?;
        let control = full_op.columns(n, u) * &g_bnd_inv;
        let observation = &obs * &extension;
        let obs_eig = restricted.spectral().map(|s| &observation * &s.vecs);
        let ext_metric = extend_metric(restricted.metric(), u)?;
        Ok(Self {
            full_op,
            trace,
            obs,
            restricted,
            extension,
            control,
            observation,
            obs_eig,
            ext_metric,
            geometry,
        })
    }

    /// Same triple with a different observation map on the extended nodes.
    pub fn with_observation(&self, obs: CMatrix) -> Result<Self> {
        if obs.ncols() != self.ext_dim() {
            return Err(Error::Dimension("observation width must match extended nodes".into()));
        }
        let observation = &obs * &self.extension;
        let obs_eig = self.restricted.spectral().map(|s| &observation * &s.vecs);
        Ok(Self {
            obs,
            observation,
            obs_eig,
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.full_op.nrows()
    }

    pub fn u_dim(&self) -> usize {
        self.trace.nrows()
    }

    pub fn y_dim(&self) -> usize {
        self.obs.nrows()
    }

    pub fn ext_dim(&self) -> usize {
        self.full_op.ncols()
    }

    pub fn full_op(&self) -> &CMatrix {
        &self.full_op
    }

    pub fn trace(&self) -> &CMatrix {
        &self.trace
    }

    pub fn obs(&self) -> &CMatrix {
        &self.obs
    }

    pub fn restricted(&self) -> &Generator {
        &self.restricted
    }

    pub fn metric(&self) -> &Metric {
        self.restricted.metric()
    }

    pub fn ext_metric(&self) -> &Metric {
        &self.ext_metric
    }

    /// The map `x ↦` extended state in `ker G` with free part `x`.
    pub fn extension(&self) -> &CMatrix {
        &self.extension
    }

    /// Discrete `B = (λ - A) P 𝔻_λ`; the same matrix for every admissible `λ`.
    pub fn b_matrix(&self) -> &CMatrix {
        &self.control
    }

    /// `C = 𝒞` restricted to `ker G`.
    pub fn c_matrix(&self) -> &CMatrix {
        &self.observation
    }

    /// `(λ - A) P 𝔻_λ` assembled from the Dirichlet map.
    pub fn control_operator(&self, lambda: C64) -> Result<CMatrix> {
        let d = dirichlet_map(self, lambda)?;
        let pd = d.free_part(self.n());
        let n = self.n();
        Ok((CMatrix::identity(n, n) * lambda - self.restricted.matrix()) * pd)
    }

    /// Free part of an extended state.
    pub fn free_part(&self, z: &CVector) -> CVector {
        z.rows(0, self.n()).into_owned()
    }
}

fn extend_metric(free: &Metric, u: usize) -> Result<Metric> {
    match free.kind() {
        MetricKind::Weights(w) => {
            let wmin = w.min();
            let mut all: Vec<f64> = w.iter().copied().collect();
            all.extend(std::iter::repeat_n(wmin, u));
            Metric::weights(all)
        }
        MetricKind::Gram(g) => {
            let n = g.nrows();
            let scale = g.trace() / n as f64;
            let mut big = DMatrix::<f64>::zeros(n + u, n + u);
            big.view_mut((0, 0), (n, n)).copy_from(g);
            for i in 0..u {
                big[(n + i, n + i)] = scale;
            }
            Metric::gram(big)
        }
    }
}

/// `𝔻_λ`: boundary data to the extended solution of `(λ - A_m) z = 0`, `G z = v`.
#[derive(Clone, Debug)]
pub struct DirichletMap {
    pub lambda: C64,
    pub map: OperatorMatrix,
}

impl DirichletMap {
    pub fn apply(&self, v: &CVector) -> CVector {
        self.map.apply(v)
    }

    /// `P 𝔻_λ`, the free-node rows.
    pub fn free_part(&self, n: usize) -> CMatrix {
        self.map.matrix.rows(0, n).into_owned()
    }
}

pub fn dirichlet_map(bt: &BoundaryTriple, lambda: C64) -> Result<DirichletMap> {
    bt.restricted.check_resolvent_point(lambda)?;
    let n = bt.n();
    let u = bt.u_dim();
    let ext = n + u;
    let mut sys = CMatrix::zeros(ext, ext);
    let mut shifted = -bt.full_op.clone();
    for i in 0..n {
        shifted[(i, i)] += lambda;
    }
    sys.view_mut((0, 0), (n, ext)).copy_from(&shifted);
    sys.view_mut((n, 0), (u, ext)).copy_from(&bt.trace);
    let mut rhs = CMatrix::zeros(ext, u);
    rhs.view_mut((n, 0), (u, u)).fill_with_identity();
    let sv = sys.clone().singular_values();
    if sv.min() < 1e-13 * sv.max() {
        return Err(Error::SingularBoundarySystem(format!(
            "(λ - A_m, G) has condition number above 1e13 at λ = {lambda}"
        )));
    }
    let d = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularBoundarySystem(format!("LU failed at λ = {lambda}")))?;
    Ok(DirichletMap {
        lambda,
        map: OperatorMatrix::new(d, Metric::euclidean(u), bt.ext_metric.clone()),
    })
}

/// How a sampled signal is held between grid points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hold {
    /// Piecewise constant from the left sample.
    Zero,
    /// Piecewise linear between samples.
    Linear,
}

/// States `Φ_{t_k} u` for every grid time of `u`, accumulated by the exponential integrator.
pub fn control_trajectory(bt: &BoundaryTriple, lambda: C64, u: &Signal, hold: Hold) -> Result<Vec<CVector>> {
    if u.dim() != bt.u_dim() {
        return Err(Error::Dimension(format!(
            "signal has dimension {} but the boundary space has {}",
            u.dim(),
            bt.u_dim()
        )));
    }
    let b = bt.control_operator(lambda)?;
    let prop = Propagator::new(&bt.restricted, &b, u.dt())?;
    Ok(accumulate(&prop, u, hold, CVector::zeros(bt.n())))
}

pub(crate) fn accumulate(prop: &Propagator, u: &Signal, hold: Hold, x0: CVector) -> Vec<CVector> {
    let mut out = Vec::with_capacity(u.n_steps() + 1);
    let mut x = x0;
    out.push(x.clone());
    for k in 0..u.n_steps() {
        let mut next = &prop.e * &x + &prop.k1 * u.at(k);
        if hold == Hold::Linear {
            // slope (u_{k+1} - u_k)/dt times dt^2 φ_2 B = k2 (u_{k+1} - u_k)
            next += &prop.k2 * (u.at(k + 1) - u.at(k));
        }
        x = next;
        out.push(x.clone());
    }
    out
}

/// `Φ_t u = ∫_0^t T(t-s) B u(s) ds` with a piecewise-linear hold of the samples.
pub fn control_map_phi(bt: &BoundaryTriple, lambda: C64, t: f64, u: &Signal) -> Result<CVector> {
    control_map_phi_with(bt, lambda, t, u, Hold::Linear)
}

pub fn control_map_phi_with(bt: &BoundaryTriple, lambda: C64, t: f64, u: &Signal, hold: Hold) -> Result<CVector> {
    let k = u.steps_to(t)?;
    let traj = control_trajectory(bt, lambda, &u.truncated(k), hold)?;
    Ok(traj.into_iter().last().expect("trajectory is nonempty"))
}

/// `Φ_t u` by parts: `D u(t) - T(t) D u(0) + ∫ T(t-s) D (λ u - u')(s) ds` with `D = P 𝔻_λ`.
///
/// Only the bounded map `D` enters, so this path never touches the large matrix `B`.
pub fn control_map_phi_by_parts(bt: &BoundaryTriple, lambda: C64, t: f64, u: &Signal) -> Result<CVector> {
    let k = u.steps_to(t)?;
    if k < 2 {
        return Err(Error::GridMismatch("integration by parts needs at least two steps".into()));
    }
    let u = u.truncated(k);
    let dt = u.dt();
    let n = bt.n();
    let d = dirichlet_map(bt, lambda)?.free_part(n);
    let s = u.samples();
    let deriv: Vec<CVector> = (0..=k)
        .map(|i| {
            let v = if i == 0 {
                (&s[1] * re(4.0) - &s[0] * re(3.0) - &s[2]) * re(0.5 / dt)
            } else if i == k {
                (&s[k] * re(3.0) - &s[k - 1] * re(4.0) + &s[k - 2]) * re(0.5 / dt)
            } else {
                (&s[i + 1] - &s[i - 1]) * re(0.5 / dt)
            };
            &s[i] * lambda - v
        })
        .collect();
    let g = Signal::new(dt, deriv)?;
    let prop = Propagator::new(&bt.restricted, &d, dt)?;
    let conv = accumulate(&prop, &g, Hold::Linear, CVector::zeros(n))
        .pop()
        .expect("nonempty");
    let head = &d * &s[k] - bt.restricted.semigroup_apply(t, &(&d * &s[0]))?;
    Ok(head + conv)
}

/// Samples of `C T(t_k) x0` on `[0, α]`.
pub fn observation_map_psi(bt: &BoundaryTriple, x0: &CVector, alpha: f64, dt: f64) -> Result<Signal> {
    let n = grid_steps(alpha, dt).ok_or(Error::OffGridTime { t: alpha, dt })?;
    let e = bt.restricted.semigroup(dt)?;
    let mut x = x0.clone();
    let mut samples = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        samples.push(&bt.observation * &x);
        x = &e * &x;
    }
    Signal::new(dt, samples)
}

/// Geometric `λ` schedule for the extension limit `C λ R(λ, A) z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Yosida {
    pub lambda0: f64,
    pub factor: f64,
    pub count: usize,
    pub tol: f64,
}

impl Default for Yosida {
    fn default() -> Self {
        Self {
            lambda0: 10.0,
            factor: 2.0,
            count: 41,
            tol: 1e-6,
        }
    }
}

impl Yosida {
    pub fn lambdas(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |k| self.lambda0 * self.factor.powi(k as i32))
    }
}

/// `C λ R(λ, A) z` in the limit along the schedule: stops at the first `λ`
/// where two successive extrapolated values agree to `tol`.
pub fn yosida_apply(bt: &BoundaryTriple, z: &CVector, sched: &Yosida) -> Result<CVector> {
    let floor = 16.0 * f64::EPSILON * bt.observation.norm() * z.norm();
    let gen = &bt.restricted;
    match (gen.spectral(), &bt.obs_eig) {
        (Some(s), Some(cv)) => {
            let coeffs = &s.inv * z;
            settle_modal(bt, cv, &s.values, &coeffs, sched, floor)
        }
        _ => settle(
            |lam| {
                let r = gen.apply_resolvent(re(lam), z)?;
                Ok(&bt.observation * r * re(lam))
            },
            sched,
            floor,
        ),
    }
}

/// Column-wise `yosida_apply` for a block of states, sharing the modal transform.
pub fn yosida_apply_block(bt: &BoundaryTriple, z: &CMatrix, sched: &Yosida) -> Vec<Result<CVector>> {
    match (bt.restricted.spectral(), &bt.obs_eig) {
        (Some(s), Some(cv)) => {
            let coeffs = &s.inv * z;
            (0..z.ncols())
                .map(|j| {
                    let floor = 16.0 * f64::EPSILON * bt.observation.norm() * z.column(j).norm();
                    settle_modal(bt, cv, &s.values, &coeffs.column(j).into_owned(), sched, floor)
                })
                .collect()
        }
        _ => (0..z.ncols())
            .map(|j| yosida_apply(bt, &z.column(j).into_owned(), sched))
            .collect(),
    }
}

fn settle_modal(
    bt: &BoundaryTriple,
    cv: &CMatrix,
    values: &[C64],
    coeffs: &CVector,
    sched: &Yosida,
    floor: f64,
) -> Result<CVector> {
    // rounding scale of the modal sum, which can cancel heavily
    let terms: f64 = coeffs.iter().enumerate().map(|(i, c)| c.norm() * cv.column(i).norm()).sum();
    settle(
        |lam| {
            bt.restricted.check_resolvent_point(re(lam))?;
            let w = CVector::from_iterator(
                coeffs.len(),
                values.iter().zip(coeffs.iter()).map(|(&mu, c)| *c * re(lam) / (re(lam) - mu)),
            );
            Ok(cv * w)
        },
        sched,
        floor.max(64.0 * f64::EPSILON * terms),
    )
}

fn settle(eval: impl Fn(f64) -> Result<CVector>, sched: &Yosida, floor: f64) -> Result<CVector> {
    // The tail of C λR(λ,A) z is c/λ + O(1/λ²); with λ growing by `factor`
    // one Richardson step removes the 1/λ term without changing the limit.
    let f = sched.factor;
    let mut raw: Option<CVector> = None;
    let mut prev: Option<CVector> = None;
    let mut last_diff = f64::INFINITY;
    let mut last_lambda = sched.lambda0;
    for lam in sched.lambdas() {
        let y = eval(lam)?;
        let acc = match &raw {
            Some(r) if f > 1.0 => (&y * re(f) - r) / re(f - 1.0),
            _ => y.clone(),
        };
        if let Some(p) = &prev {
            last_diff = (&acc - p).norm();
            if last_diff <= sched.tol * acc.norm() + 4.0 * floor {
                return Ok(acc);
            }
        }
        last_lambda = lam;
        if raw.is_some() {
            prev = Some(acc);
        }
        raw = Some(y);
    }
    Err(Error::Divergent(format!(
        "schedule exhausted at λ = {last_lambda:.3e} with last difference {last_diff:.3e}"
    )))
}

/// `t ↦ C_Λ Φ_t u` on `[0, α]`; non-settling samples are gaps.
///
/// Outputs settle to 1e-12 rather than the default tolerance: the stopping
/// point of the limit depends on the data, and only a tight stop keeps `F` linear to rounding.
pub fn f_operator(bt: &BoundaryTriple, lambda: C64, u: &Signal, alpha: f64, dt: f64) -> Result<Observation> {
    if (u.dt() - dt).abs() > 1e-12 * dt {
        return Err(Error::GridMismatch("signal step differs from requested step".into()));
    }
    let k = u.steps_to(alpha)?;
    let traj = control_trajectory(bt, lambda, &u.truncated(k), Hold::Linear)?;
    let sched = Yosida {
        tol: 1e-12,
        ..Yosida::default()
    };
    let samples = traj
        .iter()
        .map(|x| match yosida_apply(bt, x, &sched) {
            Ok(y) => Ok(Some(y)),
            Err(Error::Divergent(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    Observation { dt, samples }.check_gaps()
}

/// `∫_0^α |C e^{tA} x|^2 dt`.
pub fn output_energy(bt: &BoundaryTriple, x: &CVector, alpha: f64) -> Result<f64> {
    if let (Some(s), Some(cv)) = (bt.restricted.spectral(), &bt.obs_eig) {
        let c = &s.inv * x;
        let n = c.len();
        let a: Vec<CVector> = (0..n).map(|i| cv.column(i) * c[i]).collect();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let g = a[i].dotc(&a[j]);
                if g == C64::new(0.0, 0.0) {
                    continue;
                }
                let sum = s.values[i].conj() + s.values[j];
                let integral = phi_scalars(sum * alpha).1 * alpha;
                total += (g * integral).re;
            }
        }
        return Ok(total.max(0.0));
    }
    let steps = 4000;
    let y = observation_map_psi(bt, x, alpha, alpha / steps as f64)?;
    let s = y.samples();
    let dt = alpha / steps as f64;
    let inner: f64 = s[1..steps].iter().map(|v| v.norm_squared()).sum();
    Ok(dt * (inner + 0.5 * (s[0].norm_squared() + s[steps].norm_squared())))
}

const PROBE_SEED: u64 = 0x5EED_CAFE;
const PROBE_EIGEN: usize = 8;
const PROBE_RANDOM: usize = 8;

/// Lowest eigenvectors plus seeded random directions, unit in the metric.
pub fn probe_states(bt: &BoundaryTriple) -> Vec<CVector> {
    let n = bt.n();
    let metric = bt.metric();
    let mut out = Vec::new();
    match bt.restricted.spectral() {
        Some(s) => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| s.values[a].norm().total_cmp(&s.values[b].norm()));
            for &i in idx.iter().take(PROBE_EIGEN) {
                out.push(s.vecs.column(i).into_owned());
            }
        }
        None => {
            for i in 0..PROBE_EIGEN.min(n) {
                let mut e = CVector::zeros(n);
                e[i] = re(1.0);
                out.push(e);
            }
        }
    }
    for k in 0..PROBE_RANDOM {
        let g = standard_normals(PROBE_SEED, k as u64, n);
        out.push(CVector::from_iterator(n, g.into_iter().map(re)));
    }
    out.into_iter()
        .map(|x| {
            let nx = metric.norm(&x);
            x / re(nx)
        })
        .collect()
}

/// `γ = max_x ||C T(·) x||_{L2(0,α)} / ||x||` over the probe states.
pub fn observation_gamma(bt: &BoundaryTriple, alpha: f64) -> Result<f64> {
    let mut best: f64 = 0.0;
    for x in probe_states(bt) {
        best = best.max(output_energy(bt, &x, alpha)?.sqrt());
    }
    Ok(best)
}

pub const BOUNDED_RATIO: f64 = 1.2;

pub fn probe_observation_admissibility(family: &[BoundaryTriple], alpha: f64, exec: Exec) -> Result<EstimateReport> {
    let values = exec
        .map_range(family.len(), |i| observation_gamma(&family[i], alpha))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    mesh_report("observation_gamma", family, &values, alpha)
}

fn mesh_report(name: &str, family: &[BoundaryTriple], values: &[f64], horizon: f64) -> Result<EstimateReport> {
    let rows = family
        .iter()
        .zip(values)
        .map(|(bt, &v)| EstimateRow {
            mesh: bt.geometry.cells,
            param: horizon,
            value: v,
        })
        .collect();
    let verdict = if family.len() < 3 {
        Verdict::Inconclusive
    } else {
        refinement_verdict(values, BOUNDED_RATIO)
    };
    EstimateReport::new(name, rows, horizon, verdict, BOUNDED_RATIO)
}

/// Default number of time steps used by the control probes.
pub const CONTROL_PROBE_STEPS: usize = 256;

/// Fixed scalar profiles on `[0, τ]`: constant, three sines, four seeded random staircases.
pub fn probe_profiles(tau: f64, n_steps: usize) -> Vec<Vec<f64>> {
    let dt = tau / n_steps as f64;
    let mut out = vec![vec![1.0; n_steps + 1]];
    for f in 1..=3 {
        out.push(
            (0..=n_steps)
                .map(|k| (f as f64 * std::f64::consts::PI * k as f64 * dt / tau).sin())
                .collect(),
        );
    }
    let pieces = 16usize;
    for s in 0..4u64 {
        let levels = standard_normals(PROBE_SEED ^ 0xC0, s, pieces);
        out.push(
            (0..=n_steps)
                .map(|k| levels[(k * pieces / (n_steps + 1)).min(pieces - 1)])
                .collect(),
        );
    }
    out
}

/// `max ||Φ_τ u|| / ||u||_{L2(0,τ)}` over the probe signals, using the zero-order hold.
pub fn control_gain(bt: &BoundaryTriple, tau: f64, n_steps: usize) -> Result<f64> {
    let dt = tau / n_steps as f64;
    let u_dim = bt.u_dim();
    let prop = Propagator::new(&bt.restricted, bt.b_matrix(), dt)?;
    let metric = bt.metric();
    let mut signals = Vec::new();
    for prof in probe_profiles(tau, n_steps) {
        for d in 0..u_dim {
            let samples = prof
                .iter()
                .map(|&p| {
                    let mut v = CVector::zeros(u_dim);
                    v[d] = re(p);
                    v
                })
                .collect();
            signals.push(Signal::new(dt, samples)?);
        }
    }
    // Signals maximizing <Φ u, x> for each probe state: u_k = K^* (E^*)^{n-1-k} G x.
    let gram = metric.gram_matrix();
    let e_adj = prop.e.adjoint();
    let k_adj = prop.k1.adjoint();
    for x in probe_states(bt) {
        let mut p = &gram * x;
        let mut samples = vec![CVector::zeros(u_dim); n_steps + 1];
        for k in (0..n_steps).rev() {
            samples[k] = &k_adj * &p;
            p = &e_adj * p;
        }
        samples[n_steps] = samples[n_steps - 1].clone();
        signals.push(Signal::new(dt, samples)?);
    }
    let mut best: f64 = 0.0;
    for u in &signals {
        let norm_u = u.l2_norm();
        if norm_u == 0.0 {
            continue;
        }
        let x = accumulate(&prop, u, Hold::Zero, CVector::zeros(bt.n()))
            .pop()
            .expect("nonempty");
        best = best.max(metric.norm(&x) / norm_u);
    }
    Ok(best)
}

pub fn probe_control_admissibility(family: &[BoundaryTriple], tau: f64, exec: Exec) -> Result<EstimateReport> {
    let values = exec
        .map_range(family.len(), |i| control_gain(&family[i], tau, CONTROL_PROBE_STEPS))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    mesh_report("control_gain", family, &values, tau)
}

/// `||𝒞 𝔻_λ||` along `λ_list`.
pub fn transfer_decay(bt: &BoundaryTriple, lambdas: &[f64]) -> Result<EstimateReport> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("empty λ list".into()));
    }
    if lambdas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("λ list must be increasing".into()));
    }
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lam in lambdas {
        let d = dirichlet_map(bt, re(lam))?;
        let cd = &bt.obs * &d.map.matrix;
        rows.push(EstimateRow {
            mesh: bt.geometry.cells,
            param: lam,
            value: cd.singular_values().max(),
        });
    }
    let v: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let verdict = decay_verdict(&v);
    EstimateReport::new("transfer_norm", rows, 0.0, verdict, 0.1)
}

/// Decaying when the last five values strictly decrease and the last is below a tenth of the first.
pub fn decay_verdict(v: &[f64]) -> Verdict {
    if v.len() < 2 {
        return Verdict::Inconclusive;
    }
    let tail = &v[v.len().saturating_sub(5)..];
    let strictly = tail.windows(2).all(|w| w[1] < w[0]);
    if strictly && v[v.len() - 1] < 0.1 * v[0] {
        Verdict::Decaying
    } else {
        Verdict::NotDecaying
    }
}

/// Default sweep `t = 2^{-k}`, `k = 1..=10`.
pub fn default_regularity_times() -> Vec<f64> {
    (1..=10).map(|k| 0.5f64.powi(k)).collect()
}

/// `||(1/t) ∫_0^t (F 1 v0)(s) ds|| = ||C_Λ t φ_2(tA) B v0||` along `t_list`.
pub fn regularity_limit(bt: &BoundaryTriple, lambda: C64, v0: &CVector, t_list: &[f64]) -> Result<EstimateReport> {
    if t_list.is_empty() {
        return Err(Error::InvalidArgument("empty time list".into()));
    }
    if t_list.windows(2).any(|w| !(w[1] < w[0])) || t_list.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidArgument("time list must be positive and decreasing".into()));
    }
    let bv = bt.control_operator(lambda)? * v0;
    let sched = Yosida::default();
    let mut rows = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let (_, phi2) = bt.restricted.phi_matrices(t)?;
        let z = phi2 * &bv * re(t);
        let y = yosida_apply(bt, &z, &sched)?;
        rows.push(EstimateRow {
            mesh: bt.geometry.cells,
            param: t,
            value: y.norm(),
        });
    }
    let reference = rows
        .iter()
        .find(|r| (r.param - 0.5).abs() < 1e-12)
        .unwrap_or(&rows[0])
        .value;
    let last = rows[rows.len() - 1].value;
    let verdict = if reference == 0.0 && last == 0.0 {
        Verdict::Regular
    } else if rows.len() < 2 {
        Verdict::Inconclusive
    } else if last < 0.05 * reference {
        Verdict::Regular
    } else {
        Verdict::NotRegular
    };
    EstimateReport::new("cesaro_mean", rows, t_list[0], verdict, 0.05)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `-z''` discretization with Dirichlet at both ends; the right end is the boundary slot.
    fn dirichlet_laplacian(cells: usize) -> BoundaryTriple {
        let n = cells - 1;
        let h = 1.0 / cells as f64;
        let mut full = CMatrix::zeros(n, n + 1);
        for i in 0..n {
            full[(i, i)] = re(-2.0 / (h * h));
            if i > 0 {
                full[(i, i - 1)] = re(1.0 / (h * h));
            }
            full[(i, i + 1)] = re(1.0 / (h * h));
        }
        let mut trace = CMatrix::zeros(1, n + 1);
        trace[(0, n)] = re(1.0);
        let obs = trace.clone();
        let geometry = Geometry {
            cells,
            h,
            free_positions: (1..cells).map(|j| j as f64 * h).collect(),
            boundary_positions: vec![1.0],
        };
        BoundaryTriple::new(full, trace, obs, Metric::weights(vec![h; n]).unwrap(), geometry, "lap").unwrap()
    }

    fn toy() -> BoundaryTriple {
        let full = CMatrix::from_row_slice(1, 2, &[re(-1.0), re(1.0)]);
        let trace = CMatrix::from_row_slice(1, 2, &[re(0.0), re(1.0)]);
        let obs = CMatrix::from_row_slice(1, 2, &[re(1.0), re(0.0)]);
        let geometry = Geometry {
            cells: 1,
            h: 1.0,
            free_positions: vec![0.0],
            boundary_positions: vec![1.0],
        };
        BoundaryTriple::new(full, trace, obs, Metric::euclidean(1), geometry, "toy").unwrap()
    }

    #[test]
    fn dirichlet_harmonic_is_linear() {
        let bt = dirichlet_laplacian(64);
        let d = dirichlet_map(&bt, re(0.0)).unwrap();
        let z = d.apply(&CVector::from_element(1, re(1.0)));
        for (i, s) in bt.geometry.free_positions.iter().enumerate() {
            assert!((z[i].re - s).abs() <= 1e-10);
        }
        assert!((z[bt.n()].re - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn dirichlet_residuals_and_decomposition() {
        let bt = dirichlet_laplacian(32);
        let lam = re(1.0);
        let d = dirichlet_map(&bt, lam).unwrap();
        let n = bt.n();
        let v = CVector::from_element(1, re(0.7));
        let z = d.apply(&v);
        let lhs = z.rows(0, n) * lam - bt.full_op() * &z;
        assert!(lhs.norm() <= 1e-9 * bt.full_op().norm() * v.norm());
        assert!((bt.trace() * &z - &v).norm() <= 1e-10);

        let x = CVector::from_fn(n + 1, |i, _| re(((i * 7) % 5) as f64 - 2.0));
        let gx = bt.trace() * &x;
        let dg = d.apply(&gx);
        let rhs = bt.restricted().matrix() * (x.rows(0, n) - dg.rows(0, n)) + dg.rows(0, n) * lam;
        let lhs = bt.full_op() * &x;
        assert!((lhs - rhs).norm() <= 1e-9 * bt.full_op().norm() * x.norm());
    }

    #[test]
    fn b_is_lambda_independent() {
        let bt = dirichlet_laplacian(16);
        let b1 = bt.control_operator(re(1.0)).unwrap();
        let b2 = bt.control_operator(re(50.0)).unwrap();
        let scale = bt.b_matrix().norm();
        assert!((&b1 - bt.b_matrix()).norm() <= 1e-9 * scale);
        assert!((&b2 - bt.b_matrix()).norm() <= 1e-9 * scale);
    }

    #[test]
    fn toy_phi_and_psi() {
        let bt = toy();
        let u = Signal::scalar(1.0 / 64.0, 64, |_| 1.0);
        let x = control_map_phi(&bt, re(1.0), 1.0, &u).unwrap();
        assert!((x[0].re - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        // the linear hold is exact for a ramp: ∫_0^t e^{-(t-s)} s ds = t - 1 + e^{-t}
        let ramp = Signal::scalar(1.0 / 64.0, 64, |s| s);
        let x = control_map_phi(&bt, re(1.0), 1.0, &ramp).unwrap();
        assert!((x[0].re - (-1.0f64).exp()).abs() < 1e-12);
        let zero = Signal::zeros(1, 1.0 / 64.0, 64);
        assert_eq!(control_map_phi(&bt, re(1.0), 1.0, &zero).unwrap()[0], re(0.0));

        let y = observation_map_psi(&bt, &CVector::from_element(1, re(1.0)), 1.0, 0.125).unwrap();
        for (k, s) in y.samples().iter().enumerate() {
            assert!((s[0].re - (-(k as f64) * 0.125).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn toy_yosida_and_f() {
        let bt = toy();
        let z = CVector::from_element(1, re(1.0));
        let y = yosida_apply(&bt, &z, &Yosida::default()).unwrap();
        assert!((y[0].re - 1.0).abs() <= 1e-5);
        assert_eq!(yosida_apply(&bt, &CVector::zeros(1), &Yosida::default()).unwrap()[0], re(0.0));
        let short = Yosida { count: 3, ..Yosida::default() };
        assert!(matches!(yosida_apply(&bt, &z, &short), Err(Error::Divergent(_))));

        let dt = 1.0 / 128.0;
        let u = Signal::scalar(dt, 128, |_| 1.0);
        let f = f_operator(&bt, re(1.0), &u, 1.0, dt).unwrap();
        for (k, s) in f.samples.iter().enumerate() {
            let t = k as f64 * dt;
            assert!((s.as_ref().unwrap()[0].re - (1.0 - (-t).exp())).abs() <= 1e-5);
        }
    }

    #[test]
    fn toy_transfer_values() {
        let bt = toy();
        let lams: Vec<f64> = (0..8).map(|k| 10.0 * 2f64.powi(k)).collect();
        let rep = transfer_decay(&bt, &lams).unwrap();
        for r in &rep.rows {
            assert!((r.value - 1.0 / (r.param + 1.0)).abs() < 1e-14);
        }
        assert_eq!(rep.verdict, Verdict::Decaying);
        assert_eq!(transfer_decay(&bt, &[10.0]).unwrap().verdict, Verdict::Inconclusive);
    }

    #[test]
    fn toy_regularity_closed_form() {
        let bt = toy();
        let ts = default_regularity_times();
        let rep = regularity_limit(&bt, re(1.0), &CVector::from_element(1, re(1.0)), &ts).unwrap();
        for r in &rep.rows {
            let t = r.param;
            let exact = 1.0 - (1.0 - (-t).exp()) / t;
            assert!((r.value - exact).abs() <= 1e-5 * exact.max(1e-3));
        }
        assert_eq!(rep.verdict, Verdict::Regular);
        let zero = regularity_limit(&bt, re(1.0), &CVector::zeros(1), &ts).unwrap();
        assert!(zero.values().iter().all(|v| *v == 0.0));
        assert_eq!(zero.verdict, Verdict::Regular);
    }

    #[test]
    fn toy_control_gain_matches_closed_form() {
        let bt = toy();
        let tau = 1.0;
        let exact = ((1.0 - (-2.0f64 * tau).exp()) / 2.0).sqrt();
        let g = control_gain(&bt, tau, 1024).unwrap();
        assert!((g - exact).abs() <= 1e-3 * exact, "{g} vs {exact}");
    }

    #[test]
    fn toy_output_energy_closed_form() {
        let bt = toy();
        let e = output_energy(&bt, &CVector::from_element(1, re(1.0)), 2.0).unwrap();
        assert!((e - (1.0 - (-4.0f64).exp()) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn phi_by_parts_converges_to_direct() {
        let bt = dirichlet_laplacian(16);
        let errs: Vec<f64> = [64usize, 128, 256]
            .iter()
            .map(|&n| {
                let dt = 0.5 / n as f64;
                let u = Signal::scalar(dt, n, |s| s * s);
                let a = control_map_phi(&bt, re(1.0), 0.5, &u).unwrap();
                let b = control_map_phi_by_parts(&bt, re(1.0), 0.5, &u).unwrap();
                bt.metric().norm(&(a - &b)) / bt.metric().norm(&b)
            })
            .collect();
        assert!(errs[2] < errs[1] && errs[1] < errs[0], "{errs:?}");
    }
}
