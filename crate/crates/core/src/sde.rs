//! Brownian paths, the stochastic mild solution of the lifted system, the
//! Picard fixed point for the stochastic control maps, and Monte Carlo.
//!
//! Every step uses the left-point Itô rule
//! `Z_{k+1} = 𝒯(dt) Z_k + (input over the step) + 𝒯(dt) ℳ(Z_k) ΔW_k`,
//! so step `k` reads only increments `0..=k`.

use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::function::erf::erfc_inv;

use crate::delay::{phi_shift, HistorySegment};
use crate::exec::Exec;
use crate::lift::{check_signal, lifted_control_map, lifted_observe, LiftedState, LiftedSystem};
use crate::semigroup::{Metric, OperatorMatrix};
use crate::signal::{Observation, Signal};
use crate::{re, CMatrix, CVector, Error, Result, C64};

/// Standard normal via inverse CDF of a 53-bit uniform in `(0, 1)`.
fn normal_from_bits(bits: u64) -> f64 {
    let u = ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// `count` standard normals keyed by `(seed, stream)`; draw `k` only depends on `(seed, stream, k)`.
pub fn standard_normals(seed: u64, stream: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..count).map(|_| normal_from_bits(rng.next_u64())).collect()
}

/// Increments of a scalar Brownian motion on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPath {
    pub dt: f64,
    pub seed: u64,
    pub path_index: u64,
    pub increments: Vec<f64>,
}

impl BrownianPath {
    pub fn n_steps(&self) -> usize {
        self.increments.len()
    }

    /// Sums groups of `factor` increments: the same path on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.increments.len().is_multiple_of(factor) {
            return Err(Error::GridMismatch(format!(
                "cannot coarsen {} steps by {factor}",
                self.increments.len()
            )));
        }
        Ok(Self {
            dt: self.dt * factor as f64,
            seed: self.seed,
            path_index: self.path_index,
            increments: self.increments.chunks(factor).map(|c| c.iter().sum()).collect(),
        })
    }

    /// Path with no noise at all.
    pub fn silent(n_steps: usize, dt: f64) -> Self {
        Self {
            dt,
            seed: 0,
            path_index: 0,
            increments: vec![0.0; n_steps],
        }
    }

    /// `W(t_k)` for `k = 0..=n_steps`.
    pub fn values(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.increments.len() + 1);
        let mut acc = 0.0;
        w.push(acc);
        for d in &self.increments {
            acc += d;
            w.push(acc);
        }
        w
    }
}

/// Increments `N(0, dt)` from the counter-based stream `(seed, path_index)`.
pub fn brownian_path(n_steps: usize, dt: f64, seed: u64, path_index: u64) -> Result<BrownianPath> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("a path needs at least one step".into()));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("path step must be positive, got {dt}")));
    }
    let s = dt.sqrt();
    let increments = standard_normals(seed, path_index, n_steps)
        .into_iter()
        .map(|z| z * s)
        .collect();
    Ok(BrownianPath {
        dt,
        seed,
        path_index,
        increments,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    Zero,
    Multiplication,
    KernelIntegral,
}

/// Linear noise operator `M` on the state space.
#[derive(Clone, Debug)]
pub struct NoiseOp {
    kind: NoiseKind,
    matrix: CMatrix,
    bound: f64,
    hilbert_schmidt: Option<f64>,
}

impl NoiseOp {
    pub fn zero(n: usize) -> Self {
        Self {
            kind: NoiseKind::Zero,
            matrix: CMatrix::zeros(n, n),
            bound: 0.0,
            hilbert_schmidt: None,
        }
    }

    /// `(M f)_i = q_i f_i`.
    pub fn multiplication(q: &[f64], metric: &Metric) -> Result<Self> {
        if q.len() != metric.dim() {
            return Err(Error::Dimension("coefficient length differs from the state dimension".into()));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("noise coefficient must be finite".into()));
        }
        let matrix = CMatrix::from_diagonal(&CVector::from_iterator(q.len(), q.iter().map(|v| re(*v))));
        Ok(Self::with_bound(NoiseKind::Multiplication, matrix, metric, None))
    }

    /// `(M f)_i = Σ_j k(x_i, x_j) w_j f_j`.
    pub fn kernel(
        k: impl Fn(f64, f64) -> f64,
        positions: &[f64],
        weights: &[f64],
        metric: &Metric,
    ) -> Result<Self> {
        let n = positions.len();
        if weights.len() != n || metric.dim() != n {
            return Err(Error::Dimension("kernel nodes, weights and metric disagree".into()));
        }
        let matrix = CMatrix::from_fn(n, n, |i, j| re(k(positions[i], positions[j]) * weights[j]));
        let hs = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| weights[i] * weights[j] * k(positions[i], positions[j]).powi(2))
            .sum::<f64>()
            .sqrt();
        if !hs.is_finite() {
            return Err(Error::InvalidArgument("noise kernel must be finite".into()));
        }
        Ok(Self::with_bound(NoiseKind::KernelIntegral, matrix, metric, Some(hs)))
    }

    fn with_bound(kind: NoiseKind, matrix: CMatrix, metric: &Metric, hs: Option<f64>) -> Self {
        let bound = OperatorMatrix::new(matrix.clone(), metric.clone(), metric.clone()).norm();
        Self {
            kind,
            matrix,
            bound,
            hilbert_schmidt: hs,
        }
    }

    /// `a M`.
    pub fn scaled(&self, a: f64) -> Self {
        Self {
            kind: if a == 0.0 { NoiseKind::Zero } else { self.kind },
            matrix: &self.matrix * re(a),
            bound: self.bound * a.abs(),
            hilbert_schmidt: self.hilbert_schmidt.map(|v| v * a.abs()),
        }
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Operator norm in the state metric.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Discrete `||k||_{L2(O x O)}` for kernel operators.
    pub fn hilbert_schmidt(&self) -> Option<f64> {
        self.hilbert_schmidt
    }

    pub fn is_zero(&self) -> bool {
        self.bound == 0.0
    }
}

/// States and outputs of one simulated path.
#[derive(Clone, Debug)]
pub struct MildTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<LiftedState>,
    pub outputs: Observation,
    pub seed: u64,
    pub path_index: u64,
}

impl MildTrajectory {
    pub fn xs(&self) -> Vec<CVector> {
        self.states.iter().map(|z| z.x.clone()).collect()
    }
}

fn check_path(ls: &LiftedSystem, path: &BrownianPath, u: &Signal) -> Result<usize> {
    if (path.dt - ls.dt()).abs() > 1e-12 * ls.dt() {
        return Err(Error::GridMismatch(format!(
            "path step {} differs from the lift step {}",
            path.dt,
            ls.dt()
        )));
    }
    check_signal(ls, u)?;
    let n = path.n_steps();
    if u.n_steps() < n {
        return Err(Error::GridMismatch(format!(
            "input covers {} steps but the path has {n}",
            u.n_steps()
        )));
    }
    Ok(n)
}

/// States of the lifted recursion without computing outputs.
pub fn simulate_states(
    ls: &LiftedSystem,
    xi: &CVector,
    phi: &HistorySegment,
    u: &Signal,
    path: &BrownianPath,
) -> Result<Vec<LiftedState>> {
    let n = check_path(ls, path, u)?;
    let z0 = LiftedState {
        x: xi.clone(),
        h: phi.clone(),
    };
    ls.check_state(&z0)?;
    let prop = ls.propagator();
    let w_zero = ls.stencil().weight_at_zero();
    let use_zero_weight = w_zero.iter().any(|c| *c != C64::new(0.0, 0.0));
    let noisy = !ls.noise().is_zero();
    let mut states = Vec::with_capacity(n + 1);
    states.push(z0);
    for k in 0..n {
        let z = &states[k];
        let mut next = ls.free_step(z);
        if use_zero_weight {
            next.x += &prop.k1 * (w_zero * u.at(k));
        }
        let m = ls.m();
        let vals = next.h.values_mut();
        vals[m - 1] += u.at(k);
        vals[m] += u.at(k + 1);
        if noisy {
            next.x += ls.noise_step() * &z.x * re(path.increments[k]);
        }
        states.push(next);
    }
    Ok(states)
}

/// The boundary input `L⁺(h_k) + W_0 U(t_k)` the state sees at each step,
/// produced by running the history half of the lift on its own.
pub fn lift_boundary_signal(ls: &LiftedSystem, phi: &HistorySegment, u: &Signal, n: usize) -> Result<Vec<CVector>> {
    check_signal(ls, u)?;
    if u.n_steps() < n {
        return Err(Error::GridMismatch("input shorter than the requested steps".into()));
    }
    let m = ls.m();
    let w_zero = ls.stencil().weight_at_zero();
    let mut h = phi.clone();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        out.push(ls.stencil().apply_nodes(h.values(), false) + w_zero * u.at(k));
        h = h.shifted_by(1);
        let vals = h.values_mut();
        vals[m - 1] += u.at(k);
        vals[m] += u.at(k + 1);
    }
    Ok(out)
}

/// The state half of the lift for several data sets sharing one path.
///
/// Column `j` of the `k`-th matrix equals `simulate_states(ξ_j, φ_j, U_j)[k].x`;
/// the columns advance together, which turns matrix-vector work into matrix-matrix work.
pub fn simulate_block(
    ls: &LiftedSystem,
    xi: &CMatrix,
    boundary: &[Vec<CVector>],
    path: &BrownianPath,
) -> Result<Vec<CMatrix>> {
    let n = path.n_steps();
    let cols = xi.ncols();
    if xi.nrows() != ls.bt().n() || boundary.len() != cols {
        return Err(Error::Dimension("block data does not match the system".into()));
    }
    if (path.dt - ls.dt()).abs() > 1e-12 * ls.dt() {
        return Err(Error::GridMismatch("path step differs from the lift step".into()));
    }
    if boundary.iter().any(|b| b.len() < n) {
        return Err(Error::GridMismatch("boundary signal shorter than the path".into()));
    }
    let prop = ls.propagator();
    let u_dim = ls.bt().u_dim();
    let noisy = !ls.noise().is_zero();
    let mut out = Vec::with_capacity(n + 1);
    out.push(xi.clone());
    for k in 0..n {
        let ell = CMatrix::from_fn(u_dim, cols, |d, j| boundary[j][k][d]);
        let x = &out[k];
        let step = if noisy {
            &prop.e + ls.noise_step() * re(path.increments[k])
        } else {
            prop.e.clone()
        };
        out.push(step * x + &prop.k1 * ell);
    }
    Ok(out)
}

/// Outputs `𝒫_Λ Z_k`, with non-settling samples as gaps.
pub fn observe_states(ls: &LiftedSystem, states: &[LiftedState]) -> Result<Observation> {
    let samples = states
        .iter()
        .map(|z| match lifted_observe(ls, z) {
            Ok(y) => Ok(Some(y)),
            Err(Error::Divergent(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Observation { dt: ls.dt(), samples })
}

/// Exponential-Euler/Itô simulation of the lifted mild solution.
pub fn simulate_mild(
    ls: &LiftedSystem,
    xi: &CVector,
    phi: &HistorySegment,
    u: &Signal,
    path: &BrownianPath,
) -> Result<MildTrajectory> {
    let states = simulate_states(ls, xi, phi, u, path)?;
    let outputs = observe_states(ls, &states)?;
    Ok(MildTrajectory {
        times: (0..states.len()).map(|k| k as f64 * ls.dt()).collect(),
        states,
        outputs,
        seed: path.seed,
        path_index: path.path_index,
    })
}

#[derive(Clone, Debug)]
pub struct PicardResult {
    /// `Φ^W_t U`.
    pub state: LiftedState,
    /// The fixed point at every grid time up to `t`.
    pub trajectory: Vec<LiftedState>,
    pub iterations: usize,
    pub last_diff: f64,
    /// Last ratio of successive differences (0 when the second difference vanished).
    pub ratio: f64,
}

/// Picard iteration on whole trajectories for `Φ^W_t U = Φ_t U + ∫ 𝒯(t-s) ℳ(Φ^W_s U) dW(s)`.
pub fn phi_w(
    ls: &LiftedSystem,
    t: f64,
    u: &Signal,
    path: &BrownianPath,
    max_iter: usize,
    tol: f64,
) -> Result<PicardResult> {
    let k = u.steps_to(t)?;
    check_signal(ls, u)?;
    if (path.dt - ls.dt()).abs() > 1e-12 * ls.dt() {
        return Err(Error::GridMismatch("path step differs from the lift step".into()));
    }
    if path.n_steps() < k {
        return Err(Error::GridMismatch("path shorter than the requested horizon".into()));
    }
    let base: Vec<LiftedState> = (0..=k)
        .map(|j| lifted_control_map(ls, j as f64 * ls.dt(), u))
        .collect::<Result<_>>()?;
    let sup = |xs: &[CVector]| xs.iter().map(|x| ls.bt().metric().norm(x)).fold(0.0, f64::max);
    let e = &ls.propagator().e;
    let em = ls.noise_step();
    let mut current: Vec<CVector> = base.iter().map(|z| z.x.clone()).collect();
    let mut prev_diff = f64::NAN;
    let mut ratio = 0.0;
    for it in 1..=max_iter.max(1) {
        let mut next = Vec::with_capacity(k + 1);
        let mut acc = CVector::zeros(ls.bt().n());
        next.push(&base[0].x + &acc);
        for j in 0..k {
            acc = e * acc + em * &current[j] * re(path.increments[j]);
            next.push(&base[j + 1].x + &acc);
        }
        let diff = next
            .iter()
            .zip(&current)
            .map(|(a, b)| ls.bt().metric().norm(&(a - b)))
            .fold(0.0, f64::max);
        if prev_diff.is_finite() && prev_diff > 0.0 {
            ratio = diff / prev_diff;
        }
        current = next;
        if diff == 0.0 || diff <= tol * sup(&current) {
            let trajectory: Vec<LiftedState> = base
                .into_iter()
                .zip(current)
                .map(|(b, x)| LiftedState { x, h: b.h })
                .collect();
            return Ok(PicardResult {
                state: trajectory[k].clone(),
                trajectory,
                iterations: it,
                last_diff: diff,
                ratio,
            });
        }
        prev_diff = diff;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        last_diff: prev_diff,
        ratio,
    })
}

/// Mean and 95% normal-approximation half-width of `f` over paths `0..n_paths`.
///
/// Paths are evaluated in any order but reduced in index order.
pub fn mc_estimate<F>(exec: Exec, n_paths: usize, f: F) -> Result<(f64, f64)>
where
    F: Fn(u64) -> Result<f64> + Sync + Send,
{
    if n_paths < 2 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least two paths".into()));
    }
    let values = exec
        .map_range(n_paths, |i| f(i as u64))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_half_width(&values))
}

/// Welford mean and `1.96 s / sqrt(n)`.
pub fn mean_half_width(values: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &v) in values.iter().enumerate() {
        let d = v - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (v - mean);
    }
    let n = values.len() as f64;
    let var = if values.len() > 1 { m2 / (n - 1.0) } else { 0.0 };
    (mean, 1.96 * (var.max(0.0) / n).sqrt())
}

/// Writes `t, x..., h..., y...` rows; complex systems get `_re`/`_im` column pairs.
pub fn write_trajectory_csv<W: Write>(ls: &LiftedSystem, traj: &MildTrajectory, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let n = ls.bt().n();
    let m = ls.m();
    let u_dim = ls.bt().u_dim();
    let y_dim = ls.bt().y_dim();
    let mut header = vec!["t".to_string()];
    let push_cols = |header: &mut Vec<String>, name: String| {
        if ls.complex {
            header.push(format!("{name}_re"));
            header.push(format!("{name}_im"));
        } else {
            header.push(name);
        }
    };
    for i in 0..n {
        push_cols(&mut header, format!("x{i}"));
    }
    for j in 0..=m {
        for d in 0..u_dim {
            let name = if u_dim == 1 { format!("h{j}") } else { format!("h{j}_{d}") };
            push_cols(&mut header, name);
        }
    }
    for d in 0..y_dim {
        push_cols(&mut header, format!("y{d}"));
    }
    wr.write_record(&header)?;
    let fmt = |c: &C64, row: &mut Vec<String>| {
        row.push(c.re.to_string());
        if ls.complex {
            row.push(c.im.to_string());
        }
    };
    for (k, z) in traj.states.iter().enumerate() {
        let mut row = vec![traj.times[k].to_string()];
        z.x.iter().for_each(|c| fmt(c, &mut row));
        for v in z.h.values() {
            v.iter().for_each(|c| fmt(c, &mut row));
        }
        match &traj.outputs.samples[k] {
            Some(y) => y.iter().for_each(|c| fmt(c, &mut row)),
            None => {
                let width = if ls.complex { 2 * y_dim } else { y_dim };
                row.extend(std::iter::repeat_n("NA".to_string(), width));
            }
        }
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

/// The lifted history produced by `U` alone after `t`, for callers that need `U_t`.
pub fn history_at(ls: &LiftedSystem, t: f64, u: &Signal) -> Result<HistorySegment> {
    phi_shift(t, u, ls.r(), ls.m())
}
