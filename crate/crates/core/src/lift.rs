//! The product-space lift `Z = (X, U_t)` on `H x L2([-r, 0], U)`.
//!
//! The lifted semigroup is upper triangular: the history only shifts, and the
//! state sees the history through `L` as a boundary input. Time stepping uses
//! `dt = r/m`, so the shift is exact and the state part is an exponential
//! integrator with the boundary input held constant over each step.

use crate::boundary::{accumulate, dirichlet_map, yosida_apply, BoundaryTriple, Hold, Yosida};
use crate::delay::{e_lambda, phi_shift, DelayMeasure, DelayStencil, HistorySegment};
use crate::sde::NoiseOp;
use crate::semigroup::Propagator;
use crate::signal::Signal;
use crate::{grid_steps, re, CMatrix, CVector, Error, Result, C64};

/// `(x, h)`: state and input history.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedState {
    pub x: CVector,
    pub h: HistorySegment,
}

impl LiftedState {
    pub fn zeros(ls: &LiftedSystem) -> Self {
        Self {
            x: CVector::zeros(ls.bt.n()),
            h: HistorySegment::zeros(ls.r(), ls.m, ls.bt.u_dim()),
        }
    }

    /// `||x||_H + ||h||_{L2}`.
    pub fn norm(&self, ls: &LiftedSystem) -> f64 {
        ls.bt.metric().norm(&self.x) + self.h.l2_norm()
    }

    pub fn axpy(&self, a: C64, other: &Self) -> Result<Self> {
        Ok(Self {
            x: &self.x + &other.x * a,
            h: self.h.axpy(a, &other.h)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct LiftedSystem {
    bt: BoundaryTriple,
    nu: DelayMeasure,
    stencil: DelayStencil,
    noise: NoiseOp,
    m: usize,
    lambda_ref: f64,
    prop: Propagator,
    noise_step: CMatrix,
    /// Schedule used for outputs.
    pub yosida: Yosida,
    pub label: String,
    /// Whether states carry genuinely complex values (affects CSV layout).
    pub complex: bool,
}

impl LiftedSystem {
    pub fn new(
        bt: BoundaryTriple,
        nu: DelayMeasure,
        noise: NoiseOp,
        m: usize,
        lambda_ref: f64,
        label: impl Into<String>,
        complex: bool,
    ) -> Result<Self> {
        if nu.u_dim() != bt.u_dim() {
            return Err(Error::Dimension(format!(
                "delay measure acts on dimension {} but the boundary space has {}",
                nu.u_dim(),
                bt.u_dim()
            )));
        }
        if noise.dim() != bt.n() {
            return Err(Error::Dimension("noise operator does not match the state dimension".into()));
        }
        let stencil = nu.stencil(m)?;
        let dt = nu.r() / m as f64;
        let b = bt.control_operator(re(lambda_ref))?;
        let prop = Propagator::new(bt.restricted(), &b, dt)?;
        let noise_step = &prop.e * noise.matrix();
        Ok(Self {
            bt,
            nu,
            stencil,
            noise,
            m,
            lambda_ref,
            prop,
            noise_step,
            yosida: Yosida::default(),
            label: label.into(),
            complex,
        })
    }

    /// Same system with another delay measure.
    pub fn with_delay(&self, nu: DelayMeasure) -> Result<Self> {
        let mut out = Self::new(
            self.bt.clone(),
            nu,
            self.noise.clone(),
            self.m,
            self.lambda_ref,
            self.label.clone(),
            self.complex,
        )?;
        out.yosida = self.yosida;
        Ok(out)
    }

    /// Same system with another noise operator.
    pub fn with_noise(&self, noise: NoiseOp) -> Result<Self> {
        let mut out = Self::new(
            self.bt.clone(),
            self.nu.clone(),
            noise,
            self.m,
            self.lambda_ref,
            self.label.clone(),
            self.complex,
        )?;
        out.yosida = self.yosida;
        Ok(out)
    }

    pub fn bt(&self) -> &BoundaryTriple {
        &self.bt
    }

    pub fn nu(&self) -> &DelayMeasure {
        &self.nu
    }

    pub fn stencil(&self) -> &DelayStencil {
        &self.stencil
    }

    pub fn noise(&self) -> &NoiseOp {
        &self.noise
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn r(&self) -> f64 {
        self.nu.r()
    }

    pub fn dt(&self) -> f64 {
        self.nu.r() / self.m as f64
    }

    pub fn lambda_ref(&self) -> f64 {
        self.lambda_ref
    }

    pub fn propagator(&self) -> &Propagator {
        &self.prop
    }

    /// `e^{A dt} M`, the noise part of one step.
    pub fn noise_step(&self) -> &CMatrix {
        &self.noise_step
    }

    pub fn steps(&self, t: f64) -> Result<usize> {
        grid_steps(t, self.dt()).ok_or(Error::OffGridTime { t, dt: self.dt() })
    }

    /// One step of the lifted semigroup (no input, no noise).
    pub(crate) fn free_step(&self, z: &LiftedState) -> LiftedState {
        let l_open = self.stencil.apply_nodes(z.h.values(), false);
        LiftedState {
            x: &self.prop.e * &z.x + &self.prop.k1 * l_open,
            h: z.h.shifted_by(1),
        }
    }

    /// Checks that a state uses this system's grids.
    pub fn check_state(&self, z: &LiftedState) -> Result<()> {
        if z.x.len() != self.bt.n() {
            return Err(Error::Dimension("lifted state has the wrong state dimension".into()));
        }
        if z.h.m() != self.m || z.h.u_dim() != self.bt.u_dim() || (z.h.r() - self.r()).abs() > 1e-12 * self.r() {
            return Err(Error::GridMismatch("lifted state history uses a different grid".into()));
        }
        Ok(())
    }
}

/// `𝒯(t) z = (T(t) x + R(t) h, S(t) h)`.
pub fn lifted_semigroup_apply(ls: &LiftedSystem, t: f64, z: &LiftedState) -> Result<LiftedState> {
    ls.check_state(z)?;
    let k = ls.steps(t)?;
    let mut cur = z.clone();
    for _ in 0..k {
        cur = ls.free_step(&cur);
    }
    Ok(cur)
}

/// `𝒟_λ v = (𝔻_λ L e_λ v, e_λ v)`, with the state part restricted to the free nodes.
pub fn lifted_dirichlet(ls: &LiftedSystem, lambda: C64, v: &CVector) -> Result<LiftedState> {
    let d = dirichlet_map(&ls.bt, lambda)?;
    let e = e_lambda(lambda, v, ls.r(), ls.m);
    let l = ls.stencil.apply(&e)?;
    let ext = d.apply(&l);
    Ok(LiftedState {
        x: ls.bt.free_part(&ext),
        h: e,
    })
}

/// Residual of the coupling `G x_ext = L h` for an extended state part.
pub fn coupling_residual(ls: &LiftedSystem, x_ext: &CVector, h: &HistorySegment) -> Result<f64> {
    let l = ls.stencil.apply(h)?;
    Ok((ls.bt.trace() * x_ext - l).norm())
}

/// Boundary signal `s ↦ L(U_s)` seen by the state when the history starts at zero.
pub fn delayed_input(ls: &LiftedSystem, u: &Signal) -> Result<Signal> {
    let samples = (0..=u.n_steps())
        .map(|k| {
            let seg = phi_shift(k as f64 * u.dt(), u, ls.r(), ls.m)?;
            ls.stencil.apply(&seg)
        })
        .collect::<Result<Vec<_>>>()?;
    Signal::new(u.dt(), samples)
}

/// `(Φ^{A,B}_t (F^L U), Φ^{Q,β}_t U)`.
pub fn lifted_control_map(ls: &LiftedSystem, t: f64, u: &Signal) -> Result<LiftedState> {
    check_signal(ls, u)?;
    let k = u.steps_to(t)?;
    let u = u.truncated(k);
    let fl = delayed_input(ls, &u)?;
    let x = accumulate(&ls.prop, &fl, Hold::Zero, CVector::zeros(ls.bt.n()))
        .pop()
        .expect("nonempty");
    Ok(LiftedState {
        x,
        h: phi_shift(t, &u, ls.r(), ls.m)?,
    })
}

pub(crate) fn check_signal(ls: &LiftedSystem, u: &Signal) -> Result<()> {
    if (u.dt() - ls.dt()).abs() > 1e-12 * ls.dt() {
        return Err(Error::GridMismatch(format!(
            "input step {} differs from the lift step r/m = {}",
            u.dt(),
            ls.dt()
        )));
    }
    if u.dim() != ls.bt.u_dim() {
        return Err(Error::Dimension("input dimension differs from the boundary space".into()));
    }
    Ok(())
}

/// `𝒫_Λ z = C_Λ x`; the history does not enter.
pub fn lifted_observe(ls: &LiftedSystem, z: &LiftedState) -> Result<CVector> {
    yosida_apply(&ls.bt, &z.x, &ls.yosida)
}

/// `R(λ, Q) h = ∫_0^∞ e^{-λt} S(t) h dt` for the grid shift, exact for the piecewise-constant-in-time shift.
pub fn shift_resolvent(ls: &LiftedSystem, lambda: C64, h: &HistorySegment) -> Result<HistorySegment> {
    if !(lambda.re > 0.0) {
        return Err(Error::InvalidArgument("shift resolvent needs Re λ > 0".into()));
    }
    let dt = ls.dt();
    let w0 = (1.0 - (-lambda * dt).exp()) / lambda;
    let mut out = HistorySegment::zeros(ls.r(), ls.m, ls.bt.u_dim());
    for n in 0..=ls.m {
        let w = w0 * (-lambda * (n as f64 * dt)).exp();
        out = out.axpy(w, &h.shifted_by(n))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{make_heat, make_toy, SystemSpec};

    fn random_state(ls: &LiftedSystem, seed: u64) -> LiftedState {
        let g = crate::sde::standard_normals(seed, 0, ls.bt().n() + ls.m() + 1);
        let x = CVector::from_iterator(ls.bt().n(), g[..ls.bt().n()].iter().map(|v| re(*v)));
        let h = HistorySegment::new(
            ls.r(),
            ls.m(),
            g[ls.bt().n()..].iter().map(|v| CVector::from_element(1, re(*v))).collect(),
        )
        .unwrap();
        LiftedState { x, h }
    }

    #[test]
    fn zero_history_gives_plain_semigroup() {
        let ls = make_heat(&SystemSpec::heat()).unwrap();
        let mut z = random_state(&ls, 3);
        z.h = HistorySegment::zeros(ls.r(), ls.m(), 1);
        let out = lifted_semigroup_apply(&ls, 0.5, &z).unwrap();
        let direct = ls.bt().restricted().semigroup_apply(0.5, &z.x).unwrap();
        assert!((out.x - &direct).norm() <= 1e-10 * direct.norm());
        assert_eq!(out.h, z.h);
        assert_eq!(lifted_semigroup_apply(&ls, 0.0, &z).unwrap(), z);
    }

    #[test]
    fn history_part_ignores_state() {
        let ls = make_heat(&SystemSpec::heat()).unwrap();
        let a = random_state(&ls, 1);
        let mut b = a.clone();
        b.x *= re(-3.0);
        let ta = lifted_semigroup_apply(&ls, 0.25, &a).unwrap();
        let tb = lifted_semigroup_apply(&ls, 0.25, &b).unwrap();
        assert_eq!(ta.h, tb.h);
    }

    #[test]
    fn lifted_dirichlet_no_delay_reduces() {
        let ls = make_toy(&SystemSpec::toy()).unwrap();
        let nd = ls.with_delay(DelayMeasure::no_delay(1.0, 1)).unwrap();
        let v = CVector::from_element(1, re(2.0));
        let z = lifted_dirichlet(&nd, re(3.0), &v).unwrap();
        // toy: 𝔻_λ v has state part b v / (λ + a)
        assert!((z.x[0].re - 2.0 / 4.0).abs() < 1e-14);
        assert_eq!(z.h.values()[nd.m()][0], re(2.0));
        let zero = lifted_dirichlet(&nd, re(3.0), &CVector::zeros(1)).unwrap();
        assert_eq!(zero, LiftedState::zeros(&nd));
    }

    #[test]
    fn dead_time_control_map() {
        let ls = make_toy(&SystemSpec::toy()).unwrap();
        let u = Signal::scalar(ls.dt(), 64, |_| 1.0);
        let z = lifted_control_map(&ls, 0.5, &u).unwrap();
        assert_eq!(z.x[0], re(0.0));
        let filled = z.h.values().iter().filter(|v| v[0].re == 1.0).count();
        assert_eq!(filled, ls.steps(0.5).unwrap() + 1);
        let zero = lifted_control_map(&ls, 0.5, &Signal::zeros(1, ls.dt(), 64)).unwrap();
        assert_eq!(zero, LiftedState::zeros(&ls));
    }

    #[test]
    fn observe_ignores_history() {
        let ls = make_heat(&SystemSpec::heat()).unwrap();
        let a = random_state(&ls, 7);
        let mut b = random_state(&ls, 8);
        b.x = a.x.clone();
        assert_eq!(lifted_observe(&ls, &a).unwrap(), lifted_observe(&ls, &b).unwrap());
        assert_eq!(lifted_observe(&ls, &LiftedState::zeros(&ls)).unwrap()[0], re(0.0));
    }
}
