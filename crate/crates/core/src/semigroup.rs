//! Finite-dimensional generators and the semigroups they generate.
//!
//! All norms are taken with respect to an explicit [`Metric`] so that
//! constants measured on different meshes can be compared. Generators that
//! are self-adjoint or skew-adjoint in their metric get an eigendecomposition
//! fast path; everything else goes through a scaling-and-squaring Padé(13)
//! matrix exponential.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{re, CMatrix, CVector, Error, Result, C64};

/// Relative tolerance used to detect self-/skew-adjointness in the metric.
const ADJOINT_TOL: f64 = 1e-10;
/// Spectrum-hit threshold relative to `max(1, ||A||)`.
pub const SPECTRUM_TOL: f64 = 1e-12;

/// Discrete inner product `<x, y> = y^* G x` on a coordinate space.
///
/// Either diagonal quadrature weights or a full symmetric positive definite
/// Gram matrix. The square-root factors are cached.
#[derive(Clone, Debug)]
pub struct Metric {
    kind: MetricKind,
    half: CMatrix,
    inv_half: CMatrix,
}

#[derive(Clone, Debug)]
pub enum MetricKind {
    Weights(DVector<f64>),
    Gram(DMatrix<f64>),
}

impl Metric {
    pub fn euclidean(n: usize) -> Self {
        Self::weights(vec![1.0; n]).expect("unit weights are positive")
    }

    /// Diagonal metric from per-node quadrature weights.
    pub fn weights(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidArgument("empty weight vector".into()));
        }
        if let Some(bad) = w.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weights must be strictly positive, found {bad}"
            )));
        }
        let n = w.len();
        let half = CMatrix::from_diagonal(&CVector::from_iterator(n, w.iter().map(|v| re(v.sqrt()))));
        let inv_half =
            CMatrix::from_diagonal(&CVector::from_iterator(n, w.iter().map(|v| re(1.0 / v.sqrt()))));
        Ok(Self {
            kind: MetricKind::Weights(DVector::from_vec(w)),
            half,
            inv_half,
        })
    }

    /// Metric from a real symmetric positive definite Gram matrix.
    pub fn gram(g: DMatrix<f64>) -> Result<Self> {
        if !g.is_square() || g.nrows() == 0 {
            return Err(Error::Dimension("Gram matrix must be square and nonempty".into()));
        }
        let asym = (&g - g.transpose()).norm();
        if asym > 1e-10 * g.norm() {
            return Err(Error::InvalidArgument("Gram matrix is not symmetric".into()));
        }
        let sym = (&g + g.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let min = eig.eigenvalues.min();
        if !(min > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Gram matrix is not positive definite (min eigenvalue {min:.3e})"
            )));
        }
        let q = &eig.eigenvectors;
        let sq = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
        let isq = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
        let half = (q * sq * q.transpose()).map(re);
        let inv_half = (q * isq * q.transpose()).map(re);
        Ok(Self {
            kind: MetricKind::Gram(g),
            half,
            inv_half,
        })
    }

    pub fn kind(&self) -> &MetricKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.half.nrows()
    }

    /// `G^{1/2}`.
    pub fn half(&self) -> &CMatrix {
        &self.half
    }

    /// `G^{-1/2}`.
    pub fn inv_half(&self) -> &CMatrix {
        &self.inv_half
    }

    /// The Gram matrix itself.
    pub fn gram_matrix(&self) -> CMatrix {
        match &self.kind {
            MetricKind::Weights(w) => CMatrix::from_diagonal(&w.map(re)),
            MetricKind::Gram(g) => g.map(re),
        }
    }

    /// `<x, y> = y^* G x`.
    pub fn inner(&self, x: &CVector, y: &CVector) -> C64 {
        match &self.kind {
            MetricKind::Weights(w) => x
                .iter()
                .zip(y.iter())
                .zip(w.iter())
                .map(|((a, b), w)| a * b.conj() * *w)
                .sum(),
            MetricKind::Gram(g) => {
                let gx = g.map(re) * x;
                y.dotc(&gx)
            }
        }
    }

    pub fn norm(&self, x: &CVector) -> f64 {
        match &self.kind {
            MetricKind::Weights(w) => x
                .iter()
                .zip(w.iter())
                .map(|(a, w)| a.norm_sqr() * w)
                .sum::<f64>()
                .sqrt(),
            MetricKind::Gram(_) => (&self.half * x).norm(),
        }
    }
}

/// One-norm (max absolute column sum).
fn norm1(a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with the degree-13 Padé approximant.
pub fn expm(a: &CMatrix) -> CMatrix {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    let nrm = norm1(a);
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a * re(2f64.powi(-s));
    let b = |i: usize| re(PADE13[i]);
    let ident = CMatrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9));
    let u = &a * (inner_u + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &ident * b(1));
    let inner_v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8));
    let v = inner_v + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &ident * b(0);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular after scaling");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `(e^z, phi_1(z), phi_2(z))` with `phi_1(z) = (e^z - 1)/z`, `phi_2(z) = (e^z - 1 - z)/z^2`.
pub fn phi_scalars(z: C64) -> (C64, C64, C64) {
    let e = z.exp();
    if z.norm() < 1.0 {
        // Taylor series; 30 terms is far past double precision for |z| < 1.
        let mut term = re(1.0); // z^k / k!
        let mut p1 = C64::new(0.0, 0.0);
        let mut p2 = C64::new(0.0, 0.0);
        for k in 0..30 {
            let kf = k as f64;
            p1 += term / (kf + 1.0);
            p2 += term / ((kf + 1.0) * (kf + 2.0));
            term *= z / (kf + 1.0);
        }
        (e, p1, p2)
    } else {
        let p1 = (e - 1.0) / z;
        let p2 = (e - 1.0 - z) / (z * z);
        (e, p1, p2)
    }
}

/// Eigendecomposition `A = V diag(values) V^{-1}` with `V` unitary in the metric.
#[derive(Clone, Debug)]
pub struct Spectral {
    pub values: Vec<C64>,
    pub vecs: CMatrix,
    pub inv: CMatrix,
    pub kind: Adjointness,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Adjointness {
    SelfAdjoint,
    SkewAdjoint,
}

impl Spectral {
    /// `V diag(f(mu)) V^{-1}`.
    pub fn function(&self, f: impl Fn(C64) -> C64) -> CMatrix {
        let d = CVector::from_iterator(self.values.len(), self.values.iter().map(|&v| f(v)));
        let mut scaled = self.vecs.clone();
        for (mut col, s) in scaled.column_iter_mut().zip(d.iter()) {
            col *= *s;
        }
        scaled * &self.inv
    }

    /// `V diag(f(mu)) V^{-1} x`.
    pub fn apply(&self, f: impl Fn(C64) -> C64, x: &CVector) -> CVector {
        let mut c = &self.inv * x;
        for (ci, &mu) in c.iter_mut().zip(self.values.iter()) {
            *ci *= f(mu);
        }
        &self.vecs * c
    }
}

/// Discrete generator with its metric.
#[derive(Clone, Debug)]
pub struct Generator {
    matrix: CMatrix,
    metric: Metric,
    pub label: String,
    spectral: Option<Spectral>,
    op_norm: f64,
}

impl Generator {
    pub fn new(matrix: CMatrix, metric: Metric, label: impl Into<String>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "generator must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if metric.dim() != matrix.nrows() {
            return Err(Error::Dimension(format!(
                "metric has dimension {} but matrix has {}",
                metric.dim(),
                matrix.nrows()
            )));
        }
        let hat = metric.half() * &matrix * metric.inv_half();
        let scale = hat.norm().max(f64::MIN_POSITIVE);
        let herm_defect = (&hat - hat.adjoint()).norm() / scale;
        let skew_defect = (&hat + hat.adjoint()).norm() / scale;
        let spectral = if herm_defect <= ADJOINT_TOL {
            let h = (&hat + hat.adjoint()) * re(0.5);
            Some(Self::spectral_from_hermitian(h, &metric, Adjointness::SelfAdjoint, re(1.0)))
        } else if skew_defect <= ADJOINT_TOL {
            // i*hat is Hermitian; hat = -i * (i*hat).
            let h = (&hat - hat.adjoint()) * C64::new(0.0, 0.5);
            Some(Self::spectral_from_hermitian(
                h,
                &metric,
                Adjointness::SkewAdjoint,
                C64::new(0.0, -1.0),
            ))
        } else {
            None
        };
        let op_norm = match &spectral {
            Some(s) => s.values.iter().map(|v| v.norm()).fold(0.0, f64::max),
            None => hat.singular_values().max(),
        };
        Ok(Self {
            matrix,
            metric,
            label: label.into(),
            spectral,
            op_norm,
        })
    }

    fn spectral_from_hermitian(h: CMatrix, metric: &Metric, kind: Adjointness, factor: C64) -> Spectral {
        let eig = SymmetricEigen::new(h);
        let q = eig.eigenvectors;
        let values = eig.eigenvalues.iter().map(|&v| factor * v).collect();
        Spectral {
            values,
            vecs: metric.inv_half() * &q,
            inv: q.adjoint() * metric.half(),
            kind,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn spectral(&self) -> Option<&Spectral> {
        self.spectral.as_ref()
    }

    /// Operator norm of the matrix in the metric.
    pub fn op_norm(&self) -> f64 {
        self.op_norm
    }

    /// Eigenvalues of the matrix (unordered).
    pub fn eigenvalues(&self) -> Vec<C64> {
        match &self.spectral {
            Some(s) => s.values.clone(),
            None => {
                let (_, t) = self.matrix.clone().schur().unpack();
                t.diagonal().iter().copied().collect()
            }
        }
    }

    /// Max real part of the spectrum, the discrete stand-in for the growth bound.
    pub fn growth_bound(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|v| v.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Errors with `SpectrumHit` when `lambda - A` is numerically singular.
    pub fn check_resolvent_point(&self, lambda: C64) -> Result<()> {
        let sigma_min = match &self.spectral {
            Some(s) => s
                .values
                .iter()
                .map(|v| (lambda - v).norm())
                .fold(f64::INFINITY, f64::min),
            None => {
                let n = self.dim();
                let shifted = CMatrix::identity(n, n) * lambda - &self.matrix;
                let hat = self.metric.half() * shifted * self.metric.inv_half();
                hat.singular_values().min()
            }
        };
        let threshold = SPECTRUM_TOL * self.op_norm.max(1.0);
        if sigma_min < threshold {
            return Err(Error::SpectrumHit {
                lambda: format!("{lambda}"),
                sigma_min,
                threshold,
            });
        }
        Ok(())
    }

    /// `R(lambda, A) = (lambda I - A)^{-1}`.
    pub fn resolvent(&self, lambda: C64) -> Result<OperatorMatrix> {
        self.check_resolvent_point(lambda)?;
        let n = self.dim();
        let inv = match &self.spectral {
            Some(s) => s.function(|mu| 1.0 / (lambda - mu)),
            None => (CMatrix::identity(n, n) * lambda - &self.matrix)
                .lu()
                .try_inverse()
                .ok_or_else(|| Error::SpectrumHit {
                    lambda: format!("{lambda}"),
                    sigma_min: 0.0,
                    threshold: SPECTRUM_TOL,
                })?,
        };
        Ok(OperatorMatrix::new(inv, self.metric.clone(), self.metric.clone()))
    }

    /// `R(lambda, A) x` without forming the resolvent.
    pub fn apply_resolvent(&self, lambda: C64, x: &CVector) -> Result<CVector> {
        self.check_resolvent_point(lambda)?;
        match &self.spectral {
            Some(s) => Ok(s.apply(|mu| 1.0 / (lambda - mu), x)),
            None => {
                let n = self.dim();
                (CMatrix::identity(n, n) * lambda - &self.matrix)
                    .lu()
                    .solve(x)
                    .ok_or_else(|| Error::SpectrumHit {
                        lambda: format!("{lambda}"),
                        sigma_min: 0.0,
                        threshold: SPECTRUM_TOL,
                    })
            }
        }
    }

    /// `e^{tA}` as a matrix.
    pub fn semigroup(&self, t: f64) -> Result<CMatrix> {
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        let n = self.dim();
        if t == 0.0 {
            return Ok(CMatrix::identity(n, n));
        }
        Ok(match &self.spectral {
            Some(s) => s.function(|mu| (mu * t).exp()),
            None => expm(&(&self.matrix * re(t))),
        })
    }

    /// `e^{tA} x`; returns `x` unchanged for `t = 0`.
    pub fn semigroup_apply(&self, t: f64, x: &CVector) -> Result<CVector> {
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "state has length {} but generator has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        if t == 0.0 {
            return Ok(x.clone());
        }
        Ok(match &self.spectral {
            Some(s) => s.apply(|mu| (mu * t).exp(), x),
            None => expm(&(&self.matrix * re(t))) * x,
        })
    }

    /// `(phi_1(tA), phi_2(tA))`.
    pub fn phi_matrices(&self, t: f64) -> Result<(CMatrix, CMatrix)> {
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        let n = self.dim();
        if let Some(s) = &self.spectral {
            return Ok((
                s.function(|mu| phi_scalars(mu * t).1),
                s.function(|mu| phi_scalars(mu * t).2),
            ));
        }
        let mut aug = CMatrix::zeros(3 * n, 3 * n);
        aug.view_mut((0, 0), (n, n)).copy_from(&(&self.matrix * re(t)));
        aug.view_mut((0, n), (n, n)).fill_with_identity();
        aug.view_mut((n, 2 * n), (n, n)).fill_with_identity();
        let e = expm(&aug);
        Ok((
            e.view((0, n), (n, n)).into_owned(),
            e.view((0, 2 * n), (n, n)).into_owned(),
        ))
    }

    /// `||R(lambda, A) x||`, the discrete stand-in for the extrapolation norm.
    pub fn dual_norm(&self, lambda: C64, x: &CVector) -> Result<f64> {
        Ok(self.metric.norm(&self.apply_resolvent(lambda, x)?))
    }
}

/// A bounded map between two metric coordinate spaces.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub matrix: CMatrix,
    pub domain: Metric,
    pub codomain: Metric,
}

impl OperatorMatrix {
    pub fn new(matrix: CMatrix, domain: Metric, codomain: Metric) -> Self {
        assert_eq!(matrix.ncols(), domain.dim(), "domain metric dimension");
        assert_eq!(matrix.nrows(), codomain.dim(), "codomain metric dimension");
        Self {
            matrix,
            domain,
            codomain,
        }
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Operator norm with respect to the two metrics.
    pub fn norm(&self) -> f64 {
        let hat = self.codomain.half() * &self.matrix * self.domain.inv_half();
        hat.singular_values().max()
    }

    pub fn apply(&self, x: &CVector) -> CVector {
        &self.matrix * x
    }
}

/// One-step exponential integrator operators for `x' = A x + B u` on a step `dt`.
///
/// * `e = e^{A dt}`
/// * `k1 = dt phi_1(A dt) B` (zero-order hold)
/// * `k2 = dt phi_2(A dt) B` (slope correction for a first-order hold)
#[derive(Clone, Debug)]
pub struct Propagator {
    pub dt: f64,
    pub e: CMatrix,
    pub k1: CMatrix,
    pub k2: CMatrix,
}

impl Propagator {
    /// Builds the propagator, using the eigendecomposition when the generator has one.
    pub fn new(gen: &Generator, b: &CMatrix, dt: f64) -> Result<Self> {
        match gen.spectral() {
            Some(_) => Self::spectral(gen, b, dt),
            None => Self::augmented(gen, b, dt),
        }
    }

    pub fn spectral(gen: &Generator, b: &CMatrix, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("step must be positive, got {dt}")));
        }
        let s = gen
            .spectral()
            .ok_or_else(|| Error::InvalidArgument("generator has no eigendecomposition".into()))?;
        let e = s.function(|mu| (mu * dt).exp());
        let k1 = s.function(|mu| phi_scalars(mu * dt).1 * dt) * b;
        let k2 = s.function(|mu| phi_scalars(mu * dt).2 * dt) * b;
        Ok(Self { dt, e, k1, k2 })
    }

    /// Van Loan block exponential: `exp([[A dt, B dt, 0], [0, 0, I], [0, 0, 0]])`.
    pub fn augmented(gen: &Generator, b: &CMatrix, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("step must be positive, got {dt}")));
        }
        let n = gen.dim();
        let u = b.ncols();
        if b.nrows() != n {
            return Err(Error::Dimension("B rows must match generator dimension".into()));
        }
        let mut aug = CMatrix::zeros(n + 2 * u, n + 2 * u);
        aug.view_mut((0, 0), (n, n)).copy_from(&(gen.matrix() * re(dt)));
        aug.view_mut((0, n), (n, u)).copy_from(&(b * re(dt)));
        aug.view_mut((n, n + u), (u, u)).fill_with_identity();
        let ex = expm(&aug);
        Ok(Self {
            dt,
            e: ex.view((0, 0), (n, n)).into_owned(),
            k1: ex.view((0, n), (n, u)).into_owned(),
            k2: ex.view((0, n + u), (n, u)).into_owned(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn real_gen(rows: &[&[f64]]) -> Generator {
        let n = rows.len();
        let m = CMatrix::from_fn(n, n, |i, j| re(rows[i][j]));
        Generator::new(m, Metric::euclidean(n), "test").unwrap()
    }

    fn cvec(v: &[f64]) -> CVector {
        CVector::from_iterator(v.len(), v.iter().map(|x| re(*x)))
    }

    #[test]
    fn resolvent_scalar() {
        let g = real_gen(&[&[-1.0]]);
        let r = g.resolvent(re(0.0)).unwrap();
        assert_relative_eq!(r.matrix[(0, 0)].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn resolvent_diagonal() {
        let g = real_gen(&[&[-1.0, 0.0], &[0.0, -2.0]]);
        let r = g.resolvent(re(1.0)).unwrap();
        assert_relative_eq!(r.matrix[(0, 0)].re, 0.5, epsilon = 1e-14);
        assert_relative_eq!(r.matrix[(1, 1)].re, 1.0 / 3.0, epsilon = 1e-14);
        assert!(r.matrix[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn resolvent_nilpotent_uses_general_path() {
        let g = real_gen(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(g.spectral().is_none());
        let r = g.resolvent(re(1.0)).unwrap();
        let expect = [[1.0, 1.0], [0.0, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(r.matrix[(i, j)].re, expect[i][j], epsilon = 1e-14);
            }
        }
        let resid = (CMatrix::identity(2, 2) * re(1.0) - g.matrix()) * &r.matrix - CMatrix::identity(2, 2);
        assert!(resid.norm() <= 1e-10);
    }

    #[test]
    fn resolvent_in_spectrum_is_rejected() {
        let g = real_gen(&[&[-1.0, 0.0], &[0.0, -2.0]]);
        assert!(matches!(g.resolvent(re(-2.0)), Err(Error::SpectrumHit { .. })));
        let nil = real_gen(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(nil.resolvent(re(0.0)), Err(Error::SpectrumHit { .. })));
    }

    #[test]
    fn semigroup_examples() {
        let g = real_gen(&[&[-1.0, 0.0], &[0.0, -2.0]]);
        let x = cvec(&[1.0, 1.0]);
        assert_eq!(g.semigroup_apply(0.0, &x).unwrap(), x);
        let y = g.semigroup_apply(1.0, &x).unwrap();
        assert_relative_eq!(y[0].re, (-1.0f64).exp(), epsilon = 1e-14);
        assert_relative_eq!(y[1].re, (-2.0f64).exp(), epsilon = 1e-14);

        let nil = real_gen(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let y = nil.semigroup_apply(2.0, &cvec(&[0.0, 1.0])).unwrap();
        assert_relative_eq!(y[0].re, 2.0, epsilon = 1e-13);
        assert_relative_eq!(y[1].re, 1.0, epsilon = 1e-13);
        assert!(matches!(nil.semigroup_apply(-0.1, &y), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn growth_bound_examples() {
        assert_relative_eq!(real_gen(&[&[-1.0, 0.0], &[0.0, -2.0]]).growth_bound(), -1.0, epsilon = 1e-14);
        assert_eq!(real_gen(&[&[0.0, 0.0], &[0.0, 0.0]]).growth_bound(), 0.0);
        let rot = real_gen(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        assert_eq!(rot.spectral().unwrap().kind, Adjointness::SkewAdjoint);
        assert!(rot.growth_bound().abs() < 1e-14);
    }

    #[test]
    fn dual_norm_examples() {
        let g = real_gen(&[&[-1.0]]);
        assert_eq!(g.dual_norm(re(0.0), &cvec(&[0.0])).unwrap(), 0.0);
        assert_relative_eq!(g.dual_norm(re(0.0), &cvec(&[2.0])).unwrap(), 2.0, epsilon = 1e-15);
        let g = real_gen(&[&[-1.0, 0.0], &[0.0, -2.0]]);
        assert_relative_eq!(
            g.dual_norm(re(0.0), &cvec(&[1.0, 1.0])).unwrap(),
            (1.25f64).sqrt(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn pade_matches_spectral_on_stiff_laplacian() {
        let n = 40;
        let h = 1.0 / n as f64;
        let m = CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                re(-2.0 / (h * h))
            } else if i.abs_diff(j) == 1 {
                re(1.0 / (h * h))
            } else {
                re(0.0)
            }
        });
        let g = Generator::new(m.clone(), Metric::euclidean(n), "lap").unwrap();
        assert!(g.spectral().is_some());
        let t = 0.01;
        let a = g.semigroup(t).unwrap();
        let b = expm(&(m * re(t)));
        assert!((a - b).norm() < 1e-11);
    }

    #[test]
    fn propagator_paths_agree() {
        let g = real_gen(&[&[-3.0, 1.0], &[1.0, -2.0]]);
        let b = CMatrix::from_fn(2, 1, |i, _| re(1.0 + i as f64));
        let p = Propagator::spectral(&g, &b, 0.3).unwrap();
        let q = Propagator::augmented(&g, &b, 0.3).unwrap();
        assert!((&p.e - &q.e).norm() < 1e-13);
        assert!((&p.k1 - &q.k1).norm() < 1e-13);
        assert!((&p.k2 - &q.k2).norm() < 1e-13);
    }

    #[test]
    fn phi_scalars_continuous_across_branch() {
        for z in [C64::new(0.999, 0.0), C64::new(-0.999, 0.2)] {
            let (_, a1, a2) = phi_scalars(z);
            let z2 = z * 1.002;
            let (_, b1, b2) = phi_scalars(z2);
            assert!((a1 - b1).norm() < 1e-2 && (a2 - b2).norm() < 1e-2);
            let (e, p1, p2) = phi_scalars(z2);
            assert!(((e - 1.0) / z2 - p1).norm() < 1e-14);
            assert!(((e - 1.0 - z2) / (z2 * z2) - p2).norm() < 1e-13);
        }
        let (_, p1, p2) = phi_scalars(re(0.0));
        assert_eq!(p1, re(1.0));
        assert_eq!(p2, re(0.5));
    }
}
