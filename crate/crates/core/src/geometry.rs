//! Ground-state geometry at a parameter point: geometric tensor, quantum
//! metric, Berry curvature, metric derivatives, Christoffel symbols, Ricci
//! scalar, and coordinate pullbacks.
//!
//! The geometric tensor comes from the perturbation sum over all excited
//! states,
//!
//! ```text
//! G_μν = Σ_{k>0} ⟨ψ0|∂μH|ψk⟩⟨ψk|∂νH|ψ0⟩ / (E_k - E_0)²
//! ```
//!
//! with metric g = Re G and Berry curvature F = -2 Im G. An independent
//! overlap-based estimate of g (through dℓ² = 1 - |⟨ψ0(λ+dλ)|ψ0(λ)⟩|²)
//! serves as a cross-check. Christoffel symbols and the Ricci scalar are
//! assembled from central finite differences of the metric; both need the
//! inverse metric and are therefore guarded by a determinant threshold below
//! which the geometry is declared undefined.

use crate::model::{HamiltonianFamily, ParameterPoint};
use crate::spectrum::{diagonalize, SpectrumError};
use crate::{C64, CVector, Matrix2};
use thiserror::Error;

/// Ground state considered degenerate below this gap.
pub const DEGENERACY_GAP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("degenerate ground state at ({kappa}, {chi}): gap {gap:.3e}")]
    DegenerateGroundState { kappa: f64, chi: f64, gap: f64 },
    #[error("metric near-degenerate at ({kappa}, {chi}): det g = {det:.3e} < {threshold:.1e}")]
    MetricNearDegenerate { kappa: f64, chi: f64, det: f64, threshold: f64 },
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// Finite-difference and degeneracy-guard knobs.
#[derive(Clone, Copy, Debug)]
pub struct FdOptions {
    /// Relative step for metric derivatives (scaled by max(1, |λ_axis|)).
    pub metric_step: f64,
    /// Absolute step for overlap-based metric estimates.
    pub overlap_step: f64,
    /// det g below this marks the geometry undefined.
    pub det_threshold: f64,
    /// Higher-order stencils (5-point axes, Richardson mixed term).
    pub richardson: bool,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            metric_step: 1e-4,
            overlap_step: 1e-5,
            det_threshold: 1e-10,
            richardson: false,
        }
    }
}

impl FdOptions {
    fn step(&self, p: ParameterPoint, axis: usize) -> f64 {
        self.metric_step * p.coord(axis).abs().max(1.0)
    }
}

/// The complex geometric tensor and its real decomposition.
#[derive(Clone, Copy, Debug)]
pub struct GeometricTensor {
    pub tensor: nalgebra::Matrix2<C64>,
    /// Quantum metric g = Re G (symmetrized).
    pub metric: Matrix2,
    /// Berry curvature F = -2 Im G (antisymmetrized).
    pub berry: Matrix2,
    pub det_metric: f64,
    /// Energy gap at the evaluation point.
    pub gap: f64,
}

fn ground_state<F: HamiltonianFamily>(
    family: &F,
    p: ParameterPoint,
) -> Result<(CVector, f64), GeometryError> {
    let spec = diagonalize(&family.matrix(p))?;
    Ok((spec.state(0), spec.gap()))
}

/// Evaluates the geometric tensor by the perturbation sum over all excited
/// states. Errors on a degenerate ground state (gap < 1e-12).
pub fn geometric_tensor<F: HamiltonianFamily>(
    family: &F,
    p: ParameterPoint,
) -> Result<GeometricTensor, GeometryError> {
    if !p.is_finite() {
        return Err(GeometryError::Spectrum(SpectrumError::NonFinite));
    }
    let spec = diagonalize(&family.matrix(p))?;
    let gap = spec.gap();
    if gap < DEGENERACY_GAP {
        return Err(GeometryError::DegenerateGroundState { kappa: p.kappa, chi: p.chi, gap });
    }
    let dim = family.dimension();
    let v0 = spec.state(0);
    // t[μ][k] = ⟨ψ_k|∂μH|ψ_0⟩
    let mut t = [CVector::zeros(dim), CVector::zeros(dim)];
    for (mu, slot) in t.iter_mut().enumerate() {
        let w = family.derivative(p, mu) * &v0;
        for k in 1..dim {
            slot[k] = spec.eigenvectors.column(k).dotc(&w);
        }
    }
    let mut g = nalgebra::Matrix2::<C64>::zeros();
    for mu in 0..2 {
        for nu in 0..2 {
            let mut acc = C64::new(0.0, 0.0);
            for k in 1..dim {
                let de = spec.energies[k] - spec.energies[0];
                acc += t[mu][k].conj() * t[nu][k] / C64::new(de * de, 0.0);
            }
            g[(mu, nu)] = acc;
        }
    }
    // enforce Hermiticity against rounding
    let herm = (g + g.adjoint()) * C64::new(0.5, 0.0);
    let metric = Matrix2::new(
        herm[(0, 0)].re,
        (herm[(0, 1)].re + herm[(1, 0)].re) / 2.0,
        (herm[(0, 1)].re + herm[(1, 0)].re) / 2.0,
        herm[(1, 1)].re,
    );
    let f01 = -2.0 * (herm[(0, 1)].im - herm[(1, 0)].im) / 2.0;
    let berry = Matrix2::new(0.0, f01, -f01, 0.0);
    Ok(GeometricTensor {
        tensor: herm,
        metric,
        berry,
        det_metric: metric.determinant(),
        gap,
    })
}

/// Overlap-based metric estimate with its diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct OverlapMetric {
    pub metric: Matrix2,
    /// Smallest stencil overlap |⟨ψ0(λ')|ψ0(λ)⟩| encountered.
    pub min_overlap: f64,
    /// Set when a stencil point appears to cross a level crossing
    /// (overlap < 0.5).
    pub crossing_warning: bool,
}

/// Estimates the metric from ground-state infidelities on a small stencil:
/// diagonal entries from ±h axis displacements, the off-diagonal one from
/// the (h, h) displacement. O(h²)-consistent with [`geometric_tensor`].
pub fn metric_from_overlaps<F: HamiltonianFamily>(
    family: &F,
    p: ParameterPoint,
    h: f64,
) -> Result<OverlapMetric, GeometryError> {
    let (v0, gap) = ground_state(family, p)?;
    if gap < DEGENERACY_GAP {
        return Err(GeometryError::DegenerateGroundState { kappa: p.kappa, chi: p.chi, gap });
    }
    let mut min_overlap = f64::INFINITY;
    // dℓ² = 1 - |⟨ψ0(q)|ψ0(p)⟩|² evaluated as the projection residual
    // ‖(I - |ψ0(p)⟩⟨ψ0(p)|) ψ0(q)‖², avoiding the 1 - (1 - ε) cancellation
    // that would otherwise cap the accuracy near ε ~ g h².
    let mut dl2 = |q: ParameterPoint| -> Result<f64, GeometryError> {
        let (vq, _) = ground_state(family, q)?;
        let c = v0.dotc(&vq);
        min_overlap = min_overlap.min(c.norm());
        let resid = &vq - &v0 * c;
        Ok(resid.norm_squared())
    };
    let g11 = (dl2(p.offset(h, 0.0))? + dl2(p.offset(-h, 0.0))?) / (2.0 * h * h);
    let g22 = (dl2(p.offset(0.0, h))? + dl2(p.offset(0.0, -h))?) / (2.0 * h * h);
    let diag = (dl2(p.offset(h, h))? + dl2(p.offset(-h, -h))?) / 2.0;
    let g12 = (diag - g11 * h * h - g22 * h * h) / (2.0 * h * h);
    Ok(OverlapMetric {
        metric: Matrix2::new(g11, g12, g12, g22),
        min_overlap,
        crossing_warning: min_overlap < 0.5,
    })
}

/// Anything that can produce a 2x2 metric at a point: quantum families,
/// closed-form metrics, pullbacks of either.
pub trait MetricSource: Sync {
    fn metric(&self, p: ParameterPoint) -> Result<Matrix2, GeometryError>;
}

/// Metric of a Hamiltonian family through the perturbation sum.
pub struct QuantumMetric<'a, F> {
    pub family: &'a F,
}

impl<'a, F: HamiltonianFamily> QuantumMetric<'a, F> {
    pub fn new(family: &'a F) -> Self {
        Self { family }
    }
}

impl<F: HamiltonianFamily> MetricSource for QuantumMetric<'_, F> {
    fn metric(&self, p: ParameterPoint) -> Result<Matrix2, GeometryError> {
        Ok(geometric_tensor(self.family, p)?.metric)
    }
}

/// Closed-form metric given by a function.
pub struct AnalyticMetric<F>(pub F);

impl<F: Fn(ParameterPoint) -> Matrix2 + Sync> MetricSource for AnalyticMetric<F> {
    fn metric(&self, p: ParameterPoint) -> Result<Matrix2, GeometryError> {
        Ok(self.0(p))
    }
}

/// A differentiable coordinate map ξ ↦ λ with its Jacobian ∂λ/∂ξ.
pub trait ChartMap: Sync {
    fn to_base(&self, xi: ParameterPoint) -> ParameterPoint;
    fn jacobian(&self, xi: ParameterPoint) -> Matrix2;
}

/// Polar chart about a center, optionally shifted: ξ = (R̃, Θ) maps to
/// λ = center + (R̃ - shift)(cosΘ, sinΘ). With shift = 0 this is the plain
/// polar chart; shift 1/2 re-presents a diabolic point as a circular
/// boundary of circumference π.
#[derive(Clone, Copy, Debug)]
pub struct PolarChart {
    pub center: ParameterPoint,
    pub shift: f64,
}

impl ChartMap for PolarChart {
    fn to_base(&self, xi: ParameterPoint) -> ParameterPoint {
        let r = xi.kappa - self.shift;
        self.center.offset(r * xi.chi.cos(), r * xi.chi.sin())
    }

    fn jacobian(&self, xi: ParameterPoint) -> Matrix2 {
        let r = xi.kappa - self.shift;
        let (s, c) = xi.chi.sin_cos();
        Matrix2::new(c, -r * s, s, r * c)
    }
}

/// Linear chart λ = origin + M ξ.
#[derive(Clone, Copy, Debug)]
pub struct LinearChart {
    pub origin: ParameterPoint,
    pub matrix: Matrix2,
}

impl ChartMap for LinearChart {
    fn to_base(&self, xi: ParameterPoint) -> ParameterPoint {
        self.origin.offset(
            self.matrix[(0, 0)] * xi.kappa + self.matrix[(0, 1)] * xi.chi,
            self.matrix[(1, 0)] * xi.kappa + self.matrix[(1, 1)] * xi.chi,
        )
    }

    fn jacobian(&self, _xi: ParameterPoint) -> Matrix2 {
        self.matrix
    }
}

/// Smoothing reparametrization of the first axis about a critical value:
/// λ1 = λc + ξ1 exp(-(a/ξ1)²), λ2 = ξ2. Smooth but non-analytic at ξ1 = 0,
/// where every derivative vanishes.
#[derive(Clone, Copy, Debug)]
pub struct SmoothedAxisChart {
    pub critical: f64,
    pub scale: f64,
}

impl SmoothedAxisChart {
    fn warp(&self, x: f64) -> f64 {
        if x == 0.0 {
            0.0
        } else {
            let q = self.scale / x;
            x * (-q * q).exp()
        }
    }

    fn warp_derivative(&self, x: f64) -> f64 {
        if x == 0.0 {
            0.0
        } else {
            let q2 = (self.scale / x) * (self.scale / x);
            (-q2).exp() * (1.0 + 2.0 * q2)
        }
    }
}

impl ChartMap for SmoothedAxisChart {
    fn to_base(&self, xi: ParameterPoint) -> ParameterPoint {
        ParameterPoint::new(self.critical + self.warp(xi.kappa), xi.chi)
    }

    fn jacobian(&self, xi: ParameterPoint) -> Matrix2 {
        Matrix2::new(self.warp_derivative(xi.kappa), 0.0, 0.0, 1.0)
    }
}

/// A metric source seen through a coordinate map: g'(ξ) = Jᵀ g(λ(ξ)) J.
pub struct PullbackSource<'a, S, M> {
    pub source: &'a S,
    pub chart: M,
}

impl<S: MetricSource, M: ChartMap> MetricSource for PullbackSource<'_, S, M> {
    fn metric(&self, xi: ParameterPoint) -> Result<Matrix2, GeometryError> {
        let j = self.chart.jacobian(xi);
        let g = self.source.metric(self.chart.to_base(xi))?;
        Ok(j.transpose() * g * j)
    }
}

/// Pullback of a metric at one point, with a singular-Jacobian flag. The
/// metric is still returned when the Jacobian is singular; it is genuinely
/// degenerate there.
pub fn pullback_metric<S: MetricSource, M: ChartMap>(
    source: &S,
    chart: &M,
    xi: ParameterPoint,
) -> Result<(Matrix2, bool), GeometryError> {
    let j = chart.jacobian(xi);
    let g = source.metric(chart.to_base(xi))?;
    let singular = j.determinant().abs() < f64::EPSILON * j.norm().powi(2).max(f64::MIN_POSITIVE);
    Ok((j.transpose() * g * j, singular))
}

fn sym(m: Matrix2) -> Matrix2 {
    (m + m.transpose()) / 2.0
}

/// Metric and its first and second partials at a point.
#[derive(Clone, Copy, Debug)]
pub struct MetricDerivatives {
    pub metric: Matrix2,
    /// first[σ] = ∂σ g
    pub first: [Matrix2; 2],
    /// second[a][b] = ∂a ∂b g (symmetric in a, b)
    pub second: [[Matrix2; 2]; 2],
}

/// Central differences of the metric on a 3x3 stencil (5-point axes plus a
/// Richardson-extrapolated mixed term when `richardson` is set).
pub fn metric_derivatives<S: MetricSource>(
    source: &S,
    p: ParameterPoint,
    opts: &FdOptions,
) -> Result<MetricDerivatives, GeometryError> {
    let h = [opts.step(p, 0), opts.step(p, 1)];
    let at = |i: f64, j: f64| -> Result<Matrix2, GeometryError> {
        Ok(sym(source.metric(p.offset(i * h[0], j * h[1]))?))
    };
    let g0 = at(0.0, 0.0)?;
    let (gp1, gm1, gp2, gm2) = (at(1.0, 0.0)?, at(-1.0, 0.0)?, at(0.0, 1.0)?, at(0.0, -1.0)?);
    let (gpp, gpm, gmp, gmm) = (at(1.0, 1.0)?, at(1.0, -1.0)?, at(-1.0, 1.0)?, at(-1.0, -1.0)?);

    let mixed_h = (gpp - gpm - gmp + gmm) / (4.0 * h[0] * h[1]);
    let (first, second) = if opts.richardson {
        let (gp1x, gm1x) = (at(2.0, 0.0)?, at(-2.0, 0.0)?);
        let (gp2x, gm2x) = (at(0.0, 2.0)?, at(0.0, -2.0)?);
        let (gppx, gpmx, gmpx, gmmx) = (at(2.0, 2.0)?, at(2.0, -2.0)?, at(-2.0, 2.0)?, at(-2.0, -2.0)?);
        let d1 = [
            (-gp1x + gp1 * 8.0 - gm1 * 8.0 + gm1x) / (12.0 * h[0]),
            (-gp2x + gp2 * 8.0 - gm2 * 8.0 + gm2x) / (12.0 * h[1]),
        ];
        let d11 = (-gp1x + gp1 * 16.0 - g0 * 30.0 + gm1 * 16.0 - gm1x) / (12.0 * h[0] * h[0]);
        let d22 = (-gp2x + gp2 * 16.0 - g0 * 30.0 + gm2 * 16.0 - gm2x) / (12.0 * h[1] * h[1]);
        let mixed_2h = (gppx - gpmx - gmpx + gmmx) / (16.0 * h[0] * h[1]);
        let d12 = (mixed_h * 4.0 - mixed_2h) / 3.0;
        (d1, [[d11, d12], [d12, d22]])
    } else {
        let d1 = [(gp1 - gm1) / (2.0 * h[0]), (gp2 - gm2) / (2.0 * h[1])];
        let d11 = (gp1 - g0 * 2.0 + gm1) / (h[0] * h[0]);
        let d22 = (gp2 - g0 * 2.0 + gm2) / (h[1] * h[1]);
        (d1, [[d11, mixed_h], [mixed_h, d22]])
    };
    Ok(MetricDerivatives { metric: g0, first, second })
}

/// Christoffel symbols Γ_αβγ (first index contracted with the inverse
/// metric, symmetric in the last two).
#[derive(Clone, Copy, Debug)]
pub struct Christoffel(pub [[[f64; 2]; 2]; 2]);

impl Christoffel {
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.0[a][b][c]
    }
}

fn invert_guarded(
    g: &Matrix2,
    p: ParameterPoint,
    threshold: f64,
) -> Result<(Matrix2, f64), GeometryError> {
    let det = g.determinant();
    if det < threshold {
        return Err(GeometryError::MetricNearDegenerate {
            kappa: p.kappa,
            chi: p.chi,
            det,
            threshold,
        });
    }
    let inv = Matrix2::new(g[(1, 1)], -g[(0, 1)], -g[(1, 0)], g[(0, 0)]) / det;
    Ok((inv, det))
}

fn christoffel_from(g_inv: &Matrix2, first: &[Matrix2; 2]) -> Christoffel {
    let mut out = [[[0.0; 2]; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                let mut acc = 0.0;
                for m in 0..2 {
                    acc += g_inv[(a, m)]
                        * (first[c][(m, b)] + first[b][(c, m)] - first[m][(b, c)]);
                }
                out[a][b][c] = acc / 2.0;
            }
        }
    }
    Christoffel(out)
}

/// Christoffel symbols plus the metric data they came from; the working set
/// of the geodesic integrator.
#[derive(Clone, Copy, Debug)]
pub struct ConnectionData {
    pub metric: Matrix2,
    pub det: f64,
    pub christoffel: Christoffel,
}

/// Connection at a point from center + axis stencil metric evaluations.
pub fn christoffel_data<S: MetricSource>(
    source: &S,
    p: ParameterPoint,
    opts: &FdOptions,
) -> Result<ConnectionData, GeometryError> {
    let h = [opts.step(p, 0), opts.step(p, 1)];
    let g0 = sym(source.metric(p)?);
    let (inv, det) = invert_guarded(&g0, p, opts.det_threshold)?;
    let mut first = [Matrix2::zeros(), Matrix2::zeros()];
    for axis in 0..2 {
        let gp = sym(source.metric(p.offset_axis(axis, h[axis]))?);
        let gm = sym(source.metric(p.offset_axis(axis, -h[axis]))?);
        first[axis] = if opts.richardson {
            let gp2 = sym(source.metric(p.offset_axis(axis, 2.0 * h[axis]))?);
            let gm2 = sym(source.metric(p.offset_axis(axis, -2.0 * h[axis]))?);
            (-gp2 + gp * 8.0 - gm * 8.0 + gm2) / (12.0 * h[axis])
        } else {
            (gp - gm) / (2.0 * h[axis])
        };
    }
    Ok(ConnectionData { metric: g0, det, christoffel: christoffel_from(&inv, &first) })
}

/// Christoffel symbols at a point; errors when det g is below threshold.
pub fn christoffel<S: MetricSource>(
    source: &S,
    p: ParameterPoint,
    opts: &FdOptions,
) -> Result<Christoffel, GeometryError> {
    Ok(christoffel_data(source, p, opts)?.christoffel)
}

fn ricci_from(derivs: &MetricDerivatives, inv: &Matrix2) -> f64 {
    let first = &derivs.first;
    let second = &derivs.second;
    // C[ρ][ν][σ] = ∂σ g_ρν + ∂ν g_σρ - ∂ρ g_νσ and its derivatives
    let c3 = |r: usize, n: usize, s: usize| first[s][(r, n)] + first[n][(s, r)] - first[r][(n, s)];
    let dc3 = |m: usize, r: usize, n: usize, s: usize| {
        second[m][s][(r, n)] + second[m][n][(s, r)] - second[m][r][(n, s)]
    };
    // ∂μ g⁻¹ = -g⁻¹ (∂μ g) g⁻¹
    let dinv = [-inv * first[0] * inv, -inv * first[1] * inv];

    let mut gamma = [[[0.0; 2]; 2]; 2];
    let mut dgamma = [[[[0.0; 2]; 2]; 2]; 2];
    for l in 0..2 {
        for n in 0..2 {
            for s in 0..2 {
                let mut acc = 0.0;
                for r in 0..2 {
                    acc += inv[(l, r)] * c3(r, n, s);
                }
                gamma[l][n][s] = acc / 2.0;
                for m in 0..2 {
                    let mut d = 0.0;
                    for r in 0..2 {
                        d += dinv[m][(l, r)] * c3(r, n, s) + inv[(l, r)] * dc3(m, r, n, s);
                    }
                    dgamma[m][l][n][s] = d / 2.0;
                }
            }
        }
    }

    let mut ricci = 0.0;
    for s in 0..2 {
        for n in 0..2 {
            let mut term = 0.0;
            for m in 0..2 {
                term += dgamma[m][m][n][s] - dgamma[n][m][m][s];
                for l in 0..2 {
                    term += gamma[m][m][l] * gamma[l][n][s] - gamma[m][n][l] * gamma[l][m][s];
                }
            }
            ricci += inv[(s, n)] * term;
        }
    }
    ricci
}

/// Ricci scalar at a point via the finite-difference pipeline.
pub fn ricci_scalar<S: MetricSource>(
    source: &S,
    p: ParameterPoint,
    opts: &FdOptions,
) -> Result<f64, GeometryError> {
    let derivs = metric_derivatives(source, p, opts)?;
    let (inv, _) = invert_guarded(&derivs.metric, p, opts.det_threshold)?;
    Ok(ricci_from(&derivs, &inv))
}

/// Full local geometry record: metric, derivatives, connection, curvature.
/// Christoffel/Ricci are `None` exactly when the metric determinant is below
/// the degeneracy threshold.
#[derive(Clone, Copy, Debug)]
pub struct MetricField {
    pub point: ParameterPoint,
    pub metric: Matrix2,
    pub det: f64,
    pub first: [Matrix2; 2],
    pub second: [[Matrix2; 2]; 2],
    pub christoffel: Option<Christoffel>,
    pub ricci: Option<f64>,
    /// Gaussian curvature K = R/2.
    pub gaussian: Option<f64>,
    pub degenerate: bool,
}

/// Evaluates the full [`MetricField`] at a point. Degenerate points are
/// reported in-band through the flag rather than as an error.
pub fn metric_field<S: MetricSource>(
    source: &S,
    p: ParameterPoint,
    opts: &FdOptions,
) -> Result<MetricField, GeometryError> {
    let derivs = metric_derivatives(source, p, opts)?;
    let det = derivs.metric.determinant();
    if det < opts.det_threshold {
        return Ok(MetricField {
            point: p,
            metric: derivs.metric,
            det,
            first: derivs.first,
            second: derivs.second,
            christoffel: None,
            ricci: None,
            gaussian: None,
            degenerate: true,
        });
    }
    let inv = Matrix2::new(
        derivs.metric[(1, 1)],
        -derivs.metric[(0, 1)],
        -derivs.metric[(1, 0)],
        derivs.metric[(0, 0)],
    ) / det;
    let ricci = ricci_from(&derivs, &inv);
    Ok(MetricField {
        point: p,
        metric: derivs.metric,
        det,
        first: derivs.first,
        second: derivs.second,
        christoffel: Some(christoffel_from(&inv, &derivs.first)),
        ricci: Some(ricci),
        gaussian: Some(ricci / 2.0),
        degenerate: false,
    })
}

/// The closed-form two-level ground-state metric in (θ, φ) coordinates:
/// the round 2-sphere of radius 1/2.
pub fn sphere_half_metric(p: ParameterPoint) -> Matrix2 {
    let s = p.kappa.sin();
    Matrix2::new(0.25, 0.0, 0.0, 0.25 * s * s)
}
