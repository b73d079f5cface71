//! Hartree–Bose condensate machinery: finite- and infinite-N energy
//! minimization over the condensate parameter ρ, quantum-phase
//! classification and separatrices, condensate-chart geometry, HB metric
//! tensors in the control parameters, and condensate-fraction diagnostics.
//!
//! For the f=1 model the condensate single-particle state is
//! (s† + ρ t†)/√(1+ρ²) with a signed real ρ (the sign carries the φ ∈ {0, π}
//! phase). The infinite-N variational functional minimized over ρ is
//!
//! ```text
//! (-1 + ρ² [-2κ + ρ(ρ - 4χ - 2ρχ²)]) / (1 + ρ²)²
//! ```
//!
//! whose nonanalyticities locate the quantum phase transitions: first-order
//! lines χ = ±√((κ-1)/(κ-2)) for κ < 1 and χ = 0 for κ > 1, meeting at the
//! second-order triple point (1, 0).

use crate::geometry::{metric_field, AnalyticMetric, FdOptions, GeometryError};
use crate::model::{HamiltonianFamily, LmgModel, ParameterPoint};
use crate::spectrum::{diagonalize, SpectrumError};
use crate::{C64, CVector, Matrix2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeanFieldError {
    #[error("finite-difference stencil at ({kappa}, {chi}) straddles a QPT separatrix")]
    Separatrix { kappa: f64, chi: f64 },
    #[error("coexisting minima at ({kappa}, {chi}); no unique condensate")]
    CoexistingMinima { kappa: f64, chi: f64 },
    #[error("condensate chart degenerate: ρ_{index} = 0 makes φ_{index} redundant")]
    ChartDegenerate { index: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// Boson number: a concrete N or the infinite-size limit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SystemSize {
    Finite(u32),
    Infinite,
}

/// Ground-state phase labels: I (ρ = 0), II± (ρ ≷ 0), or a coexistence
/// boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    I,
    IiPlus,
    IiMinus,
    Boundary,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Phase::I => write!(f, "I"),
            Phase::IiPlus => write!(f, "II+"),
            Phase::IiMinus => write!(f, "II-"),
            Phase::Boundary => write!(f, "boundary"),
        }
    }
}

/// Normalized condensate Fock amplitudes over n_t = 0..N:
/// ⟨n_t|ψ_HB⟩ = √(C(N, n_t)) ρ^n_t / (1+ρ²)^(N/2).
pub fn condensate_vector(n: u32, rho: f64) -> Vec<f64> {
    let d = n as usize + 1;
    if rho == 0.0 {
        let mut amps = vec![0.0f64; d];
        amps[0] = 1.0;
        return amps;
    }
    // log-space: the unnormalized recurrence overflows already at N = 200,
    // |ρ| ≳ 6 (the norm squared is (1+ρ²)^N)
    let mut lnfact = vec![0.0f64; d];
    for k in 1..d {
        lnfact[k] = lnfact[k - 1] + (k as f64).ln();
    }
    let nn = n as f64;
    let ln_rho = rho.abs().ln();
    let ln_norm = nn / 2.0 * rho.mul_add(rho, 1.0).ln();
    let mut amps: Vec<f64> = (0..d)
        .map(|k| {
            let ln_binom = lnfact[n as usize] - lnfact[k] - lnfact[n as usize - k];
            let sign = if rho < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
            sign * (0.5 * ln_binom + k as f64 * ln_rho - ln_norm).exp()
        })
        .collect();
    let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
    for a in &mut amps {
        *a /= norm;
    }
    amps
}

fn condensate_cvector(n: u32, rho: f64) -> CVector {
    CVector::from_iterator(n as usize + 1, condensate_vector(n, rho).into_iter().map(|a| C64::new(a, 0.0)))
}

/// The infinite-N variational functional of ρ whose minimizer is ρ(κ, χ).
/// Normalized so that the pure s-condensate (ρ = 0) sits at -1; this is
/// twice the intensive energy limit ⟨H⟩/N.
pub fn hb_energy_infinite(p: ParameterPoint, rho: f64) -> f64 {
    let r2 = rho * rho;
    let s = 1.0 + r2;
    (-1.0 + r2 * (-2.0 * p.kappa + rho * (rho - 4.0 * p.chi - 2.0 * rho * p.chi * p.chi))) / (s * s)
}

/// Intensive energy ⟨ψ_HB(ρ)|H^(N)(λ)|ψ_HB(ρ)⟩ / N of the finite-N
/// condensate (Rayleigh quotient through the explicit Fock vector).
pub fn hb_energy_finite(n: u32, p: ParameterPoint, rho: f64) -> f64 {
    let model = LmgModel::new(n).expect("positive boson number");
    let h = model.matrix(p);
    rayleigh_over_n(&h, n, rho)
}

fn rayleigh_over_n(h: &crate::CMatrix, n: u32, rho: f64) -> f64 {
    let v = condensate_cvector(n, rho);
    let hv = h * &v;
    v.dotc(&hv).re / n as f64
}

/// Dispatches between [`hb_energy_finite`] and [`hb_energy_infinite`].
pub fn hb_energy(size: SystemSize, p: ParameterPoint, rho: f64) -> f64 {
    match size {
        SystemSize::Finite(n) => hb_energy_finite(n, p, rho),
        SystemSize::Infinite => hb_energy_infinite(p, rho),
    }
}

/// Scan bracket and resolution of the global 1D minimization.
#[derive(Clone, Copy, Debug)]
pub struct ScanOptions {
    pub bracket: (f64, f64),
    pub points: usize,
    /// Minima within this of the global value are reported as coexisting.
    pub coexist_tol: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { bracket: (-8.0, 8.0), points: 4001, coexist_tol: 1e-12 }
    }
}

/// Result of a mean-field minimization at one parameter point.
#[derive(Clone, Debug)]
pub struct MeanFieldSolution {
    pub point: ParameterPoint,
    /// Representative minimizer; on coexistence, the one with larger ρ.
    pub rho: f64,
    pub energy: f64,
    /// All coexisting minimizers (ascending ρ).
    pub minima: Vec<f64>,
    pub phase: Phase,
    /// max |dE/dρ| over the reported minima (central FD, step 1e-5).
    pub optimality_residual: f64,
    /// Global minimizer landed within one grid cell of the bracket edge.
    pub bracket_edge: bool,
}

/// 1D objective with an analytic derivative; plain golden-section refinement
/// bottoms out at √ε precision, far short of the 1e-10 optimality contract.
trait RhoObjective {
    fn value(&self, rho: f64) -> f64;
    fn slope(&self, rho: f64) -> f64;
}

struct InfiniteFunctional {
    p: ParameterPoint,
}

impl RhoObjective for InfiniteFunctional {
    fn value(&self, rho: f64) -> f64 {
        hb_energy_infinite(self.p, rho)
    }

    fn slope(&self, rho: f64) -> f64 {
        let (k, x) = (self.p.kappa, self.p.chi);
        let r2 = rho * rho;
        let a = -1.0 + r2 * (-2.0 * k) + r2 * r2 - 4.0 * x * rho * r2 - 2.0 * x * x * r2 * r2;
        let da = -4.0 * k * rho + 4.0 * rho * r2 - 12.0 * x * r2 - 8.0 * x * x * rho * r2;
        let b = (1.0 + r2) * (1.0 + r2);
        let db = 4.0 * rho * (1.0 + r2);
        (da * b - a * db) / (b * b)
    }
}

struct FiniteFunctional {
    h: crate::CMatrix,
    n: u32,
}

impl FiniteFunctional {
    /// Normalized condensate vector and its ρ-derivative,
    /// v'_n = v_n (n/ρ - Nρ/(1+ρ²)).
    fn vectors(&self, rho: f64) -> (CVector, CVector) {
        let d = self.n as usize + 1;
        let v = condensate_cvector(self.n, rho);
        let dv = if rho == 0.0 {
            CVector::from_fn(d, |i, _| {
                C64::new(if i == 1 { (self.n as f64).sqrt() } else { 0.0 }, 0.0)
            })
        } else {
            let factor = self.n as f64 * rho / (1.0 + rho * rho);
            CVector::from_fn(d, |i, _| v[i] * C64::new(i as f64 / rho - factor, 0.0))
        };
        (v, dv)
    }
}

impl RhoObjective for FiniteFunctional {
    fn value(&self, rho: f64) -> f64 {
        rayleigh_over_n(&self.h, self.n, rho)
    }

    fn slope(&self, rho: f64) -> f64 {
        let (v, dv) = self.vectors(rho);
        let hv = &self.h * &v;
        let r = v.dotc(&hv).re;
        2.0 * (dv.dotc(&hv).re - r * dv.dotc(&v).re) / self.n as f64
    }
}

fn golden_min(f: &dyn RhoObjective, mut a: f64, mut b: f64, iters: usize) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f.value(c), f.value(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f.value(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f.value(d);
        }
    }
    if fc < fd { c } else { d }
}

/// Bisection on the analytic slope inside a local-minimum bracket; falls
/// back to the golden-section point when the slope does not straddle zero
/// (flat plateaus).
fn refine_minimum(f: &dyn RhoObjective, a: f64, b: f64) -> f64 {
    let coarse = golden_min(f, a, b, 30);
    let (mut lo, mut hi) = (a, b);
    if !(f.slope(lo) <= 0.0 && f.slope(hi) >= 0.0) {
        return coarse;
    }
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f.slope(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    if f.value(mid) <= f.value(coarse) || f.slope(mid).abs() < f.slope(coarse).abs() {
        mid
    } else {
        coarse
    }
}

const RHO_ZERO_TOL: f64 = 1e-6;

fn classify_minima(minima: &[f64]) -> Phase {
    let zero = minima.iter().any(|r| r.abs() < RHO_ZERO_TOL);
    let pos = minima.iter().any(|r| *r >= RHO_ZERO_TOL);
    let neg = minima.iter().any(|r| *r <= -RHO_ZERO_TOL);
    match (zero, pos, neg) {
        (true, false, false) => Phase::I,
        (false, true, false) => Phase::IiPlus,
        (false, false, true) => Phase::IiMinus,
        _ => Phase::Boundary,
    }
}

/// Global scan of ρ over the bracket followed by golden-section refinement
/// of every local minimum; reports the global minimizer together with any
/// minima degenerate with it within `coexist_tol`.
pub fn hb_minimize_with(size: SystemSize, p: ParameterPoint, opts: &ScanOptions) -> MeanFieldSolution {
    // one Hamiltonian per λ, reused across the whole scan
    let obj: Box<dyn RhoObjective> = match size {
        SystemSize::Finite(n) => {
            Box::new(FiniteFunctional { h: LmgModel::new(n).expect("positive N").matrix(p), n })
        }
        SystemSize::Infinite => Box::new(InfiniteFunctional { p }),
    };

    let (lo, hi) = opts.bracket;
    let m = opts.points;
    let step = (hi - lo) / (m - 1) as f64;
    let values: Vec<f64> = (0..m).map(|i| obj.value(lo + i as f64 * step)).collect();

    let mut candidates: Vec<f64> = Vec::new();
    for i in 0..m {
        let v = values[i];
        let left_up = i == 0 || values[i - 1] >= v;
        let right_up = i == m - 1 || values[i + 1] >= v;
        if left_up && right_up {
            let a = lo + (i.saturating_sub(1)) as f64 * step;
            let b = lo + ((i + 1).min(m - 1)) as f64 * step;
            candidates.push(refine_minimum(obj.as_ref(), a, b));
        }
    }
    // dedupe refined minima that collapsed together
    candidates.sort_by(f64::total_cmp);
    candidates.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let global = candidates
        .iter()
        .copied()
        .min_by(|a, b| obj.value(*a).total_cmp(&obj.value(*b)))
        .expect("scan always yields at least one minimum");
    let e_global = obj.value(global);
    let minima: Vec<f64> = candidates
        .iter()
        .copied()
        .filter(|r| obj.value(*r) - e_global <= opts.coexist_tol)
        .collect();

    let rho = minima.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let optimality_residual = minima.iter().map(|r| obj.slope(*r).abs()).fold(0.0, f64::max);
    let bracket_edge = global - lo < step || hi - global < step;

    MeanFieldSolution {
        point: p,
        rho,
        energy: e_global,
        phase: classify_minima(&minima),
        minima,
        optimality_residual,
        bracket_edge,
    }
}

pub fn hb_minimize(size: SystemSize, p: ParameterPoint) -> MeanFieldSolution {
    hb_minimize_with(size, p, &ScanOptions::default())
}

/// Infinite-N condensate parameter ρ(κ, χ).
pub fn rho_infinite(p: ParameterPoint) -> f64 {
    let sol = hb_minimize(SystemSize::Infinite, p);
    if sol.phase == Phase::I {
        0.0
    } else {
        sol.rho
    }
}

/// The QPT separatrix structure at a given κ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Separatrix {
    /// κ < 1: first-order lines at χ = ±value (QPT-1±).
    FirstOrderPair { chi: f64 },
    /// κ = 1: second-order triple point at χ = 0 (QPT-2).
    SecondOrder,
    /// κ > 1: first-order line at χ = 0 (QPT-1₀).
    FirstOrderZero,
}

/// Critical χ of the phase separatrix at κ: χ_c = ±√((κ-1)/(κ-2)) for
/// κ < 1, the χ = 0 line for κ ≥ 1.
pub fn qpt_separatrix(kappa: f64) -> Separatrix {
    if (kappa - 1.0).abs() < 1e-12 {
        Separatrix::SecondOrder
    } else if kappa < 1.0 {
        Separatrix::FirstOrderPair { chi: ((kappa - 1.0) / (kappa - 2.0)).sqrt() }
    } else {
        Separatrix::FirstOrderZero
    }
}

/// Classifies the ground-state phase by the infinite-N minimizer.
pub fn phase_classify(p: ParameterPoint) -> Phase {
    hb_minimize(SystemSize::Infinite, p).phase
}

/// Signed χ-distance to the nearest separatrix branch at fixed κ.
fn separatrix_distance(p: ParameterPoint) -> f64 {
    match qpt_separatrix(p.kappa) {
        Separatrix::FirstOrderPair { chi } => (p.chi.abs() - chi).abs(),
        Separatrix::SecondOrder => p.chi.abs(),
        Separatrix::FirstOrderZero => p.chi.abs(),
    }
}

const HB_FD_STEP: f64 = 1e-5;

fn guard_separatrix(p: ParameterPoint, step: f64) -> Result<(), MeanFieldError> {
    if separatrix_distance(p) < 2.0 * step {
        return Err(MeanFieldError::Separatrix { kappa: p.kappa, chi: p.chi });
    }
    let center = phase_classify(p);
    if center == Phase::Boundary {
        return Err(MeanFieldError::Separatrix { kappa: p.kappa, chi: p.chi });
    }
    for axis in 0..2 {
        for s in [-1.0, 1.0] {
            if phase_classify(p.offset_axis(axis, s * step)) != center {
                return Err(MeanFieldError::Separatrix { kappa: p.kappa, chi: p.chi });
            }
        }
    }
    Ok(())
}

/// HB approximation of the metric tensor for the f=1 model:
/// g_HB = N/(1+ρ²)² (∂ρ)(∂ρ)ᵀ with ρ the infinite-N minimizer and partials
/// by central differences. Identically rank ≤ 1, det g_HB = 0.
pub fn hb_metric_f1(n: u32, p: ParameterPoint) -> Result<Matrix2, MeanFieldError> {
    guard_separatrix(p, HB_FD_STEP)?;
    let rho = rho_infinite(p);
    let grad = [
        (rho_infinite(p.offset_axis(0, HB_FD_STEP)) - rho_infinite(p.offset_axis(0, -HB_FD_STEP)))
            / (2.0 * HB_FD_STEP),
        (rho_infinite(p.offset_axis(1, HB_FD_STEP)) - rho_infinite(p.offset_axis(1, -HB_FD_STEP)))
            / (2.0 * HB_FD_STEP),
    ];
    let s = 1.0 + rho * rho;
    let c = n as f64 / (s * s);
    Ok(Matrix2::new(
        c * grad[0] * grad[0],
        c * grad[0] * grad[1],
        c * grad[1] * grad[0],
        c * grad[1] * grad[1],
    ))
}

/// Condensate-chart geometry: the block metric over (ρ_1..ρ_f, φ_1..φ_f).
#[derive(Clone, Debug)]
pub struct CondensateGeometry {
    /// g^ρ_kl = (S δ_kl - ρ_k ρ_l)/S²
    pub g_rho: nalgebra::DMatrix<f64>,
    /// g^φ_kl = (S ρ_k² δ_kl - ρ_k² ρ_l²)/S²
    pub g_phi: nalgebra::DMatrix<f64>,
    /// Full 2f-dimensional tensor N·diag(g^ρ, g^φ).
    pub full: nalgebra::DMatrix<f64>,
    /// Chart-degenerate directions: indices k with ρ_k = 0 (φ_k redundant).
    pub degenerate_axes: Vec<usize>,
    /// Closed-form Ricci scalar 4f(f+1)/N of the condensate manifold.
    pub ricci_expected: f64,
    /// Ricci computed numerically on the (ρ, φ) chart (f = 1, away from
    /// chart-degenerate points only).
    pub ricci_numeric: Option<f64>,
}

/// Builds the condensate metric blocks and, for f = 1, verifies the constant
/// curvature numerically through the geometry pipeline.
pub fn condensate_geometry(n: u32, rho: &[f64]) -> Result<CondensateGeometry, MeanFieldError> {
    let f = rho.len();
    assert!(f >= 1, "need at least one degree of freedom");
    let s: f64 = 1.0 + rho.iter().map(|r| r * r).sum::<f64>();
    let g_rho = nalgebra::DMatrix::from_fn(f, f, |k, l| {
        (s * if k == l { 1.0 } else { 0.0 } - rho[k] * rho[l]) / (s * s)
    });
    let g_phi = nalgebra::DMatrix::from_fn(f, f, |k, l| {
        (s * rho[k] * rho[k] * if k == l { 1.0 } else { 0.0 } - rho[k] * rho[k] * rho[l] * rho[l])
            / (s * s)
    });
    let mut full = nalgebra::DMatrix::zeros(2 * f, 2 * f);
    full.view_mut((0, 0), (f, f)).copy_from(&(&g_rho * n as f64));
    full.view_mut((f, f), (f, f)).copy_from(&(&g_phi * n as f64));

    let degenerate_axes: Vec<usize> =
        rho.iter().enumerate().filter(|(_, r)| r.abs() < 1e-8).map(|(k, _)| k).collect();

    let ricci_numeric = if f == 1 && degenerate_axes.is_empty() {
        let nn = n as f64;
        let chart = AnalyticMetric(move |q: ParameterPoint| {
            let s = 1.0 + q.kappa * q.kappa;
            Matrix2::new(nn / (s * s), 0.0, 0.0, nn * q.kappa * q.kappa / (s * s))
        });
        let field = metric_field(&chart, ParameterPoint::new(rho[0], 0.0), &FdOptions::default())?;
        field.ricci
    } else {
        None
    };

    Ok(CondensateGeometry {
        g_rho,
        g_phi,
        full,
        degenerate_axes,
        ricci_expected: 4.0 * f as f64 * (f as f64 + 1.0) / n as f64,
        ricci_numeric,
    })
}

/// A differentiable condensate parametrization λ ↦ α(λ) = (α_1 .. α_f)
/// (the α_0 = 1 amplitude is implicit; normalization is handled internally).
pub trait CondensateMap: Sync {
    fn degrees(&self) -> usize;
    fn amplitudes(&self, p: ParameterPoint) -> Vec<C64>;
    /// Guard hook: maps may reject stencil regions where they are not
    /// differentiable (e.g. across a first-order separatrix).
    fn check_stencil(&self, _p: ParameterPoint, _step: f64) -> Result<(), MeanFieldError> {
        Ok(())
    }
}

/// The f=1 infinite-N minimizer map α(λ) = (ρ(κ, χ)).
pub struct LmgCondensateMap;

impl CondensateMap for LmgCondensateMap {
    fn degrees(&self) -> usize {
        1
    }

    fn amplitudes(&self, p: ParameterPoint) -> Vec<C64> {
        vec![C64::new(rho_infinite(p), 0.0)]
    }

    fn check_stencil(&self, p: ParameterPoint, step: f64) -> Result<(), MeanFieldError> {
        guard_separatrix(p, step)
    }
}

/// General HB metric from the condensate parametrization,
///
/// ```text
/// g_HB,μν = N [ Im Σ_k c*_k ∂μ c_k · Im Σ_l c_l ∂ν c*_l - Re Σ_k c*_k ∂μ∂ν c_k ]
/// ```
///
/// evaluated over the normalized amplitudes c = (1, α_1..α_f)/√S. The k = 0
/// component participates; with unnormalized amplitudes the expression would
/// not reduce to the f=1 outer-product form. The curvature term is computed
/// through the normalization identity Re Σ c*∂μ∂νc = -Re Σ ∂μc*∂νc, so only
/// first differences of the minimizer map enter (double differencing would
/// amplify minimizer noise by h⁻²).
pub fn hb_metric_general<M: CondensateMap>(
    map: &M,
    n: u32,
    p: ParameterPoint,
) -> Result<Matrix2, MeanFieldError> {
    map.check_stencil(p, HB_FD_STEP)?;
    let f = map.degrees();
    let normalized = |q: ParameterPoint| -> Vec<C64> {
        let alpha = map.amplitudes(q);
        debug_assert_eq!(alpha.len(), f);
        let s: f64 = 1.0 + alpha.iter().map(|a| a.norm_sqr()).sum::<f64>();
        let inv = 1.0 / s.sqrt();
        std::iter::once(C64::new(inv, 0.0)).chain(alpha.into_iter().map(|a| a * inv)).collect()
    };

    let h = HB_FD_STEP;
    let c0 = normalized(p);
    let at = |i: f64, j: f64| normalized(p.offset(i * h, j * h));
    let d = |pl: &[C64], mi: &[C64]| -> Vec<C64> {
        pl.iter().zip(mi).map(|(a, b)| (a - b) / C64::new(2.0 * h, 0.0)).collect()
    };
    let first = [d(&at(1.0, 0.0), &at(-1.0, 0.0)), d(&at(0.0, 1.0), &at(0.0, -1.0))];

    let im_sum = |dc: &[C64]| -> f64 { c0.iter().zip(dc).map(|(c, d)| (c.conj() * d).im).sum() };
    let mut g = Matrix2::zeros();
    for mu in 0..2 {
        for nu in 0..2 {
            // Im Σ c_l ∂ν c*_l = -Im Σ c*_l ∂ν c_l
            let term1 = im_sum(&first[mu]) * (-im_sum(&first[nu]));
            let curvature: f64 =
                first[mu].iter().zip(&first[nu]).map(|(a, b)| (a.conj() * b).re).sum();
            g[(mu, nu)] = n as f64 * (term1 + curvature);
        }
    }
    Ok((g + g.transpose()) / 2.0)
}

/// Weight of the full-condensate component in the exact ground state:
/// |⟨ψ_HB(ρ_min^(N))|ψ_0^(N)⟩|².
pub fn condensate_fraction(model: &LmgModel, p: ParameterPoint) -> Result<f64, MeanFieldError> {
    let n = model.boson_number();
    let sol = hb_minimize(SystemSize::Finite(n), p);
    if sol.minima.len() > 1 {
        return Err(MeanFieldError::CoexistingMinima { kappa: p.kappa, chi: p.chi });
    }
    let hb = condensate_cvector(n, sol.rho);
    let spec = diagonalize(&model.matrix(p))?;
    Ok(hb.dotc(&spec.state(0)).norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn condensate_vector_examples() {
        let v = condensate_vector(2, 1.0);
        assert_relative_eq!(v[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(v[1], 0.5 * 2.0_f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(v[2], 0.5, epsilon = 1e-14);

        let v = condensate_vector(7, 0.0);
        assert_eq!(v[0], 1.0);
        assert!(v[1..].iter().all(|&a| a == 0.0));
    }

    proptest! {
        #[test]
        fn condensate_vector_normalized(n in 1u32..120, rho in -6.0f64..6.0) {
            let v = condensate_vector(n, rho);
            let norm: f64 = v.iter().map(|a| a * a).sum();
            prop_assert!((norm - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn infinite_energy_at_origin() {
        assert_relative_eq!(hb_energy_infinite(ParameterPoint::new(0.3, -1.1), 0.0), -1.0);
    }

    #[test]
    fn finite_energy_at_rho_zero_is_ground_of_jz() {
        let e = hb_energy_finite(12, ParameterPoint::new(0.0, 0.0), 0.0);
        assert_relative_eq!(e, -0.5, epsilon = 1e-14);
    }

    #[test]
    fn finite_energy_converges_to_functional_scale() {
        // the variational functional equals twice the intensive energy limit
        let p = ParameterPoint::new(1.4, 0.6);
        let rho = 0.8;
        let target = hb_energy_infinite(p, rho);
        let e200 = 2.0 * hb_energy_finite(200, p, rho);
        let e20 = 2.0 * hb_energy_finite(20, p, rho);
        assert!((e200 - target).abs() < (e20 - target).abs());
        assert!((e200 - target).abs() / target.abs() < 0.01, "N=200 off by {:.3e}", (e200 - target).abs());
    }

    #[test]
    fn minimize_phase_i_point() {
        let sol = hb_minimize(SystemSize::Infinite, ParameterPoint::new(-1.0, 0.2));
        assert_eq!(sol.phase, Phase::I);
        assert!(sol.rho.abs() < 1e-9, "rho = {}", sol.rho);
        assert!(sol.optimality_residual < 1e-10);
        assert!(!sol.bracket_edge);
    }

    #[test]
    fn minimize_coexisting_pair_on_parity_line() {
        let sol = hb_minimize(SystemSize::Infinite, ParameterPoint::new(2.0, 0.0));
        assert_eq!(sol.phase, Phase::Boundary);
        assert_eq!(sol.minima.len(), 2, "minima: {:?}", sol.minima);
        assert_relative_eq!(sol.minima[0], -sol.minima[1], epsilon = 1e-9);
        assert!(sol.rho > 0.1, "representative picks the larger ρ");
        assert!(sol.optimality_residual < 1e-10);
    }

    #[test]
    fn separatrix_jump_at_kappa_zero() {
        let below = hb_minimize(SystemSize::Infinite, ParameterPoint::new(0.0, 0.70));
        assert_eq!(below.phase, Phase::I);
        let above = hb_minimize(SystemSize::Infinite, ParameterPoint::new(0.0, 0.72));
        assert!(above.rho.abs() > 0.1, "rho = {}", above.rho);
        match qpt_separatrix(0.0) {
            Separatrix::FirstOrderPair { chi } => {
                assert_relative_eq!(chi, 0.5_f64.sqrt(), epsilon = 1e-15)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn separatrix_types() {
        assert_eq!(qpt_separatrix(1.0), Separatrix::SecondOrder);
        assert_eq!(qpt_separatrix(3.0), Separatrix::FirstOrderZero);
        assert_eq!(phase_classify(ParameterPoint::new(2.0, 0.5)), Phase::IiPlus);
        assert_eq!(phase_classify(ParameterPoint::new(2.0, -0.5)), Phase::IiMinus);
    }

    #[test]
    fn dp_seeds_sit_on_separatrix() {
        for n in 2..=10u32 {
            for (plus, _) in crate::spectrum::dp_seeds(n) {
                match qpt_separatrix(plus.kappa) {
                    Separatrix::FirstOrderPair { chi } => {
                        assert!((plus.chi - chi).abs() < 1e-12, "N={n} seed off separatrix");
                    }
                    other => panic!("seed at κ={} classified {other:?}", plus.kappa),
                }
            }
        }
    }

    #[test]
    fn rho_odd_in_chi() {
        for &(k, c) in &[(2.0, 0.4), (0.0, 1.0), (-1.0, 1.5)] {
            let up = rho_infinite(ParameterPoint::new(k, c));
            let dn = rho_infinite(ParameterPoint::new(k, -c));
            assert_relative_eq!(up, -dn, epsilon = 1e-7);
        }
    }

    #[test]
    fn finite_minimizer_converges_to_infinite() {
        for &(k, c) in &[(2.0, 0.4), (0.5, 1.2), (-1.0, 1.4)] {
            let p = ParameterPoint::new(k, c);
            let rho = rho_infinite(p);
            let r20 = hb_minimize(SystemSize::Finite(20), p).rho;
            let r200 = hb_minimize(SystemSize::Finite(200), p).rho;
            assert!(
                (r200 - rho).abs() < (r20 - rho).abs(),
                "({k},{c}): |{r200} - {rho}| vs |{r20} - {rho}|"
            );
        }
    }

    #[test]
    fn hb_metric_rank_one_and_degenerate() {
        let g = hb_metric_f1(10, ParameterPoint::new(2.0, 0.7)).unwrap();
        assert!(g.determinant().abs() < 1e-14, "det = {:e}", g.determinant());
        assert!(g.norm() > 0.0);
        // phase I interior: ρ ≡ 0 so the whole tensor vanishes
        let g = hb_metric_f1(10, ParameterPoint::new(-1.0, 0.2)).unwrap();
        assert!(g.norm() < 1e-12);
    }

    #[test]
    fn hb_metric_separatrix_guard() {
        let chi_c = 0.5_f64.sqrt();
        let err = hb_metric_f1(10, ParameterPoint::new(0.0, chi_c + 1e-6)).unwrap_err();
        assert!(matches!(err, MeanFieldError::Separatrix { .. }));
        let err = hb_metric_f1(10, ParameterPoint::new(2.0, 1e-6)).unwrap_err();
        assert!(matches!(err, MeanFieldError::Separatrix { .. }));
    }

    #[test]
    fn condensate_geometry_f1() {
        let geo = condensate_geometry(2, &[0.0]).unwrap();
        assert_relative_eq!(geo.g_rho[(0, 0)], 1.0, epsilon = 1e-14);
        assert_eq!(geo.g_phi[(0, 0)], 0.0);
        assert_eq!(geo.degenerate_axes, vec![0]);
        assert!(geo.ricci_numeric.is_none());

        let geo = condensate_geometry(2, &[0.6]).unwrap();
        assert_eq!(geo.ricci_expected, 4.0);
        let num = geo.ricci_numeric.unwrap();
        assert_relative_eq!(num, 4.0, max_relative = 1e-4);
    }

    #[test]
    fn condensate_geometry_f2_blocks() {
        let rho = [0.7, 1.3];
        let geo = condensate_geometry(5, &rho).unwrap();
        let s: f64 = 1.0 + rho.iter().map(|r| r * r).sum::<f64>();
        for k in 0..2 {
            for l in 0..2 {
                let delta = if k == l { 1.0 } else { 0.0 };
                assert_relative_eq!(
                    geo.g_rho[(k, l)],
                    (s * delta - rho[k] * rho[l]) / (s * s),
                    epsilon = 1e-14
                );
                assert_relative_eq!(
                    geo.g_phi[(k, l)],
                    (s * rho[k] * rho[k] * delta - rho[k] * rho[k] * rho[l] * rho[l]) / (s * s),
                    epsilon = 1e-14
                );
                assert_relative_eq!(geo.full[(k, l)], 5.0 * geo.g_rho[(k, l)], epsilon = 1e-14);
                assert_relative_eq!(
                    geo.full[(2 + k, 2 + l)],
                    5.0 * geo.g_phi[(k, l)],
                    epsilon = 1e-14
                );
                assert_eq!(geo.full[(k, 2 + l)], 0.0);
            }
        }
        assert_relative_eq!(geo.ricci_expected, 24.0 / 5.0, epsilon = 1e-14);
    }

    #[test]
    fn general_hb_metric_reduces_to_f1_form() {
        let p = ParameterPoint::new(2.0, 0.7);
        let direct = hb_metric_f1(12, p).unwrap();
        let general = hb_metric_general(&LmgCondensateMap, 12, p).unwrap();
        assert!(
            (direct - general).norm() < 1e-8,
            "mismatch {:e}",
            (direct - general).norm()
        );
        assert_relative_eq!(general[(0, 1)], general[(1, 0)], epsilon = 1e-12);
    }

    #[test]
    fn general_hb_metric_constant_map_is_zero() {
        struct Frozen;
        impl CondensateMap for Frozen {
            fn degrees(&self) -> usize {
                1
            }
            fn amplitudes(&self, _p: ParameterPoint) -> Vec<C64> {
                vec![C64::new(0.37, 0.0)]
            }
        }
        let g = hb_metric_general(&Frozen, 6, ParameterPoint::new(0.4, -0.9)).unwrap();
        assert!(g.norm() < 1e-10, "norm {:e}", g.norm());
    }

    #[test]
    fn condensate_fraction_limits() {
        let model = LmgModel::new(10).unwrap();
        let f = condensate_fraction(&model, ParameterPoint::new(0.0, 0.0)).unwrap();
        assert_relative_eq!(f, 1.0, epsilon = 1e-12);

        let model = LmgModel::new(100).unwrap();
        let deep = condensate_fraction(&model, ParameterPoint::new(3.0, 1.5)).unwrap();
        assert!(deep < 1.0 - 1e-3, "deep phase II fraction {deep}");
        assert!(deep > 0.0);
    }
}
