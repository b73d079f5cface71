//! Parametrized Hamiltonian families: the f=1 interacting-boson (LMG) model
//! in its quasispin form and two-level Bloch models, all behind a common
//! family abstraction exposing analytic parameter derivatives.
//!
//! The LMG Hamiltonian in the |j = N/2, m⟩ basis reads
//!
//! ```text
//! H = J_z - (1/N) [ κ J_x² + χ {J_x, J_z + N/2} + χ² (J_z + N/2)² ] - (κ/4) I
//! ```
//!
//! with states indexed by the t-boson number n_t = 0..N (m = n_t - N/2), so
//! the matrix is pentadiagonal. The constant shift -κ/4 is geometrically
//! inert; every downstream quantity is invariant under adding c·I.

use crate::{C64, CMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("boson number must be at least 1, got {0}")]
    InvalidSize(u64),
    #[error("non-finite parameter point ({0}, {1})")]
    NonFinitePoint(f64, f64),
    #[error("non-finite input {name}: {value}")]
    NonFiniteInput { name: &'static str, value: f64 },
}

/// A point λ = (κ, χ) in the two-dimensional control space.
///
/// Chart-based families (polar, Bloch-sphere) reuse the container with their
/// own two coordinates in the `kappa`/`chi` slots.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub kappa: f64,
    pub chi: f64,
}

impl ParameterPoint {
    pub fn new(kappa: f64, chi: f64) -> Self {
        Self { kappa, chi }
    }

    pub fn is_finite(&self) -> bool {
        self.kappa.is_finite() && self.chi.is_finite()
    }

    pub fn coord(&self, axis: usize) -> f64 {
        match axis {
            0 => self.kappa,
            1 => self.chi,
            _ => panic!("parameter axis out of range: {axis}"),
        }
    }

    pub fn offset(&self, d_kappa: f64, d_chi: f64) -> Self {
        Self::new(self.kappa + d_kappa, self.chi + d_chi)
    }

    /// Offset along a single axis (0 = κ, 1 = χ).
    pub fn offset_axis(&self, axis: usize, h: f64) -> Self {
        match axis {
            0 => Self::new(self.kappa + h, self.chi),
            1 => Self::new(self.kappa, self.chi + h),
            _ => panic!("parameter axis out of range: {axis}"),
        }
    }

    /// Euclidean distance in the parameter plane.
    pub fn distance(&self, other: &Self) -> f64 {
        (self.kappa - other.kappa).hypot(self.chi - other.chi)
    }
}

/// A parametrized family of Hermitian Hamiltonians on a fixed Hilbert space,
/// with analytic first (and optionally second) parameter derivatives.
///
/// Implementations must keep `matrix` and all derivatives Hermitian; callers
/// rely on `derivative` agreeing with central finite differences of `matrix`
/// to O(h²).
pub trait HamiltonianFamily: Sync {
    fn dimension(&self) -> usize;

    fn matrix(&self, p: ParameterPoint) -> CMatrix;

    /// Analytic ∂H/∂λ_axis, axis ∈ {0, 1}.
    fn derivative(&self, p: ParameterPoint, axis: usize) -> CMatrix;

    /// Analytic ∂²H/∂λ_a∂λ_b where available.
    fn second_derivative(&self, _p: ParameterPoint, _a: usize, _b: usize) -> Option<CMatrix> {
        None
    }
}

/// The f=1 boson (LMG) model with N bosons: dimension d = N + 1.
#[derive(Clone, Copy, Debug)]
pub struct LmgModel {
    n: u32,
}

impl LmgModel {
    pub fn new(n: u32) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::InvalidSize(0));
        }
        Ok(Self { n })
    }

    pub fn boson_number(&self) -> u32 {
        self.n
    }

    /// Constant energy shift E0(κ, χ) = -κ/4.
    pub fn energy_shift(&self, p: ParameterPoint) -> f64 {
        -p.kappa / 4.0
    }

    /// Ladder coefficient ⟨n+1| t†s |n⟩ = √((n+1)(N-n)); equals the quasispin
    /// J₊ matrix element √((j-m)(j+m+1)) under m = n - N/2, j = N/2.
    fn ladder(&self, n: usize) -> f64 {
        let nn = self.n as f64;
        (((n + 1) as f64) * (nn - n as f64)).sqrt()
    }

    fn check(&self, p: ParameterPoint) -> Result<(), ModelError> {
        if !p.is_finite() {
            return Err(ModelError::NonFinitePoint(p.kappa, p.chi));
        }
        Ok(())
    }
}

fn real_mat(d: usize, fill: impl Fn(&mut dyn FnMut(usize, usize, f64))) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    let mut set = |r: usize, c: usize, v: f64| {
        m[(r, c)] = C64::new(v, 0.0);
        if r != c {
            m[(c, r)] = C64::new(v, 0.0);
        }
    };
    fill(&mut set);
    m
}

impl HamiltonianFamily for LmgModel {
    fn dimension(&self) -> usize {
        self.n as usize + 1
    }

    fn matrix(&self, p: ParameterPoint) -> CMatrix {
        self.check(p).expect("finite parameter point");
        let nn = self.n as f64;
        let d = self.dimension();
        real_mat(d, |set| {
            for n in 0..d {
                let nf = n as f64;
                // diagonal of J_x²: [n(N-n+1) + (n+1)(N-n)] / 4
                let jx2 = (nf * (nn - nf + 1.0) + (nf + 1.0) * (nn - nf)) / 4.0;
                let diag = (nf - nn / 2.0)
                    - (p.kappa * jx2 + p.chi * p.chi * nf * nf) / nn
                    + self.energy_shift(p);
                set(n, n, diag);
                if n + 1 < d {
                    // {J_x, n_t} first off-diagonal: ladder(n)·(2n+1)/2
                    set(n + 1, n, -p.chi / nn * self.ladder(n) * (2.0 * nf + 1.0) / 2.0);
                }
                if n + 2 < d {
                    // J_x² second off-diagonal: ladder(n)·ladder(n+1)/4
                    set(n + 2, n, -p.kappa / (4.0 * nn) * self.ladder(n) * self.ladder(n + 1));
                }
            }
        })
    }

    fn derivative(&self, p: ParameterPoint, axis: usize) -> CMatrix {
        self.check(p).expect("finite parameter point");
        let nn = self.n as f64;
        let d = self.dimension();
        match axis {
            // ∂H/∂κ = -J_x²/N - (1/4) I
            0 => real_mat(d, |set| {
                for n in 0..d {
                    let nf = n as f64;
                    let jx2 = (nf * (nn - nf + 1.0) + (nf + 1.0) * (nn - nf)) / 4.0;
                    set(n, n, -jx2 / nn - 0.25);
                    if n + 2 < d {
                        set(n + 2, n, -self.ladder(n) * self.ladder(n + 1) / (4.0 * nn));
                    }
                }
            }),
            // ∂H/∂χ = -{J_x, n_t}/N - (2χ/N) n_t²
            1 => real_mat(d, |set| {
                for n in 0..d {
                    let nf = n as f64;
                    set(n, n, -2.0 * p.chi * nf * nf / nn);
                    if n + 1 < d {
                        set(n + 1, n, -self.ladder(n) * (2.0 * nf + 1.0) / (2.0 * nn));
                    }
                }
            }),
            _ => panic!("parameter axis out of range: {axis}"),
        }
    }

    fn second_derivative(&self, _p: ParameterPoint, a: usize, b: usize) -> Option<CMatrix> {
        let nn = self.n as f64;
        let d = self.dimension();
        // linear in κ, quadratic in χ: only ∂²/∂χ² survives
        let m = if a == 1 && b == 1 {
            real_mat(d, |set| {
                for n in 0..d {
                    let nf = n as f64;
                    set(n, n, -2.0 * nf * nf / nn);
                }
            })
        } else {
            CMatrix::zeros(d, d)
        };
        Some(m)
    }
}

/// Builds the LMG Hamiltonian matrix, validating inputs.
pub fn lmg_matrix(n: u32, p: ParameterPoint) -> Result<CMatrix, ModelError> {
    if !p.is_finite() {
        return Err(ModelError::NonFinitePoint(p.kappa, p.chi));
    }
    Ok(LmgModel::new(n)?.matrix(p))
}

/// Analytic (∂H/∂κ, ∂H/∂χ, ∂²H/∂χ²) for the LMG model. The model is linear
/// in κ and quadratic in χ, so ∂²H/∂κ² and ∂²H/∂κ∂χ vanish identically.
pub fn lmg_derivatives(n: u32, p: ParameterPoint) -> Result<(CMatrix, CMatrix, CMatrix), ModelError> {
    if !p.is_finite() {
        return Err(ModelError::NonFinitePoint(p.kappa, p.chi));
    }
    let model = LmgModel::new(n)?;
    let d2 = model
        .second_derivative(p, 1, 1)
        .expect("LMG second derivatives are analytic");
    Ok((model.derivative(p, 0), model.derivative(p, 1), d2))
}

/// 2x2 Hermitian matrix c·I - x σ_x - y σ_y - z σ_z.
///
/// Eigenvalues are c ∓ r with r = √(x²+y²+z²); r = 0 is the doubly
/// degenerate (diabolic) case.
pub fn two_level_matrix(c: f64, x: f64, y: f64, z: f64) -> Result<CMatrix, ModelError> {
    for (name, value) in [("c", c), ("x", x), ("y", y), ("z", z)] {
        if !value.is_finite() {
            return Err(ModelError::NonFiniteInput { name, value });
        }
    }
    Ok(CMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(c - z, 0.0),
            C64::new(-x, y),
            C64::new(-x, -y),
            C64::new(c + z, 0.0),
        ],
    ))
}

/// Fixed two-level model instance (one Bloch vector).
#[derive(Clone, Copy, Debug)]
pub struct TwoLevelModel {
    pub c: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl TwoLevelModel {
    pub fn matrix(&self) -> Result<CMatrix, ModelError> {
        two_level_matrix(self.c, self.x, self.y, self.z)
    }

    pub fn radius(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// Two-level family on spherical coordinates p = (θ, φ):
/// (x, y, z) = r (sinθ cosφ, sinθ sinφ, cosθ) at fixed radius r.
///
/// The ground-state manifold carries the metric diag(1/4, sin²θ/4)
/// independent of r; the σ_y term makes the matrix genuinely complex.
#[derive(Clone, Copy, Debug)]
pub struct TwoLevelSphereFamily {
    pub radius: f64,
    pub shift: f64,
}

impl TwoLevelSphereFamily {
    pub fn new(radius: f64) -> Self {
        Self { radius, shift: 0.0 }
    }

    fn bloch(&self, p: ParameterPoint) -> (f64, f64, f64) {
        let (theta, phi) = (p.kappa, p.chi);
        (
            self.radius * theta.sin() * phi.cos(),
            self.radius * theta.sin() * phi.sin(),
            self.radius * theta.cos(),
        )
    }
}

impl HamiltonianFamily for TwoLevelSphereFamily {
    fn dimension(&self) -> usize {
        2
    }

    fn matrix(&self, p: ParameterPoint) -> CMatrix {
        let (x, y, z) = self.bloch(p);
        two_level_matrix(self.shift, x, y, z).expect("finite Bloch point")
    }

    fn derivative(&self, p: ParameterPoint, axis: usize) -> CMatrix {
        let (theta, phi) = (p.kappa, p.chi);
        let r = self.radius;
        let (dx, dy, dz) = match axis {
            0 => (
                r * theta.cos() * phi.cos(),
                r * theta.cos() * phi.sin(),
                -r * theta.sin(),
            ),
            1 => (
                -r * theta.sin() * phi.sin(),
                r * theta.sin() * phi.cos(),
                0.0,
            ),
            _ => panic!("parameter axis out of range: {axis}"),
        };
        // d/dλ of (c I - x σx - y σy - z σz) with constant c
        CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(-dz, 0.0),
                C64::new(-dx, dy),
                C64::new(-dx, -dy),
                C64::new(dz, 0.0),
            ],
        )
    }
}

/// Two-level family on an (x, z) plane slice: p = (λ1, λ2) ↦ Bloch vector
/// (λ1, 0, λ2). Real-symmetric, diabolic point at the origin.
#[derive(Clone, Copy, Debug, Default)]
pub struct TwoLevelPlaneFamily {
    pub shift: f64,
}

impl HamiltonianFamily for TwoLevelPlaneFamily {
    fn dimension(&self) -> usize {
        2
    }

    fn matrix(&self, p: ParameterPoint) -> CMatrix {
        two_level_matrix(self.shift, p.kappa, 0.0, p.chi).expect("finite point")
    }

    fn derivative(&self, _p: ParameterPoint, axis: usize) -> CMatrix {
        let (dx, dz) = match axis {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            _ => panic!("parameter axis out of range: {axis}"),
        };
        CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(-dz, 0.0),
                C64::new(-dx, 0.0),
                C64::new(-dx, 0.0),
                C64::new(dz, 0.0),
            ],
        )
    }

    fn second_derivative(&self, _p: ParameterPoint, _a: usize, _b: usize) -> Option<CMatrix> {
        Some(CMatrix::zeros(2, 2))
    }
}

/// Wraps a family, adding a constant multiple of the identity. Geometric
/// quantities must be invariant under this wrapper.
pub struct ShiftedFamily<F> {
    pub inner: F,
    pub shift: f64,
}

impl<F: HamiltonianFamily> HamiltonianFamily for ShiftedFamily<F> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn matrix(&self, p: ParameterPoint) -> CMatrix {
        let mut m = self.inner.matrix(p);
        for i in 0..m.nrows() {
            m[(i, i)] += C64::new(self.shift, 0.0);
        }
        m
    }

    fn derivative(&self, p: ParameterPoint, axis: usize) -> CMatrix {
        self.inner.derivative(p, axis)
    }

    fn second_derivative(&self, p: ParameterPoint, a: usize, b: usize) -> Option<CMatrix> {
        self.inner.second_derivative(p, a, b)
    }
}
