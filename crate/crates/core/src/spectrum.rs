//! Exact diagonalization with a deterministic eigenvector gauge, energy
//! gaps, Fock-occupation probabilities, and diabolic-point seeding plus
//! derivative-free refinement.

use crate::model::{HamiltonianFamily, LmgModel, ParameterPoint};
use crate::{C64, CMatrix, CVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("eigensolver failed to converge (dimension {dim}, ‖H‖ = {norm:.3e})")]
    NoConvergence { dim: usize, norm: f64 },
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("no degeneracy near seed ({kappa}, {chi}): minimized gap {gap:.3e} exceeds 1e-6")]
    NoDegeneracy { kappa: f64, chi: f64, gap: f64 },
    #[error("degeneracy refinement stalled: gap {gap:.3e} above tolerance {tol:.1e}")]
    RefinementStalled { gap: f64, tol: f64 },
}

/// Full spectral decomposition: ascending eigenvalues and gauge-fixed
/// orthonormal eigenvectors (columns).
///
/// Gauge: in each eigenvector the largest-magnitude component (lowest index
/// on ties) is rotated to be real and positive. Exact eigenvalue ties are
/// ordered by the sign of the gauge-fixed first component.
#[derive(Clone, Debug)]
pub struct SpectrumResult {
    pub energies: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl SpectrumResult {
    pub fn ground_energy(&self) -> f64 {
        self.energies[0]
    }

    pub fn gap(&self) -> f64 {
        self.energies[1] - self.energies[0]
    }

    pub fn state(&self, k: usize) -> CVector {
        CVector::from(self.eigenvectors.column(k))
    }
}

fn gauge_fix_column(col: &mut nalgebra::DVectorViewMut<C64>) {
    let mut best = 0usize;
    let mut best_mag = 0.0f64;
    for (i, z) in col.iter().enumerate() {
        let m = z.norm();
        if m > best_mag {
            best_mag = m;
            best = i;
        }
    }
    if best_mag == 0.0 {
        return;
    }
    let phase = col[best] / C64::new(best_mag, 0.0);
    let rot = phase.conj();
    for z in col.iter_mut() {
        *z *= rot;
    }
    // pin the pivot exactly real
    let pivot = col[best];
    col[best] = C64::new(pivot.norm() * pivot.re.signum(), 0.0);
}

/// Diagonalizes a Hermitian matrix, enforcing the `SpectrumResult` gauge.
pub fn diagonalize(h: &CMatrix) -> Result<SpectrumResult, SpectrumError> {
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SpectrumError::NonFinite);
    }
    let dim = h.nrows();
    let se = CMatrix::clone(h)
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or(SpectrumError::NoConvergence { dim, norm: h.norm() })?;

    let mut vectors = se.eigenvectors;
    for mut col in vectors.column_iter_mut() {
        gauge_fix_column(&mut col);
    }

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[a]
            .total_cmp(&se.eigenvalues[b])
            .then_with(|| vectors[(0, b)].re.total_cmp(&vectors[(0, a)].re))
    });

    let energies: Vec<f64> = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let eigenvectors = CMatrix::from_columns(
        &order.iter().map(|&k| vectors.column(k).into_owned()).collect::<Vec<_>>(),
    );
    Ok(SpectrumResult { energies, eigenvectors })
}

/// Energy gap ΔE(λ) = E₁ - E₀ ≥ 0 of a family at a point.
pub fn energy_gap<F: HamiltonianFamily>(family: &F, p: ParameterPoint) -> Result<f64, SpectrumError> {
    Ok(diagonalize(&family.matrix(p))?.gap())
}

/// Ground-state probabilities p(n_t) = |⟨n_s, n_t|ψ₀⟩|² over n_t = 0..N.
///
/// At χ = 0 the Hamiltonian conserves parity and all odd-n_t probabilities
/// vanish identically.
pub fn fock_probabilities(n: u32, p: ParameterPoint) -> Result<Vec<f64>, SpectrumError> {
    let model = LmgModel::new(n).expect("positive boson number");
    let spec = diagonalize(&model.matrix(p))?;
    Ok(spec.eigenvectors.column(0).iter().map(|z| z.norm_sqr()).collect())
}

/// Analytic diabolic-point seed locations, one (+χ, -χ) pair per
/// l = 1..⌊N/2⌋:
///
/// ```text
/// (κ_d, χ_d) = ( (1-2l)/(N-2l+1) , ±√(N/(2N-2l+1)) )
/// ```
pub fn dp_seeds(n: u32) -> Vec<(ParameterPoint, ParameterPoint)> {
    let nn = n as f64;
    (1..=n / 2)
        .map(|l| {
            let lf = l as f64;
            let kappa = (1.0 - 2.0 * lf) / (nn - 2.0 * lf + 1.0);
            let chi = (nn / (2.0 * nn - 2.0 * lf + 1.0)).sqrt();
            (ParameterPoint::new(kappa, chi), ParameterPoint::new(kappa, -chi))
        })
        .collect()
}

/// A refined ground-state degeneracy with its two-dimensional eigenbasis.
///
/// The degenerate basis is the pair of lowest gauge-fixed eigenvectors at
/// the refined location; any rotation of the pair is an equally valid basis
/// (a documented gauge freedom), this one is pinned for reproducibility.
#[derive(Clone, Debug)]
pub struct DiabolicPoint {
    pub location: ParameterPoint,
    /// Pair index l ≥ 1 for seeds from `dp_seeds`, 0 for ad-hoc seeds.
    pub index: u32,
    /// Sign of the χ branch the seed came from.
    pub branch: f64,
    pub gap: f64,
    /// Mean of the two crossing energies at the refined location.
    pub energy: f64,
    pub basis: [CVector; 2],
    /// Distance between the seed and the refined location.
    pub displacement: f64,
}

const DP_GAP_TOLERANCE: f64 = 1e-10;
const DP_REJECT_GAP: f64 = 1e-6;
// Basin guard: the parity doublet at (κ, χ) → (+∞, 0) has an exponentially
// small gap, so an unbounded gap minimization started in a gapped region
// would drift there instead of failing.
const DP_SEARCH_RADIUS: f64 = 0.25;

struct Simplex {
    pts: [(ParameterPoint, f64); 3],
}

impl Simplex {
    fn sort(&mut self) {
        self.pts.sort_by(|a, b| a.1.total_cmp(&b.1));
    }

    fn size(&self) -> f64 {
        self.pts[0].0.distance(&self.pts[1].0).max(self.pts[0].0.distance(&self.pts[2].0))
    }
}

/// Nelder–Mead on a 2D objective, tuned for the conical gap landscape.
fn nelder_mead(
    f: &mut dyn FnMut(ParameterPoint) -> f64,
    start: ParameterPoint,
    side: f64,
    max_iter: usize,
    size_tol: f64,
) -> (ParameterPoint, f64) {
    let mut s = Simplex {
        pts: [
            (start, f(start)),
            (start.offset(side, 0.0), f(start.offset(side, 0.0))),
            (start.offset(0.0, side), f(start.offset(0.0, side))),
        ],
    };
    for _ in 0..max_iter {
        s.sort();
        if s.size() < size_tol {
            break;
        }
        let [best, mid, worst] = &s.pts;
        let centroid = ParameterPoint::new(
            (best.0.kappa + mid.0.kappa) / 2.0,
            (best.0.chi + mid.0.chi) / 2.0,
        );
        let through = |t: f64| {
            ParameterPoint::new(
                centroid.kappa + t * (centroid.kappa - worst.0.kappa),
                centroid.chi + t * (centroid.chi - worst.0.chi),
            )
        };
        let refl = through(1.0);
        let fr = f(refl);
        if fr < best.1 {
            let exp = through(2.0);
            let fe = f(exp);
            s.pts[2] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < mid.1 {
            s.pts[2] = (refl, fr);
        } else {
            let contr = through(-0.5);
            let fc = f(contr);
            if fc < worst.1 {
                s.pts[2] = (contr, fc);
            } else {
                // shrink toward the best vertex
                let b = s.pts[0].0;
                for i in 1..3 {
                    let p = ParameterPoint::new(
                        b.kappa + 0.5 * (s.pts[i].0.kappa - b.kappa),
                        b.chi + 0.5 * (s.pts[i].0.chi - b.chi),
                    );
                    s.pts[i] = (p, f(p));
                }
            }
        }
    }
    s.sort();
    (s.pts[0].0, s.pts[0].1)
}

/// One Newton step on the smooth surrogate ΔE²(λ), whose Hessian at a
/// conical intersection is positive definite.
fn quadratic_polish(
    f: &mut dyn FnMut(ParameterPoint) -> f64,
    at: ParameterPoint,
    h: f64,
) -> Option<ParameterPoint> {
    let mut sq = |p: ParameterPoint| {
        let g = f(p);
        g * g
    };
    let c = sq(at);
    let (fp1, fm1) = (sq(at.offset(h, 0.0)), sq(at.offset(-h, 0.0)));
    let (fp2, fm2) = (sq(at.offset(0.0, h)), sq(at.offset(0.0, -h)));
    let fpp = sq(at.offset(h, h));
    let fpm = sq(at.offset(h, -h));
    let fmp = sq(at.offset(-h, h));
    let fmm = sq(at.offset(-h, -h));

    let g1 = (fp1 - fm1) / (2.0 * h);
    let g2 = (fp2 - fm2) / (2.0 * h);
    let h11 = (fp1 - 2.0 * c + fm1) / (h * h);
    let h22 = (fp2 - 2.0 * c + fm2) / (h * h);
    let h12 = (fpp - fpm - fmp + fmm) / (4.0 * h * h);

    let det = h11 * h22 - h12 * h12;
    if !(det.is_finite() && det > 0.0 && h11 > 0.0) {
        return None;
    }
    let dk = -(h22 * g1 - h12 * g2) / det;
    let dc = -(h11 * g2 - h12 * g1) / det;
    if !(dk.is_finite() && dc.is_finite()) {
        return None;
    }
    Some(at.offset(dk, dc))
}

/// Refines a degeneracy seed by minimizing ΔE(λ): Nelder–Mead with a
/// side-1e-3 start simplex followed by Newton polish on ΔE². Fails with
/// `NoDegeneracy` when the minimized gap stays above 1e-6.
pub fn dp_refine<F: HamiltonianFamily>(
    family: &F,
    seed: ParameterPoint,
) -> Result<DiabolicPoint, SpectrumError> {
    let mut gap_err: Option<SpectrumError> = None;
    let mut gap = |p: ParameterPoint| {
        if p.distance(&seed) > DP_SEARCH_RADIUS {
            return f64::INFINITY;
        }
        match energy_gap(family, p) {
            Ok(g) => g,
            Err(e) => {
                gap_err = Some(e);
                f64::INFINITY
            }
        }
    };

    let (mut best, mut best_gap) = nelder_mead(&mut gap, seed, 1e-3, 400, 1e-13);
    // polish as long as it keeps improving; step scales with the residual cone size
    for _ in 0..8 {
        if best_gap < DP_GAP_TOLERANCE * 1e-2 {
            break;
        }
        let h = (best_gap * 0.5).clamp(1e-9, 1e-4);
        match quadratic_polish(&mut gap, best, h) {
            Some(cand) => {
                let g = gap(cand);
                if g < best_gap {
                    best = cand;
                    best_gap = g;
                } else {
                    break;
                }
            }
            None => break,
        }
    }
    if let Some(e) = gap_err {
        return Err(e);
    }
    if best_gap > DP_REJECT_GAP {
        return Err(SpectrumError::NoDegeneracy {
            kappa: seed.kappa,
            chi: seed.chi,
            gap: best_gap,
        });
    }
    if best_gap > DP_GAP_TOLERANCE {
        return Err(SpectrumError::RefinementStalled { gap: best_gap, tol: DP_GAP_TOLERANCE });
    }

    let spec = diagonalize(&family.matrix(best))?;
    Ok(DiabolicPoint {
        location: best,
        index: 0,
        branch: if seed.chi == 0.0 { 0.0 } else { seed.chi.signum() },
        gap: spec.gap(),
        energy: (spec.energies[0] + spec.energies[1]) / 2.0,
        basis: [spec.state(0), spec.state(1)],
        displacement: best.distance(&seed),
    })
}

/// Refines every analytic seed of the LMG model, labeling pair indices.
pub fn refine_lmg_dps(model: &LmgModel) -> Result<Vec<DiabolicPoint>, SpectrumError> {
    let mut out = Vec::new();
    for (l, (plus, minus)) in dp_seeds(model.boson_number()).into_iter().enumerate() {
        for seed in [plus, minus] {
            let mut dp = dp_refine(model, seed)?;
            dp.index = l as u32 + 1;
            out.push(dp);
        }
    }
    Ok(out)
}
