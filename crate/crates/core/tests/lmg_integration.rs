//! Cross-module behavior on the interacting-boson model: geodesic fates in
//! the diabolic-point band, the speed/determinant anticorrelation, and the
//! slow verification tiers.

use qmanifold::geodesic::*;
use qmanifold::geometry::*;
use qmanifold::model::*;
use qmanifold::spectrum::*;

fn fig8_controls(model: &LmgModel) -> GeodesicControls {
    let dps = refine_lmg_dps(model).expect("all seeds refine");
    GeodesicControls {
        tau_max: 60.0,
        domain: Some(Domain { kappa: (-4.5, 2.0), chi: (-0.2, 1.4) }),
        capture_points: dps.iter().map(|d| d.location).collect(),
        ..Default::default()
    }
}

#[test]
fn fig8_band_has_both_fates() {
    let model = LmgModel::new(5).unwrap();
    let q = QuantumMetric::new(&model);
    let controls = fig8_controls(&model);
    let shoot = |chi0: f64| {
        integrate_cauchy(&q, ParameterPoint::new(-4.0, chi0), (1.0, 0.0), &controls).unwrap()
    };
    let low = shoot(0.25);
    assert_eq!(low.termination, Termination::DomainExit);
    assert!(low.speed_drift() < 1e-6);

    let captured = shoot(0.65);
    assert_eq!(captured.termination, Termination::DpCapture);
    assert!(captured.speed_drift() < 1e-5, "drift {:e}", captured.speed_drift());
    let end = captured.last().point;
    let dp = controls
        .capture_points
        .iter()
        .map(|d| end.distance(d))
        .fold(f64::INFINITY, f64::min);
    assert!(dp < controls.capture_radius);
}

#[test]
fn ordinary_speed_anticorrelates_with_determinant() {
    let model = LmgModel::new(5).unwrap();
    let q = QuantumMetric::new(&model);
    let controls = fig8_controls(&model);
    let trace =
        integrate_cauchy(&q, ParameterPoint::new(-4.0, 0.55), (1.0, 0.0), &controls).unwrap();
    let pairs: Vec<(f64, f64)> = trace
        .samples
        .iter()
        .filter(|s| s.det > 0.0 && s.ordinary_speed > 0.0)
        .map(|s| (s.det.ln(), s.ordinary_speed.ln()))
        .collect();
    assert!(pairs.len() > 50);
    let n = pairs.len() as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = pairs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum::<f64>() / n;
    let var_x: f64 = pairs.iter().map(|p| (p.0 - mean_x).powi(2)).sum::<f64>() / n;
    let var_y: f64 = pairs.iter().map(|p| (p.1 - mean_y).powi(2)).sum::<f64>() / n;
    let corr = cov / (var_x * var_y).sqrt();
    assert!(corr < -0.5, "log u vs log det correlation {corr}");
}

#[test]
fn geometric_exceeds_ordinary_length_in_stretched_regions() {
    // along the ridge the metric is large: geometric length accumulates
    // faster than the Euclidean one
    let model = LmgModel::new(5).unwrap();
    let q = QuantumMetric::new(&model);
    let controls = fig8_controls(&model);
    let trace =
        integrate_cauchy(&q, ParameterPoint::new(-4.0, 0.65), (1.0, 0.0), &controls).unwrap();
    let end = trace.last();
    assert!(end.length > 0.0 && end.arc_length > 0.0);
    // ℓ and s are nondecreasing along the trace
    for w in trace.samples.windows(2) {
        assert!(w[1].length >= w[0].length);
        assert!(w[1].arc_length >= w[0].arc_length);
    }
}

/// Two geodesics from (1, 0) cross near (0.0446, 0.7001); the two-point
/// solver must recover at least two distinct solutions there.
#[test]
#[ignore = "slow tier: shooting scan over a quantum metric"]
fn lmg_dirichlet_multiple_solutions() {
    let model = LmgModel::new(10).unwrap();
    let q = QuantumMetric::new(&model);
    let controls = GeodesicControls {
        tau_max: 6.0,
        domain: Some(Domain { kappa: (-3.0, 2.5), chi: (-2.0, 2.0) }),
        ..Default::default()
    };
    let opts = DirichletOptions {
        scan_angles: 24,
        angle_range: (2.0, 2.6),
        miss_tol: 1e-4,
        max_bisections: 30,
    };
    let result = solve_dirichlet(
        &q,
        ParameterPoint::new(1.0, 0.0),
        ParameterPoint::new(0.0446, 0.7001),
        &controls,
        &opts,
    )
    .unwrap();
    assert!(
        result.solutions.len() >= 2,
        "expected multiple geodesics, found {}",
        result.solutions.len()
    );
    assert!(result.solutions[0].length <= result.solutions[1].length);
}

/// The diabolic-point formula verified for every seed up to N = 30.
#[test]
#[ignore = "slow tier: N up to 30"]
fn dp_seeds_refine_up_to_n30() {
    for n in 2..=30u32 {
        let model = LmgModel::new(n).unwrap();
        for (l, (plus, minus)) in dp_seeds(n).into_iter().enumerate() {
            for seed in [plus, minus] {
                let dp = dp_refine(&model, seed)
                    .unwrap_or_else(|e| panic!("N={n} l={} failed: {e}", l + 1));
                assert!(dp.gap < 1e-10, "N={n} l={} gap {:e}", l + 1, dp.gap);
                assert!(dp.displacement < 1e-6, "N={n} l={} moved {:e}", l + 1, dp.displacement);
            }
        }
    }
}
