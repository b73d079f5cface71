//! Command implementations: grid scans with a deterministic worker pool,
//! DP atlases, near-DP analyses, mean-field comparisons and geodesic runs.
//!
//! Output rows are ordered by grid index regardless of scheduling; per-point
//! failures become rows with a status column, never silent gaps.

use crate::config::*;
use crate::output::{Cell, CsvTable};
use qmanifold::dpgeom::{
    approx_error_profile, circle_length, dp_polar_field, CircleQuadrature, DpGeomError,
};
use qmanifold::geodesic::{
    integrate_cauchy, solve_dirichlet, DirichletOptions, Domain, GeodesicControls,
};
use qmanifold::geometry::{
    christoffel, geometric_tensor, metric_field, FdOptions, GeometryError, QuantumMetric,
};
use qmanifold::meanfield::{hb_metric_f1, phase_classify, rho_infinite, MeanFieldError};
use qmanifold::model::{HamiltonianFamily, LmgModel, ParameterPoint, TwoLevelSphereFamily};
use qmanifold::spectrum::{diagonalize, dp_seeds, dp_refine, fock_probabilities, DiabolicPoint};
use qmanifold::CMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// The configured Hamiltonian family.
pub enum Model {
    Lmg(LmgModel),
    TwoLevel(TwoLevelSphereFamily),
}

impl Model {
    pub fn from_config(config: &ModelConfig) -> Result<Self, ConfigError> {
        match config {
            ModelConfig::Lmg { n } => Ok(Model::Lmg(
                LmgModel::new(*n).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            )),
            ModelConfig::TwoLevel { radius } => {
                Ok(Model::TwoLevel(TwoLevelSphereFamily::new(*radius)))
            }
        }
    }

    fn lmg(&self) -> &LmgModel {
        match self {
            Model::Lmg(m) => m,
            Model::TwoLevel(_) => unreachable!("validated as lmg-only"),
        }
    }
}

impl HamiltonianFamily for Model {
    fn dimension(&self) -> usize {
        match self {
            Model::Lmg(m) => m.dimension(),
            Model::TwoLevel(m) => m.dimension(),
        }
    }

    fn matrix(&self, p: ParameterPoint) -> CMatrix {
        match self {
            Model::Lmg(m) => m.matrix(p),
            Model::TwoLevel(m) => m.matrix(p),
        }
    }

    fn derivative(&self, p: ParameterPoint, axis: usize) -> CMatrix {
        match self {
            Model::Lmg(m) => m.derivative(p, axis),
            Model::TwoLevel(m) => m.derivative(p, axis),
        }
    }

    fn second_derivative(&self, p: ParameterPoint, a: usize, b: usize) -> Option<CMatrix> {
        match self {
            Model::Lmg(m) => m.second_derivative(p, a, b),
            Model::TwoLevel(m) => m.second_derivative(p, a, b),
        }
    }
}

fn geometry_status(err: &GeometryError) -> &'static str {
    match err {
        GeometryError::DegenerateGroundState { .. } => "degenerate",
        GeometryError::MetricNearDegenerate { .. } => "metric_degenerate",
        GeometryError::Spectrum(_) => "eigensolver_failure",
    }
}

fn meanfield_status(err: &MeanFieldError) -> &'static str {
    match err {
        MeanFieldError::Separatrix { .. } => "separatrix",
        MeanFieldError::CoexistingMinima { .. } => "coexisting",
        MeanFieldError::ChartDegenerate { .. } => "chart_degenerate",
        MeanFieldError::Geometry(e) => geometry_status(e),
        MeanFieldError::Spectrum(_) => "eigensolver_failure",
    }
}

fn dpgeom_status(err: &DpGeomError) -> &'static str {
    match err {
        DpGeomError::AtDp { .. } => "at_dp",
        DpGeomError::CollapsedRegion { .. } => "collapsed_region",
        DpGeomError::QuadratureUnsettled { .. } => "quadrature_unsettled",
        DpGeomError::NodeFailure { .. } => "node_failure",
        DpGeomError::Geometry(e) => geometry_status(e),
    }
}

fn fd_options(numerics: &NumericsConfig) -> FdOptions {
    FdOptions {
        metric_step: numerics.fd_step,
        overlap_step: numerics.overlap_step,
        det_threshold: numerics.det_threshold,
        richardson: false,
    }
}

/// Runs `job` over the index grid on a pool of `workers` threads, returning
/// results in grid order.
fn scan_grid<R: Send>(
    grid: &GridConfig,
    workers: usize,
    job: impl Fn(usize, usize, ParameterPoint) -> R + Sync,
) -> Vec<R> {
    use rayon::prelude::*;
    let kappas = grid.kappa.points();
    let chis = grid.chi.points();
    let indices: Vec<(usize, usize)> =
        (0..kappas.len()).flat_map(|i| (0..chis.len()).map(move |j| (i, j))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool");
    pool.install(|| {
        indices
            .par_iter()
            .map(|&(i, j)| job(i, j, ParameterPoint::new(kappas[i], chis[j])))
            .collect()
    })
}

fn point_cells(i: usize, j: usize, p: ParameterPoint) -> Vec<Cell> {
    vec![Cell::Int(i as i64), Cell::Int(j as i64), Cell::Float(p.kappa), Cell::Float(p.chi)]
}

pub fn gap_map(model: &Model, config: &RunConfig) -> Result<CsvTable, RunError> {
    let grid = config.grid.as_ref().expect("validated");
    let rows = scan_grid(grid, config.workers, |i, j, p| {
        let mut row = point_cells(i, j, p);
        match diagonalize(&model.matrix(p)) {
            Ok(spec) => {
                row.push(Cell::Float(spec.gap()));
                row.push(Cell::Text("ok".into()));
            }
            Err(_) => {
                row.push(Cell::Blank);
                row.push(Cell::Text("eigensolver_failure".into()));
            }
        }
        row
    });
    Ok(CsvTable { columns: vec!["i", "j", "kappa", "chi", "gap", "status"], rows })
}

pub fn metric_map(model: &Model, config: &RunConfig) -> Result<CsvTable, RunError> {
    let grid = config.grid.as_ref().expect("validated");
    let rows = scan_grid(grid, config.workers, |i, j, p| {
        let mut row = point_cells(i, j, p);
        match geometric_tensor(model, p) {
            Ok(gt) => {
                row.extend([
                    Cell::Float(gt.metric[(0, 0)]),
                    Cell::Float(gt.metric[(0, 1)]),
                    Cell::Float(gt.metric[(1, 1)]),
                    Cell::Float(gt.det_metric),
                    Cell::Float(gt.berry[(0, 1)]),
                    Cell::Text("ok".into()),
                ]);
            }
            Err(e) => {
                row.extend([Cell::Blank, Cell::Blank, Cell::Blank, Cell::Blank, Cell::Blank]);
                row.push(Cell::Text(geometry_status(&e).into()));
            }
        }
        row
    });
    Ok(CsvTable {
        columns: vec!["i", "j", "kappa", "chi", "g_11", "g_12", "g_22", "det_g", "berry_12", "status"],
        rows,
    })
}

pub fn ricci_map(model: &Model, config: &RunConfig) -> Result<CsvTable, RunError> {
    let grid = config.grid.as_ref().expect("validated");
    let q = QuantumMetric::new(model);
    let fd = fd_options(&config.numerics);
    let rows = scan_grid(grid, config.workers, |i, j, p| {
        let mut row = point_cells(i, j, p);
        match metric_field(&q, p, &fd) {
            Ok(field) => {
                match (field.ricci, field.gaussian) {
                    (Some(r), Some(k)) => {
                        row.extend([Cell::Float(r), Cell::Float(k), Cell::Float(field.det)]);
                        row.push(Cell::Text("ok".into()));
                    }
                    _ => {
                        row.extend([Cell::Blank, Cell::Blank, Cell::Float(field.det)]);
                        row.push(Cell::Text("metric_degenerate".into()));
                    }
                }
            }
            Err(e) => {
                row.extend([Cell::Blank, Cell::Blank, Cell::Blank]);
                row.push(Cell::Text(geometry_status(&e).into()));
            }
        }
        row
    });
    Ok(CsvTable {
        columns: vec!["i", "j", "kappa", "chi", "ricci", "gaussian", "det_g", "status"],
        rows,
    })
}

pub fn christoffel_map(model: &Model, config: &RunConfig) -> Result<CsvTable, RunError> {
    let grid = config.grid.as_ref().expect("validated");
    let q = QuantumMetric::new(model);
    let fd = fd_options(&config.numerics);
    let rows = scan_grid(grid, config.workers, |i, j, p| {
        let mut row = point_cells(i, j, p);
        match christoffel(&q, p, &fd) {
            Ok(g) => {
                for (a, b, c) in [(0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 0, 0), (1, 0, 1), (1, 1, 1)]
                {
                    row.push(Cell::Float(g.get(a, b, c)));
                }
                row.push(Cell::Text("ok".into()));
            }
            Err(e) => {
                row.extend(std::iter::repeat_with(|| Cell::Blank).take(6));
                row.push(Cell::Text(geometry_status(&e).into()));
            }
        }
        row
    });
    Ok(CsvTable {
        columns: vec![
            "i", "j", "kappa", "chi", "gamma_111", "gamma_112", "gamma_122", "gamma_211",
            "gamma_212", "gamma_222", "status",
        ],
        rows,
    })
}

pub fn hb_compare(model: &Model, config: &RunConfig) -> Result<CsvTable, RunError> {
    let grid = config.grid.as_ref().expect("validated");
    let n = match config.model {
        ModelConfig::Lmg { n } => n,
        _ => unreachable!("validated as lmg-only"),
    };
    let rows = scan_grid(grid, config.workers, |i, j, p| {
        let mut row = point_cells(i, j, p);
        let mut status = "ok";
        match geometric_tensor(model, p) {
            Ok(gt) => row.extend([
                Cell::Float(gt.metric[(0, 0)]),
                Cell::Float(gt.metric[(0, 1)]),
                Cell::Float(gt.metric[(1, 1)]),
                Cell::Float(gt.det_metric),
            ]),
            Err(e) => {
                status = geometry_status(&e);
                row.extend([Cell::Blank, Cell::Blank, Cell::Blank, Cell::Blank]);
            }
        }
        match hb_metric_f1(n, p) {
            Ok(g) => row.extend([
                Cell::Float(g[(0, 0)]),
                Cell::Float(g[(0, 1)]),
                Cell::Float(g[(1, 1)]),
                Cell::Float(g.determinant()),
            ]),
            Err(e) => {
                if status == "ok" {
                    status = meanfield_status(&e);
                }
                row.extend([Cell::Blank, Cell::Blank, Cell::Blank, Cell::Blank]);
            }
        }
        row.push(Cell::Float(rho_infinite(p)));
        row.push(Cell::Text(phase_classify(p).to_string()));
        row.push(Cell::Text(status.into()));
        row
    });
    Ok(CsvTable {
        columns: vec![
            "i", "j", "kappa", "chi", "g_11", "g_12", "g_22", "det_g", "hb_g_11", "hb_g_12",
            "hb_g_22", "hb_det_g", "rho", "phase", "status",
        ],
        rows,
    })
}

pub fn dp_find(model: &Model, _config: &RunConfig) -> Result<CsvTable, RunError> {
    let lmg = model.lmg();
    let mut rows = Vec::new();
    for (idx, (plus, minus)) in dp_seeds(lmg.boson_number()).into_iter().enumerate() {
        for (branch, seed) in [(1.0, plus), (-1.0, minus)] {
            let mut row = vec![
                Cell::Int(idx as i64 + 1),
                Cell::Text(if branch > 0.0 { "+".into() } else { "-".into() }),
                Cell::Float(seed.kappa),
                Cell::Float(seed.chi),
            ];
            match dp_refine(lmg, seed) {
                Ok(dp) => row.extend([
                    Cell::Float(dp.location.kappa),
                    Cell::Float(dp.location.chi),
                    Cell::Float(dp.gap),
                    Cell::Float(dp.displacement),
                    Cell::Float(dp.energy),
                    Cell::Text("ok".into()),
                ]),
                Err(e) => row.extend([
                    Cell::Blank,
                    Cell::Blank,
                    Cell::Blank,
                    Cell::Blank,
                    Cell::Blank,
                    Cell::Text(format!("failed: {e}")),
                ]),
            }
            rows.push(row);
        }
    }
    Ok(CsvTable {
        columns: vec![
            "l", "branch", "seed_kappa", "seed_chi", "kappa", "chi", "gap", "displacement",
            "energy", "status",
        ],
        rows,
    })
}

fn select_dp(lmg: &LmgModel, select: &DpSelect) -> Result<DiabolicPoint, RunError> {
    let seeds = dp_seeds(lmg.boson_number());
    let l = select.l as usize;
    if l == 0 || l > seeds.len() {
        return Err(RunError::Config(ConfigError::Invalid(format!(
            "dp pair index l={l} out of range 1..={} for N={}",
            seeds.len(),
            lmg.boson_number()
        ))));
    }
    let sign = select.branch_sign().map_err(RunError::Config)?;
    let seed = if sign > 0.0 { seeds[l - 1].0 } else { seeds[l - 1].1 };
    let mut dp = dp_refine(lmg, seed).map_err(|e| RunError::Numerical(e.to_string()))?;
    dp.index = select.l;
    Ok(dp)
}

pub fn circle_length_cmd(model: &Model, config: &RunConfig) -> Result<CsvTable, RunError> {
    let section = config.circle.as_ref().expect("validated");
    let dp = select_dp(model.lmg(), &section.dp)?;
    let quad = CircleQuadrature::default();
    let mut rows = Vec::new();
    for &r in &section.radii {
        let mut row = vec![Cell::Float(r)];
        match circle_length(model.lmg(), &dp, r, &quad) {
            Ok(c) => row.extend([
                Cell::Float(c.length),
                Cell::Float(c.deviation),
                Cell::Int(c.nodes_used as i64),
                Cell::Text("ok".into()),
            ]),
            Err(e) => row.extend([
                Cell::Blank,
                Cell::Blank,
                Cell::Blank,
                Cell::Text(dpgeom_status(&e).into()),
            ]),
        }
        rows.push(row);
    }
    Ok(CsvTable { columns: vec!["r", "length", "deviation", "nodes", "status"], rows })
}

pub fn dp_zoom(model: &Model, config: &RunConfig) -> Result<CsvTable, RunError> {
    let section = config.dp_zoom.as_ref().expect("validated");
    let dp = select_dp(model.lmg(), &section.dp)?;
    let fd = fd_options(&config.numerics);
    let radii = section.r.points();
    let thetas: Vec<f64> = (0..section.theta_steps)
        .map(|k| 2.0 * std::f64::consts::PI * k as f64 / section.theta_steps as f64)
        .collect();
    use rayon::prelude::*;
    let indices: Vec<(usize, usize)> = (0..radii.len())
        .flat_map(|i| (0..thetas.len()).map(move |j| (i, j)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .expect("worker pool");
    let lmg = model.lmg();
    let rows: Vec<Vec<Cell>> = pool.install(|| {
        indices
            .par_iter()
            .map(|&(i, j)| {
                let (r, theta) = (radii[i], thetas[j]);
                let mut row = vec![
                    Cell::Int(i as i64),
                    Cell::Int(j as i64),
                    Cell::Float(r),
                    Cell::Float(theta),
                    Cell::Float(r + section.shift),
                ];
                match dp_polar_field(lmg, &dp, r, theta, section.shift, &fd) {
                    Ok(field) => {
                        row.extend([
                            Cell::Float(field.metric[(0, 0)]),
                            Cell::Float(field.metric[(0, 1)]),
                            Cell::Float(field.metric[(1, 1)]),
                            Cell::Float(field.det),
                        ]);
                        match field.ricci {
                            Some(ricci) => {
                                row.push(Cell::Float(ricci));
                                row.push(Cell::Text("ok".into()));
                            }
                            None => {
                                row.push(Cell::Blank);
                                row.push(Cell::Text("metric_degenerate".into()));
                            }
                        }
                    }
                    Err(e) => {
                        row.extend([Cell::Blank, Cell::Blank, Cell::Blank, Cell::Blank, Cell::Blank]);
                        row.push(Cell::Text(dpgeom_status(&e).into()));
                    }
                }
                row
            })
            .collect()
    });
    Ok(CsvTable {
        columns: vec![
            "i", "j", "r", "theta", "r_shifted", "g_rr", "g_rt", "g_tt", "det_g", "ricci",
            "status",
        ],
        rows,
    })
}

pub fn fock_hist(model: &Model, config: &RunConfig) -> Result<CsvTable, RunError> {
    let point = config.point.expect("validated");
    let lmg = model.lmg();
    let p = ParameterPoint::new(point.kappa, point.chi);
    let probs = fock_probabilities(lmg.boson_number(), p)
        .map_err(|e| RunError::Numerical(e.to_string()))?;
    let rows = probs
        .into_iter()
        .enumerate()
        .map(|(n, prob)| vec![Cell::Int(n as i64), Cell::Float(prob), Cell::Text("ok".into())])
        .collect();
    Ok(CsvTable { columns: vec!["n_t", "probability", "status"], rows })
}

pub fn approx_error_cmd(model: &Model, config: &RunConfig) -> Result<CsvTable, RunError> {
    let section = config.approx_error.as_ref().expect("validated");
    let lmg = model.lmg();
    let dp = select_dp(lmg, &section.dp)?;
    let samples = approx_error_profile(lmg, &dp, section.theta, &section.radii)
        .map_err(|e| RunError::Numerical(e.to_string()))?;
    let rows = samples
        .into_iter()
        .map(|s| {
            let flagged = s.relative.iter().any(Option::is_none);
            let mut row = vec![Cell::Float(s.r)];
            for rel in s.relative {
                row.push(rel.map_or(Cell::Blank, Cell::Float));
            }
            row.push(Cell::Int(s.outside_trust as i64));
            row.push(Cell::Text(if flagged { "flagged".into() } else { "ok".into() }));
            row
        })
        .collect();
    Ok(CsvTable {
        columns: vec!["r", "err_11", "err_12", "err_22", "outside_trust", "status"],
        rows,
    })
}

fn geodesic_controls(
    model: &Model,
    numerics: &NumericsConfig,
    tau_max: f64,
    domain: Option<DomainConfig>,
    capture_at_dps: bool,
) -> Result<GeodesicControls, RunError> {
    let mut controls = GeodesicControls {
        abs_tol: numerics.ode_abs_tol,
        rel_tol: numerics.ode_rel_tol,
        tau_max,
        capture_radius: numerics.capture_radius,
        domain: domain.map(|d| Domain { kappa: d.kappa, chi: d.chi }),
        ..Default::default()
    };
    controls.fd.det_threshold = numerics.det_threshold;
    if capture_at_dps {
        let lmg = model.lmg();
        for (plus, minus) in dp_seeds(lmg.boson_number()) {
            for seed in [plus, minus] {
                let dp = dp_refine(lmg, seed).map_err(|e| RunError::Numerical(e.to_string()))?;
                controls.capture_points.push(dp.location);
            }
        }
    }
    Ok(controls)
}

pub fn geodesic_cauchy(model: &Model, config: &RunConfig) -> Result<serde_json::Value, RunError> {
    let section = config.geodesic.as_ref().expect("validated");
    let controls = geodesic_controls(
        model,
        &config.numerics,
        section.tau_max,
        section.domain,
        section.capture_at_dps,
    )?;
    let q = QuantumMetric::new(model);
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .expect("worker pool");
    let traces: Vec<serde_json::Value> = pool.install(|| {
        section
            .starts
            .par_iter()
            .map(|s| {
                let start = ParameterPoint::new(s.kappa, s.chi);
                match integrate_cauchy(&q, start, (s.dkappa, s.dchi), &controls) {
                    Ok(trace) => serde_json::json!({
                        "start": s,
                        "termination": trace.termination,
                        "speed_drift": trace.speed_drift(),
                        "samples": trace.samples,
                    }),
                    Err(e) => serde_json::json!({
                        "start": s,
                        "error": e.to_string(),
                    }),
                }
            })
            .collect()
    });
    Ok(serde_json::json!({
        "capture_points": controls.capture_points,
        "traces": traces,
    }))
}

pub fn geodesic_dirichlet(model: &Model, config: &RunConfig) -> Result<serde_json::Value, RunError> {
    let section = config.dirichlet.as_ref().expect("validated");
    let controls =
        geodesic_controls(model, &config.numerics, section.tau_max, section.domain, false)?;
    let mut opts = DirichletOptions {
        scan_angles: section.scan_angles,
        miss_tol: section.miss_tol,
        ..Default::default()
    };
    if let Some(range) = section.angle_range {
        opts.angle_range = range;
    }
    let q = QuantumMetric::new(model);
    let result = solve_dirichlet(
        &q,
        ParameterPoint::new(section.from.0, section.from.1),
        ParameterPoint::new(section.to.0, section.to.1),
        &controls,
        &opts,
    )
    .map_err(|e| RunError::Numerical(e.to_string()))?;
    let solutions: Vec<serde_json::Value> = result
        .solutions
        .iter()
        .map(|s| {
            serde_json::json!({
                "initial_angle": s.initial_angle,
                "length": s.length,
                "miss": s.miss,
                "termination": s.trace.termination,
                "samples": s.trace.samples,
            })
        })
        .collect();
    Ok(serde_json::json!({
        "solutions": solutions,
        "scan": result.scan,
    }))
}
