//! Geodesic flow on a numerically-defined metric: Cauchy integration with an
//! adaptive Dormand–Prince 5(4) pair, two-point (Dirichlet) solutions by
//! direction-angle shooting, and geometric/ordinary path lengths.
//!
//! The geodesic equation d²λ_μ/dτ² + Γ_μσρ λ̇_σ λ̇_ρ = 0 conserves the
//! geometric speed v = √(g_μν λ̇_μ λ̇_ν); the relative drift of v along a
//! trace is the integrator's primary quality metric. Christoffel symbols are
//! evaluated on demand through the geometry pipeline and memoized on a
//! quantized parameter grid (evaluation is pure, so the cache is
//! schedule-independent).

use crate::geometry::{christoffel_data, ConnectionData, FdOptions, GeometryError, MetricSource};
use crate::model::ParameterPoint;
use crate::Matrix2;
use serde::Serialize;
use std::collections::HashMap;
use std::sync::RwLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeodesicError {
    #[error("invalid initial condition: {0}")]
    InvalidInitial(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Rectangular integration domain.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Domain {
    pub kappa: (f64, f64),
    pub chi: (f64, f64),
}

impl Domain {
    pub fn contains(&self, p: ParameterPoint) -> bool {
        p.kappa >= self.kappa.0
            && p.kappa <= self.kappa.1
            && p.chi >= self.chi.0
            && p.chi <= self.chi.1
    }
}

/// Integration controls for Cauchy geodesics.
#[derive(Clone, Debug)]
pub struct GeodesicControls {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub tau_max: f64,
    pub max_steps: usize,
    pub initial_step: f64,
    pub max_step: f64,
    /// Rectangular domain; leaving it terminates the trace.
    pub domain: Option<Domain>,
    /// Known degeneracies for capture detection.
    pub capture_points: Vec<ParameterPoint>,
    /// Capture radius around a known degeneracy. Proximity alone decides:
    /// capture points are refined true degeneracies, and the determinant
    /// grows like 1/R² toward a conical degeneracy, so a det-based
    /// corroboration would never fire.
    pub capture_radius: f64,
    pub fd: FdOptions,
    /// Memoization quantum for the connection cache. Kept far below the FD
    /// step so snapping is accuracy-neutral at the integration tolerances.
    pub cache_quantum: f64,
}

impl Default for GeodesicControls {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            tau_max: 10.0,
            max_steps: 200_000,
            initial_step: 1e-4,
            max_step: 0.5,
            domain: None,
            capture_points: Vec::new(),
            capture_radius: 1e-3,
            // geodesics live where the metric is interesting; ridge valleys
            // amplify FD truncation through the near-degenerate inverse, so
            // the connection field defaults to the higher-order stencil at a
            // finer step than plain metric derivatives
            fd: FdOptions { metric_step: 1e-5, richardson: true, ..FdOptions::default() },
            cache_quantum: 1e-12,
        }
    }
}

/// Why a trace stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxTau,
    DomainExit,
    DpCapture,
    MetricDegenerate,
    StepFailure,
}

/// One accepted integration sample.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GeodesicSample {
    pub tau: f64,
    pub point: ParameterPoint,
    pub velocity: (f64, f64),
    /// Geometric speed v = √(g λ̇ λ̇).
    pub geometric_speed: f64,
    /// Ordinary (Euclidean) speed u = |λ̇|.
    pub ordinary_speed: f64,
    /// Accumulated geometric length ℓ.
    pub length: f64,
    /// Accumulated ordinary length s.
    pub arc_length: f64,
    pub det: f64,
}

/// A sampled geodesic with its termination reason.
#[derive(Clone, Debug, Serialize)]
pub struct GeodesicTrace {
    pub samples: Vec<GeodesicSample>,
    pub termination: Termination,
}

impl GeodesicTrace {
    pub fn last(&self) -> &GeodesicSample {
        self.samples.last().expect("traces hold at least the initial sample")
    }

    /// Relative drift of the conserved geometric speed over the trace.
    pub fn speed_drift(&self) -> f64 {
        let v0 = self.samples[0].geometric_speed;
        self.samples
            .iter()
            .map(|s| (s.geometric_speed - v0).abs())
            .fold(0.0, f64::max)
            / v0
    }

    pub fn points(&self) -> Vec<ParameterPoint> {
        self.samples.iter().map(|s| s.point).collect()
    }
}

/// Memoizing wrapper around connection evaluation; safe for concurrent use.
///
/// Near the listed degeneracies the metric inverse amplifies FD truncation
/// (the near-degenerate tensor cancels to a tiny determinant), so the FD
/// step shrinks quadratically with the distance to the nearest degeneracy.
pub struct ConnectionCache<'a, S: MetricSource> {
    source: &'a S,
    fd: FdOptions,
    quantum: f64,
    degeneracies: Vec<ParameterPoint>,
    shrink_radius: f64,
    map: RwLock<HashMap<(i64, i64), ConnectionData>>,
}

impl<'a, S: MetricSource> ConnectionCache<'a, S> {
    pub fn new(source: &'a S, fd: FdOptions, quantum: f64) -> Self {
        Self {
            source,
            fd,
            quantum,
            degeneracies: Vec::new(),
            shrink_radius: 0.05,
            map: RwLock::new(HashMap::new()),
        }
    }

    pub fn with_degeneracies(mut self, points: Vec<ParameterPoint>, radius: f64) -> Self {
        self.degeneracies = points;
        self.shrink_radius = radius;
        self
    }

    fn key(&self, p: ParameterPoint) -> (i64, i64) {
        ((p.kappa / self.quantum).round() as i64, (p.chi / self.quantum).round() as i64)
    }

    fn local_fd(&self, p: ParameterPoint) -> FdOptions {
        let mut fd = self.fd;
        if let Some(r) = self
            .degeneracies
            .iter()
            .map(|d| p.distance(d))
            .min_by(f64::total_cmp)
        {
            if r < self.shrink_radius {
                // linear shrink with the higher-order stencil balances FD
                // truncation (amplified by the near-degenerate inverse)
                // against eigensolver noise
                fd.metric_step *= (r / self.shrink_radius).max(1e-5);
                fd.richardson = true;
            }
        }
        fd
    }

    pub fn at(&self, p: ParameterPoint) -> Result<ConnectionData, GeometryError> {
        let key = self.key(p);
        if let Some(hit) = self.map.read().expect("cache lock").get(&key) {
            return Ok(*hit);
        }
        let data = christoffel_data(self.source, p, &self.local_fd(p))?;
        self.map.write().expect("cache lock").insert(key, data);
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

type State = [f64; 4]; // (κ, χ, κ̇, χ̇)

fn rhs(conn: &ConnectionData, y: &State) -> State {
    let v = [y[2], y[3]];
    let mut acc = [0.0f64; 2];
    for (mu, a) in acc.iter_mut().enumerate() {
        let mut sum = 0.0;
        for s in 0..2 {
            for r in 0..2 {
                sum += conn.christoffel.get(mu, s, r) * v[s] * v[r];
            }
        }
        *a = -sum;
    }
    [y[2], y[3], acc[0], acc[1]]
}

fn quadform(g: &Matrix2, v: (f64, f64)) -> f64 {
    g[(0, 0)] * v.0 * v.0 + 2.0 * g[(0, 1)] * v.0 * v.1 + g[(1, 1)] * v.1 * v.1
}

/// Does the segment [a, b] pass within `radius` of any of the points?
fn segment_in_shell(
    a: ParameterPoint,
    b: ParameterPoint,
    points: &[ParameterPoint],
    radius: f64,
) -> bool {
    let seg = (b.kappa - a.kappa, b.chi - a.chi);
    let len2 = seg.0 * seg.0 + seg.1 * seg.1;
    points.iter().any(|dp| {
        let t = if len2 > 0.0 {
            (((dp.kappa - a.kappa) * seg.0 + (dp.chi - a.chi) * seg.1) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        a.offset(t * seg.0, t * seg.1).distance(dp) < radius
    })
}

// Dormand-Prince 5(4) tableau
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct StepOutcome {
    y: State,
    err: f64,
    k_last: State,
}

fn try_step<S: MetricSource>(
    cache: &ConnectionCache<S>,
    y: &State,
    k1: &State,
    h: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<StepOutcome, GeometryError> {
    let mut k = [[0.0f64; 4]; 7];
    k[0] = *k1;
    for stage in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(stage) {
            let a = A[stage - 1][j];
            if a != 0.0 {
                for (slot, v) in ys.iter_mut().zip(kj) {
                    *slot += h * a * v;
                }
            }
        }
        if !ys.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::Spectrum(crate::spectrum::SpectrumError::NonFinite));
        }
        let p = ParameterPoint::new(ys[0], ys[1]);
        let conn = cache.at(p)?;
        k[stage] = rhs(&conn, &ys);
    }
    let mut y5 = *y;
    let mut y4 = *y;
    for (j, kj) in k.iter().enumerate() {
        for i in 0..4 {
            y5[i] += h * B5[j] * kj[i];
            y4[i] += h * B4[j] * kj[i];
        }
    }
    let mut err = 0.0f64;
    for i in 0..4 {
        let scale = abs_tol + rel_tol * y[i].abs().max(y5[i].abs());
        let e = (y5[i] - y4[i]) / scale;
        err += e * e;
    }
    Ok(StepOutcome { y: y5, err: (err / 4.0).sqrt(), k_last: k[6] })
}

/// Integrates the geodesic equation from (λ0, dλ0) until τ_max, leaving the
/// domain, entering a capture radius of a known degeneracy, the metric
/// degenerating, or the step controller failing.
pub fn integrate_cauchy<S: MetricSource>(
    source: &S,
    lambda0: ParameterPoint,
    dlambda0: (f64, f64),
    controls: &GeodesicControls,
) -> Result<GeodesicTrace, GeodesicError> {
    if dlambda0.0 == 0.0 && dlambda0.1 == 0.0 {
        return Err(GeodesicError::InvalidInitial("zero initial direction".into()));
    }
    let cache = ConnectionCache::new(source, controls.fd, controls.cache_quantum)
        .with_degeneracies(controls.capture_points.clone(), 0.05);
    let conn0 = cache.at(lambda0)?;
    if conn0.det < controls.fd.det_threshold {
        return Err(GeodesicError::InvalidInitial(format!(
            "metric determinant {:.3e} below threshold at the start point",
            conn0.det
        )));
    }

    let mut y: State = [lambda0.kappa, lambda0.chi, dlambda0.0, dlambda0.1];
    let mut tau = 0.0;
    let mut h = controls.initial_step.min(controls.tau_max);
    let mut k1 = rhs(&conn0, &y);

    let sample_at = |tau: f64, y: &State, conn: &ConnectionData, prev: Option<&GeodesicSample>| {
        let vel = (y[2], y[3]);
        let v = quadform(&conn.metric, vel).max(0.0).sqrt();
        let u = vel.0.hypot(vel.1);
        let (length, arc) = match prev {
            Some(p) => {
                let dt = tau - p.tau;
                (
                    p.length + dt * (p.geometric_speed + v) / 2.0,
                    p.arc_length + dt * (p.ordinary_speed + u) / 2.0,
                )
            }
            None => (0.0, 0.0),
        };
        GeodesicSample {
            tau,
            point: ParameterPoint::new(y[0], y[1]),
            velocity: vel,
            geometric_speed: v,
            ordinary_speed: u,
            length,
            arc_length: arc,
            det: conn.det,
        }
    };

    let mut samples = vec![sample_at(0.0, &y, &conn0, None)];
    let mut termination = Termination::MaxTau;
    let min_step = 1e-12;

    'outer: for _ in 0..controls.max_steps {
        if tau >= controls.tau_max {
            termination = Termination::MaxTau;
            break;
        }
        h = h.min(controls.tau_max - tau).min(controls.max_step);
        // never step across the capture shell: keep the spatial advance per
        // step below a quarter of the distance to the nearest capture point
        if !controls.capture_points.is_empty() {
            let here = ParameterPoint::new(y[0], y[1]);
            let u = y[2].hypot(y[3]);
            if u > 0.0 {
                let r = controls
                    .capture_points
                    .iter()
                    .map(|dp| here.distance(dp))
                    .fold(f64::INFINITY, f64::min);
                h = h.min(0.25 * r.max(controls.capture_radius) / u);
            }
        }

        let r_before = controls
            .capture_points
            .iter()
            .map(|dp| ParameterPoint::new(y[0], y[1]).distance(dp))
            .fold(f64::INFINITY, f64::min);
        let outcome = loop {
            match try_step(&cache, &y, &k1, h, controls.abs_tol, controls.rel_tol) {
                Ok(out) if out.err <= 1.0 => {
                    // the ordinary speed can grow sharply within an
                    // infalling step (the radial direction is near-null), so
                    // the pre-step spatial cap must be re-checked on the
                    // realized advance
                    let advance = (out.y[0] - y[0]).hypot(out.y[1] - y[1]);
                    if advance > 0.5 * r_before.max(controls.capture_radius) {
                        h *= 0.25;
                        if h < min_step {
                            termination = Termination::StepFailure;
                            break 'outer;
                        }
                        continue;
                    }
                    // when the step crosses a capture shell, shorten it so
                    // the endpoint lands inside the shell rather than flying
                    // past the degeneracy into the unstable zone
                    let r_end = controls
                        .capture_points
                        .iter()
                        .map(|dp| ParameterPoint::new(out.y[0], out.y[1]).distance(dp))
                        .fold(f64::INFINITY, f64::min);
                    let crossing = segment_in_shell(
                        ParameterPoint::new(y[0], y[1]),
                        ParameterPoint::new(out.y[0], out.y[1]),
                        &controls.capture_points,
                        controls.capture_radius,
                    );
                    if crossing
                        && (r_end > controls.capture_radius
                            || r_end < 0.25 * controls.capture_radius)
                        && h * 0.5 >= min_step
                    {
                        h *= 0.5;
                        continue;
                    }
                    break out;
                }
                Ok(out) => {
                    h *= (0.9 * out.err.powf(-0.2)).clamp(0.2, 1.0);
                    if h < min_step {
                        termination = Termination::StepFailure;
                        break 'outer;
                    }
                }
                Err(_) => {
                    // a stage left the well-defined region; retreat
                    h *= 0.25;
                    if h < min_step {
                        termination = Termination::MetricDegenerate;
                        break 'outer;
                    }
                }
            }
        };

        tau += h;
        y = outcome.y;
        k1 = outcome.k_last; // FSAL
        if !y.iter().all(|v| v.is_finite()) {
            termination = Termination::StepFailure;
            break;
        }
        let p = ParameterPoint::new(y[0], y[1]);
        let conn = match cache.at(p) {
            Ok(c) => c,
            Err(_) => {
                termination = Termination::MetricDegenerate;
                break;
            }
        };
        let sample = sample_at(tau, &y, &conn, samples.last());
        samples.push(sample);

        if conn.det < controls.fd.det_threshold {
            termination = Termination::MetricDegenerate;
            break;
        }
        if let Some(domain) = &controls.domain {
            if !domain.contains(p) {
                termination = Termination::DomainExit;
                break;
            }
        }
        // segment-based capture: near the degeneracy the path curls hard
        // enough that an endpoint check can skip straight across the shell
        let prev_pt = samples[samples.len() - 2].point;
        if segment_in_shell(prev_pt, p, &controls.capture_points, controls.capture_radius) {
            termination = Termination::DpCapture;
            break;
        }

        h *= (0.9 * outcome.err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        if tau >= controls.tau_max {
            termination = Termination::MaxTau;
            break;
        }
    }

    Ok(GeodesicTrace { samples, termination })
}

/// Geometric and ordinary length of a sampled path.
#[derive(Clone, Copy, Debug)]
pub struct PathLength {
    pub geometric: f64,
    pub euclidean: f64,
    /// Quadrature nodes where the metric was undefined; their integrand was
    /// taken from the surviving nodes of the same segment.
    pub flagged_nodes: usize,
}

// Gauss-Legendre 5-point rule on [0, 1]
const GL_NODES: [f64; 5] = [
    0.046910077030668004,
    0.23076534494715845,
    0.5,
    0.7692346550528415,
    0.953089922969332,
];
const GL_WEIGHTS: [f64; 5] = [
    0.11846344252809454,
    0.23931433524968324,
    0.28444444444444444,
    0.23931433524968324,
    0.11846344252809454,
];

/// Composite Gauss quadrature of ℓ = ∫ √(g λ̇ λ̇) dτ over a polyline through
/// the samples, alongside the Euclidean length.
pub fn path_length<S: MetricSource>(
    source: &S,
    path: &[ParameterPoint],
) -> Result<PathLength, GeodesicError> {
    if path.len() < 2 {
        return Ok(PathLength { geometric: 0.0, euclidean: 0.0, flagged_nodes: 0 });
    }
    let mut geometric = 0.0;
    let mut euclidean = 0.0;
    let mut flagged = 0usize;
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        let delta = (b.kappa - a.kappa, b.chi - a.chi);
        let norm = delta.0.hypot(delta.1);
        euclidean += norm;
        if norm == 0.0 {
            continue;
        }
        let mut vals = [f64::NAN; 5];
        let mut ok_sum = 0.0;
        let mut ok_count = 0usize;
        for (slot, t) in vals.iter_mut().zip(GL_NODES) {
            let q = a.offset(t * delta.0, t * delta.1);
            if let Ok(g) = source.metric(q) {
                *slot = quadform(&g, delta).max(0.0).sqrt();
                ok_sum += *slot;
                ok_count += 1;
            }
        }
        // limiting quadrature: degenerate nodes inherit the segment mean
        let fill = if ok_count > 0 { ok_sum / ok_count as f64 } else { 0.0 };
        for (v, w) in vals.iter().zip(GL_WEIGHTS) {
            if v.is_nan() {
                flagged += 1;
                geometric += w * fill;
            } else {
                geometric += w * v;
            }
        }
    }
    Ok(PathLength { geometric, euclidean, flagged_nodes: flagged })
}

/// Shooting controls for the two-point problem.
#[derive(Clone, Debug)]
pub struct DirichletOptions {
    /// Initial-direction scan resolution over the angle range; closely
    /// spaced solutions below this resolution may be missed.
    pub scan_angles: usize,
    /// Scanned initial-direction window, default the full circle.
    pub angle_range: (f64, f64),
    /// Accept a shot as a solution when its closest approach is below this.
    pub miss_tol: f64,
    pub max_bisections: usize,
}

impl Default for DirichletOptions {
    fn default() -> Self {
        Self {
            scan_angles: 720,
            angle_range: (0.0, 2.0 * std::f64::consts::PI),
            miss_tol: 1e-6,
            max_bisections: 60,
        }
    }
}

/// One converged two-point solution.
#[derive(Clone, Debug)]
pub struct DirichletSolution {
    pub initial_angle: f64,
    pub trace: GeodesicTrace,
    /// Geometric length from λ_i to the closest approach to λ_f.
    pub length: f64,
    pub miss: f64,
}

/// Shooting diagnostics: the closest-approach profile over scanned angles.
#[derive(Clone, Debug)]
pub struct DirichletResult {
    pub solutions: Vec<DirichletSolution>,
    pub scan: Vec<(f64, f64)>,
}

struct Approach {
    signed: f64,
    dist: f64,
    index: usize,
    /// fraction along segment [index, index+1]
    t: f64,
}

fn closest_approach(trace: &GeodesicTrace, target: ParameterPoint) -> Approach {
    let mut best = Approach { signed: f64::INFINITY, dist: f64::INFINITY, index: 0, t: 0.0 };
    let pts = &trace.samples;
    for i in 0..pts.len() {
        let (dist, t) = if i + 1 < pts.len() {
            let a = pts[i].point;
            let b = pts[i + 1].point;
            let ab = (b.kappa - a.kappa, b.chi - a.chi);
            let at = (target.kappa - a.kappa, target.chi - a.chi);
            let denom = ab.0 * ab.0 + ab.1 * ab.1;
            let t = if denom > 0.0 { ((at.0 * ab.0 + at.1 * ab.1) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let q = a.offset(t * ab.0, t * ab.1);
            (q.distance(&target), t)
        } else {
            (pts[i].point.distance(&target), 0.0)
        };
        if dist < best.dist {
            let vel = pts[i].velocity;
            let here = pts[i].point;
            let cross = vel.0 * (target.chi - here.chi) - vel.1 * (target.kappa - here.kappa);
            best = Approach { signed: cross.signum() * dist, dist, index: i, t };
        }
    }
    best
}

fn truncated_length(trace: &GeodesicTrace, approach: &Approach) -> f64 {
    let s = &trace.samples[approach.index];
    if approach.index + 1 < trace.samples.len() {
        let n = &trace.samples[approach.index + 1];
        s.length + approach.t * (n.length - s.length)
    } else {
        s.length
    }
}

/// Solves the two-point geodesic problem by scanning the initial direction
/// angle, root-finding on sign changes of the signed miss distance, and
/// collecting every distinct solution sorted by geometric length.
pub fn solve_dirichlet<S: MetricSource>(
    source: &S,
    from: ParameterPoint,
    to: ParameterPoint,
    controls: &GeodesicControls,
    opts: &DirichletOptions,
) -> Result<DirichletResult, GeodesicError> {
    let shoot = |angle: f64| -> Result<(GeodesicTrace, Approach), GeodesicError> {
        let trace = integrate_cauchy(source, from, (angle.cos(), angle.sin()), controls)?;
        let approach = closest_approach(&trace, to);
        Ok((trace, approach))
    };

    let n = opts.scan_angles;
    let (a_lo, a_hi) = opts.angle_range;
    let mut scan = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let angle = a_lo + (a_hi - a_lo) * i as f64 / n as f64;
        let (_, approach) = shoot(angle)?;
        scan.push((angle, approach.signed));
    }

    let mut solutions: Vec<DirichletSolution> = Vec::new();
    for i in 0..n {
        let (a0, m0) = scan[i];
        let (a1, m1) = scan[i + 1];
        if !(m0.is_finite() && m1.is_finite()) || m0.signum() == m1.signum() {
            continue;
        }
        let (mut lo, mut hi, mut mlo) = (a0, a1, m0);
        let mut found: Option<(f64, GeodesicTrace, Approach)> = None;
        for _ in 0..opts.max_bisections {
            let mid = 0.5 * (lo + hi);
            let (trace, approach) = shoot(mid)?;
            if approach.dist < opts.miss_tol {
                found = Some((mid, trace, approach));
                break;
            }
            if approach.signed.signum() == mlo.signum() {
                lo = mid;
                mlo = approach.signed;
            } else {
                hi = mid;
            }
        }
        if let Some((angle, trace, approach)) = found {
            let duplicate = solutions.iter().any(|s| {
                let d = (s.initial_angle - angle).abs();
                d.min(2.0 * std::f64::consts::PI - d) < 1e-3
            });
            if !duplicate {
                let length = truncated_length(&trace, &approach);
                solutions.push(DirichletSolution {
                    initial_angle: angle,
                    trace,
                    length,
                    miss: approach.dist,
                });
            }
        }
    }
    solutions.sort_by(|a, b| a.length.total_cmp(&b.length));
    Ok(DirichletResult { solutions, scan })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sphere_half_metric, AnalyticMetric};
    use approx::assert_relative_eq;

    fn flat() -> AnalyticMetric<impl Fn(ParameterPoint) -> Matrix2 + Sync> {
        AnalyticMetric(|_: ParameterPoint| Matrix2::new(1.0, 0.0, 0.0, 1.0))
    }

    #[test]
    fn flat_metric_geodesic_is_straight() {
        let src = flat();
        let controls = GeodesicControls { tau_max: 2.0, ..Default::default() };
        let trace =
            integrate_cauchy(&src, ParameterPoint::new(0.0, 0.0), (1.0, 0.0), &controls).unwrap();
        assert_eq!(trace.termination, Termination::MaxTau);
        let end = trace.last();
        assert_relative_eq!(end.point.kappa, 2.0, epsilon = 1e-8);
        assert!(end.point.chi.abs() < 1e-10);
        assert!(trace.speed_drift() < 1e-10);
        // ℓ accumulates the Euclidean length under the identity metric
        assert_relative_eq!(end.length, 2.0, epsilon = 1e-7);
        assert_relative_eq!(end.arc_length, 2.0, epsilon = 1e-7);
    }

    #[test]
    fn equator_is_a_great_circle() {
        let src = AnalyticMetric(sphere_half_metric);
        let controls = GeodesicControls { tau_max: 3.0, ..Default::default() };
        let start = ParameterPoint::new(std::f64::consts::FRAC_PI_2, 0.0);
        let trace = integrate_cauchy(&src, start, (0.0, 1.0), &controls).unwrap();
        for s in &trace.samples {
            assert!(
                (s.point.kappa - std::f64::consts::FRAC_PI_2).abs() < 1e-8,
                "equator drift at τ={}: θ={}",
                s.tau,
                s.point.kappa
            );
        }
        assert!(trace.speed_drift() < 1e-9);
    }

    #[test]
    fn speed_conservation_tightens_with_tolerance() {
        let src = AnalyticMetric(sphere_half_metric);
        let start = ParameterPoint::new(1.0, 0.0);
        let loose = GeodesicControls {
            tau_max: 4.0,
            abs_tol: 1e-6,
            rel_tol: 1e-6,
            ..Default::default()
        };
        let tight = GeodesicControls {
            tau_max: 4.0,
            abs_tol: 1e-11,
            rel_tol: 1e-11,
            ..Default::default()
        };
        let d_loose =
            integrate_cauchy(&src, start, (0.4, 1.0), &loose).unwrap().speed_drift();
        let d_tight =
            integrate_cauchy(&src, start, (0.4, 1.0), &tight).unwrap().speed_drift();
        assert!(d_tight < d_loose, "drift {d_tight:e} !< {d_loose:e}");
        // the FD truncation in Γ (~step²) floors the drift around 1e-8
        assert!(d_tight < 1e-7, "drift {d_tight:e}");
    }

    #[test]
    fn domain_exit_terminates() {
        let src = flat();
        let controls = GeodesicControls {
            tau_max: 10.0,
            domain: Some(Domain { kappa: (-1.0, 1.0), chi: (-1.0, 1.0) }),
            ..Default::default()
        };
        let trace =
            integrate_cauchy(&src, ParameterPoint::new(0.0, 0.0), (1.0, 0.0), &controls).unwrap();
        assert_eq!(trace.termination, Termination::DomainExit);
        assert!(trace.last().point.kappa >= 1.0);
    }

    #[test]
    fn zero_direction_rejected() {
        let src = flat();
        let err = integrate_cauchy(
            &src,
            ParameterPoint::new(0.0, 0.0),
            (0.0, 0.0),
            &GeodesicControls::default(),
        )
        .unwrap_err();
        assert!(matches!(err, GeodesicError::InvalidInitial(_)));
    }

    #[test]
    fn path_length_straight_line_reparametrization() {
        let g = Matrix2::new(2.0, 0.3, 0.3, 1.5);
        let src = AnalyticMetric(move |_: ParameterPoint| g);
        let to = (1.0, 2.0);
        // uniform and cubically clustered samplings of the same segment
        let uniform: Vec<ParameterPoint> =
            (0..=100).map(|i| ParameterPoint::new(to.0 * i as f64 / 100.0, to.1 * i as f64 / 100.0)).collect();
        let cubed: Vec<ParameterPoint> = (0..=100)
            .map(|i| {
                let t = (i as f64 / 100.0).powi(3);
                ParameterPoint::new(to.0 * t, to.1 * t)
            })
            .collect();
        let a = path_length(&src, &uniform).unwrap();
        let b = path_length(&src, &cubed).unwrap();
        let expect = quadform(&g, to).sqrt();
        assert_relative_eq!(a.geometric, expect, epsilon = 1e-12);
        assert!((a.geometric - b.geometric).abs() < 1e-8);
        assert_relative_eq!(a.euclidean, to.0.hypot(to.1), epsilon = 1e-12);
        assert_eq!(path_length(&src, &uniform[..1]).unwrap().geometric, 0.0);
    }

    #[test]
    fn equator_circumference_is_pi() {
        let src = AnalyticMetric(sphere_half_metric);
        let path: Vec<ParameterPoint> = (0..=720)
            .map(|i| {
                ParameterPoint::new(
                    std::f64::consts::FRAC_PI_2,
                    2.0 * std::f64::consts::PI * i as f64 / 720.0,
                )
            })
            .collect();
        let l = path_length(&src, &path).unwrap();
        assert_relative_eq!(l.geometric, std::f64::consts::PI, epsilon = 1e-6);
        assert_eq!(l.flagged_nodes, 0);
    }

    #[test]
    fn dirichlet_flat_single_solution() {
        let src = flat();
        let controls = GeodesicControls { tau_max: 3.0, ..Default::default() };
        let opts = DirichletOptions { scan_angles: 180, ..Default::default() };
        let from = ParameterPoint::new(0.0, 0.0);
        let to = ParameterPoint::new(1.0, 1.0);
        let result = solve_dirichlet(&src, from, to, &controls, &opts).unwrap();
        assert_eq!(result.solutions.len(), 1, "flat space has one geodesic");
        let sol = &result.solutions[0];
        assert_relative_eq!(sol.length, 2.0_f64.sqrt(), epsilon = 1e-5);
        assert_relative_eq!(sol.initial_angle, std::f64::consts::FRAC_PI_4, epsilon = 1e-4);
    }

    #[test]
    fn dirichlet_sphere_minor_and_major_arcs() {
        let src = AnalyticMetric(sphere_half_metric);
        let controls = GeodesicControls {
            tau_max: 8.0,
            domain: Some(Domain { kappa: (0.15, std::f64::consts::PI - 0.15), chi: (-7.5, 7.5) }),
            ..Default::default()
        };
        let opts = DirichletOptions { scan_angles: 360, ..Default::default() };
        let from = ParameterPoint::new(std::f64::consts::FRAC_PI_2, 0.3);
        // the (θ, φ) chart unrolls φ, so the major arc of the great circle
        // ends on the 2π-shifted chart image of the physical endpoint
        let to = ParameterPoint::new(std::f64::consts::FRAC_PI_2, 1.1);
        let image = ParameterPoint::new(std::f64::consts::FRAC_PI_2, 1.1 - 2.0 * std::f64::consts::PI);
        let minor = solve_dirichlet(&src, from, to, &controls, &opts).unwrap();
        let major = solve_dirichlet(&src, from, image, &controls, &opts).unwrap();
        assert!(!minor.solutions.is_empty());
        assert!(!major.solutions.is_empty());
        let l_minor = minor.solutions[0].length;
        let l_major = major.solutions[0].length;
        // both arcs lie on the same great circle: lengths sum to π
        assert_relative_eq!(l_minor + l_major, std::f64::consts::PI, epsilon = 1e-4);
        assert_relative_eq!(l_minor, 0.4, epsilon = 1e-5);

        // re-integrating a solution as a Cauchy problem hits the target
        let sol = &minor.solutions[0];
        let trace = integrate_cauchy(
            &src,
            from,
            (sol.initial_angle.cos(), sol.initial_angle.sin()),
            &controls,
        )
        .unwrap();
        let approach = closest_approach(&trace, to);
        assert!(approach.dist < opts.miss_tol * 2.0);
    }

    #[test]
    fn connection_cache_hits_on_repeats() {
        let src = flat();
        let cache = ConnectionCache::new(&src, FdOptions::default(), 1e-12);
        let p = ParameterPoint::new(0.25, -0.5);
        cache.at(p).unwrap();
        cache.at(p).unwrap();
        cache.at(ParameterPoint::new(0.25 + 1e-13, -0.5)).unwrap();
        assert_eq!(cache.len(), 1);
    }
}
