//! Monte-Carlo engine and experiment sweeps.
//!
//! A sweep point runs `trials` independent draws of the scenario, solves
//! each with the requested method, and reduces the errors to per-block RMSE
//! `sqrt(mean |x - x_hat|^2)`. Matching theoretical curves (CRLB, or the
//! bias-plus-variance prediction for deviated aiding) are evaluated at each
//! trial's true state and aggregated the same way, by RMS over trials.
//!
//! Trials run in parallel and are reduced in index order, so results do not
//! depend on the thread count.

use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::analysis::{
    bias_deviated_drift, bias_deviated_velocity, fim_lspm_uvd, fim_sdt, fim_sdt_k, fim_sdt_v, remark_checks,
    solve_lspm_uvd, BlockRmse, BlockSums, RemarkReport,
};
use crate::error::{Error, Result};
use crate::estimator::{solve_las_sdt, solve_las_sdt_k, solve_las_sdt_v, SolveResult};
use crate::model::{ppm_to_mps, AidingDrift, AidingVelocity, AnchorLayout, NoiseSpec, ParameterVector};
use crate::scenario::{build_layout, draw_truth, generate_trial, trial_rng, ScenarioConfig, StreamPurpose, RNG_NAME};

/// Version tag of the sweep CSV layout.
pub const CSV_SCHEMA: &str = "seqloc-sweep-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Doppler + pseudorange.
    Sdt,
    /// Doppler + pseudorange + velocity aiding.
    SdtV,
    /// Doppler + pseudorange + drift aiding.
    SdtK,
    /// Pseudorange only.
    LspmUvd,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Sdt, Method::SdtV, Method::SdtK, Method::LspmUvd];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sdt => "sdt",
            Method::SdtV => "sdt-v",
            Method::SdtK => "sdt-k",
            Method::LspmUvd => "lspm-uvd",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}' (expected sdt, sdt-v, sdt-k, lspm-uvd)")))
    }
}

/// How the aided methods receive their external measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AidingMode {
    /// Truth plus zero-mean Gaussian error with the configured STD (none
    /// when the scenario is noise free).
    Noisy,
    /// As `Noisy`, plus a fixed offset of this magnitude (m/s): random
    /// heading for velocity aiding, random sign for drift aiding.
    Deviated(f64),
}

/// Per-trial outcome, as written to the optional dump.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub index: u64,
    pub theta_true: ParameterVector,
    pub theta_hat: Option<ParameterVector>,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
    /// Diagonal CRLB of the method at the true state.
    crlb: Option<DVector<f64>>,
    /// Bias-plus-variance prediction (deviated aiding only).
    predicted: Option<DVector<f64>>,
    solve_seconds: f64,
}

impl TrialRecord {
    /// Squared error per flattened parameter, if the solve succeeded.
    pub fn squared_error(&self) -> Option<DVector<f64>> {
        self.theta_hat
            .as_ref()
            .map(|hat| (hat.to_flat() - self.theta_true.to_flat()).map(|e| e * e))
    }
}

/// Statistics of one Monte-Carlo point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointStats {
    pub method: Method,
    pub trials: usize,
    /// Trials whose solve returned an error; excluded from RMSE.
    pub failures: usize,
    pub convergence_rate: f64,
    pub mean_iterations: f64,
    /// Over every trial that produced an estimate, converged or not.
    pub rmse: BlockRmse,
    /// Over converged trials only.
    pub rmse_converged: BlockRmse,
    pub crlb: BlockRmse,
    /// Deviated-aiding prediction; `None` for unbiased runs.
    pub theory: Option<BlockRmse>,
    pub mean_solve_seconds: f64,
}

fn aiding_for(
    cfg: &ScenarioConfig,
    truth: &ParameterVector,
    index: u64,
    mode: AidingMode,
) -> Result<(AidingVelocity, AidingDrift, DVector<f64>, f64)> {
    let mut rng = trial_rng(cfg.seed, index, StreamPurpose::Aiding);
    let n = truth.dim();
    let zv: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let zk: f64 = rng.sample(StandardNormal);
    let heading = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };

    let magnitude = match mode {
        AidingMode::Noisy => 0.0,
        AidingMode::Deviated(m) => m,
    };
    let mut offset_v = DVector::zeros(n);
    offset_v[0] = magnitude * heading.cos();
    offset_v[1] = magnitude * heading.sin();
    let offset_k = sign * magnitude;

    let (sv, sk) = (cfg.sigma_v(), cfg.sigma_k());
    let scale = if cfg.noise_free { 0.0 } else { 1.0 };
    let v_tilde = &truth.v + DVector::from_vec(zv) * (scale * sv) + &offset_v;
    let k_tilde = truth.k + scale * sk * zk + offset_k;
    Ok((
        AidingVelocity::isotropic(v_tilde.as_slice(), sv)?,
        AidingDrift::new(k_tilde, sk)?,
        // Deviations as truth minus aiding.
        -offset_v,
        -offset_k,
    ))
}

fn run_trial(
    cfg: &ScenarioConfig,
    layout: &AnchorLayout,
    noise: &NoiseSpec,
    method: Method,
    mode: AidingMode,
    index: u64,
) -> Result<TrialRecord> {
    let trial = generate_trial(cfg, layout, index)?;
    let truth = &trial.theta_true;
    let (av, ak, dv, dk) = aiding_for(cfg, truth, index, mode)?;
    let solver = cfg.solver(trial.theta0.clone())?;

    let start = Instant::now();
    let solved: Result<SolveResult> = match method {
        Method::Sdt => solve_las_sdt(&trial.measurements, layout, &solver),
        Method::SdtV => solve_las_sdt_v(&trial.measurements, &av, layout, &solver),
        Method::SdtK => solve_las_sdt_k(&trial.measurements, &ak, layout, &solver),
        Method::LspmUvd => solve_lspm_uvd(
            &trial.measurements.rho,
            &trial.measurements.noise.sigma_rho,
            layout,
            &solver,
        ),
    };
    let solve_seconds = start.elapsed().as_secs_f64();

    let crlb = match method {
        Method::Sdt => fim_sdt(truth, layout, noise),
        Method::SdtV => fim_sdt_v(truth, layout, noise, &av),
        Method::SdtK => fim_sdt_k(truth, layout, noise, &ak),
        Method::LspmUvd => fim_lspm_uvd(truth, layout, noise),
    }
    .ok()
    .map(|r| r.crlb);

    let predicted = match (mode, method) {
        (AidingMode::Deviated(_), Method::SdtV) => {
            Some(bias_deviated_velocity(truth, layout, noise, &av, dv.as_slice())?)
        }
        (AidingMode::Deviated(_), Method::SdtK) => Some(bias_deviated_drift(truth, layout, noise, &ak, dk)?),
        _ => None,
    }
    .map(|p| p.bias.map(|b| b * b) + p.variance.diagonal());

    let (theta_hat, iterations, converged, error) = match solved {
        Ok(res) => (Some(res.theta_hat), res.iterations, res.converged, None),
        Err(e) => (None, 0, false, Some(e.to_string())),
    };
    Ok(TrialRecord {
        index,
        theta_true: trial.theta_true,
        theta_hat,
        iterations,
        converged,
        error,
        crlb,
        predicted,
        solve_seconds,
    })
}

/// Reduces per-trial records to point statistics, in record order.
pub fn reduce(method: Method, records: &[TrialRecord]) -> PointStats {
    let n = records.first().map_or(2, |r| r.theta_true.dim());
    let mut all = BlockSums::default();
    let mut conv = BlockSums::default();
    let mut crlb = BlockSums::default();
    let mut theory = BlockSums::default();
    let (mut solved, mut converged, mut crlb_count, mut theory_count) = (0usize, 0usize, 0usize, 0usize);
    let mut iterations = 0usize;
    let mut seconds = 0.0;
    for r in records {
        seconds += r.solve_seconds;
        if let Some(sq) = r.squared_error() {
            let sums = BlockSums::from_flat(n, &sq);
            all.add(&sums);
            solved += 1;
            iterations += r.iterations;
            if r.converged {
                conv.add(&sums);
                converged += 1;
            }
        }
        if let Some(c) = &r.crlb {
            crlb.add(&BlockSums::from_flat(n, c));
            crlb_count += 1;
        }
        if let Some(p) = &r.predicted {
            theory.add(&BlockSums::from_flat(n, p));
            theory_count += 1;
        }
    }
    let mean = |s: BlockSums, count: usize| BlockRmse::from_block_sums(s.scaled(1.0 / count as f64));
    let trials = records.len();
    PointStats {
        method,
        trials,
        failures: trials - solved,
        convergence_rate: converged as f64 / trials.max(1) as f64,
        mean_iterations: iterations as f64 / solved as f64,
        rmse: mean(all, solved),
        rmse_converged: mean(conv, converged),
        crlb: mean(crlb, crlb_count),
        theory: (theory_count > 0).then(|| mean(theory, theory_count)),
        mean_solve_seconds: seconds / trials.max(1) as f64,
    }
}

/// Runs `trials` independent trials of one method.
///
/// Solver failures are counted, not raised; only configuration problems
/// return an error.
pub fn monte_carlo(
    cfg: &ScenarioConfig,
    method: Method,
    trials: usize,
    mode: AidingMode,
) -> Result<(PointStats, Vec<TrialRecord>)> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    cfg.validate()?;
    let layout = build_layout(cfg)?;
    let noise = cfg.noise()?;
    let records = (0..trials as u64)
        .into_par_iter()
        .map(|i| run_trial(cfg, &layout, &noise, method, mode, i))
        .collect::<Result<Vec<_>>>()?;
    Ok((reduce(method, &records), records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Noise,
    InitError,
    VelocityDeviation,
    DriftDeviation,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Noise => "noise",
            SweepKind::InitError => "init-error",
            SweepKind::VelocityDeviation => "velocity-deviation",
            SweepKind::DriftDeviation => "drift-deviation",
        }
    }

    pub fn axis_unit(self) -> &'static str {
        match self {
            SweepKind::Noise => "sigma_rho_m",
            SweepKind::InitError => "init_radius_m",
            SweepKind::VelocityDeviation => "velocity_deviation_mps",
            SweepKind::DriftDeviation => "drift_deviation_ppm",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub sigma_rho: f64,
    pub doppler_factor: f64,
    pub stats: PointStats,
    pub records: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub case: crate::scenario::Case,
    pub axis: Vec<f64>,
    /// One row per (axis value, method), axis-major.
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn row(&self, axis_value: f64, method: Method) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.axis_value == axis_value && r.stats.method == method)
    }

    /// Rows of one method in axis order.
    pub fn series(&self, method: Method) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.stats.method == method).collect()
    }
}

/// Five log-spaced TOA noise levels from 0.1 m to 10 m.
pub fn default_noise_levels() -> Vec<f64> {
    (0..5).map(|i| 10f64.powf(-1.0 + 0.5 * i as f64)).collect()
}

pub fn default_init_radii() -> Vec<f64> {
    vec![60.0, 100.0, 200.0, 300.0]
}

/// Velocity deviation norms 0, 10, ..., 50 m/s.
pub fn default_velocity_deviations() -> Vec<f64> {
    (0..6).map(|i| 10.0 * i as f64).collect()
}

/// Drift deviations 0, 0.04, ..., 0.2 ppm.
pub fn default_drift_deviations_ppm() -> Vec<f64> {
    (0..6).map(|i| 0.04 * i as f64).collect()
}

fn sweep(
    kind: SweepKind,
    cfg: &ScenarioConfig,
    axis: &[f64],
    methods: &[Method],
    trials: usize,
    point: impl Fn(&ScenarioConfig, f64) -> (ScenarioConfig, AidingMode),
) -> Result<SweepResult> {
    if methods.is_empty() {
        return Err(Error::Config("at least one method is required".into()));
    }
    let mut rows = Vec::with_capacity(axis.len() * methods.len());
    for &value in axis {
        let (point_cfg, mode) = point(cfg, value);
        for &method in methods {
            let (stats, records) = monte_carlo(&point_cfg, method, trials, mode)?;
            rows.push(SweepRow {
                axis_value: value,
                sigma_rho: point_cfg.sigma_rho,
                doppler_factor: point_cfg.doppler_noise_factor,
                stats,
                records,
            });
        }
    }
    Ok(SweepResult {
        kind,
        case: cfg.case,
        axis: axis.to_vec(),
        rows,
    })
}

/// RMSE and CRLB against the TOA noise level.
pub fn sweep_noise(
    cfg: &ScenarioConfig,
    methods: &[Method],
    sigma_levels: &[f64],
    trials: usize,
) -> Result<SweepResult> {
    sweep(SweepKind::Noise, cfg, sigma_levels, methods, trials, |c, s| {
        (
            ScenarioConfig {
                sigma_rho: s,
                ..c.clone()
            },
            AidingMode::Noisy,
        )
    })
}

/// Iterations and RMSE against the initial position error.
pub fn sweep_init_error(cfg: &ScenarioConfig, methods: &[Method], radii: &[f64], trials: usize) -> Result<SweepResult> {
    sweep(SweepKind::InitError, cfg, radii, methods, trials, |c, r| {
        (
            ScenarioConfig {
                init_radius: r,
                ..c.clone()
            },
            AidingMode::Noisy,
        )
    })
}

/// Velocity-aided RMSE against the aiding deviation norm (m/s), with the
/// bias-plus-variance prediction in `stats.theory`.
pub fn sweep_velocity_deviation(cfg: &ScenarioConfig, norms: &[f64], trials: usize) -> Result<SweepResult> {
    sweep(
        SweepKind::VelocityDeviation,
        cfg,
        norms,
        &[Method::SdtV],
        trials,
        |c, m| (c.clone(), AidingMode::Deviated(m)),
    )
}

/// Drift-aided RMSE against the aiding deviation (ppm), with the
/// bias-plus-variance prediction in `stats.theory`.
pub fn sweep_drift_deviation(cfg: &ScenarioConfig, deviations_ppm: &[f64], trials: usize) -> Result<SweepResult> {
    sweep(
        SweepKind::DriftDeviation,
        cfg,
        deviations_ppm,
        &[Method::SdtK],
        trials,
        |c, ppm| (c.clone(), AidingMode::Deviated(ppm_to_mps(ppm))),
    )
}

/// Output metadata for CSV files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvMeta {
    pub seed: u64,
    /// Unix seconds; `None` omits the timestamp line.
    pub timestamp: Option<u64>,
}

impl CsvMeta {
    pub fn now(seed: u64) -> Self {
        let ts = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            seed,
            timestamp: Some(ts),
        }
    }

    fn write_header(&self, out: &mut impl Write, schema: &str) -> Result<()> {
        writeln!(out, "# {schema} rng={RNG_NAME} seed={}", self.seed)?;
        if let Some(ts) = self.timestamp {
            writeln!(out, "# generated_unix={ts}")?;
        }
        Ok(())
    }
}

const BLOCK_COLUMNS: [&str; 4] = ["position_m", "clock_offset_m", "velocity_mps", "drift_mps"];

pub fn sweep_csv_header() -> Vec<String> {
    let mut cols: Vec<String> = [
        "sweep",
        "axis_unit",
        "axis_value",
        "method",
        "case",
        "doppler_factor",
        "sigma_rho_m",
        "trials",
        "failures",
        "convergence_rate",
        "mean_iterations",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for prefix in ["rmse", "crlb", "theory", "conv_rmse"] {
        cols.extend(BLOCK_COLUMNS.iter().map(|c| format!("{prefix}_{c}")));
    }
    cols
}

fn fmt(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

/// Writes one row per (axis value, method) using the versioned header.
pub fn write_sweep_csv(result: &SweepResult, meta: &CsvMeta, out: impl Write) -> Result<()> {
    let mut out = out;
    meta.write_header(&mut out, CSV_SCHEMA)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(sweep_csv_header())?;
    for row in &result.rows {
        let s = &row.stats;
        let mut rec = vec![
            result.kind.name().to_string(),
            result.kind.axis_unit().to_string(),
            fmt(row.axis_value),
            s.method.name().to_string(),
            result.case.to_string(),
            fmt(row.doppler_factor),
            fmt(row.sigma_rho),
            s.trials.to_string(),
            s.failures.to_string(),
            fmt(s.convergence_rate),
            fmt(s.mean_iterations),
        ];
        for block in [Some(s.rmse), Some(s.crlb), s.theory, Some(s.rmse_converged)] {
            match block {
                Some(b) => rec.extend(b.as_array().map(fmt)),
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

fn param_names(n: usize) -> Vec<String> {
    let axes = ["x", "y", "z"];
    let mut names: Vec<String> = axes[..n].iter().map(|a| format!("p{a}")).collect();
    names.push("b".into());
    names.extend(axes[..n].iter().map(|a| format!("v{a}")));
    names.push("k".into());
    names
}

/// Per-trial dump: axis value, method, trial index, true and estimated
/// state, iterations, convergence and error text.
pub fn write_trial_dump(result: &SweepResult, meta: &CsvMeta, out: impl Write) -> Result<()> {
    let mut out = out;
    meta.write_header(&mut out, "seqloc-trials-v1")?;
    let n = result
        .rows
        .iter()
        .flat_map(|r| r.records.first())
        .map(|r| r.theta_true.dim())
        .next()
        .unwrap_or(2);
    let names = param_names(n);
    let mut header = vec!["axis_value".to_string(), "method".into(), "trial".into()];
    header.extend(names.iter().map(|c| format!("true_{c}")));
    header.extend(names.iter().map(|c| format!("est_{c}")));
    header.extend(["iterations", "converged", "error"].map(String::from));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header)?;
    for row in &result.rows {
        for r in &row.records {
            let mut rec = vec![fmt(row.axis_value), row.stats.method.name().into(), r.index.to_string()];
            rec.extend(r.theta_true.to_flat().iter().map(|x| fmt(*x)));
            match &r.theta_hat {
                Some(hat) => rec.extend(hat.to_flat().iter().map(|x| fmt(*x))),
                None => rec.extend(std::iter::repeat_n(String::new(), 2 * n + 2)),
            }
            rec.push(r.iterations.to_string());
            rec.push(r.converged.to_string());
            rec.push(r.error.clone().unwrap_or_default());
            w.write_record(rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// CRLB of the joint and TOA-only models at one receiver position.
#[derive(Debug, Clone, PartialEq)]
pub struct CrlbMapRow {
    pub x: f64,
    pub y: f64,
    pub sdt: BlockRmse,
    pub lspm_uvd: BlockRmse,
}

/// CRLB over a square grid covering the anchor square plus `margin`, for a
/// receiver with the given velocity and no clock error. Points within 1 m
/// of an anchor are skipped.
pub fn crlb_map(cfg: &ScenarioConfig, step: f64, margin: f64, velocity: [f64; 2]) -> Result<Vec<CrlbMapRow>> {
    if !(step > 0.0 && step.is_finite()) || !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::Config(
            "crlb map step must be positive and margin non-negative".into(),
        ));
    }
    let layout = build_layout(cfg)?;
    let noise = cfg.noise()?;
    let count = ((cfg.square_side + 2.0 * margin) / step).floor() as usize + 1;
    let coords: Vec<f64> = (0..count).map(|i| -margin + i as f64 * step).collect();
    let mut rows = Vec::new();
    for &y in &coords {
        for &x in &coords {
            if layout
                .anchors()
                .iter()
                .any(|q| ((q[0] - x).powi(2) + (q[1] - y).powi(2)).sqrt() < 1.0)
            {
                continue;
            }
            let theta = ParameterVector::new(&[x, y], 0.0, &velocity, 0.0)?;
            let (Ok(sdt), Ok(toa)) = (fim_sdt(&theta, &layout, &noise), fim_lspm_uvd(&theta, &layout, &noise)) else {
                continue;
            };
            rows.push(CrlbMapRow {
                x,
                y,
                sdt: sdt.grouped_rmse,
                lspm_uvd: toa.grouped_rmse,
            });
        }
    }
    Ok(rows)
}

pub fn write_crlb_map_csv(rows: &[CrlbMapRow], meta: &CsvMeta, out: impl Write) -> Result<()> {
    let mut out = out;
    meta.write_header(&mut out, "seqloc-crlb-map-v1")?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x_m".to_string(), "y_m".into()];
    for prefix in ["sdt", "lspm_uvd"] {
        header.extend(BLOCK_COLUMNS.iter().map(|c| format!("{prefix}_crlb_{c}")));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![fmt(r.x), fmt(r.y)];
        rec.extend(r.sdt.as_array().map(fmt));
        rec.extend(r.lspm_uvd.as_array().map(fmt));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Remark checks on `count` drawn receiver states of the configured case,
/// with aiding STDs from the config.
pub fn check_remarks_batch(cfg: &ScenarioConfig, count: usize) -> Result<Vec<(ParameterVector, RemarkReport)>> {
    let layout = build_layout(cfg)?;
    let noise = cfg.noise()?;
    (0..count as u64)
        .map(|i| {
            let mut rng = trial_rng(cfg.seed, i, StreamPurpose::Truth);
            let theta = draw_truth(cfg, &mut rng);
            let av = AidingVelocity::isotropic(theta.v.as_slice(), cfg.sigma_v())?;
            let ak = AidingDrift::new(theta.k, cfg.sigma_k())?;
            let report = remark_checks(&theta, &layout, &noise, &av, &ak)?;
            Ok((theta, report))
        })
        .collect()
}

pub fn write_remarks_csv(rows: &[(ParameterVector, RemarkReport)], meta: &CsvMeta, out: impl Write) -> Result<()> {
    let mut out = out;
    meta.write_header(&mut out, "seqloc-remarks-v1")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "px_m",
        "py_m",
        "doppler_gain",
        "doppler_eig_margin",
        "doppler_crlb_margin",
        "aiding_gain",
        "velocity_eig_margin",
        "velocity_inverse_margin",
        "drift_eig_margin",
        "drift_inverse_margin",
        "bias_growth",
        "beta",
        "bias_margin",
    ])?;
    for (theta, r) in rows {
        w.write_record([
            fmt(theta.p[0]),
            fmt(theta.p[1]),
            r.doppler_gain.to_string(),
            fmt(r.doppler_eig_margin),
            fmt(r.doppler_crlb_margin),
            r.aiding_gain.to_string(),
            fmt(r.velocity_eig_margin),
            fmt(r.velocity_inverse_margin),
            fmt(r.drift_eig_margin),
            fmt(r.drift_inverse_margin),
            r.bias_growth.to_string(),
            fmt(r.beta),
            fmt(r.bias_margin),
        ])?;
    }
    w.flush()?;
    Ok(())
}
