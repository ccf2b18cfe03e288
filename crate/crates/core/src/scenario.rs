//! Simulation world: a square of anchors, receiver ground truth drawn per
//! trial, and noisy measurement synthesis.
//!
//! Every trial owns an independent random stream derived from
//! `(seed, trial index, purpose)`, so trials can be generated in any order
//! or in parallel and still be bit-identical.
//!
//! # Config file
//!
//! Scenario configs are TOML; every key is optional and defaults to the
//! values below (SI units unless noted):
//!
//! ```toml
//! case = "inside"                 # or "outside"
//! n_anchors = 8
//! square_side = 600.0             # m
//! delta_t = 0.05                  # s between successive broadcasts
//! speed_range = [0.0, 50.0]       # m/s
//! clock_offset_range = [-1.0, 1.0]    # s
//! clock_drift_range = [-20.0, 20.0]   # ppm
//! sigma_rho = 10.0                # m
//! doppler_noise_factor = 5.0      # sigma_d = factor * sigma_rho, in m/s
//! seed = 1
//! init_radius = 60.0              # m, initial position error
//! velocity_aiding_factor = 0.1    # sigma_v = factor * sigma_rho, in m/s
//! drift_aiding_factor = 0.5       # sigma_k = factor * sigma_rho, in m/s
//! max_iter = 10
//! thr = 0.01                      # m
//! noise_free = false              # exact measurements and aiding
//! inside_grid = 3                 # inside points per axis
//! outside_points = 16             # points on the outside ring
//! outside_margin = 100.0          # m beyond the square boundary
//! # ud_positions = [[100.0, 200.0], [300.0, 300.0]]  # overrides the grid
//! ```

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::SolverConfig;
use crate::model::{h_eval, ppm_to_mps, seconds_to_meters, AnchorLayout, MeasurementSet, NoiseSpec, ParameterVector};

/// Name of the random generator, recorded in output metadata.
pub const RNG_NAME: &str = "ChaCha8";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    /// Receiver inside the anchors' convex hull.
    Inside,
    /// Receiver on a ring outside the square.
    Outside,
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Case::Inside => "inside",
            Case::Outside => "outside",
        })
    }
}

impl std::str::FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "inside" => Ok(Case::Inside),
            "outside" => Ok(Case::Outside),
            other => Err(Error::Config(format!("unknown case '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub case: Case,
    pub n_anchors: usize,
    pub square_side: f64,
    pub delta_t: f64,
    pub speed_range: (f64, f64),
    /// Seconds.
    pub clock_offset_range: (f64, f64),
    /// Parts per million.
    pub clock_drift_range: (f64, f64),
    pub sigma_rho: f64,
    pub doppler_noise_factor: f64,
    pub seed: u64,
    pub init_radius: f64,
    pub velocity_aiding_factor: f64,
    pub drift_aiding_factor: f64,
    pub max_iter: usize,
    pub thr: f64,
    pub noise_free: bool,
    pub inside_grid: usize,
    pub outside_points: usize,
    pub outside_margin: f64,
    pub ud_positions: Option<Vec<[f64; 2]>>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            case: Case::Inside,
            n_anchors: 8,
            square_side: 600.0,
            delta_t: 0.05,
            speed_range: (0.0, 50.0),
            clock_offset_range: (-1.0, 1.0),
            clock_drift_range: (-20.0, 20.0),
            sigma_rho: 10.0,
            doppler_noise_factor: 5.0,
            seed: 1,
            init_radius: 60.0,
            velocity_aiding_factor: 0.1,
            drift_aiding_factor: 0.5,
            max_iter: 10,
            thr: 1e-2,
            noise_free: false,
            inside_grid: 3,
            outside_points: 16,
            outside_margin: 100.0,
            ud_positions: None,
        }
    }
}

fn ordered(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo <= hi {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} must be an ordered finite range, got ({lo}, {hi})"
        )))
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {x}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_anchors < 3 {
            return Err(Error::Config(format!(
                "n_anchors must be at least 3, got {}",
                self.n_anchors
            )));
        }
        positive("square_side", self.square_side)?;
        positive("delta_t", self.delta_t)?;
        ordered("speed_range", self.speed_range)?;
        if self.speed_range.0 < 0.0 {
            return Err(Error::Config("speed_range must be non-negative".into()));
        }
        ordered("clock_offset_range", self.clock_offset_range)?;
        ordered("clock_drift_range", self.clock_drift_range)?;
        positive("sigma_rho", self.sigma_rho)?;
        positive("doppler_noise_factor", self.doppler_noise_factor)?;
        if !(self.init_radius >= 0.0 && self.init_radius.is_finite()) {
            return Err(Error::Config(format!(
                "init_radius must be non-negative, got {}",
                self.init_radius
            )));
        }
        positive("velocity_aiding_factor", self.velocity_aiding_factor)?;
        positive("drift_aiding_factor", self.drift_aiding_factor)?;
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        positive("thr", self.thr)?;
        positive("outside_margin", self.outside_margin)?;
        if self.inside_grid == 0 || self.outside_points == 0 {
            return Err(Error::Config("receiver grids must be non-empty".into()));
        }
        if let Some(points) = &self.ud_positions {
            if points.is_empty() || points.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::Config(
                    "ud_positions must be a non-empty list of finite points".into(),
                ));
            }
        }
        Ok(())
    }

    /// Doppler noise STD, m/s.
    pub fn sigma_d(&self) -> f64 {
        self.doppler_noise_factor * self.sigma_rho
    }

    pub fn noise(&self) -> Result<NoiseSpec> {
        NoiseSpec::uniform(self.n_anchors, self.sigma_d(), self.sigma_rho)
    }

    /// Aiding velocity STD per axis, m/s.
    pub fn sigma_v(&self) -> f64 {
        self.velocity_aiding_factor * self.sigma_rho
    }

    /// Aiding drift STD, m/s.
    pub fn sigma_k(&self) -> f64 {
        self.drift_aiding_factor * self.sigma_rho
    }

    pub fn solver(&self, theta0: ParameterVector) -> Result<SolverConfig> {
        SolverConfig::new(self.max_iter, self.thr, theta0)
    }

    /// Candidate receiver positions for the configured case.
    pub fn ud_grid(&self) -> Vec<[f64; 2]> {
        if let Some(points) = &self.ud_positions {
            return points.clone();
        }
        let side = self.square_side;
        match self.case {
            Case::Inside => {
                let n = self.inside_grid;
                let step = side / (n + 1) as f64;
                (1..=n)
                    .flat_map(|i| (1..=n).map(move |j| [i as f64 * step, j as f64 * step]))
                    .collect()
            }
            Case::Outside => {
                let m = self.outside_margin;
                perimeter_points(-m, side + 2.0 * m, self.outside_points)
            }
        }
    }
}

/// `count` points evenly spaced along the boundary of the square with
/// lower-left corner `(origin, origin)`, counter-clockwise from that corner.
fn perimeter_points(origin: f64, side: f64, count: usize) -> Vec<[f64; 2]> {
    let spacing = 4.0 * side / count as f64;
    (0..count)
        .map(|i| {
            let s = i as f64 * spacing;
            let (edge, t) = ((s / side).floor() as usize, s % side);
            let (x, y) = match edge {
                0 => (t, 0.0),
                1 => (side, t),
                2 => (side - t, side),
                _ => (0.0, side - t),
            };
            [origin + x, origin + y]
        })
        .collect()
}

/// Anchors evenly spaced on the square boundary, starting at the origin
/// corner. Eight anchors land on the four corners and four edge midpoints.
pub fn build_layout(cfg: &ScenarioConfig) -> Result<AnchorLayout> {
    cfg.validate()?;
    let anchors = perimeter_points(0.0, cfg.square_side, cfg.n_anchors)
        .into_iter()
        .map(|p| p.to_vec())
        .collect();
    AnchorLayout::new(anchors, cfg.delta_t)
}

/// Independent per-trial streams for each purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Truth = 1,
    Aiding = 2,
}

/// Generator for `(seed, trial, purpose)`. Streams for distinct trials of
/// the same purpose share a key and never overlap.
pub fn trial_rng(seed: u64, trial: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let tag = (purpose as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag);
    rng.set_stream(trial);
    rng
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Receiver ground truth: a grid position, uniform speed and heading,
/// uniform clock offset and drift.
pub fn draw_truth(cfg: &ScenarioConfig, rng: &mut impl Rng) -> ParameterVector {
    let grid = cfg.ud_grid();
    let p = grid[rng.random_range(0..grid.len())];
    let speed = uniform(rng, cfg.speed_range);
    let heading = uniform(rng, (0.0, 2.0 * std::f64::consts::PI));
    let b = seconds_to_meters(uniform(rng, cfg.clock_offset_range));
    let k = ppm_to_mps(uniform(rng, cfg.clock_drift_range));
    ParameterVector::new(&p, b, &[speed * heading.cos(), speed * heading.sin()], k)
        .expect("validated config yields finite truth")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialTruth {
    pub theta_true: ParameterVector,
    pub layout: AnchorLayout,
    pub measurements: MeasurementSet,
    /// Solver starting point.
    pub theta0: ParameterVector,
}

/// Noisy measurements at `theta_true` and a perturbed starting point.
///
/// The start sits on a circle of `init_radius` around the true position;
/// its clock offset is the first pseudorange, velocity and drift are zero.
pub fn synthesize(
    theta_true: &ParameterVector,
    layout: &AnchorLayout,
    cfg: &ScenarioConfig,
    rng: &mut impl Rng,
) -> Result<TrialTruth> {
    let m = layout.len();
    if m != cfg.n_anchors {
        return Err(Error::Config(format!(
            "layout has {m} anchors but the config expects {}",
            cfg.n_anchors
        )));
    }
    let clean = h_eval(theta_true, layout)?;
    let scale = if cfg.noise_free { 0.0 } else { 1.0 };
    let (sigma_d, sigma_rho) = (cfg.sigma_d(), cfg.sigma_rho);
    let mut d = Vec::with_capacity(m);
    let mut rho = Vec::with_capacity(m);
    for i in 0..m {
        let z: f64 = rng.sample(StandardNormal);
        d.push(clean[i] + scale * sigma_d * z);
    }
    for i in 0..m {
        let z: f64 = rng.sample(StandardNormal);
        rho.push(clean[m + i] + scale * sigma_rho * z);
    }
    let angle = uniform(rng, (0.0, 2.0 * std::f64::consts::PI));
    let p0 = [
        theta_true.p[0] + cfg.init_radius * angle.cos(),
        theta_true.p[1] + cfg.init_radius * angle.sin(),
    ];
    let theta0 = ParameterVector::new(&p0, rho[0], &[0.0, 0.0], 0.0)?;
    Ok(TrialTruth {
        theta_true: theta_true.clone(),
        layout: layout.clone(),
        measurements: MeasurementSet::new(d, rho, cfg.noise()?)?,
        theta0,
    })
}

/// Truth and measurements of trial `index`, independent of every other trial.
pub fn generate_trial(cfg: &ScenarioConfig, layout: &AnchorLayout, index: u64) -> Result<TrialTruth> {
    let mut rng = trial_rng(cfg.seed, index, StreamPurpose::Truth);
    let theta = draw_truth(cfg, &mut rng);
    synthesize(&theta, layout, cfg, &mut rng)
}
