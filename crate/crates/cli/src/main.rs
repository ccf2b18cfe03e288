//! `seqloc` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or numerical failure, 2 configuration error,
//! 3 every trial of the run failed.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seqloc::harness::{
    check_remarks_batch, crlb_map, default_drift_deviations_ppm, default_init_radii, default_noise_levels,
    default_velocity_deviations, sweep_drift_deviation, sweep_init_error, sweep_noise, sweep_velocity_deviation,
    write_crlb_map_csv, write_remarks_csv, write_sweep_csv, write_trial_dump, CsvMeta, Method, SweepResult,
};
use seqloc::scenario::{Case, ScenarioConfig};
use seqloc::Error;

#[derive(Parser)]
#[command(name = "seqloc", version, about = "Sequential-broadcast localization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// RMSE and CRLB against TOA noise level.
    SweepNoise {
        #[command(flatten)]
        common: Common,
        /// Comma-separated sigma_rho levels in meters.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
    },
    /// Iterations and RMSE against initial position error.
    SweepInit {
        #[command(flatten)]
        common: Common,
        /// Comma-separated initial error radii in meters.
        #[arg(long, value_delimiter = ',')]
        radii: Option<Vec<f64>>,
    },
    /// Velocity-aided RMSE against aiding deviation.
    SweepVelDev {
        #[command(flatten)]
        common: Common,
        /// Comma-separated deviation norms in m/s.
        #[arg(long, value_delimiter = ',')]
        norms: Option<Vec<f64>>,
    },
    /// Drift-aided RMSE against aiding deviation.
    SweepDriftDev {
        #[command(flatten)]
        common: Common,
        /// Comma-separated deviations in ppm.
        #[arg(long, value_delimiter = ',')]
        deviations: Option<Vec<f64>>,
    },
    /// CRLB over a grid of receiver positions.
    CrlbMap {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 25.0)]
        step: f64,
        #[arg(long, default_value_t = 200.0)]
        margin: f64,
        /// Receiver velocity "vx,vy" in m/s.
        #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [10.0, 0.0])]
        velocity: Vec<f64>,
    },
    /// Information-ordering checks on drawn receiver states.
    CheckRemarks {
        #[command(flatten)]
        common: Common,
        /// Number of receiver states.
        #[arg(long, default_value_t = 200)]
        count: usize,
    },
}

#[derive(Args)]
struct Common {
    /// TOML scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 5000)]
    trials: usize,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    case: Option<Case>,
    /// Comma-separated methods: sdt, sdt-v, sdt-k, lspm-uvd.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<Method>>,
    /// Omit the timestamp metadata line.
    #[arg(long)]
    no_timestamp: bool,
    /// Print mean per-solve wall time to stderr.
    #[arg(long)]
    bench: bool,
    /// Per-trial CSV dump path.
    #[arg(long)]
    dump_trials: Option<PathBuf>,
    /// Override sigma_rho (m).
    #[arg(long)]
    sigma_rho: Option<f64>,
    /// Override the Doppler noise factor.
    #[arg(long)]
    doppler_factor: Option<f64>,
}

impl Common {
    fn scenario(&self, sigma_rho_default: Option<f64>) -> Result<ScenarioConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(case) = self.case {
            cfg.case = case;
        }
        if let Some(s) = self
            .sigma_rho
            .or(if self.config.is_none() { sigma_rho_default } else { None })
        {
            cfg.sigma_rho = s;
        }
        if let Some(f) = self.doppler_factor {
            cfg.doppler_noise_factor = f;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn methods(&self, default: &[Method]) -> Vec<Method> {
        self.method.clone().unwrap_or_else(|| default.to_vec())
    }

    fn meta(&self, cfg: &ScenarioConfig) -> CsvMeta {
        if self.no_timestamp {
            CsvMeta {
                seed: cfg.seed,
                timestamp: None,
            }
        } else {
            CsvMeta::now(cfg.seed)
        }
    }

    fn output(&self) -> io::Result<Box<dyn Write>> {
        open(self.out.as_deref())
    }
}

fn open(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

enum Failure {
    Config(Error),
    Runtime(Error),
    AllTrialsFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e),
            other => Failure::Runtime(other),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn emit_sweep(common: &Common, cfg: &ScenarioConfig, result: &SweepResult) -> Result<(), Failure> {
    let meta = common.meta(cfg);
    let mut out = common.output()?;
    write_sweep_csv(result, &meta, &mut out)?;
    out.flush()?;
    if let Some(path) = &common.dump_trials {
        let mut dump = open(Some(path))?;
        write_trial_dump(result, &meta, &mut dump)?;
        dump.flush()?;
    }
    if common.bench {
        for row in &result.rows {
            eprintln!(
                "{} {}={} mean_solve_ms={:.4}",
                row.stats.method,
                result.kind.axis_unit(),
                row.axis_value,
                row.stats.mean_solve_seconds * 1e3
            );
        }
    }
    if result.rows.iter().all(|r| r.stats.failures == r.stats.trials) {
        return Err(Failure::AllTrialsFailed);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::SweepNoise { common, levels } => {
            let cfg = common.scenario(None)?;
            let levels = levels.unwrap_or_else(default_noise_levels);
            let res = sweep_noise(
                &cfg,
                &common.methods(&[Method::Sdt, Method::LspmUvd]),
                &levels,
                common.trials,
            )?;
            emit_sweep(&common, &cfg, &res)
        }
        Command::SweepInit { common, radii } => {
            let cfg = common.scenario(None)?;
            let radii = radii.unwrap_or_else(default_init_radii);
            let res = sweep_init_error(&cfg, &common.methods(&[Method::Sdt]), &radii, common.trials)?;
            emit_sweep(&common, &cfg, &res)
        }
        Command::SweepVelDev { common, norms } => {
            let cfg = common.scenario(Some(0.1))?;
            let norms = norms.unwrap_or_else(default_velocity_deviations);
            let res = sweep_velocity_deviation(&cfg, &norms, common.trials)?;
            emit_sweep(&common, &cfg, &res)
        }
        Command::SweepDriftDev { common, deviations } => {
            let cfg = common.scenario(Some(0.1))?;
            let devs = deviations.unwrap_or_else(default_drift_deviations_ppm);
            let res = sweep_drift_deviation(&cfg, &devs, common.trials)?;
            emit_sweep(&common, &cfg, &res)
        }
        Command::CrlbMap {
            common,
            step,
            margin,
            velocity,
        } => {
            let cfg = common.scenario(None)?;
            let rows = crlb_map(&cfg, step, margin, [velocity[0], velocity[1]])?;
            let mut out = common.output()?;
            write_crlb_map_csv(&rows, &common.meta(&cfg), &mut out)?;
            out.flush()?;
            Ok(())
        }
        Command::CheckRemarks { common, count } => {
            let cfg = common.scenario(None)?;
            let rows = check_remarks_batch(&cfg, count)?;
            let mut out = common.output()?;
            write_remarks_csv(&rows, &common.meta(&cfg), &mut out)?;
            out.flush()?;
            let failed = rows.iter().filter(|(_, r)| !r.all_pass()).count();
            eprintln!("remark checks: {} of {} states pass", rows.len() - failed, rows.len());
            if failed > 0 {
                return Err(Failure::Runtime(Error::InvalidInput(format!(
                    "{failed} states failed the remark checks"
                ))));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::AllTrialsFailed) => {
            eprintln!("error: all trials failed");
            ExitCode::from(3)
        }
    }
}
