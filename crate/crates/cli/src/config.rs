//! Command-line flags, `key = value` config files, and the resolved run configuration.
//!
//! Every config key mirrors a long flag (`noise-bearing = 0.01` is
//! `--noise-bearing 0.01`); `.` and `_` are accepted in place of `-`, so
//! `noise.bearing` works too. Flags win over the file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use vslam_core::observer::{Gains, Integrator, LiftMode};
use vslam_core::sim::{ekf_config_for, Band, EstimatorSelection, ReferenceMode, Scenario};
use vslam_core::system::{FlowMode, NoiseVariances};

use crate::error::{CliError, Result};

#[derive(Parser, Debug, Clone)]
#[command(name = "vslam", version, about = "Equivariant visual SLAM observer experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Subcommand, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    /// Randomized checks of the group actions, equivariance, and lift.
    Verify,
    /// Noise-free convergence run; per-landmark Lyapunov components.
    Fig2,
    /// Observer vs EKF final RMSE over seeded trials.
    Compare,
    /// Per-step wall-clock time against landmark count.
    Bench,
    /// One seeded trial with full time series.
    Sim,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Fig2 => "fig2",
            Command::Compare => "compare",
            Command::Bench => "bench",
            Command::Sim => "sim",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorArg {
    Observer,
    Ekf,
    Both,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntegratorArg {
    Geometric,
    Additive,
    ClosedForm,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiftArg {
    Discrete,
    ZeroOrderHold,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowArg {
    Analytic,
    FiniteDifference,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceArg {
    Random,
    Lifecycle,
}

/// Flags shared by all subcommands. Unset values fall back to the config
/// file, then to the command's preset.
#[derive(Args, Debug, Clone, Default, PartialEq)]
pub struct Options {
    /// `key = value` file; keys are flag names.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Landmark count, or a comma-separated list for `bench`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub landmarks: Option<Vec<usize>>,
    /// Trial length (s).
    #[arg(long, global = true)]
    pub duration: Option<f64>,
    /// Time step (s).
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub estimator: Option<EstimatorArg>,
    /// Defaults to geometric when noise-free, closed-form otherwise.
    #[arg(long, global = true, value_enum)]
    pub integrator: Option<IntegratorArg>,
    /// Defaults to discrete when noise-free, zero-order-hold otherwise.
    #[arg(long, global = true, value_enum)]
    pub lift: Option<LiftArg>,
    #[arg(long, global = true, value_enum)]
    pub flow: Option<FlowArg>,
    /// Observer origin: random landmark set, or built from first sightings.
    #[arg(long, global = true, value_enum)]
    pub reference: Option<ReferenceArg>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for trial sweeps.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Run trials one at a time (clean timings).
    #[arg(long, global = true)]
    pub sequential: bool,
    /// Random samples per check in `verify`.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Sensor range (m); `inf` for unlimited.
    #[arg(long, global = true)]
    pub range: Option<f64>,
    #[arg(long, global = true)]
    pub gain_bearing: Option<f64>,
    #[arg(long, global = true)]
    pub gain_inverse_depth: Option<f64>,
    #[arg(long, global = true)]
    pub gain_pose: Option<f64>,
    /// Zero every noise variance (individual variances still override).
    #[arg(long, global = true)]
    pub noise_free: bool,
    #[arg(long, global = true)]
    pub noise_linear_velocity: Option<f64>,
    #[arg(long, global = true)]
    pub noise_angular_velocity: Option<f64>,
    #[arg(long, global = true)]
    pub noise_flow: Option<f64>,
    #[arg(long, global = true)]
    pub noise_bearing: Option<f64>,
    #[arg(long, global = true)]
    pub noise_inverse_depth: Option<f64>,
    /// Inner edge of the landmark band, as an offset from the path (m).
    #[arg(long, global = true)]
    pub band_inner: Option<f64>,
    #[arg(long, global = true)]
    pub band_outer: Option<f64>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_enum<T: ValueEnum>(key: &str, value: &str) -> Result<T> {
    T::from_str(value, true).map_err(|_| CliError::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(CliError::Config(format!("invalid value {value:?} for {key}"))),
    }
}

/// Parses `key = value` lines. `#` starts a comment; keys are normalized to flag spelling.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut entries = BTreeMap::new();
    for (number, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!("line {}: expected key = value", number + 1)));
        };
        let key = key.trim().to_ascii_lowercase().replace(['.', '_'], "-");
        if entries.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key {key}", number + 1)));
        }
    }
    Ok(entries)
}

impl Options {
    /// Fills unset options from config entries; set options are left alone.
    pub fn merge_file(&mut self, entries: &BTreeMap<String, String>) -> Result<()> {
        macro_rules! fill {
            ($field:ident, $key:expr, $value:expr, $parse:expr) => {
                if self.$field.is_none() {
                    self.$field = Some($parse($key, $value)?);
                }
            };
        }
        for (key, value) in entries {
            let (k, v) = (key.as_str(), value.as_str());
            match k {
                "seed" => fill!(seed, k, v, parse_value),
                "trials" => fill!(trials, k, v, parse_value),
                "landmarks" => fill!(landmarks, k, v, |k, v: &str| v
                    .split(',')
                    .map(|s| parse_value(k, s.trim()))
                    .collect::<Result<Vec<usize>>>()),
                "duration" => fill!(duration, k, v, parse_value),
                "dt" => fill!(dt, k, v, parse_value),
                "estimator" => fill!(estimator, k, v, parse_enum),
                "integrator" => fill!(integrator, k, v, parse_enum),
                "lift" => fill!(lift, k, v, parse_enum),
                "flow" => fill!(flow, k, v, parse_enum),
                "reference" => fill!(reference, k, v, parse_enum),
                "out" => fill!(out, k, v, |_, v: &str| Ok::<_, CliError>(PathBuf::from(v))),
                "jobs" => fill!(jobs, k, v, parse_value),
                "samples" => fill!(samples, k, v, parse_value),
                "range" => fill!(range, k, v, parse_value),
                "gain-bearing" => fill!(gain_bearing, k, v, parse_value),
                "gain-inverse-depth" => fill!(gain_inverse_depth, k, v, parse_value),
                "gain-pose" => fill!(gain_pose, k, v, parse_value),
                "noise-linear-velocity" => fill!(noise_linear_velocity, k, v, parse_value),
                "noise-angular-velocity" => fill!(noise_angular_velocity, k, v, parse_value),
                "noise-flow" => fill!(noise_flow, k, v, parse_value),
                "noise-bearing" => fill!(noise_bearing, k, v, parse_value),
                "noise-inverse-depth" => fill!(noise_inverse_depth, k, v, parse_value),
                "band-inner" => fill!(band_inner, k, v, parse_value),
                "band-outer" => fill!(band_outer, k, v, parse_value),
                "sequential" => self.sequential |= parse_bool(k, v)?,
                "noise-free" => self.noise_free |= parse_bool(k, v)?,
                // Echoed configs carry the command name; it is informational.
                "command" => {}
                "config" => {
                    return Err(CliError::Config(
                        "config files cannot include other config files".into(),
                    ))
                }
                _ => return Err(CliError::Config(format!("unknown key {k:?}"))),
            }
        }
        Ok(())
    }

    /// Reads and merges `--config` if one was given.
    pub fn load_config_file(&mut self) -> Result<()> {
        let Some(path) = self.config.clone() else {
            return Ok(());
        };
        let text = std::fs::read_to_string(&path).map_err(|source| CliError::Read { path, source })?;
        self.merge_file(&parse_config_text(&text)?)
    }
}

/// Fully resolved settings for one command.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub out: PathBuf,
    pub trials: usize,
    /// Landmark counts; single-run commands use the first.
    pub counts: Vec<usize>,
    /// Scenario for `counts[0]` and the configured seed.
    pub scenario: Scenario,
    pub jobs: Option<usize>,
    pub sequential: bool,
    pub samples: usize,
}

/// Default landmark counts for the timing sweep.
pub const BENCH_COUNTS: [usize; 6] = [10, 25, 50, 100, 200, 400];

impl RunConfig {
    pub fn resolve(command: Command, options: &Options) -> Result<Self> {
        let (mut scenario, trials, counts) = match command {
            Command::Verify | Command::Fig2 => (Scenario::convergence(), 1, vec![10]),
            Command::Compare => (Scenario::comparison(50), 20, vec![50]),
            Command::Bench => {
                let mut s = Scenario::comparison(BENCH_COUNTS[0]);
                s.duration = 20.0;
                (s, 3, BENCH_COUNTS.to_vec())
            }
            Command::Sim => (Scenario::comparison(50), 1, vec![50]),
        };
        let trials = options.trials.unwrap_or(trials);
        let counts = options.landmarks.clone().unwrap_or(counts);
        check_counts(command, trials, &counts)?;

        scenario.system.seed = options.seed.unwrap_or(1);
        scenario.system.landmark_count = counts[0];
        if let Some(d) = options.duration {
            scenario.duration = d;
        }
        if let Some(dt) = options.dt {
            scenario.dt = dt;
        }
        if let Some(e) = options.estimator {
            scenario.estimators = match e {
                EstimatorArg::Observer => EstimatorSelection::Observer,
                EstimatorArg::Ekf => EstimatorSelection::Ekf,
                EstimatorArg::Both => EstimatorSelection::Both,
            };
        }
        if let Some(f) = options.flow {
            scenario.system.flow_mode = match f {
                FlowArg::Analytic => FlowMode::Analytic,
                FlowArg::FiniteDifference => FlowMode::FiniteDifference,
            };
        }
        if let Some(r) = options.reference {
            scenario.reference = match r {
                ReferenceArg::Random => ReferenceMode::Random,
                ReferenceArg::Lifecycle => ReferenceMode::Lifecycle,
            };
        }
        if let Some(r) = options.range {
            scenario.system.sensor_range = r;
        }
        scenario.gains = Gains {
            bearing: options.gain_bearing.unwrap_or(scenario.gains.bearing),
            inverse_depth: options.gain_inverse_depth.unwrap_or(scenario.gains.inverse_depth),
            pose: options.gain_pose.unwrap_or(scenario.gains.pose),
        };
        scenario.band = Band {
            inner: options.band_inner.unwrap_or(scenario.band.inner),
            outer: options.band_outer.unwrap_or(scenario.band.outer),
        };

        let base = if options.noise_free {
            NoiseVariances::zero()
        } else {
            scenario.system.noise
        };
        let noise = NoiseVariances {
            linear_velocity: options.noise_linear_velocity.unwrap_or(base.linear_velocity),
            angular_velocity: options.noise_angular_velocity.unwrap_or(base.angular_velocity),
            flow: options.noise_flow.unwrap_or(base.flow),
            bearing: options.noise_bearing.unwrap_or(base.bearing),
            inverse_depth: options.noise_inverse_depth.unwrap_or(base.inverse_depth),
        };
        noise.validate()?;
        scenario.system.noise = noise;
        scenario.ekf = ekf_config_for(&noise);

        // Exact velocities favour the discrete lift; noisy ones the measured flow.
        let exact = noise.is_zero();
        scenario.lift = match options.lift {
            Some(LiftArg::Discrete) => LiftMode::Discrete,
            Some(LiftArg::ZeroOrderHold) => LiftMode::ZeroOrderHold,
            None if exact => LiftMode::Discrete,
            None => LiftMode::ZeroOrderHold,
        };
        scenario.integrator = match options.integrator {
            Some(IntegratorArg::Geometric) => Integrator::Geometric,
            Some(IntegratorArg::Additive) => Integrator::Additive,
            Some(IntegratorArg::ClosedForm) => Integrator::ClosedForm,
            None if exact => Integrator::Geometric,
            None => Integrator::ClosedForm,
        };
        scenario.validate()?;

        if options.jobs == Some(0) {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        let samples = options.samples.unwrap_or(1000);
        if samples == 0 {
            return Err(CliError::Config("--samples must be at least 1".into()));
        }

        Ok(Self {
            command,
            out: options.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            trials,
            counts,
            scenario,
            jobs: options.jobs,
            sequential: options.sequential,
            samples,
        })
    }

    /// Parses flags, merges the config file, and resolves.
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let mut options = cli.options.clone();
        options.load_config_file()?;
        Self::resolve(cli.command, &options)
    }

    /// The effective configuration as a config file that reproduces this run.
    pub fn to_config_text(&self) -> String {
        let s = &self.scenario;
        let n = &s.system.noise;
        let counts: Vec<String> = self.counts.iter().map(usize::to_string).collect();
        let mut text = String::new();
        let mut line = |key: &str, value: String| {
            let _ = writeln!(text, "{key} = {value}");
        };
        line("command", self.command.name().into());
        line("seed", s.seed().to_string());
        line("trials", self.trials.to_string());
        line("landmarks", counts.join(","));
        line("duration", s.duration.to_string());
        line("dt", s.dt.to_string());
        line("estimator", estimator_name(s.estimators).into());
        line("integrator", integrator_name(s.integrator).into());
        line("lift", lift_name(s.lift).into());
        line("flow", flow_name(s.system.flow_mode).into());
        line("reference", reference_name(s.reference).into());
        line("range", s.system.sensor_range.to_string());
        line("gain-bearing", s.gains.bearing.to_string());
        line("gain-inverse-depth", s.gains.inverse_depth.to_string());
        line("gain-pose", s.gains.pose.to_string());
        line("noise-linear-velocity", n.linear_velocity.to_string());
        line("noise-angular-velocity", n.angular_velocity.to_string());
        line("noise-flow", n.flow.to_string());
        line("noise-bearing", n.bearing.to_string());
        line("noise-inverse-depth", n.inverse_depth.to_string());
        line("band-inner", s.band.inner.to_string());
        line("band-outer", s.band.outer.to_string());
        line("out", self.out.display().to_string());
        if let Some(j) = self.jobs {
            line("jobs", j.to_string());
        }
        line("sequential", self.sequential.to_string());
        line("samples", self.samples.to_string());
        text
    }

    /// Creates the output directory and writes `config.txt` into it.
    pub fn prepare_output(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))?;
        write_file(&self.out.join("config.txt"), self.to_config_text().as_bytes())
    }
}

fn check_counts(command: Command, trials: usize, counts: &[usize]) -> Result<()> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(CliError::Config("landmark counts must be at least 1".into()));
    }
    if trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    match command {
        Command::Compare if trials < 2 => Err(CliError::Config("compare needs at least 2 trials".into())),
        Command::Bench if counts.len() < 2 => Err(CliError::Config("bench needs at least 2 landmark counts".into())),
        Command::Fig2 | Command::Compare | Command::Sim if counts.len() != 1 => Err(CliError::Config(format!(
            "{} takes a single landmark count",
            command.name()
        ))),
        _ => Ok(()),
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn estimator_name(e: EstimatorSelection) -> &'static str {
    match e {
        EstimatorSelection::Observer => "observer",
        EstimatorSelection::Ekf => "ekf",
        EstimatorSelection::Both => "both",
    }
}

pub fn integrator_name(i: Integrator) -> &'static str {
    match i {
        Integrator::Geometric => "geometric",
        Integrator::Additive => "additive",
        Integrator::ClosedForm => "closed-form",
    }
}

pub fn lift_name(l: LiftMode) -> &'static str {
    match l {
        LiftMode::Discrete => "discrete",
        LiftMode::ZeroOrderHold => "zero-order-hold",
    }
}

pub fn flow_name(f: FlowMode) -> &'static str {
    match f {
        FlowMode::Analytic => "analytic",
        FlowMode::FiniteDifference => "finite-difference",
    }
}

pub fn reference_name(r: ReferenceMode) -> &'static str {
    match r {
        ReferenceMode::Random => "random",
        ReferenceMode::Lifecycle => "lifecycle",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let mut options = Options {
            seed: Some(7),
            ..Options::default()
        };
        let entries = parse_config_text("seed = 5\n# comment\nnoise.bearing = 0.5\nduration=10 # trailing\n").unwrap();
        options.merge_file(&entries).unwrap();
        assert_eq!(options.seed, Some(7));
        assert_eq!(options.noise_bearing, Some(0.5));
        assert_eq!(options.duration, Some(10.0));
    }

    #[test]
    fn bad_files_rejected() {
        assert!(parse_config_text("seed 5").is_err());
        assert!(parse_config_text("seed = 1\nseed = 2").is_err());
        let mut o = Options::default();
        assert!(o.merge_file(&parse_config_text("bogus = 1").unwrap()).is_err());
        assert!(o.merge_file(&parse_config_text("seed = x").unwrap()).is_err());
        assert!(o.merge_file(&parse_config_text("estimator = kalman").unwrap()).is_err());
    }

    #[test]
    fn presets_and_automatic_modes() {
        let fig2 = RunConfig::resolve(Command::Fig2, &Options::default()).unwrap();
        assert_eq!(fig2.scenario, Scenario::convergence());

        let compare = RunConfig::resolve(Command::Compare, &Options::default()).unwrap();
        assert_eq!(compare.scenario, Scenario::comparison(50));
        assert_eq!(compare.trials, 20);

        let quiet = Options {
            noise_free: true,
            ..Options::default()
        };
        let sim = RunConfig::resolve(Command::Sim, &quiet).unwrap();
        assert_eq!(sim.scenario.lift, LiftMode::Discrete);
        assert_eq!(sim.scenario.integrator, Integrator::Geometric);
        assert!(sim.scenario.system.noise.is_zero());
    }

    #[test]
    fn echoed_config_round_trips() {
        let options = Options {
            seed: Some(9),
            landmarks: Some(vec![10, 20]),
            jobs: Some(2),
            noise_bearing: Some(0.02),
            ..Options::default()
        };
        let config = RunConfig::resolve(Command::Bench, &options).unwrap();
        let mut again = Options::default();
        again
            .merge_file(&parse_config_text(&config.to_config_text()).unwrap())
            .unwrap();
        assert_eq!(RunConfig::resolve(Command::Bench, &again).unwrap(), config);
    }

    #[test]
    fn invalid_settings_rejected() {
        let cases = [
            (
                Command::Compare,
                Options {
                    trials: Some(1),
                    ..Options::default()
                },
            ),
            (
                Command::Bench,
                Options {
                    landmarks: Some(vec![10]),
                    ..Options::default()
                },
            ),
            (
                Command::Fig2,
                Options {
                    landmarks: Some(vec![10, 20]),
                    ..Options::default()
                },
            ),
            (
                Command::Sim,
                Options {
                    dt: Some(-1.0),
                    ..Options::default()
                },
            ),
            (
                Command::Sim,
                Options {
                    noise_bearing: Some(-1.0),
                    ..Options::default()
                },
            ),
            (
                Command::Sim,
                Options {
                    jobs: Some(0),
                    ..Options::default()
                },
            ),
        ];
        for (command, options) in cases {
            assert!(RunConfig::resolve(command, &options).is_err(), "{options:?}");
        }
    }
}
