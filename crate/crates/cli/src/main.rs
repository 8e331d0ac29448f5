//! `ecusum`: threshold calibration, design curves, Monte Carlo checks, stream
//! detection and exact framework measures from the command line.
//!
//! CSV output (the default) starts with `# key=value` lines echoing the fully
//! resolved configuration, so every output file can be regenerated from its
//! own header.
//!
//! Exit codes: 0 success, 2 invalid parameters or document, 3 malformed
//! stream, 4 simulation truncation policy tripped.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use ecusum::analytic::{
    calibrate_cusum_threshold, calibrate_threshold, curve_table, cusum_operating_point, ecusum_operating_point,
    log_grid, CURVE_CSV_HEADER,
};
use ecusum::framework::document::{evaluate_document, REPORT_CSV_HEADER};
use ecusum::simulate::{
    analytic_mean, default_dt, monte_carlo_run_length, SimConfig, SimError, SimulationReport, Variant, SIM_CSV_HEADER,
};
use ecusum::stream::{run_detector_csv, InputForm, StreamError, ALARM_CSV_HEADER};
use ecusum::{DriftChangeSpec, ParamError, Regime, Threshold};

const EXIT_PARAM: u8 = 2;
const EXIT_STREAM: u8 = 3;
const EXIT_TRUNCATION: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "ecusum", version, about = "Extended CUSUM detection toolkit")]
struct Cli {
    /// Master seed for Monte Carlo streams
    #[arg(long, global = true, env = "ECUSUM_SEED", default_value_t = 1)]
    seed: u64,

    /// Write output here instead of standard output
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Comment header with the resolved configuration, then a CSV table
    Csv,
    /// `key: value` lines for reading
    Text,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Threshold whose false-alarm period equals gamma, and its operating point
    #[command(after_long_help = CALIBRATE_COLUMNS)]
    Calibrate(CalibrateArgs),
    /// Normalized delay versus false-alarm curves, ECUSUM against CUSUM
    #[command(after_long_help = CURVES_COLUMNS)]
    Curves(CurvesArgs),
    /// Monte Carlo mean run length against the closed form
    #[command(after_long_help = MC_COLUMNS)]
    Mc(McArgs),
    /// Run the online detector over a recorded stream
    #[command(after_long_help = DETECT_COLUMNS)]
    Detect(DetectArgs),
    /// Exact randomized change-time measures of a finite discrete model
    #[command(after_long_help = FRAMEWORK_COLUMNS)]
    Framework(FrameworkArgs),
}

const CALIBRATE_COLUMNS: &str = "\
Output columns:
  gamma                target mean time to false alarm
  mu, lambda           post-change drift and occurrence rate
  nu                   threshold solving h_nu(0) = gamma, where h_nu(0) =
                       (2/mu^2)(e^nu - nu - 1 + (e^nu - 1)/r0), found by bisection
  delay                g_nu(0) = (2/mu^2)(nu - 1 + e^-nu + (1 - e^-nu)/r_inf),
                       the mean detection delay with the change at time 0
  false_alarm_period   h_nu(0), equal to gamma up to the bisection tolerance
  normalized_delay     mu^2 delay / 2
  normalized_fa        mu^2 false_alarm_period / 2
  cusum_nu             threshold of the classical CUSUM with the same false-alarm period,
                       solving (2/mu^2)(e^nu - nu - 1) = gamma
  cusum_delay          classical CUSUM delay (2/mu^2)(nu - 1 + e^-nu)
Here r_inf = 1/2 + sqrt(1/4 + 2 lambda/mu^2) and -r0 = -(2 lambda/mu^2)/r_inf are the
roots of r^2 - r - 2 lambda/mu^2 = 0.";

const CURVES_COLUMNS: &str = "\
Output columns (one row per ratio and gamma_norm, ratio-major):
  ratio                mu^2/lambda, the only shape parameter of the normalized curves
  gamma_norm           normalized false-alarm period mu^2 gamma / 2
  ecusum_delay_norm    mu^2 g_nu(0) / 2 at the ECUSUM threshold calibrated to gamma
  cusum_delay_norm     nu - 1 + e^-nu at the CUSUM threshold solving e^nu - nu - 1 = gamma_norm
The gamma grid is either --gamma-grid or --gamma-points log-spaced values on
[--gamma-min, --gamma-max].";

const MC_COLUMNS: &str = "\
Output columns:
  regime               pre (no change ever) or post (change at time 0)
  mu, lambda, nu, y0   model, threshold and starting value of the statistic
  dt                   Euler step; occurrences are placed at exact arrival times
  n_paths, seed        number of paths and master seed (path i uses stream i)
  mean, stderr         sample mean stopping time and its standard error s/sqrt(n)
  truncated            paths cut at the truncation horizon
  analytic             closed-form mean f(y0): the run-length function solving the
                       Poisson-reset generator equation, branch y >= 0 or y < 0
  z_score              (mean - analytic)/stderr; 0 when both are degenerate
Discretization biases the mean upward by roughly 0.58 mu sqrt(dt) in the threshold;
--bridge removes most of it with a Brownian-bridge crossing test.";

const DETECT_COLUMNS: &str = "\
Input: CSV with header t,dxi,occ (or t,xi,occ with --levels); t strictly increasing,
dxi the observation increment since the previous row, occ 1 at an occurrence.
Output columns:
  alarm_time           first t at which the statistic y = u - m reached nu, empty if none;
                       u = mu xi - mu^2 t/2 and m is the minimum of u over 0 and the
                       occurrence instants (every instant for --variant cusum)
  final_y              statistic after the last consumed row
  n_records            rows consumed (input after the alarm is not read)
  n_occurrences        occurrences among them";

const FRAMEWORK_COLUMNS: &str = "\
Input: a TOML document with alphabet, pre_dist, post_dist, horizon, [rule] and
optional [[prior]] tables and extended_times (see the bundled data/*.toml).
Output columns:
  measure     J_S: mean delay given T > tau for a history-independent change time
                   with weights varpi (one row per prior);
              J_P: worst change time t of E_t[T - t | T > t];
              J_L: worst change time and worst pre-change history of E_t[(T - t)^+ | F_t];
              J_EL: as J_L with the change time restricted to extended_times
  prior       prior name for J_S rows
  value       the measure, empty when undefined
  argmax_t, argmax_history   where the worst case is attained
  cap_error   P_0(the horizon forced the stop), the truncation mass at the horizon
  note        reason a measure is undefined";

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Target mean time to false alarm (>= 0)
    #[arg(long, allow_negative_numbers = true)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    mu: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    lambda: f64,
}

#[derive(Debug, Args)]
struct CurvesArgs {
    /// Comma-separated mu^2/lambda values
    #[arg(long, value_delimiter = ',', default_value = "0.1,1,10,100")]
    ratios: Vec<f64>,
    /// Comma-separated normalized gamma values; overrides the log grid
    #[arg(long, value_delimiter = ',')]
    gamma_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.1)]
    gamma_min: f64,
    #[arg(long, default_value_t = 1e4)]
    gamma_max: f64,
    #[arg(long, default_value_t = 40)]
    gamma_points: usize,
}

#[derive(Debug, Args)]
struct McArgs {
    /// pre (no change) or post (change at time 0)
    #[arg(long, default_value = "post")]
    regime: Regime,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    mu: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    nu: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    y0: f64,
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    /// Euler step [default: min(1e-3, 0.02/mu^2)]
    #[arg(long)]
    dt: Option<f64>,
    /// Truncation horizon [default: 50 analytic means, or 1e4]
    #[arg(long)]
    max_time: Option<f64>,
    /// Test for threshold crossings between grid points
    #[arg(long)]
    bridge: bool,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Stream file, or - for standard input
    #[arg(long, default_value = "-")]
    input: String,
    #[arg(long, allow_negative_numbers = true)]
    mu: f64,
    #[arg(long, allow_negative_numbers = true)]
    nu: f64,
    #[arg(long, default_value = "ecusum")]
    variant: Variant,
    /// Second column holds levels xi_t instead of increments
    #[arg(long)]
    levels: bool,
}

#[derive(Debug, Args)]
struct FrameworkArgs {
    /// Model document (TOML)
    #[arg(long)]
    spec: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn param(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_PARAM,
            message: e.to_string(),
        }
    }
}

impl From<ParamError> for Failure {
    fn from(e: ParamError) -> Self {
        Failure::param(e)
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::TruncationExceeded { .. } => EXIT_TRUNCATION,
            _ => EXIT_PARAM,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<StreamError> for Failure {
    fn from(e: StreamError) -> Self {
        let code = match e {
            StreamError::Param(_) => EXIT_PARAM,
            _ => EXIT_STREAM,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Resolved configuration echoed ahead of every result.
struct Output {
    format: Format,
    config: Vec<(String, String)>,
    body: String,
}

impl Output {
    fn new(cli: &Cli, seed_source: &str, command: &str) -> Self {
        let mut out = Self {
            format: cli.format,
            config: Vec::new(),
            body: String::new(),
        };
        out.set("command", command);
        out.set("seed", cli.seed);
        out.set("seed_source", seed_source);
        out
    }

    fn set(&mut self, key: &str, value: impl ToString) {
        self.config.push((key.to_string(), value.to_string()));
    }

    /// One CSV table, or aligned `key: value` lines per row in text mode.
    fn table(&mut self, header: &str, rows: &[String]) {
        match self.format {
            Format::Csv => {
                writeln!(self.body, "{header}").unwrap();
                for row in rows {
                    writeln!(self.body, "{row}").unwrap();
                }
            }
            Format::Text => {
                let keys: Vec<&str> = header.split(',').collect();
                for (i, row) in rows.iter().enumerate() {
                    if i > 0 {
                        self.body.push('\n');
                    }
                    for (k, v) in keys.iter().zip(split_csv_row(row)) {
                        writeln!(self.body, "{k}: {v}").unwrap();
                    }
                }
            }
        }
    }

    fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.config {
            match self.format {
                Format::Csv => writeln!(s, "# {k}={v}").unwrap(),
                Format::Text => writeln!(s, "{k}: {v}").unwrap(),
            }
        }
        if self.format == Format::Text {
            s.push('\n');
        }
        s.push_str(&self.body);
        s
    }
}

/// Splits a row produced by this program: plain fields, except a final
/// double-quoted note that may contain commas.
fn split_csv_row(row: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut rest = row;
    loop {
        if let Some(quoted) = rest.strip_prefix('"') {
            fields.push(quoted.trim_end_matches('"').to_string());
            break;
        }
        match rest.split_once(',') {
            Some((head, tail)) => {
                fields.push(head.to_string());
                rest = tail;
            }
            None => {
                fields.push(rest.to_string());
                break;
            }
        }
    }
    fields
}

fn calibrate(args: &CalibrateArgs, out: &mut Output) -> Result<(), Failure> {
    let spec = DriftChangeSpec::new(args.mu, args.lambda)?;
    spec.require_positive_rate()?;
    out.set("gamma", args.gamma);
    out.set("mu", args.mu);
    out.set("lambda", args.lambda);
    let nu = calibrate_threshold(args.gamma, &spec)?;
    let op = ecusum_operating_point(nu, &spec)?;
    let cusum_nu = calibrate_cusum_threshold(args.gamma, args.mu)?;
    let cusum = cusum_operating_point(cusum_nu, args.mu)?;
    let row = format!(
        "{},{},{},{},{},{},{},{},{},{}",
        args.gamma,
        args.mu,
        args.lambda,
        op.nu,
        op.delay,
        op.false_alarm_period,
        op.normalized_delay,
        op.normalized_fa,
        cusum.nu,
        cusum.delay
    );
    out.table(
        "gamma,mu,lambda,nu,delay,false_alarm_period,normalized_delay,normalized_fa,cusum_nu,cusum_delay",
        &[row],
    );
    Ok(())
}

fn curves(args: &CurvesArgs, out: &mut Output) -> Result<(), Failure> {
    let grid = match &args.gamma_grid {
        Some(g) => g.clone(),
        None => {
            if !(args.gamma_min > 0.0 && args.gamma_max >= args.gamma_min) {
                return Err(Failure::param("log grid needs 0 < gamma-min <= gamma-max"));
            }
            log_grid(args.gamma_min, args.gamma_max, args.gamma_points)
        }
    };
    out.set("ratios", join(&args.ratios));
    out.set("gamma_grid", join(&grid));
    let rows = curve_table(&args.ratios, &grid)?;
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{}",
                r.ratio, r.gamma_norm, r.ecusum_delay_norm, r.cusum_delay_norm
            )
        })
        .collect();
    out.table(CURVE_CSV_HEADER, &lines);
    Ok(())
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn mc(args: &McArgs, seed: u64, out: &mut Output) -> Result<(), Failure> {
    let spec = DriftChangeSpec::new(args.mu, args.lambda)?;
    let nu = Threshold::new(args.nu)?;
    let mut cfg = SimConfig::for_model(&spec, args.regime, nu, args.y0, args.paths, seed).with_bridge(args.bridge);
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    if let Some(max_time) = args.max_time {
        cfg = cfg.with_max_time(max_time);
    }
    out.set("regime", args.regime);
    out.set("mu", args.mu);
    out.set("lambda", args.lambda);
    out.set("nu", args.nu);
    out.set("y0", args.y0);
    out.set("paths", args.paths);
    out.set("dt", cfg.dt);
    out.set("default_dt", default_dt(args.mu));
    out.set("max_time", cfg.max_time);
    out.set("max_truncated_fraction", cfg.max_truncated_fraction);
    out.set("bridge", args.bridge);

    let estimate = monte_carlo_run_length(args.regime, &spec, nu, args.y0, &cfg)?;
    let report = SimulationReport {
        regime: args.regime,
        mu: args.mu,
        lambda: args.lambda,
        nu: args.nu,
        y0: args.y0,
        seed,
        estimate,
    };
    let analytic = analytic_mean(&spec, args.regime, nu, args.y0);
    let (analytic_col, z_col) = match analytic {
        Some(a) => {
            let diff = estimate.mean - a;
            let z = if estimate.stderr > 0.0 {
                diff / estimate.stderr
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(diff)
            };
            (a.to_string(), z.to_string())
        }
        None => (String::new(), String::new()),
    };
    out.table(
        &format!("{SIM_CSV_HEADER},analytic,z_score"),
        &[format!("{},{analytic_col},{z_col}", report.to_csv_row())],
    );
    Ok(())
}

fn detect(args: &DetectArgs, out: &mut Output) -> Result<(), Failure> {
    let nu = Threshold::new(args.nu)?;
    out.set("input", &args.input);
    out.set("mu", args.mu);
    out.set("nu", args.nu);
    out.set("variant", args.variant.as_str());
    out.set("levels", args.levels);
    let form = if args.levels {
        InputForm::Levels
    } else {
        InputForm::Increments
    };
    let reader: Box<dyn Read> = if args.input == "-" {
        Box::new(io::stdin().lock())
    } else {
        let file = fs::File::open(&args.input)
            .map_err(|e| Failure::param(format!("cannot open input '{}': {e}", args.input)))?;
        Box::new(io::BufReader::new(file))
    };
    let report = run_detector_csv(reader, args.mu, nu, args.variant, form)?;
    out.table(ALARM_CSV_HEADER, &[report.to_csv_row()]);
    Ok(())
}

fn framework(args: &FrameworkArgs, out: &mut Output) -> Result<(), Failure> {
    out.set("spec", args.spec.display());
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| Failure::param(format!("cannot read document '{}': {e}", args.spec.display())))?;
    let report = evaluate_document(&text).map_err(Failure::param)?;
    out.set("cap_error", report.cap_error);
    let csv = report.to_csv();
    let rows: Vec<String> = csv.lines().skip(1).map(str::to_string).collect();
    out.table(REPORT_CSV_HEADER, &rows);
    for row in report.rows.iter().filter(|r| r.outcome.is_err()) {
        if let Err(e) = &row.outcome {
            eprintln!("warning: {} {}: {e}", row.measure, row.prior);
        }
    }
    Ok(())
}

fn run(cli: &Cli, seed_source: &str) -> Result<String, Failure> {
    let mut out;
    match &cli.command {
        Command::Calibrate(a) => {
            out = Output::new(cli, seed_source, "calibrate");
            calibrate(a, &mut out)?;
        }
        Command::Curves(a) => {
            out = Output::new(cli, seed_source, "curves");
            curves(a, &mut out)?;
        }
        Command::Mc(a) => {
            out = Output::new(cli, seed_source, "mc");
            mc(a, cli.seed, &mut out)?;
        }
        Command::Detect(a) => {
            out = Output::new(cli, seed_source, "detect");
            detect(a, &mut out)?;
        }
        Command::Framework(a) => {
            out = Output::new(cli, seed_source, "framework");
            framework(a, &mut out)?;
        }
    }
    Ok(out.render())
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let seed_source = match matches.value_source("seed") {
        Some(ValueSource::CommandLine) => "flag",
        Some(ValueSource::EnvVariable) => "env:ECUSUM_SEED",
        _ => "default",
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(&cli, seed_source) {
        Ok(text) => {
            let written = match &cli.out {
                Some(path) => fs::write(path, text),
                None => io::stdout().lock().write_all(text.as_bytes()),
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: cannot write output: {e}");
                    ExitCode::from(EXIT_PARAM)
                }
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
