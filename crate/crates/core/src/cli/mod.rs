//! Command-line workflows: constants, asymptotic evaluation, simulation,
//! comparison tables and the inverse-quadratic fit.
//!
//! Each subcommand is a plain function returning a serializable report so it
//! can be driven from tests; [`run`] adds argument parsing, output and exit
//! codes (0 success, 1 I/O failure, 2 validation error, 3 invalid results).

pub mod config;
pub mod output;

use std::f64::consts::PI;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    evaluation_point, expansion_terms, AsymptoticParams, CenterConvention, ExpansionTerms, M_UNIT_DISK,
};
use crate::error::{Error, Result};
use crate::fit::{fit_inverse_quadratic, FitResult};
use crate::geometry::Point;
use crate::montecarlo::{simulate_mfpt, sweep, FirstPassageResult, ResultStatus, RowStatus, SweepAxis, WalkConfig};
use crate::quadrature::{
    constant_m, disk_integral_closed_form, disk_integral_quadrature, single_layer_bound, QuadratureGrid, DEFAULT_LEVEL,
};

use config::{parse_point, parse_start, OutputFormat, RunConfig};
use output::{Provenance, TableOutput};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INVALID_RESULT: i32 = 3;

/// Panels per direction for the independent double-integral check.
const DISK_INTEGRAL_PANELS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub max_sample: f64,
    pub center_sample: f64,
    pub bound: f64,
    pub samples: usize,
    pub holds: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub refinement_level: u32,
    #[serde(rename = "M_quadrature")]
    pub m_quadrature: f64,
    #[serde(rename = "M_exact")]
    pub m_exact: f64,
    #[serde(rename = "M_abs_error")]
    pub m_abs_error: f64,
    #[serde(rename = "appendix_b_total")]
    pub disk_integral: f64,
    #[serde(rename = "appendix_b_exact")]
    pub disk_integral_exact: f64,
    #[serde(rename = "appendix_b_total_abs_error")]
    pub disk_integral_abs_error: f64,
    #[serde(rename = "appendix_b_quadrature")]
    pub disk_quadrature: f64,
    #[serde(rename = "appendix_b_quadrature_abs_error")]
    pub disk_quadrature_abs_error: f64,
    #[serde(rename = "appendix_a_max_bound_check")]
    pub bound_check: BoundCheck,
}

pub fn cmd_constants(level: u32, samples: usize) -> Result<ConstantsReport> {
    let grid = QuadratureGrid::new(level)?;
    let m = constant_m(&grid);
    let exact = 16.0 * PI / 3.0;
    let closed = disk_integral_closed_form();
    let quad = disk_integral_quadrature(DISK_INTEGRAL_PANELS).total();
    let bound = single_layer_bound(&grid, samples)?;
    Ok(ConstantsReport {
        refinement_level: level,
        m_quadrature: m,
        m_exact: M_UNIT_DISK,
        m_abs_error: (m - M_UNIT_DISK).abs(),
        disk_integral: closed,
        disk_integral_exact: exact,
        disk_integral_abs_error: (closed - exact).abs(),
        disk_quadrature: quad,
        disk_quadrature_abs_error: (quad - exact).abs(),
        bound_check: BoundCheck {
            max_sample: bound.max_value,
            center_sample: bound.center_value,
            bound: bound.bound,
            samples,
            holds: bound.holds(),
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub params: AsymptoticParams,
    pub point: Point,
    pub distance_to_junction: f64,
    pub terms: ExpansionTerms,
    pub u_eps: f64,
}

pub fn cmd_asymptotic(cfg: &RunConfig, at: Option<Point>, convention: CenterConvention) -> Result<AsymptoticReport> {
    let domain = cfg.template().build()?;
    let params = AsymptoticParams::for_domain(&domain)?;
    let point = at.unwrap_or_else(|| evaluation_point(&domain, convention));
    let terms = expansion_terms(&params, &point)?;
    Ok(AsymptoticReport {
        params,
        point,
        distance_to_junction: (point - params.x_star).norm(),
        terms,
        u_eps: terms.total(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub walk: WalkConfig,
    pub start: Point,
    pub result: FirstPassageResult,
    pub u_asym: Option<f64>,
    pub rel_err: Option<f64>,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulationReport> {
    let domain = cfg.template().build()?;
    let start = cfg.start.resolve(&domain);
    let walk = cfg.walk.resolve(cfg.eps);
    let result = simulate_mfpt(&domain, &start, &walk)?;
    // The expansion is only defined away from the junction.
    let u_asym = AsymptoticParams::for_domain(&domain).and_then(|p| crate::asymptotics::eval_u_eps(&p, &start)).ok();
    Ok(SimulationReport { walk, start, result, u_asym, rel_err: u_asym.map(|u| (u - result.mean) / result.mean) })
}

/// Parses `eps=0.1:0.01:-0.01`, `L=1:10:1` or `eps=0.1,0.08,0.05`.
/// Ranges are `start:stop:step` with `stop` included.
pub fn parse_vary(spec: &str) -> Result<SweepAxis> {
    let (name, list) =
        spec.split_once('=').ok_or_else(|| Error::Config(format!("expected eps=… or L=…, got `{spec}`")))?;
    let list = list.trim();
    if list.is_empty() {
        return Err(Error::Config("empty parameter list".into()));
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Config(format!("cannot parse `{s}` in `{spec}`")));
    let values: Vec<f64> = if list.contains(':') {
        let parts: Vec<&str> = list.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(Error::Config(format!("range must be start:stop:step, got `{list}`")));
        };
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if step == 0.0 || (stop - start) * step < 0.0 {
            return Err(Error::Config(format!("step {step} does not lead from {start} to {stop}")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        // Round to 12 significant digits.
        (0..count)
            .map(|k| {
                let v = start + k as f64 * step;
                format!("{v:.12e}").parse::<f64>().unwrap_or(v)
            })
            .collect()
    } else {
        list.split(',').map(num).collect::<Result<_>>()?
    };
    match name.trim() {
        "eps" => Ok(SweepAxis::Eps(values)),
        "L" | "neck_length" => Ok(SweepAxis::NeckLength(values)),
        other => Err(Error::Config(format!("cannot vary `{other}`; use eps or L"))),
    }
}

pub fn cmd_table(cfg: &RunConfig, vary: &str, simulate: bool) -> Result<TableOutput> {
    let axis = parse_vary(vary)?;
    let walk = cfg.walk;
    let plan = move |d: &crate::geometry::SpineDomain| simulate.then(|| walk.resolve(d.eps));
    let rows = sweep(&cfg.template(), &axis, cfg.start, &plan)?;
    let opt = |v: Option<f64>| v.map_or_else(|| "auto".to_string(), |v| v.to_string());
    Ok(TableOutput {
        provenance: Provenance {
            version: output::version_string(),
            config_hash: cfg.hash(),
            vary: vary.to_string(),
            seed: walk.seed,
            dt: opt(walk.dt),
            dt_max: opt(walk.dt_max),
            particles: walk.particles,
            workers: walk.workers,
            simulated: simulate,
            config: cfg.to_text(),
        },
        rows,
    })
}

pub fn cmd_fit(path: &Path, column: &str) -> Result<FitResult> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::Io { path: name.clone(), message: e.to_string() })?;
    let rows = output::read_fit_rows(BufReader::new(file), &name, column)?;
    fit_inverse_quadratic(&rows)
}

#[derive(Parser, Debug)]
#[command(name = "spine-escape", version, about = "Mean first passage times in a dendritic spine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Quadrature of M, the disk double integral and the single-layer bound.
    Constants {
        #[arg(long, default_value_t = DEFAULT_LEVEL)]
        level: u32,
        #[arg(long, default_value_t = 400)]
        samples: usize,
    },
    /// Evaluate the asymptotic expansion.
    Asymptotic {
        #[command(flatten)]
        geometry: GeometryArgs,
        /// Evaluation point x,y,z (default: head center).
        #[arg(long, allow_hyphen_values = true)]
        at: Option<String>,
        #[arg(long, value_enum, default_value_t = ConventionArg::HeadCenter)]
        convention: ConventionArg,
    },
    /// Monte Carlo estimate of the mean first passage time.
    Simulate {
        #[command(flatten)]
        geometry: GeometryArgs,
        #[command(flatten)]
        walk: WalkArgs,
    },
    /// Sweep eps or L and tabulate simulation against the expansion.
    Table {
        #[command(flatten)]
        geometry: GeometryArgs,
        #[command(flatten)]
        walk: WalkArgs,
        /// `eps=start:stop:step`, `L=start:stop:step` or a comma list.
        #[arg(long)]
        vary: String,
        /// Only evaluate the expansion.
        #[arg(long)]
        skip_mc: bool,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit u ≈ a2/ε² + a1/ε + a0 to a table.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Column holding u.
        #[arg(long, default_value = "u_mc")]
        column: String,
    },
}

#[derive(Args, Debug, Default)]
pub struct GeometryArgs {
    /// Config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub neck_length: Option<f64>,
    /// Ball head radius.
    #[arg(long)]
    pub radius: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct WalkArgs {
    #[arg(long)]
    pub particles: Option<u64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub dt_max: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// `head-center` or x,y,z.
    #[arg(long, allow_hyphen_values = true)]
    pub start: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ConventionArg {
    HeadCenter,
    UnitDistance,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

fn load_config(geometry: &GeometryArgs, walk: Option<&WalkArgs>) -> Result<RunConfig> {
    let mut cfg = match &geometry.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = geometry.eps {
        cfg.eps = v;
    }
    if let Some(v) = geometry.neck_length {
        cfg.neck_len = v;
    }
    if let Some(r) = geometry.radius {
        cfg.head = crate::geometry::HeadKind::Ball { radius: r };
    }
    if let Some(w) = walk {
        let s = &mut cfg.walk;
        s.particles = w.particles.unwrap_or(s.particles);
        s.dt = w.dt.or(s.dt);
        s.dt_max = w.dt_max.or(s.dt_max);
        s.seed = w.seed.unwrap_or(s.seed);
        s.workers = w.workers.unwrap_or(s.workers);
        s.max_steps = w.max_steps.unwrap_or(s.max_steps);
        if let Some(start) = &w.start {
            cfg.start = parse_start(start)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| Error::Io { path: "<stdout>".into(), message: e.to_string() })
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Constants { level, samples } => {
            print_json(out, &cmd_constants(level, samples)?)?;
            Ok(EXIT_OK)
        }
        Command::Asymptotic { geometry, at, convention } => {
            let cfg = load_config(&geometry, None)?;
            let at = at.as_deref().map(parse_point).transpose()?;
            let convention = match convention {
                ConventionArg::HeadCenter => CenterConvention::HeadCenter,
                ConventionArg::UnitDistance => CenterConvention::UnitDistance,
            };
            print_json(out, &cmd_asymptotic(&cfg, at, convention)?)?;
            Ok(EXIT_OK)
        }
        Command::Simulate { geometry, walk } => {
            let cfg = load_config(&geometry, Some(&walk))?;
            let report = cmd_simulate(&cfg)?;
            print_json(out, &report)?;
            Ok(if report.result.status == ResultStatus::Invalid { EXIT_INVALID_RESULT } else { EXIT_OK })
        }
        Command::Table { geometry, walk, vary, skip_mc, format, output: path } => {
            let mut cfg = load_config(&geometry, Some(&walk))?;
            if let Some(f) = format {
                cfg.output_format = match f {
                    FormatArg::Csv => OutputFormat::Csv,
                    FormatArg::Json => OutputFormat::Json,
                };
            }
            if path.is_some() {
                cfg.output_path = path;
            }
            // Validate the axis before anything is written.
            parse_vary(&vary)?;
            let table = cmd_table(&cfg, &vary, !skip_mc)?;
            match &cfg.output_path {
                Some(p) => {
                    let name = p.display().to_string();
                    let file = File::create(p).map_err(|e| Error::Io { path: name.clone(), message: e.to_string() })?;
                    let mut w = BufWriter::new(file);
                    write_table(&table, cfg.output_format, &mut w, &name)?;
                    w.flush().map_err(|e| Error::Io { path: name, message: e.to_string() })?;
                }
                None => write_table(&table, cfg.output_format, out, "<stdout>")?,
            }
            let invalid = table.rows.iter().any(|r| r.status == RowStatus::Invalid);
            Ok(if invalid { EXIT_INVALID_RESULT } else { EXIT_OK })
        }
        Command::Fit { input, column } => {
            print_json(out, &cmd_fit(&input, &column)?)?;
            Ok(EXIT_OK)
        }
    }
}

fn write_table(table: &TableOutput, format: OutputFormat, out: &mut dyn Write, name: &str) -> Result<()> {
    match format {
        OutputFormat::Csv => output::write_csv(table, out, name),
        OutputFormat::Json => output::write_json(table, out, name),
    }
}

/// Parses `args` (including the program name), runs the command writing
/// results to `out`, and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}
