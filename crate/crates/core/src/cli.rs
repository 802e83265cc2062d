//! Command-line front end: `fit`, `infer`, `plot` and `simulate`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::{Alignment, Side};
use crate::inference::{Covariance, InferenceOptions, Method};
use crate::io::{read_csv, read_results, write_coverage, write_results, CsvOptions};
use crate::pca::preprocess;
use crate::pipeline::{infer, InferRequest};
use crate::simulation::{
    run_coverage_experiment, signal_from_dataset, CoverageTable, NoiseLevel, SignalSpec,
    SimulationConfig, TruthMap,
};
use crate::svg::{render_svg, SvgOptions};

/// Worker count used when `--threads` is absent.
pub const THREADS_ENV: &str = "FEPCA_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "fepca",
    version,
    about = "Fixed-effects PCA with confidence ellipsoids"
)]
struct Cli {
    /// Worker threads for all parallel sections (default: FEPCA_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Input {
    /// CSV file: header row, first column holds row labels.
    input: PathBuf,
    /// Field delimiter; detected among comma, semicolon and tab when omitted.
    #[arg(long)]
    delimiter: Option<char>,
    /// Scale columns to unit variance before fitting.
    #[arg(long)]
    scale: bool,
    #[arg(long)]
    rank: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the rank-S model and print its summary.
    Fit(Input),
    /// Fit, draw pseudo-realizations and write confidence ellipses.
    Infer(InferArgs),
    /// Render a factor map from written results.
    Plot(PlotArgs),
    /// Run a coverage experiment described by a TOML file.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
struct InferArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Bootstrap replicates.
    #[arg(long = "B", default_value_t = 500)]
    bootstrap: usize,
    /// Asymptotic draws.
    #[arg(long = "K", default_value_t = 500)]
    draws: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// 1-based dimension pair, e.g. `1,2`; repeatable.
    #[arg(long = "dims", value_parser = parse_dims)]
    dims: Vec<[usize; 2]>,
    /// Also build ellipses for the columns.
    #[arg(long)]
    columns: bool,
    #[arg(long, value_enum, default_value_t = AlignArg::None)]
    align: AlignArg,
    /// Use only the diagonal of the projector for asymptotic draws.
    #[arg(long)]
    diagonal: bool,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Results directory or results.json.
    results: PathBuf,
    #[arg(long = "dims", value_parser = parse_dims, default_value = "1,2")]
    dims: [usize; 2],
    #[arg(long)]
    columns: bool,
    #[arg(long, default_value_t = 640.0)]
    width: f64,
    #[arg(long, default_value_t = 640.0)]
    height: f64,
    #[arg(long)]
    no_labels: bool,
    /// Output SVG; defaults to `map_<d1>_<d2>.svg` next to the results.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "coverage")]
    out: PathBuf,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of methods.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum AlignArg {
    None,
    Procrustes,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

fn parse_dims(s: &str) -> std::result::Result<[usize; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => Ok([
            a.parse().map_err(|_| format!("bad dimension `{a}`"))?,
            b.parse().map_err(|_| format!("bad dimension `{b}`"))?,
        ]),
        _ => Err(format!("expected two dimensions like `1,2`, got `{s}`")),
    }
}

/// Simulation file. Relative paths resolve against the file's directory.
#[derive(Deserialize, Debug, Default, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulationFile {
    /// CSV whose rank-`rank` fit is the true signal.
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub scale: bool,
    pub delimiter: Option<char>,
    /// Generated two-component signal, used when `data` is absent.
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub ratio: Option<f64>,
    pub rank: usize,
    pub sigma: Option<Vec<f64>>,
    pub snr: Option<Vec<f64>>,
    pub replicates: Option<usize>,
    pub methods: Option<Vec<Method>>,
    pub level: Option<f64>,
    pub seed: Option<u64>,
    pub asymptotic_draws: Option<usize>,
    pub bootstrap_draws: Option<usize>,
    pub covariance: Option<Covariance>,
    pub alignment: Option<Alignment>,
    pub truth: Option<TruthMap>,
}

impl SimulationFile {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SimulationFile = toml::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((file, base))
    }

    pub fn into_config(self, base: &Path) -> Result<SimulationConfig> {
        let signal = match (&self.data, self.n, self.p) {
            (Some(data), None, None) => {
                let opts = CsvOptions {
                    delimiter: self.delimiter.map(|c| c as u8),
                    ..CsvOptions::default()
                };
                let ds = read_csv(base.join(data), &opts)?;
                let (x, _) = preprocess(&ds, self.scale)?;
                SignalSpec::Fixed(signal_from_dataset(&x, self.rank)?)
            }
            (None, Some(n), Some(p)) => SignalSpec::Generated {
                n,
                p,
                ratio: self.ratio.unwrap_or(1.0),
            },
            _ => {
                return Err(Error::InvalidInput(
                    "give either `data` or both `n` and `p`".into(),
                ))
            }
        };
        let noise: Vec<NoiseLevel> = match (self.sigma, self.snr) {
            (Some(s), None) => s.into_iter().map(NoiseLevel::Sigma).collect(),
            (None, Some(s)) => s.into_iter().map(NoiseLevel::Snr).collect(),
            _ => {
                return Err(Error::InvalidInput(
                    "give exactly one of `sigma` or `snr`".into(),
                ))
            }
        };
        let generated = matches!(signal, SignalSpec::Generated { .. });
        let defaults = InferenceOptions::default();
        Ok(SimulationConfig {
            signal,
            rank: self.rank,
            noise,
            replicates: self.replicates.unwrap_or(if generated { 50 } else { 200 }),
            methods: self.methods.unwrap_or_else(|| Method::ALL.to_vec()),
            level: self.level.unwrap_or(0.95),
            seed: self.seed.unwrap_or(0),
            inference: InferenceOptions {
                asymptotic_draws: self.asymptotic_draws.unwrap_or(defaults.asymptotic_draws),
                bootstrap_draws: self.bootstrap_draws.unwrap_or(defaults.bootstrap_draws),
                covariance: self.covariance.unwrap_or_default(),
                ..defaults
            },
            alignment: self.alignment.unwrap_or_default(),
            truth: self.truth.unwrap_or_default(),
        })
    }
}

fn read_input(input: &Input) -> Result<crate::pca::Dataset> {
    let opts = CsvOptions {
        delimiter: input.delimiter.map(|c| c as u8),
        ..CsvOptions::default()
    };
    read_csv(&input.input, &opts)
}

fn run_fit(args: &Input, out: &mut dyn Write) -> Result<()> {
    let data = read_input(args)?;
    let mut req = InferRequest::new(args.rank);
    req.scale = args.scale;
    let b = infer(&data, &req)?;
    let s = &b.summary;
    let w = |e: std::io::Error| Error::io("<stdout>", e);
    writeln!(
        out,
        "{} rows x {} columns, rank {}{}",
        s.rows.len(),
        s.columns.len(),
        s.rank,
        if s.scaled { ", scaled" } else { "" }
    )
    .map_err(w)?;
    writeln!(out, "dim  eigenvalue  percent").map_err(w)?;
    for k in 0..s.rank {
        writeln!(
            out,
            "{:>3}  {:>10.6}  {:>7.3}",
            k + 1,
            s.eigenvalues[k],
            s.explained_percent[k]
        )
        .map_err(w)?;
    }
    writeln!(out, "sigma2 {:.6} (df {})", s.sigma2, s.df).map_err(w)?;
    match (s.curvature, s.sigma_curvature) {
        (Some(k), Some(sk)) => writeln!(out, "K_int {k:.6}  sigma*K_int {sk:.6}").map_err(w)?,
        _ => writeln!(out, "K_int undefined").map_err(w)?,
    }
    for warning in &s.warnings {
        writeln!(out, "warning: {warning}").map_err(w)?;
    }
    Ok(())
}

fn run_infer(args: &InferArgs, out: &mut dyn Write) -> Result<()> {
    let data = read_input(&args.input)?;
    let mut req = InferRequest::new(args.input.rank);
    req.scale = args.input.scale;
    req.method = Some(args.method);
    req.options.bootstrap_draws = args.bootstrap;
    req.options.asymptotic_draws = args.draws;
    if args.diagonal {
        req.options.covariance = Covariance::DiagonalOnly;
    }
    req.level = args.level;
    req.seed = args.seed;
    if !args.dims.is_empty() {
        req.dims = args.dims.clone();
    }
    req.columns = args.columns;
    req.alignment = match args.align {
        AlignArg::None => Alignment::None,
        AlignArg::Procrustes => Alignment::Procrustes,
    };
    let bundle = infer(&data, &req)?;
    write_results(&bundle, &args.out)?;
    let w = |e: std::io::Error| Error::io("<stdout>", e);
    writeln!(
        out,
        "{} ellipses from {} {} replicates written to {}",
        bundle.ellipses.len(),
        bundle.inference.as_ref().map_or(0, |i| i.replicates),
        args.method,
        args.out.display()
    )
    .map_err(w)?;
    for warning in &bundle.summary.warnings {
        writeln!(out, "warning: {warning}").map_err(w)?;
    }
    Ok(())
}

fn run_plot(args: &PlotArgs, out: &mut dyn Write) -> Result<()> {
    let bundle = read_results(&args.results)?;
    let opts = SvgOptions {
        width: args.width,
        height: args.height,
        labels: !args.no_labels,
        side: if args.columns {
            Side::Columns
        } else {
            Side::Rows
        },
    };
    let svg = render_svg(&bundle, args.dims, &opts)?;
    let target = match &args.out {
        Some(p) => p.clone(),
        None => {
            let dir = if args.results.is_dir() {
                args.results.clone()
            } else {
                args.results
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_default()
            };
            let side = if args.columns { "columns_" } else { "" };
            dir.join(format!("map_{side}{}_{}.svg", args.dims[0], args.dims[1]))
        }
    };
    std::fs::write(&target, svg).map_err(|e| Error::io(&target, e))?;
    writeln!(out, "{}", target.display()).map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}

fn print_coverage(table: &CoverageTable, out: &mut dyn Write) -> std::io::Result<()> {
    write!(out, "{:<14}", "condition")?;
    for m in &table.methods {
        write!(out, " {:>16}", m.name())?;
    }
    writeln!(out)?;
    for c in &table.conditions {
        write!(out, "{c:<14}")?;
        for m in &table.methods {
            match table.get(c, *m) {
                Some(cell) => write!(out, " {:>9.3} ±{:.3}", cell.coverage, cell.std_error)?,
                None => write!(out, " {:>16}", "-")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

fn run_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let (mut file, base) = SimulationFile::load(&args.config)?;
    if let Some(r) = args.replicates {
        file.replicates = Some(r);
    }
    if let Some(s) = args.seed {
        file.seed = Some(s);
    }
    if let Some(m) = &args.methods {
        file.methods = Some(m.clone());
    }
    let cfg = file.into_config(&base)?;
    let table = run_coverage_experiment(&cfg)?;
    write_coverage(&table, &args.out)?;
    print_coverage(&table, out).map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}

fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
}

/// Runs the CLI with `argv` (including the program name), writing normal
/// output to `out` and diagnostics to stderr. Returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let threads = cli.threads.or_else(threads_from_env).filter(|&t| t > 0);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    let (result, text) = pool.install(|| {
        let mut buf = Vec::new();
        let r = match &cli.command {
            Command::Fit(a) => run_fit(a, &mut buf),
            Command::Infer(a) => run_infer(a, &mut buf),
            Command::Plot(a) => run_plot(a, &mut buf),
            Command::Simulate(a) => run_simulate(a, &mut buf),
        };
        (r, buf)
    });
    let _ = out.write_all(&text);
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

pub fn cli_main() -> i32 {
    run(std::env::args_os(), &mut std::io::stdout().lock())
}
