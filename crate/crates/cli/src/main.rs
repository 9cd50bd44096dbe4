mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hdtest::bootstrap::{bootstrap_null, BootstrapMethod, BootstrapSpec};
use hdtest::pipeline::{load_dataset, test_groups, write_report, PipelineMethod, PipelineOptions};
use hdtest::precision::{fit_banded_cholesky, select_band_width_two_sample, DEFAULT_SPLITS};
use hdtest::sim::{self, float_range, preset, run_power, run_size, Format, Preset, SimulationConfig};
use hdtest::stats::{
    bs_test, component_stats, cq_test, detection_boundary, multi_threshold_statistic, DetectionPoint, Standardization,
    Variant, DEFAULT_ETA, DEFAULT_VARIANCE_BAND,
};
use hdtest::transform::{
    calibrate_multi, clx_statistics, clx_test, default_theta, transformed_multi_threshold, CriticalSource,
    TransformedMeans, DEFAULT_ETA_STAR,
};
use hdtest::{Execution, Method, TestOutcome, TwoSampleData};
use ndarray::Array2;

const THREADS_ENV: &str = "HDTEST_THREADS";

/// Two-sample tests for high-dimensional means: simulations, single tests,
/// grouped testing with FDR control and detection boundaries.
#[derive(Parser, Debug)]
#[command(name = "hdtest", version)]
struct Cli {
    /// Worker threads (0 = available parallelism)
    #[arg(long, global = true, env = THREADS_ENV, default_value_t = 0)]
    threads: usize,

    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Empirical size of the tests under the null
    SimulateSize(SimArgs),
    /// Size-adjusted power over a (beta, r) grid
    SimulatePower(PowerArgs),
    /// Run one test on two CSV matrices (rows = observations)
    Test(TestArgs),
    /// Grouped testing with Benjamini-Hochberg FDR control
    Geneset(GenesetArgs),
    /// Tabulate the detection boundaries over a beta grid
    Boundary(BoundaryArgs),
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Named preset (table1-desk, table1-full, fig1-desk)
    #[arg(long)]
    preset: Option<String>,
    /// Config file: a JSON object or key = value lines
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable), e.g. --set p=400
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Base seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (default: standard output)
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,
}

#[derive(Args, Debug)]
struct PowerArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Sparsity values, comma-separated (replaces the preset grid)
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,
    /// Signal strengths as lo:hi:step or a comma-separated list
    #[arg(long)]
    r: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TestMethod {
    Cq,
    Bs,
    #[value(name = "multithresh", alias = "mult1")]
    MultiThresh,
    #[value(name = "transformedmulti", alias = "mult2")]
    TransformedMulti,
    #[value(name = "clx-i", alias = "clx1")]
    ClxIdentity,
    #[value(name = "clx-omega", alias = "clx2")]
    ClxOmega,
}

#[derive(Args, Debug)]
struct TestArgs {
    /// Test to run
    #[arg(long, value_enum)]
    method: TestMethod,
    /// First sample, CSV (optional header row)
    #[arg(long)]
    x1: PathBuf,
    /// Second sample, CSV (optional header row)
    #[arg(long)]
    x2: PathBuf,
    /// Significance level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Calibrate multi-level tests by a parametric bootstrap with B copies
    #[arg(long, value_name = "B")]
    bootstrap: Option<usize>,
    /// Treat coordinate variances as 1 instead of estimating them
    #[arg(long)]
    unit_variance: bool,
    /// Transformed test window starts at 1 - theta (default log n / log p)
    #[arg(long)]
    theta: Option<f64>,
    /// Seed for band selection and the bootstrap
    #[arg(long, default_value_t = 20140101)]
    seed: u64,
    /// Output format
    #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,
}

#[derive(Args, Debug)]
struct GenesetArgs {
    /// Expression CSV: subject column then one column per feature
    #[arg(long)]
    expression: PathBuf,
    /// Labels CSV: subject,sample with sample in {1, 2}
    #[arg(long)]
    labels: PathBuf,
    /// Groups CSV: group,features with comma-separated feature names
    #[arg(long)]
    groups: PathBuf,
    /// Positions CSV: feature,position (orders features within groups)
    #[arg(long)]
    positions: Option<PathBuf>,
    /// Test run on every group
    #[arg(long, value_enum, default_value_t = GroupMethod::Transformedmulti)]
    method: GroupMethod,
    /// FDR level for the Benjamini-Hochberg step-up
    #[arg(long, default_value_t = 0.05)]
    fdr: f64,
    /// Bootstrap copies for the multi-level tests
    #[arg(long, default_value_t = hdtest::bootstrap::DEFAULT_B)]
    bootstrap: usize,
    /// Use the Gumbel limit instead of the bootstrap
    #[arg(long)]
    gumbel: bool,
    /// Skip per-feature variance standardization
    #[arg(long)]
    no_standardize: bool,
    /// Groups with fewer features are skipped
    #[arg(long, default_value_t = hdtest::pipeline::DEFAULT_MIN_GROUP_SIZE)]
    min_group_size: usize,
    /// Seed for band selection and the bootstrap
    #[arg(long, default_value_t = 20140101)]
    seed: u64,
    /// Output file (default: standard output)
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GroupMethod {
    Cq,
    Multithresh,
    Transformedmulti,
}

#[derive(Args, Debug)]
struct BoundaryArgs {
    /// Beta grid lo:hi:step, within [0.5, 1)
    #[arg(long, default_value = "0.5:0.95:0.05")]
    beta: String,
    /// Adds a rho_theta column
    #[arg(long)]
    theta: Option<f64>,
    /// Output file (default: standard output)
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

/// Bad flags or config values; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    UsageError(e.to_string()).into()
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let exec = Execution::Parallel;
    match cli.command {
        Command::SimulateSize(a) => simulate_size(&a, exec),
        Command::SimulatePower(a) => simulate_power(&a, exec),
        Command::Test(a) => single_test(&a),
        Command::Geneset(a) => geneset(&a, exec),
        Command::Boundary(a) => boundary(&a),
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn overrides(a: &SimArgs) -> Result<Vec<(String, String)>> {
    let mut kv = match &a.config {
        Some(p) => config::read_config_file(p)?,
        None => Vec::new(),
    };
    for s in &a.overrides {
        kv.push(config::split_kv(s)?);
    }
    if let Some(seed) = a.seed {
        kv.push(("seed".into(), seed.to_string()));
    }
    Ok(kv)
}

fn write_cells(a: &SimArgs, results: &[sim::CellResult]) -> Result<()> {
    let mut w = open_output(a.output.as_deref())?;
    sim::write_results(results, &mut w, a.format.into())?;
    w.flush()?;
    Ok(())
}

fn simulate_size(a: &SimArgs, exec: Execution) -> Result<()> {
    let cells = match a.preset.as_deref().map(preset).transpose().map_err(usage)? {
        Some(Preset::Size(c)) => c,
        Some(Preset::Power { .. }) => return Err(usage(format!("preset '{}' is a power preset", a.preset.as_deref().unwrap_or("")))),
        None => vec![SimulationConfig::default()],
    };
    let kv = overrides(a)?;
    let mut results = Vec::with_capacity(cells.len());
    for c in &cells {
        let cfg = config::apply_overrides(c, &kv)?;
        results.push(run_size(&cfg, exec)?);
    }
    write_cells(a, &results)
}

fn parse_list_or_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.len() {
        3 => {
            let v = parts
                .iter()
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| anyhow!("bad range '{s}'"))?;
            Ok(float_range(v[0], v[1], v[2])?)
        }
        1 => s
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| anyhow!("bad number '{x}'")))
            .collect(),
        _ => bail!("expected lo:hi:step or a comma-separated list, got '{s}'"),
    }
}

fn simulate_power(a: &PowerArgs, exec: Execution) -> Result<()> {
    let (base, preset_grid) = match a.sim.preset.as_deref().map(preset).transpose().map_err(usage)? {
        Some(Preset::Power { base, grid }) => (base, grid),
        Some(Preset::Size(_)) => return Err(usage(format!("preset '{}' is a size preset", a.sim.preset.as_deref().unwrap_or("")))),
        None => (SimulationConfig::default(), Vec::new()),
    };
    let base = config::apply_overrides(&base, &overrides(&a.sim)?)?;
    let grid = if a.beta.is_empty() && a.r.is_none() {
        if preset_grid.is_empty() {
            return Err(usage("no grid: give --beta and --r or a power preset"));
        }
        preset_grid
    } else {
        let betas = if a.beta.is_empty() { vec![base.beta] } else { a.beta.clone() };
        let rs = match &a.r {
            Some(s) => parse_list_or_range(s).map_err(usage)?,
            None => return Err(usage("--r is required with --beta")),
        };
        betas.iter().flat_map(|&b| rs.iter().map(move |&r| (b, r))).collect()
    };
    let results = run_power(&base, &grid, exec)?;
    write_cells(&a.sim, &results)
}

fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => continue,
            Err(_) => bail!("{}: row {}: non-numeric value", path.display(), i + 1),
        }
    }
    let p = rows.first().map(Vec::len).ok_or_else(|| anyhow!("{}: no data rows", path.display()))?;
    if let Some(i) = rows.iter().position(|r| r.len() != p) {
        bail!("{}: row {} has {} columns, expected {p}", path.display(), i + 1, rows[i].len());
    }
    let n = rows.len();
    Ok(Array2::from_shape_vec((n, p), rows.into_iter().flatten().collect())?)
}

fn single_test(a: &TestArgs) -> Result<()> {
    let data = TwoSampleData::new(read_matrix(&a.x1)?, read_matrix(&a.x2)?)?;
    let p = data.p();
    let std = if a.unit_variance {
        Standardization::Unit
    } else {
        Standardization::Estimated
    };
    let cs = component_stats(&data, &std)?;
    let band = DEFAULT_VARIANCE_BAND.min(p.saturating_sub(1));
    let band_seed = hdtest::rng::derive_seed(&[a.seed, hdtest::rng::purpose::BAND_SELECTION]);
    let boot_seed = hdtest::rng::derive_seed(&[a.seed, hdtest::rng::purpose::BOOTSTRAP]);
    let precision = || -> Result<(usize, TransformedMeans)> {
        let tau = select_band_width_two_sample(&data, None, DEFAULT_SPLITS, band_seed)?.tau;
        let est = fit_banded_cholesky(&data, tau)?;
        Ok((tau, TransformedMeans::from_estimate(&data, &est)?))
    };
    let boot = |method: BootstrapMethod, tau: usize, b: usize| {
        bootstrap_null(
            &data,
            &BootstrapSpec {
                method,
                b,
                tau,
                seed: boot_seed,
                standardization: std.clone(),
            },
            Execution::Parallel,
        )
    };
    let out: TestOutcome = match a.method {
        TestMethod::Cq => cq_test(&data, &cs, band, a.alpha)?,
        TestMethod::Bs => bs_test(&data, &cs, band, a.alpha)?,
        TestMethod::MultiThresh => {
            let value = multi_threshold_statistic(&cs, DEFAULT_ETA, Variant::L2)?.value;
            match a.bootstrap {
                None => calibrate_multi(Method::MultiThresh, value, p, DEFAULT_ETA, a.alpha, CriticalSource::Gumbel)?,
                Some(b) => {
                    let tau = select_band_width_two_sample(&data, None, DEFAULT_SPLITS, band_seed)?.tau;
                    let bn = boot(
                        BootstrapMethod::MultiThresh {
                            eta: DEFAULT_ETA,
                            variant: Variant::L2,
                        },
                        tau,
                        b,
                    )?;
                    calibrate_multi(Method::MultiThresh, value, p, DEFAULT_ETA, a.alpha, CriticalSource::Bootstrap(&bn))?
                }
            }
        }
        TestMethod::TransformedMulti => {
            let (tau, tm) = precision()?;
            let theta = a.theta.unwrap_or_else(|| default_theta(data.n_eff(), p));
            let value = transformed_multi_threshold(&tm, theta, DEFAULT_ETA_STAR)?.value;
            let eta_b = theta - DEFAULT_ETA_STAR;
            match a.bootstrap {
                None => calibrate_multi(Method::TransformedMulti, value, p, eta_b, a.alpha, CriticalSource::Gumbel)?,
                Some(b) => {
                    let bn = boot(
                        BootstrapMethod::TransformedMulti {
                            theta,
                            eta_star: DEFAULT_ETA_STAR,
                            reselect: false,
                        },
                        tau,
                        b,
                    )?;
                    calibrate_multi(Method::TransformedMulti, value, p, eta_b, a.alpha, CriticalSource::Bootstrap(&bn))?
                }
            }
        }
        TestMethod::ClxIdentity => clx_test(Method::ClxIdentity, clx_statistics(&cs, None).0, p, a.alpha)?,
        TestMethod::ClxOmega => {
            let (_, tm) = precision()?;
            let g = clx_statistics(&cs, Some(&tm)).1.expect("transformed means supplied");
            clx_test(Method::ClxOmega, g, p, a.alpha)?
        }
    };
    let mut w = std::io::stdout().lock();
    match a.format {
        OutFormat::Json => {
            serde_json::to_writer_pretty(&mut w, &out)?;
            writeln!(w)?;
        }
        OutFormat::Csv => {
            writeln!(w, "method,statistic,standardized,critical_value,alpha,pvalue,decision")?;
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                out.method.name(),
                out.statistic,
                out.standardized,
                out.critical_value,
                out.alpha,
                out.pvalue.map(|v| v.to_string()).unwrap_or_default(),
                if out.reject { "reject" } else { "retain" }
            )?;
        }
    }
    Ok(())
}

fn geneset(a: &GenesetArgs, exec: Execution) -> Result<()> {
    let ds = load_dataset(
        &a.expression,
        &a.labels,
        &a.groups,
        a.positions.as_deref(),
        a.min_group_size,
    )?;
    let opts = PipelineOptions {
        method: match a.method {
            GroupMethod::Cq => PipelineMethod::Cq,
            GroupMethod::Multithresh => PipelineMethod::MultiThresh,
            GroupMethod::Transformedmulti => PipelineMethod::TransformedMulti,
        },
        alpha_fdr: a.fdr,
        bootstrap_b: if a.gumbel { None } else { Some(a.bootstrap) },
        standardize: !a.no_standardize,
        seed: a.seed,
        ..PipelineOptions::default()
    };
    let report = test_groups(&ds, &opts, exec)?;
    for f in &report.failures {
        eprintln!("warning: group '{}' not tested: {}", f.group, f.error);
    }
    let mut w = open_output(a.output.as_deref())?;
    write_report(&report, &mut w, a.format.into())?;
    w.flush()?;
    Ok(())
}

fn boundary(a: &BoundaryArgs) -> Result<()> {
    let mut betas = parse_list_or_range(&a.beta).map_err(usage)?;
    if a.beta.contains(':') {
        // The grid is half-open on the right: β = 1 has no boundary.
        betas.retain(|&b| b < 1.0);
    }
    let rows = betas
        .iter()
        .map(|&b| detection_boundary(&DetectionPoint::new(b, a.theta)).map(|(r, rt)| (b, r, rt)))
        .collect::<hdtest::Result<Vec<_>>>()
        .map_err(usage)?;
    let mut w = open_output(a.output.as_deref())?;
    if a.theta.is_some() {
        writeln!(w, "beta,rho,rho_theta")?;
    } else {
        writeln!(w, "beta,rho")?;
    }
    for (b, r, rt) in rows {
        match rt {
            Some(rt) => writeln!(w, "{b},{r},{rt}")?,
            None => writeln!(w, "{b},{r}")?,
        }
    }
    w.flush()?;
    Ok(())
}
