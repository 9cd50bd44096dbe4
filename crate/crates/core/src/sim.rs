//! Monte Carlo harness: AR(1) data generation, empirical sizes and
//! size-adjusted power for the eight tests.
//!
//! Every replicate computes one p-value per test; a test rejects at level
//! α when its p-value is at most α. Random streams are keyed by
//! (seed, cell, replicate, purpose) where the cell key covers only
//! (p, n₁, n₂, ρ, innovation). Cells that differ only in (β, r) therefore
//! share their innovations, and r = 0 reproduces the size cell exactly.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_null, BootstrapMethod, BootstrapSpec};
use crate::data::TwoSampleData;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::precision::{fit_banded_cholesky, select_band_width_two_sample, DEFAULT_SPLITS};
use crate::rng;
use crate::stats::gumbel::gumbel_pvalue;
use crate::stats::sum::{cq_test, oracle_test};
use crate::stats::threshold::multi_threshold_statistic;
use crate::stats::{component_stats, Standardization, Variant, DEFAULT_VARIANCE_BAND};
use crate::transform::{clx_pvalue, clx_statistics, default_theta, transformed_multi_threshold, TransformedMeans};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Innovation {
    Gaussian,
    /// Gamma(shape 4, scale 0.5) − 2: mean 0, variance 1.
    Gamma,
}

impl Innovation {
    pub fn name(self) -> &'static str {
        match self {
            Innovation::Gaussian => "gaussian",
            Innovation::Gamma => "gamma",
        }
    }
}

impl FromStr for Innovation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Innovation::Gaussian),
            "gamma" => Ok(Innovation::Gamma),
            _ => Err(Error::InvalidInput(format!("unknown innovation '{s}' (gaussian, gamma)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TestId {
    #[serde(rename = "CQ")]
    Cq,
    Oracle,
    #[serde(rename = "CLX1")]
    Clx1,
    #[serde(rename = "CLX2")]
    Clx2,
    Mult1,
    Mult2,
    #[serde(rename = "Mult1*")]
    Mult1Star,
    #[serde(rename = "Mult2*")]
    Mult2Star,
}

impl TestId {
    pub const ALL: [TestId; 8] = [
        TestId::Cq,
        TestId::Oracle,
        TestId::Clx1,
        TestId::Clx2,
        TestId::Mult1,
        TestId::Mult2,
        TestId::Mult1Star,
        TestId::Mult2Star,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TestId::Cq => "CQ",
            TestId::Oracle => "Oracle",
            TestId::Clx1 => "CLX1",
            TestId::Clx2 => "CLX2",
            TestId::Mult1 => "Mult1",
            TestId::Mult2 => "Mult2",
            TestId::Mult1Star => "Mult1*",
            TestId::Mult2Star => "Mult2*",
        }
    }

    fn needs_precision(self) -> bool {
        matches!(self, TestId::Clx2 | TestId::Mult2 | TestId::Mult1Star | TestId::Mult2Star)
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TestId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('*', "star");
        TestId::ALL
            .into_iter()
            .find(|t| t.label().to_ascii_lowercase().replace('*', "star") == key)
            .ok_or_else(|| Error::InvalidInput(format!("unknown test '{s}'")))
    }
}

/// Coordinate scaling used by the untransformed statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimStandardization {
    /// Σ has unit diagonal, so the true variances are one.
    #[default]
    Unit,
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub p: usize,
    pub n1: usize,
    pub n2: usize,
    pub beta: f64,
    pub r: f64,
    pub rho: f64,
    pub innovation: Innovation,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
    pub tests: Vec<TestId>,
    pub size_adjust: bool,
    pub bootstrap_b: usize,
    /// Re-select the band width inside every bootstrap replicate.
    pub bootstrap_reselect: bool,
    pub eta: f64,
    pub eta_star: f64,
    /// θ for the transformed window; defaults to log n / log p.
    pub theta: Option<f64>,
    pub mult1_variant: Variant,
    pub standardization: SimStandardization,
    pub band_splits: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            p: 200,
            n1: 30,
            n2: 40,
            beta: 0.5,
            r: 0.0,
            rho: 0.6,
            innovation: Innovation::Gaussian,
            alpha: 0.05,
            replicates: 1000,
            seed: 20_140_101,
            tests: TestId::ALL.to_vec(),
            size_adjust: true,
            bootstrap_b: crate::bootstrap::DEFAULT_B,
            bootstrap_reselect: false,
            eta: crate::stats::DEFAULT_ETA,
            eta_star: crate::transform::DEFAULT_ETA_STAR,
            theta: None,
            mult1_variant: Variant::L2,
            standardization: SimStandardization::Unit,
            band_splits: DEFAULT_SPLITS,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 3 {
            return Err(Error::out_of_range("p", self.p as f64, ">= 3"));
        }
        if self.n1 < 4 || self.n2 < 4 {
            return Err(Error::InvalidInput(format!("sample sizes ({}, {}) must be >= 4", self.n1, self.n2)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::out_of_range("beta", self.beta, "[0, 1]"));
        }
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(Error::out_of_range("r", self.r, "[0, inf)"));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::out_of_range("rho", self.rho, "(-1, 1)"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::out_of_range("alpha", self.alpha, "(0, 1]"));
        }
        if self.replicates == 0 {
            return Err(Error::out_of_range("replicates", 0.0, ">= 1"));
        }
        if self.tests.is_empty() {
            return Err(Error::InvalidInput("no tests selected".into()));
        }
        let star = self.tests.iter().any(|t| matches!(t, TestId::Mult1Star | TestId::Mult2Star));
        if star && self.bootstrap_b < crate::bootstrap::MIN_B {
            return Err(Error::out_of_range("bootstrap_b", self.bootstrap_b as f64, ">= 100"));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::out_of_range("eta", self.eta, "(0, 1)"));
        }
        if let Some(t) = self.theta {
            if !(t > self.eta_star && t < 1.0) {
                return Err(Error::out_of_range("theta", t, "(eta_star, 1)"));
            }
        }
        if !(self.eta_star > 0.0 && self.eta_star < 1.0) {
            return Err(Error::out_of_range("eta_star", self.eta_star, "(0, 1)"));
        }
        if self.band_splits == 0 {
            return Err(Error::out_of_range("band_splits", 0.0, ">= 1"));
        }
        Ok(())
    }

    pub fn n_eff(&self) -> f64 {
        let (a, b) = (self.n1 as f64, self.n2 as f64);
        a * b / (a + b)
    }

    /// Key shared by all cells with the same (p, n₁, n₂, ρ, innovation).
    pub fn cell_id(&self) -> u64 {
        rng::derive_seed(&[
            self.p as u64,
            self.n1 as u64,
            self.n2 as u64,
            self.rho.to_bits(),
            rng::hash_str(self.innovation.name()),
        ])
    }

    /// [p^{1−β}] and whether it was raised from 0 to 1.
    pub fn signal_count(&self) -> (usize, bool) {
        let m = ((self.p as f64).powf(1.0 - self.beta) + 1e-9).floor() as usize;
        let m = m.min(self.p);
        if m == 0 {
            (1, self.r > 0.0)
        } else {
            (m, false)
        }
    }

    pub fn signal_value(&self) -> f64 {
        (2.0 * self.r * (self.p as f64).ln() / self.n_eff()).sqrt()
    }

    fn theta_value(&self) -> f64 {
        self.theta.unwrap_or_else(|| default_theta(self.n_eff(), self.p))
    }
}

/// Lower Cholesky factor of Σ = (ρ^{|i−j|}).
pub fn ar1_cholesky_factor(p: usize, rho: f64) -> Array2<f64> {
    let c = (1.0 - rho * rho).sqrt();
    Array2::from_shape_fn((p, p), |(i, j)| {
        if j > i {
            0.0
        } else if j == 0 {
            rho.powi(i as i32)
        } else {
            c * rho.powi((i - j) as i32)
        }
    })
}

fn innovation<R: Rng + ?Sized>(kind: Innovation, gamma: &Gamma<f64>, rng: &mut R) -> f64 {
    match kind {
        Innovation::Gaussian => rng.sample(StandardNormal),
        Innovation::Gamma => gamma.sample(rng) - 2.0,
    }
}

/// One AR(1) sample via X_j = ρX_{j−1} + √(1−ρ²)Z_j, which equals L·Z for
/// the lower Cholesky factor L of Σ.
fn ar1_sample(rows: usize, cfg: &SimulationConfig, mut rng: rng::StreamRng, shift: &[f64]) -> Array2<f64> {
    let p = cfg.p;
    let gamma = Gamma::new(4.0, 0.5).expect("valid gamma");
    let c = (1.0 - cfg.rho * cfg.rho).sqrt();
    let mut x = Array2::zeros((rows, p));
    for mut row in x.rows_mut() {
        let mut prev = 0.0;
        for j in 0..p {
            let z = innovation(cfg.innovation, &gamma, &mut rng);
            prev = if j == 0 { z } else { cfg.rho * prev + c * z };
            row[j] = prev;
        }
        for (v, s) in row.iter_mut().zip(shift) {
            *v += s;
        }
    }
    x
}

/// Planted signal positions (sorted) for a replicate.
pub fn signal_positions(cfg: &SimulationConfig, replicate: usize) -> Vec<usize> {
    let (m, _) = cfg.signal_count();
    let mut rng = rng::stream(&[cfg.seed, cfg.cell_id(), replicate as u64, rng::purpose::SIGNAL_POSITIONS]);
    let mut pos = rand::seq::index::sample(&mut rng, cfg.p, m).into_vec();
    pos.sort_unstable();
    pos
}

/// Two samples for a replicate, with μ₁ = 0 and μ₂ carrying the planted
/// signals. Also returns the signal positions.
pub fn gen_two_samples(cfg: &SimulationConfig, replicate: usize) -> Result<(TwoSampleData, Vec<usize>)> {
    let pos = signal_positions(cfg, replicate);
    let mut mu2 = vec![0.0; cfg.p];
    if cfg.r > 0.0 {
        let v = cfg.signal_value();
        for &k in &pos {
            mu2[k] = v;
        }
    }
    let key = |s: u64| rng::stream(&[cfg.seed, cfg.cell_id(), replicate as u64, s]);
    let x1 = ar1_sample(cfg.n1, cfg, key(rng::purpose::SAMPLE_ONE), &vec![0.0; cfg.p]);
    let x2 = ar1_sample(cfg.n2, cfg, key(rng::purpose::SAMPLE_TWO), &mu2);
    Ok((TwoSampleData::new(x1, x2)?, pos))
}

/// Per-test p-values of one replicate, in `cfg.tests` order.
pub fn replicate_pvalues(cfg: &SimulationConfig, replicate: usize) -> Result<Vec<f64>> {
    let (data, pos) = gen_two_samples(cfg, replicate)?;
    let p = cfg.p;
    let std = match cfg.standardization {
        SimStandardization::Unit => Standardization::Unit,
        SimStandardization::Estimated => Standardization::Estimated,
    };
    let cs = component_stats(&data, &std)?;
    let band = DEFAULT_VARIANCE_BAND.min(p - 1);
    let theta = cfg.theta_value();
    let rep_key = |purpose: u64, extra: u64| rng::derive_seed(&[cfg.seed, cfg.cell_id(), replicate as u64, purpose, extra]);

    let precision = if cfg.tests.iter().any(|t| t.needs_precision()) {
        let tau = select_band_width_two_sample(&data, None, cfg.band_splits, rep_key(rng::purpose::BAND_SELECTION, 0))?.tau;
        let est = fit_banded_cholesky(&data, tau)?;
        let tm = TransformedMeans::from_estimate(&data, &est)?;
        Some((tau, tm))
    } else {
        None
    };
    let prec = || precision.as_ref().expect("precision computed when needed");

    let mult1 = || multi_threshold_statistic(&cs, cfg.eta, cfg.mult1_variant).map(|m| m.value);
    let mult2 = || transformed_multi_threshold(&prec().1, theta, cfg.eta_star).map(|m| m.value);
    let boot = |method: BootstrapMethod, extra: u64| {
        bootstrap_null(
            &data,
            &BootstrapSpec {
                method,
                b: cfg.bootstrap_b,
                tau: prec().0,
                seed: rep_key(rng::purpose::BOOTSTRAP, extra),
                standardization: std.clone(),
            },
            Execution::Sequential,
        )
    };

    cfg.tests
        .iter()
        .map(|t| -> Result<f64> {
            let pv = match t {
                TestId::Cq => cq_test(&data, &cs, band, 0.05)?.pvalue,
                TestId::Oracle => oracle_test(&data, &cs, &pos, band.min(pos.len().saturating_sub(1)), 0.05)?.pvalue,
                TestId::Clx1 => Some(clx_pvalue(clx_statistics(&cs, None).0, p)?),
                TestId::Clx2 => Some(clx_pvalue(clx_statistics(&cs, Some(&prec().1)).1.expect("omega"), p)?),
                TestId::Mult1 => Some(gumbel_pvalue(mult1()?, p, cfg.eta)?),
                TestId::Mult2 => Some(gumbel_pvalue(mult2()?, p, theta - cfg.eta_star)?),
                TestId::Mult1Star => {
                    let bn = boot(
                        BootstrapMethod::MultiThresh {
                            eta: cfg.eta,
                            variant: cfg.mult1_variant,
                        },
                        1,
                    )?;
                    Some(bn.pvalue(mult1()?))
                }
                TestId::Mult2Star => {
                    let bn = boot(
                        BootstrapMethod::TransformedMulti {
                            theta,
                            eta_star: cfg.eta_star,
                            reselect: cfg.bootstrap_reselect,
                        },
                        2,
                    )?;
                    Some(bn.pvalue(mult2()?))
                }
            };
            let pv = pv.ok_or(Error::NonFinite("p-value"))?;
            if pv.is_nan() {
                return Err(Error::NonFinite("p-value"));
            }
            Ok(pv)
        })
        .collect()
}

/// Raw per-replicate p-values of a cell: `pvalues[replicate][test]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRun {
    pub config: SimulationConfig,
    pub pvalues: Vec<Vec<f64>>,
}

pub fn run_cell(cfg: &SimulationConfig, exec: Execution) -> Result<CellRun> {
    cfg.validate()?;
    let pvalues = exec.try_map(cfg.replicates, |rep| replicate_pvalues(cfg, rep))?;
    Ok(CellRun {
        config: cfg.clone(),
        pvalues,
    })
}

impl CellRun {
    pub fn column(&self, test: usize) -> impl Iterator<Item = f64> + '_ {
        self.pvalues.iter().map(move |row| row[test])
    }

    pub fn reject_rate(&self, test: usize, level: f64) -> f64 {
        let hits = self.column(test).filter(|&pv| pv <= level).count();
        hits as f64 / self.pvalues.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRate {
    pub test: TestId,
    pub reject_rate: f64,
    pub se: f64,
    /// Level at which the rate was computed (size-adjusted in power runs).
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub config: SimulationConfig,
    pub rates: Vec<TestRate>,
    pub signal_count: usize,
    /// Signal count raised from 0 to 1.
    pub signal_flagged: bool,
    #[serde(skip)]
    pub wall_time: std::time::Duration,
}

impl CellResult {
    pub fn rate(&self, test: TestId) -> Option<&TestRate> {
        self.rates.iter().find(|r| r.test == test)
    }

    fn from_run(run: &CellRun, levels: &[f64], wall_time: std::time::Duration) -> Self {
        let cfg = &run.config;
        let reps = cfg.replicates as f64;
        let rates = cfg
            .tests
            .iter()
            .enumerate()
            .map(|(i, &test)| {
                let f = run.reject_rate(i, levels[i]);
                TestRate {
                    test,
                    reject_rate: f,
                    se: (f * (1.0 - f) / reps).sqrt(),
                    level: levels[i],
                }
            })
            .collect();
        let (signal_count, signal_flagged) = cfg.signal_count();
        CellResult {
            config: cfg.clone(),
            rates,
            signal_count,
            signal_flagged,
            wall_time,
        }
    }
}

/// Empirical sizes at the nominal level (the signal strength is set to 0).
pub fn run_size(cfg: &SimulationConfig, exec: Execution) -> Result<CellResult> {
    let start = Instant::now();
    let cfg = SimulationConfig { r: 0.0, ..cfg.clone() };
    let run = run_cell(&cfg, exec)?;
    let levels = vec![cfg.alpha; cfg.tests.len()];
    let res = CellResult::from_run(&run, &levels, start.elapsed());
    log::info!("size cell p={} ({}, {}) done in {:.1?}", cfg.p, cfg.n1, cfg.n2, res.wall_time);
    Ok(res)
}

pub const CALIBRATION_STEPS: usize = 8;

/// Largest nominal level (8 bisection steps on [0, 0.5]) whose empirical
/// size over `null_pvalues` does not exceed `target`. Falls back to the
/// target itself when [0, 0.5] does not bracket it.
pub fn calibrate_level(null_pvalues: &[f64], target: f64) -> (f64, bool) {
    let size = |a: f64| null_pvalues.iter().filter(|&&pv| pv <= a).count() as f64 / null_pvalues.len() as f64;
    let (mut lo, mut hi) = (0.0, 0.5);
    if size(lo) > target || size(hi) <= target {
        return (target, false);
    }
    for _ in 0..CALIBRATION_STEPS {
        let mid = 0.5 * (lo + hi);
        if size(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, true)
}

/// Power over a (β, r) grid. With `size_adjust`, levels come from a null run
/// of the same cell (one per distinct β, which only moves the Oracle's set).
pub fn run_power(base: &SimulationConfig, grid: &[(f64, f64)], exec: Execution) -> Result<Vec<CellResult>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty power grid".into()));
    }
    let mut levels_by_beta: Vec<(u64, Vec<f64>)> = Vec::new();
    let mut out = Vec::with_capacity(grid.len());
    for &(beta, r) in grid {
        let cfg = SimulationConfig { beta, r, ..base.clone() };
        cfg.validate()?;
        let levels = if cfg.size_adjust {
            match levels_by_beta.iter().find(|(b, _)| *b == beta.to_bits()) {
                Some((_, l)) => l.clone(),
                None => {
                    let null = run_cell(&SimulationConfig { r: 0.0, ..cfg.clone() }, exec)?;
                    let l: Vec<f64> = (0..cfg.tests.len())
                        .map(|i| {
                            let pv: Vec<f64> = null.column(i).collect();
                            let (level, ok) = calibrate_level(&pv, cfg.alpha);
                            if !ok {
                                log::warn!(
                                    "size adjustment for {} at beta={beta} did not bracket {}; using nominal level",
                                    cfg.tests[i],
                                    cfg.alpha
                                );
                            }
                            level
                        })
                        .collect();
                    levels_by_beta.push((beta.to_bits(), l.clone()));
                    l
                }
            }
        } else {
            vec![cfg.alpha; cfg.tests.len()]
        };
        let start = Instant::now();
        let run = run_cell(&cfg, exec)?;
        out.push(CellResult::from_run(&run, &levels, start.elapsed()));
        log::info!("power cell beta={beta} r={r} done");
    }
    Ok(out)
}

/// One exported line per (cell, test).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub p: usize,
    pub n1: usize,
    pub n2: usize,
    pub beta: f64,
    pub r: f64,
    pub rho: f64,
    pub innovation: Innovation,
    pub alpha: f64,
    pub test: TestId,
    pub reject_rate: f64,
    pub se: f64,
    pub replicates: usize,
    pub seed: u64,
}

pub fn result_rows(results: &[CellResult]) -> Vec<ResultRow> {
    results
        .iter()
        .flat_map(|c| {
            c.rates.iter().map(move |t| ResultRow {
                p: c.config.p,
                n1: c.config.n1,
                n2: c.config.n2,
                beta: c.config.beta,
                r: c.config.r,
                rho: c.config.rho,
                innovation: c.config.innovation,
                alpha: t.level,
                test: t.test,
                reject_rate: t.reject_rate,
                se: t.se,
                replicates: c.config.replicates,
                seed: c.config.seed,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::InvalidInput(format!("unknown format '{s}' (csv, json)"))),
        }
    }
}

pub const CSV_HEADER: [&str; 13] = [
    "p",
    "n1",
    "n2",
    "beta",
    "r",
    "rho",
    "innovation",
    "alpha",
    "test",
    "reject_rate",
    "se",
    "replicates",
    "seed",
];

/// Writes rows to any writer. CSV always carries the header.
pub fn write_results<W: std::io::Write>(results: &[CellResult], mut w: W, format: Format) -> Result<()> {
    let rows = result_rows(results);
    let io = |e: std::io::Error| Error::Io {
        path: "<output>".into(),
        source: e,
    };
    match format {
        Format::Csv => {
            let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
            let csv_err = |e: csv::Error| Error::Csv {
                path: "<output>".into(),
                source: e,
            };
            wr.write_record(CSV_HEADER).map_err(csv_err)?;
            for r in &rows {
                let rec = [
                    r.p.to_string(),
                    r.n1.to_string(),
                    r.n2.to_string(),
                    r.beta.to_string(),
                    r.r.to_string(),
                    r.rho.to_string(),
                    r.innovation.name().to_string(),
                    r.alpha.to_string(),
                    r.test.label().to_string(),
                    r.reject_rate.to_string(),
                    r.se.to_string(),
                    r.replicates.to_string(),
                    r.seed.to_string(),
                ];
                wr.write_record(&rec).map_err(csv_err)?;
            }
            wr.flush().map_err(io)?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, &rows)?;
            w.write_all(b"\n").map_err(io)?;
        }
    }
    Ok(())
}

pub fn export_results(results: &[CellResult], path: &Path, format: Format) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let w = std::io::BufWriter::new(file);
    write_results(results, w, format).map_err(|e| e.with_path(path))
}

pub fn read_results(path: &Path, format: Format) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    match format {
        Format::Json => Ok(serde_json::from_str(&text)?),
        Format::Csv => {
            let mut rd = csv::Reader::from_reader(text.as_bytes());
            let bad = |line: usize, what: &str| Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {line}: bad {what}"),
            };
            let mut rows = Vec::new();
            for (i, rec) in rd.records().enumerate() {
                let rec = rec.map_err(|e| Error::Csv {
                    path: path.to_path_buf(),
                    source: e,
                })?;
                let line = i + 2;
                let field = |k: usize| rec.get(k).ok_or_else(|| bad(line, CSV_HEADER[k]));
                macro_rules! num {
                    ($k:expr) => {
                        field($k)?.parse().map_err(|_| bad(line, CSV_HEADER[$k]))?
                    };
                }
                rows.push(ResultRow {
                    p: num!(0),
                    n1: num!(1),
                    n2: num!(2),
                    beta: num!(3),
                    r: num!(4),
                    rho: num!(5),
                    innovation: num!(6),
                    alpha: num!(7),
                    test: num!(8),
                    reject_rate: num!(9),
                    se: num!(10),
                    replicates: num!(11),
                    seed: num!(12),
                });
            }
            Ok(rows)
        }
    }
}

/// What a preset runs.
#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    Size(Vec<SimulationConfig>),
    Power {
        base: SimulationConfig,
        grid: Vec<(f64, f64)>,
    },
}

pub const PRESETS: [&str; 3] = ["table1-desk", "table1-full", "fig1-desk"];

/// Evenly spaced values lo, lo+step, … up to hi (inclusive within 1e-9).
pub fn float_range(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidInput(format!("bad range {lo}:{hi}:{step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).map(|v| (v * 1e12).round() / 1e12).collect())
}

pub fn preset(name: &str) -> Result<Preset> {
    let sizes = [(30, 40), (60, 80), (90, 120)];
    match name {
        "table1-desk" => Ok(Preset::Size(
            sizes
                .iter()
                .map(|&(n1, n2)| SimulationConfig {
                    n1,
                    n2,
                    replicates: 200,
                    ..SimulationConfig::default()
                })
                .collect(),
        )),
        "table1-full" => {
            let mut cells = Vec::new();
            for innovation in [Innovation::Gaussian, Innovation::Gamma] {
                for p in [200, 400, 600] {
                    for &(n1, n2) in &sizes {
                        cells.push(SimulationConfig {
                            p,
                            n1,
                            n2,
                            innovation,
                            replicates: 1000,
                            ..SimulationConfig::default()
                        });
                    }
                }
            }
            Ok(Preset::Size(cells))
        }
        "fig1-desk" => {
            let rs = float_range(0.1, 0.4, 0.05)?;
            let grid = [0.5, 0.6]
                .iter()
                .flat_map(|&b| rs.iter().map(move |&r| (b, r)))
                .collect();
            Ok(Preset::Power {
                base: SimulationConfig {
                    replicates: 200,
                    tests: vec![
                        TestId::Cq,
                        TestId::Oracle,
                        TestId::Clx1,
                        TestId::Clx2,
                        TestId::Mult1,
                        TestId::Mult2,
                    ],
                    ..SimulationConfig::default()
                },
                grid,
            })
        }
        _ => Err(Error::InvalidInput(format!(
            "unknown preset '{name}' (available: {})",
            PRESETS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small() -> SimulationConfig {
        SimulationConfig {
            p: 12,
            n1: 8,
            n2: 10,
            replicates: 6,
            bootstrap_b: 100,
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn cholesky_factor_reproduces_ar1() {
        for &(p, rho) in &[(5usize, 0.6), (50, 0.6), (20, -0.3), (7, 0.0)] {
            let l = ar1_cholesky_factor(p, rho);
            let s = l.dot(&l.t());
            for ((i, j), v) in s.indexed_iter() {
                assert!((v - rho.powi(i.abs_diff(j) as i32)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn recursion_equals_cholesky_product() {
        let cfg = SimulationConfig { p: 6, ..small() };
        let z = ar1_sample(3, &SimulationConfig { rho: 0.0, ..cfg.clone() }, rng::stream(&[1]), &[0.0; 6]);
        let x = ar1_sample(3, &cfg, rng::stream(&[1]), &[0.0; 6]);
        let lx = z.dot(&ar1_cholesky_factor(6, cfg.rho).t());
        for (a, b) in x.iter().zip(lx.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn null_cell_has_equal_means() {
        let cfg = small();
        let (d, pos) = gen_two_samples(&cfg, 0).unwrap();
        assert_eq!(pos.len(), 3);
        let (d2, _) = gen_two_samples(&SimulationConfig { beta: 0.9, ..cfg.clone() }, 0).unwrap();
        assert_eq!(d, d2);
    }

    #[test]
    fn signals_planted() {
        let cfg = SimulationConfig { r: 0.3, ..small() };
        let (alt, pos) = gen_two_samples(&cfg, 2).unwrap();
        let (null, pos0) = gen_two_samples(&SimulationConfig { r: 0.0, ..cfg.clone() }, 2).unwrap();
        assert_eq!(pos, pos0);
        let v = cfg.signal_value();
        for k in 0..cfg.p {
            let shift = alt.x2()[[0, k]] - null.x2()[[0, k]];
            let expect = if pos.contains(&k) { v } else { 0.0 };
            assert_abs_diff_eq!(shift, expect, epsilon = 1e-12);
        }
        assert_eq!(alt.x1(), null.x1());
    }

    #[test]
    fn signal_counts() {
        let c = SimulationConfig { p: 200, beta: 0.5, ..small() };
        assert_eq!(c.signal_count(), (14, false));
        let c = SimulationConfig { p: 400, beta: 0.5, ..small() };
        assert_eq!(c.signal_count(), (20, false));
        let c = SimulationConfig { p: 200, beta: 1.0, r: 0.2, ..small() };
        assert_eq!(c.signal_count(), (1, false));
    }

    #[test]
    fn innovations_standardized() {
        let gamma = Gamma::new(4.0, 0.5).unwrap();
        let mut rng = rng::stream(&[7]);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| innovation(Innovation::Gamma, &gamma, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn alpha_one_rejects_everything() {
        let cfg = SimulationConfig { alpha: 1.0, ..small() };
        let res = run_size(&cfg, Execution::Sequential).unwrap();
        for t in &res.rates {
            assert_eq!(t.reject_rate, 1.0, "{}", t.test);
        }
    }

    #[test]
    fn size_run_is_reproducible() {
        let cfg = small();
        let a = run_cell(&cfg, Execution::Sequential).unwrap();
        let b = run_cell(&cfg, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        let pw = run_cell(&SimulationConfig { r: 0.0, beta: 0.5, ..cfg.clone() }, Execution::Sequential).unwrap();
        assert_eq!(a.pvalues, pw.pvalues);
    }

    #[test]
    fn calibration_bisection() {
        let pv: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0 * 0.4).collect();
        let (level, ok) = calibrate_level(&pv, 0.05);
        assert!(ok);
        let size = pv.iter().filter(|&&v| v <= level).count() as f64 / 1000.0;
        assert!(size <= 0.05);
        assert!(level > 0.018 && level <= 0.02, "{level}");
        let (level, ok) = calibrate_level(&[0.9; 10], 0.05);
        assert!(!ok);
        assert_eq!(level, 0.05);
    }

    #[test]
    fn export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let res = run_size(&SimulationConfig { tests: vec![TestId::Cq, TestId::Mult1], ..small() }, Execution::Sequential).unwrap();
        for fmt in [Format::Csv, Format::Json] {
            let path = dir.path().join("out");
            export_results(std::slice::from_ref(&res), &path, fmt).unwrap();
            let rows = read_results(&path, fmt).unwrap();
            assert_eq!(rows, result_rows(std::slice::from_ref(&res)));
            assert_eq!(rows.len(), 2);
        }
        let empty = dir.path().join("empty.csv");
        export_results(&[], &empty, Format::Csv).unwrap();
        assert_eq!(std::fs::read_to_string(&empty).unwrap().trim(), CSV_HEADER.join(","));
    }

    #[test]
    fn test_id_parsing() {
        assert_eq!("mult1*".parse::<TestId>().unwrap(), TestId::Mult1Star);
        assert_eq!("Mult2star".parse::<TestId>().unwrap(), TestId::Mult2Star);
        assert_eq!("clx1".parse::<TestId>().unwrap(), TestId::Clx1);
        assert!("foo".parse::<TestId>().is_err());
    }

    #[test]
    fn presets_exist() {
        for name in PRESETS {
            preset(name).unwrap();
        }
        match preset("fig1-desk").unwrap() {
            Preset::Power { grid, .. } => assert_eq!(grid.len(), 14),
            _ => panic!(),
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = serde_json::from_str::<SimulationConfig>(r#"{"p": 10, "bogus": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"));
        let c: SimulationConfig = serde_json::from_str(r#"{"p": 10, "tests": ["CQ", "Mult1*"]}"#).unwrap();
        assert_eq!(c.tests, vec![TestId::Cq, TestId::Mult1Star]);
    }
}
