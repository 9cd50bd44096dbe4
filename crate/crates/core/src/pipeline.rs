//! Grouped two-sample testing (gene-set style) with Benjamini–Hochberg FDR.
//!
//! Input files:
//! - expression CSV: header `subject,<feature>,...`, one row per subject;
//! - labels CSV: header `subject,sample`, sample is 1 or 2;
//! - groups CSV: header `group,features`, features comma-separated (quote
//!   the field);
//! - optional positions CSV: header `feature,position`, used to order the
//!   columns within each group.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_null, BootstrapMethod, BootstrapSpec, DEFAULT_B};
use crate::data::{column_variances, TwoSampleData};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::precision::{fit_banded_cholesky, select_band_width_two_sample, DEFAULT_SPLITS};
use crate::rng;
use crate::sim::Format;
use crate::stats::gumbel::gumbel_pvalue;
use crate::stats::sum::{cq_test, DEFAULT_VARIANCE_BAND};
use crate::stats::threshold::{multi_threshold_statistic, DEFAULT_ETA};
use crate::stats::{component_stats, Method, PValueSource, Standardization, Variant};
use crate::transform::{default_theta, transformed_multi_threshold, TransformedMeans, DEFAULT_ETA_STAR};

pub const DEFAULT_MIN_GROUP_SIZE: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    pub expression: Array2<f64>,
    pub feature_names: Vec<String>,
    /// 1 or 2 per row of `expression`.
    pub sample_labels: Vec<u8>,
    /// Group id → column indices, already ordered.
    pub groups: BTreeMap<String, Vec<usize>>,
    pub feature_order: Option<Vec<f64>>,
    /// Groups dropped at load time, with the reason.
    pub skipped: Vec<(String, String)>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    }
}

fn parse_err(path: &Path, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message,
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f))
}

fn read_expression(path: &Path) -> Result<(Vec<String>, Vec<String>, Array2<f64>)> {
    let mut rd = reader(path)?;
    let header = rd.headers().map_err(csv_err(path))?.clone();
    if header.len() < 2 {
        return Err(parse_err(path, "expected a subject column and at least one feature".into()));
    }
    let features: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut subjects = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let row = i + 1;
        if rec.len() != header.len() {
            return Err(parse_err(path, format!("row {row}: {} fields, expected {}", rec.len(), header.len())));
        }
        subjects.push(rec[0].to_string());
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(path, format!("row {row}, column '{}': non-numeric value '{cell}'", features[j])))?;
            values.push(v);
        }
    }
    let m = Array2::from_shape_vec((subjects.len(), features.len()), values).expect("rectangular");
    Ok((subjects, features, m))
}

fn read_labels(path: &Path) -> Result<HashMap<String, u8>> {
    let mut rd = reader(path)?;
    let mut out = HashMap::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        if rec.len() < 2 {
            return Err(parse_err(path, format!("row {}: expected subject,sample", i + 1)));
        }
        let label = match &rec[1] {
            "1" => 1,
            "2" => 2,
            other => return Err(parse_err(path, format!("row {}: sample must be 1 or 2, got '{other}'", i + 1))),
        };
        if out.insert(rec[0].to_string(), label).is_some() {
            return Err(parse_err(path, format!("duplicate subject '{}'", &rec[0])));
        }
    }
    Ok(out)
}

fn read_positions(path: &Path, index: &HashMap<&str, usize>, p: usize) -> Result<Vec<f64>> {
    let mut rd = reader(path)?;
    // Features without a position sort last, in header order.
    let mut order = vec![f64::INFINITY; p];
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        if rec.len() < 2 {
            return Err(parse_err(path, format!("row {}: expected feature,position", i + 1)));
        }
        let &k = index
            .get(&rec[0])
            .ok_or_else(|| parse_err(path, format!("unknown feature '{}'", &rec[0])))?;
        order[k] = rec[1]
            .parse()
            .map_err(|_| parse_err(path, format!("row {}: bad position '{}'", i + 1, &rec[1])))?;
    }
    Ok(order)
}

/// Reads and validates a grouped dataset. Groups with fewer than
/// `min_group_size` distinct features are skipped with a warning.
pub fn load_dataset(
    expr_path: &Path,
    labels_path: &Path,
    groups_path: &Path,
    positions_path: Option<&Path>,
    min_group_size: usize,
) -> Result<GroupedDataset> {
    let (subjects, features, expression) = read_expression(expr_path)?;
    let labels = read_labels(labels_path)?;
    let sample_labels = subjects
        .iter()
        .map(|s| {
            labels
                .get(s)
                .copied()
                .ok_or_else(|| parse_err(labels_path, format!("no label for subject '{s}'")))
        })
        .collect::<Result<Vec<u8>>>()?;
    for s in [1u8, 2] {
        let count = sample_labels.iter().filter(|&&l| l == s).count();
        if count < 2 {
            return Err(Error::InvalidInput(format!("sample {s} has {count} subjects, need at least 2")));
        }
    }

    let index: HashMap<&str, usize> = features.iter().enumerate().map(|(k, f)| (f.as_str(), k)).collect();
    if index.len() != features.len() {
        return Err(parse_err(expr_path, "duplicate feature names in header".into()));
    }
    let feature_order = positions_path
        .map(|p| read_positions(p, &index, features.len()))
        .transpose()?;

    let mut groups = BTreeMap::new();
    let mut skipped = Vec::new();
    let mut rd = reader(groups_path)?;
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err(groups_path))?;
        if rec.len() < 2 {
            return Err(parse_err(groups_path, format!("row {}: expected group,features", i + 1)));
        }
        let id = rec[0].to_string();
        if groups.contains_key(&id) || skipped.iter().any(|(s, _)| s == &id) {
            return Err(parse_err(groups_path, format!("duplicate group '{id}'")));
        }
        let mut seen = HashSet::new();
        let mut cols = Vec::new();
        for name in rec[1].split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let &k = index
                .get(name)
                .ok_or_else(|| parse_err(groups_path, format!("group '{id}': unknown feature '{name}'")))?;
            if seen.insert(k) {
                cols.push(k);
            } else {
                log::warn!("group '{id}': duplicate feature '{name}' dropped");
            }
        }
        if cols.len() < min_group_size {
            let reason = format!("{} features, minimum {min_group_size}", cols.len());
            log::warn!("group '{id}' skipped: {reason}");
            skipped.push((id, reason));
            continue;
        }
        if let Some(order) = &feature_order {
            cols.sort_by(|&a, &b| order[a].total_cmp(&order[b]).then(a.cmp(&b)));
        }
        groups.insert(id, cols);
    }

    Ok(GroupedDataset {
        expression,
        feature_names: features,
        sample_labels,
        groups,
        feature_order,
        skipped,
    })
}

impl GroupedDataset {
    /// Two-sample data restricted to the given columns.
    pub fn group_data(&self, cols: &[usize]) -> Result<TwoSampleData> {
        let rows = |s: u8| -> Vec<usize> { (0..self.sample_labels.len()).filter(|&i| self.sample_labels[i] == s).collect() };
        let sub = self.expression.select(Axis(1), cols);
        TwoSampleData::new(sub.select(Axis(0), &rows(1)), sub.select(Axis(0), &rows(2)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PipelineMethod {
    #[serde(rename = "CQ")]
    Cq,
    MultiThresh,
    TransformedMulti,
}

impl PipelineMethod {
    pub fn method(self) -> Method {
        match self {
            PipelineMethod::Cq => Method::Cq,
            PipelineMethod::MultiThresh => Method::MultiThresh,
            PipelineMethod::TransformedMulti => Method::TransformedMulti,
        }
    }
}

impl FromStr for PipelineMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "cq" => Ok(PipelineMethod::Cq),
            "multithresh" | "mult1" => Ok(PipelineMethod::MultiThresh),
            "transformedmulti" | "mult2" => Ok(PipelineMethod::TransformedMulti),
            _ => Err(Error::InvalidInput(format!(
                "unknown method '{s}' (cq, multithresh, transformedmulti)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub method: PipelineMethod,
    pub alpha_fdr: f64,
    /// Bootstrap copies for the multi-level tests; `None` uses the Gumbel limit.
    pub bootstrap_b: Option<usize>,
    /// Divide each column by its pooled within-sample standard deviation.
    pub standardize: bool,
    pub eta: f64,
    pub eta_star: f64,
    pub theta: Option<f64>,
    pub seed: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            method: PipelineMethod::TransformedMulti,
            alpha_fdr: 0.05,
            bootstrap_b: Some(DEFAULT_B),
            standardize: true,
            eta: DEFAULT_ETA,
            eta_star: DEFAULT_ETA_STAR,
            theta: None,
            seed: 20140101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: String,
    pub size: usize,
    pub method: Method,
    pub statistic: f64,
    pub p_raw: f64,
    pub bh_adjusted: f64,
    pub reject_at_fdr: bool,
    pub pvalue_source: PValueSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFailure {
    pub group: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    /// Sorted by ascending p-value, ties by group id.
    pub groups: Vec<GroupReport>,
    pub failures: Vec<GroupFailure>,
    pub skipped: Vec<(String, String)>,
}

/// Benjamini–Hochberg step-up. Returns adjusted p-values and decisions in
/// input order.
pub fn benjamini_hochberg(pvalues: &[f64], alpha: f64) -> (Vec<f64>, Vec<bool>) {
    let m = pvalues.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0_f64;
    for (rank, &i) in idx.iter().enumerate().rev() {
        running = running.min(pvalues[i] * m as f64 / (rank + 1) as f64);
        adjusted[i] = running;
    }
    let cut = idx
        .iter()
        .enumerate()
        .filter(|(rank, &i)| pvalues[i] <= (rank + 1) as f64 * alpha / m as f64)
        .map(|(rank, _)| rank + 1)
        .max()
        .unwrap_or(0);
    let mut reject = vec![false; m];
    for &i in &idx[..cut] {
        reject[i] = true;
    }
    (adjusted, reject)
}

fn scale_columns(data: &TwoSampleData) -> Result<TwoSampleData> {
    let (n1, n2) = (data.n1() as f64, data.n2() as f64);
    let v1 = column_variances(data.x1());
    let v2 = column_variances(data.x2());
    let sd: Vec<f64> = v1
        .iter()
        .zip(&v2)
        .map(|(a, b)| (((n1 - 1.0) * a + (n2 - 1.0) * b) / (n1 + n2 - 2.0)).sqrt())
        .collect();
    if let Some(k) = sd.iter().position(|&s| s <= 1e-12 || !s.is_finite()) {
        return Err(Error::DegenerateCoordinate {
            index: k,
            variance: sd[k] * sd[k],
            floor: 1e-24,
        });
    }
    let scale = |x: ndarray::ArrayView2<'_, f64>| {
        let mut x = x.to_owned();
        for (mut col, s) in x.columns_mut().into_iter().zip(&sd) {
            col /= *s;
        }
        x
    };
    TwoSampleData::new(scale(data.x1()), scale(data.x2()))
}

/// Runs one group's test: (statistic, p-value, source).
pub fn test_group(data: &TwoSampleData, opts: &PipelineOptions, seed: u64) -> Result<(f64, f64, PValueSource)> {
    let p = data.p();
    let std = if opts.standardize {
        Standardization::Estimated
    } else {
        Standardization::Unit
    };
    let band_seed = rng::derive_seed(&[seed, rng::purpose::BAND_SELECTION]);
    let boot_seed = rng::derive_seed(&[seed, rng::purpose::BOOTSTRAP]);
    match opts.method {
        PipelineMethod::Cq => {
            let cs = component_stats(data, &std)?;
            let out = cq_test(data, &cs, DEFAULT_VARIANCE_BAND.min(p - 1), opts.alpha_fdr)?;
            Ok((out.statistic, out.pvalue.ok_or(Error::NonFinite("CQ p-value"))?, PValueSource::Normal))
        }
        PipelineMethod::MultiThresh => {
            let cs = component_stats(data, &std)?;
            let value = multi_threshold_statistic(&cs, opts.eta, Variant::L2)?.value;
            match opts.bootstrap_b {
                None => Ok((value, gumbel_pvalue(value, p, opts.eta)?, PValueSource::Gumbel)),
                Some(b) => {
                    let tau = select_band_width_two_sample(data, None, DEFAULT_SPLITS, band_seed)?.tau;
                    let spec = BootstrapSpec {
                        method: BootstrapMethod::MultiThresh {
                            eta: opts.eta,
                            variant: Variant::L2,
                        },
                        b,
                        tau,
                        seed: boot_seed,
                        standardization: std,
                    };
                    let bn = bootstrap_null(data, &spec, Execution::Sequential)?;
                    Ok((value, bn.pvalue(value), PValueSource::Bootstrap))
                }
            }
        }
        PipelineMethod::TransformedMulti => {
            let scaled;
            let data = if opts.standardize {
                scaled = scale_columns(data)?;
                &scaled
            } else {
                data
            };
            let theta = opts.theta.unwrap_or_else(|| default_theta(data.n_eff(), p));
            let tau = select_band_width_two_sample(data, None, DEFAULT_SPLITS, band_seed)?.tau;
            let est = fit_banded_cholesky(data, tau)?;
            let tm = TransformedMeans::from_estimate(data, &est)?;
            let value = transformed_multi_threshold(&tm, theta, opts.eta_star)?.value;
            match opts.bootstrap_b {
                None => Ok((value, gumbel_pvalue(value, p, theta - opts.eta_star)?, PValueSource::Gumbel)),
                Some(b) => {
                    let spec = BootstrapSpec {
                        method: BootstrapMethod::TransformedMulti {
                            theta,
                            eta_star: opts.eta_star,
                            reselect: false,
                        },
                        b,
                        tau,
                        seed: boot_seed,
                        standardization: Standardization::Unit,
                    };
                    let bn = bootstrap_null(data, &spec, Execution::Sequential)?;
                    Ok((value, bn.pvalue(value), PValueSource::Bootstrap))
                }
            }
        }
    }
}

/// Tests every group and applies BH over the groups that were tested
/// successfully.
pub fn test_groups(ds: &GroupedDataset, opts: &PipelineOptions, exec: Execution) -> Result<PipelineReport> {
    if !(opts.alpha_fdr > 0.0 && opts.alpha_fdr < 1.0) {
        return Err(Error::out_of_range("alpha_fdr", opts.alpha_fdr, "in (0, 1)"));
    }
    let entries: Vec<(&String, &Vec<usize>)> = ds.groups.iter().collect();
    let results = exec.map(entries.len(), |i| {
        let (id, cols) = entries[i];
        let seed = rng::derive_seed(&[opts.seed, rng::purpose::GROUP, rng::hash_str(id)]);
        ds.group_data(cols).and_then(|d| test_group(&d, opts, seed))
    });

    let mut tested = Vec::new();
    let mut failures = Vec::new();
    for ((id, cols), res) in entries.into_iter().zip(results) {
        match res {
            Ok(r) if !r.1.is_nan() => tested.push((id.clone(), cols.len(), r)),
            Ok(_) => failures.push(GroupFailure {
                group: id.clone(),
                error: "p-value is NaN".into(),
            }),
            Err(e) => {
                log::warn!("group '{id}' failed: {e}");
                failures.push(GroupFailure {
                    group: id.clone(),
                    error: e.to_string(),
                })
            }
        }
    }

    let pvals: Vec<f64> = tested.iter().map(|t| t.2 .1).collect();
    let (adjusted, reject) = benjamini_hochberg(&pvals, opts.alpha_fdr);
    let mut groups: Vec<GroupReport> = tested
        .into_iter()
        .enumerate()
        .map(|(i, (group, size, (statistic, p_raw, source)))| GroupReport {
            group,
            size,
            method: opts.method.method(),
            statistic,
            p_raw,
            bh_adjusted: adjusted[i],
            reject_at_fdr: reject[i],
            pvalue_source: source,
        })
        .collect();
    groups.sort_by(|a, b| a.p_raw.total_cmp(&b.p_raw).then_with(|| a.group.cmp(&b.group)));
    Ok(PipelineReport {
        groups,
        failures,
        skipped: ds.skipped.clone(),
    })
}

pub const REPORT_HEADER: [&str; 8] = [
    "group",
    "size",
    "method",
    "statistic",
    "p_raw",
    "bh_adjusted",
    "reject_at_fdr",
    "pvalue_source",
];

/// CSV holds the tested groups only; JSON holds the full report.
pub fn write_report<W: std::io::Write>(report: &PipelineReport, w: W, format: Format) -> Result<()> {
    let out: &Path = Path::new("<output>");
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(w, report)?;
            Ok(())
        }
        Format::Csv => {
            let mut wr = csv::Writer::from_writer(w);
            wr.write_record(REPORT_HEADER).map_err(csv_err(out))?;
            for g in &report.groups {
                let source = match g.pvalue_source {
                    PValueSource::Normal => "normal",
                    PValueSource::Gumbel => "gumbel",
                    PValueSource::ExtremeValue => "extremevalue",
                    PValueSource::Bootstrap => "bootstrap",
                };
                wr.write_record([
                    g.group.clone(),
                    g.size.to_string(),
                    g.method.name().to_string(),
                    g.statistic.to_string(),
                    g.p_raw.to_string(),
                    g.bh_adjusted.to_string(),
                    g.reject_at_fdr.to_string(),
                    source.to_string(),
                ])
                .map_err(csv_err(out))?;
            }
            wr.flush().map_err(io_err(out))?;
            Ok(())
        }
    }
}
