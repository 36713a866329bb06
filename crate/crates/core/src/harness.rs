//! Monte Carlo benchmark harness: repeated draws from a simulation design,
//! a panel of estimators per draw, and robust (median-type) summary tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{generate, oracle_theta, theta_fixture, DgpSpec, OracleDraw, Setting};
use crate::estimators::{
    estimate_mqr, estimate_oracle, estimate_otr_prime, estimate_qr, estimate_tr_discrete,
    EstimateReport, LambdaRule, MqrOptions, MqrVariant, OtrOptions, QrOptions, QrVariant,
};
use crate::forest::ForestOpts;
use crate::math::{derive_seed, median};
use crate::{Error, Result};

/// Estimator panel entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Oracle,
    Qr(QrVariant),
    Mqr(MqrVariant),
    OtrPrime,
    TrDiscrete,
    /// Constant-zero estimator with a zero-length interval; exercises the
    /// failure accounting and coverage bookkeeping in tests.
    DegenerateZero,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Oracle => "Oracle",
            Method::Qr(QrVariant::Thirds) => "QR1",
            Method::Qr(QrVariant::Full) => "QR2",
            Method::Mqr(MqrVariant::FiveWay) => "MQR1",
            Method::Mqr(MqrVariant::Full) => "MQR2",
            Method::OtrPrime => "O-TR'",
            Method::TrDiscrete => "TR",
            Method::DegenerateZero => "Degenerate0",
        }
    }

    pub fn parse(name: &str) -> Option<Method> {
        match name.to_ascii_lowercase().as_str() {
            "oracle" => Some(Method::Oracle),
            "qr1" => Some(Method::Qr(QrVariant::Thirds)),
            "qr2" => Some(Method::Qr(QrVariant::Full)),
            "mqr1" => Some(Method::Mqr(MqrVariant::FiveWay)),
            "mqr2" => Some(Method::Mqr(MqrVariant::Full)),
            "otr" | "o-tr'" | "otr_prime" => Some(Method::OtrPrime),
            "tr" => Some(Method::TrDiscrete),
            _ => None,
        }
    }
}

/// Where the ground truth for bias/coverage columns comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum TruthSource {
    /// The frozen per-setting fixture.
    Fixture,
    /// A fresh counterfactual Monte Carlo run of the given size.
    Recompute { n_mc: usize },
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Template draw spec; `n` is overridden by `n_values` and the seed by
    /// per-replication derived seeds.
    pub dgp: DgpSpec,
    pub n_values: Vec<usize>,
    pub methods: Vec<Method>,
    pub repetitions: usize,
    pub level: f64,
    pub theta_truth: TruthSource,
    pub seed: u64,
    pub k_folds: usize,
    pub forest: ForestOpts,
    pub lambda: LambdaRule,
    pub eps: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::validation("experiment needs at least one replication"));
        }
        if self.methods.is_empty() {
            return Err(Error::validation("experiment needs at least one method"));
        }
        if self.n_values.is_empty() {
            return Err(Error::validation("experiment needs at least one sample size"));
        }
        Ok(())
    }
}

/// One `(method, n)` summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub n: usize,
    pub bias: f64,
    pub rmse: f64,
    pub al: f64,
    pub ac: f64,
    pub n_failures: usize,
    /// False when more than 20% of replications failed; the metrics then
    /// summarize only the surviving runs.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub theta_truth: f64,
    /// Root of the median squared error; recorded so table readers know
    /// which robust RMSE convention produced the numbers.
    pub rmse_formula: String,
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn row(&self, method: &str, n: usize) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.method == method && r.n == n)
    }
}

/// Robust summary of one method's replications: median bias, root median
/// squared error, median interval length, and mean coverage.
pub fn robust_metrics(
    estimates: &[f64],
    ci_pairs: &[(f64, f64)],
    theta_truth: f64,
) -> (f64, f64, f64, f64) {
    assert!(!estimates.is_empty() && estimates.len() == ci_pairs.len());
    let bias = median(estimates) - theta_truth;
    let sq: Vec<f64> = estimates.iter().map(|e| (e - theta_truth) * (e - theta_truth)).collect();
    let rmse = median(&sq).sqrt();
    let lengths: Vec<f64> = ci_pairs.iter().map(|(lo, hi)| hi - lo).collect();
    let al = median(&lengths);
    let covered = ci_pairs
        .iter()
        .filter(|(lo, hi)| *lo <= theta_truth && theta_truth <= *hi)
        .count();
    let ac = covered as f64 / ci_pairs.len() as f64;
    (bias, rmse, al, ac)
}

fn run_method(
    method: Method,
    draw: &OracleDraw,
    cfg: &ExperimentConfig,
    est_seed: u64,
) -> Result<EstimateReport> {
    let ds = &draw.dataset;
    match method {
        Method::Oracle => estimate_oracle(ds, &draw.truth, cfg.eps, cfg.level),
        Method::Qr(variant) => estimate_qr(
            ds,
            &QrOptions {
                k_folds: cfg.k_folds,
                variant,
                forest: cfg.forest.clone(),
                eps: cfg.eps,
                level: cfg.level,
                seed: est_seed,
            },
        ),
        Method::Mqr(variant) => estimate_mqr(
            ds,
            &MqrOptions {
                k_folds: cfg.k_folds,
                variant,
                lambda: cfg.lambda.clone(),
                eps: cfg.eps,
                level: cfg.level,
                seed: est_seed,
                ..Default::default()
            },
        ),
        Method::OtrPrime => estimate_otr_prime(
            ds,
            &OtrOptions {
                k_folds: cfg.k_folds,
                eps: cfg.eps,
                level: cfg.level,
                seed: est_seed,
                ..Default::default()
            },
        ),
        Method::TrDiscrete => {
            estimate_tr_discrete(ds, cfg.k_folds, &cfg.forest, cfg.eps, cfg.level, est_seed)
        }
        Method::DegenerateZero => {
            EstimateReport::from_scores(vec![0.0; ds.n()], cfg.level, "Degenerate0")
        }
    }
}

/// Resolves the ground-truth mean for the configured design.
pub fn resolve_truth(cfg: &ExperimentConfig) -> Result<f64> {
    match cfg.theta_truth {
        TruthSource::Fixture => Ok(theta_fixture(cfg.dgp.setting).theta),
        TruthSource::Recompute { n_mc } => {
            let (theta, _se) = oracle_theta(&cfg.dgp, n_mc, derive_seed(cfg.seed, 0x72, 0))?;
            Ok(theta)
        }
    }
}

/// Runs the full experiment grid. Replications are independent tasks;
/// results are merged in replication order, so the output is identical for
/// any parallelism level.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsTable> {
    cfg.validate()?;
    let theta_truth = resolve_truth(cfg)?;
    let mut rows = Vec::new();
    for (n_idx, &n) in cfg.n_values.iter().enumerate() {
        // rep -> per-method outcome
        let results: Vec<Vec<Option<(f64, f64, f64)>>> = (0..cfg.repetitions)
            .into_par_iter()
            .map(|rep| {
                let tag = (n_idx as u64) << 32 | rep as u64;
                let spec = DgpSpec {
                    n,
                    seed: derive_seed(cfg.seed, 0xDA7A, tag),
                    ..cfg.dgp.clone()
                };
                let draw = match generate(&spec) {
                    Ok(d) => d,
                    Err(_) => return vec![None; cfg.methods.len()],
                };
                let est_seed = derive_seed(cfg.seed, 0xE57, tag);
                cfg.methods
                    .iter()
                    .map(|&m| {
                        run_method(m, &draw, cfg, est_seed)
                            .ok()
                            .map(|r| (r.theta_hat, r.ci_low, r.ci_high))
                    })
                    .collect()
            })
            .collect();

        for (mi, method) in cfg.methods.iter().enumerate() {
            let mut estimates = Vec::new();
            let mut cis = Vec::new();
            let mut failures = 0usize;
            for rep_result in &results {
                match rep_result[mi] {
                    Some((theta, lo, hi)) => {
                        estimates.push(theta);
                        cis.push((lo, hi));
                    }
                    None => failures += 1,
                }
            }
            let valid = failures * 5 <= cfg.repetitions; // > 20% failed => invalid
            let (bias, rmse, al, ac) = if estimates.is_empty() {
                (0.0, 0.0, 0.0, 0.0)
            } else {
                robust_metrics(&estimates, &cis, theta_truth)
            };
            rows.push(MetricsRow {
                method: method.label().to_string(),
                n,
                bias,
                rmse,
                al,
                ac,
                n_failures: failures,
                valid: valid && !estimates.is_empty(),
            });
        }
    }
    Ok(MetricsTable {
        theta_truth,
        rmse_formula: "sqrt(median(squared_error))".to_string(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
    JsonLines,
}

/// Renders the table; display formats round to 3 decimals, the json-lines
/// form is full precision and parses back losslessly.
pub fn emit_table(table: &MetricsTable, format: TableFormat) -> String {
    match format {
        TableFormat::Markdown => {
            let mut out = String::new();
            let mut ns: Vec<usize> = table.rows.iter().map(|r| r.n).collect();
            ns.dedup();
            for n in ns {
                out.push_str(&format!(
                    "### N = {n} (truth {:.3})\n\n| Method | Bias | RMSE | AL | AC |\n|---|---|---|---|---|\n",
                    table.theta_truth
                ));
                for r in table.rows.iter().filter(|r| r.n == n) {
                    let flag = if r.valid { "" } else { " (invalid)" };
                    out.push_str(&format!(
                        "| {}{flag} | {:.3} | {:.3} | {:.3} | {:.3} |\n",
                        r.method, r.bias, r.rmse, r.al, r.ac
                    ));
                }
                out.push('\n');
            }
            out
        }
        TableFormat::Csv => {
            let mut out = String::from("method,n,bias,rmse,al,ac,n_failures,valid\n");
            for r in &table.rows {
                out.push_str(&format!(
                    "{},{},{:.3},{:.3},{:.3},{:.3},{},{}\n",
                    r.method, r.n, r.bias, r.rmse, r.al, r.ac, r.n_failures, r.valid
                ));
            }
            out
        }
        TableFormat::JsonLines => {
            let mut out = String::new();
            let meta = serde_json::json!({
                "theta_truth": table.theta_truth,
                "rmse_formula": table.rmse_formula,
            });
            out.push_str(&meta.to_string());
            out.push('\n');
            for r in &table.rows {
                out.push_str(&serde_json::to_string(r).expect("row serializes"));
                out.push('\n');
            }
            out
        }
    }
}

/// Parses the json-lines form back into a table.
pub fn parse_jsonl(text: &str) -> Result<MetricsTable> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let meta_line = lines
        .next()
        .ok_or_else(|| Error::parse("jsonl:1", "empty metrics stream"))?;
    let meta: serde_json::Value = serde_json::from_str(meta_line)
        .map_err(|e| Error::parse("jsonl:1", e.to_string()))?;
    let theta_truth = meta
        .get("theta_truth")
        .and_then(|v| v.as_f64())
        .ok_or_else(|| Error::parse("jsonl:1", "missing theta_truth"))?;
    let rmse_formula = meta
        .get("rmse_formula")
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .to_string();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: MetricsRow = serde_json::from_str(line)
            .map_err(|e| Error::parse(format!("jsonl:{}", i + 2), e.to_string()))?;
        rows.push(row);
    }
    Ok(MetricsTable { theta_truth, rmse_formula, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableId {
    T1,
    T2,
    T3,
}

impl TableId {
    pub fn parse(s: &str) -> Option<TableId> {
        match s.to_ascii_lowercase().as_str() {
            "t1" => Some(TableId::T1),
            "t2" => Some(TableId::T2),
            "t3" => Some(TableId::T3),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TableId::T1 => "t1",
            TableId::T2 => "t2",
            TableId::T3 => "t3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleId {
    /// Reduced dimensions and replication counts; finishes on a desktop.
    Desk,
    /// Full dimensions and 100 replications; long runtime.
    Paper,
}

impl ScaleId {
    pub fn parse(s: &str) -> Option<ScaleId> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Some(ScaleId::Desk),
            "paper" => Some(ScaleId::Paper),
            _ => None,
        }
    }
}

/// Benchmark-table configurations. Desk scale pins the reduced settings the
/// acceptance suite checks; paper scale runs the full-size designs.
pub fn reproduction_config(table: TableId, scale: ScaleId, seed: u64) -> ExperimentConfig {
    let (setting, d1, d2) = match table {
        TableId::T1 => (Setting::S1, 101, 50),
        TableId::T2 => (Setting::S2, 101, 50),
        TableId::T3 => (Setting::S3, 50, 1),
    };
    let base = ExperimentConfig {
        dgp: DgpSpec::new(setting, 1000, d1, d2, 0),
        n_values: vec![600, 1000, 1400, 1800],
        methods: vec![],
        repetitions: 100,
        level: 0.95,
        theta_truth: TruthSource::Fixture,
        seed,
        k_folds: 5,
        forest: ForestOpts::default(),
        lambda: LambdaRule::default(),
        eps: 0.01,
    };
    match (table, scale) {
        (TableId::T3, ScaleId::Desk) => ExperimentConfig {
            methods: vec![
                Method::Oracle,
                Method::TrDiscrete,
                Method::OtrPrime,
                Method::Qr(QrVariant::Full),
                Method::Mqr(MqrVariant::Full),
            ],
            n_values: vec![1000],
            repetitions: 50,
            ..base
        },
        (TableId::T3, ScaleId::Paper) => ExperimentConfig {
            methods: vec![
                Method::Oracle,
                Method::TrDiscrete,
                Method::OtrPrime,
                Method::Qr(QrVariant::Thirds),
                Method::Qr(QrVariant::Full),
                Method::Mqr(MqrVariant::FiveWay),
                Method::Mqr(MqrVariant::Full),
            ],
            ..base
        },
        (TableId::T2, ScaleId::Desk) => ExperimentConfig {
            dgp: DgpSpec::new(Setting::S2, 1000, 41, 10, 0),
            methods: vec![Method::Oracle, Method::OtrPrime, Method::Mqr(MqrVariant::Full)],
            n_values: vec![1000],
            repetitions: 50,
            ..base
        },
        (TableId::T1, ScaleId::Desk) => ExperimentConfig {
            dgp: DgpSpec::new(Setting::S1, 1000, 41, 10, 0),
            methods: vec![
                Method::Oracle,
                Method::OtrPrime,
                Method::Qr(QrVariant::Full),
                Method::Mqr(MqrVariant::Full),
            ],
            n_values: vec![1000],
            repetitions: 25,
            ..base
        },
        (_, ScaleId::Paper) => ExperimentConfig {
            methods: vec![
                Method::Oracle,
                Method::OtrPrime,
                Method::Qr(QrVariant::Thirds),
                Method::Qr(QrVariant::Full),
                Method::Mqr(MqrVariant::FiveWay),
                Method::Mqr(MqrVariant::Full),
            ],
            ..base
        },
    }
}
