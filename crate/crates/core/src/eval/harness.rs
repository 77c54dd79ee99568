//! Seeded multi-run experiment: split, train, score, summarize.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::auc::{orientation_free_auc, roc_auc};
use super::significance::{mean, sample_std, significance};
use crate::data::{
    gen_synthetic, vertical_split, EncodedDataset, PartyViews, SyntheticPreset, SyntheticSpec,
};
use crate::ftl::{predict_ftl, train_ftl, ExtractorSpec, HyperParams, PartyA, PartyB, TraceRecord};
use crate::udl::{run_udl, UdlConfig};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "FTL")]
    Ftl,
    #[serde(rename = "UDL")]
    Udl,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ftl => "FTL",
            Method::Udl => "UDL",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ftl" => Ok(Method::Ftl),
            "udl" => Ok(Method::Udl),
            _ => Err(Error::Config(format!(
                "unknown method `{s}` (expected FTL or UDL)"
            ))),
        }
    }
}

/// Where each run's samples come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Regenerated for every run from that run's seed.
    Synthetic(SyntheticSpec),
    /// Shared by all runs; only the split changes.
    Dataset(Arc<EncodedDataset>),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset_name: String,
    pub source: DataSource,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub overlap_frac: f64,
    pub methods: Vec<Method>,
    pub runs: usize,
    pub base_seed: u64,
    pub workers: usize,
    pub hyper: HyperParams,
    pub extractor: ExtractorSpec,
    pub udl: UdlConfig,
    /// Significance levels, in percent.
    pub p_values: Vec<f64>,
}

pub const DEFAULT_RUNS: usize = 30;
pub const DEFAULT_P_VALUES: [f64; 3] = [1.0, 3.0, 5.0];

impl ExperimentConfig {
    pub fn from_preset(preset: &SyntheticPreset) -> Self {
        ExperimentConfig {
            dataset_name: preset.name.to_string(),
            source: DataSource::Synthetic(preset.spec),
            n_labeled: preset.n_labeled,
            n_unlabeled: preset.n_unlabeled,
            overlap_frac: preset.overlap_frac,
            methods: vec![Method::Ftl, Method::Udl],
            runs: DEFAULT_RUNS,
            base_seed: 0,
            workers: 1,
            hyper: HyperParams::default(),
            extractor: ExtractorSpec::default(),
            udl: UdlConfig::default(),
            p_values: DEFAULT_P_VALUES.to_vec(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("run count must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if let Some(p) = self.p_values.iter().find(|p| !(**p > 0.0 && **p < 100.0)) {
            return Err(Error::Config(format!("p value {p} outside (0, 100)")));
        }
        self.hyper.validate()
    }

    /// Seed of run `r`.
    pub fn run_seed(&self, run: usize) -> u64 {
        self.base_seed.wrapping_add(run as u64)
    }
}

/// One row of a plot-ready trace. UDL rows only carry `total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub run: usize,
    pub iteration: usize,
    pub j_b: Option<f64>,
    pub j_ab: Option<f64>,
    pub j_a_reg: Option<f64>,
    pub j_b_reg: Option<f64>,
    pub total: f64,
}

impl TraceRow {
    pub fn from_ftl(run: usize, r: &TraceRecord) -> Self {
        TraceRow {
            run,
            iteration: r.iteration,
            j_b: Some(r.loss.j_b),
            j_ab: Some(r.loss.j_ab),
            j_a_reg: Some(r.loss.j_a_reg),
            j_b_reg: Some(r.loss.j_b_reg),
            total: r.loss.total,
        }
    }

    /// One row per epoch, numbered from 1.
    pub fn from_udl(run: usize, errors: &[f64]) -> Vec<Self> {
        errors
            .iter()
            .enumerate()
            .map(|(e, &total)| TraceRow {
                run,
                iteration: e + 1,
                j_b: None,
                j_ab: None,
                j_a_reg: None,
                j_b_reg: None,
                total,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAuc {
    pub run: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigEntry {
    pub p: f64,
    pub confidence: f64,
    pub sig: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: Vec<RunAuc>,
    pub mean_auc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub significance: Option<Vec<SigEntry>>,
}

impl MethodSummary {
    pub fn aucs(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.auc).collect()
    }

    pub fn sig(&self, p: f64) -> Option<f64> {
        self.significance
            .as_ref()?
            .iter()
            .find(|e| e.p == p)
            .map(|e| e.sig)
    }
}

/// AUC values are fractions in `[0, 1]`; the CSV rendering shows percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub dataset: String,
    pub base_seed: u64,
    pub methods: Vec<MethodSummary>,
}

impl SignificanceReport {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    /// `dataset,method,p,sig,mean_auc,std_auc` with AUC quantities in percent.
    /// Single-run reports leave `p`, `sig` and `std_auc` empty.
    pub fn to_csv(&self) -> String {
        let pct = |v: f64| format!("{}", v * 100.0);
        let mut out = String::from("dataset,method,p,sig,mean_auc,std_auc\n");
        for s in &self.methods {
            let std = s.std_auc.map(pct).unwrap_or_default();
            match &s.significance {
                Some(entries) => {
                    for e in entries {
                        out.push_str(&format!(
                            "{},{},{},{},{},{}\n",
                            self.dataset,
                            s.method,
                            e.p,
                            pct(e.sig),
                            pct(s.mean_auc),
                            std
                        ));
                    }
                }
                None => out.push_str(&format!(
                    "{},{},,,{},{}\n",
                    self.dataset,
                    s.method,
                    pct(s.mean_auc),
                    std
                )),
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn write_trace_csv(rows: &[TraceRow], path: &Path) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("run,iteration,j_b,j_ab,j_a_reg,j_b_reg,total\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.run,
            r.iteration,
            opt(r.j_b),
            opt(r.j_ab),
            opt(r.j_a_reg),
            opt(r.j_b_reg),
            r.total
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: SignificanceReport,
    pub ftl_traces: Vec<TraceRow>,
    pub udl_traces: Vec<TraceRow>,
}

impl ExperimentOutput {
    /// Writes `report.csv`, `report.json`, `trace_ftl.csv` and `trace_udl.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.csv"), self.report.to_csv())?;
        std::fs::write(dir.join("report.json"), self.report.to_json()?)?;
        write_trace_csv(&self.ftl_traces, &dir.join("trace_ftl.csv"))?;
        write_trace_csv(&self.udl_traces, &dir.join("trace_udl.csv"))?;
        Ok(())
    }
}

/// AUC of FTL on B's evaluation rows, plus the training trace.
pub fn run_ftl_once(
    views: &PartyViews,
    hyper: &HyperParams,
    extractor: &ExtractorSpec,
    seed: u64,
) -> Result<(f64, Vec<TraceRecord>)> {
    let model_a = extractor.init(views.a.x.cols(), rng::derive(seed, "model-a"))?;
    let model_b = extractor.init(views.b.x.cols(), rng::derive(seed, "model-b"))?;
    let mut a = PartyA::new(model_a, views.a.clone(), views.overlap_a.clone())?;
    let mut b = PartyB::new(model_b, views.b.clone(), views.overlap_b.clone())?;
    let trace = train_ftl(&mut a, &mut b, hyper)?;
    let x_eval = views.b.x.select_rows(views.sealed.eval_rows())?;
    let pred = predict_ftl(&a, &b, &x_eval)?;
    let auc = roc_auc(&pred.scores, &views.sealed.eval_labels())?.auc;
    Ok((auc, trace))
}

/// Orientation-free AUC of the baseline on B's evaluation rows, plus the
/// reconstruction trace. The baseline trains on all of B's samples.
pub fn run_udl_once(views: &PartyViews, cfg: &UdlConfig, seed: u64) -> Result<(f64, Vec<f64>)> {
    let out = run_udl(&views.b.x, cfg, seed)?;
    let scores: Vec<f64> = views
        .sealed
        .eval_rows()
        .iter()
        .map(|&i| out.scores[i])
        .collect();
    let auc = orientation_free_auc(&scores, &views.sealed.eval_labels())?;
    Ok((auc, out.trace))
}

fn views_for_run(cfg: &ExperimentConfig, seed: u64) -> Result<PartyViews> {
    let generated;
    let ds: &EncodedDataset = match &cfg.source {
        DataSource::Synthetic(spec) => {
            generated = gen_synthetic(spec, seed)?;
            &generated
        }
        DataSource::Dataset(ds) => ds,
    };
    let plan = vertical_split(ds, cfg.n_labeled, cfg.n_unlabeled, cfg.overlap_frac, seed)?;
    plan.materialize(ds)
}

struct MethodRun {
    auc: Result<f64>,
    trace: Vec<TraceRow>,
}

fn run_once(cfg: &ExperimentConfig, run: usize) -> Vec<(Method, MethodRun)> {
    let seed = cfg.run_seed(run);
    let views = views_for_run(cfg, seed);
    cfg.methods
        .iter()
        .map(|&m| {
            let views = match &views {
                Ok(v) => v,
                Err(e) => {
                    return (
                        m,
                        MethodRun {
                            auc: Err(Error::Harness(format!("split failed: {e}"))),
                            trace: Vec::new(),
                        },
                    )
                }
            };
            let outcome = match m {
                Method::Ftl => run_ftl_once(views, &cfg.hyper, &cfg.extractor, seed)
                    .map(|(auc, t)| (auc, t.iter().map(|r| TraceRow::from_ftl(run, r)).collect())),
                Method::Udl => run_udl_once(views, &cfg.udl, seed)
                    .map(|(auc, t)| (auc, TraceRow::from_udl(run, &t))),
            };
            let run_result = match outcome {
                Ok((auc, trace)) => {
                    log::info!("run {run} (seed {seed}) {m}: AUC {auc:.4}");
                    MethodRun {
                        auc: Ok(auc),
                        trace,
                    }
                }
                Err(e) => {
                    log::warn!("run {run} (seed {seed}) {m} failed: {e}");
                    MethodRun {
                        auc: Err(e),
                        trace: Vec::new(),
                    }
                }
            };
            (m, run_result)
        })
        .collect()
}

/// Minimum successful runs needed to publish a report: five in six.
pub fn required_successes(runs: usize) -> usize {
    (5 * runs).div_ceil(6)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| Error::Harness(format!("cannot start worker pool: {e}")))?;
    let per_run: Vec<Vec<(Method, MethodRun)>> = pool.install(|| {
        (0..cfg.runs)
            .into_par_iter()
            .map(|r| run_once(cfg, r))
            .collect()
    });

    let mut summaries = Vec::new();
    let mut ftl_traces = Vec::new();
    let mut udl_traces = Vec::new();
    for &m in &cfg.methods {
        let mut runs = Vec::with_capacity(cfg.runs);
        for (r, results) in per_run.iter().enumerate() {
            let (_, res) = results
                .iter()
                .find(|(mm, _)| *mm == m)
                .expect("method present");
            match m {
                Method::Ftl => ftl_traces.extend(res.trace.iter().cloned()),
                Method::Udl => udl_traces.extend(res.trace.iter().cloned()),
            }
            runs.push(RunAuc {
                run: r,
                seed: cfg.run_seed(r),
                auc: res.auc.as_ref().ok().copied(),
                error: res.auc.as_ref().err().map(|e| e.to_string()),
            });
        }
        let aucs: Vec<f64> = runs.iter().filter_map(|r| r.auc).collect();
        let need = required_successes(cfg.runs);
        if aucs.len() < need {
            let failed: Vec<String> = runs
                .iter()
                .filter(|r| r.error.is_some())
                .map(|r| format!("seed {}: {}", r.seed, r.error.as_deref().unwrap_or("")))
                .collect();
            return Err(Error::Harness(format!(
                "{m}: only {} of {} runs succeeded (need {need}); {}",
                aucs.len(),
                cfg.runs,
                failed.join("; ")
            )));
        }
        let (std_auc, sig) = if aucs.len() >= 2 {
            let entries = cfg
                .p_values
                .iter()
                .map(|&p| {
                    Ok(SigEntry {
                        p,
                        confidence: 1.0 - p / 100.0,
                        sig: significance(&aucs, p)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (Some(sample_std(&aucs)?), Some(entries))
        } else {
            (None, None)
        };
        summaries.push(MethodSummary {
            method: m,
            runs,
            mean_auc: mean(&aucs),
            std_auc,
            significance: sig,
        });
    }
    Ok(ExperimentOutput {
        report: SignificanceReport {
            dataset: cfg.dataset_name.clone(),
            base_seed: cfg.base_seed,
            methods: summaries,
        },
        ftl_traces,
        udl_traces,
    })
}
