//! Flag > config file > built-in default resolution.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use fedxfer::data::{
    bundled_schema, encode_features, gen_synthetic, load_csv, preset, DatasetSchema,
    EncodedDataset, SyntheticPreset,
};
use fedxfer::eval::{DataSource, Method, DEFAULT_RUNS};
use fedxfer::ftl::{ExtractorSpec, HyperParams};
use fedxfer::udl::UdlConfig;
use serde::Deserialize;

use crate::args::{Case, CommonArgs, DataArgs, HyperArgs};

/// Marks errors that should exit with the usage status.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub synthetic: Option<String>,
    pub data: Option<PathBuf>,
    pub schema: Option<String>,
    pub case: Option<String>,
    pub labeled: Option<usize>,
    pub unlabeled: Option<usize>,
    pub overlap: Option<f64>,
    pub hyper: Option<HyperParams>,
    pub extractor: Option<ExtractorSpec>,
    pub udl: Option<UdlConfig>,
    pub runs: Option<usize>,
    pub workers: Option<usize>,
    pub methods: Option<Vec<String>>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("bad config {}: {e}", path.display())).into())
    }
}

#[derive(Debug, Clone)]
pub enum Source {
    Synthetic(SyntheticPreset),
    File {
        path: PathBuf,
        schema: DatasetSchema,
    },
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub seed: u64,
    pub source: Source,
    pub labeled: usize,
    pub unlabeled: usize,
    pub overlap: f64,
    pub hyper: HyperParams,
    pub extractor: ExtractorSpec,
    pub udl: UdlConfig,
    pub runs: usize,
    pub workers: usize,
    pub methods: Vec<Method>,
}

fn parse_case(s: &str) -> anyhow::Result<Case> {
    match s.to_ascii_uppercase().as_str() {
        "CASE1" => Ok(Case::Case1),
        "CASE2" => Ok(Case::Case2),
        _ => usage(format!("unknown case `{s}` (expected CASE1 or CASE2)")),
    }
}

pub fn resolve_schema(name: &str) -> anyhow::Result<DatasetSchema> {
    let path = Path::new(name);
    if path.extension().is_some_and(|e| e == "json") || path.is_file() {
        Ok(DatasetSchema::load(path)?)
    } else {
        Ok(bundled_schema(name)?)
    }
}

fn apply_hyper(mut h: HyperParams, flags: &HyperArgs) -> anyhow::Result<HyperParams> {
    if let Some(v) = flags.lr {
        h.learning_rate = v;
    }
    if let Some(v) = flags.gamma {
        h.gamma = v;
    }
    if let Some(v) = flags.lambda {
        h.lambda = v;
    }
    if let Some(v) = flags.max_iter {
        h.max_iter = v;
        if flags.warmup.is_none() && h.warmup >= v {
            h.warmup = v.saturating_sub(1);
        }
    }
    if let Some(v) = flags.tolerance {
        h.tolerance = v;
    }
    if let Some(v) = flags.warmup {
        h.warmup = v;
    }
    if let Some(v) = &flags.alignment {
        h.alignment = v
            .parse()
            .map_err(|e: fedxfer::Error| UsageError(e.to_string()))?;
    }
    if flags.faithful_exchange {
        h.exchange_gradients = true;
    }
    h.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(h)
}

pub fn resolve(
    common: &CommonArgs,
    data: &DataArgs,
    hyper: Option<&HyperArgs>,
) -> anyhow::Result<Resolved> {
    let file = FileConfig::load(common.config.as_deref())?;
    let seed = common.seed.or(file.seed).unwrap_or(0);

    let flag_source = data.synthetic.is_some() || data.data.is_some();
    let (synthetic, data_path, schema) = if flag_source {
        (
            data.synthetic.clone(),
            data.data.clone(),
            data.schema.clone(),
        )
    } else {
        (
            file.synthetic.clone(),
            file.data.clone(),
            data.schema.clone().or(file.schema.clone()),
        )
    };
    let (source, default_sizes) = match (synthetic, data_path) {
        (Some(name), None) => {
            let p = preset(&name).map_err(|e| UsageError(e.to_string()))?;
            (
                Source::Synthetic(p),
                (p.n_labeled, p.n_unlabeled, p.overlap_frac),
            )
        }
        (None, Some(path)) => {
            let Some(schema) = schema else {
                return usage("--data needs --schema");
            };
            let schema = resolve_schema(&schema)?;
            let (l, u) = Case::Case1.sizes();
            (Source::File { path, schema }, (l, u, 0.1))
        }
        (Some(_), Some(_)) => {
            return usage("give either a synthetic preset or a data file, not both")
        }
        (None, None) => {
            return usage("no dataset: pass --synthetic PRESET or --data FILE --schema S")
        }
    };

    let case = match (data.case, &file.case) {
        (Some(c), _) => Some(c),
        (None, Some(s)) if data.labeled.is_none() && data.unlabeled.is_none() => {
            Some(parse_case(s)?)
        }
        _ => None,
    };
    let (mut labeled, mut unlabeled, _) = default_sizes;
    if let Some(c) = case {
        (labeled, unlabeled) = c.sizes();
    } else {
        labeled = data.labeled.or(file.labeled).unwrap_or(labeled);
        unlabeled = data.unlabeled.or(file.unlabeled).unwrap_or(unlabeled);
    }
    let overlap = data.overlap.or(file.overlap).unwrap_or(default_sizes.2);

    let base_hyper = file.hyper.unwrap_or_default();
    let hyper = match hyper {
        Some(flags) => apply_hyper(base_hyper, flags)?,
        None => base_hyper,
    };

    let methods = match &file.methods {
        Some(ms) => check_methods(ms)?,
        None => vec![Method::Ftl, Method::Udl],
    };

    Ok(Resolved {
        seed,
        source,
        labeled,
        unlabeled,
        overlap,
        hyper,
        extractor: file.extractor.clone().unwrap_or_default(),
        udl: file.udl.clone().unwrap_or_default(),
        runs: file.runs.unwrap_or(DEFAULT_RUNS),
        workers: file.workers.unwrap_or(1),
        methods,
    })
}

impl Resolved {
    pub fn dataset_name(&self) -> String {
        match &self.source {
            Source::Synthetic(p) => p.name.to_string(),
            Source::File { schema, .. } => schema.name.clone(),
        }
    }

    /// The dataset a single (non-repeated) command works on.
    pub fn load(&self) -> anyhow::Result<EncodedDataset> {
        match &self.source {
            Source::Synthetic(p) => Ok(gen_synthetic(&p.spec, self.seed)?),
            Source::File { path, schema } => {
                let raw = load_csv(path, schema)
                    .with_context(|| format!("loading {}", path.display()))?;
                log::info!(
                    "{}: {} rows kept, {} rejected",
                    path.display(),
                    raw.rows.len(),
                    raw.rejects.len()
                );
                Ok(encode_features(&raw)?.0)
            }
        }
    }

    pub fn data_source(&self) -> anyhow::Result<DataSource> {
        Ok(match &self.source {
            Source::Synthetic(p) => DataSource::Synthetic(p.spec),
            Source::File { .. } => DataSource::Dataset(Arc::new(self.load()?)),
        })
    }
}

pub fn check_methods(ms: &[String]) -> anyhow::Result<Vec<Method>> {
    let mut out = Vec::new();
    for m in ms {
        match m.parse::<Method>() {
            Ok(m) if !out.contains(&m) => out.push(m),
            Ok(_) => {}
            Err(e) => return usage(e.to_string()),
        }
    }
    if out.is_empty() {
        bail!(UsageError("no methods selected".into()));
    }
    Ok(out)
}
