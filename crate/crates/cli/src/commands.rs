use std::fs;
use std::path::Path;
use std::time::Duration;

use anyhow::Context;
use fedxfer::data::{gen_synthetic, preset, vertical_split, PartyViews, SplitPlan};
use fedxfer::eval::{
    orientation_free_auc, roc_auc, run_experiment, write_trace_csv, ExperimentConfig,
    SignificanceReport, TraceRow, DEFAULT_P_VALUES,
};
use fedxfer::ftl::{
    predict_ftl, request_predictions, run_party_a, run_party_b, serve_predictions, train_ftl,
    Prediction, TraceRecord,
};
use fedxfer::rng;
use fedxfer::transport::{TcpAcceptor, TcpChannel};
use fedxfer::udl::run_udl;
use fedxfer::{MlpModel, PartyA, PartyB};
use serde::Serialize;

use crate::args::{
    Command, ExperimentArgs, GenDataArgs, ReportArgs, RunArgs, ServeAArgs, ServeBArgs, TrainArgs,
};
use crate::config::{check_methods, resolve, Resolved};

pub fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::GenData(a) => gen_data(&a),
        Command::Split(a) => split(&a),
        Command::TrainFtl(a) => train_ftl_cmd(&a),
        Command::TrainUdl(a) => train_udl(&a),
        Command::ServeA(a) => serve_a(&a),
        Command::ServeB(a) => serve_b(&a),
        Command::Experiment(a) => experiment(&a),
        Command::Report(a) => report(&a),
    }
}

fn out_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn views(cfg: &Resolved) -> anyhow::Result<(SplitPlan, PartyViews)> {
    let ds = cfg.load()?;
    let plan = vertical_split(&ds, cfg.labeled, cfg.unlabeled, cfg.overlap, cfg.seed)?;
    let views = plan.materialize(&ds)?;
    log::info!(
        "split: A {}x{}, B {}x{}, {} shared",
        views.a.len(),
        views.a.x.cols(),
        views.b.len(),
        views.b.x.cols(),
        views.overlap_a.len()
    );
    Ok((plan, views))
}

fn party_a(cfg: &Resolved, views: &PartyViews) -> anyhow::Result<PartyA> {
    let model = cfg
        .extractor
        .init(views.a.x.cols(), rng::derive(cfg.seed, "model-a"))?;
    Ok(PartyA::new(
        model,
        views.a.clone(),
        views.overlap_a.clone(),
    )?)
}

fn party_b(cfg: &Resolved, views: &PartyViews) -> anyhow::Result<PartyB> {
    let model = cfg
        .extractor
        .init(views.b.x.cols(), rng::derive(cfg.seed, "model-b"))?;
    Ok(PartyB::new(
        model,
        views.b.clone(),
        views.overlap_b.clone(),
    )?)
}

fn write_ftl_trace(trace: &[TraceRecord], path: &Path) -> anyhow::Result<()> {
    let rows: Vec<TraceRow> = trace.iter().map(|r| TraceRow::from_ftl(0, r)).collect();
    Ok(write_trace_csv(&rows, path)?)
}

/// `row,score,predicted,label` for B's evaluation rows.
fn write_scores(
    path: &Path,
    rows: &[usize],
    scores: &[f64],
    predicted: Option<&[i8]>,
    labels: &[i8],
) -> anyhow::Result<()> {
    let mut out = String::from("row,score,predicted,label\n");
    for (i, (&row, &s)) in rows.iter().zip(scores).enumerate() {
        let p = predicted.map(|p| p[i].to_string()).unwrap_or_default();
        out.push_str(&format!("{row},{s},{p},{}\n", labels[i]));
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Serialize)]
struct Summary {
    method: &'static str,
    dataset: String,
    seed: u64,
    n_labeled: usize,
    n_unlabeled: usize,
    overlap: usize,
    eval_rows: usize,
    iterations: usize,
    final_loss: f64,
    auc: f64,
}

fn ftl_summary(
    cfg: &Resolved,
    views: &PartyViews,
    trace: &[TraceRecord],
    pred: &Prediction,
) -> anyhow::Result<Summary> {
    let labels = views.sealed.eval_labels();
    let auc = roc_auc(&pred.scores, &labels)?.auc;
    let last = trace.last().context("training produced no iterations")?;
    Ok(Summary {
        method: "FTL",
        dataset: cfg.dataset_name(),
        seed: cfg.seed,
        n_labeled: views.a.len(),
        n_unlabeled: views.b.len(),
        overlap: views.overlap_b.len(),
        eval_rows: labels.len(),
        iterations: last.iteration,
        final_loss: last.loss.total,
        auc,
    })
}

fn write_ftl_outputs(
    dir: &Path,
    cfg: &Resolved,
    views: &PartyViews,
    trace: &[TraceRecord],
    model_b: &MlpModel,
    pred: &Prediction,
) -> anyhow::Result<Summary> {
    write_ftl_trace(trace, &dir.join("trace.csv"))?;
    write_json(&dir.join("model_b.json"), model_b)?;
    write_scores(
        &dir.join("scores.csv"),
        views.sealed.eval_rows(),
        &pred.scores,
        Some(&pred.labels),
        &views.sealed.eval_labels(),
    )?;
    let summary = ftl_summary(cfg, views, trace, pred)?;
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn gen_data(args: &GenDataArgs) -> anyhow::Result<()> {
    let p = preset(&args.synthetic).map_err(|e| crate::config::UsageError(e.to_string()))?;
    let file = crate::config::FileConfig::load(args.common.config.as_deref())?;
    let seed = args.common.seed.or(file.seed).unwrap_or(0);
    let ds = gen_synthetic(&p.spec, seed)?;
    out_dir(&args.common.out)?;
    ds.write_csv(&args.common.out.join("data.csv"))?;
    write_json(&args.common.out.join("schema.json"), &ds.csv_schema())?;
    log::info!("wrote {} rows x {} features", ds.len(), ds.x.cols());
    Ok(())
}

fn split(args: &RunArgs) -> anyhow::Result<()> {
    let cfg = resolve(&args.common, &args.data, None)?;
    let (plan, views) = views(&cfg)?;
    let dir = &args.common.out;
    out_dir(dir)?;
    write_json(&dir.join("split.json"), &plan)?;
    views.a.write_csv(&dir.join("party_a.csv"))?;
    views.b.write_csv(&dir.join("party_b.csv"))?;
    let shared: std::collections::HashSet<usize> = views.overlap_b.iter().copied().collect();
    let mut sealed = String::from("row,label,shared\n");
    for (row, label) in views.sealed.labels().iter().enumerate() {
        sealed.push_str(&format!("{row},{label},{}\n", shared.contains(&row)));
    }
    fs::write(dir.join("sealed_labels.csv"), sealed)?;
    Ok(())
}

fn train_ftl_cmd(args: &TrainArgs) -> anyhow::Result<()> {
    let cfg = resolve(&args.common, &args.data, Some(&args.hyper))?;
    let (_, views) = views(&cfg)?;
    let mut a = party_a(&cfg, &views)?;
    let mut b = party_b(&cfg, &views)?;
    let trace = train_ftl(&mut a, &mut b, &cfg.hyper)?;
    let x_eval = views.b.x.select_rows(views.sealed.eval_rows())?;
    let pred = predict_ftl(&a, &b, &x_eval)?;

    let dir = &args.common.out;
    out_dir(dir)?;
    write_json(&dir.join("model_a.json"), a.model())?;
    let s = write_ftl_outputs(dir, &cfg, &views, &trace, b.model(), &pred)?;
    log::info!("FTL: {} iterations, AUC {:.4}", s.iterations, s.auc);
    Ok(())
}

fn train_udl(args: &RunArgs) -> anyhow::Result<()> {
    let cfg = resolve(&args.common, &args.data, None)?;
    let (_, views) = views(&cfg)?;
    let out = run_udl(&views.b.x, &cfg.udl, cfg.seed)?;
    let rows = views.sealed.eval_rows();
    let scores: Vec<f64> = rows.iter().map(|&i| out.scores[i]).collect();
    let auc = orientation_free_auc(&scores, &views.sealed.eval_labels())?;

    let dir = &args.common.out;
    out_dir(dir)?;
    write_trace_csv(&TraceRow::from_udl(0, &out.trace), &dir.join("trace.csv"))?;
    write_json(&dir.join("autoencoder.json"), &out.autoencoder)?;
    write_json(&dir.join("kmeans.json"), &out.kmeans)?;
    write_scores(
        &dir.join("scores.csv"),
        rows,
        &scores,
        None,
        &views.sealed.eval_labels(),
    )?;
    let summary = Summary {
        method: "UDL",
        dataset: cfg.dataset_name(),
        seed: cfg.seed,
        n_labeled: views.a.len(),
        n_unlabeled: views.b.len(),
        overlap: views.overlap_b.len(),
        eval_rows: rows.len(),
        iterations: out.trace.len(),
        final_loss: out.trace.last().copied().unwrap_or(f64::NAN),
        auc,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    log::info!("UDL: AUC {auc:.4}");
    Ok(())
}

fn serve_a(args: &ServeAArgs) -> anyhow::Result<()> {
    let t = &args.train;
    let cfg = resolve(&t.common, &t.data, Some(&t.hyper))?;
    let (_, views) = views(&cfg)?;
    let mut a = party_a(&cfg, &views)?;
    out_dir(&t.common.out)?;

    let acceptor = TcpAcceptor::bind(&args.listen)
        .with_context(|| format!("cannot listen on {}", args.listen))?;
    log::info!("party A listening on {}", acceptor.local_addr()?);
    let mut ch = acceptor.accept(Duration::from_secs(args.timeout_secs))?;
    let trace = run_party_a(&mut a, &mut ch, &cfg.hyper)?;
    let served = serve_predictions(&a, &mut ch)?;
    log::info!(
        "party A: {} iterations, {served} prediction requests",
        trace.len()
    );

    write_ftl_trace(&trace, &t.common.out.join("trace.csv"))?;
    write_json(&t.common.out.join("model_a.json"), a.model())?;
    Ok(())
}

fn serve_b(args: &ServeBArgs) -> anyhow::Result<()> {
    let t = &args.train;
    let cfg = resolve(&t.common, &t.data, Some(&t.hyper))?;
    let (_, views) = views(&cfg)?;
    let mut b = party_b(&cfg, &views)?;
    out_dir(&t.common.out)?;

    let mut ch = TcpChannel::dial(&args.peer, Duration::from_secs(args.timeout_secs))
        .with_context(|| format!("cannot reach party A at {}", args.peer))?;
    let trace = run_party_b(&mut b, &mut ch, &cfg.hyper)?;
    let x_eval = views.b.x.select_rows(views.sealed.eval_rows())?;
    let pred = request_predictions(&b, &x_eval, &mut ch)?;

    let s = write_ftl_outputs(&t.common.out, &cfg, &views, &trace, b.model(), &pred)?;
    log::info!("party B: {} iterations, AUC {:.4}", s.iterations, s.auc);
    Ok(())
}

fn experiment(args: &ExperimentArgs) -> anyhow::Result<()> {
    let t = &args.train;
    let cfg = resolve(&t.common, &t.data, Some(&t.hyper))?;
    let methods = match &args.methods {
        Some(ms) => check_methods(ms)?,
        None => cfg.methods.clone(),
    };
    let exp = ExperimentConfig {
        dataset_name: cfg.dataset_name(),
        source: cfg.data_source()?,
        n_labeled: cfg.labeled,
        n_unlabeled: cfg.unlabeled,
        overlap_frac: cfg.overlap,
        methods,
        runs: args.runs.unwrap_or(cfg.runs),
        base_seed: cfg.seed,
        workers: args.workers.unwrap_or(cfg.workers),
        hyper: cfg.hyper,
        extractor: cfg.extractor.clone(),
        udl: cfg.udl.clone(),
        p_values: DEFAULT_P_VALUES.to_vec(),
    };
    let out = run_experiment(&exp)?;
    out.write(&t.common.out)?;
    fs::write(t.common.out.join("table.txt"), table(&out.report))?;
    for m in &out.report.methods {
        log::info!("{}: mean AUC {:.4}", m.method, m.mean_auc);
    }
    Ok(())
}

fn report(args: &ReportArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&args.input)
        .with_context(|| format!("cannot read {}", args.input.display()))?;
    let report = SignificanceReport::from_json(&text)?;
    out_dir(&args.out)?;
    fs::write(args.out.join("report.csv"), report.to_csv())?;
    fs::write(args.out.join("table.txt"), table(&report))?;
    Ok(())
}

/// Fixed-width table of significance numbers, in percent.
pub fn table(report: &SignificanceReport) -> String {
    let ps: Vec<f64> = report
        .methods
        .iter()
        .find_map(|m| m.significance.as_ref())
        .map(|s| s.iter().map(|e| e.p).collect())
        .unwrap_or_default();
    let mut out = format!(
        "dataset: {}  base seed: {}\n",
        report.dataset, report.base_seed
    );
    out.push_str(&format!(
        "{:<8}{:>6}{:>10}{:>10}",
        "method", "runs", "mean", "std"
    ));
    for p in &ps {
        out.push_str(&format!("{:>10}", format!("Sig{p}")));
    }
    out.push('\n');
    let pct = |v: Option<f64>| v.map(|x| format!("{:.3}", 100.0 * x)).unwrap_or("-".into());
    for m in &report.methods {
        out.push_str(&format!(
            "{:<8}{:>6}{:>10}{:>10}",
            m.method.to_string(),
            m.runs.len(),
            pct(Some(m.mean_auc)),
            pct(m.std_auc)
        ));
        for &p in &ps {
            out.push_str(&format!("{:>10}", pct(m.sig(p))));
        }
        out.push('\n');
    }
    out
}
