//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Runs without the libtest harness so the lines always reach the output.
//! Set `FEDXFER_KDD_CSV` to a KDD Cup 99 CSV to enable the real-data check.

use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use fedxfer::data::{bundled_schema, load_encoded, overlap_count, preset, vertical_split};
use fedxfer::eval::{
    mean, normal_inverse_cdf, roc_auc, run_experiment, sample_std, significance, DataSource,
    ExperimentConfig, ExperimentOutput, Method, TraceRow,
};
use fedxfer::ftl::{
    alignment_loss, compute_prototype, prediction_loss, prediction_score, regularization,
    total_loss, AlignmentKind, HyperParams,
};
use fedxfer::rng::rng_for;
use fedxfer::transport::{decode_message, encode_message};
use fedxfer::{Activation, Matrix, MlpModel, PartyA, PartyB};
use rand::seq::index;
use rand::Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: String) -> Outcome {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn within(started: Instant, budget: Duration, out: Outcome) -> Outcome {
    let took = started.elapsed();
    let tag = format!("{:.1}s / {}s", took.as_secs_f64(), budget.as_secs());
    match out {
        Ok(m) if took <= budget => Ok(format!("{m} [{tag}]")),
        Ok(m) => Err(format!("{m} but over budget [{tag}]")),
        Err(m) => Err(format!("{m} [{tag}]")),
    }
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn random_labels(rng: &mut impl Rng, n: usize) -> Vec<i8> {
    (0..n)
        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn joint_objective(
    ma: &MlpModel,
    mb: &MlpModel,
    xa: &Matrix,
    ya: &[i8],
    ov_a: &[usize],
    xb: &Matrix,
    ov_b: &[usize],
    h: &HyperParams,
) -> f64 {
    let za = ma.predict(xa).unwrap();
    let phi = compute_prototype(&za, ya).unwrap();
    let za_ov = za.select_rows(ov_a).unwrap();
    let zb_ov = mb.predict(&xb.select_rows(ov_b).unwrap()).unwrap();
    let y_ov: Vec<i8> = ov_a.iter().map(|&i| ya[i]).collect();
    let (j_b, _) = prediction_loss(&y_ov, &prediction_score(&phi, &zb_ov).unwrap()).unwrap();
    let (j_ab, _, _) = alignment_loss(&za_ov, &zb_ov, h.alignment).unwrap();
    total_loss(
        j_b,
        j_ab,
        regularization(ma),
        regularization(mb),
        h.gamma,
        h.lambda,
    )
    .total
}

fn central_diff(params: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    const EPS: f64 = 1e-5;
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + EPS;
            let up = f(&p);
            p[i] = orig - EPS;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * EPS)
        })
        .collect()
}

fn gradient_oracle() -> Outcome {
    let mut rng = rng_for(101, "acceptance-fd");
    let instances = 25;
    let mut worst = 0.0f64;
    let mut most_params = 0;
    for case in 0..instances as u64 {
        let (da, db, hidden, k) = (
            rng.random_range(2..=5),
            rng.random_range(2..=5),
            rng.random_range(2..=5),
            rng.random_range(1..=3),
        );
        let ma = MlpModel::init(&[da, hidden, k], Activation::Tanh, case).unwrap();
        let mb = MlpModel::init(&[db, hidden, k], Activation::Tanh, case + 1000).unwrap();
        let params = ma.num_params() + mb.num_params();
        if params > 200 {
            return Err(format!("instance {case} has {params} parameters"));
        }
        most_params = most_params.max(params);
        let (m_a, m_b) = (rng.random_range(3..=10), rng.random_range(3..=10));
        let m_c = rng.random_range(1..=m_a.min(m_b));
        let xa = random_matrix(&mut rng, m_a, da);
        let xb = random_matrix(&mut rng, m_b, db);
        let ya = random_labels(&mut rng, m_a);
        let ov_a = index::sample(&mut rng, m_a, m_c).into_vec();
        let ov_b = index::sample(&mut rng, m_b, m_c).into_vec();
        let h = HyperParams {
            gamma: rng.random_range(0.0..2.0),
            lambda: rng.random_range(0.0..0.1),
            alignment: if case % 2 == 0 {
                AlignmentKind::SquaredDistance
            } else {
                AlignmentKind::NegativeInnerProduct
            },
            ..HyperParams::default()
        };

        let ds_a = fedxfer::data::EncodedDataset::new("fd", xa.clone(), Some(ya.clone())).unwrap();
        let ds_b = fedxfer::data::EncodedDataset::new("fd", xb.clone(), None).unwrap();
        let mut a = PartyA::new(ma.clone(), ds_a, ov_a.clone()).unwrap();
        let mut b = PartyB::new(mb.clone(), ds_b, ov_b.clone()).unwrap();
        let zb = b.begin_iteration(a.begin_iteration().unwrap()).unwrap();
        let (_, ga) = a.compute_gradients(&zb, &h).unwrap();
        let (_, gb) = b.compute_gradients(&h).unwrap();

        let mut probe = ma.clone();
        let num_a = central_diff(&ma.flat_params(), |q| {
            probe.set_flat_params(q).unwrap();
            joint_objective(&probe, &mb, &xa, &ya, &ov_a, &xb, &ov_b, &h)
        });
        let mut probe = mb.clone();
        let num_b = central_diff(&mb.flat_params(), |q| {
            probe.set_flat_params(q).unwrap();
            joint_objective(&ma, &probe, &xa, &ya, &ov_a, &xb, &ov_b, &h)
        });
        for (x, y) in ga
            .flatten()
            .iter()
            .zip(&num_a)
            .chain(gb.flatten().iter().zip(&num_b))
        {
            worst = worst.max((x - y).abs() / x.abs().max(y.abs()).max(1e-6));
        }
    }
    check(
        worst < 1e-4,
        format!("{instances} instances (≤ {most_params} params), max rel err {worst:.2e}"),
    )
}

fn auc_oracle() -> Outcome {
    let mut rng = rng_for(102, "acceptance-auc");
    let mut done = 0;
    while done < 500 {
        let n = rng.random_range(2..=50);
        let levels = rng.random_range(1..=n + 3);
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..levels) as f64 * 0.37)
            .collect();
        let labels = random_labels(&mut rng, n);
        if !labels.contains(&1) || !labels.contains(&-1) {
            continue;
        }
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in (0..n).filter(|&i| labels[i] == 1) {
            for j in (0..n).filter(|&j| labels[j] == -1) {
                pairs += 1.0;
                wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
        let got = roc_auc(&scores, &labels).map_err(|e| e.to_string())?.auc;
        if got != wins / pairs {
            return Err(format!(
                "instance {done}: {got} vs pairwise {}",
                wins / pairs
            ));
        }
        done += 1;
    }
    Ok("500 instances equal the pairwise count exactly".into())
}

fn significance_math() -> Outcome {
    // Reference quantiles from 50-digit arithmetic.
    let reference = [
        (0.01, -2.326_347_874_040_841),
        (0.03, -1.880_793_608_151_251),
        (0.05, -1.644_853_626_951_472_7),
        (0.5, 0.0),
    ];
    let mut worst = 0.0f64;
    for (p, q) in reference {
        worst = worst.max((normal_inverse_cdf(p).unwrap() - q).abs());
    }
    if worst >= 1e-9 {
        return Err(format!("quantile error {worst:.2e}"));
    }
    let series = [0.91, 0.95, 0.89, 0.97, 0.93, 0.90, 0.94];
    if significance(&series, 50.0).unwrap() != mean(&series) {
        return Err("Sig at p = 50 differs from the mean".into());
    }
    let mu = series.iter().sum::<f64>() / series.len() as f64;
    let sd = (series.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / 6.0).sqrt();
    if (sample_std(&series).unwrap() - sd).abs() > 1e-12 {
        return Err("sample std mismatch".into());
    }
    let mut formula = 0.0f64;
    for (p, q) in &reference[..3] {
        formula = formula.max((significance(&series, p * 100.0).unwrap() - (mu + sd * q)).abs());
    }
    check(
        formula < 1e-9,
        format!("quantile err {worst:.1e}, Sig(50) = mean exactly, formula err {formula:.1e}"),
    )
}

fn weak_target_experiment() -> Result<ExperimentOutput, String> {
    let mut cfg = ExperimentConfig::from_preset(&preset("weak-target").unwrap());
    cfg.base_seed = 7;
    cfg.workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    run_experiment(&cfg).map_err(|e| e.to_string())
}

fn directional(out: &ExperimentOutput) -> Outcome {
    let ftl = out.report.method(Method::Ftl).ok_or("no FTL summary")?;
    let udl = out.report.method(Method::Udl).ok_or("no UDL summary")?;
    let (sf, su) = (
        ftl.sig(5.0).ok_or("no FTL Sig5")?,
        udl.sig(5.0).ok_or("no UDL Sig5")?,
    );
    check(
        ftl.runs.len() == 30 && sf >= 0.90 && sf - su >= 0.10,
        format!(
            "{} runs, Sig5 FTL {sf:.4} (mean {:.4}), UDL {su:.4} (mean {:.4}), gap {:.4}",
            ftl.runs.len(),
            ftl.mean_auc,
            udl.mean_auc,
            sf - su
        ),
    )
}

fn runs_of(rows: &[TraceRow]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        if out.len() <= r.run {
            out.resize(r.run + 1, Vec::new());
        }
        out[r.run].push(r.total);
    }
    out
}

fn ae_decreases(rows: &[TraceRow]) -> Result<usize, String> {
    let runs = runs_of(rows);
    for (r, t) in runs.iter().enumerate() {
        match (t.first(), t.last()) {
            (Some(a), Some(b)) if b < a => {}
            _ => return Err(format!("AE run {r}: trace does not decrease")),
        }
    }
    Ok(runs.len())
}

fn convergence(out: &ExperimentOutput) -> Outcome {
    let mut worst_ratio = 0.0f64;
    let mut worst_flat = 0.0f64;
    let runs = runs_of(&out.ftl_traces);
    for (r, t) in runs.iter().enumerate() {
        if t.len() < 200 {
            return Err(format!("FTL run {r} stopped at iteration {}", t.len()));
        }
        let (first, at200) = (t[0], t[199]);
        let tail = &t[180..200];
        let range = tail.iter().cloned().fold(f64::MIN, f64::max)
            - tail.iter().cloned().fold(f64::MAX, f64::min);
        worst_ratio = worst_ratio.max(at200 / first);
        worst_flat = worst_flat.max(range / (first - at200));
    }
    let ae_runs = ae_decreases(&out.udl_traces)?;
    check(
        worst_ratio <= 0.5 && worst_flat <= 0.01,
        format!(
            "{} FTL runs: worst J(200)/J(1) {worst_ratio:.3}, worst tail range {:.3}% of drop; \
             AE final < initial on {ae_runs} runs",
            runs.len(),
            100.0 * worst_flat
        ),
    )
}

fn kdd_check() -> Option<Outcome> {
    let path = std::env::var_os("FEDXFER_KDD_CSV")?;
    let run = || -> Outcome {
        let schema = bundled_schema("kdd").map_err(|e| e.to_string())?;
        let ds = load_encoded(Path::new(&path), &schema).map_err(|e| e.to_string())?;
        let mut cfg = ExperimentConfig::from_preset(&preset("weak-target").unwrap());
        cfg.dataset_name = "kdd".into();
        cfg.source = DataSource::Dataset(ds.into());
        (cfg.n_labeled, cfg.n_unlabeled, cfg.overlap_frac) = (9577, 2000, 0.1);
        cfg.workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        let out = run_experiment(&cfg).map_err(|e| e.to_string())?;
        let ae_runs = ae_decreases(&out.udl_traces)?;
        let f = out.report.method(Method::Ftl).unwrap().mean_auc;
        let u = out.report.method(Method::Udl).unwrap().mean_auc;
        check(
            f >= 0.95 && f - u >= 0.10,
            format!("mean AUC FTL {f:.4}, UDL {u:.4}, AE decreases on {ae_runs} runs"),
        )
    };
    Some(run())
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

fn transport_equivalence() -> Outcome {
    let golden: [u8; 33] = [
        0x46, 0x54, 0x4C, 0x31, 0x02, 0x18, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x02, 0x00,
        0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xF0, 0x3F, 0x00, 0x00, 0x00, 0x00, 0x00,
        0x00, 0x00, 0x40,
    ];
    let want = fedxfer::FtlMessage::LatentsB {
        z: Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap(),
    };
    if decode_message(&golden).ok() != Some(want.clone())
        || encode_message(&want).ok().as_deref() != Some(&golden[..])
    {
        return Err("golden LatentsB frame does not round-trip".into());
    }

    let bin = env!("CARGO_BIN_EXE_fedxfer");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = |name: &str| dir.path().join(name);
    let common = [
        "--synthetic",
        "weak-target",
        "--seed",
        "11",
        "--timeout-secs",
        "60",
    ];
    let quiet = |c: &mut Command| {
        c.env("FEDXFER_LOG", "error")
            .stdout(Stdio::null())
            .stderr(Stdio::null());
    };

    let mut inproc = Command::new(bin);
    inproc.args([
        "train-ftl",
        "--synthetic",
        "weak-target",
        "--seed",
        "11",
        "--out",
    ]);
    inproc.arg(out("inproc"));
    quiet(&mut inproc);
    if !inproc.status().map_err(|e| e.to_string())?.success() {
        return Err("train-ftl failed".into());
    }

    let addr = format!("127.0.0.1:{}", free_port());
    let mut a = Command::new(bin);
    a.arg("serve-a")
        .args(common)
        .args(["--listen", &addr, "--out"])
        .arg(out("a"));
    quiet(&mut a);
    let mut a = a.spawn().map_err(|e| e.to_string())?;
    let mut b = Command::new(bin);
    b.arg("serve-b")
        .args(common)
        .args(["--peer", &addr, "--out"])
        .arg(out("b"));
    quiet(&mut b);
    let b_ok = b.status().map_err(|e| e.to_string())?.success();
    let a_ok = a.wait().map_err(|e| e.to_string())?.success();
    if !(a_ok && b_ok) {
        return Err(format!("serve-a ok={a_ok}, serve-b ok={b_ok}"));
    }

    let read = |p: std::path::PathBuf| std::fs::read(p).unwrap_or_default();
    let reference = read(out("inproc").join("trace.csv"));
    let lines = reference.iter().filter(|&&c| c == b'\n').count();
    let same_a = read(out("a").join("trace.csv")) == reference;
    let same_b = read(out("b").join("trace.csv")) == reference;
    let same_scores = read(out("b").join("scores.csv")) == read(out("inproc").join("scores.csv"));
    check(
        lines > 1 && same_a && same_b && same_scores,
        format!(
            "golden frame ok; TCP trace ({} iterations) identical: A {same_a}, B {same_b}, \
             scores {same_scores}",
            lines.saturating_sub(1)
        ),
    )
}

fn split_invariants() -> Outcome {
    let mut rng = rng_for(108, "acceptance-split");
    for case in 0..1000 {
        let n = rng.random_range(4..=120);
        let d = rng.random_range(2..=12);
        let nl = rng.random_range(1..=n - 1);
        let nu = rng.random_range(1..=n - nl + 1);
        let frac: f64 = rng.random_range(0.0..=1.0);
        let seed: u64 = rng.random();
        let x = random_matrix(&mut rng, n, d);
        let y = random_labels(&mut rng, n);
        let ds = fedxfer::data::EncodedDataset::new("prop", x, Some(y)).unwrap();
        let plan = match vertical_split(&ds, nl, nu, frac, seed) {
            Ok(p) => p,
            Err(_) if nl + nu - overlap_count(nl, nu, frac) > n => continue,
            Err(e) => return Err(format!("case {case}: {e}")),
        };
        let mut feats: Vec<usize> = plan
            .features_a
            .iter()
            .chain(&plan.features_b)
            .copied()
            .collect();
        feats.sort_unstable();
        let partition = feats == (0..d).collect::<Vec<_>>()
            && !plan.features_a.is_empty()
            && !plan.features_b.is_empty();
        let shared: std::collections::HashSet<usize> = plan
            .samples_a
            .iter()
            .filter(|r| plan.samples_b.contains(r))
            .copied()
            .collect();
        let count_ok = plan.overlap.len() == overlap_count(nl, nu, frac)
            && shared.len() == plan.overlap.len()
            && plan.samples_a.len() == nl
            && plan.samples_b.len() == nu
            && plan
                .overlap
                .iter()
                .all(|&(i, j)| plan.samples_a[i] == plan.samples_b[j]);
        let again = vertical_split(&ds, nl, nu, frac, seed).map_err(|e| e.to_string())?;
        if !(partition && count_ok && again == plan) {
            return Err(format!(
                "case {case}: partition {partition}, count {count_ok}, deterministic {}",
                again == plan
            ));
        }
    }
    Ok("1000 cases: disjoint feature partition, exact overlap, deterministic".into())
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut failed = 0;
    let mut report = |n: u8, name: &str, out: Option<Outcome>| {
        let (tag, msg) = match out {
            Some(Ok(m)) => ("PASS", m),
            Some(Err(m)) => {
                failed += 1;
                ("FAIL", m)
            }
            None => ("SKIP", "set FEDXFER_KDD_CSV to run".to_string()),
        };
        println!("criterion {n} {tag}: {name}: {msg}");
    };

    let t = Instant::now();
    report(
        1,
        "gradient oracle",
        Some(within(t, Duration::from_secs(30), gradient_oracle())),
    );
    let t = Instant::now();
    report(
        2,
        "AUC oracle",
        Some(within(t, Duration::from_secs(10), auc_oracle())),
    );
    let t = Instant::now();
    report(
        3,
        "significance math",
        Some(within(t, Duration::from_secs(1), significance_math())),
    );

    let t = Instant::now();
    let exp = weak_target_experiment();
    let (c4, c6) = match &exp {
        Ok(out) => (directional(out), convergence(out)),
        Err(e) => (Err(e.clone()), Err(e.clone())),
    };
    report(
        4,
        "weak-target directional",
        Some(within(t, Duration::from_secs(300), c4)),
    );

    let t = Instant::now();
    let kdd = kdd_check().map(|o| within(t, Duration::from_secs(900), o));
    report(5, "real-data check", kdd);
    report(6, "convergence shape", Some(c6));

    let t = Instant::now();
    report(
        7,
        "transport equivalence",
        Some(within(t, Duration::from_secs(60), transport_equivalence())),
    );
    let t = Instant::now();
    report(
        8,
        "split invariants",
        Some(within(t, Duration::from_secs(5), split_invariants())),
    );

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
