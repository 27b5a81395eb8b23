//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng as _;
use rand_distr::StandardNormal;
use textscore::corpus::stratified_split;
use textscore::econ::{loan_profit, profit_curve, EconConfig, Economics};
use textscore::eval::{auc, bootstrap, h_measure, ks, pr_auc, CostPrior, Metric, ScoredSet};
use textscore::explain::{lime_explain, segment, Granularity, LimeConfig};
use textscore::lingcomp::{bonferroni_level, mann_whitney_u, welch_proportion_t};
use textscore::model::{gradient_check, MlpConfig, Variant};
use textscore::pipeline::{
    run_evaluate, run_featurize, run_synth, run_train, EvalReport, PipelineConfig, Selection, TopkConfig,
};
use textscore::refine::{build_prompt, cached_refine, parse_sections, refine_batch, RefineError, ResponseCache};
use textscore::rng::{derive_seed, rng};
use textscore::textfeat::{fit_lda, infer_topics, LdaConfig, TokenMode, Tokenizer};
use textscore::Matrix;

use common::{label_only_dataset, Reply, StubServer};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("metric oracles", metric_oracles),
        ("gradient check", gradient_correctness),
        ("protocol constants", protocol_constants),
        ("profit ledger", profit_ledger),
        ("lda recovery", lda_recovery),
        ("lime fidelity", lime_fidelity),
        ("signal detection", signal_detection),
        ("determinism", determinism),
        ("refinement protocol", refinement_protocol),
        ("statistical tests", statistical_tests),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                println!("criterion {}: FAIL {name}: {detail} [{secs:.1} s]", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- metrics

fn sweep(scores: &[f64], labels: &[u8]) -> Vec<(f64, f64, usize, usize)> {
    // (fpr, tpr, tp, fp) for "score >= t" at +inf and every distinct score, descending
    let p = labels.iter().filter(|&&l| l == 1).count();
    let n = labels.len() - p;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut out = vec![(0.0, 0.0, 0, 0)];
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(&s, &l)| s >= t && l == 1).count();
        let fp = scores.iter().zip(labels).filter(|(&s, &l)| s >= t && l == 0).count();
        out.push((fp as f64 / n as f64, tp as f64 / p as f64, tp, fp));
    }
    out
}

fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &a) in scores.iter().enumerate() {
        for (j, &b) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                num += if a > b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, 1e-13, 48)
}

/// H-measure by direct integration of the minimum expected loss over every
/// ROC operating point against the trivial classifier.
fn numeric_h(scores: &[f64], labels: &[u8]) -> f64 {
    let n = labels.len() as f64;
    let pi1 = labels.iter().filter(|&&l| l == 1).count() as f64 / n;
    let pi0 = 1.0 - pi1;
    let (a, b) = (pi1 + 1.0, pi0 + 1.0);
    let pts = sweep(scores, labels);
    let pdf = |c: f64| c.powf(a - 1.0) * (1.0 - c).powf(b - 1.0);
    let norm = integrate(&pdf, 0.0, 1.0);
    let loss = |c: f64| {
        let best = pts.iter().map(|&(f, t, _, _)| c * pi0 * f + (1.0 - c) * pi1 * (1.0 - t)).fold(f64::INFINITY, f64::min);
        pdf(c) * best / norm
    };
    let reference = |c: f64| pdf(c) * (c * pi0).min((1.0 - c) * pi1) / norm;
    1.0 - integrate(&loss, 0.0, 1.0) / integrate(&reference, 0.0, 1.0)
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst = [0.0f64; 4];
    for case in 0..200 {
        let n = r.random_range(2..=50usize);
        let levels = r.random_range(1..=n);
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..levels) as f64 / levels as f64).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.35))).collect();
        labels[0] = 1;
        labels[n - 1] = 0;
        let s = ScoredSet::from_scores(scores.clone(), labels.clone()).map_err(|e| e.to_string())?;

        let pts = sweep(&scores, &labels);
        let p = labels.iter().filter(|&&l| l == 1).count() as f64;
        let ks_ref = pts.iter().map(|&(f, t, _, _)| (t - f).abs()).fold(0.0, f64::max);
        let mut pr_ref = 0.0;
        for w in pts.windows(2) {
            let (_, _, tp, fp) = w[1];
            pr_ref += (w[1].2 as f64 - w[0].2 as f64) / p * (tp as f64 / (tp + fp) as f64);
        }
        let errs = [
            (auc(&s).unwrap() - brute_auc(&scores, &labels)).abs(),
            (ks(&s).unwrap() - ks_ref).abs(),
            (pr_auc(&s).unwrap() - pr_ref).abs(),
            (h_measure(&s, CostPrior::ClassFrequency).unwrap() - numeric_h(&scores, &labels)).abs(),
        ];
        for (k, (e, tol)) in errs.iter().zip([1e-9, 1e-9, 1e-9, 1e-6]).enumerate() {
            worst[k] = worst[k].max(*e);
            ensure(*e <= tol, || format!("case {case}: metric {k} off by {e:e}"))?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "200 sets; max error auc {:.1e}, ks {:.1e}, prauc {:.1e}, h {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

// ---------------------------------------------------------------- gradients

fn gradient_correctness() -> Outcome {
    let mut r = rng(202);
    let mut worst = 0.0f64;
    for net in 0..50 {
        let depth = r.random_range(0..=2usize);
        let hidden: Vec<usize> = (0..depth).map(|_| r.random_range(1..=32)).collect();
        let (rows, cols) = (r.random_range(1..=12usize), r.random_range(1..=8usize));
        let data: Vec<f64> = (0..rows * cols).map(|_| r.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..rows).map(|_| f64::from(u8::from(r.random_bool(0.5)))).collect();
        let cfg = MlpConfig { hidden: hidden.clone(), seed: r.random(), ..Default::default() };
        let err = gradient_check(&cfg, &Matrix::from_vec(rows, cols, data), &y, 1e-6);
        worst = worst.max(err);
        ensure(err <= 1e-4, || format!("net {net} {hidden:?}: relative error {err:e}"))?;
    }
    Ok(format!("50 networks, max relative error {worst:.2e}"))
}

// ---------------------------------------------------------------- protocol

fn protocol_constants() -> Outcome {
    let ds = label_only_dataset(2460, 60);
    let split = stratified_split(&ds, 0.7, 0.2, 0).map_err(|e| e.to_string())?;
    let sizes = (split.train.len(), split.val.len(), split.test.len());
    ensure(sizes == (1377, 345, 738), || format!("split sizes {sizes:?}"))?;

    let mut r = rng(303);
    let labels: Vec<u8> = (0..200).map(|i| u8::from(i % 10 == 0)).collect();
    let ids: Vec<String> = (0..200).map(|i| format!("r{i}")).collect();
    let runs: Vec<ScoredSet> = (0..5)
        .map(|_| ScoredSet::new((0..200).map(|_| r.random()).collect(), labels.clone(), ids.clone()).unwrap())
        .collect();
    let est = bootstrap(Metric::Auc, &runs, 1000, 7, 4).map_err(|e| e.to_string())?;
    ensure(est.n_estimates == 5000, || format!("n_estimates {}", est.n_estimates))?;

    ensure(bonferroni_level(0.01, 72) == 0.01 / 72.0, || "bonferroni level".into())?;

    let reference = vec![70, 100, 120, 150, 165];
    let topk = TopkConfig::default();
    ensure(topk.k == reference && topk.scaled(738) == reference, || format!("top-k list {:?}", topk.k))?;
    let planted = planted_run()?;
    let rows: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(planted.dir.join("topk.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let scaled = topk.scaled(planted.report.test_size);
    for row in &rows {
        let k_ref = row["k_reference"].as_u64().map(|v| v as usize);
        let k = row["k"].as_u64().unwrap_or(0) as usize;
        let at = reference.iter().position(|&v| Some(v) == k_ref);
        ensure(at.is_some_and(|i| scaled[i] == k), || format!("topk row k_reference {k_ref:?} k {k}"))?;
    }
    ensure(rows.len() == 3 * reference.len(), || format!("{} top-k rows", rows.len()))?;
    Ok(format!(
        "split 1377/345/738, 5000 estimates, level {:.3e}, top-k {:?} at n={} -> {:?}",
        0.01 / 72.0,
        reference,
        planted.report.test_size,
        scaled
    ))
}

// ---------------------------------------------------------------- economics

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn profit_ledger() -> Outcome {
    let two = ScoredSet::new(vec![0.9, 0.1], vec![1, 0], vec!["bad".into(), "good".into()]).unwrap();
    let exact_cfg = EconConfig::new(q(9, 10)).unwrap();
    let econ: Economics<BigRational> = [("bad", ()), ("good", ())].into_iter().map(|(id, _)| (id.into(), (q(100, 1), q(1, 10)))).collect();
    let curve = profit_curve(&two, &econ, &exact_cfg).map_err(|e| e.to_string())?;
    let got: Vec<BigRational> = curve.points.iter().map(|p| p.profit.clone()).collect();
    ensure(got == vec![q(-79, 1), q(10, 1), q(0, 1)], || format!("two-loan profits {got:?}"))?;

    let mut r = rng(404);
    let cfg = EconConfig::new(0.9).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = r.random_range(1..=60usize);
        let ids: Vec<String> = (0..n).map(|i| format!("p{i:03}")).collect();
        let labels: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.2))).collect();
        let scores: Vec<f64> = (0..n).map(|_| r.random()).collect();
        let econ: Economics<f64> =
            ids.iter().map(|id| (id.clone(), (r.random_range(1.0..1000.0), r.random_range(0.0..0.3)))).collect();
        let s = ScoredSet::new(scores, labels.clone(), ids.clone()).unwrap();
        let curve = profit_curve(&s, &econ, &cfg).map_err(|e| e.to_string())?;
        let total: f64 = ids.iter().zip(&labels).map(|(id, &l)| loan_profit(l == 1, econ[id].0, econ[id].1, &cfg)).sum();
        let e = (curve.points[0].profit - total).abs();
        worst = worst.max(e);
        ensure(e <= 1e-9, || format!("profit(0) off by {e:e}"))?;
    }

    for _ in 0..100 {
        let n = r.random_range(1..=40usize);
        let ids: Vec<String> = (0..n).map(|i| format!("m{i:03}")).collect();
        let labels: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.3))).collect();
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..5) as f64).collect();
        let econ: Economics<BigRational> = ids
            .iter()
            .map(|id| (id.clone(), (q(r.random_range(1..100_000), 100), q(r.random_range(0..3000), 10_000))))
            .collect();
        let s = ScoredSet::new(scores.clone(), labels.clone(), ids.clone()).unwrap();
        let curve = profit_curve(&s, &econ, &exact_cfg).map_err(|e| e.to_string())?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(ids[a].cmp(&ids[b])));
        for (k, &i) in order.iter().enumerate() {
            let (amount, rate) = econ[&ids[i]].clone();
            let step = curve.points[k].profit.clone() - curve.points[k + 1].profit.clone();
            ensure(step == loan_profit(labels[i] == 1, amount, rate, &exact_cfg), || format!("marginal step at k={k}"))?;
        }
    }
    Ok(format!("two-loan -79/+10/0 exact, profit(0) max error {worst:.1e}, marginal identity exact on 100 rational portfolios"))
}

// ---------------------------------------------------------------- topics

fn lda_recovery() -> Outcome {
    let start = Instant::now();
    let vocab = |p: char| (0..50).map(|i| format!("{p}{i:02}")).collect::<Vec<_>>();
    let (va, vb) = (vocab('a'), vocab('b'));
    let mut r = rng(505);
    let docs: Vec<Vec<String>> = (0..200)
        .map(|d| {
            let v = if d % 2 == 0 { &va } else { &vb };
            (0..40).map(|_| v[r.random_range(0..50)].clone()).collect()
        })
        .collect();
    let mut purities = Vec::new();
    for seed in [1, 2, 3] {
        let cfg = LdaConfig { n_topics: 2, alpha: Some(0.1), beta: 0.01, iterations: 200, infer_iterations: 50, seed };
        let model = fit_lda(&docs, &cfg).map_err(|e| e.to_string())?;
        let pure = docs
            .iter()
            .enumerate()
            .filter(|(i, d)| infer_topics(&model, d, 50, derive_seed(seed, &[*i as u64])).iter().any(|&m| m > 0.9))
            .count();
        let purity = pure as f64 / docs.len() as f64;
        let phi = model.topic_word_distribution();
        let side: Vec<bool> = phi
            .iter()
            .map(|row| {
                let mass_a: f64 = model.vocabulary.iter().filter(|(w, _)| w.starts_with('a')).map(|(_, &j)| row[j]).sum();
                mass_a > 0.5
            })
            .collect();
        ensure(purity >= 0.9, || format!("seed {seed}: purity {purity:.3}"))?;
        ensure(side[0] != side[1], || format!("seed {seed}: both topics map to one vocabulary"))?;
        purities.push(purity);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("purity {purities:?} for seeds 1..=3, bijective mapping"))
}

// ---------------------------------------------------------------- lime

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            out[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    out
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn lime_fidelity() -> Outcome {
    let units: Vec<String> = (0..20).map(|i| format!("u{i:02}")).collect();
    let mut r = rng(606);
    let weights: Vec<f64> =
        (0..20).map(|_| r.random_range(0.05..1.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let truth: BTreeMap<String, f64> = units.iter().cloned().zip(weights.iter().copied()).collect();
    let text = units.join(" ");
    let seg = segment(&text, Granularity::Word, &Tokenizer::new(TokenMode::Word)).map_err(|e| e.to_string())?;
    let scorer = |t: &str| {
        let z: f64 = -0.5 + t.split_whitespace().filter_map(|u| truth.get(u)).sum::<f64>();
        1.0 / (1.0 + (-z).exp())
    };
    let mut top: Vec<usize> = (0..20).collect();
    top.sort_by(|&a, &b| weights[b].abs().partial_cmp(&weights[a].abs()).unwrap());
    let mut rhos = Vec::new();
    for seed in 0..5 {
        let cfg = LimeConfig { n_samples: 1000, top_k: 20, seed, ..Default::default() };
        let attr = lime_explain(scorer, &seg, &cfg).map_err(|e| e.to_string())?;
        let mut coef = vec![0.0; 20];
        for a in &attr {
            coef[a.position] = a.weight;
        }
        for &j in &top[..5] {
            ensure(coef[j].signum() == weights[j].signum(), || format!("seed {seed}: sign of {} flipped", units[j]))?;
        }
        let rho = spearman(&coef, &weights);
        ensure(rho >= 0.9, || format!("seed {seed}: spearman {rho:.3}"))?;
        rhos.push((rho * 1000.0).round() / 1000.0);
    }
    let blind = lime_explain(|_: &str| 0.37, &seg, &LimeConfig { top_k: 20, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let max_blind = blind.iter().map(|a| a.weight.abs()).fold(0.0, f64::max);
    ensure(max_blind < 1e-6, || format!("text-blind max |coef| {max_blind:e}"))?;
    Ok(format!("top-5 signs 5/5, spearman {rhos:?}, text-blind max |coef| {max_blind:.1e}"))
}

// ---------------------------------------------------------------- pipeline

struct RunOutput {
    dir: PathBuf,
    report: EvalReport,
    elapsed: Duration,
}

fn workdir() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().expect("temp dir")).path()
}

fn shipped_config(name: &str, out: &Path) -> Result<PipelineConfig, String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.toml"));
    let mut cfg = PipelineConfig::load(&path).map_err(|e| e.to_string())?;
    cfg.output_dir = out.to_path_buf();
    cfg.data.corpus = out.join("data/corpus.jsonl");
    cfg.data.schema = out.join("data/schema.json");
    Ok(cfg)
}

fn full_run(cfg: &PipelineConfig) -> Result<RunOutput, String> {
    let start = Instant::now();
    let sel = Selection::default();
    run_synth(cfg).map_err(|e| e.to_string())?;
    run_featurize(cfg).map_err(|e| e.to_string())?;
    run_train(cfg, &sel).map_err(|e| e.to_string())?;
    let report = run_evaluate(cfg, &sel).map_err(|e| e.to_string())?;
    Ok(RunOutput { dir: cfg.output_dir.clone(), report, elapsed: start.elapsed() })
}

fn planted_run() -> Result<&'static RunOutput, String> {
    static RUN: OnceLock<Result<RunOutput, String>> = OnceLock::new();
    RUN.get_or_init(|| {
        let out = workdir().join("planted");
        full_run(&shipped_config("planted", &out)?)
    })
    .as_ref()
    .map_err(Clone::clone)
}

fn auc_cell(report: &EvalReport, variant: Variant) -> Result<(f64, f64, f64), String> {
    let row = report.rows.first().ok_or("empty report")?;
    let e = row.cells.get(&variant).and_then(|c| c.get(&Metric::Auc)).and_then(Option::as_ref);
    let e = e.ok_or_else(|| format!("no {} auc", variant.as_str()))?;
    Ok((e.mean, e.ci_low, e.ci_high))
}

fn signal_detection() -> Outcome {
    let planted = planted_run()?;
    let (s, s_lo, s_hi) = auc_cell(&planted.report, Variant::Structured)?;
    let (c, c_lo, c_hi) = auc_cell(&planted.report, Variant::Combined)?;
    let secs = planted.elapsed.as_secs_f64();
    let summary = format!(
        "planted structured {s:.3} [{s_lo:.3}, {s_hi:.3}] combined {c:.3} [{c_lo:.3}, {c_hi:.3}] gap {:.3} in {secs:.0} s",
        c - s
    );
    ensure(c - s >= 0.03, || format!("{summary}: gap below 0.03"))?;
    ensure(c_lo > s_hi || s_lo > c_hi, || format!("{summary}: intervals overlap"))?;
    ensure(secs <= 600.0, || format!("{summary}: over 10 minutes"))?;

    let null = full_run(&shipped_config("null", &workdir().join("null"))?)?;
    let mut cells = Vec::new();
    for row in &null.report.rows {
        for (variant, metrics) in &row.cells {
            let e = metrics.get(&Metric::Auc).and_then(Option::as_ref).ok_or("missing null auc")?;
            ensure(e.ci_low <= 0.5 && 0.5 <= e.ci_high, || {
                format!("null {} auc [{:.3}, {:.3}] excludes 0.5", variant.as_str(), e.ci_low, e.ci_high)
            })?;
            cells.push(format!("{} [{:.3}, {:.3}]", variant.as_str(), e.ci_low, e.ci_high));
        }
    }
    Ok(format!("{summary}; null {}", cells.join(", ")))
}

fn determinism() -> Outcome {
    let out = workdir().join("determinism");
    let mut cfg = shipped_config("planted", &out)?;
    cfg.synth.n = 800;
    cfg.text.featurizers = vec!["lda".into(), "tfidf".into()];
    cfg.text.lda.topics = vec![5];
    cfg.text.lda.iterations = 100;
    let sel = Selection::default();
    run_synth(&cfg).map_err(|e| e.to_string())?;
    let mut reports: Vec<(usize, Vec<u8>, Vec<u8>)> = Vec::new();
    for workers in [1, 4, 8] {
        cfg.bootstrap.workers = workers;
        run_featurize(&cfg).map_err(|e| e.to_string())?;
        run_train(&cfg, &sel).map_err(|e| e.to_string())?;
        run_evaluate(&cfg, &sel).map_err(|e| e.to_string())?;
        let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| e.to_string());
        reports.push((workers, read("report.json")?, read("topk.json")?));
    }
    for (w, report, topk) in &reports[1..] {
        ensure(*report == reports[0].1, || format!("report.json differs at {w} workers"))?;
        ensure(*topk == reports[0].2, || format!("topk.json differs at {w} workers"))?;
    }
    Ok(format!("report.json byte-identical at 1, 4, 8 workers ({} bytes)", reports[0].1.len()))
}

// ---------------------------------------------------------------- refinement

const EXPECTED_PROMPT: &str = "Hi ChatGPT, there is a bank loan borrower whose details are below. X The bank plans to \
lend to this borrower. Based on the above information, please carefully summarise and analyse the factors that support \
the borrower's ability to repay the loan on time and the factors that could lead to the borrower's default. The \
expected answer template consists of two parts: 1. Factors supporting the borrower's repayment: [Insert answer here]; \
2. Factors that could potentially lead to the borrower's default: [Insert answer here].";

const EXAMPLE_OUTPUT: &str = "1. Factors supporting the borrower\u{2019}s repayment: * The borrower has good peer \
relationships, actively cooperates with the credit officer\u{2019}s investigation, and provides valid documents, which \
indicates that the borrower has a good cooperative attitude and integrity. This is conducive to their establishing a \
cooperative relationship with the bank. * The borrower has a stable social status and some resources, which may have a \
positive influence on the borrower's future repayment. * The borrower attaches importance to the risk of default and \
has no obvious factors that might affect their willingness to repay, which indicates that the borrower has the \
willingness and ability to repay, and this may help the bank to conduct risk assessments and controls. 2. Factors that \
could lead to the borrower's default: * The borrower's personal credit check shows that there were several overdue \
payments on credit cards, and this led to a downgraded credit rating of A. Although the borrower indicates that they \
are usually busy with work and therefore did not make timely payments, this may have a negative impact on the \
borrower's credit risk assessment. Therefore, the bank needs to carefully consider the setting of the loan amount, \
interest rate, etc. * The borrower has a large amount of receivables, which may affect the borrower's future cash flow \
and hence ability to repay. Therefore, the bank needs to conduct a detailed review of the borrower's receivables to \
fully examine their true business operations and consider the impact of this factor in risk control.";

fn refinement_protocol() -> Outcome {
    let prompt = build_prompt("X").map_err(|e| e.to_string())?;
    ensure(prompt == EXPECTED_PROMPT, || format!("prompt differs: {prompt}"))?;

    let sections = parse_sections(EXAMPLE_OUTPUT).map_err(|e| e.to_string())?;
    ensure(sections.positive.starts_with("The borrower has good peer relationships"), || "positive section".into())?;
    ensure(sections.negative.starts_with("The borrower's personal credit check"), || "negative section".into())?;
    ensure(sections.negative.ends_with("risk control."), || "negative section tail".into())?;

    // verbatim echo and wire format
    let server = StubServer::start(vec![], Some(Reply::chat(EXAMPLE_OUTPUT)));
    let client = server.client(60);
    let resp = client.call(&prompt).map_err(|e| e.to_string())?;
    ensure(resp.content == EXAMPLE_OUTPUT && resp.retries == 0, || "echo".into())?;
    let body = &server.requests()[0];
    ensure(body["messages"][0]["content"] == prompt.as_str() && body["messages"][0]["role"] == "user", || {
        format!("request body {body}")
    })?;
    ensure(body["messages"].as_array().map(Vec::len) == Some(1) && body["model"] == "stub-model", || {
        format!("request body {body}")
    })?;

    // one network call per unique (prompt, model)
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cache = ResponseCache::open(dir.path()).map_err(|e| e.to_string())?;
    let before = server.calls();
    let first = cached_refine(&cache, &client, "a", "borrower text").map_err(|e| e.to_string())?;
    let second = cached_refine(&cache, &client, "a", "borrower text").map_err(|e| e.to_string())?;
    let items: Vec<(String, String)> = (0..8).map(|i| (format!("d{i}"), "shared text".to_string())).collect();
    let batch = refine_batch(&cache, &client, &items);
    let calls = server.calls() - before;
    ensure(!first.retrieved_from_cache && second.retrieved_from_cache, || "cache flags".into())?;
    ensure(batch.iter().all(Result::is_ok), || "batch failed".into())?;
    ensure(calls == 2, || format!("{calls} calls for 2 unique prompts"))?;

    // rate cap on the fake clock
    let limited = StubServer::start(vec![], Some(Reply::chat(EXAMPLE_OUTPUT)));
    let client = limited.client(3);
    for i in 0..12 {
        client.call(&format!("prompt {i}")).map_err(|e| e.to_string())?;
    }
    let t = limited.arrivals();
    let window = Duration::from_secs(60);
    ensure(t.windows(4).all(|w| w[3] >= w[0] + window), || format!("rate cap exceeded: {t:?}"))?;

    // retries and malformed bodies
    let flaky = StubServer::start(vec![Reply::status(429), Reply::status(429)], Some(Reply::chat("ok")));
    let resp = flaky.client(60).call("p").map_err(|e| e.to_string())?;
    ensure(resp.retries == 2 && resp.content == "ok", || format!("retries {}", resp.retries))?;
    let broken = StubServer::start(vec![], Some(Reply::raw("{not json")));
    let err = broken.client(60).call("p");
    ensure(matches!(err, Err(RefineError::MalformedResponse(_))), || format!("invalid json gave {err:?}"))?;

    Ok(format!("verbatim prompt, example parsed, {calls} calls for 2 unique prompts, 12 calls at 3/min span {:?}, 429x2 -> 2 retries", t[11] - t[0]))
}

// ---------------------------------------------------------------- statistics

fn statistical_tests() -> Outcome {
    let mw = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).map_err(|e| e.to_string())?;
    ensure(mw.p_two_sided == 1.0 / 3.0, || format!("exact p {}", mw.p_two_sided))?;
    let t = welch_proportion_t(0.1, 100, 0.2, 100).map_err(|e| e.to_string())?;
    ensure(t == 2.0, || format!("welch t {t}"))?;
    let mut r = rng(1010);
    for draw in 0..1000 {
        let (n, m) = (r.random_range(1..=30usize), r.random_range(1..=30usize));
        let a: Vec<f64> = (0..n).map(|_| r.random_range(0..10) as f64).collect();
        let b: Vec<f64> = (0..m).map(|_| r.random_range(0..10) as f64).collect();
        let (ua, ub) = (mann_whitney_u(&a, &b).unwrap().u, mann_whitney_u(&b, &a).unwrap().u);
        ensure(ua + ub == (n * m) as f64, || format!("draw {draw}: {ua} + {ub} != {}", n * m))?;
    }
    Ok(format!("exact p {:.6}, welch t {t}, U_a + U_b = nm on 1000 draws", mw.p_two_sided))
}
