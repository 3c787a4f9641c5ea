//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails.

use std::collections::BTreeSet;
use std::f64::consts::LN_2;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use eventinfo::experiments::{
    count_feature_regression, extract_features, fit_and_predict, filter_icu_24h, format_p,
    format_summary_markdown, redact, run_redaction_grid, stars, truncate_24h, write_grid_csv,
    CountRegressionOptions, GridOptions, Outcome, Pooling, RedactionMethod, RedactionPlan,
    Variant,
};
use eventinfo::infomeasure::{
    fit_thresholds, score_cohort, ContextMode, ScoreMode, ScoreOptions, ScoredTimeline,
    ThresholdOptions,
};
use eventinfo::ingest::{split_cohort, Hospitalization};
use eventinfo::reprspace::{trace, TraceMode};
use eventinfo::seqmodel::{
    cross_entropy, BackoffConfig, BackoffModel, JointTableModel, SequenceModel,
};
use eventinfo::stats::{paired_pvalue, roc_auc, BootstrapOptions, LogisticProblem, Metric};
use eventinfo::synthgen::{generate, oracle_model, GeneratorConfig};
use eventinfo::tokenizer::{bin_value, CutoffTable, Timeline, Tokenizer, Vocabulary, AGE_KEY};

type Outcome_ = Result<String, String>;
type Criterion = (&'static str, Option<Duration>, fn() -> Outcome_);

struct Report {
    results: Vec<(String, bool)>,
}

impl Report {
    fn run(&mut self, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome_) {
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let (mut ok, mut detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        if let Some(b) = budget {
            if elapsed > b {
                ok = false;
                detail.push_str(&format!("; exceeded {}s budget", b.as_secs()));
            }
        }
        let line = format!(
            "{} {name} ({:.1}s): {detail}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        println!("{line}");
        self.results.push((name.to_string(), ok));
    }
}

fn ensure(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn short_stays(seed: u64, n: usize) -> Vec<Timeline> {
    let cfg = short_config(seed, n);
    let tk = Tokenizer::preset();
    let cohort = generate(&cfg).expect("valid config");
    cohort.hospitalizations[..n]
        .iter()
        .map(|h| tk.encode(h).expect("generated stays encode"))
        .collect()
}

fn short_config(seed: u64, n: usize) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        n_patients: n,
        min_stay_hours: 3.0,
        max_events: 60,
        ..Default::default()
    }
}

fn backoff_on(seed: u64) -> BackoffModel {
    BackoffModel::train(&short_stays(seed, 1000), 208, BackoffConfig::default()).expect("trains")
}

/// Event bits from direct per-token queries multiplied in probability space.
fn direct_event_bits(model: &dyn SequenceModel, tl: &Timeline) -> Vec<f64> {
    tl.event_spans
        .iter()
        .map(|s| {
            let p: f64 = s
                .range()
                .map(|t| model.log_prob(&tl.tokens[..t], tl.tokens[t]).unwrap().exp())
                .product();
            -p.log2()
        })
        .collect()
}

fn additivity() -> Outcome_ {
    let tls = short_stays(1, 1000);
    let backoff = backoff_on(2);
    let oracle = oracle_model(&short_config(1, 1000)).unwrap();
    let models: [(&str, &dyn SequenceModel); 2] = [("backoff", &backoff), ("oracle", &oracle)];
    let mut parts = Vec::new();
    for (name, model) in models {
        let opts = ScoreOptions {
            mode: ScoreMode::Raw,
            context: ContextMode::Confined,
        };
        let scored = score_cohort(model, &tls, opts).map_err(|e| e.to_string())?;
        let worst = scored
            .par_iter()
            .map(|s| {
                let direct = direct_event_bits(model, &s.timeline);
                s.event_bits
                    .iter()
                    .zip(&s.timeline.event_spans)
                    .zip(&direct)
                    .map(|((e, span), d)| {
                        let sum: f64 = s.token_bits[span.range()].iter().sum();
                        (e - sum).abs().max((e - d).abs())
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        let events: usize = scored.iter().map(|s| s.event_bits.len()).sum();
        ensure(worst <= 1e-9, format!("{name}: max deviation {worst:e} bits"))?;
        parts.push(format!("{name} max |Δ| {worst:.1e} over {events} events"));
    }
    Ok(format!("1000 timelines; {}", parts.join(", ")))
}

fn chain_rule() -> Outcome_ {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for v in 1..=4usize {
        for t in 1..=6usize {
            let n = v.pow(t as u32);
            // include zero-probability sequences when possible
            let raw: Vec<f64> = (0..n)
                .map(|i| if i % 7 == 3 && n > 7 { 0.0 } else { rng.gen::<f64>() + 0.01 })
                .collect();
            let z: f64 = raw.iter().sum();
            let joint: Vec<f64> = raw.iter().map(|p| p / z).collect();
            let model = JointTableModel::new(v, t, joint.clone()).map_err(|e| e.to_string())?;
            for (i, p) in joint.iter().enumerate() {
                let seq: Vec<u32> = (0..t)
                    .map(|k| ((i / v.pow((t - 1 - k) as u32)) % v) as u32)
                    .collect();
                let bits: f64 = -model.sequence_log_probs(&seq).unwrap().iter().sum::<f64>() / LN_2;
                let expected = -p.log2();
                checked += 1;
                if expected.is_infinite() {
                    ensure(bits == f64::INFINITY, format!("V={v} T={t} seq {seq:?}: {bits} vs ∞"))?;
                } else {
                    worst = worst.max((bits - expected).abs());
                }
            }
        }
    }
    ensure(worst <= 1e-9, format!("max deviation {worst:e}"))?;
    Ok(format!("{checked} sequences, max |Δ| {worst:.1e} bits"))
}

fn tokenizer_golden() -> Outcome_ {
    let cuts = CutoffTable::preset();
    let q = |key: &str, v: f64| bin_value(v, cuts.get(key).unwrap()).unwrap();
    let got = (q(AGE_KEY, 25.0), q(AGE_KEY, 30.0), q("LAB_hemoglobin", 9.0));
    ensure(got == (0, 1, 3), format!("bins {got:?}"))?;
    let vocab = Vocabulary::preset();
    ensure(vocab.len() == 208, format!("vocabulary has {} entries", vocab.len()))?;
    let spot = [(0, "Q0"), (9, "Q9"), (10, "TL_START"), (11, "TL_END"), (207, "POSN_prone")];
    for (i, s) in spot {
        ensure(vocab.token(i) == Some(s), format!("token {i} is {:?}", vocab.token(i)))?;
    }
    let distinct: BTreeSet<&String> = vocab.tokens().iter().collect();
    ensure(distinct.len() == 208, "duplicate tokens".into())?;
    Ok(format!("age 25→Q{}, age 30→Q{}, hemoglobin 9.0→Q{}; 208 tokens", got.0, got.1, got.2))
}

fn triangle() -> Outcome_ {
    let tls = short_stays(4, 1000);
    let backoff = backoff_on(5);
    let oracle = oracle_model(&short_config(4, 1000)).unwrap();
    let models: [(&str, &dyn SequenceModel); 2] = [("backoff", &backoff), ("oracle", &oracle)];
    let mut parts = Vec::new();
    for (name, model) in models {
        let (events, violations) = tls
            .par_iter()
            .map(|tl| {
                let tr = trace(model, tl, TraceMode::Full).unwrap();
                let mut bad = 0;
                for span in &tl.event_spans {
                    let path = tr.path_length(*span).unwrap();
                    let net = tr.net_displacement(*span).unwrap();
                    if net > path * (1.0 + 1e-9) + 1e-300 {
                        bad += 1;
                    }
                }
                (tl.event_spans.len(), bad)
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        ensure(violations == 0, format!("{name}: {violations} of {events} events violate"))?;
        parts.push(format!("{name} {events} events"));
    }
    Ok(format!("no violations; {}", parts.join(", ")))
}

fn grid_cohort(seed: u64, n: usize) -> Vec<Hospitalization> {
    generate(&GeneratorConfig {
        seed,
        n_patients: n,
        ..Default::default()
    })
    .unwrap()
    .hospitalizations
}

fn redaction_structure() -> Outcome_ {
    let cfg = GeneratorConfig {
        seed: 6,
        n_patients: 500,
        ..Default::default()
    };
    let cohort = generate(&cfg).unwrap().hospitalizations;
    let model = oracle_model(&cfg).unwrap();
    let tk = Tokenizer::preset();
    let opts = GridOptions {
        bootstrap: BootstrapOptions {
            replicates: 500,
            seed: 1,
            level: 0.95,
        },
        ..Default::default()
    };
    let grid = run_redaction_grid(&cohort, &tk, &model, &Outcome::ALL, &opts)
        .map_err(|e| e.to_string())?;
    for o in Outcome::ALL {
        let rows: Vec<_> = grid.rows_for(o).collect();
        ensure(rows.len() == 13, format!("{o}: {} rows", rows.len()))?;
        ensure(rows[0].variant == Variant::Original && rows[0].p_values.is_none(), "original row first".into())?;
        let plans: BTreeSet<(String, u32)> = rows[1..]
            .iter()
            .map(|r| match r.variant {
                Variant::Redacted(p) => (p.method.as_str().to_string(), p.percentage),
                Variant::Original => (String::new(), 0),
            })
            .collect();
        ensure(plans.len() == 12 && !plans.contains(&(String::new(), 0)), "12 distinct plans".into())?;
    }

    // star convention in the summary table
    let summary = format_summary_markdown(&grid);
    for (row, line) in grid.rows_for(Outcome::Mortality).zip(summary.lines().skip(2)) {
        let cell = line.split('|').nth(3).unwrap().trim().to_string();
        let expected = row.p_value(Metric::RocAuc).map_or("", stars);
        let got = cell.split(' ').nth(3).unwrap_or("");
        ensure(got == expected, format!("row {line:?}: stars {got:?}, expected {expected:?}"))?;
        ensure(line.starts_with(&format!("| {} | {} |", row.variant.method_label(), row.variant.pct_label())), line.into())?;
    }
    let conv = [(0.0004, "***", "<0.001"), (0.004, "**", "0.004"), (0.04, "*", "0.040"), (0.07, "", "0.070"), (0.5, "", "")];
    for (p, s, cell) in conv {
        ensure(stars(p) == s && format_p(p) == cell, format!("p = {p}"))?;
    }

    // drop-0% equals the direct pipeline
    let analyzed = filter_icu_24h(&cohort);
    let split = split_cohort(&analyzed, opts.split).unwrap();
    let direct: Vec<Timeline> = split.train.iter().map(|h| truncate_24h(&tk.encode(h).unwrap())).collect();
    let direct_test: Vec<Timeline> = split.test.iter().map(|h| truncate_24h(&tk.encode(h).unwrap())).collect();
    let feats = |tls: &[Timeline]| -> Vec<Vec<f64>> {
        tls.iter().map(|t| model.representation(&t.tokens).unwrap()).collect()
    };
    let y: Vec<bool> = split.train.iter().map(|h| h.outcome_inpatient_mortality).collect();
    let probs = fit_and_predict(&feats(&direct), &y, &feats(&direct_test), opts.head_l2).unwrap();
    ensure(
        probs.iter().map(|p| p.to_bits()).eq(grid.predictions[0].iter().map(|p| p.to_bits())),
        "original predictions differ from the direct pipeline".into(),
    )?;
    let zero_drop: Vec<Timeline> = direct
        .iter()
        .map(|t| t.without_events(&BTreeSet::new()))
        .collect();
    ensure(zero_drop == direct, "empty removal changed a timeline".into())?;
    let three: Vec<&Timeline> = direct.iter().filter(|t| t.event_spans.len() < 10).collect();
    for t in &three {
        let p = RedactionPlan::new(RedactionMethod::Top, 10, 0).unwrap();
        let bits = vec![1.0; t.event_spans.len()];
        ensure(redact(t, &bits, &p).unwrap() == **t, "floor(m/10) = 0 removed events".into())?;
    }
    let f1 = extract_features(&model, &direct, Pooling::Last).unwrap();
    ensure(f1 == feats(&direct), "feature extraction differs from direct queries".into())?;

    // byte-identical tables
    let bytes = |g: &eventinfo::experiments::RedactionGrid| {
        let mut v = Vec::new();
        write_grid_csv(&mut v, g).unwrap();
        v.extend(format_summary_markdown(g).into_bytes());
        v
    };
    let again = run_redaction_grid(&cohort, &tk, &model, &Outcome::ALL, &opts).unwrap();
    ensure(bytes(&grid) == bytes(&again), "tables differ between identical runs".into())?;
    Ok(format!(
        "13 rows per outcome, stars match p-values, original path bitwise equal ({} test rows), tables byte-identical",
        grid.n_test
    ))
}

fn planted_config(seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        n_patients: 3000,
        ..Default::default()
    }
}

fn directional() -> Outcome_ {
    let cfg = planted_config(7);
    let cohort = grid_cohort(cfg.seed, cfg.n_patients);
    let model = oracle_model(&cfg).unwrap();
    let opts = GridOptions {
        bootstrap: BootstrapOptions {
            replicates: 10_000,
            seed: 7,
            level: 0.95,
        },
        ..Default::default()
    };
    let grid = run_redaction_grid(&cohort, &Tokenizer::preset(), &model, &[Outcome::Mortality], &opts)
        .map_err(|e| e.to_string())?;
    ensure(grid.n_analyzed >= 2000, format!("only {} stays after the ICU filter", grid.n_analyzed))?;
    let auc = |v: &Variant| grid.row(Outcome::Mortality, v).unwrap().report(Metric::RocAuc).point;
    let orig = auc(&Variant::Original);
    let top40 = Variant::Redacted(RedactionPlan::new(RedactionMethod::Top, 40, 0).unwrap());
    let bottom10 = Variant::Redacted(RedactionPlan::new(RedactionMethod::Bottom, 10, 0).unwrap());
    let p_top = grid.row(Outcome::Mortality, &top40).unwrap().p_value(Metric::RocAuc).unwrap();
    let detail = format!(
        "{} stays after ICU filter, {} test; AUC original {:.3}, top-40 {:.3} (p {:.4}), bottom-10 {:.3}",
        grid.n_analyzed,
        grid.n_test,
        orig,
        auc(&top40),
        p_top,
        auc(&bottom10)
    );
    ensure(auc(&top40) < orig && p_top < 0.05, detail.clone())?;
    ensure((auc(&bottom10) - orig).abs() < 0.02, detail.clone())?;
    Ok(detail)
}

fn scored_window(cfg: &GeneratorConfig) -> (Vec<ScoredTimeline>, Vec<bool>) {
    let cohort = generate(cfg).unwrap().hospitalizations;
    let model = oracle_model(cfg).unwrap();
    let tk = Tokenizer::preset();
    let tls: Vec<Timeline> = cohort.iter().map(|h| truncate_24h(&tk.encode(h).unwrap())).collect();
    let opts = ScoreOptions {
        mode: ScoreMode::Clinical,
        context: ContextMode::Confined,
    };
    let scored = score_cohort(&model, &tls, opts).unwrap();
    (scored, cohort.iter().map(|h| h.outcome_inpatient_mortality).collect())
}

fn count_regression() -> Outcome_ {
    let (scored, labels) = scored_window(&planted_config(8));
    let thr = fit_thresholds(&scored, &ThresholdOptions::default(), "planted").map_err(|e| e.to_string())?;
    let fit = count_feature_regression(&scored, &labels, &thr, &CountRegressionOptions::default())
        .map_err(|e| e.to_string())?;
    let planted: Vec<String> = fit.coefficients[1..]
        .iter()
        .map(|c| format!("{} β {:.3} p {:.1e}", c.name, c.estimate, c.p_value))
        .collect();
    let planted = planted.join(", ");
    ensure(
        fit.coefficients[1..].iter().all(|c| c.estimate > 0.0 && c.p_value < 0.01),
        format!("planted: {planted}"),
    )?;

    let seeds = 200u64;
    let null_p: Vec<Vec<f64>> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let cfg = GeneratorConfig {
                seed: 1000 + s,
                n_patients: 1000,
                ..Default::default()
            }
            .null();
            let (scored, labels) = scored_window(&cfg);
            let thr = fit_thresholds(&scored, &ThresholdOptions::default(), "null").unwrap();
            let fit = count_feature_regression(&scored, &labels, &thr, &CountRegressionOptions::default()).unwrap();
            fit.coefficients[1..].iter().map(|c| c.p_value).collect()
        })
        .collect();
    let rates: Vec<f64> = (0..3)
        .map(|j| null_p.iter().filter(|p| p[j] < 0.05).count() as f64 / seeds as f64)
        .collect();
    let detail = format!("planted: {planted}; null rejection rates {rates:.3?} over {seeds} seeds");
    ensure(rates.iter().all(|r| (r - 0.05).abs() <= 0.03), detail.clone())?;
    Ok(detail)
}

fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut twice_wins, mut pairs) = (0u64, 0u64);
    for (i, si) in scores.iter().enumerate() {
        for (j, sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1;
                twice_wins += if si > sj { 2 } else if si == sj { 1 } else { 0 };
            }
        }
    }
    twice_wins as f64 / (2 * pairs) as f64
}

fn statistics() -> Outcome_ {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in 0..200 {
        let n = rng.gen_range(2..=50);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() * 10.0).round() / 10.0).collect();
        let (a, b) = (roc_auc(&scores, &labels).unwrap(), brute_auc(&scores, &labels));
        ensure(a == b, format!("instance {k}: {a} vs brute force {b}"))?;
    }

    let mut worst_grad = 0.0f64;
    for k in 0..50 {
        let n = 30;
        let d = rng.gen_range(1..5);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let l2 = if k % 2 == 0 { 0.0 } else { 0.3 };
        let prob = LogisticProblem::new(&rows, &labels, l2).unwrap();
        let beta = DVector::from_fn(d + 1, |_, _| rng.gen_range(-1.0..1.0));
        let g = prob.gradient(&beta);
        let h = 1e-6;
        for j in 0..=d {
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (prob.log_likelihood(&up) - prob.log_likelihood(&down)) / (2.0 * h);
            worst_grad = worst_grad.max((fd - g[j]).abs() / g[j].abs().max(1.0));
        }
    }
    ensure(worst_grad <= 1e-5, format!("gradient relative error {worst_grad:e}"))?;

    for k in 0..100u64 {
        let n = 40;
        let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let a: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let reps = [1usize, 9, 99][k as usize % 3];
        let opts = BootstrapOptions { replicates: reps, seed: k, level: 0.95 };
        for m in Metric::ALL {
            let p = paired_pvalue(m, &a, &b, &labels, &opts).unwrap();
            let lo = 1.0 / (reps + 1) as f64;
            ensure((lo..=1.0).contains(&p), format!("p {p} outside [{lo}, 1] with {reps} replicates"))?;
        }
    }

    // identical classifiers: the same head applied to the same rows
    let mut same = 0.0;
    // exchangeable classifiers: two draws from one scoring mechanism
    let mut exch = 0.0;
    for seed in 0..100u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = 200;
        let labels: Vec<bool> = (0..n).map(|_| r.gen_bool(0.3)).collect();
        let draw = |r: &mut ChaCha8Rng| -> Vec<f64> {
            labels.iter().map(|l| (r.gen::<f64>() + if *l { 0.3 } else { 0.0 }) / 1.3).collect()
        };
        let a = draw(&mut r);
        let b = draw(&mut r);
        let opts = BootstrapOptions { replicates: 999, seed, level: 0.95 };
        same += paired_pvalue(Metric::RocAuc, &a, &a, &labels, &opts).unwrap() / 100.0;
        exch += paired_pvalue(Metric::RocAuc, &a, &b, &labels, &opts).unwrap() / 100.0;
    }
    ensure(same >= 0.45 && exch >= 0.45, format!("mean p identical {same:.3}, exchangeable {exch:.3}"))?;
    Ok(format!(
        "AUC exact on 200 instances; gradient rel. error {worst_grad:.1e}; p bounds hold; mean p identical {same:.3}, exchangeable {exch:.3}"
    ))
}

fn backoff_sanity() -> Outcome_ {
    let train = short_stays(10, 1000);
    let held_out = short_stays(11, 300);
    let mut train_bits = Vec::new();
    let mut held = 0.0;
    for order in 1..=4 {
        let cfg = BackoffConfig { order, ..Default::default() };
        let m = BackoffModel::train(&train, 208, cfg).map_err(|e| e.to_string())?;
        train_bits.push(cross_entropy(&m, &train).unwrap().bits_per_token);
        if order == 4 {
            held = cross_entropy(&m, &held_out).unwrap().bits_per_token;
        }
    }
    let detail = format!(
        "held-out {held:.3} bits/token vs log2 208 = {:.3}; training bits by order {train_bits:.4?}",
        208f64.log2()
    );
    ensure(held < 208f64.log2(), detail.clone())?;
    ensure(train_bits.windows(2).all(|w| w[1] <= w[0]), detail.clone())?;
    Ok(detail)
}

fn main() {
    let only: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut report = Report { results: Vec::new() };
    let criteria: Vec<Criterion> = vec![
        ("additivity", Some(Duration::from_secs(60)), additivity),
        ("chain_rule", None, chain_rule),
        ("tokenizer_golden", None, tokenizer_golden),
        ("triangle_inequality", None, triangle),
        ("redaction_structure", None, redaction_structure),
        ("directional_redaction", Some(Duration::from_secs(600)), directional),
        ("count_feature_regression", None, count_regression),
        ("statistics_oracles", None, statistics),
        ("backoff_sanity", None, backoff_sanity),
    ];
    for (name, budget, f) in criteria {
        if only.as_deref().is_some_and(|o| !name.contains(o)) {
            continue;
        }
        report.run(name, budget, f);
    }
    let failed = report.results.iter().filter(|r| !r.1).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        report.results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
