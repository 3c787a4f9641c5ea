use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use eventinfo::experiments::{
    format_outcome_markdown, format_summary_markdown, run_redaction_grid, write_grid_csv, GridOptions,
    Outcome, Pooling,
};
use eventinfo::infomeasure::{
    count_features, fit_thresholds, mean_bits, read_scored_jsonl, score_cohort, write_scored_jsonl,
    ContextMode, InfoThresholds, ScoreMode, ScoreOptions, ScoredTimeline, ThresholdOptions,
};
use eventinfo::ingest::{parse_tables, read_cohort_jsonl, write_cohort_jsonl, IngestOptions, InputFormat, SplitPolicy};
use eventinfo::reprspace::{attach_traces, TraceMode};
use eventinfo::report::{find_record, ColorScale, HighlightReport};
use eventinfo::seqmodel::{BackoffConfig, BackoffModel, Endpoint, ExternalModel, ModelFile, SequenceModel};
use eventinfo::stats::BootstrapOptions;
use eventinfo::synthgen::{generate, oracle_model, write_sidecar, GeneratorConfig};
use eventinfo::tokenizer::{
    collect_numeric_observations, fit_vocabulary, read_timelines_file, write_timelines_jsonl, CutoffTable,
    Tokenizer, Vocabulary,
};

use crate::{
    CliError, Context, ContextArg, FitCutoffsArgs, HighlightArgs, InfoStatsArgs, IngestArgs, ModeArg,
    ModelSource, RedactGridArgs, ReportFormat, ScoreArgs, SynthArgs, TableFormat, TokenizeArgs, TrainArgs,
};

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).ctx(path.display())
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).ctx(path.display())
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), CliError> {
    w.flush().ctx(path.display())
}

/// File name without directories, so outputs do not depend on where inputs live.
fn file_label(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn load_vocab(path: Option<&Path>) -> Result<Vocabulary, CliError> {
    match path {
        Some(p) => Vocabulary::read(p).ctx("reading vocabulary"),
        None => Ok(Vocabulary::preset()),
    }
}

fn load_cutoffs(path: Option<&Path>) -> Result<CutoffTable, CliError> {
    match path {
        Some(p) => CutoffTable::read(p).ctx("reading cutoffs"),
        None => Ok(CutoffTable::preset()),
    }
}

fn load_model(source: &ModelSource, vocab: &Vocabulary) -> Result<Box<dyn SequenceModel>, CliError> {
    let model: Box<dyn SequenceModel> = match (&source.model, &source.oracle) {
        (Some(p), _) => ModelFile::read(p)
            .and_then(ModelFile::load)
            .ctx(format!("loading model {}", p.display()))?,
        (None, Some(p)) => {
            let cfg = GeneratorConfig::read(p).ctx("reading generator config")?;
            Box::new(oracle_model(&cfg).ctx("building oracle")?)
        }
        (None, None) => return Err(usage("one of --model or --oracle is required")),
    };
    if model.vocab_size() != vocab.len() {
        return Err(CliError::Runtime(format!(
            "model vocabulary has {} entries but the vocabulary has {}",
            model.vocab_size(),
            vocab.len()
        )));
    }
    Ok(model)
}

fn check_hours(flag: &str, h: f64) -> Result<(), CliError> {
    if h.is_finite() && h >= 0.0 {
        Ok(())
    } else {
        Err(usage(format!("{flag} must be a non-negative number of hours, got {h}")))
    }
}

pub fn ingest(a: IngestArgs) -> Result<(), CliError> {
    check_hours("--min-stay-hours", a.min_stay_hours)?;
    let format = match a.format {
        TableFormat::Csv => InputFormat::Csv,
        TableFormat::Jsonl => InputFormat::Jsonl,
    };
    let opts = IngestOptions {
        min_stay_hours: a.min_stay_hours,
        filter_short_stays: a.drop_short,
    };
    let cohort = parse_tables(&a.files, format, &opts).ctx("parsing tables")?;
    write_cohort_jsonl(&a.out, &cohort).ctx("writing cohort")?;
    eprintln!("ingested {} hospitalizations", cohort.len());
    Ok(())
}

pub fn fit_cutoffs(a: FitCutoffsArgs) -> Result<(), CliError> {
    let (table, vocab) = match (&a.input, a.preset) {
        (_, Some(_)) => (CutoffTable::preset(), Vocabulary::preset()),
        (Some(input), None) => {
            let cohort = read_cohort_jsonl(input).ctx("reading cohort")?;
            let table = CutoffTable::fit(&collect_numeric_observations(&cohort)).ctx("fitting cutoffs")?;
            let vocab = fit_vocabulary(&cohort, &table).ctx("fitting vocabulary")?;
            (table, vocab)
        }
        (None, None) => return Err(usage("one of --in or --preset is required")),
    };
    table.write(&a.out).ctx("writing cutoffs")?;
    if let Some(p) = &a.vocab_out {
        vocab.write(p).ctx("writing vocabulary")?;
    }
    eprintln!("wrote cutoffs for {} categories", table.len());
    Ok(())
}

pub fn tokenize(a: TokenizeArgs) -> Result<(), CliError> {
    let tokenizer = Tokenizer::new(
        load_vocab(a.vocab.as_deref())?,
        load_cutoffs(a.cutoffs.as_deref())?,
        a.context_limit,
    )
    .map_err(|e| usage(e.to_string()))?;
    let cohort = read_cohort_jsonl(&a.cohort).ctx("reading cohort")?;
    let timelines = tokenizer.encode_all(&cohort).ctx("tokenizing")?;
    let mut w = create(&a.out)?;
    write_timelines_jsonl(&mut w, &timelines).ctx("writing timelines")?;
    finish(w, &a.out)?;
    let truncated = timelines.iter().filter(|t| t.truncated()).count();
    eprintln!("encoded {} timelines, {truncated} truncated", timelines.len());
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let vocab = load_vocab(a.vocab.as_deref())?;
    let file = match (&a.external, &a.timelines) {
        (Some(e), _) => {
            let endpoint: Endpoint = e.parse().map_err(|e: eventinfo::seqmodel::ModelError| usage(e.to_string()))?;
            let model = ExternalModel::connect(&endpoint).ctx(format!("connecting to {endpoint}"))?;
            if model.vocab_size() != vocab.len() {
                return Err(CliError::Runtime(format!(
                    "{endpoint} serves {} tokens but the vocabulary has {}",
                    model.vocab_size(),
                    vocab.len()
                )));
            }
            ModelFile::External { endpoint }
        }
        (None, Some(path)) => {
            let config = BackoffConfig {
                order: a.order,
                alpha: a.alpha,
                discount: a.discount,
            };
            config.validate().map_err(|e| usage(e.to_string()))?;
            let timelines = read_timelines_file(path).ctx("reading timelines")?;
            let model = BackoffModel::train(&timelines, vocab.len(), config).ctx("training")?;
            let tokens: usize = timelines.iter().map(|t| t.len()).sum();
            eprintln!("trained order-{} back-off model on {tokens} tokens", a.order);
            ModelFile::Backoff(model)
        }
        (None, None) => return Err(usage("one of --timelines or --external is required")),
    };
    file.write(&a.out).ctx("writing model")
}

pub fn score(a: ScoreArgs) -> Result<(), CliError> {
    if let Some(h) = a.first_hours {
        check_hours("--first-hours", h)?;
    }
    check_hours("--window-hours", a.window_hours)?;
    if a.cap.is_nan() || a.cap <= 0.0 {
        return Err(usage("--cap must be positive"));
    }
    let vocab = load_vocab(a.vocab.as_deref())?;
    let model = load_model(&a.source, &vocab)?;
    let mut timelines = read_timelines_file(&a.timelines).ctx("reading timelines")?;
    if let Some(h) = a.first_hours {
        let secs = (h * 3600.0).round() as i64;
        timelines = timelines
            .iter()
            .map(|t| t.window_until(t.token_times.first().copied().unwrap_or(0) + secs))
            .collect();
    }
    let opts = ScoreOptions {
        mode: match a.mode {
            ModeArg::Clinical => ScoreMode::Clinical,
            ModeArg::Raw => ScoreMode::Raw,
        },
        context: match a.context {
            ContextArg::Confined => ContextMode::Confined,
            ContextArg::Packed => ContextMode::Packed,
        },
    };
    let mut scored = score_cohort(model.as_ref(), &timelines, opts).ctx("scoring")?;
    if a.deltas {
        attach_traces(model.as_ref(), &mut scored, TraceMode::Streaming).ctx("tracing representations")?;
    }
    let thresholds = match a.thresholds.as_deref() {
        None => None,
        Some("fit") => {
            let opts = ThresholdOptions {
                window_hours: a.window_hours,
                ..Default::default()
            };
            let source = file_label(&a.timelines);
            Some(fit_thresholds(&scored, &opts, &source).ctx("fitting thresholds")?)
        }
        Some(path) => Some(InfoThresholds::read(Path::new(path)).ctx("reading thresholds")?),
    };
    let mut w = create(&a.out)?;
    write_scored_jsonl(&mut w, &scored, &vocab, thresholds.as_ref(), a.cap).ctx("writing scores")?;
    finish(w, &a.out)?;
    if let (Some(t), Some(p)) = (&thresholds, &a.thresholds_out) {
        t.write(p).ctx("writing thresholds")?;
    }
    let tokens: usize = scored.iter().map(|s| s.token_bits.len()).sum();
    match mean_bits(&scored) {
        Ok(m) => eprintln!("scored {} timelines, {tokens} tokens, {m:.4} bits/token", scored.len()),
        Err(_) => eprintln!("scored {} timelines", scored.len()),
    }
    Ok(())
}

pub fn highlight(a: HighlightArgs) -> Result<(), CliError> {
    if a.first_n == 0 {
        return Err(usage("--first-n must be at least 1"));
    }
    let records = read_scored_jsonl(open(&a.scored)?).ctx("reading scored timelines")?;
    let scale = ColorScale::fit(&records).ctx("fitting color scale")?;
    let record = find_record(&records, &a.id).ctx("highlight")?;
    let report = HighlightReport::build(record, &scale, a.first_n);
    let text = match a.format {
        ReportFormat::Ansi => report.render_ansi(),
        ReportFormat::Svg => report.render_svg(),
    };
    match &a.out {
        Some(p) => std::fs::write(p, text).ctx(p.display()),
        None => std::io::stdout().write_all(text.as_bytes()).ctx("writing report"),
    }
}

pub fn redact_grid(a: RedactGridArgs) -> Result<(), CliError> {
    let outcomes = a
        .outcomes
        .iter()
        .map(|o| o.parse::<Outcome>().map_err(|e| usage(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let pooling: Pooling = a.pooling.parse().map_err(usage)?;
    if a.boot == 0 {
        return Err(usage("--boot must be at least 1"));
    }
    if !(a.l2 >= 0.0 && a.l2.is_finite()) {
        return Err(usage("--l2 must be a non-negative number"));
    }
    let vocab = load_vocab(a.vocab.as_deref())?;
    let model = load_model(&a.source, &vocab)?;
    let tokenizer = Tokenizer::new(vocab, load_cutoffs(a.cutoffs.as_deref())?, eventinfo::tokenizer::DEFAULT_CONTEXT_LIMIT)
        .map_err(|e| usage(e.to_string()))?;
    let cohort = read_cohort_jsonl(&a.cohort).ctx("reading cohort")?;
    let opts = GridOptions {
        split: SplitPolicy::ByPatientRandom {
            fractions: [0.7, 0.0, 0.3],
            seed: a.seed,
        },
        icu_filter: !a.no_icu_filter,
        pooling,
        head_l2: a.l2,
        bootstrap: BootstrapOptions {
            replicates: a.boot,
            seed: a.seed,
            level: 0.95,
        },
        redaction_seed: a.seed,
    };
    let grid = run_redaction_grid(&cohort, &tokenizer, model.as_ref(), &outcomes, &opts).ctx("redaction grid")?;
    let mut w = create(&a.out)?;
    write_grid_csv(&mut w, &grid).ctx("writing results")?;
    finish(w, &a.out)?;
    let summary = format_summary_markdown(&grid);
    if let Some(p) = &a.markdown {
        let mut md = format!(
            "{} stays analyzed ({} train, {} test) of {}\n\n{summary}",
            grid.n_analyzed, grid.n_train, grid.n_test, grid.n_cohort
        );
        for o in &outcomes {
            md.push_str(&format!("\n{o}\n\n{}", format_outcome_markdown(&grid, *o)));
        }
        std::fs::write(p, md).ctx(p.display())?;
    }
    print!("{summary}");
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(p) => GeneratorConfig::read(p).ctx("reading generator config")?,
        None => GeneratorConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.n_patients {
        cfg.n_patients = n;
    }
    if a.null {
        cfg = cfg.null();
    }
    let cohort = generate(&cfg).ctx("generating cohort")?;
    write_cohort_jsonl(&a.out, &cohort.hospitalizations).ctx("writing cohort")?;
    if let Some(p) = &a.sidecar {
        let mut w = create(p)?;
        write_sidecar(&mut w, &cohort.planted).ctx("writing sidecar")?;
        finish(w, p)?;
    }
    eprintln!(
        "generated {} hospitalizations, {} planted events",
        cohort.hospitalizations.len(),
        cohort.planted.len()
    );
    Ok(())
}

pub fn info_stats(a: InfoStatsArgs) -> Result<(), CliError> {
    check_hours("--window-hours", a.window_hours)?;
    let vocab = load_vocab(a.vocab.as_deref())?;
    let records = read_scored_jsonl(open(&a.scored)?).ctx("reading scored timelines")?;
    let scored: Vec<ScoredTimeline> = records
        .iter()
        .map(|r| r.to_scored(&vocab))
        .collect::<Result<_, _>>()
        .ctx("reading scored timelines")?;
    let thresholds = match &a.thresholds {
        Some(p) => InfoThresholds::read(p).ctx("reading thresholds")?,
        None => {
            let opts = ThresholdOptions {
                window_hours: a.window_hours,
                ..Default::default()
            };
            fit_thresholds(&scored, &opts, &file_label(&a.scored)).ctx("fitting thresholds")?
        }
    };
    let mean = mean_bits(&scored).ctx("mean bits")?;
    let tokens: usize = scored.iter().map(|s| s.token_bits.len()).sum();
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    let mut row = |scope: &str, name: &str, value: String| w.write_record([scope, name, value.as_str()]);
    let rows = (|| -> csv::Result<()> {
        row("scope", "name", "value".into())?;
        row("cohort", "timelines", scored.len().to_string())?;
        row("cohort", "tokens", tokens.to_string())?;
        row("cohort", "mean_bits", format!("{mean:.6}"))?;
        row("cohort", "window_hours", a.window_hours.to_string())?;
        row("cohort", "q95_token", format!("{:.6}", thresholds.q95_token))?;
        row("cohort", "q95_event", format!("{:.6}", thresholds.q95_event))?;
        row("cohort", "q99_event", format!("{:.6}", thresholds.q99_event))?;
        for s in &scored {
            let id = s.timeline.hospitalization_id.as_str();
            let c = count_features(s, &thresholds, a.window_hours);
            row(id, "tokens", s.token_bits.len().to_string())?;
            row(id, "mean_bits", format!("{:.6}", s.total_bits() / s.token_bits.len().max(1) as f64))?;
            row(id, "T_ge95", c.t_ge95.to_string())?;
            row(id, "E_ge95_lt99", c.e_ge95_lt99.to_string())?;
            row(id, "E_ge99", c.e_ge99.to_string())?;
        }
        Ok(())
    })();
    rows.ctx("writing summary")?;
    w.flush().ctx(a.out.display())?;
    eprintln!("{} timelines, {mean:.4} bits/token", scored.len());
    Ok(())
}
