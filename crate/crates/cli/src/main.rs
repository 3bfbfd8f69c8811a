//! `dyseval` — batch front end for the evaluation harness.
//!
//! Exit codes: 0 success, 2 validation failure, 3 scorer unavailable.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dyseval_core::corpus::{parse_manifest, parse_scored, write_scored};
use dyseval_core::report::{comparison_table, emit_report, summary_table, transitions_table, run_means};
use dyseval_core::{
    bh_fdr, build_training_mixture, compile_prompt, condition_matrix, join_predictions,
    kfold_speaker_split, paired_summary, parse_predictions, score_sample, semscore_sample,
    speaker_level_test, stratify, hallucination_transitions, BinMode, ConditionId, Corpus,
    DimensionRegistry, Etiology, GuidanceTable, Metric, NeuralScorer, NormalizationProfile,
    PairedComparison, PromptError, PromptSpec, ReportFormat, ScoredSample, ScorerClient,
    ScorerError, SemError, SemMode, SemWeights, StratifyKey,
};

#[derive(Parser)]
#[command(name = "dyseval", version, about = "Dysarthric-speech ASR evaluation harness")]
struct Cli {
    /// Seed for bootstrap intervals, fold splits and training mixtures.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON file overriding the embedded normalization tables.
    #[arg(long, global = true, value_name = "PATH")]
    norm_tables: Option<PathBuf>,
    /// Neural scorer address: `stdio:<command>` or `tcp:<host:port>`.
    #[arg(long, global = true, value_name = "ADDR")]
    scorer: Option<String>,
    /// Compute SemScore from the phonetic sub-metric alone (no scorer).
    #[arg(long, global = true)]
    phonetic_only: bool,
    /// Treat unmatched predictions and unscorable samples as errors.
    #[arg(long, global = true)]
    strict: bool,
    /// Per-request scorer timeout in seconds.
    #[arg(long, global = true, default_value_t = 30.0)]
    scorer_timeout: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score predictions against a manifest; writes per-sample JSON Lines.
    Score(ScoreArgs),
    /// Paired comparisons of conditions against a base condition, FDR-adjusted.
    Compare(CompareArgs),
    /// Stratified summary tables or a condition x model matrix.
    Report(ReportArgs),
    /// Render clinical prompts.
    Prompts(PromptArgs),
    /// Speaker-disjoint k-fold assignment.
    Split(SplitArgs),
    /// Seeded training-mixture manifest.
    Mixture(MixtureArgs),
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    #[arg(long, value_name = "PATH")]
    profiles: PathBuf,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    /// Output path; stdout when omitted.
    #[arg(short, long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, value_name = "PATH")]
    predictions: PathBuf,
    /// Per-sample output; stdout when omitted.
    #[arg(long, short = 'o', value_name = "PATH")]
    emit_samples: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Score files (JSON Lines from `score`); concatenated.
    #[arg(required = true)]
    scores: Vec<PathBuf>,
    /// Base condition id.
    #[arg(long, default_value = "P0")]
    base: String,
    /// Restrict to these treatment conditions (default: every other condition).
    #[arg(long)]
    treat: Vec<String>,
    #[arg(long, default_value = "wer")]
    metric: Metric,
    /// Emit hallucination transitions instead of paired statistics.
    #[arg(long)]
    transitions: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    scores: Vec<PathBuf>,
    #[arg(long, default_value = "etiology")]
    by: StratifyKey,
    #[arg(long, default_value = "range")]
    bin_mode: BinMode,
    /// Emit the condition x model matrix for this metric instead.
    #[arg(long, value_name = "METRIC")]
    matrix: Option<Metric>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct PromptArgs {
    #[arg(long)]
    condition: Option<ConditionId>,
    #[arg(long)]
    etiology: Option<Etiology>,
    /// JSON object of dimension name to 1-7 rating.
    #[arg(long, value_name = "PATH")]
    ratings: Option<PathBuf>,
    /// Prior-pass transcript for the follow-up condition.
    #[arg(long)]
    prior: Option<String>,
    /// Also state the correct phrasing in the follow-up block.
    #[arg(long, requires = "prior")]
    correct_phrasing: Option<String>,
    /// JSON object overriding guidance text per etiology.
    #[arg(long, value_name = "PATH")]
    guidance: Option<PathBuf>,
    /// Render every condition for every manifest sample as JSON Lines.
    #[arg(long, requires_all = ["manifest", "profiles"], conflicts_with_all = ["etiology", "ratings", "prior"])]
    all: bool,
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    profiles: Option<PathBuf>,
    /// Predictions whose zero-context hypotheses feed the follow-up condition.
    #[arg(long, value_name = "PATH", requires = "all")]
    priors: Option<PathBuf>,
    #[arg(short, long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    #[arg(short, long, default_value_t = 5)]
    k: usize,
    #[arg(short, long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MixtureArgs {
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    #[arg(short, long, value_name = "PATH")]
    output: Option<PathBuf>,
}

// ---------------------------------------------------------------------------

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn load_corpus(args: &CorpusArgs, registry: &DimensionRegistry) -> Result<Corpus> {
    Corpus::parse(open(&args.manifest)?, open(&args.profiles)?, registry)
        .with_context(|| format!("loading {} / {}", args.manifest.display(), args.profiles.display()))
}

fn load_scores(paths: &[PathBuf]) -> Result<Vec<ScoredSample>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(parse_scored(open(p)?).with_context(|| format!("reading {}", p.display()))?);
    }
    Ok(all)
}

/// Canonical spelling of a condition id when it parses, otherwise unchanged.
fn canonical_condition(id: &str) -> String {
    id.parse::<ConditionId>()
        .map(|c| c.as_str().to_string())
        .unwrap_or_else(|_| id.to_string())
}

fn norm_profile(cli: &Cli) -> Result<NormalizationProfile> {
    match &cli.norm_tables {
        Some(p) => NormalizationProfile::from_path(p)
            .with_context(|| format!("loading normalization tables {}", p.display())),
        None => Ok(NormalizationProfile::default()),
    }
}

// ---------------------------------------------------------------------------

fn cmd_score(cli: &Cli, args: &ScoreArgs) -> Result<()> {
    let registry = DimensionRegistry::default();
    let norm = norm_profile(cli)?;
    let corpus = load_corpus(&args.corpus, &registry)?;
    let predictions = parse_predictions(open(&args.predictions)?)
        .with_context(|| format!("reading {}", args.predictions.display()))?;

    let client = match (&cli.scorer, cli.phonetic_only) {
        (Some(addr), false) => Some(
            ScorerClient::connect(addr, Duration::from_secs_f64(cli.scorer_timeout))
                .context("connecting to scorer")?,
        ),
        (Some(_), true) => {
            log::warn!("--phonetic-only given; ignoring --scorer");
            None
        }
        (None, _) => None,
    };
    let semscore = client.is_some() || cli.phonetic_only;
    let mode = if cli.phonetic_only { SemMode::PhoneticOnly } else { SemMode::Full };
    let weights = SemWeights::default();
    let scorer = client.as_ref().map(|c| c as &dyn NeuralScorer);

    let mut runs: Vec<(&str, &str)> = predictions
        .iter()
        .map(|p| (p.model_id.as_str(), p.condition_id.as_str()))
        .collect();
    runs.sort_unstable();
    runs.dedup();

    let mut scored = Vec::new();
    let mut skipped = 0usize;
    for (model, condition) in runs {
        let joined = join_predictions(&corpus, &predictions, condition, model, cli.strict)?;
        if joined.missing > 0 {
            log::warn!("{model}/{condition}: {} utterances without a prediction", joined.missing);
        }
        if joined.unmatched_predictions > 0 {
            log::warn!(
                "{model}/{condition}: {} predictions for unknown utterances skipped",
                joined.unmatched_predictions
            );
        }
        for sample in &joined.set.samples {
            let hyp = &sample.prediction.hypothesis;
            let id = &sample.utterance.utterance_id;
            let mut score = match score_sample(hyp, sample.utterance, &norm) {
                Ok(s) => s,
                Err(e) if !cli.strict => {
                    log::warn!("{model}/{condition}/{id}: {e}; skipped");
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e).with_context(|| format!("scoring {id}")),
            };
            if semscore {
                let s = semscore_sample(hyp, sample.utterance, &norm, scorer, mode, &weights)
                    .with_context(|| format!("SemScore for {id}"))?;
                score.semscore = Some(s);
            }
            scored.push(ScoredSample::new(sample, score));
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} samples skipped");
    }
    let mut out = sink(args.emit_samples.as_deref())?;
    write_scored(&scored, &mut out)?;
    out.flush()?;
    log::info!("scored {} samples", scored.len());
    Ok(())
}

fn metric_value(s: &ScoredSample, metric: Metric) -> Option<f64> {
    match metric {
        Metric::Wer => Some(s.score.wer),
        Metric::Cer => Some(s.score.cer),
        Metric::SemScore => s.score.semscore,
    }
}

fn cmd_compare(cli: &Cli, args: &CompareArgs) -> Result<()> {
    let samples = load_scores(&args.scores)?;
    let base = canonical_condition(&args.base);
    let wanted: Vec<String> = args.treat.iter().map(|t| canonical_condition(t)).collect();

    // (model, condition) -> utterance id -> sample
    let mut runs: BTreeMap<(String, String), BTreeMap<&str, &ScoredSample>> = BTreeMap::new();
    for s in &samples {
        let key = (s.model_id.clone(), canonical_condition(&s.condition_id));
        if runs.entry(key).or_default().insert(&s.utterance_id, s).is_some() {
            bail!("duplicate score for {} under {}/{}", s.utterance_id, s.model_id, s.condition_id);
        }
    }
    let mut pairs = Vec::new();
    for ((model, condition), treat) in &runs {
        if *condition == base || (!wanted.is_empty() && !wanted.contains(condition)) {
            continue;
        }
        let Some(base_run) = runs.get(&(model.clone(), base.clone())) else {
            log::warn!("{model}: no {base} run to compare {condition} against");
            continue;
        };
        // matched intersection, utterance-id order
        let matched: Vec<(&ScoredSample, &ScoredSample)> = base_run
            .iter()
            .filter_map(|(id, b)| treat.get(id).map(|t| (*b, *t)))
            .collect();
        if matched.is_empty() {
            log::warn!("{model}: {base} and {condition} share no utterances");
            continue;
        }
        pairs.push((format!("{model}: {base} -> {condition}"), matched));
    }
    if pairs.is_empty() {
        bail!("no comparable (base, treatment) runs found");
    }

    let mut out = sink(args.out.output.as_deref())?;
    if args.transitions {
        let rows = pairs
            .iter()
            .map(|(label, m)| {
                let b: Vec<bool> = m.iter().map(|(b, _)| b.score.hallucinated).collect();
                let t: Vec<bool> = m.iter().map(|(_, t)| t.score.hallucinated).collect();
                Ok((label.clone(), hallucination_transitions(&b, &t)?))
            })
            .collect::<Result<Vec<_>>>()?;
        emit_report(&transitions_table(&rows), args.out.format, &mut out)?;
        out.flush()?;
        return Ok(());
    }

    let mut comparisons: Vec<(String, PairedComparison)> = Vec::with_capacity(pairs.len());
    for (label, m) in &pairs {
        let mut base_v = Vec::with_capacity(m.len());
        let mut treat_v = Vec::with_capacity(m.len());
        let mut speakers = Vec::with_capacity(m.len());
        for (b, t) in m {
            match (metric_value(b, args.metric), metric_value(t, args.metric)) {
                (Some(x), Some(y)) => {
                    base_v.push(x);
                    treat_v.push(y);
                    speakers.push(b.speaker_id.as_str());
                }
                _ => bail!("{label}: {} missing for {}", metric_name(args.metric), b.utterance_id),
            }
        }
        let mut c = paired_summary(&base_v, &treat_v).with_context(|| label.clone())?;
        match speaker_level_test(&base_v, &treat_v, &speakers, cli.seed) {
            Ok(s) => c.ci95 = Some(s.ci95),
            Err(e) => log::warn!("{label}: no speaker-level interval ({e})"),
        }
        comparisons.push((label.clone(), c));
    }
    let raw: Vec<f64> = comparisons.iter().map(|(_, c)| c.p_raw).collect();
    for ((_, c), adj) in comparisons.iter_mut().zip(bh_fdr(&raw)?) {
        c.p_adjusted = Some(adj);
    }
    emit_report(&comparison_table(&comparisons), args.out.format, &mut out)?;
    out.flush()?;
    Ok(())
}

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::Wer => "wer",
        Metric::Cer => "cer",
        Metric::SemScore => "semscore",
    }
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let samples = load_scores(&args.scores)?;
    let table = match args.matrix {
        Some(metric) => {
            let means = run_means(&samples, metric);
            condition_matrix(means.into_iter().map(|(m, c, v)| (m, canonical_condition(&c), v)), metric)?
                .to_table()
        }
        None => summary_table(args.by, &stratify(&samples, args.by, args.bin_mode))?,
    };
    let mut out = sink(args.out.output.as_deref())?;
    emit_report(&table, args.out.format, &mut out)?;
    out.flush()?;
    Ok(())
}

fn read_ratings(path: &Path) -> Result<BTreeMap<String, u8>> {
    let raw: BTreeMap<String, i64> = serde_json::from_reader(open(path)?)
        .with_context(|| format!("{}: expected a JSON object of ratings", path.display()))?;
    raw.into_iter()
        .map(|(k, v)| {
            let r = u8::try_from(v)
                .ok()
                .filter(|r| (1..=7).contains(r))
                .ok_or(PromptError::OutOfRange(v))?;
            Ok((k, r))
        })
        .collect()
}

#[derive(Serialize)]
struct PromptLine<'a> {
    utterance_id: &'a str,
    speaker_id: &'a str,
    #[serde(flatten)]
    spec: PromptSpec,
}

fn cmd_prompts(args: &PromptArgs) -> Result<()> {
    let registry = DimensionRegistry::default();
    let guidance = match &args.guidance {
        Some(p) => GuidanceTable::from_path(p)?,
        None => GuidanceTable::default(),
    };
    let mut out = sink(args.output.as_deref())?;

    if !args.all {
        let (Some(condition), Some(etiology)) = (args.condition, args.etiology) else {
            bail!("--condition and --etiology are required unless --all is given");
        };
        let mut spec = PromptSpec::new(condition, etiology);
        if let Some(p) = &args.ratings {
            spec = spec.with_ratings(read_ratings(p)?);
        }
        if let Some(prior) = &args.prior {
            spec = spec.with_prior(prior.clone());
        }
        spec.correct_phrasing = args.correct_phrasing.clone();
        writeln!(out, "{}", compile_prompt(&spec, &registry, &guidance)?)?;
        out.flush()?;
        return Ok(());
    }

    let corpus = load_corpus(
        &CorpusArgs {
            manifest: args.manifest.clone().expect("required by clap"),
            profiles: args.profiles.clone().expect("required by clap"),
        },
        &registry,
    )?;
    let mut priors: HashMap<String, String> = HashMap::new();
    if let Some(p) = &args.priors {
        for rec in parse_predictions(open(p)?)? {
            if rec.condition_id.parse::<ConditionId>() == Ok(ConditionId::P0) {
                priors.entry(rec.utterance_id).or_insert(rec.hypothesis);
            }
        }
    }
    let conditions: Vec<ConditionId> = match args.condition {
        Some(c) => vec![c],
        None => ConditionId::ALL.to_vec(),
    };
    let mut no_prior = 0usize;
    for u in corpus.utterances() {
        let profile = corpus.profile_for(u).expect("validated corpus");
        for &condition in &conditions {
            let mut spec = PromptSpec::new(condition, profile.etiology).with_ratings(profile.ratings.clone());
            if condition == ConditionId::P3Followup {
                match priors.get(&u.utterance_id) {
                    Some(p) => spec = spec.with_prior(p.clone()),
                    None => {
                        no_prior += 1;
                        continue;
                    }
                }
            }
            let spec = spec.compile(&registry, &guidance)?;
            write_json_line(
                &mut out,
                &PromptLine {
                    utterance_id: &u.utterance_id,
                    speaker_id: &u.speaker_id,
                    spec,
                },
            )?;
        }
    }
    if no_prior > 0 {
        log::warn!("{no_prior} follow-up prompts skipped for lack of a prior transcript");
    }
    out.flush()?;
    Ok(())
}

fn cmd_split(cli: &Cli, args: &SplitArgs) -> Result<()> {
    let utterances = parse_manifest(open(&args.manifest)?)?;
    let speakers: Vec<String> = utterances.into_iter().map(|u| u.speaker_id).collect();
    let folds = kfold_speaker_split(&speakers, args.k, cli.seed)?;
    let mut out = sink(args.output.as_deref())?;
    write_json_line(&mut out, &folds)?;
    out.flush()?;
    Ok(())
}

fn cmd_mixture(cli: &Cli, args: &MixtureArgs) -> Result<()> {
    let utterances = parse_manifest(open(&args.manifest)?)?;
    let manifest = build_training_mixture(utterances.iter().map(|u| u.utterance_id.as_str()), cli.seed);
    let mut out = sink(args.output.as_deref())?;
    write_json_line(&mut out, &manifest)?;
    out.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Score(a) => cmd_score(cli, a),
        Command::Compare(a) => cmd_compare(cli, a),
        Command::Report(a) => cmd_report(a),
        Command::Prompts(a) => cmd_prompts(a),
        Command::Split(a) => cmd_split(cli, a),
        Command::Mixture(a) => cmd_mixture(cli, a),
    }
}

fn scorer_unavailable(err: &anyhow::Error) -> bool {
    let fatal = |e: &ScorerError| matches!(e, ScorerError::Unavailable(_) | ScorerError::Timeout { .. });
    err.chain().any(|e| {
        e.downcast_ref::<ScorerError>().is_some_and(fatal)
            || matches!(e.downcast_ref::<SemError>(), Some(SemError::Scorer(s)) if fatal(s))
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if scorer_unavailable(&e) {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
