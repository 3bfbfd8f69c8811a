//! Batch evaluation harness for clinically-prompted dysarthric speech recognition.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: manifest/prediction ingestion and matched evaluation sets.
//! - [`textnorm`]: the reference/hypothesis normalization pipeline.
//! - [`align`]: edit-distance alignment, WER/CER conventions and per-sample scoring.
//! - [`semscore`]: the phonetic sub-metric, the weighted composite and the scorer client.
//! - [`promptgen`]: prompt-condition compilation, training mixtures and speaker folds.
//! - [`stats`]: paired comparisons, Wilcoxon, bootstrap CIs, BH-FDR and correlations.
//! - [`report`]: stratification, condition matrices and table emission.
//!
//! Library code never prints; diagnostics go through the `log` facade.

pub mod align;
pub mod corpus;
pub mod promptgen;
pub mod report;
pub mod semscore;
pub mod stats;
pub mod textnorm;

pub use align::{
    align_chars, align_words, pool_decomposition, score_sample, wer_from, AlignError, Alignment,
    EditOp, ErrorDecomposition, RefKind, SampleScore,
};
pub use corpus::{
    assert_matched, join_predictions, parse_predictions, Category, ClinicalProfile, Corpus,
    CorpusError, Etiology, EvaluationSet, JoinOutcome, PredictionRecord, Sample, ScoredSample,
    Utterance,
};
pub use promptgen::{
    build_training_mixture, compile_prompt, kfold_speaker_split, ratings_block, severity_label,
    ConditionId, DimensionRegistry, FoldAssignment, GuidanceTable, MixtureCondition,
    MixtureManifest, PromptError, PromptSpec, Tier, TierSelection,
};
pub use report::{
    condition_matrix, emit_report, hallucination_transitions, stratify, BinMode, ConditionMatrix,
    Metric, ReportError, ReportFormat, StratifyKey, Table, Transitions,
};
pub use semscore::{
    combine, jaro_winkler, phonetic_similarity, semscore_sample, soundex, NeuralScorer,
    ScoreOp, ScorerClient, ScorerError, SemError, SemMode, SemWeights, SubScores,
};
pub use stats::{
    bh_fdr, paired_summary, percentile, relative_change, spearman, speaker_level_test,
    wilcoxon_signed_rank, CorrelationReport, EffectLabel, PairedComparison, SpeakerLevelResult,
    StatsError,
};
pub use textnorm::{normalize, word_count, NormalizationProfile, Role, TokenSeq};
