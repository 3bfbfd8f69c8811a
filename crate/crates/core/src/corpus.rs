//! Evaluation data model: utterance manifests, clinical profiles, predictions
//! and the matched evaluation sets built from them.
//!
//! Manifests and profile files are UTF-8 JSON Lines. An optional first record
//! `{"schema": 1}` pins the schema version; any other version is rejected.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::SampleScore;
use crate::promptgen::DimensionRegistry;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line_no}: malformed record: {reason}")]
    MalformedRecord { line_no: usize, reason: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("rating for `{dim}` is {value}, expected 1..=7")]
    RatingOutOfRange { dim: String, value: i64 },
    #[error("line {line_no}: unknown etiology `{value}`")]
    UnknownEtiology { line_no: usize, value: String },
    #[error("line {line_no}: unknown category `{value}`")]
    UnknownCategory { line_no: usize, value: String },
    #[error("line {line_no}: unknown rating dimension `{dim}`")]
    UnknownDimension { line_no: usize, dim: String },
    #[error("unsupported schema version {0}")]
    UnsupportedSchema(u64),
    #[error("speaker `{0}` has no clinical profile")]
    DanglingSpeaker(String),
    #[error("duplicate prediction for ({utterance_id}, {model_id}, {condition_id})")]
    DuplicatePrediction {
        utterance_id: String,
        model_id: String,
        condition_id: String,
    },
    #[error("prediction references unknown utterance `{0}`")]
    UnknownUtterance(String),
    #[error("matched intersection is empty")]
    EmptyIntersection,
    #[error("at least two evaluation sets are required, got {0}")]
    TooFewSets(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s { $($text => Ok($name::$variant),)+ other => Err(other.to_string()) }
            }
        }
    };
}

string_enum! {
    /// Utterance prompt category.
    Category {
        AssistantCommand => "assistant_command",
        NovelSentence => "novel_sentence",
        Spontaneous => "spontaneous",
        NonSpontaneous => "non_spontaneous",
    }
}

string_enum! {
    /// Stroke is accepted even though no rated speaker carries it, so the
    /// stroke guidance text stays exercisable.
    Etiology {
        Parkinsons => "parkinsons",
        Als => "als",
        CerebralPalsy => "cerebral_palsy",
        DownSyndrome => "down_syndrome",
        Stroke => "stroke",
    }
}

impl Etiology {
    /// Name as it appears inside prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            Etiology::Parkinsons => "Parkinson's Disease",
            Etiology::Als => "ALS",
            Etiology::CerebralPalsy => "Cerebral Palsy",
            Etiology::DownSyndrome => "Down syndrome",
            Etiology::Stroke => "Stroke",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub utterance_id: String,
    pub speaker_id: String,
    pub category: Category,
    /// Transcript with disfluency markers such as `(um)` or `(w-)`.
    pub verbatim_ref: String,
    /// Transcript with markers removed.
    pub clean_ref: String,
    /// Opaque audio locator; never opened here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_ref: Option<String>,
}

/// Etiology plus 1–7 perceptual ratings keyed by canonical dimension name.
///
/// A profile either applies to every utterance of a speaker or, when
/// `utterance_id` is set, to a single sample. Sample-level profiles win.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalProfile {
    pub speaker_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterance_id: Option<String>,
    pub etiology: Etiology,
    pub ratings: BTreeMap<String, u8>,
}

impl ClinicalProfile {
    /// Unweighted mean over the dimensions present; `None` when unrated.
    pub fn mean_severity(&self) -> Option<f64> {
        if self.ratings.is_empty() {
            return None;
        }
        let sum: u32 = self.ratings.values().map(|&r| u32::from(r)).sum();
        Some(f64::from(sum) / self.ratings.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub utterance_id: String,
    pub model_id: String,
    pub condition_id: String,
    /// Raw model output.
    pub hypothesis: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_hypothesis: Option<String>,
}

/// Immutable, validated corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    utterances: Vec<Utterance>,
    index: HashMap<String, usize>,
    speaker_profiles: BTreeMap<String, ClinicalProfile>,
    sample_profiles: BTreeMap<String, ClinicalProfile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaHeader {
    schema: u64,
}

#[derive(Deserialize)]
struct RawUtterance {
    utterance_id: String,
    speaker_id: String,
    category: String,
    verbatim_ref: String,
    clean_ref: String,
    #[serde(default)]
    audio_ref: Option<String>,
}

#[derive(Deserialize)]
struct RawProfile {
    speaker_id: String,
    #[serde(default)]
    utterance_id: Option<String>,
    etiology: String,
    #[serde(default)]
    ratings: BTreeMap<String, i64>,
}

/// Yields `(line_no, line)` for non-blank lines, skipping a leading schema header.
fn records<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    let mut first = true;
    reader
        .lines()
        .enumerate()
        .filter_map(move |(idx, line)| {
            let line_no = idx + 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(CorpusError::Io(e))),
            };
            if line.trim().is_empty() {
                return None;
            }
            if std::mem::take(&mut first) {
                if let Ok(header) = serde_json::from_str::<SchemaHeader>(&line) {
                    if header.schema != u64::from(SCHEMA_VERSION) {
                        return Some(Err(CorpusError::UnsupportedSchema(header.schema)));
                    }
                    return None;
                }
            }
            Some(Ok((line_no, line)))
        })
}

fn malformed(line_no: usize, reason: impl fmt::Display) -> CorpusError {
    CorpusError::MalformedRecord {
        line_no,
        reason: reason.to_string(),
    }
}

/// Parses an utterance manifest stream.
pub fn parse_manifest<R: BufRead>(reader: R) -> Result<Vec<Utterance>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for record in records(reader) {
        let (line_no, line) = record?;
        let raw: RawUtterance = serde_json::from_str(&line).map_err(|e| malformed(line_no, e))?;
        let category = raw
            .category
            .parse::<Category>()
            .map_err(|value| CorpusError::UnknownCategory { line_no, value })?;
        for (field, value) in [
            ("utterance_id", &raw.utterance_id),
            ("speaker_id", &raw.speaker_id),
            ("verbatim_ref", &raw.verbatim_ref),
            ("clean_ref", &raw.clean_ref),
        ] {
            if value.trim().is_empty() {
                return Err(malformed(line_no, format!("`{field}` is empty")));
            }
        }
        if !seen.insert(raw.utterance_id.clone()) {
            return Err(CorpusError::DuplicateId(raw.utterance_id));
        }
        out.push(Utterance {
            utterance_id: raw.utterance_id,
            speaker_id: raw.speaker_id,
            category,
            verbatim_ref: raw.verbatim_ref,
            clean_ref: raw.clean_ref,
            audio_ref: raw.audio_ref,
        });
    }
    Ok(out)
}

/// Parses a clinical-profile stream, resolving dimension names against `registry`.
pub fn parse_profiles<R: BufRead>(
    reader: R,
    registry: &DimensionRegistry,
) -> Result<Vec<ClinicalProfile>> {
    let mut out = Vec::new();
    for record in records(reader) {
        let (line_no, line) = record?;
        let raw: RawProfile = serde_json::from_str(&line).map_err(|e| malformed(line_no, e))?;
        let etiology = raw
            .etiology
            .parse::<Etiology>()
            .map_err(|value| CorpusError::UnknownEtiology { line_no, value })?;
        let mut ratings = BTreeMap::new();
        for (dim, value) in raw.ratings {
            let canonical = registry
                .resolve(&dim)
                .ok_or_else(|| CorpusError::UnknownDimension {
                    line_no,
                    dim: dim.clone(),
                })?;
            if !(1..=7).contains(&value) {
                return Err(CorpusError::RatingOutOfRange { dim, value });
            }
            if ratings.insert(canonical.to_string(), value as u8).is_some() {
                return Err(malformed(line_no, format!("dimension `{canonical}` rated twice")));
            }
        }
        out.push(ClinicalProfile {
            speaker_id: raw.speaker_id,
            utterance_id: raw.utterance_id,
            etiology,
            ratings,
        });
    }
    Ok(out)
}

/// Parses a prediction stream; `(utterance_id, model_id, condition_id)` must be unique.
pub fn parse_predictions<R: BufRead>(reader: R) -> Result<Vec<PredictionRecord>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for record in records(reader) {
        let (line_no, line) = record?;
        let rec: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| malformed(line_no, e))?;
        let key = (
            rec.utterance_id.clone(),
            rec.model_id.clone(),
            rec.condition_id.clone(),
        );
        if !seen.insert(key) {
            return Err(CorpusError::DuplicatePrediction {
                utterance_id: rec.utterance_id,
                model_id: rec.model_id,
                condition_id: rec.condition_id,
            });
        }
        out.push(rec);
    }
    Ok(out)
}

impl Corpus {
    /// Builds a corpus, checking id uniqueness and that every utterance resolves
    /// to a clinical profile.
    pub fn new(utterances: Vec<Utterance>, profiles: Vec<ClinicalProfile>) -> Result<Self> {
        let mut index = HashMap::with_capacity(utterances.len());
        for (i, u) in utterances.iter().enumerate() {
            if index.insert(u.utterance_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(u.utterance_id.clone()));
            }
        }
        let mut speaker_profiles = BTreeMap::new();
        let mut sample_profiles = BTreeMap::new();
        for p in profiles {
            let dup = match &p.utterance_id {
                Some(uid) => sample_profiles
                    .insert(uid.clone(), p.clone())
                    .map(|_| uid.clone()),
                None => speaker_profiles
                    .insert(p.speaker_id.clone(), p.clone())
                    .map(|_| p.speaker_id.clone()),
            };
            if let Some(id) = dup {
                return Err(CorpusError::DuplicateId(id));
            }
            if let Some(uid) = &p.utterance_id {
                if !index.contains_key(uid) {
                    return Err(CorpusError::UnknownUtterance(uid.clone()));
                }
            }
        }
        let corpus = Corpus {
            utterances,
            index,
            speaker_profiles,
            sample_profiles,
        };
        for u in &corpus.utterances {
            if corpus.profile_for(u).is_none() {
                return Err(CorpusError::DanglingSpeaker(u.speaker_id.clone()));
            }
        }
        Ok(corpus)
    }

    /// Parses a manifest and its sibling profile file.
    pub fn parse<M: BufRead, P: BufRead>(
        manifest: M,
        profiles: P,
        registry: &DimensionRegistry,
    ) -> Result<Self> {
        let utterances = parse_manifest(manifest)?;
        let profiles = parse_profiles(profiles, registry)?;
        Corpus::new(utterances, profiles)
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn get(&self, utterance_id: &str) -> Option<&Utterance> {
        self.index.get(utterance_id).map(|&i| &self.utterances[i])
    }

    pub fn profile_for(&self, u: &Utterance) -> Option<&ClinicalProfile> {
        self.sample_profiles
            .get(&u.utterance_id)
            .or_else(|| self.speaker_profiles.get(&u.speaker_id))
    }

    pub fn profiles(&self) -> impl Iterator<Item = &ClinicalProfile> {
        self.speaker_profiles
            .values()
            .chain(self.sample_profiles.values())
    }

    /// Distinct speaker ids in lexicographic order.
    pub fn speakers(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .utterances
            .iter()
            .map(|u| u.speaker_id.as_str())
            .collect();
        set.into_iter().map(str::to_string).collect()
    }

    pub fn write_manifest<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{{\"schema\":{SCHEMA_VERSION}}}")?;
        for u in &self.utterances {
            serde_json::to_writer(&mut w, u)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_profiles<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{{\"schema\":{SCHEMA_VERSION}}}")?;
        for p in self.profiles() {
            serde_json::to_writer(&mut w, p)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// One matched (utterance, profile, prediction) triple.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'c> {
    pub utterance: &'c Utterance,
    pub profile: &'c ClinicalProfile,
    pub prediction: &'c PredictionRecord,
}

#[derive(Debug, Clone)]
pub struct EvaluationSet<'c> {
    pub model_id: String,
    pub condition_id: String,
    pub samples: Vec<Sample<'c>>,
}

impl EvaluationSet<'_> {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.utterance.utterance_id.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct JoinOutcome<'c> {
    pub set: EvaluationSet<'c>,
    /// Corpus utterances with no prediction under this (model, condition).
    pub missing: usize,
    /// Predictions whose utterance id is not in the corpus (non-strict mode only).
    pub unmatched_predictions: usize,
}

/// Joins predictions for one `(model_id, condition_id)` against the corpus.
///
/// The resulting set keeps corpus order. In strict mode a prediction for an
/// unknown utterance is an error; otherwise it is counted and skipped.
pub fn join_predictions<'c>(
    corpus: &'c Corpus,
    predictions: &'c [PredictionRecord],
    condition_id: &str,
    model_id: &str,
    strict: bool,
) -> Result<JoinOutcome<'c>> {
    let mut by_utt: HashMap<&str, &PredictionRecord> = HashMap::new();
    let mut unmatched = 0;
    for p in predictions
        .iter()
        .filter(|p| p.condition_id == condition_id && p.model_id == model_id)
    {
        if corpus.get(&p.utterance_id).is_none() {
            if strict {
                return Err(CorpusError::UnknownUtterance(p.utterance_id.clone()));
            }
            unmatched += 1;
            continue;
        }
        if by_utt.insert(p.utterance_id.as_str(), p).is_some() {
            return Err(CorpusError::DuplicatePrediction {
                utterance_id: p.utterance_id.clone(),
                model_id: p.model_id.clone(),
                condition_id: p.condition_id.clone(),
            });
        }
    }
    let mut samples = Vec::with_capacity(by_utt.len());
    let mut missing = 0;
    for u in corpus.utterances() {
        match by_utt.get(u.utterance_id.as_str()) {
            Some(pred) => samples.push(Sample {
                utterance: u,
                profile: corpus
                    .profile_for(u)
                    .expect("corpus construction guarantees a profile"),
                prediction: pred,
            }),
            None => missing += 1,
        }
    }
    Ok(JoinOutcome {
        set: EvaluationSet {
            model_id: model_id.to_string(),
            condition_id: condition_id.to_string(),
            samples,
        },
        missing,
        unmatched_predictions: unmatched,
    })
}

/// Restricts every set to the utterance ids present in all of them, sorted by id.
pub fn assert_matched<'c>(sets: &[EvaluationSet<'c>]) -> Result<Vec<EvaluationSet<'c>>> {
    if sets.len() < 2 {
        return Err(CorpusError::TooFewSets(sets.len()));
    }
    let mut common: BTreeSet<&str> = sets[0].ids().collect();
    for set in &sets[1..] {
        let ids: BTreeSet<&str> = set.ids().collect();
        common = common.intersection(&ids).copied().collect();
    }
    if common.is_empty() {
        return Err(CorpusError::EmptyIntersection);
    }
    Ok(sets
        .iter()
        .map(|set| {
            let mut samples: Vec<Sample<'c>> = set
                .samples
                .iter()
                .filter(|s| common.contains(s.utterance.utterance_id.as_str()))
                .copied()
                .collect();
            samples.sort_by(|a, b| a.utterance.utterance_id.cmp(&b.utterance.utterance_id));
            EvaluationSet {
                model_id: set.model_id.clone(),
                condition_id: set.condition_id.clone(),
                samples,
            }
        })
        .collect())
}

/// Per-sample score line, as written by `--emit-samples` and read back by the
/// comparison and reporting stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub utterance_id: String,
    pub speaker_id: String,
    pub model_id: String,
    pub condition_id: String,
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub etiology: Option<Etiology>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_severity: Option<f64>,
    #[serde(flatten)]
    pub score: SampleScore,
}

impl ScoredSample {
    pub fn new(sample: &Sample<'_>, score: SampleScore) -> Self {
        ScoredSample {
            utterance_id: sample.utterance.utterance_id.clone(),
            speaker_id: sample.utterance.speaker_id.clone(),
            model_id: sample.prediction.model_id.clone(),
            condition_id: sample.prediction.condition_id.clone(),
            category: sample.utterance.category,
            etiology: Some(sample.profile.etiology),
            mean_severity: sample.profile.mean_severity(),
            score,
        }
    }
}

pub fn parse_scored<R: BufRead>(reader: R) -> Result<Vec<ScoredSample>> {
    let mut out = Vec::new();
    for record in records(reader) {
        let (line_no, line) = record?;
        out.push(serde_json::from_str(&line).map_err(|e| malformed(line_no, e))?);
    }
    Ok(out)
}

pub fn write_scored<W: Write>(samples: &[ScoredSample], mut w: W) -> io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
