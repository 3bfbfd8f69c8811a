//! Prompt-condition compilation, training-mixture manifests and speaker folds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Etiology;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("rating {0} outside 1..=7")]
    OutOfRange(i64),
    #[error("no rated dimensions left after tier filtering")]
    NoRatedDimensions,
    #[error("no guidance text for etiology `{0}`")]
    MissingGuidance(Etiology),
    #[error("condition P3_followup requires a prior transcript")]
    MissingPrior,
    #[error("unknown rating dimension `{0}`")]
    UnknownDimension(String),
    #[error("unknown condition id `{0}`")]
    UnknownCondition(String),
    #[error("need k >= 2 and at least k speakers (k = {k}, speakers = {speakers})")]
    TooFewSpeakers { k: usize, speakers: usize },
    #[error("invalid guidance table: {0}")]
    InvalidGuidance(String),
}

pub type Result<T> = std::result::Result<T, PromptError>;

pub const PREAMBLE: &str = "You are transcribing speech from a person with a speech disorder. \
The audio may contain atypical pronunciation, rhythm, or voice quality. \
Use the provided clinical context to interpret ambiguous segments.";
pub const TASK_INSTRUCTION: &str =
    "Transcribe the audio in English. Output ONLY the transcription, no explanations.";
pub const ZERO_CONTEXT: &str =
    "Transcribe this audio in English. Output only the transcription, no explanations.";
const RATINGS_HEADER: &str = "Clinical speech profile (scale 1--7, 1=normal, 7=most severe):";

// ---------------------------------------------------------------------------
// Conditions

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConditionId {
    P0,
    P1,
    #[serde(rename = "P2_full")]
    P2Full,
    #[serde(rename = "P2a_speech")]
    P2aSpeech,
    #[serde(rename = "P2b_voice")]
    P2bVoice,
    #[serde(rename = "P2c_speech_voice")]
    P2cSpeechVoice,
    #[serde(rename = "P2d_condensed_full")]
    P2dCondensedFull,
    #[serde(rename = "P2e_condensed_speech")]
    P2eCondensedSpeech,
    #[serde(rename = "P3_followup")]
    P3Followup,
}

impl ConditionId {
    /// Canonical order; also the tie-break order for best-condition marking.
    pub const ALL: [ConditionId; 9] = [
        ConditionId::P0,
        ConditionId::P1,
        ConditionId::P2Full,
        ConditionId::P2aSpeech,
        ConditionId::P2bVoice,
        ConditionId::P2cSpeechVoice,
        ConditionId::P2dCondensedFull,
        ConditionId::P2eCondensedSpeech,
        ConditionId::P3Followup,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionId::P0 => "P0",
            ConditionId::P1 => "P1",
            ConditionId::P2Full => "P2_full",
            ConditionId::P2aSpeech => "P2a_speech",
            ConditionId::P2bVoice => "P2b_voice",
            ConditionId::P2cSpeechVoice => "P2c_speech_voice",
            ConditionId::P2dCondensedFull => "P2d_condensed_full",
            ConditionId::P2eCondensedSpeech => "P2e_condensed_speech",
            ConditionId::P3Followup => "P3_followup",
        }
    }

    /// Which tiers enter the ratings block and whether it is condensed.
    /// `None` for conditions without a ratings block.
    pub fn ratings_format(self) -> Option<(TierSelection, bool)> {
        use ConditionId::*;
        Some(match self {
            P0 | P1 => return None,
            P2Full | P3Followup => (TierSelection::ALL, false),
            P2aSpeech => (TierSelection::SPEECH, false),
            P2bVoice => (TierSelection::VOICE, false),
            P2cSpeechVoice => (TierSelection::SPEECH_VOICE, false),
            P2dCondensedFull => (TierSelection::ALL, true),
            P2eCondensedSpeech => (TierSelection::SPEECH, true),
        })
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditionId {
    type Err = PromptError;

    /// Accepts canonical ids and their short forms (`P2c`, `P2full`, `P3`), case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        ConditionId::ALL
            .into_iter()
            .find(|c| {
                let canon = c.as_str().to_ascii_lowercase();
                key == canon || Some(key.as_str()) == canon.split('_').next() || key == canon.replace('_', "")
            })
            .ok_or_else(|| PromptError::UnknownCondition(s.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Dimensions and tiers

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    /// ASR-actionable speech-production dimensions.
    Speech = 1,
    /// Voice quality.
    Voice = 2,
    /// Meta-level judgments.
    Meta = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TierSelection {
    pub speech: bool,
    pub voice: bool,
    pub meta: bool,
}

impl TierSelection {
    pub const ALL: TierSelection = TierSelection { speech: true, voice: true, meta: true };
    pub const SPEECH: TierSelection = TierSelection { speech: true, voice: false, meta: false };
    pub const VOICE: TierSelection = TierSelection { speech: false, voice: true, meta: false };
    pub const SPEECH_VOICE: TierSelection = TierSelection { speech: true, voice: true, meta: false };

    pub fn contains(&self, tier: Tier) -> bool {
        match tier {
            Tier::Speech => self.speech,
            Tier::Voice => self.voice,
            Tier::Meta => self.meta,
        }
    }
}

#[derive(Debug, Clone)]
struct Dimension {
    name: &'static str,
    tier: Tier,
    aliases: &'static [&'static str],
}

const fn dim(name: &'static str, tier: Tier, aliases: &'static [&'static str]) -> Dimension {
    Dimension { name, tier, aliases }
}

const DIMENSIONS: &[Dimension] = &[
    dim("Imprecise consonants", Tier::Speech, &[]),
    dim("Distorted vowels", Tier::Speech, &[]),
    dim("Repeated phonemes", Tier::Speech, &[]),
    dim("Prolonged phonemes", Tier::Speech, &[]),
    dim("Slow rate", Tier::Speech, &[]),
    dim("Variable rate", Tier::Speech, &[]),
    dim("Reduced stress", Tier::Speech, &["stress patterns"]),
    dim("Hypernasality", Tier::Speech, &["nasality"]),
    dim("Short phrases", Tier::Speech, &[]),
    dim("Inappropriate silences", Tier::Speech, &[]),
    dim("Harsh voice", Tier::Voice, &[]),
    dim("Strained voice", Tier::Voice, &[]),
    dim("Breathiness", Tier::Voice, &["breathy voice"]),
    dim("Voice tremor", Tier::Voice, &[]),
    dim("Pitch breaks", Tier::Voice, &[]),
    dim("Monopitch", Tier::Voice, &[]),
    dim("Monoloudness", Tier::Voice, &[]),
    dim("Low pitch", Tier::Voice, &[]),
    dim("Prolonged intervals", Tier::Voice, &[]),
    dim("Audible inspiration", Tier::Voice, &[]),
    dim("Naturalness", Tier::Meta, &[]),
    dim("Intelligibility", Tier::Meta, &[]),
    dim("Other", Tier::Meta, &[]),
];

/// Rating dimensions with their tier. Lookups are case-insensitive and accept
/// underscores for spaces plus a few aliases.
#[derive(Debug, Clone)]
pub struct DimensionRegistry {
    by_key: BTreeMap<String, (&'static str, Tier)>,
}

impl Default for DimensionRegistry {
    fn default() -> Self {
        let mut by_key = BTreeMap::new();
        for d in DIMENSIONS {
            for key in std::iter::once(&d.name).chain(d.aliases) {
                by_key.insert(lookup_key(key), (d.name, d.tier));
            }
        }
        DimensionRegistry { by_key }
    }
}

fn lookup_key(name: &str) -> String {
    name.trim().to_lowercase().replace('_', " ")
}

impl DimensionRegistry {
    /// Canonical display name for `name`, if it is a known dimension.
    pub fn resolve(&self, name: &str) -> Option<&'static str> {
        self.by_key.get(&lookup_key(name)).map(|(n, _)| *n)
    }

    pub fn tier_of(&self, name: &str) -> Option<Tier> {
        self.by_key.get(&lookup_key(name)).map(|(_, t)| *t)
    }

    /// Canonical names in `tier`.
    pub fn dimensions(&self, tier: Tier) -> Vec<&'static str> {
        DIMENSIONS.iter().filter(|d| d.tier == tier).map(|d| d.name).collect()
    }
}

// ---------------------------------------------------------------------------
// Ratings block

pub fn severity_label(k: i64) -> Result<&'static str> {
    Ok(match k {
        1 => "normal",
        2 => "mild",
        3 => "mild-moderate",
        4 => "moderate",
        5 => "moderate-severe",
        6 => "severe",
        7 => "most severe",
        _ => return Err(PromptError::OutOfRange(k)),
    })
}

/// Renders the ratings restricted to `tiers`, highest rating first, ties by name.
pub fn ratings_block(
    ratings: &BTreeMap<String, u8>,
    etiology: Etiology,
    tiers: TierSelection,
    condensed: bool,
    registry: &DimensionRegistry,
) -> Result<String> {
    let mut rows = Vec::new();
    for (name, &k) in ratings {
        let canonical = registry
            .resolve(name)
            .ok_or_else(|| PromptError::UnknownDimension(name.clone()))?;
        let tier = registry.tier_of(canonical).expect("resolved name has a tier");
        severity_label(k.into())?;
        if tiers.contains(tier) {
            rows.push((canonical, k));
        }
    }
    if rows.is_empty() {
        return Err(PromptError::NoRatedDimensions);
    }
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    if condensed {
        let items: Vec<String> = rows.iter().map(|(n, k)| format!("{n}={k}/7")).collect();
        return Ok(format!(
            "condition: {}; speech_ratings: {}",
            etiology.display_name(),
            items.join(", ")
        ));
    }
    let mut out = String::from(RATINGS_HEADER);
    for (n, k) in rows {
        out.push_str(&format!("\n-- {n}: {k}/7 ({})", severity_label(k.into())?));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Guidance

/// Etiology-specific guidance sentences placed after "The speaker has …".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuidanceTable(BTreeMap<Etiology, String>);

impl Default for GuidanceTable {
    fn default() -> Self {
        let texts = [
            (
                Etiology::CerebralPalsy,
                "Cerebral Palsy often causes imprecise consonants, distorted vowels, and irregular speech rhythm. Words may sound slurred or have unusual stress patterns. Focus on the intended words rather than the surface-level distortions.",
            ),
            (
                Etiology::Als,
                "ALS progressively weakens speech muscles, leading to slow, effortful speech with breathy or strained voice quality. Words may be prolonged or have nasal quality. Listen for the intended message through the motor speech difficulties.",
            ),
            (
                Etiology::Parkinsons,
                "Parkinson's Disease typically causes reduced loudness, monotone pitch, and sometimes rapid or mumbled speech. Words may run together or trail off. Pay close attention to softly spoken or rushed segments.",
            ),
            (
                Etiology::DownSyndrome,
                "Down syndrome can affect speech clarity through imprecise articulation and irregular speech rhythm. The speaker may have difficulty with certain consonant clusters. Focus on the overall message and common word patterns.",
            ),
            (
                Etiology::Stroke,
                "Stroke can cause various speech difficulties including slurred speech, word-finding pauses, or sound substitutions. The speaker's intended words may differ from how they sound on the surface.",
            ),
        ];
        GuidanceTable(texts.into_iter().map(|(e, t)| (e, t.to_string())).collect())
    }
}

impl GuidanceTable {
    pub fn empty() -> Self {
        GuidanceTable(BTreeMap::new())
    }

    /// Overrides entries from a JSON object keyed by etiology id
    /// (`{"als": "..."}`); unspecified etiologies keep the defaults.
    pub fn with_overrides_json(mut self, json: &str) -> Result<Self> {
        let raw: BTreeMap<String, String> =
            serde_json::from_str(json).map_err(|e| PromptError::InvalidGuidance(e.to_string()))?;
        for (k, v) in raw {
            let e = k
                .parse::<Etiology>()
                .map_err(|_| PromptError::InvalidGuidance(format!("unknown etiology `{k}`")))?;
            self.0.insert(e, v);
        }
        Ok(self)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| PromptError::InvalidGuidance(e.to_string()))?;
        GuidanceTable::default().with_overrides_json(&text)
    }

    pub fn get(&self, e: Etiology) -> Option<&str> {
        self.0.get(&e).map(String::as_str)
    }
}

// ---------------------------------------------------------------------------
// Compilation

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub condition: ConditionId,
    pub etiology: Etiology,
    #[serde(default)]
    pub ratings: BTreeMap<String, u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_transcript: Option<String>,
    /// Opt-in extension of the follow-up block that states the correct
    /// phrasing. Off by default since it leaks the reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_phrasing: Option<String>,
    #[serde(default)]
    pub rendered: String,
}

impl PromptSpec {
    pub fn new(condition: ConditionId, etiology: Etiology) -> Self {
        PromptSpec {
            condition,
            etiology,
            ratings: BTreeMap::new(),
            prior_transcript: None,
            correct_phrasing: None,
            rendered: String::new(),
        }
    }

    pub fn with_ratings(mut self, ratings: BTreeMap<String, u8>) -> Self {
        self.ratings = ratings;
        self
    }

    pub fn with_prior(mut self, prior: impl Into<String>) -> Self {
        self.prior_transcript = Some(prior.into());
        self
    }

    /// Compiles and stores the rendered text.
    pub fn compile(
        mut self,
        registry: &DimensionRegistry,
        guidance: &GuidanceTable,
    ) -> Result<Self> {
        self.rendered = compile_prompt(&self, registry, guidance)?;
        Ok(self)
    }
}

/// Renders the prompt for `spec`. Blocks are separated by a blank line.
///
/// A ratings-bearing condition whose ratings vanish under its tier filter
/// degrades to the P1 layout (with a warning) rather than failing.
pub fn compile_prompt(
    spec: &PromptSpec,
    registry: &DimensionRegistry,
    guidance: &GuidanceTable,
) -> Result<String> {
    if spec.condition == ConditionId::P0 {
        return Ok(ZERO_CONTEXT.to_string());
    }
    let prior = match (spec.condition, &spec.prior_transcript) {
        (ConditionId::P3Followup, None) => return Err(PromptError::MissingPrior),
        (ConditionId::P3Followup, Some(p)) => Some(p),
        _ => None,
    };
    let text = guidance
        .get(spec.etiology)
        .ok_or(PromptError::MissingGuidance(spec.etiology))?;

    let mut blocks = vec![
        PREAMBLE.to_string(),
        format!("The speaker has {}.\n{text}", spec.etiology.display_name()),
    ];
    if let Some((tiers, condensed)) = spec.condition.ratings_format() {
        match ratings_block(&spec.ratings, spec.etiology, tiers, condensed, registry) {
            Ok(block) => blocks.push(block),
            Err(PromptError::NoRatedDimensions) => log::warn!(
                "{}: no rated dimensions for {}, rendering without a ratings block",
                spec.condition,
                spec.etiology
            ),
            Err(e) => return Err(e),
        }
    }
    if let Some(prior) = prior {
        let mut block =
            format!("Additional context from prior attempt: Previous transcription produced \"{prior}\".");
        if let Some(correct) = &spec.correct_phrasing {
            block.push_str(&format!(" The correct phrasing is \"{correct}\"."));
        }
        blocks.push(block);
    }
    blocks.push(TASK_INSTRUCTION.to_string());
    Ok(blocks.join("\n\n"))
}

// ---------------------------------------------------------------------------
// Training mixture

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureCondition {
    AudioOnly,
    #[serde(rename = "P2c_speech_voice")]
    SpeechVoice,
    #[serde(rename = "P2d_condensed_full")]
    CondensedFull,
}

impl MixtureCondition {
    pub const ALL: [MixtureCondition; 3] = [
        MixtureCondition::AudioOnly,
        MixtureCondition::SpeechVoice,
        MixtureCondition::CondensedFull,
    ];

    /// The prompt condition used to render this format (audio-only renders as P0).
    pub fn prompt_condition(self) -> ConditionId {
        match self {
            MixtureCondition::AudioOnly => ConditionId::P0,
            MixtureCondition::SpeechVoice => ConditionId::P2cSpeechVoice,
            MixtureCondition::CondensedFull => ConditionId::P2dCondensedFull,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureEntry {
    pub utterance_id: String,
    pub condition: MixtureCondition,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MixtureManifest {
    pub seed: u64,
    pub entries: Vec<MixtureEntry>,
    pub counts: BTreeMap<MixtureCondition, usize>,
}

/// Draws one prompt format per utterance, uniformly over the three formats.
pub fn build_training_mixture<'a, I>(utterance_ids: I, seed: u64) -> MixtureManifest
where
    I: IntoIterator<Item = &'a str>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest = MixtureManifest {
        seed,
        ..Default::default()
    };
    for id in utterance_ids {
        let condition = MixtureCondition::ALL[rng.random_range(0..3)];
        *manifest.counts.entry(condition).or_default() += 1;
        manifest.entries.push(MixtureEntry {
            utterance_id: id.to_string(),
            condition,
        });
    }
    manifest
}

// ---------------------------------------------------------------------------
// Speaker folds

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    /// Evaluation speakers per fold, each sorted.
    pub folds: Vec<Vec<String>>,
}

impl FoldAssignment {
    pub fn eval_speakers(&self, fold: usize) -> &[String] {
        &self.folds[fold]
    }

    /// All speakers outside `fold`, sorted.
    pub fn train_speakers(&self, fold: usize) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fold)
            .flat_map(|(_, f)| f.iter().map(String::as_str))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn fold_of(&self, speaker: &str) -> Option<usize> {
        self.folds
            .iter()
            .position(|f| f.binary_search_by(|s| s.as_str().cmp(speaker)).is_ok())
    }
}

/// Speaker-disjoint K-fold split: sort, shuffle by seed, deal round-robin.
pub fn kfold_speaker_split(speakers: &[String], k: usize, seed: u64) -> Result<FoldAssignment> {
    let mut pool: Vec<String> = speakers.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if k < 2 || pool.len() < k {
        return Err(PromptError::TooFewSpeakers { k, speakers: pool.len() });
    }
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, s) in pool.into_iter().enumerate() {
        folds[i % k].push(s);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldAssignment { k, seed, folds })
}
