//! Aligned (text, IPA, dialect, audio) manifests in JSON-Lines form, plus
//! the builder and validator behind the CLI.
//!
//! One record per line with keys exactly `id,text,dialect,ipa,audio,duration`
//! in that order; `audio` and `duration` are `null` when no audio exists.
//! Identical inputs always produce byte-identical manifest files.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::wav_duration_secs;
use crate::lexicon::{DialectRegistry, Lexicon};
use crate::phoneme::{MatchPolicy, PhonemeInventory, UNK_TEXT};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("io: {0}")]
    Io(String),
}

/// One aligned training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub text: String,
    pub dialect: u32,
    pub ipa: Vec<String>,
    pub audio: Option<String>,
    pub duration: Option<f64>,
}

/// Serializes records as JSON-Lines, one object per line.
pub fn records_to_jsonl(records: &[ManifestRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serialization cannot fail"));
        out.push('\n');
    }
    out
}

pub fn write_manifest(records: &[ManifestRecord], path: impl AsRef<Path>) -> Result<(), ManifestError> {
    std::fs::write(path.as_ref(), records_to_jsonl(records))
        .map_err(|e| ManifestError::Io(format!("{}: {e}", path.as_ref().display())))
}

/// Parses a JSON-Lines manifest, reporting the first malformed line.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>, ManifestError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| ManifestError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_manifest(&text)
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>, ManifestError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord =
            serde_json::from_str(line).map_err(|e| ManifestError::ParseError {
                line: lineno + 1,
                message: e.to_string(),
            })?;
        out.push(record);
    }
    Ok(out)
}

/// A G2P failure collected while building a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct G2pFailure {
    pub id: String,
    pub message: String,
}

/// Builder output: the records plus any per-utterance G2P failures. In
/// strict mode failing utterances are omitted from `records`; otherwise they
/// are included with lenient (UNK-bearing) IPA.
#[derive(Debug)]
pub struct BuildReport {
    pub records: Vec<ManifestRecord>,
    pub failures: Vec<G2pFailure>,
}

/// Builds a manifest from a transcript of `id<TAB>text` lines. Audio is
/// looked up as `<id>.wav` under `audio_dir` when given; missing files leave
/// `audio`/`duration` null. Records are emitted in input order.
pub fn build_manifest(
    transcript_path: impl AsRef<Path>,
    dialect: u32,
    lexicon: &Lexicon,
    inventory: &PhonemeInventory,
    audio_dir: Option<&Path>,
    strict: bool,
) -> Result<BuildReport, ManifestError> {
    let text = std::fs::read_to_string(transcript_path.as_ref())
        .map_err(|e| ManifestError::Io(format!("{}: {e}", transcript_path.as_ref().display())))?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (id, utterance) = line.split_once('\t').ok_or(ManifestError::ParseError {
            line: lineno + 1,
            message: "expected id<TAB>text".into(),
        })?;
        let id = id.trim();
        if id.is_empty() {
            return Err(ManifestError::ParseError {
                line: lineno + 1,
                message: "empty id".into(),
            });
        }
        if !seen.insert(id.to_string()) {
            return Err(ManifestError::DuplicateId(id.to_string()));
        }

        let ipa = match lexicon.g2p(utterance, dialect, MatchPolicy::Strict) {
            Ok(seq) => inventory
                .texts(&seq)
                .expect("g2p output ids are always valid"),
            Err(err) => {
                failures.push(G2pFailure {
                    id: id.to_string(),
                    message: err.to_string(),
                });
                if strict {
                    continue;
                }
                let seq = lexicon
                    .g2p(utterance, dialect, MatchPolicy::Lenient)
                    .expect("lenient g2p cannot fail on a known dialect");
                inventory
                    .texts(&seq)
                    .expect("g2p output ids are always valid")
            }
        };

        // paths are stored as given: absolute stays absolute, relative is
        // resolved against the manifest's directory by consumers
        let (audio, duration) = match audio_dir {
            Some(dir) => {
                let wav = dir.join(format!("{id}.wav"));
                if wav.is_file() {
                    let d = wav_duration_secs(&wav)
                        .map_err(|e| ManifestError::Io(e.to_string()))?;
                    (Some(wav.to_string_lossy().into_owned()), Some(d))
                } else {
                    (None, None)
                }
            }
            None => (None, None),
        };

        records.push(ManifestRecord {
            id: id.to_string(),
            text: utterance.to_string(),
            dialect,
            ipa,
            audio,
            duration,
        });
    }
    Ok(BuildReport { records, failures })
}

/// One invalid record; each violating record appears exactly once, with all
/// of its problems joined into one message.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub id: String,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every record against the manifest invariants: known dialect id,
/// IPA symbols present in the inventory, positive duration when audio is
/// present, unique ids. With `strict`, UNK symbols are also flagged.
pub fn validate_manifest(
    records: &[ManifestRecord],
    inventory: &PhonemeInventory,
    registry: &DialectRegistry,
    strict: bool,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen: HashSet<&str> = HashSet::new();
    for (index, record) in records.iter().enumerate() {
        let mut problems: Vec<String> = Vec::new();
        if !seen.insert(&record.id) {
            problems.push("duplicate id".into());
        }
        if !registry.contains(record.dialect) {
            problems.push(format!(
                "unknown dialect id {} (registry has {})",
                record.dialect,
                registry.count()
            ));
        }
        for sym in &record.ipa {
            if inventory.id_of(sym).is_none() {
                problems.push(format!("IPA symbol {sym:?} not in inventory"));
                break;
            }
        }
        if strict && record.ipa.iter().any(|s| s == UNK_TEXT) {
            problems.push("contains UNK".into());
        }
        if record.audio.is_some() {
            match record.duration {
                Some(d) if d > 0.0 => {}
                Some(d) => problems.push(format!("nonpositive duration {d}")),
                None => problems.push("audio present but duration missing".into()),
            }
        }
        if !problems.is_empty() {
            report.violations.push(Violation {
                index,
                id: record.id.clone(),
                message: problems.join("; "),
            });
        }
    }
    report
}
