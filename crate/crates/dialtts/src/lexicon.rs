//! Per-dialect pronunciation lexicons and the grapheme-to-IPA front-end.
//!
//! A lexicon maps grapheme strings to IPA pronunciations per dialect. G2P
//! walks the text with greedy longest-match over the dialect's entries;
//! among same-grapheme candidates (polyphones) the highest-priority entry
//! wins, and a word-boundary token is inserted between matches.
//!
//! File formats:
//! - lexicon: `grapheme<TAB>dialect<TAB>pron symbols space-separated<TAB>priority`
//!   (priority optional, default 0), `#` comments;
//! - dialect registry: `id<TAB>name` lines with dense ids `0..K-1`.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::phoneme::{IpaSequence, MatchPolicy, PhonemeInventory, BOUNDARY_ID, UNK_ID};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexiconError {
    #[error("line {0}: malformed lexicon line")]
    MalformedLine(usize),
    #[error("line {0}: pronunciation symbol {1:?} is not in the inventory")]
    UnknownIpaSymbol(usize, String),
    #[error("line {0}: duplicate priority for this grapheme and dialect")]
    DuplicatePriority(usize),
    #[error("no pronunciation covers character {0}")]
    NoPronunciation(usize),
    #[error("dialect id {0} is not in the lexicon (dialect count {1})")]
    UnknownDialect(u32, u32),
    #[error("io: {0}")]
    Io(String),
}

/// One pronunciation entry. `pron` holds inventory symbol ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub grapheme: String,
    pub dialect: u32,
    pub pron: Vec<u32>,
    pub priority: i32,
}

#[derive(Debug, Clone, Default)]
struct DialectTable {
    /// grapheme -> candidate entries, highest priority first.
    entries: HashMap<String, Vec<LexiconEntry>>,
    max_grapheme_chars: usize,
}

/// An immutable set of per-dialect grapheme-to-IPA tables.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    dialects: Vec<DialectTable>,
}

impl Lexicon {
    /// Parses a lexicon file, validating every pronunciation symbol against
    /// the inventory.
    pub fn load(path: impl AsRef<Path>, inv: &PhonemeInventory) -> Result<Self, LexiconError> {
        let content = std::fs::read_to_string(path.as_ref())
            .map_err(|e| LexiconError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&content, inv)
    }

    /// Parses lexicon file content. See [`Lexicon::load`].
    pub fn parse(content: &str, inv: &PhonemeInventory) -> Result<Self, LexiconError> {
        let mut lex = Lexicon::default();
        for (lineno, line) in content.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 3 || fields.len() > 4 {
                return Err(LexiconError::MalformedLine(lineno));
            }
            let grapheme: String = fields[0].nfc().collect();
            if grapheme.is_empty() || grapheme.chars().any(char::is_whitespace) {
                return Err(LexiconError::MalformedLine(lineno));
            }
            let dialect: u32 = fields[1]
                .trim()
                .parse()
                .map_err(|_| LexiconError::MalformedLine(lineno))?;
            let mut pron = Vec::new();
            for sym in fields[2].split_whitespace() {
                let sym: String = sym.nfc().collect();
                let id = inv
                    .id_of(&sym)
                    .ok_or_else(|| LexiconError::UnknownIpaSymbol(lineno, sym.clone()))?;
                pron.push(id);
            }
            if pron.is_empty() {
                return Err(LexiconError::MalformedLine(lineno));
            }
            let priority: i32 = match fields.get(3) {
                Some(p) => p
                    .trim()
                    .parse()
                    .map_err(|_| LexiconError::MalformedLine(lineno))?,
                None => 0,
            };
            lex.insert(
                LexiconEntry {
                    grapheme,
                    dialect,
                    pron,
                    priority,
                },
                lineno,
            )?;
        }
        Ok(lex)
    }

    fn insert(&mut self, entry: LexiconEntry, lineno: usize) -> Result<(), LexiconError> {
        let dialect = entry.dialect as usize;
        if self.dialects.len() <= dialect {
            self.dialects.resize_with(dialect + 1, DialectTable::default);
        }
        let table = &mut self.dialects[dialect];
        table.max_grapheme_chars = table.max_grapheme_chars.max(entry.grapheme.chars().count());
        let slot = table.entries.entry(entry.grapheme.clone()).or_default();
        if slot.iter().any(|e| e.priority == entry.priority) {
            return Err(LexiconError::DuplicatePriority(lineno));
        }
        slot.push(entry);
        slot.sort_by_key(|e| std::cmp::Reverse(e.priority));
        Ok(())
    }

    /// Number of dialect slots (max dialect id + 1).
    pub fn dialect_count(&self) -> u32 {
        self.dialects.len() as u32
    }

    /// Total number of entries across all dialects.
    pub fn entry_count(&self) -> usize {
        self.dialects
            .iter()
            .map(|d| d.entries.values().map(Vec::len).sum::<usize>())
            .sum()
    }

    /// Candidate entries for an exact grapheme in a dialect, highest
    /// priority first.
    pub fn candidates(&self, dialect: u32, grapheme: &str) -> &[LexiconEntry] {
        self.dialects
            .get(dialect as usize)
            .and_then(|t| t.entries.get(grapheme))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Converts grapheme text to an IPA id sequence for one dialect.
    ///
    /// Greedy longest-match over the dialect's graphemes, highest priority
    /// among candidates for the matched span, BOUNDARY between matches.
    /// Whitespace never matches and simply separates spans. In lenient mode
    /// an unmatched character becomes a single UNK (still separated by
    /// BOUNDARY like any match).
    pub fn g2p(
        &self,
        text: &str,
        dialect: u32,
        policy: MatchPolicy,
    ) -> Result<IpaSequence, LexiconError> {
        let table = self
            .dialects
            .get(dialect as usize)
            .ok_or(LexiconError::UnknownDialect(dialect, self.dialect_count()))?;
        let chars: Vec<char> = text.nfc().collect();
        let mut ids: Vec<u32> = Vec::new();
        let mut pos = 0;
        let mut first_match = true;
        while pos < chars.len() {
            if chars[pos].is_whitespace() {
                pos += 1;
                continue;
            }
            let matched = Self::longest_entry(table, &chars, pos);
            if !first_match {
                ids.push(BOUNDARY_ID);
            }
            first_match = false;
            match matched {
                Some((entry, len)) => {
                    ids.extend_from_slice(&entry.pron);
                    pos += len;
                }
                None => match policy {
                    MatchPolicy::Strict => return Err(LexiconError::NoPronunciation(pos)),
                    MatchPolicy::Lenient => {
                        ids.push(UNK_ID);
                        pos += 1;
                    }
                },
            }
        }
        Ok(IpaSequence::new(ids))
    }

    fn longest_entry<'a>(
        table: &'a DialectTable,
        chars: &[char],
        pos: usize,
    ) -> Option<(&'a LexiconEntry, usize)> {
        let mut limit = 0;
        while limit < table.max_grapheme_chars
            && pos + limit < chars.len()
            && !chars[pos + limit].is_whitespace()
        {
            limit += 1;
        }
        for len in (1..=limit).rev() {
            let candidate: String = chars[pos..pos + len].iter().collect();
            if let Some(entries) = table.entries.get(&candidate) {
                // entries are sorted highest priority first
                return Some((&entries[0], len));
            }
        }
        None
    }
}

/// The dialect registry: dense integer ids `0..K-1` with display names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialectRegistry {
    names: Vec<String>,
}

impl DialectRegistry {
    pub fn new(names: Vec<String>) -> Self {
        Self { names }
    }

    /// Reads `id<TAB>name` lines; ids must be exactly `0..K-1` in any order.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let content = std::fs::read_to_string(path.as_ref())
            .map_err(|e| LexiconError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&content)
    }

    pub fn parse(content: &str) -> Result<Self, LexiconError> {
        let mut pairs: Vec<(u32, String)> = Vec::new();
        for (lineno, line) in content.lines().enumerate() {
            let lineno = lineno + 1;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let id: u32 = parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or(LexiconError::MalformedLine(lineno))?;
            let name = parts
                .next()
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or(LexiconError::MalformedLine(lineno))?;
            pairs.push((id, name.to_string()));
        }
        pairs.sort_by_key(|(id, _)| *id);
        for (expect, (id, _)) in pairs.iter().enumerate() {
            if *id != expect as u32 {
                return Err(LexiconError::MalformedLine(0));
            }
        }
        Ok(Self {
            names: pairs.into_iter().map(|(_, name)| name).collect(),
        })
    }

    pub fn count(&self) -> u32 {
        self.names.len() as u32
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, id: u32) -> bool {
        (id as usize) < self.names.len()
    }
}
