//! The unified IPA symbol inventory shared by every dialect, and the greedy
//! longest-match tokenizer that turns raw IPA strings into symbol-id
//! sequences.
//!
//! All text is NFC-normalized so that lexicon files and runtime input agree
//! byte for byte. Three reserved symbols always occupy fixed ids: PAD=0,
//! UNK=1, BOUNDARY=2.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Reserved id for the padding symbol.
pub const PAD_ID: u32 = 0;
/// Reserved id for the unknown symbol (lenient tokenization).
pub const UNK_ID: u32 = 1;
/// Reserved id for the word-boundary symbol inserted between lexicon matches.
pub const BOUNDARY_ID: u32 = 2;

pub const PAD_TEXT: &str = "<pad>";
pub const UNK_TEXT: &str = "<unk>";
pub const BOUNDARY_TEXT: &str = "<wb>";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PhonemeError {
    #[error("duplicate symbol {0:?} after NFC normalization")]
    DuplicateSymbol(String),
    #[error("empty symbol text")]
    EmptySymbol,
    #[error("symbol {0:?} contains whitespace")]
    WhitespaceInSymbol(String),
    #[error("symbol kind `special` is reserved for built-in tokens")]
    ReservedKind,
    #[error("no inventory symbol matches at character {0}")]
    UnknownSymbol(usize),
    #[error("symbol id {0} is not in the inventory")]
    InvalidId(u32),
    #[error("inventory file line {0}: {1}")]
    FileLine(usize, String),
    #[error("io: {0}")]
    Io(String),
}

/// Phonetic class of an inventory symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    Consonant,
    Vowel,
    Tone,
    Boundary,
    Special,
}

impl SymbolKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "consonant" => Some(Self::Consonant),
            "vowel" => Some(Self::Vowel),
            "tone" => Some(Self::Tone),
            "boundary" => Some(Self::Boundary),
            "special" => Some(Self::Special),
            _ => None,
        }
    }
}

impl fmt::Display for SymbolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Consonant => "consonant",
            Self::Vowel => "vowel",
            Self::Tone => "tone",
            Self::Boundary => "boundary",
            Self::Special => "special",
        };
        f.write_str(s)
    }
}

/// One symbol of the shared inventory. `text` is NFC-normalized and may span
/// several codepoints (affricates with diacritics, tone-letter contours).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IpaSymbol {
    pub text: String,
    pub kind: SymbolKind,
    pub id: u32,
}

/// Tokenization policy for input that does not match the inventory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchPolicy {
    /// Fail with [`PhonemeError::UnknownSymbol`] at the offending character.
    #[default]
    Strict,
    /// Emit UNK for the offending character and continue.
    Lenient,
}

/// A sequence of symbol ids produced by the tokenizer or the G2P front-end.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IpaSequence {
    pub ids: Vec<u32>,
}

impl IpaSequence {
    pub fn new(ids: Vec<u32>) -> Self {
        Self { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains_unk(&self) -> bool {
        self.ids.contains(&UNK_ID)
    }
}

/// The shared symbol inventory: an ordered list of symbols with a bijective
/// text-to-id map. Immutable after construction, safe to share across threads.
#[derive(Debug, Clone)]
pub struct PhonemeInventory {
    symbols: Vec<IpaSymbol>,
    index: HashMap<String, u32>,
    max_symbol_chars: usize,
}

impl PhonemeInventory {
    /// Builds an inventory from `(text, kind)` specs. The three reserved
    /// symbols are prepended, then user symbols in the given order. Texts are
    /// NFC-normalized first; duplicates (after normalization) are rejected.
    pub fn build(specs: &[(&str, SymbolKind)]) -> Result<Self, PhonemeError> {
        let mut inv = Self {
            symbols: Vec::with_capacity(specs.len() + 3),
            index: HashMap::new(),
            max_symbol_chars: 0,
        };
        for (text, kind) in [
            (PAD_TEXT, SymbolKind::Special),
            (UNK_TEXT, SymbolKind::Special),
            (BOUNDARY_TEXT, SymbolKind::Special),
        ] {
            inv.push_symbol(text, kind)?;
        }
        for (text, kind) in specs {
            if *kind == SymbolKind::Special {
                return Err(PhonemeError::ReservedKind);
            }
            inv.push_symbol(text, *kind)?;
        }
        Ok(inv)
    }

    /// Reads an inventory file: one `text<TAB>kind` per line, `#` comments.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PhonemeError> {
        let content = std::fs::read_to_string(path.as_ref())
            .map_err(|e| PhonemeError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&content)
    }

    /// Parses inventory file content. See [`PhonemeInventory::load`].
    pub fn parse(content: &str) -> Result<Self, PhonemeError> {
        let mut specs: Vec<(&str, SymbolKind)> = Vec::new();
        for (lineno, line) in content.lines().enumerate() {
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let text = parts.next().unwrap_or("");
            let kind = parts
                .next()
                .ok_or_else(|| PhonemeError::FileLine(lineno + 1, "expected text<TAB>kind".into()))?;
            let kind = SymbolKind::parse(kind.trim()).ok_or_else(|| {
                PhonemeError::FileLine(lineno + 1, format!("unknown symbol kind {kind:?}"))
            })?;
            if kind == SymbolKind::Special {
                return Err(PhonemeError::FileLine(
                    lineno + 1,
                    "kind `special` is reserved for built-in tokens".into(),
                ));
            }
            specs.push((text, kind));
        }
        Self::build(&specs)
    }

    fn push_symbol(&mut self, text: &str, kind: SymbolKind) -> Result<(), PhonemeError> {
        let text: String = text.nfc().collect();
        if text.is_empty() {
            return Err(PhonemeError::EmptySymbol);
        }
        if text.chars().any(char::is_whitespace) {
            return Err(PhonemeError::WhitespaceInSymbol(text));
        }
        if self.index.contains_key(&text) {
            return Err(PhonemeError::DuplicateSymbol(text));
        }
        let id = self.symbols.len() as u32;
        self.index.insert(text.clone(), id);
        self.max_symbol_chars = self.max_symbol_chars.max(text.chars().count());
        self.symbols.push(IpaSymbol { text, kind, id });
        Ok(())
    }

    /// Number of symbols including the three reserved ones.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the reserved symbols always exist
    }

    pub fn symbol(&self, id: u32) -> Option<&IpaSymbol> {
        self.symbols.get(id as usize)
    }

    pub fn id_of(&self, text: &str) -> Option<u32> {
        self.index.get(text).copied()
    }

    pub fn symbols(&self) -> &[IpaSymbol] {
        &self.symbols
    }

    /// Greedy longest-match segmentation of `raw` into inventory symbols,
    /// left to right. Whitespace splits symbols and never emits a token.
    /// Positions in errors are codepoint indices into the NFC-normalized
    /// input.
    pub fn tokenize(&self, raw: &str, policy: MatchPolicy) -> Result<IpaSequence, PhonemeError> {
        let chars: Vec<char> = raw.nfc().collect();
        let mut ids = Vec::new();
        let mut pos = 0;
        while pos < chars.len() {
            if chars[pos].is_whitespace() {
                pos += 1;
                continue;
            }
            match self.longest_match(&chars, pos) {
                Some((id, len)) => {
                    ids.push(id);
                    pos += len;
                }
                None => match policy {
                    MatchPolicy::Strict => return Err(PhonemeError::UnknownSymbol(pos)),
                    MatchPolicy::Lenient => {
                        ids.push(UNK_ID);
                        pos += 1;
                    }
                },
            }
        }
        Ok(IpaSequence::new(ids))
    }

    /// Longest inventory symbol that is a prefix of `chars[pos..]`, stopping
    /// at whitespace.
    fn longest_match(&self, chars: &[char], pos: usize) -> Option<(u32, usize)> {
        let mut limit = 0;
        while limit < self.max_symbol_chars
            && pos + limit < chars.len()
            && !chars[pos + limit].is_whitespace()
        {
            limit += 1;
        }
        for len in (1..=limit).rev() {
            let candidate: String = chars[pos..pos + len].iter().collect();
            if let Some(&id) = self.index.get(&candidate) {
                return Some((id, len));
            }
        }
        None
    }

    /// Concatenates symbol texts with single spaces. Inverse of
    /// [`PhonemeInventory::tokenize`] for sequences of inventory symbols.
    pub fn detokenize(&self, seq: &IpaSequence) -> Result<String, PhonemeError> {
        let mut parts = Vec::with_capacity(seq.ids.len());
        for &id in &seq.ids {
            let sym = self.symbol(id).ok_or(PhonemeError::InvalidId(id))?;
            parts.push(sym.text.as_str());
        }
        Ok(parts.join(" "))
    }

    /// Symbol texts for a sequence, one per id.
    pub fn texts(&self, seq: &IpaSequence) -> Result<Vec<String>, PhonemeError> {
        seq.ids
            .iter()
            .map(|&id| {
                self.symbol(id)
                    .map(|s| s.text.clone())
                    .ok_or(PhonemeError::InvalidId(id))
            })
            .collect()
    }
}
