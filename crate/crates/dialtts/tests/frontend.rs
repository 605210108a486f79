//! Front-end integration tests over the committed fixture files: the golden
//! tokenizer/G2P outputs, randomized round-trips, and brute-force
//! longest-match cross-checks.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dialtts::lexicon::{DialectRegistry, Lexicon};
use dialtts::phoneme::{IpaSequence, MatchPolicy, PhonemeInventory, SymbolKind};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn load_frontend() -> (PhonemeInventory, Lexicon, DialectRegistry) {
    let inv = PhonemeInventory::load(fixture("inventory.tsv")).unwrap();
    let lex = Lexicon::load(fixture("lexicon.tsv"), &inv).unwrap();
    let reg = DialectRegistry::load(fixture("registry.tsv")).unwrap();
    (inv, lex, reg)
}

#[test]
fn fixture_files_are_consistent() {
    let (inv, lex, reg) = load_frontend();
    assert!(inv.len() >= 50, "inventory has {} symbols", inv.len());
    assert!(lex.entry_count() >= 50, "lexicon has {} entries", lex.entry_count());
    assert_eq!(lex.dialect_count(), reg.count());
}

#[test]
fn golden_frontend_outputs() {
    let (inv, lex, _) = load_frontend();
    let golden = std::fs::read_to_string(fixture("golden_frontend.tsv")).unwrap();
    let mut checked = 0;
    for (lineno, line) in golden.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let (produced, expected) = match fields[0] {
            "tok" => {
                let seq = inv.tokenize(fields[1], MatchPolicy::Strict).unwrap();
                (inv.texts(&seq).unwrap(), fields[2])
            }
            "g2p" => {
                let dialect: u32 = fields[1].parse().unwrap();
                let seq = lex.g2p(fields[2], dialect, MatchPolicy::Strict).unwrap();
                (inv.texts(&seq).unwrap(), fields[3])
            }
            other => panic!("unknown golden case type {other:?}"),
        };
        assert_eq!(
            produced.join(" "),
            expected,
            "golden line {} mismatch",
            lineno + 1
        );
        checked += 1;
    }
    assert!(checked >= 40, "only {checked} golden cases checked");
}

#[test]
fn round_trip_on_1000_random_sequences() {
    let (inv, _, _) = load_frontend();
    // non-special symbol ids
    let ids: Vec<u32> = inv
        .symbols()
        .iter()
        .filter(|s| s.kind != SymbolKind::Special)
        .map(|s| s.id)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF00D);
    for trial in 0..1000 {
        let len = rng.gen_range(1..24);
        let seq = IpaSequence::new((0..len).map(|_| ids[rng.gen_range(0..ids.len())]).collect());
        let text = inv.detokenize(&seq).unwrap();
        let back = inv.tokenize(&text, MatchPolicy::Strict).unwrap();
        assert_eq!(back, seq, "trial {trial}: text {text:?}");
    }
}

/// Brute-force oracle: enumerate every segmentation of the input into
/// inventory symbols and verify the tokenizer's choice is the one whose
/// symbols are maximal from the left.
fn all_segmentations(inv: &PhonemeInventory, chars: &[char]) -> Vec<Vec<u32>> {
    if chars.is_empty() {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for len in 1..=chars.len() {
        let prefix: String = chars[..len].iter().collect();
        if let Some(id) = inv.id_of(&prefix) {
            for mut rest in all_segmentations(inv, &chars[len..]) {
                let mut seg = vec![id];
                seg.append(&mut rest);
                out.push(seg);
            }
        }
    }
    out
}

#[test]
fn tokenizer_is_greedy_longest_against_brute_force() {
    let (inv, _, _) = load_frontend();
    for raw in ["tɕʰa", "ʈʂʰɿ˥˩", "tsʰatsa", "˥˩˥", "tʰjɛn˥ʂan˥"] {
        let chars: Vec<char> = raw.chars().collect();
        let segs = all_segmentations(&inv, &chars);
        assert!(!segs.is_empty(), "{raw:?} has no segmentation");
        let seq = inv.tokenize(raw, MatchPolicy::Strict).unwrap();
        assert!(segs.contains(&seq.ids), "{raw:?}: tokenizer output not a valid segmentation");
        // left-to-right maximality: compare against every other segmentation
        for seg in &segs {
            for (a, b) in seq.ids.iter().zip(seg.iter()) {
                let la = inv.symbol(*a).unwrap().text.chars().count();
                let lb = inv.symbol(*b).unwrap().text.chars().count();
                if la != lb {
                    assert!(la > lb, "{raw:?}: greedy symbol shorter than alternative");
                    break;
                }
            }
        }
    }
}

/// Brute-force oracle over grapheme covers for the longest-match G2P claim.
fn covers(lex: &Lexicon, dialect: u32, chars: &[char]) -> Vec<Vec<String>> {
    if chars.is_empty() {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for len in 1..=chars.len() {
        let prefix: String = chars[..len].iter().collect();
        if !lex.candidates(dialect, &prefix).is_empty() {
            for mut rest in covers(lex, dialect, &chars[len..]) {
                let mut cover = vec![prefix.clone()];
                cover.append(&mut rest);
                out.push(cover);
            }
        }
    }
    out
}

#[test]
fn g2p_longest_match_against_brute_force() {
    let (inv, lex, _) = load_frontend();
    for (dialect, text) in [(0u32, "中国人"), (0, "你好"), (1, "大学"), (2, "中国")] {
        let chars: Vec<char> = text.chars().collect();
        let all = covers(&lex, dialect, &chars);
        assert!(!all.is_empty());
        // the cover chosen by greedy longest-match: maximal first span
        let max_first = all.iter().map(|c| c[0].chars().count()).max().unwrap();
        let seq = lex.g2p(text, dialect, MatchPolicy::Strict).unwrap();
        // reconstruct the first span's pronunciation and check it comes from
        // the longest matching grapheme
        let first: String = chars[..max_first].iter().collect();
        let best = &lex.candidates(dialect, &first)[0];
        assert!(
            seq.ids.starts_with(&best.pron),
            "{text:?} dialect {dialect}: expected to start with {first:?}"
        );
        let _ = inv;
    }
}

#[test]
fn dialect_isolation_on_fixtures() {
    let (_, lex, reg) = load_frontend();
    // outputs for dialect 0 must not depend on other dialects' entries:
    // rebuild a lexicon containing only dialect-0 lines and compare
    let content = std::fs::read_to_string(fixture("lexicon.tsv")).unwrap();
    let only_d0: String = content
        .lines()
        .filter(|l| l.trim_start().starts_with('#') || l.split('\t').nth(1) == Some("0"))
        .collect::<Vec<_>>()
        .join("\n");
    let inv = PhonemeInventory::load(fixture("inventory.tsv")).unwrap();
    let lex0 = Lexicon::parse(&only_d0, &inv).unwrap();
    for text in ["中国人", "你好", "说话", "十是时", "老师好"] {
        assert_eq!(
            lex.g2p(text, 0, MatchPolicy::Strict).unwrap(),
            lex0.g2p(text, 0, MatchPolicy::Strict).unwrap(),
            "dialect isolation broken for {text:?}"
        );
    }
    assert_eq!(reg.count(), 3);
}
