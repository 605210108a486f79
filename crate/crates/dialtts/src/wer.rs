//! Word error rate over token sequences: unit-cost Levenshtein alignment by
//! dynamic programming with a backtrace splitting the distance into
//! substitutions, insertions, and deletions.
//!
//! Policy cases: an empty reference against an empty hypothesis scores 0; an
//! empty reference against a non-empty hypothesis is flagged and reported as
//! an infinite rate (the insertions still count the hypothesis length).

/// Token granularity for scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TokenMode {
    /// Whitespace-separated words.
    #[default]
    Words,
    /// Individual non-whitespace characters (for unsegmented scripts).
    Chars,
}

/// Splits a line into scoring tokens.
pub fn tokenize(text: &str, mode: TokenMode) -> Vec<String> {
    match mode {
        TokenMode::Words => text.split_whitespace().map(str::to_string).collect(),
        TokenMode::Chars => text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
    }
}

/// Edit counts of the optimal alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WerCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl WerCounts {
    pub fn edits(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

/// A scored pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WerResult {
    pub counts: WerCounts,
    pub ref_len: usize,
    pub hyp_len: usize,
    /// Set when the reference is empty but the hypothesis is not; the rate
    /// is reported as infinity in that case.
    pub empty_ref: bool,
}

impl WerResult {
    /// `(S + I + D) / |ref|`, with the documented empty-reference policies.
    pub fn rate(&self) -> f64 {
        if self.ref_len == 0 {
            if self.hyp_len == 0 {
                return 0.0;
            }
            return f64::INFINITY;
        }
        self.counts.edits() as f64 / self.ref_len as f64
    }
}

/// Minimum-edit-distance alignment between reference and hypothesis tokens.
///
/// Ties between alignment paths are broken deterministically: match or
/// substitution first, then deletion, then insertion.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> WerResult {
    let m = reference.len();
    let n = hypothesis.len();
    if m == 0 {
        return WerResult {
            counts: WerCounts {
                substitutions: 0,
                insertions: n,
                deletions: 0,
            },
            ref_len: 0,
            hyp_len: n,
            empty_ref: n > 0,
        };
    }

    // full DP table so the backtrace can split edits into S/I/D
    let mut dist = vec![vec![0usize; n + 1]; m + 1];
    for (i, row) in dist.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in dist[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=m {
        for j in 1..=n {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            dist[i][j] = (dist[i - 1][j - 1] + cost)
                .min(dist[i - 1][j] + 1)
                .min(dist[i][j - 1] + 1);
        }
    }

    let mut counts = WerCounts::default();
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if dist[i][j] == dist[i - 1][j - 1] + cost {
                if cost == 1 {
                    counts.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dist[i][j] == dist[i - 1][j] + 1 {
            counts.deletions += 1;
            i -= 1;
            continue;
        }
        counts.insertions += 1;
        j -= 1;
    }

    WerResult {
        counts,
        ref_len: m,
        hyp_len: n,
        empty_ref: false,
    }
}
