//! Exact-match METEOR.
//!
//! The alignment is a one-to-one map between equal candidate and reference
//! unigrams with the largest possible number of matches `m`; among those,
//! one with the fewest chunks is chosen. A chunk is a maximal run of matches
//! that are adjacent in both strings, in the same order.
//!
//! ```text
//! P = m / |cand|   R = m / |ref|   Fmean = 10PR / (R + 9P)
//! penalty = 0.5 * (chunks / m)^3   score = Fmean * (1 - penalty)
//! ```

use std::collections::HashMap;

use mmsense_data::text::tokenize;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeteorScore {
    pub score: f64,
    pub precision: f64,
    pub recall: f64,
    pub matches: usize,
    pub chunks: usize,
    /// Set when either side has no tokens; the score is then 0.
    pub empty_input: bool,
}

impl MeteorScore {
    fn zero(empty_input: bool) -> Self {
        Self {
            score: 0.0,
            precision: 0.0,
            recall: 0.0,
            matches: 0,
            chunks: 0,
            empty_input,
        }
    }
}

/// Scores raw strings after word tokenisation.
pub fn meteor(candidate: &str, reference: &str) -> MeteorScore {
    meteor_tokens(&tokenize(candidate), &tokenize(reference))
}

pub fn meteor_tokens<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> MeteorScore {
    if candidate.is_empty() || reference.is_empty() {
        return MeteorScore::zero(true);
    }
    let (m, chunks) = align(candidate, reference);
    score_from_counts(m, chunks, candidate.len(), reference.len())
}

/// Closed-form score from alignment statistics.
pub fn score_from_counts(matches: usize, chunks: usize, cand_len: usize, ref_len: usize) -> MeteorScore {
    if cand_len == 0 || ref_len == 0 {
        return MeteorScore::zero(true);
    }
    if matches == 0 {
        return MeteorScore::zero(false);
    }
    let p = matches as f64 / cand_len as f64;
    let r = matches as f64 / ref_len as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / matches as f64).powi(3);
    MeteorScore {
        score: fmean * (1.0 - penalty),
        precision: p,
        recall: r,
        matches,
        chunks,
        empty_input: false,
    }
}

/// Returns `(max matches, min chunks among maximal alignments)`.
pub fn align<'a, T: AsRef<str>>(candidate: &'a [T], reference: &'a [T]) -> (usize, usize) {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut intern = |s: &'a str| -> usize {
        let n = ids.len();
        *ids.entry(s).or_insert(n)
    };
    let cand: Vec<usize> = candidate.iter().map(|t| intern(t.as_ref())).collect();
    let refr: Vec<usize> = reference.iter().map(|t| intern(t.as_ref())).collect();
    let words = ids.len();
    let mut cand_count = vec![0usize; words];
    let mut ref_count = vec![0usize; words];
    cand.iter().for_each(|&w| cand_count[w] += 1);
    refr.iter().for_each(|&w| ref_count[w] += 1);
    let need: Vec<usize> = (0..words).map(|w| cand_count[w].min(ref_count[w])).collect();
    let m: usize = need.iter().sum();
    if m == 0 {
        return (0, 0);
    }
    let mut search = Search {
        cand: &cand,
        positions: (0..words)
            .map(|w| (0..refr.len()).filter(|&j| refr[j] == w).collect())
            .collect(),
        memo: HashMap::new(),
    };
    let mut state = State {
        used: vec![false; refr.len()],
        need,
        left: cand_count,
    };
    let chunks = search.best(0, None, &mut state);
    debug_assert!(chunks != usize::MAX);
    (m, chunks)
}

struct State {
    used: Vec<bool>,
    /// Matches still required per word.
    need: Vec<usize>,
    /// Candidate occurrences per word at or after the current position.
    left: Vec<usize>,
}

struct Search<'a> {
    cand: &'a [usize],
    positions: Vec<Vec<usize>>,
    memo: HashMap<(usize, Option<usize>, Vec<u64>), usize>,
}

impl Search<'_> {
    fn key(&self, i: usize, prev: Option<usize>, used: &[bool]) -> (usize, Option<usize>, Vec<u64>) {
        let mut bits = vec![0u64; used.len().div_ceil(64)];
        for (j, &u) in used.iter().enumerate() {
            if u {
                bits[j / 64] |= 1 << (j % 64);
            }
        }
        (i, prev, bits)
    }

    /// Fewest chunks still to open from candidate position `i`, given the
    /// reference position matched at `i - 1` (if any).
    fn best(&mut self, i: usize, prev: Option<usize>, st: &mut State) -> usize {
        if i == self.cand.len() {
            return if st.need.iter().all(|&n| n == 0) { 0 } else { usize::MAX };
        }
        let key = self.key(i, prev, &st.used);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let w = self.cand[i];
        st.left[w] -= 1;
        let mut best = usize::MAX;
        if st.need[w] > 0 {
            // Extending the current chunk first tightens the bound early.
            let mut order: Vec<usize> = self.positions[w].iter().copied().filter(|&j| !st.used[j]).collect();
            if let Some(p) = prev {
                if let Some(k) = order.iter().position(|&j| j == p + 1) {
                    order.swap(0, k);
                }
            }
            for j in order {
                let open = usize::from(j == 0 || prev != Some(j - 1));
                if open >= best {
                    continue;
                }
                st.used[j] = true;
                st.need[w] -= 1;
                let rest = self.best(i + 1, Some(j), st);
                st.need[w] += 1;
                st.used[j] = false;
                if rest != usize::MAX {
                    best = best.min(open + rest);
                }
            }
        }
        if st.left[w] >= st.need[w] {
            let rest = self.best(i + 1, None, st);
            best = best.min(rest);
        }
        st.left[w] += 1;
        self.memo.insert(key, best);
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_derived_values() {
        let s = meteor("a b c d", "a b c d");
        assert_eq!((s.matches, s.chunks), (4, 1));
        assert_eq!(s.score, 0.9921875);
        let r = meteor("d c b a", "a b c d");
        assert_eq!((r.matches, r.chunks), (4, 4));
        assert_eq!(r.score, 0.5);
        assert_eq!(meteor("x y", "a b").score, 0.0);
        let e = meteor("", "a");
        assert!(e.empty_input);
        assert_eq!(e.score, 0.0);
    }

    #[test]
    fn duplicates_choose_fewest_chunks() {
        // "the cat the" vs "the the cat": max matches 3; best alignment has 2 chunks.
        let s = meteor("the cat the", "the the cat");
        assert_eq!((s.matches, s.chunks), (3, 2));
    }

    #[test]
    fn precision_is_candidate_side() {
        let s = meteor("a", "a b c d");
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 0.25);
        let t = meteor("a b c d", "a");
        assert_eq!(t.precision, 0.25);
        assert_ne!(s.score, t.score);
    }
}
