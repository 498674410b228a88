//! Brute-force METEOR alignment: enumerates every one-to-one partial
//! matching between equal tokens and keeps (max matches, min chunks).

pub fn chunks_of(pairs: &[(usize, usize)]) -> usize {
    let mut sorted = pairs.to_vec();
    sorted.sort_unstable();
    let mut chunks = 0;
    let mut last: Option<(usize, usize)> = None;
    for &(i, j) in &sorted {
        match last {
            Some((pi, pj)) if i == pi + 1 && j == pj + 1 => {}
            _ => chunks += 1,
        }
        last = Some((i, j));
    }
    chunks
}

pub fn enumerate(cand: &[&str], refr: &[&str]) -> (usize, usize) {
    fn go(
        i: usize,
        cand: &[&str],
        refr: &[&str],
        used: &mut Vec<bool>,
        pairs: &mut Vec<(usize, usize)>,
        best: &mut (usize, usize),
    ) {
        if i == cand.len() {
            let m = pairs.len();
            let c = chunks_of(pairs);
            if m > best.0 || (m == best.0 && c < best.1) {
                *best = (m, c);
            }
            return;
        }
        go(i + 1, cand, refr, used, pairs, best);
        for j in 0..refr.len() {
            if !used[j] && refr[j] == cand[i] {
                used[j] = true;
                pairs.push((i, j));
                go(i + 1, cand, refr, used, pairs, best);
                pairs.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (0, 0);
    go(0, cand, refr, &mut vec![false; refr.len()], &mut Vec::new(), &mut best);
    best
}

/// Score from counts, written out independently of the library.
pub fn score(m: usize, chunks: usize, c: usize, r: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / c as f64;
    let rr = m as f64 / r as f64;
    let f = 10.0 * p * rr / (rr + 9.0 * p);
    f * (1.0 - 0.5 * (chunks as f64 / m as f64).powi(3))
}

/// Deterministic random caption pairs: up to 12 tokens over small vocabularies
/// so that repeated words are common.
pub fn random_pairs(seed: u64, n: usize) -> Vec<(Vec<String>, Vec<String>)> {
    const WORDS: [&str; 10] = [
        "a", "person", "is", "waving", "the", "arm", "slowly", "and", "then", ".",
    ];
    let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
    let mut next = move |k: usize| -> usize {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state % k as u64) as usize
    };
    (0..n)
        .map(|_| {
            let vocab = 4 + next(7);
            let mut side = || -> Vec<String> {
                let len = next(13);
                (0..len).map(|_| WORDS[next(vocab)].to_string()).collect()
            };
            (side(), side())
        })
        .collect()
}
