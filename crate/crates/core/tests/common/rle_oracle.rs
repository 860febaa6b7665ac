//! Codec oracles written without the library.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Column-major pixel list, 1-based, written without the library.
pub fn oracle_encode(bits: &[bool], w: usize, h: usize) -> String {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for col in 0..w {
        for row in 0..h {
            if bits[row * w + col] {
                let p = col * h + row + 1;
                match runs.last_mut() {
                    Some((s, l)) if *s + *l == p => *l += 1,
                    _ => runs.push((p, 1)),
                }
            }
        }
    }
    if runs.is_empty() {
        return "-1".into();
    }
    runs.iter().map(|(s, l)| format!("{s} {l}")).collect::<Vec<_>>().join(" ")
}

/// Merge touching runs of a sorted, disjoint run list.
pub fn oracle_canonical(runs: &[(usize, usize)]) -> String {
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for &(s, l) in runs {
        match merged.last_mut() {
            Some((ms, ml)) if *ms + *ml == s => *ml += l,
            _ => merged.push((s, l)),
        }
    }
    if merged.is_empty() {
        return "-1".into();
    }
    merged.iter().map(|(s, l)| format!("{s} {l}")).collect::<Vec<_>>().join(" ")
}

/// Random sorted disjoint runs, some of them touching.
pub fn random_runs(rng: &mut ChaCha8Rng, limit: usize) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut next = 1usize;
    while next <= limit {
        next += if rng.random_bool(0.3) { 0 } else { rng.random_range(0..20) };
        if next > limit {
            break;
        }
        let len = rng.random_range(1..=(limit - next + 1).min(15));
        runs.push((next, len));
        next += len;
    }
    runs
}

pub fn render(runs: &[(usize, usize)], rng: &mut ChaCha8Rng) -> String {
    if runs.is_empty() {
        return "-1".into();
    }
    let seps = [" ", "  ", "\t", "\n", " \r\n "];
    let mut out = String::from(seps[rng.random_range(0..seps.len())]);
    for (s, l) in runs {
        out.push_str(&s.to_string());
        out.push_str(seps[rng.random_range(0..seps.len())]);
        out.push_str(&l.to_string());
        out.push_str(seps[rng.random_range(0..seps.len())]);
    }
    out
}

