//! Run-length encoding of binary masks.
//!
//! Format: space separated `start length` pairs, where `start` is a 1-based
//! pixel index in column-major order (index `p` addresses
//! `col = (p - 1) / height`, `row = (p - 1) % height`). The literal `-1`
//! denotes an empty mask. Input may use any amount of ASCII whitespace
//! between tokens; output always uses single spaces and maximal runs.

use crate::error::RleError;
use crate::mask::BinaryMask;

/// The RLE text for a mask with no foreground pixels.
pub const EMPTY: &str = "-1";

/// Parsed `(start, length)` runs, 1-based, validated against `limit` pixels.
pub fn parse_runs(rle: &str, limit: usize) -> Result<Vec<(usize, usize)>, RleError> {
    let trimmed = rle.trim();
    if trimmed.is_empty() {
        return Err(RleError::Empty);
    }
    if trimmed == EMPTY {
        return Ok(Vec::new());
    }
    let tokens: Vec<&str> = trimmed.split_ascii_whitespace().collect();
    let mut values = Vec::with_capacity(tokens.len());
    for (position, token) in tokens.iter().enumerate() {
        match token.parse::<usize>() {
            Ok(v) if v > 0 && token.bytes().all(|b| b.is_ascii_digit()) => values.push(v),
            _ => {
                return Err(RleError::InvalidToken {
                    position,
                    token: token.to_string(),
                })
            }
        }
    }
    if values.len() % 2 != 0 {
        return Err(RleError::OddTokenCount(values.len()));
    }

    let mut runs = Vec::with_capacity(values.len() / 2);
    let mut previous_end = 0usize;
    for (i, pair) in values.chunks_exact(2).enumerate() {
        let (start, length) = (pair[0], pair[1]);
        let position = 2 * i;
        let end = start.checked_add(length - 1).filter(|&e| e <= limit);
        let Some(end) = end else {
            return Err(RleError::RunOutOfBounds {
                position,
                start,
                length,
                limit,
            });
        };
        if start <= previous_end {
            return Err(RleError::OverlappingRuns {
                position,
                start,
                previous_end,
            });
        }
        previous_end = end;
        runs.push((start, length));
    }
    Ok(runs)
}

pub fn decode(rle: &str, width: usize, height: usize) -> Result<BinaryMask, RleError> {
    if width == 0 || height == 0 {
        return Err(RleError::ZeroDimension { width, height });
    }
    let runs = parse_runs(rle, width * height)?;
    let mut mask = BinaryMask::zeros(width, height);
    for (start, length) in runs {
        for p in start - 1..start - 1 + length {
            mask.set(p % height, p / height, true);
        }
    }
    Ok(mask)
}

/// Canonical encoding: maximal runs in increasing order, `-1` when empty.
pub fn encode(mask: &BinaryMask) -> String {
    let (w, h) = (mask.width(), mask.height());
    let mut out = String::new();
    let mut run_start: Option<usize> = None;
    let push = |out: &mut String, start: usize, end: usize| {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&format!("{} {}", start + 1, end - start));
    };
    for col in 0..w {
        for row in 0..h {
            let p = col * h + row;
            match (mask.get(row, col), run_start) {
                (true, None) => run_start = Some(p),
                (false, Some(s)) => {
                    push(&mut out, s, p);
                    run_start = None;
                }
                _ => {}
            }
        }
    }
    if let Some(s) = run_start {
        push(&mut out, s, w * h);
    }
    if out.is_empty() {
        EMPTY.to_string()
    } else {
        out
    }
}

/// `encode(decode(rle))`.
pub fn canonicalize(rle: &str, width: usize, height: usize) -> Result<String, RleError> {
    Ok(encode(&decode(rle, width, height)?))
}
