//! Exhaustive worst-case search over short strings.
//!
//! A dictionary-aware adversary at desk scale: enumerate every string of a
//! fixed length over a small alphabet, run the full pipeline on each, and
//! return the energy argmax. The result is the ground truth the GA is
//! measured against.

use alloc::string::String;
use alloc::vec;

use crate::attacks::AttackError;
use crate::nlp::TextPipeline;

/// Hard cap on the number of candidates.
pub const SEARCH_SPACE_LIMIT: u64 = 10_000_000;

/// Enumerate all `alphabet.len() ^ length` strings and return the one with
/// the highest simulated energy, with its energy in picojoules. Enumeration
/// order is lexicographic in alphabet indices, and ties keep the earliest
/// candidate, so the result is deterministic.
pub fn exhaustive_worst_case(
    pipeline: &TextPipeline,
    alphabet: &[char],
    length: usize,
) -> Result<(String, f64), AttackError> {
    assert!(!alphabet.is_empty(), "alphabet must be nonempty");
    let mut candidates = 1u64;
    for _ in 0..length {
        candidates = candidates
            .checked_mul(alphabet.len() as u64)
            .unwrap_or(u64::MAX);
        if candidates > SEARCH_SPACE_LIMIT {
            return Err(AttackError::SearchSpaceTooLarge {
                candidates,
                limit: SEARCH_SPACE_LIMIT,
            });
        }
    }

    let mut indices = vec![0usize; length];
    let mut best: Option<(String, f64)> = None;
    loop {
        let candidate: String = indices.iter().map(|i| alphabet[*i]).collect();
        // Inputs that normalize to nothing (all spaces) simply score zero.
        let energy = match pipeline.evaluate(&candidate) {
            Ok(run) => run.energy_pj(),
            Err(_) => 0.0,
        };
        match &best {
            Some((_, best_energy)) if energy <= *best_energy => {}
            _ => best = Some((candidate, energy)),
        }

        // Odometer increment.
        let mut pos = length;
        loop {
            if pos == 0 {
                return Ok(best.expect("at least one candidate enumerated"));
            }
            pos -= 1;
            indices[pos] += 1;
            if indices[pos] < alphabet.len() {
                break;
            }
            indices[pos] = 0;
        }
    }
}

/// All strings of `length` over `alphabet`, for oracle comparisons in tests.
#[cfg(test)]
pub fn enumerate_strings(alphabet: &[char], length: usize) -> alloc::vec::Vec<String> {
    let mut out = alloc::vec::Vec::new();
    let mut indices = vec![0usize; length];
    loop {
        out.push(indices.iter().map(|i| alphabet[*i]).collect());
        let mut pos = length;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            indices[pos] += 1;
            if indices[pos] < alphabet.len() {
                break;
            }
            indices[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::AsicCostModel;
    use crate::zoo;

    fn pipeline() -> TextPipeline {
        TextPipeline::new(
            zoo::default_vocab(),
            zoo::toy_translator(7),
            AsicCostModel::default(),
        )
    }

    #[test]
    fn length_one_maximises_over_alphabet() {
        let pipeline = pipeline();
        let alphabet: Vec<char> = "abc/".chars().collect();
        let (best, energy) = exhaustive_worst_case(&pipeline, &alphabet, 1).unwrap();
        for c in &alphabet {
            let e = pipeline.evaluate(&c.to_string()).unwrap().energy_pj();
            assert!(e <= energy, "candidate {c} beats reported best {best}");
        }
    }

    #[test]
    fn length_two_over_two_chars_checks_all_four() {
        let pipeline = pipeline();
        let alphabet: Vec<char> = "ab".chars().collect();
        let (best, energy) = exhaustive_worst_case(&pipeline, &alphabet, 2).unwrap();
        let mut max_seen = f64::NEG_INFINITY;
        let mut arg = String::new();
        for s in enumerate_strings(&alphabet, 2) {
            let e = pipeline.evaluate(&s).unwrap().energy_pj();
            if e > max_seen {
                max_seen = e;
                arg = s;
            }
        }
        assert_eq!(energy, max_seen);
        assert_eq!(best, arg);
    }

    #[test]
    fn oversized_search_space_is_rejected() {
        let pipeline = pipeline();
        let alphabet: Vec<char> = "abcdefghij".chars().collect();
        assert!(matches!(
            exhaustive_worst_case(&pipeline, &alphabet, 8),
            Err(AttackError::SearchSpaceTooLarge { .. })
        ));
    }
}
