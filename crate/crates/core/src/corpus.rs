//! Seeded generators for the desk-scale corpora: natural-like sentences,
//! random strings, structured "blob" images with class-dependent
//! statistics, and uniform-noise images.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::math;
use crate::nlp::Alphabet;
use crate::vision::Image;
use crate::SpongeRng;

/// Sentence vocabulary of the natural-like text generator; also the
/// single-token words of the default pipeline vocabulary.
pub const WORDLIST: &[&str] = &[
    "a", "i", "an", "we", "to", "in", "it", "is", "of", "on", "the", "and", "cat", "dog", "sun",
    "sky", "run", "sea", "day", "far", "she", "old", "new", "big", "red", "with", "time", "rain",
    "wind", "bird", "song", "tree", "fish", "moon", "star", "walk", "warm", "blue", "cold",
    "dark", "soft", "house", "water", "light", "green", "night", "small", "river", "cloud",
    "happy", "quiet", "garden", "window", "bright", "winter", "summer", "forest", "gentle",
    "little", "morning", "evening", "because", "through", "weather", "thought", "quietly",
    "mountain", "together", "children", "tomorrow",
];

/// A sentence of wordlist words filling exactly `length` characters
/// (single spaces between words). Longer words are favoured, which keeps
/// the token count of natural text low the way a rich vocabulary would.
pub fn natural_sentence(rng: &mut SpongeRng, length: usize) -> String {
    assert!(length >= 1, "sentence length must be positive");
    let mut parts: Vec<&str> = Vec::new();
    let mut remaining = length;
    loop {
        if remaining <= 8 {
            let finishers: Vec<&str> = WORDLIST
                .iter()
                .copied()
                .filter(|w| w.len() == remaining)
                .collect();
            if !finishers.is_empty() && (remaining <= 2 || rng.gen_bool(0.5)) {
                parts.push(pick_weighted(rng, &finishers));
                break;
            }
        }
        let max_len = remaining.saturating_sub(2).min(8);
        let continuers: Vec<&str> = WORDLIST
            .iter()
            .copied()
            .filter(|w| w.len() <= max_len)
            .collect();
        if continuers.is_empty() {
            // remaining is 1 or 2 with no finisher chosen yet; force one.
            let finishers: Vec<&str> = WORDLIST
                .iter()
                .copied()
                .filter(|w| w.len() == remaining)
                .collect();
            parts.push(pick_weighted(rng, &finishers));
            break;
        }
        let word = pick_weighted(rng, &continuers);
        parts.push(word);
        remaining -= word.len() + 1;
    }
    parts.join(" ")
}

/// Length-cubed weighting over candidate words.
fn pick_weighted<'a>(rng: &mut SpongeRng, candidates: &[&'a str]) -> &'a str {
    debug_assert!(!candidates.is_empty());
    let total: usize = candidates.iter().map(|w| w.len() * w.len() * w.len()).sum();
    let mut roll = rng.gen_range(0..total);
    for w in candidates {
        let weight = w.len() * w.len() * w.len();
        if roll < weight {
            return w;
        }
        roll -= weight;
    }
    candidates[candidates.len() - 1]
}

pub fn natural_sentences(rng: &mut SpongeRng, length: usize, count: usize) -> Vec<String> {
    (0..count).map(|_| natural_sentence(rng, length)).collect()
}

/// Uniform random string over the alphabet characters plus space.
pub fn random_string(rng: &mut SpongeRng, length: usize, alphabet: &Alphabet) -> String {
    let mut chars = alphabet.chars.clone();
    chars.push(' ');
    (0..length)
        .map(|_| chars[rng.gen_range(0..chars.len())])
        .collect()
}

pub fn random_strings(
    rng: &mut SpongeRng,
    length: usize,
    count: usize,
    alphabet: &Alphabet,
) -> Vec<String> {
    (0..count)
        .map(|_| random_string(rng, length, alphabet))
        .collect()
}

/// Uniform noise image with every pixel in [0, 1).
pub fn random_image(rng: &mut SpongeRng, channels: usize, height: usize, width: usize) -> Image {
    let mut image = Image::zeros(channels, height, width);
    for v in image.data.iter_mut() {
        *v = rng.gen_range(0.0..1.0);
    }
    image
}

/// Smooth "blob" image standing in for natural data: a small positive
/// pedestal plus class-dependent Gaussian bumps (count, brightness and
/// spread all derive from the class index).
pub fn blob_image(
    rng: &mut SpongeRng,
    class: usize,
    channels: usize,
    height: usize,
    width: usize,
) -> Image {
    let mut image = Image::filled(channels, height, width, 0.08);
    let bumps = 2 + class % 3;
    let amplitude = 0.9 + 0.04 * (class % 4) as f64;
    let sigma = 1.4 + 0.4 * (class % 2) as f64;
    for _ in 0..bumps {
        let cy = rng.gen_range(0.0..height as f64);
        let cx = rng.gen_range(0.0..width as f64);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    let dy = y as f64 - cy;
                    let dx = x as f64 - cx;
                    let bump = amplitude * math::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
                    let idx = (c * height + y) * width + x;
                    image.data[idx] = (image.data[idx] + bump).min(1.0);
                }
            }
        }
    }
    image
}

/// Balanced labelled dataset of blob images.
pub fn labeled_blob_dataset(
    rng: &mut SpongeRng,
    classes: usize,
    per_class: usize,
    channels: usize,
    height: usize,
    width: usize,
) -> Vec<(Image, usize)> {
    let mut out = Vec::with_capacity(classes * per_class);
    for class in 0..classes {
        for _ in 0..per_class {
            out.push((blob_image(rng, class, channels, height, width), class));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;

    #[test]
    fn natural_sentences_fill_exact_length() {
        let mut rng = crate::rng_from_seed(2);
        for len in [1, 2, 5, 8, 16, 50] {
            for _ in 0..40 {
                let s = natural_sentence(&mut rng, len);
                assert_eq!(s.chars().count(), len, "bad sentence {s:?}");
                assert!(!s.contains("  "));
            }
        }
    }

    #[test]
    fn natural_sentences_use_wordlist_words() {
        let mut rng = crate::rng_from_seed(3);
        let s = natural_sentence(&mut rng, 30);
        for word in s.split(' ') {
            assert!(WORDLIST.contains(&word), "unexpected word {word:?}");
        }
    }

    #[test]
    fn random_string_stays_in_alphabet() {
        let alphabet = zoo::default_alphabet();
        let mut rng = crate::rng_from_seed(4);
        let s = random_string(&mut rng, 64, &alphabet);
        assert_eq!(s.chars().count(), 64);
        for c in s.chars() {
            assert!(c == ' ' || alphabet.contains(c));
        }
    }

    #[test]
    fn blob_images_stay_in_range_and_vary_by_class() {
        let mut rng = crate::rng_from_seed(5);
        let a = blob_image(&mut rng, 0, 1, 8, 8);
        let b = blob_image(&mut rng, 1, 1, 8, 8);
        for v in a.data.iter().chain(b.data.iter()) {
            assert!((0.0..=1.0).contains(v));
        }
        assert!(a.data.iter().all(|v| *v >= 0.08));
        assert_ne!(a, b);
    }

    #[test]
    fn generators_are_seed_deterministic() {
        let s1 = natural_sentence(&mut crate::rng_from_seed(9), 20);
        let s2 = natural_sentence(&mut crate::rng_from_seed(9), 20);
        assert_eq!(s1, s2);
        let i1 = blob_image(&mut crate::rng_from_seed(9), 2, 1, 8, 8);
        let i2 = blob_image(&mut crate::rng_from_seed(9), 2, 1, 8, 8);
        assert_eq!(i1, i2);
    }
}
