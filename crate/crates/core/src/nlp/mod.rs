//! Toy translation pipeline: normalizer, subword encoder, and an
//! instrumented autoregressive encoder-decoder model.
//!
//! The pipeline exists to expose the cost structure of translation, not to
//! translate. Every inference reports an [`crate::energy::ActivationTrace`]
//! along with the four dimensions that drive cost: input/output token counts
//! and embedding widths.

mod model;
mod vocab;

pub use model::{
    pipeline_cost_estimate, translate, ModelDims, PipelineDims, ToyTranslator, Translation,
};
pub use vocab::{Alphabet, Subword, Vocab, VocabError, EOS_ID, PAD_ID, RESERVED_TOKENS, UNK_ID};

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::energy::{simulate_energy, AsicCostModel, EnergyError, EnergyReport};

/// Token ids with the text they came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub source_text: String,
}

impl TokenSequence {
    /// Token count (`l_t`).
    pub fn l_t(&self) -> usize {
        self.ids.len()
    }
}

/// Lowercase, split punctuation into standalone tokens, collapse whitespace,
/// and replace out-of-alphabet characters by the fallback character. Never
/// fails; an empty or all-whitespace input yields no tokens.
pub fn normalize(text: &str, alphabet: &Alphabet) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    for raw in text.chars() {
        let folded = raw.to_ascii_lowercase();
        if folded.is_whitespace() {
            if !current.is_empty() {
                words.push(core::mem::take(&mut current));
            }
            continue;
        }
        let c = if alphabet.contains(folded) {
            folded
        } else {
            alphabet.fallback
        };
        if alphabet.is_punctuation(c) {
            if !current.is_empty() {
                words.push(core::mem::take(&mut current));
            }
            let mut p = String::new();
            p.push(c);
            words.push(p);
        } else {
            current.push(c);
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

/// Encode normalized words into one token sequence; each word is segmented
/// independently by greedy longest-prefix matching.
pub fn bpe_encode(words: &[String], vocab: &Vocab) -> TokenSequence {
    let mut ids = Vec::new();
    for word in words {
        ids.extend(vocab.encode_word(word));
    }
    TokenSequence {
        ids,
        source_text: words.join(" "),
    }
}

/// Normalize then encode in one step.
pub fn encode_text(text: &str, vocab: &Vocab) -> TokenSequence {
    bpe_encode(&normalize(text, vocab.alphabet()), vocab)
}

/// Reassemble a string from token ids: continuation subwords glue to the
/// following token, final subwords end the word. PAD and EOS render as
/// nothing, UNK as the fallback character.
pub fn detokenize(ids: &[u32], vocab: &Vocab) -> Result<String, VocabError> {
    let mut words: Vec<String> = Vec::new();
    let mut current = String::new();
    for &id in ids {
        if id == PAD_ID || id == EOS_ID {
            if !current.is_empty() {
                words.push(core::mem::take(&mut current));
            }
            continue;
        }
        if id == UNK_ID {
            current.push(vocab.alphabet().fallback);
            words.push(core::mem::take(&mut current));
            continue;
        }
        let entry = vocab.entry(id).ok_or(VocabError::UnknownTokenId(id))?;
        current.push_str(&entry.text);
        if !entry.continues {
            words.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        // Trailing continuation subword: close the word as-is.
        words.push(current);
    }
    Ok(words.join(" "))
}

/// End-to-end instrumented pipeline: text in, translation plus energy
/// accounting out.
#[derive(Debug, Clone)]
pub struct TextPipeline {
    pub vocab: Vocab,
    pub model: ToyTranslator,
    pub cost: AsicCostModel,
}

/// Everything one inference produces.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub input: TokenSequence,
    pub translation: Translation,
    pub report: EnergyReport,
}

impl PipelineRun {
    pub fn energy_pj(&self) -> f64 {
        self.report.energy_optimized_pj
    }
}

impl TextPipeline {
    pub fn new(vocab: Vocab, model: ToyTranslator, cost: AsicCostModel) -> Self {
        TextPipeline { vocab, model, cost }
    }

    /// Run the full pipeline on raw text.
    pub fn evaluate(&self, text: &str) -> Result<PipelineRun, NlpError> {
        let input = encode_text(text, &self.vocab);
        let mut translation = translate(&self.model, &input)?;
        translation.output.source_text = detokenize(&translation.output.ids, &self.vocab)?;
        let report = simulate_energy(&translation.trace, &self.cost)?;
        Ok(PipelineRun {
            input,
            translation,
            report,
        })
    }

    /// Like [`TextPipeline::evaluate`] but aborts once the accumulated
    /// optimized energy exceeds `budget_pj`. Used by the cutoff defense.
    pub fn evaluate_with_budget(
        &self,
        text: &str,
        budget_pj: f64,
    ) -> Result<BudgetedRun, NlpError> {
        let input = encode_text(text, &self.vocab);
        model::translate_budgeted(&self.model, &input, &self.cost, Some(budget_pj))
            .map(|outcome| BudgetedRun { input, outcome })
    }
}

/// Result of a budgeted pipeline run.
#[derive(Debug, Clone)]
pub struct BudgetedRun {
    pub input: TokenSequence,
    pub outcome: model::BudgetOutcome,
}

pub use model::BudgetOutcome;

#[derive(Debug, Clone, PartialEq)]
pub enum NlpError {
    EmptyInput,
    ShapeMismatch,
    Vocab(VocabError),
    Energy(EnergyError),
}

impl fmt::Display for NlpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NlpError::EmptyInput => write!(f, "translation input is empty"),
            NlpError::ShapeMismatch => write!(f, "model weight shapes do not chain"),
            NlpError::Vocab(e) => write!(f, "vocabulary error: {e}"),
            NlpError::Energy(e) => write!(f, "energy accounting error: {e}"),
        }
    }
}

impl From<VocabError> for NlpError {
    fn from(e: VocabError) -> Self {
        NlpError::Vocab(e)
    }
}

impl From<EnergyError> for NlpError {
    fn from(e: EnergyError) -> Self {
        NlpError::Energy(e)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for NlpError {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;
    use alloc::string::ToString;
    use alloc::vec;

    fn words(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalize_splits_punctuation_and_folds_case() {
        let alphabet = zoo::default_alphabet();
        assert_eq!(
            normalize("Hello, world", &alphabet),
            words(&["hello", ",", "world"])
        );
    }

    #[test]
    fn normalize_empty_input_yields_no_tokens() {
        let alphabet = zoo::default_alphabet();
        assert_eq!(normalize("", &alphabet), Vec::<String>::new());
    }

    #[test]
    fn normalize_collapses_whitespace() {
        let alphabet = zoo::default_alphabet();
        assert_eq!(normalize("a  b", &alphabet), words(&["a", "b"]));
    }

    #[test]
    fn normalize_replaces_out_of_alphabet_chars() {
        let alphabet = zoo::default_alphabet();
        // '%' is not encodable; it becomes the fallback '?', a punctuation
        // character, so it splits off on its own.
        assert_eq!(normalize("a%b", &alphabet), words(&["a", "?", "b"]));
    }

    /// Vocabulary mirroring the classic token-inflation example.
    fn phobia_vocab() -> Vocab {
        let alphabet = zoo::default_alphabet();
        let mut subwords = zoo::single_char_subwords(&alphabet);
        for (text, continues) in [
            ("ath", true),
            ("az", true),
            ("agor", true),
            ("aph", true),
            ("bi", true),
            ("aphobia", false),
        ] {
            subwords.push(Subword {
                text: text.to_string(),
                continues,
            });
        }
        Vocab::new(alphabet, subwords).unwrap()
    }

    #[test]
    fn known_word_segments_into_four_subwords() {
        let vocab = phobia_vocab();
        let seq = bpe_encode(&words(&["athazagoraphobia"]), &vocab);
        assert_eq!(seq.l_t(), 4);
        let texts: Vec<&str> = seq
            .ids
            .iter()
            .map(|id| vocab.entry(*id).unwrap().text.as_str())
            .collect();
        assert_eq!(texts, vec!["ath", "az", "agor", "aphobia"]);
    }

    #[test]
    fn typo_inflates_token_count_to_seven() {
        let vocab = phobia_vocab();
        let seq = bpe_encode(&words(&["athazagoraphpbia"]), &vocab);
        assert_eq!(seq.l_t(), 7);
        let texts: Vec<&str> = seq
            .ids
            .iter()
            .map(|id| vocab.entry(*id).unwrap().text.as_str())
            .collect();
        // Greedy longest-prefix segmentation, fixed by hand.
        assert_eq!(texts, vec!["ath", "az", "agor", "aph", "p", "bi", "a"]);
        assert!(seq.l_t() > 4);
    }

    #[test]
    fn separator_ridden_string_explodes_into_single_chars() {
        let vocab = phobia_vocab();
        let seq = bpe_encode(&normalize("a/h/z/g/r/p/p/i/", vocab.alphabet()), &vocab);
        assert_eq!(seq.l_t(), 16);
    }

    #[test]
    fn detokenize_round_trips_encodings() {
        let vocab = phobia_vocab();
        for text in ["athazagoraphobia", "athazagoraphpbia", "a/h/z/g/r/p/p/i/"] {
            let normalized = normalize(text, vocab.alphabet());
            let seq = bpe_encode(&normalized, &vocab);
            let rebuilt = detokenize(&seq.ids, &vocab).unwrap();
            // Inverse up to normalization.
            assert_eq!(normalize(&rebuilt, vocab.alphabet()), normalized);
        }
    }

    #[test]
    fn detokenize_rejects_unknown_id() {
        let vocab = phobia_vocab();
        let bogus = vocab.len() as u32 + 7;
        assert_eq!(
            detokenize(&[bogus], &vocab),
            Err(VocabError::UnknownTokenId(bogus))
        );
    }

    #[test]
    fn known_word_never_encodes_longer_than_corruptions() {
        let vocab = zoo::default_vocab();
        for word in ["the", "morning", "because"] {
            let base = bpe_encode(&words(&[word]), &vocab).l_t();
            assert_eq!(base, 1, "wordlist entries are single tokens");
            // Corrupt each position in turn; corruption never shortens.
            let chars: Vec<char> = word.chars().collect();
            for i in 0..chars.len() {
                let mut corrupted = chars.clone();
                corrupted[i] = if chars[i] == 'z' { 'q' } else { 'z' };
                let corrupted: String = corrupted.into_iter().collect();
                let t = bpe_encode(&words(&[corrupted.as_str()]), &vocab).l_t();
                assert!(t >= base);
            }
        }
    }

    #[test]
    fn vocab_requires_both_character_forms() {
        let alphabet = zoo::default_alphabet();
        // Missing continuation forms entirely.
        let subwords: Vec<Subword> = alphabet
            .chars
            .iter()
            .map(|c| Subword {
                text: c.to_string(),
                continues: false,
            })
            .collect();
        assert!(matches!(
            Vocab::new(alphabet, subwords),
            Err(VocabError::MissingCharacterForms(_))
        ));
    }
}
