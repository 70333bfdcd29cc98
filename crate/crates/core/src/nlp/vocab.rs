//! Subword vocabulary with greedy longest-prefix encoding.
//!
//! Entries come in two forms: word-final subwords ("hello") and continuation
//! subwords ("hel@@" in file notation) that must be followed by more of the
//! same word. Every character of the alphabet is present in both forms, so
//! any word over the alphabet encodes — unfamiliar words just fall apart
//! into many short tokens.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

/// Reserved token ids. They occupy the first three vocabulary slots.
pub const PAD_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
/// Fallback token for the out-of-alphabet replacement character.
pub const UNK_ID: u32 = 2;

/// Number of reserved ids before ordinary subwords start.
pub const RESERVED_TOKENS: u32 = 3;

/// One vocabulary entry: the subword text and whether the word continues
/// after it (file notation: a trailing `@@`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subword {
    pub text: String,
    pub continues: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct FormIds {
    final_id: Option<u32>,
    cont_id: Option<u32>,
}

/// Character inventory of the pipeline: all encodable characters, the subset
/// treated as punctuation by the normalizer, and the fallback character that
/// replaces anything else.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    pub chars: Vec<char>,
    pub punctuation: Vec<char>,
    pub fallback: char,
}

impl Alphabet {
    pub fn new(chars: Vec<char>, punctuation: Vec<char>, fallback: char) -> Result<Self, VocabError> {
        if !chars.contains(&fallback) {
            return Err(VocabError::FallbackNotInAlphabet(fallback));
        }
        for p in &punctuation {
            if !chars.contains(p) {
                return Err(VocabError::PunctuationNotInAlphabet(*p));
            }
        }
        Ok(Alphabet {
            chars,
            punctuation,
            fallback,
        })
    }

    pub fn contains(&self, c: char) -> bool {
        self.chars.contains(&c)
    }

    pub fn is_punctuation(&self, c: char) -> bool {
        self.punctuation.contains(&c)
    }
}

/// Dense-id subword vocabulary. Ids 0..3 are reserved (PAD, EOS, UNK);
/// ordinary entries follow in insertion order.
#[derive(Debug, Clone)]
pub struct Vocab {
    entries: Vec<Subword>,
    lookup: BTreeMap<String, FormIds>,
    max_subword_chars: usize,
    alphabet: Alphabet,
}

impl Vocab {
    /// Build a vocabulary. `subwords` must not contain duplicates, and every
    /// alphabet character must be present in both final and continuation
    /// form so encoding is total.
    pub fn new(alphabet: Alphabet, subwords: Vec<Subword>) -> Result<Self, VocabError> {
        let mut entries = Vec::with_capacity(subwords.len() + RESERVED_TOKENS as usize);
        entries.push(Subword {
            text: "<pad>".to_string(),
            continues: false,
        });
        entries.push(Subword {
            text: "<eos>".to_string(),
            continues: false,
        });
        entries.push(Subword {
            text: "<unk>".to_string(),
            continues: false,
        });

        let mut lookup: BTreeMap<String, FormIds> = BTreeMap::new();
        let mut max_subword_chars = 1;
        for sw in subwords {
            if sw.text.is_empty() {
                return Err(VocabError::EmptySubword);
            }
            for c in sw.text.chars() {
                if !alphabet.contains(c) {
                    return Err(VocabError::SubwordOutsideAlphabet {
                        subword: sw.text.clone(),
                        ch: c,
                    });
                }
            }
            let id = entries.len() as u32;
            let slot = lookup.entry(sw.text.clone()).or_default();
            let form = if sw.continues {
                &mut slot.cont_id
            } else {
                &mut slot.final_id
            };
            if form.is_some() {
                return Err(VocabError::DuplicateSubword(sw.text.clone()));
            }
            *form = Some(id);
            max_subword_chars = max_subword_chars.max(sw.text.chars().count());
            entries.push(sw);
        }

        for c in &alphabet.chars {
            let key = c.to_string();
            let ids = lookup.get(&key).copied().unwrap_or_default();
            if ids.final_id.is_none() || ids.cont_id.is_none() {
                return Err(VocabError::MissingCharacterForms(*c));
            }
        }

        Ok(Vocab {
            entries,
            lookup,
            max_subword_chars,
            alphabet,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn entry(&self, id: u32) -> Option<&Subword> {
        self.entries.get(id as usize)
    }

    /// All entries in id order, reserved tokens included.
    pub fn entries(&self) -> &[Subword] {
        &self.entries
    }

    /// Greedy longest-prefix segmentation of one word. At each position the
    /// longest vocabulary match wins; a match that consumes the rest of the
    /// word must be a final form, anything shorter a continuation form.
    pub fn encode_word(&self, word: &str) -> Vec<u32> {
        let chars: Vec<char> = word.chars().collect();
        let mut ids = Vec::new();
        let mut pos = 0;
        while pos < chars.len() {
            let remaining = chars.len() - pos;
            let mut matched = None;
            let mut probe = String::new();
            for len in (1..=self.max_subword_chars.min(remaining)).rev() {
                probe.clear();
                probe.extend(&chars[pos..pos + len]);
                if let Some(ids_for) = self.lookup.get(probe.as_str()) {
                    let id = if len == remaining {
                        ids_for.final_id
                    } else {
                        ids_for.cont_id
                    };
                    if let Some(id) = id {
                        matched = Some((id, len));
                        break;
                    }
                }
            }
            match matched {
                Some((id, len)) => {
                    ids.push(id);
                    pos += len;
                }
                None => {
                    // Totality fallback: single characters always exist, so
                    // this only triggers for characters outside the alphabet
                    // that slipped past normalization.
                    ids.push(UNK_ID);
                    pos += 1;
                }
            }
        }
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VocabError {
    EmptySubword,
    DuplicateSubword(String),
    MissingCharacterForms(char),
    FallbackNotInAlphabet(char),
    PunctuationNotInAlphabet(char),
    SubwordOutsideAlphabet { subword: String, ch: char },
    UnknownTokenId(u32),
}

impl fmt::Display for VocabError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VocabError::EmptySubword => write!(f, "empty subword"),
            VocabError::DuplicateSubword(s) => write!(f, "duplicate subword '{s}'"),
            VocabError::MissingCharacterForms(c) => {
                write!(f, "alphabet character '{c}' missing final or continuation form")
            }
            VocabError::FallbackNotInAlphabet(c) => {
                write!(f, "fallback character '{c}' not in alphabet")
            }
            VocabError::PunctuationNotInAlphabet(c) => {
                write!(f, "punctuation character '{c}' not in alphabet")
            }
            VocabError::SubwordOutsideAlphabet { subword, ch } => {
                write!(f, "subword '{subword}' contains non-alphabet character '{ch}'")
            }
            VocabError::UnknownTokenId(id) => write!(f, "unknown token id {id}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for VocabError {}
