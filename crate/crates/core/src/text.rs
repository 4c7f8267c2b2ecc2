//! Tokenization and vocabulary for action descriptions.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::io::write_atomic;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const COMMA: &str = ",";

#[derive(Debug, Error)]
pub enum TextError {
    #[error("text is empty")]
    Empty,
    #[error("token id {id} outside vocabulary of {size}")]
    BadId { id: usize, size: usize },
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),
    #[error("vocabulary file: {0}")]
    Io(String),
}

/// Lowercase, drop punctuation other than commas, split on whitespace.
/// Commas become standalone tokens.
pub fn tokenize_words(text: &str) -> Result<Vec<String>, TextError> {
    let mut cleaned = String::with_capacity(text.len() + 8);
    for c in text.chars().flat_map(char::to_lowercase) {
        if c == ',' {
            cleaned.push_str(" , ");
        } else if c.is_alphanumeric() || c.is_whitespace() {
            cleaned.push(c);
        } else {
            cleaned.push(' ');
        }
    }
    let words: Vec<String> = cleaned.split_whitespace().map(str::to_string).collect();
    if words.is_empty() {
        return Err(TextError::Empty);
    }
    Ok(words)
}

pub fn detokenize(words: &[String]) -> String {
    words.join(" ")
}

/// Descriptions joined into one text with commas, as used by the two-action
/// single-shot baseline.
pub fn comma_join<S: AsRef<str>>(texts: &[S]) -> String {
    texts.iter().map(|t| t.as_ref().trim()).collect::<Vec<_>>().join(", ")
}

/// Token strings with ids given by position; 0 is padding, 1 unknown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, TextError> {
        if tokens.len() < 2 || tokens[PAD_ID] != PAD_TOKEN || tokens[UNK_ID] != UNK_TOKEN {
            return Err(TextError::Vocabulary(format!("must start with {PAD_TOKEN:?}, {UNK_TOKEN:?}")));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(TextError::Vocabulary(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Sorted word set of the given texts; the comma token is always present.
    pub fn build<S: AsRef<str>>(texts: &[S]) -> Result<Self, TextError> {
        let mut words = BTreeSet::new();
        words.insert(COMMA.to_string());
        for t in texts {
            words.extend(tokenize_words(t.as_ref())?);
        }
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        tokens.extend(words);
        Vocabulary::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>, TextError> {
        Ok(tokenize_words(text)?.iter().map(|w| self.id(w)).collect())
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>, TextError> {
        ids.iter()
            .map(|&id| {
                self.tokens.get(id).cloned().ok_or(TextError::BadId { id, size: self.len() })
            })
            .collect()
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(&VocabularyFile { tokens: self.tokens.clone() }).expect("vocabulary serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, TextError> {
        let f: VocabularyFile = serde_json::from_slice(bytes).map_err(|e| TextError::Vocabulary(e.to_string()))?;
        Vocabulary::from_tokens(f.tokens)
    }

    pub fn save(&self, path: &Path) -> Result<(), TextError> {
        write_atomic(path, &self.to_json()).map_err(|e| TextError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, TextError> {
        let bytes = std::fs::read(path).map_err(|e| TextError::Io(format!("{}: {e}", path.display())))?;
        Vocabulary::from_json(&bytes)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json()))
    }
}
