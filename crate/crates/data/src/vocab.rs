//! Word-level vocabulary. Text file format: one token per line, line `i`
//! (zero-based) is id `i`; the first four lines are the reserved tokens.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{DataError, Result};
use crate::text::tokenize;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const SEP: u32 = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<sep>"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Reserved tokens followed by every distinct word of `texts` in
    /// first-seen order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Self::reserved_only();
        for t in texts {
            for w in tokenize(t) {
                v.push(w);
            }
        }
        v
    }

    fn reserved_only() -> Self {
        let tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { tokens, index }
    }

    fn push(&mut self, w: String) {
        if !self.index.contains_key(&w) {
            self.index.insert(w.clone(), self.tokens.len() as u32);
            self.tokens.push(w);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(String::as_str)
            .ok_or_else(|| DataError::Vocab(format!("id {id} outside vocabulary of {}", self.len())))
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Tokenises `text` and maps every word; unknown words are an error.
    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        tokenize(text)
            .into_iter()
            .map(|w| {
                self.id(&w)
                    .ok_or_else(|| DataError::Vocab(format!("out-of-vocabulary word `{w}`")))
            })
            .collect()
    }

    /// Joins words with single spaces, skipping reserved tokens.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut words = Vec::with_capacity(ids.len());
        for &id in ids {
            let t = self.token(id)?;
            if id as usize >= RESERVED.len() {
                words.push(t);
            }
        }
        Ok(words.join(" "))
    }

    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut v = Self::reserved_only();
        for (i, line) in text.lines().enumerate() {
            let t = line.strip_suffix('\r').unwrap_or(line);
            if i < RESERVED.len() {
                if t != RESERVED[i] {
                    return Err(DataError::Line {
                        line: i + 1,
                        msg: format!("expected reserved token {}, found `{t}`", RESERVED[i]),
                    });
                }
                continue;
            }
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(DataError::Line {
                    line: i + 1,
                    msg: "tokens must be non-empty and contain no whitespace".into(),
                });
            }
            if v.index.contains_key(t) {
                return Err(DataError::Line {
                    line: i + 1,
                    msg: format!("duplicate token `{t}`"),
                });
            }
            v.push(t.to_string());
        }
        if text.lines().count() < RESERVED.len() {
            return Err(DataError::Vocab("missing reserved tokens".into()));
        }
        Ok(v)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
