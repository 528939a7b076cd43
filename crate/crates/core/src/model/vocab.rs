use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const EOS_ID: usize = 1;
pub const MAX_TEXT_CHARS: usize = 200;

/// Character inventory. Id 0 is padding, id 1 end-of-sequence, characters follow in declared order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    chars: Vec<char>,
}

impl Vocab {
    pub fn new(chars: &str) -> Result<Self> {
        let chars: Vec<char> = chars.chars().collect();
        if chars.is_empty() {
            return Err(Error::Config("vocabulary is empty".into()));
        }
        for (i, c) in chars.iter().enumerate() {
            if chars[..i].contains(c) {
                return Err(Error::Config(format!("vocabulary lists {c:?} twice")));
            }
        }
        Ok(Vocab { chars })
    }

    /// Number of ids including padding and end-of-sequence.
    pub fn size(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn id(&self, c: char) -> Option<usize> {
        self.chars.iter().position(|&x| x == c).map(|i| i + 2)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        let n = text.chars().count();
        if n == 0 || n > MAX_TEXT_CHARS {
            return Err(Error::Contract(format!("text must have 1..={MAX_TEXT_CHARS} characters, got {n}")));
        }
        text.chars().enumerate().map(|(pos, ch)| self.id(ch).ok_or(Error::Vocab { ch, pos })).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter().filter_map(|&i| i.checked_sub(2).and_then(|k| self.chars.get(k))).collect()
    }
}

/// The six emotion classes in their fixed id order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Neutral,
    Angry,
    Fear,
    Happy,
    Sad,
    Surprise,
}

impl Emotion {
    pub const ALL: [Emotion; 6] =
        [Emotion::Neutral, Emotion::Angry, Emotion::Fear, Emotion::Happy, Emotion::Sad, Emotion::Surprise];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Neutral => "neutral",
            Emotion::Angry => "angry",
            Emotion::Fear => "fear",
            Emotion::Happy => "happy",
            Emotion::Sad => "sad",
            Emotion::Surprise => "surprise",
        }
    }

    pub fn valid_labels() -> String {
        Self::ALL.iter().map(|e| e.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Label { label: s.to_string(), valid: Self::valid_labels() })
    }
}
