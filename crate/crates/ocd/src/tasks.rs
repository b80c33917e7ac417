//! Deterministic synthetic transduction datasets and the vocabulary file.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use ocd_core::seq::{Sequence, TokenId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Character vocabulary with reserved eos/pad markers and an optional space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabSpec {
    /// Content characters, in token-id order. May include `' '`.
    pub tokens: Vec<char>,
    #[serde(default = "default_eos")]
    pub eos: String,
    #[serde(default = "default_pad")]
    pub pad: String,
    #[serde(default)]
    pub space: Option<char>,
}

fn default_eos() -> String {
    "</s>".to_string()
}

fn default_pad() -> String {
    "<pad>".to_string()
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("unknown character {0:?}")]
    UnknownChar(char),
    #[error("duplicate character {0:?} in vocabulary")]
    DuplicateChar(char),
    #[error("invalid length range: min {min} max {max} (need 1 <= min <= max)")]
    InvalidRange { min: usize, max: usize },
    #[error("unknown task {0:?} (expected copy|reverse|rot_<k>|dedup|word_reverse)")]
    UnknownTask(String),
    #[error("task {0} requires a space character in the vocabulary")]
    MissingSpace(String),
    #[error("{path}:{line}: malformed record: {source}")]
    MalformedLine {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl VocabSpec {
    /// Lowercase letters `a..` with an optional trailing space token.
    pub fn alphabetic(content_size: usize, with_space: bool) -> Self {
        let mut tokens: Vec<char> = (0..content_size)
            .map(|i| (b'a' + i as u8) as char)
            .collect();
        let space = if with_space {
            tokens.push(' ');
            Some(' ')
        } else {
            None
        };
        VocabSpec {
            tokens,
            eos: default_eos(),
            pad: default_pad(),
            space,
        }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        let mut seen = BTreeMap::new();
        for &c in &self.tokens {
            if seen.insert(c, ()).is_some() {
                return Err(TaskError::DuplicateChar(c));
            }
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn space_id(&self) -> Option<TokenId> {
        let space = self.space?;
        self.tokens
            .iter()
            .position(|&c| c == space)
            .map(|i| i as TokenId)
    }

    pub fn encode(&self, s: &str) -> Result<Sequence, TaskError> {
        s.chars()
            .map(|c| {
                self.tokens
                    .iter()
                    .position(|&t| t == c)
                    .map(|i| i as TokenId)
                    .ok_or(TaskError::UnknownChar(c))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Sequence::new)
    }

    pub fn decode(&self, seq: &Sequence) -> String {
        seq.tokens()
            .iter()
            .map(|&t| self.tokens[t as usize])
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), TaskError> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TaskError> {
        let spec: VocabSpec = serde_json::from_str(&fs::read_to_string(path)?)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// One input/output string pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub x: String,
    pub y: String,
}

/// Synthetic transduction task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Copy,
    Reverse,
    /// Shift each content token index by `k` modulo the content vocab size.
    RotK(usize),
    /// Collapse runs of equal characters.
    Dedup,
    /// 2-4 space-separated words; the output reverses word order.
    WordReverse,
}

impl Task {
    pub fn parse(s: &str) -> Result<Task, TaskError> {
        match s {
            "copy" => Ok(Task::Copy),
            "reverse" => Ok(Task::Reverse),
            "dedup" => Ok(Task::Dedup),
            "word_reverse" => Ok(Task::WordReverse),
            other => {
                if let Some(k) = other.strip_prefix("rot_") {
                    k.parse::<usize>()
                        .map(Task::RotK)
                        .map_err(|_| TaskError::UnknownTask(other.to_string()))
                } else {
                    Err(TaskError::UnknownTask(other.to_string()))
                }
            }
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Copy => write!(f, "copy"),
            Task::Reverse => write!(f, "reverse"),
            Task::RotK(k) => write!(f, "rot_{k}"),
            Task::Dedup => write!(f, "dedup"),
            Task::WordReverse => write!(f, "word_reverse"),
        }
    }
}

/// Derive the target string for an input.
pub fn apply_task(task: Task, x: &str, vocab: &VocabSpec) -> String {
    match task {
        Task::Copy => x.to_string(),
        Task::Reverse => x.chars().rev().collect(),
        Task::RotK(k) => {
            // Rotate within the content alphabet, leaving the space alone.
            let content: Vec<char> = vocab
                .tokens
                .iter()
                .copied()
                .filter(|&c| Some(c) != vocab.space)
                .collect();
            x.chars()
                .map(|c| {
                    if Some(c) == vocab.space {
                        c
                    } else {
                        let i = content.iter().position(|&t| t == c).unwrap();
                        content[(i + k) % content.len()]
                    }
                })
                .collect()
        }
        Task::Dedup => {
            let mut out = String::new();
            let mut last = None;
            for c in x.chars() {
                if last != Some(c) {
                    out.push(c);
                }
                last = Some(c);
            }
            out
        }
        Task::WordReverse => {
            let words: Vec<&str> = x.split(' ').collect();
            words.into_iter().rev().collect::<Vec<_>>().join(" ")
        }
    }
}

/// Deterministic dataset generation. Each record derives its own rng stream
/// from (`seed`, index), so records are independent of generation order.
pub fn generate_dataset(
    task: Task,
    n: usize,
    len_range: (usize, usize),
    vocab: &VocabSpec,
    seed: u64,
) -> Result<Vec<DatasetRecord>, TaskError> {
    let (min, max) = len_range;
    if min < 1 || max < min {
        return Err(TaskError::InvalidRange { min, max });
    }
    vocab.validate()?;
    let content: Vec<char> = vocab
        .tokens
        .iter()
        .copied()
        .filter(|&c| Some(c) != vocab.space)
        .collect();
    if matches!(task, Task::WordReverse) && vocab.space.is_none() {
        return Err(TaskError::MissingSpace(task.to_string()));
    }

    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)));
        let x: String = match task {
            Task::WordReverse => {
                let n_words = rng.gen_range(2..=4);
                let words: Vec<String> = (0..n_words)
                    .map(|_| {
                        let len = rng.gen_range(min..=max);
                        (0..len).map(|_| content[rng.gen_range(0..content.len())]).collect()
                    })
                    .collect();
                words.join(" ")
            }
            _ => {
                let len = rng.gen_range(min..=max);
                (0..len).map(|_| content[rng.gen_range(0..content.len())]).collect()
            }
        };
        let y = apply_task(task, &x, vocab);
        records.push(DatasetRecord { x, y });
    }
    Ok(records)
}

/// Line-delimited JSON, one record per line.
pub fn save_dataset(records: &[DatasetRecord], path: &Path) -> Result<(), TaskError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, TaskError> {
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(line).map_err(|source| TaskError::MalformedLine {
                path: path.display().to_string(),
                line: i + 1,
                source,
            })?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> VocabSpec {
        VocabSpec::alphabetic(3, false)
    }

    #[test]
    fn reverse_and_dedup_and_rot() {
        let v = vocab();
        assert_eq!(apply_task(Task::Reverse, "abc", &v), "cba");
        assert_eq!(apply_task(Task::Dedup, "aabba", &v), "aba");
        assert_eq!(apply_task(Task::RotK(1), "ac", &v), "ba");
        assert_eq!(apply_task(Task::Copy, "cab", &v), "cab");
    }

    #[test]
    fn word_reverse_keeps_spaces() {
        let v = VocabSpec::alphabetic(3, true);
        assert_eq!(apply_task(Task::WordReverse, "ab c ba", &v), "ba c ab");
    }

    #[test]
    fn generation_is_deterministic_and_task_correct() {
        let v = VocabSpec::alphabetic(4, false);
        let a = generate_dataset(Task::Reverse, 50, (3, 8), &v, 9).unwrap();
        let b = generate_dataset(Task::Reverse, 50, (3, 8), &v, 9).unwrap();
        assert_eq!(a, b);
        for r in &a {
            assert_eq!(r.y, r.x.chars().rev().collect::<String>());
            assert!(r.x.len() >= 3 && r.x.len() <= 8);
        }
    }

    #[test]
    fn invalid_range_rejected() {
        let v = vocab();
        assert!(matches!(
            generate_dataset(Task::Copy, 1, (0, 4), &v, 0),
            Err(TaskError::InvalidRange { .. })
        ));
        assert!(matches!(
            generate_dataset(Task::Copy, 1, (5, 4), &v, 0),
            Err(TaskError::InvalidRange { .. })
        ));
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let v = VocabSpec::alphabetic(4, false);
        let records = generate_dataset(Task::Copy, 10, (1, 5), &v, 1).unwrap();
        save_dataset(&records, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), records);
    }

    #[test]
    fn empty_file_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_dataset(&path).unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"x\":\"ab\",\"y\":\"ba\"}\nnot json\n").unwrap();
        match load_dataset(&path) {
            Err(TaskError::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed-line error, got {other:?}"),
        }
    }

    #[test]
    fn encode_rejects_unknown_char() {
        let v = vocab();
        assert!(matches!(v.encode("abz"), Err(TaskError::UnknownChar('z'))));
        let s = v.encode("cab").unwrap();
        assert_eq!(v.decode(&s), "cab");
    }

    #[test]
    fn vocab_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        let v = VocabSpec::alphabetic(5, true);
        v.save(&path).unwrap();
        assert_eq!(VocabSpec::load(&path).unwrap(), v);
    }
}
