//! Character vocabularies, non-overlapping batching, IDX parsing and the
//! MNIST glimpse sequences.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::model::{SequenceBatch, SequenceInputs, SequenceTargets};
use crate::{Error, Result};

/// Characters of the training split sorted by code point; ids are dense.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocab {
    chars: Vec<char>,
    index: BTreeMap<char, usize>,
}

pub fn build_vocab(train_text: &str) -> Result<CharVocab> {
    if train_text.is_empty() {
        return Err(Error::Data(String::from("cannot build a vocabulary from empty text")));
    }
    let chars: Vec<char> = train_text.chars().collect::<BTreeSet<_>>().into_iter().collect();
    Ok(CharVocab::from_chars(chars))
}

impl CharVocab {
    fn from_chars(chars: Vec<char>) -> Self {
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        CharVocab { chars, index }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn id(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn char_of(&self, id: usize) -> Option<char> {
        self.chars.get(id).copied()
    }

    /// Encodes `text`; unknown characters are collected into one error.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        let mut ids = Vec::with_capacity(text.len());
        let mut missing = BTreeSet::new();
        for c in text.chars() {
            match self.id(c) {
                Some(id) => ids.push(id),
                None => {
                    missing.insert(c);
                }
            }
        }
        if missing.is_empty() {
            Ok(ids)
        } else {
            let listed: Vec<String> = missing.iter().map(|c| format!("{c:?}")).collect();
            Err(Error::Data(format!(
                "characters absent from the training vocabulary: {}",
                listed.join(", ")
            )))
        }
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter().filter_map(|&id| self.char_of(id)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplits {
    pub vocab: CharVocab,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl CorpusSplits {
    /// Builds the vocabulary from `train` and encodes all three splits.
    pub fn from_texts(train: &str, valid: &str, test: &str) -> Result<Self> {
        let vocab = build_vocab(train)?;
        let encode = |name: &str, text: &str| {
            vocab.encode(text).map_err(|e| match e {
                Error::Data(msg) => Error::Data(format!("{name} split: {msg}")),
                other => other,
            })
        };
        Ok(CorpusSplits {
            train: encode("train", train)?,
            valid: encode("valid", valid)?,
            test: encode("test", test)?,
            vocab,
        })
    }
}

/// Number of `seq_len` input windows in a stream of `n` tokens.
pub fn window_count(n: usize, seq_len: usize) -> usize {
    if seq_len == 0 || n == 0 {
        0
    } else {
        (n - 1) / seq_len
    }
}

/// Cuts `tokens` into consecutive disjoint input windows of `seq_len`
/// (targets shifted by one) and groups them `batch_size` at a time. Lane
/// `b` of batch `k` is window `k * batch_size + b`. Windows that do not
/// fill a whole batch are dropped.
pub fn batch_nonoverlapping(
    tokens: &[usize],
    batch_size: usize,
    seq_len: usize,
) -> Result<Vec<SequenceBatch>> {
    if batch_size == 0 || seq_len == 0 {
        return Err(Error::Config(String::from("batch_size and seq_len must be positive")));
    }
    let windows = window_count(tokens.len(), seq_len);
    let batches = windows / batch_size;
    let mut out = Vec::with_capacity(batches);
    for k in 0..batches {
        let mut inputs = Vec::with_capacity(seq_len * batch_size);
        let mut targets = Vec::with_capacity(seq_len * batch_size);
        for t in 0..seq_len {
            for lane in 0..batch_size {
                let start = (k * batch_size + lane) * seq_len;
                inputs.push(tokens[start + t]);
                targets.push(tokens[start + t + 1]);
            }
        }
        out.push(SequenceBatch::new(
            seq_len,
            batch_size,
            SequenceInputs::Tokens(inputs),
            SequenceTargets::PerStep(targets),
        )?);
    }
    Ok(out)
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, k: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[k * size..(k + 1) * size]
    }

    /// Image `k` with bytes mapped to `[0, 1]` by `/ 255`.
    pub fn normalized(&self, k: usize) -> Vec<f64> {
        self.image(k).iter().map(|&b| b as f64 / 255.0).collect()
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            offset,
            message: String::from("file ends inside the header"),
        })
}

fn expect_magic(bytes: &[u8], magic: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != magic {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic 0x{found:08x}, expected 0x{magic:08x}"),
        });
    }
    Ok(())
}

fn expect_len(bytes: &[u8], header: usize, body: usize) -> Result<()> {
    if bytes.len() < header + body {
        return Err(Error::Format {
            offset: bytes.len(),
            message: format!("truncated: expected {} bytes of data", header + body),
        });
    }
    Ok(())
}

/// Parses an IDX image file (magic 0x00000803, big-endian dimensions).
pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    expect_magic(bytes, IDX_IMAGES_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let size = count * rows * cols;
    expect_len(bytes, 16, size)?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..16 + size].to_vec(),
    })
}

/// Parses an IDX label file (magic 0x00000801). Labels must be digits.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    expect_magic(bytes, IDX_LABELS_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    expect_len(bytes, 8, count)?;
    let labels = bytes[8..8 + count].to_vec();
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(Error::Format {
            offset: 8 + pos,
            message: format!("label {} is not a digit", labels[pos]),
        });
    }
    Ok(labels)
}

pub const GLIMPSE_STEPS: usize = 20;
pub const GLIMPSE_SIZE: usize = 49;

/// 20 steps of 49 pixels plus the digit label.
#[derive(Debug, Clone, PartialEq)]
pub struct GlimpseSequence {
    values: Vec<f64>,
    pub label: u8,
}

impl GlimpseSequence {
    pub fn step(&self, k: usize) -> &[f64] {
        &self.values[k * GLIMPSE_SIZE..(k + 1) * GLIMPSE_SIZE]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Turns a normalized 28x28 image into its glimpse sequence.
///
/// Quadrants are visited top-left, top-right, bottom-left, bottom-right.
/// Each contributes five steps: the 7x7 subsample at even rows and even
/// columns of the 14x14 quadrant, then its four 7x7 sub-blocks in the same
/// TL, TR, BL, BR order. Every step is flattened row-major.
pub fn make_glimpses(image: &[f64], label: u8) -> Result<GlimpseSequence> {
    if image.len() != 28 * 28 {
        return Err(Error::shape("make_glimpses", (image.len(), 1), (28, 28)));
    }
    if label > 9 {
        return Err(Error::Data(format!("label {label} is not a digit")));
    }
    let px = |r: usize, c: usize| image[r * 28 + c];
    let mut values = Vec::with_capacity(GLIMPSE_STEPS * GLIMPSE_SIZE);
    for (qr, qc) in [(0, 0), (0, 14), (14, 0), (14, 14)] {
        for i in 0..7 {
            for j in 0..7 {
                values.push(px(qr + 2 * i, qc + 2 * j));
            }
        }
        for (br, bc) in [(0, 0), (0, 7), (7, 0), (7, 7)] {
            for i in 0..7 {
                for j in 0..7 {
                    values.push(px(qr + br + i, qc + bc + j));
                }
            }
        }
    }
    Ok(GlimpseSequence { values, label })
}

/// Groups glimpse sequences into classification batches. The last batch may
/// be smaller than `batch_size`.
pub fn glimpse_batches(sequences: &[GlimpseSequence], batch_size: usize) -> Result<Vec<SequenceBatch>> {
    if batch_size == 0 {
        return Err(Error::Config(String::from("batch_size must be positive")));
    }
    sequences
        .chunks(batch_size)
        .map(|chunk| {
            let lanes = chunk.len();
            let mut values = Vec::with_capacity(GLIMPSE_STEPS * lanes * GLIMPSE_SIZE);
            for t in 0..GLIMPSE_STEPS {
                for seq in chunk {
                    values.extend_from_slice(seq.step(t));
                }
            }
            SequenceBatch::new(
                GLIMPSE_STEPS,
                lanes,
                SequenceInputs::Dense {
                    dim: GLIMPSE_SIZE,
                    values,
                },
                SequenceTargets::Final(chunk.iter().map(|s| s.label as usize).collect()),
            )
        })
        .collect()
}
