//! Optical-digits ingestion and booleanization.
//!
//! The source format is the UCI "optdigits" CSV encoding: one sample per
//! line, 64 pixel intensities in `[0, 16]` (8x8, row-major) followed by the
//! class label. Samples are booleanized by a single intensity threshold into
//! a 64-bit input vector.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixels per image (8x8).
pub const PIXELS: usize = 64;
/// Literals per sample: every input bit and its negation.
pub const LITERALS: usize = 2 * PIXELS;
/// Output classes (digits 0-9).
pub const CLASSES: usize = 10;
/// Maximum pixel intensity in the decimated images.
pub const MAX_INTENSITY: u8 = 16;
/// Default booleanization threshold, the midpoint of `[0, 16]`.
pub const DEFAULT_THRESHOLD: u8 = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSample {
    pub pixels: [u8; PIXELS],
    pub label: u8,
}

/// A booleanized image. Bit `i` of `bits` is input `x[i]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoolSample {
    pub bits: u64,
    pub label: u8,
}

impl BoolSample {
    pub fn new(bits: u64, label: u8) -> Self {
        debug_assert!((label as usize) < CLASSES);
        BoolSample { bits, label }
    }

    pub fn bit(&self, i: usize) -> bool {
        (self.bits >> i) & 1 == 1
    }

    pub fn literals(&self) -> Literals {
        Literals::from_bits(self.bits)
    }
}

/// Packed literal vector: word 0 holds `x[0..64]`, word 1 holds `!x[0..64]`.
///
/// Literal `k < 64` is `x[k]`; literal `64 + k` is `NOT x[k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Literals(pub [u64; 2]);

impl Literals {
    pub fn from_bits(bits: u64) -> Self {
        Literals([bits, !bits])
    }

    pub fn get(&self, k: usize) -> bool {
        (self.0[k / 64] >> (k % 64)) & 1 == 1
    }

    pub fn to_bools(&self) -> [bool; LITERALS] {
        std::array::from_fn(|k| self.get(k))
    }
}

/// Expands a sample into its 128 literals.
pub fn literal_vector(sample: &BoolSample) -> [bool; LITERALS] {
    let mut out = [false; LITERALS];
    for k in 0..PIXELS {
        let b = sample.bit(k);
        out[k] = b;
        out[PIXELS + k] = !b;
    }
    out
}

/// `bits[i] = pixels[i] >= threshold`.
pub fn booleanize(raw: &RawSample, threshold: u8) -> BoolSample {
    let bits = raw
        .pixels
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= threshold)
        .fold(0u64, |acc, (i, _)| acc | (1 << i));
    BoolSample::new(bits, raw.label)
}

/// Parses optdigits CSV text. Blank lines are skipped; line numbers in errors
/// are 1-based.
pub fn parse_optdigits(text: &str) -> Result<Vec<RawSample>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        out.push(parse_line(line, idx + 1)?);
    }
    Ok(out)
}

fn parse_line(line: &str, lineno: usize) -> Result<RawSample> {
    let err = |message: String| Error::Parse {
        line: lineno,
        message,
    };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != PIXELS + 1 {
        return Err(err(format!(
            "expected {} fields, found {}",
            PIXELS + 1,
            fields.len()
        )));
    }
    let mut values = [0u8; PIXELS + 1];
    for (i, f) in fields.iter().enumerate() {
        values[i] = f
            .parse::<u8>()
            .map_err(|_| err(format!("field {} is not a small integer: {f:?}", i + 1)))?;
    }
    let mut pixels = [0u8; PIXELS];
    pixels.copy_from_slice(&values[..PIXELS]);
    if let Some(i) = pixels.iter().position(|&p| p > MAX_INTENSITY) {
        return Err(err(format!(
            "pixel {i} out of range [0, {MAX_INTENSITY}]: {}",
            pixels[i]
        )));
    }
    let label = values[PIXELS];
    if label as usize >= CLASSES {
        return Err(err(format!("label out of range [0, 9]: {label}")));
    }
    Ok(RawSample { pixels, label })
}

fn read_file(path: &Path) -> Result<Vec<RawSample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_optdigits(&text).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Loads the published train and test files.
pub fn load_optdigits(
    train_path: impl AsRef<Path>,
    test_path: impl AsRef<Path>,
) -> Result<(Vec<RawSample>, Vec<RawSample>)> {
    Ok((read_file(train_path.as_ref())?, read_file(test_path.as_ref())?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub train: Vec<BoolSample>,
    pub test: Vec<BoolSample>,
    pub threshold: u8,
}

impl Dataset {
    pub fn from_raw(train: &[RawSample], test: &[RawSample], threshold: u8) -> Result<Self> {
        if !(1..=MAX_INTENSITY).contains(&threshold) {
            return Err(Error::Config(format!(
                "threshold must be in [1, {MAX_INTENSITY}], got {threshold}"
            )));
        }
        if train.is_empty() || test.is_empty() {
            return Err(Error::Config("train and test partitions must be non-empty".into()));
        }
        Ok(Dataset {
            train: train.iter().map(|r| booleanize(r, threshold)).collect(),
            test: test.iter().map(|r| booleanize(r, threshold)).collect(),
            threshold,
        })
    }

    pub fn load(
        train_path: impl AsRef<Path>,
        test_path: impl AsRef<Path>,
        threshold: u8,
    ) -> Result<Self> {
        let (train, test) = load_optdigits(train_path, test_path)?;
        Self::from_raw(&train, &test, threshold)
    }
}

/// Per-class sample counts.
pub fn class_histogram(samples: &[BoolSample]) -> [usize; CLASSES] {
    let mut h = [0; CLASSES];
    for s in samples {
        h[s.label as usize] += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pixels: &[u8], label: u8) -> String {
        let mut f: Vec<String> = pixels.iter().map(|p| p.to_string()).collect();
        f.push(label.to_string());
        f.join(",")
    }

    #[test]
    fn all_zero_row_parses() {
        let samples = parse_optdigits(&row(&[0; 64], 5)).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].pixels, [0; 64]);
        assert_eq!(samples[0].label, 5);
    }

    #[test]
    fn short_row_is_rejected_with_line_number() {
        let text = format!("{}\n{}", row(&[0; 64], 1), row(&[0; 63], 5));
        match parse_optdigits(&text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("expected 65 fields"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        let mut px = [0u8; 64];
        px[10] = 17;
        assert!(matches!(
            parse_optdigits(&row(&px, 1)),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_optdigits(&row(&[0; 64], 10)),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(parse_optdigits("a,b").is_err());
    }

    #[test]
    fn crlf_and_blank_lines() {
        let text = format!("{}\r\n\r\n{}\r\n", row(&[1; 64], 0), row(&[2; 64], 9));
        assert_eq!(parse_optdigits(&text).unwrap().len(), 2);
    }

    #[test]
    fn booleanize_examples() {
        let zeros = RawSample { pixels: [0; 64], label: 3 };
        for t in 1..=16 {
            assert_eq!(booleanize(&zeros, t).bits, 0);
        }
        let full = RawSample { pixels: [16; 64], label: 3 };
        let b = booleanize(&full, 8);
        assert_eq!(b.bits, u64::MAX);
        assert_eq!(b.label, 3);

        let mut pixels = [0u8; 64];
        for (i, p) in pixels.iter_mut().enumerate() {
            *p = (7 + i as u8).min(16);
        }
        let b = booleanize(&RawSample { pixels, label: 0 }, 8);
        assert!(!b.bit(0));
        assert!(b.bit(1));
        assert!(b.bit(2));
    }

    #[test]
    fn literal_vector_examples() {
        let l = literal_vector(&BoolSample::new(0, 0));
        assert!(l[..64].iter().all(|&b| !b));
        assert!(l[64..].iter().all(|&b| b));
        let l = literal_vector(&BoolSample::new(u64::MAX, 0));
        assert!(l[..64].iter().all(|&b| b));
        assert!(l[64..].iter().all(|&b| !b));
    }

    #[test]
    fn literal_vector_single_bit_enumeration() {
        for j in 0..64 {
            let l = literal_vector(&BoolSample::new(1 << j, 0));
            for (k, &v) in l.iter().enumerate() {
                let expected = k == j || (k >= 64 && k != 64 + j);
                assert_eq!(v, expected, "j={j} k={k}");
            }
            assert_eq!(BoolSample::new(1 << j, 0).literals().to_bools(), l);
        }
    }

    #[test]
    fn dataset_rejects_bad_threshold_and_empty_parts() {
        let r = RawSample { pixels: [0; 64], label: 0 };
        assert!(Dataset::from_raw(std::slice::from_ref(&r), std::slice::from_ref(&r), 0).is_err());
        assert!(Dataset::from_raw(std::slice::from_ref(&r), std::slice::from_ref(&r), 17).is_err());
        assert!(Dataset::from_raw(&[], std::slice::from_ref(&r), 8).is_err());
        assert!(Dataset::from_raw(std::slice::from_ref(&r), std::slice::from_ref(&r), 8).is_ok());
    }
}
