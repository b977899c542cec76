use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An n-bit watermark.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Watermark {
    bits: Vec<bool>,
}

impl Watermark {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::param("watermark needs at least one bit"));
        }
        Ok(Self { bits })
    }

    /// Uniformly random bits, deterministic in `seed`.
    pub fn random(n: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new((0..n).map(|_| rng.gen::<bool>()).collect())
    }

    /// Parses a hex string; the first `n` bits, most significant first, are used.
    pub fn from_hex(hex_str: &str, n: usize) -> Result<Self> {
        let s = hex_str.trim().trim_start_matches("0x");
        let bytes =
            hex::decode(s).map_err(|e| Error::param(format!("bad watermark hex {s:?}: {e}")))?;
        if bytes.len() * 8 < n {
            return Err(Error::param(format!(
                "hex watermark has {} bits, need {n}",
                bytes.len() * 8
            )));
        }
        let bits = (0..n)
            .map(|i| (bytes[i / 8] >> (7 - i % 8)) & 1 == 1)
            .collect();
        Self::new(bits)
    }

    pub fn to_hex(&self) -> String {
        let mut bytes = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                bytes[i / 8] |= 1 << (7 - i % 8);
            }
        }
        hex::encode(bytes)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// `+1.0` for a set bit, `-1.0` otherwise.
    pub fn signs(&self) -> impl Iterator<Item = f64> + '_ {
        self.bits.iter().map(|&b| if b { 1.0 } else { -1.0 })
    }

    pub fn complement(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }
}

impl fmt::Display for Watermark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Watermark {
    type Err = Error;

    /// Parses a string of `0`/`1` characters.
    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::param(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(bits)
    }
}

/// Rounds decoded logits to bits: `bit_j = 1` iff `y_j >= 0.5`.
pub fn round_logits(logits: &[f64]) -> Vec<bool> {
    logits.iter().map(|&y| y >= 0.5).collect()
}

/// Number of positions where `a` and `b` agree.
pub fn matching_bits(a: &[bool], b: &[bool]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::dims(format!("{} bits", b.len()), a.len()));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x == y).count())
}

/// Fraction of matching bits.
pub fn bitwise_accuracy(decoded: &[bool], truth: &[bool]) -> Result<f64> {
    let m = matching_bits(decoded, truth)?;
    Ok(m as f64 / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_inclusive_at_half() {
        assert_eq!(round_logits(&[0.5]), vec![true]);
        assert_eq!(round_logits(&[0.49; 4]), vec![false; 4]);
    }

    #[test]
    fn rounding_is_idempotent() {
        let y = [0.1, 0.7, 0.5, 0.49999, 0.93];
        let once = round_logits(&y);
        let as_reals: Vec<f64> = once.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        assert_eq!(round_logits(&as_reals), once);
    }

    #[test]
    fn accuracy_counts() {
        let wg = Watermark::random(4, 3).unwrap();
        assert_eq!(bitwise_accuracy(wg.bits(), wg.bits()).unwrap(), 1.0);
        assert_eq!(
            bitwise_accuracy(wg.complement().bits(), wg.bits()).unwrap(),
            0.0
        );
        let mut one_off = wg.bits().to_vec();
        one_off[2] = !one_off[2];
        assert_eq!(bitwise_accuracy(&one_off, wg.bits()).unwrap(), 0.75);
    }

    #[test]
    fn accuracy_length_mismatch() {
        assert!(bitwise_accuracy(&[true], &[true, false]).is_err());
    }

    #[test]
    fn hex_round_trip() {
        let wm = Watermark::random(32, 11).unwrap();
        let back = Watermark::from_hex(&wm.to_hex(), 32).unwrap();
        assert_eq!(wm, back);
        let short = Watermark::from_hex("a0", 3).unwrap();
        assert_eq!(short.to_string(), "101");
        assert!(Watermark::from_hex("ff", 9).is_err());
    }
}
