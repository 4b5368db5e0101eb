use std::fmt;

use crate::{Error, Result};

/// A k-bit sign hash. Bit `i` corresponds to column `i` of the projection
/// matrix; storage is little-endian within 64-bit words and bits past `k`
/// are always zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct HashBits {
    words: Vec<u64>,
    k: usize,
}

impl HashBits {
    pub fn zeros(k: usize) -> Self {
        Self { words: vec![0; k.div_ceil(64)], k }
    }

    pub fn ones(k: usize) -> Self {
        let mut h = Self { words: vec![u64::MAX; k.div_ceil(64)], k };
        h.clear_tail();
        h
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut h = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            h.set(i, b);
        }
        h
    }

    /// Parse a string of `0`/`1` characters, bit 0 first.
    pub fn from_bit_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::out_of_range("hash bit", other)),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_bools(&bits))
    }

    /// Build from raw words; bits at positions `>= k` are cleared.
    pub fn from_words(mut words: Vec<u64>, k: usize) -> Self {
        words.resize(k.div_ceil(64), 0);
        let mut h = Self { words, k };
        h.clear_tail();
        h
    }

    fn clear_tail(&mut self) {
        let rem = self.k % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    /// Hash length in bits.
    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.k, "bit {i} out of range for {}-bit hash", self.k);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.k, "bit {i} out of range for {}-bit hash", self.k);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// First `k` bits.
    pub fn prefix(&self, k: usize) -> Result<Self> {
        if k > self.k {
            return Err(Error::out_of_range("prefix length", k));
        }
        Ok(Self::from_words(self.words[..k.div_ceil(64)].to_vec(), k))
    }

    pub fn not(&self) -> Self {
        let mut h = Self { words: self.words.iter().map(|w| !w).collect(), k: self.k };
        h.clear_tail();
        h
    }
}

impl fmt::Debug for HashBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HashBits[{}](", self.k)?;
        for i in 0..self.k.min(64) {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        if self.k > 64 {
            f.write_str("…")?;
        }
        f.write_str(")")
    }
}

/// Popcount of XOR over two equal-length word slices.
#[inline]
pub(crate) fn xor_popcount(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

pub fn hamming_distance(a: &HashBits, b: &HashBits) -> Result<u32> {
    if a.k != b.k {
        return Err(Error::HashLengthMismatch { left: a.k, right: b.k });
    }
    Ok(xor_popcount(&a.words, &b.words))
}
