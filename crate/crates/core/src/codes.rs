//! Bit-packed `{-1,+1}^{n×k}` code matrices.
//!
//! Row `i` occupies `words_per_row` consecutive `u64` words. Column `c` lives in
//! bit `c % 64` of word `c / 64`; a set bit means `+1`, a clear bit `-1`.
//! Trailing padding bits of the last word are always zero.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub const WORD_BITS: usize = 64;

#[inline]
pub fn words_for(k: usize) -> usize {
    k.div_ceil(WORD_BITS)
}

/// Mask selecting the valid bits of the last word of a `k`-bit row.
#[inline]
pub fn last_word_mask(k: usize) -> u64 {
    match k % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeMatrix {
    n: usize,
    k: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl CodeMatrix {
    /// `n` codes of `k` bits, every entry `+1`.
    pub fn all_positive(n: usize, k: usize) -> Self {
        let wpr = words_for(k);
        let mut words = vec![u64::MAX; n * wpr];
        if wpr > 0 {
            let mask = last_word_mask(k);
            for row in words.chunks_mut(wpr) {
                row[wpr - 1] = mask;
            }
        }
        Self {
            n,
            k,
            words_per_row: wpr,
            words,
        }
    }

    /// `n` codes of `k` bits, every entry `-1`.
    pub fn all_negative(n: usize, k: usize) -> Self {
        let wpr = words_for(k);
        Self {
            n,
            k,
            words_per_row: wpr,
            words: vec![0; n * wpr],
        }
    }

    /// Packs a matrix whose entries must be exactly `-1.0` or `+1.0`.
    pub fn pack(m: ArrayView2<'_, f64>) -> Result<Self> {
        let (n, k) = m.dim();
        let mut out = Self::all_negative(n, k);
        for ((i, c), &v) in m.indexed_iter() {
            if v == 1.0 {
                out.set(i, c, true);
            } else if v != -1.0 {
                return Err(Error::Domain(format!(
                    "code entry ({i}, {c}) = {v} is not ±1"
                )));
            }
        }
        Ok(out)
    }

    /// Elementwise `sign` of a real matrix with `sign(0) = +1`.
    pub fn from_signs(m: ArrayView2<'_, f64>) -> Self {
        let (n, k) = m.dim();
        let mut out = Self::all_negative(n, k);
        for ((i, c), &v) in m.indexed_iter() {
            if v >= 0.0 {
                out.set(i, c, true);
            }
        }
        out
    }

    /// Builds from raw packed words, clearing any padding bits.
    pub fn from_words(n: usize, k: usize, mut words: Vec<u64>) -> Result<Self> {
        let wpr = words_for(k);
        if words.len() != n * wpr {
            return Err(Error::Shape(format!(
                "{} words for {n} codes of {k} bits (expected {})",
                words.len(),
                n * wpr
            )));
        }
        if wpr > 0 {
            let mask = last_word_mask(k);
            for row in words.chunks_mut(wpr) {
                row[wpr - 1] &= mask;
            }
        }
        Ok(Self {
            n,
            k,
            words_per_row: wpr,
            words,
        })
    }

    pub fn unpack(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n, self.k), |(i, c)| self.get(i, c))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn row_words(&self, i: usize) -> &[u64] {
        &self.words[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    #[inline]
    pub fn bit(&self, i: usize, c: usize) -> bool {
        let w = self.words[i * self.words_per_row + c / WORD_BITS];
        (w >> (c % WORD_BITS)) & 1 == 1
    }

    /// Entry `(i, c)` as `±1.0`.
    #[inline]
    pub fn get(&self, i: usize, c: usize) -> f64 {
        if self.bit(i, c) {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, c: usize, positive: bool) {
        let w = &mut self.words[i * self.words_per_row + c / WORD_BITS];
        let b = 1u64 << (c % WORD_BITS);
        if positive {
            *w |= b;
        } else {
            *w &= !b;
        }
    }

    /// Column `c` as `±1.0` values.
    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, c)).collect()
    }

    /// Codes for the given row indices, in order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let mut words = Vec::with_capacity(rows.len() * self.words_per_row);
        for &r in rows {
            if r >= self.n {
                return Err(Error::Index {
                    index: r,
                    len: self.n,
                });
            }
            words.extend_from_slice(self.row_words(r));
        }
        Ok(Self {
            n: rows.len(),
            k: self.k,
            words_per_row: self.words_per_row,
            words,
        })
    }

    /// Row bits rendered column 0 first, e.g. `"1011"`.
    pub fn row_string(&self, i: usize) -> String {
        (0..self.k)
            .map(|c| if self.bit(i, c) { '1' } else { '0' })
            .collect()
    }
}
