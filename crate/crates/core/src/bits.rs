//! Packed bit rows shared by the environment and trajectory storage.

use serde::{Deserialize, Serialize};

pub(crate) const WORD: usize = 64;

#[inline]
pub(crate) fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD)
}

/// Row-major matrix of bits, each row padded to whole `u64` words.
///
/// Padding bits are always zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words_per_row = words_for(cols);
        BitMatrix { rows, cols, words_per_row, words: vec![0; rows * words_per_row] }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        let mut m = BitMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.set(r, c, true);
            }
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = BitMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                if f(r, c) {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        debug_assert!(r < self.rows && c < self.cols);
        (self.words[r * self.words_per_row + c / WORD] >> (c % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        debug_assert!(r < self.rows && c < self.cols);
        let w = &mut self.words[r * self.words_per_row + c / WORD];
        let mask = 1u64 << (c % WORD);
        if v {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    #[inline]
    pub fn row_words(&self, r: usize) -> &[u64] {
        &self.words[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    #[inline]
    pub(crate) fn row_words_mut(&mut self, r: usize) -> &mut [u64] {
        &mut self.words[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    pub(crate) fn push_row(&mut self, row: &[u64]) {
        debug_assert_eq!(row.len(), self.words_per_row);
        self.words.extend_from_slice(row);
        self.rows += 1;
    }

    pub(crate) fn with_row_capacity(cols: usize, capacity: usize) -> Self {
        let words_per_row = words_for(cols);
        BitMatrix { rows: 0, cols, words_per_row, words: Vec::with_capacity(capacity * words_per_row) }
    }

    pub fn row_count_ones(&self, r: usize) -> u32 {
        self.row_words(r).iter().map(|w| w.count_ones()).sum()
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn row_to_vec(&self, r: usize) -> Vec<u8> {
        (0..self.cols).map(|c| self.get(r, c) as u8).collect()
    }

    /// Row bytes with column `c` at bit `c % 8` of byte `c / 8`.
    pub fn row_bytes(&self, r: usize) -> Vec<u8> {
        let words = self.row_words(r);
        (0..self.cols.div_ceil(8)).map(|b| (words[b / 8] >> ((b % 8) * 8)) as u8).collect()
    }

    pub(crate) fn set_row_from_bytes(&mut self, r: usize, bytes: &[u8]) {
        let cols = self.cols;
        let row = self.row_words_mut(r);
        row.iter_mut().for_each(|w| *w = 0);
        for (b, &byte) in bytes.iter().enumerate() {
            row[b / 8] |= (byte as u64) << ((b % 8) * 8);
        }
        // clear padding
        if !cols.is_multiple_of(WORD) {
            let last = row.len() - 1;
            row[last] &= (1u64 << (cols % WORD)) - 1;
        }
    }
}
