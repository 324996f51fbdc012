//! Plain bit vector with rank/select directories.
//!
//! Positions and select arguments are 1-based: `select1(i)` is the position
//! of the i-th set bit and `rank1(select1(i)) == i`.

use super::GeomError;

const WORDS_PER_SUPER: usize = 8; // 512-bit superblocks

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
    /// Ones strictly before each superblock.
    super_rank: Vec<u32>,
    ones: u32,
}

impl BitVec {
    pub fn from_bools(bits: &[bool]) -> Self {
        let mut words = vec![0u64; bits.len().div_ceil(64)];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Self::from_words(words, bits.len())
    }

    pub fn from_words(mut words: Vec<u64>, len: usize) -> Self {
        words.truncate(len.div_ceil(64));
        // Mask stray bits beyond len so popcounts stay honest.
        if len % 64 != 0 {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << (len % 64)) - 1;
            }
        }
        let n_super = words.len().div_ceil(WORDS_PER_SUPER);
        let mut super_rank = Vec::with_capacity(n_super + 1);
        let mut acc = 0u32;
        for s in 0..n_super {
            super_rank.push(acc);
            for w in &words[s * WORDS_PER_SUPER..((s + 1) * WORDS_PER_SUPER).min(words.len())] {
                acc += w.count_ones();
            }
        }
        super_rank.push(acc);
        BitVec { len, words, super_rank, ones: acc }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn count_ones(&self) -> u32 {
        self.ones
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Bit at 1-based position `pos`.
    pub fn get(&self, pos: usize) -> bool {
        debug_assert!(1 <= pos && pos <= self.len);
        let i = pos - 1;
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    /// Ones among positions `1..=pos`; `rank1(0) == 0`.
    pub fn rank1(&self, pos: usize) -> u32 {
        debug_assert!(pos <= self.len);
        if pos == 0 {
            return 0;
        }
        let i = pos - 1; // 0-based index of the last included bit
        let word = i / 64;
        let sup = word / WORDS_PER_SUPER;
        let mut r = self.super_rank[sup];
        for w in &self.words[sup * WORDS_PER_SUPER..word] {
            r += w.count_ones();
        }
        let keep = i % 64 + 1;
        let mask = if keep == 64 { u64::MAX } else { (1u64 << keep) - 1 };
        r + (self.words[word] & mask).count_ones()
    }

    /// 1-based position of the i-th set bit.
    pub fn select1(&self, i: u32) -> Result<usize, GeomError> {
        if i == 0 || i > self.ones {
            return Err(GeomError::SelectOutOfRange { i, ones: self.ones });
        }
        // Superblock with cumulative rank < i, then scan at most 8 words.
        let sup = self.super_rank.partition_point(|&r| r < i) - 1;
        let mut remaining = i - self.super_rank[sup];
        let base = sup * WORDS_PER_SUPER;
        for (k, &w) in self.words[base..].iter().enumerate() {
            let c = w.count_ones();
            if remaining <= c {
                let bit = select_in_word(w, remaining);
                return Ok((base + k) * 64 + bit + 1);
            }
            remaining -= c;
        }
        unreachable!("select within counted superblock")
    }
}

/// 0-based position of the r-th (1-based) set bit of `w`.
fn select_in_word(mut w: u64, mut r: u32) -> usize {
    debug_assert!(r >= 1 && r <= w.count_ones());
    loop {
        let tz = w.trailing_zeros();
        if r == 1 {
            return tz as usize;
        }
        w &= w - 1;
        r -= 1;
    }
}
