//! Deterministic pseudo-random numbers.
//!
//! All stochastic parts of the crate (profile noise, device placement,
//! dataset shuffles, weight initialisation) draw from [`SplitMix64`], the
//! 64-bit generator of Steele, Lea and Doug's SplittableRandom family.
//! It is tiny, has a full 2^64 period per stream and, unlike `StdRng`,
//! its output is fixed by this source file alone, so seeded runs are
//! reproducible across platforms and dependency upgrades.

/// SplitMix64 generator. One `u64` of state, one multiply-xor-shift chain
/// per output.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Next raw 64-bit output.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform draw in [0, 1) with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform draw in [-1, 1).
    pub fn symmetric(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }

    /// Uniform integer in [0, n). `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Modulo bias is < 2^-50 for the n used here (grid and dataset sizes).
        (self.next_u64() % n as u64) as usize
    }

    /// Seeded partial Fisher-Yates: choose `k` distinct indices out of `n`.
    /// Returned indices are in draw order.
    pub fn choose(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot choose {k} of {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }

    /// Seeded in-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Derive an independent stream seed from a master seed and a label.
///
/// Scenario and profile seeds are derived this way so that adding or
/// reordering scenarios never shifts the draws of the others.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    // FNV-1a over the label, then one SplitMix64 scramble of (master ^ hash).
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in label.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    SplitMix64::new(master ^ hash).next_u64()
}
