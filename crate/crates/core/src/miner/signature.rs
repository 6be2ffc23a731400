use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignatureConfig {
    /// Number of hash functions (signature length).
    pub num_hashes: usize,
    /// Shingle width in characters.
    pub shingle_width: usize,
    pub seed: u64,
}

impl Default for SignatureConfig {
    fn default() -> Self {
        SignatureConfig { num_hashes: 128, shingle_width: 8, seed: 0x6a69_7472 }
    }
}

/// MinHash signature over character shingles of a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSignature {
    mins: Vec<u64>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_shingle(chars: &[char], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &c in chars {
        h ^= c as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h)
}

/// Distinct shingle hashes of `text`. Texts shorter than the shingle width
/// contribute one shingle covering the whole text; the empty text has none.
pub(crate) fn shingle_hashes(text: &str, cfg: &SignatureConfig) -> Vec<u64> {
    let chars: Vec<char> = text.chars().collect();
    let w = cfg.shingle_width.max(1);
    let mut hashes: Vec<u64> = if chars.is_empty() {
        Vec::new()
    } else if chars.len() < w {
        alloc::vec![hash_shingle(&chars, cfg.seed)]
    } else {
        chars.windows(w).map(|s| hash_shingle(s, cfg.seed)).collect()
    };
    hashes.sort_unstable();
    hashes.dedup();
    hashes
}

impl PromptSignature {
    pub fn compute(text: &str, cfg: &SignatureConfig) -> Self {
        let shingles = shingle_hashes(text, cfg);
        // Permutation k is h -> a_k * h + b_k (mod 2^64) with odd a_k.
        let params: Vec<(u64, u64)> = (0..cfg.num_hashes as u64)
            .map(|k| {
                let a = splitmix64(cfg.seed ^ (2 * k + 1)) | 1;
                let b = splitmix64(cfg.seed.wrapping_add(0x51ed_270b) ^ (2 * k + 2));
                (a, b)
            })
            .collect();
        let mut mins = alloc::vec![u64::MAX; cfg.num_hashes];
        for &h in &shingles {
            for (m, &(a, b)) in mins.iter_mut().zip(&params) {
                let v = a.wrapping_mul(h).wrapping_add(b);
                if v < *m {
                    *m = v;
                }
            }
        }
        PromptSignature { mins }
    }

    pub fn len(&self) -> usize {
        self.mins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mins.is_empty()
    }

    pub fn values(&self) -> &[u64] {
        &self.mins
    }

    /// Fraction of agreeing positions: an estimate of the Jaccard similarity
    /// of the two shingle sets.
    pub fn similarity(&self, other: &PromptSignature) -> f64 {
        estimated_similarity(self, other)
    }
}

pub fn estimated_similarity(a: &PromptSignature, b: &PromptSignature) -> f64 {
    let n = a.mins.len().min(b.mins.len());
    if n == 0 {
        return 0.0;
    }
    let same = a.mins.iter().zip(&b.mins).filter(|(x, y)| x == y).count();
    same as f64 / n as f64
}
