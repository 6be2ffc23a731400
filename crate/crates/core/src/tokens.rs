//! Deterministic token estimate used for all accounting.

/// Estimated token count: one token per four characters, rounded up.
pub fn count_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}
