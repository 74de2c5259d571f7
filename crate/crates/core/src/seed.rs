//! Deterministic seed derivation.
//!
//! Sub-experiments (sign-set draws, per-trial samples, per-seed pipelines)
//! each get their own stream derived from a master seed and a salt, so runs
//! are reproducible and independent components do not share randomness.

/// SplitMix64 finalizer; a bijection on `u64` with good avalanche behavior.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives an independent child seed from `(master, salt)`.
pub fn derive_seed(master: u64, salt: u64) -> u64 {
    splitmix64(master ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_deterministic_and_salt_sensitive() {
        assert_eq!(derive_seed(7, 1), derive_seed(7, 1));
        assert_ne!(derive_seed(7, 1), derive_seed(7, 2));
        assert_ne!(derive_seed(7, 1), derive_seed(8, 1));
    }
}
