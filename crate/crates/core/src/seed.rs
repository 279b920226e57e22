//! Stable sub-seed derivation.
//!
//! Sub-seeds are a pure function of the master seed and a list of string
//! identifiers, so each (metric, dataset, family, chain) stream is fixed
//! regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(master: u64, parts: &[&str]) -> u64 {
    let mut h = FNV_OFFSET ^ splitmix(master);
    for part in parts {
        for b in part.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        // separator so ["ab", "c"] != ["a", "bc"]
        h ^= 0xff;
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix(h)
}

pub fn derive_index(master: u64, index: u64) -> u64 {
    splitmix(master ^ splitmix(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_stable_and_separating() {
        assert_eq!(derive(7, &["a", "b"]), derive(7, &["a", "b"]));
        assert_ne!(derive(7, &["ab", "c"]), derive(7, &["a", "bc"]));
        assert_ne!(derive(7, &["a"]), derive(8, &["a"]));
        assert_ne!(derive_index(1, 0), derive_index(1, 1));
    }
}
