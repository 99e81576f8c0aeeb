//! Counter-based seed derivation.
//!
//! Every random object is generated from a 64-bit seed that is itself derived
//! from the run seed and an index, so row `i` of a matrix or trial `t` of an
//! experiment can be regenerated without replaying any other draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep independent consumers of one run seed apart.
pub mod stream {
    pub const FAMILY: u64 = 0x6661_6d69_6c79;
    pub const MATRIX: u64 = 0x6d61_7472_6978;
    pub const WIDTH: u64 = 0x7769_6474_68;
    pub const PROBE: u64 = 0x7072_6f62_65;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the `index`-th child of `seed`.
pub fn derive(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn children_differ() {
        let a: Vec<u64> = (0..1000).map(|i| derive(7, i)).collect();
        let mut s = a.clone();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), a.len());
        assert_ne!(derive(7, 0), derive(8, 0));
    }
}
