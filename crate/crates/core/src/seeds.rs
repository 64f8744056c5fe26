//! Sub-seeds derived from one root seed.
//!
//! Each consumer reads its own ChaCha stream of the root key, so adding a
//! geometry or an epoch never shifts the randomness seen by another.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INIT: u64 = 0;
const GEOMETRY: u64 = 1 << 40;
const EPOCH: u64 = 2 << 40;

/// A generator on `stream` of the root seed.
pub fn stream(root: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream);
    rng
}

fn derive(root: u64, s: u64) -> u64 {
    stream(root, s).next_u64()
}

/// Seed for the initial network weights.
pub fn init(root: u64) -> u64 {
    derive(root, INIT)
}

/// Seed for sampling geometry number `index`.
pub fn geometry(root: u64, index: usize) -> u64 {
    derive(root, GEOMETRY + index as u64)
}

/// Generator for the shuffle of epoch `epoch`.
pub fn epoch(root: u64, epoch: usize) -> ChaCha8Rng {
    stream(root, EPOCH + epoch as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ_and_repeat() {
        assert_eq!(init(7), init(7));
        assert_ne!(init(7), init(8));
        assert_ne!(geometry(7, 0), geometry(7, 1));
        assert_ne!(geometry(7, 0), init(7));
        assert_eq!(epoch(3, 5).next_u64(), epoch(3, 5).next_u64());
        assert_ne!(epoch(3, 5).next_u64(), epoch(3, 6).next_u64());
    }
}
