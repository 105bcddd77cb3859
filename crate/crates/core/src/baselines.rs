//! Comparison policies: always-maximum and uniform-random actions.

use rand::Rng;

use crate::env::{action_count, EnvAction};

/// Every sector gets `(+1 deg, +5 dB)`: the last index of the encoding.
pub fn max_policy(s_count: usize) -> EnvAction {
    assert!(s_count >= 1, "max_policy needs at least one sector");
    EnvAction(action_count(s_count).expect("sector count too large") - 1)
}

pub fn random_policy<R: Rng + ?Sized>(s_count: usize, rng: &mut R) -> EnvAction {
    assert!(s_count >= 1, "random_policy needs at least one sector");
    EnvAction(rng.random_range(0..action_count(s_count).expect("sector count too large")))
}
