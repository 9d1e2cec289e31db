//! Deterministic random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream whose 64-bit seed is
//! `derive_seed(root, label, index)`: the label is folded with FNV-1a, then
//! root, label hash and index are combined through three rounds of the
//! SplitMix64 finalizer. Callers use the module or estimator name as the
//! label and a task counter (path index, batch index, grid index) as the
//! index, so a stream depends only on *what* is being drawn, never on which
//! thread draws it.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Stream = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Derives the seed of task `index` of stream family `label` under `root`.
pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    let h = splitmix(root);
    let h = splitmix(h ^ fnv1a(label));
    splitmix(h ^ index)
}

/// The ChaCha8 stream for `(root, label, index)`.
pub fn stream(root: u64, label: &str, index: u64) -> Stream {
    Stream::seed_from_u64(derive_seed(root, label, index))
}

#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = rng.sample(StandardNormal);
    }
}
