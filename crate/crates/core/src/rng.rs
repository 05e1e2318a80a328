use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random stream keyed by `(seed, domain, index)`.
///
/// Streams never depend on evaluation order, so work keyed this way can be
/// split across threads without changing results.
pub fn stream(seed: u64, domain: u32, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(domain)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

pub(crate) mod domain {
    pub const CAMERA: u32 = 1;
    pub const POINT_NOISE: u32 = 2;
    pub const MASK_CORRUPTION: u32 = 3;
    pub const OUTLIERS: u32 = 4;
    pub const RANSAC: u32 = 5;
    pub const SUBSAMPLE: u32 = 6;
    pub const TEMPLATE: u32 = 7;
    pub const EVAL_SAMPLE: u32 = 8;
    pub const CAMERA_RANSAC: u32 = 9;
    pub const SAMPLE_JITTER: u32 = 10;
}
