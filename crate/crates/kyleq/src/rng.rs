//! Counter-based random numbers for reproducible parallel Monte Carlo.
//!
//! Each path owns a generator whose output is a pure function of
//! `(base seed, path index, draw counter)`: results are identical for any
//! execution order or thread count. The mixing function is splitmix64,
//! applied to a per-path key derived by splitting the base seed.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline(always)]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based generator: `next_u64 = mix(key, counter++)`.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    /// Root stream for a base seed.
    pub fn new(base_seed: u64) -> Self {
        CounterRng { key: splitmix64(base_seed), counter: 0 }
    }

    /// Independent substream for one path: the split chains the mixer over
    /// the seed and the index, so any two (seed, index) pairs give
    /// unrelated streams.
    pub fn for_path(base_seed: u64, path_index: u64) -> Self {
        let h = splitmix64(base_seed);
        let k = splitmix64(h.wrapping_add(path_index.wrapping_mul(GOLDEN) ^ 0x6A09_E667_F3BC_C909));
        CounterRng { key: k, counter: 0 }
    }
}

impl RngCore for CounterRng {
    #[inline(always)]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline(always)]
    fn next_u64(&mut self) -> u64 {
        let out = splitmix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter = self.counter.wrapping_add(1);
        out
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        rand::rand_core::impls::fill_bytes_via_next(self, dest)
    }
}

/// One standard normal draw.
#[inline(always)]
pub fn normal(rng: &mut CounterRng) -> f64 {
    use rand::Rng;
    rng.sample::<f64, _>(rand_distr::StandardNormal)
}
