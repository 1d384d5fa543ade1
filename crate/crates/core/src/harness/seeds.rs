//! Stable seed derivation. The standard library hasher is randomized per
//! process, so a fixed FNV-1a is used instead.

const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(OFFSET)
    }
}

impl Fnv1a {
    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(PRIME);
        }
    }

    pub fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }

    pub fn write_str(&mut self, s: &str) {
        self.write_u64(s.len() as u64);
        self.write(s.as_bytes());
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

/// splitmix64 finalizer, spreads FNV output over all bits.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for `(master, run, label)`.
pub fn derive_seed(master: u64, run: u64, label: &str) -> u64 {
    let mut h = Fnv1a::default();
    h.write_u64(master);
    h.write_u64(run);
    h.write_str(label);
    mix(h.finish())
}

/// Seed for a sub-stream of an existing seed.
pub fn substream(seed: u64, label: &str) -> u64 {
    derive_seed(seed, u64::MAX, label)
}
