//! Reproducible random streams.
//!
//! Every stream is addressed by a [`StreamKey`]: the master seed, the role the
//! stream plays, and two indices (usually the scale index `n` and the
//! replication number). The master seed keys a ChaCha8 generator and the
//! remaining fields are mixed into its 64-bit stream id, so streams for
//! different replications never overlap and can be created in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for all simulation work.
pub type SimRng = ChaCha8Rng;

/// What a stream is used for. Distinct roles never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamRole {
    RenewalPath = 1,
    Coupling = 2,
    ExitTime = 3,
    Terminal = 4,
    Covariance = 5,
    Trace = 6,
    Misc = 7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master: u64,
    pub role: StreamRole,
    pub scale: u64,
    pub replication: u64,
}

impl StreamKey {
    pub fn new(master: u64, role: StreamRole, scale: u64, replication: u64) -> Self {
        Self {
            master,
            role,
            scale,
            replication,
        }
    }

    pub fn rng(&self) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        let id = splitmix64(
            splitmix64(splitmix64(self.role as u64) ^ self.scale) ^ self.replication,
        );
        rng.set_stream(id);
        rng
    }
}

/// Convenience for one-off streams: `(master, role, 0, 0)`.
pub fn stream(master: u64, role: StreamRole) -> SimRng {
    StreamKey::new(master, role, 0, 0).rng()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
