//! Counter-based splittable random streams.
//!
//! Every random quantity in the simulator is drawn from its own stream,
//! keyed by (seed, replicate, feature, purpose). A stream is a splitmix64
//! counter sequence, so draws are a pure function of the key and the draw
//! index: results do not depend on evaluation order or thread scheduling,
//! and changing e.g. the replicate count of one group cannot perturb the
//! draws of any other stream.

/// What a stream is used for; part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    SigmaB,
    Lambda,
    Effect,
    ObservationsA,
    ObservationsB,
    Shuffle,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::SigmaB => 1,
            StreamPurpose::Lambda => 2,
            StreamPurpose::Effect => 3,
            StreamPurpose::ObservationsA => 4,
            StreamPurpose::ObservationsB => 5,
            StreamPurpose::Shuffle => 6,
        }
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A 64-bit counter-based generator (splitmix64 output function).
#[derive(Debug, Clone)]
pub struct CounterRng {
    state: u64,
    spare_normal: Option<f64>,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        CounterRng {
            state: mix64(key ^ 0xA076_1D64_78BD_642F),
            spare_normal: None,
        }
    }

    /// Derives an independent stream from the simulation coordinates.
    pub fn from_parts(seed: u64, rep: u64, feature: u64, purpose: StreamPurpose) -> Self {
        let mut key = mix64(seed ^ 0xA076_1D64_78BD_642F);
        key = mix64(key ^ rep.wrapping_mul(0xE703_7ED1_A0B4_28DB));
        key = mix64(key ^ feature.wrapping_mul(0x8EBC_6AF0_9C88_C6E3));
        key = mix64(key ^ purpose.tag().wrapping_mul(0x5899_65CC_7537_4CC3));
        CounterRng {
            state: key,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        mix64(self.state)
    }

    /// Uniform draw in the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw (Box-Muller, caching the paired variate).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Uniform index in `0..n` (multiply-shift; bias is O(n / 2^64)).
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Chi-squared draw with integer degrees of freedom (sum of squares).
    pub fn chi2(&mut self, df: usize) -> f64 {
        let mut acc = 0.0;
        for _ in 0..df {
            let z = self.normal();
            acc += z * z;
        }
        acc
    }
}
