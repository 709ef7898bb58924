//! Counter-based deterministic pseudo-random generator.
//!
//! Every stochastic choice in the library (initialization, data generation,
//! minibatch shuffling) draws from this generator so that results are
//! bit-identical across platforms and runs. The core is the splitmix64
//! finalizer applied to a (seed, counter) pair; there is no hidden state
//! beyond the counter.

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Stateless-style counter RNG: output i of stream `seed` is mix(mix(seed) + i).
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
    // one cached Gaussian from the Box-Muller pair
    spare: Option<f64>,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng {
            key: mix(seed),
            counter: 0,
            spare: None,
        }
    }

    /// Derive an independent stream from this seed and a stream label.
    pub fn substream(seed: u64, label: u64) -> Self {
        CounterRng::new(mix(seed).wrapping_add(mix(label.wrapping_mul(0xa076_1d64_78bd_642f))))
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = mix(self.key.wrapping_add(self.counter));
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(g) = self.spare.take() {
            return g;
        }
        // rejection on u1 = 0 to keep ln finite
        let mut u1 = self.next_f64();
        while u1 == 0.0 {
            u1 = self.next_f64();
        }
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Uniform integer in [0, bound) without modulo bias.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }

    /// Fisher-Yates shuffle of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            p.swap(i, j);
        }
        p
    }
}
