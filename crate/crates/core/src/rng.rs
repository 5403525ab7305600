//! Seed-addressable random streams.
//!
//! Each replicate (or live session) owns one ChaCha8 stream selected by
//! `(seed, stream)`; the word position makes a generator resumable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u64,
}

impl RngState {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            seed,
            stream,
            word_pos: 0,
        }
    }

    pub fn generator(&self) -> ChaCha8Rng {
        let mut g = stream_rng(self.seed, self.stream);
        g.set_word_pos(u128::from(self.word_pos));
        g
    }

    pub fn capture(&mut self, g: &ChaCha8Rng) {
        self.word_pos = g.get_word_pos() as u64;
    }
}

/// Generator for replicate `stream` of a study seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    g.set_stream(stream);
    g
}

/// Uniform on [0, 1).
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// Standard normal by inversion.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u = uniform(rng);
        if u > 0.0 {
            return normal::quantile(u);
        }
    }
}

/// Bernoulli draw returning 0/1.
pub fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> u8 {
    u8::from(uniform(rng) < p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resumes_from_word_position() {
        let mut st = RngState::new(42, 3);
        let mut g = st.generator();
        let _: Vec<f64> = (0..7).map(|_| uniform(&mut g)).collect();
        st.capture(&g);
        let a: Vec<f64> = (0..5).map(|_| uniform(&mut g)).collect();
        let mut h = st.generator();
        let b: Vec<f64> = (0..5).map(|_| uniform(&mut h)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn streams_differ() {
        let a = uniform(&mut stream_rng(1, 0));
        let b = uniform(&mut stream_rng(1, 1));
        assert_ne!(a, b);
        assert_eq!(a, uniform(&mut stream_rng(1, 0)));
    }

    #[test]
    fn normal_draws_have_unit_moments() {
        let mut g = stream_rng(9, 0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| standard_normal(&mut g)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
        assert!(m.abs() < 0.01, "{m}");
        assert!((v - 1.0).abs() < 0.01, "{v}");
    }
}
