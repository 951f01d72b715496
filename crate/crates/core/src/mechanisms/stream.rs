use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

/// Source of uniform draws in `[0, 1)`.
pub trait UniformSource {
    fn next_uniform(&mut self) -> f64;
}

/// Deterministic uniform stream seeded with a 64-bit integer.
///
/// Backed by SplitMix64; each draw takes the top 53 bits of one output word.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: SplitMix64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: SplitMix64::seed_from_u64(seed),
        }
    }
}

impl UniformSource for RandomStream {
    fn next_uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }
}

/// Replays a fixed list of draws, then panics. Handy for tracing a sampler
/// step by step.
#[derive(Debug, Clone)]
pub struct ScriptedUniforms {
    draws: Vec<f64>,
    next: usize,
}

impl ScriptedUniforms {
    pub fn new(draws: impl Into<Vec<f64>>) -> Self {
        Self {
            draws: draws.into(),
            next: 0,
        }
    }

    pub fn consumed(&self) -> usize {
        self.next
    }
}

impl UniformSource for ScriptedUniforms {
    fn next_uniform(&mut self) -> f64 {
        let u = *self
            .draws
            .get(self.next)
            .expect("scripted uniform stream exhausted");
        self.next += 1;
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = RandomStream::new(7);
        let mut b = RandomStream::new(7);
        let xs: Vec<f64> = (0..100).map(|_| a.next_uniform()).collect();
        let ys: Vec<f64> = (0..100).map(|_| b.next_uniform()).collect();
        assert_eq!(xs, ys);
        assert!(xs.iter().all(|&u| (0.0..1.0).contains(&u)));
        let mut c = RandomStream::new(8);
        assert_ne!(xs[0], c.next_uniform());
    }

    #[test]
    fn scripted_replays_in_order() {
        let mut s = ScriptedUniforms::new(vec![0.25, 0.5]);
        assert_eq!(s.next_uniform(), 0.25);
        assert_eq!(s.next_uniform(), 0.5);
        assert_eq!(s.consumed(), 2);
    }
}
