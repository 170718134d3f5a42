use super::IntegrateError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Wiener increments `ΔW ~ Normal(0, dt)`, stored step-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    dt: f64,
    n_channels: usize,
    increments: Vec<f64>,
}

impl WienerPath {
    /// Draw a path of `n_steps` steps; the seed fixes every increment.
    pub fn generate(n_channels: usize, n_steps: usize, dt: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = dt.sqrt();
        let increments = (0..n_channels * n_steps)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                x * sd
            })
            .collect();
        Self {
            dt,
            n_channels,
            increments,
        }
    }

    /// A path with every increment zero.
    pub fn zeros(n_channels: usize, n_steps: usize, dt: f64) -> Self {
        Self {
            dt,
            n_channels,
            increments: vec![0.0; n_channels * n_steps],
        }
    }

    pub fn from_increments(
        n_channels: usize,
        dt: f64,
        increments: Vec<f64>,
    ) -> Result<Self, IntegrateError> {
        if n_channels == 0 || !increments.len().is_multiple_of(n_channels) {
            return Err(IntegrateError::Invalid(
                "increment count not a multiple of the channel count".into(),
            ));
        }
        Ok(Self {
            dt,
            n_channels,
            increments,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_steps(&self) -> usize {
        if self.n_channels == 0 {
            0
        } else {
            self.increments.len() / self.n_channels
        }
    }

    #[inline]
    pub fn get(&self, step: usize, channel: usize) -> f64 {
        self.increments[step * self.n_channels + channel]
    }

    pub fn step(&self, step: usize) -> &[f64] {
        &self.increments[step * self.n_channels..(step + 1) * self.n_channels]
    }

    /// Sum consecutive groups of `factor` steps: the same Brownian path seen
    /// with step `factor·dt`.
    pub fn coarsen(&self, factor: usize) -> Result<Self, IntegrateError> {
        if factor == 0 || !self.n_steps().is_multiple_of(factor) {
            return Err(IntegrateError::Invalid(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.n_steps()
            )));
        }
        let nc = self.n_channels;
        let n = self.n_steps() / factor;
        let mut out = vec![0.0; n * nc];
        for k in 0..n {
            for j in 0..factor {
                for c in 0..nc {
                    out[k * nc + c] += self.get(k * factor + j, c);
                }
            }
        }
        Ok(Self {
            dt: self.dt * factor as f64,
            n_channels: nc,
            increments: out,
        })
    }

    /// Increments of one channel.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        (0..self.n_steps()).map(|k| self.get(k, c)).collect()
    }
}
