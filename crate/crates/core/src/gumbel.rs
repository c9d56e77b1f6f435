//! Gumbel noise, Gumbel-Max categorical draws and the Gumbel-Softmax relaxation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Uniform draws are clamped into `[UNIFORM_EPS, 1 - UNIFORM_EPS]` before the double logarithm.
pub const UNIFORM_EPS: f64 = 1e-12;

/// Tolerance on the simplex constraint for probability inputs.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Seeded random stream addressed by `(seed, stream, position)`.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Restores a stream at a previously observed [`position`](Self::position).
    pub fn at_position(seed: u64, stream: u64, position: u128) -> Self {
        let mut state = Self::with_stream(seed, stream);
        state.rng.set_word_pos(position);
        state
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// An independent stream under the same seed.
    pub fn fork(&self, stream: u64) -> Self {
        Self::with_stream(self.seed, stream)
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn below(&mut self, bound: usize) -> usize {
        self.rng.random_range(0..bound)
    }

    pub fn coin(&mut self) -> bool {
        self.rng.random::<bool>()
    }

    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

impl PartialEq for RngState {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed && self.stream == other.stream && self.position() == other.position()
    }
}

/// Standard Gumbel variate from a uniform draw, `-ln(-ln(u))` with `u` clamped.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(UNIFORM_EPS, 1.0 - UNIFORM_EPS);
    -(-u.ln()).ln()
}

/// `count` independent standard Gumbel draws.
pub fn gumbel_noise(rng: &mut RngState, count: usize) -> Vec<f64> {
    (0..count).map(|_| gumbel_from_uniform(rng.uniform())).collect()
}

/// Checks that `p` is a probability vector within [`SIMPLEX_TOL`].
pub fn validate_simplex(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidProbabilities("empty vector".into()));
    }
    if let Some(bad) = p.iter().find(|v| !v.is_finite() || **v < -SIMPLEX_TOL) {
        return Err(Error::InvalidProbabilities(format!("entry {bad} is not a probability")));
    }
    if p.iter().all(|&v| v <= 0.0) {
        return Err(Error::InvalidProbabilities("all entries are zero".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidProbabilities(format!("entries sum to {total}")));
    }
    Ok(())
}

fn validate_temperature(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTemperature(tau))
    }
}

/// `ln p_k + G_k`, with `-inf` for zero-probability entries.
pub fn perturbed_log_probs(p: &[f64], noise: &[f64]) -> Vec<f64> {
    p.iter()
        .zip(noise)
        .map(|(&pk, &g)| if pk > 0.0 { pk.ln() + g } else { f64::NEG_INFINITY })
        .collect()
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Draws a category with `P(k) = p_k` by the Gumbel-Max trick.
///
/// One noise value is consumed per entry, including zero-probability ones.
pub fn gumbel_max(p: &[f64], rng: &mut RngState) -> Result<usize> {
    validate_simplex(p)?;
    let noise = gumbel_noise(rng, p.len());
    Ok(argmax(&perturbed_log_probs(p, &noise)))
}

/// One Gumbel-Softmax draw: the relaxed vector and its argmax one-hot.
#[derive(Debug, Clone, PartialEq)]
pub struct GumbelSoftmaxSample {
    pub soft: Vec<f64>,
    pub hard: Vec<f64>,
    pub temperature: f64,
}

impl GumbelSoftmaxSample {
    /// Position of the single one in `hard`.
    pub fn index(&self) -> usize {
        self.hard.iter().position(|&v| v == 1.0).expect("hard is one-hot")
    }

    fn from_perturbed(perturbed: &[f64], tau: f64) -> Self {
        let scaled: Vec<f64> = perturbed.iter().map(|v| v / tau).collect();
        let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scaled
            .iter()
            .map(|&v| if v == f64::NEG_INFINITY { 0.0 } else { (v - max).exp() })
            .collect();
        let total: f64 = exps.iter().sum();
        let soft = exps.into_iter().map(|e| e / total).collect();
        let mut hard = vec![0.0; perturbed.len()];
        hard[argmax(perturbed)] = 1.0;
        Self {
            soft,
            hard,
            temperature: tau,
        }
    }
}

pub fn gumbel_softmax(p: &[f64], tau: f64, rng: &mut RngState) -> Result<GumbelSoftmaxSample> {
    validate_temperature(tau)?;
    validate_simplex(p)?;
    let noise = gumbel_noise(rng, p.len());
    Ok(gumbel_softmax_from_noise(p, tau, &noise))
}

/// Gumbel-Softmax with caller-supplied noise; `p` is assumed validated.
pub fn gumbel_softmax_from_noise(p: &[f64], tau: f64, noise: &[f64]) -> GumbelSoftmaxSample {
    GumbelSoftmaxSample::from_perturbed(&perturbed_log_probs(p, noise), tau)
}

/// Gumbel-Softmax recorded on a tape.
///
/// `log_p` holds log-probabilities (a `[K]` vector). Returns the relaxed
/// sample `softmax((log_p + noise) / tau)` and the index of its hard one-hot.
pub fn gumbel_softmax_var(tape: &mut Tape, log_p: Var, tau: f64, noise: &[f64]) -> Result<(Var, usize)> {
    validate_temperature(tau)?;
    let g = tape.constant(Tensor::vector(noise.to_vec()));
    let perturbed = tape.add(log_p, g)?;
    let hard = argmax(tape.value(perturbed).data());
    let scaled = tape.scale(perturbed, 1.0 / tau)?;
    Ok((tape.softmax(scaled)?, hard))
}
