//! Win-probability estimation by Monte-Carlo dry runs.
//!
//! An estimate for a race snapshot is built from `d` independent simulated
//! continuations: count wins per competitor, then Laplace-smooth to
//! (w+1)/(d+n) so no outcome ever gets probability 0 or 1 (odds of 0 do not
//! exist on the ladder). `d = 0` short-circuits to the exact uniform vector.
//!
//! Bettor-specific error enters in two ways: a multiplicative lognormal
//! perturbation of the field parameters applied once per estimate (a bettor's
//! private misreading of the runners), and additive noise on the finished
//! probability vector followed by renormalization (used by the shared-
//! ensemble mode where many bettors distort one oracle estimate).

use crate::ladder::{MAX_ODDS, MIN_ODDS};
use crate::race::{
    run_race_from, Competitor, RaceConfig, RaceError, RaceState, RaceStreams, StepDistribution,
    EPS_MIN,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PredictionError {
    #[error("probability must be positive and finite, got {0}")]
    BadProbability(f64),
    #[error(transparent)]
    Race(#[from] RaceError),
}

/// Noise sds per parameter class, applied as multiplication by
/// exp(Gaussian(0, sd)) on each selected scalar.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamNoise {
    /// Step-distribution parameters.
    #[serde(default)]
    pub step_sd: f64,
    /// Preference-vector coordinates.
    #[serde(default)]
    pub pref_sd: f64,
    /// Responsiveness phase levels.
    #[serde(default)]
    pub resp_sd: f64,
}

impl ParamNoise {
    pub fn is_zero(&self) -> bool {
        self.step_sd == 0.0 && self.pref_sd == 0.0 && self.resp_sd == 0.0
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.step_sd < 0.0 || self.pref_sd < 0.0 || self.resp_sd < 0.0 {
            return Err("parameter noise sds must be >= 0".into());
        }
        Ok(())
    }
}

/// How a bettor turns snapshots into probability estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefProfile {
    /// Dry runs per estimate; 0 keeps the bettor purely uniform.
    pub dryruns: u32,
    #[serde(default)]
    pub param_noise: ParamNoise,
    /// Additive sd applied to the probability vector, then renormalized.
    #[serde(default)]
    pub post_noise_sd: f64,
}

impl BeliefProfile {
    pub fn exact(dryruns: u32) -> Self {
        BeliefProfile { dryruns, param_noise: ParamNoise::default(), post_noise_sd: 0.0 }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.param_noise.validate()?;
        if self.post_noise_sd < 0.0 {
            return Err("post_noise_sd must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbEstimate {
    /// Win probability per field index; sums to 1.
    pub probs: Vec<f64>,
    pub samples: u32,
    /// Race clock of the snapshot the estimate was made from, in seconds.
    pub snapshot_seconds: f64,
}

fn lognormal_factor(sd: f64, rng: &mut ChaCha8Rng) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    (z * sd).exp()
}

/// Deep copy of the field with each selected scalar multiplied by a
/// lognormal factor. Classes with sd 0 are left untouched (and draw nothing),
/// so an all-zero noise setting returns an identical copy.
pub fn perturb_params(field: &[Competitor], noise: &ParamNoise, rng: &mut ChaCha8Rng) -> Vec<Competitor> {
    let mut out = field.to_vec();
    for comp in &mut out {
        if noise.step_sd > 0.0 {
            match &mut comp.step {
                StepDistribution::Uniform { lo, hi } => {
                    let a = *lo * lognormal_factor(noise.step_sd, rng);
                    let b = *hi * lognormal_factor(noise.step_sd, rng);
                    // Multiplicative factors keep the support positive; a
                    // swap keeps it ordered if the draws cross.
                    *lo = a.min(b);
                    *hi = a.max(b);
                }
                StepDistribution::LogNormal { mu, sigma } => {
                    // Multiplying the scale exp(mu) is adding to mu.
                    *mu += lognormal_factor(noise.step_sd, rng).ln();
                    *sigma *= lognormal_factor(noise.step_sd, rng);
                }
            }
        }
        if noise.pref_sd > 0.0 {
            for p in &mut comp.prefs {
                *p = (*p * lognormal_factor(noise.pref_sd, rng)).clamp(0.0, 1.0);
            }
        }
        if noise.resp_sd > 0.0 {
            for ph in &mut comp.phases.phases {
                ph.level = (ph.level * lognormal_factor(noise.resp_sd, rng)).clamp(EPS_MIN, 1.0);
            }
        }
    }
    out
}

/// Estimates win probabilities for every competitor from a race snapshot by
/// running `profile.dryruns` perturbed continuations.
pub fn estimate_probs(
    snapshot: &RaceState,
    config: &RaceConfig,
    field: &[Competitor],
    profile: &BeliefProfile,
    rng: &mut ChaCha8Rng,
) -> Result<ProbEstimate, PredictionError> {
    snapshot.check_matches(field).map_err(PredictionError::Race)?;
    let n = field.len();
    let seconds = snapshot.seconds(config);
    if profile.dryruns == 0 {
        return Ok(ProbEstimate { probs: vec![1.0 / n as f64; n], samples: 0, snapshot_seconds: seconds });
    }

    let perturbed;
    let belief_field = if profile.param_noise.is_zero() {
        field
    } else {
        perturbed = perturb_params(field, &profile.param_noise, rng);
        &perturbed
    };

    let mut wins = vec![0u32; n];
    for _ in 0..profile.dryruns {
        let mut streams = RaceStreams::derive(rng.gen(), &config.race_id, belief_field);
        let order = run_race_from(snapshot.clone(), config, belief_field, &mut streams)?;
        wins[order[0]] += 1;
    }

    let denom = (profile.dryruns as usize + n) as f64;
    let mut probs: Vec<f64> = wins.iter().map(|&w| (w + 1) as f64 / denom).collect();
    if profile.post_noise_sd > 0.0 {
        apply_post_noise(&mut probs, profile.post_noise_sd, rng);
    }
    Ok(ProbEstimate { probs, samples: profile.dryruns, snapshot_seconds: seconds })
}

/// Adds Gaussian noise to each entry and renormalizes; entries are floored
/// at a tiny positive value so the vector stays a distribution.
pub fn apply_post_noise(probs: &mut [f64], sd: f64, rng: &mut ChaCha8Rng) {
    for p in probs.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *p = (*p + z * sd).max(1e-9);
    }
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
}

/// Decimal odds (total return per unit stake) that are fair for win
/// probability `p`: 1/p, clamped to the quotable range.
pub fn fair_decimal_odds(p: f64) -> Result<f64, PredictionError> {
    if !(p.is_finite() && p > 0.0) {
        return Err(PredictionError::BadProbability(p));
    }
    Ok((1.0 / p).clamp(MIN_ODDS, MAX_ODDS))
}
