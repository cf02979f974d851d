//! Race kernel types.
//!
//! A race is a 1-D track of length `track_length`. Per tick each unfinished
//! competitor advances by a step drawn from its own step distribution, scaled
//! by a responsiveness phase schedule and a track-preference coefficient, and
//! modulated by interactions with nearby competitors (losing ground behind a
//! slower leader, spurring on when pursued). All stochasticity flows through
//! per-competitor substreams so a competitor's draws never depend on who else
//! is in the field.

mod engine;

pub use engine::{
    advance_tick, nearest_ahead, nearest_behind, preference_coeff, responsiveness, run_race,
    run_race_from, step_size, BlockEvent, StepOutcome,
};

use crate::seeds::SeedMix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor applied to responsiveness, preference and their product so progress
/// stays strictly positive even at the worst parameter corner.
pub const EPS_MIN: f64 = 0.01;

/// Floor for the remembered per-tick pace. A blocked step inherits
/// responsiveness times the slower of two remembered paces; with
/// responsiveness below 1 that recurrence decays geometrically, and behind a
/// competitor parked on the finish line its sum can converge short of the
/// line. Remembering at least this much pace bounds the crawl and keeps
/// every race finite without touching ordinary steps.
pub const MIN_PACE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum RaceError {
    #[error("invalid race config: {0}")]
    InvalidConfig(String),
    #[error("race is already over")]
    RaceOver,
    #[error("race exceeded {0} ticks without finishing")]
    TickLimit(u64),
    #[error("snapshot does not match config: {0}")]
    SnapshotMismatch(String),
}

/// Per-tick step draw, strictly positive on its whole support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StepDistribution {
    /// Uniform on [lo, hi); degenerate lo == hi is allowed and deterministic.
    Uniform { lo: f64, hi: f64 },
    /// exp(mu + sigma * Z), Z standard normal.
    LogNormal { mu: f64, sigma: f64 },
}

impl StepDistribution {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            // One rng draw per sample regardless of parameters, so a
            // competitor's stream position depends only on tick count.
            StepDistribution::Uniform { lo, hi } => {
                let u: f64 = rng.gen();
                lo + u * (hi - lo)
            }
            StepDistribution::LogNormal { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                (mu + sigma * z).exp()
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            StepDistribution::Uniform { lo, hi } => (lo + hi) / 2.0,
            StepDistribution::LogNormal { mu, sigma } => (mu + sigma * sigma / 2.0).exp(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        match *self {
            StepDistribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                    return Err(format!("uniform step bounds must satisfy 0 < lo <= hi, got [{lo}, {hi}]"));
                }
            }
            StepDistribution::LogNormal { mu, sigma } => {
                if !(mu.is_finite() && sigma.is_finite() && sigma >= 0.0) {
                    return Err(format!("lognormal step params must be finite with sigma >= 0, got mu={mu} sigma={sigma}"));
                }
            }
        }
        Ok(())
    }
}

/// One responsiveness phase: `level` applies while the race fraction is below
/// `until_frac`. The final phase must end at 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub until_frac: f64,
    pub level: f64,
}

/// Configured phase schedule plus the per-run jitter applied to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSchedule {
    pub phases: Vec<Phase>,
    /// Gaussian sd of the per-run shift of each interior boundary.
    #[serde(default)]
    pub boundary_sd: f64,
    /// Gaussian sd of the per-run shift of each level.
    #[serde(default)]
    pub level_sd: f64,
}

impl PhaseSchedule {
    pub fn flat(level: f64) -> Self {
        PhaseSchedule { phases: vec![Phase { until_frac: 1.0, level }], boundary_sd: 0.0, level_sd: 0.0 }
    }

    fn validate(&self) -> Result<(), String> {
        if self.phases.is_empty() {
            return Err("phase schedule must have at least one phase".into());
        }
        let last = self.phases.len() - 1;
        let mut prev = 0.0;
        for (i, ph) in self.phases.iter().enumerate() {
            if i == last {
                if ph.until_frac != 1.0 {
                    return Err(format!("final phase must end at 1.0, got {}", ph.until_frac));
                }
            } else if !(ph.until_frac > prev && ph.until_frac < 1.0) {
                return Err(format!("phase boundaries must be strictly increasing within (0, 1), got {}", ph.until_frac));
            }
            if !(ph.level >= 0.7 && ph.level <= 1.0) {
                return Err(format!("phase level must lie in [0.7, 1.0], got {}", ph.level));
            }
            prev = ph.until_frac;
        }
        if !(self.boundary_sd >= 0.0 && self.level_sd >= 0.0) {
            return Err("phase jitter sds must be >= 0".into());
        }
        Ok(())
    }

    /// Draws this run's jittered copy of the schedule. Consumes one boundary
    /// draw per interior boundary and one level draw per phase even when the
    /// sds are zero, so stream positions do not depend on jitter settings.
    pub fn realize(&self, rng: &mut ChaCha8Rng) -> RealizedPhases {
        let last = self.phases.len() - 1;
        let mut out = Vec::with_capacity(self.phases.len());
        let mut prev = 0.0;
        for (i, ph) in self.phases.iter().enumerate() {
            let until = if i == last {
                1.0
            } else {
                let z: f64 = rng.sample(StandardNormal);
                // Keep jittered boundaries strictly increasing and interior
                // even when heavy jitter piles them up near 1.
                let lo = prev + 1e-6;
                let hi = (0.9999f64).max(lo);
                (ph.until_frac + z * self.boundary_sd).clamp(lo, hi)
            };
            let z: f64 = rng.sample(StandardNormal);
            let level = (ph.level + z * self.level_sd).clamp(EPS_MIN, 1.0);
            out.push(Phase { until_frac: until, level });
            prev = until;
        }
        RealizedPhases(out)
    }
}

/// A schedule after per-run jitter; what the engine actually consults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedPhases(pub Vec<Phase>);

impl RealizedPhases {
    pub fn level_at(&self, race_frac: f64) -> f64 {
        self.0
            .iter()
            .find(|ph| race_frac < ph.until_frac)
            .unwrap_or(self.0.last().expect("nonempty schedule"))
            .level
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Competitor {
    pub id: u32,
    pub name: String,
    pub step: StepDistribution,
    /// Position in preference space, one coordinate per track factor, each in [0, 1].
    pub prefs: Vec<f64>,
    pub phases: PhaseSchedule,
    /// Gap ahead below which a slower leader can cost this competitor ground.
    pub theta_ahead: f64,
    /// Gap behind below which a pursuer can spur this competitor on.
    pub theta_behind: f64,
    /// Responsiveness multiplier when spurred; >= 1.
    pub spur_boost: f64,
    /// Probability per tick that a close leader actually blocks.
    pub block_prob: f64,
    /// Probability per tick that a close pursuer actually spurs.
    pub spur_prob: f64,
}

impl Competitor {
    /// A plain competitor with uniform steps and no phase structure; the
    /// common base for tests and scenario construction.
    pub fn basic(id: u32, name: &str, lo: f64, hi: f64, prefs: Vec<f64>) -> Self {
        Competitor {
            id,
            name: name.to_string(),
            step: StepDistribution::Uniform { lo, hi },
            prefs,
            phases: PhaseSchedule::flat(1.0),
            theta_ahead: 4.0,
            theta_behind: 4.0,
            spur_boost: 1.15,
            block_prob: 1.0,
            spur_prob: 0.15,
        }
    }

    fn validate(&self, n_factors: usize) -> Result<(), String> {
        if self.name.is_empty() || self.name.contains(',') || self.name.contains('\n') {
            return Err(format!("competitor {} name must be nonempty without commas or newlines", self.id));
        }
        self.step.validate()?;
        if self.prefs.len() != n_factors {
            return Err(format!(
                "competitor {} has {} preference coordinates but the track has {} factors",
                self.id,
                self.prefs.len(),
                n_factors
            ));
        }
        if self.prefs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(format!("competitor {} preferences must lie in [0, 1]", self.id));
        }
        self.phases.validate()?;
        if !(self.theta_ahead >= 0.0 && self.theta_behind >= 0.0) {
            return Err(format!("competitor {} interaction thresholds must be >= 0", self.id));
        }
        if !(self.spur_boost >= 1.0) {
            return Err(format!("competitor {} spur boost must be >= 1", self.id));
        }
        if !((0.0..=1.0).contains(&self.block_prob) && (0.0..=1.0).contains(&self.spur_prob)) {
            return Err(format!("competitor {} interaction probabilities must lie in [0, 1]", self.id));
        }
        Ok(())
    }
}

/// How the track-preference coefficient is computed from the distance between
/// the track's factor vector and a competitor's preference vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferenceForm {
    /// clamp(1 - dist / sqrt(n_factors), EPS_MIN, 1); dist of 0 gives 1, the
    /// maximal possible dist gives the floor.
    Normalized,
    /// clamp((k - dist) / k, EPS_MIN, 1).
    Legacy { k: f64 },
}

impl Default for PreferenceForm {
    fn default() -> Self {
        PreferenceForm::Normalized
    }
}

/// When in-play betting stops relative to the finishing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BettingClose {
    LastFinisher,
    NthFinisher(u32),
}

impl Default for BettingClose {
    fn default() -> Self {
        BettingClose::LastFinisher
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceConfig {
    pub race_id: String,
    pub track_length: f64,
    /// The track's position in preference space, one entry per factor.
    pub factors: Vec<f64>,
    /// Empty means all competitors start at 0.
    #[serde(default)]
    pub start_positions: Vec<f64>,
    pub tick_seconds: f64,
    #[serde(default)]
    pub betting_close: BettingClose,
    /// Gates both ground-loss blocking and spurring.
    pub interactions: bool,
    #[serde(default)]
    pub preference: PreferenceForm,
    /// Safety bound; honest configurations finish far below it.
    #[serde(default = "default_max_ticks")]
    pub max_ticks: u64,
}

fn default_max_ticks() -> u64 {
    1_000_000
}

impl RaceConfig {
    pub fn new(race_id: &str, track_length: f64, factors: Vec<f64>) -> Self {
        RaceConfig {
            race_id: race_id.to_string(),
            track_length,
            factors,
            start_positions: Vec::new(),
            tick_seconds: 1.0,
            betting_close: BettingClose::LastFinisher,
            interactions: true,
            preference: PreferenceForm::Normalized,
            max_ticks: default_max_ticks(),
        }
    }

    pub fn validate(&self, field: &[Competitor]) -> Result<(), RaceError> {
        let fail = |msg: String| Err(RaceError::InvalidConfig(msg));
        if self.race_id.is_empty() {
            return fail("race_id must be nonempty".into());
        }
        if !(self.track_length.is_finite() && self.track_length > 0.0) {
            return fail(format!("track_length must be positive, got {}", self.track_length));
        }
        if self.factors.is_empty() || self.factors.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return fail("factors must be nonempty with entries in [0, 1]".into());
        }
        if field.is_empty() {
            return fail("field must have at least one competitor".into());
        }
        let mut ids: Vec<u32> = field.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != field.len() {
            return fail("competitor ids must be unique".into());
        }
        if !self.start_positions.is_empty() {
            if self.start_positions.len() != field.len() {
                return fail("start_positions must be empty or match the field size".into());
            }
            if self.start_positions.iter().any(|p| !(*p >= 0.0 && *p < self.track_length)) {
                return fail("start positions must lie in [0, track_length)".into());
            }
        }
        if !(self.tick_seconds.is_finite() && self.tick_seconds > 0.0) {
            return fail(format!("tick_seconds must be positive, got {}", self.tick_seconds));
        }
        if let BettingClose::NthFinisher(n) = self.betting_close {
            if n == 0 || n as usize > field.len() {
                return fail(format!("nth_finisher must lie in 1..={}, got {n}", field.len()));
            }
        }
        if let PreferenceForm::Legacy { k } = self.preference {
            if !(k.is_finite() && k > 0.0) {
                return fail(format!("legacy preference constant must be positive, got {k}"));
            }
        }
        if self.max_ticks == 0 {
            return fail("max_ticks must be >= 1".into());
        }
        for c in field {
            c.validate(self.factors.len()).map_err(RaceError::InvalidConfig)?;
        }
        Ok(())
    }

    pub fn start_position(&self, idx: usize) -> f64 {
        self.start_positions.get(idx).copied().unwrap_or(0.0)
    }
}

/// Live race state; also the snapshot type for mid-race continuations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceState {
    pub tick: u64,
    pub positions: Vec<f64>,
    /// Last applied step per competitor; finished competitors keep their
    /// final step so trailing competitors can still be paced against them.
    pub last_steps: Vec<f64>,
    pub finish_times: Vec<Option<f64>>,
    /// Realized (jittered) schedules; None until the first tick so a t=0
    /// snapshot re-realizes them from the stream it is run with.
    pub realized_phases: Option<Vec<RealizedPhases>>,
}

impl RaceState {
    pub fn start(config: &RaceConfig, field: &[Competitor]) -> Self {
        let n = field.len();
        RaceState {
            tick: 0,
            positions: (0..n).map(|i| config.start_position(i)).collect(),
            last_steps: field.iter().map(|c| c.step.mean().max(MIN_PACE)).collect(),
            finish_times: vec![None; n],
            realized_phases: None,
        }
    }

    pub fn seconds(&self, config: &RaceConfig) -> f64 {
        self.tick as f64 * config.tick_seconds
    }

    pub fn finished_count(&self) -> usize {
        self.finish_times.iter().filter(|t| t.is_some()).count()
    }

    pub fn race_over(&self) -> bool {
        self.finish_times.iter().all(|t| t.is_some())
    }

    pub fn check_matches(&self, field: &[Competitor]) -> Result<(), RaceError> {
        let n = field.len();
        if self.positions.len() != n || self.last_steps.len() != n || self.finish_times.len() != n {
            return Err(RaceError::SnapshotMismatch(format!(
                "snapshot carries {} competitors, field has {n}",
                self.positions.len()
            )));
        }
        if let Some(ph) = &self.realized_phases {
            if ph.len() != n {
                return Err(RaceError::SnapshotMismatch("realized phase count differs from field size".into()));
            }
        }
        Ok(())
    }
}

/// Per-competitor random streams for one race, derived from a master seed,
/// the race id and each competitor's id. A competitor's stream is therefore
/// identical in any field containing it.
#[derive(Debug, Clone)]
pub struct RaceStreams {
    pub master: u64,
    streams: Vec<ChaCha8Rng>,
}

impl RaceStreams {
    pub fn derive(master: u64, race_id: &str, field: &[Competitor]) -> Self {
        let base = SeedMix::new(master).with_str("race").with_str(race_id);
        let streams = field.iter().map(|c| base.with_str("competitor").with_u64(c.id as u64).rng()).collect();
        RaceStreams { master, streams }
    }

    pub fn stream(&mut self, idx: usize) -> &mut ChaCha8Rng {
        &mut self.streams[idx]
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }
}

/// Full record of one simulated race.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceRecord {
    pub config: RaceConfig,
    pub competitor_names: Vec<String>,
    pub seed: u64,
    /// Row per recorded instant: row 0 is the start, then one row per tick.
    /// Finished competitors repeat the track length.
    pub positions: Vec<Vec<f64>>,
    pub finish_times: Vec<f64>,
    /// Field indices ordered P1 first (earliest finish time, ties to the
    /// lower competitor id).
    pub finish_order: Vec<usize>,
    pub block_events: Vec<BlockEvent>,
}

impl RaceRecord {
    /// Finish-order ranks as competitor indices: `finish_order[0]` is P1.
    pub fn winner(&self) -> usize {
        self.finish_order[0]
    }
}

/// Orders indices by finish time ascending, ties to the lower competitor id.
pub fn finish_order(finish_times: &[f64], field: &[Competitor]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..finish_times.len()).collect();
    order.sort_by(|&a, &b| {
        finish_times[a]
            .partial_cmp(&finish_times[b])
            .expect("finish times are finite")
            .then_with(|| field[a].id.cmp(&field[b].id))
    });
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    fn two_field() -> (RaceConfig, Vec<Competitor>) {
        let config = RaceConfig::new("t", 100.0, vec![0.5]);
        let field = vec![Competitor::basic(0, "A", 10.0, 20.0, vec![0.5]), Competitor::basic(1, "B", 10.0, 20.0, vec![0.5])];
        (config, field)
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        let (config, mut field) = two_field();
        config.validate(&field).unwrap();

        field[1].id = 0;
        assert!(matches!(config.validate(&field), Err(RaceError::InvalidConfig(_))));
        let (_, mut field) = two_field();
        field[0].prefs = vec![0.5, 0.5];
        assert!(config.validate(&field).is_err());
        field[0].prefs = vec![1.5];
        assert!(config.validate(&field).is_err());

        let (mut config, field) = two_field();
        config.track_length = 0.0;
        assert!(config.validate(&field).is_err());
        let (mut config, field) = two_field();
        config.betting_close = BettingClose::NthFinisher(3);
        assert!(config.validate(&field).is_err());
        let (mut config, field) = two_field();
        config.start_positions = vec![0.0, 100.0];
        assert!(config.validate(&field).is_err());
    }

    #[test]
    fn single_competitor_field_is_legal() {
        let config = RaceConfig::new("solo", 100.0, vec![0.5]);
        let field = vec![Competitor::basic(0, "A", 10.0, 10.0, vec![0.5])];
        config.validate(&field).unwrap();
    }

    #[test]
    fn phase_schedule_validation() {
        let mut s = PhaseSchedule {
            phases: vec![Phase { until_frac: 0.33, level: 0.8 }, Phase { until_frac: 1.0, level: 0.95 }],
            boundary_sd: 0.0,
            level_sd: 0.0,
        };
        s.validate().unwrap();
        s.phases[0].level = 0.5;
        assert!(s.validate().is_err());
        s.phases[0].level = 0.8;
        s.phases[0].until_frac = 1.2;
        assert!(s.validate().is_err());
        s.phases[0].until_frac = 0.33;
        s.phases[1].until_frac = 0.9;
        assert!(s.validate().is_err());
    }

    #[test]
    fn realized_levels_lookup() {
        let s = PhaseSchedule {
            phases: vec![Phase { until_frac: 0.33, level: 0.8 }, Phase { until_frac: 1.0, level: 0.95 }],
            boundary_sd: 0.0,
            level_sd: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = s.realize(&mut rng);
        assert_eq!(r.level_at(0.1), 0.8);
        assert_eq!(r.level_at(0.5), 0.95);
        assert_eq!(r.level_at(1.0), 0.95);
    }

    #[test]
    fn jitter_keeps_boundaries_ordered_and_levels_bounded() {
        let s = PhaseSchedule {
            phases: vec![
                Phase { until_frac: 0.2, level: 0.7 },
                Phase { until_frac: 0.21, level: 1.0 },
                Phase { until_frac: 1.0, level: 0.85 },
            ],
            boundary_sd: 0.3,
            level_sd: 0.3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let r = s.realize(&mut rng);
            assert_eq!(r.0.last().unwrap().until_frac, 1.0);
            let mut prev = 0.0;
            for ph in &r.0 {
                assert!(ph.until_frac > prev);
                assert!(ph.level >= EPS_MIN && ph.level <= 1.0);
                prev = ph.until_frac;
            }
        }
    }

    #[test]
    fn step_distribution_mean_and_support() {
        let d = StepDistribution::Uniform { lo: 10.0, hi: 20.0 };
        assert_eq!(d.mean(), 15.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let s = d.sample(&mut rng);
            assert!((10.0..20.0).contains(&s));
        }
        let degenerate = StepDistribution::Uniform { lo: 10.0, hi: 10.0 };
        assert_eq!(degenerate.sample(&mut rng), 10.0);

        let ln = StepDistribution::LogNormal { mu: 0.0, sigma: 0.5 };
        assert!((ln.mean() - (0.125f64).exp()).abs() < 1e-12);
        for _ in 0..1000 {
            assert!(ln.sample(&mut rng) > 0.0);
        }
    }

    #[test]
    fn streams_depend_on_competitor_id_not_field_position() {
        let (_, field) = two_field();
        let mut a = RaceStreams::derive(9, "t", &field);
        let reversed: Vec<Competitor> = field.iter().rev().cloned().collect();
        let mut b = RaceStreams::derive(9, "t", &reversed);
        let x: f64 = a.stream(0).gen();
        let y: f64 = b.stream(1).gen();
        assert_eq!(x, y);
    }
}
