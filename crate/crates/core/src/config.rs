//! Human-editable TOML configuration: a versioned schema covering the race,
//! the session, and bettor groups, with every tunable default spelled out.
//! Parsed configs convert to engine types (dollars to integer cents) and
//! hash to a digest that ignores key order in the source file.

use crate::bettors::{BettorSpec, QuoteParams, Strategy};
use crate::exchange::MatchMode;
use crate::money::Money;
use crate::orchestrator::SessionConfig;
use crate::prediction::BeliefProfile;
use crate::race::{BettingClose, Competitor, Phase, PhaseSchedule, RaceConfig, StepDistribution};
use crate::scenarios;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Converts a dollar amount to integer cents, rejecting negatives and NaN.
fn dollars(amount: f64, what: &str) -> Result<Money, ConfigError> {
    if !(amount.is_finite() && amount >= 0.0) {
        return Err(invalid(format!("{what} must be a finite non-negative dollar amount, got {amount}")));
    }
    Ok(Money::from_cents((amount * 100.0).round() as i64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub schema_version: u32,
    pub race: RaceSection,
    #[serde(default)]
    pub session: SessionSection,
    #[serde(default)]
    pub bettors: Vec<BettorGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaceSection {
    pub id: String,
    pub track_length_m: f64,
    #[serde(default = "default_tick_seconds")]
    pub tick_seconds: f64,
    /// Track position in preference space, one entry per factor.
    pub factors: Vec<f64>,
    #[serde(default = "default_true")]
    pub interactions: bool,
    /// "last" closes betting when the final competitor finishes; a number n
    /// closes it when the nth finisher crosses.
    #[serde(default)]
    pub betting_close: CloseRule,
    #[serde(default)]
    pub start_positions: Vec<f64>,
    pub competitors: Vec<CompetitorSection>,
}

fn default_tick_seconds() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CloseRule {
    Named(String),
    Nth(u32),
}

impl Default for CloseRule {
    fn default() -> Self {
        CloseRule::Named("last".into())
    }
}

impl CloseRule {
    fn to_engine(&self) -> Result<BettingClose, ConfigError> {
        match self {
            CloseRule::Named(s) if s == "last" => Ok(BettingClose::LastFinisher),
            CloseRule::Named(s) => Err(invalid(format!("betting_close must be \"last\" or a finisher rank, got {s:?}"))),
            CloseRule::Nth(n) => Ok(BettingClose::NthFinisher(*n)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompetitorSection {
    pub name: String,
    /// Uniform step draw bounds, metres per tick.
    pub step_lo: f64,
    pub step_hi: f64,
    /// Position in preference space; one coordinate per track factor.
    pub prefs: Vec<f64>,
    /// [fraction_of_track, responsiveness_level] pairs; the last fraction
    /// must be 1.0. Defaults to a single full-distance phase at 1.0.
    #[serde(default = "default_phases")]
    pub phases: Vec<[f64; 2]>,
    #[serde(default)]
    pub boundary_sd: f64,
    #[serde(default)]
    pub level_sd: f64,
    #[serde(default = "default_theta")]
    pub theta_ahead_m: f64,
    #[serde(default = "default_theta")]
    pub theta_behind_m: f64,
    #[serde(default = "default_spur_boost")]
    pub spur_boost: f64,
    #[serde(default = "default_block_prob")]
    pub block_prob: f64,
    #[serde(default = "default_spur_prob")]
    pub spur_prob: f64,
}

fn default_phases() -> Vec<[f64; 2]> {
    vec![[1.0, 1.0]]
}

fn default_theta() -> f64 {
    4.0
}

fn default_spur_boost() -> f64 {
    1.15
}

fn default_block_prob() -> f64 {
    1.0
}

fn default_spur_prob() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSection {
    #[serde(default = "default_pre_race_s")]
    pub pre_race_s: f64,
    /// Fraction of positive net winnings charged at settlement.
    #[serde(default = "default_commission")]
    pub commission_rate: f64,
    /// "crossing" matches through better-priced counterparties; "strict"
    /// only matches exact odds.
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_grid_depth")]
    pub grid_depth: usize,
}

fn default_pre_race_s() -> f64 {
    30.0
}

fn default_commission() -> f64 {
    0.05
}

fn default_mode() -> String {
    "crossing".into()
}

fn default_grid_depth() -> usize {
    3
}

impl Default for SessionSection {
    fn default() -> Self {
        SessionSection {
            pre_race_s: default_pre_race_s(),
            commission_rate: default_commission(),
            mode: default_mode(),
            grid_depth: default_grid_depth(),
        }
    }
}

/// `count` identically-configured bettors sharing one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BettorGroup {
    pub count: u32,
    /// One of: zi, lw, ud, btf, linex, rb, rp.
    pub strategy: String,
    /// Underdog only: gap to the leader below which P2 is the pick.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_m: Option<f64>,
    /// Linex only: extrapolation window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_s: Option<f64>,
    /// Rb only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_strength: Option<f64>,
    /// Rb only: stakes cluster on these multiples (currency units).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stake_multiples: Option<Vec<i64>>,
    /// Rb and rp: dry runs per estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dryruns: Option<u32>,
    /// Dollars.
    #[serde(default = "default_balance")]
    pub balance: f64,
    #[serde(default = "default_stake_min")]
    pub stake_min: f64,
    #[serde(default = "default_stake_max")]
    pub stake_max: f64,
    #[serde(default = "default_revise_s")]
    pub revise_interval_s: f64,
    /// 0 quotes fair odds, 1 quotes the full aggression cap past fair.
    #[serde(default = "default_shade")]
    pub shade: f64,
    #[serde(default = "default_improve_after_s")]
    pub improve_after_s: f64,
    #[serde(default = "default_max_open")]
    pub max_open_orders: usize,
    /// Belief mass a heuristic pick carries; the rest spreads uniformly.
    #[serde(default = "default_theta_conf")]
    pub theta_conf: f64,
    /// Probability of backing the pick rather than laying the least likely.
    #[serde(default = "default_p_back")]
    pub p_back: f64,
    #[serde(default = "default_aggression_cap")]
    pub aggression_cap_ticks: i64,
    #[serde(default = "default_improve_cap")]
    pub improve_cap_ticks: i64,
}

fn default_balance() -> f64 {
    100.0
}

fn default_stake_min() -> f64 {
    2.0
}

fn default_stake_max() -> f64 {
    20.0
}

fn default_revise_s() -> f64 {
    2.0
}

fn default_shade() -> f64 {
    0.5
}

fn default_improve_after_s() -> f64 {
    4.0
}

fn default_max_open() -> usize {
    4
}

fn default_theta_conf() -> f64 {
    0.6
}

fn default_p_back() -> f64 {
    0.5
}

fn default_aggression_cap() -> i64 {
    10
}

fn default_improve_cap() -> i64 {
    3
}

impl BettorGroup {
    /// Checks that exactly the parameters this strategy needs are present.
    fn to_strategy(&self) -> Result<Strategy, ConfigError> {
        let require = |name: &str, present: bool| {
            if present {
                Ok(())
            } else {
                Err(invalid(format!("strategy {:?} needs {name}", self.strategy)))
            }
        };
        let forbid = |name: &str, absent: bool| {
            if absent {
                Ok(())
            } else {
                Err(invalid(format!("{name} does not apply to strategy {:?}", self.strategy)))
            }
        };
        forbid("distance_m", self.strategy == "ud" || self.distance_m.is_none())?;
        forbid("window_s", self.strategy == "linex" || self.window_s.is_none())?;
        forbid("bias_strength", self.strategy == "rb" || self.bias_strength.is_none())?;
        forbid("stake_multiples", self.strategy == "rb" || self.stake_multiples.is_none())?;
        forbid("dryruns", self.strategy == "rb" || self.strategy == "rp" || self.dryruns.is_none())?;
        match self.strategy.as_str() {
            "zi" => Ok(Strategy::Zi),
            "lw" => Ok(Strategy::Lw),
            "btf" => Ok(Strategy::Btf),
            "ud" => {
                require("distance_m", self.distance_m.is_some())?;
                Ok(Strategy::Ud { distance: self.distance_m.unwrap() })
            }
            "linex" => {
                require("window_s", self.window_s.is_some())?;
                Ok(Strategy::Linex { window_s: self.window_s.unwrap() })
            }
            "rb" => {
                require("bias_strength", self.bias_strength.is_some())?;
                require("stake_multiples", self.stake_multiples.is_some())?;
                require("dryruns", self.dryruns.is_some())?;
                Ok(Strategy::Rb {
                    bias_strength: self.bias_strength.unwrap(),
                    stake_multiples: self.stake_multiples.clone().unwrap(),
                    profile: BeliefProfile::exact(self.dryruns.unwrap()),
                })
            }
            "rp" => {
                require("dryruns", self.dryruns.is_some())?;
                Ok(Strategy::Rp { profile: BeliefProfile::exact(self.dryruns.unwrap()) })
            }
            other => Err(invalid(format!("unknown strategy {other:?} (expected zi, lw, ud, btf, linex, rb, or rp)"))),
        }
    }
}

pub fn parse_config(text: &str) -> Result<FileConfig, ConfigError> {
    let config: FileConfig = toml::from_str(text)?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(invalid(format!(
            "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
            config.schema_version
        )));
    }
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config(&text)
}

impl FileConfig {
    /// SHA-256 of the parsed config in canonical JSON form: two files that
    /// differ only in key order or formatting digest identically.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn race_setup(&self) -> Result<(RaceConfig, Vec<Competitor>), ConfigError> {
        let mut race = RaceConfig::new(&self.race.id, self.race.track_length_m, self.race.factors.clone());
        race.tick_seconds = self.race.tick_seconds;
        race.interactions = self.race.interactions;
        race.betting_close = self.race.betting_close.to_engine()?;
        race.start_positions = self.race.start_positions.clone();
        let field = self
            .race
            .competitors
            .iter()
            .enumerate()
            .map(|(id, section)| {
                let mut c = Competitor::basic(id as u32, &section.name, section.step_lo, section.step_hi, section.prefs.clone());
                c.step = StepDistribution::Uniform { lo: section.step_lo, hi: section.step_hi };
                c.phases = PhaseSchedule {
                    phases: section.phases.iter().map(|&[until_frac, level]| Phase { until_frac, level }).collect(),
                    boundary_sd: section.boundary_sd,
                    level_sd: section.level_sd,
                };
                c.theta_ahead = section.theta_ahead_m;
                c.theta_behind = section.theta_behind_m;
                c.spur_boost = section.spur_boost;
                c.block_prob = section.block_prob;
                c.spur_prob = section.spur_prob;
                c
            })
            .collect::<Vec<_>>();
        race.validate(&field).map_err(|e| invalid(e.to_string()))?;
        Ok((race, field))
    }

    pub fn bettor_specs(&self) -> Result<Vec<BettorSpec>, ConfigError> {
        let mut specs = Vec::new();
        let mut next_id = 1u32;
        for group in &self.bettors {
            let strategy = group.to_strategy()?;
            for _ in 0..group.count {
                let mut spec = BettorSpec::new(next_id, strategy.clone());
                spec.initial_balance = dollars(group.balance, "balance")?;
                spec.stake_min = dollars(group.stake_min, "stake_min")?;
                spec.stake_max = dollars(group.stake_max, "stake_max")?;
                spec.revise_interval_s = group.revise_interval_s;
                spec.shade = group.shade;
                spec.improve_after_s = group.improve_after_s;
                spec.max_open_orders = group.max_open_orders;
                spec.theta_conf = group.theta_conf;
                spec.p_back = group.p_back;
                spec.quote = QuoteParams {
                    aggression_cap_ticks: group.aggression_cap_ticks,
                    improve_cap_ticks: group.improve_cap_ticks,
                };
                specs.push(spec);
                next_id += 1;
            }
        }
        Ok(specs)
    }

    /// Builds and validates the full session the file describes.
    pub fn to_session(&self, master_seed: u64) -> Result<SessionConfig, ConfigError> {
        let (race, field) = self.race_setup()?;
        let mode = match self.session.mode.as_str() {
            "crossing" => MatchMode::Crossing,
            "strict" => MatchMode::Strict,
            other => return Err(invalid(format!("mode must be \"crossing\" or \"strict\", got {other:?}"))),
        };
        let config = SessionConfig {
            race,
            field,
            bettors: self.bettor_specs()?,
            pre_race_s: self.session.pre_race_s,
            commission_rate: self.session.commission_rate,
            mode,
            grid_depth: self.session.grid_depth,
            master_seed,
        };
        config.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(config)
    }

    /// The built-in default: the six-horse field and the standard 200-bettor
    /// population, with every tunable field explicit.
    pub fn standard() -> FileConfig {
        let (race, field) = scenarios::six_horse_race();
        let competitors = field
            .iter()
            .map(|c| {
                let StepDistribution::Uniform { lo, hi } = c.step else {
                    unreachable!("scenario fields use uniform steps")
                };
                CompetitorSection {
                    name: c.name.clone(),
                    step_lo: lo,
                    step_hi: hi,
                    prefs: c.prefs.clone(),
                    phases: c.phases.phases.iter().map(|p| [p.until_frac, p.level]).collect(),
                    boundary_sd: c.phases.boundary_sd,
                    level_sd: c.phases.level_sd,
                    theta_ahead_m: c.theta_ahead,
                    theta_behind_m: c.theta_behind,
                    spur_boost: c.spur_boost,
                    block_prob: c.block_prob,
                    spur_prob: c.spur_prob,
                }
            })
            .collect();
        struct Group {
            count: u32,
            strategy: &'static str,
            revise_s: f64,
            distance_m: Option<f64>,
            window_s: Option<f64>,
            bias_strength: Option<f64>,
            stake_multiples: Option<Vec<i64>>,
            dryruns: Option<u32>,
        }
        let plain = |count, strategy, revise_s| Group {
            count,
            strategy,
            revise_s,
            distance_m: None,
            window_s: None,
            bias_strength: None,
            stake_multiples: None,
            dryruns: None,
        };
        let groups = [
            plain(70, "zi", 2.0),
            plain(30, "lw", 2.0),
            Group { distance_m: Some(25.0), ..plain(25, "ud", 2.0) },
            plain(25, "btf", 2.0),
            Group { window_s: Some(10.0), ..plain(20, "linex", 4.0) },
            Group {
                bias_strength: Some(0.35),
                stake_multiples: Some(vec![2, 5, 10]),
                dryruns: Some(10),
                ..plain(20, "rb", 10.0)
            },
            Group { dryruns: Some(20), ..plain(10, "rp", 15.0) },
        ];
        FileConfig {
            schema_version: SCHEMA_VERSION,
            race: RaceSection {
                id: race.race_id.clone(),
                track_length_m: race.track_length,
                tick_seconds: race.tick_seconds,
                factors: race.factors.clone(),
                interactions: race.interactions,
                betting_close: CloseRule::default(),
                start_positions: Vec::new(),
                competitors,
            },
            session: SessionSection::default(),
            bettors: groups
                .into_iter()
                .map(|g| BettorGroup {
                    count: g.count,
                    strategy: g.strategy.to_string(),
                    distance_m: g.distance_m,
                    window_s: g.window_s,
                    bias_strength: g.bias_strength,
                    stake_multiples: g.stake_multiples,
                    dryruns: g.dryruns,
                    balance: default_balance(),
                    stake_min: default_stake_min(),
                    stake_max: default_stake_max(),
                    revise_interval_s: g.revise_s,
                    shade: default_shade(),
                    improve_after_s: default_improve_after_s(),
                    max_open_orders: default_max_open(),
                    theta_conf: default_theta_conf(),
                    p_back: default_p_back(),
                    aggression_cap_ticks: default_aggression_cap(),
                    improve_cap_ticks: default_improve_cap(),
                })
                .collect(),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }
}
