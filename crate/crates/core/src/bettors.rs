//! The agent population. Each bettor periodically observes the race and the
//! market, forms a pick plus a win-probability belief per its strategy,
//! quotes odds with competitive shading, sizes a stake, and emits submit or
//! cancel actions for the orchestrator to apply.

use crate::exchange::{lay_liability, GridView, Phase as MarketPhase, Side};
use crate::ladder::{self, OddsTick};
use crate::money::Money;
use crate::prediction::{estimate_probs, fair_decimal_odds, BeliefProfile};
use crate::race::{Competitor, RaceConfig, RaceState};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// How a bettor turns observations into a pick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// Zero intelligence: uniform random pick among unfinished competitors.
    Zi,
    /// Backs the current leader.
    Lw,
    /// Backs second place while it trails the leader by less than
    /// `distance`, otherwise the leader.
    Ud { distance: f64 },
    /// Backs the market favourite (lowest current odds).
    Btf,
    /// Linear extrapolation: constant-speed projection of each competitor's
    /// progress over the last `window_s` seconds picks the earliest
    /// projected finisher.
    Linex { window_s: f64 },
    /// Dry-run estimator distorted toward longshots: probabilities are
    /// raised to the power (1 - bias_strength) and renormalized, and stakes
    /// cluster on round multiples.
    Rb { bias_strength: f64, stake_multiples: Vec<i64>, profile: BeliefProfile },
    /// Dry-run probability estimator.
    Rp { profile: BeliefProfile },
}

/// Deterministic quoting knobs shared by all strategies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuoteParams {
    /// Ticks of greed at shade=1: quotes sit this far past fair odds.
    pub aggression_cap_ticks: i64,
    /// A quote may improve on the same-side touch by at most this many ticks.
    pub improve_cap_ticks: i64,
}

impl Default for QuoteParams {
    fn default() -> Self {
        QuoteParams { aggression_cap_ticks: 10, improve_cap_ticks: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BettorSpec {
    pub bettor_id: u32,
    pub strategy: Strategy,
    pub initial_balance: Money,
    /// Seconds between decision revisions.
    pub revise_interval_s: f64,
    /// 0 quotes fair odds, 1 quotes the full aggression cap past fair.
    pub shade: f64,
    /// Unmatched orders older than this are cancelled or improved.
    pub improve_after_s: f64,
    pub max_open_orders: usize,
    /// Belief mass a heuristic pick carries; the rest spreads uniformly.
    pub theta_conf: f64,
    /// Probability of backing the pick (vs laying the least likely).
    pub p_back: f64,
    pub stake_min: Money,
    pub stake_max: Money,
    pub quote: QuoteParams,
}

impl BettorSpec {
    pub fn new(bettor_id: u32, strategy: Strategy) -> Self {
        BettorSpec {
            bettor_id,
            strategy,
            initial_balance: Money::from_units(100),
            revise_interval_s: 2.0,
            shade: 0.5,
            improve_after_s: 4.0,
            max_open_orders: 4,
            theta_conf: 0.6,
            p_back: 0.5,
            stake_min: Money::from_units(2),
            stake_max: Money::from_units(20),
            quote: QuoteParams::default(),
        }
    }
}

/// One of the bettor's own resting orders, as seen in its observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OwnOrder {
    pub order_id: u64,
    pub competitor: usize,
    pub side: Side,
    pub odds: OddsTick,
    pub unmatched: Money,
    pub age_s: f64,
}

/// Read-only, single-tick snapshot a bettor decides from.
#[derive(Clone, Copy)]
pub struct Observation<'a> {
    pub race: &'a RaceState,
    pub config: &'a RaceConfig,
    pub field: &'a [Competitor],
    /// Position rows recorded so far, row 0 = start, last row = current.
    pub trajectory: &'a [Vec<f64>],
    pub market_phase: MarketPhase,
    pub grid: &'a GridView,
    pub own_balance: Money,
    pub own_orders: &'a [OwnOrder],
}

impl<'a> Observation<'a> {
    pub fn positions(&self) -> &'a [f64] {
        &self.race.positions
    }

    fn unfinished(&self) -> Vec<usize> {
        (0..self.race.positions.len()).filter(|&c| self.race.finish_times[c].is_none()).collect()
    }

    /// With one or zero runners left the outcome is determined: the first
    /// finisher if any, else the lone leader.
    fn settled_pick(&self) -> usize {
        self.race
            .finish_times
            .iter()
            .enumerate()
            .filter_map(|(c, t)| t.map(|t| (c, t)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
            .map(|(c, _)| c)
            .unwrap_or_else(|| argmax(self.positions()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackReason {
    /// BTF saw no price signal on any competitor.
    EmptyMarket,
    /// Linex had no recorded progress to extrapolate.
    NoHistory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PickResult {
    pub pick: usize,
    /// Win-probability belief per competitor, sums to 1.
    pub belief: Vec<f64>,
    pub fallback: Option<FallbackReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BetAction {
    Submit { competitor: usize, side: Side, odds: OddsTick, stake: Money },
    Cancel { order_id: u64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepOutput {
    pub actions: Vec<BetAction>,
    pub fallback: Option<FallbackReason>,
}

/// The pick and side a bettor is currently working.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stance {
    pub pick: usize,
    pub side: Side,
}

/// Mutable per-bettor state owned by the orchestrator.
#[derive(Debug, Clone)]
pub struct BettorState {
    pub rng: ChaCha8Rng,
    pub stance: Option<Stance>,
    pub belief: Vec<f64>,
}

impl BettorState {
    pub fn new(rng: ChaCha8Rng) -> Self {
        BettorState { rng, stance: None, belief: Vec::new() }
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Belief of a heuristic picker: `theta` on the pick, rest uniform.
pub fn heuristic_belief(n: usize, pick: usize, theta: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let rest = (1.0 - theta) / (n - 1) as f64;
    (0..n).map(|c| if c == pick { theta } else { rest }).collect()
}

fn uniform_pick(candidates: &[usize], rng: &mut ChaCha8Rng) -> usize {
    candidates[rng.gen_range(0..candidates.len())]
}

/// Longshot distortion: p_i^gamma / sum p^gamma with gamma = 1 - bias in
/// (0, 1]; gamma < 1 compresses the favourite-outsider gap while keeping the
/// ranking.
pub fn distort_longshot(probs: &[f64], bias_strength: f64) -> Vec<f64> {
    let gamma = (1.0 - bias_strength).clamp(1e-3, 1.0);
    let powered: Vec<f64> = probs.iter().map(|&p| p.max(1e-12).powf(gamma)).collect();
    let total: f64 = powered.iter().sum();
    powered.into_iter().map(|p| p / total).collect()
}

fn linex_pick(obs: &Observation, window_s: f64) -> Option<usize> {
    let t = obs.trajectory.len().checked_sub(1)?;
    if t == 0 {
        return None;
    }
    let window = ((window_s / obs.config.tick_seconds).round() as usize).clamp(1, t);
    let now = &obs.trajectory[t];
    let then = &obs.trajectory[t - window];
    let mut best: Option<(usize, f64)> = None;
    for c in 0..now.len() {
        let projected = match obs.race.finish_times[c] {
            Some(done) => done,
            None => {
                let speed = (now[c] - then[c]) / window as f64;
                if speed <= 0.0 {
                    return None;
                }
                t as f64 + (obs.config.track_length - now[c]) / speed
            }
        };
        let better = best.map(|(_, b)| projected < b).unwrap_or(true);
        if better {
            best = Some((c, projected));
        }
    }
    best.map(|(c, _)| c)
}

/// Strategy dispatch: pick a competitor and a belief vector from one
/// observation.
pub fn pick(spec: &BettorSpec, obs: &Observation, rng: &mut ChaCha8Rng) -> PickResult {
    let n = obs.positions().len();
    let theta = spec.theta_conf;
    let heuristic = |pick: usize, fallback: Option<FallbackReason>| PickResult {
        pick,
        belief: heuristic_belief(n, pick, theta),
        fallback,
    };
    let zi = |rng: &mut ChaCha8Rng, fallback: Option<FallbackReason>| {
        let unfinished: Vec<usize> = (0..n).filter(|&c| obs.race.finish_times[c].is_none()).collect();
        let pick = if unfinished.is_empty() { obs.settled_pick() } else { uniform_pick(&unfinished, rng) };
        PickResult { pick, belief: vec![1.0 / n as f64; n], fallback }
    };

    match &spec.strategy {
        Strategy::Rp { profile } => {
            let est = estimate_probs(obs.race, obs.config, obs.field, profile, rng).expect("observation is a valid snapshot");
            PickResult { pick: argmax(&est.probs), belief: est.probs, fallback: None }
        }
        Strategy::Rb { bias_strength, profile, .. } => {
            let est = estimate_probs(obs.race, obs.config, obs.field, profile, rng).expect("observation is a valid snapshot");
            let belief = distort_longshot(&est.probs, *bias_strength);
            PickResult { pick: argmax(&belief), belief, fallback: None }
        }
        Strategy::Zi => zi(rng, None),
        _ if obs.unfinished().len() <= 1 => heuristic(obs.settled_pick(), None),
        Strategy::Lw => heuristic(argmax(obs.positions()), None),
        Strategy::Ud { distance } => {
            let positions = obs.positions();
            let leader = argmax(positions);
            let mut second = if leader == 0 { 1 } else { 0 };
            for (c, &d) in positions.iter().enumerate() {
                if c != leader && d > positions[second] {
                    second = c;
                }
            }
            let gap = positions[leader] - positions[second];
            heuristic(if gap < *distance { second } else { leader }, None)
        }
        Strategy::Btf => {
            let favourite = obs
                .grid
                .rows
                .iter()
                .filter_map(|r| r.favourite_odds.map(|o| (r.competitor, o)))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            match favourite {
                Some((c, _)) => heuristic(c, None),
                None => zi(rng, Some(FallbackReason::EmptyMarket)),
            }
        }
        Strategy::Linex { window_s } => match linex_pick(obs, *window_s) {
            Some(c) => heuristic(c, None),
            None => zi(rng, Some(FallbackReason::NoHistory)),
        },
    }
}

/// Deterministic quote for a belief `p`: fair odds pushed `shade` of the way
/// to the aggression cap (backs up, lays down), never more than
/// `improve_cap_ticks` more competitive than the same-side touch, and never
/// worse than fair for the quoting bettor.
pub fn quote_odds(p: f64, side: Side, touch: Option<OddsTick>, shade: f64, params: &QuoteParams) -> OddsTick {
    let p = p.clamp(1e-9, 1.0 - 1e-9);
    let fair = fair_decimal_odds(p).expect("clamped probability is positive");
    let greed = (shade.clamp(0.0, 1.0) * params.aggression_cap_ticks as f64).round() as i64;
    match side {
        Side::Back => {
            let fair_tick = ladder::snap_up(fair);
            let mut quote = fair_tick.offset(greed);
            if let Some(t) = touch {
                let floor = t.offset(-params.improve_cap_ticks);
                if quote < floor {
                    quote = floor;
                }
            }
            quote.max(fair_tick)
        }
        Side::Lay => {
            let fair_tick = ladder::snap_down(fair);
            let mut quote = fair_tick.offset(-greed);
            if let Some(t) = touch {
                let cap = t.offset(params.improve_cap_ticks);
                if quote > cap {
                    quote = cap;
                }
            }
            quote.min(fair_tick)
        }
    }
}

/// Uniform stake in [stake_min, min(stake_max, affordable)]; RB rounds to a
/// randomly chosen allowed multiple. Returns zero when nothing affordable.
pub fn stake_size(spec: &BettorSpec, affordable: Money, rng: &mut ChaCha8Rng) -> Money {
    let cap = spec.stake_max.min(affordable);
    if cap < spec.stake_min || cap <= Money::ZERO {
        return Money::ZERO;
    }
    let draw = Money::from_cents(rng.gen_range(spec.stake_min.cents()..=cap.cents()));
    let Strategy::Rb { stake_multiples, .. } = &spec.strategy else {
        return draw;
    };
    let multiple = Money::from_units(stake_multiples[rng.gen_range(0..stake_multiples.len())]);
    let m = multiple.cents();
    let mut rounded = (draw.cents() + m / 2) / m * m;
    if rounded > cap.cents() {
        rounded -= m;
    }
    if rounded <= 0 {
        rounded = if m <= cap.cents() { m } else { return Money::ZERO };
    }
    Money::from_cents(rounded)
}

fn resting_hold(side: Side, odds: OddsTick, stake: Money) -> Money {
    match side {
        Side::Back => stake,
        Side::Lay => lay_liability(stake, odds),
    }
}

/// Largest stake whose hold at `odds` fits in `free`.
fn affordable_stake(side: Side, odds: OddsTick, free: Money) -> Money {
    match side {
        Side::Back => free,
        Side::Lay => Money::from_cents(free.cents() * 100 / (odds.centi() - 100)),
    }
}

fn one_tick_more_competitive(side: Side, odds: OddsTick) -> OddsTick {
    match side {
        Side::Back => odds.offset(-1),
        Side::Lay => odds.offset(1),
    }
}

/// One decision revision: refresh the stance, groom resting orders (keep
/// on-target ones, improve stale ones working the stance, cancel stale
/// strays), and submit at most one fresh order at the target quote.
pub fn step_bettor(spec: &BettorSpec, state: &mut BettorState, obs: &Observation) -> StepOutput {
    if obs.market_phase == MarketPhase::Closed {
        return StepOutput::default();
    }
    let picked = pick(spec, obs, &mut state.rng);
    let side = match state.stance {
        Some(s) if s.pick == picked.pick => s.side,
        _ => {
            if state.rng.gen_bool(spec.p_back.clamp(0.0, 1.0)) {
                Side::Back
            } else {
                Side::Lay
            }
        }
    };
    state.stance = Some(Stance { pick: picked.pick, side });
    let target = match side {
        Side::Back => picked.pick,
        Side::Lay => argmin(&picked.belief),
    };
    state.belief = picked.belief;

    let row = obs.grid.row(target);
    let touch = match side {
        Side::Back => row.back.first().map(|&(t, _)| t),
        Side::Lay => row.lay.first().map(|&(t, _)| t),
    };
    let target_tick = quote_odds(state.belief[target], side, touch, spec.shade, &spec.quote);

    let mut actions = Vec::new();
    let mut free = obs.own_balance;
    let mut live = obs.own_orders.len();
    let mut working_target = false;
    for order in obs.own_orders {
        let on_stance = order.competitor == target && order.side == side;
        if on_stance && order.odds == target_tick {
            working_target = true;
            continue;
        }
        if order.age_s <= spec.improve_after_s {
            working_target |= on_stance;
            continue;
        }
        actions.push(BetAction::Cancel { order_id: order.order_id });
        free += resting_hold(order.side, order.odds, order.unmatched);
        live -= 1;
        if on_stance {
            let improved = one_tick_more_competitive(side, order.odds);
            let need = resting_hold(side, improved, order.unmatched);
            if need <= free {
                actions.push(BetAction::Submit { competitor: target, side, odds: improved, stake: order.unmatched });
                free -= need;
                live += 1;
                working_target = true;
            }
        }
    }

    if !working_target && live < spec.max_open_orders {
        let stake = stake_size(spec, affordable_stake(side, target_tick, free), &mut state.rng);
        if stake > Money::ZERO {
            actions.push(BetAction::Submit { competitor: target, side, odds: target_tick, stake });
        }
    }
    StepOutput { actions, fallback: picked.fallback }
}
