//! Session orchestration: couples the race kernel, the bettor population,
//! and the exchange into one deterministic simulated betting session, plus
//! batch generation over independent sessions and the market-liquidity
//! arithmetic helpers.

use crate::bettors::{BetAction, BettorSpec, BettorState, Observation, OwnOrder, Strategy};
use crate::exchange::{
    grid_view, settle, Account, Accounts, ExchangeError, JournalEvent, MarketBook, MatchMode, OrderRequest,
    Phase as MarketPhase, SettlementReport, Side,
};
use crate::money::Money;
use crate::prediction::ProbEstimate;
use crate::race::{
    advance_tick, finish_order, BettingClose, Competitor, RaceConfig, RaceError, RaceRecord, RaceState, RaceStreams,
};
use crate::seeds::{session_seed, SeedMix};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error(transparent)]
    Race(#[from] RaceError),
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
    #[error("output error: {0}")]
    Sink(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub race: RaceConfig,
    pub field: Vec<Competitor>,
    pub bettors: Vec<BettorSpec>,
    /// Betting window before the start, in seconds.
    pub pre_race_s: f64,
    /// Fraction of positive net winnings charged at settlement.
    pub commission_rate: f64,
    pub mode: MatchMode,
    /// Depth of the market grid bettors observe.
    pub grid_depth: usize,
    pub master_seed: u64,
}

impl SessionConfig {
    pub fn new(race: RaceConfig, field: Vec<Competitor>, bettors: Vec<BettorSpec>, master_seed: u64) -> Self {
        SessionConfig {
            race,
            field,
            bettors,
            pre_race_s: 30.0,
            commission_rate: 0.05,
            mode: MatchMode::Crossing,
            grid_depth: 3,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let fail = |msg: String| Err(OrchestratorError::Config(msg));
        self.race.validate(&self.field)?;
        if self.bettors.len() < 2 {
            return fail(format!("a market needs at least 2 bettors, got {}", self.bettors.len()));
        }
        if !(self.pre_race_s.is_finite() && self.pre_race_s >= 0.0) {
            return fail(format!("pre_race_s must be >= 0, got {}", self.pre_race_s));
        }
        if !(0.0..=1.0).contains(&self.commission_rate) {
            return fail(format!("commission_rate must lie in [0, 1], got {}", self.commission_rate));
        }
        if self.grid_depth == 0 {
            return fail("grid_depth must be at least 1".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for spec in &self.bettors {
            if !seen.insert(spec.bettor_id) {
                return fail(format!("duplicate bettor_id {}", spec.bettor_id));
            }
            if spec.revise_interval_s < self.race.tick_seconds {
                return fail(format!(
                    "bettor {} revises every {}s, faster than the {}s tick",
                    spec.bettor_id, spec.revise_interval_s, self.race.tick_seconds
                ));
            }
            if spec.initial_balance < Money::ZERO {
                return fail(format!("bettor {} has negative initial balance", spec.bettor_id));
            }
            if !(0.0..=1.0).contains(&spec.shade) || !(0.0..=1.0).contains(&spec.p_back) {
                return fail(format!("bettor {} shade/p_back must lie in [0, 1]", spec.bettor_id));
            }
            if !(spec.theta_conf > 0.0 && spec.theta_conf < 1.0) {
                return fail(format!("bettor {} theta_conf must lie in (0, 1)", spec.bettor_id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BettorPnl {
    pub bettor_id: u32,
    /// Final balance minus initial, after commission.
    pub net: Money,
}

/// One bettor's belief history over the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSeries {
    pub bettor_id: u32,
    pub estimates: Vec<ProbEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub seed: u64,
    pub race: RaceRecord,
    pub pre_race_ticks: u64,
    pub journal: Vec<JournalEvent>,
    pub initial_balances: BTreeMap<u32, Money>,
    pub final_accounts: Vec<Account>,
    pub settlement: SettlementReport,
    pub pnl: Vec<BettorPnl>,
    pub sentiment: Vec<BeliefSeries>,
    /// Strategy fallbacks taken (empty-market favourite, no-history
    /// extrapolation).
    pub fallbacks: u32,
    /// Submissions dropped at application time (funds or phase races).
    pub rejected_submissions: u32,
    pub matched_volume: Money,
}

struct Clock {
    tick_seconds: f64,
}

impl Clock {
    fn ms(&self, session_tick: u64) -> u64 {
        (session_tick as f64 * self.tick_seconds * 1000.0).round() as u64
    }
}

/// Per-bettor revision cadence in whole ticks with a deterministic jittered
/// offset, so the population does not revise in lockstep.
struct Cadence {
    interval: u64,
    offset: u64,
}

impl Cadence {
    fn due(&self, session_tick: u64) -> bool {
        session_tick >= self.offset && (session_tick - self.offset) % self.interval == 0
    }
}

fn strategy_samples(strategy: &Strategy) -> u32 {
    match strategy {
        Strategy::Rp { profile } | Strategy::Rb { profile, .. } => profile.dryruns,
        _ => 0,
    }
}

/// Runs one full session: pre-race betting window, in-play loop coupling
/// race ticks with bettor revisions, close, and settlement to the winner.
/// Fully determined by the config (including its master seed).
pub fn run_session(config: &SessionConfig) -> Result<SessionRecord, OrchestratorError> {
    config.validate()?;
    let n = config.field.len();
    let dt = config.race.tick_seconds;

    let mut accounts = Accounts::new();
    let mut book = MarketBook::new(n, config.mode);
    let mut states: Vec<BettorState> = Vec::with_capacity(config.bettors.len());
    let mut cadences: Vec<Cadence> = Vec::with_capacity(config.bettors.len());
    let mut order = (0..config.bettors.len()).collect::<Vec<_>>();
    order.sort_by_key(|&i| config.bettors[i].bettor_id);

    for &i in &order {
        let spec = &config.bettors[i];
        accounts.open(spec.bettor_id, spec.initial_balance);
        let mut rng = SeedMix::new(config.master_seed).with_str("bettor").with_u64(spec.bettor_id as u64).rng();
        let interval = ((spec.revise_interval_s / dt).round() as u64).max(1);
        let offset = rng.gen_range(0..interval);
        cadences.push(Cadence { interval, offset });
        states.push(BettorState::new(rng));
    }

    let mut race_state = RaceState::start(&config.race, &config.field);
    let mut streams = RaceStreams::derive(config.master_seed, &config.race.race_id, &config.field);
    let mut trajectory = vec![race_state.positions.clone()];
    let mut block_events = Vec::new();
    let mut sentiment: Vec<BeliefSeries> =
        order.iter().map(|&i| BeliefSeries { bettor_id: config.bettors[i].bettor_id, estimates: Vec::new() }).collect();
    let mut fallbacks = 0u32;
    let mut rejected = 0u32;
    let clock = Clock { tick_seconds: dt };

    let pre_race_ticks = (config.pre_race_s / dt).round() as u64;
    let mut session_tick = 0u64;

    let revise_market = |session_tick: u64,
                             race_state: &RaceState,
                             trajectory: &[Vec<f64>],
                             book: &mut MarketBook,
                             accounts: &mut Accounts,
                             states: &mut [BettorState],
                             sentiment: &mut [BeliefSeries],
                             fallbacks: &mut u32,
                             rejected: &mut u32|
     -> Result<(), OrchestratorError> {
        let now_ms = clock.ms(session_tick);
        let grid = grid_view(book, config.grid_depth);
        let mut planned: Vec<(usize, Vec<BetAction>)> = Vec::new();
        for (slot, &i) in order.iter().enumerate() {
            let spec = &config.bettors[i];
            if !cadences[slot].due(session_tick) {
                continue;
            }
            let own_orders: Vec<OwnOrder> = book
                .open_orders_of(spec.bettor_id)
                .into_iter()
                .map(|o| OwnOrder {
                    order_id: o.order_id,
                    competitor: o.competitor,
                    side: o.side,
                    odds: o.odds,
                    unmatched: o.unmatched,
                    age_s: (now_ms.saturating_sub(o.arrival_time_ms)) as f64 / 1000.0,
                })
                .collect();
            let obs = Observation {
                race: race_state,
                config: &config.race,
                field: &config.field,
                trajectory,
                market_phase: book.phase,
                grid: &grid,
                own_balance: accounts.get(spec.bettor_id).expect("account opened").balance,
                own_orders: &own_orders,
            };
            let out = crate::bettors::step_bettor(spec, &mut states[slot], &obs);
            if out.fallback.is_some() {
                *fallbacks += 1;
            }
            sentiment[slot].estimates.push(ProbEstimate {
                probs: states[slot].belief.clone(),
                samples: strategy_samples(&spec.strategy),
                snapshot_seconds: race_state.seconds(&config.race),
            });
            planned.push((slot, out.actions));
        }
        for (slot, actions) in planned {
            let bettor_id = config.bettors[order[slot]].bettor_id;
            for action in actions {
                match action {
                    BetAction::Submit { competitor, side, odds, stake } => {
                        let req = OrderRequest { bettor_id, competitor, side, odds, stake };
                        match book.submit_order(req, accounts, now_ms) {
                            Ok(_) => {}
                            Err(ExchangeError::Rejected(_)) => *rejected += 1,
                            Err(other) => return Err(other.into()),
                        }
                    }
                    BetAction::Cancel { order_id } => {
                        book.cancel_order(order_id, accounts, now_ms)?;
                    }
                }
            }
        }
        Ok(())
    };

    // Pre-race window: starting prices form against the frozen start state.
    for _ in 0..pre_race_ticks {
        revise_market(
            session_tick,
            &race_state,
            &trajectory,
            &mut book,
            &mut accounts,
            &mut states,
            &mut sentiment,
            &mut fallbacks,
            &mut rejected,
        )?;
        session_tick += 1;
    }
    book.transition_in_play(&mut accounts, clock.ms(session_tick))?;

    // In-play: advance the race, then let due bettors react to the fresh
    // snapshot until the close condition fires.
    loop {
        let events = advance_tick(&mut race_state, &config.race, &config.field, &mut streams)?;
        block_events.extend(events);
        trajectory.push(race_state.positions.clone());
        session_tick += 1;

        let finished = race_state.finish_times.iter().filter(|t| t.is_some()).count();
        let close_now = match config.race.betting_close {
            BettingClose::LastFinisher => finished == n,
            BettingClose::NthFinisher(k) => finished >= k as usize,
        };
        if close_now && book.phase == MarketPhase::InPlay {
            book.close_market(&mut accounts, clock.ms(session_tick))?;
        }
        if book.phase == MarketPhase::InPlay {
            revise_market(
                session_tick,
                &race_state,
                &trajectory,
                &mut book,
                &mut accounts,
                &mut states,
                &mut sentiment,
                &mut fallbacks,
                &mut rejected,
            )?;
        }
        if finished == n {
            break;
        }
    }
    if book.phase == MarketPhase::InPlay {
        book.close_market(&mut accounts, clock.ms(session_tick))?;
    }

    let finish_times: Vec<f64> = race_state.finish_times.iter().map(|t| t.expect("race complete")).collect();
    let order_of_finish = finish_order(&finish_times, &config.field);
    let winner = order_of_finish[0];
    let settlement = settle(&mut book, &mut accounts, winner, config.commission_rate, clock.ms(session_tick))?;

    let initial_balances: BTreeMap<u32, Money> =
        config.bettors.iter().map(|b| (b.bettor_id, b.initial_balance)).collect();
    let final_accounts: Vec<Account> = accounts.iter().copied().collect();
    let pnl = final_accounts
        .iter()
        .map(|a| BettorPnl { bettor_id: a.bettor_id, net: a.balance - initial_balances[&a.bettor_id] })
        .collect();
    let matched_volume = book.matched_bets().iter().map(|m| m.stake).sum();

    let race = RaceRecord {
        config: config.race.clone(),
        competitor_names: config.field.iter().map(|c| c.name.clone()).collect(),
        seed: config.master_seed,
        positions: trajectory,
        finish_times,
        finish_order: order_of_finish,
        block_events,
    };

    Ok(SessionRecord {
        seed: config.master_seed,
        race,
        pre_race_ticks,
        journal: book.journal().to_vec(),
        initial_balances,
        final_accounts,
        settlement,
        pnl,
        sentiment,
        fallbacks,
        rejected_submissions: rejected,
        matched_volume,
    })
}

/// The config of batch member `index`: same template, seed derived from the
/// master so sessions are independent and reproducible in isolation.
pub fn derive_session(template: &SessionConfig, index: u64) -> SessionConfig {
    let mut config = template.clone();
    config.master_seed = session_seed(template.master_seed, index);
    config
}

/// Runs `count` independent sessions on `workers` threads. `per_session`
/// consumes each record on its worker (e.g. writes files) and its result is
/// returned in index order; one session failing does not abort the others.
pub fn run_batch<T, F>(
    template: &SessionConfig,
    count: u64,
    workers: usize,
    per_session: F,
) -> Result<Vec<Result<T, OrchestratorError>>, OrchestratorError>
where
    T: Send,
    F: Fn(u64, SessionRecord) -> Result<T, OrchestratorError> + Send + Sync,
{
    template.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| OrchestratorError::Config(e.to_string()))?;
    Ok(pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|index| run_session(&derive_session(template, index)).and_then(|record| per_session(index, record)))
            .collect()
    }))
}

/// Minimum population keeping a depth-D grid on n_r runners plausibly full.
pub fn min_bettors(n_r: u64, depth: u64) -> u64 {
    4 * depth * n_r
}

/// Probability that n_r uniform one-bet pairs cover every runner: n!/n^n,
/// computed in log space.
pub fn nonempty_market_prob(n_r: u64) -> f64 {
    assert!(n_r >= 1);
    let n = n_r as f64;
    let log_p: f64 = (1..=n_r).map(|k| (k as f64).ln()).sum::<f64>() - n * n.ln();
    log_p.exp()
}

/// Empirical counterpart of [`nonempty_market_prob`] driven through the real
/// exchange: 2·n_r one-bet bettors in back/lay pairs, each pair landing on a
/// uniform runner at one shared tick, direction assigned by coin flip;
/// success means every runner traded.
pub fn empirical_nonempty_rate(n_r: usize, trials: u32, seed: u64) -> f64 {
    use crate::ladder::OddsTick;
    let mut rng = SeedMix::new(seed).with_str("liquidity").rng();
    let tick = OddsTick::from_value(2.0).expect("on ladder");
    let stake = Money::from_units(2);
    let mut hits = 0u32;
    for _ in 0..trials {
        let mut book = MarketBook::new(n_r, MatchMode::Crossing);
        let mut accounts = Accounts::new();
        for pair in 0..n_r as u32 {
            let (first, second) = (2 * pair + 1, 2 * pair + 2);
            accounts.open(first, Money::from_units(10));
            accounts.open(second, Money::from_units(10));
            let competitor = rng.gen_range(0..n_r);
            let (layer, backer) = if rng.gen_bool(0.5) { (first, second) } else { (second, first) };
            let lay = OrderRequest { bettor_id: layer, competitor, side: Side::Lay, odds: tick, stake };
            book.submit_order(lay, &mut accounts, 0).expect("funded");
            let back = OrderRequest { bettor_id: backer, competitor, side: Side::Back, odds: tick, stake };
            book.submit_order(back, &mut accounts, 0).expect("funded");
        }
        let mut traded = vec![false; n_r];
        for bet in book.matched_bets() {
            traded[bet.competitor] = true;
        }
        if traded.iter().all(|&t| t) {
            hits += 1;
        }
    }
    hits as f64 / trials as f64
}
