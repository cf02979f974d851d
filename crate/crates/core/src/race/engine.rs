//! Per-tick race dynamics.
//!
//! Updates are synchronous: all steps for a tick are computed from the
//! positions and last applied steps at the start of the tick, then applied in
//! ascending field order. Per competitor and tick the draw order from its own
//! stream is fixed: optional spur coin, step draw, optional block coin. The
//! spur and block coins are drawn only when the corresponding neighbour is in
//! range, and not at all when interactions are disabled.

use super::{
    finish_order, Competitor, PreferenceForm, RaceConfig, RaceError, RaceRecord, RaceState,
    RaceStreams, RealizedPhases, EPS_MIN, MIN_PACE,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Nearest competitor strictly ahead of `c`: minimal positive gap, ties to
/// the lower field index. Finished competitors count; they sit at the finish
/// line and can still pace a follower.
pub fn nearest_ahead(positions: &[f64], c: usize) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &d) in positions.iter().enumerate() {
        if i == c {
            continue;
        }
        let gap = d - positions[c];
        if gap > 0.0 && best.map_or(true, |(_, g)| gap < g) {
            best = Some((i, gap));
        }
    }
    best
}

/// Nearest competitor strictly behind `c`; mirror of [`nearest_ahead`].
pub fn nearest_behind(positions: &[f64], c: usize) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &d) in positions.iter().enumerate() {
        if i == c {
            continue;
        }
        let gap = positions[c] - d;
        if gap > 0.0 && best.map_or(true, |(_, g)| gap < g) {
            best = Some((i, gap));
        }
    }
    best
}

/// Track-preference coefficient: how well the competitor's preference vector
/// matches the track's factor vector, in [EPS_MIN, 1].
pub fn preference_coeff(comp: &Competitor, factors: &[f64], form: &PreferenceForm) -> Result<f64, RaceError> {
    if comp.prefs.len() != factors.len() {
        return Err(RaceError::InvalidConfig(format!(
            "competitor {} has {} preference coordinates but the track has {}",
            comp.id,
            comp.prefs.len(),
            factors.len()
        )));
    }
    let dist: f64 = comp
        .prefs
        .iter()
        .zip(factors)
        .map(|(p, f)| (p - f) * (p - f))
        .sum::<f64>()
        .sqrt();
    let raw = match *form {
        PreferenceForm::Normalized => 1.0 - dist / (factors.len() as f64).sqrt(),
        PreferenceForm::Legacy { k } => (k - dist) / k,
    };
    Ok(raw.clamp(EPS_MIN, 1.0))
}

/// Responsiveness at the given race fraction: the realized phase level,
/// boosted by `spur_boost` with probability `spur_prob` when the nearest
/// pursuer is closer than `theta_behind`. Never below EPS_MIN.
pub fn responsiveness(
    comp: &Competitor,
    realized: &RealizedPhases,
    race_frac: f64,
    positions: &[f64],
    c: usize,
    interactions: bool,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut level = realized.level_at(race_frac);
    if interactions {
        if let Some((_, gap)) = nearest_behind(positions, c) {
            if gap < comp.theta_behind {
                let coin: f64 = rng.gen();
                if coin < comp.spur_prob {
                    level *= comp.spur_boost;
                }
            }
        }
    }
    level.max(EPS_MIN)
}

/// One ground-loss event: the follower's step was capped at the pace of a
/// close leader. Recorded inputs allow the cap to be re-derived in tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockEvent {
    pub tick: u64,
    pub competitor: usize,
    pub ahead: usize,
    pub applied_step: f64,
    pub responsiveness: f64,
    pub own_last_step: f64,
    pub ahead_last_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub step: f64,
    /// Present when the blocked branch fired (event tick filled by the caller).
    pub blocked: Option<BlockEvent>,
}

/// Step size for competitor `c` this tick. The free draw is
/// responsiveness * preference * step-draw (the multiplier pair floored at
/// EPS_MIN); when interactions are on and the nearest leader is within
/// `theta_ahead`, the step instead collapses, with probability `block_prob`,
/// to responsiveness * min(own last step, leader's last step).
pub fn step_size(
    comp: &Competitor,
    c: usize,
    config: &RaceConfig,
    positions: &[f64],
    last_steps: &[f64],
    realized: &RealizedPhases,
    rng: &mut ChaCha8Rng,
) -> Result<StepOutcome, RaceError> {
    let race_frac = (positions[c] / config.track_length).clamp(0.0, 1.0);
    let resp = responsiveness(comp, realized, race_frac, positions, c, config.interactions, rng);
    let pref = preference_coeff(comp, &config.factors, &config.preference)?;
    let draw = comp.step.sample(rng);
    let free = (resp * pref).max(EPS_MIN) * draw;

    if config.interactions {
        if let Some((ahead, gap)) = nearest_ahead(positions, c) {
            if gap <= comp.theta_ahead {
                let coin: f64 = rng.gen();
                if coin < comp.block_prob {
                    let step = resp * last_steps[c].min(last_steps[ahead]);
                    return Ok(StepOutcome {
                        step,
                        blocked: Some(BlockEvent {
                            tick: 0,
                            competitor: c,
                            ahead,
                            applied_step: step,
                            responsiveness: resp,
                            own_last_step: last_steps[c],
                            ahead_last_step: last_steps[ahead],
                        }),
                    });
                }
            }
        }
    }
    Ok(StepOutcome { step: free, blocked: None })
}

fn ensure_realized(state: &mut RaceState, field: &[Competitor], streams: &mut RaceStreams) {
    if state.realized_phases.is_none() {
        let realized = field
            .iter()
            .enumerate()
            .map(|(i, comp)| comp.phases.realize(streams.stream(i)))
            .collect();
        state.realized_phases = Some(realized);
    }
}

/// Advances the race one tick. Returns the tick's ground-loss events.
pub fn advance_tick(
    state: &mut RaceState,
    config: &RaceConfig,
    field: &[Competitor],
    streams: &mut RaceStreams,
) -> Result<Vec<BlockEvent>, RaceError> {
    state.check_matches(field)?;
    if state.race_over() {
        return Err(RaceError::RaceOver);
    }
    ensure_realized(state, field, streams);
    let realized = state.realized_phases.as_ref().expect("realized above");

    // All steps computed against the start-of-tick snapshot.
    let mut steps: Vec<Option<StepOutcome>> = vec![None; field.len()];
    for (c, comp) in field.iter().enumerate() {
        if state.finish_times[c].is_some() {
            continue;
        }
        steps[c] = Some(step_size(comp, c, config, &state.positions, &state.last_steps, &realized[c], streams.stream(c))?);
    }

    let t_start = state.seconds(config);
    let mut events = Vec::new();
    for (c, outcome) in steps.into_iter().enumerate() {
        let Some(outcome) = outcome else { continue };
        debug_assert!(outcome.step > 0.0, "progress must stay positive");
        if let Some(mut ev) = outcome.blocked {
            ev.tick = state.tick;
            events.push(ev);
        }
        let from = state.positions[c];
        let to = from + outcome.step;
        // Remembered pace is floored: a pace parked on the line must never
        // cap a follower into a crawl whose sum converges short of it.
        state.last_steps[c] = outcome.step.max(MIN_PACE);
        if to >= config.track_length {
            // Crossing tick: the finish time is interpolated inside the tick
            // and the competitor stops on the line.
            let frac = (config.track_length - from) / outcome.step;
            state.finish_times[c] = Some(t_start + frac * config.tick_seconds);
            state.positions[c] = config.track_length;
        } else {
            state.positions[c] = to;
        }
    }
    state.tick += 1;
    Ok(events)
}

/// Runs a race to completion from a snapshot, returning field indices in
/// finishing order (P1 first). A t=0 snapshot run with freshly derived
/// streams reproduces [`run_race`] exactly.
pub fn run_race_from(
    mut state: RaceState,
    config: &RaceConfig,
    field: &[Competitor],
    streams: &mut RaceStreams,
) -> Result<Vec<usize>, RaceError> {
    state.check_matches(field)?;
    while !state.race_over() {
        if state.tick >= config.max_ticks {
            return Err(RaceError::TickLimit(config.max_ticks));
        }
        advance_tick(&mut state, config, field, streams)?;
    }
    let times: Vec<f64> = state.finish_times.iter().map(|t| t.expect("race over")).collect();
    Ok(finish_order(&times, field))
}

/// Runs a full race from the start under the given streams, recording the
/// trajectory, finish data and ground-loss events.
pub fn run_race(config: &RaceConfig, field: &[Competitor], streams: &mut RaceStreams) -> Result<RaceRecord, RaceError> {
    config.validate(field)?;
    let mut state = RaceState::start(config, field);
    let mut positions = vec![state.positions.clone()];
    let mut block_events = Vec::new();
    while !state.race_over() {
        if state.tick >= config.max_ticks {
            return Err(RaceError::TickLimit(config.max_ticks));
        }
        block_events.extend(advance_tick(&mut state, config, field, streams)?);
        positions.push(state.positions.clone());
    }
    let finish_times: Vec<f64> = state.finish_times.iter().map(|t| t.expect("race over")).collect();
    let order = finish_order(&finish_times, field);
    Ok(RaceRecord {
        config: config.clone(),
        competitor_names: field.iter().map(|c| c.name.clone()).collect(),
        seed: streams.master,
        positions,
        finish_times,
        finish_order: order,
        block_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::race::{Phase, PhaseSchedule, StepDistribution};

    fn flat_competitor(id: u32, lo: f64, hi: f64) -> Competitor {
        Competitor::basic(id, &format!("c{id}"), lo, hi, vec![0.5])
    }

    fn realized_flat(level: f64) -> RealizedPhases {
        RealizedPhases(vec![Phase { until_frac: 1.0, level }])
    }

    #[test]
    fn nearest_ahead_and_behind() {
        let positions = [10.0, 25.0, 25.0, 4.0];
        assert_eq!(nearest_ahead(&positions, 0), Some((1, 15.0)));
        assert_eq!(nearest_ahead(&positions, 1), None);
        assert_eq!(nearest_ahead(&positions, 3), Some((0, 6.0)));
        assert_eq!(nearest_behind(&positions, 0), Some((3, 6.0)));
        assert_eq!(nearest_behind(&positions, 3), None);
        // Equal positions are neither ahead nor behind each other.
        assert_eq!(nearest_ahead(&positions, 2), None);
        assert_eq!(nearest_behind(&positions, 1), Some((0, 15.0)));
    }

    #[test]
    fn preference_examples() {
        let config = RaceConfig::new("t", 100.0, vec![0.5]);
        let mut comp = flat_competitor(0, 10.0, 20.0);

        // Identical vectors: perfect fit.
        assert_eq!(preference_coeff(&comp, &[0.5], &PreferenceForm::Normalized).unwrap(), 1.0);
        // Halfway off in one dimension.
        comp.prefs = vec![0.0];
        assert_eq!(preference_coeff(&comp, &[0.5], &PreferenceForm::Normalized).unwrap(), 0.5);
        // Maximal mismatch clamps to the floor.
        comp.prefs = vec![0.0, 0.0];
        assert_eq!(preference_coeff(&comp, &[1.0, 1.0], &PreferenceForm::Normalized).unwrap(), EPS_MIN);
        // Legacy form.
        comp.prefs = vec![0.0];
        assert_eq!(preference_coeff(&comp, &[0.5], &PreferenceForm::Legacy { k: 1.0 }).unwrap(), 0.5);
        assert!((preference_coeff(&comp, &[0.5], &PreferenceForm::Legacy { k: 2.0 }).unwrap() - 0.75).abs() < 1e-12);
        // Dimension mismatch is a config error.
        assert!(preference_coeff(&comp, &config.factors[..0].to_vec(), &PreferenceForm::Normalized).is_err());
    }

    #[test]
    fn responsiveness_phases_and_spur() {
        let realized = RealizedPhases(vec![Phase { until_frac: 0.33, level: 0.8 }, Phase { until_frac: 1.0, level: 0.95 }]);
        let mut comp = flat_competitor(0, 10.0, 20.0);
        comp.theta_behind = 5.0;
        comp.spur_prob = 1.0;
        comp.spur_boost = 1.1;
        let mut rng = crate::seeds::SeedMix::new(0).rng();

        // No pursuer: plain phase levels.
        let lone = [50.0];
        assert_eq!(responsiveness(&comp, &realized, 0.1, &lone, 0, true, &mut rng), 0.8);
        assert_eq!(responsiveness(&comp, &realized, 0.5, &lone, 0, true, &mut rng), 0.95);

        // Pursuer 2 in behind with certain spur: boosted.
        let chased = [50.0, 48.0];
        let r = responsiveness(&comp, &realized, 0.1, &chased, 0, true, &mut rng);
        assert!((r - 0.88).abs() < 1e-12);
        // Interactions off: no spur, no coin drawn.
        assert_eq!(responsiveness(&comp, &realized, 0.1, &chased, 0, false, &mut rng), 0.8);
        // Pursuer exactly at the threshold does not spur (strict inequality).
        let at_threshold = [50.0, 45.0];
        assert_eq!(responsiveness(&comp, &realized, 0.1, &at_threshold, 0, true, &mut rng), 0.8);
    }

    #[test]
    fn step_size_support_and_blocking() {
        let mut config = RaceConfig::new("t", 1000.0, vec![0.5]);
        config.interactions = true;
        let comp = flat_competitor(0, 10.0, 20.0);
        let realized = realized_flat(1.0);
        let mut rng = crate::seeds::SeedMix::new(5).rng();

        // Free running: step in [10, 20).
        for _ in 0..500 {
            let out = step_size(&comp, 0, &config, &[100.0], &[15.0], &realized, &mut rng).unwrap();
            assert!(out.blocked.is_none());
            assert!((10.0..20.0).contains(&out.step));
        }

        // Leader one metre ahead, block certain: step collapses to
        // responsiveness * min of the last steps.
        let out = step_size(&comp, 0, &config, &[100.0, 101.0], &[15.0, 11.0], &realized, &mut rng).unwrap();
        assert_eq!(out.step, 11.0);
        let ev = out.blocked.unwrap();
        assert_eq!(ev.ahead, 1);
        assert_eq!(ev.own_last_step, 15.0);
        assert_eq!(ev.ahead_last_step, 11.0);

        // Same geometry with interactions disabled: free draw.
        config.interactions = false;
        let out = step_size(&comp, 0, &config, &[100.0, 101.0], &[15.0, 11.0], &realized, &mut rng).unwrap();
        assert!(out.blocked.is_none());
        assert!((10.0..20.0).contains(&out.step));
    }

    /// Sampling oracle: with responsiveness 0.9, preference 0.5 and U(10,20)
    /// draws, the mean free step over 1e5 draws is 0.9*0.5*15 = 6.75.
    #[test]
    fn step_size_mean_oracle() {
        let mut config = RaceConfig::new("t", 1e9, vec![0.5]);
        config.interactions = false;
        let mut comp = flat_competitor(0, 10.0, 20.0);
        comp.prefs = vec![0.0]; // preference 0.5 against factor 0.5
        let realized = realized_flat(0.9);
        let mut rng = crate::seeds::SeedMix::new(11).rng();
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += step_size(&comp, 0, &config, &[0.0], &[15.0], &realized, &mut rng).unwrap().step;
        }
        let mean = sum / n as f64;
        assert!((mean - 6.75).abs() / 6.75 < 0.01, "mean {mean}");
    }

    #[test]
    fn deterministic_single_competitor_race() {
        // U(10,10) steps over 100 m: finishes at exactly t = 10 ticks.
        let config = RaceConfig::new("solo", 100.0, vec![0.5]);
        let field = vec![flat_competitor(0, 10.0, 10.0)];
        let mut streams = RaceStreams::derive(1, "solo", &field);
        let record = run_race(&config, &field, &mut streams).unwrap();
        assert_eq!(record.finish_times, vec![10.0]);
        assert_eq!(record.finish_order, vec![0]);
        assert_eq!(record.positions.len(), 11); // t = 0..=10
        assert_eq!(record.positions[3][0], 30.0);
        assert_eq!(record.positions[10][0], 100.0);
    }

    #[test]
    fn advance_after_finish_is_an_error() {
        let config = RaceConfig::new("solo", 30.0, vec![0.5]);
        let field = vec![flat_competitor(0, 10.0, 10.0)];
        let mut streams = RaceStreams::derive(1, "solo", &field);
        let mut state = RaceState::start(&config, &field);
        while !state.race_over() {
            advance_tick(&mut state, &config, &field, &mut streams).unwrap();
        }
        assert!(matches!(advance_tick(&mut state, &config, &field, &mut streams), Err(RaceError::RaceOver)));
    }

    #[test]
    fn positions_monotone_and_frozen_at_line() {
        let config = RaceConfig::new("r", 200.0, vec![0.5]);
        let field = vec![flat_competitor(0, 8.0, 16.0), flat_competitor(1, 8.0, 16.0), flat_competitor(2, 8.0, 16.0)];
        let mut streams = RaceStreams::derive(77, "r", &field);
        let record = run_race(&config, &field, &mut streams).unwrap();
        for c in 0..field.len() {
            let mut finished = false;
            for w in record.positions.windows(2) {
                if finished {
                    assert_eq!(w[1][c], 200.0, "finished competitor stays on the line");
                } else {
                    assert!(w[1][c] > w[0][c], "unfinished competitor must advance");
                    finished = w[1][c] == 200.0;
                }
            }
            assert_eq!(*record.positions.last().unwrap().get(c).unwrap(), 200.0);
        }
    }

    #[test]
    fn t0_snapshot_reproduces_run_race() {
        let config = RaceConfig::new("rep", 150.0, vec![0.5]);
        let field = vec![flat_competitor(0, 9.0, 14.0), flat_competitor(1, 9.0, 14.0)];
        let mut s1 = RaceStreams::derive(21, "rep", &field);
        let record = run_race(&config, &field, &mut s1).unwrap();

        let mut s2 = RaceStreams::derive(21, "rep", &field);
        let order = run_race_from(RaceState::start(&config, &field), &config, &field, &mut s2).unwrap();
        assert_eq!(order, record.finish_order);
    }

    #[test]
    fn snapshot_mismatch_is_an_error() {
        let config = RaceConfig::new("m", 100.0, vec![0.5]);
        let field = vec![flat_competitor(0, 10.0, 20.0), flat_competitor(1, 10.0, 20.0)];
        let short = vec![flat_competitor(0, 10.0, 20.0)];
        let state = RaceState::start(&config, &field);
        let mut streams = RaceStreams::derive(3, "m", &short);
        assert!(matches!(
            run_race_from(state, &config, &short, &mut streams),
            Err(RaceError::SnapshotMismatch(_))
        ));
    }

    /// With interactions disabled a competitor's trajectory depends only on
    /// its own parameters and stream, not on who else is racing.
    #[test]
    fn ablation_trajectory_independent_of_field() {
        let mut config = RaceConfig::new("ab", 300.0, vec![0.5]);
        config.interactions = false;
        let hero = || {
            let mut c = flat_competitor(7, 9.0, 13.0);
            c.phases = PhaseSchedule {
                phases: vec![Phase { until_frac: 0.4, level: 0.8 }, Phase { until_frac: 1.0, level: 0.95 }],
                boundary_sd: 0.05,
                level_sd: 0.03,
            };
            c
        };
        let rival_a = flat_competitor(1, 12.0, 18.0);
        let mut rival_b = flat_competitor(2, 6.0, 9.0);
        rival_b.step = StepDistribution::LogNormal { mu: 2.3, sigma: 0.2 };

        let run = |field: Vec<Competitor>| {
            let mut streams = RaceStreams::derive(42, "ab", &field);
            let record = run_race(&config, &field, &mut streams).unwrap();
            let hero_idx = field.iter().position(|c| c.id == 7).unwrap();
            record.positions.iter().map(|row| row[hero_idx]).collect::<Vec<f64>>()
        };
        let solo = run(vec![hero()]);
        let with_a = run(vec![hero(), rival_a]);
        let with_b = run(vec![rival_b, hero()]);
        let shortest = solo.len().min(with_a.len()).min(with_b.len());
        assert!(shortest > 5);
        assert_eq!(solo[..shortest], with_a[..shortest]);
        assert_eq!(solo[..shortest], with_b[..shortest]);
    }

    #[test]
    fn finish_order_ties_break_to_lower_id() {
        let field = vec![flat_competitor(5, 1.0, 2.0), flat_competitor(2, 1.0, 2.0), flat_competitor(9, 1.0, 2.0)];
        let order = finish_order(&[12.0, 12.0, 11.0], &field);
        assert_eq!(order, vec![2, 1, 0]);
    }

    /// A finisher can cross mid-deceleration and park on the line with a tiny
    /// remembered pace. A follower inside the blocking window then inherits
    /// responsiveness * min(own pace, parked pace) each tick; with
    /// responsiveness below 1 that recurrence decays geometrically, and
    /// without the MIN_PACE floor the follower's total remaining travel
    /// (0.01 * 0.7/0.3 ~ 0.023m here) would converge short of the 3m gap.
    #[test]
    fn follower_trapped_behind_a_finisher_still_reaches_the_line() {
        let config = RaceConfig::new("trap", 100.0, vec![0.5]);
        let slowpoke = |id| {
            let mut c = flat_competitor(id, 10.0, 14.0);
            c.phases = PhaseSchedule::flat(0.7);
            c
        };
        let field = vec![slowpoke(0), slowpoke(1)];
        let state = RaceState {
            tick: 12,
            positions: vec![100.0, 97.0],
            last_steps: vec![0.01, 0.01],
            finish_times: vec![Some(9.0), None],
            realized_phases: None,
        };
        let mut streams = RaceStreams::derive(11, "trap", &field);
        let order = run_race_from(state, &config, &field, &mut streams).unwrap();
        assert_eq!(order, vec![0, 1]);
    }
}
