//! Ready-made race fields and bettor populations used by the CLI defaults,
//! examples, and the heavier end-to-end tests.

use crate::bettors::{BettorSpec, Strategy};
use crate::prediction::BeliefProfile;
use crate::race::{Competitor, Phase, PhaseSchedule, RaceConfig};

fn phased(phases: &[(f64, f64)], boundary_sd: f64, level_sd: f64) -> PhaseSchedule {
    PhaseSchedule {
        phases: phases.iter().map(|&(until_frac, level)| Phase { until_frac, level }).collect(),
        boundary_sd,
        level_sd,
    }
}

/// Three-horse 2000 m showcase. Circle runs strong and steady, Triangle a
/// touch slower, and Square starts very slowly (catching the pack mid-race,
/// where it tends to get blocked) before fading late: the modal result is
/// Circle, Triangle, Square, with Square's fortunes swinging the most.
pub fn showcase_race() -> (RaceConfig, Vec<Competitor>) {
    let config = RaceConfig::new("showcase-3h", 2000.0, vec![0.5]);
    let mut circle = Competitor::basic(0, "Circle", 11.0, 16.0, vec![0.5]);
    circle.phases = phased(&[(1.0, 0.95)], 0.0, 0.01);
    let mut triangle = Competitor::basic(1, "Triangle", 11.0, 16.0, vec![0.5]);
    triangle.phases = phased(&[(1.0, 0.88)], 0.0, 0.01);
    let mut square = Competitor::basic(2, "Square", 11.0, 16.0, vec![0.5]);
    square.phases = phased(&[(0.21, 0.70), (0.625, 1.0), (1.0, 0.78)], 0.02, 0.015);
    (config, vec![circle, triangle, square])
}

/// Six-horse 2000 m field with a spread of profiles: front-runners, a
/// mid-pack, and closers that finish fast.
pub fn six_horse_race() -> (RaceConfig, Vec<Competitor>) {
    let config = RaceConfig::new("field-6h", 2000.0, vec![0.4, 0.7]);
    let profiles: [(&str, f64, f64, &[(f64, f64)], [f64; 2]); 6] = [
        ("Red", 11.0, 16.0, &[(1.0, 0.93)], [0.40, 0.65]),
        ("Orange", 11.5, 15.5, &[(0.5, 0.97), (1.0, 0.88)], [0.45, 0.70]),
        ("Yellow", 11.0, 16.0, &[(1.0, 0.90)], [0.35, 0.75]),
        ("Green", 10.5, 16.5, &[(0.4, 0.85), (1.0, 0.95)], [0.40, 0.70]),
        ("Blue", 11.0, 15.5, &[(0.3, 0.80), (0.7, 0.92), (1.0, 0.97)], [0.45, 0.65]),
        ("Indigo", 11.5, 16.0, &[(1.0, 0.87)], [0.30, 0.70]),
    ];
    let field = profiles
        .iter()
        .enumerate()
        .map(|(id, (name, lo, hi, phases, prefs))| {
            let mut c = Competitor::basic(id as u32, name, *lo, *hi, prefs.to_vec());
            c.phases = phased(phases, 0.02, 0.01);
            c
        })
        .collect();
    (config, field)
}

/// How many bettors of each strategy a generated population contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PopulationMix {
    pub zi: u32,
    pub lw: u32,
    pub ud: u32,
    pub btf: u32,
    pub linex: u32,
    pub rb: u32,
    pub rp: u32,
}

impl PopulationMix {
    pub fn total(&self) -> u32 {
        self.zi + self.lw + self.ud + self.btf + self.linex + self.rb + self.rp
    }
}

/// 200 bettors dominated by noise traders, with smaller heuristic and
/// model-driven contingents.
impl Default for PopulationMix {
    fn default() -> Self {
        PopulationMix { zi: 70, lw: 30, ud: 25, btf: 25, linex: 20, rb: 20, rp: 10 }
    }
}

/// Builds the population with ids 1..=total. The model-driven strategies
/// revise less often to balance their dry-run cost, mirroring how a slower,
/// deliberate trader behaves next to noise flow.
pub fn population(mix: &PopulationMix) -> Vec<BettorSpec> {
    let mut specs = Vec::with_capacity(mix.total() as usize);
    let mut next_id = 1u32;
    let mut push_group = |count: u32, make: &dyn Fn() -> Strategy, revise_s: f64| {
        for _ in 0..count {
            let mut spec = BettorSpec::new(next_id, make());
            spec.revise_interval_s = revise_s;
            specs.push(spec);
            next_id += 1;
        }
    };
    push_group(mix.zi, &|| Strategy::Zi, 2.0);
    push_group(mix.lw, &|| Strategy::Lw, 2.0);
    push_group(mix.ud, &|| Strategy::Ud { distance: 25.0 }, 2.0);
    push_group(mix.btf, &|| Strategy::Btf, 2.0);
    push_group(mix.linex, &|| Strategy::Linex { window_s: 10.0 }, 4.0);
    push_group(
        mix.rb,
        &|| Strategy::Rb { bias_strength: 0.35, stake_multiples: vec![2, 5, 10], profile: BeliefProfile::exact(10) },
        10.0,
    );
    push_group(mix.rp, &|| Strategy::Rp { profile: BeliefProfile::exact(20) }, 15.0);
    specs
}

pub fn standard_population() -> Vec<BettorSpec> {
    population(&PopulationMix::default())
}
