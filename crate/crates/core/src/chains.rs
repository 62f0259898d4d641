//! The driven-dissipative chain and the coupling constructions built on shared
//! instruction tapes.

use crate::lattice::{Configuration, LatticeState, Outcome, Region, SegmentSpec, SiteSet, ToppleMode};
use crate::stabilizer::{
    force_walk_out, run_until, stabilize, stabilize_state, Fuel, RunEnd, StabilizationReport,
    StabilizeError, TopplingPolicy,
};
use crate::tape::{hash3, uniform_below, unit_f64, EjectorOverlay, Tape};

const DRIVER_TAG: u64 = 0xD1;
const HOLE_TAG: u64 = 0x40;
const PLACEMENT_TAG: u64 = 0x91;

/// Stable configuration of the chain on `{1, ..., n}`, with the odometer so
/// that successive steps keep reading fresh instructions.
#[derive(Clone, Debug)]
pub struct ChainState {
    n: u64,
    lattice: LatticeState,
    t: u64,
    driver_seed: u64,
}

impl ChainState {
    /// Empty segment at time 0. `driver_seed` feeds the choice of the site
    /// receiving each new particle and nothing else.
    pub fn empty(n: u64, driver_seed: u64) -> Self {
        assert!(n >= 1, "segment length must be positive");
        let seg = SegmentSpec::first(n);
        Self {
            n,
            lattice: LatticeState::with_window(Configuration::with_window(seg), seg),
            t: 0,
            driver_seed,
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn segment(&self) -> SegmentSpec {
        SegmentSpec::first(self.n)
    }

    pub fn config(&self) -> &Configuration {
        &self.lattice.config
    }

    pub fn lattice(&self) -> &LatticeState {
        &self.lattice
    }

    /// Particles (all sleeping) currently in the segment.
    pub fn particles(&self) -> u64 {
        self.lattice.config.particle_count(self.segment())
    }

    /// Site receiving the particle of step `t + 1`.
    pub fn driver_site(&self) -> i64 {
        1 + uniform_below(hash3(self.driver_seed, self.t, DRIVER_TAG), self.n) as i64
    }
}

/// What happened during one chain step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepSummary {
    pub site: i64,
    pub exits: u64,
    pub topplings: u64,
}

/// Adds an active particle at a uniform site and stabilizes with killing at
/// both ends of the segment.
pub fn dd_step<T: Tape>(state: &mut ChainState, tape: &T, fuel: u64) -> Result<StepSummary, StabilizeError> {
    let site = state.driver_site();
    let seg = state.segment();
    let exits_before = state.lattice.exits.total();
    let topplings_before = state.lattice.topplings;
    state.lattice.add_particle(site);
    stabilize_state(&mut state.lattice, Region::Segment(seg), tape, TopplingPolicy::SiteStack, &mut Fuel::new(fuel))?;
    state.t += 1;
    Ok(StepSummary {
        site,
        exits: state.lattice.exits.total() - exits_before,
        topplings: state.lattice.topplings - topplings_before,
    })
}

/// One exact sample of the stationary sleeper count: stabilize one active
/// particle per site of `{1, ..., n}` with killing.
pub fn sample_stationary<T: Tape>(n: u64, tape: &T, fuel: u64) -> Result<u64, StabilizeError> {
    let seg = SegmentSpec::first(n);
    Ok(stabilize(Configuration::all_active(seg), seg, tape, TopplingPolicy::SiteStack, fuel)?.sleepers_remaining)
}

/// Particle counts `Y_0, ..., Y_T` of the chain started empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HockeyTrajectory {
    pub n: u64,
    pub values: Vec<u64>,
}

impl HockeyTrajectory {
    /// `Y_t` for `t = ceil(rho * n)`, if the trajectory is long enough.
    pub fn at_density(&self, rho: f64) -> Option<u64> {
        let t = (rho * self.n as f64 - 1e-9).ceil().max(0.0) as usize;
        self.values.get(t).copied()
    }
}

pub fn hockey_run<T: Tape>(
    n: u64,
    steps: u64,
    tape: &T,
    driver_seed: u64,
    fuel: u64,
) -> Result<HockeyTrajectory, StabilizeError> {
    let mut state = ChainState::empty(n, driver_seed);
    let mut values = Vec::with_capacity(steps as usize + 1);
    values.push(0);
    for _ in 0..steps {
        dd_step(&mut state, tape, fuel)?;
        values.push(state.particles());
    }
    Ok(HockeyTrajectory { n, values })
}

/// `t` particles dropped independently and uniformly on `{1, ..., n}`.
pub fn uniform_placement(n: u64, t: u64, placement_seed: u64) -> Configuration {
    let seg = SegmentSpec::first(n);
    let mut c = Configuration::with_window(seg);
    for i in 0..t {
        let x = 1 + uniform_below(hash3(placement_seed, i, PLACEMENT_TAG), n) as i64;
        c.add_active(x, 1);
    }
    c
}

/// A retained count `y` distributed as `Y_t` together with a sample `s` of
/// `S_n`, coupled so that `y <= s` on every tape.
///
/// `t` uniform particles are placed and every multiply occupied site is
/// toppled until each site holds at most one (active) particle. From there,
/// `s` legally stabilizes one particle per site, while `y` first forces the
/// particles on the sites left empty out of the segment and then legally
/// stabilizes the rest. `y` reads a longer odometer than `s`, so fewer
/// particles survive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DominationPair {
    pub y: u64,
    pub s: u64,
}

pub fn hockey_domination_pair<T: Tape>(
    n: u64,
    t: u64,
    tape: &T,
    placement_seed: u64,
    fuel: u64,
) -> Result<DominationPair, StabilizeError> {
    let seg = SegmentSpec::first(n);
    let region = Region::Segment(seg);
    let mut fuel = Fuel::new(fuel);
    let mut spread = LatticeState::with_window(uniform_placement(n, t, placement_seed), seg);
    let mut crowded: Vec<i64> = seg.sites().filter(|&x| spread.config.cell(x).count >= 2).collect();
    while let Some(x) = crowded.pop() {
        while spread.config.cell(x).count >= 2 {
            if !fuel.take() {
                return Err(StabilizeError::FuelExhausted { topplings: spread.topplings, partial: None });
            }
            let ev = spread.topple(tape, x, ToppleMode::Legal, region)?;
            if let Outcome::Moved { to, .. } = ev.outcome {
                if spread.config.cell(to).count == 2 {
                    crowded.push(to);
                }
            }
        }
    }
    let spread_config = spread.config;
    let carpet = || {
        let mut st = LatticeState::with_window(Configuration::all_active(seg), seg);
        st.odometer = spread.odometer.clone();
        st
    };
    let mut legal = carpet();
    stabilize_state(&mut legal, region, tape, TopplingPolicy::SiteStack, &mut fuel)?;
    let mut forced = carpet();
    for x in seg.sites().filter(|&x| spread_config.cell(x).count == 0) {
        force_walk_out(&mut forced, x, seg, tape, &mut fuel)?;
    }
    stabilize_state(&mut forced, region, tape, TopplingPolicy::SiteStack, &mut fuel)?;
    Ok(DominationPair { y: forced.config.sleeping_count(), s: legal.config.sleeping_count() })
}

/// Sleeper counts on one shared tape for `V = {-n, ..., m}`, `L = {-n, ..., -1}`,
/// `R = {1, ..., m}`, and `V` again with the origin turned into an ejector
/// from instruction `k` on, for `k = 1, ..., K`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EjectorCouplingResult {
    pub n: u64,
    pub m: u64,
    pub s_v: u64,
    pub s_l: u64,
    pub s_r: u64,
    /// `(k, N_k)` in increasing `k`; always includes `k = 1`.
    pub n_k: Vec<(u64, u64)>,
    /// Instructions used at the origin when stabilizing `1_V` on the plain tape.
    pub base_pivot_odometer: u64,
}

impl EjectorCouplingResult {
    /// Largest threshold evaluated.
    pub fn depth(&self) -> u64 {
        self.n_k.last().map_or(0, |&(k, _)| k)
    }

    pub fn n_at(&self, k: u64) -> Option<u64> {
        self.n_k.iter().find(|&&(j, _)| j == k).map(|&(_, n)| n)
    }

    /// The deepest overlay was never reached, so `N_K = S_V` must hold.
    pub fn overlay_exceeds_base(&self) -> bool {
        self.depth() > self.base_pivot_odometer
    }

    /// `N_1 = S_L + S_R`.
    pub fn split_identity_holds(&self) -> bool {
        self.n_at(1) == Some(self.s_l + self.s_r)
    }

    /// `N_K = S_V`; `None` when the overlay was too shallow to check.
    pub fn full_identity_holds(&self) -> Option<bool> {
        self.overlay_exceeds_base().then(|| self.n_k.last().map(|&(_, n)| n) == Some(self.s_v))
    }
}

/// `V = {-n, ..., m}` with the pivot at 0.
pub fn ejector_segments(n: u64, m: u64) -> (SegmentSpec, SegmentSpec, SegmentSpec) {
    let (n, m) = (n as i64, m as i64);
    (SegmentSpec::new(-n, m), SegmentSpec::new(-n, -1), SegmentSpec::new(1, m))
}

fn ejector_run<T: Tape>(
    n: u64,
    m: u64,
    tape: &T,
    fuel: u64,
    thresholds: impl FnOnce(u64) -> Vec<u64>,
) -> Result<EjectorCouplingResult, StabilizeError> {
    assert!(n >= 1 && m >= 1, "both sides need at least one site");
    let (v, l, r) = ejector_segments(n, m);
    let policy = TopplingPolicy::SiteStack;
    let base = stabilize(Configuration::all_active(v), v, tape, policy, fuel)?;
    let s_l = stabilize(Configuration::all_active(l), l, tape, policy, fuel)?.sleepers_remaining;
    let s_r = stabilize(Configuration::all_active(r), r, tape, policy, fuel)?.sleepers_remaining;
    let base_pivot_odometer = base.odometer.get(0);
    let mut n_k = Vec::new();
    for k in thresholds(base_pivot_odometer) {
        let overlay = EjectorOverlay::new(tape, 0, k);
        n_k.push((k, stabilize(Configuration::all_active(v), v, &overlay, policy, fuel)?.sleepers_remaining));
    }
    Ok(EjectorCouplingResult { n, m, s_v: base.sleepers_remaining, s_l, s_r, n_k, base_pivot_odometer })
}

/// Runs the ejector coupling for every threshold `k = 1, ..., K`. `depth`
/// defaults to one more than the base odometer at the origin, which makes
/// `N_K = S_V` checkable on every tape.
pub fn ejector_coupling<T: Tape>(
    n: u64,
    m: u64,
    depth: Option<u64>,
    tape: &T,
    fuel: u64,
) -> Result<EjectorCouplingResult, StabilizeError> {
    ejector_run(n, m, tape, fuel, |base| {
        let depth = depth.unwrap_or(base + 1);
        assert!(depth >= 1, "overlay depth starts at 1");
        (1..=depth).collect()
    })
}

/// As [`ejector_coupling`] with the default depth, evaluating only the two
/// thresholds the identities need: `k = 1` and `k = K`.
pub fn ejector_identities<T: Tape>(n: u64, m: u64, tape: &T, fuel: u64) -> Result<EjectorCouplingResult, StabilizeError> {
    ejector_run(n, m, tape, fuel, |base| if base == 0 { vec![1] } else { vec![1, base + 1] })
}

/// Why the leftmost-priority first step of the ejector argument stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOneEnd {
    /// `k` instructions were used at the origin. Takes precedence when the
    /// segment becomes stable on that same toppling.
    PivotReached,
    Stable,
}

/// Topples the leftmost unstable site of `V = {-n, ..., m}` under the overlay
/// with threshold `k` until `k` instructions have been used at the origin or
/// the segment is stable. Returns the intermediate state.
pub fn ejector_step_one<T: Tape>(
    n: u64,
    m: u64,
    k: u64,
    tape: &T,
    fuel: u64,
) -> Result<(LatticeState, StepOneEnd), StabilizeError> {
    let (v, _, _) = ejector_segments(n, m);
    let overlay = EjectorOverlay::new(tape, 0, k);
    let mut state = LatticeState::with_window(Configuration::all_active(v), v);
    let end = run_until(&mut state, Region::Segment(v), &overlay, TopplingPolicy::Leftmost, &mut Fuel::new(fuel), |s| {
        s.odometer.get(0) >= k
    })?;
    let end = match end {
        RunEnd::Stopped => StepOneEnd::PivotReached,
        RunEnd::Stable => StepOneEnd::Stable,
    };
    Ok((state, end))
}

/// Bernoulli holes on ℤ, read lazily from a seed.
#[derive(Clone, Copy, Debug)]
pub struct HoleField {
    seed: u64,
    density: f64,
}

impl HoleField {
    pub fn new(seed: u64, density: f64) -> Self {
        assert!(density > 0.0 && density < 1.0, "hole density must lie in (0,1)");
        Self { seed, density }
    }

    pub fn is_hole(&self, site: i64) -> bool {
        unit_f64(hash3(self.seed, site as u64, HOLE_TAG)) < self.density
    }

    pub fn count_in(&self, seg: SegmentSpec) -> u64 {
        seg.sites().filter(|&x| self.is_hole(x)).count() as u64
    }
}

/// `k` particles parked in `k` holes after walking from the origin.
#[derive(Clone, Debug)]
pub struct HoleSpread {
    /// Sites visited while spreading.
    pub interval: SegmentSpec,
    /// One active particle per filled hole.
    pub parked: Configuration,
    /// Full state, odometer included, for continuing the stabilization.
    pub state: LatticeState,
}

/// Sends `k` particles from the origin, one after the other, each walking with
/// acceptable topplings until it stands on a hole no other particle has filled.
/// A sleep instruction is consumed without moving the walker.
pub fn spread_to_holes<T: Tape>(
    k: u32,
    holes: HoleField,
    tape: &T,
    fuel: u64,
) -> Result<HoleSpread, StabilizeError> {
    assert!(k >= 1, "need at least one particle");
    let mut state = LatticeState::new(Configuration::point(0, k));
    let mut filled = SiteSet::new();
    let mut parked = Configuration::new();
    let mut fuel = fuel;
    for _ in 0..k {
        let mut at = 0i64;
        while !(holes.is_hole(at) && !filled.contains(at)) {
            if fuel == 0 {
                return Err(StabilizeError::FuelExhausted { topplings: state.topplings, partial: None });
            }
            fuel -= 1;
            let ev = state.topple(tape, at, ToppleMode::Acceptable, Region::Line)?;
            if let Outcome::Moved { to, .. } = ev.outcome {
                at = to;
            }
        }
        filled.insert(at);
        parked.add_active(at, 1);
    }
    let interval = state.visited.hull().expect("origin is visited");
    Ok(HoleSpread { interval, parked, state })
}

/// Spreads `k` particles into holes, then stabilizes them legally on ℤ.
/// The returned report's visited set is the union over both stages.
pub fn spread_then_stabilize<T: Tape>(
    k: u32,
    holes: HoleField,
    tape: &T,
    fuel: u64,
) -> Result<(HoleSpread, StabilizationReport), StabilizeError> {
    let spread = spread_to_holes(k, holes, tape, fuel)?;
    let mut state = spread.state.clone();
    let used = state.topplings;
    let mut fuel = Fuel::new(fuel.saturating_sub(used));
    stabilize_state(&mut state, Region::Line, tape, TopplingPolicy::SiteStack, &mut fuel)?;
    let report = StabilizationReport {
        sleepers_remaining: state.config.sleeping_count(),
        final_config: state.config,
        odometer: state.odometer,
        exits: state.exits,
        visited: state.visited,
        topplings: state.topplings,
        initial_particles: k as u64,
    };
    report.check_conservation()?;
    Ok((spread, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stabilizer::DEFAULT_FUEL;
    use crate::tape::{Instruction, InstructionTape, ModelParams, ScriptedTape};

    fn tape(seed: u64) -> InstructionTape {
        InstructionTape::new(seed, ModelParams::default())
    }

    #[test]
    fn single_site_chain_first_instruction_decides() {
        let sleepy = ScriptedTape::new(tape(1)).script(1, vec![Instruction::Sleep]);
        let mut st = ChainState::empty(1, 9);
        dd_step(&mut st, &sleepy, 100).unwrap();
        assert_eq!(st.particles(), 1);
        assert!(st.config().cell(1).asleep);
        let jumpy = ScriptedTape::new(tape(1)).script(1, vec![Instruction::JumpRight]);
        let mut st = ChainState::empty(1, 9);
        dd_step(&mut st, &jumpy, 100).unwrap();
        assert_eq!(st.particles(), 0);
    }

    #[test]
    fn adding_onto_sleeper_wakes_it() {
        // site 1: sleep, then jump right twice
        let t = ScriptedTape::new(tape(2)).script(
            1,
            vec![Instruction::Sleep, Instruction::JumpRight, Instruction::Sleep],
        );
        let mut st = ChainState::empty(1, 0);
        dd_step(&mut st, &t, 100).unwrap();
        assert_eq!(st.particles(), 1);
        let step = dd_step(&mut st, &t, 100).unwrap();
        // two active particles: one jumps out, the other sleeps
        assert_eq!(step.exits, 1);
        assert_eq!(step.topplings, 2);
        assert_eq!(st.particles(), 1);
    }

    #[test]
    fn chain_gains_at_most_one_particle_per_step() {
        let t = tape(3);
        let mut st = ChainState::empty(20, 5);
        let mut prev = 0;
        for _ in 0..200 {
            dd_step(&mut st, &t, DEFAULT_FUEL).unwrap();
            let now = st.particles();
            assert!(now <= prev + 1);
            assert!(st.config().is_stable_in(st.segment()));
            prev = now;
        }
    }

    #[test]
    fn hockey_trajectory_basics() {
        let t = tape(4);
        let h = hockey_run(10, 0, &t, 1, DEFAULT_FUEL).unwrap();
        assert_eq!(h.values, vec![0]);
        let h = hockey_run(10, 40, &t, 1, DEFAULT_FUEL).unwrap();
        assert_eq!(h.values.len(), 41);
        for (i, &y) in h.values.iter().enumerate() {
            assert!(y <= i as u64);
            assert!(y <= 10);
        }
        assert_eq!(h.at_density(0.0), Some(0));
        assert_eq!(h.at_density(2.0), Some(h.values[20]));
        assert_eq!(h.at_density(0.25), Some(h.values[3]));
    }

    #[test]
    fn stationary_sample_in_range() {
        for seed in 0..100 {
            let s = sample_stationary(7, &tape(seed), DEFAULT_FUEL).unwrap();
            assert!(s <= 7);
        }
    }

    #[test]
    fn ejector_identities_small() {
        for seed in 0..300 {
            let r = ejector_coupling(1, 1, None, &tape(seed), DEFAULT_FUEL).unwrap();
            assert!(r.split_identity_holds(), "{r:?}");
            assert_eq!(r.full_identity_holds(), Some(true), "{r:?}");
            assert!(r.s_v <= 3 && r.n_k.iter().all(|&(_, x)| x <= 3));
        }
    }

    #[test]
    fn shallow_overlay_is_flagged() {
        let t = tape(11);
        let r = ejector_coupling(4, 4, Some(1), &t, DEFAULT_FUEL).unwrap();
        if r.base_pivot_odometer >= 1 {
            assert_eq!(r.full_identity_holds(), None);
        }
        assert!(r.split_identity_holds());
    }

    #[test]
    fn identities_match_the_full_sequence_at_its_ends() {
        for seed in 0..200 {
            let t = tape(seed);
            let full = ejector_coupling(6, 4, None, &t, DEFAULT_FUEL).unwrap();
            let ends = ejector_identities(6, 4, &t, DEFAULT_FUEL).unwrap();
            assert_eq!(ends.depth(), full.depth());
            assert_eq!(ends.n_at(1), full.n_at(1));
            assert_eq!(ends.n_k.last(), full.n_k.last());
            assert_eq!(ends.full_identity_holds(), full.full_identity_holds());
        }
    }

    #[test]
    fn hole_at_origin_parks_immediately() {
        let holes = (0..).map(|s| HoleField::new(s, 0.5)).find(|h| h.is_hole(0)).unwrap();
        let s = spread_to_holes(1, holes, &tape(5), 100).unwrap();
        assert_eq!(s.interval, SegmentSpec::new(0, 0));
        assert_eq!(s.parked.cell(0).count, 1);
        assert_eq!(s.state.topplings, 0);
    }

    #[test]
    fn spread_fills_exactly_k_holes() {
        for seed in 0..50 {
            let holes = HoleField::new(seed, 0.6);
            let s = spread_to_holes(15, holes, &tape(seed), DEFAULT_FUEL).unwrap();
            assert_eq!(s.parked.particle_count(s.interval), 15);
            assert_eq!(holes.count_in(s.interval), 15);
            assert_eq!(s.state.config, s.parked);
        }
    }

    #[test]
    fn domination_pair_is_ordered() {
        for seed in 0..200 {
            let p = hockey_domination_pair(12, 15, &tape(seed), seed ^ 77, DEFAULT_FUEL).unwrap();
            assert!(p.y <= p.s, "{p:?}");
        }
    }
}
