//! Legal stabilization under pluggable toppling orders.
//!
//! By the Abelian property every legal order ends in the same configuration
//! with the same odometer; the order only changes how fast we get there and
//! which intermediate states can be observed. [`TopplingPolicy::SiteStack`] is
//! the fast default used by the experiments, the ordered policies exist for the
//! staged procedures and for cross-checking.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::lattice::{
    Configuration, ExitKind, ExitSide, ExitTally, LatticeError, LatticeState, Odometer, Outcome,
    Region, SegmentSpec, SiteSet, ToppleMode,
};
use crate::kernel::{JobStatus, StackJob};
use crate::tape::{hash3, uniform_below, Tape};

pub const DEFAULT_FUEL: u64 = 1_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[derive(Default)]
pub enum TopplingPolicy {
    Leftmost,
    Rightmost,
    /// Uniformly random unstable site; draws come from `seed`, not from the tape.
    RandomUnstable { seed: u64 },
    /// Topple the most recently destabilized site until it is stable.
    #[default]
    SiteStack,
    /// Leftmost until `left` left exits, then rightmost until `right` right
    /// exits, then anything. See [`staged_stabilize`].
    StagedLeftRight { left: u64, right: u64 },
}


#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilizeError {
    #[error("fuel exhausted after {topplings} topplings")]
    FuelExhausted { topplings: u64, partial: Option<Box<StabilizationReport>> },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("particle conservation violated: {initial} particles at start, {accounted} accounted for")]
    Conservation { initial: u64, accounted: u64 },
    #[error("no particle at site {0}")]
    NoParticle(i64),
}

impl StabilizeError {
    pub fn is_fuel_exhausted(&self) -> bool {
        matches!(self, StabilizeError::FuelExhausted { .. })
    }
}

/// Outcome of a stabilization (or, inside [`StabilizeError::FuelExhausted`],
/// of an interrupted one).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StabilizationReport {
    pub final_config: Configuration,
    pub odometer: Odometer,
    pub exits: ExitTally,
    pub visited: SiteSet,
    /// Sleeping particles left in the region.
    pub sleepers_remaining: u64,
    pub topplings: u64,
    pub initial_particles: u64,
}

impl StabilizationReport {
    fn from_state(state: LatticeState, region: Region, initial_particles: u64) -> Self {
        let sleepers_remaining = match region {
            Region::Segment(seg) => seg
                .sites()
                .filter(|&x| state.config.cell(x).asleep)
                .count() as u64,
            Region::Line => state.config.sleeping_count(),
        };
        Self {
            final_config: state.config,
            odometer: state.odometer,
            exits: state.exits,
            visited: state.visited,
            sleepers_remaining,
            topplings: state.topplings,
            initial_particles,
        }
    }

    pub fn exits_left(&self) -> u64 {
        self.exits.left
    }

    pub fn exits_right(&self) -> u64 {
        self.exits.right
    }

    pub fn exits_ejected(&self) -> u64 {
        self.exits.ejected
    }

    /// Total number of particles that left the region.
    pub fn exits_total(&self) -> u64 {
        self.exits.total()
    }

    pub(crate) fn check_conservation(&self) -> Result<(), StabilizeError> {
        let accounted = self.exits.total() + self.final_config.total_particles();
        if accounted != self.initial_particles {
            return Err(StabilizeError::Conservation { initial: self.initial_particles, accounted });
        }
        Ok(())
    }
}

/// Remaining topplings allowed.
#[derive(Clone, Copy, Debug)]
pub struct Fuel(u64);

impl Fuel {
    pub fn new(topplings: u64) -> Self {
        Fuel(topplings)
    }

    pub fn remaining(&self) -> u64 {
        self.0
    }

    /// Spends one toppling; false when empty.
    #[inline]
    pub fn take(&mut self) -> bool {
        if self.0 == 0 {
            return false;
        }
        self.0 -= 1;
        true
    }
}

/// Why [`run_until`] returned.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunEnd {
    Stable,
    Stopped,
}

trait Scheduler {
    fn mark_unstable(&mut self, site: i64);
    fn mark_stable(&mut self, site: i64);
    fn next(&mut self) -> Option<i64>;
}

/// Unstable sites form a stack; only the toppled site can become stable, and it
/// is always the top.
struct SiteStack(Vec<i64>);

impl Scheduler for SiteStack {
    #[inline]
    fn mark_unstable(&mut self, site: i64) {
        self.0.push(site);
    }

    #[inline]
    fn mark_stable(&mut self, site: i64) {
        let top = self.0.pop();
        debug_assert_eq!(top, Some(site));
    }

    #[inline]
    fn next(&mut self) -> Option<i64> {
        self.0.last().copied()
    }
}

struct Ordered {
    set: BTreeSet<i64>,
    leftmost: bool,
}

impl Scheduler for Ordered {
    fn mark_unstable(&mut self, site: i64) {
        self.set.insert(site);
    }

    fn mark_stable(&mut self, site: i64) {
        self.set.remove(&site);
    }

    fn next(&mut self) -> Option<i64> {
        if self.leftmost {
            self.set.first().copied()
        } else {
            self.set.last().copied()
        }
    }
}

struct RandomPick {
    sites: Vec<i64>,
    index: HashMap<i64, usize>,
    seed: u64,
    draws: u64,
}

impl Scheduler for RandomPick {
    fn mark_unstable(&mut self, site: i64) {
        self.index.insert(site, self.sites.len());
        self.sites.push(site);
    }

    fn mark_stable(&mut self, site: i64) {
        let i = self.index.remove(&site).expect("site was scheduled");
        self.sites.swap_remove(i);
        if i < self.sites.len() {
            self.index.insert(self.sites[i], i);
        }
    }

    fn next(&mut self) -> Option<i64> {
        if self.sites.is_empty() {
            return None;
        }
        self.draws += 1;
        let i = uniform_below(hash3(self.seed, self.draws, 0), self.sites.len() as u64);
        Some(self.sites[i as usize])
    }
}

fn drive<T: Tape, S: Scheduler>(
    state: &mut LatticeState,
    tape: &T,
    region: Region,
    sched: &mut S,
    fuel: &mut Fuel,
    mut stop: impl FnMut(&LatticeState) -> bool,
) -> Result<RunEnd, StabilizeError> {
    let initial: Vec<i64> = state
        .config
        .unstable_sites()
        .filter(|&x| region.contains(x))
        .collect();
    for x in initial {
        sched.mark_unstable(x);
    }
    loop {
        if stop(state) {
            return Ok(RunEnd::Stopped);
        }
        let Some(site) = sched.next() else {
            return Ok(RunEnd::Stable);
        };
        if !fuel.take() {
            return Err(StabilizeError::FuelExhausted { topplings: state.topplings, partial: None });
        }
        let ev = state.topple(tape, site, ToppleMode::Legal, region)?;
        if !state.config.cell(site).is_unstable() {
            sched.mark_stable(site);
        }
        if let Outcome::Moved { to, dest_was_stable: true, .. } = ev.outcome {
            sched.mark_unstable(to);
        }
    }
}

/// Legal topplings inside `region` under `policy` until the region is stable
/// or `stop` returns true. `stop` is consulted before every toppling, so if it
/// holds at the moment the region becomes stable the run reports `Stopped`.
///
/// Particles outside `region` are never toppled.
pub fn run_until<T: Tape>(
    state: &mut LatticeState,
    region: Region,
    tape: &T,
    policy: TopplingPolicy,
    fuel: &mut Fuel,
    mut stop: impl FnMut(&LatticeState) -> bool,
) -> Result<RunEnd, StabilizeError> {
    match policy {
        TopplingPolicy::StagedLeftRight { left, right } => {
            let Region::Segment(seg) = region else {
                panic!("staged policy needs a segment");
            };
            run_staged(state, seg, tape, left, right, fuel, &mut stop, |_, _| {})
        }
        _ => run_ordered(state, region, tape, policy, fuel, &mut stop),
    }
}

fn run_ordered<T: Tape>(
    state: &mut LatticeState,
    region: Region,
    tape: &T,
    policy: TopplingPolicy,
    fuel: &mut Fuel,
    stop: &mut dyn FnMut(&LatticeState) -> bool,
) -> Result<RunEnd, StabilizeError> {
    match policy {
        TopplingPolicy::SiteStack => drive(state, tape, region, &mut SiteStack(Vec::new()), fuel, stop),
        TopplingPolicy::Leftmost | TopplingPolicy::Rightmost => {
            let mut s = Ordered { set: BTreeSet::new(), leftmost: policy == TopplingPolicy::Leftmost };
            drive(state, tape, region, &mut s, fuel, stop)
        }
        TopplingPolicy::RandomUnstable { seed } => {
            let mut s = RandomPick { sites: Vec::new(), index: HashMap::new(), seed, draws: 0 };
            drive(state, tape, region, &mut s, fuel, stop)
        }
        TopplingPolicy::StagedLeftRight { .. } => unreachable!("staged runs are dispatched by run_until"),
    }
}

/// Stabilizes the state in place.
pub fn stabilize_state<T: Tape>(
    state: &mut LatticeState,
    region: Region,
    tape: &T,
    policy: TopplingPolicy,
    fuel: &mut Fuel,
) -> Result<(), StabilizeError> {
    if policy == TopplingPolicy::SiteStack {
        let mut job = StackJob::new(state, tape, region, fuel.0);
        job.run();
        fuel.0 = job.fuel();
        return match job.status() {
            JobStatus::OutOfFuel => Err(StabilizeError::FuelExhausted { topplings: job.topplings(), partial: None }),
            _ => Ok(()),
        };
    }
    run_until(state, region, tape, policy, fuel, |_| false).map(|_| ())
}

fn window_for(initial: &Configuration, region: Region) -> SegmentSpec {
    match region {
        Region::Segment(seg) => seg,
        Region::Line => {
            let s = initial.support().unwrap_or(SegmentSpec::new(0, 0));
            let pad = (initial.total_particles() as i64 + 8).min(1 << 20);
            SegmentSpec::new(s.lo - pad, s.hi + pad)
        }
    }
}

fn finish(
    state: LatticeState,
    region: Region,
    initial_particles: u64,
    result: Result<(), StabilizeError>,
) -> Result<StabilizationReport, StabilizeError> {
    let report = StabilizationReport::from_state(state, region, initial_particles);
    match result {
        Ok(()) => {
            report.check_conservation()?;
            Ok(report)
        }
        Err(StabilizeError::FuelExhausted { topplings, .. }) => {
            Err(StabilizeError::FuelExhausted { topplings, partial: Some(Box::new(report)) })
        }
        Err(e) => Err(e),
    }
}

/// Fresh run state for `initial` in `region` and the particle count it starts with.
fn prepare(initial: Configuration, region: Region) -> (LatticeState, u64) {
    let window = window_for(&initial, region);
    let initial_particles = match region {
        Region::Segment(seg) => initial.particle_count(seg),
        Region::Line => initial.total_particles(),
    };
    let initial = match region {
        Region::Segment(seg) => initial.restricted(seg),
        Region::Line => initial,
    };
    (LatticeState::with_window(initial, window), initial_particles)
}

/// Stabilizes `initial` in `region`, killing particles that leave a segment.
///
/// Fails with [`StabilizeError::FuelExhausted`] (carrying the partial state)
/// after `fuel` topplings.
pub fn stabilize<T: Tape>(
    initial: Configuration,
    region: impl Into<Region>,
    tape: &T,
    policy: TopplingPolicy,
    fuel: u64,
) -> Result<StabilizationReport, StabilizeError> {
    let region = region.into();
    let (mut state, initial_particles) = prepare(initial, region);
    let result = stabilize_state(&mut state, region, tape, policy, &mut Fuel::new(fuel));
    finish(state, region, initial_particles, result)
}

/// Snapshots of the three-stage procedure on `1_region`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StagedReport {
    pub after_stage1: StabilizationReport,
    pub after_stage2: StabilizationReport,
    pub final_report: StabilizationReport,
    /// Stage 1 ended because `left` particles had exited on the left.
    pub stage1_reached_left: bool,
    /// Stage 2 ended (or was skipped) with at least `right` right exits.
    pub stage2_reached_right: bool,
}

#[allow(clippy::too_many_arguments)]
fn run_staged<T: Tape>(
    state: &mut LatticeState,
    seg: SegmentSpec,
    tape: &T,
    left: u64,
    right: u64,
    fuel: &mut Fuel,
    stop: &mut dyn FnMut(&LatticeState) -> bool,
    mut snapshot: impl FnMut(u8, &LatticeState),
) -> Result<RunEnd, StabilizeError> {
    let region = Region::Segment(seg);
    let mut stopped = false;
    let end = run_ordered(state, region, tape, TopplingPolicy::Leftmost, fuel, &mut |s| {
        stopped = stop(s);
        stopped || s.exits.left >= left
    })?;
    if stopped {
        return Ok(RunEnd::Stopped);
    }
    snapshot(1, state);
    if end == RunEnd::Stopped && state.exits.right < right && !state.config.is_stable_in(seg) {
        run_ordered(state, region, tape, TopplingPolicy::Rightmost, fuel, &mut |s| {
            stopped = stop(s);
            stopped || s.exits.right >= right
        })?;
        if stopped {
            return Ok(RunEnd::Stopped);
        }
    }
    snapshot(2, state);
    let end = run_ordered(state, region, tape, TopplingPolicy::SiteStack, fuel, stop)?;
    Ok(end)
}

/// Stabilizes one active particle per site of `region` in three stages:
///
/// 1. topple the leftmost active site until `left` particles have exited on
///    the left or the segment is stable;
/// 2. unless already stable or `right` right exits already happened, topple the
///    rightmost active site until the cumulative right exits reach `right` or
///    the segment is stable;
/// 3. finish with any legal order.
pub fn staged_stabilize<T: Tape>(
    region: SegmentSpec,
    tape: &T,
    left: u64,
    right: u64,
    fuel: u64,
) -> Result<StagedReport, StabilizeError> {
    let initial = Configuration::all_active(region);
    let initial_particles = region.len();
    let mut state = LatticeState::with_window(initial, region);
    let mut fuel = Fuel::new(fuel);
    let mut snaps: Vec<LatticeState> = Vec::with_capacity(2);
    let result = run_staged(&mut state, region, tape, left, right, &mut fuel, &mut |_| false, |_, s| {
        snaps.push(s.clone())
    });
    let seg_region = Region::Segment(region);
    if let Err(e) = result {
        return finish(state, seg_region, initial_particles, Err(e)).map(|_| unreachable!());
    }
    let stage2 = snaps.pop().expect("stage 2 snapshot");
    let stage1 = snaps.pop().expect("stage 1 snapshot");
    let stage1_reached_left = stage1.exits.left >= left;
    let stage2_reached_right = stage2.exits.right >= right;
    Ok(StagedReport {
        after_stage1: StabilizationReport::from_state(stage1, seg_region, initial_particles),
        after_stage2: StabilizationReport::from_state(stage2, seg_region, initial_particles),
        final_report: finish(state, seg_region, initial_particles, Ok(()))?,
        stage1_reached_left,
        stage2_reached_right,
    })
}

/// Result of forcing one particle out of a region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkOutcome {
    pub exit: ExitKind,
    pub odometer_delta: Odometer,
    pub topplings: u64,
}

/// Follows one particle from `site`, toppling its current site with acceptable
/// topplings until it leaves `region`.
///
/// A sleep instruction on the lone walker puts it to sleep and the next
/// toppling wakes it; other particles are left where they are, except that a
/// sleeper the walker lands on is woken.
pub fn force_walk_out<T: Tape>(
    state: &mut LatticeState,
    site: i64,
    region: SegmentSpec,
    tape: &T,
    fuel: &mut Fuel,
) -> Result<WalkOutcome, StabilizeError> {
    if state.config.cell(site).count == 0 {
        return Err(StabilizeError::NoParticle(site));
    }
    let region = Region::Segment(region);
    let mut delta = Odometer::new();
    let mut at = site;
    let mut topplings = 0;
    loop {
        if !fuel.take() {
            return Err(StabilizeError::FuelExhausted { topplings: state.topplings, partial: None });
        }
        let ev = state.topple(tape, at, ToppleMode::Acceptable, region)?;
        delta.increment(at);
        topplings += 1;
        let exit = match ev.outcome {
            Outcome::FellAsleep | Outcome::SleepIgnored => continue,
            Outcome::Moved { to, .. } => {
                at = to;
                continue;
            }
            Outcome::Exited(ExitSide::Left) => ExitKind::Left,
            Outcome::Exited(ExitSide::Right) => ExitKind::Right,
            Outcome::Ejected => ExitKind::Ejected,
        };
        return Ok(WalkOutcome { exit, odometer_delta: delta, topplings });
    }
}

/// Stabilizes `k` active particles at the origin on ℤ. The report's visited set
/// is the aggregate: every site a particle stood on, origin included.
pub fn stabilize_point_source<T: Tape>(
    k: u32,
    tape: &T,
    fuel: u64,
) -> Result<StabilizationReport, StabilizeError> {
    assert!(k >= 1, "point source needs at least one particle");
    stabilize(Configuration::point(0, k), Region::Line, tape, TopplingPolicy::SiteStack, fuel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::{Instruction, InstructionTape, ModelParams, ScriptedTape};

    fn tape(seed: u64) -> InstructionTape {
        InstructionTape::new(seed, ModelParams::default())
    }

    #[test]
    fn empty_configuration() {
        let r = stabilize(Configuration::new(), SegmentSpec::first(5), &tape(1), TopplingPolicy::Leftmost, 10).unwrap();
        assert_eq!(r.topplings, 0);
        assert_eq!(r.exits, ExitTally::default());
        assert_eq!(r.odometer, Odometer::new());
        assert_eq!(r.sleepers_remaining, 0);
    }

    #[test]
    fn single_site_sleep() {
        let t = ScriptedTape::new(tape(2)).script(1, vec![Instruction::Sleep]);
        let r = stabilize(Configuration::point(1, 1), SegmentSpec::first(1), &t, TopplingPolicy::SiteStack, 10).unwrap();
        assert_eq!(r.sleepers_remaining, 1);
        assert_eq!(r.odometer.get(1), 1);
    }

    #[test]
    fn leftmost_and_rightmost_agree_on_v5() {
        for seed in 0..200 {
            let t = tape(seed);
            let seg = SegmentSpec::first(5);
            let a = stabilize(Configuration::all_active(seg), seg, &t, TopplingPolicy::Leftmost, DEFAULT_FUEL).unwrap();
            let b = stabilize(Configuration::all_active(seg), seg, &t, TopplingPolicy::Rightmost, DEFAULT_FUEL).unwrap();
            assert_eq!(a.final_config, b.final_config);
            assert_eq!(a.odometer, b.odometer);
            assert_eq!(a.exits, b.exits);
            assert_eq!(a.visited, b.visited);
        }
    }

    #[test]
    fn fuel_exhaustion_reports_partial_state() {
        let seg = SegmentSpec::first(30);
        let err = stabilize(Configuration::all_active(seg), seg, &tape(3), TopplingPolicy::SiteStack, 5).unwrap_err();
        match err {
            StabilizeError::FuelExhausted { topplings, partial: Some(p) } => {
                assert_eq!(topplings, 5);
                assert_eq!(p.topplings, 5);
                assert_eq!(p.exits.total() + p.final_config.total_particles(), 30);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn walk_out_after_sleep() {
        let t = ScriptedTape::new(tape(4)).script(1, vec![Instruction::Sleep, Instruction::JumpLeft]);
        let mut st = LatticeState::new(Configuration::point(1, 1));
        let w = force_walk_out(&mut st, 1, SegmentSpec::first(1), &t, &mut Fuel::new(100)).unwrap();
        assert_eq!(w.exit, ExitKind::Left);
        assert_eq!(w.topplings, 2);
        assert_eq!(st.odometer.get(1), 2);
        assert_eq!(w.odometer_delta.get(1), 2);
        assert_eq!(st.config.total_particles(), 0);
    }

    #[test]
    fn walk_out_right_in_one_step() {
        let t = ScriptedTape::new(tape(5)).script(3, vec![Instruction::JumpRight]);
        let mut st = LatticeState::new(Configuration::point(3, 1));
        let w = force_walk_out(&mut st, 3, SegmentSpec::first(3), &t, &mut Fuel::new(100)).unwrap();
        assert_eq!(w.exit, ExitKind::Right);
        assert_eq!(w.topplings, 1);
    }

    #[test]
    fn walker_wakes_sleeper() {
        let t = ScriptedTape::new(tape(6))
            .script(1, vec![Instruction::JumpRight])
            .script(2, vec![Instruction::JumpRight]);
        let mut c = Configuration::point(1, 1);
        c.set_sleeping(2).unwrap();
        let mut st = LatticeState::new(c);
        let w = force_walk_out(&mut st, 1, SegmentSpec::first(2), &t, &mut Fuel::new(100)).unwrap();
        assert_eq!(w.exit, ExitKind::Right);
        assert_eq!(st.config.cell(2).count, 1);
        assert!(!st.config.cell(2).asleep);
    }

    #[test]
    fn walk_out_requires_particle() {
        let mut st = LatticeState::new(Configuration::new());
        let e = force_walk_out(&mut st, 1, SegmentSpec::first(2), &tape(0), &mut Fuel::new(10)).unwrap_err();
        assert_eq!(e, StabilizeError::NoParticle(1));
    }

    #[test]
    fn point_source_single_sleep() {
        let t = ScriptedTape::new(tape(7)).script(0, vec![Instruction::Sleep]);
        let r = stabilize_point_source(1, &t, 10).unwrap();
        assert_eq!(r.visited.iter().collect::<Vec<_>>(), vec![0]);
        assert_eq!(r.sleepers_remaining, 1);
    }

    #[test]
    fn point_source_keeps_every_particle() {
        for seed in 0..50 {
            let r = stabilize_point_source(20, &tape(seed), DEFAULT_FUEL).unwrap();
            assert_eq!(r.sleepers_remaining, 20);
            assert_eq!(r.exits.total(), 0);
            assert!(r.visited.contains(0));
            let hull = r.visited.hull().unwrap();
            assert_eq!(hull.len(), r.visited.len(), "aggregate is an interval");
        }
    }

    #[test]
    fn staged_with_zero_targets_matches_plain() {
        for seed in 0..50 {
            let seg = SegmentSpec::first(8);
            let t = tape(seed);
            let staged = staged_stabilize(seg, &t, 0, 0, DEFAULT_FUEL).unwrap();
            assert_eq!(staged.after_stage1.topplings, 0);
            assert_eq!(staged.after_stage2.topplings, 0);
            let plain = stabilize(Configuration::all_active(seg), seg, &t, TopplingPolicy::SiteStack, DEFAULT_FUEL).unwrap();
            assert_eq!(staged.final_report.final_config, plain.final_config);
            assert_eq!(staged.final_report.odometer, plain.odometer);
        }
    }

    #[test]
    fn staged_policy_matches_staged_procedure() {
        let seg = SegmentSpec::first(10);
        for seed in 0..30 {
            let t = tape(seed);
            let a = staged_stabilize(seg, &t, 3, 2, DEFAULT_FUEL).unwrap();
            let b = stabilize(Configuration::all_active(seg), seg, &t, TopplingPolicy::StagedLeftRight { left: 3, right: 2 }, DEFAULT_FUEL).unwrap();
            assert_eq!(a.final_report, b);
        }
    }
}
