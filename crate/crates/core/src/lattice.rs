//! Particle configurations, odometers and the single-toppling primitive.

use std::fmt;

use thiserror::Error;

use crate::tape::{Instruction, Tape};

/// Inclusive integer interval `{lo, ..., hi}`; empty when `lo == hi + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SegmentSpec {
    pub lo: i64,
    pub hi: i64,
}

impl SegmentSpec {
    pub fn new(lo: i64, hi: i64) -> Self {
        assert!(lo <= hi + 1, "segment {{{lo},...,{hi}}} has negative length");
        Self { lo, hi }
    }

    /// `{1, ..., n}`.
    pub fn first(n: u64) -> Self {
        Self::new(1, n as i64)
    }

    pub fn empty() -> Self {
        Self { lo: 1, hi: 0 }
    }

    pub fn len(&self) -> u64 {
        (self.hi - self.lo + 1) as u64
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    #[inline]
    pub fn contains(&self, site: i64) -> bool {
        self.lo <= site && site <= self.hi
    }

    pub fn sites(&self) -> impl DoubleEndedIterator<Item = i64> {
        self.lo..=self.hi
    }

    pub fn contains_segment(&self, other: &SegmentSpec) -> bool {
        other.is_empty() || (self.lo <= other.lo && other.hi <= self.hi)
    }
}

impl fmt::Display for SegmentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{},...,{}}}", self.lo, self.hi)
    }
}

/// Where particles live during a stabilization. Particles leaving a segment are
/// killed; on the whole line nothing ever leaves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Segment(SegmentSpec),
    Line,
}

impl Region {
    #[inline]
    pub fn contains(&self, site: i64) -> bool {
        match self {
            Region::Segment(s) => s.contains(site),
            Region::Line => true,
        }
    }
}

impl From<SegmentSpec> for Region {
    fn from(s: SegmentSpec) -> Self {
        Region::Segment(s)
    }
}

/// Growable array indexed by sites of ℤ. Reads outside the window return the
/// default value; writes grow it by doubling.
#[derive(Clone, Debug, Default)]
pub(crate) struct Window<T> {
    offset: i64,
    data: Vec<T>,
}

impl<T: Copy + Default + PartialEq> Window<T> {
    pub(crate) fn covering(seg: SegmentSpec) -> Self {
        if seg.is_empty() {
            return Self { offset: 0, data: Vec::new() };
        }
        Self { offset: seg.lo, data: vec![T::default(); seg.len() as usize] }
    }

    #[inline]
    pub(crate) fn get(&self, site: i64) -> T {
        let i = site.wrapping_sub(self.offset);
        if i >= 0 && (i as usize) < self.data.len() {
            self.data[i as usize]
        } else {
            T::default()
        }
    }

    #[inline]
    pub(crate) fn get_mut(&mut self, site: i64) -> &mut T {
        let i = site.wrapping_sub(self.offset);
        if i < 0 || (i as usize) >= self.data.len() {
            self.grow_to(site);
        }
        let i = (site - self.offset) as usize;
        &mut self.data[i]
    }

    #[cold]
    fn grow_to(&mut self, site: i64) {
        if self.data.is_empty() {
            self.offset = site - 8;
            self.data = vec![T::default(); 17];
            return;
        }
        let len = self.data.len() as i64;
        if site < self.offset {
            let extra = (self.offset - site).max(len);
            let mut data = vec![T::default(); extra as usize];
            data.extend_from_slice(&self.data);
            self.data = data;
            self.offset -= extra;
        } else {
            let extra = (site - self.offset - len + 1).max(len);
            self.data.resize((len + extra) as usize, T::default());
        }
    }

    /// Covered range, if any storage is allocated.
    pub(crate) fn range(&self) -> Option<SegmentSpec> {
        (!self.data.is_empty()).then(|| SegmentSpec::new(self.offset, self.offset + self.data.len() as i64 - 1))
    }

    /// Re-lays the storage over exactly `seg`, which must cover every
    /// non-default entry.
    pub(crate) fn reshape(&mut self, seg: SegmentSpec) {
        if self.range() == Some(seg) {
            return;
        }
        let mut data = vec![T::default(); seg.len() as usize];
        for (x, v) in self.iter_non_default() {
            data[(x - seg.lo) as usize] = v;
        }
        self.offset = seg.lo;
        self.data = data;
    }

    pub(crate) fn slice_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub(crate) fn iter_non_default(&self) -> impl Iterator<Item = (i64, T)> + '_ {
        let zero = T::default();
        let offset = self.offset;
        self.data
            .iter()
            .enumerate()
            .filter(move |(_, v)| **v != zero)
            .map(move |(i, v)| (offset + i as i64, *v))
    }

    /// Equality up to default entries, independent of window extents.
    pub(crate) fn same_values(&self, other: &Self) -> bool {
        self.iter_non_default().eq(other.iter_non_default())
    }
}

/// State of one site: how many particles, and whether the (lone) particle sleeps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Cell {
    pub count: u32,
    pub asleep: bool,
}

impl Cell {
    #[inline]
    pub fn is_unstable(&self) -> bool {
        self.count > 0 && !self.asleep
    }

    #[inline]
    pub fn active(&self) -> u32 {
        if self.asleep {
            0
        } else {
            self.count
        }
    }
}

/// Particle configuration on ℤ with finitely many particles.
///
/// A sleeping particle is always alone on its site: the only way to put a
/// particle to sleep is [`Configuration::set_sleeping`] on an empty site or a
/// sleep instruction applied to a lone particle, and adding a particle wakes
/// any sleeper.
#[derive(Clone, Debug, Default)]
pub struct Configuration {
    cells: Window<Cell>,
}

impl PartialEq for Configuration {
    fn eq(&self, other: &Self) -> bool {
        self.cells.same_values(&other.cells)
    }
}

impl Eq for Configuration {}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    /// Empty configuration with storage preallocated over `seg`.
    pub fn with_window(seg: SegmentSpec) -> Self {
        Self { cells: Window::covering(seg) }
    }

    /// One active particle on every site of `seg`.
    pub fn all_active(seg: SegmentSpec) -> Self {
        let mut c = Self::with_window(seg);
        for x in seg.sites() {
            c.add_active(x, 1);
        }
        c
    }

    /// `k` active particles at `site`.
    pub fn point(site: i64, k: u32) -> Self {
        let mut c = Self::new();
        c.add_active(site, k);
        c
    }

    /// Active particles with the given counts on `lo, lo + 1, ...`.
    pub fn from_counts(lo: i64, counts: &[u32]) -> Self {
        let hi = lo + counts.len() as i64 - 1;
        let mut c = Self::with_window(SegmentSpec::new(lo, hi));
        for (i, &k) in counts.iter().enumerate() {
            c.add_active(lo + i as i64, k);
        }
        c
    }

    #[inline]
    pub fn cell(&self, site: i64) -> Cell {
        self.cells.get(site)
    }

    #[inline]
    pub(crate) fn cell_mut(&mut self, site: i64) -> &mut Cell {
        self.cells.get_mut(site)
    }

    /// Adds `k` active particles at `site`, waking a sleeper there if `k > 0`.
    pub fn add_active(&mut self, site: i64, k: u32) {
        if k == 0 {
            return;
        }
        let c = self.cells.get_mut(site);
        c.count += k;
        c.asleep = false;
    }

    /// Places a sleeping particle on an empty site.
    pub fn set_sleeping(&mut self, site: i64) -> Result<(), LatticeError> {
        let c = self.cells.get_mut(site);
        if c.count != 0 {
            return Err(LatticeError::OccupiedSite(site));
        }
        *c = Cell { count: 1, asleep: true };
        Ok(())
    }

    /// Removes every particle at `site`.
    pub fn clear_site(&mut self, site: i64) {
        if self.cells.get(site) != Cell::default() {
            *self.cells.get_mut(site) = Cell::default();
        }
    }

    pub fn is_stable_in(&self, region: SegmentSpec) -> bool {
        region.sites().all(|x| !self.cell(x).is_unstable())
    }

    /// No active particle anywhere.
    pub fn is_stable(&self) -> bool {
        self.occupied().all(|(_, c)| !c.is_unstable())
    }

    pub fn particle_count(&self, region: SegmentSpec) -> u64 {
        region.sites().map(|x| self.cell(x).count as u64).sum()
    }

    pub fn total_particles(&self) -> u64 {
        self.occupied().map(|(_, c)| c.count as u64).sum()
    }

    pub fn sleeping_count(&self) -> u64 {
        self.occupied().filter(|(_, c)| c.asleep).count() as u64
    }

    /// Occupied sites in increasing order.
    pub fn occupied(&self) -> impl Iterator<Item = (i64, Cell)> + '_ {
        self.cells.iter_non_default()
    }

    pub fn unstable_sites(&self) -> impl Iterator<Item = i64> + '_ {
        self.occupied().filter(|(_, c)| c.is_unstable()).map(|(x, _)| x)
    }

    /// Smallest segment holding every particle, if any.
    pub fn support(&self) -> Option<SegmentSpec> {
        let mut it = self.occupied().map(|(x, _)| x);
        let lo = it.next()?;
        let hi = it.last().unwrap_or(lo);
        Some(SegmentSpec::new(lo, hi))
    }

    /// Copy of the configuration restricted to `seg`.
    pub fn restricted(&self, seg: SegmentSpec) -> Self {
        let mut out = Self::with_window(seg);
        for (x, c) in self.occupied().filter(|(x, _)| seg.contains(*x)) {
            *out.cells.get_mut(x) = c;
        }
        out
    }

    /// Same particles, every sleeper woken.
    pub fn woken(&self) -> Self {
        let mut out = self.clone();
        for x in self.occupied().filter(|(_, c)| c.asleep).map(|(x, _)| x).collect::<Vec<_>>() {
            out.cells.get_mut(x).asleep = false;
        }
        out
    }
}

pub fn is_stable_in(config: &Configuration, region: SegmentSpec) -> bool {
    config.is_stable_in(region)
}

pub fn particle_count(config: &Configuration, region: SegmentSpec) -> u64 {
    config.particle_count(region)
}

/// Number of instructions consumed at each site.
#[derive(Clone, Debug, Default)]
pub struct Odometer {
    counts: Window<u64>,
}

impl PartialEq for Odometer {
    fn eq(&self, other: &Self) -> bool {
        self.counts.same_values(&other.counts)
    }
}

impl Eq for Odometer {}

impl Odometer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_window(seg: SegmentSpec) -> Self {
        Self { counts: Window::covering(seg) }
    }

    #[inline]
    pub fn get(&self, site: i64) -> u64 {
        self.counts.get(site)
    }

    /// Increments the odometer at `site` and returns the new value.
    #[inline]
    pub fn increment(&mut self, site: i64) -> u64 {
        let h = self.counts.get_mut(site);
        *h += 1;
        *h
    }

    pub fn set(&mut self, site: i64, value: u64) {
        *self.counts.get_mut(site) = value;
    }

    /// Sites with positive odometer, increasing.
    pub fn iter(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.counts.iter_non_default()
    }

    pub fn total(&self) -> u64 {
        self.iter().map(|(_, h)| h).sum()
    }

    /// Pointwise `self <= other`.
    pub fn le(&self, other: &Odometer) -> bool {
        self.iter().all(|(x, h)| h <= other.get(x))
    }

    /// Pointwise sum.
    pub fn plus(&self, other: &Odometer) -> Odometer {
        let mut out = self.clone();
        for (x, h) in other.iter() {
            *out.counts.get_mut(x) += h;
        }
        out
    }

    /// Pointwise `self - other`; panics unless `other <= self`.
    pub fn minus(&self, other: &Odometer) -> Odometer {
        assert!(other.le(self), "odometer difference would be negative");
        let mut out = self.clone();
        for (x, h) in other.iter() {
            *out.counts.get_mut(x) -= h;
        }
        out
    }

    pub fn restricted(&self, seg: SegmentSpec) -> Odometer {
        let mut out = Odometer::with_window(seg);
        for (x, h) in self.iter().filter(|(x, _)| seg.contains(*x)) {
            out.set(x, h);
        }
        out
    }
}

/// A finite set of sites.
#[derive(Clone, Debug, Default)]
pub struct SiteSet {
    members: Window<bool>,
    len: u64,
}

impl PartialEq for SiteSet {
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len && self.members.same_values(&other.members)
    }
}

impl Eq for SiteSet {}

impl SiteSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_window(seg: SegmentSpec) -> Self {
        Self { members: Window::covering(seg), len: 0 }
    }

    #[inline]
    pub fn insert(&mut self, site: i64) -> bool {
        let m = self.members.get_mut(site);
        if *m {
            false
        } else {
            *m = true;
            self.len += 1;
            true
        }
    }

    #[inline]
    pub fn contains(&self, site: i64) -> bool {
        self.members.get(site)
    }

    pub(crate) fn add_to_len(&mut self, added: u64) {
        self.len += added;
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> + '_ {
        self.members.iter_non_default().map(|(x, _)| x)
    }

    pub fn min(&self) -> Option<i64> {
        self.iter().next()
    }

    pub fn max(&self) -> Option<i64> {
        self.iter().last()
    }

    /// Smallest segment containing the set.
    pub fn hull(&self) -> Option<SegmentSpec> {
        Some(SegmentSpec::new(self.min()?, self.max()?))
    }

    pub fn is_subset(&self, other: &SiteSet) -> bool {
        self.iter().all(|x| other.contains(x))
    }

    pub fn within(&self, seg: SegmentSpec) -> bool {
        self.iter().all(|x| seg.contains(x))
    }

    pub fn union_with(&mut self, other: &SiteSet) {
        for x in other.iter() {
            self.insert(x);
        }
    }
}

impl FromIterator<i64> for SiteSet {
    fn from_iter<I: IntoIterator<Item = i64>>(iter: I) -> Self {
        let mut s = SiteSet::new();
        for x in iter {
            s.insert(x);
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExitSide {
    Left,
    Right,
}

/// How a particle left the region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExitKind {
    Left,
    Right,
    Ejected,
}

/// Particles removed so far, by side. Ejections are never folded into the
/// left or right tallies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExitTally {
    pub left: u64,
    pub right: u64,
    pub ejected: u64,
}

impl ExitTally {
    pub fn total(&self) -> u64 {
        self.left + self.right + self.ejected
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToppleMode {
    /// The site must hold an active particle.
    Legal,
    /// The site must hold a particle; a sleeper is woken first.
    Acceptable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    FellAsleep,
    /// Sleep instruction on a site holding two or more particles.
    SleepIgnored,
    Moved {
        to: i64,
        /// The destination held a sleeper, now active.
        woke: bool,
        /// The destination had no active particle before the jump.
        dest_was_stable: bool,
    },
    Exited(ExitSide),
    Ejected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ToppleEvent {
    pub site: i64,
    /// Index of the consumed instruction, i.e. the odometer after toppling.
    pub index: u64,
    pub instruction: Instruction,
    pub outcome: Outcome,
    /// Acceptable mode only: the site held a sleeper that was woken first.
    pub woke_site: bool,
}

impl ToppleEvent {
    /// The toppled site holds no active particle afterwards.
    pub fn site_now_stable(&self, after: Cell) -> bool {
        !after.is_unstable()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("illegal toppling at site {0}: no active particle")]
    IllegalToppling(i64),
    #[error("empty toppling at site {0}: no particle")]
    EmptyToppling(i64),
    #[error("site {0} is already occupied")]
    OccupiedSite(i64),
}

/// Configuration together with the odometer, the set of visited sites and the
/// exit tallies of a run in progress.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LatticeState {
    pub config: Configuration,
    pub odometer: Odometer,
    pub visited: SiteSet,
    pub exits: ExitTally,
    pub topplings: u64,
}

impl LatticeState {
    /// Starts a run from `config`; every occupied site counts as visited.
    pub fn new(config: Configuration) -> Self {
        let visited: SiteSet = config.occupied().map(|(x, _)| x).collect();
        Self { config, visited, ..Default::default() }
    }

    /// As [`LatticeState::new`] with storage preallocated over `window`.
    pub fn with_window(config: Configuration, window: SegmentSpec) -> Self {
        let mut visited = SiteSet::with_window(window);
        for (x, _) in config.occupied() {
            visited.insert(x);
        }
        Self {
            config,
            odometer: Odometer::with_window(window),
            visited,
            exits: ExitTally::default(),
            topplings: 0,
        }
    }

    /// Lays configuration, odometer and visited set over the same `seg` and
    /// hands out their storage.
    pub(crate) fn aligned_parts(&mut self, seg: SegmentSpec) -> (&mut [Cell], &mut [u64], &mut [bool], &mut u64) {
        self.config.cells.reshape(seg);
        self.odometer.counts.reshape(seg);
        self.visited.members.reshape(seg);
        (
            self.config.cells.slice_mut(),
            self.odometer.counts.slice_mut(),
            self.visited.members.slice_mut(),
            &mut self.visited.len,
        )
    }

    /// Union of the ranges currently allocated for the state's storage.
    pub(crate) fn storage_range(&self) -> Option<SegmentSpec> {
        [self.config.cells.range(), self.odometer.counts.range(), self.visited.members.range()]
            .into_iter()
            .flatten()
            .reduce(|a, b| SegmentSpec::new(a.lo.min(b.lo), a.hi.max(b.hi)))
    }

    /// Adds an active particle at `site` (waking a sleeper) and marks it visited.
    pub fn add_particle(&mut self, site: i64) {
        self.config.add_active(site, 1);
        self.visited.insert(site);
    }

    /// Applies the next instruction at `site`.
    ///
    /// Jumps that leave `region` kill the particle and are tallied by side;
    /// an eject instruction kills it and is tallied separately.
    #[inline]
    pub fn topple<T: Tape>(
        &mut self,
        tape: &T,
        site: i64,
        mode: ToppleMode,
        region: Region,
    ) -> Result<ToppleEvent, LatticeError> {
        let cell = self.config.cell(site);
        let mut woke_site = false;
        match mode {
            ToppleMode::Legal => {
                if !cell.is_unstable() {
                    return Err(LatticeError::IllegalToppling(site));
                }
            }
            ToppleMode::Acceptable => {
                if cell.count == 0 {
                    return Err(LatticeError::EmptyToppling(site));
                }
                woke_site = cell.asleep;
            }
        }
        let index = self.odometer.increment(site);
        self.topplings += 1;
        let instruction = tape.instruction_at(site, index);
        let outcome = {
            let c = self.config.cell_mut(site);
            c.asleep = false;
            match instruction {
                Instruction::Sleep => {
                    if c.count == 1 {
                        c.asleep = true;
                        Outcome::FellAsleep
                    } else {
                        Outcome::SleepIgnored
                    }
                }
                Instruction::Eject => {
                    c.count -= 1;
                    self.exits.ejected += 1;
                    Outcome::Ejected
                }
                Instruction::JumpLeft | Instruction::JumpRight => {
                    c.count -= 1;
                    let to = if instruction == Instruction::JumpLeft { site - 1 } else { site + 1 };
                    if region.contains(to) {
                        let d = self.config.cell_mut(to);
                        let woke = d.asleep;
                        let dest_was_stable = !d.is_unstable();
                        d.count += 1;
                        d.asleep = false;
                        self.visited.insert(to);
                        Outcome::Moved { to, woke, dest_was_stable }
                    } else if to < site {
                        self.exits.left += 1;
                        Outcome::Exited(ExitSide::Left)
                    } else {
                        self.exits.right += 1;
                        Outcome::Exited(ExitSide::Right)
                    }
                }
            }
        };
        Ok(ToppleEvent { site, index, instruction, outcome, woke_site })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::{InstructionTape, ModelParams, ScriptedTape};

    fn scripted(site: i64, prefix: Vec<Instruction>) -> ScriptedTape<InstructionTape> {
        ScriptedTape::new(InstructionTape::new(0, ModelParams::default())).script(site, prefix)
    }

    #[test]
    fn stability_examples() {
        let r = SegmentSpec::new(1, 1);
        assert!(Configuration::new().is_stable_in(SegmentSpec::new(-5, 5)));
        assert!(!Configuration::point(1, 1).is_stable_in(r));
        let mut c = Configuration::new();
        c.set_sleeping(1).unwrap();
        assert!(c.is_stable_in(r));
    }

    #[test]
    fn particle_count_examples() {
        assert_eq!(Configuration::new().particle_count(SegmentSpec::new(1, 3)), 0);
        let mut c = Configuration::new();
        c.set_sleeping(1).unwrap();
        c.add_active(3, 2);
        assert_eq!(particle_count(&c, SegmentSpec::new(1, 3)), 3);
        assert_eq!(particle_count(&c, SegmentSpec::new(2, 2)), 0);
        assert_eq!(c.total_particles(), 3);
    }

    #[test]
    fn lone_particle_falls_asleep() {
        let tape = scripted(1, vec![Instruction::Sleep]);
        let mut st = LatticeState::new(Configuration::point(1, 1));
        let ev = st.topple(&tape, 1, ToppleMode::Legal, SegmentSpec::new(1, 1).into()).unwrap();
        assert_eq!(ev.outcome, Outcome::FellAsleep);
        assert_eq!(st.config.cell(1), Cell { count: 1, asleep: true });
        assert_eq!(st.odometer.get(1), 1);
    }

    #[test]
    fn sleep_ignored_with_two_particles() {
        let tape = scripted(1, vec![Instruction::Sleep]);
        let mut st = LatticeState::new(Configuration::point(1, 2));
        let before = st.config.clone();
        let ev = st.topple(&tape, 1, ToppleMode::Legal, Region::Line).unwrap();
        assert_eq!(ev.outcome, Outcome::SleepIgnored);
        assert_eq!(st.config, before);
        assert_eq!(st.odometer.get(1), 1);
    }

    #[test]
    fn jump_wakes_sleeper() {
        let tape = scripted(1, vec![Instruction::JumpRight]);
        let mut c = Configuration::point(1, 1);
        c.set_sleeping(2).unwrap();
        let mut st = LatticeState::new(c);
        let ev = st.topple(&tape, 1, ToppleMode::Legal, SegmentSpec::new(1, 5).into()).unwrap();
        assert_eq!(ev.outcome, Outcome::Moved { to: 2, woke: true, dest_was_stable: true });
        assert_eq!(st.config.cell(2), Cell { count: 2, asleep: false });
        assert_eq!(st.config.cell(1).count, 0);
    }

    #[test]
    fn exits_and_ejections_are_tallied_by_side() {
        let seg: Region = SegmentSpec::new(1, 2).into();
        let tape = scripted(1, vec![Instruction::JumpLeft]);
        let mut st = LatticeState::new(Configuration::from_counts(1, &[1, 0]));
        assert_eq!(st.topple(&tape, 1, ToppleMode::Legal, seg).unwrap().outcome, Outcome::Exited(ExitSide::Left));
        let tape = scripted(2, vec![Instruction::JumpRight]);
        let mut st = LatticeState::new(Configuration::from_counts(1, &[0, 1]));
        assert_eq!(st.topple(&tape, 2, ToppleMode::Legal, seg).unwrap().outcome, Outcome::Exited(ExitSide::Right));
        assert_eq!(st.exits, ExitTally { left: 0, right: 1, ejected: 0 });
        let base = InstructionTape::new(1, ModelParams::default());
        let overlay = base.with_ejector(2, 1);
        let mut st = LatticeState::new(Configuration::from_counts(1, &[0, 1]));
        assert_eq!(st.topple(&overlay, 2, ToppleMode::Legal, seg).unwrap().outcome, Outcome::Ejected);
        assert_eq!(st.exits, ExitTally { left: 0, right: 0, ejected: 1 });
    }

    #[test]
    fn legal_and_acceptable_preconditions() {
        let tape = InstructionTape::new(1, ModelParams::default());
        let mut c = Configuration::new();
        c.set_sleeping(3).unwrap();
        let mut st = LatticeState::new(c);
        assert_eq!(
            st.topple(&tape, 3, ToppleMode::Legal, Region::Line),
            Err(LatticeError::IllegalToppling(3))
        );
        assert_eq!(
            st.topple(&tape, 4, ToppleMode::Acceptable, Region::Line),
            Err(LatticeError::EmptyToppling(4))
        );
        let ev = st.topple(&tape, 3, ToppleMode::Acceptable, Region::Line).unwrap();
        assert!(ev.woke_site);
        assert_eq!(st.odometer.get(3), 1);
    }

    #[test]
    fn window_grows_both_ways() {
        let mut c = Configuration::new();
        c.add_active(1000, 1);
        c.add_active(-1000, 2);
        c.add_active(3, 1);
        assert_eq!(c.total_particles(), 4);
        assert_eq!(c.support(), Some(SegmentSpec::new(-1000, 1000)));
        let mut d = Configuration::with_window(SegmentSpec::new(-2000, 2000));
        d.add_active(3, 1);
        d.add_active(1000, 1);
        d.add_active(-1000, 2);
        assert_eq!(c, d);
    }

    #[test]
    fn odometer_arithmetic() {
        let mut a = Odometer::new();
        a.increment(1);
        a.increment(1);
        a.increment(-4);
        let mut b = Odometer::new();
        b.increment(1);
        let s = a.plus(&b);
        assert_eq!(s.get(1), 3);
        assert_eq!(s.get(-4), 1);
        assert!(b.le(&a));
        assert!(!a.le(&b));
        assert_eq!(s.minus(&b), a);
        assert_eq!(s.total(), 4);
    }
}
