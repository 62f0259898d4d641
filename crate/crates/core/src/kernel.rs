//! Flat-array stabilization with the site-stack order.
//!
//! A [`StackJob`] is one stabilization in progress. Its storage is laid out
//! over a single range with a spare site on each side, the unstable sites form
//! a stack, and only the top is ever toppled.

use crate::lattice::{Cell, ExitTally, LatticeState, Region, SegmentSpec};
use crate::tape::{Instruction, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum JobStatus {
    Running,
    Stable,
    OutOfFuel,
}

pub(crate) struct StackJob<'s, T> {
    state: &'s mut LatticeState,
    tape: &'s T,
    region: Region,
    range: SegmentSpec,
    stack: Vec<usize>,
    tokens: Vec<u64>,
    upcoming: Vec<Instruction>,
    fuel: u64,
    status: JobStatus,
}

impl<'s, T: Tape> StackJob<'s, T> {
    /// Schedules the unstable sites of `region`, leftmost at the bottom.
    pub(crate) fn new(state: &'s mut LatticeState, tape: &'s T, region: Region, fuel: u64) -> Self {
        let stored = state.storage_range();
        let range = match region {
            Region::Segment(seg) => match stored {
                Some(r) => SegmentSpec::new(r.lo.min(seg.lo - 1), r.hi.max(seg.hi + 1)),
                None => SegmentSpec::new(seg.lo - 1, seg.hi + 1),
            },
            Region::Line => {
                let s = state.config.support().unwrap_or(SegmentSpec::new(0, 0));
                let padded = SegmentSpec::new(s.lo - 16, s.hi + 16);
                match stored {
                    Some(r) => SegmentSpec::new(r.lo.min(padded.lo), r.hi.max(padded.hi)),
                    None => padded,
                }
            }
        };
        let stack = match region {
            Region::Segment(seg) if seg.is_empty() => Vec::new(),
            _ => {
                let (cells, ..) = state.aligned_parts(range);
                (0..cells.len())
                    .filter(|&i| cells[i].is_unstable() && region.contains(range.lo + i as i64))
                    .collect()
            }
        };
        let status = if stack.is_empty() { JobStatus::Stable } else { JobStatus::Running };
        Self { state, tape, region, range, stack, tokens: Vec::new(), upcoming: Vec::new(), fuel, status }
    }

    pub(crate) fn status(&self) -> JobStatus {
        self.status
    }

    pub(crate) fn fuel(&self) -> u64 {
        self.fuel
    }

    pub(crate) fn topplings(&self) -> u64 {
        self.state.topplings
    }

    /// Topples until stable or out of fuel.
    pub(crate) fn run(&mut self) {
        while self.status == JobStatus::Running {
            let end = self.pass();
            self.absorb(end);
        }
    }

    /// One pass over the current storage layout. Ends when the stack empties,
    /// fuel runs out, or (on the line) a particle reaches the storage edge.
    fn pass(&mut self) -> PassEnd {
        let lo = self.range.lo;
        let tape = self.tape;
        let (cells, odo, visited, _) = self.state.aligned_parts(self.range);
        let n = cells.len();
        self.tokens.clear();
        self.tokens.extend((0..n as i64).map(|i| tape.site_token(lo + i)));
        let tokens = &self.tokens[..n];
        self.upcoming.clear();
        self.upcoming.extend((0..n).map(|i| tape.instruction_with(tokens[i], lo + i as i64, odo[i] + 1)));
        let upcoming = &mut self.upcoming[..n];
        let (cells, odo, visited) = (&mut cells[..n], &mut odo[..n], &mut visited[..n]);
        let (rlo, rhi) = match self.region {
            Region::Segment(seg) => (seg.lo - lo, seg.hi - lo),
            Region::Line => (0, n as i64 - 1),
        };
        let line = matches!(self.region, Region::Line);
        let last = n - 1;
        let visited_before = visited.iter().filter(|&&v| v).count() as u64;
        let stack = &mut self.stack;
        let mut fuel = self.fuel;
        let mut exits = ExitTally::default();
        let mut reason = PassReason::Stable;
        // stack[0] is a sentinel; the scheduled sites are stack[1..=sp] and the
        // top is mirrored in `top`.
        let mut sp = stack.len();
        stack.insert(0, usize::MAX);
        stack.resize(n + 2, 0);
        let mut top = stack[sp];
        while sp > 0 {
            if fuel == 0 {
                reason = PassReason::OutOfFuel;
                break;
            }
            fuel -= 1;
            let i = top;
            let below = stack[sp - 1];
            // Both neighbours are read before anything is written, so no load
            // waits on a store to a possibly equal address.
            let (left, here, right) = (cells[i - 1], cells[i], cells[i + 1]);
            // The following instruction is drawn one toppling early so its
            // hash stays off the dependency chain between topplings.
            let ins = upcoming[i];
            odo[i] += 1;
            upcoming[i] = tape.instruction_with(tokens[i], lo + i as i64, odo[i] + 1);
            let c = here.count;
            if ins == Instruction::Eject {
                exits.ejected += 1;
                cells[i] = Cell { count: c - 1, asleep: false };
                let pop = c == 1;
                sp -= pop as usize;
                top = if pop { below } else { i };
                continue;
            }
            // Branch-free update: the instruction is a coin flip the
            // predictor cannot learn.
            let sleep = ins == Instruction::Sleep;
            let go_right = ins == Instruction::JumpRight;
            let mv = !sleep as u32;
            let sleeps = sleep & (c == 1);
            let after = Cell { count: c - mv, asleep: sleeps };
            cells[i] = after;
            let pop = (c - mv == 0) | sleeps;
            sp -= pop as usize;
            let t = if sleep {
                i
            } else if go_right {
                i + 1
            } else {
                i - 1
            };
            if (t as i64) < rlo || (t as i64) > rhi {
                if (t as i64) < rlo {
                    exits.left += 1;
                } else {
                    exits.right += 1;
                }
                top = if pop { below } else { i };
                continue;
            }
            let dest = if go_right { right } else { left };
            let arrived = Cell { count: dest.count + 1, asleep: false };
            cells[t] = if sleep { after } else { arrived };
            visited[t] = true;
            let push = !sleep & ((dest.count == 0) | dest.asleep);
            stack[sp + 1] = t;
            sp += push as usize;
            top = if push {
                t
            } else if pop {
                below
            } else {
                i
            };
            if line & !sleep & ((t == 0) | (t == last)) {
                reason = PassReason::AtEdge;
                break;
            }
        }
        stack.truncate(sp + 1);
        stack.remove(0);
        let visited_new = visited.iter().filter(|&&v| v).count() as u64 - visited_before;
        PassEnd { reason, fuel, exits, visited_new }
    }

    fn absorb(&mut self, end: PassEnd) {
        let state = &mut *self.state;
        state.visited.add_to_len(end.visited_new);
        state.exits.left += end.exits.left;
        state.exits.right += end.exits.right;
        state.exits.ejected += end.exits.ejected;
        state.topplings += self.fuel - end.fuel;
        self.fuel = end.fuel;
        match end.reason {
            PassReason::Stable => self.status = JobStatus::Stable,
            PassReason::OutOfFuel => self.status = JobStatus::OutOfFuel,
            PassReason::AtEdge => {
                let len = self.range.len() as i64;
                let grown = SegmentSpec::new(self.range.lo - len, self.range.hi + len);
                let shift = (self.range.lo - grown.lo) as usize;
                for i in self.stack.iter_mut() {
                    *i += shift;
                }
                self.range = grown;
            }
        }
    }
}

enum PassReason {
    Stable,
    OutOfFuel,
    AtEdge,
}

struct PassEnd {
    reason: PassReason,
    fuel: u64,
    exits: ExitTally,
    visited_new: u64,
}
