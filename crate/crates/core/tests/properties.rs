use arw_core::lattice::{Cell, ToppleMode};
use arw_core::stabilizer::{stabilize_state, Fuel};
use arw_core::tape::EjectorOverlay;
use arw_core::{
    force_walk_out, stabilize, staged_stabilize, Configuration, InstructionTape, LatticeState, ModelParams, Region,
    SegmentSpec, Tape, TopplingPolicy, DEFAULT_FUEL,
};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = ModelParams> {
    (prop::sample::select(vec![0.5, 1.0, 2.0]), prop::sample::select(vec![0.3, 0.5, 0.7]))
        .prop_map(|(l, p)| ModelParams::new(l, p).unwrap())
}

/// Segment `{1..n}` with up to 12 particles, some lone ones asleep.
fn instance() -> impl Strategy<Value = (SegmentSpec, Configuration)> {
    (1u64..=12)
        .prop_flat_map(|n| (Just(n), prop::collection::vec((1..=n as i64, any::<bool>()), 0..=12)))
        .prop_map(|(n, drops)| {
            let seg = SegmentSpec::first(n);
            let mut c = Configuration::with_window(seg);
            for &(x, _) in &drops {
                c.add_active(x, 1);
            }
            for &(x, sleep) in &drops {
                if sleep && c.cell(x) == (Cell { count: 1, asleep: false }) {
                    c.clear_site(x);
                    c.set_sleeping(x).unwrap();
                }
            }
            (seg, c)
        })
}

fn sleep_safe(c: &Configuration) -> bool {
    c.occupied().all(|(_, cell)| !cell.asleep || cell.count == 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn final_state_does_not_depend_on_order(
        (seg, config) in instance(), params in params(), seed in any::<u64>(), policy_seed in any::<u64>(),
        left in 0u64..4, right in 0u64..4,
    ) {
        let tape = InstructionTape::new(seed, params);
        let policies = [
            TopplingPolicy::Leftmost,
            TopplingPolicy::Rightmost,
            TopplingPolicy::RandomUnstable { seed: policy_seed },
            TopplingPolicy::SiteStack,
            TopplingPolicy::StagedLeftRight { left, right },
        ];
        let reports: Vec<_> = policies
            .iter()
            .map(|&p| stabilize(config.clone(), seg, &tape, p, DEFAULT_FUEL).unwrap())
            .collect();
        for r in &reports[1..] {
            prop_assert_eq!(&r.final_config, &reports[0].final_config);
            prop_assert_eq!(&r.odometer, &reports[0].odometer);
            prop_assert_eq!(r.exits, reports[0].exits);
            prop_assert_eq!(&r.visited, &reports[0].visited);
        }
    }

    #[test]
    fn every_toppling_conserves_particles_and_sleep_safety(
        (seg, config) in instance(), params in params(), seed in any::<u64>(), picks in prop::collection::vec(any::<u64>(), 200),
    ) {
        let tape = InstructionTape::new(seed, params);
        let total = config.total_particles();
        let mut state = LatticeState::new(config);
        for pick in picks {
            let unstable: Vec<i64> = state.config.unstable_sites().filter(|&x| seg.contains(x)).collect();
            if unstable.is_empty() {
                break;
            }
            let x = unstable[(pick % unstable.len() as u64) as usize];
            state.topple(&tape, x, ToppleMode::Legal, Region::Segment(seg)).unwrap();
            prop_assert_eq!(state.config.total_particles() + state.exits.total(), total);
            prop_assert!(sleep_safe(&state.config));
        }
    }

    #[test]
    fn odometers_add_across_successive_stabilizations(
        (seg, config) in instance(), params in params(), seed in any::<u64>(), extra in prop::collection::vec(1i64..=12, 1..4),
    ) {
        let tape = InstructionTape::new(seed, params);
        let extra: Vec<i64> = extra.into_iter().map(|x| 1 + (x - 1) % seg.len() as i64).collect();
        let first = stabilize(config.clone(), seg, &tape, TopplingPolicy::Leftmost, DEFAULT_FUEL).unwrap();

        let mut state = LatticeState::new(config.clone());
        stabilize_state(&mut state, Region::Segment(seg), &tape, TopplingPolicy::SiteStack, &mut Fuel::new(DEFAULT_FUEL)).unwrap();
        prop_assert_eq!(&state.odometer, &first.odometer);
        for &x in &extra {
            state.add_particle(x);
        }
        stabilize_state(&mut state, Region::Segment(seg), &tape, TopplingPolicy::Rightmost, &mut Fuel::new(DEFAULT_FUEL)).unwrap();

        let mut both = config;
        for &x in &extra {
            both.add_active(x, 1);
        }
        let once = stabilize(both, seg, &tape, TopplingPolicy::Leftmost, DEFAULT_FUEL).unwrap();
        prop_assert_eq!(&state.config, &once.final_config);
        prop_assert_eq!(&state.odometer, &once.odometer);
        prop_assert_eq!(state.topplings, once.odometer.total());
        prop_assert!(first.odometer.le(&once.odometer));
        prop_assert_eq!(first.odometer.plus(&once.odometer.minus(&first.odometer)), once.odometer);
    }

    #[test]
    fn legal_odometer_is_least(
        (seg, config) in instance(), params in params(), seed in any::<u64>(), pick in any::<u64>(),
    ) {
        let tape = InstructionTape::new(seed, params);
        let legal = stabilize(config.clone(), seg, &tape, TopplingPolicy::Leftmost, DEFAULT_FUEL).unwrap();
        let occupied: Vec<i64> = config.occupied().map(|(x, _)| x).collect();
        prop_assume!(!occupied.is_empty());
        let site = occupied[(pick % occupied.len() as u64) as usize];
        let mut state = LatticeState::new(config);
        let mut fuel = Fuel::new(DEFAULT_FUEL);
        force_walk_out(&mut state, site, seg, &tape, &mut fuel).unwrap();
        stabilize_state(&mut state, Region::Segment(seg), &tape, TopplingPolicy::Leftmost, &mut fuel).unwrap();
        prop_assert!(legal.odometer.le(&state.odometer));
    }

    #[test]
    fn stabilization_is_a_function_of_the_seed(
        (seg, config) in instance(), params in params(), seed in any::<u64>(),
    ) {
        let a = stabilize(config.clone(), seg, &InstructionTape::new(seed, params), TopplingPolicy::SiteStack, DEFAULT_FUEL).unwrap();
        let b = stabilize(config, seg, &InstructionTape::new(seed, params), TopplingPolicy::SiteStack, DEFAULT_FUEL).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn report_accounts_for_every_particle(
        (seg, config) in instance(), params in params(), seed in any::<u64>(),
    ) {
        let r = stabilize(config.clone(), seg, &InstructionTape::new(seed, params), TopplingPolicy::SiteStack, DEFAULT_FUEL).unwrap();
        prop_assert_eq!(r.initial_particles, config.total_particles());
        prop_assert_eq!(r.sleepers_remaining + r.exits.total(), r.initial_particles);
        prop_assert_eq!(r.final_config.sleeping_count(), r.sleepers_remaining);
        prop_assert!(r.final_config.is_stable_in(seg));
        prop_assert!(sleep_safe(&r.final_config));
        prop_assert_eq!(r.topplings, r.odometer.total());
    }

    #[test]
    fn overlay_only_changes_the_pivot_from_threshold(
        seed in any::<u64>(), params in params(), pivot in -20i64..20, threshold in 1u64..30,
        site in -25i64..25, j in 1u64..60,
    ) {
        let base = InstructionTape::new(seed, params);
        let overlay = EjectorOverlay::new(&base, pivot, threshold);
        let expected = if site == pivot && j >= threshold {
            arw_core::Instruction::Eject
        } else {
            base.instruction_at(site, j)
        };
        prop_assert_eq!(overlay.instruction_at(site, j), expected);
        prop_assert_eq!(base.instruction_at(site, j), InstructionTape::new(seed, params).instruction_at(site, j));
    }

    #[test]
    fn first_stage_keeps_sleepers_left_of_active_particles(
        n in 1u64..40, params in params(), seed in any::<u64>(), left in 0u64..40, right in 0u64..40,
    ) {
        let seg = SegmentSpec::first(n);
        let tape = InstructionTape::new(seed, params);
        let staged = staged_stabilize(seg, &tape, left.min(n), right.min(n), DEFAULT_FUEL).unwrap();
        let c = &staged.after_stage1.final_config;
        let last_sleeper = c.occupied().filter(|(_, cell)| cell.asleep).map(|(x, _)| x).max();
        let first_active = c.occupied().filter(|(_, cell)| !cell.asleep).map(|(x, _)| x).min();
        if let (Some(s), Some(a)) = (last_sleeper, first_active) {
            prop_assert!(s < a, "sleeper at {} right of active at {}", s, a);
        }
        if staged.stage1_reached_left && left.min(n) > 0 {
            prop_assert_eq!(c.sleeping_count(), 0);
        }
        let plain = stabilize(Configuration::all_active(seg), seg, &tape, TopplingPolicy::SiteStack, DEFAULT_FUEL).unwrap();
        prop_assert_eq!(&staged.final_report.final_config, &plain.final_config);
        prop_assert_eq!(&staged.final_report.odometer, &plain.odometer);
    }

    #[test]
    fn point_source_aggregate_is_an_interval_holding_every_sleeper(
        k in 1u32..40, params in params(), seed in any::<u64>(),
    ) {
        let r = arw_core::stabilize_point_source(k, &InstructionTape::new(seed, params), DEFAULT_FUEL).unwrap();
        let hull = r.visited.hull().unwrap();
        prop_assert!(hull.contains(0));
        prop_assert_eq!(r.visited.len(), hull.len());
        prop_assert_eq!(r.sleepers_remaining, k as u64);
        prop_assert!(r.final_config.occupied().all(|(x, c)| hull.contains(x) && c.asleep && c.count == 1));
    }
}
