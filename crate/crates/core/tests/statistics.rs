use arw_core::chains::{spread_then_stabilize, spread_to_holes, HoleField};
use arw_core::experiments::{run_hockey_domination, run_monotonicity_check, ExperimentPlan, ALPHA};
use arw_core::stats::{ecdf_dominates, geometric_sum_cdf, DominanceVerdict, EmpiricalDist, GeometricConvention};
use arw_core::tape::Stream;
use arw_core::{
    derive_replica_seed, stabilize_point_source, Instruction, InstructionTape, ModelParams, Tape, DEFAULT_FUEL,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Chi-square survival function for an even number of degrees of freedom.
fn chi2_sf_even(x: f64, dof: u32) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..dof / 2 {
        term *= half / k as f64;
        sum += term;
    }
    (-half).exp() * sum
}

fn index(i: Instruction) -> usize {
    match i {
        Instruction::Sleep => 0,
        Instruction::JumpLeft => 1,
        Instruction::JumpRight => 2,
        Instruction::Eject => panic!("plain tapes never eject"),
    }
}

#[test]
fn instruction_frequencies_match_rates() {
    for (lambda, p) in [(1.0, 0.5), (0.5, 0.3), (2.0, 0.7)] {
        let tape = InstructionTape::new(2024, ModelParams::new(lambda, p).unwrap());
        let mut counts = [0f64; 3];
        for site in -500..500 {
            for j in 1..=1000 {
                counts[index(tape.instruction_at(site, j))] += 1.0;
            }
        }
        let total: f64 = counts.iter().sum();
        assert_eq!(total, 1e6);
        let expected = [lambda / (1.0 + lambda), p / (1.0 + lambda), (1.0 - p) / (1.0 + lambda)];
        let chi2: f64 = counts.iter().zip(expected).map(|(&o, e)| (o - total * e).powi(2) / (total * e)).sum();
        let pvalue = chi2_sf_even(chi2, 2);
        assert!(pvalue > 1e-4, "λ={lambda} p={p}: chi2 {chi2}, p-value {pvalue}");
    }
}

#[test]
fn consecutive_replicas_draw_independent_instructions() {
    let params = ModelParams::default();
    let master = 99;
    let mut table = [[0f64; 3]; 3];
    let n = 200_000u64;
    for i in 0..n {
        let a = InstructionTape::new(Stream::Instructions.seed(derive_replica_seed(master, i)), params);
        let b = InstructionTape::new(Stream::Instructions.seed(derive_replica_seed(master, i + 1)), params);
        table[index(a.instruction_at(0, 1))][index(b.instruction_at(0, 1))] += 1.0;
    }
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..3).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let mut chi2 = 0.0;
    for r in 0..3 {
        for c in 0..3 {
            let e = rows[r] * cols[c] / n as f64;
            chi2 += (table[r][c] - e).powi(2) / e;
        }
    }
    assert!(chi2_sf_even(chi2, 4) > 1e-4, "chi2 {chi2}");
}

#[test]
fn geometric_sums_match_simulation() {
    let draws = 1_000_000;
    for (li, lambda) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let q = lambda / (1.0 + lambda);
        for i in 1..=5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(10 * li as u64 + i);
            let mut below = [0u64; 11];
            for _ in 0..draws {
                let mut sum = 0u64;
                for _ in 0..i {
                    while !rng.gen_bool(q) {
                        sum += 1;
                    }
                }
                for (j, b) in below.iter_mut().enumerate() {
                    if sum <= j as u64 {
                        *b += 1;
                    }
                }
            }
            for (j, &b) in below.iter().enumerate() {
                let mc = b as f64 / draws as f64;
                let exact = geometric_sum_cdf(i, j as u64, lambda, GeometricConvention::FailuresBeforeSuccess);
                let se = (exact * (1.0 - exact) / draws as f64).sqrt().max(1e-9);
                assert!((mc - exact).abs() <= 4.0 * se, "i={i} j={j} λ={lambda}: {mc} vs {exact}");
                let shifted = geometric_sum_cdf(i, j as u64 + i, lambda, GeometricConvention::TrialsUntilSuccess);
                assert!((shifted - exact).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn extra_particles_do_not_lower_sleeper_counts() {
    let plan = ExperimentPlan::new(ModelParams::default(), 5000, 21);
    for (x, extra) in [(1, 1), (10, 3), (20, 2)] {
        let row = run_monotonicity_check(&plan, 20, x, extra, ALPHA).unwrap();
        assert!(!row.test.verdict.rejected(), "{row:?}");
        assert!(row.dominant_mean >= row.dominated_mean - 0.1);
    }
}

#[test]
fn hockey_chain_never_exceeds_carpet_on_shared_tapes() {
    let plan = ExperimentPlan::new(ModelParams::new(0.7, 0.4).unwrap(), 500, 8);
    for (n, t) in [(10, 5), (30, 30), (30, 60)] {
        let r = run_hockey_domination(&plan, n, t).unwrap();
        assert_eq!(r.violations, 0);
        assert_eq!(r.fuel_exhausted, 0);
    }
}

#[test]
fn hole_spreading_contains_the_aggregate() {
    let params = ModelParams::default();
    for seed in 0..300u64 {
        let tape = InstructionTape::new(seed, params);
        let holes = HoleField::new(seed ^ 0x55, 0.7);
        let k = 1 + (seed % 25) as u32;
        let spread = spread_to_holes(k, holes, &tape, DEFAULT_FUEL).unwrap();
        assert_eq!(spread.parked.particle_count(spread.interval), k as u64);
        assert_eq!(holes.count_in(spread.interval), k as u64);
        let (_, outer) = spread_then_stabilize(k, holes, &tape, DEFAULT_FUEL).unwrap();
        let inner = stabilize_point_source(k, &tape, DEFAULT_FUEL).unwrap();
        assert!(inner.visited.is_subset(&outer.visited), "seed {seed}");
        assert!(inner.odometer.le(&outer.odometer));
    }
}

proptest! {
    #[test]
    fn separated_supports_decide_dominance(
        low in prop::collection::vec(0i64..50, 100..300),
        high in prop::collection::vec(0i64..50, 100..300),
        shift in 50i64..100,
        alpha in prop::sample::select(vec![0.001, 0.01, 0.05, 0.1]),
    ) {
        let a = EmpiricalDist::new(high.iter().map(|x| x + shift).collect());
        let b = EmpiricalDist::new(low);
        prop_assert_eq!(ecdf_dominates(&a, &b, alpha).unwrap().verdict, DominanceVerdict::DominatesNotRejected);
        prop_assert_eq!(ecdf_dominates(&b, &a, alpha).unwrap().verdict, DominanceVerdict::Rejected);
    }

    #[test]
    fn ecdf_is_a_count(values in prop::collection::vec(-20i64..20, 1..100), t in -25i64..25) {
        let d = EmpiricalDist::new(values.clone());
        let count = values.iter().filter(|&&v| v <= t).count();
        prop_assert_eq!(d.ecdf(t), count as f64 / values.len() as f64);
    }
}
