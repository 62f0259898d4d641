//! Replicated Monte Carlo experiments.
//!
//! Replica `i` of an experiment reads all of its randomness from
//! `derive_replica_seed(stream_master, i)`, where the stream master is itself
//! derived from the plan's master seed, an experiment tag and the size
//! parameters. Replicas are mapped in parallel and collected in index order, so
//! results do not depend on the number of worker threads.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::chains::{
    ejector_identities, hockey_domination_pair, hockey_run, sample_stationary, EjectorCouplingResult,
};
use crate::lattice::{Configuration, Region, SegmentSpec};
use crate::stabilizer::{stabilize, stabilize_point_source, StabilizeError, TopplingPolicy, DEFAULT_FUEL};
use crate::stats::{
    ecdf_dominates, estimate_rho_star, geometric_sum_cdf, DominanceTest, EmpiricalDist, GeometricConvention,
    MeanCi, RhoStarEstimate, StatsError, DEFAULT_BOOTSTRAP_RESAMPLES,
};
use crate::tape::{derive_replica_seed, hash3, unit_f64, InstructionTape, ModelParams, Stream};

/// Significance level used by every statistical acceptance check.
pub const ALPHA: f64 = 0.01;

pub const DEFAULT_EPS_GRID: [f64; 4] = [0.01, 0.02, 0.05, 0.1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    SampleSn,
    HockeyCurve,
    Ball,
    SuperaddDominance,
    EjectorCheck,
    ExitFraction,
    NmlEnlargement,
    MonotonicityCheck,
    AbelianCheck,
    InnerBoundCheck,
    HockeyDomination,
    DdChain,
}

impl ExperimentKind {
    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("replica {replica}: {source}")]
    Replica { replica: u64, source: StabilizeError },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
}

/// Shared settings of an experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub params: ModelParams,
    pub replicas: u64,
    pub master_seed: u64,
    pub fuel: u64,
}

impl ExperimentPlan {
    pub fn new(params: ModelParams, replicas: u64, master_seed: u64) -> Self {
        Self { params, replicas, master_seed, fuel: DEFAULT_FUEL }
    }

    pub fn with_fuel(mut self, fuel: u64) -> Self {
        self.fuel = fuel;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.replicas == 0 {
            return Err(ExperimentError::InvalidPlan("replicas must be at least 1".into()));
        }
        if self.fuel == 0 {
            return Err(ExperimentError::InvalidPlan("fuel must be positive".into()));
        }
        Ok(())
    }

    /// Master seed of one sample set, keyed by experiment and sizes.
    pub fn stream_master(&self, kind: ExperimentKind, key: &[u64]) -> u64 {
        key.iter()
            .fold(derive_replica_seed(self.master_seed, kind.tag()), |s, &k| derive_replica_seed(s, k))
    }

    fn tape(&self, replica_seed: u64) -> InstructionTape {
        InstructionTape::new(Stream::Instructions.seed(replica_seed), self.params)
    }
}

/// Runs `f(replica_index, replica_seed)` for every replica, in parallel,
/// collecting results by index.
pub fn replicate<R, F>(replicas: u64, stream_master: u64, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(u64, u64) -> R + Sync + Send,
{
    (0..replicas)
        .into_par_iter()
        .map(|i| f(i, derive_replica_seed(stream_master, i)))
        .collect()
}

/// Per-replica values with fuel-exhausted replicas recorded as `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub values: Vec<Option<u64>>,
}

impl SampleSet {
    fn collect(results: Vec<Result<u64, StabilizeError>>) -> Result<Self, ExperimentError> {
        let mut values = Vec::with_capacity(results.len());
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(v) => values.push(Some(v)),
                Err(e) if e.is_fuel_exhausted() => values.push(None),
                Err(source) => return Err(ExperimentError::Replica { replica: i as u64, source }),
            }
        }
        Ok(Self { values })
    }

    pub fn fuel_exhausted(&self) -> u64 {
        self.values.iter().filter(|v| v.is_none()).count() as u64
    }

    pub fn dist(&self) -> EmpiricalDist {
        EmpiricalDist::from_counts(self.values.iter().flatten().copied())
    }

    /// `(replica_index, value)` for completed replicas.
    pub fn indexed(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.values.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i as u64, v)))
    }
}

fn fail_fast<T>(results: Vec<Result<T, StabilizeError>>) -> Result<(Vec<T>, u64), ExperimentError> {
    let mut ok = Vec::with_capacity(results.len());
    let mut exhausted = 0;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push(v),
            Err(e) if e.is_fuel_exhausted() => exhausted += 1,
            Err(source) => return Err(ExperimentError::Replica { replica: i as u64, source }),
        }
    }
    Ok((ok, exhausted))
}

fn sample_sn_stream(plan: &ExperimentPlan, master: u64, n: u64) -> Result<SampleSet, ExperimentError> {
    plan.validate()?;
    let results = replicate(plan.replicas, master, |_, seed| sample_stationary(n, &plan.tape(seed), plan.fuel));
    SampleSet::collect(results)
}

/// Exact samples of `S_n`.
pub fn run_sample_sn(plan: &ExperimentPlan, n: u64) -> Result<SampleSet, ExperimentError> {
    if n == 0 {
        return Err(ExperimentError::InvalidPlan("n must be at least 1".into()));
    }
    sample_sn_stream(plan, plan.stream_master(ExperimentKind::SampleSn, &[n]), n)
}

/// `S_n` samples over a ladder of sizes and the resulting superadditive limit
/// estimate.
pub fn run_estimate_rho_star(
    plan: &ExperimentPlan,
    sizes: &[u64],
) -> Result<(BTreeMap<u64, SampleSet>, RhoStarEstimate), ExperimentError> {
    let mut sets = BTreeMap::new();
    for &n in sizes {
        sets.insert(n, run_sample_sn(plan, n)?);
    }
    let dists: BTreeMap<u64, EmpiricalDist> = sets.iter().map(|(&n, s)| (n, s.dist())).collect();
    let seed = plan.stream_master(ExperimentKind::SampleSn, &[u64::MAX]);
    let est = estimate_rho_star(&dists, seed, DEFAULT_BOOTSTRAP_RESAMPLES)?;
    Ok((sets, est))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DominanceRow {
    pub n: u64,
    pub m: u64,
    pub test: DominanceTest,
    pub dominant_mean: f64,
    pub dominated_mean: f64,
}

/// Tests whether `S_{n+m+1}` dominates `S_n + S_m'` for each pair, with three
/// independently seeded sample sets per pair.
pub fn run_superadd_dominance(
    plan: &ExperimentPlan,
    pairs: &[(u64, u64)],
    alpha: f64,
) -> Result<Vec<DominanceRow>, ExperimentError> {
    let kind = ExperimentKind::SuperaddDominance;
    pairs
        .iter()
        .map(|&(n, m)| {
            if n == 0 || m == 0 {
                return Err(ExperimentError::InvalidPlan("pair sizes must be at least 1".into()));
            }
            let big = sample_sn_stream(plan, plan.stream_master(kind, &[n, m, 0]), n + m + 1)?.dist();
            let left = sample_sn_stream(plan, plan.stream_master(kind, &[n, m, 1]), n)?.dist();
            let right = sample_sn_stream(plan, plan.stream_master(kind, &[n, m, 2]), m)?.dist();
            let pair_seed = Stream::Pairing.seed(plan.stream_master(kind, &[n, m, 3]));
            let sum = crate::stats::convolve_independent(&left, &right, pair_seed);
            let test = ecdf_dominates(&big, &sum, alpha)?;
            Ok(DominanceRow { n, m, test, dominant_mean: big.mean(), dominated_mean: sum.mean() })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HockeyCurve {
    pub n: u64,
    /// `(ρ, mean of Y_⌈ρn⌉ / n)`.
    pub points: Vec<(f64, MeanCi)>,
    pub fuel_exhausted: u64,
}

/// Default density grid `0, 0.1, ..., 2.0`.
pub fn default_rho_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 10.0).collect()
}

pub fn run_hockey(plan: &ExperimentPlan, n: u64, rho_grid: &[f64]) -> Result<HockeyCurve, ExperimentError> {
    plan.validate()?;
    if n == 0 || rho_grid.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
        return Err(ExperimentError::InvalidPlan("hockey needs n >= 1 and finite non-negative densities".into()));
    }
    let rho_max = rho_grid.iter().copied().fold(0.0, f64::max);
    let steps = (rho_max * n as f64 - 1e-9).ceil().max(0.0) as u64;
    let master = plan.stream_master(ExperimentKind::HockeyCurve, &[n]);
    let results = replicate(plan.replicas, master, |_, seed| {
        hockey_run(n, steps, &plan.tape(seed), Stream::Driver.seed(seed), plan.fuel)
    });
    let (trajectories, fuel_exhausted) = fail_fast(results)?;
    let points = rho_grid
        .iter()
        .map(|&rho| {
            let ys: Vec<f64> = trajectories
                .iter()
                .map(|t| t.at_density(rho).expect("trajectory covers grid") as f64 / n as f64)
                .collect();
            (rho, MeanCi::from_samples(&ys))
        })
        .collect();
    Ok(HockeyCurve { n, points, fuel_exhausted })
}

/// Coupled `(Y_t, S_n)` pairs; see [`hockey_domination_pair`].
#[derive(Clone, Debug, PartialEq)]
pub struct HockeyDominationResult {
    pub n: u64,
    pub t: u64,
    pub pairs: Vec<(u64, u64)>,
    pub violations: u64,
    pub fuel_exhausted: u64,
}

pub fn run_hockey_domination(plan: &ExperimentPlan, n: u64, t: u64) -> Result<HockeyDominationResult, ExperimentError> {
    plan.validate()?;
    let master = plan.stream_master(ExperimentKind::HockeyDomination, &[n, t]);
    let results = replicate(plan.replicas, master, |_, seed| {
        hockey_domination_pair(n, t, &plan.tape(seed), Stream::InitialConfig.seed(seed), plan.fuel)
    });
    let (pairs, fuel_exhausted) = fail_fast(results)?;
    let pairs: Vec<(u64, u64)> = pairs.into_iter().map(|p| (p.y, p.s)).collect();
    let violations = pairs.iter().filter(|(y, s)| y > s).count() as u64;
    Ok(HockeyDominationResult { n, t, pairs, violations, fuel_exhausted })
}

/// Particle counts of one driven-dissipative chain started empty.
pub fn run_dd_chain(plan: &ExperimentPlan, n: u64, steps: u64) -> Result<Vec<u64>, ExperimentError> {
    plan.validate()?;
    let seed = derive_replica_seed(plan.stream_master(ExperimentKind::DdChain, &[n]), 0);
    hockey_run(n, steps, &plan.tape(seed), Stream::Driver.seed(seed), plan.fuel)
        .map(|t| t.values)
        .map_err(|source| ExperimentError::Replica { replica: 0, source })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BallSample {
    pub lo: i64,
    pub hi: i64,
    /// Mean position of the final sleepers.
    pub center_of_mass: f64,
}

impl BallSample {
    pub fn span(&self) -> u64 {
        (self.hi - self.lo + 1) as u64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BallResult {
    pub k: u64,
    pub samples: Vec<BallSample>,
    pub fuel_exhausted: u64,
}

impl BallResult {
    pub fn spans(&self) -> EmpiricalDist {
        EmpiricalDist::from_counts(self.samples.iter().map(BallSample::span))
    }

    /// `k / |A_k|` across replicas.
    pub fn density(&self) -> MeanCi {
        let xs: Vec<f64> = self.samples.iter().map(|s| self.k as f64 / s.span() as f64).collect();
        MeanCi::from_samples(&xs)
    }

    pub fn center_of_mass(&self) -> MeanCi {
        let xs: Vec<f64> = self.samples.iter().map(|s| s.center_of_mass).collect();
        MeanCi::from_samples(&xs)
    }
}

/// Aggregates `A_k` of `k` particles started at the origin.
pub fn run_ball(plan: &ExperimentPlan, k: u64) -> Result<BallResult, ExperimentError> {
    plan.validate()?;
    if k == 0 || k > u32::MAX as u64 {
        return Err(ExperimentError::InvalidPlan("k must be a positive 32-bit count".into()));
    }
    let master = plan.stream_master(ExperimentKind::Ball, &[k]);
    let results = replicate(plan.replicas, master, |_, seed| {
        let r = stabilize_point_source(k as u32, &plan.tape(seed), plan.fuel)?;
        let hull = r.visited.hull().expect("origin visited");
        let com = r.final_config.occupied().map(|(x, c)| x as f64 * c.count as f64).sum::<f64>() / k as f64;
        Ok(BallSample { lo: hull.lo, hi: hull.hi, center_of_mass: com })
    });
    let (samples, fuel_exhausted) = fail_fast(results)?;
    Ok(BallResult { k, samples, fuel_exhausted })
}

/// Initial configuration on `{1, ..., n}` for exit-count experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialCondition {
    /// One active particle per site.
    AllActive,
    /// Independent Bernoulli occupation, all active.
    Bernoulli(f64),
}

impl InitialCondition {
    pub fn sample(&self, n: u64, seed: u64) -> Configuration {
        let seg = SegmentSpec::first(n);
        match *self {
            InitialCondition::AllActive => Configuration::all_active(seg),
            InitialCondition::Bernoulli(rho) => {
                let mut c = Configuration::with_window(seg);
                for x in seg.sites() {
                    if unit_f64(hash3(seed, x as u64, 0xB0)) < rho {
                        c.add_active(x, 1);
                    }
                }
                c
            }
        }
    }

    pub fn density(&self) -> f64 {
        match *self {
            InitialCondition::AllActive => 1.0,
            InitialCondition::Bernoulli(rho) => rho,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExitFractionResult {
    pub n: u64,
    pub initial_density: f64,
    /// `(M_n, particles at start, sleepers left)` per completed replica.
    pub samples: Vec<(u64, u64, u64)>,
    pub fuel_exhausted: u64,
}

impl ExitFractionResult {
    pub fn fractions(&self) -> Vec<f64> {
        self.samples.iter().map(|&(m, _, _)| m as f64 / self.n as f64).collect()
    }

    pub fn mean(&self) -> MeanCi {
        MeanCi::from_samples(&self.fractions())
    }

    /// Empirical `P(M_n > ε n)` for each ε.
    pub fn exceedance(&self, eps_grid: &[f64]) -> Vec<(f64, f64)> {
        let total = self.samples.len() as f64;
        eps_grid
            .iter()
            .map(|&eps| {
                let hits = self.samples.iter().filter(|&&(m, _, _)| m as f64 > eps * self.n as f64).count();
                (eps, hits as f64 / total)
            })
            .collect()
    }
}

/// Number of particles leaving `{1, ..., n}` during stabilization with killing.
pub fn run_exit_fraction(
    plan: &ExperimentPlan,
    n: u64,
    initial: InitialCondition,
) -> Result<ExitFractionResult, ExperimentError> {
    plan.validate()?;
    let density_key = (initial.density() * 1e6).round() as u64;
    let master = plan.stream_master(ExperimentKind::ExitFraction, &[n, density_key]);
    let seg = SegmentSpec::first(n);
    let results = replicate(plan.replicas, master, |_, seed| {
        let config = initial.sample(n, Stream::InitialConfig.seed(seed));
        let start = config.total_particles();
        let r = stabilize(config, seg, &plan.tape(seed), TopplingPolicy::SiteStack, plan.fuel)?;
        Ok((r.exits.total(), start, r.sleepers_remaining))
    });
    let (samples, fuel_exhausted) = fail_fast(results)?;
    Ok(ExitFractionResult { n, initial_density: initial.density(), samples, fuel_exhausted })
}

#[derive(Clone, Debug, PartialEq)]
pub struct NmlRow {
    pub i: u64,
    pub j: u64,
    /// Empirical `P(A(η) ⊂ {1 - 2j, ..., n + 2j})`.
    pub containment: f64,
    /// Empirical `P(M_n <= i)`.
    pub exits_at_most_i: f64,
    /// Exact `P(G_1 + ... + G_i <= j)`.
    pub geometric_cdf: f64,
    pub bound: f64,
    /// Standard error of `containment - bound`.
    pub std_error: f64,
}

impl NmlRow {
    /// Lower bound holds up to three standard errors.
    pub fn holds(&self) -> bool {
        self.containment >= self.bound - 3.0 * self.std_error
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NmlResult {
    pub n: u64,
    pub rows: Vec<NmlRow>,
    pub fuel_exhausted: u64,
}

/// Compares how far the stabilization of `initial` on ℤ spreads with the
/// number of particles leaving `{1, ..., n}` when it is stabilized there with
/// killing. Both runs of a replica read the same tape.
pub fn run_nml_enlargement(
    plan: &ExperimentPlan,
    n: u64,
    initial: &Configuration,
    i_grid: &[u64],
    j_grid: &[u64],
    convention: GeometricConvention,
) -> Result<NmlResult, ExperimentError> {
    plan.validate()?;
    let seg = SegmentSpec::first(n);
    if initial.support().is_some_and(|s| !seg.contains_segment(&s)) || initial.occupied().any(|(_, c)| c.asleep) {
        return Err(ExperimentError::InvalidPlan("initial configuration must be active and inside {1..n}".into()));
    }
    let master = plan.stream_master(ExperimentKind::NmlEnlargement, &[n, initial.total_particles()]);
    let results = replicate(plan.replicas, master, |_, seed| {
        let tape = plan.tape(seed);
        let killed = stabilize(initial.clone(), seg, &tape, TopplingPolicy::SiteStack, plan.fuel)?;
        let free = stabilize(initial.clone(), Region::Line, &tape, TopplingPolicy::SiteStack, plan.fuel)?;
        let hull = free.visited.hull().unwrap_or(SegmentSpec::new(1, 0));
        Ok((killed.exits.total(), hull))
    });
    let (samples, fuel_exhausted) = fail_fast(results)?;
    let total = samples.len() as f64;
    let mut rows = Vec::new();
    for &i in i_grid {
        let pm = samples.iter().filter(|(m, _)| *m <= i).count() as f64 / total;
        let se_m = (pm * (1.0 - pm) / total).sqrt();
        for &j in j_grid {
            let enlarged = SegmentSpec::new(1 - 2 * j as i64, n as i64 + 2 * j as i64);
            let c = samples.iter().filter(|(_, h)| enlarged.contains_segment(h)).count() as f64 / total;
            let g = geometric_sum_cdf(i, j, plan.params.lambda(), convention);
            let se_c = (c * (1.0 - c) / total).sqrt();
            rows.push(NmlRow {
                i,
                j,
                containment: c,
                exits_at_most_i: pm,
                geometric_cdf: g,
                bound: pm * g,
                std_error: (se_c * se_c + (g * se_m).powi(2)).sqrt(),
            });
        }
    }
    Ok(NmlResult { n, rows, fuel_exhausted })
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerBoundRow {
    pub n: u64,
    pub k: u64,
    pub x: i64,
    /// Empirical `P(x + A_k ⊂ {1, ..., n})`.
    pub containment: f64,
    /// Empirical `P(S_n >= k)`.
    pub sleepers_at_least_k: f64,
    pub std_error: f64,
}

impl InnerBoundRow {
    pub fn holds(&self) -> bool {
        self.containment <= self.sleepers_at_least_k + 3.0 * self.std_error
    }
}

/// Grid check of `P(x + A_k ⊂ V_n) <= P(S_n >= k)`. Aggregates are sampled
/// once per `k` and sleeper counts once per `n`.
pub fn run_inner_bound(
    plan: &ExperimentPlan,
    ns: &[u64],
    ks: &[u64],
    xs: &[i64],
) -> Result<Vec<InnerBoundRow>, ExperimentError> {
    let mut balls = BTreeMap::new();
    for &k in ks {
        balls.insert(k, run_ball(&plan.with_seed(plan.stream_master(ExperimentKind::InnerBoundCheck, &[0])), k)?);
    }
    let mut sleepers = BTreeMap::new();
    for &n in ns {
        let master = plan.stream_master(ExperimentKind::InnerBoundCheck, &[1, n]);
        sleepers.insert(n, sample_sn_stream(plan, master, n)?.dist());
    }
    let mut rows = Vec::new();
    for &n in ns {
        let s = &sleepers[&n];
        for &k in ks {
            let ball = &balls[&k];
            let total_b = ball.samples.len() as f64;
            let ps = 1.0 - s.ecdf(k as i64 - 1);
            let se_s = (ps * (1.0 - ps) / s.len() as f64).sqrt();
            for &x in xs {
                let c = ball.samples.iter().filter(|b| b.lo + x >= 1 && b.hi + x <= n as i64).count() as f64 / total_b;
                let se_c = (c * (1.0 - c) / total_b).sqrt();
                rows.push(InnerBoundRow {
                    n,
                    k,
                    x,
                    containment: c,
                    sleepers_at_least_k: ps,
                    std_error: (se_c * se_c + se_s * se_s).sqrt(),
                });
            }
        }
    }
    Ok(rows)
}

/// Outcome of the order-independence check on random small instances.
#[derive(Clone, Debug, PartialEq)]
pub struct AbelianSummary {
    pub instances: u64,
    pub agreements: u64,
    /// Replica indices where some policy disagreed.
    pub failures: Vec<u64>,
    pub fuel_exhausted: u64,
}

impl AbelianSummary {
    pub fn all_agree(&self) -> bool {
        self.failures.is_empty() && self.fuel_exhausted == 0
    }
}

/// Random instance of the order-independence check: segment of at most 12
/// sites, at most 12 particles (lone ones sometimes sleeping), parameters drawn
/// from `λ ∈ {0.5, 1, 2}`, `p ∈ {0.3, 0.5, 0.7}`.
pub fn abelian_instance(seed: u64) -> (SegmentSpec, Configuration, ModelParams) {
    let draw = |tag: u64, m: u64| crate::tape::uniform_below(hash3(seed, tag, 0xAB), m);
    let n = 1 + draw(0, 12);
    let particles = draw(1, 13);
    let lambda = [0.5, 1.0, 2.0][draw(2, 3) as usize];
    let p = [0.3, 0.5, 0.7][draw(3, 3) as usize];
    let seg = SegmentSpec::first(n);
    let mut config = Configuration::with_window(seg);
    for i in 0..particles {
        config.add_active(1 + draw(10 + i, n) as i64, 1);
    }
    let lone: Vec<i64> = config.occupied().filter(|(_, c)| c.count == 1).map(|(x, _)| x).collect();
    for (i, x) in lone.into_iter().enumerate() {
        if draw(100 + i as u64, 4) == 0 {
            config.clear_site(x);
            config.set_sleeping(x).expect("site was cleared");
        }
    }
    (seg, config, ModelParams::new(lambda, p).expect("grid parameters are valid"))
}

/// Stabilizes random small instances under four orders and compares final
/// configuration, odometer, exits and visited sets exactly.
pub fn run_abelian_check(plan: &ExperimentPlan) -> Result<AbelianSummary, ExperimentError> {
    plan.validate()?;
    let master = plan.stream_master(ExperimentKind::AbelianCheck, &[]);
    let results = replicate(plan.replicas, master, |_, seed| {
        let (seg, config, params) = abelian_instance(Stream::InitialConfig.seed(seed));
        let tape = InstructionTape::new(Stream::Instructions.seed(seed), params);
        let policies = [
            TopplingPolicy::Leftmost,
            TopplingPolicy::Rightmost,
            TopplingPolicy::RandomUnstable { seed: Stream::Policy.seed(seed) },
            TopplingPolicy::SiteStack,
        ];
        let reports = policies
            .iter()
            .map(|&p| stabilize(config.clone(), seg, &tape, p, plan.fuel))
            .collect::<Result<Vec<_>, _>>()?;
        let first = &reports[0];
        Ok::<bool, StabilizeError>(reports.iter().all(|r| {
            r.final_config == first.final_config
                && r.odometer == first.odometer
                && r.exits == first.exits
                && r.visited == first.visited
        }))
    });
    let mut summary = AbelianSummary { instances: plan.replicas, agreements: 0, failures: Vec::new(), fuel_exhausted: 0 };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(true) => summary.agreements += 1,
            Ok(false) => summary.failures.push(i as u64),
            Err(e) if e.is_fuel_exhausted() => summary.fuel_exhausted += 1,
            Err(source) => return Err(ExperimentError::Replica { replica: i as u64, source }),
        }
    }
    Ok(summary)
}

/// Tests whether the sleeper count from `1_{V_n} + extra · δ_x` dominates the
/// one from `1_{V_n}`, with independent seeds for the two sample sets.
pub fn run_monotonicity_check(
    plan: &ExperimentPlan,
    n: u64,
    x: i64,
    extra: u32,
    alpha: f64,
) -> Result<DominanceRow, ExperimentError> {
    plan.validate()?;
    let seg = SegmentSpec::first(n);
    if !seg.contains(x) {
        return Err(ExperimentError::InvalidPlan(format!("site {x} is outside {seg}")));
    }
    let run = |config: Configuration, side: u64| -> Result<EmpiricalDist, ExperimentError> {
        let master = plan.stream_master(ExperimentKind::MonotonicityCheck, &[n, x as u64, extra as u64, side]);
        let results = replicate(plan.replicas, master, |_, seed| {
            stabilize(config.clone(), seg, &plan.tape(seed), TopplingPolicy::SiteStack, plan.fuel)
                .map(|r| r.sleepers_remaining)
        });
        Ok(SampleSet::collect(results)?.dist())
    };
    let xi = Configuration::all_active(seg);
    let mut eta = xi.clone();
    eta.add_active(x, extra);
    let big = run(eta, 0)?;
    let small = run(xi, 1)?;
    let test = ecdf_dominates(&big, &small, alpha)?;
    Ok(DominanceRow { n, m: x as u64, test, dominant_mean: big.mean(), dominated_mean: small.mean() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EjectorSummary {
    pub results: Vec<EjectorCouplingResult>,
    pub split_identity_failures: u64,
    pub full_identity_checked: u64,
    pub full_identity_failures: u64,
    pub fuel_exhausted: u64,
}

pub fn run_ejector_check(plan: &ExperimentPlan, n: u64, m: u64) -> Result<EjectorSummary, ExperimentError> {
    plan.validate()?;
    if n == 0 || m == 0 {
        return Err(ExperimentError::InvalidPlan("n and m must be at least 1".into()));
    }
    let master = plan.stream_master(ExperimentKind::EjectorCheck, &[n, m]);
    let results = replicate(plan.replicas, master, |_, seed| ejector_identities(n, m, &plan.tape(seed), plan.fuel));
    let (results, fuel_exhausted) = fail_fast(results)?;
    let split_identity_failures = results.iter().filter(|r| !r.split_identity_holds()).count() as u64;
    let full_identity_checked = results.iter().filter(|r| r.full_identity_holds().is_some()).count() as u64;
    let full_identity_failures = results.iter().filter(|r| r.full_identity_holds() == Some(false)).count() as u64;
    Ok(EjectorSummary { results, split_identity_failures, full_identity_checked, full_identity_failures, fuel_exhausted })
}
