//! Empirical distributions of integer-valued samples and the tests run on them.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Two-sided 99% standard normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_901;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("no sample sets supplied")]
    NoDistributions,
}

/// Sorted integer samples; the ECDF is the right-continuous step function
/// `t -> #{x <= t} / len`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EmpiricalDist {
    values: Vec<i64>,
}

impl EmpiricalDist {
    pub fn new(mut values: Vec<i64>) -> Self {
        values.sort_unstable();
        Self { values }
    }

    pub fn from_counts<I: IntoIterator<Item = u64>>(samples: I) -> Self {
        Self::new(samples.into_iter().map(|v| v as i64).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sorted samples.
    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn min(&self) -> Option<i64> {
        self.values.first().copied()
    }

    pub fn max(&self) -> Option<i64> {
        self.values.last().copied()
    }

    /// `F(t) = P(X <= t)`.
    pub fn ecdf(&self, t: i64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.partition_point(|&v| v <= t) as f64 / self.values.len() as f64
    }

    /// `P(X <= t)` for a real threshold.
    pub fn ecdf_real(&self, t: f64) -> f64 {
        self.ecdf(t.floor() as i64)
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        self.values.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / (n - 1) as f64
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.values.len() as f64).sqrt()
    }

    /// Mean with a normal-approximation 99% interval.
    pub fn mean_ci(&self) -> MeanCi {
        MeanCi::from_mean_se(self.mean(), self.std_error(), self.len())
    }

    /// Distinct values with their frequencies.
    pub fn pmf(&self) -> BTreeMap<i64, f64> {
        let mut out = BTreeMap::new();
        for &v in &self.values {
            *out.entry(v).or_insert(0.0) += 1.0;
        }
        let n = self.values.len() as f64;
        out.values_mut().for_each(|c| *c /= n);
        out
    }

    /// Samples divided by `scale`.
    pub fn scaled_mean_ci(&self, scale: f64) -> MeanCi {
        let c = self.mean_ci();
        MeanCi { mean: c.mean / scale, ci_lo: c.ci_lo / scale, ci_hi: c.ci_hi / scale, n_samples: c.n_samples }
    }
}

impl FromIterator<i64> for EmpiricalDist {
    fn from_iter<I: IntoIterator<Item = i64>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// A mean and its 99% confidence interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_samples: usize,
}

impl MeanCi {
    pub fn from_mean_se(mean: f64, se: f64, n_samples: usize) -> Self {
        Self { mean, ci_lo: mean - Z_99 * se, ci_hi: mean + Z_99 * se, n_samples }
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, ci_lo: f64::NAN, ci_hi: f64::NAN, n_samples: 0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Self::from_mean_se(mean, (var / n as f64).sqrt(), n)
    }

    pub fn half_width(&self) -> f64 {
        (self.ci_hi - self.ci_lo) / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DominanceVerdict {
    DominatesNotRejected,
    Rejected,
    /// The gap is positive but the band is at least 1, so no sample could
    /// have rejected.
    Inconclusive,
}

impl DominanceVerdict {
    pub fn rejected(&self) -> bool {
        *self == DominanceVerdict::Rejected
    }
}

impl fmt::Display for DominanceVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DominanceVerdict::DominatesNotRejected => "not_rejected",
            DominanceVerdict::Rejected => "rejected",
            DominanceVerdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DominanceTest {
    pub verdict: DominanceVerdict,
    /// `max_t (F_a(t) - F_b(t))`; non-positive when `a` dominates `b` empirically.
    pub max_gap: f64,
    pub band: f64,
    pub alpha: f64,
}

/// One-sided DKW half-width at level `alpha` for `n` samples.
pub fn dkw_band(n: usize, alpha: f64) -> f64 {
    ((1.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Tests `H0: F_a <= F_b` everywhere (`a` stochastically dominates `b`).
///
/// Under `H0`, `max_t (F̂_a - F̂_b)` exceeds `ε_a + ε_b` only if one of the two
/// one-sided DKW events of level `alpha / 2` fails, so rejecting above that
/// combined band has size at most `alpha` for every sample size.
pub fn ecdf_dominates(a: &EmpiricalDist, b: &EmpiricalDist, alpha: f64) -> Result<DominanceTest, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let (va, vb) = (a.values(), b.values());
    let (na, nb) = (va.len() as f64, vb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut max_gap = f64::NEG_INFINITY;
    // Both ECDFs only jump at sample points, so the sup is attained at one.
    while i < va.len() || j < vb.len() {
        let t = match (va.get(i), vb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < va.len() && va[i] <= t {
            i += 1;
        }
        while j < vb.len() && vb[j] <= t {
            j += 1;
        }
        max_gap = max_gap.max(i as f64 / na - j as f64 / nb);
    }
    let band = dkw_band(va.len(), alpha / 2.0) + dkw_band(vb.len(), alpha / 2.0);
    let verdict = if max_gap > band {
        DominanceVerdict::Rejected
    } else if max_gap > 0.0 && band >= 1.0 {
        DominanceVerdict::Inconclusive
    } else {
        DominanceVerdict::DominatesNotRejected
    };
    Ok(DominanceTest { verdict, max_gap, band, alpha })
}

/// Sums of randomly paired samples of `a` and `b`, as a sample of `X + Y'`
/// with `Y'` independent of `X`. Uses `min(|a|, |b|)` pairs, each sample
/// used at most once.
pub fn convolve_independent(a: &EmpiricalDist, b: &EmpiricalDist, pair_seed: u64) -> EmpiricalDist {
    let mut rng = ChaCha8Rng::seed_from_u64(pair_seed);
    let mut xa = a.values().to_vec();
    let mut xb = b.values().to_vec();
    xa.shuffle(&mut rng);
    xb.shuffle(&mut rng);
    xa.iter().zip(&xb).map(|(x, y)| x + y).collect()
}

/// Superadditive limit estimate `sup_n mean_n / n`.
#[derive(Clone, Debug, PartialEq)]
pub struct RhoStarEstimate {
    pub estimate: f64,
    /// Percentile bootstrap 99% interval for the sup statistic.
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub argmax_n: u64,
    /// `(n, mean / n)` for every supplied `n`, increasing in `n`.
    pub curve: Vec<(u64, f64)>,
}

pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 500;

pub fn estimate_rho_star(
    dists: &BTreeMap<u64, EmpiricalDist>,
    bootstrap_seed: u64,
    resamples: usize,
) -> Result<RhoStarEstimate, StatsError> {
    if dists.is_empty() {
        return Err(StatsError::NoDistributions);
    }
    if dists.values().any(|d| d.is_empty()) {
        return Err(StatsError::EmptySample);
    }
    let curve: Vec<(u64, f64)> = dists.iter().map(|(&n, d)| (n, d.mean() / n as f64)).collect();
    let (argmax_n, estimate) = curve
        .iter()
        .copied()
        .fold((0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
    let mut rng = ChaCha8Rng::seed_from_u64(bootstrap_seed);
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            dists
                .iter()
                .map(|(&n, d)| {
                    let v = d.values();
                    let sum: i64 = (0..v.len()).map(|_| v[rng.gen_range(0..v.len())]).sum();
                    sum as f64 / v.len() as f64 / n as f64
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let (ci_lo, ci_hi) = if stats.is_empty() {
        (estimate, estimate)
    } else {
        let q = |p: f64| stats[((p * (stats.len() - 1) as f64).round() as usize).min(stats.len() - 1)];
        (q(0.005), q(0.995))
    };
    Ok(RhoStarEstimate { estimate, ci_lo, ci_hi, argmax_n, curve })
}

/// Plug-in normalized log-moment-generating function and empirical lower tail.
#[derive(Clone, Debug, PartialEq)]
pub struct TailRateReport {
    pub n: u64,
    /// `(θ, -(1/n) ln mean exp(-θ X))`, non-decreasing in θ.
    pub lambda_hat: Vec<(f64, f64)>,
    /// `(ρ, -(1/n) ln P̂(X <= ρ n))`, `+∞` when no sample is that low.
    pub lower_tail: Vec<(f64, f64)>,
}

impl TailRateReport {
    /// Largest violation of `tail(ρ) >= Λ̂(θ) - θρ` over both grids, or 0.
    pub fn chernoff_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for &(rho, tail) in &self.lower_tail {
            for &(theta, lam) in &self.lambda_hat {
                let bound = lam - theta * rho;
                if tail.is_finite() {
                    worst = worst.max(bound - tail);
                }
            }
        }
        worst
    }
}

pub fn tail_rate(dist: &EmpiricalDist, n: u64, theta_grid: &[f64], rho_grid: &[f64]) -> Result<TailRateReport, StatsError> {
    if dist.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let nf = n as f64;
    let count = dist.len() as f64;
    let raw: Vec<f64> = theta_grid
        .iter()
        .map(|&theta| {
            if theta == 0.0 {
                return 0.0;
            }
            // log-mean-exp of -θX, shifted by its largest term
            let shift = -theta * dist.min().unwrap() as f64;
            let s: f64 = dist.values().iter().map(|&x| (-theta * x as f64 - shift).exp()).sum();
            -(shift + s.ln() - count.ln()) / nf
        })
        .collect();
    let smoothed = if theta_grid.windows(2).all(|w| w[0] <= w[1]) { isotonic_non_decreasing(&raw) } else { raw };
    let lambda_hat = theta_grid.iter().copied().zip(smoothed).collect();
    let lower_tail = rho_grid
        .iter()
        .map(|&rho| {
            let p = dist.ecdf_real(rho * nf);
            (rho, if p > 0.0 { -p.ln() / nf } else { f64::INFINITY })
        })
        .collect();
    Ok(TailRateReport { n, lambda_hat, lower_tail })
}

/// Pool-adjacent-violators fit of a non-decreasing sequence.
pub fn isotonic_non_decreasing(ys: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(ys.len());
    for &y in ys {
        blocks.push((y, 1));
        while blocks.len() >= 2 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a <= b {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            blocks.push(((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb));
        }
    }
    blocks.into_iter().flat_map(|(v, k)| std::iter::repeat_n(v, k)).collect()
}

/// Which support the geometric variables have.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GeometricConvention {
    /// `P(G = g) = q (1 - q)^g`, `g >= 0`.
    #[default]
    FailuresBeforeSuccess,
    /// `P(G = g) = q (1 - q)^(g - 1)`, `g >= 1`.
    TrialsUntilSuccess,
}

impl fmt::Display for GeometricConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeometricConvention::FailuresBeforeSuccess => "failures",
            GeometricConvention::TrialsUntilSuccess => "trials",
        })
    }
}

/// `P(G_1 + ... + G_i <= j)` for i.i.d. geometric variables with success
/// probability `λ / (1 + λ)`.
///
/// The sum of `i` failure counts is negative binomial; its point masses
/// `C(s + i - 1, s) q^i (1 - q)^s` are accumulated in log space.
pub fn geometric_sum_cdf(i: u64, j: u64, lambda: f64, convention: GeometricConvention) -> f64 {
    if i == 0 {
        return 1.0;
    }
    let j = match convention {
        GeometricConvention::FailuresBeforeSuccess => j,
        GeometricConvention::TrialsUntilSuccess => match j.checked_sub(i) {
            Some(j) => j,
            None => return 0.0,
        },
    };
    let ln_q = (lambda / (1.0 + lambda)).ln();
    let ln_fail = (1.0 / (1.0 + lambda)).ln();
    let mut ln_term = i as f64 * ln_q;
    let mut terms = Vec::with_capacity(j as usize + 1);
    terms.push(ln_term);
    for s in 1..=j {
        ln_term += ((s + i - 1) as f64 / s as f64).ln() + ln_fail;
        terms.push(ln_term);
    }
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total = top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln();
    total.exp().min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: &[i64]) -> EmpiricalDist {
        EmpiricalDist::new(v.to_vec())
    }

    #[test]
    fn ecdf_matches_counting() {
        let samples = [5, 1, 3, 3, 9, 0, 3, 7];
        let e = d(&samples);
        for t in -2..12 {
            let brute = samples.iter().filter(|&&x| x <= t).count() as f64 / samples.len() as f64;
            assert_eq!(e.ecdf(t), brute);
        }
    }

    #[test]
    fn dominance_examples() {
        let t = ecdf_dominates(&d(&[1, 2, 3]), &d(&[0, 1, 2]), 0.01).unwrap();
        assert_eq!(t.verdict, DominanceVerdict::DominatesNotRejected);
        assert!(t.max_gap <= 0.0);
        let a = d(&[4, 2, 2, 7]);
        assert_eq!(ecdf_dominates(&a, &a, 0.01).unwrap().verdict, DominanceVerdict::DominatesNotRejected);
        let zeros = d(&vec![0; 1000]);
        let fives = d(&vec![5; 1000]);
        let t = ecdf_dominates(&zeros, &fives, 0.01).unwrap();
        assert_eq!(t.verdict, DominanceVerdict::Rejected);
        assert_eq!(t.max_gap, 1.0);
        assert_eq!(ecdf_dominates(&EmpiricalDist::default(), &a, 0.01), Err(StatsError::EmptySample));
    }

    #[test]
    fn tiny_samples_with_positive_gap_are_inconclusive() {
        let t = ecdf_dominates(&d(&[0, 1]), &d(&[1, 2]), 0.01).unwrap();
        assert_eq!(t.verdict, DominanceVerdict::Inconclusive);
    }

    #[test]
    fn convolution_examples() {
        assert_eq!(convolve_independent(&d(&[0]), &d(&[0]), 1).values(), &[0]);
        assert_eq!(convolve_independent(&d(&[1]), &d(&[2]), 1).values(), &[3]);
        let a = d(&[0, 1, 1, 4, 9, 2]);
        let b = d(&[3, 3, 0, 1, 5, 5]);
        let c = convolve_independent(&a, &b, 77);
        assert_eq!(c.len(), 6);
        assert!((c.mean() - (a.mean() + b.mean())).abs() < 1e-12);
        assert_eq!(convolve_independent(&a, &d(&[1, 2]), 3).len(), 2);
    }

    #[test]
    fn rho_star_examples() {
        let mut m = BTreeMap::new();
        m.insert(4, d(&[1, 2, 3, 2]));
        let e = estimate_rho_star(&m, 1, 100).unwrap();
        assert_eq!(e.estimate, 0.5);
        assert_eq!(e.argmax_n, 4);
        m.insert(10, d(&[7, 6, 7, 8]));
        let e2 = estimate_rho_star(&m, 1, 100).unwrap();
        assert!(e2.estimate >= e.estimate);
        assert!(e2.ci_lo <= e2.estimate + 1e-12 && e2.estimate <= e2.ci_hi + 1e-12);
        assert_eq!(estimate_rho_star(&BTreeMap::new(), 1, 10), Err(StatsError::NoDistributions));
    }

    #[test]
    fn tail_rate_examples() {
        let thetas = [0.0, 0.1, 0.5, 1.0, 3.0];
        let rhos = [0.1, 0.3, 0.5];
        let c = d(&[6; 50]);
        let r = tail_rate(&c, 10, &thetas, &rhos).unwrap();
        for &(theta, lam) in &r.lambda_hat {
            assert!((lam - theta * 6.0 / 10.0).abs() < 1e-12);
        }
        assert_eq!(r.lambda_hat[0].1, 0.0);
        let spread = d(&[0, 3, 4, 5, 5, 6, 7, 9, 10, 2]);
        let r = tail_rate(&spread, 10, &thetas, &rhos).unwrap();
        assert!(r.chernoff_violation() <= 1e-12);
        assert!(r.lambda_hat.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn isotonic_pools_violators() {
        assert_eq!(isotonic_non_decreasing(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic_non_decreasing(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn geometric_sum_examples() {
        let f = GeometricConvention::FailuresBeforeSuccess;
        assert_eq!(geometric_sum_cdf(0, 0, 1.0, f), 1.0);
        assert!((geometric_sum_cdf(1, 0, 1.0, f) - 0.5).abs() < 1e-15);
        assert!((geometric_sum_cdf(2, 1, 1.0, f) - 0.5).abs() < 1e-15);
        let t = GeometricConvention::TrialsUntilSuccess;
        assert_eq!(geometric_sum_cdf(3, 2, 1.0, t), 0.0);
        assert!((geometric_sum_cdf(2, 3, 1.0, t) - 0.5).abs() < 1e-15);
        // large arguments stay finite
        let p = geometric_sum_cdf(400, 2000, 0.3, f);
        assert!(p.is_finite() && (0.0..=1.0).contains(&p));
    }

    #[test]
    fn geometric_sum_matches_direct_sum() {
        for &lambda in &[0.5, 1.0, 2.0] {
            let q: f64 = lambda / (1.0 + lambda);
            for i in 1..=5u64 {
                // direct convolution of the pmf
                let mut pmf = vec![1.0f64];
                for _ in 0..i {
                    let mut next = vec![0.0; pmf.len() + 11];
                    for (s, &p) in pmf.iter().enumerate() {
                        for g in 0..=10usize {
                            next[s + g] += p * q * (1.0 - q).powi(g as i32);
                        }
                    }
                    pmf = next;
                }
                for j in 0..=10u64 {
                    let direct: f64 = pmf[..=j as usize].iter().sum();
                    let got = geometric_sum_cdf(i, j, lambda, GeometricConvention::FailuresBeforeSuccess);
                    assert!((direct - got).abs() < 1e-12, "i={i} j={j} λ={lambda}");
                }
            }
        }
    }
}
