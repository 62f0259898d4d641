//! Exact answers for tiny activated random walk instances.
//!
//! Nothing here shares code with the simulation engine. Configurations are
//! plain vectors, instructions are the three outcomes of one toppling with
//! their probabilities, and stabilization is treated as an absorbing Markov
//! chain (always toppling the leftmost unstable site, which is enough because
//! the final state does not depend on the order). Absorption probabilities come
//! from a dense linear solve.

use std::collections::{BTreeMap, HashMap, VecDeque};

/// Site contents: `SLEEP` or an active particle count.
pub type Site = i8;
pub const SLEEP: Site = -1;

#[derive(Clone, Copy, Debug)]
pub struct Rates {
    pub sleep: f64,
    pub left: f64,
    pub right: f64,
}

impl Rates {
    pub fn new(lambda: f64, p: f64) -> Self {
        let z = 1.0 + lambda;
        Self { sleep: lambda / z, left: p / z, right: (1.0 - p) / z }
    }
}

fn leftmost_unstable(c: &[Site]) -> Option<usize> {
    c.iter().position(|&s| s > 0)
}

fn land(c: &mut [Site], x: usize) {
    c[x] = if c[x] == SLEEP { 2 } else { c[x] + 1 };
}

/// Successors of one toppling at the leftmost unstable site of a segment,
/// killing particles that leave it.
fn successors(c: &[Site], r: Rates) -> Vec<(Vec<Site>, f64)> {
    let x = leftmost_unstable(c).expect("configuration is unstable");
    let mut out = Vec::with_capacity(3);
    let mut s = c.to_vec();
    if s[x] == 1 {
        s[x] = SLEEP;
    }
    out.push((s, r.sleep));
    let mut l = c.to_vec();
    l[x] -= 1;
    if x > 0 {
        land(&mut l, x - 1);
    }
    out.push((l, r.left));
    let mut rr = c.to_vec();
    rr[x] -= 1;
    if x + 1 < c.len() {
        land(&mut rr, x + 1);
    }
    out.push((rr, r.right));
    out
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        assert!(d.abs() > 1e-300, "singular system");
        for row in col + 1..n {
            let f = a[row][col] / d;
            if f != 0.0 {
                let (upper, lower) = a.split_at_mut(row);
                for (x, &y) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                    *x -= f * y;
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Distribution of the stable configuration reached from `initial` on a
/// segment of `initial.len()` sites with killing at both ends.
pub fn stabilization_distribution(initial: &[Site], r: Rates) -> BTreeMap<Vec<Site>, f64> {
    if leftmost_unstable(initial).is_none() {
        return BTreeMap::from([(initial.to_vec(), 1.0)]);
    }
    let mut index: HashMap<Vec<Site>, usize> = HashMap::new();
    let mut transient: Vec<Vec<Site>> = Vec::new();
    let mut queue = VecDeque::from([initial.to_vec()]);
    index.insert(initial.to_vec(), 0);
    transient.push(initial.to_vec());
    let mut absorbing: BTreeMap<Vec<Site>, usize> = BTreeMap::new();
    while let Some(c) = queue.pop_front() {
        for (s, _) in successors(&c, r) {
            if leftmost_unstable(&s).is_none() {
                let k = absorbing.len();
                absorbing.entry(s).or_insert(k);
            } else if !index.contains_key(&s) {
                index.insert(s.clone(), transient.len());
                transient.push(s.clone());
                queue.push_back(s);
            }
        }
    }
    // expected visits v solve (I - Q)^T v = e_initial
    let n = transient.len();
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let mut to_abs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, c) in transient.iter().enumerate() {
        for (s, p) in successors(c, r) {
            if let Some(&j) = index.get(&s) {
                a[j][i] -= p;
            } else {
                to_abs[i].push((absorbing[&s], p));
            }
        }
    }
    let mut e = vec![0.0; n];
    e[0] = 1.0;
    let v = solve(a, e);
    let mut probs = vec![0.0; absorbing.len()];
    for i in 0..n {
        for &(k, p) in &to_abs[i] {
            probs[k] += v[i] * p;
        }
    }
    absorbing.into_iter().map(|(c, k)| (c, probs[k])).collect()
}

fn sleepers(c: &[Site]) -> usize {
    c.iter().filter(|&&s| s == SLEEP).count()
}

/// `P(S_n = s)` for `s = 0..=n`, stabilizing one active particle per site.
pub fn carpet_sleeper_distribution(n: usize, r: Rates) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for (c, p) in stabilization_distribution(&vec![1; n], r) {
        out[sleepers(&c)] += p;
    }
    out
}

/// Stationary distribution of the sleeper count of the driven-dissipative
/// chain on `n` sites, from its full transition matrix on `{0, s}^n`.
pub fn dd_stationary_sleeper_distribution(n: usize, r: Rates) -> Vec<f64> {
    let states: Vec<Vec<Site>> = (0..1u32 << n)
        .map(|mask| (0..n).map(|x| if mask >> x & 1 == 1 { SLEEP } else { 0 }).collect())
        .collect();
    let id = |c: &Vec<Site>| c.iter().enumerate().map(|(x, &s)| ((s == SLEEP) as usize) << x).sum::<usize>();
    let m = states.len();
    let mut p = vec![vec![0.0; m]; m];
    for (i, c) in states.iter().enumerate() {
        for x in 0..n {
            let mut start = c.clone();
            land(&mut start, x);
            for (end, q) in stabilization_distribution(&start, r) {
                p[i][id(&end)] += q / n as f64;
            }
        }
    }
    // π (P - I) = 0 with the last equation replaced by Σ π = 1
    let mut a = vec![vec![0.0; m]; m];
    for j in 0..m {
        for i in 0..m {
            a[j][i] = p[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    a[m - 1] = vec![1.0; m];
    let mut b = vec![0.0; m];
    b[m - 1] = 1.0;
    let pi = solve(a, b);
    let mut out = vec![0.0; n + 1];
    for (i, c) in states.iter().enumerate() {
        out[sleepers(c)] += pi[i];
    }
    out
}

/// Distribution of the sum of two independent variables on `0..`.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Particles on ℤ: sorted `(site, contents)` pairs plus the visited hull.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct LineState {
    sites: Vec<(i64, Site)>,
    lo: i64,
    hi: i64,
}

fn line_successors(s: &LineState, r: Rates) -> [(LineState, f64); 3] {
    let i = s.sites.iter().position(|&(_, c)| c > 0).expect("unstable");
    let x = s.sites[i].0;
    let mut sleep = s.clone();
    if sleep.sites[i].1 == 1 {
        sleep.sites[i].1 = SLEEP;
    }
    let jump = |to: i64| {
        let mut t = s.clone();
        t.sites[i].1 -= 1;
        match t.sites.iter_mut().find(|(y, _)| *y == to) {
            Some(e) => e.1 = if e.1 == SLEEP { 2 } else { e.1 + 1 },
            None => t.sites.push((to, 1)),
        }
        t.sites.retain(|&(_, c)| c != 0);
        t.sites.sort_unstable();
        t.lo = t.lo.min(to);
        t.hi = t.hi.max(to);
        t
    };
    [(sleep, r.sleep), (jump(x - 1), r.left), (jump(x + 1), r.right)]
}

/// Distribution of `|A_k|` for `k` particles started at the origin of ℤ,
/// by pushing probability mass through the toppling chain until less than
/// `tolerance` remains unabsorbed. Returns the distribution and the mass that
/// was still in flight.
pub fn point_source_span_distribution(k: u8, r: Rates, tolerance: f64) -> (BTreeMap<u64, f64>, f64) {
    let mut current: HashMap<LineState, f64> = HashMap::new();
    current.insert(LineState { sites: vec![(0, k as Site)], lo: 0, hi: 0 }, 1.0);
    let mut out = BTreeMap::new();
    let mut in_flight = 1.0;
    while in_flight > tolerance {
        let mut next: HashMap<LineState, f64> = HashMap::with_capacity(current.len() * 2);
        for (s, mass) in current {
            for (t, p) in line_successors(&s, r) {
                let w = mass * p;
                if t.sites.iter().all(|&(_, c)| c == SLEEP) {
                    *out.entry((t.hi - t.lo + 1) as u64).or_insert(0.0) += w;
                } else {
                    *next.entry(t).or_insert(0.0) += w;
                }
            }
        }
        in_flight = next.values().sum();
        current = next;
    }
    (out, in_flight)
}

/// Total variation distance between two distributions on `0..`.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    0.5 * (0..n).map(|i| (a.get(i).unwrap_or(&0.0) - b.get(i).unwrap_or(&0.0)).abs()).sum::<f64>()
}
