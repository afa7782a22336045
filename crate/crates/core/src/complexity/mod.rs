//! Covering and packing numbers of sequence samples, entropy-rate profiles,
//! block entropy of finite-alphabet processes, and the sparse-deviation
//! packing bound.

mod kdtree;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{pseudo_metric, Norm, RealSequence, SequenceSample};
use crate::error::{invalid_arg, Error, Result};
use crate::families::ModelFamily;

use kdtree::KdTree;

/// Default cap on `|sample| · n` for a single table cell.
pub const DEFAULT_CELL_BUDGET: usize = 200_000_000;

/// Greedy packing and pruned cover of one `(n, r, p)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCounts {
    /// Indices of the maximal `r`-separated set, in sample order.
    pub packing: Vec<usize>,
    /// Indices of the pruned cover centers, in sample order.
    pub cover: Vec<usize>,
}

/// Single greedy pass over the length-`n` prefixes: an entry becomes a center
/// iff every earlier center lies at distance `> r`. The centers form a
/// maximal `r`-separated set and hence an `r`-cover. The cover is then pruned
/// in reverse order, dropping centers whose ball is covered by the others.
pub(crate) fn pack_and_cover(tree: &KdTree<'_>, sample: &SequenceSample, n: usize, r: f64, p: Norm) -> CellCounts {
    let len = sample.len();
    let mut hits = vec![0u32; len];
    let mut centers = Vec::new();
    for i in 0..len {
        if hits[i] == 0 {
            centers.push(i);
            tree.for_each_within(sample.prefix(i, n), r, p, |j| hits[j] += 1);
        }
    }
    let mut keep = vec![true; centers.len()];
    let mut ball = Vec::new();
    for (c_idx, &c) in centers.iter().enumerate().rev() {
        ball.clear();
        tree.for_each_within(sample.prefix(c, n), r, p, |j| ball.push(j));
        if ball.iter().all(|&j| hits[j] >= 2) {
            for &j in &ball {
                hits[j] -= 1;
            }
            keep[c_idx] = false;
        }
    }
    let cover = centers.iter().zip(&keep).filter(|(_, k)| **k).map(|(c, _)| *c).collect();
    CellCounts { packing: centers, cover }
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        invalid_arg(format!("radius must be positive, got {r}"))
    }
}

/// Maximal `r`-separated subset from one greedy pass in sample order.
/// Returns its cardinality and the representative indices.
pub fn greedy_packing(sample: &SequenceSample, r: f64, p: Norm) -> Result<(usize, Vec<usize>)> {
    check_radius(r)?;
    if sample.is_empty() {
        return invalid_arg("empty sample");
    }
    let tree = KdTree::build(sample, sample.n());
    let cell = pack_and_cover(&tree, sample, sample.n(), r, p);
    Ok((cell.packing.len(), cell.packing))
}

/// Size of the greedy cover with centers drawn from the sample.
/// Satisfies `M(2r) ≤ N(r) ≤ M(r)`.
pub fn cover_count(sample: &SequenceSample, r: f64, p: Norm) -> Result<usize> {
    check_radius(r)?;
    if sample.is_empty() {
        return invalid_arg("empty sample");
    }
    let tree = KdTree::build(sample, sample.n());
    Ok(pack_and_cover(&tree, sample, sample.n(), r, p).cover.len())
}

/// Covering/packing tables over `(n, r)` for one norm, with per-radius
/// entropy-rate slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub family_id: String,
    pub p: Norm,
    pub radii: Vec<f64>,
    pub horizons: Vec<usize>,
    /// `packing_counts[h][r]` = M(horizons[h], radii[r]).
    pub packing_counts: Vec<Vec<usize>>,
    /// `cover_counts[h][r]` = N(horizons[h], radii[r]).
    pub cover_counts: Vec<Vec<usize>>,
    /// Least-squares slope of `ln N(n, r)` against `n` over the top half of
    /// the horizons; `None` with fewer than two horizons.
    pub slopes: Vec<Option<f64>>,
    pub sample_size: usize,
}

impl ComplexityReport {
    pub fn cover(&self, n: usize, r: f64) -> Option<usize> {
        let h = self.horizons.iter().position(|&m| m == n)?;
        let j = self.radii.iter().position(|&s| s == r)?;
        Some(self.cover_counts[h][j])
    }

    pub fn slope(&self, r: f64) -> Option<f64> {
        let j = self.radii.iter().position(|&s| s == r)?;
        self.slopes[j]
    }

    /// Long-format rows `(p, n, r, N, M)`.
    pub fn rows(&self) -> Vec<(String, usize, f64, usize, usize)> {
        let mut out = Vec::new();
        for (h, n) in self.horizons.iter().enumerate() {
            for (j, r) in self.radii.iter().enumerate() {
                out.push((self.p.to_string(), *n, *r, self.cover_counts[h][j], self.packing_counts[h][j]));
            }
        }
        out
    }

    /// CSV with columns `p, n, r, N, M`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(format!("csv: {e}"));
        wtr.write_record(["p", "n", "r", "N", "M"]).map_err(io)?;
        for (p, n, r, big_n, m) in self.rows() {
            wtr.write_record([p, n.to_string(), r.to_string(), big_n.to_string(), m.to_string()]).map_err(io)?;
        }
        wtr.flush().map_err(|e| Error::Io(format!("csv: {e}")))?;
        Ok(())
    }
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Slope of `ln N` against `n` over the top `⌈h/2⌉` horizons (at least two).
pub fn entropy_slope(horizons: &[usize], counts: &[usize]) -> Option<f64> {
    let h = horizons.len();
    if h < 2 {
        return None;
    }
    let take = h.div_ceil(2).max(2);
    let xs: Vec<f64> = horizons[h - take..].iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = counts[h - take..].iter().map(|&c| (c as f64).ln()).collect();
    ls_slope(&xs, &ys)
}

/// Compute reports for several norms on one sample, sharing one kd-tree per
/// horizon. Cells within a horizon are evaluated in parallel; each greedy
/// pass is sequential.
pub fn profile_sample(
    sample: &SequenceSample,
    radii: &[f64],
    horizons: &[usize],
    norms: &[Norm],
    cell_budget: usize,
) -> Result<Vec<ComplexityReport>> {
    if sample.is_empty() {
        return invalid_arg("empty sample");
    }
    if radii.is_empty() || horizons.is_empty() || norms.is_empty() {
        return invalid_arg("radii, horizons and norms must be nonempty");
    }
    for &r in radii {
        check_radius(r)?;
    }
    if horizons.windows(2).any(|w| w[0] >= w[1]) || horizons[0] == 0 {
        return invalid_arg("horizons must be positive and strictly increasing");
    }
    let n_max = *horizons.last().expect("nonempty");
    if n_max > sample.n() {
        return invalid_arg(format!("horizon {n_max} exceeds sample length {}", sample.n()));
    }
    for &n in horizons {
        if sample.len().saturating_mul(n) > cell_budget {
            return Err(Error::Budget(format!(
                "cell with |sample| = {} and n = {n} exceeds the budget of {cell_budget}",
                sample.len()
            )));
        }
    }
    let mut packing = vec![vec![vec![0usize; radii.len()]; horizons.len()]; norms.len()];
    let mut cover = packing.clone();
    for (h, &n) in horizons.iter().enumerate() {
        let tree = KdTree::build(sample, n);
        let jobs: Vec<(usize, usize)> = (0..norms.len()).flat_map(|a| (0..radii.len()).map(move |j| (a, j))).collect();
        let cells: Vec<CellCounts> = jobs.par_iter().map(|&(a, j)| pack_and_cover(&tree, sample, n, radii[j], norms[a])).collect();
        for (&(a, j), cell) in jobs.iter().zip(cells) {
            packing[a][h][j] = cell.packing.len();
            cover[a][h][j] = cell.cover.len();
        }
    }
    Ok(norms
        .iter()
        .enumerate()
        .map(|(a, &p)| {
            let slopes = (0..radii.len())
                .map(|j| entropy_slope(horizons, &cover[a].iter().map(|row| row[j]).collect::<Vec<_>>()))
                .collect();
            ComplexityReport {
                family_id: sample.family_id().to_string(),
                p,
                radii: radii.to_vec(),
                horizons: horizons.to_vec(),
                packing_counts: packing[a].clone(),
                cover_counts: cover[a].clone(),
                slopes,
                sample_size: sample.len(),
            }
        })
        .collect())
}

/// Entropy profile of a family over `θ_grid × x_grid`.
pub fn entropy_profile(
    family: &ModelFamily,
    theta_grid: &[Vec<f64>],
    x_grid: &[Vec<f64>],
    radii: &[f64],
    horizons: &[usize],
    p: Norm,
    cell_budget: usize,
) -> Result<ComplexityReport> {
    let n_max = horizons.iter().copied().max().ok_or_else(|| Error::InvalidArgument("no horizons".into()))?;
    let cells = theta_grid.len().saturating_mul(x_grid.len()).saturating_mul(n_max);
    if cells > cell_budget {
        return Err(Error::Budget(format!("sample of {cells} values exceeds the budget of {cell_budget}")));
    }
    let sample = crate::dynamics::sample_sequences(family, theta_grid, x_grid, n_max)?;
    Ok(profile_sample(&sample, radii, horizons, &[p], cell_budget)?.remove(0))
}

// ---------------------------------------------------------------------------
// Finite-alphabet processes

/// Largest dense block table accepted.
pub const MAX_BLOCK_TABLE: usize = 1 << 24;

/// Stationary finite-alphabet process described by its `k`-block law.
///
/// Blocks are indexed in base `|A|` with position 0 most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedProcess {
    alphabet_size: usize,
    k: usize,
    block_dist: Vec<f64>,
    /// Symbol sequence the law was estimated from, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<Vec<u16>>,
}

impl QuantizedProcess {
    pub fn new(alphabet_size: usize, k: usize, block_dist: Vec<f64>) -> Result<Self> {
        let q = Self { alphabet_size, k, block_dist, source: None };
        q.validate()?;
        Ok(q)
    }

    pub(crate) fn with_source(mut self, source: Vec<u16>) -> Self {
        self.source = Some(source);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.alphabet_size == 0 || self.k == 0 {
            return invalid_arg("alphabet size and block length must be positive");
        }
        let size = block_count(self.alphabet_size, self.k)?;
        if self.block_dist.len() != size {
            return invalid_arg(format!("block table has {} entries, expected {size}", self.block_dist.len()));
        }
        if self.block_dist.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return invalid_arg("block probabilities must be nonnegative");
        }
        let total: f64 = self.block_dist.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid_arg(format!("block probabilities sum to {total}, not 1"));
        }
        if self.k > 1 {
            let gap = self.stationarity_gap();
            if gap > 1e-10 {
                return invalid_arg(format!("block law is not shift-consistent (gap {gap:e})"));
            }
        }
        Ok(())
    }

    /// Max difference between the marginals on positions `0..k−1` and `1..k`.
    pub fn stationarity_gap(&self) -> f64 {
        let a = self.alphabet_size;
        let m = self.block_dist.len() / a;
        let mut head = vec![0.0; m];
        let mut tail = vec![0.0; m];
        for (idx, p) in self.block_dist.iter().enumerate() {
            head[idx / a] += p;
            tail[idx % m] += p;
        }
        head.iter().zip(&tail).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    /// i.i.d. process with one-symbol law `p1`.
    pub fn iid(p1: &[f64], k: usize) -> Result<Self> {
        let a = p1.len();
        let size = block_count(a, k)?;
        let dist = (0..size)
            .map(|mut idx| {
                let mut prob = 1.0;
                for _ in 0..k {
                    prob *= p1[idx % a];
                    idx /= a;
                }
                prob
            })
            .collect();
        Self::new(a, k, dist)
    }

    /// Point mass on the constant sequence `symbol`.
    pub fn constant(alphabet_size: usize, symbol: usize, k: usize) -> Result<Self> {
        let mut p1 = vec![0.0; alphabet_size];
        p1[symbol] = 1.0;
        Self::iid(&p1, k)
    }

    /// Random-phase periodic process through `cycle` (uniform over its shifts).
    pub fn periodic(alphabet_size: usize, cycle: &[usize], k: usize) -> Result<Self> {
        let size = block_count(alphabet_size, k)?;
        let mut dist = vec![0.0; size];
        let period = cycle.len();
        for phase in 0..period {
            let idx = (0..k).fold(0usize, |acc, j| acc * alphabet_size + cycle[(phase + j) % period]);
            dist[idx] += 1.0 / period as f64;
        }
        let source: Vec<u16> = (0..period * 64).map(|i| cycle[i % period] as u16).collect();
        Ok(Self::new(alphabet_size, k, dist)?.with_source(source))
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn block_dist(&self) -> &[f64] {
        &self.block_dist
    }

    pub fn source(&self) -> Option<&[u16]> {
        self.source.as_deref()
    }

    /// Decode block index into symbols.
    pub fn block_symbols(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for slot in out.iter_mut().rev() {
            *slot = idx % self.alphabet_size;
            idx /= self.alphabet_size;
        }
        out
    }

    /// Law of the first `j ≤ k` positions.
    pub fn marginal(&self, j: usize) -> Result<Self> {
        if j == 0 || j > self.k {
            return invalid_arg(format!("marginal length {j} outside 1..={}", self.k));
        }
        let drop = block_count(self.alphabet_size, self.k - j)?;
        let mut dist = vec![0.0; self.block_dist.len() / drop];
        for (idx, p) in self.block_dist.iter().enumerate() {
            dist[idx / drop] += p;
        }
        let mut q = Self { alphabet_size: self.alphabet_size, k: j, block_dist: dist, source: self.source.clone() };
        renormalize(&mut q.block_dist);
        Ok(q)
    }
}

pub(crate) fn renormalize(dist: &mut [f64]) {
    let total: f64 = dist.iter().sum();
    if total > 0.0 {
        for p in dist.iter_mut() {
            *p /= total;
        }
    }
}

pub(crate) fn block_count(alphabet_size: usize, k: usize) -> Result<usize> {
    let mut size = 1usize;
    for _ in 0..k {
        size = size.checked_mul(alphabet_size).filter(|s| *s <= MAX_BLOCK_TABLE).ok_or_else(|| {
            Error::Budget(format!("block table {alphabet_size}^{k} exceeds {MAX_BLOCK_TABLE} entries"))
        })?;
    }
    Ok(size)
}

/// `H_k / k` in nats per symbol, with `0 · ln 0 = 0`.
pub fn block_entropy(q: &QuantizedProcess) -> f64 {
    let h: f64 = q.block_dist.iter().filter(|p| **p > 0.0).map(|p| -p * p.ln()).sum();
    (h / q.k as f64).max(0.0)
}

// ---------------------------------------------------------------------------
// Packing bound

/// Binary entropy in bits.
pub fn binary_entropy_bits(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Outcome of [`packing_bound_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PackingBound {
    /// Greedy `δ`-packing count under `d_{n,∞}` among the probes.
    pub measured: usize,
    /// `(3K/δ)^{δn/2} · 2^{H₂(δ/2) n}` (may be `inf` for large `n`).
    pub bound: f64,
    pub ln_bound: f64,
    pub pass: bool,
    /// Radius of the `d_{n,p}` ball the probes must lie in.
    pub epsilon: f64,
}

/// Ball radius `ε = (δ/2)^{(1+p)/p}`.
pub fn packing_epsilon(delta: f64, p: f64) -> f64 {
    (delta / 2.0).powf((1.0 + p) / p)
}

/// Count a greedy `d_{n,∞}` `δ`-packing of probes lying in the `d_{n,p}`
/// ball of radius `(δ/2)^{(1+p)/p}` around `u` and compare with
/// `(3K/δ)^{δn/2} · 2^{H₂(δ/2) n}`.
pub fn packing_bound_check(u: &RealSequence, delta: f64, p: f64, k_bound: f64, probes: &SequenceSample) -> Result<PackingBound> {
    if !(delta > 0.0 && delta < 1.0) {
        return invalid_arg(format!("delta must lie in (0, 1), got {delta}"));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return invalid_arg(format!("p must be finite and >= 1, got {p}"));
    }
    if !(k_bound >= 1.0) {
        return invalid_arg(format!("K must be >= 1, got {k_bound}"));
    }
    let n = u.len();
    if probes.n() != n {
        return invalid_arg(format!("probe length {} differs from n = {n}", probes.n()));
    }
    if probes.is_empty() {
        return invalid_arg("empty probe set");
    }
    let epsilon = packing_epsilon(delta, p);
    let norm = Norm::P(p);
    if u.values().iter().any(|v| v.abs() > k_bound) {
        return Err(Error::Precondition("center lies outside [-K, K]^n".into()));
    }
    for (i, v) in probes.iter().enumerate() {
        if v.iter().any(|x| x.abs() > k_bound) {
            return Err(Error::Precondition(format!("probe {i} lies outside [-K, K]^n")));
        }
        let d = pseudo_metric(u.values(), v, norm)?;
        if d > epsilon {
            return Err(Error::Precondition(format!("probe {i} lies at d_(n,p) = {d} > epsilon = {epsilon}")));
        }
    }
    let (measured, _) = greedy_packing(probes, delta, Norm::Inf)?;
    let nf = n as f64;
    let ln_bound = (delta * nf / 2.0) * (3.0 * k_bound / delta).ln() + binary_entropy_bits(delta / 2.0) * nf * std::f64::consts::LN_2;
    Ok(PackingBound { measured, bound: ln_bound.exp(), ln_bound, pass: (measured as f64).ln() <= ln_bound, epsilon })
}
