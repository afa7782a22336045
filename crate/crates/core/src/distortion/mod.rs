//! Finite-alphabet bounds on the joining distortion
//! `γ(U, V) = inf_λ E_λ c(U_0, V_0)` between stationary processes: linear
//! programming lower bounds over shift-consistent `k`-block couplings and
//! explicit-joining upper bounds.

mod simplex;

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::complexity::{block_count, QuantizedProcess};
use crate::dynamics::{advance, orbit_into};
use crate::erm::{LossSpec, SignalSpec};
use crate::error::{invalid_arg, Error, Result};
use crate::families::ModelFamily;
use crate::meanwidth::NoiseModel;
use crate::rng;

/// Largest number of coupling variables `|supp P_k| · |supp Q_k|`.
pub const MAX_LP_VARIABLES: usize = 10_000;

/// Burn-in applied before sampling a model process.
pub const DEFAULT_BURN_IN: usize = 1000;

/// Bin cut points with the representative value of every bin.
///
/// Bin `i` is `[cuts[i−1], cuts[i])`, with the outer bins unbounded. Inner
/// representatives are bin midpoints; the outer bins use the cut point
/// shifted outward by half the neighbouring bin width (by ½ when there is a
/// single cut).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    cuts: Vec<f64>,
    midpoints: Vec<f64>,
}

impl Quantizer {
    pub fn from_cuts(cuts: Vec<f64>) -> Result<Self> {
        if cuts.is_empty() {
            return invalid_arg("at least one cut point is required");
        }
        if cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
            return invalid_arg("cut points must be finite and strictly increasing");
        }
        if cuts.len() + 1 > u16::MAX as usize {
            return invalid_arg("too many bins");
        }
        let m = cuts.len();
        let mut midpoints = Vec::with_capacity(m + 1);
        if m == 1 {
            midpoints.push(cuts[0] - 0.5);
            midpoints.push(cuts[0] + 0.5);
        } else {
            midpoints.push(cuts[0] - (cuts[1] - cuts[0]) / 2.0);
            for w in cuts.windows(2) {
                midpoints.push((w[0] + w[1]) / 2.0);
            }
            midpoints.push(cuts[m - 1] + (cuts[m - 1] - cuts[m - 2]) / 2.0);
        }
        Ok(Self { cuts, midpoints })
    }

    /// `bins` equal-width bins over `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins < 2 || !(lo < hi) {
            return invalid_arg("uniform quantizer needs lo < hi and at least two bins");
        }
        let w = (hi - lo) / bins as f64;
        let cuts = (1..bins).map(|i| lo + w * i as f64).collect();
        let midpoints = (0..bins).map(|i| lo + w * (i as f64 + 0.5)).collect();
        Ok(Self { cuts, midpoints })
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    pub fn alphabet_size(&self) -> usize {
        self.midpoints.len()
    }

    #[inline]
    pub fn symbol(&self, v: f64) -> u16 {
        self.cuts.partition_point(|c| *c <= v) as u16
    }

    /// `c(a, b) = ℓ(mid(a), mid(b))`.
    pub fn cost_table(&self, loss: &LossSpec) -> Vec<Vec<f64>> {
        self.midpoints.iter().map(|a| self.midpoints.iter().map(|b| loss.eval(*a, *b)).collect()).collect()
    }
}

/// `c(a, b) = 1[a ≠ b]`.
pub fn hamming(alphabet_size: usize) -> Vec<Vec<f64>> {
    (0..alphabet_size).map(|a| (0..alphabet_size).map(|b| f64::from(u8::from(a != b))).collect()).collect()
}

/// Empirical `k`-block law of the binned sequence, counted on the cyclic
/// closure of the sequence so that the result is exactly shift-consistent.
pub fn quantize(y: &[f64], cuts: &[f64], k: usize) -> Result<QuantizedProcess> {
    let q = Quantizer::from_cuts(cuts.to_vec())?;
    quantize_with(y, &q, k)
}

pub fn quantize_with(y: &[f64], q: &Quantizer, k: usize) -> Result<QuantizedProcess> {
    if k == 0 {
        return invalid_arg("block length must be positive");
    }
    let a = q.alphabet_size();
    let size = block_count(a, k)?;
    let required = size.saturating_mul(10);
    if y.len() < required {
        return Err(Error::DataStarvation { required, got: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return invalid_arg("sequence values must be finite");
    }
    let symbols: Vec<u16> = y.iter().map(|v| q.symbol(*v)).collect();
    let len = symbols.len();
    let mut counts = vec![0u64; size];
    let mut idx = 0usize;
    for j in 0..k - 1 {
        idx = idx * a + symbols[j] as usize;
    }
    for i in 0..len {
        idx = (idx * a + symbols[(i + k - 1) % len] as usize) % size;
        counts[idx] += 1;
    }
    let dist = counts.iter().map(|c| *c as f64 / len as f64).collect();
    Ok(QuantizedProcess::new(a, k, dist)?.with_source(symbols))
}

fn check_cost(cost: &[Vec<f64>], a: usize, b: usize) -> Result<()> {
    if cost.len() != a || cost.iter().any(|row| row.len() != b) {
        return invalid_arg(format!("cost table must be {a} x {b}"));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return invalid_arg("cost entries must be finite");
    }
    Ok(())
}

/// Solved coupling LP over shift-consistent `k`-block joinings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingLP {
    pub k: usize,
    pub alphabet_p: usize,
    pub alphabet_q: usize,
    pub value: f64,
    /// Nonzero entries `(block of P, block of Q, mass)`.
    pub coupling: Vec<(usize, usize, f64)>,
    pub variables: usize,
    pub constraints: usize,
}

impl CouplingLP {
    /// Build and solve the LP at block length `k`.
    pub fn solve(p: &QuantizedProcess, q: &QuantizedProcess, cost: &[Vec<f64>], k: usize) -> Result<Self> {
        if k == 0 || k > p.k() || k > q.k() {
            return invalid_arg(format!("block length {k} must lie in 1..={}", p.k().min(q.k())));
        }
        let (na, nb) = (p.alphabet_size(), q.alphabet_size());
        check_cost(cost, na, nb)?;
        let pk = p.marginal(k)?;
        let qk = q.marginal(k)?;
        let sp: Vec<usize> = (0..pk.block_dist().len()).filter(|&i| pk.block_dist()[i] > 0.0).collect();
        let sq: Vec<usize> = (0..qk.block_dist().len()).filter(|&i| qk.block_dist()[i] > 0.0).collect();
        let nvars = sp.len() * sq.len();
        if nvars > MAX_LP_VARIABLES {
            return Err(Error::Budget(format!("coupling LP has {nvars} variables, above the cap of {MAX_LP_VARIABLES}")));
        }
        let var = |i: usize, j: usize| i * sq.len() + j;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut rhs = Vec::new();
        for (i, &a) in sp.iter().enumerate() {
            let mut row = vec![0.0; nvars];
            for j in 0..sq.len() {
                row[var(i, j)] = 1.0;
            }
            rows.push(row);
            rhs.push(pk.block_dist()[a]);
        }
        for (j, &b) in sq.iter().enumerate() {
            let mut row = vec![0.0; nvars];
            for i in 0..sp.len() {
                row[var(i, j)] = 1.0;
            }
            rows.push(row);
            rhs.push(qk.block_dist()[b]);
        }
        if k > 1 {
            let tail_a = block_count(na, k - 1)?;
            let tail_b = block_count(nb, k - 1)?;
            let mut pair_row: HashMap<(usize, usize), usize> = HashMap::new();
            let mut shift_rows: Vec<Vec<f64>> = Vec::new();
            for (i, &a) in sp.iter().enumerate() {
                for (j, &b) in sq.iter().enumerate() {
                    for (key, coef) in [((a / na, b / nb), 1.0), ((a % tail_a, b % tail_b), -1.0)] {
                        let r = *pair_row.entry(key).or_insert_with(|| {
                            shift_rows.push(vec![0.0; nvars]);
                            shift_rows.len() - 1
                        });
                        shift_rows[r][var(i, j)] += coef;
                    }
                }
            }
            for row in shift_rows {
                if row.iter().any(|v| *v != 0.0) {
                    rows.push(row);
                    rhs.push(0.0);
                }
            }
        }
        let lead_a = block_count(na, k - 1)?;
        let lead_b = block_count(nb, k - 1)?;
        let mut c = vec![0.0; nvars];
        for (i, &a) in sp.iter().enumerate() {
            for (j, &b) in sq.iter().enumerate() {
                c[var(i, j)] = cost[a / lead_a][b / lead_b];
            }
        }
        let sol = simplex::minimize(&rows, &rhs, &c)?;
        let coupling = sol
            .x
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(v, mass)| (sp[v / sq.len()], sq[v % sq.len()], *mass))
            .collect();
        Ok(Self { k, alphabet_p: na, alphabet_q: nb, value: sol.value.max(0.0), coupling, variables: nvars, constraints: rows.len() })
    }

    /// CSV with columns `p_block, q_block, mass` (blocks as symbol strings).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(format!("csv: {e}"));
        wtr.write_record(["p_block", "q_block", "mass"]).map_err(io)?;
        let fmt = |mut idx: usize, a: usize| {
            let mut s = vec![0; self.k];
            for slot in s.iter_mut().rev() {
                *slot = idx % a;
                idx /= a;
            }
            s.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
        };
        for (a, b, m) in &self.coupling {
            wtr.write_record([fmt(*a, self.alphabet_p), fmt(*b, self.alphabet_q), m.to_string()]).map_err(io)?;
        }
        wtr.flush().map_err(|e| Error::Io(format!("csv: {e}")))?;
        Ok(())
    }
}

/// Optimal value of the `k`-block coupling LP: a lower bound on the
/// distortion between the quantized processes.
pub fn distortion_lower_bound(p: &QuantizedProcess, q: &QuantizedProcess, cost: &[Vec<f64>], k: usize) -> Result<f64> {
    Ok(CouplingLP::solve(p, q, cost, k)?.value)
}

/// Explicit joinings whose cost upper-bounds the distortion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoiningStrategy {
    Product,
    Diagonal,
    BestCyclicShift,
}

/// Shifts examined by [`JoiningStrategy::BestCyclicShift`].
pub const MAX_SHIFTS: usize = 4096;

pub fn distortion_upper_bound(p: &QuantizedProcess, q: &QuantizedProcess, cost: &[Vec<f64>], strategy: JoiningStrategy) -> Result<f64> {
    let (na, nb) = (p.alphabet_size(), q.alphabet_size());
    check_cost(cost, na, nb)?;
    match strategy {
        JoiningStrategy::Product => {
            let p1 = p.marginal(1)?;
            let q1 = q.marginal(1)?;
            let mut v = 0.0;
            for (a, pa) in p1.block_dist().iter().enumerate() {
                for (b, qb) in q1.block_dist().iter().enumerate() {
                    v += pa * qb * cost[a][b];
                }
            }
            Ok(v)
        }
        JoiningStrategy::Diagonal => {
            let k = p.k().min(q.k());
            let (pk, qk) = (p.marginal(k)?, q.marginal(k)?);
            let same = na == nb && pk.block_dist().iter().zip(qk.block_dist()).all(|(a, b)| (a - b).abs() <= 1e-12);
            if !same {
                return invalid_arg("the diagonal joining needs identical processes");
            }
            Ok(p.marginal(1)?.block_dist().iter().enumerate().map(|(a, pa)| pa * cost[a][a]).sum())
        }
        JoiningStrategy::BestCyclicShift => {
            let (Some(x), Some(y)) = (p.source(), q.source()) else {
                return invalid_arg("the cyclic-shift joining needs the source symbol sequences");
            };
            if x.len() != y.len() {
                return invalid_arg(format!("source lengths differ: {} vs {}", x.len(), y.len()));
            }
            let len = x.len();
            let mut best = f64::INFINITY;
            for s in 0..len.min(MAX_SHIFTS) {
                let v: f64 = (0..len).map(|i| cost[x[i] as usize][y[(i + s) % len] as usize]).sum::<f64>() / len as f64;
                best = best.min(v);
            }
            Ok(best)
        }
    }
}

/// Lower and upper distortion bounds for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionBounds {
    pub lower: f64,
    pub upper: f64,
    pub k: usize,
    pub joining_used: JoiningStrategy,
}

/// LP lower bound at block length `k` and the best applicable explicit joining.
pub fn distortion_bounds(p: &QuantizedProcess, q: &QuantizedProcess, cost: &[Vec<f64>], k: usize) -> Result<DistortionBounds> {
    let lower = distortion_lower_bound(p, q, cost, k)?;
    let mut upper = distortion_upper_bound(p, q, cost, JoiningStrategy::Product)?;
    let mut used = JoiningStrategy::Product;
    for s in [JoiningStrategy::Diagonal, JoiningStrategy::BestCyclicShift] {
        if let Ok(v) = distortion_upper_bound(p, q, cost, s) {
            if v < upper {
                upper = v;
                used = s;
            }
        }
    }
    Ok(DistortionBounds { lower, upper, k, joining_used: used })
}

// ---------------------------------------------------------------------------
// Signal plus noise

/// Settings for [`signal_noise_identity_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityCheckConfig {
    pub n: usize,
    pub k: usize,
    pub quantizer: Quantizer,
    /// Initial states per model (grid over the state domain).
    pub x_points: usize,
    /// Overrides the resolution of continuous parameter axes.
    pub theta_resolution: Option<usize>,
    pub burn_in: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    /// `min_θ γ̂(U_θ, V + ε)`.
    pub lhs: f64,
    /// `min_θ γ̂(U_θ, V) + σ²`.
    pub rhs: f64,
    pub gap: f64,
    pub lhs_theta: Vec<f64>,
    pub rhs_theta: Vec<f64>,
}

/// Compare `min_θ γ₂(U_θ, V + ε)` with `min_θ γ₂(U_θ, V) + σ²` using
/// quantized LP lower bounds over the family's grid. `zero_entropy` must be
/// established by the caller (for example from a complexity report).
pub fn signal_noise_identity_check(
    family: &ModelFamily,
    signal: &SignalSpec,
    sigma: f64,
    cfg: &IdentityCheckConfig,
    zero_entropy: bool,
    seed: u64,
) -> Result<IdentityCheck> {
    if !zero_entropy {
        return Err(Error::Precondition("the identity check needs a zero-entropy family".into()));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return invalid_arg(format!("sigma must be finite and nonnegative, got {sigma}"));
    }
    let v = signal.generate(cfg.n)?;
    let mut y = v.clone();
    if sigma > 0.0 {
        let noise = NoiseModel::Gaussian { sigma };
        let mut s = rng::stream(seed, "distortion/noise", &[]);
        for t in y.iter_mut() {
            *t += noise.sample(&mut s);
        }
    }
    let qv = quantize_with(&v, &cfg.quantizer, cfg.k)?;
    let qy = quantize_with(&y, &cfg.quantizer, cfg.k)?;
    let cost = cfg.quantizer.cost_table(&LossSpec::Squared);
    let params = match cfg.theta_resolution {
        Some(r) => family.params().with_resolution(r)?,
        None => family.params().clone(),
    };
    let xs = family.domain().grid(cfg.x_points.max(1));
    let mut lhs = (f64::INFINITY, Vec::new());
    let mut rhs = (f64::INFINITY, Vec::new());
    let mut u = vec![0.0; cfg.n];
    for theta in params.grid() {
        for x0 in &xs {
            let mut x = x0.clone();
            advance(family, &theta, &mut x, cfg.burn_in);
            orbit_into(family, &theta, &x, &mut u);
            let qu = quantize_with(&u, &cfg.quantizer, cfg.k)?;
            let a = distortion_lower_bound(&qu, &qy, &cost, cfg.k)?;
            let b = if sigma == 0.0 { a } else { distortion_lower_bound(&qu, &qv, &cost, cfg.k)? };
            if a < lhs.0 {
                lhs = (a, theta.clone());
            }
            if b < rhs.0 {
                rhs = (b, theta.clone());
            }
        }
    }
    let rhs_val = rhs.0 + sigma * sigma;
    Ok(IdentityCheck { lhs: lhs.0, rhs: rhs_val, gap: (lhs.0 - rhs_val).abs(), lhs_theta: lhs.1, rhs_theta: rhs.1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::orbit;
    use crate::families::make_logistic;
    use nalgebra::{DMatrix, DVector};

    fn iid_coin(k: usize) -> QuantizedProcess {
        QuantizedProcess::iid(&[0.5, 0.5], k).unwrap()
    }

    #[test]
    fn quantize_examples() {
        let q = quantize(&vec![0.3; 100], &[0.5], 2).unwrap();
        assert_eq!(q.block_dist(), &[1.0, 0.0, 0.0, 0.0]);
        let alt: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let q = quantize(&alt, &[0.5], 2).unwrap();
        assert_eq!(q.block_dist(), &[0.0, 0.5, 0.5, 0.0]);
        match quantize(&alt[..30], &[0.5], 2) {
            Err(Error::DataStarvation { required, got }) => assert_eq!((required, got), (40, 30)),
            other => panic!("{other:?}"),
        }
        assert!(quantize(&alt, &[0.5, 0.5], 1).is_err());
    }

    #[test]
    fn logistic_symbolic_process_is_a_fair_coin() {
        let f = make_logistic(0.0, 4.0).unwrap();
        let y = orbit(&f, &[4.0], &[0.1234], 100_000).unwrap();
        let q = quantize(y.values(), &[0.5], 3).unwrap();
        assert!(q.block_dist().iter().all(|p| *p > 0.0));
        let tv: f64 = q.block_dist().iter().map(|p| (p - 0.125).abs()).sum::<f64>() / 2.0;
        assert!(tv <= 0.02, "tv = {tv}");
    }

    #[test]
    fn quantizer_midpoints() {
        let q = Quantizer::from_cuts(vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(q.midpoints(), &[-0.5, 0.5, 2.0, 4.0]);
        assert_eq!((q.symbol(-7.0), q.symbol(0.0), q.symbol(2.9), q.symbol(3.0)), (0, 1, 2, 3));
        let u = Quantizer::uniform(0.0, 1.0, 4).unwrap();
        assert_eq!(u.midpoints(), &[0.125, 0.375, 0.625, 0.875]);
        assert_eq!(u.cuts(), &[0.25, 0.5, 0.75]);
    }

    #[test]
    fn lower_bound_examples() {
        let h = hamming(2);
        for k in 1..=3 {
            let p = iid_coin(3);
            assert!(distortion_lower_bound(&p, &p, &h, k).unwrap().abs() < 1e-12);
        }
        let zero = QuantizedProcess::constant(2, 0, 1).unwrap();
        assert!((distortion_lower_bound(&zero, &iid_coin(1), &h, 1).unwrap() - 0.5).abs() < 1e-12);
        let p2 = QuantizedProcess::periodic(2, &[0, 1], 2).unwrap();
        let swapped = QuantizedProcess::periodic(2, &[1, 0], 2).unwrap();
        assert!(distortion_lower_bound(&p2, &p2, &h, 2).unwrap().abs() < 1e-12);
        assert!(distortion_lower_bound(&p2, &swapped, &h, 2).unwrap().abs() < 1e-12);
    }

    /// Minimum of `cᵀx` over the vertices of `{Ax = b, x ≥ 0}`, by enumerating
    /// column subsets of size `rank(A)`.
    fn vertex_minimum(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> f64 {
        let n = a.ncols();
        let rank = a.rank(1e-9);
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != rank {
                continue;
            }
            let cols: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 1).collect();
            let sub = a.select_columns(cols.iter());
            let Some(xb) = sub.clone().svd(true, true).solve(b, 1e-12).ok() else { continue };
            if (&sub * &xb - b).norm() > 1e-9 || xb.iter().any(|v| *v < -1e-12) {
                continue;
            }
            let val: f64 = cols.iter().zip(xb.iter()).map(|(j, v)| c[*j] * v).sum();
            best = best.min(val);
        }
        best
    }

    fn lp_matrix(p: &QuantizedProcess, q: &QuantizedProcess, cost: &[Vec<f64>], k: usize) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        // Full-table formulation (no support pruning) as an independent check.
        let (na, nb) = (p.alphabet_size(), q.alphabet_size());
        let (sa, sb) = (na.pow(k as u32), nb.pow(k as u32));
        let n = sa * sb;
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for a in 0..sa {
            let mut r = vec![0.0; n];
            (0..sb).for_each(|b| r[a * sb + b] = 1.0);
            rows.push(r);
            rhs.push(p.marginal(k).unwrap().block_dist()[a]);
        }
        for b in 0..sb {
            let mut r = vec![0.0; n];
            (0..sa).for_each(|a| r[a * sb + b] = 1.0);
            rows.push(r);
            rhs.push(q.marginal(k).unwrap().block_dist()[b]);
        }
        if k > 1 {
            let (ta, tb) = (na.pow(k as u32 - 1), nb.pow(k as u32 - 1));
            for ha in 0..ta {
                for hb in 0..tb {
                    let mut r = vec![0.0; n];
                    for a in 0..sa {
                        for b in 0..sb {
                            if a / na == ha && b / nb == hb {
                                r[a * sb + b] += 1.0;
                            }
                            if a % ta == ha && b % tb == hb {
                                r[a * sb + b] -= 1.0;
                            }
                        }
                    }
                    rows.push(r);
                    rhs.push(0.0);
                }
            }
        }
        let lead = (na.pow(k as u32 - 1), nb.pow(k as u32 - 1));
        let c = DVector::from_fn(n, |v, _| cost[(v / sb) / lead.0][(v % sb) / lead.1]);
        let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        (a, DVector::from_vec(rhs), c)
    }

    #[test]
    fn lp_matches_vertex_enumeration() {
        let h = hamming(2);
        let p2 = QuantizedProcess::periodic(2, &[0, 1], 2).unwrap();
        let swapped = QuantizedProcess::periodic(2, &[1, 0], 2).unwrap();
        let skew = QuantizedProcess::iid(&[0.3, 0.7], 2).unwrap();
        let markov = QuantizedProcess::new(2, 2, vec![0.4, 0.2, 0.2, 0.2]).unwrap();
        for (p, q, k) in [(&p2, &swapped, 2), (&p2, &skew, 1), (&skew, &markov, 1), (&p2, &markov, 2)] {
            let (a, b, c) = lp_matrix(p, q, &h, k);
            if a.ncols() > 16 {
                continue;
            }
            let want = vertex_minimum(&a, &b, &c);
            let got = distortion_lower_bound(p, q, &h, k).unwrap();
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn upper_bound_examples() {
        let h = hamming(2);
        let zero = QuantizedProcess::constant(2, 0, 1).unwrap();
        assert!((distortion_upper_bound(&zero, &iid_coin(1), &h, JoiningStrategy::Product).unwrap() - 0.5).abs() < 1e-15);
        let c = iid_coin(2);
        assert_eq!(distortion_upper_bound(&c, &c, &h, JoiningStrategy::Diagonal).unwrap(), 0.0);
        assert!(distortion_upper_bound(&zero, &iid_coin(1), &h, JoiningStrategy::Diagonal).is_err());
        let p2 = QuantizedProcess::periodic(2, &[0, 1], 2).unwrap();
        let swapped = QuantizedProcess::periodic(2, &[1, 0], 2).unwrap();
        assert_eq!(distortion_upper_bound(&p2, &swapped, &h, JoiningStrategy::BestCyclicShift).unwrap(), 0.0);
        assert!(distortion_upper_bound(&c, &c, &h, JoiningStrategy::BestCyclicShift).is_err());
    }

    #[test]
    fn sandwich_and_monotonicity_on_orbits() {
        let f = make_logistic(0.0, 4.0).unwrap();
        let a = orbit(&f, &[3.7], &[0.3], 20_000).unwrap();
        let b = orbit(&f, &[3.9], &[0.6], 20_000).unwrap();
        let q = Quantizer::uniform(0.0, 1.0, 3).unwrap();
        let cost = q.cost_table(&LossSpec::Squared);
        let pa = quantize_with(a.values(), &q, 3).unwrap();
        let pb = quantize_with(b.values(), &q, 3).unwrap();
        let mut prev = 0.0;
        for k in 1..=3 {
            let bounds = distortion_bounds(&pa, &pb, &cost, k).unwrap();
            assert!(bounds.lower <= bounds.upper + 1e-9);
            assert!(bounds.lower >= prev - 1e-9);
            prev = bounds.lower;
        }
    }

    #[test]
    fn root_distortion_is_a_metric_at_block_length_one() {
        let q = Quantizer::uniform(0.0, 1.0, 4).unwrap();
        let cost = q.cost_table(&LossSpec::Squared);
        let f = make_logistic(0.0, 4.0).unwrap();
        let procs: Vec<QuantizedProcess> = [(3.5, 0.2), (3.8, 0.3), (4.0, 0.17), (3.2, 0.4)]
            .iter()
            .map(|(a, x)| quantize_with(orbit(&f, &[*a], &[*x], 5000).unwrap().values(), &q, 1).unwrap())
            .collect();
        let d = |i: usize, j: usize| distortion_lower_bound(&procs[i], &procs[j], &cost, 1).unwrap().sqrt();
        for i in 0..4 {
            for j in 0..4 {
                assert!((d(i, j) - d(j, i)).abs() < 1e-9);
                for l in 0..4 {
                    assert!(d(i, l) <= d(i, j) + d(j, l) + 1e-6);
                }
            }
        }
    }

    #[test]
    fn variable_cap_is_enforced() {
        let p = QuantizedProcess::iid(&[0.1; 10], 3).unwrap();
        assert!(matches!(distortion_lower_bound(&p, &p, &hamming(10), 3), Err(Error::Budget(_))));
    }

    #[test]
    fn coupling_csv() {
        let p2 = QuantizedProcess::periodic(2, &[0, 1], 2).unwrap();
        let lp = CouplingLP::solve(&p2, &p2, &hamming(2), 2).unwrap();
        let mut buf = Vec::new();
        lp.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("p_block,q_block,mass\n"));
        assert!(text.contains("0 1,0 1,0.5"));
    }

    #[test]
    fn identity_check_without_noise_is_exact() {
        let f = make_logistic(3.0, 3.2).unwrap();
        let cfg = IdentityCheckConfig {
            n: 2000,
            k: 1,
            quantizer: Quantizer::uniform(0.0, 1.0, 5).unwrap(),
            x_points: 2,
            theta_resolution: Some(3),
            burn_in: 100,
        };
        let signal = SignalSpec::Constant { value: 0.6 };
        let r = signal_noise_identity_check(&f, &signal, 0.0, &cfg, true, 0).unwrap();
        assert_eq!(r.lhs, r.rhs);
        assert!(signal_noise_identity_check(&f, &signal, 0.0, &cfg, false, 0).is_err());
    }
}
