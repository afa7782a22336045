//! Orbits, finite samples of the generated sequence family, and the
//! length-`n` pseudo-metrics `d_{n,p}`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid_arg, Error, Result};
use crate::families::ModelFamily;

/// Longest sequence materialized in memory.
pub const MAX_HORIZON: usize = 1 << 20;

/// Norm index `p ∈ [1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    P(f64),
    Inf,
}

impl Norm {
    pub const L1: Norm = Norm::P(1.0);
    pub const L2: Norm = Norm::P(2.0);

    pub fn new(p: f64) -> Result<Self> {
        if p.is_infinite() && p > 0.0 {
            Ok(Norm::Inf)
        } else if p >= 1.0 {
            Ok(Norm::P(p))
        } else {
            invalid_arg(format!("norm index must satisfy p >= 1, got {p}"))
        }
    }

    pub fn is_inf(&self) -> bool {
        matches!(self, Norm::Inf)
    }

    /// Distance threshold on the accumulated scale (see [`Norm::accumulate`]).
    pub(crate) fn threshold(&self, n: usize, r: f64) -> f64 {
        match self {
            Norm::Inf => r,
            Norm::P(p) if *p == 1.0 => r * n as f64,
            Norm::P(p) if *p == 2.0 => r * r * n as f64,
            Norm::P(p) => r.powf(*p) * n as f64,
        }
    }

    /// Per-coordinate contribution on the accumulated scale.
    #[inline]
    pub(crate) fn term(&self, d: f64) -> f64 {
        match self {
            Norm::Inf | Norm::P(1.0) => d.abs(),
            Norm::P(2.0) => d * d,
            Norm::P(p) => d.abs().powf(*p),
        }
    }

    /// Unnormalized accumulated distance: `Σ|d|^p`, or `max|d|` for `p = ∞`.
    #[inline]
    pub(crate) fn accumulate(&self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            Norm::Inf => u.iter().zip(v).fold(0.0, |m, (a, b)| m.max((a - b).abs())),
            _ => u.iter().zip(v).map(|(a, b)| self.term(a - b)).sum(),
        }
    }

    /// `accumulate(u, v) <= threshold`, with early exit.
    #[inline]
    pub(crate) fn within(&self, u: &[f64], v: &[f64], threshold: f64) -> bool {
        match self {
            Norm::Inf => u.iter().zip(v).all(|(a, b)| (a - b).abs() <= threshold),
            _ => {
                let mut acc = 0.0;
                for (a, b) in u.iter().zip(v) {
                    acc += self.term(a - b);
                    if acc > threshold {
                        return false;
                    }
                }
                true
            }
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Norm::Inf => write!(f, "inf"),
            Norm::P(p) => write!(f, "{p}"),
        }
    }
}

impl Serialize for Norm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Norm::Inf => s.serialize_str("inf"),
            Norm::P(p) => s.serialize_f64(*p),
        }
    }
}

impl<'de> Deserialize<'de> for Norm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Norm::new(p).map_err(serde::de::Error::custom),
            Raw::Str(s) if s == "inf" || s == "infinity" => Ok(Norm::Inf),
            Raw::Str(s) => s.parse::<f64>().map_err(serde::de::Error::custom).and_then(|p| Norm::new(p).map_err(serde::de::Error::custom)),
        }
    }
}

/// A finite real sequence with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RealSequence(Vec<f64>);

impl RealSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return invalid_arg("sequences must have length >= 1");
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid_arg(format!("sequence value at index {i} is not finite"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for RealSequence {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RealSequence> for Vec<f64> {
    fn from(s: RealSequence) -> Self {
        s.0
    }
}

impl AsRef<[f64]> for RealSequence {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Fill `out` with `f_θ(T_θ^k x)` for `k < out.len()`. No domain checks.
#[inline]
pub fn orbit_into(family: &ModelFamily, theta: &[f64], x0: &[f64], out: &mut [f64]) {
    let mut x = x0.to_vec();
    let n = out.len();
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = family.observe(theta, &x);
        if k + 1 < n {
            family.step_in_place(theta, &mut x);
        }
    }
}

/// `(f_θ(x0), f_θ(T_θ x0), …, f_θ(T_θ^{n−1} x0))`.
pub fn orbit(family: &ModelFamily, theta: &[f64], x0: &[f64], n: usize) -> Result<RealSequence> {
    family.check(theta, x0)?;
    if n == 0 || n > MAX_HORIZON {
        return invalid_arg(format!("horizon must lie in 1..={MAX_HORIZON}, got {n}"));
    }
    let mut out = vec![0.0; n];
    orbit_into(family, theta, x0, &mut out);
    RealSequence::new(out)
}

/// Advance `x` by `steps` applications of `T_θ`.
pub fn advance(family: &ModelFamily, theta: &[f64], x: &mut [f64], steps: usize) {
    for _ in 0..steps {
        family.step_in_place(theta, x);
    }
}

/// Finite sample of the sequence family: one length-`n` orbit per
/// `(θ, x0)` grid pair, in `θ`-major grid order.
///
/// Values are stored row-major in one contiguous buffer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceSample {
    family_id: String,
    n: usize,
    thetas: Vec<Vec<f64>>,
    states: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl SequenceSample {
    /// Build a sample directly from sequences of equal length.
    pub fn from_sequences(family_id: impl Into<String>, sequences: Vec<Vec<f64>>) -> Result<Self> {
        let count = sequences.len();
        if count == 0 {
            return invalid_arg("a sample needs at least one sequence");
        }
        let n = sequences[0].len();
        if n == 0 {
            return invalid_arg("sequences must have length >= 1");
        }
        if sequences.iter().any(|s| s.len() != n) {
            return invalid_arg("all sequences in a sample must share one length");
        }
        let values: Vec<f64> = sequences.into_iter().flatten().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return invalid_arg("sample values must be finite");
        }
        Ok(Self {
            family_id: family_id.into(),
            n,
            thetas: vec![Vec::new(); 1],
            states: (0..count).map(|i| vec![i as f64]).collect(),
            values,
        })
    }

    pub fn family_id(&self) -> &str {
        &self.family_id
    }

    /// Horizon (sequence length).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn sequence(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// Length-`m` prefix of entry `i` (`m ≤ n`).
    #[inline]
    pub fn prefix(&self, i: usize, m: usize) -> &[f64] {
        &self.values[i * self.n..i * self.n + m]
    }

    /// `(θ, x0)` of entry `i`.
    pub fn entry(&self, i: usize) -> (&[f64], &[f64]) {
        let per_theta = self.states.len();
        let theta_idx = if self.thetas.len() == 1 { 0 } else { i / per_theta };
        (&self.thetas[theta_idx], &self.states[i % per_theta])
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n)
    }
}

/// One orbit per `(θ, x0) ∈ θ_grid × x_grid`, computed in parallel; the
/// entry order is the grid order regardless of thread count.
pub fn sample_sequences(family: &ModelFamily, theta_grid: &[Vec<f64>], x_grid: &[Vec<f64>], n: usize) -> Result<SequenceSample> {
    if theta_grid.is_empty() || x_grid.is_empty() {
        return invalid_arg("parameter and state grids must be nonempty");
    }
    if n == 0 || n > MAX_HORIZON {
        return invalid_arg(format!("horizon must lie in 1..={MAX_HORIZON}, got {n}"));
    }
    for t in theta_grid {
        family.params().check(t)?;
    }
    for x in x_grid {
        family.domain().check(x)?;
    }
    let per = x_grid.len();
    let mut values = vec![0.0; theta_grid.len() * per * n];
    values.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
        orbit_into(family, &theta_grid[i / per], &x_grid[i % per], out);
    });
    Ok(SequenceSample {
        family_id: family.id().to_string(),
        n,
        thetas: theta_grid.to_vec(),
        states: x_grid.to_vec(),
        values,
    })
}

/// `d_{n,p}(u, v) = (n⁻¹ Σ|u_k − v_k|^p)^{1/p}`, or `max_k |u_k − v_k|` for `p = ∞`.
pub fn pseudo_metric(u: &[f64], v: &[f64], p: Norm) -> Result<f64> {
    if u.len() != v.len() {
        return invalid_arg(format!("length mismatch: {} vs {}", u.len(), v.len()));
    }
    if u.is_empty() {
        return invalid_arg("sequences must have length >= 1");
    }
    let n = u.len() as f64;
    let acc = p.accumulate(u, v);
    Ok(match p {
        Norm::Inf => acc,
        Norm::P(q) if q == 1.0 => acc / n,
        Norm::P(q) if q == 2.0 => (acc / n).sqrt(),
        Norm::P(q) => (acc / n).powf(1.0 / q),
    })
}
