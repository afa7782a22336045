//! Empirical risk, approximate minimum-risk estimation over `(θ, x)`,
//! estimator sequences over growing horizons and the noise-smoothed
//! auxiliary loss.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{advance, orbit_into, RealSequence};
use crate::error::{invalid_arg, Error, Result};
use crate::families::{FamilySpec, ModelFamily};
use crate::meanwidth::NoiseModel;
use crate::rng;
use crate::search::{self, SearchConfig};

/// Nonnegative loss `ℓ(u, v)` between a model output `u` and a datum `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossSpec {
    Squared,
    Absolute,
    /// Bregman divergence `F(v) − F(u) − (v − u) F′(u)` of the polynomial
    /// `F(x) = Σ_i coeffs[i] x^i`.
    Bregman { coeffs: Vec<f64> },
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

fn poly_deriv(c: &[f64], x: f64) -> f64 {
    c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (i, a)| acc * x + i as f64 * a)
}

fn poly_second(c: &[f64], x: f64) -> f64 {
    c.iter().enumerate().skip(2).rev().fold(0.0, |acc, (i, a)| acc * x + (i * (i - 1)) as f64 * a)
}

impl LossSpec {
    #[inline]
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        match self {
            LossSpec::Squared => (u - v) * (u - v),
            LossSpec::Absolute => (u - v).abs(),
            LossSpec::Bregman { coeffs } => (poly(coeffs, v) - poly(coeffs, u) - (v - u) * poly_deriv(coeffs, u)).max(0.0),
        }
    }

    /// Check convexity of the Bregman potential on `[lo, hi]` (sampled at
    /// 1001 points); other losses are always valid.
    pub fn validate_on(&self, lo: f64, hi: f64) -> Result<()> {
        if let LossSpec::Bregman { coeffs } = self {
            if coeffs.iter().any(|c| !c.is_finite()) {
                return invalid_arg("Bregman coefficients must be finite");
            }
            for i in 0..=1000 {
                let x = lo + (hi - lo) * i as f64 / 1000.0;
                if poly_second(coeffs, x) < -1e-12 {
                    return invalid_arg(format!("Bregman potential is not convex at x = {x}"));
                }
            }
        }
        Ok(())
    }
}

/// Signal generator for reproducible series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Constant { value: f64 },
    /// Observed orbit of a family member after `burn_in` steps.
    Orbit { family: FamilySpec, theta: Vec<f64>, x0: Vec<f64>, burn_in: usize },
}

impl SignalSpec {
    pub fn generate(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            SignalSpec::Constant { value } => Ok(vec![*value; n]),
            SignalSpec::Orbit { family, theta, x0, burn_in } => {
                let f = family.build()?;
                f.check(theta, x0)?;
                let mut x = x0.clone();
                advance(&f, theta, &mut x, *burn_in);
                let mut out = vec![0.0; n];
                orbit_into(&f, theta, &x, &mut out);
                Ok(out)
            }
        }
    }
}

/// How a series was generated: `Y_k = V_k + ε_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub signal: SignalSpec,
    pub noise: Option<NoiseModel>,
    pub seed: u64,
}

/// Observed data `Y_0, …, Y_{n−1}` with optional provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSeries {
    pub y: RealSequence,
    pub provenance: Option<Provenance>,
}

impl ObservedSeries {
    pub fn new(y: RealSequence) -> Self {
        Self { y, provenance: None }
    }

    pub fn generate(signal: SignalSpec, noise: Option<NoiseModel>, n: usize, seed: u64) -> Result<Self> {
        let y = Self::realize(&signal, noise.as_ref(), n, seed)?;
        Ok(Self { y: RealSequence::new(y)?, provenance: Some(Provenance { signal, noise, seed }) })
    }

    fn realize(signal: &SignalSpec, noise: Option<&NoiseModel>, n: usize, seed: u64) -> Result<Vec<f64>> {
        let mut y = signal.generate(n)?;
        if let Some(nm) = noise {
            nm.validate()?;
            let mut s = rng::stream(seed, "erm/noise", &[]);
            for v in y.iter_mut() {
                *v += nm.sample(&mut s);
            }
        }
        Ok(y)
    }

    /// Noiseless signal `V` when the provenance is known.
    pub fn signal(&self) -> Option<Result<Vec<f64>>> {
        self.provenance.as_ref().map(|p| p.signal.generate(self.len()))
    }

    /// Regenerate from the provenance and compare bit for bit.
    pub fn verify(&self) -> Result<bool> {
        match &self.provenance {
            None => Ok(true),
            Some(p) => {
                let y = Self::realize(&p.signal, p.noise.as_ref(), self.len(), p.seed)?;
                Ok(y.iter().zip(self.y.values()).all(|(a, b)| a.to_bits() == b.to_bits()))
            }
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        self.y.values()
    }

    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return invalid_arg(format!("prefix length {n} outside 1..={}", self.len()));
        }
        Ok(Self { y: RealSequence::new(self.values()[..n].to_vec())?, provenance: self.provenance.clone() })
    }
}

/// `R_n(θ : x) = n⁻¹ Σ_{k<n} ℓ(f_θ(T_θ^k x), Y_k)`.
pub fn empirical_risk(family: &ModelFamily, theta: &[f64], x: &[f64], y: &ObservedSeries, loss: &LossSpec) -> Result<f64> {
    family.check(theta, x)?;
    Ok(risk_unchecked(family, theta, x, y.values(), &|u, v| loss.eval(u, v)))
}

fn risk_unchecked(family: &ModelFamily, theta: &[f64], x: &[f64], y: &[f64], loss: &(dyn Fn(f64, f64) -> f64 + Sync)) -> f64 {
    let mut state = x.to_vec();
    let mut total = 0.0;
    for (k, v) in y.iter().enumerate() {
        total += loss(family.observe(theta, &state), *v);
        if k + 1 < y.len() {
            family.step_in_place(theta, &mut state);
        }
    }
    total / y.len() as f64
}

/// One estimator at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub n: usize,
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
    pub risk: f64,
    /// Minimum of `risk` over this and earlier trace entries.
    pub running_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub grid_size: usize,
    pub refinement_steps: usize,
    pub evaluations: usize,
    /// Set when the grid was thinned to respect the candidate budget.
    pub budget_limited: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
    pub risk: f64,
    pub trace: Vec<TraceEntry>,
    pub diagnostics: FitDiagnostics,
    pub warnings: Vec<String>,
}

impl FitResult {
    /// CSV with columns `n, theta_0, …, risk`.
    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(format!("csv: {e}"));
        let mut header = vec!["n".to_string()];
        header.extend((0..self.theta.len()).map(|i| format!("theta_{i}")));
        header.push("risk".into());
        wtr.write_record(&header).map_err(io)?;
        for t in &self.trace {
            let mut row = vec![t.n.to_string()];
            row.extend(t.theta.iter().map(|v| v.to_string()));
            row.push(t.risk.to_string());
            wtr.write_record(&row).map_err(io)?;
        }
        wtr.flush().map_err(|e| Error::Io(format!("csv: {e}")))?;
        Ok(())
    }
}

/// Kurtosis above which per-sample losses are flagged as heavy-tailed.
pub const KURTOSIS_WARNING: f64 = 100.0;

fn kurtosis(values: &[f64]) -> f64 {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / m;
    if m2 == 0.0 {
        0.0
    } else {
        m4 / (m2 * m2)
    }
}

/// Approximate minimizer of `R_n` over `(θ, x)`.
///
/// The seed is recorded for interface symmetry; the search is deterministic.
pub fn fit(family: &ModelFamily, y: &ObservedSeries, loss: &LossSpec, search: &SearchConfig, _seed: u64) -> Result<FitResult> {
    let n = y.len();
    let mut res = fit_with(family, y.values(), &[n], &|u, v| loss.eval(u, v), search, None)?;
    res.warnings = loss_warnings(family, &res, y.values(), loss);
    Ok(res)
}

/// Fit on every prefix `Y_0..Y_{n−1}` for `n` in `horizons`, reusing orbit
/// prefixes across horizons. The returned estimate is the one at the largest
/// horizon.
pub fn estimator_sequence(
    family: &ModelFamily,
    y: &ObservedSeries,
    loss: &LossSpec,
    horizons: &[usize],
    search: &SearchConfig,
    _seed: u64,
) -> Result<FitResult> {
    let mut res = fit_with(family, y.values(), horizons, &|u, v| loss.eval(u, v), search, None)?;
    let n = *horizons.last().expect("validated horizons");
    res.warnings = loss_warnings(family, &res, &y.values()[..n], loss);
    Ok(res)
}

fn loss_warnings(family: &ModelFamily, res: &FitResult, y: &[f64], loss: &LossSpec) -> Vec<String> {
    let mut u = vec![0.0; y.len()];
    orbit_into(family, &res.theta, &res.x, &mut u);
    let losses: Vec<f64> = u.iter().zip(y).map(|(a, b)| loss.eval(*a, *b)).collect();
    let k = kurtosis(&losses);
    if k > KURTOSIS_WARNING {
        vec![format!("sample losses are heavy-tailed (kurtosis {k:.1})")]
    } else {
        Vec::new()
    }
}

/// Best fit with `θ` held fixed (search over the initial state only).
pub fn fit_given_theta(family: &ModelFamily, y: &ObservedSeries, loss: &LossSpec, theta: &[f64], search: &SearchConfig) -> Result<FitResult> {
    family.params().check(theta)?;
    let n = y.len();
    let mut res = fit_with(family, y.values(), &[n], &|u, v| loss.eval(u, v), search, Some(&[theta.to_vec()]))?;
    res.warnings = loss_warnings(family, &res, y.values(), loss);
    Ok(res)
}

/// Core search with an arbitrary loss closure. When `thetas` is given the
/// parameter is held on that list and only state coordinates are refined.
pub(crate) fn fit_with(
    family: &ModelFamily,
    y: &[f64],
    horizons: &[usize],
    loss: &(dyn Fn(f64, f64) -> f64 + Sync),
    cfg: &SearchConfig,
    thetas: Option<&[Vec<f64>]>,
) -> Result<FitResult> {
    if y.is_empty() {
        return invalid_arg("observed series is empty");
    }
    if horizons.is_empty() || horizons[0] == 0 || horizons.windows(2).any(|w| w[0] >= w[1]) {
        return invalid_arg("horizons must be positive and strictly increasing");
    }
    let n_max = *horizons.last().expect("nonempty");
    if n_max > y.len() {
        return invalid_arg(format!("horizon {n_max} exceeds the series length {}", y.len()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return invalid_arg("observed values must be finite");
    }
    let mut cands = search::candidates(family, cfg)?;
    let fixed_theta = thetas.is_some();
    if let Some(t) = thetas {
        cands.thetas = t.to_vec();
    }
    let h = horizons.len();

    // For each θ cell: the best (risk, x index) per horizon, scanning x in order.
    let per_theta: Vec<Vec<(f64, usize)>> = cands
        .thetas
        .par_iter()
        .map(|theta| {
            let mut best = vec![(f64::INFINITY, 0usize); h];
            let mut state = vec![0.0; family.state_dim()];
            for (xi, x) in cands.xs.iter().enumerate() {
                state.copy_from_slice(x);
                let mut total = 0.0;
                let mut next = 0;
                for (k, v) in y[..n_max].iter().enumerate() {
                    total += loss(family.observe(theta, &state), *v);
                    if k + 1 == horizons[next] {
                        let r = total / (k + 1) as f64;
                        if r < best[next].0 {
                            best[next] = (r, xi);
                        }
                        next += 1;
                    }
                    if k + 1 < n_max {
                        family.step_in_place(theta, &mut state);
                    }
                }
            }
            best
        })
        .collect();

    let mut trace = Vec::with_capacity(h);
    let mut steps = 0;
    let mut evaluations = cands.len() * h;
    let mut running_min = f64::INFINITY;
    for (j, &n) in horizons.iter().enumerate() {
        let mut best: Option<(f64, usize, usize)> = None;
        for (ti, cells) in per_theta.iter().enumerate() {
            let (r, xi) = cells[j];
            let wins = match best {
                None => true,
                Some((br, bt, bx)) => search::better((r, &cands.thetas[ti], &cands.xs[xi]), (br, &cands.thetas[bt], &cands.xs[bx])),
            };
            if wins {
                best = Some((r, ti, xi));
            }
        }
        let (r, ti, xi) = best.expect("nonempty grid");
        let yn = &y[..n];
        let theta0 = cands.thetas[ti].clone();
        let refined = search::refine(family, cfg, &cands.thetas[ti], &cands.xs[xi], r, |t, x| {
            if fixed_theta && t != theta0.as_slice() {
                f64::INFINITY
            } else {
                risk_unchecked(family, t, x, yn, loss)
            }
        });
        steps += refined.steps;
        evaluations += refined.evaluations;
        // Report the risk recomputed at the returned point.
        let risk = risk_unchecked(family, &refined.theta, &refined.x, yn, loss);
        running_min = running_min.min(risk);
        trace.push(TraceEntry { n, theta: refined.theta, x: refined.x, risk, running_min });
    }
    let last = trace.last().expect("nonempty trace").clone();
    Ok(FitResult {
        theta: last.theta,
        x: last.x,
        risk: last.risk,
        trace,
        diagnostics: FitDiagnostics {
            grid_size: cands.len(),
            refinement_steps: steps,
            evaluations,
            budget_limited: cands.truncated,
        },
        warnings: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// Auxiliary loss

/// `L(u, v) = E ℓ(u, v + ε₀)`.
#[derive(Debug, Clone, PartialEq)]
pub enum AuxiliaryLoss {
    /// `(u − v)² + Var(ε)`.
    SquaredClosedForm { variance: f64 },
    /// Sample average over fixed noise draws.
    MonteCarlo { loss: LossSpec, draws: Vec<f64> },
}

impl AuxiliaryLoss {
    /// Value and standard error (zero for closed forms).
    pub fn eval(&self, u: f64, v: f64) -> (f64, f64) {
        match self {
            AuxiliaryLoss::SquaredClosedForm { variance } => ((u - v) * (u - v) + variance, 0.0),
            AuxiliaryLoss::MonteCarlo { loss, draws } => {
                let m = draws.len() as f64;
                let vals: Vec<f64> = draws.iter().map(|e| loss.eval(u, v + e)).collect();
                let mean = vals.iter().sum::<f64>() / m;
                let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
                (mean, (var / m).sqrt())
            }
        }
    }
}

pub fn auxiliary_loss(loss: &LossSpec, noise: &NoiseModel, mc_samples: usize, seed: u64) -> Result<AuxiliaryLoss> {
    noise.validate()?;
    if let LossSpec::Squared = loss {
        return Ok(AuxiliaryLoss::SquaredClosedForm { variance: noise.variance() });
    }
    if mc_samples < 2 {
        return invalid_arg("Monte Carlo evaluation needs at least two samples");
    }
    let mut s = rng::stream(seed, "erm/auxiliary", &[]);
    Ok(AuxiliaryLoss::MonteCarlo { loss: loss.clone(), draws: noise.draw(&mut s, mc_samples) })
}
