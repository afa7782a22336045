//! Monte Carlo estimation of the `n`-sample mean width
//! `κ_n = E sup_{θ,x} Σ_k f_θ(T_θ^k x) ε_k`, the noise-tracking oracle for
//! `x ↦ 4x(1 − x)`, the `σ₀` threshold and the Sudakov cross-check.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexity::ComplexityReport;
use crate::dynamics::{orbit_into, Norm, RealSequence, MAX_HORIZON};
use crate::error::{invalid_arg, Error, Result};
use crate::families::ModelFamily;
use crate::rng::{self, Stream};
use crate::search::{self, SearchConfig};

/// Zero-mean i.i.d. noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    Gaussian { sigma: f64 },
    Uniform { half_width: f64 },
    Rademacher,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                invalid_arg(format!("gaussian sigma must be positive, got {sigma}"))
            }
            NoiseModel::Uniform { half_width } if !(half_width > 0.0 && half_width.is_finite()) => {
                invalid_arg(format!("uniform half-width must be positive, got {half_width}"))
            }
            _ => Ok(()),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } => sigma * sigma,
            NoiseModel::Uniform { half_width } => half_width * half_width / 3.0,
            NoiseModel::Rademacher => 1.0,
        }
    }

    pub fn sample(&self, rng: &mut Stream) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } => Normal::new(0.0, sigma).expect("validated sigma").sample(rng),
            NoiseModel::Uniform { half_width } => rng.random_range(-half_width..=half_width),
            NoiseModel::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    pub fn draw(&self, rng: &mut Stream, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// How the supremum over `(θ, x)` is approximated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    /// Exhaustive grid, then golden-section refinement when `rounds > 0`.
    Grid(SearchConfig),
    /// Backward-iteration noise tracking; only for `x ↦ 4x(1 − x)`.
    TrackingOracle,
}

impl Optimizer {
    pub fn descriptor(&self) -> &'static str {
        match self {
            Optimizer::Grid(cfg) if cfg.rounds == 0 => "grid",
            Optimizer::Grid(_) => "grid+refine",
            Optimizer::TrackingOracle => "tracking-oracle",
        }
    }
}

/// Largest orbit matrix (candidates × n) held in memory.
pub const MATRIX_BUDGET: usize = 1 << 25;

/// Mean-width estimate at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanWidthEntry {
    pub n: usize,
    pub kappa: f64,
    pub kappa_over_n: f64,
    /// Standard error of `κ̂_n / n`.
    pub stderr: f64,
    /// Per-replicate certified maxima `Σ u_k ε_k`.
    pub maxima: Vec<f64>,
    /// Set when the search grid was thinned to respect the budget.
    pub budget_limited: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanWidthReport {
    pub family_id: String,
    pub noise: NoiseModel,
    pub replicates: usize,
    pub optimizer: String,
    pub entries: Vec<MeanWidthEntry>,
}

impl MeanWidthReport {
    pub fn horizons(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.n).collect()
    }

    pub fn entry(&self, n: usize) -> Option<&MeanWidthEntry> {
        self.entries.iter().find(|e| e.n == n)
    }

    /// CSV with columns `n, kappa_over_n, stderr, replicates, optimizer`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(format!("csv: {e}"));
        wtr.write_record(["n", "kappa_over_n", "stderr", "replicates", "optimizer"]).map_err(io)?;
        for e in &self.entries {
            wtr.write_record([
                e.n.to_string(),
                e.kappa_over_n.to_string(),
                e.stderr.to_string(),
                self.replicates.to_string(),
                self.optimizer.clone(),
            ])
            .map_err(io)?;
        }
        wtr.flush().map_err(|e| Error::Io(format!("csv: {e}")))?;
        Ok(())
    }

    /// `κ̂/n` nonincreasing in `n` up to `z` combined standard errors.
    pub fn nonincreasing_within(&self, z: f64) -> bool {
        self.entries.windows(2).all(|w| {
            let slack = z * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
            w[1].kappa_over_n <= w[0].kappa_over_n + slack
        })
    }

    /// Triples `(m, n, m + n)` of computed horizons where
    /// `κ̂_{m+n} > κ̂_m + κ̂_n` by more than `z` combined standard errors.
    pub fn subadditivity_violations(&self, z: f64) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for a in &self.entries {
            for b in &self.entries {
                if a.n > b.n {
                    continue;
                }
                if let Some(c) = self.entry(a.n + b.n) {
                    let se = |e: &MeanWidthEntry| e.stderr * e.n as f64;
                    let slack = z * (se(a).powi(2) + se(b).powi(2) + se(c).powi(2)).sqrt();
                    if c.kappa > a.kappa + b.kappa + slack {
                        out.push((a.n, b.n, c.n));
                    }
                }
            }
        }
        out
    }
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Noise stream for replicate `r` at horizon `n`.
pub fn noise_draw(noise: &NoiseModel, seed: u64, n: usize, r: usize) -> Vec<f64> {
    let mut s = rng::stream(seed, "meanwidth/noise", &[n as u64, r as u64]);
    noise.draw(&mut s, n)
}

/// Estimate `κ_n / n` from `replicates` independent noise draws.
pub fn mean_width_n(
    family: &ModelFamily,
    noise: &NoiseModel,
    n: usize,
    replicates: usize,
    optimizer: &Optimizer,
    seed: u64,
) -> Result<MeanWidthEntry> {
    noise.validate()?;
    if n == 0 || n > MAX_HORIZON {
        return invalid_arg(format!("horizon must lie in 1..={MAX_HORIZON}, got {n}"));
    }
    if replicates == 0 {
        return invalid_arg("at least one replicate is required");
    }
    let (maxima, budget_limited) = match optimizer {
        Optimizer::TrackingOracle => {
            check_tracking_family(family)?;
            let maxima = (0..replicates)
                .into_par_iter()
                .map(|r| {
                    let eps = noise_draw(noise, seed, n, r);
                    tracking_orbit_logistic4(&eps).map(|t| t.value)
                })
                .collect::<Result<Vec<_>>>()?;
            (maxima, false)
        }
        Optimizer::Grid(cfg) => grid_maxima(family, noise, n, replicates, cfg, seed)?,
    };
    let (kappa, se) = mean_and_stderr(&maxima);
    Ok(MeanWidthEntry { n, kappa, kappa_over_n: kappa / n as f64, stderr: se / n as f64, maxima, budget_limited })
}

fn grid_maxima(
    family: &ModelFamily,
    noise: &NoiseModel,
    n: usize,
    replicates: usize,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<(Vec<f64>, bool)> {
    let mut capped = cfg.clone();
    capped.max_candidates = cfg.max_candidates.min((MATRIX_BUDGET / n).max(1));
    let cands = search::candidates(family, &capped)?;
    let rows = cands.len();
    let mut matrix = vec![0.0; rows * n];
    matrix.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
        let (t, x) = cands.get(i);
        orbit_into(family, t, x, out);
    });
    let maxima = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let eps = noise_draw(noise, seed, n, r);
            let mut best = (f64::NEG_INFINITY, 0usize);
            for (i, row) in matrix.chunks_exact(n).enumerate() {
                let v: f64 = row.iter().zip(&eps).map(|(a, b)| a * b).sum();
                if v > best.0 {
                    best = (v, i);
                }
            }
            if cfg.rounds == 0 {
                return best.0;
            }
            let (t, x) = cands.get(best.1);
            let mut buf = vec![0.0; n];
            let refined = search::refine(family, cfg, t, x, -best.0, |t, x| {
                orbit_into(family, t, x, &mut buf);
                -buf.iter().zip(&eps).map(|(a, b)| a * b).sum::<f64>()
            });
            -refined.value
        })
        .collect();
    Ok((maxima, cands.truncated))
}

/// Mean-width estimates over several horizons.
pub fn mean_width(
    family: &ModelFamily,
    noise: &NoiseModel,
    horizons: &[usize],
    replicates: usize,
    optimizer: &Optimizer,
    seed: u64,
) -> Result<MeanWidthReport> {
    if horizons.windows(2).any(|w| w[0] >= w[1]) {
        return invalid_arg("horizons must be strictly increasing");
    }
    let entries =
        horizons.iter().map(|&n| mean_width_n(family, noise, n, replicates, optimizer, seed)).collect::<Result<Vec<_>>>()?;
    Ok(MeanWidthReport {
        family_id: family.id().to_string(),
        noise: *noise,
        replicates,
        optimizer: optimizer.descriptor().to_string(),
        entries,
    })
}

fn check_tracking_family(family: &ModelFamily) -> Result<()> {
    let ok = match family.id() {
        "logistic" => family.params().contains(&[4.0]),
        "identity_vs_chaos" => true,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        invalid_arg(format!("the tracking oracle needs the map 4x(1-x); family `{}` does not contain it", family.id()))
    }
}

// ---------------------------------------------------------------------------
// Noise tracking for x ↦ 4x(1 − x)

/// Depth up to which the returned initial state reproduces the target
/// itinerary under forward iteration.
pub const TRACKING_MAX_DEPTH: usize = 40;

#[inline]
fn g_lower(w: f64) -> f64 {
    // (1 − √(1 − w)) / 2 without cancellation.
    w / (2.0 * (1.0 + (1.0 - w).sqrt()))
}

#[inline]
fn g_upper(w: f64) -> f64 {
    (1.0 + (1.0 - w).sqrt()) / 2.0
}

/// Backward-iterated orbit of `x ↦ 4x(1 − x)` following the sign pattern of a
/// noise draw.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedOrbit {
    pub orbit: Vec<f64>,
    /// `Σ u_k ε_k`.
    pub value: f64,
    /// `max_k |4u_k(1 − u_k) − u_{k+1}|`.
    pub max_residual: f64,
}

/// Residual tolerance certifying a backward-iterated orbit.
pub const TRACKING_RESIDUAL_TOL: f64 = 1e-12;

/// Orbit `u` with `u_k ≥ ½` where `ε_k ≥ 0` and `u_k ≤ ½` where `ε_k < 0`,
/// built backward from the midpoint of the final target half. Works for any
/// length; the orbit is certified by its one-step residuals rather than by
/// forward recomputation from `u_0`.
pub fn tracking_orbit_logistic4(eps: &[f64]) -> Result<TrackedOrbit> {
    let n = eps.len();
    if n == 0 || n > MAX_HORIZON {
        return invalid_arg(format!("noise length must lie in 1..={MAX_HORIZON}, got {n}"));
    }
    if eps.iter().any(|e| !e.is_finite()) {
        return invalid_arg("noise values must be finite");
    }
    let mut u = vec![0.0; n];
    u[n - 1] = if eps[n - 1] >= 0.0 { 0.75 } else { 0.25 };
    for k in (0..n - 1).rev() {
        u[k] = if eps[k] >= 0.0 { g_upper(u[k + 1]) } else { g_lower(u[k + 1]) };
    }
    let max_residual = u.windows(2).map(|w| (4.0 * w[0] * (1.0 - w[0]) - w[1]).abs()).fold(0.0, f64::max);
    if max_residual > TRACKING_RESIDUAL_TOL {
        return Err(Error::Precision(format!("backward orbit residual {max_residual:e} exceeds {TRACKING_RESIDUAL_TOL:e}")));
    }
    let value = u.iter().zip(eps).map(|(a, b)| a * b).sum();
    Ok(TrackedOrbit { orbit: u, value, max_residual })
}

/// Initial state `x0` whose forward orbit tracks the signs of `ε`, and the
/// inner product of the backward orbit with `ε`. Limited to
/// [`TRACKING_MAX_DEPTH`] steps.
pub fn tracking_oracle_logistic4(eps: &RealSequence) -> Result<(f64, f64)> {
    if eps.len() > TRACKING_MAX_DEPTH {
        return Err(Error::Precision(format!(
            "tracking depth {} exceeds {TRACKING_MAX_DEPTH} in double precision",
            eps.len()
        )));
    }
    let t = tracking_orbit_logistic4(eps.values())?;
    Ok((t.orbit[0], t.value))
}

/// `σ₀ = K² / (2 κ̂_G)`.
pub fn sigma0(bound_k: f64, kappa_g: f64) -> Result<f64> {
    if !(kappa_g > 0.0 && kappa_g.is_finite()) {
        return invalid_arg(format!("kappa_G must be positive, got {kappa_g}"));
    }
    if !(bound_k >= 0.0 && bound_k.is_finite()) {
        return invalid_arg(format!("K must be finite and nonnegative, got {bound_k}"));
    }
    Ok(bound_k * bound_k / (2.0 * kappa_g))
}

/// One `(n, δ)` cell of the Sudakov comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SudakovCell {
    pub n: usize,
    pub delta: f64,
    /// `κ̂_n / n + 3 · stderr`.
    pub lhs: f64,
    /// `(δ / 6) · √(ln N(δ, d_{n,2}) / n)`.
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Compare mean width against the Sudakov lower bound on every horizon
/// present in both reports and every radius of the complexity report.
pub fn sudakov_check(report: &ComplexityReport, width: &MeanWidthReport) -> Result<Vec<SudakovCell>> {
    if report.family_id != width.family_id {
        return invalid_arg(format!("family mismatch: `{}` vs `{}`", report.family_id, width.family_id));
    }
    if report.p != Norm::L2 {
        return invalid_arg(format!("the complexity report must use p = 2, got {}", report.p));
    }
    if !matches!(width.noise, NoiseModel::Gaussian { sigma } if sigma == 1.0) {
        return invalid_arg("the mean width must be computed for standard Gaussian noise");
    }
    let mut cells = Vec::new();
    for (h, &n) in report.horizons.iter().enumerate() {
        let Some(e) = width.entry(n) else { continue };
        for (j, &delta) in report.radii.iter().enumerate() {
            let big_n = report.cover_counts[h][j] as f64;
            let lhs = e.kappa_over_n + 3.0 * e.stderr;
            let rhs = delta / 6.0 * (big_n.ln() / n as f64).sqrt();
            cells.push(SudakovCell { n, delta, lhs, rhs, margin: lhs - rhs, pass: lhs >= rhs });
        }
    }
    if cells.is_empty() {
        return invalid_arg("the reports share no horizon");
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::orbit;
    use crate::families::{make_logistic, make_rotation, thue_morse, Axis, ParameterSpace, StateDomain, TorusObservable};
    use std::sync::Arc;

    #[derive(Debug)]
    struct Frozen;

    impl crate::families::Dynamics for Frozen {
        fn step(&self, _t: &[f64], _x: &mut [f64]) {}
        fn observe(&self, t: &[f64], _x: &[f64]) -> f64 {
            t[0]
        }
    }

    fn constants(values: Vec<f64>) -> ModelFamily {
        let labels = values.iter().map(|v| v.to_string()).collect();
        let params = ParameterSpace::new(vec![Axis::Labels { labels }]).unwrap();
        #[derive(Debug)]
        struct Table(Vec<f64>);
        impl crate::families::Dynamics for Table {
            fn step(&self, _t: &[f64], _x: &mut [f64]) {}
            fn observe(&self, t: &[f64], _x: &[f64]) -> f64 {
                self.0[t[0] as usize]
            }
        }
        let k = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        ModelFamily::new("constants", params, StateDomain::UnitCube { dim: 1 }, k, Arc::new(Table(values))).unwrap()
    }

    fn grid(x_points: usize) -> Optimizer {
        Optimizer::Grid(SearchConfig { x_points, ..Default::default() })
    }

    #[test]
    fn zero_family_has_zero_width() {
        let params = ParameterSpace::new(vec![Axis::Interval { lo: 0.0, hi: 0.0, resolution: 2 }]).unwrap();
        let f = ModelFamily::new("zero", params, StateDomain::UnitCube { dim: 1 }, 0.0, Arc::new(Frozen)).unwrap();
        let e = mean_width_n(&f, &NoiseModel::Gaussian { sigma: 1.0 }, 50, 8, &grid(3), 1).unwrap();
        assert_eq!(e.kappa, 0.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn two_constants_match_half_normal_mean() {
        let c = 0.7;
        let f = constants(vec![0.0, c]);
        let n = 100;
        let e = mean_width_n(&f, &NoiseModel::Gaussian { sigma: 1.0 }, n, 4000, &grid(1), 9).unwrap();
        let want = c * (n as f64 / (2.0 * std::f64::consts::PI)).sqrt();
        assert!((e.kappa - want).abs() <= 4.0 * e.stderr * n as f64, "{} vs {want}", e.kappa);
        let per_draw: Vec<f64> = (0..4000).map(|r| (c * noise_draw(&NoiseModel::Gaussian { sigma: 1.0 }, 9, n, r).iter().sum::<f64>()).max(0.0)).collect();
        assert!((e.maxima.iter().zip(&per_draw).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)) < 1e-9);
    }

    #[test]
    fn estimates_are_seed_deterministic() {
        let f = make_logistic(0.0, 3.5).unwrap();
        let opt = grid(16);
        let noise = NoiseModel::Gaussian { sigma: 1.0 };
        let a = mean_width_n(&f, &noise, 32, 6, &opt, 5).unwrap();
        let b = mean_width_n(&f, &noise, 32, 6, &opt, 5).unwrap();
        assert_eq!(a, b);
        let c = mean_width_n(&f, &noise, 32, 6, &opt, 6).unwrap();
        assert_ne!(a.maxima, c.maxima);
    }

    #[test]
    fn larger_budget_never_lowers_the_estimate() {
        let f = make_rotation(1, vec![TorusObservable::cosine(vec![1], 1.0)]).unwrap();
        let noise = NoiseModel::Gaussian { sigma: 1.0 };
        let small = mean_width_n(&f, &noise, 64, 16, &Optimizer::Grid(SearchConfig { x_points: 8, ..Default::default() }.grid_only()), 3).unwrap();
        let large = mean_width_n(&f, &noise, 64, 16, &grid(32), 3).unwrap();
        for (s, l) in small.maxima.iter().zip(&large.maxima) {
            assert!(l >= s, "{l} < {s}");
        }
    }

    #[test]
    fn scaling_observations_scales_width() {
        let noise = NoiseModel::Gaussian { sigma: 1.0 };
        let opt = grid(16);
        let f1 = make_rotation(1, vec![TorusObservable::cosine(vec![1], 1.0)]).unwrap();
        let f2 = make_rotation(1, vec![TorusObservable::cosine(vec![1], 2.0)]).unwrap();
        let a = mean_width_n(&f1, &noise, 40, 5, &opt, 11).unwrap();
        let b = mean_width_n(&f2, &noise, 40, 5, &opt, 11).unwrap();
        for (x, y) in a.maxima.iter().zip(&b.maxima) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn tracking_oracle_examples() {
        let ones = RealSequence::new(vec![1.0; 30]).unwrap();
        let (x0, v) = tracking_oracle_logistic4(&ones).unwrap();
        assert!((x0 - 0.75).abs() < 1e-12);
        assert!((v - 22.5).abs() < 1e-9);

        let alt = RealSequence::new((0..8).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect()).unwrap();
        let (x0, v) = tracking_oracle_logistic4(&alt).unwrap();
        assert!(v >= 2.0, "{v}");
        let f = make_logistic(0.0, 4.0).unwrap();
        let u = orbit(&f, &[4.0], &[x0], 8).unwrap();
        for (k, uk) in u.values().iter().enumerate() {
            assert_eq!(*uk >= 0.5, k % 2 == 0, "k={k} u={uk}");
        }

        let neg = RealSequence::new(vec![-0.3; 12]).unwrap();
        let (x0, _) = tracking_oracle_logistic4(&neg).unwrap();
        assert!(orbit(&f, &[4.0], &[x0], 12).unwrap().values().iter().all(|u| *u <= 0.5));

        let long = RealSequence::new(vec![1.0; 41]).unwrap();
        assert!(matches!(tracking_oracle_logistic4(&long), Err(Error::Precision(_))));
    }

    #[test]
    fn tracking_side_conditions_on_random_noise() {
        let f = make_logistic(0.0, 4.0).unwrap();
        let noise = NoiseModel::Gaussian { sigma: 1.0 };
        for trial in 0..500 {
            let n = 1 + trial % TRACKING_MAX_DEPTH;
            let eps = noise_draw(&noise, 77, n, trial);
            let (x0, _) = tracking_oracle_logistic4(&RealSequence::new(eps.clone()).unwrap()).unwrap();
            let back = tracking_orbit_logistic4(&eps).unwrap();
            let fwd = orbit(&f, &[4.0], &[x0], n).unwrap();
            for k in 0..n {
                let u = fwd.values()[k];
                assert!(if eps[k] >= 0.0 { u >= 0.5 } else { u <= 0.5 }, "trial {trial} k {k}");
            }
            if n <= 20 {
                let gap = fwd.values().iter().zip(&back.orbit).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(gap <= 1e-6, "n={n} gap={gap}");
            }
        }
    }

    #[test]
    fn long_tracked_orbits_are_certified() {
        let noise = NoiseModel::Gaussian { sigma: 1.0 };
        let eps = noise_draw(&noise, 1, 4096, 0);
        let t = tracking_orbit_logistic4(&eps).unwrap();
        assert!(t.max_residual <= TRACKING_RESIDUAL_TOL);
        for (u, e) in t.orbit.iter().zip(&eps) {
            assert!(if *e >= 0.0 { *u >= 0.5 } else { *u <= 0.5 });
        }
        assert!(t.value > 0.0);
    }

    #[test]
    fn tracking_oracle_rejects_other_families() {
        let f = make_logistic(0.0, 3.5).unwrap();
        assert!(mean_width_n(&f, &NoiseModel::Rademacher, 10, 2, &Optimizer::TrackingOracle, 0).is_err());
    }

    #[test]
    fn sigma0_examples() {
        assert!((sigma0(1.0, 0.399).unwrap() - 1.2531).abs() < 1e-3);
        assert_eq!(sigma0(1.0, 0.5).unwrap(), 1.0);
        assert_eq!(sigma0(2.0, 0.5).unwrap(), 4.0 * sigma0(1.0, 0.5).unwrap());
        assert!(sigma0(1.0, 0.0).is_err());
        assert!(sigma0(1.0, -0.1).is_err());
    }

    #[test]
    fn noise_models_have_stated_moments() {
        let mut s = rng::stream(0, "noise-test", &[]);
        for (m, var) in [
            (NoiseModel::Gaussian { sigma: 2.0 }, 4.0),
            (NoiseModel::Uniform { half_width: 3.0 }, 3.0),
            (NoiseModel::Rademacher, 1.0),
        ] {
            assert_eq!(m.variance(), var);
            let x = m.draw(&mut s, 200_000);
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            let v = x.iter().map(|a| a * a).sum::<f64>() / x.len() as f64;
            assert!(mean.abs() < 0.03, "{m:?}");
            assert!((v / var - 1.0).abs() < 0.02, "{m:?}");
        }
        assert!(NoiseModel::Gaussian { sigma: 0.0 }.validate().is_err());
        assert!(NoiseModel::Uniform { half_width: -1.0 }.validate().is_err());
    }

    #[test]
    fn subadditivity_and_monotonicity_on_thue_morse() {
        let f = thue_morse();
        let noise = NoiseModel::Gaussian { sigma: 1.0 };
        let rep = mean_width(&f, &noise, &[16, 32, 64], 32, &grid(512), 2).unwrap();
        assert!(rep.subadditivity_violations(3.0).is_empty());
        assert!(rep.nonincreasing_within(3.0));
        assert!(rep.entries.iter().all(|e| e.kappa_over_n.is_finite() && e.stderr >= 0.0));
    }

    #[test]
    fn csv_has_expected_columns() {
        let f = constants(vec![0.0]);
        let rep = mean_width(&f, &NoiseModel::Rademacher, &[4, 8], 2, &grid(1), 0).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "n,kappa_over_n,stderr,replicates,optimizer");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("4,") && lines[1].ends_with(",2,grid+refine"));
    }

    #[test]
    fn sudakov_cells() {
        let f = constants(vec![0.25]);
        let noise = NoiseModel::Gaussian { sigma: 1.0 };
        let width = mean_width(&f, &noise, &[8, 16], 4, &grid(1), 0).unwrap();
        let sample = crate::dynamics::sample_sequences(&f, &[vec![0.0]], &[vec![0.5]], 16).unwrap();
        let rep = crate::complexity::profile_sample(&sample, &[0.1, 0.3], &[8, 16], &[Norm::L2], 1 << 20).unwrap().remove(0);
        let cells = sudakov_check(&rep, &width).unwrap();
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().all(|c| c.rhs == 0.0 && c.pass));
        let linf = crate::complexity::profile_sample(&sample, &[0.1], &[8], &[Norm::Inf], 1 << 20).unwrap().remove(0);
        assert!(sudakov_check(&linf, &width).is_err());
    }
}
