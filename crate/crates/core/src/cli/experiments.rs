//! The named experiments and their verdicts.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::{Cell, Experiment, ExperimentConfig, Spacing, Table, Verdict};
use crate::complexity::{packing_bound_check, profile_sample, ComplexityReport, QuantizedProcess};
use crate::distortion::{
    distortion_bounds, distortion_upper_bound, hamming, quantize, signal_noise_identity_check, CouplingLP, IdentityCheckConfig,
    JoiningStrategy, Quantizer, DEFAULT_BURN_IN,
};
use crate::dynamics::{pseudo_metric, sample_sequences, Norm, RealSequence, SequenceSample};
use crate::erm::{auxiliary_loss, estimator_sequence, fit, fit_given_theta, LossSpec, ObservedSeries, SignalSpec};
use crate::error::{Error, Result};
use crate::families::{
    make_identity_vs_chaos, Axis, FamilySpec, ModelFamily, ObservableKind, ObservableSpec, ParameterSpace, StateDomain,
    THETA_CHAOTIC, THETA_IDENTITY,
};
use crate::meanwidth::{mean_width, mean_width_n, NoiseModel, Optimizer};
use crate::rng;
use crate::search::SearchConfig;

type Tables = BTreeMap<String, Table>;
type Aggregates = BTreeMap<String, f64>;

macro_rules! row {
    ($($v:expr),* $(,)?) => { vec![$(Cell::from($v)),*] };
}

const PLOT: &str = "plot";
const ENTROPY_HORIZONS: [usize; 9] = [2, 4, 6, 8, 10, 12, 14, 16, 18];
const ENTROPY_RADIUS: f64 = 0.05;

pub(super) fn run(cfg: &ExperimentConfig, tables: &mut Tables) -> Result<()> {
    tables.insert(PLOT.into(), Table::new(&["x", "y", "series", "seed"]));
    match cfg.experiment {
        Experiment::EntropyEquality => entropy_equality(cfg, tables),
        Experiment::ZeroEntropyFamilies => zero_entropy_families(cfg, tables),
        Experiment::MeanWidth => mean_width_experiment(cfg, tables),
        Experiment::ConsistencySubcritical => consistency(cfg, tables),
        Experiment::InconsistencySigma => inconsistency(cfg, tables),
        Experiment::DistortionLab => distortion_lab(cfg, tables),
        Experiment::Sudakov => sudakov(cfg, tables),
    }
}

fn open(tables: &mut Tables, name: &str, columns: &[&str]) {
    tables.insert(name.into(), Table::new(columns));
}

fn push(tables: &mut Tables, name: &str, row: Vec<Cell>) {
    tables.get_mut(name).expect("table opened before use").push(row);
}

fn plot(tables: &mut Tables, x: f64, y: f64, series: impl Into<String>, seed: u64) {
    push(tables, PLOT, row![x, y, series.into(), seed]);
}

fn first_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seeds_or(1)[0]
}

fn sub_seed(seed: u64, namespace: &str, index: u64) -> u64 {
    rng::stream(seed, namespace, &[index]).random()
}

fn logistic(a_lo: f64, a_hi: f64) -> FamilySpec {
    FamilySpec::Logistic { a_lo, a_hi }
}

fn cosine_rotation() -> FamilySpec {
    FamilySpec::Rotation { d: 1, dictionary: vec![ObservableSpec { kind: ObservableKind::Cos, freq: vec![1], amplitude: 1.0 }] }
}

// ---------------------------------------------------------------------------
// Covering entropy

fn x_grid(family: &ModelFamily, points: usize, spacing: Spacing) -> Vec<Vec<f64>> {
    match (family.domain(), spacing) {
        (StateDomain::UnitCube { dim: 1 }, Spacing::Arcsine) => (0..points)
            .map(|i| {
                let s = (FRAC_PI_2 * (i as f64 + 0.5) / points as f64).sin();
                vec![s * s]
            })
            .collect(),
        (domain, _) => domain.grid(points),
    }
}

fn norm_cell(p: Norm) -> Cell {
    match p {
        Norm::Inf => "inf".into(),
        Norm::P(v) => v.into(),
    }
}

#[allow(clippy::too_many_arguments)]
fn profile(
    family: &ModelFamily,
    thetas: &[Vec<f64>],
    xs: &[Vec<f64>],
    horizons: &[usize],
    radii: &[f64],
    norms: &[Norm],
    cell_budget: usize,
) -> Result<Vec<ComplexityReport>> {
    let n_max = *horizons.last().ok_or_else(|| Error::InvalidArgument("no horizons".into()))?;
    let values = thetas.len().saturating_mul(xs.len()).saturating_mul(n_max);
    if values > cell_budget {
        return Err(Error::Budget(format!("sample of {values} values exceeds the cell budget of {cell_budget}")));
    }
    let sample = sample_sequences(family, thetas, xs, n_max)?;
    profile_sample(&sample, radii, horizons, norms, cell_budget)
}

const ENTROPY_COLUMNS: [&str; 7] = ["family", "p", "n", "r", "N", "M", "slope"];

fn record_entropy(tables: &mut Tables, label: &str, reports: &[ComplexityReport]) -> Result<()> {
    for rep in reports {
        for (h, &n) in rep.horizons.iter().enumerate() {
            for (j, &r) in rep.radii.iter().enumerate() {
                let slope = rep.slopes[j].ok_or_else(|| Error::InvalidArgument("entropy slopes need two horizons".into()))?;
                let (big_n, big_m) = (rep.cover_counts[h][j], rep.packing_counts[h][j]);
                push(tables, "entropy", vec![label.into(), norm_cell(rep.p), n.into(), r.into(), big_n.into(), big_m.into(), slope.into()]);
                plot(tables, n as f64, (big_n as f64).ln(), format!("{label} p={} r={r}", rep.p), 0);
            }
        }
    }
    Ok(())
}

fn entropy_equality(cfg: &ExperimentConfig, tables: &mut Tables) -> Result<()> {
    open(tables, "entropy", &ENTROPY_COLUMNS);
    let spec = cfg.family.clone().unwrap_or(logistic(0.0, 4.0));
    let family = spec.build()?;
    let thetas = match (&cfg.thetas, &spec) {
        (Some(t), _) => t.clone(),
        (None, FamilySpec::Logistic { a_hi, .. }) if *a_hi == 4.0 => vec![vec![4.0]],
        (None, _) => family.params().grid(),
    };
    for t in &thetas {
        family.params().check(t)?;
    }
    let xs = x_grid(&family, cfg.grid_points.unwrap_or(1 << 22), cfg.x_spacing.unwrap_or(Spacing::Arcsine));
    let horizons = cfg.horizons.clone().unwrap_or(ENTROPY_HORIZONS.to_vec());
    let radii = cfg.radii.clone().unwrap_or(vec![ENTROPY_RADIUS]);
    let reports = profile(&family, &thetas, &xs, &horizons, &radii, &[Norm::L2, Norm::Inf], cfg.budget.cell_budget)?;
    record_entropy(tables, family.id(), &reports)
}

struct ZeroEntropyCase {
    label: String,
    spec: FamilySpec,
    theta_resolution: Option<usize>,
    x_points: usize,
}

fn zero_entropy_cases(cfg: &ExperimentConfig) -> Vec<ZeroEntropyCase> {
    match &cfg.family {
        Some(spec) => vec![ZeroEntropyCase {
            label: spec.build().map(|f| f.id().to_string()).unwrap_or_default(),
            spec: spec.clone(),
            theta_resolution: None,
            x_points: 4096,
        }],
        None => vec![
            ZeroEntropyCase { label: "rotation".into(), spec: cosine_rotation(), theta_resolution: Some(256), x_points: 64 },
            ZeroEntropyCase {
                label: "logistic_subcritical".into(),
                spec: logistic(0.0, 3.5),
                theta_resolution: None,
                x_points: 4096,
            },
            ZeroEntropyCase { label: "thue_morse".into(), spec: FamilySpec::thue_morse(), theta_resolution: None, x_points: 1 << 16 },
        ],
    }
}

fn zero_entropy_families(cfg: &ExperimentConfig, tables: &mut Tables) -> Result<()> {
    open(tables, "entropy", &ENTROPY_COLUMNS);
    let horizons = cfg.horizons.clone().unwrap_or(ENTROPY_HORIZONS.to_vec());
    let radii = cfg.radii.clone().unwrap_or(vec![ENTROPY_RADIUS]);
    for case in zero_entropy_cases(cfg) {
        let family = case.spec.build()?;
        let params = match case.theta_resolution {
            Some(r) => family.params().with_resolution(r)?,
            None => family.params().clone(),
        };
        let thetas = cfg.thetas.clone().unwrap_or_else(|| params.grid());
        let xs = x_grid(&family, cfg.grid_points.unwrap_or(case.x_points), cfg.x_spacing.unwrap_or(Spacing::Uniform));
        let reports = profile(&family, &thetas, &xs, &horizons, &radii, &[Norm::Inf], cfg.budget.cell_budget)?;
        record_entropy(tables, &case.label, &reports)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Mean width

const MEAN_WIDTH_HORIZONS: [usize; 4] = [64, 128, 256, 512];
const ZERO_ENTROPY_LABELS: [&str; 3] = ["rotation", "logistic_subcritical", "thue_morse"];
const TRACKED_LABEL: &str = "logistic_full";

fn mean_width_experiment(cfg: &ExperimentConfig, tables: &mut Tables) -> Result<()> {
    open(
        tables,
        "mean_width",
        &["family", "n", "kappa_over_n", "stderr", "replicates", "optimizer", "sigma", "bound_k", "budget_limited"],
    );
    open(tables, "maxima", &["family", "n", "replicate", "value"]);
    let noise = cfg.noise.unwrap_or(NoiseModel::Gaussian { sigma: 1.0 });
    let horizons = cfg.horizons.clone().unwrap_or(MEAN_WIDTH_HORIZONS.to_vec());
    let replicates = cfg.replicates.unwrap_or(64);
    let seed = first_seed(cfg);
    let grid = |theta_resolution, x_points| {
        Optimizer::Grid(cfg.search.clone().unwrap_or(SearchConfig { theta_resolution, x_points, ..SearchConfig::default() }))
    };
    let cases: Vec<(String, FamilySpec, Optimizer)> = match &cfg.family {
        Some(spec) => vec![(spec.build()?.id().to_string(), spec.clone(), grid(None, 256))],
        None => vec![
            ("rotation".into(), cosine_rotation(), grid(Some(256), 64)),
            ("logistic_subcritical".into(), logistic(0.0, 3.5), grid(None, 256)),
            ("thue_morse".into(), FamilySpec::thue_morse(), grid(None, 4096)),
            (TRACKED_LABEL.into(), logistic(0.0, 4.0), Optimizer::TrackingOracle),
        ],
    };
    let sigma = noise.variance().sqrt();
    for (label, spec, optimizer) in cases {
        let family = spec.build()?;
        let report = mean_width(&family, &noise, &horizons, replicates, &optimizer, seed)?;
        for e in &report.entries {
            push(
                tables,
                "mean_width",
                row![label.as_str(), e.n, e.kappa_over_n, e.stderr, replicates, report.optimizer.as_str(), sigma, family.bound_k(), e.budget_limited],
            );
            for (r, v) in e.maxima.iter().enumerate() {
                push(tables, "maxima", row![label.as_str(), e.n, r, *v]);
            }
            plot(tables, e.n as f64, e.kappa_over_n, label.as_str(), seed);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Least squares fitting

fn consistency(cfg: &ExperimentConfig, tables: &mut Tables) -> Result<()> {
    open(tables, "seeds", &["seed", "n", "theta_hat", "truth", "risk"]);
    let spec = cfg.family.clone().unwrap_or(logistic(0.0, 3.5));
    let family = spec.build()?;
    let truth = cfg.truth.clone().unwrap_or(vec![3.2]);
    family.params().check(&truth)?;
    let noise = cfg.noise.unwrap_or(NoiseModel::Gaussian { sigma: 0.25 });
    let n = cfg.n.unwrap_or(2000);
    let horizons = cfg.horizons.clone().unwrap_or(vec![250, 500, 1000, 2000]);
    if horizons.last().is_some_and(|&h| h > n) {
        return Err(Error::InvalidArgument(format!("horizon {} exceeds the series length {n}", horizons[horizons.len() - 1])));
    }
    let loss = cfg.loss.clone().unwrap_or(LossSpec::Squared);
    let search = cfg.search.clone().unwrap_or_default();
    let seeds = cfg.seeds_or(20);
    let fits = seeds
        .par_iter()
        .map(|&seed| {
            let mut s = rng::stream(seed, "cli/consistency_subcritical/x0", &[]);
            let x0 = (0..family.state_dim()).map(|_| s.random_range(0.01..0.99)).collect();
            let signal = SignalSpec::Orbit { family: spec.clone(), theta: truth.clone(), x0, burn_in: DEFAULT_BURN_IN };
            let y = ObservedSeries::generate(signal, Some(noise), n, seed)?;
            estimator_sequence(&family, &y, &loss, &horizons, &search, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    for (&seed, res) in seeds.iter().zip(&fits) {
        for t in &res.trace {
            push(tables, "seeds", row![seed, t.n, t.theta[0], truth[0], t.risk]);
            plot(tables, t.n as f64, (t.theta[0] - truth[0]).abs(), "abs_err", seed);
        }
    }
    Ok(())
}

const AUXILIARY_PAIRS: [(f64, f64); 10] =
    [(0.0, 0.5), (0.5, 0.5), (1.0, 0.5), (-1.5, 0.5), (2.0, 0.5), (0.0, 1.0), (0.5, 1.0), (1.0, 1.0), (-1.5, 1.0), (2.0, 1.0)];
const AUXILIARY_DRAWS: usize = 1_000_000;

/// `E|d − ε|` for `ε ~ N(0, σ²)`.
fn folded_normal_mean(d: f64, sigma: f64) -> f64 {
    let z = Normal::standard();
    sigma * 2.0 * z.pdf(d / sigma) + d * (1.0 - 2.0 * z.cdf(-d / sigma))
}

fn inconsistency(cfg: &ExperimentConfig, tables: &mut Tables) -> Result<()> {
    open(tables, "seeds", &["seed", "sigma", "theta_hat", "risk", "risk_theta0", "risk_theta1"]);
    open(tables, "kappa_g", &["n", "replicate", "value", "bound_k"]);
    open(tables, "auxiliary", &["loss", "diff", "sigma", "value", "stderr", "closed_form"]);
    let family = make_identity_vs_chaos();
    let noise = cfg.noise.unwrap_or(NoiseModel::Gaussian { sigma: 3.0 });
    let sigma = noise.variance().sqrt();
    let n = cfg.n.unwrap_or(512);
    let loss = cfg.loss.clone().unwrap_or(LossSpec::Squared);
    let search = cfg.search.clone().unwrap_or(SearchConfig { x_points: 4096, ..SearchConfig::default() });
    let seeds = cfg.seeds_or(20);

    let width = mean_width_n(&family, &NoiseModel::Gaussian { sigma: 1.0 }, 512, cfg.replicates.unwrap_or(64), &Optimizer::TrackingOracle, seeds[0])?;
    for (r, v) in width.maxima.iter().enumerate() {
        push(tables, "kappa_g", row![width.n, r, *v, family.bound_k()]);
    }

    let rows = seeds
        .par_iter()
        .map(|&seed| {
            let y = ObservedSeries::generate(SignalSpec::Constant { value: 0.5 }, Some(noise), n, seed)?;
            let best = fit(&family, &y, &loss, &search, seed)?;
            let r0 = fit_given_theta(&family, &y, &loss, &[THETA_IDENTITY], &search)?;
            let r1 = fit_given_theta(&family, &y, &loss, &[THETA_CHAOTIC], &search)?;
            Ok(row![seed, sigma, best.theta[0], best.risk, r0.risk, r1.risk])
        })
        .collect::<Result<Vec<_>>>()?;
    for r in rows {
        push(tables, "seeds", r);
    }

    let base = first_seed(cfg);
    for (i, &(d, s)) in AUXILIARY_PAIRS.iter().enumerate() {
        let g = NoiseModel::Gaussian { sigma: s };
        let mc = auxiliary_loss(&LossSpec::Absolute, &g, AUXILIARY_DRAWS, sub_seed(base, "cli/auxiliary", i as u64))?;
        let (value, se) = mc.eval(d, 0.0);
        push(tables, "auxiliary", row!["absolute", d, s, value, se, folded_normal_mean(d, s)]);
        let closed = auxiliary_loss(&LossSpec::Squared, &g, 0, 0)?;
        let (value, se) = closed.eval(d, 0.0);
        push(tables, "auxiliary", row!["squared", d, s, value, se, d * d + s * s]);
        plot(tables, d, value, format!("squared sigma={s}"), base);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Distortion

fn symbolic_orbit(spec: &FamilySpec, theta: &[f64], x0: f64, n: usize) -> Result<Vec<f64>> {
    SignalSpec::Orbit { family: spec.clone(), theta: theta.to_vec(), x0: vec![x0], burn_in: DEFAULT_BURN_IN }.generate(n)
}

fn distortion_lab(cfg: &ExperimentConfig, tables: &mut Tables) -> Result<()> {
    open(tables, "pairs", &["pair", "k", "lower", "upper", "product", "joining", "variables", "constraints"]);
    open(tables, "coupling", &["pair", "p_block", "q_block", "mass"]);
    open(tables, "k_sweep", &["pair", "k", "lower"]);
    open(tables, "identity", &["scenario", "n", "k", "bins", "sigma", "entropy_slope", "lhs", "rhs", "gap"]);
    let n = cfg.n.unwrap_or(100_000);
    let k = cfg.block_length.unwrap_or(3);
    let coin = |k| QuantizedProcess::iid(&[0.5, 0.5], k);
    let chaotic = symbolic_orbit(&logistic(0.0, 4.0), &[4.0], 0.1234, n)?;
    let logistic_symbols = quantize(&chaotic, &[0.5], k)?;
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let rotation = symbolic_orbit(&cosine_rotation(), &[golden, 0.0], 0.1, n)?;
    let rotation_symbols = quantize(&rotation, &[0.0], k)?;
    let pairs: Vec<(&str, QuantizedProcess, QuantizedProcess, usize)> = vec![
        ("point_mass_vs_iid", QuantizedProcess::constant(2, 0, 1)?, coin(1)?, 1),
        ("period2_vs_iid", QuantizedProcess::periodic(2, &[0, 1], 2)?, coin(2)?, 2),
        ("period2_vs_phase_swap", QuantizedProcess::periodic(2, &[0, 1], 2)?, QuantizedProcess::periodic(2, &[1, 0], 2)?, 2),
        ("logistic_vs_self", logistic_symbols.clone(), logistic_symbols.clone(), k),
        ("logistic_vs_iid", logistic_symbols.clone(), coin(k)?, k),
        ("rotation_vs_iid", rotation_symbols.clone(), coin(k)?, k),
        ("rotation_vs_logistic", rotation_symbols, logistic_symbols, k),
    ];
    let cost = hamming(2);
    for (label, p, q, k) in &pairs {
        let lp = CouplingLP::solve(p, q, &cost, *k)?;
        let b = distortion_bounds(p, q, &cost, *k)?;
        let product = distortion_upper_bound(p, q, &cost, JoiningStrategy::Product)?;
        let joining = serde_json::to_value(b.joining_used).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        push(tables, "pairs", row![*label, *k, lp.value, b.upper, product, joining, lp.variables, lp.constraints]);
        if *label == "period2_vs_iid" {
            for &(a, c, mass) in &lp.coupling {
                push(tables, "coupling", row![*label, a, c, mass]);
            }
        }
    }
    let sweep_source = symbolic_orbit(&logistic(0.0, 4.0), &[4.0], 0.1234, n)?;
    for kk in 1..=4 {
        let p = quantize(&sweep_source, &[0.5], kk)?;
        let q = QuantizedProcess::periodic(2, &[0, 1], kk)?;
        let v = CouplingLP::solve(&p, &q, &cost, kk)?.value;
        push(tables, "k_sweep", row!["logistic_vs_period2", kk, v]);
        plot(tables, kk as f64, v, "logistic_vs_period2", 0);
    }
    identity_scenarios(cfg, tables)
}

struct Scenario {
    label: &'static str,
    family: ModelFamily,
    signal: SignalSpec,
    sigma: f64,
    check: IdentityCheckConfig,
}

fn identity_scenarios(cfg: &ExperimentConfig, tables: &mut Tables) -> Result<()> {
    let identity_only = make_identity_vs_chaos()
        .with_params(ParameterSpace::new(vec![Axis::Labels { labels: vec!["identity".into()] }])?);
    let bins = cfg.bins.unwrap_or(4);
    let k = cfg.block_length.unwrap_or(3);
    let scenarios = vec![
        Scenario {
            label: "constant_signal",
            family: identity_only,
            signal: SignalSpec::Constant { value: 0.5 },
            sigma: 1.0,
            check: IdentityCheckConfig {
                n: 4000,
                k: 1,
                quantizer: Quantizer::uniform(0.5 - 4.0, 0.5 + 4.0, 20)?,
                x_points: 21,
                theta_resolution: None,
                burn_in: 0,
            },
        },
        Scenario {
            label: "rotation_orbit",
            family: cosine_rotation().build()?,
            signal: SignalSpec::Orbit { family: cosine_rotation(), theta: vec![13.0 / 64.0, 0.0], x0: vec![0.1], burn_in: 0 },
            sigma: 0.5,
            check: IdentityCheckConfig {
                n: 20_000,
                k,
                quantizer: Quantizer::uniform(-2.0, 2.0, bins)?,
                x_points: 1,
                theta_resolution: None,
                burn_in: 0,
            },
        },
    ];
    let seed = first_seed(cfg);
    for (i, sc) in scenarios.into_iter().enumerate() {
        let thetas = sc.family.params().grid();
        let xs = sc.family.domain().grid(64);
        let rep = profile(&sc.family, &thetas, &xs, &[2, 4, 6, 8, 10, 12], &[ENTROPY_RADIUS], &[Norm::Inf], cfg.budget.cell_budget)?;
        let slope = rep[0].slopes[0].unwrap_or(0.0);
        let res = signal_noise_identity_check(
            &sc.family,
            &sc.signal,
            sc.sigma,
            &sc.check,
            slope <= ZERO_ENTROPY_SLOPE,
            sub_seed(seed, "cli/identity", i as u64),
        )?;
        push(
            tables,
            "identity",
            row![sc.label, sc.check.n, sc.check.k, sc.check.quantizer.alphabet_size(), sc.sigma, slope, res.lhs, res.rhs, res.gap],
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Packing lemma and Sudakov

const PROBE_SETS: usize = 1000;
const PROBES_PER_SET: usize = 32;
const PROBE_HORIZONS: [usize; 3] = [8, 16, 32];
const PROBE_DELTAS: [f64; 2] = [0.3, 0.5];
const PROBE_PS: [f64; 2] = [1.0, 2.0];

/// A random center in `[-K, K]^n` and probes inside its `d_{n,p}` ball of
/// radius `ε`, mixing dense and sparse displacements.
fn probe_set(seed: u64, n: usize, delta: f64, p: f64, set: usize, k: f64) -> Result<(RealSequence, SequenceSample)> {
    let mut s = rng::stream(seed, "cli/sudakov/probes", &[n as u64, delta.to_bits(), p.to_bits(), set as u64]);
    let eps = crate::complexity::packing_epsilon(delta, p);
    let u: Vec<f64> = (0..n).map(|_| s.random_range(-k..=k)).collect();
    let norm = Norm::P(p);
    let mut probes = vec![u.clone()];
    while probes.len() < PROBES_PER_SET {
        let mut w = vec![0.0; n];
        if s.random::<bool>() {
            for v in w.iter_mut() {
                *v = s.random_range(-1.0..=1.0);
            }
        } else {
            let support = s.random_range(1..=n.div_ceil(4));
            for _ in 0..support {
                w[s.random_range(0..n)] = if s.random::<bool>() { 1.0 } else { -1.0 };
            }
        }
        let len = pseudo_metric(&w, &vec![0.0; n], norm)?;
        if len == 0.0 {
            continue;
        }
        let scale = 0.999 * eps * s.random::<f64>().sqrt() / len;
        probes.push(u.iter().zip(&w).map(|(a, b)| (a + scale * b).clamp(-k, k)).collect());
    }
    Ok((RealSequence::new(u)?, SequenceSample::from_sequences("probes", probes)?))
}

fn sudakov(cfg: &ExperimentConfig, tables: &mut Tables) -> Result<()> {
    open(tables, "packing", &["n", "delta", "p", "set", "measured", "ln_bound"]);
    open(tables, "sudakov", &["family", "n", "delta", "N", "kappa_over_n", "stderr"]);
    let seed = first_seed(cfg);
    for &n in &PROBE_HORIZONS {
        for &delta in &PROBE_DELTAS {
            for &p in &PROBE_PS {
                let rows = (0..PROBE_SETS)
                    .into_par_iter()
                    .map(|set| {
                        let (u, probes) = probe_set(seed, n, delta, p, set, 1.0)?;
                        let b = packing_bound_check(&u, delta, p, 1.0, &probes)?;
                        Ok(row![n, delta, p, set, b.measured, b.ln_bound])
                    })
                    .collect::<Result<Vec<_>>>()?;
                for r in rows {
                    push(tables, "packing", r);
                }
            }
        }
    }

    let horizons = cfg.horizons.clone().unwrap_or(vec![8, 12, 16]);
    let radii = cfg.radii.clone().unwrap_or(vec![0.1, 0.3]);
    let replicates = cfg.replicates.unwrap_or(64);
    let points = cfg.grid_points.unwrap_or(4096);
    let noise = NoiseModel::Gaussian { sigma: 1.0 };
    let cases = [("logistic_full", logistic(0.0, 4.0), points, 256), ("rotation", cosine_rotation(), 64, 64)];
    for (label, spec, x_points, search_points) in cases {
        let family = spec.build()?;
        let xs = x_grid(&family, x_points, Spacing::Uniform);
        let rep = profile(&family, &family.params().grid(), &xs, &horizons, &radii, &[Norm::L2], cfg.budget.cell_budget)?.remove(0);
        let search = cfg.search.clone().unwrap_or(SearchConfig { x_points: search_points, ..SearchConfig::default() });
        let width = mean_width(&family, &noise, &horizons, replicates, &Optimizer::Grid(search), seed)?;
        for (h, &n) in rep.horizons.iter().enumerate() {
            let e = width.entry(n).ok_or_else(|| Error::Internal(format!("missing mean width at n = {n}")))?;
            for (j, &delta) in rep.radii.iter().enumerate() {
                push(tables, "sudakov", row![label, n, delta, rep.cover_counts[h][j], e.kappa_over_n, e.stderr]);
            }
            plot(tables, n as f64, e.kappa_over_n, label, seed);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Verdicts

const ZERO_ENTROPY_SLOPE: f64 = 0.1;

fn verdict(id: &str, criterion: &str, pass: bool, value: f64, detail: String) -> Verdict {
    Verdict { id: id.into(), criterion: criterion.into(), pass, value, detail }
}

fn table<'a>(tables: &'a Tables, name: &str) -> Result<&'a Table> {
    tables.get(name).ok_or_else(|| Error::InvalidArgument(format!("missing table `{name}`")))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn stderr(values: &[f64]) -> f64 {
    let m = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mu = mean(values);
    (values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
}

/// Compute verdicts and aggregates for an experiment from its tables.
pub fn judge(experiment: Experiment, tables: &Tables) -> Result<(Vec<Verdict>, Aggregates)> {
    match experiment {
        Experiment::EntropyEquality => judge_entropy_equality(tables),
        Experiment::ZeroEntropyFamilies => judge_zero_entropy(tables),
        Experiment::MeanWidth => judge_mean_width(tables),
        Experiment::ConsistencySubcritical => judge_consistency(tables),
        Experiment::InconsistencySigma => judge_inconsistency(tables),
        Experiment::DistortionLab => judge_distortion(tables),
        Experiment::Sudakov => judge_sudakov(tables),
    }
}

/// Slope for `(family, p)` at radius 0.05.
fn entropy_slope(t: &Table, family: Option<&str>, p: &str) -> Result<Option<f64>> {
    for i in 0..t.len() {
        if family.is_some_and(|f| t.text(i, "family").is_ok_and(|v| v != f)) {
            continue;
        }
        if t.text(i, "p")? == p && t.num(i, "r")? == ENTROPY_RADIUS {
            return Ok(Some(t.num(i, "slope")?));
        }
    }
    Ok(None)
}

fn judge_entropy_equality(tables: &Tables) -> Result<(Vec<Verdict>, Aggregates)> {
    let t = table(tables, "entropy")?;
    let mut agg = Aggregates::new();
    let criterion = "|h2 - hinf| <= 0.15 nats and both in [0.55, 0.75] at r = 0.05";
    let v = match (entropy_slope(t, None, "2")?, entropy_slope(t, None, "inf")?) {
        (Some(h2), Some(hinf)) => {
            agg.insert("h2".into(), h2);
            agg.insert("hinf".into(), hinf);
            let diff = (h2 - hinf).abs();
            let inside = |h: f64| (0.55..=0.75).contains(&h);
            verdict("AC1", criterion, diff <= 0.15 && inside(h2) && inside(hinf), diff, format!("h2 = {h2:.4}, hinf = {hinf:.4}"))
        }
        _ => verdict("AC1", criterion, false, 0.0, "radius 0.05 was not computed for both norms".into()),
    };
    Ok((vec![v], agg))
}

fn judge_zero_entropy(tables: &Tables) -> Result<(Vec<Verdict>, Aggregates)> {
    let t = table(tables, "entropy")?;
    let families: BTreeSet<String> = (0..t.len()).map(|i| t.text(i, "family")).collect::<Result<_>>()?;
    let mut agg = Aggregates::new();
    let mut pass = !families.is_empty();
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for f in &families {
        match entropy_slope(t, Some(f), "inf")? {
            Some(h) => {
                agg.insert(format!("hinf_{f}"), h);
                worst = worst.max(h);
                pass &= h <= ZERO_ENTROPY_SLOPE;
                detail.push(format!("{f}: {h:.4}"));
            }
            None => {
                pass = false;
                detail.push(format!("{f}: radius 0.05 missing"));
            }
        }
    }
    Ok((vec![verdict("AC2", "hinf(0.05) <= 0.1 for every zero-entropy family", pass, worst, detail.join(", "))], agg))
}

struct WidthRow {
    n: usize,
    kappa: f64,
    stderr: f64,
    threshold: f64,
}

fn width_rows(t: &Table, family: &str) -> Result<Vec<WidthRow>> {
    let mut rows = Vec::new();
    for i in 0..t.len() {
        if t.text(i, "family")? == family {
            rows.push(WidthRow {
                n: t.num(i, "n")? as usize,
                kappa: t.num(i, "kappa_over_n")?,
                stderr: t.num(i, "stderr")?,
                threshold: 0.1 * t.num(i, "sigma")? * t.num(i, "bound_k")?,
            });
        }
    }
    rows.sort_by_key(|r| r.n);
    Ok(rows)
}

fn judge_mean_width(tables: &Tables) -> Result<(Vec<Verdict>, Aggregates)> {
    let t = table(tables, "mean_width")?;
    let mut verdicts = Vec::new();
    let mut agg = Aggregates::new();
    let present: Vec<&str> =
        ZERO_ENTROPY_LABELS.iter().copied().filter(|f| (0..t.len()).any(|i| t.text(i, "family").is_ok_and(|v| v == *f))).collect();
    if !present.is_empty() {
        let mut pass = true;
        let mut worst = 0.0f64;
        let mut detail = Vec::new();
        for f in present {
            let rows = width_rows(t, f)?;
            let monotone = rows.windows(2).all(|w| {
                let slack = 3.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
                w[1].kappa <= w[0].kappa + slack
            });
            match rows.iter().find(|r| r.n == 512) {
                Some(r) => {
                    agg.insert(format!("kappa_over_n_512_{f}"), r.kappa);
                    worst = worst.max(r.kappa);
                    pass &= monotone && r.kappa <= r.threshold;
                    detail.push(format!("{f}: {:.4} +/- {:.4} (monotone: {monotone})", r.kappa, r.stderr));
                }
                None => {
                    pass = false;
                    detail.push(format!("{f}: n = 512 missing"));
                }
            }
        }
        verdicts.push(verdict(
            "AC3",
            "kappa_n/n <= 0.1 sigma K at n = 512 and nonincreasing within 3 standard errors",
            pass,
            worst,
            detail.join("; "),
        ));
    }
    let tracked = width_rows(t, TRACKED_LABEL)?;
    if !tracked.is_empty() {
        let at = |n| tracked.iter().find(|r| r.n == n).map(|r| r.kappa);
        let pass = matches!((at(128), at(256)), (Some(a), Some(b)) if a >= 0.2 && b >= 0.2);
        let low = [at(128), at(256)].into_iter().flatten().fold(f64::INFINITY, f64::min);
        let last = tracked.last().expect("nonempty");
        agg.insert("kappa_g".into(), last.kappa);
        agg.insert("sigma0".into(), 1.0 / (2.0 * last.kappa));
        verdicts.push(verdict(
            "AC4",
            "tracking-oracle kappa_n/n >= 0.2 at n = 128 and 256",
            pass,
            if low.is_finite() { low } else { 0.0 },
            format!("n=128: {:?}, n=256: {:?}", at(128), at(256)),
        ));
    }
    Ok((verdicts, agg))
}

fn judge_consistency(tables: &Tables) -> Result<(Vec<Verdict>, Aggregates)> {
    let t = table(tables, "seeds")?;
    let mut by_seed: BTreeMap<u64, Vec<(usize, f64)>> = BTreeMap::new();
    for i in 0..t.len() {
        let err = (t.num(i, "theta_hat")? - t.num(i, "truth")?).abs();
        by_seed.entry(t.num(i, "seed")? as u64).or_default().push((t.num(i, "n")? as usize, err));
    }
    let mut accurate = 0usize;
    let mut steady = 0usize;
    let mut final_errors = Vec::new();
    for trace in by_seed.values_mut() {
        trace.sort_by_key(|e| e.0);
        let last = trace.last().expect("nonempty trace").1;
        final_errors.push(last);
        accurate += usize::from(last <= 0.05);
        let tail = &trace[trace.len().saturating_sub(3)..];
        steady += usize::from(tail.windows(2).all(|w| w[1].1 <= w[0].1 + 0.02));
    }
    let seeds = by_seed.len().max(1) as f64;
    let (rate, trace_rate) = (accurate as f64 / seeds, steady as f64 / seeds);
    let mut agg = Aggregates::new();
    agg.insert("pass_rate".into(), rate);
    agg.insert("trace_pass_rate".into(), trace_rate);
    if !final_errors.is_empty() {
        agg.insert("mean_abs_err".into(), mean(&final_errors));
        agg.insert("stderr_abs_err".into(), stderr(&final_errors));
    }
    let pass = !by_seed.is_empty() && rate >= 0.9 && trace_rate >= 0.8;
    Ok((
        vec![verdict(
            "AC5",
            "|a_hat - a*| <= 0.05 in >= 90% of seeds; trace errors nonincreasing within 0.02 in >= 80%",
            pass,
            rate,
            format!("accuracy rate {rate:.3}, trace rate {trace_rate:.3} over {} seeds", by_seed.len()),
        )],
        agg,
    ))
}

fn judge_inconsistency(tables: &Tables) -> Result<(Vec<Verdict>, Aggregates)> {
    let mut agg = Aggregates::new();
    let kg = table(tables, "kappa_g")?;
    let values: Vec<f64> = (0..kg.len()).map(|i| kg.num(i, "value")).collect::<Result<_>>()?;
    let n = if kg.is_empty() { 1.0 } else { kg.num(0, "n")? };
    let k = if kg.is_empty() { 1.0 } else { kg.num(0, "bound_k")? };
    let kappa_g = if values.is_empty() { 0.0 } else { mean(&values) / n };
    let sigma0 = if kappa_g > 0.0 { k * k / (2.0 * kappa_g) } else { f64::INFINITY };

    let t = table(tables, "seeds")?;
    let col = |name: &str| (0..t.len()).map(|i| t.num(i, name)).collect::<Result<Vec<f64>>>();
    let (thetas, r0, r1, sig) = (col("theta_hat")?, col("risk_theta0")?, col("risk_theta1")?, col("sigma")?);
    let sigma = sig.first().copied().unwrap_or(0.0);
    let chaotic_rate = if thetas.is_empty() { 0.0 } else { thetas.iter().filter(|&&t| t == THETA_CHAOTIC).count() as f64 / thetas.len() as f64 };
    let (m0, m1) = if thetas.is_empty() { (0.0, 0.0) } else { (mean(&r0), mean(&r1)) };
    let level = sigma * sigma - 0.1;
    agg.insert("kappa_g".into(), kappa_g);
    if sigma0.is_finite() {
        agg.insert("sigma0".into(), sigma0);
    }
    agg.insert("chaotic_rate".into(), chaotic_rate);
    agg.insert("mean_risk_theta0".into(), m0);
    agg.insert("mean_risk_theta1".into(), m1);
    let pass = !thetas.is_empty() && sigma > sigma0 && chaotic_rate >= 0.9 && m1 < level && m0 >= level;
    let ac6 = verdict(
        "AC6",
        "sigma > sigma0; theta_hat = theta1 in >= 90% of seeds; mean risk(theta1) < sigma^2 - 0.1 <= mean risk(theta0)",
        pass,
        chaotic_rate,
        format!("sigma = {sigma}, sigma0 = {sigma0:.4}, rate = {chaotic_rate:.3}, risk0 = {m0:.4}, risk1 = {m1:.4}, level = {level:.2}"),
    );

    let a = table(tables, "auxiliary")?;
    let mut mc_pairs = 0usize;
    let mut worst_z = 0.0f64;
    let mut pass = true;
    for i in 0..a.len() {
        let (value, se, closed) = (a.num(i, "value")?, a.num(i, "stderr")?, a.num(i, "closed_form")?);
        match a.text(i, "loss")?.as_str() {
            "squared" => pass &= value == closed,
            _ => {
                mc_pairs += 1;
                let z = if se > 0.0 { (value - closed).abs() / se } else { f64::INFINITY };
                worst_z = worst_z.max(z);
                pass &= z <= 3.0;
            }
        }
    }
    pass &= mc_pairs >= 10;
    agg.insert("auxiliary_max_z".into(), if worst_z.is_finite() { worst_z } else { f64::MAX });
    let ac7 = verdict(
        "AC7",
        "Monte Carlo absolute-loss L within 3 standard errors of the folded-normal mean at 10 pairs; squared closed form exact",
        pass,
        if worst_z.is_finite() { worst_z } else { f64::MAX },
        format!("{mc_pairs} Monte Carlo pairs, max |z| = {worst_z:.3}"),
    );
    Ok((vec![ac6, ac7], agg))
}

fn judge_distortion(tables: &Tables) -> Result<(Vec<Verdict>, Aggregates)> {
    let t = table(tables, "pairs")?;
    let mut agg = Aggregates::new();
    let mut sandwich = true;
    let mut found = BTreeMap::new();
    for i in 0..t.len() {
        let (label, lower, upper, product) = (t.text(i, "pair")?, t.num(i, "lower")?, t.num(i, "upper")?, t.num(i, "product")?);
        sandwich &= lower <= upper + 1e-9;
        agg.insert(format!("lower_{label}"), lower);
        found.insert(label, (lower, product));
    }
    let point = found.get("point_mass_vs_iid").map(|p| p.0);
    let period = found.get("period2_vs_iid").map(|p| (p.0 - p.1).abs());
    let same = found.get("logistic_vs_self").map(|p| p.0);
    let pass = sandwich
        && point.is_some_and(|v| (v - 0.5).abs() <= 1e-12)
        && period.is_some_and(|g| g <= 1e-6)
        && same.is_some_and(|v| v.abs() <= 1e-9);
    let ac8 = verdict(
        "AC8",
        "lower <= upper + 1e-9 on all pairs; point mass vs iid = 0.5; period-2 vs iid k=2 within 1e-6 of product; P = Q gives 0",
        pass,
        period.unwrap_or(f64::MAX),
        format!("sandwich: {sandwich}, point mass: {point:?}, period-2 gap to product: {period:?}, self: {same:?}"),
    );

    let id = table(tables, "identity")?;
    let mut pass = id.len() >= 2;
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for i in 0..id.len() {
        let gap = (id.num(i, "lhs")? - id.num(i, "rhs")?).abs();
        let label = id.text(i, "scenario")?;
        agg.insert(format!("gap_{label}"), gap);
        worst = worst.max(gap);
        pass &= gap <= 0.1;
        detail.push(format!("{label}: lhs {:.4}, rhs {:.4}, gap {gap:.4}", id.num(i, "lhs")?, id.num(i, "rhs")?));
    }
    let ac9 = verdict("AC9", "signal-noise identity gap <= 0.1 on both scenarios", pass, worst, detail.join("; "));
    Ok((vec![ac8, ac9], agg))
}

fn judge_sudakov(tables: &Tables) -> Result<(Vec<Verdict>, Aggregates)> {
    let mut agg = Aggregates::new();
    let t = table(tables, "packing")?;
    let mut violations = 0usize;
    let mut min_slack = f64::INFINITY;
    for i in 0..t.len() {
        let slack = t.num(i, "ln_bound")? - t.num(i, "measured")?.ln();
        min_slack = min_slack.min(slack);
        violations += usize::from(slack < 0.0);
    }
    agg.insert("packing_sets".into(), t.len() as f64);
    agg.insert("packing_violations".into(), violations as f64);
    let expected = PROBE_HORIZONS.len() * PROBE_DELTAS.len() * PROBE_PS.len() * PROBE_SETS;
    let ac10 = verdict(
        "AC10",
        "zero packing-bound violations over 1000 probe sets per (n, delta, p)",
        violations == 0 && t.len() >= expected,
        violations as f64,
        format!("{} sets, {violations} violations, min ln-slack {min_slack:.3}", t.len()),
    );

    let s = table(tables, "sudakov")?;
    let mut failing = 0usize;
    let mut min_margin = f64::INFINITY;
    for i in 0..s.len() {
        let n = s.num(i, "n")?;
        let lhs = s.num(i, "kappa_over_n")? + 3.0 * s.num(i, "stderr")?;
        let rhs = s.num(i, "delta")? / 6.0 * (s.num(i, "N")?.ln() / n).sqrt();
        min_margin = min_margin.min(lhs - rhs);
        failing += usize::from(lhs < rhs);
    }
    if min_margin.is_finite() {
        agg.insert("sudakov_min_margin".into(), min_margin);
    }
    let ac11 = verdict(
        "AC11",
        "kappa_n/n + 3 se >= (delta/6) sqrt(log N / n) on every cell",
        failing == 0 && !s.is_empty(),
        if min_margin.is_finite() { min_margin } else { 0.0 },
        format!("{} cells, {failing} failing", s.len()),
    );
    Ok((vec![ac10, ac11], agg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folded_normal_reference_values() {
        assert!((folded_normal_mean(0.0, 1.0) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert!((folded_normal_mean(2.0, 1.0) - folded_normal_mean(-2.0, 1.0)).abs() < 1e-12);
        assert!((folded_normal_mean(50.0, 1.0) - 50.0).abs() < 1e-9);
    }

    #[test]
    fn probe_sets_are_legal() {
        for (n, delta, p) in [(8, 0.3, 1.0), (32, 0.5, 2.0)] {
            let (u, probes) = probe_set(3, n, delta, p, 0, 1.0).unwrap();
            assert_eq!(probes.len(), PROBES_PER_SET);
            let b = packing_bound_check(&u, delta, p, 1.0, &probes).unwrap();
            assert!(b.pass);
        }
    }

    #[test]
    fn arcsine_grid_stays_inside() {
        let f = logistic(0.0, 4.0).build().unwrap();
        let g = x_grid(&f, 1000, Spacing::Arcsine);
        assert!(g.iter().all(|x| x[0] > 0.0 && x[0] < 1.0));
        assert!(g.windows(2).all(|w| w[0][0] < w[1][0]));
    }

    #[test]
    fn judge_reads_entropy_slopes() {
        let mut tables = Tables::new();
        open(&mut tables, "entropy", &ENTROPY_COLUMNS);
        push(&mut tables, "entropy", row!["logistic", 2.0, 10usize, 0.05, 100usize, 120usize, 0.6]);
        push(&mut tables, "entropy", row!["logistic", "inf", 10usize, 0.05, 200usize, 220usize, 0.7]);
        let (v, agg) = judge(Experiment::EntropyEquality, &tables).unwrap();
        assert!(v[0].pass);
        assert_eq!(agg["h2"], 0.6);
        push(&mut tables, "entropy", row!["other", "inf", 10usize, 0.05, 200usize, 220usize, 0.7]);
        let (v, _) = judge(Experiment::ZeroEntropyFamilies, &tables).unwrap();
        assert!(!v[0].pass);
    }
}
