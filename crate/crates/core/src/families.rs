//! Parametrized families of dynamical models.
//!
//! A [`ModelFamily`] bundles a compact parameter space, a state domain, a
//! step map `(θ, x) ↦ T_θ(x)`, an observation `(θ, x) ↦ f_θ(x)` and a
//! uniform bound `K` on the observations. Parameters and states are plain
//! `f64` slices: label axes carry the label index, torus coordinates live in
//! `[0, 1)`, and symbolic-shift states are a single nonnegative integer
//! position.
//!
//! New families plug in through the [`Dynamics`] trait and
//! [`ModelFamily::new`].

use std::fmt;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};

/// One axis of a parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Axis {
    /// Closed interval `[lo, hi]`.
    Interval { lo: f64, hi: f64, resolution: usize },
    /// The circle `[0, 1)` with 0 identified with 1.
    Circle { resolution: usize },
    /// Finite label set; values are label indices.
    Labels { labels: Vec<String> },
}

impl Axis {
    fn validate(&self) -> Result<()> {
        match self {
            Axis::Interval { lo, hi, resolution } => {
                if !lo.is_finite() || !hi.is_finite() || lo > hi {
                    return invalid_param(format!("interval axis [{lo}, {hi}] is empty or unbounded"));
                }
                if *resolution < 2 {
                    return invalid_param("grid resolution must be at least 2 on continuous axes");
                }
            }
            Axis::Circle { resolution } => {
                if *resolution < 2 {
                    return invalid_param("grid resolution must be at least 2 on continuous axes");
                }
            }
            Axis::Labels { labels } => {
                if labels.is_empty() {
                    return invalid_param("label axis must be nonempty");
                }
            }
        }
        Ok(())
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, Axis::Labels { .. })
    }

    pub fn contains(&self, v: f64) -> bool {
        match self {
            Axis::Interval { lo, hi, .. } => v >= *lo && v <= *hi,
            Axis::Circle { .. } => (0.0..1.0).contains(&v),
            Axis::Labels { labels } => v >= 0.0 && v.fract() == 0.0 && (v as usize) < labels.len(),
        }
    }

    /// Grid points in increasing order. A degenerate interval yields one point.
    pub fn grid(&self) -> Vec<f64> {
        match self {
            Axis::Interval { lo, hi, resolution } => {
                if lo == hi {
                    return vec![*lo];
                }
                let m = *resolution;
                (0..m)
                    .map(|i| if i + 1 == m { *hi } else { lo + (hi - lo) * i as f64 / (m - 1) as f64 })
                    .collect()
            }
            Axis::Circle { resolution } => (0..*resolution).map(|i| i as f64 / *resolution as f64).collect(),
            Axis::Labels { labels } => (0..labels.len()).map(|i| i as f64).collect(),
        }
    }

    /// Spacing between neighbouring grid points (0 for label axes).
    pub fn spacing(&self) -> f64 {
        match self {
            Axis::Interval { lo, hi, resolution } => (hi - lo) / (*resolution as f64 - 1.0),
            Axis::Circle { resolution } => 1.0 / *resolution as f64,
            Axis::Labels { .. } => 0.0,
        }
    }

    /// Length of the axis (0 for label axes).
    pub fn length(&self) -> f64 {
        match self {
            Axis::Interval { lo, hi, .. } => hi - lo,
            Axis::Circle { .. } => 1.0,
            Axis::Labels { .. } => 0.0,
        }
    }

    /// Map an arbitrary value back onto the axis (clamp or wrap).
    pub fn project(&self, v: f64) -> f64 {
        match self {
            Axis::Interval { lo, hi, .. } => v.clamp(*lo, *hi),
            Axis::Circle { .. } => wrap_unit(v),
            Axis::Labels { labels } => v.round().clamp(0.0, (labels.len() - 1) as f64),
        }
    }

    pub fn distance(&self, a: f64, b: f64) -> f64 {
        match self {
            Axis::Interval { .. } => (a - b).abs(),
            Axis::Circle { .. } => torus_distance(a, b),
            Axis::Labels { .. } => {
                if a == b {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

/// Reduce onto `[0, 1)` via `x − floor(x)`.
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[inline]
fn torus_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 1.0;
    d.min(1.0 - d)
}

/// Product of axes; the compact index set Θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    axes: Vec<Axis>,
}

impl ParameterSpace {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return invalid_param("parameter space needs at least one axis");
        }
        for a in &axes {
            a.validate()?;
        }
        Ok(Self { axes })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.axes.len() && self.axes.iter().zip(theta).all(|(a, v)| a.contains(*v))
    }

    pub fn check(&self, theta: &[f64]) -> Result<()> {
        if self.contains(theta) {
            Ok(())
        } else {
            Err(Error::Domain(format!("parameter {theta:?} lies outside the parameter space")))
        }
    }

    /// Cartesian grid in lexicographic axis order.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        cartesian(&self.axes.iter().map(Axis::grid).collect::<Vec<_>>())
    }

    /// Same space with every continuous axis resampled at `resolution` points.
    pub fn with_resolution(&self, resolution: usize) -> Result<Self> {
        let axes = self
            .axes
            .iter()
            .map(|a| match a {
                Axis::Interval { lo, hi, .. } => Axis::Interval { lo: *lo, hi: *hi, resolution },
                Axis::Circle { .. } => Axis::Circle { resolution },
                other => other.clone(),
            })
            .collect();
        Self::new(axes)
    }

    /// Max-over-axes distance with torus wrap.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.axes
            .iter()
            .zip(a.iter().zip(b))
            .map(|(ax, (x, y))| ax.distance(*x, *y))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for values in axes {
        let mut next = Vec::with_capacity(out.len() * values.len());
        for prefix in &out {
            for v in values {
                let mut p = prefix.clone();
                p.push(*v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// State space descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateDomain {
    /// `[0, 1]^dim`.
    UnitCube { dim: usize },
    /// `T^dim = [0, 1)^dim`.
    Torus { dim: usize },
    /// Positions along a one-sided symbolic sequence over `alphabet_size` symbols.
    Symbolic { alphabet_size: usize },
}

impl StateDomain {
    pub fn dim(&self) -> usize {
        match self {
            StateDomain::UnitCube { dim } | StateDomain::Torus { dim } => *dim,
            StateDomain::Symbolic { .. } => 1,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            StateDomain::UnitCube { .. } => x.iter().all(|v| (0.0..=1.0).contains(v)),
            StateDomain::Torus { .. } => x.iter().all(|v| (0.0..1.0).contains(v)),
            StateDomain::Symbolic { .. } => x[0] >= 0.0 && x[0].fract() == 0.0 && x[0] < 9.0e15,
        }
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!("state {x:?} lies outside the state domain")))
        }
    }

    /// Whether the coordinates are continuous (eligible for refinement).
    pub fn is_continuous(&self) -> bool {
        !matches!(self, StateDomain::Symbolic { .. })
    }

    /// Length of each coordinate range (used to scale refinement tolerances).
    pub fn axis_length(&self) -> f64 {
        match self {
            StateDomain::UnitCube { .. } | StateDomain::Torus { .. } => 1.0,
            StateDomain::Symbolic { .. } => 0.0,
        }
    }

    /// Equispaced grid with `points` values per coordinate. For the unit cube
    /// the endpoints are included; on the torus the points are `i / points`;
    /// for symbolic domains the positions are `0..points`.
    pub fn grid(&self, points: usize) -> Vec<Vec<f64>> {
        let axis: Vec<f64> = match self {
            StateDomain::UnitCube { .. } => {
                if points == 1 {
                    vec![0.5]
                } else {
                    (0..points).map(|i| i as f64 / (points - 1) as f64).collect()
                }
            }
            StateDomain::Torus { .. } => (0..points).map(|i| i as f64 / points as f64).collect(),
            StateDomain::Symbolic { .. } => (0..points).map(|i| i as f64).collect(),
        };
        cartesian(&vec![axis; self.dim()])
    }

    /// Clamp or wrap a coordinate back into the domain.
    pub fn project(&self, v: f64) -> f64 {
        match self {
            StateDomain::UnitCube { .. } => v.clamp(0.0, 1.0),
            StateDomain::Torus { .. } => wrap_unit(v),
            StateDomain::Symbolic { .. } => v.round().max(0.0),
        }
    }
}

/// Step map and observation of a family. Implementations must be pure.
pub trait Dynamics: Send + Sync + fmt::Debug {
    /// Replace `x` by `T_θ(x)`.
    fn step(&self, theta: &[f64], x: &mut [f64]);
    /// `f_θ(x)`.
    fn observe(&self, theta: &[f64], x: &[f64]) -> f64;
}

/// A compact family of dynamical models `{(T_θ, f_θ) : θ ∈ Θ}`.
#[derive(Clone)]
pub struct ModelFamily {
    id: String,
    params: ParameterSpace,
    domain: StateDomain,
    bound_k: f64,
    dynamics: Arc<dyn Dynamics>,
}

impl fmt::Debug for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelFamily")
            .field("id", &self.id)
            .field("params", &self.params)
            .field("domain", &self.domain)
            .field("bound_k", &self.bound_k)
            .finish()
    }
}

impl ModelFamily {
    pub fn new(
        id: impl Into<String>,
        params: ParameterSpace,
        domain: StateDomain,
        bound_k: f64,
        dynamics: Arc<dyn Dynamics>,
    ) -> Result<Self> {
        if !(bound_k >= 0.0 && bound_k.is_finite()) {
            return invalid_param("observation bound K must be finite and nonnegative");
        }
        if domain.dim() == 0 {
            return invalid_param("state dimension must be positive");
        }
        Ok(Self { id: id.into(), params, domain, bound_k, dynamics })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn params(&self) -> &ParameterSpace {
        &self.params
    }

    pub fn domain(&self) -> &StateDomain {
        &self.domain
    }

    pub fn state_dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn bound_k(&self) -> f64 {
        self.bound_k
    }

    /// Same dynamics over a different parameter space (e.g. a finer grid).
    pub fn with_params(&self, params: ParameterSpace) -> Self {
        Self { params, ..self.clone() }
    }

    pub fn step(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.dynamics.step(theta, &mut y);
        y
    }

    #[inline]
    pub fn step_in_place(&self, theta: &[f64], x: &mut [f64]) {
        self.dynamics.step(theta, x);
    }

    #[inline]
    pub fn observe(&self, theta: &[f64], x: &[f64]) -> f64 {
        self.dynamics.observe(theta, x)
    }

    pub fn check(&self, theta: &[f64], x: &[f64]) -> Result<()> {
        self.params.check(theta)?;
        self.domain.check(x)
    }
}

// ---------------------------------------------------------------------------
// Logistic family

#[derive(Debug)]
struct Logistic;

impl Dynamics for Logistic {
    #[inline]
    fn step(&self, theta: &[f64], x: &mut [f64]) {
        let v = x[0];
        x[0] = (theta[0] * (v * (1.0 - v))).clamp(0.0, 1.0);
    }

    #[inline]
    fn observe(&self, _theta: &[f64], x: &[f64]) -> f64 {
        x[0]
    }
}

/// Grid step used for the default logistic resolution.
const LOGISTIC_GRID_STEP: f64 = 0.1;

/// `T_a(x) = a x (1 − x)` on `[0, 1]` with identity observation, `a ∈ [a_lo, a_hi]`.
pub fn make_logistic(a_lo: f64, a_hi: f64) -> Result<ModelFamily> {
    if !(0.0..=4.0).contains(&a_lo) || !(0.0..=4.0).contains(&a_hi) || a_lo > a_hi {
        return invalid_param(format!("logistic parameter range [{a_lo}, {a_hi}] must satisfy 0 <= lo <= hi <= 4"));
    }
    let resolution = (((a_hi - a_lo) / LOGISTIC_GRID_STEP).round() as usize + 1).max(2);
    let params = ParameterSpace::new(vec![Axis::Interval { lo: a_lo, hi: a_hi, resolution }])?;
    ModelFamily::new("logistic", params, StateDomain::UnitCube { dim: 1 }, 1.0, Arc::new(Logistic))
}

// ---------------------------------------------------------------------------
// Toral rotations

/// A continuous bounded observation on `T^d`.
#[derive(Clone)]
pub struct TorusObservable {
    name: String,
    sup_norm: f64,
    func: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl fmt::Debug for TorusObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusObservable").field("name", &self.name).field("sup_norm", &self.sup_norm).finish()
    }
}

impl TorusObservable {
    /// Arbitrary observable with a declared sup-norm bound.
    pub fn new(name: impl Into<String>, sup_norm: f64, func: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), sup_norm, func: Arc::new(func) }
    }

    /// `x ↦ amplitude · cos(2π ⟨freq, x⟩)`.
    pub fn cosine(freq: Vec<i64>, amplitude: f64) -> Self {
        let name = format!("cos{freq:?}");
        Self::new(name, amplitude.abs(), move |x| {
            let phase: f64 = freq.iter().zip(x).map(|(k, v)| *k as f64 * v).sum();
            amplitude * (std::f64::consts::TAU * phase).cos()
        })
    }

    /// `x ↦ amplitude · sin(2π ⟨freq, x⟩)`.
    pub fn sine(freq: Vec<i64>, amplitude: f64) -> Self {
        let name = format!("sin{freq:?}");
        Self::new(name, amplitude.abs(), move |x| {
            let phase: f64 = freq.iter().zip(x).map(|(k, v)| *k as f64 * v).sum();
            amplitude * (std::f64::consts::TAU * phase).sin()
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.func)(x)
    }
}

#[derive(Debug)]
struct Rotation {
    d: usize,
    dictionary: Vec<TorusObservable>,
}

impl Dynamics for Rotation {
    #[inline]
    fn step(&self, theta: &[f64], x: &mut [f64]) {
        for i in 0..self.d {
            x[i] = wrap_unit(x[i] + theta[i]);
        }
    }

    #[inline]
    fn observe(&self, theta: &[f64], x: &[f64]) -> f64 {
        self.dictionary[theta[self.d] as usize].eval(x)
    }
}

/// Default angle-grid resolution per torus axis.
pub const ROTATION_GRID: usize = 64;

/// Rotations `R_α(x) = x + α` on `T^d`; parameters are the angle vector
/// followed by the dictionary index.
pub fn make_rotation(d: usize, dictionary: Vec<TorusObservable>) -> Result<ModelFamily> {
    if d == 0 {
        return invalid_param("torus dimension must be at least 1");
    }
    if dictionary.is_empty() {
        return invalid_param("rotation dictionary must be nonempty");
    }
    if dictionary.iter().any(|o| !o.sup_norm.is_finite()) {
        return invalid_param("dictionary entries must be bounded");
    }
    let bound_k = dictionary.iter().map(|o| o.sup_norm).fold(0.0, f64::max);
    let mut axes = vec![Axis::Circle { resolution: ROTATION_GRID }; d];
    axes.push(Axis::Labels { labels: dictionary.iter().map(|o| o.name.clone()).collect() });
    let params = ParameterSpace::new(axes)?;
    ModelFamily::new("rotation", params, StateDomain::Torus { dim: d }, bound_k, Arc::new(Rotation { d, dictionary }))
}

// ---------------------------------------------------------------------------
// Identity versus the fully chaotic logistic map

/// Label value of the identity model.
pub const THETA_IDENTITY: f64 = 0.0;
/// Label value of the chaotic model `x ↦ 4x(1 − x)`.
pub const THETA_CHAOTIC: f64 = 1.0;

#[derive(Debug)]
struct IdentityVsChaos;

impl Dynamics for IdentityVsChaos {
    #[inline]
    fn step(&self, theta: &[f64], x: &mut [f64]) {
        if theta[0] != THETA_IDENTITY {
            let v = x[0];
            x[0] = (4.0 * (v * (1.0 - v))).clamp(0.0, 1.0);
        }
    }

    #[inline]
    fn observe(&self, _theta: &[f64], x: &[f64]) -> f64 {
        x[0]
    }
}

/// Two-model family `{identity, 4x(1 − x)}` on `[0, 1]`, identity observation.
pub fn make_identity_vs_chaos() -> ModelFamily {
    let params = ParameterSpace::new(vec![Axis::Labels { labels: vec!["identity".into(), "chaotic".into()] }])
        .expect("static parameter space");
    ModelFamily::new("identity_vs_chaos", params, StateDomain::UnitCube { dim: 1 }, 1.0, Arc::new(IdentityVsChaos))
        .expect("static family")
}

// ---------------------------------------------------------------------------
// Substitution subshifts

/// Hard cap on the expanded fixed-point prefix (symbols).
pub const SUBSTITUTION_BUFFER_CAP: usize = 1 << 28;

/// A primitive, expanding substitution together with a lazily expanded
/// one-sided fixed point.
#[derive(Debug)]
pub struct Substitution {
    rules: Vec<Vec<u8>>,
    values: Vec<f64>,
    power: usize,
    buffer: RwLock<Vec<u8>>,
}

impl Substitution {
    /// `rules[a]` is the image word of symbol `a`; `values[a]` its observed value.
    pub fn new(rules: Vec<Vec<u8>>, values: Vec<f64>) -> Result<Self> {
        let n = rules.len();
        if n == 0 || n > u8::MAX as usize {
            return invalid_param("substitution alphabet must have between 1 and 255 symbols");
        }
        if values.len() != n {
            return invalid_param("value map must assign a value to every symbol");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid_param("value map must be bounded");
        }
        if rules.iter().any(|w| w.is_empty()) {
            return invalid_param("substitution images must be nonempty");
        }
        if rules.iter().flatten().any(|&b| b as usize >= n) {
            return invalid_param("rule image uses a symbol outside the alphabet");
        }
        if !is_primitive(&rules) {
            return invalid_param("substitution is not primitive");
        }
        let expand_power = expanding_power(&rules)
            .ok_or_else(|| Error::InvalidParameter("substitution is not expanding".into()))?;
        // Follow first letters from symbol 0 until a symbol repeats; the cycle
        // through `start` gives a power of the substitution with a fixed point.
        let mut seen = vec![usize::MAX; n];
        let mut s = 0usize;
        let mut step = 0usize;
        while seen[s] == usize::MAX {
            seen[s] = step;
            s = rules[s][0] as usize;
            step += 1;
        }
        let power = (step - seen[s]) * expand_power;
        let sub = Self { rules, values, power, buffer: RwLock::new(vec![s as u8]) };
        sub.ensure(64);
        Ok(sub)
    }

    pub fn alphabet_size(&self) -> usize {
        self.rules.len()
    }

    pub fn value(&self, symbol: u8) -> f64 {
        self.values[symbol as usize]
    }

    fn expand_once(&self, word: &[u8]) -> Vec<u8> {
        let mut cur = word.to_vec();
        for _ in 0..self.power {
            let mut next = Vec::with_capacity(cur.len() * 2);
            for &a in &cur {
                next.extend_from_slice(&self.rules[a as usize]);
            }
            cur = next;
        }
        cur
    }

    fn ensure(&self, len: usize) {
        if self.buffer.read().expect("buffer lock").len() >= len {
            return;
        }
        assert!(len <= SUBSTITUTION_BUFFER_CAP, "substitution position {len} beyond buffer cap");
        let mut buf = self.buffer.write().expect("buffer lock");
        while buf.len() < len {
            *buf = self.expand_once(&buf);
        }
    }

    /// Symbol at `pos` of the fixed point.
    pub fn symbol(&self, pos: usize) -> u8 {
        self.ensure(pos + 1);
        self.buffer.read().expect("buffer lock")[pos]
    }

    /// The first `len` symbols of the fixed point.
    pub fn prefix(&self, len: usize) -> Vec<u8> {
        self.ensure(len);
        self.buffer.read().expect("buffer lock")[..len].to_vec()
    }
}

/// Smallest `m ≤ |A| + 1` such that every image of `σ^m` has length ≥ 2.
fn expanding_power(rules: &[Vec<u8>]) -> Option<usize> {
    let n = rules.len();
    // lengths[a] = |σ^m(a)|, saturating to keep the arithmetic bounded.
    let mut lengths: Vec<usize> = rules.iter().map(Vec::len).collect();
    for m in 1..=n + 1 {
        if lengths.iter().all(|&l| l >= 2) {
            return Some(m);
        }
        lengths = rules
            .iter()
            .map(|w| w.iter().map(|&b| lengths[b as usize]).fold(0usize, |acc, l| acc.saturating_add(l)))
            .collect();
    }
    None
}

fn is_primitive(rules: &[Vec<u8>]) -> bool {
    let n = rules.len();
    let mut adj = vec![vec![false; n]; n];
    for (a, w) in rules.iter().enumerate() {
        for &b in w {
            adj[a][b as usize] = true;
        }
    }
    let mut pow = adj.clone();
    // Wielandt: a primitive n×n matrix has a positive power of order ≤ (n−1)² + 1.
    let max_power = (n - 1) * (n - 1) + 1;
    for _ in 0..max_power {
        if pow.iter().all(|row| row.iter().all(|&v| v)) {
            return true;
        }
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for k in 0..n {
                if pow[i][k] {
                    for j in 0..n {
                        next[i][j] |= adj[k][j];
                    }
                }
            }
        }
        pow = next;
    }
    pow.iter().all(|row| row.iter().all(|&v| v))
}

#[derive(Debug)]
struct SubstitutionShift(Substitution);

impl Dynamics for SubstitutionShift {
    #[inline]
    fn step(&self, _theta: &[f64], x: &mut [f64]) {
        x[0] += 1.0;
    }

    #[inline]
    fn observe(&self, _theta: &[f64], x: &[f64]) -> f64 {
        let s = self.0.symbol(x[0] as usize);
        self.0.value(s)
    }
}

/// Shift along the fixed point of a primitive expanding substitution.
pub fn make_substitution(rules: Vec<Vec<u8>>, value_map: Vec<f64>) -> Result<ModelFamily> {
    let sub = Substitution::new(rules, value_map)?;
    let bound_k = sub.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let alphabet_size = sub.alphabet_size();
    let label = sub
        .rules
        .iter()
        .enumerate()
        .map(|(a, w)| format!("{a}->{}", w.iter().map(|b| b.to_string()).collect::<String>()))
        .collect::<Vec<_>>()
        .join(",");
    let params = ParameterSpace::new(vec![Axis::Labels { labels: vec![label] }])?;
    ModelFamily::new(
        "substitution",
        params,
        StateDomain::Symbolic { alphabet_size },
        bound_k,
        Arc::new(SubstitutionShift(sub)),
    )
}

/// Thue–Morse: `0 → 01`, `1 → 10`, values `{0 ↦ 0, 1 ↦ 1}`.
pub fn thue_morse() -> ModelFamily {
    make_substitution(vec![vec![0, 1], vec![1, 0]], vec![0.0, 1.0]).expect("Thue-Morse is primitive")
}

// ---------------------------------------------------------------------------
// Serializable constructors

/// Observation on the torus for [`FamilySpec::Rotation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub kind: ObservableKind,
    pub freq: Vec<i64>,
    #[serde(default = "unit")]
    pub amplitude: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    Cos,
    Sin,
}

/// Family constructor reachable by id string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    Logistic { a_lo: f64, a_hi: f64 },
    Rotation { d: usize, dictionary: Vec<ObservableSpec> },
    IdentityVsChaos,
    Substitution { rules: Vec<Vec<u8>>, values: Vec<f64> },
}

impl FamilySpec {
    pub fn thue_morse() -> Self {
        FamilySpec::Substitution { rules: vec![vec![0, 1], vec![1, 0]], values: vec![0.0, 1.0] }
    }

    pub fn build(&self) -> Result<ModelFamily> {
        match self {
            FamilySpec::Logistic { a_lo, a_hi } => make_logistic(*a_lo, *a_hi),
            FamilySpec::Rotation { d, dictionary } => {
                for o in dictionary {
                    if o.freq.len() != *d {
                        return invalid_param(format!("frequency vector {:?} does not have dimension {d}", o.freq));
                    }
                    if !o.amplitude.is_finite() {
                        return invalid_param("observable amplitude must be finite");
                    }
                }
                let dict = dictionary
                    .iter()
                    .map(|o| match o.kind {
                        ObservableKind::Cos => TorusObservable::cosine(o.freq.clone(), o.amplitude),
                        ObservableKind::Sin => TorusObservable::sine(o.freq.clone(), o.amplitude),
                    })
                    .collect();
                make_rotation(*d, dict)
            }
            FamilySpec::IdentityVsChaos => Ok(make_identity_vs_chaos()),
            FamilySpec::Substitution { rules, values } => make_substitution(rules.clone(), values.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn logistic_examples() {
        let f = make_logistic(0.0, 4.0).unwrap();
        assert_eq!(f.step(&[4.0], &[0.5]), vec![1.0]);
        assert!((f.step(&[3.2], &[0.6875])[0] - 0.6875).abs() < 1e-15);
        assert_eq!(f.bound_k(), 1.0);
        let sub = make_logistic(0.0, 3.5).unwrap();
        assert_eq!(sub.params().axes()[0], Axis::Interval { lo: 0.0, hi: 3.5, resolution: 36 });
    }

    #[test]
    fn logistic_rejects_out_of_range() {
        assert!(matches!(make_logistic(0.0, 4.1), Err(Error::InvalidParameter(_))));
        assert!(matches!(make_logistic(-0.1, 1.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(make_logistic(3.0, 2.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn rotation_examples() {
        let f = make_rotation(1, vec![TorusObservable::cosine(vec![1], 1.0)]).unwrap();
        assert!((f.step(&[0.25, 0.0], &[0.9])[0] - 0.15).abs() < 1e-15);
        assert_eq!(f.observe(&[0.25, 0.0], &[0.0]), 1.0);
        let x = [0.37];
        assert_eq!(f.step(&[0.0, 0.0], &x), x.to_vec());
        assert!(matches!(make_rotation(1, vec![]), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn identity_vs_chaos_examples() {
        let f = make_identity_vs_chaos();
        assert_eq!(f.step(&[THETA_IDENTITY], &[0.37]), vec![0.37]);
        assert_eq!(f.step(&[THETA_CHAOTIC], &[0.75]), vec![0.75]);
        assert_eq!(f.params().grid(), vec![vec![0.0], vec![1.0]]);
    }

    #[test]
    fn substitution_prefixes() {
        let tm = Substitution::new(vec![vec![0, 1], vec![1, 0]], vec![0.0, 1.0]).unwrap();
        assert_eq!(tm.prefix(8), vec![0, 1, 1, 0, 1, 0, 0, 1]);
        let fib = Substitution::new(vec![vec![0, 1], vec![0]], vec![0.0, 1.0]).unwrap();
        assert_eq!(fib.prefix(5), vec![0, 1, 0, 0, 1]);
        assert_eq!(fib.prefix(13), vec![0, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0, 0, 1]);
        let konst = Substitution::new(vec![vec![0, 0]], vec![0.0]).unwrap();
        assert!(konst.prefix(100).iter().all(|&s| s == 0));
    }

    #[test]
    fn fibonacci_square_is_expanding() {
        // 0 → 01 → 010, 1 → 0 → 01: the square of the Fibonacci substitution.
        let fib2 = Substitution::new(vec![vec![0, 1, 0], vec![0, 1]], vec![0.0, 1.0]).unwrap();
        assert_eq!(fib2.prefix(5), vec![0, 1, 0, 0, 1]);
    }

    #[test]
    fn substitution_rejects_non_expanding() {
        assert!(matches!(Substitution::new(vec![vec![0]], vec![0.0]), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn substitution_rejects_non_primitive() {
        // 0 → 00 and 1 → 11 never mixes.
        assert!(matches!(
            Substitution::new(vec![vec![0, 0], vec![1, 1]], vec![0.0, 1.0]),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn substitution_family_shifts() {
        let f = thue_morse();
        let mut x = vec![0.0];
        let mut out = vec![];
        for _ in 0..8 {
            out.push(f.observe(&[0.0], &x));
            f.step_in_place(&[0.0], &mut x);
        }
        assert_eq!(out, vec![0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    }

    fn random_point(f: &ModelFamily, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
        let theta = f
            .params()
            .axes()
            .iter()
            .map(|a| match a {
                Axis::Interval { lo, hi, .. } => lo + (hi - lo) * rng.random::<f64>(),
                Axis::Circle { .. } => rng.random::<f64>(),
                Axis::Labels { labels } => rng.random_range(0..labels.len()) as f64,
            })
            .collect();
        let x = match f.domain() {
            StateDomain::UnitCube { dim } => (0..*dim).map(|_| rng.random::<f64>()).collect(),
            StateDomain::Torus { dim } => (0..*dim).map(|_| rng.random::<f64>()).collect(),
            StateDomain::Symbolic { .. } => vec![rng.random_range(0..10_000) as f64],
        };
        (theta, x)
    }

    fn all_families() -> Vec<ModelFamily> {
        vec![
            make_logistic(0.0, 4.0).unwrap(),
            make_rotation(2, vec![TorusObservable::cosine(vec![1, 2], 1.0), TorusObservable::sine(vec![0, 1], 0.5)])
                .unwrap(),
            make_identity_vs_chaos(),
            thue_morse(),
        ]
    }

    #[test]
    fn closure_and_boundedness() {
        let mut rng = rng::stream(0, "families/closure", &[]);
        for f in all_families() {
            for _ in 0..10_000 {
                let (theta, x) = random_point(&f, &mut rng);
                assert!(f.params().contains(&theta));
                let y = f.step(&theta, &x);
                assert!(f.domain().contains(&y), "{}: {x:?} -> {y:?}", f.id());
                assert!(f.observe(&theta, &x).abs() <= f.bound_k(), "{}", f.id());
            }
        }
    }

    #[test]
    fn continuity_probe() {
        let mut rng = rng::stream(0, "families/continuity", &[]);
        let h = 1e-6;
        for f in [make_logistic(0.0, 4.0).unwrap(), make_rotation(1, vec![TorusObservable::cosine(vec![1], 1.0)]).unwrap()] {
            let mut worst: f64 = 0.0;
            for _ in 0..10_000 {
                let (theta, x) = random_point(&f, &mut rng);
                let mut theta2 = theta.clone();
                let mut x2 = x.clone();
                for (ax, v) in f.params().axes().iter().zip(theta2.iter_mut()) {
                    if ax.is_continuous() {
                        *v = ax.project(*v + h * (rng.random::<f64>() - 0.5));
                    }
                }
                for v in x2.iter_mut() {
                    *v = f.domain().project(*v + h * (rng.random::<f64>() - 0.5));
                }
                let sep = f.params().distance(&theta, &theta2)
                    + x.iter().zip(&x2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if sep == 0.0 {
                    continue;
                }
                let a = f.observe(&theta, &f.step(&theta, &x));
                let b = f.observe(&theta2, &f.step(&theta2, &x2));
                let d = (a - b).abs();
                // Torus wrap can flip a coordinate across 0; compare on the circle.
                let d = if matches!(f.domain(), StateDomain::Torus { .. }) { d.min(2.0 * f.bound_k()) } else { d };
                worst = worst.max(d / sep);
            }
            assert!(worst.is_finite(), "{}: empirical Lipschitz constant {worst}", f.id());
            assert!(worst < 100.0, "{}: empirical Lipschitz constant {worst}", f.id());
        }
    }

    #[test]
    fn parameter_space_validation() {
        assert!(ParameterSpace::new(vec![Axis::Interval { lo: 1.0, hi: 0.0, resolution: 3 }]).is_err());
        assert!(ParameterSpace::new(vec![Axis::Interval { lo: 0.0, hi: 1.0, resolution: 1 }]).is_err());
        assert!(ParameterSpace::new(vec![Axis::Interval { lo: 0.0, hi: f64::INFINITY, resolution: 3 }]).is_err());
        let ps = ParameterSpace::new(vec![Axis::Circle { resolution: 4 }, Axis::Labels { labels: vec!["a".into(), "b".into()] }]).unwrap();
        assert_eq!(ps.grid().len(), 8);
        assert!((ps.distance(&[0.95, 0.0], &[0.05, 0.0]) - 0.1).abs() < 1e-12);
    }
}
