//! Joint `(θ, x)` search: an exhaustive coarse grid followed by
//! coordinate-wise golden-section refinement on continuous axes.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::families::{ModelFamily, StateDomain};

/// Search settings shared by risk minimization and mean-width estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Overrides the per-axis resolution of continuous parameter axes.
    pub theta_resolution: Option<usize>,
    /// Grid points per state coordinate.
    pub x_points: usize,
    /// Refinement rounds over all continuous coordinates (0 disables).
    pub rounds: usize,
    /// Golden-section iterations per coordinate and round.
    pub iterations: usize,
    /// Bracket-width tolerance relative to the axis length.
    pub tolerance: f64,
    /// Maximum number of grid candidates; larger grids are thinned and the
    /// result is flagged.
    pub max_candidates: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { theta_resolution: None, x_points: 256, rounds: 3, iterations: 20, tolerance: 1e-6, max_candidates: 1 << 22 }
    }
}

impl SearchConfig {
    pub fn grid_only(mut self) -> Self {
        self.rounds = 0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_points == 0 {
            return invalid_arg("x_points must be positive");
        }
        if matches!(self.theta_resolution, Some(r) if r < 2) {
            return invalid_arg("theta_resolution must be at least 2");
        }
        if !(self.tolerance > 0.0) {
            return invalid_arg("tolerance must be positive");
        }
        if self.max_candidates == 0 {
            return invalid_arg("max_candidates must be positive");
        }
        Ok(())
    }
}

/// Candidate grids for a family.
#[derive(Debug, Clone)]
pub struct Candidates {
    pub thetas: Vec<Vec<f64>>,
    pub xs: Vec<Vec<f64>>,
    /// Set when the grid was thinned to respect `max_candidates`.
    pub truncated: bool,
}

impl Candidates {
    pub fn len(&self) -> usize {
        self.thetas.len() * self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(θ, x)` of candidate `i` in `θ`-major order.
    pub fn get(&self, i: usize) -> (&[f64], &[f64]) {
        (&self.thetas[i / self.xs.len()], &self.xs[i % self.xs.len()])
    }
}

fn thin<T: Clone>(v: &[T], keep: usize) -> Vec<T> {
    if keep >= v.len() {
        return v.to_vec();
    }
    (0..keep).map(|i| v[i * v.len() / keep].clone()).collect()
}

pub fn candidates(family: &ModelFamily, cfg: &SearchConfig) -> Result<Candidates> {
    cfg.validate()?;
    let params = match cfg.theta_resolution {
        Some(r) => family.params().with_resolution(r)?,
        None => family.params().clone(),
    };
    let mut thetas = params.grid();
    let mut xs = family.domain().grid(cfg.x_points);
    let mut truncated = false;
    if thetas.len().saturating_mul(xs.len()) > cfg.max_candidates {
        truncated = true;
        let keep_x = (cfg.max_candidates / thetas.len()).max(1);
        xs = thin(&xs, keep_x);
        if thetas.len() * xs.len() > cfg.max_candidates {
            thetas = thin(&thetas, cfg.max_candidates);
        }
    }
    Ok(Candidates { thetas, xs, truncated })
}

/// Outcome of [`refine`].
#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
    pub value: f64,
    /// Accepted coordinate moves.
    pub steps: usize,
    pub evaluations: usize,
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section pass over every continuous coordinate of `(θ, x)`,
/// minimizing `objective`. Brackets span one grid spacing on each side of
/// the incumbent; the best point seen is kept and accepted only on strict
/// improvement, so the returned value never exceeds `value`.
pub fn refine(
    family: &ModelFamily,
    cfg: &SearchConfig,
    theta: &[f64],
    x: &[f64],
    value: f64,
    mut objective: impl FnMut(&[f64], &[f64]) -> f64,
) -> Refined {
    let mut best = Refined { theta: theta.to_vec(), x: x.to_vec(), value, steps: 0, evaluations: 0 };
    let params = match cfg.theta_resolution {
        Some(r) => family.params().with_resolution(r).unwrap_or_else(|_| family.params().clone()),
        None => family.params().clone(),
    };
    let domain = family.domain().clone();
    let x_spacing = match domain {
        StateDomain::UnitCube { .. } => 1.0 / (cfg.x_points.max(2) - 1) as f64,
        StateDomain::Torus { .. } => 1.0 / cfg.x_points as f64,
        StateDomain::Symbolic { .. } => 0.0,
    };
    // (is_theta, index, spacing, length)
    let mut coords = Vec::new();
    for (i, ax) in params.axes().iter().enumerate() {
        if ax.is_continuous() && ax.length() > 0.0 {
            coords.push((true, i, ax.spacing(), ax.length()));
        }
    }
    if domain.is_continuous() {
        for i in 0..domain.dim() {
            coords.push((false, i, x_spacing, domain.axis_length()));
        }
    }
    for _ in 0..cfg.rounds {
        let mut improved = false;
        for &(is_theta, i, spacing, length) in &coords {
            let center = if is_theta { best.theta[i] } else { best.x[i] };
            let mut t = best.theta.clone();
            let mut s = best.x.clone();
            let mut eval = |v: f64, count: &mut usize| {
                let v = if is_theta { params.axes()[i].project(v) } else { domain.project(v) };
                if is_theta {
                    t[i] = v;
                } else {
                    s[i] = v;
                }
                *count += 1;
                (v, objective(&t, &s))
            };
            let mut lo = center - spacing;
            let mut hi = center + spacing;
            let mut seen = (center, best.value);
            let mut count = 0usize;
            let mut c = hi - INV_PHI * (hi - lo);
            let mut d = lo + INV_PHI * (hi - lo);
            let (c_v, mut fc) = eval(c, &mut count);
            let (d_v, mut fd) = eval(d, &mut count);
            for (pv, fv) in [(c_v, fc), (d_v, fd)] {
                if fv < seen.1 {
                    seen = (pv, fv);
                }
            }
            for _ in 0..cfg.iterations {
                if hi - lo <= cfg.tolerance * length {
                    break;
                }
                if fc <= fd {
                    hi = d;
                    d = c;
                    fd = fc;
                    c = hi - INV_PHI * (hi - lo);
                    let (pv, fv) = eval(c, &mut count);
                    fc = fv;
                    if fv < seen.1 {
                        seen = (pv, fv);
                    }
                } else {
                    lo = c;
                    c = d;
                    fc = fd;
                    d = lo + INV_PHI * (hi - lo);
                    let (pv, fv) = eval(d, &mut count);
                    fd = fv;
                    if fv < seen.1 {
                        seen = (pv, fv);
                    }
                }
            }
            best.evaluations += count;
            if seen.1 < best.value {
                if is_theta {
                    best.theta[i] = seen.0;
                } else {
                    best.x[i] = seen.0;
                }
                best.value = seen.1;
                best.steps += 1;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    best
}

/// Lexicographic order on `(value, θ, x)` used for deterministic tie-breaks.
pub fn better(a: (f64, &[f64], &[f64]), b: (f64, &[f64], &[f64])) -> bool {
    if a.0 != b.0 {
        return a.0 < b.0;
    }
    match lex(a.1, b.1) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => lex(a.2, b.2) == std::cmp::Ordering::Less,
    }
}

fn lex(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{make_identity_vs_chaos, make_logistic};

    #[test]
    fn candidate_grid_sizes() {
        let f = make_logistic(0.0, 3.5).unwrap();
        let c = candidates(&f, &SearchConfig { x_points: 10, ..Default::default() }).unwrap();
        assert_eq!(c.len(), 36 * 10);
        assert!(!c.truncated);
        let (t, x) = c.get(11);
        assert_eq!((t[0], x[0]), (0.1, 1.0 / 9.0));
        let thin = candidates(&f, &SearchConfig { x_points: 10, max_candidates: 72, ..Default::default() }).unwrap();
        assert!(thin.truncated && thin.len() <= 72);
    }

    #[test]
    fn refine_finds_smooth_minimum_and_never_worsens() {
        let f = make_logistic(0.0, 4.0).unwrap();
        let cfg = SearchConfig { x_points: 11, ..Default::default() };
        let obj = |t: &[f64], x: &[f64]| (t[0] - 2.345).powi(2) + (x[0] - 0.4321).powi(2);
        let r = refine(&f, &cfg, &[2.4], &[0.4], obj(&[2.4], &[0.4]), obj);
        assert!((r.theta[0] - 2.345).abs() < 1e-5, "{:?}", r.theta);
        assert!((r.x[0] - 0.4321).abs() < 1e-5, "{:?}", r.x);
        let rough = |t: &[f64], _x: &[f64]| if t[0] == 2.4 { -1.0 } else { 0.0 };
        let r = refine(&f, &cfg, &[2.4], &[0.4], -1.0, rough);
        assert_eq!((r.theta[0], r.value, r.steps), (2.4, -1.0, 0));
    }

    #[test]
    fn label_axes_are_not_refined() {
        let f = make_identity_vs_chaos();
        let cfg = SearchConfig::default();
        let r = refine(&f, &cfg, &[0.0], &[0.5], 1.0, |t, x| t[0] + (x[0] - 0.5001).abs());
        assert_eq!(r.theta, vec![0.0]);
        assert!((r.x[0] - 0.5001).abs() < 1e-5);
    }

    #[test]
    fn tie_break_prefers_smaller_theta_then_x() {
        assert!(better((1.0, &[0.0], &[0.9]), (1.0, &[1.0], &[0.1])));
        assert!(better((1.0, &[1.0], &[0.1]), (1.0, &[1.0], &[0.2])));
        assert!(!better((1.0, &[1.0], &[0.2]), (1.0, &[1.0], &[0.2])));
        assert!(better((0.5, &[3.0], &[0.2]), (1.0, &[1.0], &[0.2])));
    }
}
