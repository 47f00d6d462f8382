//! Function estimates built from fiducial points, and their error functionals.
//!
//! A [`SampledFunction`] is an ordered set of `(x, φ)` pairs, optionally with
//! a per-point variance. Subsets are interpolated onto the reference grid
//! with either nearest-neighbour or piecewise-linear interpolation, and the
//! result is scored with the mean squared deviation from the reference.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Relative tolerance on reference-grid uniformity.
const UNIFORM_TOL: f64 = 1e-9;

/// An ordered sampling of a phase response.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    xs: Vec<f64>,
    values: Vec<f64>,
    variances: Option<Vec<f64>>,
    pub label: String,
}

impl SampledFunction {
    pub fn new(xs: Vec<f64>, values: Vec<f64>, variances: Option<Vec<f64>>, label: impl Into<String>) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Invalid("sampled function has no points".into()));
        }
        if xs.len() != values.len() {
            return Err(Error::Invalid(format!(
                "{} x values but {} phase values",
                xs.len(),
                values.len()
            )));
        }
        if let Some(v) = &variances {
            if v.len() != xs.len() {
                return Err(Error::Invalid(format!(
                    "{} x values but {} variances",
                    xs.len(),
                    v.len()
                )));
            }
            if let Some(bad) = v.iter().find(|s| !s.is_finite() || **s < 0.0) {
                return Err(Error::Invalid(format!(
                    "variance {bad} is not a finite nonnegative number"
                )));
            }
        }
        if xs.iter().chain(values.iter()).any(|a| !a.is_finite()) {
            return Err(Error::Invalid("sampled function contains non-finite values".into()));
        }
        if let Some(w) = xs.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Invalid(format!(
                "x values must be strictly increasing ({} followed by {})",
                w[0], w[1]
            )));
        }
        Ok(Self {
            xs,
            values,
            variances,
            label: label.into(),
        })
    }

    /// Samples `f` on the given grid without noise.
    pub fn from_fn(xs: Vec<f64>, f: impl Fn(f64) -> f64, label: impl Into<String>) -> Result<Self> {
        let values = xs.iter().map(|&x| f(x)).collect();
        Self::new(xs, values, None, label)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn variances(&self) -> Option<&[f64]> {
        self.variances.as_deref()
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.xs.clone(), values, self.variances.clone(), self.label.clone())
    }

    pub fn with_variances(self, variances: Option<Vec<f64>>) -> Result<Self> {
        Self::new(self.xs, self.values, variances, self.label)
    }

    /// Points at the given indices, which must be increasing.
    pub fn pick(&self, indices: &[usize]) -> Result<Self> {
        let xs = indices.iter().map(|&i| self.xs[i]).collect();
        let values = indices.iter().map(|&i| self.values[i]).collect();
        let variances = self.variances.as_ref().map(|v| indices.iter().map(|&i| v[i]).collect());
        Self::new(xs, values, variances, self.label.clone())
    }
}

/// `n` uniformly spaced points from `lo` to `hi`, both endpoints included.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let span = hi - lo;
            let last = (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + span * (i as f64 / last) })
                .collect()
        }
    }
}

/// Interpolation strategy between fiducial points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InterpolationMethod {
    NearestNeighbour,
    Linear,
}

impl InterpolationMethod {
    pub const ALL: [InterpolationMethod; 2] = [InterpolationMethod::NearestNeighbour, InterpolationMethod::Linear];

    pub fn as_str(self) -> &'static str {
        match self {
            InterpolationMethod::NearestNeighbour => "nn",
            InterpolationMethod::Linear => "linear",
        }
    }
}

impl fmt::Display for InterpolationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InterpolationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nn" | "nearest" | "nearest_neighbour" | "nearest_neighbor" => Ok(InterpolationMethod::NearestNeighbour),
            "linear" | "lin" => Ok(InterpolationMethod::Linear),
            other => Err(Error::Invalid(format!("unknown interpolation method `{other}`"))),
        }
    }
}

/// Indices `round(m (M−1)/(n_s−1))`, `m = 0..n_s`, rounding halves up.
pub fn subset_indices(m_points: usize, n_s: usize) -> Result<Vec<usize>> {
    if n_s < 2 {
        return Err(Error::Invalid(format!("n_s must be at least 2, got {n_s}")));
    }
    if n_s > m_points {
        return Err(Error::Invalid(format!(
            "n_s = {n_s} exceeds the {m_points} available points"
        )));
    }
    let span = m_points - 1;
    let steps = n_s - 1;
    let mut idx: Vec<usize> = (0..n_s).map(|m| (2 * m * span + steps) / (2 * steps)).collect();
    idx.dedup();
    Ok(idx)
}

/// Evenly spread subset of `n_s` points, always keeping both endpoints.
pub fn select_subset(points: &SampledFunction, n_s: usize) -> Result<SampledFunction> {
    points.pick(&subset_indices(points.len(), n_s)?)
}

/// Index `i` with `xs[i] <= x <= xs[i + 1]`; `xs.len() >= 2`.
fn bracket(xs: &[f64], x: f64) -> usize {
    let i = xs.partition_point(|&a| a <= x);
    i.clamp(1, xs.len() - 1) - 1
}

/// Weights of the two bracketing nodes for `x`.
fn node_weights(xs: &[f64], method: InterpolationMethod, x: f64) -> (usize, f64, f64) {
    if xs.len() == 1 {
        return (0, 1.0, 0.0);
    }
    let i = bracket(xs, x);
    let (x0, x1) = (xs[i], xs[i + 1]);
    match method {
        InterpolationMethod::NearestNeighbour => {
            if x1 - x < x - x0 {
                (i, 0.0, 1.0)
            } else {
                (i, 1.0, 0.0)
            }
        }
        InterpolationMethod::Linear => {
            let t = (x - x0) / (x1 - x0);
            (i, 1.0 - t, t)
        }
    }
}

fn eval_at(xs: &[f64], ys: &[f64], method: InterpolationMethod, x: f64) -> f64 {
    let (i, w0, w1) = node_weights(xs, method, x);
    if w1 == 0.0 {
        ys[i]
    } else if w0 == 0.0 {
        ys[i + 1]
    } else {
        w0 * ys[i] + w1 * ys[i + 1]
    }
}

fn check_targets(subset: &SampledFunction, targets: &[f64]) -> Result<()> {
    let (lo, hi) = (subset.x_min(), subset.x_max());
    if let Some(x) = targets.iter().find(|&&x| !(lo..=hi).contains(&x)) {
        return Err(Error::Range(format!(
            "cannot extrapolate to x = {x} outside [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// Evaluates the interpolant of `subset` at `target_xs`.
///
/// Nearest-neighbour ties go to the lower-x sample. Per-point variances,
/// when present, are propagated through the interpolation weights.
pub fn interpolate(
    subset: &SampledFunction,
    method: InterpolationMethod,
    target_xs: &[f64],
) -> Result<SampledFunction> {
    check_targets(subset, target_xs)?;
    let xs = subset.xs();
    let ys = subset.values();
    let values: Vec<f64> = target_xs.iter().map(|&x| eval_at(xs, ys, method, x)).collect();
    let variances = subset.variances().map(|var| {
        target_xs
            .iter()
            .map(|&x| {
                let (i, w0, w1) = node_weights(xs, method, x);
                let mut s = w0 * w0 * var[i];
                if w1 != 0.0 {
                    s += w1 * w1 * var[i + 1];
                }
                s
            })
            .collect()
    });
    SampledFunction::new(target_xs.to_vec(), values, variances, subset.label.clone())
}

/// Precomputed interpolation weights of a fixed set of nodes onto fixed
/// targets. Applying it to new node values is a single pass over the targets.
#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    taps: Vec<(usize, f64, f64)>,
}

impl Stencil {
    pub(crate) fn new(subset: &SampledFunction, method: InterpolationMethod, targets: &[f64]) -> Result<Self> {
        check_targets(subset, targets)?;
        let xs = subset.xs();
        Ok(Self {
            taps: targets.iter().map(|&x| node_weights(xs, method, x)).collect(),
        })
    }

    pub(crate) fn apply_into(&self, ys: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.taps.iter().map(|&(i, w0, w1)| {
            if w1 == 0.0 {
                ys[i]
            } else if w0 == 0.0 {
                ys[i + 1]
            } else {
                w0 * ys[i] + w1 * ys[i + 1]
            }
        }));
    }
}

/// Checks that `reference` is uniformly spaced and returns its spacing.
pub fn reference_spacing(reference: &SampledFunction) -> Result<f64> {
    if reference.len() < 2 {
        return Err(Error::Invalid("reference needs at least two nodes".into()));
    }
    let span = reference.x_max() - reference.x_min();
    let dx = span / (reference.len() - 1) as f64;
    if let Some(w) = reference
        .xs()
        .windows(2)
        .find(|w| ((w[1] - w[0]) - dx).abs() > UNIFORM_TOL * span)
    {
        return Err(Error::Invalid(format!(
            "reference grid is not uniform near x = {}",
            w[0]
        )));
    }
    Ok(dx)
}

/// Trapezoid-weighted mean squared deviation on a uniform grid.
pub(crate) fn weighted_mse(estimate: &[f64], reference: &[f64]) -> f64 {
    let n = reference.len();
    let mut acc = 0.0;
    for (i, (a, b)) in estimate.iter().zip(reference).enumerate() {
        let d = a - b;
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += w * d * d;
    }
    acc / (n - 1) as f64
}

/// `δ² = (1/L) Σ |φ̃(x_i) − φ_ref(x_i)|² Δx_ref` over the reference nodes,
/// with halved endpoint weights so that the weights add up to `L`.
pub fn delta_squared(estimate: &SampledFunction, reference: &SampledFunction) -> Result<f64> {
    reference_spacing(reference)?;
    if let Some((i, _)) = estimate
        .xs()
        .iter()
        .zip(reference.xs())
        .enumerate()
        .find(|(_, (a, b))| a != b)
    {
        return Err(Error::GridMismatch { x: estimate.xs()[i] });
    }
    if estimate.len() != reference.len() {
        let n = estimate.len().min(reference.len());
        let x = estimate
            .xs()
            .get(n)
            .or(reference.xs().get(n))
            .copied()
            .unwrap_or(f64::NAN);
        return Err(Error::GridMismatch { x });
    }
    Ok(weighted_mse(estimate.values(), reference.values()))
}

/// `(1/L) ∫ |φ(x) − φ̃(x)|² dx` over the span of `estimate`, by adaptive
/// Simpson quadrature on each smooth piece of the interpolant.
pub fn continuous_delta(
    reference: &dyn Fn(f64) -> f64,
    estimate: &SampledFunction,
    method: InterpolationMethod,
    rel_tol: f64,
) -> Result<f64> {
    let xs = estimate.xs();
    let ys = estimate.values();
    let (lo, hi) = (estimate.x_min(), estimate.x_max());
    let span = hi - lo;
    if span <= 0.0 {
        return Err(Error::Invalid("estimate must span a nonempty interval".into()));
    }

    let mut breaks = xs.to_vec();
    if method == InterpolationMethod::NearestNeighbour {
        breaks.extend(xs.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        breaks.sort_by(f64::total_cmp);
    }
    // Each piece gets its own polynomial, fixed at the piece midpoint, so a
    // rounding-level offset between break and jump cannot split a piece.
    let piece = |a: f64, b: f64| {
        let m = 0.5 * (a + b);
        let i = xs.partition_point(|&x| x <= m).clamp(1, xs.len() - 1) - 1;
        let (x0, x1, y0, y1) = (xs[i], xs[i + 1], ys[i], ys[i + 1]);
        let c = eval_at(xs, ys, method, m);
        move |x: f64| {
            let local = match method {
                InterpolationMethod::NearestNeighbour => c,
                InterpolationMethod::Linear => y0 + (y1 - y0) * (x - x0) / (x1 - x0),
            };
            let d = reference(x) - local;
            d * d
        }
    };

    // Crude pass to turn the relative tolerance into an absolute one.
    let crude: f64 = breaks
        .windows(2)
        .map(|w| simpson(&piece(w[0], w[1]), w[0], w[1]).0)
        .sum();
    let abs_tol = rel_tol * crude.abs().max(f64::MIN_POSITIVE);

    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let f = piece(a, b);
        let tol = abs_tol * (b - a) / span;
        let (whole, fm) = simpson(&f, a, b);
        total += adaptive_simpson(&f, a, b, f(a), fm, f(b), whole, tol, 50)?;
    }
    Ok(total / span)
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (f(a) + 4.0 * fm + f(b)), fm)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Quadrature { lo: a, hi: b });
    }
    Ok(adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}
