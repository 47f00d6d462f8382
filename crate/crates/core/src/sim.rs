//! Synthetic acquisition: response models, photon-count sampling and the
//! Gaussian Cramér–Rao shortcut.
//!
//! Randomness is drawn from [`SeededRng`] streams. Every fiducial point gets
//! its own stream keyed by its index, so results do not depend on the order
//! in which points are processed or on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::interp::{interpolate, uniform_grid, InterpolationMethod, SampledFunction};
use crate::measurement::{
    crb_variance_for_resources, probability_vector, shots_from_resources, PhasePoint, ProbeModel, ResourceConvention,
};

/// Deterministic random stream identified by `(seed, stream_id)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeededRng {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream_id: 0 }
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Child stream keyed by `key`; distinct keys give unrelated streams.
    pub fn derive(&self, key: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(key)),
        }
    }

    /// Child stream keyed by a sequence of keys.
    pub fn derive_all(&self, keys: &[u64]) -> Self {
        keys.iter().fold(*self, |r, &k| r.derive(k))
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Closed-form phase responses.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticResponse {
    /// `slope·x + intercept`
    Linear { slope: f64, intercept: f64 },
    /// `amplitude / (1 + exp(−steepness (x − midpoint)))`
    Sigmoid {
        amplitude: f64,
        steepness: f64,
        midpoint: f64,
    },
    /// `offset + amplitude · sin(frequency·x + phase)`
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        phase: f64,
        offset: f64,
    },
}

impl AnalyticResponse {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            AnalyticResponse::Linear { slope, intercept } => slope * x + intercept,
            AnalyticResponse::Sigmoid {
                amplitude,
                steepness,
                midpoint,
            } => amplitude / (1.0 + (-steepness * (x - midpoint)).exp()),
            AnalyticResponse::Sinusoid {
                amplitude,
                frequency,
                phase,
                offset,
            } => offset + amplitude * (frequency * x + phase).sin(),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            AnalyticResponse::Linear { .. } => "linear",
            AnalyticResponse::Sigmoid { .. } => "sigmoid",
            AnalyticResponse::Sinusoid { .. } => "sinusoid",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            AnalyticResponse::Linear { slope, intercept } => vec![slope, intercept],
            AnalyticResponse::Sigmoid {
                amplitude,
                steepness,
                midpoint,
            } => vec![amplitude, steepness, midpoint],
            AnalyticResponse::Sinusoid {
                amplitude,
                frequency,
                phase,
                offset,
            } => vec![amplitude, frequency, phase, offset],
        }
    }

    /// Builds a family from its name and coefficient list.
    pub fn from_params(family: &str, p: &[f64]) -> Result<Self> {
        let need = |n: usize| {
            if p.len() == n {
                Ok(())
            } else {
                Err(Error::Invalid(format!(
                    "{family} response takes {n} coefficients, got {}",
                    p.len()
                )))
            }
        };
        match family {
            "linear" => {
                need(2)?;
                Ok(Self::Linear {
                    slope: p[0],
                    intercept: p[1],
                })
            }
            "sigmoid" => {
                need(3)?;
                Ok(Self::Sigmoid {
                    amplitude: p[0],
                    steepness: p[1],
                    midpoint: p[2],
                })
            }
            "sinusoid" => {
                need(4)?;
                Ok(Self::Sinusoid {
                    amplitude: p[0],
                    frequency: p[1],
                    phase: p[2],
                    offset: p[3],
                })
            }
            other => Err(Error::Invalid(format!("unknown response family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhaseResponse {
    Analytic(AnalyticResponse),
    /// Ingested grid, evaluated by linear interpolation.
    Sampled(SampledFunction),
}

#[derive(Debug, Clone, PartialEq)]
pub enum VisibilityModel {
    Constant(f64),
    Sampled(SampledFunction),
}

/// The response φ(x) and visibility v(x) standing in for the device under test.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseModel {
    pub phase: PhaseResponse,
    pub visibility: VisibilityModel,
    pub domain: (f64, f64),
}

impl Default for ResponseModel {
    /// Sigmoid `2.5 / (1 + e^{−3(x−1.5)})` on `[0, 3]` V with `v = 0.95`.
    fn default() -> Self {
        Self {
            phase: PhaseResponse::Analytic(AnalyticResponse::Sigmoid {
                amplitude: 2.5,
                steepness: 3.0,
                midpoint: 1.5,
            }),
            visibility: VisibilityModel::Constant(0.95),
            domain: (0.0, 3.0),
        }
    }
}

impl ResponseModel {
    pub fn analytic(phase: AnalyticResponse, vis: f64, domain: (f64, f64)) -> Result<Self> {
        let m = Self {
            phase: PhaseResponse::Analytic(phase),
            visibility: VisibilityModel::Constant(vis),
            domain,
        };
        m.validate()?;
        Ok(m)
    }

    /// Model backed by an ingested phase grid; the domain is the grid span.
    pub fn sampled(phase: SampledFunction, visibility: VisibilityModel) -> Result<Self> {
        let m = Self {
            domain: (phase.x_min(), phase.x_max()),
            phase: PhaseResponse::Sampled(phase),
            visibility,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Invalid(format!("empty or invalid domain [{lo}, {hi}]")));
        }
        if let PhaseResponse::Sampled(f) = &self.phase {
            if f.len() < 2 {
                return Err(Error::Invalid("sampled response needs at least two points".into()));
            }
            if f.x_min() > lo || f.x_max() < hi {
                return Err(Error::Invalid("sampled response does not cover the domain".into()));
            }
        }
        match &self.visibility {
            VisibilityModel::Constant(v) => {
                if !(0.0..=1.0).contains(v) {
                    return Err(Error::Domain(format!("visibility {v} outside [0, 1]")));
                }
            }
            VisibilityModel::Sampled(f) => {
                if let Some(v) = f.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(Error::Domain(format!("visibility {v} outside [0, 1]")));
                }
                if f.x_min() > lo || f.x_max() < hi {
                    return Err(Error::Invalid("sampled visibility does not cover the domain".into()));
                }
            }
        }
        Ok(())
    }

    /// Phase only, without domain checks.
    pub fn phase_at(&self, x: f64) -> f64 {
        match &self.phase {
            PhaseResponse::Analytic(a) => a.eval(x),
            PhaseResponse::Sampled(f) => sampled_at(f, x),
        }
    }

    fn visibility_at(&self, x: f64) -> f64 {
        match &self.visibility {
            VisibilityModel::Constant(v) => *v,
            VisibilityModel::Sampled(f) => sampled_at(f, x),
        }
    }

    /// Smallest and largest phase on a dense grid over the domain.
    pub fn phase_range(&self) -> (f64, f64) {
        let xs = uniform_grid(self.domain.0, self.domain.1, 2001);
        xs.iter()
            .map(|&x| self.phase_at(x))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p), hi.max(p)))
    }
}

fn sampled_at(f: &SampledFunction, x: f64) -> f64 {
    interpolate(f, InterpolationMethod::Linear, &[x])
        .map(|s| s.values()[0])
        .unwrap_or(f64::NAN)
}

/// Phase and visibility of the model at signal value `x`.
pub fn eval_response(model: &ResponseModel, x: f64) -> Result<PhasePoint> {
    let (lo, hi) = model.domain;
    if !(lo..=hi).contains(&x) {
        return Err(Error::Range(format!(
            "x = {x} outside the response domain [{lo}, {hi}]"
        )));
    }
    PhasePoint::new(model.phase_at(x), model.visibility_at(x))
}

/// Detected events per projection setting at one fiducial point.
#[derive(Debug, Clone, PartialEq)]
pub struct CountRecord {
    pub x: f64,
    pub counts: Vec<u64>,
    pub n_shots: u64,
}

impl CountRecord {
    pub fn new(x: f64, counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Invalid("count record has no settings".into()));
        }
        let n_shots = counts.iter().sum();
        if n_shots == 0 {
            log::debug!("count record at x = {x} is empty");
        }
        Ok(Self { x, counts, n_shots })
    }
}

/// Draws `n_shots` categorical outcomes from the probe distribution.
///
/// The multinomial draw is realised as a chain of conditional binomials.
pub fn sample_counts(probe: &ProbeModel, point: PhasePoint, n_shots: u64, rng: SeededRng) -> Result<Vec<u64>> {
    if n_shots == 0 {
        return Err(Error::Invalid("n_shots must be at least 1".into()));
    }
    let probs = probability_vector(probe, point)?;
    let mut gen = rng.generator();
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = n_shots;
    let mut rest = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        if i + 1 == probs.len() {
            counts[i] = remaining;
            break;
        }
        if remaining == 0 {
            break;
        }
        let q = if rest > 0.0 { (p / rest).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(remaining, q)
            .map_err(|e| Error::Invalid(format!("binomial parameters: {e}")))?
            .sample(&mut gen);
        counts[i] = draw;
        remaining -= draw;
        rest -= p;
    }
    Ok(counts)
}

/// Simulated acquisition: one count record per signal value, each with the
/// shots affordable from `n_resources` and its own random stream.
pub fn acquire_function(
    model: &ResponseModel,
    xs: &[f64],
    probe: &ProbeModel,
    n_resources: u64,
    rng: SeededRng,
) -> Result<Vec<CountRecord>> {
    if xs.is_empty() {
        return Err(Error::Invalid("no signal values to acquire".into()));
    }
    let n_shots = shots_from_resources(probe, n_resources)?.n_shots;
    xs.par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let point = eval_response(model, x)?;
            let counts = sample_counts(probe, point, n_shots, rng.derive(i as u64))?;
            CountRecord::new(x, counts)
        })
        .collect()
}

/// Fiducial estimates drawn as `φ(x) + N(0, ε²)` with the Cramér–Rao variance,
/// carrying `ε²` as the per-point variance.
pub fn sample_crb_estimates(
    model: &ResponseModel,
    xs: &[f64],
    probe: &ProbeModel,
    n_resources: u64,
    convention: ResourceConvention,
    rng: SeededRng,
) -> Result<SampledFunction> {
    let draws = xs
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let point = eval_response(model, x)?;
            let var = crb_variance_for_resources(probe, point, n_resources, convention)?;
            let z: f64 = StandardNormal.sample(&mut rng.derive(i as u64).generator());
            Ok((point.phi + var.sqrt() * z, var))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (values, variances) = draws.into_iter().unzip();
    SampledFunction::new(
        xs.to_vec(),
        values,
        Some(variances),
        format!("crb_{}_{n_resources}", probe.kind()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn eval_response_examples() {
        let lin = ResponseModel::analytic(
            AnalyticResponse::Linear {
                slope: 0.5,
                intercept: 0.0,
            },
            0.95,
            (0.0, 3.0),
        )
        .unwrap();
        let p = eval_response(&lin, 2.0).unwrap();
        assert_eq!((p.phi, p.vis), (1.0, 0.95));

        let sig = ResponseModel::analytic(
            AnalyticResponse::Sigmoid {
                amplitude: 2.0,
                steepness: 4.0,
                midpoint: 1.5,
            },
            0.9,
            (0.0, 3.0),
        )
        .unwrap();
        assert_abs_diff_eq!(eval_response(&sig, 1.5).unwrap().phi, 1.0);

        let grid = SampledFunction::new(vec![0.0, 3.0], vec![0.0, 3.0], None, "").unwrap();
        let sampled = ResponseModel::sampled(grid, VisibilityModel::Constant(0.9)).unwrap();
        assert_abs_diff_eq!(eval_response(&sampled, 1.0).unwrap().phi, 1.0, epsilon = 1e-15);
        assert!(matches!(eval_response(&sampled, 3.5), Err(Error::Range(_))));
    }

    #[test]
    fn invalid_models_rejected() {
        let a = AnalyticResponse::Linear {
            slope: 1.0,
            intercept: 0.0,
        };
        assert!(ResponseModel::analytic(a.clone(), 1.5, (0.0, 3.0)).is_err());
        assert!(ResponseModel::analytic(a, 0.5, (3.0, 3.0)).is_err());
    }

    #[test]
    fn single_shot_lands_in_one_category() {
        let probe = ProbeModel::noon2();
        for s in 0..50 {
            let c = sample_counts(&probe, PhasePoint::new(0.3, 0.8).unwrap(), 1, SeededRng::new(s)).unwrap();
            assert_eq!(c.iter().sum::<u64>(), 1);
            assert_eq!(c.iter().filter(|&&n| n == 1).count(), 1);
        }
    }

    #[test]
    fn counts_are_deterministic_per_stream() {
        let probe = ProbeModel::single_photon();
        let p = PhasePoint::new(1.1, 0.9).unwrap();
        let a = sample_counts(&probe, p, 1000, SeededRng::with_stream(7, 3)).unwrap();
        let b = sample_counts(&probe, p, 1000, SeededRng::with_stream(7, 3)).unwrap();
        let c = sample_counts(&probe, p, 1000, SeededRng::with_stream(7, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn large_sample_frequencies() {
        let probe = ProbeModel::noon2();
        let n = 1_000_000u64;
        let c = sample_counts(&probe, PhasePoint::new(0.0, 1.0).unwrap(), n, SeededRng::new(1)).unwrap();
        for (k, p) in c.iter().zip([0.5, 0.25, 0.0, 0.25]) {
            let f = *k as f64 / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((f - p).abs() <= 3.0 * sigma + 1e-12, "{f} vs {p}");
        }
    }

    #[test]
    fn chi_square_not_rejected() {
        let probe = ProbeModel::noon2();
        let point = PhasePoint::new(PI / 16.0, 1.0).unwrap();
        let c = sample_counts(&probe, point, 400, SeededRng::new(2024)).unwrap();
        assert_eq!(c.iter().sum::<u64>(), 400);
        let chi2: f64 = c
            .iter()
            .zip([0.48097, 0.34567, 0.01903, 0.15433])
            .map(|(&o, p)| {
                let e = 400.0 * p;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        // χ²(3) critical value at α = 0.001
        assert!(chi2 < 16.266, "chi2 = {chi2}");
    }

    #[test]
    fn acquisition_shapes() {
        let model = ResponseModel::default();
        let xs = uniform_grid(0.0, 3.0, 100);
        let noon = acquire_function(&model, &xs, &ProbeModel::noon2(), 800, SeededRng::new(1)).unwrap();
        assert_eq!(noon.len(), 100);
        assert!(noon
            .iter()
            .all(|r| r.n_shots == 400 && r.counts.iter().sum::<u64>() == 400));
        let single = acquire_function(&model, &xs, &ProbeModel::single_photon(), 1900, SeededRng::new(1)).unwrap();
        assert!(single.iter().all(|r| r.n_shots == 1900));
        let one = acquire_function(&model, &[1.5], &ProbeModel::noon2(), 800, SeededRng::new(1)).unwrap();
        assert_eq!(one.len(), 1);
        assert!(acquire_function(&model, &[], &ProbeModel::noon2(), 800, SeededRng::new(1)).is_err());
    }

    #[test]
    fn crb_sampler_errors_on_zero_visibility() {
        let model = ResponseModel::analytic(
            AnalyticResponse::Linear {
                slope: 0.5,
                intercept: 0.0,
            },
            0.0,
            (0.0, 3.0),
        )
        .unwrap();
        let r = sample_crb_estimates(
            &model,
            &[1.0],
            &ProbeModel::noon2(),
            800,
            ResourceConvention::PerShot,
            SeededRng::new(0),
        );
        assert!(matches!(r, Err(Error::Unidentifiable)));
    }

    #[test]
    fn crb_sampler_converges_with_resources() {
        let model = ResponseModel::default();
        let xs = uniform_grid(0.0, 3.0, 20);
        let f = sample_crb_estimates(
            &model,
            &xs,
            &ProbeModel::noon2(),
            10_000_000_000,
            ResourceConvention::PerShot,
            SeededRng::new(3),
        )
        .unwrap();
        for ((x, v), var) in xs.iter().zip(f.values()).zip(f.variances().unwrap()) {
            assert!(*var < 1e-8);
            assert!((v - model.phase_at(*x)).abs() < 1e-3);
        }
    }

    #[test]
    fn derived_streams_differ() {
        let r = SeededRng::new(5);
        assert_ne!(r.derive(0), r.derive(1));
        assert_eq!(r.derive_all(&[1, 2]), r.derive(1).derive(2));
        assert_ne!(r.derive_all(&[1, 2]), r.derive_all(&[2, 1]));
    }
}
