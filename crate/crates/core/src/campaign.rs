//! Resource-allocation campaign: δ² against the number of sampled points for
//! each probe, resource budget and interpolation method.
//!
//! For every `(probe, N_r)` pair the campaign acquires `M` fiducial points,
//! either from simulated counts passed through the Bayesian estimator or from
//! the Gaussian Cramér–Rao shortcut. Each subset size `N_s` is then scored by
//! a Monte-Carlo routine: the fiducial estimates are perturbed with their own
//! variances, subsampled, interpolated onto the reference grid and compared
//! with the reference. The perturbations of one repetition are shared by all
//! subset sizes and methods of the same `(probe, N_r)` pair.
//!
//! Random streams are keyed by `(probe, N_r, point index, repetition)` so the
//! result depends only on the configuration and the seed.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bayes::{estimate_records, estimates_to_function, EstimatorConfig, PointEstimate, PriorSupport};
use crate::error::{Error, Result};
use crate::interp::{
    reference_spacing, subset_indices, uniform_grid, weighted_mse, InterpolationMethod, SampledFunction, Stencil,
};
use crate::measurement::{ProbeKind, ProbeModel, ResourceConvention};
use crate::sim::{acquire_function, sample_crb_estimates, CountRecord, ResponseModel, SeededRng};

/// How fiducial points (or the reference) are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Simulated counts followed by Bayesian estimation.
    Full,
    /// Gaussian noise at the Cramér–Rao variance.
    CrbShortcut,
    /// Noise-free evaluation of the response.
    Exact,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::CrbShortcut => "crb",
            Mode::Exact => "exact",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Mode::Full),
            "crb" | "crb_shortcut" | "crbshortcut" => Ok(Mode::CrbShortcut),
            "exact" => Ok(Mode::Exact),
            other => Err(Error::Invalid(format!("unknown mode `{other}`"))),
        }
    }
}

/// Default ladder of subset sizes; values above `M` are dropped.
pub const DEFAULT_N_S: [usize; 19] = [2, 3, 4, 5, 6, 8, 10, 12, 15, 20, 25, 30, 40, 50, 60, 70, 80, 90, 100];

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub response: ResponseModel,
    pub probes: Vec<ProbeKind>,
    pub n_resources: Vec<u64>,
    /// Number of acquired fiducial points `M`.
    pub n_points: usize,
    pub n_s_values: Vec<usize>,
    pub methods: Vec<InterpolationMethod>,
    pub reference_n_s: usize,
    pub reference_n_resources: u64,
    pub reference_probe: ProbeKind,
    pub mc_reps: usize,
    pub mode: Mode,
    /// `None` uses `mode` for the reference as well.
    pub reference_mode: Option<Mode>,
    pub convention: ResourceConvention,
    pub grid: (usize, usize),
    pub vis_support: (f64, f64),
    /// Fixed phase support; `None` centres a fundamental window of each probe
    /// on the phase range of the response.
    pub phi_support: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            response: ResponseModel::default(),
            probes: vec![ProbeKind::Noon2, ProbeKind::SinglePhoton],
            n_resources: vec![800, 1900],
            n_points: 100,
            n_s_values: DEFAULT_N_S.to_vec(),
            methods: InterpolationMethod::ALL.to_vec(),
            reference_n_s: 500,
            reference_n_resources: 60_000,
            reference_probe: ProbeKind::Noon2,
            mc_reps: 500,
            mode: Mode::Full,
            reference_mode: None,
            convention: ResourceConvention::PerShot,
            grid: (512, 256),
            vis_support: (0.0, 1.0),
            phi_support: None,
            seed: 42,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        self.response.validate()?;
        let bad = |m: String| Err(Error::Invalid(m));
        if self.probes.is_empty()
            || self.n_resources.is_empty()
            || self.methods.is_empty()
            || self.n_s_values.is_empty()
        {
            return bad("probes, n_resources, methods and n_s_values must be nonempty".into());
        }
        if self.n_points < 2 {
            return bad(format!("n_points = {} must be at least 2", self.n_points));
        }
        if let Some(n) = self.n_s_values.iter().find(|&&n| n < 2 || n > self.n_points) {
            return bad(format!(
                "n_s = {n} outside [2, {}]: n_s exceeds acquired points",
                self.n_points
            ));
        }
        if self.mc_reps < 2 {
            return bad(format!("mc_reps = {} must be at least 2", self.mc_reps));
        }
        if self.reference_n_s < 2 {
            return bad("reference_n_s must be at least 2".into());
        }
        if self.n_resources.contains(&0) || self.reference_n_resources == 0 {
            return bad("resource budgets must be positive".into());
        }
        let (vlo, vhi) = self.vis_support;
        if !(0.0 <= vlo && vlo < vhi && vhi <= 1.0) {
            return bad(format!(
                "vis_support [{vlo}, {vhi}] must be a nonempty subset of [0, 1]"
            ));
        }
        if let Some((lo, hi)) = self.phi_support {
            if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
                return bad(format!("phi_support [{lo}, {hi}] is empty"));
            }
        }
        Ok(())
    }

    /// Prior support used when estimating points of `probe`.
    pub fn support_for(&self, probe: &ProbeModel) -> PriorSupport {
        let mut s = match self.phi_support {
            Some(phi) => PriorSupport { phi, vis: (0.0, 1.0) },
            None => {
                let (lo, hi) = self.response.phase_range();
                PriorSupport::centered(probe, 0.5 * (lo + hi))
            }
        };
        s.vis = self.vis_support;
        s
    }

    fn estimator_for(&self, probe: &ProbeModel) -> EstimatorConfig {
        EstimatorConfig {
            support: Some(self.support_for(probe)),
            resolution: self.grid,
        }
    }
}

/// Stream tags separating reference, acquisition and Monte-Carlo randomness.
const TAG_REFERENCE: u64 = 0;
const TAG_ACQUIRE: u64 = 1;
const TAG_MONTECARLO: u64 = 2;

fn probe_key(kind: ProbeKind) -> u64 {
    match kind {
        ProbeKind::SinglePhoton => 1,
        ProbeKind::Noon2 => 2,
    }
}

/// Random stream of the acquisition for `(probe, N_r)`.
pub fn acquisition_rng(config: &CampaignConfig, kind: ProbeKind, n_resources: u64) -> SeededRng {
    SeededRng::new(config.seed)
        .derive(TAG_ACQUIRE)
        .derive_all(&[probe_key(kind), n_resources])
}

/// Random stream of the reference acquisition.
pub fn reference_rng(config: &CampaignConfig) -> SeededRng {
    SeededRng::new(config.seed).derive(TAG_REFERENCE)
}

/// Fiducial points of one `(probe, N_r)` pair.
#[derive(Debug, Clone)]
pub struct Acquisition {
    pub probe: ProbeKind,
    pub n_resources: u64,
    pub points: SampledFunction,
    /// Present in `Full` mode.
    pub records: Option<Vec<CountRecord>>,
    pub estimates: Option<Vec<PointEstimate>>,
}

/// Produces fiducial points of `probe` on `xs` according to `mode`.
#[allow(clippy::too_many_arguments)]
pub fn acquire_points(
    config: &CampaignConfig,
    mode: Mode,
    kind: ProbeKind,
    xs: &[f64],
    n_resources: u64,
    rng: SeededRng,
    label: &str,
) -> Result<Acquisition> {
    let probe = ProbeModel::new(kind);
    let (points, records, estimates) = match mode {
        Mode::Exact => {
            let f = SampledFunction::from_fn(xs.to_vec(), |x| config.response.phase_at(x), label)?
                .with_variances(Some(vec![0.0; xs.len()]))?;
            (f, None, None)
        }
        Mode::CrbShortcut => {
            let mut f = sample_crb_estimates(&config.response, xs, &probe, n_resources, config.convention, rng)?;
            f.label = label.to_string();
            (f, None, None)
        }
        Mode::Full => {
            let records = acquire_function(&config.response, xs, &probe, n_resources, rng)?;
            let estimates = estimate_records(&records, &probe, &config.estimator_for(&probe))?;
            let warned = estimates.iter().filter(|e| e.boundary_warning()).count();
            if warned > 0 {
                log::info!(
                    "{label}: {warned} of {} posteriors have mass on the grid boundary",
                    estimates.len()
                );
            }
            let f = estimates_to_function(&estimates, label)?;
            (f, Some(records), Some(estimates))
        }
    };
    Ok(Acquisition {
        probe: kind,
        n_resources,
        points,
        records,
        estimates,
    })
}

/// The reference phase on a uniform grid of `reference_n_s` points.
pub fn build_reference(config: &CampaignConfig, rng: SeededRng) -> Result<SampledFunction> {
    build_reference_full(config, rng).map(|a| a.points)
}

fn build_reference_full(config: &CampaignConfig, rng: SeededRng) -> Result<Acquisition> {
    let (lo, hi) = config.response.domain;
    let xs = uniform_grid(lo, hi, config.reference_n_s);
    let mode = config.reference_mode.unwrap_or(config.mode);
    acquire_points(
        config,
        mode,
        config.reference_probe,
        &xs,
        config.reference_n_resources,
        rng,
        "reference",
    )
}

/// Mean and standard deviation of δ² over Monte-Carlo repetitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaStats {
    pub mean: f64,
    pub std: f64,
}

/// Standard normal draws, one row per repetition and one column per point.
struct NoiseTable {
    width: usize,
    z: Vec<f64>,
}

impl NoiseTable {
    fn new(rng: SeededRng, reps: usize, width: usize) -> Self {
        let z = (0..reps)
            .into_par_iter()
            .flat_map_iter(|r| {
                let mut g = rng.derive(r as u64).generator();
                (0..width)
                    .map(move |_| StandardNormal.sample(&mut g))
                    .collect::<Vec<f64>>()
            })
            .collect();
        Self { width, z }
    }

    fn reps(&self) -> usize {
        self.z.len() / self.width
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.z[r * self.width..(r + 1) * self.width]
    }
}

/// Monte-Carlo δ² of `points` (indices `ids` into the noise table columns).
fn montecarlo_core(
    points: &SampledFunction,
    ids: &[usize],
    reference: &SampledFunction,
    method: InterpolationMethod,
    noise: &NoiseTable,
) -> Result<DeltaStats> {
    let var = points
        .variances()
        .ok_or_else(|| Error::Invalid("Monte-Carlo error needs per-point variances".into()))?;
    reference_spacing(reference)?;
    let stencil = Stencil::new(points, method, reference.xs())?;
    let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    let base = points.values();
    let samples: Vec<f64> = (0..noise.reps())
        .into_par_iter()
        .map_init(
            || (Vec::with_capacity(base.len()), Vec::with_capacity(reference.len())),
            |(perturbed, interp), r| {
                let z = noise.row(r);
                perturbed.clear();
                perturbed.extend(ids.iter().enumerate().map(|(j, &id)| base[j] + sd[j] * z[id]));
                stencil.apply_into(perturbed, interp);
                weighted_mse(interp, reference.values())
            },
        )
        .collect();
    Ok(sample_stats(&samples))
}

fn sample_stats(samples: &[f64]) -> DeltaStats {
    // shifted by the first sample so identical samples give exactly zero spread
    let n = samples.len() as f64;
    let k = samples[0];
    let s1: f64 = samples.iter().map(|s| s - k).sum();
    let s2: f64 = samples.iter().map(|s| (s - k) * (s - k)).sum();
    DeltaStats {
        mean: k + s1 / n,
        std: ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0).sqrt(),
    }
}

/// Perturbs every point by `N(0, variance)`, interpolates onto the reference
/// grid and scores δ²; returns mean and standard deviation over `reps`.
pub fn montecarlo_delta_error(
    points: &SampledFunction,
    reference: &SampledFunction,
    method: InterpolationMethod,
    reps: usize,
    rng: SeededRng,
) -> Result<DeltaStats> {
    if reps < 2 {
        return Err(Error::Invalid(format!("reps = {reps} must be at least 2")));
    }
    if points.variances().is_none() {
        return Err(Error::Invalid("Monte-Carlo error needs per-point variances".into()));
    }
    let noise = NoiseTable::new(rng, reps, points.len());
    let ids: Vec<usize> = (0..points.len()).collect();
    montecarlo_core(points, &ids, reference, method, &noise)
}

/// One point of a δ²(N_s) curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignRow {
    pub probe: ProbeKind,
    pub n_resources: u64,
    pub method: InterpolationMethod,
    pub n_s: usize,
    pub delta2_mean: f64,
    pub delta2_std: f64,
    /// Set when the row could not be computed; the numbers are then NaN.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub rows: Vec<CampaignRow>,
    pub config_hash: String,
    pub seed: u64,
}

impl CampaignResult {
    pub fn failures(&self) -> impl Iterator<Item = &CampaignRow> {
        self.rows.iter().filter(|r| r.failure.is_some())
    }

    /// Rows of one curve, in configuration order.
    pub fn curve(&self, probe: ProbeKind, n_resources: u64, method: InterpolationMethod) -> Vec<&CampaignRow> {
        self.rows
            .iter()
            .filter(|r| r.probe == probe && r.n_resources == n_resources && r.method == method)
            .collect()
    }
}

/// Everything a campaign produces.
#[derive(Debug, Clone)]
pub struct CampaignRun {
    pub result: CampaignResult,
    pub reference: Acquisition,
    pub acquisitions: Vec<Acquisition>,
}

fn curve_rows(
    config: &CampaignConfig,
    acq: &Acquisition,
    reference: &SampledFunction,
    noise: &NoiseTable,
) -> Vec<CampaignRow> {
    let mut rows = Vec::new();
    for &method in &config.methods {
        for &n_s in &config.n_s_values {
            let stats = subset_indices(acq.points.len(), n_s).and_then(|ids| {
                let subset = acq.points.pick(&ids)?;
                montecarlo_core(&subset, &ids, reference, method, noise)
            });
            rows.push(row_from(acq.probe, acq.n_resources, method, n_s, stats));
        }
    }
    rows
}

fn row_from(
    probe: ProbeKind,
    n_resources: u64,
    method: InterpolationMethod,
    n_s: usize,
    stats: Result<DeltaStats>,
) -> CampaignRow {
    let (delta2_mean, delta2_std, failure) = match stats {
        Ok(s) => (s.mean, s.std, None),
        Err(e) => (f64::NAN, f64::NAN, Some(e.to_string())),
    };
    CampaignRow {
        probe,
        n_resources,
        method,
        n_s,
        delta2_mean,
        delta2_std,
        failure,
    }
}

/// Runs the campaign described by `config`. Failures of individual
/// `(probe, N_r)` pairs are recorded as rows with a failure marker; a failing
/// reference aborts the run.
pub fn run_campaign(config: &CampaignConfig, config_hash: impl Into<String>) -> Result<CampaignRun> {
    config.validate()?;
    let root = SeededRng::new(config.seed);
    let reference = build_reference_full(config, reference_rng(config))?;
    let (lo, hi) = config.response.domain;
    let xs = uniform_grid(lo, hi, config.n_points);

    let mut rows = Vec::new();
    let mut acquisitions = Vec::new();
    for &kind in &config.probes {
        for &n_r in &config.n_resources {
            let label = format!("{}_{n_r}", kind.as_str());
            let keys = [probe_key(kind), n_r];
            let acq = acquire_points(
                config,
                config.mode,
                kind,
                &xs,
                n_r,
                acquisition_rng(config, kind, n_r),
                &label,
            );
            match acq {
                Ok(acq) => {
                    let noise = NoiseTable::new(
                        root.derive(TAG_MONTECARLO).derive_all(&keys),
                        config.mc_reps,
                        acq.points.len(),
                    );
                    rows.extend(curve_rows(config, &acq, &reference.points, &noise));
                    acquisitions.push(acq);
                }
                Err(e) => {
                    log::error!("acquisition {label} failed: {e}");
                    for &method in &config.methods {
                        for &n_s in &config.n_s_values {
                            rows.push(row_from(kind, n_r, method, n_s, Err(Error::Invalid(e.to_string()))));
                        }
                    }
                }
            }
        }
    }
    Ok(CampaignRun {
        result: CampaignResult {
            rows,
            config_hash: config_hash.into(),
            seed: config.seed,
        },
        reference,
        acquisitions,
    })
}

/// Where a δ²(N_s) curve reaches its floor.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSummary {
    pub probe: ProbeKind,
    pub n_resources: u64,
    pub method: InterpolationMethod,
    /// Smallest N_s within two combined standard deviations of the floor.
    pub n_s_star: usize,
    /// Mean δ² of the two largest N_s.
    pub floor: f64,
    pub floor_std: f64,
    /// Set when the curve leaves the floor band again after `n_s_star`, or
    /// rises by more than two combined standard deviations between
    /// neighbouring points.
    pub low_confidence: bool,
}

/// Floor and saturation point of one curve given as `(n_s, mean, std)`,
/// sorted by `n_s`.
pub fn summarize_curve(points: &[(usize, f64, f64)]) -> Result<(usize, f64, f64, bool)> {
    if points.len() < 4 {
        return Err(Error::Invalid(format!(
            "crossover analysis needs at least 4 points per curve, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.1.is_finite() || !p.2.is_finite()) {
        return Err(Error::Invalid("curve contains failed rows".into()));
    }
    let n = points.len();
    let (a, b) = (points[n - 2], points[n - 1]);
    let floor = 0.5 * (a.1 + b.1);
    let floor_std = 0.5 * (a.2 * a.2 + b.2 * b.2).sqrt();
    let within = |p: &(usize, f64, f64)| (p.1 - floor).abs() <= 2.0 * (p.2 * p.2 + floor_std * floor_std).sqrt();
    let star = points.iter().position(within);
    let (n_s_star, mut low_confidence) = match star {
        Some(i) => (points[i].0, !points[i..].iter().all(within)),
        None => (points[n - 1].0, false),
    };
    low_confidence |= points
        .windows(2)
        .any(|w| w[1].1 - w[0].1 > 2.0 * (w[0].2 * w[0].2 + w[1].2 * w[1].2).sqrt());
    Ok((n_s_star, floor, floor_std, low_confidence))
}

/// Floor and saturation point for every curve of a campaign.
pub fn crossover_analysis(result: &CampaignResult) -> Result<Vec<CurveSummary>> {
    let mut keys: Vec<(ProbeKind, u64, InterpolationMethod)> = Vec::new();
    for r in &result.rows {
        let k = (r.probe, r.n_resources, r.method);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(probe, n_resources, method)| {
            let mut pts: Vec<(usize, f64, f64)> = result
                .curve(probe, n_resources, method)
                .iter()
                .map(|r| (r.n_s, r.delta2_mean, r.delta2_std))
                .collect();
            pts.sort_by_key(|p| p.0);
            let (n_s_star, floor, floor_std, low_confidence) = summarize_curve(&pts)?;
            Ok(CurveSummary {
                probe,
                n_resources,
                method,
                n_s_star,
                floor,
                floor_std,
                low_confidence,
            })
        })
        .collect()
}
