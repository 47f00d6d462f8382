//! Measurement model of the two polarization probes.
//!
//! A probe with phase multiplier `k` projected at half-wave-plate angle `θ`
//! yields the postselected outcome probability
//!
//! ```text
//! p_θ(φ, v) = ¼ (1 + v cos(4kθ − kφ))
//! ```
//!
//! For the two-photon N00N probe (`k = 2`) this is the familiar
//! `¼ (1 + v cos(8θ − 2φ))`. With the four canonical settings the outcomes
//! form one categorical distribution, from which the 2×2 Fisher matrix in
//! `(φ, v)` follows. The phase information left after treating the
//! visibility as a nuisance parameter is its Schur complement.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest visibility used inside Fisher sums; keeps every category
/// probability strictly positive.
pub const VIS_CLAMP: f64 = 1.0 - 1e-12;

/// Below this `f_vv` the nuisance direction is considered absent.
pub const NUISANCE_EPS: f64 = 1e-15;

/// Tolerance on the sum of outcome probabilities.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// The two supported probe states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProbeKind {
    /// Heralded single photon, the classical benchmark.
    SinglePhoton,
    /// Two-photon N00N state.
    Noon2,
}

impl ProbeKind {
    pub const ALL: [ProbeKind; 2] = [ProbeKind::Noon2, ProbeKind::SinglePhoton];

    /// Short name used in file names and CSV columns.
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeKind::SinglePhoton => "single",
            ProbeKind::Noon2 => "noon2",
        }
    }

    pub fn phase_multiplier(self) -> u32 {
        match self {
            ProbeKind::SinglePhoton => 1,
            ProbeKind::Noon2 => 2,
        }
    }
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProbeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single" | "single_photon" | "singlephoton" | "classical" => Ok(ProbeKind::SinglePhoton),
            "noon2" | "noon" | "n00n" | "quantum" => Ok(ProbeKind::Noon2),
            other => Err(Error::Invalid(format!("unknown probe `{other}`"))),
        }
    }
}

/// A probe state together with the projection settings used to read it out.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    kind: ProbeKind,
    settings: Vec<f64>,
}

impl ProbeModel {
    /// Probe with its canonical four settings.
    pub fn new(kind: ProbeKind) -> Self {
        let step = PI / (8.0 * kind.phase_multiplier() as f64);
        let settings = (0..4).map(|j| j as f64 * step).collect();
        Self { kind, settings }
    }

    pub fn single_photon() -> Self {
        Self::new(ProbeKind::SinglePhoton)
    }

    pub fn noon2() -> Self {
        Self::new(ProbeKind::Noon2)
    }

    /// Probe with arbitrary settings. Operations that need a normalized
    /// categorical distribution reject settings that do not provide one.
    pub fn with_settings(kind: ProbeKind, settings: Vec<f64>) -> Result<Self> {
        if settings.is_empty() {
            return Err(Error::Invalid("probe needs at least one setting".into()));
        }
        if settings.iter().any(|t| !t.is_finite()) {
            return Err(Error::Invalid("probe settings must be finite".into()));
        }
        Ok(Self { kind, settings })
    }

    pub fn kind(&self) -> ProbeKind {
        self.kind
    }

    pub fn photons_per_shot(&self) -> u32 {
        self.kind.phase_multiplier()
    }

    pub fn phase_multiplier(&self) -> u32 {
        self.kind.phase_multiplier()
    }

    pub fn settings(&self) -> &[f64] {
        &self.settings
    }

    /// Period of the likelihood in φ: π for N00N, 2π for a single photon.
    pub fn phase_period(&self) -> f64 {
        2.0 * PI / self.phase_multiplier() as f64
    }

    /// The canonical fundamental domain `[0, period)`.
    pub fn fundamental_domain(&self) -> (f64, f64) {
        (0.0, self.phase_period())
    }

    /// Maps `phi` into the window `[lo, lo + period)`.
    pub fn wrap_phase(&self, phi: f64, lo: f64) -> f64 {
        let period = self.phase_period();
        lo + (phi - lo).rem_euclid(period)
    }
}

/// Phase and fringe visibility at one signal value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub phi: f64,
    pub vis: f64,
}

impl PhasePoint {
    pub fn new(phi: f64, vis: f64) -> Result<Self> {
        let p = Self { phi, vis };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.phi.is_finite() {
            return Err(Error::Domain(format!("phase must be finite, got {}", self.phi)));
        }
        if !(0.0..=1.0).contains(&self.vis) {
            return Err(Error::Domain(format!(
                "visibility must lie in [0, 1], got {}",
                self.vis
            )));
        }
        Ok(())
    }
}

/// Per-shot Fisher information matrix for the parameters `(φ, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherMatrix {
    pub f_pp: f64,
    pub f_pv: f64,
    pub f_vv: f64,
}

impl FisherMatrix {
    pub fn determinant(&self) -> f64 {
        self.f_pp * self.f_vv - self.f_pv * self.f_pv
    }

    /// Phase information with the visibility profiled out.
    pub fn schur_phase(&self) -> f64 {
        if self.f_vv < NUISANCE_EPS {
            return self.f_pp;
        }
        (self.f_pp - self.f_pv * self.f_pv / self.f_vv).max(0.0)
    }
}

/// How resources translate into the Cramér–Rao variance of a fiducial point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResourceConvention {
    /// `ε² = 1 / (n_shots · F)` with `n_shots = N_r / photons_per_shot`.
    #[default]
    PerShot,
    /// `ε² = 1 / (N_r · F)`, counting every photon as one repetition.
    PerResource,
}

impl ResourceConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            ResourceConvention::PerShot => "per_shot",
            ResourceConvention::PerResource => "per_resource",
        }
    }
}

impl FromStr for ResourceConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "per_shot" => Ok(ResourceConvention::PerShot),
            "per_resource" => Ok(ResourceConvention::PerResource),
            other => Err(Error::Invalid(format!("unknown resource convention `{other}`"))),
        }
    }
}

fn check_vis(point: &PhasePoint) -> Result<()> {
    point.validate()
}

#[inline]
fn fringe_argument(probe: &ProbeModel, theta: f64, phi: f64) -> f64 {
    let k = probe.phase_multiplier() as f64;
    4.0 * k * theta - k * phi
}

/// Probability of the outcome recorded at projection angle `theta`.
pub fn outcome_probability(probe: &ProbeModel, theta: f64, point: PhasePoint) -> Result<f64> {
    check_vis(&point)?;
    let u = fringe_argument(probe, theta, point.phi);
    Ok(0.25 * (1.0 + point.vis * u.cos()))
}

/// Outcome probabilities for every setting of the probe, as one categorical
/// distribution.
pub fn probability_vector(probe: &ProbeModel, point: PhasePoint) -> Result<Vec<f64>> {
    let probs = probe
        .settings()
        .iter()
        .map(|&t| outcome_probability(probe, t, point))
        .collect::<Result<Vec<_>>>()?;
    let deficit = 1.0 - probs.iter().sum::<f64>();
    if deficit.abs() > NORMALIZATION_TOL {
        return Err(Error::Normalization { deficit });
    }
    Ok(probs)
}

/// Per-shot Fisher matrix `F_ab = Σ (∂p/∂a)(∂p/∂b) / p` over the categorical
/// outcome distribution.
///
/// The visibility is clamped to [`VIS_CLAMP`] so that vanishing categories at
/// `v = 1` contribute their finite limit instead of `0/0`.
pub fn fisher_matrix(probe: &ProbeModel, point: PhasePoint) -> Result<FisherMatrix> {
    probability_vector(probe, point)?;
    let k = probe.phase_multiplier() as f64;
    let v = point.vis.min(VIS_CLAMP);
    let mut m = FisherMatrix {
        f_pp: 0.0,
        f_pv: 0.0,
        f_vv: 0.0,
    };
    for &theta in probe.settings() {
        let u = fringe_argument(probe, theta, point.phi);
        let (s, c) = u.sin_cos();
        let p = 0.25 * (1.0 + v * c);
        let d_phi = 0.25 * v * k * s;
        let d_vis = 0.25 * c;
        m.f_pp += d_phi * d_phi / p;
        m.f_pv += d_phi * d_vis / p;
        m.f_vv += d_vis * d_vis / p;
    }
    Ok(m)
}

/// Per-shot phase Fisher information with the visibility as nuisance.
pub fn effective_phase_fisher(probe: &ProbeModel, point: PhasePoint) -> Result<f64> {
    Ok(fisher_matrix(probe, point)?.schur_phase())
}

/// Closed-form per-shot phase Fisher information for the canonical settings:
///
/// ```text
/// single photon: 2v² / (4 − v²(1 − cos 4φ))
/// N00N:          8v² / (4 − v²(1 − cos 8φ))
/// ```
pub fn closed_form_phase_fisher(kind: ProbeKind, point: PhasePoint) -> Result<f64> {
    point.validate()?;
    let v2 = point.vis * point.vis;
    Ok(match kind {
        ProbeKind::SinglePhoton => 2.0 * v2 / (4.0 - v2 * (1.0 - (4.0 * point.phi).cos())),
        ProbeKind::Noon2 => 8.0 * v2 / (4.0 - v2 * (1.0 - (8.0 * point.phi).cos())),
    })
}

/// Cramér–Rao variance of the phase after `n_shots` repetitions.
pub fn crb_variance(probe: &ProbeModel, point: PhasePoint, n_shots: u64) -> Result<f64> {
    if n_shots == 0 {
        return Err(Error::Invalid("n_shots must be at least 1".into()));
    }
    let f = effective_phase_fisher(probe, point)?;
    if f <= 0.0 {
        return Err(Error::Unidentifiable);
    }
    Ok(1.0 / (n_shots as f64 * f))
}

/// Cramér–Rao variance for a resource budget under the chosen convention.
pub fn crb_variance_for_resources(
    probe: &ProbeModel,
    point: PhasePoint,
    n_resources: u64,
    convention: ResourceConvention,
) -> Result<f64> {
    match convention {
        ResourceConvention::PerShot => {
            let budget = shots_from_resources(probe, n_resources)?;
            crb_variance(probe, point, budget.n_shots)
        }
        ResourceConvention::PerResource => crb_variance(probe, point, n_resources),
    }
}

/// Outcome of converting a photon budget into repetitions of the probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShotBudget {
    pub n_shots: u64,
    /// Resources left over when the budget is not a multiple of the photon number.
    pub unused: u64,
}

impl ShotBudget {
    pub fn is_exact(&self) -> bool {
        self.unused == 0
    }
}

/// Number of repetitions affordable with `n_resources` photons.
pub fn shots_from_resources(probe: &ProbeModel, n_resources: u64) -> Result<ShotBudget> {
    let per_shot = probe.photons_per_shot() as u64;
    if n_resources < per_shot {
        return Err(Error::Invalid(format!(
            "{n_resources} resources cannot pay for one {} shot ({per_shot} photons)",
            probe.kind()
        )));
    }
    let budget = ShotBudget {
        n_shots: n_resources / per_shot,
        unused: n_resources % per_shot,
    };
    if !budget.is_exact() {
        log::warn!(
            "{n_resources} resources not divisible by {per_shot}; rounding down to {} shots",
            budget.n_shots
        );
    }
    Ok(budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pt(phi: f64, vis: f64) -> PhasePoint {
        PhasePoint::new(phi, vis).unwrap()
    }

    #[test]
    fn canonical_settings() {
        let n = ProbeModel::noon2();
        assert_eq!(n.settings(), &[0.0, PI / 16.0, PI / 8.0, 3.0 * PI / 16.0]);
        let s = ProbeModel::single_photon();
        assert_eq!(s.settings(), &[0.0, PI / 8.0, PI / 4.0, 3.0 * PI / 8.0]);
        assert_eq!(n.photons_per_shot(), n.phase_multiplier());
        assert_eq!(s.photons_per_shot(), s.phase_multiplier());
    }

    #[test]
    fn outcome_probability_examples() {
        let n = ProbeModel::noon2();
        let s = ProbeModel::single_photon();
        assert_abs_diff_eq!(outcome_probability(&n, 0.0, pt(0.0, 1.0)).unwrap(), 0.5);
        assert_abs_diff_eq!(
            outcome_probability(&n, PI / 16.0, pt(0.0, 1.0)).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(outcome_probability(&s, PI / 8.0, pt(0.0, 0.0)).unwrap(), 0.25);
    }

    #[test]
    fn invalid_visibility_is_domain_error() {
        let n = ProbeModel::noon2();
        let bad = PhasePoint { phi: 0.0, vis: 1.2 };
        assert!(matches!(outcome_probability(&n, 0.0, bad), Err(Error::Domain(_))));
        assert!(PhasePoint::new(0.0, -0.1).is_err());
        assert!(PhasePoint::new(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn probability_vector_examples() {
        let expect = [0.5, 0.25, 0.0, 0.25];
        for probe in [ProbeModel::noon2(), ProbeModel::single_photon()] {
            let p = probability_vector(&probe, pt(0.0, 1.0)).unwrap();
            for (a, b) in p.iter().zip(expect) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
            }
        }
        let p = probability_vector(&ProbeModel::noon2(), pt(PI / 16.0, 1.0)).unwrap();
        for (a, b) in p.iter().zip([0.48097, 0.34567, 0.01903, 0.15433]) {
            assert_abs_diff_eq!(*a, b, epsilon = 5e-6);
        }
    }

    #[test]
    fn non_canonical_settings_report_deficit() {
        let probe = ProbeModel::with_settings(ProbeKind::Noon2, vec![0.0, PI / 16.0]).unwrap();
        match probability_vector(&probe, pt(0.3, 0.9)) {
            Err(Error::Normalization { deficit }) => {
                // 1 - p(0) - p(pi/16) with u = -2 phi and u = pi/2 - 2 phi
                let expect = 0.5 - 0.25 * 0.9 * ((-0.6f64).cos() + (PI / 2.0 - 0.6).cos());
                assert_abs_diff_eq!(deficit, expect, epsilon = 1e-12)
            }
            other => panic!("expected normalization error, got {other:?}"),
        }
    }

    #[test]
    fn fisher_matrix_example() {
        let m = fisher_matrix(&ProbeModel::noon2(), pt(PI / 16.0, 1.0)).unwrap();
        assert_abs_diff_eq!(m.f_pp, 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.f_pv, -2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.f_vv, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn flat_fringe_has_no_phase_information() {
        for probe in [ProbeModel::noon2(), ProbeModel::single_photon()] {
            let m = fisher_matrix(&probe, pt(0.4, 0.0)).unwrap();
            assert_eq!(m.f_pp, 0.0);
            assert_eq!(m.f_pv, 0.0);
            assert!(m.f_vv > 0.0);
            assert!(matches!(
                crb_variance(&probe, pt(0.4, 0.0), 10),
                Err(Error::Unidentifiable)
            ));
        }
    }

    #[test]
    fn unit_visibility_stays_finite() {
        // phi = 0 makes one N00N category vanish at v = 1.
        let m = fisher_matrix(&ProbeModel::noon2(), pt(0.0, 1.0)).unwrap();
        assert!(m.f_pp.is_finite() && m.f_pv.is_finite() && m.f_vv.is_finite());
        assert!(m.determinant() >= -1e-9);
    }

    #[test]
    fn effective_fisher_examples() {
        let n = ProbeModel::noon2();
        let s = ProbeModel::single_photon();
        assert_abs_diff_eq!(
            effective_phase_fisher(&n, pt(PI / 8.0, 1.0)).unwrap(),
            4.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            effective_phase_fisher(&n, pt(PI / 16.0, 1.0)).unwrap(),
            8.0 / 3.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            effective_phase_fisher(&s, pt(PI / 4.0, 1.0)).unwrap(),
            1.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn degenerate_nuisance_falls_back_to_f_pp() {
        let m = FisherMatrix {
            f_pp: 2.0,
            f_pv: 1e-9,
            f_vv: 1e-16,
        };
        assert_eq!(m.schur_phase(), 2.0);
    }

    #[test]
    fn crb_examples() {
        let n = ProbeModel::noon2();
        let s = ProbeModel::single_photon();
        assert_abs_diff_eq!(
            crb_variance(&n, pt(PI / 8.0, 1.0), 400).unwrap(),
            6.25e-4,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(crb_variance(&n, pt(PI / 8.0, 1.0), 1).unwrap(), 0.25, epsilon = 1e-10);
        assert_abs_diff_eq!(
            crb_variance(&s, pt(PI / 4.0, 1.0), 800).unwrap(),
            1.25e-3,
            epsilon = 1e-12
        );
        assert!(crb_variance(&n, pt(0.1, 0.9), 0).is_err());
    }

    #[test]
    fn resource_conventions() {
        let n = ProbeModel::noon2();
        let p = pt(PI / 8.0, 1.0);
        let shot = crb_variance_for_resources(&n, p, 800, ResourceConvention::PerShot).unwrap();
        let res = crb_variance_for_resources(&n, p, 800, ResourceConvention::PerResource).unwrap();
        assert_abs_diff_eq!(shot, 6.25e-4, epsilon = 1e-12);
        assert_abs_diff_eq!(shot / res, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn shots_from_resources_examples() {
        let n = ProbeModel::noon2();
        let s = ProbeModel::single_photon();
        assert_eq!(shots_from_resources(&n, 800).unwrap().n_shots, 400);
        assert_eq!(shots_from_resources(&s, 1900).unwrap().n_shots, 1900);
        let odd = shots_from_resources(&n, 3).unwrap();
        assert_eq!(odd.n_shots, 1);
        assert!(!odd.is_exact());
        assert!(shots_from_resources(&n, 1).is_err());
    }

    #[test]
    fn wrap_phase_into_window() {
        let n = ProbeModel::noon2();
        assert_abs_diff_eq!(n.wrap_phase(PI + 0.1, 0.0), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(n.wrap_phase(-0.1, -0.5), -0.1, epsilon = 1e-12);
    }

    #[test]
    fn probe_names_round_trip() {
        for k in ProbeKind::ALL {
            assert_eq!(k.as_str().parse::<ProbeKind>().unwrap(), k);
        }
        assert!("triple".parse::<ProbeKind>().is_err());
    }
}
