//! Grid-based Bayesian joint estimation of phase and visibility.
//!
//! With a uniform prior on a box of `(φ, v)`, the posterior of a count record
//! is proportional to `Π_θ p_θ(φ, v)^{n_θ}`. It is tabulated on the cell
//! midpoints of a regular grid, in log space with the maximum subtracted
//! before exponentiation, and summarised by its first and second moments.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::interp::SampledFunction;
use crate::measurement::{probability_vector, PhasePoint, ProbeModel};
use crate::sim::CountRecord;

/// Floor applied to outcome probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-300;
/// Allowed deviation of the quadrature sum of a density from one.
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Posterior mass in the outer grid band above which a warning is raised.
pub const BOUNDARY_MASS_WARN: f64 = 1e-3;
/// Width, in cells, of the outer band checked for posterior mass.
pub const BOUNDARY_BAND: usize = 2;
/// Smallest accepted number of cells along either axis.
pub const MIN_RESOLUTION: usize = 16;

/// Rectangular support of the uniform prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSupport {
    pub phi: (f64, f64),
    pub vis: (f64, f64),
}

impl PriorSupport {
    /// The probe's fundamental phase domain and the full visibility range.
    pub fn full(probe: &ProbeModel) -> Self {
        Self {
            phi: probe.fundamental_domain(),
            vis: (0.0, 1.0),
        }
    }

    /// A fundamental phase window of the probe centred on `phi_center`.
    pub fn centered(probe: &ProbeModel, phi_center: f64) -> Self {
        let half = 0.5 * probe.phase_period();
        Self {
            phi: (phi_center - half, phi_center + half),
            vis: (0.0, 1.0),
        }
    }

    pub fn validate(&self, probe: &ProbeModel) -> Result<()> {
        let (plo, phi) = self.phi;
        let (vlo, vhi) = self.vis;
        if !(plo.is_finite() && phi.is_finite() && plo < phi) {
            return Err(Error::Invalid(format!("invalid phase support [{plo}, {phi}]")));
        }
        let period = probe.phase_period();
        if phi - plo > period * (1.0 + 1e-12) {
            return Err(Error::Invalid(format!(
                "phase support of width {} exceeds the {} period {period}",
                phi - plo,
                probe.kind()
            )));
        }
        if !(0.0 <= vlo && vlo < vhi && vhi <= 1.0) {
            return Err(Error::Invalid(format!(
                "visibility support [{vlo}, {vhi}] must be a nonempty subset of [0, 1]"
            )));
        }
        Ok(())
    }
}

/// Tabulated posterior density on cell midpoints, stored phase-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    phi_axis: Vec<f64>,
    vis_axis: Vec<f64>,
    d_phi: f64,
    d_vis: f64,
    density: Vec<f64>,
}

fn midpoints(lo: f64, hi: f64, n: usize) -> (Vec<f64>, f64) {
    let d = (hi - lo) / n as f64;
    ((0..n).map(|i| lo + (i as f64 + 0.5) * d).collect(), d)
}

impl PosteriorGrid {
    /// Grid from an explicit density over the cell midpoints of `support`.
    /// The density is not required to be normalized.
    pub fn from_density(support: PriorSupport, n_phi: usize, n_vis: usize, density: Vec<f64>) -> Result<Self> {
        if n_phi == 0 || n_vis == 0 || density.len() != n_phi * n_vis {
            return Err(Error::Invalid(format!(
                "density of length {} does not match a {n_phi}×{n_vis} grid",
                density.len()
            )));
        }
        if density.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::Invalid("density entries must be finite and nonnegative".into()));
        }
        let (phi_axis, d_phi) = midpoints(support.phi.0, support.phi.1, n_phi);
        let (vis_axis, d_vis) = midpoints(support.vis.0, support.vis.1, n_vis);
        Ok(Self {
            phi_axis,
            vis_axis,
            d_phi,
            d_vis,
            density,
        })
    }

    pub fn phi_axis(&self) -> &[f64] {
        &self.phi_axis
    }

    pub fn vis_axis(&self) -> &[f64] {
        &self.vis_axis
    }

    pub fn cell_area(&self) -> f64 {
        self.d_phi * self.d_vis
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn at(&self, i_phi: usize, i_vis: usize) -> f64 {
        self.density[i_phi * self.vis_axis.len() + i_vis]
    }

    /// `Σ density · Δφ · Δv`.
    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.cell_area()
    }

    /// Grid node with the largest density.
    pub fn mode(&self) -> (f64, f64) {
        let n_v = self.vis_axis.len();
        let (k, _) =
            self.density.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |best, (k, &d)| if d > best.1 { (k, d) } else { best },
            );
        (self.phi_axis[k / n_v], self.vis_axis[k % n_v])
    }

    /// Probability mass in the outermost `band` rows and columns.
    pub fn boundary_mass(&self, band: usize) -> f64 {
        let n_p = self.phi_axis.len();
        let n_v = self.vis_axis.len();
        let mut mass = 0.0;
        for i in 0..n_p {
            let edge_row = i < band || i + band >= n_p;
            for j in 0..n_v {
                if edge_row || j < band || j + band >= n_v {
                    mass += self.density[i * n_v + j];
                }
            }
        }
        mass * self.cell_area()
    }
}

/// Posterior means and variances of phase and visibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorSummary {
    pub phi_b: f64,
    pub vis_b: f64,
    pub var_phi: f64,
    pub var_vis: f64,
}

/// Tabulates the posterior of `counts` under a uniform prior on `support`.
pub fn posterior_grid(
    counts: &CountRecord,
    probe: &ProbeModel,
    support: PriorSupport,
    resolution: (usize, usize),
) -> Result<PosteriorGrid> {
    let (n_phi, n_vis) = resolution;
    if n_phi < MIN_RESOLUTION || n_vis < MIN_RESOLUTION {
        return Err(Error::Invalid(format!(
            "grid resolution {n_phi}×{n_vis} below the minimum {MIN_RESOLUTION}"
        )));
    }
    support.validate(probe)?;
    let settings = probe.settings();
    if counts.counts.len() != settings.len() {
        return Err(Error::Invalid(format!(
            "record has {} counts but the probe has {} settings",
            counts.counts.len(),
            settings.len()
        )));
    }
    // Rejects settings that do not form a normalized outcome set.
    probability_vector(probe, PhasePoint { phi: 0.0, vis: 1.0 })?;

    let (phi_axis, d_phi) = midpoints(support.phi.0, support.phi.1, n_phi);
    let (vis_axis, d_vis) = midpoints(support.vis.0, support.vis.1, n_vis);
    let k = probe.phase_multiplier() as f64;
    let active: Vec<(f64, f64)> = settings
        .iter()
        .zip(&counts.counts)
        .filter(|(_, &n)| n > 0)
        .map(|(&theta, &n)| (4.0 * k * theta, n as f64))
        .collect();

    let mut log_lik = vec![0.0; n_phi * n_vis];
    let row_max_prob: Vec<Vec<f64>> = log_lik
        .par_chunks_mut(n_vis)
        .zip(phi_axis.par_iter())
        .map(|(row, &phi)| {
            let cos_u: Vec<f64> = active.iter().map(|&(a, _)| (a - k * phi).cos()).collect();
            let mut max_p = vec![0.0f64; active.len()];
            for (cell, &v) in row.iter_mut().zip(&vis_axis) {
                let mut acc = 0.0;
                for (m, (&(_, n), &c)) in active.iter().zip(&cos_u).enumerate() {
                    let p = (0.25 * (1.0 + v * c)).max(PROB_FLOOR);
                    max_p[m] = max_p[m].max(p);
                    acc += n * p.ln();
                }
                *cell = acc;
            }
            max_p
        })
        .collect();

    let mut max_prob = vec![0.0f64; active.len()];
    for row in &row_max_prob {
        for (m, p) in max_prob.iter_mut().zip(row) {
            *m = m.max(*p);
        }
    }
    if let Some(setting) = impossible_setting(&counts.counts, &max_prob) {
        return Err(Error::ImpossibleData { setting });
    }

    let max = log_lik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    log_lik.par_iter_mut().for_each(|l| *l = (*l - max).exp());
    let norm = log_lik.iter().sum::<f64>() * d_phi * d_vis;
    log_lik.iter_mut().for_each(|d| *d /= norm);

    Ok(PosteriorGrid {
        phi_axis,
        vis_axis,
        d_phi,
        d_vis,
        density: log_lik,
    })
}

/// Index of the first observed setting whose largest probability over the
/// grid is at the floor. `max_prob` lists the observed settings in order.
fn impossible_setting(counts: &[u64], max_prob: &[f64]) -> Option<usize> {
    counts
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .zip(max_prob)
        .find(|(_, &p)| p <= PROB_FLOOR)
        .map(|((i, _), _)| i)
}

/// First and second moments of a normalized posterior by midpoint quadrature.
pub fn posterior_moments(grid: &PosteriorGrid) -> Result<PosteriorSummary> {
    let mass = grid.total_mass();
    if (mass - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Invalid(format!(
            "posterior grid is not normalized (mass {mass})"
        )));
    }
    let n_v = grid.vis_axis.len();
    let area = grid.cell_area();
    let phi_marginal: Vec<f64> = grid
        .density
        .chunks(n_v)
        .map(|row| row.iter().sum::<f64>() * area)
        .collect();
    let mut vis_marginal = vec![0.0; n_v];
    for row in grid.density.chunks(n_v) {
        for (m, d) in vis_marginal.iter_mut().zip(row) {
            *m += d * area;
        }
    }
    let moments = |axis: &[f64], w: &[f64]| {
        let mean: f64 = axis.iter().zip(w).map(|(x, w)| x * w).sum();
        let var: f64 = axis.iter().zip(w).map(|(x, w)| (x - mean).powi(2) * w).sum();
        (mean, var.max(0.0))
    };
    let (phi_b, var_phi) = moments(&grid.phi_axis, &phi_marginal);
    let (vis_b, var_vis) = moments(&grid.vis_axis, &vis_marginal);
    Ok(PosteriorSummary {
        phi_b,
        vis_b,
        var_phi,
        var_vis,
    })
}

/// Prior support and grid resolution used by [`estimate_point`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    /// `None` selects the probe's full fundamental domain.
    pub support: Option<PriorSupport>,
    pub resolution: (usize, usize),
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            support: None,
            resolution: (512, 256),
        }
    }
}

/// Posterior summary of one fiducial point plus diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate {
    pub x: f64,
    pub n_shots: u64,
    pub summary: PosteriorSummary,
    /// Posterior mass in the outermost grid band.
    pub boundary_mass: f64,
}

impl PointEstimate {
    pub fn boundary_warning(&self) -> bool {
        self.boundary_mass > BOUNDARY_MASS_WARN
    }
}

pub fn estimate_point(counts: &CountRecord, probe: &ProbeModel, config: &EstimatorConfig) -> Result<PointEstimate> {
    let support = config.support.unwrap_or_else(|| PriorSupport::full(probe));
    let grid = posterior_grid(counts, probe, support, config.resolution)?;
    let summary = posterior_moments(&grid)?;
    let boundary_mass = grid.boundary_mass(BOUNDARY_BAND);
    if boundary_mass > BOUNDARY_MASS_WARN {
        log::debug!(
            "x = {}: {:.2e} of the posterior mass lies on the grid boundary",
            counts.x,
            boundary_mass
        );
    }
    Ok(PointEstimate {
        x: counts.x,
        n_shots: counts.n_shots,
        summary,
        boundary_mass,
    })
}

/// Estimates every record, in order.
pub fn estimate_records(
    records: &[CountRecord],
    probe: &ProbeModel,
    config: &EstimatorConfig,
) -> Result<Vec<PointEstimate>> {
    records.par_iter().map(|r| estimate_point(r, probe, config)).collect()
}

/// Estimated phases with their posterior variances as a sampled function.
pub fn estimates_to_function(estimates: &[PointEstimate], label: impl Into<String>) -> Result<SampledFunction> {
    SampledFunction::new(
        estimates.iter().map(|e| e.x).collect(),
        estimates.iter().map(|e| e.summary.phi_b).collect(),
        Some(estimates.iter().map(|e| e.summary.var_phi).collect()),
        label,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn record(counts: &[u64]) -> CountRecord {
        CountRecord::new(0.0, counts.to_vec()).unwrap()
    }

    #[test]
    fn empty_record_gives_uniform_posterior() {
        let probe = ProbeModel::noon2();
        let g = posterior_grid(&record(&[0, 0, 0, 0]), &probe, PriorSupport::full(&probe), (64, 32)).unwrap();
        let first = g.density()[0];
        assert!(g.density().iter().all(|d| (d - first).abs() < 1e-12));
        assert_abs_diff_eq!(g.total_mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_moments() {
        let support = PriorSupport {
            phi: (0.0, PI),
            vis: (0.0, 1.0),
        };
        let (n_p, n_v) = (512, 256);
        let d = 1.0 / PI;
        let g = PosteriorGrid::from_density(support, n_p, n_v, vec![d; n_p * n_v]).unwrap();
        let s = posterior_moments(&g).unwrap();
        assert_abs_diff_eq!(s.phi_b, PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.vis_b, 0.5, epsilon = 1e-12);
        // midpoint rule: exact values times (1 − 1/n²)
        assert_abs_diff_eq!(s.var_phi, PI * PI / 12.0, epsilon = 1e-5);
        assert_abs_diff_eq!(s.var_vis, 1.0 / 12.0, epsilon = 1e-5);
    }

    #[test]
    fn delta_density_moments() {
        let support = PriorSupport {
            phi: (0.0, 1.0),
            vis: (0.0, 1.0),
        };
        let (n_p, n_v) = (20, 20);
        let mut dens = vec![0.0; n_p * n_v];
        dens[7 * n_v + 13] = (n_p * n_v) as f64;
        let g = PosteriorGrid::from_density(support, n_p, n_v, dens).unwrap();
        let s = posterior_moments(&g).unwrap();
        assert_abs_diff_eq!(s.phi_b, g.phi_axis()[7], epsilon = 1e-12);
        assert_abs_diff_eq!(s.vis_b, g.vis_axis()[13], epsilon = 1e-12);
        assert!(s.var_phi < 1e-20 && s.var_vis < 1e-20);
    }

    #[test]
    fn unnormalized_grid_rejected() {
        let support = PriorSupport {
            phi: (0.0, 1.0),
            vis: (0.0, 1.0),
        };
        let g = PosteriorGrid::from_density(support, 16, 16, vec![2.0; 256]).unwrap();
        assert!(posterior_moments(&g).is_err());
    }

    #[test]
    fn mode_matches_generating_point() {
        let probe = ProbeModel::noon2();
        let support = PriorSupport {
            phi: (0.0, PI / 2.0),
            vis: (0.5, 1.0),
        };
        let g = posterior_grid(&record(&[192, 138, 8, 62]), &probe, support, (512, 256)).unwrap();
        let (phi, vis) = g.mode();
        assert!((phi - PI / 16.0).abs() < 0.02, "phi mode {phi}");
        assert!(vis > 0.97, "vis mode {vis}");
        let s = posterior_moments(&g).unwrap();
        assert!((s.phi_b - PI / 16.0).abs() < 3.0 * s.var_phi.sqrt());
    }

    #[test]
    fn large_sample_mode_is_nearest_node() {
        let probe = ProbeModel::single_photon();
        let (phi0, v0) = (2.0, 0.8);
        let p = probability_vector(&probe, PhasePoint::new(phi0, v0).unwrap()).unwrap();
        let n = 1e7;
        let counts: Vec<u64> = p.iter().map(|q| (q * n).round() as u64).collect();
        let support = PriorSupport::full(&probe);
        let g = posterior_grid(&record(&counts), &probe, support, (256, 128)).unwrap();
        let (phi, vis) = g.mode();
        let d_phi = g.phi_axis()[1] - g.phi_axis()[0];
        let d_vis = g.vis_axis()[1] - g.vis_axis()[0];
        assert!((phi - phi0).abs() <= 0.5 * d_phi + 1e-12);
        assert!((vis - v0).abs() <= 0.5 * d_vis + 1e-12);
    }

    #[test]
    fn argument_validation() {
        let probe = ProbeModel::noon2();
        let r = record(&[1, 2, 3, 4]);
        assert!(posterior_grid(&r, &probe, PriorSupport::full(&probe), (8, 64)).is_err());
        let too_wide = PriorSupport {
            phi: (0.0, 2.0 * PI),
            vis: (0.0, 1.0),
        };
        assert!(posterior_grid(&r, &probe, too_wide, (64, 64)).is_err());
        assert!(posterior_grid(&record(&[1, 2, 3]), &probe, PriorSupport::full(&probe), (64, 64)).is_err());
        let single = ProbeModel::single_photon();
        assert!(posterior_grid(&r, &single, PriorSupport::full(&single), (64, 64)).is_ok());
    }

    #[test]
    fn impossible_data_detected() {
        assert_eq!(impossible_setting(&[0, 3, 0, 5], &[0.2, PROB_FLOOR]), Some(3));
        assert_eq!(impossible_setting(&[0, 3, 0, 5], &[PROB_FLOOR, 0.1]), Some(1));
        assert_eq!(impossible_setting(&[1, 3, 0, 5], &[0.1, 0.2, 0.3]), None);
    }

    #[test]
    fn doubling_counts_does_not_widen() {
        let probe = ProbeModel::noon2();
        let cfg = EstimatorConfig::default();
        let base = [120u64, 90, 30, 60];
        let a = estimate_point(&record(&base), &probe, &cfg).unwrap();
        let doubled: Vec<u64> = base.iter().map(|c| 2 * c).collect();
        let b = estimate_point(&record(&doubled), &probe, &cfg).unwrap();
        assert!(b.summary.var_phi <= a.summary.var_phi + 1e-12);
    }

    #[test]
    fn boundary_warning_flags_edge_mass() {
        let probe = ProbeModel::noon2();
        // truth φ = 0.01 sits on the lower edge of [0, π)
        let p = probability_vector(&probe, PhasePoint::new(0.01, 0.9).unwrap()).unwrap();
        let counts: Vec<u64> = p.iter().map(|q| (q * 400.0).round() as u64).collect();
        let e = estimate_point(&record(&counts), &probe, &EstimatorConfig::default()).unwrap();
        assert!(e.boundary_warning());
    }
}
