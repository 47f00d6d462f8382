use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qfe::bayes::{estimate_records, EstimatorConfig, PriorSupport};
use qfe::campaign::{acquisition_rng, crossover_analysis, run_campaign, Mode};
use qfe::config::{parse_config_in, RunConfig};
use qfe::interp::{delta_squared, interpolate, select_subset, uniform_grid, InterpolationMethod};
use qfe::measurement::{
    crb_variance_for_resources, effective_phase_fisher, fisher_matrix, PhasePoint, ProbeKind, ProbeModel,
    ResourceConvention,
};
use qfe::sim::{acquire_function, sample_crb_estimates};
use qfe::{io as qio, Error, Result};

#[derive(Parser)]
#[command(
    name = "qfe",
    version,
    about = "Phase-response estimation with single-photon and N00N probes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-shot Fisher matrix and effective phase Fisher information.
    Fisher {
        #[arg(long, default_value = "noon2")]
        probe: ProbeKind,
        /// Phase in radians.
        #[arg(long)]
        phi: f64,
        #[arg(long, default_value_t = 1.0)]
        vis: f64,
        /// Also print the Cramér–Rao variance for this resource budget.
        #[arg(long)]
        resources: Option<u64>,
        #[arg(long, default_value = "per_shot")]
        convention: ResourceConvention,
    },
    /// Simulated acquisitions for every probe and budget of a config.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bayesian estimates from a counts CSV.
    Estimate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "noon2")]
        probe: ProbeKind,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 512)]
        grid_phi: usize,
        #[arg(long, default_value_t = 256)]
        grid_vis: usize,
        /// Phase support as `lo,hi`; defaults to the fundamental domain.
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
        phi_support: Option<(f64, f64)>,
    },
    /// δ² of interpolated points against a reference.
    Interpolate {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value = "linear")]
        method: InterpolationMethod,
        /// Use an evenly spread subset of this many points.
        #[arg(long)]
        n_s: Option<usize>,
    },
    /// Full campaign: campaign.csv, reference, fiducial points, provenance.
    Campaign {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `lo,hi`")?;
    let a = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let b = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((a, b))
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            let base = p.parent().map(PathBuf::from).unwrap_or_default();
            parse_config_in(&text, &base)
        }
        None => parse_config_in("", ".".as_ref()),
    }
}

fn out_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| cfg.resolved_output_dir())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let stdout = io::stdout();
    let mut so = stdout.lock();
    match cli.command {
        Command::Fisher {
            probe,
            phi,
            vis,
            resources,
            convention,
        } => {
            let model = ProbeModel::new(probe);
            let point = PhasePoint::new(phi, vis)?;
            let m = fisher_matrix(&model, point)?;
            let f = effective_phase_fisher(&model, point)?;
            writeln!(so, "effective_fisher {f:.6}")?;
            writeln!(so, "fisher_matrix")?;
            writeln!(so, "{:.6} {:.6}", m.f_pp, m.f_pv)?;
            writeln!(so, "{:.6} {:.6}", m.f_pv, m.f_vv)?;
            if let Some(n) = resources {
                let v = crb_variance_for_resources(&model, point, n, convention)?;
                writeln!(so, "crb_variance {}", qio::fmt_f64(v))?;
            }
        }
        Command::Simulate { config, out } => {
            let cfg = load_config(config.as_ref())?;
            let dir = out_dir(&cfg, out);
            fs::create_dir_all(&dir)?;
            let c = &cfg.campaign;
            let xs = uniform_grid(c.response.domain.0, c.response.domain.1, c.n_points);
            for &kind in &c.probes {
                let probe = ProbeModel::new(kind);
                for &n_r in &c.n_resources {
                    let rng = acquisition_rng(c, kind, n_r);
                    let path = match c.mode {
                        Mode::Full => {
                            let recs = acquire_function(&c.response, &xs, &probe, n_r, rng)?;
                            let path = dir.join(format!("counts_{kind}_{n_r}.csv"));
                            qio::write_counts_file(&path, &recs)?;
                            path
                        }
                        Mode::CrbShortcut => {
                            let f = sample_crb_estimates(&c.response, &xs, &probe, n_r, c.convention, rng)?;
                            let path = dir.join(format!("points_{kind}_{n_r}.csv"));
                            qio::write_sampled_file(&path, &f)?;
                            path
                        }
                        Mode::Exact => {
                            return Err(Error::Invalid("simulate needs mode = full or crb".into()));
                        }
                    };
                    writeln!(so, "{}", path.display())?;
                }
            }
        }
        Command::Estimate {
            input,
            probe,
            out,
            grid_phi,
            grid_vis,
            phi_support,
        } => {
            let model = ProbeModel::new(probe);
            let records = qio::read_counts_file(&input)?;
            let support = phi_support.map(|phi| PriorSupport { phi, vis: (0.0, 1.0) });
            let est = estimate_records(
                &records,
                &model,
                &EstimatorConfig {
                    support,
                    resolution: (grid_phi, grid_vis),
                },
            )?;
            let flagged = est.iter().filter(|e| e.boundary_warning()).count();
            if flagged > 0 {
                log::warn!("{flagged} posteriors have mass on the grid boundary; consider --phi-support");
            }
            match out {
                Some(p) => qio::write_estimates(fs::File::create(p)?, &est)?,
                None => qio::write_estimates(&mut so, &est)?,
            }
        }
        Command::Interpolate {
            points,
            reference,
            method,
            n_s,
        } => {
            let pts = qio::read_sampled_file(&points)?;
            let reference = qio::read_sampled_file(&reference)?;
            let pts = match n_s {
                Some(n) => select_subset(&pts, n)?,
                None => pts,
            };
            let est = interpolate(&pts, method, reference.xs())?;
            writeln!(so, "{}", qio::fmt_f64(delta_squared(&est, &reference)?))?;
        }
        Command::Campaign { config, out } => {
            let cfg = load_config(config.as_ref())?;
            let dir = out_dir(&cfg, out);
            let run = run_campaign(&cfg.campaign, cfg.hash())?;
            qio::write_campaign_outputs(&dir, &cfg, &run)?;
            let failures = run.result.failures().count();
            if failures > 0 {
                eprintln!("{failures} campaign rows failed; see provenance.cfg");
                return Ok(ExitCode::from(3));
            }
            if let Ok(summary) = crossover_analysis(&run.result) {
                for s in summary {
                    writeln!(
                        so,
                        "{} n_resources={} {}: n_s*={} floor={:.4e}{}",
                        s.probe,
                        s.n_resources,
                        s.method,
                        s.n_s_star,
                        s.floor,
                        if s.low_confidence { " (low confidence)" } else { "" }
                    )?;
                }
            }
            writeln!(so, "{}", dir.join("campaign.csv").display())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
