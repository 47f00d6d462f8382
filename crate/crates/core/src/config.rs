//! `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment, lists are comma separated.
//! Every key is optional; an empty file gives the defaults below.
//!
//! | key | default |
//! |---|---|
//! | `response` | `sigmoid` (also `linear`, `sinusoid`, `file`) |
//! | `response_params` | family defaults, sigmoid `2.5, 3, 1.5` |
//! | `response_file` | none; CSV `x,phi[,vis]`, implies `response = file` |
//! | `visibility` | `0.95` |
//! | `x_min`, `x_max` | `0`, `3` (volts) |
//! | `probes` | `noon2, single` |
//! | `n_resources` | `800, 1900` |
//! | `n_points` | `100` |
//! | `n_s_values` | `2, 3, 4, 5, 6, 8, 10, 12, 15, 20, 25, 30, 40, 50, 60, 70, 80, 90, 100`, clipped to `n_points` |
//! | `methods` | `nn, linear` |
//! | `reference_n_s` | `500` |
//! | `reference_n_resources` | `60000` |
//! | `reference_probe` | `noon2` |
//! | `mc_reps` | `500` |
//! | `mode` | `full` (also `crb`, `exact`) |
//! | `reference_mode` | same as `mode` |
//! | `resource_convention` | `per_shot` (also `per_resource`) |
//! | `seed` | `42` |
//! | `grid_phi`, `grid_vis` | `512`, `256` |
//! | `vis_support` | `0, 1` |
//! | `phi_support` | centred on the response's phase range |
//! | `output_dir` | `$QFE_OUTPUT_DIR`, else `.` |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::campaign::{CampaignConfig, Mode, DEFAULT_N_S};
use crate::error::{Error, Result};
use crate::interp::InterpolationMethod;
use crate::measurement::{ProbeKind, ResourceConvention};
use crate::sim::{AnalyticResponse, PhaseResponse, ResponseModel, VisibilityModel};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "QFE_OUTPUT_DIR";

const KEYS: [&str; 24] = [
    "response",
    "response_params",
    "response_file",
    "visibility",
    "x_min",
    "x_max",
    "probes",
    "n_resources",
    "n_points",
    "n_s_values",
    "methods",
    "reference_n_s",
    "reference_n_resources",
    "reference_probe",
    "mc_reps",
    "mode",
    "reference_mode",
    "resource_convention",
    "seed",
    "grid_phi",
    "grid_vis",
    "vis_support",
    "phi_support",
    "output_dir",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub campaign: CampaignConfig,
    /// Source of a sampled response, kept for serialization.
    pub response_file: Option<PathBuf>,
    /// `None` falls back to the environment variable, then the working directory.
    pub output_dir: Option<PathBuf>,
}

struct Entry {
    line: usize,
    value: String,
}

fn config_err(line: usize, key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

struct Entries(BTreeMap<String, Entry>);

impl Entries {
    fn get<T: FromStr>(&self, key: &str) -> Result<Option<(usize, T)>>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(|v| Some((e.line, v)))
                .map_err(|err| config_err(e.line, key, format!("cannot parse `{}`: {err}", e.value))),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<(usize, Vec<T>)>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(e) = self.0.get(key) else {
            return Ok(None);
        };
        let items = e
            .value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|err| config_err(e.line, key, format!("cannot parse `{s}`: {err}")))
            })
            .collect::<Result<Vec<T>>>()?;
        if items.is_empty() {
            return Err(config_err(e.line, key, "empty list"));
        }
        Ok(Some((e.line, items)))
    }

    fn pair(&self, key: &str) -> Result<Option<(usize, (f64, f64))>> {
        match self.list::<f64>(key)? {
            None => Ok(None),
            Some((line, v)) if v.len() == 2 => Ok(Some((line, (v[0], v[1])))),
            Some((line, v)) => Err(config_err(line, key, format!("expected two numbers, got {}", v.len()))),
        }
    }

    fn line(&self, key: &str) -> usize {
        self.0.get(key).map_or(0, |e| e.line)
    }
}

fn tokenize(text: &str) -> Result<Entries> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(config_err(line, content, "expected `key = value`"));
        };
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(config_err(line, key, "unknown key"));
        }
        if let Some(prev) = map.get(key) {
            let prev: &Entry = prev;
            return Err(config_err(
                line,
                key,
                format!("duplicate key, first set on line {}", prev.line),
            ));
        }
        map.insert(
            key.to_string(),
            Entry {
                line,
                value: value.trim().to_string(),
            },
        );
    }
    Ok(Entries(map))
}

fn default_params(family: &str) -> Option<Vec<f64>> {
    match family {
        "sigmoid" => Some(vec![2.5, 3.0, 1.5]),
        "linear" => Some(vec![1.0, 0.0]),
        "sinusoid" => Some(vec![1.0, 1.0, 0.0, 1.5]),
        _ => None,
    }
}

/// Parses configuration text; a sampled response is read relative to the
/// working directory.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_in(text, Path::new("."))
}

/// Like [`parse_config`], resolving a relative `response_file` against `base`.
pub fn parse_config_in(text: &str, base: &Path) -> Result<RunConfig> {
    let e = tokenize(text)?;
    let mut c = CampaignConfig::default();

    let (vis_line, vis) = e.get::<f64>("visibility")?.unwrap_or((0, 0.95));
    if !(0.0..=1.0).contains(&vis) {
        return Err(config_err(vis_line, "visibility", format!("{vis} outside [0, 1]")));
    }
    let response_file = e.get::<String>("response_file")?.map(|(_, s)| PathBuf::from(s));
    let family = e.get::<String>("response")?;
    let family_name = family.as_ref().map(|(_, f)| f.to_ascii_lowercase()).unwrap_or_else(|| {
        if response_file.is_some() {
            "file".into()
        } else {
            "sigmoid".into()
        }
    });
    if family_name == "file" {
        let Some(path) = &response_file else {
            return Err(config_err(
                e.line("response"),
                "response",
                "`file` needs `response_file`",
            ));
        };
        for k in ["response_params", "x_min", "x_max"] {
            if e.0.contains_key(k) {
                return Err(config_err(e.line(k), k, "not allowed with a sampled response"));
            }
        }
        let full = if path.is_relative() {
            base.join(path)
        } else {
            path.clone()
        };
        let (phase, vis_fn) = crate::io::read_response(&full)
            .map_err(|err| config_err(e.line("response_file"), "response_file", err.to_string()))?;
        let visibility = match vis_fn {
            Some(f) => VisibilityModel::Sampled(f),
            None => VisibilityModel::Constant(vis),
        };
        c.response = ResponseModel::sampled(phase, visibility)
            .map_err(|err| config_err(e.line("response_file"), "response_file", err.to_string()))?;
    } else {
        if response_file.is_some() {
            return Err(config_err(
                e.line("response_file"),
                "response_file",
                format!("conflicts with `response = {family_name}`"),
            ));
        }
        let line = e.line("response");
        let params = match e.list::<f64>("response_params")? {
            Some((_, p)) => p,
            None => default_params(&family_name)
                .ok_or_else(|| config_err(line, "response", format!("unknown response family `{family_name}`")))?,
        };
        let phase = AnalyticResponse::from_params(&family_name, &params).map_err(|err| {
            let l = e.0.get("response_params").map_or(line, |x| x.line);
            config_err(l, "response_params", err.to_string())
        })?;
        let x_min = e.get::<f64>("x_min")?.map_or(0.0, |v| v.1);
        let x_max = e.get::<f64>("x_max")?.map_or(3.0, |v| v.1);
        c.response = ResponseModel::analytic(phase, vis, (x_min, x_max))
            .map_err(|err| config_err(e.line("x_max"), "x_max", err.to_string()))?;
    }

    if let Some((_, p)) = e.list::<ProbeKind>("probes")? {
        c.probes = p;
    }
    if let Some((line, n)) = e.list::<u64>("n_resources")? {
        if n.contains(&0) {
            return Err(config_err(line, "n_resources", "budgets must be positive"));
        }
        c.n_resources = n;
    }
    if let Some((line, m)) = e.get::<usize>("n_points")? {
        if m < 2 {
            return Err(config_err(line, "n_points", "at least 2 points are needed"));
        }
        c.n_points = m;
    }
    match e.list::<usize>("n_s_values")? {
        Some((line, ns)) => {
            if let Some(bad) = ns.iter().find(|&&n| n > c.n_points) {
                return Err(config_err(
                    line,
                    "n_s_values",
                    format!("n_s = {bad} > n_points = {}: n_s exceeds acquired points", c.n_points),
                ));
            }
            if ns.iter().any(|&n| n < 2) {
                return Err(config_err(line, "n_s_values", "n_s must be at least 2"));
            }
            c.n_s_values = ns;
        }
        None => {
            c.n_s_values = DEFAULT_N_S.iter().copied().filter(|&n| n <= c.n_points).collect();
            if c.n_s_values.last() != Some(&c.n_points) {
                c.n_s_values.push(c.n_points);
            }
        }
    }
    if let Some((_, m)) = e.list::<InterpolationMethod>("methods")? {
        c.methods = m;
    }
    if let Some((line, n)) = e.get::<usize>("reference_n_s")? {
        if n < 2 {
            return Err(config_err(line, "reference_n_s", "at least 2 points are needed"));
        }
        c.reference_n_s = n;
    }
    if let Some((line, n)) = e.get::<u64>("reference_n_resources")? {
        if n == 0 {
            return Err(config_err(line, "reference_n_resources", "budget must be positive"));
        }
        c.reference_n_resources = n;
    }
    if let Some((_, p)) = e.get::<ProbeKind>("reference_probe")? {
        c.reference_probe = p;
    }
    if let Some((line, r)) = e.get::<usize>("mc_reps")? {
        if r < 2 {
            return Err(config_err(line, "mc_reps", "at least 2 repetitions are needed"));
        }
        c.mc_reps = r;
    }
    if let Some((_, m)) = e.get::<Mode>("mode")? {
        c.mode = m;
    }
    if let Some((_, m)) = e.get::<Mode>("reference_mode")? {
        c.reference_mode = Some(m);
    }
    if let Some((_, r)) = e.get::<ResourceConvention>("resource_convention")? {
        c.convention = r;
    }
    if let Some((_, s)) = e.get::<u64>("seed")? {
        c.seed = s;
    }
    for (key, slot) in [("grid_phi", 0usize), ("grid_vis", 1)] {
        if let Some((line, n)) = e.get::<usize>(key)? {
            if n < crate::bayes::MIN_RESOLUTION {
                return Err(config_err(
                    line,
                    key,
                    format!("resolution must be at least {}", crate::bayes::MIN_RESOLUTION),
                ));
            }
            if slot == 0 {
                c.grid.0 = n;
            } else {
                c.grid.1 = n;
            }
        }
    }
    if let Some((line, (lo, hi))) = e.pair("vis_support")? {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(config_err(line, "vis_support", "must be a nonempty subset of [0, 1]"));
        }
        c.vis_support = (lo, hi);
    }
    if let Some((line, (lo, hi))) = e.pair("phi_support")? {
        let widest = c
            .probes
            .iter()
            .chain(std::iter::once(&c.reference_probe))
            .map(|&k| crate::measurement::ProbeModel::new(k).phase_period())
            .fold(f64::INFINITY, f64::min);
        if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) || hi - lo > widest * (1.0 + 1e-12) {
            return Err(config_err(
                line,
                "phi_support",
                format!("must be nonempty and at most one phase period ({widest}) wide"),
            ));
        }
        c.phi_support = Some((lo, hi));
    }
    let output_dir = e.get::<String>("output_dir")?.map(|(_, s)| PathBuf::from(s));

    c.validate().map_err(|err| config_err(0, "", err.to_string()))?;
    Ok(RunConfig {
        campaign: c,
        response_file,
        output_dir,
    })
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    /// Output directory after applying the environment fallback.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    /// Canonical text with every key spelled out; parses back to `self`.
    pub fn to_text(&self) -> String {
        let c = &self.campaign;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match (&c.response.phase, &self.response_file) {
            (_, Some(path)) => kv("response_file", path.display().to_string()),
            (PhaseResponse::Analytic(a), None) => {
                kv("response", a.family().to_string());
                kv("response_params", join(&a.params()));
                kv("x_min", c.response.domain.0.to_string());
                kv("x_max", c.response.domain.1.to_string());
            }
            (PhaseResponse::Sampled(_), None) => kv("response", "file".into()),
        }
        if let VisibilityModel::Constant(v) = c.response.visibility {
            kv("visibility", v.to_string());
        }
        kv("probes", join(&c.probes));
        kv("n_resources", join(&c.n_resources));
        kv("n_points", c.n_points.to_string());
        kv("n_s_values", join(&c.n_s_values));
        kv("methods", join(&c.methods));
        kv("reference_n_s", c.reference_n_s.to_string());
        kv("reference_n_resources", c.reference_n_resources.to_string());
        kv("reference_probe", c.reference_probe.to_string());
        kv("mc_reps", c.mc_reps.to_string());
        kv("mode", c.mode.to_string());
        if let Some(m) = c.reference_mode {
            kv("reference_mode", m.to_string());
        }
        kv("resource_convention", c.convention.as_str().to_string());
        kv("seed", c.seed.to_string());
        kv("grid_phi", c.grid.0.to_string());
        kv("grid_vis", c.grid.1.to_string());
        kv("vis_support", format!("{}, {}", c.vis_support.0, c.vis_support.1));
        if let Some((lo, hi)) = c.phi_support {
            kv("phi_support", format!("{lo}, {hi}"));
        }
        if let Some(d) = &self.output_dir {
            kv("output_dir", d.display().to_string());
        }
        s
    }

    /// SHA-256 of the canonical text, excluding the output directory.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            output_dir: None,
            ..self.clone()
        }
        .to_text();
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err_of(text: &str) -> (usize, String, String) {
        match parse_config(text).unwrap_err() {
            Error::Config { line, key, message } => (line, key, message),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.campaign, CampaignConfig::default());
        assert_eq!(c.campaign.n_resources, vec![800, 1900]);
        assert_eq!(c.campaign.n_points, 100);
        assert_eq!(
            (c.campaign.reference_n_s, c.campaign.reference_n_resources),
            (500, 60000)
        );
        assert_eq!(c.campaign.mc_reps, 500);
    }

    #[test]
    fn n_s_above_m_rejected() {
        let (line, key, msg) = err_of("# c\nn_s_values = 5,200\n");
        assert_eq!((line, key.as_str()), (2, "n_s_values"));
        assert!(msg.contains("n_s exceeds acquired points"));
    }

    #[test]
    fn duplicate_and_unknown_keys() {
        let (line, key, msg) = err_of("seed = 42\nseed = 42\n");
        assert_eq!((line, key.as_str()), (2, "seed"));
        assert!(msg.contains("duplicate"));
        let (line, key, _) = err_of("\n\nfoo = 1");
        assert_eq!((line, key.as_str()), (3, "foo"));
    }

    #[test]
    fn type_mismatch_names_line() {
        let (line, key, _) = err_of("mc_reps = lots");
        assert_eq!((line, key.as_str()), (1, "mc_reps"));
        let (line, key, _) = err_of("mc_reps = 1");
        assert_eq!((line, key.as_str()), (1, "mc_reps"));
        assert_eq!(err_of("probes = noon3").1, "probes");
    }

    #[test]
    fn default_ladder_clipped() {
        let c = parse_config("n_points = 30").unwrap();
        assert_eq!(c.campaign.n_s_values, vec![2, 3, 4, 5, 6, 8, 10, 12, 15, 20, 25, 30]);
        let c = parse_config("n_points = 33").unwrap();
        assert_eq!(*c.campaign.n_s_values.last().unwrap(), 33);
    }

    #[test]
    fn round_trip() {
        let text = "response = linear\nresponse_params = 0.5, 0.25\nx_max = 2\nprobes = single\n\
                    n_resources = 100\nn_points = 20\nn_s_values = 2, 5, 20\nmethods = linear\n\
                    mc_reps = 7\nmode = crb\nreference_mode = exact\nseed = 9\nphi_support = -1, 2\n\
                    resource_convention = per_resource\nvisibility = 0.8\noutput_dir = out\n";
        let c = parse_config(text).unwrap();
        let again = parse_config(&c.to_text()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        let d = parse_config("").unwrap();
        assert_eq!(parse_config(&d.to_text()).unwrap(), d);
        assert_ne!(c.hash(), d.hash());
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = parse_config("  # header\n\nseed = 7   # trailing\n").unwrap();
        assert_eq!(c.campaign.seed, 7);
    }

    #[test]
    fn file_response_needs_path() {
        assert_eq!(err_of("response = file").1, "response");
    }
}
