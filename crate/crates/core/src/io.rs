//! CSV persistence. Phases are in radians, signal values in volts; floats are
//! written with 17 significant digits so every file re-reads bit-exactly.

use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::Path;

use crate::bayes::{PointEstimate, PosteriorSummary};
use crate::campaign::{CampaignResult, CampaignRow, CampaignRun};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::interp::{InterpolationMethod, SampledFunction};
use crate::measurement::ProbeKind;
use crate::sim::CountRecord;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Lossless decimal form of a double.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r)
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h == name)
}

fn require(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    header_index(headers, name).ok_or_else(|| Error::Invalid(format!("missing column `{name}`")))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, row: usize) -> Result<T> {
    let s = rec.get(i).unwrap_or("");
    s.parse()
        .map_err(|_| Error::Invalid(format!("row {row}: cannot parse `{s}` in column {}", i + 1)))
}

/// Writes `x,phi[,var_phi]`.
pub fn write_sampled<W: Write>(w: W, f: &SampledFunction) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    match f.variances() {
        Some(v) => {
            out.write_record(["x", "phi", "var_phi"])?;
            for ((x, p), s) in f.xs().iter().zip(f.values()).zip(v) {
                out.write_record([fmt_f64(*x), fmt_f64(*p), fmt_f64(*s)])?;
            }
        }
        None => {
            out.write_record(["x", "phi"])?;
            for (x, p) in f.xs().iter().zip(f.values()) {
                out.write_record([fmt_f64(*x), fmt_f64(*p)])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_sampled<R: Read>(r: R, label: &str) -> Result<SampledFunction> {
    let mut rd = reader(r);
    let h = rd.headers()?.clone();
    let (ix, ip, iv) = (require(&h, "x")?, require(&h, "phi")?, header_index(&h, "var_phi"));
    let (mut xs, mut ps, mut vs) = (Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        xs.push(field(&rec, ix, row + 1)?);
        ps.push(field(&rec, ip, row + 1)?);
        if let Some(i) = iv {
            vs.push(field(&rec, i, row + 1)?);
        }
    }
    SampledFunction::new(xs, ps, iv.map(|_| vs), label)
}

pub fn write_sampled_file(path: &Path, f: &SampledFunction) -> Result<()> {
    write_sampled(File::create(path)?, f)
}

pub fn read_sampled_file(path: &Path) -> Result<SampledFunction> {
    let label = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
    read_sampled(File::open(path)?, &label)
}

/// Reads a response grid `x,phi[,vis]`; the visibility column, if present,
/// is returned as a second function.
pub fn read_response_from<R: Read>(r: R) -> Result<(SampledFunction, Option<SampledFunction>)> {
    let mut rd = reader(r);
    let h = rd.headers()?.clone();
    let (ix, ip, iv) = (require(&h, "x")?, require(&h, "phi")?, header_index(&h, "vis"));
    let (mut xs, mut ps, mut vs) = (Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        xs.push(field(&rec, ix, row + 1)?);
        ps.push(field(&rec, ip, row + 1)?);
        if let Some(i) = iv {
            vs.push(field(&rec, i, row + 1)?);
        }
    }
    let vis = match iv {
        Some(_) => Some(SampledFunction::new(xs.clone(), vs, None, "visibility")?),
        None => None,
    };
    Ok((SampledFunction::new(xs, ps, None, "response")?, vis))
}

pub fn read_response(path: &Path) -> Result<(SampledFunction, Option<SampledFunction>)> {
    read_response_from(File::open(path)?)
}

/// Writes `x,n_shots,n0,n1,...`.
pub fn write_counts<W: Write>(w: W, records: &[CountRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let k = records.first().map_or(4, |r| r.counts.len());
    let mut header = vec!["x".to_string(), "n_shots".to_string()];
    header.extend((0..k).map(|i| format!("n{i}")));
    out.write_record(&header)?;
    for r in records {
        if r.counts.len() != k {
            return Err(Error::Invalid(
                "count records have differing numbers of settings".into(),
            ));
        }
        let mut row = vec![fmt_f64(r.x), r.n_shots.to_string()];
        row.extend(r.counts.iter().map(u64::to_string));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_counts<R: Read>(r: R) -> Result<Vec<CountRecord>> {
    let mut rd = reader(r);
    let h = rd.headers()?.clone();
    let ix = require(&h, "x")?;
    let ishots = header_index(&h, "n_shots");
    let cols: Vec<usize> = (0..).map_while(|i| header_index(&h, &format!("n{i}"))).collect();
    if cols.is_empty() {
        return Err(Error::Invalid("missing count columns `n0`, `n1`, ...".into()));
    }
    let mut out = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        let counts = cols
            .iter()
            .map(|&i| field(&rec, i, row + 1))
            .collect::<Result<Vec<u64>>>()?;
        let record = CountRecord::new(field(&rec, ix, row + 1)?, counts)?;
        if let Some(i) = ishots {
            let declared: u64 = field(&rec, i, row + 1)?;
            if declared != record.n_shots {
                return Err(Error::Invalid(format!(
                    "row {}: n_shots = {declared} but counts sum to {}",
                    row + 1,
                    record.n_shots
                )));
            }
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_counts_file(path: &Path, records: &[CountRecord]) -> Result<()> {
    write_counts(File::create(path)?, records)
}

pub fn read_counts_file(path: &Path) -> Result<Vec<CountRecord>> {
    read_counts(File::open(path)?)
}

/// Writes `x,phi_b,var_phi,vis_b,var_vis,n_shots,boundary_mass`.
pub fn write_estimates<W: Write>(w: W, estimates: &[PointEstimate]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "phi_b", "var_phi", "vis_b", "var_vis", "n_shots", "boundary_mass"])?;
    for e in estimates {
        let s = &e.summary;
        out.write_record([
            fmt_f64(e.x),
            fmt_f64(s.phi_b),
            fmt_f64(s.var_phi),
            fmt_f64(s.vis_b),
            fmt_f64(s.var_vis),
            e.n_shots.to_string(),
            fmt_f64(e.boundary_mass),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_estimates<R: Read>(r: R) -> Result<Vec<PointEstimate>> {
    let mut rd = reader(r);
    let h = rd.headers()?.clone();
    let idx = ["x", "phi_b", "var_phi", "vis_b", "var_vis", "n_shots"]
        .iter()
        .map(|c| require(&h, c))
        .collect::<Result<Vec<_>>>()?;
    let ib = header_index(&h, "boundary_mass");
    let mut out = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = row + 1;
        out.push(PointEstimate {
            x: field(&rec, idx[0], row)?,
            n_shots: field(&rec, idx[5], row)?,
            summary: PosteriorSummary {
                phi_b: field(&rec, idx[1], row)?,
                vis_b: field(&rec, idx[3], row)?,
                var_phi: field(&rec, idx[2], row)?,
                var_vis: field(&rec, idx[4], row)?,
            },
            boundary_mass: match ib {
                Some(i) => field(&rec, i, row)?,
                None => 0.0,
            },
        });
    }
    Ok(out)
}

/// Writes `probe,n_resources,method,n_s,delta2,delta2_err`; failed rows carry `NaN`.
pub fn write_campaign<W: Write>(w: W, result: &CampaignResult) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["probe", "n_resources", "method", "n_s", "delta2", "delta2_err"])?;
    for r in &result.rows {
        out.write_record([
            r.probe.as_str().to_string(),
            r.n_resources.to_string(),
            r.method.as_str().to_string(),
            r.n_s.to_string(),
            fmt_f64(r.delta2_mean),
            fmt_f64(r.delta2_std),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads campaign rows; provenance is not part of the file and is left empty.
pub fn read_campaign<R: Read>(r: R) -> Result<Vec<CampaignRow>> {
    let mut rd = reader(r);
    let h = rd.headers()?.clone();
    let idx = ["probe", "n_resources", "method", "n_s", "delta2", "delta2_err"]
        .iter()
        .map(|c| require(&h, c))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = row + 1;
        let probe: ProbeKind = rec.get(idx[0]).unwrap_or("").parse()?;
        let method: InterpolationMethod = rec.get(idx[2]).unwrap_or("").parse()?;
        let delta2_mean: f64 = field(&rec, idx[4], row)?;
        out.push(CampaignRow {
            probe,
            n_resources: field(&rec, idx[1], row)?,
            method,
            n_s: field(&rec, idx[3], row)?,
            delta2_mean,
            delta2_std: field(&rec, idx[5], row)?,
            failure: delta2_mean.is_nan().then(|| "failed".to_string()),
        });
    }
    Ok(out)
}

/// Provenance text. Metadata lines are comments, so the file is itself a
/// configuration that reproduces the run.
pub fn provenance_text(config: &RunConfig, result: &CampaignResult) -> String {
    let mut s = format!(
        "# qfe {VERSION}\n# config_hash = {}\n# seed = {}\n",
        result.config_hash, result.seed
    );
    for r in result.failures() {
        s.push_str(&format!(
            "# failed {} n_resources={} {} n_s={}: {}\n",
            r.probe,
            r.n_resources,
            r.method,
            r.n_s,
            r.failure.as_deref().unwrap_or("")
        ));
    }
    s.push_str(&config.to_text());
    s
}

/// Writes `campaign.csv`, `reference.csv`, `points_<probe>_<nr>.csv` and
/// `provenance.cfg` into `dir`.
pub fn write_campaign_outputs(dir: &Path, config: &RunConfig, run: &CampaignRun) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_campaign(File::create(dir.join("campaign.csv"))?, &run.result)?;
    write_sampled_file(&dir.join("reference.csv"), &run.reference.points)?;
    for a in &run.acquisitions {
        let name = format!("points_{}_{}.csv", a.probe.as_str(), a.n_resources);
        write_sampled_file(&dir.join(name), &a.points)?;
    }
    fs::write(dir.join("provenance.cfg"), provenance_text(config, &run.result))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn float_format_is_lossless() {
        for x in [0.1, 1.0 / 3.0, std::f64::consts::PI, 1e-300, -2.5e17, 5e-324] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn sampled_round_trip() {
        let f = SampledFunction::new(
            vec![0.0, 0.1, 0.7],
            vec![1.0 / 3.0, -2.0, 1e-9],
            Some(vec![0.0, 1e-4, 2.0]),
            "t",
        )
        .unwrap();
        let mut buf = Vec::new();
        write_sampled(&mut buf, &f).unwrap();
        assert!(buf.starts_with(b"x,phi,var_phi\n"));
        assert_eq!(read_sampled(&buf[..], "t").unwrap(), f);

        let g = SampledFunction::new(vec![0.0, 1.0], vec![2.0, 3.0], None, "t").unwrap();
        let mut buf = Vec::new();
        write_sampled(&mut buf, &g).unwrap();
        assert_eq!(read_sampled(&buf[..], "t").unwrap(), g);
    }

    #[test]
    fn counts_round_trip_and_check() {
        let recs = vec![
            CountRecord::new(0.5, vec![1, 2, 3, 4]).unwrap(),
            CountRecord::new(1.5, vec![0, 0, 9, 1]).unwrap(),
        ];
        let mut buf = Vec::new();
        write_counts(&mut buf, &recs).unwrap();
        assert!(buf.starts_with(b"x,n_shots,n0,n1,n2,n3\n"));
        assert_eq!(read_counts(&buf[..]).unwrap(), recs);
        let bad = "x,n_shots,n0,n1\n0.5,3,1,1\n";
        assert!(read_counts(bad.as_bytes()).is_err());
    }

    #[test]
    fn response_with_visibility() {
        let text = "x,phi,vis\n0,0.1,0.9\n1,0.2,0.8\n";
        let (phi, vis) = read_response_from(text.as_bytes()).unwrap();
        assert_eq!(phi.values(), &[0.1, 0.2]);
        assert_eq!(vis.unwrap().values(), &[0.9, 0.8]);
        assert!(read_response_from("x,phase\n0,1\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn estimates_round_trip(vals in prop::collection::vec((-10.0f64..10.0, 0.0f64..1.0, 0.0f64..1.0, 0u64..100_000), 1..20)) {
            let est: Vec<PointEstimate> = vals.iter().enumerate().map(|(i, &(p, v, b, n))| PointEstimate {
                x: i as f64 * 0.37,
                n_shots: n,
                summary: PosteriorSummary { phi_b: p, vis_b: v, var_phi: p * p * 1e-3, var_vis: v / 7.0 },
                boundary_mass: b,
            }).collect();
            let mut buf = Vec::new();
            write_estimates(&mut buf, &est).unwrap();
            prop_assert_eq!(read_estimates(&buf[..]).unwrap(), est);
        }

        #[test]
        fn campaign_round_trip(vals in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..10)) {
            let rows: Vec<CampaignRow> = vals.iter().enumerate().map(|(i, &(m, s))| CampaignRow {
                probe: if i % 2 == 0 { ProbeKind::Noon2 } else { ProbeKind::SinglePhoton },
                n_resources: 800 + i as u64,
                method: InterpolationMethod::ALL[i % 2],
                n_s: i + 2,
                delta2_mean: m,
                delta2_std: s,
                failure: None,
            }).collect();
            let result = CampaignResult { rows: rows.clone(), config_hash: String::new(), seed: 0 };
            let mut buf = Vec::new();
            write_campaign(&mut buf, &result).unwrap();
            prop_assert_eq!(read_campaign(&buf[..]).unwrap(), rows);
        }
    }
}
