//! CSV logs, run summary and machine-readable error records.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use se3obs_core::sim::{Diagnostics, RunLog};

/// Column names of the per-observer log, in order.
pub fn csv_header() -> Vec<String> {
    let mut h = vec!["t".to_string(), "j".to_string()];
    let mat = |prefix: &'static str| (1..=3).flat_map(move |i| (1..=3).map(move |j| format!("{prefix}{i}{j}")));
    let xyz = |prefix: &str| ["x", "y", "z"].map(|c| format!("{prefix}_{c}"));
    let six = |prefix: &str| ["wx", "wy", "wz", "vx", "vy", "vz"].map(|c| format!("{prefix}_{c}"));
    h.extend(mat("R"));
    h.extend(xyz("p"));
    h.extend(mat("Rhat"));
    h.extend(xyz("phat"));
    h.extend(six("b_a"));
    h.extend(six("bhat"));
    h.extend(["dist_gI", "bias_err", "U", "V", "gap", "jumped"].map(String::from));
    h
}

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(path: &Path, log: &RunLog) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(csv_header())?;
    let mut rec: Vec<String> = Vec::with_capacity(48);
    for r in &log.rows {
        rec.clear();
        rec.push(f(r.t));
        rec.push(r.j.to_string());
        for pose in [&r.g, &r.g_hat] {
            let m = pose.rotation();
            for i in 0..3 {
                for j in 0..3 {
                    rec.push(f(m[(i, j)]));
                }
            }
            for i in 0..3 {
                rec.push(f(pose.p[i]));
            }
        }
        for b in [&r.b_a, &r.b_hat] {
            for i in 0..6 {
                rec.push(f(b[i]));
            }
        }
        for x in [r.dist_gi, r.bias_err, r.u, r.v, r.gap] {
            rec.push(f(x));
        }
        rec.push(if r.jumped { "1" } else { "0" }.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ObserverSummary {
    pub observer: String,
    pub csv: String,
    pub jumps: usize,
    pub final_dist_gi: f64,
    pub final_bias_err: f64,
    pub lambda_hat: Option<f64>,
    pub fit_rms: Option<f64>,
    pub flow_violations: usize,
    pub flow_samples: usize,
    pub wall_time_s: f64,
}

impl ObserverSummary {
    pub fn new(log: &RunLog, diag: &Diagnostics, csv: &str) -> Self {
        let last = log.last();
        ObserverSummary {
            observer: log.variant.name().to_string(),
            csv: csv.to_string(),
            jumps: log.jumps.len(),
            final_dist_gi: last.dist_gi,
            final_bias_err: last.bias_err,
            lambda_hat: diag.lambda_hat,
            fit_rms: diag.fit_rms,
            flow_violations: diag.flow_violations,
            flow_samples: diag.flow_samples,
            wall_time_s: log.wall_time,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub config: String,
    pub seed: u64,
    pub delta: f64,
    pub delta_star: f64,
    pub gap_bound: f64,
    pub boundary_warning: bool,
    pub observers: Vec<ObserverSummary>,
}

#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
    pub observer: Option<String>,
    pub t: Option<f64>,
    pub j: Option<usize>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()
}
