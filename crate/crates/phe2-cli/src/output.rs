//! Files written next to report.json.

use anyhow::Context;
use phe2::config::ExperimentConfig;
use phe2::pipeline::{Alarm, Artifacts, RunReport, Stage, SCHEMA_VERSION};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    config_sha256: String,
    seed: u64,
    stages: Vec<&'static str>,
    files: Vec<&'a str>,
}

#[derive(Serialize)]
struct Failure<'a> {
    schema_version: u32,
    failed_stage: &'static str,
    message: &'a str,
    alarms: &'a [Alarm],
}

pub fn config_hash(config: &ExperimentConfig) -> anyhow::Result<String> {
    let canonical = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&canonical)))
}

fn write(dir: &Path, name: &str, body: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
}

pub fn write_all(dir: &Path, config: &ExperimentConfig, report: &RunReport, art: &Artifacts) -> anyhow::Result<()> {
    let mut files = vec!["report.json"];
    write(dir, "report.json", &serde_json::to_string_pretty(report)?)?;

    if !art.leaves.is_empty() {
        let mut s = String::from("leaf,sigma,s,x,y\n");
        for (i, leaf) in art.leaves.iter().enumerate() {
            let sigma = if leaf.sigma == phe2::bundles::Sigma::Center { "c" } else { "u" };
            for (p, t) in leaf.points.iter().zip(&leaf.arclengths) {
                writeln!(s, "{i},{sigma},{t},{},{}", p.x, p.y)?;
            }
        }
        write(dir, "leaves.csv", &s)?;
        files.push("leaves.csv");
    }

    if let Some(per) = &report.periodic {
        let mut s = String::from("orbit,period,x,y,m1,m2,lambda_c,lambda_u\n");
        for (i, o) in per.orbits.iter().enumerate() {
            for p in &o.points {
                writeln!(s, "{i},{},{},{},{},{},{},{}", o.period, p.x, p.y, o.m[0], o.m[1], o.lambda_c, o.lambda_u)?;
            }
        }
        write(dir, "periodic_data.csv", &s)?;
        files.push("periodic_data.csv");
    }

    if let Some(phi) = &art.fourier {
        let mut s = String::from("k,re,im\n");
        let k = phi.k_max as i64;
        for j in -k..=k {
            let c = phi.coeff(j);
            writeln!(s, "{j},{},{}", c.re, c.im)?;
        }
        write(dir, "fourier.csv", &s)?;
        files.push("fourier.csv");
    }

    if let (Some(h), Some((ec, eu))) = (&art.h, &art.bundles) {
        let n = h.p.n();
        let mut s = String::from("i,j,x,y,p1,p2,ec1,ec2,eu1,eu2\n");
        for i in 0..n {
            for j in 0..n {
                let x = h.p.node(i, j);
                let p = h.p.get(i, j);
                let c = ec.values.eval(x);
                let u = eu.values.eval(x);
                writeln!(s, "{i},{j},{},{},{},{},{},{},{},{}", x.x, x.y, p.x, p.y, c.x, c.y, u.x, u.y)?;
            }
        }
        write(dir, "fields.csv", &s)?;
        files.push("fields.csv");
    }

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        config_sha256: config_hash(config)?,
        seed: config.seed,
        stages: report.stages.iter().map(|s| s.name()).collect(),
        files,
    };
    write(dir, "manifest.json", &serde_json::to_string_pretty(&manifest)?)
}

pub fn write_failure(
    dir: &Path,
    config: &ExperimentConfig,
    stage: Stage,
    message: &str,
    alarms: &[Alarm],
) -> anyhow::Result<()> {
    let body = Failure { schema_version: SCHEMA_VERSION, failed_stage: stage.name(), message, alarms };
    write(dir, "report.json", &serde_json::to_string_pretty(&body)?)?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        config_sha256: config_hash(config)?,
        seed: config.seed,
        stages: Vec::new(),
        files: vec!["report.json"],
    };
    write(dir, "manifest.json", &serde_json::to_string_pretty(&manifest)?)
}
