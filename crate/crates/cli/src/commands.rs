use std::path::Path;

use chrono::Utc;
use nested_occupancy::io::{self, Statistic};
use nested_occupancy::limits::{limit_covariance, sample_limit_paths, BaseProcess, LimitSpec};
use nested_occupancy::occupancy::validate_grid;
use nested_occupancy::rng::{replicate_rng, seeded};
use nested_occupancy::verify::run_experiment;
use nested_occupancy::{simulate, Executor};
use serde::Serialize;

use crate::config::Config;
use crate::manifest::{OutputDir, RunManifest};
use crate::{BaseArg, CliError, Format, LimitsArgs};

fn start_manifest(command: &str, seed: u64, config: &impl Serialize) -> Result<RunManifest, CliError> {
    let now = Utc::now();
    Ok(RunManifest {
        command: command.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config: serde_json::to_value(config).map_err(|e| CliError::Config(e.to_string()))?,
        started: now,
        finished: now,
        files: Vec::new(),
    })
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes(value: &impl Serialize) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn simulate_cmd(cfg: &Config, out: &Path, format: Format, exec: Executor) -> Result<(), CliError> {
    let manifest = start_manifest("simulate", cfg.seed, cfg)?;
    let n = cfg
        .occupancy
        .n
        .ok_or_else(|| CliError::Config("occupancy.n is required for simulate".into()))?;
    let law = cfg.law()?;
    let occupancy = cfg.occupancy(n)?;
    let indices: Vec<u64> = (0..cfg.occupancy.replicates as u64).collect();
    let results = exec.map(&indices, |i| simulate(&law, &occupancy, &mut replicate_rng(cfg.seed, i)))?;
    let mut dir = OutputDir::create(out)?;
    match format {
        Format::Csv => {
            for stat in Statistic::ALL {
                dir.write(stat.file_name(), &to_bytes(|w| io::write_statistic(w, stat, &results))?)?;
            }
        }
        Format::Json => dir.write("occupancy.json", &json_bytes(&results)?)?,
    }
    dir.finish(manifest)?;
    println!("simulated {} replicate(s) of n = {n} into {}", results.len(), out.display());
    Ok(())
}

/// Returns whether every non-advisory verdict passed.
pub fn verify_cmd(cfg: &Config, out: &Path, format: Format, exec: Executor) -> Result<bool, CliError> {
    let manifest = start_manifest("verify", cfg.seed, cfg)?;
    let experiment = cfg.experiment(exec)?;
    let report = run_experiment(&experiment)?;
    let mut dir = OutputDir::create(out)?;
    dir.write("report.json", &json_bytes(&report)?)?;
    if format == Format::Csv {
        dir.write("moments.csv", &to_bytes(|w| io::write_moments(w, &report))?)?;
        dir.write("pairs.csv", &to_bytes(|w| io::write_pairs(w, &report))?)?;
        dir.write("ks.csv", &to_bytes(|w| io::write_ks(w, &report))?)?;
        dir.write("consistency.csv", &to_bytes(|w| io::write_consistency(w, &report))?)?;
        for (n, curves) in &report.normalized {
            dir.write(&format!("normalized_{n}.csv"), &to_bytes(|w| io::write_curves(w, curves))?)?;
        }
    }
    dir.finish(manifest)?;
    for v in &report.verdicts {
        let status = match (v.passed, v.advisory) {
            (true, _) => "PASS",
            (false, true) => "WARN",
            (false, false) => "FAIL",
        };
        let line = format!("{status} {}: {}", v.name, v.detail);
        if status == "FAIL" {
            eprintln!("{line}");
        } else {
            println!("{line}");
        }
    }
    Ok(report.passed())
}

#[derive(Serialize)]
struct LimitsEcho<'a> {
    spec: &'a LimitSpec,
    grid: &'a [f64],
    levels: usize,
    paths: usize,
}

#[derive(Serialize)]
struct CovarianceJson<'a> {
    labels: &'a [(usize, f64)],
    matrix: Vec<Vec<f64>>,
}

pub fn limits_cmd(args: &LimitsArgs, out: &Path, seed: u64, format: Format, exec: Executor) -> Result<(), CliError> {
    let base = match args.base {
        BaseArg::Bm => BaseProcess::BrownianMotion,
        BaseArg::Rl | BaseArg::Tc => {
            let q = args
                .q
                .ok_or_else(|| CliError::Config("--q is required for the rl and tc bases".into()))?;
            if args.base == BaseArg::Rl {
                BaseProcess::RiemannLiouville { q }
            } else {
                BaseProcess::TimeChangedBm { q }
            }
        }
    };
    let spec = LimitSpec::new(args.omega, args.gamma, args.c, args.a, base)?;
    validate_grid(&args.grid)?;
    if args.levels == 0 {
        return Err(CliError::Config("--levels must be at least 1".into()));
    }
    let echo = LimitsEcho {
        spec: &spec,
        grid: &args.grid,
        levels: args.levels,
        paths: args.paths,
    };
    let manifest = start_manifest("limits", seed, &echo)?;
    let levels: Vec<usize> = (1..=args.levels).collect();
    let cov = limit_covariance(&spec, &args.grid, &levels, &exec)?;
    let paths = if args.paths > 0 {
        sample_limit_paths(&spec, &args.grid, args.levels, args.paths, &mut seeded(seed))?
    } else {
        Vec::new()
    };
    let mut dir = OutputDir::create(out)?;
    match format {
        Format::Csv => {
            dir.write("covariance.csv", &to_bytes(|w| io::write_covariance(w, &cov))?)?;
            if !paths.is_empty() {
                dir.write("paths.csv", &to_bytes(|w| io::write_curves(w, &paths))?)?;
            }
        }
        Format::Json => {
            let matrix = cov.matrix.row_iter().map(|r| r.iter().copied().collect()).collect();
            dir.write("covariance.json", &json_bytes(&CovarianceJson { labels: &cov.labels, matrix })?)?;
            if !paths.is_empty() {
                dir.write("paths.json", &json_bytes(&paths)?)?;
            }
        }
    }
    dir.finish(manifest)?;
    println!("{0}×{0} covariance written to {1}", cov.labels.len(), out.display());
    Ok(())
}
