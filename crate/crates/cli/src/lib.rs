//! Command-line front end: resolves an [`ExperimentConfig`] and dispatches to
//! the limit calculator, exact oracles, Monte Carlo estimator and the
//! centrosymmetric block reduction.

pub mod config;

use std::fmt::Write as _;
use std::io::Write;

use clap::{Parser, Subcommand};
use exploding_core::ensembles::{charpoly, poly_mul, sample, weaver_reduce, EnsembleSpec, Storage};
use exploding_core::estimator::{compare_report, run_experiment, standard_predictions, PredictionOptions, Report, SampleStats};
use exploding_core::limits::{self, LimitCalculator, MAX_COVARIANCE_ORDER, MAX_MOMENT_ORDER};
use exploding_core::moment_model::Model;
use exploding_core::numeric::{fmt_rational, to_f64, Rational};
use exploding_core::oracle::{
    exact_circulant_z2_variance, exact_fluct_covariance, exact_fluct_covariance_small, exact_trace_mean, OracleTable,
    MAX_ORACLE_ORDER,
};
use exploding_core::{Error, Result};
use nalgebra::DMatrix;
use serde::Serialize;

pub use config::{Command, ExperimentConfig, Flags, Format, ProfileKind};

#[derive(Debug, Parser)]
#[command(name = "exploding", version, about = "Limits, exact oracles and Monte Carlo checks for exploding-moment random matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Limiting normalized trace moments.
    Limits(Flags),
    /// Limiting covariance kernel of the trace fluctuations.
    Covariance(Flags),
    /// Monte Carlo trace statistics.
    Simulate(Flags),
    /// Predictions, oracles and simulation compared row by row; exit 1 on any failed row.
    Verify(Flags),
    /// Exact finite-N means and covariances.
    Oracle(Flags),
    /// Block reduction of a sampled centrosymmetric matrix.
    Weaver(Flags),
}

impl Sub {
    fn parts(&self) -> (Command, &Flags) {
        match self {
            Sub::Limits(f) => (Command::Limits, f),
            Sub::Covariance(f) => (Command::Covariance, f),
            Sub::Simulate(f) => (Command::Simulate, f),
            Sub::Verify(f) => (Command::Verify, f),
            Sub::Oracle(f) => (Command::Oracle, f),
            Sub::Weaver(f) => (Command::Weaver, f),
        }
    }
}

/// Result of one command: rendered output and whether every check passed.
pub struct Outcome {
    pub output: String,
    pub passed: bool,
}

/// Exit status: 0 pass, 1 failed rows, 2 usage or configuration error.
pub fn run(cli: &Cli) -> i32 {
    let (command, flags) = cli.command.parts();
    if let Some(t) = flags.threads {
        // a second initialization (e.g. in tests) keeps the existing pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    let result = ExperimentConfig::resolve(command, flags).and_then(|cfg| {
        let outcome = dispatch(&cfg, flags)?;
        emit(&cfg, &outcome.output)?;
        Ok(outcome.passed)
    });
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn emit(cfg: &ExperimentConfig, text: &str) -> Result<()> {
    match &cfg.output {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn dispatch(cfg: &ExperimentConfig, flags: &Flags) -> Result<Outcome> {
    match cfg.command {
        Command::Limits => limits_table(cfg),
        Command::Covariance => covariance_table(cfg),
        Command::Simulate => simulate(cfg),
        Command::Verify => verify(cfg),
        Command::Oracle => oracle_table(cfg),
        Command::Weaver => weaver(cfg, flags),
    }
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

#[derive(Serialize)]
struct ExactRow {
    k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    l: Option<usize>,
    value: String,
    approx: f64,
}

#[derive(Serialize)]
struct ExactDocument {
    schema: u32,
    config: serde_json::Value,
    rows: Vec<ExactRow>,
}

fn exact_output(cfg: &ExperimentConfig, rows: Vec<ExactRow>, label: impl Fn(&ExactRow) -> String) -> Result<String> {
    Ok(match cfg.format {
        Format::Json => json(&ExactDocument { schema: 1, config: cfg.provenance()?, rows })?,
        Format::Csv => {
            let mut out = String::from("k,l,value,approx\n");
            for r in &rows {
                let l = r.l.map(|l| l.to_string()).unwrap_or_default();
                writeln!(out, "{},{},{},{}", r.k, l, r.value, r.approx).unwrap();
            }
            out
        }
        Format::Text => {
            let mut out = String::new();
            for r in &rows {
                writeln!(out, "{} = {}", label(r), r.value).unwrap();
            }
            out
        }
    })
}

fn exact_row(k: usize, l: Option<usize>, v: &Rational) -> ExactRow {
    ExactRow { k, l, value: fmt_rational(v), approx: to_f64(v) }
}

fn limits_table(cfg: &ExperimentConfig) -> Result<Outcome> {
    if cfg.kmax > MAX_MOMENT_ORDER {
        return Err(Error::InvalidSpec(format!("kmax: {} > {MAX_MOMENT_ORDER}", cfg.kmax)));
    }
    let profile = cfg.moment_profile()?;
    let calc = LimitCalculator::new(cfg.model, &profile)?;
    let mut rows = Vec::new();
    for k in 1..=cfg.kmax {
        let v = if cfg.model == Model::Circulant && cfg.paper_formula {
            limits::circulant_limit_moment_uncorrected(k, &profile)?
        } else {
            calc.limit_trace_moment(k)?
        };
        rows.push(exact_row(k, None, &v));
    }
    let output = exact_output(cfg, rows, |r| format!("m_{}", r.k))?;
    Ok(Outcome { output, passed: true })
}

fn covariance_table(cfg: &ExperimentConfig) -> Result<Outcome> {
    let top = cfg.covariance_max.min(cfg.kmax);
    if top > MAX_COVARIANCE_ORDER {
        return Err(Error::InvalidSpec(format!("covariance order {top} > {MAX_COVARIANCE_ORDER}")));
    }
    let profile = cfg.moment_profile()?;
    let calc = LimitCalculator::new(cfg.model, &profile)?;
    let mut rows = Vec::new();
    for k in 1..=top {
        for l in k..=top {
            rows.push(exact_row(k, Some(l), &calc.covariance_trace(k, l)?));
        }
    }
    let output = exact_output(cfg, rows, |r| format!("cov({},{})", r.k, r.l.unwrap_or(0)))?;
    Ok(Outcome { output, passed: true })
}

fn spec_for(cfg: &ExperimentConfig, n: usize) -> Result<EnsembleSpec> {
    Ok(EnsembleSpec { kind: cfg.model, n, law: cfg.require_law()?, seed: cfg.seed, storage: cfg.storage })
}

#[derive(Serialize)]
struct StatsDocument {
    schema: u32,
    config: serde_json::Value,
    stats: SampleStats,
}

fn simulate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut docs = Vec::new();
    for &n in &cfg.n {
        let stats = run_experiment(&spec_for(cfg, n)?, cfg.kmax, cfg.reps)?;
        docs.push(StatsDocument { schema: 1, config: cfg.for_size(n).provenance()?, stats });
    }
    let output = match cfg.format {
        Format::Json if docs.len() == 1 => json(&docs[0])?,
        Format::Json => json(&docs)?,
        Format::Csv | Format::Text => {
            let mut out = String::from("n,stat,k,l,value,stderr\n");
            for d in &docs {
                let s = &d.stats;
                for k in 0..s.k_max {
                    writeln!(out, "{},mean,{},,{},{}", s.n, k + 1, s.mean[k], s.mean_se[k]).unwrap();
                }
                if let (Some(c), Some(se)) = (&s.covariance, &s.covariance_se) {
                    for k in 0..s.k_max {
                        for l in k..s.k_max {
                            writeln!(out, "{},covariance,{},{},{},{}", s.n, k + 1, l + 1, c[k][l], se[k][l]).unwrap();
                        }
                    }
                }
            }
            out
        }
    };
    Ok(Outcome { output, passed: true })
}

fn verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    let options = PredictionOptions {
        paper_formula: cfg.paper_formula,
        covariance_max: cfg.covariance_max,
        ..PredictionOptions::default()
    };
    let mut reports = Vec::new();
    for &n in &cfg.n {
        let spec = spec_for(cfg, n)?;
        let predictions = standard_predictions(cfg.model, &spec.law, n, cfg.kmax, options)?;
        let stats = run_experiment(&spec, cfg.kmax, cfg.reps)?;
        let rows = compare_report(&stats, &predictions, cfg.z_threshold)?;
        reports.push(Report::new(cfg.for_size(n).provenance()?, rows));
    }
    let passed = reports.iter().all(|r| r.passed);
    let output = match cfg.format {
        Format::Json if reports.len() == 1 => json(&reports[0])?,
        Format::Json => json(&reports)?,
        Format::Csv | Format::Text => {
            let mut out = String::new();
            for (r, n) in reports.iter().zip(&cfg.n) {
                if reports.len() > 1 {
                    writeln!(out, "# n = {n}").unwrap();
                }
                out += &r.to_csv_string()?;
            }
            out
        }
    };
    eprintln!("verify: {}", if passed { "all gating rows pass" } else { "some gating rows fail" });
    Ok(Outcome { output, passed })
}

fn oracle_table(cfg: &ExperimentConfig) -> Result<Outcome> {
    let law = cfg.require_law()?;
    let mut table = OracleTable::new();
    let top = cfg.kmax.min(MAX_ORACLE_ORDER);
    for &n in &cfg.n {
        let nn = n as u64;
        for k in 1..=top {
            let v = exact_trace_mean(cfg.model, &law, nn, k)?;
            let method = match cfg.model {
                Model::Circulant => "congruence enumeration",
                Model::Centrosymmetric => "tuple enumeration",
                _ => "partition sum",
            };
            table.push("trace_mean", cfg.model, nn, k, None, &v, method);
        }
        let cov_top = cfg.covariance_max.min(top).min(3);
        for k in 1..=cov_top {
            for l in k..=cov_top {
                let (v, method) = match cfg.model {
                    Model::Elliptic | Model::Iid | Model::Block => {
                        (exact_fluct_covariance(cfg.model, &law, nn, k, l)?, "partition sum")
                    }
                    Model::Circulant if (k, l) == (2, 2) && n > 8 => (exact_circulant_z2_variance(&law, nn)?, "closed form"),
                    _ if n <= 8 => (exact_fluct_covariance_small(cfg.model, &law, nn, k, l)?, "tuple enumeration"),
                    _ => continue,
                };
                table.push("fluct_covariance", cfg.model, nn, k, Some(l), &v, method);
            }
        }
    }
    let output = match cfg.format {
        Format::Json => json(&serde_json::json!({ "schema": 1, "config": cfg.provenance()?, "oracle": table }))?,
        Format::Csv | Format::Text => {
            let mut out = String::from("quantity,model,n,k,l,value,approx,method\n");
            for e in &table.entries {
                let l = e.l.map(|l| l.to_string()).unwrap_or_default();
                writeln!(out, "{},{},{},{},{},{},{},{}", e.quantity, e.model, e.n, e.k, l, e.value, e.approx, e.method).unwrap();
            }
            out
        }
    };
    Ok(Outcome { output, passed: true })
}

#[derive(Serialize)]
struct WeaverSummary {
    n: usize,
    odd: bool,
    block1_size: usize,
    block2_size: usize,
    orthogonality_error: f64,
    off_diagonal_max: f64,
    charpoly_relative_error: f64,
    passed: bool,
}

fn weaver(cfg: &ExperimentConfig, flags: &Flags) -> Result<Outcome> {
    let n = cfg.n[0];
    let law = cfg.require_law()?;
    let spec = EnsembleSpec { kind: Model::Centrosymmetric, n, law, seed: cfg.seed, storage: Storage::Dense };
    let s = sample(&spec)?;
    if let Some(path) = &flags.dump {
        s.write_dump(std::fs::File::create(path)?)?;
    }
    let m = s.to_dense();
    let w = weaver_reduce(&m)?;
    let orthogonality_error = (w.q.transpose() * &w.q - DMatrix::identity(n, n)).amax();
    let conj = w.q.transpose() * &m * &w.q;
    let b1 = w.block1.nrows();
    let off_diagonal_max = conj.view((0, b1), (b1, n - b1)).amax().max(conj.view((b1, 0), (n - b1, b1)).amax());
    let whole = charpoly(&m);
    let split = poly_mul(&charpoly(&w.block1), &charpoly(&w.block2));
    let scale = whole.iter().fold(1.0f64, |a, c| a.max(c.abs()));
    let charpoly_relative_error = whole.iter().zip(&split).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
    let passed = orthogonality_error <= 1e-12 && off_diagonal_max <= 1e-12 && charpoly_relative_error <= 1e-8;
    let summary = WeaverSummary {
        n,
        odd: w.odd,
        block1_size: b1,
        block2_size: w.block2.nrows(),
        orthogonality_error,
        off_diagonal_max,
        charpoly_relative_error,
        passed,
    };
    let output = match cfg.format {
        Format::Json => json(&serde_json::json!({ "schema": 1, "config": cfg.provenance()?, "weaver": summary }))?,
        Format::Csv => {
            let mut out = String::from("n,odd,block1_size,block2_size,orthogonality_error,off_diagonal_max,charpoly_relative_error,pass\n");
            let s = &summary;
            writeln!(out, "{},{},{},{},{},{},{},{}", s.n, s.odd, s.block1_size, s.block2_size, s.orthogonality_error, s.off_diagonal_max, s.charpoly_relative_error, s.passed).unwrap();
            out
        }
        Format::Text => {
            let mut out = String::new();
            writeln!(out, "size {n} ({}), blocks {b1} + {}", if w.odd { "odd" } else { "even" }, w.block2.nrows()).unwrap();
            writeln!(out, "max |Q^T Q - I| = {orthogonality_error:.3e}").unwrap();
            writeln!(out, "max off-diagonal block entry of Q^T M Q = {off_diagonal_max:.3e}").unwrap();
            writeln!(out, "characteristic polynomial relative error = {charpoly_relative_error:.3e}").unwrap();
            writeln!(out, "{}", if passed { "pass" } else { "fail" }).unwrap();
            out
        }
    };
    Ok(Outcome { output, passed })
}
