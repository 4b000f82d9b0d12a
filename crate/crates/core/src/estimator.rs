//! Empirical traces, Monte Carlo fluctuation statistics and comparison
//! reports against limits and exact oracles.
//!
//! Replica `r` (1-based) is sampled with seed `seed + r`. All reductions run
//! in a fixed order (pairwise summation over replica index), so statistics do
//! not depend on the thread count.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{circulant_eigenvalues, sample, stream_rng, EnsembleSpec, MatrixData, MatrixSample, Storage, Triplet};
use crate::error::{out_of_range, Error, Result};
use crate::limits::{self, LimitCalculator, MAX_COVARIANCE_ORDER, MAX_MOMENT_ORDER};
use crate::moment_model::{EntryLaw, Model, MomentProfile, KMAX_LIMIT};
use crate::numeric::{to_f64, Surd};
use crate::oracle;

pub const MAX_TRACE_ORDER: usize = 8;
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Covariances are reported only from this many replicas on.
pub const MIN_COVARIANCE_REPLICAS: usize = 100;
/// Largest dimension the dense multiplication path accepts.
pub const MAX_DENSE_DIM: usize = 512;
/// Cap on `dim^2 * replicas` for dense runs.
pub const MAX_DENSE_WORK: f64 = 1.0e10;
/// Cap on `dim * replicas` for any run.
pub const MAX_TOTAL_WORK: f64 = 1.0e10;
/// Average number of nonzeros per row above which sparse walks are refused for large matrices.
const MAX_SPARSE_DEGREE: f64 = 64.0;

/// Stream reserved for bootstrap resampling.
const BOOTSTRAP_STREAM: u64 = u64::MAX;

/// How `Tr(A^k)` is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TracePath {
    /// Spectral for circulant samples, dense for dense storage, sparse walks otherwise.
    Auto,
    /// Closed-walk accumulation over the nonzero entries.
    Sparse,
    /// Repeated dense multiplication.
    Dense,
    /// Powers of the circulant eigenvalues.
    Spectral,
}

fn check_order(kmax: usize) -> Result<()> {
    if !(1..=MAX_TRACE_ORDER).contains(&kmax) {
        return Err(out_of_range("k_max", kmax, format!("1..={MAX_TRACE_ORDER}")));
    }
    Ok(())
}

/// Sum in a fixed binary-tree order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

fn pairwise_sum_arrays(values: &[[f64; MAX_TRACE_ORDER]]) -> [f64; MAX_TRACE_ORDER] {
    match values.len() {
        0 => [0.0; MAX_TRACE_ORDER],
        1 => values[0],
        n => {
            let a = pairwise_sum_arrays(&values[..n / 2]);
            let b = pairwise_sum_arrays(&values[n / 2..]);
            std::array::from_fn(|i| a[i] + b[i])
        }
    }
}

/// Compressed rows built from sorted or unsorted triplets.
struct Csr {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn new(dim: usize, triplets: &[Triplet]) -> Self {
        let mut counts = vec![0usize; dim + 1];
        for t in triplets {
            counts[t.row + 1] += 1;
        }
        for i in 0..dim {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for t in triplets {
            let at = fill[t.row];
            cols[at] = t.col;
            vals[at] = t.value;
            fill[t.row] += 1;
        }
        Self { offsets: counts, cols, vals }
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }
}

/// Dense scratch vector with a list of touched positions.
struct Frontier {
    values: Vec<f64>,
    listed: Vec<bool>,
    touched: Vec<usize>,
}

impl Frontier {
    fn new(dim: usize) -> Self {
        Self { values: vec![0.0; dim], listed: vec![false; dim], touched: Vec::new() }
    }

    fn add(&mut self, j: usize, v: f64) {
        // membership is tracked separately: values may cancel to exactly zero and be revisited
        if !self.listed[j] {
            self.listed[j] = true;
            self.touched.push(j);
        }
        self.values[j] += v;
    }

    fn clear(&mut self) {
        for &j in &self.touched {
            self.values[j] = 0.0;
            self.listed[j] = false;
        }
        self.touched.clear();
    }
}

fn sparse_traces(dim: usize, triplets: &[Triplet], kmax: usize) -> Vec<f64> {
    let csr = Csr::new(dim, triplets);
    let per_start: Vec<[f64; MAX_TRACE_ORDER]> = (0..dim)
        .into_par_iter()
        .map_init(
            || (Frontier::new(dim), Frontier::new(dim)),
            |(cur, next), start| {
                let mut out = [0.0; MAX_TRACE_ORDER];
                cur.clear();
                cur.add(start, 1.0);
                for slot in out.iter_mut().take(kmax) {
                    next.clear();
                    for idx in 0..cur.touched.len() {
                        let u = cur.touched[idx];
                        let w = cur.values[u];
                        if w == 0.0 {
                            continue;
                        }
                        for (j, a) in csr.row(u) {
                            next.add(j, w * a);
                        }
                    }
                    *slot = next.values[start];
                    std::mem::swap(cur, next);
                }
                cur.clear();
                out
            },
        )
        .collect();
    pairwise_sum_arrays(&per_start)[..kmax].to_vec()
}

fn dense_traces(m: &DMatrix<f64>, kmax: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax);
    let mut power = m.clone();
    out.push(power.trace());
    for _ in 1..kmax {
        power = &power * m;
        out.push(power.trace());
    }
    out
}

fn spectral_traces(generator: &[f64], kmax: usize) -> Vec<f64> {
    let eig = circulant_eigenvalues(generator);
    let mut powers = eig.clone();
    let mut out = Vec::with_capacity(kmax);
    for p in 1..=kmax {
        if p > 1 {
            for (z, l) in powers.iter_mut().zip(&eig) {
                *z *= l;
            }
        }
        let re: Vec<f64> = powers.iter().map(|z| z.re).collect();
        out.push(pairwise_sum(&re));
    }
    out
}

/// `Tr(A^k)` for `k = 1..=kmax` along the requested path.
pub fn raw_traces_with(m: &MatrixSample, kmax: usize, path: TracePath) -> Result<Vec<f64>> {
    check_order(kmax)?;
    let dim = m.dim();
    let path = match path {
        TracePath::Auto => match &m.data {
            MatrixData::Circulant { .. } => TracePath::Spectral,
            MatrixData::Dense(_) => TracePath::Dense,
            MatrixData::Sparse(ts) => {
                let degree = ts.len() as f64 / dim.max(1) as f64;
                if degree > MAX_SPARSE_DEGREE && dim <= MAX_DENSE_DIM {
                    TracePath::Dense
                } else {
                    TracePath::Sparse
                }
            }
        },
        p => p,
    };
    match path {
        TracePath::Spectral => match m.generator() {
            Some(g) => Ok(spectral_traces(g, kmax)),
            None => Err(Error::InvalidSpec("the spectral path needs a circulant sample".into())),
        },
        TracePath::Dense => {
            if dim > MAX_DENSE_DIM {
                return Err(Error::ResourceGuard(format!(
                    "dense traces of a {dim}x{dim} matrix exceed the {MAX_DENSE_DIM} limit; use sparse storage"
                )));
            }
            Ok(dense_traces(&m.to_dense(), kmax))
        }
        TracePath::Sparse => {
            let triplets = m.triplets();
            let degree = triplets.len() as f64 / dim.max(1) as f64;
            if degree > MAX_SPARSE_DEGREE && dim > MAX_DENSE_DIM {
                return Err(Error::ResourceGuard(format!(
                    "{dim}x{dim} matrix with {degree:.0} nonzeros per row is too dense for closed-walk traces"
                )));
            }
            Ok(sparse_traces(dim, &triplets, kmax))
        }
        TracePath::Auto => unreachable!(),
    }
}

pub fn raw_traces(m: &MatrixSample, kmax: usize) -> Result<Vec<f64>> {
    raw_traces_with(m, kmax, TracePath::Auto)
}

/// Normalized traces `Tr(A^k) / N` for `k = 1..=kmax` (`N` is the block size for the block model).
pub fn trace_powers(m: &MatrixSample, kmax: usize) -> Result<Vec<f64>> {
    let n = m.n as f64;
    Ok(raw_traces(m, kmax)?.into_iter().map(|t| t / n).collect())
}

/// Divisor turning `Tr(A^k)` into the mean statistic: `N`, or `1` for the
/// circulant model whose moments are stated for `E[Tr(C^k)]`.
pub fn mean_normalization(kind: Model, n: usize) -> f64 {
    if kind == Model::Circulant {
        1.0
    } else {
        n as f64
    }
}

/// Monte Carlo statistics of one experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleStats {
    pub model: Model,
    pub n: usize,
    pub dim: usize,
    pub k_max: usize,
    pub replicas: usize,
    pub seed: u64,
    /// Replica seeds are `first_seed ..= last_seed`.
    pub first_seed: u64,
    pub last_seed: u64,
    /// Divisor applied to `Tr(A^k)` in `mean`.
    pub mean_normalization: f64,
    /// Mean of `Tr(A^k) / normalization`, index `k - 1`.
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    /// Plug-in covariance of `Z_N(k) = (Tr(A^k) - mean) / sqrt(N)`; absent below the replica minimum.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub covariance_se: Option<Vec<Vec<f64>>>,
    /// Per-replica `Tr(A^k)`, kept for further statistics.
    #[serde(skip)]
    traces: Vec<Vec<f64>>,
    #[serde(skip)]
    resamples: Vec<Vec<u32>>,
}

fn check_resources(spec: &EnsembleSpec, replicas: usize) -> Result<()> {
    let dim = spec.dim() as f64;
    let m = replicas as f64;
    if dim * m > MAX_TOTAL_WORK {
        return Err(Error::ResourceGuard(format!("N * M = {} exceeds {MAX_TOTAL_WORK:e}", dim * m)));
    }
    if spec.storage == Storage::Dense {
        if spec.dim() > MAX_DENSE_DIM {
            return Err(Error::ResourceGuard(format!(
                "dense storage above N = {MAX_DENSE_DIM} is refused; use sparse storage"
            )));
        }
        if dim * dim * m > MAX_DENSE_WORK {
            return Err(Error::ResourceGuard(format!("N^2 * M = {} exceeds {MAX_DENSE_WORK:e}", dim * dim * m)));
        }
    }
    Ok(())
}

/// Samples `replicas` matrices with seeds `seed + 1 ..= seed + replicas` and
/// summarizes their traces.
pub fn run_experiment(spec: &EnsembleSpec, k_max: usize, replicas: usize) -> Result<SampleStats> {
    check_order(k_max)?;
    spec.validate()?;
    if replicas < 2 {
        return Err(out_of_range("replicas", replicas, ">= 2"));
    }
    check_resources(spec, replicas)?;
    let traces: Vec<Result<Vec<f64>>> = (1..=replicas as u64)
        .into_par_iter()
        .map(|r| raw_traces(&sample(&spec.with_seed(spec.seed.wrapping_add(r)))?, k_max))
        .collect();
    let traces = traces.into_iter().collect::<Result<Vec<_>>>()?;
    SampleStats::from_traces(spec, k_max, traces)
}

impl SampleStats {
    /// Builds statistics from per-replica raw traces `Tr(A^k)`.
    pub fn from_traces(spec: &EnsembleSpec, k_max: usize, traces: Vec<Vec<f64>>) -> Result<Self> {
        let m = traces.len();
        if m < 2 || traces.iter().any(|t| t.len() != k_max) {
            return Err(Error::ShapeMismatch("need at least two replicas with k_max traces each".into()));
        }
        let mut rng = stream_rng(spec.seed, BOOTSTRAP_STREAM);
        let resamples: Vec<Vec<u32>> = (0..BOOTSTRAP_RESAMPLES)
            .map(|_| (0..m).map(|_| rng.random_range(0..m as u32)).collect())
            .collect();
        let mut stats = Self {
            model: spec.kind,
            n: spec.n,
            dim: spec.dim(),
            k_max,
            replicas: m,
            seed: spec.seed,
            first_seed: spec.seed.wrapping_add(1),
            last_seed: spec.seed.wrapping_add(m as u64),
            mean_normalization: mean_normalization(spec.kind, spec.n),
            mean: Vec::new(),
            mean_se: Vec::new(),
            covariance: None,
            covariance_se: None,
            traces,
            resamples,
        };
        for k in 1..=k_max {
            let (v, se) = stats.mean_stat(k);
            stats.mean.push(v);
            stats.mean_se.push(se);
        }
        if m >= MIN_COVARIANCE_REPLICAS {
            let mut cov = vec![vec![0.0; k_max]; k_max];
            let mut cov_se = vec![vec![0.0; k_max]; k_max];
            for k in 1..=k_max {
                for l in k..=k_max {
                    let (v, se) = stats.z_moment(&[k, l])?;
                    cov[k - 1][l - 1] = v;
                    cov[l - 1][k - 1] = v;
                    cov_se[k - 1][l - 1] = se;
                    cov_se[l - 1][k - 1] = se;
                }
            }
            stats.covariance = Some(cov);
            stats.covariance_se = Some(cov_se);
        }
        Ok(stats)
    }

    pub fn traces(&self) -> &[Vec<f64>] {
        &self.traces
    }

    fn identity(&self) -> Vec<u32> {
        (0..self.replicas as u32).collect()
    }

    fn mean_over(&self, idx: &[u32], k: usize) -> f64 {
        let values: Vec<f64> = idx.iter().map(|&r| self.traces[r as usize][k - 1]).collect();
        pairwise_sum(&values) / idx.len() as f64
    }

    /// `E[prod_i Z(ks_i)]` over the replicas listed in `idx`, centred at their own means.
    fn z_moment_over(&self, idx: &[u32], ks: &[usize]) -> f64 {
        let centres: Vec<f64> = ks.iter().map(|&k| self.mean_over(idx, k)).collect();
        let scale = (self.n as f64).sqrt().powi(ks.len() as i32);
        let values: Vec<f64> = idx
            .iter()
            .map(|&r| {
                let t = &self.traces[r as usize];
                ks.iter().zip(&centres).map(|(&k, c)| t[k - 1] - c).product::<f64>()
            })
            .collect();
        pairwise_sum(&values) / idx.len() as f64 / scale
    }

    fn bootstrap(&self, f: impl Fn(&[u32]) -> f64 + Sync) -> f64 {
        let values: Vec<f64> = self.resamples.par_iter().map(|idx| f(idx)).collect();
        let mean = pairwise_sum(&values) / values.len() as f64;
        let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
        (pairwise_sum(&dev) / (values.len() - 1) as f64).sqrt()
    }

    /// Mean statistic for order `k` and its bootstrap standard error.
    pub fn mean_stat(&self, k: usize) -> (f64, f64) {
        let norm = self.mean_normalization;
        let v = self.mean_over(&self.identity(), k) / norm;
        let se = self.bootstrap(|idx| self.mean_over(idx, k) / norm);
        (v, se)
    }

    /// Joint moment `E[Z(k_1) ... Z(k_r)]` (covariance for two indices) and its bootstrap standard error.
    pub fn z_moment(&self, ks: &[usize]) -> Result<(f64, f64)> {
        if ks.is_empty() || ks.iter().any(|&k| k == 0 || k > self.k_max) {
            return Err(Error::ShapeMismatch(format!("orders {ks:?} outside 1..={}", self.k_max)));
        }
        let v = self.z_moment_over(&self.identity(), ks);
        let se = self.bootstrap(|idx| self.z_moment_over(idx, ks));
        Ok((v, se))
    }
}

/// Quantity a report row compares.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    /// Mean of `Tr(A^k) / N` (circulant: `Tr(C^k)`).
    Mean { k: usize },
    /// `Cov(Z(k), Z(l))`.
    Covariance { k: usize, l: usize },
    /// `E[Z(k_1) ... Z(k_r)]`.
    Joint { ks: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub target: Target,
    /// Limit value.
    pub predicted: f64,
    /// Exact finite-N value, when one is available.
    pub oracle: Option<f64>,
    /// Whether the row decides pass or fail; other rows are informational.
    pub gating: bool,
    /// Row-specific z threshold overriding the report default.
    pub threshold: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Pass,
    Fail,
    Info,
    /// Zero standard error with a mismatch; no z-score can be formed.
    Degenerate,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::Info => "info",
            Self::Degenerate => "degenerate",
        }
    }

    pub fn is_failure(self) -> bool {
        matches!(self, Self::Fail | Self::Degenerate)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Order `k`, or a comma-separated order list for joint moments.
    pub k: String,
    pub l: String,
    pub predicted: f64,
    pub oracle: Option<f64>,
    pub empirical: f64,
    pub stderr: f64,
    /// `(empirical - reference) / stderr` where the reference is the oracle when present, else the prediction.
    pub zscore: Option<f64>,
    pub pass: RowStatus,
}

/// Compares statistics with predictions; `threshold` bounds `|z|` for gating rows.
pub fn compare_report(stats: &SampleStats, predictions: &[Prediction], threshold: f64) -> Result<Vec<ReportRow>> {
    predictions
        .iter()
        .map(|p| {
            let (k, l, (empirical, stderr)) = match &p.target {
                Target::Mean { k } => {
                    if *k == 0 || *k > stats.k_max {
                        return Err(Error::ShapeMismatch(format!("mean order {k} outside 1..={}", stats.k_max)));
                    }
                    (k.to_string(), String::new(), stats.mean_stat(*k))
                }
                Target::Covariance { k, l } => (k.to_string(), l.to_string(), stats.z_moment(&[*k, *l])?),
                Target::Joint { ks } => {
                    let label = ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",");
                    (label, String::new(), stats.z_moment(ks)?)
                }
            };
            Ok(score_row(k, l, p, empirical, stderr, threshold))
        })
        .collect()
}

fn score_row(k: String, l: String, p: &Prediction, empirical: f64, stderr: f64, threshold: f64) -> ReportRow {
    let reference = p.oracle.unwrap_or(p.predicted);
    let threshold = p.threshold.unwrap_or(threshold);
    let (zscore, ok) = if stderr > 0.0 && stderr.is_finite() {
        let z = (empirical - reference) / stderr;
        (Some(z), z.abs() <= threshold)
    } else if (empirical - reference).abs() <= 1e-12 * reference.abs().max(1.0) {
        (Some(0.0), true)
    } else {
        (None, false)
    };
    let pass = match (p.gating, ok, zscore.is_some()) {
        (false, _, _) => RowStatus::Info,
        (true, true, _) => RowStatus::Pass,
        (true, false, true) => RowStatus::Fail,
        (true, false, false) => RowStatus::Degenerate,
    };
    ReportRow { k, l, predicted: p.predicted, oracle: p.oracle, empirical, stderr, zscore, pass }
}

/// Versioned report with the resolved configuration embedded for provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub config: serde_json::Value,
    pub rows: Vec<ReportRow>,
    pub passed: bool,
}

pub const CSV_HEADER: [&str; 8] = ["k", "l", "predicted", "oracle", "empirical", "stderr", "zscore", "pass"];

impl Report {
    pub fn new(config: serde_json::Value, rows: Vec<ReportRow>) -> Self {
        let passed = rows.iter().all(|r| !r.pass.is_failure());
        Self { schema: 1, config, rows, passed }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            out.write_record([
                r.k.clone(),
                r.l.clone(),
                r.predicted.to_string(),
                opt(r.oracle),
                r.empirical.to_string(),
                r.stderr.to_string(),
                opt(r.zscore),
                r.pass.as_str().to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Options for [`standard_predictions`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionOptions {
    /// Use the circulant moment display without the multiplicity symmetry factor.
    pub paper_formula: bool,
    /// Highest order for covariance rows.
    pub covariance_max: usize,
    /// Add the Wick row `E[Z(2)^4]`.
    pub wick: bool,
    /// z threshold for the Wick row.
    pub wick_threshold: f64,
}

impl Default for PredictionOptions {
    fn default() -> Self {
        Self { paper_formula: false, covariance_max: 3, wick: true, wick_threshold: 5.0 }
    }
}

fn surd_f64(r: Result<Surd>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v.to_f64())),
        Err(Error::OutOfRange { .. } | Error::ResourceGuard(_) | Error::Unsupported { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Whether every scalar constant of order three or more vanishes.
pub fn is_light_scalar(profile: &MomentProfile) -> bool {
    (3..=profile.kmax).all(|k| profile.scalar(k).map(|c| c == num_traits::Zero::zero()).unwrap_or(true))
}

/// Prediction rows for a law at size `n`: mean rows for `1..=kmax`,
/// covariance rows up to `options.covariance_max`, and the Wick row.
///
/// Mean rows gate only when an exact finite-N oracle exists, since the limit
/// itself is off by `O(1/N)`. Covariance rows gate for the graph models; for
/// the circulant model they gate only under the light profile, where the
/// `k! delta_{kl}` kernel is exact in the limit. The Wick row also needs a
/// nonzero limiting `Var(Z(2))`.
pub fn standard_predictions(model: Model, law: &EntryLaw, n: usize, kmax: usize, options: PredictionOptions) -> Result<Vec<Prediction>> {
    check_order(kmax)?;
    let profile = law.profile(KMAX_LIMIT as u32)?;
    let calc = LimitCalculator::new(model, &profile)?;
    let nn = n as u64;
    let mut rows = Vec::new();
    for k in 1..=kmax.min(MAX_MOMENT_ORDER) {
        let predicted = if model == Model::Circulant && options.paper_formula {
            limits::circulant_limit_moment_uncorrected(k, &profile)?
        } else {
            calc.limit_trace_moment(k)?
        };
        let oracle = if model == Model::Circulant && n > 15 {
            None
        } else {
            surd_f64(oracle::exact_trace_mean(model, law, nn, k))?
        };
        rows.push(Prediction {
            target: Target::Mean { k },
            predicted: to_f64(&predicted),
            oracle,
            gating: oracle.is_some(),
            threshold: None,
        });
    }
    let light = is_light_scalar(&profile);
    let cov_gating = model != Model::Circulant || light;
    let cov_max = options.covariance_max.min(kmax).min(MAX_COVARIANCE_ORDER);
    for k in 1..=cov_max {
        for l in k..=cov_max {
            let predicted = calc.covariance_trace(k, l)?;
            let oracle = match model {
                Model::Circulant if (k, l) == (2, 2) => surd_f64(oracle::exact_circulant_z2_variance(law, nn))?,
                Model::Elliptic | Model::Iid | Model::Block => surd_f64(oracle::exact_fluct_covariance(model, law, nn, k, l))?,
                _ if n <= 8 && l <= 3 => surd_f64(oracle::exact_fluct_covariance_small(model, law, nn, k, l))?,
                _ => None,
            };
            rows.push(Prediction {
                target: Target::Covariance { k, l },
                predicted: to_f64(&predicted),
                oracle,
                gating: cov_gating,
                threshold: None,
            });
        }
    }
    if options.wick && kmax >= 2 {
        let ks = vec![2, 2, 2, 2];
        let predicted = calc.wick_joint(&ks)?;
        // a degenerate Gaussian limit makes the target zero for a positive
        // quantity, so the row could only ever fail as M grows
        let nondegenerate = !num_traits::Zero::is_zero(&calc.covariance_trace(2, 2)?);
        rows.push(Prediction {
            target: Target::Joint { ks },
            predicted: to_f64(&predicted),
            oracle: None,
            gating: cov_gating && nondegenerate,
            threshold: Some(options.wick_threshold),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moment_model::{design_correlated_sign_law, ScalarLaw, SparseScalarLaw};
    use crate::numeric::rat;

    fn elliptic_spec(n: usize, seed: u64) -> EnsembleSpec {
        EnsembleSpec {
            kind: Model::Elliptic,
            n,
            law: EntryLaw::Pair(design_correlated_sign_law(&rat(1, 2)).unwrap()),
            seed,
            storage: Storage::SparseCoo,
        }
    }

    #[test]
    fn identity_and_zero_traces() {
        let id = MatrixSample::from_dense(Model::Iid, DMatrix::identity(5, 5)).unwrap();
        assert!(trace_powers(&id, 6).unwrap().iter().all(|&t| (t - 1.0).abs() < 1e-15));
        let zero = MatrixSample::from_dense(Model::Iid, DMatrix::zeros(5, 5)).unwrap();
        assert!(trace_powers(&zero, 6).unwrap().iter().all(|&t| t == 0.0));
    }

    #[test]
    fn swap_matrix_traces() {
        let h = 1.0 / 2f64.sqrt();
        let m = MatrixSample::from_dense(Model::Iid, DMatrix::from_row_slice(2, 2, &[0.0, h, h, 0.0])).unwrap();
        let expected = [0.0, 0.5, 0.0, 0.25];
        for path in [TracePath::Dense, TracePath::Sparse] {
            let t: Vec<f64> = raw_traces_with(&m, 4, path).unwrap().iter().map(|v| v / 2.0).collect();
            for (a, b) in t.iter().zip(expected) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn order_guard() {
        let id = MatrixSample::from_dense(Model::Iid, DMatrix::identity(2, 2)).unwrap();
        assert!(trace_powers(&id, 9).is_err());
        assert!(trace_powers(&id, 0).is_err());
    }

    #[test]
    fn pairwise_sum_is_exact_on_integers() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 500500.0);
    }

    #[test]
    fn experiments_are_deterministic() {
        let spec = elliptic_spec(50, 7);
        let a = run_experiment(&spec, 4, 120).unwrap();
        let b = run_experiment(&spec, 4, 120).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.covariance, b.covariance);
        assert_eq!(a.covariance_se, b.covariance_se);
        assert_eq!(a.first_seed, 8);
        assert_eq!(a.last_seed, 127);
    }

    #[test]
    fn covariance_needs_enough_replicas() {
        let s = run_experiment(&elliptic_spec(20, 1), 2, 50).unwrap();
        assert!(s.covariance.is_none());
        assert!(run_experiment(&elliptic_spec(20, 1), 2, 1).is_err());
    }

    #[test]
    fn dense_guard() {
        let spec = EnsembleSpec { storage: Storage::Dense, ..elliptic_spec(600, 1) };
        assert!(matches!(run_experiment(&spec, 2, 10), Err(Error::ResourceGuard(_))));
    }

    fn prediction(predicted: f64) -> Prediction {
        Prediction { target: Target::Mean { k: 1 }, predicted, oracle: None, gating: true, threshold: None }
    }

    #[test]
    fn exact_match_scores_zero() {
        let row = score_row("1".into(), String::new(), &prediction(2.0), 2.0, 0.5, 4.0);
        assert_eq!(row.zscore, Some(0.0));
        assert_eq!(row.pass, RowStatus::Pass);
    }

    #[test]
    fn zero_stderr_mismatch_is_degenerate() {
        let row = score_row("1".into(), String::new(), &prediction(2.0), 1.0, 0.0, 4.0);
        assert_eq!(row.zscore, None);
        assert_eq!(row.pass, RowStatus::Degenerate);
        let info = Prediction { gating: false, ..prediction(2.0) };
        assert_eq!(score_row("1".into(), String::new(), &info, 1.0, 0.0, 4.0).pass, RowStatus::Info);
    }

    #[test]
    fn oracle_is_the_reference_when_present() {
        let p = Prediction { oracle: Some(1.0), ..prediction(2.0) };
        let row = score_row("1".into(), String::new(), &p, 1.2, 0.1, 4.0);
        assert!((row.zscore.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let rows = vec![ReportRow {
            k: "2,2,2,2".into(),
            l: String::new(),
            predicted: 12.0,
            oracle: None,
            empirical: 12.5,
            stderr: 0.5,
            zscore: Some(1.0),
            pass: RowStatus::Pass,
        }];
        let text = Report::new(serde_json::json!({}), rows).to_csv_string().unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("k,l,predicted,oracle,empirical,stderr,zscore,pass"));
        assert_eq!(lines.next(), Some("\"2,2,2,2\",,12,,12.5,0.5,1,pass"));
    }

    #[test]
    fn circulant_sparse_law_rows_are_informational() {
        let law = EntryLaw::Scalar(ScalarLaw::Sparse(SparseScalarLaw::sign()));
        let rows = standard_predictions(Model::Circulant, &law, 5, 3, PredictionOptions::default()).unwrap();
        let var2 = rows.iter().find(|r| r.target == Target::Covariance { k: 2, l: 2 }).unwrap();
        assert_eq!(var2.predicted, 2.0);
        assert!((var2.oracle.unwrap() - 2.4).abs() < 1e-12);
        assert!(!var2.gating);
        let light = standard_predictions(Model::Circulant, &EntryLaw::Scalar(ScalarLaw::StandardNormal), 512, 3, PredictionOptions::default()).unwrap();
        assert!(light.iter().filter(|r| !matches!(r.target, Target::Mean { .. })).all(|r| r.gating));
    }

    #[test]
    fn sparse_walks_survive_exact_cancellation() {
        // three paths 0 -> {1,2,3} -> 4 with weights +1, -1, +1: the running sum at 4 passes through zero
        let m = DMatrix::from_row_slice(5, 5, &[
            0.0, 1.0, 1.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 0.0, 1.0,
            0.0, 0.0, 0.0, 0.0, -1.0,
            0.0, 0.0, 0.0, 0.0, 1.0,
            1.0, 0.0, 0.0, 0.0, 0.0,
        ]);
        let s = MatrixSample::from_dense(Model::Iid, m).unwrap();
        let dense = raw_traces_with(&s, 8, TracePath::Dense).unwrap();
        let sparse = raw_traces_with(&s, 8, TracePath::Sparse).unwrap();
        assert_eq!(dense, sparse);
    }
}
