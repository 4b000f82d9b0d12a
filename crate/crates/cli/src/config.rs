//! Experiment configuration: JSON file fields overridden by command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use exploding_core::ensembles::Storage;
use exploding_core::moment_model::{
    design_correlated_sign_law, EntryLaw, LawDocument, Model, MomentProfile, ProfileDocument, ScalarLaw,
    SparseScalarLaw, KMAX_LIMIT,
};
use exploding_core::numeric::{parse_rational, Rational};
use exploding_core::{Error, Result};
use num_traits::Signed;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    #[default]
    Limits,
    Covariance,
    Simulate,
    Verify,
    Oracle,
    Weaver,
}

/// Named entry laws selectable from the command line.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    /// Correlated sign law (pair models) or symmetric sign law (scalar models), activation 1.
    #[default]
    Sparse,
    /// Gaussian entries: `C_2 = 1` and every higher scalar constant 0.
    Light,
    /// Scalar law with `C_2 = 1`, `C_3 = 1`, `C_4 = 3`.
    Skewed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Text,
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StorageArg {
    Sparse,
    Dense,
}

fn default_n() -> Vec<usize> {
    vec![1000]
}
fn default_kmax() -> usize {
    4
}
fn default_reps() -> usize {
    2000
}
fn default_seed() -> u64 {
    1
}
fn default_rho() -> String {
    "0".into()
}
fn default_threshold() -> f64 {
    4.0
}
fn default_covariance_max() -> usize {
    3
}

/// Fully resolved run description; embedded in every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub command: Command,
    #[serde(default = "default_model")]
    pub model: Model,
    #[serde(default = "default_n")]
    pub n: Vec<usize>,
    #[serde(default = "default_kmax")]
    pub kmax: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub profile: ProfileKind,
    /// Correlation of the pair laws, as a rational `p/q` or decimal.
    #[serde(default = "default_rho")]
    pub rho: String,
    /// Explicit entry law; takes precedence over `profile` and `rho`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<LawDocument>,
    /// Explicit limit constants for `limits` and `covariance`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_profile: Option<ProfileDocument>,
    #[serde(default)]
    pub storage: Storage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub paper_formula: bool,
    #[serde(default = "default_threshold")]
    pub z_threshold: f64,
    #[serde(default)]
    pub format: Format,
    #[serde(default = "default_covariance_max")]
    pub covariance_max: usize,
}

fn default_model() -> Model {
    Model::Elliptic
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

fn parse_model(s: &str) -> std::result::Result<Model, String> {
    s.parse::<Model>().map_err(|e| e.to_string())
}

/// Flags shared by every subcommand; each overrides the matching config field.
#[derive(Clone, Debug, Default, Args)]
pub struct Flags {
    /// JSON config file, or a previously emitted report whose embedded config is reused.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_model)]
    pub model: Option<Model>,
    /// Matrix sizes, comma separated (block size for the block model).
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Monte Carlo replicas.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub profile: Option<ProfileKind>,
    /// Pair correlation, e.g. `1/2`.
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<String>,
    #[arg(long, value_enum)]
    pub storage: Option<StorageArg>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Use the circulant moment display without the multiplicity symmetry factor.
    #[arg(long)]
    pub paper_formula: bool,
    #[arg(long)]
    pub z_threshold: Option<f64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Highest order in covariance tables and verify rows.
    #[arg(long)]
    pub covariance_max: Option<usize>,
    /// Write the sampled matrix as `i j value` lines (weaver command).
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "EXPLODING_THREADS")]
    pub threads: Option<usize>,
}

/// Reads a config file, accepting either a bare config or a report embedding one.
pub fn read_config_file(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let parse_error = |e: serde_json::Error| Error::Parse(format!("{}: {e}", path.display()));
    let inner = match value {
        serde_json::Value::Object(ref map) if map.contains_key("schema") && map.contains_key("config") => map["config"].clone(),
        serde_json::Value::Array(ref reports) if !reports.is_empty() && reports[0].get("config").is_some() => {
            reports[0]["config"].clone()
        }
        // parse the text again so errors keep their line and column
        _ => return serde_json::from_str(&text).map_err(parse_error),
    };
    serde_json::from_value(inner).map_err(parse_error)
}

impl ExperimentConfig {
    /// Config file (if any) with flags applied on top, validated.
    pub fn resolve(command: Command, flags: &Flags) -> Result<Self> {
        let mut cfg = match &flags.config {
            Some(path) => read_config_file(path)?,
            None => Self::default(),
        };
        cfg.command = command;
        if let Some(m) = flags.model {
            cfg.model = m;
        }
        if let Some(n) = &flags.n {
            cfg.n = n.clone();
        }
        if let Some(k) = flags.kmax {
            cfg.kmax = k;
        }
        if let Some(r) = flags.reps {
            cfg.reps = r;
        }
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        if let Some(p) = flags.profile {
            cfg.profile = p;
            // a named profile replaces any law carried over from a config file
            cfg.law = None;
        }
        if let Some(r) = &flags.rho {
            cfg.rho = r.clone();
            cfg.law = None;
        }
        if let Some(s) = flags.storage {
            cfg.storage = match s {
                StorageArg::Sparse => Storage::SparseCoo,
                StorageArg::Dense => Storage::Dense,
            };
        }
        if let Some(o) = &flags.output {
            cfg.output = Some(o.clone());
        }
        if command == Command::Weaver {
            if flags.model.is_some_and(|m| m != Model::Centrosymmetric) {
                return Err(Error::InvalidSpec("model: the weaver command reduces centrosymmetric matrices only".into()));
            }
            cfg.model = Model::Centrosymmetric;
        }
        cfg.paper_formula |= flags.paper_formula;
        if let Some(z) = flags.z_threshold {
            cfg.z_threshold = z;
        }
        if let Some(f) = flags.format {
            cfg.format = f;
        }
        if let Some(c) = flags.covariance_max {
            cfg.covariance_max = c;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::InvalidSpec(format!("{field}: {why}")));
        if self.n.is_empty() || self.n.contains(&0) {
            return bad("n", "needs at least one size, each >= 1".into());
        }
        if self.kmax == 0 {
            return bad("kmax", "must be >= 1".into());
        }
        if matches!(self.command, Command::Simulate | Command::Verify) && self.reps < 2 {
            return bad("reps", format!("{} < 2", self.reps));
        }
        if !(self.z_threshold > 0.0 && self.z_threshold.is_finite()) {
            return bad("z_threshold", format!("{} is not a positive number", self.z_threshold));
        }
        if self.covariance_max == 0 {
            return bad("covariance_max", "must be >= 1".into());
        }
        let rho = self.rho()?;
        if rho.abs() > Rational::from_integer(1.into()) {
            return bad("rho", format!("{} outside [-1, 1]", self.rho));
        }
        if let Some(law) = self.law()? {
            let pair = matches!(law, EntryLaw::Pair(_));
            if pair != self.model.uses_pair_table() {
                return bad("law", format!("a {} law does not fit the {} model", if pair { "pair" } else { "scalar" }, self.model));
            }
        }
        Ok(())
    }

    pub fn rho(&self) -> Result<Rational> {
        parse_rational(&self.rho).map_err(|e| Error::Parse(format!("rho: {e}")))
    }

    /// Entry law used for sampling and oracles; `None` when the profile has no sampler for the model.
    pub fn law(&self) -> Result<Option<EntryLaw>> {
        if let Some(doc) = &self.law {
            return doc.to_law().map(Some);
        }
        Ok(match (self.model.uses_pair_table(), self.profile) {
            (true, ProfileKind::Sparse) => Some(EntryLaw::Pair(design_correlated_sign_law(&self.rho()?)?)),
            (true, ProfileKind::Light) => None,
            (true, ProfileKind::Skewed) => {
                return Err(Error::InvalidSpec(format!("the skewed profile is a scalar law; {} needs a pair law", self.model)))
            }
            (false, ProfileKind::Sparse) => Some(EntryLaw::Scalar(ScalarLaw::Sparse(SparseScalarLaw::sign()))),
            (false, ProfileKind::Skewed) => Some(EntryLaw::Scalar(ScalarLaw::Sparse(SparseScalarLaw::skewed()))),
            (false, ProfileKind::Light) => Some(EntryLaw::Scalar(ScalarLaw::StandardNormal)),
        })
    }

    pub fn require_law(&self) -> Result<EntryLaw> {
        self.law()?.ok_or_else(|| {
            Error::InvalidSpec(format!(
                "the light profile has no sampler for the {} model; use --profile sparse or a law in the config",
                self.model
            ))
        })
    }

    /// Limit constants: explicit profile, else those of the law, else the light profile.
    pub fn moment_profile(&self) -> Result<MomentProfile> {
        if let Some(doc) = &self.moment_profile {
            return doc.to_profile().map_err(Error::InvalidProfile);
        }
        match self.law()? {
            Some(law) => law.profile(KMAX_LIMIT),
            None => Ok(MomentProfile::light_pair(self.rho()?, KMAX_LIMIT)),
        }
    }

    /// Config as embedded in outputs: the law resolved, the output path dropped.
    pub fn provenance(&self) -> Result<serde_json::Value> {
        let mut c = self.clone();
        c.output = None;
        if c.law.is_none() {
            if let Some(law) = self.law()? {
                c.law = Some(LawDocument::from_law(&law)?);
            }
        }
        Ok(serde_json::to_value(c)?)
    }

    /// The same config restricted to one matrix size.
    pub fn for_size(&self, n: usize) -> Self {
        Self { n: vec![n], ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_json() {
        let c = ExperimentConfig::default();
        assert_eq!(c.model, Model::Elliptic);
        assert_eq!(c.z_threshold, 4.0);
        assert_eq!(c.format, Format::Text);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"model": "circulant", "kmax": 3, "seed": 9}"#).unwrap();
        let flags = Flags { config: Some(path), kmax: Some(5), ..Flags::default() };
        let c = ExperimentConfig::resolve(Command::Limits, &flags).unwrap();
        assert_eq!(c.model, Model::Circulant);
        assert_eq!(c.kmax, 5);
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn unknown_fields_are_reported_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, "{\n  \"modle\": \"iid\"\n}").unwrap();
        let err = read_config_file(&path).unwrap_err().to_string();
        assert!(err.contains("modle"), "{err}");
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn law_shape_must_fit_model() {
        let flags = Flags { model: Some(Model::Elliptic), profile: Some(ProfileKind::Skewed), ..Flags::default() };
        assert!(ExperimentConfig::resolve(Command::Limits, &flags).is_err());
        let flags = Flags { rho: Some("3/2".into()), ..Flags::default() };
        assert!(ExperimentConfig::resolve(Command::Limits, &flags).is_err());
    }

    #[test]
    fn provenance_embeds_the_resolved_law() {
        let c = ExperimentConfig::default();
        let v = c.provenance().unwrap();
        assert_eq!(v["law"]["kind"], "pair");
        let back: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back.law().unwrap(), c.law().unwrap());
    }
}
