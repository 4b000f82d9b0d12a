//! Exploding-moment limit constants and the sparse atomic laws that realize them.
//!
//! A [`MomentProfile`] stores the limits `C_{k,l} = lim E[x^k y^l] / N^{(k+l)/2 - alpha}`
//! for a correlated off-diagonal pair `(x, y) = (x_ij, x_ji)` and the scalar
//! limits `C_k` for a single entry. Everything here is exact rational
//! arithmetic.
//!
//! A sparse law activates an entry (or an off-diagonal pair) with probability
//! `q / N` and then draws `sqrt(N) * xi` from a finite atom list, which gives
//! `E[x^k y^l] = q E[xi^k eta^l] N^{(k+l)/2 - 1}` exactly, i.e. `alpha = 1`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{binomial, fmt_rational, int, rat, Rational};

pub const DEFAULT_KMAX: u32 = 8;
/// Largest table order accepted anywhere in the crate.
pub const KMAX_LIMIT: u32 = 12;

/// The five matrix models covered by the limit theory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Elliptic,
    Iid,
    #[serde(alias = "block2")]
    Block,
    Centrosymmetric,
    Circulant,
}

impl Model {
    pub const ALL: [Model; 5] =
        [Model::Elliptic, Model::Iid, Model::Block, Model::Centrosymmetric, Model::Circulant];

    pub fn name(self) -> &'static str {
        match self {
            Model::Elliptic => "elliptic",
            Model::Iid => "iid",
            Model::Block => "block",
            Model::Centrosymmetric => "centrosymmetric",
            Model::Circulant => "circulant",
        }
    }

    /// Whether the model is parameterized by the correlated pair table.
    pub fn uses_pair_table(self) -> bool {
        matches!(self, Model::Elliptic | Model::Block)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "elliptic" => Ok(Model::Elliptic),
            "iid" | "nonhermitian" | "non-hermitian" => Ok(Model::Iid),
            "block" | "block2" => Ok(Model::Block),
            "centrosymmetric" | "centro" => Ok(Model::Centrosymmetric),
            "circulant" => Ok(Model::Circulant),
            other => Err(Error::Parse(format!(
                "unknown model {other:?} (expected elliptic, iid, block, centrosymmetric or circulant)"
            ))),
        }
    }
}

/// Limit constants of an exploding-moment model.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentProfile {
    pub alpha: Rational,
    pub kmax: u32,
    /// `C_{k,l}` for `2 <= k + l <= kmax`, both orientations stored explicitly.
    pub pair_table: BTreeMap<(u32, u32), Rational>,
    /// `C_k` for `2 <= k <= kmax`.
    pub scalar_table: BTreeMap<u32, Rational>,
    pub diagonal_bounded: bool,
}

impl MomentProfile {
    pub fn empty(kmax: u32) -> Self {
        Self {
            alpha: Rational::one(),
            kmax,
            pair_table: BTreeMap::new(),
            scalar_table: BTreeMap::new(),
            diagonal_bounded: true,
        }
    }

    /// Pair constant with the mean-zero conventions `C_{0,0} = 1`, `C_{1,0} = C_{0,1} = 0`.
    pub fn pair(&self, k: u32, l: u32) -> Result<Rational> {
        match (k, l) {
            (0, 0) => Ok(Rational::one()),
            (1, 0) | (0, 1) => Ok(Rational::zero()),
            _ => self
                .pair_table
                .get(&(k, l))
                .cloned()
                .ok_or_else(|| Error::TableTooShort(format!("C_{{{k},{l}}} (kmax {})", self.kmax))),
        }
    }

    /// Scalar constant with `C_0 = 1`, `C_1 = 0`.
    pub fn scalar(&self, k: u32) -> Result<Rational> {
        match k {
            0 => Ok(Rational::one()),
            1 => Ok(Rational::zero()),
            _ => self
                .scalar_table
                .get(&k)
                .cloned()
                .ok_or_else(|| Error::TableTooShort(format!("C_{k} (kmax {})", self.kmax))),
        }
    }

    pub fn is_critical(&self) -> bool {
        self.alpha.is_one()
    }

    /// Light-tailed pair profile: `C_{2,0} = C_{0,2} = 1`, `C_{1,1} = rho`, everything else zero.
    pub fn light_pair(rho: Rational, kmax: u32) -> Self {
        let mut p = Self::empty(kmax);
        for total in 2..=kmax {
            for k in 0..=total {
                p.pair_table.insert((k, total - k), Rational::zero());
            }
        }
        p.pair_table.insert((2, 0), Rational::one());
        p.pair_table.insert((0, 2), Rational::one());
        p.pair_table.insert((1, 1), rho);
        p.scalar_table = light_scalar_table(kmax);
        p
    }

    /// The profile whose elliptic trace limits are the semicircle moments.
    pub fn wigner(kmax: u32) -> Self {
        Self::light_pair(Rational::one(), kmax)
    }

    /// Light-tailed scalar profile: `C_2 = 1` and `C_k = 0` for `k >= 3`.
    pub fn light_scalar(kmax: u32) -> Self {
        let mut p = Self::empty(kmax);
        p.scalar_table = light_scalar_table(kmax);
        p
    }

    pub fn from_scalar_table(scalar: BTreeMap<u32, Rational>, kmax: u32) -> Self {
        let mut p = Self::empty(kmax);
        p.scalar_table = scalar;
        p
    }
}

fn light_scalar_table(kmax: u32) -> BTreeMap<u32, Rational> {
    (2..=kmax).map(|k| (k, if k == 2 { Rational::one() } else { Rational::zero() })).collect()
}

/// One problem found by [`validate_profile`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    MissingEntry { table: &'static str, key: String },
    VarianceMismatch { key: String, value: String },
    NonFiniteValue { table: &'static str, key: String },
    BeyondKmax { table: &'static str, key: String, kmax: u32 },
    InvalidAlpha(String),
    InvalidKmax(u32),
    /// `C_{k,0}`, `C_{0,k}` and `C_k` disagree where all three are present.
    MarginalMismatch { k: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingEntry { table, key } => write!(f, "missing-entry: {table} {key}"),
            Violation::VarianceMismatch { key, value } => {
                write!(f, "variance-mismatch: {key} = {value}, alpha = 1 requires 1")
            }
            Violation::NonFiniteValue { table, key } => write!(f, "non-finite-value: {table} {key}"),
            Violation::BeyondKmax { table, key, kmax } => {
                write!(f, "beyond-kmax: {table} {key} exceeds kmax {kmax}")
            }
            Violation::InvalidAlpha(a) => write!(f, "invalid alpha {a}: must be positive"),
            Violation::InvalidKmax(k) => write!(f, "invalid kmax {k}: must lie in 2..={KMAX_LIMIT}"),
            Violation::MarginalMismatch { k } => {
                write!(f, "marginal-mismatch: C_{{{k},0}}, C_{{0,{k}}} and C_{k} differ")
            }
        }
    }
}

/// Checks that `p` carries every table `model` needs up to `kmax`, and the unit
/// variance constraint when `alpha = 1`.
pub fn validate_profile(p: &MomentProfile, model: Model) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if !p.alpha.is_positive() {
        out.push(Violation::InvalidAlpha(fmt_rational(&p.alpha)));
    }
    if p.kmax < 2 || p.kmax > KMAX_LIMIT {
        out.push(Violation::InvalidKmax(p.kmax));
    }
    for &(k, l) in p.pair_table.keys() {
        if k + l > p.kmax || k + l < 2 {
            out.push(Violation::BeyondKmax { table: "pair_table", key: format!("({k},{l})"), kmax: p.kmax });
        }
    }
    for &k in p.scalar_table.keys() {
        if k > p.kmax || k < 2 {
            out.push(Violation::BeyondKmax { table: "scalar_table", key: format!("{k}"), kmax: p.kmax });
        }
    }
    let critical = p.alpha.is_one();
    if model.uses_pair_table() {
        for total in 2..=p.kmax {
            for k in 0..=total {
                if !p.pair_table.contains_key(&(k, total - k)) {
                    out.push(Violation::MissingEntry {
                        table: "pair_table",
                        key: format!("C_{{{k},{}}}", total - k),
                    });
                }
            }
        }
        if critical {
            for key in [(2, 0), (0, 2)] {
                if let Some(v) = p.pair_table.get(&key) {
                    if !v.is_one() {
                        out.push(Violation::VarianceMismatch {
                            key: format!("C_{{{},{}}}", key.0, key.1),
                            value: fmt_rational(v),
                        });
                    }
                }
            }
        }
        if model == Model::Block {
            for (&k, c) in &p.scalar_table {
                let a = p.pair_table.get(&(k, 0));
                let b = p.pair_table.get(&(0, k));
                if a.is_some_and(|a| a != c) || b.is_some_and(|b| b != c) {
                    out.push(Violation::MarginalMismatch { k });
                }
            }
        }
    } else {
        for k in 2..=p.kmax {
            if !p.scalar_table.contains_key(&k) {
                out.push(Violation::MissingEntry { table: "scalar_table", key: format!("C_{k}") });
            }
        }
        if critical {
            if let Some(v) = p.scalar_table.get(&2) {
                if !v.is_one() {
                    out.push(Violation::VarianceMismatch { key: "C_2".into(), value: fmt_rational(v) });
                }
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Same as [`validate_profile`] but as a crate error.
pub fn ensure_profile(p: &MomentProfile, model: Model) -> Result<()> {
    validate_profile(p, model).map_err(Error::InvalidProfile)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScalarAtom {
    pub value: Rational,
    pub prob: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairAtom {
    pub xi: Rational,
    pub eta: Rational,
    pub prob: Rational,
}

/// Sparse law for a dependent off-diagonal pair plus a bounded diagonal law.
///
/// An off-diagonal pair `(x_ij, x_ji)` is active with probability `q / N`; an
/// active pair equals `sqrt(N) * (xi, eta)`. Diagonal entries take the atoms
/// of `diagonal` directly (no `sqrt(N)` scale).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsePairLaw {
    pub activation: Rational,
    pub atoms: Vec<PairAtom>,
    pub diagonal: Vec<ScalarAtom>,
}

/// Sparse law for a single entry: active with probability `q / N`, then `sqrt(N) * xi`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseScalarLaw {
    pub activation: Rational,
    pub atoms: Vec<ScalarAtom>,
}

/// Entry laws for the scalar-parameterized models.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScalarLaw {
    Sparse(SparseScalarLaw),
    /// Standard normal entries; realizes the light profile `C_2 = 1`, `C_k = 0` for `k >= 3`.
    StandardNormal,
}

fn check_probs(probs: impl Iterator<Item = Rational>, what: &str) -> Result<()> {
    let mut total = Rational::zero();
    for p in probs {
        if !p.is_positive() || p > Rational::one() {
            return Err(Error::InvalidLaw(format!("{what}: probability {} not in (0,1]", fmt_rational(&p))));
        }
        total += p;
    }
    if !total.is_one() {
        return Err(Error::InvalidLaw(format!("{what}: probabilities sum to {}", fmt_rational(&total))));
    }
    Ok(())
}

fn check_activation(q: &Rational) -> Result<()> {
    if !q.is_positive() {
        return Err(Error::InvalidLaw(format!("activation q = {} must be positive", fmt_rational(q))));
    }
    Ok(())
}

/// `E[v^k]` over a weighted atom list.
pub fn atom_moment(atoms: &[ScalarAtom], k: u32) -> Rational {
    atoms.iter().map(|a| num_traits::pow(a.value.clone(), k as usize) * &a.prob).sum()
}

impl SparsePairLaw {
    /// `E[xi^k eta^l]` of the active atoms.
    pub fn atom_moment(&self, k: u32, l: u32) -> Rational {
        self.atoms
            .iter()
            .map(|a| {
                num_traits::pow(a.xi.clone(), k as usize) * num_traits::pow(a.eta.clone(), l as usize) * &a.prob
            })
            .sum()
    }

    pub fn diagonal_moment(&self, k: u32) -> Rational {
        atom_moment(&self.diagonal, k)
    }

    pub fn validate(&self) -> Result<()> {
        check_activation(&self.activation)?;
        check_probs(self.atoms.iter().map(|a| a.prob.clone()), "pair atoms")?;
        check_probs(self.diagonal.iter().map(|a| a.prob.clone()), "diagonal atoms")?;
        let q = &self.activation;
        if !self.atom_moment(1, 0).is_zero() || !self.atom_moment(0, 1).is_zero() {
            return Err(Error::InvalidLaw("pair atoms must have mean zero".into()));
        }
        if !(q * self.atom_moment(2, 0)).is_one() || !(q * self.atom_moment(0, 2)).is_one() {
            return Err(Error::InvalidLaw("q * E[xi^2] and q * E[eta^2] must equal 1".into()));
        }
        if !self.diagonal_moment(1).is_zero() {
            return Err(Error::InvalidLaw("diagonal law must have mean zero".into()));
        }
        if self.diagonal_moment(2) > Rational::one() {
            return Err(Error::InvalidLaw("diagonal variance must be at most 1".into()));
        }
        Ok(())
    }

    /// Marginal scalar law of the first (`xi`) or second (`eta`) coordinate.
    pub fn marginal(&self, second: bool) -> SparseScalarLaw {
        let mut merged: BTreeMap<Rational, Rational> = BTreeMap::new();
        for a in &self.atoms {
            let v = if second { a.eta.clone() } else { a.xi.clone() };
            *merged.entry(v).or_insert_with(Rational::zero) += &a.prob;
        }
        SparseScalarLaw {
            activation: self.activation.clone(),
            atoms: merged.into_iter().map(|(value, prob)| ScalarAtom { value, prob }).collect(),
        }
    }
}

impl SparseScalarLaw {
    pub fn atom_moment(&self, k: u32) -> Rational {
        atom_moment(&self.atoms, k)
    }

    pub fn validate(&self) -> Result<()> {
        check_activation(&self.activation)?;
        check_probs(self.atoms.iter().map(|a| a.prob.clone()), "atoms")?;
        if !self.atom_moment(1).is_zero() {
            return Err(Error::InvalidLaw("atoms must have mean zero".into()));
        }
        if !(&self.activation * self.atom_moment(2)).is_one() {
            return Err(Error::InvalidLaw("q * E[xi^2] must equal 1".into()));
        }
        Ok(())
    }

    /// `xi = +-1` with equal probability, `q = 1`.
    pub fn sign() -> Self {
        Self {
            activation: Rational::one(),
            atoms: vec![
                ScalarAtom { value: int(1), prob: rat(1, 2) },
                ScalarAtom { value: int(-1), prob: rat(1, 2) },
            ],
        }
    }

    /// `xi = -1` w.p. 2/3 and `xi = 2` w.p. 1/3 with `q = 1/2`: a skewed law
    /// with `C_3 = 1` and `C_4 = 3`.
    pub fn skewed() -> Self {
        Self {
            activation: rat(1, 2),
            atoms: vec![
                ScalarAtom { value: int(-1), prob: rat(2, 3) },
                ScalarAtom { value: int(2), prob: rat(1, 3) },
            ],
        }
    }
}

impl ScalarLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            ScalarLaw::Sparse(l) => l.validate(),
            ScalarLaw::StandardNormal => Ok(()),
        }
    }
}

/// `C_{k,l} = q E[xi^k eta^l]` for `2 <= k + l <= kmax`, plus the marginal `C_k` of `xi`.
pub fn profile_of_sparse_law(law: &SparsePairLaw, kmax: u32) -> Result<MomentProfile> {
    law.validate()?;
    if !(2..=KMAX_LIMIT).contains(&kmax) {
        return Err(crate::error::out_of_range("kmax", kmax, format!("2..={KMAX_LIMIT}")));
    }
    let mut p = MomentProfile::empty(kmax);
    for total in 2..=kmax {
        for k in 0..=total {
            p.pair_table.insert((k, total - k), &law.activation * law.atom_moment(k, total - k));
        }
        p.scalar_table.insert(total, &law.activation * law.atom_moment(total, 0));
    }
    Ok(p)
}

/// `C_k = q E[xi^k]` for a scalar law; the light profile for standard normal entries.
pub fn profile_of_scalar_law(law: &ScalarLaw, kmax: u32) -> Result<MomentProfile> {
    law.validate()?;
    if !(2..=KMAX_LIMIT).contains(&kmax) {
        return Err(crate::error::out_of_range("kmax", kmax, format!("2..={KMAX_LIMIT}")));
    }
    Ok(match law {
        ScalarLaw::StandardNormal => MomentProfile::light_scalar(kmax),
        ScalarLaw::Sparse(l) => MomentProfile::from_scalar_table(
            (2..=kmax).map(|k| (k, &l.activation * l.atom_moment(k))).collect(),
            kmax,
        ),
    })
}

/// The four-atom `+-1` pair law with `E[xi eta] = rho`: `eta = xi` with
/// probability `(1 + rho) / 2`, otherwise `eta = -xi`. Diagonal entries are
/// `+-1` signs.
pub fn design_correlated_sign_law(rho: &Rational) -> Result<SparsePairLaw> {
    if rho.abs() > Rational::one() {
        return Err(crate::error::out_of_range("rho", fmt_rational(rho), "[-1, 1]"));
    }
    let same = (Rational::one() + rho) / int(4);
    let flip = (Rational::one() - rho) / int(4);
    let candidates = [
        (1, 1, same.clone()),
        (1, -1, flip.clone()),
        (-1, 1, flip),
        (-1, -1, same),
    ];
    let atoms = candidates
        .into_iter()
        .filter(|(_, _, p)| !p.is_zero())
        .map(|(x, y, prob)| PairAtom { xi: int(x), eta: int(y), prob })
        .collect();
    Ok(SparsePairLaw {
        activation: Rational::one(),
        atoms,
        diagonal: vec![
            ScalarAtom { value: int(1), prob: rat(1, 2) },
            ScalarAtom { value: int(-1), prob: rat(1, 2) },
        ],
    })
}

/// Convolution constants for the two blocks of a reduced centrosymmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TildeTables {
    /// `C~_k^{(1)}`, `2 <= k <= kmax`.
    pub first: BTreeMap<u32, Rational>,
    /// `C~_k^{(2)}`, `2 <= k <= kmax`.
    pub second: BTreeMap<u32, Rational>,
    /// `C~_{k,l}`, `2 <= k + l <= kmax`.
    pub pair: BTreeMap<(u32, u32), Rational>,
    pub kmax: u32,
}

impl TildeTables {
    /// The block-model profile obtained by using `C~_{k,l}` as pair table.
    pub fn as_block_profile(&self) -> MomentProfile {
        let mut p = MomentProfile::empty(self.kmax);
        p.pair_table = self.pair.clone();
        p.scalar_table = self.first.clone();
        p
    }
}

fn scalar_with_conventions(table: &BTreeMap<u32, Rational>, k: u32) -> Result<Rational> {
    match k {
        0 => Ok(Rational::one()),
        1 => Ok(Rational::zero()),
        _ => table.get(&k).cloned().ok_or_else(|| Error::TableTooShort(format!("C_{k}"))),
    }
}

fn pair_with_conventions(table: &BTreeMap<(u32, u32), Rational>, k: u32, l: u32) -> Result<Rational> {
    match (k, l) {
        (0, 0) => Ok(Rational::one()),
        (1, 0) | (0, 1) => Ok(Rational::zero()),
        _ => table.get(&(k, l)).cloned().ok_or_else(|| Error::TableTooShort(format!("C_{{{k},{l}}}"))),
    }
}

/// Binomial convolutions
/// `C~_k^{(1)} = sum_r binom(k,r) C_r C_{k-r}`,
/// `C~_k^{(2)} = sum_r binom(k,r) (-1)^{k-r} C_r C_{k-r}` and
/// `C~_{k,l} = sum_{r,s} binom(k,r) binom(l,s) (-1)^{l-s} C_{r,s} C_{k-r,l-s}`,
/// with `C_0 = C_{0,0} = 1` and `C_1 = C_{1,0} = C_{0,1} = 0`.
pub fn tilde_transform(
    scalar: &BTreeMap<u32, Rational>,
    pair: &BTreeMap<(u32, u32), Rational>,
    kmax: u32,
) -> Result<TildeTables> {
    let mut first = BTreeMap::new();
    let mut second = BTreeMap::new();
    for k in 2..=kmax {
        let mut plus = Rational::zero();
        let mut minus = Rational::zero();
        for r in 0..=k {
            let term = Rational::from_integer(binomial(k as u64, r as u64))
                * scalar_with_conventions(scalar, r)?
                * scalar_with_conventions(scalar, k - r)?;
            if (k - r) % 2 == 0 {
                minus += &term;
            } else {
                minus -= &term;
            }
            plus += term;
        }
        first.insert(k, plus);
        second.insert(k, minus);
    }
    let mut tilde_pair = BTreeMap::new();
    for total in 2..=kmax {
        for k in 0..=total {
            let l = total - k;
            let mut acc = Rational::zero();
            for r in 0..=k {
                for s in 0..=l {
                    let coeff = binomial(k as u64, r as u64) * binomial(l as u64, s as u64);
                    let term = Rational::from_integer(coeff)
                        * pair_with_conventions(pair, r, s)?
                        * pair_with_conventions(pair, k - r, l - s)?;
                    if (l - s) % 2 == 0 {
                        acc += term;
                    } else {
                        acc -= term;
                    }
                }
            }
            tilde_pair.insert((k, l), acc);
        }
    }
    Ok(TildeTables { first, second, pair: tilde_pair, kmax })
}

/// Pair table of `(x, x)` for a single entry `x`: `C_{r,s} = C_{r+s}`.
///
/// Feeding this to [`tilde_transform`] makes `C~_{k,l}` the joint constants of
/// `(x + y, x - y)` for independent copies `x`, `y`, which is what the blocks
/// of a reduced centrosymmetric matrix hold entrywise.
pub fn centrosymmetric_pair_table(scalar: &BTreeMap<u32, Rational>, kmax: u32) -> Result<BTreeMap<(u32, u32), Rational>> {
    let mut out = BTreeMap::new();
    for total in 2..=kmax {
        let c = scalar_with_conventions(scalar, total)?;
        for k in 0..=total {
            out.insert((k, total - k), c.clone());
        }
    }
    Ok(out)
}

/// Tilde tables for a scalar profile of a centrosymmetric matrix.
pub fn centrosymmetric_tilde(profile: &MomentProfile) -> Result<TildeTables> {
    let pair = centrosymmetric_pair_table(&profile.scalar_table, profile.kmax)?;
    tilde_transform(&profile.scalar_table, &pair, profile.kmax)
}

/// Embeds an iid scalar profile into the pair framework: `C_{k,0} = C_{0,k} = C_k`
/// and `C_{k,l} = 0` when both `k, l >= 1`.
pub fn degenerate_profile_of(scalar: &BTreeMap<u32, Rational>, kmax: u32) -> MomentProfile {
    let mut p = MomentProfile::empty(kmax);
    for total in 2..=kmax {
        let c = scalar.get(&total).cloned().unwrap_or_else(Rational::zero);
        for k in 0..=total {
            let l = total - k;
            let v = if k == 0 || l == 0 { c.clone() } else { Rational::zero() };
            p.pair_table.insert((k, l), v);
        }
    }
    p.scalar_table = (2..=kmax)
        .map(|k| (k, scalar.get(&k).cloned().unwrap_or_else(Rational::zero)))
        .collect();
    p
}

// ---------------------------------------------------------------------------
// JSON documents
// ---------------------------------------------------------------------------

/// Serialized [`MomentProfile`]. Rationals are `[num, den]`; tables are
/// `pair_table: [[k, l, num, den], ...]` and `scalar_table: [[k, num, den], ...]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileDocument {
    pub alpha: [i64; 2],
    #[serde(default = "default_kmax")]
    pub kmax: u32,
    #[serde(default)]
    pub pair_table: Vec<[i64; 4]>,
    #[serde(default)]
    pub scalar_table: Vec<[i64; 3]>,
    #[serde(default = "default_true")]
    pub diagonal_bounded: bool,
}

fn default_kmax() -> u32 {
    DEFAULT_KMAX
}

fn default_true() -> bool {
    true
}

fn frac(num: i64, den: i64) -> Option<Rational> {
    (den != 0).then(|| rat(num, den))
}

fn to_pair(r: &Rational) -> Result<[i64; 2]> {
    match (r.numer().to_i64(), r.denom().to_i64()) {
        (Some(n), Some(d)) => Ok([n, d]),
        _ => Err(Error::Parse(format!("{} does not fit a 64-bit fraction", fmt_rational(r)))),
    }
}

impl ProfileDocument {
    pub fn from_profile(p: &MomentProfile) -> Result<Self> {
        Ok(Self {
            alpha: to_pair(&p.alpha)?,
            kmax: p.kmax,
            pair_table: p
                .pair_table
                .iter()
                .map(|(&(k, l), v)| to_pair(v).map(|[n, d]| [k as i64, l as i64, n, d]))
                .collect::<Result<_>>()?,
            scalar_table: p
                .scalar_table
                .iter()
                .map(|(&k, v)| to_pair(v).map(|[n, d]| [k as i64, n, d]))
                .collect::<Result<_>>()?,
            diagonal_bounded: p.diagonal_bounded,
        })
    }

    /// Converts to a profile, reporting zero denominators and malformed keys.
    pub fn to_profile(&self) -> std::result::Result<MomentProfile, Vec<Violation>> {
        let mut bad = Vec::new();
        let alpha = frac(self.alpha[0], self.alpha[1]);
        if alpha.is_none() {
            bad.push(Violation::NonFiniteValue { table: "alpha", key: "alpha".into() });
        }
        let mut p = MomentProfile::empty(self.kmax);
        p.diagonal_bounded = self.diagonal_bounded;
        for &[k, l, n, d] in &self.pair_table {
            match (u32::try_from(k), u32::try_from(l), frac(n, d)) {
                (Ok(k), Ok(l), Some(v)) => {
                    p.pair_table.insert((k, l), v);
                }
                (Ok(_), Ok(_), None) => {
                    bad.push(Violation::NonFiniteValue { table: "pair_table", key: format!("({k},{l})") })
                }
                _ => bad.push(Violation::BeyondKmax { table: "pair_table", key: format!("({k},{l})"), kmax: self.kmax }),
            }
        }
        for &[k, n, d] in &self.scalar_table {
            match (u32::try_from(k), frac(n, d)) {
                (Ok(k), Some(v)) => {
                    p.scalar_table.insert(k, v);
                }
                (Ok(_), None) => bad.push(Violation::NonFiniteValue { table: "scalar_table", key: format!("{k}") }),
                _ => bad.push(Violation::BeyondKmax { table: "scalar_table", key: format!("{k}"), kmax: self.kmax }),
            }
        }
        if let Some(a) = alpha {
            p.alpha = a;
        }
        if bad.is_empty() {
            Ok(p)
        } else {
            Err(bad)
        }
    }
}

/// Serialized entry law. Pair atoms are `[xi_num, xi_den, eta_num, eta_den, p_num, p_den]`,
/// scalar and diagonal atoms `[v_num, v_den, p_num, p_den]`, activation `[q_num, q_den]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawDocument {
    Pair { activation: [i64; 2], atoms: Vec<[i64; 6]>, diagonal: Vec<[i64; 4]> },
    Scalar { activation: [i64; 2], atoms: Vec<[i64; 4]> },
    StandardNormal,
}

/// A concrete entry law of either shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EntryLaw {
    Pair(SparsePairLaw),
    Scalar(ScalarLaw),
}

impl EntryLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            EntryLaw::Pair(l) => l.validate(),
            EntryLaw::Scalar(l) => l.validate(),
        }
    }

    /// Limit constants realized by this law.
    pub fn profile(&self, kmax: u32) -> Result<MomentProfile> {
        match self {
            EntryLaw::Pair(l) => profile_of_sparse_law(l, kmax),
            EntryLaw::Scalar(l) => profile_of_scalar_law(l, kmax),
        }
    }
}

fn need(v: Option<Rational>, what: &str) -> Result<Rational> {
    v.ok_or_else(|| Error::InvalidLaw(format!("{what}: zero denominator")))
}

impl LawDocument {
    pub fn to_law(&self) -> Result<EntryLaw> {
        let law = match self {
            LawDocument::Pair { activation, atoms, diagonal } => EntryLaw::Pair(SparsePairLaw {
                activation: need(frac(activation[0], activation[1]), "activation")?,
                atoms: atoms
                    .iter()
                    .map(|a| {
                        Ok(PairAtom {
                            xi: need(frac(a[0], a[1]), "xi")?,
                            eta: need(frac(a[2], a[3]), "eta")?,
                            prob: need(frac(a[4], a[5]), "probability")?,
                        })
                    })
                    .collect::<Result<_>>()?,
                diagonal: diagonal
                    .iter()
                    .map(|a| {
                        Ok(ScalarAtom {
                            value: need(frac(a[0], a[1]), "diagonal value")?,
                            prob: need(frac(a[2], a[3]), "diagonal probability")?,
                        })
                    })
                    .collect::<Result<_>>()?,
            }),
            LawDocument::Scalar { activation, atoms } => EntryLaw::Scalar(ScalarLaw::Sparse(SparseScalarLaw {
                activation: need(frac(activation[0], activation[1]), "activation")?,
                atoms: atoms
                    .iter()
                    .map(|a| {
                        Ok(ScalarAtom {
                            value: need(frac(a[0], a[1]), "value")?,
                            prob: need(frac(a[2], a[3]), "probability")?,
                        })
                    })
                    .collect::<Result<_>>()?,
            })),
            LawDocument::StandardNormal => EntryLaw::Scalar(ScalarLaw::StandardNormal),
        };
        law.validate()?;
        Ok(law)
    }

    pub fn from_law(law: &EntryLaw) -> Result<Self> {
        let scalar_atoms = |atoms: &[ScalarAtom]| -> Result<Vec<[i64; 4]>> {
            atoms
                .iter()
                .map(|a| {
                    let [vn, vd] = to_pair(&a.value)?;
                    let [pn, pd] = to_pair(&a.prob)?;
                    Ok([vn, vd, pn, pd])
                })
                .collect()
        };
        Ok(match law {
            EntryLaw::Pair(l) => LawDocument::Pair {
                activation: to_pair(&l.activation)?,
                atoms: l
                    .atoms
                    .iter()
                    .map(|a| {
                        let [xn, xd] = to_pair(&a.xi)?;
                        let [en, ed] = to_pair(&a.eta)?;
                        let [pn, pd] = to_pair(&a.prob)?;
                        Ok([xn, xd, en, ed, pn, pd])
                    })
                    .collect::<Result<_>>()?,
                diagonal: scalar_atoms(&l.diagonal)?,
            },
            EntryLaw::Scalar(ScalarLaw::Sparse(l)) => {
                LawDocument::Scalar { activation: to_pair(&l.activation)?, atoms: scalar_atoms(&l.atoms)? }
            }
            EntryLaw::Scalar(ScalarLaw::StandardNormal) => LawDocument::StandardNormal,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sign_law_moment_oracle(rho: &Rational, k: u32, l: u32) -> Rational {
        // average over the four (xi, eta) sign atoms
        let mut acc = Rational::zero();
        for &(x, y) in &[(1i64, 1i64), (1, -1), (-1, 1), (-1, -1)] {
            let p = if x == y { (Rational::one() + rho) / int(4) } else { (Rational::one() - rho) / int(4) };
            acc += p * int(x.pow(k)) * int(y.pow(l));
        }
        acc
    }

    #[test]
    fn validate_accepts_unit_variance_and_rejects_mismatch() {
        let p = MomentProfile::light_pair(rat(1, 2), 8);
        assert!(validate_profile(&p, Model::Elliptic).is_ok());

        let mut bad = p.clone();
        bad.pair_table.insert((2, 0), int(2));
        let v = validate_profile(&bad, Model::Elliptic).unwrap_err();
        assert!(matches!(v[0], Violation::VarianceMismatch { .. }));
    }

    #[test]
    fn validate_reports_missing_pair_table() {
        let p = MomentProfile::light_scalar(8);
        let v = validate_profile(&p, Model::Elliptic).unwrap_err();
        assert!(v.iter().all(|x| matches!(x, Violation::MissingEntry { table: "pair_table", .. })));
        assert!(validate_profile(&p, Model::Iid).is_ok());
    }

    #[test]
    fn validate_rejects_entries_beyond_kmax() {
        let mut p = MomentProfile::light_scalar(4);
        p.scalar_table.insert(6, int(1));
        let v = validate_profile(&p, Model::Circulant).unwrap_err();
        assert!(matches!(v[0], Violation::BeyondKmax { .. }));
    }

    #[test]
    fn non_finite_document_values_are_reported() {
        let doc = ProfileDocument {
            alpha: [1, 1],
            kmax: 2,
            pair_table: vec![[2, 0, 1, 0]],
            scalar_table: vec![],
            diagonal_bounded: true,
        };
        let v = doc.to_profile().unwrap_err();
        assert!(matches!(v[0], Violation::NonFiniteValue { .. }));
    }

    #[test]
    fn correlated_sign_law_profile() {
        let rho = rat(1, 3);
        let law = design_correlated_sign_law(&rho).unwrap();
        let p = profile_of_sparse_law(&law, 6).unwrap();
        assert_eq!(p.pair(1, 1).unwrap(), rho);
        assert_eq!(p.pair(2, 2).unwrap(), int(1));
        assert_eq!(p.pair(2, 1).unwrap(), int(0));
        for total in 2..=6 {
            for k in 0..=total {
                assert_eq!(p.pair(k, total - k).unwrap(), sign_law_moment_oracle(&rho, k, total - k));
            }
        }
    }

    #[test]
    fn independent_signs_have_no_correlation() {
        let law = design_correlated_sign_law(&int(0)).unwrap();
        assert_eq!(profile_of_sparse_law(&law, 4).unwrap().pair(1, 1).unwrap(), int(0));
    }

    #[test]
    fn design_atoms_for_rho_half_and_one() {
        let law = design_correlated_sign_law(&rat(1, 2)).unwrap();
        let probs: Vec<_> = law.atoms.iter().map(|a| a.prob.clone()).collect();
        assert_eq!(probs, vec![rat(3, 8), rat(1, 8), rat(1, 8), rat(3, 8)]);

        let full = design_correlated_sign_law(&int(1)).unwrap();
        assert!(full.atoms.iter().all(|a| a.xi == a.eta));
        assert!(design_correlated_sign_law(&rat(3, 2)).is_err());
    }

    #[test]
    fn tilde_transform_light_profile() {
        let p = MomentProfile::light_scalar(8);
        let pair = centrosymmetric_pair_table(&p.scalar_table, 8).unwrap();
        let t = tilde_transform(&p.scalar_table, &pair, 8).unwrap();
        assert_eq!(t.first[&2], int(2));
        assert_eq!(t.second[&2], int(2));
        for k in [3, 5, 7] {
            assert_eq!(t.first[&k], int(0));
            assert_eq!(t.second[&k], int(0));
        }
        assert_eq!(t.pair[&(1, 1)], int(0));
    }

    #[test]
    fn tilde_pair_vanishes_at_variance_scale_for_any_c11() {
        let p = MomentProfile::light_pair(rat(-2, 7), 4);
        let t = tilde_transform(&p.scalar_table, &p.pair_table, 4).unwrap();
        assert_eq!(t.pair[&(1, 1)], int(0));
    }

    #[test]
    fn tilde_second_matches_difference_expansion() {
        // E[(x - y)^k] for independent x, y with moments c_r: sum binom(k,r) (-1)^(k-r) c_r c_(k-r)
        let scalar: BTreeMap<u32, Rational> =
            [(2, int(1)), (3, int(5)), (4, int(7))].into_iter().collect();
        let t = tilde_transform(&scalar, &centrosymmetric_pair_table(&scalar, 4).unwrap(), 4).unwrap();
        assert_eq!(t.second[&3], int(0));
        assert_eq!(t.first[&3], int(10));
        assert_eq!(t.first[&4], int(2 * 7 + 6));
        assert_eq!(t.second[&4], int(2 * 7 + 6));
        assert_eq!(t.pair[&(3, 0)], t.first[&3]);
        assert_eq!(t.pair[&(0, 3)], t.second[&3]);
    }

    #[test]
    fn degenerate_profile_kills_mixed_entries() {
        let scalar: BTreeMap<u32, Rational> = [(2, int(1)), (4, rat(5, 2))].into_iter().collect();
        let p = degenerate_profile_of(&scalar, 4);
        assert_eq!(p.pair(1, 1).unwrap(), int(0));
        assert_eq!(p.pair(2, 0).unwrap(), int(1));
        assert_eq!(p.pair(4, 0).unwrap(), rat(5, 2));
        assert_eq!(p.pair(2, 2).unwrap(), int(0));
        assert_eq!(p.pair(3, 0).unwrap(), int(0));
        assert!(validate_profile(&p, Model::Elliptic).is_ok());
    }

    #[test]
    fn law_document_round_trip() {
        let law = EntryLaw::Pair(design_correlated_sign_law(&rat(1, 2)).unwrap());
        let doc = LawDocument::from_law(&law).unwrap();
        let text = serde_json::to_string(&doc).unwrap();
        let back: LawDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_law().unwrap(), law);
    }

    #[test]
    fn skewed_law_constants() {
        let law = ScalarLaw::Sparse(SparseScalarLaw::skewed());
        let p = profile_of_scalar_law(&law, 4).unwrap();
        assert_eq!(p.scalar(2).unwrap(), int(1));
        assert_eq!(p.scalar(3).unwrap(), int(1));
        assert_eq!(p.scalar(4).unwrap(), int(3));
    }

    #[test]
    fn model_parsing() {
        assert_eq!("block2".parse::<Model>().unwrap(), Model::Block);
        assert!("toeplitz".parse::<Model>().is_err());
    }
}
