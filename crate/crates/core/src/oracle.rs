//! Exact finite-N expectations computed from the atoms of an entry law.
//!
//! Two independent routes are provided: partition sums weighted by falling
//! factorials (polynomial in `N`), and brute-force enumeration of index tuples
//! (exponential, small `N` only). Values are elements of `Q(sqrt N)` because
//! bounded diagonal entries and Gaussian odd traces contribute half-integer
//! powers of `N`.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::moment_model::{atom_moment, EntryLaw, Model, ScalarLaw, SparsePairLaw, SparseScalarLaw};
use crate::numeric::{falling_factorial, Rational, Surd};
use crate::partitions::enumerate_set_partitions;
use crate::trace_graph::{graph_of_partition, stats};

pub const MAX_ORACLE_ORDER: usize = 6;
pub const MAX_ORACLE_N: u64 = 1_000_000;
/// Upper bound on the number of tuples a brute-force enumeration may visit.
pub const MAX_ENUMERATION: u64 = 50_000_000;

fn double_factorial_odd(p: u32) -> BigInt {
    // (p-1)!! for even p
    let mut acc = BigInt::one();
    let mut m = p as i64 - 1;
    while m > 1 {
        acc *= BigInt::from(m);
        m -= 2;
    }
    acc
}

/// Finite-N moments of the scaled entries `a = x / sqrt(N)`.
#[derive(Clone, Debug)]
pub struct ExactMomentTable {
    pub n: u64,
    law: EntryLaw,
}

impl ExactMomentTable {
    pub fn new(law: &EntryLaw, n: u64) -> Result<Self> {
        law.validate()?;
        if n == 0 || n > MAX_ORACLE_N {
            return Err(out_of_range("N", n, format!("1..={MAX_ORACLE_N}")));
        }
        Ok(Self { n, law: law.clone() })
    }

    fn n_rat(&self) -> Rational {
        Rational::from_integer(BigInt::from(self.n))
    }

    fn pair_law(&self) -> Result<&SparsePairLaw> {
        match &self.law {
            EntryLaw::Pair(l) => Ok(l),
            EntryLaw::Scalar(_) => Err(Error::InvalidLaw("this model needs a pair law".into())),
        }
    }

    /// `E[a^k b^l]` for an off-diagonal pair.
    pub fn pair(&self, k: u32, l: u32) -> Result<Surd> {
        let law = self.pair_law()?;
        if k + l == 0 {
            return Ok(Surd::one(self.n));
        }
        Ok(Surd::from_rational(&law.activation * law.atom_moment(k, l) / self.n_rat(), self.n))
    }

    /// `E[a_ii^p]` for the bounded diagonal of a pair law: `E[d^p] N^{-p/2}`.
    pub fn diagonal(&self, p: u32) -> Result<Surd> {
        let law = self.pair_law()?;
        Ok(Surd::scaled_power(atom_moment(&law.diagonal, p), -(p as i64), self.n))
    }

    /// `E[a^p]` for one coordinate of a pair law (0 = first, 1 = second), or for a scalar law.
    pub fn scalar(&self, p: u32, coordinate: usize) -> Surd {
        match &self.law {
            EntryLaw::Pair(l) => {
                if p == 0 {
                    return Surd::one(self.n);
                }
                let m = if coordinate == 0 { l.atom_moment(p, 0) } else { l.atom_moment(0, p) };
                Surd::from_rational(&l.activation * m / self.n_rat(), self.n)
            }
            EntryLaw::Scalar(ScalarLaw::Sparse(l)) => sparse_scaled(l, p, self.n),
            EntryLaw::Scalar(ScalarLaw::StandardNormal) => {
                if p % 2 == 1 {
                    Surd::zero(self.n)
                } else {
                    Surd::scaled_power(Rational::from_integer(double_factorial_odd(p)), -(p as i64), self.n)
                }
            }
        }
    }

    /// Unscaled `E[x^p]` of a scalar law.
    pub fn raw_scalar(&self, p: u32) -> Surd {
        let scaled = self.scalar(p, 0);
        &scaled * &Surd::scaled_power(Rational::one(), p as i64, self.n)
    }
}

fn sparse_scaled(l: &SparseScalarLaw, p: u32, n: u64) -> Surd {
    if p == 0 {
        return Surd::one(n);
    }
    Surd::from_rational(&l.activation * l.atom_moment(p) / Rational::from_integer(BigInt::from(n)), n)
}

fn check_model_law(model: Model, law: &EntryLaw) -> Result<()> {
    let ok = match model {
        Model::Elliptic | Model::Block => matches!(law, EntryLaw::Pair(_)),
        Model::Iid | Model::Centrosymmetric | Model::Circulant => matches!(law, EntryLaw::Scalar(_)),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidLaw(format!("model {model} does not accept this law shape")))
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                rec(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

fn exchangeable(law: &SparsePairLaw, kmax: u32) -> bool {
    (0..=kmax).all(|k| (0..=kmax - k).all(|l| law.atom_moment(k, l) == law.atom_moment(l, k)))
}

/// Exact `E[Tr(A^k) / N]` (block model: both blocks over the block size;
/// circulant: `E[Tr(C^k)]`).
///
/// Graph models use the partition sum `sum_pi (N-1)!/(N-|pi|)! delta_N(T_pi)`;
/// the centrosymmetric model falls back to tuple enumeration and therefore
/// only accepts small `N`.
pub fn exact_trace_mean(model: Model, law: &EntryLaw, n: u64, k: usize) -> Result<Surd> {
    check_model_law(model, law)?;
    if !(1..=MAX_ORACLE_ORDER).contains(&k) {
        return Err(out_of_range("k", k, format!("1..={MAX_ORACLE_ORDER}")));
    }
    let table = ExactMomentTable::new(law, n)?;
    match model {
        Model::Circulant => exact_circulant_trace_mean(law, n, k),
        Model::Centrosymmetric => brute_trace_mean(model, law, n, k),
        Model::Elliptic | Model::Iid | Model::Block => {
            let partitions = enumerate_set_partitions(k)?;
            let symmetric = match law {
                EntryLaw::Pair(l) => exchangeable(l, k as u32),
                EntryLaw::Scalar(_) => true,
            };
            let n_rat = Rational::from_integer(BigInt::from(n));
            let terms: Vec<Result<Surd>> = partitions
                .par_iter()
                .map(|pi| {
                    let v = pi.block_count();
                    let count = falling_factorial(n, v as u64);
                    if count.is_zero() {
                        return Ok(Surd::zero(n));
                    }
                    let weight = Rational::from_integer(count) / &n_rat;
                    let delta = partition_delta(model, &table, &graph_of_partition(pi), symmetric)?;
                    Ok(delta * &weight)
                })
                .collect();
            let mut total = Surd::zero(n);
            for t in terms {
                total += &t?;
            }
            Ok(total)
        }
    }
}

/// `E[prod_e a_e]` for one injective labelling of a graph, averaged over the
/// relative order of the labels when the pair law is not exchangeable.
fn partition_delta(model: Model, table: &ExactMomentTable, g: &crate::trace_graph::TraceGraph, symmetric: bool) -> Result<Surd> {
    let s = stats(g);
    let n = table.n;
    let loops = |coordinate: usize| -> Result<Surd> {
        let mut acc = Surd::one(n);
        for &p in s.loops_per_vertex.iter().filter(|&&p| p > 0) {
            let m = match model {
                Model::Elliptic | Model::Block => table.diagonal(p)?,
                _ => table.scalar(p, coordinate),
            };
            acc = &acc * &m;
        }
        Ok(acc)
    };
    match model {
        Model::Elliptic => {
            let orders = if symmetric { vec![(0..s.vertex_count).collect()] } else { permutations(s.vertex_count) };
            let mut sum = Surd::zero(n);
            for rank in &orders {
                let mut acc = Surd::one(n);
                for (&(u, v), c) in &s.pairs {
                    let (f, b) = (c.forward_total(), c.backward_total());
                    let m = if rank[u] < rank[v] { table.pair(f, b)? } else { table.pair(b, f)? };
                    acc = &acc * &m;
                }
                sum += &acc;
            }
            let avg = Rational::new(BigInt::one(), BigInt::from(orders.len()));
            Ok(&(sum * &avg) * &loops(0)?)
        }
        Model::Iid | Model::Block => {
            let coordinates: &[usize] = if model == Model::Block { &[0, 1] } else { &[0] };
            let mut total = Surd::zero(n);
            for &t in coordinates {
                let mut acc = loops(t)?;
                for c in s.pairs.values() {
                    let m = &table.scalar(c.forward_total(), t) * &table.scalar(c.backward_total(), t);
                    acc = &acc * &m;
                }
                total += &acc;
            }
            Ok(total)
        }
        _ => unreachable!("partition sums cover the graph models only"),
    }
}

/// Identity of the random variable behind one matrix entry, plus the slot
/// (orientation or block) the entry occupies in a dependent pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Var {
    /// Dependent pair; moments from the joint pair law.
    Pair(usize, usize),
    /// Bounded diagonal entry of a pair law (tagged by block).
    Diag(usize, usize),
    /// Independent entry with a scalar law, or one coordinate of a pair law.
    Scalar(usize, usize, usize),
}

fn entry_var(model: Model, n: usize, block: usize, i: usize, j: usize) -> (Var, usize) {
    match model {
        Model::Elliptic => {
            if i == j {
                (Var::Diag(0, i), 0)
            } else if i < j {
                (Var::Pair(i, j), 0)
            } else {
                (Var::Pair(j, i), 1)
            }
        }
        Model::Iid => (Var::Scalar(0, i, j), 0),
        Model::Block => {
            if i == j {
                (Var::Diag(block, i), 0)
            } else {
                (Var::Pair(i, j), block)
            }
        }
        Model::Centrosymmetric => {
            let mirror = (n - 1 - i, n - 1 - j);
            let rep = if (i, j) <= mirror { (i, j) } else { mirror };
            (Var::Scalar(0, rep.0, rep.1), 0)
        }
        Model::Circulant => (Var::Scalar(0, (i + n - j) % n, 0), 0),
    }
}

fn group_moment(table: &ExactMomentTable, var: Var, counts: [u32; 2]) -> Result<Surd> {
    match var {
        Var::Pair(..) => table.pair(counts[0], counts[1]),
        Var::Diag(..) => table.diagonal(counts[0]),
        Var::Scalar(..) => Ok(table.scalar(counts[0], 0)),
    }
}

/// `E[prod a_e]` over a list of (block, i, j) entries.
fn product_moment(model: Model, table: &ExactMomentTable, entries: &[(usize, usize, usize)]) -> Result<Surd> {
    let n = table.n as usize;
    let mut groups: Vec<(Var, [u32; 2])> = Vec::with_capacity(entries.len());
    for &(block, i, j) in entries {
        let (var, slot) = entry_var(model, n, block, i, j);
        match groups.iter_mut().find(|(v, _)| *v == var) {
            Some((_, c)) => c[slot] += 1,
            None => {
                let mut c = [0, 0];
                c[slot] = 1;
                groups.push((var, c));
            }
        }
    }
    let mut acc = Surd::one(table.n);
    for (var, counts) in groups {
        let m = group_moment(table, var, counts)?;
        if m.is_zero() {
            return Ok(m);
        }
        acc = &acc * &m;
    }
    Ok(acc)
}

fn blocks_of(model: Model) -> &'static [usize] {
    if model == Model::Block {
        &[0, 1]
    } else {
        &[0]
    }
}

/// Trace normalization: `N` for matrix models, `1` for the circulant model.
fn normalization(model: Model, n: u64) -> Rational {
    if model == Model::Circulant {
        Rational::one()
    } else {
        Rational::from_integer(BigInt::from(n))
    }
}

fn tuple_guard(n: u64, len: usize, factor: u64) -> Result<()> {
    let count = (n as f64).powi(len as i32) * factor as f64;
    if count > MAX_ENUMERATION as f64 {
        return Err(Error::ResourceGuard(format!("enumerating {n}^{len} index tuples exceeds {MAX_ENUMERATION}")));
    }
    Ok(())
}

fn for_each_tuple(n: usize, len: usize, mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let mut t = vec![0usize; len];
    loop {
        f(&t)?;
        let mut pos = len;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            t[pos] += 1;
            if t[pos] < n {
                break;
            }
            t[pos] = 0;
        }
    }
}

fn cycle_entries(block: usize, tuple: &[usize], out: &mut Vec<(usize, usize, usize)>) {
    let k = tuple.len();
    for m in 0..k {
        out.push((block, tuple[m], tuple[(m + 1) % k]));
    }
}

/// `E[Tr(A^k)] / normalization` by enumerating all `N^k` index tuples.
pub fn brute_trace_mean(model: Model, law: &EntryLaw, n: u64, k: usize) -> Result<Surd> {
    check_model_law(model, law)?;
    if k == 0 {
        return Err(out_of_range("k", k, ">= 1"));
    }
    tuple_guard(n, k, blocks_of(model).len() as u64)?;
    let table = ExactMomentTable::new(law, n)?;
    let mut total = Surd::zero(n);
    let mut entries = Vec::with_capacity(k);
    for &block in blocks_of(model) {
        for_each_tuple(n as usize, k, |t| {
            entries.clear();
            cycle_entries(block, t, &mut entries);
            total += &product_moment(model, &table, &entries)?;
            Ok(())
        })?;
    }
    Ok(total * &normalization(model, n).recip())
}

/// Exact `E[Tr(C^k)]` for a circulant matrix: `N^{1-k/2}` times the sum over
/// `(j_1..j_k)` with `sum j = 0 (mod N)` of `E[x_{j_1} ... x_{j_k}]`.
///
/// Tuples are enumerated with the last index solved from the congruence, and
/// grouped by their multiplicity pattern before the law is consulted.
pub fn exact_circulant_trace_mean(law: &EntryLaw, n: u64, k: usize) -> Result<Surd> {
    check_model_law(Model::Circulant, law)?;
    if !(1..=MAX_ORACLE_ORDER).contains(&k) {
        return Err(out_of_range("k", k, format!("1..={MAX_ORACLE_ORDER}")));
    }
    if n == 0 || n > 15 {
        return Err(out_of_range("N", n, "1..=15"));
    }
    let table = ExactMomentTable::new(law, n)?;
    let nn = n as usize;
    let mut patterns: HashMap<Vec<u32>, u64> = HashMap::new();
    let mut counts = vec![0u32; nn];
    for_each_tuple(nn, k - 1, |t| {
        let partial: usize = t.iter().sum();
        let last = (nn - partial % nn) % nn;
        counts.iter_mut().for_each(|c| *c = 0);
        for &j in t {
            counts[j] += 1;
        }
        counts[last] += 1;
        if counts.iter().all(|&c| c != 1) {
            let mut pattern: Vec<u32> = counts.iter().copied().filter(|&c| c > 0).collect();
            pattern.sort_unstable();
            *patterns.entry(pattern).or_default() += 1;
        }
        Ok(())
    })?;
    let mut total = Surd::zero(n);
    for (pattern, count) in patterns {
        let mut term = Surd::from_rational(Rational::from_integer(BigInt::from(count)), n);
        for &m in &pattern {
            term = &term * &table.raw_scalar(m);
        }
        total += &term;
    }
    Ok(&total * &Surd::scaled_power(Rational::one(), 2 - k as i64, n))
}

/// Exact `Cov(Z_N(k), Z_N(l))` with `Z_N(k) = (Tr(A^k) - E Tr(A^k)) / sqrt(N)`,
/// by enumerating all index tuples of both traces.
pub fn exact_fluct_covariance_small(model: Model, law: &EntryLaw, n: u64, k: usize, l: usize) -> Result<Surd> {
    check_model_law(model, law)?;
    if n == 0 || n > 8 {
        return Err(out_of_range("N", n, "1..=8"));
    }
    for v in [k, l] {
        if !(1..=3).contains(&v) {
            return Err(out_of_range("order", v, "1..=3"));
        }
    }
    let table = ExactMomentTable::new(law, n)?;
    let nn = n as usize;
    let blocks = blocks_of(model);
    let mean = |k: usize| -> Result<Surd> {
        let mut total = Surd::zero(n);
        let mut entries = Vec::new();
        for &b in blocks {
            for_each_tuple(nn, k, |t| {
                entries.clear();
                cycle_entries(b, t, &mut entries);
                total += &product_moment(model, &table, &entries)?;
                Ok(())
            })?;
        }
        Ok(total)
    };
    let mut joint = Surd::zero(n);
    let mut entries = Vec::new();
    for &b1 in blocks {
        for &b2 in blocks {
            for_each_tuple(nn, k + l, |t| {
                entries.clear();
                cycle_entries(b1, &t[..k], &mut entries);
                cycle_entries(b2, &t[k..], &mut entries);
                joint += &product_moment(model, &table, &entries)?;
                Ok(())
            })?;
        }
    }
    let cov = joint - &mean(k)? * &mean(l)?;
    Ok(cov * &Rational::new(BigInt::one(), BigInt::from(n)))
}

/// Exact `Cov(Z_N(k), Z_N(l))` for the graph models at any `N`, by a set
/// partition sum over the `k + l` indices of both traces weighted by
/// `N!/(N-|pi|)!`.
pub fn exact_fluct_covariance(model: Model, law: &EntryLaw, n: u64, k: usize, l: usize) -> Result<Surd> {
    check_model_law(model, law)?;
    if !matches!(model, Model::Elliptic | Model::Iid | Model::Block) {
        return Err(Error::Unsupported {
            model: model.to_string(),
            reason: "partition sums need a model whose moments depend only on index coincidences".into(),
        });
    }
    for v in [k, l] {
        if !(1..=4).contains(&v) {
            return Err(out_of_range("order", v, "1..=4"));
        }
    }
    let table = ExactMomentTable::new(law, n)?;
    let symmetric = match law {
        EntryLaw::Pair(p) => exchangeable(p, (k + l) as u32),
        EntryLaw::Scalar(_) => true,
    };
    if !symmetric && k + l > 6 {
        return Err(out_of_range("k + l for a non-exchangeable law", k + l, "<= 6"));
    }
    let raw = |lengths: &[usize]| -> Result<Surd> {
        let total: usize = lengths.iter().sum();
        let partitions = enumerate_set_partitions(total)?;
        let terms: Vec<Result<Surd>> = partitions
            .par_iter()
            .map(|pi| {
                let v = pi.block_count();
                let count = falling_factorial(n, v as u64);
                if count.is_zero() {
                    return Ok(Surd::zero(n));
                }
                let orders = if symmetric || model != Model::Elliptic {
                    vec![(0..v).collect()]
                } else {
                    permutations(v)
                };
                let mut sum = Surd::zero(n);
                let mut entries = Vec::new();
                let mut tuple = Vec::new();
                for rank in &orders {
                    tuple.clear();
                    tuple.extend(pi.labels().iter().map(|&b| rank[b]));
                    for_each_block_choice(model, lengths.len(), |choice| {
                        entries.clear();
                        let mut start = 0;
                        for (cycle, &len) in lengths.iter().enumerate() {
                            cycle_entries(choice[cycle], &tuple[start..start + len], &mut entries);
                            start += len;
                        }
                        sum += &product_moment(model, &table, &entries)?;
                        Ok(())
                    })?;
                }
                let weight = Rational::new(count, BigInt::from(orders.len()));
                Ok(sum * &weight)
            })
            .collect();
        let mut total = Surd::zero(n);
        for t in terms {
            total += &t?;
        }
        Ok(total)
    };
    let cov = raw(&[k, l])? - &raw(&[k])? * &raw(&[l])?;
    Ok(cov * &Rational::new(BigInt::one(), BigInt::from(n)))
}

fn for_each_block_choice(model: Model, cycles: usize, mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let blocks = blocks_of(model);
    for_each_tuple(blocks.len(), cycles, |t| {
        let choice: Vec<usize> = t.iter().map(|&i| blocks[i]).collect();
        f(&choice)
    })
}

/// Exact `Var(Z_N(2))` for a circulant matrix at any `N`.
///
/// `Tr(C^2) = sum_j x_j x_{-j}`: the self-paired indices (`0`, and `N/2` for
/// even `N`) contribute `Var(x^2)` each, every other pair `{j, N-j}`
/// contributes `4 E[x^2]^2`.
pub fn exact_circulant_z2_variance(law: &EntryLaw, n: u64) -> Result<Surd> {
    check_model_law(Model::Circulant, law)?;
    let table = ExactMomentTable::new(law, n)?;
    let second = table.raw_scalar(2);
    let second_sq = &second * &second;
    let selfs = if n % 2 == 0 { 2 } else { 1 }.min(n);
    let pairs = (n - selfs) / 2;
    let var_sq = table.raw_scalar(4) - second_sq.clone();
    let total = var_sq * &Rational::from_integer(BigInt::from(selfs))
        + second_sq * &Rational::from_integer(BigInt::from(4 * pairs));
    Ok(total * &Rational::new(BigInt::one(), BigInt::from(n)))
}

/// One exported oracle value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub quantity: String,
    pub model: Model,
    pub n: u64,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    /// Exact value, `p/q` or `a + b*sqrt(N)`.
    pub value: String,
    pub approx: f64,
    pub method: String,
}

/// Collection of oracle values with provenance, as consumed by reports and tests.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleTable {
    pub schema: u32,
    pub entries: Vec<OracleEntry>,
}

impl OracleTable {
    pub fn new() -> Self {
        Self { schema: 1, entries: Vec::new() }
    }

    pub fn push(&mut self, quantity: &str, model: Model, n: u64, k: usize, l: Option<usize>, value: &Surd, method: &str) {
        self.entries.push(OracleEntry {
            quantity: quantity.into(),
            model,
            n,
            k,
            l,
            value: value.to_string(),
            approx: value.to_f64(),
            method: method.into(),
        });
    }
}
