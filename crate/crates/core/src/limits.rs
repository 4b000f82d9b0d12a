//! Exact limits of normalized traces and of their fluctuation covariances.
//!
//! A limiting trace moment is a sum over partitions `pi` of `tau[T_pi]`, where
//! `tau` is a product of limit constants over the vertex pairs of `T_pi` when
//! the graph passes the model's tree rule and zero otherwise. Covariances sum
//! `tau` over the gluings of two such graphs that share an edge.

use std::collections::HashMap;
use std::sync::RwLock;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::error::{out_of_range, Error, Result};
use crate::moment_model::{centrosymmetric_tilde, ensure_profile, Model, MomentProfile};
use crate::numeric::{factorial, fmt_rational, Rational};
use crate::partitions::{
    enumerate_cross_partitions, enumerate_integer_partitions_min2, enumerate_pair_partitions, enumerate_set_partitions,
};
use crate::trace_graph::{classify_stats, graph_of_partition, merge_under_cross_partition, stats, Classification, Color, GraphStats, TraceGraph, TreeRule};

/// Largest order accepted by [`limit_trace_moment`].
pub const MAX_MOMENT_ORDER: usize = 10;
/// Largest order accepted by [`covariance_trace`].
pub const MAX_COVARIANCE_ORDER: usize = 6;
/// Largest number of traces accepted by [`wick_joint`].
pub const MAX_WICK_ARITY: usize = 6;

/// Limit of a single graph term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LimitValue {
    Exact(Rational),
    ZeroExact,
    /// The term behaves like `N^exponent` up to bounded factors.
    SymbolicOrder(Rational),
}

/// `ZeroExact` when `g` has a pair joined by a single edge or a vertex with a
/// single loop; otherwise the order `|V| - 1 - alpha * p` with `p` the number
/// of reduced edges.
pub fn asymptotic_order(g: &TraceGraph, alpha: &Rational) -> LimitValue {
    let s = stats(g);
    if s.has_single_edge_pair() || s.has_single_loop() {
        return LimitValue::ZeroExact;
    }
    let v = Rational::from_integer(BigInt::from(s.vertex_count as i64 - 1));
    let p = Rational::from_integer(BigInt::from(s.reduced_edge_count));
    LimitValue::SymbolicOrder(v - alpha * p)
}

fn tree_rule(model: Model) -> Result<TreeRule> {
    match model {
        Model::Elliptic => Ok(TreeRule::Elliptic),
        Model::Iid => Ok(TreeRule::Iid),
        Model::Block | Model::Centrosymmetric => Ok(TreeRule::ColoredBlock),
        Model::Circulant => Err(Error::Unsupported {
            model: model.to_string(),
            reason: "circulant limits are not graph sums; use the circulant formulas".into(),
        }),
    }
}

/// Limit evaluator for one model and one profile, with a cache of graph values.
pub struct LimitCalculator {
    model: Model,
    profile: MomentProfile,
    /// Pair constants used by the colored rule: `C_{k,l}` for the block model,
    /// the convolved constants for the centrosymmetric model.
    block_pairs: std::collections::BTreeMap<(u32, u32), Rational>,
    cache: RwLock<HashMap<Vec<u32>, Rational>>,
}

impl LimitCalculator {
    pub fn new(model: Model, profile: &MomentProfile) -> Result<Self> {
        ensure_profile(profile, model)?;
        if !profile.is_critical() {
            return Err(out_of_range("alpha", fmt_rational(&profile.alpha), "1 (finite limits exist only at alpha = 1)"));
        }
        let block_pairs = match model {
            Model::Block => profile.pair_table.clone(),
            Model::Centrosymmetric => centrosymmetric_tilde(profile)?.pair,
            _ => Default::default(),
        };
        Ok(Self { model, profile: profile.clone(), block_pairs, cache: RwLock::new(HashMap::new()) })
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn profile(&self) -> &MomentProfile {
        &self.profile
    }

    fn block_pair(&self, k: u32, l: u32) -> Result<Rational> {
        match (k, l) {
            (0, 0) => Ok(Rational::one()),
            (1, 0) | (0, 1) => Ok(Rational::zero()),
            _ => self
                .block_pairs
                .get(&(k, l))
                .cloned()
                .ok_or_else(|| Error::TableTooShort(format!("block constant ({k},{l})"))),
        }
    }

    /// `tau` of a graph whose stats are known.
    fn tau_of_stats(&self, s: &GraphStats) -> Result<Rational> {
        let rule = tree_rule(self.model)?;
        if classify_stats(s, rule) != Classification::AdmissibleTree {
            return Ok(Rational::zero());
        }
        let mut acc = Rational::one();
        match rule {
            TreeRule::Elliptic => {
                for (&(k, l), &count) in &s.ordered_pair_counts {
                    acc *= num_traits::pow(self.profile.pair(k, l)?, count as usize);
                }
            }
            TreeRule::Iid => {
                for (&k, &count) in &s.unordered_counts {
                    acc *= num_traits::pow(self.profile.scalar(k)?, count as usize);
                }
            }
            TreeRule::ColoredBlock => {
                for (&(blue, red), &count) in &s.colored_pair_counts {
                    acc *= num_traits::pow(self.block_pair(blue, red)?, count as usize);
                }
            }
        }
        Ok(acc)
    }

    /// Limit of `E[tau_N[T]]` for a single graph (zero unless admissible).
    pub fn tau(&self, g: &TraceGraph) -> Result<Rational> {
        let key = g.key();
        if let Some(v) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(v.clone());
        }
        let v = self.tau_of_stats(&stats(g))?;
        self.cache.write().expect("cache lock").insert(key, v.clone());
        Ok(v)
    }

    fn colors(&self) -> &'static [Option<Color>] {
        if matches!(self.model, Model::Block | Model::Centrosymmetric) {
            &[Some(Color::Blue), Some(Color::Red)]
        } else {
            &[None]
        }
    }

    fn paint(g: &TraceGraph, c: Option<Color>) -> TraceGraph {
        match c {
            Some(c) => g.with_color(c),
            None => g.clone(),
        }
    }

    /// `lim E[Tr(A^k)/N]` (for the circulant model, `lim E[Tr(C^k)]`).
    pub fn limit_trace_moment(&self, k: usize) -> Result<Rational> {
        if !(1..=MAX_MOMENT_ORDER).contains(&k) {
            return Err(out_of_range("k", k, format!("1..={MAX_MOMENT_ORDER}")));
        }
        if self.model == Model::Circulant {
            return circulant_limit_moment(k, &self.profile);
        }
        let partitions = enumerate_set_partitions(k)?;
        let colors = self.colors();
        partitions
            .par_iter()
            .map(|pi| {
                let g = graph_of_partition(pi);
                let mut acc = Rational::zero();
                for &c in colors {
                    acc += self.tau(&Self::paint(&g, c))?;
                }
                Ok(acc)
            })
            .try_reduce(Rational::zero, |a, b| Ok(a + b))
    }

    /// Sum of `tau` over gluings of `g1` and `g2` that share at least one edge
    /// and pass the model's tree rule.
    pub fn covariance_graphs(&self, g1: &TraceGraph, g2: &TraceGraph) -> Result<Rational> {
        tree_rule(self.model)?;
        if stats(g1).has_loop() || stats(g2).has_loop() {
            return Ok(Rational::zero());
        }
        let sigmas = enumerate_cross_partitions(&[g1.vertex_count(), g2.vertex_count()])?;
        let graphs = [g1.clone(), g2.clone()];
        let mut acc = Rational::zero();
        for sigma in &sigmas {
            let (merged, shared) = merge_under_cross_partition(&graphs, sigma)?;
            if !shared {
                continue;
            }
            acc += self.tau(&merged)?;
        }
        Ok(acc)
    }

    /// Limiting `Cov(z(k), z(l))`.
    pub fn covariance_trace(&self, k: usize, l: usize) -> Result<Rational> {
        for v in [k, l] {
            if !(1..=MAX_COVARIANCE_ORDER).contains(&v) {
                return Err(out_of_range("covariance order", v, format!("1..={MAX_COVARIANCE_ORDER}")));
            }
        }
        if self.model == Model::Circulant {
            return Ok(circulant_covariance(k, l));
        }
        let loop_free = |k: usize| -> Result<Vec<TraceGraph>> {
            Ok(enumerate_set_partitions(k)?
                .iter()
                .map(graph_of_partition)
                .filter(|g| !stats(g).has_loop())
                .collect())
        };
        let left = loop_free(k)?;
        let right = loop_free(l)?;
        let colors = self.colors();
        let mut jobs = Vec::new();
        for g1 in &left {
            for g2 in &right {
                for &c1 in colors {
                    for &c2 in colors {
                        jobs.push((Self::paint(g1, c1), Self::paint(g2, c2)));
                    }
                }
            }
        }
        jobs.par_iter()
            .map(|(g1, g2)| self.covariance_graphs(g1, g2))
            .try_reduce(Rational::zero, |a, b| Ok(a + b))
    }

    /// Limiting `E[z(k_1) ... z(k_r)]` via Wick's formula.
    pub fn wick_joint(&self, ks: &[usize]) -> Result<Rational> {
        if ks.len() > MAX_WICK_ARITY {
            return Err(out_of_range("number of traces", ks.len(), format!("0..={MAX_WICK_ARITY}")));
        }
        let mut kernel: HashMap<(usize, usize), Rational> = HashMap::new();
        let mut total = Rational::zero();
        for pairing in enumerate_pair_partitions(ks.len())? {
            let mut term = Rational::one();
            for block in pairing.blocks() {
                let (a, b) = (ks[block[0]], ks[block[1]]);
                let key = (a.min(b), a.max(b));
                let c = match kernel.get(&key) {
                    Some(c) => c.clone(),
                    None => {
                        let c = self.covariance_trace(key.0, key.1)?;
                        kernel.insert(key, c.clone());
                        c
                    }
                };
                term *= c;
            }
            total += term;
        }
        Ok(total)
    }
}

pub fn tau(g: &TraceGraph, model: Model, profile: &MomentProfile) -> Result<Rational> {
    LimitCalculator::new(model, profile)?.tau(g)
}

/// `tau` for `alpha = 1`, the asymptotic order otherwise.
pub fn limit_of_graph(g: &TraceGraph, model: Model, profile: &MomentProfile) -> Result<LimitValue> {
    if !profile.is_critical() {
        return Ok(asymptotic_order(g, &profile.alpha));
    }
    let v = tau(g, model, profile)?;
    Ok(if v.is_zero() { LimitValue::ZeroExact } else { LimitValue::Exact(v) })
}

pub fn limit_trace_moment(model: Model, k: usize, profile: &MomentProfile) -> Result<Rational> {
    LimitCalculator::new(model, profile)?.limit_trace_moment(k)
}

pub fn covariance_graphs(g1: &TraceGraph, g2: &TraceGraph, model: Model, profile: &MomentProfile) -> Result<Rational> {
    LimitCalculator::new(model, profile)?.covariance_graphs(g1, g2)
}

pub fn covariance_trace(k: usize, l: usize, model: Model, profile: &MomentProfile) -> Result<Rational> {
    LimitCalculator::new(model, profile)?.covariance_trace(k, l)
}

pub fn wick_joint(ks: &[usize], model: Model, profile: &MomentProfile) -> Result<Rational> {
    LimitCalculator::new(model, profile)?.wick_joint(ks)
}

fn circulant_sum(k: usize, profile: &MomentProfile, symmetry_factor: bool) -> Result<Rational> {
    if !(1..=MAX_MOMENT_ORDER).contains(&k) {
        return Err(out_of_range("k", k, format!("1..={MAX_MOMENT_ORDER}")));
    }
    let kf = factorial(k as u64);
    let mut total = Rational::zero();
    for parts in enumerate_integer_partitions_min2(k) {
        let mut denom = BigInt::one();
        let mut product = Rational::one();
        for &m in &parts {
            denom *= factorial(m as u64);
            product *= profile.scalar(m as u32)?;
        }
        if symmetry_factor {
            let mut run = 1u64;
            for w in parts.windows(2) {
                if w[0] == w[1] {
                    run += 1;
                } else {
                    denom *= factorial(run);
                    run = 1;
                }
            }
            denom *= factorial(run);
        }
        total += Rational::new(kf.clone(), denom) * product;
    }
    Ok(total)
}

/// `lim E[Tr(C^k)]` for a circulant matrix: the sum over multisets
/// `{m_1, .., m_r}` with parts at least 2 of
/// `k! / prod m_a! * 1 / prod_s (number of parts equal to s)! * prod C_{m_a}`.
pub fn circulant_limit_moment(k: usize, profile: &MomentProfile) -> Result<Rational> {
    circulant_sum(k, profile, true)
}

/// The same sum without the `1 / prod (part multiplicity)!` factor.
///
/// Kept for comparison reports; enumeration at finite `N` converges to
/// [`circulant_limit_moment`], not to this value, once a part repeats.
pub fn circulant_limit_moment_uncorrected(k: usize, profile: &MomentProfile) -> Result<Rational> {
    circulant_sum(k, profile, false)
}

/// Circulant fluctuation kernel `k! * [k == l]`.
pub fn circulant_covariance(k: usize, l: usize) -> Rational {
    if k == l {
        Rational::from_integer(factorial(k as u64))
    } else {
        Rational::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moment_model::{degenerate_profile_of, design_correlated_sign_law, profile_of_sparse_law};
    use crate::numeric::{int, rat};
    use crate::partitions::SetPartition;

    fn sign_profile(rho: Rational, kmax: u32) -> MomentProfile {
        profile_of_sparse_law(&design_correlated_sign_law(&rho).unwrap(), kmax).unwrap()
    }

    fn graph(k: usize, blocks: &[&[usize]]) -> TraceGraph {
        let blocks: Vec<Vec<usize>> = blocks.iter().map(|b| b.iter().map(|m| m - 1).collect()).collect();
        graph_of_partition(&SetPartition::from_blocks(k, &blocks).unwrap())
    }

    #[test]
    fn tau_examples() {
        let p = MomentProfile::light_pair(rat(1, 3), 8);
        let two = graph(2, &[&[1], &[2]]);
        assert_eq!(tau(&two, Model::Elliptic, &p).unwrap(), rat(1, 3));
        let iid = MomentProfile::light_scalar(8);
        assert_eq!(tau(&two, Model::Iid, &iid).unwrap(), int(0));

        let mut q = sign_profile(rat(1, 2), 8);
        q.pair_table.insert((2, 2), rat(7, 5));
        let pairing = graph(4, &[&[1, 3], &[2, 4]]);
        assert_eq!(tau(&pairing, Model::Elliptic, &q).unwrap(), rat(7, 5));
    }

    #[test]
    fn elliptic_fourth_moment_formula() {
        let mut p = sign_profile(rat(1, 2), 8);
        p.pair_table.insert((2, 2), rat(3, 7));
        let c11 = p.pair(1, 1).unwrap();
        let expected = int(2) * &c11 * &c11 + rat(3, 7);
        assert_eq!(limit_trace_moment(Model::Elliptic, 4, &p).unwrap(), expected);
        assert_eq!(limit_trace_moment(Model::Elliptic, 2, &p).unwrap(), c11);
    }

    #[test]
    fn semicircle_moments() {
        let p = MomentProfile::wigner(10);
        let catalan = [1, 2, 5, 14, 42];
        for (j, c) in catalan.iter().enumerate() {
            assert_eq!(limit_trace_moment(Model::Elliptic, 2 * (j + 1), &p).unwrap(), int(*c));
        }
        for k in [1, 3, 5, 7, 9] {
            assert_eq!(limit_trace_moment(Model::Elliptic, k, &p).unwrap(), int(0));
        }
    }

    #[test]
    fn closed_walk_models_have_zero_limits() {
        let scalar = sign_profile(int(0), 8);
        for k in 1..=7 {
            assert!(limit_trace_moment(Model::Iid, k, &scalar).unwrap().is_zero());
            assert!(limit_trace_moment(Model::Block, k, &scalar).unwrap().is_zero());
            assert!(limit_trace_moment(Model::Centrosymmetric, k, &scalar).unwrap().is_zero());
        }
    }

    #[test]
    fn covariance_examples() {
        let mut p = sign_profile(rat(1, 2), 8);
        p.pair_table.insert((2, 2), rat(5, 3));
        assert_eq!(covariance_trace(2, 2, Model::Elliptic, &p).unwrap(), rat(10, 3));
        assert_eq!(covariance_trace(1, 1, Model::Elliptic, &p).unwrap(), int(0));
        assert_eq!(covariance_trace(1, 2, Model::Elliptic, &p).unwrap(), int(0));

        let loop_graph = graph(2, &[&[1, 2]]);
        let two = graph(2, &[&[1], &[2]]);
        assert_eq!(covariance_graphs(&loop_graph, &two, Model::Elliptic, &p).unwrap(), int(0));
        let single_loop = graph(1, &[&[1]]);
        assert_eq!(covariance_graphs(&single_loop, &single_loop, Model::Elliptic, &p).unwrap(), int(0));
    }

    #[test]
    fn covariance_is_symmetric() {
        let p = sign_profile(rat(1, 3), 8);
        for (k, l) in [(2, 3), (2, 4), (3, 4)] {
            assert_eq!(
                covariance_trace(k, l, Model::Elliptic, &p).unwrap(),
                covariance_trace(l, k, Model::Elliptic, &p).unwrap()
            );
        }
    }

    #[test]
    fn wick_examples() {
        let p = sign_profile(rat(1, 2), 8);
        let c = covariance_trace(2, 2, Model::Elliptic, &p).unwrap();
        assert_eq!(wick_joint(&[2, 2, 2, 2], Model::Elliptic, &p).unwrap(), int(3) * &c * &c);
        assert_eq!(wick_joint(&[2, 3, 2], Model::Elliptic, &p).unwrap(), int(0));
        assert_eq!(wick_joint(&[2, 3], Model::Elliptic, &p).unwrap(), covariance_trace(2, 3, Model::Elliptic, &p).unwrap());
    }

    #[test]
    fn iid_matches_degenerate_elliptic() {
        let scalar = crate::moment_model::profile_of_scalar_law(
            &crate::moment_model::ScalarLaw::Sparse(crate::moment_model::SparseScalarLaw::skewed()),
            6,
        )
        .unwrap();
        let degenerate = degenerate_profile_of(&scalar.scalar_table, 6);
        let iid = LimitCalculator::new(Model::Iid, &scalar).unwrap();
        let ell = LimitCalculator::new(Model::Elliptic, &degenerate).unwrap();
        for k in 1..=6 {
            for pi in enumerate_set_partitions(k).unwrap() {
                let g = graph_of_partition(&pi);
                assert_eq!(iid.tau(&g).unwrap(), ell.tau(&g).unwrap(), "{pi}");
            }
        }
    }

    #[test]
    fn circulant_formulas() {
        let light = MomentProfile::light_scalar(8);
        assert_eq!(circulant_limit_moment(2, &light).unwrap(), int(1));
        let mut ones = MomentProfile::light_scalar(8);
        for k in 2..=8 {
            ones.scalar_table.insert(k, int(1));
        }
        assert_eq!(circulant_limit_moment(3, &ones).unwrap(), int(1));
        assert_eq!(circulant_limit_moment(4, &ones).unwrap(), int(4));
        assert_eq!(circulant_limit_moment_uncorrected(4, &ones).unwrap(), int(7));
        // {6}: 1, {4,2}: 15, {3,3}: 20/2, {2,2,2}: 90/6
        assert_eq!(circulant_limit_moment(6, &ones).unwrap(), int(41));
        assert_eq!(circulant_covariance(2, 2), int(2));
        assert_eq!(circulant_covariance(1, 2), int(0));
        assert_eq!(circulant_covariance(1, 1), int(1));
    }

    #[test]
    fn asymptotic_order_examples() {
        let two = graph(2, &[&[1], &[2]]);
        // the two-vertex 2-cycle: one reduced edge
        assert_eq!(asymptotic_order(&two, &int(1)), LimitValue::SymbolicOrder(int(0)));
        assert_eq!(asymptotic_order(&two, &int(2)), LimitValue::SymbolicOrder(int(-1)));
        let single = TraceGraph::from_pairs(2, &[(0, 1), (1, 1), (1, 1)]).unwrap();
        assert_eq!(asymptotic_order(&single, &rat(1, 2)), LimitValue::ZeroExact);
    }

    #[test]
    fn non_critical_profiles_are_rejected_by_tau() {
        let mut p = MomentProfile::light_pair(int(0), 4);
        p.alpha = int(2);
        assert!(LimitCalculator::new(Model::Elliptic, &p).is_err());
        let two = graph(2, &[&[1], &[2]]);
        assert_eq!(limit_of_graph(&two, Model::Elliptic, &p).unwrap(), LimitValue::SymbolicOrder(int(-1)));
    }

    #[test]
    fn guards() {
        let p = MomentProfile::wigner(10);
        assert!(limit_trace_moment(Model::Elliptic, 11, &p).is_err());
        assert!(covariance_trace(7, 1, Model::Elliptic, &p).is_err());
        assert!(wick_joint(&[1; 7], Model::Elliptic, &p).is_err());
    }
}
