//! Seeded finite-N samplers for the five models, the orthogonal block
//! reduction of centrosymmetric matrices, and circulant spectra.
//!
//! Every stored value is a scaled entry `a_ij = x_ij / sqrt(N)`. For a sparse
//! law an active entry is `sqrt(N) * xi`, so its stored value is just `xi`.
//!
//! Randomness is counter based: row `i` draws from its own ChaCha stream
//! `(seed, i + 1)` (stream 0 feeds the circulant generator), and inactive
//! entries are skipped geometrically. Samples are therefore identical for any
//! thread count.

use std::io::{self, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moment_model::{EntryLaw, Model, ScalarAtom, ScalarLaw, SparsePairLaw};
use crate::numeric::to_f64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Storage {
    #[default]
    SparseCoo,
    Dense,
}

/// Everything needed to reproduce one sampled matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub kind: Model,
    /// Matrix size, except for the block model where it is the block size (the matrix is `2n x 2n`).
    pub n: usize,
    pub law: EntryLaw,
    pub seed: u64,
    pub storage: Storage,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidSpec("n must be at least 1".into()));
        }
        self.law.validate()?;
        let pair = matches!(self.law, EntryLaw::Pair(_));
        match self.kind {
            Model::Elliptic | Model::Block if !pair => {
                Err(Error::InvalidSpec(format!("{} needs a pair law", self.kind)))
            }
            Model::Iid | Model::Centrosymmetric | Model::Circulant if pair => {
                Err(Error::InvalidSpec(format!("{} needs a scalar law", self.kind)))
            }
            _ => Ok(()),
        }
    }

    /// Dimension of the sampled matrix.
    pub fn dim(&self) -> usize {
        if self.kind == Model::Block {
            2 * self.n
        } else {
            self.n
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MatrixData {
    /// Active entries sorted by `(row, col)`.
    Sparse(Vec<Triplet>),
    Dense(DMatrix<f64>),
    /// Unscaled generator `x_0 .. x_{N-1}`; `c_ij = x_{(i-j) mod N} / sqrt(N)`.
    Circulant { generator: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixSample {
    pub kind: Model,
    /// Size parameter `N` used for scaling (block size for the block model).
    pub n: usize,
    pub seed: u64,
    pub data: MatrixData,
}

impl MatrixSample {
    pub fn dim(&self) -> usize {
        if self.kind == Model::Block {
            2 * self.n
        } else {
            self.n
        }
    }

    /// Wraps an explicit dense matrix, e.g. for testing trace routines.
    pub fn from_dense(kind: Model, m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::ShapeMismatch(format!("{}x{} is not square", m.nrows(), m.ncols())));
        }
        let n = if kind == Model::Block { m.nrows() / 2 } else { m.nrows() };
        Ok(Self { kind, n, seed: 0, data: MatrixData::Dense(m) })
    }

    pub fn generator(&self) -> Option<&[f64]> {
        match &self.data {
            MatrixData::Circulant { generator } => Some(generator),
            _ => None,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        match &self.data {
            MatrixData::Dense(m) => m.clone(),
            MatrixData::Sparse(ts) => {
                let mut m = DMatrix::zeros(d, d);
                for t in ts {
                    m[(t.row, t.col)] += t.value;
                }
                m
            }
            MatrixData::Circulant { generator } => {
                let scale = (d as f64).sqrt();
                DMatrix::from_fn(d, d, |i, j| generator[(i + d - j) % d] / scale)
            }
        }
    }

    /// Nonzero entries in `(row, col)` order.
    pub fn triplets(&self) -> Vec<Triplet> {
        match &self.data {
            MatrixData::Sparse(ts) => ts.clone(),
            _ => {
                let m = self.to_dense();
                let mut out = Vec::new();
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        if m[(i, j)] != 0.0 {
                            out.push(Triplet { row: i, col: j, value: m[(i, j)] });
                        }
                    }
                }
                out
            }
        }
    }

    /// Writes `# kind N seed` followed by one `i j value` line per nonzero entry (0-based).
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# {} {} {}", self.kind, self.n, self.seed)?;
        for t in self.triplets() {
            writeln!(w, "{} {} {:e}", t.row, t.col, t.value)?;
        }
        Ok(())
    }
}

/// Independent ChaCha stream for one row (or the generator, stream 0).
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Atom sampler with cumulative probabilities.
struct AtomTable<T> {
    values: Vec<T>,
    cumulative: Vec<f64>,
}

impl<T: Copy> AtomTable<T> {
    fn new(items: impl Iterator<Item = (T, f64)>) -> Self {
        let mut values = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (v, p) in items {
            acc += p;
            values.push(v);
            cumulative.push(acc);
        }
        Self { values, cumulative }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> T {
        let u: f64 = rng.random::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
        let idx = self.cumulative.partition_point(|&c| c <= u).min(self.values.len() - 1);
        self.values[idx]
    }
}

fn scalar_atoms(atoms: &[ScalarAtom]) -> AtomTable<f64> {
    AtomTable::new(atoms.iter().map(|a| (to_f64(&a.value), to_f64(&a.prob))))
}

fn pair_atoms(law: &SparsePairLaw) -> AtomTable<(f64, f64)> {
    AtomTable::new(law.atoms.iter().map(|a| ((to_f64(&a.xi), to_f64(&a.eta)), to_f64(&a.prob))))
}

/// Visits the active positions among `0..len`, each active independently with probability `p`.
fn for_each_active<R: Rng>(rng: &mut R, len: usize, p: f64, mut f: impl FnMut(&mut R, usize)) {
    if p >= 1.0 {
        for pos in 0..len {
            f(rng, pos);
        }
        return;
    }
    if p <= 0.0 || len == 0 {
        return;
    }
    let geo = Geometric::new(p).expect("activation probability lies in (0, 1)");
    let mut pos: u64 = 0;
    loop {
        pos = pos.saturating_add(geo.sample(rng));
        if pos >= len as u64 {
            return;
        }
        f(rng, pos as usize);
        pos += 1;
    }
}

/// Scalar entry sampler: returns the scaled value `x / sqrt(N)` or `None` when inactive.
enum ScalarSampler {
    Sparse { p: f64, atoms: AtomTable<f64> },
    Normal { scale: f64 },
}

impl ScalarSampler {
    fn new(law: &ScalarLaw, n: usize) -> Self {
        match law {
            ScalarLaw::Sparse(l) => Self::Sparse { p: to_f64(&l.activation) / n as f64, atoms: scalar_atoms(&l.atoms) },
            ScalarLaw::StandardNormal => Self::Normal { scale: 1.0 / (n as f64).sqrt() },
        }
    }

    /// Calls `f(position, scaled value)` for every nonzero entry among `0..len`.
    fn fill<R: Rng>(&self, rng: &mut R, len: usize, mut f: impl FnMut(usize, f64)) {
        match self {
            Self::Sparse { p, atoms } => for_each_active(rng, len, *p, |rng, pos| {
                let v = atoms.draw(rng);
                if v != 0.0 {
                    f(pos, v);
                }
            }),
            Self::Normal { scale } => {
                for pos in 0..len {
                    let z: f64 = StandardNormal.sample(rng);
                    f(pos, z * scale);
                }
            }
        }
    }

    /// Unscaled generator value `x` for one draw.
    fn raw<R: Rng>(&self, rng: &mut R, n: usize) -> f64 {
        match self {
            Self::Sparse { p, atoms } => {
                if rng.random::<f64>() < *p {
                    atoms.draw(rng) * (n as f64).sqrt()
                } else {
                    0.0
                }
            }
            Self::Normal { .. } => StandardNormal.sample(rng),
        }
    }
}

fn scalar_law(law: &EntryLaw) -> &ScalarLaw {
    match law {
        EntryLaw::Scalar(l) => l,
        EntryLaw::Pair(_) => unreachable!("validated spec"),
    }
}

fn pair_law(law: &EntryLaw) -> &SparsePairLaw {
    match law {
        EntryLaw::Pair(l) => l,
        EntryLaw::Scalar(_) => unreachable!("validated spec"),
    }
}

fn rows_parallel(rows: usize, f: impl Fn(usize, &mut Vec<Triplet>) + Sync) -> Vec<Triplet> {
    let mut chunks: Vec<Vec<Triplet>> = (0..rows)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            f(i, &mut out);
            out
        })
        .collect();
    let mut all: Vec<Triplet> = chunks.iter_mut().flat_map(std::mem::take).collect();
    all.sort_by(|a, b| (a.row, a.col).cmp(&(b.row, b.col)));
    all
}

/// Draws one matrix; a deterministic function of the spec.
pub fn sample(spec: &EnsembleSpec) -> Result<MatrixSample> {
    spec.validate()?;
    let n = spec.n;
    let seed = spec.seed;
    let sqrt_n = (n as f64).sqrt();
    let triplets = match spec.kind {
        Model::Circulant => {
            let sampler = ScalarSampler::new(scalar_law(&spec.law), n);
            let mut rng = stream_rng(seed, 0);
            let generator = (0..n).map(|_| sampler.raw(&mut rng, n)).collect();
            return Ok(MatrixSample { kind: spec.kind, n, seed, data: MatrixData::Circulant { generator } });
        }
        Model::Elliptic => {
            let law = pair_law(&spec.law);
            let atoms = pair_atoms(law);
            let diag = scalar_atoms(&law.diagonal);
            let p = to_f64(&law.activation) / n as f64;
            rows_parallel(n, |i, out| {
                let mut rng = stream_rng(seed, i as u64 + 1);
                let d = diag.draw(&mut rng);
                if d != 0.0 {
                    out.push(Triplet { row: i, col: i, value: d / sqrt_n });
                }
                for_each_active(&mut rng, n - i - 1, p, |rng, pos| {
                    let j = i + 1 + pos;
                    let (xi, eta) = atoms.draw(rng);
                    if xi != 0.0 {
                        out.push(Triplet { row: i, col: j, value: xi });
                    }
                    if eta != 0.0 {
                        out.push(Triplet { row: j, col: i, value: eta });
                    }
                });
            })
        }
        Model::Iid => {
            let sampler = ScalarSampler::new(scalar_law(&spec.law), n);
            rows_parallel(n, |i, out| {
                let mut rng = stream_rng(seed, i as u64 + 1);
                sampler.fill(&mut rng, n, |j, v| out.push(Triplet { row: i, col: j, value: v }));
            })
        }
        Model::Block => {
            let law = pair_law(&spec.law);
            let atoms = pair_atoms(law);
            let diag = scalar_atoms(&law.diagonal);
            let p = to_f64(&law.activation) / n as f64;
            rows_parallel(n, |i, out| {
                let mut rng = stream_rng(seed, i as u64 + 1);
                for b in 0..2 {
                    let d = diag.draw(&mut rng);
                    if d != 0.0 {
                        out.push(Triplet { row: b * n + i, col: b * n + i, value: d / sqrt_n });
                    }
                }
                for_each_active(&mut rng, n - 1, p, |rng, pos| {
                    let j = if pos < i { pos } else { pos + 1 };
                    let (xi, eta) = atoms.draw(rng);
                    if xi != 0.0 {
                        out.push(Triplet { row: i, col: j, value: xi });
                    }
                    if eta != 0.0 {
                        out.push(Triplet { row: n + i, col: n + j, value: eta });
                    }
                });
            })
        }
        Model::Centrosymmetric => {
            let sampler = ScalarSampler::new(scalar_law(&spec.law), n);
            // representatives: rows with 2i < n - 1, plus the first half of the middle row
            let rep_rows = n.div_ceil(2);
            rows_parallel(rep_rows, |i, out| {
                let mut rng = stream_rng(seed, i as u64 + 1);
                let middle = 2 * i + 1 == n;
                let len = if middle { i + 1 } else { n };
                sampler.fill(&mut rng, len, |j, v| {
                    out.push(Triplet { row: i, col: j, value: v });
                    let mirror = (n - 1 - i, n - 1 - j);
                    if mirror != (i, j) {
                        out.push(Triplet { row: mirror.0, col: mirror.1, value: v });
                    }
                });
            })
        }
    };
    let data = match spec.storage {
        Storage::SparseCoo => MatrixData::Sparse(triplets),
        Storage::Dense => {
            let d = spec.dim();
            let mut m = DMatrix::zeros(d, d);
            for t in &triplets {
                m[(t.row, t.col)] = t.value;
            }
            MatrixData::Dense(m)
        }
    };
    Ok(MatrixSample { kind: spec.kind, n, seed, data })
}

/// Eigenvalues `lambda_m = N^{-1/2} sum_j x_j omega^{jm}`, `omega = exp(2 pi i / N)`.
pub fn circulant_eigenvalues(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = rustfft::FftPlanner::new();
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / (n as f64).sqrt();
    buf.iter().map(|z| z * scale).collect()
}

/// Counter-identity matrix `J`.
pub fn exchange_matrix(s: usize) -> DMatrix<f64> {
    DMatrix::from_fn(s, s, |i, j| if i + j + 1 == s { 1.0 } else { 0.0 })
}

/// Result of the orthogonal block reduction of a centrosymmetric matrix.
#[derive(Clone, Debug)]
pub struct WeaverReduction {
    /// `A + JC`; for odd sizes bordered by the `sqrt(2) x` column, `sqrt(2) y` row and centre `q`.
    pub block1: DMatrix<f64>,
    /// `A - JC`.
    pub block2: DMatrix<f64>,
    /// The orthogonal matrix `(1/sqrt 2) [[I, -J], [J, I]]` (odd sizes: with the `sqrt(2)` centre).
    pub q: DMatrix<f64>,
    pub half: usize,
    pub odd: bool,
}

impl WeaverReduction {
    /// `diag(block1, J block2 J)`, which equals `Q^T M Q` for the returned `Q`.
    pub fn similar_form(&self) -> DMatrix<f64> {
        let b1 = self.block1.nrows();
        let s = self.half;
        let j = exchange_matrix(s);
        let lower = &j * &self.block2 * &j;
        let mut out = DMatrix::zeros(b1 + s, b1 + s);
        out.view_mut((0, 0), (b1, b1)).copy_from(&self.block1);
        out.view_mut((b1, b1), (s, s)).copy_from(&lower);
        out
    }
}

/// Splits a centrosymmetric matrix into the two blocks of its orthogonal reduction.
pub fn weaver_reduce(m: &DMatrix<f64>) -> Result<WeaverReduction> {
    let n = m.nrows();
    if !m.is_square() || n == 0 {
        return Err(Error::ShapeMismatch("expected a non-empty square matrix".into()));
    }
    let scale = m.amax().max(1.0);
    for i in 0..n {
        for j in 0..n {
            if (m[(i, j)] - m[(n - 1 - i, n - 1 - j)]).abs() > 1e-12 * scale {
                return Err(Error::ShapeMismatch(format!("not centrosymmetric at ({i},{j})")));
            }
        }
    }
    let s = n / 2;
    let odd = n % 2 == 1;
    let off = s + usize::from(odd);
    let a = m.view((0, 0), (s, s)).into_owned();
    let c = m.view((off, 0), (s, s)).into_owned();
    let j = exchange_matrix(s);
    let jc = &j * &c;
    let plus = &a + &jc;
    let block2 = &a - &jc;
    let r2 = std::f64::consts::SQRT_2;
    let block1 = if odd {
        let mut b = DMatrix::zeros(s + 1, s + 1);
        b.view_mut((0, 0), (s, s)).copy_from(&plus);
        for i in 0..s {
            b[(i, s)] = r2 * m[(i, s)];
            b[(s, i)] = r2 * m[(s, i)];
        }
        b[(s, s)] = m[(s, s)];
        b
    } else {
        plus
    };
    let h = 1.0 / r2;
    let mut q = DMatrix::zeros(n, n);
    for i in 0..s {
        q[(i, i)] = h;
        q[(off + i, off + i)] = h;
        // -J in the top-right block, J in the bottom-left block
        q[(i, off + s - 1 - i)] = -h;
        q[(off + i, s - 1 - i)] = h;
    }
    if odd {
        q[(s, s)] = 1.0;
    }
    Ok(WeaverReduction { block1, block2, q, half: s, odd })
}

/// Nonzero entries of `A + JC` and `A - JC` for a sparse centrosymmetric
/// sample, without densifying. For odd sizes only the `s x s` cores are
/// returned (the bordering row, column and centre are left out).
///
/// `(A +- JC)_{ij} = m_{ij} +- m_{i, n-1-j}` for `i, j < s`.
pub fn weaver_block_entries(m: &MatrixSample) -> Result<(Vec<Triplet>, Vec<Triplet>)> {
    if m.kind != Model::Centrosymmetric {
        return Err(Error::ShapeMismatch(format!("{} sample is not centrosymmetric", m.kind)));
    }
    let n = m.n;
    let s = n / 2;
    let mut acc: std::collections::BTreeMap<(usize, usize), (f64, f64)> = std::collections::BTreeMap::new();
    for t in m.triplets() {
        if t.row >= s || (n % 2 == 1 && t.col == s) {
            continue;
        }
        let (col, sign) = if t.col < s { (t.col, 1.0) } else { (n - 1 - t.col, -1.0) };
        let e = acc.entry((t.row, col)).or_default();
        e.0 += t.value;
        e.1 += sign * t.value;
    }
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for ((row, col), (p, q)) in acc {
        if p != 0.0 {
            plus.push(Triplet { row, col, value: p });
        }
        if q != 0.0 {
            minus.push(Triplet { row, col, value: q });
        }
    }
    Ok((plus, minus))
}

/// Coefficients `c_0..c_n` of `det(lambda I - M) = sum c_k lambda^k`, computed
/// from the Hessenberg form by the standard determinant recurrence.
pub fn charpoly(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    if n == 0 {
        return vec![1.0];
    }
    let h = m.clone().hessenberg().h();
    // p[k] holds the characteristic polynomial of the leading k x k block
    let mut p: Vec<Vec<f64>> = vec![vec![1.0]];
    for k in 1..=n {
        let hk = k - 1;
        let prev = &p[k - 1];
        let mut next = vec![0.0; k + 1];
        for (d, &c) in prev.iter().enumerate() {
            next[d + 1] += c;
            next[d] -= h[(hk, hk)] * c;
        }
        let mut prod = 1.0;
        for i in (0..hk).rev() {
            prod *= h[(i + 1, i)];
            let coeff = h[(i, hk)] * prod;
            for (d, &c) in p[i].iter().enumerate() {
                next[d] -= coeff * c;
            }
        }
        p.push(next);
    }
    p.pop().expect("n >= 1")
}

pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moment_model::{design_correlated_sign_law, SparseScalarLaw};
    use crate::numeric::{int, rat};

    fn sign_scalar() -> EntryLaw {
        EntryLaw::Scalar(ScalarLaw::Sparse(SparseScalarLaw::sign()))
    }

    fn spec(kind: Model, n: usize, law: EntryLaw, seed: u64) -> EnsembleSpec {
        EnsembleSpec { kind, n, law, seed, storage: Storage::SparseCoo }
    }

    #[test]
    fn circulant_structure() {
        let s = sample(&spec(Model::Circulant, 4, EntryLaw::Scalar(ScalarLaw::StandardNormal), 3)).unwrap();
        let x = s.generator().unwrap().to_vec();
        let m = s.to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m[(i, j)], x[(i + 4 - j) % 4] / 2.0);
            }
        }
    }

    #[test]
    fn centrosymmetric_structure() {
        for n in [4, 5, 9] {
            let law = EntryLaw::Scalar(ScalarLaw::StandardNormal);
            let m = sample(&spec(Model::Centrosymmetric, n, law, 11)).unwrap().to_dense();
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(m[(i, j)], m[(n - 1 - i, n - 1 - j)]);
                }
            }
            assert!(m.iter().all(|v| *v != 0.0));
        }
    }

    #[test]
    fn fully_correlated_pairs_are_symmetric() {
        let law = EntryLaw::Pair(design_correlated_sign_law(&int(1)).unwrap());
        let m = sample(&spec(Model::Elliptic, 60, law, 5)).unwrap().to_dense();
        for i in 0..60 {
            for j in 0..60 {
                assert_eq!(m[(i, j)], m[(j, i)]);
            }
        }
    }

    #[test]
    fn block_model_has_two_diagonal_blocks() {
        let law = EntryLaw::Pair(design_correlated_sign_law(&rat(1, 2)).unwrap());
        let s = sample(&spec(Model::Block, 30, law, 2)).unwrap();
        assert_eq!(s.dim(), 60);
        for t in s.triplets() {
            assert_eq!(t.row / 30, t.col / 30);
        }
    }

    #[test]
    fn samples_are_reproducible() {
        let law = EntryLaw::Pair(design_correlated_sign_law(&rat(1, 3)).unwrap());
        let a = sample(&spec(Model::Elliptic, 200, law.clone(), 9)).unwrap();
        let b = sample(&spec(Model::Elliptic, 200, law.clone(), 9)).unwrap();
        let c = sample(&spec(Model::Elliptic, 200, law, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn dense_and_sparse_storage_agree() {
        let base = spec(Model::Iid, 40, sign_scalar(), 4);
        let sparse = sample(&base).unwrap();
        let dense = sample(&EnsembleSpec { storage: Storage::Dense, ..base }).unwrap();
        assert_eq!(sparse.to_dense(), dense.to_dense());
    }

    #[test]
    fn law_shape_is_checked() {
        assert!(sample(&spec(Model::Elliptic, 5, sign_scalar(), 0)).is_err());
        assert!(sample(&spec(Model::Iid, 0, sign_scalar(), 0)).is_err());
    }

    #[test]
    fn circulant_eigenvalue_examples() {
        assert_eq!(circulant_eigenvalues(&[2.5])[0], Complex64::new(2.5, 0.0));
        let l = circulant_eigenvalues(&[1.0, 3.0]);
        let r = std::f64::consts::SQRT_2;
        assert!((l[0] - Complex64::new(4.0 / r, 0.0)).norm() < 1e-12);
        assert!((l[1] - Complex64::new(-2.0 / r, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn two_by_two_weaver_reduction() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 5.0, 5.0, 3.0]);
        let w = weaver_reduce(&m).unwrap();
        assert_eq!(w.block1[(0, 0)], 8.0);
        assert_eq!(w.block2[(0, 0)], -2.0);
        assert!(weaver_reduce(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])).is_err());
    }

    #[test]
    fn charpoly_of_triangular_matrix() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 4.0, 0.0, 3.0, 5.0, 0.0, 0.0, -1.0]);
        // (x - 2)(x - 3)(x + 1) = x^3 - 4x^2 + x + 6
        let c = charpoly(&m);
        let expected = [6.0, 1.0, -4.0, 1.0];
        for (a, b) in c.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dump_format() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let s = MatrixSample::from_dense(Model::Iid, m).unwrap();
        let mut buf = Vec::new();
        s.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("# iid 2 0"));
        assert_eq!(text.lines().nth(1), Some("0 1 1e0"));
    }

    #[test]
    fn sparse_block_entries_match_dense_reduction() {
        for n in [6, 7] {
            let law = EntryLaw::Scalar(ScalarLaw::StandardNormal);
            let m = sample(&spec(Model::Centrosymmetric, n, law, 21)).unwrap();
            let w = weaver_reduce(&m.to_dense()).unwrap();
            let (plus, minus) = weaver_block_entries(&m).unwrap();
            let s = n / 2;
            let mut p = DMatrix::zeros(s, s);
            let mut q = DMatrix::zeros(s, s);
            plus.iter().for_each(|t| p[(t.row, t.col)] = t.value);
            minus.iter().for_each(|t| q[(t.row, t.col)] = t.value);
            assert!((p - w.block1.view((0, 0), (s, s))).amax() < 1e-14);
            assert!((q - &w.block2).amax() < 1e-14);
        }
    }
}
