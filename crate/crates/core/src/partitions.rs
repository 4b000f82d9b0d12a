//! Set partitions, pair partitions, cross partitions and integer partitions.
//!
//! Elements are 0-based internally; the `Display` impls print them 1-based in
//! `{1,3|2|4}` notation. Every enumerator is guarded at [`MAX_GROUND`] elements.

use std::fmt;

use num_bigint::BigInt;

use crate::error::{out_of_range, Result};
use crate::numeric::falling_factorial;

/// Largest ground set any enumerator accepts; Bell(13) is already above 27 million.
pub const MAX_GROUND: usize = 12;

/// A partition of `{0, .., k-1}` with blocks ordered by their minimum element.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SetPartition {
    /// `labels[m]` is the block index of element `m` (a restricted growth string).
    labels: Vec<usize>,
    blocks: Vec<Vec<usize>>,
}

impl SetPartition {
    /// Builds a partition from a restricted growth string.
    pub fn from_labels(labels: Vec<usize>) -> Option<Self> {
        let mut next = 0;
        for &l in &labels {
            if l > next {
                return None;
            }
            if l == next {
                next += 1;
            }
        }
        let mut blocks = vec![Vec::new(); next];
        for (m, &l) in labels.iter().enumerate() {
            blocks[l].push(m);
        }
        Some(Self { labels, blocks })
    }

    /// Builds a partition from arbitrary disjoint blocks covering `0..k`.
    pub fn from_blocks(k: usize, blocks: &[Vec<usize>]) -> Option<Self> {
        let mut owner = vec![usize::MAX; k];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return None;
            }
            for &m in block {
                if m >= k || owner[m] != usize::MAX {
                    return None;
                }
                owner[m] = b;
            }
        }
        if owner.contains(&usize::MAX) {
            return None;
        }
        // relabel in order of first appearance
        let mut relabel = vec![usize::MAX; blocks.len()];
        let mut next = 0;
        let labels = owner
            .iter()
            .map(|&b| {
                if relabel[b] == usize::MAX {
                    relabel[b] = next;
                    next += 1;
                }
                relabel[b]
            })
            .collect();
        Self::from_labels(labels)
    }

    pub fn ground_size(&self) -> usize {
        self.labels.len()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn block_of(&self, m: usize) -> usize {
        self.labels[m]
    }

    /// `|S_pi(N)| = N (N-1) ... (N - |pi| + 1)`.
    pub fn tuple_count(&self, n: u64) -> BigInt {
        falling_factorial(n, self.block_count() as u64)
    }

    /// Whether `tuple` lies in `S_pi`: `i_m = i_n` exactly when `m` and `n` share a block.
    pub fn contains_tuple(&self, tuple: &[usize]) -> bool {
        if tuple.len() != self.labels.len() {
            return false;
        }
        for a in 0..tuple.len() {
            for b in a + 1..tuple.len() {
                if (tuple[a] == tuple[b]) != (self.labels[a] == self.labels[b]) {
                    return false;
                }
            }
        }
        true
    }

    /// The partition induced by a tuple: `m ~ n` iff `i_m = i_n`.
    pub fn of_tuple(tuple: &[usize]) -> Self {
        let mut seen: Vec<usize> = Vec::new();
        let labels = tuple
            .iter()
            .map(|v| match seen.iter().position(|s| s == v) {
                Some(p) => p,
                None => {
                    seen.push(*v);
                    seen.len() - 1
                }
            })
            .collect();
        Self::from_labels(labels).expect("first-appearance labels form a growth string")
    }

    pub fn is_pairing(&self) -> bool {
        self.blocks.iter().all(|b| b.len() == 2)
    }
}

impl fmt::Display for SetPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (b, block) in self.blocks.iter().enumerate() {
            if b > 0 {
                f.write_str("|")?;
            }
            let items: Vec<String> = block.iter().map(|m| (m + 1).to_string()).collect();
            f.write_str(&items.join(","))?;
        }
        f.write_str("}")
    }
}

fn guard(what: &'static str, k: usize) -> Result<()> {
    if k > MAX_GROUND {
        return Err(out_of_range(what, k, format!("0..={MAX_GROUND}")));
    }
    Ok(())
}

/// All partitions of `{0, .., k-1}` in lexicographic order of their growth strings.
pub fn enumerate_set_partitions(k: usize) -> Result<Vec<SetPartition>> {
    if k == 0 {
        return Err(out_of_range("k", k, format!("1..={MAX_GROUND}")));
    }
    guard("k", k)?;
    let mut out = Vec::new();
    let mut labels = vec![0usize; k];
    let mut maxes = vec![0usize; k];
    loop {
        out.push(SetPartition::from_labels(labels.clone()).expect("valid growth string"));
        // advance the growth string: find the rightmost position that can grow
        let mut pos = k - 1;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            if labels[pos] <= maxes[pos - 1] {
                labels[pos] += 1;
                maxes[pos] = maxes[pos - 1].max(labels[pos]);
                for p in pos + 1..k {
                    labels[p] = 0;
                    maxes[p] = maxes[pos];
                }
                break;
            }
            pos -= 1;
        }
    }
}

/// All perfect matchings of `{0, .., r-1}`; empty for odd `r`.
pub fn enumerate_pair_partitions(r: usize) -> Result<Vec<SetPartition>> {
    guard("r", r)?;
    if r % 2 == 1 {
        return Ok(Vec::new());
    }
    if r == 0 {
        return Ok(vec![SetPartition { labels: Vec::new(), blocks: Vec::new() }]);
    }
    let mut out = Vec::new();
    let mut blocks = Vec::new();
    let mut free: Vec<usize> = (0..r).collect();
    match_rest(&mut free, &mut blocks, &mut out, r);
    Ok(out)
}

fn match_rest(free: &mut Vec<usize>, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<SetPartition>, r: usize) {
    if free.is_empty() {
        out.push(SetPartition::from_blocks(r, blocks).expect("matching covers the ground set"));
        return;
    }
    let first = free.remove(0);
    for idx in 0..free.len() {
        let partner = free.remove(idx);
        blocks.push(vec![first, partner]);
        match_rest(free, blocks, out, r);
        blocks.pop();
        free.insert(idx, partner);
    }
    free.insert(0, first);
}

/// Vertex `index` of the part `part` in a disjoint union `V_1 + ... + V_r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tagged {
    pub part: usize,
    pub index: usize,
}

/// A partition of a disjoint union in which no block holds two vertices of the same part.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CrossPartition {
    sizes: Vec<usize>,
    /// `labels[j][v]` is the block of vertex `v` of part `j`.
    labels: Vec<Vec<usize>>,
    blocks: Vec<Vec<Tagged>>,
}

impl CrossPartition {
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn blocks(&self) -> &[Vec<Tagged>] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_of(&self, part: usize, index: usize) -> usize {
        self.labels[part][index]
    }

    pub fn labels(&self) -> &[Vec<usize>] {
        &self.labels
    }

    /// `sigma-bar`: parts `i` and `j` are linked when some block meets both.
    pub fn induced(&self) -> SetPartition {
        let r = self.sizes.len();
        let mut parent: Vec<usize> = (0..r).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut x = x;
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for block in &self.blocks {
            for w in block.windows(2) {
                let a = find(&mut parent, w[0].part);
                let b = find(&mut parent, w[1].part);
                parent[a] = b;
            }
        }
        let roots: Vec<usize> = (0..r).map(|j| find(&mut parent, j)).collect();
        SetPartition::of_tuple(&roots)
    }

    /// Builds a cross partition from explicit blocks, checking the at-most-one-per-part rule.
    pub fn from_blocks(sizes: &[usize], blocks: &[Vec<Tagged>]) -> Option<Self> {
        let mut labels: Vec<Vec<usize>> = sizes.iter().map(|&s| vec![usize::MAX; s]).collect();
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return None;
            }
            let mut parts_seen = Vec::new();
            for t in block {
                if t.part >= sizes.len() || t.index >= sizes[t.part] || parts_seen.contains(&t.part) {
                    return None;
                }
                parts_seen.push(t.part);
                if labels[t.part][t.index] != usize::MAX {
                    return None;
                }
                labels[t.part][t.index] = b;
            }
        }
        if labels.iter().flatten().any(|&l| l == usize::MAX) {
            return None;
        }
        Some(Self::canonical(sizes.to_vec(), labels))
    }

    fn canonical(sizes: Vec<usize>, raw: Vec<Vec<usize>>) -> Self {
        let mut relabel: Vec<usize> = Vec::new();
        let mut order: Vec<usize> = Vec::new();
        let labels: Vec<Vec<usize>> = raw
            .iter()
            .map(|part| {
                part.iter()
                    .map(|&b| match order.iter().position(|&o| o == b) {
                        Some(p) => relabel[p],
                        None => {
                            order.push(b);
                            relabel.push(order.len() - 1);
                            order.len() - 1
                        }
                    })
                    .collect()
            })
            .collect();
        let mut blocks = vec![Vec::new(); order.len()];
        for (part, ls) in labels.iter().enumerate() {
            for (index, &b) in ls.iter().enumerate() {
                blocks[b].push(Tagged { part, index });
            }
        }
        Self { sizes, labels, blocks }
    }
}

impl fmt::Display for CrossPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (b, block) in self.blocks.iter().enumerate() {
            if b > 0 {
                f.write_str("|")?;
            }
            let items: Vec<String> = block.iter().map(|t| format!("{}.{}", t.part + 1, t.index + 1)).collect();
            f.write_str(&items.join(","))?;
        }
        f.write_str("}")
    }
}

/// All cross partitions of `V_1 + ... + V_r` with `|V_j| = sizes[j]`.
pub fn enumerate_cross_partitions(sizes: &[usize]) -> Result<Vec<CrossPartition>> {
    let total: usize = sizes.iter().sum();
    guard("sum of sizes", total)?;
    let elements: Vec<Tagged> = sizes
        .iter()
        .enumerate()
        .flat_map(|(part, &s)| (0..s).map(move |index| Tagged { part, index }))
        .collect();
    let mut out = Vec::new();
    let mut assignment = vec![0usize; elements.len()];
    let mut block_parts: Vec<Vec<usize>> = Vec::new();
    cross_rec(0, &elements, &mut assignment, &mut block_parts, sizes, &mut out);
    Ok(out)
}

fn cross_rec(
    pos: usize,
    elements: &[Tagged],
    assignment: &mut [usize],
    block_parts: &mut Vec<Vec<usize>>,
    sizes: &[usize],
    out: &mut Vec<CrossPartition>,
) {
    if pos == elements.len() {
        let mut labels: Vec<Vec<usize>> = sizes.iter().map(|&s| vec![0; s]).collect();
        for (e, &b) in elements.iter().zip(assignment.iter()) {
            labels[e.part][e.index] = b;
        }
        out.push(CrossPartition::canonical(sizes.to_vec(), labels));
        return;
    }
    let part = elements[pos].part;
    for b in 0..block_parts.len() {
        if !block_parts[b].contains(&part) {
            block_parts[b].push(part);
            assignment[pos] = b;
            cross_rec(pos + 1, elements, assignment, block_parts, sizes, out);
            block_parts[b].pop();
        }
    }
    block_parts.push(vec![part]);
    assignment[pos] = block_parts.len() - 1;
    cross_rec(pos + 1, elements, assignment, block_parts, sizes, out);
    block_parts.pop();
}

/// Multisets `m_1 >= ... >= m_r >= 2` with `sum m_a = k`, in decreasing lexicographic order.
pub fn enumerate_integer_partitions_min2(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    int_rec(k, k, &mut current, &mut out);
    out
}

fn int_rec(rest: usize, cap: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if rest == 0 {
        if !current.is_empty() {
            out.push(current.clone());
        }
        return;
    }
    for m in (2..=cap.min(rest)).rev() {
        current.push(m);
        int_rec(rest - m, m, current, out);
        current.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    /// Bell numbers from the triangle recurrence, independent of the enumerator.
    fn bell(n: usize) -> u64 {
        let mut row = vec![1u64];
        for _ in 0..n {
            let mut next = vec![*row.last().unwrap()];
            for v in &row {
                let last = *next.last().unwrap();
                next.push(last + v);
            }
            row = next;
        }
        row[0]
    }

    #[test]
    fn set_partition_counts_match_bell() {
        assert_eq!(enumerate_set_partitions(1).unwrap().len(), 1);
        assert_eq!(enumerate_set_partitions(3).unwrap().len(), 5);
        assert_eq!(enumerate_set_partitions(4).unwrap().len(), 15);
        for k in 1..=9 {
            assert_eq!(enumerate_set_partitions(k).unwrap().len() as u64, bell(k), "k={k}");
        }
    }

    #[test]
    fn set_partitions_are_distinct_and_canonical() {
        let all = enumerate_set_partitions(6).unwrap();
        let distinct: HashSet<_> = all.iter().collect();
        assert_eq!(distinct.len(), all.len());
        for p in &all {
            let mins: Vec<usize> = p.blocks().iter().map(|b| b[0]).collect();
            assert!(mins.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn guards_reject_large_ground_sets() {
        assert!(enumerate_set_partitions(13).is_err());
        assert!(enumerate_set_partitions(0).is_err());
        assert!(enumerate_pair_partitions(14).is_err());
        assert!(enumerate_cross_partitions(&[7, 6]).is_err());
    }

    #[test]
    fn pair_partition_counts() {
        assert_eq!(enumerate_pair_partitions(4).unwrap().len(), 3);
        assert!(enumerate_pair_partitions(3).unwrap().is_empty());
        let two = enumerate_pair_partitions(2).unwrap();
        assert_eq!(two.len(), 1);
        assert_eq!(two[0].to_string(), "{1,2}");
        let mut double_factorial = 1;
        for r in (2..=12).step_by(2) {
            double_factorial *= r - 1;
            assert_eq!(enumerate_pair_partitions(r).unwrap().len(), double_factorial);
        }
    }

    #[test]
    fn cross_partition_examples() {
        assert_eq!(enumerate_cross_partitions(&[2, 2]).unwrap().len(), 7);
        assert_eq!(enumerate_cross_partitions(&[1, 1]).unwrap().len(), 2);
        assert_eq!(enumerate_cross_partitions(&[2]).unwrap().len(), 1);
        assert_eq!(enumerate_cross_partitions(&[3, 0]).unwrap().len(), 1);
    }

    #[test]
    fn cross_partitions_filter_set_partitions() {
        // brute force: partitions of the 5-set {a0,a1,a2,b0,b1} keeping blocks with one vertex per side
        let sizes = [3usize, 2];
        let brute = enumerate_set_partitions(5)
            .unwrap()
            .into_iter()
            .filter(|p| p.blocks().iter().all(|b| b.iter().filter(|&&m| m < 3).count() <= 1 && b.iter().filter(|&&m| m >= 3).count() <= 1))
            .count();
        assert_eq!(enumerate_cross_partitions(&sizes).unwrap().len(), brute);
    }

    #[test]
    fn induced_partition_links_glued_parts() {
        let sigma = CrossPartition::from_blocks(
            &[1, 1, 1],
            &[
                vec![Tagged { part: 0, index: 0 }, Tagged { part: 2, index: 0 }],
                vec![Tagged { part: 1, index: 0 }],
            ],
        )
        .unwrap();
        assert_eq!(sigma.induced().to_string(), "{1,3|2}");
    }

    #[test]
    fn integer_partitions_min2() {
        assert_eq!(enumerate_integer_partitions_min2(4), vec![vec![4], vec![2, 2]]);
        assert_eq!(
            enumerate_integer_partitions_min2(6),
            vec![vec![6], vec![4, 2], vec![3, 3], vec![2, 2, 2]]
        );
        assert_eq!(enumerate_integer_partitions_min2(3), vec![vec![3]]);
        assert!(enumerate_integer_partitions_min2(1).is_empty());
    }

    #[test]
    fn display_notation() {
        let p = SetPartition::from_blocks(4, &[vec![0, 2], vec![1], vec![3]]).unwrap();
        assert_eq!(p.to_string(), "{1,3|2|4}");
    }

    #[test]
    fn tuple_membership_matches_induced_partition() {
        let p = SetPartition::from_blocks(3, &[vec![0, 2], vec![1]]).unwrap();
        assert!(p.contains_tuple(&[4, 1, 4]));
        assert!(!p.contains_tuple(&[4, 4, 4]));
        assert_eq!(SetPartition::of_tuple(&[4, 1, 4]), p);
    }
}
