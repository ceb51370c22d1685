//! Sorted multi-index tables for n ≤ 8.

use std::sync::OnceLock;

pub const MAX_DIM: usize = 8;

#[derive(Debug)]
pub struct IndexBasis {
    /// Strictly increasing 0-based index sets, lexicographic order.
    pub sets: Vec<Vec<usize>>,
    pub masks: Vec<u16>,
    /// position of a bitmask in `sets`, or `usize::MAX`
    pub position: Vec<usize>,
}

fn build(n: usize, p: usize) -> IndexBasis {
    let mut sets = Vec::new();
    let mut cur = Vec::with_capacity(p);
    fn rec(start: usize, n: usize, p: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == p {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < p - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, p, cur, out);
            cur.pop();
        }
    }
    rec(0, n, p, &mut cur, &mut sets);
    let masks: Vec<u16> = sets
        .iter()
        .map(|s| s.iter().fold(0u16, |m, &i| m | (1 << i)))
        .collect();
    let mut position = vec![usize::MAX; 1 << n];
    for (k, &m) in masks.iter().enumerate() {
        position[m as usize] = k;
    }
    IndexBasis {
        sets,
        masks,
        position,
    }
}

/// Index table for p-subsets of {0..n}.
pub fn index_basis(n: usize, p: usize) -> &'static IndexBasis {
    static TABLES: OnceLock<Vec<Vec<IndexBasis>>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| {
        (0..=MAX_DIM)
            .map(|n| (0..=n).map(|p| build(n, p)).collect())
            .collect()
    });
    &tables[n][p]
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Sign of the permutation that sorts the concatenation `a ++ b` of two
/// disjoint sorted index lists.
pub fn shuffle_sign(a: &[usize], b: &[usize]) -> f64 {
    let mut inversions = 0usize;
    for &x in a {
        inversions += b.iter().filter(|&&y| y < x).count();
    }
    if inversions.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}
