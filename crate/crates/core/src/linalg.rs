//! Gaussian elimination helpers over a generic scalar.

use std::collections::{BTreeMap, BTreeSet};

use crate::scalar::Scalar;

/// Reduced row echelon form in place; returns the pivot columns.
pub fn rref<S: Scalar>(rows: &mut [Vec<S>], tol: f64) -> Vec<usize> {
    let ncols = rows.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == rows.len() {
            break;
        }
        // Largest magnitude pivot keeps float mode stable.
        let Some(p) = (r..rows.len())
            .filter(|&i| !rows[i][c].is_zero_tol(tol))
            .max_by(|&a, &b| {
                rows[a][c]
                    .abs()
                    .partial_cmp(&rows[b][c].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        else {
            continue;
        };
        rows.swap(r, p);
        let inv = S::one() / rows[r][c].clone();
        for v in rows[r].iter_mut() {
            *v = v.mul_ref(&inv);
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                v.sub_mul_assign(&f, pv);
            }
            row[c] = S::zero();
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn rank<S: Scalar>(vectors: &[Vec<S>], tol: f64) -> usize {
    let mut m = vectors.to_vec();
    rref(&mut m, tol).len()
}

/// Greedy maximal linearly independent subset, preserving input order.
pub fn independent_subset<S: Scalar>(vectors: &[Vec<S>], tol: f64) -> Vec<Vec<S>> {
    let mut chosen: Vec<Vec<S>> = Vec::new();
    for v in vectors {
        let mut trial = chosen.clone();
        trial.push(v.clone());
        if rank(&trial, tol) == trial.len() {
            chosen = trial;
        }
    }
    chosen
}

/// Basis of `{w : w·v = 0 for all v in vectors}` in dimension `dim`.
pub fn orthogonal_complement<S: Scalar>(vectors: &[Vec<S>], dim: usize, tol: f64) -> Vec<Vec<S>> {
    if vectors.is_empty() {
        return (0..dim).map(|i| crate::scalar::unit_vector(dim, i)).collect();
    }
    let mut m = vectors.to_vec();
    let pivots = rref(&mut m, tol);
    let free: Vec<usize> = (0..dim).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut w = vec![S::zero(); dim];
            w[f] = S::one();
            for (r, &pc) in pivots.iter().enumerate() {
                w[pc] = -m[r][f].clone();
            }
            w
        })
        .collect()
}

/// Solves the square system `A x = b`, with `A` given as sparse rows of
/// `(column, value)` pairs. Pivots are chosen by smallest Markowitz count,
/// which keeps fill-in low but offers no numerical safeguard, so this is
/// meant for exact scalars. Returns `None` when `A` is singular.
pub fn solve_sparse<S: Scalar>(n: usize, rows: Vec<Vec<(usize, S)>>, rhs: Vec<S>) -> Option<Vec<S>> {
    if rows.len() != n || rhs.len() != n {
        return None;
    }
    let mut a: Vec<BTreeMap<usize, S>> = rows
        .into_iter()
        .map(|row| {
            let mut m: BTreeMap<usize, S> = BTreeMap::new();
            for (j, v) in row {
                let e = m.entry(j).or_insert_with(S::zero);
                *e = e.add_ref(&v);
            }
            m.retain(|_, v| !v.is_zero());
            m
        })
        .collect();
    let mut b = rhs;
    let mut col_rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, row) in a.iter().enumerate() {
        for &j in row.keys() {
            if j >= n {
                return None;
            }
            col_rows[j].insert(i);
        }
    }
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best: Option<(usize, usize, usize)> = None;
        for (r, row) in a.iter().enumerate() {
            if done[r] {
                continue;
            }
            if row.is_empty() {
                return None;
            }
            for &c in row.keys() {
                let cost = (row.len() - 1) * (col_rows[c].len() - 1);
                if best.is_none_or(|(bc, _, _)| cost < bc) {
                    best = Some((cost, r, c));
                }
            }
        }
        let (_, r, c) = best?;
        let pivot_row = a[r].clone();
        let p = pivot_row[&c].clone();
        let others: Vec<usize> = col_rows[c].iter().copied().filter(|&i| i != r).collect();
        for i in others {
            let f = a[i][&c].div_ref(&p);
            for (&j, v) in &pivot_row {
                let e = a[i].entry(j).or_insert_with(S::zero);
                e.sub_mul_assign(&f, v);
                if e.is_zero() {
                    a[i].remove(&j);
                    col_rows[j].remove(&i);
                } else {
                    col_rows[j].insert(i);
                }
            }
            let br = b[r].clone();
            b[i].sub_mul_assign(&f, &br);
        }
        for &j in pivot_row.keys() {
            col_rows[j].remove(&r);
        }
        done[r] = true;
        order.push((r, c));
    }
    let mut x = vec![S::zero(); n];
    for &(r, c) in order.iter().rev() {
        let mut acc = b[r].clone();
        for (&j, v) in &a[r] {
            if j != c {
                acc.sub_mul_assign(v, &x[j]);
            }
        }
        x[c] = acc.div_ref(&a[r][&c]);
    }
    Some(x)
}
