//! Exact fractional edge cover widths.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

pub const MAX_EDGES: usize = 12;

/// Minimum of `Σ x_e` subject to `Σ_{e ∋ v} x_e ≥ 1` for every `v` in
/// `vertices`, with `x ≥ 0`. Edges are vertex lists; only their
/// intersection with `vertices` matters. Solved through the dual packing
/// problem with an exact simplex using Bland's rule.
pub fn node_width(vertices: &[usize], edges: &[Vec<usize>]) -> Result<BigRational> {
    if edges.len() > MAX_EDGES {
        return Err(Error::Plan(format!("at most {MAX_EDGES} relations are supported, got {}", edges.len())));
    }
    let rows: Vec<Vec<usize>> =
        edges.iter().map(|e| (0..vertices.len()).filter(|&i| e.contains(&vertices[i])).collect::<Vec<_>>()).filter(|r| !r.is_empty()).collect();
    for (i, v) in vertices.iter().enumerate() {
        if !rows.iter().any(|r| r.contains(&i)) {
            return Err(Error::Plan(format!("vertex {v} is not covered by any relation")));
        }
    }
    Ok(packing_optimum(vertices.len(), &rows))
}

/// Maximum of `Σ y_v` subject to `Σ_{v ∈ r} y_v ≤ 1` for every row `r`.
fn packing_optimum(n: usize, rows: &[Vec<usize>]) -> BigRational {
    let m = rows.len();
    if n == 0 {
        return BigRational::zero();
    }
    // Columns: n structural then m slack variables; last column is the rhs.
    let width = n + m + 1;
    let mut t: Vec<Vec<BigRational>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = vec![BigRational::zero(); width];
            for &v in r {
                row[v] = BigRational::one();
            }
            row[n + i] = BigRational::one();
            row[width - 1] = BigRational::one();
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + m).collect();
    // Reduced costs of the maximization; objective value in the last slot.
    let mut obj = vec![BigRational::zero(); width];
    for c in obj.iter_mut().take(n) {
        *c = BigRational::one();
    }
    loop {
        let Some(enter) = (0..n + m).find(|&j| obj[j].is_positive()) else {
            return -obj[width - 1].clone();
        };
        let mut leave: Option<(usize, BigRational)> = None;
        for (i, row) in t.iter().enumerate() {
            if row[enter].is_positive() {
                let ratio = &row[width - 1] / &row[enter];
                let better = match &leave {
                    None => true,
                    Some((l, best)) => ratio < *best || (ratio == *best && basis[i] < basis[*l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (r, _) = leave.expect("packing problem is bounded");
        let pivot = t[r][enter].clone();
        for x in t[r].iter_mut() {
            *x = &*x / &pivot;
        }
        let pivot_row = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r && !row[enter].is_zero() {
                let f = row[enter].clone();
                for (x, p) in row.iter_mut().zip(&pivot_row) {
                    *x -= &f * p;
                }
            }
        }
        let f = obj[enter].clone();
        for (x, p) in obj.iter_mut().zip(&pivot_row) {
            *x -= &f * p;
        }
        basis[r] = enter;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn single_edge_is_one() {
        assert_eq!(node_width(&[0, 1, 2], &[vec![0, 1, 2]]).unwrap(), q(1, 1));
    }

    #[test]
    fn triangle_and_cycles() {
        let tri = [vec![0, 1], vec![1, 2], vec![0, 2]];
        assert_eq!(node_width(&[0, 1, 2], &tri).unwrap(), q(3, 2));
        let c4 = [vec![0, 1], vec![1, 2], vec![2, 3], vec![3, 0]];
        assert_eq!(node_width(&[0, 1, 2, 3], &c4).unwrap(), q(2, 1));
        let c5 = [vec![0, 1], vec![1, 2], vec![2, 3], vec![3, 4], vec![4, 0]];
        assert_eq!(node_width(&[0, 1, 2, 3, 4], &c5).unwrap(), q(5, 2));
    }

    #[test]
    fn partial_edges_count() {
        // {a,b} covered by the projections of ac and bc.
        assert_eq!(node_width(&[0, 1], &[vec![0, 2], vec![1, 2]]).unwrap(), q(2, 1));
        assert_eq!(node_width(&[], &[vec![0]]).unwrap(), q(0, 1));
    }

    #[test]
    fn uncovered_vertex_and_edge_limit() {
        assert!(node_width(&[0, 5], &[vec![0]]).is_err());
        let many: Vec<Vec<usize>> = (0..13).map(|i| vec![i]).collect();
        assert!(node_width(&[0], &many).is_err());
    }
}
