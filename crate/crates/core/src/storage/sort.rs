//! Sorting row indices by id tuples.

use crate::set::Id;

/// Row indices ordered lexicographically by the given id columns; ties keep
/// input order.
pub fn sort_rows(columns: &[&[Id]], rows: Vec<u32>) -> Vec<u32> {
    let mut rows = rows;
    match columns.len() {
        0 => {}
        1 => {
            let c = columns[0];
            let mut keyed: Vec<u64> = rows.iter().map(|&r| ((c[r as usize] as u64) << 32) | r as u64).collect();
            keyed.sort_unstable();
            rows = keyed.into_iter().map(|k| k as u32).collect();
        }
        2 | 3 => {
            let mut keyed: Vec<(u128, u32)> = rows
                .iter()
                .map(|&r| {
                    let mut k = 0u128;
                    for c in columns {
                        k = (k << 32) | c[r as usize] as u128;
                    }
                    (k, r)
                })
                .collect();
            keyed.sort_unstable();
            rows = keyed.into_iter().map(|k| k.1).collect();
        }
        _ => rows.sort_by(|&a, &b| {
            for c in columns {
                match c[a as usize].cmp(&c[b as usize]) {
                    std::cmp::Ordering::Equal => continue,
                    o => return o,
                }
            }
            a.cmp(&b)
        }),
    }
    rows
}

/// Applies a row permutation to an id column.
pub fn permute(column: &[Id], rows: &[u32]) -> Vec<Id> {
    rows.iter().map(|&r| column[r as usize]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorts_lexicographically_and_stably() {
        let a = [2, 1, 2, 1, 0];
        let b = [0, 5, 0, 3, 9];
        assert_eq!(sort_rows(&[&a, &b], (0..5).collect()), vec![4, 3, 1, 0, 2]);
        let c = [1, 1, 1, 1, 1];
        let d = [0, 0, 0, 0, 0];
        assert_eq!(sort_rows(&[&a, &b, &c, &d], (0..5).collect()), vec![4, 3, 1, 0, 2]);
        assert_eq!(sort_rows(&[&a], (0..5).collect()), vec![4, 1, 3, 0, 2]);
    }
}
