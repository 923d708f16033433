//! Layout-pair intersection cost table.

use super::Layout;

/// Dimensionless cost of one intersection, classified by the layouts of its
/// operands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayoutCostTable {
    pub bs_bs: u64,
    pub bs_uint: u64,
    pub uint_uint: u64,
    /// Charged for a level of a relation that is dense over every key.
    pub dense_relation: u64,
}

impl Default for LayoutCostTable {
    fn default() -> Self {
        LayoutCostTable { bs_bs: 1, bs_uint: 10, uint_uint: 50, dense_relation: 0 }
    }
}

impl LayoutCostTable {
    pub fn pair(&self, a: Layout, b: Layout) -> u64 {
        match (a, b) {
            (Layout::Bitset, Layout::Bitset) => self.bs_bs,
            (Layout::Uint, Layout::Uint) => self.uint_uint,
            _ => self.bs_uint,
        }
    }

    /// Layout of an intersection's output: only `bs ∩ bs` stays a bitset.
    pub fn result_layout(a: Layout, b: Layout) -> Layout {
        if a == Layout::Bitset && b == Layout::Bitset {
            Layout::Bitset
        } else {
            Layout::Uint
        }
    }

    /// Cost of intersecting sets of the given layouts, bitsets first. Fewer
    /// than two operands means no intersection happens, which costs nothing.
    pub fn icost(&self, layouts: &[Layout]) -> u64 {
        if layouts.len() < 2 {
            return 0;
        }
        let mut sorted = layouts.to_vec();
        sorted.sort();
        let mut acc = sorted[0];
        let mut total = 0;
        for &next in &sorted[1..] {
            total += self.pair(acc, next);
            acc = Self::result_layout(acc, next);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Layout::{Bitset as Bs, Uint};

    #[test]
    fn pairwise_table() {
        let t = LayoutCostTable::default();
        assert_eq!(t.icost(&[Bs, Bs]), 1);
        assert_eq!(t.icost(&[Bs, Uint]), 10);
        assert_eq!(t.icost(&[Uint, Bs]), 10);
        assert_eq!(t.icost(&[Uint, Uint]), 50);
        assert!(t.bs_bs < t.bs_uint && t.bs_uint < t.uint_uint);
    }

    #[test]
    fn three_way_folds_bitsets_first() {
        let t = LayoutCostTable::default();
        assert_eq!(t.icost(&[Bs, Bs, Uint]), 11);
        assert_eq!(t.icost(&[Uint, Bs, Bs]), 11);
        assert_eq!(t.icost(&[Uint, Uint, Uint]), 100);
        assert_eq!(t.icost(&[Bs, Uint, Uint]), 60);
    }

    #[test]
    fn single_operand_is_free() {
        assert_eq!(LayoutCostTable::default().icost(&[Uint]), 0);
    }
}
