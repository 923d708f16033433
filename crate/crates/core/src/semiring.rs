//! Commutative semirings used to annotate tuples.

use std::fmt;

/// Annotation semiring. `SumProduct` and `Count` share `(+, ×)` arithmetic;
/// `Count` marks aggregates whose results are integral. `MinPlus` and
/// `MaxPlus` pair `min`/`max` with `+`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Semiring {
    SumProduct,
    Count,
    MinPlus,
    MaxPlus,
}

impl Semiring {
    #[inline]
    pub fn zero(self) -> f64 {
        match self {
            Semiring::SumProduct | Semiring::Count => 0.0,
            Semiring::MinPlus => f64::INFINITY,
            Semiring::MaxPlus => f64::NEG_INFINITY,
        }
    }

    #[inline]
    pub fn one(self) -> f64 {
        match self {
            Semiring::SumProduct | Semiring::Count => 1.0,
            Semiring::MinPlus | Semiring::MaxPlus => 0.0,
        }
    }

    #[inline]
    pub fn plus(self, a: f64, b: f64) -> f64 {
        match self {
            Semiring::SumProduct | Semiring::Count => a + b,
            Semiring::MinPlus => a.min(b),
            Semiring::MaxPlus => a.max(b),
        }
    }

    #[inline]
    pub fn times(self, a: f64, b: f64) -> f64 {
        match self {
            Semiring::SumProduct | Semiring::Count => a * b,
            Semiring::MinPlus | Semiring::MaxPlus => a + b,
        }
    }

    /// `a ⊕ a ⊕ ... ⊕ a` (`n` times); used when a value repeats over
    /// eliminated trie levels.
    pub fn plus_n(self, a: f64, n: usize) -> f64 {
        match self {
            Semiring::SumProduct | Semiring::Count => a * n as f64,
            _ if n == 0 => self.zero(),
            _ => a,
        }
    }
}

impl fmt::Display for Semiring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Semiring::SumProduct => "sum",
            Semiring::Count => "count",
            Semiring::MinPlus => "min",
            Semiring::MaxPlus => "max",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ALL: [Semiring; 4] = [Semiring::SumProduct, Semiring::Count, Semiring::MinPlus, Semiring::MaxPlus];

    // Small integers keep (+, ×) exact so the laws hold bit-for-bit.
    fn val() -> impl Strategy<Value = f64> {
        (-50i32..50).prop_map(f64::from)
    }

    proptest! {
        #[test]
        fn semiring_laws(a in val(), b in val(), c in val()) {
            for s in ALL {
                prop_assert_eq!(s.plus(a, b), s.plus(b, a));
                prop_assert_eq!(s.plus(s.plus(a, b), c), s.plus(a, s.plus(b, c)));
                prop_assert_eq!(s.times(a, b), s.times(b, a));
                prop_assert_eq!(s.times(s.times(a, b), c), s.times(a, s.times(b, c)));
                prop_assert_eq!(s.plus(a, s.zero()), a);
                prop_assert_eq!(s.times(a, s.one()), a);
                prop_assert_eq!(s.times(a, s.plus(b, c)), s.plus(s.times(a, b), s.times(a, c)));
                prop_assert_eq!(s.times(a, s.zero()), s.zero());
            }
        }
    }

    #[test]
    fn plus_n_matches_repeated_plus() {
        for s in ALL {
            let mut acc = s.zero();
            for n in 0..5 {
                assert_eq!(s.plus_n(3.0, n), acc);
                acc = s.plus(acc, 3.0);
            }
        }
    }
}
