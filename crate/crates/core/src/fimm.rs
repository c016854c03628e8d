//! Finite integer-indexed multisets with a maximal element `inf`.
//!
//! A FIMM over `S` assigns to every element of `S` a multiplicity in
//! `Z + {inf}`, zero for all but finitely many elements. Negative
//! multiplicities retract earlier occurrences when multisets are unioned;
//! `inf` absorbs finite retraction and is never retracted.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Add;

/// An integer extended with the absorbing top element `inf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExtInt {
    Fin(i64),
    Inf,
}

impl ExtInt {
    pub fn is_zero(&self) -> bool {
        matches!(self, ExtInt::Fin(0))
    }

    pub fn is_positive(&self) -> bool {
        match self {
            ExtInt::Fin(z) => *z > 0,
            ExtInt::Inf => true,
        }
    }

    /// Sign flip of a finite value; `inf` has no negation.
    pub fn checked_neg(&self) -> Option<ExtInt> {
        match self {
            ExtInt::Fin(z) => Some(ExtInt::Fin(-z)),
            ExtInt::Inf => None,
        }
    }
}

impl Add for ExtInt {
    type Output = ExtInt;

    fn add(self, other: ExtInt) -> ExtInt {
        match (self, other) {
            (ExtInt::Fin(a), ExtInt::Fin(b)) => ExtInt::Fin(a + b),
            _ => ExtInt::Inf,
        }
    }
}

impl PartialOrd for ExtInt {
    fn partial_cmp(&self, other: &ExtInt) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtInt {
    fn cmp(&self, other: &ExtInt) -> std::cmp::Ordering {
        match (self, other) {
            (ExtInt::Fin(a), ExtInt::Fin(b)) => a.cmp(b),
            (ExtInt::Fin(_), ExtInt::Inf) => std::cmp::Ordering::Less,
            (ExtInt::Inf, ExtInt::Fin(_)) => std::cmp::Ordering::Greater,
            (ExtInt::Inf, ExtInt::Inf) => std::cmp::Ordering::Equal,
        }
    }
}

impl fmt::Display for ExtInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtInt::Fin(z) => write!(f, "{z}"),
            ExtInt::Inf => write!(f, "inf"),
        }
    }
}

/// Finite integer-indexed multiset. Entries with multiplicity zero are
/// never stored, and equality is extensional equality of the stored map.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fimm<T: Ord + Clone> {
    entries: BTreeMap<T, ExtInt>,
}

impl<T: Ord + Clone> Fimm<T> {
    pub fn empty() -> Self {
        Fimm {
            entries: BTreeMap::new(),
        }
    }

    pub fn singleton(mult: ExtInt, elem: T) -> Self {
        let mut m = Fimm::empty();
        m.add(elem, mult);
        m
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (ExtInt, T)>) -> Self {
        let mut m = Fimm::empty();
        for (z, e) in entries {
            m.add(e, z);
        }
        m
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Pointwise addition of a single entry, dropping it if the result is zero.
    pub fn add(&mut self, elem: T, mult: ExtInt) {
        if mult.is_zero() {
            return;
        }
        let entry = self.entries.entry(elem);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(mult);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = *o.get() + mult;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    /// Pointwise addition of multiplicities.
    pub fn union(&self, other: &Fimm<T>) -> Fimm<T> {
        let mut out = self.clone();
        for (e, z) in &other.entries {
            out.add(e.clone(), *z);
        }
        out
    }

    pub fn multiplicity(&self, elem: &T) -> ExtInt {
        self.entries.get(elem).copied().unwrap_or(ExtInt::Fin(0))
    }

    /// Membership is strictly positive multiplicity.
    pub fn member(&self, elem: &T) -> bool {
        self.multiplicity(elem).is_positive()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, ExtInt)> {
        self.entries.iter().map(|(e, z)| (e, *z))
    }

    /// Elements with positive multiplicity.
    pub fn members(&self) -> impl Iterator<Item = &T> {
        self.entries
            .iter()
            .filter(|(_, z)| z.is_positive())
            .map(|(e, _)| e)
    }

    /// Flip the sign of every multiplicity. `None` if any entry is `inf`.
    pub fn negated(&self) -> Option<Fimm<T>> {
        let mut out = Fimm::empty();
        for (e, z) in &self.entries {
            out.add(e.clone(), z.checked_neg()?);
        }
        Some(out)
    }

    /// Rebuild the multiset through an element transformation; images that
    /// coincide have their multiplicities added.
    pub fn map_elems<F: FnMut(&T) -> T>(&self, mut f: F) -> Fimm<T> {
        let mut out = Fimm::empty();
        for (e, z) in &self.entries {
            out.add(f(e), *z);
        }
        out
    }
}

impl<T: Ord + Clone + fmt::Display> fmt::Display for Fimm<T> {
    /// Canonical text form `{(z)elem, ...}`, entries sorted by the element's
    /// canonical print; `(inf)` prints the maximal element.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut rendered: Vec<(String, ExtInt)> = self
            .entries
            .iter()
            .map(|(e, z)| (e.to_string(), *z))
            .collect();
        rendered.sort();
        write!(f, "{{")?;
        for (i, (e, z)) in rendered.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({z}){e}")?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fin(z: i64) -> ExtInt {
        ExtInt::Fin(z)
    }

    #[test]
    fn empty_has_zero_multiplicity_everywhere() {
        let e: Fimm<&str> = Fimm::empty();
        assert_eq!(e.multiplicity(&"alpha"), fin(0));
        assert!(!e.member(&"alpha"));
    }

    #[test]
    fn union_with_empty_is_identity() {
        let m = Fimm::from_entries([(fin(2), "alpha"), (fin(-1), "beta")]);
        assert_eq!(m.union(&Fimm::empty()), m);
        assert_eq!(Fimm::empty().union(&m), m);
    }

    #[test]
    fn retraction_cancels() {
        let pos = Fimm::singleton(fin(1), "alpha");
        let neg = Fimm::singleton(fin(-1), "alpha");
        assert_eq!(pos.union(&neg), Fimm::empty());
        assert!(!pos.union(&neg).member(&"alpha"));
    }

    #[test]
    fn inf_absorbs_retraction() {
        let inf = Fimm::singleton(ExtInt::Inf, "alpha");
        let neg = Fimm::singleton(fin(-1), "alpha");
        assert_eq!(inf.union(&neg), inf);
        assert_eq!(inf.union(&neg).multiplicity(&"alpha"), ExtInt::Inf);
    }

    #[test]
    fn pointwise_addition() {
        let a = Fimm::from_entries([(fin(2), "alpha"), (fin(1), "beta")]);
        let b = Fimm::singleton(fin(-1), "alpha");
        let expect = Fimm::from_entries([(fin(1), "alpha"), (fin(1), "beta")]);
        assert_eq!(a.union(&b), expect);
    }

    #[test]
    fn inf_plus_inf() {
        let a = Fimm::singleton(ExtInt::Inf, "alpha");
        assert_eq!(a.union(&a).multiplicity(&"alpha"), ExtInt::Inf);
    }

    #[test]
    fn negative_multiplicity_is_not_member() {
        let m = Fimm::singleton(fin(-1), "alpha");
        assert!(!m.member(&"alpha"));
        let inf = Fimm::singleton(ExtInt::Inf, "alpha");
        assert!(inf.member(&"alpha"));
    }

    #[test]
    fn negation_of_finite_only() {
        let m = Fimm::from_entries([(fin(2), "a"), (fin(-3), "b")]);
        let n = m.negated().unwrap();
        assert_eq!(m.union(&n), Fimm::empty());
        let inf = Fimm::singleton(ExtInt::Inf, "a");
        assert!(inf.negated().is_none());
    }

    #[test]
    fn display_form() {
        let m = Fimm::from_entries([(ExtInt::Inf, "b"), (fin(-2), "a")]);
        assert_eq!(m.to_string(), "{(-2)a, (inf)b}");
        let e: Fimm<&str> = Fimm::empty();
        assert_eq!(e.to_string(), "{}");
    }
}
