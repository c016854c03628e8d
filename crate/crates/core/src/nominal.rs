//! Names, permutations, support and freshness.
//!
//! Every piece of syntax in the workbench (terms, conditions, assertions,
//! agents, frames, actions) is a nominal value: it supports name swapping
//! and has a finite support. Alpha-equivalence is decided by conversion to
//! a canonical form in which bound names are replaced by position-indexed
//! canonical atoms, which also gives hashable state keys for memoisation.

use std::collections::BTreeSet;
use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Mutex, OnceLock};

/// Atom identifiers are partitioned into four disjoint namespaces.
/// User-written names come from the interner; fresh names from a monotone
/// counter (so a fresh name is never equal to any name seen before);
/// the two canonical namespaces are reserved for alpha-canonical forms and
/// for the binders of guarding elements. Canonical atoms never occur free
/// in user-facing syntax.
const FRESH_BASE: u32 = 1 << 30;
const CANON_ALPHA_BASE: u32 = 2 << 30;
const CANON_BINDER_BASE: u32 = 3 << 30;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name(u32);

struct Registry {
    by_text: HashMap<String, u32>,
    texts: Vec<String>,
    fresh_hints: HashMap<u32, String>,
}

fn registry() -> &'static Mutex<Registry> {
    static REG: OnceLock<Mutex<Registry>> = OnceLock::new();
    REG.get_or_init(|| {
        Mutex::new(Registry {
            by_text: HashMap::new(),
            texts: Vec::new(),
            fresh_hints: HashMap::new(),
        })
    })
}

static FRESH_COUNTER: AtomicU32 = AtomicU32::new(FRESH_BASE);

impl Name {
    /// Intern a user-written name. Equal strings always map to the same atom.
    pub fn intern(text: &str) -> Name {
        let mut reg = registry().lock().unwrap();
        if let Some(&id) = reg.by_text.get(text) {
            return Name(id);
        }
        let id = reg.texts.len() as u32;
        assert!(id < FRESH_BASE, "user name space exhausted");
        reg.texts.push(text.to_string());
        reg.by_text.insert(text.to_string(), id);
        Name(id)
    }

    /// A brand-new atom, distinct from every name created so far.
    /// The hint is only used for display.
    pub fn fresh(hint: &str) -> Name {
        let id = FRESH_COUNTER.fetch_add(1, Ordering::Relaxed);
        assert!(id < CANON_ALPHA_BASE, "fresh name space exhausted");
        let mut reg = registry().lock().unwrap();
        reg.fresh_hints.insert(id, hint.to_string());
        Name(id)
    }

    /// Position-indexed atom used by alpha-canonical forms.
    pub fn canon_alpha(k: u32) -> Name {
        Name(CANON_ALPHA_BASE + k)
    }

    /// Position-indexed atom used for the binders of guarding elements.
    pub fn canon_binder(k: u32) -> Name {
        Name(CANON_BINDER_BASE + k)
    }

    pub fn is_user(&self) -> bool {
        self.0 < FRESH_BASE
    }

    pub fn is_canonical(&self) -> bool {
        self.0 >= CANON_ALPHA_BASE
    }

    /// Display text: user names print as written, fresh names derive from
    /// their hint with a numeric disambiguator.
    pub fn hint(&self) -> String {
        if self.0 >= CANON_BINDER_BASE {
            return format!("%{}", self.0 - CANON_BINDER_BASE);
        }
        if self.0 >= CANON_ALPHA_BASE {
            return format!("#{}", self.0 - CANON_ALPHA_BASE);
        }
        let reg = registry().lock().unwrap();
        if self.0 >= FRESH_BASE {
            let base = reg
                .fresh_hints
                .get(&self.0)
                .cloned()
                .unwrap_or_else(|| "n".to_string());
            format!("{}'{}", base, self.0 - FRESH_BASE)
        } else {
            reg.texts[self.0 as usize].clone()
        }
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.hint())
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.hint())
    }
}

/// A name not occurring in `avoid`. Fresh names are drawn from a monotone
/// counter namespace disjoint from user-written names, so traces are
/// deterministic and reproducible.
pub fn fresh_name(avoid: &BTreeSet<Name>, hint: &str) -> Name {
    loop {
        let n = Name::fresh(hint);
        if !avoid.contains(&n) {
            return n;
        }
    }
}

/// Values of nominal datatypes: name swapping distributes over all
/// constructors, and `free_names` computes the (structural) support.
pub trait Nominal: Sized {
    fn swap(&self, a: Name, b: Name) -> Self;
    fn free_names(&self, acc: &mut BTreeSet<Name>);

    fn support(&self) -> BTreeSet<Name> {
        let mut s = BTreeSet::new();
        self.free_names(&mut s);
        s
    }
}

impl Nominal for Name {
    fn swap(&self, a: Name, b: Name) -> Name {
        if *self == a {
            b
        } else if *self == b {
            a
        } else {
            *self
        }
    }

    fn free_names(&self, acc: &mut BTreeSet<Name>) {
        acc.insert(*self);
    }
}

impl<T: Nominal> Nominal for Vec<T> {
    fn swap(&self, a: Name, b: Name) -> Vec<T> {
        self.iter().map(|x| x.swap(a, b)).collect()
    }

    fn free_names(&self, acc: &mut BTreeSet<Name>) {
        for x in self {
            x.free_names(acc);
        }
    }
}

impl Nominal for BTreeSet<Name> {
    fn swap(&self, a: Name, b: Name) -> BTreeSet<Name> {
        self.iter().map(|x| x.swap(a, b)).collect()
    }

    fn free_names(&self, acc: &mut BTreeSet<Name>) {
        acc.extend(self.iter().copied());
    }
}

/// Scoped renaming environment used when computing alpha-canonical forms.
/// Each binder encountered in traversal order is mapped to the next
/// position-indexed canonical atom.
pub struct CanonState {
    scope: Vec<(Name, Name)>,
    next: u32,
}

impl CanonState {
    pub fn new() -> Self {
        CanonState {
            scope: Vec::new(),
            next: 0,
        }
    }

    pub fn bind(&mut self, n: Name) -> Name {
        let c = Name::canon_alpha(self.next);
        self.next += 1;
        self.scope.push((n, c));
        c
    }

    pub fn mark(&self) -> usize {
        self.scope.len()
    }

    pub fn release(&mut self, mark: usize) {
        self.scope.truncate(mark);
    }

    /// Innermost binding wins, free names map to themselves.
    pub fn lookup(&self, n: Name) -> Name {
        for (orig, canon) in self.scope.iter().rev() {
            if *orig == n {
                return *canon;
            }
        }
        n
    }
}

impl Default for CanonState {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interned_names_are_stable() {
        let a = Name::intern("a");
        let b = Name::intern("b");
        let a2 = Name::intern("a");
        assert_eq!(a, a2);
        assert_ne!(a, b);
        assert_eq!(a.to_string(), "a");
    }

    #[test]
    fn fresh_name_avoids_avoid_set() {
        let empty = BTreeSet::new();
        let n0 = fresh_name(&empty, "n");
        assert!(!empty.contains(&n0));

        let a = Name::intern("a");
        let b = Name::intern("b");
        let avoid: BTreeSet<Name> = [a, b].into_iter().collect();
        let n = fresh_name(&avoid, "a");
        assert!(!avoid.contains(&n));
        assert_ne!(n, a);
        assert_ne!(n, b);
    }

    #[test]
    fn fresh_names_are_pairwise_distinct() {
        let mut seen = BTreeSet::new();
        for _ in 0..100 {
            let n = fresh_name(&seen, "x");
            assert!(seen.insert(n));
        }
    }

    #[test]
    fn swap_on_names() {
        let a = Name::intern("a");
        let b = Name::intern("b");
        let c = Name::intern("c");
        assert_eq!(a.swap(a, b), b);
        assert_eq!(b.swap(a, b), a);
        assert_eq!(c.swap(a, b), c);
        // involution
        assert_eq!(a.swap(a, b).swap(a, b), a);
    }

    #[test]
    fn namespaces_are_disjoint() {
        let u = Name::intern("u");
        let f = Name::fresh("u");
        let ca = Name::canon_alpha(0);
        let cb = Name::canon_binder(0);
        assert!(u.is_user() && !f.is_user());
        assert!(!u.is_canonical() && !f.is_canonical());
        assert!(ca.is_canonical() && cb.is_canonical());
        let all = [u, f, ca, cb];
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
    }
}
