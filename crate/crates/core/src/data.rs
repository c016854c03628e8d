//! Terms, conditions, assertions and guarding elements.
//!
//! The workbench fixes one closed representation able to carry every shipped
//! calculus: plain names, priority-annotated channels `a:n`, name-set
//! assertions, and the product assertions `(A ; E)` pairing a base assertion
//! with a multiset of guarding elements. Which constructors an instance
//! actually uses, and what entailment means for them, is decided by the
//! instance bundle in `instance`.

use std::collections::BTreeSet;
use std::fmt;

use crate::fimm::{ExtInt, Fimm};
use crate::nominal::{CanonState, Name, Nominal};

/// A data term: either a plain name or a channel annotated with a priority
/// level, written `a:n`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Name(Name),
    Chan(Name, u32),
}

impl Term {
    pub fn head_name(&self) -> Name {
        match self {
            Term::Name(n) => *n,
            Term::Chan(n, _) => *n,
        }
    }

    pub fn subst(&self, sub: &Subst) -> Term {
        match self {
            Term::Name(n) => match sub.lookup(*n) {
                Some(t) => t.clone(),
                None => self.clone(),
            },
            // Substitution never rewrites the level component.
            Term::Chan(n, k) => match sub.lookup(*n) {
                Some(t) => Term::Chan(t.head_name(), *k),
                None => self.clone(),
            },
        }
    }

    pub fn canon_into(&self, st: &mut CanonState) -> Term {
        match self {
            Term::Name(n) => Term::Name(st.lookup(*n)),
            Term::Chan(n, k) => Term::Chan(st.lookup(*n), *k),
        }
    }
}

impl Nominal for Term {
    fn swap(&self, a: Name, b: Name) -> Term {
        match self {
            Term::Name(n) => Term::Name(n.swap(a, b)),
            Term::Chan(n, k) => Term::Chan(n.swap(a, b), *k),
        }
    }

    fn free_names(&self, acc: &mut BTreeSet<Name>) {
        acc.insert(self.head_name());
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Name(n) => write!(f, "{n}"),
            Term::Chan(n, k) => write!(f, "{n}:{k}"),
        }
    }
}

/// Simultaneous substitution of terms for distinct names.
#[derive(Debug, Clone, Default)]
pub struct Subst {
    pairs: Vec<(Name, Term)>,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum SubstError {
    #[error("substitution arity mismatch: {names} names vs {terms} terms")]
    Arity { names: usize, terms: usize },
    #[error("substitution domain contains duplicate name {0}")]
    Duplicate(Name),
}

impl Subst {
    pub fn new(names: &[Name], terms: &[Term]) -> Result<Subst, SubstError> {
        if names.len() != terms.len() {
            return Err(SubstError::Arity {
                names: names.len(),
                terms: terms.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for n in names {
            if !seen.insert(*n) {
                return Err(SubstError::Duplicate(*n));
            }
        }
        Ok(Subst {
            pairs: names.iter().copied().zip(terms.iter().cloned()).collect(),
        })
    }

    pub fn single(name: Name, term: Term) -> Subst {
        Subst {
            pairs: vec![(name, term)],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn lookup(&self, n: Name) -> Option<&Term> {
        self.pairs.iter().find(|(m, _)| *m == n).map(|(_, t)| t)
    }

    pub fn domain(&self) -> BTreeSet<Name> {
        self.pairs.iter().map(|(n, _)| *n).collect()
    }

    pub fn range_support(&self) -> BTreeSet<Name> {
        let mut s = BTreeSet::new();
        for (_, t) in &self.pairs {
            t.free_names(&mut s);
        }
        s
    }

    /// Names a capture-avoiding traversal must keep binders clear of.
    pub fn relevant_names(&self) -> BTreeSet<Name> {
        let mut s = self.domain();
        s.extend(self.range_support());
        s
    }
}

/// A condition, evaluated against assertions by an instance's entailment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    /// Always-true condition, available in every instance.
    Top,
    /// Constant truth value (the boolean conditions of the annotated-channel
    /// calculus).
    Bool(bool),
    /// Name/term equality test, written `a=b`.
    Eq(Term, Term),
    /// Channel priority test, written `a<p:n`.
    Prio(Term, u32),
    /// Multiplicity test `(z)(phi,alpha)` over a guarding element.
    MultTest(ExtInt, Box<GuardingElement>),
    /// Channel equivalence of the constructed target calculus, `M<->'N`.
    ChanEqPrime(Term, Term),
}

impl Condition {
    pub fn subst(&self, sub: &Subst) -> Condition {
        match self {
            Condition::Top => Condition::Top,
            Condition::Bool(b) => Condition::Bool(*b),
            Condition::Eq(m, n) => Condition::Eq(m.subst(sub), n.subst(sub)),
            Condition::Prio(m, p) => Condition::Prio(m.subst(sub), *p),
            Condition::MultTest(z, ge) => Condition::MultTest(*z, Box::new(ge.subst(sub))),
            Condition::ChanEqPrime(m, n) => {
                Condition::ChanEqPrime(m.subst(sub), n.subst(sub))
            }
        }
    }

    pub fn canon_into(&self, st: &mut CanonState) -> Condition {
        match self {
            Condition::Top => Condition::Top,
            Condition::Bool(b) => Condition::Bool(*b),
            Condition::Eq(m, n) => Condition::Eq(m.canon_into(st), n.canon_into(st)),
            Condition::Prio(m, p) => Condition::Prio(m.canon_into(st), *p),
            Condition::MultTest(z, ge) => Condition::MultTest(*z, Box::new(ge.canon_into(st))),
            Condition::ChanEqPrime(m, n) => {
                Condition::ChanEqPrime(m.canon_into(st), n.canon_into(st))
            }
        }
    }
}

impl Nominal for Condition {
    fn swap(&self, a: Name, b: Name) -> Condition {
        match self {
            Condition::Top => Condition::Top,
            Condition::Bool(v) => Condition::Bool(*v),
            Condition::Eq(m, n) => Condition::Eq(m.swap(a, b), n.swap(a, b)),
            Condition::Prio(m, p) => Condition::Prio(m.swap(a, b), *p),
            Condition::MultTest(z, ge) => Condition::MultTest(*z, Box::new(ge.swap(a, b))),
            Condition::ChanEqPrime(m, n) => {
                Condition::ChanEqPrime(m.swap(a, b), n.swap(a, b))
            }
        }
    }

    fn free_names(&self, acc: &mut BTreeSet<Name>) {
        match self {
            Condition::Top | Condition::Bool(_) => {}
            Condition::Eq(m, n) | Condition::ChanEqPrime(m, n) => {
                m.free_names(acc);
                n.free_names(acc);
            }
            Condition::Prio(m, _) => m.free_names(acc),
            Condition::MultTest(_, ge) => ge.free_names(acc),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Top => write!(f, "T"),
            Condition::Bool(b) => write!(f, "{b}"),
            Condition::Eq(m, n) => write!(f, "{m}={n}"),
            Condition::Prio(m, p) => write!(f, "{m}<p:{p}"),
            Condition::MultTest(z, ge) => write!(f, "({z}){ge}"),
            Condition::ChanEqPrime(m, n) => write!(f, "{m}<->'{n}"),
        }
    }
}

/// An assertion. `Unit` is the polymorphic unit; `NameSet` carries the
/// flipped-priority channels of the dynamic-priority calculus; `Pair` is the
/// product assertion of a constructed target calculus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Assertion {
    Unit,
    NameSet(BTreeSet<Name>),
    Pair(Box<Assertion>, Fimm<GuardingElement>),
}

impl Assertion {
    pub fn name_set(names: impl IntoIterator<Item = Name>) -> Assertion {
        Assertion::NameSet(names.into_iter().collect())
    }

    pub fn pair(base: Assertion, elems: Fimm<GuardingElement>) -> Assertion {
        Assertion::Pair(Box::new(base), elems)
    }

    /// Whether this assertion is a unit of composition.
    pub fn is_unit(&self) -> bool {
        match self {
            Assertion::Unit => true,
            Assertion::NameSet(s) => s.is_empty(),
            Assertion::Pair(base, elems) => base.is_unit() && elems.is_empty(),
        }
    }

    /// Composition shared by all shipped instances: symmetric difference on
    /// name sets, componentwise on pairs, `Unit` neutral everywhere.
    pub fn compose_structural(&self, other: &Assertion) -> Assertion {
        match (self, other) {
            (Assertion::Unit, x) | (x, Assertion::Unit) => x.clone(),
            (Assertion::NameSet(a), Assertion::NameSet(b)) => {
                Assertion::NameSet(a.symmetric_difference(b).copied().collect())
            }
            (Assertion::Pair(b1, e1), Assertion::Pair(b2, e2)) => {
                Assertion::pair(b1.compose_structural(b2), e1.union(e2))
            }
            (a, b) => panic!("composing assertions of different shapes: {a} and {b}"),
        }
    }

    pub fn subst(&self, sub: &Subst) -> Assertion {
        match self {
            Assertion::Unit => Assertion::Unit,
            Assertion::NameSet(s) => Assertion::NameSet(
                s.iter()
                    .map(|n| match sub.lookup(*n) {
                        Some(t) => t.head_name(),
                        None => *n,
                    })
                    .collect(),
            ),
            Assertion::Pair(base, elems) => {
                Assertion::pair(base.subst(sub), elems.map_elems(|ge| ge.subst(sub)))
            }
        }
    }

    pub fn canon_into(&self, st: &mut CanonState) -> Assertion {
        match self {
            Assertion::Unit => Assertion::Unit,
            Assertion::NameSet(s) => {
                Assertion::NameSet(s.iter().map(|n| st.lookup(*n)).collect())
            }
            Assertion::Pair(base, elems) => Assertion::pair(
                base.canon_into(st),
                elems.map_elems(|ge| ge.canon_into(st)),
            ),
        }
    }
}

impl Nominal for Assertion {
    fn swap(&self, a: Name, b: Name) -> Assertion {
        match self {
            Assertion::Unit => Assertion::Unit,
            Assertion::NameSet(s) => Assertion::NameSet(s.swap(a, b)),
            Assertion::Pair(base, elems) => {
                Assertion::pair(base.swap(a, b), elems.map_elems(|ge| ge.swap(a, b)))
            }
        }
    }

    fn free_names(&self, acc: &mut BTreeSet<Name>) {
        match self {
            Assertion::Unit => {}
            Assertion::NameSet(s) => acc.extend(s.iter().copied()),
            Assertion::Pair(base, elems) => {
                base.free_names(acc);
                for (ge, _) in elems.iter() {
                    ge.free_names(acc);
                }
            }
        }
    }
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assertion::Unit => write!(f, "1"),
            Assertion::NameSet(s) => {
                write!(f, "{{")?;
                for (i, n) in s.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{n}")?;
                }
                write!(f, "}}")
            }
            Assertion::Pair(base, elems) => write!(f, "({base} ; {elems})"),
        }
    }
}

/// An input or output prefix, the payload of a guarding element.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Prefix {
    Out {
        subj: Term,
        obj: Term,
    },
    In {
        subj: Term,
        binders: Vec<Name>,
        pattern: Term,
    },
}

impl Prefix {
    pub fn is_input(&self) -> bool {
        matches!(self, Prefix::In { .. })
    }

    pub fn subject(&self) -> &Term {
        match self {
            Prefix::Out { subj, .. } => subj,
            Prefix::In { subj, .. } => subj,
        }
    }
}

impl Nominal for Prefix {
    fn swap(&self, a: Name, b: Name) -> Prefix {
        match self {
            Prefix::Out { subj, obj } => Prefix::Out {
                subj: subj.swap(a, b),
                obj: obj.swap(a, b),
            },
            Prefix::In {
                subj,
                binders,
                pattern,
            } => Prefix::In {
                subj: subj.swap(a, b),
                binders: binders.clone(),
                pattern: pattern.swap(a, b),
            },
        }
    }

    fn free_names(&self, acc: &mut BTreeSet<Name>) {
        match self {
            Prefix::Out { subj, obj } => {
                subj.free_names(acc);
                obj.free_names(acc);
            }
            Prefix::In {
                subj,
                binders,
                pattern,
            } => {
                subj.free_names(acc);
                let mut inner = BTreeSet::new();
                pattern.free_names(&mut inner);
                for b in binders {
                    inner.remove(b);
                }
                acc.extend(inner);
            }
        }
    }
}

/// A prefix guarded by a condition. Input binders are identified up to
/// alpha-equivalence; construction renames them to position-indexed atoms
/// from a reserved namespace so that structural equality, ordering and
/// hashing coincide with alpha-equivalence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GuardingElement {
    pub guard: Condition,
    pub prefix: Prefix,
}

impl GuardingElement {
    pub fn new(guard: Condition, prefix: Prefix) -> GuardingElement {
        let prefix = match prefix {
            Prefix::In {
                subj,
                binders,
                pattern,
            } => {
                let mut pat = pattern;
                let mut canon = Vec::with_capacity(binders.len());
                for (i, b) in binders.iter().enumerate() {
                    let c = Name::canon_binder(i as u32);
                    if *b != c {
                        pat = pat.swap(*b, c);
                    }
                    canon.push(c);
                }
                Prefix::In {
                    subj,
                    binders: canon,
                    pattern: pat,
                }
            }
            out => out,
        };
        GuardingElement { guard, prefix }
    }

    pub fn bare(prefix: Prefix) -> GuardingElement {
        GuardingElement::new(Condition::Top, prefix)
    }

    pub fn subst(&self, sub: &Subst) -> GuardingElement {
        // Binders are reserved atoms, never in a substitution's domain or
        // range, so the traversal cannot capture.
        debug_assert!(sub.relevant_names().iter().all(|n| !n.is_canonical()));
        let prefix = match &self.prefix {
            Prefix::Out { subj, obj } => Prefix::Out {
                subj: subj.subst(sub),
                obj: obj.subst(sub),
            },
            Prefix::In {
                subj,
                binders,
                pattern,
            } => Prefix::In {
                subj: subj.subst(sub),
                binders: binders.clone(),
                pattern: pattern.subst(sub),
            },
        };
        GuardingElement {
            guard: self.guard.subst(sub),
            prefix,
        }
    }

    pub fn canon_into(&self, st: &mut CanonState) -> GuardingElement {
        let prefix = match &self.prefix {
            Prefix::Out { subj, obj } => Prefix::Out {
                subj: subj.canon_into(st),
                obj: obj.canon_into(st),
            },
            Prefix::In {
                subj,
                binders,
                pattern,
            } => Prefix::In {
                subj: subj.canon_into(st),
                binders: binders.clone(),
                pattern: pattern.canon_into(st),
            },
        };
        GuardingElement {
            guard: self.guard.canon_into(st),
            prefix,
        }
    }
}

impl Nominal for GuardingElement {
    fn swap(&self, a: Name, b: Name) -> GuardingElement {
        debug_assert!(!a.is_canonical() && !b.is_canonical());
        GuardingElement {
            guard: self.guard.swap(a, b),
            prefix: self.prefix.swap(a, b),
        }
    }

    fn free_names(&self, acc: &mut BTreeSet<Name>) {
        self.guard.free_names(acc);
        self.prefix.free_names(acc);
    }
}

impl fmt::Display for GuardingElement {
    /// `[phi]out(M,N)` / `[phi]in(M,\xs,X)`, the `[T]` guard omitted.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.guard != Condition::Top {
            write!(f, "[{}]", self.guard)?;
        }
        match &self.prefix {
            Prefix::Out { subj, obj } => write!(f, "out({subj},{obj})"),
            Prefix::In {
                subj,
                binders,
                pattern,
            } => {
                // Pick display names for the reserved binder atoms that do
                // not collide with any free name of the element.
                let mut taken: BTreeSet<String> =
                    self.support().iter().map(|n| n.hint()).collect();
                let mut shown = Vec::new();
                for (i, _) in binders.iter().enumerate() {
                    let mut cand = format!("u{i}");
                    while taken.contains(&cand) {
                        cand.push('_');
                    }
                    taken.insert(cand.clone());
                    shown.push(cand);
                }
                let render = |t: &Term| -> String {
                    match t {
                        Term::Name(n) => match binders.iter().position(|b| b == n) {
                            Some(i) => shown[i].clone(),
                            None => n.to_string(),
                        },
                        Term::Chan(n, k) => match binders.iter().position(|b| b == n) {
                            Some(i) => format!("{}:{k}", shown[i]),
                            None => format!("{n}:{k}"),
                        },
                    }
                };
                write!(f, "in({},\\", render(subj))?;
                for (i, s) in shown.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{s}")?;
                }
                write!(f, ",{})", render(pattern))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(s: &str) -> Name {
        Name::intern(s)
    }

    #[test]
    fn term_substitution() {
        let x = n("x");
        let m = n("m");
        let sub = Subst::single(x, Term::Name(m));
        assert_eq!(Term::Name(x).subst(&sub), Term::Name(m));
        assert_eq!(Term::Chan(x, 3).subst(&sub), Term::Chan(m, 3));
        let y = n("y");
        assert_eq!(Term::Name(y).subst(&sub), Term::Name(y));
    }

    #[test]
    fn subst_arity_checked() {
        let x = n("x");
        assert!(Subst::new(&[x], &[]).is_err());
        assert!(Subst::new(&[x, x], &[Term::Name(x), Term::Name(x)]).is_err());
    }

    #[test]
    fn compose_structural_xor() {
        let a = Assertion::name_set([n("a")]);
        let ab = Assertion::name_set([n("a"), n("b")]);
        assert_eq!(a.compose_structural(&ab), Assertion::name_set([n("b")]));
        assert_eq!(a.compose_structural(&a), Assertion::name_set([]));
        assert!(a.compose_structural(&a).is_unit());
        assert_eq!(Assertion::Unit.compose_structural(&a), a);
    }

    #[test]
    fn pair_composition_is_componentwise() {
        let ge = GuardingElement::bare(Prefix::Out {
            subj: Term::Name(n("x")),
            obj: Term::Name(n("x")),
        });
        let p1 = Assertion::pair(
            Assertion::name_set([n("a")]),
            Fimm::singleton(ExtInt::Fin(1), ge.clone()),
        );
        let p2 = Assertion::pair(
            Assertion::name_set([n("a")]),
            Fimm::singleton(ExtInt::Fin(-1), ge),
        );
        let unit = p1.compose_structural(&p2);
        assert!(unit.is_unit());
    }

    #[test]
    fn guarding_element_alpha_identification() {
        let x = n("x");
        let u = n("u");
        let v = n("v");
        let g1 = GuardingElement::bare(Prefix::In {
            subj: Term::Name(x),
            binders: vec![u],
            pattern: Term::Name(u),
        });
        let g2 = GuardingElement::bare(Prefix::In {
            subj: Term::Name(x),
            binders: vec![v],
            pattern: Term::Name(v),
        });
        assert_eq!(g1, g2);
        // binders do not show up in the support
        assert_eq!(g1.support(), [x].into_iter().collect());
    }

    #[test]
    fn guarding_element_substitution_is_identity_on_binders() {
        let x = n("x");
        let m = n("m");
        let u = n("u");
        let ge = GuardingElement::bare(Prefix::In {
            subj: Term::Name(x),
            binders: vec![u],
            pattern: Term::Name(u),
        });
        // substituting for a name that only occurs bound changes nothing
        let sub = Subst::single(u, Term::Name(m));
        assert_eq!(ge.subst(&sub), ge);
        // substituting the subject rewrites it
        let sub = Subst::single(x, Term::Name(m));
        let ge2 = ge.subst(&sub);
        assert_eq!(ge2.prefix.subject(), &Term::Name(m));
    }

    #[test]
    fn display_forms() {
        let x = n("x");
        let y = n("y");
        let out = GuardingElement::bare(Prefix::Out {
            subj: Term::Name(x),
            obj: Term::Name(y),
        });
        assert_eq!(out.to_string(), "out(x,y)");
        let guarded = GuardingElement::new(
            Condition::Eq(Term::Name(x), Term::Name(y)),
            Prefix::Out {
                subj: Term::Name(x),
                obj: Term::Name(y),
            },
        );
        assert_eq!(guarded.to_string(), "[x=y]out(x,y)");
        let inp = GuardingElement::bare(Prefix::In {
            subj: Term::Name(y),
            binders: vec![n("w")],
            pattern: Term::Name(n("w")),
        });
        assert_eq!(inp.to_string(), "in(y,\\u0,u0)");
        assert_eq!(
            Assertion::pair(Assertion::Unit, Fimm::singleton(ExtInt::Inf, inp))
                .to_string(),
            "(1 ; {(inf)in(y,\\u0,u0)})"
        );
    }

    #[test]
    fn condition_display() {
        let x = Term::Name(n("x"));
        let y = Term::Name(n("y"));
        assert_eq!(Condition::Top.to_string(), "T");
        assert_eq!(Condition::Eq(x.clone(), y.clone()).to_string(), "x=y");
        assert_eq!(Condition::Prio(x.clone(), 1).to_string(), "x<p:1");
        assert_eq!(Condition::ChanEqPrime(x, y).to_string(), "x<->'y");
    }
}
