//! The pluggable calculus parameter bundle and the executable requisite kit.
//!
//! An [`Instance`] supplies entailment, assertion composition, channel
//! equivalence, an optional channel priority operator, a pattern matcher and
//! finite test bases. Quantifications "for all conditions / assertions /
//! substitutions" are evaluated over the declared bases; for the shipped
//! instances over a fixed name pool this is exhaustive.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use dashmap::DashMap;
use rayon::prelude::*;

use crate::agent::{Agent, Diagnostic, Frame};
use crate::data::{Assertion, Condition, Subst, Term};
use crate::nominal::{fresh_name, Name, Nominal};

/// Priority levels are naturals; lower values have higher priority.
pub type PriorityLevel = u32;

pub trait Instance: Send + Sync {
    fn name(&self) -> String;

    fn unit(&self) -> Assertion;

    fn compose(&self, a: &Assertion, b: &Assertion) -> Assertion {
        a.compose_structural(b)
    }

    fn entails(&self, psi: &Assertion, cond: &Condition) -> bool;

    /// The channel-equivalence condition `M <-> N`.
    fn chan_eq(&self, m: &Term, n: &Term) -> Condition;

    /// Largest priority level the instance uses, when it has priorities.
    fn max_priority(&self) -> Option<PriorityLevel> {
        None
    }

    /// The priority condition `M < p`, for instances with priorities.
    fn prio_cond(&self, _m: &Term, _level: PriorityLevel) -> Option<Condition> {
        None
    }

    /// All `L~` with `pattern[binders := L~] = value`.
    fn matches(&self, pattern: &Term, binders: &[Name], value: &Term) -> Vec<Vec<Term>> {
        default_matches(pattern, binders, value)
    }

    fn assertion_basis(&self) -> Vec<Assertion>;

    fn condition_basis(&self) -> Vec<Condition>;

    fn term_universe(&self) -> Vec<Term>;

    /// Terms enumerated as prefix subjects / objects when generating agents.
    fn enum_subjects(&self) -> Vec<Term> {
        self.term_universe()
    }

    fn enum_objects(&self) -> Vec<Term> {
        self.term_universe()
            .into_iter()
            .filter(|t| matches!(t, Term::Name(_)))
            .collect()
    }

    /// Substitutions used by the requisite checker and the congruence
    /// checker; single-name substitutions over the term universe by default.
    fn subst_samples(&self) -> Vec<(Vec<Name>, Vec<Term>)> {
        let universe = self.term_universe();
        let names: Vec<Name> = universe
            .iter()
            .filter_map(|t| match t {
                Term::Name(n) => Some(*n),
                Term::Chan(..) => None,
            })
            .collect();
        let mut out = Vec::new();
        for x in &names {
            for t in &universe {
                if matches!(t, Term::Name(_)) {
                    out.push((vec![*x], vec![t.clone()]));
                }
            }
        }
        out
    }

    fn parse_term(&self, text: &str) -> Result<Term, String>;

    fn parse_condition(&self, text: &str) -> Result<Condition, String>;

    fn parse_assertion(&self, text: &str) -> Result<Assertion, String>;

    /// Instance-specific (sort) restrictions on parsed agents.
    fn validate_agent(&self, _agent: &Agent) -> Vec<Diagnostic> {
        Vec::new()
    }
}

pub fn has_prio(inst: &dyn Instance) -> bool {
    inst.max_priority().is_some()
}

/// Matcher for the pattern shapes the shipped instances use: a bare variable
/// pattern binds the whole value, a closed pattern matches only itself.
pub fn default_matches(pattern: &Term, binders: &[Name], value: &Term) -> Vec<Vec<Term>> {
    if binders.is_empty() {
        if pattern == value {
            return vec![Vec::new()];
        }
        return Vec::new();
    }
    if binders.len() == 1 {
        if let Term::Name(x) = pattern {
            if *x == binders[0] {
                return vec![vec![value.clone()]];
            }
        }
    }
    Vec::new()
}

/// `F |- phi`: some alpha variant of the frame whose binders are fresh for
/// `phi` entails `phi`.
pub fn frame_entails(inst: &dyn Instance, frame: &Frame, cond: &Condition) -> bool {
    let cond_names = cond.support();
    let clash = frame.binders.iter().any(|b| cond_names.contains(b));
    if !clash {
        return inst.entails(&frame.assertion, cond);
    }
    let mut assertion = frame.assertion.clone();
    let mut avoid = cond_names;
    avoid.extend(frame.support());
    for b in &frame.binders {
        if avoid.contains(b) {
            let b2 = fresh_name(&avoid, &b.hint());
            assertion = assertion.swap(*b, b2);
        }
    }
    inst.entails(&assertion, cond)
}

/// Static equivalence of frames, relative to a finite condition basis.
pub fn static_equiv(
    inst: &dyn Instance,
    f: &Frame,
    g: &Frame,
    basis: &[Condition],
) -> bool {
    basis
        .iter()
        .all(|c| frame_entails(inst, f, c) == frame_entails(inst, g, c))
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum PrioError {
    #[error("no priority level for {term} under {frame} (searched 0..={max})")]
    NoPriority {
        term: String,
        frame: String,
        max: PriorityLevel,
    },
    #[error("ambiguous priority for {term} under {frame}: levels {levels:?}")]
    Ambiguous {
        term: String,
        frame: String,
        levels: Vec<PriorityLevel>,
    },
    #[error("instance {0} has no priority operator")]
    NoPrioOperator(String),
}

/// The unique `p` with `F |- M < p`, scanning the instance's declared range.
pub fn prio_of_frame(
    inst: &dyn Instance,
    frame: &Frame,
    term: &Term,
) -> Result<PriorityLevel, PrioError> {
    let max = inst
        .max_priority()
        .ok_or_else(|| PrioError::NoPrioOperator(inst.name()))?;
    let mut found = Vec::new();
    for p in 0..=max {
        let cond = inst
            .prio_cond(term, p)
            .ok_or_else(|| PrioError::NoPrioOperator(inst.name()))?;
        if frame_entails(inst, frame, &cond) {
            found.push(p);
        }
    }
    match found.len() {
        0 => Err(PrioError::NoPriority {
            term: term.to_string(),
            frame: frame.to_string(),
            max,
        }),
        1 => Ok(found[0]),
        _ => Err(PrioError::Ambiguous {
            term: term.to_string(),
            frame: frame.to_string(),
            levels: found,
        }),
    }
}

#[derive(Debug, Clone)]
pub struct RequisiteFailure {
    pub law: String,
    pub witness: String,
}

impl fmt::Display for RequisiteFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.law, self.witness)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RequisiteReport {
    pub checked: usize,
    pub failures: Vec<RequisiteFailure>,
}

impl RequisiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for RequisiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} checks, {} failures",
            self.checked,
            self.failures.len()
        )?;
        for fail in &self.failures {
            writeln!(f, "  {fail}")?;
        }
        Ok(())
    }
}

/// Entailment signature of an assertion over the condition basis; assertions
/// with equal signatures are statically equivalent relative to the basis.
struct SigCache<'a> {
    inst: &'a dyn Instance,
    basis: Vec<Condition>,
    cache: DashMap<Assertion, Arc<Vec<bool>>>,
}

impl<'a> SigCache<'a> {
    fn new(inst: &'a dyn Instance) -> Self {
        SigCache {
            inst,
            basis: inst.condition_basis(),
            cache: DashMap::new(),
        }
    }

    fn sig(&self, psi: &Assertion) -> Arc<Vec<bool>> {
        if let Some(s) = self.cache.get(psi) {
            return s.clone();
        }
        let s = Arc::new(
            self.basis
                .iter()
                .map(|c| self.inst.entails(psi, c))
                .collect::<Vec<bool>>(),
        );
        self.cache.insert(psi.clone(), s.clone());
        s
    }
}

/// Exhaustive check of the calculus requisites over the instance's finite
/// bases: channel-equivalence symmetry and transitivity, the abelian-monoid
/// laws and compositionality of composition modulo static equivalence, the
/// substitution laws, the always-true condition, and priority uniqueness
/// when a priority operator is present.
pub fn check_requisites(inst: &dyn Instance) -> RequisiteReport {
    let mut report = RequisiteReport::default();
    let assertions = inst.assertion_basis();
    let universe = inst.term_universe();
    let sigs = SigCache::new(inst);

    // Top is entailed everywhere, closed, and substitution-invariant.
    for psi in &assertions {
        report.checked += 1;
        if !inst.entails(psi, &Condition::Top) {
            report.failures.push(RequisiteFailure {
                law: "top-entailed".into(),
                witness: format!("{psi} does not entail T"),
            });
        }
    }
    for (xs, ts) in inst.subst_samples() {
        report.checked += 1;
        let sub = match Subst::new(&xs, &ts) {
            Ok(s) => s,
            Err(_) => continue,
        };
        if Condition::Top.subst(&sub) != Condition::Top {
            report.failures.push(RequisiteFailure {
                law: "top-subst".into(),
                witness: "T changed under substitution".into(),
            });
        }
    }
    if !Condition::Top.support().is_empty() {
        report.failures.push(RequisiteFailure {
            law: "top-support".into(),
            witness: "T has non-empty support".into(),
        });
    }

    // Channel equivalence: symmetric and transitive under every assertion.
    for psi in &assertions {
        for m in &universe {
            for n in &universe {
                report.checked += 1;
                if inst.entails(psi, &inst.chan_eq(m, n))
                    && !inst.entails(psi, &inst.chan_eq(n, m))
                {
                    report.failures.push(RequisiteFailure {
                        law: "chan-eq-symmetry".into(),
                        witness: format!("{psi}: {m}<->{n} but not {n}<->{m}"),
                    });
                }
            }
        }
        for m in &universe {
            for n in &universe {
                if !inst.entails(psi, &inst.chan_eq(m, n)) {
                    continue;
                }
                for k in &universe {
                    report.checked += 1;
                    if inst.entails(psi, &inst.chan_eq(n, k))
                        && !inst.entails(psi, &inst.chan_eq(m, k))
                    {
                        report.failures.push(RequisiteFailure {
                            law: "chan-eq-transitivity".into(),
                            witness: format!(
                                "{psi}: {m}<->{n} and {n}<->{k} but not {m}<->{k}"
                            ),
                        });
                    }
                }
            }
        }
    }

    // Abelian monoid modulo static equivalence. Composition in the shipped
    // instances is syntactically associative and commutative, so compare
    // syntactically first and fall back to entailment signatures.
    let equivalent = |a: &Assertion, b: &Assertion| a == b || sigs.sig(a) == sigs.sig(b);

    let unit = inst.unit();
    for a in &assertions {
        report.checked += 2;
        if !equivalent(&inst.compose(a, &unit), a) {
            report.failures.push(RequisiteFailure {
                law: "compose-unit".into(),
                witness: format!("{a} (x) 1 differs from {a}"),
            });
        }
        if !equivalent(&inst.compose(&unit, a), a) {
            report.failures.push(RequisiteFailure {
                law: "compose-unit".into(),
                witness: format!("1 (x) {a} differs from {a}"),
            });
        }
    }

    let comm_failures: Vec<RequisiteFailure> = assertions
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, a)| {
            let mut fails = Vec::new();
            for b in &assertions[i..] {
                if !equivalent(&inst.compose(a, b), &inst.compose(b, a)) {
                    fails.push(RequisiteFailure {
                        law: "compose-commutative".into(),
                        witness: format!("{a} (x) {b} differs from {b} (x) {a}"),
                    });
                }
            }
            fails
        })
        .collect();
    report.checked += assertions.len() * (assertions.len() + 1) / 2;
    report.failures.extend(comm_failures);

    let assoc_failures: Vec<RequisiteFailure> = assertions
        .par_iter()
        .flat_map_iter(|a| {
            let mut fails = Vec::new();
            for b in &assertions {
                let ab = inst.compose(a, b);
                for c in &assertions {
                    if !equivalent(&inst.compose(&ab, c), &inst.compose(a, &inst.compose(b, c)))
                    {
                        fails.push(RequisiteFailure {
                            law: "compose-associative".into(),
                            witness: format!("witness ({a}, {b}, {c})"),
                        });
                    }
                }
            }
            fails
        })
        .collect();
    report.checked += assertions.len().pow(3);
    report.failures.extend(assoc_failures);

    // Compositionality of composition with respect to static equivalence.
    for (i, a) in assertions.iter().enumerate() {
        for b in &assertions[i + 1..] {
            if sigs.sig(a) != sigs.sig(b) {
                continue;
            }
            for c in &assertions {
                report.checked += 1;
                if sigs.sig(&inst.compose(c, a)) != sigs.sig(&inst.compose(c, b)) {
                    report.failures.push(RequisiteFailure {
                        law: "compose-compositional".into(),
                        witness: format!(
                            "{a} ~ {b} but {c} (x) {a} !~ {c} (x) {b}"
                        ),
                    });
                }
            }
        }
    }

    // Substitution laws on terms.
    for (xs, ts) in inst.subst_samples() {
        let sub = match Subst::new(&xs, &ts) {
            Ok(s) => s,
            Err(_) => continue,
        };
        for m in &universe {
            report.checked += 1;
            let m_supp = m.support();
            let image = m.subst(&sub);
            if xs.iter().all(|x| !m_supp.contains(x)) {
                // names being substituted do not occur: no effect
                if image != *m {
                    report.failures.push(RequisiteFailure {
                        law: "subst-identity".into(),
                        witness: format!("{m} changed under [{:?} := {:?}]", xs, ts),
                    });
                }
            }
            if xs.iter().all(|x| m_supp.contains(x)) {
                // support of the substituted terms flows into the image
                let mut t_supp = BTreeSet::new();
                for t in &ts {
                    t.free_names(&mut t_supp);
                }
                let image_supp = image.support();
                if !t_supp.is_subset(&image_supp) {
                    report.failures.push(RequisiteFailure {
                        law: "subst-support".into(),
                        witness: format!(
                            "supp({:?}) not within supp({m}[{:?} := {:?}]) = {:?}",
                            t_supp, xs, ts, image_supp
                        ),
                    });
                }
            }
        }
    }

    // Priority uniqueness: channel-equivalent terms have the same unique
    // level under every assertion.
    if let Some(max) = inst.max_priority() {
        for psi in &assertions {
            let levels = |m: &Term| -> Vec<PriorityLevel> {
                (0..=max)
                    .filter(|p| {
                        inst.prio_cond(m, *p)
                            .map(|c| inst.entails(psi, &c))
                            .unwrap_or(false)
                    })
                    .collect()
            };
            for m in &universe {
                for n in &universe {
                    if !inst.entails(psi, &inst.chan_eq(m, n)) {
                        continue;
                    }
                    report.checked += 1;
                    let lm = levels(m);
                    let ln = levels(n);
                    if lm.len() != 1 {
                        report.failures.push(RequisiteFailure {
                            law: "priority-unique".into(),
                            witness: format!("{psi}: {m} has levels {lm:?}"),
                        });
                    } else if ln != lm {
                        report.failures.push(RequisiteFailure {
                            law: "priority-unique".into(),
                            witness: format!(
                                "{psi}: {m}<->{n} but levels {lm:?} vs {ln:?}"
                            ),
                        });
                    }
                }
            }
        }
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matcher_variable_pattern() {
        let x = Name::intern("x");
        let m = Term::Name(Name::intern("m"));
        let got = default_matches(&Term::Name(x), &[x], &m);
        assert_eq!(got, vec![vec![m.clone()]]);
    }

    #[test]
    fn default_matcher_closed_pattern() {
        let m = Term::Name(Name::intern("m"));
        let k = Term::Name(Name::intern("k"));
        assert_eq!(default_matches(&m, &[], &m), vec![Vec::<Term>::new()]);
        assert!(default_matches(&m, &[], &k).is_empty());
    }
}
