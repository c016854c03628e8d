//! The priority-erasing encoding: guarding elements, the constructed target
//! calculus, and the agent translation.
//!
//! Target assertions pair a base assertion with a signed multiset of
//! guarding elements recording the enabled top-level prefixes. Channel
//! equivalence in the target holds only when no pair of enabled prefixes
//! could communicate at a strictly higher priority; this is how the
//! prioritised side conditions become ordinary entailment.

use std::sync::Arc;

use crate::agent::{Agent, Diagnostic};
use crate::data::{Assertion, Condition, GuardingElement, Prefix, Term};
use crate::fimm::{ExtInt, Fimm};
use crate::instance::{Instance, PriorityLevel};
use crate::instances::parse_term_literal;
use crate::nominal::{fresh_name, Name, Nominal};

#[derive(Debug, Clone, thiserror::Error)]
pub enum EncodeError {
    #[error("agent is not encodable: {0}")]
    NotEncodable(String),
}

fn require_encodable(agent: &Agent) -> Result<(), EncodeError> {
    let diags = agent.encodable();
    if diags.is_empty() {
        Ok(())
    } else {
        let msgs: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        Err(EncodeError::NotEncodable(msgs.join("; ")))
    }
}

/// Which translation to use: the faithful one, or one of the deliberately
/// broken variants the harness must be able to refute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutant {
    /// The faithful translation.
    None,
    /// Drop the retraction assertions of prefix and replication clauses.
    NoRetraction,
    /// Assert replicated prefixes with multiplicity 1 instead of `inf`.
    FiniteReplication,
    /// Branches do not retract the case's guarding elements.
    NoCaseRetraction,
}

fn elem_assertion(mult: ExtInt, ge: GuardingElement) -> Agent {
    Agent::Assert(Assertion::pair(
        Assertion::Unit,
        Fimm::singleton(mult, ge),
    ))
}

fn fimm_assertion(fimm: Fimm<GuardingElement>) -> Agent {
    Agent::Assert(Assertion::pair(Assertion::Unit, fimm))
}

/// Rename input binders away from `avoid` (at least the prefix subject), so
/// that firing the prefix substitutes nothing into its own guarding element
/// and the retraction cancels exactly.
fn freshen_input_binders(
    subj: &Term,
    binders: &[Name],
    pattern: &Term,
    cont: &Agent,
    extra_avoid: &std::collections::BTreeSet<Name>,
) -> (Vec<Name>, Term, Agent) {
    let mut avoid = subj.support();
    avoid.extend(extra_avoid.iter().copied());
    let mut binders = binders.to_vec();
    let mut pattern = pattern.clone();
    let mut cont = cont.clone();
    for i in 0..binders.len() {
        if avoid.contains(&binders[i]) {
            let mut all = avoid.clone();
            all.extend(pattern.support());
            all.extend(cont.support());
            let b2 = fresh_name(&all, &binders[i].hint());
            pattern = pattern.swap(binders[i], b2);
            cont = cont.swap(binders[i], b2);
            binders[i] = b2;
        }
    }
    (binders, pattern, cont)
}

fn prefix_element(agent: &Agent) -> Option<(GuardingElement, Agent, Agent)> {
    prefix_element_guarded(agent, Condition::Top, &std::collections::BTreeSet::new())
}

/// Split a prefix agent into its guarding element (with the given guard),
/// the prefix rebuilt with freshened binders, and its continuation.
/// Returns (element, prefix-with-nil-continuation, continuation).
fn prefix_element_guarded(
    agent: &Agent,
    guard: Condition,
    extra_avoid: &std::collections::BTreeSet<Name>,
) -> Option<(GuardingElement, Agent, Agent)> {
    match agent {
        Agent::Output { subj, obj, cont } => {
            let ge = GuardingElement::new(
                guard,
                Prefix::Out {
                    subj: subj.clone(),
                    obj: obj.clone(),
                },
            );
            let shell = Agent::output(subj.clone(), obj.clone(), Agent::Nil);
            Some((ge, shell, (**cont).clone()))
        }
        Agent::Input {
            subj,
            binders,
            pattern,
            cont,
        } => {
            let (binders, pattern, cont) =
                freshen_input_binders(subj, binders, pattern, cont, extra_avoid);
            let ge = GuardingElement::new(
                guard,
                Prefix::In {
                    subj: subj.clone(),
                    binders: binders.clone(),
                    pattern: pattern.clone(),
                },
            );
            let shell = Agent::input(subj.clone(), binders, pattern, Agent::Nil);
            Some((ge, shell, cont))
        }
        _ => None,
    }
}

fn with_continuation(shell: Agent, cont: Agent) -> Agent {
    match shell {
        Agent::Output { subj, obj, .. } => Agent::output(subj, obj, cont),
        Agent::Input {
            subj,
            binders,
            pattern,
            ..
        } => Agent::input(subj, binders, pattern, cont),
        _ => unreachable!("prefix shell"),
    }
}

/// Translate an encodable agent of a prioritised calculus into the
/// constructed target calculus.
pub fn translate(agent: &Agent) -> Result<Agent, EncodeError> {
    translate_with(agent, Mutant::None)
}

pub fn translate_with(agent: &Agent, mutant: Mutant) -> Result<Agent, EncodeError> {
    require_encodable(agent)?;
    Ok(tr(agent, mutant))
}

fn tr(agent: &Agent, mutant: Mutant) -> Agent {
    match agent {
        Agent::Nil => Agent::Nil,
        Agent::Assert(psi) => {
            Agent::Assert(Assertion::pair(psi.clone(), Fimm::empty()))
        }
        Agent::Par(l, r) => Agent::par(tr(l, mutant), tr(r, mutant)),
        Agent::Restrict { name, body } => Agent::restrict(*name, tr(body, mutant)),
        Agent::Output { .. } | Agent::Input { .. } => {
            let (ge, shell, cont) = prefix_element(agent).expect("prefix");
            let body = tr(&cont, mutant);
            let inner = if mutant == Mutant::NoRetraction {
                body
            } else {
                Agent::par(body, elem_assertion(ExtInt::Fin(-1), ge.clone()))
            };
            Agent::par(
                elem_assertion(ExtInt::Fin(1), ge),
                with_continuation(shell, inner),
            )
        }
        Agent::Repl(body) => {
            let (ge, shell, cont) = prefix_element(body).expect("encodable replication");
            let mult = if mutant == Mutant::FiniteReplication {
                ExtInt::Fin(1)
            } else {
                ExtInt::Inf
            };
            let inner_body = tr(&cont, mutant);
            let inner = if mutant == Mutant::NoRetraction {
                inner_body
            } else {
                Agent::par(inner_body, elem_assertion(ExtInt::Fin(-1), ge.clone()))
            };
            Agent::par(
                elem_assertion(mult, ge),
                Agent::Repl(Box::new(with_continuation(shell, inner))),
            )
        }
        Agent::Case { branches } => {
            // binders of input branches are renamed away from everything the
            // retraction assertion mentions
            let case_support = agent.support();
            let mut elems = Fimm::empty();
            let mut parts = Vec::new();
            for (cond, branch) in branches {
                let (ge, shell, cont) =
                    prefix_element_guarded(branch, cond.clone(), &case_support)
                        .expect("encodable case branch");
                elems.add(ge, ExtInt::Fin(1));
                parts.push((cond.clone(), shell, cont));
            }
            let retraction = elems.negated().expect("case elements are finite");
            let new_branches = parts
                .into_iter()
                .map(|(cond, shell, cont)| {
                    let body = tr(&cont, mutant);
                    let inner = if mutant == Mutant::NoCaseRetraction {
                        body
                    } else {
                        Agent::par(body, fimm_assertion(retraction.clone()))
                    };
                    (cond, with_continuation(shell, inner))
                })
                .collect();
            Agent::par(
                fimm_assertion(elems),
                Agent::Case {
                    branches: new_branches,
                },
            )
        }
    }
}

/// The multiset of unguarded prefixes of an encodable agent: `(inf)` for
/// replicated prefixes, guard-annotated elements for case branches,
/// accumulated through parallel and restriction.
pub fn guarding_elements_of(agent: &Agent) -> Result<Fimm<GuardingElement>, EncodeError> {
    require_encodable(agent)?;
    Ok(ges(agent))
}

fn ges(agent: &Agent) -> Fimm<GuardingElement> {
    match agent {
        Agent::Nil | Agent::Assert(_) => Fimm::empty(),
        Agent::Output { .. } | Agent::Input { .. } => {
            let (ge, _, _) = prefix_element(agent).expect("prefix");
            Fimm::singleton(ExtInt::Fin(1), ge)
        }
        Agent::Repl(body) => {
            let (ge, _, _) = prefix_element(body).expect("encodable replication");
            Fimm::singleton(ExtInt::Inf, ge)
        }
        Agent::Case { branches } => {
            let case_support = agent.support();
            let mut out = Fimm::empty();
            for (cond, branch) in branches {
                let (ge, _, _) =
                    prefix_element_guarded(branch, cond.clone(), &case_support)
                        .expect("encodable case branch");
                out.add(ge, ExtInt::Fin(1));
            }
            out
        }
        Agent::Restrict { body, .. } => ges(body),
        Agent::Par(l, r) => ges(l).union(&ges(r)),
    }
}

/// The constructed target calculus over a prioritised base instance.
/// Assertions are (base assertion, multiset of guarding elements); the
/// conditions add multiplicity tests and the guarded channel equivalence.
pub struct TargetInstance {
    base: Arc<dyn Instance>,
    elements: Vec<GuardingElement>,
    mults: Vec<ExtInt>,
    max_fimm_size: usize,
}

/// Build the target calculus for a prioritised instance. The guarding
/// elements enumerated into the derived bases default to one output and one
/// input over the base's first subjects; extend with `with_elements` for
/// the agents under test.
pub fn build_target(base: Arc<dyn Instance>) -> TargetInstance {
    let subjects = base.enum_subjects();
    let objects = base.enum_objects();
    let mut elements = Vec::new();
    if let (Some(s), Some(o)) = (subjects.first(), objects.first()) {
        elements.push(GuardingElement::bare(Prefix::Out {
            subj: s.clone(),
            obj: o.clone(),
        }));
    }
    if let Some(s) = subjects.get(1).or_else(|| subjects.first()) {
        let u = Name::intern("u");
        elements.push(GuardingElement::bare(Prefix::In {
            subj: s.clone(),
            binders: vec![u],
            pattern: Term::Name(u),
        }));
    }
    TargetInstance {
        base,
        elements,
        mults: vec![
            ExtInt::Fin(-2),
            ExtInt::Fin(-1),
            ExtInt::Fin(1),
            ExtInt::Fin(2),
            ExtInt::Inf,
        ],
        max_fimm_size: 2,
    }
}

impl TargetInstance {
    pub fn with_elements(mut self, elements: Vec<GuardingElement>) -> Self {
        self.elements = elements;
        self
    }

    pub fn with_mults(mut self, mults: Vec<ExtInt>) -> Self {
        self.mults = mults;
        self
    }

    pub fn with_max_fimm_size(mut self, n: usize) -> Self {
        self.max_fimm_size = n;
        self
    }

    pub fn base(&self) -> &Arc<dyn Instance> {
        &self.base
    }

    pub fn elements(&self) -> &[GuardingElement] {
        &self.elements
    }

    fn split<'x>(&self, psi: &'x Assertion) -> (Assertion, Fimm<GuardingElement>) {
        match psi {
            Assertion::Pair(base, elems) => ((**base).clone(), elems.clone()),
            Assertion::Unit => (self.base.unit(), Fimm::empty()),
            other => (other.clone(), Fimm::empty()),
        }
    }

    /// All priority levels of `m` entailed by the base assertion.
    fn levels(&self, psi: &Assertion, m: &Term) -> Vec<PriorityLevel> {
        let Some(max) = self.base.max_priority() else {
            return Vec::new();
        };
        (0..=max)
            .filter(|p| {
                self.base
                    .prio_cond(m, *p)
                    .map(|c| self.base.entails(psi, &c))
                    .unwrap_or(false)
            })
            .collect()
    }

    /// The blocking clause of the target channel equivalence: some enabled
    /// input/output pair in `elems` could communicate at a priority strictly
    /// higher than that of `m`.
    fn blocked(&self, psi: &Assertion, elems: &Fimm<GuardingElement>, m: &Term) -> bool {
        let m_levels = self.levels(psi, m);
        let Some(m_level) = m_levels.iter().max().copied() else {
            return false;
        };
        for in_elem in elems.members() {
            let Prefix::In {
                subj: m1,
                binders,
                pattern,
            } = &in_elem.prefix
            else {
                continue;
            };
            for out_elem in elems.members() {
                let Prefix::Out { subj: n1, obj: k } = &out_elem.prefix else {
                    continue;
                };
                if !self.base.entails(psi, &self.base.chan_eq(m1, n1)) {
                    continue;
                }
                let pair_levels = self.levels(psi, m1);
                let Some(n_level) = pair_levels.iter().min().copied() else {
                    continue;
                };
                if n_level >= m_level {
                    continue;
                }
                if self.base.matches(pattern, binders, k).is_empty() {
                    continue;
                }
                if !self.base.entails(psi, &in_elem.guard)
                    || !self.base.entails(psi, &out_elem.guard)
                {
                    continue;
                }
                return true;
            }
        }
        false
    }

    fn enumerate_fimms(&self) -> Vec<Fimm<GuardingElement>> {
        let mut out = vec![Fimm::empty()];
        let size = self.max_fimm_size.min(self.elements.len());
        // choose up to `size` elements, each with any declared multiplicity
        fn rec(
            elems: &[GuardingElement],
            mults: &[ExtInt],
            start: usize,
            left: usize,
            acc: &Fimm<GuardingElement>,
            out: &mut Vec<Fimm<GuardingElement>>,
        ) {
            if left == 0 {
                return;
            }
            for i in start..elems.len() {
                for z in mults {
                    let mut next = acc.clone();
                    next.add(elems[i].clone(), *z);
                    out.push(next.clone());
                    rec(elems, mults, i + 1, left - 1, &next, out);
                }
            }
        }
        rec(
            &self.elements,
            &self.mults,
            0,
            size,
            &Fimm::empty(),
            &mut out,
        );
        out
    }
}

impl Instance for TargetInstance {
    fn name(&self) -> String {
        format!("encoded:{}", self.base.name())
    }

    fn unit(&self) -> Assertion {
        Assertion::pair(self.base.unit(), Fimm::empty())
    }

    fn compose(&self, a: &Assertion, b: &Assertion) -> Assertion {
        let (ba, ea) = self.split(a);
        let (bb, eb) = self.split(b);
        Assertion::pair(self.base.compose(&ba, &bb), ea.union(&eb))
    }

    fn entails(&self, psi: &Assertion, cond: &Condition) -> bool {
        let (base_psi, elems) = self.split(psi);
        match cond {
            Condition::MultTest(z, ge) => elems.multiplicity(ge) == *z,
            Condition::ChanEqPrime(m, n) => {
                self.base.entails(&base_psi, &self.base.chan_eq(m, n))
                    && !self.blocked(&base_psi, &elems, m)
            }
            base_cond => self.base.entails(&base_psi, base_cond),
        }
    }

    fn chan_eq(&self, m: &Term, n: &Term) -> Condition {
        Condition::ChanEqPrime(m.clone(), n.clone())
    }

    fn matches(&self, pattern: &Term, binders: &[Name], value: &Term) -> Vec<Vec<Term>> {
        self.base.matches(pattern, binders, value)
    }

    fn assertion_basis(&self) -> Vec<Assertion> {
        let mut out = Vec::new();
        for base in self.base.assertion_basis() {
            for fimm in self.enumerate_fimms() {
                out.push(Assertion::pair(base.clone(), fimm));
            }
        }
        out
    }

    fn condition_basis(&self) -> Vec<Condition> {
        let mut out = self.base.condition_basis();
        let mut zs = self.mults.clone();
        zs.push(ExtInt::Fin(0));
        for ge in &self.elements {
            for z in &zs {
                out.push(Condition::MultTest(*z, Box::new(ge.clone())));
            }
        }
        let universe = self.base.term_universe();
        for m in &universe {
            for n in &universe {
                out.push(Condition::ChanEqPrime(m.clone(), n.clone()));
            }
        }
        out
    }

    fn term_universe(&self) -> Vec<Term> {
        self.base.term_universe()
    }

    fn enum_subjects(&self) -> Vec<Term> {
        self.base.enum_subjects()
    }

    fn enum_objects(&self) -> Vec<Term> {
        self.base.enum_objects()
    }

    fn subst_samples(&self) -> Vec<(Vec<Name>, Vec<Term>)> {
        self.base.subst_samples()
    }

    fn parse_term(&self, text: &str) -> Result<Term, String> {
        self.base.parse_term(text)
    }

    fn parse_condition(&self, text: &str) -> Result<Condition, String> {
        let text = text.trim();
        if let Some((m, n)) = text.split_once("<->'") {
            return Ok(Condition::ChanEqPrime(
                self.base.parse_term(m)?,
                self.base.parse_term(n)?,
            ));
        }
        if text.starts_with('(') {
            if let Some((z, ge)) = parse_mult_entry(text, self.base.as_ref())? {
                return Ok(Condition::MultTest(z, Box::new(ge)));
            }
        }
        self.base.parse_condition(text)
    }

    fn parse_assertion(&self, text: &str) -> Result<Assertion, String> {
        let text = text.trim();
        if let Some(inner) = text.strip_prefix('(').and_then(|t| t.strip_suffix(')')) {
            if let Some((base_part, fimm_part)) = split_top(inner, ';') {
                let base = self.base.parse_assertion(base_part.trim())?;
                let fimm = parse_fimm(fimm_part.trim(), self.base.as_ref())?;
                return Ok(Assertion::pair(base, fimm));
            }
        }
        // a bare base assertion denotes (base, {})
        let base = self.base.parse_assertion(text)?;
        Ok(Assertion::pair(base, Fimm::empty()))
    }

    fn validate_agent(&self, agent: &Agent) -> Vec<Diagnostic> {
        self.base.validate_agent(agent)
    }
}

/// Split at the first occurrence of `sep` at bracket depth zero.
fn split_top(text: &str, sep: char) -> Option<(&str, &str)> {
    let mut depth = 0usize;
    for (i, c) in text.char_indices() {
        match c {
            '(' | '{' | '[' => depth += 1,
            ')' | '}' | ']' => depth = depth.saturating_sub(1),
            _ if c == sep && depth == 0 => {
                return Some((&text[..i], &text[i + c.len_utf8()..]));
            }
            _ => {}
        }
    }
    None
}

fn split_all_top(text: &str, sep: char) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut rest = text;
    while let Some((l, r)) = split_top(rest, sep) {
        parts.push(l);
        rest = r;
    }
    parts.push(rest);
    parts
}

/// `(z)elem` – a single multiset entry.
fn parse_mult_entry(
    text: &str,
    base: &dyn Instance,
) -> Result<Option<(ExtInt, GuardingElement)>, String> {
    let text = text.trim();
    let Some(rest) = text.strip_prefix('(') else {
        return Ok(None);
    };
    let Some(close) = rest.find(')') else {
        return Ok(None);
    };
    let z_text = rest[..close].trim();
    let z = if z_text == "inf" {
        ExtInt::Inf
    } else {
        match z_text.parse::<i64>() {
            Ok(v) => ExtInt::Fin(v),
            Err(_) => return Ok(None),
        }
    };
    let ge = parse_guarding_element(rest[close + 1..].trim(), base)?;
    Ok(Some((z, ge)))
}

/// `[phi]out(M,N)` / `[phi]in(M,\xs,X)`; the guard brackets may be omitted.
pub fn parse_guarding_element(
    text: &str,
    base: &dyn Instance,
) -> Result<GuardingElement, String> {
    let text = text.trim();
    let (guard, rest) = if let Some(stripped) = text.strip_prefix('[') {
        let close = stripped
            .find(']')
            .ok_or_else(|| format!("unterminated guard in {text:?}"))?;
        (
            base.parse_condition(&stripped[..close])?,
            stripped[close + 1..].trim(),
        )
    } else {
        (Condition::Top, text)
    };
    if let Some(inner) = rest
        .strip_prefix("out(")
        .and_then(|t| t.strip_suffix(')'))
    {
        let parts = split_all_top(inner, ',');
        if parts.len() != 2 {
            return Err(format!("expected out(M,N), found {rest:?}"));
        }
        return Ok(GuardingElement::new(
            guard,
            Prefix::Out {
                subj: base.parse_term(parts[0])?,
                obj: base.parse_term(parts[1])?,
            },
        ));
    }
    if let Some(inner) = rest.strip_prefix("in(").and_then(|t| t.strip_suffix(')')) {
        let parts = split_all_top(inner, ',');
        if parts.len() != 3 {
            return Err(format!("expected in(M,\\xs,X), found {rest:?}"));
        }
        let binder_text = parts[1]
            .trim()
            .strip_prefix('\\')
            .ok_or_else(|| format!("expected \\binders in {rest:?}"))?;
        let binders = binder_text
            .split_whitespace()
            .map(|b| parse_term_literal(b).map(|t| t.head_name()))
            .collect::<Result<Vec<Name>, String>>()?;
        return Ok(GuardingElement::new(
            guard,
            Prefix::In {
                subj: base.parse_term(parts[0])?,
                binders,
                pattern: base.parse_term(parts[2])?,
            },
        ));
    }
    Err(format!("cannot parse guarding element {rest:?}"))
}

/// `{(z)elem, ...}` or `{}`.
pub fn parse_fimm(
    text: &str,
    base: &dyn Instance,
) -> Result<Fimm<GuardingElement>, String> {
    let inner = text
        .trim()
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(|| format!("expected a multiset {{...}}, found {text:?}"))?;
    let mut out = Fimm::empty();
    if inner.trim().is_empty() {
        return Ok(out);
    }
    for part in split_all_top(inner, ',') {
        match parse_mult_entry(part, base)? {
            Some((z, ge)) => out.add(ge, z),
            None => return Err(format!("cannot parse multiset entry {part:?}")),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::check_requisites;
    use crate::instances::{default_flip_instance, make_flip_instance, make_piat_instance};
    use crate::parser::parse_agent;

    fn n(s: &str) -> Name {
        Name::intern(s)
    }

    fn t(s: &str) -> Term {
        Term::Name(Name::intern(s))
    }

    fn out_ge(s: &str, o: &str) -> GuardingElement {
        GuardingElement::bare(Prefix::Out {
            subj: t(s),
            obj: t(o),
        })
    }

    fn in_ge(s: &str) -> GuardingElement {
        let u = n("u");
        GuardingElement::bare(Prefix::In {
            subj: t(s),
            binders: vec![u],
            pattern: Term::Name(u),
        })
    }

    /// input matching exactly the subject name, as the object-omitted sugar
    fn in_exact_ge(s: &str) -> GuardingElement {
        GuardingElement::bare(Prefix::In {
            subj: t(s),
            binders: vec![],
            pattern: t(s),
        })
    }

    fn flip_target() -> TargetInstance {
        build_target(Arc::new(default_flip_instance()))
    }

    #[test]
    fn target_unit_is_componentwise() {
        let tgt = flip_target();
        let unit = tgt.unit();
        assert!(unit.is_unit());
        match unit {
            Assertion::Pair(base, elems) => {
                assert!(base.is_unit());
                assert!(elems.is_empty());
            }
            other => panic!("expected a product assertion, got {other}"),
        }
    }

    #[test]
    fn target_compose_cancels() {
        let tgt = flip_target();
        let a = Assertion::pair(
            Assertion::name_set([n("a")]),
            Fimm::singleton(ExtInt::Fin(1), out_ge("x", "x")),
        );
        let b = Assertion::pair(
            Assertion::name_set([n("a")]),
            Fimm::singleton(ExtInt::Fin(-1), out_ge("x", "x")),
        );
        assert!(tgt.compose(&a, &b).is_unit());
    }

    #[test]
    fn chan_eq_prime_with_empty_multiset_is_base() {
        let tgt = flip_target();
        let unit = tgt.unit();
        assert!(tgt.entails(&unit, &Condition::ChanEqPrime(t("x"), t("x"))));
        assert!(!tgt.entails(&unit, &Condition::ChanEqPrime(t("x"), t("y"))));
    }

    #[test]
    fn blocking_pair_disables_low_priority_channels() {
        let tgt = flip_target();
        // all channels at priority 0: nothing blocks
        let e = Fimm::from_entries([
            (ExtInt::Fin(1), in_ge("x")),
            (ExtInt::Fin(1), out_ge("y", "y")),
            (ExtInt::Fin(1), in_ge("y")),
        ]);
        let psi = Assertion::pair(Assertion::name_set([]), e);
        assert!(tgt.entails(&psi, &Condition::ChanEqPrime(t("x"), t("x"))));
        assert!(tgt.entails(&psi, &Condition::ChanEqPrime(t("y"), t("y"))));

        // y flipped low and an x pair enabled: y is blocked, x is not
        let e = Fimm::from_entries([
            (ExtInt::Fin(1), in_ge("x")),
            (ExtInt::Fin(1), out_ge("x", "x")),
            (ExtInt::Fin(1), in_ge("y")),
            (ExtInt::Fin(1), out_ge("y", "y")),
        ]);
        let psi = Assertion::pair(Assertion::name_set([n("y")]), e);
        assert!(!tgt.entails(&psi, &Condition::ChanEqPrime(t("y"), t("y"))));
        assert!(tgt.entails(&psi, &Condition::ChanEqPrime(t("x"), t("x"))));
    }

    #[test]
    fn blocking_requires_entailed_guards_and_matching() {
        let tgt = flip_target();
        // the blocking output is guarded by an unsatisfied condition
        let guarded_out = GuardingElement::new(
            Condition::Eq(t("x"), t("y")),
            Prefix::Out {
                subj: t("x"),
                obj: t("x"),
            },
        );
        let e = Fimm::from_entries([
            (ExtInt::Fin(1), in_ge("x")),
            (ExtInt::Fin(1), guarded_out),
        ]);
        let psi = Assertion::pair(Assertion::name_set([n("y")]), e);
        assert!(tgt.entails(&psi, &Condition::ChanEqPrime(t("y"), t("y"))));

        // exact-pattern input cannot receive a different object: no block
        let e = Fimm::from_entries([
            (ExtInt::Fin(1), in_exact_ge("x")),
            (ExtInt::Fin(1), out_ge("x", "y")),
        ]);
        let psi = Assertion::pair(Assertion::name_set([n("y")]), e);
        assert!(tgt.entails(&psi, &Condition::ChanEqPrime(t("y"), t("y"))));

        // with a matching object it blocks
        let e = Fimm::from_entries([
            (ExtInt::Fin(1), in_exact_ge("x")),
            (ExtInt::Fin(1), out_ge("x", "x")),
        ]);
        let psi = Assertion::pair(Assertion::name_set([n("y")]), e);
        assert!(!tgt.entails(&psi, &Condition::ChanEqPrime(t("y"), t("y"))));
    }

    #[test]
    fn multiplicity_tests_are_exact() {
        let tgt = flip_target();
        let alpha = out_ge("x", "x");
        let psi = Assertion::pair(
            Assertion::name_set([]),
            Fimm::singleton(ExtInt::Fin(2), alpha.clone()),
        );
        assert!(tgt.entails(
            &psi,
            &Condition::MultTest(ExtInt::Fin(2), Box::new(alpha.clone()))
        ));
        assert!(!tgt.entails(
            &psi,
            &Condition::MultTest(ExtInt::Fin(1), Box::new(alpha.clone()))
        ));
        // absent elements have multiplicity zero
        assert!(tgt.entails(
            &tgt.unit(),
            &Condition::MultTest(ExtInt::Fin(0), Box::new(alpha))
        ));
    }

    #[test]
    fn translate_clauses() {
        let flip = default_flip_instance();
        // nil
        assert_eq!(translate(&Agent::Nil).unwrap(), Agent::Nil);

        // assertions embed with an empty multiset
        let p = parse_agent("(|{x}|)", &flip).unwrap();
        let tp = translate(&p).unwrap();
        assert_eq!(
            tp,
            Agent::Assert(Assertion::pair(
                Assertion::name_set([n("x")]),
                Fimm::empty()
            ))
        );

        // prefix clause
        let p = parse_agent("out(x,x).0", &flip).unwrap();
        let tp = translate(&p).unwrap();
        let alpha = out_ge("x", "x");
        let want = Agent::par(
            elem_assertion(ExtInt::Fin(1), alpha.clone()),
            Agent::output(
                t("x"),
                t("x"),
                Agent::par(Agent::Nil, elem_assertion(ExtInt::Fin(-1), alpha.clone())),
            ),
        );
        assert_eq!(tp, want);

        // replication clause uses the maximal multiplicity
        let p = parse_agent("!out(x,x).0", &flip).unwrap();
        let tp = translate(&p).unwrap();
        let want = Agent::par(
            elem_assertion(ExtInt::Inf, alpha.clone()),
            Agent::Repl(Box::new(Agent::output(
                t("x"),
                t("x"),
                Agent::par(Agent::Nil, elem_assertion(ExtInt::Fin(-1), alpha)),
            ))),
        );
        assert_eq!(tp, want);
    }

    #[test]
    fn translate_case_asserts_and_retracts_all_branches() {
        let flip = default_flip_instance();
        let p = parse_agent("case T -> out(x,x).0 [] T -> out(y,y).0", &flip).unwrap();
        let tp = translate(&p).unwrap();
        let expected_elems = Fimm::from_entries([
            (ExtInt::Fin(1), out_ge("x", "x")),
            (ExtInt::Fin(1), out_ge("y", "y")),
        ]);
        match &tp {
            Agent::Par(assert_part, case_part) => {
                assert_eq!(**assert_part, fimm_assertion(expected_elems.clone()));
                match &**case_part {
                    Agent::Case { branches } => {
                        for (_, b) in branches {
                            // each branch retracts the whole offer
                            let Agent::Output { cont, .. } = b else {
                                panic!("branch should be an output")
                            };
                            let Agent::Par(_, retraction) = &**cont else {
                                panic!("branch continuation should retract")
                            };
                            assert_eq!(
                                **retraction,
                                fimm_assertion(expected_elems.negated().unwrap())
                            );
                        }
                    }
                    other => panic!("expected case, got {other}"),
                }
            }
            other => panic!("expected parallel, got {other}"),
        }
    }

    #[test]
    fn translate_rejects_non_encodable() {
        let flip = default_flip_instance();
        let p = parse_agent("!(out(x).0 | out(y).0)", &flip).unwrap();
        assert!(matches!(
            translate(&p),
            Err(EncodeError::NotEncodable(_))
        ));
    }

    #[test]
    fn mutants_differ_from_faithful_translation() {
        let flip = default_flip_instance();
        let _ = &flip;
        let p = parse_agent("out(x).0 | !out(y).0 | case T -> in(x).0", &flip).unwrap();
        let faithful = translate(&p).unwrap();
        for mutant in [
            Mutant::NoRetraction,
            Mutant::FiniteReplication,
            Mutant::NoCaseRetraction,
        ] {
            let m = translate_with(&p, mutant).unwrap();
            assert!(!faithful.alpha_eq(&m), "{mutant:?} should differ");
        }
    }

    #[test]
    fn retraction_is_invariant_under_input_substitution() {
        let flip = default_flip_instance();
        // binder x collides with the subject x: must be renamed so that the
        // negative copy is untouched by the received object
        let p = Agent::input(t("x"), vec![n("x")], t("x"), Agent::Nil);
        let tp = translate(&p).unwrap();
        let Agent::Par(pos, prefix) = &tp else {
            panic!()
        };
        let Agent::Assert(Assertion::Pair(_, pos_elems)) = &**pos else {
            panic!()
        };
        let ge = pos_elems.iter().next().unwrap().0.clone();
        let Agent::Input { binders, cont, .. } = &**prefix else {
            panic!()
        };
        // firing the input substitutes the received object for the binders
        let received = t("y");
        let cont2 = cont
            .substitute(&binders.clone(), &[received])
            .unwrap();
        let Agent::Par(_, neg) = &cont2 else { panic!() };
        assert_eq!(
            **neg,
            elem_assertion(ExtInt::Fin(-1), ge),
            "retraction must equal the asserted element after substitution"
        );
    }

    #[test]
    fn guarding_elements_examples() {
        let flip = default_flip_instance();
        let p = parse_agent("out(x,x).0", &flip).unwrap();
        assert_eq!(
            guarding_elements_of(&p).unwrap(),
            Fimm::singleton(ExtInt::Fin(1), out_ge("x", "x"))
        );
        let p = parse_agent("!out(x,x).0", &flip).unwrap();
        assert_eq!(
            guarding_elements_of(&p).unwrap(),
            Fimm::singleton(ExtInt::Inf, out_ge("x", "x"))
        );
        // two parallel copies accumulate
        let p = parse_agent("out(x,x).0 | out(x,x).in(y).0", &flip).unwrap();
        assert_eq!(
            guarding_elements_of(&p).unwrap(),
            Fimm::singleton(ExtInt::Fin(2), out_ge("x", "x"))
        );
        // restriction accumulates through
        let p = parse_agent("(new a)out(x,a).0", &flip).unwrap();
        assert_eq!(
            guarding_elements_of(&p).unwrap(),
            Fimm::singleton(ExtInt::Fin(1), out_ge("x", "a"))
        );
    }

    #[test]
    fn translation_is_homomorphic_and_equivariant() {
        let flip = make_flip_instance([n("x"), n("y"), n("z")]);
        let sources = [
            "out(x,y).in(x).0 | !out(z).0",
            "(new a)(out(x,a).0 | in(x,\\u,u).out(u,u).0)",
            "case x=y -> out(x).0 [] T -> out(z).(|{z}|)",
        ];
        for src in sources {
            let p = parse_agent(src, &flip).unwrap();
            let q = parse_agent(src, &flip).unwrap();
            // par homomorphism
            let joint = translate(&Agent::par(p.clone(), q.clone())).unwrap();
            let split = Agent::par(translate(&p).unwrap(), translate(&q).unwrap());
            assert!(joint.alpha_eq(&split));
            // restriction commutes
            let a = n("x");
            let restricted = translate(&Agent::restrict(a, p.clone())).unwrap();
            let outside = Agent::restrict(a, translate(&p).unwrap());
            assert!(restricted.alpha_eq(&outside));
            // equivariance
            let swapped = translate(&p.swap(n("x"), n("y"))).unwrap();
            assert!(swapped.alpha_eq(&translate(&p).unwrap().swap(n("x"), n("y"))));
        }
    }

    #[test]
    fn target_instance_passes_requisites_small() {
        let flip = Arc::new(make_flip_instance([n("x"), n("y")]));
        let tgt = build_target(flip).with_mults(vec![
            ExtInt::Fin(-1),
            ExtInt::Fin(1),
            ExtInt::Inf,
        ]);
        let report = check_requisites(&tgt);
        assert!(report.passed(), "target failures: {report}");

        let piat = Arc::new(make_piat_instance(2));
        let tgt = build_target(piat).with_mults(vec![ExtInt::Fin(-1), ExtInt::Fin(1)]);
        let report = check_requisites(&tgt);
        assert!(report.passed(), "piat target failures: {report}");
    }

    #[test]
    fn target_literals_round_trip() {
        let tgt = flip_target();
        let psi = Assertion::pair(
            Assertion::name_set([n("x")]),
            Fimm::from_entries([
                (ExtInt::Fin(2), out_ge("x", "y")),
                (ExtInt::Inf, in_ge("y")),
            ]),
        );
        let printed = psi.to_string();
        let reparsed = tgt.parse_assertion(&printed).unwrap();
        assert_eq!(psi, reparsed);

        let cond = Condition::MultTest(ExtInt::Fin(-1), Box::new(in_ge("x")));
        let reparsed = tgt.parse_condition(&cond.to_string()).unwrap();
        assert_eq!(cond, reparsed);
        let cond = Condition::ChanEqPrime(t("x"), t("y"));
        assert_eq!(tgt.parse_condition("x<->'y").unwrap(), cond);
        // guarded element literal
        let ge = GuardingElement::new(
            Condition::Eq(t("x"), t("y")),
            Prefix::Out {
                subj: t("x"),
                obj: t("y"),
            },
        );
        let reparsed =
            parse_guarding_element(&ge.to_string(), tgt.base().as_ref()).unwrap();
        assert_eq!(ge, reparsed);
    }
}
