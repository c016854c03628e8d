//! Shipped calculus instances: a plain pi-calculus, the annotated-channel
//! calculus with static priorities (`a:n` subjects), and the dynamic
//! flip-priority calculus whose assertions are sets of names flipped to low
//! priority.

use std::collections::BTreeSet;

use crate::agent::{Agent, Diagnostic};
use crate::data::{Assertion, Condition, Term};
use crate::instance::{Instance, PriorityLevel};
use crate::nominal::Name;

fn is_name_start(c: char) -> bool {
    c.is_ascii_lowercase() || c == '_'
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

/// Parse a plain name literal.
pub fn parse_name(text: &str) -> Result<Name, String> {
    let text = text.trim();
    let mut chars = text.chars();
    match chars.next() {
        Some(c) if is_name_start(c) => {}
        _ => return Err(format!("expected a name, found {text:?}")),
    }
    if !chars.all(is_name_char) {
        return Err(format!("invalid name literal {text:?}"));
    }
    Ok(Name::intern(text))
}

fn parse_nat(text: &str) -> Result<u32, String> {
    text.trim()
        .parse::<u32>()
        .map_err(|_| format!("expected a natural number, found {text:?}"))
}

/// `a` or `a:2`.
pub fn parse_term_literal(text: &str) -> Result<Term, String> {
    let text = text.trim();
    match text.split_once(':') {
        None => Ok(Term::Name(parse_name(text)?)),
        Some((n, lvl)) => Ok(Term::Chan(parse_name(n)?, parse_nat(lvl)?)),
    }
}

/// Shared condition grammar: `T`, `a=b`, `a<p:1`.
fn parse_condition_literal(text: &str) -> Result<Condition, String> {
    let text = text.trim();
    if text == "T" {
        return Ok(Condition::Top);
    }
    if let Some((m, rest)) = text.split_once("<p:") {
        return Ok(Condition::Prio(parse_term_literal(m)?, parse_nat(rest)?));
    }
    if let Some((m, n)) = text.split_once('=') {
        return Ok(Condition::Eq(
            parse_term_literal(m)?,
            parse_term_literal(n)?,
        ));
    }
    Err(format!("cannot parse condition {text:?}"))
}

/// `{a,b}`, `{}` — a finite set of names.
fn parse_name_set(text: &str) -> Result<BTreeSet<Name>, String> {
    let text = text.trim();
    let inner = text
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(|| format!("expected a name set {{...}}, found {text:?}"))?;
    let mut out = BTreeSet::new();
    for part in inner.split(',') {
        if part.trim().is_empty() {
            continue;
        }
        out.insert(parse_name(part)?);
    }
    Ok(out)
}

fn term_is_plain_name(t: &Term) -> bool {
    matches!(t, Term::Name(_))
}

fn names_only_diagnostics(agent: &Agent, calculus: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut check = |t: &Term, what: &str| {
        if !term_is_plain_name(t) {
            out.push(Diagnostic {
                path: String::new(),
                message: format!("ill-sorted {what} {t}: {calculus} terms are names"),
            });
        }
    };
    visit_terms(agent, &mut |t, what| check(t, what));
    out
}

/// Walk all prefix subjects, objects and patterns of an agent.
fn visit_terms(agent: &Agent, f: &mut impl FnMut(&Term, &str)) {
    match agent {
        Agent::Nil | Agent::Assert(_) => {}
        Agent::Output { subj, obj, cont } => {
            f(subj, "subject");
            f(obj, "object");
            visit_terms(cont, f);
        }
        Agent::Input {
            subj,
            pattern,
            cont,
            ..
        } => {
            f(subj, "subject");
            f(pattern, "pattern");
            visit_terms(cont, f);
        }
        Agent::Case { branches } => {
            for (_, p) in branches {
                visit_terms(p, f);
            }
        }
        Agent::Restrict { body, .. } => visit_terms(body, f),
        Agent::Par(l, r) => {
            visit_terms(l, f);
            visit_terms(r, f);
        }
        Agent::Repl(p) => visit_terms(p, f),
    }
}

/// Plain pi-calculus: terms are names, conditions are name equations,
/// the only assertion is the unit, channel equivalence is equality.
pub struct PiInstance {
    names: Vec<Name>,
}

pub fn make_pi_instance() -> PiInstance {
    PiInstance {
        names: vec![Name::intern("a"), Name::intern("b")],
    }
}

impl PiInstance {
    pub fn with_names(names: Vec<Name>) -> PiInstance {
        PiInstance { names }
    }
}

impl Instance for PiInstance {
    fn name(&self) -> String {
        "pi".into()
    }

    fn unit(&self) -> Assertion {
        Assertion::Unit
    }

    fn entails(&self, _psi: &Assertion, cond: &Condition) -> bool {
        match cond {
            Condition::Top => true,
            Condition::Bool(b) => *b,
            Condition::Eq(m, n) => m == n,
            _ => false,
        }
    }

    fn chan_eq(&self, m: &Term, n: &Term) -> Condition {
        Condition::Eq(m.clone(), n.clone())
    }

    fn assertion_basis(&self) -> Vec<Assertion> {
        vec![Assertion::Unit]
    }

    fn condition_basis(&self) -> Vec<Condition> {
        let mut out = vec![Condition::Top];
        for m in &self.names {
            for n in &self.names {
                out.push(Condition::Eq(Term::Name(*m), Term::Name(*n)));
            }
        }
        out
    }

    fn term_universe(&self) -> Vec<Term> {
        self.names.iter().map(|n| Term::Name(*n)).collect()
    }

    fn parse_term(&self, text: &str) -> Result<Term, String> {
        Ok(Term::Name(parse_name(text)?))
    }

    fn parse_condition(&self, text: &str) -> Result<Condition, String> {
        parse_condition_literal(text)
    }

    fn parse_assertion(&self, text: &str) -> Result<Assertion, String> {
        if text.trim() == "1" {
            Ok(Assertion::Unit)
        } else {
            Err(format!("the pi instance only has the unit assertion, found {text:?}"))
        }
    }

    fn validate_agent(&self, agent: &Agent) -> Vec<Diagnostic> {
        names_only_diagnostics(agent, "pi")
    }
}

/// Annotated-channel calculus: subjects are `a:n` channel terms whose
/// priority is the annotation, objects are plain names, conditions are the
/// booleans, the only assertion is the unit.
pub struct PiAtInstance {
    channels: Vec<Name>,
    levels: Vec<PriorityLevel>,
    max_priority: PriorityLevel,
}

pub fn make_piat_instance(max_priority: PriorityLevel) -> PiAtInstance {
    PiAtInstance {
        channels: vec![Name::intern("a"), Name::intern("b")],
        levels: vec![0, 1.min(max_priority)],
        max_priority,
    }
}

impl PiAtInstance {
    pub fn with_channels(
        mut self,
        channels: Vec<Name>,
        levels: Vec<PriorityLevel>,
    ) -> PiAtInstance {
        self.channels = channels;
        self.levels = levels;
        self
    }
}

impl Instance for PiAtInstance {
    fn name(&self) -> String {
        "piat".into()
    }

    fn unit(&self) -> Assertion {
        Assertion::Unit
    }

    fn entails(&self, _psi: &Assertion, cond: &Condition) -> bool {
        match cond {
            Condition::Top => true,
            Condition::Bool(b) => *b,
            _ => false,
        }
    }

    fn chan_eq(&self, m: &Term, n: &Term) -> Condition {
        let eq = matches!(m, Term::Chan(..)) && m == n;
        Condition::Bool(eq)
    }

    fn max_priority(&self) -> Option<PriorityLevel> {
        Some(self.max_priority)
    }

    fn prio_cond(&self, m: &Term, level: PriorityLevel) -> Option<Condition> {
        let holds = match m {
            Term::Chan(_, n) => *n == level,
            Term::Name(_) => false,
        };
        Some(Condition::Bool(holds))
    }

    fn assertion_basis(&self) -> Vec<Assertion> {
        vec![Assertion::Unit]
    }

    fn condition_basis(&self) -> Vec<Condition> {
        vec![
            Condition::Top,
            Condition::Bool(true),
            Condition::Bool(false),
        ]
    }

    fn term_universe(&self) -> Vec<Term> {
        let mut out: Vec<Term> = self.channels.iter().map(|c| Term::Name(*c)).collect();
        for c in &self.channels {
            for l in &self.levels {
                out.push(Term::Chan(*c, *l));
            }
        }
        out
    }

    fn enum_subjects(&self) -> Vec<Term> {
        self.channels
            .iter()
            .flat_map(|c| self.levels.iter().map(|l| Term::Chan(*c, *l)))
            .collect()
    }

    fn parse_term(&self, text: &str) -> Result<Term, String> {
        parse_term_literal(text)
    }

    fn parse_condition(&self, text: &str) -> Result<Condition, String> {
        match text.trim() {
            "T" => Ok(Condition::Top),
            "true" => Ok(Condition::Bool(true)),
            "false" => Ok(Condition::Bool(false)),
            other => Err(format!("piat conditions are booleans, found {other:?}")),
        }
    }

    fn parse_assertion(&self, text: &str) -> Result<Assertion, String> {
        if text.trim() == "1" {
            Ok(Assertion::Unit)
        } else {
            Err(format!("the piat instance only has the unit assertion, found {text:?}"))
        }
    }

    /// Enforce the channel sort: subjects carry a level, objects and
    /// patterns are plain names.
    fn validate_agent(&self, agent: &Agent) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        visit_terms(agent, &mut |t, what| match what {
            "subject" => {
                if !matches!(t, Term::Chan(..)) {
                    out.push(Diagnostic {
                        path: String::new(),
                        message: format!(
                            "ill-sorted subject {t}: piat subjects are annotated channels a:n"
                        ),
                    });
                }
            }
            _ => {
                if !matches!(t, Term::Name(_)) {
                    out.push(Diagnostic {
                        path: String::new(),
                        message: format!("ill-sorted {what} {t}: piat objects are plain names"),
                    });
                }
            }
        });
        out
    }
}

/// Dynamic flip-priority calculus: channels are names with default priority
/// 0; an assertion is the set of channels flipped to priority 1, composition
/// is symmetric difference.
pub struct FlipInstance {
    names: Vec<Name>,
}

pub fn make_flip_instance(names_in_scope: impl IntoIterator<Item = Name>) -> FlipInstance {
    let mut names: Vec<Name> = names_in_scope.into_iter().collect();
    names.sort();
    names.dedup();
    FlipInstance { names }
}

pub fn default_flip_instance() -> FlipInstance {
    make_flip_instance([Name::intern("x"), Name::intern("y")])
}

fn flip_member(psi: &Assertion, name: Name) -> bool {
    match psi {
        Assertion::Unit => false,
        Assertion::NameSet(s) => s.contains(&name),
        Assertion::Pair(..) => panic!("flip entailment applied to a product assertion"),
    }
}

impl Instance for FlipInstance {
    fn name(&self) -> String {
        "flip".into()
    }

    fn unit(&self) -> Assertion {
        Assertion::NameSet(BTreeSet::new())
    }

    fn entails(&self, psi: &Assertion, cond: &Condition) -> bool {
        match cond {
            Condition::Top => true,
            Condition::Bool(b) => *b,
            Condition::Eq(m, n) => m == n,
            Condition::Prio(m, 0) => !flip_member(psi, m.head_name()),
            Condition::Prio(m, 1) => flip_member(psi, m.head_name()),
            Condition::Prio(..) => false,
            _ => false,
        }
    }

    fn chan_eq(&self, m: &Term, n: &Term) -> Condition {
        Condition::Eq(m.clone(), n.clone())
    }

    fn max_priority(&self) -> Option<PriorityLevel> {
        Some(1)
    }

    fn prio_cond(&self, m: &Term, level: PriorityLevel) -> Option<Condition> {
        Some(Condition::Prio(m.clone(), level))
    }

    fn assertion_basis(&self) -> Vec<Assertion> {
        assert!(
            self.names.len() <= 16,
            "flip assertion basis would be 2^{}",
            self.names.len()
        );
        let mut out = Vec::new();
        let n = self.names.len();
        for mask in 0u32..(1 << n) {
            let set: BTreeSet<Name> = self
                .names
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, nm)| *nm)
                .collect();
            out.push(Assertion::NameSet(set));
        }
        out
    }

    fn condition_basis(&self) -> Vec<Condition> {
        let mut out = vec![Condition::Top];
        for m in &self.names {
            for n in &self.names {
                out.push(Condition::Eq(Term::Name(*m), Term::Name(*n)));
            }
        }
        for m in &self.names {
            out.push(Condition::Prio(Term::Name(*m), 0));
            out.push(Condition::Prio(Term::Name(*m), 1));
        }
        out
    }

    fn term_universe(&self) -> Vec<Term> {
        self.names.iter().map(|n| Term::Name(*n)).collect()
    }

    fn parse_term(&self, text: &str) -> Result<Term, String> {
        Ok(Term::Name(parse_name(text)?))
    }

    fn parse_condition(&self, text: &str) -> Result<Condition, String> {
        parse_condition_literal(text)
    }

    fn parse_assertion(&self, text: &str) -> Result<Assertion, String> {
        let text = text.trim();
        if text == "1" {
            return Ok(self.unit());
        }
        Ok(Assertion::NameSet(parse_name_set(text)?))
    }

    fn validate_agent(&self, agent: &Agent) -> Vec<Diagnostic> {
        names_only_diagnostics(agent, "flip")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{check_requisites, prio_of_frame};

    fn n(s: &str) -> Name {
        Name::intern(s)
    }

    fn t(s: &str) -> Term {
        Term::Name(Name::intern(s))
    }

    #[test]
    fn pi_entailment() {
        let pi = make_pi_instance();
        assert!(pi.entails(&Assertion::Unit, &pi.chan_eq(&t("a"), &t("a"))));
        assert!(!pi.entails(&Assertion::Unit, &pi.chan_eq(&t("a"), &t("b"))));
        let got = pi.matches(&t("x"), &[n("x")], &t("m"));
        assert_eq!(got, vec![vec![t("m")]]);
    }

    #[test]
    fn piat_channel_equivalence() {
        let piat = make_piat_instance(9);
        let a2 = Term::Chan(n("a"), 2);
        let a3 = Term::Chan(n("a"), 3);
        assert!(piat.entails(&Assertion::Unit, &piat.chan_eq(&a2, &a2)));
        assert!(!piat.entails(&Assertion::Unit, &piat.chan_eq(&a2, &a3)));
        // plain names are not channels
        assert!(!piat.entails(&Assertion::Unit, &piat.chan_eq(&t("a"), &t("a"))));
    }

    #[test]
    fn piat_priority_from_annotation() {
        let piat = make_piat_instance(9);
        let frame = crate::agent::Frame::unit();
        let a7 = Term::Chan(n("a"), 7);
        assert_eq!(prio_of_frame(&piat, &frame, &a7).unwrap(), 7);
        let a0 = Term::Chan(n("a"), 0);
        assert_eq!(prio_of_frame(&piat, &frame, &a0).unwrap(), 0);
    }

    #[test]
    fn flip_composition_is_xor() {
        let flip = default_flip_instance();
        let a = Assertion::name_set([n("a")]);
        let ab = Assertion::name_set([n("a"), n("b")]);
        assert_eq!(flip.compose(&a, &ab), Assertion::name_set([n("b")]));
        assert!(flip.compose(&a, &a).is_unit());
    }

    #[test]
    fn flip_entailment() {
        let flip = default_flip_instance();
        let x = t("x");
        let psi_y = Assertion::name_set([n("y")]);
        // x not flipped: priority 0, not 1
        assert!(flip.entails(&psi_y, &Condition::Prio(x.clone(), 0)));
        assert!(!flip.entails(&psi_y, &Condition::Prio(x.clone(), 1)));
        let psi_x = Assertion::name_set([n("x")]);
        assert!(flip.entails(&psi_x, &Condition::Prio(x.clone(), 1)));
        assert!(!flip.entails(&psi_x, &Condition::Prio(x, 0)));
    }

    #[test]
    fn flip_priorities_are_total() {
        let flip = make_flip_instance([n("x"), n("y"), n("z")]);
        for psi in flip.assertion_basis() {
            for m in flip.term_universe() {
                let p0 = flip.entails(&psi, &Condition::Prio(m.clone(), 0));
                let p1 = flip.entails(&psi, &Condition::Prio(m.clone(), 1));
                assert!(p0 ^ p1, "exactly one level for {m} under {psi}");
            }
        }
    }

    #[test]
    fn flip_monoid_exhaustive_four_names() {
        let flip = make_flip_instance([n("a"), n("b"), n("c"), n("d")]);
        let basis = flip.assertion_basis();
        assert_eq!(basis.len(), 16);
        let unit = flip.unit();
        for a in &basis {
            assert_eq!(flip.compose(a, &unit), *a);
            // every assertion is its own inverse
            assert!(flip.compose(a, a).is_unit());
            for b in &basis {
                assert_eq!(flip.compose(a, b), flip.compose(b, a));
                for c in &basis {
                    assert_eq!(
                        flip.compose(&flip.compose(a, b), c),
                        flip.compose(a, &flip.compose(b, c))
                    );
                }
            }
        }
    }

    #[test]
    fn shipped_instances_pass_requisites() {
        let flip = make_flip_instance([n("x"), n("y"), n("z")]);
        let report = check_requisites(&flip);
        assert!(report.passed(), "flip failures: {report}");

        let piat = make_piat_instance(3);
        let report = check_requisites(&piat);
        assert!(report.passed(), "piat failures: {report}");

        let pi = make_pi_instance();
        let report = check_requisites(&pi);
        assert!(report.passed(), "pi failures: {report}");
    }

    #[test]
    fn broken_instance_is_caught_with_witness() {
        /// compose that forgets its left argument: not commutative
        struct Broken(FlipInstance);
        impl Instance for Broken {
            fn name(&self) -> String {
                "broken".into()
            }
            fn unit(&self) -> Assertion {
                self.0.unit()
            }
            fn compose(&self, _a: &Assertion, b: &Assertion) -> Assertion {
                b.clone()
            }
            fn entails(&self, psi: &Assertion, cond: &Condition) -> bool {
                self.0.entails(psi, cond)
            }
            fn chan_eq(&self, m: &Term, n: &Term) -> Condition {
                self.0.chan_eq(m, n)
            }
            fn assertion_basis(&self) -> Vec<Assertion> {
                self.0.assertion_basis()
            }
            fn condition_basis(&self) -> Vec<Condition> {
                self.0.condition_basis()
            }
            fn term_universe(&self) -> Vec<Term> {
                self.0.term_universe()
            }
            fn parse_term(&self, text: &str) -> Result<Term, String> {
                self.0.parse_term(text)
            }
            fn parse_condition(&self, text: &str) -> Result<Condition, String> {
                self.0.parse_condition(text)
            }
            fn parse_assertion(&self, text: &str) -> Result<Assertion, String> {
                self.0.parse_assertion(text)
            }
        }
        let broken = Broken(default_flip_instance());
        let report = check_requisites(&broken);
        assert!(!report.passed());
        assert!(report
            .failures
            .iter()
            .any(|f| f.law == "compose-commutative" || f.law == "compose-unit"));
    }

    #[test]
    fn parse_literals() {
        let flip = default_flip_instance();
        assert_eq!(flip.parse_term("x").unwrap(), t("x"));
        assert!(flip.parse_term("x:1").is_err());
        assert_eq!(
            flip.parse_assertion("{x,y}").unwrap(),
            Assertion::name_set([n("x"), n("y")])
        );
        assert_eq!(flip.parse_assertion("{}").unwrap(), flip.unit());
        assert_eq!(
            flip.parse_condition("x<p:1").unwrap(),
            Condition::Prio(t("x"), 1)
        );
        assert_eq!(flip.parse_condition("T").unwrap(), Condition::Top);

        let piat = make_piat_instance(9);
        assert_eq!(piat.parse_term("a:2").unwrap(), Term::Chan(n("a"), 2));
        assert_eq!(piat.parse_term("a").unwrap(), t("a"));
    }
}
