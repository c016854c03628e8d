//! Agent syntax, well-formedness, frames, capture-avoiding substitution and
//! structural congruence.

use std::collections::BTreeSet;
use std::fmt;

use crate::data::{Assertion, Condition, Subst, SubstError, Term};
use crate::nominal::{fresh_name, CanonState, Name, Nominal};

/// Process syntax. Input binders bind into the pattern and the continuation;
/// restriction binds into the body.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Agent {
    Nil,
    Output {
        subj: Term,
        obj: Term,
        cont: Box<Agent>,
    },
    Input {
        subj: Term,
        binders: Vec<Name>,
        pattern: Term,
        cont: Box<Agent>,
    },
    Case {
        branches: Vec<(Condition, Agent)>,
    },
    Restrict {
        name: Name,
        body: Box<Agent>,
    },
    Par(Box<Agent>, Box<Agent>),
    Repl(Box<Agent>),
    Assert(Assertion),
}

/// A transition label. The extruded names of an output bind into the object
/// (and into the derivative of the transition carrying the action).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Out {
        subj: Term,
        extruded: Vec<Name>,
        obj: Term,
    },
    In {
        subj: Term,
        obj: Term,
    },
    Tau {
        prio: Option<u32>,
    },
}

impl Action {
    pub fn bn(&self) -> &[Name] {
        match self {
            Action::Out { extruded, .. } => extruded,
            _ => &[],
        }
    }

    pub fn subject(&self) -> Option<&Term> {
        match self {
            Action::Out { subj, .. } | Action::In { subj, .. } => Some(subj),
            Action::Tau { .. } => None,
        }
    }

    pub fn is_tau(&self) -> bool {
        matches!(self, Action::Tau { .. })
    }

    /// The label with any priority annotation erased.
    pub fn erase_priority(&self) -> Action {
        match self {
            Action::Tau { .. } => Action::Tau { prio: None },
            other => other.clone(),
        }
    }
}

impl Nominal for Action {
    fn swap(&self, a: Name, b: Name) -> Action {
        match self {
            Action::Out {
                subj,
                extruded,
                obj,
            } => Action::Out {
                subj: subj.swap(a, b),
                extruded: extruded.swap(a, b),
                obj: obj.swap(a, b),
            },
            Action::In { subj, obj } => Action::In {
                subj: subj.swap(a, b),
                obj: obj.swap(a, b),
            },
            Action::Tau { prio } => Action::Tau { prio: *prio },
        }
    }

    fn free_names(&self, acc: &mut BTreeSet<Name>) {
        // bn(alpha) is in the support of the action
        match self {
            Action::Out {
                subj,
                extruded,
                obj,
            } => {
                subj.free_names(acc);
                extruded.free_names(acc);
                obj.free_names(acc);
            }
            Action::In { subj, obj } => {
                subj.free_names(acc);
                obj.free_names(acc);
            }
            Action::Tau { .. } => {}
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Out {
                subj,
                extruded,
                obj,
            } => {
                if extruded.is_empty() {
                    write!(f, "out({subj},{obj})")
                } else {
                    let names: Vec<String> =
                        extruded.iter().map(|n| n.to_string()).collect();
                    write!(f, "out({subj},(new {}){obj})", names.join(","))
                }
            }
            Action::In { subj, obj } => write!(f, "in({subj},{obj})"),
            Action::Tau { prio: None } => write!(f, "tau"),
            Action::Tau { prio: Some(p) } => write!(f, "tau:{p}"),
        }
    }
}

/// A frame: an assertion under a sequence of binding names. Frame equality
/// is alpha-equivalence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub binders: Vec<Name>,
    pub assertion: Assertion,
}

impl Frame {
    pub fn unit() -> Frame {
        Frame {
            binders: Vec::new(),
            assertion: Assertion::Unit,
        }
    }

    pub fn from_assertion(assertion: Assertion) -> Frame {
        Frame {
            binders: Vec::new(),
            assertion,
        }
    }

    /// The assertion with all binders renamed to brand-new atoms, suitable
    /// for entailment against a condition the binders must be fresh for.
    pub fn opened(&self) -> Assertion {
        let mut assertion = self.assertion.clone();
        for b in &self.binders {
            let b2 = fresh_name(&BTreeSet::new(), &b.hint());
            assertion = assertion.swap(*b, b2);
        }
        assertion
    }

    /// Frame composition: binder sequences are made mutually fresh, then
    /// concatenated over the composed assertions.
    pub fn compose(&self, other: &Frame) -> Frame {
        let mut left = self.clone();
        let mut right = other.clone();
        left.avoid_clashes_with(&right);
        right.avoid_clashes_with(&left);
        let mut binders = left.binders;
        binders.extend(right.binders);
        Frame {
            binders,
            assertion: left.assertion.compose_structural(&right.assertion),
        }
    }

    fn avoid_clashes_with(&mut self, other: &Frame) {
        let mut forbidden = other.support();
        forbidden.extend(other.binders.iter().copied());
        for i in 0..self.binders.len() {
            let b = self.binders[i];
            if forbidden.contains(&b) {
                let b2 = fresh_name(&forbidden, &b.hint());
                self.assertion = self.assertion.swap(b, b2);
                self.binders[i] = b2;
            }
        }
    }

    pub fn canonical(&self) -> Frame {
        let mut st = CanonState::new();
        let binders: Vec<Name> = self.binders.iter().map(|b| st.bind(*b)).collect();
        Frame {
            binders,
            assertion: self.assertion.canon_into(&mut st),
        }
    }

    pub fn alpha_eq(&self, other: &Frame) -> bool {
        self.canonical() == other.canonical()
    }
}

impl Nominal for Frame {
    fn swap(&self, a: Name, b: Name) -> Frame {
        Frame {
            binders: self.binders.swap(a, b),
            assertion: self.assertion.swap(a, b),
        }
    }

    fn free_names(&self, acc: &mut BTreeSet<Name>) {
        let mut inner = BTreeSet::new();
        self.assertion.free_names(&mut inner);
        for b in &self.binders {
            inner.remove(b);
        }
        acc.extend(inner);
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.binders.is_empty() {
            write!(f, "{}", self.assertion)
        } else {
            let names: Vec<String> = self.binders.iter().map(|n| n.to_string()).collect();
            write!(f, "(new {})({})", names.join(","), self.assertion)
        }
    }
}

/// A well-formedness or encodability violation, with a path into the tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl Nominal for Agent {
    fn swap(&self, a: Name, b: Name) -> Agent {
        match self {
            Agent::Nil => Agent::Nil,
            Agent::Output { subj, obj, cont } => Agent::Output {
                subj: subj.swap(a, b),
                obj: obj.swap(a, b),
                cont: Box::new(cont.swap(a, b)),
            },
            Agent::Input {
                subj,
                binders,
                pattern,
                cont,
            } => Agent::Input {
                subj: subj.swap(a, b),
                binders: binders.swap(a, b),
                pattern: pattern.swap(a, b),
                cont: Box::new(cont.swap(a, b)),
            },
            Agent::Case { branches } => Agent::Case {
                branches: branches
                    .iter()
                    .map(|(c, p)| (c.swap(a, b), p.swap(a, b)))
                    .collect(),
            },
            Agent::Restrict { name, body } => Agent::Restrict {
                name: name.swap(a, b),
                body: Box::new(body.swap(a, b)),
            },
            Agent::Par(l, r) => Agent::Par(Box::new(l.swap(a, b)), Box::new(r.swap(a, b))),
            Agent::Repl(p) => Agent::Repl(Box::new(p.swap(a, b))),
            Agent::Assert(psi) => Agent::Assert(psi.swap(a, b)),
        }
    }

    fn free_names(&self, acc: &mut BTreeSet<Name>) {
        match self {
            Agent::Nil => {}
            Agent::Output { subj, obj, cont } => {
                subj.free_names(acc);
                obj.free_names(acc);
                cont.free_names(acc);
            }
            Agent::Input {
                subj,
                binders,
                pattern,
                cont,
            } => {
                subj.free_names(acc);
                let mut inner = BTreeSet::new();
                pattern.free_names(&mut inner);
                cont.free_names(&mut inner);
                for b in binders {
                    inner.remove(b);
                }
                acc.extend(inner);
            }
            Agent::Case { branches } => {
                for (c, p) in branches {
                    c.free_names(acc);
                    p.free_names(acc);
                }
            }
            Agent::Restrict { name, body } => {
                let mut inner = BTreeSet::new();
                body.free_names(&mut inner);
                inner.remove(name);
                acc.extend(inner);
            }
            Agent::Par(l, r) => {
                l.free_names(acc);
                r.free_names(acc);
            }
            Agent::Repl(p) => p.free_names(acc),
            Agent::Assert(psi) => psi.free_names(acc),
        }
    }
}

impl Agent {
    pub fn par(l: Agent, r: Agent) -> Agent {
        Agent::Par(Box::new(l), Box::new(r))
    }

    pub fn restrict(name: Name, body: Agent) -> Agent {
        Agent::Restrict {
            name,
            body: Box::new(body),
        }
    }

    pub fn output(subj: Term, obj: Term, cont: Agent) -> Agent {
        Agent::Output {
            subj,
            obj,
            cont: Box::new(cont),
        }
    }

    pub fn input(subj: Term, binders: Vec<Name>, pattern: Term, cont: Agent) -> Agent {
        Agent::Input {
            subj,
            binders,
            pattern,
            cont: Box::new(cont),
        }
    }

    /// True when the agent contains no unguarded assertion.
    pub fn is_assertion_guarded(&self) -> bool {
        match self {
            Agent::Nil | Agent::Output { .. } | Agent::Input { .. } => true,
            Agent::Assert(_) => false,
            Agent::Case { branches } => branches.iter().all(|(_, p)| p.is_assertion_guarded()),
            Agent::Restrict { body, .. } => body.is_assertion_guarded(),
            Agent::Par(l, r) => l.is_assertion_guarded() && r.is_assertion_guarded(),
            Agent::Repl(p) => p.is_assertion_guarded(),
        }
    }

    /// Well-formedness per the syntax discipline: input binders are
    /// duplicate-free and occur in the pattern; replication bodies and case
    /// branches are assertion-guarded.
    pub fn well_formed(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        self.wf_rec("", &mut out);
        out
    }

    fn wf_rec(&self, path: &str, out: &mut Vec<Diagnostic>) {
        let sub = |seg: &str| {
            if path.is_empty() {
                seg.to_string()
            } else {
                format!("{path}/{seg}")
            }
        };
        match self {
            Agent::Nil | Agent::Assert(_) => {}
            Agent::Output { cont, .. } => cont.wf_rec(&sub("out"), out),
            Agent::Input {
                binders,
                pattern,
                cont,
                ..
            } => {
                let mut seen = BTreeSet::new();
                for b in binders {
                    if !seen.insert(*b) {
                        out.push(Diagnostic {
                            path: path.to_string(),
                            message: format!("duplicate binders: {b} bound twice"),
                        });
                    }
                }
                let pat_names = pattern.support();
                for b in binders {
                    if !pat_names.contains(b) {
                        out.push(Diagnostic {
                            path: path.to_string(),
                            message: format!("binder {b} does not occur in the pattern"),
                        });
                    }
                }
                cont.wf_rec(&sub("in"), out);
            }
            Agent::Case { branches } => {
                for (i, (_, p)) in branches.iter().enumerate() {
                    if !p.is_assertion_guarded() {
                        out.push(Diagnostic {
                            path: path.to_string(),
                            message: format!("case branch {i} not assertion-guarded"),
                        });
                    }
                    p.wf_rec(&sub(&format!("case[{i}]")), out);
                }
            }
            Agent::Restrict { body, .. } => body.wf_rec(&sub("new"), out),
            Agent::Par(l, r) => {
                l.wf_rec(&sub("par.l"), out);
                r.wf_rec(&sub("par.r"), out);
            }
            Agent::Repl(p) => {
                if !p.is_assertion_guarded() {
                    out.push(Diagnostic {
                        path: path.to_string(),
                        message: "replication body not assertion-guarded".to_string(),
                    });
                }
                p.wf_rec(&sub("repl"), out);
            }
        }
    }

    /// Encodability: separate choice (every case branch is a prefix, all
    /// inputs or all outputs) and prefix-guarded replication.
    pub fn encodable(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        self.enc_rec("", &mut out);
        out
    }

    fn enc_rec(&self, path: &str, out: &mut Vec<Diagnostic>) {
        let sub = |seg: &str| {
            if path.is_empty() {
                seg.to_string()
            } else {
                format!("{path}/{seg}")
            }
        };
        match self {
            Agent::Nil | Agent::Assert(_) => {}
            Agent::Output { cont, .. } => cont.enc_rec(&sub("out"), out),
            Agent::Input { cont, .. } => cont.enc_rec(&sub("in"), out),
            Agent::Case { branches } => {
                let mut directions = Vec::new();
                for (i, (_, p)) in branches.iter().enumerate() {
                    match p {
                        Agent::Output { cont, .. } => {
                            directions.push(false);
                            cont.enc_rec(&sub(&format!("case[{i}]")), out);
                        }
                        Agent::Input { cont, .. } => {
                            directions.push(true);
                            cont.enc_rec(&sub(&format!("case[{i}]")), out);
                        }
                        _ => out.push(Diagnostic {
                            path: path.to_string(),
                            message: format!("case branch {i} not prefix-guarded"),
                        }),
                    }
                }
                if directions.iter().any(|d| *d) && directions.iter().any(|d| !*d) {
                    out.push(Diagnostic {
                        path: path.to_string(),
                        message: "mixed choice: case mixes input and output branches"
                            .to_string(),
                    });
                }
            }
            Agent::Restrict { body, .. } => body.enc_rec(&sub("new"), out),
            Agent::Par(l, r) => {
                l.enc_rec(&sub("par.l"), out);
                r.enc_rec(&sub("par.r"), out);
            }
            Agent::Repl(p) => match &**p {
                Agent::Output { cont, .. } | Agent::Input { cont, .. } => {
                    cont.enc_rec(&sub("repl"), out)
                }
                _ => out.push(Diagnostic {
                    path: path.to_string(),
                    message: "replication not prefix-guarded".to_string(),
                }),
            },
        }
    }

    /// Alpha-canonical form: bound names become position-indexed atoms in
    /// traversal order. Two agents are alpha-equivalent iff their canonical
    /// forms are structurally equal.
    pub fn canonical(&self) -> Agent {
        self.canon_into(&mut CanonState::new())
    }

    pub fn canon_into(&self, st: &mut CanonState) -> Agent {
        match self {
            Agent::Nil => Agent::Nil,
            Agent::Output { subj, obj, cont } => Agent::Output {
                subj: subj.canon_into(st),
                obj: obj.canon_into(st),
                cont: Box::new(cont.canon_into(st)),
            },
            Agent::Input {
                subj,
                binders,
                pattern,
                cont,
            } => {
                let subj = subj.canon_into(st);
                let mark = st.mark();
                let binders: Vec<Name> = binders.iter().map(|b| st.bind(*b)).collect();
                let pattern = pattern.canon_into(st);
                let cont = Box::new(cont.canon_into(st));
                st.release(mark);
                Agent::Input {
                    subj,
                    binders,
                    pattern,
                    cont,
                }
            }
            Agent::Case { branches } => Agent::Case {
                branches: branches
                    .iter()
                    .map(|(c, p)| (c.canon_into(st), p.canon_into(st)))
                    .collect(),
            },
            Agent::Restrict { name, body } => {
                let mark = st.mark();
                let name = st.bind(*name);
                let body = Box::new(body.canon_into(st));
                st.release(mark);
                Agent::Restrict { name, body }
            }
            Agent::Par(l, r) => {
                Agent::Par(Box::new(l.canon_into(st)), Box::new(r.canon_into(st)))
            }
            Agent::Repl(p) => Agent::Repl(Box::new(p.canon_into(st))),
            Agent::Assert(psi) => Agent::Assert(psi.canon_into(st)),
        }
    }

    pub fn alpha_eq(&self, other: &Agent) -> bool {
        self.canonical() == other.canonical()
    }

    /// Capture-avoiding substitution; binders clashing with the substitution
    /// are alpha-renamed first.
    pub fn substitute(&self, names: &[Name], terms: &[Term]) -> Result<Agent, SubstError> {
        let sub = Subst::new(names, terms)?;
        Ok(self.subst(&sub))
    }

    pub fn subst(&self, sub: &Subst) -> Agent {
        if sub.is_empty() {
            return self.clone();
        }
        let avoid = sub.relevant_names();
        self.subst_rec(sub, &avoid)
    }

    fn subst_rec(&self, sub: &Subst, avoid: &BTreeSet<Name>) -> Agent {
        match self {
            Agent::Nil => Agent::Nil,
            Agent::Output { subj, obj, cont } => Agent::Output {
                subj: subj.subst(sub),
                obj: obj.subst(sub),
                cont: Box::new(cont.subst_rec(sub, avoid)),
            },
            Agent::Input {
                subj,
                binders,
                pattern,
                cont,
            } => {
                let subj = subj.subst(sub);
                let mut binders = binders.clone();
                let mut pattern = pattern.clone();
                let mut cont = (**cont).clone();
                for i in 0..binders.len() {
                    if avoid.contains(&binders[i]) {
                        let b2 = fresh_name(avoid, &binders[i].hint());
                        pattern = pattern.swap(binders[i], b2);
                        cont = cont.swap(binders[i], b2);
                        binders[i] = b2;
                    }
                }
                Agent::Input {
                    subj,
                    binders,
                    pattern: pattern.subst(sub),
                    cont: Box::new(cont.subst_rec(sub, avoid)),
                }
            }
            Agent::Case { branches } => Agent::Case {
                branches: branches
                    .iter()
                    .map(|(c, p)| (c.subst(sub), p.subst_rec(sub, avoid)))
                    .collect(),
            },
            Agent::Restrict { name, body } => {
                let mut name = *name;
                let mut body = (**body).clone();
                if avoid.contains(&name) {
                    let b2 = fresh_name(avoid, &name.hint());
                    body = body.swap(name, b2);
                    name = b2;
                }
                Agent::Restrict {
                    name,
                    body: Box::new(body.subst_rec(sub, avoid)),
                }
            }
            Agent::Par(l, r) => Agent::Par(
                Box::new(l.subst_rec(sub, avoid)),
                Box::new(r.subst_rec(sub, avoid)),
            ),
            Agent::Repl(p) => Agent::Repl(Box::new(p.subst_rec(sub, avoid))),
            Agent::Assert(psi) => Agent::Assert(psi.subst(sub)),
        }
    }

    /// Objects of output prefixes occurring anywhere in the agent. Together
    /// with an instance's term universe these span the labels enumerated for
    /// free inputs.
    pub fn output_objects(&self, acc: &mut Vec<Term>) {
        match self {
            Agent::Nil | Agent::Assert(_) => {}
            Agent::Output { obj, cont, .. } => {
                acc.push(obj.clone());
                cont.output_objects(acc);
            }
            Agent::Input { cont, .. } => cont.output_objects(acc),
            Agent::Case { branches } => {
                for (_, p) in branches {
                    p.output_objects(acc);
                }
            }
            Agent::Restrict { body, .. } => body.output_objects(acc),
            Agent::Par(l, r) => {
                l.output_objects(acc);
                r.output_objects(acc);
            }
            Agent::Repl(p) => p.output_objects(acc),
        }
    }
}

/// The frame of an agent: unguarded assertions under the restricted names
/// scoping over them. Parallel composition makes the binder sequences of the
/// two sides mutually fresh.
pub fn frame_of(agent: &Agent) -> Frame {
    match agent {
        Agent::Nil
        | Agent::Output { .. }
        | Agent::Input { .. }
        | Agent::Case { .. }
        | Agent::Repl(_) => Frame::unit(),
        Agent::Assert(psi) => Frame::from_assertion(psi.clone()),
        Agent::Par(l, r) => frame_of(l).compose(&frame_of(r)),
        Agent::Restrict { name, body } => {
            let mut inner = frame_of(body);
            if inner.binders.contains(name) {
                // an inner binder shadows this restriction; rename it
                let mut forbidden = inner.support();
                forbidden.extend(inner.binders.iter().copied());
                forbidden.insert(*name);
                let idx = inner.binders.iter().position(|b| b == name).unwrap();
                let b2 = fresh_name(&forbidden, &name.hint());
                inner.assertion = inner.assertion.swap(*name, b2);
                inner.binders[idx] = b2;
            }
            let mut binders = vec![*name];
            binders.extend(inner.binders);
            Frame {
                binders,
                assertion: inner.assertion,
            }
        }
    }
}

/// AC-normal form for structural congruence: parallel composition is
/// flattened with unit Nil removed, unguarded assertions are merged into a
/// single assertion process (dropped when the composite is a unit), and
/// components are sorted by their canonical print.
pub fn normal_form(agent: &Agent) -> Agent {
    match agent {
        Agent::Nil => Agent::Nil,
        Agent::Assert(psi) => {
            if psi.is_unit() {
                Agent::Nil
            } else {
                Agent::Assert(psi.clone())
            }
        }
        Agent::Output { subj, obj, cont } => Agent::Output {
            subj: subj.clone(),
            obj: obj.clone(),
            cont: Box::new(normal_form(cont)),
        },
        Agent::Input {
            subj,
            binders,
            pattern,
            cont,
        } => Agent::Input {
            subj: subj.clone(),
            binders: binders.clone(),
            pattern: pattern.clone(),
            cont: Box::new(normal_form(cont)),
        },
        Agent::Case { branches } => Agent::Case {
            branches: branches
                .iter()
                .map(|(c, p)| (c.clone(), normal_form(p)))
                .collect(),
        },
        Agent::Restrict { name, body } => Agent::Restrict {
            name: *name,
            body: Box::new(normal_form(body)),
        },
        Agent::Repl(p) => Agent::Repl(Box::new(normal_form(p))),
        Agent::Par(_, _) => {
            let mut comps = Vec::new();
            flatten_par(agent, &mut comps);
            let mut merged: Option<Assertion> = None;
            let mut rest = Vec::new();
            for c in comps {
                match c {
                    Agent::Assert(psi) => {
                        merged = Some(match merged {
                            None => psi,
                            Some(acc) => acc.compose_structural(&psi),
                        });
                    }
                    other => rest.push(other),
                }
            }
            if let Some(psi) = merged {
                if !psi.is_unit() {
                    rest.push(Agent::Assert(psi));
                }
            }
            rest.sort_by_key(|c| c.canonical().to_string());
            let mut it = rest.into_iter().rev();
            match it.next() {
                None => Agent::Nil,
                Some(last) => it.fold(last, |acc, c| Agent::par(c, acc)),
            }
        }
    }
}

fn flatten_par(agent: &Agent, out: &mut Vec<Agent>) {
    match agent {
        Agent::Par(l, r) => {
            flatten_par(l, out);
            flatten_par(r, out);
        }
        Agent::Nil => {}
        other => {
            let n = normal_form(other);
            if n != Agent::Nil {
                out.push(n);
            }
        }
    }
}

/// All agents reachable from one application of `!P -> P | !P` at any
/// replication occurrence.
fn one_step_unfolds(agent: &Agent) -> Vec<Agent> {
    let mut out = Vec::new();
    match agent {
        Agent::Nil | Agent::Assert(_) => {}
        Agent::Output { subj, obj, cont } => {
            for c in one_step_unfolds(cont) {
                out.push(Agent::output(subj.clone(), obj.clone(), c));
            }
        }
        Agent::Input {
            subj,
            binders,
            pattern,
            cont,
        } => {
            for c in one_step_unfolds(cont) {
                out.push(Agent::input(
                    subj.clone(),
                    binders.clone(),
                    pattern.clone(),
                    c,
                ));
            }
        }
        Agent::Case { branches } => {
            for (i, (_, p)) in branches.iter().enumerate() {
                for v in one_step_unfolds(p) {
                    let mut bs = branches.clone();
                    bs[i].1 = v;
                    out.push(Agent::Case { branches: bs });
                }
            }
        }
        Agent::Restrict { name, body } => {
            for v in one_step_unfolds(body) {
                out.push(Agent::restrict(*name, v));
            }
        }
        Agent::Par(l, r) => {
            for v in one_step_unfolds(l) {
                out.push(Agent::par(v, (**r).clone()));
            }
            for v in one_step_unfolds(r) {
                out.push(Agent::par((**l).clone(), v));
            }
        }
        Agent::Repl(p) => {
            out.push(Agent::par((**p).clone(), agent.clone()));
            for v in one_step_unfolds(p) {
                out.push(Agent::Repl(Box::new(v)));
            }
        }
    }
    out
}

/// Canonical normal forms reachable with at most `budget` replication
/// unfoldings.
pub fn unfold_closure(agent: &Agent, budget: u32) -> BTreeSet<Agent> {
    let start = normal_form(agent);
    let mut seen: BTreeSet<Agent> = BTreeSet::new();
    seen.insert(start.canonical());
    let mut frontier = vec![start];
    for _ in 0..budget {
        let mut next = Vec::new();
        for q in &frontier {
            for v in one_step_unfolds(q) {
                let nf = normal_form(&v);
                if seen.insert(nf.canonical()) {
                    next.push(nf);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    seen
}

/// Structural congruence: the smallest congruence with the parallel
/// commutative monoid laws, assertion merging, `0 = (|1|)` and replication
/// unfolding, the latter bounded by `unfold_budget` applications.
pub fn struct_congr(p: &Agent, q: &Agent, unfold_budget: u32) -> bool {
    let cp = unfold_closure(p, unfold_budget);
    if unfold_budget == 0 {
        return cp.contains(&normal_form(q).canonical());
    }
    let cq = unfold_closure(q, unfold_budget);
    !cp.is_disjoint(&cq)
}

enum Ctx {
    Top,
    ParLeft,
    ParRight,
    Unary,
}

impl Agent {
    fn fmt_ctx(&self, f: &mut fmt::Formatter<'_>, ctx: Ctx) -> fmt::Result {
        match self {
            Agent::Nil => write!(f, "0"),
            Agent::Output { subj, obj, cont } => {
                write!(f, "out({subj},{obj}).")?;
                cont.fmt_ctx(f, Ctx::Unary)
            }
            Agent::Input {
                subj,
                binders,
                pattern,
                cont,
            } => {
                write!(f, "in({subj},\\")?;
                for (i, b) in binders.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{b}")?;
                }
                write!(f, ",{pattern}).")?;
                cont.fmt_ctx(f, Ctx::Unary)
            }
            Agent::Case { branches } => {
                let parens = !matches!(ctx, Ctx::Top);
                if parens {
                    write!(f, "(")?;
                }
                write!(f, "case ")?;
                for (i, (c, p)) in branches.iter().enumerate() {
                    if i > 0 {
                        write!(f, " [] ")?;
                    }
                    write!(f, "{c} -> ")?;
                    p.fmt_ctx(f, Ctx::Unary)?;
                }
                if parens {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Agent::Restrict { name, body } => {
                write!(f, "(new {name})")?;
                body.fmt_ctx(f, Ctx::Unary)
            }
            Agent::Par(l, r) => {
                let parens = matches!(ctx, Ctx::ParLeft | Ctx::Unary);
                if parens {
                    write!(f, "(")?;
                }
                l.fmt_ctx(f, Ctx::ParLeft)?;
                write!(f, " | ")?;
                r.fmt_ctx(f, Ctx::ParRight)?;
                if parens {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Agent::Repl(p) => {
                write!(f, "!")?;
                p.fmt_ctx(f, Ctx::Unary)
            }
            Agent::Assert(psi) => write!(f, "(|{psi}|)"),
        }
    }

    /// Rename binders whose display string collides with a visible free name
    /// (or another binder) so that printing is unambiguous and re-parseable.
    fn disambiguated(&self) -> Agent {
        fn uniquify(binder: Name, taken: &BTreeSet<String>) -> Option<Name> {
            let shown = binder.hint();
            if !taken.contains(&shown) {
                return None;
            }
            let mut cand = shown;
            loop {
                cand.push('\'');
                if !taken.contains(&cand) {
                    return Some(Name::intern(&cand));
                }
            }
        }
        fn go(p: &Agent) -> Agent {
            match p {
                Agent::Input {
                    subj,
                    binders,
                    pattern,
                    cont,
                } => {
                    let mut pattern = pattern.clone();
                    let mut cont = go(cont);
                    let mut binders = binders.clone();
                    let mut scope_names: BTreeSet<Name> = pattern.support();
                    scope_names.extend(cont.support());
                    scope_names.extend(subj.support());
                    for i in 0..binders.len() {
                        let taken: BTreeSet<String> = scope_names
                            .iter()
                            .filter(|n| **n != binders[i])
                            .chain(binders.iter().filter(|b| **b != binders[i]))
                            .map(|n| n.hint())
                            .collect();
                        if let Some(b2) = uniquify(binders[i], &taken) {
                            pattern = pattern.swap(binders[i], b2);
                            cont = cont.swap(binders[i], b2);
                            binders[i] = b2;
                        }
                    }
                    Agent::Input {
                        subj: subj.clone(),
                        binders,
                        pattern,
                        cont: Box::new(cont),
                    }
                }
                Agent::Restrict { name, body } => {
                    let body = go(body);
                    let scope: BTreeSet<String> = body
                        .support()
                        .iter()
                        .filter(|n| *n != name)
                        .map(|n| n.hint())
                        .collect();
                    match uniquify(*name, &scope) {
                        Some(b2) => Agent::restrict(b2, body.swap(*name, b2)),
                        None => Agent::restrict(*name, body),
                    }
                }
                Agent::Output { subj, obj, cont } => {
                    Agent::output(subj.clone(), obj.clone(), go(cont))
                }
                Agent::Case { branches } => Agent::Case {
                    branches: branches.iter().map(|(c, p)| (c.clone(), go(p))).collect(),
                },
                Agent::Par(l, r) => Agent::par(go(l), go(r)),
                Agent::Repl(p) => Agent::Repl(Box::new(go(p))),
                other => other.clone(),
            }
        }
        go(self)
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.disambiguated().fmt_ctx(f, Ctx::Top)
    }
}
