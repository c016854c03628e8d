//! Strong bisimulation and strong congruence checking for finite-state
//! agents, over any of the three transition layers.
//!
//! The checker runs a greatest-fixpoint refinement over environment-indexed
//! agent pairs. The clauses quantifying over all conditions, assertions and
//! substitutions are evaluated over the finite bases in [`BisimConfig`];
//! environments reached by assertion extension are closed under composition
//! up to static equivalence over the condition basis.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::agent::{frame_of, Action, Agent, Frame};
use crate::data::{Assertion, Condition, Term};
use crate::instance::{static_equiv, Instance};
use crate::nominal::{Name, Nominal};
use crate::semantics::{canon_action_target, Layer, Semantics, SemanticsError, Transition};

#[derive(Debug, Clone)]
pub struct BisimConfig {
    pub condition_basis: Vec<Condition>,
    pub assertion_basis: Vec<Assertion>,
    pub subst_universe: Vec<(Vec<Name>, Vec<Term>)>,
    pub max_states: usize,
    pub layer: Layer,
}

impl BisimConfig {
    pub fn for_instance(inst: &dyn Instance, layer: Layer) -> BisimConfig {
        BisimConfig {
            condition_basis: inst.condition_basis(),
            assertion_basis: inst.assertion_basis(),
            subst_universe: Vec::new(),
            max_states: 50_000,
            layer,
        }
    }

    pub fn with_substitutions(mut self, subs: Vec<(Vec<Name>, Vec<Term>)>) -> Self {
        self.subst_universe = subs;
        self
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum EquivError {
    #[error("state budget exceeded: more than {0} triples explored")]
    StateBudgetExceeded(usize),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

/// One step of a distinguishing strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackNode {
    pub env: String,
    pub p: String,
    pub q: String,
    pub clause: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_target: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extension: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub responses: Vec<AttackNode>,
}

#[derive(Debug, Clone)]
pub enum Witness {
    /// The relation containing the queried triple; every triple satisfies
    /// all four clauses relative to the bases.
    Related(Vec<(Assertion, Agent, Agent)>),
    /// A replayable refutation.
    Attack(AttackNode),
}

#[derive(Debug, Clone)]
pub struct BisimResult {
    pub related: bool,
    pub witness: Witness,
}

type TripleKey = (Assertion, Agent, Agent);

#[derive(Debug, Clone)]
enum Reason {
    StaticEquiv,
    Mirror(usize),
    Extension(Assertion, usize),
    Move {
        action: Action,
        p_target: Agent,
        candidates: Vec<(usize, Agent)>,
    },
}

struct Move {
    action: Action,
    p_target: Agent,
    /// (triple index, q response target) per action-matching response.
    candidates: Vec<(usize, Agent)>,
}

struct TripleData {
    env: Assertion,
    p: Agent,
    q: Agent,
    alive: bool,
    st_eq: bool,
    mirror: usize,
    extensions: Vec<(Assertion, usize)>,
    moves: Vec<Move>,
    reason: Option<Reason>,
}

/// Rename free canonical atoms (introduced when matching bound outputs) to
/// deterministic plain names, so triples round-trip through printing.
fn decanonize(values: &mut [&mut dyn DecanonTarget]) {
    let mut canon_atoms: BTreeSet<Name> = BTreeSet::new();
    let mut used: BTreeSet<String> = BTreeSet::new();
    for v in values.iter() {
        for n in v.names() {
            if n.is_canonical() {
                canon_atoms.insert(n);
            } else {
                used.insert(n.hint());
            }
        }
    }
    let mut counter = 0usize;
    for atom in canon_atoms {
        let mut cand = format!("e{counter}");
        counter += 1;
        while used.contains(&cand) {
            cand.push('\'');
        }
        used.insert(cand.clone());
        let fresh = Name::intern(&cand);
        for v in values.iter_mut() {
            v.rename(atom, fresh);
        }
    }
}

trait DecanonTarget {
    fn names(&self) -> BTreeSet<Name>;
    fn rename(&mut self, from: Name, to: Name);
}

impl DecanonTarget for Agent {
    fn names(&self) -> BTreeSet<Name> {
        self.support()
    }
    fn rename(&mut self, from: Name, to: Name) {
        *self = self.swap(from, to);
    }
}

impl DecanonTarget for Action {
    fn names(&self) -> BTreeSet<Name> {
        self.support()
    }
    fn rename(&mut self, from: Name, to: Name) {
        *self = self.swap(from, to);
    }
}

/// Match a p-transition against a q-transition: equal actions up to
/// alpha-renaming of extruded names, yielding the successor pair with the
/// extruded names consistently decanonized.
fn match_transitions(tp: &Transition, tq: &Transition) -> Option<(Action, Agent, Agent)> {
    let (ap, gp) = canon_action_target(&tp.action, &tp.target);
    let (aq, gq) = canon_action_target(&tq.action, &tq.target);
    if ap != aq {
        return None;
    }
    let mut action = ap;
    let mut p2 = gp;
    let mut q2 = gq;
    decanonize(&mut [&mut action, &mut p2, &mut q2]);
    Some((action, p2, q2))
}

/// The p-transition alone, decanonized (used when q has no response).
fn lone_transition(tp: &Transition) -> (Action, Agent) {
    let (mut action, mut p2) = canon_action_target(&tp.action, &tp.target);
    decanonize(&mut [&mut action, &mut p2]);
    (action, p2)
}

struct Checker<'a> {
    sem: &'a Semantics,
    cfg: &'a BisimConfig,
    triples: Vec<TripleData>,
    index: HashMap<TripleKey, usize>,
    env_reps: HashMap<Vec<bool>, Assertion>,
}

impl<'a> Checker<'a> {
    fn new(sem: &'a Semantics, cfg: &'a BisimConfig) -> Self {
        Checker {
            sem,
            cfg,
            triples: Vec::new(),
            index: HashMap::new(),
            env_reps: HashMap::new(),
        }
    }

    fn inst(&self) -> &dyn Instance {
        self.sem.instance().as_ref()
    }

    fn env_sig(&self, env: &Assertion) -> Vec<bool> {
        let frame = Frame::from_assertion(env.clone());
        self.cfg
            .condition_basis
            .iter()
            .map(|c| crate::instance::frame_entails(self.inst(), &frame, c))
            .collect()
    }

    /// Representative of an environment modulo static equivalence over the
    /// condition basis; keeps the extension closure finite.
    fn env_rep(&mut self, env: Assertion) -> Assertion {
        let sig = self.env_sig(&env);
        self.env_reps.entry(sig).or_insert(env).clone()
    }

    fn static_equivalent(&self, env: &Assertion, p: &Agent, q: &Agent) -> bool {
        let fp = Frame::from_assertion(env.clone()).compose(&frame_of(p));
        let fq = Frame::from_assertion(env.clone()).compose(&frame_of(q));
        static_equiv(self.inst(), &fp, &fq, &self.cfg.condition_basis)
    }

    fn discover(&mut self, env: Assertion, p: Agent, q: Agent) -> Result<usize, EquivError> {
        let key = (env.clone(), p.canonical(), q.canonical());
        if let Some(&i) = self.index.get(&key) {
            return Ok(i);
        }
        if self.triples.len() >= self.cfg.max_states {
            return Err(EquivError::StateBudgetExceeded(self.cfg.max_states));
        }
        let i = self.triples.len();
        self.index.insert(key, i);
        let st_eq = self.static_equivalent(&env, &p, &q);
        self.triples.push(TripleData {
            env: env.clone(),
            p: p.clone(),
            q: q.clone(),
            alive: true,
            st_eq,
            mirror: usize::MAX,
            extensions: Vec::new(),
            moves: Vec::new(),
            reason: None,
        });
        if !st_eq {
            // dead on arrival; no need to expand its obligations
            return Ok(i);
        }

        let mirror = self.discover(env.clone(), q.clone(), p.clone())?;
        self.triples[i].mirror = mirror;

        let mut extensions = Vec::new();
        for psi in self.cfg.assertion_basis.clone() {
            let extended = self.env_rep(self.inst().compose(&env, &psi));
            if extended == env {
                continue;
            }
            let child = self.discover(extended, p.clone(), q.clone())?;
            extensions.push((psi, child));
        }
        self.triples[i].extensions = extensions;

        let tp = self
            .sem
            .transitions_collapsed(self.cfg.layer, &env, &p)?;
        let tq = self
            .sem
            .transitions_collapsed(self.cfg.layer, &env, &q)?;
        let mut moves = Vec::new();
        for t in tp.iter() {
            let mut candidates = Vec::new();
            let mut seen = HashSet::new();
            for u in tq.iter() {
                if let Some((_, p2, q2)) = match_transitions(t, u) {
                    let child = self.discover(env.clone(), p2, q2.clone())?;
                    if seen.insert((child, q2.canonical())) {
                        candidates.push((child, q2));
                    }
                }
            }
            let (action, p_target) = lone_transition(t);
            moves.push(Move {
                action,
                p_target,
                candidates,
            });
        }
        self.triples[i].moves = moves;
        Ok(i)
    }

    /// Greatest fixpoint: repeatedly remove triples violating a clause.
    fn refine(&mut self) {
        let n = self.triples.len();
        let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            if self.triples[i].mirror != usize::MAX {
                dependents[self.triples[i].mirror].push(i);
            }
            for (_, c) in &self.triples[i].extensions {
                dependents[*c].push(i);
            }
            for m in &self.triples[i].moves {
                for (c, _) in &m.candidates {
                    dependents[*c].push(i);
                }
            }
        }

        let mut worklist: Vec<usize> = Vec::new();
        for i in 0..n {
            if let Some(reason) = self.violation(i) {
                self.triples[i].alive = false;
                self.triples[i].reason = Some(reason);
                worklist.push(i);
            }
        }
        while let Some(dead) = worklist.pop() {
            for &d in dependents[dead].clone().iter() {
                if !self.triples[d].alive {
                    continue;
                }
                if let Some(reason) = self.violation(d) {
                    self.triples[d].alive = false;
                    self.triples[d].reason = Some(reason);
                    worklist.push(d);
                }
            }
        }
    }

    fn violation(&self, i: usize) -> Option<Reason> {
        let t = &self.triples[i];
        if !t.st_eq {
            return Some(Reason::StaticEquiv);
        }
        if t.mirror != usize::MAX && !self.triples[t.mirror].alive {
            return Some(Reason::Mirror(t.mirror));
        }
        for (psi, c) in &t.extensions {
            if !self.triples[*c].alive {
                return Some(Reason::Extension(psi.clone(), *c));
            }
        }
        for m in &t.moves {
            if !m
                .candidates
                .iter()
                .any(|(c, _)| self.triples[*c].alive)
            {
                return Some(Reason::Move {
                    action: m.action.clone(),
                    p_target: m.p_target.clone(),
                    candidates: m.candidates.clone(),
                });
            }
        }
        None
    }

    fn attack(&self, i: usize, depth: usize) -> AttackNode {
        let t = &self.triples[i];
        let mut node = AttackNode {
            env: t.env.to_string(),
            p: t.p.to_string(),
            q: t.q.to_string(),
            clause: String::new(),
            action: None,
            p_target: None,
            extension: None,
            responses: Vec::new(),
        };
        if depth == 0 {
            node.clause = "depth-limit".into();
            return node;
        }
        match t.reason.as_ref() {
            None => node.clause = "alive".into(),
            Some(Reason::StaticEquiv) => node.clause = "static-equivalence".into(),
            Some(Reason::Mirror(m)) => {
                node.clause = "symmetry".into();
                node.responses.push(self.attack(*m, depth - 1));
            }
            Some(Reason::Extension(psi, c)) => {
                node.clause = "extension".into();
                node.extension = Some(psi.to_string());
                node.responses.push(self.attack(*c, depth - 1));
            }
            Some(Reason::Move {
                action,
                p_target,
                candidates,
            }) => {
                node.clause = "simulation".into();
                node.action = Some(action.to_string());
                node.p_target = Some(p_target.to_string());
                for (c, _) in candidates {
                    node.responses.push(self.attack(*c, depth - 1));
                }
            }
        }
        node
    }
}

/// Environment-indexed strong bisimilarity check, relative to the config's
/// bases.
pub fn bisim(
    sem: &Semantics,
    env: &Assertion,
    p: &Agent,
    q: &Agent,
    cfg: &BisimConfig,
) -> Result<BisimResult, EquivError> {
    let mut checker = Checker::new(sem, cfg);
    let env = checker.env_rep(env.clone());
    let root = checker.discover(env, p.clone(), q.clone())?;
    checker.refine();
    if checker.triples[root].alive {
        let triples = checker
            .triples
            .iter()
            .filter(|t| t.alive)
            .map(|t| (t.env.clone(), t.p.clone(), t.q.clone()))
            .collect();
        Ok(BisimResult {
            related: true,
            witness: Witness::Related(triples),
        })
    } else {
        Ok(BisimResult {
            related: false,
            witness: Witness::Attack(checker.attack(root, 64)),
        })
    }
}

/// Independent re-check of a returned relation: every triple must satisfy
/// all four clauses against freshly computed transition sets.
pub fn verify_relation(
    sem: &Semantics,
    cfg: &BisimConfig,
    triples: &[(Assertion, Agent, Agent)],
) -> Result<(), String> {
    let inst = sem.instance().as_ref();
    let keys: HashSet<TripleKey> = triples
        .iter()
        .map(|(e, p, q)| (e.clone(), p.canonical(), q.canonical()))
        .collect();
    let env_by_sig: HashMap<Vec<bool>, Assertion> = triples
        .iter()
        .map(|(e, _, _)| {
            let frame = Frame::from_assertion(e.clone());
            let sig: Vec<bool> = cfg
                .condition_basis
                .iter()
                .map(|c| crate::instance::frame_entails(inst, &frame, c))
                .collect();
            (sig, e.clone())
        })
        .collect();
    let rep = |e: &Assertion| -> Result<Assertion, String> {
        let frame = Frame::from_assertion(e.clone());
        let sig: Vec<bool> = cfg
            .condition_basis
            .iter()
            .map(|c| crate::instance::frame_entails(inst, &frame, c))
            .collect();
        env_by_sig
            .get(&sig)
            .cloned()
            .ok_or_else(|| format!("no representative for environment {e}"))
    };

    for (e, p, q) in triples {
        // clause 1
        let fp = Frame::from_assertion(e.clone()).compose(&frame_of(p));
        let fq = Frame::from_assertion(e.clone()).compose(&frame_of(q));
        if !static_equiv(inst, &fp, &fq, &cfg.condition_basis) {
            return Err(format!("static equivalence fails at ({e}, {p}, {q})"));
        }
        // clause 2
        if !keys.contains(&(e.clone(), q.canonical(), p.canonical())) {
            return Err(format!("relation is not symmetric at ({e}, {p}, {q})"));
        }
        // clause 3
        for psi in &cfg.assertion_basis {
            let ext = rep(&inst.compose(e, psi))?;
            if !keys.contains(&(ext.clone(), p.canonical(), q.canonical())) {
                return Err(format!(
                    "extension by {psi} leaves the relation at ({e}, {p}, {q})"
                ));
            }
        }
        // clause 4
        let tp = sem
            .transitions_collapsed(cfg.layer, e, p)
            .map_err(|err| err.to_string())?;
        let tq = sem
            .transitions_collapsed(cfg.layer, e, q)
            .map_err(|err| err.to_string())?;
        for t in tp.iter() {
            let matched = tq.iter().any(|u| {
                match_transitions(t, u).is_some_and(|(_, p2, q2)| {
                    keys.contains(&(e.clone(), p2.canonical(), q2.canonical()))
                })
            });
            if !matched {
                return Err(format!(
                    "move {} of {p} unmatched by {q} under {e}",
                    t.action
                ));
            }
        }
    }
    Ok(())
}

fn apply_substitution(
    agent: &Agent,
    seq: &[(Vec<Name>, Vec<Term>)],
) -> Result<Agent, String> {
    let mut out = agent.clone();
    for (xs, ts) in seq {
        out = out.substitute(xs, ts).map_err(|e| e.to_string())?;
    }
    Ok(out)
}

/// Strong congruence: bisimilarity under every substitution sequence (up to
/// length 2 over the configured universe) and every basis environment.
pub fn congruent(
    sem: &Semantics,
    p: &Agent,
    q: &Agent,
    cfg: &BisimConfig,
) -> Result<BisimResult, EquivError> {
    let mut sequences: Vec<Vec<(Vec<Name>, Vec<Term>)>> = vec![Vec::new()];
    for s in &cfg.subst_universe {
        sequences.push(vec![s.clone()]);
        for s2 in &cfg.subst_universe {
            sequences.push(vec![s.clone(), s2.clone()]);
        }
    }
    let mut envs = cfg.assertion_basis.clone();
    let unit = sem.instance().unit();
    if !envs.contains(&unit) {
        envs.insert(0, unit);
    }
    let mut first_related: Option<BisimResult> = None;
    for seq in &sequences {
        let ps = apply_substitution(p, seq).expect("substitution arity checked");
        let qs = apply_substitution(q, seq).expect("substitution arity checked");
        for env in &envs {
            let res = bisim(sem, env, &ps, &qs, cfg)?;
            if !res.related {
                return Ok(res);
            }
            if first_related.is_none() {
                first_related = Some(res);
            }
        }
    }
    Ok(first_related.expect("at least one environment checked"))
}

/// Outcome of checking one algebraic law on sampled agents.
#[derive(Debug, Clone)]
pub struct LawResult {
    pub law: String,
    pub samples: usize,
    pub refutations: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct MutantResult {
    pub name: String,
    pub refuted: bool,
}

#[derive(Debug, Clone)]
pub struct Theorem1Report {
    pub laws: Vec<LawResult>,
    pub mutants: Vec<MutantResult>,
}

impl Theorem1Report {
    pub fn passed(&self) -> bool {
        self.laws.iter().all(|l| l.refutations.is_empty())
            && self.mutants.iter().all(|m| m.refuted)
    }
}

impl std::fmt::Display for Theorem1Report {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for l in &self.laws {
            writeln!(
                f,
                "law {:<24} samples={:<5} refutations={}",
                l.law,
                l.samples,
                l.refutations.len()
            )?;
            for r in &l.refutations {
                writeln!(f, "    {r}")?;
            }
        }
        for m in &self.mutants {
            writeln!(
                f,
                "mutant {:<21} {}",
                m.name,
                if m.refuted { "refuted" } else { "NOT refuted" }
            )?;
        }
        Ok(())
    }
}

struct LawDraw<'a> {
    agents: &'a [Agent],
    subjects: Vec<Term>,
    objects: Vec<Term>,
    conditions: Vec<Condition>,
    rng_state: u64,
}

impl<'a> LawDraw<'a> {
    fn next(&mut self) -> u64 {
        // xorshift suffices for picking indices deterministically
        let mut x = self.rng_state;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.rng_state = x;
        x
    }

    fn pick<'b, T>(&mut self, items: &'b [T]) -> &'b T {
        let i = (self.next() % items.len() as u64) as usize;
        &items[i]
    }

    fn agent(&mut self) -> Agent {
        let i = (self.next() % self.agents.len() as u64) as usize;
        self.agents[i].clone()
    }

    fn subject(&mut self) -> Term {
        let i = (self.next() % self.subjects.len() as u64) as usize;
        self.subjects[i].clone()
    }

    fn object(&mut self) -> Term {
        let i = (self.next() % self.objects.len() as u64) as usize;
        self.objects[i].clone()
    }

    fn condition(&mut self) -> Condition {
        let i = (self.next() % self.conditions.len() as u64) as usize;
        self.conditions[i].clone()
    }

    /// A name fresh for all the given values, taken from the object
    /// universe when possible.
    fn fresh_for(&mut self, avoid: &BTreeSet<Name>) -> Name {
        for t in &self.objects {
            if let Term::Name(n) = t {
                if !avoid.contains(n) {
                    return *n;
                }
            }
        }
        crate::nominal::fresh_name(avoid, "a")
    }

    /// Prefer a name the agent actually uses, otherwise any universe name.
    fn name_of(&mut self, agent: &Agent) -> Name {
        let supp: Vec<Name> = agent.support().into_iter().collect();
        if !supp.is_empty() && self.next() % 2 == 0 {
            *self.pick(&supp)
        } else {
            self.object().head_name()
        }
    }

    fn prefix(&mut self, cont: Agent) -> Agent {
        if self.next() % 2 == 0 {
            Agent::output(self.subject(), self.object(), cont)
        } else {
            let u = Name::intern("u");
            Agent::input(self.subject(), vec![u], Term::Name(u), cont)
        }
    }
}

/// Check the ten congruence laws on sampled agents, plus seeded mutants
/// that must be refuted.
pub fn check_theorem1(
    sem: &Semantics,
    agents: &[Agent],
    cfg: &BisimConfig,
    samples_per_law: usize,
    seed: u64,
) -> Result<Theorem1Report, EquivError> {
    assert!(!agents.is_empty(), "no sampled agents supplied");
    let inst = sem.instance();
    let mut draw = LawDraw {
        agents,
        subjects: inst.enum_subjects(),
        objects: inst.enum_objects(),
        conditions: cfg.condition_basis.clone(),
        rng_state: seed | 1,
    };

    type Builder<'x> = Box<dyn FnMut(&mut LawDraw<'x>) -> (Agent, Agent)>;
    let laws: Vec<(&str, Builder)> = vec![
        ("par-unit", Box::new(|d: &mut LawDraw| {
            let p = d.agent();
            (p.clone(), Agent::par(p, Agent::Nil))
        })),
        ("par-assoc", Box::new(|d: &mut LawDraw| {
            let (p, q, r) = (d.agent(), d.agent(), d.agent());
            (
                Agent::par(p.clone(), Agent::par(q.clone(), r.clone())),
                Agent::par(Agent::par(p, q), r),
            )
        })),
        ("par-comm", Box::new(|d: &mut LawDraw| {
            let (p, q) = (d.agent(), d.agent());
            (Agent::par(p.clone(), q.clone()), Agent::par(q, p))
        })),
        ("restrict-nil", Box::new(|d: &mut LawDraw| {
            let a = d.object().head_name();
            (Agent::restrict(a, Agent::Nil), Agent::Nil)
        })),
        ("restrict-swap", Box::new(|d: &mut LawDraw| {
            let p = d.agent();
            let a = d.name_of(&p);
            let b = d.name_of(&p);
            (
                Agent::restrict(a, Agent::restrict(b, p.clone())),
                Agent::restrict(b, Agent::restrict(a, p)),
            )
        })),
        ("repl-unfold", Box::new(|d: &mut LawDraw| {
            let cont = d.agent();
            let body = d.prefix(cont);
            let bang = Agent::Repl(Box::new(body.clone()));
            (bang.clone(), Agent::par(body, bang))
        })),
        ("scope-par", Box::new(|d: &mut LawDraw| {
            let p = d.agent();
            let q = d.agent();
            let mut avoid = p.support();
            avoid.extend(d.subjects.iter().flat_map(|t| t.support()));
            let a = {
                // prefer a name of q not free in p
                let cand: Vec<Name> = q
                    .support()
                    .difference(&p.support())
                    .copied()
                    .collect();
                if cand.is_empty() {
                    d.fresh_for(&avoid)
                } else {
                    *d.pick(&cand)
                }
            };
            (
                Agent::par(p.clone(), Agent::restrict(a, q.clone())),
                Agent::restrict(a, Agent::par(p, q)),
            )
        })),
        ("scope-out", Box::new(|d: &mut LawDraw| {
            let p = d.agent();
            let (m, n) = (d.subject(), d.object());
            let mut avoid = m.support();
            avoid.extend(n.support());
            let a = {
                let cand: Vec<Name> =
                    p.support().difference(&avoid).copied().collect();
                if cand.is_empty() {
                    d.fresh_for(&avoid)
                } else {
                    *d.pick(&cand)
                }
            };
            (
                Agent::output(m.clone(), n.clone(), Agent::restrict(a, p.clone())),
                Agent::restrict(a, Agent::output(m, n, p)),
            )
        })),
        ("scope-in", Box::new(|d: &mut LawDraw| {
            let p = d.agent();
            let m = d.subject();
            let u = Name::intern("u");
            let mut avoid = m.support();
            avoid.insert(u);
            let a = {
                let cand: Vec<Name> =
                    p.support().difference(&avoid).copied().collect();
                if cand.is_empty() {
                    d.fresh_for(&avoid)
                } else {
                    *d.pick(&cand)
                }
            };
            (
                Agent::input(
                    m.clone(),
                    vec![u],
                    Term::Name(u),
                    Agent::restrict(a, p.clone()),
                ),
                Agent::restrict(a, Agent::input(m, vec![u], Term::Name(u), p)),
            )
        })),
        ("scope-case", Box::new(|d: &mut LawDraw| {
            let (c1, c2) = (d.condition(), d.condition());
            let cont1 = d.agent();
            let b1 = d.prefix(cont1);
            let cont2 = d.agent();
            let b2 = d.prefix(cont2);
            let mut avoid = c1.support();
            avoid.extend(c2.support());
            let a = {
                let mut inner = b1.support();
                inner.extend(b2.support());
                let cand: Vec<Name> = inner.difference(&avoid).copied().collect();
                if cand.is_empty() {
                    d.fresh_for(&avoid)
                } else {
                    *d.pick(&cand)
                }
            };
            (
                Agent::Case {
                    branches: vec![
                        (c1.clone(), Agent::restrict(a, b1.clone())),
                        (c2.clone(), Agent::restrict(a, b2.clone())),
                    ],
                },
                Agent::restrict(
                    a,
                    Agent::Case {
                        branches: vec![(c1, b1), (c2, b2)],
                    },
                ),
            )
        })),
    ];

    let mut law_results = Vec::new();
    for (name, mut builder) in laws {
        let mut refutations = Vec::new();
        for _ in 0..samples_per_law {
            let (lhs, rhs) = builder(&mut draw);
            debug_assert!(lhs.well_formed().is_empty(), "law sample ill-formed: {lhs}");
            let res = congruent(sem, &lhs, &rhs, cfg)?;
            if !res.related {
                refutations.push(format!("{lhs}  vs  {rhs}"));
                if refutations.len() >= 3 {
                    break;
                }
            }
        }
        law_results.push(LawResult {
            law: name.to_string(),
            samples: samples_per_law,
            refutations,
        });
    }

    // seeded mutants: deliberately false laws the checker must refute
    let mut mutants = Vec::new();
    {
        let s0 = draw.subjects[0].clone();
        let s1 = draw
            .subjects
            .iter()
            .find(|s| {
                !inst.entails(&inst.unit(), &inst.chan_eq(s, &s0))
            })
            .cloned()
            .unwrap_or_else(|| s0.clone());
        let o = draw.objects[0].clone();
        let alpha = Agent::output(s0.clone(), o.clone(), Agent::Nil);
        let beta = Agent::output(s1.clone(), o.clone(), Agent::Nil);
        // swapped prefixes
        let lhs = Agent::output(
            s0.clone(),
            o.clone(),
            Agent::output(s1.clone(), o.clone(), Agent::Nil),
        );
        let rhs = Agent::output(
            s1.clone(),
            o.clone(),
            Agent::output(s0.clone(), o.clone(), Agent::Nil),
        );
        let res = congruent(sem, &lhs, &rhs, cfg)?;
        mutants.push(MutantResult {
            name: "swapped-prefixes".into(),
            refuted: !res.related,
        });

        // scope extension without the freshness side condition
        let a = s0.head_name();
        let u = Name::intern("u");
        let q = Agent::input(s0.clone(), vec![u], Term::Name(u), Agent::Nil);
        let lhs = Agent::par(alpha.clone(), Agent::restrict(a, q.clone()));
        let rhs = Agent::restrict(a, Agent::par(alpha.clone(), q));
        let res = congruent(sem, &lhs, &rhs, cfg)?;
        mutants.push(MutantResult {
            name: "unfresh-scope-extension".into(),
            refuted: !res.related,
        });

        // an unsatisfiable guard is not transparent
        if let Some(phi) = cfg.condition_basis.iter().find(|c| {
            cfg.assertion_basis
                .iter()
                .chain(std::iter::once(&inst.unit()))
                .all(|psi| !inst.entails(psi, c))
        }) {
            let lhs = Agent::Case {
                branches: vec![(phi.clone(), beta.clone())],
            };
            let res = congruent(sem, &lhs, &beta, cfg)?;
            mutants.push(MutantResult {
                name: "unsatisfied-guard".into(),
                refuted: !res.related,
            });
        }
    }

    Ok(Theorem1Report {
        laws: law_results,
        mutants,
    })
}

/// Serialisable witness file for the `bisim`/`congruent`/`replay` commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessFile {
    pub instance: String,
    pub layer: String,
    pub related: bool,
    pub env: String,
    pub p: String,
    pub q: String,
    pub condition_basis: Vec<String>,
    pub assertion_basis: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub triples: Vec<[String; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackNode>,
}

pub fn witness_file(
    inst_name: &str,
    layer: Layer,
    env: &Assertion,
    p: &Agent,
    q: &Agent,
    cfg: &BisimConfig,
    result: &BisimResult,
) -> WitnessFile {
    let (triples, attack) = match &result.witness {
        Witness::Related(ts) => (
            ts.iter()
                .map(|(e, a, b)| [e.to_string(), a.to_string(), b.to_string()])
                .collect(),
            None,
        ),
        Witness::Attack(node) => (Vec::new(), Some(node.clone())),
    };
    WitnessFile {
        instance: inst_name.to_string(),
        layer: layer.to_string(),
        related: result.related,
        env: env.to_string(),
        p: p.to_string(),
        q: q.to_string(),
        condition_basis: cfg.condition_basis.iter().map(|c| c.to_string()).collect(),
        assertion_basis: cfg.assertion_basis.iter().map(|a| a.to_string()).collect(),
        triples,
        attack,
    }
}

/// Re-validate a witness file against freshly computed transition sets.
pub fn replay_witness(
    sem: &Semantics,
    cfg: &BisimConfig,
    file: &WitnessFile,
) -> Result<(), String> {
    let inst = sem.instance().as_ref();
    if file.related {
        let mut triples = Vec::new();
        for [e, p, q] in &file.triples {
            let env = inst.parse_assertion(e)?;
            let p = crate::parser::parse_agent(p, inst).map_err(|e| e.to_string())?;
            let q = crate::parser::parse_agent(q, inst).map_err(|e| e.to_string())?;
            triples.push((env, p, q));
        }
        if triples.is_empty() {
            return Err("related witness carries no relation".into());
        }
        verify_relation(sem, cfg, &triples)
    } else {
        let attack = file
            .attack
            .as_ref()
            .ok_or("refutation witness carries no attack")?;
        replay_attack(sem, cfg, attack)
    }
}

fn replay_attack(
    sem: &Semantics,
    cfg: &BisimConfig,
    node: &AttackNode,
) -> Result<(), String> {
    let inst = sem.instance().as_ref();
    let env = inst.parse_assertion(&node.env)?;
    let p = crate::parser::parse_agent(&node.p, inst).map_err(|e| e.to_string())?;
    let q = crate::parser::parse_agent(&node.q, inst).map_err(|e| e.to_string())?;
    match node.clause.as_str() {
        "static-equivalence" => {
            let fp = Frame::from_assertion(env.clone()).compose(&frame_of(&p));
            let fq = Frame::from_assertion(env.clone()).compose(&frame_of(&q));
            if static_equiv(inst, &fp, &fq, &cfg.condition_basis) {
                return Err(format!(
                    "claimed static-equivalence failure does not replay at ({}, {}, {})",
                    node.env, node.p, node.q
                ));
            }
            Ok(())
        }
        "symmetry" | "extension" => {
            let child = node
                .responses
                .first()
                .ok_or("clause node without its child")?;
            replay_attack(sem, cfg, child)
        }
        "simulation" => {
            let action = node.action.as_ref().ok_or("simulation node lacks action")?;
            let tp = sem
                .transitions_collapsed(cfg.layer, &env, &p)
                .map_err(|e| e.to_string())?;
            let tq = sem
                .transitions_collapsed(cfg.layer, &env, &q)
                .map_err(|e| e.to_string())?;
            let t = tp
                .iter()
                .find(|t| lone_transition(t).0.to_string() == *action)
                .ok_or_else(|| format!("claimed move {action} does not replay"))?;
            // every response of q must be covered by a failing child
            for u in tq.iter() {
                if let Some((_, p2, q2)) = match_transitions(t, u) {
                    let covered = node.responses.iter().any(|child| {
                        child.p == p2.to_string() && child.q == q2.to_string()
                    });
                    if !covered {
                        return Err(format!(
                            "response to {action} reaching ({p2}, {q2}) is not covered"
                        ));
                    }
                }
            }
            for child in &node.responses {
                if child.clause == "depth-limit" {
                    continue;
                }
                replay_attack(sem, cfg, child)?;
            }
            Ok(())
        }
        "depth-limit" => Ok(()),
        other => Err(format!("unknown attack clause {other:?}")),
    }
}
