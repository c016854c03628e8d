//! The three transition relations: plain transitions, the priority-ignoring
//! layer (tau actions annotated with priority levels), and the
//! priority-respecting layer whose Case/Par/Com rules carry side conditions
//! requiring that no higher-priority tau is available.
//!
//! Labels are enumerated against an "observable universe": the instance's
//! term universe plus all output objects occurring in the agents under
//! test. Communication is exact: input derivatives for a concrete object
//! are produced through the instance's pattern matcher.

use std::collections::BTreeSet;
use std::sync::Arc;

use dashmap::DashMap;
use serde::Serialize;

use crate::agent::{frame_of, unfold_closure, Action, Agent, Frame};
use crate::data::{Assertion, Subst, Term};
use crate::instance::{frame_entails, prio_of_frame, Instance, PrioError};
use crate::nominal::{fresh_name, CanonState, Name, Nominal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    Plain,
    Neg,
    Prio,
}

impl std::fmt::Display for Layer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Layer::Plain => write!(f, "plain"),
            Layer::Neg => write!(f, "neg"),
            Layer::Prio => write!(f, "prio"),
        }
    }
}

impl std::str::FromStr for Layer {
    type Err = String;
    fn from_str(s: &str) -> Result<Layer, String> {
        match s {
            "plain" => Ok(Layer::Plain),
            "neg" => Ok(Layer::Neg),
            "prio" => Ok(Layer::Prio),
            other => Err(format!("unknown layer {other:?} (plain|neg|prio)")),
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum SemanticsError {
    #[error(transparent)]
    Prio(#[from] PrioError),
}

/// `env |> source --action--> target`. The extruded names of the action bind
/// into the object and the target.
#[derive(Debug, Clone)]
pub struct Transition {
    pub env: Assertion,
    pub source: Agent,
    pub action: Action,
    pub target: Agent,
}

/// Canonical representative of a transition's (action, target) pair, used
/// for deduplication up to alpha-equivalence.
pub fn canon_action_target(action: &Action, target: &Agent) -> (Action, Agent) {
    let mut st = CanonState::new();
    match action {
        Action::Out {
            subj,
            extruded,
            obj,
        } => {
            let subj = subj.canon_into(&mut st);
            let extruded: Vec<Name> = extruded.iter().map(|b| st.bind(*b)).collect();
            let obj = obj.canon_into(&mut st);
            let target = target.canon_into(&mut st);
            (
                Action::Out {
                    subj,
                    extruded,
                    obj,
                },
                target,
            )
        }
        Action::In { subj, obj } => (
            Action::In {
                subj: subj.canon_into(&mut st),
                obj: obj.canon_into(&mut st),
            },
            target.canon_into(&mut st),
        ),
        Action::Tau { prio } => (Action::Tau { prio: *prio }, target.canon_into(&mut st)),
    }
}

#[derive(Debug, Clone, Default)]
pub struct TransitionSet {
    pub items: Vec<Transition>,
}

impl TransitionSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn taus(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter().filter(|t| t.action.is_tau())
    }
}

/// Line-delimited export record for a transition.
#[derive(Debug, Clone, Serialize)]
pub struct TransitionRecord {
    pub env: String,
    pub source: String,
    pub action: ActionRecord,
    pub target: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ActionRecord {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub extruded: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub priority: Option<u32>,
}

impl From<&Transition> for TransitionRecord {
    fn from(t: &Transition) -> TransitionRecord {
        let action = match &t.action {
            Action::Out {
                subj,
                extruded,
                obj,
            } => ActionRecord {
                kind: "out".into(),
                subject: Some(subj.to_string()),
                extruded: extruded.iter().map(|n| n.to_string()).collect(),
                object: Some(obj.to_string()),
                priority: None,
            },
            Action::In { subj, obj } => ActionRecord {
                kind: "in".into(),
                subject: Some(subj.to_string()),
                extruded: Vec::new(),
                object: Some(obj.to_string()),
                priority: None,
            },
            Action::Tau { prio } => ActionRecord {
                kind: "tau".into(),
                subject: None,
                extruded: Vec::new(),
                object: None,
                priority: *prio,
            },
        };
        TransitionRecord {
            env: t.env.to_string(),
            source: t.source.to_string(),
            action,
            target: t.target.to_string(),
        }
    }
}

type StepResult = Result<Arc<Vec<(Action, Agent)>>, SemanticsError>;
type InResult = Result<Arc<Vec<(Term, Agent)>>, SemanticsError>;

/// Derivation engine for one instance and one label universe. All memo
/// tables key on alpha-canonical forms and are safe for concurrent use.
pub struct Semantics {
    inst: Arc<dyn Instance>,
    universe: Vec<Term>,
    universe_names: BTreeSet<Name>,
    repl_budget: u32,
    congr_budget: u32,
    step_memo: DashMap<(Layer, u32, Assertion, Agent), Arc<Vec<(Action, Agent)>>>,
    in_memo: DashMap<(Layer, u32, Assertion, Agent, Term), Arc<Vec<(Term, Agent)>>>,
    tau_memo: DashMap<(Assertion, Agent), Option<u32>>,
    closure_memo: DashMap<Agent, Arc<BTreeSet<Agent>>>,
}

impl Semantics {
    pub fn new(inst: Arc<dyn Instance>) -> Semantics {
        let universe = inst.term_universe();
        Semantics::with_universe(inst, universe)
    }

    /// Engine whose label universe also covers the output objects of the
    /// given root agents.
    pub fn for_agents<'b>(
        inst: Arc<dyn Instance>,
        agents: impl IntoIterator<Item = &'b Agent>,
    ) -> Semantics {
        let mut universe = inst.term_universe();
        for agent in agents {
            let mut objs = Vec::new();
            agent.output_objects(&mut objs);
            universe.extend(objs);
        }
        Semantics::with_universe(inst, universe)
    }

    pub fn with_universe(inst: Arc<dyn Instance>, mut universe: Vec<Term>) -> Semantics {
        universe.sort();
        universe.dedup();
        let universe_names = universe.iter().flat_map(|t| t.support()).collect();
        Semantics {
            inst,
            universe,
            universe_names,
            repl_budget: 2,
            congr_budget: 2,
            step_memo: DashMap::new(),
            in_memo: DashMap::new(),
            tau_memo: DashMap::new(),
            closure_memo: DashMap::new(),
        }
    }

    pub fn instance(&self) -> &Arc<dyn Instance> {
        &self.inst
    }

    pub fn universe(&self) -> &[Term] {
        &self.universe
    }

    /// All transitions of `agent` in `env` at the given layer, deduplicated
    /// up to alpha-equivalence of (action, target) and sorted canonically.
    pub fn transitions(
        &self,
        layer: Layer,
        env: &Assertion,
        agent: &Agent,
    ) -> Result<TransitionSet, SemanticsError> {
        let steps = self.step(layer, env, agent, self.repl_budget)?;
        let mut items: Vec<Transition> = steps
            .iter()
            .map(|(action, target)| Transition {
                env: env.clone(),
                source: agent.clone(),
                action: action.clone(),
                target: target.clone(),
            })
            .collect();
        items.sort_by_cached_key(|t| {
            let (a, g) = canon_action_target(&t.action, &t.target);
            (format!("{a}"), format!("{g}"))
        });
        Ok(TransitionSet { items })
    }

    /// As `transitions`, additionally collapsing transitions with the same
    /// label whose targets are structurally congruent (absorbing the
    /// redundant replication unfoldings the Rep rule generates).
    pub fn transitions_collapsed(
        &self,
        layer: Layer,
        env: &Assertion,
        agent: &Agent,
    ) -> Result<TransitionSet, SemanticsError> {
        let all = self.transitions(layer, env, agent)?;
        let mut kept: Vec<(Action, Arc<BTreeSet<Agent>>, Transition)> = Vec::new();
        for t in all.items {
            let (ca, _) = canon_action_target(&t.action, &t.target);
            let closure = self.equiv_closure(&t.target);
            let dup = kept.iter().any(|(a, cl, _)| {
                *a == ca && !cl.is_disjoint(&closure)
            });
            if !dup {
                kept.push((ca, closure, t));
            }
        }
        Ok(TransitionSet {
            items: kept.into_iter().map(|(_, _, t)| t).collect(),
        })
    }

    /// Cached normal-form closure under bounded replication unfolding; two
    /// agents are structurally congruent iff their closures intersect.
    pub fn equiv_closure(&self, agent: &Agent) -> Arc<BTreeSet<Agent>> {
        let key = agent.canonical();
        if let Some(c) = self.closure_memo.get(&key) {
            return c.clone();
        }
        let closure = Arc::new(unfold_closure(agent, self.congr_budget));
        self.closure_memo.insert(key, closure.clone());
        closure
    }

    pub fn congruent_agents(&self, a: &Agent, b: &Agent) -> bool {
        !self
            .equiv_closure(a)
            .is_disjoint(self.equiv_closure(b).as_ref())
    }

    /// Deterministic maximal run: at each state take the canonically first
    /// transition (restricted to tau when `tau_only`).
    pub fn trace(
        &self,
        layer: Layer,
        env: &Assertion,
        agent: &Agent,
        max_steps: usize,
        tau_only: bool,
    ) -> Result<Vec<Transition>, SemanticsError> {
        let mut out = Vec::new();
        let mut state = agent.clone();
        for _ in 0..max_steps {
            let ts = self.transitions_collapsed(layer, env, &state)?;
            let next = ts.items.into_iter().find(|t| !tau_only || t.action.is_tau());
            match next {
                None => break,
                Some(t) => {
                    state = t.target.clone();
                    out.push(t);
                }
            }
        }
        Ok(out)
    }

    fn compose(&self, a: &Assertion, b: &Assertion) -> Assertion {
        self.inst.compose(a, b)
    }

    /// Frame assertion with every binder renamed to a brand-new atom.
    fn open_frame(&self, frame: &Frame) -> Assertion {
        frame.opened()
    }

    /// Candidate label subjects channel-equivalent to the prefix subject.
    fn subject_candidates(
        &self,
        env: &Assertion,
        prefix_subj: &Term,
        label_on_left: bool,
    ) -> Vec<Term> {
        let mut cands = Vec::new();
        let mut push = |k: &Term| {
            if !cands.contains(k) {
                cands.push(k.clone());
            }
        };
        let consider = |k: &Term| -> bool {
            let cond = if label_on_left {
                self.inst.chan_eq(k, prefix_subj)
            } else {
                self.inst.chan_eq(prefix_subj, k)
            };
            self.inst.entails(env, &cond)
        };
        if consider(prefix_subj) {
            push(prefix_subj);
        }
        for k in &self.universe {
            if k != prefix_subj && consider(k) {
                push(k);
            }
        }
        cands
    }

    fn object_tuples(&self, arity: usize) -> Vec<Vec<Term>> {
        let mut out = vec![Vec::new()];
        for _ in 0..arity {
            let mut next = Vec::new();
            for partial in &out {
                for t in &self.universe {
                    let mut v = partial.clone();
                    v.push(t.clone());
                    next.push(v);
                }
            }
            out = next;
        }
        out
    }

    /// Minimum priority among the tau actions of the priority-ignoring
    /// layer, memoised per (env, agent).
    fn min_neg_tau(&self, env: &Assertion, agent: &Agent) -> Result<Option<u32>, SemanticsError> {
        let key = (env.clone(), agent.canonical());
        if let Some(v) = self.tau_memo.get(&key) {
            return Ok(*v);
        }
        let steps = self.step(Layer::Neg, env, agent, self.repl_budget)?;
        let min = steps
            .iter()
            .filter_map(|(a, _)| match a {
                Action::Tau { prio } => *prio,
                _ => None,
            })
            .min();
        self.tau_memo.insert(key, min);
        Ok(min)
    }

    /// No tau of strictly higher priority than the action is available.
    fn prio_ok(
        &self,
        action: &Action,
        env: &Assertion,
        agent: &Agent,
    ) -> Result<bool, SemanticsError> {
        let prioof = match action {
            Action::Tau { prio: Some(p) } => *p,
            Action::Tau { prio: None } => {
                unreachable!("priority side condition on an unannotated tau")
            }
            visible => {
                let frame =
                    Frame::from_assertion(env.clone()).compose(&frame_of(agent));
                prio_of_frame(
                    self.inst.as_ref(),
                    &frame,
                    visible.subject().expect("visible action has a subject"),
                )?
            }
        };
        if prioof == 0 {
            return Ok(true);
        }
        Ok(match self.min_neg_tau(env, agent)? {
            Some(n) => n >= prioof,
            None => true,
        })
    }

    /// Public form of the priority side condition.
    pub fn priook(
        &self,
        action: &Action,
        env: &Assertion,
        agent: &Agent,
    ) -> Result<bool, SemanticsError> {
        self.prio_ok(action, env, agent)
    }

    /// The unique priority level of `term` under a plain assertion.
    fn prio_of_assertion(&self, psi: &Assertion, term: &Term) -> Result<u32, SemanticsError> {
        Ok(prio_of_frame(
            self.inst.as_ref(),
            &Frame::from_assertion(psi.clone()),
            term,
        )?)
    }

    fn step(
        &self,
        layer: Layer,
        env: &Assertion,
        agent: &Agent,
        budget: u32,
    ) -> StepResult {
        let key = (layer, budget, env.clone(), agent.canonical());
        if let Some(v) = self.step_memo.get(&key) {
            return Ok(v.clone());
        }
        let mut out: Vec<(Action, Agent)> = Vec::new();
        let mut seen: BTreeSet<(Action, Agent)> = BTreeSet::new();
        let mut push = |act: Action, tgt: Agent, out: &mut Vec<(Action, Agent)>| {
            if seen.insert(canon_action_target(&act, &tgt)) {
                out.push((act, tgt));
            }
        };

        match agent {
            Agent::Nil | Agent::Assert(_) => {}

            Agent::Output { subj, obj, cont } => {
                for k in self.subject_candidates(env, subj, false) {
                    push(
                        Action::Out {
                            subj: k,
                            extruded: Vec::new(),
                            obj: obj.clone(),
                        },
                        (**cont).clone(),
                        &mut out,
                    );
                }
            }

            Agent::Input {
                subj,
                binders,
                pattern,
                cont,
            } => {
                let subjects = self.subject_candidates(env, subj, true);
                if !subjects.is_empty() {
                    for ltilde in self.object_tuples(binders.len()) {
                        let sub = Subst::new(binders, &ltilde)
                            .expect("well-formed binders are duplicate-free");
                        let obj = pattern.subst(&sub);
                        let tgt = cont.subst(&sub);
                        for k in &subjects {
                            push(
                                Action::In {
                                    subj: k.clone(),
                                    obj: obj.clone(),
                                },
                                tgt.clone(),
                                &mut out,
                            );
                        }
                    }
                }
            }

            Agent::Case { branches } => {
                for (cond, body) in branches {
                    if !self.inst.entails(env, cond) {
                        continue;
                    }
                    for (act, tgt) in self.step(layer, env, body, budget)?.iter() {
                        if layer == Layer::Prio && !self.prio_ok(act, env, agent)? {
                            continue;
                        }
                        push(act.clone(), tgt.clone(), &mut out);
                    }
                }
            }

            Agent::Restrict { name, body } => {
                let (b, body) = self.open_restrict(env, name, body, None);
                for (act, tgt) in self.step(layer, env, &body, budget)?.iter() {
                    if !act.support().contains(&b) {
                        push(act.clone(), Agent::restrict(b, tgt.clone()), &mut out);
                        continue;
                    }
                    if let Action::Out {
                        subj,
                        extruded,
                        obj,
                    } = act
                    {
                        let in_subj = subj.support().contains(&b);
                        let in_ext = extruded.contains(&b);
                        if !in_subj && !in_ext && obj.support().contains(&b) {
                            let mut extruded = extruded.clone();
                            extruded.push(b);
                            push(
                                Action::Out {
                                    subj: subj.clone(),
                                    extruded,
                                    obj: obj.clone(),
                                },
                                tgt.clone(),
                                &mut out,
                            );
                        }
                    }
                    // otherwise the restricted name blocks the action
                }
            }

            Agent::Par(left, right) => {
                self.par_step(layer, env, agent, left, right, budget, &mut out, &mut seen)?;
            }

            Agent::Repl(body) => {
                if budget > 0 {
                    let unfolded = Agent::par((**body).clone(), agent.clone());
                    for (act, tgt) in
                        self.step(layer, env, &unfolded, budget - 1)?.iter()
                    {
                        push(act.clone(), tgt.clone(), &mut out);
                    }
                }
            }
        }

        let result = Arc::new(out);
        self.step_memo.insert(key, result.clone());
        Ok(result)
    }

    /// Alpha-rename a restriction binder away from the environment, the
    /// label universe, and (for input derivation) the requested object.
    fn open_restrict(
        &self,
        env: &Assertion,
        name: &Name,
        body: &Agent,
        extra: Option<&Term>,
    ) -> (Name, Agent) {
        let mut avoid = env.support();
        avoid.extend(self.universe_names.iter().copied());
        if let Some(t) = extra {
            t.free_names(&mut avoid);
        }
        if avoid.contains(name) {
            let mut all = avoid.clone();
            all.extend(body.support());
            let b2 = fresh_name(&all, &name.hint());
            (b2, body.swap(*name, b2))
        } else {
            (*name, body.clone())
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn par_step(
        &self,
        layer: Layer,
        env: &Assertion,
        whole: &Agent,
        left: &Agent,
        right: &Agent,
        budget: u32,
        out: &mut Vec<(Action, Agent)>,
        seen: &mut BTreeSet<(Action, Agent)>,
    ) -> Result<(), SemanticsError> {
        let mut push = |act: Action, tgt: Agent, out: &mut Vec<(Action, Agent)>| {
            if seen.insert(canon_action_target(&act, &tgt)) {
                out.push((act, tgt));
            }
        };

        let psi_l = self.open_frame(&frame_of(left));
        let psi_r = self.open_frame(&frame_of(right));
        let env_left = self.compose(&psi_r, env);
        let env_right = self.compose(&psi_l, env);
        let env_total = self.compose(env, &self.compose(&psi_l, &psi_r));

        // component moves (Par rule, both sides)
        for (this, other, other_is_right) in
            [(left, right, true), (right, left, false)]
        {
            let sub_env = if other_is_right { &env_left } else { &env_right };
            for (act, tgt) in self.step(layer, sub_env, this, budget)?.iter() {
                let (act, tgt) = self.freshen_bn(act, tgt, other, env);
                if layer == Layer::Prio && !self.prio_ok(&act, env, whole)? {
                    continue;
                }
                let par = if other_is_right {
                    Agent::par(tgt, other.clone())
                } else {
                    Agent::par(other.clone(), tgt)
                };
                push(act, par, out);
            }
        }

        // communication (Com rule, both orientations)
        for (src_out, src_in, out_is_left) in
            [(left, right, true), (right, left, false)]
        {
            let env_out = if out_is_left { &env_left } else { &env_right };
            let env_in = if out_is_left { &env_right } else { &env_left };
            for (act, p_tgt) in self.step(layer, env_out, src_out, budget)?.iter() {
                if !matches!(act, Action::Out { .. }) {
                    continue;
                }
                // extruded names must be fresh for the input side
                let (act, p_tgt) = self.freshen_bn(act, p_tgt, src_in, env);
                let Action::Out {
                    subj: m,
                    extruded,
                    obj,
                } = &act
                else {
                    unreachable!()
                };
                for (k, q_tgt) in self
                    .inputs_for(layer, env_in, src_in, obj, budget)?
                    .iter()
                {
                    if !self.inst.entails(&env_total, &self.inst.chan_eq(m, k)) {
                        continue;
                    }
                    let prio = match layer {
                        Layer::Plain => None,
                        _ => Some(self.prio_of_assertion(&env_total, m)?),
                    };
                    let tau = Action::Tau { prio };
                    if layer == Layer::Prio && !self.prio_ok(&tau, env, whole)? {
                        continue;
                    }
                    let inner = if out_is_left {
                        Agent::par(p_tgt.clone(), q_tgt.clone())
                    } else {
                        Agent::par(q_tgt.clone(), p_tgt.clone())
                    };
                    let tgt = extruded
                        .iter()
                        .rev()
                        .fold(inner, |acc, a| Agent::restrict(*a, acc));
                    push(tau, tgt, out);
                }
            }
        }
        Ok(())
    }

    /// Rename the extruded names of an action away from a sibling agent and
    /// the environment (the `bn(alpha) # Q` side conditions).
    fn freshen_bn(
        &self,
        action: &Action,
        target: &Agent,
        sibling: &Agent,
        env: &Assertion,
    ) -> (Action, Agent) {
        let Action::Out {
            subj,
            extruded,
            obj,
        } = action
        else {
            return (action.clone(), target.clone());
        };
        if extruded.is_empty() {
            return (action.clone(), target.clone());
        }
        let mut forbidden = sibling.support();
        forbidden.extend(env.support());
        if extruded.iter().all(|b| !forbidden.contains(b)) {
            return (action.clone(), target.clone());
        }
        let mut avoid = forbidden;
        avoid.extend(obj.support());
        avoid.extend(target.support());
        avoid.extend(subj.support());
        let mut obj = obj.clone();
        let mut target = target.clone();
        let mut extruded = extruded.clone();
        for b in extruded.iter_mut() {
            if avoid.contains(b) {
                let b2 = fresh_name(&avoid, &b.hint());
                obj = obj.swap(*b, b2);
                target = target.swap(*b, b2);
                *b = b2;
                avoid.insert(b2);
            }
        }
        (
            Action::Out {
                subj: subj.clone(),
                extruded,
                obj,
            },
            target,
        )
    }

    /// Input transitions of `agent` receiving exactly `obj`, reported as
    /// (label subject, derivative) pairs. Mirrors `step` for the input
    /// fragment; the instance matcher decides pattern instantiation.
    fn inputs_for(
        &self,
        layer: Layer,
        env: &Assertion,
        agent: &Agent,
        obj: &Term,
        budget: u32,
    ) -> InResult {
        let key = (
            layer,
            budget,
            env.clone(),
            agent.canonical(),
            obj.clone(),
        );
        if let Some(v) = self.in_memo.get(&key) {
            return Ok(v.clone());
        }
        let mut out: Vec<(Term, Agent)> = Vec::new();
        let mut seen: BTreeSet<(Term, Agent)> = BTreeSet::new();
        let mut push = |k: Term, tgt: Agent, out: &mut Vec<(Term, Agent)>| {
            let canon = (k.clone(), tgt.canonical());
            if seen.insert(canon) {
                out.push((k, tgt));
            }
        };

        match agent {
            Agent::Nil | Agent::Assert(_) | Agent::Output { .. } => {}

            Agent::Input {
                subj,
                binders,
                pattern,
                cont,
            } => {
                for ltilde in self.inst.matches(pattern, binders, obj) {
                    let sub = Subst::new(binders, &ltilde)
                        .expect("well-formed binders are duplicate-free");
                    debug_assert_eq!(&pattern.subst(&sub), obj);
                    let tgt = cont.subst(&sub);
                    for k in self.subject_candidates(env, subj, true) {
                        push(k, tgt.clone(), &mut out);
                    }
                }
            }

            Agent::Case { branches } => {
                for (cond, body) in branches {
                    if !self.inst.entails(env, cond) {
                        continue;
                    }
                    for (k, tgt) in self.inputs_for(layer, env, body, obj, budget)?.iter() {
                        if layer == Layer::Prio {
                            let act = Action::In {
                                subj: k.clone(),
                                obj: obj.clone(),
                            };
                            if !self.prio_ok(&act, env, agent)? {
                                continue;
                            }
                        }
                        push(k.clone(), tgt.clone(), &mut out);
                    }
                }
            }

            Agent::Restrict { name, body } => {
                let (b, body) = self.open_restrict(env, name, body, Some(obj));
                for (k, tgt) in self.inputs_for(layer, env, &body, obj, budget)?.iter() {
                    if k.support().contains(&b) {
                        continue; // restricted subject cannot act
                    }
                    push(k.clone(), Agent::restrict(b, tgt.clone()), &mut out);
                }
            }

            Agent::Par(left, right) => {
                let psi_l = self.open_frame(&frame_of(left));
                let psi_r = self.open_frame(&frame_of(right));
                let env_left = self.compose(&psi_r, env);
                let env_right = self.compose(&psi_l, env);
                for (this, other, this_is_left) in
                    [(left, right, true), (right, left, false)]
                {
                    let sub_env = if this_is_left { &env_left } else { &env_right };
                    for (k, tgt) in
                        self.inputs_for(layer, sub_env, this, obj, budget)?.iter()
                    {
                        if layer == Layer::Prio {
                            let act = Action::In {
                                subj: k.clone(),
                                obj: obj.clone(),
                            };
                            if !self.prio_ok(&act, env, agent)? {
                                continue;
                            }
                        }
                        let par = if this_is_left {
                            Agent::par(tgt.clone(), (**other).clone())
                        } else {
                            Agent::par((**other).clone(), tgt.clone())
                        };
                        push(k.clone(), par, &mut out);
                    }
                }
            }

            Agent::Repl(body) => {
                if budget > 0 {
                    let unfolded = Agent::par((**body).clone(), agent.clone());
                    for (k, tgt) in self
                        .inputs_for(layer, env, &unfolded, obj, budget - 1)?
                        .iter()
                    {
                        push(k.clone(), tgt.clone(), &mut out);
                    }
                }
            }
        }

        let result = Arc::new(out);
        self.in_memo.insert(key, result.clone());
        Ok(result)
    }
}

/// Layer selection helpers mirroring the three public relations.
impl Semantics {
    pub fn transitions_plain(
        &self,
        env: &Assertion,
        agent: &Agent,
    ) -> Result<TransitionSet, SemanticsError> {
        self.transitions(Layer::Plain, env, agent)
    }

    pub fn transitions_neg(
        &self,
        env: &Assertion,
        agent: &Agent,
    ) -> Result<TransitionSet, SemanticsError> {
        self.transitions(Layer::Neg, env, agent)
    }

    pub fn transitions_prio(
        &self,
        env: &Assertion,
        agent: &Agent,
    ) -> Result<TransitionSet, SemanticsError> {
        self.transitions(Layer::Prio, env, agent)
    }
}

/// `F |- cond` re-exported on the engine for convenience.
pub fn frame_entails_in(sem: &Semantics, frame: &Frame, cond: &crate::data::Condition) -> bool {
    frame_entails(sem.instance().as_ref(), frame, cond)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Condition;
    use crate::instances::{
        default_flip_instance, make_flip_instance, make_pi_instance, make_piat_instance,
    };
    use crate::parser::{parse_agent, parse_agent_with};
    use std::collections::HashMap;

    fn n(s: &str) -> Name {
        Name::intern(s)
    }

    fn t(s: &str) -> Term {
        Term::Name(Name::intern(s))
    }

    fn flip_sem() -> Semantics {
        Semantics::new(Arc::new(default_flip_instance()))
    }

    #[test]
    fn nil_has_no_transitions() {
        let sem = Semantics::new(Arc::new(make_pi_instance()));
        let ts = sem
            .transitions_plain(&Assertion::Unit, &Agent::Nil)
            .unwrap();
        assert!(ts.is_empty());
    }

    #[test]
    fn pi_communication() {
        let sem = Semantics::new(Arc::new(make_pi_instance()));
        // out(m,n).0 | in(m,\x,x).0 has exactly one tau, to 0 | 0
        let p = Agent::par(
            Agent::output(t("m"), t("n"), Agent::Nil),
            Agent::input(t("m"), vec![n("x")], t("x"), Agent::Nil),
        );
        let ts = sem.transitions_plain(&Assertion::Unit, &p).unwrap();
        let taus: Vec<_> = ts.taus().collect();
        assert_eq!(taus.len(), 1);
        assert!(taus[0]
            .target
            .alpha_eq(&Agent::par(Agent::Nil, Agent::Nil)));
        // plus the free output and the free inputs over the universe
        assert!(ts.iter().any(|tr| matches!(
            &tr.action,
            Action::Out { subj, .. } if *subj == t("m")
        )));
    }

    #[test]
    fn open_rule_extrudes() {
        let sem = Semantics::new(Arc::new(make_pi_instance()));
        // (new b) out(m, b).0 -- out(m,(new b)b) --> 0
        let p = Agent::restrict(n("b"), Agent::output(t("m"), t("b"), Agent::Nil));
        let ts = sem.transitions_plain(&Assertion::Unit, &p).unwrap();
        assert_eq!(ts.len(), 1);
        match &ts.items[0].action {
            Action::Out {
                subj,
                extruded,
                obj,
            } => {
                assert_eq!(subj, &t("m"));
                assert_eq!(extruded.len(), 1);
                assert_eq!(obj, &Term::Name(extruded[0]));
            }
            other => panic!("expected a bound output, got {other}"),
        }
        assert!(ts.items[0].target.alpha_eq(&Agent::Nil));
    }

    #[test]
    fn restricted_channel_is_blocked() {
        let sem = Semantics::new(Arc::new(make_pi_instance()));
        let p = Agent::restrict(n("c"), Agent::output(t("c"), t("m"), Agent::Nil));
        let ts = sem.transitions_plain(&Assertion::Unit, &p).unwrap();
        assert!(ts.is_empty());
    }

    #[test]
    fn scope_extrusion_communicates_within_scope() {
        let sem = Semantics::new(Arc::new(make_pi_instance()));
        // (new b)(out(m,b).0) | in(m,\x,x).out(x,x).0 : tau re-binds b around both
        let p = Agent::par(
            Agent::restrict(n("b"), Agent::output(t("m"), t("b"), Agent::Nil)),
            Agent::input(
                t("m"),
                vec![n("x")],
                t("x"),
                Agent::output(t("x"), t("x"), Agent::Nil),
            ),
        );
        let ts = sem.transitions_plain(&Assertion::Unit, &p).unwrap();
        let taus: Vec<_> = ts.taus().collect();
        assert_eq!(taus.len(), 1);
        match &taus[0].target {
            Agent::Restrict { name, body } => match &**body {
                Agent::Par(_, r) => match &**r {
                    Agent::Output { subj, .. } => assert_eq!(subj, &Term::Name(*name)),
                    other => panic!("unexpected right component {other}"),
                },
                other => panic!("unexpected body {other}"),
            },
            other => panic!("expected restriction around the derivative, got {other}"),
        }
    }

    #[test]
    fn case_requires_entailed_guard() {
        let flip = Arc::new(default_flip_instance());
        let sem = Semantics::new(flip.clone());
        let branch = Agent::output(t("x"), t("x"), Agent::Nil);
        let agent = Agent::Case {
            branches: vec![(Condition::Eq(t("x"), t("y")), branch.clone())],
        };
        let ts = sem.transitions_plain(&flip.unit(), &agent).unwrap();
        assert!(ts.is_empty());
        let agent = Agent::Case {
            branches: vec![(Condition::Eq(t("x"), t("x")), branch)],
        };
        let ts = sem.transitions_plain(&flip.unit(), &agent).unwrap();
        assert!(!ts.is_empty());
    }

    #[test]
    fn neg_layer_labels_tau_with_priority() {
        let flip = Arc::new(default_flip_instance());
        let sem = Semantics::new(flip.clone());
        let p = parse_agent("out(x).0 | in(x).0", flip.as_ref()).unwrap();
        // x not flipped: priority 0
        let ts = sem.transitions_neg(&flip.unit(), &p).unwrap();
        let taus: Vec<_> = ts.taus().collect();
        assert_eq!(taus.len(), 1);
        assert_eq!(taus[0].action, Action::Tau { prio: Some(0) });
        // x flipped: priority 1
        let env = Assertion::name_set([n("x")]);
        let ts = sem.transitions_neg(&env, &p).unwrap();
        let taus: Vec<_> = ts.taus().collect();
        assert_eq!(taus.len(), 1);
        assert_eq!(taus[0].action, Action::Tau { prio: Some(1) });
    }

    #[test]
    fn piat_tau_priority_from_annotation() {
        let piat = Arc::new(make_piat_instance(9));
        let sem = Semantics::new(piat.clone());
        let a3 = Term::Chan(n("a"), 3);
        let p = Agent::par(
            Agent::output(a3.clone(), t("v"), Agent::Nil),
            Agent::input(a3, vec![n("u")], t("u"), Agent::Nil),
        );
        let ts = sem.transitions_neg(&Assertion::Unit, &p).unwrap();
        let taus: Vec<_> = ts.taus().collect();
        assert_eq!(taus.len(), 1);
        assert_eq!(taus[0].action, Action::Tau { prio: Some(3) });
    }

    #[test]
    fn prio_ok_examples() {
        let flip = Arc::new(default_flip_instance());
        let sem = Semantics::new(flip.clone());
        // tau:0 is never blocked
        let anything = parse_agent("out(x).0 | in(x).0 | out(y).0 | in(y).0", flip.as_ref())
            .unwrap();
        assert!(sem
            .priook(&Action::Tau { prio: Some(0) }, &flip.unit(), &anything)
            .unwrap());
        // with y flipped low, the y communication is pre-empted by the x one
        let env = Assertion::name_set([n("y")]);
        assert!(!sem
            .priook(&Action::Tau { prio: Some(1) }, &env, &anything)
            .unwrap());
        // nothing can pre-empt from Nil
        assert!(sem
            .priook(&Action::Tau { prio: Some(1) }, &env, &Agent::Nil)
            .unwrap());
    }

    #[test]
    fn prio_layer_blocks_low_priority_tau() {
        let flip = Arc::new(default_flip_instance());
        let sem = Semantics::new(flip.clone());
        let p = parse_agent("out(x).0 | in(x).0 | out(y).0 | in(y).0", flip.as_ref())
            .unwrap();
        let env = Assertion::name_set([n("y")]);
        let neg: Vec<Action> = sem
            .transitions_neg(&env, &p)
            .unwrap()
            .taus()
            .map(|t| t.action.clone())
            .collect();
        assert!(neg.contains(&Action::Tau { prio: Some(0) }));
        assert!(neg.contains(&Action::Tau { prio: Some(1) }));
        let prio: Vec<Action> = sem
            .transitions_prio(&env, &p)
            .unwrap()
            .taus()
            .map(|t| t.action.clone())
            .collect();
        assert_eq!(prio, vec![Action::Tau { prio: Some(0) }]);
    }

    fn fairness_setup() -> (Arc<FlipHolder>, Agent, Agent, Agent) {
        let flip = Arc::new(default_flip_instance());
        let mut lets = HashMap::new();
        let py = parse_agent(
            "(|{y}|) | !out(x).(|{x,y}|) | !out(y).(|{x,y}|)",
            flip.as_ref(),
        )
        .unwrap();
        let px = parse_agent(
            "(|{x}|) | !out(x).(|{x,y}|) | !out(y).(|{x,y}|)",
            flip.as_ref(),
        )
        .unwrap();
        lets.insert("Py".to_string(), py.clone());
        lets.insert("Px".to_string(), px.clone());
        let start =
            parse_agent_with("Py | in(x).in(x).in(x).0 | in(y).0", flip.as_ref(), &lets)
                .unwrap();
        (flip, start, px, py)
    }

    type FlipHolder = crate::instances::FlipInstance;

    #[test]
    fn fairness_first_step_is_unique_tau_zero() {
        let (flip, start, px, _py) = fairness_setup();
        let sem = Semantics::new(flip.clone());
        let unit = flip.unit();
        let ts = sem
            .transitions_collapsed(Layer::Prio, &unit, &start)
            .unwrap();
        let taus: Vec<_> = ts.taus().collect();
        assert_eq!(taus.len(), 1, "exactly one tau transition");
        assert_eq!(taus[0].action, Action::Tau { prio: Some(0) });
        // derivative is Px | in(x).in(x).0 | in(y).0 up to structural congruence
        let mut lets = HashMap::new();
        lets.insert("Px".to_string(), px);
        let expected =
            parse_agent_with("Px | in(x).in(x).0 | in(y).0", flip.as_ref(), &lets).unwrap();
        assert!(
            sem.congruent_agents(&taus[0].target, &expected),
            "derivative {} differs from {}",
            taus[0].target,
            expected
        );
    }

    #[test]
    fn fairness_tau_trace_alternates() {
        let (flip, start, px, py) = fairness_setup();
        let sem = Semantics::new(flip.clone());
        let unit = flip.unit();
        let trace = sem.trace(Layer::Prio, &unit, &start, 10, true).unwrap();
        let labels: Vec<Action> = trace.iter().map(|t| t.action.clone()).collect();
        assert_eq!(
            labels,
            vec![
                Action::Tau { prio: Some(0) },
                Action::Tau { prio: Some(0) },
                Action::Tau { prio: Some(0) },
                Action::Tau { prio: Some(1) },
            ]
        );
        // the four displayed derivatives
        let mut lets = HashMap::new();
        lets.insert("Px".to_string(), px);
        lets.insert("Py".to_string(), py);
        let states = [
            "Px | in(x).in(x).0 | in(y).0",
            "Py | in(x).in(x).0",
            "Px | in(x).0",
            "Py",
        ];
        for (step, expect) in trace.iter().zip(states.iter()) {
            let expected = parse_agent_with(expect, flip.as_ref(), &lets).unwrap();
            assert!(
                sem.congruent_agents(&step.target, &expected),
                "derivative {} differs from {}",
                step.target,
                expected
            );
        }
        // each intermediate state has exactly one tau available
        let mut state = start.clone();
        for _ in 0..4 {
            let ts = sem.transitions_prio(&unit, &state).unwrap();
            let collapsed = sem.transitions_collapsed(Layer::Prio, &unit, &state).unwrap();
            let taus: Vec<_> = collapsed.taus().collect();
            assert_eq!(taus.len(), 1);
            let _ = ts;
            state = taus[0].target.clone();
        }
        // terminal: no tau from Py
        let collapsed = sem.transitions_collapsed(Layer::Prio, &unit, &state).unwrap();
        assert_eq!(collapsed.taus().count(), 0);
    }

    #[test]
    fn neg_layer_has_early_y_branch() {
        let (flip, start, _, _) = fairness_setup();
        let sem = Semantics::new(flip.clone());
        let ts = sem.transitions_neg(&flip.unit(), &start).unwrap();
        let prios: BTreeSet<Option<u32>> = ts
            .taus()
            .map(|t| match &t.action {
                Action::Tau { prio } => *prio,
                _ => unreachable!(),
            })
            .collect();
        assert!(prios.contains(&Some(0)) && prios.contains(&Some(1)));
    }

    #[test]
    fn layer_inclusion_on_examples() {
        let flip = Arc::new(make_flip_instance([n("x"), n("y")]));
        let sem = Semantics::new(flip.clone());
        let agents = [
            "out(x).0 | in(x).0 | out(y).0 | in(y).0",
            "out(x).(|{x}|) | in(x).out(y).0",
            "!out(x).0 | in(x).in(x).0",
            "(new a)(out(x,a).0 | in(x,\\u,u).0) | out(y).0",
        ];
        for src in agents {
            let p = parse_agent(src, flip.as_ref()).unwrap();
            for env in flip.assertion_basis() {
                let prio = sem.transitions_prio(&env, &p).unwrap();
                let neg = sem.transitions_neg(&env, &p).unwrap();
                let plain = sem.transitions_plain(&env, &p).unwrap();
                // prio is included in neg with identical labels
                for t in prio.iter() {
                    let key = canon_action_target(&t.action, &t.target);
                    assert!(
                        neg.iter()
                            .any(|u| canon_action_target(&u.action, &u.target) == key),
                        "prio transition {} missing in neg layer of {}",
                        t.action,
                        src
                    );
                }
                // every neg tau:p appears in plain as a bare tau
                for t in neg.taus() {
                    let erased = t.action.erase_priority();
                    let key = canon_action_target(&erased, &t.target);
                    assert!(
                        plain
                            .iter()
                            .any(|u| canon_action_target(&u.action, &u.target) == key),
                        "neg tau {} missing in plain layer of {}",
                        t.action,
                        src
                    );
                }
            }
        }
    }

    #[test]
    fn transitions_are_equivariant() {
        let flip = Arc::new(make_flip_instance([n("x"), n("y")]));
        let sem = Semantics::new(flip.clone());
        let p = parse_agent("out(x).(|{x}|) | in(x).0 | in(y).0", flip.as_ref()).unwrap();
        let (a, b) = (n("x"), n("y"));
        for env in flip.assertion_basis() {
            let direct: BTreeSet<(Action, Agent)> = sem
                .transitions_prio(&env.swap(a, b), &p.swap(a, b))
                .unwrap()
                .iter()
                .map(|t| canon_action_target(&t.action, &t.target))
                .collect();
            let swapped: BTreeSet<(Action, Agent)> = sem
                .transitions_prio(&env, &p)
                .unwrap()
                .iter()
                .map(|t| {
                    canon_action_target(&t.action.swap(a, b), &t.target.swap(a, b))
                })
                .collect();
            assert_eq!(direct, swapped);
        }
    }

    #[test]
    fn replication_transitions_are_finite_and_collapse() {
        let flip = Arc::new(default_flip_instance());
        let sem = Semantics::new(flip.clone());
        let p = parse_agent("!out(x).0", flip.as_ref()).unwrap();
        let ts = sem.transitions_prio(&flip.unit(), &p).unwrap();
        assert!(!ts.is_empty());
        let collapsed = sem
            .transitions_collapsed(Layer::Prio, &flip.unit(), &p)
            .unwrap();
        // modulo structural congruence there is one output per label subject
        assert_eq!(collapsed.len(), 1);
        let tgt = &collapsed.items[0].target;
        let expected = parse_agent("0 | !out(x).0", flip.as_ref()).unwrap();
        assert!(sem.congruent_agents(tgt, &expected));
    }

    #[test]
    fn bound_names_fresh_for_environment_and_source() {
        let pi = Arc::new(make_pi_instance());
        let sem = Semantics::new(pi.clone());
        // the restricted b clashes with the free b on the right; extrusion
        // must rename
        let p = Agent::par(
            Agent::restrict(n("b"), Agent::output(t("m"), t("b"), Agent::Nil)),
            Agent::output(t("b"), t("b"), Agent::Nil),
        );
        let ts = sem.transitions_plain(&Assertion::Unit, &p).unwrap();
        for tr in ts.iter() {
            for bn in tr.action.bn() {
                assert!(!tr.source.support().contains(bn));
                assert!(!tr.env.support().contains(bn));
            }
        }
    }
}
