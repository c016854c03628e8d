//! Workbench for psi-calculi with dynamic channel priorities.
//!
//! The crate provides nominal agent syntax over pluggable calculus
//! instances, the plain / priority-ignoring / priority-respecting
//! transition relations, the priority-erasing translation into a plain
//! psi-calculus, bisimulation and congruence checking, and a harness that
//! verifies operational correspondence of the translation on enumerated
//! agents.

pub mod agent;
pub mod data;
pub mod encoding;
pub mod equivalence;
pub mod fimm;
pub mod instance;
pub mod instances;
pub mod nominal;
pub mod parser;
pub mod semantics;

pub use agent::{frame_of, normal_form, struct_congr, Action, Agent, Diagnostic, Frame};
pub use data::{Assertion, Condition, GuardingElement, Prefix, Subst, Term};
pub use fimm::{ExtInt, Fimm};
pub use instance::{
    check_requisites, frame_entails, prio_of_frame, static_equiv, Instance, PriorityLevel,
};
pub use nominal::{fresh_name, Name, Nominal};
