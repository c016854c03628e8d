//! Parser for the agent grammar.
//!
//! ```text
//! P ::= "0" | "out(" T ["," T] ")." P | "in(" T ["," \binders "," X] ")." P
//!     | "case" phi "->" P { "[]" phi "->" P } | "(new" a ")" P
//!     | P "|" P | "!" P | "(|" A "|)" | "(" P ")" | M "(" x ")." P
//! ```
//!
//! Prefixing binds tighter than parallel composition. Term, condition and
//! assertion literals are delegated to the active instance's sub-parsers.
//! Uppercase identifiers refer to `--let` macro bindings.

use std::collections::HashMap;

use crate::agent::Agent;
use crate::data::Term;
use crate::instance::Instance;
use crate::nominal::Name;

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("parse error at line {line}, column {col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

pub fn parse_agent(text: &str, inst: &dyn Instance) -> Result<Agent, ParseError> {
    parse_agent_with(text, inst, &HashMap::new())
}

pub fn parse_agent_with(
    text: &str,
    inst: &dyn Instance,
    lets: &HashMap<String, Agent>,
) -> Result<Agent, ParseError> {
    let mut p = Parser {
        src: text,
        pos: 0,
        inst,
        lets,
    };
    let agent = p.parse_par()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(agent)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    inst: &'a dyn Instance,
    lets: &'a HashMap<String, Agent>,
}

impl<'a> Parser<'a> {
    fn err(&self, message: impl Into<String>) -> ParseError {
        let upto = &self.src[..self.pos.min(self.src.len())];
        let line = upto.matches('\n').count() + 1;
        let col = upto.chars().rev().take_while(|c| *c != '\n').count() + 1;
        ParseError {
            line,
            col,
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, tok: &str) -> bool {
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<(), ParseError> {
        self.skip_ws();
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.err(format!("expected {tok:?}")))
        }
    }

    fn ident(&mut self) -> Result<&'a str, ParseError> {
        self.skip_ws();
        let rest = self.rest();
        let len = rest
            .char_indices()
            .take_while(|(i, c)| {
                if *i == 0 {
                    c.is_ascii_alphabetic() || *c == '_'
                } else {
                    c.is_ascii_alphanumeric() || *c == '_' || *c == '\''
                }
            })
            .count();
        if len == 0 {
            return Err(self.err("expected an identifier"));
        }
        let s = &rest[..len];
        self.pos += len;
        Ok(s)
    }

    /// Consume a chunk up to (not including) any of the stop tokens at
    /// bracket depth zero. Brackets: () {} [].
    fn chunk_until(&mut self, stops: &[&str]) -> Result<&'a str, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let mut depth = 0usize;
        while self.pos < self.src.len() {
            let rest = self.rest();
            if depth == 0 && stops.iter().any(|s| rest.starts_with(s)) {
                let chunk = &self.src[start..self.pos];
                return Ok(chunk);
            }
            let c = rest.chars().next().unwrap();
            match c {
                '(' | '{' | '[' => depth += 1,
                ')' | '}' | ']' => {
                    if depth == 0 {
                        let chunk = &self.src[start..self.pos];
                        return Ok(chunk);
                    }
                    depth -= 1;
                }
                _ => {}
            }
            self.pos += c.len_utf8();
        }
        Err(self.err(format!("expected one of {stops:?} before end of input")))
    }

    fn parse_term_chunk(&mut self, stops: &[&str]) -> Result<Term, ParseError> {
        let chunk = self.chunk_until(stops)?;
        self.inst.parse_term(chunk).map_err(|m| self.err(m))
    }

    fn parse_par(&mut self) -> Result<Agent, ParseError> {
        let mut parts = vec![self.parse_prefixed()?];
        loop {
            self.skip_ws();
            // "|)" closes an assertion, never separates agents
            if self.rest().starts_with("|") && !self.rest().starts_with("|)") {
                self.pos += 1;
                parts.push(self.parse_prefixed()?);
            } else {
                break;
            }
        }
        let mut it = parts.into_iter().rev();
        let last = it.next().unwrap();
        Ok(it.fold(last, |acc, p| Agent::par(p, acc)))
    }

    fn keyword_boundary(&self, after: usize) -> bool {
        match self.rest()[after..].chars().next() {
            None => true,
            Some(c) => !(c.is_ascii_alphanumeric() || c == '_' || c == '\''),
        }
    }

    fn parse_prefixed(&mut self) -> Result<Agent, ParseError> {
        self.skip_ws();
        let rest = self.rest();

        if rest.starts_with('0') {
            self.pos += 1;
            return Ok(Agent::Nil);
        }
        if rest.starts_with('!') {
            self.pos += 1;
            let body = self.parse_prefixed()?;
            return Ok(Agent::Repl(Box::new(body)));
        }
        if rest.starts_with("out(") {
            self.pos += 4;
            return self.parse_output();
        }
        if rest.starts_with("in(") {
            self.pos += 3;
            return self.parse_input();
        }
        if rest.starts_with("case") && self.keyword_boundary(4) {
            self.pos += 4;
            return self.parse_case();
        }
        if rest.starts_with("(new") && self.keyword_boundary(4) {
            self.pos += 4;
            let name = Name::intern(self.ident()?);
            self.expect(")")?;
            let body = self.parse_prefixed()?;
            return Ok(Agent::restrict(name, body));
        }
        if rest.starts_with("(|") {
            self.pos += 2;
            let chunk = self.assertion_chunk()?;
            let psi = self.inst.parse_assertion(chunk).map_err(|m| self.err(m))?;
            return Ok(Agent::Assert(psi));
        }
        if rest.starts_with('(') {
            self.pos += 1;
            let inner = self.parse_par()?;
            self.expect(")")?;
            return Ok(inner);
        }
        if rest.chars().next().is_some_and(|c| c.is_ascii_uppercase()) {
            let ident = self.ident()?;
            return match self.lets.get(ident) {
                Some(agent) => Ok(agent.clone()),
                None => Err(self.err(format!("unknown agent binding {ident:?}"))),
            };
        }
        // sugar: M(x).P is an input of a single variable pattern
        if rest.chars().next().is_some_and(|c| c.is_ascii_lowercase()) {
            return self.parse_sugar_input();
        }
        Err(self.err("expected an agent"))
    }

    /// Text of an assertion literal, up to the closing `|)`.
    fn assertion_chunk(&mut self) -> Result<&'a str, ParseError> {
        let start = self.pos;
        let mut depth = 0usize;
        while self.pos < self.src.len() {
            let rest = self.rest();
            if depth == 0 && rest.starts_with("|)") {
                let chunk = &self.src[start..self.pos];
                self.pos += 2;
                return Ok(chunk);
            }
            let c = rest.chars().next().unwrap();
            match c {
                '(' | '{' | '[' => depth += 1,
                ')' | '}' | ']' => depth = depth.saturating_sub(1),
                _ => {}
            }
            self.pos += c.len_utf8();
        }
        Err(self.err("unterminated assertion literal, expected \"|)\""))
    }

    fn parse_output(&mut self) -> Result<Agent, ParseError> {
        let subj = self.parse_term_chunk(&[",", ")"])?;
        self.skip_ws();
        let obj = if self.eat(",") {
            self.parse_term_chunk(&[")"])?
        } else {
            // object-omitted sugar: the object is the subject name
            Term::Name(subj.head_name())
        };
        self.expect(")")?;
        self.expect(".")?;
        let cont = self.parse_prefixed()?;
        Ok(Agent::output(subj, obj, cont))
    }

    fn parse_input(&mut self) -> Result<Agent, ParseError> {
        let subj = self.parse_term_chunk(&[",", ")"])?;
        self.skip_ws();
        let (binders, pattern) = if self.eat(",") {
            self.skip_ws();
            if !self.eat("\\") {
                return Err(self.err("expected \\binders in input prefix"));
            }
            let mut binders = Vec::new();
            loop {
                self.skip_ws();
                if self.rest().starts_with(',') {
                    break;
                }
                binders.push(Name::intern(self.ident()?));
            }
            self.expect(",")?;
            let pattern = self.parse_term_chunk(&[")"])?;
            (binders, pattern)
        } else {
            // pattern-omitted sugar: match exactly the subject name
            (Vec::new(), Term::Name(subj.head_name()))
        };
        self.expect(")")?;
        self.expect(".")?;
        let cont = self.parse_prefixed()?;
        Ok(Agent::input(subj, binders, pattern, cont))
    }

    fn parse_sugar_input(&mut self) -> Result<Agent, ParseError> {
        let chunk = self.chunk_until(&["("])?;
        let subj = self.inst.parse_term(chunk).map_err(|m| self.err(m))?;
        self.expect("(")?;
        let binder = Name::intern(self.ident()?);
        self.expect(")")?;
        self.expect(".")?;
        let cont = self.parse_prefixed()?;
        Ok(Agent::input(subj, vec![binder], Term::Name(binder), cont))
    }

    fn parse_case(&mut self) -> Result<Agent, ParseError> {
        let mut branches = Vec::new();
        loop {
            let chunk = self.chunk_until(&["->"])?;
            let cond = self.inst.parse_condition(chunk).map_err(|m| self.err(m))?;
            self.expect("->")?;
            let body = self.parse_prefixed()?;
            branches.push((cond, body));
            self.skip_ws();
            if !self.eat("[]") {
                break;
            }
        }
        Ok(Agent::Case { branches })
    }
}
