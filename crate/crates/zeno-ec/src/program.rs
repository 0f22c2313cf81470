//! Merged, validated program with derived effect-candidate facts.
//!
//! Responsibilities:
//! - hold all clauses (from every input file, in order) plus queries;
//! - validate effect-rule heads against `fluent(...)` / `event(...)`
//!   declarations (skipped per kind when a program declares none);
//! - auto-generate `can_initiates` / `can_terminates` / `can_releases` /
//!   `can_trajectory` facts from effect-rule heads, unless the user supplies
//!   their own matching `can_*` clauses (which take over candidate gating,
//!   e.g. for incremental narratives);
//! - index clauses by head functor/arity for resolution.

use crate::syntax::{display_rule, display_term, unifiable, Rule, Term, VarId};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationErrors(pub Vec<String>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "validation failed:")?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

/// The four effect predicates and their candidate (`can_*`) counterparts.
pub const EFFECT_PREDS: &[(&str, usize)] = &[
    ("initiates", 3),
    ("terminates", 3),
    ("releases", 3),
    ("trajectory", 4),
];

#[derive(Debug, Clone)]
pub struct ModelProgram {
    rules: Vec<Rule>,
    pub queries: Vec<crate::syntax::Query>,
    index: BTreeMap<(String, usize), Vec<usize>>,
    fluent_decls: Vec<Term>,
    event_decls: Vec<Term>,
    incr_events: Vec<Term>,
}

fn decl_args(rule: &Rule, name: &str) -> Option<Term> {
    if !rule.body.is_empty() {
        return None;
    }
    match &rule.head {
        Term::App(f, args) if f == name && args.len() == 1 => Some(args[0].clone()),
        _ => None,
    }
}

/// Rename a term's variables to 0..n in order of first appearance, carrying
/// the original names along. Used to deduplicate generated facts.
fn alpha_normalize(t: &Term, names: &[String]) -> (Term, Vec<String>) {
    let mut order = Vec::new();
    t.vars_into(&mut order);
    let map: BTreeMap<VarId, VarId> = order
        .iter()
        .enumerate()
        .map(|(i, v)| (*v, i as VarId))
        .collect();
    let new_names = order
        .iter()
        .map(|v| {
            names
                .get(*v as usize)
                .cloned()
                .unwrap_or_else(|| format!("V{v}"))
        })
        .collect();
    (t.map_vars(&|v| map[&v]), new_names)
}

impl ModelProgram {
    pub fn new(
        rules: Vec<Rule>,
        queries: Vec<crate::syntax::Query>,
        generate_can: bool,
    ) -> Result<Self, ValidationErrors> {
        let mut prog = ModelProgram {
            rules,
            queries,
            index: BTreeMap::new(),
            fluent_decls: Vec::new(),
            event_decls: Vec::new(),
            incr_events: Vec::new(),
        };
        for r in &prog.rules {
            if let Some(t) = decl_args(r, "fluent") {
                prog.fluent_decls.push(t);
            } else if let Some(t) = decl_args(r, "event") {
                prog.event_decls.push(t);
            } else if let Some(t) = decl_args(r, "incr_event") {
                prog.incr_events.push(t);
            }
        }
        prog.validate()?;
        if generate_can {
            prog.generate_can_facts();
        }
        prog.rebuild_index();
        Ok(prog)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn incr_events(&self) -> &[Term] {
        &self.incr_events
    }

    pub fn fluent_decls(&self) -> &[Term] {
        &self.fluent_decls
    }

    /// Does `t` unify with a declared fluent pattern? With no fluent
    /// declarations in the program, nothing counts as declared.
    pub fn is_declared_fluent(&self, t: &Term) -> bool {
        self.fluent_decls.iter().any(|d| unifiable(t, d))
    }

    /// Does `t` unify with a declared event pattern?
    pub fn is_declared_event(&self, t: &Term) -> bool {
        self.event_decls.iter().any(|d| unifiable(t, d))
    }

    pub fn clauses_for(&self, functor: &str, arity: usize) -> impl Iterator<Item = &Rule> {
        self.index
            .get(&(functor.to_string(), arity))
            .into_iter()
            .flatten()
            .map(|i| &self.rules[*i])
    }

    /// Append a ground fact (used by the incremental driver to insert
    /// `incr_happens` occurrences).
    pub fn push_fact(&mut self, head: Term) {
        let key = match head.functor() {
            Some((f, n)) => (f.to_string(), n),
            None => return,
        };
        self.rules.push(Rule {
            head,
            body: Vec::new(),
            var_names: Vec::new(),
        });
        self.index.entry(key).or_default().push(self.rules.len() - 1);
    }

    fn rebuild_index(&mut self) {
        self.index.clear();
        for (i, r) in self.rules.iter().enumerate() {
            if let Some((f, n)) = r.head.functor() {
                self.index
                    .entry((f.to_string(), n))
                    .or_default()
                    .push(i);
            }
        }
    }

    fn validate(&self) -> Result<(), ValidationErrors> {
        let check_fluents = !self.fluent_decls.is_empty();
        let check_events = !self.event_decls.is_empty();
        let mut errors = Vec::new();
        let mut check = |decls: &[Term], t: &Term, what: &str, rule: &Rule| {
            if matches!(t, Term::Var(_)) {
                return; // a bare variable matches any declaration
            }
            if !decls.iter().any(|d| unifiable(t, d)) {
                errors.push(format!(
                    "undeclared {what} term '{}' in '{}'",
                    display_term(t, &|v| rule
                        .var_names
                        .get(v as usize)
                        .cloned()
                        .unwrap_or_else(|| format!("_G{v}"))),
                    display_rule(rule).replace('\n', " ")
                ));
            }
        };
        for rule in &self.rules {
            let (f, args) = match &rule.head {
                Term::App(f, args) => (f.as_str(), args),
                _ => continue,
            };
            let base = f.strip_prefix("can_").unwrap_or(f);
            match (base, args.len()) {
                ("initiallyP", 1) | ("initiallyN", 1) => {
                    if check_fluents {
                        check(&self.fluent_decls, &args[0], "fluent", rule);
                    }
                }
                ("initiates", 3) | ("terminates", 3) | ("releases", 3) => {
                    if check_events {
                        check(&self.event_decls, &args[0], "event", rule);
                    }
                    if check_fluents {
                        check(&self.fluent_decls, &args[1], "fluent", rule);
                    }
                }
                ("trajectory", 4) => {
                    if check_fluents {
                        check(&self.fluent_decls, &args[0], "fluent", rule);
                        check(&self.fluent_decls, &args[2], "fluent", rule);
                    }
                }
                ("happens", 2) | ("incr_happens", 2) => {
                    if check_events {
                        check(&self.event_decls, &args[0], "event", rule);
                    }
                }
                ("incr_event", 1) => {
                    if check_events {
                        check(&self.event_decls, &args[0], "event", rule);
                    }
                }
                _ => {}
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ValidationErrors(errors))
        }
    }

    fn generate_can_facts(&mut self) {
        // user-supplied can_* heads suppress matching auto-generation
        let user_can: Vec<Term> = self
            .rules
            .iter()
            .filter_map(|r| match &r.head {
                Term::App(f, _) if f.starts_with("can_") => Some(r.head.clone()),
                _ => None,
            })
            .collect();
        let mut seen: BTreeSet<Term> = BTreeSet::new();
        let mut generated: Vec<Rule> = Vec::new();
        for rule in &self.rules {
            let (f, args) = match &rule.head {
                Term::App(f, args) => (f.as_str(), args),
                _ => continue,
            };
            if !EFFECT_PREDS.iter().any(|(p, n)| *p == f && args.len() == *n) {
                continue;
            }
            let can_head = Term::App(format!("can_{f}"), args.clone());
            let (normal, names) = alpha_normalize(&can_head, &rule.var_names);
            if !seen.insert(normal.clone()) {
                continue;
            }
            if user_can.iter().any(|u| unifiable(u, &normal)) {
                continue;
            }
            generated.push(Rule {
                head: normal,
                body: Vec::new(),
                var_names: names,
            });
        }
        self.rules.extend(generated);
    }

    /// Every `happens/2` fact or rule head, for diagnostics.
    pub fn has_clauses(&self, functor: &str, arity: usize) -> bool {
        self.index.contains_key(&(functor.to_string(), arity))
    }

    /// Collect the bodies of the program as literals (for tests).
    pub fn all_rules_display(&self) -> String {
        self.rules
            .iter()
            .map(display_rule)
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Count generated `can_*` facts in a program (test helper).
pub fn count_can_facts(p: &ModelProgram) -> usize {
    p.rules()
        .iter()
        .filter(|r| {
            r.body.is_empty()
                && matches!(&r.head, Term::App(f, _) if f.starts_with("can_"))
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    fn build(src: &str) -> Result<ModelProgram, ValidationErrors> {
        let (rules, queries) = parse_program(src).expect("parse");
        ModelProgram::new(rules, queries, true)
    }

    #[test]
    fn generates_can_facts_from_effect_heads() {
        let p = build(
            "fluent(light). event(turn_on). event(turn_off).\n\
             initiallyP(light).\n\
             initiates(turn_on, light, T).\n\
             terminates(turn_off, light, T).\n\
             happens(turn_off, 10).",
        )
        .unwrap();
        assert_eq!(count_can_facts(&p), 2);
        let text = p.all_rules_display();
        assert!(text.contains("can_initiates(turn_on, light, T)"), "{text}");
        assert!(text.contains("can_terminates(turn_off, light, T)"), "{text}");
    }

    #[test]
    fn deduplicates_alpha_variant_heads() {
        let p = build(
            "fluent(balance(X)). event(withdraw(X)).\n\
             terminates(withdraw(A), balance(B), T) :- holdsAt(balance(B), T), B .>=. A.\n\
             terminates(withdraw(Amt), balance(Bal), T) :- holdsAt(balance(Bal), T), Bal .<. Amt.",
        )
        .unwrap();
        assert_eq!(count_can_facts(&p), 1);
    }

    #[test]
    fn trajectory_generates_four_arg_candidate() {
        let p = build(
            "fluent(filling). fluent(water_level(X)). event(open_valve).\n\
             initiates(open_valve, filling, T).\n\
             trajectory(filling, T1, water_level(X2), T2) :- \
               holdsAt(water_level(X), T1), X2 .=. X + T2 - T1.",
        )
        .unwrap();
        let text = p.all_rules_display();
        assert!(
            text.contains("can_trajectory(filling, T1, water_level(X2), T2)"),
            "{text}"
        );
    }

    #[test]
    fn user_can_rules_suppress_generation() {
        let p = build(
            "fluent(light). event(turn_on). event(turn_off). incr_event(turn_off).\n\
             initiates(turn_on, light, T).\n\
             terminates(turn_off, light, T).\n\
             can_terminates(turn_off, light, T) :- incr_happens(turn_off, T).",
        )
        .unwrap();
        // only can_initiates is generated; can_terminates is user-defined
        assert_eq!(count_can_facts(&p), 1);
        let text = p.all_rules_display();
        assert!(text.contains("can_initiates(turn_on, light, T)"), "{text}");
        assert_eq!(text.matches("can_terminates").count(), 1, "{text}");
    }

    #[test]
    fn validation_rejects_undeclared_terms() {
        let err = build(
            "fluent(light). event(turn_on).\n\
             initiates(turn_on, light, T).\n\
             terminates(turn_off, light, T).",
        )
        .unwrap_err();
        assert!(err.0[0].contains("undeclared event term 'turn_off'"), "{err}");

        let err = build(
            "fluent(light). event(turn_on).\n\
             initiallyP(lighth).",
        )
        .unwrap_err();
        assert!(err.0[0].contains("undeclared fluent term 'lighth'"), "{err}");
    }

    #[test]
    fn validation_skipped_without_declarations() {
        let p = build(
            "initiallyP(light).\n\
             terminates(turn_off, light, T).\n\
             happens(turn_off, 10).",
        )
        .unwrap();
        assert_eq!(count_can_facts(&p), 1);
        assert!(!p.is_declared_fluent(&Term::atom("light")));
    }

    #[test]
    fn valued_fluent_patterns_unify_with_decls() {
        let p = build(
            "fluent(balance(X)). event(deposit(X)).\n\
             initiallyP(balance(10000)).\n\
             initiates(deposit(A), balance(NewB), T) :- \
               holdsAt(balance(B), T), NewB .=. B + A.",
        )
        .unwrap();
        assert!(p.is_declared_fluent(&Term::app("balance", vec![Term::Var(0)])));
        assert!(p.is_declared_fluent(&Term::app("balance", vec![Term::num(crate::rational::rat(5))])));
        assert!(!p.is_declared_fluent(&Term::atom("light")));
    }

    #[test]
    fn clause_index_finds_by_functor_arity() {
        let p = build(
            "initiallyP(light).\n\
             happens(a, 1). happens(b, 2).\n\
             terminates(a, light, T).",
        )
        .unwrap();
        assert_eq!(p.clauses_for("happens", 2).count(), 2);
        assert_eq!(p.clauses_for("initiallyP", 1).count(), 1);
        assert_eq!(p.clauses_for("nothing", 3).count(), 0);
        assert!(p.has_clauses("can_terminates", 3));
    }

    #[test]
    fn push_fact_updates_index() {
        let mut p = build("initiallyP(light).").unwrap();
        p.push_fact(Term::app(
            "incr_happens",
            vec![Term::atom("e"), Term::num(crate::rational::rat(5))],
        ));
        assert_eq!(p.clauses_for("incr_happens", 2).count(), 1);
    }
}
