//! Abstract syntax for the surface language: terms, linear constraints,
//! rules and queries, plus the pretty-printer used for round-tripping.
//!
//! Variables are numeric ids. Inside a parsed `Rule` or `Query` the ids are
//! local (0..n) and a name table maps them back to source names; the engine
//! renames them to fresh global ids when a clause is used.

use crate::rational::{format_rat, Rat};
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;

pub type VarId = u32;

/// First-order term. An atom is an `App` with no arguments.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(VarId),
    Num(Rat),
    App(String, Vec<Term>),
}

impl Term {
    pub fn atom(name: &str) -> Term {
        Term::App(name.to_string(), Vec::new())
    }

    pub fn app(name: &str, args: Vec<Term>) -> Term {
        Term::App(name.to_string(), args)
    }

    pub fn num(r: Rat) -> Term {
        Term::Num(r)
    }

    pub fn functor(&self) -> Option<(&str, usize)> {
        match self {
            Term::App(f, args) => Some((f.as_str(), args.len())),
            _ => None,
        }
    }

    pub fn as_num(&self) -> Option<&Rat> {
        match self {
            Term::Num(r) => Some(r),
            _ => None,
        }
    }

    /// Collect every variable occurring in the term, in textual order.
    pub fn vars_into(&self, out: &mut Vec<VarId>) {
        match self {
            Term::Var(v) => {
                if !out.contains(v) {
                    out.push(*v);
                }
            }
            Term::Num(_) => {}
            Term::App(_, args) => {
                for a in args {
                    a.vars_into(out);
                }
            }
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Num(_) => true,
            Term::App(_, args) => args.iter().all(Term::is_ground),
        }
    }

    /// Rebuild the term with every variable id mapped through `f`.
    pub fn map_vars(&self, f: &impl Fn(VarId) -> VarId) -> Term {
        match self {
            Term::Var(v) => Term::Var(f(*v)),
            Term::Num(r) => Term::Num(r.clone()),
            Term::App(name, args) => {
                Term::App(name.clone(), args.iter().map(|a| a.map_vars(f)).collect())
            }
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", display_term(self, &|v| format!("_{v}")))
    }
}

/// Relational operator of a constraint literal.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum RelOp {
    Eq,
    Ne,
    Lt,
    Le,
    Ge,
    Gt,
}

impl RelOp {
    pub fn token(self) -> &'static str {
        match self {
            RelOp::Eq => ".=.",
            RelOp::Ne => ".<>.",
            RelOp::Lt => ".<.",
            RelOp::Le => ".=<.",
            RelOp::Ge => ".>=.",
            RelOp::Gt => ".>.",
        }
    }

    /// Plain-text operator used when rendering answers (`T > 10`).
    pub fn answer_token(self) -> &'static str {
        match self {
            RelOp::Eq => "=",
            RelOp::Ne => "<>",
            RelOp::Lt => "<",
            RelOp::Le => "=<",
            RelOp::Ge => ">=",
            RelOp::Gt => ">",
        }
    }

    pub fn flip(self) -> RelOp {
        match self {
            RelOp::Lt => RelOp::Gt,
            RelOp::Le => RelOp::Ge,
            RelOp::Ge => RelOp::Le,
            RelOp::Gt => RelOp::Lt,
            other => other,
        }
    }
}

/// Linear expression: sum of rational-coefficient variables plus a constant.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct LinExpr {
    pub terms: BTreeMap<VarId, Rat>,
    pub constant: Rat,
}

impl LinExpr {
    pub fn constant(c: Rat) -> LinExpr {
        LinExpr {
            terms: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(v: VarId) -> LinExpr {
        let mut terms = BTreeMap::new();
        terms.insert(v, Rat::one());
        LinExpr {
            terms,
            constant: Rat::zero(),
        }
    }

    pub fn is_const(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        for (v, c) in &other.terms {
            let e = out.terms.entry(*v).or_insert_with(Rat::zero);
            *e += c;
            if e.is_zero() {
                out.terms.remove(v);
            }
        }
        out.constant += &other.constant;
        out
    }

    pub fn scale(&self, k: &Rat) -> LinExpr {
        if k.is_zero() {
            return LinExpr::constant(Rat::zero());
        }
        LinExpr {
            terms: self.terms.iter().map(|(v, c)| (*v, c * k)).collect(),
            constant: &self.constant * k,
        }
    }

    pub fn sub(&self, other: &LinExpr) -> LinExpr {
        self.add(&other.scale(&-Rat::one()))
    }

    pub fn vars_into(&self, out: &mut Vec<VarId>) {
        for v in self.terms.keys() {
            if !out.contains(v) {
                out.push(*v);
            }
        }
    }

    pub fn map_vars(&self, f: &impl Fn(VarId) -> VarId) -> LinExpr {
        LinExpr {
            terms: self.terms.iter().map(|(v, c)| (f(*v), c.clone())).collect(),
            constant: self.constant.clone(),
        }
    }
}

/// Constraint literal `lhs op rhs`, both sides already normalized linear.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Constraint {
    pub op: RelOp,
    pub lhs: LinExpr,
    pub rhs: LinExpr,
}

impl Constraint {
    pub fn new(op: RelOp, lhs: LinExpr, rhs: LinExpr) -> Constraint {
        Constraint { op, lhs, rhs }
    }

    /// `lhs - rhs`, the single-expression normal form used by the store.
    pub fn delta(&self) -> LinExpr {
        self.lhs.sub(&self.rhs)
    }

    pub fn vars_into(&self, out: &mut Vec<VarId>) {
        self.lhs.vars_into(out);
        self.rhs.vars_into(out);
    }

    pub fn map_vars(&self, f: &impl Fn(VarId) -> VarId) -> Constraint {
        Constraint {
            op: self.op,
            lhs: self.lhs.map_vars(f),
            rhs: self.rhs.map_vars(f),
        }
    }
}

/// Body literal of a rule or query.
#[derive(Clone, PartialEq, Debug)]
pub enum Literal {
    /// Ordinary predicate application (user predicate or positive builtin).
    Atom(Term),
    /// One of the supported constructive negations (`not_stoppedIn`, ...).
    NegatedBuiltin(Term),
    /// Arithmetic constraint.
    Constraint(Constraint),
}

impl Literal {
    pub fn vars_into(&self, out: &mut Vec<VarId>) {
        match self {
            Literal::Atom(t) | Literal::NegatedBuiltin(t) => t.vars_into(out),
            Literal::Constraint(c) => c.vars_into(out),
        }
    }
}

/// A clause `head :- body.` (facts have an empty body) together with the
/// source names of its local variables.
#[derive(Clone, PartialEq, Debug)]
pub struct Rule {
    pub head: Term,
    pub body: Vec<Literal>,
    pub var_names: Vec<String>,
}

impl Rule {
    pub fn num_vars(&self) -> u32 {
        self.var_names.len() as u32
    }
}

/// Directives recognized inside queries (`!incr_max_time(19.5)`).
#[derive(Clone, PartialEq, Debug)]
pub enum Directive {
    IncrMaxTime(Rat),
}

/// A query `?- body.`; directives are pulled out of the body order.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct Query {
    pub body: Vec<Literal>,
    pub var_names: Vec<String>,
    pub directives: Vec<Directive>,
}

impl Query {
    pub fn incr_max_time(&self) -> Option<&Rat> {
        self.directives.iter().map(|Directive::IncrMaxTime(r)| r).next()
    }
}

/// Negated builtins the engine supports, with their admissible arities.
pub const NEGATED_BUILTINS: &[(&str, &[usize])] = &[
    ("not_stoppedIn", &[3]),
    ("not_startedIn", &[3]),
    ("not_holdsAt", &[2, 3]),
    ("not_happens", &[2]),
];

/// Positive builtins admissible in rule bodies and queries.
pub const POSITIVE_BUILTINS: &[(&str, &[usize])] = &[("holdsAt", &[2, 3, 4]), ("happens", &[2])];

/// Head functors that may never be (re)defined by user clauses.
pub const RESERVED_HEADS: &[&str] = &[
    "holdsAt",
    "stoppedIn",
    "startedIn",
    "not_stoppedIn",
    "not_startedIn",
    "not_holdsAt",
    "not_happens",
];

// ---------------------------------------------------------------------------
// Syntactic unification (no constraint awareness), shared by validation and
// preprocessing. The engine has its own store-routing unifier.
// ---------------------------------------------------------------------------

fn walk_term(t: &Term, s: &BTreeMap<VarId, Term>) -> Term {
    match t {
        Term::Var(v) => match s.get(v) {
            Some(bound) => walk_term(bound, s),
            None => t.clone(),
        },
        _ => t.clone(),
    }
}

/// Plain syntactic unification; numbers unify only when equal. Both sides
/// must use disjoint variable ids if they come from different clauses.
pub fn unify_terms(a: &Term, b: &Term, s: &mut BTreeMap<VarId, Term>) -> bool {
    let a = walk_term(a, s);
    let b = walk_term(b, s);
    match (&a, &b) {
        (Term::Var(x), Term::Var(y)) if x == y => true,
        (Term::Var(x), other) | (other, Term::Var(x)) => {
            s.insert(*x, other.clone());
            true
        }
        (Term::Num(p), Term::Num(q)) => p == q,
        (Term::App(f, fa), Term::App(g, ga)) => {
            f == g && fa.len() == ga.len() && fa.iter().zip(ga).all(|(x, y)| unify_terms(x, y, s))
        }
        _ => false,
    }
}

/// Can the two terms be unified syntactically (using fresh renamings)?
/// `b`'s variables are shifted out of `a`'s way first.
pub fn unifiable(a: &Term, b: &Term) -> bool {
    let mut max_a: VarId = 0;
    let mut vars = Vec::new();
    a.vars_into(&mut vars);
    for v in &vars {
        max_a = max_a.max(*v + 1);
    }
    let shifted = b.map_vars(&|v| v + max_a);
    unify_terms(a, &shifted, &mut BTreeMap::new())
}

// ---------------------------------------------------------------------------
// Pretty-printing. The printed form must parse back to an equal structure.
// ---------------------------------------------------------------------------

pub fn display_term(t: &Term, name: &dyn Fn(VarId) -> String) -> String {
    match t {
        Term::Var(v) => name(*v),
        Term::Num(r) => {
            let s = format_rat(r);
            if r.is_negative() {
                // keep `f(-5)` parseable as a literal, not an expression
                s
            } else {
                s
            }
        }
        Term::App(f, args) => {
            if args.is_empty() {
                f.clone()
            } else {
                let inner: Vec<String> = args.iter().map(|a| display_term(a, name)).collect();
                format!("{}({})", f, inner.join(", "))
            }
        }
    }
}

pub fn display_linexpr(e: &LinExpr, name: &dyn Fn(VarId) -> String) -> String {
    let mut out = String::new();
    let mut first = true;
    for (v, c) in &e.terms {
        let mag = c.abs();
        let piece = if mag.is_one() {
            name(*v)
        } else {
            format!("{}*{}", format_rat(&mag), name(*v))
        };
        if first {
            if c.is_negative() {
                out.push_str("-");
            }
            out.push_str(&piece);
            first = false;
        } else {
            out.push_str(if c.is_negative() { " - " } else { " + " });
            out.push_str(&piece);
        }
    }
    if first {
        out.push_str(&format_rat(&e.constant));
    } else if !e.constant.is_zero() {
        let mag = e.constant.abs();
        out.push_str(if e.constant.is_negative() { " - " } else { " + " });
        out.push_str(&format_rat(&mag));
    }
    out
}

pub fn display_literal(l: &Literal, name: &dyn Fn(VarId) -> String) -> String {
    match l {
        Literal::Atom(t) | Literal::NegatedBuiltin(t) => display_term(t, name),
        Literal::Constraint(c) => format!(
            "{} {} {}",
            display_linexpr(&c.lhs, name),
            c.op.token(),
            display_linexpr(&c.rhs, name)
        ),
    }
}

fn namer(names: &[String]) -> impl Fn(VarId) -> String + '_ {
    move |v: VarId| {
        names
            .get(v as usize)
            .cloned()
            .unwrap_or_else(|| format!("_G{v}"))
    }
}

pub fn display_rule(r: &Rule) -> String {
    let name = namer(&r.var_names);
    let head = display_term(&r.head, &name);
    if r.body.is_empty() {
        format!("{head}.")
    } else {
        let body: Vec<String> = r.body.iter().map(|l| display_literal(l, &name)).collect();
        format!("{} :-\n    {}.", head, body.join(",\n    "))
    }
}

pub fn display_query(q: &Query) -> String {
    let name = namer(&q.var_names);
    let mut parts: Vec<String> = q
        .directives
        .iter()
        .map(|Directive::IncrMaxTime(r)| format!("!incr_max_time({})", format_rat(r)))
        .collect();
    parts.extend(q.body.iter().map(|l| display_literal(l, &name)));
    format!("?- {}.", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    #[test]
    fn linexpr_algebra() {
        let x = LinExpr::var(0);
        let y = LinExpr::var(1);
        let e = x.scale(&rat(2)).add(&y).add(&LinExpr::constant(rat(3)));
        let z = e.sub(&e);
        assert!(z.is_const());
        assert!(z.constant.is_zero());
        assert!(z.terms.is_empty());
    }

    #[test]
    fn display_forms() {
        let t = Term::app("balance", vec![Term::Var(0)]);
        assert_eq!(display_term(&t, &|_| "B".into()), "balance(B)");
        let e = LinExpr::var(0)
            .sub(&LinExpr::var(1))
            .add(&LinExpr::constant(rat(-5)));
        assert_eq!(
            display_linexpr(&e, &|v| if v == 0 { "A".into() } else { "B".into() }),
            "A - B - 5"
        );
    }
}
