//! Lexer and recursive-descent parser for the surface language.
//!
//! Grammar sketch:
//! ```text
//! program    := (clause | query)*
//! clause     := term ( ':-' body )? '.'
//! query      := '?-' (directive | literal) (',' (directive | literal))* '.'
//! body       := literal (',' literal)*
//! literal    := atom | expr OP expr
//! directive  := '!' ident '(' number ')'
//! ```
//! Constraint sides are normalized to `LinExpr` during parsing; non-linear
//! expressions (variable products, division by a non-constant) are rejected.

use crate::rational::{parse_decimal, Rat};
use crate::syntax::*;
use num_traits::{One, Zero};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.col, self.msg)
    }
}

impl std::error::Error for ParseError {}

type PResult<T> = Result<T, ParseError>;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Num(Rat),
    LParen,
    RParen,
    Comma,
    Dot,
    If,      // :-
    QueryIf, // ?-
    Bang,
    Op(RelOp),
    Plus,
    Minus,
    Star,
    Slash,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Var(s) => format!("variable '{s}'"),
            Tok::Num(_) => "number".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Dot => "'.'".into(),
            Tok::If => "':-'".into(),
            Tok::QueryIf => "'?-'".into(),
            Tok::Bang => "'!'".into(),
            Tok::Op(op) => format!("'{}'", op.token()),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn peek_byte(&self, off: usize) -> Option<u8> {
        self.src.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.src.get(self.pos).copied()?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek_byte(0) {
                Some(b) if b.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'%') => {
                    while let Some(b) = self.peek_byte(0) {
                        if b == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => break,
            }
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(ParseError {
            line: self.line,
            col: self.col,
            msg: msg.into(),
        })
    }

    /// Try to lex a constraint operator starting at the current `.`.
    fn constraint_op(&mut self) -> Option<RelOp> {
        let rest = &self.src[self.pos..];
        let table: &[(&[u8], RelOp)] = &[
            (b".=<.", RelOp::Le),
            (b".>=.", RelOp::Ge),
            (b".<>.", RelOp::Ne),
            (b".=.", RelOp::Eq),
            (b".<.", RelOp::Lt),
            (b".>.", RelOp::Gt),
        ];
        for (pat, op) in table {
            if rest.starts_with(pat) {
                for _ in 0..pat.len() {
                    self.bump();
                }
                return Some(*op);
            }
        }
        None
    }

    fn next_token(&mut self) -> PResult<(Tok, u32, u32)> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        let b = match self.peek_byte(0) {
            None => return Ok((Tok::Eof, line, col)),
            Some(b) => b,
        };
        let tok = match b {
            b'(' => {
                self.bump();
                Tok::LParen
            }
            b')' => {
                self.bump();
                Tok::RParen
            }
            b',' => {
                self.bump();
                Tok::Comma
            }
            b'!' => {
                self.bump();
                Tok::Bang
            }
            b'+' => {
                self.bump();
                Tok::Plus
            }
            b'*' => {
                self.bump();
                Tok::Star
            }
            b'/' => {
                self.bump();
                Tok::Slash
            }
            b'-' => {
                self.bump();
                Tok::Minus
            }
            b':' => {
                self.bump();
                if self.peek_byte(0) == Some(b'-') {
                    self.bump();
                    Tok::If
                } else {
                    return self.err("expected ':-'");
                }
            }
            b'?' => {
                self.bump();
                if self.peek_byte(0) == Some(b'-') {
                    self.bump();
                    Tok::QueryIf
                } else {
                    return self.err("expected '?-'");
                }
            }
            b'.' => {
                if let Some(op) = self.constraint_op() {
                    Tok::Op(op)
                } else {
                    self.bump();
                    Tok::Dot
                }
            }
            b'0'..=b'9' => {
                let start = self.pos;
                while matches!(self.peek_byte(0), Some(b'0'..=b'9')) {
                    self.bump();
                }
                // a '.' continues the number only when a digit follows and it
                // is not the start of a constraint operator
                if self.peek_byte(0) == Some(b'.')
                    && matches!(self.peek_byte(1), Some(b'0'..=b'9'))
                {
                    self.bump();
                    while matches!(self.peek_byte(0), Some(b'0'..=b'9')) {
                        self.bump();
                    }
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                match parse_decimal(text) {
                    Some(r) => Tok::Num(r),
                    None => return self.err(format!("malformed number '{text}'")),
                }
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = self.pos;
                while matches!(
                    self.peek_byte(0),
                    Some(b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'_')
                ) {
                    self.bump();
                }
                let text = std::str::from_utf8(&self.src[start..self.pos])
                    .unwrap()
                    .to_string();
                if b.is_ascii_lowercase() {
                    Tok::Ident(text)
                } else {
                    Tok::Var(text)
                }
            }
            other => {
                return self.err(format!("unexpected character '{}'", other as char));
            }
        };
        Ok((tok, line, col))
    }
}

/// Per-clause variable table: maps source names to local ids in appearance
/// order. `_` always creates a fresh variable.
#[derive(Default)]
struct VarTable {
    names: Vec<String>,
    by_name: BTreeMap<String, VarId>,
}

impl VarTable {
    fn intern(&mut self, name: &str) -> VarId {
        if name == "_" {
            let id = self.names.len() as VarId;
            self.names.push("_".to_string());
            return id;
        }
        if let Some(id) = self.by_name.get(name) {
            return *id;
        }
        let id = self.names.len() as VarId;
        self.names.push(name.to_string());
        self.by_name.insert(name.to_string(), id);
        id
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    line: u32,
    col: u32,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> PResult<Self> {
        let mut lexer = Lexer::new(src);
        let (tok, line, col) = lexer.next_token()?;
        Ok(Parser {
            lexer,
            tok,
            line,
            col,
        })
    }

    fn advance(&mut self) -> PResult<()> {
        let (tok, line, col) = self.lexer.next_token()?;
        self.tok = tok;
        self.line = line;
        self.col = col;
        Ok(())
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(ParseError {
            line: self.line,
            col: self.col,
            msg: msg.into(),
        })
    }

    fn expect(&mut self, want: &Tok, what: &str) -> PResult<()> {
        if &self.tok == want {
            self.advance()
        } else {
            self.err(format!("expected {what}, found {}", self.tok.describe()))
        }
    }

    // -- terms --------------------------------------------------------------

    fn parse_number_literal(&mut self) -> PResult<Rat> {
        let neg = if self.tok == Tok::Minus {
            self.advance()?;
            true
        } else {
            false
        };
        let num = match &self.tok {
            Tok::Num(r) => r.clone(),
            _ => return self.err(format!("expected number, found {}", self.tok.describe())),
        };
        self.advance()?;
        // rational literal p/q (only inside terms, where '/' is not division)
        let val = if self.tok == Tok::Slash {
            self.advance()?;
            let den = match &self.tok {
                Tok::Num(r) => r.clone(),
                _ => return self.err("expected denominator after '/'"),
            };
            if den.is_zero() {
                return self.err("zero denominator in rational literal");
            }
            self.advance()?;
            num / den
        } else {
            num
        };
        Ok(if neg { -val } else { val })
    }

    fn parse_term(&mut self, vars: &mut VarTable) -> PResult<Term> {
        match self.tok.clone() {
            Tok::Ident(name) => {
                self.advance()?;
                if self.tok == Tok::LParen {
                    self.advance()?;
                    let mut args = Vec::new();
                    loop {
                        args.push(self.parse_term(vars)?);
                        if self.tok == Tok::Comma {
                            self.advance()?;
                        } else {
                            break;
                        }
                    }
                    self.expect(&Tok::RParen, "')'")?;
                    Ok(Term::App(name, args))
                } else {
                    Ok(Term::App(name, Vec::new()))
                }
            }
            Tok::Var(name) => {
                self.advance()?;
                Ok(Term::Var(vars.intern(&name)))
            }
            Tok::Num(_) | Tok::Minus => Ok(Term::Num(self.parse_number_literal()?)),
            Tok::Plus => self.err(
                "arithmetic is not allowed inside terms; introduce a fresh variable with .=.",
            ),
            other => self.err(format!("expected term, found {}", other.describe())),
        }
    }

    // -- linear expressions -------------------------------------------------

    fn parse_expr(&mut self, vars: &mut VarTable) -> PResult<LinExpr> {
        let mut acc = self.parse_mterm(vars)?;
        loop {
            match self.tok {
                Tok::Plus => {
                    self.advance()?;
                    let rhs = self.parse_mterm(vars)?;
                    acc = acc.add(&rhs);
                }
                Tok::Minus => {
                    self.advance()?;
                    let rhs = self.parse_mterm(vars)?;
                    acc = acc.sub(&rhs);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn parse_mterm(&mut self, vars: &mut VarTable) -> PResult<LinExpr> {
        let mut acc = self.parse_factor(vars)?;
        loop {
            match self.tok {
                Tok::Star => {
                    self.advance()?;
                    let rhs = self.parse_factor(vars)?;
                    if acc.is_const() {
                        acc = rhs.scale(&acc.constant);
                    } else if rhs.is_const() {
                        acc = acc.scale(&rhs.constant);
                    } else {
                        return self.err(
                            "non-linear expression: product of two variable expressions",
                        );
                    }
                }
                Tok::Slash => {
                    self.advance()?;
                    let rhs = self.parse_factor(vars)?;
                    if !rhs.is_const() {
                        return self
                            .err("non-linear expression: division by a variable expression");
                    }
                    if rhs.constant.is_zero() {
                        return self.err("division by zero");
                    }
                    acc = acc.scale(&(Rat::one() / rhs.constant));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn parse_factor(&mut self, vars: &mut VarTable) -> PResult<LinExpr> {
        match self.tok.clone() {
            Tok::Num(r) => {
                self.advance()?;
                Ok(LinExpr::constant(r))
            }
            Tok::Var(name) => {
                self.advance()?;
                Ok(LinExpr::var(vars.intern(&name)))
            }
            Tok::Minus => {
                self.advance()?;
                Ok(self.parse_factor(vars)?.scale(&-Rat::one()))
            }
            Tok::Plus => {
                self.advance()?;
                self.parse_factor(vars)
            }
            Tok::LParen => {
                self.advance()?;
                let e = self.parse_expr(vars)?;
                self.expect(&Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(name) => self.err(format!(
                "'{name}' is not allowed in a constraint: sides must be linear \
                 arithmetic over variables and numbers"
            )),
            other => self.err(format!("expected expression, found {}", other.describe())),
        }
    }

    // -- literals -----------------------------------------------------------

    fn classify_atom(&self, term: Term) -> PResult<Literal> {
        let (f, n) = match term.functor() {
            Some(fa) => fa,
            None => return self.err("expected a predicate application"),
        };
        if let Some(stripped) = f.strip_prefix("not_") {
            for (name, arities) in NEGATED_BUILTINS {
                if *name == f {
                    if arities.contains(&n) {
                        return Ok(Literal::NegatedBuiltin(term));
                    }
                    return self.err(format!(
                        "{f} expects {} argument(s), found {n}",
                        arities
                            .iter()
                            .map(|a| a.to_string())
                            .collect::<Vec<_>>()
                            .join(" or ")
                    ));
                }
            }
            return self.err(format!(
                "unsupported negation not_{stripped}: negation is available only for \
                 the built-in holdsAt/happens family"
            ));
        }
        for (name, arities) in POSITIVE_BUILTINS {
            if *name == f && !arities.contains(&n) {
                return self.err(format!(
                    "{f} expects {} argument(s), found {n}",
                    arities
                        .iter()
                        .map(|a| a.to_string())
                        .collect::<Vec<_>>()
                        .join(" or ")
                ));
            }
        }
        if f == "stoppedIn" || f == "startedIn" {
            return self.err(format!("{f} cannot be called positively; use not_{f}"));
        }
        Ok(Literal::Atom(term))
    }

    fn parse_literal(&mut self, vars: &mut VarTable) -> PResult<Literal> {
        match &self.tok {
            Tok::Ident(_) => {
                let term = self.parse_term(vars)?;
                if matches!(self.tok, Tok::Op(_)) {
                    return self.err(
                        "left side of a constraint must be a linear arithmetic expression",
                    );
                }
                self.classify_atom(term)
            }
            Tok::Var(_) | Tok::Num(_) | Tok::LParen | Tok::Minus | Tok::Plus => {
                let lhs = self.parse_expr(vars)?;
                let op = match self.tok {
                    Tok::Op(op) => op,
                    _ => {
                        return self.err(format!(
                            "expected constraint operator, found {}",
                            self.tok.describe()
                        ))
                    }
                };
                self.advance()?;
                let rhs = self.parse_expr(vars)?;
                Ok(Literal::Constraint(Constraint::new(op, lhs, rhs)))
            }
            Tok::Bang => self.err("directives are only allowed in queries"),
            other => self.err(format!("expected literal, found {}", other.describe())),
        }
    }

    // -- clauses and queries ------------------------------------------------

    fn parse_clause(&mut self) -> PResult<Rule> {
        let mut vars = VarTable::default();
        let head = self.parse_term(&mut vars)?;
        match head.functor() {
            None => return self.err("clause head must be a predicate application"),
            Some((f, _)) => {
                if RESERVED_HEADS.contains(&f) {
                    return self.err(format!(
                        "{f} is a built-in predicate and cannot be redefined"
                    ));
                }
            }
        }
        let mut body = Vec::new();
        if self.tok == Tok::If {
            self.advance()?;
            loop {
                body.push(self.parse_literal(&mut vars)?);
                if self.tok == Tok::Comma {
                    self.advance()?;
                } else {
                    break;
                }
            }
        }
        self.expect(&Tok::Dot, "'.'")?;
        Ok(Rule {
            head,
            body,
            var_names: vars.names,
        })
    }

    fn parse_directive(&mut self) -> PResult<Directive> {
        self.expect(&Tok::Bang, "'!'")?;
        let name = match &self.tok {
            Tok::Ident(s) => s.clone(),
            other => {
                return self.err(format!(
                    "expected directive name, found {}",
                    other.describe()
                ))
            }
        };
        self.advance()?;
        match name.as_str() {
            "incr_max_time" => {
                self.expect(&Tok::LParen, "'('")?;
                let r = self.parse_number_literal()?;
                self.expect(&Tok::RParen, "')'")?;
                Ok(Directive::IncrMaxTime(r))
            }
            other => self.err(format!("unknown directive '{other}'")),
        }
    }

    fn parse_query_body(&mut self) -> PResult<Query> {
        let mut vars = VarTable::default();
        let mut body = Vec::new();
        let mut directives = Vec::new();
        loop {
            if self.tok == Tok::Bang {
                directives.push(self.parse_directive()?);
            } else {
                body.push(self.parse_literal(&mut vars)?);
            }
            if self.tok == Tok::Comma {
                self.advance()?;
            } else {
                break;
            }
        }
        Ok(Query {
            body,
            var_names: vars.names,
            directives,
        })
    }

    fn parse_program(&mut self) -> PResult<(Vec<Rule>, Vec<Query>)> {
        let mut rules = Vec::new();
        let mut queries = Vec::new();
        while self.tok != Tok::Eof {
            if self.tok == Tok::QueryIf {
                self.advance()?;
                let q = self.parse_query_body()?;
                self.expect(&Tok::Dot, "'.'")?;
                queries.push(q);
            } else {
                rules.push(self.parse_clause()?);
            }
        }
        Ok((rules, queries))
    }
}

/// Parse a full source file into rules and embedded queries.
pub fn parse_program(src: &str) -> PResult<(Vec<Rule>, Vec<Query>)> {
    Parser::new(src)?.parse_program()
}

/// Parse a standalone query, as given on the command line. A leading `?-`
/// and trailing `.` are both optional.
pub fn parse_query_text(src: &str) -> PResult<Query> {
    let mut p = Parser::new(src)?;
    if p.tok == Tok::QueryIf {
        p.advance()?;
    }
    let q = p.parse_query_body()?;
    if p.tok == Tok::Dot {
        p.advance()?;
    }
    if p.tok != Tok::Eof {
        return p.err(format!(
            "unexpected {} after query",
            p.tok.describe()
        ));
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, ratio};
    use crate::syntax::{display_query, display_rule};
    use proptest::prelude::*;

    fn roundtrip_rule(src: &str) {
        let (rules, _) = parse_program(src).expect("parse");
        assert_eq!(rules.len(), 1);
        let printed = display_rule(&rules[0]);
        let (rules2, _) = parse_program(&printed).expect("reparse");
        assert_eq!(rules, rules2, "printed form: {printed}");
    }

    #[test]
    fn parses_facts_and_rules() {
        let src = "fluent(light).\n\
                   initiallyP(light).\n\
                   happens(turn_off, 10). % narrative\n\
                   terminates(turn_off, light, T).";
        let (rules, queries) = parse_program(src).unwrap();
        assert_eq!(rules.len(), 4);
        assert!(queries.is_empty());
        assert_eq!(rules[2].head, Term::app("happens", vec![Term::atom("turn_off"), Term::num(rat(10))]));
        assert_eq!(rules[3].var_names, vec!["T".to_string()]);
    }

    #[test]
    fn parses_constraints_and_negation() {
        let src = "initiates(deposit(A), balance(NewB), T) :- \
                     A .>. 0, holdsAt(balance(B), T), NewB .=. B + A, \
                     not_stoppedIn(0, balance(B), T).";
        let (rules, _) = parse_program(src).unwrap();
        let r = &rules[0];
        assert_eq!(r.body.len(), 4);
        assert!(matches!(r.body[0], Literal::Constraint(_)));
        assert!(matches!(r.body[1], Literal::Atom(_)));
        assert!(matches!(r.body[3], Literal::NegatedBuiltin(_)));
    }

    #[test]
    fn trajectory_constraint_normalizes() {
        let src = "trajectory(fading_in, T1, brightness(X2), T2) :- \
                     holdsAt(brightness(X), T1), X2 .=. X + T2 - T1.";
        let (rules, _) = parse_program(src).unwrap();
        let c = match &rules[0].body[1] {
            Literal::Constraint(c) => c,
            other => panic!("expected constraint, got {other:?}"),
        };
        // delta = X2 - X - T2 + T1, i.e. coefficients {X2:1, X:-1, T2:-1, T1:1}
        let d = c.delta();
        assert!(d.constant.is_zero());
        let coeffs: Vec<(String, Rat)> = d
            .terms
            .iter()
            .map(|(v, k)| (rules[0].var_names[*v as usize].clone(), k.clone()))
            .collect();
        let mut sorted = coeffs.clone();
        sorted.sort();
        assert_eq!(
            sorted,
            vec![
                ("T1".to_string(), rat(1)),
                ("T2".to_string(), rat(-1)),
                ("X".to_string(), rat(-1)),
                ("X2".to_string(), rat(1)),
            ]
        );
    }

    #[test]
    fn parses_queries_and_directives() {
        let src = "?- holdsAt(light, T), T .>. 10.\n\
                   ?- !incr_max_time(19.5), happens(E, T).";
        let (rules, queries) = parse_program(src).unwrap();
        assert!(rules.is_empty());
        assert_eq!(queries.len(), 2);
        assert_eq!(queries[0].body.len(), 2);
        assert_eq!(
            queries[1].directives,
            vec![Directive::IncrMaxTime(ratio(39, 2))]
        );
        let q = parse_query_text("holdsAt(light, T), T .>. 10").unwrap();
        assert_eq!(q.body, queries[0].body);
    }

    #[test]
    fn decimal_and_rational_literals() {
        let (rules, _) = parse_program("happens(e, 16.25). happens(f, 1/3). happens(g, -0.5).")
            .unwrap();
        let t = |i: usize| match &rules[i].head {
            Term::App(_, args) => args[1].clone(),
            _ => unreachable!(),
        };
        assert_eq!(t(0), Term::num(ratio(65, 4)));
        assert_eq!(t(1), Term::num(ratio(1, 3)));
        assert_eq!(t(2), Term::num(ratio(-1, 2)));
    }

    #[test]
    fn clause_end_dot_vs_operator_dot() {
        // `foo(1).` must terminate; `T .=. 1.` mixes both uses of '.'
        let (rules, _) = parse_program("foo(1).").unwrap();
        assert_eq!(rules.len(), 1);
        let (rules, _) = parse_program("p(T) :- T .=. 1.").unwrap();
        assert_eq!(rules.len(), 1);
        let (rules, _) = parse_program("p(T) :- T .=<. 1.5.").unwrap();
        assert_eq!(rules.len(), 1);
        match &rules[0].body[0] {
            Literal::Constraint(c) => {
                assert_eq!(c.op, RelOp::Le);
                assert_eq!(c.rhs, LinExpr::constant(ratio(3, 2)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_input() {
        // non-linear product
        assert!(parse_program("p :- X * Y .>. 0.").is_err());
        // division by zero
        assert!(parse_program("p :- X / 0 .>. 1.").is_err());
        // division by variable
        assert!(parse_program("p :- 1 / X .>. 0.").is_err());
        // unknown negation
        let e = parse_program("p :- not_foo(a).").unwrap_err();
        assert!(e.msg.contains("unsupported negation"), "{e}");
        // reserved head
        let e = parse_program("holdsAt(f, 1).").unwrap_err();
        assert!(e.msg.contains("cannot be redefined"), "{e}");
        let e = parse_program("not_happens(e, 1).").unwrap_err();
        assert!(e.msg.contains("cannot be redefined"), "{e}");
        // arity errors
        assert!(parse_program("p :- holdsAt(f).").is_err());
        assert!(parse_program("p :- not_stoppedIn(f, T).").is_err());
        // positive stoppedIn
        let e = parse_program("p :- stoppedIn(0, f, 1).").unwrap_err();
        assert!(e.msg.contains("use not_stoppedIn"), "{e}");
        // arithmetic inside a term
        assert!(parse_program("happens(e, T) :- q(T + 1).").is_err());
        // directive in a rule body
        assert!(parse_program("p :- !incr_max_time(5).").is_err());
        // unknown directive
        assert!(parse_program("?- !frobnicate(5).").is_err());
        // stray characters
        assert!(parse_program("p :- q & r.").is_err());
        // missing clause terminator
        assert!(parse_program("p :- q").is_err());
    }

    #[test]
    fn anonymous_vars_are_fresh() {
        let (rules, _) = parse_program("p(_, _) :- q(_).").unwrap();
        let r = &rules[0];
        assert_eq!(r.var_names, vec!["_", "_", "_"]);
        let ids: Vec<_> = match &r.head {
            Term::App(_, args) => args.clone(),
            _ => unreachable!(),
        };
        assert_ne!(ids[0], ids[1]);
    }

    #[test]
    fn roundtrip_fixed_examples() {
        roundtrip_rule("initiallyP(brightness(0)).");
        roundtrip_rule(
            "initiates(deposit(A), balance(NewB), T) :- A .>. 0, \
             holdsAt(balance(B), T), NewB .=. B + A.",
        );
        roundtrip_rule(
            "trajectory(filling, T1, water_level(X2), T2) :- \
             holdsAt(water_level(X), T1), X2 .=. X + 5 * (T2 - T1), X2 .=<. 100.",
        );
        roundtrip_rule("p(X) :- X .=. 1/3, X .<>. -0.5.");
        roundtrip_rule("happens(switch_off, T) :- T .=. 3/2.");
        let (queries_src, printed) = {
            let (_, qs) = parse_program("?- !incr_max_time(19.5), holdsAt(f, T), T .>. 0.").unwrap();
            let printed = display_query(&qs[0]);
            (qs, printed)
        };
        let (_, qs2) = parse_program(&printed).unwrap();
        assert_eq!(queries_src, qs2, "printed form: {printed}");
    }

    // Property: display ∘ parse ∘ display = display for generated rules.
    fn small_rat() -> impl Strategy<Value = Rat> {
        (-50i64..50, 1i64..6).prop_map(|(n, d)| ratio(n, d))
    }

    fn gen_term(depth: u32) -> BoxedStrategy<Term> {
        let leaf = prop_oneof![
            (0u32..4).prop_map(Term::Var),
            small_rat().prop_map(Term::Num),
            "[a-c][a-z]{0,3}".prop_map(|s| Term::atom(&s)),
        ];
        leaf.prop_recursive(depth, 8, 3, |inner| {
            ("[a-c][a-z]{0,3}", prop::collection::vec(inner, 1..3))
                .prop_map(|(f, args)| Term::App(f, args))
        })
        .boxed()
    }

    fn gen_linexpr() -> impl Strategy<Value = LinExpr> {
        (
            prop::collection::btree_map(0u32..4, small_rat(), 0..3),
            small_rat(),
        )
            .prop_map(|(terms, constant)| {
                let terms = terms.into_iter().filter(|(_, c)| !c.is_zero()).collect();
                LinExpr { terms, constant }
            })
    }

    fn gen_literal() -> impl Strategy<Value = Literal> {
        prop_oneof![
            gen_term(2).prop_filter("atoms must be applications", |t| matches!(
                t,
                Term::App(f, _) if !f.starts_with("not_")
            ))
            .prop_map(Literal::Atom),
            (
                prop_oneof![
                    Just(RelOp::Eq),
                    Just(RelOp::Ne),
                    Just(RelOp::Lt),
                    Just(RelOp::Le),
                    Just(RelOp::Ge),
                    Just(RelOp::Gt)
                ],
                gen_linexpr(),
                gen_linexpr()
            )
                .prop_map(|(op, l, r)| Literal::Constraint(Constraint::new(op, l, r))),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn roundtrip_property(
            head in gen_term(2).prop_filter("head must be an application", |t| matches!(
                t,
                Term::App(f, _) if !RESERVED_HEADS.contains(&f.as_str())
                    && f != "holdsAt" && f != "happens"
            )),
            body in prop::collection::vec(gen_literal(), 0..4)
        ) {
            let rule = Rule {
                head,
                body,
                var_names: vec!["V0".into(), "V1".into(), "V2".into(), "V3".into()],
            };
            // one parse canonicalizes variable numbering (appearance order);
            // from then on display/parse must be mutually inverse
            let printed0 = display_rule(&rule);
            let (normal, _) = parse_program(&printed0)
                .unwrap_or_else(|e| panic!("parse failed on {printed0:?}: {e}"));
            prop_assert_eq!(normal.len(), 1);
            let printed = display_rule(&normal[0]);
            let (reparsed, _) = parse_program(&printed)
                .unwrap_or_else(|e| panic!("reparse failed on {printed:?}: {e}"));
            prop_assert_eq!(&normal[0], &reparsed[0], "printed form: {}", printed);
            prop_assert_eq!(printed, display_rule(&reparsed[0]));
        }
    }
}
