//! A small arithmetic language for writing log-likelihood and log-prior
//! formulas in model files.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | ident | ident '(' args ')' | '(' expr ')'
//! args  := expr (',' expr)*
//! ```
//!
//! `^` binds tighter than unary minus and is right-associative, so `-2^2` is
//! `-4` and `2^3^2` is `512`. The data variable `x` may only appear inside a
//! `sum(...)` reduction, which adds its argument over every element of the
//! data vector.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unknown function `{name}` at line {line}, column {column}")]
    UnknownFunction { name: String, line: usize, column: usize },
    #[error("data variable `x` used outside sum(...) at line {line}, column {column}")]
    DataOutsideSum { line: usize, column: usize },
    #[error("unbound name `{0}`")]
    UnboundName(String),
    #[error("domain error: {func}({arg})")]
    Domain { func: &'static str, arg: f64 },
    #[error("expression uses sum(...) but no data vector was supplied")]
    MissingData,
}

impl ExprError {
    pub fn code(&self) -> &'static str {
        match self {
            ExprError::Syntax { .. } => "SyntaxError",
            ExprError::UnknownFunction { .. } => "UnknownFunction",
            ExprError::DataOutsideSum { .. } => "DataOutsideSum",
            ExprError::UnboundName(_) => "UnboundName",
            ExprError::Domain { .. } => "DomainError",
            ExprError::MissingData => "MissingData",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Log,
    Exp,
    Sqrt,
    Abs,
    Pow,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "log" => Func::Log,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "pow" => Func::Pow,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Log => "log",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Pow => "pow",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Pow => 2,
            _ => 1,
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Param(String),
    /// The data variable `x`; only valid under [`Expr::Sum`].
    Data,
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
    Sum(Box<Expr>),
}

impl fmt::Display for Expr {
    /// Fully parenthesised form; it always parses back to an equal tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(v) => write!(f, "{v:?}"),
            Expr::Param(name) => f.write_str(name),
            Expr::Data => f.write_str("x"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::Sum(e) => write!(f, "sum({e})"),
        }
    }
}

impl Expr {
    /// Names of the parameters referenced anywhere in the tree, in order of
    /// first appearance.
    pub fn parameters(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_params(&mut out);
        out
    }

    fn collect_params(&self, out: &mut Vec<String>) {
        match self {
            Expr::Param(n) => {
                if !out.contains(n) {
                    out.push(n.clone());
                }
            }
            Expr::Number(_) | Expr::Data => {}
            Expr::Neg(e) | Expr::Sum(e) => e.collect_params(out),
            Expr::Binary(_, l, r) => {
                l.collect_params(out);
                r.collect_params(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_params(out)),
        }
    }

    pub fn contains_sum(&self) -> bool {
        match self {
            Expr::Sum(_) => true,
            Expr::Number(_) | Expr::Param(_) | Expr::Data => false,
            Expr::Neg(e) => e.contains_sum(),
            Expr::Binary(_, l, r) => l.contains_sum() || r.contains_sum(),
            Expr::Call(_, args) => args.iter().any(Expr::contains_sum),
        }
    }

    /// Resolve parameter names to positions in `names`, producing a form
    /// that evaluates against a plain slice.
    pub fn compile(&self, names: &[String]) -> Result<CompiledExpr, ExprError> {
        Ok(CompiledExpr { root: Node::build(self, names)?, has_sum: self.contains_sum() })
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ExprError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let (start_line, start_col) = (line, col);
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, line: start_line, column: start_col });
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let begin = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let literal: String = chars[begin..i].iter().collect();
            let value = literal.parse::<f64>().map_err(|_| ExprError::Syntax {
                line: start_line,
                column: start_col,
                message: format!("malformed number `{literal}`"),
            })?;
            col += i - begin;
            out.push(Token { tok: Tok::Num(value), line: start_line, column: start_col });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let begin = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - begin;
            out.push(Token {
                tok: Tok::Ident(chars[begin..i].iter().collect()),
                line: start_line,
                column: start_col,
            });
            continue;
        }
        return Err(ExprError::Syntax {
            line: start_line,
            column: start_col,
            message: format!("unexpected character `{c}`"),
        });
    }
    out.push(Token { tok: Tok::Eof, line, column: col });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    sum_depth: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: impl Into<String>) -> ExprError {
        let t = self.peek();
        ExprError::Syntax { line: t.line, column: t.column, message: message.into() }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ExprError> {
        if self.peek().tok == tok {
            self.advance();
            Ok(())
        } else {
            Err(self.error_here(format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek().tok == Tok::Minus {
            self.advance();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek().tok == Tok::Caret {
            self.advance();
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let t = self.advance();
        match t.tok {
            Tok::Num(v) => Ok(Expr::Number(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek().tok == Tok::LParen {
                    self.advance();
                    self.call(name, t.line, t.column)
                } else if name == "x" {
                    if self.sum_depth == 0 {
                        Err(ExprError::DataOutsideSum { line: t.line, column: t.column })
                    } else {
                        Ok(Expr::Data)
                    }
                } else if name == "sum" || Func::lookup(&name).is_some() {
                    Err(ExprError::Syntax {
                        line: t.line,
                        column: t.column,
                        message: format!("function `{name}` must be called"),
                    })
                } else {
                    Ok(Expr::Param(name))
                }
            }
            Tok::Eof => Err(ExprError::Syntax {
                line: t.line,
                column: t.column,
                message: "unexpected end of input".into(),
            }),
            other => Err(ExprError::Syntax {
                line: t.line,
                column: t.column,
                message: format!("unexpected token {other:?}"),
            }),
        }
    }

    fn call(&mut self, name: String, line: usize, column: usize) -> Result<Expr, ExprError> {
        if name == "sum" {
            if self.sum_depth > 0 {
                return Err(ExprError::Syntax { line, column, message: "nested sum(...)".into() });
            }
            self.sum_depth += 1;
            let body = self.expr();
            self.sum_depth -= 1;
            let body = body?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(Expr::Sum(Box::new(body)));
        }
        let func = Func::lookup(&name).ok_or(ExprError::UnknownFunction { name, line, column })?;
        let mut args = vec![self.expr()?];
        while self.peek().tok == Tok::Comma {
            self.advance();
            args.push(self.expr()?);
        }
        self.expect(Tok::RParen, "`)`")?;
        if args.len() != func.arity() {
            return Err(ExprError::Syntax {
                line,
                column,
                message: format!("{} expects {} argument(s), got {}", func.name(), func.arity(), args.len()),
            });
        }
        Ok(Expr::Call(func, args))
    }
}

pub fn parse_expression(text: &str) -> Result<Expr, ExprError> {
    let tokens = lex(text)?;
    let mut p = Parser { tokens, pos: 0, sum_depth: 0 };
    let e = p.expr()?;
    if p.peek().tok != Tok::Eof {
        return Err(p.error_here("unexpected trailing input"));
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// Evaluation

fn apply_binary(op: BinOp, a: f64, b: f64) -> f64 {
    match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => a / b,
        BinOp::Pow => a.powf(b),
    }
}

fn apply_unary(func: Func, a: f64) -> Result<f64, ExprError> {
    match func {
        Func::Log if a < 0.0 => Err(ExprError::Domain { func: "log", arg: a }),
        Func::Log => Ok(a.ln()),
        Func::Exp => Ok(a.exp()),
        Func::Sqrt if a < 0.0 => Err(ExprError::Domain { func: "sqrt", arg: a }),
        Func::Sqrt => Ok(a.sqrt()),
        Func::Abs => Ok(a.abs()),
        Func::Pow => unreachable!("pow is binary"),
    }
}

/// Bindings for [`evaluate`].
#[derive(Debug, Clone, Default)]
pub struct EvalEnv<'a> {
    pub params: HashMap<String, f64>,
    pub data: Option<&'a [f64]>,
}

impl<'a> EvalEnv<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn with_data(mut self, data: &'a [f64]) -> Self {
        self.data = Some(data);
        self
    }
}

pub fn evaluate(expr: &Expr, env: &EvalEnv<'_>) -> Result<f64, ExprError> {
    eval_env(expr, env, None)
}

fn eval_env(expr: &Expr, env: &EvalEnv<'_>, x: Option<f64>) -> Result<f64, ExprError> {
    Ok(match expr {
        Expr::Number(v) => *v,
        Expr::Param(n) => *env.params.get(n).ok_or_else(|| ExprError::UnboundName(n.clone()))?,
        Expr::Data => x.ok_or_else(|| ExprError::UnboundName("x".into()))?,
        Expr::Neg(e) => -eval_env(e, env, x)?,
        Expr::Binary(op, l, r) => apply_binary(*op, eval_env(l, env, x)?, eval_env(r, env, x)?),
        Expr::Call(Func::Pow, args) => {
            eval_env(&args[0], env, x)?.powf(eval_env(&args[1], env, x)?)
        }
        Expr::Call(func, args) => apply_unary(*func, eval_env(&args[0], env, x)?)?,
        Expr::Sum(body) => {
            let data = env.data.ok_or(ExprError::MissingData)?;
            let mut acc = 0.0;
            for &xi in data {
                acc += eval_env(body, env, Some(xi))?;
            }
            acc
        }
    })
}

#[derive(Debug, Clone)]
enum Node {
    Number(f64),
    Param(usize),
    Data,
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Unary(Func, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Sum(Box<Node>),
}

impl Node {
    fn build(e: &Expr, names: &[String]) -> Result<Node, ExprError> {
        Ok(match e {
            Expr::Number(v) => Node::Number(*v),
            Expr::Param(n) => Node::Param(
                names.iter().position(|m| m == n).ok_or_else(|| ExprError::UnboundName(n.clone()))?,
            ),
            Expr::Data => Node::Data,
            Expr::Neg(a) => Node::Neg(Box::new(Node::build(a, names)?)),
            Expr::Binary(op, l, r) => {
                Node::Binary(*op, Box::new(Node::build(l, names)?), Box::new(Node::build(r, names)?))
            }
            Expr::Call(Func::Pow, args) => Node::Pow(
                Box::new(Node::build(&args[0], names)?),
                Box::new(Node::build(&args[1], names)?),
            ),
            Expr::Call(f, args) => Node::Unary(*f, Box::new(Node::build(&args[0], names)?)),
            Expr::Sum(b) => Node::Sum(Box::new(Node::build(b, names)?)),
        })
    }

    fn eval(&self, params: &[f64], data: &[f64], x: f64) -> Result<f64, ExprError> {
        Ok(match self {
            Node::Number(v) => *v,
            Node::Param(i) => params[*i],
            Node::Data => x,
            Node::Neg(a) => -a.eval(params, data, x)?,
            Node::Binary(op, l, r) => apply_binary(*op, l.eval(params, data, x)?, r.eval(params, data, x)?),
            Node::Pow(l, r) => l.eval(params, data, x)?.powf(r.eval(params, data, x)?),
            Node::Unary(f, a) => apply_unary(*f, a.eval(params, data, x)?)?,
            Node::Sum(body) => {
                let mut acc = 0.0;
                for &xi in data {
                    acc += body.eval(params, data, xi)?;
                }
                acc
            }
        })
    }
}

/// An expression whose parameter names are resolved to slice positions.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    root: Node,
    has_sum: bool,
}

impl CompiledExpr {
    pub fn eval(&self, params: &[f64], data: Option<&[f64]>) -> Result<f64, ExprError> {
        let data = match (data, self.has_sum) {
            (Some(d), _) => d,
            (None, false) => &[],
            (None, true) => return Err(ExprError::MissingData),
        };
        self.root.eval(params, data, f64::NAN)
    }
}
