//! Scalar expressions over named variables.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := sum (("<" | "<=" | ">" | ">=" | "==" | "!=") sum)?
//! sum     := product (("+" | "-") product)*
//! product := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := atom ("^" unary)?
//! atom    := number | name | name "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! Comparisons evaluate to 1 or 0. Built-in functions: `min`, `max` (two or
//! more arguments), `abs`, `pow`, `exp`, `log`, `sqrt`, `sin`, `cos`, and the
//! constant `pi`. Callers may bind extra one-argument functions (the CLI binds
//! the N-function's `a`, `ainv` and `atilde`).

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    /// Byte offset into the source.
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (at offset {})", self.message, self.offset)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Builtin {
    Min,
    Max,
    Abs,
    Pow,
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
}

impl Builtin {
    fn lookup(name: &str) -> Option<Self> {
        Some(match name {
            "min" => Self::Min,
            "max" => Self::Max,
            "abs" => Self::Abs,
            "pow" => Self::Pow,
            "exp" => Self::Exp,
            "log" => Self::Log,
            "sqrt" => Self::Sqrt,
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            _ => return None,
        })
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            Self::Min | Self::Max => n >= 2,
            Self::Pow => n == 2,
            _ => n == 1,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
    Call(Builtin, Vec<Node>),
    /// Index into the caller's function table.
    Ext(usize, Box<Node>),
}

/// A parsed expression; variable and function names are resolved at parse time.
#[derive(Debug, Clone)]
pub struct Expr {
    root: Node,
    source: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    End,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut k = 0;
    while k < b.len() {
        let c = b[k] as char;
        if c.is_ascii_whitespace() {
            k += 1;
            continue;
        }
        let start = k;
        if c.is_ascii_digit() || (c == '.' && b.get(k + 1).is_some_and(|d| d.is_ascii_digit())) {
            while k < b.len() && (b[k].is_ascii_digit() || b[k] == b'.') {
                k += 1;
            }
            if k < b.len() && (b[k] == b'e' || b[k] == b'E') {
                let mut m = k + 1;
                if m < b.len() && (b[m] == b'+' || b[m] == b'-') {
                    m += 1;
                }
                if m < b.len() && b[m].is_ascii_digit() {
                    k = m;
                    while k < b.len() && b[k].is_ascii_digit() {
                        k += 1;
                    }
                }
            }
            let text = &src[start..k];
            let v = text.parse::<f64>().map_err(|_| ParseError {
                offset: start,
                message: format!("malformed number '{text}'"),
            })?;
            out.push((Tok::Num(v), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while k < b.len() && (b[k].is_ascii_alphanumeric() || b[k] == b'_') {
                k += 1;
            }
            out.push((Tok::Name(src[start..k].to_string()), start));
            continue;
        }
        let two = src.get(k..k + 2).unwrap_or("");
        let tok = match two {
            "<=" => Some(Tok::Op("<=")),
            ">=" => Some(Tok::Op(">=")),
            "==" => Some(Tok::Op("==")),
            "!=" => Some(Tok::Op("!=")),
            _ => None,
        };
        if let Some(t) = tok {
            out.push((t, start));
            k += 2;
            continue;
        }
        let t = match c {
            '+' => Tok::Op("+"),
            '-' => Tok::Op("-"),
            '*' => Tok::Op("*"),
            '/' => Tok::Op("/"),
            '^' => Tok::Op("^"),
            '<' => Tok::Op("<"),
            '>' => Tok::Op(">"),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            _ => {
                return Err(ParseError {
                    offset: start,
                    message: format!("unexpected character '{c}'"),
                })
            }
        };
        out.push((t, start));
        k += c.len_utf8();
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    vars: &'a [&'a str],
    funcs: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {what}, found {}", describe(self.peek())))
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let lhs = self.sum()?;
        let op = match self.peek() {
            Tok::Op("<") => Op::Lt,
            Tok::Op("<=") => Op::Le,
            Tok::Op(">") => Op::Gt,
            Tok::Op(">=") => Op::Ge,
            Tok::Op("==") => Op::Eq,
            Tok::Op("!=") => Op::Ne,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.sum()?;
        Ok(Node::Bin(op, Box::new(lhs), Box::new(rhs)))
    }

    fn sum(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Op("+") => Op::Add,
                Tok::Op("-") => Op::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op("*") => Op::Mul,
                Tok::Op("/") => Op::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if *self.peek() == Tok::Op("-") {
            self.bump();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Op("^") {
            self.bump();
            let exp = self.unary()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Name(name) => {
                if *self.peek() == Tok::LParen {
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen, "')' or ','")?;
                    return self.call(&name, args, at);
                }
                if let Some(k) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Node::Var(k));
                }
                if name == "pi" {
                    return Ok(Node::Num(std::f64::consts::PI));
                }
                Err(ParseError {
                    offset: at,
                    message: format!("unknown variable '{name}'"),
                })
            }
            t => Err(ParseError {
                offset: at,
                message: format!("expected a value, found {}", describe(&t)),
            }),
        }
    }

    fn call(&self, name: &str, mut args: Vec<Node>, at: usize) -> Result<Node, ParseError> {
        let bad_arity = |n: usize| ParseError {
            offset: at,
            message: format!("'{name}' does not take {n} argument(s)"),
        };
        if let Some(b) = Builtin::lookup(name) {
            if !b.arity_ok(args.len()) {
                return Err(bad_arity(args.len()));
            }
            return Ok(Node::Call(b, args));
        }
        if let Some(k) = self.funcs.iter().position(|f| *f == name) {
            if args.len() != 1 {
                return Err(bad_arity(args.len()));
            }
            return Ok(Node::Ext(k, Box::new(args.pop().unwrap())));
        }
        Err(ParseError {
            offset: at,
            message: format!("unknown function '{name}'"),
        })
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Name(n) => format!("'{n}'"),
        Tok::Op(o) => format!("'{o}'"),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::Comma => "','".into(),
        Tok::End => "end of expression".into(),
    }
}

impl Expr {
    /// Parses `src`, resolving names against `vars` and the one-argument
    /// functions `funcs`.
    pub fn parse(src: &str, vars: &[&str], funcs: &[&str]) -> Result<Self, ParseError> {
        let mut p = Parser {
            toks: lex(src)?,
            pos: 0,
            vars,
            funcs,
        };
        let root = p.expr()?;
        if *p.peek() != Tok::End {
            return p.err(format!("unexpected {}", describe(p.peek())));
        }
        Ok(Self {
            root,
            source: src.to_string(),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluates with `vars` in the order given to [`Expr::parse`].
    pub fn eval(&self, vars: &[f64], funcs: &[&dyn Fn(f64) -> f64]) -> f64 {
        eval(&self.root, vars, funcs)
    }
}

fn eval(n: &Node, vars: &[f64], funcs: &[&dyn Fn(f64) -> f64]) -> f64 {
    let b = |c: bool| if c { 1.0 } else { 0.0 };
    match n {
        Node::Num(v) => *v,
        Node::Var(k) => vars[*k],
        Node::Neg(a) => -eval(a, vars, funcs),
        Node::Bin(op, l, r) => {
            let (x, y) = (eval(l, vars, funcs), eval(r, vars, funcs));
            match op {
                Op::Add => x + y,
                Op::Sub => x - y,
                Op::Mul => x * y,
                Op::Div => x / y,
                Op::Pow => x.powf(y),
                Op::Lt => b(x < y),
                Op::Le => b(x <= y),
                Op::Gt => b(x > y),
                Op::Ge => b(x >= y),
                Op::Eq => b(x == y),
                Op::Ne => b(x != y),
            }
        }
        Node::Call(f, args) => {
            let v: Vec<f64> = args.iter().map(|a| eval(a, vars, funcs)).collect();
            match f {
                Builtin::Min => v.iter().copied().fold(f64::INFINITY, f64::min),
                Builtin::Max => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Builtin::Abs => v[0].abs(),
                Builtin::Pow => v[0].powf(v[1]),
                Builtin::Exp => v[0].exp(),
                Builtin::Log => v[0].ln(),
                Builtin::Sqrt => v[0].sqrt(),
                Builtin::Sin => v[0].sin(),
                Builtin::Cos => v[0].cos(),
            }
        }
        Node::Ext(k, a) => funcs[*k](eval(a, vars, funcs)),
    }
}
