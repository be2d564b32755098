//! Closed-form scalar expressions over spatial coordinates.
//!
//! Grammar (versioned with the run configuration schema):
//!
//! ```text
//! expr    := term { ("+" | "-") term }
//! term    := factor { ("*" | "/") factor }
//! factor  := unary [ "^" factor ]              // right-associative
//! unary   := "-" unary | primary
//! primary := number | "x1" | "x2" | "x3" | "pi" | "e"
//!          | ("sin" | "cos" | "exp" | "log") "(" expr ")"
//!          | "(" expr ")"
//! ```
//!
//! Unknown identifiers are rejected with the byte offset of the token.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Fun {
    Sin,
    Cos,
    Exp,
    Log,
}

#[derive(Debug, Clone)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
    Fun(Fun, Box<Node>),
}

/// A parsed expression, evaluable at a point of the domain.
#[derive(Debug, Clone)]
pub struct Expression {
    root: Node,
    source: String,
}

impl Expression {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
        };
        p.skip_ws();
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(ExprError::Parse {
                pos: p.pos,
                msg: "unexpected trailing input".into(),
            });
        }
        Ok(Self {
            root,
            source: src.to_string(),
        })
    }

    /// Evaluate at coordinates `(x1, x2, x3)`; unused coordinates are 0.
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        eval_node(&self.root, x)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

fn eval_node(n: &Node, x: [f64; 3]) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Var(i) => x[*i],
        Node::Neg(a) => -eval_node(a, x),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval_node(a, x), eval_node(b, x));
            match op {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div => a / b,
                Op::Pow => a.powf(b),
            }
        }
        Node::Fun(f, a) => {
            let a = eval_node(a, x);
            match f {
                Fun::Sin => a.sin(),
                Fun::Cos => a.cos(),
                Fun::Exp => a.exp(),
                Fun::Log => a.ln(),
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            self.skip_ws();
            true
        } else {
            false
        }
    }

    fn err<T>(&self, msg: &str) -> Result<T, ExprError> {
        Err(ExprError::Parse {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::Bin(Op::Add, Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Node::Bin(Op::Sub, Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat(b'*') {
                lhs = Node::Bin(Op::Mul, Box::new(lhs), Box::new(self.factor()?));
            } else if self.eat(b'/') {
                lhs = Node::Bin(Op::Div, Box::new(lhs), Box::new(self.factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Node, ExprError> {
        let base = self.unary()?;
        if self.eat(b'^') {
            let exp = self.factor()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.eat(b'(');
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return self.err("expected ')'");
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            _ => self.err("expected a number, identifier or '('"),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E') && self.pos > start {
                // exponent part: e[+-]?digits
                let save = self.pos;
                self.pos += 1;
                if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                    self.pos += 1;
                }
                if matches!(self.peek(), Some(d) if d.is_ascii_digit()) {
                    while matches!(self.peek(), Some(d) if d.is_ascii_digit()) {
                        self.pos += 1;
                    }
                } else {
                    self.pos = save;
                    break;
                }
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let v: f64 = match text.parse() {
            Ok(v) => v,
            Err(_) => {
                return Err(ExprError::Parse {
                    pos: start,
                    msg: format!("invalid number '{text}'"),
                })
            }
        };
        self.skip_ws();
        Ok(Node::Num(v))
    }

    fn ident(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        self.skip_ws();
        match name {
            "x1" => Ok(Node::Var(0)),
            "x2" => Ok(Node::Var(1)),
            "x3" => Ok(Node::Var(2)),
            "pi" => Ok(Node::Num(std::f64::consts::PI)),
            "e" => Ok(Node::Num(std::f64::consts::E)),
            "sin" | "cos" | "exp" | "log" => {
                if !self.eat(b'(') {
                    return Err(ExprError::Parse {
                        pos: self.pos,
                        msg: format!("expected '(' after '{name}'"),
                    });
                }
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return self.err("expected ')'");
                }
                let f = match name {
                    "sin" => Fun::Sin,
                    "cos" => Fun::Cos,
                    "exp" => Fun::Exp,
                    _ => Fun::Log,
                };
                Ok(Node::Fun(f, Box::new(arg)))
            }
            _ => Err(ExprError::Parse {
                pos: start,
                msg: format!("unknown identifier '{name}'"),
            }),
        }
    }
}
