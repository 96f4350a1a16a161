//! A small arithmetic expression language for config-defined scalar fields.
//!
//! Variables are `q1..qm`, `p1..pm`, `y1..yn`, and `t`. Operators `+ - * / ^`
//! with `^` binding tighter than unary minus and associating to the right;
//! exponents must be (optionally signed) numeric literals. Functions:
//! `sin cos tan exp log sqrt abs atan2 min max`. Domain faults (division by
//! zero, log of a non-positive number) are reported as positioned errors
//! rather than silent NaNs.

use nalgebra::DVector;

/// Parse or evaluation error with a source position.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message} at line {line}, column {col}")]
pub struct ExprError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ExprError {
    fn new(pos: Pos, message: impl Into<String>) -> Self {
        Self { line: pos.line, col: pos.col, message: message.into() }
    }
}

type ExprResult<T> = std::result::Result<T, ExprError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    col: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Q,
    P,
    Y,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Atan2,
    Min,
    Max,
}

impl Func {
    fn arity(self) -> usize {
        match self {
            Func::Atan2 | Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Atan2 => "atan2",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "atan2" => Func::Atan2,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    /// Variable; index is 0 for `t`.
    Var(VarKind, usize),
    Neg(Box<Expression>),
    Bin(BinOp, Box<Expression>, Box<Expression>),
    Call(Func, Vec<Expression>),
}

/// A parsed expression, validated against the declared dimensions.
#[derive(Debug, Clone)]
pub struct Expression {
    node: Node,
    pos: Pos,
}

impl PartialEq for Expression {
    /// Structural equality; source positions are ignored so that the
    /// canonical printer round-trips.
    fn eq(&self, other: &Self) -> bool {
        self.node == other.node
    }
}

/// Variable bindings for evaluation.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
    pub y: DVector<f64>,
    pub t: f64,
}

impl EvalContext {
    pub fn new(q: DVector<f64>, p: DVector<f64>, y: DVector<f64>, t: f64) -> Self {
        Self { q, p, y, t }
    }

    pub fn from_qy(q: &DVector<f64>, y: &DVector<f64>) -> Self {
        Self { q: q.clone(), p: DVector::zeros(q.len()), y: y.clone(), t: 0.0 }
    }
}

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
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: Pos,
}

fn lex(src: &str) -> ExprResult<Vec<Token>> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
                continue;
            }
            c if c.is_whitespace() => {}
            '+' => out.push(Token { tok: Tok::Plus, pos }),
            '-' => out.push(Token { tok: Tok::Minus, pos }),
            '*' => out.push(Token { tok: Tok::Star, pos }),
            '/' => out.push(Token { tok: Tok::Slash, pos }),
            '^' => out.push(Token { tok: Tok::Caret, pos }),
            '(' => out.push(Token { tok: Tok::LParen, pos }),
            ')' => out.push(Token { tok: Tok::RParen, pos }),
            ',' => out.push(Token { tok: Tok::Comma, pos }),
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // exponent part like 1e-5
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v: f64 = text
                    .parse()
                    .map_err(|_| ExprError::new(pos, format!("invalid number '{text}'")))?;
                out.push(Token { tok: Tok::Num(v), pos });
                col += i - start;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || chars[i] == '_')
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                out.push(Token { tok: Tok::Ident(text), pos });
                col += i - start;
                continue;
            }
            other => {
                return Err(ExprError::new(pos, format!("unexpected character '{other}'")));
            }
        }
        i += 1;
        col += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [Token],
    i: usize,
    m: usize,
    n: usize,
    end: Pos,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.i)
    }

    fn here(&self) -> Pos {
        self.peek().map(|t| t.pos).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.toks.get(self.i).cloned();
        if t.is_some() {
            self.i += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> ExprResult<()> {
        match self.bump() {
            Some(t) if t.tok == want => Ok(()),
            Some(t) => Err(ExprError::new(t.pos, format!("expected {what}"))),
            None => Err(ExprError::new(self.end, format!("expected {what}, found end of input"))),
        }
    }

    fn sum(&mut self) -> ExprResult<Expression> {
        let mut lhs = self.product()?;
        while let Some(t) = self.peek() {
            let op = match t.tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            let pos = t.pos;
            self.bump();
            let rhs = self.product()?;
            lhs = Expression { node: Node::Bin(op, Box::new(lhs), Box::new(rhs)), pos };
        }
        Ok(lhs)
    }

    fn product(&mut self) -> ExprResult<Expression> {
        let mut lhs = self.unary()?;
        while let Some(t) = self.peek() {
            let op = match t.tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            let pos = t.pos;
            self.bump();
            let rhs = self.unary()?;
            lhs = Expression { node: Node::Bin(op, Box::new(lhs), Box::new(rhs)), pos };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> ExprResult<Expression> {
        if let Some(t) = self.peek() {
            if t.tok == Tok::Minus {
                let pos = t.pos;
                self.bump();
                let inner = self.unary()?;
                return Ok(Expression { node: Node::Neg(Box::new(inner)), pos });
            }
        }
        self.power()
    }

    fn power(&mut self) -> ExprResult<Expression> {
        let base = self.atom()?;
        if let Some(t) = self.peek() {
            if t.tok == Tok::Caret {
                let pos = t.pos;
                self.bump();
                let exp = self.exponent()?;
                return Ok(Expression {
                    node: Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)),
                    pos,
                });
            }
        }
        Ok(base)
    }

    /// Right side of `^`: an optionally signed numeric literal, possibly
    /// itself raised to a further literal (right associativity).
    fn exponent(&mut self) -> ExprResult<Expression> {
        let neg = matches!(self.peek().map(|t| &t.tok), Some(Tok::Minus));
        if neg {
            self.bump();
        }
        let pos = self.here();
        let lit = match self.bump() {
            Some(Token { tok: Tok::Num(v), pos }) => Expression { node: Node::Num(v), pos },
            _ => {
                return Err(ExprError::new(
                    pos,
                    "exponent must be a numeric literal",
                ))
            }
        };
        let mut e = lit;
        if let Some(t) = self.peek() {
            if t.tok == Tok::Caret {
                let cpos = t.pos;
                self.bump();
                let rhs = self.exponent()?;
                e = Expression { node: Node::Bin(BinOp::Pow, Box::new(e), Box::new(rhs)), pos: cpos };
            }
        }
        if neg {
            Ok(Expression { node: Node::Neg(Box::new(e)), pos })
        } else {
            Ok(e)
        }
    }

    fn atom(&mut self) -> ExprResult<Expression> {
        let t = self
            .bump()
            .ok_or_else(|| ExprError::new(self.end, "unexpected end of input"))?;
        match t.tok {
            Tok::Num(v) => Ok(Expression { node: Node::Num(v), pos: t.pos }),
            Tok::LParen => {
                let e = self.sum()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(f) = Func::from_name(&name) {
                    self.expect(Tok::LParen, "'(' after function name")?;
                    let mut args = vec![self.sum()?];
                    while matches!(self.peek().map(|t| &t.tok), Some(Tok::Comma)) {
                        self.bump();
                        args.push(self.sum()?);
                    }
                    self.expect(Tok::RParen, "')'")?;
                    if args.len() != f.arity() {
                        return Err(ExprError::new(
                            t.pos,
                            format!(
                                "{} takes {} argument(s), got {}",
                                f.name(),
                                f.arity(),
                                args.len()
                            ),
                        ));
                    }
                    return Ok(Expression { node: Node::Call(f, args), pos: t.pos });
                }
                self.variable(&name, t.pos)
            }
            _ => Err(ExprError::new(t.pos, "expected a value")),
        }
    }

    fn variable(&self, name: &str, pos: Pos) -> ExprResult<Expression> {
        if name == "t" {
            return Ok(Expression { node: Node::Var(VarKind::T, 0), pos });
        }
        let (kind, dim, rest) = match name.chars().next() {
            Some('q') => (VarKind::Q, self.m, &name[1..]),
            Some('p') => (VarKind::P, self.m, &name[1..]),
            Some('y') => (VarKind::Y, self.n, &name[1..]),
            _ => return Err(ExprError::new(pos, format!("unknown identifier '{name}'"))),
        };
        let idx: usize = rest
            .parse()
            .map_err(|_| ExprError::new(pos, format!("unknown identifier '{name}'")))?;
        if idx == 0 || idx > dim {
            return Err(ExprError::new(
                pos,
                format!("variable {name} out of range (declared dimension {dim})"),
            ));
        }
        Ok(Expression { node: Node::Var(kind, idx - 1), pos })
    }
}

/// Parse `src` against declared dimensions `(m, n)`.
pub fn parse(src: &str, m: usize, n: usize) -> ExprResult<Expression> {
    let toks = lex(src)?;
    let end = Pos {
        line: src.lines().count().max(1),
        col: src.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1),
    };
    let mut p = Parser { toks: &toks, i: 0, m, n, end };
    let e = p.sum()?;
    if let Some(t) = p.peek() {
        return Err(ExprError::new(t.pos, "unexpected trailing input"));
    }
    Ok(e)
}

/// Evaluate with positioned domain-fault errors.
pub fn evaluate(e: &Expression, ctx: &EvalContext) -> ExprResult<f64> {
    let v = eval_node(e, ctx)?;
    if !v.is_finite() {
        return Err(ExprError::new(e.pos, "non-finite result"));
    }
    Ok(v)
}

fn eval_node(e: &Expression, ctx: &EvalContext) -> ExprResult<f64> {
    let fault = |msg: &str| ExprError::new(e.pos, msg);
    Ok(match &e.node {
        Node::Num(v) => *v,
        Node::Var(VarKind::T, _) => ctx.t,
        Node::Var(kind, i) => {
            let vec = match kind {
                VarKind::Q => &ctx.q,
                VarKind::P => &ctx.p,
                VarKind::Y => &ctx.y,
                VarKind::T => unreachable!(),
            };
            *vec.get(*i).ok_or_else(|| fault("variable index exceeds binding length"))?
        }
        Node::Neg(inner) => -eval_node(inner, ctx)?,
        Node::Bin(op, a, b) => {
            let x = eval_node(a, ctx)?;
            let y = eval_node(b, ctx)?;
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(fault("division by zero"));
                    }
                    x / y
                }
                BinOp::Pow => {
                    let r = x.powf(y);
                    if !r.is_finite() {
                        return Err(fault("power out of domain"));
                    }
                    r
                }
            }
        }
        Node::Call(f, args) => {
            let a = eval_node(&args[0], ctx)?;
            match f {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Tan => {
                    let r = a.tan();
                    if !r.is_finite() {
                        return Err(fault("tan at a pole"));
                    }
                    r
                }
                Func::Exp => a.exp(),
                Func::Log => {
                    if a <= 0.0 {
                        return Err(fault("log of a non-positive number"));
                    }
                    a.ln()
                }
                Func::Sqrt => {
                    if a < 0.0 {
                        return Err(fault("sqrt of a negative number"));
                    }
                    a.sqrt()
                }
                Func::Abs => a.abs(),
                Func::Atan2 => a.atan2(eval_node(&args[1], ctx)?),
                Func::Min => a.min(eval_node(&args[1], ctx)?),
                Func::Max => a.max(eval_node(&args[1], ctx)?),
            }
        }
    })
}

/// Canonical fully parenthesized form; parsing it reproduces the same AST.
pub fn print(e: &Expression) -> String {
    match &e.node {
        Node::Num(v) => {
            if *v < 0.0 {
                // keep the printer inside the grammar: negative literals
                // re-parse as unary minus, so print them that way
                format!("(0 - {})", fmt_num(v.abs()))
            } else {
                fmt_num(*v)
            }
        }
        Node::Var(VarKind::T, _) => "t".into(),
        Node::Var(kind, i) => {
            let c = match kind {
                VarKind::Q => 'q',
                VarKind::P => 'p',
                VarKind::Y => 'y',
                VarKind::T => unreachable!(),
            };
            format!("{c}{}", i + 1)
        }
        Node::Neg(inner) => format!("(-{})", print_pow_safe(inner)),
        Node::Bin(op, a, b) => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Pow => "^",
            };
            if *op == BinOp::Pow {
                format!("{} ^ {}", paren_base(a), print_exponent(b))
            } else {
                format!("({} {} {})", print(a), sym, print(b))
            }
        }
        Node::Call(f, args) => {
            let inner: Vec<String> = args.iter().map(print).collect();
            format!("{}({})", f.name(), inner.join(", "))
        }
    }
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v}");
    // the lexer has no leading-sign or bare "inf"/"NaN" forms; values here
    // are finite and non-negative by construction
    s
}

fn paren_base(e: &Expression) -> String {
    match e.node {
        Node::Num(v) if v >= 0.0 => fmt_num(v),
        Node::Var(..) => print(e),
        _ => format!("({})", print(e)),
    }
}

fn print_exponent(e: &Expression) -> String {
    match &e.node {
        Node::Num(v) if *v >= 0.0 => fmt_num(*v),
        Node::Neg(inner) => format!("-{}", print_exponent(inner)),
        Node::Bin(BinOp::Pow, a, b) => {
            format!("{} ^ {}", print_exponent(a), print_exponent(b))
        }
        _ => print(e),
    }
}

fn print_pow_safe(e: &Expression) -> String {
    // unary minus binds looser than ^, so -x^2 would re-parse as -(x^2);
    // parenthesize anything that is not atomic
    match e.node {
        Node::Num(v) if v >= 0.0 => fmt_num(v),
        Node::Var(..) => print(e),
        Node::Call(..) => print(e),
        _ => format!("({})", print(e)),
    }
}
