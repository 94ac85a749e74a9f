//! Expression language for coefficients, barriers and terminal values.
//!
//! Grammar (all binary operators left-associative):
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | primary
//! primary := number | variable | func "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! `·` and `×` are accepted for `*`, `−` for `-`.  Variables are `t`, `y`,
//! `z1..zd`, `u1..um`, `w1..wd`, `n1..nm` (jump counts), `znorm` (Euclidean
//! norm of `z`) and `unorm` (`sqrt(Σ λ_k u_k²)`).  Functions and arities:
//! `abs/1 max/2 min/2 sign/1 exp/1 sin/1 cos/1 sqrt/1 pos/1 neg/1
//! indicator_pos/1`.

mod envelope;
mod hypotheses;
mod parser;

use std::fmt;

use thiserror::Error;

pub use envelope::{
    inf_convolution, sup_convolution, tabulate_envelope, Envelope, EnvelopeKind, EnvelopeParams,
    EnvelopeTable, ENVELOPE_SCHEMA,
};
pub use hypotheses::{
    check_dominated_growth, check_g_contraction, check_linear_growth, check_pi_minorant,
    sample_cloud, sample_ordered_pairs, sample_pairs, CheckReport, CloudSpec, GeneratorSpec,
    SamplePoint, Violation,
};
pub use parser::{parse_expr, parse_expr_in, ParseError, ParseErrorKind};

/// Published grammar, printed by `rbdsdep grammar`.
pub const GRAMMAR: &str = r#"expr    := term (("+" | "-") term)*
term    := unary (("*" | "/") unary)*
unary   := "-" unary | primary
primary := number | variable | func "(" expr ("," expr)* ")" | "(" expr ")"

precedence: unary minus > * / > + -   (binary operators are left-associative)
aliases:    "·" and "×" for "*", "−" for "-"
numbers:    decimal with optional fraction and exponent, e.g. 2, 0.5, 1e-3
variables:  t  y  z1..zd  u1..um  w1..wd  n1..nm  znorm  unorm
            znorm = sqrt(z1² + … + zd²); unorm = sqrt(Σ_k λ_k u_k²)
            w = forward Brownian level, n = jump counts per mark
functions:  abs(x) max(x,y) min(x,y) sign(x) exp(x) sin(x) cos(x) sqrt(x)
            pos(x)=max(x,0) neg(x)=max(-x,0) indicator_pos(x)=1 if x>0 else 0
errors:     division by zero, sqrt of a negative, non-finite results
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    T,
    Y,
    /// zero-based component
    Z(usize),
    U(usize),
    W(usize),
    N(usize),
    ZNorm,
    UNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Abs,
    Max,
    Min,
    Sign,
    Exp,
    Sin,
    Cos,
    Sqrt,
    Pos,
    Neg,
    IndicatorPos,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Max => "max",
            Func::Min => "min",
            Func::Sign => "sign",
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Pos => "pos",
            Func::Neg => "neg",
            Func::IndicatorPos => "indicator_pos",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Max | Func::Min => 2,
            _ => 1,
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "abs" => Func::Abs,
            "max" => Func::Max,
            "min" => Func::Min,
            "sign" => Func::Sign,
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "pos" => Func::Pos,
            "neg" => Func::Neg,
            "indicator_pos" => Func::IndicatorPos,
            _ => return None,
        })
    }

    /// Jump discontinuities in the argument.
    pub fn is_discontinuous(self) -> bool {
        matches!(self, Func::Sign | Func::IndicatorPos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("sqrt of negative value {0}")]
    SqrtOfNegative(f64),
    #[error("non-finite result in {0}")]
    NonFinite(&'static str),
    #[error("variable {0} has no value in this context")]
    Unbound(String),
}

/// Values of every variable an expression may reference.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub t: f64,
    pub y: f64,
    pub z: &'a [f64],
    pub u: &'a [f64],
    pub w: &'a [f64],
    pub n: &'a [f64],
    /// mark intensities, used by `unorm`
    pub intensities: &'a [f64],
}

impl<'a> Env<'a> {
    pub fn at_time(t: f64) -> Self {
        Env {
            t,
            y: 0.0,
            z: &[],
            u: &[],
            w: &[],
            n: &[],
            intensities: &[],
        }
    }
}

/// Which variable families an expression may reference, and their sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scope {
    pub d: usize,
    pub m: usize,
    pub time: bool,
    pub state: bool,
    pub brownian: bool,
    pub counts: bool,
}

impl Scope {
    /// Coefficients `f` and `g`: everything.
    pub fn generator(d: usize, m: usize) -> Self {
        Scope {
            d,
            m,
            time: true,
            state: true,
            brownian: true,
            counts: true,
        }
    }

    /// Minorant `π(t, y, z, u)`.
    pub fn minorant(d: usize, m: usize) -> Self {
        Scope {
            brownian: false,
            counts: false,
            ..Self::generator(d, m)
        }
    }

    /// Barrier `S(t, w)`.
    pub fn barrier(d: usize) -> Self {
        Scope {
            d,
            m: 0,
            time: true,
            state: false,
            brownian: true,
            counts: false,
        }
    }

    /// Terminal value `ξ(w_T, n_T)`.
    pub fn terminal(d: usize, m: usize) -> Self {
        Scope {
            d,
            m,
            time: true,
            state: false,
            brownian: true,
            counts: true,
        }
    }

    /// Deterministic functions of time.
    pub fn time_only() -> Self {
        Scope {
            d: 0,
            m: 0,
            time: true,
            state: false,
            brownian: false,
            counts: false,
        }
    }

    pub(crate) fn admits(&self, var: Var) -> bool {
        match var {
            Var::T => self.time,
            Var::Y | Var::ZNorm | Var::UNorm => self.state,
            Var::Z(j) => self.state && j < self.d,
            Var::U(k) => self.state && k < self.m,
            Var::W(j) => self.brownian && j < self.d,
            Var::N(k) => self.counts && k < self.m,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::T => write!(f, "t"),
            Var::Y => write!(f, "y"),
            Var::Z(j) => write!(f, "z{}", j + 1),
            Var::U(k) => write!(f, "u{}", k + 1),
            Var::W(j) => write!(f, "w{}", j + 1),
            Var::N(k) => write!(f, "n{}", k + 1),
            Var::ZNorm => write!(f, "znorm"),
            Var::UNorm => write!(f, "unorm"),
        }
    }
}

fn finite(v: f64, what: &'static str) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite(what))
    }
}

fn component(values: &[f64], idx: usize, var: Var) -> Result<f64, EvalError> {
    values
        .get(idx)
        .copied()
        .ok_or_else(|| EvalError::Unbound(var.to_string()))
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Self {
        Expr::Var(v)
    }

    pub fn add(a: Expr, b: Expr) -> Self {
        Expr::Bin(BinOp::Add, Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Self {
        Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Self {
        Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b))
    }

    pub fn call(f: Func, args: Vec<Expr>) -> Self {
        Expr::Call(f, args)
    }

    pub fn eval(&self, env: &Env<'_>) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(var) => match *var {
                Var::T => Ok(env.t),
                Var::Y => Ok(env.y),
                Var::Z(j) => component(env.z, j, *var),
                Var::U(k) => component(env.u, k, *var),
                Var::W(j) => component(env.w, j, *var),
                Var::N(k) => component(env.n, k, *var),
                Var::ZNorm => Ok(env.z.iter().map(|v| v * v).sum::<f64>().sqrt()),
                Var::UNorm => {
                    if env.intensities.len() < env.u.len() {
                        return Err(EvalError::Unbound("unorm".into()));
                    }
                    Ok(env
                        .u
                        .iter()
                        .zip(env.intensities)
                        .map(|(u, l)| l * u * u)
                        .sum::<f64>()
                        .sqrt())
                }
            },
            Expr::Neg(a) => Ok(-a.eval(env)?),
            Expr::Bin(op, a, b) => {
                let x = a.eval(env)?;
                let y = b.eval(env)?;
                match op {
                    BinOp::Add => finite(x + y, "+"),
                    BinOp::Sub => finite(x - y, "-"),
                    BinOp::Mul => finite(x * y, "*"),
                    BinOp::Div => {
                        if y == 0.0 {
                            Err(EvalError::DivisionByZero)
                        } else {
                            finite(x / y, "/")
                        }
                    }
                }
            }
            Expr::Call(func, args) => {
                let x = args[0].eval(env)?;
                match func {
                    Func::Abs => Ok(x.abs()),
                    Func::Max => Ok(x.max(args[1].eval(env)?)),
                    Func::Min => Ok(x.min(args[1].eval(env)?)),
                    Func::Sign => Ok(if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }),
                    Func::Exp => finite(x.exp(), "exp"),
                    Func::Sin => Ok(x.sin()),
                    Func::Cos => Ok(x.cos()),
                    Func::Sqrt => {
                        if x < 0.0 {
                            Err(EvalError::SqrtOfNegative(x))
                        } else {
                            Ok(x.sqrt())
                        }
                    }
                    Func::Pos => Ok(x.max(0.0)),
                    Func::Neg => Ok((-x).max(0.0)),
                    Func::IndicatorPos => Ok(if x > 0.0 { 1.0 } else { 0.0 }),
                }
            }
        }
    }

    /// Calls `visit` on every variable occurrence.
    pub fn for_each_var(&self, visit: &mut impl FnMut(Var)) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => visit(*v),
            Expr::Neg(a) => a.for_each_var(visit),
            Expr::Bin(_, a, b) => {
                a.for_each_var(visit);
                b.for_each_var(visit);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.for_each_var(visit)),
        }
    }

    pub fn uses(&self, pred: impl Fn(Var) -> bool) -> bool {
        let mut hit = false;
        self.for_each_var(&mut |v| hit |= pred(v));
        hit
    }

    /// Whether the value can change with `y`, `z_j` (`axis = 1 + j`) or
    /// `u_k` (`axis = 1 + d + k`).
    pub fn depends_on_axis(&self, axis: usize, d: usize) -> bool {
        self.uses(|v| match v {
            Var::Y => axis == 0,
            Var::Z(j) => axis == 1 + j,
            Var::ZNorm => (1..=d).contains(&axis),
            Var::U(k) => axis == 1 + d + k,
            Var::UNorm => axis > d,
            _ => false,
        })
    }

    pub fn has_discontinuity(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Var(_) => false,
            Expr::Neg(a) => a.has_discontinuity(),
            Expr::Bin(_, a, b) => a.has_discontinuity() || b.has_discontinuity(),
            Expr::Call(f, args) => {
                f.is_discontinuous() || args.iter().any(Expr::has_discontinuity)
            }
        }
    }

    /// Rejects variables outside `scope`.
    pub fn check_scope(&self, scope: &Scope) -> crate::Result<()> {
        let mut bad = None;
        self.for_each_var(&mut |v| {
            if bad.is_none() && !scope.admits(v) {
                bad = Some(v);
            }
        });
        match bad {
            Some(v) => Err(crate::Error::InvalidArgument(format!(
                "variable `{v}` is not available here"
            ))),
            None => Ok(()),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(op, _, _) => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                    write!(f, "({v})")
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                if a.precedence() < 3 {
                    write!(f, "-({a})")
                } else {
                    write!(f, "-{a}")
                }
            }
            Expr::Bin(op, a, b) => {
                let p = op.precedence();
                if a.precedence() < p {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if b.precedence() <= p {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}
