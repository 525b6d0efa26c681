//! Scalar expressions over state variables `x1..xn`.
//!
//! Expressions are immutable trees supporting evaluation, printing and
//! symbolic differentiation. They represent vector-field components `f_i`,
//! auxiliary functions `V`, and derived quantities such as the Lie derivative
//! `∇V·f`. Constant folding is the only simplification performed; the
//! semantic contract for derived expressions is pointwise equality, not
//! canonical form.

mod parse;

use thiserror::Error;

/// Unary functions available in the expression grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Sign,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            _ => return None,
        })
    }
}

/// Power exponent. Integer exponents are evaluated by binary multiplication
/// chains (exact for small powers); real exponents require a positive base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Int(i32),
    Real(f64),
}

impl Exponent {
    fn as_f64(self) -> f64 {
        match self {
            Exponent::Int(n) => n as f64,
            Exponent::Real(r) => r,
        }
    }

    /// Classify a numeric exponent: integral values become `Int`.
    fn from_value(v: f64) -> Exponent {
        if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 {
            Exponent::Int(v as i32)
        } else {
            Exponent::Real(v)
        }
    }
}

/// Expression tree node. Variables are 1-based (`Variable(1)` is `x1`).
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Constant(f64),
    Variable(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Exponent),
    Func(Func, Box<Node>),
}

/// An expression bound to a state dimension: every variable index in the
/// tree is `<=` the dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    node: Node,
    dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown identifier `{name}` at position {position}")]
    UnknownIdentifier { position: usize, name: String },
    #[error("variable x{index} exceeds dimension {dimension}")]
    VariableOutOfRange { index: usize, dimension: usize },
    #[error("point has {got} components but the expression needs {need}")]
    DimensionMismatch { need: usize, got: usize },
    #[error("dimension mismatch between expressions: {left} vs {right}")]
    MixedDimensions { left: usize, right: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("log of non-positive value {0}")]
    LogDomain(f64),
    #[error("square root of negative value {0}")]
    SqrtDomain(f64),
    #[error("{base} cannot be raised to exponent {exponent}")]
    PowDomain { base: f64, exponent: f64 },
    #[error("non-finite result in `{op}` (overflow)")]
    Overflow { op: &'static str },
}

impl Expression {
    /// Parse `text` against state dimension `dimension` (variables `x1..xn`).
    ///
    /// Grammar: infix arithmetic with precedence `^` > unary `-` > `*` `/` >
    /// `+` `-`, parentheses, function application `name(arg)`, decimal
    /// literals. A unary minus directly in front of a literal folds into a
    /// negative constant so that printed expressions re-parse to the same
    /// tree. Exponents must be numeric (a literal or a parenthesized
    /// expression that folds to a constant).
    pub fn parse(text: &str, dimension: usize) -> Result<Expression, ExprError> {
        if dimension == 0 {
            return Err(ExprError::Syntax {
                position: 0,
                message: "dimension must be positive".into(),
            });
        }
        let node = parse::parse(text, dimension)?;
        Ok(Expression { node, dimension })
    }

    /// Wrap a hand-built tree, validating variable indices against `dimension`.
    pub fn from_node(node: Node, dimension: usize) -> Result<Expression, ExprError> {
        let max = max_variable(&node);
        if max > dimension {
            return Err(ExprError::VariableOutOfRange {
                index: max,
                dimension,
            });
        }
        Ok(Expression { node, dimension })
    }

    pub fn constant(value: f64, dimension: usize) -> Expression {
        Expression {
            node: Node::Constant(value),
            dimension,
        }
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Evaluate at `point`. Domain violations (log/sqrt outside their domain,
    /// division by zero, invalid powers) and overflow to non-finite values
    /// are reported as errors, never silently propagated.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, ExprError> {
        if point.len() < self.dimension {
            return Err(ExprError::DimensionMismatch {
                need: self.dimension,
                got: point.len(),
            });
        }
        eval_node(&self.node, point)
    }

    /// Symbolic partial derivative with respect to `x{var}` (1-based).
    ///
    /// `abs` differentiates to `sign(u)·u'` and `sign` to `0`, the
    /// almost-everywhere convention with `sign(0) = 0`; for `|u|·u`-style
    /// C¹ compositions this reproduces the true derivative everywhere,
    /// including at the kink. The result is constant-folded.
    pub fn differentiate(&self, var: usize) -> Result<Expression, ExprError> {
        if var == 0 || var > self.dimension {
            return Err(ExprError::VariableOutOfRange {
                index: var,
                dimension: self.dimension,
            });
        }
        let node = fold(diff_node(&self.node, var));
        Ok(Expression {
            node,
            dimension: self.dimension,
        })
    }

    /// Constant-folded copy (`0*e → 0`, `1*e → e`, constants combined).
    pub fn constant_folded(&self) -> Expression {
        Expression {
            node: fold(self.node.clone()),
            dimension: self.dimension,
        }
    }

    /// `-self`, folding a constant operand.
    pub fn negated(&self) -> Expression {
        let node = match &self.node {
            Node::Constant(c) => Node::Constant(-c),
            other => Node::Neg(Box::new(other.clone())),
        };
        Expression {
            node,
            dimension: self.dimension,
        }
    }
}

/// The Lie derivative `∇V·f = Σ_i (∂V/∂x_i)·f_i`, constant-folded.
///
/// All expressions must be bound to the same dimension `n` and the field must
/// have exactly `n` components.
pub fn lie_derivative(v: &Expression, field: &[Expression]) -> Result<Expression, ExprError> {
    let n = v.dimension();
    if field.len() != n {
        return Err(ExprError::MixedDimensions {
            left: n,
            right: field.len(),
        });
    }
    let mut total: Option<Node> = None;
    for (i, component) in field.iter().enumerate() {
        if component.dimension() != n {
            return Err(ExprError::MixedDimensions {
                left: n,
                right: component.dimension(),
            });
        }
        let dv = v.differentiate(i + 1)?;
        let term = Node::Mul(Box::new(dv.node), Box::new(component.node.clone()));
        total = Some(match total {
            None => term,
            Some(acc) => Node::Add(Box::new(acc), Box::new(term)),
        });
    }
    let node = fold(total.expect("dimension is positive"));
    Ok(Expression { node, dimension: n })
}

fn max_variable(node: &Node) -> usize {
    match node {
        Node::Constant(_) => 0,
        Node::Variable(i) => *i,
        Node::Neg(u) | Node::Func(_, u) | Node::Pow(u, _) => max_variable(u),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
            max_variable(a).max(max_variable(b))
        }
    }
}

fn check_finite(value: f64, op: &'static str) -> Result<f64, ExprError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ExprError::Overflow { op })
    }
}

/// Integer power by binary multiplication chains. `0^0 = 1`.
fn pow_int(base: f64, n: i32) -> Result<f64, ExprError> {
    if n < 0 && base == 0.0 {
        return Err(ExprError::DivisionByZero);
    }
    let mut result = 1.0_f64;
    let mut b = base;
    let mut e = n.unsigned_abs();
    while e > 0 {
        if e & 1 == 1 {
            result *= b;
        }
        e >>= 1;
        if e > 0 {
            b *= b;
        }
    }
    if n < 0 {
        result = 1.0 / result;
    }
    check_finite(result, "pow")
}

fn apply_func(f: Func, v: f64) -> Result<f64, ExprError> {
    match f {
        Func::Sin => check_finite(v.sin(), "sin"),
        Func::Cos => check_finite(v.cos(), "cos"),
        Func::Exp => check_finite(v.exp(), "exp"),
        Func::Log => {
            if v <= 0.0 {
                Err(ExprError::LogDomain(v))
            } else {
                check_finite(v.ln(), "log")
            }
        }
        Func::Sqrt => {
            if v < 0.0 {
                Err(ExprError::SqrtDomain(v))
            } else {
                Ok(v.sqrt())
            }
        }
        Func::Abs => Ok(v.abs()),
        // sign(0) = 0 exactly.
        Func::Sign => Ok(if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }),
    }
}

fn eval_node(node: &Node, x: &[f64]) -> Result<f64, ExprError> {
    match node {
        Node::Constant(c) => Ok(*c),
        Node::Variable(i) => Ok(x[i - 1]),
        Node::Neg(u) => Ok(-eval_node(u, x)?),
        Node::Add(a, b) => check_finite(eval_node(a, x)? + eval_node(b, x)?, "+"),
        Node::Sub(a, b) => check_finite(eval_node(a, x)? - eval_node(b, x)?, "-"),
        Node::Mul(a, b) => check_finite(eval_node(a, x)? * eval_node(b, x)?, "*"),
        Node::Div(a, b) => {
            let num = eval_node(a, x)?;
            let den = eval_node(b, x)?;
            if den == 0.0 {
                return Err(ExprError::DivisionByZero);
            }
            check_finite(num / den, "/")
        }
        Node::Pow(base, exponent) => {
            let b = eval_node(base, x)?;
            match exponent {
                Exponent::Int(n) => pow_int(b, *n),
                Exponent::Real(r) => {
                    if b < 0.0 || (b == 0.0 && *r < 0.0) {
                        Err(ExprError::PowDomain {
                            base: b,
                            exponent: *r,
                        })
                    } else {
                        check_finite(b.powf(*r), "pow")
                    }
                }
            }
        }
        Node::Func(f, u) => apply_func(*f, eval_node(u, x)?),
    }
}

fn diff_node(node: &Node, var: usize) -> Node {
    use Node::*;
    match node {
        Constant(_) => Constant(0.0),
        Variable(i) => Constant(if *i == var { 1.0 } else { 0.0 }),
        Neg(u) => Neg(Box::new(diff_node(u, var))),
        Add(a, b) => Add(
            Box::new(diff_node(a, var)),
            Box::new(diff_node(b, var)),
        ),
        Sub(a, b) => Sub(
            Box::new(diff_node(a, var)),
            Box::new(diff_node(b, var)),
        ),
        Mul(a, b) => Add(
            Box::new(Mul(Box::new(diff_node(a, var)), b.clone())),
            Box::new(Mul(a.clone(), Box::new(diff_node(b, var)))),
        ),
        Div(a, b) => Div(
            Box::new(Sub(
                Box::new(Mul(Box::new(diff_node(a, var)), b.clone())),
                Box::new(Mul(a.clone(), Box::new(diff_node(b, var)))),
            )),
            Box::new(Pow(b.clone(), Exponent::Int(2))),
        ),
        Pow(u, exponent) => {
            // d(u^p) = p * u^(p-1) * u'
            let reduced = match exponent {
                Exponent::Int(n) => Exponent::Int(n - 1),
                Exponent::Real(r) => Exponent::from_value(r - 1.0),
            };
            Mul(
                Box::new(Mul(
                    Box::new(Constant(exponent.as_f64())),
                    Box::new(Pow(u.clone(), reduced)),
                )),
                Box::new(diff_node(u, var)),
            )
        }
        Func(f, u) => {
            let du = Box::new(diff_node(u, var));
            match f {
                self::Func::Sin => Mul(Box::new(Func(self::Func::Cos, u.clone())), du),
                self::Func::Cos => Neg(Box::new(Mul(
                    Box::new(Func(self::Func::Sin, u.clone())),
                    du,
                ))),
                self::Func::Exp => Mul(Box::new(Func(self::Func::Exp, u.clone())), du),
                self::Func::Log => Div(du, u.clone()),
                self::Func::Sqrt => Div(
                    du,
                    Box::new(Mul(
                        Box::new(Constant(2.0)),
                        Box::new(Func(self::Func::Sqrt, u.clone())),
                    )),
                ),
                self::Func::Abs => Mul(Box::new(Func(self::Func::Sign, u.clone())), du),
                self::Func::Sign => Constant(0.0),
            }
        }
    }
}

fn as_constant(node: &Node) -> Option<f64> {
    match node {
        Node::Constant(c) => Some(*c),
        _ => None,
    }
}

/// Constant folding. Combines constant subtrees and eliminates the additive
/// and multiplicative identities; no other rewriting.
pub(crate) fn fold(node: Node) -> Node {
    use Node::*;
    match node {
        Constant(_) | Variable(_) => node,
        Neg(u) => {
            let u = fold(*u);
            match as_constant(&u) {
                Some(c) => Constant(-c),
                None => Neg(Box::new(u)),
            }
        }
        Add(a, b) => {
            let a = fold(*a);
            let b = fold(*b);
            match (as_constant(&a), as_constant(&b)) {
                (Some(x), Some(y)) => Constant(x + y),
                (Some(0.0), None) => b,
                (None, Some(0.0)) => a,
                _ => Add(Box::new(a), Box::new(b)),
            }
        }
        Sub(a, b) => {
            let a = fold(*a);
            let b = fold(*b);
            match (as_constant(&a), as_constant(&b)) {
                (Some(x), Some(y)) => Constant(x - y),
                (None, Some(0.0)) => a,
                (Some(0.0), None) => Neg(Box::new(b)),
                _ => Sub(Box::new(a), Box::new(b)),
            }
        }
        Mul(a, b) => {
            let a = fold(*a);
            let b = fold(*b);
            match (as_constant(&a), as_constant(&b)) {
                (Some(x), Some(y)) => Constant(x * y),
                (Some(0.0), None) | (None, Some(0.0)) => Constant(0.0),
                (Some(1.0), None) => b,
                (None, Some(1.0)) => a,
                _ => Mul(Box::new(a), Box::new(b)),
            }
        }
        Div(a, b) => {
            let a = fold(*a);
            let b = fold(*b);
            match (as_constant(&a), as_constant(&b)) {
                (Some(x), Some(y)) if y != 0.0 => Constant(x / y),
                (None, Some(1.0)) => a,
                _ => Div(Box::new(a), Box::new(b)),
            }
        }
        Pow(u, exponent) => {
            let u = fold(*u);
            // Integral real exponents normalize to the integer form.
            let exponent = match exponent {
                Exponent::Real(r) => Exponent::from_value(r),
                int => int,
            };
            match exponent {
                Exponent::Int(0) => Constant(1.0),
                Exponent::Int(1) => u,
                Exponent::Int(n) => match as_constant(&u) {
                    Some(c) => match pow_int(c, n) {
                        Ok(v) => Constant(v),
                        Err(_) => Pow(Box::new(u), exponent),
                    },
                    None => Pow(Box::new(u), exponent),
                },
                Exponent::Real(r) => match as_constant(&u) {
                    Some(c) if c > 0.0 => Constant(c.powf(r)),
                    _ => Pow(Box::new(u), exponent),
                },
            }
        }
        Func(f, u) => {
            let u = fold(*u);
            match as_constant(&u) {
                Some(c) => match apply_func(f, c) {
                    Ok(v) => Constant(v),
                    Err(_) => Func(f, Box::new(u)),
                },
                None => Func(f, Box::new(u)),
            }
        }
    }
}

// Printing uses the parse grammar, with parentheses inserted per precedence
// so that `parse(print(e))` recovers the folded tree.
const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn write_node(node: &Node, f: &mut std::fmt::Formatter<'_>, parent: u8) -> std::fmt::Result {
    let prec = match node {
        // Negative literals print with a leading `-` and bind like a negation.
        Node::Constant(c) if c.is_sign_negative() => PREC_NEG,
        Node::Constant(_) | Node::Variable(_) | Node::Func(..) => PREC_ATOM,
        Node::Pow(..) => PREC_POW,
        Node::Neg(_) => PREC_NEG,
        Node::Mul(..) | Node::Div(..) => PREC_MUL,
        Node::Add(..) | Node::Sub(..) => PREC_ADD,
    };
    let parens = prec < parent;
    if parens {
        write!(f, "(")?;
    }
    match node {
        Node::Constant(c) => write!(f, "{c}")?,
        Node::Variable(i) => write!(f, "x{i}")?,
        Node::Neg(u) => {
            write!(f, "-")?;
            write_node(u, f, PREC_NEG)?;
        }
        Node::Add(a, b) => {
            write_node(a, f, PREC_ADD)?;
            write!(f, " + ")?;
            write_node(b, f, PREC_ADD + 1)?;
        }
        Node::Sub(a, b) => {
            write_node(a, f, PREC_ADD)?;
            write!(f, " - ")?;
            write_node(b, f, PREC_ADD + 1)?;
        }
        Node::Mul(a, b) => {
            write_node(a, f, PREC_MUL)?;
            write!(f, "*")?;
            write_node(b, f, PREC_MUL + 1)?;
        }
        Node::Div(a, b) => {
            write_node(a, f, PREC_MUL)?;
            write!(f, "/")?;
            write_node(b, f, PREC_MUL + 1)?;
        }
        Node::Pow(base, exponent) => {
            write_node(base, f, PREC_ATOM)?;
            match exponent {
                Exponent::Int(n) => write!(f, "^{n}")?,
                Exponent::Real(r) => {
                    if *r < 0.0 {
                        write!(f, "^-{}", -r)?
                    } else {
                        write!(f, "^{r}")?
                    }
                }
            }
        }
        Node::Func(func, u) => {
            write!(f, "{}(", func.name())?;
            write_node(u, f, 0)?;
            write!(f, ")")?;
        }
    }
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

impl std::fmt::Display for Expression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write_node(&self.node, f, 0)
    }
}

#[cfg(test)]
mod tests;
