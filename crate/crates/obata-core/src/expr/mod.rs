//! Scalar expression trees over chart coordinates.
//!
//! Expressions are what model files and the CLI accept for warping
//! functions, metric entries and candidate solution fields. They are closed
//! under `+ - * / ^`, unary negation and the function set below; evaluation
//! produces either a plain value or a second-order jet (value, gradient,
//! Hessian), which is what the curvature stack consumes.
//!
//! Coordinates are named `x0..x{dim-1}`; `t` is an alias for `x0`.

mod jet;
mod parse;

pub use jet::Jet2;
pub use parse::ParseError;

use std::fmt;

/// Byte range in the source text a node came from. `None` for nodes built
/// programmatically.
pub type Span = Option<(usize, usize)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Sinh,
    Cosh,
    Tanh,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Arcsin,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Sinh => "sinh",
            UnaryOp::Cosh => "cosh",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Exp => "exp",
            UnaryOp::Ln => "ln",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
            UnaryOp::Arcsin => "arcsin",
        }
    }

    pub fn from_name(name: &str) -> Option<UnaryOp> {
        Some(match name {
            "neg" => UnaryOp::Neg,
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "sinh" => UnaryOp::Sinh,
            "cosh" => UnaryOp::Cosh,
            "tanh" => UnaryOp::Tanh,
            "exp" => UnaryOp::Exp,
            "ln" => UnaryOp::Ln,
            "sqrt" => UnaryOp::Sqrt,
            "abs" => UnaryOp::Abs,
            "arcsin" => UnaryOp::Arcsin,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Debug)]
pub(crate) enum NodeKind {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub(crate) kind: NodeKind,
    pub(crate) span: Span,
}

/// Expression in `dim` chart coordinates.
#[derive(Clone, Debug)]
pub struct Expression {
    dim: usize,
    root: Node,
}

/// Evaluation failure: a function left its domain or an arithmetic step is
/// undefined at the point. Carries the source span when the node came from
/// parsed text.
#[derive(Clone, Debug, thiserror::Error)]
#[error("{}", self.describe())]
pub struct EvalError {
    pub what: String,
    pub span: Span,
}

impl EvalError {
    fn new(what: impl Into<String>, span: Span) -> Self {
        EvalError { what: what.into(), span }
    }

    fn describe(&self) -> String {
        match self.span {
            Some((a, b)) => format!("domain error at bytes {a}..{b}: {}", self.what),
            None => format!("domain error in built expression: {}", self.what),
        }
    }
}

impl Expression {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Parse `text` as an expression in `dim` coordinates.
    pub fn parse(text: &str, dim: usize) -> Result<Expression, ParseError> {
        parse::parse(text, dim)
    }

    pub fn constant(dim: usize, c: f64) -> Expression {
        assert!(c.is_finite(), "expression constants must be finite");
        Expression { dim, root: Node { kind: NodeKind::Const(c), span: None } }
    }

    pub fn var(dim: usize, index: usize) -> Expression {
        assert!(index < dim, "variable x{index} out of range for dim {dim}");
        Expression { dim, root: Node { kind: NodeKind::Var(index), span: None } }
    }

    pub fn apply(op: UnaryOp, e: Expression) -> Expression {
        Expression {
            dim: e.dim,
            root: Node { kind: NodeKind::Unary(op, Box::new(e.root)), span: None },
        }
    }

    pub fn binary(op: BinaryOp, a: Expression, b: Expression) -> Expression {
        assert_eq!(a.dim, b.dim, "operand dimension mismatch");
        Expression {
            dim: a.dim,
            root: Node {
                kind: NodeKind::Binary(op, Box::new(a.root), Box::new(b.root)),
                span: None,
            },
        }
    }

    pub fn neg(self) -> Expression {
        Expression::apply(UnaryOp::Neg, self)
    }

    pub fn sqrt(self) -> Expression {
        Expression::apply(UnaryOp::Sqrt, self)
    }

    pub fn pow_const(self, p: f64) -> Expression {
        let dim = self.dim;
        Expression::binary(BinaryOp::Pow, self, Expression::constant(dim, p))
    }

    /// `c * e`, folding the trivial coefficients so synthesized metric
    /// entries stay readable when serialized.
    pub fn scaled(c: f64, e: Expression) -> Expression {
        if c == 1.0 {
            e
        } else if c == -1.0 {
            e.neg()
        } else {
            let dim = e.dim;
            Expression::constant(dim, c) * e
        }
    }

    /// Re-index variables by `offset` into a larger coordinate set: `x_i`
    /// becomes `x_{i+offset}` and the expression dimension becomes
    /// `new_dim`. Used to lift fiber expressions into product coordinates.
    pub fn shift_vars(&self, offset: usize, new_dim: usize) -> Expression {
        fn go(node: &Node, offset: usize, new_dim: usize) -> Node {
            let kind = match &node.kind {
                NodeKind::Const(c) => NodeKind::Const(*c),
                NodeKind::Var(i) => {
                    assert!(i + offset < new_dim, "shifted variable out of range");
                    NodeKind::Var(i + offset)
                }
                NodeKind::Unary(op, a) => {
                    NodeKind::Unary(*op, Box::new(go(a, offset, new_dim)))
                }
                NodeKind::Binary(op, a, b) => NodeKind::Binary(
                    *op,
                    Box::new(go(a, offset, new_dim)),
                    Box::new(go(b, offset, new_dim)),
                ),
            };
            Node { kind, span: node.span }
        }
        Expression { dim: new_dim, root: go(&self.root, offset, new_dim) }
    }

    /// Evaluate to a plain value.
    pub fn eval_value(&self, x: &[f64]) -> Result<f64, EvalError> {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        eval_value_node(&self.root, x)
    }

    /// Evaluate to a second-order jet: value, gradient and symmetric
    /// Hessian with respect to the chart coordinates.
    pub fn eval_jet2(&self, x: &[f64]) -> Result<Jet2, EvalError> {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        eval_jet_node(&self.root, x, self.dim)
    }

    /// Canonical text form; `parse(print(e))` evaluates identically to `e`.
    pub fn print(&self) -> String {
        let mut s = String::new();
        write_node(&mut s, &self.root);
        s
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.print())
    }
}

impl std::ops::Add for Expression {
    type Output = Expression;
    fn add(self, rhs: Expression) -> Expression {
        Expression::binary(BinaryOp::Add, self, rhs)
    }
}

impl std::ops::Sub for Expression {
    type Output = Expression;
    fn sub(self, rhs: Expression) -> Expression {
        Expression::binary(BinaryOp::Sub, self, rhs)
    }
}

impl std::ops::Mul for Expression {
    type Output = Expression;
    fn mul(self, rhs: Expression) -> Expression {
        Expression::binary(BinaryOp::Mul, self, rhs)
    }
}

impl std::ops::Div for Expression {
    type Output = Expression;
    fn div(self, rhs: Expression) -> Expression {
        Expression::binary(BinaryOp::Div, self, rhs)
    }
}

fn eval_value_node(node: &Node, x: &[f64]) -> Result<f64, EvalError> {
    match &node.kind {
        NodeKind::Const(c) => Ok(*c),
        NodeKind::Var(i) => Ok(x[*i]),
        NodeKind::Unary(op, a) => {
            let v = eval_value_node(a, x)?;
            let r = match op {
                UnaryOp::Neg => -v,
                UnaryOp::Sin => v.sin(),
                UnaryOp::Cos => v.cos(),
                UnaryOp::Sinh => v.sinh(),
                UnaryOp::Cosh => v.cosh(),
                UnaryOp::Tanh => v.tanh(),
                UnaryOp::Exp => v.exp(),
                UnaryOp::Ln => {
                    if v <= 0.0 {
                        return Err(EvalError::new(format!("ln of {v}"), node.span));
                    }
                    v.ln()
                }
                UnaryOp::Sqrt => {
                    if v < 0.0 {
                        return Err(EvalError::new(format!("sqrt of {v}"), node.span));
                    }
                    v.sqrt()
                }
                UnaryOp::Abs => v.abs(),
                UnaryOp::Arcsin => {
                    if !(-1.0..=1.0).contains(&v) {
                        return Err(EvalError::new(format!("arcsin of {v}"), node.span));
                    }
                    v.asin()
                }
            };
            check_finite(r, op.name(), node.span)
        }
        NodeKind::Binary(op, a, b) => {
            let va = eval_value_node(a, x)?;
            let vb = eval_value_node(b, x)?;
            let r = match op {
                BinaryOp::Add => va + vb,
                BinaryOp::Sub => va - vb,
                BinaryOp::Mul => va * vb,
                BinaryOp::Div => {
                    if vb == 0.0 {
                        return Err(EvalError::new("division by zero", node.span));
                    }
                    va / vb
                }
                BinaryOp::Pow => {
                    if vb == vb.round() && vb.abs() <= MAX_INT_POW {
                        if va == 0.0 && vb < 0.0 {
                            return Err(EvalError::new(
                                "zero base with negative exponent",
                                node.span,
                            ));
                        }
                        va.powi(vb as i32)
                    } else if va > 0.0 {
                        va.powf(vb)
                    } else {
                        return Err(EvalError::new(
                            format!("{va}^{vb} with non-positive base and non-integer exponent"),
                            node.span,
                        ));
                    }
                }
            };
            check_finite(r, "arithmetic", node.span)
        }
    }
}

const MAX_INT_POW: f64 = 64.0;

fn check_finite(v: f64, what: &str, span: Span) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::new(format!("{what} produced a non-finite value"), span))
    }
}

fn eval_jet_node(node: &Node, x: &[f64], dim: usize) -> Result<Jet2, EvalError> {
    match &node.kind {
        NodeKind::Const(c) => Ok(Jet2::constant(dim, *c)),
        NodeKind::Var(i) => Ok(Jet2::coordinate(dim, *i, x[*i])),
        NodeKind::Unary(op, a) => {
            let j = eval_jet_node(a, x, dim)?;
            j.apply_unary(*op, node.span)
        }
        NodeKind::Binary(op, a, b) => {
            let ja = eval_jet_node(a, x, dim)?;
            let jb = eval_jet_node(b, x, dim)?;
            ja.apply_binary(*op, &jb, node.span)
        }
    }
}

// Printing uses the grammar's precedence levels: 1 add/sub, 2 mul/div,
// 3 unary minus, 4 pow (right-assoc), 5 atoms. A negative constant prints
// with a leading minus, so it carries the precedence of unary minus.
fn node_prec(node: &Node) -> u8 {
    match &node.kind {
        NodeKind::Const(c) => {
            if c.is_sign_negative() {
                3
            } else {
                5
            }
        }
        NodeKind::Var(_) => 5,
        NodeKind::Unary(UnaryOp::Neg, _) => 3,
        NodeKind::Unary(..) => 5,
        NodeKind::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
        NodeKind::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
        NodeKind::Binary(BinaryOp::Pow, ..) => 4,
    }
}

fn write_child(out: &mut String, child: &Node, min_prec: u8) {
    if node_prec(child) < min_prec {
        out.push('(');
        write_node(out, child);
        out.push(')');
    } else {
        write_node(out, child);
    }
}

fn write_node(out: &mut String, node: &Node) {
    match &node.kind {
        NodeKind::Const(c) => {
            out.push_str(&format!("{c}"));
        }
        NodeKind::Var(i) => {
            out.push_str(&format!("x{i}"));
        }
        NodeKind::Unary(UnaryOp::Neg, a) => {
            out.push('-');
            write_child(out, a, 3);
        }
        NodeKind::Unary(op, a) => {
            out.push_str(op.name());
            out.push('(');
            write_node(out, a);
            out.push(')');
        }
        NodeKind::Binary(op, a, b) => match op {
            BinaryOp::Add => {
                write_child(out, a, 1);
                out.push('+');
                write_child(out, b, 2);
            }
            BinaryOp::Sub => {
                write_child(out, a, 1);
                out.push('-');
                write_child(out, b, 2);
            }
            BinaryOp::Mul => {
                write_child(out, a, 2);
                out.push('*');
                write_child(out, b, 3);
            }
            BinaryOp::Div => {
                write_child(out, a, 2);
                out.push('/');
                write_child(out, b, 3);
            }
            BinaryOp::Pow => {
                write_child(out, a, 5);
                out.push('^');
                write_child(out, b, 3);
            }
        },
    }
}
