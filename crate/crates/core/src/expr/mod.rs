//! Minimal computer-algebra core: immutable symbolic expressions over a
//! fixed number of state variables, with parsing, printing, symbolic
//! differentiation, pointwise evaluation, and a sampling-based zero test.
//!
//! There is no canonical simplifier. Two expressions are considered equal
//! when their difference passes [`Expression::is_zero`] on a [`Domain`] —
//! a probabilistic identity test at deterministic low-discrepancy points.
//! Construction applies only light local rewrites (constant folding,
//! `0*e -> 0`, `e+0 -> e`, `1*e -> e`, and the like) so that repeated
//! differentiation keeps trees bounded.

mod domain;
mod parse;

pub use domain::{Domain, DomainError};
pub use parse::ParseError;

use num::rational::Rational64;
use num::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Zero};
use std::fmt;
use std::sync::Arc;

/// Relative tolerance of the sampling zero test.
pub const EPS_ZERO: f64 = 1e-9;
/// Number of sample points used by the zero test.
pub const N_ZERO_POINTS: usize = 64;

/// A numeric literal: exact rational when possible, IEEE double otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scalar {
    Rational(Rational64),
    Float(f64),
}

impl Scalar {
    pub fn integer(k: i64) -> Scalar {
        Scalar::Rational(Rational64::from_integer(k))
    }

    pub fn rational(num: i64, den: i64) -> Scalar {
        Scalar::Rational(Rational64::new(num, den))
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Scalar::Rational(r) => *r.numer() as f64 / *r.denom() as f64,
            Scalar::Float(f) => f,
        }
    }

    fn is_zero(self) -> bool {
        match self {
            Scalar::Rational(r) => r.is_zero(),
            Scalar::Float(f) => f == 0.0,
        }
    }

    fn is_one(self) -> bool {
        match self {
            Scalar::Rational(r) => r == Rational64::from_integer(1),
            Scalar::Float(f) => f == 1.0,
        }
    }

    /// Exact rational arithmetic when both sides are rational and the
    /// result fits in `i64`; falls back to floating point otherwise.
    fn combine(self, other: Scalar, op: BinOp) -> Option<Scalar> {
        if let (Scalar::Rational(a), Scalar::Rational(b)) = (self, other) {
            let exact = match op {
                BinOp::Add => a.checked_add(&b),
                BinOp::Sub => a.checked_sub(&b),
                BinOp::Mul => a.checked_mul(&b),
                BinOp::Div => {
                    if b.is_zero() {
                        return None;
                    }
                    a.checked_div(&b)
                }
            };
            if let Some(r) = exact {
                return Some(Scalar::Rational(r));
            }
        }
        let (a, b) = (self.to_f64(), other.to_f64());
        let v = match op {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => {
                if b == 0.0 {
                    return None;
                }
                a / b
            }
        };
        v.is_finite().then_some(Scalar::Float(v))
    }

    fn neg(self) -> Scalar {
        match self {
            Scalar::Rational(r) => Scalar::Rational(-r),
            Scalar::Float(f) => Scalar::Float(-f),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, PartialEq)]
enum Node {
    Num(Scalar),
    Var(usize),
    Unary(UnaryOp, Arc<Node>),
    Bin(BinOp, Arc<Node>, Arc<Node>),
    /// Power with a constant rational exponent; general `f^g` is excluded.
    Pow(Arc<Node>, Rational64),
}

/// Evaluation failure: the point lies outside the definable set of the
/// expression.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of negative value {0}")]
    SqrtNegative(f64),
    #[error("logarithm of non-positive value {0}")]
    LogNonPositive(f64),
    #[error("fractional power of negative base {0}")]
    PowNegativeBase(f64),
    #[error("zero raised to a negative power")]
    ZeroToNegativePower,
    #[error("result is not finite")]
    NotFinite,
    #[error("point has dimension {got}, expression expects {want}")]
    DimensionMismatch { got: usize, want: usize },
}

/// Failure of the sampling zero test.
#[derive(Clone, Debug, thiserror::Error)]
pub enum ZeroTestError {
    #[error("expression undefined at all {0} sample points; zero test undecidable")]
    AllPointsUndefined(usize),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Outcome of the sampling zero test, with the worst observed magnitudes.
#[derive(Clone, Copy, Debug)]
pub struct ZeroCheck {
    pub verdict: bool,
    /// Largest |value| over the sample points where evaluation succeeded.
    pub worst_abs: f64,
    /// Largest |value| / (1 + scale), the quantity compared against
    /// [`EPS_ZERO`].
    pub worst_rel: f64,
    /// Number of sample points where the expression was defined.
    pub points_used: usize,
}

/// An immutable symbolic expression over `dim` state variables.
///
/// Cheap to clone (the tree is shared). All operations are pure, so values
/// may be used freely from multiple threads.
#[derive(Clone, Debug)]
pub struct Expression {
    dim: usize,
    node: Arc<Node>,
}

impl PartialEq for Expression {
    /// Structural equality only. Semantic equality is decided by
    /// [`Expression::is_zero`] applied to a difference.
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.node == other.node
    }
}

// ---------------------------------------------------------------------------
// smart constructors: constant folding and the light local rewrites
// ---------------------------------------------------------------------------

fn num_node(s: Scalar) -> Arc<Node> {
    Arc::new(Node::Num(s))
}

fn as_num(n: &Node) -> Option<Scalar> {
    match n {
        Node::Num(s) => Some(*s),
        _ => None,
    }
}

fn make_bin(op: BinOp, a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
    if let (Some(x), Some(y)) = (as_num(&a), as_num(&b)) {
        // Keep the node unevaluated when folding would hide an evaluation
        // error (division by zero) or overflow.
        if let Some(v) = x.combine(y, op) {
            return num_node(v);
        }
    }
    match op {
        BinOp::Add => {
            if as_num(&a).is_some_and(Scalar::is_zero) {
                return b;
            }
            if as_num(&b).is_some_and(Scalar::is_zero) {
                return a;
            }
        }
        BinOp::Sub => {
            if as_num(&b).is_some_and(Scalar::is_zero) {
                return a;
            }
            if as_num(&a).is_some_and(Scalar::is_zero) {
                return make_unary(UnaryOp::Neg, b);
            }
        }
        BinOp::Mul => {
            if let Some(x) = as_num(&a) {
                if x.is_zero() {
                    return a;
                }
                if x.is_one() {
                    return b;
                }
            }
            if let Some(y) = as_num(&b) {
                if y.is_zero() {
                    return b;
                }
                if y.is_one() {
                    return a;
                }
            }
        }
        BinOp::Div => {
            if as_num(&b).is_some_and(Scalar::is_one) {
                return a;
            }
            if as_num(&a).is_some_and(Scalar::is_zero)
                && !as_num(&b).is_some_and(Scalar::is_zero)
            {
                return a;
            }
        }
    }
    Arc::new(Node::Bin(op, a, b))
}

fn make_unary(op: UnaryOp, a: Arc<Node>) -> Arc<Node> {
    if let Some(x) = as_num(&a) {
        match op {
            UnaryOp::Neg => return num_node(x.neg()),
            UnaryOp::Exp => {
                let v = x.to_f64().exp();
                if v.is_finite() {
                    return num_node(Scalar::Float(v));
                }
            }
            UnaryOp::Sin => return num_node(Scalar::Float(x.to_f64().sin())),
            UnaryOp::Cos => return num_node(Scalar::Float(x.to_f64().cos())),
            UnaryOp::Sqrt => {
                let v = x.to_f64();
                if v >= 0.0 {
                    return num_node(Scalar::Float(v.sqrt()));
                }
            }
            UnaryOp::Log => {
                let v = x.to_f64();
                if v > 0.0 {
                    return num_node(Scalar::Float(v.ln()));
                }
            }
        }
    }
    if op == UnaryOp::Neg {
        if let Node::Unary(UnaryOp::Neg, inner) = &*a {
            return inner.clone();
        }
    }
    Arc::new(Node::Unary(op, a))
}

fn make_pow(base: Arc<Node>, exp: Rational64) -> Arc<Node> {
    if exp.is_zero() {
        return num_node(Scalar::integer(1));
    }
    if exp == Rational64::from_integer(1) {
        return base;
    }
    if let Some(x) = as_num(&base) {
        if let Some(v) = fold_pow(x, exp) {
            return num_node(v);
        }
    }
    Arc::new(Node::Pow(base, exp))
}

fn fold_pow(base: Scalar, exp: Rational64) -> Option<Scalar> {
    if exp.is_integer() {
        let e = *exp.numer();
        if let Scalar::Rational(r) = base {
            if let Ok(k) = u32::try_from(e.unsigned_abs()) {
                let p = r.numer().checked_pow(k)?;
                let q = r.denom().checked_pow(k)?;
                if e >= 0 {
                    return Some(Scalar::Rational(Rational64::new(p, q)));
                }
                if p != 0 {
                    return Some(Scalar::Rational(Rational64::new(q, p)));
                }
                return None; // 0^negative: keep the node, error at eval
            }
        }
        let b = base.to_f64();
        if b == 0.0 && e < 0 {
            return None;
        }
        let v = powi64(b, e);
        return v.is_finite().then_some(Scalar::Float(v));
    }
    let b = base.to_f64();
    if b < 0.0 || (b == 0.0 && exp < Rational64::zero()) {
        return None;
    }
    let v = b.powf(rational_to_f64(exp));
    v.is_finite().then_some(Scalar::Float(v))
}

fn rational_to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn powi64(base: f64, exp: i64) -> f64 {
    match i32::try_from(exp) {
        Ok(e) => base.powi(e),
        Err(_) => base.powf(exp as f64),
    }
}

// ---------------------------------------------------------------------------
// Expression API
// ---------------------------------------------------------------------------

impl Expression {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Parses `text` against the expression grammar with `dim` variables.
    pub fn parse(text: &str, dim: usize) -> Result<Expression, ParseError> {
        parse::parse(text, dim)
    }

    /// The state variable `x{i+1}`.
    ///
    /// Panics if `i >= dim`; variable indices are a structural invariant.
    pub fn variable(i: usize, dim: usize) -> Expression {
        assert!(i < dim, "variable index {i} out of range for dimension {dim}");
        Expression { dim, node: Arc::new(Node::Var(i)) }
    }

    pub fn constant(value: Scalar, dim: usize) -> Expression {
        Expression { dim, node: num_node(value) }
    }

    pub fn integer(k: i64, dim: usize) -> Expression {
        Self::constant(Scalar::integer(k), dim)
    }

    pub fn rational(num: i64, den: i64, dim: usize) -> Expression {
        Self::constant(Scalar::rational(num, den), dim)
    }

    pub fn number(v: f64, dim: usize) -> Expression {
        Self::constant(Scalar::Float(v), dim)
    }

    pub fn zero(dim: usize) -> Expression {
        Self::integer(0, dim)
    }

    pub fn one(dim: usize) -> Expression {
        Self::integer(1, dim)
    }

    /// True when the node is exactly the literal constant 0.
    pub fn is_literal_zero(&self) -> bool {
        as_num(&self.node).is_some_and(Scalar::is_zero)
    }

    /// True when the expression is structurally the variable `x{i+1}`.
    pub fn is_variable(&self, i: usize) -> bool {
        matches!(&*self.node, Node::Var(j) if *j == i)
    }

    fn wrap(&self, node: Arc<Node>) -> Expression {
        Expression { dim: self.dim, node }
    }

    pub fn neg(&self) -> Expression {
        self.wrap(make_unary(UnaryOp::Neg, self.node.clone()))
    }

    pub fn sqrt(&self) -> Expression {
        self.wrap(make_unary(UnaryOp::Sqrt, self.node.clone()))
    }

    pub fn exp(&self) -> Expression {
        self.wrap(make_unary(UnaryOp::Exp, self.node.clone()))
    }

    pub fn log(&self) -> Expression {
        self.wrap(make_unary(UnaryOp::Log, self.node.clone()))
    }

    pub fn sin(&self) -> Expression {
        self.wrap(make_unary(UnaryOp::Sin, self.node.clone()))
    }

    pub fn cos(&self) -> Expression {
        self.wrap(make_unary(UnaryOp::Cos, self.node.clone()))
    }

    pub fn powi(&self, k: i64) -> Expression {
        self.wrap(make_pow(self.node.clone(), Rational64::from_integer(k)))
    }

    pub fn pow_rational(&self, num: i64, den: i64) -> Expression {
        self.wrap(make_pow(self.node.clone(), Rational64::new(num, den)))
    }

    /// Reciprocal `1/self`.
    pub fn recip(&self) -> Expression {
        Expression::one(self.dim) / self
    }

    fn bin(op: BinOp, a: &Expression, b: &Expression) -> Expression {
        assert_eq!(
            a.dim, b.dim,
            "expression dimensions differ: {} vs {}",
            a.dim, b.dim
        );
        Expression { dim: a.dim, node: make_bin(op, a.node.clone(), b.node.clone()) }
    }

    /// Symbolic partial derivative with respect to variable `i`.
    ///
    /// Panics if `i >= dim`. The result is rebuilt through the light local
    /// rewrites so repeated application keeps trees bounded.
    pub fn differentiate(&self, i: usize) -> Expression {
        assert!(i < self.dim, "derivative index {i} out of range for dimension {}", self.dim);
        self.wrap(diff_node(&self.node, i))
    }

    /// Rebuilds the tree bottom-up through the local rewrites.
    pub fn simplified(&self) -> Expression {
        self.wrap(simplify_node(&self.node))
    }

    /// Substitutes `subs[i]` for variable `i`. All replacement expressions
    /// must share one dimension, which becomes the result dimension.
    pub fn substitute(&self, subs: &[Expression]) -> Expression {
        assert_eq!(subs.len(), self.dim, "substitution arity mismatch");
        let out_dim = subs[0].dim;
        for s in subs {
            assert_eq!(s.dim, out_dim, "substitution dimensions differ");
        }
        Expression { dim: out_dim, node: subst_node(&self.node, subs) }
    }

    /// Evaluates at `point`, failing where any subterm is undefined.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, EvalError> {
        self.evaluate_scaled(point).map(|(v, _)| v)
    }

    /// Evaluates at `point`, also returning the largest absolute value
    /// attained by any subterm (the scale used by the relative zero test).
    pub fn evaluate_scaled(&self, point: &[f64]) -> Result<(f64, f64), EvalError> {
        if point.len() != self.dim {
            return Err(EvalError::DimensionMismatch { got: point.len(), want: self.dim });
        }
        let mut scale = 0.0f64;
        let v = eval_node(&self.node, point, &mut scale)?;
        Ok((v, scale))
    }

    /// Sampling zero test at [`N_ZERO_POINTS`] deterministic
    /// low-discrepancy points of `domain`: the expression counts as zero
    /// when `|value| <= EPS_ZERO * (1 + scale)` at every point where it is
    /// defined. Points where evaluation fails are skipped; if all fail the
    /// test is undecidable.
    pub fn is_zero(&self, domain: &Domain) -> Result<bool, ZeroTestError> {
        self.zero_check(domain).map(|c| c.verdict)
    }

    /// Like [`Expression::is_zero`] but returns the worst sampled
    /// magnitudes for reporting.
    pub fn zero_check(&self, domain: &Domain) -> Result<ZeroCheck, ZeroTestError> {
        let points = domain.sample_points(N_ZERO_POINTS)?;
        let mut check = ZeroCheck {
            verdict: true,
            worst_abs: 0.0,
            worst_rel: 0.0,
            points_used: 0,
        };
        for p in &points {
            let Ok((v, scale)) = self.evaluate_scaled(p) else {
                continue;
            };
            check.points_used += 1;
            let rel = v.abs() / (1.0 + scale.abs());
            if v.abs() > check.worst_abs {
                check.worst_abs = v.abs();
            }
            if rel > check.worst_rel {
                check.worst_rel = rel;
            }
        }
        if check.points_used == 0 {
            return Err(ZeroTestError::AllPointsUndefined(points.len()));
        }
        check.verdict = check.worst_rel <= EPS_ZERO;
        Ok(check)
    }
}

fn diff_node(node: &Node, i: usize) -> Arc<Node> {
    match node {
        Node::Num(_) => num_node(Scalar::integer(0)),
        Node::Var(j) => num_node(Scalar::integer(if *j == i { 1 } else { 0 })),
        Node::Unary(op, u) => {
            let du = diff_node(u, i);
            match op {
                UnaryOp::Neg => make_unary(UnaryOp::Neg, du),
                UnaryOp::Sqrt => {
                    // du / (2 sqrt u)
                    let two_sqrt = make_bin(
                        BinOp::Mul,
                        num_node(Scalar::integer(2)),
                        make_unary(UnaryOp::Sqrt, u.clone()),
                    );
                    make_bin(BinOp::Div, du, two_sqrt)
                }
                UnaryOp::Exp => make_bin(BinOp::Mul, make_unary(UnaryOp::Exp, u.clone()), du),
                UnaryOp::Log => make_bin(BinOp::Div, du, u.clone()),
                UnaryOp::Sin => {
                    make_bin(BinOp::Mul, make_unary(UnaryOp::Cos, u.clone()), du)
                }
                UnaryOp::Cos => make_unary(
                    UnaryOp::Neg,
                    make_bin(BinOp::Mul, make_unary(UnaryOp::Sin, u.clone()), du),
                ),
            }
        }
        Node::Bin(op, a, b) => {
            let da = diff_node(a, i);
            let db = diff_node(b, i);
            match op {
                BinOp::Add => make_bin(BinOp::Add, da, db),
                BinOp::Sub => make_bin(BinOp::Sub, da, db),
                BinOp::Mul => make_bin(
                    BinOp::Add,
                    make_bin(BinOp::Mul, da, b.clone()),
                    make_bin(BinOp::Mul, a.clone(), db),
                ),
                BinOp::Div => {
                    // (da*b - a*db) / b^2
                    let numer = make_bin(
                        BinOp::Sub,
                        make_bin(BinOp::Mul, da, b.clone()),
                        make_bin(BinOp::Mul, a.clone(), db),
                    );
                    let denom = make_pow(b.clone(), Rational64::from_integer(2));
                    make_bin(BinOp::Div, numer, denom)
                }
            }
        }
        Node::Pow(base, exp) => {
            // exp * base^(exp-1) * d(base)
            let db = diff_node(base, i);
            let coeff = num_node(Scalar::Rational(*exp));
            let lowered = make_pow(base.clone(), exp - Rational64::from_integer(1));
            make_bin(BinOp::Mul, make_bin(BinOp::Mul, coeff, lowered), db)
        }
    }
}

fn simplify_node(node: &Node) -> Arc<Node> {
    match node {
        Node::Num(s) => num_node(*s),
        Node::Var(j) => Arc::new(Node::Var(*j)),
        Node::Unary(op, u) => make_unary(*op, simplify_node(u)),
        Node::Bin(op, a, b) => make_bin(*op, simplify_node(a), simplify_node(b)),
        Node::Pow(base, exp) => make_pow(simplify_node(base), *exp),
    }
}

fn subst_node(node: &Node, subs: &[Expression]) -> Arc<Node> {
    match node {
        Node::Num(s) => num_node(*s),
        Node::Var(j) => subs[*j].node.clone(),
        Node::Unary(op, u) => make_unary(*op, subst_node(u, subs)),
        Node::Bin(op, a, b) => make_bin(*op, subst_node(a, subs), subst_node(b, subs)),
        Node::Pow(base, exp) => make_pow(subst_node(base, subs), *exp),
    }
}

fn eval_node(node: &Node, point: &[f64], scale: &mut f64) -> Result<f64, EvalError> {
    let v = match node {
        Node::Num(s) => s.to_f64(),
        Node::Var(j) => point[*j],
        Node::Unary(op, u) => {
            let x = eval_node(u, point, scale)?;
            match op {
                UnaryOp::Neg => -x,
                UnaryOp::Sqrt => {
                    if x < 0.0 {
                        return Err(EvalError::SqrtNegative(x));
                    }
                    x.sqrt()
                }
                UnaryOp::Exp => x.exp(),
                UnaryOp::Log => {
                    if x <= 0.0 {
                        return Err(EvalError::LogNonPositive(x));
                    }
                    x.ln()
                }
                UnaryOp::Sin => x.sin(),
                UnaryOp::Cos => x.cos(),
            }
        }
        Node::Bin(op, a, b) => {
            let x = eval_node(a, point, scale)?;
            let y = eval_node(b, point, scale)?;
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    x / y
                }
            }
        }
        Node::Pow(base, exp) => {
            let x = eval_node(base, point, scale)?;
            if exp.is_integer() {
                let e = *exp.numer();
                if x == 0.0 && e < 0 {
                    return Err(EvalError::ZeroToNegativePower);
                }
                powi64(x, e)
            } else {
                if x < 0.0 {
                    return Err(EvalError::PowNegativeBase(x));
                }
                if x == 0.0 && *exp < Rational64::zero() {
                    return Err(EvalError::ZeroToNegativePower);
                }
                x.powf(rational_to_f64(*exp))
            }
        }
    };
    if !v.is_finite() {
        return Err(EvalError::NotFinite);
    }
    if v.abs() > *scale {
        *scale = v.abs();
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// operators
// ---------------------------------------------------------------------------

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $op:expr) => {
        impl std::ops::$trait for &Expression {
            type Output = Expression;
            fn $method(self, rhs: &Expression) -> Expression {
                Expression::bin($op, self, rhs)
            }
        }
        impl std::ops::$trait for Expression {
            type Output = Expression;
            fn $method(self, rhs: Expression) -> Expression {
                Expression::bin($op, &self, &rhs)
            }
        }
        impl std::ops::$trait<&Expression> for Expression {
            type Output = Expression;
            fn $method(self, rhs: &Expression) -> Expression {
                Expression::bin($op, &self, rhs)
            }
        }
        impl std::ops::$trait<Expression> for &Expression {
            type Output = Expression;
            fn $method(self, rhs: Expression) -> Expression {
                Expression::bin($op, self, &rhs)
            }
        }
    };
}

impl_binop!(Add, add, BinOp::Add);
impl_binop!(Sub, sub, BinOp::Sub);
impl_binop!(Mul, mul, BinOp::Mul);
impl_binop!(Div, div, BinOp::Div);

impl std::ops::Neg for &Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        Expression::neg(self)
    }
}

impl std::ops::Neg for Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        Expression::neg(&self)
    }
}

// ---------------------------------------------------------------------------
// printing
// ---------------------------------------------------------------------------

// Precedence levels used by the printer: 1 additive, 2 multiplicative,
// 3 power, 4 atoms. Unary minus and negative literals get level 0 so they
// are always parenthesized inside a binary context; the grammar only
// admits a leading sign at expression level.
fn prec(node: &Node) -> u8 {
    match node {
        Node::Num(s) if s.to_f64() < 0.0 => 0,
        Node::Num(Scalar::Rational(r)) if !r.is_integer() => 2,
        Node::Num(_) | Node::Var(_) => 4,
        Node::Unary(UnaryOp::Neg, _) => 0,
        Node::Unary(..) => 4,
        Node::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Node::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Node::Pow(..) => 3,
    }
}

fn fmt_node(node: &Node, min_prec: u8, out: &mut fmt::Formatter<'_>) -> fmt::Result {
    let p = prec(node);
    let parens = p < min_prec;
    if parens {
        write!(out, "(")?;
    }
    match node {
        Node::Num(Scalar::Rational(r)) => {
            if r.is_integer() {
                write!(out, "{}", r.numer())?;
            } else {
                write!(out, "{}/{}", r.numer(), r.denom())?;
            }
        }
        Node::Num(Scalar::Float(f)) => write!(out, "{f:?}")?,
        Node::Var(j) => write!(out, "x{}", j + 1)?,
        Node::Unary(UnaryOp::Neg, u) => {
            write!(out, "-")?;
            fmt_node(u, 2, out)?;
        }
        Node::Unary(op, u) => {
            write!(out, "{}(", op.name())?;
            fmt_node(u, 0, out)?;
            write!(out, ")")?;
        }
        Node::Bin(op, a, b) => {
            let (sym, lp, rp) = match op {
                BinOp::Add => ("+", 1, 1),
                BinOp::Sub => ("-", 1, 2),
                BinOp::Mul => ("*", 2, 2),
                BinOp::Div => ("/", 2, 3),
            };
            fmt_node(a, lp, out)?;
            write!(out, "{sym}")?;
            fmt_node(b, rp, out)?;
        }
        Node::Pow(base, exp) => {
            fmt_node(base, 4, out)?;
            if exp.is_integer() && *exp.numer() >= 0 {
                write!(out, "^{}", exp.numer())?;
            } else if exp.is_integer() {
                write!(out, "^({})", exp.numer())?;
            } else {
                write!(out, "^({}/{})", exp.numer(), exp.denom())?;
            }
        }
    }
    if parens {
        write!(out, ")")?;
    }
    Ok(())
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_node(&self.node, 0, f)
    }
}
