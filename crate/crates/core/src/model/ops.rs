//! Differential and matrix operators on expression fields.

use crate::expr::{EvalError, Expression};
use nalgebra::DMatrix;

/// Jacobian of a family of fields: entry `(l, i)` is `d_i F^l`.
pub fn jacobian(fields: &[Expression]) -> Vec<Vec<Expression>> {
    let dim = fields[0].dim();
    fields
        .iter()
        .map(|f| (0..dim).map(|i| f.differentiate(i)).collect())
        .collect()
}

/// Directional derivative `Y(f) = Y^k d_k f` of a scalar field along a
/// vector field.
pub fn directional_derivative(y: &[Expression], f: &Expression) -> Expression {
    let dim = f.dim();
    assert_eq!(y.len(), dim, "vector field length must match dimension");
    let mut acc = Expression::zero(dim);
    for (k, yk) in y.iter().enumerate() {
        acc = &acc + &(yk * &f.differentiate(k));
    }
    acc
}

/// Componentwise directional derivative `Y(M)` of a matrix field.
pub fn matrix_directional_derivative(
    y: &[Expression],
    m: &[Vec<Expression>],
) -> Vec<Vec<Expression>> {
    m.iter()
        .map(|row| row.iter().map(|e| directional_derivative(y, e)).collect())
        .collect()
}

/// The mixed bracket of a vector field `A` with a matrix field `B`:
/// `[A,B]^i_j = A^k d_k(B^i_j) - B^k_j d_k(A^i)`.
///
/// For a single-column `B` this is the Lie bracket of vector fields.
pub fn mixed_bracket(a: &[Expression], b: &[Vec<Expression>]) -> Vec<Vec<Expression>> {
    let n = a.len();
    assert_eq!(b.len(), n, "matrix field must have {n} rows");
    let cols = b[0].len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(cols);
        for j in 0..cols {
            let first = directional_derivative(a, &b[i][j]);
            let mut second = Expression::zero(a[0].dim());
            for k in 0..n {
                second = &second + &(&b[k][j] * &a[i].differentiate(k));
            }
            row.push(&first - &second);
        }
        out.push(row);
    }
    out
}

/// Lie bracket `[A,B]` of two vector fields.
pub fn lie_bracket(a: &[Expression], b: &[Expression]) -> Vec<Expression> {
    let cols: Vec<Vec<Expression>> = b.iter().map(|e| vec![e.clone()]).collect();
    mixed_bracket(a, &cols).into_iter().map(|mut row| row.pop().unwrap()).collect()
}

pub fn mat_mul(a: &[Vec<Expression>], b: &[Vec<Expression>]) -> Vec<Vec<Expression>> {
    let inner = b.len();
    assert!(a.iter().all(|row| row.len() == inner), "matrix shapes incompatible");
    let cols = b[0].len();
    let dim = a[0][0].dim();
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| {
                    let mut acc = Expression::zero(dim);
                    for (k, item) in row.iter().enumerate() {
                        acc = &acc + &(item * &b[k][j]);
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub fn mat_transpose(a: &[Vec<Expression>]) -> Vec<Vec<Expression>> {
    let rows = a.len();
    let cols = a[0].len();
    (0..cols).map(|j| (0..rows).map(|i| a[i][j].clone()).collect()).collect()
}

pub fn mat_add(a: &[Vec<Expression>], b: &[Vec<Expression>]) -> Vec<Vec<Expression>> {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect())
        .collect()
}

pub fn mat_sub(a: &[Vec<Expression>], b: &[Vec<Expression>]) -> Vec<Vec<Expression>> {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x - y).collect())
        .collect()
}

pub fn mat_scale(s: &Expression, a: &[Vec<Expression>]) -> Vec<Vec<Expression>> {
    a.iter().map(|row| row.iter().map(|x| s * x).collect()).collect()
}

/// Matrix commutator `{A,B} = A B - B A`.
pub fn mat_commutator(a: &[Vec<Expression>], b: &[Vec<Expression>]) -> Vec<Vec<Expression>> {
    mat_sub(&mat_mul(a, b), &mat_mul(b, a))
}

/// Evaluates a vector of expressions at a point.
pub fn evaluate_vector(fields: &[Expression], p: &[f64]) -> Result<Vec<f64>, EvalError> {
    fields.iter().map(|e| e.evaluate(p)).collect()
}

/// Evaluates a matrix of expressions at a point.
pub fn evaluate_matrix(m: &[Vec<Expression>], p: &[f64]) -> Result<DMatrix<f64>, EvalError> {
    let rows = m.len();
    let cols = m[0].len();
    let mut out = DMatrix::<f64>::zeros(rows, cols);
    for (i, row) in m.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            out[(i, j)] = e.evaluate(p)?;
        }
    }
    Ok(out)
}
