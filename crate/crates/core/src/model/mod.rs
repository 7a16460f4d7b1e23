//! Core model types: SDEs, finite stochastic transformations (a state
//! diffeomorphism, an SO(m)-valued rotation field, a positive time-change
//! density), infinitesimal transformations (vector field, antisymmetric
//! matrix field, scalar field), and the differential operators every
//! formula downstream consumes.

mod file;
mod ops;

pub use file::{DomainSpec, ModelFile, SymmetrySpec, TransformationSpec};
pub use ops::{
    directional_derivative, evaluate_matrix, evaluate_vector, jacobian, lie_bracket,
    mat_add, mat_commutator, mat_mul, mat_scale, mat_sub, mat_transpose,
    matrix_directional_derivative, mixed_bracket,
};

use crate::expr::{Domain, DomainError, EvalError, Expression, ZeroTestError, N_ZERO_POINTS};
use nalgebra::DMatrix;
use serde::Serialize;
use std::fmt;

/// Max-norm tolerance for `B^T B - I` at sampled points.
pub const ORTHOGONALITY_TOL: f64 = 1e-9;
/// Allowed deviation of `det B` from 1 at sampled points.
pub const DETERMINANT_TOL: f64 = 1e-6;
/// Eigenvalues of the diffusion quadratic form may dip this far below 0.
pub const PSD_EIGENVALUE_FLOOR: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    ZeroTest(#[from] ZeroTestError),
    #[error("evaluation failed at {point:?}: {source}")]
    Eval { point: Vec<f64>, source: EvalError },
    #[error("model file: {0}")]
    File(String),
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("invalid object: {0}")]
    Invalid(String),
    #[error("expression `{text}`: {source}")]
    Parse {
        text: String,
        source: crate::expr::ParseError,
    },
}

fn check_fields(fields: &[Expression], len: usize, dim: usize, what: &str) -> Result<(), ModelError> {
    if fields.len() != len {
        return Err(ModelError::Dimension(format!(
            "{what} has {} components, expected {len}",
            fields.len()
        )));
    }
    for f in fields {
        if f.dim() != dim {
            return Err(ModelError::Dimension(format!(
                "{what} component has dimension {}, expected {dim}",
                f.dim()
            )));
        }
    }
    Ok(())
}

fn check_matrix(
    mat: &[Vec<Expression>],
    rows: usize,
    cols: usize,
    dim: usize,
    what: &str,
) -> Result<(), ModelError> {
    if mat.len() != rows {
        return Err(ModelError::Dimension(format!("{what} has {} rows, expected {rows}", mat.len())));
    }
    for row in mat {
        check_fields(row, cols, dim, what)?;
    }
    Ok(())
}

/// An autonomous SDE `dX = mu(X) dt + sigma(X) dW` on a sampling domain,
/// with `n` state components and `m` driving Brownian components.
#[derive(Clone, Debug)]
pub struct Sde {
    n: usize,
    m: usize,
    pub mu: Vec<Expression>,
    pub sigma: Vec<Vec<Expression>>,
    pub domain: Domain,
}

impl Sde {
    pub fn new(
        n: usize,
        m: usize,
        mu: Vec<Expression>,
        sigma: Vec<Vec<Expression>>,
        domain: Domain,
    ) -> Result<Sde, ModelError> {
        check_fields(&mu, n, n, "drift")?;
        check_matrix(&sigma, n, m, n, "diffusion")?;
        if domain.dim() != n {
            return Err(ModelError::Dimension(format!(
                "domain has dimension {}, SDE has {n}",
                domain.dim()
            )));
        }
        Ok(Sde { n, m, mu, sigma, domain })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// The quadratic form `A = (1/2) sigma sigma^T` of the generator.
    pub fn quadratic_form(&self) -> Vec<Vec<Expression>> {
        let half = Expression::rational(1, 2, self.n);
        let st = mat_transpose(&self.sigma);
        mat_scale(&half, &mat_mul(&self.sigma, &st))
    }

    /// Applies the generator `L = A^{ij} d_i d_j + mu^i d_i` to `f`.
    pub fn generator(&self, f: &Expression) -> Result<Expression, ModelError> {
        if f.dim() != self.n {
            return Err(ModelError::Dimension(format!(
                "generator argument has dimension {}, SDE has {}",
                f.dim(),
                self.n
            )));
        }
        let a = self.quadratic_form();
        let grad: Vec<Expression> = (0..self.n).map(|i| f.differentiate(i)).collect();
        let mut acc = Expression::zero(self.n);
        for i in 0..self.n {
            acc = &acc + &(&self.mu[i] * &grad[i]);
            for j in 0..self.n {
                acc = &acc + &(&a[i][j] * &grad[i].differentiate(j));
            }
        }
        Ok(acc)
    }

    /// Numeric drift at a point.
    pub fn mu_at(&self, p: &[f64]) -> Result<Vec<f64>, EvalError> {
        evaluate_vector(&self.mu, p)
    }

    /// Numeric diffusion matrix at a point.
    pub fn sigma_at(&self, p: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        evaluate_matrix(&self.sigma, p)
    }
}

/// A finite stochastic transformation triad: diffeomorphism `phi` with an
/// explicit inverse, rotation field `b` with values in SO(m), and a
/// positive time-change density `eta`.
#[derive(Clone, Debug)]
pub struct FiniteTransformation {
    n: usize,
    m: usize,
    pub phi: Vec<Expression>,
    pub phi_inverse: Vec<Expression>,
    pub b: Vec<Vec<Expression>>,
    pub eta: Expression,
    pub domain: Domain,
}

impl FiniteTransformation {
    pub fn new(
        n: usize,
        m: usize,
        phi: Vec<Expression>,
        phi_inverse: Vec<Expression>,
        b: Vec<Vec<Expression>>,
        eta: Expression,
        domain: Domain,
    ) -> Result<FiniteTransformation, ModelError> {
        check_fields(&phi, n, n, "phi")?;
        check_fields(&phi_inverse, n, n, "phi_inverse")?;
        check_matrix(&b, m, m, n, "rotation field")?;
        if eta.dim() != n {
            return Err(ModelError::Dimension(format!(
                "eta has dimension {}, expected {n}",
                eta.dim()
            )));
        }
        if domain.dim() != n {
            return Err(ModelError::Dimension("domain dimension mismatch".into()));
        }
        Ok(FiniteTransformation { n, m, phi, phi_inverse, b, eta, domain })
    }

    /// The identity triad `(id, I_m, 1)` on `domain`.
    pub fn identity(n: usize, m: usize, domain: Domain) -> FiniteTransformation {
        let vars: Vec<Expression> = (0..n).map(|i| Expression::variable(i, n)).collect();
        let eye = expr_identity_matrix(m, n);
        FiniteTransformation {
            n,
            m,
            phi: vars.clone(),
            phi_inverse: vars,
            b: eye,
            eta: Expression::one(n),
            domain,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// True when `phi` is structurally the identity map.
    pub fn phi_is_identity(&self) -> bool {
        self.phi.iter().enumerate().all(|(i, e)| e.is_variable(i))
    }

    /// Numeric state map at a point.
    pub fn phi_at(&self, p: &[f64]) -> Result<Vec<f64>, EvalError> {
        evaluate_vector(&self.phi, p)
    }

    pub fn b_at(&self, p: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        evaluate_matrix(&self.b, p)
    }

    pub fn eta_at(&self, p: &[f64]) -> Result<f64, EvalError> {
        self.eta.evaluate(p)
    }
}

/// An infinitesimal stochastic transformation triad: vector field `y`,
/// antisymmetric matrix field `c`, scalar field `tau`.
#[derive(Clone, Debug)]
pub struct InfinitesimalTransformation {
    n: usize,
    m: usize,
    pub y: Vec<Expression>,
    pub c: Vec<Vec<Expression>>,
    pub tau: Expression,
}

impl InfinitesimalTransformation {
    pub fn new(
        n: usize,
        m: usize,
        y: Vec<Expression>,
        c: Vec<Vec<Expression>>,
        tau: Expression,
    ) -> Result<InfinitesimalTransformation, ModelError> {
        check_fields(&y, n, n, "vector field")?;
        check_matrix(&c, m, m, n, "rotation generator")?;
        if tau.dim() != n {
            return Err(ModelError::Dimension(format!(
                "tau has dimension {}, expected {n}",
                tau.dim()
            )));
        }
        Ok(InfinitesimalTransformation { n, m, y, c, tau })
    }

    /// A strong triad `(Y, 0, 0)`.
    pub fn strong(y: Vec<Expression>, m: usize) -> InfinitesimalTransformation {
        let n = y.len();
        let dim = y[0].dim();
        let zero = Expression::zero(dim);
        InfinitesimalTransformation {
            n,
            m,
            y,
            c: vec![vec![zero.clone(); m]; m],
            tau: zero,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }
}

/// The m-by-m identity as expressions over `dim` variables.
pub fn expr_identity_matrix(m: usize, dim: usize) -> Vec<Vec<Expression>> {
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| if i == j { Expression::one(dim) } else { Expression::zero(dim) })
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

/// One invariant check: name, verdict, and the worst sampled violation
/// magnitude (0 when clean).
#[derive(Clone, Debug, Serialize)]
pub struct ValidationEntry {
    pub name: String,
    pub pass: bool,
    pub worst: f64,
}

/// Validation report: every invariant with pass/fail. Failures are report
/// entries, not errors.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub subject: String,
    pub entries: Vec<ValidationEntry>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    fn push(&mut self, name: &str, pass: bool, worst: f64) {
        self.entries.push(ValidationEntry { name: name.to_string(), pass, worst });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "validation of {}:", self.subject)?;
        for e in &self.entries {
            writeln!(
                f,
                "  [{}] {} (worst violation {:.3e})",
                if e.pass { "pass" } else { "FAIL" },
                e.name,
                e.worst
            )?;
        }
        Ok(())
    }
}

/// Validates the SDE invariants: the diffusion quadratic form must be
/// positive semidefinite at sampled domain points.
pub fn validate_sde(sde: &Sde) -> Result<ValidationReport, ModelError> {
    let mut report = ValidationReport { subject: "sde".into(), entries: Vec::new() };
    let points = sde.domain.sample_points(N_ZERO_POINTS)?;
    let mut worst = 0.0f64;
    let mut used = 0;
    for p in &points {
        let Ok(sigma) = sde.sigma_at(p) else { continue };
        used += 1;
        let a = 0.5 * (&sigma * sigma.transpose());
        let eigen = a.symmetric_eigenvalues();
        let min = eigen.iter().cloned().fold(f64::INFINITY, f64::min);
        worst = worst.max((-min).max(0.0));
    }
    report.push(
        "diffusion quadratic form positive semidefinite",
        used > 0 && worst <= PSD_EIGENVALUE_FLOOR,
        worst,
    );
    Ok(report)
}

/// Validates a finite transformation: B orthogonal with unit determinant,
/// eta bounded below by the domain margin, and the supplied inverse
/// actually inverting phi.
pub fn validate_finite(t: &FiniteTransformation) -> Result<ValidationReport, ModelError> {
    let mut report = ValidationReport { subject: "finite transformation".into(), entries: Vec::new() };
    let points = t.domain.sample_points(N_ZERO_POINTS)?;

    let mut worst_ortho = 0.0f64;
    let mut worst_det = 0.0f64;
    let mut worst_eta = 0.0f64;
    let mut used = 0;
    for p in &points {
        let (Ok(b), Ok(eta)) = (t.b_at(p), t.eta_at(p)) else { continue };
        used += 1;
        let gram = b.transpose() * &b;
        let eye = DMatrix::<f64>::identity(t.m, t.m);
        worst_ortho = worst_ortho.max((gram - eye).abs().max());
        worst_det = worst_det.max((b.determinant() - 1.0).abs());
        worst_eta = worst_eta.max(t.domain.margin() - eta);
    }
    report.push("rotation field orthogonal", used > 0 && worst_ortho <= ORTHOGONALITY_TOL, worst_ortho);
    report.push("rotation field determinant one", used > 0 && worst_det <= DETERMINANT_TOL, worst_det);
    report.push("eta bounded below by domain margin", used > 0 && worst_eta <= 0.0, worst_eta.max(0.0));

    // phi_inverse(phi(x)) - x == 0 componentwise
    let mut worst_inv = 0.0f64;
    let mut inv_pass = true;
    for i in 0..t.n {
        let roundtrip = t.phi_inverse[i].substitute(&t.phi);
        let residual = &roundtrip - &Expression::variable(i, t.n);
        match residual.zero_check(&t.domain) {
            Ok(c) => {
                worst_inv = worst_inv.max(c.worst_rel);
                inv_pass &= c.verdict;
            }
            Err(_) => inv_pass = false,
        }
    }
    report.push("inverse consistency", inv_pass, worst_inv);
    Ok(report)
}

/// Validates an infinitesimal transformation: C antisymmetric entrywise.
pub fn validate_infinitesimal(
    v: &InfinitesimalTransformation,
    domain: &Domain,
) -> Result<ValidationReport, ModelError> {
    let mut report =
        ValidationReport { subject: "infinitesimal transformation".into(), entries: Vec::new() };
    let mut worst = 0.0f64;
    let mut pass = true;
    for i in 0..v.m {
        for j in 0..v.m {
            let sym = &v.c[i][j] + &v.c[j][i];
            match sym.zero_check(domain) {
                Ok(c) => {
                    worst = worst.max(c.worst_rel);
                    pass &= c.verdict;
                }
                Err(_) => pass = false,
            }
        }
    }
    report.push("rotation generator antisymmetric", pass, worst);
    Ok(report)
}
