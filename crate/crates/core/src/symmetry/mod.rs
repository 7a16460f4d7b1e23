//! Symmetry certification for SDEs: determining-equation residuals, weak
//! and strong symmetry tests, finite symmetry checks (symbolic triads and
//! numeric flows), the Lie bracket of infinitesimal transformations,
//! structure-constant fits for bracket closure, and the strong-reduction
//! construction.
//!
//! The determining equations for a triad `(Y, C, tau)` against an SDE
//! `(mu, sigma)` are
//!
//! ```text
//! Y(mu) - L(Y) + tau mu            = 0        (drift)
//! [Y, sigma] + (1/2) tau sigma + sigma C = 0  (diffusion)
//! ```
//!
//! with `[Y,sigma]` the mixed bracket and `L` the generator.

mod reduction;

pub use reduction::{
    strong_reduction_solve, ReductionError, ReductionGrid, ReductionOptions,
    REDUCTION_VERIFY_TOL,
};

use crate::expr::{Domain, Expression};
use crate::model::{
    directional_derivative, lie_bracket, mat_add, mat_commutator, mat_mul, mat_scale, mat_sub,
    matrix_directional_derivative, mixed_bracket, FiniteTransformation,
    InfinitesimalTransformation, ModelError, Sde,
};
use crate::transform::{transform_sde, FlowResult};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::fmt;

/// Fit residuals below this bound count as a closed algebra.
pub const CLOSURE_FIT_TOL: f64 = 1e-8;
/// Structure constants must be antisymmetric to this tolerance.
pub const STRUCTURE_ANTISYMMETRY_TOL: f64 = 1e-9;

/// One residual entry: the expression, its zero-test verdict and worst
/// sampled magnitudes.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualEntry {
    pub expression: String,
    pub pass: bool,
    pub worst_abs: f64,
    pub worst_rel: f64,
}

/// Determining-equation residuals of one candidate triad.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub drift: Vec<ResidualEntry>,
    pub diffusion: Vec<Vec<ResidualEntry>>,
}

impl ResidualReport {
    /// True when every drift and diffusion entry vanishes.
    pub fn weak_pass(&self) -> bool {
        self.drift.iter().all(|e| e.pass)
            && self.diffusion.iter().flatten().all(|e| e.pass)
    }

    /// Largest absolute residual over all entries and sample points.
    pub fn worst_magnitude(&self) -> f64 {
        self.drift
            .iter()
            .chain(self.diffusion.iter().flatten())
            .map(|e| e.worst_abs)
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for ResidualReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "determining-equation residuals:")?;
        for (i, e) in self.drift.iter().enumerate() {
            writeln!(
                f,
                "  drift[{i}]      [{}] |res| <= {:.3e}   {}",
                if e.pass { "pass" } else { "FAIL" },
                e.worst_abs,
                e.expression
            )?;
        }
        for (i, row) in self.diffusion.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                writeln!(
                    f,
                    "  diffusion[{i}][{j}] [{}] |res| <= {:.3e}   {}",
                    if e.pass { "pass" } else { "FAIL" },
                    e.worst_abs,
                    e.expression
                )?;
            }
        }
        Ok(())
    }
}

fn entry_for(e: &Expression, domain: &Domain) -> Result<ResidualEntry, ModelError> {
    let check = e.zero_check(domain)?;
    Ok(ResidualEntry {
        expression: e.to_string(),
        pass: check.verdict,
        worst_abs: check.worst_abs,
        worst_rel: check.worst_rel,
    })
}

fn check_compatible(sde: &Sde, v: &InfinitesimalTransformation) -> Result<(), ModelError> {
    if sde.n() != v.n() || sde.m() != v.m() {
        return Err(ModelError::Dimension(format!(
            "SDE is ({},{}), triad is ({},{})",
            sde.n(),
            sde.m(),
            v.n(),
            v.m()
        )));
    }
    Ok(())
}

/// The symbolic residual expressions of the two determining equations:
/// `n` drift components and the `n x m` diffusion matrix.
pub fn determining_residual_expressions(
    sde: &Sde,
    v: &InfinitesimalTransformation,
) -> Result<(Vec<Expression>, Vec<Vec<Expression>>), ModelError> {
    check_compatible(sde, v)?;
    let n = sde.n();

    let mut drift = Vec::with_capacity(n);
    for i in 0..n {
        let residual = &(&directional_derivative(&v.y, &sde.mu[i]) - &sde.generator(&v.y[i])?)
            + &(&v.tau * &sde.mu[i]);
        drift.push(residual);
    }

    let half_tau = &Expression::rational(1, 2, n) * &v.tau;
    let diffusion = mat_add(
        &mat_add(&mixed_bracket(&v.y, &sde.sigma), &mat_scale(&half_tau, &sde.sigma)),
        &mat_mul(&sde.sigma, &v.c),
    );
    Ok((drift, diffusion))
}

/// Symbolic determining-equation residuals of `v` against `sde`, with
/// zero-test verdicts per entry.
pub fn determining_residuals(
    sde: &Sde,
    v: &InfinitesimalTransformation,
) -> Result<ResidualReport, ModelError> {
    let (drift_exprs, diffusion_exprs) = determining_residual_expressions(sde, v)?;
    let mut drift = Vec::with_capacity(drift_exprs.len());
    for e in &drift_exprs {
        drift.push(entry_for(e, &sde.domain)?);
    }
    let mut diffusion = Vec::with_capacity(diffusion_exprs.len());
    for row in &diffusion_exprs {
        let mut out = Vec::with_capacity(row.len());
        for e in row {
            out.push(entry_for(e, &sde.domain)?);
        }
        diffusion.push(out);
    }
    Ok(ResidualReport { drift, diffusion })
}

/// True when both determining equations hold on the SDE domain.
pub fn is_weak_symmetry(sde: &Sde, v: &InfinitesimalTransformation) -> Result<bool, ModelError> {
    Ok(determining_residuals(sde, v)?.weak_pass())
}

/// True when `v` is a weak symmetry whose rotation generator and
/// time-change rate both vanish.
pub fn is_strong_symmetry(sde: &Sde, v: &InfinitesimalTransformation) -> Result<bool, ModelError> {
    if !is_weak_symmetry(sde, v)? {
        return Ok(false);
    }
    for row in &v.c {
        for e in row {
            if !e.is_zero(&sde.domain)? {
                return Ok(false);
            }
        }
    }
    Ok(v.tau.is_zero(&sde.domain)?)
}

/// Finite symmetry condition: the transformed SDE coincides with the
/// original one under the componentwise zero test.
pub fn finite_symmetry_check(sde: &Sde, t: &FiniteTransformation) -> Result<bool, ModelError> {
    let out = transform_sde(t, sde)?;
    for i in 0..sde.n() {
        if !(&out.mu[i] - &sde.mu[i]).is_zero(&sde.domain)? {
            return Ok(false);
        }
        for j in 0..sde.m() {
            if !(&out.sigma[i][j] - &sde.sigma[i][j]).is_zero(&sde.domain)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Result of the numeric finite-symmetry check on a flow.
#[derive(Clone, Debug, Serialize)]
pub struct FlowSymmetryCheck {
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Finite symmetry condition checked pointwise on a numeric flow triad.
///
/// At every grid point `p` with flow state `(phi, J, H, B, eta)` this
/// compares `(1/eta) L(phi)` against `mu(phi(p))` (using the transported
/// Jacobian and Hessian for `L(phi)`) and `(1/sqrt(eta)) J sigma(p) B^T`
/// against `sigma(phi(p))`. The tolerance is `10 h^4`, scaled by the
/// traversed parameter length and by the magnitude of the compared
/// quantities.
pub fn finite_symmetry_check_flow(
    sde: &Sde,
    fr: &FlowResult,
) -> Result<FlowSymmetryCheck, ModelError> {
    let n = sde.n();
    let m = sde.m();
    let quad = sde.quadratic_form();
    let mut max_residual = 0.0f64;
    let mut scale = 1.0f64;
    for (p, s) in fr.grid.iter().zip(&fr.states) {
        let a = crate::model::evaluate_matrix(&quad, p).map_err(|source| ModelError::Eval {
            point: p.clone(),
            source,
        })?;
        let mu_p = sde.mu_at(p).map_err(|source| ModelError::Eval { point: p.clone(), source })?;
        let sigma_p =
            sde.sigma_at(p).map_err(|source| ModelError::Eval { point: p.clone(), source })?;
        let mu_q = sde.mu_at(&s.phi).map_err(|source| ModelError::Eval {
            point: s.phi.clone(),
            source,
        })?;
        let sigma_q = sde.sigma_at(&s.phi).map_err(|source| ModelError::Eval {
            point: s.phi.clone(),
            source,
        })?;

        for l in 0..n {
            // L(phi^l)(p) from the transported first and second derivatives
            let mut lphi = 0.0;
            for i in 0..n {
                lphi += mu_p[i] * s.jac[l][i];
                for j in 0..n {
                    lphi += a[(i, j)] * s.hess[l][i][j];
                }
            }
            let lhs = lphi / s.eta;
            max_residual = max_residual.max((lhs - mu_q[l]).abs());
            scale = scale.max(lhs.abs()).max(mu_q[l].abs());
        }

        let sqrt_eta = s.eta.sqrt();
        for l in 0..n {
            for alpha in 0..m {
                // (J sigma(p) B^T)^l_alpha
                let mut acc = 0.0;
                for i in 0..n {
                    for beta in 0..m {
                        acc += s.jac[l][i] * sigma_p[(i, beta)] * s.b[alpha][beta];
                    }
                }
                let lhs = acc / sqrt_eta;
                max_residual = max_residual.max((lhs - sigma_q[(l, alpha)]).abs());
                scale = scale.max(lhs.abs()).max(sigma_q[(l, alpha)].abs());
            }
        }
    }
    let tolerance = 10.0 * fr.h.abs().powi(4) * fr.a.abs().max(1.0) * scale;
    Ok(FlowSymmetryCheck { max_residual, tolerance, pass: max_residual <= tolerance })
}

/// Lie bracket of infinitesimal triads:
/// `([Y1,Y2], Y1(C2) - Y2(C1) - {C1,C2}, Y1(tau2) - Y2(tau1))`.
pub fn bracket(
    v1: &InfinitesimalTransformation,
    v2: &InfinitesimalTransformation,
) -> Result<InfinitesimalTransformation, ModelError> {
    if v1.n() != v2.n() || v1.m() != v2.m() {
        return Err(ModelError::Dimension("bracket of incompatible triads".into()));
    }
    let y = lie_bracket(&v1.y, &v2.y);
    let c = mat_sub(
        &mat_sub(
            &matrix_directional_derivative(&v1.y, &v2.c),
            &matrix_directional_derivative(&v2.y, &v1.c),
        ),
        &mat_commutator(&v1.c, &v2.c),
    );
    let tau = &directional_derivative(&v1.y, &v2.tau) - &directional_derivative(&v2.y, &v1.tau);
    InfinitesimalTransformation::new(v1.n(), v1.m(), y, c, tau)
}

/// Structure constants of a symmetry basis, fitted pointwise by least
/// squares: `f[i][j][k]` is the coefficient of basis element `k` in the
/// bracket of elements `i` and `j`.
#[derive(Clone, Debug, Serialize)]
pub struct StructureConstants {
    pub size: usize,
    pub f: Vec<Vec<Vec<f64>>>,
    /// Largest absolute pointwise deviation of any bracket from its fitted
    /// expansion in the basis; large values mean the span is not closed.
    pub fit_residual: f64,
    /// Whether every pairwise bracket passed the weak-symmetry test.
    pub brackets_are_symmetries: bool,
}

impl StructureConstants {
    /// Largest violation of `f^k_{ij} = -f^k_{ji}`.
    pub fn antisymmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.size {
            for j in 0..self.size {
                for k in 0..self.size {
                    worst = worst.max((self.f[i][j][k] + self.f[j][i][k]).abs());
                }
            }
        }
        worst
    }

    pub fn is_closed(&self) -> bool {
        self.fit_residual < CLOSURE_FIT_TOL
    }
}

impl fmt::Display for StructureConstants {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "structure constants ({} elements, fit residual {:.3e}, {}closed):",
            self.size,
            self.fit_residual,
            if self.is_closed() { "" } else { "NOT " }
        )?;
        for i in 0..self.size {
            for j in (i + 1)..self.size {
                let coeffs: Vec<String> =
                    self.f[i][j].iter().map(|c| format!("{c:+.6}")).collect();
                writeln!(f, "  [V{}, V{}] = ({})", i + 1, j + 1, coeffs.join(", "))?;
            }
        }
        Ok(())
    }
}

/// Evaluates the stacked coefficient vector (Y, C entries, tau) of a triad
/// at a point.
fn triad_coefficients(v: &InfinitesimalTransformation, p: &[f64]) -> Option<Vec<f64>> {
    let mut out = Vec::with_capacity(v.n() + v.m() * v.m() + 1);
    for e in &v.y {
        out.push(e.evaluate(p).ok()?);
    }
    for row in &v.c {
        for e in row {
            out.push(e.evaluate(p).ok()?);
        }
    }
    out.push(v.tau.evaluate(p).ok()?);
    Some(out)
}

/// Verifies that pairwise brackets of a weak-symmetry basis stay weak
/// symmetries and fits the structure constants by least squares over the
/// domain sample points.
///
/// Errors if a basis element itself fails the weak-symmetry test; a basis
/// that is merely not closed is reported through `fit_residual`.
pub fn closure_check(
    sde: &Sde,
    basis: &[InfinitesimalTransformation],
) -> Result<StructureConstants, ModelError> {
    let k = basis.len();
    for (i, v) in basis.iter().enumerate() {
        if !is_weak_symmetry(sde, v)? {
            return Err(ModelError::Invalid(format!(
                "basis element {} is not a weak symmetry",
                i + 1
            )));
        }
    }

    let points = sde.domain.sample_points(crate::expr::N_ZERO_POINTS)?;
    let width = basis.first().map_or(0, |v| v.n() + v.m() * v.m() + 1);

    let mut f = vec![vec![vec![0.0; k]; k]; k];
    let mut fit_residual = 0.0f64;
    let mut brackets_are_symmetries = true;

    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let br = bracket(&basis[i], &basis[j])?;
            if i < j {
                brackets_are_symmetries &= is_weak_symmetry(sde, &br)?;
            }

            // rows: one block of (Y, C, tau) values per usable sample point
            let mut rows: Vec<f64> = Vec::new();
            let mut rhs: Vec<f64> = Vec::new();
            for p in &points {
                let Some(target) = triad_coefficients(&br, p) else { continue };
                let mut cols = Vec::with_capacity(k);
                let mut ok = true;
                for v in basis {
                    match triad_coefficients(v, p) {
                        Some(c) => cols.push(c),
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if !ok {
                    continue;
                }
                for r in 0..width {
                    for col in &cols {
                        rows.push(col[r]);
                    }
                    rhs.push(target[r]);
                }
            }
            if rhs.len() < k {
                return Err(ModelError::Invalid(
                    "too few usable sample points for the structure-constant fit".into(),
                ));
            }
            let nrows = rhs.len();
            let a = DMatrix::from_row_slice(nrows, k, &rows);
            let b = DVector::from_vec(rhs);
            let svd = a.clone().svd(true, true);
            let sol = svd.solve(&b, 1e-12).map_err(|e| ModelError::Invalid(e.to_string()))?;
            let residual = (&a * &sol - &b).abs().max();
            fit_residual = fit_residual.max(residual);
            for (kk, c) in sol.iter().enumerate() {
                f[i][j][kk] = *c;
            }
        }
    }

    Ok(StructureConstants { size: k, f, fit_residual, brackets_are_symmetries })
}

/// Generator commutation: for a weak symmetry `(Y,C,tau)` the identity
/// `Y(L(f)) - L(Y(f)) + tau L(f) = 0` must hold for every smooth `f`.
///
/// Returns false when `v` fails the weak-symmetry hypothesis, without
/// requiring the residual itself to be nonzero in that case.
pub fn generator_commutation_check(
    sde: &Sde,
    v: &InfinitesimalTransformation,
    f: &Expression,
) -> Result<bool, ModelError> {
    check_compatible(sde, v)?;
    if !is_weak_symmetry(sde, v)? {
        return Ok(false);
    }
    let lf = sde.generator(f)?;
    let residual = &(&directional_derivative(&v.y, &lf) - &sde.generator(&directional_derivative(&v.y, f))?)
        + &(&v.tau * &lf);
    Ok(residual.is_zero(&sde.domain)?)
}

/// Checks the strong-reduction equations `Y_i(B) = -B C_i` and
/// `Y_i(eta) = -tau_i eta` for every basis element, entrywise under the
/// zero test.
pub fn strong_reduction_verify(
    basis: &[InfinitesimalTransformation],
    b: &[Vec<Expression>],
    eta: &Expression,
    domain: &Domain,
) -> Result<bool, ModelError> {
    for v in basis {
        let lhs = matrix_directional_derivative(&v.y, b);
        let rhs = mat_scale(&Expression::integer(-1, eta.dim()), &mat_mul(b, &v.c));
        for row in mat_sub(&lhs, &rhs) {
            for e in row {
                if !e.is_zero(domain)? {
                    return Ok(false);
                }
            }
        }
        let scalar = &directional_derivative(&v.y, eta) + &(&v.tau * eta);
        if !scalar.is_zero(domain)? {
            return Ok(false);
        }
    }
    Ok(true)
}
