//! The algebra of stochastic transformations: the induced action on SDE
//! coefficients, group composition and inversion, push-forward and
//! pull-back of infinitesimal transformations, and numeric one-parameter
//! flows.
//!
//! Matrix inverses of the rotation field are always realized as
//! transposes: the orthogonality invariant makes that exact and cheap.

mod flow;

pub use flow::{flow, FlowError, FlowResult, FlowSample, FlowState};

use crate::expr::{Domain, Expression};
use crate::model::{
    jacobian, mat_add, mat_mul, mat_transpose, matrix_directional_derivative,
    directional_derivative, FiniteTransformation, InfinitesimalTransformation, ModelError, Sde,
};

fn check_shape(
    n1: usize,
    m1: usize,
    n2: usize,
    m2: usize,
    what: &str,
) -> Result<(), ModelError> {
    if n1 != n2 || m1 != m2 {
        return Err(ModelError::Dimension(format!(
            "{what}: shapes ({n1},{m1}) and ({n2},{m2}) differ"
        )));
    }
    Ok(())
}

/// Image of `domain` under the state map of `t`.
///
/// For an identity map the domain is reused unchanged. Otherwise the
/// bounding box of the mapped sample cloud (plus box corners) becomes the
/// new box and each exclusion is pulled back through the inverse map. The
/// box is exact for affine maps and an estimate otherwise; sampling
/// downstream skips points where expressions are undefined.
pub fn map_domain(domain: &Domain, t: &FiniteTransformation) -> Result<Domain, ModelError> {
    if t.phi_is_identity() {
        return Ok(domain.clone());
    }
    let n = domain.dim();
    let mut cloud = domain.sample_points(256)?;
    if n <= 12 {
        for mask in 0..(1usize << n) {
            let corner: Vec<f64> = (0..n)
                .map(|j| {
                    let (lo, hi) = domain.bounds()[j];
                    if mask >> j & 1 == 1 {
                        hi
                    } else {
                        lo
                    }
                })
                .collect();
            cloud.push(corner);
        }
    }
    let mut lows = vec![f64::INFINITY; n];
    let mut highs = vec![f64::NEG_INFINITY; n];
    let mut mapped = 0usize;
    for p in &cloud {
        let Ok(q) = t.phi_at(p) else { continue };
        if q.iter().any(|x| !x.is_finite()) {
            continue;
        }
        mapped += 1;
        for j in 0..n {
            lows[j] = lows[j].min(q[j]);
            highs[j] = highs[j].max(q[j]);
        }
    }
    if mapped < 8 {
        return Err(ModelError::Invalid(
            "state map undefined on almost all of the domain".into(),
        ));
    }
    let bounds: Vec<(f64, f64)> = lows
        .into_iter()
        .zip(highs)
        .map(|(lo, hi)| {
            if hi - lo > 1e-9 {
                (lo, hi)
            } else {
                (lo - 1e-9, hi + 1e-9)
            }
        })
        .collect();
    let exclusions: Vec<Expression> = domain
        .exclusions()
        .iter()
        .map(|e| e.substitute(&t.phi_inverse))
        .collect();
    Ok(Domain::new(bounds, exclusions)?)
}

fn require_eta_positive(t: &FiniteTransformation) -> Result<(), ModelError> {
    let points = t.domain.sample_points(16)?;
    for p in &points {
        match t.eta_at(p) {
            Ok(v) if v > 0.0 => {}
            Ok(v) => {
                return Err(ModelError::Invalid(format!(
                    "eta is not positive on the domain (value {v} at {p:?})"
                )))
            }
            Err(_) => {}
        }
    }
    Ok(())
}

/// The transformed SDE: drift `((1/eta) L(phi)) o phi^{-1}`, diffusion
/// `((1/sqrt(eta)) D(phi) sigma B^T) o phi^{-1}`.
pub fn transform_sde(t: &FiniteTransformation, sde: &Sde) -> Result<Sde, ModelError> {
    check_shape(t.n(), t.m(), sde.n(), sde.m(), "transform_sde")?;
    require_eta_positive(t)?;
    let n = sde.n();
    let m = sde.m();

    let mut mu = Vec::with_capacity(n);
    for l in 0..n {
        let generated = sde.generator(&t.phi[l])?;
        mu.push((&generated / &t.eta).substitute(&t.phi_inverse));
    }

    let dphi = jacobian(&t.phi);
    let rotated = mat_mul(&sde.sigma, &mat_transpose(&t.b));
    let scaled = t.eta.pow_rational(-1, 2);
    let product = mat_mul(&dphi, &rotated);
    let sigma: Vec<Vec<Expression>> = product
        .iter()
        .map(|row| row.iter().map(|e| (&scaled * e).substitute(&t.phi_inverse)).collect())
        .collect();

    let domain = map_domain(&sde.domain, t)?;
    Sde::new(n, m, mu, sigma, domain)
}

/// Group composition `(t2 o t1)`: state maps compose, the rotation becomes
/// `(B2 o phi1) B1`, the density `(eta2 o phi1) eta1`.
pub fn compose(
    t2: &FiniteTransformation,
    t1: &FiniteTransformation,
) -> Result<FiniteTransformation, ModelError> {
    check_shape(t2.n(), t2.m(), t1.n(), t1.m(), "compose")?;
    let phi: Vec<Expression> = t2.phi.iter().map(|e| e.substitute(&t1.phi)).collect();
    let phi_inverse: Vec<Expression> =
        t1.phi_inverse.iter().map(|e| e.substitute(&t2.phi_inverse)).collect();
    let b2_of_phi1: Vec<Vec<Expression>> = t2
        .b
        .iter()
        .map(|row| row.iter().map(|e| e.substitute(&t1.phi)).collect())
        .collect();
    let b = mat_mul(&b2_of_phi1, &t1.b);
    let eta = &t2.eta.substitute(&t1.phi) * &t1.eta;
    FiniteTransformation::new(t1.n(), t1.m(), phi, phi_inverse, b, eta, t1.domain.clone())
}

/// Group inverse `(phi^{-1}, (B o phi^{-1})^T, 1/(eta o phi^{-1}))` on the
/// image domain.
pub fn invert(t: &FiniteTransformation) -> Result<FiniteTransformation, ModelError> {
    let b_on_image: Vec<Vec<Expression>> = t
        .b
        .iter()
        .map(|row| row.iter().map(|e| e.substitute(&t.phi_inverse)).collect())
        .collect();
    let b = mat_transpose(&b_on_image);
    let eta = t.eta.substitute(&t.phi_inverse).recip();
    let domain = map_domain(&t.domain, t)?;
    FiniteTransformation::new(
        t.n(),
        t.m(),
        t.phi_inverse.clone(),
        t.phi.clone(),
        b,
        eta,
        domain,
    )
}

/// Push-forward of an infinitesimal triad:
/// `((D(phi) Y) o phi^{-1}, (B C B^T + Y(B) B^T) o phi^{-1},
///   (tau + Y(eta)/eta) o phi^{-1})`.
pub fn pushforward(
    t: &FiniteTransformation,
    v: &InfinitesimalTransformation,
) -> Result<InfinitesimalTransformation, ModelError> {
    check_shape(t.n(), t.m(), v.n(), v.m(), "pushforward")?;
    let dphi = jacobian(&t.phi);
    let n = t.n();

    let mut y = Vec::with_capacity(n);
    for row in dphi.iter().take(n) {
        let mut acc = Expression::zero(n);
        for (k, d) in row.iter().enumerate() {
            acc = &acc + &(d * &v.y[k]);
        }
        y.push(acc.substitute(&t.phi_inverse));
    }

    let bt = mat_transpose(&t.b);
    let conjugated = mat_mul(&mat_mul(&t.b, &v.c), &bt);
    let advected = mat_mul(&matrix_directional_derivative(&v.y, &t.b), &bt);
    let c: Vec<Vec<Expression>> = mat_add(&conjugated, &advected)
        .iter()
        .map(|row| row.iter().map(|e| e.substitute(&t.phi_inverse)).collect())
        .collect();

    let tau = (&v.tau + &(&directional_derivative(&v.y, &t.eta) / &t.eta))
        .substitute(&t.phi_inverse);

    InfinitesimalTransformation::new(n, t.m(), y, c, tau)
}

/// Pull-back: push-forward along the inverse transformation.
pub fn pullback(
    t: &FiniteTransformation,
    v: &InfinitesimalTransformation,
) -> Result<InfinitesimalTransformation, ModelError> {
    pushforward(&invert(t)?, v)
}

#[cfg(test)]
mod tests;
