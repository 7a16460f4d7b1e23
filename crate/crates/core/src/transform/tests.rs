use super::*;
use crate::expr::Domain;
use crate::model::{expr_identity_matrix, Sde};

fn ex(t: &str) -> Expression {
    Expression::parse(t, 2).unwrap()
}

fn punctured() -> Domain {
    Domain::new(vec![(-2.0, 2.0); 2], vec![ex("x^2+y^2")]).unwrap()
}

fn plain_box() -> Domain {
    Domain::new(vec![(-2.0, 2.0); 2], vec![]).unwrap()
}

fn eye2() -> Vec<Vec<Expression>> {
    expr_identity_matrix(2, 2)
}

fn bm2d() -> Sde {
    Sde::new(2, 2, vec![ex("0"), ex("0")], eye2(), plain_box()).unwrap()
}

fn radial_sde() -> Sde {
    Sde::new(2, 2, vec![ex("x/(x^2+y^2)"), ex("y/(x^2+y^2)")], eye2(), punctured()).unwrap()
}

/// The reduction triad of the radial fixture: identity state map, rotation
/// by minus the polar angle, density 1/r^2. This B solves Y_i(B) = -B C_i
/// for the dilation/rotation pair.
fn radial_triad() -> FiniteTransformation {
    FiniteTransformation::new(
        2,
        2,
        vec![ex("x"), ex("y")],
        vec![ex("x"), ex("y")],
        vec![
            vec![ex("x/sqrt(x^2+y^2)"), ex("y/sqrt(x^2+y^2)")],
            vec![ex("-y/sqrt(x^2+y^2)"), ex("x/sqrt(x^2+y^2)")],
        ],
        ex("1/(x^2+y^2)"),
        punctured(),
    )
    .unwrap()
}

fn dilation() -> InfinitesimalTransformation {
    InfinitesimalTransformation::new(
        2,
        2,
        vec![ex("x"), ex("y")],
        vec![vec![ex("0"), ex("0")], vec![ex("0"), ex("0")]],
        ex("2"),
    )
    .unwrap()
}

fn rotation() -> InfinitesimalTransformation {
    InfinitesimalTransformation::new(
        2,
        2,
        vec![ex("y"), ex("-x")],
        vec![vec![ex("0"), ex("1")], vec![ex("-1"), ex("0")]],
        ex("0"),
    )
    .unwrap()
}

fn assert_zero_on(e: &Expression, d: &Domain, what: &str) {
    let c = e.zero_check(d).unwrap();
    assert!(c.verdict, "{what}: worst rel {:.3e}", c.worst_rel);
}

fn assert_sde_eq(a: &Sde, b: &Sde, d: &Domain) {
    for i in 0..a.n() {
        assert_zero_on(&(&a.mu[i] - &b.mu[i]), d, &format!("drift component {i}"));
        for j in 0..a.m() {
            assert_zero_on(&(&a.sigma[i][j] - &b.sigma[i][j]), d, &format!("sigma {i}{j}"));
        }
    }
}

fn assert_triad_eq(a: &FiniteTransformation, b: &FiniteTransformation, d: &Domain) {
    for i in 0..a.n() {
        assert_zero_on(&(&a.phi[i] - &b.phi[i]), d, &format!("phi {i}"));
    }
    for i in 0..a.m() {
        for j in 0..a.m() {
            assert_zero_on(&(&a.b[i][j] - &b.b[i][j]), d, &format!("B {i}{j}"));
        }
    }
    assert_zero_on(&(&a.eta - &b.eta), d, "eta");
}

fn assert_infinitesimal_eq(
    a: &InfinitesimalTransformation,
    b: &InfinitesimalTransformation,
    d: &Domain,
) {
    for i in 0..a.n() {
        assert_zero_on(&(&a.y[i] - &b.y[i]), d, &format!("Y {i}"));
    }
    for i in 0..a.m() {
        for j in 0..a.m() {
            assert_zero_on(&(&a.c[i][j] - &b.c[i][j]), d, &format!("C {i}{j}"));
        }
    }
    assert_zero_on(&(&a.tau - &b.tau), d, "tau");
}

// -- transform_sde ------------------------------------------------------------

#[test]
fn identity_transformation_fixes_any_sde() {
    let sde = radial_sde();
    let t = FiniteTransformation::identity(2, 2, punctured());
    let out = transform_sde(&t, &sde).unwrap();
    assert_sde_eq(&out, &sde, &punctured());
}

#[test]
fn radial_triad_straightens_the_radial_sde() {
    let out = transform_sde(&radial_triad(), &radial_sde()).unwrap();
    let want_mu = [ex("x"), ex("y")];
    let want_sigma = [[ex("x"), ex("-y")], [ex("y"), ex("x")]];
    let d = punctured();
    for i in 0..2 {
        assert_zero_on(&(&out.mu[i] - &want_mu[i]), &d, &format!("mu {i}"));
        for j in 0..2 {
            assert_zero_on(&(&out.sigma[i][j] - &want_sigma[i][j]), &d, &format!("sigma {i}{j}"));
        }
    }
}

#[test]
fn transposed_rotation_reproduces_the_transposed_straightened_sde() {
    // The transposed rotation field sends the same SDE to the transposed
    // diffusion; both transformed SDEs share the quadratic form r^2 I.
    let t = radial_triad();
    let flipped = FiniteTransformation::new(
        2,
        2,
        t.phi.clone(),
        t.phi_inverse.clone(),
        crate::model::mat_transpose(&t.b),
        t.eta.clone(),
        punctured(),
    )
    .unwrap();
    let out = transform_sde(&flipped, &radial_sde()).unwrap();
    let want_sigma = [[ex("x"), ex("y")], [ex("-y"), ex("x")]];
    let d = punctured();
    for i in 0..2 {
        for j in 0..2 {
            assert_zero_on(&(&out.sigma[i][j] - &want_sigma[i][j]), &d, &format!("sigma {i}{j}"));
        }
    }
}

#[test]
fn constant_time_change_rescales_bm() {
    let t = FiniteTransformation::new(
        2,
        2,
        vec![ex("x"), ex("y")],
        vec![ex("x"), ex("y")],
        eye2(),
        ex("4"),
        plain_box(),
    )
    .unwrap();
    let out = transform_sde(&t, &bm2d()).unwrap();
    let d = plain_box();
    for i in 0..2 {
        assert_zero_on(&out.mu[i], &d, "drift stays zero");
        for j in 0..2 {
            let want = if i == j { ex("1/2") } else { ex("0") };
            assert_zero_on(&(&out.sigma[i][j] - &want), &d, "sigma is I/sqrt(4)");
        }
    }
}

#[test]
fn transform_sde_rejects_nonpositive_eta() {
    let t = FiniteTransformation::new(
        2,
        2,
        vec![ex("x"), ex("y")],
        vec![ex("x"), ex("y")],
        eye2(),
        ex("-1"),
        plain_box(),
    )
    .unwrap();
    assert!(matches!(transform_sde(&t, &bm2d()), Err(ModelError::Invalid(_))));
}

// -- compose / invert ---------------------------------------------------------

fn affine_1d(a: f64, b: f64, eta: &str, lo: f64, hi: f64) -> FiniteTransformation {
    let e = |t: &str| Expression::parse(t, 1).unwrap();
    FiniteTransformation::new(
        1,
        1,
        vec![e(&format!("{a}*x1+{b}"))],
        vec![e(&format!("(x1-{b})/{a}"))],
        vec![vec![e("1")]],
        e(eta),
        Domain::new(vec![(lo, hi)], vec![]).unwrap(),
    )
    .unwrap()
}

#[test]
fn composition_follows_the_triple_formula() {
    let t1 = affine_1d(1.0, 1.0, "1", 0.0, 1.0); // x -> x+1
    let t2 = affine_1d(2.0, 0.0, "3", 1.0, 2.0); // x -> 2x, eta 3
    let out = compose(&t2, &t1).unwrap();
    let d = Domain::new(vec![(0.0, 1.0)], vec![]).unwrap();
    let e = |t: &str| Expression::parse(t, 1).unwrap();
    assert_zero_on(&(&out.phi[0] - &e("2*(x1+1)")), &d, "phi");
    assert_zero_on(&(&out.eta - &e("3")), &d, "eta");
    assert_zero_on(&(&out.phi_inverse[0] - &e("x1/2-1")), &d, "phi inverse");
}

#[test]
fn identity_is_neutral_for_composition() {
    let t = radial_triad();
    let id = FiniteTransformation::identity(2, 2, punctured());
    assert_triad_eq(&compose(&t, &id).unwrap(), &t, &punctured());
    assert_triad_eq(&compose(&id, &t).unwrap(), &t, &punctured());
}

#[test]
fn inverse_composes_to_identity() {
    let t = radial_triad();
    let out = compose(&invert(&t).unwrap(), &t).unwrap();
    let id = FiniteTransformation::identity(2, 2, punctured());
    assert_triad_eq(&out, &id, &punctured());
}

#[test]
fn inversion_of_radial_triad() {
    let t = invert(&radial_triad()).unwrap();
    let d = punctured();
    // state map stays the identity, B transposes, eta inverts to r^2
    assert!(t.phi_is_identity());
    assert_zero_on(&(&t.eta - &ex("x^2+y^2")), &d, "eta inverse");
    assert_zero_on(&(&t.b[0][1] - &ex("-y/sqrt(x^2+y^2)")), &d, "B transpose");
    assert_zero_on(&(&t.b[1][0] - &ex("y/sqrt(x^2+y^2)")), &d, "B transpose");
}

#[test]
fn double_inversion_is_identity_on_triads() {
    let t = radial_triad();
    let back = invert(&invert(&t).unwrap()).unwrap();
    assert_triad_eq(&back, &t, &punctured());

    let id = FiniteTransformation::identity(2, 2, plain_box());
    assert_triad_eq(&invert(&id).unwrap(), &id, &plain_box());
}

#[test]
fn map_domain_is_exact_for_affine_maps() {
    let e = |t: &str| Expression::parse(t, 2).unwrap();
    let t = FiniteTransformation::new(
        2,
        2,
        vec![e("2*x+1"), e("y-3")],
        vec![e("(x-1)/2"), e("y+3")],
        eye2(),
        e("1"),
        Domain::new(vec![(-1.0, 1.0), (-1.0, 1.0)], vec![]).unwrap(),
    )
    .unwrap();
    let image = map_domain(&t.domain, &t).unwrap();
    let b = image.bounds();
    assert!((b[0].0 - -1.0).abs() < 1e-12 && (b[0].1 - 3.0).abs() < 1e-12);
    assert!((b[1].0 - -4.0).abs() < 1e-12 && (b[1].1 - -2.0).abs() < 1e-12);
}

// -- pushforward / pullback ---------------------------------------------------

#[test]
fn radial_triad_strengthens_the_dilation() {
    let out = pushforward(&radial_triad(), &dilation()).unwrap();
    let d = punctured();
    assert_zero_on(&(&out.y[0] - &ex("x")), &d, "Y x");
    assert_zero_on(&(&out.y[1] - &ex("y")), &d, "Y y");
    for i in 0..2 {
        for j in 0..2 {
            assert_zero_on(&out.c[i][j], &d, "C vanishes");
        }
    }
    assert_zero_on(&out.tau, &d, "tau vanishes");
}

#[test]
fn radial_triad_strengthens_the_rotation() {
    let out = pushforward(&radial_triad(), &rotation()).unwrap();
    let d = punctured();
    assert_zero_on(&(&out.y[0] - &ex("y")), &d, "Y x");
    assert_zero_on(&(&out.y[1] - &ex("-x")), &d, "Y y");
    for i in 0..2 {
        for j in 0..2 {
            assert_zero_on(&out.c[i][j], &d, "C vanishes");
        }
    }
    assert_zero_on(&out.tau, &d, "tau vanishes");
}

#[test]
fn pushforward_along_identity_fixes_triads() {
    let id = FiniteTransformation::identity(2, 2, punctured());
    let v = rotation();
    assert_infinitesimal_eq(&pushforward(&id, &v).unwrap(), &v, &punctured());
    assert_infinitesimal_eq(&pullback(&id, &v).unwrap(), &v, &punctured());
}

#[test]
fn pullback_undoes_pushforward() {
    let t = radial_triad();
    for v in [dilation(), rotation()] {
        let fwd = pushforward(&t, &v).unwrap();
        let back = pullback(&t, &fwd).unwrap();
        assert_infinitesimal_eq(&back, &v, &punctured());
    }
}

#[test]
fn pullback_of_strong_dilation_recovers_the_weak_one() {
    let strong = InfinitesimalTransformation::strong(vec![ex("x"), ex("y")], 2);
    let back = pullback(&radial_triad(), &strong).unwrap();
    assert_infinitesimal_eq(&back, &dilation(), &punctured());
}

// -- flow ---------------------------------------------------------------------

#[test]
fn constant_field_flows_to_translation() {
    let v = InfinitesimalTransformation::strong(vec![ex("1"), ex("0")], 2);
    let grid = vec![vec![0.2, -0.5], vec![-1.0, 1.0]];
    let out = flow(&v, 0.5, &grid, &plain_box(), None).unwrap();
    for (p, s) in grid.iter().zip(&out.states) {
        assert!((s.phi[0] - (p[0] + 0.5)).abs() < 1e-13);
        assert!((s.phi[1] - p[1]).abs() < 1e-13);
        assert!((s.eta - 1.0).abs() < 1e-13);
    }
}

#[test]
fn dilation_flow_matches_exponential_closed_form() {
    let v = dilation();
    let grid = vec![vec![0.5, -0.3]];
    let a = 0.4;
    let out = flow(&v, a, &grid, &plain_box(), None).unwrap();
    let s = &out.states[0];
    assert!((s.phi[0] - 0.5 * a.exp()).abs() < 1e-12, "phi {:?}", s.phi);
    assert!((s.phi[1] - -0.3 * a.exp()).abs() < 1e-12);
    assert!((s.eta - (2.0 * a).exp()).abs() < 1e-12, "eta {}", s.eta);
    // flow-map Jacobian of the dilation is e^a I
    for i in 0..2 {
        for j in 0..2 {
            let want = if i == j { a.exp() } else { 0.0 };
            assert!((s.jac[i][j] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn rotation_flow_matches_rotation_matrices() {
    let v = rotation();
    let a = 0.7f64;
    let p = [1.0, 0.2];
    let out = flow(&v, a, &[p.to_vec()], &plain_box(), None).unwrap();
    let s = &out.states[0];
    let want = [
        p[0] * a.cos() + p[1] * a.sin(),
        -p[0] * a.sin() + p[1] * a.cos(),
    ];
    assert!((s.phi[0] - want[0]).abs() < 1e-12, "{:?} vs {want:?}", s.phi);
    assert!((s.phi[1] - want[1]).abs() < 1e-12);
    // B_a = exp(a C) is the rotation by -a
    let wb = [[a.cos(), a.sin()], [-a.sin(), a.cos()]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((s.b[i][j] - wb[i][j]).abs() < 1e-12);
        }
    }
}

#[test]
fn flow_at_zero_parameter_is_the_identity() {
    let v = rotation();
    let p = vec![0.4, 0.8];
    let out = flow(&v, 0.0, &[p.clone()], &plain_box(), None).unwrap();
    let s = &out.states[0];
    for i in 0..2 {
        assert!((s.phi[i] - p[i]).abs() <= 1e-12);
        for j in 0..2 {
            let id = if i == j { 1.0 } else { 0.0 };
            assert!((s.jac[i][j] - id).abs() <= 1e-12);
            assert!((s.b[i][j] - id).abs() <= 1e-12);
        }
    }
    assert!((s.eta - 1.0).abs() <= 1e-12);
}

#[test]
fn rotation_factor_stays_orthogonal_along_the_flow() {
    let v = rotation();
    let out = flow(&v, 2.0, &[vec![0.6, 0.1]], &plain_box(), None).unwrap();
    for s in &out.trace {
        let b = &s.b;
        for i in 0..2 {
            for j in 0..2 {
                let dot = b[0][i] * b[0][j] + b[1][i] * b[1][j];
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-7, "orthogonality drift at a={}", s.a);
            }
        }
    }
}

#[test]
fn flow_satisfies_the_group_law() {
    // tolerance 10 h^4 per unit parameter, h = 1e-3
    let h: f64 = 1e-3;
    let tol = 10.0 * h.powi(4);
    for v in [dilation(), rotation()] {
        let grid = vec![vec![0.5, -0.2], vec![-0.4, 0.6]];
        let two_step_first = flow(&v, 0.2, &grid, &plain_box(), Some(h)).unwrap();
        let mid: Vec<Vec<f64>> = two_step_first.states.iter().map(|s| s.phi.clone()).collect();
        let two_step = flow(&v, 0.1, &mid, &plain_box(), Some(h)).unwrap();
        let direct = flow(&v, 0.3, &grid, &plain_box(), Some(h)).unwrap();
        for (a, b) in two_step.states.iter().zip(&direct.states) {
            for i in 0..2 {
                assert!(
                    (a.phi[i] - b.phi[i]).abs() < tol,
                    "group law violated: {} vs {}",
                    a.phi[i],
                    b.phi[i]
                );
            }
        }
    }
}

#[test]
fn flow_reports_domain_exit_with_parameter() {
    let v = dilation();
    let err = flow(&v, 0.5, &[vec![1.9, 0.0]], &plain_box(), None).unwrap_err();
    match err {
        FlowError::ExitsDomain { a } => {
            let expected = (2.0f64 / 1.9).ln();
            assert!((a - expected).abs() < 0.01, "exit parameter {a} vs {expected}");
        }
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn flow_csv_has_one_row_per_snapshot() {
    let v = rotation();
    let out = flow(&v, 0.1, &[vec![0.5, 0.5]], &plain_box(), Some(1e-2)).unwrap();
    let csv = out.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "a,point,p1,p2,phi1,phi2,b11,b12,b21,b22,eta");
    assert_eq!(lines.len(), 1 + out.trace.len());
}

// -- functoriality ------------------------------------------------------------

#[test]
fn sde_transformation_is_functorial_for_a_concrete_pair() {
    let e = |t: &str| Expression::parse(t, 2).unwrap();
    let dom = Domain::new(vec![(0.5, 1.5), (0.5, 1.5)], vec![]).unwrap();
    let t1 = FiniteTransformation::new(
        2,
        2,
        vec![e("2*x"), e("y+1")],
        vec![e("x/2"), e("y-1")],
        vec![vec![e("cos(x/4)"), e("-sin(x/4)")], vec![e("sin(x/4)"), e("cos(x/4)")]],
        e("exp(x/2)"),
        dom.clone(),
    )
    .unwrap();
    let dom1 = map_domain(&dom, &t1).unwrap();
    let t2 = FiniteTransformation::new(
        2,
        2,
        vec![e("x+y"), e("y")],
        vec![e("x-y"), e("y")],
        vec![vec![e("1"), e("0")], vec![e("0"), e("1")]],
        e("2"),
        dom1,
    )
    .unwrap();
    let sde = Sde::new(2, 2, vec![e("x-y"), e("x*y")], eye2(), dom).unwrap();

    let composite = transform_sde(&compose(&t2, &t1).unwrap(), &sde).unwrap();
    let stepwise = transform_sde(&t2, &transform_sde(&t1, &sde).unwrap()).unwrap();
    assert_sde_eq(&composite, &stepwise, &composite.domain);

    // and the push-forward composes the same way
    let v = rotation();
    let direct = pushforward(&compose(&t2, &t1).unwrap(), &v).unwrap();
    let stepped = pushforward(&t2, &pushforward(&t1, &v).unwrap()).unwrap();
    assert_infinitesimal_eq(&direct, &stepped, &composite.domain);
}
