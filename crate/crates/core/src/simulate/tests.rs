use super::*;
use crate::expr::{Domain, Expression};
use crate::model::expr_identity_matrix;
use crate::rng;

fn ex(t: &str) -> Expression {
    Expression::parse(t, 2).unwrap()
}

fn eye2() -> Vec<Vec<Expression>> {
    expr_identity_matrix(2, 2)
}

fn bm2d() -> Sde {
    let domain = Domain::new(vec![(-6.0, 6.0); 2], vec![]).unwrap();
    Sde::new(2, 2, vec![ex("0"), ex("0")], eye2(), domain).unwrap()
}

fn radial_sde() -> Sde {
    let domain = Domain::new(vec![(-8.0, 8.0); 2], vec![ex("x^2+y^2")]).unwrap();
    Sde::new(2, 2, vec![ex("x/(x^2+y^2)"), ex("y/(x^2+y^2)")], eye2(), domain).unwrap()
}

/// The straightened radial SDE; its noise is multiplicative and
/// non-commutative, so Euler-Maruyama converges with strong order 1/2.
fn straightened_sde() -> Sde {
    let domain = Domain::new(vec![(-12.0, 12.0); 2], vec![]).unwrap();
    Sde::new(
        2,
        2,
        vec![ex("x"), ex("y")],
        vec![vec![ex("x"), ex("-y")], vec![ex("y"), ex("x")]],
        domain,
    )
    .unwrap()
}

fn point_cfg(dt: f64, horizon: f64, paths: usize, seed: u64, p: [f64; 2]) -> SimConfig {
    SimConfig { dt, horizon, paths, seed, initial: Initial::Point(p.to_vec()) }
}

// -- Euler-Maruyama -------------------------------------------------------------

#[test]
fn bm_terminal_mean_is_the_start_point() {
    let sde = bm2d();
    let cfg = point_cfg(1e-3, 0.2, 4000, 11, [0.3, -0.1]);
    let mut sum = [0.0f64; 2];
    let mut sq = [0.0f64; 2];
    let mut alive = 0usize;
    for_each_path(&sde, &cfg, |_, p| {
        if !p.exited() {
            alive += 1;
            let xt = p.x_at(p.stop);
            for i in 0..2 {
                sum[i] += xt[i];
                sq[i] += xt[i] * xt[i];
            }
        }
        Ok(())
    })
    .unwrap();
    assert!(alive > 3900);
    for i in 0..2 {
        let mean = sum[i] / alive as f64;
        let var = sq[i] / alive as f64 - mean * mean;
        let se = (var / alive as f64).sqrt();
        let want = cfg_initial(&cfg)[i];
        assert!((mean - want).abs() <= 3.0 * se, "component {i}: {mean} vs {want} (se {se})");
    }
}

fn cfg_initial(cfg: &SimConfig) -> Vec<f64> {
    match &cfg.initial {
        Initial::Point(p) => p.clone(),
        Initial::UniformInDomain => unreachable!(),
    }
}

#[test]
fn radial_sde_squared_norm_grows_linearly() {
    // Ito on r^2 gives d(r^2) = 4 dt + martingale
    let sde = radial_sde();
    let t = 0.2;
    let cfg = point_cfg(1e-3, t, 4000, 42, [1.0, 0.0]);
    let mut vals = Vec::new();
    for_each_path(&sde, &cfg, |_, p| {
        if !p.exited() {
            let xt = p.x_at(p.stop);
            vals.push(xt[0] * xt[0] + xt[1] * xt[1]);
        }
        Ok(())
    })
    .unwrap();
    assert!(vals.len() > 3800, "too many exits: {}", vals.len());
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let want = 1.0 + 4.0 * t;
    assert!((mean - want).abs() <= 3.0 * se, "E r^2 = {mean} vs {want} (se {se})");
}

#[test]
fn euler_maruyama_strong_order_is_about_one_half() {
    let sde = straightened_sde();
    let t_end = 0.25;
    let fine_steps = 4096usize;
    let dt_f = t_end / fine_steps as f64;
    let paths = 256;
    let seed = 999u64;
    let levels = [16usize, 32, 64, 128];

    let mut errors = vec![0.0f64; levels.len()];
    for path in 0..paths {
        // shared fine Brownian increments
        let dws: Vec<[f64; 2]> = (0..fine_steps)
            .map(|k| {
                [
                    dt_f.sqrt() * rng::normal(seed, path as u64, k as u64, 0),
                    dt_f.sqrt() * rng::normal(seed, path as u64, k as u64, 1),
                ]
            })
            .collect();
        let em = |dt: f64, dws_level: &[[f64; 2]]| -> [f64; 2] {
            let mut x = [1.0f64, 0.0];
            for dw in dws_level {
                let mu = sde.mu_at(&x).unwrap();
                let sg = sde.sigma_at(&x).unwrap();
                let mut next = x;
                for i in 0..2 {
                    next[i] += mu[i] * dt + sg[(i, 0)] * dw[0] + sg[(i, 1)] * dw[1];
                }
                x = next;
            }
            x
        };
        let reference = em(dt_f, &dws);
        for (li, &c) in levels.iter().enumerate() {
            let coarse: Vec<[f64; 2]> = dws
                .chunks(c)
                .map(|chunk| {
                    let mut s = [0.0f64; 2];
                    for d in chunk {
                        s[0] += d[0];
                        s[1] += d[1];
                    }
                    s
                })
                .collect();
            let end = em(dt_f * c as f64, &coarse);
            let err =
                ((end[0] - reference[0]).powi(2) + (end[1] - reference[1]).powi(2)).sqrt();
            errors[li] += err / paths as f64;
        }
    }

    // least-squares slope of ln(error) against ln(dt)
    let xs: Vec<f64> = levels.iter().map(|&c| (dt_f * c as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    assert!(
        (slope - 0.5).abs() <= 0.2,
        "strong convergence slope {slope:.3}, errors {errors:?}"
    );
}

#[test]
fn identical_configs_give_bit_identical_paths() {
    let sde = radial_sde();
    let cfg = point_cfg(1e-3, 0.1, 8, 7, [1.0, 0.0]);
    let a = euler_maruyama(&sde, &cfg).unwrap();
    let b = euler_maruyama(&sde, &cfg).unwrap();
    for (pa, pb) in a.iter().zip(&b) {
        assert_eq!(pa.stop, pb.stop);
        for k in 0..pa.node_count() {
            for i in 0..2 {
                assert_eq!(pa.x_at(k)[i].to_bits(), pb.x_at(k)[i].to_bits());
                assert_eq!(pa.w_at(k)[i].to_bits(), pb.w_at(k)[i].to_bits());
            }
        }
    }
    let other = euler_maruyama(&sde, &point_cfg(1e-3, 0.1, 8, 8, [1.0, 0.0])).unwrap();
    assert_ne!(a[0].x_at(a[0].stop)[0].to_bits(), other[0].x_at(other[0].stop)[0].to_bits());
}

#[test]
fn paths_start_at_zero_noise_and_inside_the_domain() {
    let sde = radial_sde();
    let cfg = SimConfig {
        dt: 1e-3,
        horizon: 0.05,
        paths: 64,
        seed: 3,
        initial: Initial::UniformInDomain,
    };
    for p in euler_maruyama(&sde, &cfg).unwrap() {
        assert!(p.w_at(0).iter().all(|v| *v == 0.0));
        assert!(sde.domain.contains(p.x_at(0)));
    }
}

#[test]
fn initial_point_outside_domain_is_rejected() {
    let sde = radial_sde();
    let cfg = point_cfg(1e-3, 0.1, 1, 1, [0.0, 0.0]); // excluded origin
    assert!(matches!(euler_maruyama(&sde, &cfg), Err(SimError::InitialOutsideDomain)));
    let cfg = SimConfig { dt: -1.0, horizon: 1.0, paths: 1, seed: 1, initial: Initial::Point(vec![1.0, 0.0]) };
    assert!(matches!(euler_maruyama(&sde, &cfg), Err(SimError::BadConfig(_))));
}

#[test]
fn paths_stop_at_domain_exit() {
    // strong outward drift in a small box: every path exits
    let domain = Domain::new(vec![(-1.0, 1.0); 2], vec![]).unwrap();
    let sde = Sde::new(2, 2, vec![ex("20*x"), ex("0")], eye2(), domain).unwrap();
    let cfg = point_cfg(1e-2, 1.0, 16, 5, [0.5, 0.0]);
    for p in euler_maruyama(&sde, &cfg).unwrap() {
        assert!(p.exited());
        assert!(sde.domain.contains(p.x_at(p.stop)));
    }
}

// -- process transformation -------------------------------------------------------

fn identity_triad(domain: Domain) -> FiniteTransformation {
    FiniteTransformation::identity(2, 2, domain)
}

fn const_eta_triad(eta: &str, domain: Domain) -> FiniteTransformation {
    FiniteTransformation::new(
        2,
        2,
        vec![ex("x"), ex("y")],
        vec![ex("x"), ex("y")],
        eye2(),
        ex(eta),
        domain,
    )
    .unwrap()
}

#[test]
fn identity_transformation_is_bit_exact_on_paths() {
    let sde = radial_sde();
    let cfg = point_cfg(1e-3, 0.3, 4, 21, [1.0, 0.0]);
    for path in euler_maruyama(&sde, &cfg).unwrap() {
        let out = process_transform(&identity_triad(sde.domain.clone()), &path).unwrap();
        assert_eq!(out.stop, path.stop);
        for k in 0..path.node_count() {
            for i in 0..2 {
                assert_eq!(out.x_at(k)[i].to_bits(), path.x_at(k)[i].to_bits(), "x node {k}");
                assert_eq!(out.w_at(k)[i].to_bits(), path.w_at(k)[i].to_bits(), "w node {k}");
            }
        }
    }
}

#[test]
fn constant_time_change_stretches_the_horizon() {
    let sde = bm2d();
    let dt = 1e-3;
    let cfg = point_cfg(dt, 0.1, 200, 33, [0.0, 0.0]);
    let t = const_eta_triad("4", sde.domain.clone());
    let mut inc_sq = 0.0f64;
    let mut inc_n = 0usize;
    for path in euler_maruyama(&sde, &cfg).unwrap() {
        let out = process_transform(&t, &path).unwrap();
        // new horizon = 4 * old horizon, spread over the same node count
        assert_eq!(out.stop, path.stop);
        assert!((out.dt - 4.0 * dt).abs() < 1e-12);
        assert!((out.time_at(out.stop) - 4.0 * path.time_at(path.stop)).abs() < 1e-9);
        // clock bookkeeping: grid nodes coincide with the clock knots
        for k in 0..=path.stop {
            for i in 0..2 {
                assert_eq!(out.x_at(k)[i].to_bits(), path.x_at(k)[i].to_bits());
            }
        }
        for k in 0..out.stop {
            for a in 0..2 {
                let d = out.w_at(k + 1)[a] - out.w_at(k)[a];
                inc_sq += d * d;
                inc_n += 1;
            }
        }
    }
    // resampled noise increments must have variance ~ dt' = 4 dt
    let var = inc_sq / inc_n as f64;
    let se = var * (2.0 / inc_n as f64).sqrt();
    assert!((var - 4.0 * dt).abs() < 4.0 * se, "increment variance {var} vs {}", 4.0 * dt);
}

#[test]
fn transformed_noise_of_rotation_triad_stays_brownian() {
    // state-dependent rotation with unit clock: W' must still look Brownian
    let sde = bm2d();
    let triad = FiniteTransformation::new(
        2,
        2,
        vec![ex("x"), ex("y")],
        vec![ex("x"), ex("y")],
        vec![
            vec![ex("cos(x+y)"), ex("-sin(x+y)")],
            vec![ex("sin(x+y)"), ex("cos(x+y)")],
        ],
        ex("1"),
        sde.domain.clone(),
    )
    .unwrap();
    let cfg = point_cfg(1e-3, 0.2, 400, 91, [0.0, 0.0]);
    let mut transformed = Vec::new();
    for path in euler_maruyama(&sde, &cfg).unwrap() {
        transformed.push(process_transform(&triad, &path).unwrap());
    }
    let report = brownian_check(&transformed, 0.2).unwrap();
    assert!(report.pass, "{report}");
}

#[test]
fn eta_must_stay_positive_along_the_path() {
    let sde = bm2d();
    let t = const_eta_triad("-1", sde.domain.clone());
    let path = simulate_path(&sde, &point_cfg(1e-3, 0.01, 1, 2, [0.0, 0.0]), 0).unwrap();
    assert!(matches!(process_transform(&t, &path), Err(SimError::EtaNonPositive(_))));
}

// -- statistics --------------------------------------------------------------------

#[test]
fn raw_noise_passes_the_brownian_diagnostics() {
    let sde = bm2d();
    let cfg = point_cfg(1e-3, 0.15, 800, 17, [0.0, 0.0]);
    let paths = euler_maruyama(&sde, &cfg).unwrap();
    let report = brownian_check(&paths, 0.15).unwrap();
    assert!(report.pass, "{report}");
    assert!((report.alive_fraction - 1.0).abs() < 1e-12);
}

#[test]
fn doubled_component_fails_the_variance_check() {
    let sde = bm2d();
    let cfg = point_cfg(1e-3, 0.15, 400, 19, [0.0, 0.0]);
    let mut paths = euler_maruyama(&sde, &cfg).unwrap();
    for p in &mut paths {
        // doubling one component of W breaks its variance, not its mean
        for v in p.w.iter_mut().step_by(2) {
            *v *= 2.0;
        }
    }
    let report = brownian_check(&paths, 0.15).unwrap();
    assert!(!report.pass);
    let failing: Vec<&StatCheck> = report.checks.iter().filter(|c| !c.pass).collect();
    assert!(failing.iter().any(|c| c.name.contains("variance (w1)")), "{report}");
}

#[test]
fn brownian_check_needs_enough_paths() {
    let sde = bm2d();
    let cfg = point_cfg(1e-3, 0.05, 10, 23, [0.0, 0.0]);
    let paths = euler_maruyama(&sde, &cfg).unwrap();
    assert!(matches!(brownian_check(&paths, 0.05), Err(SimError::Insufficient { .. })));
}

#[test]
fn two_sample_check_trivial_and_shifted() {
    let draw = |seed: u64, shift: f64| -> Vec<Vec<f64>> {
        (0..1500)
            .map(|i| {
                vec![
                    rng::normal(seed, i, 0, 0) + shift,
                    rng::normal(seed, i, 0, 1),
                ]
            })
            .collect()
    };
    let a = draw(1, 0.0);
    // identical ensembles pass trivially
    assert!(two_sample_check(&a, &a).unwrap().pass);
    // same distribution, different seed
    let b = draw(2, 0.0);
    let report = two_sample_check(&a, &b).unwrap();
    assert!(report.pass, "{report}");
    // shifted mean fails
    let c = draw(3, 1.0);
    let report = two_sample_check(&a, &c).unwrap();
    assert!(!report.pass);
    assert!(report.checks.iter().any(|ch| ch.name.contains("mean (x1)") && !ch.pass));
    // too small
    assert!(matches!(two_sample_check(&a[..10].to_vec(), &a), Err(SimError::Insufficient { .. })));
}

// -- composition --------------------------------------------------------------------

#[test]
fn composing_with_identities_is_pathwise_exact() {
    let sde = bm2d();
    let cfg = point_cfg(1e-3, 0.1, 8, 41, [0.0, 0.0]);
    let paths = euler_maruyama(&sde, &cfg).unwrap();
    let id = identity_triad(sde.domain.clone());
    let dev = composition_pathwise_check(&id, &id, &paths).unwrap();
    assert_eq!(dev, 0.0);
}

#[test]
fn constant_time_changes_compose_within_the_interpolation_bound() {
    let sde = bm2d();
    let dt = 1e-3;
    let cfg = point_cfg(dt, 0.2, 32, 47, [0.0, 0.0]);
    let paths = euler_maruyama(&sde, &cfg).unwrap();
    let t1 = const_eta_triad("2", sde.domain.clone());
    let t2 = const_eta_triad("3", sde.domain.clone());
    let dev = composition_pathwise_check(&t1, &t2, &paths).unwrap();
    assert!(dev <= 5.0 * dt.sqrt(), "deviation {dev} vs {}", 5.0 * dt.sqrt());
    assert!(dev > 0.0);
}

// -- export ------------------------------------------------------------------------

#[test]
fn ensemble_csv_has_header_and_rows() {
    let sde = bm2d();
    let cfg = point_cfg(1e-2, 0.03, 2, 1, [0.0, 0.0]);
    let paths = euler_maruyama(&sde, &cfg).unwrap();
    let mut buf = Vec::new();
    write_ensemble_csv(&paths, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "path,k,t,x1,x2,w1,w2");
    assert_eq!(lines.len(), 1 + paths.iter().map(|p| p.node_count()).sum::<usize>());
}
