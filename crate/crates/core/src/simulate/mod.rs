//! Monte Carlo machinery: Euler-Maruyama path generation with
//! counter-based noise, the pathwise process transformation (time change,
//! Brownian rotation, state map), and the statistical checks that compare
//! transformed ensembles against direct simulation.
//!
//! Quadrature is left-point throughout, matching Ito integrals. Paths stop
//! at the first exit from the domain (box or exclusion margin); statistics
//! are computed over paths alive at the test time, with the alive fraction
//! reported.

mod stats;

pub use stats::{
    brownian_check, ks_p_value, ks_statistic, two_sample_check, BrownianAccumulator, StatCheck,
    StatReport,
};

use crate::expr::EvalError;
use crate::model::{FiniteTransformation, ModelError, Sde};
use crate::rng;
use crate::transform::compose;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("initial point lies outside the domain")]
    InitialOutsideDomain,
    #[error("could not sample an initial point inside the domain")]
    InitialSampling,
    #[error("bad simulation config: {0}")]
    BadConfig(String),
    #[error("eta must stay positive along the path, found {0}")]
    EtaNonPositive(f64),
    #[error("path has no usable nodes")]
    EmptyPath,
    #[error("need at least {need} samples, got {got}")]
    Insufficient { need: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("evaluation failed at {point:?}: {source}")]
    Eval { point: Vec<f64>, source: EvalError },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How paths start.
#[derive(Clone, Debug)]
pub enum Initial {
    Point(Vec<f64>),
    /// Uniform draws from the domain box, rejecting the exclusion margin.
    UniformInDomain,
}

/// Simulation parameters. Identical configs produce bit-identical paths.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub initial: Initial,
}

/// One discretized trajectory pair on a uniform grid: states, driving
/// Brownian path, and the raw increments the states were built from.
///
/// `stop` is the index of the last node inside the domain; it equals
/// `steps` when the path never exits.
#[derive(Clone, Debug)]
pub struct PathBundle {
    n: usize,
    m: usize,
    pub dt: f64,
    pub steps: usize,
    pub stop: usize,
    x: Vec<f64>,
    w: Vec<f64>,
    dw: Vec<f64>,
}

impl PathBundle {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of stored nodes (`stop + 1`).
    pub fn node_count(&self) -> usize {
        self.stop + 1
    }

    pub fn x_at(&self, k: usize) -> &[f64] {
        &self.x[k * self.n..(k + 1) * self.n]
    }

    pub fn w_at(&self, k: usize) -> &[f64] {
        &self.w[k * self.m..(k + 1) * self.m]
    }

    /// Brownian increment applied between nodes `k` and `k+1`.
    pub fn dw_at(&self, k: usize) -> &[f64] {
        &self.dw[k * self.m..(k + 1) * self.m]
    }

    pub fn time_at(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn exited(&self) -> bool {
        self.stop < self.steps
    }

    /// Grid node nearest to time `t`, if the path is still alive there.
    pub fn node_at_time(&self, t: f64) -> Option<usize> {
        let k = (t / self.dt).round() as usize;
        (k <= self.stop).then_some(k)
    }
}

fn draw_initial(sde: &Sde, cfg: &SimConfig, path: u64) -> Result<Vec<f64>, SimError> {
    match &cfg.initial {
        Initial::Point(p) => {
            if p.len() != sde.n() {
                return Err(SimError::Dimension("initial point dimension".into()));
            }
            if !sde.domain.contains(p) {
                return Err(SimError::InitialOutsideDomain);
            }
            Ok(p.clone())
        }
        Initial::UniformInDomain => {
            let n = sde.n();
            for attempt in 0..4096u64 {
                let p: Vec<f64> = (0..n)
                    .map(|j| {
                        let (lo, hi) = sde.domain.bounds()[j];
                        lo + (hi - lo)
                            * rng::uniform(cfg.seed, path, u64::MAX, attempt * n as u64 + j as u64)
                    })
                    .collect();
                if sde.domain.contains(&p) {
                    return Ok(p);
                }
            }
            Err(SimError::InitialSampling)
        }
    }
}

/// Generates one Euler-Maruyama path:
/// `X_{k+1} = X_k + mu(X_k) dt + sigma(X_k) dW_k` with
/// `dW_k ~ N(0, dt I_m)` from the counter-based stream keyed by
/// `(seed, path, step)`. The path is truncated at the first domain exit.
pub fn simulate_path(sde: &Sde, cfg: &SimConfig, path_index: usize) -> Result<PathBundle, SimError> {
    if !(cfg.dt > 0.0) || !(cfg.horizon >= 0.0) {
        return Err(SimError::BadConfig(format!(
            "dt {} / horizon {}",
            cfg.dt, cfg.horizon
        )));
    }
    let n = sde.n();
    let m = sde.m();
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let mut x = Vec::with_capacity((steps + 1) * n);
    let mut w = Vec::with_capacity((steps + 1) * m);
    let mut dw_all = Vec::with_capacity(steps * m);

    let x0 = draw_initial(sde, cfg, path_index as u64)?;
    x.extend_from_slice(&x0);
    w.extend(std::iter::repeat(0.0).take(m));

    let sqrt_dt = cfg.dt.sqrt();
    let mut stop = steps;
    let mut current = x0;
    for k in 0..steps {
        let (mu, sigma) = match (sde.mu_at(&current), sde.sigma_at(&current)) {
            (Ok(mu), Ok(sigma)) => (mu, sigma),
            _ => {
                stop = k;
                break;
            }
        };
        let dw: Vec<f64> = (0..m)
            .map(|alpha| sqrt_dt * rng::normal(cfg.seed, path_index as u64, k as u64, alpha as u64))
            .collect();
        let mut next = current.clone();
        for i in 0..n {
            let mut acc = mu[i] * cfg.dt;
            for alpha in 0..m {
                acc += sigma[(i, alpha)] * dw[alpha];
            }
            next[i] += acc;
        }
        if !sde.domain.contains(&next) {
            stop = k;
            break;
        }
        for alpha in 0..m {
            let prev = w[k * m + alpha];
            w.push(prev + dw[alpha]);
        }
        dw_all.extend_from_slice(&dw);
        x.extend_from_slice(&next);
        current = next;
    }

    Ok(PathBundle { n, m, dt: cfg.dt, steps, stop, x, w, dw: dw_all })
}

/// Streams paths one at a time; memory stays O(path length).
pub fn for_each_path<F>(sde: &Sde, cfg: &SimConfig, mut f: F) -> Result<(), SimError>
where
    F: FnMut(usize, PathBundle) -> Result<(), SimError>,
{
    for p in 0..cfg.paths {
        let bundle = simulate_path(sde, cfg, p)?;
        f(p, bundle)?;
    }
    Ok(())
}

/// Generates and collects all paths of the configuration.
pub fn euler_maruyama(sde: &Sde, cfg: &SimConfig) -> Result<Vec<PathBundle>, SimError> {
    let mut out = Vec::with_capacity(cfg.paths);
    for_each_path(sde, cfg, |_, b| {
        out.push(b);
        Ok(())
    })?;
    Ok(out)
}

/// Pathwise process transformation.
///
/// Computes the clock `beta_k = sum eta(X_j) dt` (left-point rule),
/// accumulates the rotated rescaled noise increments
/// `sqrt(eta(X_k)) B(X_k) dW_k`, applies the state map, and resamples both
/// the mapped states and the new Brownian path on a uniform grid in the
/// new time by monotone piecewise-linear interpolation. The new horizon is
/// the clock value at the stop index; the node count is preserved, so the
/// new step is `beta_stop / stop` and the grid never subdivides clock
/// knots more than the clock itself warps them.
pub fn process_transform(
    t: &FiniteTransformation,
    path: &PathBundle,
) -> Result<PathBundle, SimError> {
    if t.n() != path.n || t.m() != path.m {
        return Err(SimError::Dimension("transformation vs path".into()));
    }
    let k_max = path.stop;
    if path.node_count() == 0 {
        return Err(SimError::EmptyPath);
    }
    let n = path.n;
    let m = path.m;

    // clock, mapped states, rotated noise at original nodes
    let mut beta = Vec::with_capacity(k_max + 1);
    let mut mapped = Vec::with_capacity((k_max + 1) * n);
    let mut wprime = Vec::with_capacity((k_max + 1) * m);
    beta.push(0.0);
    wprime.extend(std::iter::repeat(0.0).take(m));
    let mut clock = 0.0f64;
    let mut clock_comp = 0.0f64;
    for k in 0..=k_max {
        let p = path.x_at(k);
        let phi = t
            .phi_at(p)
            .map_err(|source| SimError::Eval { point: p.to_vec(), source })?;
        mapped.extend_from_slice(&phi);
        if k == k_max {
            break;
        }
        let eta = t
            .eta_at(p)
            .map_err(|source| SimError::Eval { point: p.to_vec(), source })?;
        if !(eta > 0.0) {
            return Err(SimError::EtaNonPositive(eta));
        }
        let b = t
            .b_at(p)
            .map_err(|source| SimError::Eval { point: p.to_vec(), source })?;
        let scale = eta.sqrt();
        let dw = path.dw_at(k);
        for alpha in 0..m {
            let mut acc = 0.0;
            for betac in 0..m {
                acc += b[(alpha, betac)] * dw[betac];
            }
            let prev = wprime[k * m + alpha];
            wprime.push(prev + scale * acc);
        }
        // compensated clock accumulation
        let y = eta * path.dt - clock_comp;
        let tt = clock + y;
        clock_comp = (tt - clock) - y;
        clock = tt;
        beta.push(clock);
    }

    if k_max == 0 {
        return Ok(PathBundle {
            n,
            m,
            dt: path.dt,
            steps: 0,
            stop: 0,
            x: mapped,
            w: wprime,
            dw: Vec::new(),
        });
    }
    let horizon = beta[k_max];
    let new_steps = k_max;
    let mut new_dt = horizon / new_steps as f64;
    if (new_dt - path.dt).abs() <= 1e-12 * path.dt {
        new_dt = path.dt; // unit clock: keep the grid identical
    }
    let mut x = Vec::with_capacity((new_steps + 1) * n);
    let mut w = Vec::with_capacity((new_steps + 1) * m);
    let mut cursor = 0usize;
    for j in 0..=new_steps {
        let target = j as f64 * new_dt;
        while cursor + 1 < beta.len() && beta[cursor + 1] < target {
            cursor += 1;
        }
        let k = cursor.min(k_max - 1);
        let (b0, b1) = (beta[k], beta[k + 1]);
        let lambda = if b1 > b0 { ((target - b0) / (b1 - b0)).clamp(0.0, 1.0) } else { 0.0 };
        let lambda = if lambda < 1e-9 {
            0.0
        } else if lambda > 1.0 - 1e-9 {
            1.0
        } else {
            lambda
        };
        for i in 0..n {
            let (v0, v1) = (mapped[k * n + i], mapped[(k + 1) * n + i]);
            x.push(if lambda == 0.0 {
                v0
            } else if lambda == 1.0 {
                v1
            } else {
                v0 + lambda * (v1 - v0)
            });
        }
        for alpha in 0..m {
            let (v0, v1) = (wprime[k * m + alpha], wprime[(k + 1) * m + alpha]);
            w.push(if lambda == 0.0 {
                v0
            } else if lambda == 1.0 {
                v1
            } else {
                v0 + lambda * (v1 - v0)
            });
        }
    }
    let dw: Vec<f64> = (0..new_steps * m)
        .map(|idx| {
            let (j, alpha) = (idx / m, idx % m);
            w[(j + 1) * m + alpha] - w[j * m + alpha]
        })
        .collect();

    Ok(PathBundle { n, m, dt: new_dt, steps: new_steps, stop: new_steps, x, w, dw })
}

/// Maximum pathwise deviation between transforming in two steps and in one
/// composite step, over aligned grid nodes, states and Brownian values.
///
/// The deviation is an interpolation artifact and shrinks like
/// `sqrt(dt)`; callers compare it against `c * sqrt(dt)`.
pub fn composition_pathwise_check(
    t1: &FiniteTransformation,
    t2: &FiniteTransformation,
    paths: &[PathBundle],
) -> Result<f64, SimError> {
    let composite = compose(t2, t1)?;
    let mut worst = 0.0f64;
    for path in paths {
        let stepped = process_transform(t2, &process_transform(t1, path)?)?;
        let direct = process_transform(&composite, path)?;
        let nodes = stepped.node_count().min(direct.node_count());
        for k in 0..nodes {
            for i in 0..path.n {
                worst = worst.max((stepped.x_at(k)[i] - direct.x_at(k)[i]).abs());
            }
            for a in 0..path.m {
                worst = worst.max((stepped.w_at(k)[a] - direct.w_at(k)[a]).abs());
            }
        }
    }
    Ok(worst)
}

/// Writes an ensemble as CSV rows `path, k, t, X components, W components`.
pub fn write_ensemble_csv<W: std::io::Write>(
    paths: &[PathBundle],
    out: &mut W,
) -> std::io::Result<()> {
    let n = paths.first().map_or(0, |p| p.n);
    let m = paths.first().map_or(0, |p| p.m);
    write!(out, "path,k,t")?;
    for i in 0..n {
        write!(out, ",x{}", i + 1)?;
    }
    for a in 0..m {
        write!(out, ",w{}", a + 1)?;
    }
    writeln!(out)?;
    for (pi, p) in paths.iter().enumerate() {
        for k in 0..p.node_count() {
            write!(out, "{pi},{k},{}", p.time_at(k))?;
            for v in p.x_at(k) {
                write!(out, ",{v}")?;
            }
            for v in p.w_at(k) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
