//! Numeric one-parameter flows of infinitesimal transformations.
//!
//! For a triad `(Y, C, tau)` and a grid of starting points this integrates
//!
//! ```text
//! d(phi)/da = Y(phi)          phi_0 = p
//! d(B)/da   = C(phi) B        B_0   = I
//! d(eta)/da = tau(phi) eta    eta_0 = 1
//! ```
//!
//! with the classical fourth-order one-step method. The first and second
//! space derivatives of the flow map ride along as variational equations,
//! so finite-symmetry checks on the flow read them at integrator accuracy
//! instead of re-deriving them by finite differences. State accumulation
//! is compensated, keeping roundoff near one ulp over long integrations.

use crate::expr::{Domain, EvalError, Expression};
use crate::model::InfinitesimalTransformation;

#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error("flow exits the domain at parameter {a:.6}")]
    ExitsDomain { a: f64 },
    #[error("flow evaluation failed at parameter {a:.6}: {source}")]
    Eval { a: f64, source: EvalError },
    #[error("flow setup: {0}")]
    Setup(String),
}

/// Full state of one flow trajectory: mapped point, Jacobian and Hessian
/// of the flow map, rotation factor, density factor.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub phi: Vec<f64>,
    /// `jac[l][i] = d phi^l / d x^i`
    pub jac: Vec<Vec<f64>>,
    /// `hess[l][i][j] = d^2 phi^l / (d x^i d x^j)`
    pub hess: Vec<Vec<Vec<f64>>>,
    pub b: Vec<Vec<f64>>,
    pub eta: f64,
}

/// A coarse trace snapshot for reporting and CSV export.
#[derive(Clone, Debug)]
pub struct FlowSample {
    pub a: f64,
    pub point: usize,
    pub phi: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub eta: f64,
}

/// Result of flowing a grid of points to parameter `a`.
#[derive(Clone, Debug)]
pub struct FlowResult {
    pub a: f64,
    pub h: f64,
    pub grid: Vec<Vec<f64>>,
    pub states: Vec<FlowState>,
    pub trace: Vec<FlowSample>,
}

impl FlowResult {
    /// Tabular export: `a, point, p..., phi..., B entries..., eta`.
    pub fn to_csv(&self) -> String {
        let n = self.grid.first().map_or(0, Vec::len);
        let m = self.states.first().map_or(0, |s| s.b.len());
        let mut out = String::new();
        out.push_str("a,point");
        for i in 0..n {
            out.push_str(&format!(",p{}", i + 1));
        }
        for i in 0..n {
            out.push_str(&format!(",phi{}", i + 1));
        }
        for i in 0..m {
            for j in 0..m {
                out.push_str(&format!(",b{}{}", i + 1, j + 1));
            }
        }
        out.push_str(",eta\n");
        for s in &self.trace {
            out.push_str(&format!("{},{}", s.a, s.point));
            for v in &self.grid[s.point] {
                out.push_str(&format!(",{v}"));
            }
            for v in &s.phi {
                out.push_str(&format!(",{v}"));
            }
            for row in &s.b {
                for v in row {
                    out.push_str(&format!(",{v}"));
                }
            }
            out.push_str(&format!(",{}\n", s.eta));
        }
        out
    }
}

/// Flat state vector with compensated accumulation.
struct Compensated {
    v: Vec<f64>,
    c: Vec<f64>,
}

impl Compensated {
    fn new(v: Vec<f64>) -> Self {
        let c = vec![0.0; v.len()];
        Compensated { v, c }
    }

    fn add(&mut self, delta: &[f64]) {
        for i in 0..self.v.len() {
            let y = delta[i] - self.c[i];
            let t = self.v[i] + y;
            self.c[i] = (t - self.v[i]) - y;
            self.v[i] = t;
        }
    }
}

/// Symbolic right-hand side data, differentiated once at setup.
struct FlowSystem {
    n: usize,
    m: usize,
    y: Vec<Expression>,
    /// `dy[l][k] = d_k Y^l`
    dy: Vec<Vec<Expression>>,
    /// `d2y[l][k][r] = d_k d_r Y^l`
    d2y: Vec<Vec<Vec<Expression>>>,
    c: Vec<Vec<Expression>>,
    tau: Expression,
}

impl FlowSystem {
    fn new(v: &InfinitesimalTransformation) -> FlowSystem {
        let n = v.n();
        let dy: Vec<Vec<Expression>> =
            v.y.iter().map(|f| (0..n).map(|k| f.differentiate(k)).collect()).collect();
        let d2y: Vec<Vec<Vec<Expression>>> = dy
            .iter()
            .map(|row| row.iter().map(|f| (0..n).map(|r| f.differentiate(r)).collect()).collect())
            .collect();
        FlowSystem { n, m: v.m(), y: v.y.clone(), dy, d2y, c: v.c.clone(), tau: v.tau.clone() }
    }

    fn state_len(&self) -> usize {
        let n = self.n;
        let m = self.m;
        n + n * n + n * n * n + m * m + 1
    }

    // state layout: [phi | jac | hess | b | eta]
    fn initial(&self, p: &[f64]) -> Vec<f64> {
        let n = self.n;
        let m = self.m;
        let mut s = vec![0.0; self.state_len()];
        s[..n].copy_from_slice(p);
        for l in 0..n {
            s[n + l * n + l] = 1.0;
        }
        let b0 = n + n * n + n * n * n;
        for i in 0..m {
            s[b0 + i * m + i] = 1.0;
        }
        s[b0 + m * m] = 1.0; // eta
        s
    }

    fn rhs(&self, state: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let n = self.n;
        let m = self.m;
        let phi = &state[..n];
        let jac = &state[n..n + n * n];
        let hess = &state[n + n * n..n + n * n + n * n * n];
        let b0 = n + n * n + n * n * n;
        let b = &state[b0..b0 + m * m];
        let eta = state[b0 + m * m];

        let mut yv = vec![0.0; n];
        for l in 0..n {
            yv[l] = self.y[l].evaluate(phi)?;
        }
        let mut dyv = vec![0.0; n * n];
        for l in 0..n {
            for k in 0..n {
                dyv[l * n + k] = self.dy[l][k].evaluate(phi)?;
            }
        }
        let mut d2yv = vec![0.0; n * n * n];
        for l in 0..n {
            for k in 0..n {
                for r in 0..n {
                    d2yv[(l * n + k) * n + r] = self.d2y[l][k][r].evaluate(phi)?;
                }
            }
        }
        let mut cv = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                cv[i * m + j] = self.c[i][j].evaluate(phi)?;
            }
        }
        let tauv = self.tau.evaluate(phi)?;

        out[..n].copy_from_slice(&yv);
        // d jac^l_i = sum_k dY^l_k jac^k_i
        for l in 0..n {
            for i in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += dyv[l * n + k] * jac[k * n + i];
                }
                out[n + l * n + i] = acc;
            }
        }
        // d hess^l_ij = sum_k dY^l_k hess^k_ij + sum_{k,r} d2Y^l_kr jac^k_i jac^r_j
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += dyv[l * n + k] * hess[(k * n + i) * n + j];
                        for r in 0..n {
                            acc += d2yv[(l * n + k) * n + r] * jac[k * n + i] * jac[r * n + j];
                        }
                    }
                    out[n + n * n + (l * n + i) * n + j] = acc;
                }
            }
        }
        // d B = C(phi) B
        for i in 0..m {
            for j in 0..m {
                let mut acc = 0.0;
                for k in 0..m {
                    acc += cv[i * m + k] * b[k * m + j];
                }
                out[b0 + i * m + j] = acc;
            }
        }
        out[b0 + m * m] = tauv * eta;
        Ok(())
    }

    fn unpack(&self, state: &[f64]) -> FlowState {
        let n = self.n;
        let m = self.m;
        let b0 = n + n * n + n * n * n;
        FlowState {
            phi: state[..n].to_vec(),
            jac: (0..n).map(|l| state[n + l * n..n + l * n + n].to_vec()).collect(),
            hess: (0..n)
                .map(|l| {
                    (0..n)
                        .map(|i| {
                            (0..n)
                                .map(|j| state[n + n * n + (l * n + i) * n + j])
                                .collect()
                        })
                        .collect()
                })
                .collect(),
            b: (0..m).map(|i| state[b0 + i * m..b0 + i * m + m].to_vec()).collect(),
            eta: state[b0 + m * m],
        }
    }
}

/// Flows every grid point to parameter `a_max`.
///
/// `h_flow` defaults to `1e-3 * |a_max|`. The integration fails with the
/// exit parameter if a trajectory leaves `domain` (box or exclusion
/// margin).
pub fn flow(
    v: &InfinitesimalTransformation,
    a_max: f64,
    grid: &[Vec<f64>],
    domain: &Domain,
    h_flow: Option<f64>,
) -> Result<FlowResult, FlowError> {
    if grid.is_empty() {
        return Err(FlowError::Setup("empty grid".into()));
    }
    for p in grid {
        if p.len() != v.n() {
            return Err(FlowError::Setup(format!(
                "grid point of dimension {}, expected {}",
                p.len(),
                v.n()
            )));
        }
        if !domain.contains(p) {
            return Err(FlowError::ExitsDomain { a: 0.0 });
        }
    }
    let sys = FlowSystem::new(v);
    let requested_h = h_flow.unwrap_or(1e-3 * a_max.abs());
    let (steps, h) = if a_max == 0.0 || requested_h <= 0.0 {
        (0usize, 0.0)
    } else {
        let k = (a_max.abs() / requested_h).round().max(1.0) as usize;
        (k, a_max / k as f64)
    };
    let trace_every = (steps / 8).max(1);

    let len = sys.state_len();
    let mut states = Vec::with_capacity(grid.len());
    let mut trace = Vec::new();
    let mut k1 = vec![0.0; len];
    let mut k2 = vec![0.0; len];
    let mut k3 = vec![0.0; len];
    let mut k4 = vec![0.0; len];
    let mut tmp = vec![0.0; len];
    let mut delta = vec![0.0; len];

    for (pi, p) in grid.iter().enumerate() {
        let mut state = Compensated::new(sys.initial(p));
        trace.push(sample_of(&sys, 0.0, pi, &state.v));
        for step in 0..steps {
            let a_here = step as f64 * h;
            let map_err = |source: EvalError| FlowError::Eval { a: a_here, source };
            sys.rhs(&state.v, &mut k1).map_err(map_err)?;
            stage(&state.v, &k1, 0.5 * h, &mut tmp);
            sys.rhs(&tmp, &mut k2).map_err(map_err)?;
            stage(&state.v, &k2, 0.5 * h, &mut tmp);
            sys.rhs(&tmp, &mut k3).map_err(map_err)?;
            stage(&state.v, &k3, h, &mut tmp);
            sys.rhs(&tmp, &mut k4).map_err(map_err)?;
            for i in 0..len {
                delta[i] = h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            state.add(&delta);
            if !domain.contains(&state.v[..sys.n]) {
                return Err(FlowError::ExitsDomain { a: (step + 1) as f64 * h });
            }
            if (step + 1) % trace_every == 0 || step + 1 == steps {
                trace.push(sample_of(&sys, (step + 1) as f64 * h, pi, &state.v));
            }
        }
        if steps == 0 {
            // a = 0: the initial snapshot is also the final one
        }
        states.push(sys.unpack(&state.v));
    }

    Ok(FlowResult { a: a_max, h, grid: grid.to_vec(), states, trace })
}

fn stage(base: &[f64], k: &[f64], scale: f64, out: &mut [f64]) {
    for i in 0..base.len() {
        out[i] = base[i] + scale * k[i];
    }
}

fn sample_of(sys: &FlowSystem, a: f64, point: usize, state: &[f64]) -> FlowSample {
    let s = sys.unpack(state);
    FlowSample { a, point, phi: s.phi, b: s.b, eta: s.eta }
}
