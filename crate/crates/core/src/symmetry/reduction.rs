//! Numeric strong reduction: given a pairwise-commuting basis of weak
//! symmetries `(Y_i, C_i, tau_i)` with independent directions at an anchor
//! point, construct grid samples of the fields `B`, `eta` solving
//!
//! ```text
//! Y_i(B)   = -B C_i         B(anchor)   = I
//! Y_i(eta) = -tau_i eta     eta(anchor) = 1
//! ```
//!
//! on a flow-box neighborhood: the grid node with parameters
//! `(a_1, ..., a_k)` is reached from the anchor by flowing along `Y_1` for
//! `a_1`, then `Y_2` for `a_2`, and so on, transporting `B` and `eta`
//! along the way. Commutativity makes the construction independent of the
//! path, which the finite-difference verification step checks on the grid.

use crate::expr::Domain;
use crate::model::{evaluate_matrix, evaluate_vector, InfinitesimalTransformation, ModelError};
use crate::symmetry::bracket;
use nalgebra::DMatrix;

/// Singular values of the anchor frame below this bound count as rank
/// deficiency.
pub const RANK_TOL: f64 = 1e-8;
/// Grid samples must satisfy the reduction equations to this tolerance
/// under the finite-difference check.
pub const REDUCTION_VERIFY_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum ReductionError {
    #[error("basis has {k} elements but the state space has dimension {n}")]
    TooManyFields { k: usize, n: usize },
    #[error("directions at the anchor are rank deficient (smallest singular value {0:.3e})")]
    RankDeficient(f64),
    #[error("basis elements {i} and {j} do not commute; only commuting bases are supported")]
    NonCommuting { i: usize, j: usize },
    #[error("reduction flow exits the domain along axis {axis} at parameter {a:.4}")]
    ExitsDomain { axis: usize, a: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Options for the flow-box construction.
#[derive(Clone, Copy, Debug)]
pub struct ReductionOptions {
    /// Half width of the parameter box along each axis.
    pub half_width: f64,
    /// Odd number of grid nodes per axis (at least 5 for verification).
    pub nodes_per_axis: usize,
    /// Step of the transport integrator.
    pub integrator_step: f64,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        ReductionOptions { half_width: 0.1, nodes_per_axis: 11, integrator_step: 1e-4 }
    }
}

/// Grid samples of the reconstructed `B` and `eta` fields.
#[derive(Clone, Debug)]
pub struct ReductionGrid {
    pub anchor: Vec<f64>,
    pub basis_size: usize,
    pub nodes_per_axis: usize,
    pub spacing: f64,
    /// Flow-box parameters of each node, axis-major order.
    pub params: Vec<Vec<f64>>,
    /// State-space location of each node.
    pub points: Vec<Vec<f64>>,
    pub b: Vec<Vec<Vec<f64>>>,
    pub eta: Vec<f64>,
    /// Largest deviation of the finite-difference directional derivatives
    /// from the reduction equations over interior grid nodes.
    pub verify_max_residual: f64,
}

impl ReductionGrid {
    pub fn node_count(&self) -> usize {
        self.points.len()
    }

    /// Tabular export: parameters, point, B entries, eta.
    pub fn to_csv(&self) -> String {
        let k = self.basis_size;
        let n = self.points.first().map_or(0, Vec::len);
        let m = self.b.first().map_or(0, Vec::len);
        let mut out = String::new();
        for i in 0..k {
            out.push_str(&format!("a{},", i + 1));
        }
        for i in 0..n {
            out.push_str(&format!("x{},", i + 1));
        }
        for i in 0..m {
            for j in 0..m {
                out.push_str(&format!("b{}{},", i + 1, j + 1));
            }
        }
        out.push_str("eta\n");
        for idx in 0..self.points.len() {
            for v in &self.params[idx] {
                out.push_str(&format!("{v},"));
            }
            for v in &self.points[idx] {
                out.push_str(&format!("{v},"));
            }
            for row in &self.b[idx] {
                for v in row {
                    out.push_str(&format!("{v},"));
                }
            }
            out.push_str(&format!("{}\n", self.eta[idx]));
        }
        out
    }
}

/// Transportable state along a reduction flow.
#[derive(Clone)]
struct Carry {
    point: Vec<f64>,
    b: DMatrix<f64>,
    eta: f64,
}

/// One RK4 transport of (point, B, eta) along basis element `axis` for
/// parameter length `da`.
fn transport(
    v: &InfinitesimalTransformation,
    carry: &Carry,
    da: f64,
    h: f64,
    domain: &Domain,
    axis: usize,
    a_start: f64,
) -> Result<Carry, ReductionError> {
    let steps = (da.abs() / h).ceil().max(1.0) as usize;
    let dh = da / steps as f64;
    let m = v.m();
    let eval = |p: &[f64]| -> Result<(Vec<f64>, DMatrix<f64>, f64), ReductionError> {
        let y = evaluate_vector(&v.y, p)
            .map_err(|source| ModelError::Eval { point: p.to_vec(), source })?;
        let c = evaluate_matrix(&v.c, p)
            .map_err(|source| ModelError::Eval { point: p.to_vec(), source })?;
        let tau = v
            .tau
            .evaluate(p)
            .map_err(|source| ModelError::Eval { point: p.to_vec(), source })?;
        Ok((y, c, tau))
    };
    let mut state = carry.clone();
    for s in 0..steps {
        // combined RK4 stage on (point, B, eta); B' = -B C(point), eta' = -tau eta
        let deriv = |st: &Carry| -> Result<(Vec<f64>, DMatrix<f64>, f64), ReductionError> {
            let (y, c, tau) = eval(&st.point)?;
            let db = -(&st.b * c);
            Ok((y, db, -tau * st.eta))
        };
        let advance = |st: &Carry, d: &(Vec<f64>, DMatrix<f64>, f64), w: f64| -> Carry {
            Carry {
                point: st.point.iter().zip(&d.0).map(|(x, k)| x + w * k).collect(),
                b: &st.b + &d.1 * w,
                eta: st.eta + w * d.2,
            }
        };
        let k1 = deriv(&state)?;
        let k2 = deriv(&advance(&state, &k1, dh / 2.0))?;
        let k3 = deriv(&advance(&state, &k2, dh / 2.0))?;
        let k4 = deriv(&advance(&state, &k3, dh))?;
        let mut next = state.clone();
        for i in 0..next.point.len() {
            next.point[i] += dh / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]);
        }
        for i in 0..m {
            for j in 0..m {
                next.b[(i, j)] += dh / 6.0
                    * (k1.1[(i, j)] + 2.0 * k2.1[(i, j)] + 2.0 * k3.1[(i, j)] + k4.1[(i, j)]);
            }
        }
        next.eta += dh / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
        if !domain.contains(&next.point) {
            return Err(ReductionError::ExitsDomain { axis, a: a_start + (s + 1) as f64 * dh });
        }
        state = next;
    }
    Ok(state)
}

/// Solves the strong-reduction equations on a flow-box grid around
/// `anchor`.
///
/// Preconditions checked here: at most `n` basis elements, directions
/// linearly independent at the anchor (singular values above
/// [`RANK_TOL`]), and pairwise-vanishing brackets (the general
/// non-commuting case is unsupported and reported as an error).
pub fn strong_reduction_solve(
    basis: &[InfinitesimalTransformation],
    domain: &Domain,
    anchor: &[f64],
    opts: ReductionOptions,
) -> Result<ReductionGrid, ReductionError> {
    let k = basis.len();
    assert!(k > 0, "empty basis");
    let n = basis[0].n();
    let m = basis[0].m();
    if k > n {
        return Err(ReductionError::TooManyFields { k, n });
    }
    if !domain.contains(anchor) {
        return Err(ReductionError::ExitsDomain { axis: 0, a: 0.0 });
    }

    // frame rank at the anchor
    let mut frame = DMatrix::<f64>::zeros(n, k);
    for (j, v) in basis.iter().enumerate() {
        let col = evaluate_vector(&v.y, anchor)
            .map_err(|source| ModelError::Eval { point: anchor.to_vec(), source })?;
        for i in 0..n {
            frame[(i, j)] = col[i];
        }
    }
    let smallest = frame.svd(false, false).singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smallest > RANK_TOL) {
        return Err(ReductionError::RankDeficient(smallest));
    }

    // pairwise commutativity
    for i in 0..k {
        for j in (i + 1)..k {
            let br = bracket(&basis[i], &basis[j])?;
            let mut vanishes = true;
            for e in br.y.iter().chain(br.c.iter().flatten()).chain(std::iter::once(&br.tau)) {
                vanishes &= e.is_zero(domain).map_err(ModelError::from)?;
            }
            if !vanishes {
                return Err(ReductionError::NonCommuting { i: i + 1, j: j + 1 });
            }
        }
    }

    let nodes = opts.nodes_per_axis;
    assert!(nodes >= 3 && nodes % 2 == 1, "nodes_per_axis must be odd and >= 3");
    let q = nodes / 2;
    let spacing = opts.half_width / q as f64;
    let total = nodes.pow(k as u32);

    let mut states: Vec<Option<Carry>> = vec![None; total];
    let stride = |axis: usize| nodes.pow(axis as u32);
    let center: usize = (0..k).map(|axis| q * stride(axis)).sum();
    states[center] =
        Some(Carry { point: anchor.to_vec(), b: DMatrix::identity(m, m), eta: 1.0 });

    // fill axis by axis: nodes along axis 0 first, then from each of those
    // along axis 1, and so on; node (i_1..i_k) is reached by flowing the
    // basis fields in order.
    for axis in 0..k {
        // all indices whose later axes sit at the center line
        let mut bases: Vec<usize> = vec![center];
        for earlier in 0..axis {
            let mut extended = Vec::new();
            for b in &bases {
                for step in 0..nodes {
                    let idx = b - q * stride(earlier) + step * stride(earlier);
                    extended.push(idx);
                }
            }
            bases = extended;
        }
        let v = &basis[axis];
        for &base in &bases {
            // march out from the center of this axis in both directions
            for dir in [1i64, -1i64] {
                let mut carry = states[base].clone().expect("base state filled");
                for step in 1..=q {
                    let a0 = (step as f64 - 1.0) * spacing * dir as f64;
                    carry = transport(v, &carry, dir as f64 * spacing, opts.integrator_step, domain, axis, a0)?;
                    let idx = (base as i64 + dir * step as i64 * stride(axis) as i64) as usize;
                    states[idx] = Some(carry.clone());
                }
            }
        }
    }

    let mut params = Vec::with_capacity(total);
    let mut points = Vec::with_capacity(total);
    let mut b_out = Vec::with_capacity(total);
    let mut eta_out = Vec::with_capacity(total);
    for idx in 0..total {
        let carry = states[idx].as_ref().expect("grid fully filled");
        let mut a = Vec::with_capacity(k);
        let mut rest = idx;
        for _axis in 0..k {
            let i = rest % nodes;
            rest /= nodes;
            a.push((i as f64 - q as f64) * spacing);
        }
        params.push(a);
        points.push(carry.point.clone());
        b_out.push((0..m).map(|i| (0..m).map(|j| carry.b[(i, j)]).collect()).collect());
        eta_out.push(carry.eta);
    }

    let mut grid = ReductionGrid {
        anchor: anchor.to_vec(),
        basis_size: k,
        nodes_per_axis: nodes,
        spacing,
        params,
        points,
        b: b_out,
        eta: eta_out,
        verify_max_residual: 0.0,
    };
    grid.verify_max_residual = verify_on_grid(basis, &grid)?;
    Ok(grid)
}

/// Finite-difference check of the reduction equations on the grid: along
/// every axis, the fourth-order five-point derivative of `B` (and `eta`)
/// at interior nodes must match `-B C_i` (and `-tau_i eta`) at that node.
fn verify_on_grid(
    basis: &[InfinitesimalTransformation],
    grid: &ReductionGrid,
) -> Result<f64, ReductionError> {
    let k = grid.basis_size;
    let nodes = grid.nodes_per_axis;
    if nodes < 5 {
        return Ok(f64::NAN);
    }
    let m = basis[0].m();
    let stride = |axis: usize| nodes.pow(axis as u32);
    let mut worst = 0.0f64;

    for idx in 0..grid.points.len() {
        // decode multi-index, require distance >= 2 from every face
        let mut rest = idx;
        let mut interior = true;
        for _ in 0..k {
            let i = rest % nodes;
            rest /= nodes;
            interior &= i >= 2 && i + 2 < nodes;
        }
        if !interior {
            continue;
        }
        let p = &grid.points[idx];
        for (axis, v) in basis.iter().enumerate() {
            let s = stride(axis);
            let c = evaluate_matrix(&v.c, p)
                .map_err(|source| ModelError::Eval { point: p.clone(), source })?;
            let tau = v
                .tau
                .evaluate(p)
                .map_err(|source| ModelError::Eval { point: p.clone(), source })?;
            let b0 = &grid.b[idx];
            // -B C at the node
            for i in 0..m {
                for j in 0..m {
                    let fd = (-grid.b[idx + 2 * s][i][j] + 8.0 * grid.b[idx + s][i][j]
                        - 8.0 * grid.b[idx - s][i][j]
                        + grid.b[idx - 2 * s][i][j])
                        / (12.0 * grid.spacing);
                    let mut rhs = 0.0;
                    for l in 0..m {
                        rhs -= b0[i][l] * c[(l, j)];
                    }
                    worst = worst.max((fd - rhs).abs());
                }
            }
            let fd_eta = (-grid.eta[idx + 2 * s] + 8.0 * grid.eta[idx + s]
                - 8.0 * grid.eta[idx - s]
                + grid.eta[idx - 2 * s])
                / (12.0 * grid.spacing);
            worst = worst.max((fd_eta + tau * grid.eta[idx]).abs());
        }
    }
    Ok(worst)
}
