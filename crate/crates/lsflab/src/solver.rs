//! Arrival time computation.
//!
//! Two routes to the same function u:
//!  * parabolic: evolve the level-set function by mean curvature motion
//!    (explicit stepping on a narrow active band with periodic
//!    reinitialization) and record per node the first zero crossing time;
//!  * elliptic: solve the epsilon-regularized degenerate equation
//!    -(I - grad u (x) grad u / (|grad u|^2 + eps^2)) : Hess u = 1 on the
//!    interior with u = 0 imposed sub-grid on the initial zero set, for a
//!    decreasing schedule of eps, by nonlinear red-black SOR sweeps.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use crate::error::{LsfError, Result};
use crate::grid::{ScalarField, UniformGrid};

/// Isotropic regularization of |grad psi| in the parabolic scheme.
const GRAD_DELTA: f64 = 1e-8;
/// Half-width of the active band in cells around the interface.
const BAND_CELLS: usize = 6;
/// Clamp for the cut-cell boundary fraction in the elliptic solver.
const THETA_MIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Parabolic,
    EllipticRegularized,
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    /// Time step safety factor in (0, 0.5]; dt = cfl * h^2 / (2n).
    pub cfl: f64,
    /// Strictly decreasing, positive.
    pub epsilon_schedule: Vec<f64>,
    /// Sweep cap per epsilon stage.
    pub max_sweeps: usize,
    /// Max-norm residual target for the elliptic stages.
    pub residual_tol: f64,
    /// Reinitialize the level-set function every this many steps.
    pub reinit_every: usize,
    /// Hard cap on parabolic steps.
    pub max_steps: usize,
    /// Times at which to keep level-set snapshots.
    pub snapshot_times: Vec<f64>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            cfl: 0.45,
            epsilon_schedule: vec![0.2, 0.1, 0.05],
            max_sweeps: 6000,
            residual_tol: 1e-5,
            reinit_every: 20,
            max_steps: 2_000_000,
            snapshot_times: Vec::new(),
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return Err(LsfError::Config(format!("cfl {} outside (0, 0.5]", self.cfl)));
        }
        if self.epsilon_schedule.is_empty() {
            return Err(LsfError::Config("empty epsilon schedule".into()));
        }
        for w in self.epsilon_schedule.windows(2) {
            if !(w[1] < w[0]) {
                return Err(LsfError::Config("epsilon schedule must be strictly decreasing".into()));
            }
        }
        if self.epsilon_schedule.iter().any(|&e| !(e > 0.0)) {
            return Err(LsfError::Config("epsilon values must be positive".into()));
        }
        if self.reinit_every == 0 {
            return Err(LsfError::Config("reinit_every must be positive".into()));
        }
        Ok(())
    }

    pub fn dt(&self, h: f64) -> f64 {
        self.cfl * h * h / 6.0
    }
}

#[derive(Debug, Clone)]
pub struct ArrivalResult {
    /// Arrival time, zero on and outside the initial surface.
    pub u: ScalarField,
    pub extinction_time: f64,
    pub method: Method,
    pub diagnostics: BTreeMap<String, f64>,
    /// (time, level-set field) pairs at the requested snapshot times.
    pub snapshots: Vec<(f64, ScalarField)>,
    /// Per-epsilon fields of the elliptic route, in schedule order.
    pub per_epsilon: Vec<(f64, ScalarField)>,
    /// Set when the solve ended without meeting its target (partial result).
    pub failure: Option<String>,
}

impl ArrivalResult {
    pub fn extinction_time(&self) -> f64 {
        self.u.values.iter().cloned().fold(0.0, f64::max)
    }
}

struct Band {
    /// Linear indices of active interior nodes.
    active: Vec<u32>,
    /// True where the node is interface-adjacent (frozen during reinit).
    interface: Vec<bool>,
    has_interface: bool,
}

fn rebuild_band(grid: &UniformGrid, psi: &[f64]) -> Band {
    let [nx, ny, nz] = grid.dims;
    let sx = 1usize;
    let sy = nx;
    let sz = nx * ny;
    let n = psi.len();
    let mut level = vec![u8::MAX; n];
    let mut interface = vec![false; n];
    let mut frontier: Vec<u32> = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = (k * ny + j) * nx + i;
                let v = psi[idx];
                let mut touch = false;
                if i + 1 < nx && v * psi[idx + sx] < 0.0 {
                    touch = true;
                }
                if j + 1 < ny && v * psi[idx + sy] < 0.0 {
                    touch = true;
                }
                if k + 1 < nz && v * psi[idx + sz] < 0.0 {
                    touch = true;
                }
                if i > 0 && v * psi[idx - sx] < 0.0 {
                    touch = true;
                }
                if j > 0 && v * psi[idx - sy] < 0.0 {
                    touch = true;
                }
                if k > 0 && v * psi[idx - sz] < 0.0 {
                    touch = true;
                }
                if touch {
                    level[idx] = 0;
                    interface[idx] = true;
                    frontier.push(idx as u32);
                }
            }
        }
    }
    let has_interface = !frontier.is_empty();
    // Chebyshev dilation by BAND_CELLS layers
    let mut all = frontier.clone();
    for layer in 1..=BAND_CELLS as u8 {
        let mut next = Vec::new();
        for &idx in &frontier {
            let [i, j, k] = grid.node_of(idx as usize);
            for dk in -1..=1isize {
                for dj in -1..=1isize {
                    for di in -1..=1isize {
                        let (ni, nj, nk) =
                            (i as isize + di, j as isize + dj, k as isize + dk);
                        if ni < 0 || nj < 0 || nk < 0 {
                            continue;
                        }
                        let (ni, nj, nk) = (ni as usize, nj as usize, nk as usize);
                        if ni >= nx || nj >= ny || nk >= nz {
                            continue;
                        }
                        let nidx = (nk * ny + nj) * nx + ni;
                        if level[nidx] > layer {
                            level[nidx] = layer;
                            next.push(nidx as u32);
                        }
                    }
                }
            }
        }
        all.extend_from_slice(&next);
        frontier = next;
    }
    // only interior nodes are stepped
    let mut active: Vec<u32> = all
        .into_iter()
        .filter(|&idx| grid.is_interior(grid.node_of(idx as usize), 2))
        .collect();
    active.sort_unstable();
    Band { active, interface, has_interface }
}

/// Parabolic route: mean curvature motion with first-crossing recording.
pub fn solve_parabolic(initial: &ScalarField, config: &SolveConfig) -> Result<ArrivalResult> {
    config.validate()?;
    let start = Instant::now();
    let grid = initial.grid.clone();
    let [nx, ny, _] = grid.dims;
    let (sx, sy, sz) = (1usize, nx, nx * ny);
    let h = grid.h;
    let dt = config.dt(h);
    let h2 = h * h;
    let delta2 = GRAD_DELTA * GRAD_DELTA;

    let mut psi = initial.values.clone();
    let mut scratch = psi.clone();
    // per-active-node step results, aligned with band.active
    let mut updates: Vec<f64> = Vec::new();
    let n_total = psi.len();
    let mut u = vec![0.0f64; n_total];
    let mut crossed = vec![false; n_total];
    let mut neg_count = 0usize;
    for (idx, &v) in psi.iter().enumerate() {
        if v >= 0.0 {
            crossed[idx] = true;
        } else {
            neg_count += 1;
        }
    }
    if neg_count == 0 {
        return Err(LsfError::Config("initial field has no interior".into()));
    }

    let mut snapshot_times: Vec<f64> = config.snapshot_times.clone();
    snapshot_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut snapshots: Vec<(f64, ScalarField)> = Vec::new();
    let mut next_snapshot = 0usize;

    let mut band = rebuild_band(&grid, &psi);
    let mut t = 0.0f64;
    let mut steps = 0usize;
    let mut reinits = 0usize;
    let mut clamps = 0usize;
    let mut recrossings = 0usize;
    let mut completions = 0usize;
    let mut failure = None;

    'time: while neg_count > 0 {
        if steps >= config.max_steps {
            failure = Some(format!("no extinction within {} steps", config.max_steps));
            break;
        }
        // one explicit step of psi_t = trace(P Hess psi) on the active band;
        // a pure map per node, so thread count cannot change the result
        use rayon::prelude::*;
        let psi_ref = &psi;
        band.active
            .par_iter()
            .map(|&idx_u| {
                let psi = psi_ref;
                let idx = idx_u as usize;
                let c = psi[idx];
            let xp = psi[idx + sx];
            let xm = psi[idx - sx];
            let yp = psi[idx + sy];
            let ym = psi[idx - sy];
            let zp = psi[idx + sz];
            let zm = psi[idx - sz];
            let gx = (xp - xm) / (2.0 * h);
            let gy = (yp - ym) / (2.0 * h);
            let gz = (zp - zm) / (2.0 * h);
            let g2 = gx * gx + gy * gy + gz * gz + delta2;
            let dxx = (xp - 2.0 * c + xm) / h2;
            let dyy = (yp - 2.0 * c + ym) / h2;
            let dzz = (zp - 2.0 * c + zm) / h2;
            let dxy = (psi[idx + sx + sy] - psi[idx + sx - sy] - psi[idx - sx + sy]
                + psi[idx - sx - sy])
                / (4.0 * h2);
            let dxz = (psi[idx + sx + sz] - psi[idx + sx - sz] - psi[idx - sx + sz]
                + psi[idx - sx - sz])
                / (4.0 * h2);
            let dyz = (psi[idx + sy + sz] - psi[idx + sy - sz] - psi[idx - sy + sz]
                + psi[idx - sy - sz])
                / (4.0 * h2);
                let normal_part = (gx * gx * dxx
                    + gy * gy * dyy
                    + gz * gz * dzz
                    + 2.0 * (gx * gy * dxy + gx * gz * dxz + gy * gz * dyz))
                    / g2;
                c + dt * (dxx + dyy + dzz - normal_part)
            })
            .collect_into_vec(&mut updates);
        let t_next = t + dt;
        // first-crossing bookkeeping
        for (&idx_u, &new) in band.active.iter().zip(updates.iter()) {
            let idx = idx_u as usize;
            let old = psi[idx];
            if old < 0.0 && new >= 0.0 {
                if crossed[idx] {
                    recrossings += 1;
                } else {
                    crossed[idx] = true;
                    neg_count -= 1;
                    u[idx] = t + dt * old / (old - new);
                }
            } else if old >= 0.0 && new < 0.0 && crossed[idx] {
                recrossings += 1;
            } else if old < 0.0 && new < 0.0 {
                // still inside
            }
            psi[idx] = new;
        }
        t = t_next;
        steps += 1;

        if next_snapshot < snapshot_times.len() && t >= snapshot_times[next_snapshot] {
            snapshots.push((t, ScalarField { grid: grid.clone(), values: psi.clone() }));
            next_snapshot += 1;
        }

        if steps % config.reinit_every == 0 {
            if psi.iter().any(|v| !v.is_finite()) {
                return Err(LsfError::Numerical(format!(
                    "non-finite level-set value at step {steps}"
                )));
            }
            clamps += reinitialize(&grid, &mut psi, &mut scratch, &band, h);
            reinits += 1;
            completions += complete_unresolved_pockets(
                &grid, &mut psi, &mut u, &mut crossed, &mut neg_count, t, h,
            );
            band = rebuild_band(&grid, &psi);
            if !band.has_interface {
                // no sign changes left; verify global extinction
                if psi.iter().all(|&v| v >= 0.0) {
                    neg_count = 0;
                    break 'time;
                }
            }
        }
    }

    let extinction_time = u.iter().cloned().fold(0.0, f64::max);
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("steps".into(), steps as f64);
    diagnostics.insert("dt".into(), dt);
    diagnostics.insert("reinits".into(), reinits as f64);
    diagnostics.insert("reinit_sign_clamps".into(), clamps as f64);
    diagnostics.insert("recrossings".into(), recrossings as f64);
    diagnostics.insert("pocket_completions".into(), completions as f64);
    diagnostics.insert("uncrossed_nodes".into(), neg_count as f64);
    diagnostics.insert("wallclock_ms".into(), start.elapsed().as_secs_f64() * 1e3);
    Ok(ArrivalResult {
        u: ScalarField { grid, values: u },
        extinction_time,
        method: Method::Parabolic,
        diagnostics,
        snapshots,
        per_epsilon: Vec::new(),
        failure,
    })
}

/// Finish the arrival times of interior pockets the grid can no longer
/// resolve. Once a connected interior component fits in a few cells its
/// flow is asymptotically round (vanishing points are round), so stepping
/// it further only accumulates stencil error; instead its remaining
/// arrival times follow the shrinking-ball model
/// u = t + (M^2 - (M - d)^2) / 4, where d is the depth (inward distance
/// to the interface) and M the maximal depth of the pocket. Elongated
/// components (collapsing tubes) are left to the stepper. Returns the
/// number of completed pockets.
fn complete_unresolved_pockets(
    grid: &UniformGrid,
    psi: &mut [f64],
    u: &mut [f64],
    crossed: &mut [bool],
    neg_count: &mut usize,
    t: f64,
    h: f64,
) -> usize {
    let mask: Vec<bool> = psi.iter().map(|&v| v < 0.0).collect();
    let [nx, ny, _] = grid.dims;
    let strides: [isize; 6] = [
        -1,
        1,
        -(nx as isize),
        nx as isize,
        -((nx * ny) as isize),
        (nx * ny) as isize,
    ];
    let mut completed = 0usize;
    for comp in crate::grid::connected_components(grid, &mask, crate::grid::Adjacency::Faces6) {
        let mut max_depth = 0.0f64;
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for &idx in &comp {
            max_depth = max_depth.max(-psi[idx]);
            let n = grid.node_of(idx);
            for a in 0..3 {
                lo[a] = lo[a].min(n[a]);
                hi[a] = hi[a].max(n[a]);
            }
        }
        let extent = (0..3).map(|a| hi[a] - lo[a]).max().unwrap_or(0);
        if max_depth >= 3.0 * h || extent > 8 {
            continue;
        }
        // depth-weighted centroid as the vanishing point; psi magnitudes
        // inside the pocket are unreliable (the reinit freezes everything
        // interface-adjacent), so the radius comes from the edge zero
        // crossings instead
        let mut x0 = [0.0f64; 3];
        let mut wsum = 0.0;
        for &idx in &comp {
            let w = -psi[idx];
            let p = grid.position(grid.node_of(idx));
            for a in 0..3 {
                x0[a] += w * p[a];
            }
            wsum += w;
        }
        for a in 0..3 {
            x0[a] /= wsum;
        }
        let mut radius = 0.0f64;
        let mut crossings = 0usize;
        for &idx in &comp {
            let p = grid.position(grid.node_of(idx));
            for (s, stride) in strides.iter().enumerate() {
                let nb = idx as isize + stride;
                let v_out = psi[nb as usize];
                if v_out < 0.0 {
                    continue;
                }
                let theta = psi[idx] / (psi[idx] - v_out);
                let mut cp = p;
                cp[s / 2] += theta * h * if s % 2 == 0 { -1.0 } else { 1.0 };
                let r2: f64 = (0..3).map(|a| (cp[a] - x0[a]) * (cp[a] - x0[a])).sum();
                radius += r2.sqrt();
                crossings += 1;
            }
        }
        radius /= crossings.max(1) as f64;
        for &idx in &comp {
            let p = grid.position(grid.node_of(idx));
            let r2: f64 = (0..3).map(|a| (p[a] - x0[a]) * (p[a] - x0[a])).sum();
            debug_assert!(!crossed[idx]);
            crossed[idx] = true;
            *neg_count -= 1;
            u[idx] = t + (radius * radius - r2).max(0.0) / 4.0;
            psi[idx] = 0.5 * h;
        }
        completed += 1;
    }
    completed
}

/// A few iterations of the distance-restoring evolution
/// psi_tau = sign(psi0)(1 - |grad psi|) with Godunov upwinding, frozen on
/// interface-adjacent nodes so the zero set cannot move. Returns the number
/// of sign-preservation clamps applied.
fn reinitialize(
    grid: &UniformGrid,
    psi: &mut [f64],
    scratch: &mut [f64],
    band: &Band,
    h: f64,
) -> usize {
    let [nx, ny, _] = grid.dims;
    let (sx, sy, sz) = (1usize, nx, nx * ny);
    let dtau = 0.5 * h;
    let iters = 2 * BAND_CELLS + 4;
    let signs: Vec<f64> = band
        .active
        .iter()
        .map(|&i| if psi[i as usize] >= 0.0 { 1.0 } else { -1.0 })
        .collect();
    let mut clamps = 0usize;
    for _ in 0..iters {
        for (&idx_u, &s) in band.active.iter().zip(signs.iter()) {
            let idx = idx_u as usize;
            if band.interface[idx] {
                scratch[idx] = psi[idx];
                continue;
            }
            let c = psi[idx];
            let mut g2 = 0.0;
            for stride in [sx, sy, sz] {
                let a = (c - psi[idx - stride]) / h; // backward
                let b = (psi[idx + stride] - c) / h; // forward
                let d = if s > 0.0 {
                    f64::max(a.max(0.0).powi(2), b.min(0.0).powi(2))
                } else {
                    f64::max(a.min(0.0).powi(2), b.max(0.0).powi(2))
                };
                g2 += d;
            }
            let mut new = c - dtau * s * (g2.sqrt() - 1.0);
            if new * s < 0.0 {
                new = s * 1e-12 * h;
                clamps += 1;
            }
            scratch[idx] = new;
        }
        for &idx_u in &band.active {
            let idx = idx_u as usize;
            psi[idx] = scratch[idx];
        }
    }
    clamps
}

/// Elliptic route: nonlinear red-black SOR on the eps-regularized equation
/// for each eps in the schedule, warm-starting from the previous stage.
pub fn solve_elliptic(initial: &ScalarField, config: &SolveConfig) -> Result<ArrivalResult> {
    config.validate()?;
    let start = Instant::now();
    let grid = initial.grid.clone();
    let [nx, ny, nz] = grid.dims;
    let (sx, sy, sz) = (1usize, nx, nx * ny);
    let h = grid.h;
    let h2 = h * h;
    let psi0 = &initial.values;

    // unknowns: interior nodes with full stencil room
    let mut interior: Vec<u32> = Vec::new();
    for k in 2..nz - 2 {
        for j in 2..ny - 2 {
            for i in 2..nx - 2 {
                let idx = (k * ny + j) * nx + i;
                if psi0[idx] < 0.0 {
                    interior.push(idx as u32);
                }
            }
        }
    }
    if interior.is_empty() {
        return Err(LsfError::Config("initial field has no interior".into()));
    }
    let is_interior: Vec<bool> = {
        let mut m = vec![false; psi0.len()];
        for &i in &interior {
            m[i as usize] = true;
        }
        m
    };
    // Shortley-Weller arm lengths (in units of h) towards the 6 neighbors:
    // 1 on a regular edge, the clamped cut fraction theta where the edge
    // crosses the zero set. Exterior u stays 0, which is exactly the
    // Dirichlet value the short arm needs.
    let arms: Vec<[f64; 6]> = interior
        .iter()
        .map(|&iu| {
            let idx = iu as usize;
            let mut a = [1.0f64; 6];
            for (slot, nb) in [
                (0, idx + sx),
                (1, idx - sx),
                (2, idx + sy),
                (3, idx - sy),
                (4, idx + sz),
                (5, idx - sz),
            ] {
                if !is_interior[nb] {
                    let pi = psi0[idx];
                    let pg = psi0[nb];
                    a[slot] = if pg > pi { (pi / (pi - pg)).clamp(THETA_MIN, 1.0) } else { THETA_MIN };
                }
            }
            a
        })
        .collect();
    let arm_of = {
        let mut slot = vec![u32::MAX; psi0.len()];
        for (i, &iu) in interior.iter().enumerate() {
            slot[iu as usize] = i as u32;
        }
        slot
    };

    let red_black: [Vec<u32>; 2] = {
        let mut rb = [Vec::new(), Vec::new()];
        for &iu in &interior {
            let [i, j, k] = grid.node_of(iu as usize);
            rb[(i + j + k) % 2].push(iu);
        }
        rb
    };

    let mut u = vec![0.0f64; psi0.len()];
    let mut per_epsilon = Vec::new();
    let mut diagnostics = BTreeMap::new();
    let mut failure = None;
    let omega = 1.5;

    for (stage, &eps) in config.epsilon_schedule.iter().enumerate() {
        if eps < h {
            diagnostics.insert(format!("eps_below_h_warning_{stage}"), 1.0);
        }
        let eps2 = eps * eps;
        let mut residual = f64::INFINITY;
        let mut sweeps = 0usize;
        while sweeps < config.max_sweeps {
            for color in &red_black {
                for &iu in color {
                    let idx = iu as usize;
                    let a = &arms[arm_of[idx] as usize];
                    let (gs, diag) = stencil_apply(&u, idx, a, sx, sy, sz, h, h2, eps2);
                    let u_gs = (gs + 1.0) / diag;
                    u[idx] += omega * (u_gs - u[idx]);
                }
            }
            sweeps += 1;
            if sweeps % 10 == 0 || sweeps == config.max_sweeps {
                residual = 0.0;
                for &iu in &interior {
                    let idx = iu as usize;
                    let a = &arms[arm_of[idx] as usize];
                    let (gs, diag) = stencil_apply(&u, idx, a, sx, sy, sz, h, h2, eps2);
                    let r = (gs - diag * u[idx]) + 1.0;
                    residual = residual.max(r.abs());
                    if !r.is_finite() {
                        return Err(LsfError::Numerical(format!(
                            "non-finite elliptic residual at stage {stage}"
                        )));
                    }
                }
                if residual < config.residual_tol {
                    break;
                }
            }
        }
        if residual >= config.residual_tol {
            failure = Some(format!(
                "elliptic stage eps={eps} stagnated at residual {residual:.3e} after {sweeps} sweeps"
            ));
        }
        diagnostics.insert(format!("sweeps_eps_{stage}"), sweeps as f64);
        diagnostics.insert(format!("residual_eps_{stage}"), residual);

        // stage field: interior values, zero elsewhere, tiny negatives clamped
        let mut stage_u = vec![0.0f64; u.len()];
        let mut clamped = 0usize;
        for &iu in &interior {
            let idx = iu as usize;
            if u[idx] < 0.0 {
                clamped += 1;
            } else {
                stage_u[idx] = u[idx];
            }
        }
        diagnostics.insert(format!("negative_clamps_eps_{stage}"), clamped as f64);
        per_epsilon.push((eps, ScalarField { grid: grid.clone(), values: stage_u }));
    }

    let final_u = per_epsilon.last().unwrap().1.clone();
    let extinction_time = final_u.values.iter().cloned().fold(0.0, f64::max);
    diagnostics.insert("wallclock_ms".into(), start.elapsed().as_secs_f64() * 1e3);
    Ok(ArrivalResult {
        u: final_u,
        extinction_time,
        method: Method::EllipticRegularized,
        diagnostics,
        snapshots: Vec::new(),
        per_epsilon,
        failure,
    })
}

/// Neighbor part and diagonal coefficient of the regularized operator at a
/// node, with Shortley-Weller arms: A : Hess u = gs - diag * u0. The
/// coefficient matrix A is evaluated from the current gradient iterate.
#[inline]
#[allow(clippy::too_many_arguments)]
fn stencil_apply(
    u: &[f64],
    idx: usize,
    arms: &[f64; 6],
    sx: usize,
    sy: usize,
    sz: usize,
    h: f64,
    h2: f64,
    eps2: f64,
) -> (f64, f64) {
    let xp = u[idx + sx];
    let xm = u[idx - sx];
    let yp = u[idx + sy];
    let ym = u[idx - sy];
    let zp = u[idx + sz];
    let zm = u[idx - sz];
    let [lxp, lxm, lyp, lym, lzp, lzm] = *arms;
    let gx = (xp - xm) / ((lxp + lxm) * h);
    let gy = (yp - ym) / ((lyp + lym) * h);
    let gz = (zp - zm) / ((lzp + lzm) * h);
    let g2 = gx * gx + gy * gy + gz * gz + eps2;
    let axx = 1.0 - gx * gx / g2;
    let ayy = 1.0 - gy * gy / g2;
    let azz = 1.0 - gz * gz / g2;
    let axy = -gx * gy / g2;
    let axz = -gx * gz / g2;
    let ayz = -gy * gz / g2;
    let dxy = (u[idx + sx + sy] - u[idx + sx - sy] - u[idx - sx + sy] + u[idx - sx - sy]) / (4.0 * h2);
    let dxz = (u[idx + sx + sz] - u[idx + sx - sz] - u[idx - sx + sz] + u[idx - sx - sz]) / (4.0 * h2);
    let dyz = (u[idx + sy + sz] - u[idx + sy - sz] - u[idx - sy + sz] + u[idx - sy - sz]) / (4.0 * h2);
    // unequal-arm second difference:
    //   u'' ~ 2/(lm + lp) [ (um - u0)/lm + (up - u0)/lp ] / h^2
    // whose u0 coefficient is 2/(lm lp h^2)
    let neighbor = (axx * 2.0 / (lxp + lxm) * (xp / lxp + xm / lxm)
        + ayy * 2.0 / (lyp + lym) * (yp / lyp + ym / lym)
        + azz * 2.0 / (lzp + lzm) * (zp / lzp + zm / lzm))
        / h2;
    let cross = 2.0 * (axy * dxy + axz * dxz + ayz * dyz);
    let diag = 2.0 * (axx / (lxp * lxm) + ayy / (lyp * lym) + azz / (lzp * lzm)) / h2;
    // -(A:Hess u) = diag*u0 - neighbor - cross; solving -(A:Hess u) = 1
    // for u0 uses gs = neighbor + cross with u0 = (gs + 1)/diag.
    (neighbor + cross, diag)
}

/// Max |grad u| over nodes with positive arrival time (central differences).
pub fn max_gradient(result: &ArrivalResult) -> f64 {
    let grid = &result.u.grid;
    let u = &result.u.values;
    let [nx, ny, _] = grid.dims;
    let (sx, sy, sz) = (1usize, nx, nx * ny);
    let h = grid.h;
    let mut max_g: f64 = 0.0;
    for n in grid.interior_nodes(1) {
        let idx = grid.index(n);
        if u[idx] <= 0.0 {
            continue;
        }
        let gx = (u[idx + sx] - u[idx - sx]) / (2.0 * h);
        let gy = (u[idx + sy] - u[idx - sy]) / (2.0 * h);
        let gz = (u[idx + sz] - u[idx - sz]) / (2.0 * h);
        max_g = max_g.max((gx * gx + gy * gy + gz * gz).sqrt());
    }
    max_g
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientBoundCheck {
    pub max_grad: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Arrival-time gradient bound |grad u| <= 1/min_H + 10h.
pub fn gradient_bound_check(result: &ArrivalResult, min_mean_curvature: f64) -> GradientBoundCheck {
    let max_grad = max_gradient(result);
    let bound = 1.0 / min_mean_curvature + 10.0 * result.u.grid.h;
    GradientBoundCheck { max_grad, bound, pass: max_grad <= bound }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClearingCheck {
    pub t: f64,
    pub min_distance: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Monotone clearing: the superlevel set {u > T} must sit at distance at
/// least kappa*T - 3h from the initial surface. Distances are read off the
/// initial (approximate) SDF.
pub fn clearing_distance_check(
    result: &ArrivalResult,
    initial: &ScalarField,
    kappa: f64,
    times: &[f64],
) -> Vec<ClearingCheck> {
    let grid = &result.u.grid;
    let h = grid.h;
    times
        .iter()
        .map(|&t| {
            let mut min_dist = f64::INFINITY;
            for (idx, &uv) in result.u.values.iter().enumerate() {
                if uv > t {
                    min_dist = min_dist.min(-initial.values[idx]);
                }
            }
            let bound = kappa * t - 3.0 * h;
            ClearingCheck { t, min_distance: min_dist, bound, pass: min_dist >= bound }
        })
        .collect()
}

/// Entropy of each stored snapshot's zero set, for the discrete
/// monotonicity check. Snapshots whose zero set is too small to sample are
/// skipped.
pub fn snapshot_entropy_series(result: &ArrivalResult) -> Vec<(f64, f64)> {
    let mut series = Vec::new();
    for (t, field) in &result.snapshots {
        if let Ok(samples) = crate::shapes::surface_samples(field, 64) {
            series.push((*t, crate::metrics::entropy_of_field(field, &samples)));
        }
    }
    series
}
