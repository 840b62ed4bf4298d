//! Perturbation experiments: how do arrival time, extinction time and the
//! singular set respond to small perturbations of the initial surface?
//!
//! A plan fixes a base shape and a perturbation family; the experiment
//! solves the flow for each amplitude and compares against the unperturbed
//! run, producing one row per amplitude.

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{LsfError, Result};
use crate::grid::{ScalarField, UniformGrid};
use crate::shapes::{self, PerturbationSpec, PerturbMode, ShapeSpec};
use crate::singular::{self, SingularType};
use crate::solver::{self, SolveConfig};

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub shape: ShapeSpec,
    pub mode: PerturbMode,
    pub frequency: u32,
    pub phase: f64,
    /// Strictly decreasing; may end with 0 for an exactness control row.
    pub amplitudes: Vec<f64>,
    pub h: f64,
    /// Exclusion radius around the base singular set for the gradient
    /// comparison; must exceed 4h so the probe stencils clear the set.
    pub delta: f64,
    /// Arrival-time floor for critical point detection.
    pub t_floor: f64,
    pub seed: u64,
    pub solve: SolveConfig,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        self.solve.validate()?;
        if self.amplitudes.is_empty() {
            return Err(LsfError::Config("no amplitudes".into()));
        }
        for w in self.amplitudes.windows(2) {
            if !(w[1] < w[0]) {
                return Err(LsfError::Config("amplitudes must be strictly decreasing".into()));
            }
        }
        if self.amplitudes.iter().any(|&a| a < 0.0) {
            return Err(LsfError::Config("amplitudes must be >= 0".into()));
        }
        if !(self.delta > 4.0 * self.h) {
            return Err(LsfError::Config(format!(
                "delta {} must exceed 4h = {}",
                self.delta,
                4.0 * self.h
            )));
        }
        if !(self.t_floor > 0.0) {
            return Err(LsfError::Config("t_floor must be positive".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<UniformGrid> {
        let r = self.shape.bounding_radius()?;
        let margin = (8.0 * self.h).max(0.3) + self.amplitudes[0];
        let half = r + margin;
        UniformGrid::centered([half, half, half], self.h)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub amplitude: f64,
    /// sup |u_pert - u_base| over the grid.
    pub sup_u_gap: f64,
    /// sup |grad u_pert - grad u_base| away from the base singular set.
    pub sup_grad_gap_off_s: f64,
    pub extinction_gap: f64,
    /// All perturbed critical points within delta of the base singular set.
    pub containment_pass: Option<bool>,
    /// Component type multisets agree; None when either analysis came back
    /// empty or unresolved.
    pub type_match: Option<bool>,
    pub singular_time_gap: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub base_extinction: f64,
    pub base_types: Vec<SingularType>,
    pub rows: Vec<StabilityRow>,
}

impl StabilityReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "amplitude,sup_u_gap,sup_grad_gap_off_s,extinction_gap,containment_pass,type_match,singular_time_gap\n",
        );
        let opt_b = |v: &Option<bool>| match v {
            Some(true) => "1".to_string(),
            Some(false) => "0".to_string(),
            None => String::new(),
        };
        let opt_f = |v: &Option<f64>| v.map(|x| format!("{x:.9e}")).unwrap_or_default();
        for r in &self.rows {
            s.push_str(&format!(
                "{:.9e},{:.9e},{:.9e},{:.9e},{},{},{}\n",
                r.amplitude,
                r.sup_u_gap,
                r.sup_grad_gap_off_s,
                r.extinction_gap,
                opt_b(&r.containment_pass),
                opt_b(&r.type_match),
                opt_f(&r.singular_time_gap),
            ));
        }
        s
    }
}

fn sup_gap(a: &ScalarField, b: &ScalarField) -> f64 {
    a.values
        .iter()
        .zip(b.values.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max)
}

fn grad_at(f: &ScalarField, n: [usize; 3]) -> Vector3<f64> {
    let g = &f.grid;
    let idx = g.index(n);
    let [nx, ny, _] = g.dims;
    let (sx, sy, sz) = (1usize, nx, nx * ny);
    Vector3::new(
        (f.values[idx + sx] - f.values[idx - sx]) / (2.0 * g.h),
        (f.values[idx + sy] - f.values[idx - sy]) / (2.0 * g.h),
        (f.values[idx + sz] - f.values[idx - sz]) / (2.0 * g.h),
    )
}

fn sup_grad_gap_off(
    a: &ScalarField,
    b: &ScalarField,
    exclude: &[Vector3<f64>],
    delta: f64,
) -> f64 {
    let g = &a.grid;
    let d2 = delta * delta;
    let mut sup: f64 = 0.0;
    for n in g.interior_nodes(1) {
        let p = Vector3::from(g.position(n));
        if exclude.iter().any(|q| (p - q).norm_squared() < d2) {
            continue;
        }
        sup = sup.max((grad_at(a, n) - grad_at(b, n)).norm());
    }
    sup
}

/// Component types that are actually resolved, or None if anything in the
/// report is Unknown or the report is empty.
fn resolved_types(components: &[singular::SingularComponent]) -> Option<Vec<SingularType>> {
    if components.is_empty() {
        return None;
    }
    let mut types: Vec<SingularType> = components.iter().map(|c| c.sing_type).collect();
    if types.iter().any(|&t| t == SingularType::Unknown) {
        return None;
    }
    types.sort_by_key(|t| *t as usize);
    Some(types)
}

pub fn run_experiment(plan: &ExperimentPlan) -> Result<StabilityReport> {
    plan.validate()?;
    let grid = plan.grid()?;
    let base_field = shapes::generate_sdf(&plan.shape, &grid)?;
    let base = solver::solve_parabolic(&base_field, &plan.solve)?;
    if let Some(f) = &base.failure {
        return Err(LsfError::Numerical(format!("base solve failed: {f}")));
    }
    let base_report = singular::analyze(&base.u, plan.t_floor, plan.seed)?;
    let base_points: Vec<Vector3<f64>> = base_report
        .components
        .iter()
        .flat_map(|c| c.points.iter().map(|p| Vector3::from(p.position)))
        .collect();
    let base_types = resolved_types(&base_report.components);
    let base_sing_time = base_report
        .components
        .iter()
        .map(|c| c.singular_time)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut rows = Vec::new();
    for &amplitude in &plan.amplitudes {
        let pert = PerturbationSpec {
            amplitude,
            mode: plan.mode,
            frequency: plan.frequency,
            phase: plan.phase,
        };
        let field = shapes::perturb_sdf(&plan.shape, &pert, &grid)?;
        if amplitude == 0.0 {
            // bit-exact base field and a deterministic solver: the row is
            // exactly zero without re-solving
            rows.push(StabilityRow {
                amplitude,
                sup_u_gap: 0.0,
                sup_grad_gap_off_s: 0.0,
                extinction_gap: 0.0,
                containment_pass: Some(true),
                type_match: base_types.as_ref().map(|_| true),
                singular_time_gap: Some(0.0),
            });
            debug_assert_eq!(field.values, base_field.values);
            continue;
        }
        let run = solver::solve_parabolic(&field, &plan.solve)?;
        if let Some(f) = &run.failure {
            return Err(LsfError::Numerical(format!(
                "perturbed solve (amplitude {amplitude}) failed: {f}"
            )));
        }
        let report = singular::analyze(&run.u, plan.t_floor, plan.seed)?;
        let pert_points: Vec<Vector3<f64>> = report
            .components
            .iter()
            .flat_map(|c| c.points.iter().map(|p| Vector3::from(p.position)))
            .collect();
        let containment_pass = if base_points.is_empty() || pert_points.is_empty() {
            None
        } else {
            Some(pert_points.iter().all(|q| {
                base_points.iter().any(|p| (p - q).norm() <= plan.delta)
            }))
        };
        let pert_types = resolved_types(&report.components);
        let type_match = match (&base_types, &pert_types) {
            (Some(a), Some(b)) => Some(a == b),
            _ => None,
        };
        let sing_time = report
            .components
            .iter()
            .map(|c| c.singular_time)
            .fold(f64::NEG_INFINITY, f64::max);
        let singular_time_gap = if base_sing_time.is_finite() && sing_time.is_finite() {
            Some((sing_time - base_sing_time).abs())
        } else {
            None
        };
        rows.push(StabilityRow {
            amplitude,
            sup_u_gap: sup_gap(&run.u, &base.u),
            sup_grad_gap_off_s: sup_grad_gap_off(&run.u, &base.u, &base_points, plan.delta),
            extinction_gap: (run.extinction_time - base.extinction_time).abs(),
            containment_pass,
            type_match,
            singular_time_gap,
        });
    }
    Ok(StabilityReport {
        base_extinction: base.extinction_time,
        base_types: base_types.unwrap_or_default(),
        rows,
    })
}

/// Sampled Hausdorff distance between the level sets {u1 = t} and
/// {u2 = t}, maximized over a few times in [a, b]. Errors if any supplied
/// singular time lies inside the interval: the comparison is only
/// meaningful while both flows are regular.
pub fn regular_interval_check(
    u1: &ScalarField,
    u2: &ScalarField,
    a: f64,
    b: f64,
    singular_times: &[f64],
) -> Result<f64> {
    if !(a < b) {
        return Err(LsfError::Config(format!("empty interval [{a}, {b}]")));
    }
    if let Some(&t) = singular_times.iter().find(|&&t| t >= a && t <= b) {
        return Err(LsfError::Config(format!(
            "singular time {t} lies inside the comparison interval [{a}, {b}]"
        )));
    }
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        let t = a + (b - a) * i as f64 / 2.0;
        let p1 = level_set_points(u1, t);
        let p2 = level_set_points(u2, t);
        if p1.is_empty() || p2.is_empty() {
            return Err(LsfError::Sampling(format!("level set at t = {t} is empty")));
        }
        worst = worst.max(hausdorff(&p1, &p2));
    }
    Ok(worst)
}

/// Edge crossings of u = t along grid axes.
fn level_set_points(u: &ScalarField, t: f64) -> Vec<Vector3<f64>> {
    let g = &u.grid;
    let [nx, ny, nz] = g.dims;
    let (sx, sy, sz) = (1usize, nx, nx * ny);
    let mut pts = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = (k * ny + j) * nx + i;
                let v0 = u.values[idx] - t;
                for (axis, stride, room) in
                    [(0, sx, i + 1 < nx), (1, sy, j + 1 < ny), (2, sz, k + 1 < nz)]
                {
                    if !room {
                        continue;
                    }
                    let v1 = u.values[idx + stride] - t;
                    if v0 * v1 < 0.0 {
                        let frac = v0 / (v0 - v1);
                        let mut p = Vector3::from(g.position([i, j, k]));
                        p[axis] += frac * g.h;
                        pts.push(p);
                    }
                }
            }
        }
    }
    // bound the quadratic Hausdorff cost
    const CAP: usize = 4000;
    if pts.len() > CAP {
        let step = pts.len() / CAP + 1;
        pts = pts.into_iter().step_by(step).collect();
    }
    pts
}

fn hausdorff(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    let one_sided = |from: &[Vector3<f64>], to: &[Vector3<f64>]| -> f64 {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| (p - q).norm_squared())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0f64, f64::max)
            .sqrt()
    };
    one_sided(a, b).max(one_sided(b, a))
}
