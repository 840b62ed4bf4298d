//! Uniform grids, scalar fields and the finite-difference operators that
//! everything downstream is built on.
//!
//! Fields are stored dense, x-fastest. Gradients use second-order central
//! differences, Hessians the standard 3-point / 4-point-cross stencils, so
//! both are exact on affine and quadratic data respectively.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{LsfError, Result};

/// Gradient-magnitude floor for curvature evaluations, `1e-6 / h`.
/// Below this a node is near-critical and curvature is refused.
pub fn g_min(h: f64) -> f64 {
    1e-6 / h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub h: f64,
}

impl UniformGrid {
    pub fn new(dims: [usize; 3], origin: [f64; 3], h: f64) -> Result<Self> {
        if dims.iter().any(|&d| d < 5) {
            return Err(LsfError::Config(format!(
                "grid dims {dims:?} too small, need at least 5 nodes per axis"
            )));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(LsfError::Config(format!("spacing h = {h} must be positive")));
        }
        Ok(Self { dims, origin, h })
    }

    /// Symmetric grid covering `[-half, half]^3`-style boxes given per-axis
    /// half-extents; extents are snapped up to whole multiples of `h`.
    pub fn centered(half_extent: [f64; 3], h: f64) -> Result<Self> {
        let mut dims = [0usize; 3];
        let mut origin = [0f64; 3];
        for a in 0..3 {
            let half_cells = (half_extent[a] / h).ceil() as usize;
            dims[a] = 2 * half_cells + 1;
            origin[a] = -(half_cells as f64) * h;
        }
        Self::new(dims, origin, h)
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn index(&self, n: [usize; 3]) -> usize {
        (n[2] * self.dims[1] + n[1]) * self.dims[0] + n[0]
    }

    #[inline]
    pub fn node_of(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    #[inline]
    pub fn position(&self, n: [usize; 3]) -> [f64; 3] {
        [
            self.origin[0] + n[0] as f64 * self.h,
            self.origin[1] + n[1] as f64 * self.h,
            self.origin[2] + n[2] as f64 * self.h,
        ]
    }

    pub fn max_corner(&self) -> [f64; 3] {
        [
            self.origin[0] + (self.dims[0] - 1) as f64 * self.h,
            self.origin[1] + (self.dims[1] - 1) as f64 * self.h,
            self.origin[2] + (self.dims[2] - 1) as f64 * self.h,
        ]
    }

    pub fn contains_point(&self, p: [f64; 3]) -> bool {
        let hi = self.max_corner();
        (0..3).all(|a| p[a] >= self.origin[a] && p[a] <= hi[a])
    }

    /// Node at least `margin` nodes away from every boundary face.
    #[inline]
    pub fn is_interior(&self, n: [usize; 3], margin: usize) -> bool {
        (0..3).all(|a| n[a] >= margin && n[a] + margin < self.dims[a])
    }

    pub fn interior_nodes(&self, margin: usize) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [nx, ny, nz] = self.dims;
        (margin..nz.saturating_sub(margin)).flat_map(move |k| {
            (margin..ny.saturating_sub(margin)).flat_map(move |j| {
                (margin..nx.saturating_sub(margin)).map(move |i| [i, j, k])
            })
        })
    }
}

#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: UniformGrid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(LsfError::Config(format!(
                "value count {} does not match grid node count {}",
                values.len(),
                grid.node_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LsfError::Config("field contains non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: UniformGrid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let mut values = vec![0.0; grid.node_count()];
        let [nx, ny, nz] = grid.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let n = [i, j, k];
                    values[grid.index(n)] = f(grid.position(n));
                }
            }
        }
        Self { grid, values }
    }

    pub fn constant(grid: UniformGrid, c: f64) -> Self {
        let n = grid.node_count();
        Self { grid, values: vec![c; n] }
    }

    #[inline]
    pub fn at(&self, n: [usize; 3]) -> f64 {
        self.values[self.grid.index(n)]
    }

    /// Trilinear interpolation; exact on affine fields.
    pub fn trilinear_sample(&self, p: [f64; 3]) -> Result<f64> {
        if !self.grid.contains_point(p) {
            return Err(LsfError::OutOfDomain(p));
        }
        let g = &self.grid;
        let mut base = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let t = (p[a] - g.origin[a]) / g.h;
            let mut i = t.floor() as usize;
            if i + 1 >= g.dims[a] {
                i = g.dims[a] - 2;
            }
            base[a] = i;
            frac[a] = (t - i as f64).clamp(0.0, 1.0);
        }
        let mut acc = 0.0;
        for dk in 0..2 {
            for dj in 0..2 {
                for di in 0..2 {
                    let w = (if di == 0 { 1.0 - frac[0] } else { frac[0] })
                        * (if dj == 0 { 1.0 - frac[1] } else { frac[1] })
                        * (if dk == 0 { 1.0 - frac[2] } else { frac[2] });
                    acc += w * self.at([base[0] + di, base[1] + dj, base[2] + dk]);
                }
            }
        }
        Ok(acc)
    }
}

/// Value, gradient and symmetric Hessian at a point.
#[derive(Debug, Clone)]
pub struct Jet2 {
    pub value: f64,
    pub gradient: Vector3<f64>,
    pub hessian: Matrix3<f64>,
}

/// Second-order jet at a grid node by central differences.
///
/// The node must be at least 2 nodes from every boundary face.
pub fn jet2_at(field: &ScalarField, node: [usize; 3]) -> Result<Jet2> {
    if !field.grid.is_interior(node, 2) {
        return Err(LsfError::BoundaryStencil(node));
    }
    Ok(jet2_at_unchecked(field, node))
}

pub(crate) fn jet2_at_unchecked(field: &ScalarField, node: [usize; 3]) -> Jet2 {
    let h = field.grid.h;
    let f = |di: isize, dj: isize, dk: isize| -> f64 {
        field.at([
            (node[0] as isize + di) as usize,
            (node[1] as isize + dj) as usize,
            (node[2] as isize + dk) as usize,
        ])
    };
    let c = f(0, 0, 0);
    let grad = Vector3::new(
        (f(1, 0, 0) - f(-1, 0, 0)) / (2.0 * h),
        (f(0, 1, 0) - f(0, -1, 0)) / (2.0 * h),
        (f(0, 0, 1) - f(0, 0, -1)) / (2.0 * h),
    );
    let h2 = h * h;
    let dxx = (f(1, 0, 0) - 2.0 * c + f(-1, 0, 0)) / h2;
    let dyy = (f(0, 1, 0) - 2.0 * c + f(0, -1, 0)) / h2;
    let dzz = (f(0, 0, 1) - 2.0 * c + f(0, 0, -1)) / h2;
    let dxy = (f(1, 1, 0) - f(1, -1, 0) - f(-1, 1, 0) + f(-1, -1, 0)) / (4.0 * h2);
    let dxz = (f(1, 0, 1) - f(1, 0, -1) - f(-1, 0, 1) + f(-1, 0, -1)) / (4.0 * h2);
    let dyz = (f(0, 1, 1) - f(0, 1, -1) - f(0, -1, 1) + f(0, -1, -1)) / (4.0 * h2);
    let hess = Matrix3::new(dxx, dxy, dxz, dxy, dyy, dyz, dxz, dyz, dzz);
    Jet2 { value: c, gradient: grad, hessian: hess }
}

/// Jet at an arbitrary point by trilinear interpolation of node jets.
///
/// Keeps the O(h^2) accuracy of the node stencils instead of the O(1)
/// noise one gets from second-differencing a trilinear interpolant.
pub fn jet2_sample(field: &ScalarField, p: [f64; 3]) -> Result<Jet2> {
    let g = &field.grid;
    if !g.contains_point(p) {
        return Err(LsfError::OutOfDomain(p));
    }
    let mut base = [0usize; 3];
    let mut frac = [0f64; 3];
    for a in 0..3 {
        let t = (p[a] - g.origin[a]) / g.h;
        let i = (t.floor() as isize).clamp(2, g.dims[a] as isize - 4) as usize;
        base[a] = i;
        frac[a] = t - i as f64;
    }
    let mut value = 0.0;
    let mut grad = Vector3::zeros();
    let mut hess = Matrix3::zeros();
    for dk in 0..2usize {
        for dj in 0..2usize {
            for di in 0..2usize {
                let w = (if di == 0 { 1.0 - frac[0] } else { frac[0] })
                    * (if dj == 0 { 1.0 - frac[1] } else { frac[1] })
                    * (if dk == 0 { 1.0 - frac[2] } else { frac[2] });
                if w == 0.0 {
                    continue;
                }
                let jet = jet2_at_unchecked(field, [base[0] + di, base[1] + dj, base[2] + dk]);
                value += w * jet.value;
                grad += w * jet.gradient;
                hess += w * jet.hessian;
            }
        }
    }
    Ok(Jet2 { value, gradient: grad, hessian: hess })
}

/// Mean curvature of the level set through `node`, with respect to the
/// normal `grad f / |grad f|`:  H = -(I - n nᵀ)·Hess f / |grad f|.
///
/// Positive on the arrival-time orientation (field increasing inward).
pub fn level_set_mean_curvature(field: &ScalarField, node: [usize; 3]) -> Result<f64> {
    let jet = jet2_at(field, node)?;
    mean_curvature_of_jet(&jet, field.grid.h)
}

pub fn mean_curvature_of_jet(jet: &Jet2, h: f64) -> Result<f64> {
    let gn = jet.gradient.norm();
    let gmin = g_min(h);
    if gn < gmin {
        return Err(LsfError::DegenerateGradient { got: gn, min: gmin });
    }
    let n = jet.gradient / gn;
    let p = Matrix3::identity() - n * n.transpose();
    let proj = p * jet.hessian * p;
    Ok(-proj.trace() / gn)
}

/// Principal curvatures (sorted, k1 <= k2) of the level set through `node`,
/// as eigenvalues of the projected operator P (Hess f / |grad f|) P on the
/// tangent plane. Positive for a signed distance field of a sphere.
pub fn level_set_principal_curvatures(field: &ScalarField, node: [usize; 3]) -> Result<[f64; 2]> {
    let jet = jet2_at(field, node)?;
    principal_curvatures_of_jet(&jet, field.grid.h)
}

pub fn principal_curvatures_of_jet(jet: &Jet2, h: f64) -> Result<[f64; 2]> {
    let gn = jet.gradient.norm();
    let gmin = g_min(h);
    if gn < gmin {
        return Err(LsfError::DegenerateGradient { got: gn, min: gmin });
    }
    let n = jet.gradient / gn;
    let (t1, t2) = tangent_basis(&n);
    let s = jet.hessian / gn;
    // 2x2 restriction of the shape operator to the tangent plane
    let a = (t1.transpose() * s * t1)[(0, 0)];
    let b = (t1.transpose() * s * t2)[(0, 0)];
    let c = (t2.transpose() * s * t2)[(0, 0)];
    let mean = 0.5 * (a + c);
    let disc = (0.5 * (a - c)).hypot(b);
    Ok([mean - disc, mean + disc])
}

/// Deterministic orthonormal tangent basis for a unit normal.
pub fn tangent_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let t1 = n.cross(&helper).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adjacency {
    Faces6,
    Full26,
}

/// Flood-fill partition of a boolean mask into connected components.
///
/// Components are emitted in order of their smallest linear node index and
/// each component's node list is sorted, so the labeling is deterministic
/// and independent of traversal order.
pub fn connected_components(
    grid: &UniformGrid,
    mask: &[bool],
    adjacency: Adjacency,
) -> Vec<Vec<usize>> {
    assert_eq!(mask.len(), grid.node_count());
    let mut seen = vec![false; mask.len()];
    let mut components = Vec::new();
    let [nx, ny, nz] = grid.dims;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        seen[start] = true;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            comp.push(idx);
            let [i, j, k] = grid.node_of(idx);
            let mut visit = |ni: isize, nj: isize, nk: isize| {
                if ni < 0 || nj < 0 || nk < 0 {
                    return;
                }
                let (ni, nj, nk) = (ni as usize, nj as usize, nk as usize);
                if ni >= nx || nj >= ny || nk >= nz {
                    return;
                }
                let nidx = grid.index([ni, nj, nk]);
                if mask[nidx] && !seen[nidx] {
                    seen[nidx] = true;
                    stack.push(nidx);
                }
            };
            match adjacency {
                Adjacency::Faces6 => {
                    let (i, j, k) = (i as isize, j as isize, k as isize);
                    visit(i - 1, j, k);
                    visit(i + 1, j, k);
                    visit(i, j - 1, k);
                    visit(i, j + 1, k);
                    visit(i, j, k - 1);
                    visit(i, j, k + 1);
                }
                Adjacency::Full26 => {
                    for dk in -1..=1isize {
                        for dj in -1..=1isize {
                            for di in -1..=1isize {
                                if di == 0 && dj == 0 && dk == 0 {
                                    continue;
                                }
                                visit(i as isize + di, j as isize + dj, k as isize + dk);
                            }
                        }
                    }
                }
            }
        }
        comp.sort_unstable();
        components.push(comp);
    }
    components
}
