//! Min-max trace machinery on the Grassmannian of 2-planes.
//!
//! For a symmetric bilinear form A and an SPD metric G on R^3, the trace of
//! the 2x2 pencil G(v)^-1 A(v) depends only on the plane span{v1, v2}, and
//! its minimum over all 2-planes is the sum of the two smallest generalized
//! eigenvalues of A v = lambda G v.

use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::error::{LsfError, Result};

/// trace(G(v1,v2)^-1 A(v1,v2)) for a (possibly skew) basis of a 2-plane.
pub fn plane_trace(
    metric: &Matrix3<f64>,
    form: &Matrix3<f64>,
    v1: &Vector3<f64>,
    v2: &Vector3<f64>,
) -> Result<f64> {
    let g = Matrix2::new(
        (v1.transpose() * metric * v1)[(0, 0)],
        (v1.transpose() * metric * v2)[(0, 0)],
        (v2.transpose() * metric * v1)[(0, 0)],
        (v2.transpose() * metric * v2)[(0, 0)],
    );
    let a = Matrix2::new(
        (v1.transpose() * form * v1)[(0, 0)],
        (v1.transpose() * form * v2)[(0, 0)],
        (v2.transpose() * form * v1)[(0, 0)],
        (v2.transpose() * form * v2)[(0, 0)],
    );
    let det = g.determinant();
    if det <= 0.0 || !det.is_finite() {
        return Err(LsfError::Numerical(
            "plane basis is degenerate (Gram determinant <= 0)".into(),
        ));
    }
    // trace(G^-1 A) = (g22 a11 - 2 g12 a12 + g11 a22) / det  for symmetric A
    Ok((g[(1, 1)] * a[(0, 0)] - g[(0, 1)] * (a[(0, 1)] + a[(1, 0)]) + g[(0, 0)] * a[(1, 1)]) / det)
}

/// Basis of the plane orthogonal (in the Euclidean sense) to a unit normal.
fn plane_basis(normal: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    crate::grid::tangent_basis(normal)
}

fn trace_for_normal(metric: &Matrix3<f64>, form: &Matrix3<f64>, normal: &Vector3<f64>) -> f64 {
    let (v1, v2) = plane_basis(normal);
    plane_trace(metric, form, &v1, &v2).unwrap_or(f64::INFINITY)
}

/// Minimize the plane trace over all 2-planes of R^3 with a Fibonacci net
/// of plane normals (canonical axes included) followed by a local
/// coordinate-descent refinement.
pub fn grassmannian_min_trace(metric: &Matrix3<f64>, form: &Matrix3<f64>, net: usize) -> f64 {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut best = f64::INFINITY;
    let mut best_n = Vector3::z();
    let mut consider = |n: Vector3<f64>| {
        let t = trace_for_normal(metric, form, &n);
        if t < best {
            best = t;
            best_n = n;
        }
    };
    consider(Vector3::x());
    consider(Vector3::y());
    consider(Vector3::z());
    for s in 0..net {
        // hemisphere is enough: the plane of -n equals the plane of n
        let z = (s as f64 + 0.5) / net as f64;
        let r = (1.0 - z * z).max(0.0).sqrt();
        let phi = golden * s as f64;
        consider(Vector3::new(r * phi.cos(), r * phi.sin(), z));
    }

    // local refinement: shrink steps in a 2-parameter chart around best_n
    let (e1, e2) = plane_basis(&best_n);
    let mut a = 0.0f64;
    let mut b = 0.0f64;
    let eval = |a: f64, b: f64| {
        let n = (best_n + a * e1 + b * e2).normalize();
        trace_for_normal(metric, form, &n)
    };
    let mut cur = best;
    let mut step = 0.1;
    while step > 1e-9 {
        let mut improved = false;
        for (da, db) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let t = eval(a + da, b + db);
            if t < cur {
                cur = t;
                a += da;
                b += db;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_trace_is_basis_invariant() {
        let a = Matrix3::new(2.0, 0.3, -0.1, 0.3, 1.0, 0.4, -0.1, 0.4, 3.0);
        let g = Matrix3::identity();
        let v1 = Vector3::new(1.0, 0.2, 0.0);
        let v2 = Vector3::new(0.0, 1.0, 0.5);
        let t0 = plane_trace(&g, &a, &v1, &v2).unwrap();
        // same plane, different (skew) basis
        let w1 = 2.0 * v1 + 3.0 * v2;
        let w2 = v1 - 0.5 * v2;
        let t1 = plane_trace(&g, &a, &w1, &w2).unwrap();
        assert!((t0 - t1).abs() < 1e-10);
    }

    #[test]
    fn diag_case_exact() {
        let a = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        let g = Matrix3::identity();
        let t = plane_trace(&g, &a, &Vector3::x(), &Vector3::y()).unwrap();
        assert!((t - 3.0).abs() < 1e-12);
        let min = grassmannian_min_trace(&g, &a, 512);
        assert!((min - 3.0).abs() < 1e-12, "min {min}");
    }

    #[test]
    fn degenerate_basis_rejected() {
        let a = Matrix3::identity();
        let g = Matrix3::identity();
        let v = Vector3::x();
        assert!(plane_trace(&g, &a, &v, &(2.0 * v)).is_err());
    }
}
