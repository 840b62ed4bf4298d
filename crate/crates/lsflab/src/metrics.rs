//! Initial-hypersurface estimates: noncollapsing ball test, area ratios,
//! Gaussian-area entropy, and the two-convexity min-max functional.
//!
//! Surface quadrature is coarea band integration: area ~ sum over the band
//! of |grad f| * delta_h(f) * h^3 with a smeared delta of width 1.5h. The
//! entropy and area-ratio suprema are evaluated on a fixed finite lattice
//! of centers and radii, so they are deterministic lower bounds.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::Serialize;

use crate::error::{LsfError, Result};
use crate::grid::{self, ScalarField};
use crate::minmax;
use crate::shapes::SurfaceSample;

pub const BAND_WIDTH_CELLS: f64 = 1.5;
pub const BALL_PROBE_SHRINK_CELLS: f64 = 1.5;
/// Radius lattice ratio for the entropy / area-ratio suprema.
pub const LATTICE_RATIO: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
pub struct MetricsReport {
    pub alpha_observed: f64,
    pub min_H: f64,
    pub max_H: f64,
    pub min_k1k2: f64,
    pub beta_hat: f64,
    pub area: f64,
    pub diameter: f64,
    pub max_area_ratio: f64,
    pub entropy: f64,
}

/// A band node with its quadrature weight (its share of surface area).
#[derive(Debug, Clone)]
pub struct BandQuadrature {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

fn smeared_delta(f: f64, w: f64) -> f64 {
    if f.abs() >= w {
        0.0
    } else {
        (1.0 + (std::f64::consts::PI * f / w).cos()) / (2.0 * w)
    }
}

/// Coarea quadrature of the zero set: weight_i = |grad f| delta_h(f) h^3.
pub fn band_quadrature(field: &ScalarField) -> BandQuadrature {
    let g = &field.grid;
    let h = g.h;
    let w = BAND_WIDTH_CELLS * h;
    let h3 = h * h * h;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for n in g.interior_nodes(1) {
        let v = field.at(n);
        if v.abs() >= w {
            continue;
        }
        let gx = (field.at([n[0] + 1, n[1], n[2]]) - field.at([n[0] - 1, n[1], n[2]])) / (2.0 * h);
        let gy = (field.at([n[0], n[1] + 1, n[2]]) - field.at([n[0], n[1] - 1, n[2]])) / (2.0 * h);
        let gz = (field.at([n[0], n[1], n[2] + 1]) - field.at([n[0], n[1], n[2] - 1])) / (2.0 * h);
        let gn = (gx * gx + gy * gy + gz * gz).sqrt();
        let weight = gn * smeared_delta(v, w) * h3;
        if weight > 0.0 {
            points.push(g.position(n));
            weights.push(weight);
        }
    }
    BandQuadrature { points, weights }
}

impl BandQuadrature {
    pub fn total_area(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Lattice of centers and radii shared by the area-ratio and entropy
/// suprema: centroid plus up to 64 surface samples, radii geometric from
/// 2h to 2*diameter with ratio sqrt(2), anchored at 2h.
pub struct SupLattice {
    pub centers: Vec<[f64; 3]>,
    pub radii: Vec<f64>,
}

pub fn sup_lattice(samples: &[SurfaceSample], h: f64, diameter: f64) -> SupLattice {
    let mut centers = Vec::new();
    if !samples.is_empty() {
        let mut c = [0.0f64; 3];
        for s in samples {
            for a in 0..3 {
                c[a] += s.point[a];
            }
        }
        for v in c.iter_mut() {
            *v /= samples.len() as f64;
        }
        centers.push(c);
    }
    let stride = (samples.len() / 64).max(1);
    for s in samples.iter().step_by(stride) {
        centers.push(s.point);
    }
    let mut radii = Vec::new();
    let mut r = 2.0 * h;
    while r <= 2.0 * diameter {
        radii.push(r);
        r *= LATTICE_RATIO;
    }
    SupLattice { centers, radii }
}

pub fn diameter_of(samples: &[SurfaceSample]) -> f64 {
    let mut d2: f64 = 0.0;
    for (i, a) in samples.iter().enumerate() {
        for b in samples.iter().skip(i + 1) {
            let dd: f64 = a
                .point
                .iter()
                .zip(b.point.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            d2 = d2.max(dd);
        }
    }
    d2.sqrt()
}

/// Rolling-ball noncollapsing test: at every sample p with mean curvature
/// H and inward normal N, the open balls of radius alpha/H tangent at p on
/// the inside and outside must avoid the wrong side of the surface. Probe
/// nodes are shrunk by 1.5h; out-of-grid probes count as exterior.
pub fn noncollapsing_test(
    samples: &[SurfaceSample],
    field: &ScalarField,
    alpha: f64,
) -> Result<(bool, Option<usize>)> {
    if !(alpha > 0.0) {
        return Err(LsfError::Config("alpha must be positive".into()));
    }
    let g = &field.grid;
    let h = g.h;
    let shrink = BALL_PROBE_SHRINK_CELLS * h;
    for (si, s) in samples.iter().enumerate() {
        if !(s.mean_curvature > 0.0) {
            return Err(LsfError::Config(format!(
                "sample {si} has non-positive mean curvature"
            )));
        }
        let rad = alpha / s.mean_curvature;
        let probe_r = rad - shrink;
        if probe_r <= 0.0 {
            continue; // ball below probe resolution: vacuous pass
        }
        for (sign, want_negative) in [(1.0, true), (-1.0, false)] {
            let c = [
                s.point[0] + sign * rad * s.normal[0],
                s.point[1] + sign * rad * s.normal[1],
                s.point[2] + sign * rad * s.normal[2],
            ];
            // iterate grid nodes in the bounding box of the probe ball
            let mut lo = [0isize; 3];
            let mut hi = [0isize; 3];
            for a in 0..3 {
                lo[a] = ((c[a] - probe_r - g.origin[a]) / h).ceil() as isize;
                hi[a] = ((c[a] + probe_r - g.origin[a]) / h).floor() as isize;
            }
            let pr2 = probe_r * probe_r;
            for k in lo[2]..=hi[2] {
                for j in lo[1]..=hi[1] {
                    for i in lo[0]..=hi[0] {
                        if i < 0
                            || j < 0
                            || k < 0
                            || i as usize >= g.dims[0]
                            || j as usize >= g.dims[1]
                            || k as usize >= g.dims[2]
                        {
                            // outside the grid: exterior by construction
                            if want_negative {
                                return Ok((false, Some(si)));
                            }
                            continue;
                        }
                        let n = [i as usize, j as usize, k as usize];
                        let p = g.position(n);
                        let d2: f64 =
                            p.iter().zip(c.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                        if d2 > pr2 {
                            continue;
                        }
                        let v = field.at(n);
                        if want_negative && v >= 0.0 {
                            return Ok((false, Some(si)));
                        }
                        if !want_negative && v <= 0.0 {
                            return Ok((false, Some(si)));
                        }
                    }
                }
            }
        }
    }
    Ok((true, None))
}

/// Largest alpha (to resolution 0.05) passing the ball test, by bisection;
/// the test is monotone in alpha.
pub fn alpha_observed(samples: &[SurfaceSample], field: &ScalarField) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = 4.0f64;
    if !matches!(noncollapsing_test(samples, field, hi), Ok((false, _))) {
        return hi;
    }
    while hi - lo > 0.05 {
        let mid = 0.5 * (lo + hi);
        match noncollapsing_test(samples, field, mid) {
            Ok((true, _)) => lo = mid,
            _ => hi = mid,
        }
    }
    lo
}

/// Sup over the (p, r) lattice of H^{n-1}(Sigma cap B_r(p)) / r^{n-1} and
/// the paper-style bound flag: estimate <= 2^{n-1} e^{K(D+1)} A.
pub fn area_ratio_sup(
    quad: &BandQuadrature,
    lattice: &SupLattice,
    area: f64,
    diameter: f64,
    max_h: f64,
) -> Result<(f64, bool)> {
    if !(area > 0.0) || !(diameter > 0.0) {
        return Err(LsfError::Config("degenerate area or diameter".into()));
    }
    let mut sup: f64 = 0.0;
    for c in &lattice.centers {
        for &r in &lattice.radii {
            let r2 = r * r;
            let mut acc = 0.0;
            for (p, w) in quad.points.iter().zip(quad.weights.iter()) {
                let d2: f64 = p.iter().zip(c.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                if d2 <= r2 {
                    acc += w;
                }
            }
            sup = sup.max(acc / r2);
        }
    }
    let bound = 4.0 * (max_h * (diameter + 1.0)).exp() * area; // 2^{n-1} = 4 at n = 3
    Ok((sup, sup <= bound))
}

/// Gaussian area F((Sigma - p)/r) by band quadrature, n = 3.
pub fn gaussian_area(quad: &BandQuadrature, center: &[f64; 3], r: f64) -> f64 {
    let inv4pi = 1.0 / (4.0 * std::f64::consts::PI);
    let mut acc = 0.0;
    for (p, w) in quad.points.iter().zip(quad.weights.iter()) {
        let d2: f64 = p
            .iter()
            .zip(center.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        acc += w * (-d2 / (4.0 * r * r)).exp();
    }
    acc * inv4pi / (r * r)
}

/// Entropy as the lattice max of the Gaussian area; a lower bound for the
/// true supremum over all centers and scales.
pub fn entropy(quad: &BandQuadrature, lattice: &SupLattice) -> f64 {
    let mut best: f64 = 0.0;
    for c in &lattice.centers {
        for &r in &lattice.radii {
            best = best.max(gaussian_area(quad, c, r));
        }
    }
    best
}

/// Entropy of a level-set field's zero set with the default lattice.
pub fn entropy_of_field(field: &ScalarField, samples: &[SurfaceSample]) -> f64 {
    let quad = band_quadrature(field);
    let diameter = diameter_of(samples).max(2.0 * field.grid.h);
    let lattice = sup_lattice(samples, field.grid.h, diameter);
    entropy(&quad, &lattice)
}

/// Shell-decomposition constant C(3) for the entropy <= C(n) * sup-ratio
/// consistency bound: F <= ratio * (4pi)^-1 * sum_k e^{-4^{k-1}/4} (2^k)^2
/// over dyadic shells, summed over k in Z (the k <= 0 tail is geometric).
pub fn entropy_ratio_constant_n3() -> f64 {
    let inv4pi = 1.0 / (4.0 * std::f64::consts::PI);
    let mut sum = 0.0;
    for k in -60..=8i32 {
        let rk = 2f64.powi(k);
        let inner = if k > 0 { 2f64.powi(k - 1) } else { 0.0 };
        sum += (-(inner * inner) / 4.0).exp() * rk * rk;
    }
    inv4pi * sum
}

/// Min over samples of k1 + k2, computed two ways: directly from the
/// sorted principal curvatures and through the Grassmannian trace formula
/// over 64 rotated (skewed) tangent bases. The two routes must agree.
pub fn two_convexity_min(
    field: &ScalarField,
    samples: &[SurfaceSample],
) -> Result<(f64, f64)> {
    let h = field.grid.h;
    let mut min_sum = f64::INFINITY;
    let mut beta = f64::INFINITY;
    for s in samples {
        let jet = grid::jet2_sample(field, s.point)?;
        let gn = jet.gradient.norm();
        if gn < grid::g_min(h) {
            continue;
        }
        let direct = s.k1 + s.k2;

        // route (b): trace of the pencil on the tangent plane, over 64
        // rotated skewed bases; the lemma says all agree with route (a)
        let n = jet.gradient / gn;
        let (t1, t2) = grid::tangent_basis(&n);
        let shape_op: Matrix3<f64> = jet.hessian / gn;
        let metric = Matrix3::identity();
        let mut trace_min = f64::INFINITY;
        for rot in 0..64 {
            let theta = rot as f64 * std::f64::consts::PI / 64.0;
            let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(n), theta);
            let v1: Vector3<f64> = r * t1;
            // deliberately skewed second basis vector
            let v2: Vector3<f64> = r * (t2 + 0.3 * t1);
            trace_min = trace_min.min(minmax::plane_trace(&metric, &shape_op, &v1, &v2)?);
        }
        if (trace_min - direct).abs() > 1e-6 {
            return Err(LsfError::Numerical(format!(
                "min-max trace {trace_min} disagrees with k1+k2 {direct}"
            )));
        }
        if direct < min_sum {
            min_sum = direct;
        }
        if s.mean_curvature > 0.0 {
            beta = beta.min(direct / s.mean_curvature);
        }
    }
    if !min_sum.is_finite() {
        return Err(LsfError::Sampling("no usable samples for two-convexity".into()));
    }
    Ok((min_sum, beta))
}

/// Assemble the full metrics report for an initial surface.
pub fn compute_metrics(field: &ScalarField, samples: &[SurfaceSample]) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(LsfError::Sampling("no surface samples".into()));
    }
    let min_h_curv = samples.iter().map(|s| s.mean_curvature).fold(f64::INFINITY, f64::min);
    let max_h_curv = samples.iter().map(|s| s.mean_curvature).fold(f64::NEG_INFINITY, f64::max);
    let quad = band_quadrature(field);
    let area = quad.total_area();
    let diameter = diameter_of(samples);
    let lattice = sup_lattice(samples, field.grid.h, diameter);
    let (max_area_ratio, _) = area_ratio_sup(&quad, &lattice, area, diameter, max_h_curv)?;
    let ent = entropy(&quad, &lattice);
    let (min_k1k2, beta_hat) = two_convexity_min(field, samples)?;
    Ok(MetricsReport {
        alpha_observed: alpha_observed(samples, field),
        min_H: min_h_curv,
        max_H: max_h_curv,
        min_k1k2,
        beta_hat,
        area,
        diameter,
        max_area_ratio,
        entropy: ent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::UniformGrid;
    use crate::shapes::{self, surface_samples};

    fn unit_sphere(h: f64) -> ScalarField {
        let g = UniformGrid::centered([1.5, 1.5, 1.5], h).unwrap();
        shapes::generate_sdf(&shapes::preset("sphere_unit").unwrap(), &g).unwrap()
    }

    #[test]
    fn sphere_area_by_band_integration() {
        let f = unit_sphere(1.0 / 32.0);
        let area = band_quadrature(&f).total_area();
        let exact = 4.0 * std::f64::consts::PI;
        assert!((area - exact).abs() / exact < 0.02, "area {area} vs {exact}");
    }

    #[test]
    fn sphere_ball_test_pass_and_fail() {
        let f = unit_sphere(1.0 / 32.0);
        let samples = surface_samples(&f, 96).unwrap();
        let (pass, _) = noncollapsing_test(&samples, &f, 1.9).unwrap();
        assert!(pass, "alpha = 1.9 must pass on the unit sphere");
        let (pass, worst) = noncollapsing_test(&samples, &f, 2.2).unwrap();
        assert!(!pass && worst.is_some(), "alpha = 2.2 must fail");
        // degenerate limit passes vacuously
        let (pass, _) = noncollapsing_test(&samples, &f, 1e-4).unwrap();
        assert!(pass);
    }

    #[test]
    fn ball_test_monotone_in_alpha() {
        let f = unit_sphere(1.0 / 16.0);
        let samples = surface_samples(&f, 48).unwrap();
        let mut prev_pass = true;
        for alpha in [0.5, 1.0, 1.5, 1.9, 2.1, 2.4] {
            let (pass, _) = noncollapsing_test(&samples, &f, alpha).unwrap();
            assert!(!(pass && !prev_pass), "pass at {alpha} but fail at a smaller alpha");
            prev_pass = pass;
        }
    }

    #[test]
    fn sphere_area_ratio_flat_limit() {
        let f = unit_sphere(1.0 / 32.0);
        let samples = surface_samples(&f, 96).unwrap();
        let quad = band_quadrature(&f);
        let area = quad.total_area();
        let diameter = diameter_of(&samples);
        let lattice = sup_lattice(&samples, f.grid.h, diameter);
        let max_h = samples.iter().map(|s| s.mean_curvature).fold(f64::NEG_INFINITY, f64::max);
        let (sup, flag) = area_ratio_sup(&quad, &lattice, area, diameter, max_h).unwrap();
        // the flat tangent-plane limit of the ratio is pi
        assert!(sup >= std::f64::consts::PI - 0.2, "sup ratio {sup}");
        assert!(flag, "paper bound must hold for the sphere");
        // saturation: at r >= 2 diameter the ratio is area / r^2
        let r = 2.0 * diameter;
        let saturated = area / (r * r);
        assert!(sup >= saturated);
    }

    #[test]
    fn sphere_entropy_value_and_scale_invariance() {
        let expected = 4.0 / std::f64::consts::E;
        let base_h = 1.0 / 32.0;
        let mut values = Vec::new();
        for c in [0.5f64, 1.0, 2.0] {
            // scaled surface on a scaled grid: radii lattice scales with h
            let h = base_h * c;
            let g = UniformGrid::centered([1.5 * c, 1.5 * c, 1.5 * c], h).unwrap();
            let spec = shapes::ShapeSpec::new(shapes::ShapeKind::Sphere, &[("radius", c)]);
            let f = shapes::generate_sdf(&spec, &g).unwrap();
            let samples = surface_samples(&f, 96).unwrap();
            values.push(entropy_of_field(&f, &samples));
        }
        for v in &values {
            assert!((v - expected).abs() < 0.05, "entropy {v} vs 4/e = {expected}");
        }
        assert!((values[0] - values[1]).abs() < 0.02, "scale invariance {values:?}");
        assert!((values[2] - values[1]).abs() < 0.02, "scale invariance {values:?}");
    }

    #[test]
    fn entropy_monotone_under_lattice_refinement() {
        let f = unit_sphere(1.0 / 16.0);
        let samples = surface_samples(&f, 64).unwrap();
        let quad = band_quadrature(&f);
        let d = diameter_of(&samples);
        let coarse = sup_lattice(&samples, f.grid.h, d);
        let mut fine = sup_lattice(&samples, f.grid.h, d);
        // refine: insert midpoints in the radius ladder
        let mut extra = Vec::new();
        for w in fine.radii.windows(2) {
            extra.push((w[0] * w[1]).sqrt());
        }
        fine.radii.extend(extra);
        assert!(entropy(&quad, &fine) >= entropy(&quad, &coarse));
    }

    #[test]
    fn entropy_ratio_consistency_flag() {
        let f = unit_sphere(1.0 / 32.0);
        let samples = surface_samples(&f, 96).unwrap();
        let report = compute_metrics(&f, &samples).unwrap();
        let c3 = entropy_ratio_constant_n3();
        assert!(
            report.entropy <= c3 * report.max_area_ratio,
            "entropy {} vs C(3) * ratio = {}",
            report.entropy,
            c3 * report.max_area_ratio
        );
    }

    #[test]
    fn two_convexity_sphere() {
        let f = unit_sphere(1.0 / 32.0);
        let samples = surface_samples(&f, 64).unwrap();
        let (min_sum, beta) = two_convexity_min(&f, &samples).unwrap();
        assert!((min_sum - 2.0).abs() < 0.1, "k1+k2 = {min_sum}");
        assert!((beta - 1.0).abs() < 0.05, "beta = {beta}");
    }

    #[test]
    fn metrics_report_invariants() {
        let f = unit_sphere(1.0 / 16.0);
        let samples = surface_samples(&f, 64).unwrap();
        let r = compute_metrics(&f, &samples).unwrap();
        assert!(r.min_H > 0.0 && r.min_H <= r.max_H);
        assert!(r.entropy >= 1.0 - 0.05, "entropy {} below Gaussian floor", r.entropy);
        // max ratio dominates area / diameter^2 up to sampling slack
        assert!(r.max_area_ratio >= r.area / (r.diameter * r.diameter) * 0.9);
        let json = serde_json::to_value(&r).unwrap();
        for key in [
            "alpha_observed", "min_H", "max_H", "min_k1k2", "beta_hat",
            "area", "diameter", "max_area_ratio", "entropy",
        ] {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
    }
}
