//! Initial hypersurfaces as approximate signed distance fields, plus the
//! small perturbation families used by the stability experiments.
//!
//! Fields are negative inside, positive outside. Away from the zero band
//! the values are only approximately a distance; nothing downstream reads
//! them there.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{LsfError, Result};
use crate::grid::{self, ScalarField, UniformGrid};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Sphere,
    Ellipsoid,
    Dumbbell,
    BumpyDumbbell,
    Capsule,
}

impl ShapeKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(Self::Sphere),
            "ellipsoid" => Ok(Self::Ellipsoid),
            "dumbbell" => Ok(Self::Dumbbell),
            "bumpy_dumbbell" => Ok(Self::BumpyDumbbell),
            "capsule" => Ok(Self::Capsule),
            other => Err(LsfError::Config(format!("unknown shape kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub params: BTreeMap<String, f64>,
}

impl ShapeSpec {
    pub fn new(kind: ShapeKind, params: &[(&str, f64)]) -> Self {
        Self {
            kind,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn from_preset_text(text: &str) -> Result<Self> {
        let (kind, params) = io::parse_preset(text)?;
        let spec = Self {
            kind: ShapeKind::parse(&kind)?,
            params: params.into_iter().collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn param(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .copied()
            .ok_or_else(|| LsfError::Config(format!("shape missing parameter {key:?}")))
    }

    pub fn param_or(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str| -> Result<f64> {
            let v = self.param(key)?;
            if v > 0.0 {
                Ok(v)
            } else {
                Err(LsfError::Config(format!("{key} must be positive, got {v}")))
            }
        };
        match self.kind {
            ShapeKind::Sphere => {
                positive("radius")?;
            }
            ShapeKind::Ellipsoid => {
                positive("a")?;
                positive("b")?;
                positive("c")?;
            }
            ShapeKind::Dumbbell | ShapeKind::BumpyDumbbell => {
                let neck = positive("neck_radius")?;
                let bulb = positive("bulb_radius")?;
                positive("bulb_separation")?;
                if neck >= bulb {
                    return Err(LsfError::Config(format!(
                        "neck_radius {neck} must be smaller than bulb_radius {bulb}"
                    )));
                }
                if self.kind == ShapeKind::BumpyDumbbell {
                    positive("bump_amplitude")?;
                }
            }
            ShapeKind::Capsule => {
                positive("radius")?;
                positive("length")?;
            }
        }
        Ok(())
    }

    /// Half-extent of an axis-aligned box around the origin that surely
    /// contains the surface (the axially symmetric shapes are much narrower
    /// across than along their axis).
    pub fn bounding_half_extent(&self) -> Result<[f64; 3]> {
        Ok(match self.kind {
            ShapeKind::Sphere => {
                let r = self.param("radius")?;
                [r, r, r]
            }
            ShapeKind::Ellipsoid => [self.param("a")?, self.param("b")?, self.param("c")?],
            ShapeKind::Dumbbell | ShapeKind::BumpyDumbbell => {
                let big = self.param("bulb_radius")? + self.param_or("bump_amplitude", 0.0);
                [big, big, self.param("bulb_separation")? / 2.0 + big]
            }
            ShapeKind::Capsule => {
                let r = self.param("radius")?;
                [r, r, self.param("length")? / 2.0 + r]
            }
        })
    }

    /// Radius of a ball around the origin that surely contains the surface.
    pub fn bounding_radius(&self) -> Result<f64> {
        let e = self.bounding_half_extent()?;
        Ok(e[0].max(e[1]).max(e[2]))
    }

    /// Signed distance value at a point (surface centered at `center`).
    pub fn sdf_at(&self, p: [f64; 3], center: [f64; 3]) -> f64 {
        let x = Vector3::new(p[0] - center[0], p[1] - center[1], p[2] - center[2]);
        match self.kind {
            ShapeKind::Sphere => x.norm() - self.params["radius"],
            ShapeKind::Ellipsoid => {
                let (a, b, c) = (self.params["a"], self.params["b"], self.params["c"]);
                let q = ((x.x / a).powi(2) + (x.y / b).powi(2) + (x.z / c).powi(2)).sqrt();
                (q - 1.0) * (a * b * c).cbrt()
            }
            ShapeKind::Dumbbell | ShapeKind::BumpyDumbbell => self.dumbbell_sdf(&x),
            ShapeKind::Capsule => {
                let half = self.params["length"] / 2.0;
                let z = x.z.clamp(-half, half);
                (x - Vector3::new(0.0, 0.0, z)).norm() - self.params["radius"]
            }
        }
    }

    /// Two bulbs joined by a neck of revolution around the z axis: a
    /// straight cylindrical section of radius `neck_radius` flaring into
    /// cosh trumpets that meet the bulbs at 0.8 of the bulb radius. The
    /// straight section keeps the flow near the waist genuinely
    /// cylindrical until the pinch, so the arrival time picks up the
    /// clean (0, 1, 1) signature there.
    fn dumbbell_sdf(&self, x: &Vector3<f64>) -> f64 {
        let rn = self.params["neck_radius"];
        let rb = self.params["bulb_radius"];
        let s = self.params["bulb_separation"] / 2.0;
        let bump = self.param_or("bump_amplitude", 0.0);
        let z0 = self.param_or("bump_offset", 0.0);
        let rb_plus = rb + bump; // enlarged bulb on the +z side

        let ball_p = (x - Vector3::new(0.0, 0.0, s)).norm() - rb_plus;
        let ball_m = (x + Vector3::new(0.0, 0.0, s)).norm() - rb;

        // straight section over |z| < zf, then a trumpet; C^1 at the
        // junction since cosh' vanishes there
        let zf = 0.5 * s;
        let a = (s - zf) / (0.8 * rb / rn).acosh();
        let zd = (x.z - z0).clamp(-3.0 * s, 3.0 * s);
        let q = (zd.abs() - zf).max(0.0);
        let profile = rn * (q / a).cosh();
        let dprofile = (rn / a * (q / a).sinh()).copysign(zd);
        let rho = x.fixed_rows::<2>(0).norm();
        let trumpet = (rho - profile) / (1.0 + dprofile * dprofile).sqrt();
        // keep the trumpet between the bulb centers
        let neck = trumpet.max(x.z.abs() - s);

        let k = 0.4 * rb;
        smooth_min(smooth_min(ball_p, ball_m, k), neck, k)
    }
}

/// Polynomial smooth min with blending width `k`.
fn smooth_min(a: f64, b: f64, k: f64) -> f64 {
    let h = (k - (a - b).abs()).max(0.0) / k;
    a.min(b) - h * h * k * 0.25
}

/// Generate the shape's approximate SDF on a grid with the surface at the
/// grid box center. Fails if the surface does not fit with a 4h margin.
pub fn generate_sdf(spec: &ShapeSpec, grid: &UniformGrid) -> Result<ScalarField> {
    spec.validate()?;
    let ext = spec.bounding_half_extent()?;
    let lo = grid.origin;
    let hi = grid.max_corner();
    let center = [
        0.5 * (lo[0] + hi[0]),
        0.5 * (lo[1] + hi[1]),
        0.5 * (lo[2] + hi[2]),
    ];
    let margin = 4.0 * grid.h;
    for a in 0..3 {
        let room = 0.5 * (hi[a] - lo[a]);
        if ext[a] + margin > room {
            return Err(LsfError::Config(format!(
                "shape of half-extent {:.3} does not fit axis {a} half-extent {room:.3} with 4h margin",
                ext[a]
            )));
        }
    }
    Ok(ScalarField::from_fn(grid.clone(), |p| spec.sdf_at(p, center)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    NormalBump,
    LowFrequencyWobble,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub amplitude: f64,
    pub mode: PerturbMode,
    pub frequency: u32,
    pub phase: f64,
}

impl PerturbationSpec {
    pub fn new(amplitude: f64, mode: PerturbMode) -> Self {
        Self { amplitude, mode, frequency: 2, phase: 0.0 }
    }

    /// Fixed smooth profile w with |w| <= 1; the perturbed field is
    /// f + amplitude * w.
    pub fn profile(&self, p: [f64; 3], center: [f64; 3]) -> f64 {
        let x = p[0] - center[0];
        let y = p[1] - center[1];
        let z = p[2] - center[2];
        match self.mode {
            PerturbMode::NormalBump => {
                // angular Gaussian bump about the +x direction; the radial
                // mask removes the centroid singularity of the direction
                let r2 = x * x + y * y + z * z;
                let mask = r2 / (r2 + 0.01);
                let r = r2.sqrt().max(1e-300);
                let d2 = (x / r - 1.0).powi(2) + (y / r).powi(2) + (z / r).powi(2);
                mask * (-d2 / 0.18).exp()
            }
            PerturbMode::LowFrequencyWobble => {
                let rc2 = x * x + y * y;
                let mask = rc2 / (rc2 + 0.01);
                let phi = y.atan2(x);
                mask * (self.frequency as f64 * phi + self.phase).cos()
            }
        }
    }
}

/// Perturbed field f_base + amplitude * w. Amplitude 0 reproduces the base
/// field bit-exactly. Fails if the perturbation destroys the gradient in
/// the zero band (embeddedness check).
pub fn perturb_sdf(
    base: &ShapeSpec,
    pert: &PerturbationSpec,
    grid: &UniformGrid,
) -> Result<ScalarField> {
    if pert.amplitude < 0.0 {
        return Err(LsfError::Config("perturbation amplitude must be >= 0".into()));
    }
    let mut field = generate_sdf(base, grid)?;
    if pert.amplitude == 0.0 {
        return Ok(field);
    }
    let lo = grid.origin;
    let hi = grid.max_corner();
    let center = [
        0.5 * (lo[0] + hi[0]),
        0.5 * (lo[1] + hi[1]),
        0.5 * (lo[2] + hi[2]),
    ];
    let [nx, ny, nz] = grid.dims;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let n = [i, j, k];
                let idx = grid.index(n);
                field.values[idx] += pert.amplitude * pert.profile(grid.position(n), center);
            }
        }
    }
    // embeddedness: the gradient must survive on the zero crossing itself.
    // Only sign-change nodes count; small positive ridges away from the
    // surface (and deep interior critical points) are legitimate.
    let mut min_grad = f64::INFINITY;
    for n in grid.interior_nodes(2) {
        let idx = grid.index(n);
        let v = field.values[idx];
        let crossing = [
            [n[0] - 1, n[1], n[2]],
            [n[0] + 1, n[1], n[2]],
            [n[0], n[1] - 1, n[2]],
            [n[0], n[1] + 1, n[2]],
            [n[0], n[1], n[2] - 1],
            [n[0], n[1], n[2] + 1],
        ]
        .iter()
        .any(|&m| v * field.values[grid.index(m)] <= 0.0);
        if crossing {
            let jet = grid::jet2_at_unchecked(&field, n);
            min_grad = min_grad.min(jet.gradient.norm());
        }
    }
    if min_grad < 0.2 {
        return Err(LsfError::Config(format!(
            "perturbation amplitude {} too large: zero-band gradient dropped to {min_grad:.3}",
            pert.amplitude
        )));
    }
    ScalarField::new(field.grid, field.values)
}

#[derive(Debug, Clone, Serialize)]
pub struct SurfaceSample {
    pub point: [f64; 3],
    /// Unit normal oriented inward (toward negative field values).
    pub normal: [f64; 3],
    pub k1: f64,
    pub k2: f64,
    pub mean_curvature: f64,
}

/// Deterministic surface sampling: rays from the centroid over a Fibonacci
/// sphere of directions, bisected to the zero crossing. Curvatures follow
/// the inward-normal convention (positive for the round sphere).
pub fn surface_samples(field: &ScalarField, count: usize) -> Result<Vec<SurfaceSample>> {
    let grid = &field.grid;
    let h = grid.h;
    // centroid of the negative region
    let mut c = [0.0f64; 3];
    let mut n_neg = 0usize;
    for k in 0..grid.dims[2] {
        for j in 0..grid.dims[1] {
            for i in 0..grid.dims[0] {
                let n = [i, j, k];
                if field.at(n) < 0.0 {
                    let p = grid.position(n);
                    for a in 0..3 {
                        c[a] += p[a];
                    }
                    n_neg += 1;
                }
            }
        }
    }
    if n_neg == 0 {
        return Err(LsfError::Sampling("field has no interior region".into()));
    }
    for a in 0..3 {
        c[a] /= n_neg as f64;
    }

    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut samples = Vec::with_capacity(count);
    let max_norm = {
        let hi = grid.max_corner();
        (0..3)
            .map(|a| (hi[a] - grid.origin[a]) * 0.5)
            .fold(f64::INFINITY, f64::min)
    };
    for s in 0..count {
        let t = (s as f64 + 0.5) / count as f64;
        let z = 1.0 - 2.0 * t;
        let r = (1.0 - z * z).max(0.0).sqrt();
        let phi = golden * s as f64;
        let dir = [r * phi.cos(), r * phi.sin(), z];

        // march outward until sign change, then bisect
        let f_at = |t: f64| -> Option<f64> {
            let p = [c[0] + t * dir[0], c[1] + t * dir[1], c[2] + t * dir[2]];
            field.trilinear_sample(p).ok()
        };
        let f0 = match f_at(0.0) {
            Some(v) if v < 0.0 => v,
            _ => continue, // centroid outside the body along this ray
        };
        let mut t_lo = 0.0;
        let mut f_lo = f0;
        let mut t_hi = None;
        let mut t = h;
        while t < max_norm {
            match f_at(t) {
                Some(v) if v >= 0.0 => {
                    t_hi = Some(t);
                    break;
                }
                Some(v) => {
                    t_lo = t;
                    f_lo = v;
                }
                None => break,
            }
            t += h;
        }
        let Some(mut t_hi) = t_hi else { continue };
        let _ = f_lo;
        while t_hi - t_lo > 1e-10 * h {
            let tm = 0.5 * (t_lo + t_hi);
            match f_at(tm) {
                Some(v) if v < 0.0 => t_lo = tm,
                Some(_) => t_hi = tm,
                None => break,
            }
        }
        let tm = 0.5 * (t_lo + t_hi);
        let p = [c[0] + tm * dir[0], c[1] + tm * dir[1], c[2] + tm * dir[2]];
        let Ok(jet) = grid::jet2_sample(field, p) else { continue };
        let gn = jet.gradient.norm();
        if gn < grid::g_min(h) {
            continue;
        }
        let Ok(k) = grid::principal_curvatures_of_jet(&jet, h) else { continue };
        let inward = -jet.gradient / gn;
        samples.push(SurfaceSample {
            point: p,
            normal: [inward.x, inward.y, inward.z],
            k1: k[0],
            k2: k[1],
            mean_curvature: k[0] + k[1],
        });
    }
    if samples.len() * 2 < count {
        return Err(LsfError::Sampling(format!(
            "only {} of {} sample rays hit the surface",
            samples.len(),
            count
        )));
    }
    Ok(samples)
}

/// The shipped presets, in the plain-text preset format.
pub const PRESETS: &[(&str, &str)] = &[
    (
        "sphere_unit",
        "# unit sphere\nkind = sphere\nradius = 1.0\n",
    ),
    (
        "ellipsoid_default",
        "# mildly squashed ellipsoid\nkind = ellipsoid\na = 1.0\nb = 0.9\nc = 0.75\n",
    ),
    (
        "dumbbell_sym",
        "# symmetric dumbbell, thin neck pinches first\nkind = dumbbell\nneck_radius = 0.15\nbulb_radius = 0.5\nbulb_separation = 2.0\n",
    ),
    (
        "dumbbell_bumpy",
        "# one enlarged bulb; the large bulb is expected to outlive the pinch\nkind = bumpy_dumbbell\nneck_radius = 0.15\nbulb_radius = 0.42\nbulb_separation = 1.4\nbump_amplitude = 0.12\n",
    ),
    (
        "capsule_long",
        "# long capsule whose cylindrical middle pinches on an axial curve\nkind = capsule\nradius = 0.3\nlength = 2.4\n",
    ),
];

pub fn preset(name: &str) -> Result<ShapeSpec> {
    for (n, text) in PRESETS {
        if *n == name {
            return ShapeSpec::from_preset_text(text);
        }
    }
    Err(LsfError::Config(format!("unknown preset {name:?}")))
}
