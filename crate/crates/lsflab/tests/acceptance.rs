//! Acceptance gate: one test per criterion, each printing a single
//! PASS/FAIL line. Expensive solves are shared through lazily initialized
//! fixtures.

use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lsflab::grid::{ScalarField, UniformGrid};
use lsflab::metrics;
use lsflab::minmax;
use lsflab::shapes::{self, PerturbMode, ShapeSpec};
use lsflab::singular::{self, CriticalKind, ComponentGeometry, HessianClass, SingularType};
use lsflab::solver::{self, ArrivalResult, SolveConfig};
use lsflab::stability::{ExperimentPlan, StabilityReport};

fn report(criterion: &str, pass: bool, detail: &str) {
    println!("{} criterion {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn boxed_grid(spec: &ShapeSpec, h: f64) -> UniformGrid {
    let e = spec.bounding_half_extent().unwrap();
    let m = (8.0 * h).max(0.3);
    UniformGrid::centered([e[0] + m, e[1] + m, e[2] + m], h).unwrap()
}

struct Run {
    initial: ScalarField,
    result: ArrivalResult,
}

fn solve_preset(name: &str, h: f64, snapshots: &[f64]) -> Run {
    let spec = shapes::preset(name).unwrap();
    let grid = boxed_grid(&spec, h);
    let initial = shapes::generate_sdf(&spec, &grid).unwrap();
    let config = SolveConfig { snapshot_times: snapshots.to_vec(), ..SolveConfig::default() };
    let result = solver::solve_parabolic(&initial, &config).unwrap();
    assert!(result.failure.is_none(), "{name} h={h}: {:?}", result.failure);
    Run { initial, result }
}

/// Unit sphere at h = 1/32, solved single-threaded and timed.
fn sphere32() -> &'static (Run, f64) {
    static CELL: OnceLock<(Run, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let t0 = Instant::now();
        let run = pool.install(|| solve_preset("sphere_unit", 1.0 / 32.0, &[0.04, 0.09, 0.14, 0.19]));
        let secs = t0.elapsed().as_secs_f64();
        (run, secs)
    })
}

fn sphere32_elliptic() -> &'static ArrivalResult {
    static CELL: OnceLock<ArrivalResult> = OnceLock::new();
    CELL.get_or_init(|| {
        let initial = &sphere32().0.initial;
        let res = solver::solve_elliptic(initial, &SolveConfig::default()).unwrap();
        assert!(res.failure.is_none(), "{:?}", res.failure);
        res
    })
}

fn dumbbell(coarse: bool) -> &'static Run {
    static C16: OnceLock<Run> = OnceLock::new();
    static C32: OnceLock<Run> = OnceLock::new();
    if coarse {
        C16.get_or_init(|| solve_preset("dumbbell_sym", 1.0 / 16.0, &[]))
    } else {
        C32.get_or_init(|| {
            solve_preset("dumbbell_sym", 1.0 / 32.0, &[0.002, 0.005, 0.009, 0.02, 0.04])
        })
    }
}

fn capsule(coarse: bool) -> &'static Run {
    static C16: OnceLock<Run> = OnceLock::new();
    static C32: OnceLock<Run> = OnceLock::new();
    if coarse {
        C16.get_or_init(|| solve_preset("capsule_long", 1.0 / 16.0, &[]))
    } else {
        C32.get_or_init(|| solve_preset("capsule_long", 1.0 / 32.0, &[]))
    }
}

fn sphere16() -> &'static Run {
    static CELL: OnceLock<Run> = OnceLock::new();
    CELL.get_or_init(|| solve_preset("sphere_unit", 1.0 / 16.0, &[]))
}

fn analyze(run: &Run, t_floor: f64) -> singular::SingularReport {
    singular::analyze(&run.result.u, t_floor, 17).unwrap()
}

/// t_floor low enough to keep the early neck pinch, high enough to clear
/// the exterior plateau.
fn t_floor_for(h: f64) -> f64 {
    2.0 * h * h
}

fn sup_err_sphere(u: &ScalarField, rmax: f64) -> f64 {
    let g = &u.grid;
    let mut e: f64 = 0.0;
    for n in g.interior_nodes(2) {
        let p = g.position(n);
        let r2: f64 = p.iter().map(|x| x * x).sum();
        if r2 <= rmax * rmax {
            e = e.max((u.at(n) - (1.0 - r2) / 4.0).abs());
        }
    }
    e
}

#[test]
fn criterion_01_shrinking_sphere_oracle() {
    let (run, secs) = sphere32();
    let err = sup_err_sphere(&run.result.u, 0.9);
    let t_ext = run.result.extinction_time;
    let pass = err <= 0.02 && (0.24..=0.26).contains(&t_ext) && *secs <= 120.0;
    report(
        "01 shrinking-sphere oracle",
        pass,
        &format!("sup err {err:.4} (<=0.02), T_ext {t_ext:.4} (in [0.24,0.26]), {secs:.0}s single-threaded (<=120)"),
    );
}

#[test]
fn criterion_02_elliptic_regularization() {
    let ell = sphere32_elliptic();
    let errs: Vec<f64> = ell.per_epsilon.iter().map(|(_, f)| sup_err_sphere(f, 1.0)).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let final_err = *errs.last().unwrap();
    let par = &sphere32().0.result;
    let gap = par
        .u
        .values
        .iter()
        .zip(ell.u.values.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let pass = decreasing && final_err <= 0.03 && gap <= 0.03;
    report(
        "02 elliptic regularization",
        pass,
        &format!("errors {errs:.3?} decreasing={decreasing}, final {final_err:.4} (<=0.03), cross-method gap {gap:.4} (<=0.03)"),
    );
}

#[test]
fn criterion_03_gradient_bound() {
    let mut detail = String::new();
    let mut pass = true;
    for (name, run) in [("sphere", &sphere32().0), ("dumbbell", dumbbell(false))] {
        let samples = shapes::surface_samples(&run.initial, 256).unwrap();
        let min_h = samples.iter().map(|s| s.mean_curvature).fold(f64::INFINITY, f64::min);
        let check = solver::gradient_bound_check(&run.result, min_h);
        pass &= check.pass;
        detail.push_str(&format!(
            "{name}: max|grad u| {:.4} <= 1/min_H + 10h = {:.4}; ",
            check.max_grad, check.bound
        ));
    }
    report("03 gradient bound", pass, &detail);
}

#[test]
fn criterion_04_hessian_signatures() {
    let h32 = 1.0 / 32.0;
    // sphere: the single critical point is round with eigenvalues near 1/2
    let sph = analyze(&sphere32().0, 0.05);
    let sp = sph.components[0]
        .points
        .iter()
        .min_by(|a, b| a.grad_norm.partial_cmp(&b.grad_norm).unwrap())
        .unwrap();
    let sphere_ok = sp.eigenvalues.iter().all(|&l| (l - 0.5).abs() <= 0.1);

    // dumbbell: neck point has signature (0, 1, 1) with axis near z
    let dmb = analyze(dumbbell(false), t_floor_for(h32));
    let neck = dmb
        .components
        .iter()
        .flat_map(|c| c.points.iter())
        .filter(|p| p.position[2].abs() < 0.3)
        .min_by(|a, b| a.grad_norm.partial_cmp(&b.grad_norm).unwrap())
        .expect("neck critical point");
    let ev = neck.eigenvalues;
    let neck_ok = ev[0].abs() <= 0.15 && (ev[1] - 1.0).abs() <= 0.15 && (ev[2] - 1.0).abs() <= 0.15;
    let axis_deg = neck
        .axis_vector()
        .map(|a| a.dot(&Vector3::z()).abs().clamp(-1.0, 1.0).acos().to_degrees())
        .unwrap_or(90.0);
    let axis_ok = axis_deg <= 10.0;
    report(
        "04 Hessian signatures",
        sphere_ok && neck_ok && axis_ok,
        &format!(
            "sphere eigs {:.3?} (each within 0.1 of 0.5); neck eigs {ev:.3?} (within 0.15 of (0,1,1)), axis {axis_deg:.1} deg off z (<=10)",
            sp.eigenvalues
        ),
    );
}

#[test]
fn criterion_05_structure_and_typing() {
    let mut detail = String::new();
    let mut pass = true;

    // sphere at both resolutions: one vanishing point, T1 = T_ext
    for run in [sphere16(), &sphere32().0] {
        let h = run.initial.grid.h;
        let rep = analyze(run, 0.05);
        let ok = rep.components.len() == 1
            && rep.components[0].geometry == ComponentGeometry::Point
            && rep.components[0].sing_type == SingularType::Vanishing
            && (rep.components[0].singular_time - run.result.extinction_time).abs()
                <= singular::tol_time(h);
        pass &= ok;
        detail.push_str(&format!("sphere h=1/{:.0}: {} component(s) {:?}; ", 1.0 / h,
            rep.components.len(),
            rep.components.first().map(|c| c.sing_type)));
    }

    // dumbbell: a splitting neck component with exactly 2 superlevel pieces
    for run in [dumbbell(true), dumbbell(false)] {
        let h = run.initial.grid.h;
        let rep = analyze(run, t_floor_for(h));
        let neck = rep
            .components
            .iter()
            .filter(|c| c.points.iter().any(|p| p.position[2].abs() < 0.3))
            .min_by(|a, b| a.singular_time.partial_cmp(&b.singular_time).unwrap());
        let ok = neck.map_or(false, |c| {
            c.sing_type == SingularType::Splitting && c.split_count == 2
        });
        pass &= ok;
        detail.push_str(&format!(
            "dumbbell h=1/{:.0}: neck {:?} split_count {:?}; ",
            1.0 / h,
            neck.map(|c| c.sing_type),
            neck.map(|c| c.split_count)
        ));
    }

    // capsule: one vanishing curve, interior points all local max
    for run in [capsule(true), capsule(false)] {
        let h = run.initial.grid.h;
        let rep = analyze(run, t_floor_for(h));
        let ok = rep.components.len() == 1
            && matches!(rep.components[0].geometry, ComponentGeometry::Curve { .. })
            && rep.components[0].sing_type == SingularType::Vanishing
            && rep.components[0].kinds.len() > 2
            && rep.components[0].kinds[1..rep.components[0].kinds.len() - 1]
                .iter()
                .all(|&k| k == CriticalKind::LocalMax);
        pass &= ok;
        detail.push_str(&format!(
            "capsule h=1/{:.0}: {} component(s) {:?} {:?}; ",
            1.0 / h,
            rep.components.len(),
            rep.components.first().map(|c| c.geometry),
            rep.components.first().map(|c| c.sing_type)
        ));
    }
    report("05 structure and typing", pass, &detail);
}

#[test]
fn criterion_06_cone_containment() {
    let mut detail = String::new();
    let mut pass = true;
    for run in [dumbbell(true), dumbbell(false)] {
        let h = run.initial.grid.h;
        let set = singular::detect_critical_set(&run.result.u, t_floor_for(h)).unwrap();
        let neck = set
            .points
            .iter()
            .filter(|p| p.position[2].abs() < 0.3 && p.class == HessianClass::Cylindrical)
            .min_by(|a, b| a.grad_norm.partial_cmp(&b.grad_norm).unwrap())
            .expect("cylindrical neck point");
        let ok = singular::cone_containment(
            &run.result.u,
            &set,
            neck,
            30f64.to_radians(),
            3.0 * 0.15,
        )
        .unwrap();
        pass &= ok;
        detail.push_str(&format!("h=1/{:.0}: contained={ok}; ", 1.0 / h));
    }
    report("06 cone containment", pass, &detail);
}

fn stability_sphere() -> &'static StabilityReport {
    static CELL: OnceLock<StabilityReport> = OnceLock::new();
    CELL.get_or_init(|| {
        let h = 1.0 / 16.0;
        let plan = ExperimentPlan {
            shape: shapes::preset("sphere_unit").unwrap(),
            mode: PerturbMode::NormalBump,
            frequency: 2,
            phase: 0.0,
            amplitudes: vec![0.04, 0.02, 0.01, 0.0],
            h,
            delta: 6.0 * h,
            t_floor: 0.05,
            seed: 23,
            solve: SolveConfig::default(),
        };
        lsflab::stability::run_experiment(&plan).unwrap()
    })
}

#[test]
fn criterion_07_stability_suite() {
    let rep = stability_sphere();
    let gaps: Vec<f64> = rep.rows[..3].iter().map(|r| r.sup_u_gap).collect();
    let ratios: Vec<f64> = gaps.windows(2).map(|w| w[1] / w[0]).collect();
    let ratios_ok = gaps.windows(2).all(|w| w[1] < w[0])
        && ratios.iter().all(|r| (0.3..=0.8).contains(r));
    let ext_ok = rep.rows[..3].iter().all(|r| r.extinction_gap <= 2.0 * r.amplitude);
    let zero = &rep.rows[3];
    let zero_ok = zero.amplitude == 0.0
        && zero.sup_u_gap == 0.0
        && zero.sup_grad_gap_off_s == 0.0
        && zero.extinction_gap == 0.0;

    // dumbbell: neck containment and type preservation under a small bump
    let h = 1.0 / 16.0;
    let plan = ExperimentPlan {
        shape: shapes::preset("dumbbell_sym").unwrap(),
        mode: PerturbMode::NormalBump,
        frequency: 2,
        phase: 0.0,
        amplitudes: vec![0.01],
        h,
        delta: 6.0 * h,
        t_floor: t_floor_for(h),
        seed: 23,
        solve: SolveConfig::default(),
    };
    let drep = lsflab::stability::run_experiment(&plan).unwrap();
    let drow = &drep.rows[0];
    // proxy failures produce None and are reported, not failed
    let contain_ok = drow.containment_pass != Some(false);
    let type_ok = drow.type_match != Some(false);

    let pass = ratios_ok && ext_ok && zero_ok && contain_ok && type_ok;
    report(
        "07 stability suite",
        pass,
        &format!(
            "sphere gaps {gaps:.4?} ratios {ratios:.2?} (in [0.3,0.8]), extinction gaps ok={ext_ok}, zero row exact={zero_ok}; dumbbell contain={:?} type_match={:?}",
            drow.containment_pass, drow.type_match
        ),
    );
}

#[test]
fn criterion_08_minmax_oracle() {
    // exact diagonal case first
    let g = Matrix3::identity();
    let a = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
    let diag = minmax::grassmannian_min_trace(&g, &a, 512);
    let diag_ok = (diag - 3.0).abs() <= 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        // SPD G = M M^T + I, symmetric A
        let m = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let g = m * m.transpose() + Matrix3::identity();
        let s = Matrix3::from_fn(|_, _| rng.gen_range(-2.0..2.0));
        let a = (s + s.transpose()) * 0.5;
        // oracle: two smallest generalized eigenvalues of A v = lambda G v
        // via the Cholesky reduction L^-1 A L^-T
        let l = g.cholesky().unwrap();
        let linv = l.l().try_inverse().unwrap();
        let reduced = linv * a * linv.transpose();
        let mut evs: Vec<f64> = reduced.symmetric_eigen().eigenvalues.iter().cloned().collect();
        evs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let oracle = evs[0] + evs[1];
        let got = minmax::grassmannian_min_trace(&g, &a, 512);
        worst = worst.max((got - oracle).abs());
    }
    let pass = diag_ok && worst <= 1e-6;
    report(
        "08 min-max oracle",
        pass,
        &format!("diag(1,2,3) err {:.2e} (<=1e-12), worst of 1000 seeded cases {worst:.2e} (<=1e-6)", (diag - 3.0).abs()),
    );
}

#[test]
fn criterion_09_entropy() {
    // sphere entropy near 4/e
    let target = 4.0 / std::f64::consts::E;
    let h = 1.0 / 32.0;
    let entropy_of_sphere = |radius: f64, h: f64| -> f64 {
        let g = UniformGrid::centered([radius * 1.3, radius * 1.3, radius * 1.3], h).unwrap();
        let spec = ShapeSpec::new(shapes::ShapeKind::Sphere, &[("radius", radius)]);
        let f = shapes::generate_sdf(&spec, &g).unwrap();
        let samples = shapes::surface_samples(&f, 128).unwrap();
        metrics::entropy_of_field(&f, &samples)
    };
    let e1 = entropy_of_sphere(1.0, h);
    let near_ok = (e1 - target).abs() <= 0.05;
    let mut scale_ok = true;
    let mut scale_detail = String::new();
    for c in [0.5, 2.0] {
        let ec = entropy_of_sphere(c, c / 32.0);
        scale_ok &= (ec - e1).abs() <= 0.02;
        scale_detail.push_str(&format!("c={c}: {ec:.4}; "));
    }
    // discrete monotonicity along snapshots, slack 0.05
    let mut mono_ok = true;
    let mut mono_detail = String::new();
    for (name, run) in [("sphere", &sphere32().0), ("dumbbell", dumbbell(false))] {
        let series = solver::snapshot_entropy_series(&run.result);
        assert!(series.len() >= 2, "{name}: too few entropy snapshots");
        let ok = series.windows(2).all(|w| w[1].1 <= w[0].1 + 0.05);
        mono_ok &= ok;
        let vals: Vec<f64> = series.iter().map(|(_, e)| *e).collect();
        mono_detail.push_str(&format!("{name} {vals:.3?}; "));
    }
    report(
        "09 entropy",
        near_ok && scale_ok && mono_ok,
        &format!("sphere {e1:.4} vs 4/e {target:.4} (within 0.05); scale {scale_detail}(within 0.02); monotone {mono_detail}"),
    );
}

#[test]
fn criterion_10_noncollapsing_and_clearing() {
    let run = &sphere32().0;
    let samples = shapes::surface_samples(&run.initial, 192).unwrap();
    let (pass_19, _) = metrics::noncollapsing_test(&samples, &run.initial, 1.9).unwrap();
    let (pass_22, _) = metrics::noncollapsing_test(&samples, &run.initial, 2.2).unwrap();
    let rows = solver::clearing_distance_check(&run.result, &run.initial, 2.0, &[0.05, 0.1]);
    let clearing_ok = rows.iter().all(|r| r.pass);
    let pass = pass_19 && !pass_22 && clearing_ok;
    let rows_txt: Vec<String> = rows
        .iter()
        .map(|r| format!("T={}: {:.4}>={:.4}", r.t, r.min_distance, r.bound))
        .collect();
    report(
        "10 noncollapsing and clearing",
        pass,
        &format!("ball test alpha 1.9 pass={pass_19}, alpha 2.2 pass={pass_22} (want fail); clearing {rows_txt:?}"),
    );
}
