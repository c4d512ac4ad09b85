//! End-to-end paths through the library: field to travel time to path,
//! Wulff set to effective solution, and the oscillating solution against both.

use geqhom_core::gequation::{HomogenizationOptions, RepOptions};
use geqhom_core::homogenize::{seed_list, unit_directions};
use geqhom_core::*;

#[test]
fn descended_path_replays_under_the_true_velocity() {
    let spec = FieldSpec::cellular(1.0);
    let f = sample_field(&spec, 3).unwrap();
    let y = Vec2::new(2.0, 1.0);
    let grid = Grid2::covering(Vec2::ZERO, 5.0, 0.02, 3).unwrap();
    let t = solve_travel_time(&f, &[Vec2::ZERO], &grid, DriftSign::Minus, 1.0).unwrap();
    let report = descend_path(&t, &f, y).unwrap();
    assert!(report.tau >= y.norm() / (1.0 + f.velocity_bound()));
    assert!(report.slack.abs() < 0.02, "slack {}", report.slack);
    assert!(report.trajectory.end().distance(y) <= grid.spacing());

    // Replaying the recovered controls with the integrator lands near the target.
    let replay = integrate(&f, Vec2::ZERO, &report.trajectory.control, report.traversal_time, 1e-3, DriftSign::Minus)
        .unwrap();
    assert!(replay.end().distance(y) < 0.1, "replay ends at {:?}", replay.end());
}

#[test]
fn zero_field_effective_solution_is_the_hopf_lax_sup() {
    let policy = GridPolicy { h: 0.1, stencil: 3, pad: 2.0 };
    let w = build_wulff(&FieldSpec::zero(), &[0], 32, &[5.0, 10.0, 20.0], &policy).unwrap();
    let h = w.clone().hamiltonian();
    for p in unit_directions(16) {
        assert!((homogenize::support(&h, p) - 1.0).abs() < 0.02);
    }
    let u0 = InitialData::cosine(1.0, 0.0);
    let eval = Grid2::new(Vec2::ZERO, 2.0, 0.5, 1).unwrap();
    let sol = solve_effective(&w, &u0, &[0.5, 1.0], &eval, 0.005).unwrap();
    for s in &sol {
        for k in 0..eval.len() {
            let x = eval.position(k);
            // sup of cos(y1) over |y - x| <= t.
            let near = (x.x / std::f64::consts::TAU).round() * std::f64::consts::TAU;
            let exact = if (x.x - near).abs() <= s.t { 1.0 } else { (x.x.abs() - s.t).cos().max((x.x + s.t).cos()) };
            let exact = exact.max((x.x - s.t).cos());
            assert!((s.values[k] - exact).abs() < 0.03, "t {} x {:?}: {} vs {exact}", s.t, x, s.values[k]);
        }
    }
}

#[test]
fn three_solvers_agree_without_drift() {
    let f = sample_field(&FieldSpec::zero(), 0).unwrap();
    let u0 = InitialData::Bump { center: Vec2::new(0.3, -0.2), radius: 1.0, height: 1.0 };
    let times = [0.5, 1.0];
    let eval = Grid2::new(Vec2::ZERO, 1.0, 0.25, 1).unwrap();
    let domain = Grid2::new(Vec2::ZERO, 4.0, 0.02, 1).unwrap();
    let lf = solve_geq(&f, 1.0, &u0, &times, &domain, 0.9, None).unwrap();
    let rep = ueps_rep(&f, 1.0, &u0, &times, &eval, &RepOptions { h: 0.02, stencil: 3 }).unwrap();
    let policy = GridPolicy { h: 0.1, stencil: 3, pad: 2.0 };
    let w = build_wulff(&FieldSpec::zero(), &[0], 64, &[5.0, 10.0, 20.0], &policy).unwrap();
    let eff = solve_effective(&w, &u0, &times, &eval, 0.002).unwrap();
    for ti in 0..times.len() {
        for k in 0..eval.len() {
            let x = eval.position(k);
            let a = lf[ti].interp(x);
            let (b, c) = (rep[ti].values[k], eff[ti].values[k]);
            assert!((a - b).abs() < 0.05, "lf {a} vs rep {b} at {x:?}");
            assert!((b - c).abs() < 0.05, "rep {b} vs eff {c} at {x:?}");
        }
    }
}

#[test]
fn homogenization_error_is_small_without_drift() {
    let opts = HomogenizationOptions {
        time_steps: 2,
        eval_h: 0.5,
        rep: RepOptions { h: 0.1, stencil: 3 },
        wulff_directions: 32,
        wulff_seeds: 1,
        wulff_radii: vec![5.0, 10.0, 20.0],
        wulff_pad: 2.0,
        sampling_tol: 0.005,
    };
    let u0 = InitialData::cosine(0.25, 0.0);
    let rep = homogenization_error(&FieldSpec::zero(), 0, &u0, 2.0, &[0.5, 0.25], 2.0, &opts).unwrap();
    assert_eq!(rep.errors.len(), 2);
    for e in &rep.errors {
        assert!(*e < 0.05, "error {e}");
    }
}

#[test]
fn seeds_give_independent_but_reproducible_realizations() {
    let spec = FieldSpec::isotropic_fourier(8, 1.0, 1.0);
    let seeds = seed_list(11, 3);
    let a: Vec<_> = seeds.iter().map(|&s| sample_field(&spec, s).unwrap()).collect();
    let b: Vec<_> = seeds.iter().map(|&s| sample_field(&spec, s).unwrap()).collect();
    assert_eq!(a, b);
    assert_ne!(a[0].phases(), a[1].phases());
    let json = serde_json::to_string(&spec).unwrap();
    assert_eq!(FieldSpec::from_json(&json).unwrap(), spec);
}
