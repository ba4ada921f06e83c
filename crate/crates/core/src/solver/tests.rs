use super::*;
use crate::energy::eval_energy;
use crate::imaging::{build_pyramid, RigidPose};
use crate::testutil::{self, desk_prior, landmarks, random_params, render};
use crate::Vec3;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

#[test]
fn pcg_matches_direct_solve_on_random_spd() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..10 {
        let m = DMatrix::from_fn(20, 20, |_, _| rng.random_range(-1.0..1.0));
        let a = m.transpose() * &m / 20.0 + DMatrix::identity(20, 20);
        let b: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let diag: Vec<f64> = (0..20).map(|i| a[(i, i)]).collect();
        let op = |x: &[f64]| (&a * DVector::from_column_slice(x)).as_slice().to_vec();
        let got = pcg_solve(op, &b, &diag, &PcgOptions::fixed(20)).unwrap().x;
        let rows: Vec<Vec<f64>> = (0..20).map(|i| (0..20).map(|j| a[(i, j)]).collect()).collect();
        let want = gauss_solve(rows, b.clone());
        let err: f64 = got.iter().zip(&want).map(|(g, w)| (g - w).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = want.iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!(err < 1e-8 * norm, "relative error {}", err / norm);
    }
}

#[test]
fn two_matvec_split_matches_explicit_normal_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (rows, cols) in [(5, 3), (40, 12), (600, 20)] {
        let m = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        let sys = DenseSystem {
            jacobian: DenseJacobian::from_dmatrix(&m),
            residual: vec![0.0; rows],
        };
        let x: Vec<f64> = (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let want = m.transpose() * &m * DVector::from_column_slice(&x);
        for (g, w) in sys.apply_jtj(&x).iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-10);
        }
    }
}

#[test]
fn gradient_matches_finite_differences_of_surrogate() {
    let prior = desk_prior(31);
    let mut rng = testutil::rng(31);
    let truth = random_params(&prior, &mut rng, 48, 48, 1.0);
    let frame = render(&prior, &truth, 48, 48);
    let lms = landmarks(&prior, &truth);
    let state = random_params(&prior, &mut rng, 48, 48, 1.0);
    let layout = ParamLayout::full(&prior);
    let lin = Linearization::new(
        &prior,
        &state,
        FrameTarget::new(&frame, &lms),
        &EnergyWeights::default(),
        &layout,
        &Default::default(),
    )
    .unwrap();
    let sys = DenseSystem {
        jacobian: lin.jacobian(),
        residual: lin.residuals(),
    };
    let g = sys.gradient();
    let half_sq = |p: &SceneParams| 0.5 * lin.frozen_residuals(p).unwrap().iter().map(|r| r * r).sum::<f64>();
    for slot in layout.slots() {
        for i in 0..slot.len {
            let h = testutil::fd_step(&prior, &state, slot.block, i);
            let mut dx = vec![0.0; layout.dim()];
            dx[slot.offset + i] = h;
            let mut plus = state.clone();
            plus.apply_update(&layout, &dx);
            dx[slot.offset + i] = -h;
            let mut minus = state.clone();
            minus.apply_update(&layout, &dx);
            let fd = (half_sq(&plus) - half_sq(&minus)) / (2.0 * h);
            let k = slot.offset + i;
            let tol = 1e-3 * fd.abs().max(1e-6 * g.iter().map(|v| v.abs()).fold(0.0, f64::max));
            assert!((g[k] - fd).abs() <= tol, "{:?}[{i}]: {} vs {fd}", slot.block, g[k]);
        }
    }
}

fn self_render_setup(seed: u64, size: usize) -> (FacePrior, SceneParams, Vec<Frame>, Vec<LandmarkObservation>) {
    let prior = desk_prior(seed);
    let mut rng = testutil::rng(seed);
    let truth = random_params(&prior, &mut rng, size, size, 1.0);
    let frame = render(&prior, &truth, size, size);
    let pyr = build_pyramid(&frame, FINEST_LEVEL).unwrap();
    let lms = landmarks(&prior, &truth);
    (prior, truth, pyr, lms)
}

#[test]
fn ground_truth_is_stationary() {
    // zero coefficients so the regularizer is also at its minimum
    let prior = desk_prior(40);
    let mut truth = random_params(&prior, &mut testutil::rng(40), 64, 64, 1.0);
    truth.alpha.fill(0.0);
    truth.beta.fill(0.0);
    truth.delta.fill(0.0);
    let frame = render(&prior, &truth, 64, 64);
    let pyr = build_pyramid(&frame, FINEST_LEVEL).unwrap();
    let lms = landmarks(&prior, &truth);
    // only the finest level is exact; coarse levels see a box-filtered image
    let schedule = SolveSchedule {
        levels: vec![LevelSchedule::new(FINEST_LEVEL, 3, 4)],
    };
    let (out, report) = solve_single_frame(&prior, &truth, &pyr, &lms, &schedule, &SolveOptions::tracking()).unwrap();
    assert!(report.update_norms.iter().all(|n| *n < 1e-8), "{:?}", report.update_norms);
    let e = eval_energy(&prior, &out, &FrameTarget::new(&pyr[0], &lms), &EnergyWeights::default()).unwrap();
    assert!(e.total < 1e-12, "{e:?}");
}

#[test]
fn pose_only_recovers_from_rotation_perturbation() {
    let (prior, truth, pyr, lms) = self_render_setup(41, 64);
    let mut init = truth.clone();
    init.pose = RigidPose {
        rotation: RigidPose::from_axis_angle(Vec3::new(0.0, 5f64.to_radians(), 0.0), Vec3::zeros()).rotation
            * truth.pose.rotation,
        translation: truth.pose.translation,
    };
    let (_, report) =
        solve_single_frame(&prior, &init, &pyr, &lms, &SolveSchedule::tracking(), &SolveOptions::pose_only()).unwrap();
    let e0 = eval_energy(&prior, &init, &FrameTarget::new(&pyr[0], &lms), &EnergyWeights::default()).unwrap();
    let e1 = report.final_energy().unwrap();
    assert!(e1.col < 1e-6 * e0.col, "{} vs {}", e1.col, e0.col);
}

#[test]
fn energy_trace_is_mostly_monotone() {
    let mut steps = 0;
    let mut increases = 0;
    for seed in 0..4 {
        let (prior, truth, pyr, lms) = self_render_setup(50 + seed, 64);
        let mut init = truth.clone();
        init.delta.fill(0.0);
        init.pose = init.pose.rotate_left(&Vec3::new(0.03, -0.03, 0.02));
        init.pose.translation += Vec3::new(0.02, -0.01, 0.05);
        let (_, report) =
            solve_single_frame(&prior, &init, &pyr, &lms, &SolveSchedule::tracking(), &SolveOptions::tracking())
                .unwrap();
        for w in report.trace.windows(2) {
            if w[1].iteration == 0 {
                continue;
            }
            steps += 1;
            if w[1].energy.total > w[0].energy.total {
                increases += 1;
            }
        }
        let first = report.trace[0].energy.total;
        assert!(report.final_energy().unwrap().total < 0.5 * first);
    }
    assert!(increases * 20 <= steps, "{increases} of {steps} steps increased the energy");
}

#[test]
fn solves_are_deterministic() {
    let (prior, truth, pyr, lms) = self_render_setup(60, 64);
    let mut init = truth.clone();
    init.delta.fill(0.0);
    let run = || solve_single_frame(&prior, &init, &pyr, &lms, &SolveSchedule::tracking(), &SolveOptions::tracking());
    let (a, _) = run().unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let (b, _) = pool.install(run).unwrap();
    assert_eq!(a, b);
}

#[test]
fn empty_visibility_fails_the_solve() {
    let (prior, truth, pyr, lms) = self_render_setup(61, 32);
    let mut init = truth;
    init.pose.translation.z = -4.0;
    let r = solve_single_frame(&prior, &init, &pyr, &lms, &SolveSchedule::tracking(), &SolveOptions::tracking());
    assert!(matches!(r, Err(Error::EmptyVisibility)));
}

#[test]
fn step_halving_never_increases_energy_when_enabled() {
    let (prior, truth, pyr, lms) = self_render_setup(62, 64);
    let mut init = truth.clone();
    init.pose.translation += Vec3::new(0.15, 0.0, 0.0);
    let mut opts = SolveOptions::tracking();
    opts.step_halving = true;
    let (_, report) = solve_single_frame(&prior, &init, &pyr, &lms, &SolveSchedule::tracking(), &opts).unwrap();
    for w in report.trace.windows(2) {
        if w[1].iteration > 0 {
            assert!(w[1].energy.total <= w[0].energy.total * (1.0 + 1e-12));
        }
    }
}

#[test]
fn trace_csv_has_one_line_per_entry() {
    let trace = vec![
        TraceEntry {
            iteration: 0,
            level: 2,
            energy: EnergyReport {
                total: 1.0,
                col: 0.5,
                lan: 0.05,
                reg: 0.0,
                visible: 10,
            },
        };
        3
    ];
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, &trace).unwrap();
    let s = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines[0], TRACE_CSV_HEADER);
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[1], "0,2,1e0,5e-1,5e-2,0e0,10");
}

#[test]
fn frozen_intrinsics_are_not_updated_at_finest_level() {
    let (prior, truth, pyr, lms) = self_render_setup(63, 64);
    let mut init = truth.clone();
    init.camera.fx += 1.0;
    let mut opts = SolveOptions::new(&[ParamBlock::Rotation, ParamBlock::Translation, ParamBlock::Intrinsics]);
    opts.freeze_intrinsics_at = Some(2);
    let schedule = SolveSchedule {
        levels: vec![LevelSchedule::new(2, 1, 4)],
    };
    let (out, _) = solve_single_frame(&prior, &init, &pyr, &lms, &schedule, &opts).unwrap();
    assert_eq!(out.camera, init.camera);
}

