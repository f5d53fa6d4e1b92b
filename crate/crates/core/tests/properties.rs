use nalgebra::Vector2;
use objflow_core::depthflow::{filter_movable, nearest_timestep, ObjectFlow3D, Tracks2D};
use objflow_core::door::{flow_reward, object_state_reward, DoorGeometry, DoorState, FlowRewardContext};
use objflow_core::kinematics::RobotModel;
use objflow_core::push::{
    check_success, heuristic_dynamics, simulate_push, fit_pose2, Pose2, PushParams, TBlockState, Vec2,
};
use objflow_core::se3::{fit_rigid, weighted_residual};
use objflow_core::trajopt::{bspline_resample, DEFAULT_MIN_ROTATION, DEFAULT_MIN_TRANSLATION};
use objflow_core::{CameraModel, RigidTransform, Vec3};
use proptest::prelude::*;
use std::f64::consts::PI;

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn transform() -> impl Strategy<Value = RigidTransform> {
    (vec3(1.0), vec3(2.0)).prop_map(|(w, t)| RigidTransform::from_scaled_axis(&(w * 2.5), t))
}

fn cloud(n: usize) -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec(vec3(1.0), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn project_inverts_backproject(u in 0.0..640.0f64, v in 0.0..480.0f64, z in 0.1..10.0f64, ext in transform()) {
        let cam = CameraModel::new(600.0, 610.0, 320.0, 240.0, 640, 480, ext).unwrap();
        let px = Vector2::new(u, v);
        let p = cam.backproject(&px, z).unwrap();
        let (back, depth) = cam.project(&p).unwrap();
        prop_assert!((back - px).norm() < 1e-6);
        prop_assert!((depth - z).abs() < 1e-9);
    }

    #[test]
    fn fit_rigid_is_conjugation_equivariant(src in cloud(8), motion in transform(), g in transform()) {
        let dst: Vec<Vec3> = src.iter().map(|p| motion.transform_point(p)).collect();
        let w = vec![1.0; src.len()];
        let base = fit_rigid(&src, &dst, &w).unwrap();
        let gs: Vec<Vec3> = src.iter().map(|p| g.transform_point(p)).collect();
        let gd: Vec<Vec3> = dst.iter().map(|p| g.transform_point(p)).collect();
        let moved = fit_rigid(&gs, &gd, &w).unwrap();
        let expect = g.compose(&base).compose(&g.inverse());
        prop_assert!(moved.rotation_angle_to(&expect) < 1e-8);
        prop_assert!(moved.translation_distance(&expect) < 1e-8);
    }

    #[test]
    fn fit_rigid_beats_identity_and_stays_proper(src in cloud(7), dst in cloud(7)) {
        let w = vec![1.0; 7];
        let fit = fit_rigid(&src, &dst, &w).unwrap();
        prop_assert!((fit.rotation().determinant() - 1.0).abs() < 1e-9);
        let id = RigidTransform::identity();
        prop_assert!(weighted_residual(&fit, &src, &dst, &w) <= weighted_residual(&id, &src, &dst, &w) + 1e-12);
    }

    #[test]
    fn movable_split_ignores_track_order(
        steps in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 6 * 5),
        seed in 0u64..1000,
    ) {
        let (t, n) = (5, 6);
        let mut pixels = Vec::new();
        for k in 0..t {
            for i in 0..n {
                let (dx, dy) = steps[k * n + i];
                pixels.push(Vector2::new(100.0 + i as f64 * 10.0 + dx * k as f64, 50.0 + dy * k as f64));
            }
        }
        let vis: Vec<bool> = (0..t * n).map(|k| !(k as u64 * 7 + seed).is_multiple_of(5)).collect();
        let tracks = Tracks2D::new(t, n, pixels, vis).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left((seed % n as u64) as usize);
        perm.swap(0, n - 1);
        let a = filter_movable(&tracks, None, 1.0).unwrap();
        let b = filter_movable(&tracks.permuted(&perm), None, 1.0).unwrap();
        let mut mapped: Vec<usize> = b.movable.iter().map(|&k| perm[k]).collect();
        mapped.sort_unstable();
        prop_assert_eq!(mapped, a.movable);
        for (k, &old) in perm.iter().enumerate() {
            prop_assert_eq!(b.mean_displacement[k], a.mean_displacement[old]);
        }
    }

    #[test]
    fn flow_slice_matches_its_own_index(frames in prop::collection::vec(cloud(4), 2..8), pick in 0usize..8) {
        let flow = ObjectFlow3D::from_frames(&frames).unwrap();
        let t = pick % frames.len();
        let got = nearest_timestep(&frames[t], &[true; 4], &flow).unwrap();
        // Duplicate frames resolve to their earliest copy.
        prop_assert_eq!(&frames[got], &frames[t]);
        prop_assert!(got <= t);
    }

    #[test]
    fn base_transform_prepends_and_keeps_manipulability(
        q in prop::collection::vec(-1.5..1.5f64, 7),
        base in transform(),
    ) {
        let model = RobotModel::franka_like();
        let moved = model.with_base(&base);
        let expect = base.compose(&model.fk(&q));
        let got = moved.fk(&q);
        prop_assert!(got.translation_distance(&expect) < 1e-12);
        prop_assert!(got.rotation_angle_to(&expect) < 1e-9);
        prop_assert!((model.manipulability(&q) - moved.manipulability(&q)).abs() < 1e-10);
    }

    #[test]
    fn resampled_gaps_respect_thresholds(
        a in vec3(0.2), w in vec3(1.5), bend in -0.1..0.1f64, n in 4usize..40,
    ) {
        let poses: Vec<RigidTransform> = (0..n)
            .map(|k| {
                let s = k as f64 / (n - 1) as f64;
                RigidTransform::from_scaled_axis(&(w * s), a * s + Vec3::new(0.0, bend * (PI * s).sin(), 0.0))
            })
            .collect();
        let out = bspline_resample(&poses, DEFAULT_MIN_TRANSLATION, DEFAULT_MIN_ROTATION);
        prop_assert!(out.poses.len() >= 2);
        prop_assert!(out.poses[0].translation_distance(&poses[0]) < 1e-12);
        prop_assert!(out.poses.last().unwrap().translation_distance(poses.last().unwrap()) < 1e-12);
        for pair in out.poses.windows(2) {
            let ok = pair[0].translation_distance(&pair[1]) >= DEFAULT_MIN_TRANSLATION
                || pair[0].rotation_angle_to(&pair[1]) >= DEFAULT_MIN_ROTATION;
            // Only a motionless path may end with a short final pair.
            prop_assert!(ok || out.poses.len() == 2);
        }
    }

    #[test]
    fn success_check_ignores_full_turns(x in -0.1..0.1f64, y in -0.1..0.1f64, th in -PI..PI, k in -3i32..3) {
        let goal = Pose2::new(0.0, 0.0, 0.2);
        let state = Pose2::new(x, y, th);
        let turned = Pose2 { theta: th + 2.0 * PI * k as f64, ..state };
        prop_assert_eq!(check_success(&state, &goal), check_success(&turned, &goal));
        let goal_turned = Pose2 { theta: 0.2 + 2.0 * PI, ..goal };
        prop_assert_eq!(check_success(&state, &goal), check_success(&state, &goal_turned));
    }

    #[test]
    fn heuristic_never_rotates(
        x in -0.1..0.1f64, y in -0.1..0.1f64, th in -PI..PI,
        sx in -0.2..0.2f64, sy in -0.2..0.2f64, ang in 0.0..(2.0 * PI), d in 0.0..0.1f64,
    ) {
        let state = TBlockState::new(Pose2::new(x, y, th));
        let pts: Vec<Vec2> = state.shape.grid_particles(0.01).iter().map(|b| state.pose.to_world(b)).collect();
        let push = PushParams::new(Vec2::new(sx, sy), Vec2::new(ang.cos(), ang.sin()), d).unwrap();
        let out = heuristic_dynamics(&state, &pts, &push);
        let fit = fit_pose2(&pts, &out).unwrap();
        prop_assert!(fit.theta.abs() < 1e-9);
    }

    #[test]
    fn block_stays_put_without_contact(
        th in -PI..PI, ang in 0.0..(2.0 * PI), d in 0.0..0.08f64,
    ) {
        // Pushes start outside the 0.09 m bounding circle and point away.
        let state = TBlockState::new(Pose2::new(0.0, 0.0, th));
        let dir = Vec2::new(ang.cos(), ang.sin());
        let push = PushParams::new(dir * 0.1, dir, d).unwrap();
        let out = simulate_push(&state, &push, 0.005).unwrap();
        prop_assert!(!out.contact);
        prop_assert_eq!(out.state, state);
    }

    #[test]
    fn door_rewards_are_bounded(
        hinge in 0.0..1.5f64, handle in -1.5..1.5f64, ee in vec3(3.0),
    ) {
        let g = DoorGeometry::default();
        let template = g.particle_template(3, 4);
        let ctx = FlowRewardContext::new(g.hinge_flow(&template, 0.0, 0.5, 40).unwrap(), template).unwrap();
        let state = DoorState { hinge_angle: hinge, handle_angle: handle, ee_position: ee, geometry: g };
        let r = object_state_reward(&state);
        prop_assert!(r > -0.25 && r <= 1.0);
        let f = flow_reward(&state, &ctx).unwrap();
        prop_assert!(f.reward > 0.0 && f.reward <= 1.0);
    }
}
