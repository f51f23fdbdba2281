use geocache_core::align::{fit, Alignment};
use geocache_core::fusion::{downsample_mask, fuse_max, LatentVideo};
use geocache_core::geometry::{
    axis_angle, check_rotation, interpolate_trajectory, offset_trajectory, project, unproject, Camera, Intrinsics,
    Pose, Trajectory, Vec2, Vec3,
};
use geocache_core::grid::{Grid, Mask};
use geocache_core::pipeline::plan_chunks;
use geocache_core::sum::{exact_sum, ExactSum};
use proptest::prelude::*;

fn intrinsics() -> impl Strategy<Value = Intrinsics> {
    (20.0f64..800.0, 0.5f64..2.0, 8usize..640, 8usize..480, -0.2f64..0.2, -0.2f64..0.2).prop_map(
        |(f, aspect, w, h, ox, oy)| {
            let cx = (w as f64 - 1.0) * (0.5 + ox);
            let cy = (h as f64 - 1.0) * (0.5 + oy);
            Intrinsics::new(f, f * aspect, cx, cy, w, h).unwrap()
        },
    )
}

fn pose() -> impl Strategy<Value = Pose> {
    (
        prop::array::uniform3(-1.0f64..1.0),
        0.0f64..std::f64::consts::PI,
        prop::array::uniform3(-5.0f64..5.0),
    )
        .prop_filter("axis must be non-zero", |(a, _, _)| a.iter().any(|v| v.abs() > 1e-3))
        .prop_map(|(a, angle, t)| {
            Pose::new(axis_angle(Vec3::from(a), angle), Vec3::from(t)).unwrap()
        })
}

fn camera() -> impl Strategy<Value = Camera> {
    (intrinsics(), pose()).prop_map(|(k, p)| Camera::new(k, p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn unproject_then_project_round_trips(cam in camera(), u in 0.0f64..1.0, v in 0.0f64..1.0, depth in 0.05f64..100.0) {
        let px = Vec2::new(u * (cam.width() - 1) as f64, v * (cam.height() - 1) as f64);
        let world = unproject(&px, depth, &cam).unwrap();
        let (back, z) = project(&world, &cam);
        prop_assert!((back - px).norm() <= 1e-6 * (1.0 + px.norm()));
        prop_assert!((z - depth).abs() <= 1e-9 * depth.max(1.0));
    }
}

proptest! {
    #[test]
    fn interpolated_rotations_are_orthonormal(keys in prop::collection::vec(pose(), 2..6), n in 2usize..80) {
        let k = Intrinsics::centered(100.0, 64, 48).unwrap();
        let keyframes: Vec<Camera> = keys.into_iter().map(|p| Camera::new(k, p)).collect();
        prop_assume!(n >= keyframes.len());
        let traj = interpolate_trajectory(&keyframes, n).unwrap();
        prop_assert_eq!(traj.len(), n);
        for cam in traj.frames() {
            prop_assert!(check_rotation(cam.pose.rotation()).is_ok());
        }
        let last = keyframes.len() - 1;
        for (i, key) in keyframes.iter().enumerate() {
            let at = ((i * (n - 1)) as f64 / last as f64).round() as usize;
            prop_assert_eq!(&traj[at], key);
        }
    }

    #[test]
    fn lateral_offset_inverts(poses in prop::collection::vec(pose(), 1..10), lateral in -3.0f64..3.0) {
        let k = Intrinsics::centered(100.0, 64, 48).unwrap();
        let traj = Trajectory::new(poses.into_iter().map(|p| Camera::new(k, p)).collect()).unwrap();
        let moved = offset_trajectory(&traj, lateral);
        let back = offset_trajectory(&moved, -lateral);
        for (a, b) in traj.frames().iter().zip(back.frames()) {
            prop_assert_eq!(a.pose.rotation(), b.pose.rotation());
            prop_assert!((a.center() - b.center()).norm() < 1e-12);
        }
        for (a, b) in traj.frames().iter().zip(moved.frames()) {
            prop_assert!(((b.center() - a.center()).norm() - lateral.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn chunks_tile_long_videos(total in 1usize..5000, len in 2usize..200) {
        let plan = plan_chunks(total, len).unwrap();
        let mut next = 0;
        for k in 0..plan.len() {
            let emitted = plan.emitted(k);
            prop_assert_eq!(emitted.start, next);
            next = emitted.end;
            prop_assert!(plan.chunks[k].len() <= len);
        }
        prop_assert_eq!(next, total);
        let expected = if total <= len { 1 } else { 1 + (total - len).div_ceil(len - 1) };
        prop_assert_eq!(plan.len(), expected);
    }

    #[test]
    fn max_pool_ignores_view_order(
        bits in prop::collection::vec(prop::collection::vec(any::<u32>(), 2 * 3 * 2 * 2), 1..5),
        seed in any::<u64>(),
    ) {
        // Arbitrary bit patterns, including NaNs, infinities and both zeros.
        let views: Vec<LatentVideo> = bits
            .iter()
            .map(|b| LatentVideo::new([2, 3, 2, 2], 1, b.iter().map(|&x| f32::from_bits(x)).collect()).unwrap())
            .collect();
        let mut shuffled = views.clone();
        let mut rng = geocache_core::rng::SplitMix64::new(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.below(i as u64 + 1) as usize);
        }
        let a: Vec<u32> = fuse_max(&views).unwrap().values().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = fuse_max(&shuffled).unwrap().values().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn min_pool_matches_brute_force(lw in 1usize..6, lh in 1usize..6, patch in 1usize..5, density in 0.5f64..1.0, seed in any::<u64>()) {
        let mut rng = geocache_core::rng::SplitMix64::new(seed);
        let mask: Mask = Grid::from_fn(lw * patch, lh * patch, |_, _| rng.next_f64() < density);
        let down = downsample_mask(&mask, patch).unwrap();
        for by in 0..lh {
            for bx in 0..lw {
                let mut all = true;
                for y in 0..patch {
                    for x in 0..patch {
                        all &= *mask.get(bx * patch + x, by * patch + y);
                    }
                }
                prop_assert_eq!(*down.get(bx, by), all);
            }
        }
    }

    #[test]
    fn least_squares_is_a_minimum(
        pairs in prop::collection::vec((0.1f64..10.0, -5.0f64..20.0), 3..200),
        ds in -1e-3f64..1e-3,
        dt in -1e-3f64..1e-3,
    ) {
        let a = match fit(&pairs) {
            Ok(a) => a,
            Err(_) => return Ok(()),
        };
        let sse = |al: &Alignment| exact_sum(pairs.iter().map(|&(d, y)| (al.apply(d) - y).powi(2)));
        let moved = Alignment { scale: a.scale + ds, shift: a.shift + dt, ..a };
        let tol = 1e-9 * (1.0 + sse(&a));
        prop_assert!(sse(&moved) >= sse(&a) - tol);
    }

    #[test]
    fn exact_sum_is_order_free(values in prop::collection::vec(-1e12f64..1e12, 0..300), seed in any::<u64>()) {
        let mut shuffled = values.clone();
        let mut rng = geocache_core::rng::SplitMix64::new(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.below(i as u64 + 1) as usize);
        }
        let a = exact_sum(values.iter().copied());
        let b: ExactSum = shuffled.iter().copied().collect();
        prop_assert_eq!(a.to_bits(), b.value().to_bits());
    }
}
