//! Face-view interpolation against a real-arithmetic oracle, and the
//! reenact-then-blend step on a rendered source pool.

use facecodec::geometry::EulerPose;
use facecodec::image::{round_to_u8, FacePatch, Mask, Raster};
use facecodec::pipeline::{face_view_interpolate, reenact_plan_to_patch, PipelineError};
use facecodec::pool::{AddOutcome, ReenactPlan, SourcePool};
use facecodec::vision::{render_avatar, AvatarParams, BackendSuite, Landmarks, SyntheticBackend};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_patch(rng: &mut ChaCha8Rng, w: usize, h: usize) -> FacePatch {
    let planes = [0, 1, 2].map(|_| (0..w * h).map(|_| rng.gen()).collect::<Vec<u8>>());
    let cov = (0..w * h).map(|_| rng.gen()).collect();
    FacePatch::new(
        Raster::from_planes(w, h, planes).unwrap(),
        Mask::from_coverage(w, h, cov).unwrap(),
    )
    .unwrap()
}

fn random_weights(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let a: f64 = rng.gen();
    let b: f64 = rng.gen_range(0.0..=1.0 - a);
    [a, b, 1.0 - a - b]
}

#[test]
fn convex_and_matches_real_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let (w, h) = (rng.gen_range(1..=24), rng.gen_range(1..=24));
        let patches: Vec<FacePatch> = (0..3).map(|_| random_patch(&mut rng, w, h)).collect();
        let wts = random_weights(&mut rng);
        let inputs: Vec<(FacePatch, f64)> = patches.iter().cloned().zip(wts).collect();
        let out = face_view_interpolate(&inputs).unwrap();
        for i in 0..w * h {
            for c in 0..3 {
                let vals = patches.iter().map(|p| p.pixels().plane(c)[i]);
                let (lo, hi) = vals.clone().fold((255, 0), |(lo, hi), v| (v.min(lo), v.max(hi)));
                let got = out.pixels().plane(c)[i];
                assert!(
                    (lo..=hi).contains(&got),
                    "pixel {i} channel {c}: {got} outside [{lo}, {hi}]"
                );
                let exact: f64 = vals.zip(wts).map(|(v, wt)| wt * v as f64).sum();
                assert_eq!(got, round_to_u8(exact));
            }
            let exact: f64 = patches
                .iter()
                .zip(wts)
                .map(|(p, wt)| wt * p.mask().coverage()[i] as f64)
                .sum();
            assert_eq!(out.mask().coverage()[i], round_to_u8(exact));
        }
    }
}

proptest! {
    #[test]
    fn identical_patches_are_a_fixed_point(seed in any::<u64>(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_patch(&mut rng, 9, 7);
        let b = b * (1.0 - a);
        let out = face_view_interpolate(&[(p.clone(), a), (p.clone(), b), (p.clone(), 1.0 - a - b)]).unwrap();
        prop_assert_eq!(out, p);
    }

    #[test]
    fn weights_off_the_simplex_are_rejected(a in 0.0f64..=1.0, excess in 1e-6f64..0.5) {
        let p = FacePatch::new(Raster::filled(3, 3, [5; 3]).unwrap(), Mask::full(3, 3)).unwrap();
        let r = face_view_interpolate(&[(p.clone(), a), (p, 1.0 - a + excess)]);
        prop_assert!(matches!(r, Err(PipelineError::InvalidWeights(_))));
    }
}

const SIZE: usize = 256;

struct Rig {
    params: AvatarParams,
    backend: BackendSuite,
}

impl Rig {
    fn new() -> Self {
        let params = AvatarParams::for_size(SIZE);
        let backend = SyntheticBackend::new(params.clone()).unwrap().suite().unwrap();
        Rig { params, backend }
    }

    fn pool(&self, poses: &[EulerPose]) -> SourcePool {
        let mut pool = SourcePool::new(10.0).unwrap();
        for pose in poses {
            let img = render_avatar(pose, &self.params, SIZE, SIZE).unwrap();
            let crop = FacePatch::from_frame(img.frame.raster(), &img.mask, img.bbox).unwrap();
            let lm = img.landmarks.relative_to_bbox();
            match pool.add_source(crop, Some(lm), *pose).unwrap() {
                AddOutcome::Added { pool: next, .. } => pool = next,
                AddOutcome::Rejected => panic!("{pose:?} rejected"),
            }
        }
        pool
    }

    fn drive(&self, pose: &EulerPose) -> Landmarks {
        render_avatar(pose, &self.params, SIZE, SIZE).unwrap().landmarks
    }
}

fn pose(yaw: f64, pitch: f64) -> EulerPose {
    EulerPose::new(yaw, pitch, 0.0).unwrap()
}

fn mean_abs_diff(a: &FacePatch, b: &FacePatch) -> f64 {
    let (w, h) = (a.width().min(b.width()), a.height().min(b.height()));
    let mut sum = 0u64;
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                sum += a.pixels().get(c, x, y).abs_diff(b.pixels().get(c, x, y)) as u64;
            }
        }
    }
    sum as f64 / (3 * w * h) as f64
}

#[test]
fn plan_to_patch_special_cases() {
    let rig = Rig::new();
    let pool = rig.pool(&[pose(0.0, 0.0), pose(20.0, 0.0), pose(0.0, 20.0)]);
    let drive = rig.drive(&pose(6.0, 5.0));
    let ids: Vec<u32> = pool.entries().map(|e| e.source_id).collect();

    let single = reenact_plan_to_patch(
        &ReenactPlan::SingleSource { source_id: ids[1] },
        &pool,
        &drive,
        &rig.backend,
    )
    .unwrap();
    let direct = rig
        .backend
        .reenactor
        .reenact(pool.entry(ids[1]).unwrap(), &drive)
        .unwrap();
    assert_eq!(single, direct);

    let vertex = ReenactPlan::Interior {
        sources: [(ids[0], 1.0), (ids[1], 0.0), (ids[2], 0.0)],
    };
    let first = rig
        .backend
        .reenactor
        .reenact(pool.entry(ids[0]).unwrap(), &drive)
        .unwrap();
    assert_eq!(
        reenact_plan_to_patch(&vertex, &pool, &drive, &rig.backend).unwrap(),
        first
    );

    assert!(matches!(
        reenact_plan_to_patch(&ReenactPlan::NeedNewSource, &pool, &drive, &rig.backend),
        Err(PipelineError::NeedNewSource)
    ));
    assert!(matches!(
        reenact_plan_to_patch(
            &ReenactPlan::SingleSource { source_id: 99 },
            &pool,
            &drive,
            &rig.backend
        ),
        Err(PipelineError::UnknownSource(99))
    ));
}

#[test]
fn identical_sources_blend_to_the_same_face() {
    let rig = Rig::new();
    let pool = rig.pool(&[pose(0.0, 0.0), pose(20.0, 0.0), pose(0.0, 20.0)]);
    // three entries carrying the same stored face
    let base = pool.entries().next().unwrap();
    let mut same = SourcePool::new(10.0).unwrap();
    for p in [pose(0.0, 0.0), pose(20.0, 0.0), pose(0.0, 20.0)] {
        let AddOutcome::Added { pool, .. } = same
            .add_source(base.face_crop.clone(), base.landmarks.clone(), p)
            .unwrap()
        else {
            panic!()
        };
        same = pool;
    }
    let drive = rig.drive(&pose(5.0, 5.0));
    let plan = same.classify(&pose(5.0, 5.0));
    assert!(matches!(plan, ReenactPlan::Interior { .. }), "{plan:?}");
    let blended = reenact_plan_to_patch(&plan, &same, &drive, &rig.backend).unwrap();
    let one = rig
        .backend
        .reenactor
        .reenact(same.entries().next().unwrap(), &drive)
        .unwrap();
    for c in 0..3 {
        for (a, b) in blended.pixels().plane(c).iter().zip(one.pixels().plane(c)) {
            assert!(a.abs_diff(*b) <= 1);
        }
    }
}

#[test]
fn output_is_continuous_across_triangle_edges() {
    let rig = Rig::new();
    // hexagon of radius 12 around a centre source; the spokes are shared edges
    let r = 12.0;
    let mut poses = vec![pose(0.0, 0.0)];
    poses.extend((0..6).map(|k| {
        let a = k as f64 * std::f64::consts::FRAC_PI_3;
        pose(r * a.cos(), r * a.sin())
    }));
    let pool = rig.pool(&poses);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0f64;
    for _ in 0..30 {
        let a = rng.gen_range(0..6) as f64 * std::f64::consts::FRAC_PI_3;
        let t: f64 = rng.gen_range(0.1..0.9);
        let (ex, ey) = (t * r * a.cos(), t * r * a.sin());
        let (nx, ny) = (-a.sin() * 0.01, a.cos() * 0.01);
        let (pa, pb) = (pose(ex + nx, ey + ny), pose(ex - nx, ey - ny));
        let (plan_a, plan_b) = (pool.classify(&pa), pool.classify(&pb));
        let (ReenactPlan::Interior { sources: sa }, ReenactPlan::Interior { sources: sb }) = (plan_a, plan_b) else {
            panic!("{plan_a:?} / {plan_b:?}");
        };
        let ids = |s: [(u32, f64); 3]| {
            let mut v = s.map(|(id, _)| id);
            v.sort();
            v
        };
        assert_ne!(ids(sa), ids(sb), "both sides fell in one triangle");
        let fa = reenact_plan_to_patch(&plan_a, &pool, &rig.drive(&pa), &rig.backend).unwrap();
        let fb = reenact_plan_to_patch(&plan_b, &pool, &rig.drive(&pb), &rig.backend).unwrap();
        worst = worst.max(mean_abs_diff(&fa, &fb));
    }
    println!("worst mean abs diff across an edge {worst:.3}");
    assert!(worst <= 2.0, "{worst}");
}
