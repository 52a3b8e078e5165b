//! Synthetic backend against renderer ground truth over random poses.

use facecodec::geometry::EulerPose;
use facecodec::image::{gaussian_blur_masked, psnr, BBox, Frame};
use facecodec::vision::{render_avatar, AvatarParams, Landmarks, SyntheticBackend};
use facecodec::vision::{FaceDetector, FaceSegmenter, LandmarkDetector, PoseEstimator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIZE: usize = 256;

fn max_error(a: &Landmarks, b: &Landmarks) -> f64 {
    a.points()
        .iter()
        .zip(b.points())
        .map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1]))
        .fold(0.0, f64::max)
}

fn random_poses(n: usize, seed: u64) -> Vec<EulerPose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            EulerPose::new(
                rng.gen_range(-45.0..=45.0),
                rng.gen_range(-45.0..=45.0),
                rng.gen_range(-15.0..=15.0),
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn pose_and_landmarks_round_trip() {
    let params = AvatarParams::for_size(SIZE);
    let backend = SyntheticBackend::new(params.clone()).unwrap();
    let (mut worst_pose, mut worst_lm, mut worst_blur) = (0f64, 0f64, 0f64);
    for pose in random_poses(100, 7) {
        let img = render_avatar(&pose, &params, SIZE, SIZE).unwrap();
        let bbox = backend.detect_face(&img.frame).unwrap();
        assert_eq!(bbox, img.bbox);
        let est = backend.estimate_pose(&img.frame, bbox).unwrap();
        for (a, b) in [(est.yaw, pose.yaw), (est.pitch, pose.pitch), (est.roll, pose.roll)] {
            worst_pose = worst_pose.max((a - b).abs());
        }
        let lm = backend.detect_landmarks(bbox, &img.frame).unwrap();
        assert!(lm.within_inflated_bbox(0.1));
        worst_lm = worst_lm.max(max_error(&lm, &img.landmarks));

        let mask = backend.segment_face(&img.frame, bbox).unwrap();
        let blurred = Frame::new(gaussian_blur_masked(&img.frame, &mask, 4.0).unwrap()).unwrap();
        let lm_b = backend.detect_landmarks(bbox, &blurred).unwrap();
        worst_blur = worst_blur.max(max_error(&lm_b, &img.landmarks));
        let est_b = backend.estimate_pose(&blurred, bbox).unwrap();
        for (a, b) in [(est.yaw, est_b.yaw), (est.pitch, est_b.pitch), (est.roll, est_b.roll)] {
            assert!((a - b).abs() <= 1.0, "{pose:?}: {est:?} vs blurred {est_b:?}");
        }
    }
    println!("worst pose error {worst_pose:.3}°, landmark {worst_lm:.3} px, blurred landmark {worst_blur:.3} px");
    assert!(worst_pose <= 0.5);
    assert!(worst_lm <= 0.5);
    assert!(worst_blur <= 1.0);
}

#[test]
fn translated_avatar_moves_the_box() {
    let mut params = AvatarParams::for_size(SIZE);
    let backend = SyntheticBackend::new(params.clone()).unwrap();
    let pose = EulerPose::new(10.0, 5.0, 0.0).unwrap();
    let a = backend
        .detect_face(&render_avatar(&pose, &params, SIZE, SIZE).unwrap().frame)
        .unwrap();
    params.offset_x = 20.0;
    let b = backend
        .detect_face(&render_avatar(&pose, &params, SIZE, SIZE).unwrap().frame)
        .unwrap();
    assert_eq!(b, BBox::new(a.x + 20, a.y, a.w, a.h));
}

#[test]
fn backend_calls_are_deterministic() {
    let params = AvatarParams::for_size(SIZE);
    let backend = SyntheticBackend::new(params.clone()).unwrap();
    let img = render_avatar(&EulerPose::new(-12.0, 8.0, 3.0).unwrap(), &params, SIZE, SIZE).unwrap();
    let m1 = backend.segment_face(&img.frame, img.bbox).unwrap();
    let m2 = backend.segment_face(&img.frame, img.bbox).unwrap();
    assert_eq!(m1, m2);
    let l1 = backend.detect_landmarks(img.bbox, &img.frame).unwrap();
    let l2 = backend.detect_landmarks(img.bbox, &img.frame).unwrap();
    assert_eq!(l1, l2);
    assert_eq!(psnr(&img.frame, &img.frame).unwrap(), 99.0);
}
