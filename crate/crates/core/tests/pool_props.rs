//! Source-pool invariants over random pose streams and digest behaviour.

mod common;

use facecodec::geometry::{orient, AngularPoint, EulerPose};
use facecodec::image::{FacePatch, Mask, Raster};
use facecodec::pool::{AddOutcome, SourcePool, EMPTY_DIGEST};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn crop() -> FacePatch {
    FacePatch::new(Raster::filled(2, 2, [9; 3]).unwrap(), Mask::full(2, 2)).unwrap()
}

fn build(poses: &[(f64, f64)]) -> SourcePool {
    let mut pool = SourcePool::new(10.0).unwrap();
    for &(y, p) in poses {
        match pool
            .add_source(crop(), None, EulerPose::new(y, p, 0.0).unwrap())
            .unwrap()
        {
            AddOutcome::Added { pool: next, .. } => pool = next,
            AddOutcome::Rejected => panic!("pose ({y}, {p}) rejected"),
        }
    }
    pool
}

/// Well-separated random poses on a 12° grid with jitter.
fn separated_poses(rng: &mut ChaCha8Rng, n: usize) -> Vec<(f64, f64)> {
    let mut cells: Vec<(i32, i32)> = (-4..=4).flat_map(|i| (-4..=4).map(move |j| (i, j))).collect();
    for i in (1..cells.len()).rev() {
        cells.swap(i, rng.gen_range(0..=i));
    }
    cells[..n]
        .iter()
        .map(|&(i, j)| {
            (
                i as f64 * 12.0 + rng.gen_range(-0.9..0.9),
                j as f64 * 12.0 + rng.gen_range(-0.9..0.9),
            )
        })
        .collect()
}

#[test]
fn random_streams_keep_pool_invariants() {
    let mut sizes = Vec::new();
    for seed in 0..common::STREAMS {
        match common::check_pool_stream(seed) {
            Ok(n) => sizes.push(n),
            Err(e) => panic!("stream {seed}: {e}"),
        }
    }
    let max = sizes.iter().max().unwrap();
    println!("{} streams, largest pool {max}", sizes.len());
}

#[test]
fn empty_digest_is_fixed() {
    assert_eq!(SourcePool::new(10.0).unwrap().digest(), EMPTY_DIGEST);
    assert_eq!(SourcePool::new(3.0).unwrap().digest(), EMPTY_DIGEST);
}

#[test]
fn replayed_sequences_agree_and_single_changes_are_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=6);
        let poses = separated_poses(&mut rng, n);
        let a = build(&poses);
        assert_eq!(a.digest(), build(&poses).digest());
        let mut changed = poses.clone();
        let k = rng.gen_range(0..n);
        changed[k].0 += if rng.gen() { 0.01 } else { -0.01 } * rng.gen_range(1..=50) as f64;
        assert_ne!(a.digest(), build(&changed).digest(), "{poses:?}");
    }
}

fn hull_size(points: &[AngularPoint]) -> usize {
    // a point is on the hull if some line through it has every other point on one side
    let mut on_hull = 0;
    for (i, &p) in points.iter().enumerate() {
        let others: Vec<AngularPoint> = points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &q)| q)
            .collect();
        let extreme = others.iter().any(|&q| {
            let side: Vec<f64> = others.iter().filter(|&&r| r != q).map(|&r| orient(p, q, r)).collect();
            side.iter().all(|&s| s > 0.0) || side.iter().all(|&s| s < 0.0)
        });
        if extreme {
            on_hull += 1;
        }
    }
    on_hull
}

#[test]
fn mesh_size_matches_euler_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let n = rng.gen_range(3..=12);
        let poses = separated_poses(&mut rng, n);
        let pool = build(&poses);
        let points: Vec<AngularPoint> = pool.entries().map(|e| e.point).collect();
        let h = hull_size(&points);
        assert_eq!(pool.mesh().triangle_count(), 2 * n - h - 2, "{poses:?}");
    }
}

#[test]
fn rejected_add_leaves_pool_unchanged() {
    let pool = build(&[(0.0, 0.0), (20.0, 0.0)]);
    let before = pool.clone();
    assert!(matches!(
        pool.add_source(crop(), None, EulerPose::new(5.0, 5.0, 0.0).unwrap())
            .unwrap(),
        AddOutcome::Rejected
    ));
    assert_eq!(pool, before);
}
