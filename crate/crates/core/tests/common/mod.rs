//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::sync::OnceLock;

use facecodec::codec::{encode_base, Quality};
use facecodec::geometry::EulerPose;
use facecodec::image::{gaussian_blur_masked, Frame};
use facecodec::vision::{render_avatar, AvatarParams, FaceSegmenter, SyntheticBackend};

pub const CORPUS_SIZE: usize = 800;
pub const CORPUS_FRAMES: usize = 20;
pub const CORPUS_SIGMA: f64 = 4.0;

/// Twenty 800² frames along a yaw/pitch loop, as (pristine, σ=4 face-blurred).
/// Built once per test binary.
pub fn corpus() -> &'static [(Frame, Frame)] {
    static CORPUS: OnceLock<Vec<(Frame, Frame)>> = OnceLock::new();
    CORPUS.get_or_init(build_corpus)
}

fn build_corpus() -> Vec<(Frame, Frame)> {
    let params = AvatarParams::for_size(CORPUS_SIZE);
    let backend = SyntheticBackend::new(params.clone()).unwrap();
    (0..CORPUS_FRAMES)
        .map(|i| {
            let t = i as f64 / CORPUS_FRAMES as f64 * std::f64::consts::TAU;
            let pose = EulerPose::new(30.0 * t.sin(), 15.0 * t.cos(), 5.0 * (2.0 * t).sin()).unwrap();
            let img = render_avatar(&pose, &params, CORPUS_SIZE, CORPUS_SIZE).unwrap();
            let mask = backend.segment_face(&img.frame, img.bbox).unwrap();
            let blurred = Frame::new(gaussian_blur_masked(&img.frame, &mask, CORPUS_SIGMA).unwrap()).unwrap();
            (img.frame, blurred)
        })
        .collect()
}

/// Per tier: frames where the blurred copy is not strictly smaller, and the
/// mean blurred/sharp size ratio.
pub struct BlurGain {
    pub quality: Quality,
    pub not_smaller: Vec<usize>,
    pub mean_ratio: f64,
}

pub fn blur_gains(corpus: &[(Frame, Frame)], tiers: impl IntoIterator<Item = u8>) -> Vec<BlurGain> {
    tiers
        .into_iter()
        .map(|q| {
            let quality = Quality::new(q).unwrap();
            let mut not_smaller = Vec::new();
            let mut sum = 0.0;
            for (i, (sharp, soft)) in corpus.iter().enumerate() {
                let a = encode_base(sharp, quality).unwrap().len();
                let b = encode_base(soft, quality).unwrap().len();
                if b >= a {
                    not_smaller.push(i);
                }
                sum += b as f64 / a as f64;
            }
            BlurGain {
                quality,
                not_smaller,
                mean_ratio: sum / corpus.len() as f64,
            }
        })
        .collect()
}

/// Tiers at which the blur-compression property holds on every frame. The
/// two lowest tiers downsample by 8 and keep little beyond DC terms, so a σ=4
/// blur leaves most frames the same size to the byte.
pub const BLUR_TIERS: std::ops::RangeInclusive<u8> = 3..=10;

pub const STREAMS: u64 = 1000;
pub const STREAM_LEN: usize = 200;
pub const MAX_STEP: f64 = 15.0;

/// Drives an encoder-side shadow pool and a decoder pool through one random
/// pose stream, exchanging only (kind, quantized pose), and checks the pool
/// invariants after every step. Returns the final pool size.
pub fn check_pool_stream(seed: u64) -> Result<usize, String> {
    use facecodec::geometry::{angular_distance, AngularPoint};
    use facecodec::image::{FacePatch, Mask, Raster};
    use facecodec::pool::{AddOutcome, ReenactPlan, SourcePool, DEFAULT_THRESHOLD};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let l = DEFAULT_THRESHOLD;
    let crop = FacePatch::new(Raster::filled(2, 2, [1, 2, 3]).unwrap(), Mask::full(2, 2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut enc = SourcePool::new(l).unwrap();
    let mut dec = SourcePool::new(l).unwrap();
    let (mut yaw, mut pitch): (f64, f64) = (rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0));
    let mut last_id = None;
    for step in 0..STREAM_LEN {
        if step > 0 {
            let (dir, len): (f64, f64) = (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..=MAX_STEP));
            yaw = (yaw + len * dir.cos()).clamp(-60.0, 60.0);
            pitch = (pitch + len * dir.sin()).clamp(-60.0, 60.0);
        }
        let sent = EulerPose::new(yaw, pitch, rng.gen_range(-10.0..10.0))
            .unwrap()
            .quantize();
        let pose = sent.dequantize();
        let p = AngularPoint::new(pose.yaw, pose.pitch);

        let plan = enc.classify(&pose);
        let nearest = enc
            .entries()
            .map(|e| angular_distance(p, e.point))
            .fold(f64::INFINITY, f64::min);
        if nearest <= l && plan == ReenactPlan::NeedNewSource {
            return Err(format!(
                "step {step}: NeedNewSource at distance {nearest} from an entry"
            ));
        }
        let is_source = plan == ReenactPlan::NeedNewSource;
        if is_source {
            match enc.add_source(crop.clone(), None, pose).map_err(|e| e.to_string())? {
                AddOutcome::Added { pool, source_id } => {
                    if last_id.is_some_and(|prev| source_id <= prev) {
                        return Err(format!("step {step}: id {source_id} after {last_id:?}"));
                    }
                    last_id = Some(source_id);
                    enc = pool;
                }
                AddOutcome::Rejected => return Err(format!("step {step}: add after NeedNewSource was rejected")),
            }
            let entries: Vec<_> = enc.entries().collect();
            for (i, a) in entries.iter().enumerate() {
                for b in &entries[i + 1..] {
                    let d = angular_distance(a.point, b.point);
                    if d < l {
                        return Err(format!(
                            "step {step}: entries {} and {} are {d} apart",
                            a.source_id, b.source_id
                        ));
                    }
                }
            }
        }

        // decoder side sees only the transmitted message
        let received = sent.dequantize();
        if is_source {
            match dec
                .add_source(crop.clone(), None, received)
                .map_err(|e| e.to_string())?
            {
                AddOutcome::Added { pool, .. } => dec = pool,
                AddOutcome::Rejected => return Err(format!("step {step}: decoder rejected a source")),
            }
        } else if dec.classify(&received) == ReenactPlan::NeedNewSource {
            return Err(format!("step {step}: decoder has no source for a driving pose"));
        }
        if enc.digest() != dec.digest() {
            return Err(format!("step {step}: digests differ"));
        }
    }
    Ok(enc.len())
}
