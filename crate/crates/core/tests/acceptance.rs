//! One PASS/FAIL line per acceptance criterion. Runs as a single test so the
//! timed criteria are not sharing the machine with other tests.

mod common;

use std::time::{Duration, Instant};

use facecodec::geometry::*;
use facecodec::image::{gaussian_blur_masked, round_to_u8, BBox, FacePatch, Frame, Mask, Raster};
use facecodec::pipeline::face_view_interpolate;
use facecodec::session::{DecoderSession, EncoderSession, LandmarkMode, SessionConfig};
use facecodec::sim::{self, Report, SimConfig, Trajectory};
use facecodec::vision::{render_avatar, AvatarParams, FaceSegmenter, LandmarkDetector, SyntheticBackend, FEATHER_PX};
use facecodec::wire::{self, MessageKind, Packet, WireMessage, HEADER_LEN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TARGET_BPP: f64 = 0.001875;
const FRAME_BUDGET: usize = 150;
const PAYLOAD_CAP: usize = 126;
const SESSION_SIZE: usize = 800;

struct Line {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn line(id: &'static str, pass: bool, detail: String) -> Line {
    println!("{} {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    Line { id, pass, detail }
}

fn budget_session(trajectory: Trajectory) -> (Report, Duration) {
    let mut cfg = SimConfig::new(SESSION_SIZE, SESSION_SIZE);
    cfg.trajectory = trajectory;
    cfg.frames = 100;
    cfg.seed = Some(42);
    cfg.save_frames = false;
    cfg.session.payload_cap = Some(PAYLOAD_CAP);
    let start = Instant::now();
    let out = sim::simulate(&cfg, None).unwrap();
    (out.report, start.elapsed())
}

fn wins(report: &Report) -> (usize, usize) {
    let driving: Vec<_> = report.driving_rows().collect();
    (
        driving.iter().filter(|r| r.face_psnr > r.base_face_psnr).count(),
        driving.len(),
    )
}

fn rate_and_quality(out: &mut Vec<Line>) {
    let (hold, elapsed) = budget_session(Trajectory::Hold);
    let bpp = hold.bpp();
    out.push(line(
        "1a rate",
        bpp <= TARGET_BPP && elapsed < Duration::from_secs(10),
        format!(
            "hold 800x800, cap {PAYLOAD_CAP} B: bpp {bpp} (target <= {TARGET_BPP}), driving-only bpp {:.7}, {} source(s), {:.2} s for 100 frames",
            hold.stats.driving_bits_per_pixel(),
            hold.source_count(),
            elapsed.as_secs_f64()
        ),
    ));
    let share = HEADER_LEN as f64 / FRAME_BUDGET as f64;
    out.push(line(
        "1b header",
        HEADER_LEN == 24 && share <= 0.16,
        format!(
            "header {HEADER_LEN} B/frame (required 24), {:.1}% of {FRAME_BUDGET} B (required <= 16%)",
            share * 100.0
        ),
    ));

    let (sweep, _) = budget_session(Trajectory::Sweep(0.0, 30.0));
    let mut details = Vec::new();
    let mut pass = true;
    for (name, r) in [("hold", &hold), ("sweep(0,30)", &sweep)] {
        let (w, n) = wins(r);
        pass &= w * 10 >= n * 9;
        details.push(format!(
            "{name} {w}/{n} ({:.1}%, mean face psnr {:.2} dB, bpp {})",
            100.0 * w as f64 / n as f64,
            r.mean_face_psnr(),
            r.bpp()
        ));
    }
    out.push(line(
        "2 face quality",
        pass,
        format!("reenacted face beats base codec on {}", details.join("; ")),
    ));
}

fn geometry(out: &mut Vec<Line>) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let random_points = |rng: &mut ChaCha8Rng, n: usize| {
        let mut pts: Vec<(VertexId, AngularPoint)> = Vec::new();
        while pts.len() < n {
            let p = AngularPoint::new(rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0));
            if pts.iter().all(|(_, q)| angular_distance(*q, p) > 1e-3) {
                pts.push((pts.len() as VertexId, p));
            }
        }
        pts
    };

    let mut circle_violations = 0;
    for _ in 0..100 {
        let n = rng.gen_range(3..=12);
        let pts = random_points(&mut rng, n);
        let mesh = delaunay(&pts).unwrap();
        for t in 0..mesh.triangle_count() {
            let [a, b, c] = mesh.triangle_points(t);
            let (center, r) = circumcircle(a, b, c).unwrap();
            circle_violations += pts
                .iter()
                .filter(|(_, q)| angular_distance(center, *q) < r - 1e-9)
                .count();
        }
    }

    let mut worst_reconstruction = 0f64;
    for _ in 0..1000 {
        let tri = loop {
            let t = [0, 1, 2].map(|_| AngularPoint::new(rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0)));
            if signed_area(t[0], t[1], t[2]).abs() > 1.0 {
                break t;
            }
        };
        let (mut a, mut b): (f64, f64) = (rng.gen(), rng.gen());
        if a + b > 1.0 {
            (a, b) = (1.0 - a, 1.0 - b);
        }
        let p = AngularPoint::new(
            tri[0].yaw + a * (tri[1].yaw - tri[0].yaw) + b * (tri[2].yaw - tri[0].yaw),
            tri[0].pitch + a * (tri[1].pitch - tri[0].pitch) + b * (tri[2].pitch - tri[0].pitch),
        );
        let r = barycentric(tri, p).unwrap().reconstruct(tri);
        worst_reconstruction = worst_reconstruction.max(angular_distance(r, p));
    }

    let mut worst_edge = 0f64;
    let mut edges = 0;
    for _ in 0..50 {
        let pts = random_points(&mut rng, 8);
        let mesh = delaunay(&pts).unwrap();
        for t1 in 0..mesh.triangle_count() {
            for t2 in t1 + 1..mesh.triangle_count() {
                let (a, b) = (mesh.triangle_ids(t1), mesh.triangle_ids(t2));
                let shared: Vec<VertexId> = a.iter().copied().filter(|v| b.contains(v)).collect();
                if shared.len() != 2 {
                    continue;
                }
                let (u, v) = (mesh.point_of(shared[0]).unwrap(), mesh.point_of(shared[1]).unwrap());
                let s: f64 = rng.gen();
                let p = AngularPoint::new(u.yaw + s * (v.yaw - u.yaw), u.pitch + s * (v.pitch - u.pitch));
                let weight_of = |t: usize, ids: [VertexId; 3], id: VertexId| {
                    let w = barycentric(mesh.triangle_points(t), p).unwrap();
                    ids.iter().position(|&x| x == id).map_or(0.0, |k| w.weights[k])
                };
                for id in a.iter().chain(&b) {
                    worst_edge = worst_edge.max((weight_of(t1, a, *id) - weight_of(t2, b, *id)).abs());
                }
                edges += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    out.push(line(
        "3 geometry",
        circle_violations == 0 && worst_reconstruction <= 1e-9 && worst_edge <= 1e-9 && elapsed < Duration::from_secs(5),
        format!(
            "100 meshes, {circle_violations} circumcircle violations; worst reconstruction {worst_reconstruction:.2e} over 1000 points; worst weight gap {worst_edge:.2e} over {edges} shared edges; {:.2} s",
            elapsed.as_secs_f64()
        ),
    ));
}

fn pool(out: &mut Vec<Line>) {
    let start = Instant::now();
    let failures: Vec<String> = (0..common::STREAMS)
        .filter_map(|seed| {
            common::check_pool_stream(seed)
                .err()
                .map(|e| format!("stream {seed}: {e}"))
        })
        .collect();
    let elapsed = start.elapsed();
    out.push(line(
        "4 pool invariants",
        failures.is_empty() && elapsed < Duration::from_secs(30),
        format!(
            "{} streams x {} steps of <= {}°, {} failing{}; {:.2} s",
            common::STREAMS,
            common::STREAM_LEN,
            common::MAX_STEP,
            failures.len(),
            failures.first().map_or(String::new(), |f| format!(" (first: {f})")),
            elapsed.as_secs_f64()
        ),
    ));
}

fn interpolation(out: &mut Vec<Line>) {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let constant = |v: u8, cov: u8| {
        FacePatch::new(
            Raster::filled(7, 5, [v; 3]).unwrap(),
            Mask::from_coverage(7, 5, vec![cov; 35]).unwrap(),
        )
        .unwrap()
    };
    let mut constant_mismatch = 0;
    for _ in 0..1000 {
        let vals: [u8; 3] = rng.gen();
        let covs: [u8; 3] = rng.gen();
        let a: f64 = rng.gen();
        let b: f64 = rng.gen_range(0.0..=1.0 - a);
        let w = [a, b, 1.0 - a - b];
        let inputs: Vec<(FacePatch, f64)> = (0..3).map(|i| (constant(vals[i], covs[i]), w[i])).collect();
        let got = face_view_interpolate(&inputs).unwrap();
        let want_v = round_to_u8((0..3).map(|i| w[i] * vals[i] as f64).sum());
        let want_c = round_to_u8((0..3).map(|i| w[i] * covs[i] as f64).sum());
        if got.pixels().planes().iter().any(|p| p.iter().any(|&x| x != want_v))
            || got.mask().coverage().iter().any(|&x| x != want_c)
        {
            constant_mismatch += 1;
        }
    }

    let mut convex_violations = 0;
    for _ in 0..1000 {
        let (w, h) = (rng.gen_range(1..=16), rng.gen_range(1..=16));
        let patches: Vec<FacePatch> = (0..3)
            .map(|_| {
                let planes = [0, 1, 2].map(|_| (0..w * h).map(|_| rng.gen()).collect::<Vec<u8>>());
                let cov = (0..w * h).map(|_| rng.gen()).collect();
                FacePatch::new(
                    Raster::from_planes(w, h, planes).unwrap(),
                    Mask::from_coverage(w, h, cov).unwrap(),
                )
                .unwrap()
            })
            .collect();
        let a: f64 = rng.gen();
        let b: f64 = rng.gen_range(0.0..=1.0 - a);
        let inputs: Vec<(FacePatch, f64)> = patches.iter().cloned().zip([a, b, 1.0 - a - b]).collect();
        let got = face_view_interpolate(&inputs).unwrap();
        for c in 0..3 {
            for i in 0..w * h {
                let vals = patches.iter().map(|p| p.pixels().plane(c)[i]);
                let (lo, hi) = (vals.clone().min().unwrap(), vals.max().unwrap());
                if !(lo..=hi).contains(&got.pixels().plane(c)[i]) {
                    convex_violations += 1;
                }
            }
        }
    }
    out.push(line(
        "5 interpolation",
        constant_mismatch == 0 && convex_violations == 0,
        format!("{constant_mismatch}/1000 constant triples off the rounded mean; {convex_violations} out-of-range pixels over 1000 random triples"),
    ));
}

fn identity(out: &mut Vec<Line>) {
    let size = SESSION_SIZE;
    let params = AvatarParams::for_size(size);
    let mut cfg = SessionConfig::new(size, size);
    cfg.landmarks = LandmarkMode::PosePrior;
    let mut worst = f64::INFINITY;
    let poses = [
        EulerPose::default(),
        EulerPose::new(25.0, -10.0, 5.0).unwrap(),
        EulerPose::new(-35.0, 20.0, -8.0).unwrap(),
    ];
    for pose in poses {
        let backend = SyntheticBackend::new(params.clone()).unwrap().suite().unwrap();
        let codec = std::sync::Arc::new(facecodec::codec::ReferenceCodec);
        let mut enc = EncoderSession::new(cfg.clone(), backend.clone(), codec.clone()).unwrap();
        let mut dec = DecoderSession::new(cfg.clone(), backend, codec).unwrap();
        let frame = render_avatar(&pose, &params, size, size).unwrap().frame;
        dec.decode(&enc.encode(&frame).unwrap().bytes).unwrap();
        let e = enc.encode(&frame).unwrap();
        assert_eq!(e.message.kind(), MessageKind::Driving);
        let d = dec.decode(&e.bytes).unwrap();
        let crop = &dec.pool().entries().next().unwrap().face_crop;
        worst = worst.min(stored_face_psnr(&d.frame, crop, d.bbox));
    }
    out.push(line(
        "6 identity",
        worst >= 50.0,
        format!("driving at {} stored poses, pose-prior landmarks: worst psnr vs stored crop inside the {FEATHER_PX}-px feather band {worst:.2} dB", poses.len()),
    ));
}

/// PSNR against the stored crop over fully covered pixels at least the
/// feather width inside the box.
fn stored_face_psnr(out: &Frame, crop: &FacePatch, bbox: BBox) -> f64 {
    let f = FEATHER_PX;
    let (mut se, mut n) = (0f64, 0usize);
    for y in f..crop.height() - f {
        for x in f..crop.width() - f {
            if crop.mask().get(x, y) == 255 {
                for c in 0..3 {
                    let d = crop.pixels().get(c, x, y) as f64 - out.raster().get(c, bbox.x + x, bbox.y + y) as f64;
                    se += d * d;
                }
                n += 3;
            }
        }
    }
    if se == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255f64.powi(2) * n as f64 / se).log10()
    }
}

fn blur_compression(out: &mut Vec<Line>) {
    let gains = common::blur_gains(common::corpus(), 1..=10);
    let failing: Vec<String> = gains
        .iter()
        .filter(|g| !g.not_smaller.is_empty())
        .map(|g| format!("{} frames not smaller at {}", g.not_smaller.len(), g.quality))
        .collect();
    let ratios: Vec<String> = gains
        .iter()
        .map(|g| format!("{}:{:.3}", g.quality, g.mean_ratio))
        .collect();
    out.push(line(
        "7 blur compression",
        failing.is_empty(),
        format!(
            "{} frames at {}x{}, sigma {}; mean blurred/sharp size ratio {}{}",
            common::CORPUS_FRAMES,
            common::CORPUS_SIZE,
            common::CORPUS_SIZE,
            common::CORPUS_SIGMA,
            ratios.join(" "),
            if failing.is_empty() {
                String::new()
            } else {
                format!("; {}", failing.join(", "))
            }
        ),
    ));
}

fn wire_format(out: &mut Vec<Line>) {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let len = rng.gen_range(0..300);
        let p = Packet {
            frame_index: rng.gen(),
            pose: QuantizedPose {
                yaw: rng.gen_range(-9000..=9000),
                pitch: rng.gen_range(-9000..=9000),
                roll: rng.gen_range(-9000..=9000),
            },
            bbox: BBox::new(
                rng.gen_range(0..4096),
                rng.gen_range(0..4096),
                rng.gen_range(0..4096),
                rng.gen_range(0..4096),
            ),
            payload: (0..len).map(|_| rng.gen()).collect(),
        };
        let msg = if rng.gen() {
            WireMessage::Source(p)
        } else {
            WireMessage::Driving(p)
        };
        let bytes = wire::serialize(&msg).unwrap();
        if bytes.len() != msg.serialized_len() || wire::deserialize(&bytes).ok().as_ref() != Some(&msg) {
            mismatches += 1;
        }
    }

    let hex = "4656 01 01 00000007 03E8 FDF3 0000 0064 0078 0100 0100 00000000".replace(' ', "");
    let bytes: Vec<u8> = (0..hex.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).unwrap())
        .collect();
    let example = wire::deserialize(&bytes).map(|m| {
        let p = m.packet().clone();
        let pose = p.pose.dequantize();
        m.kind() == MessageKind::Driving
            && p.frame_index == 7
            && (pose.yaw, pose.pitch, pose.roll) == (10.0, -5.25, 0.0)
            && p.bbox == BBox::new(100, 120, 256, 256)
            && p.payload.is_empty()
    });

    let mut cfg = SimConfig::new(256, 256);
    cfg.trajectory = Trajectory::RandomWalk(6.0);
    cfg.frames = 30;
    cfg.seed = Some(42);
    cfg.save_frames = false;
    let dir = tempfile::tempdir().unwrap();
    let files: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let d = dir.path().join(name);
            sim::simulate(&cfg, Some(&d)).unwrap();
            std::fs::read(d.join("session.fvc")).unwrap()
        })
        .collect();
    let identical = files[0] == files[1];

    out.push(line(
        "8 wire format",
        mismatches == 0 && example == Ok(true) && identical,
        format!(
            "{mismatches}/10000 round-trip mismatches; hex example {}; two .fvc runs {} ({} B)",
            if example == Ok(true) {
                "matches"
            } else {
                "does not match"
            },
            if identical { "byte-identical" } else { "differ" },
            files[0].len()
        ),
    ));
}

fn landmarks_under_blur(out: &mut Vec<Line>) {
    let mut details = Vec::new();
    let mut pass = true;
    for size in [256, SESSION_SIZE] {
        let params = AvatarParams::for_size(size);
        let backend = SyntheticBackend::new(params.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (mut worst, mut sum, mut n) = (0f64, 0f64, 0usize);
        for _ in 0..100 {
            let pose = EulerPose::new(
                rng.gen_range(-45.0..=45.0),
                rng.gen_range(-45.0..=45.0),
                rng.gen_range(-15.0..=15.0),
            )
            .unwrap();
            let img = render_avatar(&pose, &params, size, size).unwrap();
            let mask = backend.segment_face(&img.frame, img.bbox).unwrap();
            let blurred = Frame::new(gaussian_blur_masked(&img.frame, &mask, 4.0).unwrap()).unwrap();
            let lm = backend.detect_landmarks(img.bbox, &blurred).unwrap();
            for (p, q) in lm.points().iter().zip(img.landmarks.points()) {
                let e = (p[0] - q[0]).hypot(p[1] - q[1]);
                worst = worst.max(e);
                sum += e;
                n += 1;
            }
        }
        pass &= worst <= 1.0;
        details.push(format!(
            "{size}x{size}: worst {worst:.3} px, mean {:.3} px",
            sum / n as f64
        ));
    }
    out.push(line(
        "9 landmarks under blur",
        pass,
        format!("sigma 4, 100 poses; {}", details.join("; ")),
    ));
}

#[test]
fn acceptance() {
    let mut lines = Vec::new();
    rate_and_quality(&mut lines);
    geometry(&mut lines);
    pool(&mut lines);
    interpolation(&mut lines);
    identity(&mut lines);
    blur_compression(&mut lines);
    wire_format(&mut lines);
    landmarks_under_blur(&mut lines);
    let failed: Vec<&str> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    let passed = lines.len() - failed.len();
    println!("{passed}/{} criteria pass", lines.len());
    for l in lines.iter().filter(|l| !l.pass) {
        eprintln!("FAIL {}: {}", l.id, l.detail);
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
