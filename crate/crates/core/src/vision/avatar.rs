//! Procedural test avatar with exact ground truth.
//!
//! The head is a flat elliptical disk with semi-axes `axis_x`, `axis_y`
//! carrying a 4×4 grid of dark circular fiducials that sit slightly in front
//! of the disk. A pose rotates the model by `Rz(roll)·Rx(pitch)·Ry(yaw)` and
//! projects it orthographically (image y points down).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Landmarks, VisionError, LANDMARK_COUNT};
use crate::geometry::EulerPose;
use crate::image::{round_to_u8, BBox, Frame, Mask, Raster};
use crate::kv::{self, KvError, KvMap};

/// Largest |yaw| or |pitch| the renderer accepts.
pub const MAX_RENDER_ANGLE: f64 = 75.0;

const GRID_X: [f64; 4] = [-0.66, -0.22, 0.22, 0.66];
const GRID_Y: [f64; 4] = [-0.55, -0.187, 0.187, 0.55];
// depth in units of axis_x: the inner columns and rows bulge forward
const DEPTH_COL: [f64; 4] = [0.0, 0.06, 0.06, 0.0];
const DEPTH_ROW: [f64; 4] = [0.0, 0.045, 0.045, 0.0];
const JITTER: f64 = 0.01;
const SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct AvatarParams {
    pub seed: u64,
    pub skin: [u8; 3],
    pub brow: [u8; 3],
    pub eye: [u8; 3],
    pub mouth: [u8; 3],
    pub background: [u8; 3],
    /// Head semi-axes in pixels.
    pub axis_x: f64,
    pub axis_y: f64,
    pub fiducial_radius: f64,
    /// Head centre offset from the frame centre, in pixels.
    pub offset_x: f64,
    pub offset_y: f64,
}

impl AvatarParams {
    /// Default proportions for a frame whose shorter side is `size` pixels.
    pub fn for_size(size: usize) -> Self {
        let s = size as f64;
        AvatarParams {
            seed: 0,
            skin: [205, 160, 135],
            brow: [60, 40, 30],
            eye: [40, 50, 110],
            mouth: [120, 30, 40],
            background: [235, 235, 240],
            axis_x: 0.28 * s,
            axis_y: 0.35 * s,
            fiducial_radius: 0.045 * 0.28 * s,
            offset_x: 0.0,
            offset_y: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), VisionError> {
        let positive = [self.axis_x, self.axis_y, self.fiducial_radius]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive || !self.offset_x.is_finite() || !self.offset_y.is_finite() {
            return Err(VisionError::InvalidParams("axes and radius must be positive".into()));
        }
        // closest pair of fiducials over the supported pose range must not touch
        if self.fiducial_radius * 2.0 >= self.min_fiducial_spacing() {
            return Err(VisionError::InvalidParams("fiducials overlap at extreme poses".into()));
        }
        if self.skin == self.background {
            return Err(VisionError::InvalidParams(
                "skin and background colours must differ".into(),
            ));
        }
        Ok(())
    }

    /// Smallest centre distance between fiducials over yaw/pitch in [-60°, 60°].
    fn min_fiducial_spacing(&self) -> f64 {
        let pts = self.model_points();
        let mut best = f64::INFINITY;
        for yaw in (-60..=60).step_by(5) {
            for pitch in (-60..=60).step_by(5) {
                let pose = EulerPose {
                    yaw: yaw as f64,
                    pitch: pitch as f64,
                    roll: 0.0,
                };
                let m = camera_matrix(&pose);
                let proj: Vec<[f64; 2]> = pts.iter().map(|p| apply(&m, *p)).collect();
                for i in 0..proj.len() {
                    for j in i + 1..proj.len() {
                        best = best.min((proj[i][0] - proj[j][0]).hypot(proj[i][1] - proj[j][1]));
                    }
                }
            }
        }
        best
    }

    /// Fiducial centres in model space (pixels), row-major from the top-left.
    pub fn model_points(&self) -> [[f64; 3]; LANDMARK_COUNT] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        // one jitter per mirrored column pair keeps the face left-right symmetric
        let mut jitter = [[0f64; 2]; 8];
        for j in jitter.iter_mut() {
            *j = [rng.gen_range(-JITTER..JITTER), rng.gen_range(-JITTER..JITTER)];
        }
        let mut out = [[0f64; 3]; LANDMARK_COUNT];
        for row in 0..4 {
            for col in 0..4 {
                let pair = row * 2 + col.min(3 - col);
                let sign = if col < 2 { 1.0 } else { -1.0 };
                let [jx, jy] = jitter[pair];
                out[row * 4 + col] = [
                    self.axis_x * (GRID_X[col] + sign * jx),
                    self.axis_y * (GRID_Y[row] + jy),
                    self.axis_x * (DEPTH_COL[col] + DEPTH_ROW[row]),
                ];
            }
        }
        out
    }

    fn fiducial_color(&self, index: usize) -> [u8; 3] {
        match index / 4 {
            0 | 2 => self.brow,
            1 => self.eye,
            _ => self.mouth,
        }
    }

    pub fn to_kv(&self) -> String {
        let rgb = |c: [u8; 3]| format!("{},{},{}", c[0], c[1], c[2]);
        kv::render(&[
            ("seed", self.seed.to_string()),
            ("skin", rgb(self.skin)),
            ("brow", rgb(self.brow)),
            ("eye", rgb(self.eye)),
            ("mouth", rgb(self.mouth)),
            ("background", rgb(self.background)),
            ("axis_x", self.axis_x.to_string()),
            ("axis_y", self.axis_y.to_string()),
            ("fiducial_radius", self.fiducial_radius.to_string()),
            ("offset_x", self.offset_x.to_string()),
            ("offset_y", self.offset_y.to_string()),
        ])
    }

    /// Parses a key-value file; missing keys take the defaults for `size`.
    pub fn from_kv(text: &str, size: usize) -> Result<Self, KvError> {
        let mut kv = KvMap::parse(text)?;
        let p = AvatarParams::take_from(&mut kv, "", size)?;
        kv.finish()?;
        Ok(p)
    }

    /// Removes the keys named `prefix` + field from `kv`, defaulting absent ones.
    pub fn take_from(kv: &mut KvMap, prefix: &str, size: usize) -> Result<Self, KvError> {
        let key = |k: &str| format!("{prefix}{k}");
        let mut p = AvatarParams::for_size(size);
        p.seed = kv.take_or(&key("seed"), p.seed)?;
        for (k, slot) in [
            ("skin", &mut p.skin),
            ("brow", &mut p.brow),
            ("eye", &mut p.eye),
            ("mouth", &mut p.mouth),
            ("background", &mut p.background),
        ] {
            if let Some(c) = kv.take_rgb(&key(k))? {
                *slot = c;
            }
        }
        p.axis_x = kv.take_or(&key("axis_x"), p.axis_x)?;
        p.axis_y = kv.take_or(&key("axis_y"), p.axis_y)?;
        p.fiducial_radius = kv.take_or(&key("fiducial_radius"), p.fiducial_radius)?;
        p.offset_x = kv.take_or(&key("offset_x"), p.offset_x)?;
        p.offset_y = kv.take_or(&key("offset_y"), p.offset_y)?;
        Ok(p)
    }
}

/// First two rows of `Rz(roll)·Rx(pitch)·Ry(yaw)`.
pub(crate) fn camera_matrix(pose: &EulerPose) -> [[f64; 3]; 2] {
    let (sy, cy) = pose.yaw.to_radians().sin_cos();
    let (sp, cp) = pose.pitch.to_radians().sin_cos();
    let (sr, cr) = pose.roll.to_radians().sin_cos();
    let a = [[cy, 0.0, sy], [sp * sy, cp, -sp * cy]];
    let mut m = [[0f64; 3]; 2];
    for k in 0..3 {
        m[0][k] = cr * a[0][k] - sr * a[1][k];
        m[1][k] = sr * a[0][k] + cr * a[1][k];
    }
    m
}

pub(crate) fn apply(m: &[[f64; 3]; 2], p: [f64; 3]) -> [f64; 2] {
    [
        m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
        m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
    ]
}

/// Everything the renderer knows about one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedAvatar {
    pub frame: Frame,
    pub landmarks: Landmarks,
    pub bbox: BBox,
    /// Face-disk coverage over the whole frame.
    pub mask: Mask,
}

/// Head centre in pixel coordinates (pixel centres sit on integers).
pub fn head_center(params: &AvatarParams, width: usize, height: usize) -> [f64; 2] {
    [
        (width as f64 - 1.0) / 2.0 + params.offset_x,
        (height as f64 - 1.0) / 2.0 + params.offset_y,
    ]
}

/// Projected fiducial centres for `pose`, relative to the head centre.
pub fn project_fiducials(params: &AvatarParams, pose: &EulerPose) -> [[f64; 2]; LANDMARK_COUNT] {
    let m = camera_matrix(pose);
    params.model_points().map(|p| apply(&m, p))
}

struct Scene {
    center: [f64; 2],
    // image offset (relative to centre) -> disk coordinates scaled to the unit circle
    inverse: [[f64; 2]; 2],
    min_singular: f64,
    blobs: Vec<([f64; 2], [u8; 3])>,
    radius: f64,
}

#[derive(Clone, Copy)]
enum Surface {
    Background,
    Skin,
    Blob(usize),
}

impl Scene {
    fn surface(&self, near: &[usize], x: f64, y: f64) -> Surface {
        let r2 = self.radius * self.radius;
        for &i in near {
            let c = self.blobs[i].0;
            let (dx, dy) = (x - c[0], y - c[1]);
            if dx * dx + dy * dy <= r2 {
                return Surface::Blob(i);
            }
        }
        if self.disk_radius(x, y) <= 1.0 {
            Surface::Skin
        } else {
            Surface::Background
        }
    }

    fn disk_radius(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let u = self.inverse[0][0] * dx + self.inverse[0][1] * dy;
        let v = self.inverse[1][0] * dx + self.inverse[1][1] * dy;
        (u * u + v * v).sqrt()
    }

    /// True when the pixel square around `(x, y)` may straddle an edge.
    fn near_edge(&self, near: &[usize], x: f64, y: f64) -> bool {
        let g = self.disk_radius(x, y);
        if (g - 1.0).abs() * self.min_singular < 1.0 {
            return true;
        }
        near.iter().any(|&i| {
            let c = self.blobs[i].0;
            let d = ((x - c[0]).powi(2) + (y - c[1]).powi(2)).sqrt();
            (d - self.radius).abs() < 1.0
        })
    }
}

/// Renders the avatar at `pose` into a `width × height` frame.
pub fn render_avatar(
    pose: &EulerPose,
    params: &AvatarParams,
    width: usize,
    height: usize,
) -> Result<RenderedAvatar, VisionError> {
    pose.validate().map_err(|_| VisionError::OutOfRange(*pose))?;
    if pose.yaw.abs() > MAX_RENDER_ANGLE || pose.pitch.abs() > MAX_RENDER_ANGLE {
        return Err(VisionError::OutOfRange(*pose));
    }
    params.validate()?;
    let center = head_center(params, width, height);
    let m = camera_matrix(pose);
    // linear map of the disk plane: (u, v) on the unit circle -> image offset
    let l = [
        [m[0][0] * params.axis_x, m[0][1] * params.axis_y],
        [m[1][0] * params.axis_x, m[1][1] * params.axis_y],
    ];
    let det = l[0][0] * l[1][1] - l[0][1] * l[1][0];
    let inverse = [[l[1][1] / det, -l[0][1] / det], [-l[1][0] / det, l[0][0] / det]];
    // smallest singular value of the 2×2 map
    let (p, q) = (
        l[0][0] * l[0][0] + l[0][1] * l[0][1] + l[1][0] * l[1][0] + l[1][1] * l[1][1],
        det.abs(),
    );
    let min_singular = ((p - (p * p - 4.0 * q * q).max(0.0).sqrt()) / 2.0).sqrt();

    let rel = project_fiducials(params, pose);
    let points: Vec<[f64; 2]> = rel.iter().map(|r| [center[0] + r[0], center[1] + r[1]]).collect();
    let scene = Scene {
        center,
        inverse,
        min_singular,
        blobs: points
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, params.fiducial_color(i)))
            .collect(),
        radius: params.fiducial_radius,
    };
    let color = |s: Surface| match s {
        Surface::Background => params.background,
        Surface::Skin => params.skin,
        Surface::Blob(i) => scene.blobs[i].1,
    };

    // pixels outside the head's extent (plus a margin) are plain background
    let hx = l[0][0].hypot(l[0][1]);
    let hy = l[1][0].hypot(l[1][1]);
    let (mut ex0, mut ex1, mut ey0, mut ey1) = (center[0] - hx, center[0] + hx, center[1] - hy, center[1] + hy);
    for p in &points {
        ex0 = ex0.min(p[0] - scene.radius);
        ex1 = ex1.max(p[0] + scene.radius);
        ey0 = ey0.min(p[1] - scene.radius);
        ey1 = ey1.max(p[1] + scene.radius);
    }
    let clampi = |v: f64, n: usize| v.clamp(0.0, n as f64) as usize;
    let (x0, x1) = (clampi(ex0.floor() - 2.0, width), clampi(ex1.ceil() + 3.0, width));
    let (y0, y1) = (clampi(ey0.floor() - 2.0, height), clampi(ey1.ceil() + 3.0, height));

    let n = SUPERSAMPLE as f64;
    let rows: Vec<(Vec<[u8; 3]>, Vec<u8>)> = (y0..y1)
        .into_par_iter()
        .map(|py| {
            let y = py as f64;
            let near: Vec<usize> = (0..scene.blobs.len())
                .filter(|&i| (scene.blobs[i].0[1] - y).abs() <= scene.radius + 1.5)
                .collect();
            let mut px_row = Vec::with_capacity(x1 - x0);
            let mut cov_row = Vec::with_capacity(x1 - x0);
            for px in x0..x1 {
                let x = px as f64;
                if !scene.near_edge(&near, x, y) {
                    let s = scene.surface(&near, x, y);
                    px_row.push(color(s));
                    cov_row.push(if scene.disk_radius(x, y) <= 1.0 { 255 } else { 0 });
                    continue;
                }
                let mut acc = [0f64; 3];
                let mut disk = 0usize;
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let xs = x + (sx as f64 + 0.5) / n - 0.5;
                        let ys = y + (sy as f64 + 0.5) / n - 0.5;
                        let c = color(scene.surface(&near, xs, ys));
                        for k in 0..3 {
                            acc[k] += c[k] as f64;
                        }
                        if scene.disk_radius(xs, ys) <= 1.0 {
                            disk += 1;
                        }
                    }
                }
                let samples = (SUPERSAMPLE * SUPERSAMPLE) as f64;
                px_row.push(acc.map(|v| round_to_u8(v / samples)));
                cov_row.push(round_to_u8(disk as f64 * 255.0 / samples));
            }
            (px_row, cov_row)
        })
        .collect();

    let mut raster = Raster::filled(width, height, params.background)?;
    let mut coverage = vec![0u8; width * height];
    for (py, (px_row, cov_row)) in (y0..y1).zip(rows) {
        for (px, rgb) in (x0..x1).zip(px_row) {
            raster.set_pixel(px, py, rgb);
        }
        coverage[py * width + x0..py * width + x1].copy_from_slice(&cov_row);
    }
    let frame = Frame::new(raster)?;
    let bbox = foreground_box(&frame, params.background).ok_or(VisionError::NoFace)?;
    let mask = Mask::from_coverage(width, height, coverage)?;
    Ok(RenderedAvatar {
        landmarks: Landmarks::new(points, bbox),
        frame,
        bbox,
        mask,
    })
}

/// Tightest box around pixels that differ from `background`.
pub fn foreground_box(frame: &Raster, background: [u8; 3]) -> Option<BBox> {
    let (w, h) = (frame.width(), frame.height());
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if frame.pixel(x, y) != background {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
    }
    (x0 != usize::MAX).then(|| BBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(y: f64, p: f64, r: f64) -> EulerPose {
        EulerPose::new(y, p, r).unwrap()
    }

    #[test]
    fn deterministic() {
        let params = AvatarParams::for_size(128);
        let a = render_avatar(&pose(12.0, -7.0, 3.0), &params, 128, 128).unwrap();
        let b = render_avatar(&pose(12.0, -7.0, 3.0), &params, 128, 128).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn frontal_pose_is_symmetric() {
        let params = AvatarParams::for_size(256);
        let r = render_avatar(&pose(0.0, 0.0, 0.0), &params, 256, 256).unwrap();
        let cx = head_center(&params, 256, 256)[0];
        let pts = r.landmarks.points();
        for row in 0..4 {
            for col in 0..2 {
                let (a, b) = (pts[row * 4 + col], pts[row * 4 + 3 - col]);
                assert!(((a[0] - cx) + (b[0] - cx)).abs() < 0.5);
                assert!((a[1] - b[1]).abs() < 0.5);
            }
        }
    }

    #[test]
    fn opposite_yaw_mirrors() {
        let params = AvatarParams::for_size(256);
        let cx = head_center(&params, 256, 256)[0];
        let l = render_avatar(&pose(30.0, 0.0, 0.0), &params, 256, 256)
            .unwrap()
            .landmarks;
        let r = render_avatar(&pose(-30.0, 0.0, 0.0), &params, 256, 256)
            .unwrap()
            .landmarks;
        for row in 0..4 {
            for col in 0..4 {
                let a = l.points()[row * 4 + col];
                let b = r.points()[row * 4 + 3 - col];
                assert!(((a[0] - cx) + (b[0] - cx)).abs() < 0.5);
            }
        }
    }

    #[test]
    fn extreme_pose_rejected() {
        let params = AvatarParams::for_size(64);
        assert!(matches!(
            render_avatar(&pose(80.0, 0.0, 0.0), &params, 64, 64),
            Err(VisionError::OutOfRange(_))
        ));
        assert!(render_avatar(&pose(0.0, -76.0, 0.0), &params, 64, 64).is_err());
    }

    #[test]
    fn default_params_are_valid_and_round_trip() {
        for size in [64, 256, 800] {
            let p = AvatarParams::for_size(size);
            p.validate().unwrap();
            assert_eq!(AvatarParams::from_kv(&p.to_kv(), size).unwrap(), p);
        }
        let p = AvatarParams::from_kv("seed = 9\noffset_x = 20\n", 256).unwrap();
        assert_eq!((p.seed, p.offset_x), (9, 20.0));
        assert!(AvatarParams::from_kv("colour = 1,2,3", 256).is_err());
    }

    #[test]
    fn mask_area_matches_ellipse() {
        let params = AvatarParams::for_size(256);
        let r = render_avatar(&pose(0.0, 0.0, 0.0), &params, 256, 256).unwrap();
        let analytic = std::f64::consts::PI * params.axis_x * params.axis_y;
        assert!((r.mask.area() - analytic).abs() / analytic < 0.01);
    }
}
