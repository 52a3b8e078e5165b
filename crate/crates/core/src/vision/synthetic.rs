//! Backend for frames produced by [`render_avatar`](super::render_avatar).
//!
//! Face box and mask come from colour differences against the known
//! background; landmarks are the darkness-weighted centroids of the fiducial
//! blobs; pose comes from an affine-camera fit of those landmarks to the
//! avatar's 3D fiducial model; reenactment is a least-squares affine warp.

use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;

use super::avatar::{apply, camera_matrix, foreground_box, project_fiducials};
use super::{
    AvatarParams, BackendSuite, FaceDetector, FaceSegmenter, LandmarkDetector, Landmarks, PoseEstimator, Reenactor,
    VisionError, LANDMARK_COUNT,
};
use crate::geometry::EulerPose;
use crate::image::{round_to_u8, BBox, FacePatch, Frame, Mask, Raster};
use crate::pool::SourceEntry;

/// Search region around a face box, as a fraction of its size.
const SEARCH_MARGIN: f64 = 0.1;
/// Mask feather width in pixels.
const MASK_FEATHER: f64 = 2.0;
/// Weakest fiducial contrast (luma levels) considered a detection.
const MIN_CONTRAST: f64 = 6.0;

#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    params: AvatarParams,
    model: [[f64; 3]; LANDMARK_COUNT],
}

impl SyntheticBackend {
    pub fn new(params: AvatarParams) -> Result<Self, VisionError> {
        params.validate()?;
        let model = params.model_points();
        Ok(SyntheticBackend { params, model })
    }

    pub fn params(&self) -> &AvatarParams {
        &self.params
    }

    pub fn suite(self) -> Result<BackendSuite, VisionError> {
        let b = Arc::new(self);
        Ok(BackendSuite {
            name: "synthetic".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            detector: b.clone(),
            pose: b.clone(),
            segmenter: b.clone(),
            landmarks: b.clone(),
            reenactor: b,
        })
    }

    fn color_distance2(&self, rgb: [u8; 3]) -> i32 {
        let bg = self.params.background;
        (0..3).map(|c| (rgb[c] as i32 - bg[c] as i32).pow(2)).sum()
    }

    /// Farther from the background than half the skin-to-background distance.
    #[inline]
    fn is_foreground(&self, rgb: [u8; 3]) -> bool {
        4 * self.color_distance2(rgb) > self.color_distance2(self.params.skin)
    }

    /// Least-squares affine camera `q ≈ M·P + t` over the model points.
    fn fit_camera(&self, points: &[[f64; 2]]) -> Option<([[f64; 3]; 2], [f64; 2], f64)> {
        let n = points.len() as f64;
        let mut pm = [0f64; 3];
        let mut qm = [0f64; 2];
        for (p, q) in self.model.iter().zip(points) {
            for k in 0..3 {
                pm[k] += p[k] / n;
            }
            qm[0] += q[0] / n;
            qm[1] += q[1] / n;
        }
        let mut ppt = Matrix3::<f64>::zeros();
        let mut qpt = [Vector3::<f64>::zeros(); 2];
        for (p, q) in self.model.iter().zip(points) {
            let pc = Vector3::new(p[0] - pm[0], p[1] - pm[1], p[2] - pm[2]);
            ppt += pc * pc.transpose();
            qpt[0] += pc * (q[0] - qm[0]);
            qpt[1] += pc * (q[1] - qm[1]);
        }
        let inv = ppt.try_inverse()?;
        let r0 = inv * qpt[0];
        let r1 = inv * qpt[1];
        let m = [[r0[0], r0[1], r0[2]], [r1[0], r1[1], r1[2]]];
        let mp = apply(&m, pm);
        let t = [qm[0] - mp[0], qm[1] - mp[1]];
        let mut sq = 0.0;
        for (p, q) in self.model.iter().zip(points) {
            let r = apply(&m, *p);
            sq += (r[0] + t[0] - q[0]).powi(2) + (r[1] + t[1] - q[1]).powi(2);
        }
        Some((m, t, (sq / n).sqrt()))
    }

    /// Orders 16 unlabeled centroids as the model's 4×4 grid.
    fn order_grid(&self, blobs: &[[f64; 2]]) -> Result<Vec<[f64; 2]>, VisionError> {
        let mut best: Option<(f64, Vec<[f64; 2]>)> = None;
        for deg in (-60..=60).step_by(3) {
            let (s, c) = (-(deg as f64)).to_radians().sin_cos();
            let rot = |p: &[f64; 2]| [c * p[0] - s * p[1], s * p[0] + c * p[1]];
            let mut idx: Vec<usize> = (0..blobs.len()).collect();
            idx.sort_by(|&a, &b| rot(&blobs[a])[1].total_cmp(&rot(&blobs[b])[1]));
            for row in idx.chunks_mut(4) {
                row.sort_by(|&a, &b| rot(&blobs[a])[0].total_cmp(&rot(&blobs[b])[0]));
            }
            let ordered: Vec<[f64; 2]> = idx.iter().map(|&i| blobs[i]).collect();
            let Some((m, _, rms)) = self.fit_camera(&ordered) else {
                continue;
            };
            // reject mirrored labelings
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det <= 0.0 {
                continue;
            }
            if best.as_ref().is_none_or(|(r, _)| rms < *r) {
                best = Some((rms, ordered));
            }
        }
        let (rms, ordered) = best.ok_or(VisionError::LandmarkMismatch(f64::INFINITY))?;
        if rms > (0.05 * self.params.axis_x).max(1.5) {
            return Err(VisionError::LandmarkMismatch(rms));
        }
        Ok(ordered)
    }

    /// Extent of the rendered head around its centre: `[xmin, xmax, ymin, ymax]`.
    fn head_extent(&self, pose: &EulerPose) -> [f64; 4] {
        let m = camera_matrix(pose);
        let hx = (m[0][0] * self.params.axis_x).hypot(m[0][1] * self.params.axis_y);
        let hy = (m[1][0] * self.params.axis_x).hypot(m[1][1] * self.params.axis_y);
        let mut e = [-hx, hx, -hy, hy];
        let r = self.params.fiducial_radius;
        for p in project_fiducials(&self.params, pose) {
            e[0] = e[0].min(p[0] - r);
            e[1] = e[1].max(p[0] + r);
            e[2] = e[2].min(p[1] - r);
            e[3] = e[3].max(p[1] + r);
        }
        e
    }
}

impl FaceDetector for SyntheticBackend {
    fn detect_face(&self, frame: &Frame) -> Result<BBox, VisionError> {
        foreground_box(frame, self.params.background).ok_or(VisionError::NoFace)
    }
}

impl PoseEstimator for SyntheticBackend {
    fn estimate_pose(&self, frame: &Frame, bbox: BBox) -> Result<EulerPose, VisionError> {
        if bbox.is_empty() {
            return Err(VisionError::NoFace);
        }
        let lm = self.detect_landmarks(bbox, frame)?;
        let (m, _, _) = self
            .fit_camera(lm.points())
            .ok_or(VisionError::LandmarkMismatch(f64::INFINITY))?;
        // model points already carry the head scale, so m = R2(roll) · A(yaw, pitch)
        let roll = (-m[0][1]).atan2(m[1][1]);
        let (sr, cr) = roll.sin_cos();
        let mut a = [[0f64; 3]; 2];
        for k in 0..3 {
            a[0][k] = cr * m[0][k] + sr * m[1][k];
            a[1][k] = -sr * m[0][k] + cr * m[1][k];
        }
        let yaw = a[0][2].atan2(a[0][0]);
        let (sy, cy) = yaw.sin_cos();
        let sp = a[1][0] * sy - a[1][2] * cy;
        let pitch = sp.atan2(a[1][1]);
        let initial = EulerPose {
            yaw: yaw.to_degrees(),
            pitch: pitch.to_degrees(),
            roll: roll.to_degrees(),
        };
        Ok(self.refine_pose(initial, lm.points()))
    }
}

impl SyntheticBackend {
    /// Gauss-Newton on the rigid model (three angles plus image offset).
    fn refine_pose(&self, initial: EulerPose, points: &[[f64; 2]]) -> EulerPose {
        let residuals = |x: &[f64; 5]| -> Vec<f64> {
            let m = camera_matrix(&EulerPose {
                yaw: x[0],
                pitch: x[1],
                roll: x[2],
            });
            let mut r = Vec::with_capacity(2 * points.len());
            for (p, q) in self.model.iter().zip(points) {
                let v = apply(&m, *p);
                r.push(v[0] + x[3] - q[0]);
                r.push(v[1] + x[4] - q[1]);
            }
            r
        };
        let mean = |k: usize| points.iter().map(|q| q[k]).sum::<f64>() / points.len() as f64;
        let mut x = [initial.yaw, initial.pitch, initial.roll, 0.0, 0.0];
        // offset that centres the projected model on the observed centroid
        let m0 = camera_matrix(&initial);
        let proj_mean = self
            .model
            .iter()
            .map(|p| apply(&m0, *p))
            .fold([0.0, 0.0], |acc, v| [acc[0] + v[0], acc[1] + v[1]]);
        x[3] = mean(0) - proj_mean[0] / points.len() as f64;
        x[4] = mean(1) - proj_mean[1] / points.len() as f64;
        let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
        let mut r = residuals(&x);
        for _ in 0..20 {
            let mut jac = DMatrix::<f64>::zeros(r.len(), 5);
            for k in 0..5 {
                let h = if k < 3 { 1e-4 } else { 1e-3 };
                let mut xp = x;
                xp[k] += h;
                let rp = residuals(&xp);
                for i in 0..r.len() {
                    jac[(i, k)] = (rp[i] - r[i]) / h;
                }
            }
            let jt = jac.transpose();
            let rhs = -(&jt * DMatrix::from_column_slice(r.len(), 1, &r));
            let Some(step) = (&jt * &jac).lu().solve(&rhs) else {
                break;
            };
            let mut next = x;
            for k in 0..5 {
                next[k] += step[k];
            }
            let rn = residuals(&next);
            if !(cost(&rn) < cost(&r)) {
                break;
            }
            let small = step.iter().take(3).all(|s| s.abs() < 1e-7);
            x = next;
            r = rn;
            if small {
                break;
            }
        }
        EulerPose {
            yaw: x[0],
            pitch: x[1],
            roll: x[2],
        }
    }
}

impl FaceSegmenter for SyntheticBackend {
    fn segment_face(&self, frame: &Frame, bbox: BBox) -> Result<Mask, VisionError> {
        let (w, h) = (frame.width(), frame.height());
        let mut mask = Mask::empty(w, h);
        if bbox.is_empty() {
            return Ok(mask);
        }
        bbox.check_within(w, h)?;
        let region = bbox.inflate(SEARCH_MARGIN, w, h);
        let (mut n, mut sx, mut sy) = (0f64, 0f64, 0f64);
        let (mut sxx, mut syy, mut sxy) = (0f64, 0f64, 0f64);
        let raster = frame.raster();
        let planes = [raster.plane(0), raster.plane(1), raster.plane(2)];
        for y in region.y..region.y + region.h {
            for x in region.x..region.x + region.w {
                let i = y * w + x;
                if self.is_foreground([planes[0][i], planes[1][i], planes[2][i]]) {
                    let (xf, yf) = (x as f64, y as f64);
                    n += 1.0;
                    sx += xf;
                    sy += yf;
                    sxx += xf * xf;
                    syy += yf * yf;
                    sxy += xf * yf;
                }
            }
        }
        if n < 16.0 {
            return Ok(mask);
        }
        let (mx, my) = (sx / n, sy / n);
        let (cxx, cyy, cxy) = (sxx / n - mx * mx, syy / n - my * my, sxy / n - mx * my);
        // principal axes of the covariance; a uniform ellipse has semi-axis 2·sqrt(λ)
        let tr = cxx + cyy;
        let disc = ((cxx - cyy).powi(2) / 4.0 + cxy * cxy).sqrt();
        let (l1, l2) = (tr / 2.0 + disc, (tr / 2.0 - disc).max(1e-9));
        let theta = 0.5 * (2.0 * cxy).atan2(cxx - cyy);
        let (a, b) = (2.0 * l1.sqrt(), 2.0 * l2.sqrt());
        let (st, ct) = theta.sin_cos();
        // coverage is zero beyond half a feather outside the ellipse
        let reach_x = (a * ct).hypot(b * st) + MASK_FEATHER;
        let reach_y = (a * st).hypot(b * ct) + MASK_FEATHER;
        let span = |c: f64, r: f64, lo: usize, len: usize| {
            let from = ((c - r).floor().max(lo as f64)) as usize;
            let to = ((c + r).ceil() as usize + 1).min(lo + len);
            from..to.max(from)
        };
        let xs = span(mx, reach_x, region.x, region.w);
        for y in span(my, reach_y, region.y, region.h) {
            for x in xs.clone() {
                let (dx, dy) = (x as f64 - mx, y as f64 - my);
                let u = (ct * dx + st * dy) / a;
                let v = (-st * dx + ct * dy) / b;
                let g = (u * u + v * v).sqrt();
                // signed distance to the boundary along the ray from the centre
                let dist = if g > 0.0 {
                    (g - 1.0) * (dx * dx + dy * dy).sqrt() / g
                } else {
                    -a.min(b)
                };
                let cov = (0.5 - dist / MASK_FEATHER).clamp(0.0, 1.0);
                mask.set(x, y, round_to_u8(cov * 255.0));
            }
        }
        Ok(mask)
    }
}

impl LandmarkDetector for SyntheticBackend {
    fn landmark_count(&self) -> usize {
        LANDMARK_COUNT
    }

    fn detect_landmarks(&self, bbox: BBox, frame: &Frame) -> Result<Landmarks, VisionError> {
        if bbox.is_empty() {
            return Err(VisionError::LandmarkFailure(0));
        }
        bbox.check_within(frame.width(), frame.height())?;
        let region = bbox.inflate(SEARCH_MARGIN, frame.width(), frame.height());
        let (rw, rh) = (region.w, region.h);
        let raster = frame.raster();
        let planes = [raster.plane(0), raster.plane(1), raster.plane(2)];
        let mut luma = vec![0f64; rw * rh];
        let mut face_luma = Vec::new();
        for (y, row) in luma.chunks_exact_mut(rw).enumerate() {
            let base = (region.y + y) * frame.width() + region.x;
            for (x, l) in row.iter_mut().enumerate() {
                let i = base + x;
                let rgb = [planes[0][i], planes[1][i], planes[2][i]];
                *l = 0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64;
                if self.is_foreground(rgb) {
                    face_luma.push(*l);
                }
            }
        }
        if face_luma.is_empty() {
            return Err(VisionError::LandmarkFailure(0));
        }
        let mid = face_luma.len() / 2;
        let skin = *face_luma.select_nth_unstable_by(mid, f64::total_cmp).1;
        let dark: Vec<f64> = luma.iter().map(|l| skin - l).collect();
        let max_dark = dark.iter().copied().fold(0.0, f64::max);
        if max_dark < MIN_CONTRAST {
            return Err(VisionError::LandmarkFailure(0));
        }
        let cut = 0.5 * max_dark;

        // 4-connected components above the cut
        let mut label = vec![u32::MAX; rw * rh];
        let mut blobs: Vec<(f64, [f64; 2])> = Vec::new();
        let mut stack = Vec::new();
        for start in 0..rw * rh {
            if dark[start] <= cut || label[start] != u32::MAX {
                continue;
            }
            let id = blobs.len() as u32;
            label[start] = id;
            stack.push(start);
            let (mut wsum, mut wx, mut wy) = (0f64, 0f64, 0f64);
            while let Some(i) = stack.pop() {
                let (x, y) = (i % rw, i / rw);
                let wgt = dark[i] - cut;
                wsum += wgt;
                wx += wgt * x as f64;
                wy += wgt * y as f64;
                let mut visit = |j: usize| {
                    if dark[j] > cut && label[j] == u32::MAX {
                        label[j] = id;
                        stack.push(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < rw {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - rw);
                }
                if y + 1 < rh {
                    visit(i + rw);
                }
            }
            blobs.push((wsum, [region.x as f64 + wx / wsum, region.y as f64 + wy / wsum]));
        }
        if blobs.len() < LANDMARK_COUNT {
            return Err(VisionError::LandmarkFailure(blobs.len()));
        }
        // heaviest blobs first; ties by position for determinism
        blobs.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(a.1[1].total_cmp(&b.1[1]))
                .then(a.1[0].total_cmp(&b.1[0]))
        });
        let centroids: Vec<[f64; 2]> = blobs[..LANDMARK_COUNT].iter().map(|b| b.1).collect();
        Ok(Landmarks::new(self.order_grid(&centroids)?, bbox))
    }

    fn landmarks_from_pose(&self, pose: &EulerPose, bbox: BBox) -> Option<Landmarks> {
        if bbox.is_empty() || pose.validate().is_err() {
            return None;
        }
        let e = self.head_extent(pose);
        // the box spans pixel centres x .. x + w - 1
        let cx = bbox.x as f64 - e[0] + ((bbox.w - 1) as f64 - (e[1] - e[0])) / 2.0;
        let cy = bbox.y as f64 - e[2] + ((bbox.h - 1) as f64 - (e[3] - e[2])) / 2.0;
        let points = project_fiducials(&self.params, pose)
            .iter()
            .map(|p| [cx + p[0], cy + p[1]])
            .collect();
        Some(Landmarks::new(points, bbox))
    }
}

/// Least-squares 2D affine map `dst ≈ A·src + t` as `[[a, b, tx], [c, d, ty]]`.
fn fit_affine(src: &[[f64; 2]], dst: &[[f64; 2]]) -> Result<[[f64; 3]; 2], VisionError> {
    let n = src.len();
    let design = DMatrix::from_fn(n, 3, |i, j| if j < 2 { src[i][j] } else { 1.0 });
    let sv = design.singular_values();
    let (max, min) = (sv.max(), sv.min());
    if !(min > 1e-9 * max.max(1.0)) {
        return Err(VisionError::ReenactFailure(
            "landmarks are collinear or coincident".into(),
        ));
    }
    let svd = design.svd(true, true);
    let mut out = [[0f64; 3]; 2];
    for (k, row) in out.iter_mut().enumerate() {
        let rhs = DMatrix::from_fn(n, 1, |i, _| dst[i][k]);
        let x = svd
            .solve(&rhs, 1e-12)
            .map_err(|e| VisionError::ReenactFailure(e.to_string()))?;
        *row = [x[0], x[1], x[2]];
    }
    Ok(out)
}

/// Bilinear sample position in a `w×h` plane: the four neighbour indices
/// (edge-clamped), whether each lies inside, and the fractional offsets.
struct Sample {
    idx: [usize; 4],
    inside: [bool; 4],
    tx: f64,
    ty: f64,
}

impl Sample {
    #[inline]
    fn new(x: f64, y: f64, w: usize, h: usize) -> Self {
        let floor = |v: f64| {
            let t = v as isize;
            if t as f64 > v {
                t - 1
            } else {
                t
            }
        };
        let (xi, yi) = (floor(x), floor(y));
        let (wi, hi) = (w as isize - 1, h as isize - 1);
        let cx = [xi.clamp(0, wi) as usize, (xi + 1).clamp(0, wi) as usize];
        let cy = [yi.clamp(0, hi) as usize * w, (yi + 1).clamp(0, hi) as usize * w];
        let ix = [(0..=wi).contains(&xi), (0..=wi).contains(&(xi + 1))];
        let iy = [(0..=hi).contains(&yi), (0..=hi).contains(&(yi + 1))];
        Sample {
            idx: [cy[0] + cx[0], cy[0] + cx[1], cy[1] + cx[0], cy[1] + cx[1]],
            inside: [iy[0] && ix[0], iy[0] && ix[1], iy[1] && ix[0], iy[1] && ix[1]],
            tx: x - xi as f64,
            ty: y - yi as f64,
        }
    }

    #[inline]
    fn blend(&self, p: [f64; 4]) -> f64 {
        let top = p[0] * (1.0 - self.tx) + p[1] * self.tx;
        let bot = p[2] * (1.0 - self.tx) + p[3] * self.tx;
        top * (1.0 - self.ty) + bot * self.ty
    }

    /// Edge-clamped sample.
    #[inline]
    fn clamped(&self, plane: &[u8]) -> f64 {
        self.blend(self.idx.map(|i| plane[i] as f64))
    }

    /// Sample that reads zero outside the plane.
    #[inline]
    fn zero_outside(&self, plane: &[u8]) -> f64 {
        let mut p = [0f64; 4];
        for k in 0..4 {
            if self.inside[k] {
                p[k] = plane[self.idx[k]] as f64;
            }
        }
        self.blend(p)
    }
}

impl Reenactor for SyntheticBackend {
    fn reenact(&self, source: &SourceEntry, drive: &Landmarks) -> Result<FacePatch, VisionError> {
        let src = source
            .landmarks
            .as_ref()
            .ok_or_else(|| VisionError::ReenactFailure("source has no landmarks".into()))?;
        if src.len() != drive.len() || drive.is_empty() {
            return Err(VisionError::ReenactFailure(format!(
                "landmark count {} vs {}",
                src.len(),
                drive.len()
            )));
        }
        let rel = drive.relative_to_bbox();
        let m = fit_affine(rel.points(), src.points())?;
        let out_box = drive.bbox();
        let (ow, oh) = (out_box.w, out_box.h);
        if ow == 0 || oh == 0 {
            return Err(VisionError::ReenactFailure("empty drive bbox".into()));
        }
        let crop = source.face_crop.pixels();
        let cmask = source.face_crop.mask().coverage();
        let (cw, ch) = (crop.width(), crop.height());
        let cplanes = [crop.plane(0), crop.plane(1), crop.plane(2)];

        let mut planes: [Vec<u8>; 3] = std::array::from_fn(|_| vec![0; ow * oh]);
        let mut coverage = vec![0u8; ow * oh];
        let [r, g, b] = &mut planes;
        r.par_chunks_mut(ow)
            .zip(g.par_chunks_mut(ow))
            .zip(b.par_chunks_mut(ow))
            .zip(coverage.par_chunks_mut(ow))
            .enumerate()
            .for_each(|(y, (((r, g), b), cov))| {
                let yf = y as f64;
                for x in 0..ow {
                    let xf = x as f64;
                    let sx = m[0][0] * xf + m[0][1] * yf + m[0][2];
                    let sy = m[1][0] * xf + m[1][1] * yf + m[1][2];
                    let s = Sample::new(sx, sy, cw, ch);
                    r[x] = round_to_u8(s.clamped(cplanes[0]));
                    g[x] = round_to_u8(s.clamped(cplanes[1]));
                    b[x] = round_to_u8(s.clamped(cplanes[2]));
                    cov[x] = round_to_u8(s.zero_outside(cmask));
                }
            });
        let pixels = Raster::from_planes(ow, oh, planes)?;
        Ok(FacePatch::new(pixels, Mask::from_coverage(ow, oh, coverage)?)?)
    }
}
