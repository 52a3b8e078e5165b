use super::GeometryError;

/// Head orientation in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerPose {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerPose {
    pub const LIMIT: f64 = 180.0;

    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Result<Self, GeometryError> {
        let pose = EulerPose { yaw, pitch, roll };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        for v in [self.yaw, self.pitch, self.roll] {
            if !v.is_finite() || v.abs() > Self::LIMIT {
                return Err(GeometryError::InvalidPose(*self));
            }
        }
        Ok(())
    }

    /// Rounds every angle to the 0.01° transmission grid.
    pub fn quantize(&self) -> QuantizedPose {
        QuantizedPose {
            yaw: to_centidegrees(self.yaw),
            pitch: to_centidegrees(self.pitch),
            roll: to_centidegrees(self.roll),
        }
    }

    /// Equivalent to `self.quantize().dequantize()`.
    pub fn snapped(&self) -> EulerPose {
        self.quantize().dequantize()
    }
}

fn to_centidegrees(deg: f64) -> i16 {
    // f64::round is half away from zero
    (deg * 100.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Pose on the wire: three signed centidegree values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct QuantizedPose {
    pub yaw: i16,
    pub pitch: i16,
    pub roll: i16,
}

impl QuantizedPose {
    pub fn dequantize(&self) -> EulerPose {
        EulerPose {
            yaw: self.yaw as f64 / 100.0,
            pitch: self.pitch as f64 / 100.0,
            roll: self.roll as f64 / 100.0,
        }
    }
}

/// A point of the (yaw, pitch) plane, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AngularPoint {
    pub yaw: f64,
    pub pitch: f64,
}

impl AngularPoint {
    pub const fn new(yaw: f64, pitch: f64) -> Self {
        AngularPoint { yaw, pitch }
    }

    pub fn is_finite(&self) -> bool {
        self.yaw.is_finite() && self.pitch.is_finite()
    }
}

/// Drops roll.
pub fn project_pose(pose: &EulerPose) -> Result<AngularPoint, GeometryError> {
    pose.validate()?;
    Ok(AngularPoint::new(pose.yaw, pose.pitch))
}

/// Euclidean distance in the (yaw, pitch) plane.
pub fn angular_distance(a: AngularPoint, b: AngularPoint) -> f64 {
    (a.yaw - b.yaw).hypot(a.pitch - b.pitch)
}

/// Greedy thinning in input order: a point survives iff it is at least
/// `threshold` away from every point kept before it. Returns kept indices.
pub fn thin_points(points: &[AngularPoint], threshold: f64) -> Result<Vec<usize>, GeometryError> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(GeometryError::InvalidThreshold(threshold));
    }
    let mut kept: Vec<usize> = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if kept.iter().all(|&k| angular_distance(points[k], *p) >= threshold) {
            kept.push(i);
        }
    }
    Ok(kept)
}
