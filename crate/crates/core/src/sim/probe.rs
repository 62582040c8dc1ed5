use super::{SimError, Vec3};

/// One glance: entry ordinate on the probe line and a unit direction with `U_z < 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeRequest {
    pub py: f64,
    pub u: Vec3,
}

impl ProbeRequest {
    /// `(Py, Ux, Uy, Uz)`, the row stored in the request sequence.
    pub fn to_row(&self) -> [f64; 4] {
        [self.py, self.u.x, self.u.y, self.u.z]
    }
}

/// Simulator response: touched point (or ray endpoint on a miss) and touch flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollectedPoint {
    pub point: Vec3,
    pub touched: bool,
}

impl CollectedPoint {
    /// `(X, Y, Z, T)`.
    pub fn to_row(&self) -> [f64; 4] {
        [
            self.point.x,
            self.point.y,
            self.point.z,
            if self.touched { 1.0 } else { 0.0 },
        ]
    }
}

/// Maps a policy output in `[-1, 1]^4` to a physical probe.
///
/// `Py = a0`; the direction is `(a1, a2, -(0.2 + 0.4 (a3 + 1)))`, normalized, so the
/// vertical component never rises above `-0.2` before normalization.
pub fn action_to_probe(a: [f64; 4]) -> Result<ProbeRequest, SimError> {
    for (index, &value) in a.iter().enumerate() {
        if !(-1.0..=1.0).contains(&value) {
            return Err(SimError::InvalidAction { index, value });
        }
    }
    let raw = Vec3::new(a[1], a[2], -(0.2 + 0.8 * (a[3] + 1.0) / 2.0));
    let n = raw.norm();
    if n < 1e-9 {
        return Err(SimError::DegenerateDirection);
    }
    Ok(ProbeRequest { py: a[0], u: raw * (1.0 / n) })
}
