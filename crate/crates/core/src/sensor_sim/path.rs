use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};

use crate::error::Error;
use crate::geometry::PoseSE3;

/// Synthetic drive scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Stadium-shaped closed loop, 1 km.
    Loop1km,
    /// Straight road, 500 m.
    Straight500m,
    /// Self-crossing figure eight.
    FigureEight,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Loop1km, Scenario::Straight500m, Scenario::FigureEight];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Loop1km => "loop_1km",
            Scenario::Straight500m => "straight_500m",
            Scenario::FigureEight => "figure_eight",
        }
    }

    pub fn path(&self) -> DrivePath {
        match self {
            Scenario::Loop1km => DrivePath::stadium(80.0, 1000.0),
            Scenario::Straight500m => DrivePath::straight(500.0),
            Scenario::FigureEight => DrivePath::figure_eight(110.0),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown scenario '{s}' (expected loop_1km, straight_500m or figure_eight)"
                ))
            })
    }
}

/// Planar drive path parameterised by arc length, stored as a dense polyline.
#[derive(Clone, Debug)]
pub struct DrivePath {
    points: Vec<Vector2<f64>>,
    arc: Vec<f64>,
    closed: bool,
}

const SAMPLES: usize = 20_000;

impl DrivePath {
    fn from_parametric(closed: bool, f: impl Fn(f64) -> Vector2<f64>) -> Self {
        let n = if closed { SAMPLES } else { SAMPLES + 1 };
        let mut points: Vec<Vector2<f64>> = (0..n).map(|i| f(i as f64 / SAMPLES as f64)).collect();
        if closed {
            // close the polyline explicitly so the arc table covers the final chord
            points.push(points[0]);
        }
        let mut arc = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        arc.push(0.0);
        for w in points.windows(2) {
            acc += (w[1] - w[0]).norm();
            arc.push(acc);
        }
        Self { points, arc, closed }
    }

    pub fn straight(length: f64) -> Self {
        Self::from_parametric(false, |t| Vector2::new(t * length, 0.0))
    }

    /// Two straights joined by half circles of `radius`, total length `length`.
    /// Starts mid-way along the lower straight heading +x, turning left.
    pub fn stadium(radius: f64, length: f64) -> Self {
        let straight = (length - 2.0 * PI * radius) / 2.0;
        assert!(straight > 0.0, "stadium too short for its radius");
        let half = straight / 2.0;
        let arc_len = PI * radius;
        Self::from_parametric(true, move |t| {
            let mut s = t * length;
            if s < half {
                return Vector2::new(s, 0.0);
            }
            s -= half;
            if s < arc_len {
                let a = s / radius;
                return Vector2::new(half + radius * a.sin(), radius - radius * a.cos());
            }
            s -= arc_len;
            if s < straight {
                return Vector2::new(half - s, 2.0 * radius);
            }
            s -= straight;
            if s < arc_len {
                let a = s / radius;
                return Vector2::new(-half - radius * a.sin(), radius + radius * a.cos());
            }
            s -= arc_len;
            Vector2::new(-half + s, 0.0)
        })
    }

    /// Lemniscate of Gerono with lobe half-width `a`; crosses itself at the origin.
    pub fn figure_eight(a: f64) -> Self {
        Self::from_parametric(true, move |t| {
            let th = t * 2.0 * PI;
            Vector2::new(a * th.sin(), a * th.sin() * th.cos())
        })
    }

    pub fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    fn normalise(&self, s: f64) -> f64 {
        let len = self.length();
        if self.closed {
            s.rem_euclid(len)
        } else {
            s.clamp(0.0, len)
        }
    }

    pub fn position(&self, s: f64) -> Vector2<f64> {
        let s = self.normalise(s);
        let i = match self.arc.binary_search_by(|a| a.total_cmp(&s)) {
            Ok(i) => return self.points[i],
            Err(i) => i.clamp(1, self.arc.len() - 1),
        };
        let (a0, a1) = (self.arc[i - 1], self.arc[i]);
        let f = if a1 > a0 { (s - a0) / (a1 - a0) } else { 0.0 };
        self.points[i - 1] * (1.0 - f) + self.points[i] * f
    }

    /// Heading angle (radians, CCW from +x) from a centred difference.
    pub fn heading(&self, s: f64) -> f64 {
        const H: f64 = 1.0;
        let (lo, hi) = if self.closed {
            (s - H, s + H)
        } else {
            let len = self.length();
            ((s - H).max(0.0), (s + H).min(len))
        };
        let d = self.position(hi) - self.position(lo);
        d.y.atan2(d.x)
    }

    /// Unit normal pointing to the left of travel.
    pub fn left_normal(&self, s: f64) -> Vector2<f64> {
        let h = self.heading(s);
        Vector2::new(-h.sin(), h.cos())
    }

    /// Samples the path every `step` metres (inclusive of the end for open paths).
    pub fn samples(&self, step: f64) -> Vec<Vector2<f64>> {
        let n = (self.length() / step).floor() as usize;
        (0..=n).map(|i| self.position(i as f64 * step)).collect()
    }
}

/// Camera-to-world pose of a forward-looking camera at `height` above a
/// point with the given heading. World frame is x east, y north, z up.
pub fn vehicle_camera_pose(position: &Vector2<f64>, heading: f64, height: f64) -> PoseSE3 {
    let forward = Vector3::new(heading.cos(), heading.sin(), 0.0);
    let up = Vector3::z();
    let right = forward.cross(&up);
    let down = -up;
    let r = Matrix3::from_columns(&[right, down, forward]);
    PoseSE3::new(
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r)),
        Vector3::new(position.x, position.y, height),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn stadium_length_and_closure() {
        let p = DrivePath::stadium(80.0, 1000.0);
        assert_relative_eq!(p.length(), 1000.0, epsilon = 0.05);
        assert_relative_eq!((p.position(0.0) - p.position(p.length())).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn heading_follows_travel() {
        let p = DrivePath::straight(500.0);
        assert_relative_eq!(p.heading(10.0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.position(123.0), Vector2::new(123.0, 0.0), epsilon = 1e-9);
    }

    #[test]
    fn scenario_names_round_trip() {
        for sc in Scenario::ALL {
            assert_eq!(sc.name().parse::<Scenario>().unwrap(), sc);
        }
        assert!("loop_2km".parse::<Scenario>().is_err());
    }

    #[test]
    fn camera_looks_along_heading() {
        let pose = vehicle_camera_pose(&Vector2::new(1.0, 2.0), PI / 2.0, 2.0);
        let fwd = pose.transform_vector(&Vector3::z());
        assert_relative_eq!(fwd, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
        let down = pose.transform_vector(&Vector3::y());
        assert_relative_eq!(down, Vector3::new(0.0, 0.0, -1.0), epsilon = 1e-12);
    }
}
