use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geometry::PoseSE3;

/// Time-stamped camera-to-world poses with strictly increasing timestamps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    stamps: Vec<f64>,
    poses: Vec<PoseSE3>,
}

impl Trajectory {
    pub fn new(samples: Vec<(f64, PoseSE3)>) -> Result<Self> {
        let mut t = Self::default();
        for (stamp, pose) in samples {
            t.push(stamp, pose)?;
        }
        Ok(t)
    }

    pub fn push(&mut self, stamp: f64, pose: PoseSE3) -> Result<()> {
        if !stamp.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite timestamp {stamp}")));
        }
        if let Some(last) = self.stamps.last() {
            if stamp <= *last {
                return Err(Error::InvalidInput(format!(
                    "timestamps must increase strictly ({stamp} after {last})"
                )));
            }
        }
        self.stamps.push(stamp);
        self.poses.push(pose);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    pub fn stamps(&self) -> &[f64] {
        &self.stamps
    }

    pub fn poses(&self) -> &[PoseSE3] {
        &self.poses
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(|p| p.translation).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &PoseSE3)> {
        self.stamps.iter().copied().zip(&self.poses)
    }

    /// Applies `f` to every pose, keeping timestamps.
    pub fn map_poses(&self, f: impl Fn(&PoseSE3) -> PoseSE3) -> Self {
        Self {
            stamps: self.stamps.clone(),
            poses: self.poses.iter().map(f).collect(),
        }
    }

    /// Cumulative path length at each pose.
    pub fn arc_lengths(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.len());
        for (i, p) in self.poses.iter().enumerate() {
            if i > 0 {
                acc += (p.translation - self.poses[i - 1].translation).norm();
            }
            out.push(acc);
        }
        out
    }

    /// Renders the interchange format: `timestamp tx ty tz qx qy qz qw`.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# timestamp tx ty tz qx qy qz qw\n");
        for (t, p) in self.iter() {
            let q = p.rotation.quaternion();
            let tr = p.translation;
            writeln!(
                s,
                "{t:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
                tr.x, tr.y, tr.z, q.i, q.j, q.k, q.w
            )
            .unwrap();
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut traj = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(path, i + 1, format!("bad number: {e}")))?;
            if vals.len() != 8 {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected 8 fields (timestamp tx ty tz qx qy qz qw), got {}", vals.len()),
                ));
            }
            let q = Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
            if !(q.norm() > 1e-9) {
                return Err(Error::parse(path, i + 1, "zero quaternion"));
            }
            let pose = PoseSE3::new(
                UnitQuaternion::from_quaternion(q),
                Vector3::new(vals[1], vals[2], vals[3]),
            );
            traj.push(vals[0], pose)
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        }
        Ok(traj)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
