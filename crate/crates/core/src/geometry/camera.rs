use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Continuous image coordinate in pixels. Integer pixel `(col, row)` covers
/// `[col, col + 1) x [row, row + 1)` and has its centre at `(col + 0.5, row + 0.5)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

impl PixelCoord {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Full-sphere equirectangular camera.
///
/// Camera axes are x right, y down, z forward. Longitude `atan2(x, z)` maps
/// linearly onto `u`, latitude `asin(y / |p|)` onto `v`; the forward ray
/// lands on the image centre.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PanoramicCamera {
    width: usize,
    height: usize,
}

impl PanoramicCamera {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "camera size must be positive, got {width}x{height}"
            )));
        }
        if width != 2 * height {
            return Err(Error::InvalidInput(format!(
                "equirectangular camera needs width = 2 * height, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Angular size of one pixel in radians (identical in both directions).
    pub fn pixel_angle(&self) -> f64 {
        PI / self.height as f64
    }

    pub fn project(&self, p_cam: &Vector3<f64>) -> Result<PixelCoord> {
        let norm = p_cam.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidInput(format!(
                "cannot project point with norm {norm}"
            )));
        }
        Ok(self.project_unchecked(p_cam, norm))
    }

    fn project_unchecked(&self, p: &Vector3<f64>, norm: f64) -> PixelCoord {
        let w = self.width as f64;
        let h = self.height as f64;
        let lon = p.x.atan2(p.z);
        let lat = (p.y / norm).clamp(-1.0, 1.0).asin();
        let mut u = (lon / (2.0 * PI) + 0.5) * w;
        if u >= w {
            u -= w;
        }
        let mut v = (lat / PI + 0.5) * h;
        if v >= h {
            // only reachable for the exact nadir ray
            v = h * (1.0 - f64::EPSILON);
        }
        PixelCoord { u, v }
    }

    /// Unit viewing ray for a continuous pixel coordinate.
    pub fn bearing(&self, px: &PixelCoord) -> Vector3<f64> {
        let lon = (px.u / self.width as f64 - 0.5) * 2.0 * PI;
        let lat = (px.v / self.height as f64 - 0.5) * PI;
        let (sl, cl) = lat.sin_cos();
        let (so, co) = lon.sin_cos();
        Vector3::new(cl * so, sl, cl * co)
    }

    /// Back-projects a pixel at the given ray range (not z-depth).
    pub fn unproject(&self, px: &PixelCoord, depth: f64) -> Result<Vector3<f64>> {
        if !(depth > 0.0) || !depth.is_finite() {
            return Err(Error::InvalidInput(format!(
                "unproject needs a positive depth, got {depth}"
            )));
        }
        Ok(self.bearing(px) * depth)
    }

    pub fn pixel_center(&self, col: usize, row: usize) -> PixelCoord {
        PixelCoord::new(col as f64 + 0.5, row as f64 + 0.5)
    }

    /// Integer pixel containing `px`, or `None` outside the image.
    pub fn pixel_index(&self, px: &PixelCoord) -> Option<(usize, usize)> {
        if !(px.u >= 0.0 && px.v >= 0.0) {
            return None;
        }
        let (col, row) = (px.u.floor() as usize, px.v.floor() as usize);
        (col < self.width && row < self.height).then_some((col, row))
    }

    /// Wraps `u` into `[0, w)` (the panorama is periodic horizontally).
    pub fn wrap_u(&self, u: f64) -> f64 {
        let w = self.width as f64;
        let r = u.rem_euclid(w);
        if r >= w {
            0.0
        } else {
            r
        }
    }
}
