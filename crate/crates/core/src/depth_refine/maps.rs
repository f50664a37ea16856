use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PDGR";

/// Dense per-pixel ray range with a validity flag.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseDepthMap {
    pub width: usize,
    pub height: usize,
    depth: Vec<f64>,
    valid: Vec<bool>,
}

impl DenseDepthMap {
    /// All pixels invalid.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    /// All pixels valid; panics on a length mismatch.
    pub fn from_values(width: usize, height: usize, depth: Vec<f64>) -> Self {
        assert_eq!(depth.len(), width * height, "depth buffer size");
        Self {
            width,
            height,
            depth,
            valid: vec![true; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        let i = row * self.width + col;
        self.valid[i].then_some(self.depth[i])
    }

    /// Stores `depth`, or marks the pixel invalid if it is not a positive
    /// finite range.
    pub fn set(&mut self, col: usize, row: usize, depth: f64) {
        let i = row * self.width + col;
        let ok = depth > 0.0 && depth.is_finite();
        self.depth[i] = if ok { depth } else { 0.0 };
        self.valid[i] = ok;
    }

    pub fn invalidate(&mut self, col: usize, row: usize) {
        let i = row * self.width + col;
        self.depth[i] = 0.0;
        self.valid[i] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Bilinear sample at a continuous pixel coordinate (pixel centres at
    /// `+0.5`). Needs all contributing neighbours valid; falls back to the
    /// containing pixel otherwise.
    pub fn sample(&self, u: f64, v: f64) -> Option<f64> {
        let (w, h) = (self.width as i64, self.height as i64);
        let gx = u - 0.5;
        let gy = v - 0.5;
        let x0 = gx.floor();
        let y0 = gy.floor();
        let fx = gx - x0;
        let fy = gy - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let mut acc = 0.0;
        let mut ok = true;
        for (dx, dy, wgt) in [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            let x = (x0 + dx).rem_euclid(w) as usize;
            let y = (y0 + dy).clamp(0, h - 1) as usize;
            match self.get(x, y) {
                Some(d) => acc += wgt * d,
                None if wgt > 0.0 => {
                    ok = false;
                    break;
                }
                None => {}
            }
        }
        if ok {
            return Some(acc);
        }
        let col = (u.floor() as i64).rem_euclid(w) as usize;
        let row = (v.floor() as i64).clamp(0, h - 1) as usize;
        self.get(col, row)
    }

    /// Binary grid: magic `PDGR`, `u32` LE width and height, row-major `f64`
    /// LE depths, then a validity bitmap (row-major, LSB first).
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(12 + 8 * n + n.div_ceil(8));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for d in &self.depth {
            out.extend_from_slice(&d.to_le_bytes());
        }
        let mut bits = vec![0u8; n.div_ceil(8)];
        for (i, v) in self.valid.iter().enumerate() {
            if *v {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&bits);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::InvalidInput(format!("depth grid: {m}"));
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(bad("missing header"));
        }
        let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let n = width * height;
        if bytes.len() != 12 + 8 * n + n.div_ceil(8) {
            return Err(bad("size does not match dimensions"));
        }
        let depth: Vec<f64> = bytes[12..12 + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let bits = &bytes[12 + 8 * n..];
        let valid = (0..n).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(Self {
            width,
            height,
            depth,
            valid,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Dense residual field; `NaN` marks pixels where it is undefined.
#[derive(Clone, Debug)]
pub struct CorrectionMap {
    pub width: usize,
    pub height: usize,
    delta: Vec<f64>,
}

impl CorrectionMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            delta: vec![f64::NAN; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        let d = self.delta[row * self.width + col];
        (!d.is_nan()).then_some(d)
    }

    pub fn set(&mut self, col: usize, row: usize, delta: f64) {
        self.delta[row * self.width + col] = delta;
    }

    pub fn defined_count(&self) -> usize {
        self.delta.iter().filter(|d| !d.is_nan()).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let mut m = DenseDepthMap::new(5, 3);
        m.set(0, 0, 1.5);
        m.set(4, 2, 7.25);
        m.set(2, 1, -1.0);
        let back = DenseDepthMap::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.valid_count(), 2);
        assert!(back.get(2, 1).is_none());
    }

    #[test]
    fn golden_bytes() {
        let m = DenseDepthMap::from_values(2, 1, vec![1.0, 2.0]);
        let b = m.to_bytes();
        assert_eq!(&b[..4], b"PDGR");
        assert_eq!(&b[4..12], &[2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&b[12..20], &1.0f64.to_le_bytes());
        assert_eq!(b[28], 0b11);
        assert_eq!(b.len(), 29);
        assert!(DenseDepthMap::from_bytes(&b[..20]).is_err());
    }

    #[test]
    fn bilinear_sampling() {
        let m = DenseDepthMap::from_values(4, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(m.sample(1.5, 0.5), Some(2.0));
        assert!((m.sample(1.0, 1.0).unwrap() - 3.5).abs() < 1e-12);
        // wraps across the seam
        assert!((m.sample(0.0, 0.5).unwrap() - 2.5).abs() < 1e-12);
    }
}
