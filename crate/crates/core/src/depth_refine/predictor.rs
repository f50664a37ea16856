use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::maps::DenseDepthMap;
use crate::error::{Error, Result};
use crate::geometry::PanoramicCamera;
use crate::sensor_sim::ImageContext;

/// Coarse `cols x rows x channels` feature tensor, channel-fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid {
    pub cols: usize,
    pub rows: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureGrid {
    pub fn zeros(cols: usize, rows: usize, channels: usize) -> Self {
        Self {
            cols,
            rows,
            channels,
            data: vec![0.0; cols * rows * channels],
        }
    }

    pub fn cell(&self, col: usize, row: usize) -> &[f64] {
        let i = (row * self.cols + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn cell_mut(&mut self, col: usize, row: usize) -> &mut [f64] {
        let i = (row * self.cols + col) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// Channel-wise `S * f + B`.
    pub fn modulate(&self, params: &AuxiliaryParams) -> Result<FeatureGrid> {
        let mut out = self.clone();
        self.modulate_into(params, &mut out)?;
        Ok(out)
    }

    /// As [`FeatureGrid::modulate`], writing into an existing grid of the same shape.
    pub fn modulate_into(&self, params: &AuxiliaryParams, out: &mut FeatureGrid) -> Result<()> {
        if params.channels() != self.channels {
            return Err(Error::Config(format!(
                "auxiliary parameters have {} channels, features have {}",
                params.channels(),
                self.channels
            )));
        }
        assert_eq!(out.data.len(), self.data.len(), "feature grid shape");
        let (s, b) = (params.scales(), params.biases());
        for (dst, src) in out
            .data
            .chunks_exact_mut(self.channels)
            .zip(self.data.chunks_exact(self.channels))
        {
            for k in 0..self.channels {
                dst[k] = s[k] * src[k] + b[k];
            }
        }
        Ok(())
    }

    /// Modulates only the listed cells of `out`; other cells are left as they are.
    pub fn modulate_cells_into(&self, params: &AuxiliaryParams, cells: &[usize], out: &mut FeatureGrid) -> Result<()> {
        if params.channels() != self.channels {
            return Err(Error::Config(format!(
                "auxiliary parameters have {} channels, features have {}",
                params.channels(),
                self.channels
            )));
        }
        let ch = self.channels;
        let (s, b) = (params.scales(), params.biases());
        for i in cells {
            let src = &self.data[i * ch..(i + 1) * ch];
            let dst = &mut out.data[i * ch..(i + 1) * ch];
            for k in 0..ch {
                dst[k] = s[k] * src[k] + b[k];
            }
        }
        Ok(())
    }
}

/// Channel-wise scales and biases, stored as `X = [S; B]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxiliaryParams {
    x: Vec<f64>,
}

impl AuxiliaryParams {
    /// `S = 1`, `B = 0`.
    pub fn identity(channels: usize) -> Self {
        let mut x = vec![0.0; 2 * channels];
        x[..channels].fill(1.0);
        Self { x }
    }

    pub fn from_vec(x: Vec<f64>) -> Result<Self> {
        if x.is_empty() || x.len() % 2 != 0 {
            return Err(Error::Config(format!(
                "auxiliary parameter vector must have even, non-zero length, got {}",
                x.len()
            )));
        }
        Ok(Self { x })
    }

    pub fn channels(&self) -> usize {
        self.x.len() / 2
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn scales(&self) -> &[f64] {
        &self.x[..self.channels()]
    }

    pub fn biases(&self) -> &[f64] {
        &self.x[self.channels()..]
    }

    /// `X + delta`.
    pub fn offset(&self, delta: &[f64]) -> Self {
        assert_eq!(delta.len(), self.x.len());
        Self {
            x: self.x.iter().zip(delta).map(|(a, b)| a + b).collect(),
        }
    }
}

/// Frozen dense-depth network split into a feature body and a depth head.
pub trait DepthPredictor {
    fn channels(&self) -> usize;

    /// Output image size `(width, height)`.
    fn output_size(&self) -> (usize, usize);

    fn body(&self, image: &ImageContext) -> FeatureGrid;

    /// Dense depth for the whole image; must be positive everywhere.
    fn head(&self, features: &FeatureGrid) -> DenseDepthMap;

    /// Depth at selected integer pixels. Implementations may avoid
    /// evaluating the full image.
    fn head_at(&self, features: &FeatureGrid, pixels: &[(usize, usize)]) -> Vec<f64> {
        let full = self.head(features);
        pixels
            .iter()
            .map(|(c, r)| full.get(*c, *r).expect("head output is valid everywhere"))
            .collect()
    }

    /// Precomputes whatever `head_planned` needs to evaluate the same pixel
    /// set repeatedly.
    fn plan(&self, pixels: &[(usize, usize)]) -> SamplePlan {
        SamplePlan::direct(pixels)
    }

    fn head_planned(&self, features: &FeatureGrid, plan: &SamplePlan) -> Vec<f64> {
        self.head_at(features, &plan.pixels)
    }
}

/// Pixel set prepared for repeated head evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePlan {
    pub pixels: Vec<(usize, usize)>,
    /// Optional per-pixel feature-cell taps `(cell index, weight)`.
    pub taps: Vec<[(usize, f64); 4]>,
    /// Feature cells referenced by `taps`, ascending.
    pub cells: Vec<usize>,
}

impl SamplePlan {
    pub fn direct(pixels: &[(usize, usize)]) -> Self {
        Self {
            pixels: pixels.to_vec(),
            taps: Vec::new(),
            cells: Vec::new(),
        }
    }
}

/// `H(S * G(image) + B)`.
pub fn predict<P: DepthPredictor + ?Sized>(
    predictor: &P,
    image: &ImageContext,
    params: &AuxiliaryParams,
) -> Result<DenseDepthMap> {
    let features = predictor.body(image).modulate(params)?;
    Ok(predictor.head(&features))
}

/// Stand-in predictor: channel 0 carries the coarse log-range of the scene,
/// the remaining channels are smooth seed-drawn patterns on the sphere. The
/// head is a fixed linear map to log-depth per grid cell, `exp`, then
/// bilinear upsampling, so outputs are always positive.
#[derive(Clone, Debug)]
pub struct ToyPredictor {
    width: usize,
    height: usize,
    cols: usize,
    rows: usize,
    /// Per basis channel: longitude frequency, latitude frequency, two phases.
    basis: Vec<(f64, f64, f64, f64)>,
    weights: Vec<f64>,
    log_bias: f64,
}

pub const TOY_CHANNELS: usize = 16;
/// Multiplicative depth bias of the default toy predictor.
pub const TOY_DEPTH_BIAS: f64 = 1.08;

impl ToyPredictor {
    pub fn new(cam: &PanoramicCamera, seed: u64) -> Self {
        Self::with_bias(cam, seed, TOY_DEPTH_BIAS)
    }

    /// Predictor whose output is scaled by `depth_factor` relative to the
    /// scene's range (before the basis perturbation).
    pub fn with_bias(cam: &PanoramicCamera, seed: u64, depth_factor: f64) -> Self {
        assert!(depth_factor > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = (1..TOY_CHANNELS)
            .map(|_| {
                (
                    rng.random_range(1..=4) as f64,
                    rng.random_range(0.5..3.0),
                    rng.random_range(0.0..2.0 * PI),
                    rng.random_range(0.0..2.0 * PI),
                )
            })
            .collect();
        let mut weights = vec![1.0];
        weights.extend((1..TOY_CHANNELS).map(|_| rng.random_range(-0.06..0.06)));
        Self {
            width: cam.width(),
            height: cam.height(),
            cols: cam.width() / 8,
            rows: cam.height() / 8,
            basis,
            weights,
            log_bias: depth_factor.ln(),
        }
    }

    fn cell_depth(&self, f: &[f64]) -> f64 {
        (self.log_bias + f.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>()).exp()
    }

    fn cell_depths(&self, features: &FeatureGrid) -> Vec<f64> {
        features
            .data
            .chunks_exact(features.channels)
            .map(|f| self.cell_depth(f))
            .collect()
    }

    /// Bilinear taps of the coarse grid at a pixel centre. Columns wrap
    /// around the seam, rows clamp.
    fn taps(&self, col: usize, row: usize) -> [(usize, f64); 4] {
        let sx = self.width as f64 / self.cols as f64;
        let sy = self.height as f64 / self.rows as f64;
        let gx = (col as f64 + 0.5) / sx - 0.5;
        let gy = ((row as f64 + 0.5) / sy - 0.5).clamp(0.0, (self.rows - 1) as f64);
        let x0 = gx.floor();
        let fx = gx - x0;
        let y0 = gy.floor();
        let fy = gy - y0;
        let x0i = (x0 as i64).rem_euclid(self.cols as i64) as usize;
        let x1i = (x0i + 1) % self.cols;
        let y0i = y0 as usize;
        let y1i = (y0i + 1).min(self.rows - 1);
        [
            (y0i * self.cols + x0i, (1.0 - fy) * (1.0 - fx)),
            (y0i * self.cols + x1i, (1.0 - fy) * fx),
            (y1i * self.cols + x0i, fy * (1.0 - fx)),
            (y1i * self.cols + x1i, fy * fx),
        ]
    }

    fn upsample(cells: &[f64], taps: &[(usize, f64); 4]) -> f64 {
        taps.iter().map(|(i, w)| w * cells[*i]).sum()
    }
}

impl DepthPredictor for ToyPredictor {
    fn channels(&self) -> usize {
        TOY_CHANNELS
    }

    fn output_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn body(&self, image: &ImageContext) -> FeatureGrid {
        assert_eq!((image.cols, image.rows), (self.cols, self.rows), "context grid size");
        let mut g = FeatureGrid::zeros(self.cols, self.rows, TOY_CHANNELS);
        for r in 0..self.rows {
            let lat = ((r as f64 + 0.5) / self.rows as f64 - 0.5) * PI;
            for c in 0..self.cols {
                let lon = ((c as f64 + 0.5) / self.cols as f64 - 0.5) * 2.0 * PI;
                let cell = g.cell_mut(c, r);
                cell[0] = image.at(c, r);
                for (k, (a, b, p, q)) in self.basis.iter().enumerate() {
                    cell[k + 1] = (a * lon + p).cos() * (b * lat + q).cos();
                }
            }
        }
        g
    }

    fn head(&self, features: &FeatureGrid) -> DenseDepthMap {
        let cells = self.cell_depths(features);
        let mut depth = Vec::with_capacity(self.width * self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                depth.push(Self::upsample(&cells, &self.taps(c, r)));
            }
        }
        DenseDepthMap::from_values(self.width, self.height, depth)
    }

    fn head_at(&self, features: &FeatureGrid, pixels: &[(usize, usize)]) -> Vec<f64> {
        self.head_planned(features, &self.plan(pixels))
    }

    fn plan(&self, pixels: &[(usize, usize)]) -> SamplePlan {
        let taps: Vec<_> = pixels.iter().map(|(c, r)| self.taps(*c, *r)).collect();
        let mut cells: Vec<usize> = taps.iter().flatten().map(|(i, _)| *i).collect();
        cells.sort_unstable();
        cells.dedup();
        SamplePlan {
            pixels: pixels.to_vec(),
            taps,
            cells,
        }
    }

    fn head_planned(&self, features: &FeatureGrid, plan: &SamplePlan) -> Vec<f64> {
        let ch = features.channels;
        let mut cells = vec![0.0; features.cols * features.rows];
        for i in &plan.cells {
            let f = &features.data[i * ch..(i + 1) * ch];
            cells[*i] = self.cell_depth(f);
        }
        plan.taps.iter().map(|t| Self::upsample(&cells, t)).collect()
    }
}
