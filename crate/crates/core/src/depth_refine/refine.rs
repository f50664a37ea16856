use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::correct::{correct, SiteInterpolant};
use super::maps::DenseDepthMap;
use super::predictor::{predict, AuxiliaryParams, DepthPredictor};
use super::pso::{minimize, PsoConfig};
use crate::error::{Error, Result};
use crate::sensor_sim::{ImageContext, PixelMask, SparseDepthMap};

/// Fewest valid sparse pixels that still allow a correction/validation split.
pub const MIN_REFINE_PIXELS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub enum RefineStatus {
    /// PSO ran; the map is the corrected prediction at the best parameters.
    Refined,
    /// Too few sparse pixels to split; stage-one correction only.
    Skipped,
    /// Correction impossible; the raw prediction restricted to the overlap.
    Uncorrected,
}

#[derive(Clone, Debug)]
pub struct Refinement {
    pub depth: DenseDepthMap,
    pub params: AuxiliaryParams,
    pub status: RefineStatus,
    /// Validation error at the starting parameters.
    pub initial_cost: Option<f64>,
    pub final_cost: Option<f64>,
    /// Global-best validation error per PSO iteration.
    pub history: Vec<f64>,
}

/// Seed-fixed 50/50 split of sparse entry indices into (correction, validation).
pub fn split_sparse(count: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let half = count.div_ceil(2);
    let mut corr = idx[..half].to_vec();
    let mut val = idx[half..].to_vec();
    corr.sort_unstable();
    val.sort_unstable();
    (corr, val)
}

/// Validation error of the corrected prediction as a function of the
/// auxiliary parameters, with the interpolation weights precomputed.
struct ValidationCost<'a, P: DepthPredictor + ?Sized> {
    predictor: &'a P,
    features: super::FeatureGrid,
    plan: super::SamplePlan,
    /// Position of every correction site within `pixels`.
    corr_pos: Vec<usize>,
    corr_depth: Vec<f64>,
    /// Per validation pixel: position in `pixels`, sparse depth, site weights.
    val: Vec<(usize, f64, Vec<(usize, f64)>)>,
}

impl<'a, P: DepthPredictor + ?Sized> ValidationCost<'a, P> {
    fn new(
        predictor: &'a P,
        image: &ImageContext,
        sparse: &SparseDepthMap,
        corr: &[usize],
        val: &[usize],
    ) -> Result<Self> {
        let corr_sites: Vec<(usize, usize)> = corr.iter().map(|i| sparse.entries[*i].0).collect();
        let mut interp = SiteInterpolant::new(&corr_sites)?;
        let mut pixels = corr_sites.clone();
        let corr_pos: Vec<usize> = (0..corr.len()).collect();
        let corr_depth = corr.iter().map(|i| sparse.entries[*i].1).collect();
        let mut val_out = Vec::with_capacity(val.len());
        let mut buf = Vec::with_capacity(3);
        for i in val {
            let ((c, r), d) = sparse.entries[*i];
            interp.weights(c, r, &mut buf);
            val_out.push((pixels.len(), d, buf.clone()));
            pixels.push((c, r));
        }
        Ok(Self {
            predictor,
            features: predictor.body(image),
            plan: predictor.plan(&pixels),
            corr_pos,
            corr_depth,
            val: val_out,
        })
    }

    fn eval(&self, params: &AuxiliaryParams, scratch: &mut super::FeatureGrid) -> f64 {
        let modulated = if self.plan.taps.is_empty() {
            self.features.modulate_into(params, scratch)
        } else {
            // the planned head reads only these cells
            self.features.modulate_cells_into(params, &self.plan.cells, scratch)
        };
        if modulated.is_err() {
            return f64::INFINITY;
        }
        let pred = self.predictor.head_planned(scratch, &self.plan);
        let resid: Vec<f64> = self
            .corr_pos
            .iter()
            .zip(&self.corr_depth)
            .map(|(p, s)| s - pred[*p])
            .collect();
        let mut err = 0.0;
        for (p, s, w) in &self.val {
            let d = pred[*p] + w.iter().map(|(i, a)| a * resid[*i]).sum::<f64>();
            err += (d - s).abs() / s;
        }
        err / self.val.len() as f64
    }
}

fn masked(pred: &DenseDepthMap, overlap: &PixelMask) -> DenseDepthMap {
    let mut out = DenseDepthMap::new(pred.width, pred.height);
    for (c, r) in overlap.iter_set() {
        if let Some(d) = pred.get(c, r) {
            out.set(c, r, d);
        }
    }
    out
}

/// Stage-one correction with every sparse pixel, falling back to the raw
/// prediction inside the overlap when correction is impossible.
fn stage_one(
    pred: &DenseDepthMap,
    sparse: &SparseDepthMap,
    overlap: &PixelMask,
) -> Result<(DenseDepthMap, bool)> {
    let all: Vec<usize> = (0..sparse.len()).collect();
    match correct(pred, sparse, &all, overlap) {
        Ok((d, _)) => Ok((d, true)),
        Err(Error::CorrectionUnavailable(_)) => Ok((masked(pred, overlap), false)),
        Err(e) => Err(e),
    }
}

/// Two-stage refinement of one frame.
///
/// PSO searches offsets `dX` around `x0`; each candidate is scored by the
/// mean absolute relative error on the validation half after correcting
/// with the other half. The returned map is the stage-one correction (all
/// sparse pixels) of the prediction at the best parameters.
pub fn refine<P: DepthPredictor + ?Sized>(
    predictor: &P,
    image: &ImageContext,
    sparse: &SparseDepthMap,
    overlap: &PixelMask,
    x0: &AuxiliaryParams,
    pso: &PsoConfig,
    split_seed: u64,
) -> Result<Refinement> {
    if x0.channels() != predictor.channels() {
        return Err(Error::Config(format!(
            "initial parameters have {} channels, predictor has {}",
            x0.channels(),
            predictor.channels()
        )));
    }
    if sparse.len() < MIN_REFINE_PIXELS {
        let pred = predict(predictor, image, x0)?;
        let (depth, ok) = stage_one(&pred, sparse, overlap)?;
        return Ok(Refinement {
            depth,
            params: x0.clone(),
            status: if ok { RefineStatus::Skipped } else { RefineStatus::Uncorrected },
            initial_cost: None,
            final_cost: None,
            history: Vec::new(),
        });
    }
    let (corr, val) = split_sparse(sparse.len(), split_seed);
    let cost = match ValidationCost::new(predictor, image, sparse, &corr, &val) {
        Ok(c) => c,
        Err(Error::CorrectionUnavailable(_)) => {
            let pred = predict(predictor, image, x0)?;
            let (depth, ok) = stage_one(&pred, sparse, overlap)?;
            return Ok(Refinement {
                depth,
                params: x0.clone(),
                status: if ok { RefineStatus::Skipped } else { RefineStatus::Uncorrected },
                initial_cost: None,
                final_cost: None,
                history: Vec::new(),
            });
        }
        Err(e) => return Err(e),
    };
    let mut scratch = cost.features.clone();
    let initial = cost.eval(x0, &mut scratch);
    let (params, final_cost, history) = if pso.iterations == 0 {
        // no search budget: keep the starting parameters
        pso.validate()?;
        (x0.clone(), initial, vec![initial])
    } else {
        let out = minimize(2 * predictor.channels(), pso, |dx| cost.eval(&x0.offset(dx), &mut scratch))?;
        if out.best_cost < initial {
            (x0.offset(&out.best), out.best_cost, out.history)
        } else {
            (x0.clone(), initial, out.history)
        }
    };
    let pred = predict(predictor, image, &params)?;
    let (depth, ok) = stage_one(&pred, sparse, overlap)?;
    Ok(Refinement {
        depth,
        params,
        status: if ok { RefineStatus::Refined } else { RefineStatus::Uncorrected },
        initial_cost: Some(initial),
        final_cost: Some(final_cost),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth_refine::ToyPredictor;
    use crate::geometry::PanoramicCamera;
    use crate::sensor_sim::{overlap_region, render_context, simulate_lidar, vehicle_camera_pose, RigCalibration, SurfaceModel};
    use nalgebra::Vector2;

    #[test]
    fn split_is_half_and_disjoint() {
        let (c, v) = split_sparse(11, 4);
        assert_eq!(c.len(), 6);
        assert_eq!(v.len(), 5);
        assert!(c.iter().all(|i| !v.contains(i)));
        assert_eq!(split_sparse(11, 4), (c, v));
    }

    fn scene() -> (PanoramicCamera, ImageContext, SparseDepthMap) {
        let cam = PanoramicCamera::new(128, 64).unwrap();
        let pose = vehicle_camera_pose(&Vector2::zeros(), 0.0, 2.0);
        let surf = SurfaceModel::flat();
        let ctx = render_context(&surf, &pose, &cam, 16, 8);
        let sparse = simulate_lidar(
            &surf,
            &pose,
            &RigCalibration::default(),
            &cam,
            0.0,
            &mut <ChaCha8Rng as SeedableRng>::seed_from_u64(0),
        );
        (cam, ctx, sparse)
    }

    #[test]
    fn too_few_pixels_skips() {
        let (cam, ctx, sparse) = scene();
        let few = SparseDepthMap::new(128, 64, sparse.entries.iter().step_by(sparse.len() / 5).take(5).copied().collect()).unwrap();
        let p = ToyPredictor::new(&cam, 1);
        let r = refine(&p, &ctx, &few, &overlap_region(&few, 8), &AuxiliaryParams::identity(16), &PsoConfig::default(), 0).unwrap();
        assert_eq!(r.status, RefineStatus::Skipped);
        assert!(r.history.is_empty());
    }

    #[test]
    fn zero_iterations_is_stage_one() {
        let (cam, ctx, sparse) = scene();
        let p = ToyPredictor::new(&cam, 1);
        let overlap = overlap_region(&sparse, 8);
        let pso = PsoConfig {
            iterations: 0,
            ..Default::default()
        };
        let x0 = AuxiliaryParams::identity(16);
        let r = refine(&p, &ctx, &sparse, &overlap, &x0, &pso, 3).unwrap();
        let all: Vec<usize> = (0..sparse.len()).collect();
        let (expected, _) = correct(&predict(&p, &ctx, &x0).unwrap(), &sparse, &all, &overlap).unwrap();
        assert_eq!(r.depth, expected);
        assert_eq!(r.params, x0);
    }

    #[test]
    fn cost_never_increases() {
        let (cam, ctx, sparse) = scene();
        let p = ToyPredictor::new(&cam, 1);
        let pso = PsoConfig {
            iterations: 8,
            swarm_size: 8,
            ..Default::default()
        };
        let r = refine(&p, &ctx, &sparse, &overlap_region(&sparse, 8), &AuxiliaryParams::identity(16), &pso, 3).unwrap();
        assert_eq!(r.status, RefineStatus::Refined);
        assert!(r.final_cost.unwrap() <= r.initial_cost.unwrap());
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }
}
