use spade::{DelaunayTriangulation, FloatTriangulation, HasPosition, Point2, Triangulation};

use super::maps::{CorrectionMap, DenseDepthMap};
use crate::error::{Error, Result};
use crate::sensor_sim::{PixelMask, SparseDepthMap};

#[derive(Clone, Copy, Debug)]
struct Site {
    pos: Point2<f64>,
    index: usize,
}

impl HasPosition for Site {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        self.pos
    }
}

/// Piecewise-linear interpolant over the Delaunay triangulation of a set of
/// integer pixels, extended by nearest-vertex values outside the hull.
pub struct SiteInterpolant {
    tri: DelaunayTriangulation<Site>,
    sites: Vec<(usize, usize)>,
    buf: Vec<(spade::handles::FixedVertexHandle, f64)>,
}

impl SiteInterpolant {
    /// Fails with `CorrectionUnavailable` when fewer than three
    /// non-collinear sites are given.
    pub fn new(sites: &[(usize, usize)]) -> Result<Self> {
        let mut tri = DelaunayTriangulation::<Site>::new();
        for (i, (c, r)) in sites.iter().enumerate() {
            tri.insert(Site {
                pos: Point2::new(*c as f64 + 0.5, *r as f64 + 0.5),
                index: i,
            })
            .map_err(|e| Error::CorrectionUnavailable(format!("bad site ({c}, {r}): {e:?}")))?;
        }
        if tri.num_inner_faces() == 0 {
            return Err(Error::CorrectionUnavailable(format!(
                "need at least 3 non-collinear correction pixels, got {}",
                sites.len()
            )));
        }
        Ok(Self {
            tri,
            sites: sites.to_vec(),
            buf: Vec::with_capacity(3),
        })
    }

    pub fn sites(&self) -> &[(usize, usize)] {
        &self.sites
    }

    /// Site weights at the centre of pixel `(col, row)`; they sum to one.
    pub fn weights(&mut self, col: usize, row: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let p = Point2::new(col as f64 + 0.5, row as f64 + 0.5);
        self.tri.barycentric().get_weights(p, &mut self.buf);
        if self.buf.is_empty() {
            let v = self
                .tri
                .nearest_neighbor(p)
                .expect("triangulation is not empty");
            out.push((v.data().index, 1.0));
        } else {
            out.extend(self.buf.iter().map(|(h, w)| (self.tri.vertex(*h).data().index, *w)));
        }
    }

    pub fn evaluate(&mut self, col: usize, row: usize, values: &[f64]) -> f64 {
        let mut w = Vec::with_capacity(3);
        self.weights(col, row, &mut w);
        w.iter().map(|(i, a)| a * values[*i]).sum()
    }
}

/// Stage-one correction. Residuals `d_sparse - d_pred` at the correction
/// pixels are interpolated over `overlap`; outside it the corrected map is
/// invalid. At correction pixels the result equals the sparse depth.
///
/// `correction_set` indexes into `sparse.entries`.
pub fn correct(
    pred: &DenseDepthMap,
    sparse: &SparseDepthMap,
    correction_set: &[usize],
    overlap: &PixelMask,
) -> Result<(DenseDepthMap, CorrectionMap)> {
    let (w, h) = (pred.width, pred.height);
    if (sparse.width, sparse.height) != (w, h) || (overlap.width, overlap.height) != (w, h) {
        return Err(Error::InvalidInput("depth, sparse and overlap sizes differ".into()));
    }
    let sites: Vec<(usize, usize)> = correction_set.iter().map(|i| sparse.entries[*i].0).collect();
    let mut residual = Vec::with_capacity(sites.len());
    for (c, r) in &sites {
        let p = pred
            .get(*c, *r)
            .ok_or_else(|| Error::InvalidInput(format!("prediction undefined at ({c}, {r})")))?;
        let s = sparse.entries[correction_set[residual.len()]].1;
        residual.push(s - p);
    }
    let mut interp = SiteInterpolant::new(&sites)?;

    let mut corrected = DenseDepthMap::new(w, h);
    let mut delta = CorrectionMap::new(w, h);
    let mut wbuf = Vec::with_capacity(3);
    for (c, r) in overlap.iter_set() {
        let Some(p) = pred.get(c, r) else { continue };
        interp.weights(c, r, &mut wbuf);
        let d: f64 = wbuf.iter().map(|(i, a)| a * residual[*i]).sum();
        delta.set(c, r, d);
        corrected.set(c, r, p + d);
    }
    for ((c, r), i) in sites.iter().zip(correction_set) {
        if overlap.get(*c, *r) {
            corrected.set(*c, *r, sparse.entries[*i].1);
        }
    }
    Ok((corrected, delta))
}

/// Densifies LiDAR depth alone: the sparse ranges themselves are
/// interpolated over `overlap` (no depth prediction involved).
pub fn interpolate_sparse(sparse: &SparseDepthMap, overlap: &PixelMask) -> Result<DenseDepthMap> {
    let sites: Vec<(usize, usize)> = sparse.entries.iter().map(|e| e.0).collect();
    let values: Vec<f64> = sparse.entries.iter().map(|e| e.1).collect();
    let mut interp = SiteInterpolant::new(&sites)?;
    let mut out = DenseDepthMap::new(sparse.width, sparse.height);
    let mut wbuf = Vec::with_capacity(3);
    for (c, r) in overlap.iter_set() {
        interp.weights(c, r, &mut wbuf);
        out.set(c, r, wbuf.iter().map(|(i, a)| a * values[*i]).sum());
    }
    for ((c, r), d) in &sparse.entries {
        if overlap.get(*c, *r) {
            out.set(*c, *r, *d);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_pred(w: usize, h: usize, v: f64) -> DenseDepthMap {
        DenseDepthMap::from_values(w, h, vec![v; w * h])
    }

    #[test]
    fn exact_at_data_site() {
        let sparse = SparseDepthMap::new(
            32,
            16,
            vec![((4, 4), 10.0), ((20, 4), 12.0), ((10, 12), 12.0)],
        )
        .unwrap();
        let pred = flat_pred(32, 16, 12.0);
        let mask = PixelMask::full(32, 16);
        let (dh, dd) = correct(&pred, &sparse, &[0, 1, 2], &mask).unwrap();
        assert_eq!(dh.get(4, 4), Some(10.0));
        assert_eq!(dd.get(4, 4), Some(-2.0));
    }

    #[test]
    fn zero_residual_leaves_prediction() {
        let sparse = SparseDepthMap::new(32, 16, vec![((4, 4), 7.0), ((20, 4), 7.0), ((10, 12), 7.0)]).unwrap();
        let pred = flat_pred(32, 16, 7.0);
        let mask = PixelMask::full(32, 16);
        let (dh, dd) = correct(&pred, &sparse, &[0, 1, 2], &mask).unwrap();
        assert_eq!(dh, pred);
        assert_eq!(dd.get(10, 7), Some(0.0));
    }

    #[test]
    fn centroid_of_symmetric_residuals() {
        // residuals -1, 0, +1 at the corners of a triangle whose centroid
        // falls on the centre of pixel (9, 6)
        let sparse = SparseDepthMap::new(32, 16, vec![((3, 3), 9.0), ((15, 3), 10.0), ((9, 12), 11.0)]).unwrap();
        let pred = flat_pred(32, 16, 10.0);
        let mask = PixelMask::full(32, 16);
        let (_, dd) = correct(&pred, &sparse, &[0, 1, 2], &mask).unwrap();
        // oracle: mean of corner residuals
        let expected = (-1.0 + 0.0 + 1.0) / 3.0;
        assert!((dd.get(9, 6).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn nearest_vertex_outside_hull_and_undefined_outside_mask() {
        let sparse = SparseDepthMap::new(32, 16, vec![((4, 4), 9.0), ((8, 4), 9.0), ((6, 8), 9.0)]).unwrap();
        let pred = flat_pred(32, 16, 10.0);
        let mut mask = PixelMask::new(32, 16);
        mask.set(20, 4, true);
        mask.set(4, 4, true);
        let (dh, dd) = correct(&pred, &sparse, &[0, 1, 2], &mask).unwrap();
        assert_eq!(dd.get(20, 4), Some(-1.0));
        assert!(dh.get(0, 0).is_none());
        assert!(dd.get(0, 0).is_none());
        assert_eq!(dh.valid_count(), 2);
    }

    #[test]
    fn collinear_sites_are_rejected() {
        let sparse = SparseDepthMap::new(32, 16, vec![((1, 1), 5.0), ((2, 2), 5.0), ((3, 3), 5.0)]).unwrap();
        let pred = flat_pred(32, 16, 5.0);
        let err = correct(&pred, &sparse, &[0, 1, 2], &PixelMask::full(32, 16)).unwrap_err();
        assert!(matches!(err, Error::CorrectionUnavailable(_)));
        let err = correct(&pred, &sparse, &[0, 1], &PixelMask::full(32, 16)).unwrap_err();
        assert!(matches!(err, Error::CorrectionUnavailable(_)));
    }

    #[test]
    fn interpolation_only_reproduces_planar_depth() {
        let f = |c: usize, r: usize| 5.0 + 0.25 * c as f64 + 0.5 * r as f64;
        let entries = vec![((2, 2), f(2, 2)), ((28, 3), f(28, 3)), ((5, 14), f(5, 14)), ((27, 13), f(27, 13))];
        let sparse = SparseDepthMap::new(32, 16, entries).unwrap();
        let out = interpolate_sparse(&sparse, &PixelMask::full(32, 16)).unwrap();
        assert!((out.get(15, 8).unwrap() - f(15, 8)).abs() < 1e-9);
    }
}
