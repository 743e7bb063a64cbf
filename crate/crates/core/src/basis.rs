//! Spline bases with roughness penalties.
//!
//! * [`Basis2D`]: low-rank thin-plate radial basis `η(r) = r² log r` with the
//!   linear null space `{1, x, y}`; radial coefficients are constrained
//!   orthogonal to the null space evaluated at the knots.
//! * [`Basis1D`]: cubic B-splines on equally spaced knots with a
//!   second-order difference penalty (P-splines).

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::SpatialPoint;

pub const DEFAULT_SPATIAL_KNOTS: usize = 30;
pub const DEFAULT_TEMPORAL_KNOTS: usize = 50;

/// Thin-plate radial function for two dimensions, `r² log r`, with `η(0) = 0`.
pub fn tps_radial(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        r * r * r.ln()
    }
}

/// Orthonormal basis (columns) of the complement of `c`, via one Householder
/// reflection. Used to absorb a sum-to-zero constraint `cᵀβ = 0`.
pub fn constraint_null_space(c: &[f64]) -> DMatrix<f64> {
    let k = c.len();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if k == 0 {
        return DMatrix::zeros(0, 0);
    }
    if norm == 0.0 {
        return DMatrix::identity(k, k).columns(1, k - 1).into_owned();
    }
    let mut v: Vec<f64> = c.to_vec();
    let alpha = if c[0] > 0.0 { -norm } else { norm };
    v[0] -= alpha;
    let vv: f64 = v.iter().map(|e| e * e).sum();
    let h = DMatrix::from_fn(k, k, |i, j| f64::from(u8::from(i == j)) - 2.0 * v[i] * v[j] / vv);
    h.columns(1, k - 1).into_owned()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Basis2D {
    knots: Vec<SpatialPoint>,
    // knots and evaluation points are mapped to (p - center) / scale
    center: SpatialPoint,
    scale: f64,
    /// k × (k−3) orthonormal basis of radial coefficients orthogonal to the
    /// null space at the knots.
    constraint: DMatrix<f64>,
    /// η(‖knot_i − knot_j‖) in normalized coordinates.
    radial_gram: DMatrix<f64>,
    /// `P E P` with `P` projecting off the null space.
    penalty: DMatrix<f64>,
}

impl Basis2D {
    pub fn new(knots: Vec<SpatialPoint>) -> Result<Self> {
        let k = knots.len();
        if k == 0 {
            return Err(Error::InvalidKnots("no knots".into()));
        }
        if let Some(p) = knots.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidKnots(format!("non-finite knot ({}, {})", p.x, p.y)));
        }
        for i in 0..k {
            for j in 0..i {
                if knots[i] == knots[j] {
                    return Err(Error::InvalidKnots(format!(
                        "duplicate knot ({}, {})",
                        knots[i].x, knots[i].y
                    )));
                }
            }
        }
        let cx = knots.iter().map(|p| p.x).sum::<f64>() / k as f64;
        let cy = knots.iter().map(|p| p.y).sum::<f64>() / k as f64;
        let center = SpatialPoint::new(cx, cy);
        let scale = knots.iter().map(|p| p.distance(&center)).fold(0.0, f64::max);
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let norm: Vec<SpatialPoint> = knots
            .iter()
            .map(|p| SpatialPoint::new((p.x - cx) / scale, (p.y - cy) / scale))
            .collect();

        let radial_gram = DMatrix::from_fn(k, k, |i, j| tps_radial(norm[i].distance(&norm[j])));
        let t = DMatrix::from_fn(k, 3, |i, j| match j {
            0 => 1.0,
            1 => norm[i].x,
            _ => norm[i].y,
        });
        let proj = null_space_complement_projector(&t);
        let penalty = symmetrize(&(&proj * &radial_gram * &proj));

        let eig = proj.clone().symmetric_eigen();
        let mut cols: Vec<usize> = (0..k).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
        cols.sort_unstable();
        let constraint = DMatrix::from_fn(k, cols.len(), |i, j| eig.eigenvectors[(i, cols[j])]);

        Ok(Self {
            knots,
            center,
            scale,
            constraint,
            radial_gram,
            penalty,
        })
    }

    /// Knots chosen by farthest-point sampling from `candidates`.
    pub fn from_candidates(candidates: &[SpatialPoint], k: usize) -> Result<Self> {
        Self::new(farthest_point_knots(candidates, k)?)
    }

    pub fn knots(&self) -> &[SpatialPoint] {
        &self.knots
    }

    pub fn n_knots(&self) -> usize {
        self.knots.len()
    }

    /// Number of model columns after the constraint: `x`, `y` and `k − 3`
    /// radial combinations (the constant is left to the model intercept).
    pub fn n_columns(&self) -> usize {
        2 + self.constraint.ncols()
    }

    fn normalize(&self, p: &SpatialPoint) -> SpatialPoint {
        SpatialPoint::new((p.x - self.center.x) / self.scale, (p.y - self.center.y) / self.scale)
    }

    /// Unconstrained row `[1, x, y, η(‖p − knot_1‖), …, η(‖p − knot_k‖)]` of
    /// length `k + 3`, in normalized coordinates.
    pub fn eval_raw(&self, p: &SpatialPoint) -> Vec<f64> {
        let q = self.normalize(p);
        let mut row = Vec::with_capacity(self.knots.len() + 3);
        row.extend([1.0, q.x, q.y]);
        row.extend(self.knots.iter().map(|kn| tps_radial(q.distance(&self.normalize(kn)))));
        row
    }

    /// Constrained row `[x, y, η·Z]` of length [`Self::n_columns`].
    pub fn eval(&self, p: &SpatialPoint) -> Vec<f64> {
        let raw = self.eval_raw(p);
        let radial = &raw[3..];
        let mut row = Vec::with_capacity(self.n_columns());
        row.extend([raw[1], raw[2]]);
        for c in 0..self.constraint.ncols() {
            row.push(radial.iter().enumerate().map(|(j, v)| v * self.constraint[(j, c)]).sum());
        }
        row
    }

    /// k × k radial penalty, projected off the null space.
    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    /// Penalty over the (k+3) unconstrained coefficients: zero on the null
    /// space block, [`Self::penalty`] on the radial block.
    pub fn full_penalty(&self) -> DMatrix<f64> {
        let k = self.knots.len();
        let mut s = DMatrix::zeros(k + 3, k + 3);
        s.view_mut((3, 3), (k, k)).copy_from(&self.penalty);
        s
    }

    /// Penalty over the [`Self::eval`] columns.
    pub fn column_penalty(&self) -> DMatrix<f64> {
        let m = self.n_columns();
        let mut s = DMatrix::zeros(m, m);
        let zez = symmetrize(&(self.constraint.transpose() * &self.radial_gram * &self.constraint));
        s.view_mut((2, 2), (m - 2, m - 2)).copy_from(&zez);
        s
    }

    pub fn write_knots_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_points_csv(writer, &self.knots)
    }
}

/// Alias matching the operation name used elsewhere in the crate.
pub fn penalty2d(basis: &Basis2D) -> DMatrix<f64> {
    basis.penalty().clone()
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn null_space_complement_projector(t: &DMatrix<f64>) -> DMatrix<f64> {
    let k = t.nrows();
    let svd = t.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, v| m.max(*v));
    let mut proj = DMatrix::identity(k, k);
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > 1e-12 * smax {
            let col = u.column(i);
            proj -= col * col.transpose();
        }
    }
    proj
}

/// Greedy farthest-point sampling: starts at the candidate nearest the
/// centroid, then repeatedly adds the candidate farthest from the chosen set.
pub fn farthest_point_knots(candidates: &[SpatialPoint], k: usize) -> Result<Vec<SpatialPoint>> {
    let mut distinct: Vec<SpatialPoint> = Vec::with_capacity(candidates.len());
    {
        let mut seen = std::collections::HashSet::new();
        for p in candidates {
            if seen.insert((p.x.to_bits(), p.y.to_bits())) {
                distinct.push(*p);
            }
        }
    }
    if k == 0 || distinct.len() < k {
        return Err(Error::InvalidKnots(format!(
            "cannot place {k} knots among {} distinct candidates",
            distinct.len()
        )));
    }
    let n = distinct.len() as f64;
    let centroid = SpatialPoint::new(
        distinct.iter().map(|p| p.x).sum::<f64>() / n,
        distinct.iter().map(|p| p.y).sum::<f64>() / n,
    );
    let first = (0..distinct.len())
        .min_by(|&a, &b| {
            distinct[a]
                .distance_squared(&centroid)
                .total_cmp(&distinct[b].distance_squared(&centroid))
        })
        .expect("non-empty");
    let mut chosen = vec![distinct[first]];
    let mut min_d: Vec<f64> = distinct.iter().map(|p| p.distance_squared(&distinct[first])).collect();
    while chosen.len() < k {
        let (idx, _) = min_d
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        let next = distinct[idx];
        chosen.push(next);
        for (d, p) in min_d.iter_mut().zip(&distinct) {
            *d = d.min(p.distance_squared(&next));
        }
    }
    Ok(chosen)
}

fn write_points_csv<W: Write>(writer: W, points: &[SpatialPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "y"])?;
    for p in points {
        w.write_record([p.x.to_string(), p.y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Cubic B-spline basis with `n_basis` functions on `[lower, upper]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Basis1D {
    lower: f64,
    upper: f64,
    knots: Vec<f64>,
    n_basis: usize,
}

const DEGREE: usize = 3;

impl Basis1D {
    /// `n_basis ≥ 4` equally spaced cubic B-splines; the knot vector has
    /// `n_basis + 4` entries with `n_basis − 3` segments inside the range.
    pub fn new(lower: f64, upper: f64, n_basis: usize) -> Result<Self> {
        if n_basis < DEGREE + 1 {
            return Err(Error::InvalidKnots(format!("cubic P-splines need at least 4 basis functions, got {n_basis}")));
        }
        if !(lower.is_finite() && upper.is_finite() && upper > lower) {
            return Err(Error::InvalidInput(format!("invalid spline range [{lower}, {upper}]")));
        }
        let segments = n_basis - DEGREE;
        let h = (upper - lower) / segments as f64;
        let knots = (0..n_basis + DEGREE + 1)
            .map(|i| lower + (i as f64 - DEGREE as f64) * h)
            .collect();
        Ok(Self {
            lower,
            upper,
            knots,
            n_basis,
        })
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    /// Values of all basis functions at `t`; at most four are non-zero.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let slack = 1e-12 * (self.upper - self.lower);
        if !(t >= self.lower - slack && t <= self.upper + slack) {
            return Err(Error::OutOfRange {
                value: t,
                lower: self.lower,
                upper: self.upper,
            });
        }
        let t = t.clamp(self.lower, self.upper);
        // span index j with knots[j] <= t < knots[j+1], j in [3, n_basis-1]
        let h = self.knots[1] - self.knots[0];
        let span = (((t - self.lower) / h).floor() as usize + DEGREE).min(self.n_basis - 1);

        // triangular recursion for the DEGREE+1 non-zero functions
        let mut n = [0.0; DEGREE + 1];
        let mut left = [0.0; DEGREE + 1];
        let mut right = [0.0; DEGREE + 1];
        n[0] = 1.0;
        for d in 1..=DEGREE {
            left[d] = t - self.knots[span + 1 - d];
            right[d] = self.knots[span + d] - t;
            let mut saved = 0.0;
            for r in 0..d {
                let tmp = n[r] / (right[r + 1] + left[d - r]);
                n[r] = saved + right[r + 1] * tmp;
                saved = left[d - r] * tmp;
            }
            n[d] = saved;
        }
        let mut row = vec![0.0; self.n_basis];
        for (r, v) in n.iter().enumerate() {
            row[span - DEGREE + r] = *v;
        }
        Ok(row)
    }

    /// `DᵀD` for the second-order difference operator `D`.
    pub fn penalty(&self) -> DMatrix<f64> {
        let k = self.n_basis;
        let mut d = DMatrix::zeros(k - 2, k);
        for i in 0..k - 2 {
            d[(i, i)] = 1.0;
            d[(i, i + 1)] = -2.0;
            d[(i, i + 2)] = 1.0;
        }
        d.transpose() * d
    }

    pub fn write_knots_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["knot"])?;
        for k in &self.knots {
            w.write_record([k.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_knots(n: usize) -> Vec<SpatialPoint> {
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                out.push(SpatialPoint::new(
                    i as f64 * 3.0 + 0.3 * (j as f64).sin(),
                    j as f64 * 2.0 + 0.1 * i as f64,
                ));
            }
        }
        out
    }

    /// Cox–de Boor recursion straight from the definition.
    fn cox_de_boor(knots: &[f64], i: usize, p: usize, t: f64) -> f64 {
        if p == 0 {
            return if knots[i] <= t && t < knots[i + 1] { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = knots[i + p] - knots[i];
        if d1 > 0.0 {
            v += (t - knots[i]) / d1 * cox_de_boor(knots, i, p - 1, t);
        }
        let d2 = knots[i + p + 1] - knots[i + 1];
        if d2 > 0.0 {
            v += (knots[i + p + 1] - t) / d2 * cox_de_boor(knots, i + 1, p - 1, t);
        }
        v
    }

    #[test]
    fn radial_is_zero_at_knot() {
        let b = Basis2D::new(grid_knots(3)).unwrap();
        let raw = b.eval_raw(&b.knots()[4]);
        assert_eq!(raw[0], 1.0);
        assert_eq!(raw[3 + 4], 0.0);
        assert_eq!(raw.len(), 9 + 3);
    }

    #[test]
    fn radial_symmetry_about_a_knot() {
        let b = Basis2D::new(grid_knots(3)).unwrap();
        let k = b.knots()[2];
        let p1 = SpatialPoint::new(k.x + 0.7, k.y - 0.2);
        let p2 = SpatialPoint::new(k.x - 0.7, k.y + 0.2);
        let (r1, r2) = (b.eval_raw(&p1), b.eval_raw(&p2));
        assert!((r1[3 + 2] - r2[3 + 2]).abs() < 1e-14);
    }

    #[test]
    fn single_knot_penalty_is_zero() {
        let b = Basis2D::new(vec![SpatialPoint::new(1.0, 2.0)]).unwrap();
        assert_eq!(b.penalty().shape(), (1, 1));
        assert_eq!(penalty2d(&b)[(0, 0)], 0.0);
    }

    #[test]
    fn duplicate_knots_rejected() {
        let k = vec![SpatialPoint::new(0.0, 0.0), SpatialPoint::new(0.0, 0.0), SpatialPoint::new(1.0, 0.0)];
        assert!(matches!(Basis2D::new(k), Err(Error::InvalidKnots(_))));
    }

    #[test]
    fn penalty_is_psd_and_kills_null_space() {
        let b = Basis2D::new(grid_knots(5)).unwrap();
        let s = b.penalty();
        let eig = s.clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&v| v >= -1e-8));
        assert!((s - s.transpose()).abs().max() < 1e-12);
        // radial coefficients linear in the knot coordinates are projected out
        let kn = b.knots();
        let delta = nalgebra::DVector::from_iterator(kn.len(), kn.iter().map(|p| 2.0 - 0.5 * p.x + 1.5 * p.y));
        let q = (delta.transpose() * s * &delta)[(0, 0)];
        assert!(q.abs() < 1e-8, "{q}");
        // pure null-space coefficients in the full parameterization
        let mut full = nalgebra::DVector::zeros(kn.len() + 3);
        full[0] = 3.0;
        full[1] = -1.0;
        full[2] = 2.5;
        assert_eq!((full.transpose() * b.full_penalty() * &full)[(0, 0)], 0.0);
    }

    #[test]
    fn constrained_columns() {
        let b = Basis2D::new(grid_knots(4)).unwrap();
        assert_eq!(b.n_columns(), 16 - 1);
        assert_eq!(b.eval(&SpatialPoint::new(1.0, 1.0)).len(), 15);
        let cp = b.column_penalty();
        let eig = cp.symmetric_eigen();
        let positive = eig.eigenvalues.iter().filter(|&&v| v > 1e-10).count();
        assert_eq!(positive, 13);
    }

    #[test]
    fn evaluation_is_continuous() {
        let b = Basis2D::new(grid_knots(3)).unwrap();
        let p = b.knots()[3];
        let q = SpatialPoint::new(p.x + 1e-9, p.y);
        let d = b
            .eval(&p)
            .iter()
            .zip(b.eval(&q))
            .map(|(a, c)| (a - c).abs())
            .fold(0.0, f64::max);
        assert!(d < 1e-6);
    }

    #[test]
    fn farthest_point_is_deterministic_and_spread() {
        let cands = grid_knots(10);
        let a = farthest_point_knots(&cands, 6).unwrap();
        let b = farthest_point_knots(&cands, 6).unwrap();
        assert_eq!(a, b);
        assert!(farthest_point_knots(&cands[..3], 6).is_err());
    }

    #[test]
    fn partition_of_unity_and_support() {
        let b = Basis1D::new(0.0, 364.0, 50).unwrap();
        for i in 0..=728 {
            let t = i as f64 * 0.5;
            let row = b.eval(t).unwrap();
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12, "t={t}");
            assert!(row.iter().filter(|v| **v != 0.0).count() <= 4);
        }
        for k in &b.knots()[3..b.knots().len() - 3] {
            assert!(b.eval(*k).unwrap().iter().filter(|v| **v != 0.0).count() <= 4);
        }
    }

    #[test]
    fn span_midpoint_matches_closed_form() {
        let b = Basis1D::new(0.0, 10.0, 13).unwrap();
        // 10 segments of width 1; midpoint of the 5th
        let row = b.eval(4.5).unwrap();
        let nz: Vec<f64> = row.iter().copied().filter(|v| *v != 0.0).collect();
        let expected = [1.0 / 48.0, 23.0 / 48.0, 23.0 / 48.0, 1.0 / 48.0];
        for (a, e) in nz.iter().zip(expected) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn matches_cox_de_boor_oracle() {
        let b = Basis1D::new(-2.0, 7.5, 11).unwrap();
        for i in 0..200 {
            let t = -2.0 + 9.5 * (i as f64 + 0.37) / 200.0;
            let row = b.eval(t).unwrap();
            for (j, v) in row.iter().enumerate() {
                let o = cox_de_boor(b.knots(), j, 3, t);
                assert!((v - o).abs() < 1e-12, "t={t} j={j}");
            }
        }
    }

    #[test]
    fn out_of_range_is_an_error() {
        let b = Basis1D::new(0.0, 1.0, 6).unwrap();
        assert!(matches!(b.eval(1.5), Err(Error::OutOfRange { .. })));
        assert!(b.eval(1.0).is_ok());
        assert!(Basis1D::new(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn difference_penalty_kills_linear_sequences() {
        let b = Basis1D::new(0.0, 1.0, 12).unwrap();
        let s = b.penalty();
        for coef in [vec![3.0; 12], (0..12).map(|i| 2.0 - 0.25 * i as f64).collect::<Vec<_>>()] {
            let v = nalgebra::DVector::from_vec(coef);
            assert_eq!((v.transpose() * &s * &v)[(0, 0)], 0.0);
        }
        let bumpy = nalgebra::DVector::from_fn(12, |i, _| ((i * i) as f64).sin());
        assert!((bumpy.transpose() * &s * &bumpy)[(0, 0)] > 0.0);
    }

    #[test]
    fn sum_to_zero_null_space() {
        let c = [1.0, 2.0, 0.5, 3.0];
        let z = constraint_null_space(&c);
        assert_eq!(z.shape(), (4, 3));
        for j in 0..3 {
            let dot: f64 = (0..4).map(|i| c[i] * z[(i, j)]).sum();
            assert!(dot.abs() < 1e-14);
        }
        let ztz = z.transpose() * &z;
        assert!((ztz - DMatrix::identity(3, 3)).abs().max() < 1e-14);
    }
}
