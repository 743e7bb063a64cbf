//! Householder QR with column pivoting, used for least squares solves and
//! covariance matrices. Columns are equilibrated to unit norm before
//! factorising so that rank decisions do not depend on covariate units.

use nalgebra::DMatrix;

/// Relative diagonal threshold below which a pivoted column counts as
/// linearly dependent.
pub(crate) const RANK_TOL: f64 = 1e-9;

const DOWNDATE_TOL: f64 = 1e-6;

pub(crate) struct PivotedQr {
    /// R (upper triangle, pivoted and equilibrated coordinates), p × p.
    r: Vec<Vec<f64>>,
    /// Householder vectors; `reflectors[k]` acts on rows `k..`.
    reflectors: Vec<Vec<f64>>,
    /// `perm[k]` is the original index of pivoted column `k`.
    perm: Vec<usize>,
    scale: Vec<f64>,
    rank: usize,
}

impl PivotedQr {
    /// Factorises the `nrows × columns.len()` matrix given column by column.
    pub(crate) fn new(mut columns: Vec<Vec<f64>>) -> Self {
        let p = columns.len();
        let m = columns.first().map_or(0, Vec::len);
        let scale: Vec<f64> = columns
            .iter_mut()
            .map(|c| {
                let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
                let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
                c.iter_mut().for_each(|v| *v *= s);
                s
            })
            .collect();

        let mut perm: Vec<usize> = (0..p).collect();
        let mut reflectors = Vec::with_capacity(p.min(m));
        let mut diag = Vec::with_capacity(p.min(m));
        // squared norms of the trailing parts of the columns, downdated
        // after each step and recomputed once cancellation sets in
        let mut norms: Vec<f64> = columns.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
        let mut reference = norms.clone();
        for k in 0..p.min(m) {
            let (best, _) = (k..p).fold((k, -1.0), |acc, j| if norms[j] > acc.1 { (j, norms[j]) } else { acc });
            columns.swap(k, best);
            perm.swap(k, best);
            norms.swap(k, best);
            reference.swap(k, best);

            let x = &columns[k][k..];
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                reflectors.push(vec![0.0; m - k]);
                diag.push(0.0);
                continue;
            }
            let alpha = if x[0] > 0.0 { -norm } else { norm };
            let mut v = x.to_vec();
            v[0] -= alpha;
            let vnorm = v.iter().map(|e| e * e).sum::<f64>().sqrt();
            v.iter_mut().for_each(|e| *e /= vnorm);
            for col in columns.iter_mut().skip(k) {
                reflect(&v, &mut col[k..]);
            }
            for j in k + 1..p {
                norms[j] -= columns[j][k] * columns[j][k];
                if norms[j] <= DOWNDATE_TOL * reference[j] {
                    norms[j] = columns[j][k + 1..].iter().map(|v| v * v).sum();
                    reference[j] = norms[j];
                }
            }
            reflectors.push(v);
            diag.push(alpha);
        }

        let r: Vec<Vec<f64>> = (0..p.min(m))
            .map(|i| (0..p).map(|j| if j < i { 0.0 } else if j == i { diag[i] } else { columns[j][i] }).collect())
            .collect();
        let r00 = diag.first().map_or(0.0, |d| d.abs());
        let rank = diag.iter().take_while(|d| d.abs() > RANK_TOL * r00).count();
        Self {
            r,
            reflectors,
            perm,
            scale,
            rank,
        }
    }

    pub(crate) fn rank(&self) -> usize {
        self.rank
    }

    pub(crate) fn ncols(&self) -> usize {
        self.perm.len()
    }

    /// Original indices of the columns judged dependent.
    pub(crate) fn dependent_columns(&self) -> Vec<usize> {
        let mut out = self.perm[self.rank..].to_vec();
        out.sort_unstable();
        out
    }

    /// Least squares solution of `A x ≈ b`; requires full column rank.
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let p = self.ncols();
        let mut qtb = b.to_vec();
        for (k, v) in self.reflectors.iter().enumerate() {
            reflect(v, &mut qtb[k..]);
        }
        let mut z = vec![0.0; p];
        for i in (0..self.rank).rev() {
            let mut acc = qtb[i];
            for j in i + 1..self.rank {
                acc -= self.r[i][j] * z[j];
            }
            z[i] = acc / self.r[i][i];
        }
        let mut x = vec![0.0; p];
        for (k, &orig) in self.perm.iter().enumerate() {
            x[orig] = z[k] * self.scale[orig];
        }
        x
    }

    /// `(AᵀA)⁻¹` in original column order; requires full column rank.
    pub(crate) fn inverse_gram(&self) -> DMatrix<f64> {
        let p = self.ncols();
        // R⁻¹ by back substitution, column by column
        let mut rinv = vec![vec![0.0; p]; p];
        for j in 0..p {
            rinv[j][j] = 1.0 / self.r[j][j];
            for i in (0..j).rev() {
                let mut acc = 0.0;
                for k in i + 1..=j {
                    acc += self.r[i][k] * rinv[k][j];
                }
                rinv[i][j] = -acc / self.r[i][i];
            }
        }
        let mut out = DMatrix::zeros(p, p);
        for a in 0..p {
            for b in a..p {
                let mut acc = 0.0;
                for k in b..p {
                    acc += rinv[a][k] * rinv[b][k];
                }
                let (oa, ob) = (self.perm[a], self.perm[b]);
                let v = acc * self.scale[oa] * self.scale[ob];
                out[(oa, ob)] = v;
                out[(ob, oa)] = v;
            }
        }
        out
    }
}

fn reflect(v: &[f64], x: &mut [f64]) {
    let dot = dot(v, x);
    let f = 2.0 * dot;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= f * vi;
    }
}

// four partial sums so the loop vectorizes
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Rows `E` with `EᵀE = S` for a symmetric PSD matrix, dropping numerically
/// null directions.
pub(crate) fn psd_square_root(s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 1e-12 * max).collect();
    let mut e = DMatrix::zeros(keep.len(), n);
    for (row, &i) in keep.iter().enumerate() {
        let root = eig.eigenvalues[i].sqrt();
        for j in 0..n {
            e[(row, j)] = root * eig.eigenvectors[(j, i)];
        }
    }
    e
}
