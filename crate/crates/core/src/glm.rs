//! Weighted, optionally penalized, Poisson log-linear regression.
//!
//! Maximizes `Σ w_k (y_k log μ_k − μ_k) − ½ λ βᵀSβ` with `μ = exp(Xβ)` by
//! penalized IRLS. Each step solves the augmented least squares problem
//! `[√Ω X; √λ E] β ≈ [√Ω z; 0]` (with `EᵀE = S`) by pivoted QR.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg::{psd_square_root, PivotedQr};

pub const INTERCEPT: &str = "(Intercept)";

// linear predictors are clamped here to keep exp() finite
const MAX_ETA: f64 = 700.0;
const MIN_MEAN: f64 = 1e-300;
const COEF_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct DesignMatrix {
    names: Vec<String>,
    x: DMatrix<f64>,
    prior_weights: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, x: DMatrix<f64>, prior_weights: Vec<f64>) -> Result<Self> {
        if names.len() != x.ncols() {
            return Err(Error::InvalidInput(format!("{} names for {} columns", names.len(), x.ncols())));
        }
        if prior_weights.len() != x.nrows() {
            return Err(Error::InvalidInput(format!(
                "{} prior weights for {} rows",
                prior_weights.len(),
                x.nrows()
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::InvalidInput(format!("duplicate column name '{n}'")));
            }
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % x.nrows(), pos / x.nrows());
            return Err(Error::InvalidInput(format!("non-finite entry in column '{}' row {row}", names[col])));
        }
        if let Some(w) = prior_weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput(format!("prior weight {w} is not positive")));
        }
        Ok(Self { names, x, prior_weights })
    }

    /// Unit prior weights.
    pub fn unweighted(names: Vec<String>, x: DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        Self::new(names, x, vec![1.0; n])
    }

    pub fn from_columns(columns: Vec<(String, Vec<f64>)>, prior_weights: Vec<f64>) -> Result<Self> {
        let nrows = prior_weights.len();
        if let Some((n, c)) = columns.iter().find(|(_, c)| c.len() != nrows) {
            return Err(Error::InvalidInput(format!("column '{n}' has {} rows, expected {nrows}", c.len())));
        }
        let x = DMatrix::from_fn(nrows, columns.len(), |i, j| columns[j].1[i]);
        Self::new(columns.into_iter().map(|(n, _)| n).collect(), x, prior_weights)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn prior_weights(&self) -> &[f64] {
        &self.prior_weights
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn intercept_column(&self) -> Option<usize> {
        (0..self.ncols()).find(|&j| self.x.column(j).iter().all(|&v| v == 1.0))
    }

    /// Keeps only the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::InvalidInput(format!("no column named '{n}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        let x = self.x.select_columns(&idx);
        Self::new(names.iter().map(|s| s.to_string()).collect(), x, self.prior_weights.clone())
    }
}

/// Penalty matrix acting on a contiguous block of columns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PenaltyBlock {
    pub term: String,
    pub start: usize,
    pub matrix: DMatrix<f64>,
}

/// Block-diagonal penalty `S`, multiplied by a single smoothing parameter.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Penalty {
    pub blocks: Vec<PenaltyBlock>,
}

impl Penalty {
    pub fn single(term: impl Into<String>, start: usize, matrix: DMatrix<f64>) -> Self {
        Self {
            blocks: vec![PenaltyBlock {
                term: term.into(),
                start,
                matrix,
            }],
        }
    }

    pub fn full(&self, p: usize) -> Result<DMatrix<f64>> {
        let mut s = DMatrix::zeros(p, p);
        for b in &self.blocks {
            let k = b.matrix.nrows();
            if b.matrix.ncols() != k || b.start + k > p {
                return Err(Error::InvalidInput(format!(
                    "penalty block '{}' does not fit a {p}-column design",
                    b.term
                )));
            }
            s.view_mut((b.start, b.start), (k, k)).copy_from(&b.matrix);
        }
        Ok(s)
    }

    fn penalized_columns(&self, p: usize) -> Vec<bool> {
        let mut out = vec![false; p];
        for b in &self.blocks {
            for flag in out.iter_mut().skip(b.start).take(b.matrix.nrows()) {
                *flag = true;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative change in penalized deviance that stops the iteration.
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-10,
            max_halvings: 20,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    pub z_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub penalized: Vec<bool>,
    pub deviance: f64,
    pub null_deviance: f64,
    pub aic: f64,
    pub gcv: f64,
    pub edf: f64,
    pub lambda: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_obs: usize,
    /// Penalized deviance `D + λβᵀSβ` at the start and after each iteration.
    pub deviance_trace: Vec<f64>,
    /// Max-norm of the penalized score at the solution.
    pub score_norm: f64,
    #[serde(skip)]
    pub fitted: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z_value: f64,
    pub p_value: f64,
}

impl FitResult {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coefficients[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.std_errors[i])
    }

    pub fn deviance_explained(&self) -> f64 {
        if self.null_deviance > 0.0 {
            (1.0 - self.deviance / self.null_deviance).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    /// Wald table of the unpenalized (parametric) columns.
    pub fn coefficient_table(&self) -> Vec<CoefficientRow> {
        (0..self.names.len())
            .filter(|&i| !self.penalized[i])
            .map(|i| CoefficientRow {
                term: self.names[i].clone(),
                estimate: self.coefficients[i],
                std_error: self.std_errors[i],
                z_value: self.z_values[i],
                p_value: self.p_values[i],
            })
            .collect()
    }

    /// CSV columns `term,estimate,std_error,z_value,p_value`.
    pub fn write_coefficient_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.coefficient_table() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Two-sided normal p-value.
pub fn wald_p_value(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

pub fn poisson_deviance(y: &[f64], mu: &[f64], w: &[f64]) -> f64 {
    2.0 * y
        .iter()
        .zip(mu)
        .zip(w)
        .map(|((&y, &m), &w)| {
            let ylogy = if y > 0.0 { y * (y / m).ln() } else { 0.0 };
            w * (ylogy - (y - m))
        })
        .sum::<f64>()
}

/// Deviance plus the AIC penalty, `D + 2·edf`.
pub fn aic(fit: &FitResult) -> f64 {
    fit.deviance + 2.0 * fit.edf
}

struct Evaluated {
    mu: Vec<f64>,
    deviance: f64,
    penalized_deviance: f64,
}

fn evaluate(x: &DMatrix<f64>, beta: &[f64], y: &[f64], w: &[f64], s: &DMatrix<f64>, lambda: f64) -> Evaluated {
    let b = nalgebra::DVector::from_column_slice(beta);
    let eta = x * &b;
    let mu: Vec<f64> = eta.iter().map(|e| e.min(MAX_ETA).exp().max(MIN_MEAN)).collect();
    let deviance = poisson_deviance(y, &mu, w);
    let pen = if lambda > 0.0 { lambda * (b.transpose() * s * &b)[(0, 0)] } else { 0.0 };
    Evaluated {
        mu,
        deviance,
        penalized_deviance: deviance + pen,
    }
}

fn augmented_qr(x: &DMatrix<f64>, omega: &[f64], root: Option<&DMatrix<f64>>) -> PivotedQr {
    let n = x.nrows();
    let extra = root.map_or(0, |e| e.nrows());
    let columns: Vec<Vec<f64>> = (0..x.ncols())
        .map(|j| {
            let mut col = Vec::with_capacity(n + extra);
            col.extend(x.column(j).iter().zip(omega).map(|(v, o)| v * o.sqrt()));
            if let Some(e) = root {
                col.extend(e.column(j).iter());
            }
            col
        })
        .collect();
    PivotedQr::new(columns)
}

/// Penalized IRLS fit. `penalty` is the penalty structure with its smoothing
/// parameter `λ ≥ 0`.
pub fn fit_poisson(
    design: &DesignMatrix,
    y: &[f64],
    penalty: Option<(&Penalty, f64)>,
    opts: &FitOptions,
) -> Result<FitResult> {
    fit_poisson_from(design, y, penalty, opts, None)
}

/// As [`fit_poisson`], starting the iteration at `start` instead of the
/// intercept-only point.
pub fn fit_poisson_from(
    design: &DesignMatrix,
    y: &[f64],
    penalty: Option<(&Penalty, f64)>,
    opts: &FitOptions,
    start: Option<&[f64]>,
) -> Result<FitResult> {
    let x = &design.x;
    let (n, p) = (x.nrows(), x.ncols());
    let w = &design.prior_weights;
    if y.len() != n {
        return Err(Error::InvalidInput(format!("{} responses for {n} rows", y.len())));
    }
    if let Some(v) = y.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput(format!("response {v} is not a non-negative number")));
    }
    if p == 0 {
        return Err(Error::InvalidInput("design has no columns".into()));
    }

    let (s, lambda, penalized) = match penalty {
        Some((pen, lambda)) => {
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidInput(format!("smoothing parameter {lambda} must be ≥ 0")));
            }
            (pen.full(p)?, lambda, pen.penalized_columns(p))
        }
        None => (DMatrix::zeros(p, p), 0.0, vec![false; p]),
    };
    let root = (lambda > 0.0).then(|| psd_square_root(&s) * lambda.sqrt());

    let sw: f64 = w.iter().sum();
    let mean_y = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let intercept = design.intercept_column();
    let mut beta = match start {
        Some(b) if b.len() == p && b.iter().all(|v| v.is_finite()) => b.to_vec(),
        Some(b) => {
            return Err(Error::InvalidInput(format!("start has {} values for {p} columns", b.len())));
        }
        None => {
            let mut b = vec![0.0; p];
            if let Some(j) = intercept {
                b[j] = mean_y.max(f64::EPSILON).ln();
            }
            b
        }
    };

    let mut current = evaluate(x, &beta, y, w, &s, lambda);
    let mut trace = vec![current.penalized_deviance];
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=opts.max_iter {
        iterations = iter;
        let omega: Vec<f64> = current.mu.iter().zip(w).map(|(m, w)| w * m).collect();
        let b = nalgebra::DVector::from_column_slice(&beta);
        let eta = x * &b;
        let mut rhs: Vec<f64> = (0..n)
            .map(|i| omega[i].sqrt() * (eta[i] + (y[i] - current.mu[i]) / current.mu[i]))
            .collect();
        if let Some(e) = &root {
            rhs.extend(std::iter::repeat_n(0.0, e.nrows()));
        }
        let qr = augmented_qr(x, &omega, root.as_ref());
        if qr.rank() < p {
            return Err(singular(design, &qr));
        }
        let mut proposal = qr.solve(&rhs);
        let mut next = evaluate(x, &proposal, y, w, &s, lambda);

        let mut halvings = 0;
        while !(next.penalized_deviance <= current.penalized_deviance) && halvings < opts.max_halvings {
            for (pj, bj) in proposal.iter_mut().zip(&beta) {
                *pj = 0.5 * (*pj + bj);
            }
            next = evaluate(x, &proposal, y, w, &s, lambda);
            halvings += 1;
        }
        if !(next.penalized_deviance <= current.penalized_deviance) {
            // no descent direction left: the current iterate is the optimum
            // to working precision
            let rel = (next.penalized_deviance - current.penalized_deviance).abs()
                / (current.penalized_deviance.abs() + 0.1);
            if rel < 1e-8 {
                converged = true;
                break;
            }
            return Err(Error::NonConvergence { iterations: iter, trace });
        }

        let change = (current.penalized_deviance - next.penalized_deviance).abs() / (next.penalized_deviance.abs() + 0.1);
        // a vanishing deviance change is not enough when the coefficients
        // run off to infinity (e.g. an all-zero response)
        let step = proposal
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs() / (a.abs() + 1.0))
            .fold(0.0, f64::max);
        beta = proposal;
        current = next;
        trace.push(current.penalized_deviance);
        if change < opts.tol && step < COEF_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations, trace });
    }

    // curvature at the solution
    let omega: Vec<f64> = current.mu.iter().zip(w).map(|(m, w)| w * m).collect();
    let qr = augmented_qr(x, &omega, root.as_ref());
    if qr.rank() < p {
        return Err(singular(design, &qr));
    }
    let covariance = qr.inverse_gram();
    let edf = if lambda > 0.0 {
        p as f64 - lambda * (&covariance * &s).trace()
    } else {
        p as f64
    };

    let std_errors: Vec<f64> = (0..p).map(|j| covariance[(j, j)].max(0.0).sqrt()).collect();
    let z_values: Vec<f64> = beta.iter().zip(&std_errors).map(|(b, se)| b / se).collect();
    let p_values = z_values.iter().map(|&z| wald_p_value(z)).collect();

    let resid: Vec<f64> = (0..n).map(|i| w[i] * (y[i] - current.mu[i])).collect();
    let b = nalgebra::DVector::from_column_slice(&beta);
    let score = x.transpose() * nalgebra::DVector::from_vec(resid) - (&s * &b) * lambda;
    let score_norm = score.amax();

    let null_mu = if intercept.is_some() { mean_y } else { 1.0 };
    let null_deviance = poisson_deviance(y, &vec![null_mu.max(MIN_MEAN); n], w);
    let deviance = current.deviance;
    let nf = n as f64;
    let gcv = if nf > edf { nf * deviance / (nf - edf).powi(2) } else { f64::INFINITY };

    Ok(FitResult {
        names: design.names.clone(),
        coefficients: beta,
        covariance,
        std_errors,
        z_values,
        p_values,
        penalized,
        deviance,
        null_deviance,
        aic: deviance + 2.0 * edf,
        gcv,
        edf,
        lambda,
        converged,
        iterations,
        n_obs: n,
        deviance_trace: trace,
        score_norm,
        fitted: current.mu,
    })
}

fn singular(design: &DesignMatrix, qr: &PivotedQr) -> Error {
    Error::SingularDesign {
        columns: qr
            .dependent_columns()
            .into_iter()
            .map(|j| design.names[j].clone())
            .collect(),
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
        }
    }
}

pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-4, 1e6, 41)
}

/// How the smoothing parameter of a penalized term is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Smoothing {
    Fixed(f64),
    /// Select by GCV over the given grid.
    Gcv(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothConfig {
    pub knots: usize,
    pub smoothing: Smoothing,
}

impl SmoothConfig {
    /// `knots` basis functions with λ chosen by GCV over [`default_lambda_grid`].
    pub fn gcv(knots: usize) -> Self {
        Self {
            knots,
            smoothing: Smoothing::Gcv(default_lambda_grid()),
        }
    }
}

/// Fits with the penalty applied as `smoothing` prescribes.
pub fn fit_smoothed(
    design: &DesignMatrix,
    y: &[f64],
    penalty: &Penalty,
    smoothing: &Smoothing,
    opts: &FitOptions,
) -> Result<FitResult> {
    match smoothing {
        Smoothing::Fixed(lambda) => fit_poisson(design, y, Some((penalty, *lambda)), opts),
        Smoothing::Gcv(grid) => Ok(select_gcv(design, y, penalty, grid, opts)?.fit),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GcvSelection {
    pub lambda: f64,
    pub fit: FitResult,
    /// `(λ, GCV)` for every grid value whose fit succeeded.
    pub scores: Vec<(f64, f64)>,
}

/// Fits every λ in `grid` and keeps the one minimizing
/// `GCV(λ) = n·D(λ) / (n − edf(λ))²`; ties go to the larger λ.
pub fn select_gcv(
    design: &DesignMatrix,
    y: &[f64],
    penalty: &Penalty,
    grid: &[f64],
    opts: &FitOptions,
) -> Result<GcvSelection> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("smoothing parameter grid is empty".into()));
    }
    // walk the path from the largest λ down, warm-starting each fit at the
    // previous solution
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    let mut slots: Vec<Option<Result<FitResult>>> = (0..grid.len()).map(|_| None).collect();
    let mut warm: Option<Vec<f64>> = None;
    for &i in &order {
        let fit = fit_poisson_from(design, y, Some((penalty, grid[i])), opts, warm.as_deref());
        if let Ok(f) = &fit {
            warm = Some(f.coefficients.clone());
        }
        slots[i] = Some(fit);
    }
    let fits: Vec<(f64, Result<FitResult>)> = grid
        .iter()
        .zip(slots)
        .map(|(l, f)| (*l, f.expect("every λ visited")))
        .collect();

    let mut best: Option<usize> = None;
    for &i in &order {
        if let Ok(f) = &fits[i].1 {
            if best.is_none_or(|b| f.gcv < fits[b].1.as_ref().map(|bf| bf.gcv).unwrap_or(f64::INFINITY)) {
                best = Some(i);
            }
        }
    }
    let scores = fits
        .iter()
        .filter_map(|(l, r)| r.as_ref().ok().map(|f| (*l, f.gcv)))
        .collect();
    match best {
        Some(i) => {
            let (lambda, fit) = fits.into_iter().nth(i).expect("index in range");
            Ok(GcvSelection {
                lambda,
                fit: fit.expect("best fit succeeded"),
                scores,
            })
        }
        None => {
            let first = fits
                .into_iter()
                .find_map(|(_, r)| r.err())
                .map(|e| e.to_string())
                .unwrap_or_default();
            Err(Error::AllFitsFailed { count: grid.len(), first })
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BackwardStep {
    pub dropped: String,
    pub aic_before: f64,
    pub aic_after: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BackwardSelection {
    pub kept: Vec<String>,
    pub steps: Vec<BackwardStep>,
    pub final_aic: f64,
}

/// Backward elimination by AIC over a term list. Each round drops the term
/// whose removal lowers the AIC the most; a removal must strictly lower the
/// AIC, and equal candidates keep the earlier-listed term in the model.
pub fn backward_select<F>(terms: &[String], fit: F) -> Result<BackwardSelection>
where
    F: Fn(&[String]) -> Result<FitResult>,
{
    let mut kept = terms.to_vec();
    let mut current = fit(&kept)?.aic;
    let mut steps = Vec::new();
    while !kept.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..kept.len() {
            let mut reduced = kept.clone();
            reduced.remove(i);
            let Ok(f) = fit(&reduced) else { continue };
            if f.aic < current && best.is_none_or(|(_, a)| f.aic < a) {
                best = Some((i, f.aic));
            }
        }
        let Some((i, a)) = best else { break };
        steps.push(BackwardStep {
            dropped: kept.remove(i),
            aic_before: current,
            aic_after: a,
        });
        current = a;
    }
    Ok(BackwardSelection {
        kept,
        steps,
        final_aic: current,
    })
}
