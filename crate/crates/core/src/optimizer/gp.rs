//! Gaussian-process regression on the unit cube.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::OptimizeError;

/// Added to the kernel diagonal on top of the noise variance.
pub const JITTER: f64 = 1e-8;

const LOG_LS: (f64, f64) = (-4.6, 2.3);
const LOG_SF2: (f64, f64) = (-4.6, 4.6);
const LOG_SN2: (f64, f64) = (-13.8, -2.3);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Matern52,
    Rbf,
}

impl Kernel {
    /// Correlation at scaled distance squared `r2`.
    fn corr(self, r2: f64) -> f64 {
        match self {
            Kernel::Matern52 => {
                let r = (5.0 * r2).sqrt();
                (1.0 + r + r * r / 3.0) * (-r).exp()
            }
            Kernel::Rbf => (-0.5 * r2).exp(),
        }
    }
}

/// Kernel hyperparameters in log space, relative to standardized outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub log_lengthscales: Vec<f64>,
    pub log_signal_var: f64,
    pub log_noise_var: f64,
}

impl GpHyper {
    pub fn initial(dim: usize) -> Self {
        Self { log_lengthscales: vec![(0.3f64).ln(); dim], log_signal_var: 0.0, log_noise_var: (1e-4f64).ln() }
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = self.log_lengthscales.clone();
        v.push(self.log_signal_var);
        v.push(self.log_noise_var);
        v
    }

    fn from_vec(v: &[f64]) -> Self {
        let d = v.len() - 2;
        Self {
            log_lengthscales: v[..d].iter().map(|x| x.clamp(LOG_LS.0, LOG_LS.1)).collect(),
            log_signal_var: v[d].clamp(LOG_SF2.0, LOG_SF2.1),
            log_noise_var: v[d + 1].clamp(LOG_SN2.0, LOG_SN2.1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaussianProcess {
    kernel: Kernel,
    x: Vec<Vec<f64>>,
    inv_ls2: Vec<f64>,
    signal_var: f64,
    y_mean: f64,
    y_std: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    hyper: GpHyper,
    lml: f64,
}

fn standardize(y: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = if var > 1e-24 { var.sqrt() } else { 1.0 };
    (mean, std, y.iter().map(|v| (v - mean) / std).collect())
}

struct Factor {
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    lml: f64,
}

fn factor(kernel: Kernel, x: &[Vec<f64>], ys: &DVector<f64>, h: &GpHyper) -> Option<Factor> {
    let n = x.len();
    let inv_ls2: Vec<f64> = h.log_lengthscales.iter().map(|l| (-2.0 * l).exp()).collect();
    let sf2 = h.log_signal_var.exp();
    let sn2 = h.log_noise_var.exp();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = sf2 + sn2 + JITTER;
        for j in 0..i {
            let v = sf2 * kernel.corr(dist2(&x[i], &x[j], &inv_ls2));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let chol = k.cholesky()?;
    let alpha = chol.solve(ys);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let lml = -0.5 * ys.dot(&alpha) - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    lml.is_finite().then_some(Factor { chol, alpha, lml })
}

fn dist2(a: &[f64], b: &[f64], inv_ls2: &[f64]) -> f64 {
    a.iter().zip(b).zip(inv_ls2).map(|((p, q), w)| (p - q) * (p - q) * w).sum()
}

struct NegLml<'a> {
    kernel: Kernel,
    x: &'a [Vec<f64>],
    ys: &'a DVector<f64>,
}

impl NegLml<'_> {
    /// Search vector `[log lengthscale, log signal var, log noise var]` with
    /// the lengthscale shared by every input dimension.
    fn expand(&self, p: &[f64]) -> Vec<f64> {
        let mut v = vec![p[0]; self.x[0].len()];
        v.extend_from_slice(&p[1..]);
        v
    }
}

impl CostFunction for NegLml<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        let full = self.expand(p);
        let h = GpHyper::from_vec(&full);
        // leaving the box is penalized so the simplex walks back in
        let excess: f64 = full.iter().zip(h.to_vec()).map(|(a, b)| (a - b).abs()).sum();
        Ok(match factor(self.kernel, self.x, self.ys, &h) {
            Some(f) => -f.lml + 10.0 * excess,
            None => 1e10,
        })
    }
}

impl GaussianProcess {
    /// Fit with fixed hyperparameters.
    pub fn with_hyper(kernel: Kernel, x: Vec<Vec<f64>>, y: &[f64], hyper: GpHyper) -> Result<Self, OptimizeError> {
        check_data(&x, y, hyper.log_lengthscales.len())?;
        let (y_mean, y_std, ys) = standardize(y);
        let ys = DVector::from_vec(ys);
        let f = factor(kernel, &x, &ys, &hyper).ok_or_else(|| OptimizeError::Surrogate("kernel matrix is not positive definite".into()))?;
        Ok(Self {
            kernel,
            inv_ls2: hyper.log_lengthscales.iter().map(|l| (-2.0 * l).exp()).collect(),
            signal_var: hyper.log_signal_var.exp(),
            x,
            y_mean,
            y_std,
            chol: f.chol,
            alpha: f.alpha,
            hyper,
            lml: f.lml,
        })
    }

    /// Fit an isotropic lengthscale, signal and noise variance by maximizing
    /// the log marginal likelihood from `warm` plus `restarts` random starts.
    pub fn fit(
        kernel: Kernel,
        x: Vec<Vec<f64>>,
        y: &[f64],
        warm: Option<&GpHyper>,
        restarts: usize,
        rng: &mut impl Rng,
    ) -> Result<Self, OptimizeError> {
        let dim = x.first().map_or(0, Vec::len);
        check_data(&x, y, dim)?;
        let (_, _, ys) = standardize(y);
        let ys = DVector::from_vec(ys);
        let warm = warm.cloned().unwrap_or_else(|| GpHyper::initial(dim));
        let mean_ls = warm.log_lengthscales.iter().sum::<f64>() / warm.log_lengthscales.len().max(1) as f64;
        let mut starts = vec![vec![mean_ls, warm.log_signal_var, warm.log_noise_var]];
        for _ in 0..restarts {
            starts.push(vec![rng.gen_range(-2.5..0.5), rng.gen_range(-1.0..1.0), rng.gen_range(-11.0..-5.0)]);
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for p0 in starts {
            let mut simplex = vec![p0.clone()];
            for i in 0..p0.len() {
                let mut p = p0.clone();
                p[i] += 0.5;
                simplex.push(p);
            }
            let problem = NegLml { kernel, x: &x, ys: &ys };
            let solver = NelderMead::new(simplex)
                .with_sd_tolerance(1e-4)
                .map_err(|e| OptimizeError::Surrogate(e.to_string()))?;
            let Ok(result) = Executor::new(problem, solver).configure(|s| s.max_iters(120)).run() else { continue };
            let state = result.state();
            if let Some(p) = state.get_best_param() {
                let cost = state.get_best_cost();
                if cost.is_finite() && best.as_ref().is_none_or(|(c, _)| cost < *c) {
                    best = Some((cost, p.clone()));
                }
            }
        }
        let (_, p) = best.ok_or_else(|| OptimizeError::Surrogate("likelihood optimization failed".into()))?;
        let hyper = GpHyper::from_vec(&NegLml { kernel, x: &x, ys: &ys }.expand(&p));
        Self::with_hyper(kernel, x, y, hyper)
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    /// Latent mean and variance in standardized output units.
    pub fn predict_standardized(&self, p: &[f64]) -> (f64, f64) {
        let ks = DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| self.signal_var * self.kernel.corr(dist2(xi, p, &self.inv_ls2))),
        );
        let mean = ks.dot(&self.alpha);
        let v = self.chol.l_dirty().solve_lower_triangular(&ks).unwrap_or_else(|| DVector::zeros(ks.len()));
        let var = (self.signal_var - v.norm_squared()).max(1e-12);
        (mean, var)
    }

    /// Posterior mean and variance in the original output units.
    pub fn predict(&self, p: &[f64]) -> (f64, f64) {
        let (m, v) = self.predict_standardized(p);
        (self.y_mean + self.y_std * m, v * self.y_std * self.y_std)
    }

    /// Map an output value into standardized units.
    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_std
    }
}

fn check_data(x: &[Vec<f64>], y: &[f64], dim: usize) -> Result<(), OptimizeError> {
    if x.is_empty() || x.len() != y.len() {
        return Err(OptimizeError::Surrogate(format!("{} inputs for {} outputs", x.len(), y.len())));
    }
    if x.iter().any(|p| p.len() != dim) || dim == 0 {
        return Err(OptimizeError::Surrogate("inputs have inconsistent dimension".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(OptimizeError::Surrogate("outputs must be finite".into()));
    }
    Ok(())
}
