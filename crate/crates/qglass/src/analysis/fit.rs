//! Nonlinear least squares (Levenberg-Marquardt, numeric Jacobian) and the
//! fit-model zoo for correlation decays, histograms, and log-log slopes.
//!
//! Positivity and range constraints are enforced by smooth reparametrization
//! (log for scales and rates, logistic for offsets in (0,1)); reported
//! standard errors are delta-method transforms of the internal covariance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::{AnalysisError, TimeSeries};
use crate::numeric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitModel {
    /// a t^-alpha, params [a, alpha]
    Power,
    /// a exp(-gamma t) + q, params [a, gamma, q]
    ExpOffset,
    /// a t^-alpha exp(-gamma t) + q, params [a, alpha, gamma, q]
    PowExpOffset,
    /// A exp(-(x-mu)^2 / 2 sigma^2), params [amplitude, center, sigma]
    Gaussian,
    /// a t^-alpha by linear regression in log-log, params [a, alpha]
    PowerlawLoglog,
    /// slope/intercept of ln y vs ln x, params [slope, intercept]
    LinearLoglog,
}

impl FitModel {
    pub fn name(self) -> &'static str {
        match self {
            FitModel::Power => "power",
            FitModel::ExpOffset => "exp_offset",
            FitModel::PowExpOffset => "powexp_offset",
            FitModel::Gaussian => "gaussian",
            FitModel::PowerlawLoglog => "powerlaw_loglog",
            FitModel::LinearLoglog => "linear_loglog",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            FitModel::Power | FitModel::PowerlawLoglog => &["a", "alpha"],
            FitModel::ExpOffset => &["a", "gamma", "q_ea"],
            FitModel::PowExpOffset => &["a", "alpha", "gamma", "q_ea"],
            FitModel::Gaussian => &["amplitude", "center", "sigma"],
            FitModel::LinearLoglog => &["slope", "intercept"],
        }
    }
}

/// Parameters with standard errors and the chi quality
/// chi = (1/n_t) sum ((fit - y)/y)^2 for the correlation models,
/// mean squared residual for the others.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub params: Vec<f64>,
    pub errors: Vec<f64>,
    pub chi: f64,
    pub converged: bool,
}

pub(crate) struct LmOutcome {
    pub theta: Vec<f64>,
    pub ssr: f64,
    pub cov: DMatrix<f64>,
    pub converged: bool,
}

/// Levenberg-Marquardt on residuals r(theta); returns best-so-far flagged
/// by `converged` rather than failing.
pub(crate) fn levenberg_marquardt(
    residual: &mut dyn FnMut(&[f64], &mut [f64]),
    n_res: usize,
    theta0: &[f64],
    max_iter: usize,
) -> LmOutcome {
    let p = theta0.len();
    let mut theta = theta0.to_vec();
    let mut r = vec![0.0; n_res];
    residual(&theta, &mut r);
    let mut ssr: f64 = r.iter().map(|x| x * x).sum();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut jac = DMatrix::zeros(n_res, p);
    let mut r_try = vec![0.0; n_res];
    for _ in 0..max_iter {
        // numeric forward-difference Jacobian
        for j in 0..p {
            let h = 1e-7 * theta[j].abs().max(1.0);
            let mut tj = theta.clone();
            tj[j] += h;
            residual(&tj, &mut r_try);
            for i in 0..n_res {
                jac[(i, j)] = (r_try[i] - r[i]) / h;
            }
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let jtr = &jt * DVector::from_column_slice(&r);
        let mut improved = false;
        for _ in 0..12 {
            let mut a = jtj.clone();
            for d in 0..p {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(delta) = a.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let cand: Vec<f64> = theta
                .iter()
                .zip(delta.iter())
                .map(|(t, d)| t + d)
                .collect();
            residual(&cand, &mut r_try);
            let ssr_new: f64 = r_try.iter().map(|x| x * x).sum();
            if ssr_new.is_finite() && ssr_new < ssr {
                let rel = (ssr - ssr_new) / ssr.max(1e-300);
                theta = cand;
                r.copy_from_slice(&r_try);
                ssr = ssr_new;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-12 || ssr < 1e-28 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
        if !improved {
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    // covariance at the optimum
    for j in 0..p {
        let h = 1e-7 * theta[j].abs().max(1.0);
        let mut tj = theta.clone();
        tj[j] += h;
        residual(&tj, &mut r_try);
        for i in 0..n_res {
            jac[(i, j)] = (r_try[i] - r[i]) / h;
        }
    }
    let dof = (n_res as f64 - p as f64).max(1.0);
    let s2 = ssr / dof;
    let jtj = jac.transpose() * &jac;
    let cov = jtj
        .try_inverse()
        .map(|inv| inv * s2)
        .unwrap_or_else(|| DMatrix::from_element(p, p, f64::NAN));
    LmOutcome {
        theta,
        ssr,
        cov,
        converged,
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

/// model value for the three correlation-decay models from internal theta
fn decay_value(model: FitModel, theta: &[f64], t: f64) -> f64 {
    match model {
        FitModel::Power => theta[0].exp() * t.powf(-theta[1]),
        FitModel::ExpOffset => theta[0].exp() * (-theta[1].exp() * t).exp() + sigmoid(theta[2]),
        FitModel::PowExpOffset => {
            theta[0].exp() * t.powf(-theta[1]) * (-theta[2].exp() * t).exp() + sigmoid(theta[3])
        }
        _ => unreachable!(),
    }
}

fn decay_externalize(model: FitModel, out: &LmOutcome) -> (Vec<f64>, Vec<f64>) {
    let th = &out.theta;
    let var = |i: usize| out.cov[(i, i)].max(0.0).sqrt();
    match model {
        FitModel::Power => {
            let a = th[0].exp();
            (vec![a, th[1]], vec![a * var(0), var(1)])
        }
        FitModel::ExpOffset => {
            let a = th[0].exp();
            let g = th[1].exp();
            let q = sigmoid(th[2]);
            (
                vec![a, g, q],
                vec![a * var(0), g * var(1), q * (1.0 - q) * var(2)],
            )
        }
        FitModel::PowExpOffset => {
            let a = th[0].exp();
            let g = th[2].exp();
            let q = sigmoid(th[3]);
            (
                vec![a, th[1], g, q],
                vec![a * var(0), var(1), g * var(2), q * (1.0 - q) * var(3)],
            )
        }
        _ => unreachable!(),
    }
}

/// endpoint log-log slope used to seed the power-law fits
fn power_seed(t: &[f64], y: &[f64]) -> (f64, f64) {
    let (i0, i1) = (0, t.len() - 1);
    let alpha = if y[i1] > 0.0 && y[i0] > 0.0 && t[i1] > t[i0] {
        -((y[i1] / y[i0]).ln() / (t[i1] / t[i0]).ln())
    } else {
        0.5
    };
    let a = (y[i0].max(1e-12)) * t[i0].powf(alpha);
    (a.max(1e-12), alpha)
}

/// rate seed from the half-life of the decay toward a trial offset
fn rate_seed(t: &[f64], y: &[f64], q: f64) -> f64 {
    let y0 = y[0] - q;
    if y0 <= 0.0 {
        return 1.0 / t[t.len() - 1].max(1e-12);
    }
    for k in 0..t.len() {
        if y[k] - q <= 0.5 * y0 && t[k] > 0.0 {
            return std::f64::consts::LN_2 / t[k];
        }
    }
    std::f64::consts::LN_2 / t[t.len() - 1].max(1e-12)
}

/// Nonlinear least squares for the correlation models with multi-start
/// initialization (power-law seed from endpoints, rate seed from half-life).
/// chi is evaluated per the relative-residual definition against `series`.
pub fn fit_correlation(series: &TimeSeries, model: FitModel) -> Result<FitResult, AnalysisError> {
    let t = &series.times;
    let y = &series.values;
    if t.len() < 8 {
        return Err(AnalysisError::TooFewPoints {
            got: t.len(),
            need: 8,
        });
    }
    match model {
        FitModel::Power | FitModel::ExpOffset | FitModel::PowExpOffset => {
            let neg = y.iter().filter(|v| **v <= 0.0).count();
            if neg > 0 && model == FitModel::Power {
                return Err(AnalysisError::NonPositiveValues { count: neg });
            }
        }
        FitModel::PowerlawLoglog | FitModel::LinearLoglog => {
            return loglog_fit(series, model);
        }
        FitModel::Gaussian => {
            return fit_gaussian(t, y);
        }
    }
    let n = t.len();
    let mut residual = |theta: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let f = decay_value(model, theta, t[i]);
            let denom = if y[i].abs() > 1e-300 { y[i] } else { 1e-300 };
            out[i] = (f - y[i]) / denom;
        }
    };
    let (a0, alpha0) = power_seed(t, y);
    let y_last = y[n - 1].clamp(1e-6, 0.95);
    let mut seeds: Vec<Vec<f64>> = Vec::new();
    match model {
        FitModel::Power => {
            for f in [1.0, 0.5, 2.0] {
                seeds.push(vec![a0.ln(), alpha0 * f]);
            }
            seeds.push(vec![(y[0].max(1e-9)).ln(), 0.0]);
        }
        FitModel::ExpOffset => {
            for q in [y_last, 0.5 * y_last, 0.02] {
                let g = rate_seed(t, y, q);
                for f in [1.0, 0.3, 3.0] {
                    seeds.push(vec![(y[0] - q).abs().max(1e-6).ln(), (g * f).ln(), logit(q)]);
                }
            }
        }
        FitModel::PowExpOffset => {
            for q in [y_last, 0.02] {
                let g = rate_seed(t, y, q);
                for al in [0.15, alpha0.clamp(-2.0, 3.0)] {
                    for f in [1.0, 0.3] {
                        seeds.push(vec![
                            (y[0] - q).abs().max(1e-6).ln(),
                            al,
                            (g * f).ln(),
                            logit(q),
                        ]);
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    let mut best: Option<LmOutcome> = None;
    for seed in &seeds {
        let out = levenberg_marquardt(&mut residual, n, seed, 200);
        if best.as_ref().map_or(true, |b| out.ssr < b.ssr) {
            best = Some(out);
        }
    }
    let best = best.unwrap();
    let chi = best.ssr / n as f64;
    let converged = best.converged;
    let (params, errors) = decay_externalize(model, &best);
    Ok(FitResult {
        model,
        params,
        errors,
        chi,
        converged,
    })
}

fn loglog_fit(series: &TimeSeries, model: FitModel) -> Result<FitResult, AnalysisError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut wts = Vec::new();
    for i in 0..series.times.len() {
        let (t, v) = (series.times[i], series.values[i]);
        if t > 0.0 && v > 0.0 {
            xs.push(t.ln());
            ys.push(v.ln());
            // variance of y maps to variance of ln y ~ var/y^2
            let w = series
                .variance
                .as_ref()
                .map(|vv| {
                    let s = vv[i].max(1e-300) / (v * v);
                    1.0 / s
                })
                .unwrap_or(1.0);
            wts.push(w);
        }
    }
    if xs.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            got: xs.len(),
            need: 3,
        });
    }
    let (slope, intercept, s_se, i_se) = numeric::linear_fit(&xs, &ys, Some(&wts));
    let n = xs.len() as f64;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, yv)| {
            let r = yv - intercept - slope * x;
            r * r
        })
        .sum();
    let chi = ssr / n;
    let (params, errors) = match model {
        FitModel::PowerlawLoglog => (vec![intercept.exp(), -slope], vec![intercept.exp() * i_se, s_se]),
        FitModel::LinearLoglog => (vec![slope, intercept], vec![s_se, i_se]),
        _ => unreachable!(),
    };
    Ok(FitResult {
        model,
        params,
        errors,
        chi,
        converged: true,
    })
}

/// Gaussian fit of a histogram/density: y = A exp(-(x-mu)^2/(2 sigma^2)).
pub fn fit_gaussian(x: &[f64], y: &[f64]) -> Result<FitResult, AnalysisError> {
    if x.len() < 4 {
        return Err(AnalysisError::TooFewPoints {
            got: x.len(),
            need: 4,
        });
    }
    let n = x.len();
    let total: f64 = y.iter().sum();
    if total <= 0.0 {
        return Err(AnalysisError::NonPositiveValues { count: n });
    }
    let mu0 = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / total;
    let var0 = x
        .iter()
        .zip(y)
        .map(|(a, b)| b * (a - mu0) * (a - mu0))
        .sum::<f64>()
        / total;
    let sig0 = var0.sqrt().max(1e-6);
    let a0 = y.iter().cloned().fold(0.0f64, f64::max).max(1e-12);
    let mut residual = |theta: &[f64], out: &mut [f64]| {
        let (a, mu, sig) = (theta[0].exp(), theta[1], theta[2].exp());
        for i in 0..n {
            let z = (x[i] - mu) / sig;
            out[i] = a * (-0.5 * z * z).exp() - y[i];
        }
    };
    let mut best: Option<LmOutcome> = None;
    for f in [1.0, 0.5, 2.0] {
        let seed = vec![a0.ln(), mu0, (sig0 * f).ln()];
        let out = levenberg_marquardt(&mut residual, n, &seed, 200);
        if best.as_ref().map_or(true, |b| out.ssr < b.ssr) {
            best = Some(out);
        }
    }
    let best = best.unwrap();
    let a = best.theta[0].exp();
    let sig = best.theta[2].exp();
    let sd = |i: usize| best.cov[(i, i)].max(0.0).sqrt();
    Ok(FitResult {
        model: FitModel::Gaussian,
        params: vec![a, best.theta[1], sig],
        errors: vec![a * sd(0), sd(1), sig * sd(2)],
        chi: best.ssr / n as f64,
        converged: best.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::TimeSeries;

    fn series(times: Vec<f64>, values: Vec<f64>) -> TimeSeries {
        TimeSeries::new(times, values)
    }

    fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64))
            .collect()
    }

    #[test]
    fn power_law_recovered_to_1e6() {
        let t = log_grid(0.1, 50.0, 40);
        let y: Vec<f64> = t.iter().map(|x| 0.8 * x.powf(-0.7)).collect();
        let fit = fit_correlation(&series(t, y), FitModel::Power).unwrap();
        assert!((fit.params[0] - 0.8).abs() < 1e-6, "a = {}", fit.params[0]);
        assert!((fit.params[1] - 0.7).abs() < 1e-6);
        assert!(fit.chi <= 1e-16, "perfect fit must give chi = 0, got {}", fit.chi);
    }

    #[test]
    fn exp_offset_recovers_qea() {
        let t: Vec<f64> = (1..=60).map(|k| 0.5 * k as f64).collect();
        let y: Vec<f64> = t.iter().map(|x| 0.6 * (-0.23 * x).exp() + 0.3).collect();
        let fit = fit_correlation(&series(t, y), FitModel::ExpOffset).unwrap();
        assert!((fit.params[0] - 0.6).abs() < 1e-6);
        assert!((fit.params[1] - 0.23).abs() < 1e-6);
        assert!((fit.params[2] - 0.3).abs() < 1e-6, "q = {}", fit.params[2]);
    }

    #[test]
    fn powexp_offset_recovers_all_four() {
        let t = log_grid(0.2, 40.0, 60);
        let y: Vec<f64> = t
            .iter()
            .map(|x| 0.7 * x.powf(-0.4) * (-0.11 * x).exp() + 0.2)
            .collect();
        let fit = fit_correlation(&series(t, y), FitModel::PowExpOffset).unwrap();
        assert!((fit.params[0] - 0.7).abs() < 1e-5);
        assert!((fit.params[1] - 0.4).abs() < 1e-5);
        assert!((fit.params[2] - 0.11).abs() < 1e-5);
        assert!((fit.params[3] - 0.2).abs() < 1e-5);
    }

    #[test]
    fn gaussian_histogram_fit() {
        let x: Vec<f64> = (-30..=30).map(|k| k as f64 * 0.2).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 2.0 * (-0.5 * (v - 1.3) * (v - 1.3) / (0.8 * 0.8)).exp())
            .collect();
        let fit = fit_gaussian(&x, &y).unwrap();
        assert!((fit.params[0] - 2.0).abs() < 1e-7);
        assert!((fit.params[1] - 1.3).abs() < 1e-7);
        assert!((fit.params[2] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn loglog_models() {
        let t = log_grid(0.5, 200.0, 25);
        let y: Vec<f64> = t.iter().map(|x| 1.7 * x.powf(-1.1)).collect();
        let fit = fit_correlation(&series(t.clone(), y.clone()), FitModel::PowerlawLoglog).unwrap();
        assert!((fit.params[0] - 1.7).abs() < 1e-9);
        assert!((fit.params[1] - 1.1).abs() < 1e-10);
        let fit = fit_correlation(&series(t, y), FitModel::LinearLoglog).unwrap();
        assert!((fit.params[0] + 1.1).abs() < 1e-10);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let t = vec![1.0, 2.0, 3.0];
        let y = vec![1.0, 0.5, 0.3];
        assert!(matches!(
            fit_correlation(&series(t, y), FitModel::Power),
            Err(AnalysisError::TooFewPoints { .. })
        ));
    }
}
