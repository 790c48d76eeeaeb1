//! Statistical post-processing: Savitzky-Golay filtering, the fit-model zoo
//! with the chi quality, Q_EA extraction, ln R distributions and the eta
//! scaling, and Laplacian-mode diffusion fits.

pub mod fit;

pub use fit::{fit_correlation, fit_gaussian, FitModel, FitResult};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::EigenmodeSet;
use crate::numeric;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("savgol window {window} must be odd, above degree {degree}, and within length {len}")]
    WindowDegree {
        window: usize,
        degree: usize,
        len: usize,
    },
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { got: usize, need: usize },
    #[error("{count} non-positive values where positive data is required")]
    NonPositiveValues { count: usize },
    #[error("fit window [{lo}, {hi}] narrower than half a decade")]
    WindowTooNarrow { lo: f64, hi: f64 },
    #[error("mode/series length mismatch: {got} vs {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("eta scaling needs >= 3 distinct sizes")]
    DegenerateSizes,
    #[error("diffusion fit needs >= {need} modes below the cutoff, got {got}")]
    InsufficientModes { got: usize, need: usize },
}

/// Timestamped observable trace (times in 1/J).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub variance: Option<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> TimeSeries {
        assert_eq!(times.len(), values.len());
        assert!(
            times.windows(2).all(|w| w[0] < w[1]),
            "times must be strictly increasing"
        );
        TimeSeries {
            times,
            values,
            variance: None,
        }
    }

    pub fn with_variance(mut self, variance: Vec<f64>) -> TimeSeries {
        assert_eq!(variance.len(), self.values.len());
        self.variance = Some(variance);
        self
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Savitzky-Golay smoothing in index space: local least-squares polynomial
/// of `degree` over `window` points; endpoints use off-center evaluation on
/// the truncated (first/last full) window.
pub fn savgol(series: &TimeSeries, window: usize, degree: usize) -> Result<TimeSeries, AnalysisError> {
    let n = series.len();
    if window % 2 == 0 || window <= degree || window > n {
        return Err(AnalysisError::WindowDegree {
            window,
            degree,
            len: n,
        });
    }
    let half = window / 2;
    // coefficient row for evaluating the LSQ polynomial at offset `e`
    // within a window at integer offsets xs
    let coeff_row = |xs: &[f64], e: f64| -> Vec<f64> {
        let m = xs.len();
        let p = degree + 1;
        let mut v = DMatrix::zeros(m, p);
        for (i, &x) in xs.iter().enumerate() {
            for jp in 0..p {
                v[(i, jp)] = x.powi(jp as i32);
            }
        }
        let vt = v.transpose();
        let g = (&vt * &v).try_inverse().expect("savgol normal equations");
        let mut row = vec![0.0; m];
        for i in 0..m {
            let mut acc = 0.0;
            for jp in 0..p {
                let mut ge = 0.0;
                for kp in 0..p {
                    ge += g[(jp, kp)] * vt[(kp, i)];
                }
                acc += e.powi(jp as i32) * ge;
            }
            row[i] = acc;
        }
        row
    };
    let centered: Vec<f64> = (0..window).map(|i| i as f64 - half as f64).collect();
    let center_row = coeff_row(&centered, 0.0);
    let mut out = vec![0.0; n];
    for i in 0..n {
        if i >= half && i + half < n {
            let mut acc = 0.0;
            for k in 0..window {
                acc += center_row[k] * series.values[i - half + k];
            }
            out[i] = acc;
        } else if i < half {
            let row = coeff_row(&centered, i as f64 - half as f64);
            let mut acc = 0.0;
            for k in 0..window {
                acc += row[k] * series.values[k];
            }
            out[i] = acc;
        } else {
            let e = (i + window - n) as f64 - half as f64;
            let row = coeff_row(&centered, e);
            let mut acc = 0.0;
            for k in 0..window {
                acc += row[k] * series.values[n - window + k];
            }
            out[i] = acc;
        }
    }
    Ok(TimeSeries {
        times: series.times.clone(),
        values: out,
        variance: None,
    })
}

/// Outcome of the Q_EA extraction: all three decay models fitted on the
/// filtered series, winner selected by chi.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QeaExtraction {
    pub q_ea: f64,
    pub winner: FitModel,
    pub fits: Vec<FitResult>,
}

/// Fit the three decay laws to a spin-glass correlation trace (Pauli
/// normalization, C(0) = 1) and select by chi.  Q_EA is 0 for the pure
/// power law, the fitted offset otherwise.  A numerically constant trace is
/// the frozen limit: Q_EA equals the constant.
pub fn extract_qea(c: &TimeSeries, _w: f64) -> Result<QeaExtraction, AnalysisError> {
    let lo = c.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = c.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        return Ok(QeaExtraction {
            q_ea: 0.5 * (hi + lo),
            winner: FitModel::ExpOffset,
            fits: Vec::new(),
        });
    }
    // fit on the raw series; the filter only enters the chi evaluation
    // (it suppresses fluctuation noise, not the fit parameters)
    let window = smoothing_window(c.len());
    let filtered = match window {
        Some(w) => savgol(c, w, 2)?,
        None => c.clone(),
    };
    let models = [FitModel::Power, FitModel::ExpOffset, FitModel::PowExpOffset];
    let mut fits = Vec::new();
    for m in models {
        let mut f = fit_correlation(c, m)?;
        f.chi = chi_against(&f, &filtered);
        fits.push(f);
    }
    let chi_min = fits.iter().map(|f| f.chi).fold(f64::INFINITY, f64::min);
    // argmin by chi; near-ties (nested models reaching the same curve)
    // resolve toward the model with fewer parameters, in listed order
    let mut winner = 0;
    for i in 0..fits.len() {
        if fits[i].chi <= chi_min * 1.02 + 1e-15 {
            winner = i;
            break;
        }
    }
    let q_ea = match fits[winner].model {
        FitModel::Power => 0.0,
        FitModel::ExpOffset => fits[winner].params[2],
        FitModel::PowExpOffset => fits[winner].params[3],
        _ => unreachable!(),
    };
    Ok(QeaExtraction {
        q_ea: q_ea.clamp(0.0, 1.0),
        winner: fits[winner].model,
        fits,
    })
}

/// chi = (1/n_t) sum ((C_fit - C_t)/C_t)^2 against the filtered trace
fn chi_against(fit: &FitResult, filtered: &TimeSeries) -> f64 {
    let mut acc = 0.0;
    for (t, y) in filtered.times.iter().zip(&filtered.values) {
        let f = match fit.model {
            FitModel::Power => fit.params[0] * t.powf(-fit.params[1]),
            FitModel::ExpOffset => fit.params[0] * (-fit.params[1] * t).exp() + fit.params[2],
            FitModel::PowExpOffset => {
                fit.params[0] * t.powf(-fit.params[1]) * (-fit.params[2] * t).exp()
                    + fit.params[3]
            }
            _ => unreachable!(),
        };
        let denom = if y.abs() > 1e-300 { *y } else { 1e-300 };
        let r = (f - y) / denom;
        acc += r * r;
    }
    acc / filtered.len() as f64
}

/// default filter window 11 (degree 2), shrunk for short series
fn smoothing_window(len: usize) -> Option<usize> {
    if len < 9 {
        return None;
    }
    let w = 11.min(if len % 2 == 0 { len - 1 } else { len });
    Some(if w % 2 == 0 { w - 1 } else { w })
}

/// Typical-value summary of a set of return probabilities at fixed time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LnRTypical {
    /// direct mean of ln R
    pub mean_ln: f64,
    /// Gaussian-fit center of the ln R histogram (= mean_ln when fallback)
    pub center: f64,
    /// Gaussian-fit width (sample std when fallback)
    pub sigma: f64,
    /// true when the histogram was too sparse for a stable fit
    pub fallback: bool,
}

impl LnRTypical {
    pub fn r_typ(&self) -> f64 {
        self.center.exp()
    }
}

/// Fit the distribution of ln R with a Gaussian (Freedman-Diaconis binning);
/// the direct mean of ln R is reported alongside and used when the
/// histogram is sparse.
pub fn ln_r_typical(samples: &[f64]) -> Result<LnRTypical, AnalysisError> {
    if samples.len() < 30 {
        return Err(AnalysisError::TooFewPoints {
            got: samples.len(),
            need: 30,
        });
    }
    let bad = samples.iter().filter(|r| **r <= 0.0).count();
    if bad > 0 {
        return Err(AnalysisError::NonPositiveValues { count: bad });
    }
    let ln_r: Vec<f64> = samples.iter().map(|r| r.ln()).collect();
    let mean_ln = numeric::mean(&ln_r);
    let sd = numeric::std_dev(&ln_r);
    let iqr = numeric::quantile(&ln_r, 0.75) - numeric::quantile(&ln_r, 0.25);
    let width = 2.0 * iqr / (ln_r.len() as f64).cbrt();
    let lo = ln_r.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ln_r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let fallback = |fb: bool| LnRTypical {
        mean_ln,
        center: mean_ln,
        sigma: sd,
        fallback: fb,
    };
    if width <= 0.0 || hi - lo <= width {
        return Ok(fallback(true));
    }
    let nbins = (((hi - lo) / width).ceil() as usize).clamp(4, 200);
    let bw = (hi - lo) / nbins as f64;
    let mut counts = vec![0.0; nbins];
    for v in &ln_r {
        let b = (((v - lo) / bw) as usize).min(nbins - 1);
        counts[b] += 1.0;
    }
    let nonempty = counts.iter().filter(|c| **c > 0.0).count();
    if nonempty < 5 {
        return Ok(fallback(true));
    }
    let centers: Vec<f64> = (0..nbins).map(|b| lo + (b as f64 + 0.5) * bw).collect();
    let total = ln_r.len() as f64;
    let density: Vec<f64> = counts.iter().map(|c| c / (total * bw)).collect();
    match fit_gaussian(&centers, &density) {
        Ok(fit) if fit.converged && fit.params[2].is_finite() => Ok(LnRTypical {
            mean_ln,
            center: fit.params[1],
            sigma: fit.params[2],
            fallback: false,
        }),
        _ => Ok(fallback(true)),
    }
}

/// Power-law exponent of R_typ(t) ~ (Jt)^-eta over a window: weighted
/// linear regression of -ln R_typ against ln t.
pub fn fit_eta(r_typ: &TimeSeries, t_lo: f64, t_hi: f64) -> Result<(f64, f64), AnalysisError> {
    if t_hi / t_lo < 10f64.sqrt() {
        return Err(AnalysisError::WindowTooNarrow { lo: t_lo, hi: t_hi });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut wt = Vec::new();
    for i in 0..r_typ.len() {
        let (t, r) = (r_typ.times[i], r_typ.values[i]);
        if t >= t_lo && t <= t_hi && t > 0.0 {
            if r <= 0.0 {
                return Err(AnalysisError::NonPositiveValues { count: 1 });
            }
            xs.push(t.ln());
            ys.push(-r.ln());
            wt.push(
                r_typ
                    .variance
                    .as_ref()
                    .map(|v| 1.0 / v[i].max(1e-12))
                    .unwrap_or(1.0),
            );
        }
    }
    if xs.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            got: xs.len(),
            need: 3,
        });
    }
    let (slope, _, se, _) = numeric::linear_fit(&xs, &ys, Some(&wt));
    Ok((slope, se))
}

/// Finite-size scaling eta ~ kappa n^p: regression of ln eta on ln n.
/// Returns (p, kappa, p_se).
pub fn fit_eta_scaling(pairs: &[(usize, f64)]) -> Result<(f64, f64, f64), AnalysisError> {
    let mut sizes: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(AnalysisError::DegenerateSizes);
    }
    let xs: Vec<f64> = pairs.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = pairs
        .iter()
        .map(|p| {
            if p.1 > 0.0 {
                p.1.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(AnalysisError::NonPositiveValues { count: 1 });
    }
    let (p, lnk, p_se, _) = numeric::linear_fit(&xs, &ys, None);
    Ok((p, lnk.exp(), p_se))
}

/// One trajectory of per-site magnetization snapshots (time-major).
#[derive(Debug, Clone)]
pub struct MagTrajectory {
    pub times: Vec<f64>,
    /// mags[k][i] = <sigma_i^z> at times[k]
    pub mags: Vec<Vec<f64>>,
}

/// m_k(t) = sum_i v_k(i) <sigma_i^z(t)> for every mode of one trajectory
/// (k-major output).
pub fn project_modes(
    traj: &MagTrajectory,
    modes: &EigenmodeSet,
) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let n = modes.modes[0].len();
    for m in &traj.mags {
        if m.len() != n {
            return Err(AnalysisError::LengthMismatch {
                got: m.len(),
                want: n,
            });
        }
    }
    let nk = modes.modes.len();
    let mut out = vec![vec![0.0; traj.times.len()]; nk];
    for (k, mode) in modes.modes.iter().enumerate() {
        for (ti, mz) in traj.mags.iter().enumerate() {
            out[k][ti] = mode.iter().zip(mz).map(|(v, m)| v * m).sum();
        }
    }
    Ok(out)
}

/// <m_k(t) m_k(0)> averaged over trajectories, normalized to 1 at t = 0.
#[derive(Debug, Clone)]
pub struct ModeCorrelation {
    pub times: Vec<f64>,
    /// corr[k][t_idx]
    pub corr: Vec<Vec<f64>>,
}

pub fn mode_correlation(
    trajs: &[MagTrajectory],
    modes: &EigenmodeSet,
) -> Result<ModeCorrelation, AnalysisError> {
    assert!(!trajs.is_empty());
    let times = trajs[0].times.clone();
    let nk = modes.modes.len();
    let nt = times.len();
    let mut num = vec![vec![0.0; nt]; nk];
    let mut den = vec![0.0; nk];
    for traj in trajs {
        let mk = project_modes(traj, modes)?;
        for k in 0..nk {
            let m0 = mk[k][0];
            den[k] += m0 * m0;
            for ti in 0..nt {
                num[k][ti] += mk[k][ti] * m0;
            }
        }
    }
    let mut corr = vec![vec![0.0; nt]; nk];
    for k in 0..nk {
        let d = if den[k].abs() > 1e-300 { den[k] } else { 1e-300 };
        for ti in 0..nt {
            corr[k][ti] = num[k][ti] / d;
        }
    }
    Ok(ModeCorrelation { times, corr })
}

/// Site/trajectory-averaged spin-glass correlation
/// C(t) = mean_i <sigma_i^z(0) sigma_i^z(t)>^2, which for product initial
/// states equals mean_i <sigma_i^z(t)>^2 (Pauli normalization, C(0) = 1).
pub fn spin_glass_correlation(trajs: &[MagTrajectory]) -> TimeSeries {
    assert!(!trajs.is_empty());
    let times = trajs[0].times.clone();
    let nt = times.len();
    let mut acc = vec![0.0; nt];
    let mut cnt = 0.0;
    for traj in trajs {
        for (ti, mz) in traj.mags.iter().enumerate() {
            let m2: f64 = mz.iter().map(|m| m * m).sum::<f64>() / mz.len() as f64;
            acc[ti] += m2;
        }
        cnt += 1.0;
    }
    acc.iter_mut().for_each(|a| *a /= cnt);
    TimeSeries {
        times,
        values: acc,
        variance: None,
    }
}

/// a e^{-Gamma t} + M_inf fit of a normalized mode correlation, plus the
/// short-time log-slope rate over the first e-fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxationFit {
    pub gamma: f64,
    pub m_inf: f64,
    pub amplitude: f64,
    pub gamma_err: f64,
    pub m_inf_err: f64,
    pub gamma_short: f64,
    pub converged: bool,
}

pub fn fit_relaxation(corr: &TimeSeries) -> Result<RelaxationFit, AnalysisError> {
    let n = corr.len();
    if n < 6 {
        return Err(AnalysisError::TooFewPoints { got: n, need: 6 });
    }
    let t = &corr.times;
    let y = &corr.values;
    // constant trace: frozen mode
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        return Ok(RelaxationFit {
            gamma: 0.0,
            m_inf: 0.5 * (hi + lo),
            amplitude: 0.0,
            gamma_err: 0.0,
            m_inf_err: 0.0,
            gamma_short: 0.0,
            converged: true,
        });
    }
    let mut residual = |theta: &[f64], out: &mut [f64]| {
        let (a, g, m) = (theta[0], theta[1].exp(), theta[2].tanh());
        for i in 0..n {
            out[i] = a * (-g * t[i]).exp() + m - y[i];
        }
    };
    let y_last = y[n - 1].clamp(-0.999, 0.999);
    let mut best: Option<fit::LmOutcome> = None;
    for m0 in [y_last, 0.0] {
        let a0 = (y[0] - m0).clamp(-2.0, 2.0);
        // half-life of the decaying part
        let mut g0 = 1.0 / t[n - 1].max(1e-9);
        for i in 0..n {
            if (y[i] - m0).abs() <= 0.5 * (y[0] - m0).abs() && t[i] > 0.0 {
                g0 = std::f64::consts::LN_2 / t[i];
                break;
            }
        }
        for f in [1.0, 0.3, 3.0] {
            let seed = vec![a0, (g0 * f).max(1e-9).ln(), m0.atanh()];
            let out = fit::levenberg_marquardt(&mut residual, n, &seed, 200);
            if best.as_ref().map_or(true, |b| out.ssr < b.ssr) {
                best = Some(out);
            }
        }
    }
    let best = best.unwrap();
    let g = best.theta[1].exp();
    let m = best.theta[2].tanh();
    let sd = |i: usize| best.cov[(i, i)].max(0.0).sqrt();
    // short-time rate: log-slope while the trace stays above 1/e of its
    // initial value (strong-disorder effective rate)
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n {
        if y[i] > 0.0 && y[i] >= y[0] / std::f64::consts::E {
            xs.push(t[i]);
            ys.push(y[i].ln());
        } else if !xs.is_empty() {
            break;
        }
    }
    let gamma_short = if xs.len() >= 2 {
        -numeric::linear_fit(&xs, &ys, None).0
    } else {
        g
    };
    Ok(RelaxationFit {
        gamma: g,
        m_inf: m,
        amplitude: best.theta[0],
        gamma_err: g * sd(1),
        m_inf_err: (1.0 - m * m) * sd(2),
        gamma_short,
        converged: best.converged,
    })
}

/// Power-law fit Gamma = D lambda^beta over modes with lambda <= cutoff.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionFit {
    pub d: f64,
    pub beta: f64,
    pub d_err: f64,
    pub beta_err: f64,
    pub modes_used: usize,
    /// true when beta departs from 1 beyond its standard error
    pub beta_anomalous: bool,
}

pub fn fit_diffusion(points: &[(f64, f64)], cutoff: f64) -> Result<DiffusionFit, AnalysisError> {
    let sel: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(l, g)| l > 0.0 && l <= cutoff && g > 0.0)
        .collect();
    if sel.len() < 3 {
        return Err(AnalysisError::InsufficientModes {
            got: sel.len(),
            need: 3,
        });
    }
    let xs: Vec<f64> = sel.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = sel.iter().map(|p| p.1.ln()).collect();
    let (beta, lnd, beta_se, lnd_se) = numeric::linear_fit(&xs, &ys, None);
    let d = lnd.exp();
    Ok(DiffusionFit {
        d,
        beta,
        d_err: d * lnd_se,
        beta_err: beta_se,
        modes_used: sel.len(),
        beta_anomalous: (beta - 1.0).abs() > beta_se.max(1e-12),
    })
}

/// Per-mode relaxation summary plus the global diffusion fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionSummary {
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub m_infs: Vec<f64>,
    pub fit: Option<DiffusionFit>,
}
