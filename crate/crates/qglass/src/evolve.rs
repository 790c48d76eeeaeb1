//! Krylov time evolution of sector states and the measurement layer:
//! return probability, shot sampling, local magnetizations, spin
//! autocorrelations, and noise spectra.
//!
//! The propagator is short-iterative Lanczos with full reorthogonalization
//! and adaptive step control against a per-unit-time error budget.  The
//! Hamiltonian is shifted by the initial energy expectation before
//! propagation (global phase restored afterwards), which keeps the effective
//! spectral radius at the scale the state actually explores.

use num_complex::Complex64;
use rand::Rng;
use std::collections::BTreeMap;
use thiserror::Error;

use crate::hilbert::{Basis, SparseHamiltonian};
use crate::lattice::DisorderRealization;
use crate::rngkey;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("state dimension {got} does not match Hamiltonian dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("states live in different bases ({0} vs {1})")]
    BasisMismatch(usize, usize),
    #[error("propagation failed to converge; achieved residual {residual:.3e} at step {step}")]
    NonConvergence { residual: f64, step: usize },
    #[error("initial state must be a single basis word")]
    NonProductInitialState,
    #[error("time grid must be uniform for spectra (dt varies by {0:.3e})")]
    NonUniformGrid(f64),
    #[error("span {span:.3} is too short: need at least {need:.3} (two decades above dt)")]
    SpanTooShort { span: f64, need: f64 },
    #[error("midband rejection failed after {0} tries")]
    MidbandRejection(usize),
}

/// Complex amplitudes over a fixed-magnetization basis.
#[derive(Debug, Clone)]
pub struct StateVector {
    pub amps: Vec<Complex64>,
    pub n: u32,
    pub n_up: u32,
}

impl StateVector {
    pub fn basis_state(basis: &Basis, word: u64) -> StateVector {
        let idx = basis.rank(word).expect("word must belong to the sector");
        let mut amps = vec![Complex64::new(0.0, 0.0); basis.dim()];
        amps[idx] = Complex64::new(1.0, 0.0);
        StateVector {
            amps,
            n: basis.n,
            n_up: basis.n_up,
        }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// Accuracy and resource knobs for the propagator.
#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    /// target error per unit time (1/J units)
    pub accuracy_per_time: f64,
    pub max_krylov_dim: usize,
    /// abort when the accepted step would fall below this
    pub min_step: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            accuracy_per_time: 1e-9,
            max_krylov_dim: 28,
            min_step: 1e-12,
        }
    }
}

struct LanczosBasis {
    vecs: Vec<Vec<Complex64>>,
    alphas: Vec<f64>,
    betas: Vec<f64>,
    /// norm of the (m+1)-th residual vector
    beta_next: f64,
    happy: bool,
}

fn lanczos(
    h: &SparseHamiltonian,
    shift: f64,
    start: &[Complex64],
    m_max: usize,
    breakdown: f64,
) -> LanczosBasis {
    let dim = start.len();
    let mut vecs: Vec<Vec<Complex64>> = Vec::with_capacity(m_max + 1);
    vecs.push(start.to_vec());
    let mut alphas = Vec::with_capacity(m_max);
    let mut betas = Vec::with_capacity(m_max);
    let mut w = vec![Complex64::new(0.0, 0.0); dim];
    for jstep in 0..m_max {
        h.apply(&vecs[jstep], &mut w);
        for x in w.iter_mut().zip(&vecs[jstep]) {
            *x.0 -= *x.1 * shift;
        }
        let alpha: f64 = vecs[jstep]
            .iter()
            .zip(&w)
            .map(|(v, ww)| (v.conj() * ww).re)
            .sum();
        alphas.push(alpha);
        for (x, v) in w.iter_mut().zip(&vecs[jstep]) {
            *x -= v * alpha;
        }
        if jstep > 0 {
            let b = betas[jstep - 1];
            for (x, v) in w.iter_mut().zip(&vecs[jstep - 1]) {
                *x -= v * b;
            }
        }
        // full reorthogonalization, one classical Gram-Schmidt pass
        for prev in vecs.iter() {
            let c: Complex64 = prev.iter().zip(&w).map(|(v, ww)| v.conj() * ww).sum();
            if c.norm_sqr() > 0.0 {
                for (x, v) in w.iter_mut().zip(prev) {
                    *x -= v * c;
                }
            }
        }
        let beta = w.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if beta <= breakdown {
            return LanczosBasis {
                vecs,
                alphas,
                betas,
                beta_next: 0.0,
                happy: true,
            };
        }
        if jstep + 1 == m_max {
            return LanczosBasis {
                vecs,
                alphas,
                betas,
                beta_next: beta,
                happy: false,
            };
        }
        let inv = 1.0 / beta;
        betas.push(beta);
        vecs.push(w.iter().map(|x| x * inv).collect());
    }
    unreachable!()
}

struct SmallExp {
    eigvals: Vec<f64>,
    /// eigenvectors column-major (m x m)
    q: nalgebra::DMatrix<f64>,
}

impl SmallExp {
    fn new(alphas: &[f64], betas: &[f64]) -> SmallExp {
        let m = alphas.len();
        let mut t = nalgebra::DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = t.symmetric_eigen();
        SmallExp {
            eigvals: eig.eigenvalues.iter().copied().collect(),
            q: eig.eigenvectors,
        }
    }

    /// u = exp(-i tau T) e_1
    fn expv(&self, tau: f64) -> Vec<Complex64> {
        let m = self.eigvals.len();
        let mut u = vec![Complex64::new(0.0, 0.0); m];
        for l in 0..m {
            let phase = Complex64::from_polar(1.0, -tau * self.eigvals[l]);
            let c = phase * self.q[(0, l)];
            for (k, uk) in u.iter_mut().enumerate() {
                *uk += c * self.q[(k, l)];
            }
        }
        u
    }
}

/// e^{-iHt} psi0 to the configured accuracy.  Pure: identical inputs give
/// bit-identical output.  Negative t is allowed (reversal checks).
pub fn evolve(
    h: &SparseHamiltonian,
    psi0: &StateVector,
    t: f64,
    cfg: &EvolutionConfig,
) -> Result<StateVector, EvolveError> {
    let mut psi = psi0.clone();
    evolve_in_place(h, &mut psi, t, cfg)?;
    Ok(psi)
}

/// In-place variant used by grid drivers.
pub fn evolve_in_place(
    h: &SparseHamiltonian,
    psi: &mut StateVector,
    t: f64,
    cfg: &EvolutionConfig,
) -> Result<(), EvolveError> {
    if psi.dim() != h.dim {
        return Err(EvolveError::DimensionMismatch {
            got: psi.dim(),
            want: h.dim,
        });
    }
    if t == 0.0 {
        return Ok(());
    }
    let shift = h.expectation(&psi.amps) / psi.amps.iter().map(|a| a.norm_sqr()).sum::<f64>();
    let hnorm = h.gershgorin_bound().max(1e-30);
    let breakdown = 1e-13 * hnorm;
    let sign = t.signum();
    let mut remaining = t.abs();
    let budget = cfg.accuracy_per_time.max(1e-15);
    let mut tau_mag = (cfg.max_krylov_dim as f64 / hnorm).min(remaining);
    let mut step = 0usize;
    while remaining > 0.0 {
        step += 1;
        let lb = lanczos(h, shift, &psi.amps, cfg.max_krylov_dim, breakdown);
        let small = SmallExp::new(&lb.alphas, &lb.betas);
        let m = lb.alphas.len();
        let mut tau = tau_mag.min(remaining);
        let mut u;
        loop {
            u = small.expv(sign * tau);
            if lb.happy {
                tau = remaining;
                u = small.expv(sign * tau);
                break;
            }
            let err = lb.beta_next * u[m - 1].norm() * tau;
            let allowed = budget * tau;
            if err <= allowed {
                // next-step suggestion from order-m error model
                let grow = if err > 0.0 {
                    0.9 * (allowed / err).powf(1.0 / m as f64)
                } else {
                    2.0
                };
                tau_mag = (tau * grow.clamp(0.25, 2.0)).min(4.0 * tau);
                break;
            }
            let shrinkage = 0.8 * (allowed / err).powf(1.0 / m as f64);
            tau *= shrinkage.clamp(0.1, 0.9);
            if tau < cfg.min_step {
                return Err(EvolveError::NonConvergence {
                    residual: err,
                    step,
                });
            }
        }
        // psi = V u
        for x in psi.amps.iter_mut() {
            *x = Complex64::new(0.0, 0.0);
        }
        for (k, uk) in u.iter().enumerate() {
            if uk.norm_sqr() == 0.0 {
                continue;
            }
            for (x, v) in psi.amps.iter_mut().zip(&lb.vecs[k]) {
                *x += v * uk;
            }
        }
        remaining -= tau;
        if remaining < cfg.min_step {
            remaining = 0.0;
        }
    }
    // restore the global phase removed by the energy shift
    let phase = Complex64::from_polar(1.0, -shift * t);
    for x in psi.amps.iter_mut() {
        *x *= phase;
    }
    Ok(())
}

/// Drive one trajectory across an ascending time grid, invoking `observe`
/// with the state at every grid point.
pub fn evolve_observed(
    h: &SparseHamiltonian,
    psi0: &StateVector,
    times: &[f64],
    cfg: &EvolutionConfig,
    mut observe: impl FnMut(usize, f64, &StateVector),
) -> Result<(), EvolveError> {
    let mut psi = psi0.clone();
    let mut now = 0.0;
    for (i, &t) in times.iter().enumerate() {
        assert!(t >= now, "time grid must be non-decreasing from 0");
        if t > now {
            evolve_in_place(h, &mut psi, t - now, cfg)?;
            now = t;
        }
        observe(i, t, &psi);
    }
    Ok(())
}

/// R = |<psi0|psit>|^2, clamped into [0,1] against rounding.
pub fn return_probability(psi0: &StateVector, psit: &StateVector) -> Result<f64, EvolveError> {
    if psi0.dim() != psit.dim() {
        return Err(EvolveError::BasisMismatch(psi0.dim(), psit.dim()));
    }
    Ok(psi0.inner(psit).norm_sqr().clamp(0.0, 1.0))
}

/// Multiset of measured basis words: `shots` i.i.d. samples from |amps|^2.
#[derive(Debug, Clone)]
pub struct ShotSample {
    pub counts: BTreeMap<u64, u64>,
    pub shots: u64,
}

impl ShotSample {
    pub fn frequency(&self, word: u64) -> f64 {
        *self.counts.get(&word).unwrap_or(&0) as f64 / self.shots as f64
    }
}

pub fn sample_bitstrings(psit: &StateVector, basis: &Basis, shots: u64, seed: u64) -> ShotSample {
    assert!(shots >= 1);
    let mut cdf = Vec::with_capacity(psit.dim());
    let mut acc = 0.0;
    for a in &psit.amps {
        acc += a.norm_sqr();
        cdf.push(acc);
    }
    let total = acc;
    let mut rng = rngkey::rng_for(&[seed, 0x73686f74]);
    let mut counts = BTreeMap::new();
    for _ in 0..shots {
        let x: f64 = rng.gen::<f64>() * total;
        let idx = cdf.partition_point(|&c| c < x).min(psit.dim() - 1);
        *counts.entry(basis.word(idx)).or_insert(0) += 1;
    }
    ShotSample { counts, shots }
}

/// Per-site <sigma_i^z> in the Pauli convention (values in [-1, 1]).
pub fn local_magnetization(psit: &StateVector, basis: &Basis) -> Vec<f64> {
    let n = basis.n as usize;
    let mut mz = vec![0.0; n];
    for (idx, a) in psit.amps.iter().enumerate() {
        let p = a.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let w = basis.word(idx);
        for (i, m) in mz.iter_mut().enumerate() {
            *m += p * if w >> i & 1 == 1 { 1.0 } else { -1.0 };
        }
    }
    mz
}

/// Per-site <sigma_i^z(0) sigma_i^z(t)> trace for a product initial word,
/// which reduces to s_i(0) <sigma_i^z(t)>.
#[derive(Debug, Clone)]
pub struct AutocorrTrace {
    pub times: Vec<f64>,
    /// site-major: per_site[i][k] at times[k]
    pub per_site: Vec<Vec<f64>>,
    pub site_avg: Vec<f64>,
}

pub fn autocorrelation_trace(
    h: &SparseHamiltonian,
    basis: &Basis,
    word0: u64,
    times: &[f64],
    cfg: &EvolutionConfig,
) -> Result<AutocorrTrace, EvolveError> {
    if word0.count_ones() != basis.n_up {
        return Err(EvolveError::NonProductInitialState);
    }
    let n = basis.n as usize;
    let s0: Vec<f64> = (0..n)
        .map(|i| if word0 >> i & 1 == 1 { 1.0 } else { -1.0 })
        .collect();
    let psi0 = StateVector::basis_state(basis, word0);
    let mut per_site = vec![vec![0.0; times.len()]; n];
    let mut site_avg = vec![0.0; times.len()];
    evolve_observed(h, &psi0, times, cfg, |k, _t, psi| {
        let mz = local_magnetization(psi, basis);
        let mut acc = 0.0;
        for i in 0..n {
            let c = s0[i] * mz[i];
            per_site[i][k] = c;
            acc += c;
        }
        site_avg[k] = acc / n as f64;
    })?;
    Ok(AutocorrTrace {
        times: times.to_vec(),
        per_site,
        site_avg,
    })
}

/// Windowing for [`noise_spectrum`].
#[derive(Debug, Clone)]
pub struct NoisePolicy {
    /// subtract the mean of this trailing fraction before transforming
    pub detrend_tail_fraction: f64,
    pub hann: bool,
    pub freq_points: usize,
}

impl Default for NoisePolicy {
    fn default() -> Self {
        NoisePolicy {
            detrend_tail_fraction: 0.25,
            hann: true,
            freq_points: 120,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NoiseSpectrum {
    pub omega: Vec<f64>,
    pub power: Vec<f64>,
}

impl NoiseSpectrum {
    /// log-log slope of S(omega) over [lo, hi]
    pub fn loglog_slope(&self, lo: f64, hi: f64) -> (f64, f64) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (w, p) in self.omega.iter().zip(&self.power) {
            if *w >= lo && *w <= hi && *p > 0.0 {
                xs.push(w.ln());
                ys.push(p.ln());
            }
        }
        let (slope, _, se, _) = crate::numeric::linear_fit(&xs, &ys, None);
        (slope, se)
    }
}

/// Periodogram of the site/disorder-averaged trace on a log frequency grid.
/// Requires a uniform grid spanning at least two decades above its spacing.
pub fn noise_spectrum(
    times: &[f64],
    traces: &[Vec<f64>],
    policy: &NoisePolicy,
) -> Result<NoiseSpectrum, EvolveError> {
    assert!(!traces.is_empty() && times.len() >= 4);
    let n = times.len();
    let dt = times[1] - times[0];
    for k in 1..n {
        let d = times[k] - times[k - 1];
        if (d - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(EvolveError::NonUniformGrid((d - dt).abs()));
        }
    }
    let span = times[n - 1] - times[0];
    if span < 100.0 * dt {
        return Err(EvolveError::SpanTooShort {
            span,
            need: 100.0 * dt,
        });
    }
    let mut avg = vec![0.0; n];
    for tr in traces {
        assert_eq!(tr.len(), n);
        for (a, v) in avg.iter_mut().zip(tr) {
            *a += v;
        }
    }
    let count = traces.len() as f64;
    avg.iter_mut().for_each(|a| *a /= count);
    let tail = ((n as f64 * policy.detrend_tail_fraction) as usize).max(1);
    let base: f64 = avg[n - tail..].iter().sum::<f64>() / tail as f64;
    let win: Vec<f64> = (0..n)
        .map(|k| {
            if policy.hann {
                let x = std::f64::consts::PI * k as f64 / (n - 1) as f64;
                let s = (2.0 * x).cos();
                0.5 * (1.0 - s)
            } else {
                1.0
            }
        })
        .collect();
    let wnorm: f64 = win.iter().map(|w| w * w).sum();
    let w_lo = 2.0 * std::f64::consts::PI / span;
    let w_hi = 0.8 * std::f64::consts::PI / dt;
    let mut omega = Vec::with_capacity(policy.freq_points);
    let mut power = Vec::with_capacity(policy.freq_points);
    for i in 0..policy.freq_points {
        let f = w_lo * (w_hi / w_lo).powf(i as f64 / (policy.freq_points - 1) as f64);
        let mut re = 0.0;
        let mut im = 0.0;
        for k in 0..n {
            let c = win[k] * (avg[k] - base);
            let ph = f * times[k];
            re += c * ph.cos();
            im -= c * ph.sin();
        }
        omega.push(f);
        power.push(2.0 * dt * (re * re + im * im) / wnorm);
    }
    Ok(NoiseSpectrum { omega, power })
}

/// Draw a random basis word whose diagonal energy sits near the middle of
/// the spectrum: accept iff |sum_i h_i s_i| <= 0.05 w sqrt(n/12).
pub fn select_midband_word(
    basis: &Basis,
    disorder: &DisorderRealization,
    seed: u64,
) -> Result<u64, EvolveError> {
    let mut rng = rngkey::rng_for(&[seed, 0x6d696462]);
    let thr = 0.05 * disorder.w * (basis.n as f64).sqrt() / 12f64.sqrt();
    const TRIES: usize = 200_000;
    for _ in 0..TRIES {
        let idx = rng.gen_range(0..basis.dim());
        let w = basis.word(idx);
        let mut e = 0.0;
        for i in 0..basis.n as usize {
            e += disorder.h[i] * if w >> i & 1 == 1 { 0.5 } else { -0.5 };
        }
        if e.abs() <= thr {
            return Ok(w);
        }
    }
    Err(EvolveError::MidbandRejection(TRIES))
}
