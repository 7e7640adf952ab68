//! Stochastic integration of the linearized Langevin equations, used as an
//! independent cross-check of the Lyapunov covariance and of the Markovian
//! output spectrum. Two schemes: explicit Euler-Maruyama (with an optional
//! boxcar-decimated homodyne output record for spectral estimation) and an
//! exact one-step Gaussian propagator for stiff drift matrices whose weakly
//! damped fast modes an explicit step cannot afford to resolve.
//!
//! The noises are the Markovian white limits: each diagonal diffusion entry
//! D_ii feeds component i with an increment sqrt(D_ii dt) z. The cavity
//! input quadratures are additionally remembered per step so the homodyne
//! output y = cos(t) (sqrt(g0) Q - Q_in) + sin(t) (sqrt(g0) P - P_in) can be
//! formed with the correct input-output correlations.

use crate::dynamics::{stability, DriftMatrix, Matrix8};
use crate::entangle::diffusion_matrix;
use crate::params::DerivedParams;
use nalgebra::SVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

type Vector8 = SVector<f64, 8>;

#[derive(Debug, Error)]
pub enum McError {
    #[error("time step {dt} exceeds stability bound {bound} (0.1 / max |eigenvalue|)")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("drift matrix is unstable; trajectories diverge")]
    Unstable,
    #[error("trajectory diverged at step {0} (non-finite or > 1e12 amplitude)")]
    Diverged(usize),
}

#[derive(Debug, Clone)]
pub struct McConfig {
    /// Integration step (s). Must satisfy dt < 0.1 / max |eig(F)|.
    pub dt: f64,
    /// Steps discarded before statistics start.
    pub burn_in: usize,
    /// Recorded steps per trajectory.
    pub steps: usize,
    /// Independent trajectories (parallelized).
    pub n_traj: usize,
    /// Base RNG seed; trajectory i uses stream i.
    pub seed: u64,
    /// Homodyne angle for the recorded output record (rad).
    pub theta: f64,
    /// Keep the per-step output record for spectral estimation.
    pub record_output: bool,
    /// Boxcar length for the output record: every `record_stride` raw steps
    /// are averaged into one recorded sample. Averaging (rather than
    /// subsampling) keeps the white shot-noise density at 1 after
    /// decimation; the recorded sample spacing is `dt * record_stride`.
    pub record_stride: usize,
}

impl McConfig {
    /// Step chosen as a fixed fraction of the fastest timescale.
    pub fn default_for(fm: &DriftMatrix, steps: usize, n_traj: usize, seed: u64) -> Self {
        let lam = max_eig_modulus(fm);
        McConfig {
            dt: 0.02 / lam,
            burn_in: steps / 4,
            steps,
            n_traj,
            seed,
            theta: 0.0,
            record_output: false,
            record_stride: 1,
        }
    }
}

fn max_eig_modulus(fm: &DriftMatrix) -> f64 {
    crate::dynamics::eigenvalues(fm)
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct McResult {
    /// Sample second moments, averaged over time and trajectories.
    pub covariance: [[f64; 8]; 8],
    /// Standard error of each covariance entry across trajectories.
    pub stderr: [[f64; 8]; 8],
    pub dt: f64,
    pub steps: usize,
    pub n_traj: usize,
    /// Per-trajectory homodyne output records (empty unless requested).
    #[serde(skip)]
    pub outputs: Vec<Vec<f64>>,
}

struct TrajOut {
    sum: [[f64; 8]; 8],
    output: Vec<f64>,
}

fn run_trajectory(
    fm: &DriftMatrix,
    noise_amp: &[f64; 8],
    cfg: &McConfig,
    sqrt_gamma_o: f64,
    stream: u64,
) -> Result<TrajOut, McError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let normal = StandardNormal;
    let f = &fm.entries;
    let dt = cfg.dt;
    let qin_scale = (1.0 / (2.0 * dt)).sqrt();
    let mut u = Vector8::zeros();
    let mut sum = [[0.0; 8]; 8];
    let stride = cfg.record_stride.max(1);
    let mut output = Vec::with_capacity(if cfg.record_output {
        cfg.steps / stride
    } else {
        0
    });
    let mut box_acc = 0.0f64;
    let mut box_n = 0usize;
    let (sth, cth) = cfg.theta.sin_cos();
    for step in 0..cfg.burn_in + cfg.steps {
        let mut z = [0.0f64; 8];
        for zi in &mut z {
            *zi = normal.sample(&mut rng);
        }
        let drift = f * u * dt;
        for i in 0..8 {
            u[i] += drift[i] + noise_amp[i] * dt.sqrt() * z[i];
        }
        if !u.iter().all(|x| x.is_finite() && x.abs() < 1e12) {
            return Err(McError::Diverged(step));
        }
        if step < cfg.burn_in {
            continue;
        }
        for r in 0..8 {
            for c in r..8 {
                sum[r][c] += u[r] * u[c];
            }
        }
        if cfg.record_output {
            // the same Gaussians that drove the cavity this step, rescaled
            // to the input quadrature sample over the bin
            let qin = z[4] * qin_scale;
            let pin = z[5] * qin_scale;
            box_acc += cth * (sqrt_gamma_o * u[4] - qin) + sth * (sqrt_gamma_o * u[5] - pin);
            box_n += 1;
            if box_n == stride {
                output.push(box_acc / stride as f64);
                box_acc = 0.0;
                box_n = 0;
            }
        }
    }
    for r in 0..8 {
        for c in r..8 {
            sum[r][c] /= cfg.steps as f64;
            sum[c][r] = sum[r][c];
        }
    }
    Ok(TrajOut { sum, output })
}

/// Integrates `n_traj` trajectories in parallel and pools their stationary
/// second moments. Errors if the step violates the explicit-scheme bound or
/// the drift is unstable.
pub fn simulate(fm: &DriftMatrix, d: &DerivedParams, cfg: &McConfig) -> Result<McResult, McError> {
    let lam = max_eig_modulus(fm);
    let bound = 0.1 / lam;
    if cfg.dt >= bound {
        return Err(McError::StepTooLarge { dt: cfg.dt, bound });
    }
    if !stability(fm).map(|r| r.stable).unwrap_or(false) {
        return Err(McError::Unstable);
    }
    let diff = diffusion_matrix(d);
    let mut noise_amp = [0.0f64; 8];
    for i in 0..8 {
        noise_amp[i] = diff[(i, i)].sqrt();
    }
    let sqrt_gamma_o = d.gamma_o.sqrt();
    let trajs: Result<Vec<TrajOut>, McError> = (0..cfg.n_traj as u64)
        .into_par_iter()
        .map(|i| run_trajectory(fm, &noise_amp, cfg, sqrt_gamma_o, i))
        .collect();
    Ok(pool_trajectories(trajs?, cfg))
}

fn pool_trajectories(trajs: Vec<TrajOut>, cfg: &McConfig) -> McResult {
    let n = cfg.n_traj as f64;
    let mut mean = [[0.0; 8]; 8];
    let mut m2 = [[0.0; 8]; 8];
    for t in &trajs {
        for r in 0..8 {
            for c in 0..8 {
                mean[r][c] += t.sum[r][c] / n;
            }
        }
    }
    for t in &trajs {
        for r in 0..8 {
            for c in 0..8 {
                m2[r][c] += (t.sum[r][c] - mean[r][c]).powi(2);
            }
        }
    }
    let mut stderr = [[0.0; 8]; 8];
    if cfg.n_traj > 1 {
        for r in 0..8 {
            for c in 0..8 {
                stderr[r][c] = (m2[r][c] / (n * (n - 1.0))).sqrt();
            }
        }
    }
    McResult {
        covariance: mean,
        stderr,
        dt: cfg.dt,
        steps: cfg.steps,
        n_traj: cfg.n_traj,
        outputs: trajs.into_iter().map(|t| t.output).collect(),
    }
}

/// Richardson-extrapolated covariance: Euler-Maruyama has O(dt) weak bias,
/// so 2 V(dt/2) - V(dt) cancels the leading error term. Returns
/// (extrapolated covariance, combined stderr).
pub fn simulate_extrapolated(
    fm: &DriftMatrix,
    d: &DerivedParams,
    cfg: &McConfig,
) -> Result<([[f64; 8]; 8], [[f64; 8]; 8]), McError> {
    let coarse = simulate(fm, d, cfg)?;
    let mut fine_cfg = cfg.clone();
    fine_cfg.dt = cfg.dt / 2.0;
    fine_cfg.steps = cfg.steps * 2;
    fine_cfg.burn_in = cfg.burn_in * 2;
    fine_cfg.seed = cfg.seed.wrapping_add(0x9e3779b97f4a7c15);
    let fine = simulate(fm, d, &fine_cfg)?;
    let mut v = [[0.0; 8]; 8];
    let mut e = [[0.0; 8]; 8];
    for r in 0..8 {
        for c in 0..8 {
            v[r][c] = 2.0 * fine.covariance[r][c] - coarse.covariance[r][c];
            e[r][c] = (4.0 * fine.stderr[r][c].powi(2) + coarse.stderr[r][c].powi(2)).sqrt();
        }
    }
    Ok((v, e))
}

/// One-step matrices of the exact Gaussian discretization of
/// du = F u dt + dW, <dW dW^T> = D dt:
///   Ad = exp(F dt),   Qd = int_0^dt exp(F s) D exp(F^T s) ds.
/// Both are built by a short Taylor series at a scaled-down step followed by
/// doubling (Ad <- Ad^2, Qd <- Ad Qd Ad^T + Qd), which stays well-conditioned
/// for stable F at any dt.
pub fn exact_discretization(f: &Matrix8, d: &Matrix8, dt: f64) -> (Matrix8, Matrix8) {
    let scaled = f.norm() * dt;
    let k = if scaled > 0.05 {
        (scaled / 0.05).log2().ceil() as u32
    } else {
        0
    };
    let h = dt / 2f64.powi(k as i32);
    let fh = f * h;
    let mut ad = Matrix8::identity();
    let mut term = Matrix8::identity();
    // m_j is the j-th derivative of exp(F s) D exp(F^T s) at s = 0, so the
    // integral over [0, h] is sum_j m_j h^(j+1) / (j+1)!
    let mut m = *d;
    let mut qd = m * h;
    let mut hp = h;
    for j in 1..=14 {
        term = term * fh / j as f64;
        ad += term;
        m = f * m + m * f.transpose();
        hp *= h / (j + 1) as f64;
        qd += m * hp;
    }
    for _ in 0..k {
        qd = ad * qd * ad.transpose() + qd;
        ad = ad * ad;
    }
    (ad, qd)
}

/// Samples the stationary covariance with the exact one-step propagator
/// u_{n+1} = Ad u_n + w, w ~ N(0, Qd). There is no discretization bias at
/// any step size, so `cfg.dt` can be chosen from the slowest relaxation rate
/// instead of the fastest oscillation - the practical route for stiff drift
/// matrices whose weakly damped modes an explicit scheme cannot afford to
/// resolve. No output record is produced.
pub fn simulate_exact(
    fm: &DriftMatrix,
    d: &DerivedParams,
    cfg: &McConfig,
) -> Result<McResult, McError> {
    if !stability(fm).map(|r| r.stable).unwrap_or(false) {
        return Err(McError::Unstable);
    }
    let diff = diffusion_matrix(d);
    let (ad, qd) = exact_discretization(&fm.entries, &diff, cfg.dt);
    // symmetric square root; Qd can be numerically semidefinite, so clamp
    let se = qd.symmetric_eigen();
    let l = se.eigenvectors * Matrix8::from_diagonal(&se.eigenvalues.map(|e| e.max(0.0).sqrt()));
    let trajs: Result<Vec<TrajOut>, McError> = (0..cfg.n_traj as u64)
        .into_par_iter()
        .map(|stream| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream);
            let normal = StandardNormal;
            let mut u = Vector8::zeros();
            let mut sum = [[0.0; 8]; 8];
            for step in 0..cfg.burn_in + cfg.steps {
                let z = Vector8::from_fn(|_, _| normal.sample(&mut rng));
                u = ad * u + l * z;
                if !u.iter().all(|x| x.is_finite() && x.abs() < 1e12) {
                    return Err(McError::Diverged(step));
                }
                if step < cfg.burn_in {
                    continue;
                }
                for r in 0..8 {
                    for c in r..8 {
                        sum[r][c] += u[r] * u[c];
                    }
                }
            }
            for r in 0..8 {
                for c in r..8 {
                    sum[r][c] /= cfg.steps as f64;
                    sum[c][r] = sum[r][c];
                }
            }
            Ok(TrajOut {
                sum,
                output: Vec::new(),
            })
        })
        .collect();
    Ok(pool_trajectories(trajs?, cfg))
}

/// Welch output-spectrum estimate from trajectory records: Hann-windowed
/// non-overlapping segments, P = (dt / U) |FFT|^2 with U = sum of window
/// weights squared, doubled to match the density normalization in which
/// vacuum shot noise is S = 1.
pub fn output_spectrum_estimate(
    outputs: &[Vec<f64>],
    dt: f64,
    segment_len: usize,
) -> Vec<(f64, f64)> {
    assert!(segment_len >= 8);
    let window: Vec<f64> = (0..segment_len)
        .map(|k| {
            let x = std::f64::consts::PI * k as f64 / segment_len as f64;
            x.sin().powi(2)
        })
        .collect();
    let u: f64 = window.iter().map(|w| w * w).sum();
    let nbin = segment_len / 2;
    let mut acc = vec![0.0f64; nbin];
    let mut count = 0usize;
    for rec in outputs {
        for seg in rec.chunks_exact(segment_len) {
            // plain DFT; segment lengths stay small enough (<= 8192)
            for (b, a) in acc.iter_mut().enumerate().take(nbin) {
                let w0 = 2.0 * std::f64::consts::PI * b as f64 / segment_len as f64;
                let (mut re, mut im) = (0.0, 0.0);
                for (k, (&x, &wv)) in seg.iter().zip(&window).enumerate() {
                    let ph = w0 * k as f64;
                    re += wv * x * ph.cos();
                    im += wv * x * ph.sin();
                }
                *a += (re * re + im * im) * dt / u;
            }
            count += 1;
        }
    }
    let scale = if count > 0 { 2.0 / count as f64 } else { 0.0 };
    (0..nbin)
        .map(|b| {
            let omega = 2.0 * std::f64::consts::PI * b as f64 / (segment_len as f64 * dt);
            (omega, acc[b] * scale)
        })
        .collect()
}
