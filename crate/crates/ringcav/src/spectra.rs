//! Frequency-domain response and homodyne output noise spectra.
//!
//! Fourier convention: u(omega) = int u(t) e^{i omega t} dt, so the
//! linearized dynamics give (-i omega I - F) u(omega) = v(omega) and the
//! resolvent M(omega) = (-i omega I - F)^{-1} is the normative object all
//! transfer functions are read off from. Input noise correlators are
//! delta(omega' + omega) with the vacuum quadratures at spectral weight 1/2,
//! so the shot-noise floor is S = 1.

use crate::dynamics::DriftMatrix;
use crate::params::{thermal_occupation, DerivedParams};
use nalgebra::SMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

type CMatrix8 = SMatrix<Complex64, 8, 8>;

#[derive(Debug, Error)]
pub enum SpectraError {
    #[error("resolvent is singular at omega = {0} rad/s")]
    SingularResolvent(f64),
}

/// The resolvent at one response frequency together with the nine scalar
/// transfer functions mapping input noises to the output quadratures.
#[derive(Debug, Clone)]
pub struct TransferSet {
    /// Response angular frequency (rad/s).
    pub omega: f64,
    /// F-tilde_1 .. F-tilde_9 in order.
    pub f: [Complex64; 9],
    /// Full resolvent M(omega) = (-i omega I - F)^{-1}.
    pub m: CMatrix8,
    gamma_o: f64,
}

/// Builds the resolvent and extracts the transfer functions coefficient by
/// coefficient from the rows that feed the output quadratures.
pub fn transfer(fm: &DriftMatrix, d: &DerivedParams, omega: f64) -> Result<TransferSet, SpectraError> {
    let i = Complex64::i();
    let mut a = CMatrix8::zeros();
    for r in 0..8 {
        for c in 0..8 {
            a[(r, c)] = Complex64::new(-fm.entries[(r, c)], 0.0);
        }
        a[(r, r)] -= i * omega;
    }
    let m = a.lu().try_inverse().ok_or(SpectraError::SingularResolvent(omega))?;
    let sg = Complex64::new(d.gamma_o.sqrt(), 0.0);
    let s2 = Complex64::new(2.0_f64.sqrt(), 0.0);
    // delta Q is row 4 and delta P row 5; noise inputs sit at indices
    // 1 (eps_c), 3 (eps_d), 4 (sqrt(g0) Q_in), 5 (sqrt(g0) P_in), 7 (eps_phi).
    let f2 = sg * m[(4, 4)];
    let f3 = -i * sg * m[(4, 5)];
    let f1 = (i * sg * m[(5, 4)] - f3) / 2.0;
    let f4 = i * m[(5, 1)] / s2;
    let f5 = m[(4, 1)] / s2;
    let f6 = i * m[(5, 3)] / s2;
    let f7 = m[(4, 3)] / s2;
    let f8 = i * m[(5, 7)] / s2;
    let f9 = m[(4, 7)] / s2;
    debug_assert!(
        (m[(4, 4)] - m[(5, 5)]).norm() <= 1e-8 * m[(4, 4)].norm().max(1e-300),
        "resolvent lost the Q/P diagonal symmetry"
    );
    Ok(TransferSet {
        omega,
        f: [f1, f2, f3, f4, f5, f6, f7, f8, f9],
        m,
        gamma_o: d.gamma_o,
    })
}

/// The homodyne coefficients xi_1..xi_5 at measurement angle `theta` (rad).
pub fn xi_coefficients(ts: &TransferSet, theta: f64) -> [Complex64; 5] {
    let (s, c) = theta.sin_cos();
    let k = kappa_coefficients(ts);
    [
        k[0] * s + k[1] * c,
        k[1] * s + k[2] * c,
        k[3] * s + k[4] * c,
        k[5] * s + k[6] * c,
        k[7] * s + k[8] * c,
    ]
}

/// The theta-independent repackagings kappa_1..kappa_9 of the transfer
/// functions (xi_i are their sin/cos combinations).
pub fn kappa_coefficients(ts: &TransferSet) -> [Complex64; 9] {
    let i = Complex64::i();
    let sg = Complex64::new(ts.gamma_o.sqrt(), 0.0);
    let s2g = Complex64::new((2.0 * ts.gamma_o).sqrt(), 0.0);
    let f = &ts.f;
    [
        -i * sg * (2.0 * f[0] + f[2]),
        sg * f[1] - 1.0,
        i * sg * f[2],
        -i * s2g * f[3],
        s2g * f[4],
        -i * s2g * f[5],
        s2g * f[6],
        -i * s2g * f[7],
        s2g * f[8],
    ]
}

/// omega (coth(hbar omega / 2 k_B T) - 1) with its analytic limits: zero
/// temperature uses coth -> sgn(omega), omega = 0 uses the classical
/// 2 k_B T / hbar limit.
fn thermal_factor(omega: f64, t: f64, d: &DerivedParams) -> f64 {
    let k = &d.constants;
    if t <= 0.0 {
        return if omega >= 0.0 { 0.0 } else { -2.0 * omega };
    }
    if omega == 0.0 {
        return 2.0 * k.k_b * t / k.hbar;
    }
    let x = k.hbar * omega / (2.0 * k.k_b * t);
    // coth(x) - 1 = 2 / (e^{2x} - 1)
    if x > 350.0 {
        0.0
    } else {
        omega * 2.0 / (2.0 * x).exp_m1()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumResult {
    /// Response angular frequency (rad/s).
    pub omega: f64,
    /// Homodyne angle (rad).
    pub theta: f64,
    /// Output quadrature noise spectral density (shot noise = 1).
    pub s: f64,
    /// Additive breakdown by noise source.
    pub s_vac: f64,
    pub s_th_c: f64,
    pub s_th_d: f64,
    pub s_th_mirror: f64,
    /// Set when omega = 0 forced the classical thermal limit.
    pub zero_freq_limit: bool,
}

fn spectrum_from_xi(
    d: &DerivedParams,
    omega: f64,
    theta: f64,
    xi: &[Complex64; 5],
) -> SpectrumResult {
    let s_vac = xi[0].norm_sqr() + xi[1].norm_sqr() - 2.0 * (xi[0].conj() * xi[1]).im;
    let tf_a = thermal_factor(omega, d.temp_atoms, d);
    let tf_m = thermal_factor(omega, d.temp_mirror, d);
    let s_th_c = 2.0 * d.gamma_m / d.omega_big_c * xi[2].norm_sqr() * tf_a;
    let s_th_d = 2.0 * d.gamma_m / d.omega_big_d * xi[3].norm_sqr() * tf_a;
    let s_th_mirror = 2.0 * d.gamma_phi / d.omega_phi * xi[4].norm_sqr() * tf_m;
    SpectrumResult {
        omega,
        theta,
        s: s_vac + s_th_c + s_th_d + s_th_mirror,
        s_vac,
        s_th_c,
        s_th_d,
        s_th_mirror,
        zero_freq_limit: omega == 0.0 && (d.temp_atoms > 0.0 || d.temp_mirror > 0.0),
    }
}

/// Homodyne output noise spectrum with the full colored (coth) thermal
/// correlators.
pub fn homodyne_spectrum(
    d: &DerivedParams,
    fm: &DriftMatrix,
    omega: f64,
    theta: f64,
) -> Result<SpectrumResult, SpectraError> {
    let ts = transfer(fm, d, omega)?;
    Ok(spectrum_from_xi(d, omega, theta, &xi_coefficients(&ts, theta)))
}

/// Same spectrum evaluated in the Markovian noise regime that the
/// covariance/Lyapunov treatment (and the Monte Carlo oracle) use: the
/// Brownian correlators are replaced by white noise of intensity
/// gamma (2n + 1) evaluated at each oscillator's resonance.
pub fn homodyne_spectrum_markovian(
    d: &DerivedParams,
    fm: &DriftMatrix,
    omega: f64,
    theta: f64,
) -> Result<f64, SpectraError> {
    let ts = transfer(fm, d, omega)?;
    let xi = xi_coefficients(&ts, theta);
    let k = &d.constants;
    let n_c = thermal_occupation(d.omega_big_c, d.temp_atoms, k);
    let n_d = thermal_occupation(d.omega_big_d, d.temp_atoms, k);
    let n_m = thermal_occupation(d.omega_phi, d.temp_mirror, k);
    Ok(xi[0].norm_sqr()
        + xi[1].norm_sqr()
        + 2.0 * d.gamma_m * (2.0 * n_c + 1.0) * xi[2].norm_sqr()
        + 2.0 * d.gamma_m * (2.0 * n_d + 1.0) * xi[3].norm_sqr()
        + 2.0 * d.gamma_phi * (2.0 * n_m + 1.0) * xi[4].norm_sqr())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OptimalAngle {
    /// Minimizing homodyne angle in [0, pi).
    pub theta: f64,
    /// True when S is theta-independent (B1 = B2 = 0).
    pub degenerate: bool,
}

/// Stationary-angle coefficients B1, B2 such that dS/dtheta =
/// B1 sin(2 theta) + B2 cos(2 theta).
pub fn angle_coefficients(d: &DerivedParams, ts: &TransferSet) -> (f64, f64) {
    let k = kappa_coefficients(ts);
    let tf_a = thermal_factor(ts.omega, d.temp_atoms, d);
    let tf_m = thermal_factor(ts.omega, d.temp_mirror, d);
    let wc = 2.0 * d.gamma_m / d.omega_big_c * tf_a;
    let wd = 2.0 * d.gamma_m / d.omega_big_d * tf_a;
    let wm = 2.0 * d.gamma_phi / d.omega_phi * tf_m;
    let b1 = k[0].norm_sqr() - k[2].norm_sqr()
        - 2.0 * (k[0].conj() * k[1]).im
        + 2.0 * (k[1].conj() * k[2]).im
        + wc * (k[3].norm_sqr() - k[4].norm_sqr())
        + wd * (k[5].norm_sqr() - k[6].norm_sqr())
        + wm * (k[7].norm_sqr() - k[8].norm_sqr());
    let b2 = 2.0 * (k[0].conj() * k[1]).re + 2.0 * (k[1].conj() * k[2]).re
        - 2.0 * (k[0].conj() * k[2]).im
        + 2.0 * wc * (k[3].conj() * k[4]).re
        + 2.0 * wd * (k[5].conj() * k[6]).re
        + 2.0 * wm * (k[7].conj() * k[8]).re;
    (b1, b2)
}

/// The measurement angle minimizing S at this frequency. Both stationary
/// branches are evaluated and the smaller-S one returned.
pub fn optimal_angle(
    d: &DerivedParams,
    fm: &DriftMatrix,
    omega: f64,
) -> Result<OptimalAngle, SpectraError> {
    let ts = transfer(fm, d, omega)?;
    let (b1, b2) = angle_coefficients(d, &ts);
    let scale = kappa_coefficients(&ts).iter().map(|k| k.norm_sqr()).sum::<f64>();
    if b1.abs() <= 1e-14 * scale && b2.abs() <= 1e-14 * scale {
        return Ok(OptimalAngle {
            theta: 0.0,
            degenerate: true,
        });
    }
    let mut theta = 0.5 * (-b2).atan2(b1);
    let other = theta + std::f64::consts::FRAC_PI_2;
    let s_a = spectrum_from_xi(d, omega, theta, &xi_coefficients(&ts, theta)).s;
    let s_b = spectrum_from_xi(d, omega, other, &xi_coefficients(&ts, other)).s;
    if s_b < s_a {
        theta = other;
    }
    theta = theta.rem_euclid(std::f64::consts::PI);
    Ok(OptimalAngle {
        theta,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizedPoint {
    pub omega: f64,
    pub theta_opt: f64,
    pub s_opt: f64,
    pub degenerate: bool,
}

/// Per-frequency optimal angle and the resulting squeezing spectrum.
pub fn optimized_spectrum(
    d: &DerivedParams,
    fm: &DriftMatrix,
    omega_grid: &[f64],
) -> Result<Vec<OptimizedPoint>, SpectraError> {
    omega_grid
        .iter()
        .map(|&w| {
            let opt = optimal_angle(d, fm, w)?;
            let s = homodyne_spectrum(d, fm, w, opt.theta)?;
            Ok(OptimizedPoint {
                omega: w,
                theta_opt: opt.theta,
                s_opt: s.s,
                degenerate: opt.degenerate,
            })
        })
        .collect()
}

/// Minimum of the optimized spectrum inside a window around the mirror
/// resonance, located by nested grid refinement (the dip can be far
/// narrower than any fixed grid).
pub fn mirror_resonance_optimum(
    d: &DerivedParams,
    fm: &DriftMatrix,
    rel_window: f64,
) -> Result<OptimizedPoint, SpectraError> {
    let mut lo = d.omega_phi * (1.0 - rel_window);
    let mut hi = d.omega_phi * (1.0 + rel_window);
    let mut best = OptimizedPoint {
        omega: d.omega_phi,
        theta_opt: 0.0,
        s_opt: f64::INFINITY,
        degenerate: false,
    };
    for _ in 0..6 {
        let n = 81;
        let step = (hi - lo) / (n - 1) as f64;
        let grid: Vec<f64> = (0..n).map(|i| lo + i as f64 * step).collect();
        let pts = optimized_spectrum(d, fm, &grid)?;
        let (idx, pt) = pts
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.s_opt.partial_cmp(&b.1.s_opt).unwrap())
            .unwrap();
        if pt.s_opt < best.s_opt {
            best = pt.clone();
        }
        let center = grid[idx];
        lo = center - 2.0 * step;
        hi = center + 2.0 * step;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_drift;
    use crate::params::{derive, TWO_PI};
    use crate::presets;
    use crate::steady::{delta_tilde_for_delta_prime, solve_steady};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn fig4_point() -> (DerivedParams, DriftMatrix) {
        let mut p = presets::fig4();
        let d0 = derive(&p).unwrap();
        let (dt, _) = delta_tilde_for_delta_prime(&d0, d0.omega_phi);
        p.cavity_detuning_eff = dt / TWO_PI;
        let d = derive(&p).unwrap();
        let s = solve_steady(&d).unwrap().remove(0);
        let f = build_drift(&d, &s).unwrap();
        (d, f)
    }

    fn dark_cavity() -> (DerivedParams, DriftMatrix) {
        let mut d = derive(&presets::fig2()).unwrap();
        d.eta = 0.0;
        let s = solve_steady(&d).unwrap().remove(0);
        let f = build_drift(&d, &s).unwrap();
        (d, f)
    }

    #[test]
    fn bare_cavity_transfer_matches_closed_form() {
        // With a_s = 0 the cavity block decouples; invert the 2x2 block by
        // hand and compare F2, F3 against the resolvent path.
        let (d, f) = dark_cavity();
        let dp = f.delta_prime;
        for &w in &[0.0, 0.3 * d.gamma_o, -1.7 * d.gamma_o] {
            let ts = transfer(&f, &d, w).unwrap();
            let s = Complex64::new(d.gamma_o / 2.0, -w);
            let det = s * s + Complex64::new(dp * dp, 0.0);
            let m44 = s / det;
            let m45 = Complex64::new(-dp, 0.0) / det;
            assert_relative_eq!(
                (ts.f[1] - d.gamma_o.sqrt() * m44).norm(),
                0.0,
                epsilon = 1e-12 * m44.norm()
            );
            assert_relative_eq!(
                (ts.f[2] + Complex64::i() * d.gamma_o.sqrt() * m45).norm(),
                0.0,
                epsilon = 1e-12 * m45.norm()
            );
        }
        // quoted structure at omega = 0: F2(0) = sqrt(g0) (g0/2) / ((g0/2)^2 + d'^2)
        let ts0 = transfer(&f, &d, 0.0).unwrap();
        let expect = d.gamma_o.sqrt() * (d.gamma_o / 2.0) / ((d.gamma_o / 2.0).powi(2) + dp * dp);
        assert_relative_eq!(ts0.f[1].re, expect, max_relative = 1e-12);
        assert_abs_diff_eq!(ts0.f[1].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn uncoupled_cavity_has_no_mechanical_transfer() {
        let (d, f) = dark_cavity();
        let ts = transfer(&f, &d, 0.7 * d.gamma_o).unwrap();
        for i in 3..9 {
            assert_abs_diff_eq!(ts.f[i].norm(), 0.0, epsilon = 1e-18);
        }
    }

    #[test]
    fn transfer_conjugation_symmetry() {
        // M(-w) = conj(M(w)) for a real drift, so the transfer functions
        // conjugate directly except those defined with an explicit i factor
        // (indices 1, 3, 4, 6, 8 here), which pick up a sign.
        let (d, f) = fig4_point();
        let sign = [-1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0];
        for &w in &[0.3e3, 4.1e3, 2.0e6] {
            let a = transfer(&f, &d, w).unwrap();
            let b = transfer(&f, &d, -w).unwrap();
            for i in 0..9 {
                assert!(
                    (sign[i] * a.f[i].conj() - b.f[i]).norm()
                        <= 1e-10 * a.f[i].norm().max(1e-300),
                    "F{} violates conjugation symmetry",
                    i + 1
                );
            }
        }
    }

    #[test]
    fn sidemode_susceptibility_peaks_at_resonance() {
        let (d, f) = fig4_point();
        let mut best = (0.0, 0.0);
        let n = 4000;
        for i in 1..n {
            let w = d.omega_big_c * (0.9 + 0.2 * i as f64 / n as f64);
            let v = transfer(&f, &d, w).unwrap().f[4].norm();
            if v > best.1 {
                best = (w, v);
            }
        }
        assert!(
            (best.0 - d.omega_big_c).abs() <= d.gamma_m.max(f.g_r * f.g_r / d.gamma_o),
            "peak of |F5| at {} rad/s, expected near {}",
            best.0,
            d.omega_big_c
        );
    }

    #[test]
    fn uncoupled_spectrum_is_shot_noise() {
        let (d, f) = dark_cavity();
        for &w in &[0.0, 1e3, 1e6, -4e5] {
            for &th in &[0.0, 0.4, 1.2, 2.9] {
                let s = homodyne_spectrum(&d, &f, w, th).unwrap();
                assert_relative_eq!(s.s, 1.0, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn breakdown_sums_to_total() {
        let (d, f) = fig4_point();
        for &w in &[0.5e3, d.omega_big_c, d.omega_phi, 3.3e4] {
            let s = homodyne_spectrum(&d, &f, w, 0.3).unwrap();
            assert_relative_eq!(
                s.s_vac + s.s_th_c + s.s_th_d + s.s_th_mirror,
                s.s,
                max_relative = 1e-12
            );
            assert!(s.s >= 0.0);
        }
    }

    #[test]
    fn output_field_approximate_self_commutation() {
        // Commutator bookkeeping: the vacuum cross term tracks the
        // mechanical commutator weights, i(xi1* xi2 - xi2* xi1) ~=
        // 2 w (gm |xi3|^2/Wc + gm |xi4|^2/Wd + gphi |xi5|^2/wphi). The
        // quadrature-coupled Brownian-noise model is not exactly canonical,
        // so this holds to a few percent rather than machine precision; it
        // still catches sign and scaling mistakes in the xi extraction.
        let (d, f) = fig4_point();
        for &w in &[0.7e3, 4.1e3, 1.3e4] {
            let ts = transfer(&f, &d, w).unwrap();
            let xi = xi_coefficients(&ts, 0.42);
            let lhs = -2.0 * (xi[0].conj() * xi[1]).im;
            let rhs = 2.0
                * w
                * (d.gamma_m / d.omega_big_c * xi[2].norm_sqr()
                    + d.gamma_m / d.omega_big_d * xi[3].norm_sqr()
                    + d.gamma_phi / d.omega_phi * xi[4].norm_sqr());
            assert_abs_diff_eq!(lhs, rhs, epsilon = 0.05 * (1.0 + lhs.abs() + rhs.abs()));
        }
    }

    #[test]
    fn optimal_angle_beats_grid_search() {
        let (d, f) = fig4_point();
        let freqs = [
            0.93 * d.omega_big_d,
            d.omega_big_d,
            1.01 * d.omega_phi,
            d.omega_big_c,
            1.4 * d.omega_big_c,
        ];
        for &w in &freqs {
            let opt = optimal_angle(&d, &f, w).unwrap();
            let s_opt = homodyne_spectrum(&d, &f, w, opt.theta).unwrap().s;
            for i in 0..360 {
                let th = i as f64 * std::f64::consts::PI / 360.0;
                let s = homodyne_spectrum(&d, &f, w, th).unwrap().s;
                assert!(
                    s_opt <= s + 1e-9,
                    "grid angle {th} beats optimum at omega = {w}: {s} < {s_opt}"
                );
            }
        }
    }

    #[test]
    fn degenerate_angle_when_uncoupled() {
        let (d, f) = dark_cavity();
        let opt = optimal_angle(&d, &f, 1.1e3).unwrap();
        assert!(opt.degenerate);
        assert_eq!(opt.theta, 0.0);
    }

    #[test]
    fn shot_noise_floor_far_from_resonances() {
        let (d, f) = fig4_point();
        for &hz in &[5e3, 2e4, 1e5] {
            let s = homodyne_spectrum(&d, &f, TWO_PI * hz, 0.9).unwrap();
            assert!(
                (s.s - 1.0).abs() < 1e-2,
                "S = {} at {} Hz, expected shot-noise floor",
                s.s,
                hz
            );
        }
    }

    #[test]
    fn zero_frequency_is_flagged_and_finite() {
        let (d, f) = fig4_point();
        let s = homodyne_spectrum(&d, &f, 0.0, 0.5).unwrap();
        assert!(s.zero_freq_limit);
        assert!(s.s.is_finite());
    }
}
