//! Drift matrix of the linearized fluctuation dynamics and its stability.
//!
//! State ordering throughout the crate:
//! (dX_c, dY_c, dX_d, dY_d, dQ, dP, dphi, dL_z).

use crate::params::{derive, DerivedParams, PhysicalParams};
use crate::steady::{self, SteadyState};
use nalgebra::{DMatrix, SMatrix};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

pub type Matrix8 = SMatrix<f64, 8, 8>;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("steady state was solved from different parameters (hash mismatch)")]
    ProvenanceMismatch,
    #[error("drift matrix contains non-finite entries")]
    NonFinite,
    #[error(transparent)]
    Params(#[from] crate::params::ParamsError),
    #[error(transparent)]
    Steady(#[from] crate::steady::SteadyError),
}

/// The 8x8 generator of the linearized dynamics plus the working-point
/// couplings it was built from.
#[derive(Debug, Clone)]
pub struct DriftMatrix {
    pub entries: Matrix8,
    /// Enhanced side modes-cavity coupling G_r = sqrt(2) G a_s (rad/s).
    pub g_r: f64,
    /// Enhanced optorotational coupling g_phi^r = sqrt(2) g_phi a_s (rad/s).
    pub gphi_r: f64,
    /// Modified detuning used (rad/s).
    pub delta_prime: f64,
    pub params_hash: u64,
}

/// Populates the drift matrix at a given steady state.
pub fn build_drift(d: &DerivedParams, s: &SteadyState) -> Result<DriftMatrix, DynamicsError> {
    if s.params_hash != d.params_hash {
        return Err(DynamicsError::ProvenanceMismatch);
    }
    let g_r = 2.0_f64.sqrt() * d.g_coupling * s.a_s;
    let gphi_r = 2.0_f64.sqrt() * d.g_phi * s.a_s;
    let dp = s.delta_prime;
    let mut f = Matrix8::zeros();
    f[(0, 1)] = d.omega_big_c;
    f[(1, 0)] = -d.omega_big_c;
    f[(1, 1)] = -d.gamma_m;
    f[(1, 2)] = -d.cal_a / d.omega_big_c;
    f[(1, 4)] = -d.omegatilde_c * g_r / d.omega_big_c;
    f[(2, 3)] = d.omega_big_d;
    f[(3, 0)] = d.cal_a / d.omega_big_d;
    f[(3, 2)] = -d.omega_big_d;
    f[(3, 3)] = -d.gamma_m;
    f[(3, 4)] = -d.omegatilde_d * g_r / d.omega_big_d;
    f[(4, 4)] = -d.gamma_o / 2.0;
    f[(4, 5)] = -dp;
    f[(5, 0)] = -g_r;
    f[(5, 2)] = -g_r;
    f[(5, 4)] = dp;
    f[(5, 5)] = -d.gamma_o / 2.0;
    f[(5, 6)] = -gphi_r;
    f[(6, 7)] = d.omega_phi;
    f[(7, 4)] = -gphi_r;
    f[(7, 6)] = -d.omega_phi;
    f[(7, 7)] = -d.gamma_phi;
    if f.iter().any(|x| !x.is_finite()) {
        return Err(DynamicsError::NonFinite);
    }
    Ok(DriftMatrix {
        entries: f,
        g_r,
        gphi_r,
        delta_prime: dp,
        params_hash: d.params_hash,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub stable: bool,
    /// Largest eigenvalue real part (rad/s); negative means decaying.
    pub margin: f64,
    pub eigenvalues: Vec<(f64, f64)>,
}

/// Routh-Hurwitz stability via direct eigenvalue computation: stable iff
/// every eigenvalue real part is below -eps with eps scaled by the matrix
/// norm.
pub fn stability(f: &DriftMatrix) -> Result<StabilityReport, DynamicsError> {
    if f.entries.iter().any(|x| !x.is_finite()) {
        return Err(DynamicsError::NonFinite);
    }
    let dm = DMatrix::from_iterator(8, 8, f.entries.iter().copied());
    let eig = dm.complex_eigenvalues();
    let margin = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let eps = 1e-9 * f.entries.norm();
    Ok(StabilityReport {
        stable: margin < -eps,
        margin,
        eigenvalues: eig.iter().map(|z| (z.re, z.im)).collect(),
    })
}

pub fn eigenvalues(f: &DriftMatrix) -> Vec<Complex64> {
    let dm = DMatrix::from_iterator(8, 8, f.entries.iter().copied());
    dm.complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityPoint {
    pub gphi_over_g: f64,
    pub omegaphi_over_omegad: f64,
    pub stable: bool,
    pub margin: f64,
}

/// Stability map over (g_phi/G, omega_phi/omega_d) at fixed Delta' and
/// drive power. Every grid point re-derives the full parameter set: the
/// mirror frequency is moved to the requested ratio and the mirror inertia
/// is solved so the geometric g_phi lands exactly on the requested coupling
/// (g_phi scales as 1/sqrt(omega_phi), so a stale g_phi would be wrong).
pub fn stability_map(
    base: &PhysicalParams,
    gphi_ratios: &[f64],
    omegaphi_ratios: &[f64],
    delta_prime_in_omega_phi: f64,
) -> Result<Vec<StabilityPoint>, DynamicsError> {
    let d0 = derive(base)?;
    let mut out = Vec::with_capacity(gphi_ratios.len() * omegaphi_ratios.len());
    for &r_w in omegaphi_ratios {
        for &r_g in gphi_ratios {
            let omega_phi = r_w * d0.omega_d;
            let g_phi_target = r_g * d0.g_coupling;
            let mut p = base.clone();
            p.mirror_freq = omega_phi / crate::params::TWO_PI;
            // I = hbar (c l / L)^2 / (omega_phi g_phi^2), M = 2 I / R_m^2
            let cl_over_l = p.constants.c * p.oam / p.cavity_length;
            let inertia =
                p.constants.hbar * cl_over_l * cl_over_l / (omega_phi * g_phi_target * g_phi_target);
            p.mirror_mass = 2.0 * inertia / (p.mirror_radius * p.mirror_radius);
            let mut d = derive(&p)?;
            let target_dp = delta_prime_in_omega_phi * d.omega_phi;
            let (dt, _) = steady::delta_tilde_for_delta_prime(&d, target_dp);
            d.delta_tilde = dt;
            let states = steady::solve_steady(&d)?;
            let s = states
                .iter()
                .min_by(|a, b| {
                    (a.delta_prime - target_dp)
                        .abs()
                        .partial_cmp(&(b.delta_prime - target_dp).abs())
                        .unwrap()
                })
                .expect("steady solve returned no branch");
            let f = build_drift(&d, s)?;
            let rep = stability(&f)?;
            out.push(StabilityPoint {
                gphi_over_g: r_g,
                omegaphi_over_omegad: r_w,
                stable: rep.stable,
                margin: rep.margin,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::derive;
    use crate::presets;
    use crate::steady::solve_steady;
    use approx::assert_relative_eq;

    fn fig3_point() -> (DerivedParams, SteadyState) {
        let mut p = presets::fig4();
        let mut d = derive(&p).unwrap();
        let (dt, _) = steady::delta_tilde_for_delta_prime(&d, d.omega_phi);
        p.cavity_detuning_eff = dt / crate::params::TWO_PI;
        d = derive(&p).unwrap();
        let states = solve_steady(&d).unwrap();
        let s = states.into_iter().next().unwrap();
        (d, s)
    }

    #[test]
    fn trace_equals_damping_sum() {
        let (d, s) = fig3_point();
        let f = build_drift(&d, &s).unwrap();
        assert_relative_eq!(
            f.entries.trace(),
            -2.0 * d.gamma_m - d.gamma_o - d.gamma_phi,
            max_relative = 1e-12
        );
    }

    #[test]
    fn sparsity_pattern_matches() {
        let (d, s) = fig3_point();
        let f = build_drift(&d, &s).unwrap();
        let nonzero: &[(usize, usize)] = &[
            (0, 1),
            (1, 0),
            (1, 1),
            (1, 2),
            (1, 4),
            (2, 3),
            (3, 0),
            (3, 2),
            (3, 3),
            (3, 4),
            (4, 4),
            (4, 5),
            (5, 0),
            (5, 2),
            (5, 4),
            (5, 5),
            (5, 6),
            (6, 7),
            (7, 4),
            (7, 6),
            (7, 7),
        ];
        for i in 0..8 {
            for j in 0..8 {
                if !nonzero.contains(&(i, j)) {
                    assert_eq!(f.entries[(i, j)], 0.0, "entry ({i},{j}) should be zero");
                }
            }
        }
        assert_eq!(f.entries[(0, 1)], d.omega_big_c);
        assert_eq!(f.entries[(1, 1)], -d.gamma_m);
        assert_eq!(f.entries[(5, 4)], s.delta_prime);
        assert_eq!(f.entries[(4, 5)], -s.delta_prime);
        assert_eq!(f.entries[(7, 6)], -d.omega_phi);
        assert_eq!(f.entries[(7, 7)], -d.gamma_phi);
    }

    #[test]
    fn zero_field_decouples_blocks() {
        let mut d = derive(&presets::fig2()).unwrap();
        d.eta = 0.0;
        let s = solve_steady(&d).unwrap().remove(0);
        let f = build_drift(&d, &s).unwrap();
        assert_eq!(f.g_r, 0.0);
        assert_eq!(f.gphi_r, 0.0);
        assert_eq!(f.entries[(1, 4)], 0.0);
        assert_eq!(f.entries[(5, 0)], 0.0);
        assert_eq!(f.entries[(7, 4)], 0.0);
        let rep = stability(&f).unwrap();
        assert!(rep.stable);
        // conjugate-pair structure of a real matrix
        let mut ims: Vec<f64> = rep.eigenvalues.iter().map(|e| e.1).collect();
        ims.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for i in 0..4 {
            assert_relative_eq!(ims[i], -ims[7 - i], epsilon = 1e-6 * d.omega_big_c);
        }
    }

    #[test]
    fn no_collisions_removes_cross_coupling() {
        let mut p = presets::fig2();
        p.gtilde_override = Some(0.0);
        let d = derive(&p).unwrap();
        let s = solve_steady(&d).unwrap().remove(0);
        let f = build_drift(&d, &s).unwrap();
        assert_eq!(d.cal_a, 0.0);
        assert_eq!(f.entries[(1, 2)], 0.0);
        assert_eq!(f.entries[(3, 0)], 0.0);
    }

    #[test]
    fn provenance_mismatch_rejected() {
        let (d, s) = fig3_point();
        let mut d2 = d.clone();
        d2.params_hash ^= 1;
        assert!(matches!(
            build_drift(&d2, &s),
            Err(DynamicsError::ProvenanceMismatch)
        ));
    }

    #[test]
    fn published_working_point_is_stable() {
        let (d, s) = fig3_point();
        let f = build_drift(&d, &s).unwrap();
        let rep = stability(&f).unwrap();
        assert!(rep.stable, "margin {}", rep.margin);
    }

    #[test]
    fn map_single_stable_point() {
        let p = presets::fig4();
        let d = derive(&p).unwrap();
        let r_g = d.g_phi / d.g_coupling;
        let r_w = d.omega_phi / d.omega_d;
        let pts = stability_map(&p, &[r_g], &[r_w], 1.0).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].stable);
    }

    #[test]
    fn map_all_stable_without_drive() {
        let mut p = presets::fig4();
        p.drive_power = 1e-30;
        let pts = stability_map(&p, &[0.5, 1.0, 2.0], &[0.5, 1.0], 1.0).unwrap();
        assert!(pts.iter().all(|q| q.stable));
    }
}
