//! Physical input parameters and the derived constants consumed by the rest
//! of the library.
//!
//! Configuration files carry cyclic frequencies (Hz, the convention of every
//! experimental quote); everything downstream of [`derive`] is in angular
//! units (rad/s). That conversion happens exactly once, here.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

/// Fundamental constants. Overridable from config for unit tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Constants {
    /// Reduced Planck constant (J s).
    pub hbar: f64,
    /// Boltzmann constant (J/K).
    pub k_b: f64,
    /// Speed of light (m/s).
    pub c: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            hbar: 1.054_571_817e-34,
            k_b: 1.380_649e-23,
            c: 2.997_924_58e8,
        }
    }
}

/// Mass of a sodium atom (kg), the condensate species used throughout.
pub const SODIUM_MASS: f64 = 3.81754e-26;

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("domain error computing {quantity}: negative radicand {value}")]
    Domain { quantity: String, value: f64 },
}

use thiserror::Error;

/// Raw experimental inputs. Frequencies are cyclic (Hz); lengths m; masses kg;
/// temperatures K; power W.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    /// Condensate atom mass (kg).
    pub atom_mass: f64,
    /// Number of condensate atoms N.
    pub n_atoms: f64,
    /// Ring trap radius R (m).
    pub ring_radius: f64,
    /// Radial trap frequency omega_rho / 2 pi (Hz).
    pub trap_radial: f64,
    /// Axial trap frequency omega_z / 2 pi (Hz).
    pub trap_axial: f64,
    /// s-wave scattering length a_Na (m).
    pub scattering_length: f64,
    /// Single atom--single photon coupling g_a / 2 pi (Hz).
    pub atom_photon_coupling: f64,
    /// Atomic detuning Delta_a / 2 pi (Hz, signed, nonzero).
    pub atom_detuning: f64,
    /// Bare cavity frequency omega_0 / 2 pi (Hz).
    pub cavity_freq: f64,
    /// Cavity linewidth gamma_0 / 2 pi (Hz).
    pub cavity_linewidth: f64,
    /// Cavity length L (m).
    pub cavity_length: f64,
    /// Topological charge l of the LG drive.
    pub oam: f64,
    /// Condensate winding number L_p.
    pub winding: i64,
    /// Input drive power P_in (W).
    pub drive_power: f64,
    /// Effective cavity detuning Delta-tilde / 2 pi (Hz, signed).
    pub cavity_detuning_eff: f64,
    /// Rotating mirror mass M (kg).
    pub mirror_mass: f64,
    /// Rotating mirror radius R_m (m).
    pub mirror_radius: f64,
    /// Mirror torsional frequency omega_phi / 2 pi (Hz).
    pub mirror_freq: f64,
    /// Mirror damping gamma_phi / 2 pi (Hz).
    pub mirror_damping: f64,
    /// Side-mode damping gamma_m / 2 pi (Hz).
    pub sidemode_damping: f64,
    /// Side-mode bath temperature T (K).
    pub temp_atoms: f64,
    /// Mirror bath temperature T_phi (K).
    pub temp_mirror: f64,
    /// Optional direct override of the atomic interaction g-tilde / 2 pi (Hz).
    /// Reproduces caption choices like "g-tilde = 14 g-tilde_m".
    #[serde(default)]
    pub gtilde_override: Option<f64>,
    #[serde(default)]
    pub constants: Constants,
}

impl PhysicalParams {
    /// Checks the structural invariants on the raw inputs.
    pub fn check(&self) -> Result<(), ParamsError> {
        let positive: [(&str, f64); 13] = [
            ("atom_mass", self.atom_mass),
            ("ring_radius", self.ring_radius),
            ("trap_radial", self.trap_radial),
            ("trap_axial", self.trap_axial),
            ("scattering_length", self.scattering_length),
            ("cavity_linewidth", self.cavity_linewidth),
            ("cavity_length", self.cavity_length),
            ("mirror_mass", self.mirror_mass),
            ("mirror_radius", self.mirror_radius),
            ("mirror_freq", self.mirror_freq),
            ("mirror_damping", self.mirror_damping),
            ("sidemode_damping", self.sidemode_damping),
            ("drive_power", self.drive_power),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ParamsError::Invalid(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("temp_atoms", self.temp_atoms),
            ("temp_mirror", self.temp_mirror),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ParamsError::Invalid(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if self.n_atoms < 1.0 {
            return Err(ParamsError::Invalid("n_atoms must be >= 1".into()));
        }
        if self.oam < 1.0 {
            return Err(ParamsError::Invalid("oam must be >= 1".into()));
        }
        if self.atom_detuning == 0.0 {
            return Err(ParamsError::Invalid(
                "atom_detuning must be nonzero (U0 = g_a^2 / Delta_a)".into(),
            ));
        }
        Ok(())
    }

    /// Hash over every physics-relevant input, used for provenance checks
    /// between derived parameters, steady states and drift matrices.
    pub fn hash(&self) -> u64 {
        let mut h = Sha256::new();
        let mut f = |x: f64| h.update(x.to_bits().to_le_bytes());
        f(self.atom_mass);
        f(self.n_atoms);
        f(self.ring_radius);
        f(self.trap_radial);
        f(self.trap_axial);
        f(self.scattering_length);
        f(self.atom_photon_coupling);
        f(self.atom_detuning);
        f(self.cavity_freq);
        f(self.cavity_linewidth);
        f(self.cavity_length);
        f(self.drive_power);
        f(self.cavity_detuning_eff);
        f(self.mirror_mass);
        f(self.mirror_radius);
        f(self.mirror_freq);
        f(self.mirror_damping);
        f(self.sidemode_damping);
        f(self.temp_atoms);
        f(self.temp_mirror);
        f(self.gtilde_override.unwrap_or(f64::NAN));
        f(self.constants.hbar);
        f(self.constants.k_b);
        f(self.constants.c);
        h.update(self.oam.to_bits().to_le_bytes());
        h.update(self.winding.to_le_bytes());
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

/// Every effective constant of the model, in angular units (rad/s unless
/// noted). Produced once by [`derive`] and passed around read-only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedParams {
    /// U_0 = g_a^2 / Delta_a.
    pub u0: f64,
    /// Side modes-cavity coupling G = U_0 sqrt(N) / (2 sqrt(2)).
    pub g_coupling: f64,
    /// Drive amplitude eta = sqrt(P_in gamma_0 / (hbar omega_0)).
    pub eta: f64,
    /// Single-atom moment of inertia I_a = m R^2 (kg m^2).
    pub i_atom: f64,
    /// Mirror moment of inertia I = M R_m^2 / 2 (kg m^2).
    pub i_mirror: f64,
    /// Optorotational coupling g_phi = (c l / L) sqrt(hbar / (I omega_phi)).
    pub g_phi: f64,
    /// Bare side-mode frequencies omega_{c,d} = hbar (L_p +/- 2l)^2 / (2 I_a).
    pub omega_c: f64,
    pub omega_d: f64,
    /// Atomic interaction per pair, g-tilde (rad/s).
    pub gtilde: f64,
    /// Dressed side-mode frequencies Omega_{c,d}.
    pub omega_big_c: f64,
    pub omega_big_d: f64,
    /// omega-tilde_{c,d} = omega_{c,d} + 2 g-tilde N.
    pub omegatilde_c: f64,
    pub omegatilde_d: f64,
    /// A = 2 g-tilde N (omega_c - omega_d) (rad/s^2, signed).
    pub cal_a: f64,
    /// Effective detuning Delta-tilde (rad/s, signed).
    pub delta_tilde: f64,
    /// Bare detuning Delta_0 = Delta-tilde + U_0 N / 2 (reported only).
    pub delta_0: f64,
    /// Cavity frequency omega_0.
    pub omega_0: f64,
    /// Cavity linewidth gamma_0.
    pub gamma_o: f64,
    /// Side-mode damping gamma_m.
    pub gamma_m: f64,
    /// Mirror damping gamma_phi.
    pub gamma_phi: f64,
    /// Mirror frequency omega_phi.
    pub omega_phi: f64,
    pub n_atoms: f64,
    pub oam: f64,
    pub winding: i64,
    pub drive_power: f64,
    pub temp_atoms: f64,
    pub temp_mirror: f64,
    pub constants: Constants,
    /// Provenance hash of the inputs this was derived from.
    pub params_hash: u64,
}

/// Converts raw physical inputs into every derived constant. Deterministic
/// and pure; all outputs in angular units.
pub fn derive(p: &PhysicalParams) -> Result<DerivedParams, ParamsError> {
    if p.atom_detuning == 0.0 {
        return Err(ParamsError::Invalid(
            "atom_detuning must be nonzero (U0 = g_a^2 / Delta_a)".into(),
        ));
    }
    let k = &p.constants;
    let g_a = TWO_PI * p.atom_photon_coupling;
    let delta_a = TWO_PI * p.atom_detuning;
    let u0 = g_a * g_a / delta_a;
    let n = p.n_atoms;
    let g_coupling = u0 * n.sqrt() / (2.0 * 2.0_f64.sqrt());

    let i_atom = p.atom_mass * p.ring_radius * p.ring_radius;
    let i_mirror = p.mirror_mass * p.mirror_radius * p.mirror_radius / 2.0;

    let lp = p.winding as f64;
    let l = p.oam;
    let omega_c = k.hbar * (lp + 2.0 * l).powi(2) / (2.0 * i_atom);
    let omega_d = k.hbar * (lp - 2.0 * l).powi(2) / (2.0 * i_atom);

    let gtilde = match p.gtilde_override {
        Some(hz) => TWO_PI * hz,
        None => {
            // g = 2 hbar omega_rho a_Na / R, g-tilde = g / (4 pi hbar)
            let omega_rho = TWO_PI * p.trap_radial;
            omega_rho * p.scattering_length / (TWO_PI * p.ring_radius)
        }
    };

    let omega_phi = TWO_PI * p.mirror_freq;
    let gphi_rad = k.hbar / (i_mirror * omega_phi);
    if gphi_rad < 0.0 {
        return Err(ParamsError::Domain {
            quantity: "g_phi".into(),
            value: gphi_rad,
        });
    }
    let g_phi = (k.c * l / p.cavity_length) * gphi_rad.sqrt();

    let gamma_o = TWO_PI * p.cavity_linewidth;
    let omega_0 = TWO_PI * p.cavity_freq;
    let eta = (p.drive_power * gamma_o / (k.hbar * omega_0)).sqrt();

    let gn = gtilde * n;
    let dressed = |w: f64, name: &str| -> Result<f64, ParamsError> {
        let r = (w + 4.0 * gn).powi(2) - 4.0 * gn * gn;
        if r < 0.0 {
            return Err(ParamsError::Domain {
                quantity: format!("Omega_{name}"),
                value: r,
            });
        }
        Ok(r.sqrt())
    };
    let omega_big_c = dressed(omega_c, "c")?;
    let omega_big_d = dressed(omega_d, "d")?;
    let omegatilde_c = omega_c + 2.0 * gn;
    let omegatilde_d = omega_d + 2.0 * gn;
    let cal_a = 2.0 * gn * (omega_c - omega_d);

    let delta_tilde = TWO_PI * p.cavity_detuning_eff;

    Ok(DerivedParams {
        u0,
        g_coupling,
        eta,
        i_atom,
        i_mirror,
        g_phi,
        omega_c,
        omega_d,
        gtilde,
        omega_big_c,
        omega_big_d,
        omegatilde_c,
        omegatilde_d,
        cal_a,
        delta_tilde,
        delta_0: delta_tilde + u0 * n / 2.0,
        omega_0,
        gamma_o,
        gamma_m: TWO_PI * p.sidemode_damping,
        gamma_phi: TWO_PI * p.mirror_damping,
        omega_phi,
        n_atoms: n,
        oam: p.oam,
        winding: p.winding,
        drive_power: p.drive_power,
        temp_atoms: p.temp_atoms,
        temp_mirror: p.temp_mirror,
        constants: *k,
        params_hash: p.hash(),
    })
}

/// Report-only validity checks on the modeling assumptions.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    /// 1-D bound (4R / 3a_Na) sqrt(pi omega_rho / omega_z).
    pub one_d_bound: f64,
    /// Whether N stays below the 1-D bound.
    pub one_d_ok: bool,
    /// omega_c / (4 g-tilde N) and omega_d / (4 g-tilde N).
    pub ratio_c: f64,
    pub ratio_d: f64,
    /// Warning strings for every failed or marginal assumption.
    pub warnings: Vec<String>,
}

pub fn validate(p: &PhysicalParams) -> Result<ValidationReport, ParamsError> {
    let d = derive(p)?;
    let bound =
        4.0 * p.ring_radius / (3.0 * p.scattering_length) * (PI * p.trap_radial / p.trap_axial).sqrt();
    let one_d_ok = p.n_atoms < bound;
    let gn4 = 4.0 * d.gtilde * d.n_atoms;
    let (ratio_c, ratio_d) = if gn4 > 0.0 {
        (d.omega_c / gn4, d.omega_d / gn4)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let mut warnings = Vec::new();
    if !one_d_ok {
        warnings.push(format!(
            "1-D constraint violated: N = {} exceeds bound {:.3e}",
            p.n_atoms, bound
        ));
    }
    if ratio_c < 10.0 {
        warnings.push(format!(
            "omega_c >> 4 gtilde N assumption marginal: ratio {ratio_c:.2}"
        ));
    }
    if ratio_d < 10.0 {
        warnings.push(format!(
            "omega_d >> 4 gtilde N assumption marginal: ratio {ratio_d:.2}"
        ));
    }
    Ok(ValidationReport {
        one_d_bound: bound,
        one_d_ok,
        ratio_c,
        ratio_d,
        warnings,
    })
}

/// Mean thermal occupation of a mode at angular frequency `omega` coupled to
/// a bath at temperature `t`. Returns 0 for nonpositive temperatures.
pub fn thermal_occupation(omega: f64, t: f64, k: &Constants) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let x = k.hbar * omega / (k.k_b * t);
    if x > 700.0 {
        0.0
    } else {
        1.0 / (x.exp() - 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn u0_matches_quoted_value() {
        // g_a/2pi = 0.7 MHz, Delta_a/2pi = 5.4 GHz -> U0/2pi = 90.7 Hz
        let d = derive(&presets::fig2()).unwrap();
        assert_relative_eq!(d.u0 / TWO_PI, 90.7, max_relative = 5e-3);
    }

    #[test]
    fn coupling_matches_quoted_value() {
        let d = derive(&presets::fig2()).unwrap();
        assert_relative_eq!(d.g_coupling / TWO_PI, 3.2e3, max_relative = 2e-2);
    }

    #[test]
    fn dressed_frequencies_match_quoted_values() {
        let d = derive(&presets::fig2()).unwrap();
        assert_relative_eq!(d.omega_big_c / TWO_PI, 717.0, max_relative = 1e-2);
        assert_relative_eq!(d.omega_big_d / TWO_PI, 595.0, max_relative = 1e-2);
    }

    #[test]
    fn degenerate_side_modes_without_winding() {
        let mut p = presets::fig2();
        p.winding = 0;
        let d = derive(&p).unwrap();
        assert_eq!(d.omega_c, d.omega_d);
        assert_eq!(d.cal_a, 0.0);
    }

    #[test]
    fn winding_sign_flip_swaps_side_modes() {
        let p = presets::fig2();
        let d = derive(&p).unwrap();
        let mut q = p.clone();
        q.winding = -p.winding;
        let e = derive(&q).unwrap();
        assert_eq!(d.omega_c, e.omega_d);
        assert_eq!(d.omega_d, e.omega_c);
    }

    #[test]
    fn derive_is_deterministic() {
        let p = presets::fig2();
        let a = derive(&p).unwrap();
        let b = derive(&p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn eta_scales_as_sqrt_power() {
        let p = presets::fig2();
        let d = derive(&p).unwrap();
        let mut q = p.clone();
        q.drive_power *= 4.0;
        let e = derive(&q).unwrap();
        assert_relative_eq!(e.eta, 2.0 * d.eta, max_relative = 1e-14);
    }

    #[test]
    fn dressed_reduces_to_bare_without_collisions() {
        let mut p = presets::fig2();
        p.gtilde_override = Some(0.0);
        let d = derive(&p).unwrap();
        assert_relative_eq!(d.omega_big_c, d.omega_c, max_relative = 1e-12);
        assert_relative_eq!(d.omega_big_d, d.omega_d, max_relative = 1e-12);
        assert_eq!(d.cal_a, 0.0);
    }

    #[test]
    fn one_d_bound_matches_hand_value() {
        // 4R/(3 a_Na) sqrt(pi w_rho/w_z) with the caption values: ~2.8e5.
        let r = validate(&presets::fig2()).unwrap();
        assert_relative_eq!(r.one_d_bound, 2.836e5, max_relative = 1e-2);
        assert!(r.one_d_ok);
    }

    #[test]
    fn symmetric_trap_bound() {
        let mut p = presets::fig2();
        p.trap_axial = p.trap_radial;
        let r = validate(&p).unwrap();
        let expect = 4.0 * p.ring_radius / (3.0 * p.scattering_length) * PI.sqrt();
        assert_relative_eq!(r.one_d_bound, expect, max_relative = 1e-14);
    }

    #[test]
    fn overcrowded_ring_fails_validation() {
        let mut p = presets::fig2();
        p.n_atoms = 1e7;
        let r = validate(&p).unwrap();
        assert!(!r.one_d_ok);
        assert!(r.warnings.iter().any(|w| w.contains("1-D constraint")));
    }

    #[test]
    fn zero_detuning_rejected() {
        let mut p = presets::fig2();
        p.atom_detuning = 0.0;
        assert!(derive(&p).is_err());
        assert!(p.check().is_err());
    }

    #[test]
    fn occupation_zero_at_zero_temperature() {
        let k = Constants::default();
        assert_eq!(thermal_occupation(1e6, 0.0, &k), 0.0);
        assert_abs_diff_eq!(
            thermal_occupation(1e6, 1e-3, &k),
            k.k_b * 1e-3 / (k.hbar * 1e6) - 0.5,
            epsilon = 1.0
        );
    }
}
