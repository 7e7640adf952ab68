//! Built-in parameter sets reproducing the published working points.

use crate::params::{Constants, PhysicalParams, SODIUM_MASS, TWO_PI};

/// Bistability / squeezing working point: 12 um sodium ring, l = 10,
/// L_p = 1, 653 Hz torsional mirror.
pub fn fig2() -> PhysicalParams {
    PhysicalParams {
        atom_mass: SODIUM_MASS,
        n_atoms: 1e4,
        ring_radius: 12e-6,
        trap_radial: 840.0,
        trap_axial: 840.0,
        scattering_length: 0.1e-9,
        atom_photon_coupling: 0.7e6,
        atom_detuning: 5.4e9,
        cavity_freq: 1e15,
        cavity_linewidth: 0.2e6,
        cavity_length: 4e-3,
        oam: 10.0,
        winding: 1,
        drive_power: 1e-12,
        cavity_detuning_eff: -0.6e6,
        mirror_mass: 3.08e-9,
        mirror_radius: 15e-6,
        mirror_freq: 653.0,
        mirror_damping: 0.08,
        sidemode_damping: 0.8,
        temp_atoms: 10e-9,
        temp_mirror: 1e-3,
        // gtilde = 14 gtilde_m with gtilde_m/2pi = 78.8 uHz
        gtilde_override: Some(14.0 * 78.8e-6),
        constants: Constants::default(),
    }
}

/// Squeezing-spectrum working point: fig2 ring with P_in = 12.4 fW.
/// The detuning is adjusted downstream so that Delta' = omega_phi.
pub fn fig4() -> PhysicalParams {
    let mut p = fig2();
    p.drive_power = 12.4e-15;
    p
}

/// Entanglement working point: 3 MHz torsional mirror, l = 243, 0.19 nW
/// drive. The ring radius places the bare side-mode/mirror crossings at
/// l = 226 and 227 for L_p = 1 (the published cooling-suppression window).
pub fn fig7() -> PhysicalParams {
    PhysicalParams {
        atom_mass: SODIUM_MASS,
        n_atoms: 2e4,
        ring_radius: 1.000288e-5, // sized so the d side mode crosses the mirror frequency near l = 226
        trap_radial: 8.4e3,
        trap_axial: 8.4e3,
        scattering_length: 2.5e-9,
        // g_a/2pi = sqrt(U0 Delta_a) -> U0/2pi = 153.5 Hz at Delta_a/2pi = 1.04 GHz
        atom_photon_coupling: 399_549.0,
        atom_detuning: 1.04e9,
        cavity_freq: 1e15,
        cavity_linewidth: 0.48e6,
        cavity_length: 1e-3,
        oam: 243.0,
        winding: 1,
        drive_power: 0.19e-9,
        cavity_detuning_eff: -1.8e6,
        mirror_mass: 0.1e-12,
        mirror_radius: 20e-6,
        mirror_freq: 3e6 / TWO_PI, // quoted without the /2pi the other rates carry
        mirror_damping: 4.77,
        sidemode_damping: 0.8,
        temp_atoms: 10e-9,
        temp_mirror: 5e-3,
        gtilde_override: None,
        constants: Constants::default(),
    }
}
