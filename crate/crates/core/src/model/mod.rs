//! Physical parameters, closed-form formulas and profile functions.

pub mod config;
pub mod design;
pub mod profile;
pub mod wavepacket;

pub use config::{CouplingProfile, DetectorConfig, FockDims, PhotonInput, Truncation};
pub use design::{
    chi_per_cell, coupler_energy, coupler_potential, n_cells_estimate, n_cells_required, steady_state_alpha,
    HardwareParams, SteadyState,
};
pub use profile::{cell_coupling, coupling_profile};
pub use wavepacket::{
    emitter_population, emitter_rate, noise_rate, noise_rate_quadrature, photon_fraction, wavepacket_at,
    wavepacket_envelope, WavepacketSpec,
};
