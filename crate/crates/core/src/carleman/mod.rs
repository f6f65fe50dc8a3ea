//! Carleman weights, the localization cutoff, and numerical audits of the
//! elliptic, boundary and parabolic Carleman inequalities.

mod audit;
mod weights;

use thiserror::Error;

pub use audit::{
    audit_boundary_carleman, audit_elliptic_carleman, audit_parabolic_carleman, default_s_list,
    find_s0, AuditReport, AuditRow, BoundaryAuditInput, EigenRecord, EllipticAuditInput, Lemma,
    ParabolicAuditInput,
};
pub use weights::{
    build_rho_psi, build_weight_d, nodal_gradient, outward_derivatives, smoothstep5,
    smoothstep5_prime, time_factor, verify_rho, verify_weight_d, BoundaryWeight, CutoffProfile,
    EllipticWeight, ParabolicWeight, TimeProfile, KAPPA_SCHEDULE,
};

#[derive(Debug, Error)]
pub enum CarlemanError {
    #[error("weight {weight} fails its conditions at {} node(s) (first: {:?}): {reason}", nodes.len(), nodes.first())]
    WeightViolation { weight: &'static str, nodes: Vec<usize>, reason: String },
    #[error("{0}")]
    Setup(String),
    #[error(transparent)]
    Spectral(#[from] crate::spectral::SpectralError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
