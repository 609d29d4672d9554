//! Adversarial correlation structures, couplings on value grids and their
//! conditional virtual values.

mod joint;
mod structure;
mod virtual_value;

pub use joint::{
    comonotone, comonotone_from_pmf, dense_masses, independent_from_pmf, independent_joint, JointError,
    JointGrid, MASS_CLAMP, TOTAL_TOLERANCE,
};
pub use structure::{
    build_adversarial_2, build_adversarial_n, Adversarial, AdversarialDensity, AdversaryError,
    FeasibilityFailure, FeasibilityWitness, ATOM_TOLERANCE,
};
pub use virtual_value::{
    expected_payment, expected_virtual_surplus, interbidder_monotone_check, virtual_values, CellNote,
    InterbidderReport, VirtualField, VIRTUAL_TOLERANCE,
};
