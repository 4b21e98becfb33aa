//! Reference oracles for the test suites. Everything here recomputes its
//! answer by an independent route: Newton-Raphson on the full admittance
//! matrix instead of the sweep, direct cross-cluster distance scans instead
//! of Lance-Williams updates, characteristic-polynomial root finding
//! instead of Jacobi rotations. This crate is a dev-dependency only and is
//! never linked into shipped binaries.

pub mod cluster;
pub mod eigen;
pub mod newton;
