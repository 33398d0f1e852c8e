//! Polynomial Galerkin solver for incompressible flow in precessing
//! ellipsoids with stress-free type boundary conditions.

pub mod basis;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod geometry;
pub mod operators;
pub mod poly;
pub mod spectral;
pub mod timestepper;
