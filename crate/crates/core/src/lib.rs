#![no_std]
extern crate alloc;

pub mod angmom;
pub mod channels;
pub mod dwba;
pub mod linalg;
pub mod math;
pub mod monomer;
pub mod observables;
pub mod potential;
pub mod propagator;
pub mod quadrature;
pub mod special;
pub mod threshold;
pub mod units;
