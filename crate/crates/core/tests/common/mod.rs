#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use wavekernel::{PotentialGrid, PotentialSpec, Preset};

pub fn real(v: f64) -> C64 {
    C64::new(v, 0.0)
}

pub fn scalar(c: f64, x_max: f64) -> PotentialGrid {
    PotentialGrid::build(&PotentialSpec::Constant {
        value: DMatrix::from_element(1, 1, real(c)),
        x_max,
        step: 1e-3,
    })
    .unwrap()
}

pub fn constant(value: DMatrix<C64>, x_max: f64) -> PotentialGrid {
    PotentialGrid::build(&PotentialSpec::Constant { value, x_max, step: 1e-3 }).unwrap()
}

pub fn preset(preset: Preset, x_max: f64) -> PotentialGrid {
    PotentialGrid::build(&PotentialSpec::Preset { preset, x_max, step: 1e-4 }).unwrap()
}

/// The 2 x 2 Hermitian constant used across the suite.
pub fn hermitian_2x2() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[real(1.0), C64::new(0.3, 0.2), C64::new(0.3, -0.2), real(2.0)])
}

/// A fixed non-diagonal unitary.
pub fn unitary_2x2() -> DMatrix<C64> {
    let (c, s) = (0.6f64, 0.8f64);
    let phase = C64::from_polar(1.0, 0.7);
    DMatrix::from_row_slice(2, 2, &[real(c), -phase.conj() * s, phase * s, real(c)])
}

pub fn op_norm(m: &DMatrix<C64>) -> f64 {
    wavekernel::linalg::op_norm(m)
}
