//! Deterministic initial data.

use crate::dynamics::CoefficientField;
use crate::rng::cube_uniform;

use super::config::{ExperimentConfig, InitialKind};

/// Build `u(0)`. Smooth-random data is `A 2^{-s j} xi_Q` with `xi_Q` uniform
/// in `[-1, 1)` drawn from `(seed, Q)` alone.
pub fn make_initial_field(config: &ExperimentConfig) -> CoefficientField {
    let lattice = config.lattice;
    let ic = &config.initial;
    match ic.kind {
        InitialKind::SingleCube => CoefficientField::delta(&lattice, &ic.cube, ic.amplitude)
            .expect("cube validated by the config parser"),
        InitialKind::SmoothRandom => {
            let values = lattice
                .cubes()
                .map(|q| {
                    let envelope = ic.amplitude * (-ic.smoothness * q.level as f64).exp2();
                    envelope * cube_uniform(ic.seed, &q)
                })
                .collect();
            CoefficientField::from_values(&lattice, values).expect("length matches lattice")
        }
    }
}
