//! Vector field of the dyadic model: cascade operators, hyper-dissipation
//! and norm diagnostics.
//!
//! The state is one real coefficient per cube. With `kappa(j) = 2^{(d+2) j/2}`
//! the two bilinear operators are
//!
//! ```text
//! down(u, v)[Q''] = sum over cascades (Q, Q', Q'') of kappa(j(Q)) u_Q   v_Q'
//! up(u, v)[Q]     = sum over cascades (Q, Q', Q'') of kappa(j(Q)) u_Q'' v_Q'
//! ```
//!
//! and `<down(u, v), w> = <up(w, v), u>`, so `<up(u,u) - down(u,u), u> = 0`.

use rayon::prelude::*;
use thiserror::Error;

use crate::lattice::{coupling, CascadeTable, CubeId, LatticeConfig, LatticeError};
use crate::numerics::{compensated_sum, CompensatedSum};

/// Below this many outputs the operators run on the calling thread.
const PAR_MIN_LEN: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("lattice mismatch: expected d={expected_dim} J={expected_level}, got d={got_dim} J={got_level}")]
    ShapeMismatch {
        expected_dim: usize,
        expected_level: u32,
        got_dim: usize,
        got_level: u32,
    },
    #[error("coefficient vector has {got} entries, lattice needs {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("invalid model parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// One coefficient `u_Q` per cube, levels stored contiguously in global index
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    config: LatticeConfig,
    values: Vec<f64>,
}

impl CoefficientField {
    pub fn zeros(config: &LatticeConfig) -> Self {
        Self {
            config: *config,
            values: vec![0.0; config.total_cubes()],
        }
    }

    pub fn from_values(config: &LatticeConfig, values: Vec<f64>) -> Result<Self, DynamicsError> {
        if values.len() != config.total_cubes() {
            return Err(DynamicsError::WrongLength {
                expected: config.total_cubes(),
                got: values.len(),
            });
        }
        Ok(Self {
            config: *config,
            values,
        })
    }

    /// Field that is `value` on one cube and zero elsewhere.
    pub fn delta(config: &LatticeConfig, cube: &CubeId, value: f64) -> Result<Self, DynamicsError> {
        let mut f = Self::zeros(config);
        f.set(cube, value)?;
        Ok(f)
    }

    pub fn config(&self) -> &LatticeConfig {
        &self.config
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn level(&self, j: u32) -> &[f64] {
        let start = self.config.level_offset(j);
        &self.values[start..start + self.config.cubes_at_level(j)]
    }

    pub fn level_mut(&mut self, j: u32) -> &mut [f64] {
        let start = self.config.level_offset(j);
        let len = self.config.cubes_at_level(j);
        &mut self.values[start..start + len]
    }

    pub fn get(&self, cube: &CubeId) -> Result<f64, LatticeError> {
        Ok(self.values[self.config.global_index(cube)?])
    }

    pub fn set(&mut self, cube: &CubeId, value: f64) -> Result<(), LatticeError> {
        let i = self.config.global_index(cube)?;
        self.values[i] = value;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(level, slice)` pairs.
    pub fn levels(&self) -> impl Iterator<Item = (u32, &[f64])> + '_ {
        (0..=self.config.max_level()).map(move |j| (j, self.level(j)))
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            config: self.config,
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.config, other.config);
        Self {
            config: self.config,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    /// Compensated `sum_Q self_Q * other_Q`.
    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.config, other.config);
        compensated_sum(self.values.iter().zip(&other.values).map(|(x, y)| x * y))
    }
}

/// Which weights the nonlinear term uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convention {
    /// `up(u,u) - down(u,u)`; exactly energy neutral.
    #[default]
    Conservative,
    /// Weights `-1` (cube is the top of a cascade) and `32` (cube is the
    /// bottom), each times `2^{(d+2) j/2}` at the receiving cube's level.
    /// Does not conserve energy.
    Weighted,
}

impl Convention {
    pub fn as_str(&self) -> &'static str {
        match self {
            Convention::Conservative => "conservative",
            Convention::Weighted => "weighted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "conservative" => Some(Convention::Conservative),
            "weighted" => Some(Convention::Weighted),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Hyper-dissipation exponent.
    pub alpha: f64,
    /// `false` gives the dyadic Euler equation.
    pub dissipation_enabled: bool,
    pub convention: Convention,
    /// Global multiplier on every cascade coupling.
    pub coupling_scale: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            dissipation_enabled: true,
            convention: Convention::Conservative,
            coupling_scale: 1.0,
        }
    }
}

impl ModelParams {
    pub fn navier_stokes(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn euler() -> Self {
        Self {
            dissipation_enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(DynamicsError::InvalidParam {
                name: "alpha",
                reason: format!("must be finite and >= 0, got {}", self.alpha),
            });
        }
        if !(self.coupling_scale > 0.0 && self.coupling_scale.is_finite()) {
            return Err(DynamicsError::InvalidParam {
                name: "coupling_scale",
                reason: format!("must be finite and > 0, got {}", self.coupling_scale),
            });
        }
        Ok(())
    }
}

fn check_shape(config: &LatticeConfig, field: &CoefficientField) -> Result<(), DynamicsError> {
    if field.config != *config {
        return Err(DynamicsError::ShapeMismatch {
            expected_dim: config.spatial_dim(),
            expected_level: config.max_level(),
            got_dim: field.config.spatial_dim(),
            got_level: field.config.max_level(),
        });
    }
    Ok(())
}

/// Output at each bottom cube: `kappa(top) * u_top * v_mid`. Every bottom
/// closes exactly one cascade.
pub fn cascade_down(
    u: &CoefficientField,
    v: &CoefficientField,
    table: &CascadeTable,
) -> Result<CoefficientField, DynamicsError> {
    check_shape(table.config(), u)?;
    check_shape(table.config(), v)?;
    let mut out = CoefficientField::zeros(table.config());
    let first = table.first_bottom();
    let (u, v) = (u.values(), v.values());
    let triples = table.triples();
    let top_kappa = top_level_kappas(table);
    out.values[first..]
        .par_iter_mut()
        .with_min_len(PAR_MIN_LEN)
        .enumerate()
        .for_each(|(i, slot)| {
            let n = table.cascade_ending_at(first + i);
            let t = triples[n];
            *slot = top_kappa[t.top] * u[t.top] * v[t.mid];
        });
    Ok(out)
}

/// Output at each top cube: `sum kappa(top) * u_bottom * v_mid` over its `4^d`
/// cascades, accumulated in table order.
pub fn cascade_up(
    u: &CoefficientField,
    v: &CoefficientField,
    table: &CascadeTable,
) -> Result<CoefficientField, DynamicsError> {
    check_shape(table.config(), u)?;
    check_shape(table.config(), v)?;
    let mut out = CoefficientField::zeros(table.config());
    let (u, v) = (u.values(), v.values());
    let block = table.block_len();
    let top_kappa = top_level_kappas(table);
    out.values[..table.num_tops()]
        .par_iter_mut()
        .with_min_len((PAR_MIN_LEN / block).max(1))
        .zip(table.triples().par_chunks(block))
        .enumerate()
        .for_each(|(t, (slot, cascades))| {
            let mut acc = 0.0;
            for c in cascades {
                acc += u[c.bottom] * v[c.mid];
            }
            *slot = top_kappa[t] * acc;
        });
    Ok(out)
}

fn top_level_kappas(table: &CascadeTable) -> Vec<f64> {
    let config = table.config();
    let mut k = Vec::with_capacity(table.num_tops());
    if config.max_level() >= 2 {
        for j in 0..=config.max_level() - 2 {
            k.extend(std::iter::repeat_n(
                table.kappa(j),
                config.cubes_at_level(j),
            ));
        }
    }
    k
}

/// The nonlinear part of `du/dt`, i.e. `-c(u,u)` with `c = down - up`,
/// scaled by `coupling_scale`.
pub fn nonlinear_rhs(
    u: &CoefficientField,
    params: &ModelParams,
    table: &CascadeTable,
) -> Result<CoefficientField, DynamicsError> {
    let up = cascade_up(u, u, table)?;
    let down = cascade_down(u, u, table)?;
    let s = params.coupling_scale;
    let (wu, wd) = match params.convention {
        Convention::Conservative => (s, -s),
        // down carries kappa(j_top); the literal weight uses the bottom's
        // level, two levels finer: kappa(j + 2) = 2^{d+2} kappa(j)
        Convention::Weighted => {
            let d = table.config().spatial_dim();
            (-s, 32.0 * s * coupling(d, 2))
        }
    };
    Ok(up.combine(wu, &down, wd))
}

/// Hyper-dissipation rate `2^{2 alpha j}`; zero in Euler mode.
pub fn dissipation_eigenvalue(level: u32, params: &ModelParams) -> f64 {
    if params.dissipation_enabled {
        (2.0 * params.alpha * level as f64).exp2()
    } else {
        0.0
    }
}

/// Per-level dissipation rates for `config`.
pub fn dissipation_rates(config: &LatticeConfig, params: &ModelParams) -> Vec<f64> {
    (0..=config.max_level())
        .map(|j| dissipation_eigenvalue(j, params))
        .collect()
}

/// `du/dt = -c(u,u) - Lambda^alpha u`.
pub fn full_rhs(
    u: &CoefficientField,
    params: &ModelParams,
    table: &CascadeTable,
) -> Result<CoefficientField, DynamicsError> {
    let mut out = nonlinear_rhs(u, params, table)?;
    let config = *u.config();
    for j in 0..=config.max_level() {
        let rate = dissipation_eigenvalue(j, params);
        if rate == 0.0 {
            continue;
        }
        let src = u.level(j);
        for (o, x) in out.level_mut(j).iter_mut().zip(src) {
            *o -= rate * x;
        }
    }
    Ok(out)
}

/// `sum_Q u_Q^2`.
pub fn energy(u: &CoefficientField) -> f64 {
    compensated_sum(u.values().iter().map(|x| x * x))
}

/// `(sum_Q 2^{2 beta j(Q)} u_Q^2)^{1/2}`.
pub fn sobolev_norm(u: &CoefficientField, beta: f64) -> f64 {
    let mut acc = CompensatedSum::new();
    for (j, vals) in u.levels() {
        let w = (2.0 * beta * j as f64).exp2();
        acc.extend(vals.iter().map(|x| w * x * x));
    }
    acc.value().sqrt()
}

/// `max_Q 2^{d j(Q)/2} |u_Q|`, the coefficient-level stand-in for the
/// pointwise size of the field.
pub fn sup_norm_proxy(u: &CoefficientField) -> f64 {
    let d = u.config().spatial_dim() as f64;
    u.levels()
        .map(|(j, vals)| {
            let w = (0.5 * d * j as f64).exp2();
            vals.iter().fold(0.0f64, |m, x| m.max(w * x.abs()))
        })
        .fold(0.0, f64::max)
}

/// `sum_{Q at level j} u_Q^2` for each level.
pub fn level_spectrum(u: &CoefficientField) -> Vec<f64> {
    u.levels()
        .map(|(_, vals)| compensated_sum(vals.iter().map(|x| x * x)))
        .collect()
}

/// Instantaneous energy loss rate `2 sum_Q 2^{2 alpha j} u_Q^2`.
pub fn dissipation_rate(u: &CoefficientField, params: &ModelParams) -> f64 {
    let mut acc = CompensatedSum::new();
    for (j, vals) in u.levels() {
        let rate = dissipation_eigenvalue(j, params);
        acc.extend(vals.iter().map(|x| 2.0 * rate * x * x));
    }
    acc.value()
}

/// How the energy below one mid cube is split among its children.
#[derive(Debug, Clone, PartialEq)]
pub struct GrandchildShares {
    pub mid: CubeId,
    /// `u_c^2 / sum u_c^2` over the children `c`, lexicographic order.
    pub shares: Vec<f64>,
}

impl GrandchildShares {
    /// Shannon entropy of the shares divided by `log(2^d)`; 1 means an
    /// even split.
    pub fn normalized_entropy(&self) -> f64 {
        let n = self.shares.len() as f64;
        let h: f64 = self
            .shares
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum();
        h / n.ln()
    }

    pub fn max_deviation(&self) -> f64 {
        let even = 1.0 / self.shares.len() as f64;
        self.shares
            .iter()
            .fold(0.0f64, |m, &p| m.max((p - even).abs()))
    }
}

/// Energy shares among the grandchildren `Q''` of every cascade top, grouped
/// by mid cube. Mid cubes whose children carry no energy are skipped.
pub fn grandchild_energy_shares(
    u: &CoefficientField,
    table: &CascadeTable,
) -> Result<Vec<GrandchildShares>, DynamicsError> {
    check_shape(table.config(), u)?;
    let config = table.config();
    let branching = config.branching();
    let vals = u.values();
    let mut out = Vec::new();
    for chunk in table.triples().chunks(branching) {
        // a chunk of 2^d consecutive triples shares top and mid
        let e: Vec<f64> = chunk.iter().map(|c| vals[c.bottom].powi(2)).collect();
        let total: f64 = e.iter().sum();
        if total > 0.0 {
            let mid = table.cube_of(chunk[0].mid);
            out.push(GrandchildShares {
                mid,
                shares: e.iter().map(|x| x / total).collect(),
            });
        }
    }
    Ok(out)
}
