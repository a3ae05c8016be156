//! Time stepping with the diagonal dissipation treated exactly.
//!
//! Writing `du/dt = N(u) - L u` with `L` diagonal (`2^{2 alpha j}` per level),
//! the scheme is the integrating-factor form of the Bogacki–Shampine 3(2)
//! pair: stage values are propagated by `exp(-L tau)` between nodes, so the
//! method is exact when `N = 0` and reduces to classical Bogacki–Shampine
//! when `L = 0`. The third stage derivative is evaluated at the new state,
//! which gives first-same-as-last reuse.

use thiserror::Error;

use crate::dynamics::{
    dissipation_rate, dissipation_rates, energy, level_spectrum, nonlinear_rhs, sobolev_norm,
    sup_norm_proxy, CoefficientField, DynamicsError, ModelParams,
};
use crate::lattice::{CascadeTable, LatticeConfig};
use crate::numerics::CompensatedSum;

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("invalid integration span: {0}")]
    InvalidSpan(String),
    #[error("non-finite state at t = {time} (blow-up or instability)")]
    NonFinite { time: f64 },
    #[error(
        "step size fell below dt_min at t = {time}: dt = {dt:e}, error norm = {error_norm:e} \
         ({accepted} accepted, {rejected} rejected steps)"
    )]
    StiffnessFailure {
        time: f64,
        dt: f64,
        error_norm: f64,
        accepted: usize,
        rejected: usize,
        /// Everything recorded up to the failure.
        partial: Box<Trajectory>,
    },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Time interval and step-control settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationSpan {
    pub t_start: f64,
    pub t_end: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Step controller safety factor; also the nonlinear CFL number.
    pub safety: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl IntegrationSpan {
    pub fn new(t_start: f64, t_end: f64) -> Self {
        Self {
            t_start,
            t_end,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let fail = |m: String| Err(IntegrateError::InvalidSpan(m));
        if !(self.t_start.is_finite() && self.t_end.is_finite()) {
            return fail("times must be finite".into());
        }
        if self.t_end < self.t_start {
            return fail(format!("t_end {} < t_start {}", self.t_end, self.t_start));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return fail(format!(
                "need 0 < dt_min <= dt_init <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_init, self.dt_max
            ));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return fail(format!("safety must be in (0, 1], got {}", self.safety));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return fail("rtol and atol must be positive".into());
        }
        Ok(())
    }
}

impl Default for IntegrationSpan {
    fn default() -> Self {
        Self {
            t_start: 0.0,
            t_end: 1.0,
            dt_init: 1e-4,
            dt_min: 1e-12,
            dt_max: 0.1,
            safety: 0.9,
            rtol: 1e-9,
            atol: 1e-13,
        }
    }
}

/// What the integrator records besides the final state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recording {
    /// Snapshot spacing; `None` records only the start and the end.
    pub snapshot_interval: Option<f64>,
    /// Stop and flag blow-up once `sup_norm_proxy` exceeds this.
    pub blowup_ceiling: f64,
    /// Exponent of the Sobolev norm in the diagnostics.
    pub sobolev_beta: f64,
}

impl Default for Recording {
    fn default() -> Self {
        Self {
            snapshot_interval: None,
            blowup_ceiling: 1e8,
            sobolev_beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub field: CoefficientField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub time: f64,
    pub energy: f64,
    pub dissipation_rate: f64,
    pub sobolev_norm: f64,
    pub sup_proxy: f64,
    pub spectrum: Vec<f64>,
}

impl DiagnosticRow {
    pub fn of(time: f64, u: &CoefficientField, params: &ModelParams, beta: f64) -> Self {
        Self {
            time,
            energy: energy(u),
            dissipation_rate: dissipation_rate(u, params),
            sobolev_norm: sobolev_norm(u, beta),
            sup_proxy: sup_norm_proxy(u),
            spectrum: level_spectrum(u),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepLog {
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryStatus {
    Completed,
    BlowUp { time: f64, sup_proxy: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub config: LatticeConfig,
    pub params: ModelParams,
    pub sobolev_beta: f64,
    pub snapshots: Vec<Snapshot>,
    /// Per-cube `int u_Q^2 dt` over the integrated interval, accumulated on
    /// every accepted step. `None` for trajectories loaded without them.
    pub square_integrals: Option<CoefficientField>,
    pub diagnostics: Vec<DiagnosticRow>,
    pub steps: StepLog,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    /// Assemble a trajectory from stored parts, recomputing the diagnostics.
    pub fn from_parts(
        params: ModelParams,
        sobolev_beta: f64,
        snapshots: Vec<Snapshot>,
        square_integrals: Option<CoefficientField>,
        config: LatticeConfig,
    ) -> Self {
        let diagnostics = snapshots
            .iter()
            .map(|s| DiagnosticRow::of(s.time, &s.field, &params, sobolev_beta))
            .collect();
        Self {
            config,
            params,
            sobolev_beta,
            snapshots,
            square_integrals,
            diagnostics,
            steps: StepLog::default(),
            status: TrajectoryStatus::Completed,
        }
    }

    pub fn start_time(&self) -> f64 {
        self.snapshots.first().map_or(0.0, |s| s.time)
    }

    pub fn end_time(&self) -> f64 {
        self.snapshots.last().map_or(0.0, |s| s.time)
    }

    pub fn horizon(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    pub fn final_field(&self) -> Option<&CoefficientField> {
        self.snapshots.last().map(|s| &s.field)
    }

    /// Per-cube `int 2^{2 alpha j} u_Q^2 dt` using the trajectory's own rates.
    pub fn dissipation_integrals(&self) -> Option<CoefficientField> {
        let ints = self.square_integrals.as_ref()?;
        let rates = dissipation_rates(&self.config, &self.params);
        let mut out = ints.clone();
        for (j, rate) in rates.iter().enumerate() {
            for x in out.level_mut(j as u32) {
                *x *= rate;
            }
        }
        Some(out)
    }

    /// `2 sum_Q int 2^{2 alpha j} u_Q^2 dt`, the energy the dissipation
    /// removed.
    pub fn dissipated_energy(&self) -> Option<f64> {
        let d = self.dissipation_integrals()?;
        let mut acc = CompensatedSum::new();
        acc.extend(d.values().iter().map(|x| 2.0 * x));
        Some(acc.value())
    }
}

/// Bogacki–Shampine tableau.
const A21: f64 = 0.5;
const A32: f64 = 0.75;
const B1: f64 = 2.0 / 9.0;
const B2: f64 = 1.0 / 3.0;
const B3: f64 = 4.0 / 9.0;
const E1: f64 = 2.0 / 9.0 - 7.0 / 24.0;
const E2: f64 = 1.0 / 3.0 - 1.0 / 4.0;
const E3: f64 = 4.0 / 9.0 - 1.0 / 3.0;
const E4: f64 = -1.0 / 8.0;

/// One integrating-factor step and what it produced.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub next: CoefficientField,
    /// Third-order minus second-order solution.
    pub error: CoefficientField,
    /// `N(next)`, reusable as the first stage of the following step.
    pub rhs_next: CoefficientField,
}

/// Holds the per-level rates; cheap to build.
pub struct Stepper<'a> {
    params: ModelParams,
    table: &'a CascadeTable,
    rates: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(params: &ModelParams, table: &'a CascadeTable) -> Self {
        Self {
            params: *params,
            table,
            rates: dissipation_rates(table.config(), params),
        }
    }

    pub fn nonlinear(&self, u: &CoefficientField) -> Result<CoefficientField, DynamicsError> {
        nonlinear_rhs(u, &self.params, self.table)
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    fn decay(&self, tau: f64) -> Vec<f64> {
        self.rates.iter().map(|r| (-r * tau).exp()).collect()
    }

    /// Advance `u` by `h`; `k1` must be `N(u)`.
    pub fn step(
        &self,
        u: &CoefficientField,
        k1: &CoefficientField,
        h: f64,
    ) -> Result<StepOutput, DynamicsError> {
        let config = *u.config();
        let e_full = self.decay(h);
        let e_half = self.decay(0.5 * h);
        let e_quarter = self.decay(0.25 * h);
        let e_three_q = self.decay(0.75 * h);

        let stage = |terms: &dyn Fn(usize, usize) -> f64| -> CoefficientField {
            let mut out = CoefficientField::zeros(&config);
            for j in 0..=config.max_level() {
                let off = config.level_offset(j);
                let lvl = j as usize;
                for (i, slot) in out.level_mut(j).iter_mut().enumerate() {
                    *slot = terms(lvl, off + i);
                }
            }
            out
        };

        let (u0, k1v) = (u.values(), k1.values());
        let u2 = stage(&|l, i| e_half[l] * (u0[i] + h * A21 * k1v[i]));
        let k2 = self.nonlinear(&u2)?;
        let k2v = k2.values();
        let u3 = stage(&|l, i| e_three_q[l] * u0[i] + h * A32 * e_quarter[l] * k2v[i]);
        let k3 = self.nonlinear(&u3)?;
        let k3v = k3.values();
        let next = stage(&|l, i| {
            e_full[l] * u0[i]
                + h * (B1 * e_full[l] * k1v[i]
                    + B2 * e_half[l] * k2v[i]
                    + B3 * e_quarter[l] * k3v[i])
        });
        let k4 = self.nonlinear(&next)?;
        let k4v = k4.values();
        let error = stage(&|l, i| {
            h * (E1 * e_full[l] * k1v[i]
                + E2 * e_half[l] * k2v[i]
                + E3 * e_quarter[l] * k3v[i]
                + E4 * k4v[i])
        });
        Ok(StepOutput {
            next,
            error,
            rhs_next: k4,
        })
    }
}

/// One third-order step of size `dt` from `u` at time `t`.
pub fn etd_step(
    u: &CoefficientField,
    t: f64,
    dt: f64,
    params: &ModelParams,
    table: &CascadeTable,
) -> Result<CoefficientField, IntegrateError> {
    assert!(dt > 0.0, "dt must be positive");
    let stepper = Stepper::new(params, table);
    let k1 = stepper.nonlinear(u)?;
    let out = stepper.step(u, &k1, dt)?;
    if !out.next.is_finite() {
        return Err(IntegrateError::NonFinite { time: t + dt });
    }
    Ok(out.next)
}

/// `steps` equal steps from `t0` to `t1`, for convergence studies.
pub fn integrate_fixed(
    u0: &CoefficientField,
    t0: f64,
    t1: f64,
    steps: usize,
    params: &ModelParams,
    table: &CascadeTable,
) -> Result<CoefficientField, IntegrateError> {
    let stepper = Stepper::new(params, table);
    let h = (t1 - t0) / steps as f64;
    let mut u = u0.clone();
    let mut k = stepper.nonlinear(&u)?;
    for n in 0..steps {
        let out = stepper.step(&u, &k, h)?;
        if !out.next.is_finite() {
            return Err(IntegrateError::NonFinite {
                time: t0 + (n + 1) as f64 * h,
            });
        }
        u = out.next;
        k = out.rhs_next;
    }
    Ok(u)
}

/// `u_Q(0) e^{-2^{2 alpha j} t}` per cube.
pub fn linear_exact_solution(
    u0: &CoefficientField,
    t: f64,
    params: &ModelParams,
) -> CoefficientField {
    let mut out = u0.clone();
    let rates = dissipation_rates(u0.config(), params);
    for (j, r) in rates.iter().enumerate() {
        let factor = (-r * t).exp();
        for x in out.level_mut(j as u32) {
            *x *= factor;
        }
    }
    out
}

/// `int_0^1 phi` and `int_0^1 phi^2` for the exponential interpolant
/// `phi(s) = (1 - e^{-x s}) / (1 - e^{-x})`, `x = rate * h`.
fn interpolant_moments(x: f64) -> (f64, f64) {
    if x == 0.0 {
        return (0.5, 1.0 / 3.0);
    }
    if x >= 1.0 {
        let d = -(-x).exp_m1();
        let m1 = 1.0 / d - 1.0 / x;
        let m2 = (1.0 - 2.0 * d / x + (-(-2.0 * x).exp_m1()) / (2.0 * x)) / (d * d);
        return (m1, m2);
    }
    // smooth, nearly linear: Gauss–Legendre
    let denom = (-x).exp_m1();
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (node, weight) in GAUSS_LEGENDRE_8 {
        let s = 0.5 * (node + 1.0);
        let phi = (-x * s).exp_m1() / denom;
        m1 += 0.5 * weight * phi;
        m2 += 0.5 * weight * phi * phi;
    }
    (m1, m2)
}

const GAUSS_LEGENDRE_8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

/// Add `int u_Q^2` over one accepted step. Along the step each coefficient
/// is modelled as `a + (b - a) phi(s)`, the exact solution for pure decay
/// plus constant forcing.
fn accumulate_squares(
    integrals: &mut CoefficientField,
    before: &CoefficientField,
    after: &CoefficientField,
    rates: &[f64],
    h: f64,
) {
    let config = *before.config();
    for j in 0..=config.max_level() {
        let (m1, m2) = interpolant_moments(rates[j as usize] * h);
        let a_vals = before.level(j);
        let b_vals = after.level(j);
        for ((slot, &a), &b) in integrals.level_mut(j).iter_mut().zip(a_vals).zip(b_vals) {
            let delta = b - a;
            *slot += h * (a * a + 2.0 * a * delta * m1 + delta * delta * m2).max(0.0);
        }
    }
}

fn error_norm(
    err: &CoefficientField,
    a: &CoefficientField,
    b: &CoefficientField,
    span: &IntegrationSpan,
) -> f64 {
    let n = err.values().len() as f64;
    let sum: f64 = err
        .values()
        .iter()
        .zip(a.values().iter().zip(b.values()))
        .map(|(e, (x, y))| {
            let scale = span.atol + span.rtol * x.abs().max(y.abs());
            (e / scale).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

const MAX_GROWTH: f64 = 5.0;
const MIN_SHRINK: f64 = 0.2;
const PI_ALPHA: f64 = 0.7 / 3.0;
const PI_BETA: f64 = 0.4 / 3.0;

/// Adaptive integration over `span` with snapshots every
/// `recording.snapshot_interval`.
pub fn integrate(
    u0: &CoefficientField,
    span: &IntegrationSpan,
    params: &ModelParams,
    table: &CascadeTable,
    recording: &Recording,
) -> Result<Trajectory, IntegrateError> {
    span.validate()?;
    params.validate()?;
    let config = *table.config();
    if *u0.config() != config {
        return Err(IntegrateError::Dynamics(DynamicsError::ShapeMismatch {
            expected_dim: config.spatial_dim(),
            expected_level: config.max_level(),
            got_dim: u0.config().spatial_dim(),
            got_level: u0.config().max_level(),
        }));
    }
    if !u0.is_finite() {
        return Err(IntegrateError::NonFinite { time: span.t_start });
    }
    let beta = recording.sobolev_beta;
    let mut traj = Trajectory {
        config,
        params: *params,
        sobolev_beta: beta,
        snapshots: Vec::new(),
        square_integrals: Some(CoefficientField::zeros(&config)),
        diagnostics: Vec::new(),
        steps: StepLog::default(),
        status: TrajectoryStatus::Completed,
    };
    let record = |traj: &mut Trajectory, t: f64, u: &CoefficientField| {
        traj.diagnostics.push(DiagnosticRow::of(t, u, params, beta));
        traj.snapshots.push(Snapshot {
            time: t,
            field: u.clone(),
        });
    };
    record(&mut traj, span.t_start, u0);

    let output_times: Vec<f64> = match recording.snapshot_interval {
        Some(dt) if dt > 0.0 => {
            // drop output times within rounding of t_end
            let cutoff = span.t_end - 1e-9 * dt;
            let mut v: Vec<f64> = (1..)
                .map(|k| span.t_start + k as f64 * dt)
                .take_while(|&t| t < cutoff)
                .collect();
            v.push(span.t_end);
            v
        }
        _ => vec![span.t_end],
    };
    if span.t_end == span.t_start {
        return Ok(traj);
    }

    let stepper = Stepper::new(params, table);
    let coupling_bound = params.coupling_scale * table.max_kappa();
    let mut t = span.t_start;
    let mut u = u0.clone();
    let mut k1 = stepper.nonlinear(&u)?;
    let mut h = span.dt_init;
    let mut err_prev = 1e-4f64;
    let mut next_out = 0usize;

    while next_out < output_times.len() {
        let target = output_times[next_out];
        let mut h_try = h.min(span.dt_max);
        let amp = u.max_abs();
        if coupling_bound > 0.0 && amp > 0.0 {
            h_try = h_try.min(span.safety / (coupling_bound * amp));
        }
        if h_try < span.dt_min {
            return Err(stiffness_failure(t, h_try, f64::NAN, traj));
        }
        let clipped = t + h_try >= target;
        if clipped {
            h_try = target - t;
        }

        let out = stepper.step(&u, &k1, h_try)?;
        let en = if out.next.is_finite() && out.error.is_finite() {
            error_norm(&out.error, &u, &out.next, span)
        } else {
            f64::INFINITY
        };

        if en <= 1.0 {
            traj.steps.accepted += 1;
            if let Some(ints) = traj.square_integrals.as_mut() {
                accumulate_squares(ints, &u, &out.next, stepper.rates(), h_try);
            }
            t = if clipped { target } else { t + h_try };
            u = out.next;
            k1 = out.rhs_next;

            let factor = if en == 0.0 {
                MAX_GROWTH
            } else {
                (span.safety * en.powf(-PI_ALPHA) * err_prev.powf(PI_BETA))
                    .clamp(MIN_SHRINK, MAX_GROWTH)
            };
            err_prev = en.max(1e-4);
            let proposal = h_try * factor;
            // a step shortened to hit an output time says nothing about the
            // admissible size
            h = if clipped { proposal.max(h) } else { proposal };

            let sup = sup_norm_proxy(&u);
            if clipped {
                record(&mut traj, t, &u);
                next_out += 1;
            }
            if sup > recording.blowup_ceiling {
                if !clipped {
                    record(&mut traj, t, &u);
                }
                traj.status = TrajectoryStatus::BlowUp {
                    time: t,
                    sup_proxy: sup,
                };
                return Ok(traj);
            }
        } else {
            traj.steps.rejected += 1;
            let factor = if en.is_finite() {
                (span.safety * en.powf(-1.0 / 3.0)).clamp(MIN_SHRINK, 1.0)
            } else {
                0.25
            };
            h = h_try * factor;
            if h < span.dt_min {
                if !en.is_finite() {
                    return Err(IntegrateError::NonFinite { time: t + h_try });
                }
                return Err(stiffness_failure(t, h, en, traj));
            }
        }
    }
    Ok(traj)
}

fn stiffness_failure(time: f64, dt: f64, error_norm: f64, traj: Trajectory) -> IntegrateError {
    IntegrateError::StiffnessFailure {
        time,
        dt,
        error_norm,
        accepted: traj.steps.accepted,
        rejected: traj.steps.rejected,
        partial: Box::new(traj),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{enumerate_cascades, CubeId};

    fn setup(d: usize, j: u32) -> (LatticeConfig, CascadeTable) {
        let c = LatticeConfig::new(d, j).unwrap();
        (c, enumerate_cascades(&c))
    }

    fn random_field(config: &LatticeConfig, seed: u64, amp: f64) -> CoefficientField {
        let vals = config
            .cubes()
            .map(|q| amp * (-(q.level as f64)).exp2() * crate::rng::cube_uniform(seed, &q))
            .collect();
        CoefficientField::from_values(config, vals).unwrap()
    }

    #[test]
    fn zero_stays_zero() {
        let (c, t) = setup(2, 3);
        let z = CoefficientField::zeros(&c);
        for dt in [1e-3, 0.5, 10.0] {
            let out = etd_step(&z, 0.0, dt, &ModelParams::navier_stokes(1.1), &t).unwrap();
            assert_eq!(out, z);
        }
    }

    #[test]
    fn single_cube_step_is_exact_decay() {
        let (c, t) = setup(1, 5);
        let p = ModelParams::navier_stokes(1.2);
        let q = CubeId::new(3, &[5]);
        let u = CoefficientField::delta(&c, &q, 0.8).unwrap();
        let dt = 0.013;
        let out = etd_step(&u, 0.0, dt, &p, &t).unwrap();
        let rate = crate::dynamics::dissipation_eigenvalue(3, &p);
        let expected = 0.8 * (-rate * dt).exp();
        let got = out.get(&q).unwrap();
        assert!((got - expected).abs() <= 2.0 * f64::EPSILON * expected);
    }

    #[test]
    fn moments_limits() {
        let (m1, m2) = interpolant_moments(0.0);
        assert_eq!((m1, m2), (0.5, 1.0 / 3.0));
        // continuity across the branch switch
        let below = interpolant_moments(1.0 - 1e-12);
        let above = interpolant_moments(1.0);
        assert!((below.0 - above.0).abs() < 1e-10);
        assert!((below.1 - above.1).abs() < 1e-10);
        let tiny = interpolant_moments(1e-9);
        assert!((tiny.0 - 0.5).abs() < 1e-8 && (tiny.1 - 1.0 / 3.0).abs() < 1e-8);
        let big = interpolant_moments(1e6);
        assert!((big.0 - 1.0).abs() < 1e-5 && (big.1 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn moments_against_quadrature() {
        // composite midpoint rule on a fine grid
        for x in [0.01f64, 0.5, 0.99, 1.5, 7.0, 40.0] {
            let n = 200_000;
            let d = 1.0 - (-x).exp();
            let (mut q1, mut q2) = (0.0, 0.0);
            for i in 0..n {
                let s = (i as f64 + 0.5) / n as f64;
                let phi = (1.0 - (-x * s).exp()) / d;
                q1 += phi / n as f64;
                q2 += phi * phi / n as f64;
            }
            let (m1, m2) = interpolant_moments(x);
            assert!((m1 - q1).abs() < 1e-8, "x={x}: {m1} vs {q1}");
            assert!((m2 - q2).abs() < 1e-8, "x={x}: {m2} vs {q2}");
        }
    }

    #[test]
    fn square_integral_exact_for_decay() {
        let (c, t) = setup(1, 4);
        let p = ModelParams::navier_stokes(1.0);
        let q = CubeId::new(4, &[3]);
        let u0 = CoefficientField::delta(&c, &q, 2.0).unwrap();
        let span = IntegrationSpan {
            t_end: 0.05,
            dt_init: 0.05,
            dt_max: 0.05,
            ..IntegrationSpan::default()
        };
        let traj = integrate(&u0, &span, &p, &t, &Recording::default()).unwrap();
        let rate = 256.0;
        let exact = 4.0 * (1.0 - (-2.0 * rate * 0.05f64).exp()) / (2.0 * rate);
        let got = traj.square_integrals.unwrap().get(&q).unwrap();
        assert!((got - exact).abs() < 1e-14, "{got} vs {exact}");
    }

    #[test]
    fn zero_length_span() {
        let (c, t) = setup(1, 3);
        let u0 = random_field(&c, 1, 0.3);
        let span = IntegrationSpan::new(0.5, 0.5);
        let traj = integrate(
            &u0,
            &span,
            &ModelParams::default(),
            &t,
            &Recording::default(),
        )
        .unwrap();
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.snapshots[0].field, u0);
    }

    #[test]
    fn invalid_spans() {
        let bad = [
            IntegrationSpan::new(1.0, 0.0),
            IntegrationSpan {
                dt_min: 1.0,
                ..IntegrationSpan::default()
            },
            IntegrationSpan {
                safety: 0.0,
                ..IntegrationSpan::default()
            },
        ];
        for s in bad {
            assert!(matches!(s.validate(), Err(IntegrateError::InvalidSpan(_))));
        }
    }

    #[test]
    fn linear_solution_closed_form() {
        let c = LatticeConfig::new(1, 3).unwrap();
        let p = ModelParams::navier_stokes(1.0);
        let q = CubeId::new(1, &[1]);
        let u0 = CoefficientField::delta(&c, &q, 1.0).unwrap();
        assert_eq!(linear_exact_solution(&u0, 0.0, &p), u0);
        let half = linear_exact_solution(&u0, std::f64::consts::LN_2 / 4.0, &p);
        assert!((half.get(&q).unwrap() - 0.5).abs() < 1e-15);
        let mut prev = energy(&u0);
        for k in 1..20 {
            let e = energy(&linear_exact_solution(&u0, k as f64 * 0.05, &p));
            assert!(e < prev);
            prev = e;
        }
    }

    #[test]
    fn snapshots_land_on_cadence() {
        let (c, t) = setup(1, 4);
        let u0 = random_field(&c, 3, 0.5);
        let span = IntegrationSpan::new(0.0, 0.1);
        let rec = Recording {
            snapshot_interval: Some(0.025),
            ..Recording::default()
        };
        let traj = integrate(&u0, &span, &ModelParams::navier_stokes(1.1), &t, &rec).unwrap();
        let times: Vec<f64> = traj.snapshots.iter().map(|s| s.time).collect();
        assert_eq!(times, vec![0.0, 0.025, 0.05, 0.07500000000000001, 0.1]);
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        let ints = traj.square_integrals.as_ref().unwrap();
        assert!(ints.values().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn blowup_ceiling_stops_run() {
        let (c, t) = setup(1, 4);
        let u0 = random_field(&c, 4, 1.0);
        let rec = Recording {
            blowup_ceiling: 0.5 * sup_norm_proxy(&u0),
            ..Recording::default()
        };
        // inviscid, ceiling already exceeded: stops after one step
        let traj = integrate(
            &u0,
            &IntegrationSpan::new(0.0, 1.0),
            &ModelParams::euler(),
            &t,
            &rec,
        )
        .unwrap();
        assert!(matches!(traj.status, TrajectoryStatus::BlowUp { .. }));
        assert_eq!(traj.steps.accepted, 1);
    }

    #[test]
    fn stiffness_failure_reported() {
        let (c, t) = setup(1, 5);
        let u0 = random_field(&c, 2, 1.0);
        // tolerance far below rounding forces endless rejection
        let span = IntegrationSpan {
            rtol: 1e-30,
            atol: 1e-300,
            dt_min: 1e-9,
            dt_init: 1e-3,
            ..IntegrationSpan::new(0.0, 1.0)
        };
        let err =
            integrate(&u0, &span, &ModelParams::euler(), &t, &Recording::default()).unwrap_err();
        match err {
            IntegrateError::StiffnessFailure { partial, dt, .. } => {
                assert!(dt < 1e-9);
                assert_eq!(partial.snapshots.len(), 1);
            }
            other => panic!("unexpected {other}"),
        }
    }
}
