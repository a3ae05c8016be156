//! Critical-regularity monitoring and bad-cube counting.
//!
//! A coefficient at level `j` is supercritical when it exceeds
//! `2^{-j (5 - 4 alpha)/2}`. A cube is bad when its dissipation-weighted
//! time integral crosses the matching budget. Because the per-level
//! dissipation `B_j = 2^{2 alpha j} int sum_Q u_Q^2 dt` bounds the sum of the
//! weighted integrals, the number of bad cubes per level is bounded by
//! `B_j` over the per-cube threshold; that bound is checked exactly.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::dynamics::CoefficientField;
use crate::integrator::Trajectory;
use crate::lattice::{growth_exponent, CubeFamilySequence, CubeId, LatticeError};
use crate::numerics::CompensatedSum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegularityError {
    #[error("trajectory carries no per-cube square integrals")]
    MissingDiagnostics,
    #[error("invalid regularity parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("fit levels {min}..={max} outside lattice levels 0..={max_level}")]
    FitRange { min: u32, max: u32, max_level: u32 },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// How the single-cube badness test is normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BadnessNormalization {
    /// `2^{j alpha} (int u_Q^2)^{1/2} >= C 2^{-j(5-4 alpha)/2}`: each factor
    /// of the two-cube product inequality carries half of the scaling.
    /// Bad-cube count per level is at most `(B_j / C^2) 2^{j(5-4 alpha)}`.
    #[default]
    Balanced,
    /// `2^{2 j alpha} (int u_Q^2)^{1/2} >= C 2^{-j(5-4 alpha)}`. Count per
    /// level is at most `(B_j / C^2) 2^{j(10-6 alpha)}`.
    Literal,
}

impl BadnessNormalization {
    pub fn as_str(&self) -> &'static str {
        match self {
            BadnessNormalization::Balanced => "balanced",
            BadnessNormalization::Literal => "literal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "balanced" => Some(Self::Balanced),
            "literal" => Some(Self::Literal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityParams {
    pub alpha: f64,
    /// The constant `C` hidden in the badness inequality.
    pub badness_constant: f64,
    /// Prefactor of the critical amplitude threshold.
    pub critical_constant: f64,
    pub normalization: BadnessNormalization,
}

impl RegularityParams {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            badness_constant: 1.0,
            critical_constant: 1.0,
            normalization: BadnessNormalization::Balanced,
        }
    }

    pub fn validate(&self) -> Result<(), RegularityError> {
        let positive = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(RegularityError::InvalidParam {
                    name,
                    reason: format!("must be finite and > 0, got {v}"),
                })
            }
        };
        positive("badness_constant", self.badness_constant)?;
        positive("critical_constant", self.critical_constant)?;
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(RegularityError::InvalidParam {
                name: "alpha",
                reason: format!("must be finite and >= 0, got {}", self.alpha),
            });
        }
        Ok(())
    }

    /// `5 - 4 alpha`.
    pub fn critical_exponent(&self) -> f64 {
        5.0 - 4.0 * self.alpha
    }

    /// `2^{2 alpha j}`, independent of whether the run dissipated.
    pub fn weight(&self, level: u32) -> f64 {
        (2.0 * self.alpha * level as f64).exp2()
    }

    /// Threshold `tau_j` such that a cube is bad iff
    /// `2^{2 alpha j} int u_Q^2 dt >= tau_j`.
    pub fn badness_threshold(&self, level: u32) -> f64 {
        let c2 = self.badness_constant * self.badness_constant;
        let j = level as f64;
        match self.normalization {
            BadnessNormalization::Balanced => c2 * (-j * self.critical_exponent()).exp2(),
            BadnessNormalization::Literal => c2 * (-j * (10.0 - 6.0 * self.alpha)).exp2(),
        }
    }
}

/// `critical_constant * 2^{-j (5 - 4 alpha)/2}`.
pub fn critical_threshold(level: u32, params: &RegularityParams) -> f64 {
    params.critical_constant * (-0.5 * level as f64 * params.critical_exponent()).exp2()
}

/// Cubes with `|u_Q|` strictly above the critical threshold of their level,
/// with the ratio `|u_Q| / threshold`, largest ratio first.
pub fn supercritical_cubes(u: &CoefficientField, params: &RegularityParams) -> Vec<(CubeId, f64)> {
    let config = *u.config();
    let mut out = Vec::new();
    for (j, vals) in u.levels() {
        let threshold = critical_threshold(j, params);
        for (i, &x) in vals.iter().enumerate() {
            if x.abs() > threshold {
                out.push((config.cube_at(j, i), x.abs() / threshold));
            }
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    pub level: u32,
    pub bad: BTreeSet<CubeId>,
    /// `C 2^{j(5 - 4 alpha)}`, the scale-only form of the count bound.
    pub nominal_bound: f64,
    /// Per-cube threshold `tau_j` on the weighted integral.
    pub threshold: f64,
    /// `B_j = 2^{2 alpha j} int sum_{level j} u_Q^2 dt`.
    pub level_budget: f64,
}

impl LevelReport {
    pub fn count(&self) -> usize {
        self.bad.len()
    }

    /// `B_j / tau_j`, the provable ceiling on the count.
    pub fn budget_bound(&self) -> f64 {
        self.level_budget / self.threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BadCubeReport {
    pub params: RegularityParams,
    pub spatial_dim: usize,
    pub horizon: f64,
    pub levels: Vec<LevelReport>,
    /// `sum_j B_j`.
    pub total_budget: f64,
    /// Levels used for the dimension fit.
    pub fit_levels: (u32, u32),
    /// Upper-bound estimate of the singular-set dimension; `None` when the
    /// fit is undefined.
    pub dimension_estimate: Option<f64>,
}

impl BadCubeReport {
    /// `5 - 4 alpha` clamped to `[0, d]`.
    pub fn theoretical_dimension(&self) -> f64 {
        self.params
            .critical_exponent()
            .clamp(0.0, self.spatial_dim as f64)
    }

    pub fn total_bad(&self) -> usize {
        self.levels.iter().map(LevelReport::count).sum()
    }

    pub fn level(&self, j: u32) -> Option<&LevelReport> {
        self.levels.iter().find(|l| l.level == j)
    }

    /// Bad-cube families over the fit range.
    pub fn families(&self) -> Result<CubeFamilySequence, LatticeError> {
        let (lo, hi) = self.fit_levels;
        let fams = (lo..=hi)
            .map(|j| self.level(j).map(|l| l.bad.clone()).unwrap_or_default())
            .collect();
        CubeFamilySequence::new(lo, fams)
    }

    /// Human-readable report.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        writeln!(s, "# bad-cube report").unwrap();
        writeln!(s, "horizon {}", self.horizon).unwrap();
        writeln!(s, "alpha {}", p.alpha).unwrap();
        writeln!(s, "badness_constant {}", p.badness_constant).unwrap();
        writeln!(s, "normalization {}", p.normalization.as_str()).unwrap();
        writeln!(s, "total_budget {}", self.total_budget).unwrap();
        writeln!(s, "level count nominal_bound budget_bound margin").unwrap();
        let check = badcount_bound_check(self);
        for (l, c) in self.levels.iter().zip(&check.levels) {
            writeln!(
                s,
                "{} {} {} {} {}",
                l.level,
                l.count(),
                l.nominal_bound,
                l.budget_bound(),
                c.margin
            )
            .unwrap();
        }
        match self.dimension_estimate {
            Some(d) => writeln!(s, "dimension_estimate {d} (upper-bound estimate)").unwrap(),
            None => writeln!(s, "dimension_estimate undefined").unwrap(),
        }
        writeln!(s, "theoretical_dimension {}", self.theoretical_dimension()).unwrap();
        writeln!(
            s,
            "bound_check {}",
            if check.passed { "pass" } else { "FAIL" }
        )
        .unwrap();
        s
    }

    /// Machine-readable rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,count,nominal_bound,budget_bound,margin,level_budget\n");
        let check = badcount_bound_check(self);
        for (l, c) in self.levels.iter().zip(&check.levels) {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                l.level,
                l.count(),
                l.nominal_bound,
                l.budget_bound(),
                c.margin,
                l.level_budget
            )
            .unwrap();
        }
        s
    }
}

/// Classify every cube of `traj` and assemble the report. `fit_levels`
/// defaults to `1..=J`.
pub fn bad_cubes(
    traj: &Trajectory,
    params: &RegularityParams,
    fit_levels: Option<(u32, u32)>,
) -> Result<BadCubeReport, RegularityError> {
    params.validate()?;
    let ints = traj
        .square_integrals
        .as_ref()
        .ok_or(RegularityError::MissingDiagnostics)?;
    let config = traj.config;
    let max_level = config.max_level();
    let fit = fit_levels.unwrap_or((1.min(max_level), max_level));
    if fit.0 > fit.1 || fit.1 > max_level {
        return Err(RegularityError::FitRange {
            min: fit.0,
            max: fit.1,
            max_level,
        });
    }
    let mut levels = Vec::with_capacity(config.num_levels());
    let mut total = CompensatedSum::new();
    for (j, vals) in ints.levels() {
        let weight = params.weight(j);
        let threshold = params.badness_threshold(j);
        let mut budget = CompensatedSum::new();
        let mut bad = BTreeSet::new();
        for (i, &x) in vals.iter().enumerate() {
            let weighted = weight * x;
            budget.add(weighted);
            if weighted >= threshold {
                bad.insert(config.cube_at(j, i));
            }
        }
        total.add(budget.value());
        levels.push(LevelReport {
            level: j,
            bad,
            nominal_bound: params.badness_constant * (j as f64 * params.critical_exponent()).exp2(),
            threshold,
            level_budget: budget.value(),
        });
    }
    let mut report = BadCubeReport {
        params: *params,
        spatial_dim: config.spatial_dim(),
        horizon: traj.horizon(),
        levels,
        total_budget: total.value(),
        fit_levels: fit,
        dimension_estimate: None,
    };
    report.dimension_estimate = singular_dimension_estimate(&report)
        .ok()
        .map(|s| s.estimate);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelCheck {
    pub level: u32,
    pub count: usize,
    pub bound: f64,
    /// `bound / count`; infinite when there are no bad cubes.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub levels: Vec<LevelCheck>,
    pub passed: bool,
}

fn check_with(report: &BadCubeReport, budget_of: impl Fn(&LevelReport) -> f64) -> BoundCheck {
    let levels: Vec<LevelCheck> = report
        .levels
        .iter()
        .map(|l| {
            let budget = budget_of(l);
            let count = l.count();
            // count * tau_j <= budget, compared without dividing
            let pass = count as f64 * l.threshold <= budget;
            let bound = budget / l.threshold;
            let margin = if count == 0 {
                f64::INFINITY
            } else {
                bound / count as f64
            };
            LevelCheck {
                level: l.level,
                count,
                bound,
                margin,
                pass,
            }
        })
        .collect();
    let passed = levels.iter().all(|l| l.pass);
    BoundCheck { levels, passed }
}

/// Check `#bad_j <= B_j / tau_j` with the per-level budget `B_j`.
pub fn badcount_bound_check(report: &BadCubeReport) -> BoundCheck {
    check_with(report, |l| l.level_budget)
}

/// Same check against one scalar budget for every level, e.g. the total
/// dissipation `sum_j B_j`.
pub fn badcount_bound_check_with_budget(report: &BadCubeReport, energy_budget: f64) -> BoundCheck {
    check_with(report, |_| energy_budget)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularDimension {
    pub estimate: f64,
    /// `5 - 4 alpha` clamped to `[0, d]`.
    pub theoretical: f64,
}

/// Growth exponent of the bad-cube families over the report's fit range.
/// No bad cubes at all gives 0.
pub fn singular_dimension_estimate(
    report: &BadCubeReport,
) -> Result<SingularDimension, RegularityError> {
    let theoretical = report.theoretical_dimension();
    let fams = report.families()?;
    if fams.len() < 3 {
        return Err(LatticeError::TooFewLevels(fams.len()).into());
    }
    if fams.counts().all(|(_, n)| n == 0) {
        return Ok(SingularDimension {
            estimate: 0.0,
            theoretical,
        });
    }
    let estimate = crate::lattice::limsup_dimension_estimate(&fams)?;
    Ok(SingularDimension {
        estimate,
        theoretical,
    })
}

/// Count-only variant used for synthetic calibration.
pub fn dimension_from_counts(counts: &[(u32, usize)]) -> Result<f64, RegularityError> {
    Ok(growth_exponent(counts.iter().copied())?)
}
