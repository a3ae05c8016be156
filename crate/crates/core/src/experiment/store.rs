//! Line-oriented text files: trajectories, diagnostics and plot data.
//!
//! Floats are written with `{:e}`, the shortest representation that reads
//! back to the same bits, so files are byte-reproducible.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::dynamics::{CoefficientField, Convention, ModelParams};
use crate::integrator::{Snapshot, StepLog, Trajectory, TrajectoryStatus};
use crate::lattice::LatticeConfig;
use crate::regularity::{badcount_bound_check, BadCubeReport};

use super::ExperimentError;

const TRAJECTORY_HEADER: &str = "# dyadic-trajectory v1";

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn read_file(path: &Path) -> Result<String, ExperimentError> {
    fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn push_values(s: &mut String, values: &[f64]) {
    for v in values {
        write!(s, ",{v:e}").unwrap();
    }
    s.push('\n');
}

pub fn trajectory_to_text(traj: &Trajectory) -> String {
    let mut s = String::new();
    writeln!(s, "{TRAJECTORY_HEADER}").unwrap();
    writeln!(s, "spatial_dim,{}", traj.config.spatial_dim()).unwrap();
    writeln!(s, "max_level,{}", traj.config.max_level()).unwrap();
    writeln!(s, "alpha,{:e}", traj.params.alpha).unwrap();
    writeln!(s, "dissipation,{}", traj.params.dissipation_enabled).unwrap();
    writeln!(s, "convention,{}", traj.params.convention.as_str()).unwrap();
    writeln!(s, "coupling_scale,{:e}", traj.params.coupling_scale).unwrap();
    writeln!(s, "sobolev_beta,{:e}", traj.sobolev_beta).unwrap();
    match traj.status {
        TrajectoryStatus::Completed => writeln!(s, "status,completed").unwrap(),
        TrajectoryStatus::BlowUp { time, sup_proxy } => {
            writeln!(s, "status,blow-up,{time:e},{sup_proxy:e}").unwrap()
        }
    }
    writeln!(s, "accepted_steps,{}", traj.steps.accepted).unwrap();
    writeln!(s, "rejected_steps,{}", traj.steps.rejected).unwrap();
    for snap in &traj.snapshots {
        write!(s, "snapshot,{:e}", snap.time).unwrap();
        push_values(&mut s, snap.field.values());
    }
    if let Some(ints) = &traj.square_integrals {
        s.push_str("square_integrals");
        push_values(&mut s, ints.values());
    }
    s
}

pub fn trajectory_from_text(text: &str) -> Result<Trajectory, ExperimentError> {
    let fail = |line: usize, msg: &str| ExperimentError::Format {
        line,
        message: msg.to_string(),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == TRAJECTORY_HEADER => {}
        _ => return Err(fail(1, "missing trajectory header")),
    }
    let mut dim = None;
    let mut level = None;
    let mut params = ModelParams::default();
    let mut beta = 1.0;
    let mut status = TrajectoryStatus::Completed;
    let mut steps = StepLog::default();
    let mut raw_snapshots: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut raw_ints: Option<Vec<f64>> = None;

    for (n, line) in lines {
        let lineno = n + 1;
        let mut fields = line.split(',');
        let key = fields.next().unwrap_or_default();
        let rest: Vec<&str> = fields.collect();
        let one = || {
            rest.first()
                .copied()
                .ok_or_else(|| fail(lineno, "missing value"))
        };
        let float = |s: &str| s.parse::<f64>().map_err(|_| fail(lineno, "bad number"));
        let floats = |xs: &[&str]| xs.iter().map(|x| float(x)).collect::<Result<Vec<f64>, _>>();
        match key {
            "spatial_dim" => {
                dim = Some(
                    one()?
                        .parse::<usize>()
                        .map_err(|_| fail(lineno, "bad integer"))?,
                )
            }
            "max_level" => {
                level = Some(
                    one()?
                        .parse::<u32>()
                        .map_err(|_| fail(lineno, "bad integer"))?,
                )
            }
            "alpha" => params.alpha = float(one()?)?,
            "dissipation" => {
                params.dissipation_enabled =
                    one()?.parse().map_err(|_| fail(lineno, "bad boolean"))?
            }
            "convention" => {
                params.convention =
                    Convention::parse(one()?).ok_or_else(|| fail(lineno, "unknown convention"))?
            }
            "coupling_scale" => params.coupling_scale = float(one()?)?,
            "sobolev_beta" => beta = float(one()?)?,
            "status" => {
                status = match rest.as_slice() {
                    ["completed"] => TrajectoryStatus::Completed,
                    ["blow-up", t, s] => TrajectoryStatus::BlowUp {
                        time: float(t)?,
                        sup_proxy: float(s)?,
                    },
                    _ => return Err(fail(lineno, "bad status")),
                }
            }
            "accepted_steps" => {
                steps.accepted = one()?.parse().map_err(|_| fail(lineno, "bad integer"))?
            }
            "rejected_steps" => {
                steps.rejected = one()?.parse().map_err(|_| fail(lineno, "bad integer"))?
            }
            "snapshot" => {
                let t = float(one()?)?;
                raw_snapshots.push((t, floats(&rest[1..])?));
            }
            "square_integrals" => raw_ints = Some(floats(&rest)?),
            "" => {}
            _ => return Err(fail(lineno, "unknown record")),
        }
    }
    let config = match (dim, level) {
        (Some(d), Some(j)) => LatticeConfig::new(d, j).map_err(|e| fail(0, &e.to_string()))?,
        _ => return Err(fail(0, "missing spatial_dim or max_level")),
    };
    let field = |v: Vec<f64>| {
        CoefficientField::from_values(&config, v).map_err(|e| fail(0, &e.to_string()))
    };
    let mut snapshots = Vec::with_capacity(raw_snapshots.len());
    for (time, v) in raw_snapshots {
        snapshots.push(Snapshot {
            time,
            field: field(v)?,
        });
    }
    let ints = raw_ints.map(field).transpose()?;
    let mut traj = Trajectory::from_parts(params, beta, snapshots, ints, config);
    traj.status = status;
    traj.steps = steps;
    Ok(traj)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), ExperimentError> {
    write_file(path, &trajectory_to_text(traj))
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, ExperimentError> {
    trajectory_from_text(&read_file(path)?)
}

/// `time,energy,dissipation_rate,sobolev_norm,sup_proxy`.
pub fn diagnostics_csv(traj: &Trajectory) -> String {
    let mut s = String::from("time,energy,dissipation_rate,sobolev_norm,sup_proxy\n");
    for r in &traj.diagnostics {
        writeln!(
            s,
            "{:e},{:e},{:e},{:e},{:e}",
            r.time, r.energy, r.dissipation_rate, r.sobolev_norm, r.sup_proxy
        )
        .unwrap();
    }
    s
}

/// One `time,level,energy` row per level per snapshot.
pub fn spectrum_csv(traj: &Trajectory) -> String {
    let mut s = String::from("time,level,energy\n");
    for r in &traj.diagnostics {
        for (j, e) in r.spectrum.iter().enumerate() {
            writeln!(s, "{:e},{},{:e}", r.time, j, e).unwrap();
        }
    }
    s
}

/// Plain columnar files for plotting: `energy.csv`, `spectrum.csv` and,
/// when a report is given, `badcount.csv`. Returns the paths written.
pub fn emit_plot_data(
    dir: &Path,
    traj: &Trajectory,
    report: Option<&BadCubeReport>,
) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();

    let mut energy = String::from("time,energy,dissipation_rate,sup_proxy\n");
    for r in &traj.diagnostics {
        writeln!(
            energy,
            "{:e},{:e},{:e},{:e}",
            r.time, r.energy, r.dissipation_rate, r.sup_proxy
        )
        .unwrap();
    }
    let path = dir.join("energy.csv");
    write_file(&path, &energy)?;
    written.push(path);

    let path = dir.join("spectrum.csv");
    write_file(&path, &spectrum_csv(traj))?;
    written.push(path);

    let mut bad = String::from("level,bad_count,bound\n");
    if let Some(report) = report {
        let check = badcount_bound_check(report);
        for l in &check.levels {
            writeln!(bad, "{},{},{:e}", l.level, l.count, l.bound).unwrap();
        }
    }
    let path = dir.join("badcount.csv");
    write_file(&path, &bad)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{integrate, IntegrationSpan, Recording};
    use crate::lattice::enumerate_cascades;

    fn small_run() -> Trajectory {
        let c = LatticeConfig::new(1, 4).unwrap();
        let table = enumerate_cascades(&c);
        let vals = c
            .cubes()
            .map(|q| 0.5 * crate::rng::cube_uniform(11, &q) * (-(q.level as f64)).exp2())
            .collect();
        let u0 = CoefficientField::from_values(&c, vals).unwrap();
        let rec = Recording {
            snapshot_interval: Some(0.01),
            ..Recording::default()
        };
        integrate(
            &u0,
            &IntegrationSpan::new(0.0, 0.05),
            &ModelParams::navier_stokes(1.1),
            &table,
            &rec,
        )
        .unwrap()
    }

    #[test]
    fn trajectory_text_roundtrip() {
        let traj = small_run();
        let text = trajectory_to_text(&traj);
        let back = trajectory_from_text(&text).unwrap();
        assert_eq!(back, traj);
        assert_eq!(trajectory_to_text(&back), text);
    }

    #[test]
    fn rejects_garbage() {
        assert!(trajectory_from_text("hello").is_err());
        let text = format!("{TRAJECTORY_HEADER}\nspatial_dim,1\nmax_level,2\nsnapshot,0,1,2\n");
        assert!(matches!(
            trajectory_from_text(&text),
            Err(ExperimentError::Format { .. })
        ));
    }

    #[test]
    fn plot_files_shape() {
        let traj = small_run();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plot_data(dir.path(), &traj, None).unwrap();
        assert_eq!(files.len(), 3);
        let spectrum = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
        assert_eq!(spectrum.lines().count(), 1 + traj.snapshots.len() * 5);
        let energy = fs::read_to_string(dir.path().join("energy.csv")).unwrap();
        let col: Vec<f64> = energy
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert!(col.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn empty_trajectory_header_only() {
        let mut traj = small_run();
        traj.snapshots.clear();
        traj.diagnostics.clear();
        let dir = tempfile::tempdir().unwrap();
        emit_plot_data(dir.path(), &traj, None).unwrap();
        for name in ["energy.csv", "spectrum.csv", "badcount.csv"] {
            let s = fs::read_to_string(dir.path().join(name)).unwrap();
            assert_eq!(s.lines().count(), 1, "{name}");
        }
    }
}
