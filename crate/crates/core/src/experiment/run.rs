//! Running a configured experiment and writing its output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::dynamics::grandchild_energy_shares;
use crate::integrator::{integrate, IntegrateError, Trajectory, TrajectoryStatus};
use crate::lattice::{enumerate_cascades, CascadeTable};
use crate::regularity::{
    bad_cubes, badcount_bound_check, BadCubeReport, BoundCheck, RegularityParams,
};

use super::config::ExperimentConfig;
use super::initial::make_initial_field;
use super::store::{
    diagnostics_csv, emit_plot_data, read_file, read_trajectory, write_file, write_trajectory,
};
use super::ExperimentError;

/// Dissipation exponents visited by the `alpha-sweep` preset.
pub const SWEEP_ALPHAS: [f64; 4] = [1.05, 1.1, 1.2, 1.3];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    BlowUpFlagged,
    StiffnessFailure,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::BlowUpFlagged => "blow-up-flagged",
            RunStatus::StiffnessFailure => "stiffness-failure",
        }
    }

    /// Process exit code: 0, 2 and 3. Configuration and I/O errors use 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Completed => 0,
            RunStatus::BlowUpFlagged => 2,
            RunStatus::StiffnessFailure => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub directory: PathBuf,
    pub status: RunStatus,
    pub note: Option<String>,
    /// Absent only when the state went non-finite before anything usable
    /// was recorded.
    pub trajectory: Option<Trajectory>,
    pub report: Option<BadCubeReport>,
    pub bound_check: Option<BoundCheck>,
    pub config_hash: String,
    pub wall_time: f64,
    /// Paths relative to `directory`, in the order written. The manifest
    /// itself is last.
    pub files: Vec<String>,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    fn create(root: &Path) -> Result<Self, ExperimentError> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, contents: &str) -> Result<(), ExperimentError> {
        write_file(&self.root.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn adopt(&mut self, path: &Path) {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        self.files.push(rel.to_string_lossy().replace('\\', "/"));
    }

    fn checksums(&self) -> Result<Vec<(String, String)>, ExperimentError> {
        self.files
            .iter()
            .map(|name| {
                let path = self.root.join(name);
                let bytes = fs::read(&path).map_err(io_err(&path))?;
                Ok((name.clone(), sha256_hex(&bytes)))
            })
            .collect()
    }
}

fn with_workers<T: Send>(
    workers: usize,
    f: impl FnOnce() -> Result<T, ExperimentError> + Send,
) -> Result<T, ExperimentError> {
    if workers == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    pool.install(f)
}

type Extra<'a> = &'a (dyn Fn(&Trajectory, &CascadeTable) -> Result<Vec<(String, String)>, ExperimentError>
         + Sync);

/// Integrate, analyse and write `config.output.directory`:
/// `config.toml`, `trajectory.txt`, `diagnostics.csv`, `report.txt`,
/// `report.csv`, `plot/*.csv` and finally `manifest.txt`.
///
/// A bad-cube count above its bound is returned as
/// [`ExperimentError::BoundViolation`] after all files are written.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts, ExperimentError> {
    with_workers(config.workers, || run_inner(config, None))
}

fn run_inner(
    config: &ExperimentConfig,
    extra: Option<Extra<'_>>,
) -> Result<RunArtifacts, ExperimentError> {
    let start = Instant::now();
    let mut out = OutputDir::create(&config.output.directory)?;
    let normalized = config.to_toml();
    let config_hash = sha256_hex(normalized.as_bytes());
    out.put("config.toml", &normalized)?;

    let table = enumerate_cascades(&config.lattice);
    let u0 = make_initial_field(config);
    let outcome = integrate(
        &u0,
        &config.span,
        &config.model,
        &table,
        &config.recording(),
    );
    let (status, trajectory, note) = match outcome {
        Ok(traj) => match traj.status {
            TrajectoryStatus::Completed => (RunStatus::Completed, Some(traj), None),
            TrajectoryStatus::BlowUp { time, sup_proxy } => (
                RunStatus::BlowUpFlagged,
                Some(traj),
                Some(format!(
                    "sup proxy {sup_proxy:e} passed the ceiling {:e} at t = {time}",
                    config.output.blowup_ceiling
                )),
            ),
        },
        Err(IntegrateError::StiffnessFailure {
            time,
            dt,
            error_norm,
            accepted,
            rejected,
            partial,
        }) => (
            RunStatus::StiffnessFailure,
            Some(*partial),
            Some(format!(
                "step size fell below dt_min at t = {time}: dt = {dt:e}, error norm = {error_norm:e} \
                 ({accepted} accepted, {rejected} rejected steps)"
            )),
        ),
        Err(IntegrateError::NonFinite { time }) => (
            RunStatus::BlowUpFlagged,
            None,
            Some(format!("non-finite state at t = {time}")),
        ),
        Err(e) => return Err(e.into()),
    };

    let mut report = None;
    let mut bound_check = None;
    if let Some(traj) = &trajectory {
        write_trajectory(&config.output.directory.join("trajectory.txt"), traj)?;
        out.files.push("trajectory.txt".into());
        out.put("diagnostics.csv", &diagnostics_csv(traj))?;
        if traj.square_integrals.is_some() {
            let fit = (config.analysis.fit_min, config.analysis.fit_max);
            let r = bad_cubes(traj, &config.regularity_params(), Some(fit))?;
            out.put("report.txt", &r.to_text())?;
            out.put("report.csv", &r.to_csv())?;
            bound_check = Some(badcount_bound_check(&r));
            report = Some(r);
        }
        for path in emit_plot_data(&out.root.join("plot"), traj, report.as_ref())? {
            out.adopt(&path);
        }
        if let Some(extra) = extra {
            for (name, contents) in extra(traj, &table)? {
                out.put(&name, &contents)?;
            }
        }
    }

    let wall_time = start.elapsed().as_secs_f64();
    let mut manifest = String::from("# dyadic run manifest\n");
    writeln!(
        manifest,
        "version dyadic-core {}",
        env!("CARGO_PKG_VERSION")
    )
    .unwrap();
    writeln!(manifest, "config_hash {config_hash}").unwrap();
    writeln!(manifest, "status {}", status.as_str()).unwrap();
    writeln!(manifest, "exit_code {}", status.exit_code()).unwrap();
    if let Some(note) = &note {
        writeln!(manifest, "note {note}").unwrap();
    }
    if let Some(traj) = &trajectory {
        writeln!(manifest, "accepted_steps {}", traj.steps.accepted).unwrap();
        writeln!(manifest, "rejected_steps {}", traj.steps.rejected).unwrap();
    }
    let check_word = match &bound_check {
        Some(c) if c.passed => "pass",
        Some(_) => "fail",
        None => "not-run",
    };
    writeln!(manifest, "bound_check {check_word}").unwrap();
    writeln!(manifest, "wall_time_seconds {wall_time:.6}").unwrap();
    for (name, sum) in out.checksums()? {
        writeln!(manifest, "file {name} {sum}").unwrap();
    }
    out.put("manifest.txt", &manifest)?;

    if let Some(check) = &bound_check {
        if let Some(l) = check.levels.iter().find(|l| !l.pass) {
            return Err(ExperimentError::BoundViolation {
                level: l.level,
                count: l.count,
                bound: l.bound,
            });
        }
    }

    Ok(RunArtifacts {
        directory: out.root,
        status,
        note,
        trajectory,
        report,
        bound_check,
        config_hash,
        wall_time,
        files: out.files,
    })
}

/// One run per `alpha` in `alphas` under `<directory>/alpha-<alpha>`, plus a
/// `sweep.csv` summary in `<directory>`.
pub fn run_alpha_sweep(
    config: &ExperimentConfig,
    alphas: &[f64],
) -> Result<Vec<(f64, RunArtifacts)>, ExperimentError> {
    let base = &config.output.directory;
    fs::create_dir_all(base).map_err(io_err(base))?;
    let mut runs = Vec::with_capacity(alphas.len());
    let mut csv = String::from(
        "alpha,status,end_time,max_sup_proxy,max_sobolev_norm,final_energy,total_bad,dimension_estimate\n",
    );
    for &alpha in alphas {
        let mut c = config.clone();
        c.model.alpha = alpha;
        c.output.directory = base.join(format!("alpha-{alpha}"));
        let art = run_experiment(&c)?;
        let (end, sup, sob, energy) = match &art.trajectory {
            Some(t) => (
                t.end_time(),
                t.diagnostics
                    .iter()
                    .map(|r| r.sup_proxy)
                    .fold(0.0, f64::max),
                t.diagnostics
                    .iter()
                    .map(|r| r.sobolev_norm)
                    .fold(0.0, f64::max),
                t.diagnostics.last().map_or(f64::NAN, |r| r.energy),
            ),
            None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
        };
        let (bad, dim) = match &art.report {
            Some(r) => (
                r.total_bad().to_string(),
                r.dimension_estimate
                    .map_or("nan".to_string(), |x| format!("{x:e}")),
            ),
            None => ("nan".to_string(), "nan".to_string()),
        };
        writeln!(
            csv,
            "{alpha},{},{end:e},{sup:e},{sob:e},{energy:e},{bad},{dim}",
            art.status.as_str()
        )
        .unwrap();
        runs.push((alpha, art));
    }
    write_file(&base.join("sweep.csv"), &csv)?;
    Ok(runs)
}

/// `time,mid_level,mids,mean_normalized_entropy,max_share_deviation` for
/// every snapshot and every level that has energised grandchildren.
pub fn dispersion_csv(traj: &Trajectory, table: &CascadeTable) -> Result<String, ExperimentError> {
    let mut csv = String::from("time,mid_level,mids,mean_normalized_entropy,max_share_deviation\n");
    for snap in &traj.snapshots {
        let shares = grandchild_energy_shares(&snap.field, table)
            .map_err(|e| ExperimentError::Integrate(e.into()))?;
        let mut by_level: BTreeMap<u32, (usize, f64, f64)> = BTreeMap::new();
        for s in &shares {
            let entry = by_level.entry(s.mid.level).or_insert((0, 0.0, 0.0));
            entry.0 += 1;
            entry.1 += s.normalized_entropy();
            entry.2 = entry.2.max(s.max_deviation());
        }
        for (level, (n, entropy, dev)) in by_level {
            writeln!(
                csv,
                "{:e},{level},{n},{:e},{dev:e}",
                snap.time,
                entropy / n as f64
            )
            .unwrap();
        }
    }
    Ok(csv)
}

/// A normal run that also writes `dispersion.csv`.
pub fn run_dispersion(config: &ExperimentConfig) -> Result<RunArtifacts, ExperimentError> {
    let extra = |traj: &Trajectory, table: &CascadeTable| {
        Ok(vec![(
            "dispersion.csv".to_string(),
            dispersion_csv(traj, table)?,
        )])
    };
    with_workers(config.workers, || run_inner(config, Some(&extra)))
}

/// Re-run the bad-cube analysis on a stored trajectory.
pub fn analyze_trajectory(
    path: &Path,
    params: &RegularityParams,
    fit_levels: Option<(u32, u32)>,
) -> Result<(BadCubeReport, BoundCheck), ExperimentError> {
    let traj = read_trajectory(path)?;
    let report = bad_cubes(&traj, params, fit_levels)?;
    let check = badcount_bound_check(&report);
    Ok((report, check))
}

/// Verify every `file` line of a manifest against the directory contents.
/// Returns the names whose checksum does not match.
pub fn verify_manifest(directory: &Path) -> Result<Vec<String>, ExperimentError> {
    let text = read_file(&directory.join("manifest.txt"))?;
    let mut bad = Vec::new();
    for line in text.lines() {
        let mut parts = line.split(' ');
        if parts.next() != Some("file") {
            continue;
        }
        let (Some(name), Some(sum)) = (parts.next(), parts.next()) else {
            bad.push(line.to_string());
            continue;
        };
        let ok = fs::read(directory.join(name))
            .map(|b| sha256_hex(&b) == sum)
            .unwrap_or(false);
        if !ok {
            bad.push(name.to_string());
        }
    }
    Ok(bad)
}
