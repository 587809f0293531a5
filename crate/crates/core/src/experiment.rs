//! Experiment orchestration: the library-level implementation of the CLI
//! subcommands. Generates ground truth, trains models, runs closed-loop
//! sweeps in parallel, extracts climates, and writes CSV/SVG/JSON outputs
//! with a content-hashed run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{
    climate_distance, poincare_section, series_lyapunov, DiagramSource, KamDiagram, PoincareSet,
    Projection, SectionPredicate, SeriesLyapunovParams,
};
use crate::config::{ExperimentConfig, SystemKind, TrainingMode};
use crate::error::{Error, Result};
use crate::io::artifact;
use crate::io::csv::{self, CsvTable};
use crate::io::svg::{self, PointGroup};
use crate::models::{pendulum, standard_map};
use crate::prediction::{closed_loop_with, ClosedLoopOptions, PredictionRun};
use crate::reservoir::Reservoir;
use crate::training::{train, Corpus, TrainedModel, TrajectorySegment};

/// Where a run writes and which seed it uses.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub out_dir: PathBuf,
    pub seed_override: Option<u64>,
}

impl RunContext {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            seed_override: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed_override = Some(seed);
        self
    }

    pub fn seed_for(&self, cfg: &ExperimentConfig) -> u64 {
        self.seed_override.unwrap_or(cfg.seed)
    }

    fn ensure_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Ground truth generation
// ---------------------------------------------------------------------------

fn map_variant(cfg: &ExperimentConfig) -> standard_map::MapVariant {
    if cfg.system.literal_eq9 {
        standard_map::MapVariant::LiteralEq9
    } else {
        standard_map::MapVariant::Sine
    }
}

/// Raw system states for one control value: 4 x len pendulum states, or the
/// (theta, p) orbit encoded as the 4-component observable.
pub fn training_series(cfg: &ExperimentConfig, beta_phys: f64, len: usize) -> Result<DMatrix<f64>> {
    match cfg.system.kind {
        SystemKind::Pendulum => {
            let s0 = pendulum::PendulumState::new(
                cfg.system.theta1_0,
                cfg.system.omega1_0,
                beta_phys,
                cfg.system.omega2_0,
            );
            let traj = pendulum::integrate(
                &s0,
                len,
                cfg.system.dt,
                &pendulum::IntegratorOptions::default(),
            );
            Ok(traj.to_matrix())
        }
        SystemKind::StandardMap => {
            let k = cfg.system.k.expect("validated");
            let orbit =
                standard_map::orbit(cfg.system.theta0, beta_phys, k, len, map_variant(cfg));
            let mut m = DMatrix::zeros(4, len);
            for (j, s) in orbit.iter().enumerate() {
                m.set_column(j, &nalgebra::Vector4::from(standard_map::encode(s)));
            }
            Ok(m)
        }
    }
}

/// Raw (unencoded) simulation table for CSV emission: header plus columns,
/// starting at t = dt (map: n = 1).
fn simulation_table(
    cfg: &ExperimentConfig,
    beta_phys: f64,
    len: usize,
) -> Result<(Vec<&'static str>, Vec<Vec<f64>>)> {
    match cfg.system.kind {
        SystemKind::Pendulum => {
            let states = training_series(cfg, beta_phys, len)?;
            let dt = cfg.system.dt;
            let t: Vec<f64> = (1..=len).map(|k| k as f64 * dt).collect();
            let row = |i: usize| -> Vec<f64> { states.row(i).iter().copied().collect() };
            Ok((
                vec!["t", "theta1", "omega1", "theta2", "omega2"],
                vec![t, row(0), row(1), row(2), row(3)],
            ))
        }
        SystemKind::StandardMap => {
            let k = cfg.system.k.expect("validated");
            let orbit =
                standard_map::orbit(cfg.system.theta0, beta_phys, k, len, map_variant(cfg));
            let n: Vec<f64> = (1..=len).map(|v| v as f64).collect();
            Ok((
                vec!["n", "theta", "p"],
                vec![
                    n,
                    orbit.iter().map(|s| s.theta).collect(),
                    orbit.iter().map(|s| s.p).collect(),
                ],
            ))
        }
    }
}

/// Climate of the true system at one control value: a Poincare set for the
/// pendulum, the orbit points themselves for the map (its stroboscopic
/// section is the iteration grid).
pub fn ground_truth_portrait(
    cfg: &ExperimentConfig,
    beta_phys: f64,
    steps: usize,
) -> Result<PoincareSet> {
    match cfg.system.kind {
        SystemKind::Pendulum => {
            let traj = training_series(cfg, beta_phys, steps)?;
            let pred = cfg
                .section_predicate()?
                .expect("pendulum always has a section predicate");
            poincare_section(&traj, cfg.system.dt, &pred, beta_phys)
        }
        SystemKind::StandardMap => {
            let k = cfg.system.k.expect("validated");
            let orbit =
                standard_map::orbit(cfg.system.theta0, beta_phys, k, steps, map_variant(cfg));
            let points: Vec<DVector<f64>> = orbit
                .iter()
                .map(|s| DVector::from_column_slice(&[s.theta, s.p]))
                .collect();
            let times = (1..=steps).map(|v| v as f64).collect();
            Ok(PoincareSet::new(beta_phys, points, times))
        }
    }
}

/// Distance projection matching the portrait layout of the system.
pub fn portrait_projection(cfg: &ExperimentConfig) -> Projection {
    match cfg.system.kind {
        SystemKind::Pendulum => Projection::pendulum_default(),
        SystemKind::StandardMap => Projection::map_default(),
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Assembles the beta-labeled training corpus prescribed by the config.
/// Standard mode forces the drive value to zero (plain RC); parameter-aware
/// mode feeds the scaled control value.
pub fn build_corpus(cfg: &ExperimentConfig) -> Result<Corpus> {
    let betas = cfg.training.betas.expand();
    let dt = cfg.system.sample_dt();
    let mut segments = Vec::with_capacity(betas.len());
    for &beta in &betas {
        let states = training_series(cfg, beta, cfg.training.segment_len)?;
        let drive = match cfg.training.mode {
            TrainingMode::ParameterAware => cfg.system.drive_beta(beta),
            TrainingMode::Standard | TrainingMode::Independent => 0.0,
        };
        segments.push(TrajectorySegment::new(drive, states, dt)?);
    }
    Corpus::new(segments)
}

/// Builds the reservoir with `seed` and trains it on the configured corpus.
pub fn train_from_config(cfg: &ExperimentConfig, seed: u64) -> Result<TrainedModel> {
    if cfg.training.mode == TrainingMode::Independent {
        return Err(Error::Config(
            "independent mode trains one model per value; use the kam command".into(),
        ));
    }
    let corpus = build_corpus(cfg)?;
    let res = Reservoir::build(&cfg.reservoir_config(seed), seed)?;
    train(res, &corpus, cfg.training.washout)
}

/// Trains a standard (drive = 0) model on a single control value's series.
pub fn train_single(cfg: &ExperimentConfig, beta_phys: f64, seed: u64) -> Result<TrainedModel> {
    let states = training_series(cfg, beta_phys, cfg.training.segment_len)?;
    let seg = TrajectorySegment::new(0.0, states, cfg.system.sample_dt())?;
    let corpus = Corpus::new(vec![seg])?;
    let res = Reservoir::build(&cfg.reservoir_config(seed), seed)?;
    train(res, &corpus, cfg.training.washout)
}

/// First closed-loop input for a control value: the physical initial
/// condition it encodes.
pub fn initial_input(cfg: &ExperimentConfig, beta_phys: f64) -> DVector<f64> {
    match cfg.system.kind {
        SystemKind::Pendulum => DVector::from_column_slice(&[
            cfg.system.theta1_0,
            cfg.system.omega1_0,
            beta_phys,
            cfg.system.omega2_0,
        ]),
        SystemKind::StandardMap => {
            let s = standard_map::MapState::new(cfg.system.theta0, beta_phys);
            DVector::from_column_slice(&standard_map::encode(&s))
        }
    }
}

/// Runs the trained model closed-loop at a control value. Continuation mode
/// seeds the loop with the machine's own next-step estimate; otherwise the
/// initial input encodes the control value's initial condition. Either way
/// the warm start is the final training state.
pub fn predict_at(
    cfg: &ExperimentConfig,
    model: &TrainedModel,
    beta_phys: f64,
    steps: usize,
) -> Result<PredictionRun> {
    let drive = match cfg.training.mode {
        TrainingMode::ParameterAware => cfg.system.drive_beta(beta_phys),
        TrainingMode::Standard | TrainingMode::Independent => 0.0,
    };
    let u0 = if cfg.prediction.continuation {
        model.readout(&model.final_state)
    } else {
        initial_input(cfg, beta_phys)
    };
    let opts = ClosedLoopOptions {
        project_unit_circle: cfg.prediction.project_unit_circle,
    };
    closed_loop_with(model, &vec![drive; steps], &u0, &model.final_state, &opts)
}

/// Climate of the machine at one control value: closed loop, transient
/// discarded, then the system's portrait extraction (section crossings for
/// the pendulum, decoded torus points for the map).
pub fn machine_portrait(
    cfg: &ExperimentConfig,
    model: &TrainedModel,
    beta_phys: f64,
) -> Result<PoincareSet> {
    let run = predict_at(cfg, model, beta_phys, cfg.prediction.steps)?;
    if let Some(step) = run.diverged_at {
        return Err(Error::Diverged(step));
    }
    let discard = cfg.prediction.discard.min(run.outputs.ncols().saturating_sub(2));
    let kept = run.outputs.columns(discard, run.outputs.ncols() - discard);
    match cfg.system.kind {
        SystemKind::Pendulum => {
            let pred = cfg
                .section_predicate()?
                .expect("pendulum always has a section predicate");
            poincare_section(&kept.into_owned(), cfg.system.dt, &pred, beta_phys)
        }
        SystemKind::StandardMap => {
            let mut points = Vec::with_capacity(kept.ncols());
            let mut times = Vec::with_capacity(kept.ncols());
            for j in 0..kept.ncols() {
                let o = [kept[(0, j)], kept[(1, j)], kept[(2, j)], kept[(3, j)]];
                let s = standard_map::decode(&o)?;
                points.push(DVector::from_column_slice(&[s.theta, s.p]));
                times.push((discard + j + 1) as f64);
            }
            Ok(PoincareSet::new(beta_phys, points, times))
        }
    }
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    name: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
    /// (path, sha256) of every emitted data file.
    files: Vec<(String, String)>,
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(format!("{:x}", h.finalize()))
}

fn write_manifest(
    ctx: &RunContext,
    cfg: &ExperimentConfig,
    command: &str,
    files: &[PathBuf],
) -> Result<PathBuf> {
    let mut hashed = Vec::with_capacity(files.len());
    for f in files {
        hashed.push((
            f.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            sha256_hex(f)?,
        ));
    }
    let manifest = RunManifest {
        command,
        name: &cfg.name,
        seed: ctx.seed_for(cfg),
        config: cfg,
        files: hashed,
    };
    let path = ctx.out_dir.join(format!("{}_{}_manifest.json", cfg.name, command));
    fs::write(
        &path,
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    Ok(path)
}

fn beta_tag(beta: f64) -> String {
    format!("{beta:+.4}").replace('+', "p").replace('-', "m").replace('.', "_")
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Writes one ground-truth trajectory CSV per training value
/// (segment + holdout samples each).
pub fn cmd_simulate(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Vec<PathBuf>> {
    ctx.ensure_dir()?;
    let len = cfg.training.segment_len + cfg.training.holdout_len;
    let mut files = Vec::new();
    for beta in cfg.training.betas.expand() {
        let (header, cols) = simulation_table(cfg, beta, len)?;
        let path = ctx
            .out_dir
            .join(format!("{}_sim_beta{}.csv", cfg.name, beta_tag(beta)));
        csv::write_columns(&path, &header, &cols)?;
        files.push(path);
    }
    write_manifest(ctx, cfg, "simulate", &files)?;
    Ok(files)
}

/// Trains the configured model and persists it (with the experiment echo)
/// as a JSON document.
pub fn cmd_train(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<PathBuf> {
    ctx.ensure_dir()?;
    let seed = ctx.seed_for(cfg);
    let model = train_from_config(cfg, seed)?;
    let path = ctx.out_dir.join(format!("{}_model.json", cfg.name));
    let mut art = artifact::ModelArtifact::from_model(&model);
    art.experiment = Some(cfg.clone());
    art.save(&path)?;
    write_manifest(ctx, cfg, "train", std::slice::from_ref(&path))?;
    Ok(path)
}

/// Loads a model document and runs it closed-loop at one control value,
/// emitting a prediction CSV. A diverged run still writes the partial CSV,
/// flags it with a trailing comment, and returns the divergence error.
pub fn cmd_predict(
    model_path: &Path,
    cfg_override: Option<&ExperimentConfig>,
    beta_phys: f64,
    steps: Option<usize>,
    ctx_out: &Path,
) -> Result<PathBuf> {
    let art = artifact::ModelArtifact::load(model_path)?;
    let cfg = match cfg_override {
        Some(c) => c.clone(),
        None => art.experiment.clone().ok_or_else(|| {
            Error::Config(
                "model document carries no experiment config; pass --config".into(),
            )
        })?,
    };
    let model = art.into_model()?;
    fs::create_dir_all(ctx_out)?;
    let steps = steps.unwrap_or(cfg.prediction.steps);
    let run = predict_at(&cfg, &model, beta_phys, steps)?;

    let n = run.outputs.ncols();
    let dt = cfg.system.sample_dt();
    let t: Vec<f64> = (1..=n).map(|k| k as f64 * dt).collect();
    let mut header: Vec<&str> = vec!["t"];
    let mut cols = vec![t];
    match cfg.system.kind {
        SystemKind::Pendulum => {
            header.extend(["theta1", "omega1", "theta2", "omega2"]);
            for i in 0..4 {
                cols.push(run.outputs.row(i).iter().copied().collect());
            }
        }
        SystemKind::StandardMap => {
            header.extend(["sin_theta", "sin_p", "cos_theta", "cos_p", "theta", "p"]);
            for i in 0..4 {
                cols.push(run.outputs.row(i).iter().copied().collect());
            }
            let mut thetas = Vec::with_capacity(n);
            let mut ps = Vec::with_capacity(n);
            for j in 0..n {
                let o = [
                    run.outputs[(0, j)],
                    run.outputs[(1, j)],
                    run.outputs[(2, j)],
                    run.outputs[(3, j)],
                ];
                match standard_map::decode(&o) {
                    Ok(s) => {
                        thetas.push(s.theta);
                        ps.push(s.p);
                    }
                    Err(_) => {
                        thetas.push(f64::NAN);
                        ps.push(f64::NAN);
                    }
                }
            }
            cols.push(thetas);
            cols.push(ps);
        }
    }
    let path = ctx_out.join(format!(
        "{}_predict_beta{}.csv",
        cfg.name,
        beta_tag(beta_phys)
    ));
    csv::write_columns(&path, &header, &cols)?;
    if let Some(step) = run.diverged_at {
        csv::append_comment(&path, &format!("diverged at step {step}"))?;
        return Err(Error::Diverged(step));
    }
    Ok(path)
}

/// Per-value outcome of a KAM sweep.
#[derive(Debug, Serialize)]
pub struct KamBetaReport {
    pub beta: f64,
    pub machine_points: usize,
    pub model_points: usize,
    pub climate_distance: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct KamOutputs {
    pub machine: KamDiagram,
    pub model: KamDiagram,
    pub reports: Vec<KamBetaReport>,
    pub files: Vec<PathBuf>,
}

/// Reconstructs the dynamics diagram: closed-loop portrait per evaluation
/// value (parallel over values), the ground-truth diagram for the same
/// values, per-value climate distances, CSVs, and scatter SVGs. Failures at
/// individual values are isolated into the report.
pub fn cmd_kam(
    cfg: &ExperimentConfig,
    model: Option<&TrainedModel>,
    ctx: &RunContext,
) -> Result<KamOutputs> {
    ctx.ensure_dir()?;
    let seed = ctx.seed_for(cfg);
    let mut betas = Vec::new();
    if cfg.prediction.include_training_betas {
        betas.extend(cfg.training.betas.expand());
    }
    betas.extend(cfg.prediction.eval_betas.expand());
    betas.dedup();
    if betas.is_empty() {
        return Err(Error::Config("kam: no evaluation betas configured".into()));
    }

    let owned_model;
    let shared_model: Option<&TrainedModel> = match cfg.training.mode {
        TrainingMode::Independent => None,
        _ => match model {
            Some(m) => Some(m),
            None => {
                owned_model = train_from_config(cfg, seed)?;
                Some(&owned_model)
            }
        },
    };

    // Machine and truth portraits per value, in parallel.
    let results: Vec<(f64, Result<PoincareSet>, Result<PoincareSet>)> = betas
        .par_iter()
        .map(|&beta| {
            let machine = match shared_model {
                Some(m) => machine_portrait(cfg, m, beta),
                None => train_single(cfg, beta, seed)
                    .and_then(|m| machine_portrait(cfg, &m, beta)),
            };
            let truth = ground_truth_portrait(cfg, beta, cfg.prediction.steps);
            (beta, machine, truth)
        })
        .collect();

    let proj = portrait_projection(cfg);
    let mut machine_diag = KamDiagram::new(DiagramSource::Machine);
    let mut model_diag = KamDiagram::new(DiagramSource::Model);
    let mut reports = Vec::with_capacity(results.len());
    for (beta, machine, truth) in results {
        match (machine, truth) {
            (Ok(m), Ok(t)) => {
                let d = climate_distance(&m, &t, &proj).ok();
                reports.push(KamBetaReport {
                    beta,
                    machine_points: m.len(),
                    model_points: t.len(),
                    climate_distance: d,
                    error: None,
                });
                machine_diag.insert(m)?;
                model_diag.insert(t)?;
            }
            (machine, truth) => {
                let msg = match (&machine, &truth) {
                    (Err(e), _) => format!("machine: {e}"),
                    (_, Err(e)) => format!("model: {e}"),
                    _ => unreachable!(),
                };
                if let Ok(t) = truth {
                    reports.push(KamBetaReport {
                        beta,
                        machine_points: 0,
                        model_points: t.len(),
                        climate_distance: None,
                        error: Some(msg),
                    });
                    model_diag.insert(t)?;
                } else {
                    reports.push(KamBetaReport {
                        beta,
                        machine_points: 0,
                        model_points: 0,
                        climate_distance: None,
                        error: Some(msg),
                    });
                }
            }
        }
    }

    let mut files = Vec::new();
    for (diag, label) in [(&machine_diag, "machine"), (&model_diag, "model")] {
        let csv_path = ctx.out_dir.join(format!("{}_kam_{label}.csv", cfg.name));
        write_diagram_csv(&csv_path, cfg, diag)?;
        files.push(csv_path);
        let svg_path = ctx.out_dir.join(format!("{}_kam_{label}.svg", cfg.name));
        write_diagram_svg(&svg_path, cfg, diag, label)?;
        files.push(svg_path);
    }
    let report_path = ctx.out_dir.join(format!("{}_kam_distances.csv", cfg.name));
    csv::write_columns(
        &report_path,
        &["beta", "machine_points", "model_points", "climate_distance"],
        &[
            reports.iter().map(|r| r.beta).collect(),
            reports.iter().map(|r| r.machine_points as f64).collect(),
            reports.iter().map(|r| r.model_points as f64).collect(),
            reports
                .iter()
                .map(|r| r.climate_distance.unwrap_or(f64::NAN))
                .collect(),
        ],
    )?;
    files.push(report_path);
    write_manifest(ctx, cfg, "kam", &files)?;

    Ok(KamOutputs {
        machine: machine_diag,
        model: model_diag,
        reports,
        files,
    })
}

/// Diagram CSV layout: beta, point_index, then the point coordinates.
fn write_diagram_csv(path: &Path, cfg: &ExperimentConfig, diag: &KamDiagram) -> Result<()> {
    let coord_names: Vec<&str> = match cfg.system.kind {
        SystemKind::Pendulum => vec!["theta1", "omega1", "theta2", "omega2"],
        SystemKind::StandardMap => vec!["theta", "p"],
    };
    let mut header = vec!["beta", "point_index"];
    header.extend(&coord_names);
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for set in diag.entries() {
        for (i, p) in set.points.iter().enumerate() {
            cols[0].push(set.beta);
            cols[1].push(i as f64);
            for (c, v) in p.iter().enumerate() {
                cols[2 + c].push(*v);
            }
        }
    }
    csv::write_columns(path, &header, &cols)
}

/// Scatter in the default portrait plane, one color per beta.
fn write_diagram_svg(
    path: &Path,
    cfg: &ExperimentConfig,
    diag: &KamDiagram,
    label: &str,
) -> Result<()> {
    let (title, bounds) = match cfg.system.kind {
        SystemKind::Pendulum => (
            format!("{} [{}] theta2 (wrapped) vs omega2", cfg.name, label),
            None,
        ),
        SystemKind::StandardMap => (
            format!("{} [{}] theta vs p", cfg.name, label),
            Some((0.0, standard_map::TWO_PI, 0.0, standard_map::TWO_PI)),
        ),
    };
    let proj = portrait_projection(cfg);
    let groups: Vec<PointGroup> = diag
        .entries()
        .iter()
        .map(|set| PointGroup {
            label: format!("beta={:.3}", set.beta),
            points: set
                .points
                .iter()
                .map(|p| {
                    let v = proj.project(p);
                    match cfg.system.kind {
                        // Wrap the angular coordinate to [-pi, pi) for display.
                        SystemKind::Pendulum => {
                            let mut th = v[0].rem_euclid(standard_map::TWO_PI);
                            if th >= std::f64::consts::PI {
                                th -= standard_map::TWO_PI;
                            }
                            (th, v[1])
                        }
                        SystemKind::StandardMap => (v[0], v[1]),
                    }
                })
                .collect(),
        })
        .collect();
    svg::write_scatter(path, &title, &groups, bounds)
}

/// Section extraction from a trajectory CSV (pendulum state columns or any
/// numeric table; the time column is named `t` or comes first).
pub fn cmd_poincare(
    input: &Path,
    pred: &SectionPredicate,
    dt: f64,
    out_dir: &Path,
) -> Result<PathBuf> {
    let table = csv::read_table(input)?;
    let names: Vec<&str> = table
        .header
        .iter()
        .map(|s| s.as_str())
        .filter(|s| *s != "t" && *s != "n")
        .collect();
    let traj = table.to_trajectory(&names)?;
    let set = poincare_section(&traj, dt, pred, 0.0)?;
    fs::create_dir_all(out_dir)?;
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "section".into());
    let path = out_dir.join(format!("{stem}_section.csv"));
    let mut header = vec!["time", "point_index"];
    header.extend(&names);
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (i, (p, time)) in set.points.iter().zip(&set.times).enumerate() {
        cols[0].push(*time);
        cols[1].push(i as f64);
        for (c, v) in p.iter().enumerate() {
            cols[2 + c].push(*v);
        }
    }
    csv::write_columns(&path, &header, &cols)?;
    Ok(path)
}

/// Scatter SVG from a diagram CSV (first two non-index columns are the
/// plane; points grouped and colored by distinct beta when present).
pub fn cmd_plot(input: &Path, output: Option<&Path>) -> Result<PathBuf> {
    let table = csv::read_table(input)?;
    let coord_names: Vec<&str> = table
        .header
        .iter()
        .map(|s| s.as_str())
        .filter(|s| !matches!(*s, "beta" | "point_index" | "t" | "n" | "time"))
        .take(2)
        .collect();
    if coord_names.len() < 2 {
        return Err(Error::Contract(
            "plot needs at least two coordinate columns".into(),
        ));
    }
    let xs = table.column(coord_names[0]).unwrap();
    let ys = table.column(coord_names[1]).unwrap();
    let groups = match table.column("beta") {
        Some(betas) => {
            let mut order: Vec<f64> = Vec::new();
            for &b in betas {
                if !order.iter().any(|&x| x == b) {
                    order.push(b);
                }
            }
            order
                .iter()
                .map(|&b| PointGroup {
                    label: format!("beta={b:.3}"),
                    points: betas
                        .iter()
                        .zip(xs.iter().zip(ys))
                        .filter(|(bb, _)| **bb == b)
                        .map(|(_, (x, y))| (*x, *y))
                        .collect(),
                })
                .collect()
        }
        None => vec![PointGroup {
            label: "points".into(),
            points: xs.iter().copied().zip(ys.iter().copied()).collect(),
        }],
    };
    let out = match output {
        Some(p) => p.to_path_buf(),
        None => input.with_extension("svg"),
    };
    let title = format!("{} vs {}", coord_names[0], coord_names[1]);
    svg::write_scatter(&out, &title, &groups, None)?;
    Ok(out)
}

/// Lyapunov report: which estimator ran and its value.
#[derive(Debug, Serialize)]
pub struct LyapunovReport {
    pub method: String,
    pub exponent: f64,
    pub samples: usize,
}

/// Time-series estimator over the state columns of a trajectory CSV.
/// The sampling step is inferred from the `t`/`n` column when present.
pub fn lyapunov_from_csv(input: &Path) -> Result<LyapunovReport> {
    let table = csv::read_table(input)?;
    let names: Vec<&str> = table
        .header
        .iter()
        .map(|s| s.as_str())
        .filter(|s| !matches!(*s, "t" | "n" | "time" | "point_index"))
        .collect();
    let traj = table.to_trajectory(&names)?;
    let dt = infer_dt(&table);
    let params = if (dt - 1.0).abs() < 1e-12 {
        SeriesLyapunovParams::for_map()
    } else {
        SeriesLyapunovParams::default()
    };
    let exponent = series_lyapunov(&traj, dt, &params)?;
    Ok(LyapunovReport {
        method: "series".into(),
        exponent,
        samples: traj.ncols(),
    })
}

fn infer_dt(table: &CsvTable) -> f64 {
    for name in ["t", "n", "time"] {
        if let Some(col) = table.column(name) {
            if col.len() >= 2 {
                let dt = col[1] - col[0];
                if dt.is_finite() && dt > 0.0 {
                    return dt;
                }
            }
        }
    }
    1.0
}

/// Ground-truth Benettin exponent of the configured system at one control
/// value.
pub fn benettin_from_config(
    cfg: &ExperimentConfig,
    beta_phys: f64,
    horizon: f64,
) -> LyapunovReport {
    let exponent = match cfg.system.kind {
        SystemKind::Pendulum => {
            let s0 = pendulum::PendulumState::new(
                cfg.system.theta1_0,
                cfg.system.omega1_0,
                beta_phys,
                cfg.system.omega2_0,
            );
            pendulum::lyapunov(&s0, horizon)
        }
        SystemKind::StandardMap => standard_map::lyapunov(
            cfg.system.theta0,
            beta_phys,
            cfg.system.k.expect("validated"),
            horizon.max(1.0) as usize,
            map_variant(cfg),
        ),
    };
    LyapunovReport {
        method: "benettin".into(),
        exponent,
        samples: horizon.max(1.0) as usize,
    }
}

/// Series estimator on the closed-loop output of a persisted model.
pub fn lyapunov_from_model(
    model_path: &Path,
    beta_phys: f64,
    steps: Option<usize>,
) -> Result<LyapunovReport> {
    let art = artifact::ModelArtifact::load(model_path)?;
    let cfg = art
        .experiment
        .clone()
        .ok_or_else(|| Error::Config("model document carries no experiment config".into()))?;
    let model = art.into_model()?;
    let steps = steps.unwrap_or(cfg.prediction.steps);
    let run = predict_at(&cfg, &model, beta_phys, steps)?;
    if let Some(step) = run.diverged_at {
        return Err(Error::Diverged(step));
    }
    let discard = cfg.prediction.discard.min(run.outputs.ncols().saturating_sub(2));
    let kept = run
        .outputs
        .columns(discard, run.outputs.ncols() - discard)
        .into_owned();
    let dt = cfg.system.sample_dt();
    let params = match cfg.system.kind {
        SystemKind::Pendulum => SeriesLyapunovParams::default(),
        SystemKind::StandardMap => SeriesLyapunovParams::for_map(),
    };
    let exponent = series_lyapunov(&kept, dt, &params)?;
    Ok(LyapunovReport {
        method: "series(closed-loop)".into(),
        exponent,
        samples: kept.ncols(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn tiny_pendulum_cfg() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
name = "tiny"
seed = 3
[system]
kind = "pendulum"
[reservoir]
size = 60
density = 0.4
spectral_radius = 0.9
leak = 0.5
input_scale = 1.0
ridge = 1e-7
[training]
mode = "standard"
betas = [1.35]
segment_len = 400
holdout_len = 50
washout = 50
[prediction]
steps = 600
discard = 100
continuation = true
"#,
        )
        .unwrap()
    }

    fn tiny_map_cfg() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
name = "tinymap"
seed = 3
[system]
kind = "standard_map"
k = 0.5
[reservoir]
size = 80
density = 0.1
spectral_radius = 1.0
leak = 0.8
input_scale = 1.2
ridge = 1e-6
[training]
mode = "parameter_aware"
betas = [1.76, 3.35]
segment_len = 500
washout = 50
[prediction]
steps = 400
discard = 100
eval_betas = [2.5]
"#,
        )
        .unwrap()
    }

    #[test]
    fn simulate_row_counts_and_schema() {
        let cfg = tiny_pendulum_cfg();
        let dir = tempfile::tempdir().unwrap();
        let ctx = RunContext::new(dir.path());
        let files = cmd_simulate(&cfg, &ctx).unwrap();
        assert_eq!(files.len(), 1);
        let table = csv::read_table(&files[0]).unwrap();
        assert_eq!(table.header, vec!["t", "theta1", "omega1", "theta2", "omega2"]);
        assert_eq!(table.nrows(), 450);

        let cfg = tiny_map_cfg();
        let files = cmd_simulate(&cfg, &ctx).unwrap();
        assert_eq!(files.len(), 2);
        let table = csv::read_table(&files[0]).unwrap();
        assert_eq!(table.header, vec!["n", "theta", "p"]);
        assert_eq!(table.nrows(), 500);
    }

    #[test]
    fn simulate_is_deterministic_per_seed() {
        let cfg = tiny_pendulum_cfg();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let f1 = cmd_simulate(&cfg, &RunContext::new(d1.path())).unwrap();
        let f2 = cmd_simulate(&cfg, &RunContext::new(d2.path())).unwrap();
        assert_eq!(fs::read(&f1[0]).unwrap(), fs::read(&f2[0]).unwrap());
    }

    #[test]
    fn train_predict_round_trip_via_files() {
        let cfg = tiny_pendulum_cfg();
        let dir = tempfile::tempdir().unwrap();
        let ctx = RunContext::new(dir.path());
        let model_path = cmd_train(&cfg, &ctx).unwrap();

        // In-memory prediction.
        let model = train_from_config(&cfg, ctx.seed_for(&cfg)).unwrap();
        let run_mem = predict_at(&cfg, &model, 1.35, 200).unwrap();

        // File-based prediction equals it.
        let art = artifact::ModelArtifact::load(&model_path).unwrap();
        let loaded = art.into_model().unwrap();
        let run_file = predict_at(&cfg, &loaded, 1.35, 200).unwrap();
        let dev = (&run_mem.outputs - &run_file.outputs).amax();
        assert!(dev <= 1e-12, "deviation {dev}");

        // CSV emission via cmd_predict.
        let csv_path = cmd_predict(&model_path, None, 1.35, Some(200), dir.path()).unwrap();
        let table = csv::read_table(&csv_path).unwrap();
        assert_eq!(table.nrows(), 200);
    }

    #[test]
    fn kam_produces_both_diagrams_and_distances() {
        let cfg = tiny_map_cfg();
        let dir = tempfile::tempdir().unwrap();
        let ctx = RunContext::new(dir.path());
        let out = cmd_kam(&cfg, None, &ctx).unwrap();
        assert_eq!(out.machine.entries().len(), 3);
        assert_eq!(out.model.entries().len(), 3);
        assert_eq!(out.reports.len(), 3);
        for r in &out.reports {
            assert!(r.error.is_none(), "beta {}: {:?}", r.beta, r.error);
            assert!(r.climate_distance.is_some());
        }
        // Four diagram files + distance report.
        assert_eq!(out.files.len(), 5);
        for f in &out.files {
            assert!(f.exists());
        }
    }

    #[test]
    fn kam_rejects_empty_beta_list() {
        let mut cfg = tiny_map_cfg();
        cfg.prediction.include_training_betas = false;
        cfg.prediction.eval_betas = crate::config::BetaSpec::List(vec![]);
        let dir = tempfile::tempdir().unwrap();
        let ctx = RunContext::new(dir.path());
        assert!(matches!(cmd_kam(&cfg, None, &ctx), Err(Error::Config(_))));
    }

    #[test]
    fn poincare_command_from_csv() {
        let cfg = tiny_pendulum_cfg();
        let dir = tempfile::tempdir().unwrap();
        let ctx = RunContext::new(dir.path());
        let files = cmd_simulate(&cfg, &ctx).unwrap();
        let pred = SectionPredicate::pendulum_gated();
        let out = cmd_poincare(&files[0], &pred, 0.2, dir.path()).unwrap();
        let table = csv::read_table(&out).unwrap();
        assert!(table.nrows() > 0);
        assert_eq!(
            table.header,
            vec!["time", "point_index", "theta1", "omega1", "theta2", "omega2"]
        );
        // Crossings satisfy the gate.
        for v in table.column("theta1").unwrap() {
            assert!(*v > 0.0);
        }
        for v in table.column("omega1").unwrap() {
            assert!(v.abs() < 1e-2);
        }
    }

    #[test]
    fn plot_command_emits_svg() {
        let cfg = tiny_map_cfg();
        let dir = tempfile::tempdir().unwrap();
        let ctx = RunContext::new(dir.path());
        let out = cmd_kam(&cfg, None, &ctx).unwrap();
        let diagram_csv = out
            .files
            .iter()
            .find(|f| f.to_string_lossy().contains("kam_machine.csv"))
            .unwrap();
        let svg_path = cmd_plot(diagram_csv, None).unwrap();
        let text = fs::read_to_string(&svg_path).unwrap();
        assert!(text.starts_with("<svg"));
    }
}
