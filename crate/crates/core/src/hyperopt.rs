//! Random hyperparameter search over the reservoir settings.
//!
//! The reservoir size stays fixed; (density, spectral radius, leak, input
//! scale, log10 ridge) are drawn uniformly from the configured ranges. Each
//! trial trains on the configured corpus and is scored on a held-out span:
//!
//! ```text
//! score = log10(one-step validation RMSE) - 2 * t_valid / T_holdout
//! ```
//!
//! Lower is better; the two terms are both O(1), so a decade of RMSE weighs
//! like holding the closed-loop forecast over half the holdout span. Trials
//! are sampled sequentially from one seeded generator and evaluated in
//! parallel, so results are deterministic for a fixed seed.

use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ReservoirSettings, TrainingMode};
use crate::error::{Error, Result};
use crate::experiment::{training_series, RunContext};
use crate::io::csv;
use crate::prediction::{closed_loop, valid_time};
use crate::reservoir::Reservoir;
use crate::training::{harvest_states, train, Corpus, TrajectorySegment};

/// Weight of the forecast-horizon term in the score.
const HORIZON_WEIGHT: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct Trial {
    pub index: usize,
    pub settings: ReservoirSettings,
    /// One-step RMSE over the held-out span (open loop).
    pub validation_rmse: f64,
    /// Closed-loop valid time over the last holdout span, raw time units.
    pub valid_time_raw: f64,
    pub score: f64,
}

#[derive(Debug)]
pub struct HyperoptOutcome {
    pub best: Trial,
    /// All trials, ranked best (lowest score) first.
    pub ranked: Vec<Trial>,
    pub files: Vec<PathBuf>,
}

fn sample_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Runs the search and writes a ranked trial table plus the best
/// configuration as a complete experiment file.
pub fn random_search(
    cfg: &ExperimentConfig,
    budget_override: Option<usize>,
    ctx: &RunContext,
) -> Result<HyperoptOutcome> {
    let hp = cfg
        .hyperopt
        .as_ref()
        .ok_or_else(|| Error::Config("config has no [hyperopt] section".into()))?;
    let budget = budget_override.unwrap_or(hp.budget);
    if budget == 0 {
        return Err(Error::Config("hyperopt budget must be >= 1".into()));
    }
    if cfg.training.mode == TrainingMode::Independent {
        return Err(Error::Config(
            "hyperopt does not support independent training mode".into(),
        ));
    }

    // Shared data: training corpus plus per-value holdout tails.
    let betas = cfg.training.betas.expand();
    let t_train = cfg.training.segment_len;
    let t_hold = hp.holdout_len;
    let dt = cfg.system.sample_dt();
    let mut train_segments = Vec::with_capacity(betas.len());
    let mut holdout_segments = Vec::with_capacity(betas.len());
    for &beta in &betas {
        let full = training_series(cfg, beta, t_train + t_hold)?;
        let drive = match cfg.training.mode {
            TrainingMode::ParameterAware => cfg.system.drive_beta(beta),
            _ => 0.0,
        };
        let train_part: DMatrix<f64> = full.columns(0, t_train).into_owned();
        let hold_part: DMatrix<f64> = full.columns(t_train, t_hold).into_owned();
        train_segments.push(TrajectorySegment::new(drive, train_part, dt)?);
        holdout_segments.push(TrajectorySegment::new(drive, hold_part, dt)?);
    }
    let train_corpus = Corpus::new(train_segments)?;
    let holdout_corpus = Corpus::new(holdout_segments)?;
    let last_holdout = holdout_corpus.segments().last().unwrap().clone();

    // Sequentially drawn trial settings (deterministic), parallel scoring.
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let proposals: Vec<ReservoirSettings> = (0..budget)
        .map(|_| ReservoirSettings {
            size: cfg.reservoir.size,
            density: sample_range(&mut rng, hp.density),
            spectral_radius: sample_range(&mut rng, hp.spectral_radius),
            leak: sample_range(&mut rng, hp.leak),
            input_scale: sample_range(&mut rng, hp.input_scale),
            ridge: 10f64.powf(sample_range(&mut rng, hp.log10_ridge)),
        })
        .collect();

    let seed = ctx.seed_for(cfg);
    let threshold = cfg.prediction.threshold;
    let washout_v = (cfg.training.washout / 2).clamp(1, t_hold.saturating_sub(2).max(1));
    let trials: Vec<Trial> = proposals
        .into_par_iter()
        .enumerate()
        .map(|(index, settings)| {
            let score = evaluate(
                cfg,
                &settings,
                seed,
                &train_corpus,
                &holdout_corpus,
                &last_holdout,
                washout_v,
                threshold,
            );
            match score {
                Ok((validation_rmse, valid_time_raw)) => {
                    let t_span = (t_hold as f64) * dt;
                    let score = validation_rmse.max(1e-300).log10()
                        - HORIZON_WEIGHT * valid_time_raw / t_span;
                    Trial {
                        index,
                        settings,
                        validation_rmse,
                        valid_time_raw,
                        score,
                    }
                }
                // Failed trials (degenerate draw, singular solve) rank last.
                Err(_) => Trial {
                    index,
                    settings,
                    validation_rmse: f64::INFINITY,
                    valid_time_raw: 0.0,
                    score: f64::INFINITY,
                },
            }
        })
        .collect();

    let mut ranked = trials;
    ranked.sort_by(|a, b| {
        a.score
            .partial_cmp(&b.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.index.cmp(&b.index))
    });
    let best = ranked[0].clone();

    // Emit the ranked table and the winning config.
    std::fs::create_dir_all(&ctx.out_dir)?;
    let table_path = ctx.out_dir.join(format!("{}_hyperopt_trials.csv", cfg.name));
    csv::write_columns(
        &table_path,
        &[
            "rank",
            "trial",
            "density",
            "spectral_radius",
            "leak",
            "input_scale",
            "ridge",
            "validation_rmse",
            "valid_time_raw",
            "score",
        ],
        &[
            (0..ranked.len()).map(|r| r as f64).collect(),
            ranked.iter().map(|t| t.index as f64).collect(),
            ranked.iter().map(|t| t.settings.density).collect(),
            ranked.iter().map(|t| t.settings.spectral_radius).collect(),
            ranked.iter().map(|t| t.settings.leak).collect(),
            ranked.iter().map(|t| t.settings.input_scale).collect(),
            ranked.iter().map(|t| t.settings.ridge).collect(),
            ranked.iter().map(|t| t.validation_rmse).collect(),
            ranked.iter().map(|t| t.valid_time_raw).collect(),
            ranked.iter().map(|t| t.score).collect(),
        ],
    )?;
    let mut best_cfg = cfg.clone();
    best_cfg.reservoir = best.settings;
    best_cfg.hyperopt = None;
    let cfg_path = ctx.out_dir.join(format!("{}_hyperopt_best.toml", cfg.name));
    std::fs::write(
        &cfg_path,
        toml::to_string_pretty(&best_cfg).map_err(|e| Error::Config(e.to_string()))?,
    )?;

    Ok(HyperoptOutcome {
        best,
        ranked,
        files: vec![table_path, cfg_path],
    })
}

/// One trial: train, then score on the holdout. Returns (one-step RMSE over
/// all holdout segments, closed-loop valid time over the last one).
#[allow(clippy::too_many_arguments)]
fn evaluate(
    cfg: &ExperimentConfig,
    settings: &ReservoirSettings,
    seed: u64,
    train_corpus: &Corpus,
    holdout_corpus: &Corpus,
    last_holdout: &TrajectorySegment,
    washout_v: usize,
    threshold: f64,
) -> Result<(f64, f64)> {
    let rc = settings.to_config(cfg.system.state_dim(), cfg.system.sample_dt(), seed);
    rc.validate()?;
    let res = Reservoir::build(&rc, seed)?;
    let model = train(res, train_corpus, cfg.training.washout)?;

    // Open-loop one-step RMSE on the holdout, continuing from the training
    // state (short re-sync washout).
    let h = harvest_states(
        &model.reservoir,
        &model.final_state,
        holdout_corpus,
        washout_v,
    )?;
    let residual = &model.w_out * &h.v - &h.u;
    let rmse = (residual.norm_squared() / residual.len() as f64).sqrt();

    // Closed-loop horizon against the last holdout segment (the one whose
    // start the final training state is synchronized with).
    let steps = last_holdout.len() - 1;
    let u0 = nalgebra::DVector::from(last_holdout.states.column(0).clone_owned());
    let run = closed_loop(&model, last_holdout.beta, &u0, &model.final_state, steps)?;
    let truth = last_holdout.states.columns(1, steps).into_owned();
    let n = run.outputs.ncols().min(steps);
    let vt = valid_time(
        &run.outputs.columns(0, n).into_owned(),
        &truth.columns(0, n).into_owned(),
        threshold,
        0.0,
        last_holdout.dt,
    )?;
    Ok((rmse, vt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn cfg_with_hyperopt(budget: usize, collapse: bool) -> ExperimentConfig {
        let ranges = if collapse {
            r#"
density = [0.4, 0.4]
spectral_radius = [0.9, 0.9]
leak = [0.5, 0.5]
input_scale = [1.0, 1.0]
log10_ridge = [-7.0, -7.0]
"#
        } else {
            r#"
density = [0.2, 0.8]
spectral_radius = [0.5, 1.5]
leak = [0.2, 1.0]
input_scale = [0.5, 2.0]
log10_ridge = [-9.0, -2.0]
"#
        };
        ExperimentConfig::from_toml(&format!(
            r#"
name = "hp"
seed = 5
[system]
kind = "pendulum"
[reservoir]
size = 50
density = 0.4
spectral_radius = 0.9
leak = 0.5
input_scale = 1.0
ridge = 1e-7
[training]
mode = "standard"
betas = [1.35]
segment_len = 300
washout = 40
[prediction]
steps = 100
discard = 10
[hyperopt]
budget = {budget}
seed = 11
holdout_len = 80
{ranges}
"#
        ))
        .unwrap()
    }

    #[test]
    fn budget_one_returns_single_sample() {
        let cfg = cfg_with_hyperopt(1, false);
        let dir = tempfile::tempdir().unwrap();
        let out = random_search(&cfg, None, &RunContext::new(dir.path())).unwrap();
        assert_eq!(out.ranked.len(), 1);
        assert!(out.best.score.is_finite());
        assert!(out.files.iter().all(|f| f.exists()));
    }

    #[test]
    fn collapsed_ranges_return_that_point() {
        let cfg = cfg_with_hyperopt(3, true);
        let dir = tempfile::tempdir().unwrap();
        let out = random_search(&cfg, None, &RunContext::new(dir.path())).unwrap();
        for t in &out.ranked {
            assert_eq!(t.settings.density, 0.4);
            assert_eq!(t.settings.spectral_radius, 0.9);
            assert_eq!(t.settings.leak, 0.5);
            assert_eq!(t.settings.input_scale, 1.0);
            assert!((t.settings.ridge - 1e-7).abs() < 1e-20);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = cfg_with_hyperopt(4, false);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let a = random_search(&cfg, None, &RunContext::new(d1.path())).unwrap();
        let b = random_search(&cfg, None, &RunContext::new(d2.path())).unwrap();
        assert_eq!(a.best.index, b.best.index);
        assert_eq!(a.best.score, b.best.score);
        let ra: Vec<usize> = a.ranked.iter().map(|t| t.index).collect();
        let rb: Vec<usize> = b.ranked.iter().map(|t| t.index).collect();
        assert_eq!(ra, rb);
    }
}
