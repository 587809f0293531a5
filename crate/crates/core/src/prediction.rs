//! Closed-loop (autonomous) evolution of a trained model and prediction
//! quality metrics.
//!
//! After training, the output is fed back as the next input while the
//! control drive `beta b` stays on, so one readout serves any commanded
//! beta. Runs whose output leaves |v| <= 1e6 are truncated and flagged
//! rather than silently continued.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::reservoir::ReservoirState;
use crate::training::TrainedModel;

/// Output magnitude beyond which a run counts as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, Default)]
pub struct ClosedLoopOptions {
    /// Project fed-back (sin, cos) pairs onto the unit circle. Off by
    /// default: the raw output is fed back unchanged.
    pub project_unit_circle: bool,
}

/// One autonomous run of the trained machine.
#[derive(Debug, Clone)]
pub struct PredictionRun {
    pub beta: f64,
    pub initial_input: DVector<f64>,
    /// d_out x N outputs; column k is the model's k-th prediction.
    pub outputs: DMatrix<f64>,
    pub final_state: ReservoirState,
    /// Step index at which the output first exceeded the divergence limit;
    /// outputs are truncated right after it.
    pub diverged_at: Option<usize>,
}

impl PredictionRun {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Runs the model closed-loop for `steps` updates at constant `beta`.
pub fn closed_loop(
    model: &TrainedModel,
    beta: f64,
    u0: &DVector<f64>,
    r0: &ReservoirState,
    steps: usize,
) -> Result<PredictionRun> {
    closed_loop_with(model, &vec![beta; steps], u0, r0, &ClosedLoopOptions::default())
}

/// Step-function schedule variant: one beta value per step.
pub fn closed_loop_schedule(
    model: &TrainedModel,
    betas: &[f64],
    u0: &DVector<f64>,
    r0: &ReservoirState,
) -> Result<PredictionRun> {
    closed_loop_with(model, betas, u0, r0, &ClosedLoopOptions::default())
}

pub fn closed_loop_with(
    model: &TrainedModel,
    betas: &[f64],
    u0: &DVector<f64>,
    r0: &ReservoirState,
    opts: &ClosedLoopOptions,
) -> Result<PredictionRun> {
    let steps = betas.len();
    if steps == 0 {
        return Err(Error::Contract("closed loop needs steps >= 1".into()));
    }
    let res = &model.reservoir;
    if u0.len() != res.config.d_in {
        return Err(Error::Contract(format!(
            "u0 dimension {} != d_in {}",
            u0.len(),
            res.config.d_in
        )));
    }
    if u0.iter().any(|v| !v.is_finite()) || betas.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFiniteDrive);
    }
    if r0.r.len() != res.config.d_r {
        return Err(Error::Contract("reservoir state dimension mismatch".into()));
    }

    let d_out = res.config.d_out;
    let mut outputs = DMatrix::zeros(d_out, steps);
    let mut r = r0.r.clone();
    let mut scratch = DVector::zeros(res.config.d_r);
    let mut u = u0.clone();
    let mut v = DVector::zeros(d_out);
    let mut diverged_at = None;
    let mut produced = 0usize;
    for (k, &beta) in betas.iter().enumerate() {
        res.step_in_place(&mut r, &u, beta, &mut scratch);
        v.gemv(1.0, &model.w_out, &r, 0.0);
        outputs.column_mut(k).copy_from(&v);
        produced = k + 1;
        if v.iter().any(|x| !x.is_finite() || x.abs() > DIVERGENCE_LIMIT) {
            diverged_at = Some(k);
            break;
        }
        if opts.project_unit_circle {
            project_pairs(&mut v);
        }
        u.copy_from(&v);
    }
    if produced < steps {
        outputs = outputs.columns(0, produced).into_owned();
    }
    Ok(PredictionRun {
        beta: betas[0],
        initial_input: u0.clone(),
        outputs,
        final_state: ReservoirState { r },
        diverged_at,
    })
}

/// Normalizes the (sin, cos) pairs of the observable layout
/// [sin a, sin b, ..., cos a, cos b, ...] back onto the unit circle.
fn project_pairs(v: &mut DVector<f64>) {
    let half = v.len() / 2;
    for i in 0..half {
        let s = v[i];
        let c = v[i + half];
        let n = (s * s + c * c).sqrt();
        if n > 0.0 {
            v[i] = s / n;
            v[i + half] = c / n;
        }
    }
}

/// Time until the normalized prediction error first exceeds `threshold`,
/// in Lyapunov times when `lyapunov > 0`, otherwise in raw time units.
///
/// The error at step k is ||pred_k - truth_k|| / RMS(truth) with
/// RMS(truth) = sqrt(mean_k ||truth_k||^2). Column 0 corresponds to t = 0;
/// a never-exceeded horizon returns N dt (scaled).
pub fn valid_time(
    pred: &DMatrix<f64>,
    truth: &DMatrix<f64>,
    threshold: f64,
    lyapunov: f64,
    dt: f64,
) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::Contract(format!(
            "shape mismatch: {:?} vs {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    let n = truth.ncols();
    if n == 0 {
        return Err(Error::Contract("empty comparison".into()));
    }
    let rms = (truth.norm_squared() / n as f64).sqrt();
    if rms == 0.0 {
        return Err(Error::Contract("zero-RMS truth".into()));
    }
    let mut t_star = n as f64 * dt;
    for k in 0..n {
        let err = (pred.column(k) - truth.column(k)).norm() / rms;
        if err > threshold {
            t_star = k as f64 * dt;
            break;
        }
    }
    Ok(if lyapunov > 0.0 { lyapunov * t_star } else { t_star })
}
