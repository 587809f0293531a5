//! Climate diagnostics: Poincaré sections, time-series Lyapunov estimation,
//! energy audits, and a point-set distance between replicated and true
//! climates.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::standard_map::angle_diff;

/// Crossing direction of the trigger variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Ascending,
    Descending,
    #[default]
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateSign {
    Positive,
    Negative,
}

/// Defines the surface of section: zero crossings of one coordinate,
/// optionally filtered by direction and by the sign of a second coordinate
/// at the crossing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPredicate {
    pub trigger: usize,
    pub direction: Direction,
    pub gate: Option<(usize, GateSign)>,
}

impl SectionPredicate {
    /// omega1 = 0 with theta1 > 0, crossings in either direction
    /// (state layout theta1, omega1, theta2, omega2).
    pub fn pendulum_gated() -> Self {
        Self {
            trigger: 1,
            direction: Direction::Any,
            gate: Some((0, GateSign::Positive)),
        }
    }

    /// omega1 = 0 with d omega1 / dt > 0, i.e. ascending crossings.
    pub fn pendulum_ascending() -> Self {
        Self {
            trigger: 1,
            direction: Direction::Ascending,
            gate: None,
        }
    }
}

/// Interpolated section crossings of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincareSet {
    /// Control-parameter label of the trajectory.
    pub beta: f64,
    /// Full interpolated states at the crossings.
    pub points: Vec<DVector<f64>>,
    /// Crossing times.
    pub times: Vec<f64>,
}

impl PoincareSet {
    pub fn new(beta: f64, points: Vec<DVector<f64>>, times: Vec<f64>) -> Self {
        Self {
            beta,
            points,
            times,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Where a diagram's trajectories came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagramSource {
    /// Closed-loop reservoir output.
    Machine,
    /// Direct simulation of the model system.
    Model,
}

/// Table beta -> section points; betas are unique.
#[derive(Debug, Clone)]
pub struct KamDiagram {
    pub source: DiagramSource,
    entries: Vec<PoincareSet>,
}

impl KamDiagram {
    pub fn new(source: DiagramSource) -> Self {
        Self {
            source,
            entries: Vec::new(),
        }
    }

    pub fn insert(&mut self, set: PoincareSet) -> Result<()> {
        if self.entries.iter().any(|e| e.beta == set.beta) {
            return Err(Error::Contract(format!(
                "duplicate beta {} in diagram",
                set.beta
            )));
        }
        self.entries.push(set);
        Ok(())
    }

    pub fn entries(&self) -> &[PoincareSet] {
        &self.entries
    }

    pub fn get(&self, beta: f64) -> Option<&PoincareSet> {
        self.entries.iter().find(|e| e.beta == beta)
    }
}

/// Detects sign changes of the trigger coordinate between consecutive
/// samples, filters by direction and gate, and linearly interpolates every
/// coordinate to the zero-crossing instant.
pub fn poincare_section(
    traj: &DMatrix<f64>,
    dt: f64,
    pred: &SectionPredicate,
    beta: f64,
) -> Result<PoincareSet> {
    let d = traj.nrows();
    let n = traj.ncols();
    if n < 2 {
        return Err(Error::Contract("section needs at least two samples".into()));
    }
    if pred.trigger >= d || pred.gate.is_some_and(|(g, _)| g >= d) {
        return Err(Error::Contract("section predicate index out of range".into()));
    }

    let mut points = Vec::new();
    let mut times = Vec::new();
    for k in 0..n - 1 {
        let w0 = traj[(pred.trigger, k)];
        let w1 = traj[(pred.trigger, k + 1)];
        if !(w0 * w1 < 0.0) {
            continue;
        }
        let rising = w0 < 0.0;
        let keep = match pred.direction {
            Direction::Ascending => rising,
            Direction::Descending => !rising,
            Direction::Any => true,
        };
        if !keep {
            continue;
        }
        let s = w0 / (w0 - w1);
        let point = DVector::from_fn(d, |i, _| {
            let a = traj[(i, k)];
            let b = traj[(i, k + 1)];
            a + s * (b - a)
        });
        if let Some((gate, sign)) = pred.gate {
            let g = point[gate];
            let ok = match sign {
                GateSign::Positive => g > 0.0,
                GateSign::Negative => g < 0.0,
            };
            if !ok {
                continue;
            }
        }
        times.push((k as f64 + s) * dt);
        points.push(point);
    }
    Ok(PoincareSet::new(beta, points, times))
}

/// Per-coordinate metric for point-set distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordMetric {
    Linear,
    Angular,
}

/// Selects which trajectory coordinates enter a distance computation and
/// how each is measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub coords: Vec<(usize, CoordMetric)>,
}

impl Projection {
    /// Pendulum section plot plane: theta2 (angular), omega2 (linear).
    pub fn pendulum_default() -> Self {
        Self {
            coords: vec![(2, CoordMetric::Angular), (3, CoordMetric::Linear)],
        }
    }

    /// Standard-map torus: theta and p, both angular.
    pub fn map_default() -> Self {
        Self {
            coords: vec![(0, CoordMetric::Angular), (1, CoordMetric::Angular)],
        }
    }

    pub fn project(&self, point: &DVector<f64>) -> Vec<f64> {
        self.coords.iter().map(|&(i, _)| point[i]).collect()
    }

    fn dist2(&self, a: &[f64], b: &[f64]) -> f64 {
        self.coords
            .iter()
            .enumerate()
            .map(|(j, &(_, metric))| {
                let d = match metric {
                    CoordMetric::Linear => a[j] - b[j],
                    CoordMetric::Angular => angle_diff(a[j], b[j]),
                };
                d * d
            })
            .sum()
    }
}

/// Symmetric mean nearest-neighbor distance between two section point sets,
/// measured in the given projection. Zero on identical sets; bounded by
/// `delta` when one set is the other shifted by `delta` in one coordinate.
pub fn climate_distance(a: &PoincareSet, b: &PoincareSet, proj: &Projection) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract("climate distance of an empty set".into()));
    }
    let pa: Vec<Vec<f64>> = a.points.iter().map(|p| proj.project(p)).collect();
    let pb: Vec<Vec<f64>> = b.points.iter().map(|p| proj.project(p)).collect();
    let mean_nn = |from: &[Vec<f64>], to: &[Vec<f64>]| -> f64 {
        let total: f64 = from
            .par_iter()
            .map(|p| {
                to.iter()
                    .map(|q| proj.dist2(p, q))
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .sum();
        total / from.len() as f64
    };
    Ok(0.5 * (mean_nn(&pa, &pb) + mean_nn(&pb, &pa)))
}

/// Energy statistics of a trajectory, measured against the first sample.
#[derive(Debug, Clone)]
pub struct EnergyAudit {
    pub mean: f64,
    pub max_abs_dev: f64,
    pub dev_series: Vec<f64>,
}

pub fn energy_audit<F>(traj: &DMatrix<f64>, energy_fn: F) -> Result<EnergyAudit>
where
    F: Fn(&[f64]) -> f64,
{
    let n = traj.ncols();
    if n == 0 {
        return Err(Error::Contract("energy audit of an empty trajectory".into()));
    }
    let col = |k: usize| -> Vec<f64> { traj.column(k).iter().copied().collect() };
    let e0 = energy_fn(&col(0));
    let mut sum = 0.0;
    let mut max_abs_dev = 0.0_f64;
    let mut dev_series = Vec::with_capacity(n);
    for k in 0..n {
        let e = energy_fn(&col(k));
        sum += e;
        let dev = e - e0;
        max_abs_dev = max_abs_dev.max(dev.abs());
        dev_series.push(dev);
    }
    Ok(EnergyAudit {
        mean: sum / n as f64,
        max_abs_dev,
        dev_series,
    })
}

/// Parameters of the time-series Lyapunov estimator.
#[derive(Debug, Clone, Copy)]
pub struct SeriesLyapunovParams {
    /// Temporal exclusion window around each reference point.
    pub theiler: usize,
    /// Nearest neighbors averaged per reference point.
    pub neighbors: usize,
    /// Samples the divergence of each pair is followed for.
    pub horizon: usize,
    /// Length of the sliding fit window (samples).
    pub fit_window: usize,
    /// Minimum neighbor pairs below which the estimate is refused.
    pub min_pairs: usize,
    /// Cap on reference points (evenly strided) to bound cost.
    pub max_references: usize,
}

impl Default for SeriesLyapunovParams {
    fn default() -> Self {
        Self {
            theiler: 50,
            neighbors: 5,
            horizon: 120,
            fit_window: 30,
            min_pairs: 10,
            max_references: 2000,
        }
    }
}

impl SeriesLyapunovParams {
    /// Defaults tuned for map iterations (dt = 1, fast divergence).
    pub fn for_map() -> Self {
        Self {
            theiler: 20,
            neighbors: 5,
            horizon: 25,
            fit_window: 8,
            min_pairs: 10,
            max_references: 2000,
        }
    }
}

/// Largest Lyapunov exponent from a trajectory alone: mean log-divergence of
/// nearest-neighbor pairs, slope taken over the best-correlated window of
/// the divergence curve. No delay embedding: the state dimension of the
/// series is used directly.
pub fn series_lyapunov(
    series: &DMatrix<f64>,
    dt: f64,
    params: &SeriesLyapunovParams,
) -> Result<f64> {
    let n = series.ncols();
    let horizon = params.horizon;
    if n < horizon + 2 * params.theiler + 10 {
        return Err(Error::InsufficientRecurrence);
    }
    let usable = n - horizon;

    let cols: Vec<Vec<f64>> = (0..n)
        .map(|k| series.column(k).iter().copied().collect())
        .collect();
    let dist2 = |a: usize, b: usize| -> f64 {
        cols[a]
            .iter()
            .zip(&cols[b])
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    };

    let stride = (usable / params.max_references).max(1);
    let refs: Vec<usize> = (0..usable).step_by(stride).collect();

    // Sum of ln(distance) per lag over all accepted pairs.
    let accum: Vec<(Vec<f64>, Vec<usize>)> = refs
        .par_iter()
        .map(|&i| {
            let mut sums = vec![0.0; horizon + 1];
            let mut counts = vec![0usize; horizon + 1];
            // k nearest neighbors of i outside the Theiler window.
            let mut best: Vec<(f64, usize)> = Vec::with_capacity(params.neighbors + 1);
            for j in 0..usable {
                let gap = i.abs_diff(j);
                if gap <= params.theiler {
                    continue;
                }
                let d2 = dist2(i, j);
                if best.len() < params.neighbors {
                    best.push((d2, j));
                    best.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                } else if d2 < best[params.neighbors - 1].0 {
                    best[params.neighbors - 1] = (d2, j);
                    best.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                }
            }
            for &(d2, j) in &best {
                if d2 <= 0.0 {
                    continue;
                }
                for k in 0..=horizon {
                    let d2k = dist2(i + k, j + k);
                    if d2k > 0.0 {
                        sums[k] += 0.5 * d2k.ln();
                        counts[k] += 1;
                    }
                }
            }
            (sums, counts)
        })
        .collect();

    let mut sums = vec![0.0; horizon + 1];
    let mut counts = vec![0usize; horizon + 1];
    for (s, c) in accum {
        for k in 0..=horizon {
            sums[k] += s[k];
            counts[k] += c[k];
        }
    }
    if counts[0] < params.min_pairs {
        return Err(Error::InsufficientRecurrence);
    }
    let curve: Vec<f64> = (0..=horizon)
        .map(|k| {
            if counts[k] > 0 {
                sums[k] / counts[k] as f64
            } else {
                f64::NAN
            }
        })
        .collect();

    Ok(best_window_slope(&curve, dt, params.fit_window))
}

/// Slope of the most linear stretch of the divergence curve: sliding
/// least-squares fits, scored by R^2; flat windows (no variance) score zero.
fn best_window_slope(curve: &[f64], dt: f64, window: usize) -> f64 {
    let n = curve.len();
    let w = window.max(3).min(n);
    let mut best_slope = 0.0;
    let mut best_r2 = -1.0;
    for start in 0..=(n - w) {
        let seg = &curve[start..start + w];
        if seg.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let (slope, r2) = linear_fit(seg, dt);
        if r2 > best_r2 {
            best_r2 = r2;
            best_slope = slope;
        }
    }
    if best_r2 < 0.0 {
        // Every window was degenerate; fall back to a global fit.
        let finite: Vec<f64> = curve.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.len() >= 2 {
            return linear_fit(&finite, dt).0;
        }
        return 0.0;
    }
    best_slope
}

fn linear_fit(y: &[f64], dt: f64) -> (f64, f64) {
    let n = y.len() as f64;
    let mean_x = (y.len() - 1) as f64 / 2.0;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (k, &v) in y.iter().enumerate() {
        let dx = k as f64 - mean_x;
        let dy = v - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return (0.0, 0.0);
    }
    let slope = sxy / sxx;
    let r2 = if syy <= f64::EPSILON * n {
        0.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    (slope / dt, r2)
}
