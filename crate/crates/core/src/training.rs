//! Corpus assembly, open-loop state harvesting, and the ridge readout fit.
//!
//! Training data is a sequence of beta-labeled segments; concatenated they
//! make the control parameter a step function of time. The reservoir is
//! driven through the whole corpus once (no state reset at segment
//! boundaries), the first `washout` state/target pairs of every segment are
//! discarded, and the readout solves
//!
//! ```text
//! W_out = U V^T (V V^T + lambda I)^{-1}
//! ```
//!
//! via a Cholesky factorization of the regularized normal matrix.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reservoir::{Reservoir, ReservoirState};

/// One beta-labeled time series. Columns of `states` are time steps.
#[derive(Debug, Clone)]
pub struct TrajectorySegment {
    pub beta: f64,
    pub states: DMatrix<f64>,
    pub dt: f64,
}

impl TrajectorySegment {
    pub fn new(beta: f64, states: DMatrix<f64>, dt: f64) -> Result<Self> {
        if states.ncols() < 1 {
            return Err(Error::Contract("segment must contain at least one state".into()));
        }
        if !beta.is_finite() || states.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDrive);
        }
        Ok(Self { beta, states, dt })
    }

    pub fn len(&self) -> usize {
        self.states.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.states.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.nrows()
    }
}

/// Ordered segments sharing dimension and sampling step.
#[derive(Debug, Clone)]
pub struct Corpus {
    segments: Vec<TrajectorySegment>,
}

impl Corpus {
    /// Assembles segments, rejecting dimension or dt mismatches with the
    /// offending index.
    pub fn new(segments: Vec<TrajectorySegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Contract("corpus needs at least one segment".into()));
        }
        let d = segments[0].dim();
        let dt = segments[0].dt;
        for (i, s) in segments.iter().enumerate() {
            if s.dim() != d {
                return Err(Error::Contract(format!(
                    "segment {i} has dimension {} but segment 0 has {d}",
                    s.dim()
                )));
            }
            if s.dt != dt {
                return Err(Error::Contract(format!(
                    "segment {i} has dt {} but segment 0 has {dt}",
                    s.dt
                )));
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[TrajectorySegment] {
        &self.segments
    }

    pub fn d_in(&self) -> usize {
        self.segments[0].dim()
    }

    pub fn dt(&self) -> f64 {
        self.segments[0].dt
    }

    /// Total length L = sum of segment lengths.
    pub fn total_len(&self) -> usize {
        self.segments.iter().map(|s| s.len()).sum()
    }

    /// The step-function beta(t), expanded to one value per time step.
    pub fn beta_series(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_len());
        for s in &self.segments {
            out.extend(std::iter::repeat(s.beta).take(s.len()));
        }
        out
    }

    pub fn betas(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.beta).collect()
    }
}

/// Open-loop harvest: reservoir states paired with one-step-ahead targets.
#[derive(Debug)]
pub struct Harvest {
    /// d_r x L' reservoir states.
    pub v: DMatrix<f64>,
    /// d_in x L' targets; column k of `u` is the observation one step after
    /// the input that produced column k of `v`.
    pub u: DMatrix<f64>,
    /// Reservoir state after the full drive (warm start for prediction).
    pub final_state: ReservoirState,
}

/// Drives the reservoir through the corpus and collects the regression
/// pairs, excluding the first `washout` pairs of every segment. The state is
/// carried across segment boundaries, matching a single continuous drive.
pub fn harvest_states(
    res: &Reservoir,
    state0: &ReservoirState,
    corpus: &Corpus,
    washout: usize,
) -> Result<Harvest> {
    let d_in = corpus.d_in();
    if d_in != res.config.d_in {
        return Err(Error::Contract(format!(
            "corpus dimension {d_in} != reservoir d_in {}",
            res.config.d_in
        )));
    }
    for (i, s) in corpus.segments().iter().enumerate() {
        if washout >= s.len() {
            return Err(Error::Contract(format!(
                "washout {washout} >= length {} of segment {i}",
                s.len()
            )));
        }
    }

    let kept: usize = corpus
        .segments()
        .iter()
        .map(|s| s.len().saturating_sub(washout + 1))
        .sum();
    let d_r = res.config.d_r;
    let mut v = DMatrix::zeros(d_r, kept);
    let mut u = DMatrix::zeros(d_in, kept);

    let mut r = state0.r.clone();
    let mut scratch = DVector::zeros(d_r);
    let mut input = DVector::zeros(d_in);
    let mut col = 0usize;
    for seg in corpus.segments() {
        let t_len = seg.len();
        for j in 0..t_len {
            input.copy_from(&seg.states.column(j));
            if !seg.beta.is_finite() || input.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteDrive);
            }
            res.step_in_place(&mut r, &input, seg.beta, &mut scratch);
            // Pair r(j+1) with target u(j+1); the last step of a segment has
            // no target, and the first `washout` pairs are dropped.
            if j + 1 < t_len && j >= washout {
                v.column_mut(col).copy_from(&r);
                u.column_mut(col).copy_from(&seg.states.column(j + 1));
                col += 1;
            }
        }
    }
    debug_assert_eq!(col, kept);

    Ok(Harvest {
        v,
        u,
        final_state: ReservoirState { r },
    })
}

/// Ridge regression readout: `W_out = U V^T (V V^T + lambda I)^{-1}`.
///
/// The normal matrix is factorized (never inverted explicitly). With
/// lambda = 0 a singular system is an error; a finite but ill-conditioned
/// solve logs a warning above condition 1e12.
pub fn ridge_readout(v: &DMatrix<f64>, u: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if v.ncols() != u.ncols() {
        return Err(Error::Contract(format!(
            "state/target column mismatch: {} vs {}",
            v.ncols(),
            u.ncols()
        )));
    }
    if v.ncols() == 0 {
        return Err(Error::Contract("ridge fit needs at least one column".into()));
    }
    if lambda < 0.0 {
        return Err(Error::Contract("lambda must be >= 0".into()));
    }

    let d_r = v.nrows();
    let mut normal = v * v.transpose();
    for i in 0..d_r {
        normal[(i, i)] += lambda;
    }

    let chol = Cholesky::new(normal.clone()).ok_or_else(|| {
        Error::RegularizationRequired(
            "normal matrix V V^T is singular; set lambda > 0".into(),
        )
    })?;

    if lambda == 0.0 {
        if let Some(cond) = condition_estimate(&normal, &chol) {
            if cond > 1e12 {
                log::warn!("ridge solve with lambda = 0 has condition estimate {cond:.3e}");
            }
        }
    }

    // Solve (V V^T + lambda I) X = V U^T, then W_out = X^T. Two rounds of
    // iterative refinement push the residual to rounding level even when
    // lambda is far below the normal matrix's scale.
    let rhs = v * u.transpose();
    let mut x = chol.solve(&rhs);
    for _ in 0..2 {
        let residual = &rhs - &normal * &x;
        if residual.amax() <= f64::EPSILON * rhs.amax() {
            break;
        }
        x += chol.solve(&residual);
    }
    Ok(x.transpose())
}

/// Rough condition estimate: extreme eigenvalues of the SPD matrix by a few
/// forward and Cholesky-backed inverse power iterations.
fn condition_estimate(m: &DMatrix<f64>, chol: &Cholesky<f64, nalgebra::Dyn>) -> Option<f64> {
    let n = m.nrows();
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut hi = 0.0;
    for _ in 0..30 {
        let y = m * &x;
        hi = y.norm();
        if hi == 0.0 {
            return None;
        }
        x = y / hi;
    }
    let mut z = DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
    z /= z.norm();
    let mut inv_norm = 0.0;
    for _ in 0..30 {
        let y = chol.solve(&z);
        inv_norm = y.norm();
        if inv_norm == 0.0 {
            return None;
        }
        z = y / inv_norm;
    }
    Some(hi * inv_norm)
}

/// Record of how a model was trained, sufficient to reproduce the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    /// Drive value of each segment, in order.
    pub segment_betas: Vec<f64>,
    pub segment_lengths: Vec<usize>,
    pub washout: usize,
    pub ridge: f64,
    /// Seed of the reservoir build (also covers the initial-state stream).
    pub reservoir_seed: u64,
    /// Root-mean-square one-step residual over the harvested pairs.
    pub training_rmse: f64,
}

/// A reservoir paired with its fitted readout.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub reservoir: Reservoir,
    /// d_out x d_r readout matrix.
    pub w_out: DMatrix<f64>,
    /// Reservoir state at the end of the training drive.
    pub final_state: ReservoirState,
    pub manifest: TrainingManifest,
}

impl TrainedModel {
    /// Readout applied to a reservoir state.
    pub fn readout(&self, state: &ReservoirState) -> DVector<f64> {
        &self.w_out * &state.r
    }
}

/// Full training pass: harvest from the reservoir's seeded initial state,
/// fit the readout with the configured lambda, record the manifest.
pub fn train(res: Reservoir, corpus: &Corpus, washout: usize) -> Result<TrainedModel> {
    let state0 = res.initial_state();
    let harvest = harvest_states(&res, &state0, corpus, washout)?;
    let lambda = res.config.ridge;
    let w_out = ridge_readout(&harvest.v, &harvest.u, lambda)?;

    let residual = &w_out * &harvest.v - &harvest.u;
    let training_rmse = (residual.norm_squared() / residual.len() as f64).sqrt();

    let manifest = TrainingManifest {
        segment_betas: corpus.betas(),
        segment_lengths: corpus.segments().iter().map(|s| s.len()).collect(),
        washout,
        ridge: lambda,
        reservoir_seed: res.config.seed,
        training_rmse,
    };
    Ok(TrainedModel {
        reservoir: res,
        w_out,
        final_state: harvest.final_state,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::ReservoirConfig;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn test_config(d_r: usize, d_in: usize) -> ReservoirConfig {
        ReservoirConfig {
            d_r,
            density: 0.5,
            spectral_radius: 0.9,
            leak: 0.5,
            input_scale: 1.0,
            ridge: 1e-8,
            d_in,
            d_out: d_in,
            dt: 0.2,
            seed: 0,
        }
    }

    fn sine_segment(beta: f64, len: usize, d: usize, phase: f64) -> TrajectorySegment {
        let states = DMatrix::from_fn(d, len, |i, j| {
            ((j as f64) * 0.17 + i as f64 + phase).sin()
        });
        TrajectorySegment::new(beta, states, 0.2).unwrap()
    }

    #[test]
    fn corpus_single_segment() {
        let c = Corpus::new(vec![sine_segment(1.35, 2000, 4, 0.0)]).unwrap();
        assert_eq!(c.total_len(), 2000);
        let betas = c.beta_series();
        assert_eq!(betas.len(), 2000);
        assert!(betas.iter().all(|&b| b == 1.35));
    }

    #[test]
    fn corpus_step_function() {
        let betas = [-1.84, 1.0, 1.45, 1.98];
        let segs = betas
            .iter()
            .map(|&b| sine_segment(b, 2500, 4, b))
            .collect();
        let c = Corpus::new(segs).unwrap();
        assert_eq!(c.total_len(), 10_000);
        let series = c.beta_series();
        assert_eq!(series[0], -1.84);
        assert_eq!(series[2499], -1.84);
        assert_eq!(series[2500], 1.0);
        assert_eq!(series[9999], 1.98);
        let levels: std::collections::BTreeSet<u64> =
            series.iter().map(|b| b.to_bits()).collect();
        assert_eq!(levels.len(), 4);
    }

    #[test]
    fn corpus_dimension_mismatch_names_index() {
        let segs = vec![sine_segment(0.0, 10, 4, 0.0), sine_segment(1.0, 10, 2, 0.0)];
        match Corpus::new(segs) {
            Err(Error::Contract(msg)) => assert!(msg.contains("segment 1"), "{msg}"),
            other => panic!("expected contract error, got {other:?}"),
        }
    }

    #[test]
    fn harvest_pair_counts() {
        let cfg = test_config(12, 4);
        let res = Reservoir::build(&cfg, 5).unwrap();
        let state0 = res.initial_state();

        // T = 3, washout = 0: targets exist for steps 1, 2.
        let c = Corpus::new(vec![sine_segment(0.5, 3, 4, 0.0)]).unwrap();
        let h = harvest_states(&res, &state0, &c, 0).unwrap();
        assert_eq!(h.v.ncols(), 2);
        assert_eq!(h.u.ncols(), 2);

        // T = 2000, washout = 100 -> 1899 pairs.
        let c = Corpus::new(vec![sine_segment(0.5, 2000, 4, 0.0)]).unwrap();
        let h = harvest_states(&res, &state0, &c, 100).unwrap();
        assert_eq!(h.v.ncols(), 1899);

        // washout >= segment length is an error.
        let c = Corpus::new(vec![sine_segment(0.5, 50, 4, 0.0)]).unwrap();
        assert!(harvest_states(&res, &state0, &c, 50).is_err());
    }

    #[test]
    fn harvest_final_state_equals_plain_drive() {
        let cfg = test_config(8, 4);
        let res = Reservoir::build(&cfg, 9).unwrap();
        let state0 = res.initial_state();
        let segs = vec![
            sine_segment(0.3, 40, 4, 0.0),
            sine_segment(-1.1, 25, 4, 1.0),
        ];
        let c = Corpus::new(segs).unwrap();
        let h = harvest_states(&res, &state0, &c, 5).unwrap();

        let inputs: Vec<DVector<f64>> = c
            .segments()
            .iter()
            .flat_map(|s| (0..s.len()).map(|j| DVector::from(s.states.column(j).clone_owned())))
            .collect();
        let betas = c.beta_series();
        let driven = res.drive(&state0, &inputs, &betas).unwrap();
        assert_eq!(h.final_state.r, driven.last().unwrap().r);
    }

    #[test]
    fn harvest_targets_are_one_step_ahead() {
        let cfg = test_config(6, 4);
        let res = Reservoir::build(&cfg, 2).unwrap();
        let state0 = res.initial_state();
        let seg = sine_segment(0.9, 10, 4, 0.0);
        let expected_targets = seg.states.clone();
        let c = Corpus::new(vec![seg]).unwrap();
        let h = harvest_states(&res, &state0, &c, 3).unwrap();
        // Pairs kept: j = 3..8 -> targets are columns 4..9.
        assert_eq!(h.u.ncols(), 6);
        for (k, j) in (4..10).enumerate() {
            assert_eq!(h.u.column(k), expected_targets.column(j));
        }
    }

    #[test]
    fn ridge_scalar_interpolation() {
        // V = [1 1], U = [2 2], lambda = 0 -> w = 2.
        let v = dmatrix![1.0, 1.0];
        let u = dmatrix![2.0, 2.0];
        let w = ridge_readout(&v, &u, 0.0).unwrap();
        assert_relative_eq!(w[(0, 0)], 2.0, epsilon = 1e-12);

        // lambda = 1 -> w = U V^T / (V V^T + 1) = 4 / 3.
        let w = ridge_readout(&v, &u, 1.0).unwrap();
        assert_relative_eq!(w[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn ridge_shrinkage_limit() {
        let v = dmatrix![1.0, 0.5, -0.2; 0.3, 1.1, 0.9];
        let u = dmatrix![2.0, -1.0, 0.4; 0.1, 0.6, -0.8];
        let w = ridge_readout(&v, &u, 1e9).unwrap();
        let uvt_norm = (&u * v.transpose()).norm();
        assert!(w.norm() <= 1e-6 * uvt_norm, "norm {} vs {}", w.norm(), uvt_norm);
    }

    #[test]
    fn ridge_singular_lambda_zero_errors() {
        // Rank-deficient V V^T (two identical rows).
        let v = dmatrix![1.0, 2.0; 1.0, 2.0];
        let u = dmatrix![1.0, 1.0; 1.0, 1.0];
        match ridge_readout(&v, &u, 0.0) {
            Err(Error::RegularizationRequired(_)) => {}
            other => panic!("expected regularization error, got {other:?}"),
        }
        assert!(ridge_readout(&v, &u, 1e-6).is_ok());
    }

    /// Independent oracle: Gauss-Jordan solve of the explicit normal
    /// equations, no factorization shared with the implementation.
    fn ridge_oracle(v: &DMatrix<f64>, u: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
        let n = v.nrows();
        let mut m = v * v.transpose();
        for i in 0..n {
            m[(i, i)] += lambda;
        }
        let rhs = v * u.transpose();
        let mut aug = DMatrix::zeros(n, n + rhs.ncols());
        aug.view_mut((0, 0), (n, n)).copy_from(&m);
        aug.view_mut((0, n), (n, rhs.ncols())).copy_from(&rhs);
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&a, &b| {
                    aug[(a, col)].abs().partial_cmp(&aug[(b, col)].abs()).unwrap()
                })
                .unwrap();
            aug.swap_rows(col, pivot);
            let p = aug[(col, col)];
            for j in col..aug.ncols() {
                aug[(col, j)] /= p;
            }
            for row in 0..n {
                if row != col {
                    let f = aug[(row, col)];
                    for j in col..aug.ncols() {
                        aug[(row, j)] -= f * aug[(col, j)];
                    }
                }
            }
        }
        aug.view((0, n), (n, rhs.ncols())).transpose().into_owned()
    }

    #[test]
    fn ridge_matches_brute_force_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..25 {
            let d_r = rng.random_range(1..=8);
            let l = rng.random_range(d_r..=32);
            let d_out = rng.random_range(1..=4);
            let v = DMatrix::from_fn(d_r, l, |_, _| rng.random_range(-1.0..1.0));
            let u = DMatrix::from_fn(d_out, l, |_, _| rng.random_range(-1.0..1.0));
            for lambda in [0.0, 1e-6, 1e-2, 1.0] {
                let got = match ridge_readout(&v, &u, lambda) {
                    Ok(w) => w,
                    Err(Error::RegularizationRequired(_)) if lambda == 0.0 => continue,
                    Err(e) => panic!("{e}"),
                };
                let want = ridge_oracle(&v, &u, lambda);
                let rel = (&got - &want).norm() / want.norm().max(1e-300);
                assert!(rel < 1e-10, "lambda {lambda}: relative error {rel}");
            }
        }
    }

    #[test]
    fn ridge_normal_equation_residual() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v = DMatrix::from_fn(20, 60, |_, _| rng.random_range(-1.0..1.0));
        let u = DMatrix::from_fn(4, 60, |_, _| rng.random_range(-1.0..1.0));
        for lambda in [0.0, 1e-6, 1e-2, 1.0] {
            let w = ridge_readout(&v, &u, lambda).unwrap();
            let mut m = &v * v.transpose();
            for i in 0..20 {
                m[(i, i)] += lambda;
            }
            let uvt = &u * v.transpose();
            let res = (&w * &m - &uvt).norm() / uvt.norm();
            assert!(res <= 1e-8, "lambda {lambda}: residual {res}");
        }
    }

    #[test]
    fn shrinkage_monotone_in_lambda() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(15);
        for _ in 0..10 {
            let v = DMatrix::from_fn(6, 24, |_, _| rng.random_range(-1.0..1.0));
            let u = DMatrix::from_fn(3, 24, |_, _| rng.random_range(-1.0..1.0));
            let lambdas = [0.0, 1e-4, 1e-2, 0.5, 3.0, 100.0];
            let norms: Vec<f64> = lambdas
                .iter()
                .map(|&l| ridge_readout(&v, &u, l).unwrap().norm())
                .collect();
            for w in norms.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "norms not monotone: {norms:?}");
            }
        }
    }

    #[test]
    fn constant_series_trains_to_fixed_point() {
        let cfg = test_config(30, 4);
        let res = Reservoir::build(&cfg, 33).unwrap();
        let c_val = 0.42;
        let states = DMatrix::from_element(4, 400, c_val);
        let c = Corpus::new(vec![TrajectorySegment::new(0.0, states, 0.2).unwrap()]).unwrap();
        let model = train(res, &c, 50).unwrap();

        // Closed-loop one-step error at the fixed point.
        let mut state = model.final_state.clone();
        let mut u = DVector::from_element(4, c_val);
        for _ in 0..20 {
            state = model.reservoir.step(&state, &u, 0.0).unwrap();
            u = model.readout(&state);
        }
        for v in u.iter() {
            assert!((v - c_val).abs() < 1e-6, "fixed point error {}", (v - c_val).abs());
        }
    }

    #[test]
    fn standard_rc_reduction_beta_zero_equals_b_zero() {
        // m = 1, beta = 0: the bias vector contributes nothing, so zeroing
        // b gives the identical model (the standard RC).
        let cfg = test_config(16, 4);
        let res = Reservoir::build(&cfg, 12).unwrap();
        let mut res_no_bias = res.clone();
        res_no_bias.b.fill(0.0);

        let c = Corpus::new(vec![sine_segment(0.0, 120, 4, 0.4)]).unwrap();
        let m1 = train(res, &c, 10).unwrap();
        let m2 = train(res_no_bias, &c, 10).unwrap();
        assert_eq!(m1.w_out, m2.w_out);
        assert_eq!(m1.final_state.r, m2.final_state.r);
    }

    #[test]
    fn manifest_records_run() {
        let cfg = test_config(10, 4);
        let res = Reservoir::build(&cfg, 21).unwrap();
        let betas = [-1.84, 1.0, 1.45, 1.98];
        let segs = betas.iter().map(|&b| sine_segment(b, 60, 4, b)).collect();
        let c = Corpus::new(segs).unwrap();
        let model = train(res, &c, 8).unwrap();
        assert_eq!(model.manifest.segment_betas, betas.to_vec());
        assert_eq!(model.manifest.segment_lengths, vec![60; 4]);
        assert_eq!(model.manifest.washout, 8);
        assert_eq!(model.manifest.reservoir_seed, 21);
        assert_eq!(model.manifest.ridge, cfg.ridge);
        assert!(model.manifest.training_rmse.is_finite());
    }
}
