//! Parameter-aware echo-state reservoir: construction and state updates.
//!
//! The reservoir is a fixed random network. Node states advance as
//!
//! ```text
//! r(t+dt) = (1 - alpha) r(t) + alpha tanh(A r(t) + W_in u(t) + beta b)
//! ```
//!
//! where `A` is a sparse random Erdos-Renyi adjacency rescaled to a target
//! spectral radius, `W_in` couples the input, and `beta b` is the additive
//! control-parameter drive. Everything except the readout (see `training`)
//! is frozen at construction.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{self, CsrMatrix};

/// RNG stream ids for the two independent draws tied to one seed:
/// stream 0 drives construction (A pattern, A values, W_in, b — in that
/// order), stream 1 the initial node states.
const STREAM_BUILD: u64 = 0;
const STREAM_INIT_STATE: u64 = 1;

/// Construction parameters of a reservoir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirConfig {
    /// Node count D_r.
    pub d_r: usize,
    /// Connection probability d of the Erdos-Renyi adjacency.
    pub density: f64,
    /// Target spectral radius rho of the rescaled adjacency.
    pub spectral_radius: f64,
    /// Leaking coefficient alpha in (0, 1].
    pub leak: f64,
    /// Half-width sigma of the uniform draw for W_in and b.
    pub input_scale: f64,
    /// Ridge regression parameter lambda used by training.
    pub ridge: f64,
    /// Input dimension.
    pub d_in: usize,
    /// Output dimension (must equal `d_in`).
    pub d_out: usize,
    /// Update step in time units of the source system.
    pub dt: f64,
    /// Seed of the construction RNG.
    pub seed: u64,
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(format!("reservoir config: {msg}")));
        if self.d_r < 1 {
            return fail("d_r must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.density) {
            return fail("density must lie in [0, 1]");
        }
        if !(self.spectral_radius > 0.0) {
            return fail("spectral_radius must be > 0");
        }
        if !(self.leak > 0.0 && self.leak <= 1.0) {
            return fail("leak must lie in (0, 1]");
        }
        if !(self.input_scale > 0.0) {
            return fail("input_scale must be > 0");
        }
        if !(self.ridge >= 0.0) {
            return fail("ridge must be >= 0");
        }
        if self.d_in == 0 {
            return fail("d_in must be >= 1");
        }
        if self.d_in != self.d_out {
            return fail("d_in must equal d_out");
        }
        if !(self.dt > 0.0) {
            return fail("dt must be > 0");
        }
        Ok(())
    }
}

/// The fixed random network. Immutable once built; safe to share across
/// threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    pub a: CsrMatrix,
    pub w_in: DMatrix<f64>,
    pub b: DVector<f64>,
    pub config: ReservoirConfig,
}

/// Node states of one reservoir instance. Owned by exactly one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState {
    pub r: DVector<f64>,
}

impl ReservoirState {
    pub fn zeros(d_r: usize) -> Self {
        Self {
            r: DVector::zeros(d_r),
        }
    }
}

impl Reservoir {
    /// Builds the network deterministically from `(config, seed)`.
    ///
    /// Draw order on the construction stream is fixed — adjacency pattern,
    /// adjacency values, W_in, b — so artifacts reproduce across releases.
    /// A raw adjacency with spectral radius below 1e-12 is redrawn up to 16
    /// times before giving up.
    pub fn build(config: &ReservoirConfig, seed: u64) -> Result<Self> {
        let mut config = config.clone();
        config.seed = seed;
        config.validate()?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_BUILD);
        let n = config.d_r;

        let mut a = None;
        for _ in 0..16 {
            let raw = draw_adjacency(&mut rng, n, config.density)?;
            // Rescaling fails exactly when the draw is (numerically)
            // nilpotent; redraw in that case.
            if let Ok(scaled) = sparse::rescale_spectral_radius(&raw, config.spectral_radius) {
                a = Some(scaled);
                break;
            }
        }
        let a = a.ok_or(Error::DegenerateReservoirDraw)?;

        let s = config.input_scale;
        let w_in = DMatrix::from_fn(n, config.d_in, |_, _| rng.random_range(-s..s));
        let b = DVector::from_fn(n, |_, _| rng.random_range(-s..s));

        Ok(Self {
            a,
            w_in,
            b,
            config,
        })
    }

    /// Initial node states, uniform in [-1, 1], from the dedicated
    /// init-state stream of the same seed.
    pub fn initial_state(&self) -> ReservoirState {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(STREAM_INIT_STATE);
        ReservoirState {
            r: DVector::from_fn(self.config.d_r, |_, _| rng.random_range(-1.0..1.0)),
        }
    }

    /// One update of the node states under input `u` and control value
    /// `beta`.
    pub fn step(&self, state: &ReservoirState, u: &DVector<f64>, beta: f64) -> Result<ReservoirState> {
        self.check_drive(u, beta)?;
        let mut r = state.r.clone();
        let mut scratch = DVector::zeros(self.config.d_r);
        self.step_in_place(&mut r, u, beta, &mut scratch);
        Ok(ReservoirState { r })
    }

    /// Drives the reservoir open-loop through `inputs` / `betas`, returning
    /// the visited states r(1)..r(L).
    pub fn drive(
        &self,
        state0: &ReservoirState,
        inputs: &[DVector<f64>],
        betas: &[f64],
    ) -> Result<Vec<ReservoirState>> {
        if inputs.len() != betas.len() {
            return Err(Error::Contract(format!(
                "drive: {} inputs vs {} betas",
                inputs.len(),
                betas.len()
            )));
        }
        let mut out = Vec::with_capacity(inputs.len());
        let mut r = state0.r.clone();
        let mut scratch = DVector::zeros(self.config.d_r);
        for (u, &beta) in inputs.iter().zip(betas) {
            self.check_drive(u, beta)?;
            self.step_in_place(&mut r, u, beta, &mut scratch);
            out.push(ReservoirState { r: r.clone() });
        }
        Ok(out)
    }

    fn check_drive(&self, u: &DVector<f64>, beta: f64) -> Result<()> {
        if u.len() != self.config.d_in {
            return Err(Error::Contract(format!(
                "input dimension {} != d_in {}",
                u.len(),
                self.config.d_in
            )));
        }
        if !beta.is_finite() || u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDrive);
        }
        Ok(())
    }

    /// Allocation-free update used by the hot loops in training and
    /// prediction. Caller guarantees dimensions and finiteness.
    pub(crate) fn step_in_place(
        &self,
        r: &mut DVector<f64>,
        u: &DVector<f64>,
        beta: f64,
        scratch: &mut DVector<f64>,
    ) {
        self.a.matvec_into(r.as_slice(), scratch.as_mut_slice());
        scratch.gemv(1.0, &self.w_in, u, 1.0);
        scratch.axpy(beta, &self.b, 1.0);
        let alpha = self.config.leak;
        for (ri, si) in r.iter_mut().zip(scratch.iter()) {
            *ri = (1.0 - alpha) * *ri + alpha * si.tanh();
        }
    }
}

fn draw_adjacency(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Result<CsrMatrix> {
    // Pattern first (one Bernoulli per entry, row-major), then values for
    // the present entries in the same order.
    let mut present = Vec::new();
    for r in 0..n {
        for c in 0..n {
            if rng.random::<f64>() < density {
                present.push((r, c));
            }
        }
    }
    let triplets: Vec<(usize, usize, f64)> = present
        .into_iter()
        .map(|(r, c)| (r, c, rng.random_range(-1.0..1.0)))
        .collect();
    CsrMatrix::from_triplets(n, &triplets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::estimate_spectral_radius;
    use approx::assert_relative_eq;

    pub(crate) fn config(d_r: usize, density: f64, rho: f64, leak: f64, sigma: f64) -> ReservoirConfig {
        ReservoirConfig {
            d_r,
            density,
            spectral_radius: rho,
            leak,
            input_scale: sigma,
            ridge: 1e-9,
            d_in: 4,
            d_out: 4,
            dt: 0.2,
            seed: 0,
        }
    }

    #[test]
    fn rescaling_contract_small() {
        let cfg = config(2, 1.0, 0.5, 0.5, 1.0);
        let res = Reservoir::build(&cfg, 11).unwrap();
        assert_relative_eq!(
            estimate_spectral_radius(&res.a),
            0.5,
            max_relative = 1e-6
        );
    }

    #[test]
    fn determinism_bitwise() {
        let cfg = config(40, 0.3, 1.2, 0.5, 1.5);
        let a = Reservoir::build(&cfg, 99).unwrap();
        let b = Reservoir::build(&cfg, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, Reservoir::build(&cfg, 100).unwrap());
    }

    #[test]
    fn paper_scale_build_radius_and_density() {
        // (D_r, d, rho, alpha, sigma) = (500, 0.48, 1.48, 0.25, 1.52)
        let cfg = config(500, 0.48, 1.48, 0.25, 1.52);
        let res = Reservoir::build(&cfg, 3).unwrap();
        assert_relative_eq!(
            estimate_spectral_radius(&res.a),
            1.48,
            max_relative = 1e-6
        );
        let frac = res.a.density();
        assert!((frac - 0.48).abs() < 0.01, "density {frac}");
        let s = cfg.input_scale;
        assert!(res.w_in.iter().all(|v| v.abs() <= s));
        assert!(res.b.iter().all(|v| v.abs() <= s));
    }

    #[test]
    fn density_within_three_sigma() {
        for seed in 0..4 {
            let cfg = config(120, 0.1, 0.9, 1.0, 1.0);
            let res = Reservoir::build(&cfg, seed).unwrap();
            let n2 = (cfg.d_r * cfg.d_r) as f64;
            let sigma = (cfg.density * (1.0 - cfg.density) / n2).sqrt();
            assert!(
                (res.a.density() - cfg.density).abs() <= 3.0 * sigma,
                "seed {seed}: density {} vs expected {}",
                res.a.density(),
                cfg.density
            );
        }
    }

    #[test]
    fn degenerate_draw_errors() {
        // density 0 always produces the zero matrix; all 16 redraws fail.
        let cfg = config(3, 0.0, 1.0, 1.0, 1.0);
        match Reservoir::build(&cfg, 1) {
            Err(Error::DegenerateReservoirDraw) => {}
            other => panic!("expected degenerate draw, got {other:?}"),
        }
    }

    #[test]
    fn step_alpha_zero_is_identity() {
        let mut cfg = config(6, 0.5, 0.8, 1.0, 1.0);
        cfg.leak = 1.0;
        let res = Reservoir::build(&cfg, 5).unwrap();
        // alpha = 0 is outside the config invariant, so exercise the update
        // rule directly through a doctored copy.
        let mut res0 = res.clone();
        res0.config.leak = 0.0;
        let state = res0.initial_state();
        let u = DVector::from_element(4, 0.7);
        let next = res0.step(&state, &u, 2.3).unwrap();
        assert_eq!(next.r, state.r);
    }

    #[test]
    fn step_zero_network_gives_zero() {
        // alpha = 1, A = 0, W_in = 0, b = 0 -> tanh(0) = 0.
        let cfg = config(5, 0.4, 1.0, 1.0, 1.0);
        let mut res = Reservoir::build(&cfg, 8).unwrap();
        res.a.scale(0.0);
        res.w_in.fill(0.0);
        res.b.fill(0.0);
        let state = res.initial_state();
        let next = res.step(&state, &DVector::from_element(4, 3.0), 1.0).unwrap();
        assert!(next.r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_step_matches_hand_evaluation() {
        // d_r = 1, a = 0.5, w_in = 1, b = 1, alpha = 0.5, r = 0, u = 1,
        // beta = 2 -> r' = 0.5 tanh(0*0.5 + 1 + 2) = 0.5 tanh(3).
        let mut cfg = config(1, 1.0, 0.5, 0.5, 1.0);
        cfg.d_in = 1;
        cfg.d_out = 1;
        let mut res = Reservoir::build(&cfg, 1).unwrap();
        res.a = CsrMatrix::from_triplets(1, &[(0, 0, 0.5)]).unwrap();
        res.w_in[(0, 0)] = 1.0;
        res.b[0] = 1.0;
        let state = ReservoirState::zeros(1);
        let next = res
            .step(&state, &DVector::from_element(1, 1.0), 2.0)
            .unwrap();
        let expected = 0.5 * 3.0_f64.tanh();
        assert_relative_eq!(next.r[0], expected, epsilon = 1e-15);
        assert_relative_eq!(next.r[0], 0.49752, epsilon = 1e-5);
    }

    #[test]
    fn alpha_one_state_bounded() {
        let cfg = config(30, 0.5, 2.5, 1.0, 2.0);
        let res = Reservoir::build(&cfg, 4).unwrap();
        let mut state = res.initial_state();
        assert!(state.r.iter().all(|v| v.abs() <= 1.0));
        for k in 0..50 {
            let u = DVector::from_fn(4, |i, _| ((k + i) as f64 * 0.77).sin() * 10.0);
            state = res.step(&state, &u, 1.9).unwrap();
            assert!(state.r.iter().all(|v| v.abs() <= 1.0 && v.is_finite()));
        }
    }

    #[test]
    fn partial_leak_state_stays_in_unit_box() {
        // Any alpha in (0,1] keeps components in [-1,1] given r(0) there:
        // each update is a convex combination with a tanh value.
        let cfg = config(20, 0.5, 1.3, 0.37, 1.0);
        let res = Reservoir::build(&cfg, 21).unwrap();
        let mut state = res.initial_state();
        for k in 0..200 {
            let u = DVector::from_fn(4, |i, _| ((k * 7 + i) as f64).cos() * 5.0);
            state = res.step(&state, &u, -2.0).unwrap();
        }
        assert!(state.r.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn non_finite_drive_rejected() {
        let cfg = config(5, 0.5, 1.0, 0.5, 1.0);
        let res = Reservoir::build(&cfg, 2).unwrap();
        let state = res.initial_state();
        let mut u = DVector::from_element(4, 0.0);
        u[2] = f64::NAN;
        assert!(matches!(
            res.step(&state, &u, 0.0),
            Err(Error::NonFiniteDrive)
        ));
        let u = DVector::from_element(4, 0.0);
        assert!(matches!(
            res.step(&state, &u, f64::INFINITY),
            Err(Error::NonFiniteDrive)
        ));
    }

    #[test]
    fn drive_composes_steps() {
        let cfg = config(4, 0.9, 0.7, 0.6, 1.0);
        let res = Reservoir::build(&cfg, 17).unwrap();
        let state0 = res.initial_state();

        // Empty drive.
        assert!(res.drive(&state0, &[], &[]).unwrap().is_empty());

        // Single input equals one step.
        let u = DVector::from_fn(4, |i, _| 0.1 * i as f64);
        let one = res.drive(&state0, std::slice::from_ref(&u), &[0.3]).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0], res.step(&state0, &u, 0.3).unwrap());

        // L inputs: last output equals the L-fold iterated step.
        let inputs: Vec<DVector<f64>> = (0..12)
            .map(|k| DVector::from_fn(4, |i, _| ((k * 4 + i) as f64 * 0.31).sin()))
            .collect();
        let betas = vec![1.45; 12];
        let states = res.drive(&state0, &inputs, &betas).unwrap();
        let mut manual = state0.clone();
        for u in &inputs {
            manual = res.step(&manual, u, 1.45).unwrap();
        }
        assert_eq!(states.last().unwrap(), &manual);

        // Length mismatch is a contract violation.
        assert!(res.drive(&state0, &inputs, &[1.0]).is_err());
    }
}
