//! Temporal reduced-order model: a small network ε̃(t) trained to match
//! sensor samples while satisfying the undamped oscillator equation
//! ε̈ + ω₀²·ε = 0 at collocation points spread over the full prediction
//! window — including the part never covered by data, which is what lets
//! the model extrapolate.
//!
//! The network sees scaled time t̂ = t/t_ref and emits scaled strain
//! ε̂ = ε/strain_scale; the residual is assembled in physical units
//! (µε/s²) so the reported losses have a fixed meaning regardless of
//! scaling. ω₀² can be a fixed constant (forward problem) or a trainable
//! parameter stored in log space (identification), which keeps it positive
//! and gives the optimizer a well-scaled coordinate.

use crate::autodiff::{jet_cos, jet_scale, Jet, JetOrder, Tape, VarId};
use crate::datagen::SensorSample;
use crate::error::{Error, Result};
use crate::network::{
    bind, eval_f64, forward_jets, forward_values, Activation, Bound, LayerLayout, MlpSpec,
    ParamStore,
};
use crate::optim::{
    train_schedule, AdamConfig, LbfgsConfig, ObjEval, Objective, StopReason, TrainConfig,
    TrainHistory,
};
use crate::{map_chunks, EvalMode};

pub const LOG_OMEGA_SQ: &str = "log_omega_sq";

/// Input/output scaling between physical units (seconds, microstrain) and
/// the network's working range.
#[derive(Clone, Copy, Debug)]
pub struct TemporalScaling {
    /// Time divisor [s].
    pub t_ref: f64,
    /// Subtracted from t before division; zero except inside windowed
    /// training stages, which shift their window onto the same t̂ range.
    pub t_offset: f64,
    /// Strain multiplier [µε].
    pub strain_scale: f64,
}

impl Default for TemporalScaling {
    fn default() -> Self {
        TemporalScaling {
            t_ref: 8.0,
            t_offset: 0.0,
            strain_scale: 100.0,
        }
    }
}

impl TemporalScaling {
    pub fn t_hat(&self, t_s: f64) -> f64 {
        (t_s - self.t_offset) / self.t_ref
    }
}

/// Anything that can evaluate scaled strain ε̂ as a jet of scaled time.
/// Implemented by the network model and by the closed-form oscillation,
/// so residual code can be exercised against an exact solution.
pub trait TemporalField {
    fn eval_jet(&self, tape: &mut Tape, t_hat: &Jet) -> Result<Jet>;
}

/// Closed-form ε̂(t̂) = amp_hat · cos(√ω²·t_ref·t̂), the exact oscillator
/// solution expressed in scaled coordinates.
#[derive(Clone, Copy, Debug)]
pub struct AnalyticCos {
    pub amp_hat: f64,
    pub omega_sq: f64,
    pub t_ref: f64,
}

impl TemporalField for AnalyticCos {
    fn eval_jet(&self, tape: &mut Tape, t_hat: &Jet) -> Result<Jet> {
        let phase = jet_scale(tape, t_hat, self.omega_sq.sqrt() * self.t_ref);
        let c = jet_cos(tape, &phase)?;
        Ok(jet_scale(tape, &c, self.amp_hat))
    }
}

/// The network model bound to one tape.
pub struct MlpTemporalField<'a> {
    pub spec: &'a MlpSpec,
    pub layers: &'a [LayerLayout],
    pub bound: &'a Bound,
}

impl TemporalField for MlpTemporalField<'_> {
    fn eval_jet(&self, tape: &mut Tape, t_hat: &Jet) -> Result<Jet> {
        let out = forward_jets(
            tape,
            self.spec,
            self.layers,
            self.bound,
            std::slice::from_ref(t_hat),
        )?;
        Ok(out.into_iter().next().expect("output_dim is 1"))
    }
}

/// Oscillator residual in physical units [µε/s²]:
/// r = (strain_scale/t_ref²)·d²ε̂/dt̂² + ω²·strain_scale·ε̂, optionally
/// multiplied by `residual_scale` before squaring.
pub fn ode_residual(
    tape: &mut Tape,
    eps_hat: &Jet,
    omega_sq: VarId,
    scaling: &TemporalScaling,
    residual_scale: f64,
) -> Result<VarId> {
    let d2 = eps_hat
        .d2
        .as_ref()
        .ok_or_else(|| Error::usage("oscillator residual needs a second-order jet"))?[0];
    let accel = tape.scale(d2, scaling.strain_scale / (scaling.t_ref * scaling.t_ref));
    let eps_phys = tape.scale(eps_hat.val, scaling.strain_scale);
    let spring = tape.mul(omega_sq, eps_phys);
    let r = tape.add(accel, spring);
    Ok(tape.scale(r, residual_scale))
}

/// How ω₀² enters the model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OmegaMode {
    Fixed(f64),
    /// Learn ω₀², parameterized as exp(log_omega_sq) starting from `init`.
    Trainable { init: f64 },
}

/// Complete description of one temporal training task.
#[derive(Clone, Debug)]
pub struct TemporalProblem {
    pub net: MlpSpec,
    pub scaling: TemporalScaling,
    pub omega: OmegaMode,
    pub train_data: Vec<SensorSample>,
    /// Physical times [s] where the oscillator residual is enforced.
    pub collocation_t_s: Vec<f64>,
    pub w_ode: f64,
    pub w_data: f64,
    /// Extra multiplier applied to the residual before squaring (1 = raw
    /// physical units).
    pub ode_residual_scale: f64,
    pub chunk: usize,
    pub mode: EvalMode,
}

pub fn uniform_collocation(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| t0 + (t1 - t0) * i as f64 / (n - 1).max(1) as f64)
        .collect()
}

impl TemporalProblem {
    /// Physics-informed model: tanh network plus oscillator residual over
    /// `collocation_span`.
    pub fn pinn(
        train_data: Vec<SensorSample>,
        collocation_span: (f64, f64),
        n_collocation: usize,
        omega: OmegaMode,
        seed: u64,
    ) -> Self {
        TemporalProblem {
            net: MlpSpec {
                input_dim: 1,
                hidden: vec![30, 30, 30],
                output_dim: 1,
                activation: Activation::Tanh,
                seed,
            },
            scaling: TemporalScaling::default(),
            omega,
            train_data,
            collocation_t_s: uniform_collocation(collocation_span.0, collocation_span.1, n_collocation),
            w_ode: 1.0,
            w_data: 1.0,
            ode_residual_scale: 1.0,
            chunk: 128,
            mode: EvalMode::default(),
        }
    }

    /// Frequency-identification setup: ω² is trainable from `init`, and the
    /// oscillator residual is enforced across the data window only, softened
    /// by a 0.1 conditioning factor.
    ///
    /// Both choices matter. Collocation outside the data window lets the
    /// flat tail the network grows there tug the identified ω² away from
    /// the data (percent-level bias, or total collapse to the zero solution
    /// when the residual is unsoftened and the initial guess is far off);
    /// restricted to the data window with the softened residual, the data
    /// term establishes the oscillation first and ω² then locks onto it.
    pub fn identification(
        train_data: Vec<SensorSample>,
        omega_sq_init: f64,
        seed: u64,
    ) -> Result<Self> {
        if train_data.is_empty() {
            return Err(Error::validation("no training samples"));
        }
        let t_min = train_data.iter().map(|s| s.t_s).fold(f64::INFINITY, f64::min);
        let t_max = train_data
            .iter()
            .map(|s| s.t_s)
            .fold(f64::NEG_INFINITY, f64::max);
        if !(t_min < t_max) {
            return Err(Error::validation(
                "identification needs samples at more than one time",
            ));
        }
        let n_col = (((t_max - t_min) * 12.5).round() as usize).max(2);
        let mut p = TemporalProblem::pinn(
            train_data,
            (t_min, t_max),
            n_col,
            OmegaMode::Trainable {
                init: omega_sq_init,
            },
            seed,
        );
        p.ode_residual_scale = 0.1;
        Ok(p)
    }

    /// Purely data-driven reference model: same size, sine activation, no
    /// physics term.
    pub fn data_only_baseline(train_data: Vec<SensorSample>, seed: u64) -> Self {
        TemporalProblem {
            net: MlpSpec {
                input_dim: 1,
                hidden: vec![30, 30, 30],
                output_dim: 1,
                activation: Activation::Sin,
                seed,
            },
            scaling: TemporalScaling::default(),
            omega: OmegaMode::Fixed(0.0),
            train_data,
            collocation_t_s: Vec::new(),
            w_ode: 0.0,
            w_data: 1.0,
            ode_residual_scale: 1.0,
            chunk: 128,
            mode: EvalMode::default(),
        }
    }

    pub fn uses_ode(&self) -> bool {
        self.w_ode != 0.0
    }

    fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if self.net.input_dim != 1 || self.net.output_dim != 1 {
            return Err(Error::usage("temporal model must map 1 input to 1 output"));
        }
        if self.train_data.is_empty() {
            return Err(Error::validation("no training samples"));
        }
        if self.uses_ode() && self.collocation_t_s.is_empty() {
            return Err(Error::validation(
                "oscillator term enabled but no collocation points given",
            ));
        }
        if !(self.w_ode.is_finite() && self.w_data.is_finite())
            || self.w_ode < 0.0
            || self.w_data < 0.0
        {
            return Err(Error::validation("loss weights must be finite and non-negative"));
        }
        if self.chunk == 0 {
            return Err(Error::usage("chunk size must be at least 1"));
        }
        if let OmegaMode::Trainable { init } = self.omega {
            if !(init > 0.0) {
                return Err(Error::validation("trainable ω² must start positive"));
            }
        }
        Ok(())
    }

    /// Fresh parameter store matching this problem (network weights plus
    /// the log-space ω² when it is trainable).
    pub fn init_store(&self) -> Result<ParamStore> {
        self.validate()?;
        let mut store = ParamStore::init_glorot(&self.net)?;
        if let OmegaMode::Trainable { init } = self.omega {
            store.push_extra(LOG_OMEGA_SQ, init.ln());
        }
        Ok(store)
    }

    pub fn objective<'a>(&'a self, store: &ParamStore) -> Result<TemporalObjective<'a>> {
        self.validate()?;
        let extra_off = store.extra_offset(LOG_OMEGA_SQ);
        if matches!(self.omega, OmegaMode::Trainable { .. }) && extra_off.is_none() {
            return Err(Error::usage(
                "trainable ω² requires a store initialized by init_store",
            ));
        }
        Ok(TemporalObjective {
            problem: self,
            layers: store.layers.clone(),
            n_params: store.n_params(),
            extra_off,
        })
    }
}

/// The composite objective: w_ode·MSE(residual) + w_data·MSE(ε − ε_data).
/// Each chunk of points gets its own single-threaded tape; chunk results
/// are reduced in chunk order, so parallel and sequential evaluation agree
/// bitwise.
pub struct TemporalObjective<'a> {
    problem: &'a TemporalProblem,
    layers: Vec<LayerLayout>,
    n_params: usize,
    extra_off: Option<usize>,
}

impl TemporalObjective<'_> {
    fn omega_node(&self, tape: &mut Tape, bound: &Bound) -> VarId {
        match (self.problem.omega, self.extra_off) {
            (OmegaMode::Trainable { .. }, Some(off)) => tape.exp(bound.ids[off]),
            (OmegaMode::Fixed(v), _) => tape.constant(v),
            (OmegaMode::Trainable { init }, None) => tape.constant(init),
        }
    }

    /// Sum of squared oscillator residuals over one chunk of collocation
    /// points, with its parameter gradient.
    fn ode_chunk(&self, x: &[f64], range: std::ops::Range<usize>) -> Result<(f64, Vec<f64>)> {
        let p = self.problem;
        let mut tape = Tape::with_capacity(
            self.n_params + range.len() * 40 * (self.layers.len() + 1) * 12,
            range.len() * 40 * (self.layers.len() + 1) * 3,
        );
        let bound = bind(&mut tape, x);
        let omega_sq = self.omega_node(&mut tape, &bound);
        let field = MlpTemporalField {
            spec: &p.net,
            layers: &self.layers,
            bound: &bound,
        };
        let mut acc = tape.zero();
        for i in range {
            let t_hat = p.scaling.t_hat(p.collocation_t_s[i]);
            let t_jet = Jet::seed(&mut tape, t_hat, 0, 1, JetOrder::Second)?;
            let eps_hat = field.eval_jet(&mut tape, &t_jet)?;
            let r = ode_residual(&mut tape, &eps_hat, omega_sq, &p.scaling, p.ode_residual_scale)?;
            let sq = tape.square(r);
            acc = tape.add(acc, sq);
        }
        let grad = tape.backward(acc)?;
        Ok((tape.value(acc), grad))
    }

    /// Sum of squared data misfits (physical µε) over one chunk of samples.
    fn data_chunk(&self, x: &[f64], range: std::ops::Range<usize>) -> Result<(f64, Vec<f64>)> {
        let p = self.problem;
        let mut tape = Tape::with_capacity(
            self.n_params + range.len() * 40 * (self.layers.len() + 1) * 4,
            range.len() * 40 * (self.layers.len() + 1),
        );
        let bound = bind(&mut tape, x);
        let mut acc = tape.zero();
        for i in range {
            let s = p.train_data[i];
            let t_node = tape.constant(p.scaling.t_hat(s.t_s));
            let out = forward_values(&mut tape, &p.net, &self.layers, &bound, &[t_node])?;
            let eps = tape.scale(out[0], p.scaling.strain_scale);
            let target = tape.constant(s.strain);
            let diff = tape.sub(eps, target);
            let sq = tape.square(diff);
            acc = tape.add(acc, sq);
        }
        let grad = tape.backward(acc)?;
        Ok((tape.value(acc), grad))
    }

    fn reduce(
        parts: Vec<Result<(f64, Vec<f64>)>>,
        n_params: usize,
    ) -> Result<(f64, Vec<f64>)> {
        let mut ssr = 0.0;
        let mut grad = vec![0.0; n_params];
        for part in parts {
            let (s, g) = part?;
            ssr += s;
            for (gi, pi) in grad.iter_mut().zip(&g) {
                *gi += pi;
            }
        }
        Ok((ssr, grad))
    }
}

impl Objective for TemporalObjective<'_> {
    fn dim(&self) -> usize {
        self.n_params
    }

    fn component_names(&self) -> Vec<String> {
        if self.problem.uses_ode() {
            vec!["ode".to_string(), "data".to_string()]
        } else {
            vec!["data".to_string()]
        }
    }

    fn extra_names(&self) -> Vec<String> {
        match self.problem.omega {
            OmegaMode::Trainable { .. } => vec!["omega_sq".to_string()],
            OmegaMode::Fixed(_) => Vec::new(),
        }
    }

    fn extras(&self, x: &[f64]) -> Vec<f64> {
        match (self.problem.omega, self.extra_off) {
            (OmegaMode::Trainable { .. }, Some(off)) => vec![x[off].exp()],
            _ => Vec::new(),
        }
    }

    fn eval(&self, x: &[f64]) -> Result<ObjEval> {
        let p = self.problem;
        let mut components = Vec::new();
        let mut value = 0.0;
        let mut grad = vec![0.0; self.n_params];

        if p.uses_ode() {
            let n = p.collocation_t_s.len();
            let parts = map_chunks(p.mode, n, p.chunk, |range| self.ode_chunk(x, range));
            let (ssr, g) = Self::reduce(parts, self.n_params)?;
            let mse = ssr / n as f64;
            components.push(mse);
            value += p.w_ode * mse;
            let scale = p.w_ode / n as f64;
            for (gi, pi) in grad.iter_mut().zip(&g) {
                *gi += scale * pi;
            }
        }
        {
            let n = p.train_data.len();
            let parts = map_chunks(p.mode, n, p.chunk, |range| self.data_chunk(x, range));
            let (ssr, g) = Self::reduce(parts, self.n_params)?;
            let mse = ssr / n as f64;
            components.push(mse);
            value += p.w_data * mse;
            let scale = p.w_data / n as f64;
            for (gi, pi) in grad.iter_mut().zip(&g) {
                *gi += scale * pi;
            }
        }
        Ok(ObjEval {
            value,
            grad,
            components,
        })
    }
}

// ── Training and prediction ─────────────────────────────────────────────

pub struct TemporalTrainResult {
    pub store: ParamStore,
    pub history: TrainHistory,
    pub adam_stop: StopReason,
    pub lbfgs_stop: StopReason,
}

impl TemporalTrainResult {
    /// The identified ω² when the problem trained it, from the final
    /// parameters.
    pub fn identified_omega_sq(&self) -> Option<f64> {
        self.store
            .extra_offset(LOG_OMEGA_SQ)
            .map(|off| self.store.flat[off].exp())
    }
}

/// Run the two-phase schedule on a temporal problem starting from `store`.
pub fn train_temporal(
    problem: &TemporalProblem,
    store: &ParamStore,
    cfg: &TrainConfig,
) -> Result<TemporalTrainResult> {
    let objective = problem.objective(store)?;
    let outcome = train_schedule(&objective, &store.flat, cfg)?;
    let final_loss = outcome.history.final_loss().unwrap_or(f64::NAN);
    if !final_loss.is_finite() {
        return Err(Error::Divergence(format!(
            "temporal training ended with non-finite loss {final_loss}"
        )));
    }
    let mut trained = store.clone();
    trained.flat = outcome.x;
    Ok(TemporalTrainResult {
        store: trained,
        history: outcome.history,
        adam_stop: outcome.adam_stop,
        lbfgs_stop: outcome.lbfgs_stop,
    })
}

/// Outcome of a frequency-identification run.
pub struct OmegaIdentification {
    pub omega_sq_final: f64,
    /// ω² at every recorded optimizer iteration, across both phases.
    pub trajectory: Vec<f64>,
    pub result: TemporalTrainResult,
}

/// Train a problem with trainable ω² and report the identified value along
/// with its per-iteration trajectory.
pub fn identify_omega(
    problem: &TemporalProblem,
    cfg: &TrainConfig,
) -> Result<OmegaIdentification> {
    if !matches!(problem.omega, OmegaMode::Trainable { .. }) {
        return Err(Error::usage("identification needs a trainable ω²"));
    }
    let result = train_temporal(problem, &problem.init_store()?, cfg)?;
    let omega_sq_final = result
        .identified_omega_sq()
        .ok_or_else(|| Error::usage("trained store lost its ω² entry"))?;
    let trajectory = result
        .history
        .rows
        .iter()
        .map(|r| r.extras[0])
        .collect();
    Ok(OmegaIdentification {
        omega_sq_final,
        trajectory,
        result,
    })
}

// ── Staged windowed training ────────────────────────────────────────────

/// One window of a staged schedule: the model trains on `span` and then
/// becomes the authority for `owned` ⊆ `span`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingWindow {
    /// Time range [s] covered by this window's collocation points and
    /// anchor samples.
    pub span: (f64, f64),
    /// Sub-range this window's trained model answers for in the stitched
    /// prediction, and whose fresh part it labels for later windows.
    pub owned: (f64, f64),
    pub n_collocation: usize,
}

/// Windowed curriculum for extrapolating an oscillatory signal well beyond
/// its data window.
///
/// A single full-domain run of the two-phase schedule reliably lands in a
/// local minimum whose tail flattens outside the data window: there the
/// network earns a near-zero oscillator residual without ever forming the
/// oscillation, and no amount of further training escapes. Training instead
/// walks a chain of short overlapping windows. Each window extends at most
/// about 1.5 periods past the region already trusted, starts from a fresh
/// initialization (a partially converged network parks the old solution and
/// refuses to grow it), and is anchored by the measured samples plus dense
/// predictions — pseudo-labels — taken from the windows before it. Within
/// such a short window the anchored oscillation grows into the free part as
/// the loss drops, which is exactly the mechanism the full-domain fit
/// lacks. Predictions then dispatch to the window owning the queried time.
#[derive(Clone, Debug)]
pub struct StagedSchedule {
    /// The window chain, ordered by time; `owned` ranges must tile the
    /// domain.
    pub windows: Vec<TrainingWindow>,
    /// Sampling rate for pseudo-labels on newly owned ranges [1/s].
    pub label_rate_hz: f64,
    /// Residual conditioning applied while a window trains (the physical
    /// residual definition is unchanged): squared-residual terms are scaled
    /// by this factor squared. Values near 0.1 keep the oscillator term from
    /// swamping the anchor term early, which the window mechanism needs.
    pub ode_residual_scale: f64,
    /// First-phase optimizer settings, applied per window.
    pub adam: AdamConfig,
    /// Second-phase optimizer settings, applied per window.
    pub lbfgs: LbfgsConfig,
}

impl StagedSchedule {
    /// Collocation density [points/s] every generated window uses.
    pub const COLLOCATION_PER_S: f64 = 9.0;

    /// Build the window chain for measurements on
    /// [`data_start_s`, `data_end_s`], a prediction horizon `domain_end_s`,
    /// and oscillation period `period_s`: a head window covering the data
    /// plus one free period, then windows advancing 1.5 periods each while
    /// keeping 1.5 periods of overlap behind them.
    pub fn from_geometry(
        data_start_s: f64,
        data_end_s: f64,
        domain_end_s: f64,
        period_s: f64,
    ) -> Result<Self> {
        if !(period_s > 0.0 && period_s.is_finite()) {
            return Err(Error::validation("oscillation period must be positive"));
        }
        if !(data_start_s < data_end_s && data_end_s <= domain_end_s) {
            return Err(Error::validation(
                "staged schedule needs data_start < data_end <= domain_end",
            ));
        }
        let ncol = |a: f64, b: f64| {
            (((b - a) * Self::COLLOCATION_PER_S).round() as usize).max(2)
        };
        let mut windows = Vec::new();
        let head_end = (data_end_s + period_s).min(domain_end_s);
        windows.push(TrainingWindow {
            span: (data_start_s, head_end),
            owned: (data_start_s, head_end),
            n_collocation: ncol(data_start_s, head_end),
        });
        let step = 1.5 * period_s;
        let mut prev_end = head_end;
        while prev_end < domain_end_s - 1e-9 {
            let a = (prev_end - step).max(data_start_s);
            let b = (prev_end + step).min(domain_end_s);
            windows.push(TrainingWindow {
                span: (a, b),
                owned: (prev_end, b),
                n_collocation: ncol(a, b),
            });
            prev_end = b;
        }
        Ok(StagedSchedule {
            windows,
            label_rate_hz: 10.0,
            ode_residual_scale: 0.1,
            adam: AdamConfig::default(),
            lbfgs: LbfgsConfig {
                memory: 100,
                max_iters: 2000,
                ..LbfgsConfig::default()
            },
        })
    }
}

/// One trained window of a staged run.
pub struct TrainedWindow {
    pub window: TrainingWindow,
    pub net: MlpSpec,
    pub scaling: TemporalScaling,
    pub store: ParamStore,
}

/// Outcome of [`train_temporal_staged`]: the trained window chain plus each
/// window's training history, in chain order.
pub struct StagedTrainResult {
    pub windows: Vec<TrainedWindow>,
    pub histories: Vec<TrainHistory>,
}

impl StagedTrainResult {
    /// Predict physical strain [µε], dispatching each time to the window
    /// that owns it (times past the last window use the last window).
    pub fn predict_strain(&self, times_s: &[f64]) -> Vec<f64> {
        times_s
            .iter()
            .map(|&t| {
                let w = self
                    .windows
                    .iter()
                    .find(|w| t <= w.window.owned.1)
                    .or_else(|| self.windows.last())
                    .expect("staged result holds at least one window");
                predict_strain(&w.net, &w.scaling, &w.store, &[t])[0]
            })
            .collect()
    }

    /// Sum of final losses across windows (each window's own objective).
    pub fn final_loss(&self) -> f64 {
        self.histories
            .iter()
            .map(|h| h.final_loss().unwrap_or(f64::NAN))
            .sum()
    }
}

/// Run the windowed curriculum described by `schedule` on a fixed-frequency
/// physics problem.
///
/// Every window trains a fresh copy of `problem`'s network (window k seeds
/// it with `base_seed * n_windows + k`) on the window's span: collocation
/// points at the schedule's density, anchor data = measured samples plus
/// pseudo-labels from earlier windows, both restricted to the span. Time is
/// re-offset so each window's network sees inputs starting at zero, which
/// keeps every window in the input regime the initialization was designed
/// for.
pub fn train_temporal_staged(
    problem: &TemporalProblem,
    schedule: &StagedSchedule,
) -> Result<StagedTrainResult> {
    if !problem.uses_ode() {
        return Err(Error::usage(
            "staged training drives extrapolation with the oscillator term; use train_temporal for data-only models",
        ));
    }
    if matches!(problem.omega, OmegaMode::Trainable { .. }) {
        return Err(Error::usage(
            "staged training needs a fixed ω²; identify it first on the data window",
        ));
    }
    if schedule.windows.is_empty() {
        return Err(Error::validation("staged schedule has no windows"));
    }
    let data_end = problem
        .train_data
        .iter()
        .map(|s| s.t_s)
        .fold(f64::NEG_INFINITY, f64::max);
    let cfg = TrainConfig {
        adam: schedule.adam.clone(),
        lbfgs: schedule.lbfgs.clone(),
    };
    let mut labels: Vec<SensorSample> = Vec::new();
    let mut windows = Vec::with_capacity(schedule.windows.len());
    let mut histories = Vec::with_capacity(schedule.windows.len());
    for (k, w) in schedule.windows.iter().enumerate() {
        let (a, b) = w.span;
        let mut p = problem.clone();
        p.net.seed = problem
            .net
            .seed
            .wrapping_mul(schedule.windows.len() as u64)
            .wrapping_add(k as u64);
        p.ode_residual_scale = schedule.ode_residual_scale;
        p.scaling.t_offset = a;
        p.collocation_t_s = uniform_collocation(a, b, w.n_collocation);
        p.train_data = problem
            .train_data
            .iter()
            .chain(labels.iter())
            .copied()
            .filter(|s| s.t_s >= a && s.t_s <= b)
            .collect();
        let r = train_temporal(&p, &p.init_store()?, &cfg)?;
        // Label the newly formed part of the owned range for later windows.
        let lo = w.owned.0.max(data_end);
        if b > lo && schedule.label_rate_hz > 0.0 {
            let n = ((b - lo) * schedule.label_rate_hz).round() as usize;
            let lt: Vec<f64> = (1..=n)
                .map(|i| lo + (b - lo) * i as f64 / n as f64)
                .collect();
            let lv = predict_strain(&p.net, &p.scaling, &r.store, &lt);
            labels.extend(
                lt.iter()
                    .zip(&lv)
                    .map(|(&t_s, &strain)| SensorSample { t_s, strain }),
            );
        }
        windows.push(TrainedWindow {
            window: *w,
            net: p.net.clone(),
            scaling: p.scaling,
            store: r.store,
        });
        histories.push(r.history);
    }
    Ok(StagedTrainResult { windows, histories })
}

/// Predict physical strain [µε] at the given times using the plain-float
/// forward pass (no tape).
pub fn predict_strain(
    net: &MlpSpec,
    scaling: &TemporalScaling,
    store: &ParamStore,
    times_s: &[f64],
) -> Vec<f64> {
    times_s
        .iter()
        .map(|&t| scaling.strain_scale * eval_f64(net, store, &[scaling.t_hat(t)])[0])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{synth_temporal, TemporalDataSpec};
    use crate::optim::{AdamConfig, LbfgsConfig};
    use approx::assert_relative_eq;

    fn tiny_problem(omega: OmegaMode) -> TemporalProblem {
        let data = vec![
            SensorSample { t_s: 0.0, strain: -293.0 },
            SensorSample { t_s: 0.5, strain: 2.9 },
            SensorSample { t_s: 1.0, strain: 293.0 },
            SensorSample { t_s: 1.5, strain: -5.0 },
        ];
        let mut p = TemporalProblem::pinn(data, (0.0, 2.0), 7, omega, 3);
        p.net.hidden = vec![5, 4];
        p.chunk = 3;
        p
    }

    #[test]
    fn analytic_cos_annihilates_the_oscillator_residual() {
        let scaling = TemporalScaling::default();
        let (amp, omega_sq) = (-293.0, 9.87);
        let field = AnalyticCos {
            amp_hat: amp / scaling.strain_scale,
            omega_sq,
            t_ref: scaling.t_ref,
        };
        let mut tape = Tape::new();
        let omega_node = tape.constant(omega_sq);
        let mut worst: f64 = 0.0;
        for i in 0..1000 {
            let t = 16.0 * i as f64 / 999.0;
            let t_jet = Jet::seed(&mut tape, scaling.t_hat(t), 0, 1, JetOrder::Second).unwrap();
            let eps = field.eval_jet(&mut tape, &t_jet).unwrap();
            let r = ode_residual(&mut tape, &eps, omega_node, &scaling, 1.0).unwrap();
            worst = worst.max(tape.value(r).abs());
        }
        // Relative to the magnitude of each term, ω²·amp ≈ 2892 µε/s².
        assert!(
            worst / (omega_sq * amp.abs()) < 1e-12,
            "worst relative residual {}",
            worst / (omega_sq * amp.abs())
        );
    }

    #[test]
    fn network_residual_matches_finite_differences_of_prediction() {
        let p = tiny_problem(OmegaMode::Fixed(9.87));
        let store = p.init_store().unwrap();
        let objective = p.objective(&store).unwrap();
        // Tape residual at one collocation point…
        let t_s = p.collocation_t_s[2];
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &store.flat);
        let omega_node = objective.omega_node(&mut tape, &bound);
        let field = MlpTemporalField {
            spec: &p.net,
            layers: &store.layers,
            bound: &bound,
        };
        let t_jet = Jet::seed(&mut tape, p.scaling.t_hat(t_s), 0, 1, JetOrder::Second).unwrap();
        let eps = field.eval_jet(&mut tape, &t_jet).unwrap();
        let r = ode_residual(&mut tape, &eps, omega_node, &p.scaling, 1.0).unwrap();
        let r_tape = tape.value(r);
        // …against second differences of the plain-float prediction.
        let h = 1e-3;
        let f = |t: f64| predict_strain(&p.net, &p.scaling, &store, &[t])[0];
        let acc = (f(t_s + h) - 2.0 * f(t_s) + f(t_s - h)) / (h * h);
        let r_fd = acc + 9.87 * f(t_s);
        assert_relative_eq!(r_tape, r_fd, max_relative = 1e-4, epsilon = 1e-6);
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        for omega in [OmegaMode::Fixed(9.87), OmegaMode::Trainable { init: 2.0 }] {
            let p = tiny_problem(omega);
            let store = p.init_store().unwrap();
            let objective = p.objective(&store).unwrap();
            let eval = objective.eval(&store.flat).unwrap();
            let h = 1e-6;
            // Probe a spread of parameters including the trailing extra.
            let n = store.flat.len();
            for &i in &[0usize, 3, n / 2, n - 2, n - 1] {
                let mut xp = store.flat.clone();
                let mut xm = store.flat.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (objective.eval(&xp).unwrap().value - objective.eval(&xm).unwrap().value)
                    / (2.0 * h);
                assert_relative_eq!(eval.grad[i], fd, max_relative = 1e-5, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn loss_decomposes_exactly_into_weighted_components() {
        let mut p = tiny_problem(OmegaMode::Fixed(9.87));
        p.w_ode = 0.37;
        p.w_data = 2.25;
        let store = p.init_store().unwrap();
        let eval = p.objective(&store).unwrap().eval(&store.flat).unwrap();
        let recomposed = p.w_ode * eval.components[0] + p.w_data * eval.components[1];
        assert_eq!(eval.value.to_bits(), recomposed.to_bits());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_and_sequential_objectives_agree_bitwise() {
        let mut p = tiny_problem(OmegaMode::Trainable { init: 1.0 });
        let store = p.init_store().unwrap();
        p.mode = EvalMode::Sequential;
        let seq = p.objective(&store).unwrap().eval(&store.flat).unwrap();
        p.mode = EvalMode::Parallel;
        let par = p.objective(&store).unwrap().eval(&store.flat).unwrap();
        assert_eq!(seq.value.to_bits(), par.value.to_bits());
        for (a, b) in seq.grad.iter().zip(&par.grad) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn trainable_omega_is_reported_through_extras() {
        let p = tiny_problem(OmegaMode::Trainable { init: 2.5 });
        let store = p.init_store().unwrap();
        let objective = p.objective(&store).unwrap();
        assert_eq!(objective.extra_names(), vec!["omega_sq".to_string()]);
        let extras = objective.extras(&store.flat);
        assert_relative_eq!(extras[0], 2.5, max_relative = 1e-15);
    }

    #[test]
    fn short_training_run_reduces_the_loss() {
        let data = synth_temporal(&TemporalDataSpec {
            noise_sigma: 0.0,
            duration_s: 4.0,
            ..TemporalDataSpec::default()
        })
        .unwrap();
        let mut p = TemporalProblem::pinn(
            data.samples,
            (0.0, 4.0),
            20,
            OmegaMode::Fixed(9.87),
            11,
        );
        p.net.hidden = vec![8, 8];
        let store = p.init_store().unwrap();
        let cfg = TrainConfig {
            adam: AdamConfig {
                epochs: 60,
                ..AdamConfig::default()
            },
            lbfgs: LbfgsConfig {
                max_iters: 20,
                ..LbfgsConfig::default()
            },
        };
        let result = train_temporal(&p, &store, &cfg).unwrap();
        let first = result.history.rows.first().unwrap().loss;
        let last = result.history.final_loss().unwrap();
        assert!(last < first, "loss did not decrease: {first} -> {last}");
        // Prediction runs off the plain-float path.
        let preds = predict_strain(&p.net, &p.scaling, &result.store, &[0.0, 1.0]);
        assert!(preds.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn data_only_baseline_reports_a_single_component() {
        let data = vec![
            SensorSample { t_s: 0.0, strain: -293.0 },
            SensorSample { t_s: 0.3, strain: 100.0 },
        ];
        let mut p = TemporalProblem::data_only_baseline(data, 5);
        p.net.hidden = vec![4];
        let store = p.init_store().unwrap();
        let objective = p.objective(&store).unwrap();
        assert_eq!(objective.component_names(), vec!["data".to_string()]);
        let eval = objective.eval(&store.flat).unwrap();
        assert_eq!(eval.components.len(), 1);
        assert_eq!(eval.value.to_bits(), (1.0 * eval.components[0]).to_bits());
    }

    #[test]
    fn staged_schedule_tiles_the_domain_with_overlapping_windows() {
        let period = 2.0 * std::f64::consts::PI / 9.87_f64.sqrt();
        let s = StagedSchedule::from_geometry(0.0, 6.0, 16.0, period).unwrap();
        assert_eq!(s.windows.len(), 4);
        // Head window: data plus one free period, owned in full.
        let head = &s.windows[0];
        assert_relative_eq!(head.span.1, 6.0 + period, max_relative = 1e-12);
        assert_eq!(head.owned, head.span);
        assert_eq!(head.n_collocation, 72);
        // Later windows: owned ranges tile the rest without gaps, each span
        // reaches 1.5 periods back into trusted territory.
        let mut prev_end = head.owned.1;
        for w in &s.windows[1..] {
            assert_relative_eq!(w.owned.0, prev_end, max_relative = 1e-12);
            assert!(w.span.0 < w.owned.0);
            assert_relative_eq!(w.owned.0 - w.span.0, 1.5 * period, max_relative = 1e-9);
            assert!(w.owned.1 <= 16.0 + 1e-12);
            prev_end = w.owned.1;
        }
        assert_relative_eq!(prev_end, 16.0, max_relative = 1e-12);
        // Degenerate geometry is rejected.
        assert!(StagedSchedule::from_geometry(0.0, 6.0, 16.0, 0.0).is_err());
        assert!(StagedSchedule::from_geometry(6.0, 6.0, 16.0, period).is_err());
        // No extrapolation requested: a single head window.
        let tight = StagedSchedule::from_geometry(0.0, 6.0, 6.5, period).unwrap();
        assert_eq!(tight.windows.len(), 1);
        assert_relative_eq!(tight.windows[0].span.1, 6.5, max_relative = 1e-12);
    }

    #[test]
    fn staged_training_dispatches_predictions_to_owning_windows() {
        let data = synth_temporal(&TemporalDataSpec {
            noise_sigma: 0.0,
            duration_s: 2.0,
            ..TemporalDataSpec::default()
        })
        .unwrap();
        let mut p = TemporalProblem::pinn(
            data.samples,
            (0.0, 4.0),
            20,
            OmegaMode::Fixed(9.87),
            3,
        );
        p.net.hidden = vec![6, 6];
        let period = 2.0 * std::f64::consts::PI / 9.87_f64.sqrt();
        let mut schedule = StagedSchedule::from_geometry(0.0, 2.0, 4.0, period).unwrap();
        schedule.adam.epochs = 40;
        schedule.lbfgs.max_iters = 10;
        let r = train_temporal_staged(&p, &schedule).unwrap();
        assert_eq!(r.windows.len(), schedule.windows.len());
        assert_eq!(r.histories.len(), schedule.windows.len());
        assert!(r.final_loss().is_finite());
        // Each window trained a distinct fresh network.
        let seeds: Vec<u64> = r.windows.iter().map(|w| w.net.seed).collect();
        let mut unique = seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), seeds.len());
        // Dispatch: a time in window k's owned range is answered by window
        // k's network alone.
        for (k, w) in r.windows.iter().enumerate() {
            let t = 0.5 * (w.window.owned.0.max(0.0) + w.window.owned.1);
            let direct = predict_strain(&w.net, &w.scaling, &w.store, &[t])[0];
            let stitched = r.predict_strain(&[t])[0];
            assert_eq!(
                direct.to_bits(),
                stitched.to_bits(),
                "window {k} does not own its midpoint"
            );
        }
        // Times beyond the last window fall through to the last window.
        let beyond = r.predict_strain(&[5.0])[0];
        let last = r.windows.last().unwrap();
        let direct = predict_strain(&last.net, &last.scaling, &last.store, &[5.0])[0];
        assert_eq!(beyond.to_bits(), direct.to_bits());
    }

    #[test]
    fn identification_tracks_omega_across_all_iterations() {
        let data = synth_temporal(&TemporalDataSpec {
            noise_sigma: 0.0,
            duration_s: 3.0,
            ..TemporalDataSpec::default()
        })
        .unwrap();
        let mut p = TemporalProblem::identification(data.samples, 2.0, 7).unwrap();
        p.net.hidden = vec![8, 8];
        assert_eq!(p.omega, OmegaMode::Trainable { init: 2.0 });
        assert_eq!(p.ode_residual_scale, 0.1);
        // Collocation covers exactly the data window.
        let lo = p.collocation_t_s.first().copied().unwrap();
        let hi = p.collocation_t_s.last().copied().unwrap();
        assert_relative_eq!(lo, 0.0, epsilon = 1e-12);
        assert_relative_eq!(hi, 3.0, max_relative = 1e-12);
        let cfg = TrainConfig {
            adam: AdamConfig {
                epochs: 30,
                ..AdamConfig::default()
            },
            lbfgs: LbfgsConfig {
                max_iters: 10,
                ..LbfgsConfig::default()
            },
        };
        let id = identify_omega(&p, &cfg).unwrap();
        assert_eq!(id.trajectory.len(), id.result.history.rows.len());
        assert_relative_eq!(id.trajectory[0], 2.0, max_relative = 1e-12);
        assert_relative_eq!(
            *id.trajectory.last().unwrap(),
            id.omega_sq_final,
            max_relative = 1e-12
        );
        // Fixed-ω problems are rejected.
        let fixed = TemporalProblem::pinn(
            vec![
                SensorSample { t_s: 0.0, strain: 1.0 },
                SensorSample { t_s: 1.0, strain: 0.5 },
            ],
            (0.0, 1.0),
            5,
            OmegaMode::Fixed(9.87),
            0,
        );
        assert!(identify_omega(&fixed, &cfg).is_err());
    }

    #[test]
    fn staged_training_rejects_unsupported_problems() {
        let data = vec![
            SensorSample { t_s: 0.0, strain: -293.0 },
            SensorSample { t_s: 0.5, strain: 10.0 },
        ];
        let schedule = StagedSchedule::from_geometry(0.0, 0.5, 1.0, 0.5).unwrap();
        let trainable = TemporalProblem::pinn(
            data.clone(),
            (0.0, 1.0),
            10,
            OmegaMode::Trainable { init: 1.0 },
            0,
        );
        assert!(train_temporal_staged(&trainable, &schedule).is_err());
        let baseline = TemporalProblem::data_only_baseline(data, 0);
        assert!(train_temporal_staged(&baseline, &schedule).is_err());
    }
}
