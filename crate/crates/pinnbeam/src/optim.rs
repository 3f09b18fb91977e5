//! First-order (Adam) and quasi-Newton (L-BFGS with strong Wolfe line
//! search) optimizers over a flat parameter vector, plus the two-phase
//! schedule used throughout: Adam to find the basin, L-BFGS to drill into
//! it.
//!
//! Everything here is deliberately framework-free: an objective is anything
//! that maps a parameter vector to (value, gradient, per-component losses),
//! and optimizers never look inside it. Per-iteration history rows capture
//! the total loss, the unweighted loss components, and any named extra
//! parameters (e.g. an identified squared frequency), so training curves
//! and identification trajectories fall out of the same mechanism.

use crate::error::{Error, Result};
use std::collections::VecDeque;
use std::time::Instant;

/// One objective evaluation: total value, gradient, and the unweighted
/// values of each named loss component (same order as
/// [`Objective::component_names`]).
pub struct ObjEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub components: Vec<f64>,
}

pub trait Objective {
    fn dim(&self) -> usize;
    /// Names of the loss components reported in [`ObjEval::components`].
    fn component_names(&self) -> Vec<String>;
    /// Names of derived scalars worth tracking per iteration (may be empty).
    fn extra_names(&self) -> Vec<String> {
        Vec::new()
    }
    /// Values of the extras at `x` (same order as [`Objective::extra_names`]).
    fn extras(&self, _x: &[f64]) -> Vec<f64> {
        Vec::new()
    }
    fn eval(&self, x: &[f64]) -> Result<ObjEval>;
}

// ── Training history ────────────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct HistoryRow {
    pub phase: &'static str,
    pub iter: u64,
    pub loss: f64,
    pub components: Vec<f64>,
    pub extras: Vec<f64>,
    pub wall_s: f64,
}

/// Per-iteration training record. Column names are fixed at construction so
/// every row has the same shape.
#[derive(Clone, Debug)]
pub struct TrainHistory {
    pub component_names: Vec<String>,
    pub extra_names: Vec<String>,
    pub rows: Vec<HistoryRow>,
    started: Instant,
}

impl TrainHistory {
    pub fn new(component_names: Vec<String>, extra_names: Vec<String>) -> Self {
        TrainHistory {
            component_names,
            extra_names,
            rows: Vec::new(),
            started: Instant::now(),
        }
    }

    pub(crate) fn push(
        &mut self,
        phase: &'static str,
        iter: u64,
        loss: f64,
        components: Vec<f64>,
        extras: Vec<f64>,
    ) {
        self.rows.push(HistoryRow {
            phase,
            iter,
            loss,
            components,
            extras,
            wall_s: self.started.elapsed().as_secs_f64(),
        });
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.loss)
    }

    pub fn last_loss_of_phase(&self, phase: &str) -> Option<f64> {
        self.rows.iter().rev().find(|r| r.phase == phase).map(|r| r.loss)
    }

    /// CSV export. The wall-clock column is the only non-deterministic
    /// output a run produces; pass `include_wall = false` anywhere byte
    /// stability matters more than timing.
    pub fn to_csv(&self, include_wall: bool) -> String {
        let mut out = String::from("phase,iter,loss_total");
        for c in &self.component_names {
            out.push_str(&format!(",loss_{c}"));
        }
        for e in &self.extra_names {
            out.push_str(&format!(",{e}"));
        }
        if include_wall {
            out.push_str(",wall_time_s");
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{},{}", r.phase, r.iter, r.loss));
            for c in &r.components {
                out.push_str(&format!(",{c}"));
            }
            for e in &r.extras {
                out.push_str(&format!(",{e}"));
            }
            if include_wall {
                out.push_str(&format!(",{}", r.wall_s));
            }
            out.push('\n');
        }
        out
    }
}

// ── Adam ────────────────────────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 5000,
        }
    }
}

/// Why a phase stopped.
#[derive(Clone, Debug, PartialEq)]
pub enum StopReason {
    MaxIters,
    GradTol,
    FTol,
    LineSearchFailed,
    /// The objective went non-finite; the returned state is the last finite
    /// iterate.
    NonFinite { iter: u64 },
}

pub struct PhaseResult {
    pub x: Vec<f64>,
    pub loss: f64,
    pub stop: StopReason,
}

/// Full-batch Adam with bias correction. The update is elementwise, so it
/// commutes with any permutation of the parameter vector. On a non-finite
/// objective it stops and returns the last finite iterate.
/// Per-coordinate Adam moment state. Kept separate from [`adam_run`] so a
/// caller can drive individual steps while swapping the objective between
/// them (the moments persist across the swap).
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    /// Step counter: how many updates have been applied.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one bias-corrected Adam update of `x` along `grad`.
    pub fn step(&mut self, cfg: &AdamConfig, x: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1k = 1.0 - cfg.beta1.powi(self.t as i32);
        let b2k = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..x.len() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mhat = self.m[i] / b1k;
            let vhat = self.v[i] / b2k;
            x[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }

    /// Reverses the most recent `step` on `x` (to roll back an update that
    /// produced a non-finite objective).
    pub fn undo(&self, cfg: &AdamConfig, x: &mut [f64]) {
        let b1k = 1.0 - cfg.beta1.powi(self.t as i32);
        let b2k = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..x.len() {
            x[i] += cfg.lr * (self.m[i] / b1k) / ((self.v[i] / b2k).sqrt() + cfg.eps);
        }
    }
}

pub fn adam_run(
    obj: &dyn Objective,
    x0: &[f64],
    cfg: &AdamConfig,
    history: &mut TrainHistory,
) -> Result<PhaseResult> {
    let n = obj.dim();
    if x0.len() != n {
        return Err(Error::usage(format!(
            "adam: x0 has {} entries, objective expects {n}",
            x0.len()
        )));
    }
    let mut x = x0.to_vec();
    let mut state = AdamState::new(n);
    let mut last = obj.eval(&x)?;
    if !last.value.is_finite() {
        return Err(Error::Divergence(
            "objective is non-finite at the initial point".to_string(),
        ));
    }
    history.push("adam", 0, last.value, last.components.clone(), obj.extras(&x));
    for k in 1..=cfg.epochs {
        state.step(cfg, &mut x, &last.grad);
        let eval = obj.eval(&x)?;
        if !eval.value.is_finite() || eval.grad.iter().any(|g| !g.is_finite()) {
            // Roll back to the last finite iterate and stop this phase.
            state.undo(cfg, &mut x);
            return Ok(PhaseResult {
                x,
                loss: last.value,
                stop: StopReason::NonFinite { iter: k as u64 },
            });
        }
        history.push("adam", k as u64, eval.value, eval.components.clone(), obj.extras(&x));
        last = eval;
    }
    Ok(PhaseResult {
        x,
        loss: last.value,
        stop: StopReason::MaxIters,
    })
}

// ── L-BFGS with strong Wolfe line search ────────────────────────────────

#[derive(Clone, Debug)]
pub struct LbfgsConfig {
    /// Number of (s, y) correction pairs kept for the two-loop recursion.
    pub memory: usize,
    /// Armijo (sufficient decrease) constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Stop when the gradient max-norm falls below this.
    pub grad_tol: f64,
    /// Stop when the relative loss decrease between accepted iterates falls
    /// below this.
    pub ftol_rel: f64,
    pub max_iters: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 20,
            c1: 1e-4,
            c2: 0.9,
            grad_tol: 1e-9,
            ftol_rel: 1e-12,
            max_iters: 5000,
        }
    }
}

/// Record of one accepted line search, kept so tests can certify the strong
/// Wolfe conditions exactly as evaluated.
#[derive(Clone, Copy, Debug)]
pub struct WolfeCert {
    pub f0: f64,
    pub gtp0: f64,
    pub alpha: f64,
    pub f1: f64,
    pub gtp1: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Cubic minimizer of a function with values/derivatives at two points,
/// clamped to the bracketing interval (Nocedal & Wright eq. 3.59 shape).
fn cubic_interpolate(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64) -> f64 {
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2sq = d1 * d1 - g1 * g2;
    let (lo, hi) = if x1 < x2 { (x1, x2) } else { (x2, x1) };
    if d2sq >= 0.0 {
        let d2 = d2sq.sqrt() * if x1 <= x2 { 1.0 } else { -1.0 };
        let x = x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2));
        if x.is_finite() {
            return x.clamp(lo, hi);
        }
    }
    0.5 * (lo + hi)
}

struct LinePoint {
    alpha: f64,
    f: f64,
    gtp: f64,
    eval: ObjEval,
}

/// Strong Wolfe line search (bracket + zoom). Returns the accepted step and
/// its evaluation, or `None` if no acceptable step was found within the
/// evaluation budget.
fn strong_wolfe(
    obj: &dyn Objective,
    x: &[f64],
    p: &[f64],
    f0: f64,
    gtp0: f64,
    alpha0: f64,
    cfg: &LbfgsConfig,
) -> Result<Option<LinePoint>> {
    const MAX_EVALS: usize = 30;
    let probe = |alpha: f64| -> Result<LinePoint> {
        let xt: Vec<f64> = x.iter().zip(p).map(|(xi, pi)| xi + alpha * pi).collect();
        let eval = obj.eval(&xt)?;
        let gtp = dot(&eval.grad, p);
        Ok(LinePoint {
            alpha,
            f: eval.value,
            gtp,
            eval,
        })
    };
    let armijo = |alpha: f64, f: f64| f <= f0 + cfg.c1 * alpha * gtp0;
    let curvature = |gtp: f64| gtp.abs() <= -cfg.c2 * gtp0;

    let mut evals = 0usize;
    let mut prev_alpha = 0.0;
    let mut prev_f = f0;
    let mut prev_gtp = gtp0;
    let mut alpha = alpha0;
    // Bracketing stage: extend until the minimum is bracketed or Wolfe holds.
    let (mut lo, mut hi) = loop {
        if evals >= MAX_EVALS {
            return Ok(None);
        }
        let pt = probe(alpha)?;
        evals += 1;
        if !pt.f.is_finite() {
            // Treat as "too far": bracket between the last good point and here.
            break (
                (prev_alpha, prev_f, prev_gtp),
                (pt.alpha, f64::INFINITY, 0.0),
            );
        }
        if !armijo(pt.alpha, pt.f) || (evals > 1 && pt.f >= prev_f) {
            break ((prev_alpha, prev_f, prev_gtp), (pt.alpha, pt.f, pt.gtp));
        }
        if curvature(pt.gtp) {
            return Ok(Some(pt));
        }
        if pt.gtp >= 0.0 {
            break ((pt.alpha, pt.f, pt.gtp), (prev_alpha, prev_f, prev_gtp));
        }
        prev_alpha = pt.alpha;
        prev_f = pt.f;
        prev_gtp = pt.gtp;
        alpha = (2.0 * pt.alpha).min(1e10);
    };
    // Zoom stage: shrink the bracket with cubic interpolation.
    while evals < MAX_EVALS {
        let (alo, flo, glo) = lo;
        let (ahi, fhi, ghi) = hi;
        if (ahi - alo).abs() * inf_norm(p) < 1e-16 {
            return Ok(None);
        }
        let mut at = if fhi.is_finite() {
            cubic_interpolate(alo, flo, glo, ahi, fhi, ghi)
        } else {
            0.5 * (alo + ahi)
        };
        // Keep a minimum fraction of progress so the bracket provably shrinks.
        let span = (ahi - alo).abs();
        let lo_end = alo.min(ahi) + 0.1 * span;
        let hi_end = alo.max(ahi) - 0.1 * span;
        at = at.clamp(lo_end.min(hi_end), lo_end.max(hi_end));
        let pt = probe(at)?;
        evals += 1;
        if !pt.f.is_finite() || !armijo(pt.alpha, pt.f) || pt.f >= flo {
            hi = (pt.alpha, pt.f, pt.gtp);
        } else {
            if curvature(pt.gtp) {
                return Ok(Some(pt));
            }
            if pt.gtp * (ahi - alo) >= 0.0 {
                hi = lo;
            }
            lo = (pt.alpha, pt.f, pt.gtp);
        }
    }
    Ok(None)
}

pub struct LbfgsOutcome {
    pub result: PhaseResult,
    /// One certificate per accepted line search, for exact condition checks.
    pub certs: Vec<WolfeCert>,
}

/// Plain L-BFGS (no bound constraints): two-loop recursion over a rolling
/// window of correction pairs, strong Wolfe line search, initial Hessian
/// scaling γ = sᵀy/yᵀy.
pub fn lbfgs_run(
    obj: &dyn Objective,
    x0: &[f64],
    cfg: &LbfgsConfig,
    history: &mut TrainHistory,
) -> Result<LbfgsOutcome> {
    let n = obj.dim();
    if x0.len() != n {
        return Err(Error::usage(format!(
            "lbfgs: x0 has {} entries, objective expects {n}",
            x0.len()
        )));
    }
    let mut x = x0.to_vec();
    let mut cur = obj.eval(&x)?;
    if !cur.value.is_finite() {
        return Err(Error::Divergence(
            "objective is non-finite at the L-BFGS start point".to_string(),
        ));
    }
    history.push("lbfgs", 0, cur.value, cur.components.clone(), obj.extras(&x));
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut certs = Vec::new();
    let mut stop = StopReason::MaxIters;
    for k in 1..=cfg.max_iters {
        if inf_norm(&cur.grad) <= cfg.grad_tol {
            stop = StopReason::GradTol;
            break;
        }
        // Two-loop recursion: p = −H·g.
        let mut q = cur.grad.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            for qi in q.iter_mut() {
                *qi *= gamma;
            }
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..n {
                q[i] += (a - b) * s[i];
            }
        }
        let mut p: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut gtp = dot(&cur.grad, &p);
        if gtp >= 0.0 {
            // Degenerate curvature model; restart from steepest descent.
            mem.clear();
            p = cur.grad.iter().map(|v| -v).collect();
            gtp = dot(&cur.grad, &p);
        }
        let alpha0 = if mem.is_empty() {
            (1.0 / cur.grad.iter().map(|g| g.abs()).sum::<f64>().max(1e-16)).min(1.0)
        } else {
            1.0
        };
        let Some(accepted) = strong_wolfe(obj, &x, &p, cur.value, gtp, alpha0, cfg)? else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        certs.push(WolfeCert {
            f0: cur.value,
            gtp0: gtp,
            alpha: accepted.alpha,
            f1: accepted.f,
            gtp1: accepted.gtp,
        });
        let s: Vec<f64> = p.iter().map(|pi| accepted.alpha * pi).collect();
        let y: Vec<f64> = accepted
            .eval
            .grad
            .iter()
            .zip(&cur.grad)
            .map(|(gn, go)| gn - go)
            .collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * inf_norm(&s) * inf_norm(&y) {
            if mem.len() == cfg.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        let f_prev = cur.value;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += accepted.alpha * pi;
        }
        cur = accepted.eval;
        history.push("lbfgs", k as u64, cur.value, cur.components.clone(), obj.extras(&x));
        if (f_prev - cur.value).abs() <= cfg.ftol_rel * f_prev.abs().max(cur.value.abs()).max(1.0) {
            stop = StopReason::FTol;
            break;
        }
    }
    Ok(LbfgsOutcome {
        result: PhaseResult {
            x,
            loss: cur.value,
            stop,
        },
        certs,
    })
}

// ── Two-phase schedule ──────────────────────────────────────────────────

#[derive(Clone, Debug, Default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub lbfgs: LbfgsConfig,
}

pub struct TrainOutcome {
    pub x: Vec<f64>,
    pub history: TrainHistory,
    pub adam_stop: StopReason,
    pub lbfgs_stop: StopReason,
}

/// Adam warmup followed by L-BFGS refinement on the same objective. The
/// L-BFGS phase only ever accepts Armijo steps, so the final loss can never
/// exceed the Adam-phase result.
pub fn train_schedule(obj: &dyn Objective, x0: &[f64], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut history = TrainHistory::new(obj.component_names(), obj.extra_names());
    let adam = adam_run(obj, x0, &cfg.adam, &mut history)?;
    let lbfgs = lbfgs_run(obj, &adam.x, &cfg.lbfgs, &mut history)?;
    Ok(TrainOutcome {
        x: lbfgs.result.x,
        history,
        adam_stop: adam.stop,
        lbfgs_stop: lbfgs.result.stop,
    })
}
