//! The acceptance gate: ten end-to-end checks with hard quality and
//! wall-clock budgets. Each test prints one PASS/FAIL line (run with
//! `--nocapture` to see them on success) and fails the suite if its
//! check or budget is violated. A process-wide mutex serializes the
//! tests so the budgets hold regardless of `--test-threads`.

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pinnbeam::autodiff::{Jet, JetOrder, Tape};
use pinnbeam::datagen::{
    synth_fiber_scans, synth_temporal, CrackModel, FiberDataSpec, TemporalDataSpec,
};
use pinnbeam::network::{
    bind, eval_f64, forward_jets, forward_values, Activation, MlpSpec, OutputTransform, ParamStore,
};
use pinnbeam::optim::{AdamConfig, LbfgsConfig, Objective, TrainConfig};
use pinnbeam::oracle::{
    euler_bernoulli_strain, harmonic_strain, BeamGeometry, FourPointLoad, Material,
    MICROSTRAIN_PER_STRAIN,
};
use pinnbeam::spatial::{
    hard_constraints, manufactured_loss, mean_sq_second_diff, predict_field, train_spatial,
    Scenario, SpatialProblem,
};
use pinnbeam::temporal::{
    identify_omega, ode_residual, predict_strain, train_temporal, train_temporal_staged,
    AnalyticCos, OmegaMode, StagedSchedule, TemporalField, TemporalProblem, TemporalScaling,
};
use pinnbeam::{median, rel_l2};

const OMEGA_SQ: f64 = 9.87;
const AMP_MICROSTRAIN: f64 = -293.0;
const DATA_END_S: f64 = 6.0;
const DOMAIN_END_S: f64 = 16.0;

/// Iteration budgets for the spatial trainings (Adam epoch count is the
/// pinned 2000 everywhere; the L-BFGS budget is the tuned knob).
const SPATIAL_INTERIOR_POINTS: usize = 500;
const MANUFACTURED_LBFGS_ITERS: usize = 1100;
const SCENARIO_LBFGS_ITERS: usize = 1000;

fn gate() -> MutexGuard<'static, ()> {
    static GATE: Mutex<()> = Mutex::new(());
    match GATE.lock() {
        Ok(g) => g,
        Err(poisoned) => poisoned.into_inner(),
    }
}

/// Trained spatial models stashed by earlier checks so the constraint
/// check can include genuinely trained parameters.
fn trained_stash() -> &'static Mutex<Vec<(MlpSpec, OutputTransform, ParamStore)>> {
    static STASH: OnceLock<Mutex<Vec<(MlpSpec, OutputTransform, ParamStore)>>> = OnceLock::new();
    STASH.get_or_init(|| Mutex::new(Vec::new()))
}

fn stash_model(p: &SpatialProblem, store: &ParamStore) {
    trained_stash()
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .push((p.net.clone(), p.transform.clone(), store.clone()));
}

struct Check {
    idx: usize,
    name: &'static str,
    budget_s: Option<f64>,
    t0: Instant,
}

impl Check {
    fn start(idx: usize, name: &'static str, budget_s: Option<f64>) -> Check {
        Check {
            idx,
            name,
            budget_s,
            t0: Instant::now(),
        }
    }

    /// Print the one-line verdict, then assert. The print happens first
    /// so the line exists even when the assertion fails.
    fn finish(self, ok: bool, details: String) {
        let wall = self.t0.elapsed().as_secs_f64();
        let in_budget = self.budget_s.map_or(true, |b| wall < b);
        let status = if ok && in_budget { "PASS" } else { "FAIL" };
        let budget = self
            .budget_s
            .map_or(String::new(), |b| format!(" / budget {b:.0}s"));
        println!(
            "ACCEPTANCE {:02} {}: {status} — {details} [{wall:.1}s{budget}]",
            self.idx, self.name
        );
        assert!(ok, "{:02} {}: {details}", self.idx, self.name);
        assert!(
            in_budget,
            "{:02} {}: exceeded budget ({wall:.1}s{budget})",
            self.idx, self.name
        );
    }
}

// ════════════════════════════════════════════════════════════════════════
// 01 — reverse-mode parameter gradients and forward-jet input derivatives
//      agree with finite differences on 100 random small networks.
// ════════════════════════════════════════════════════════════════════════

/// Scalar functional of network outputs and their jet derivatives,
/// recomputed from scratch on a fresh tape: L = Σ_points Σ_outputs
/// (w·val + q·val² + Σ_i a_i·d1_i + Σ_i b_i·d2_i).
struct JetFunctional {
    points: Vec<Vec<f64>>,
    w: Vec<f64>,
    q: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl JetFunctional {
    fn random(rng: &mut ChaCha8Rng, spec: &MlpSpec) -> JetFunctional {
        let n_out = spec.output_dim;
        let dim = spec.input_dim;
        let points = (0..3)
            .map(|_| (0..dim).map(|_| rng.gen_range(-0.9..0.9)).collect())
            .collect();
        let mut coeffs = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        JetFunctional {
            points,
            w: coeffs(n_out),
            q: coeffs(n_out),
            a: coeffs(n_out * dim),
            b: coeffs(n_out * dim),
        }
    }

    /// (value, parameter gradient) via the tape.
    fn eval_with_grad(&self, spec: &MlpSpec, store: &ParamStore, x: &[f64]) -> (f64, Vec<f64>) {
        let mut tape = Tape::with_capacity(1 << 14, 1 << 14);
        let bound = bind(&mut tape, x);
        let dim = spec.input_dim;
        let mut total = tape.zero();
        for pt in &self.points {
            let jets: Vec<Jet> = pt
                .iter()
                .enumerate()
                .map(|(i, &c)| Jet::seed(&mut tape, c, i, dim, JetOrder::Second).unwrap())
                .collect();
            let outs = forward_jets(&mut tape, spec, &store.layers, &bound, &jets).unwrap();
            for (j, jet) in outs.iter().enumerate() {
                let wv = tape.scale(jet.val, self.w[j]);
                let sq = tape.square(jet.val);
                let qv = tape.scale(sq, self.q[j]);
                total = tape.add(total, wv);
                total = tape.add(total, qv);
                for i in 0..dim {
                    let av = tape.scale(jet.d1[i], self.a[j * dim + i]);
                    total = tape.add(total, av);
                    let bv = tape.scale(jet.d2.as_ref().unwrap()[i], self.b[j * dim + i]);
                    total = tape.add(total, bv);
                }
            }
        }
        let grad = tape.backward(total).unwrap();
        (tape.value(total), grad)
    }

    fn value(&self, spec: &MlpSpec, store: &ParamStore, x: &[f64]) -> f64 {
        self.eval_with_grad(spec, store, x).0
    }
}

fn random_spec(rng: &mut ChaCha8Rng, seed: u64) -> MlpSpec {
    let n_hidden = rng.gen_range(1..=2usize);
    MlpSpec {
        input_dim: rng.gen_range(1..=2usize),
        hidden: (0..n_hidden).map(|_| rng.gen_range(3..=8usize)).collect(),
        output_dim: if rng.gen_bool(0.5) { 1 } else { 5 },
        activation: if rng.gen_bool(0.5) {
            Activation::Tanh
        } else {
            Activation::Sin
        },
        seed,
    }
}

#[test]
fn acceptance_01_autodiff_matches_finite_differences() {
    let _g = gate();
    let check = Check::start(
        1,
        "autodiff gradients and jets vs finite differences",
        Some(30.0),
    );
    let mut worst_param = 0.0f64;
    let mut worst_jet = 0.0f64;
    for k in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + k);
        let spec = random_spec(&mut rng, k);
        let store = ParamStore::init_glorot(&spec).unwrap();
        let functional = JetFunctional::random(&mut rng, &spec);
        let x = store.flat.clone();

        // Parameter gradient vs central differences of the functional.
        let (_, grad) = functional.eval_with_grad(&spec, &store, &x);
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-9);
        let h = 1e-5;
        for _ in 0..12 {
            let k = rng.gen_range(0..x.len());
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let fd = (functional.value(&spec, &store, &xp)
                - functional.value(&spec, &store, &xm))
                / (2.0 * h);
            worst_param = worst_param.max((grad[k] - fd).abs() / gmax);
        }

        // Jet derivatives vs finite differences of the tape-free forward
        // pass (an independent implementation).
        let dim = spec.input_dim;
        for pt in &functional.points {
            let mut tape = Tape::with_capacity(1 << 12, 1 << 12);
            let bound = bind(&mut tape, &x);
            let jets: Vec<Jet> = pt
                .iter()
                .enumerate()
                .map(|(i, &c)| Jet::seed(&mut tape, c, i, dim, JetOrder::Second).unwrap())
                .collect();
            let outs = forward_jets(&mut tape, &spec, &store.layers, &bound, &jets).unwrap();
            let f0 = eval_f64(&spec, &store, pt);
            let dmax = outs
                .iter()
                .flat_map(|o| {
                    o.d1.iter()
                        .chain(o.d2.as_ref().unwrap())
                        .map(|&v| tape.value(v).abs())
                })
                .fold(1e-9f64, f64::max);
            for i in 0..dim {
                let h1 = 1e-5;
                let mut pp = pt.clone();
                pp[i] += h1;
                let mut pm = pt.clone();
                pm[i] -= h1;
                let fp = eval_f64(&spec, &store, &pp);
                let fm = eval_f64(&spec, &store, &pm);
                let h2 = 1e-4;
                let mut qp = pt.clone();
                qp[i] += h2;
                let mut qm = pt.clone();
                qm[i] -= h2;
                let gp = eval_f64(&spec, &store, &qp);
                let gm = eval_f64(&spec, &store, &qm);
                for (j, out) in outs.iter().enumerate() {
                    let ad1 = tape.value(out.d1[i]);
                    let fd1 = (fp[j] - fm[j]) / (2.0 * h1);
                    worst_jet = worst_jet.max((ad1 - fd1).abs() / dmax);
                    let ad2 = tape.value(out.d2.as_ref().unwrap()[i]);
                    let fd2 = (gp[j] - 2.0 * f0[j] + gm[j]) / (h2 * h2);
                    worst_jet = worst_jet.max((ad2 - fd2).abs() / dmax);
                }
            }
        }
    }
    let ok = worst_param < 1e-5 && worst_jet < 1e-4;
    check.finish(
        ok,
        format!(
            "100 nets: worst parameter-gradient deviation {worst_param:.2e} (tol 1e-5), worst jet deviation {worst_jet:.2e} (tol 1e-4)"
        ),
    );
}

// ════════════════════════════════════════════════════════════════════════
// 02 — the oscillator residual annihilates the exact solution evaluated
//      through analytic jets at 1000 points.
// ════════════════════════════════════════════════════════════════════════

#[test]
fn acceptance_02_oscillator_residual_annihilates_exact_solution() {
    let _g = gate();
    let check = Check::start(2, "oscillator residual on the exact solution", Some(5.0));
    let scaling = TemporalScaling::default();
    let field = AnalyticCos {
        amp_hat: AMP_MICROSTRAIN / scaling.strain_scale,
        omega_sq: OMEGA_SQ,
        t_ref: scaling.t_ref,
    };
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let t = DOMAIN_END_S * k as f64 / 999.0;
        let mut tape = Tape::with_capacity(256, 256);
        let t_hat = Jet::seed(&mut tape, scaling.t_hat(t), 0, 1, JetOrder::Second).unwrap();
        let eps = field.eval_jet(&mut tape, &t_hat).unwrap();
        let omega = tape.constant(OMEGA_SQ);
        let r = ode_residual(&mut tape, &eps, omega, &scaling, 1.0).unwrap();
        worst = worst.max(tape.value(r).abs());
    }
    // Relative to the magnitude of the two cancelling terms, ω²·|amp|.
    let rel = worst / (OMEGA_SQ * AMP_MICROSTRAIN.abs());
    check.finish(
        rel < 1e-6,
        format!("max |residual| {worst:.2e} µε/s², relative {rel:.2e} (tol 1e-6) at 1000 points"),
    );
}

// ════════════════════════════════════════════════════════════════════════
// 03 — trained on the noisy first 6 s, the physics model forecasts the
//      remaining 10 s; the data-only baseline does not.
// ════════════════════════════════════════════════════════════════════════

fn truth_grid(lo: f64, hi: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let times: Vec<f64> = (0..=n)
        .map(|k| lo + (hi - lo) * k as f64 / n as f64)
        .collect();
    let truth = times
        .iter()
        .map(|&t| harmonic_strain(AMP_MICROSTRAIN, OMEGA_SQ, t))
        .collect();
    (times, truth)
}

fn two_phase(adam_epochs: usize, lbfgs_memory: usize, lbfgs_iters: usize) -> TrainConfig {
    TrainConfig {
        adam: AdamConfig {
            epochs: adam_epochs,
            ..AdamConfig::default()
        },
        lbfgs: LbfgsConfig {
            memory: lbfgs_memory,
            max_iters: lbfgs_iters,
            ..LbfgsConfig::default()
        },
    }
}

#[test]
fn acceptance_03_temporal_forecast_beats_data_only_baseline() {
    let _g = gate();
    let check = Check::start(3, "temporal forecast vs data-only baseline", Some(600.0));
    let period = 2.0 * std::f64::consts::PI / OMEGA_SQ.sqrt();
    let schedule = StagedSchedule::from_geometry(0.0, DATA_END_S, DOMAIN_END_S, period).unwrap();
    let (extrap_t, extrap_truth) = truth_grid(DATA_END_S, DOMAIN_END_S, 500);
    let (train_t, train_truth) = truth_grid(0.0, DATA_END_S, 300);

    let mut physics_extrap = Vec::new();
    let mut physics_train = Vec::new();
    let mut baseline_extrap = Vec::new();
    let mut baseline_train = Vec::new();
    for seed in 0..5u64 {
        let series = synth_temporal(&TemporalDataSpec {
            seed,
            ..TemporalDataSpec::default()
        })
        .unwrap();
        let (train, _) = series.split_at(DATA_END_S);
        let train = train.samples;

        let problem = TemporalProblem::pinn(
            train.clone(),
            (0.0, DOMAIN_END_S),
            200,
            OmegaMode::Fixed(OMEGA_SQ),
            seed,
        );
        let staged = train_temporal_staged(&problem, &schedule).unwrap();
        physics_extrap.push(rel_l2(&staged.predict_strain(&extrap_t), &extrap_truth));
        physics_train.push(rel_l2(&staged.predict_strain(&train_t), &train_truth));

        let baseline = TemporalProblem::data_only_baseline(train, seed);
        let fitted = train_temporal(
            &baseline,
            &baseline.init_store().unwrap(),
            &two_phase(5000, 100, 2000),
        )
        .unwrap();
        let bx = predict_strain(&baseline.net, &baseline.scaling, &fitted.store, &extrap_t);
        let bt = predict_strain(&baseline.net, &baseline.scaling, &fitted.store, &train_t);
        baseline_extrap.push(rel_l2(&bx, &extrap_truth));
        baseline_train.push(rel_l2(&bt, &train_truth));
    }
    let pe = median(&physics_extrap);
    let pt = median(&physics_train);
    let be = median(&baseline_extrap);
    let bt = median(&baseline_train);
    let ok = pe < 0.10 && be >= 2.0 * pe && pt < 0.03 && bt < 0.03;
    check.finish(
        ok,
        format!(
            "5 noisy seeds, medians: physics extrapolation {pe:.4} (<0.10), baseline {be:.3} (≥2×), train windows {pt:.4}/{bt:.4} (<0.03)"
        ),
    );
}

// ════════════════════════════════════════════════════════════════════════
// 04 — ω² identified from the noisy 6 s window starting at 1.0.
// ════════════════════════════════════════════════════════════════════════

#[test]
fn acceptance_04_frequency_identification_from_far_start() {
    let _g = gate();
    let check = Check::start(4, "frequency identification from init 1.0", Some(300.0));
    let series = synth_temporal(&TemporalDataSpec::default()).unwrap();
    let (train, _) = series.split_at(DATA_END_S);
    let problem = TemporalProblem::identification(train.samples, 1.0, 0).unwrap();
    let id = identify_omega(&problem, &two_phase(5000, 100, 2000)).unwrap();
    let rel = (id.omega_sq_final - OMEGA_SQ).abs() / OMEGA_SQ;
    check.finish(
        rel < 0.05,
        format!(
            "identified ω² = {:.4} vs {OMEGA_SQ} ({:+.2}%, tol ±5%)",
            id.omega_sq_final,
            100.0 * (id.omega_sq_final - OMEGA_SQ) / OMEGA_SQ
        ),
    );
}

// ════════════════════════════════════════════════════════════════════════
// 05 — physics-only training recovers the manufactured field; the frozen
//      exact solution scores a vanishing loss.
// ════════════════════════════════════════════════════════════════════════

fn field_errors_vs_manufactured(
    p: &SpatialProblem,
    ms: &pinnbeam::oracle::ManufacturedSolution,
    store: &ParamStore,
    geom: &BeamGeometry,
) -> (f64, f64) {
    let mut pts = Vec::new();
    for j in 0..10 {
        for i in 0..50 {
            let x = -0.5 * geom.length + geom.length * i as f64 / 49.0;
            let y = -0.5 * geom.height + geom.height * j as f64 / 9.0;
            pts.push((x, y));
        }
    }
    let pred = predict_field(&p.net, &p.transform, &p.scaling, store, &pts);
    let (mut pu, mut tu, mut ps, mut ts) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for f in &pred {
        let xh = p.scaling.x_hat(f.x_m);
        let yh = p.scaling.y_hat(f.y_m);
        let out = ms.outputs(xh, yh);
        pu.extend([f.ux_m, f.uy_m]);
        tu.extend([
            out[0] * p.scaling.disp_scale_m,
            out[1] * p.scaling.disp_scale_m,
        ]);
        ps.extend([f.sxx_pa, f.syy_pa, f.sxy_pa]);
        ts.extend([
            out[2] * p.scaling.stress_scale_pa,
            out[3] * p.scaling.stress_scale_pa,
            out[4] * p.scaling.stress_scale_pa,
        ]);
    }
    (rel_l2(&pu, &tu), rel_l2(&ps, &ts))
}

#[test]
fn acceptance_05_manufactured_field_recovery() {
    let _g = gate();
    let check = Check::start(5, "manufactured-solution field recovery", Some(900.0));
    let geom = BeamGeometry::default_lab_beam();
    let mat = Material::concrete();
    let cfg = TrainConfig {
        adam: AdamConfig {
            epochs: 2000,
            ..AdamConfig::default()
        },
        lbfgs: LbfgsConfig {
            memory: 50,
            max_iters: MANUFACTURED_LBFGS_ITERS,
            ..LbfgsConfig::default()
        },
    };
    let mut disp_errors = Vec::new();
    let mut stress_errors = Vec::new();
    let mut frozen = f64::NAN;
    for seed in 0..3u64 {
        let (mut p, ms) = SpatialProblem::manufactured(&geom, &mat, seed).unwrap();
        p.interior.truncate(SPATIAL_INTERIOR_POINTS);
        if seed == 0 {
            frozen = manufactured_loss(&p, &ms).unwrap().0;
        }
        let result = train_spatial(&p, &p.init_store().unwrap(), &cfg).unwrap();
        let (du, ds) = field_errors_vs_manufactured(&p, &ms, &result.store, &geom);
        disp_errors.push(du);
        stress_errors.push(ds);
        stash_model(&p, &result.store);
    }
    let du = median(&disp_errors);
    let ds = median(&stress_errors);
    let ok = du < 0.05 && ds < 0.05 && frozen < 1e-12;
    check.finish(
        ok,
        format!(
            "3-seed medians on the 50×10 grid: displacements {du:.4}, stresses {ds:.4} (<0.05); frozen exact-solution loss {frozen:.2e} (<1e-12)"
        ),
    );
}

// ════════════════════════════════════════════════════════════════════════
// 06 — the three fiber-data scenarios order as designed around the
//      damaged tension region.
// ════════════════════════════════════════════════════════════════════════

struct ScenarioOutcome {
    tension_vs_data: f64,
    roughness: f64,
    peak_microstrain: f64,
}

#[test]
fn acceptance_06_damage_scenarios_order_as_designed() {
    let _g = gate();
    let check = Check::start(6, "damage scenarios order as designed", Some(1800.0));
    let geom = BeamGeometry::default_lab_beam();
    let mat = Material::concrete();
    let load = FourPointLoad::default_lab_load();
    let data = synth_fiber_scans(&FiberDataSpec::default()).unwrap();
    let undamaged: Vec<_> = data.tension.points.iter().filter(|pt| !pt.damaged).collect();
    let u_pts: Vec<(f64, f64)> = undamaged.iter().map(|pt| (pt.x_m, pt.y_m)).collect();
    let u_data: Vec<f64> = undamaged.iter().map(|pt| pt.strain).collect();
    let fiber_y = 0.5 * geom.height - FiberDataSpec::default().fiber_inset;
    let line: Vec<(f64, f64)> = (0..100)
        .map(|i| {
            (
                -0.5 * geom.length + geom.length * (i as f64 + 0.5) / 100.0,
                -fiber_y,
            )
        })
        .collect();
    let oracle_peak = line
        .iter()
        .map(|&(x, y)| euler_bernoulli_strain(&geom, &mat, &load, x, y) * MICROSTRAIN_PER_STRAIN)
        .fold(f64::MIN, f64::max);
    let amplification = CrackModel::default_two_cracks().amplification;

    let cfg = TrainConfig {
        adam: AdamConfig {
            epochs: 2000,
            ..AdamConfig::default()
        },
        lbfgs: LbfgsConfig {
            memory: 50,
            max_iters: SCENARIO_LBFGS_ITERS,
            ..LbfgsConfig::default()
        },
    };
    let mut outcomes = Vec::new();
    for scenario in [
        Scenario::CompressionOnly,
        Scenario::FullTension,
        Scenario::ReducedTension,
    ] {
        let mut p = SpatialProblem::four_point(
            &geom,
            &mat,
            &load,
            &data.compression,
            &data.tension,
            scenario,
            0,
        )
        .unwrap();
        p.interior.truncate(SPATIAL_INTERIOR_POINTS);
        let result = train_spatial(&p, &p.init_store().unwrap(), &cfg).unwrap();
        let u_pred: Vec<f64> = predict_field(&p.net, &p.transform, &p.scaling, &result.store, &u_pts)
            .iter()
            .map(|f| f.exx_microstrain)
            .collect();
        let line_pred: Vec<f64> =
            predict_field(&p.net, &p.transform, &p.scaling, &result.store, &line)
                .iter()
                .map(|f| f.exx_microstrain)
                .collect();
        outcomes.push(ScenarioOutcome {
            tension_vs_data: rel_l2(&u_pred, &u_data),
            roughness: mean_sq_second_diff(&line_pred),
            peak_microstrain: line_pred.iter().cloned().fold(f64::MIN, f64::max),
        });
        stash_model(&p, &result.store);
    }
    let [s1, s2, s3] = &outcomes[..] else {
        unreachable!()
    };
    let peak_cap = 0.8 * amplification * oracle_peak;
    let peak_ok = s1.peak_microstrain < peak_cap;
    let fit_ok = s2.tension_vs_data < 0.10;
    let rough_ok = s2.roughness > s3.roughness;
    let order_ok = s2.tension_vs_data < s3.tension_vs_data && s3.tension_vs_data < s1.tension_vs_data;
    let ok = peak_ok && fit_ok && rough_ok && order_ok;
    check.finish(
        ok,
        format!(
            "peaks: scenario-1 {:.1} µε < {peak_cap:.1} µε; tension-fiber error vs data 1/2/3 = {:.3}/{:.3}/{:.3} (2 < 0.10, ordering 2<3<1); roughness 2/3 = {:.2e}/{:.2e} (2 rougher)",
            s1.peak_microstrain,
            s1.tension_vs_data,
            s2.tension_vs_data,
            s3.tension_vs_data,
            s2.roughness,
            s3.roughness
        ),
    );
}

// ════════════════════════════════════════════════════════════════════════
// 07 — the hard output constraints hold to machine precision for random
//      parameter draws and for trained models.
// ════════════════════════════════════════════════════════════════════════

#[test]
fn acceptance_07_hard_constraints_are_machine_exact() {
    let _g = gate();
    let check = Check::start(7, "hard constraints machine-exact", Some(5.0));
    let transform = hard_constraints(true);
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let probe = |spec: &MlpSpec,
                 transform: &OutputTransform,
                 store: &ParamStore,
                 rng: &mut ChaCha8Rng|
     -> f64 {
        let mut tape = Tape::with_capacity(1 << 16, 1 << 16);
        let bound = bind(&mut tape, &store.flat);
        let mut w = 0.0f64;
        let y = rng.gen_range(-1.0..1.0);
        let edge = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        for (x_hat, y_hat, channels) in
            [(0.0, y, &[0usize][..]), (edge, y, &[2usize, 4][..])]
        {
            let xi = tape.constant(x_hat);
            let yi = tape.constant(y_hat);
            let raw = forward_values(&mut tape, spec, &store.layers, &bound, &[xi, yi]).unwrap();
            let out = transform.apply_values(&mut tape, &[x_hat, y_hat], &raw).unwrap();
            for &c in channels {
                w = w.max(tape.value(out[c]).abs());
            }
        }
        w
    };
    // 1000 random parameter draws on small networks.
    for k in 0..1000u64 {
        let spec = MlpSpec {
            input_dim: 2,
            hidden: vec![8, 8],
            output_dim: 5,
            activation: Activation::Tanh,
            seed: k,
        };
        let store = ParamStore::init_glorot(&spec).unwrap();
        worst = worst.max(probe(&spec, &transform, &store, &mut rng));
    }
    // Every trained model stashed by the earlier checks (train a short
    // one if this test runs in isolation).
    let mut stash = trained_stash().lock().unwrap_or_else(|e| e.into_inner());
    if stash.is_empty() {
        let geom = BeamGeometry::default_lab_beam();
        let mat = Material::concrete();
        let (mut p, _) = SpatialProblem::manufactured(&geom, &mat, 0).unwrap();
        p.interior.truncate(60);
        let quick = TrainConfig {
            adam: AdamConfig {
                epochs: 30,
                ..AdamConfig::default()
            },
            lbfgs: LbfgsConfig {
                memory: 10,
                max_iters: 10,
                ..LbfgsConfig::default()
            },
        };
        let result = train_spatial(&p, &p.init_store().unwrap(), &quick).unwrap();
        stash.push((p.net.clone(), p.transform.clone(), result.store));
    }
    let n_trained = stash.len();
    for (spec, transform, store) in stash.iter() {
        for _ in 0..50 {
            worst = worst.max(probe(spec, transform, store, &mut rng));
        }
    }
    drop(stash);
    check.finish(
        worst == 0.0,
        format!(
            "symmetry-axis ûx and vertical-edge σ̂xx/σ̂xy: worst |value| = {worst:.1e} over 1000 random draws + {n_trained} trained models (must be exactly 0)"
        ),
    );
}

// ════════════════════════════════════════════════════════════════════════
// 08 — the composite loss equals the weighted sum of its reported
//      components to 1e-14 relative.
// ════════════════════════════════════════════════════════════════════════

#[test]
fn acceptance_08_loss_is_the_weighted_component_sum() {
    let _g = gate();
    let check = Check::start(8, "loss decomposition identity", Some(5.0));
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut worst = 0.0f64;

    // Temporal problems with random weights.
    let series = synth_temporal(&TemporalDataSpec::default()).unwrap();
    let (train, _) = series.split_at(DATA_END_S);
    for _ in 0..10 {
        let mut p = TemporalProblem::pinn(
            train.samples.clone(),
            (0.0, DOMAIN_END_S),
            50,
            OmegaMode::Fixed(OMEGA_SQ),
            rng.gen_range(0..1000),
        );
        p.w_ode = rng.gen_range(0.0..10.0);
        p.w_data = rng.gen_range(0.0..10.0);
        let store = p.init_store().unwrap();
        let eval = p.objective(&store).unwrap().eval(&store.flat).unwrap();
        let total: f64 = [p.w_ode, p.w_data]
            .iter()
            .zip(&eval.components)
            .map(|(w, c)| w * c)
            .sum();
        worst = worst.max((eval.value - total).abs() / eval.value.abs().max(1e-300));
    }

    // Spatial problems with random weights.
    let geom = BeamGeometry::default_lab_beam();
    let mat = Material::concrete();
    let load = FourPointLoad::default_lab_load();
    let data = synth_fiber_scans(&FiberDataSpec::default()).unwrap();
    for _ in 0..10 {
        let mut p = SpatialProblem::four_point(
            &geom,
            &mat,
            &load,
            &data.compression,
            &data.tension,
            Scenario::FullTension,
            rng.gen_range(0..1000),
        )
        .unwrap();
        p.interior.truncate(30);
        p.w_pde = rng.gen_range(0.0..10.0);
        p.w_bc = rng.gen_range(0.0..10.0);
        p.w_exp_c = rng.gen_range(0.0..10.0);
        p.w_exp_t = rng.gen_range(0.0..10.0);
        p.w_rot = rng.gen_range(0.0..1.0);
        let store = p.init_store().unwrap();
        let eval = p.objective(&store).unwrap().eval(&store.flat).unwrap();
        let total: f64 = [p.w_pde, p.w_bc, p.w_exp_c, p.w_exp_t, p.w_rot]
            .iter()
            .zip(&eval.components)
            .map(|(w, c)| w * c)
            .sum();
        worst = worst.max((eval.value - total).abs() / eval.value.abs().max(1e-300));
    }
    check.finish(
        worst <= 1e-14,
        format!("20 random-weight problems: worst |total − Σ wᵢLᵢ| / |total| = {worst:.2e} (tol 1e-14)"),
    );
}

// ════════════════════════════════════════════════════════════════════════
// 09 — identical config and seed rerun through the CLI produces
//      byte-identical CSVs (and echoed configs, and parameter files).
// ════════════════════════════════════════════════════════════════════════

fn run_cli(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_pinnbeam"))
        .args(args)
        .output()
        .expect("CLI binary runs")
}

/// Relative paths of comparable files under `dir`: everything except the
/// two documented non-reproducible artifacts (wall-clock metrics and the
/// hash manifest that covers them).
fn comparable_files(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let name = path.file_name().unwrap().to_string_lossy().to_string();
                if name != "metrics.toml" && name != "provenance.toml" {
                    out.push(path.strip_prefix(dir).unwrap().to_path_buf());
                }
            }
        }
    }
    out.sort();
    out
}

#[test]
fn acceptance_09_reruns_are_byte_identical() {
    let _g = gate();
    let check = Check::start(9, "rerun determinism through the CLI", None);
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("tiny.toml");
    std::fs::write(
        &cfg_path,
        "[temporal_train]\nadam_epochs = 250\nlbfgs_iters = 120\n\n\
         [identify]\nadam_epochs = 300\nlbfgs_iters = 150\n\n\
         [spatial_train]\nscenario = 2\ninterior_points = 40\nadam_epochs = 60\n\
         lbfgs_iters = 40\nfield_grid_nx = 20\nfield_grid_ny = 4\n",
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap();
    let mut n_files = 0usize;
    let mut all_match = true;
    let mut details = String::new();
    let reps: Vec<std::path::PathBuf> = [0, 1]
        .iter()
        .map(|k| tmp.path().join(format!("rep{k}")))
        .collect();
    for rep in &reps {
        let out = rep.to_str().unwrap();
        for args in [
            vec!["synth", "--config", cfg, "--out", out, "--seed", "3"],
            vec![
                "train-temporal",
                "--config",
                cfg,
                "--out",
                out,
                "--seed",
                "3",
            ],
            vec![
                "identify-omega",
                "--config",
                cfg,
                "--out",
                out,
                "--seed",
                "3",
            ],
            vec![
                "train-spatial",
                "--config",
                cfg,
                "--out",
                out,
                "--seed",
                "3",
            ],
        ] {
            let output = run_cli(&args);
            assert!(
                output.status.success(),
                "{args:?} failed: {}",
                String::from_utf8_lossy(&output.stderr)
            );
        }
    }
    let files0 = comparable_files(&reps[0]);
    let files1 = comparable_files(&reps[1]);
    if files0 != files1 {
        all_match = false;
        details = format!("file sets differ: {} vs {} entries", files0.len(), files1.len());
    } else {
        for rel in &files0 {
            let a = std::fs::read(reps[0].join(rel)).unwrap();
            let b = std::fs::read(reps[1].join(rel)).unwrap();
            n_files += 1;
            if a != b {
                all_match = false;
                details = format!("{} differs between reruns", rel.display());
                break;
            }
        }
    }
    if all_match {
        details = format!(
            "synth + train-temporal + identify-omega + train-spatial, same config and seed: all {n_files} comparable files byte-identical"
        );
    }
    check.finish(all_match, details);
}

// ════════════════════════════════════════════════════════════════════════
// 10 — prediction latency: 1000 temporal evaluations in under 0.1 s and
//      10,000 spatial field points in under 1 s.
// ════════════════════════════════════════════════════════════════════════

#[test]
fn acceptance_10_prediction_latency() {
    let _g = gate();
    let check = Check::start(10, "prediction latency", Some(30.0));
    // Temporal: 1000 points through the scalar surrogate.
    let problem = TemporalProblem::pinn(
        vec![],
        (0.0, DOMAIN_END_S),
        10,
        OmegaMode::Fixed(OMEGA_SQ),
        0,
    );
    let store = problem.init_store().unwrap();
    let times: Vec<f64> = (0..1000).map(|k| 0.016 * k as f64).collect();
    let t0 = Instant::now();
    let out = predict_strain(&problem.net, &problem.scaling, &store, &times);
    let temporal_s = t0.elapsed().as_secs_f64();
    assert_eq!(out.len(), 1000);

    // Spatial: 10,000 field points through the five-channel surrogate.
    let geom = BeamGeometry::default_lab_beam();
    let mat = Material::concrete();
    let (p, _) = SpatialProblem::manufactured(&geom, &mat, 0).unwrap();
    let sstore = p.init_store().unwrap();
    let pts: Vec<(f64, f64)> = (0..10_000)
        .map(|k| {
            let i = k % 100;
            let j = k / 100;
            (
                -1.45 + 2.9 * i as f64 / 99.0,
                -0.145 + 0.29 * j as f64 / 99.0,
            )
        })
        .collect();
    let t0 = Instant::now();
    let fields = predict_field(&p.net, &p.transform, &p.scaling, &sstore, &pts);
    let spatial_s = t0.elapsed().as_secs_f64();
    assert_eq!(fields.len(), 10_000);

    let ok = temporal_s < 0.1 && spatial_s < 1.0;
    check.finish(
        ok,
        format!(
            "1000 temporal predictions in {:.1} ms (<100 ms); 10,000 field points in {:.0} ms (<1000 ms)",
            1e3 * temporal_s,
            1e3 * spatial_s
        ),
    );
}
