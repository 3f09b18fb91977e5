//! Spatial reduced model: a mixed displacement/stress network over the 2D
//! beam section under four-point bending. The network maps (x̂, ŷ) to the
//! five fields (ûx, ûy, σ̂xx, σ̂yy, σ̂xy); emitting stresses directly keeps
//! every elasticity residual first-order in network derivatives. Output
//! transforms enforce the essential conditions exactly — ûx = 0 on the
//! x = 0 line, σ̂xx = σ̂xy = 0 on the vertical end faces — while the
//! Neumann (traction) conditions on the top and bottom edges and the
//! constitutive law enter the loss as soft penalties.
//!
//! Everything is nondimensionalized: x̂ = 2x/l, ŷ = 2y/h maps the beam to
//! the unit square [−1, 1]²; stresses are scaled by σ* = E·1e-4 and
//! displacements by u* = 1e-4·(l/2), so fields, residuals, and data
//! misfits are all O(1) for a freshly initialized network. The geometric
//! anisotropy α = l/h appears explicitly in every ŷ-derivative.
//!
//! The physics fixes displacements only up to a vertical translation and
//! an in-plane rotation. By default both are removed: a pin-well output
//! multiplier forces ûy = 0 at the bottom-center point, and a soft penalty
//! drives the mean rotation over a symmetric grid to zero. Both can be
//! disabled to mimic a formulation that leaves the null space free.

use crate::autodiff::{Jet, JetOrder, Tape, VarId};
use crate::datagen::FiberScan;
use crate::error::{Error, Result};
use crate::network::{
    bind, eval_dual, forward_jets, forward_values, Activation, CoordExpr, LayerLayout, MlpSpec,
    OutputTransform, ParamStore,
};
use crate::optim::{
    train_schedule, ObjEval, Objective, StopReason, TrainConfig, TrainHistory,
};
use crate::oracle::{
    BeamGeometry, FourPointLoad, ManufacturedSolution, Material, MICROSTRAIN_PER_STRAIN,
};
use crate::{map_chunks, EvalMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Interior collocation points are drawn once from this fixed stream, so
/// every scenario of a study sees the same point cloud.
const COLLOCATION_SEED: u64 = 11;

/// Default conditioning factor on the shear constitutive residual (see
/// [`SpatialProblem::shear_residual_scale`]).
pub const DEFAULT_SHEAR_RESIDUAL_SCALE: f64 = 1.0;

// ── Scaling ─────────────────────────────────────────────────────────────

/// Conversion between physical beam coordinates/fields and the
/// nondimensional quantities the network works in.
#[derive(Clone, Copy, Debug)]
pub struct SpatialScaling {
    pub half_length_m: f64,
    pub half_height_m: f64,
    /// σ* [Pa]: one unit of network stress output.
    pub stress_scale_pa: f64,
    /// u* [m]: one unit of network displacement output.
    pub disp_scale_m: f64,
}

impl SpatialScaling {
    /// σ* = E·1e-4 and u* = 1e-4·(l/2): with these, a bending state of
    /// order 100 µε has stresses and displacements of order one.
    pub fn standard(geom: &BeamGeometry, mat: &Material) -> Self {
        SpatialScaling {
            half_length_m: 0.5 * geom.length,
            half_height_m: 0.5 * geom.height,
            stress_scale_pa: mat.youngs * 1e-4,
            disp_scale_m: 1e-4 * 0.5 * geom.length,
        }
    }

    pub fn x_hat(&self, x_m: f64) -> f64 {
        x_m / self.half_length_m
    }

    pub fn y_hat(&self, y_m: f64) -> f64 {
        y_m / self.half_height_m
    }

    /// Physical microstrain represented by one unit of ∂ûx/∂x̂ (= 100 µε
    /// under the standard scaling).
    pub fn strain_unit_microstrain(&self) -> f64 {
        self.disp_scale_m / self.half_length_m * MICROSTRAIN_PER_STRAIN
    }
}

// ── Boundary conditions ─────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Edge {
    Top,
    Bottom,
}

/// A uniform traction applied on an x-interval of a horizontal edge,
/// physical units.
#[derive(Clone, Copy, Debug)]
pub struct TractionBC {
    pub edge: Edge,
    /// Interval [m] on the edge.
    pub x_range: (f64, f64),
    /// Applied traction vector (tx, ty) [Pa].
    pub traction: (f64, f64),
}

/// The four contact patches of symmetric four-point bending: the two loads
/// press down on the top edge at ±load_x, the two supports press up on the
/// bottom edge at ±support_x. Validates that every patch lies on the beam
/// and that the resultant force and moment vanish.
pub fn four_point_tractions(
    geom: &BeamGeometry,
    load: &FourPointLoad,
) -> Result<Vec<TractionBC>> {
    let p = load.patch_pressure(geom);
    let half_w = 0.5 * load.patch_width;
    let bcs = vec![
        TractionBC {
            edge: Edge::Top,
            x_range: (-load.load_x - half_w, -load.load_x + half_w),
            traction: (0.0, -p),
        },
        TractionBC {
            edge: Edge::Top,
            x_range: (load.load_x - half_w, load.load_x + half_w),
            traction: (0.0, -p),
        },
        TractionBC {
            edge: Edge::Bottom,
            x_range: (-load.support_x - half_w, -load.support_x + half_w),
            traction: (0.0, p),
        },
        TractionBC {
            edge: Edge::Bottom,
            x_range: (load.support_x - half_w, load.support_x + half_w),
            traction: (0.0, p),
        },
    ];
    let half_l = 0.5 * geom.length;
    let mut force = (0.0, 0.0);
    let mut moment = 0.0;
    for bc in &bcs {
        if !(bc.x_range.0 < bc.x_range.1
            && bc.x_range.0 >= -half_l - 1e-12
            && bc.x_range.1 <= half_l + 1e-12)
        {
            return Err(Error::validation(format!(
                "traction patch [{}, {}] m falls outside the beam span",
                bc.x_range.0, bc.x_range.1
            )));
        }
        let area = (bc.x_range.1 - bc.x_range.0) * geom.breadth;
        let xc = 0.5 * (bc.x_range.0 + bc.x_range.1);
        force.0 += bc.traction.0 * area;
        force.1 += bc.traction.1 * area;
        moment += bc.traction.1 * area * xc - bc.traction.0 * area;
    }
    let scale = load.total_force.abs().max(1.0);
    if force.0.abs() > 1e-9 * scale || force.1.abs() > 1e-9 * scale || moment.abs() > 1e-9 * scale
    {
        return Err(Error::validation(format!(
            "traction set is not self-equilibrated: F = ({}, {}), M = {moment}",
            force.0, force.1
        )));
    }
    Ok(bcs)
}

/// One Neumann collocation point with its target traction in σ̂ units.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryPoint {
    pub x_hat: f64,
    /// +1 on the top edge, −1 on the bottom edge.
    pub y_hat: f64,
    /// Outward normal's y-component (equals y_hat on horizontal edges).
    pub ny: f64,
    /// Target traction (t̂x, t̂y) in stress-scale units.
    pub t_hat: (f64, f64),
}

/// One fiber strain observation, nondimensionalized.
#[derive(Clone, Copy, Debug)]
pub struct StrainSample {
    pub x_hat: f64,
    pub y_hat: f64,
    /// Measured strain divided by the strain unit (100 µε).
    pub strain_scaled: f64,
}

// ── Problem ─────────────────────────────────────────────────────────────

/// Which fiber data enters the loss and how strongly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Compression fiber only; the tension side is unobserved.
    CompressionOnly,
    /// Both fibers at equal weight; tension points inside damaged
    /// intervals are excluded.
    FullTension,
    /// Both fibers with the tension misfit down-weighted to 0.01; damaged
    /// intervals excluded as in [`Scenario::FullTension`].
    ReducedTension,
}

impl Scenario {
    pub fn from_index(i: u8) -> Result<Scenario> {
        match i {
            1 => Ok(Scenario::CompressionOnly),
            2 => Ok(Scenario::FullTension),
            3 => Ok(Scenario::ReducedTension),
            _ => Err(Error::usage(format!("scenario must be 1, 2, or 3, got {i}"))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Scenario::CompressionOnly => 1,
            Scenario::FullTension => 2,
            Scenario::ReducedTension => 3,
        }
    }

    pub fn tension_weight(self) -> f64 {
        match self {
            Scenario::CompressionOnly => 0.0,
            Scenario::FullTension => 1.0,
            Scenario::ReducedTension => 0.01,
        }
    }
}

/// Body force (b̂x, b̂y) entering the momentum residual, in nondimensional
/// units.
#[derive(Clone, Copy, Debug)]
pub enum BodyForce {
    /// Self-weight neglected (it is small against the applied load).
    None,
    /// The forcing that makes a manufactured solution satisfy momentum
    /// balance identically; used for solver verification.
    FromSolution(ManufacturedSolution),
}

impl BodyForce {
    pub fn eval_hat(&self, x_hat: f64, y_hat: f64) -> (f64, f64) {
        match self {
            BodyForce::None => (0.0, 0.0),
            BodyForce::FromSolution(ms) => ms.body_force_hat(x_hat, y_hat),
        }
    }
}

/// The output transform enforcing the essential conditions exactly:
/// ûx = x̂·N (zero on the center line), σ̂xx and σ̂xy get the (1−x̂)(1+x̂)
/// window (zero on the end faces). With `pin_uy`, ûy is multiplied by a
/// quadratic well vanishing only at the bottom-center support point, which
/// removes the vertical-translation null space.
pub fn hard_constraints(pin_uy: bool) -> OutputTransform {
    let uy = if pin_uy {
        // 0.5·(x̂² + ((ŷ+1)/2)²): zero only at (0, −1), 1 at (±1, 1).
        CoordExpr::PinWell {
            cx: 0.0,
            cy: -1.0,
            inv_sx: 1.0,
            inv_sy: 0.5,
            scale: 0.5,
        }
    } else {
        CoordExpr::One
    };
    OutputTransform {
        per_output: vec![
            (CoordExpr::Coord(0), CoordExpr::Zero),
            (uy, CoordExpr::Zero),
            (CoordExpr::SpanWindow, CoordExpr::Zero),
            (CoordExpr::One, CoordExpr::Zero),
            (CoordExpr::SpanWindow, CoordExpr::Zero),
        ],
    }
}

/// Complete description of one spatial training task.
#[derive(Clone, Debug)]
pub struct SpatialProblem {
    pub net: MlpSpec,
    pub transform: OutputTransform,
    pub scaling: SpatialScaling,
    /// Slenderness l/h: the stretch between the unit square and the beam.
    pub alpha: f64,
    /// Plane-stress Lamé coefficients normalized by Young's modulus.
    pub lam_hat: f64,
    pub mu_hat: f64,
    /// Interior collocation points (x̂, ŷ).
    pub interior: Vec<(f64, f64)>,
    pub boundary: Vec<BoundaryPoint>,
    pub fiber_compression: Vec<StrainSample>,
    pub fiber_tension: Vec<StrainSample>,
    /// x̂-symmetric grid for the zero-mean-rotation penalty; empty
    /// disables the penalty.
    pub rotation_grid: Vec<(f64, f64)>,
    pub body_force: BodyForce,
    pub w_pde: f64,
    pub w_bc: f64,
    pub w_exp_c: f64,
    pub w_exp_t: f64,
    pub w_rot: f64,
    /// Conditioning factor on the shear constitutive residual before
    /// squaring. The slenderness α multiplies every ŷ-derivative, so the
    /// x̂-profile of ûy is seen only through the (unscaled) shear row and
    /// converges an order of magnitude slower than everything else;
    /// raising this evens out the sensitivities. 1.0 = raw residual.
    pub shear_residual_scale: f64,
    pub chunk: usize,
    pub mode: EvalMode,
}

fn default_net(seed: u64) -> MlpSpec {
    MlpSpec {
        input_dim: 2,
        hidden: vec![50, 50, 50, 50],
        output_dim: 5,
        activation: Activation::Tanh,
        seed,
    }
}

/// The fixed interior collocation stream: the first `n` points are the
/// same for every caller, so shrinking or growing a study keeps the
/// shared prefix.
pub fn interior_cloud(n: usize) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(COLLOCATION_SEED);
    (0..n)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

/// Mirrored grid: every point (x̂, ŷ) with x̂ > 0 is paired with
/// (−x̂, ŷ) by exact negation, so any field odd in x̂ sums to zero over
/// the grid pair by pair.
fn rotation_grid() -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for j in 0..=6 {
        let y = -1.0 + j as f64 / 3.0;
        pts.push((0.0, y));
        for k in 1..=10 {
            let x = k as f64 / 10.0;
            pts.push((x, y));
            pts.push((-x, y));
        }
    }
    pts
}

fn boundary_points(
    geom: &BeamGeometry,
    scaling: &SpatialScaling,
    bcs: &[TractionBC],
    per_edge: usize,
) -> Vec<BoundaryPoint> {
    let mut pts = Vec::with_capacity(2 * per_edge);
    for (edge, y_hat) in [(Edge::Top, 1.0), (Edge::Bottom, -1.0)] {
        for i in 0..per_edge {
            // Cell midpoints: uniform coverage without the end-face corners.
            let x_hat = -1.0 + 2.0 * (i as f64 + 0.5) / per_edge as f64;
            let x_m = x_hat * 0.5 * geom.length;
            let mut t = (0.0, 0.0);
            for bc in bcs {
                if bc.edge == edge && x_m >= bc.x_range.0 && x_m <= bc.x_range.1 {
                    t = bc.traction;
                }
            }
            pts.push(BoundaryPoint {
                x_hat,
                y_hat,
                ny: y_hat,
                t_hat: (t.0 / scaling.stress_scale_pa, t.1 / scaling.stress_scale_pa),
            });
        }
    }
    pts
}

fn fiber_samples(scaling: &SpatialScaling, scan: &FiberScan, skip_damaged: bool) -> Vec<StrainSample> {
    let unit = scaling.strain_unit_microstrain();
    scan.points
        .iter()
        .filter(|p| !(skip_damaged && p.damaged))
        .map(|p| StrainSample {
            x_hat: scaling.x_hat(p.x_m),
            y_hat: scaling.y_hat(p.y_m),
            strain_scaled: p.strain / unit,
        })
        .collect()
}

impl SpatialProblem {
    /// The four-point-bending study: traction patches from `load`,
    /// compression-fiber data always, tension-fiber data per `scenario`
    /// (damaged intervals excluded), 4000 interior collocation points and
    /// 200 Neumann points per horizontal edge.
    pub fn four_point(
        geom: &BeamGeometry,
        mat: &Material,
        load: &FourPointLoad,
        compression: &FiberScan,
        tension: &FiberScan,
        scenario: Scenario,
        seed: u64,
    ) -> Result<SpatialProblem> {
        let scaling = SpatialScaling::standard(geom, mat);
        let bcs = four_point_tractions(geom, load)?;
        let fiber_tension = match scenario {
            Scenario::CompressionOnly => Vec::new(),
            _ => fiber_samples(&scaling, tension, true),
        };
        let p = SpatialProblem {
            net: default_net(seed),
            transform: hard_constraints(true),
            scaling,
            alpha: geom.alpha(),
            lam_hat: mat.lam_hat(),
            mu_hat: mat.mu_hat(),
            interior: interior_cloud(4000),
            boundary: boundary_points(geom, &scaling, &bcs, 200),
            fiber_compression: fiber_samples(&scaling, compression, false),
            fiber_tension,
            rotation_grid: rotation_grid(),
            body_force: BodyForce::None,
            w_pde: 1.0,
            w_bc: 1.0,
            w_exp_c: 1.0,
            w_exp_t: scenario.tension_weight(),
            w_rot: 1e-2,
            shear_residual_scale: DEFAULT_SHEAR_RESIDUAL_SCALE,
            chunk: 64,
            mode: EvalMode::default(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Verification setup: no measurement data — the loss is the momentum
    /// and constitutive residuals with the manufactured body force plus
    /// the manufactured tractions on the horizontal edges. The exact
    /// solution satisfies the hard constraints and the pin by
    /// construction, so the trained network can be compared field by
    /// field.
    pub fn manufactured(
        geom: &BeamGeometry,
        mat: &Material,
        seed: u64,
    ) -> Result<(SpatialProblem, ManufacturedSolution)> {
        let ms = ManufacturedSolution::standard(geom, mat);
        let scaling = SpatialScaling::standard(geom, mat);
        let per_edge = 200;
        let mut boundary = Vec::with_capacity(2 * per_edge);
        for y_hat in [1.0, -1.0] {
            for i in 0..per_edge {
                let x_hat = -1.0 + 2.0 * (i as f64 + 0.5) / per_edge as f64;
                let out = ms.outputs(x_hat, y_hat);
                boundary.push(BoundaryPoint {
                    x_hat,
                    y_hat,
                    ny: y_hat,
                    t_hat: (out[4] * y_hat, out[3] * y_hat),
                });
            }
        }
        let p = SpatialProblem {
            net: default_net(seed),
            transform: hard_constraints(true),
            scaling,
            alpha: geom.alpha(),
            lam_hat: mat.lam_hat(),
            mu_hat: mat.mu_hat(),
            interior: interior_cloud(4000),
            boundary,
            fiber_compression: Vec::new(),
            fiber_tension: Vec::new(),
            rotation_grid: rotation_grid(),
            body_force: BodyForce::FromSolution(ms),
            w_pde: 1.0,
            w_bc: 1.0,
            w_exp_c: 0.0,
            w_exp_t: 0.0,
            w_rot: 1e-2,
            shear_residual_scale: DEFAULT_SHEAR_RESIDUAL_SCALE,
            chunk: 64,
            mode: EvalMode::default(),
        };
        p.validate()?;
        Ok((p, ms))
    }

    /// Drop the null-space controls: no ûy pin, no rotation penalty. The
    /// remaining constraints fix displacements only up to a vertical
    /// translation and a rotation.
    pub fn without_null_space_pinning(mut self) -> SpatialProblem {
        self.transform = hard_constraints(false);
        self.rotation_grid = Vec::new();
        self.w_rot = 0.0;
        self
    }

    fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if self.net.input_dim != 2 || self.net.output_dim != 5 {
            return Err(Error::usage(
                "spatial model must map 2 coordinates to 5 fields",
            ));
        }
        if self.transform.per_output.len() != 5 {
            return Err(Error::usage("output transform must cover the 5 fields"));
        }
        if self.w_pde > 0.0 && self.interior.is_empty() {
            return Err(Error::usage(
                "momentum/constitutive term enabled but no interior points given",
            ));
        }
        if self.w_bc > 0.0 && self.boundary.is_empty() {
            return Err(Error::usage("traction term enabled but no boundary points"));
        }
        for w in [self.w_pde, self.w_bc, self.w_exp_c, self.w_exp_t, self.w_rot] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::validation(
                    "loss weights must be finite and non-negative",
                ));
            }
        }
        if self.chunk == 0 {
            return Err(Error::usage("chunk size must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.mu_hat > 0.0 && self.lam_hat >= 0.0) {
            return Err(Error::validation("material/geometry coefficients invalid"));
        }
        Ok(())
    }

    pub fn init_store(&self) -> Result<ParamStore> {
        self.validate()?;
        ParamStore::init_glorot(&self.net)
    }

    pub fn objective<'a>(&'a self, store: &ParamStore) -> Result<SpatialObjective<'a>> {
        self.validate()?;
        Ok(SpatialObjective {
            problem: self,
            layers: store.layers.clone(),
            n_params: store.n_params(),
        })
    }
}

// ── Residuals ───────────────────────────────────────────────────────────

/// The five transformed field jets at one point, each carrying first
/// derivatives with respect to (x̂, ŷ).
pub struct FieldJets {
    pub ux: Jet,
    pub uy: Jet,
    pub sxx: Jet,
    pub syy: Jet,
    pub sxy: Jet,
}

impl FieldJets {
    pub fn from_array(f: [Jet; 5]) -> FieldJets {
        let [ux, uy, sxx, syy, sxy] = f;
        FieldJets { ux, uy, sxx, syy, sxy }
    }
}

/// Momentum balance residuals (r̂x, r̂y) in nondimensional units:
/// r̂x = ∂σ̂xx/∂x̂ + α·∂σ̂xy/∂ŷ + b̂x, r̂y = ∂σ̂xy/∂x̂ + α·∂σ̂yy/∂ŷ + b̂y.
pub fn residual_balance(
    tape: &mut Tape,
    f: &FieldJets,
    alpha: f64,
    body_hat: (f64, f64),
) -> Result<(VarId, VarId)> {
    let need = |j: &Jet| -> Result<(VarId, VarId)> {
        if j.d1.len() < 2 {
            return Err(Error::usage("balance residual needs 2D first-order jets"));
        }
        Ok((j.d1[0], j.d1[1]))
    };
    let (sxx_dx, _) = need(&f.sxx)?;
    let (sxy_dx, sxy_dy) = need(&f.sxy)?;
    let (_, syy_dy) = need(&f.syy)?;
    let mut rx = {
        let a = tape.scale(sxy_dy, alpha);
        tape.add(sxx_dx, a)
    };
    if body_hat.0 != 0.0 {
        let b = tape.constant(body_hat.0);
        rx = tape.add(rx, b);
    }
    let mut ry = {
        let a = tape.scale(syy_dy, alpha);
        tape.add(sxy_dx, a)
    };
    if body_hat.1 != 0.0 {
        let b = tape.constant(body_hat.1);
        ry = tape.add(ry, b);
    }
    Ok((rx, ry))
}

/// Constitutive residuals (r̂xx, r̂yy, r̂xy): stress outputs minus the
/// plane-stress law applied to the displacement gradients, using the
/// scaled kinematics ε̂xx = ∂ûx/∂x̂, ε̂yy = α·∂ûy/∂ŷ,
/// γ̂ = α·∂ûx/∂ŷ + ∂ûy/∂x̂.
pub fn residual_constitutive(
    tape: &mut Tape,
    f: &FieldJets,
    alpha: f64,
    lam_hat: f64,
    mu_hat: f64,
) -> Result<(VarId, VarId, VarId)> {
    if f.ux.d1.len() < 2 || f.uy.d1.len() < 2 {
        return Err(Error::usage(
            "constitutive residual needs 2D first-order jets",
        ));
    }
    let exx = f.ux.d1[0];
    let eyy = tape.scale(f.uy.d1[1], alpha);
    let gxy = {
        let a = tape.scale(f.ux.d1[1], alpha);
        tape.add(a, f.uy.d1[0])
    };
    let tr = tape.add(exx, eyy);
    let rxx = {
        let l = tape.scale(tr, lam_hat);
        let m = tape.scale(exx, 2.0 * mu_hat);
        let law = tape.add(l, m);
        tape.sub(f.sxx.val, law)
    };
    let ryy = {
        let l = tape.scale(tr, lam_hat);
        let m = tape.scale(eyy, 2.0 * mu_hat);
        let law = tape.add(l, m);
        tape.sub(f.syy.val, law)
    };
    let rxy = {
        let law = tape.scale(gxy, mu_hat);
        tape.sub(f.sxy.val, law)
    };
    Ok((rxx, ryy, rxy))
}

/// Longitudinal strain node ε̂xx = ∂ûx/∂x̂ in scaled units (multiply by
/// the scaling's strain unit for µε).
pub fn strain_xx_node(f: &FieldJets) -> Result<VarId> {
    if f.ux.d1.is_empty() {
        return Err(Error::usage("strain needs first-order jets"));
    }
    Ok(f.ux.d1[0])
}

/// In-plane rotation node ω̂ = ½(∂ûy/∂x̂ − α·∂ûx/∂ŷ).
pub fn rotation_node(tape: &mut Tape, f: &FieldJets, alpha: f64) -> Result<VarId> {
    if f.ux.d1.len() < 2 || f.uy.d1.len() < 2 {
        return Err(Error::usage("rotation needs 2D first-order jets"));
    }
    let a = tape.scale(f.ux.d1[1], alpha);
    let d = tape.sub(f.uy.d1[0], a);
    Ok(tape.scale(d, 0.5))
}

// ── Objective ───────────────────────────────────────────────────────────

/// The composite spatial loss. Component order (those present):
/// "pde" (momentum + constitutive MSE over interior points), "bc"
/// (traction mismatch MSE), "exp_c"/"exp_t" (fiber strain misfit MSE, in
/// scaled strain units), "rot" (squared mean rotation). Chunked with
/// per-chunk tapes and an in-order reduction: parallel ≡ sequential
/// bitwise.
pub struct SpatialObjective<'a> {
    problem: &'a SpatialProblem,
    layers: Vec<LayerLayout>,
    n_params: usize,
}

impl SpatialObjective<'_> {
    fn has_exp_c(&self) -> bool {
        !self.problem.fiber_compression.is_empty()
    }

    fn has_exp_t(&self) -> bool {
        !self.problem.fiber_tension.is_empty()
    }

    fn has_rot(&self) -> bool {
        !self.problem.rotation_grid.is_empty()
    }

    fn tape_for(&self, points: usize) -> Tape {
        let per_point = 6 * self.n_params / (self.layers.len() + 1) + 512;
        Tape::with_capacity(
            self.n_params + points * per_point,
            points * per_point,
        )
    }

    /// Transformed field jets for one point on a prepared tape.
    fn fields(
        &self,
        tape: &mut Tape,
        bound: &crate::network::Bound,
        x_hat: f64,
        y_hat: f64,
    ) -> Result<FieldJets> {
        let xj = Jet::seed(tape, x_hat, 0, 2, JetOrder::First)?;
        let yj = Jet::seed(tape, y_hat, 1, 2, JetOrder::First)?;
        let coords = [xj, yj];
        let raw = forward_jets(tape, &self.problem.net, &self.layers, bound, &coords)?;
        let out = self
            .problem
            .transform
            .apply_jets(tape, &coords, &raw)?;
        let mut it = out.into_iter();
        Ok(FieldJets {
            ux: it.next().unwrap(),
            uy: it.next().unwrap(),
            sxx: it.next().unwrap(),
            syy: it.next().unwrap(),
            sxy: it.next().unwrap(),
        })
    }

    /// Sum over one chunk of interior points of the five squared
    /// residuals, with its parameter gradient.
    fn pde_chunk(&self, x: &[f64], range: std::ops::Range<usize>) -> Result<(f64, Vec<f64>)> {
        let p = self.problem;
        let mut tape = self.tape_for(range.len());
        let bound = bind(&mut tape, x);
        let mut acc = tape.zero();
        for i in range {
            let (xh, yh) = p.interior[i];
            let f = self.fields(&mut tape, &bound, xh, yh)?;
            let body = p.body_force.eval_hat(xh, yh);
            let (rx, ry) = residual_balance(&mut tape, &f, p.alpha, body)?;
            let (rxx, ryy, rxy) = residual_constitutive(&mut tape, &f, p.alpha, p.lam_hat, p.mu_hat)?;
            let rxy = tape.scale(rxy, p.shear_residual_scale);
            for r in [rx, ry, rxx, ryy, rxy] {
                let sq = tape.square(r);
                acc = tape.add(acc, sq);
            }
        }
        let grad = tape.backward(acc)?;
        Ok((tape.value(acc), grad))
    }

    /// Sum over one chunk of boundary points of the squared traction
    /// mismatch (both components), with gradient. Values only — no jets.
    fn bc_chunk(&self, x: &[f64], range: std::ops::Range<usize>) -> Result<(f64, Vec<f64>)> {
        let p = self.problem;
        let mut tape = self.tape_for(range.len() / 2 + 1);
        let bound = bind(&mut tape, x);
        let mut acc = tape.zero();
        for i in range {
            let b = p.boundary[i];
            let x0 = tape.constant(b.x_hat);
            let y0 = tape.constant(b.y_hat);
            let raw = forward_values(&mut tape, &p.net, &self.layers, &bound, &[x0, y0])?;
            let out = p
                .transform
                .apply_values(&mut tape, &[b.x_hat, b.y_hat], &raw)?;
            // Traction on a horizontal edge: (σ̂xy·ny, σ̂yy·ny).
            for (sig, t) in [(out[4], b.t_hat.0), (out[3], b.t_hat.1)] {
                let tn = tape.scale(sig, b.ny);
                let target = tape.constant(t);
                let d = tape.sub(tn, target);
                let sq = tape.square(d);
                acc = tape.add(acc, sq);
            }
        }
        let grad = tape.backward(acc)?;
        Ok((tape.value(acc), grad))
    }

    /// Sum over one chunk of fiber samples of the squared strain misfit
    /// (scaled units), with gradient.
    fn fiber_chunk(
        &self,
        x: &[f64],
        samples: &[StrainSample],
        range: std::ops::Range<usize>,
    ) -> Result<(f64, Vec<f64>)> {
        let mut tape = self.tape_for(range.len());
        let bound = bind(&mut tape, x);
        let mut acc = tape.zero();
        for i in range {
            let s = samples[i];
            let f = self.fields(&mut tape, &bound, s.x_hat, s.y_hat)?;
            let exx = strain_xx_node(&f)?;
            let target = tape.constant(s.strain_scaled);
            let d = tape.sub(exx, target);
            let sq = tape.square(d);
            acc = tape.add(acc, sq);
        }
        let grad = tape.backward(acc)?;
        Ok((tape.value(acc), grad))
    }

    /// Sum of rotations over one chunk of the rotation grid, with the
    /// gradient of that sum (the squared-mean assembly happens in the
    /// reduction).
    fn rot_chunk(&self, x: &[f64], range: std::ops::Range<usize>) -> Result<(f64, Vec<f64>)> {
        let p = self.problem;
        let mut tape = self.tape_for(range.len());
        let bound = bind(&mut tape, x);
        let mut acc = tape.zero();
        for i in range {
            let (xh, yh) = p.rotation_grid[i];
            let f = self.fields(&mut tape, &bound, xh, yh)?;
            let w = rotation_node(&mut tape, &f, p.alpha)?;
            acc = tape.add(acc, w);
        }
        let grad = tape.backward(acc)?;
        Ok((tape.value(acc), grad))
    }

    fn reduce(parts: Vec<Result<(f64, Vec<f64>)>>, n_params: usize) -> Result<(f64, Vec<f64>)> {
        let mut total = 0.0;
        let mut grad = vec![0.0; n_params];
        for part in parts {
            let (s, g) = part?;
            total += s;
            for (gi, pi) in grad.iter_mut().zip(&g) {
                *gi += pi;
            }
        }
        Ok((total, grad))
    }
}

impl Objective for SpatialObjective<'_> {
    fn dim(&self) -> usize {
        self.n_params
    }

    fn component_names(&self) -> Vec<String> {
        let mut names = vec!["pde".to_string(), "bc".to_string()];
        if self.has_exp_c() {
            names.push("exp_c".to_string());
        }
        if self.has_exp_t() {
            names.push("exp_t".to_string());
        }
        if self.has_rot() {
            names.push("rot".to_string());
        }
        names
    }

    fn eval(&self, x: &[f64]) -> Result<ObjEval> {
        let p = self.problem;
        let mut components = Vec::new();
        let mut value = 0.0;
        let mut grad = vec![0.0; self.n_params];
        let add_term = |mse: f64, g: &[f64], w: f64, scale: f64,
                            value: &mut f64, grad: &mut Vec<f64>| {
            *value += w * mse;
            let s = w * scale;
            for (gi, pi) in grad.iter_mut().zip(g) {
                *gi += s * pi;
            }
        };

        {
            let n = p.interior.len();
            let parts = map_chunks(p.mode, n, p.chunk, |r| self.pde_chunk(x, r));
            let (ssr, g) = Self::reduce(parts, self.n_params)?;
            let mse = ssr / n as f64;
            components.push(mse);
            add_term(mse, &g, p.w_pde, 1.0 / n as f64, &mut value, &mut grad);
        }
        {
            let n = p.boundary.len();
            let parts = map_chunks(p.mode, n, p.chunk, |r| self.bc_chunk(x, r));
            let (ssr, g) = Self::reduce(parts, self.n_params)?;
            let mse = ssr / n as f64;
            components.push(mse);
            add_term(mse, &g, p.w_bc, 1.0 / n as f64, &mut value, &mut grad);
        }
        if self.has_exp_c() {
            let n = p.fiber_compression.len();
            let parts = map_chunks(p.mode, n, p.chunk, |r| {
                self.fiber_chunk(x, &p.fiber_compression, r)
            });
            let (ssr, g) = Self::reduce(parts, self.n_params)?;
            let mse = ssr / n as f64;
            components.push(mse);
            add_term(mse, &g, p.w_exp_c, 1.0 / n as f64, &mut value, &mut grad);
        }
        if self.has_exp_t() {
            let n = p.fiber_tension.len();
            let parts = map_chunks(p.mode, n, p.chunk, |r| {
                self.fiber_chunk(x, &p.fiber_tension, r)
            });
            let (ssr, g) = Self::reduce(parts, self.n_params)?;
            let mse = ssr / n as f64;
            components.push(mse);
            add_term(mse, &g, p.w_exp_t, 1.0 / n as f64, &mut value, &mut grad);
        }
        if self.has_rot() {
            let n = p.rotation_grid.len();
            let parts = map_chunks(p.mode, n, p.chunk, |r| self.rot_chunk(x, r));
            let (sum, g) = Self::reduce(parts, self.n_params)?;
            let mean = sum / n as f64;
            let l_rot = mean * mean;
            components.push(l_rot);
            add_term(
                l_rot,
                &g,
                p.w_rot,
                2.0 * mean / n as f64,
                &mut value,
                &mut grad,
            );
        }
        Ok(ObjEval {
            value,
            grad,
            components,
        })
    }
}

// ── Training, verification loss, and prediction ─────────────────────────

pub struct SpatialTrainResult {
    pub store: ParamStore,
    pub history: TrainHistory,
    pub adam_stop: StopReason,
    pub lbfgs_stop: StopReason,
}

/// Run the two-phase schedule on a spatial problem starting from `store`.
pub fn train_spatial(
    problem: &SpatialProblem,
    store: &ParamStore,
    cfg: &TrainConfig,
) -> Result<SpatialTrainResult> {
    let objective = problem.objective(store)?;
    let outcome = train_schedule(&objective, &store.flat, cfg)?;
    let final_loss = outcome.history.final_loss().unwrap_or(f64::NAN);
    if !final_loss.is_finite() {
        return Err(Error::Divergence(format!(
            "spatial training ended with non-finite loss {final_loss}"
        )));
    }
    let mut trained = store.clone();
    trained.flat = outcome.x;
    Ok(SpatialTrainResult {
        store: trained,
        history: outcome.history,
        adam_stop: outcome.adam_stop,
        lbfgs_stop: outcome.lbfgs_stop,
    })
}

/// Evaluate the problem's loss on a frozen manufactured solution instead
/// of the network: fields come from the closed forms recorded as jets, so
/// this exercises the same residual pipeline the objective uses. Returns
/// (total, components) in the objective's component order.
pub fn manufactured_loss(
    problem: &SpatialProblem,
    ms: &ManufacturedSolution,
) -> Result<(f64, Vec<f64>)> {
    let p = problem;
    let fields_at = |xh: f64, yh: f64| -> Result<(Tape, FieldJets)> {
        let mut tape = Tape::with_capacity(4096, 4096);
        let xj = Jet::seed(&mut tape, xh, 0, 2, JetOrder::First)?;
        let yj = Jet::seed(&mut tape, yh, 1, 2, JetOrder::First)?;
        let f = ms.record_jets(&mut tape, &xj, &yj)?;
        Ok((tape, FieldJets::from_array(f)))
    };
    let mut total = 0.0;
    let mut components = Vec::new();
    {
        let mut ssr = 0.0;
        for &(xh, yh) in &p.interior {
            let (mut tape, f) = fields_at(xh, yh)?;
            let body = p.body_force.eval_hat(xh, yh);
            let (rx, ry) = residual_balance(&mut tape, &f, p.alpha, body)?;
            let (rxx, ryy, rxy) =
                residual_constitutive(&mut tape, &f, p.alpha, p.lam_hat, p.mu_hat)?;
            let rxy = tape.scale(rxy, p.shear_residual_scale);
            for r in [rx, ry, rxx, ryy, rxy] {
                let v = tape.value(r);
                ssr += v * v;
            }
        }
        let mse = ssr / p.interior.len() as f64;
        components.push(mse);
        total += p.w_pde * mse;
    }
    {
        let mut ssr = 0.0;
        for b in &p.boundary {
            let out = ms.outputs(b.x_hat, b.y_hat);
            let dx = out[4] * b.ny - b.t_hat.0;
            let dy = out[3] * b.ny - b.t_hat.1;
            ssr += dx * dx + dy * dy;
        }
        let mse = ssr / p.boundary.len() as f64;
        components.push(mse);
        total += p.w_bc * mse;
    }
    if !p.rotation_grid.is_empty() {
        let mut sum = 0.0;
        for &(xh, yh) in &p.rotation_grid {
            let (mut tape, f) = fields_at(xh, yh)?;
            let w = rotation_node(&mut tape, &f, p.alpha)?;
            sum += tape.value(w);
        }
        let mean = sum / p.rotation_grid.len() as f64;
        components.push(mean * mean);
        total += p.w_rot * mean * mean;
    }
    Ok((total, components))
}

/// One evaluated field point in physical units.
#[derive(Clone, Copy, Debug)]
pub struct FieldPoint {
    pub x_m: f64,
    pub y_m: f64,
    pub ux_m: f64,
    pub uy_m: f64,
    pub sxx_pa: f64,
    pub syy_pa: f64,
    pub sxy_pa: f64,
    pub exx_microstrain: f64,
}

/// Evaluate displacements, stresses, and longitudinal strain at physical
/// points using the plain-float forward pass (one dual-number sweep per
/// point; no tape).
pub fn predict_field(
    net: &MlpSpec,
    transform: &OutputTransform,
    scaling: &SpatialScaling,
    store: &ParamStore,
    points_m: &[(f64, f64)],
) -> Vec<FieldPoint> {
    let unit = scaling.strain_unit_microstrain();
    points_m
        .iter()
        .map(|&(x_m, y_m)| {
            let coords = [scaling.x_hat(x_m), scaling.y_hat(y_m)];
            let (raw, draw) = eval_dual(net, store, &coords, 0);
            let (vals, ders) = transform.apply_dual(&coords, 0, &raw, &draw);
            FieldPoint {
                x_m,
                y_m,
                ux_m: vals[0] * scaling.disp_scale_m,
                uy_m: vals[1] * scaling.disp_scale_m,
                sxx_pa: vals[2] * scaling.stress_scale_pa,
                syy_pa: vals[3] * scaling.stress_scale_pa,
                sxy_pa: vals[4] * scaling.stress_scale_pa,
                exx_microstrain: ders[0] * unit,
            }
        })
        .collect()
}

/// Mean squared second difference of a sequence — the roughness metric
/// used to compare fiber predictions (units: value² per step⁴·step⁴…
/// i.e., the square of the discrete curvature). NaN for fewer than 3
/// values.
pub fn mean_sq_second_diff(values: &[f64]) -> f64 {
    if values.len() < 3 {
        return f64::NAN;
    }
    let n = values.len() - 2;
    values
        .windows(3)
        .map(|w| {
            let d = w[2] - 2.0 * w[1] + w[0];
            d * d
        })
        .sum::<f64>()
        / n as f64
}
