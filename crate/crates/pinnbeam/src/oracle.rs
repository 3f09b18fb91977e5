//! Closed-form reference solutions used to generate data and to
//! cross-check the learned models and the tape-based derivatives.
//!
//! Everything here is computed by ordinary floating-point arithmetic (plus
//! a small self-contained forward-mode type, [`Deriv2`]) and is completely
//! independent of the reverse-mode tape in [`crate::autodiff`] — which is
//! the point: when a tape-evaluated residual of one of these fields comes
//! out at machine zero, two unrelated derivative pipelines agreed.
//!
//! Contents:
//! - an undamped harmonic oscillation (the vibrating-sensor signal),
//! - Euler–Bernoulli bending strain for a simply supported beam under a
//!   symmetric four-point load, with an independent shear→moment
//!   quadrature cross-check,
//! - a manufactured plane-stress solution on the nondimensional square
//!   with the exact body force that makes it satisfy momentum balance.

use crate::autodiff::{
    jet_add, jet_cos, jet_mul, jet_scale, jet_sin, jet_square, jet_sub, Jet, Tape,
};
use crate::error::Result;

pub const MICROSTRAIN_PER_STRAIN: f64 = 1e6;

/// Strain of an undamped oscillation `amp · cos(√ω² · t)`, the exact
/// solution of `ε̈ + ω²ε = 0` with `ε(0) = amp`, `ε̇(0) = 0`. Units follow
/// `amp`.
pub fn harmonic_strain(amp: f64, omega_sq: f64, t: f64) -> f64 {
    amp * (omega_sq.sqrt() * t).cos()
}

// ── Beam bending ────────────────────────────────────────────────────────

/// Isotropic linear-elastic material.
#[derive(Clone, Copy, Debug)]
pub struct Material {
    /// Young's modulus [Pa].
    pub youngs: f64,
    /// Poisson's ratio [-].
    pub poisson: f64,
}

impl Material {
    /// Normal-grade structural concrete.
    pub fn concrete() -> Self {
        Material {
            youngs: 2.9e10,
            poisson: 0.2,
        }
    }

    /// First Lamé-like coefficient of the plane-stress law, normalized by
    /// Young's modulus: ν / (1 − ν²).
    pub fn lam_hat(&self) -> f64 {
        self.poisson / (1.0 - self.poisson * self.poisson)
    }

    /// Shear coefficient normalized by Young's modulus: 1 / (2(1 + ν)).
    pub fn mu_hat(&self) -> f64 {
        1.0 / (2.0 * (1.0 + self.poisson))
    }
}

/// Prismatic beam with a rectangular cross-section, centered on the
/// origin: x ∈ [−length/2, length/2], y ∈ [−height/2, height/2].
#[derive(Clone, Copy, Debug)]
pub struct BeamGeometry {
    pub length: f64,
    pub height: f64,
    pub breadth: f64,
}

impl BeamGeometry {
    pub fn default_lab_beam() -> Self {
        BeamGeometry {
            length: 3.0,
            height: 0.3,
            breadth: 0.2,
        }
    }

    /// Second moment of area of the rectangular section, b·h³/12.
    pub fn area_moment(&self) -> f64 {
        self.breadth * self.height.powi(3) / 12.0
    }

    /// Slenderness l/h; also the anisotropic stretch between the
    /// nondimensional square and the physical rectangle.
    pub fn alpha(&self) -> f64 {
        self.length / self.height
    }
}

/// Symmetric four-point bending: two downward loads of `total_force/2` at
/// x = ±load_x on the top edge, two supports at x = ±support_x on the
/// bottom edge, each spread over a contact patch of width `patch_width`.
#[derive(Clone, Copy, Debug)]
pub struct FourPointLoad {
    pub total_force: f64,
    pub load_x: f64,
    pub support_x: f64,
    pub patch_width: f64,
}

impl FourPointLoad {
    pub fn default_lab_load() -> Self {
        FourPointLoad {
            total_force: 10e3,
            load_x: 0.5,
            support_x: 1.4,
            patch_width: 0.1,
        }
    }

    /// Contact pressure on each patch [Pa]: half the total force spread
    /// over patch_width × breadth.
    pub fn patch_pressure(&self, geom: &BeamGeometry) -> f64 {
        0.5 * self.total_force / (self.patch_width * geom.breadth)
    }

    /// Bending moment of the point-load idealization (sagging positive):
    /// M(x) = (F/2)·(support_x − max(|x|, load_x)) between the supports,
    /// zero outside. Constant and maximal between the load points.
    pub fn bending_moment(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax >= self.support_x {
            0.0
        } else {
            0.5 * self.total_force * (self.support_x - ax.max(self.load_x))
        }
    }

    /// Load intensity [N/m] of the patch model: supports push up, loads
    /// push down, each with resultant F/2 spread uniformly over its patch.
    fn intensity(&self, x: f64) -> f64 {
        let per_patch = 0.5 * self.total_force / self.patch_width;
        let half = 0.5 * self.patch_width;
        let mut w = 0.0;
        if (x.abs() - self.support_x).abs() < half {
            w += per_patch;
        }
        if (x.abs() - self.load_x).abs() < half {
            w -= per_patch;
        }
        w
    }
}

/// Axial bending strain ε_xx(x, y) = −M(x)·y / (E·I) of the
/// Euler–Bernoulli model (dimensionless strain; multiply by
/// [`MICROSTRAIN_PER_STRAIN`] for µε).
pub fn euler_bernoulli_strain(
    geom: &BeamGeometry,
    mat: &Material,
    load: &FourPointLoad,
    x: f64,
    y: f64,
) -> f64 {
    -load.bending_moment(x) * y / (mat.youngs * geom.area_moment())
}

/// Bending moment at `x` recomputed from the distributed patch-load model
/// by numerical integration: midpoint quadrature of the intensity gives
/// the shear V at the cell nodes, trapezoid quadrature of V gives M. Both
/// rules are exact when every cell lies within one constant-intensity
/// interval, so pick `cells` such that patch edges land on the grid.
pub fn moment_by_quadrature(
    geom: &BeamGeometry,
    load: &FourPointLoad,
    x: f64,
    cells: usize,
) -> f64 {
    let x0 = -0.5 * geom.length;
    let h = (x - x0) / cells as f64;
    let mut shear = 0.0;
    let mut moment = 0.0;
    for k in 0..cells {
        let mid = x0 + (k as f64 + 0.5) * h;
        let shear_next = shear + load.intensity(mid) * h;
        moment += 0.5 * (shear + shear_next) * h;
        shear = shear_next;
    }
    moment
}

// ── Standalone second-order forward mode ────────────────────────────────

/// A value with its full set of first and second partial derivatives with
/// respect to two independent inputs. Self-contained forward-mode
/// arithmetic with no connection to the reverse-mode tape, so it can serve
/// as an independent witness for tape-computed derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Deriv2 {
    pub v: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dxy: f64,
    pub dyy: f64,
}

impl Deriv2 {
    pub fn constant(v: f64) -> Self {
        Deriv2 {
            v,
            dx: 0.0,
            dy: 0.0,
            dxx: 0.0,
            dxy: 0.0,
            dyy: 0.0,
        }
    }

    /// The first independent input, seeded with ∂/∂x = 1.
    pub fn var_x(v: f64) -> Self {
        Deriv2 {
            v,
            dx: 1.0,
            dy: 0.0,
            dxx: 0.0,
            dxy: 0.0,
            dyy: 0.0,
        }
    }

    /// The second independent input, seeded with ∂/∂y = 1.
    pub fn var_y(v: f64) -> Self {
        Deriv2 {
            v,
            dx: 0.0,
            dy: 1.0,
            dxx: 0.0,
            dxy: 0.0,
            dyy: 0.0,
        }
    }

    pub fn scale(self, c: f64) -> Self {
        Deriv2 {
            v: c * self.v,
            dx: c * self.dx,
            dy: c * self.dy,
            dxx: c * self.dxx,
            dxy: c * self.dxy,
            dyy: c * self.dyy,
        }
    }

    /// Chain rule for a scalar function with derivatives f′, f″ at `self.v`.
    fn chain(self, f: f64, f1: f64, f2: f64) -> Self {
        Deriv2 {
            v: f,
            dx: f1 * self.dx,
            dy: f1 * self.dy,
            dxx: f2 * self.dx * self.dx + f1 * self.dxx,
            dxy: f2 * self.dx * self.dy + f1 * self.dxy,
            dyy: f2 * self.dy * self.dy + f1 * self.dyy,
        }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn square(self) -> Self {
        self * self
    }

    pub fn powi(self, n: i32) -> Self {
        let f = self.v.powi(n);
        let f1 = n as f64 * self.v.powi(n - 1);
        let f2 = (n * (n - 1)) as f64 * self.v.powi(n - 2);
        self.chain(f, f1, f2)
    }
}

impl std::ops::Add for Deriv2 {
    type Output = Deriv2;
    fn add(self, b: Deriv2) -> Deriv2 {
        Deriv2 {
            v: self.v + b.v,
            dx: self.dx + b.dx,
            dy: self.dy + b.dy,
            dxx: self.dxx + b.dxx,
            dxy: self.dxy + b.dxy,
            dyy: self.dyy + b.dyy,
        }
    }
}

impl std::ops::Sub for Deriv2 {
    type Output = Deriv2;
    fn sub(self, b: Deriv2) -> Deriv2 {
        Deriv2 {
            v: self.v - b.v,
            dx: self.dx - b.dx,
            dy: self.dy - b.dy,
            dxx: self.dxx - b.dxx,
            dxy: self.dxy - b.dxy,
            dyy: self.dyy - b.dyy,
        }
    }
}

impl std::ops::Neg for Deriv2 {
    type Output = Deriv2;
    fn neg(self) -> Deriv2 {
        self.scale(-1.0)
    }
}

impl std::ops::Mul for Deriv2 {
    type Output = Deriv2;
    fn mul(self, b: Deriv2) -> Deriv2 {
        Deriv2 {
            v: self.v * b.v,
            dx: self.dx * b.v + self.v * b.dx,
            dy: self.dy * b.v + self.v * b.dy,
            dxx: self.dxx * b.v + 2.0 * self.dx * b.dx + self.v * b.dxx,
            dxy: self.dxy * b.v + self.dx * b.dy + self.dy * b.dx + self.v * b.dxy,
            dyy: self.dyy * b.v + 2.0 * self.dy * b.dy + self.v * b.dyy,
        }
    }
}

/// A scalar with first derivatives only (extracted from the second-order
/// data of a [`Deriv2`]).
#[derive(Clone, Copy, Debug)]
pub struct Grad1 {
    pub v: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Grad1 {
    fn lincomb(a: f64, u: Grad1, b: f64, w: Grad1) -> Grad1 {
        Grad1 {
            v: a * u.v + b * w.v,
            dx: a * u.dx + b * w.dx,
            dy: a * u.dy + b * w.dy,
        }
    }
}

// ── Manufactured plane-stress solution ──────────────────────────────────

/// All five nondimensional fields at one point, with the first gradients
/// of the stresses (enough to evaluate momentum balance).
pub struct ManufacturedPoint {
    pub ux: f64,
    pub uy: f64,
    pub sxx: Grad1,
    pub syy: Grad1,
    pub sxy: Grad1,
}

/// A displacement field on the nondimensional square (x̂, ŷ) ∈ [−1, 1]²
/// chosen so that every hard constraint of the beam problem holds exactly:
///
/// - ûx = Û·(x̂³ − 3x̂) vanishes at x̂ = 0 and has zero slope at x̂ = ±1,
/// - ûy = V̂ · m(x̂, ŷ) · (1 − x̂²)² · (sin(πŷ/2) + 1), where
///   m = (x̂² + ((ŷ+1)/2)²)/2 is the pin-well factor vanishing only at the
///   support pin (0, −1); ûy/m stays smooth, and the (1 − x̂²)² factor
///   kills σ̂xx and σ̂xy on the vertical edges.
///
/// ûy is even in x̂, so the mean in-plane rotation over any x̂-symmetric
/// point set is exactly zero. Stresses follow from the plane-stress law;
/// the body force returned by [`ManufacturedSolution::body_force_hat`]
/// makes the pair satisfy momentum balance identically.
#[derive(Clone, Copy, Debug)]
pub struct ManufacturedSolution {
    pub ux_amp: f64,
    pub uy_amp: f64,
    pub alpha: f64,
    pub lam_hat: f64,
    pub mu_hat: f64,
}

impl ManufacturedSolution {
    pub fn standard(geom: &BeamGeometry, mat: &Material) -> Self {
        ManufacturedSolution {
            ux_amp: 0.5,
            uy_amp: 0.4,
            alpha: geom.alpha(),
            lam_hat: mat.lam_hat(),
            mu_hat: mat.mu_hat(),
        }
    }

    /// Pin-well multiplier m(x̂, ŷ): quadratic bowl vanishing only at the
    /// pinned point (0, −1), scaled to 1 at the far corners (±1, 1).
    pub fn pin_well(xh: f64, yh: f64) -> f64 {
        let c = 0.5 * (yh + 1.0);
        0.5 * (xh * xh + c * c)
    }

    /// Both displacement components carried to second order.
    pub fn displacement(&self, xh: f64, yh: f64) -> (Deriv2, Deriv2) {
        let x = Deriv2::var_x(xh);
        let y = Deriv2::var_y(yh);
        let ux = (x.powi(3) - x.scale(3.0)).scale(self.ux_amp);
        let c = (y + Deriv2::constant(1.0)).scale(0.5);
        let m = (x.square() + c.square()).scale(0.5);
        let q = Deriv2::constant(1.0) - x.square();
        let s = y.scale(std::f64::consts::FRAC_PI_2).sin() + Deriv2::constant(1.0);
        let uy = (m * q.square() * s).scale(self.uy_amp);
        (ux, uy)
    }

    /// Fields and stress gradients, assembled from the second-order
    /// displacement data through the scaled kinematics
    /// ε̂xx = ∂ûx/∂x̂, ε̂yy = α·∂ûy/∂ŷ, γ̂ = α·∂ûx/∂ŷ + ∂ûy/∂x̂
    /// and the plane-stress law σ̂ = λ̂·tr(ε̂)·I + 2μ̂·ε̂ (σ̂xy = μ̂·γ̂).
    pub fn point(&self, xh: f64, yh: f64) -> ManufacturedPoint {
        let (ux, uy) = self.displacement(xh, yh);
        let a = self.alpha;
        let exx = Grad1 {
            v: ux.dx,
            dx: ux.dxx,
            dy: ux.dxy,
        };
        let eyy = Grad1 {
            v: a * uy.dy,
            dx: a * uy.dxy,
            dy: a * uy.dyy,
        };
        let gam = Grad1 {
            v: a * ux.dy + uy.dx,
            dx: a * ux.dxy + uy.dxx,
            dy: a * ux.dyy + uy.dxy,
        };
        let tr = Grad1::lincomb(1.0, exx, 1.0, eyy);
        ManufacturedPoint {
            ux: ux.v,
            uy: uy.v,
            sxx: Grad1::lincomb(self.lam_hat, tr, 2.0 * self.mu_hat, exx),
            syy: Grad1::lincomb(self.lam_hat, tr, 2.0 * self.mu_hat, eyy),
            sxy: Grad1::lincomb(self.mu_hat, gam, 0.0, exx),
        }
    }

    /// The five field values [ûx, ûy, σ̂xx, σ̂yy, σ̂xy].
    pub fn outputs(&self, xh: f64, yh: f64) -> [f64; 5] {
        let p = self.point(xh, yh);
        [p.ux, p.uy, p.sxx.v, p.syy.v, p.sxy.v]
    }

    /// The body force (b̂x, b̂y) that makes this solution satisfy
    /// r̂x = ∂σ̂xx/∂x̂ + α·∂σ̂xy/∂ŷ + b̂x = 0 and
    /// r̂y = ∂σ̂xy/∂x̂ + α·∂σ̂yy/∂ŷ + b̂y = 0 identically.
    pub fn body_force_hat(&self, xh: f64, yh: f64) -> (f64, f64) {
        let p = self.point(xh, yh);
        (
            -(p.sxx.dx + self.alpha * p.sxy.dy),
            -(p.sxy.dx + self.alpha * p.syy.dy),
        )
    }

    /// Record the five fields onto a tape as jets of the given coordinate
    /// jets. The stresses are built from hand-derived closed forms of the
    /// displacement gradients (not from the jets' own derivative
    /// components), so agreement between these jets and
    /// [`ManufacturedSolution::point`] checks both derivative pipelines at
    /// once.
    pub fn record_jets(&self, tape: &mut Tape, x: &Jet, y: &Jet) -> Result<[Jet; 5]> {
        let dim = x.dim();
        let order = x.order();
        let one = Jet::constant(tape, 1.0, dim, order);
        let half_pi = std::f64::consts::FRAC_PI_2;

        let x2 = jet_square(tape, x)?;
        let x3 = jet_mul(tape, &x2, x)?;
        // ûx = Û(x̂³ − 3x̂)
        let x_3 = jet_scale(tape, x, 3.0);
        let ux_core = jet_sub(tape, &x3, &x_3)?;
        let ux = jet_scale(tape, &ux_core, self.ux_amp);

        // Shared building blocks of ûy.
        let c = {
            let yp1 = jet_add(tape, y, &one)?;
            jet_scale(tape, &yp1, 0.5)
        };
        let m = {
            let c2 = jet_square(tape, &c)?;
            let sum = jet_add(tape, &x2, &c2)?;
            jet_scale(tape, &sum, 0.5)
        };
        let q = jet_sub(tape, &one, &x2)?;
        let q2 = jet_square(tape, &q)?;
        let y_half_pi = jet_scale(tape, y, half_pi);
        let s = {
            let sy = jet_sin(tape, &y_half_pi)?;
            jet_add(tape, &sy, &one)?
        };
        let uy = {
            let mq2 = jet_mul(tape, &m, &q2)?;
            let all = jet_mul(tape, &mq2, &s)?;
            jet_scale(tape, &all, self.uy_amp)
        };

        // Hand-derived displacement gradients as closed forms.
        // ε̂xx = ∂ûx/∂x̂ = Û(3x̂² − 3)
        let exx = {
            let three = Jet::constant(tape, 3.0, dim, order);
            let x2_3 = jet_scale(tape, &x2, 3.0);
            let d = jet_sub(tape, &x2_3, &three)?;
            jet_scale(tape, &d, self.ux_amp)
        };
        // ∂ûy/∂x̂ = V̂·s·(x̂q² − 4x̂mq)
        let duy_dx = {
            let xq2 = jet_mul(tape, x, &q2)?;
            let mq = jet_mul(tape, &m, &q)?;
            let xmq = jet_mul(tape, x, &mq)?;
            let xmq4 = jet_scale(tape, &xmq, 4.0);
            let inner = jet_sub(tape, &xq2, &xmq4)?;
            let si = jet_mul(tape, &s, &inner)?;
            jet_scale(tape, &si, self.uy_amp)
        };
        // ∂ûy/∂ŷ = V̂·q²·(c·s/2 + m·(π/2)·cos(πŷ/2))
        let duy_dy = {
            let cs = jet_mul(tape, &c, &s)?;
            let cs_half = jet_scale(tape, &cs, 0.5);
            let cosy = jet_cos(tape, &y_half_pi)?;
            let mcos = jet_mul(tape, &m, &cosy)?;
            let mcos_sc = jet_scale(tape, &mcos, half_pi);
            let inner = jet_add(tape, &cs_half, &mcos_sc)?;
            let qi = jet_mul(tape, &q2, &inner)?;
            jet_scale(tape, &qi, self.uy_amp)
        };

        // Scaled kinematics and plane-stress law. ∂ûx/∂ŷ = 0, so γ̂ is
        // just ∂ûy/∂x̂.
        let eyy = jet_scale(tape, &duy_dy, self.alpha);
        let tr = jet_add(tape, &exx, &eyy)?;
        let sxx = {
            let l = jet_scale(tape, &tr, self.lam_hat);
            let m2 = jet_scale(tape, &exx, 2.0 * self.mu_hat);
            jet_add(tape, &l, &m2)?
        };
        let syy = {
            let l = jet_scale(tape, &tr, self.lam_hat);
            let m2 = jet_scale(tape, &eyy, 2.0 * self.mu_hat);
            jet_add(tape, &l, &m2)?
        };
        let sxy = jet_scale(tape, &duy_dx, self.mu_hat);

        Ok([ux, uy, sxx, syy, sxy])
    }
}
