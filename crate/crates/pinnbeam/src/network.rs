//! Small dense feed-forward networks evaluated on the autodiff tape, plus
//! parameter storage and the multiplicative output transforms used to
//! enforce boundary conditions exactly.
//!
//! A network is described by [`MlpSpec`] (architecture + init seed) and its
//! parameters live in a [`ParamStore`]: one flat `f64` vector (weights
//! row-major, then biases, layer by layer, then named extra parameters)
//! with layout metadata. Optimizers treat the flat vector as the whole
//! state, so physics-level extra parameters such as a trainable squared
//! frequency ride along with the weights for free.
//!
//! Three evaluation paths exist, all computing the same function:
//! - [`forward_jets`]: tape-recorded with input-derivative jets, used in
//!   residual losses (differentiable with respect to parameters);
//! - [`forward_values`]: tape-recorded values only, used in data-misfit
//!   losses where no input derivatives are needed;
//! - [`eval_f64`] / [`eval_dual`]: plain float evaluation off the tape for
//!   prediction, with `eval_dual` carrying one directional derivative
//!   (forward-mode) for strain extraction from a trained displacement
//!   field. These also serve as an independent check on the tape paths in
//!   tests, since they share no code with the tape.

use crate::autodiff::{jet_add, jet_mul, jet_scale, jet_sin, jet_sub, jet_tanh, Jet, JetOrder, Tape, VarId};
use crate::error::{Error, Result};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Activation {
    Tanh,
    Sin,
}

/// Architecture description. `hidden` lists the width of each hidden layer.
#[derive(Clone, Debug)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    /// Seed for Glorot initialization; same spec + seed ⇒ identical
    /// parameters.
    pub seed: u64,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.input_dim) {
            return Err(Error::usage(format!(
                "input_dim must be 1 or 2, got {}",
                self.input_dim
            )));
        }
        if self.output_dim != 1 && self.output_dim != 5 {
            return Err(Error::usage(format!(
                "output_dim must be 1 (scalar field) or 5 (mixed-variable field), got {}",
                self.output_dim
            )));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::usage(
                "hidden layers must be non-empty with positive widths".to_string(),
            ));
        }
        Ok(())
    }

    /// Layer dimensions as (rows, cols) pairs, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for &w in &self.hidden {
            dims.push((w, prev));
            prev = w;
        }
        dims.push((self.output_dim, prev));
        dims
    }

    pub fn n_weights(&self) -> usize {
        self.layer_dims().iter().map(|&(r, c)| r * c + r).sum()
    }
}

/// Offsets of one layer inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerLayout {
    pub rows: usize,
    pub cols: usize,
    pub w: usize,
    pub b: usize,
}

/// Flat parameter vector plus layout metadata and named extra parameters.
#[derive(Clone, Debug)]
pub struct ParamStore {
    pub flat: Vec<f64>,
    pub layers: Vec<LayerLayout>,
    /// (name, offset into `flat`) for physics-level scalars appended after
    /// the network weights.
    pub extras: Vec<(String, usize)>,
}

impl ParamStore {
    /// Glorot-uniform initialization: weights from U(−g, g) with
    /// g = √(6/(fan_in+fan_out)), biases zero.
    pub fn init_glorot(spec: &MlpSpec) -> Result<ParamStore> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut flat = Vec::with_capacity(spec.n_weights());
        let mut layers = Vec::new();
        for (rows, cols) in spec.layer_dims() {
            let g = (6.0 / (rows + cols) as f64).sqrt();
            let dist = Uniform::new_inclusive(-g, g);
            let w = flat.len();
            for _ in 0..rows * cols {
                flat.push(dist.sample(&mut rng));
            }
            let b = flat.len();
            flat.extend(std::iter::repeat(0.0).take(rows));
            layers.push(LayerLayout { rows, cols, w, b });
        }
        Ok(ParamStore {
            flat,
            layers,
            extras: Vec::new(),
        })
    }

    /// Append a named scalar parameter; returns its offset.
    pub fn push_extra(&mut self, name: &str, value: f64) -> usize {
        let off = self.flat.len();
        self.flat.push(value);
        self.extras.push((name.to_string(), off));
        off
    }

    pub fn extra_offset(&self, name: &str) -> Option<usize> {
        self.extras
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, off)| off)
    }

    pub fn n_params(&self) -> usize {
        self.flat.len()
    }

    /// Serialize to a line-oriented text format. Values are written with
    /// Rust's shortest-roundtrip float formatting, so loading reproduces
    /// every bit.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("pinnbeam-params v1\n");
        out.push_str(&format!("layers {}\n", self.layers.len()));
        for l in &self.layers {
            out.push_str(&format!("layer {} {} {} {}\n", l.rows, l.cols, l.w, l.b));
        }
        out.push_str(&format!("extras {}\n", self.extras.len()));
        for (name, off) in &self.extras {
            out.push_str(&format!("extra {name} {off}\n"));
        }
        out.push_str(&format!("values {}\n", self.flat.len()));
        for v in &self.flat {
            out.push_str(&format!("{v}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<ParamStore> {
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, &str)> {
            lines
                .next()
                .map(|(i, l)| (i + 1, l))
                .ok_or_else(|| Error::Parse {
                    line: 0,
                    message: format!("unexpected end of input, expected {what}"),
                })
        };
        let (ln, header) = next("header")?;
        if header != "pinnbeam-params v1" {
            return Err(Error::Parse {
                line: ln,
                message: format!("unrecognized header {header:?}"),
            });
        }
        let parse_count = |ln: usize, line: &str, key: &str| -> Result<usize> {
            let rest = line.strip_prefix(key).ok_or_else(|| Error::Parse {
                line: ln,
                message: format!("expected {key:?} line, got {line:?}"),
            })?;
            rest.trim().parse().map_err(|e| Error::Parse {
                line: ln,
                message: format!("bad count: {e}"),
            })
        };
        let (ln, l) = next("layers count")?;
        let n_layers = parse_count(ln, l, "layers ")?;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let (ln, l) = next("layer line")?;
            let fields: Vec<&str> = l.split_whitespace().collect();
            if fields.len() != 5 || fields[0] != "layer" {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("malformed layer line {l:?}"),
                });
            }
            let nums: Result<Vec<usize>> = fields[1..]
                .iter()
                .map(|s| {
                    s.parse().map_err(|e| Error::Parse {
                        line: ln,
                        message: format!("bad layer field: {e}"),
                    })
                })
                .collect();
            let nums = nums?;
            layers.push(LayerLayout {
                rows: nums[0],
                cols: nums[1],
                w: nums[2],
                b: nums[3],
            });
        }
        let (ln, l) = next("extras count")?;
        let n_extras = parse_count(ln, l, "extras ")?;
        let mut extras = Vec::with_capacity(n_extras);
        for _ in 0..n_extras {
            let (ln, l) = next("extra line")?;
            let fields: Vec<&str> = l.split_whitespace().collect();
            if fields.len() != 3 || fields[0] != "extra" {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("malformed extra line {l:?}"),
                });
            }
            let off = fields[2].parse().map_err(|e| Error::Parse {
                line: ln,
                message: format!("bad extra offset: {e}"),
            })?;
            extras.push((fields[1].to_string(), off));
        }
        let (ln, l) = next("values count")?;
        let n_values = parse_count(ln, l, "values ")?;
        let mut flat = Vec::with_capacity(n_values);
        for _ in 0..n_values {
            let (ln, l) = next("value line")?;
            let v: f64 = l.trim().parse().map_err(|e| Error::Parse {
                line: ln,
                message: format!("bad value: {e}"),
            })?;
            flat.push(v);
        }
        Ok(ParamStore {
            flat,
            layers,
            extras,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &std::path::Path) -> Result<ParamStore> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        ParamStore::from_text(&text)
    }
}

/// Tape leaves for every entry of a flat parameter vector, in order. Bind
/// once per tape and reuse across all points evaluated on that tape.
pub struct Bound {
    pub ids: Vec<VarId>,
}

pub fn bind(tape: &mut Tape, flat: &[f64]) -> Bound {
    Bound {
        ids: flat.iter().map(|&v| tape.leaf(v)).collect(),
    }
}

fn check_inputs(spec: &MlpSpec, n_inputs: usize) -> Result<()> {
    if n_inputs != spec.input_dim {
        return Err(Error::usage(format!(
            "network expects {} input(s), got {n_inputs}",
            spec.input_dim
        )));
    }
    Ok(())
}

/// Forward pass with jet inputs. Each neuron records one fused dot node per
/// derivative stream (value, each ∂/∂x_i, optionally each ∂²/∂x_i²), since
/// weights carry no input-derivatives — the affine map acts on every stream
/// independently, with the bias entering only the value stream.
pub fn forward_jets(
    tape: &mut Tape,
    spec: &MlpSpec,
    layers: &[LayerLayout],
    bound: &Bound,
    inputs: &[Jet],
) -> Result<Vec<Jet>> {
    check_inputs(spec, inputs.len())?;
    let dim = inputs[0].dim();
    let order = inputs[0].order();
    for j in inputs {
        if j.dim() != dim || j.order() != order {
            return Err(Error::usage(
                "network inputs must share jet dimension and order".to_string(),
            ));
        }
    }
    let n_layers = layers.len();
    let mut acts: Vec<Jet> = inputs.to_vec();
    for (li, l) in layers.iter().enumerate() {
        let mut next = Vec::with_capacity(l.rows);
        let vals: Vec<VarId> = acts.iter().map(|j| j.val).collect();
        let d1s: Vec<Vec<VarId>> =
            (0..dim).map(|k| acts.iter().map(|j| j.d1[k]).collect()).collect();
        let d2s: Option<Vec<Vec<VarId>>> = match order {
            JetOrder::Second => Some(
                (0..dim)
                    .map(|k| acts.iter().map(|j| j.d2.as_ref().unwrap()[k]).collect())
                    .collect(),
            ),
            JetOrder::First => None,
        };
        for r in 0..l.rows {
            let wrow = &bound.ids[l.w + r * l.cols..l.w + (r + 1) * l.cols];
            let bias = bound.ids[l.b + r];
            let z_raw = tape.dot_zip(wrow, &vals)?;
            let z_val = tape.add(z_raw, bias);
            let z_d1: Vec<VarId> = d1s
                .iter()
                .map(|col| tape.dot_zip(wrow, col))
                .collect::<Result<_>>()?;
            let z_d2: Option<Vec<VarId>> = match &d2s {
                Some(cols) => Some(
                    cols.iter()
                        .map(|col| tape.dot_zip(wrow, col))
                        .collect::<Result<_>>()?,
                ),
                None => None,
            };
            let z = Jet {
                val: z_val,
                d1: z_d1,
                d2: z_d2,
            };
            let out = if li + 1 < n_layers {
                match spec.activation {
                    Activation::Tanh => jet_tanh(tape, &z)?,
                    Activation::Sin => jet_sin(tape, &z)?,
                }
            } else {
                z
            };
            next.push(out);
        }
        acts = next;
    }
    Ok(acts)
}

/// Forward pass recording only values (no input derivatives); used by data
/// losses. Gradients with respect to parameters still flow through the
/// recorded nodes.
pub fn forward_values(
    tape: &mut Tape,
    spec: &MlpSpec,
    layers: &[LayerLayout],
    bound: &Bound,
    inputs: &[VarId],
) -> Result<Vec<VarId>> {
    check_inputs(spec, inputs.len())?;
    let n_layers = layers.len();
    let mut acts: Vec<VarId> = inputs.to_vec();
    for (li, l) in layers.iter().enumerate() {
        let mut next = Vec::with_capacity(l.rows);
        for r in 0..l.rows {
            let wrow = &bound.ids[l.w + r * l.cols..l.w + (r + 1) * l.cols];
            let bias = bound.ids[l.b + r];
            let z_raw = tape.dot_zip(wrow, &acts)?;
            let z = tape.add(z_raw, bias);
            let out = if li + 1 < n_layers {
                match spec.activation {
                    Activation::Tanh => tape.tanh(z),
                    Activation::Sin => tape.sin(z),
                }
            } else {
                z
            };
            next.push(out);
        }
        acts = next;
    }
    Ok(acts)
}

/// Plain float forward pass (no tape). Shares no code with the tape paths,
/// which makes it a useful independent check in tests.
pub fn eval_f64(spec: &MlpSpec, store: &ParamStore, x: &[f64]) -> Vec<f64> {
    let mut acts = x.to_vec();
    let n_layers = store.layers.len();
    for (li, l) in store.layers.iter().enumerate() {
        let mut next = vec![0.0; l.rows];
        for r in 0..l.rows {
            let mut z = store.flat[l.b + r];
            let wrow = &store.flat[l.w + r * l.cols..l.w + (r + 1) * l.cols];
            for (w, a) in wrow.iter().zip(&acts) {
                z += w * a;
            }
            next[r] = if li + 1 < n_layers {
                match spec.activation {
                    Activation::Tanh => z.tanh(),
                    Activation::Sin => z.sin(),
                }
            } else {
                z
            };
        }
        acts = next;
    }
    acts
}

/// Forward pass carrying one directional derivative `d/dx_dir` alongside the
/// value (plain floats, no tape).
pub fn eval_dual(
    spec: &MlpSpec,
    store: &ParamStore,
    x: &[f64],
    dir: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut acts = x.to_vec();
    let mut dacts: Vec<f64> = (0..x.len()).map(|i| if i == dir { 1.0 } else { 0.0 }).collect();
    let n_layers = store.layers.len();
    for (li, l) in store.layers.iter().enumerate() {
        let mut next = vec![0.0; l.rows];
        let mut dnext = vec![0.0; l.rows];
        for r in 0..l.rows {
            let mut z = store.flat[l.b + r];
            let mut dz = 0.0;
            let wrow = &store.flat[l.w + r * l.cols..l.w + (r + 1) * l.cols];
            for ((w, a), da) in wrow.iter().zip(&acts).zip(&dacts) {
                z += w * a;
                dz += w * da;
            }
            if li + 1 < n_layers {
                match spec.activation {
                    Activation::Tanh => {
                        let v = z.tanh();
                        next[r] = v;
                        dnext[r] = (1.0 - v * v) * dz;
                    }
                    Activation::Sin => {
                        next[r] = z.sin();
                        dnext[r] = z.cos() * dz;
                    }
                }
            } else {
                next[r] = z;
                dnext[r] = dz;
            }
        }
        acts = next;
        dacts = dnext;
    }
    (acts, dacts)
}

// ── Output transforms ───────────────────────────────────────────────────

/// Closed-form coordinate function used as a transform multiplier or offset.
/// Evaluable as plain floats, as jets on a tape, and as (value, directional
/// derivative) duals, so every network evaluation path can apply the same
/// transform.
#[derive(Clone, Debug, PartialEq)]
pub enum CoordExpr {
    Zero,
    One,
    /// The coordinate with the given index.
    Coord(usize),
    /// `(1 − c)(1 + c)` on coordinate `0`: vanishes exactly at c = ±1.
    /// The factored form keeps the zeros exact in floating point.
    SpanWindow,
    /// `scale · (((c0 − cx)/sx)² + ((c1 − cy)/sy)²)`: vanishes only at the
    /// pin point (cx, cy); used to pin a displacement component.
    PinWell {
        cx: f64,
        cy: f64,
        inv_sx: f64,
        inv_sy: f64,
        scale: f64,
    },
}

impl CoordExpr {
    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        match *self {
            CoordExpr::Zero => 0.0,
            CoordExpr::One => 1.0,
            CoordExpr::Coord(i) => x[i],
            CoordExpr::SpanWindow => (1.0 - x[0]) * (1.0 + x[0]),
            CoordExpr::PinWell {
                cx,
                cy,
                inv_sx,
                inv_sy,
                scale,
            } => {
                let dx = (x[0] - cx) * inv_sx;
                let dy = (x[1] - cy) * inv_sy;
                scale * (dx * dx + dy * dy)
            }
        }
    }

    /// (value, d/dx_dir) at `x`.
    pub fn eval_dual(&self, x: &[f64], dir: usize) -> (f64, f64) {
        match *self {
            CoordExpr::Zero => (0.0, 0.0),
            CoordExpr::One => (1.0, 0.0),
            CoordExpr::Coord(i) => (x[i], if i == dir { 1.0 } else { 0.0 }),
            CoordExpr::SpanWindow => {
                let v = (1.0 - x[0]) * (1.0 + x[0]);
                let d = if dir == 0 { -2.0 * x[0] } else { 0.0 };
                (v, d)
            }
            CoordExpr::PinWell {
                cx,
                cy,
                inv_sx,
                inv_sy,
                scale,
            } => {
                let dx = (x[0] - cx) * inv_sx;
                let dy = (x[1] - cy) * inv_sy;
                let v = scale * (dx * dx + dy * dy);
                let d = match dir {
                    0 => scale * 2.0 * dx * inv_sx,
                    1 => scale * 2.0 * dy * inv_sy,
                    _ => 0.0,
                };
                (v, d)
            }
        }
    }

    pub fn eval_jet(&self, tape: &mut Tape, coords: &[Jet]) -> Result<Jet> {
        let dim = coords[0].dim();
        let order = coords[0].order();
        match *self {
            CoordExpr::Zero => Ok(Jet::constant(tape, 0.0, dim, order)),
            CoordExpr::One => Ok(Jet::constant(tape, 1.0, dim, order)),
            CoordExpr::Coord(i) => {
                if i >= coords.len() {
                    return Err(Error::usage(format!(
                        "transform references coordinate {i} but only {} exist",
                        coords.len()
                    )));
                }
                Ok(coords[i].clone())
            }
            CoordExpr::SpanWindow => {
                let one = Jet::constant(tape, 1.0, dim, order);
                let lo = jet_sub(tape, &one, &coords[0])?;
                let hi = jet_add(tape, &one, &coords[0])?;
                jet_mul(tape, &lo, &hi)
            }
            CoordExpr::PinWell {
                cx,
                cy,
                inv_sx,
                inv_sy,
                scale,
            } => {
                let cxj = Jet::constant(tape, cx, dim, order);
                let cyj = Jet::constant(tape, cy, dim, order);
                let dx = jet_sub(tape, &coords[0], &cxj)?;
                let dx = jet_scale(tape, &dx, inv_sx);
                let dy = jet_sub(tape, &coords[1], &cyj)?;
                let dy = jet_scale(tape, &dy, inv_sy);
                let dx2 = jet_mul(tape, &dx, &dx)?;
                let dy2 = jet_mul(tape, &dy, &dy)?;
                let s = jet_add(tape, &dx2, &dy2)?;
                Ok(jet_scale(tape, &s, scale))
            }
        }
    }
}

/// Per-output affine transform `out_i = multiplier_i(x)·raw_i + offset_i(x)`
/// applied after the network. Multipliers that vanish on a boundary enforce
/// the corresponding condition exactly, independent of the weights.
#[derive(Clone, Debug)]
pub struct OutputTransform {
    pub per_output: Vec<(CoordExpr, CoordExpr)>,
}

impl OutputTransform {
    pub fn identity(n_outputs: usize) -> OutputTransform {
        OutputTransform {
            per_output: vec![(CoordExpr::One, CoordExpr::Zero); n_outputs],
        }
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if self.per_output.len() != n {
            return Err(Error::usage(format!(
                "transform covers {} outputs but network has {n}",
                self.per_output.len()
            )));
        }
        Ok(())
    }

    /// Apply on the tape with full jet propagation (product rule against the
    /// multiplier's own derivatives).
    pub fn apply_jets(&self, tape: &mut Tape, coords: &[Jet], raw: &[Jet]) -> Result<Vec<Jet>> {
        self.check_len(raw.len())?;
        let mut out = Vec::with_capacity(raw.len());
        for ((mult, offset), r) in self.per_output.iter().zip(raw) {
            let m = mult.eval_jet(tape, coords)?;
            let o = offset.eval_jet(tape, coords)?;
            let mr = jet_mul(tape, &m, r)?;
            out.push(jet_add(tape, &mr, &o)?);
        }
        Ok(out)
    }

    /// Apply on the tape to value-only outputs.
    pub fn apply_values(
        &self,
        tape: &mut Tape,
        coords_f64: &[f64],
        raw: &[VarId],
    ) -> Result<Vec<VarId>> {
        self.check_len(raw.len())?;
        let mut out = Vec::with_capacity(raw.len());
        for ((mult, offset), &r) in self.per_output.iter().zip(raw) {
            let m = mult.eval_f64(coords_f64);
            let o = offset.eval_f64(coords_f64);
            let mnode = tape.constant(m);
            let mr = tape.mul(mnode, r);
            let onode = tape.constant(o);
            out.push(tape.add(mr, onode));
        }
        Ok(out)
    }

    pub fn apply_f64(&self, coords: &[f64], raw: &[f64]) -> Vec<f64> {
        self.per_output
            .iter()
            .zip(raw)
            .map(|((m, o), &r)| m.eval_f64(coords) * r + o.eval_f64(coords))
            .collect()
    }

    /// Apply to (value, directional-derivative) pairs.
    pub fn apply_dual(
        &self,
        coords: &[f64],
        dir: usize,
        raw: &[f64],
        draw: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let mut vals = Vec::with_capacity(raw.len());
        let mut ders = Vec::with_capacity(raw.len());
        for ((m, o), (&r, &dr)) in self.per_output.iter().zip(raw.iter().zip(draw)) {
            let (mv, md) = m.eval_dual(coords, dir);
            let (ov, od) = o.eval_dual(coords, dir);
            vals.push(mv * r + ov);
            ders.push(mv * dr + md * r + od);
        }
        (vals, ders)
    }
}
