//! Synthetic measurement generation and the CSV layer shared by every
//! dataset the tools read or write.
//!
//! Two kinds of records exist:
//! - time series from a single strain sensor on the compression fiber
//!   (`t_s,strain_microstrain`),
//! - distributed fiber scans along the two embedded fibers
//!   (`x_m,y_m,strain_microstrain,damaged`).
//!
//! Clean values come from the closed forms in [`crate::oracle`]; Gaussian
//! noise and localized crack amplification are layered on top with a
//! seeded RNG so every dataset is reproducible bit for bit.

use crate::error::{Error, Result};
use crate::oracle::{
    euler_bernoulli_strain, harmonic_strain, BeamGeometry, FourPointLoad, Material,
    MICROSTRAIN_PER_STRAIN,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::path::Path;

// ── Records ─────────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorSample {
    pub t_s: f64,
    /// Strain in microstrain.
    pub strain: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SensorSeries {
    pub samples: Vec<SensorSample>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberPoint {
    pub x_m: f64,
    pub y_m: f64,
    /// Strain in microstrain.
    pub strain: f64,
    pub damaged: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FiberScan {
    pub points: Vec<FiberPoint>,
}

impl SensorSeries {
    /// Split into (t ≤ cut, t > cut).
    pub fn split_at(&self, t_cut: f64) -> (SensorSeries, SensorSeries) {
        let (a, b) = self.samples.iter().partition(|s| s.t_s <= t_cut);
        (SensorSeries { samples: a }, SensorSeries { samples: b })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s,strain_microstrain\n");
        for s in &self.samples {
            out.push_str(&format!("{},{}\n", s.t_s, s.strain));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<SensorSeries> {
        let mut lines = text.lines().enumerate();
        expect_header(&mut lines, "t_s,strain_microstrain")?;
        let mut samples = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields = split_fields(idx, line, 2)?;
            samples.push(SensorSample {
                t_s: parse_f64(idx, fields[0])?,
                strain: parse_f64(idx, fields[1])?,
            });
        }
        Ok(SensorSeries { samples })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<SensorSeries> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_csv(&text)
    }
}

impl FiberScan {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x_m,y_m,strain_microstrain,damaged\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.x_m,
                p.y_m,
                p.strain,
                if p.damaged { 1 } else { 0 }
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<FiberScan> {
        let mut lines = text.lines().enumerate();
        expect_header(&mut lines, "x_m,y_m,strain_microstrain,damaged")?;
        let mut points = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields = split_fields(idx, line, 4)?;
            let damaged = match fields[3] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        line: idx + 1,
                        message: format!("damaged flag must be 0 or 1, got {other:?}"),
                    })
                }
            };
            points.push(FiberPoint {
                x_m: parse_f64(idx, fields[0])?,
                y_m: parse_f64(idx, fields[1])?,
                strain: parse_f64(idx, fields[2])?,
                damaged,
            });
        }
        Ok(FiberScan { points })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<FiberScan> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_csv(&text)
    }
}

fn expect_header<'a, I>(lines: &mut I, want: &str) -> Result<()>
where
    I: Iterator<Item = (usize, &'a str)>,
{
    match lines.next() {
        Some((_, line)) if line.trim_end() == want => Ok(()),
        Some((idx, line)) => Err(Error::Parse {
            line: idx + 1,
            message: format!("expected header {want:?}, got {line:?}"),
        }),
        None => Err(Error::Parse {
            line: 1,
            message: format!("empty file, expected header {want:?}"),
        }),
    }
}

fn split_fields(idx: usize, line: &str, want: usize) -> Result<Vec<&str>> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != want {
        return Err(Error::Parse {
            line: idx + 1,
            message: format!("expected {want} comma-separated fields, got {}", fields.len()),
        });
    }
    Ok(fields)
}

fn parse_f64(idx: usize, field: &str) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Parse {
        line: idx + 1,
        message: format!("not a number: {field:?}"),
    })
}

// ── Noise and damage models ─────────────────────────────────────────────

/// Zero-mean Gaussian measurement noise. `sigma = 0` means exact data and
/// draws nothing from the RNG.
#[derive(Clone, Copy, Debug)]
pub struct NoiseModel {
    /// Standard deviation in microstrain.
    pub sigma: f64,
}

impl NoiseModel {
    pub fn draw(&self, rng: &mut ChaCha8Rng, n: usize) -> Result<Vec<f64>> {
        if self.sigma == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let normal = Normal::new(0.0, self.sigma)
            .map_err(|e| Error::validation(format!("invalid noise sigma: {e}")))?;
        Ok((0..n).map(|_| normal.sample(rng)).collect())
    }
}

/// Localized cracking on the tension fiber: inside each crack interval the
/// measured strain is amplified by a fixed factor and the point is flagged
/// as damaged.
#[derive(Clone, Debug)]
pub struct CrackModel {
    pub centers: Vec<f64>,
    pub width: f64,
    pub amplification: f64,
}

impl CrackModel {
    pub fn default_two_cracks() -> Self {
        CrackModel {
            centers: vec![-0.4, 0.4],
            width: 0.15,
            amplification: 2.5,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.centers.iter().any(|c| (x - c).abs() <= 0.5 * self.width)
    }
}

// ── Synthesis ───────────────────────────────────────────────────────────

/// Recipe for the vibrating-sensor time series: an undamped harmonic
/// oscillation sampled at a fixed rate, plus optional Gaussian noise.
#[derive(Clone, Copy, Debug)]
pub struct TemporalDataSpec {
    /// Oscillation amplitude in microstrain (negative on the compression
    /// fiber).
    pub amp: f64,
    /// Squared angular frequency [1/s²].
    pub omega_sq: f64,
    pub rate_hz: f64,
    pub duration_s: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for TemporalDataSpec {
    fn default() -> Self {
        TemporalDataSpec {
            amp: -293.0,
            omega_sq: 9.87,
            rate_hz: 10.0,
            duration_s: 16.0,
            noise_sigma: 3.0,
            seed: 0,
        }
    }
}

pub fn synth_temporal(spec: &TemporalDataSpec) -> Result<SensorSeries> {
    if spec.rate_hz <= 0.0 || spec.duration_s <= 0.0 {
        return Err(Error::validation(
            "sampling rate and duration must be positive",
        ));
    }
    let n = (spec.duration_s * spec.rate_hz).round() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = NoiseModel {
        sigma: spec.noise_sigma,
    }
    .draw(&mut rng, n)?;
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 / spec.rate_hz;
            SensorSample {
                t_s: t,
                strain: harmonic_strain(spec.amp, spec.omega_sq, t) + noise[k],
            }
        })
        .collect();
    Ok(SensorSeries { samples })
}

/// Recipe for the two embedded fiber scans. The compression fiber sits
/// `fiber_inset` below the top surface, the tension fiber the same
/// distance above the bottom surface; both span the full beam length.
#[derive(Clone, Debug)]
pub struct FiberDataSpec {
    pub geom: BeamGeometry,
    pub mat: Material,
    pub load: FourPointLoad,
    pub n_compression: usize,
    pub n_tension: usize,
    /// Distance of each fiber from its nearest surface [m].
    pub fiber_inset: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub cracks: Option<CrackModel>,
}

impl Default for FiberDataSpec {
    fn default() -> Self {
        FiberDataSpec {
            geom: BeamGeometry::default_lab_beam(),
            mat: Material::concrete(),
            load: FourPointLoad::default_lab_load(),
            n_compression: 200,
            n_tension: 100,
            fiber_inset: 0.03,
            noise_sigma: 2.0,
            seed: 0,
            cracks: Some(CrackModel::default_two_cracks()),
        }
    }
}

/// The three scans one synthesis produces. `tension` and
/// `tension_undamaged` share the same noise realization, so they differ
/// only by the crack amplification — which makes the undamaged variant a
/// fair reference when scoring how a model handles the damaged one.
pub struct FiberData {
    pub compression: FiberScan,
    pub tension: FiberScan,
    pub tension_undamaged: FiberScan,
}

pub fn synth_fiber_scans(spec: &FiberDataSpec) -> Result<FiberData> {
    if spec.n_compression < 2 || spec.n_tension < 2 {
        return Err(Error::validation("each fiber needs at least two points"));
    }
    let y_comp = 0.5 * spec.geom.height - spec.fiber_inset;
    let y_tens = -y_comp;
    let half = 0.5 * spec.geom.length;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = NoiseModel {
        sigma: spec.noise_sigma,
    };
    let noise_comp = noise.draw(&mut rng, spec.n_compression)?;
    let noise_tens = noise.draw(&mut rng, spec.n_tension)?;

    let clean = |x: f64, y: f64| {
        euler_bernoulli_strain(&spec.geom, &spec.mat, &spec.load, x, y) * MICROSTRAIN_PER_STRAIN
    };
    let linspace = |i: usize, n: usize| -half + spec.geom.length * i as f64 / (n - 1) as f64;

    let compression = FiberScan {
        points: (0..spec.n_compression)
            .map(|i| {
                let x = linspace(i, spec.n_compression);
                FiberPoint {
                    x_m: x,
                    y_m: y_comp,
                    strain: clean(x, y_comp) + noise_comp[i],
                    damaged: false,
                }
            })
            .collect(),
    };
    let mut tension = FiberScan {
        points: Vec::with_capacity(spec.n_tension),
    };
    let mut tension_undamaged = FiberScan {
        points: Vec::with_capacity(spec.n_tension),
    };
    for i in 0..spec.n_tension {
        let x = linspace(i, spec.n_tension);
        let base = clean(x, y_tens);
        let damaged = spec.cracks.as_ref().is_some_and(|c| c.contains(x));
        let factor = if damaged {
            spec.cracks.as_ref().map(|c| c.amplification).unwrap_or(1.0)
        } else {
            1.0
        };
        tension.points.push(FiberPoint {
            x_m: x,
            y_m: y_tens,
            strain: factor * base + noise_tens[i],
            damaged,
        });
        tension_undamaged.points.push(FiberPoint {
            x_m: x,
            y_m: y_tens,
            strain: base + noise_tens[i],
            damaged: false,
        });
    }
    Ok(FiberData {
        compression,
        tension,
        tension_undamaged,
    })
}
