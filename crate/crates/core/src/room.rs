//! Shoebox room impulse responses by the image-source method.
//!
//! Each image source contributes `(1 − α)^(r/2) / (4π·dist)` at delay
//! `dist / c`, where `r` is its number of wall reflections. Fractional delays
//! are split linearly across the two neighbouring samples. The response is
//! cut where the remaining energy drops 60 dB below the direct path.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::{FirFilter, Signal};
use crate::error::{param_err, Error, Result};
use crate::rng::RngState;

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;
pub const DEFAULT_MAX_ORDER: u32 = 8;
pub const DEFAULT_D_MIN: f64 = 0.03;
pub const DEFAULT_D_MAX: f64 = 3.0;
/// Residual energy threshold for truncation, relative to the direct path.
pub const TRUNCATION_DB: f64 = -60.0;

/// The three shoebox rooms used by the noisy-RIR scheme, in meters.
pub const DEFAULT_ROOMS: [[f64; 3]; 3] = [[4.0, 4.0, 2.5], [10.0, 10.0, 3.5], [2.5, 1.5, 1.5]];

const DEFAULT_MATERIALS_JSON: &str = include_str!("../data/materials.json");

const MAX_GEOMETRY_ATTEMPTS: usize = 10_000;
const DIRECTIONS_PER_MIC: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    pub absorption: f64,
}

fn canonical_name(name: &str) -> String {
    name.trim().to_ascii_lowercase().replace([' ', '-'], "_")
}

/// Material name → frequency-independent energy absorption coefficient.
///
/// The file format is a flat JSON object, e.g. `{"hairy_carpet": 0.43}`.
/// Names are matched case-insensitively with spaces and hyphens treated as
/// underscores, so `"hairy carpet"` finds `hairy_carpet`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialRegistry {
    entries: BTreeMap<String, f64>,
}

impl Default for MaterialRegistry {
    fn default() -> Self {
        Self::from_json_str(DEFAULT_MATERIALS_JSON).expect("shipped material registry is valid")
    }
}

impl MaterialRegistry {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, f64> = serde_json::from_str(text)?;
        Self::from_entries(raw)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut out = BTreeMap::new();
        for (name, alpha) in entries {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return param_err(format!(
                    "absorption of {name:?} is {alpha}, expected (0, 1]"
                ));
            }
            out.insert(canonical_name(&name), alpha);
        }
        if out.is_empty() {
            return param_err("material registry is empty");
        }
        Ok(Self { entries: out })
    }

    pub fn absorption(&self, name: &str) -> Result<f64> {
        self.entries
            .get(&canonical_name(name))
            .copied()
            .ok_or_else(|| Error::Lookup(format!("material {name:?} is not in the registry")))
    }

    pub fn material(&self, name: &str) -> Result<Material> {
        Ok(Material {
            name: canonical_name(name),
            absorption: self.absorption(name)?,
        })
    }

    pub fn materials(&self) -> Vec<Material> {
        self.entries
            .iter()
            .map(|(name, &absorption)| Material {
                name: name.clone(),
                absorption,
            })
            .collect()
    }

    /// Overrides or adds entries from `other`.
    pub fn merge(&mut self, other: &MaterialRegistry) {
        self.entries
            .extend(other.entries.iter().map(|(k, v)| (k.clone(), *v)));
    }
}

/// Absorption coefficient from the shipped registry.
pub fn material_absorption(name: &str) -> Result<f64> {
    MaterialRegistry::default().absorption(name)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomConfig {
    pub dims: [f64; 3],
    pub material: Material,
    pub max_order: u32,
    pub speed_of_sound: f64,
}

impl RoomConfig {
    pub fn new(dims: [f64; 3], material: Material) -> Result<Self> {
        let room = Self {
            dims,
            material,
            max_order: DEFAULT_MAX_ORDER,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
        };
        room.validate()?;
        Ok(room)
    }

    pub fn with_max_order(mut self, max_order: u32) -> Self {
        self.max_order = max_order;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return param_err(format!("room dimensions {:?} must be positive", self.dims));
        }
        let a = self.material.absorption;
        if !(a > 0.0 && a <= 1.0) {
            return param_err(format!("absorption {a} outside (0, 1]"));
        }
        if !(self.speed_of_sound > 0.0 && self.speed_of_sound.is_finite()) {
            return param_err("speed of sound must be positive");
        }
        Ok(())
    }

    pub fn diagonal(&self) -> f64 {
        self.dims.iter().map(|d| d * d).sum::<f64>().sqrt()
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        p.iter().zip(&self.dims).all(|(&x, &l)| x > 0.0 && x < l)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceMicGeometry {
    pub mic: [f64; 3],
    pub source: [f64; 3],
    pub distance: f64,
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl SourceMicGeometry {
    pub fn new(room: &RoomConfig, mic: [f64; 3], source: [f64; 3]) -> Result<Self> {
        if !room.contains(&mic) || !room.contains(&source) {
            return Err(Error::Geometry(format!(
                "mic {mic:?} and source {source:?} must lie strictly inside {:?}",
                room.dims
            )));
        }
        Ok(Self {
            mic,
            source,
            distance: distance(&mic, &source),
        })
    }
}

fn uniform_open(rng: &mut RngState, hi: f64) -> f64 {
    loop {
        let v = rng.uniform() * hi;
        if v > 0.0 {
            return v;
        }
    }
}

/// Microphone uniform in the room, distance uniform in `[d_min, d_max]`,
/// source uniform on the sphere of that radius, rejected until inside.
pub fn sample_geometry(
    room: &RoomConfig,
    d_min: f64,
    d_max: f64,
    rng: &mut RngState,
) -> Result<SourceMicGeometry> {
    room.validate()?;
    if !(d_min > 0.0 && d_min <= d_max) {
        return param_err(format!("distance range [{d_min}, {d_max}] is invalid"));
    }
    if d_max >= room.diagonal() {
        return Err(Error::Geometry(format!(
            "distance {d_max} m does not fit in room {:?} (diagonal {:.3} m)",
            room.dims,
            room.diagonal()
        )));
    }
    let d = rng.uniform_range(d_min, d_max);
    let mut attempts = 0;
    while attempts < MAX_GEOMETRY_ATTEMPTS {
        let mic = [
            uniform_open(rng, room.dims[0]),
            uniform_open(rng, room.dims[1]),
            uniform_open(rng, room.dims[2]),
        ];
        for _ in 0..DIRECTIONS_PER_MIC {
            attempts += 1;
            let z = rng.uniform_range(-1.0, 1.0);
            let phi = rng.uniform_range(0.0, 2.0 * PI);
            let rho = (1.0 - z * z).sqrt();
            let dir = [rho * phi.cos(), rho * phi.sin(), z];
            let source = [
                mic[0] + d * dir[0],
                mic[1] + d * dir[1],
                mic[2] + d * dir[2],
            ];
            if room.contains(&source) {
                return Ok(SourceMicGeometry {
                    mic,
                    source,
                    distance: d,
                });
            }
            if attempts >= MAX_GEOMETRY_ATTEMPTS {
                break;
            }
        }
    }
    Err(Error::Geometry(format!(
        "no placement at distance {d:.4} m in room {:?} after {MAX_GEOMETRY_ATTEMPTS} attempts",
        room.dims
    )))
}

/// One image-source contribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arrival {
    pub delay_samples: f64,
    pub amplitude: f64,
    pub order: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rir {
    pub signal: Signal,
    /// Nonzero image contributions, direct path first.
    pub arrivals: Vec<Arrival>,
    /// Sample nearest the direct-path delay.
    pub direct_index: usize,
}

impl Rir {
    /// The response as a filter whose time zero is the direct path.
    pub fn to_filter(&self) -> Result<FirFilter> {
        FirFilter::new(self.signal.samples().to_vec(), self.direct_index)
    }

    pub fn energy(&self) -> f64 {
        self.signal.samples().iter().map(|v| v * v).sum()
    }

    /// Energy `Σ A²` of the arrivals of each reflection order.
    pub fn order_energies(&self) -> Vec<f64> {
        let max = self.arrivals.iter().map(|a| a.order).max().unwrap_or(0) as usize;
        let mut out = vec![0.0; max + 1];
        for a in &self.arrivals {
            out[a.order as usize] += a.amplitude * a.amplitude;
        }
        out
    }
}

/// Backward-integrated energy `E[n] = Σ_{m ≥ n} h[m]²`.
pub fn schroeder_curve(h: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; h.len()];
    let mut acc = 0.0;
    for (o, v) in out.iter_mut().zip(h).rev() {
        acc += v * v;
        *o = acc;
    }
    out
}

/// Image indices `(n, q)` along one axis with their reflection counts.
fn axis_images(max_order: u32) -> Vec<(i64, i64, u32)> {
    let n_max = max_order as i64;
    let mut out = Vec::new();
    for n in -n_max..=n_max {
        for q in 0..=1 {
            let r = ((n - q).abs() + n.abs()) as u32;
            if r <= max_order {
                out.push((n, q, r));
            }
        }
    }
    out
}

fn snapped_delay(dist: f64, c: f64, fs: f64) -> f64 {
    let tau = dist / c * fs;
    let r = tau.round();
    if (tau - r).abs() < 1e-9 {
        r
    } else {
        tau
    }
}

pub fn image_source_rir(
    room: &RoomConfig,
    geo: &SourceMicGeometry,
    sample_rate: u32,
) -> Result<Rir> {
    room.validate()?;
    if !room.contains(&geo.mic) || !room.contains(&geo.source) {
        return Err(Error::Geometry(
            "mic and source must lie inside the room".into(),
        ));
    }
    let fs = sample_rate as f64;
    let c = room.speed_of_sound;
    let beta = (1.0 - room.material.absorption).sqrt();
    let axes = axis_images(room.max_order);

    let mut arrivals = Vec::new();
    for &(nx, qx, rx) in &axes {
        for &(ny, qy, ry) in &axes {
            if rx + ry > room.max_order {
                continue;
            }
            for &(nz, qz, rz) in &axes {
                let order = rx + ry + rz;
                if order > room.max_order {
                    continue;
                }
                let amp_reflect = beta.powi(order as i32);
                if amp_reflect == 0.0 {
                    continue;
                }
                let image = [
                    (1 - 2 * qx) as f64 * geo.source[0] + 2.0 * nx as f64 * room.dims[0],
                    (1 - 2 * qy) as f64 * geo.source[1] + 2.0 * ny as f64 * room.dims[1],
                    (1 - 2 * qz) as f64 * geo.source[2] + 2.0 * nz as f64 * room.dims[2],
                ];
                let dist = distance(&image, &geo.mic);
                arrivals.push(Arrival {
                    delay_samples: snapped_delay(dist, c, fs),
                    amplitude: amp_reflect / (4.0 * PI * dist),
                    order,
                });
            }
        }
    }
    // direct path first, then by delay
    arrivals.sort_by(|a, b| {
        a.order
            .min(1)
            .cmp(&b.order.min(1))
            .then(a.delay_samples.total_cmp(&b.delay_samples))
    });

    let len = arrivals
        .iter()
        .map(|a| a.delay_samples.floor() as usize + 2)
        .max()
        .unwrap_or(1);
    let mut h = vec![0.0; len];
    for a in &arrivals {
        let i0 = a.delay_samples.floor();
        let frac = a.delay_samples - i0;
        let i0 = i0 as usize;
        h[i0] += a.amplitude * (1.0 - frac);
        if frac > 0.0 {
            h[i0 + 1] += a.amplitude * frac;
        }
    }

    let direct = arrivals[0];
    let direct_index = direct.delay_samples.round() as usize;
    let threshold = direct.amplitude.powi(2) * 10f64.powf(TRUNCATION_DB / 10.0);
    let tail = schroeder_curve(&h);
    let min_len = direct.delay_samples.floor() as usize + 2;
    let cut = (min_len..h.len())
        .find(|&n| tail[n] < threshold)
        .unwrap_or(h.len());
    h.truncate(cut.max(direct_index + 1));

    Ok(Rir {
        signal: Signal::new(h, sample_rate)?,
        arrivals,
        direct_index,
    })
}
