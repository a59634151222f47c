//! The four waveform augmentation schemes.
//!
//! Every call draws a per-call seed from the caller's [`RngState`]. Parameter
//! draws (filter, dip, room, SNR) come from stream 0 of that seed and the
//! white noise from stream 1, so an [`AugmentRecord`] alone is enough to
//! replay the output bit-exactly.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::{convolve_same, snr_scale, white_noise, FirFilter, Signal};
use crate::error::{param_err, Error, Result};
use crate::filters::{
    bandwidth_to_gamma, evenly_spaced_modes, magnitude_grid, mel_wide_bandwidths, notch_filter,
    parzen_filter, support_for_ms, NotchSpec, ParzenFilterSpec,
};
use crate::rng::RngState;
use crate::room::{
    image_source_rir, sample_geometry, Material, MaterialRegistry, RoomConfig, SourceMicGeometry,
    DEFAULT_D_MAX, DEFAULT_D_MIN, DEFAULT_MAX_ORDER, DEFAULT_ROOMS, DEFAULT_SPEED_OF_SOUND,
};

const PARAM_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const GEOMETRY_REDRAWS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    BandLimited,
    DoubleNotch,
    WidePass,
    NoisyRir,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::BandLimited,
        Scheme::DoubleNotch,
        Scheme::WidePass,
        Scheme::NoisyRir,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::BandLimited => "bandlimited",
            Scheme::DoubleNotch => "notch",
            Scheme::WidePass => "widepass",
            Scheme::NoisyRir => "rir",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown scheme {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrRange {
    pub min_db: f64,
    pub max_db: f64,
}

impl Default for SnrRange {
    fn default() -> Self {
        Self {
            min_db: 8.0,
            max_db: 32.0,
        }
    }
}

impl SnrRange {
    pub fn new(min_db: f64, max_db: f64) -> Result<Self> {
        let r = Self { min_db, max_db };
        r.validate()?;
        Ok(r)
    }

    pub fn fixed(db: f64) -> Self {
        Self {
            min_db: db,
            max_db: db,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_db.is_finite() && self.max_db.is_finite() && self.min_db <= self.max_db) {
            return param_err(format!(
                "SNR range [{}, {}] dB is invalid",
                self.min_db, self.max_db
            ));
        }
        Ok(())
    }

    pub fn draw(&self, rng: &mut RngState) -> f64 {
        let u = rng.uniform();
        if self.min_db == self.max_db {
            self.min_db
        } else {
            self.min_db + (self.max_db - self.min_db) * u
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandLimitedConfig {
    pub omega_min: f64,
    pub omega_max: f64,
    pub p: usize,
    pub support_ms: f64,
    pub snr: SnrRange,
}

impl Default for BandLimitedConfig {
    fn default() -> Self {
        Self {
            omega_min: 50.0,
            omega_max: 800.0,
            p: 8,
            support_ms: 25.0,
            snr: SnrRange::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NotchConfig {
    pub omega_min: f64,
    pub omega_max: f64,
    pub p: usize,
    pub snr: SnrRange,
}

impl Default for NotchConfig {
    fn default() -> Self {
        Self {
            omega_min: 5000.0,
            omega_max: 8000.0,
            p: 8,
            snr: SnrRange::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WidePassConfig {
    pub omega_min: f64,
    pub omega_max: f64,
    pub p: usize,
    pub support_ms: f64,
    pub snr: SnrRange,
}

impl Default for WidePassConfig {
    fn default() -> Self {
        Self {
            omega_min: 50.0,
            omega_max: 7950.0,
            p: 8,
            support_ms: 25.0,
            snr: SnrRange::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RirConfig {
    pub rooms: Vec<[f64; 3]>,
    pub materials: Vec<Material>,
    pub d_min: f64,
    pub d_max: f64,
    pub max_order: u32,
    pub speed_of_sound: f64,
    pub snr: SnrRange,
}

impl Default for RirConfig {
    fn default() -> Self {
        Self {
            rooms: DEFAULT_ROOMS.to_vec(),
            materials: MaterialRegistry::default().materials(),
            d_min: DEFAULT_D_MIN,
            d_max: DEFAULT_D_MAX,
            max_order: DEFAULT_MAX_ORDER,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
            snr: SnrRange::default(),
        }
    }
}

/// Parameter sets for all four schemes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub band_limited: BandLimitedConfig,
    pub notch: NotchConfig,
    pub wide_pass: WidePassConfig,
    pub rir: RirConfig,
}

impl AugmentConfig {
    pub fn snr(&self, scheme: Scheme) -> SnrRange {
        match scheme {
            Scheme::BandLimited => self.band_limited.snr,
            Scheme::DoubleNotch => self.notch.snr,
            Scheme::WidePass => self.wide_pass.snr,
            Scheme::NoisyRir => self.rir.snr,
        }
    }

    pub fn set_snr(&mut self, scheme: Scheme, snr: SnrRange) {
        match scheme {
            Scheme::BandLimited => self.band_limited.snr = snr,
            Scheme::DoubleNotch => self.notch.snr = snr,
            Scheme::WidePass => self.wide_pass.snr = snr,
            Scheme::NoisyRir => self.rir.snr = snr,
        }
    }

    pub fn set_snr_all(&mut self, snr: SnrRange) {
        for s in Scheme::ALL {
            self.set_snr(s, snr);
        }
    }
}

/// Everything drawn during one augmentation call.
#[derive(Clone, Debug, PartialEq)]
pub enum DrawnParams {
    /// The input was kept unchanged.
    Identity,
    BandLimited {
        index: usize,
        omega: f64,
        xi: f64,
        gamma_w: f64,
        support_len: usize,
    },
    DoubleNotch {
        index: usize,
        dip_freq: f64,
    },
    WidePass {
        index: usize,
        omega: f64,
        xi: f64,
        gamma_w: f64,
        support_len: usize,
    },
    NoisyRir {
        room_index: usize,
        room: RoomConfig,
        geometry: SourceMicGeometry,
    },
}

impl DrawnParams {
    pub fn scheme(&self) -> Option<Scheme> {
        match self {
            DrawnParams::Identity => None,
            DrawnParams::BandLimited { .. } => Some(Scheme::BandLimited),
            DrawnParams::DoubleNotch { .. } => Some(Scheme::DoubleNotch),
            DrawnParams::WidePass { .. } => Some(Scheme::WidePass),
            DrawnParams::NoisyRir { .. } => Some(Scheme::NoisyRir),
        }
    }
}

/// Provenance of one augmentation call; replays the output bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentRecord {
    pub seed: u64,
    /// Drawn SNR in dB; `None` for an unchanged input.
    pub gamma_db: Option<f64>,
    pub params: DrawnParams,
}

impl AugmentRecord {
    pub fn identity(seed: u64) -> Self {
        Self {
            seed,
            gamma_db: None,
            params: DrawnParams::Identity,
        }
    }

    pub fn scheme(&self) -> Option<Scheme> {
        self.params.scheme()
    }
}

fn fmt_triple(v: &[f64; 3]) -> String {
    format!("{},{},{}", v[0], v[1], v[2])
}

impl fmt::Display for AugmentRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.scheme().map_or("identity", Scheme::name);
        write!(f, "scheme={name} seed={}", self.seed)?;
        if let Some(g) = self.gamma_db {
            write!(f, " gamma_db={g}")?;
        }
        match &self.params {
            DrawnParams::Identity => Ok(()),
            DrawnParams::BandLimited {
                index,
                omega,
                xi,
                gamma_w,
                support_len,
            }
            | DrawnParams::WidePass {
                index,
                omega,
                xi,
                gamma_w,
                support_len,
            } => write!(
                f,
                " index={index} omega={omega} xi={xi} gamma_w={gamma_w} support_len={support_len}"
            ),
            DrawnParams::DoubleNotch { index, dip_freq } => {
                write!(f, " index={index} dip_freq={dip_freq}")
            }
            DrawnParams::NoisyRir {
                room_index,
                room,
                geometry,
            } => write!(
                f,
                " room_index={room_index} dims={} material={} absorption={} max_order={} speed_of_sound={} mic={} source={} distance={}",
                fmt_triple(&room.dims),
                room.material.name,
                room.material.absorption,
                room.max_order,
                room.speed_of_sound,
                fmt_triple(&geometry.mic),
                fmt_triple(&geometry.source),
                geometry.distance
            ),
        }
    }
}

struct Fields<'a>(HashMap<&'a str, &'a str>);

impl<'a> Fields<'a> {
    fn get(&self, key: &str) -> Result<&'a str> {
        self.0
            .get(key)
            .copied()
            .ok_or_else(|| Error::Format(format!("record is missing {key:?}")))
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| Error::Format(format!("record field {key}={v} is malformed")))
    }

    fn triple(&self, key: &str) -> Result<[f64; 3]> {
        let v = self.get(key)?;
        let parts: Vec<f64> = v
            .split(',')
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("record field {key}={v} is malformed")))?;
        parts
            .try_into()
            .map_err(|_| Error::Format(format!("record field {key}={v} needs three values")))
    }
}

impl FromStr for AugmentRecord {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("record token {tok:?} is not key=value")))?;
            map.insert(k, v);
        }
        let f = Fields(map);
        let seed = f.parse("seed")?;
        let scheme = f.get("scheme")?;
        if scheme == "identity" {
            return Ok(AugmentRecord::identity(seed));
        }
        let gamma_db = Some(f.parse("gamma_db")?);
        let params = match scheme.parse::<Scheme>()? {
            Scheme::BandLimited => DrawnParams::BandLimited {
                index: f.parse("index")?,
                omega: f.parse("omega")?,
                xi: f.parse("xi")?,
                gamma_w: f.parse("gamma_w")?,
                support_len: f.parse("support_len")?,
            },
            Scheme::WidePass => DrawnParams::WidePass {
                index: f.parse("index")?,
                omega: f.parse("omega")?,
                xi: f.parse("xi")?,
                gamma_w: f.parse("gamma_w")?,
                support_len: f.parse("support_len")?,
            },
            Scheme::DoubleNotch => DrawnParams::DoubleNotch {
                index: f.parse("index")?,
                dip_freq: f.parse("dip_freq")?,
            },
            Scheme::NoisyRir => {
                let room = RoomConfig {
                    dims: f.triple("dims")?,
                    material: Material {
                        name: f.get("material")?.to_string(),
                        absorption: f.parse("absorption")?,
                    },
                    max_order: f.parse("max_order")?,
                    speed_of_sound: f.parse("speed_of_sound")?,
                };
                DrawnParams::NoisyRir {
                    room_index: f.parse("room_index")?,
                    room,
                    geometry: SourceMicGeometry {
                        mic: f.triple("mic")?,
                        source: f.triple("source")?,
                        distance: f.parse("distance")?,
                    },
                }
            }
        };
        Ok(AugmentRecord {
            seed,
            gamma_db,
            params,
        })
    }
}

/// The deterministic part of a drawn scheme: the filters applied to the
/// input in order, and the shaping filter applied to the white noise.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenScheme {
    pub filters: Vec<FirFilter>,
    pub noise_filter: Option<FirFilter>,
}

impl FrozenScheme {
    pub fn identity() -> Self {
        Self {
            filters: Vec::new(),
            noise_filter: None,
        }
    }

    /// `x ↦ C·x`, the mixture-component mean.
    pub fn transform(&self, x: &Signal) -> Result<Signal> {
        if x.is_empty() {
            return Err(Error::EmptyInput("cannot augment an empty signal".into()));
        }
        self.filters
            .iter()
            .try_fold(x.clone(), |acc, h| convolve_same(&acc, h))
    }

    /// White noise shaped by the scheme's noise filter, before SNR scaling.
    pub fn raw_noise(&self, n: usize, sample_rate: u32, rng: &mut RngState) -> Result<Signal> {
        let eps = white_noise(n, sample_rate, rng)?;
        match &self.noise_filter {
            Some(h) => convolve_same(&eps, h),
            None => Ok(eps),
        }
    }
}

fn parzen(omega: f64, gamma_w: f64, support_len: usize, sample_rate: u32) -> Result<FirFilter> {
    Ok(parzen_filter(
        &ParzenFilterSpec {
            eta: omega,
            gamma_w,
            support_len,
        },
        sample_rate,
    )?
    .filter)
}

/// Filter with unit peak magnitude response.
fn unit_peak(h: FirFilter) -> FirFilter {
    let peak = magnitude_grid(&h, 8192).into_iter().fold(0.0, f64::max);
    if peak > 0.0 {
        h.scaled(1.0 / peak)
    } else {
        h
    }
}

pub fn freeze(params: &DrawnParams, sample_rate: u32) -> Result<FrozenScheme> {
    Ok(match params {
        DrawnParams::Identity => FrozenScheme::identity(),
        DrawnParams::BandLimited {
            omega,
            gamma_w,
            support_len,
            ..
        } => FrozenScheme {
            filters: Vec::new(),
            noise_filter: Some(parzen(*omega, *gamma_w, *support_len, sample_rate)?),
        },
        DrawnParams::DoubleNotch { dip_freq, .. } => FrozenScheme {
            filters: vec![
                notch_filter(&NotchSpec { dip_freq: 0.0 }, sample_rate)?,
                notch_filter(
                    &NotchSpec {
                        dip_freq: *dip_freq,
                    },
                    sample_rate,
                )?,
            ],
            noise_filter: None,
        },
        DrawnParams::WidePass {
            omega,
            gamma_w,
            support_len,
            ..
        } => FrozenScheme {
            filters: vec![unit_peak(parzen(
                *omega,
                *gamma_w,
                *support_len,
                sample_rate,
            )?)],
            noise_filter: None,
        },
        DrawnParams::NoisyRir { room, geometry, .. } => FrozenScheme {
            filters: vec![image_source_rir(room, geometry, sample_rate)?.to_filter()?],
            noise_filter: None,
        },
    })
}

/// Signals produced by one call, split into their parts.
#[derive(Clone, Debug, PartialEq)]
pub struct Rendered {
    /// The filtered input (equal to the input for band-limited noise).
    pub transformed: Signal,
    /// The SNR-scaled noise that was added.
    pub noise: Signal,
    pub output: Signal,
}

/// Recomputes an augmentation from its record.
pub fn render(x: &Signal, record: &AugmentRecord) -> Result<Rendered> {
    if x.is_empty() {
        return Err(Error::EmptyInput("cannot augment an empty signal".into()));
    }
    let frozen = freeze(&record.params, x.sample_rate())?;
    let transformed = frozen.transform(x)?;
    let Some(gamma) = record.gamma_db else {
        let noise = Signal::zeros(x.len(), x.sample_rate())?;
        return Ok(Rendered {
            output: transformed.clone(),
            transformed,
            noise,
        });
    };
    let mut noise_rng = RngState::with_stream(record.seed, NOISE_STREAM);
    let raw = frozen.raw_noise(x.len(), x.sample_rate(), &mut noise_rng)?;
    let noise = snr_scale(&raw, &transformed, gamma)?;
    let output = transformed.add(&noise)?;
    Ok(Rendered {
        transformed,
        noise,
        output,
    })
}

pub fn replay(x: &Signal, record: &AugmentRecord) -> Result<Signal> {
    Ok(render(x, record)?.output)
}

fn check_input(x: &Signal) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyInput("cannot augment an empty signal".into()));
    }
    Ok(())
}

fn record(seed: u64, gamma_db: f64, params: DrawnParams) -> AugmentRecord {
    AugmentRecord {
        seed,
        gamma_db: Some(gamma_db),
        params,
    }
}

fn draw_band_limited(cfg: &BandLimitedConfig, sr: u32, seed: u64) -> Result<AugmentRecord> {
    cfg.snr.validate()?;
    let mut draw = RngState::with_stream(seed, PARAM_STREAM);
    let layout = evenly_spaced_modes(cfg.omega_min, cfg.omega_max, sr, cfg.p)?;
    let index = draw.index(layout.len());
    let gamma_db = cfg.snr.draw(&mut draw);
    let support_len = support_for_ms(cfg.support_ms, sr);
    let (omega, xi) = (layout.modes[index], layout.bandwidths[index]);
    let gamma_w = bandwidth_to_gamma(xi, sr, support_len)?;
    Ok(record(
        seed,
        gamma_db,
        DrawnParams::BandLimited {
            index,
            omega,
            xi,
            gamma_w,
            support_len,
        },
    ))
}

fn draw_notch(cfg: &NotchConfig, sr: u32, seed: u64) -> Result<AugmentRecord> {
    cfg.snr.validate()?;
    let mut draw = RngState::with_stream(seed, PARAM_STREAM);
    let layout = evenly_spaced_modes(cfg.omega_min, cfg.omega_max, sr, cfg.p)?;
    let index = draw.index(layout.len());
    let gamma_db = cfg.snr.draw(&mut draw);
    Ok(record(
        seed,
        gamma_db,
        DrawnParams::DoubleNotch {
            index,
            dip_freq: layout.modes[index],
        },
    ))
}

fn draw_wide_pass(cfg: &WidePassConfig, sr: u32, seed: u64) -> Result<AugmentRecord> {
    cfg.snr.validate()?;
    let mut draw = RngState::with_stream(seed, PARAM_STREAM);
    let layout = mel_wide_bandwidths(cfg.omega_min, cfg.omega_max, sr, cfg.p)?;
    let index = draw.index(layout.len());
    let gamma_db = cfg.snr.draw(&mut draw);
    let support_len = support_for_ms(cfg.support_ms, sr);
    let (omega, xi) = (layout.modes[index], layout.bandwidths[index]);
    let gamma_w = bandwidth_to_gamma(xi, sr, support_len)?;
    Ok(record(
        seed,
        gamma_db,
        DrawnParams::WidePass {
            index,
            omega,
            xi,
            gamma_w,
            support_len,
        },
    ))
}

fn draw_rir(cfg: &RirConfig, seed: u64) -> Result<AugmentRecord> {
    cfg.snr.validate()?;
    if cfg.rooms.is_empty() || cfg.materials.is_empty() {
        return param_err("noisy RIR needs at least one room and one material");
    }
    let mut draw = RngState::with_stream(seed, PARAM_STREAM);
    let room_index = draw.index(cfg.rooms.len());
    let material = cfg.materials[draw.index(cfg.materials.len())].clone();
    let room = RoomConfig {
        dims: cfg.rooms[room_index],
        material,
        max_order: cfg.max_order,
        speed_of_sound: cfg.speed_of_sound,
    };
    room.validate()?;
    let mut geometry = sample_geometry(&room, cfg.d_min, cfg.d_max, &mut draw);
    for _ in 1..GEOMETRY_REDRAWS {
        match geometry {
            Err(Error::Geometry(_)) if cfg.d_max < room.diagonal() => {
                geometry = sample_geometry(&room, cfg.d_min, cfg.d_max, &mut draw);
            }
            _ => break,
        }
    }
    let geometry = geometry?;
    let gamma_db = cfg.snr.draw(&mut draw);
    Ok(record(
        seed,
        gamma_db,
        DrawnParams::NoisyRir {
            room_index,
            room,
            geometry,
        },
    ))
}

/// Draws the parameters of one scheme call from a per-call seed, without
/// touching any signal.
pub fn draw_record(
    scheme: Scheme,
    cfg: &AugmentConfig,
    sample_rate: u32,
    seed: u64,
) -> Result<AugmentRecord> {
    match scheme {
        Scheme::BandLimited => draw_band_limited(&cfg.band_limited, sample_rate, seed),
        Scheme::DoubleNotch => draw_notch(&cfg.notch, sample_rate, seed),
        Scheme::WidePass => draw_wide_pass(&cfg.wide_pass, sample_rate, seed),
        Scheme::NoisyRir => draw_rir(&cfg.rir, seed),
    }
}

fn run(x: &Signal, rec: Result<AugmentRecord>) -> Result<(Signal, AugmentRecord)> {
    let rec = rec?;
    Ok((replay(x, &rec)?, rec))
}

/// Adds white noise band-limited by a randomly chosen low-frequency Parzen
/// filter, at an SNR measured against the input.
pub fn band_limited_white_noise(
    x: &Signal,
    cfg: &BandLimitedConfig,
    rng: &mut RngState,
) -> Result<(Signal, AugmentRecord)> {
    check_input(x)?;
    run(x, draw_band_limited(cfg, x.sample_rate(), rng.next_u64()))
}

/// Notches the input at DC and at a randomly chosen high frequency, then
/// adds full-band white noise at an SNR measured against the notched signal.
pub fn noisy_double_dip_notch(
    x: &Signal,
    cfg: &NotchConfig,
    rng: &mut RngState,
) -> Result<(Signal, AugmentRecord)> {
    check_input(x)?;
    run(x, draw_notch(cfg, x.sample_rate(), rng.next_u64()))
}

/// Passes the input through a randomly chosen Mel-width Parzen band-pass
/// filter (unit peak gain) and adds full-band white noise.
pub fn noisy_widepass(
    x: &Signal,
    cfg: &WidePassConfig,
    rng: &mut RngState,
) -> Result<(Signal, AugmentRecord)> {
    check_input(x)?;
    run(x, draw_wide_pass(cfg, x.sample_rate(), rng.next_u64()))
}

/// Reverberates the input with a simulated room impulse response from a
/// random room, material and source/microphone placement, then adds white
/// noise.
pub fn noisy_rir(
    x: &Signal,
    cfg: &RirConfig,
    rng: &mut RngState,
) -> Result<(Signal, AugmentRecord)> {
    check_input(x)?;
    run(x, draw_rir(cfg, rng.next_u64()))
}

pub fn augment(
    x: &Signal,
    scheme: Scheme,
    cfg: &AugmentConfig,
    rng: &mut RngState,
) -> Result<(Signal, AugmentRecord)> {
    check_input(x)?;
    run(x, draw_record(scheme, cfg, x.sample_rate(), rng.next_u64()))
}
