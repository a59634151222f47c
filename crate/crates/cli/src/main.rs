use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use waveaug::augment::{augment, AugmentConfig, Scheme, SnrRange};
use waveaug::filters::{
    bandwidth_to_gamma, notch_filter, parzen_filter, support_for_ms, NotchSpec, ParzenFilterSpec,
};
use waveaug::io::spectrogram::{spectrogram, SpectrogramSpec};
use waveaug::io::wav::{read_wav, write_wav};
use waveaug::io::EngineConfig;
use waveaug::rng::derive_seed;
use waveaug::room::{
    image_source_rir, sample_geometry, MaterialRegistry, RoomConfig, DEFAULT_ROOMS,
    DEFAULT_SPEED_OF_SOUND,
};
use waveaug::theory::{verify_bound, ShippedStatistic};
use waveaug::vicinal::{online_augment, sample_vicinal, VicinalDensity};
use waveaug::{Error, Result, RngState, Signal};

#[derive(Parser)]
#[command(
    name = "waveaug",
    version,
    about = "Waveform-domain speech augmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Augment a WAV file, or every WAV file in a directory
    Augment(AugmentArgs),
    /// Simulate a room impulse response
    Rir(RirArgs),
    /// Print the taps of a Parzen or notch filter, one per line
    DesignFilter(DesignArgs),
    /// Export a log-magnitude spectrogram as PGM and optionally CSV
    Spectrogram(SpectrogramArgs),
    /// Monte-Carlo check of the robustness radius for a shipped statistic
    VerifyTheorem(TheoremArgs),
    /// Draw samples from the four-component vicinal density of a WAV file
    SampleVicinal(VicinalArgs),
}

#[derive(Clone, Copy)]
enum SchemeChoice {
    Fixed(Scheme),
    Random,
}

fn parse_scheme(s: &str) -> std::result::Result<SchemeChoice, String> {
    if s == "random" {
        return Ok(SchemeChoice::Random);
    }
    s.parse()
        .map(SchemeChoice::Fixed)
        .map_err(|_| "expected bandlimited, notch, widepass, rir or random".to_string())
}

#[derive(Args)]
struct Common {
    /// Seed; overrides the config file
    #[arg(long)]
    seed: Option<u64>,
    /// JSON engine configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Lower SNR bound in dB for every scheme
    #[arg(long)]
    snr_min: Option<f64>,
    /// Upper SNR bound in dB for every scheme
    #[arg(long)]
    snr_max: Option<f64>,
}

struct Resolved {
    seed: u64,
    p_keep: f64,
    augment: AugmentConfig,
}

impl Common {
    /// Flags over config file over shipped defaults.
    fn resolve(&self, p_keep: Option<f64>) -> Result<Resolved> {
        let file = match &self.config {
            Some(p) => EngineConfig::load(p)?,
            None => EngineConfig::default(),
        };
        let mut augment = file.augment_config();
        for s in Scheme::ALL {
            let mut r = augment.snr(s);
            if let Some(v) = self.snr_min {
                r.min_db = v;
            }
            if let Some(v) = self.snr_max {
                r.max_db = v;
            }
            SnrRange::new(r.min_db, r.max_db)?;
            augment.set_snr(s, r);
        }
        let p_keep = p_keep.unwrap_or(file.p_keep);
        if !(0.0..=1.0).contains(&p_keep) {
            return Err(Error::Parameter(format!(
                "p_keep {p_keep} is outside [0, 1]"
            )));
        }
        Ok(Resolved {
            seed: self.seed.or(file.seed).unwrap_or(0),
            p_keep,
            augment,
        })
    }
}

#[derive(Args)]
struct AugmentArgs {
    /// bandlimited, notch, widepass, rir, or random (keep-or-perturb policy)
    #[arg(long, value_parser = parse_scheme, default_value = "random")]
    scheme: SchemeChoice,
    /// Keep probability for --scheme random; overrides the config file
    #[arg(long)]
    p_keep: Option<f64>,
    #[command(flatten)]
    common: Common,
    input: PathBuf,
    output: PathBuf,
}

fn parse_room(s: &str) -> std::result::Result<[f64; 3], String> {
    if let Ok(i) = s.parse::<usize>() {
        return DEFAULT_ROOMS
            .get(i)
            .copied()
            .ok_or_else(|| format!("room index must be below {}", DEFAULT_ROOMS.len()));
    }
    let v: Vec<f64> = s
        .split('x')
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| "expected a room index or LxWxH in metres".to_string())?;
    v.try_into()
        .map_err(|_| "expected a room index or LxWxH in metres".to_string())
}

#[derive(Args)]
struct RirArgs {
    /// Index into the shipped rooms (0, 1, 2) or dimensions LxWxH in metres
    #[arg(long, value_parser = parse_room, default_value = "0")]
    room: [f64; 3],
    #[arg(long, default_value = "hard_surface")]
    material: String,
    /// JSON material registry merged over the shipped one
    #[arg(long)]
    materials: Option<PathBuf>,
    /// Source-microphone distance in metres
    #[arg(long, default_value_t = 1.0)]
    distance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    max_order: u32,
    #[arg(long, default_value_t = DEFAULT_SPEED_OF_SOUND)]
    speed_of_sound: f64,
    #[arg(long, default_value_t = 16_000)]
    sample_rate: u32,
    output: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FilterType {
    Parzen,
    Notch,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long = "type", value_enum)]
    kind: FilterType,
    /// Modulation frequency (parzen) or dip frequency (notch) in Hz
    #[arg(long)]
    freq: f64,
    /// Two-sided -3 dB bandwidth in Hz, calibrated to a window width
    #[arg(long, conflicts_with = "gamma_w")]
    xi: Option<f64>,
    /// Window width parameter, used as is
    #[arg(long)]
    gamma_w: Option<f64>,
    #[arg(long, default_value_t = 25.0)]
    support_ms: f64,
    #[arg(long, default_value_t = 16_000)]
    sample_rate: u32,
}

#[derive(Args)]
struct SpectrogramArgs {
    input: PathBuf,
    pgm: PathBuf,
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct TheoremArgs {
    #[arg(long, value_parser = ["identity", "linear", "quadratic"])]
    statistic: String,
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Input dimension of the statistic
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct VicinalArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[command(flatten)]
    common: Common,
    output_dir: PathBuf,
}

fn warn_clipped(path: &Path, clipped: usize) {
    if clipped > 0 {
        eprintln!(
            "warning: clipped {clipped} samples writing {}",
            path.display()
        );
    }
}

fn augment_one(
    input: &Path,
    output: &Path,
    choice: SchemeChoice,
    seed: u64,
    cfg: &Resolved,
) -> Result<(String, usize)> {
    let x = read_wav(input)?;
    let mut rng = RngState::new(seed);
    let (y, rec) = match choice {
        SchemeChoice::Fixed(s) => augment(&x, s, &cfg.augment, &mut rng)?,
        SchemeChoice::Random => {
            online_augment(&x, &Scheme::ALL, &cfg.augment, cfg.p_keep, &mut rng)?
        }
    };
    let clipped = write_wav(output, &y)?;
    Ok((rec.to_string(), clipped))
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Format(_) | Error::Io(_) => e,
        Error::Parameter(m) => Error::Parameter(format!("{}: {m}", path.display())),
        Error::DegenerateSignal(m) => Error::DegenerateSignal(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn run_augment(a: AugmentArgs) -> Result<()> {
    let cfg = a.common.resolve(a.p_keep)?;
    if !a.input.is_dir() {
        let (line, clipped) = augment_one(&a.input, &a.output, a.scheme, cfg.seed, &cfg)?;
        println!("{line}");
        warn_clipped(&a.output, clipped);
        return Ok(());
    }
    let mut names: Vec<String> = fs::read_dir(&a.input)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.to_ascii_lowercase().ends_with(".wav"))
        .collect();
    names.sort();
    fs::create_dir_all(&a.output)?;
    let results: Vec<Result<(String, usize)>> = names
        .par_iter()
        .enumerate()
        .map(|(i, name)| {
            let (src, dst) = (a.input.join(name), a.output.join(name));
            augment_one(&src, &dst, a.scheme, derive_seed(cfg.seed, i as u64), &cfg)
                .map_err(|e| with_path(&src, e))
        })
        .collect();
    let mut first_err = None;
    for (name, r) in names.iter().zip(results) {
        match r {
            Ok((line, clipped)) => {
                println!("file={name} {line}");
                warn_clipped(&a.output.join(name), clipped);
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn triple(v: &[f64; 3]) -> String {
    format!("{},{},{}", v[0], v[1], v[2])
}

fn run_rir(a: RirArgs) -> Result<()> {
    let mut registry = MaterialRegistry::default();
    if let Some(p) = &a.materials {
        registry.merge(&MaterialRegistry::from_path(p)?);
    }
    let room = RoomConfig {
        dims: a.room,
        material: registry.material(&a.material)?,
        max_order: a.max_order,
        speed_of_sound: a.speed_of_sound,
    };
    let geo = sample_geometry(&room, a.distance, a.distance, &mut RngState::new(a.seed))?;
    let rir = image_source_rir(&room, &geo, a.sample_rate)?;
    // very short distances put the direct path above full scale
    let peak = rir
        .signal
        .samples()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak >= 1.0 { 0.99 / peak } else { 1.0 };
    let clipped = write_wav(&a.output, &rir.signal.scaled(gain)?)?;
    println!(
        "dims={} material={} absorption={} max_order={} mic={} source={} distance={} taps={} direct_index={} arrivals={} gain={}",
        triple(&room.dims),
        room.material.name,
        room.material.absorption,
        room.max_order,
        triple(&geo.mic),
        triple(&geo.source),
        geo.distance,
        rir.signal.len(),
        rir.direct_index,
        rir.arrivals.len(),
        gain
    );
    warn_clipped(&a.output, clipped);
    Ok(())
}

fn run_design(a: DesignArgs) -> Result<()> {
    let filter = match a.kind {
        FilterType::Notch => notch_filter(&NotchSpec { dip_freq: a.freq }, a.sample_rate)?,
        FilterType::Parzen => {
            let support_len = support_for_ms(a.support_ms, a.sample_rate);
            let gamma_w = match (a.xi, a.gamma_w) {
                (_, Some(g)) => g,
                (Some(xi), None) => bandwidth_to_gamma(xi, a.sample_rate, support_len)?,
                (None, None) => {
                    return Err(Error::Parameter(
                        "parzen design needs --xi or --gamma-w".into(),
                    ))
                }
            };
            parzen_filter(
                &ParzenFilterSpec {
                    eta: a.freq,
                    gamma_w,
                    support_len,
                },
                a.sample_rate,
            )?
            .filter
        }
    };
    print!("{}", filter.to_tap_list());
    Ok(())
}

fn run_spectrogram(a: SpectrogramArgs) -> Result<()> {
    let s = spectrogram(&read_wav(&a.input)?, &SpectrogramSpec::default())?;
    fs::write(&a.pgm, s.to_pgm())?;
    if let Some(csv) = &a.csv {
        fs::write(csv, s.to_csv())?;
    }
    Ok(())
}

fn run_theorem(a: TheoremArgs) -> Result<()> {
    let stat: ShippedStatistic = a.statistic.parse()?;
    let (psi, x) = stat.build(a.dim, a.seed)?;
    let mut rng = RngState::with_stream(a.seed, 1);
    let report = verify_bound(psi.as_ref(), &x, a.sigma, a.delta, a.samples, &mut rng)?;
    println!("statistic={} dim={} {report}", stat.name(), a.dim);
    Ok(())
}

fn run_vicinal(a: VicinalArgs) -> Result<()> {
    let cfg = a.common.resolve(None)?;
    let x: Signal = read_wav(&a.input)?;
    let mut rng = RngState::new(cfg.seed);
    let density =
        VicinalDensity::from_schemes(&Scheme::ALL, &cfg.augment, x.sample_rate(), &mut rng)?;
    let samples = sample_vicinal(&x, &density, a.m, &mut rng)?;
    fs::create_dir_all(&a.output_dir)?;
    for (j, s) in samples.iter().enumerate() {
        let name = format!("sample_{j:04}.wav");
        let path = a.output_dir.join(&name);
        let clipped = write_wav(&path, &s.signal)?;
        let scheme = density.components()[s.component]
            .params
            .scheme()
            .map_or("identity", Scheme::name);
        let gamma = s
            .gamma_db
            .map_or(String::new(), |g| format!(" gamma_db={g}"));
        println!(
            "file={name} component={} scheme={scheme} seed={}{gamma}",
            s.component, s.seed
        );
        warn_clipped(&path, clipped);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Augment(a) => run_augment(a),
        Command::Rir(a) => run_rir(a),
        Command::DesignFilter(a) => run_design(a),
        Command::Spectrogram(a) => run_spectrogram(a),
        Command::VerifyTheorem(a) => run_theorem(a),
        Command::SampleVicinal(a) => run_vicinal(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::from(2)
        }
    }
}
