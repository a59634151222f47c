//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use waveaug::augment::{
    augment, draw_record, freeze, render, AugmentConfig, DrawnParams, Scheme, SnrRange,
};
use waveaug::dsp::{circular_convolve, measure_snr, FirFilter, FFT_TAP_THRESHOLD};
use waveaug::filters::{frequency_response, notch_filter, NotchSpec};
use waveaug::io::wav::{decode_wav, encode_wav};
use waveaug::room::{
    image_source_rir, sample_geometry, schroeder_curve, Material, MaterialRegistry, RoomConfig,
    DEFAULT_ROOMS,
};
use waveaug::theory::{
    constants_ab, default_step, verify_bound, LinearStatistic, QuadraticStatistic, ShippedStatistic,
};
use waveaug::vicinal::{
    online_augment, sample_vicinal, vicinal_nll, NoiseScale, VicinalComponent, VicinalDensity,
};
use waveaug::{RngState, Signal};

const SR: u32 = 16_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn speech_like(n: usize, seed: u64) -> Signal {
    let mut rng = RngState::new(seed);
    let f0 = 100.0 + 150.0 * rng.uniform();
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / SR as f64;
            let env = 0.6 + 0.4 * (2.0 * PI * 3.0 * t).sin();
            let voiced: f64 = (1..=12)
                .map(|h| (2.0 * PI * f0 * h as f64 * t).sin() / h as f64)
                .sum();
            0.1 * env * voiced + 0.01 * rng.standard_normal()
        })
        .collect();
    Signal::new(samples, SR).unwrap()
}

fn snr_fidelity() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let x = speech_like(SR as usize, 1);
    for scheme in Scheme::ALL {
        for gamma in [8.0, 20.0, 32.0] {
            let mut cfg = AugmentConfig::default();
            cfg.set_snr_all(SnrRange::fixed(gamma));
            for seed in 0..100 {
                let (out, rec) = augment(&x, scheme, &cfg, &mut RngState::new(seed)).unwrap();
                let reference = render(&x, &rec).unwrap().transformed;
                let noise = out.sub(&reference).unwrap();
                let err = (measure_snr(&reference, &noise).unwrap() - gamma).abs();
                worst = worst.max(err);
                count += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: worst <= 0.01 && secs < 30.0,
        detail: format!(
            "{count} mixes, max |error| {worst:.2e} dB (limit 0.01), {secs:.2} s (limit 30)"
        ),
    }
}

fn tone(freq: f64, n: usize) -> Signal {
    Signal::new(
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / SR as f64 + 0.3).sin())
            .collect(),
        SR,
    )
    .unwrap()
}

fn interior_power(s: &Signal, margin: usize) -> f64 {
    let v = &s.samples()[margin..s.len() - margin];
    v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
}

fn notch_exactness() -> Outcome {
    let mut rng = RngState::new(2);
    let nyq = SR as f64 / 2.0;
    let mut worst_mag: f64 = 0.0;
    for _ in 0..100 {
        let w = rng.uniform_range(1.0, nyq - 1.0);
        let h = notch_filter(&NotchSpec { dip_freq: w }, SR).unwrap();
        worst_mag = worst_mag.max(frequency_response(&h, w, SR).unwrap().norm());
    }
    let cfg = AugmentConfig::default();
    let mut worst_att = f64::INFINITY;
    for seed in 0..50 {
        let rec = draw_record(Scheme::DoubleNotch, &cfg, SR, seed).unwrap();
        let DrawnParams::DoubleNotch { dip_freq, .. } = rec.params else {
            unreachable!()
        };
        let frozen = freeze(&rec.params, SR).unwrap();
        for f in [0.0, dip_freq] {
            let t = if f == 0.0 {
                Signal::new(vec![0.5; 4000], SR).unwrap()
            } else {
                tone(f, 4000)
            };
            let y = frozen.transform(&t).unwrap();
            let att = 10.0 * (interior_power(&t, 4) / interior_power(&y, 4).max(1e-300)).log10();
            worst_att = worst_att.min(att);
        }
    }
    Outcome {
        pass: worst_mag < 1e-12 && worst_att >= 60.0,
        detail: format!(
            "max |H(dip)| {worst_mag:.2e} over 100 dips (limit 1e-12), min tone attenuation {worst_att:.1} dB over 50 draws x 2 dips (limit 60)"
        ),
    }
}

fn energy_fraction_below(s: &Signal, edge: f64) -> f64 {
    let n = s.len();
    let mut buf: Vec<Complex64> = s
        .samples()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (mut below, mut total) = (0.0, 0.0);
    for (k, c) in buf.iter().enumerate() {
        let f = k.min(n - k) as f64 * SR as f64 / n as f64;
        let e = c.norm_sqr();
        total += e;
        if f <= edge {
            below += e;
        }
    }
    below / total
}

fn band_limiting() -> Outcome {
    let cfg = AugmentConfig::default();
    let edge = 1.2 * cfg.band_limited.omega_max;
    let x = speech_like(SR as usize, 3);
    let mut worst: f64 = 1.0;
    for seed in 0..50 {
        let (out, _) = augment(&x, Scheme::BandLimited, &cfg, &mut RngState::new(seed)).unwrap();
        worst = worst.min(energy_fraction_below(&out.sub(&x).unwrap(), edge));
    }
    Outcome {
        pass: worst >= 0.99,
        detail: format!(
            "min noise energy below {edge} Hz: {:.4}% over 50 seeds (limit 99%)",
            100.0 * worst
        ),
    }
}

fn circulant_oracle() -> Outcome {
    let mut rng = RngState::new(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = 1 + rng.index(32);
        let l = 1 + rng.index(n);
        let center = rng.index(l);
        let x: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let taps: Vec<f64> = (0..l).map(|_| rng.standard_normal()).collect();
        // first column of the circulant matrix
        let mut col = vec![0.0; n];
        for (k, t) in taps.iter().enumerate() {
            col[(k + n - center) % n] += t;
        }
        let c = DMatrix::from_fn(n, n, |i, j| col[(i + n - j) % n]);
        let want = c * nalgebra::DVector::from_column_slice(&x);
        let got = circular_convolve(
            &Signal::new(x, SR).unwrap(),
            &FirFilter::new(taps, center).unwrap(),
        )
        .unwrap();
        for (g, w) in got.samples().iter().zip(want.iter()) {
            worst = worst.max((g - w).abs());
        }
    }
    Outcome {
        pass: worst < 1e-10,
        detail: format!("max abs error {worst:.2e} over 1000 pairs, n <= 32 (limit 1e-10)"),
    }
}

fn rir_physics() -> Outcome {
    let mut rng = RngState::new(5);
    let registry = MaterialRegistry::default();
    let anechoic = Material {
        name: "anechoic".into(),
        absorption: 1.0,
    };
    let mut worst_amp: f64 = 0.0;
    let mut worst_delay: f64 = 0.0;
    let mut single = true;
    let mut seven = true;
    let mut monotone = true;
    for i in 0..20 {
        let dims = DEFAULT_ROOMS[i % 3];
        let room = RoomConfig::new(dims, anechoic.clone()).unwrap();
        let geo = sample_geometry(&room, 0.5, 1.5, &mut rng).unwrap();
        let rir = image_source_rir(&room, &geo, SR).unwrap();
        single &= rir.arrivals.len() == 1;
        let want_amp = 1.0 / (4.0 * PI * geo.distance);
        let want_delay = geo.distance / room.speed_of_sound * SR as f64;
        worst_amp = worst_amp.max((rir.arrivals[0].amplitude / want_amp - 1.0).abs());
        let tap_sum: f64 = rir.signal.samples().iter().sum();
        worst_amp = worst_amp.max((tap_sum / want_amp - 1.0).abs());
        worst_delay = worst_delay.max((rir.arrivals[0].delay_samples - want_delay).abs());

        let materials = registry.materials();
        let material = materials[i % materials.len()].clone();
        let first = RoomConfig::new(dims, material.clone())
            .unwrap()
            .with_max_order(1);
        let geo1 = sample_geometry(&first, 0.5, 1.5, &mut rng).unwrap();
        seven &= image_source_rir(&first, &geo1, SR).unwrap().arrivals.len() == 7;

        let full = RoomConfig::new(dims, material).unwrap();
        let geo2 = sample_geometry(&full, 0.03, 2.0, &mut rng).unwrap();
        let curve = schroeder_curve(image_source_rir(&full, &geo2, SR).unwrap().signal.samples());
        monotone &= curve.windows(2).all(|w| w[1] <= w[0]);
    }
    Outcome {
        pass: single && worst_amp <= 0.02 && worst_delay < 1e-9 && seven && monotone,
        detail: format!(
            "anechoic single arrival: {single}, max amplitude error {:.3}% (limit 2%), max delay error {worst_delay:.1e} samples; first order gives 7 arrivals: {seven}; Schroeder non-increasing over 20 rooms: {monotone}",
            100.0 * worst_amp
        ),
    }
}

fn theorem_grid() -> Outcome {
    let start = Instant::now();
    let mut cells = 0;
    let mut failed = Vec::new();
    let mut worst_margin = f64::INFINITY;
    for (si, stat) in ShippedStatistic::ALL.into_iter().enumerate() {
        let (psi, x) = stat.build(16, 100 + si as u64).unwrap();
        for sigma in [0.01, 0.05, 0.1] {
            for delta in [0.1, 0.3, 0.5] {
                let mut rng = RngState::new(cells as u64);
                let r = verify_bound(psi.as_ref(), &x, sigma, delta, 10_000, &mut rng).unwrap();
                worst_margin = worst_margin.min(r.threshold - r.violation_rate);
                if !r.pass {
                    failed.push(format!("{}/{sigma}/{delta}", stat.name()));
                }
                cells += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: failed.is_empty() && secs < 60.0,
        detail: format!(
            "{cells} cells, {} failing {failed:?}, smallest threshold margin {worst_margin:.4}, {secs:.2} s (limit 60)",
            failed.len()
        ),
    }
}

fn definition_constants() -> Outcome {
    let mut rng = RngState::new(6);
    let mut worst: f64 = 0.0;
    let rel = |got: f64, want: f64| {
        if want == 0.0 {
            got.abs()
        } else {
            ((got - want) / want).abs()
        }
    };
    for _ in 0..20 {
        let lin = LinearStatistic::random(3, 5, &mut rng).unwrap();
        let x: Vec<f64> = (0..5).map(|_| rng.standard_normal()).collect();
        let c = constants_ab(&lin, &x, default_step(&x)).unwrap();
        let a = lin.w.iter().map(|v| v * v).sum::<f64>();
        worst = worst.max(rel(c.a, a)).max(rel(c.b, 0.0));

        let quad = QuadraticStatistic::random(5, 3, 1.0, &mut rng).unwrap();
        let c = constants_ab(&quad, &x, default_step(&x)).unwrap();
        let a = quad
            .analytic_jacobian(&x)
            .iter()
            .map(|v| v * v)
            .sum::<f64>();
        let b: f64 = quad
            .analytic_hessians()
            .iter()
            .map(|h| h.trace() + (h * h).trace())
            .sum();
        worst = worst.max(rel(c.a, a)).max(rel(c.b, b));
    }
    Outcome {
        pass: worst <= 1e-5,
        detail: format!("max relative error {worst:.2e} over 20 linear and 20 quadratic statistics (limit 1e-5)"),
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn jensen_relation() -> Outcome {
    let mut rng = RngState::new(7);
    let (n, m, big) = (10, 200, 10_000);
    let mut ok = 0;
    let mut worst_z = f64::INFINITY;
    for _ in 0..20 {
        let w = rng.uniform_range(-3.0, 3.0);
        let b = rng.uniform_range(-1.0, 1.0);
        let density = VicinalDensity::new(vec![
            VicinalComponent::identity(NoiseScale::Amplitude(rng.uniform_range(0.1, 0.5))).unwrap(),
            VicinalComponent::identity(NoiseScale::Amplitude(rng.uniform_range(0.5, 1.5))).unwrap(),
        ])
        .unwrap();
        let pairs: Vec<(Signal, usize)> = (0..n)
            .map(|_| {
                let x = Signal::new(vec![rng.uniform_range(-2.0, 2.0)], SR).unwrap();
                (x, rng.index(2))
            })
            .collect();
        let prob = |s: &Signal, y: usize| {
            let p1 = sigmoid(w * s.samples()[0] + b);
            if y == 1 {
                p1
            } else {
                1.0 - p1
            }
        };
        let mut values = vec![Vec::new(); n];
        let mut pair = 0;
        let mut seen = 0;
        let ell = vicinal_nll(
            |s: &Signal, y: &usize| {
                values[pair].push(-prob(s, *y).ln());
                seen += 1;
                if seen % m == 0 {
                    pair += 1;
                }
                Ok::<_, String>(prob(s, *y).ln())
            },
            &pairs,
            &density,
            m,
            &mut rng,
        )
        .unwrap();
        let var_ell: f64 = values
            .iter()
            .map(|v| {
                let mean = v.iter().sum::<f64>() / m as f64;
                v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64 / m as f64
            })
            .sum::<f64>()
            / (n * n) as f64;
        let mut bound = 0.0;
        let mut var_bound = 0.0;
        for (x, y) in &pairs {
            let ps: Vec<f64> = sample_vicinal(x, &density, big, &mut rng)
                .unwrap()
                .iter()
                .map(|s| prob(&s.signal, *y))
                .collect();
            let mean = ps.iter().sum::<f64>() / big as f64;
            let var = ps.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (big - 1) as f64;
            bound -= mean.ln() / n as f64;
            var_bound += var / big as f64 / (mean * mean) / (n * n) as f64;
        }
        let se = (var_ell + var_bound).sqrt();
        let z = (ell - bound) / se;
        worst_z = worst_z.min(z);
        if ell >= bound - 2.0 * se {
            ok += 1;
        }
    }
    Outcome {
        pass: ok == 20,
        detail: format!("{ok}/20 toy models satisfy the bound within 2 standard errors, smallest (l - bound)/se {worst_z:.2}"),
    }
}

fn determinism() -> Outcome {
    let input = encode_wav(&speech_like(2 * SR as usize, 8)).0;
    let run = || -> Vec<Vec<u8>> {
        let x = decode_wav(&input).unwrap();
        Scheme::ALL
            .iter()
            .map(|&s| {
                let (y, _) =
                    augment(&x, s, &AugmentConfig::default(), &mut RngState::new(1234)).unwrap();
                encode_wav(&y).0
            })
            .collect()
    };
    let (first, second) = (run(), run());
    let same = first.iter().zip(&second).filter(|(a, b)| a == b).count();
    Outcome {
        pass: same == Scheme::ALL.len(),
        detail: format!("{same}/4 schemes byte-identical across two runs"),
    }
}

fn online_policy() -> Outcome {
    let x = speech_like(64, 9);
    let cfg = AugmentConfig::default();
    let mut rng = RngState::new(10);
    let draws = 10_000;
    let kept = (0..draws)
        .filter(|_| {
            let (_, rec) = online_augment(&x, &Scheme::ALL, &cfg, 0.2, &mut rng).unwrap();
            rec.scheme().is_none()
        })
        .count();
    let frac = kept as f64 / draws as f64;
    Outcome {
        pass: (frac - 0.2).abs() <= 0.012,
        detail: format!("keep fraction {frac:.4} over {draws} draws (target 0.2 +/- 0.012)"),
    }
}

fn throughput() -> Outcome {
    let x = speech_like(10 * SR as usize, 11);
    let cfg = AugmentConfig::default();
    let mut parts = Vec::new();
    let mut worst: f64 = 0.0;
    let mut fft_path = true;
    for s in Scheme::ALL {
        let mut slowest: f64 = 0.0;
        for seed in 0..5 {
            let start = Instant::now();
            let (_, rec) = augment(&x, s, &cfg, &mut RngState::new(seed)).unwrap();
            slowest = slowest.max(start.elapsed().as_secs_f64() * 1e3);
            if s == Scheme::NoisyRir {
                let taps = freeze(&rec.params, SR).unwrap().filters[0].len();
                fft_path &= taps > FFT_TAP_THRESHOLD;
            }
        }
        worst = worst.max(slowest);
        parts.push(format!("{s} {slowest:.1} ms"));
    }
    Outcome {
        pass: worst < 250.0 && fft_path,
        detail: format!(
            "slowest of 5 calls on 10 s of audio: {} (limit 250 ms); RIR on FFT path: {fft_path}",
            parts.join(", ")
        ),
    }
}

fn main() -> ExitCode {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check); 11] = [
        ("snr_fidelity", snr_fidelity),
        ("notch_exactness", notch_exactness),
        ("band_limiting", band_limiting),
        ("circulant_oracle", circulant_oracle),
        ("rir_physics", rir_physics),
        ("theorem_monte_carlo", theorem_grid),
        ("spectral_constants", definition_constants),
        ("jensen_relation", jensen_relation),
        ("determinism", determinism),
        ("online_policy", online_policy),
        ("throughput", throughput),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let o = check();
        if !o.pass {
            failures += 1;
        }
        println!(
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
