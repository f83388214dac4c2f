//! Synthetic EMA experiments on uniform, decaying and drifting signals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use lowbit_core::quant::quantize_log_dither;
use lowbit_core::{EmaConfig, EmaState, Error, Result, StateFormat};

use super::report::ExperimentReport;

/// Quantization randomness gets its own stream so that every format sees the
/// same signals for a given seed.
pub(crate) fn streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let signals = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    noise.set_stream(1);
    (signals, noise)
}

pub fn describe_format(format: &StateFormat) -> serde_json::Value {
    match format {
        StateFormat::FullPrecision => json!({ "kind": "full-precision" }),
        StateFormat::Quantized(q) => json!({
            "kind": "quantized",
            "scheme": q.scheme().name(),
            "bits": q.bits(),
            "rounding": q.mode().name(),
            "block_size": q.block_size(),
            "p_quantile": q.p_quantile(),
        }),
    }
}

/// `format` with its block size replaced, or unchanged for full precision.
pub fn with_block_size(format: &StateFormat, block_size: usize) -> Result<StateFormat> {
    Ok(match format {
        StateFormat::FullPrecision => StateFormat::FullPrecision,
        StateFormat::Quantized(q) => StateFormat::Quantized(q.clone().with_block_size(block_size)?),
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let k = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

/// EMA of i.i.d. `U[0, 1]` signals from a `U[0, 1]` start, quantizing the
/// whole tensor as one block.
pub fn uniform_signal_experiment(
    n: usize,
    beta: f64,
    format: &StateFormat,
    iters: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    if n == 0 || iters == 0 {
        return Err(Error::InvalidParameter {
            name: "n/iters",
            reason: "need at least one element and one iteration",
        });
    }
    let format = with_block_size(format, n)?;
    let cfg = EmaConfig::new(beta, format.clone())?;
    let (mut signals, mut noise) = streams(seed);

    let mut report = ExperimentReport::new(
        "ema-sim",
        seed,
        json!({ "n": n, "beta": beta, "iters": iters, "format": describe_format(&format) }),
    );
    let x0: Vec<f64> = (0..n).map(|_| signals.gen::<f64>()).collect();
    let mut state = EmaState::init(&x0, &cfg, &mut noise)?;
    let mut z = vec![0.0; n];
    let mut values = state.read(&cfg)?;
    let initial_mean = mean(&values);
    for it in 0..=iters {
        if it > 0 {
            z.iter_mut().for_each(|v| *v = signals.gen::<f64>());
            state.step(&z, &cfg, &mut noise)?;
            values = state.read(&cfg)?;
        }
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        report.push(it, "state", "mean", mean(&values));
        report.push(it, "state", "q10", quantile(&sorted, 0.1));
        report.push(it, "state", "q50", quantile(&sorted, 0.5));
        report.push(it, "state", "q90", quantile(&sorted, 0.9));
    }

    report.metrics.insert("initial_mean".into(), initial_mean);
    report.metrics.insert("raw_initial_mean".into(), mean(&x0));
    report.metrics.insert("final_mean".into(), mean(&values));
    let mut hist = [0usize; 10];
    for v in &values {
        hist[((v * 10.0) as usize).min(9)] += 1;
    }
    for (k, h) in hist.iter().enumerate() {
        report.metrics.insert(format!("hist_{k}"), *h as f64 / n as f64);
    }
    Ok(report)
}

pub const DECAY_BETA: f64 = 0.9;
pub const DECAY_BITS: u32 = 8;

/// Mean number of zero-signal EMA steps an 8-bit log-dithered state needs to
/// move `s` codes down when the base is `α = β^c`, with `β = 0.9` and the
/// scale held fixed.
pub fn decay_experiment(c: u32, s: u32, trials: usize, seed: u64) -> Result<f64> {
    if c == 0 || s == 0 || trials == 0 {
        return Err(Error::InvalidParameter {
            name: "c/s/trials",
            reason: "must all be at least 1",
        });
    }
    if s >= (1 << DECAY_BITS) - 1 {
        return Err(Error::InvalidParameter {
            name: "s",
            reason: "walk would leave the code range",
        });
    }
    let alpha = DECAY_BETA.powi(c as i32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0u64;
    for _ in 0..trials {
        let mut code = 0u32;
        while code < s {
            let x = DECAY_BETA * alpha.powi(code as i32);
            let xi = rng.gen_range(-0.5..0.5);
            code = quantize_log_dither(x, 1.0, alpha, DECAY_BITS, xi)? as u32;
            total += 1;
        }
    }
    Ok(total as f64 / trials as f64)
}

/// Second-moment-like signals: squared lognormal draws whose scale drifts
/// geometrically, `z = (e^{drift·t} · e^{σ·ε})²`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SignalSpec {
    pub n: usize,
    pub beta: f64,
    pub sigma: f64,
    pub drift: f64,
}

impl Default for SignalSpec {
    fn default() -> Self {
        SignalSpec {
            n: 4096,
            beta: 0.999,
            sigma: 0.5,
            drift: 0.005,
        }
    }
}

impl SignalSpec {
    fn draw<R: Rng>(&self, t: usize, rng: &mut R, out: &mut [f64]) {
        let scale = (self.drift * t as f64).exp();
        for z in out {
            let e: f64 = StandardNormal.sample(rng);
            let a = scale * (self.sigma * e).exp();
            *z = a * a;
        }
    }
}

/// Full-precision EMA trace `x_t = β·x_{t-1} + (1-β)·z_t`, `x_0 = z_0`.
pub fn reference_ema(beta: f64, signals: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(signals.len());
    for z in signals {
        let next = match out.last() {
            None => z.clone(),
            Some(x) => x.iter().zip(z).map(|(x, z)| beta * x + (1.0 - beta) * z).collect(),
        };
        out.push(next);
    }
    out
}

/// Distance between quantized EMA states and the full-precision EMA of the
/// same signals, per step, for each labelled format and block size.
pub fn tracking_benchmark(
    signal: &SignalSpec,
    schemes: &[(String, StateFormat)],
    block_sizes: &[usize],
    steps: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    if schemes.is_empty() || block_sizes.is_empty() || signal.n == 0 {
        return Err(Error::InvalidParameter {
            name: "schemes",
            reason: "need at least one scheme, one block size and one element",
        });
    }
    let mut report = ExperimentReport::new(
        "track",
        seed,
        json!({
            "signal": signal,
            "steps": steps,
            "block_sizes": block_sizes,
            "schemes": schemes.iter().map(|(l, f)| json!({ "label": l, "format": describe_format(f) })).collect::<Vec<_>>(),
        }),
    );
    for (label, format) in schemes {
        for &bs in block_sizes {
            let series = format!("{label}@{bs}");
            let cfg = EmaConfig::new(signal.beta, with_block_size(format, bs)?)?;
            let (mut sig_rng, mut noise) = streams(seed);
            let mut z = vec![0.0; signal.n];
            signal.draw(0, &mut sig_rng, &mut z);
            let mut oracle = z.clone();
            let mut state = EmaState::init(&z, &cfg, &mut noise)?;
            let mut total = 0.0;
            for t in 0..=steps {
                if t > 0 {
                    signal.draw(t, &mut sig_rng, &mut z);
                    for (x, z) in oracle.iter_mut().zip(&z) {
                        *x = signal.beta * *x + (1.0 - signal.beta) * z;
                    }
                    state.step(&z, &cfg, &mut noise)?;
                }
                let got = state.read(&cfg)?;
                let mae = got.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).sum::<f64>()
                    / signal.n as f64;
                let rel = mae / mean(&oracle);
                report.push(t, &series, "mae", mae);
                report.push(t, &series, "rel_mae", rel);
                total += rel;
            }
            report
                .metrics
                .insert(format!("mean_rel_mae/{series}"), total / (steps + 1) as f64);
        }
    }
    Ok(report)
}
