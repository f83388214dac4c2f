//! Reproduction checks with pinned tolerances. Each check returns a
//! [`CheckResult`]; the `acceptance` test target and `lowbit repro` both run
//! them through [`run_all`].

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use lowbit_core::ema::{swamping_beta_threshold, RadiusChoice};
use lowbit_core::levels::{level_radius, radius_stats};
use lowbit_core::optim::{adam_step, adaptive_lr_variance, beta_prime_for_bits, beta_prime_for_tables};
use lowbit_core::packed::{packed_len, storage_bits};
use lowbit_core::quant::{dequantize, quantize_log_dither, quantize_nearest, quantize_stochastic};
use lowbit_core::{
    BlockQuantization, BlockQuantizedTensor, Family, LevelTable, OptimizerSpec, PackedCodes,
    ParamSlot, Preset, RoundingMode, SchemeKind, StateFormat,
};

use crate::checkpoint::{deserialize, footprint_bytes, serialize, HEADER_LEN};
use crate::harness::{
    decay_experiment, finite_difference_check, train, uniform_signal_experiment, ToyModel,
};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    /// Whether the numeric checks passed, regardless of runtime.
    pub values_ok: bool,
    pub detail: String,
    pub elapsed_ms: u128,
    pub budget_ms: Option<u128>,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let budget = match self.budget_ms {
            Some(b) => format!("{} ms / {} ms", self.elapsed_ms, b),
            None => format!("{} ms", self.elapsed_ms),
        };
        write!(
            f,
            "{} [{:>2}] {:<28} ({budget}) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail
        )
    }
}

/// Collects individual comparisons and remembers the first few failures.
#[derive(Default)]
struct Tally {
    total: usize,
    failed: usize,
    notes: Vec<String>,
    worst: f64,
}

impl Tally {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.total += 1;
        if !ok {
            self.failed += 1;
            if self.notes.len() < 4 {
                self.notes.push(what());
            }
        }
    }

    /// `|got - want| <= tol`, tracking the largest gap seen.
    fn close(&mut self, label: &str, got: f64, want: f64, tol: f64) {
        let gap = (got - want).abs();
        if gap.is_finite() {
            self.worst = self.worst.max(gap);
        }
        self.check(gap <= tol, || format!("{label}: got {got:.5}, want {want:.5} ± {tol:.5}"));
    }

    fn summary(&self, extra: &str) -> String {
        let mut s = format!("{}/{} ok", self.total - self.failed, self.total);
        if !extra.is_empty() {
            s.push_str("; ");
            s.push_str(extra);
        }
        if !self.notes.is_empty() {
            s.push_str("; ");
            s.push_str(&self.notes.join("; "));
        }
        s
    }
}

fn finish(
    id: u8,
    title: &'static str,
    start: Instant,
    budget: Option<Duration>,
    tally: Tally,
    extra: &str,
) -> CheckResult {
    let elapsed = start.elapsed();
    let values_ok = tally.failed == 0 && tally.total > 0;
    let in_time = budget.is_none_or(|b| elapsed <= b);
    let mut detail = tally.summary(extra);
    if !in_time {
        detail.push_str("; over time budget");
    }
    CheckResult {
        id,
        title,
        passed: values_ok && in_time,
        values_ok,
        detail,
        elapsed_ms: elapsed.as_millis(),
        budget_ms: budget.map(|b| b.as_millis()),
    }
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn table(scheme: SchemeKind, bits: u32) -> LevelTable {
    LevelTable::new(scheme, bits).expect("supported table")
}

/// Reference radii: `(bits, r_min, r_median, r_max)`; `None` where no value
/// is listed.
type RadiusRow = (u32, Option<f64>, Option<f64>, Option<f64>);

const LINEAR_UNSIGNED_RADII: [(u32, f64); 4] = [(8, 0.002), (4, 0.033), (3, 0.071), (2, 0.167)];
const LINEAR_SIGNED_RADII: [(u32, f64); 4] = [(8, 0.004), (4, 0.071), (3, 0.167), (2, 0.500)];
const DE_UNSIGNED_RADII: [RadiusRow; 4] = [
    (8, Some(0.000), Some(0.002), Some(0.004)),
    (4, Some(0.002), Some(0.034), Some(0.056)),
    (3, Some(0.016), Some(0.067), Some(0.113)),
    (2, Some(0.113), Some(0.163), Some(0.225)),
];
const DE_SIGNED_RADII: [RadiusRow; 7] = [
    (8, Some(0.000), Some(0.004), Some(0.007)),
    (7, None, Some(0.008), Some(0.014)),
    (6, None, Some(0.017), Some(0.028)),
    (5, None, Some(0.034), Some(0.056)),
    (4, Some(0.003), Some(0.067), Some(0.113)),
    (3, Some(0.028), Some(0.135), Some(0.225)),
    (2, Some(0.225), Some(0.275), Some(0.275)),
];

pub fn radii_table() -> CheckResult {
    let start = Instant::now();
    let mut t = Tally::default();
    for (scheme, rows) in [
        (SchemeKind::LinearUnsigned, &LINEAR_UNSIGNED_RADII),
        (SchemeKind::LinearSigned, &LINEAR_SIGNED_RADII),
    ] {
        for &(bits, r) in rows {
            let s = radius_stats(&table(scheme, bits));
            let label = format!("{scheme} {bits}-bit");
            t.close(&format!("{label} r_min"), s.r_min, r, 0.001);
            t.close(&format!("{label} r_median"), s.r_median, r, 0.001);
            t.close(&format!("{label} r_max"), s.r_max, r, 0.001);
        }
    }
    for (scheme, rows) in [
        (SchemeKind::DynamicExponentUnsigned, &DE_UNSIGNED_RADII[..]),
        (SchemeKind::DynamicExponentSigned, &DE_SIGNED_RADII[..]),
    ] {
        for &(bits, lo, med, hi) in rows {
            let s = radius_stats(&table(scheme, bits));
            let label = format!("{scheme} {bits}-bit");
            for (name, got, want) in [
                ("r_min", s.r_min, lo),
                ("r_median", s.r_median, med),
                ("r_max", s.r_max, hi),
            ] {
                if let Some(want) = want {
                    t.close(&format!("{label} {name}"), got, want, 0.005);
                }
            }
        }
    }
    let extra = format!("max gap {:.4}", t.worst);
    finish(1, "radii table", start, secs(1), t, &extra)
}

/// `β'` upper bounds for `β = 0.9`, rows `b' = 4, 3, 2`, columns `b = 8..5`.
const BETA_PRIME_TABLE: [(u32, [f64; 4]); 3] = [
    (4, [0.350, 0.518, 0.695, 0.820]),
    (3, [0.211, 0.348, 0.531, 0.694]),
    (2, [0.116, 0.207, 0.357, 0.527]),
];

pub fn beta_prime_table() -> CheckResult {
    let start = Instant::now();
    let mut t = Tally::default();
    // Medians measured on the constructed tables are reported alongside; the
    // reference table was built from medians rounded to three decimals, so
    // the measured variant drifts by up to ~0.012 for 7- and 8-bit sources.
    let mut measured_gap = 0.0f64;
    for (to, row) in BETA_PRIME_TABLE {
        for (from, want) in (5..=8).rev().zip(row) {
            let label = format!("{from}->{to}");
            match beta_prime_for_bits(0.9, from, to) {
                Ok(b) => t.close(&label, b, want, 0.005),
                Err(e) => t.check(false, || format!("{label}: {e}")),
            }
            let a = radius_stats(&table(SchemeKind::DynamicExponentSigned, from));
            let b = radius_stats(&table(SchemeKind::DynamicExponentSigned, to));
            if let Ok(v) = beta_prime_for_tables(0.9, &a, &b) {
                measured_gap = measured_gap.max((v - want).abs());
            }
        }
    }
    let extra = format!("max gap {:.4} (measured medians {measured_gap:.4})", t.worst);
    finish(2, "beta-prime table", start, secs(1), t, &extra)
}

const LINEAR_THRESHOLDS: [(u32, f64); 4] = [(8, 0.999), (4, 0.967), (3, 0.929), (2, 0.833)];
const DE_THRESHOLDS: [(u32, f64); 4] = [(8, 0.998), (4, 0.966), (3, 0.933), (2, 0.837)];

/// Momentum used for the exhaustive grid: `threshold + 0.005`, pulled back
/// halfway to 1 when that would not be a valid momentum.
pub fn grid_beta(threshold: f64) -> f64 {
    let b = threshold + 0.005;
    if b < 1.0 {
        b
    } else {
        0.5 * (1.0 + threshold)
    }
}

/// Codes whose nearest-rounded update moved, over every covered level and a
/// 1001-point signal grid on `[0, 1]` with `Δ = 1`. Returns `(covered, moved)`.
fn swamping_grid(table: &LevelTable, beta: f64, min_radius: f64) -> (usize, usize) {
    let mut covered = 0;
    let mut moved = 0;
    for code in 0..table.len() {
        let r = level_radius(table, code).unwrap_or(0.0);
        if r < min_radius || table.canonical_code(code) != code {
            continue;
        }
        covered += 1;
        let y = table.levels()[code];
        for i in 0..=1000 {
            let z = i as f64 / 1000.0;
            let x = beta * y + (1.0 - beta) * z;
            if quantize_nearest(x, 1.0, table) as usize != code {
                moved += 1;
            }
        }
    }
    (covered, moved)
}

pub fn swamping_thresholds() -> CheckResult {
    let start = Instant::now();
    let mut t = Tally::default();
    let mut notes = Vec::new();
    for (scheme, rows, choice) in [
        (SchemeKind::LinearUnsigned, LINEAR_THRESHOLDS, RadiusChoice::Min),
        (SchemeKind::DynamicExponentUnsigned, DE_THRESHOLDS, RadiusChoice::Median),
    ] {
        for (bits, want) in rows {
            let tab = table(scheme, bits);
            let stats = radius_stats(&tab);
            let th = swamping_beta_threshold(&stats, false, choice);
            let label = format!("{scheme} {bits}-bit");
            t.close(&label, th, want, 0.002);
            let r = match choice {
                RadiusChoice::Min => stats.r_min,
                RadiusChoice::Median => stats.r_median,
            };
            let beta = grid_beta(th);
            let (covered, moved) = swamping_grid(&tab, beta, r);
            t.check(covered > 0 && moved == 0, || {
                format!("{label} grid at beta {beta:.4}: {moved} code changes over {covered} levels")
            });
            notes.push(format!("{label}:{covered}/{}", tab.len()));
        }
    }
    let extra = format!("grid levels {}", notes.join(" "));
    finish(3, "swamping thresholds", start, secs(10), t, &extra)
}

pub const FIG2_SEED: u64 = 0;

pub fn uniform_signal() -> CheckResult {
    let start = Instant::now();
    let mut t = Tally::default();
    let log2 = BlockQuantization::new(SchemeKind::LogUnsigned, 2, RoundingMode::LogDither)
        .expect("valid config");
    let lin2 = BlockQuantization::new(SchemeKind::LinearUnsigned, 2, RoundingMode::Nearest)
        .expect("valid config");
    let run = |f: StateFormat| uniform_signal_experiment(1000, 0.999, &f, 100, FIG2_SEED);
    let mut extra = String::new();
    match (
        run(StateFormat::Quantized(log2)),
        run(StateFormat::Quantized(lin2)),
        run(StateFormat::FullPrecision),
    ) {
        (Ok(log), Ok(lin), Ok(fp)) => {
            let m = |r: &crate::harness::ExperimentReport, k: &str| r.metric(k).unwrap_or(f64::NAN);
            t.close("log 2-bit final mean", m(&log, "final_mean"), 0.5, 0.05);
            t.close(
                "linear 2-bit final vs initial",
                m(&lin, "final_mean"),
                m(&lin, "initial_mean"),
                0.02,
            );
            t.close("full precision final mean", m(&fp, "final_mean"), 0.5, 0.05);
            extra = format!(
                "log {:.4}, linear {:.4} (start {:.4}), fp {:.4}",
                m(&log, "final_mean"),
                m(&lin, "final_mean"),
                m(&lin, "initial_mean"),
                m(&fp, "final_mean")
            );
        }
        (a, b, c) => {
            for e in [a.err(), b.err(), c.err()].into_iter().flatten() {
                t.check(false, || e.to_string());
            }
        }
    }
    finish(4, "uniform-signal EMA", start, secs(5), t, &extra)
}

pub fn decay_times() -> CheckResult {
    let start = Instant::now();
    let mut t = Tally::default();
    let mut got = Vec::new();
    for (c, s) in [(1u32, 3u32), (2, 3), (5, 2)] {
        let want = (c * s) as f64;
        match decay_experiment(c, s, 10_000, 0) {
            Ok(m) => {
                t.close(&format!("c={c} s={s}"), m, want, 0.05 * want);
                got.push(format!("({c},{s})->{m:.3}"));
            }
            Err(e) => t.check(false, || e.to_string()),
        }
    }
    finish(5, "log-dither decay", start, secs(5), t, &got.join(" "))
}

pub fn unbiased_rounding() -> CheckResult {
    const N: usize = 100_000;
    let start = Instant::now();
    let mut t = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for scheme in [
        SchemeKind::LinearUnsigned,
        SchemeKind::LinearSigned,
        SchemeKind::DynamicExponentUnsigned,
        SchemeKind::DynamicExponentSigned,
    ] {
        for bits in [2, 4, 8] {
            let tab = table(scheme, bits);
            let (lo, hi) = (tab.min_level(), tab.max_level());
            for _ in 0..3 {
                let v = rng.gen_range(lo..hi);
                let distinct = tab.distinct_ascending();
                let j = distinct.partition_point(|&y| y <= v);
                let (y_lo, y_hi) = (distinct[j - 1], distinct[j]);
                let sigma = ((y_hi - v) * (v - y_lo)).sqrt();
                let mut sum = 0.0;
                for _ in 0..N {
                    let c = quantize_stochastic(v, 1.0, &tab, rng.gen());
                    sum += dequantize(c as u32, 1.0, &tab).unwrap_or(f64::NAN);
                }
                let mean = sum / N as f64;
                t.close(
                    &format!("{scheme} {bits}-bit at {v:.4}"),
                    mean,
                    v,
                    3.0 * sigma / (N as f64).sqrt(),
                );
            }
        }
    }
    // log dither: expected code equals the fractional log-index
    for bits in [2u32, 4, 8] {
        let last = ((1u32 << bits) - 1) as f64;
        let base = 0.6f64;
        for _ in 0..3 {
            let index = rng.gen_range(0.5..last - 0.5);
            let x = base.powf(index);
            let frac = index - index.floor();
            let sigma = (frac * (1.0 - frac)).sqrt();
            let mut sum = 0.0;
            for _ in 0..N {
                let xi = rng.gen_range(-0.5..0.5);
                sum += quantize_log_dither(x, 1.0, base, bits, xi).map_or(f64::NAN, f64::from);
            }
            t.close(
                &format!("log {bits}-bit index {index:.4}"),
                sum / N as f64,
                index,
                3.0 * sigma / (N as f64).sqrt(),
            );
        }
    }
    finish(6, "unbiased rounding", start, secs(30), t, "")
}

/// Tables used by the randomized variance checks.
fn random_table<R: Rng>(rng: &mut R) -> LevelTable {
    let bits = rng.gen_range(2..=8);
    let scheme = [
        SchemeKind::LinearUnsigned,
        SchemeKind::LinearUnsignedNoZero,
        SchemeKind::LinearSigned,
        SchemeKind::DynamicExponentUnsigned,
        SchemeKind::DynamicExponentSigned,
    ][rng.gen_range(0..5)];
    table(scheme, bits)
}

pub fn momentum_variance_bound() -> CheckResult {
    const DRAWS: usize = 10_000;
    let start = Instant::now();
    let mut t = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut tightest = 0.0f64;
    for k in 0..100 {
        let beta = rng.gen_range(0.0..0.999);
        let tab = random_table(&mut rng);
        let delta = rng.gen_range(0.01..10.0);
        let x_hat = delta * rng.gen_range(tab.min_level()..=tab.max_level());
        let scale = beta / (1.0 - beta);
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..DRAWS {
            let c = quantize_stochastic(x_hat, delta, &tab, rng.gen());
            let e = scale * (dequantize(c as u32, delta, &tab).unwrap_or(f64::NAN) - x_hat);
            s1 += e;
            s2 += e * e;
        }
        let n = DRAWS as f64;
        let var = (s2 - s1 * s1 / n) / (n - 1.0);
        let r_max = radius_stats(&tab).r_max;
        let bound = lowbit_core::optim::gradient_variance_bound(beta, r_max, delta);
        if bound > 0.0 {
            tightest = tightest.max(var / bound);
        }
        t.check(var <= bound * 1.05, || {
            format!("config {k} ({} {}-bit, beta {beta:.3}): var {var:.3e} > bound {bound:.3e}", tab.scheme(), tab.bits())
        });
    }
    let extra = format!("max var/bound {tightest:.3}");
    finish(7, "momentum variance bound", start, secs(60), t, &extra)
}

pub fn adaptive_lr_closed_form() -> CheckResult {
    const N: usize = 100_000;
    let start = Instant::now();
    let mut t = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for k in 0..50 {
        let y_lo = rng.gen_range(0.01..0.5);
        let y_hi = y_lo + rng.gen_range(0.01..0.5);
        let x = rng.gen_range(y_lo..y_hi);
        let delta = rng.gen_range(0.1..5.0);
        let Ok(closed) = adaptive_lr_variance(x, delta, y_lo, y_hi) else {
            t.check(false, || format!("triple {k} rejected"));
            continue;
        };
        // simulate the rounding outcome directly
        let p = (y_hi - x) / (y_hi - y_lo);
        let (a, b) = (delta / y_lo.sqrt(), delta / y_hi.sqrt());
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..N {
            let w = if rng.gen::<f64>() < p { a } else { b };
            s1 += w;
            s2 += w * w;
        }
        let n = N as f64;
        let var = (s2 - s1 * s1 / n) / (n - 1.0);
        // standard error of a sample variance of a two-point law
        let q = 1.0 - p;
        let d2 = (a - b) * (a - b);
        let mu4 = p * q * (p * p * p + q * q * q) * d2 * d2;
        let se = ((mu4 - closed * closed) / n).sqrt();
        t.close(&format!("triple {k}"), var, closed, 3.0 * se);
    }
    finish(8, "adaptive-lr variance", start, None, t, "3σ per triple, seed 0")
}

/// Plain Adam/AdamW written out from the textbook recurrences.
struct TextbookAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl TextbookAdam {
    fn step(&mut self, w: &mut [f64], g: &[f64], s: &OptimizerSpec) {
        self.t += 1;
        for i in 0..w.len() {
            let mut gi = g[i];
            if s.family == Family::Adam {
                gi += s.weight_decay * w[i];
            }
            self.m[i] = s.beta1 * self.m[i] + (1.0 - s.beta1) * gi;
            self.v[i] = s.beta2 * self.v[i] + (1.0 - s.beta2) * gi * gi;
            let m_hat = self.m[i] / (1.0 - s.beta1.powi(self.t));
            let v_hat = self.v[i] / (1.0 - s.beta2.powi(self.t));
            if s.family == Family::AdamW {
                w[i] -= s.lr * s.weight_decay * w[i];
            }
            w[i] -= s.lr * m_hat / (v_hat.sqrt() + s.epsilon);
        }
    }
}

pub fn optimizer_equivalence() -> CheckResult {
    let start = Instant::now();
    let mut t = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst = 0.0f64;
    for (family, wd) in [(Family::Adam, 0.0), (Family::Adam, 0.01), (Family::AdamW, 0.05)] {
        let mut spec = OptimizerSpec::new(family, 1e-2);
        spec.weight_decay = wd;
        let w0: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut reference = w0.clone();
        let mut oracle = TextbookAdam { m: vec![0.0; 16], v: vec![0.0; 16], t: 0 };
        let Ok(mut slot) = ParamSlot::new(w0, &spec) else {
            t.check(false, || "slot rejected".into());
            continue;
        };
        for _ in 0..100 {
            let g: Vec<f64> = (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect();
            oracle.step(&mut reference, &g, &spec);
            if let Err(e) = adam_step(&mut slot, &g, &spec, &mut rng) {
                t.check(false, || e.to_string());
                break;
            }
        }
        for (a, b) in slot.weights.iter().zip(&reference) {
            let rel = (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            t.check(rel <= 1e-12, || format!("{family:?} wd {wd}: {a} vs {b}"));
        }
    }
    let models = [
        ToyModel::linear_regression(200, 6, 1),
        ToyModel::logistic_regression(200, 6, 0.5, 2),
        ToyModel::mlp(200, 4, 8, 3),
    ];
    let mut fd_worst = 0.0f64;
    for m in &models {
        for _ in 0..5 {
            let p: Vec<f64> = (0..m.num_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let e = finite_difference_check(m, &p, 1e-5);
            fd_worst = fd_worst.max(e);
            t.check(e <= 1e-4, || format!("{:?} gradient check {e:.2e}", m.kind));
        }
    }
    let extra = format!("max rel {worst:.1e}, max gradient-check {fd_worst:.1e}");
    finish(9, "optimizer equivalence", start, None, t, &extra)
}

/// The separable logistic task used for the training comparison.
pub fn training_task() -> ToyModel {
    ToyModel::logistic_regression(2000, 20, 0.5, 0)
}

pub const TRAIN_STEPS: usize = 5000;
pub const TRAIN_LR: f64 = 0.01;

/// Both moments in 2-bit linear form with nearest rounding and `β₁ = 0.9`.
pub fn nearest_linear_2bit(base: &OptimizerSpec) -> OptimizerSpec {
    let q = |scheme| {
        StateFormat::Quantized(
            BlockQuantization::new(scheme, 2, RoundingMode::Nearest).expect("valid config"),
        )
    };
    OptimizerSpec {
        beta1: 0.9,
        signed_state: q(SchemeKind::LinearSigned),
        unsigned_state: q(SchemeKind::LinearUnsigned),
        ..base.clone()
    }
}

pub fn training_differential() -> CheckResult {
    let start = Instant::now();
    let mut t = Tally::default();
    let model = training_task();
    let base = OptimizerSpec::new(Family::Adam, TRAIN_LR);
    let run = |spec: &OptimizerSpec| {
        train(&model, spec, TRAIN_STEPS, 0).map(|o| if o.crashed() { f64::INFINITY } else { o.final_loss })
    };
    let results = (|| -> lowbit_core::Result<_> {
        let fp = run(&base)?;
        let baseline = run(&nearest_linear_2bit(&base))?;
        let mut presets = Vec::new();
        for p in Preset::ALL {
            presets.push((p, run(&p.apply(&base)?)?));
        }
        Ok((fp, baseline, presets))
    })();
    let mut extra = String::new();
    match results {
        Ok((fp, baseline, presets)) => {
            t.check(fp < 0.1 * std::f64::consts::LN_2, || format!("full precision did not converge: {fp}"));
            let mut parts = vec![format!("fp {fp:.5}"), format!("linear-2 {baseline:.5}")];
            for (p, loss) in presets {
                let tol = if p.signed_bits() == 4 { 0.10 } else { 0.25 };
                t.close(p.name(), loss / fp - 1.0, 0.0, tol);
                t.check(loss < baseline, || format!("{} not better than linear 2-bit", p.name()));
                parts.push(format!("{} {loss:.5}", p.name()));
            }
            extra = parts.join(", ");
        }
        Err(e) => t.check(false, || e.to_string()),
    }
    finish(10, "training differential", start, secs(120), t, &extra)
}

pub fn storage_round_trip() -> CheckResult {
    let start = Instant::now();
    let mut t = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for width in [2u32, 4, 8] {
        for len in 0..=1000usize {
            let codes: Vec<u8> = (0..len).map(|_| rng.gen_range(0..(1u32 << width)) as u8).collect();
            match PackedCodes::pack(&codes, width) {
                Ok(p) => {
                    let ok = p.unpack() == codes && p.as_bytes().len() == (len * width as usize).div_ceil(8);
                    t.check(ok, || format!("width {width} length {len}"));
                }
                Err(e) => t.check(false, || e.to_string()),
            }
        }
    }
    let configs = [
        (SchemeKind::LogUnsigned, 2, RoundingMode::LogDither),
        (SchemeKind::DynamicExponentSigned, 4, RoundingMode::Stochastic),
        (SchemeKind::DynamicExponentUnsigned, 8, RoundingMode::Nearest),
        (SchemeKind::LinearSigned, 3, RoundingMode::Stochastic),
        (SchemeKind::LinearUnsignedNoZero, 5, RoundingMode::Nearest),
    ];
    for (scheme, bits, mode) in configs {
        for len in [0usize, 1, 127, 128, 129, 1000, 1024] {
            let cfg = BlockQuantization::new(scheme, bits, mode).expect("valid config");
            let values: Vec<f64> = (0..len)
                .map(|_| {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    if scheme.is_signed() { v } else { v.abs() }
                })
                .collect();
            let label = format!("{scheme} {bits}-bit len {len}");
            let tensor = match BlockQuantizedTensor::quantize(&values, &cfg, &mut rng) {
                Ok(x) => x,
                Err(e) => {
                    t.check(false, || format!("{label}: {e}"));
                    continue;
                }
            };
            let bytes = serialize(&tensor);
            let back = deserialize(&bytes);
            t.check(
                back.as_ref().is_ok_and(|b| *b == tensor && serialize(b) == bytes),
                || format!("{label}: round trip"),
            );
            let blocks = len.div_ceil(128);
            let meta = if scheme.is_log() { 8 } else { 4 };
            let expected = HEADER_LEN + meta * blocks + packed_len(len, storage_bits(bits));
            t.check(footprint_bytes(&tensor) == expected && bytes.len() == expected, || {
                format!("{label}: footprint {} vs {expected}", footprint_bytes(&tensor))
            });
        }
    }
    finish(11, "storage round trip", start, None, t, "")
}

pub fn run_all() -> Vec<CheckResult> {
    vec![
        radii_table(),
        beta_prime_table(),
        swamping_thresholds(),
        uniform_signal(),
        decay_times(),
        unbiased_rounding(),
        momentum_variance_bound(),
        adaptive_lr_closed_form(),
        optimizer_equivalence(),
        training_differential(),
        storage_round_trip(),
    ]
}
