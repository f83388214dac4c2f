use lowbit_core::ema::{swamping_beta_threshold, swamping_holds, RadiusChoice};
use lowbit_core::levels::{build_log_levels, level_radius, radius_stats};
use lowbit_core::optim::adam_step;
use lowbit_core::quant::{dequantize, quantize_nearest};
use lowbit_core::{
    BlockQuantization, EmaConfig, EmaState, Family, LevelTable, OptimizerSpec, ParamSlot, Preset,
    RoundingMode, SchemeKind, StateFormat,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixed_table() -> impl Strategy<Value = LevelTable> {
    let scheme = prop::sample::select(
        SchemeKind::ALL
            .iter()
            .copied()
            .filter(|s| !s.is_log())
            .collect::<Vec<_>>(),
    );
    (scheme, 2u32..=8).prop_map(|(s, b)| LevelTable::new(s, b).unwrap())
}

fn any_table() -> impl Strategy<Value = LevelTable> {
    prop_oneof![
        fixed_table(),
        (2u32..=8, 0.05f64..0.95).prop_map(|(b, a)| build_log_levels(b, a).unwrap()),
    ]
}

proptest! {
    #[test]
    fn tables_are_bounded_and_ordered(t in any_table()) {
        prop_assert_eq!(t.len(), 1usize << t.bits());
        let lo = if t.is_signed() { -1.0 } else { 0.0 };
        prop_assert!(t.levels().iter().all(|&y| (lo..=1.0).contains(&y)));
        prop_assert!(t.levels().contains(&1.0));
        let d = t.distinct_ascending();
        prop_assert!(d.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn radius_summary_is_ordered(t in any_table()) {
        let s = radius_stats(&t);
        prop_assert!(0.0 <= s.r_min && s.r_min <= s.r_median && s.r_median <= s.r_max);
        prop_assert_eq!(s.per_level.len(), t.len());
        for (k, r) in s.per_level.iter().enumerate() {
            prop_assert_eq!(Some(*r), level_radius(&t, k));
            prop_assert!(*r >= s.r_min && *r <= s.r_max);
        }
    }

    #[test]
    fn nearest_error_within_max_radius(t in fixed_table(), u in 0.0f64..=1.0, delta in 1e-3f64..1e3) {
        // Inside the table's range; beyond it values clip to the end levels.
        let x = t.min_level() + u * (t.max_level() - t.min_level());
        let code = quantize_nearest(x * delta, delta, &t);
        let back = dequantize(code.into(), delta, &t).unwrap();
        prop_assert!((back - x * delta).abs() <= radius_stats(&t).r_max * delta * (1.0 + 1e-12));
    }

    #[test]
    fn swamped_codes_do_not_move(t in fixed_table(), code_seed in any::<usize>(), z in -1.0f64..=1.0) {
        let s = radius_stats(&t);
        let code = code_seed % t.len();
        let beta = 1.0 - s.per_level[code] / 2.0 + 1e-9;
        let z = if t.is_signed() { z } else { z.abs() };
        if beta < 1.0 && swamping_holds(code, &t, beta, z, 1.0) {
            let y = t.level(code).unwrap();
            let next = quantize_nearest(beta * y + (1.0 - beta) * z, 1.0, &t);
            prop_assert_eq!(t.canonical_code(next.into()), t.canonical_code(code));
        }
    }

    #[test]
    fn thresholds_fall_with_width(signed in any::<bool>()) {
        let kind = if signed { SchemeKind::DynamicExponentSigned } else { SchemeKind::DynamicExponentUnsigned };
        let mut prev = 0.0;
        for b in 2..=8 {
            let th = swamping_beta_threshold(&radius_stats(&LevelTable::new(kind, b).unwrap()), signed, RadiusChoice::Median);
            prop_assert!(th > prev && th < 1.0);
            prev = th;
        }
    }

    #[test]
    fn eight_bit_state_tracks_full_precision(
        signals in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 64), 1..20),
        seed in any::<u64>(),
    ) {
        let q = BlockQuantization::new(SchemeKind::LinearUnsigned, 8, RoundingMode::Stochastic)
            .unwrap()
            .with_block_size(64)
            .unwrap();
        let cfg = EmaConfig::new(0.9, StateFormat::Quantized(q)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = EmaState::init(&signals[0], &cfg, &mut rng).unwrap();
        let mut oracle = signals[0].clone();
        for z in &signals[1..] {
            state.step(z, &cfg, &mut rng).unwrap();
            for (x, z) in oracle.iter_mut().zip(z) {
                *x = 0.9 * *x + 0.1 * z;
            }
        }
        let scale = oracle.iter().cloned().fold(0.0, f64::max);
        for (a, b) in state.read(&cfg).unwrap().iter().zip(&oracle) {
            // Each requantization moves a value by at most one level gap.
            prop_assert!((a - b).abs() <= 10.0 * scale / 255.0 * signals.len() as f64 + 1e-9);
        }
    }

    #[test]
    fn optimizer_steps_stay_finite(
        grads in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 300), 1..10),
        preset in prop::sample::select(Preset::ALL.to_vec()),
        family in prop::sample::select(vec![Family::Adam, Family::AdamW, Family::AdaBelief]),
    ) {
        let mut base = OptimizerSpec::new(family, 1e-3);
        base.weight_decay = 0.01;
        let spec = preset.apply(&base).unwrap();
        let mut slot = ParamSlot::new(vec![0.5; 300], &spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for g in &grads {
            adam_step(&mut slot, g, &spec, &mut rng).unwrap();
        }
        prop_assert_eq!(slot.step_count(), grads.len() as u64);
        prop_assert!(slot.weights.iter().all(|w| w.is_finite()));
        prop_assert!(slot.read_second_moment(&spec).unwrap().iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn gradient_length_mismatch_is_an_error() {
    let spec = OptimizerSpec::new(Family::Adam, 1e-3);
    let mut slot = ParamSlot::new(vec![0.0; 4], &spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(adam_step(&mut slot, &[1.0; 3], &spec, &mut rng).is_err());
    assert!(adam_step(&mut slot, &[1.0, f64::NAN, 0.0, 0.0], &spec, &mut rng).is_err());
    assert_eq!(slot.weights, vec![0.0; 4]);
}
