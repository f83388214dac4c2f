use rand::seq::SliceRandom;
use serde_json::json;

use lowbit_core::optim::adam_step;
use lowbit_core::{Error, OptimizerSpec, ParamSlot, Result};

use super::report::ExperimentReport;
use super::sims::{describe_format, streams};
use super::toy::ToyModel;

/// Loss growth beyond this factor over the initial loss counts as a crash.
pub const CRASH_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Minibatch loss before each update.
    pub losses: Vec<f64>,
    pub initial_loss: f64,
    /// Full-data loss after the last update, `NaN` after a crash.
    pub final_loss: f64,
    pub params: Vec<f64>,
    /// Step at which the run diverged.
    pub crashed_at: Option<usize>,
}

impl TrainOutcome {
    pub fn crashed(&self) -> bool {
        self.crashed_at.is_some()
    }
}

fn diverged(loss: f64, initial: f64) -> bool {
    !loss.is_finite() || loss > CRASH_FACTOR * initial
}

/// Trains `model` from its initial parameters. Minibatches come from a
/// seeded reshuffle every epoch; divergence ends the run early and is
/// reported in the outcome rather than as an error.
pub fn train(model: &ToyModel, spec: &OptimizerSpec, steps: usize, seed: u64) -> Result<TrainOutcome> {
    let initial_loss = model.loss(&model.params);
    if !initial_loss.is_finite() {
        return Err(Error::InvalidParameter {
            name: "model",
            reason: "initial loss is not finite",
        });
    }
    let (mut order_rng, mut noise) = streams(seed);
    let n = model.data.len();
    let batch = model.batch_size.clamp(1, n.max(1));
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;

    let mut slot = ParamSlot::new(model.params.clone(), spec)?;
    let mut losses = Vec::with_capacity(steps);
    let mut crashed_at = None;
    for step in 0..steps {
        if cursor + batch > n {
            order.shuffle(&mut order_rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + batch];
        cursor += batch;
        let (loss, grad) = model.loss_grad(&slot.weights, Some(idx));
        losses.push(loss);
        if diverged(loss, initial_loss) {
            crashed_at = Some(step);
            break;
        }
        match adam_step(&mut slot, &grad, spec, &mut noise) {
            Ok(()) => {}
            Err(Error::NonFinite(_)) => {
                crashed_at = Some(step);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let mut final_loss = model.loss(&slot.weights);
    if crashed_at.is_none() && diverged(final_loss, initial_loss) {
        crashed_at = Some(steps);
    }
    if crashed_at.is_some() {
        final_loss = f64::NAN;
    }
    Ok(TrainOutcome {
        losses,
        initial_loss,
        final_loss,
        params: slot.weights,
        crashed_at,
    })
}

pub fn describe_spec(spec: &OptimizerSpec) -> serde_json::Value {
    json!({
        "family": format!("{:?}", spec.family),
        "lr": spec.lr,
        "beta1": spec.beta1,
        "beta2": spec.beta2,
        "epsilon": spec.epsilon,
        "weight_decay": spec.weight_decay,
        "bias_correction": spec.bias_correction,
        "signed_state": describe_format(&spec.signed_state),
        "unsigned_state": describe_format(&spec.unsigned_state),
    })
}

/// [`train`] wrapped in a report; `every` thins the per-step loss rows.
pub fn train_report(
    model: &ToyModel,
    spec: &OptimizerSpec,
    steps: usize,
    seed: u64,
    every: usize,
) -> Result<ExperimentReport> {
    let out = train(model, spec, steps, seed)?;
    let mut report = ExperimentReport::new(
        "train",
        seed,
        json!({
            "model": model.kind,
            "examples": model.data.len(),
            "dim": model.data.dim,
            "hidden": model.hidden,
            "l2": model.l2,
            "batch_size": model.batch_size,
            "steps": steps,
            "optimizer": describe_spec(spec),
        }),
    );
    let every = every.max(1);
    for (t, l) in out.losses.iter().enumerate() {
        if t % every == 0 || t + 1 == out.losses.len() {
            report.push(t, "train", "batch_loss", *l);
        }
    }
    report.metrics.insert("initial_loss".into(), out.initial_loss);
    report.metrics.insert("final_loss".into(), out.final_loss);
    report
        .metrics
        .insert("crashed".into(), if out.crashed() { 1.0 } else { 0.0 });
    if let Some(s) = out.crashed_at {
        report.metrics.insert("crash_step".into(), s as f64);
    }
    Ok(report)
}

/// Final loss for each first-moment momentum in `betas`, everything else
/// taken from `spec`.
pub fn beta1_sweep(
    model: &ToyModel,
    spec: &OptimizerSpec,
    betas: &[f64],
    steps: usize,
    seed: u64,
) -> Result<Vec<(f64, TrainOutcome)>> {
    betas
        .iter()
        .map(|&b| {
            let s = OptimizerSpec { beta1: b, ..spec.clone() };
            Ok((b, train(model, &s, steps, seed)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use lowbit_core::Family;

    #[test]
    fn full_precision_logistic_converges() {
        let m = ToyModel::logistic_regression(1000, 10, 0.5, 0);
        let spec = OptimizerSpec::new(Family::Adam, 0.01);
        let out = train(&m, &spec, 1000, 0).unwrap();
        assert!(!out.crashed());
        assert!(out.final_loss < 0.1 * out.initial_loss, "{}", out.final_loss);
    }

    #[test]
    fn huge_learning_rate_is_flagged_not_fatal() {
        let m = ToyModel::mlp(100, 3, 8, 0);
        let mut spec = OptimizerSpec::new(Family::Adam, 1e6);
        spec.epsilon = 1e-300;
        let out = train(&m, &spec, 200, 0).unwrap();
        assert!(out.crashed());
        assert!(out.final_loss.is_nan());
    }

    #[test]
    fn same_seed_same_trace() {
        let m = ToyModel::mlp(100, 3, 8, 2);
        let spec = lowbit_core::Preset::Solo2Scratch
            .apply(&OptimizerSpec::new(Family::AdamW, 0.01))
            .unwrap();
        let a = train_report(&m, &spec, 50, 9, 1).unwrap();
        let b = train_report(&m, &spec, 50, 9, 1).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }
}
