//! Desk-scale experiments on synthetic signals and toy models.

mod report;
mod sims;
mod toy;
mod train;

pub use report::{ExperimentReport, OutputFormat, Row};
pub use sims::{
    decay_experiment, describe_format, reference_ema, tracking_benchmark, uniform_signal_experiment,
    with_block_size, SignalSpec, DECAY_BETA, DECAY_BITS,
};
pub use toy::{finite_difference_check, Dataset, ModelKind, ToyModel};
pub use train::{beta1_sweep, describe_spec, train, train_report, TrainOutcome, CRASH_FACTOR};
