//! Objective, optimizer and the fitting loop.

mod adam;
mod bundle;
mod fit;
mod loss;
mod params;
mod schedule;

pub use adam::{adam_step, AdamState};
pub use bundle::{flatten_grads, Conditioning, ModelBundle};
pub use fit::{epoch_log_csv, fit, EpochLog, FitDataset, FitReport};
pub use loss::{constraint_penalty, mse_loss, LossConfig};
pub use params::ParamLayout;
pub use schedule::{lr_at, TrainConfig};
