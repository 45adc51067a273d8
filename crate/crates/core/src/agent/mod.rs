//! Actor-critic learning on imagined rollouts, the replay dataset and the
//! full training loop with three selectable value estimators.

mod actor;
mod config;
mod losses;
mod replay;
mod train;

pub use actor::{Actor, Critic};
pub use config::{Estimator, TrainConfig};
pub use losses::{actor_loss, critic_loss};
pub use replay::ReplayDataset;
pub use train::{
    collect_episode, eval_seed, evaluate, posterior_context, run_training, train_step, write_metrics_csv,
    ActionMode, Agent, Collected, EvalReport, MetricsRow, RunPaths, RunSummary, StepMetrics,
    METRICS_CSV_HEADER,
};
