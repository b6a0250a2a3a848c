//! Adaptation to new sessions: pretraining, replay, distillation, the
//! train-on-request workflow and the chain transfer-learning baseline.

mod chain;
mod config;
mod pretrain;
mod replay;
mod state;
mod tor;

pub use chain::{chain_tl, split_point, ChainSession};
pub use config::{Strategy, TorConfig};
pub use pretrain::{pretrain, pretrain_with};
pub use replay::ReplayBuffer;
pub use state::{finetune_block, finetune_trials, BlockReport, Model, OdlModel, WorkflowState};
pub use tor::{
    summarize, tor_session, tor_workflow, write_session_logs, Aborted, Adapter, Role, RunInfo, SessionLog,
    SubsessionRecord, WorkflowSummary, SESSION_LOG_HEADER,
};
