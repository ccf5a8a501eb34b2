//! Double-DQN training: experience replay, epsilon-greedy exploration,
//! double-Q targets, Huber loss with Adam, and hard target sync.

mod optim;
mod replay;
mod trainer;

pub use optim::{clip_global_norm, Adam};
pub use replay::ReplayBuffer;
pub use trainer::{double_q_target, train, train_step, TrainArtifacts};

use thiserror::Error;

use crate::env::{EnvError, MarketState};
use crate::qnet::QNetError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("replay buffer has {have} transitions, batch needs {want}")]
    BufferTooSmall { have: usize, want: usize },
    #[error("bad training config: {0}")]
    BadConfig(&'static str),
    #[error("bad training state: {0}")]
    BadState(String),
    #[error("non-finite loss {loss} at step {step} (pre-clip gradient norm {grad_norm})")]
    NonFiniteLoss { step: u64, loss: f64, grad_norm: f64 },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    QNet(#[from] QNetError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One replayed step. Terminal transitions carry a valid `next_state` that
/// the target computation never reads.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: MarketState,
    pub action: u8,
    pub reward: f64,
    pub next_state: MarketState,
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    pub target_sync_interval: u64,
    pub total_steps: u64,
    pub warmup_steps: u64,
    pub seed: u64,
    pub grad_clip_norm: f64,
    /// Emit a log row every this many steps (and at the final step).
    pub log_every: u64,
    /// Extra checkpoints during training; 0 writes only the final one.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            learning_rate: 1e-4,
            batch_size: 64,
            buffer_capacity: 100_000,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 50_000,
            target_sync_interval: 1_000,
            total_steps: 50_000,
            warmup_steps: 2_000,
            seed: 0,
            grad_clip_norm: 10.0,
            log_every: 100,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(TrainError::BadConfig("gamma must be in [0, 1)"));
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return Err(TrainError::BadConfig("batch_size must be in 1..=buffer_capacity"));
        }
        if self.eps_end > self.eps_start {
            return Err(TrainError::BadConfig("eps_end must not exceed eps_start"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::BadConfig("learning_rate must be positive"));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(TrainError::BadConfig("grad_clip_norm must be positive"));
        }
        if self.log_every == 0 {
            return Err(TrainError::BadConfig("log_every must be positive"));
        }
        Ok(())
    }
}

/// Linear decay from `eps_start` at step 0 to `eps_end` at `eps_decay_steps`,
/// constant afterwards.
pub fn epsilon_at(step: u64, cfg: &TrainConfig) -> f64 {
    if cfg.eps_decay_steps == 0 || step >= cfg.eps_decay_steps {
        return cfg.eps_end;
    }
    let frac = step as f64 / cfg.eps_decay_steps as f64;
    cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac
}
