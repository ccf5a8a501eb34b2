//! Double-Q targets, the Huber/Adam update and the training loop.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{StraddlePosition, TradingEnv};
use crate::qnet::{backward, forward, q_values, save_params, HyperParams, QNetworkParams};

use super::optim::{clip_global_norm, Adam};
use super::replay::ReplayBuffer;
use super::{epsilon_at, TrainConfig, TrainError, Transition};

/// Per-sample regression targets: `r` for terminals, else
/// `r + gamma * Q_target(s', argmax_a Q_online(s', a))` with argmax ties
/// toward action 0. Terminal next-states are never evaluated.
pub fn double_q_target(
    batch: &[Transition],
    online: &QNetworkParams,
    target: &QNetworkParams,
    gamma: f64,
) -> Result<Vec<f64>, TrainError> {
    let mut out = Vec::with_capacity(batch.len());
    for tr in batch {
        if tr.terminal {
            out.push(tr.reward);
        } else {
            let q_online = q_values(online, &tr.next_state)?;
            let best = usize::from(q_online[1] > q_online[0]);
            let q_target = q_values(target, &tr.next_state)?;
            out.push(tr.reward + gamma * q_target[best]);
        }
    }
    Ok(out)
}

fn huber(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

fn huber_deriv(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// One gradient step on the online network against the targets; only the
/// taken action's Q receives upstream gradient. Returns the mean Huber loss.
pub fn train_step(
    online: &mut QNetworkParams,
    target: &QNetworkParams,
    batch: &[Transition],
    opt: &mut Adam,
    cfg: &TrainConfig,
) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::BufferTooSmall { have: 0, want: 1 });
    }
    let targets = double_q_target(batch, online, target, cfg.gamma)?;
    let mut grads = online.zeros_like();
    let inv_k = 1.0 / batch.len() as f64;
    let mut loss_sum = 0.0;
    for (tr, y) in batch.iter().zip(&targets) {
        let trace = forward(online, &tr.state)?;
        let td = trace.q()[tr.action as usize] - y;
        loss_sum += huber(td);
        let mut dq = [0.0; 2];
        dq[tr.action as usize] = huber_deriv(td) * inv_k;
        backward(online, &trace, dq, &mut grads);
    }
    let loss = loss_sum * inv_k;
    let grad_norm = clip_global_norm(&mut grads, cfg.grad_clip_norm);
    if !loss.is_finite() || !grad_norm.is_finite() {
        return Err(TrainError::NonFiniteLoss { step: opt.step_count(), loss, grad_norm });
    }
    opt.step(online, &grads);
    Ok(loss)
}

/// Compact replayed state: bar index plus any open-position bookkeeping,
/// rebuilt into a full observation at sampling time. Keeps the buffer at
/// tens of bytes per transition instead of the full feature matrices.
#[derive(Debug, Clone, Copy)]
struct StateRef {
    t: usize,
    position: Option<(StraddlePosition, usize, u32)>,
}

#[derive(Debug, Clone, Copy)]
struct CompactTransition {
    state: StateRef,
    action: u8,
    reward: f64,
    next_state: StateRef,
    terminal: bool,
}

fn materialize(env: &TradingEnv, r: &StateRef) -> Result<crate::env::MarketState, TrainError> {
    Ok(env.builder().build_state(
        r.t,
        r.position.as_ref().map(|(p, ob, _)| (p, *ob)),
        r.position.map_or(0, |(_, _, hb)| hb),
    )?)
}

pub struct TrainArtifacts {
    pub checkpoint: PathBuf,
    pub optimizer_state: PathBuf,
    pub log: PathBuf,
    pub params: QNetworkParams,
    pub final_loss: Option<f64>,
}

/// The full training loop. Deterministic for a fixed seed: episode
/// sampling, exploration, replay sampling and updates all draw from one
/// seeded stream, single-threaded.
///
/// Writes `train_log.csv` (`step,epsilon,loss,episode_return,buffer_len`),
/// periodic checkpoints when configured, and the final checkpoint plus
/// optimizer sidecar into `out_dir`.
pub fn train(
    env: &mut TradingEnv,
    hyper: HyperParams,
    cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainArtifacts, TrainError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let log_path = out_dir.join("train_log.csv");
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    writeln!(log, "step,epsilon,loss,episode_return,buffer_len")?;

    let mut online = QNetworkParams::init(hyper, cfg.seed)?;
    let mut target = online.clone();
    let mut opt = Adam::new(&online, cfg.learning_rate);
    let mut buffer: ReplayBuffer<CompactTransition> = ReplayBuffer::new(cfg.buffer_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));

    let mut state = env.reset_random_episode()?;
    let mut state_ref = StateRef { t: env.cursor(), position: env.position_snapshot() };
    let mut episode_return = 0.0;
    let mut last_loss: Option<f64> = None;

    for step in 0..cfg.total_steps {
        let eps = epsilon_at(step, cfg);
        let action = if rng.gen::<f64>() < eps {
            rng.gen_range(0..2u8)
        } else {
            let q = q_values(&online, &state)?;
            u8::from(q[1] > q[0])
        };

        let outcome = env.step(action)?;
        episode_return += outcome.reward;
        let next_ref = StateRef { t: env.cursor(), position: env.position_snapshot() };
        buffer.push(CompactTransition {
            state: state_ref,
            action,
            reward: outcome.reward,
            next_state: next_ref,
            terminal: outcome.terminal,
        });

        if step >= cfg.warmup_steps && buffer.len() >= cfg.batch_size {
            let batch: Vec<Transition> = buffer
                .sample_indices(cfg.batch_size, &mut rng)?
                .into_iter()
                .map(|i| {
                    let c = buffer.get(i);
                    Ok(Transition {
                        state: materialize(env, &c.state)?,
                        action: c.action,
                        reward: c.reward,
                        next_state: materialize(env, &c.next_state)?,
                        terminal: c.terminal,
                    })
                })
                .collect::<Result<_, TrainError>>()?;
            last_loss = Some(train_step(&mut online, &target, &batch, &mut opt, cfg)?);
        }

        if cfg.target_sync_interval > 0 && (step + 1) % cfg.target_sync_interval == 0 {
            target = online.clone();
        }

        if step % cfg.log_every == 0 || step + 1 == cfg.total_steps {
            let loss_col = last_loss.map_or(String::new(), |l| format!("{l:e}"));
            writeln!(
                log,
                "{step},{eps:.6},{loss_col},{episode_return:e},{}",
                buffer.len()
            )?;
        }

        if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 {
            save_params(&online, &out_dir.join(format!("checkpoint_{:07}.bin", step + 1)))?;
        }

        if outcome.terminal {
            state = env.reset_random_episode()?;
            state_ref = StateRef { t: env.cursor(), position: env.position_snapshot() };
            episode_return = 0.0;
        } else {
            state = outcome.state;
            state_ref = next_ref;
        }
    }

    let checkpoint = out_dir.join("checkpoint_final.bin");
    let optimizer_state = out_dir.join("checkpoint_final.opt.bin");
    save_params(&online, &checkpoint)?;
    opt.save(&online, &optimizer_state)?;
    log.flush()?;
    Ok(TrainArtifacts { checkpoint, optimizer_state, log: log_path, params: online, final_loss: last_loss })
}
