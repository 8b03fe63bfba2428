use rand::seq::SliceRandom;
use rand::Rng;

use super::{compute_gae, normalize, PpoConfig, PpoError, RolloutBuffer};
use crate::autodiff::{clip_grad_norm, Adam, NdArray, Tape};
use crate::env::Action;
use crate::gnn::{bind_params, CriticNet, GraphBatch, PolicyNet};

/// Scalar pieces of one minibatch loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub policy: f32,
    pub value: f32,
    pub entropy: f32,
    pub total: f32,
}

/// Averages over every minibatch of an update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub policy_loss: f32,
    pub value_loss: f32,
    pub entropy: f32,
    pub policy_grad_norm: f32,
    pub critic_grad_norm: f32,
    pub clip_fraction: f32,
}

struct MinibatchGrads {
    terms: LossTerms,
    policy: Vec<NdArray>,
    critic: Vec<NdArray>,
    clip_fraction: f32,
}

fn minibatch_grads(
    policy: &PolicyNet,
    critic: &CriticNet,
    buffer: &RolloutBuffer,
    indices: &[usize],
    advantages: &[f32],
    returns: &[f32],
    config: &PpoConfig,
) -> Result<MinibatchGrads, PpoError> {
    let b = indices.len();
    let graphs: Vec<_> = indices.iter().map(|&i| &buffer.steps[i].graph).collect();
    let batch = GraphBatch::from_graphs(&graphs);
    let mut tape = Tape::new();

    let pb = bind_params(&mut tape, &policy.params, true);
    let logits = policy.logits(&mut tape, &pb, &batch)?;
    let log_probs = tape.log_softmax_rows(logits);
    let mut onehot = NdArray::zeros(b, Action::COUNT);
    for (r, &i) in indices.iter().enumerate() {
        onehot.data_mut()[r * Action::COUNT + buffer.steps[i].action as usize] = 1.0;
    }
    let onehot = tape.constant(onehot);
    let ones = tape.constant(NdArray::filled(Action::COUNT, 1, 1.0));
    let picked = tape.mul(log_probs, onehot)?;
    let new_lp = tape.matmul(picked, ones)?;
    let old_lp = tape.constant(NdArray::from_vec(
        b,
        1,
        indices.iter().map(|&i| buffer.steps[i].log_prob).collect(),
    )?);
    let adv = tape.constant(NdArray::from_vec(b, 1, indices.iter().map(|&i| advantages[i]).collect())?);
    let diff = tape.sub(new_lp, old_lp)?;
    let ratio = tape.exp(diff);
    let surr1 = tape.mul(ratio, adv)?;
    let clipped = tape.clamp(ratio, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon);
    let surr2 = tape.mul(clipped, adv)?;
    let surr = tape.minimum(surr1, surr2)?;
    let surr_mean = tape.mean(surr)?;
    let policy_loss = tape.scale(surr_mean, -1.0);

    let probs = tape.exp(log_probs);
    let plogp = tape.mul(probs, log_probs)?;
    let plogp_sum = tape.sum(plogp);
    let entropy = tape.scale(plogp_sum, -1.0 / b as f32);

    let cb = bind_params(&mut tape, &critic.params, true);
    let values = critic.values(&mut tape, &cb, &batch)?;
    let targets = tape.constant(NdArray::from_vec(b, 1, indices.iter().map(|&i| returns[i]).collect())?);
    let err = tape.sub(values, targets)?;
    let sq = tape.square(err);
    let value_loss = tape.mean(sq)?;

    let weighted_value = tape.scale(value_loss, config.value_coef);
    let mut total = tape.add(policy_loss, weighted_value)?;
    if config.entropy_coef != 0.0 {
        let bonus = tape.scale(entropy, -config.entropy_coef);
        total = tape.add(total, bonus)?;
    }

    let terms = LossTerms {
        policy: tape.value(policy_loss).item(),
        value: tape.value(value_loss).item(),
        entropy: tape.value(entropy).item(),
        total: tape.value(total).item(),
    };
    let eps = config.clip_epsilon;
    let clip_fraction = tape
        .value(ratio)
        .data()
        .iter()
        .filter(|r| (**r - 1.0).abs() > eps)
        .count() as f32
        / b as f32;

    let mut grads = tape.backward(total)?;
    let policy_grads = pb.iter().map(|v| grads.take_or_zeros(*v)).collect();
    let critic_grads = cb.iter().map(|v| grads.take_or_zeros(*v)).collect();
    Ok(MinibatchGrads {
        terms,
        policy: policy_grads,
        critic: critic_grads,
        clip_fraction,
    })
}

/// Loss of one minibatch without touching any parameters.
pub fn minibatch_loss(
    policy: &PolicyNet,
    critic: &CriticNet,
    buffer: &RolloutBuffer,
    indices: &[usize],
    advantages: &[f32],
    returns: &[f32],
    config: &PpoConfig,
) -> Result<LossTerms, PpoError> {
    Ok(minibatch_grads(policy, critic, buffer, indices, advantages, returns, config)?.terms)
}

/// Runs every epoch and minibatch of one PPO update over the concatenated
/// rollouts. GAE is computed per rollout so episodes never bleed across
/// environment boundaries.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    policy: &mut PolicyNet,
    critic: &mut CriticNet,
    policy_opt: &mut Adam,
    critic_opt: &mut Adam,
    rollouts: &[RolloutBuffer],
    config: &PpoConfig,
    rng: &mut impl Rng,
    update_index: usize,
) -> Result<UpdateStats, PpoError> {
    let mut merged = RolloutBuffer::default();
    let mut advantages = Vec::new();
    let mut returns = Vec::new();
    for r in rollouts {
        let (a, ret) = compute_gae(r, config.gamma, config.gae_lambda);
        advantages.extend(a);
        returns.extend(ret);
        merged.steps.extend(r.steps.iter().cloned());
    }
    if config.normalize_advantages {
        normalize(&mut advantages);
    }
    let n = merged.len();
    let mb = (n / config.minibatches).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    let mut count = 0usize;
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(mb) {
            let mut g = minibatch_grads(policy, critic, &merged, chunk, &advantages, &returns, config)?;
            if !g.terms.total.is_finite() {
                return Err(PpoError::NonFinite {
                    what: "loss",
                    update: update_index,
                });
            }
            let pn = clip_grad_norm(&mut g.policy, config.max_grad_norm);
            let cn = clip_grad_norm(&mut g.critic, config.max_grad_norm);
            if !pn.is_finite() || !cn.is_finite() {
                return Err(PpoError::NonFinite {
                    what: "gradient",
                    update: update_index,
                });
            }
            policy_opt.step(&mut policy.params, &g.policy);
            critic_opt.step(&mut critic.params, &g.critic);
            stats.policy_loss += g.terms.policy;
            stats.value_loss += g.terms.value;
            stats.entropy += g.terms.entropy;
            stats.policy_grad_norm += pn;
            stats.critic_grad_norm += cn;
            stats.clip_fraction += g.clip_fraction;
            count += 1;
        }
    }
    let c = count.max(1) as f32;
    stats.policy_loss /= c;
    stats.value_loss /= c;
    stats.entropy /= c;
    stats.policy_grad_norm /= c;
    stats.critic_grad_norm /= c;
    stats.clip_fraction /= c;
    Ok(stats)
}
