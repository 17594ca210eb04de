//! PPO-Lagrangian agent: tanh-squashed Gaussian policy, separate reward and
//! cost value networks, GAE on both channels, clipped surrogate objective,
//! and a projected Lagrange multiplier steering expected episode cost
//! toward the target.
//!
//! Importance ratios are evaluated at the executed (filtered) action, whose
//! stored log-probability was computed under the policy that produced the
//! rollout.

use crate::nn::{Adam, Mlp, MlpCheckpoint, NnError};
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

const LOG_2PI: f64 = 1.8378770664093453;
/// Squashed coordinates are clamped this far inside (-1, 1) before the
/// inverse tanh. Filtered actions frequently land exactly on the box
/// boundary; clamping keeps their pre-squash coordinate (and the resulting
/// density gradients) bounded.
const SQUASH_EPS: f64 = 1e-6;
/// Per-minibatch gradient norm clip for the policy and value networks.
const MAX_GRAD_NORM: f64 = 2.0;

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// ln(1 - tanh(y)^2), stable for large |y|.
fn ln_one_minus_tanh_sq(y: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - y - softplus(-2.0 * y))
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// One rollout record: `(x_t, u_t_safe, x_{t+1}, r_t, c_t)` plus the data
/// the update needs (proposed action, stored log-probability, episode
/// boundary flag).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub u_safe: Vec<f64>,
    pub u_rl: Vec<f64>,
    pub reward: f64,
    /// 1.0 when any constraint was violated this step, else 0.0.
    pub cost: f64,
    /// log pi(u_safe | obs) under the rollout policy.
    pub log_prob: f64,
    pub done: bool,
}

/// Collected transitions plus per-step advantage/return buffers.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    pub adv_reward: Vec<f64>,
    pub adv_cost: Vec<f64>,
    pub ret_reward: Vec<f64>,
    pub ret_cost: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
        self.adv_reward.clear();
        self.adv_cost.clear();
        self.ret_reward.clear();
        self.ret_cost.clear();
    }

    fn episode_sums(&self, f: impl Fn(&Transition) -> f64) -> Vec<f64> {
        let mut sums = Vec::new();
        let mut acc = 0.0;
        let mut open = false;
        for t in &self.transitions {
            acc += f(t);
            open = true;
            if t.done {
                sums.push(acc);
                acc = 0.0;
                open = false;
            }
        }
        if open || sums.is_empty() {
            sums.push(acc);
        }
        sums
    }

    pub fn mean_episode_cost(&self) -> f64 {
        let s = self.episode_sums(|t| t.cost);
        s.iter().sum::<f64>() / s.len() as f64
    }

    pub fn mean_episode_reward(&self) -> f64 {
        let s = self.episode_sums(|t| t.reward);
        s.iter().sum::<f64>() / s.len() as f64
    }
}

/// PPO hyperparameters for one update call.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PpoParams {
    pub epochs: usize,
    pub clip: f64,
    pub lr: f64,
    pub minibatch: usize,
    pub lambda_lr: f64,
}

impl Default for PpoParams {
    fn default() -> Self {
        Self { epochs: 10, clip: 0.2, lr: 3e-4, minibatch: 128, lambda_lr: 0.05 }
    }
}

/// Diagnostics from one update.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub cost_value_loss: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
    pub lambda: f64,
    pub mean_episode_cost: f64,
    pub mean_episode_reward: f64,
}

/// Policy, value networks, multiplier, and their optimizer state.
#[derive(Debug, Clone)]
pub struct PolicyState {
    policy: Mlp,
    log_std: Vec<f64>,
    value: Mlp,
    cost_value: Mlp,
    /// Lagrange multiplier, kept >= 0.
    pub lambda: f64,
    /// Allowed expected episode cost.
    pub target_cost: f64,
    act_lo: Vec<f64>,
    act_hi: Vec<f64>,
    adam_policy: Adam,
    adam_value: Adam,
    adam_cost_value: Adam,
    adam_log_std: AdamVec,
}

/// Serializable agent snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub version: u32,
    pub policy: MlpCheckpoint,
    pub log_std: Vec<f64>,
    pub value: MlpCheckpoint,
    pub cost_value: MlpCheckpoint,
    pub lambda: f64,
    pub target_cost: f64,
    pub act_lo: Vec<f64>,
    pub act_hi: Vec<f64>,
}

impl PolicyState {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        act_lo: Vec<f64>,
        act_hi: Vec<f64>,
        target_cost: f64,
        lambda_init: f64,
        log_std_init: f64,
        rng: &mut R,
    ) -> Self {
        assert_eq!(act_lo.len(), act_dim);
        assert_eq!(act_hi.len(), act_dim);
        let mut p_sizes = vec![obs_dim];
        p_sizes.extend_from_slice(hidden);
        p_sizes.push(act_dim);
        let mut v_sizes = vec![obs_dim];
        v_sizes.extend_from_slice(hidden);
        v_sizes.push(1);

        let mut policy = Mlp::new(&p_sizes, rng);
        policy.zero_output_layer();
        let value = Mlp::new(&v_sizes, rng);
        let cost_value = Mlp::new(&v_sizes, rng);

        let adam_policy = Adam::new(&policy);
        let adam_value = Adam::new(&value);
        let adam_cost_value = Adam::new(&cost_value);
        Self {
            policy,
            log_std: vec![log_std_init; act_dim],
            value,
            cost_value,
            lambda: lambda_init,
            target_cost,
            act_lo,
            act_hi,
            adam_policy,
            adam_value,
            adam_cost_value,
            adam_log_std: AdamVec::new(act_dim),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.policy.output_dim()
    }

    fn width(&self, j: usize) -> f64 {
        self.act_hi[j] - self.act_lo[j]
    }

    fn squash(&self, y: f64, j: usize) -> f64 {
        self.act_lo[j] + (y.tanh() + 1.0) * 0.5 * self.width(j)
    }

    /// Inverse of the squash, clamped inside the open interval.
    fn unsquash(&self, u: f64, j: usize) -> f64 {
        let t = (2.0 * (u - self.act_lo[j]) / self.width(j) - 1.0)
            .clamp(-1.0 + SQUASH_EPS, 1.0 - SQUASH_EPS);
        t.atanh()
    }

    /// Sample an action from the squashed Gaussian; returns the action and
    /// its log-probability (tanh and box-rescaling corrections included).
    pub fn act<R: Rng>(&self, obs: &[f64], rng: &mut R) -> (Vec<f64>, f64) {
        let mean = self.policy.forward(obs);
        let m = self.act_dim();
        let mut u = vec![0.0; m];
        let mut lp = 0.0;
        for j in 0..m {
            let sigma = self.log_std[j].exp();
            let y = mean[j] + sigma * standard_normal(rng);
            u[j] = self.squash(y, j);
            let z = (y - mean[j]) / sigma;
            lp += -0.5 * z * z - self.log_std[j] - 0.5 * LOG_2PI;
            lp -= ln_one_minus_tanh_sq(y) + (self.width(j) * 0.5).ln();
        }
        (u, lp)
    }

    /// Deterministic action: the squashed mean (the zero-noise limit).
    pub fn act_mean(&self, obs: &[f64]) -> Vec<f64> {
        let mean = self.policy.forward(obs);
        (0..self.act_dim()).map(|j| self.squash(mean[j], j)).collect()
    }

    /// Log-probability of an arbitrary in-box action under the current
    /// policy.
    pub fn log_prob(&self, obs: &[f64], u: &[f64]) -> f64 {
        let mean = self.policy.forward(obs);
        let mut lp = 0.0;
        for j in 0..self.act_dim() {
            let y = self.unsquash(u[j], j);
            let sigma = self.log_std[j].exp();
            let z = (y - mean[j]) / sigma;
            lp += -0.5 * z * z - self.log_std[j] - 0.5 * LOG_2PI;
            lp -= ln_one_minus_tanh_sq(y) + (self.width(j) * 0.5).ln();
        }
        lp
    }

    pub fn value_of(&self, obs: &[f64]) -> f64 {
        self.value.forward(obs)[0]
    }

    pub fn cost_value_of(&self, obs: &[f64]) -> f64 {
        self.cost_value.forward(obs)[0]
    }

    pub fn to_checkpoint(&self) -> PolicyCheckpoint {
        PolicyCheckpoint {
            version: 1,
            policy: self.policy.to_checkpoint(),
            log_std: self.log_std.clone(),
            value: self.value.to_checkpoint(),
            cost_value: self.cost_value.to_checkpoint(),
            lambda: self.lambda,
            target_cost: self.target_cost,
            act_lo: self.act_lo.clone(),
            act_hi: self.act_hi.clone(),
        }
    }

    pub fn from_checkpoint(ck: &PolicyCheckpoint) -> Result<Self, NnError> {
        if ck.version != 1 {
            return Err(NnError::BadCheckpoint(format!(
                "unsupported agent version {}",
                ck.version
            )));
        }
        let policy = Mlp::from_checkpoint(&ck.policy)?;
        let value = Mlp::from_checkpoint(&ck.value)?;
        let cost_value = Mlp::from_checkpoint(&ck.cost_value)?;
        let act_dim = policy.output_dim();
        if ck.log_std.len() != act_dim || ck.act_lo.len() != act_dim || ck.act_hi.len() != act_dim {
            return Err(NnError::BadCheckpoint("action dimension mismatch".into()));
        }
        let adam_policy = Adam::new(&policy);
        let adam_value = Adam::new(&value);
        let adam_cost_value = Adam::new(&cost_value);
        Ok(Self {
            policy,
            log_std: ck.log_std.clone(),
            value,
            cost_value,
            lambda: ck.lambda,
            target_cost: ck.target_cost,
            act_lo: ck.act_lo.clone(),
            act_hi: ck.act_hi.clone(),
            adam_policy,
            adam_value,
            adam_cost_value,
            adam_log_std: AdamVec::new(act_dim),
        })
    }

    #[cfg(test)]
    pub(crate) fn policy_net(&self) -> &Mlp {
        &self.policy
    }

    #[cfg(test)]
    pub(crate) fn nets_mut(&mut self) -> (&mut Mlp, &mut Mlp, &mut Mlp) {
        (&mut self.policy, &mut self.value, &mut self.cost_value)
    }
}

/// Scale a network gradient (plus an optional extra parameter block) so the
/// combined norm stays at or below `max_norm`.
fn clip_grad_norm(grads: &mut crate::nn::Gradients, extra: &mut [f64], max_norm: f64) {
    let norm = (grads.param_norm().powi(2) + extra.iter().map(|g| g * g).sum::<f64>()).sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.scale(s);
        for g in extra {
            *g *= s;
        }
    }
}

/// Adam over a bare vector (the log-std parameters).
#[derive(Debug, Clone)]
struct AdamVec {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamVec {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t as i32);
        let bc2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grads[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grads[i] * grads[i];
            params[i] -= lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + EPS);
        }
    }
}

/// Generalized advantage estimation for both reward and cost channels.
///
/// Episodes end at `done` (horizon truncation); the value bootstrap always
/// uses the stored next observation, and the recursion resets across
/// episode boundaries. Reward advantages are normalized to zero mean and
/// unit variance over the batch; cost advantages are left raw.
pub fn compute_advantages(
    policy: &PolicyState,
    buf: &mut RolloutBuffer,
    gamma: f64,
    gae_lambda: f64,
) {
    let n = buf.len();
    if n == 0 {
        return;
    }
    let obs_mat = column_matrix(&buf.transitions, |t| &t.obs);
    let v_r = policy.value.forward_batch(&obs_mat);
    let v_c = policy.cost_value.forward_batch(&obs_mat);

    buf.adv_reward = vec![0.0; n];
    buf.adv_cost = vec![0.0; n];
    buf.ret_reward = vec![0.0; n];
    buf.ret_cost = vec![0.0; n];

    let mut gae_r = 0.0;
    let mut gae_c = 0.0;
    for t in (0..n).rev() {
        let tr = &buf.transitions[t];
        let (next_v_r, next_v_c) = if tr.done || t + 1 == n {
            (policy.value_of(&tr.next_obs), policy.cost_value_of(&tr.next_obs))
        } else {
            (v_r[(0, t + 1)], v_c[(0, t + 1)])
        };
        if tr.done {
            gae_r = 0.0;
            gae_c = 0.0;
        }
        let delta_r = tr.reward + gamma * next_v_r - v_r[(0, t)];
        let delta_c = tr.cost + gamma * next_v_c - v_c[(0, t)];
        gae_r = delta_r + gamma * gae_lambda * gae_r;
        gae_c = delta_c + gamma * gae_lambda * gae_c;
        buf.adv_reward[t] = gae_r;
        buf.adv_cost[t] = gae_c;
        buf.ret_reward[t] = gae_r + v_r[(0, t)];
        buf.ret_cost[t] = gae_c + v_c[(0, t)];
    }

    let mean = buf.adv_reward.iter().sum::<f64>() / n as f64;
    let var = buf.adv_reward.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt().max(1e-8);
    for a in &mut buf.adv_reward {
        *a = (*a - mean) / std;
    }
}

fn column_matrix<'a>(
    ts: &'a [Transition],
    f: impl Fn(&'a Transition) -> &'a Vec<f64>,
) -> DMatrix<f64> {
    let n = ts.len();
    let dim = f(&ts[0]).len();
    let mut m = DMatrix::zeros(dim, n);
    for (c, t) in ts.iter().enumerate() {
        for (r, v) in f(t).iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    m
}

/// One PPO-Lagrangian update over a finished rollout buffer.
///
/// Maximizes the clipped surrogate on `(adv_r - lambda adv_c)/(1 + lambda)`,
/// fits both value networks by squared error, then moves the multiplier by
/// `lambda_lr * (mean episode cost - target)` and projects it at zero.
/// Skips (and reports) a minibatch whose loss turns non-finite.
pub fn update<R: Rng>(
    policy: &mut PolicyState,
    buf: &RolloutBuffer,
    params: &PpoParams,
    rng: &mut R,
) -> UpdateStats {
    let n = buf.len();
    assert!(n > 0, "empty rollout buffer");
    assert_eq!(buf.adv_reward.len(), n, "advantages not computed");
    let m = policy.act_dim();
    let lambda = policy.lambda;

    // theta-independent per-sample quantities
    let mut y = DMatrix::zeros(m, n);
    let mut lp_const = vec![0.0; n];
    for (i, tr) in buf.transitions.iter().enumerate() {
        for j in 0..m {
            let yj = policy.unsquash(tr.u_safe[j], j);
            y[(j, i)] = yj;
            lp_const[i] -=
                ln_one_minus_tanh_sq(yj) + (policy.width(j) * 0.5).ln() + 0.5 * LOG_2PI;
        }
    }
    let combined_adv: Vec<f64> = (0..n)
        .map(|i| (buf.adv_reward[i] - lambda * buf.adv_cost[i]) / (1.0 + lambda))
        .collect();

    let obs_all = column_matrix(&buf.transitions, |t| &t.obs);
    let mut indices: Vec<usize> = (0..n).collect();
    let mb = params.minibatch.min(n).max(1);

    let mut last_policy_loss = 0.0;
    let mut last_value_loss = 0.0;
    let mut last_cost_value_loss = 0.0;
    let mut ratio_sum = 0.0;
    let mut ratio_count = 0usize;
    let mut clipped = 0usize;

    for _ in 0..params.epochs {
        // Fisher-Yates with the caller's stream
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            indices.swap(i, j);
        }
        for chunk in indices.chunks(mb) {
            let b = chunk.len();
            let mut obs_mb = DMatrix::zeros(policy.obs_dim(), b);
            for (c, &i) in chunk.iter().enumerate() {
                obs_mb.set_column(c, &obs_all.column(i));
            }
            let means = policy.policy.forward_batch(&obs_mb);

            let mut dloss_dmean = DMatrix::zeros(m, b);
            let mut dloss_dlogstd = vec![0.0; m];
            let mut policy_loss = 0.0;
            for (c, &i) in chunk.iter().enumerate() {
                let mut lp = lp_const[i];
                for j in 0..m {
                    let sigma = policy.log_std[j].exp();
                    let z = (y[(j, i)] - means[(j, c)]) / sigma;
                    lp += -0.5 * z * z - policy.log_std[j];
                }
                let ratio = (lp - buf.transitions[i].log_prob).exp();
                let adv = combined_adv[i];
                let clip_lo = 1.0 - params.clip;
                let clip_hi = 1.0 + params.clip;
                let surr = (ratio * adv).min(ratio.clamp(clip_lo, clip_hi) * adv);
                policy_loss -= surr / b as f64;
                ratio_sum += ratio;
                ratio_count += 1;

                // gradient flows only through the unclipped branch
                let active = if adv >= 0.0 { ratio <= clip_hi } else { ratio >= clip_lo };
                if !active {
                    clipped += 1;
                    continue;
                }
                let dlp = -ratio * adv / b as f64;
                for j in 0..m {
                    let sigma = policy.log_std[j].exp();
                    let diff = y[(j, i)] - means[(j, c)];
                    dloss_dmean[(j, c)] = dlp * (diff / (sigma * sigma));
                    dloss_dlogstd[j] += dlp * (diff * diff / (sigma * sigma) - 1.0);
                }
            }
            if !policy_loss.is_finite() {
                continue; // skip this minibatch, flagged via stats staying put
            }
            let mut pgrads = policy.policy.backward_batch(&obs_mb, &dloss_dmean);
            clip_grad_norm(&mut pgrads, &mut dloss_dlogstd, MAX_GRAD_NORM);
            let _ = policy.adam_policy.step(&mut policy.policy, &pgrads, params.lr);
            policy.adam_log_std.step(&mut policy.log_std, &dloss_dlogstd, params.lr);
            last_policy_loss = policy_loss;

            // value networks on the same minibatch
            let vr = policy.value.forward_batch(&obs_mb);
            let vc = policy.cost_value.forward_batch(&obs_mb);
            let mut gr = DMatrix::zeros(1, b);
            let mut gc = DMatrix::zeros(1, b);
            let mut vl = 0.0;
            let mut cl = 0.0;
            for (c, &i) in chunk.iter().enumerate() {
                let er = vr[(0, c)] - buf.ret_reward[i];
                let ec = vc[(0, c)] - buf.ret_cost[i];
                gr[(0, c)] = er / b as f64;
                gc[(0, c)] = ec / b as f64;
                vl += 0.5 * er * er / b as f64;
                cl += 0.5 * ec * ec / b as f64;
            }
            let mut vgrads = policy.value.backward_batch(&obs_mb, &gr);
            clip_grad_norm(&mut vgrads, &mut [], MAX_GRAD_NORM);
            let _ = policy.adam_value.step(&mut policy.value, &vgrads, params.lr);
            let mut cgrads = policy.cost_value.backward_batch(&obs_mb, &gc);
            clip_grad_norm(&mut cgrads, &mut [], MAX_GRAD_NORM);
            let _ = policy.adam_cost_value.step(&mut policy.cost_value, &cgrads, params.lr);
            last_value_loss = vl;
            last_cost_value_loss = cl;
        }
    }

    let mean_ep_cost = buf.mean_episode_cost();
    let mean_ep_reward = buf.mean_episode_reward();
    policy.lambda =
        (policy.lambda + params.lambda_lr * (mean_ep_cost - policy.target_cost)).max(0.0);

    UpdateStats {
        policy_loss: last_policy_loss,
        value_loss: last_value_loss,
        cost_value_loss: last_cost_value_loss,
        clip_fraction: clipped as f64 / ratio_count.max(1) as f64,
        mean_ratio: ratio_sum / ratio_count.max(1) as f64,
        lambda: policy.lambda,
        mean_episode_cost: mean_ep_cost,
        mean_episode_reward: mean_ep_reward,
    }
}
