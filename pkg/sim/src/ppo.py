"""
Meta-RL training with PPO
- Rollouts of 30 sampled-mode episodes per update
- Dual-discount returns, normalized advantages
- Clipped surrogate + value regression through full-episode BPTT, Adam steps
- Finite-difference verification of the hand-derived gradients
"""
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from src.engagement import EpisodeResult
from src.errors import ConfigFault
from src.logging_setup import get_run_metrics
from src.neuralpolicy import (
    NetworkParams,
    NetworkShape,
    Params,
    RecurrentNet,
    action_log_prob,
    init_params,
    pair_log_probabilities,
    pair_probabilities,
    save_weights,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PPOConfig:
    clip: float = 0.1
    gamma_shaping: float = 0.90
    gamma_terminal: float = 0.995
    episodes_per_update: int = 30
    epochs: int = 20
    kl_target: float = 0.02
    lr_policy: float = 1e-4
    lr_value: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    updates: int = 2000
    checkpoint_every: int = 50
    eval_episodes: int = 200

    def __post_init__(self):
        if not 0.0 < self.clip < 1.0:
            raise ConfigFault("clip must lie in (0, 1)")
        for name in ("gamma_shaping", "gamma_terminal"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigFault(f"{name} must lie in [0, 1]")
        if self.episodes_per_update < 1 or self.epochs < 1:
            raise ConfigFault("episodes_per_update and epochs must be positive")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PPOConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data or {}) - known
        if unknown:
            raise ConfigFault(f"unknown ppo keys: {sorted(unknown)}")
        types = {name: f.type for name, f in cls.__dataclass_fields__.items()}
        return cls(**{k: types[k](v) for k, v in (data or {}).items()})


@dataclass
class EpisodeRollout:
    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    shaping: np.ndarray
    terminal: np.ndarray
    values: np.ndarray
    result: EpisodeResult

    def __len__(self) -> int:
        return len(self.log_probs)


@dataclass
class PaddedBatch:
    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    returns: np.ndarray
    mask: np.ndarray


@dataclass
class RolloutBatch:
    episodes: List[EpisodeRollout]
    faults: int = 0

    @property
    def lengths(self) -> List[int]:
        return [len(e) for e in self.episodes]

    def pad(self, gamma_shaping: float, gamma_terminal: float) -> PaddedBatch:
        b, t_len = len(self.episodes), max(self.lengths)
        obs_dim = self.episodes[0].obs.shape[1]
        act_dim = self.episodes[0].actions.shape[1]
        out = PaddedBatch(
            obs=np.zeros((b, t_len, obs_dim)),
            actions=np.zeros((b, t_len, act_dim), dtype=np.int64),
            log_probs=np.zeros((b, t_len)),
            returns=np.zeros((b, t_len)),
            mask=np.zeros((b, t_len)),
        )
        for i, ep in enumerate(self.episodes):
            n = len(ep)
            out.obs[i, :n] = ep.obs
            out.actions[i, :n] = ep.actions
            out.log_probs[i, :n] = ep.log_probs
            out.returns[i, :n] = dual_discount_return(ep.shaping, ep.terminal, gamma_shaping, gamma_terminal)
            out.mask[i, :n] = 1.0
        return out


@dataclass
class UpdateDiagnostics:
    kl: float = 0.0
    clip_fraction: float = 0.0
    policy_loss: float = 0.0
    value_loss: float = 0.0
    surrogate_first: float = 0.0
    epochs: int = 0
    aborted: bool = False


def dual_discount_return(shaping: Sequence[float], terminal: Sequence[float], gamma_shaping: float,
                         gamma_terminal: float) -> np.ndarray:
    shaping = np.asarray(shaping, dtype=np.float64)
    terminal = np.asarray(terminal, dtype=np.float64)
    if shaping.shape != terminal.shape:
        raise ConfigFault("shaping and terminal reward sequences differ in length")
    out = np.zeros_like(shaping)
    acc_s = 0.0
    acc_t = 0.0
    for k in range(len(shaping) - 1, -1, -1):
        acc_s = shaping[k] + gamma_shaping * acc_s
        acc_t = terminal[k] + gamma_terminal * acc_t
        out[k] = acc_s + acc_t
    return out


def advantages(returns: np.ndarray, values: np.ndarray, mask: np.ndarray, normalize: bool = True) -> np.ndarray:
    """A = R − V on valid steps, normalized to zero mean / unit variance across the batch"""
    adv = (returns - values) * mask
    if not normalize:
        return adv
    n = mask.sum()
    mean = adv.sum() / n
    var = (((adv - mean) * mask) ** 2).sum() / n
    if var <= 1e-24:
        return adv
    return (adv - mean) / np.sqrt(var) * mask


def policy_loss(net: RecurrentNet, obs: np.ndarray, actions: np.ndarray, mask: np.ndarray,
                logp_old: np.ndarray, adv: np.ndarray, clip: float):
    """
    Negative clipped surrogate and its gradients
    - returns (loss, grads, info) with info holding probabilities, ratios and the surrogate
    """
    logits, cache = net.forward_sequence(obs, mask)
    logp = action_log_prob(logits, actions)
    ratio = np.exp((logp - logp_old) * mask)
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
    surr_unclipped = ratio * adv
    surr_clipped = clipped * adv
    n = mask.sum()
    surrogate = float((np.minimum(surr_unclipped, surr_clipped) * mask).sum() / n)

    d_logp = np.where(surr_unclipped <= surr_clipped, ratio * adv, 0.0) * mask / n
    probs = pair_probabilities(logits)
    onehot = np.eye(2)[actions]
    d_logits = (d_logp[..., None, None] * (onehot - probs)).reshape(logits.shape)
    grads = net.backward_sequence(-d_logits, cache)
    info = {"probs": probs, "ratio": ratio, "surrogate": surrogate, "logits": logits}
    return -surrogate, grads, info


def value_loss(net: RecurrentNet, obs: np.ndarray, mask: np.ndarray, returns: np.ndarray):
    """Mean squared error between V(o_k) and R_k over valid steps"""
    out, cache = net.forward_sequence(obs, mask)
    diff = (out[..., 0] - returns) * mask
    n = mask.sum()
    loss = float((diff * diff).sum() / n)
    grads = net.backward_sequence((2.0 * diff / n)[..., None], cache)
    return loss, grads


def mean_kl(old_logits: np.ndarray, new_logits: np.ndarray, mask: np.ndarray) -> float:
    """KL(old ‖ new) summed over action elements, averaged over valid steps"""
    lp_old = pair_log_probabilities(old_logits)
    lp_new = pair_log_probabilities(new_logits)
    kl = (np.exp(lp_old) * (lp_old - lp_new)).sum(axis=(-1, -2))
    return float((kl * mask).sum() / mask.sum())


class Adam:
    def __init__(self, params: Params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: Params, grads: Params) -> None:
        """Descent step, in place"""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def _finite(*values) -> bool:
    for v in values:
        if isinstance(v, dict):
            if not all(np.all(np.isfinite(g)) for g in v.values()):
                return False
        elif not np.all(np.isfinite(v)):
            return False
    return True


def ppo_update(params: NetworkParams, batch: RolloutBatch, cfg: PPOConfig,
               optimizers: Optional[Dict[str, Adam]] = None):
    """
    Several epochs over one batch
    - ascent on the clipped surrogate, descent on the value loss
    - stops early once mean KL against the collection policy exceeds kl_target
    - a non-finite loss aborts and returns the input params unchanged
    """
    if not batch.episodes:
        raise ConfigFault("cannot update on an empty batch")
    new = params.copy()
    if optimizers is None:
        optimizers = make_optimizers(new, cfg)
    pad = batch.pad(cfg.gamma_shaping, cfg.gamma_terminal)
    policy_net = RecurrentNet(new.policy_shape, new.policy)
    value_net = RecurrentNet(new.value_shape, new.value)
    values, _ = value_net.forward_sequence(pad.obs, pad.mask)
    adv = advantages(pad.returns, values[..., 0], pad.mask)

    diag = UpdateDiagnostics()
    old_logits = None
    for epoch in range(cfg.epochs):
        loss_pi, g_pi, info = policy_loss(policy_net, pad.obs, pad.actions, pad.mask, pad.log_probs, adv, cfg.clip)
        if old_logits is None:
            old_logits = info["logits"]
            diag.surrogate_first = info["surrogate"]
        elif mean_kl(old_logits, info["logits"], pad.mask) > cfg.kl_target:
            log.debug("KL early stop after %d epochs", epoch)
            break
        loss_v, g_v = value_loss(value_net, pad.obs, pad.mask, pad.returns)
        if not _finite(loss_pi, loss_v, g_pi, g_v):
            log.warning("Non-finite loss at epoch %d; update aborted", epoch)
            diag.aborted = True
            diag.policy_loss, diag.value_loss = float(loss_pi), float(loss_v)
            return params, diag
        optimizers["policy"].step(new.policy, g_pi)
        optimizers["value"].step(new.value, g_v)
        diag.epochs = epoch + 1
        diag.policy_loss, diag.value_loss = float(loss_pi), float(loss_v)

    logits, _ = policy_net.forward_sequence(pad.obs, pad.mask)
    logp = action_log_prob(logits, pad.actions)
    ratio = np.exp((logp - pad.log_probs) * pad.mask)
    diag.kl = mean_kl(old_logits, logits, pad.mask)
    diag.clip_fraction = float(((np.abs(ratio - 1.0) > cfg.clip) * pad.mask).sum() / pad.mask.sum())
    return new, diag


def make_optimizers(params: NetworkParams, cfg: PPOConfig) -> Dict[str, Adam]:
    return {
        "policy": Adam(params.policy, cfg.lr_policy, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
        "value": Adam(params.value, cfg.lr_value, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
    }


@dataclass
class RolloutJob:
    """Picklable job: one sampled-mode episode under a fixed parameter snapshot"""

    factory: Any
    params: NetworkParams

    def __call__(self, index: int) -> EpisodeRollout:
        return self.factory.rollout(index, self.params)


def collect_rollouts(factory, params: NetworkParams, cfg: PPOConfig, update_index: int, pool=None) -> RolloutBatch:
    """Run episodes_per_update episodes; faulted episodes are dropped and counted"""
    first = update_index * cfg.episodes_per_update
    indices = list(range(first, first + cfg.episodes_per_update))
    job = RolloutJob(factory, params)
    rollouts = pool.map(job, indices) if pool is not None else [job(i) for i in indices]
    kept = [r for r in rollouts if not r.result.failed and len(r) > 0]
    faults = len(rollouts) - len(kept)
    if faults:
        log.warning("Update %d: %d faulted episodes excluded", update_index, faults)
    return RolloutBatch(kept, faults)


def update_record(update: int, batch: RolloutBatch, diag: UpdateDiagnostics, seconds: float) -> Dict[str, Any]:
    rewards = np.array([e.result.total_reward for e in batch.episodes]) if batch.episodes else np.zeros(1)
    misses = np.array([e.result.miss for e in batch.episodes]) if batch.episodes else np.array([np.inf])
    steps = np.array(batch.lengths) if batch.episodes else np.zeros(1)
    return {
        "update": update,
        "episodes": len(batch.episodes),
        "faults": batch.faults,
        "mean_reward": float(rewards.mean()),
        "std_reward": float(rewards.std()),
        "mean_steps": float(steps.mean()),
        "hit_rate": float(np.mean(misses < 0.5)),
        "miss_median": float(np.median(misses)),
        "miss_min": float(misses.min()),
        "kl": diag.kl,
        "clip_fraction": diag.clip_fraction,
        "policy_loss": diag.policy_loss,
        "value_loss": diag.value_loss,
        "epochs": diag.epochs,
        "aborted": diag.aborted,
        "seconds": seconds,
    }


class Trainer:
    """
    Alternates rollout collection (parallel, frozen params) with exclusive updates
    - one JSON line per update in log_path
    - checkpoints every checkpoint_every updates and at the end
    """

    def __init__(self, factory, params: NetworkParams, cfg: PPOConfig, pool=None,
                 log_path: Optional[Path] = None, checkpoint_dir: Optional[Path] = None):
        self.factory = factory
        self.params = params
        self.cfg = cfg
        self.pool = pool
        self.log_path = Path(log_path) if log_path else None
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        self.optimizers = make_optimizers(params, cfg)
        self.history: List[Dict[str, Any]] = []

    def _write_record(self, record: Dict[str, Any]) -> None:
        if self.log_path is None:
            return
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.log_path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record) + "\n")

    def checkpoint(self, name: str) -> Optional[Path]:
        if self.checkpoint_dir is None:
            return None
        return save_weights(self.params, self.checkpoint_dir / name)

    def train(self, updates: Optional[int] = None) -> List[Dict[str, Any]]:
        updates = self.cfg.updates if updates is None else updates
        metrics = get_run_metrics()
        for u in range(updates):
            t0 = time.perf_counter()
            batch = collect_rollouts(self.factory, self.params, self.cfg, u, self.pool)
            if not batch.episodes:
                log.error("Update %d: every episode faulted; skipping", u)
                continue
            self.params, diag = ppo_update(self.params, batch, self.cfg, self.optimizers)
            seconds = time.perf_counter() - t0
            record = update_record(u, batch, diag, seconds)
            self.history.append(record)
            self._write_record(record)
            metrics.log_update(seconds, len(batch.episodes), sum(batch.lengths))
            log.info("update %d | reward %.3f ± %.3f | steps %.1f | hit %.2f | kl %.4f | clip %.3f | epochs %d",
                     u, record["mean_reward"], record["std_reward"], record["mean_steps"], record["hit_rate"],
                     diag.kl, diag.clip_fraction, diag.epochs)
            if self.cfg.checkpoint_every and (u + 1) % self.cfg.checkpoint_every == 0:
                self.checkpoint(f"policy_{u + 1:05d}.ignw")
        self.checkpoint("policy_final.ignw")
        return self.history


@dataclass
class GradCheckReport:
    errors: Dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def as_dict(self) -> Dict[str, Any]:
        return {"errors": self.errors, "max_error": self.max_error, "tolerance": self.tolerance, "passed": self.passed}


TINY_POLICY = NetworkShape(obs_dim=3, h1=4, h2=3, h3=4, out=4)
TINY_VALUE = NetworkShape(obs_dim=3, h1=4, h2=3, h3=2, out=1)


def _relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-5) -> float:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def _numeric_grad(params: Params, loss_fn: Callable[[], float], eps: float) -> Params:
    out = {}
    for name, tensor in params.items():
        g = np.zeros_like(tensor)
        for idx in np.ndindex(tensor.shape):
            orig = tensor[idx]
            tensor[idx] = orig + eps
            plus = loss_fn()
            tensor[idx] = orig - eps
            minus = loss_fn()
            tensor[idx] = orig
            g[idx] = (plus - minus) / (2.0 * eps)
        out[name] = g
    return out


def tiny_batch(rng: np.random.Generator, lengths: Sequence[int] = (4, 3, 1), obs_dim: int = 3, act_dim: int = 2):
    b, t_len = len(lengths), max(lengths)
    mask = np.zeros((b, t_len))
    for i, n in enumerate(lengths):
        mask[i, :n] = 1.0
    obs = rng.normal(size=(b, t_len, obs_dim)) * mask[..., None]
    actions = rng.integers(0, 2, size=(b, t_len, act_dim)) * mask[..., None].astype(np.int64)
    adv = rng.normal(size=(b, t_len)) * mask
    returns = rng.normal(size=(b, t_len)) * mask
    return obs, actions, mask, adv, returns


def gradient_check(rng: np.random.Generator, tolerance: float = 1e-4, eps: float = 1e-6,
                   lengths: Sequence[int] = (4, 3, 1), clip: float = 0.1) -> GradCheckReport:
    """Analytic BPTT gradients of the surrogate and value losses vs central differences"""
    obs, actions, mask, adv, returns = tiny_batch(rng, lengths)
    policy = RecurrentNet(TINY_POLICY, init_params(TINY_POLICY, rng))
    value = RecurrentNet(TINY_VALUE, init_params(TINY_VALUE, rng))
    for net in (policy, value):
        for name in ("l1.b", "gru.b", "l3.b", "out.b"):
            net.params[name] += rng.uniform(-0.5, 0.5, size=net.params[name].shape)

    logits, _ = policy.forward_sequence(obs, mask)
    logp_old = (action_log_prob(logits, actions) + rng.uniform(-0.05, 0.05, size=mask.shape)) * mask

    _, g_pi, _ = policy_loss(policy, obs, actions, mask, logp_old, adv, clip)
    n_pi = _numeric_grad(policy.params, lambda: policy_loss(policy, obs, actions, mask, logp_old, adv, clip)[0], eps)
    _, g_v = value_loss(value, obs, mask, returns)
    n_v = _numeric_grad(value.params, lambda: value_loss(value, obs, mask, returns)[0], eps)

    report = GradCheckReport(tolerance=tolerance)
    for name in g_pi:
        report.errors[f"policy.{name}"] = _relative_error(g_pi[name], n_pi[name])
    for name in g_v:
        report.errors[f"value.{name}"] = _relative_error(g_v[name], n_v[name])
    log.info("Gradient check: max relative error %.3e over %d tensors", report.max_error, len(report.errors))
    return report

