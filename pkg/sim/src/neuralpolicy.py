"""
Recurrent policy and value networks
- dense(tanh) -> GRU -> dense(tanh) -> dense(linear), numpy only
- batched, masked sequence forward with full backpropagation through time
- 10 binary action elements, each a softmax over 2 logits
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from src.airframe import ActionCommand
from src.engagement import Controller, TruthView
from src.errors import ConfigFault
from src.seeker import OBS_DIM, SensorPacket

log = logging.getLogger(__name__)

ACT_DIM = 10
TENSOR_NAMES = ("l1.W", "l1.b", "gru.Wx", "gru.Wh", "gru.b", "l3.W", "l3.b", "out.W", "out.b")

Params = Dict[str, np.ndarray]


@dataclass(frozen=True)
class NetworkShape:
    obs_dim: int
    h1: int
    h2: int
    h3: int
    out: int

    @classmethod
    def policy(cls, obs_dim: int = OBS_DIM, act_dim: int = ACT_DIM) -> "NetworkShape":
        h1, h3 = 10 * obs_dim, 10 * act_dim
        return cls(obs_dim, h1, int(round(np.sqrt(h1 * h3))), h3, 2 * act_dim)

    @classmethod
    def value(cls, obs_dim: int = OBS_DIM) -> "NetworkShape":
        h1, h3 = 10 * obs_dim, 5
        return cls(obs_dim, h1, int(round(np.sqrt(h1 * h3))), h3, 1)

    def tensor_shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {
            "l1.W": (self.obs_dim, self.h1),
            "l1.b": (self.h1,),
            "gru.Wx": (self.h1, 3 * self.h2),
            "gru.Wh": (self.h2, 3 * self.h2),
            "gru.b": (3 * self.h2,),
            "l3.W": (self.h2, self.h3),
            "l3.b": (self.h3,),
            "out.W": (self.h3, self.out),
            "out.b": (self.out,),
        }

    def as_dict(self) -> Dict[str, int]:
        return {"obs_dim": self.obs_dim, "h1": self.h1, "h2": self.h2, "h3": self.h3, "out": self.out}


def init_params(shape: NetworkShape, rng: np.random.Generator) -> Params:
    """Weights uniform in ±√(1/fan_in), zero biases"""
    params: Params = {}
    for name, dims in shape.tensor_shapes().items():
        if len(dims) == 1:
            params[name] = np.zeros(dims)
        else:
            bound = np.sqrt(1.0 / dims[0])
            params[name] = rng.uniform(-bound, bound, size=dims)
    return params


def zero_params(shape: NetworkShape) -> Params:
    return {name: np.zeros(dims) for name, dims in shape.tensor_shapes().items()}


def check_params(shape: NetworkShape, params: Params) -> None:
    for name, dims in shape.tensor_shapes().items():
        if name not in params:
            raise ConfigFault(f"missing tensor {name}")
        if params[name].shape != dims:
            raise ConfigFault(f"tensor {name} has shape {params[name].shape}, expected {dims}")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def gru_cell(params: Params, a1: np.ndarray, h: np.ndarray):
    """
    Gates ordered [reset, update, candidate]
    - c = tanh(x Wx_c + b_c + r ⊙ (h Wh_c))
    - h' = (1 - u) h + u c
    """
    hdim = h.shape[-1]
    gx = a1 @ params["gru.Wx"] + params["gru.b"]
    wh = params["gru.Wh"]
    gh = h @ wh[:, : 2 * hdim]
    r = _sigmoid(gx[..., :hdim] + gh[..., :hdim])
    u = _sigmoid(gx[..., hdim : 2 * hdim] + gh[..., hdim:])
    hc = h @ wh[:, 2 * hdim :]
    c = np.tanh(gx[..., 2 * hdim :] + r * hc)
    h_new = (1.0 - u) * h + u * c
    return h_new, r, u, c, hc


class RecurrentNet:
    """One dense-GRU-dense-dense stack over a named parameter set"""

    def __init__(self, shape: NetworkShape, params: Params):
        check_params(shape, params)
        self.shape = shape
        self.params = params

    def initial_hidden(self, batch: Optional[int] = None) -> np.ndarray:
        return np.zeros(self.shape.h2) if batch is None else np.zeros((batch, self.shape.h2))

    def step(self, obs: np.ndarray, hidden: np.ndarray):
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape[-1] != self.shape.obs_dim:
            raise ConfigFault(f"observation has {obs.shape[-1]} elements, network expects {self.shape.obs_dim}")
        p = self.params
        a1 = np.tanh(obs @ p["l1.W"] + p["l1.b"])
        h_new = gru_cell(p, a1, hidden)[0]
        a3 = np.tanh(h_new @ p["l3.W"] + p["l3.b"])
        return a3 @ p["out.W"] + p["out.b"], h_new

    def forward_sequence(self, obs: np.ndarray, mask: np.ndarray):
        """
        obs (B, T, obs_dim), mask (B, T) with 1 on valid steps
        - padded steps carry the hidden state unchanged
        - returns (outputs (B, T, out), cache for backward_sequence)
        """
        p = self.params
        b, t_len, _ = obs.shape
        hdim = self.shape.h2
        a1 = np.tanh(obs @ p["l1.W"] + p["l1.b"])
        h = np.zeros((b, hdim))
        h_prev = np.empty((b, t_len, hdim))
        hs = np.empty((b, t_len, hdim))
        rs = np.empty((b, t_len, hdim))
        us = np.empty((b, t_len, hdim))
        cs = np.empty((b, t_len, hdim))
        hcs = np.empty((b, t_len, hdim))
        for k in range(t_len):
            h_prev[:, k] = h
            h_new, r, u, c, hc = gru_cell(p, a1[:, k], h)
            m = mask[:, k, None]
            h = m * h_new + (1.0 - m) * h
            hs[:, k], rs[:, k], us[:, k], cs[:, k], hcs[:, k] = h, r, u, c, hc
        a3 = np.tanh(hs @ p["l3.W"] + p["l3.b"])
        out = a3 @ p["out.W"] + p["out.b"]
        cache = {"obs": obs, "mask": mask, "a1": a1, "h_prev": h_prev, "h": hs,
                 "r": rs, "u": us, "c": cs, "hc": hcs, "a3": a3}
        return out, cache

    def backward_sequence(self, d_out: np.ndarray, cache) -> Params:
        """Gradients of a loss with ∂loss/∂outputs = d_out (zero on padded steps)"""
        p = self.params
        hdim = self.shape.h2
        mask = cache["mask"]
        grads = {name: np.zeros_like(v) for name, v in p.items()}

        a3 = cache["a3"]
        grads["out.W"] = np.einsum("bti,btj->ij", a3, d_out)
        grads["out.b"] = d_out.sum(axis=(0, 1))
        dz3 = (d_out @ p["out.W"].T) * (1.0 - a3 * a3)
        grads["l3.W"] = np.einsum("bti,btj->ij", cache["h"], dz3)
        grads["l3.b"] = dz3.sum(axis=(0, 1))
        dh_out = dz3 @ p["l3.W"].T

        wh = p["gru.Wh"]
        wh_ru = wh[:, : 2 * hdim]
        wh_c = wh[:, 2 * hdim :]
        b, t_len, _ = d_out.shape
        dgx = np.zeros((b, t_len, 3 * hdim))
        d_wh = np.zeros_like(wh)
        dh_next = np.zeros((b, hdim))
        for k in reversed(range(t_len)):
            dh = dh_next + dh_out[:, k]
            m = mask[:, k, None]
            dh_new = m * dh
            dh_prev = (1.0 - m) * dh
            h_prev = cache["h_prev"][:, k]
            r, u, c, hc = cache["r"][:, k], cache["u"][:, k], cache["c"][:, k], cache["hc"][:, k]

            du = dh_new * (c - h_prev)
            dc = dh_new * u
            dh_prev += dh_new * (1.0 - u)
            dzc = dc * (1.0 - c * c)
            dr = dzc * hc
            dhc = dzc * r
            d_wh[:, 2 * hdim :] += h_prev.T @ dhc
            dh_prev += dhc @ wh_c.T
            dzr = dr * r * (1.0 - r)
            dzu = du * u * (1.0 - u)
            dru = np.concatenate((dzr, dzu), axis=1)
            d_wh[:, : 2 * hdim] += h_prev.T @ dru
            dh_prev += dru @ wh_ru.T
            dgx[:, k] = np.concatenate((dru, dzc), axis=1)
            dh_next = dh_prev

        a1 = cache["a1"]
        grads["gru.Wh"] = d_wh
        grads["gru.Wx"] = np.einsum("bti,btj->ij", a1, dgx)
        grads["gru.b"] = dgx.sum(axis=(0, 1))
        dz1 = (dgx @ p["gru.Wx"].T) * (1.0 - a1 * a1)
        grads["l1.W"] = np.einsum("bti,btj->ij", cache["obs"], dz1)
        grads["l1.b"] = dz1.sum(axis=(0, 1))
        return grads


def pair_probabilities(logits: np.ndarray) -> np.ndarray:
    """(..., 2·A) logits -> (..., A, 2) probabilities"""
    pairs = logits.reshape(logits.shape[:-1] + (-1, 2))
    shifted = pairs - pairs.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def pair_log_probabilities(logits: np.ndarray) -> np.ndarray:
    pairs = logits.reshape(logits.shape[:-1] + (-1, 2))
    shifted = pairs - pairs.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def action_log_prob(logits: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Σ log p(a_i) over the action elements; bits (..., A) of 0/1"""
    logp = pair_log_probabilities(logits)
    chosen = np.take_along_axis(logp, np.asarray(bits, dtype=np.int64)[..., None], axis=-1)[..., 0]
    return chosen.sum(axis=-1)


def sample_action(logits: np.ndarray, rng: Optional[np.random.Generator], mode: str = "sample"):
    """Returns (ActionCommand, log-probability); bit 1 means fire"""
    probs = pair_probabilities(logits)
    if mode == "argmax":
        bits = (probs[:, 1] > probs[:, 0]).astype(np.int64)
    elif mode == "sample":
        bits = (rng.uniform(size=probs.shape[0]) < probs[:, 1]).astype(np.int64)
    else:
        raise ConfigFault(f"unknown action mode {mode!r}")
    return ActionCommand(tuple(int(b) for b in bits)), float(action_log_prob(logits, bits))


@dataclass
class NetworkParams:
    """Policy and value parameter sets travelling together (rollouts, weight files)"""

    policy_shape: NetworkShape
    value_shape: NetworkShape
    policy: Params
    value: Params

    @classmethod
    def initialize(cls, rng: np.random.Generator, obs_dim: int = OBS_DIM, act_dim: int = ACT_DIM) -> "NetworkParams":
        ps, vs = NetworkShape.policy(obs_dim, act_dim), NetworkShape.value(obs_dim)
        return cls(ps, vs, init_params(ps, rng), init_params(vs, rng))

    @classmethod
    def zeros(cls, obs_dim: int = OBS_DIM, act_dim: int = ACT_DIM) -> "NetworkParams":
        ps, vs = NetworkShape.policy(obs_dim, act_dim), NetworkShape.value(obs_dim)
        return cls(ps, vs, zero_params(ps), zero_params(vs))

    @property
    def act_dim(self) -> int:
        return self.policy_shape.out // 2

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.policy_shape, self.value_shape,
            {k: v.copy() for k, v in self.policy.items()},
            {k: v.copy() for k, v in self.value.items()},
        )

    def named_tensors(self) -> Dict[str, np.ndarray]:
        out = {f"policy.{k}": self.policy[k] for k in TENSOR_NAMES}
        out.update({f"value.{k}": self.value[k] for k in TENSOR_NAMES})
        return out


def policy_forward(params: NetworkParams, obs: np.ndarray, hidden: np.ndarray):
    return RecurrentNet(params.policy_shape, params.policy).step(obs, hidden)


def value_forward(params: NetworkParams, obs: np.ndarray, hidden: np.ndarray):
    out, h = RecurrentNet(params.value_shape, params.value).step(obs, hidden)
    return float(out[0]), h


def save_weights(params: NetworkParams, path: Path) -> Path:
    from src.tensor_codec import write_tensor_file

    header = {
        "obs_dim": params.policy_shape.obs_dim,
        "act_dim": params.act_dim,
        "policy": params.policy_shape.as_dict(),
        "value": params.value_shape.as_dict(),
    }
    return write_tensor_file(Path(path), header, params.named_tensors())


def load_weights(path: Path, obs_dim: int = OBS_DIM, act_dim: int = ACT_DIM) -> NetworkParams:
    """
    Read a weight file and check it against the configured network sizes
    - obs_dim and act_dim in the header first, then every tensor shape
    """
    from src.tensor_codec import read_tensor_file

    ps, vs = NetworkShape.policy(obs_dim, act_dim), NetworkShape.value(obs_dim)
    expected = {f"policy.{k}": v for k, v in ps.tensor_shapes().items()}
    expected.update({f"value.{k}": v for k, v in vs.tensor_shapes().items()})
    _, tensors = read_tensor_file(Path(path), expected, {"obs_dim": obs_dim, "act_dim": act_dim})
    policy = {k: tensors[f"policy.{k}"] for k in TENSOR_NAMES}
    value = {k: tensors[f"value.{k}"] for k in TENSOR_NAMES}
    log.info("Loaded weights from %s", path)
    return NetworkParams(ps, vs, policy, value)


class PolicyController(Controller):
    """
    Recurrent policy acting on the 11-element observation
    - hidden states reset every episode
    - keeps the per-step record PPO needs (obs, bits, log-prob, value)
    """

    name = "policy"

    def __init__(self, params: NetworkParams, rng: Optional[np.random.Generator] = None, mode: str = "argmax"):
        if mode == "sample" and rng is None:
            raise ConfigFault("sampling mode needs a random generator")
        self.params = params
        self.policy_net = RecurrentNet(params.policy_shape, params.policy)
        self.value_net = RecurrentNet(params.value_shape, params.value)
        self.rng = rng
        self.mode = mode
        self.reset()

    def reset(self) -> None:
        self.h_policy = self.policy_net.initial_hidden()
        self.h_value = self.value_net.initial_hidden()
        self.observations = []
        self.actions = []
        self.log_probs = []
        self.values = []

    def act(self, packet: SensorPacket, truth: TruthView) -> ActionCommand:
        obs = packet.obs
        logits, self.h_policy = self.policy_net.step(obs, self.h_policy)
        value, self.h_value = self.value_net.step(obs, self.h_value)
        action, logp = sample_action(logits, self.rng, self.mode)
        self.observations.append(obs.copy())
        self.actions.append(action.as_array())
        self.log_probs.append(logp)
        self.values.append(float(value[0]))
        return action
