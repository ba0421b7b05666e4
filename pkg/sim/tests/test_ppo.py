import json

import numpy as np
import pytest

from src import ppo
from src.engagement import EpisodeResult
from src.errors import ConfigFault, IntegrationFault
from src.neuralpolicy import NetworkParams, RecurrentNet, action_log_prob, init_params
from src.ppo import TINY_POLICY, TINY_VALUE, Adam, EpisodeRollout, PPOConfig, RolloutBatch


def _tiny_params(seed=0):
    rng = np.random.default_rng(seed)
    return NetworkParams(TINY_POLICY, TINY_VALUE, init_params(TINY_POLICY, rng), init_params(TINY_VALUE, rng))


def _result(index, steps, terminal=0.0, fault=None):
    return EpisodeResult(
        index=index, miss=0.3 if terminal else 4.0, fuel_used=1.0, cause="intercept-window-exit",
        steps=steps, duration=0.04 * steps, total_reward=float(steps) + terminal,
        reward_terms={"tracking": float(steps), "control": 0.0, "attitude": 0.0, "terminal": terminal},
        shaping=np.ones(steps), terminal=np.zeros(steps), fault=fault,
    )


def _rollout(params, index, steps, rng, fault=None):
    obs = rng.normal(size=(steps, 3))
    actions = rng.integers(0, 2, size=(steps, 2))
    logits, _ = RecurrentNet(params.policy_shape, params.policy).forward_sequence(obs[None], np.ones((1, steps)))
    terminal = np.zeros(steps)
    terminal[-1] = 10.0 if index % 2 == 0 else 0.0
    return EpisodeRollout(
        obs=obs, actions=actions, log_probs=action_log_prob(logits[0], actions),
        shaping=rng.uniform(0.5, 1.0, size=steps), terminal=terminal, values=np.zeros(steps),
        result=_result(index, steps, terminal[-1], fault),
    )


class FakeFactory:
    def __init__(self, fault_every=0):
        self.fault_every = fault_every
        self.seen = []

    def rollout(self, index, params):
        self.seen.append(index)
        fault = None
        if self.fault_every and index % self.fault_every == 0:
            fault = IntegrationFault("nan", index=3).to_record()
        return _rollout(params, index, 2 + index % 4, np.random.default_rng(index), fault)


def test_gradient_check_passes():
    report = ppo.gradient_check(np.random.default_rng(0))
    assert report.passed, report.as_dict()
    assert len(report.errors) == 18


def test_gradient_check_other_lengths():
    report = ppo.gradient_check(np.random.default_rng(1), lengths=(5, 2, 2, 1))
    assert report.passed, report.as_dict()


def test_clipped_branch_has_zero_gradient():
    rng = np.random.default_rng(2)
    obs, actions, mask, _, _ = ppo.tiny_batch(rng)
    net = RecurrentNet(TINY_POLICY, init_params(TINY_POLICY, rng))
    logits, _ = net.forward_sequence(obs, mask)
    logp_old = (action_log_prob(logits, actions) - 0.5) * mask
    positive = np.abs(rng.normal(size=mask.shape)) * mask + 0.1 * mask
    _, grads, info = ppo.policy_loss(net, obs, actions, mask, logp_old, positive, 0.1)
    assert np.all(info["ratio"][mask > 0] > 1.1)
    assert all(not g.any() for g in grads.values())

    _, grads, _ = ppo.policy_loss(net, obs, actions, mask, logp_old, -positive, 0.1)
    assert any(g.any() for g in grads.values())


def test_first_step_leaves_recurrent_weights_untouched():
    rng = np.random.default_rng(3)
    obs, actions, mask, adv, returns = ppo.tiny_batch(rng, lengths=(1, 1))
    policy = RecurrentNet(TINY_POLICY, init_params(TINY_POLICY, rng))
    value = RecurrentNet(TINY_VALUE, init_params(TINY_VALUE, rng))
    logits, _ = policy.forward_sequence(obs, mask)
    _, g_pi, _ = ppo.policy_loss(policy, obs, actions, mask, action_log_prob(logits, actions), adv, 0.1)
    _, g_v = ppo.value_loss(value, obs, mask, returns)
    assert not g_pi["gru.Wh"].any()
    assert not g_v["gru.Wh"].any()


def test_value_step_reduces_loss():
    rng = np.random.default_rng(4)
    obs, _, mask, _, returns = ppo.tiny_batch(rng)
    value = RecurrentNet(TINY_VALUE, init_params(TINY_VALUE, rng))
    before, grads = ppo.value_loss(value, obs, mask, returns)
    Adam(value.params, lr=1e-3).step(value.params, grads)
    after, _ = ppo.value_loss(value, obs, mask, returns)
    assert after < before


def test_dual_discount_return():
    r = ppo.dual_discount_return([1.0, 1.0, 1.0], [0.0, 0.0, 10.0], 0.9, 0.995)
    assert r == pytest.approx([1.0 + 0.9 + 0.81 + 10.0 * 0.995 ** 2, 1.9 + 9.95, 11.0])
    with pytest.raises(ConfigFault):
        ppo.dual_discount_return([1.0], [0.0, 1.0], 0.9, 0.995)


def test_advantages_normalized_over_valid_steps():
    mask = np.array([[1.0, 1.0, 1.0], [1.0, 0.0, 0.0]])
    returns = np.array([[3.0, 2.0, 1.0], [5.0, 99.0, 99.0]])
    adv = ppo.advantages(returns, np.zeros_like(returns), mask)
    valid = adv[mask > 0]
    assert valid.mean() == pytest.approx(0.0, abs=1e-12)
    assert valid.std() == pytest.approx(1.0)
    assert not adv[mask == 0].any()
    flat = ppo.advantages(np.ones((1, 3)), np.zeros((1, 3)), np.ones((1, 3)))
    assert np.array_equal(flat, np.ones((1, 3)))


def test_mean_kl():
    logits = np.random.default_rng(5).normal(size=(2, 3, 4))
    mask = np.ones((2, 3))
    assert ppo.mean_kl(logits, logits, mask) == pytest.approx(0.0, abs=1e-15)
    assert ppo.mean_kl(logits, logits + np.array([1.0, 0.0, 0.0, 0.0]), mask) > 0.0


def test_adam_first_step_size():
    params = {"w": np.array([1.0, -2.0])}
    Adam(params, lr=0.01).step(params, {"w": np.array([3.0, -0.5])})
    assert np.allclose(params["w"], [0.99, -1.99], atol=1e-8)


def test_ppo_config_from_dict():
    cfg = PPOConfig.from_dict({"clip": "0.2", "epochs": 5})
    assert cfg.clip == 0.2 and cfg.epochs == 5
    with pytest.raises(ConfigFault):
        PPOConfig.from_dict({"learning_rate": 1e-3})
    with pytest.raises(ConfigFault):
        PPOConfig(clip=1.5)


def test_ppo_update_changes_copy_only():
    params = _tiny_params()
    rng = np.random.default_rng(6)
    batch = RolloutBatch([_rollout(params, i, 2 + i % 3, rng) for i in range(6)])
    snapshot = {k: v.copy() for k, v in params.policy.items()}
    new, diag = ppo.ppo_update(params, batch, PPOConfig(epochs=3, lr_policy=1e-3))
    assert diag.epochs == 3 and not diag.aborted
    assert all(np.array_equal(params.policy[k], snapshot[k]) for k in snapshot)
    assert any(not np.array_equal(new.policy[k], snapshot[k]) for k in snapshot)
    assert diag.kl >= 0.0
    assert 0.0 <= diag.clip_fraction <= 1.0


def test_ppo_update_kl_early_stop():
    params = _tiny_params(1)
    rng = np.random.default_rng(7)
    batch = RolloutBatch([_rollout(params, i, 4, rng) for i in range(4)])
    _, diag = ppo.ppo_update(params, batch, PPOConfig(epochs=10, kl_target=1e-14, lr_policy=1e-2))
    assert diag.epochs == 1


def test_ppo_update_aborts_on_non_finite():
    params = _tiny_params(2)
    rng = np.random.default_rng(8)
    bad = _rollout(params, 0, 3, rng)
    bad.obs[1, 0] = np.nan
    returned, diag = ppo.ppo_update(params, RolloutBatch([bad]), PPOConfig(epochs=2))
    assert diag.aborted
    assert returned is params
    with pytest.raises(ConfigFault):
        ppo.ppo_update(params, RolloutBatch([]), PPOConfig())


def test_collect_rollouts_indices_and_faults():
    factory = FakeFactory(fault_every=4)
    cfg = PPOConfig(episodes_per_update=5)
    batch = ppo.collect_rollouts(factory, _tiny_params(), cfg, update_index=2)
    assert factory.seen == [10, 11, 12, 13, 14]
    assert batch.faults == 1
    assert len(batch.episodes) == 4
    padded = batch.pad(0.9, 0.995)
    assert padded.mask.sum() == sum(batch.lengths)


def test_trainer_logs_and_checkpoints(tmp_path):
    cfg = PPOConfig(episodes_per_update=3, epochs=2, checkpoint_every=1)
    trainer = ppo.Trainer(FakeFactory(), _tiny_params(), cfg, log_path=tmp_path / "train_log.jsonl",
                          checkpoint_dir=tmp_path / "checkpoints")
    history = trainer.train(updates=2)
    assert [r["update"] for r in history] == [0, 1]
    lines = (tmp_path / "train_log.jsonl").read_text(encoding="utf-8").splitlines()
    assert [json.loads(line)["episodes"] for line in lines] == [3, 3]
    names = sorted(p.name for p in (tmp_path / "checkpoints").iterdir())
    assert names == ["policy_00001.ignw", "policy_00002.ignw", "policy_final.ignw"]
