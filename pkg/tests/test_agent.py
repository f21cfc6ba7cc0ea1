import numpy as np
import pytest
from numpy.testing import assert_allclose

from Agent.Learning import (
    GoalEpisode, build_td_loss, make_discounts, peng_q_lambda_targets, relabel_hindsight, select_action,
    td_update,
)
from Agent.Policy import NetworkPolicy
from Agent.Replay import ReplayBuffer
from Autodiff.GradCheck import check_gradients
from Autodiff.Graph import Graph
from Autodiff.Optim import RmsPropState
from Nets.Networks import THETA, bind, encode, initial_state, q_values, time_features
from shared.errors import ShapeError
from shared.schemas import HindsightConfig


def _episode(length=4, shape=(4, 4, 3), seed=0, reward=0.0, gamma=0.99) -> GoalEpisode:
    rng = np.random.default_rng(seed)
    rewards = np.zeros(length)
    rewards[-1] = reward
    return GoalEpisode(
        observations=rng.uniform(size=(length, *shape)),
        terminal=rng.uniform(size=shape),
        actions=rng.integers(5, size=length),
        rewards=rewards,
        discounts=make_discounts(length, gamma),
        goal=rng.uniform(size=shape),
    )


# ---------- acting ----------

def test_select_action_greedy_and_ties():
    rng = np.random.default_rng(0)
    assert select_action(np.array([0.1, 0.9, 0.3, 0.0, -1.0]), 0.0, rng) == 1
    assert select_action(np.array([0.5, 0.5, 0.5, 0.5, 0.5]), 0.0, rng) == 0
    assert select_action(np.array([0.0, 2.0, 2.0, 0.0, 0.0]), 0.0, rng) == 1


def test_select_action_uniform_when_fully_exploring():
    rng = np.random.default_rng(1)
    n = 10_000
    counts = np.bincount([select_action(np.arange(5.0), 1.0, rng) for _ in range(n)], minlength=5)
    sigma = np.sqrt(n * 0.2 * 0.8)
    assert np.all(np.abs(counts - n / 5) < 3 * sigma)


def test_make_discounts():
    assert_allclose(make_discounts(4, 0.9), [0.9, 0.9, 0.9, 0.0])
    assert_allclose(make_discounts(1, 0.9), [0.0])


# ---------- Peng's Q(lambda) ----------

def _mixture_oracle(rewards, discounts, q_all, lam):
    """Explicit lambda-weighted mixture of n-step returns bootstrapped on max Q."""
    T = len(rewards)
    m = q_all.max(axis=-1)
    out = np.zeros(T)
    for t in range(T):
        horizon = T - t
        d = np.concatenate([[1.0], np.cumprod(discounts[t:])])
        total = sum(d[k] * lam ** k * rewards[t + k] for k in range(horizon))
        total += sum((1.0 - lam) * lam ** (n - 1) * d[n] * m[t + n] for n in range(1, horizon))
        out[t] = total
    return out


@pytest.mark.parametrize("lam", [0.0, 0.5, 0.7, 0.9, 1.0])
def test_peng_targets_match_mixture_of_n_step_returns(lam):
    rng = np.random.default_rng(2)
    for _ in range(100):
        T = int(rng.integers(1, 9))
        rewards = rng.normal(size=T)
        discounts = rng.uniform(0.5, 1.0, size=T)
        discounts[-1] = 0.0
        q_all = rng.normal(size=(T, 5))
        assert_allclose(peng_q_lambda_targets(rewards, discounts, q_all, lam),
                        _mixture_oracle(rewards, discounts, q_all, lam), atol=1e-10)


def test_peng_lambda_zero_is_one_step_q_learning():
    rewards = np.array([0.0, 0.0, 1.0])
    discounts = make_discounts(3, 0.9)
    q_all = np.array([[0.0, 1.0], [2.0, 0.5], [0.3, 0.1]])
    assert_allclose(peng_q_lambda_targets(rewards, discounts, q_all, 0.0), [0.9 * 2.0, 0.9 * 0.3, 1.0])


def test_peng_lambda_one_is_monte_carlo():
    rewards = np.array([0.0, 0.0, 1.0])
    discounts = make_discounts(3, 0.9)
    q_all = np.random.default_rng(3).normal(size=(3, 5))
    assert_allclose(peng_q_lambda_targets(rewards, discounts, q_all, 1.0), [0.81, 0.9, 1.0])


def test_peng_targets_batched_rows_are_independent():
    rng = np.random.default_rng(4)
    rewards, discounts, q_all = rng.normal(size=(3, 4)), rng.uniform(size=(3, 4)), rng.normal(size=(3, 4, 5))
    batched = peng_q_lambda_targets(rewards, discounts, q_all, 0.7)
    for b in range(3):
        assert_allclose(batched[b], peng_q_lambda_targets(rewards[b], discounts[b], q_all[b], 0.7))


def test_peng_targets_reject_mismatched_shapes():
    with pytest.raises(ShapeError):
        peng_q_lambda_targets(np.zeros(3), np.zeros(4), np.zeros((3, 5)), 0.5)


# ---------- hindsight ----------

def test_hindsight_gate_failure_returns_the_episode_unchanged():
    ep = _episode()
    assert relabel_hindsight(ep, HindsightConfig(p_her=0.0), np.random.default_rng(0)) is ep


def test_hindsight_window_one_relabels_with_terminal():
    ep = _episode(reward=0.2)
    out = relabel_hindsight(ep, HindsightConfig(p_her=1.0, window=1), np.random.default_rng(0))
    assert np.array_equal(out.goal, ep.terminal)
    assert out.rewards[-1] == 1.0
    assert not np.any(out.rewards[:-1])
    assert ep.rewards[-1] == 0.2


def test_hindsight_goal_is_one_of_the_last_reached_states():
    ep = _episode(length=6)
    reached = ep.reached_states()
    rng = np.random.default_rng(5)
    for _ in range(50):
        out = relabel_hindsight(ep, HindsightConfig(p_her=1.0, window=3), rng)
        assert any(np.array_equal(out.goal, s) for s in reached[-3:])


def test_hindsight_window_longer_than_episode():
    ep = _episode(length=2)
    out = relabel_hindsight(ep, HindsightConfig(p_her=1.0, window=5), np.random.default_rng(6))
    assert any(np.array_equal(out.goal, s) for s in ep.reached_states())


def test_hindsight_rate():
    ep = _episode(length=3, shape=(1, 1, 1))
    rng = np.random.default_rng(7)
    cfg = HindsightConfig(p_her=0.25)
    n = 100_000
    hits = sum(relabel_hindsight(ep, cfg, rng) is not ep for _ in range(n))
    assert abs(hits - 0.25 * n) < 3 * np.sqrt(n * 0.25 * 0.75)


# ---------- TD update ----------

def test_td_loss_single_step_oracle(tiny_params):
    ep = _episode(length=1, reward=0.6)
    g = Graph()
    loss, targets = build_td_loss(g, bind(g, tiny_params, tiny_params.names(THETA)), [ep], lam=0.9)
    q, _ = q_values(encode(ep.observations[0], tiny_params), encode(ep.goal, tiny_params),
                    time_features(1, 1), initial_state(tiny_params), tiny_params)
    assert_allclose(targets, [[0.6]])
    assert float(loss.value) == pytest.approx((q[int(ep.actions[0])] - 0.6) ** 2)


def test_td_loss_gradient_matches_finite_differences(tiny_params):
    batch = [_episode(length=3, seed=s, reward=float(s)) for s in range(2)]
    g = Graph()
    loss, _ = build_td_loss(g, bind(g, tiny_params, tiny_params.names(THETA)), batch, lam=0.7)
    names = ["encoder/w2", "encoder/b1", "gru/wh", "gru/ur", "time/w", "head/w", "head/v"]
    errors = check_gradients(g, loss, names)
    assert max(errors.values()) < 1e-4, errors


def test_td_update_moves_theta_only(tiny_params):
    batch = [_episode(seed=s, reward=1.0) for s in range(2)]
    result = td_update(batch, tiny_params, RmsPropState(learning_rate=1e-2), lam=0.9)
    assert not result.refused
    assert result.params.digest(THETA) != tiny_params.digest(THETA)
    assert np.array_equal(result.params.arrays["embed/w"], tiny_params.arrays["embed/w"])
    assert result.state.steps == 1


def test_td_update_lowers_the_loss_on_a_fixed_batch(tiny_params):
    batch = [_episode(seed=s, reward=1.0) for s in range(2)]
    params, opt = tiny_params, RmsPropState(learning_rate=1e-3)
    # lambda = 1 keeps the targets independent of the parameters
    first = td_update(batch, params, opt, lam=1.0)
    result = first
    for _ in range(30):
        result = td_update(batch, result.params, result.state, lam=1.0)
    assert result.loss < first.loss


def test_td_batch_requires_equal_lengths(tiny_params):
    with pytest.raises(ShapeError):
        td_update([_episode(length=3), _episode(length=4)], tiny_params, RmsPropState(), lam=0.5)


# ---------- replay and policy ----------

def test_replay_buffer_is_bounded_fifo():
    replay = ReplayBuffer(capacity=3)
    rng = np.random.default_rng(8)
    assert replay.sample(rng) is None
    episodes = [_episode(seed=s) for s in range(5)]
    replay.extend(episodes)
    assert len(replay) == 3
    assert all(a is b for a, b in zip(replay.episodes(), episodes[2:]))
    picked = replay.sample(rng)
    assert any(picked is ep for ep in episodes[2:])


def test_network_policy_resets_state_per_goal(tiny_params):
    rng = np.random.default_rng(9)
    goal, obs = rng.uniform(size=(4, 4, 3)), rng.uniform(size=(4, 4, 3))
    policy = NetworkPolicy(tiny_params, episode_length=4)
    policy.begin(goal)
    first = [policy.act(obs, t) for t in range(1, 5)]
    policy.begin(goal)
    again = [policy.act(obs, t) for t in range(1, 5)]
    assert first == again
    assert all(0 <= a < 5 for a in first)
