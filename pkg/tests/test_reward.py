import numpy as np
import pytest
from numpy.testing import assert_allclose

from Autodiff.GradCheck import check_gradients
from Autodiff.Graph import Graph, backward
from Autodiff.Optim import RmsPropState, rmsprop_step
from Nets.Networks import PHI, ParamSet, bind, embed, init_params
from Reward.Providers import (
    AutoencoderReward, DiscernReward, DiscriminatorBatchItem, PixelL2Reward, RewardProvider,
    achievement_reward, ae_baseline_train, build_discriminator_logits, build_discriminator_loss, discriminator_loss,
    discriminator_probabilities, goal_similarity, l2_pixel_reward, make_provider,
)
from shared.errors import OutOfRangeError


def _identity_embedding(params: ParamSet) -> ParamSet:
    """Embedding weights = identity, so axis-aligned features embed to themselves."""
    f = params.arrays["embed/w"].shape[0]
    return params.replace({"embed/w": np.eye(f), "embed/b": np.zeros(f)})


@pytest.fixture
def square_params(tiny_config):
    # feature and embedding sizes equal so the identity embedding is expressible
    return init_params(tiny_config.model_copy(update={"feature_dim": 5, "embedding_dim": 5}), seed=0)


def test_goal_similarity_examples(tiny_params):
    rng = np.random.default_rng(0)
    h = rng.normal(size=6)
    assert goal_similarity(h, h, tiny_params) == pytest.approx(1.0, abs=1e-10)
    a, b = rng.normal(size=6), rng.normal(size=6)
    assert goal_similarity(a, b, tiny_params) == pytest.approx(float(embed(a, tiny_params) @ embed(b, tiny_params)))


def test_goal_similarity_opposite_embeddings(square_params):
    params = _identity_embedding(square_params)
    u = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
    assert goal_similarity(u, -u, params) == pytest.approx(-1.0)


def test_goal_similarity_degenerate_embedding(square_params, caplog):
    params = _identity_embedding(square_params)
    assert goal_similarity(np.zeros(5), np.ones(5), params) == 0.0
    assert "degenerate" in caplog.text


@pytest.mark.parametrize("ell,expected", [(-0.3, 0.0), (0.7, 0.7), (1.0, 1.0), (1.0 + 1e-12, 1.0)])
def test_achievement_reward(ell, expected):
    assert achievement_reward(ell) == pytest.approx(expected)


def test_achievement_reward_range_over_random_embeddings(tiny_params):
    rng = np.random.default_rng(1)
    for _ in range(200):
        r = achievement_reward(goal_similarity(rng.normal(size=6), rng.normal(size=6), tiny_params))
        assert 0.0 <= r <= 1.0


def test_uniform_logits_give_log_k_plus_one(tiny_params):
    h = np.random.default_rng(2).normal(size=6)
    item = DiscriminatorBatchItem(h, h, np.stack([h] * 4))
    assert item.beta == 5.0
    assert discriminator_loss(item, tiny_params) == pytest.approx(np.log(5.0))
    assert_allclose(discriminator_probabilities(item, tiny_params), np.full(5, 0.2))


def test_discriminator_scalar_oracle(square_params):
    params = _identity_embedding(square_params)
    u = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
    item = DiscriminatorBatchItem(u, u, np.stack([-u] * 4))
    q_goal = np.exp(5.0) / (np.exp(5.0) + 4.0 * np.exp(-5.0))
    assert discriminator_probabilities(item, params)[0] == pytest.approx(q_goal)
    assert discriminator_loss(item, params) == pytest.approx(-np.log(q_goal))


def test_probabilities_sum_to_one(tiny_params):
    rng = np.random.default_rng(3)
    for _ in range(20):
        item = DiscriminatorBatchItem(rng.normal(size=6), rng.normal(size=6), rng.normal(size=(4, 6)))
        q = discriminator_probabilities(item, tiny_params)
        assert abs(q.sum() - 1.0) < 1e-12


def test_discriminator_gradient_matches_finite_differences(square_params):
    rng = np.random.default_rng(4)
    g = Graph()
    p = bind(g, square_params, square_params.names(PHI))
    loss = build_discriminator_loss(
        g, p, g.input("s", rng.normal(size=(3, 5))), g.input("g", rng.normal(size=(3, 5))),
        g.input("d", rng.normal(size=(3, 4, 5))), beta=5.0,
    )
    errors = check_gradients(g, loss, square_params.names(PHI))
    assert max(errors.values()) < 1e-4, errors


def test_discriminator_loss_never_reaches_the_encoder(tiny_params):
    g = Graph()
    p = bind(g, tiny_params, tiny_params.names())
    rng = np.random.default_rng(5)
    h = g.input("h", rng.normal(size=(2, 6)))
    loss = build_discriminator_loss(g, p, h, h * 0.5, g.input("d", rng.normal(size=(2, 4, 6))), beta=5.0)
    grads = backward(g, loss)
    assert not any(np.any(grads[n]) for n in tiny_params.names() if n.startswith("encoder/"))
    assert np.any(grads["embed/w"])


def test_goal_logit_does_not_depend_on_the_decoys(tiny_params):
    rng = np.random.default_rng(9)
    h_s, h_g = rng.normal(size=(3, 6)), rng.normal(size=(3, 6))
    columns = []
    for _ in range(3):
        g = Graph()
        p = bind(g, tiny_params, tiny_params.names(PHI))
        logits = build_discriminator_logits(g, p, g.input("s", h_s), g.input("g", h_g),
                                            g.input("d", rng.normal(size=(3, 4, 6))), beta=5.0)
        columns.append(logits.value[:, 0].copy())
    assert all(np.array_equal(columns[0], c) for c in columns[1:])
    expected = [goal_similarity(a, b, tiny_params) * 5.0 for a, b in zip(h_s, h_g)]
    assert_allclose(columns[0], expected, atol=1e-12)


def test_discriminator_training_separates_a_toy_set(square_params):
    rng = np.random.default_rng(10)
    goals = np.eye(5)
    terminals = goals + 0.05 * rng.normal(size=(5, 5))
    decoys = np.stack([np.delete(goals, i, axis=0) for i in range(5)])
    names = square_params.names(PHI)
    params, state = square_params, RmsPropState(learning_rate=1e-2)
    losses = []
    for _ in range(200):
        g = Graph()
        p = bind(g, params, names)
        loss = build_discriminator_loss(g, p, g.input("s", terminals), g.input("g", goals), g.input("d", decoys),
                                        beta=5.0)
        losses.append(float(loss.value))
        arrays, state = rmsprop_step(params.arrays, backward(g, loss), state, names)
        params = params.replace(arrays)
    assert losses[-1] < np.log(5.0)
    assert losses[-1] < losses[0]


# ---------- autoencoder baseline ----------

def test_ae_zero_decoder_gives_squared_norm(tiny_config):
    params = init_params(tiny_config.model_copy(update={"reward": "ae"}), seed=1)
    params = params.replace({"decode/w": np.zeros_like(params.arrays["decode/w"]),
                             "decode/b": np.zeros_like(params.arrays["decode/b"])})
    h = np.random.default_rng(6).normal(size=(3, 6))
    assert ae_baseline_train(h, params) == pytest.approx(np.mean(np.sum(h * h, axis=1)))


def test_ae_random_params_oracle(tiny_config):
    params = init_params(tiny_config.model_copy(update={"reward": "ae"}), seed=2)
    a = params.arrays
    h = np.random.default_rng(7).normal(size=(4, 6))
    e = np.tanh(h @ a["embed/w"] + a["embed/b"])
    e /= np.linalg.norm(e, axis=1, keepdims=True)
    recon = e @ a["decode/w"] + a["decode/b"]
    assert ae_baseline_train(h, params) == pytest.approx(np.mean(np.sum((h - recon) ** 2, axis=1)))


# ---------- pixel baseline ----------

def test_pixel_reward_examples():
    s = np.zeros((4, 4, 3))
    assert l2_pixel_reward(s, s, 4.0) == 1.0
    g = s.copy()
    g[0, 0, 0] = 2.0  # squared distance 4
    assert l2_pixel_reward(s, g, 4.0) == pytest.approx(np.exp(-1.0))
    two = s.copy()
    two[1, 1, 2] = 1.0
    two[3, 0, 1] = 1.0
    assert l2_pixel_reward(s, two, 2.0) == pytest.approx(np.exp(-1.0))


@pytest.mark.parametrize("sigma", [0.0, -1.0])
def test_pixel_reward_rejects_non_positive_sigma(sigma):
    with pytest.raises(OutOfRangeError):
        l2_pixel_reward(np.zeros(3), np.zeros(3), sigma)


# ---------- providers ----------

def test_provider_registry(tiny_config):
    assert isinstance(make_provider(tiny_config), DiscernReward)
    assert isinstance(make_provider(tiny_config.model_copy(update={"reward": "ae"})), AutoencoderReward)
    l2 = make_provider(tiny_config.model_copy(update={"reward": "l2"}))
    assert isinstance(l2, PixelL2Reward) and l2.sigma_pixel == tiny_config.sigma_pixel
    none = make_provider(tiny_config.model_copy(update={"reward": "none"}))
    assert type(none) is RewardProvider and none.trains == ()


def test_discern_reward_of_goal_itself_is_one(tiny_params):
    obs = np.random.default_rng(8).uniform(size=(4, 4, 3))
    assert DiscernReward().reward(tiny_params, obs, obs) == pytest.approx(1.0)
    assert RewardProvider().reward(tiny_params, obs, obs) == 0.0
