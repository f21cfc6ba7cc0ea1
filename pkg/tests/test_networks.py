import numpy as np
import pytest
from numpy.testing import assert_allclose

from Autodiff.GradCheck import check_gradients
from Autodiff.Graph import Graph
from Nets.Networks import (
    PHI, THETA, ParamSet, bind, build_dueling_head, build_embedding, build_q, embed, encode, init_params,
    initial_state, q_values, time_features,
)
from shared.errors import OutOfRangeError, ShapeError


def test_init_is_deterministic_and_grouped(tiny_config):
    a = init_params(tiny_config, seed=11)
    b = init_params(tiny_config, seed=11)
    assert a.digest() == b.digest()
    assert set(a.names(PHI)) == {"embed/w", "embed/b"}
    assert "encoder/w0" in a.names(THETA)
    assert "decode/w" not in a.arrays
    bound = 2.0 / np.sqrt(a.arrays["encoder/w0"].shape[0])
    assert np.all(np.abs(a.arrays["encoder/w0"]) <= bound)
    assert not np.any(a.arrays["encoder/b0"])


def test_decoder_parameters_only_for_autoencoder(tiny_config):
    ae = init_params(tiny_config.model_copy(update={"reward": "ae"}), seed=0)
    assert {"decode/w", "decode/b"} <= set(ae.arrays)


def test_encode_is_deterministic_and_shape_checked(tiny_config, tiny_params):
    obs = np.random.default_rng(0).uniform(size=tiny_config.env.obs_shape)
    h1, h2 = encode(obs, tiny_params), encode(obs.copy(), tiny_params)
    assert h1.shape == (tiny_config.feature_dim,)
    assert np.array_equal(h1, h2)
    assert encode(np.stack([obs, obs]), tiny_params).shape == (2, tiny_config.feature_dim)
    with pytest.raises(ShapeError):
        encode(np.zeros((5, 5, 3)), tiny_params)


def test_encode_zero_weights_gives_zero_features(tiny_params):
    zeros = tiny_params.replace({name: np.zeros_like(v) for name, v in tiny_params.arrays.items()})
    assert not np.any(encode(np.ones((4, 4, 3)), zeros))


def test_encode_is_locally_lipschitz(tiny_params):
    obs = np.random.default_rng(1).uniform(size=(4, 4, 3))
    nudged = obs.copy()
    nudged[1, 2, 0] += 1e-6
    assert np.linalg.norm(encode(nudged, tiny_params) - encode(obs, tiny_params)) < 1e-4


def test_embedding_has_unit_norm(tiny_params):
    rng = np.random.default_rng(2)
    for _ in range(100):
        e = embed(rng.normal(size=6), tiny_params)
        assert np.linalg.norm(e) == pytest.approx(1.0, abs=1e-10)


def test_embedding_direction_is_scale_stable_near_zero(tiny_params):
    x = np.random.default_rng(3).normal(size=6) * 1e-4
    assert embed(x, tiny_params) @ embed(2.0 * x, tiny_params) > 1.0 - 1e-6


def test_embedding_of_zero_preactivation_is_flagged(tiny_params, caplog):
    zero = tiny_params.replace({"embed/b": np.zeros(4)})
    out = embed(np.zeros(6), zero)
    assert not np.any(out)
    assert "zero vector" in caplog.text


@pytest.mark.parametrize("t,expected", [(40, (0.0, 1.0)), (10, (1.0, 0.0)), (20, (0.0, -1.0))])
def test_time_features(t, expected):
    assert_allclose(time_features(t, 40), expected, atol=1e-12)


@pytest.mark.parametrize("t", [0, 41])
def test_time_features_out_of_range(t):
    with pytest.raises(OutOfRangeError):
        time_features(t, 40)


def _head_params(v, w, b):
    return {"head/v": np.asarray(v, dtype=float), "head/w": np.asarray(w, dtype=float),
            "head/b": np.asarray(b, dtype=float)}


def _head(psi, arrays):
    g = Graph()
    p = {name: g.param(name, value) for name, value in arrays.items()}
    return build_dueling_head(g, p, g.input("psi", psi)).value


def test_dueling_head_examples():
    psi = np.array([1.0, 0.0])
    # v = 0, b = 0, psi.w = (1, -1)
    q = _head(psi, _head_params([[0.0], [0.0]], [[1.0, -1.0], [0.0, 0.0]], [0.0]))
    assert_allclose(q, [1.0, -1.0])
    # all w_a = 0: value only
    q = _head(psi, _head_params([[2.0], [0.0]], np.zeros((2, 5)), [0.5]))
    assert_allclose(q, np.full(5, 2.5))


def test_dueling_advantages_are_centred(tiny_params):
    rng = np.random.default_rng(4)
    arrays = {k: tiny_params.arrays[k] for k in ("head/v", "head/w", "head/b")}
    arrays["head/b"] = rng.normal(size=1)
    for _ in range(20):
        psi = rng.normal(size=5)
        q = _head(psi, arrays)
        base = psi @ arrays["head/v"] + arrays["head/b"]
        assert abs(np.mean(q - base)) < 1e-10


def test_q_values_carry_recurrent_state(tiny_params):
    rng = np.random.default_rng(5)
    h_s, h_g = rng.normal(size=6), rng.normal(size=6)
    state = initial_state(tiny_params)
    q1, s1 = q_values(h_s, h_g, time_features(1, 4), state, tiny_params)
    q2, _ = q_values(h_s, h_g, time_features(1, 4), s1, tiny_params)
    assert q1.shape == (5,) and s1.shape == (5,)
    assert not np.allclose(q1, q2)


def test_theta_and_phi_gradients(tiny_params):
    rng = np.random.default_rng(6)
    g = Graph()
    p = bind(g, tiny_params, tiny_params.names())
    q, _ = build_q(g, p, g.input("h_s", rng.normal(size=(2, 6))), g.input("h_g", rng.normal(size=(2, 6))),
                   g.input("t", np.tile(time_features(2, 4), (2, 1))), g.input("state", rng.normal(size=(2, 5))))
    e = build_embedding(g, p, g.input("f", rng.normal(size=(3, 6))))
    loss = g.sum(q * g.const(rng.normal(size=(2, 5)))) + g.sum(e * g.const(rng.normal(size=(3, 4))))
    names = ["gru/wz", "gru/uh", "gru/br", "time/w", "head/v", "head/w", "head/b", "embed/w", "embed/b"]
    errors = check_gradients(g, loss, names)
    assert max(errors.values()) < 1e-4, errors


def test_paramset_replace_and_copy(tiny_params):
    copy = tiny_params.copy()
    assert copy.digest() == tiny_params.digest()
    copy.arrays["head/b"] += 1.0
    assert copy.digest() != tiny_params.digest()
    changed = tiny_params.replace({"embed/b": np.ones(4)})
    assert changed.digest(THETA) == tiny_params.digest(THETA)
    assert changed.digest(PHI) != tiny_params.digest(PHI)
    assert isinstance(changed, ParamSet)
