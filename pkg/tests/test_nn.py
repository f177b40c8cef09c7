import numpy as np
import pytest

from riskpde import ad
from riskpde.nn import (
    AdamState,
    MlpParams,
    adam_step,
    forward,
    forward_hd,
    init,
    input_scaling,
    load_checkpoint,
    save_checkpoint,
)


def random_net(seed, sizes=(3, 8, 8, 1)):
    p = init(sizes, seed)
    rng = np.random.default_rng(seed + 100)
    return p.with_flat(p.flat() + 0.3 * rng.standard_normal(p.n_params))


def test_param_count_and_glorot_bound():
    p = init(seed=0)
    assert p.n_params == 2273
    assert np.abs(p.weights[0]).max() <= np.sqrt(6 / 35)
    assert not any(b.any() for b in p.biases)
    np.testing.assert_array_equal(p.flat(), init(seed=0).flat())
    assert not np.array_equal(p.flat(), init(seed=1).flat())


def test_bad_layers():
    with pytest.raises(ValueError):
        init((3,))
    with pytest.raises(ValueError):
        MlpParams((3, 2), [np.zeros((3, 2))], [np.zeros(2)])
    with pytest.raises(ValueError):
        forward(init(seed=0), np.zeros(4))


def test_zero_network():
    p = init(seed=0).zeros_like()
    assert forward(p, np.array([1.0, 2.0, 3.0])) == 0.0
    out = forward_hd(p, ad.lift(1.0, ad.Seed.X), ad.lift(2.0, ad.Seed.T), 1.0)
    assert float(out.val) == 0.0 and not out.d1.any() and float(out.d2) == 0.0


def test_affine_only_net():
    p = MlpParams((3, 1), [np.array([[2.0, 3.0, 0.0]])], [np.array([0.0])])
    out = forward_hd(p, ad.lift(0.3, ad.Seed.X), ad.lift(-1.2, ad.Seed.T), 0.5)
    assert (float(out.dx), float(out.dT), float(out.d2)) == (2.0, 3.0, 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_forward_hd_against_differences(seed):
    p = random_net(seed, (3, 32, 32, 32, 1))
    x, T, lam = -3.0, 5.0, 1.0
    out = forward_hd(p, ad.lift(x, ad.Seed.X), ad.lift(T, ad.Seed.T), lam)
    f = lambda a, b: float(forward(p, np.array([a, b, lam])))  # noqa: E731
    assert float(out.val) == pytest.approx(f(x, T), abs=1e-12)
    e = 1e-5
    assert float(out.dx) == pytest.approx((f(x + e, T) - f(x - e, T)) / (2 * e), rel=1e-6)
    assert float(out.dT) == pytest.approx((f(x, T + e) - f(x, T - e)) / (2 * e), rel=1e-6)
    e = 1e-4
    assert float(out.d2) == pytest.approx((f(x + e, T) - 2 * f(x, T) + f(x - e, T)) / e**2, rel=1e-4)


def test_forward_is_pure():
    p = random_net(1)
    u = np.random.default_rng(0).normal(size=(10, 3))
    np.testing.assert_array_equal(forward(p, u), forward(p, u))


def test_input_scaling_maps_box():
    p = input_scaling(init((3, 1), 0), [-10, 0, 0], [2, 10, 2])
    np.testing.assert_allclose((np.array([-10, 0, 0]) - p.in_shift) * p.in_scale, -1)
    np.testing.assert_allclose((np.array([2, 10, 2]) - p.in_shift) * p.in_scale, 1)


def test_adam_first_step_moves_by_lr():
    p = init((3, 4, 1), 0)
    g = p.with_flat(np.full(p.n_params, -0.37))
    q, s = adam_step(p, g, AdamState(lr=1e-3))
    np.testing.assert_allclose(q.flat() - p.flat(), 1e-3, rtol=1e-6)
    assert s.step == 1


def test_adam_zero_gradient_and_determinism():
    p = init((3, 4, 1), 0)
    g = p.with_flat(np.linspace(-1, 1, p.n_params))
    p1, s1 = adam_step(p, g, AdamState())
    p2, s2 = adam_step(p1, p.zeros_like(), s1)
    np.testing.assert_array_equal(p2.flat(), p1.flat() - 1e-3 * (0.9 * s1.m / (1 - 0.9**2))
                                  / (np.sqrt(0.999 * s1.v / (1 - 0.999**2)) + 1e-8))
    assert np.all(np.abs(s2.m) <= np.abs(s1.m))
    again = adam_step(p, g, AdamState())
    np.testing.assert_array_equal(again[0].flat(), p1.flat())


def test_adam_rejects_nonfinite():
    p = init((3, 4, 1), 0)
    v = np.zeros(p.n_params)
    v[5] = np.nan
    with pytest.raises(FloatingPointError, match=r"W\[0\]"):
        adam_step(p, p.with_flat(v), AdamState())


def test_checkpoint_roundtrip(tmp_path):
    p = random_net(2)
    p, s = adam_step(p, p.with_flat(np.ones(p.n_params)), AdamState())
    save_checkpoint(tmp_path / "c.json", p, s, seed=4, config_hash="abc")
    q, s2, meta = load_checkpoint(tmp_path / "c.json")
    np.testing.assert_array_equal(q.flat(), p.flat())
    np.testing.assert_array_equal(s2.m, s.m)
    assert s2.step == 1 and meta == {"seed": 4, "config_hash": "abc"}
