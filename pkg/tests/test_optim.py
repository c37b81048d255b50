import numpy as np
import numpy.testing as npt
import pytest

from histlayer.optim import Adam, SGDMomentum, adam_step, sgd_momentum_step


def test_adam_zero_gradient_leaves_params():
    p = {"w": np.array([1.0, -2.0])}
    out = adam_step(Adam(), p, {"w": np.zeros(2)})
    npt.assert_array_equal(out["w"], p["w"])


def test_adam_first_step_is_lr_times_sign():
    g = np.array([3.0, -0.02, 1e4])
    out = adam_step(Adam(lr=1e-3), {"w": np.zeros(3)}, {"w": g})
    # bias-corrected first step: lr * g / (|g| + eps)
    npt.assert_allclose(out["w"], -1e-3 * g / (np.abs(g) + 1e-8), rtol=1e-12)
    npt.assert_allclose(out["w"], -1e-3 * np.sign(g), rtol=1e-6)


def test_adam_parameters_are_independent():
    opt_a, opt_b = Adam(), Adam()
    both = opt_a.step({"a": np.ones(2), "b": np.ones(3)}, {"a": np.ones(2), "b": -np.ones(3)})
    only_a = opt_b.step({"a": np.ones(2)}, {"a": np.ones(2)})
    npt.assert_array_equal(both["a"], only_a["a"])


def test_adam_sign_pattern_invariant_to_gradient_scale():
    g = np.random.default_rng(0).normal(size=10)
    for scale in (1e-3, 1.0, 1e3):
        step = Adam().step({"w": np.zeros(10)}, {"w": scale * g})["w"]
        npt.assert_array_equal(np.sign(step), -np.sign(g))


def test_adam_matches_reference_over_several_steps():
    rng = np.random.default_rng(1)
    grads = rng.normal(size=(5, 4))
    opt, p = Adam(lr=0.01), {"w": np.ones(4)}
    m = v = np.zeros(4)
    ref = np.ones(4)
    for t, g in enumerate(grads, start=1):
        p = opt.step(p, {"w": g})
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    npt.assert_allclose(p["w"], ref, rtol=1e-14)


def test_sgd_without_momentum_is_plain_sgd():
    out = sgd_momentum_step(SGDMomentum(lr=0.1, momentum=0.0), {"w": np.array([1.0])},
                            {"w": np.array([2.0])})
    npt.assert_allclose(out["w"], [0.8])


def test_sgd_momentum_carries_velocity():
    opt = SGDMomentum(lr=0.1, momentum=0.9)
    p = opt.step({"w": np.array([0.0])}, {"w": np.array([1.0])})
    after = opt.step(p, {"w": np.array([0.0])})
    npt.assert_allclose(after["w"] - p["w"], [-0.1 * 0.9 * 1.0])


def test_sgd_two_constant_steps():
    lr, alpha, g = 0.05, 0.9, np.array([2.0, -1.0])
    opt = SGDMomentum(lr=lr, momentum=alpha)
    p = {"w": np.zeros(2)}
    for _ in range(2):
        p = opt.step(p, {"w": g})
    npt.assert_allclose(-p["w"], lr * g * (1 + (1 + alpha)), rtol=1e-14)


@pytest.mark.parametrize("opt", [Adam(), SGDMomentum()])
def test_shape_mismatch_rejected(opt):
    with pytest.raises(ValueError, match="shape"):
        opt.step({"w": np.zeros(3)}, {"w": np.zeros(2)})
    with pytest.raises(ValueError, match="names"):
        opt.step({"w": np.zeros(3)}, {"v": np.zeros(3)})
