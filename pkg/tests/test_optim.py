import numpy as np
import pytest

import heterseed.autodiff as ad
from heterseed.autodiff import Tape, Tensor, backward
from heterseed.optim import (
    Adam,
    AdamState,
    adam_step,
    load_params,
    save_params,
    xavier_uniform_init,
)


def test_xavier_deterministic():
    a = xavier_uniform_init((4, 5), 42)
    b = xavier_uniform_init((4, 5), 42)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, xavier_uniform_init((4, 5), 43).data)


def test_xavier_bound_3x3():
    t = xavier_uniform_init((3, 3), 0)
    assert np.all(t.data >= -1.0) and np.all(t.data <= 1.0)


def test_xavier_empirical_mean_small():
    t = xavier_uniform_init((1000, 100), 9)  # 1e5 draws
    a = np.sqrt(6.0 / (1000 + 100))
    assert abs(float(t.data.mean())) < 0.01 * a


def test_adam_zero_gradient_keeps_params():
    p = Tensor(np.array([[1.0, -2.0]]), requires_grad=True)
    state = AdamState([p], lr=0.1)
    before = p.data.copy()
    adam_step([p], [np.zeros_like(p.data)], state)
    assert np.array_equal(p.data, before)
    assert np.all(state.m[0] == 0) and np.all(state.v[0] == 0)


def test_adam_first_step_is_lr_times_sign():
    for g in (3.7, -0.2):
        p = Tensor(np.array([[0.0]], dtype=np.float64), requires_grad=True)
        state = AdamState([p], lr=0.05)
        adam_step([p], [np.array([[g]])], state)
        # closed form: m_hat = g, v_hat = g^2, update = -lr * g/(|g| + eps)
        expect = -0.05 * g / (abs(g) + state.eps)
        assert p.data[0, 0] == pytest.approx(expect, rel=1e-10)
        assert abs(p.data[0, 0] + 0.05 * np.sign(g)) < 1e-6


def test_adam_converges_on_quadratic_bowl():
    x = Tensor(np.array([[3.0]], dtype=np.float64), requires_grad=True)
    opt = Adam({"x": x}, lr=0.05)
    for _ in range(500):
        with Tape() as tape:
            loss = ad.sum_all(ad.mul(x, x))
        opt.zero_grad()
        backward(loss, tape)
        opt.step()
    assert abs(x.data[0, 0]) < 1e-2


def test_adam_shape_mismatch():
    p = Tensor(np.zeros((2, 2)), requires_grad=True)
    state = AdamState([p])
    with pytest.raises(ad.ShapeMismatchError):
        adam_step([p], [np.zeros((3, 3))], state)


def test_checkpoint_round_trip(tmp_path, rng):
    params = {
        "w": Tensor(rng.standard_normal((3, 4)).astype(np.float32)),
        "b": Tensor(rng.standard_normal(4).astype(np.float32)),
        "deep.name.x": Tensor(rng.standard_normal((2, 2, 2)).astype(np.float32)),
    }
    path = tmp_path / "ckpt.bin"
    save_params(params, path)
    loaded = load_params(path)
    assert list(loaded) == list(params)
    for k in params:
        assert np.array_equal(loaded[k], params[k].data)


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(IOError):
        load_params(path)
