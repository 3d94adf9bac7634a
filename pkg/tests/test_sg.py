import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snn_sleep.sg import (SGConfig, SGModel, SGParams, adam_step, load_checkpoint,
                          save_checkpoint, sg_backward, sg_forward, sg_forward_batch, sg_loss,
                          sg_sleep_phase, spike_count_decode, surrogate_value_and_grad)
from snn_sleep.sleep import SleepSchedule, decay_n


def tiny(rng, n_in=3, n_hidden=3, n_out=2, scale=1.5):
    return SGParams(rng.uniform(-scale, scale, (n_hidden, n_in)),
                    rng.uniform(-scale, scale, (n_out, n_hidden)))


def frozen_surrogate_loss(W1, W2, x, labels, ref, beta, thr, a, loss):
    """Loss of a network whose spikes are ``H(U_ref) + s(U) - s(U_ref)``.

    At the reference weights this reproduces the forward pass exactly, and its
    ordinary derivative is what surrogate BPTT is supposed to compute.  Reset
    factors use the frozen reference spikes, so no gradient flows through them.
    """
    s = lambda u: np.arctan(np.pi * u * a / 2) / np.pi
    T = ref.U1.shape[0]
    B = x.shape[0]
    U1 = np.zeros((B, W1.shape[0]))
    U2 = np.zeros((B, W2.shape[0]))
    total = 0.0
    for t in range(T):
        keep1 = 1 - ref.S1[t - 1] if t else 0.0
        keep2 = 1 - ref.S2[t - 1] if t else 0.0
        U1 = beta * U1 * keep1 + x @ W1.T
        S1 = ref.S1[t] + s(U1 - thr) - s(ref.U1[t] - thr)
        U2 = beta * U2 * keep2 + S1 @ W2.T
        S2 = ref.S2[t] + s(U2 - thr) - s(ref.U2[t] - thr)
        Z = U2 if loss == "membrane" else S2
        Z = Z - Z.max(axis=1, keepdims=True)
        logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
        total -= logp[np.arange(B), labels].sum()
    return total


# -- surrogate and forward ------------------------------------------------------------

def test_surrogate_values():
    v, g = surrogate_value_and_grad(0.0, 2.0)
    assert v == 0.0 and g == 1.0
    assert surrogate_value_and_grad(1e12, 2.0)[0] == pytest.approx(0.5)
    h = 1e-6
    fd = (surrogate_value_and_grad(0.3 + h)[0] - surrogate_value_and_grad(0.3 - h)[0]) / (2 * h)
    assert surrogate_value_and_grad(0.3)[1] == pytest.approx(fd, abs=1e-6)


def test_zero_input_is_silent(rng):
    p = SGParams.init(SGConfig(), rng)
    counts, tr = sg_forward(np.zeros(225), p)
    assert counts.sum() == 0 and tr.S1.sum() == 0 and tr.T == 100


def test_geometric_recurrence_first_crossing():
    d = 0.06
    p = SGParams(np.array([[d]]), np.array([[0.0]]))
    _, tr = sg_forward(np.array([1.0]), p, T=60)
    u = tr.U1[:, 0, 0]
    k = np.arange(1, 35)
    np.testing.assert_allclose(u[:34], d * (1 - 0.95 ** k) / 0.05, rtol=1e-12)
    # 0.95**t <= 1/6 first holds at t = 35 (ln 6 / ln(1/0.95) = 34.93)
    assert np.flatnonzero(tr.S1[:, 0, 0])[0] == 34
    assert u[34] == 0.0 or tr.S1[34, 0, 0] == 1


@settings(max_examples=20)
@given(seed=st.integers(0, 10_000))
def test_trace_invariants(seed):
    r = np.random.default_rng(seed)
    p = SGParams.init(SGConfig(n_hidden=30), r)
    x = r.random((4, 225))
    counts, tr = sg_forward(x, p, T=20)
    assert tr.S1.shape == (20, 4, 30) and set(np.unique(tr.S2)) <= {0.0, 1.0}
    np.testing.assert_array_equal(counts, tr.S2.sum(0))
    _, tr2 = sg_forward(x, p, T=20)
    np.testing.assert_array_equal(tr.U1, tr2.U1)


def test_forward_validation(rng):
    p = SGParams.init(SGConfig(n_hidden=5), rng)
    with pytest.raises(ValueError):
        sg_forward(np.zeros(10), p)
    with pytest.raises(ValueError):
        sg_forward(np.full(225, 2.0), p)
    with pytest.raises(ValueError):
        SGConfig(beta_mem=1.0)


# -- loss -------------------------------------------------------------------------------

def test_uniform_loss(rng):
    p = SGParams.init(SGConfig(n_hidden=8), rng)
    _, tr = sg_forward(np.zeros(225), p, T=100)
    assert sg_loss(tr, 4, "membrane") == pytest.approx(230.25850929940458, rel=1e-12)
    assert sg_loss(tr, 4, "spikes") == pytest.approx(100 * math.log(10), rel=1e-12)
    _, tr200 = sg_forward(np.zeros(225), p, T=200)
    assert sg_loss(tr200, 4) == pytest.approx(2 * sg_loss(tr, 4), rel=1e-12)


def test_dominant_logit_drives_loss_to_zero():
    p = SGParams(np.array([[5.0]]), np.array([[1e3], [0.0]]))
    _, tr = sg_forward(np.array([1.0]), p, T=5)
    assert sg_loss(tr, 0, "membrane") < 1e-12


# -- backward ---------------------------------------------------------------------------

def fd_check(p, x, labels, loss, T, h=1e-6):
    tr = sg_forward_batch(x, p, T)
    dW1, dW2 = sg_backward(tr, labels, p, loss)
    f = lambda W1, W2: frozen_surrogate_loss(W1, W2, x, labels, tr, p.beta_mem, p.U_thr,
                                             p.alpha_surr, loss)
    assert f(p.W1, p.W2) == pytest.approx(sg_loss(tr, labels, loss), rel=1e-12)
    ok = total = 0
    for W, G, which in ((p.W1, dW1, 0), (p.W2, dW2, 1)):
        for idx in np.ndindex(W.shape):
            Wp, Wm = W.copy(), W.copy()
            Wp[idx] += h
            Wm[idx] -= h
            args_p = (Wp, p.W2) if which == 0 else (p.W1, Wp)
            args_m = (Wm, p.W2) if which == 0 else (p.W1, Wm)
            fd = (f(*args_p) - f(*args_m)) / (2 * h)
            total += 1
            ok += abs(G[idx] - fd) <= 1e-3 * max(abs(fd), 1e-6)
    return ok, total, tr


@pytest.mark.parametrize("loss", ["spikes", "membrane"])
@settings(max_examples=25)
@given(seed=st.integers(0, 10_000), T=st.integers(2, 5))
def test_bptt_matches_finite_differences(loss, seed, T):
    r = np.random.default_rng(seed)
    p = tiny(r)  # 6 + 6 = 12 weights
    x = r.random((2, 3))
    ok, total, _ = fd_check(p, x, r.integers(0, 2, 2), loss, T)
    assert ok / total >= 0.99


def test_bptt_two_unit_example():
    p = SGParams(np.array([[0.7, 1.2], [1.1, -0.4]]), np.array([[0.9, -0.3], [0.5, 1.4]]))
    ok, total, tr = fd_check(p, np.array([[1.0, 0.6]]), np.array([1]), "spikes", T=2)
    assert ok == total and tr.S1.sum() > 0


def test_zero_input_zero_gradient(rng):
    p = tiny(rng, n_in=4)
    tr = sg_forward_batch(np.zeros((3, 4)), p, 5)
    dW1, dW2 = sg_backward(tr, [0, 1, 0], p)
    assert not dW1.any() and not dW2.any()
    with pytest.raises(ValueError):
        sg_backward(None, [0], p)


# -- Adam ---------------------------------------------------------------------------------

def test_adam_first_step_and_zero_gradient():
    p = SGParams(np.zeros((2, 3)), np.zeros((1, 2)))
    adam_step(p, [np.ones((2, 3)), np.zeros((1, 2))], lr=5e-4)
    np.testing.assert_allclose(p.W1, -5e-4, rtol=1e-6)
    assert not p.W2.any()


def test_adam_two_steps():
    p = SGParams(np.zeros((1, 1)), np.zeros((1, 1)))
    adam_step(p, [np.ones((1, 1)), np.zeros((1, 1))], lr=0.1)
    adam_step(p, [np.full((1, 1), 3.0), np.zeros((1, 1))], lr=0.1)
    assert p.W1[0, 0] == pytest.approx(-0.1917781104876678, rel=1e-12)
    assert p.adam.t == 2


def test_adam_rejects_non_finite():
    p = SGParams(np.zeros((1, 1)), np.zeros((1, 1)))
    with pytest.raises(FloatingPointError):
        adam_step(p, [np.full((1, 1), np.nan), np.zeros((1, 1))])


# -- decoding ------------------------------------------------------------------------------

def test_decode():
    assert spike_count_decode(np.eye(10)[3]) == 3
    assert spike_count_decode(np.full(10, 4)) == 0
    c = np.array([[1, 5, 5], [0, 0, 2]])
    np.testing.assert_array_equal(spike_count_decode(c), [1, 2])


def test_decode_matches_recount(rng):
    p = SGParams.init(SGConfig(n_hidden=40, init_gain=4.0), rng)
    x = rng.random((6, 225))
    _, tr = sg_forward(x, p, T=30)
    brute = [max(range(10), key=lambda c: (tr.S2[:, b, c].sum(), -c)) for b in range(6)]
    np.testing.assert_array_equal(spike_count_decode(tr.counts()), brute)


# -- sleep -----------------------------------------------------------------------------------

def test_sleep_identity_at_lam_one(rng):
    p = SGParams.init(SGConfig(n_hidden=20), rng)
    W1, W2 = p.W1.copy(), p.W2.copy()
    sg_sleep_phase(p, SleepSchedule(sleep_ratio=1.0, sleep_interval=10, lam=1.0), rng,
                   reference_sum=1e-9)
    np.testing.assert_array_equal(p.W1, W1)
    np.testing.assert_array_equal(p.W2, W2)


def test_sleep_matches_scalar_oracle(rng):
    p = SGParams(np.full((6, 4), 0.4), -np.full((2, 6), 0.4))
    sched = SleepSchedule(sleep_ratio=0.5, sleep_interval=40, lam=0.999, w_tgt=0.2)
    sg_sleep_phase(p, sched, rng, reference_sum=1e-9)
    np.testing.assert_allclose(p.W1, decay_n(0.4, 20, 0.2, 0.999), rtol=1e-12)
    np.testing.assert_allclose(p.W2, -decay_n(0.4, 20, 0.2, 0.999), rtol=1e-12)


def test_sleep_ratio_zero_leaves_weights(rng):
    p = SGParams.init(SGConfig(n_hidden=10), rng)
    W1 = p.W1.copy()
    sg_sleep_phase(p, SleepSchedule(sleep_ratio=0.0), rng)
    np.testing.assert_array_equal(p.W1, W1)


# -- checkpoint and training -------------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path, rng):
    p = SGParams.init(SGConfig(n_hidden=7), rng)
    adam_step(p, [rng.normal(size=p.W1.shape), rng.normal(size=p.W2.shape)])
    save_checkpoint(p, tmp_path / "c.bin")
    q = load_checkpoint(tmp_path / "c.bin")
    for a, b in zip([p.W1, p.W2, *p.adam.m, *p.adam.v], [q.W1, q.W2, *q.adam.m, *q.adam.v]):
        np.testing.assert_array_equal(a, b)
    assert q.adam.t == 1 and q.beta_mem == p.beta_mem
    (tmp_path / "bad").write_bytes(b"XXXX" + (tmp_path / "c.bin").read_bytes()[4:])
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "bad")


@pytest.mark.parametrize("loss", ["spikes", "membrane"])
def test_training_reduces_loss(loss):
    r = np.random.default_rng(0)
    cfg = SGConfig(n_hidden=64, T=20, lr=5e-3, minibatch=40, loss=loss)
    model = SGModel(cfg, r)
    protos = r.random((10, 225))
    y = np.arange(40) % 10
    X = np.clip(protos[y] + r.normal(0, 0.1, (40, 225)), 0, 1)
    first = model.train_minibatch(X, y)
    for _ in range(49):
        last = model.train_minibatch(X, y)
    assert last < first
