"""Feedforward spiking MLP (225-1000-10) trained by surrogate-gradient BPTT.

Per time step, for both layers::

    U(t) = beta * U(t-1) * (1 - S(t-1)) + input(t)
    S(t) = H(U(t) - U_thr)

The image is injected as a constant current ``W1 @ x`` on every step.  The
loss sums softmax cross-entropy over the T steps; the per-step logits are the
output spikes by default, or the output membranes with ``loss="membrane"``.
Backward replaces dH/dU by the arctan surrogate derivative; the reset factor
``(1 - S)`` is treated as a constant.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .sleep import SleepSchedule, decay_step


@dataclass(frozen=True)
class SGConfig:
    n_in: int = 225
    n_hidden: int = 1000
    n_out: int = 10
    T: int = 100
    beta_mem: float = 0.95
    U_thr: float = 1.0
    alpha_surr: float = 2.0
    init_gain: float = 1.0
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    minibatch: int = 20
    noise_mean: float = 0.0
    noise_std: float = 0.5
    lam: float = 0.999
    w_tgt: float = 0.2
    alpha_base: float = 1.0
    # "spikes": CE on output spikes as logits, surrogate at both layers.
    # "membrane": CE on output membranes; trains outputs to stay subthreshold,
    # which starves spike-count decoding.
    loss: str = "spikes"

    def __post_init__(self):
        if not 0.0 < self.beta_mem < 1.0:
            raise ValueError("beta_mem must lie in (0, 1)")
        if self.loss not in ("membrane", "spikes"):
            raise ValueError("loss must be 'membrane' or 'spikes'")


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0


@dataclass
class SGParams:
    W1: np.ndarray  # (n_hidden, n_in)
    W2: np.ndarray  # (n_out, n_hidden)
    beta_mem: float = 0.95
    U_thr: float = 1.0
    alpha_surr: float = 2.0
    adam: AdamState = field(default=None)

    def __post_init__(self):
        if self.adam is None:
            self.adam = AdamState([np.zeros_like(self.W1), np.zeros_like(self.W2)],
                                  [np.zeros_like(self.W1), np.zeros_like(self.W2)])

    @classmethod
    def init(cls, cfg: SGConfig, rng: np.random.Generator) -> "SGParams":
        b1 = cfg.init_gain / np.sqrt(cfg.n_in)
        b2 = cfg.init_gain / np.sqrt(cfg.n_hidden)
        return cls(rng.uniform(-b1, b1, (cfg.n_hidden, cfg.n_in)),
                   rng.uniform(-b2, b2, (cfg.n_out, cfg.n_hidden)),
                   cfg.beta_mem, cfg.U_thr, cfg.alpha_surr)

    @property
    def weights(self):
        return [self.W1, self.W2]

    def weight_abs_sum(self) -> float:
        return float(np.abs(self.W1).sum() + np.abs(self.W2).sum())


@dataclass
class SGForwardTrace:
    x: np.ndarray   # (B, n_in)
    U1: np.ndarray  # (T, B, n_hidden)
    S1: np.ndarray
    U2: np.ndarray  # (T, B, n_out)
    S2: np.ndarray

    @property
    def T(self) -> int:
        return self.U1.shape[0]

    def counts(self) -> np.ndarray:
        return self.S2.sum(axis=0)


def surrogate_value_and_grad(U, alpha_surr: float = 2.0):
    """Arctan surrogate ``arctan(pi*U*a/2)/pi`` and its derivative."""
    U = np.asarray(U, dtype=float)
    z = np.pi * U * alpha_surr / 2.0
    return np.arctan(z) / np.pi, (alpha_surr / 2.0) / (1.0 + z * z)


def _as_batch(x, n_in):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != n_in:
        raise ValueError(f"input has {X.shape[1]} features, network expects {n_in}")
    return X, single


def sg_forward_batch(X, params: SGParams, T: int = 100, noise=None) -> SGForwardTrace:
    """Forward pass for a (B, n_in) batch; ``noise`` is an optional (T, B, n_hidden) current."""
    X = np.asarray(X, dtype=float)
    B = X.shape[0]
    H, O = params.W1.shape[0], params.W2.shape[0]
    I1 = X @ params.W1.T
    beta, thr = params.beta_mem, params.U_thr
    U1s, S1s = np.empty((T, B, H)), np.empty((T, B, H))
    U2s, S2s = np.empty((T, B, O)), np.empty((T, B, O))
    U1, S1 = np.zeros((B, H)), np.zeros((B, H))
    U2, S2 = np.zeros((B, O)), np.zeros((B, O))
    for t in range(T):
        U1 = beta * U1 * (1.0 - S1) + I1
        if noise is not None:
            U1 = U1 + noise[t]
        S1 = (U1 >= thr).astype(float)
        U2 = beta * U2 * (1.0 - S2) + S1 @ params.W2.T
        S2 = (U2 >= thr).astype(float)
        U1s[t], S1s[t], U2s[t], S2s[t] = U1, S1, U2, S2
    return SGForwardTrace(X, U1s, S1s, U2s, S2s)


def sg_forward(x, params: SGParams, T: int = 100):
    """Single-sample (or batch) forward; returns (output spike counts, trace)."""
    X, single = _as_batch(x, params.W1.shape[1])
    if np.any(X < 0) or np.any(X > 1):
        raise ValueError("pixel inputs must lie in [0, 1]")
    trace = sg_forward_batch(X, params, T)
    counts = trace.counts()
    return (counts[0] if single else counts), trace


def _log_softmax(Z):
    Z = Z - Z.max(axis=-1, keepdims=True)
    return Z - np.log(np.exp(Z).sum(axis=-1, keepdims=True))


def _logits(trace: SGForwardTrace, loss: str):
    return trace.U2 if loss == "membrane" else trace.S2


def sg_loss(trace: SGForwardTrace, label, loss: str = "spikes") -> float:
    """Cross-entropy summed over time steps, summed over the batch."""
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    logp = _log_softmax(_logits(trace, loss))  # (T, B, O)
    return float(-logp[:, np.arange(labels.size), labels].sum())


def sg_backward(trace: SGForwardTrace, label, params: SGParams, loss: str = "spikes"):
    """BPTT gradients ``(dW1, dW2)`` of :func:`sg_loss` with surrogate spikes."""
    if trace is None or trace.U1 is None:
        raise ValueError("backward needs the stored forward trace")
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    T, B, H = trace.U1.shape
    beta, thr, a = params.beta_mem, params.U_thr, params.alpha_surr
    Y = np.zeros((B, params.W2.shape[0]))
    Y[np.arange(B), labels] = 1.0
    logits = _logits(trace, loss)
    dW2 = np.zeros_like(params.W2)
    dI1 = np.zeros((B, H))
    carry2 = np.zeros_like(Y)
    carry1 = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        direct = np.exp(_log_softmax(logits[t])) - Y
        if loss == "spikes":
            direct = direct * surrogate_value_and_grad(trace.U2[t] - thr, a)[1]
        gU2 = direct + carry2
        dW2 += gU2.T @ trace.S1[t]
        gU1 = (gU2 @ params.W2) * surrogate_value_and_grad(trace.U1[t] - thr, a)[1] + carry1
        dI1 += gU1
        carry2 = gU2 * beta * (1.0 - trace.S2[t - 1]) if t > 0 else carry2
        carry1 = gU1 * beta * (1.0 - trace.S1[t - 1]) if t > 0 else carry1
    dW1 = dI1.T @ trace.x
    return dW1, dW2


def adam_step(params: SGParams, grads, lr=5e-4, beta1=0.9, beta2=0.999, eps=1e-8) -> SGParams:
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient; aborting run")
    st = params.adam
    st.t += 1
    c1 = 1.0 - beta1 ** st.t
    c2 = 1.0 - beta2 ** st.t
    for k, (w, g) in enumerate(zip(params.weights, grads)):
        if st.m[k].shape != g.shape:
            raise ValueError("gradient shape does not match Adam moments")
        st.m[k] = beta1 * st.m[k] + (1.0 - beta1) * g
        st.v[k] = beta2 * st.v[k] + (1.0 - beta2) * g * g
        w -= lr * (st.m[k] / c1) / (np.sqrt(st.v[k] / c2) + eps)
    return params


def spike_count_decode(counts) -> np.ndarray | int:
    """Index of the largest count; ties go to the lowest class index."""
    counts = np.asarray(counts)
    out = np.argmax(counts, axis=-1)
    return int(out) if np.ndim(out) == 0 else out


class SGModel:
    """Parameters plus the training/eval/sleep loop pieces used by the harness."""

    def __init__(self, cfg: SGConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.params = SGParams.init(cfg, rng)
        self.initial_weight_sum = self.params.weight_abs_sum()

    def weight_abs_sum(self) -> float:
        return self.params.weight_abs_sum()

    def max_abs_weight(self) -> float:
        return float(max(np.abs(w).max() for w in self.params.weights))

    def train_minibatch(self, X, y) -> float:
        cfg = self.cfg
        trace = sg_forward_batch(X, self.params, cfg.T)
        loss = sg_loss(trace, y, cfg.loss) / len(y)
        dW1, dW2 = sg_backward(trace, y, self.params, cfg.loss)
        adam_step(self.params, [dW1 / len(y), dW2 / len(y)], cfg.lr, cfg.beta1,
                  cfg.beta2, cfg.eps)
        return loss

    def predict(self, X, chunk: int = 200) -> np.ndarray:
        out = []
        for s in range(0, len(X), chunk):
            trace = sg_forward_batch(X[s:s + chunk], self.params, self.cfg.T)
            out.append(spike_count_decode(trace.counts()))
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    def sleep_iterations(self, budget: int, schedule: SleepSchedule, threshold: float,
                         learn: bool, rng: np.random.Generator) -> tuple[int, bool]:
        """Input-free, noise-driven steps with power-law decay of W1 and W2.

        No weight update besides the decay happens here; ``learn`` is ignored
        because STDP is disabled for this model.
        """
        p, cfg = self.params, self.cfg
        U1 = np.zeros(p.W1.shape[0])
        S1 = np.zeros_like(U1)
        U2 = np.zeros(p.W2.shape[0])
        S2 = np.zeros_like(U2)
        for it in range(1, budget + 1):
            noise = rng.normal(cfg.noise_mean, cfg.noise_std, U1.shape)
            U1 = p.beta_mem * U1 * (1.0 - S1) + noise
            S1 = (U1 >= p.U_thr).astype(float)
            U2 = p.beta_mem * U2 * (1.0 - S2) + p.W2 @ S1
            S2 = (U2 >= p.U_thr).astype(float)
            p.W1[...] = decay_step(p.W1, w_tgt=schedule.w_tgt, lam=schedule.lam)
            p.W2[...] = decay_step(p.W2, w_tgt=schedule.w_tgt, lam=schedule.lam)
            if p.weight_abs_sum() <= threshold:
                return it, True
        return budget, False


def sg_sleep_phase(params: SGParams, schedule: SleepSchedule, rng, cfg: SGConfig | None = None,
                   reference_sum: float | None = None):
    """Put a bare parameter set through one SG sleep phase; returns ``params``."""
    from .sleep import sleep_phase

    model = SGModel.__new__(SGModel)
    model.cfg = cfg or SGConfig(n_in=params.W1.shape[1], n_hidden=params.W1.shape[0],
                                n_out=params.W2.shape[0])
    model.params = params
    model.initial_weight_sum = params.weight_abs_sum() if reference_sum is None else reference_sum
    sleep_phase(model, schedule, False, rng, model.initial_weight_sum)
    return params


# -- checkpoints ---------------------------------------------------------------------------

CKPT_MAGIC = b"SGCK"
CKPT_VERSION = 1


def save_checkpoint(params: SGParams, path):
    H, I = params.W1.shape
    O = params.W2.shape[0]
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<IIIIQddd", CKPT_VERSION, I, H, O, params.adam.t,
                            params.beta_mem, params.U_thr, params.alpha_surr))
        for arr in (params.W1, params.W2, *params.adam.m, *params.adam.v):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> SGParams:
    with open(path, "rb") as f:
        if f.read(4) != CKPT_MAGIC:
            raise ValueError(f"{path}: not an SG checkpoint")
        head = struct.calcsize("<IIIIQddd")
        version, I, H, O, t, beta, thr, a = struct.unpack("<IIIIQddd", f.read(head))
        if version != CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")

        def read(shape):
            n = int(np.prod(shape))
            return np.frombuffer(f.read(8 * n), dtype="<f8").reshape(shape).copy()

        W1, W2 = read((H, I)), read((O, H))
        m = [read((H, I)), read((O, H))]
        v = [read((H, I)), read((O, H))]
    return SGParams(W1, W2, beta, thr, a, AdamState(m, v, t))
