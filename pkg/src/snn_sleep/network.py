"""Recurrent excitatory-inhibitory network trained with STDP/iSTDP.

Populations: Poisson input -> excitatory (recurrent) <-> inhibitory.  Plastic
groups are ``in_exc``, ``exc_exc`` (no self-connections), ``exc_inh`` (all
excitatory polarity, STDP) and ``inh_exc`` (inhibitory polarity, iSTDP).

Weights live in dense (n_post, n_pre) arrays; the inner loops only visit
existing synapses through per-group CSC/CSR index lists.  The numba kernels
follow the same step order as the reference ops in :mod:`neurons` and
:mod:`plasticity`:

1. currents from this step's input spikes and last step's E/I spikes
2. ``lif_step`` on both populations
3. trace decay + bump, potentiation on postsynaptic spikes, depression on
   presynaptic spikes (postsynaptic trace taken without this step's spike),
   then sign clamping (potentiation never crosses zero, so only the
   depression pass clamps)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .neurons import LIFParams, NeuronPopulationState, ThresholdParams
from .plasticity import (Polarity, STDPParams, SynapseGroup, WeightExplosion,
                         random_group)
from .sleep import SleepSchedule

GROUPS = ("in_exc", "exc_exc", "exc_inh", "inh_exc")
NOISE_CHUNK = 1024


@dataclass(frozen=True)
class NetworkParams:
    n_in: int = 225
    n_exc: int = 200
    n_inh: int = 50
    p_in_exc: float = 0.10
    p_exc_exc: float = 0.15
    p_exc_inh: float = 0.20
    p_inh_exc: float = 0.25
    w_in_exc: float = 0.10
    w_exc_exc: float = 0.15
    w_exc_inh: float = 0.30
    w_inh_exc: float = -0.30
    safety_factor: float = 10.0
    reset_between_samples: bool = True


def _index_lists(mask):
    """(csc_ptr, csc_idx, csr_ptr, csr_idx) for an (n_post, n_pre) mask."""
    n_post, n_pre = mask.shape
    cols = [np.flatnonzero(mask[:, i]) for i in range(n_pre)]
    rows = [np.flatnonzero(mask[j, :]) for j in range(n_post)]
    csc_ptr = np.zeros(n_pre + 1, dtype=np.int64)
    csc_ptr[1:] = np.cumsum([c.size for c in cols])
    csr_ptr = np.zeros(n_post + 1, dtype=np.int64)
    csr_ptr[1:] = np.cumsum([r.size for r in rows])
    csc_idx = np.concatenate(cols).astype(np.int64) if cols else np.zeros(0, np.int64)
    csr_idx = np.concatenate(rows).astype(np.int64) if rows else np.zeros(0, np.int64)
    return csc_ptr, csc_idx, csr_ptr, csr_idx


# -- numba kernels --------------------------------------------------------------

@njit(cache=True)
def _propagate(W, csc_ptr, csc_idx, S_pre, I_post):
    for i in range(S_pre.shape[0]):
        if S_pre[i]:
            for k in range(csc_ptr[i], csc_ptr[i + 1]):
                j = csc_idx[k]
                I_post[j] += W[j, i]


@njit(cache=True)
def _lif(U, alpha, S, I, noise, lif, thr, noise_in_increment):
    tau_m, R_m, U_rest, U_reset, U_min, U_max, dt = lif
    U_th0, tau_th, delta = thr
    k = dt / tau_m
    leak_th = 1.0 - dt / tau_th
    for n in range(U.shape[0]):
        if noise_in_increment:
            u = U[n] + k * (-(U[n] - U_rest) + R_m * I[n] + noise[n])
        else:
            u = U[n] + k * (-(U[n] - U_rest) + R_m * I[n]) + noise[n]
        if u < U_min:
            u = U_min
        elif u > U_max:
            u = U_max
        if u >= U_th0 + alpha[n]:
            S[n] = 1
            u = U_reset
        else:
            S[n] = 0
        U[n] = u
        a = alpha[n] * leak_th + S[n] * delta
        alpha[n] = a if a > 0.0 else 0.0


@njit(cache=True)
def _potentiate(W, csr_ptr, csr_idx, S_post, x_pre, gain, excitatory):
    for j in range(S_post.shape[0]):
        if S_post[j]:
            for k in range(csr_ptr[j], csr_ptr[j + 1]):
                i = csr_idx[k]
                if excitatory:
                    W[j, i] += gain * x_pre[i]
                else:
                    W[j, i] -= gain * x_pre[i]


@njit(cache=True)
def _depress(W, csc_ptr, csc_idx, S_pre, x_post, S_post, gain, excitatory):
    for i in range(S_pre.shape[0]):
        if S_pre[i]:
            for k in range(csc_ptr[i], csc_ptr[i + 1]):
                j = csc_idx[k]
                d = gain * (x_post[j] - S_post[j])
                if excitatory:
                    w = W[j, i] - d
                    W[j, i] = w if w > 0.0 else 0.0
                else:
                    w = W[j, i] + d
                    W[j, i] = w if w < 0.0 else 0.0


@njit(cache=True)
def _network_step(s_in, noise_e, noise_i, learn,
                  U_e, a_e, S_e, U_i, a_i, S_i,
                  xp_in, xp_e, xp_i, xm_e, xm_i,
                  W0, c0p, c0i, r0p, r0i,
                  W1, c1p, c1i, r1p, r1i,
                  W2, c2p, c2i, r2p, r2i,
                  W3, c3p, c3i, r3p, r3i,
                  lif, thr, noise_in_increment, stdp, dt):
    n_e = U_e.shape[0]
    n_i = U_i.shape[0]
    I_e = np.zeros(n_e)
    I_i = np.zeros(n_i)
    _propagate(W0, c0p, c0i, s_in, I_e)
    _propagate(W1, c1p, c1i, S_e, I_e)
    _propagate(W2, c2p, c2i, S_e, I_i)
    _propagate(W3, c3p, c3i, S_i, I_e)
    _lif(U_e, a_e, S_e, I_e, noise_e, lif, thr, noise_in_increment)
    _lif(U_i, a_i, S_i, I_i, noise_i, lif, thr, noise_in_increment)
    if not learn:
        return
    eta_e, eta_i, A_p, A_m, tau_p, tau_m = stdp
    dp = np.exp(-dt / tau_p)
    dm = np.exp(-dt / tau_m)
    for n in range(xp_in.shape[0]):
        xp_in[n] = xp_in[n] * dp + s_in[n]
    for n in range(n_e):
        xp_e[n] = xp_e[n] * dp + S_e[n]
        xm_e[n] = xm_e[n] * dm + S_e[n]
    for n in range(n_i):
        xp_i[n] = xp_i[n] * dp + S_i[n]
        xm_i[n] = xm_i[n] * dm + S_i[n]
    g_ltp_e = eta_e * A_p
    g_ltd_e = eta_e * A_m
    g_ltp_i = eta_i * A_p
    g_ltd_i = eta_i * A_m
    _potentiate(W0, r0p, r0i, S_e, xp_in, g_ltp_e, True)
    _potentiate(W1, r1p, r1i, S_e, xp_e, g_ltp_e, True)
    _potentiate(W2, r2p, r2i, S_i, xp_e, g_ltp_e, True)
    _potentiate(W3, r3p, r3i, S_e, xp_i, g_ltp_i, False)
    _depress(W0, c0p, c0i, s_in, xm_e, S_e, g_ltd_e, True)
    _depress(W1, c1p, c1i, S_e, xm_e, S_e, g_ltd_e, True)
    _depress(W2, c2p, c2i, S_e, xm_i, S_i, g_ltd_e, True)
    _depress(W3, c3p, c3i, S_i, xm_e, S_e, g_ltd_i, False)


@njit(cache=True)
def _present(raster, noise_e, noise_i, learn, counts,
             U_e, a_e, S_e, U_i, a_i, S_i,
             xp_in, xp_e, xp_i, xm_e, xm_i,
             W0, c0p, c0i, r0p, r0i,
             W1, c1p, c1i, r1p, r1i,
             W2, c2p, c2i, r2p, r2i,
             W3, c3p, c3i, r3p, r3i,
             lif, thr, noise_in_increment, stdp, dt):
    for t in range(raster.shape[0]):
        _network_step(raster[t], noise_e[t], noise_i[t], learn,
                      U_e, a_e, S_e, U_i, a_i, S_i,
                      xp_in, xp_e, xp_i, xm_e, xm_i,
                      W0, c0p, c0i, r0p, r0i,
                      W1, c1p, c1i, r1p, r1i,
                      W2, c2p, c2i, r2p, r2i,
                      W3, c3p, c3i, r3p, r3i,
                      lif, thr, noise_in_increment, stdp, dt)
        for n in range(S_e.shape[0]):
            counts[n] += S_e[n]


@njit(cache=True)
def _decay_group(W, csr_ptr, csr_idx, w_tgt, lam):
    total = 0.0
    identity = lam == 1.0
    for j in range(csr_ptr.shape[0] - 1):
        for k in range(csr_ptr[j], csr_ptr[j + 1]):
            i = csr_idx[k]
            w = W[j, i]
            if identity:
                total += abs(w)
            elif w > 0.0:
                w = w_tgt * (w / w_tgt) ** lam
                total += w
            elif w < 0.0:
                w = -w_tgt * (-w / w_tgt) ** lam
                total -= w
            W[j, i] = w
    return total


@njit(cache=True)
def _sleep_chunk(n_iter, noise_e, noise_i, learn, w_tgt, lam, threshold,
                 U_e, a_e, S_e, U_i, a_i, S_i,
                 xp_in, xp_e, xp_i, xm_e, xm_i,
                 W0, c0p, c0i, r0p, r0i,
                 W1, c1p, c1i, r1p, r1i,
                 W2, c2p, c2i, r2p, r2i,
                 W3, c3p, c3i, r3p, r3i,
                 lif, thr, noise_in_increment, stdp, dt):
    """Run up to ``n_iter`` sleep iterations; return (iterations done, woke)."""
    s_in = np.zeros(xp_in.shape[0], dtype=np.uint8)
    for t in range(n_iter):
        _network_step(s_in, noise_e[t], noise_i[t], learn,
                      U_e, a_e, S_e, U_i, a_i, S_i,
                      xp_in, xp_e, xp_i, xm_e, xm_i,
                      W0, c0p, c0i, r0p, r0i,
                      W1, c1p, c1i, r1p, r1i,
                      W2, c2p, c2i, r2p, r2i,
                      W3, c3p, c3i, r3p, r3i,
                      lif, thr, noise_in_increment, stdp, dt)
        total = _decay_group(W0, r0p, r0i, w_tgt, lam)
        total += _decay_group(W1, r1p, r1i, w_tgt, lam)
        total += _decay_group(W2, r2p, r2i, w_tgt, lam)
        total += _decay_group(W3, r3p, r3i, w_tgt, lam)
        if total <= threshold:
            return t + 1, True
    return n_iter, False


# -- Python-facing network ------------------------------------------------------

class STDPNetwork:
    """Three-population network state: neurons, traces and plastic groups."""

    def __init__(self, params: NetworkParams, lif: LIFParams, thr: ThresholdParams,
                 stdp: STDPParams, rng: np.random.Generator):
        self.params, self.lif, self.thr, self.stdp = params, lif, thr, stdp
        p = params
        self.groups: dict[str, SynapseGroup] = {
            "in_exc": random_group(p.n_in, p.n_exc, p.p_in_exc, p.w_in_exc,
                                   Polarity.EXC, rng, name="in_exc"),
            "exc_exc": random_group(p.n_exc, p.n_exc, p.p_exc_exc, p.w_exc_exc,
                                    Polarity.EXC, rng, no_self=True, name="exc_exc"),
            "exc_inh": random_group(p.n_exc, p.n_inh, p.p_exc_inh, p.w_exc_inh,
                                    Polarity.EXC, rng, name="exc_inh"),
            "inh_exc": random_group(p.n_inh, p.n_exc, p.p_inh_exc, p.w_inh_exc,
                                    Polarity.INH, rng, name="inh_exc"),
        }
        self._index = {k: _index_lists(g.mask) for k, g in self.groups.items()}
        self.initial_weight_sum = self.weight_abs_sum()
        self.initial_mean_abs = self.initial_weight_sum / max(1, self.n_synapses())
        self.ceiling = p.safety_factor * self.initial_mean_abs
        self.reset_state()

    # state ------------------------------------------------------------------
    def reset_state(self):
        p, lif = self.params, self.lif
        self.exc = NeuronPopulationState.resting(p.n_exc, lif)
        self.inh = NeuronPopulationState.resting(p.n_inh, lif)
        self.xp_in = np.zeros(p.n_in)
        self.xp_e, self.xm_e = np.zeros(p.n_exc), np.zeros(p.n_exc)
        self.xp_i, self.xm_i = np.zeros(p.n_inh), np.zeros(p.n_inh)

    def n_synapses(self) -> int:
        return int(sum(g.mask.sum() for g in self.groups.values()))

    def weight_abs_sum(self) -> float:
        return float(sum(g.abs_sum() for g in self.groups.values()))

    def max_abs_weight(self) -> float:
        return float(max(np.abs(g.W).max(initial=0.0) for g in self.groups.values()))

    def weight_stats(self) -> dict[str, dict[str, float]]:
        out = {}
        for k, g in self.groups.items():
            w = g.weights()
            out[k] = {"mean": float(w.mean()) if w.size else 0.0,
                      "min": float(w.min(initial=0.0)), "max": float(w.max(initial=0.0))}
        return out

    def check_ceiling(self):
        m = self.max_abs_weight()
        if not np.isfinite(m) or m > self.ceiling:
            raise WeightExplosion(f"max |w| = {m:.4g} exceeds safety ceiling {self.ceiling:.4g}")

    # kernels ----------------------------------------------------------------
    def _lif_tuple(self):
        l = self.lif
        return (l.tau_m, l.R_m, l.U_rest, l.U_reset, l.U_min, l.U_max, l.dt)

    def _thr_tuple(self):
        return (self.thr.U_th0, self.thr.tau_th, self.thr.delta)

    def _stdp_tuple(self):
        s = self.stdp
        return (s.eta_exc, s.eta_inh, s.A_plus, s.A_minus, s.tau_plus, s.tau_minus)

    def _state_args(self):
        return (self.exc.U, self.exc.alpha, self.exc.S, self.inh.U, self.inh.alpha,
                self.inh.S, self.xp_in, self.xp_e, self.xp_i, self.xm_e, self.xm_i)

    def _group_args(self):
        args = []
        for k in GROUPS:
            args.append(self.groups[k].W)
            args.extend(self._index[k])
        return tuple(args)

    def _tail_args(self):
        return (self._lif_tuple(), self._thr_tuple(), self.lif.noise_in_increment,
                self._stdp_tuple(), float(self.lif.dt))

    def _noise(self, rng, steps):
        p, l = self.params, self.lif
        if l.noise_std == 0 or rng is None:
            ne = np.full((steps, p.n_exc), l.noise_mean if rng is not None else 0.0)
            ni = np.full((steps, p.n_inh), l.noise_mean if rng is not None else 0.0)
            return ne, ni
        return (rng.normal(l.noise_mean, l.noise_std, (steps, p.n_exc)),
                rng.normal(l.noise_mean, l.noise_std, (steps, p.n_inh)))

    def step(self, s_in, learn: bool, noise_e=None, noise_i=None):
        """One simulation step (mostly for tests); returns (S_exc, S_inh)."""
        s_in = np.ascontiguousarray(s_in, dtype=np.uint8)
        if noise_e is None:
            noise_e = np.zeros(self.params.n_exc)
        if noise_i is None:
            noise_i = np.zeros(self.params.n_inh)
        _network_step(s_in, np.asarray(noise_e, float), np.asarray(noise_i, float), learn,
                      *self._state_args(), *self._group_args(), *self._tail_args())
        return self.exc.S.copy(), self.inh.S.copy()

    def present(self, raster, learn: bool, rng: np.random.Generator | None) -> np.ndarray:
        """Feed a (T, n_in) spike raster; return excitatory spike counts."""
        raster = np.ascontiguousarray(raster, dtype=np.uint8)
        if raster.ndim != 2 or raster.shape[1] != self.params.n_in:
            raise ValueError(f"raster must be (T, {self.params.n_in}), got {raster.shape}")
        if self.params.reset_between_samples:
            self.reset_state()
        ne, ni = self._noise(rng, raster.shape[0])
        counts = np.zeros(self.params.n_exc, dtype=np.int64)
        _present(raster, ne, ni, learn, counts,
                 *self._state_args(), *self._group_args(), *self._tail_args())
        return counts

    def sleep_iterations(self, budget: int, schedule: SleepSchedule, threshold: float,
                         learn: bool, rng: np.random.Generator) -> tuple[int, bool]:
        self.reset_state()
        done = 0
        while done < budget:
            n = min(NOISE_CHUNK, budget - done)
            ne, ni = self._noise(rng, n)
            it, woke = _sleep_chunk(n, ne, ni, learn, schedule.w_tgt, schedule.lam,
                                    threshold, *self._state_args(), *self._group_args(),
                                    *self._tail_args())
            done += it
            if woke:
                return done, True
        return done, False
