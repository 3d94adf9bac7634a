"""Pairwise trace STDP for excitatory synapses, inverted STDP for inhibitory ones.

Each synapse group keeps two traces: ``x_pre`` (time constant ``tau_plus``) on
the presynaptic side and ``x_post`` (``tau_minus``) on the postsynaptic side.
For an isolated pair the realised weight change is

    dt >= 0:  eta * A_plus  * exp(-dt / tau_plus)
    dt <  0: -eta * A_minus * exp( dt / tau_minus)

with ``dt = t_post - t_pre``.  Inhibitory groups use the negated window.
Weight matrices are stored dense as (n_post, n_pre) with a fixed boolean mask.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

import numpy as np

from .neurons import ShapeError


class Polarity(str, enum.Enum):
    EXC = "exc"
    INH = "inh"


class PolarityError(RuntimeError):
    """An excitatory-only operation was applied to an inhibitory group or vice versa."""


class WeightExplosion(RuntimeError):
    """A weight magnitude passed the safety ceiling."""


@dataclass(frozen=True)
class STDPParams:
    eta_exc: float = 5e-4
    eta_inh: float = 5e-4
    A_plus: float = 0.5
    A_minus: float = 0.3
    tau_plus: float = 10.0
    tau_minus: float = 7.5

    def __post_init__(self):
        for name in ("eta_exc", "eta_inh", "A_plus", "A_minus", "tau_plus", "tau_minus"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class SynapseGroup:
    W: np.ndarray
    polarity: Polarity
    mask: np.ndarray
    x_pre: np.ndarray = field(default=None)
    x_post: np.ndarray = field(default=None)
    name: str = ""

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        self.polarity = Polarity(self.polarity)
        if self.W.shape != self.mask.shape:
            raise ShapeError("W and mask must have the same shape")
        n_post, n_pre = self.W.shape
        if self.x_pre is None:
            self.x_pre = np.zeros(n_pre)
        if self.x_post is None:
            self.x_post = np.zeros(n_post)
        self.W[~self.mask] = 0.0

    @property
    def n_pre(self) -> int:
        return self.W.shape[1]

    @property
    def n_post(self) -> int:
        return self.W.shape[0]

    def weights(self) -> np.ndarray:
        """Values of the existing synapses only."""
        return self.W[self.mask]

    def abs_sum(self) -> float:
        return float(np.abs(self.W).sum())

    def copy(self) -> "SynapseGroup":
        return SynapseGroup(self.W.copy(), self.polarity, self.mask.copy(),
                            self.x_pre.copy(), self.x_post.copy(), self.name)


def random_group(n_pre, n_post, p, w0, polarity, rng, *, no_self=False, name=""):
    """Bernoulli(p) connectivity with every existing synapse set to ``w0``."""
    mask = rng.random((n_post, n_pre)) < p
    if no_self:
        if n_pre != n_post:
            raise ShapeError("self-connections only make sense for a recurrent group")
        np.fill_diagonal(mask, False)
    W = np.where(mask, float(w0), 0.0)
    group = SynapseGroup(W, polarity, mask, name=name)
    sign_clamp(group)
    return group


def _check_spikes(group: SynapseGroup, S_pre, S_post):
    S_pre = np.asarray(S_pre, dtype=float)
    S_post = np.asarray(S_post, dtype=float)
    if S_pre.shape != (group.n_pre,) or S_post.shape != (group.n_post,):
        raise ShapeError(
            f"spikes {S_pre.shape}/{S_post.shape} do not fit group {group.W.shape}")
    return S_pre, S_post


def trace_decay_and_bump(group: SynapseGroup, S_pre, S_post, params: STDPParams,
                         dt: float) -> SynapseGroup:
    S_pre, S_post = _check_spikes(group, S_pre, S_post)
    group.x_pre = group.x_pre * np.exp(-dt / params.tau_plus) + S_pre
    group.x_post = group.x_post * np.exp(-dt / params.tau_minus) + S_post
    return group


def _pair_update(group: SynapseGroup, S_pre, S_post, params: STDPParams):
    # Traces must already include this step's spikes.  Potentiation sees the
    # current presynaptic spike (dt = 0 is causal); depression uses the
    # postsynaptic trace without this step's spike so a coincident pair is
    # counted once.
    ltp = params.A_plus * np.outer(S_post, group.x_pre)
    ltd = params.A_minus * np.outer(group.x_post - S_post, S_pre)
    return (ltp - ltd) * group.mask


def stdp_apply(group: SynapseGroup, S_pre, S_post, params: STDPParams) -> SynapseGroup:
    if group.polarity is not Polarity.EXC:
        raise PolarityError("stdp_apply needs an excitatory group")
    S_pre, S_post = _check_spikes(group, S_pre, S_post)
    group.W += params.eta_exc * _pair_update(group, S_pre, S_post, params)
    return sign_clamp(group)


def istdp_apply(group: SynapseGroup, S_pre, S_post, params: STDPParams) -> SynapseGroup:
    if group.polarity is not Polarity.INH:
        raise PolarityError("istdp_apply needs an inhibitory group")
    S_pre, S_post = _check_spikes(group, S_pre, S_post)
    group.W -= params.eta_inh * _pair_update(group, S_pre, S_post, params)
    return sign_clamp(group)


def plasticity_step(group: SynapseGroup, S_pre, S_post, params: STDPParams, dt: float):
    trace_decay_and_bump(group, S_pre, S_post, params, dt)
    if group.polarity is Polarity.EXC:
        return stdp_apply(group, S_pre, S_post, params)
    return istdp_apply(group, S_pre, S_post, params)


def sign_clamp(group: SynapseGroup) -> SynapseGroup:
    if group.polarity is Polarity.EXC:
        np.maximum(group.W, 0.0, out=group.W)
    else:
        np.minimum(group.W, 0.0, out=group.W)
    group.W[~group.mask] = 0.0
    return group


def stdp_window(delta_t, params: STDPParams, polarity=Polarity.EXC):
    """Closed-form pair window as a function of ``t_post - t_pre`` (ms)."""
    delta_t = np.asarray(delta_t, dtype=float)
    eta = params.eta_exc if Polarity(polarity) is Polarity.EXC else params.eta_inh
    dw = np.where(
        delta_t >= 0,
        params.A_plus * np.exp(-np.abs(delta_t) / params.tau_plus),
        -params.A_minus * np.exp(-np.abs(delta_t) / params.tau_minus),
    )
    sign = 1.0 if Polarity(polarity) is Polarity.EXC else -1.0
    return sign * eta * dw


def check_ceiling(groups, ceiling: float):
    for g in groups:
        m = float(np.abs(g.W).max(initial=0.0))
        if not np.isfinite(m) or m > ceiling:
            raise WeightExplosion(
                f"|w| = {m:.4g} in group {g.name or '?'} exceeds ceiling {ceiling:.4g}")


# -- weight snapshot export ---------------------------------------------------

TRIPLET_DTYPE = np.dtype([("pre", "<i4"), ("post", "<i4"), ("weight", "<f8")])


def weight_triplets(group: SynapseGroup) -> np.ndarray:
    post, pre = np.nonzero(group.mask)
    out = np.empty(post.size, dtype=TRIPLET_DTYPE)
    out["pre"], out["post"], out["weight"] = pre, post, group.W[post, pre]
    return out


def save_weights_csv(group: SynapseGroup, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["pre_index", "post_index", "weight"])
        for rec in weight_triplets(group):
            w.writerow([int(rec["pre"]), int(rec["post"]), repr(float(rec["weight"]))])


def save_weights_binary(group: SynapseGroup, path):
    """Flat little-endian records of (int32 pre, int32 post, float64 weight)."""
    weight_triplets(group).tofile(path)


def load_weights_binary(path) -> np.ndarray:
    return np.fromfile(path, dtype=TRIPLET_DTYPE)


def load_weights_csv(path) -> np.ndarray:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    out = np.empty(rows.shape[0], dtype=TRIPLET_DTYPE)
    out["pre"], out["post"], out["weight"] = rows[:, 0], rows[:, 1], rows[:, 2]
    return out
