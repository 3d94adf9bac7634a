"""Leaky integrate-and-fire dynamics with adaptive thresholds.

Membrane update (forward Euler, one step of ``dt`` ms)::

    U <- U + dt/tau_m * (-(U - U_rest) + R_m * I_syn + xi),   xi ~ N(noise_mean, noise_std^2)

followed by clamping to ``[U_min, U_max]``.  A neuron spikes when the clamped
potential reaches ``U_th0 + alpha`` and is then reset to ``U_reset``.  The
threshold offset ``alpha`` leaks with time constant ``tau_th`` and jumps by
``delta`` on every spike.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    """Raised when array shapes of inputs and populations disagree."""


@dataclass(frozen=True)
class LIFParams:
    tau_m: float = 30.0
    R_m: float = 30.0
    U_rest: float = -70.0
    U_reset: float = -80.0
    U_min: float = -100.0
    U_max: float = 40.0
    noise_mean: float = 0.0
    noise_std: float = 3.0
    dt: float = 1.0
    # False puts the noise sample directly on U instead of inside the Euler increment.
    noise_in_increment: bool = True

    def __post_init__(self):
        if self.tau_m <= 0 or self.dt <= 0:
            raise ValueError("tau_m and dt must be positive")
        if not (self.U_min < self.U_reset <= self.U_rest < self.U_max):
            raise ValueError("require U_min < U_reset <= U_rest < U_max")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


@dataclass(frozen=True)
class ThresholdParams:
    U_th0: float = -55.0
    tau_th: float = 100.0
    delta: float = 3.0

    def __post_init__(self):
        if self.tau_th <= 0 or self.delta < 0:
            raise ValueError("tau_th must be positive and delta non-negative")


@dataclass
class NeuronPopulationState:
    U: np.ndarray
    alpha: np.ndarray
    S: np.ndarray = field(default=None)

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        if self.S is None:
            self.S = np.zeros(self.U.shape, dtype=np.uint8)
        if self.U.shape != self.alpha.shape or self.U.shape != np.shape(self.S):
            raise ShapeError("U, alpha and S must have equal shapes")

    @classmethod
    def resting(cls, n: int, params: LIFParams) -> "NeuronPopulationState":
        return cls(np.full(n, params.U_rest), np.zeros(n))

    @property
    def size(self) -> int:
        return self.U.shape[0]

    def copy(self) -> "NeuronPopulationState":
        return NeuronPopulationState(self.U.copy(), self.alpha.copy(), self.S.copy())


def threshold_update(alpha, S, thr: ThresholdParams, dt: float) -> np.ndarray:
    """Leak the threshold offsets by one step and add ``delta`` per spike."""
    alpha = np.asarray(alpha, dtype=float)
    S = np.asarray(S)
    if alpha.shape != S.shape:
        raise ShapeError(f"alpha {alpha.shape} and S {S.shape} differ")
    out = alpha * (1.0 - dt / thr.tau_th) + S * thr.delta
    return np.maximum(out, 0.0)


def effective_threshold(alpha, thr: ThresholdParams) -> np.ndarray:
    return thr.U_th0 + np.asarray(alpha, dtype=float)


def synaptic_current(W, S_pre) -> np.ndarray:
    """Current into each postsynaptic neuron, ``W @ S_pre``.

    ``W`` is (n_post, n_pre), dense or any scipy.sparse matrix.
    """
    S_pre = np.asarray(S_pre, dtype=float)
    if S_pre.ndim != 1 or W.shape[1] != S_pre.shape[0]:
        raise ShapeError(f"matrix {W.shape} cannot act on spikes of shape {S_pre.shape}")
    if sp.issparse(W):
        return np.asarray(W @ S_pre).ravel()
    return np.asarray(W, dtype=float) @ S_pre


def draw_noise(rng: np.random.Generator, n: int, params: LIFParams, steps: int | None = None):
    """Membrane noise samples, shape ``(n,)`` or ``(steps, n)``."""
    shape = n if steps is None else (steps, n)
    if params.noise_std == 0:
        return np.full(shape, params.noise_mean, dtype=float)
    return rng.normal(params.noise_mean, params.noise_std, size=shape)


def lif_step(
    state: NeuronPopulationState,
    I_syn,
    params: LIFParams,
    thr: ThresholdParams,
    rng: np.random.Generator | None = None,
    noise=None,
) -> NeuronPopulationState:
    """Advance a population by one Euler step.

    Noise comes from ``noise`` if given, otherwise it is drawn from ``rng``.
    With neither, the noise term is zero.  The spike test uses the clamped
    potential; the reset overrides the clamp.
    """
    I_syn = np.asarray(I_syn, dtype=float)
    if I_syn.shape != state.U.shape:
        raise ShapeError(f"I_syn {I_syn.shape} does not match population {state.U.shape}")
    if noise is None:
        noise = draw_noise(rng, state.size, params) if rng is not None else 0.0
    k = params.dt / params.tau_m
    if params.noise_in_increment:
        U = state.U + k * (-(state.U - params.U_rest) + params.R_m * I_syn + noise)
    else:
        U = state.U + k * (-(state.U - params.U_rest) + params.R_m * I_syn) + noise
    U = np.clip(U, params.U_min, params.U_max)
    S = (U >= effective_threshold(state.alpha, thr)).astype(np.uint8)
    U = np.where(S == 1, params.U_reset, U)
    alpha = threshold_update(state.alpha, S, thr, params.dt)
    return NeuronPopulationState(U, alpha, S)


def with_noise_off(params: LIFParams) -> LIFParams:
    return replace(params, noise_mean=0.0, noise_std=0.0)
