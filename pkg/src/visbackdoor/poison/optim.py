"""Signed Adam and the l-infinity / box projection used while crafting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class SignedAdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = ADAM_EPS

    @classmethod
    def zeros_like(cls, x: np.ndarray) -> "SignedAdamState":
        return cls(np.zeros_like(x, dtype=np.float64), np.zeros_like(x, dtype=np.float64))


def signed_adam_step(state: SignedAdamState, grad: np.ndarray, lr: float) -> np.ndarray:
    """Advance the moments in place and return the update ``-lr * sign(m_hat / (sqrt(v_hat) + eps))``."""
    state.t += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = state.m / (1 - state.beta1 ** state.t)
    v_hat = state.v / (1 - state.beta2 ** state.t)
    return -lr * np.sign(m_hat / (np.sqrt(v_hat) + state.eps))


def project(delta: np.ndarray, base: np.ndarray, eps: float) -> np.ndarray:
    """Clamp to ``[-eps, eps]``, then clamp ``base + delta`` to ``[0, 1]`` by adjusting delta.

    The result satisfies both constraints exactly in floating point (``base + delta``
    is nudged by single ulps where ``1 - base`` rounded up), and the map is idempotent.
    """
    base = np.asarray(base, dtype=np.float64)
    d = np.clip(np.clip(delta, -eps, eps), -base, 1.0 - base)
    while True:
        high = base + d > 1.0
        low = base + d < 0.0
        if not (high.any() or low.any()):
            return d
        d[high] = np.nextafter(d[high], -np.inf)
        d[low] = np.nextafter(d[low], np.inf)


@dataclass
class ConstraintCheck:
    """Counts instrumented constraint checks; usable as a craft hook."""

    eps: float
    checks: int = 0
    violations: list = field(default_factory=list)

    def __call__(self, restart: int, step: int, delta: np.ndarray, base: np.ndarray) -> None:
        self.checks += 1
        over = float(np.max(np.abs(delta))) if delta.size else 0.0
        poisoned = base + delta
        if over > self.eps:
            self.violations.append((restart, step, "linf", over))
        if poisoned.min(initial=0.0) < 0.0 or poisoned.max(initial=1.0) > 1.0:
            self.violations.append((restart, step, "range", float(poisoned.min()), float(poisoned.max())))
