"""Channel-access policies: synchronized TDD, fixed dynamic TDD, and MWU dynamic TDD.

The MWU arithmetic (:func:`penalty`, :func:`mwu_factor`, :func:`mwu_step`)
works elementwise on numpy arrays so the engine can update every selected UE
in one call; the scalar operations are thin wrappers over the same code.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ParameterError

WEIGHT_SUM = 2.0
_TINY = np.finfo(float).tiny


class Direction(enum.Enum):
    DL = "DL"
    UL = "UL"


class Scheme(enum.Enum):
    STDD = "stdd"
    DTDD_FIXED = "dtdd-fixed"
    DTDD_MWU = "dtdd-mwu"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("_", "-")
        aliases = {"dtdd": "dtdd-fixed", "mwu": "dtdd-mwu"}
        key = aliases.get(key, key)
        for s in cls:
            if s.value == key:
                return s
        raise ParameterError(f"unknown scheme {text!r}")


@dataclass(frozen=True)
class SchemeConfig:
    scheme: Scheme = Scheme.DTDD_MWU
    eta_s: float = 2 / 3
    eta_d: float = 2 / 3
    delta: float = 0.1
    rho: float = 1.0
    eta_sharp: float = 0.1
    theta: float = 1.0

    def __post_init__(self):
        for name in ("eta_s", "eta_d"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 < self.delta < 1.0:
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        for name in ("rho", "eta_sharp", "theta"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ParameterError(f"{name} must be positive and finite, got {v}")


@dataclass(frozen=True)
class MwuState:
    w_ul: float = 1.0
    w_dl: float = 1.0

    def __post_init__(self):
        if not (self.w_ul > 0 and self.w_dl > 0):
            raise ParameterError("MWU weights must be positive")

    @property
    def eta(self) -> float:
        return self.w_dl / (self.w_ul + self.w_dl)


def stdd_direction(eta_s: float, rng) -> Direction:
    """One network-wide draw; every SAP follows it this slot."""
    return Direction.DL if rng.random() < eta_s else Direction.UL


def dtdd_fixed_direction(eta_d: float, rng) -> Direction:
    return Direction.DL if rng.random() < eta_d else Direction.UL


def select_ue(served, rng):
    """Uniform pick from ``served``; ``None`` if the SAP has nobody to serve."""
    if len(served) == 0:
        return None
    return served[int(rng.integers(len(served)))]


def mwu_direction(state: MwuState, rng):
    eta_now = state.eta
    d = Direction.DL if rng.random() < eta_now else Direction.UL
    return d, eta_now


def penalty(theta, gamma, q_len, eta_sharp):
    """``theta - gamma * (1 - exp(-eta_sharp * q_len))``.

    An empty queue yields exactly ``theta`` whatever ``gamma`` is (including the
    no-interference ``inf``); ``inf`` with a backlog yields ``-inf``, which
    :func:`mwu_factor` clamps.
    """
    gamma = np.asarray(gamma, dtype=float)
    q_len = np.asarray(q_len, dtype=float)
    backlog = -np.expm1(-eta_sharp * q_len)
    with np.errstate(invalid="ignore"):
        m = np.where(q_len > 0, theta - gamma * backlog, theta)
    m = np.asarray(m, dtype=float)
    return float(m) if m.ndim == 0 else m


def mwu_factor(m, delta, rho):
    """Multiplier for the chosen direction's weight, penalty clamped to ``[-rho, rho]``."""
    x = np.clip(np.asarray(m, dtype=float), -rho, rho) / rho
    f = np.where(x >= 0, (1.0 - delta) ** x, (1.0 + delta) ** (-x))
    return float(f) if f.ndim == 0 else f


def mwu_step(w_ul, w_dl, is_dl, m, delta, rho, renormalize=True):
    """Apply one MWU update to arrays of weight pairs.

    Only the direction that was drawn (``is_dl`` true means DL) is scaled;
    the pair is then rescaled to sum to ``WEIGHT_SUM``. Returns new arrays.
    """
    f = mwu_factor(m, delta, rho)
    w_ul = np.where(is_dl, w_ul, w_ul * f)
    w_dl = np.where(is_dl, w_dl * f, w_dl)
    if renormalize:
        scale = WEIGHT_SUM / (w_ul + w_dl)
        # underflow floor; only reachable after thousands of one-sided updates
        w_ul = np.maximum(w_ul * scale, _TINY)
        w_dl = np.maximum(w_dl * scale, _TINY)
    return w_ul, w_dl


def mwu_update(state: MwuState, direction: Direction, m: float, delta: float, rho: float,
               renormalize=True) -> MwuState:
    w_ul, w_dl = mwu_step(state.w_ul, state.w_dl, direction is Direction.DL, m, delta, rho,
                          renormalize=renormalize)
    return MwuState(float(w_ul), float(w_dl))
