"""Path loss, Rayleigh fading and interference-limited SIR."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateGeometryError, ParameterError
from .geometry import Region, distance

#: SIR reported when a receiver sees no interference at all.
NO_INTERFERENCE = math.inf


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    alpha: float = 3.8
    p_sap: float = dbm_to_watts(2.0)
    p_ue: float = dbm_to_watts(17.0)

    def __post_init__(self):
        if not self.alpha > 2:
            raise ParameterError(f"alpha must be > 2, got {self.alpha}")
        if not (self.p_sap > 0 and self.p_ue > 0):
            raise ParameterError("transmit powers must be positive")


@dataclass(frozen=True)
class ActiveTransmitter:
    position: tuple
    power: float
    fade: float = 1.0

    def __post_init__(self):
        if self.fade < 0:
            raise ParameterError(f"fade must be >= 0, got {self.fade}")


@dataclass(frozen=True)
class SirSample:
    value: float
    desired_power: float
    interference_power: float

    @property
    def no_interference(self) -> bool:
        return self.interference_power == 0.0


def path_gain(d, alpha):
    """``d ** -alpha``; works elementwise on arrays."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise DegenerateGeometryError("zero distance between transmitter and receiver")
    g = d ** (-alpha)
    return float(g) if g.ndim == 0 else g


def draw_fade(rng, size=None):
    """Rayleigh power gain: unit-mean exponential, one per link per slot."""
    return rng.exponential(1.0, size=size)


def compute_sir(receiver, desired: ActiveTransmitter, interferers, params: ChannelParams,
                region: Region) -> SirSample:
    def received(tx):
        return tx.power * tx.fade * path_gain(distance(receiver, tx.position, region), params.alpha)

    signal = received(desired)
    interference = 0.0
    for tx in interferers:
        interference += received(tx)
    if interference == 0.0:
        return SirSample(NO_INTERFERENCE, signal, 0.0)
    return SirSample(signal / interference, signal, interference)


def link_sirs(gain, power, fade):
    """SIR of ``n`` simultaneous links in one pass.

    ``gain[i, j]`` is the path gain from transmitter ``j`` to receiver ``i``;
    link ``i`` pairs receiver ``i`` with transmitter ``i``, every other active
    transmitter interferes. ``power`` is per transmitter ``(n,)`` or per pair
    ``(n, n)``. Returns ``(sir, desired, interference)``; ``sir`` is
    ``NO_INTERFERENCE`` where the interference sum is zero.
    """
    gain = np.asarray(gain, dtype=float)
    rx = gain * fade * power
    desired = np.diagonal(rx).copy()
    # masked sum rather than total - desired, which leaves rounding residue
    np.fill_diagonal(rx, 0.0)
    interference = rx.sum(axis=1)
    with np.errstate(divide="ignore"):
        sir = np.where(interference > 0, desired / np.where(interference > 0, interference, 1.0),
                       NO_INTERFERENCE)
    return sir, desired, interference
