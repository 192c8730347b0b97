"""Random network layout: PPP sampling, torus distances, nearest-SAP association."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError, TopologyError

UNSERVED = -1


@dataclass(frozen=True)
class Region:
    """Square region ``[0, side_length)^2`` whose opposite edges are glued (a torus)."""

    side_length: float = 1600.0

    def __post_init__(self):
        if not (math.isfinite(self.side_length) and self.side_length > 0):
            raise ParameterError(f"side_length must be positive, got {self.side_length}")

    @property
    def area(self) -> float:
        return self.side_length**2


@dataclass(frozen=True)
class PointSet:
    positions: np.ndarray
    kind: str = "SAP"

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "positions", pos)
        if self.kind not in ("SAP", "UE"):
            raise ParameterError(f"unknown point kind {self.kind!r}")

    def __len__(self):
        return self.positions.shape[0]


@dataclass(frozen=True)
class Topology:
    """SAP/UE layout plus the capped nearest-SAP association.

    ``tagged_sap[u]`` is the serving SAP of UE ``u`` or ``UNSERVED``;
    ``served[s]`` lists the UE indices SAP ``s`` serves (nearest first);
    ``n_candidates[s]`` counts every UE whose nearest SAP is ``s``.
    """

    saps: PointSet
    ues: PointSet
    region: Region
    tagged_sap: np.ndarray
    served: tuple
    n_candidates: np.ndarray
    k_s: int = field(default=1)

    @property
    def unserved(self) -> np.ndarray:
        return np.flatnonzero(self.tagged_sap == UNSERVED)

    @property
    def n_served(self) -> int:
        return sum(len(s) for s in self.served)


def sample_ppp(intensity, region, rng, kind="SAP") -> PointSet:
    """Homogeneous PPP on ``region``: Poisson count, i.i.d. uniform positions."""
    if not math.isfinite(intensity) or intensity < 0:
        raise ParameterError(f"PPP intensity must be finite and >= 0, got {intensity}")
    n = rng.poisson(intensity * region.area)
    pos = rng.uniform(0.0, region.side_length, size=(n, 2))
    return PointSet(pos, kind)


def _wrap(delta, side):
    delta = np.abs(delta) % side
    return np.minimum(delta, side - delta)


def distance(a, b, region: Region) -> float:
    """Wrap-around Euclidean distance between two points of ``region``."""
    d = _wrap(np.subtract(a, b, dtype=float), region.side_length)
    return float(math.hypot(d[0], d[1]))


def distance_matrix(a, b, region: Region) -> np.ndarray:
    """Pairwise torus distances, shape ``(len(a), len(b))``."""
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    d = _wrap(a[:, None, :] - b[None, :, :], region.side_length)
    return np.hypot(d[..., 0], d[..., 1])


def associate(saps: PointSet, ues: PointSet, k_s: int, region: Region, rng=None) -> Topology:
    """Attach every UE to its nearest SAP and cap each SAP at ``k_s`` UEs.

    Ties on the nearest SAP go to the smaller SAP index. Over capacity, the
    ``k_s`` nearest candidates are kept (ties by smaller UE index) and the rest
    become unserved. The rule is deterministic, so ``rng`` is accepted for
    interface symmetry only.
    """
    if k_s < 1:
        raise ParameterError(f"k_s must be >= 1, got {k_s}")
    n_s, n_u = len(saps), len(ues)
    if n_s == 0:
        raise TopologyError("cannot associate UEs: no SAPs in the region")

    tagged = np.full(n_u, UNSERVED, dtype=np.int64)
    n_candidates = np.zeros(n_s, dtype=np.int64)
    served = [[] for _ in range(n_s)]
    if n_u:
        d = distance_matrix(ues.positions, saps.positions, region)
        nearest = np.argmin(d, axis=1)
        d_near = d[np.arange(n_u), nearest]
        n_candidates = np.bincount(nearest, minlength=n_s)
        # sort by (sap, distance, ue index)
        order = np.lexsort((np.arange(n_u), d_near, nearest))
        for u in order:
            s = nearest[u]
            if len(served[s]) < k_s:
                served[s].append(int(u))
                tagged[u] = s
    return Topology(
        saps=saps,
        ues=ues,
        region=region,
        tagged_sap=tagged,
        served=tuple(tuple(s) for s in served),
        n_candidates=n_candidates,
        k_s=int(k_s),
    )
