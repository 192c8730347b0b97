"""Per-realization metrics and cross-realization aggregation.

Throughput follows the nested form: per-UE ratio of delivered packets to the
sum of their delays first, then an unweighted mean over UEs, then over
realizations. ``None`` marks an undefined value (empty population) and is
carried through to the output rather than replaced by zero.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

#: Marker for a UE that contributes nothing to a population average.
EXCLUDED = None

Z95 = 1.96


def ue_throughput(arrivals, delays):
    """Delivered packets per slot of sojourn for one UE.

    ``EXCLUDED`` when the UE had no counted arrivals; 0 when it had arrivals
    but nothing was delivered.
    """
    delays = list(delays)
    return throughput_from_totals(arrivals, len(delays), math.fsum(delays))


def throughput_from_totals(arrivals, delivered, delay_sum):
    """:func:`ue_throughput` from counters instead of the delay list."""
    if delivered == 0:
        return EXCLUDED if arrivals == 0 else 0.0
    return delivered / delay_sum


def network_mean(values, exclusions=None):
    """Mean over the included entries; ``None`` entries (or ones flagged in
    ``exclusions``) are skipped. Returns ``None`` for an empty population."""
    if exclusions is None:
        exclusions = [v is None for v in values]
    kept = [v for v, skip in zip(values, exclusions) if not skip and v is not None]
    if not kept:
        return None
    return math.fsum(kept) / len(kept)


def empty_queue_prob(trace, window=None):
    """Fraction of window slots with an empty queue, averaged over UEs.

    ``trace`` has shape ``(n_slots,)`` for one queue or ``(n_slots, n_ues)``.
    ``window`` is a ``(start, stop)`` slot range, default the whole trace.
    """
    trace = np.asarray(trace)
    if trace.ndim == 1:
        trace = trace[:, None]
    start, stop = (0, trace.shape[0]) if window is None else window
    if stop <= start:
        raise ValueError("empty_queue_prob needs a non-empty window")
    per_ue = (trace[start:stop] == 0).mean(axis=0)
    if per_ue.size == 0:
        return None
    return math.fsum(per_ue) / per_ue.size


@dataclass(frozen=True)
class DirectionMetrics:
    mean_throughput: float | None
    mean_delay: float | None
    pr_empty_queue: float | None
    n_ues_counted: int = 0
    n_delivered: int = 0


@dataclass(frozen=True)
class RealizationMetrics:
    ul: DirectionMetrics
    dl: DirectionMetrics
    resampled_topologies: int = 0
    in_flight: int = 0  # measured packets still queued at horizon end

    def direction(self, d):
        return self.dl if str(getattr(d, "value", d)).upper() == "DL" else self.ul

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Estimate:
    mean: float | None
    ci95: float | None
    n: int


@dataclass(frozen=True)
class AggregateDirection:
    throughput: Estimate
    delay: Estimate
    pr_empty_queue: Estimate


@dataclass(frozen=True)
class AggregateMetrics:
    ul: AggregateDirection
    dl: AggregateDirection
    realizations: int
    resampled_topologies: int = 0
    per_realization: tuple = field(default=(), repr=False, compare=False)

    def direction(self, d):
        return self.dl if str(getattr(d, "value", d)).upper() == "DL" else self.ul


def estimate(values) -> Estimate:
    """Mean and 95% normal-approximation CI half-width of the defined values.

    Uses exactly-rounded sums, so the result does not depend on input order.
    """
    vals = [float(v) for v in values if v is not None]
    n = len(vals)
    if n == 0:
        return Estimate(None, None, 0)
    mean = math.fsum(vals) / n
    if n == 1:
        return Estimate(mean, None, 1)
    var = math.fsum((v - mean) ** 2 for v in vals) / (n - 1)
    return Estimate(mean, Z95 * math.sqrt(var) / math.sqrt(n), n)


def _aggregate_direction(items):
    return AggregateDirection(
        throughput=estimate(m.mean_throughput for m in items),
        delay=estimate(m.mean_delay for m in items),
        pr_empty_queue=estimate(m.pr_empty_queue for m in items),
    )


def aggregate(per_realization) -> AggregateMetrics:
    per_realization = list(per_realization)
    if not per_realization:
        raise ValueError("aggregate needs at least one realization")
    return AggregateMetrics(
        ul=_aggregate_direction([r.ul for r in per_realization]),
        dl=_aggregate_direction([r.dl for r in per_realization]),
        realizations=len(per_realization),
        resampled_topologies=sum(r.resampled_topologies for r in per_realization),
        per_realization=tuple(per_realization),
    )
