"""Slot-by-slot simulation of one network realization, and Monte Carlo orchestration.

Random streams
--------------
Realization ``r`` of an experiment gets the 64-bit seed
``SeedSequence(master_seed, spawn_key=(r,)).generate_state(1, uint64)[0]``.
Inside a realization every purpose (topology, UE selection, direction draws,
fading, UL arrivals, DL arrivals) has its own generator built from
``SeedSequence(seed, spawn_key=(attempt, purpose_id))``, where ``attempt``
counts topology resamples. Results therefore depend only on
``(config, master_seed, r)``, never on worker count or scheduling order, and
schemes run on the same seed see identical layouts and arrival sequences.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import metrics as M
from .channel import dbm_to_watts, db_to_linear, link_sirs
from .exceptions import DegenerateGeometryError, ParameterError, TopologyError
from .geometry import Region, Topology, associate, distance_matrix, sample_ppp
from .scheduling import Scheme, SchemeConfig, mwu_step, penalty
from .traffic import QueueBank

log = logging.getLogger(__name__)

PURPOSES = {"topology": 0, "select": 1, "direction": 2, "fade": 3, "arrival_ul": 4,
            "arrival_dl": 5}
MAX_TOPOLOGY_ATTEMPTS = 1000


@dataclass(frozen=True)
class SimConfig:
    """Every scalar parameter of a run. Defaults are the full-scale reference setup.

    ``eta_s``/``eta_d`` default to ``xi_dl / (xi_ul + xi_dl)``, ``rho`` to the
    linear threshold and ``warmup`` to 10% of ``horizon``; ``None`` means
    "derive", see :meth:`resolved`.
    """

    side_length: float = 1600.0
    lambda_s: float = 1e-4
    lambda_u: float = 1e-3
    p_sap_dbm: float = 2.0
    p_ue_dbm: float = 17.0
    alpha: float = 3.8
    theta_db: float = 0.0
    xi_ul: float = 0.05
    xi_dl: float = 0.10
    k_s: int = 3
    scheme: Scheme = Scheme.DTDD_MWU
    eta_s: float | None = None
    eta_d: float | None = None
    delta: float = 0.1
    rho: float | None = None
    eta_sharp: float = 0.1
    horizon: int = 5000
    warmup: int | None = None
    realizations: int = 200
    master_seed: int = 0
    literal_eq3_powers: bool = False
    count_idle_as_zero: bool = False

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        self.validate()

    def validate(self):
        def finite(name):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ParameterError(f"{name} must be finite, got {v}")
            return v

        for name in ("side_length", "lambda_s", "lambda_u"):
            if not finite(name) > 0:
                raise ParameterError(f"{name} must be > 0")
        for name in ("p_sap_dbm", "p_ue_dbm", "theta_db"):
            finite(name)
        if not finite("alpha") > 2:
            raise ParameterError(f"alpha must be > 2, got {self.alpha}")
        for name in ("xi_ul", "xi_dl"):
            if not 0.0 <= finite(name) <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1]")
        if self.k_s < 1:
            raise ParameterError("k_s must be >= 1")
        if self.horizon < 1:
            raise ParameterError("horizon must be >= 1")
        if not 0 <= self.warmup_slots < self.horizon:
            raise ParameterError("warmup must satisfy 0 <= warmup < horizon")
        if self.realizations < 1:
            raise ParameterError("realizations must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ParameterError("master_seed must be a 64-bit unsigned integer")
        self.scheme_config()  # validates the scheduling parameters

    @property
    def warmup_slots(self) -> int:
        return self.horizon // 10 if self.warmup is None else int(self.warmup)

    @property
    def theta(self) -> float:
        return db_to_linear(self.theta_db)

    @property
    def default_eta(self) -> float:
        total = self.xi_ul + self.xi_dl
        return self.xi_dl / total if total > 0 else 0.5

    @property
    def region(self) -> Region:
        return Region(self.side_length)

    def scheme_config(self) -> SchemeConfig:
        return SchemeConfig(
            scheme=self.scheme,
            eta_s=self.default_eta if self.eta_s is None else self.eta_s,
            eta_d=self.default_eta if self.eta_d is None else self.eta_d,
            delta=self.delta,
            rho=self.theta if self.rho is None else self.rho,
            eta_sharp=self.eta_sharp,
            theta=self.theta,
        )

    def resolved(self) -> dict:
        """Field values with every derived default filled in."""
        sc = self.scheme_config()
        out = dataclasses.asdict(self)
        out.update(scheme=self.scheme.value, eta_s=sc.eta_s, eta_d=sc.eta_d, rho=sc.rho,
                   warmup=self.warmup_slots)
        return out

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class SlotOutcome:
    """Links attempted in one slot, one entry per transmitting SAP/UE pair."""

    slot: int
    sap: np.ndarray
    ue: np.ndarray
    is_dl: np.ndarray
    sir: np.ndarray
    success: np.ndarray

    @property
    def transmitter_is_sap(self) -> np.ndarray:
        return self.is_dl


def realization_seed(master_seed: int, index: int) -> int:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def stream(seed: int, attempt: int, purpose: str) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(attempt), PURPOSES[purpose]))
    return np.random.default_rng(ss)


def sample_topology(cfg: SimConfig, seed: int):
    """Layout for ``seed``; resamples with the next attempt index when no SAP lands."""
    region = cfg.region
    for attempt in range(MAX_TOPOLOGY_ATTEMPTS):
        rng = stream(seed, attempt, "topology")
        saps = sample_ppp(cfg.lambda_s, region, rng, "SAP")
        ues = sample_ppp(cfg.lambda_u, region, rng, "UE")
        try:
            return associate(saps, ues, cfg.k_s, region), attempt
        except TopologyError:
            log.debug("seed %d attempt %d: empty SAP set, resampling", seed, attempt)
    raise TopologyError(f"no SAPs after {MAX_TOPOLOGY_ATTEMPTS} topology draws")


class Realization:
    """Mutable state of one realization: queues, MWU weights, measurement counters.

    Links are the served (SAP, UE) pairs, numbered SAP-major; link ``l`` owns
    the UE's UL buffer ``ul[l]`` and the SAP's DL buffer for it ``dl[l]``.
    Nodes are numbered SAPs first, then linked UEs, for the gain matrix.
    """

    def __init__(self, cfg: SimConfig, seed: int, topology: Topology | None = None,
                 record_trace=False):
        self.cfg = cfg
        self.seed = int(seed)
        self.sc = cfg.scheme_config()
        if topology is None:
            topology, attempt = sample_topology(cfg, seed)
        else:
            attempt = 0
        self.topology = topology
        self.resampled = attempt

        n_s = len(topology.saps)
        counts = np.array([len(s) for s in topology.served], dtype=np.int64)
        self.n_saps = n_s
        self.link_sap = np.repeat(np.arange(n_s), counts)
        self.link_ue = np.array([u for s in topology.served for u in s], dtype=np.int64)
        self.n_links = n_links = self.link_ue.size
        first = np.concatenate(([0], np.cumsum(counts)[:-1])) if n_s else counts
        busy = counts > 0
        self.sched_saps = np.flatnonzero(busy)
        self.sched_first = first[busy]
        self.sched_count = counts[busy]

        nodes = np.vstack([topology.saps.positions,
                           topology.ues.positions[self.link_ue].reshape(-1, 2)])
        d = distance_matrix(nodes, nodes, topology.region)
        np.fill_diagonal(d, np.inf)
        if d.size and not np.all(d > 0):
            i, j = np.argwhere(d <= 0)[0]
            raise DegenerateGeometryError(f"nodes {i} and {j} are co-located")
        self.gain = d ** (-cfg.alpha)  # self-gain is 0, never used
        self.p_sap = dbm_to_watts(cfg.p_sap_dbm)
        self.p_ue = dbm_to_watts(cfg.p_ue_dbm)

        capacity = cfg.horizon + 2
        self.ul = QueueBank(n_links, capacity)
        self.dl = QueueBank(n_links, capacity)
        self.w_ul = np.ones(n_links)
        self.w_dl = np.ones(n_links)
        self.slot = 0

        self.rng_select = stream(seed, attempt, "select")
        self.rng_dir = stream(seed, attempt, "direction")
        self.rng_fade = stream(seed, attempt, "fade")
        self.rng_ul = stream(seed, attempt, "arrival_ul")
        self.rng_dl = stream(seed, attempt, "arrival_dl")

        z = lambda: np.zeros(n_links, dtype=np.int64)  # noqa: E731
        self.meas = {d: {"arrivals": z(), "delivered": z(), "delay_sum": z(), "empty": z()}
                     for d in ("UL", "DL")}
        self.trace = {"UL": [], "DL": []} if record_trace else None

    # -- slot mechanics ---------------------------------------------------
    def eta(self) -> np.ndarray:
        """Current per-link DL probability under MWU."""
        return self.w_dl / (self.w_ul + self.w_dl)

    def _decide(self, link):
        sc = self.sc
        n = link.size
        if sc.scheme is Scheme.STDD:
            return np.full(n, self.rng_dir.random() < sc.eta_s)
        if sc.scheme is Scheme.DTDD_FIXED:
            return self.rng_dir.random(n) < sc.eta_d
        eta = self.w_dl[link] / (self.w_ul[link] + self.w_dl[link])
        return self.rng_dir.random(n) < eta

    def run_slot(self) -> SlotOutcome:
        cfg, sc, t = self.cfg, self.sc, self.slot
        if t >= cfg.horizon:
            raise RuntimeError("realization already ran its full horizon")
        q_ul, q_dl = self.ul.lengths, self.dl.lengths
        if self.trace is not None:
            self.trace["UL"].append(q_ul.copy())
            self.trace["DL"].append(q_dl.copy())
        measuring = t >= cfg.warmup_slots
        if measuring:
            self.meas["UL"]["empty"] += q_ul == 0
            self.meas["DL"]["empty"] += q_dl == 0

        # (1) UE selection, (2) direction
        pick = np.floor(self.rng_select.random(self.sched_saps.size) * self.sched_count)
        link = self.sched_first + pick.astype(np.int64)
        is_dl = self._decide(link)

        # (3) activation: a transmitter is on only with a packet to send
        q = np.where(is_dl, q_dl[link], q_ul[link])
        on = q > 0
        l_on, dl_on = link[on], is_dl[on]
        s_on = self.link_sap[l_on]
        ue_node = self.n_saps + l_on
        tx = np.where(dl_on, s_on, ue_node)
        rx = np.where(dl_on, ue_node, s_on)

        # (4) joint SIR over every active transmitter
        n = l_on.size
        if n:
            gain = self.gain[rx[:, None], tx[None, :]]
            power = np.where(dl_on, self.p_sap, self.p_ue)
            if cfg.literal_eq3_powers:
                power = np.where(~dl_on[:, None] & ~dl_on[None, :], self.p_sap, power[None, :])
                np.fill_diagonal(power, np.where(dl_on, self.p_sap, self.p_ue))
            fade = self.rng_fade.exponential(1.0, size=(n, n))
            sir = link_sirs(gain, power, fade)[0]
        else:
            sir = np.empty(0)
        success = sir >= sc.theta  # inf (no interference) always decodes

        # (5) ACK pops the head; NACK leaves it for the next opportunity
        for name, bank, mask in (("DL", self.dl, dl_on), ("UL", self.ul, ~dl_on)):
            done = l_on[success & mask]
            if done.size:
                stamps, delays = bank.complete_head(done, t)
                keep = stamps >= cfg.warmup_slots
                m = self.meas[name]
                m["delivered"][done[keep]] += 1
                m["delay_sum"][done[keep]] += delays[keep]

        # (6) MWU feedback for every selected UE; an idle pick pays theta
        if sc.scheme is Scheme.DTDD_MWU and link.size:
            gamma = np.zeros(link.size)
            gamma[on] = sir
            m_pen = penalty(sc.theta, gamma, q, sc.eta_sharp)
            self.w_ul[link], self.w_dl[link] = mwu_step(
                self.w_ul[link], self.w_dl[link], is_dl, m_pen, sc.delta, sc.rho)

        # (7) end-of-slot arrivals, available from the next slot on
        stamp = t + 1
        a_ul = self.rng_ul.random(self.n_links) < cfg.xi_ul
        a_dl = self.rng_dl.random(self.n_links) < cfg.xi_dl
        self.ul.arrive(a_ul, stamp)
        self.dl.arrive(a_dl, stamp)
        if cfg.warmup_slots <= stamp < cfg.horizon:
            self.meas["UL"]["arrivals"] += a_ul
            self.meas["DL"]["arrivals"] += a_dl

        self.slot += 1
        return SlotOutcome(t, s_on, self.link_ue[l_on], dl_on, sir, success)

    def run(self, compiled=None):
        """Run the remaining slots and return the metrics.

        ``compiled`` selects the numba slot loop (default whenever no queue
        trace is being recorded); it follows the same random streams as
        :meth:`run_slot`.
        """
        if compiled is None:
            compiled = self.trace is None
        if compiled:
            self._run_compiled()
        while self.slot < self.cfg.horizon:
            self.run_slot()
        return self.metrics()

    def _run_compiled(self, block=512):
        from . import _kernel

        cfg, sc = self.cfg, self.sc
        n_sched, n_links = self.sched_saps.size, self.n_links
        code = {Scheme.STDD: _kernel.STDD, Scheme.DTDD_FIXED: _kernel.DTDD_FIXED,
                Scheme.DTDD_MWU: _kernel.DTDD_MWU}[sc.scheme]
        chunk = max(1 << 16, n_sched * n_sched)
        fade = np.empty(0)
        pos = 0
        mu, md = self.meas["UL"], self.meas["DL"]
        while self.slot < cfg.horizon:
            b = min(block, cfg.horizon - self.slot)
            sel_u = self.rng_select.random((b, n_sched))
            dir_u = self.rng_dir.random((b, 1) if code == _kernel.STDD else (b, n_sched))
            aul = self.rng_ul.random((b, n_links))
            adl = self.rng_dl.random((b, n_links))
            start = 0
            while start < b:
                done, pos = _kernel.run_block(
                    self.slot, b - start, cfg.horizon, cfg.warmup_slots,
                    code, sc.eta_s, sc.eta_d, sc.delta, sc.rho, sc.eta_sharp, sc.theta,
                    cfg.literal_eq3_powers, self.p_sap, self.p_ue, cfg.xi_ul, cfg.xi_dl,
                    self.sched_first, self.sched_count, self.link_sap, self.n_saps, self.gain,
                    sel_u[start:], dir_u[start:], aul[start:], adl[start:], fade, pos,
                    self.ul.buf, self.ul.head, self.ul.tail, self.ul.total_delivered,
                    self.ul.sum_delivered_delay,
                    self.dl.buf, self.dl.head, self.dl.tail, self.dl.total_delivered,
                    self.dl.sum_delivered_delay,
                    self.w_ul, self.w_dl,
                    mu["arrivals"], mu["delivered"], mu["delay_sum"], mu["empty"],
                    md["arrivals"], md["delivered"], md["delay_sum"], md["empty"])
                self.slot += done
                start += done
                if start < b:
                    fade = np.concatenate((fade[pos:], self.rng_fade.exponential(1.0, size=chunk)))
                    pos = 0

    # -- measurement ------------------------------------------------------
    def _direction_metrics(self, name):
        m = self.meas[name]
        window = self.cfg.horizon - self.cfg.warmup_slots
        thr, delay = [], []
        for a, k, s in zip(m["arrivals"], m["delivered"], m["delay_sum"]):
            v = M.throughput_from_totals(int(a), int(k), int(s))
            if v is None and self.cfg.count_idle_as_zero:
                v = 0.0
            thr.append(v)
            delay.append(int(s) / int(k) if k else None)
        empty = [int(e) / window for e in m["empty"]]
        return M.DirectionMetrics(
            mean_throughput=M.network_mean(thr),
            mean_delay=M.network_mean(delay),
            pr_empty_queue=M.network_mean(empty),
            n_ues_counted=sum(v is not None for v in thr),
            n_delivered=int(m["delivered"].sum()),
        )

    def metrics(self) -> M.RealizationMetrics:
        in_flight = sum(int(self.meas[d]["arrivals"].sum() - self.meas[d]["delivered"].sum())
                        for d in ("UL", "DL"))
        return M.RealizationMetrics(
            ul=self._direction_metrics("UL"),
            dl=self._direction_metrics("DL"),
            resampled_topologies=self.resampled,
            in_flight=in_flight,
        )

    def check_conservation(self):
        self.ul.check()
        self.dl.check()


def run_realization(cfg: SimConfig, seed: int) -> M.RealizationMetrics:
    return Realization(cfg, seed).run()


def _run_indexed(args):
    cfg, index = args
    return index, run_realization(cfg, realization_seed(cfg.master_seed, index))


def run_experiment(cfg: SimConfig, threads: int = 1) -> M.AggregateMetrics:
    """Run ``cfg.realizations`` independent realizations and aggregate them.

    ``threads > 1`` fans realizations out to worker processes; the output is
    identical for any worker count.
    """
    jobs = [(cfg, r) for r in range(cfg.realizations)]
    if threads <= 1 or len(jobs) == 1:
        results = [_run_indexed(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_indexed, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    results.sort(key=lambda item: item[0])
    return M.aggregate(r for _, r in results)


def run_sweep(cfg: SimConfig, variable: str, values, schemes, threads: int = 1):
    """Yield ``(scheme, value, AggregateMetrics)`` over a ``theta_db`` or ``k_s`` sweep.

    Every point reuses ``cfg.master_seed``, so schemes and sweep points share
    layouts and arrival sequences.
    """
    if variable not in ("theta_db", "k_s"):
        raise ParameterError(f"cannot sweep {variable!r}; use theta_db or k_s")
    for scheme in schemes:
        for value in values:
            v = int(value) if variable == "k_s" else float(value)
            point = cfg.replace(scheme=Scheme.parse(scheme), **{variable: v})
            yield point.scheme, v, run_experiment(point, threads=threads)
