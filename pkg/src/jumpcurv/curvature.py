"""Contraction-rate lower bounds for pure jump particle systems.

A system of N particles on a finite site set E is described by a
:class:`JumpKernel`: coordinate i of configuration x jumps according to the
finite measure ``kernel.rate(i, x)``.  The coupled drift of the mean
per-coordinate distance between two copies started at (x, y) is

    S(x, y) = (1/N) sum_i drift(x_i, y_i; rate_i(x), rate_i(y)),

and every system contracts at least at rate ``-sup S(x, y) / d(x, y)``.
The engines here compute that supremum by exact enumeration over ordered
pairs (single particle or full product space), by enumeration of pairs
differing in one coordinate, or by uniform sampling.  Reduction is
deterministic: on ties the lexicographically smallest witness wins,
independent of worker scheduling.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import (
    Config,
    FiniteMeasure,
    GroundMetric,
    ValidationError,
    check_configuration,
    config_distance,
)
from .drift import drift_exact
from .transport import TransportPlan, optimal_plan

#: sites within this many positions of a truncation edge are excluded from
#: certified enumeration by the model-level helpers
DEFAULT_TRUNCATION_MARGIN = 5

#: hard cap on enumerated ordered pairs before the engine refuses
DEFAULT_PAIR_CAP = 10**6

WORKERS_ENV = "JUMPCURV_WORKERS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


class JumpKernel:
    """Base class: per-coordinate jump measures of an N-particle system.

    ``rate(i, config)`` returns the finite measure of destinations for
    coordinate i in the given configuration.  ``config_dependent`` declares
    whether that measure may depend on coordinates other than x_i; engines
    and simulators may cache per-(x_i, y_i) results only when it is False.
    """

    sites: tuple = ()
    config_dependent: bool = True

    def rate(self, i: int, config: Config) -> FiniteMeasure:
        raise NotImplementedError


class SingleSiteKernel(JumpKernel):
    """Product system: every coordinate jumps per a site-indexed measure map."""

    config_dependent = False

    def __init__(self, measures: Mapping, sites: Sequence | None = None):
        self.measures = dict(measures)
        self.sites = tuple(sites) if sites is not None else tuple(
            sorted(self.measures.keys())
        )

    def rate(self, i: int, config: Config) -> FiniteMeasure:
        try:
            return self.measures[config[i]]
        except KeyError:
            raise ValidationError(f"kernel has no measure at site {config[i]!r}")


def _as_site_map(kernel, sites) -> Callable:
    """Normalize a site->measure mapping / callable / kernel to a callable."""
    if isinstance(kernel, JumpKernel):
        if kernel.config_dependent:
            raise ValidationError(
                "single-site enumeration needs a configuration-independent kernel"
            )
        return lambda x: kernel.rate(0, (x,))
    if isinstance(kernel, Mapping):
        return lambda x: kernel[x]
    if callable(kernel):
        return kernel
    raise ValidationError("kernel must be a mapping, callable or JumpKernel")


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvatureReport:
    """Result of a contraction-bound search.

    bound = -sup_value; witness is the argmax pair (sites for the
    single-particle engine, configurations for the system engine);
    certification is one of exact_enumeration | closed_form | sampled.
    """

    bound: float
    sup_value: float
    witness: tuple | None
    certification: str
    search_stats: dict


@dataclass(frozen=True)
class CouplingRates:
    """Per-coordinate optimal plans between augmented jump measures, plus the
    total event rate of the coupled system at this configuration pair."""

    plans: tuple
    total_rate: float


class _Best:
    """Deterministic running maximum: larger value wins, ties go to the
    lexicographically smallest witness."""

    __slots__ = ("value", "witness")

    def __init__(self):
        self.value = -math.inf
        self.witness = None

    def offer(self, value: float, witness) -> None:
        if self.witness is None or value > self.value or (
            value == self.value and witness < self.witness
        ):
            self.value = value
            self.witness = witness

    def merge(self, other: "_Best") -> None:
        if other.witness is not None:
            self.offer(other.value, other.witness)


# ---------------------------------------------------------------------------
# single-particle engine
# ---------------------------------------------------------------------------


def bound_single(
    kernel,
    g: GroundMetric,
    interior: Sequence | None = None,
    n_workers: int | None = None,
) -> CurvatureReport:
    """Exact enumeration of drift/distance over ordered site pairs x != y.

    ``interior`` restricts the certified supremum to pairs inside it (used
    by truncated models, where pairs touching the truncation edge are biased
    by missing jumps); pairs touching the complement are still scanned and
    reported under ``search_stats["boundary_sup"]``.
    """
    sites = g.require_sites()
    q = _as_site_map(kernel, sites)
    interior_set = set(sites if interior is None else interior)
    unknown = interior_set - set(sites)
    if unknown:
        raise ValidationError(f"interior contains unknown sites {sorted(unknown)!r}")

    best = _Best()
    boundary = _Best()
    measures = {x: q(x) for x in sites}
    pairs = 0
    skipped = 0
    for x in sites:
        for y in sites:
            if x == y:
                continue
            dist = g.dist(x, y)
            if dist == 0.0:
                skipped += 1
                continue
            pairs += 1
            ratio = drift_exact(x, y, measures[x], measures[y], g).value / dist
            if x in interior_set and y in interior_set:
                best.offer(ratio, (x, y))
            else:
                boundary.offer(ratio, (x, y))
    if best.witness is None:
        raise ValidationError("no certified site pair with positive distance")
    stats = {
        "engine": "single",
        "pairs_examined": pairs,
        "pairs_skipped_zero_distance": skipped,
        "interior_sites": len(interior_set),
        "total_sites": len(sites),
    }
    if boundary.witness is not None:
        stats["boundary_sup"] = boundary.value
        stats["boundary_witness"] = boundary.witness
    return CurvatureReport(
        bound=-best.value,
        sup_value=best.value,
        witness=best.witness,
        certification="exact_enumeration",
        search_stats=stats,
    )


# ---------------------------------------------------------------------------
# system engine
# ---------------------------------------------------------------------------


def mean_drift(kernel: JumpKernel, cx: Config, cy: Config, g: GroundMetric,
               cache: dict | None = None) -> float:
    """(1/N) sum_i drift(x_i, y_i) for a configuration pair.

    Coordinates with x_i = y_i contribute their (possibly nonzero, for
    configuration-dependent kernels) diagonal drift terms.
    """
    n = len(cx)
    total = 0.0
    for i in range(n):
        m1 = kernel.rate(i, cx)
        m2 = kernel.rate(i, cy)
        if cache is not None:
            key = (cx[i], cy[i], m1, m2)
            hit = cache.get(key)
            if hit is None:
                hit = drift_exact(cx[i], cy[i], m1, m2, g).value
                cache[key] = hit
            total += hit
        else:
            total += drift_exact(cx[i], cy[i], m1, m2, g).value
    return total / n


def _scan_system_range(args):
    """Worker: scan ordered config pairs with flat indices in [lo, hi)."""
    kernel, g, configs, lo, hi, interior_set = args
    m = len(configs)
    cache: dict = {}
    best = _Best()
    boundary = _Best()
    pairs = 0
    skipped = 0
    for flat in range(lo, hi):
        cx = configs[flat // m]
        cy = configs[flat % m]
        if cx == cy:
            continue
        dist = config_distance(cx, cy, g)
        if dist == 0.0:
            skipped += 1
            continue
        pairs += 1
        ratio = mean_drift(kernel, cx, cy, g, cache) / dist
        if interior_set is None or (
            all(x in interior_set for x in cx) and all(y in interior_set for y in cy)
        ):
            best.offer(ratio, (cx, cy))
        else:
            boundary.offer(ratio, (cx, cy))
    return best.value, best.witness, boundary.value, boundary.witness, pairs, skipped


def bound_system(
    kernel: JumpKernel,
    g: GroundMetric,
    n_particles: int,
    strategy: str = "exhaustive",
    samples: int = 1000,
    seed: int = 0,
    pair_cap: int = DEFAULT_PAIR_CAP,
    interior: Sequence | None = None,
    n_workers: int | None = None,
) -> CurvatureReport:
    """Supremum of mean drift / distance over ordered configuration pairs.

    strategy:
      exhaustive -- all |E|^(2N) ordered pairs (refused above ``pair_cap``);
                    certified exact_enumeration
      adjacent   -- pairs differing in exactly one coordinate; cheap, and for
                    many models the sup lives there, but never certified
      random     -- ``samples`` uniform pairs with the given seed; never
                    certified, and under-estimates the supremum
    """
    import itertools

    if n_particles < 1:
        raise ValidationError("n_particles must be >= 1")
    sites = g.require_sites()
    interior_set = None if interior is None else set(interior)
    n_workers = default_workers() if n_workers is None else max(1, n_workers)

    best = _Best()
    boundary = _Best()
    pairs = 0
    skipped = 0
    stats: dict = {
        "engine": "system",
        "strategy": strategy,
        "n_particles": n_particles,
        "total_sites": len(sites),
    }

    if strategy == "exhaustive":
        total = len(sites) ** (2 * n_particles)
        if total > pair_cap:
            raise ValidationError(
                f"exhaustive enumeration would visit {total} pairs "
                f"(cap {pair_cap}); use strategy='random'"
            )
        configs = list(itertools.product(sites, repeat=n_particles))
        m = len(configs)
        chunks = _split_range(m * m, n_workers)
        jobs = [(kernel, g, configs, lo, hi, interior_set) for lo, hi in chunks]
        if n_workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=n_workers) as pool:
                results = list(pool.map(_scan_system_range, jobs))
        else:
            results = [_scan_system_range(job) for job in jobs]
        for bv, bw, ov, ow, np_, sk in results:
            if bw is not None:
                best.offer(bv, bw)
            if ow is not None:
                boundary.offer(ov, ow)
            pairs += np_
            skipped += sk
        certification = "exact_enumeration"

    elif strategy == "adjacent":
        total = len(sites) ** n_particles * n_particles * max(len(sites) - 1, 0)
        if total > pair_cap:
            raise ValidationError(
                f"adjacent enumeration would visit {total} pairs (cap {pair_cap})"
            )
        cache: dict = {}
        for cx in itertools.product(sites, repeat=n_particles):
            for i in range(n_particles):
                for y in sites:
                    if y == cx[i]:
                        continue
                    cy = cx[:i] + (y,) + cx[i + 1 :]
                    dist = config_distance(cx, cy, g)
                    if dist == 0.0:
                        skipped += 1
                        continue
                    pairs += 1
                    ratio = mean_drift(kernel, cx, cy, g, cache) / dist
                    _offer_split(best, boundary, interior_set, cx, cy, ratio)
        certification = "sampled"

    elif strategy == "random":
        rng = np.random.Generator(np.random.Philox(key=seed))
        cache = {}
        draws = 0
        while pairs + skipped < samples and draws < 100 * samples + 100:
            draws += 1
            idx = rng.integers(0, len(sites), size=2 * n_particles)
            cx = tuple(sites[k] for k in idx[:n_particles])
            cy = tuple(sites[k] for k in idx[n_particles:])
            if cx == cy:
                continue
            dist = config_distance(cx, cy, g)
            if dist == 0.0:
                skipped += 1
                continue
            pairs += 1
            ratio = mean_drift(kernel, cx, cy, g, cache) / dist
            _offer_split(best, boundary, interior_set, cx, cy, ratio)
        stats["seed"] = seed
        certification = "sampled"

    else:
        raise ValidationError(f"unknown strategy {strategy!r}")

    if best.witness is None:
        raise ValidationError("no certified configuration pair was examined")
    stats["pairs_examined"] = pairs
    stats["pairs_skipped_zero_distance"] = skipped
    if boundary.witness is not None:
        stats["boundary_sup"] = boundary.value
        stats["boundary_witness"] = boundary.witness
    return CurvatureReport(
        bound=-best.value,
        sup_value=best.value,
        witness=best.witness,
        certification=certification,
        search_stats=stats,
    )


def _offer_split(best, boundary, interior_set, cx, cy, ratio):
    if interior_set is None or (
        all(x in interior_set for x in cx) and all(y in interior_set for y in cy)
    ):
        best.offer(ratio, (cx, cy))
    else:
        boundary.offer(ratio, (cx, cy))


def _split_range(n: int, parts: int):
    parts = max(1, min(parts, n)) if n > 0 else 1
    step = (n + parts - 1) // parts
    return [(lo, min(lo + step, n)) for lo in range(0, n, step)] or [(0, 0)]


# ---------------------------------------------------------------------------
# coupled jump rates
# ---------------------------------------------------------------------------


def coupling_rates(
    kernel: JumpKernel, cx: Config, cy: Config, g: GroundMetric
) -> CouplingRates:
    """Optimal per-coordinate couplings of the two jump mechanisms.

    For coordinate i the plan couples rate_i(x) + mass_i(y) delta_{x_i} with
    rate_i(y) + mass_i(x) delta_{y_i}; sampling moves from it gives a coupled
    process whose per-coordinate distance drift is exactly the drift
    functional (cost_i - (mass_i(x) + mass_i(y)) d(x_i, y_i), averaged).
    """
    cx = check_configuration(cx, g)
    cy = check_configuration(cy, g)
    if len(cx) != len(cy):
        raise ValidationError("configuration sizes differ")
    plans = []
    for i in range(len(cx)):
        m1 = kernel.rate(i, cx)
        m2 = kernel.rate(i, cy)
        a1 = m1.add_atom(cx[i], m2.mass)
        a2 = m2.add_atom(cy[i], m1.mass)
        plans.append(optimal_plan(a1, a2, g))
    total = math.fsum(p.total_mass for p in plans)
    return CouplingRates(plans=tuple(plans), total_rate=total)
