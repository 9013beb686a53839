"""Trust-region Bayesian optimization with implicit bandit allocation.

Several local regions run in parallel, each a hyperrectangle around its own
incumbent. Per step: results are routed back to their regions, region lengths
double after enough successes and halve after enough failures (restarting
from fresh Latin-hypercube seeds when too small), local GPs are refit, and
one joint Thompson sample per region ranks all proposed candidates globally;
the lowest sampled values across regions form the next batch.

Scores are modelled in log space: the below-target penalty regime of the
KD-guided score spans orders of magnitude, which a stationary GP handles
poorly in raw units.

Every random draw comes from a generator derived from (seed, purpose, region,
counter), and GP fits are pure functions of a region's observation set, so a
serialized optimizer resumes bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .gp import GPModel, fit_gp
from .sampling import lhs_init, scrambled_sobol

ACTIVE = "active"
RESTARTING = "restarting"

# rng stream tags
_TAG_LHS = 0
_TAG_PROPOSE = 1
_TAG_FIT = 2


class DegenerateRegionError(RuntimeError):
    """The proposal rectangle collapsed; the region must restart."""


@dataclass(frozen=True)
class Observation:
    """One evaluated point and its KD-guided score (minimized)."""

    point: np.ndarray
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("observation value must be finite")


@dataclass(frozen=True)
class ProposedPoint:
    point_id: int
    region_id: int
    coords: np.ndarray


@dataclass(frozen=True)
class StepResult:
    """Outcome for one issued point; value None marks a failed evaluation."""

    point_id: int
    value: float | None


@dataclass(frozen=True)
class OptimizerConfig:
    n_init: int = 10
    n_regions: int = 3
    batch_size: int = 4
    candidates_per_proposal: int | None = None  # None: min(2000, 100 * d)
    success_tolerance: int = 2
    failure_tolerance: int = 2
    length_init: float = 0.4
    length_min: float = 0.1
    length_max: float = 0.8
    seed: int = 0
    gp_noise_floor: float = 1e-6
    gp_restarts: int = 4
    gp_max_iter: int = 50

    def __post_init__(self):
        if self.n_init < 2:
            raise ValueError("n_init must be >= 2 (the local GP needs two points)")
        if self.success_tolerance < 1 or self.failure_tolerance < 1:
            raise ValueError("tolerances must be >= 1")
        if not 0 < self.length_min < self.length_init <= self.length_max:
            raise ValueError("require 0 < length_min < length_init <= length_max")
        if self.n_regions < 1 or self.batch_size < 1:
            raise ValueError("n_regions and batch_size must be >= 1")

    def candidates(self, d: int) -> int:
        if self.candidates_per_proposal is not None:
            return self.candidates_per_proposal
        return min(2000, 100 * d)


@dataclass
class TrustRegionState:
    """One local search region and its success/failure state machine."""

    region_id: int
    length: float
    length_init: float
    length_min: float
    length_max: float
    success_tolerance: int = 2
    failure_tolerance: int = 2
    center: np.ndarray | None = None
    best_value: float = math.inf
    success_count: int = 0
    failure_count: int = 0
    status: str = RESTARTING
    observations: list[Observation] = field(default_factory=list)
    init_queue: list[np.ndarray] = field(default_factory=list)
    init_pending: int = 0
    proposal_count: int = 0
    restart_count: int = 0


def gp_fit(observations: list[Observation], noise_floor: float = 1e-8,
           restarts: int = 4, max_iter: int = 50,
           rng: np.random.Generator | None = None, fix_noise: bool = False) -> GPModel:
    """Fit the local surrogate to raw observations (no transform applied)."""
    if len(observations) < 2:
        raise ValueError("gp_fit requires at least 2 observations")
    x = np.stack([np.asarray(o.point, dtype=float) for o in observations])
    y = np.array([o.value for o in observations], dtype=float)
    return fit_gp(x, y, noise_floor=noise_floor, restarts=restarts, max_iter=max_iter,
                  rng=rng, fix_noise=fix_noise)


def region_rectangle(state: TrustRegionState, lengthscales: np.ndarray
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Proposal box: side lengths follow the ARD lengthscales, volume ~ L^d."""
    ls = np.asarray(lengthscales, dtype=float)
    weights = ls / np.exp(np.mean(np.log(ls)))
    half = 0.5 * state.length * weights
    lower = np.clip(state.center - half, 0.0, 1.0)
    upper = np.clip(state.center + half, 0.0, 1.0)
    return lower, upper


def propose_candidates(state: TrustRegionState, gp: GPModel, n_candidates: int,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Sobol candidates in the region box plus one joint Thompson sample.

    Each candidate perturbs only a random subset of coordinates (probability
    min(1, 20/d) per dimension, at least one); the rest copy the center.
    Returns (candidates, sampled objective values).
    """
    if state.center is None:
        raise RuntimeError(f"region {state.region_id} has no incumbent center")
    d = len(state.center)
    lower, upper = region_rectangle(state, gp.lengthscales)
    if np.all(upper - lower < 1e-9):
        raise DegenerateRegionError(f"region {state.region_id} rectangle collapsed")

    unit = scrambled_sobol(d, n_candidates, rng)
    candidates = lower + unit * (upper - lower)

    prob = min(1.0, 20.0 / d)
    mask = rng.random((n_candidates, d)) < prob
    rescue = ~mask.any(axis=1)
    if rescue.any():
        cols = rng.integers(0, d, size=int(rescue.sum()))
        mask[np.nonzero(rescue)[0], cols] = True
    candidates = np.where(mask, candidates, state.center)

    sampled = gp.sample_joint(candidates, rng)
    return candidates, sampled


def tr_propose(state: TrustRegionState, gp: GPModel, cfg: OptimizerConfig,
               rng_seed) -> np.ndarray:
    """Single-region proposal: the batch_size argmin points of one joint sample."""
    rng = np.random.default_rng(rng_seed)
    candidates, sampled = propose_candidates(state, gp, cfg.candidates(len(state.center)), rng)
    order = np.argsort(sampled, kind="stable")[:cfg.batch_size]
    return candidates[order]


def tr_update(state: TrustRegionState, batch_best_value: float,
              batch_best_point: np.ndarray | None = None) -> TrustRegionState:
    """Advance the success/failure state machine after one evaluated batch.

    A batch counts as a success only when it improves on the region incumbent;
    every other outcome is a failure. Enough consecutive successes double the
    length (capped), enough failures halve it; falling below length_min flags
    the region for a from-scratch restart.
    """
    if state.status != ACTIVE:
        raise ValueError(f"tr_update on non-active region {state.region_id}")
    new = replace(state)
    if batch_best_value < state.best_value:
        new.best_value = batch_best_value
        if batch_best_point is not None:
            new.center = np.asarray(batch_best_point, dtype=float)
        new.success_count = state.success_count + 1
        new.failure_count = 0
        if new.success_count >= new.success_tolerance:
            new.length = min(2.0 * new.length, new.length_max)
            new.success_count = 0
    else:
        new.failure_count = state.failure_count + 1
        new.success_count = 0
        if new.failure_count >= new.failure_tolerance:
            new.length = new.length / 2.0
            new.failure_count = 0
    if new.length < new.length_min:
        new.status = RESTARTING
    return new


class TurboOptimizer:
    """Batch ask/tell state machine over multiple trust regions.

    Not thread-safe; advance it with step() once per completed batch. The
    first call must pass an empty result list and returns the initial
    Latin-hypercube batch.
    """

    def __init__(self, config: OptimizerConfig, d: int):
        if d < 1:
            raise ValueError("dimension must be >= 1")
        self.config = config
        self.d = d
        self.next_id = 0
        self.pending: dict[int, tuple[int, np.ndarray]] = {}
        self.regions = [self._fresh_region(i, restart_count=0)
                        for i in range(config.n_regions)]
        self._gp_cache: dict[int, tuple[int, GPModel]] = {}
        self._batch_points: dict[int, list[tuple[np.ndarray, float]]] = {}

    # -- rng streams --------------------------------------------------------

    def _rng(self, tag: int, region_id: int, counter: int) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, tag, region_id, counter])

    # -- region lifecycle ----------------------------------------------------

    def _fresh_region(self, region_id: int, restart_count: int) -> TrustRegionState:
        cfg = self.config
        state = TrustRegionState(
            region_id=region_id, length=cfg.length_init, length_init=cfg.length_init,
            length_min=cfg.length_min, length_max=cfg.length_max,
            success_tolerance=cfg.success_tolerance, failure_tolerance=cfg.failure_tolerance,
            restart_count=restart_count,
        )
        seeds = lhs_init(cfg.n_init, self.d, [cfg.seed, _TAG_LHS, region_id, restart_count])
        state.init_queue = [seeds[i] for i in range(cfg.n_init)]
        return state

    def _restart_region(self, region_id: int) -> None:
        old = self.regions[region_id]
        self.regions[region_id] = self._fresh_region(region_id, old.restart_count + 1)
        self._gp_cache.pop(region_id, None)

    def _activate_if_ready(self, region_id: int) -> None:
        state = self.regions[region_id]
        if state.status != RESTARTING or state.init_queue or state.init_pending > 0:
            return
        if len(state.observations) < 2:
            # Every seed evaluation failed; try a fresh set of seeds.
            self._restart_region(region_id)
            return
        best = min(range(len(state.observations)), key=lambda i: state.observations[i].value)
        state.status = ACTIVE
        state.center = state.observations[best].point.copy()
        state.best_value = state.observations[best].value
        state.length = state.length_init
        state.success_count = 0
        state.failure_count = 0

    def _region_gp(self, state: TrustRegionState) -> GPModel:
        n = len(state.observations)
        cached = self._gp_cache.get(state.region_id)
        if cached is not None and cached[0] == n:
            return cached[1]
        x = np.stack([o.point for o in state.observations])
        y = np.log(np.array([o.value for o in state.observations]))
        gp = fit_gp(x, y, noise_floor=self.config.gp_noise_floor,
                    restarts=self.config.gp_restarts, max_iter=self.config.gp_max_iter,
                    rng=self._rng(_TAG_FIT, state.region_id, n))
        self._gp_cache[state.region_id] = (n, gp)
        return gp

    # -- the step ------------------------------------------------------------

    def step(self, new_results: list[StepResult]) -> list[ProposedPoint]:
        """Consume results for the previous batch, return the next batch."""
        for region_id in sorted(self._route(new_results)):
            self._update_region(region_id)
        # Threaded BLAS only hurts at local-model sizes.
        with threadpool_limits(limits=1):
            return self._next_batch()

    def _route(self, new_results: list[StepResult]) -> set[int]:
        touched: set[int] = set()
        self._batch_points = {}
        for res in new_results:
            if res.point_id not in self.pending:
                raise KeyError(f"result for unknown point id {res.point_id}")
            region_id, point = self.pending.pop(res.point_id)
            touched.add(region_id)
            state = self.regions[region_id]
            if state.status == RESTARTING:
                state.init_pending -= 1
            if res.value is not None:
                state.observations.append(Observation(point=point, value=float(res.value)))
                self._batch_points.setdefault(region_id, []).append((point, float(res.value)))
        return touched

    def _update_region(self, region_id: int) -> None:
        state = self.regions[region_id]
        if state.status == RESTARTING:
            self._activate_if_ready(region_id)
            return
        ok = self._batch_points.get(region_id, [])
        if ok:
            best_point, best_value = min(ok, key=lambda pv: pv[1])
        else:
            best_point, best_value = None, math.inf
        updated = tr_update(state, best_value, best_point)
        self.regions[region_id] = updated
        if updated.status == RESTARTING:
            self._restart_region(region_id)

    def _next_batch(self) -> list[ProposedPoint]:
        batch: list[ProposedPoint] = []

        # Regions that are (re)initializing get their seed points through first.
        while len(batch) < self.config.batch_size:
            queued = [r for r in self.regions if r.status == RESTARTING and r.init_queue]
            if not queued:
                break
            for state in queued:
                if len(batch) >= self.config.batch_size:
                    break
                point = state.init_queue.pop(0)
                state.init_pending += 1
                batch.append(self._issue(state.region_id, point))

        want = self.config.batch_size - len(batch)
        if want > 0:
            pool: list[tuple[float, int, int, np.ndarray]] = []
            for state in self.regions:
                if state.status != ACTIVE:
                    continue
                gp = self._region_gp(state)
                rng = self._rng(_TAG_PROPOSE, state.region_id, state.proposal_count)
                state.proposal_count += 1
                try:
                    cands, sampled = propose_candidates(
                        state, gp, self.config.candidates(self.d), rng)
                except DegenerateRegionError:
                    self._restart_region(state.region_id)
                    continue
                pool.extend((float(sampled[i]), state.region_id, i, cands[i])
                            for i in range(len(cands)))
            pool.sort(key=lambda item: (item[0], item[1], item[2]))
            for value, region_id, _, point in pool[:want]:
                batch.append(self._issue(region_id, point))
        return batch

    def _issue(self, region_id: int, point: np.ndarray) -> ProposedPoint:
        proposal = ProposedPoint(point_id=self.next_id, region_id=region_id,
                                 coords=np.asarray(point, dtype=float))
        self.pending[proposal.point_id] = (region_id, proposal.coords)
        self.next_id += 1
        return proposal

    # -- checkpointing --------------------------------------------------------

    def to_dict(self) -> dict:
        def region_dict(s: TrustRegionState) -> dict:
            return {
                "region_id": s.region_id,
                "length": s.length,
                "center": None if s.center is None else [float(v) for v in s.center],
                "best_value": s.best_value if math.isfinite(s.best_value) else None,
                "success_count": s.success_count,
                "failure_count": s.failure_count,
                "status": s.status,
                "observations": [
                    {"point": [float(v) for v in o.point], "value": o.value}
                    for o in s.observations
                ],
                "init_queue": [[float(v) for v in p] for p in s.init_queue],
                "init_pending": s.init_pending,
                "proposal_count": s.proposal_count,
                "restart_count": s.restart_count,
            }

        return {
            "d": self.d,
            "next_id": self.next_id,
            "pending": [
                {"point_id": pid, "region_id": rid, "point": [float(v) for v in pt]}
                for pid, (rid, pt) in sorted(self.pending.items())
            ],
            "regions": [region_dict(s) for s in self.regions],
        }

    @classmethod
    def from_dict(cls, data: dict, config: OptimizerConfig) -> "TurboOptimizer":
        opt = cls(config, data["d"])
        opt.next_id = data["next_id"]
        opt.pending = {
            entry["point_id"]: (entry["region_id"], np.asarray(entry["point"], dtype=float))
            for entry in data["pending"]
        }
        opt.regions = []
        for rd in data["regions"]:
            state = TrustRegionState(
                region_id=rd["region_id"], length=rd["length"],
                length_init=config.length_init, length_min=config.length_min,
                length_max=config.length_max, success_tolerance=config.success_tolerance,
                failure_tolerance=config.failure_tolerance,
                center=None if rd["center"] is None else np.asarray(rd["center"], dtype=float),
                best_value=math.inf if rd["best_value"] is None else rd["best_value"],
                success_count=rd["success_count"], failure_count=rd["failure_count"],
                status=rd["status"],
                observations=[Observation(point=np.asarray(o["point"], dtype=float),
                                          value=o["value"])
                              for o in rd["observations"]],
                init_queue=[np.asarray(p, dtype=float) for p in rd["init_queue"]],
                init_pending=rd["init_pending"],
                proposal_count=rd["proposal_count"], restart_count=rd["restart_count"],
            )
            opt.regions.append(state)
        return opt
