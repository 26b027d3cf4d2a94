"""Rough ground and mean first passage time (MFPT) estimation.

An episode starts at the limit-cycle fixed point and walks on ground whose
slope is redrawn at every step from N(0, sigma^2). It ends when the walker
falls or when the pre-impact state re-enters the limit kernel. Treating the
returns as renewals, the expected number of steps before a fall is

    mfpt = r * mean_return_steps + mean_fall_steps,   r = (1 - p_fall) / p_fall.
"""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _core
from .body import BodyParams, ControlGains, ModelKind
from .dynamics import IntegratorConfig, SimulationError
from .gait import LimitCycle, LimitKernel, find_limit_cycle

DEFAULT_STEP_CAP = 10**6
_CHUNK = 512

RETURNED, FELL, CAPPED = "returned", "fell", "capped"


@dataclass(frozen=True)
class TerrainParams:
    """Ground texture: per-step slope standard deviation (rad) and RNG seed."""

    slope_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.slope_std >= 0:
            raise ValueError("slope_std must be non-negative")


def sample_slope(rng: np.random.Generator, sigma: float) -> float:
    """One slope drawn from N(0, sigma^2); exactly 0 when sigma is 0."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    return float(rng.normal(0.0, sigma)) if sigma > 0 else 0.0


def episode_rng(seed: int, episode: int) -> np.random.Generator:
    """Independent stream for one episode, fixed by (seed, episode)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(episode,)))


def _slopes(rng: np.random.Generator, sigma: float, n: int) -> np.ndarray:
    return rng.normal(0.0, sigma, n) if sigma > 0 else np.zeros(n)


@dataclass
class MfptAccumulator:
    """Episode counts and step totals, split by outcome."""

    n_l: int = 0
    n_f: int = 0
    m_l: int = 0
    m_f: int = 0
    n_capped: int = 0
    m_capped: int = 0

    def add(self, outcome: str, steps: int) -> None:
        if outcome == RETURNED:
            self.n_l += 1
            self.m_l += steps
        elif outcome == FELL:
            self.n_f += 1
            self.m_f += steps
        elif outcome == CAPPED:
            self.n_capped += 1
            self.m_capped += steps
        else:
            raise ValueError(f"unknown outcome {outcome!r}")

    def merge(self, other: "MfptAccumulator") -> "MfptAccumulator":
        return MfptAccumulator(*(a + b for a, b in zip(asdict(self).values(),
                                                       asdict(other).values())))

    @property
    def episodes(self) -> int:
        return self.n_l + self.n_f + self.n_capped

    def report(self, sigma: float = float("nan")) -> "MfptReport":
        """Turn the counts into an MFPT estimate.

        Without any fall the estimate is unbounded; ``mfpt`` is then the lower
        bound given by all steps walked (returns plus capped episodes) and
        ``unbounded`` is set.
        """
        n_l, n_f = self.n_l, self.n_f
        mean_l = self.m_l / n_l if n_l else float("nan")
        mean_f = self.m_f / n_f if n_f else float("nan")
        if n_l + n_f + self.n_capped == 0:
            return MfptReport(sigma, float("nan"), float("nan"), mean_l, mean_f, 0, False, 0)
        if n_f == 0:
            return MfptReport(sigma, float(self.m_l + self.m_capped), 0.0, mean_l, mean_f,
                              n_l, True, self.n_capped)
        p_f = n_f / (n_l + n_f)
        r = (1.0 - p_f) / p_f
        mfpt = mean_f + (r * mean_l if n_l else 0.0)
        return MfptReport(sigma, mfpt, p_f, mean_l, mean_f, n_l + n_f, False, self.n_capped)


@dataclass(frozen=True)
class MfptReport:
    """MFPT estimate in steps.

    ``samples`` counts completed episodes (returns plus falls); episodes that
    hit the step cap are counted in ``capped`` only.
    """

    sigma: float
    mfpt: float
    p_fall: float
    mean_return_steps: float
    mean_fall_steps: float
    samples: int
    unbounded: bool
    capped: int = 0
    budget_exhausted: bool = False

    CSV_COLUMNS = ("sigma", "mfpt", "p_fall", "mean_return_steps", "mean_fall_steps",
                   "samples", "unbounded")

    def row(self) -> list:
        return [self.sigma, self.mfpt, self.p_fall, self.mean_return_steps,
                self.mean_fall_steps, self.samples, int(self.unbounded)]


@dataclass
class EpisodeRunner:
    """Everything needed to run walking episodes on rough ground."""

    model: ModelKind
    kernel: LimitKernel
    start: np.ndarray
    sigma: float
    seed: int = 0
    params: BodyParams = BodyParams()
    gains: ControlGains = ControlGains()
    integrator: IntegratorConfig = IntegratorConfig()
    step_cap: int = DEFAULT_STEP_CAP
    _arrays: tuple = field(default=None, repr=False)

    def __post_init__(self):
        self.model = ModelKind.parse(self.model)
        self.start = np.ascontiguousarray(self.start, dtype=np.float64)
        self._arrays = (self.params.as_array(), self.gains.as_array(),
                        self.integrator.as_array())

    def episode(self, index: int, cap: int | None = None) -> tuple[str, int]:
        """Run one episode; returns (outcome, steps).

        A fall counts the failing step, so a walker that falls during its
        first step scores 1. Any failure of the step (fall, stall, divergence,
        impulse singularity) ends the episode as a fall. ``cap`` lowers the
        step cap for this episode.
        """
        cap = self.step_cap if cap is None else min(cap, self.step_cap)
        body, gains, cfg = self._arrays
        n = 3 + (3 if self.model.index else 1)
        q, qd, toe = np.empty(n), np.empty(n), np.zeros(2)
        if not _core.from_section(self.model.index, self.start, body, q, qd):
            raise SimulationError("inconsistent state", "cannot rebuild the start state")
        rng = episode_rng(self.seed, index)
        out = np.empty((_CHUNK, 12))
        eta, total = float(self.start[3]), 0
        k = self.kernel
        while total < cap:
            chunk = _slopes(rng, self.sigma, min(_CHUNK, cap - total))
            done, code = _core.run_steps(self.model.index, body, gains, cfg, q, qd, toe, eta,
                                         chunk, k.center, k.metric, k.threshold, True, out)
            if code == _core.ST_RETURNED:
                return RETURNED, total + done
            if code != _core.ST_OK:
                return FELL, total + done + 1
            total += done
            eta = float(chunk[-1])
        return CAPPED, total

    def run(self, first: int, count: int, deadline: float | None = None,
            step_budget: int | None = None) -> MfptAccumulator:
        """Episodes ``first`` to ``first + count - 1``.

        No new episode starts after ``deadline`` (monotonic clock) or once
        ``step_budget`` steps have been walked in total; an episode that
        reaches the remaining budget ends as capped.
        """
        acc = MfptAccumulator()
        spent = 0
        for i in range(first, first + count):
            if deadline is not None and time.monotonic() > deadline:
                break
            cap = None
            if step_budget is not None:
                if spent >= step_budget:
                    break
                cap = step_budget - spent
            outcome, steps = self.episode(i, cap)
            acc.add(outcome, steps)
            spent += steps
        return acc


def _run_block(args):
    runner, first, count, deadline_left = args
    deadline = None if deadline_left is None else time.monotonic() + deadline_left
    return runner.run(first, count, deadline)


def estimate_mfpt(model, cycle: LimitCycle, kernel: LimitKernel, terrain: TerrainParams,
                  n_samples: int, params: BodyParams = BodyParams(),
                  gains: ControlGains = ControlGains(),
                  integrator: IntegratorConfig = IntegratorConfig(),
                  step_cap: int = DEFAULT_STEP_CAP, jobs: int = 1,
                  time_budget: float | None = None) -> MfptReport:
    """Estimate the MFPT from ``n_samples`` episodes started at the fixed point.

    Episode ``i`` draws its slopes from ``episode_rng(terrain.seed, i)``, so
    the result does not depend on ``jobs``. With ``time_budget`` (seconds)
    episodes stop being started once it is spent; the report then covers the
    completed ones and has ``budget_exhausted`` set.
    """
    runner = EpisodeRunner(model, kernel, cycle.fixed_state.constrained(model).as_array(),
                           terrain.slope_std, terrain.seed, params, gains, integrator, step_cap)
    if jobs <= 1:
        deadline = None if time_budget is None else time.monotonic() + time_budget
        acc = runner.run(0, n_samples, deadline)
    else:
        size = max(1, -(-n_samples // (4 * jobs)))
        blocks = [(runner, s, min(size, n_samples - s), time_budget)
                  for s in range(0, n_samples, size)]
        acc = MfptAccumulator()
        with ProcessPoolExecutor(jobs) as pool:
            for part in pool.map(_run_block, blocks):
                acc = acc.merge(part)
    rep = acc.report(terrain.slope_std)
    if acc.episodes < n_samples:
        rep = MfptReport(**{**asdict(rep), "budget_exhausted": True})
    return rep


def mfpt_curve(model, sigmas, n_samples: int, params: BodyParams = BodyParams(),
               gains: ControlGains = ControlGains(),
               integrator: IntegratorConfig = IntegratorConfig(), seed: int = 0,
               cycle: LimitCycle | None = None, step_cap: int = DEFAULT_STEP_CAP,
               jobs: int = 1) -> list[MfptReport]:
    """MFPT at each slope deviation in ``sigmas`` with one shared limit cycle."""
    model = ModelKind.parse(model)
    cycle = cycle or find_limit_cycle(model, params, gains, integrator=integrator, seed=seed)
    kernel = LimitKernel.from_cycle(cycle)
    return [estimate_mfpt(model, cycle, kernel, TerrainParams(s, seed), n_samples, params,
                          gains, integrator, step_cap, jobs) for s in sigmas]


class AbsorbingChain:
    """Finite Markov chain with one absorbing exit, for checking the estimator.

    ``Q`` holds transition probabilities among the transient states; the
    remaining mass of each row goes to absorption ("fall"). Episodes start in
    ``start``, and re-entering ``start`` counts as a return to the kernel.
    """

    def __init__(self, Q, start: int = 0):
        self.Q = np.asarray(Q, dtype=np.float64)
        if self.Q.ndim != 2 or self.Q.shape[0] != self.Q.shape[1]:
            raise ValueError("Q must be square")
        if (self.Q < 0).any() or (self.Q.sum(axis=1) > 1 + 1e-12).any():
            raise ValueError("rows of Q must be sub-stochastic")
        self.start = start
        exit_p = 1.0 - self.Q.sum(axis=1)
        self._cum = np.cumsum(np.column_stack([self.Q, exit_p]), axis=1)

    def mean_absorption_time(self) -> float:
        """Expected steps to absorption from ``start``: ((I - Q)^-1 1)[start]."""
        k = self.Q.shape[0]
        return float(np.linalg.solve(np.eye(k) - self.Q, np.ones(k))[self.start])

    def episode(self, rng: np.random.Generator) -> tuple[str, int]:
        s, steps, k = self.start, 0, self.Q.shape[0]
        while True:
            steps += 1
            s = int(np.searchsorted(self._cum[s], rng.random(), side="right"))
            if s >= k:
                return FELL, steps
            if s == self.start:
                return RETURNED, steps

    def estimate(self, n_samples: int, seed: int = 0) -> MfptReport:
        acc = MfptAccumulator()
        rng = np.random.default_rng(seed)
        for _ in range(n_samples):
            acc.add(*self.episode(rng))
        return acc.report()
