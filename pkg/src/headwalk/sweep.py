"""Randomised control-gain sweeps: viability and rough-ground robustness.

Seven gains shared by both walkers are drawn uniformly in fixed ranges. A
sample is viable for a model when the walker, started at the baseline limit
cycle, completes 100 flat steps. Samples viable for both models are then
walked on rough ground and their MFPTs compared.
"""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .body import MODEL_A, MODEL_B, BodyParams, ControlGains, WalkerState
from .dynamics import IntegratorConfig
from .gait import LimitCycle, LimitKernel, NoViableCycle, find_limit_cycle, run_section_steps
from .terrain import EpisodeRunner, MfptReport

# (min, max) of each randomised gain
GAIN_RANGES = {
    "toe_stiffness": (12500.0, 150000.0),
    "toe_damping": (500.0, 6000.0),
    "impulse_velocity": (0.25, 3.0),
    "hip_p": (2.5, 30.0),
    "hip_d": (0.375, 4.5),
    "trunk_p": (75.0, 600.0),
    "trunk_d": (37.5, 300.0),
}
IMPULSE_SPLIT = 2.0
VIABILITY_STEPS = 100
KERNEL_FROM = 50
DEFAULT_SIGMA = 0.03
DEFAULT_EPISODES = 200
DEFAULT_STEP_BUDGET = 20000
REDERIVE_STEPS = 200

CSV_COLUMNS = ("index", "ktoe_p", "ktoe_d", "impulse_v", "khip_p", "khip_d", "kt_p", "kt_d",
               "viable_a", "viable_b", "mfpt_a", "mfpt_b", "group")


@dataclass(frozen=True)
class ParameterSample:
    index: int
    seed: int
    gains: ControlGains

    @property
    def group(self) -> str:
        """"low" below the impulse split velocity, "high" otherwise."""
        return "low" if self.gains.impulse_velocity < IMPULSE_SPLIT else "high"

    def values(self) -> list[float]:
        return [getattr(self.gains, k) for k in GAIN_RANGES]


def sample_parameters(seed: int, index: int,
                      base: ControlGains = ControlGains()) -> ParameterSample:
    """Uniform draw of the seven shared gains, fixed by (seed, index).

    The neck and head gains and the hip reference angle keep their values
    from ``base``.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    draws = {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in GAIN_RANGES.items()}
    return ParameterSample(index, seed, replace(base, **draws))


@dataclass
class ViabilityResult:
    """Outcome of the flat-ground viability run.

    ``sections`` holds the pre-impact states of the completed steps and
    ``reason`` the stop reason ("ok" when viable).
    """

    viable: bool
    reason: str
    sections: np.ndarray

    def kernel(self, start: int = KERNEL_FROM) -> LimitKernel:
        """Limit kernel estimated from the settled part of the run."""
        return LimitKernel.from_samples(self.sections[start - 1:])

    @property
    def final_state(self) -> np.ndarray:
        return self.sections[-1]


def viability_test(gains: ControlGains, model, start: WalkerState,
                   params: BodyParams = BodyParams(),
                   integrator: IntegratorConfig = IntegratorConfig(),
                   steps: int = VIABILITY_STEPS) -> ViabilityResult:
    """Walk ``steps`` flat steps from ``start``; viable if no failure occurs."""
    xi, reason = run_section_steps(start, model, np.zeros(steps), params, gains, integrator)
    return ViabilityResult(reason == "ok" and len(xi) == steps, reason, xi)


def robustness_test(gains: ControlGains, model, viability: ViabilityResult,
                    sigma: float = DEFAULT_SIGMA, n_samples: int = DEFAULT_EPISODES,
                    seed: int = 0, params: BodyParams = BodyParams(),
                    integrator: IntegratorConfig = IntegratorConfig(),
                    step_budget: int = DEFAULT_STEP_BUDGET) -> MfptReport:
    """MFPT on rough ground, continuing from the end of the viability run.

    Episodes start at the last flat pre-impact state; the kernel comes from
    the flat steps after ``KERNEL_FROM``. At most ``step_budget`` steps are
    walked over all episodes; an episode cut by the budget counts as capped.
    """
    if not viability.viable:
        raise ValueError("robustness needs a viable walker")
    runner = EpisodeRunner(model, viability.kernel(), viability.final_state, sigma, seed,
                           params, gains, integrator, step_budget)
    return runner.run(0, n_samples, step_budget=step_budget).report(sigma)


@dataclass
class SweepRecord:
    sample: ParameterSample
    viable_a: bool
    viable_b: bool
    reason_a: str = "ok"
    reason_b: str = "ok"
    report_a: MfptReport | None = None
    report_b: MfptReport | None = None

    @property
    def group(self) -> str:
        return self.sample.group

    @property
    def mfpt_a(self) -> float:
        return self.report_a.mfpt if self.report_a else float("nan")

    @property
    def mfpt_b(self) -> float:
        return self.report_b.mfpt if self.report_b else float("nan")

    @property
    def cell(self) -> str:
        return {(True, True): "both", (False, True): "b_only", (True, False): "a_only",
                (False, False): "neither"}[(self.viable_a, self.viable_b)]

    def row(self) -> list:
        return [self.sample.index, *self.sample.values(), int(self.viable_a),
                int(self.viable_b), self.mfpt_a, self.mfpt_b, self.group]


@dataclass
class SweepSetup:
    """Shared inputs of a sweep: start states and settings.

    With ``rederive_cycle`` each sample starts from its own limit cycle,
    searched from the baseline fixed point, instead of the baseline one.
    """

    starts: dict
    params: BodyParams = BodyParams()
    integrator: IntegratorConfig = IntegratorConfig()
    sigma: float = DEFAULT_SIGMA
    episodes: int = DEFAULT_EPISODES
    step_budget: int = DEFAULT_STEP_BUDGET
    seed: int = 0
    base: ControlGains = field(default_factory=ControlGains)
    rederive_cycle: bool = False


def baseline_starts(params: BodyParams = BodyParams(), gains: ControlGains = ControlGains(),
                    integrator: IntegratorConfig = IntegratorConfig(),
                    seed: int = 0) -> dict:
    """Baseline limit-cycle fixed points of both models."""
    out = {}
    for model in (MODEL_A, MODEL_B):
        cycle: LimitCycle = find_limit_cycle(model, params, gains, integrator=integrator,
                                             seed=seed)
        out[model] = cycle.fixed_state
    return out


def sample_start(setup: SweepSetup, model, gains: ControlGains) -> WalkerState | None:
    """Start state of a sample: the baseline fixed point, or with ``rederive_cycle``
    the sample's own cycle found from it (None when that search fails)."""
    if not setup.rederive_cycle:
        return setup.starts[model]
    try:
        cycle = find_limit_cycle(model, setup.params, gains, initial_states=[setup.starts[model]],
                                 n_steps=REDERIVE_STEPS, record_from=REDERIVE_STEPS * 4 // 5,
                                 integrator=setup.integrator)
    except NoViableCycle:
        return None
    return cycle.fixed_state


def _viability(setup: SweepSetup, index: int):
    sample = sample_parameters(setup.seed, index, setup.base)
    res = {}
    for m in (MODEL_A, MODEL_B):
        start = sample_start(setup, m, sample.gains)
        if start is None:
            res[m] = ViabilityResult(False, "no viable cycle", np.empty((0, 12)))
        else:
            res[m] = viability_test(sample.gains, m, start, setup.params, setup.integrator)
    return sample, res


def _viability_block(args):
    setup, indices = args
    return [(s, {m.value: (r.viable, r.reason) for m, r in res.items()})
            for s, res in (_viability(setup, i) for i in indices)]


def _robustness(args):
    setup, index = args
    sample, res = _viability(setup, index)
    return index, [robustness_test(sample.gains, m, res[m], setup.sigma, setup.episodes,
                                   setup.seed + 1 + index, setup.params, setup.integrator,
                                   setup.step_budget) for m in (MODEL_A, MODEL_B)]


def run_sweep(n_samples: int = 1000, n_promoted: int = 100, setup: SweepSetup | None = None,
              jobs: int = 1, progress=None) -> list[SweepRecord]:
    """Viability for ``n_samples`` draws, then MFPTs for the first ``n_promoted``
    samples (by index) viable for both models.

    ``progress`` is called with a short message after each stage.
    """
    setup = setup or SweepSetup(baseline_starts())
    say = progress or (lambda msg: None)
    t0 = time.monotonic()
    records = []
    chunk = max(1, n_samples // max(1, 4 * jobs))
    blocks = [(setup, range(s, min(n_samples, s + chunk))) for s in range(0, n_samples, chunk)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            parts = list(pool.map(_viability_block, blocks))
    else:
        parts = [_viability_block(b) for b in blocks]
    for part in parts:
        for sample, res in part:
            (va, ra), (vb, rb) = res["a"], res["b"]
            records.append(SweepRecord(sample, va, vb, ra, rb))
    say(f"viability: {n_samples} samples in {time.monotonic() - t0:.0f} s")
    promoted = [r.sample.index for r in records if r.viable_a and r.viable_b][:n_promoted]
    tasks = [(setup, i) for i in promoted]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_robustness, tasks))
    else:
        results = []
        for k, task in enumerate(tasks):
            results.append(_robustness(task))
            say(f"robustness: {k + 1}/{len(tasks)} after {time.monotonic() - t0:.0f} s")
    for index, (rep_a, rep_b) in results:
        records[index].report_a, records[index].report_b = rep_a, rep_b
    return records


def bootstrap_lower_bound(flags, n_boot: int = 10000, seed: int = 0,
                          confidence: float = 0.95) -> float:
    """One-sided bootstrap lower confidence bound of a proportion."""
    flags = np.asarray(flags, dtype=float)
    if flags.size == 0:
        return float("nan")
    rng = np.random.default_rng(seed)
    means = rng.choice(flags, size=(n_boot, flags.size), replace=True).mean(axis=1)
    return float(np.quantile(means, 1.0 - confidence))


def _cells(records) -> dict:
    counts = {"neither": 0, "both": 0, "b_only": 0, "a_only": 0}
    for r in records:
        counts[r.cell] += 1
    total = len(records)
    counts["total"] = total
    for k in ("neither", "both", "b_only", "a_only"):
        counts[f"{k}_pct"] = 100.0 * counts[k] / total if total else 0.0
    return counts


def _mfpt_summary(records, n_boot: int, seed: int) -> dict:
    pairs = [(r.mfpt_a, r.mfpt_b) for r in records if r.report_a and r.report_b]
    if not pairs:
        return {"compared": 0}
    a, b = np.array(pairs).T
    wins, losses = b > a, a > b
    out = {
        "compared": len(pairs),
        "b_better": int(wins.sum()),
        "a_better": int(losses.sum()),
        "ties": int((~wins & ~losses).sum()),
        "b_better_fraction": float(wins.mean()),
        "b_better_lower95": bootstrap_lower_bound(wins, n_boot, seed),
        "a_better_lower95": bootstrap_lower_bound(losses, n_boot, seed),
        "mean_mfpt_a": float(a.mean()),
        "mean_mfpt_b": float(b.mean()),
        "mean_gain_when_b_better": float((b - a)[wins].mean()) if wins.any() else 0.0,
        "mean_gain_when_a_better": float((a - b)[losses].mean()) if losses.any() else 0.0,
        "unbounded_a": sum(r.report_a.unbounded for r in records if r.report_a),
        "unbounded_b": sum(r.report_b.unbounded for r in records if r.report_b),
    }
    return out


def aggregate(records: list[SweepRecord], n_boot: int = 10000, seed: int = 0) -> dict:
    """Viability cells and MFPT comparison, overall and per impulse group.

    An MFPT without any observed fall enters the comparison at its lower
    bound.
    """
    out = {"all": {**_cells(records), **_mfpt_summary(records, n_boot, seed)}}
    for g in ("low", "high"):
        sub = [r for r in records if r.group == g]
        out[g] = {**_cells(sub), **_mfpt_summary(sub, n_boot, seed)}
    return out
