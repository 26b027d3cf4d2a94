import numpy as np
import pytest

from headwalk.body import MODEL_A, REFERENCE_STATES, ControlGains
from headwalk.gait import LimitKernel, find_limit_cycle
from headwalk.terrain import (CAPPED, FELL, RETURNED, AbsorbingChain, EpisodeRunner,
                              MfptAccumulator, TerrainParams, episode_rng, estimate_mfpt,
                              sample_slope)

ZERO = ControlGains(*([0.0] * 12))


def test_slope_statistics():
    rng = np.random.default_rng(0)
    draws = np.array([sample_slope(rng, 0.03) for _ in range(100_000)])
    assert 0.029 <= draws.std() <= 0.031
    assert abs(draws.mean()) < 1e-3
    assert sample_slope(rng, 0.0) == 0.0
    with pytest.raises(ValueError):
        sample_slope(rng, -0.1)
    with pytest.raises(ValueError):
        TerrainParams(-0.1)


def test_episode_streams_are_reproducible_and_distinct():
    a = episode_rng(7, 3).normal(size=5)
    assert np.array_equal(a, episode_rng(7, 3).normal(size=5))
    assert not np.array_equal(a, episode_rng(7, 4).normal(size=5))
    assert not np.array_equal(a, episode_rng(8, 3).normal(size=5))


def test_renewal_formula():
    acc = MfptAccumulator()
    for outcome, steps in [(RETURNED, 1), (RETURNED, 2), (RETURNED, 3), (FELL, 4)]:
        acc.add(outcome, steps)
    rep = acc.report()
    # p_fall = 1/4, r = 3, mean return 2, mean fall 4
    assert rep.p_fall == 0.25
    assert rep.mfpt == pytest.approx(4 + 3 * 2)
    assert rep.samples == 4 and not rep.unbounded


def test_no_falls_gives_lower_bound():
    acc = MfptAccumulator()
    acc.add(RETURNED, 5)
    acc.add(RETURNED, 7)
    acc.add(CAPPED, 100)
    rep = acc.report()
    assert rep.unbounded and rep.mfpt == 112 and rep.capped == 1
    with pytest.raises(ValueError):
        acc.add("tripped", 1)


def test_merge_adds_counts():
    a, b = MfptAccumulator(), MfptAccumulator()
    a.add(RETURNED, 2)
    b.add(FELL, 3)
    m = a.merge(b)
    assert (m.n_l, m.m_l, m.n_f, m.m_f) == (1, 2, 1, 3)


def test_chain_exit_after_geometric_time():
    # leave with probability 1/2 each step: mean absorption time 2
    chain = AbsorbingChain([[0.5]])
    assert chain.mean_absorption_time() == pytest.approx(2.0)
    assert chain.estimate(20_000, seed=1).mfpt == pytest.approx(2.0, rel=0.05)


def test_chain_with_detours():
    Q = [[0.1, 0.6, 0.25], [0.5, 0.2, 0.25], [0.3, 0.3, 0.3]]
    chain = AbsorbingChain(Q)
    exact = chain.mean_absorption_time()
    assert chain.estimate(50_000, seed=2).mfpt == pytest.approx(exact, rel=0.05)
    with pytest.raises(ValueError):
        AbsorbingChain([[0.7, 0.6], [0.0, 0.0]])


def _kernel_at(state):
    return LimitKernel(state, np.eye(12), 1e-12)


def test_walker_falling_on_first_step_scores_one():
    start = REFERENCE_STATES[MODEL_A].constrained(MODEL_A).as_array()
    runner = EpisodeRunner(MODEL_A, _kernel_at(start), start, 0.01, gains=ZERO)
    rep = runner.run(0, 20).report()
    assert rep.p_fall == 1.0 and rep.mfpt == 1.0


@pytest.fixture(scope="module")
def cycle_a():
    c = find_limit_cycle(MODEL_A, initial_states=[REFERENCE_STATES[MODEL_A]], n_steps=200,
                         record_from=100)
    return c, LimitKernel.from_cycle(c)


def test_step_budget_bounds_work(cycle_a):
    c, k = cycle_a
    runner = EpisodeRunner(MODEL_A, k, c.fixed_state.as_array(), 0.01, seed=0)
    acc = runner.run(0, 1000, step_budget=50)
    assert acc.m_l + acc.m_f + acc.m_capped <= 50
    assert acc.episodes < 1000


def test_estimate_is_independent_of_jobs(cycle_a):
    c, k = cycle_a
    terrain = TerrainParams(0.02, 5)
    one = estimate_mfpt(MODEL_A, c, k, terrain, 30)
    two = estimate_mfpt(MODEL_A, c, k, terrain, 30, jobs=2)
    assert one == two
    assert one.samples == 30 and 0 < one.p_fall < 1


def test_time_budget_flags_partial_estimate(cycle_a):
    c, k = cycle_a
    rep = estimate_mfpt(MODEL_A, c, k, TerrainParams(0.01, 0), 10**6, time_budget=0.5)
    assert rep.budget_exhausted and rep.samples < 10**6


def test_flat_ground_never_falls(cycle_a):
    c, k = cycle_a
    rep = estimate_mfpt(MODEL_A, c, k, TerrainParams(0.0, 0), 50)
    assert rep.unbounded and rep.p_fall == 0.0 and rep.samples == 50
