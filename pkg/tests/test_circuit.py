import json
import math
import time

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tsom.circuit import (
    DendriticFieldParams,
    TwoStageInstance,
    accumulate_energy,
    activation_pmf,
    density,
    dendrite_presence,
    energy_trace,
    expected_extra_activations,
    grid_instances,
    n_subsets,
    one_stage,
    parent_probability,
    response,
    response_probability,
    two_stage,
    verify_proposition,
)


def series_oracle(lam, p_max, cutoff):
    """Term-by-term sum with exact factorials."""
    return sum(n * math.exp(-lam) * lam**n / math.factorial(n) * (1 - (1 - p_max) ** n) for n in range(1, cutoff + 1))


# --- dendritic field ---------------------------------------------------------


def test_density_examples():
    p = DendriticFieldParams(alpha=1.0, b=2.0, c=1.0, field_radius=10.0)
    assert density(p, 0.0) == 3.0
    assert density(p, math.pi / 2) == pytest.approx(2.0, abs=1e-15)
    assert density(p, math.pi) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        density(p, 11.0)
    with pytest.raises(ValueError):
        density(p, -0.1)


def test_default_params():
    p = DendriticFieldParams()
    assert p.c == pytest.approx(math.pi / 2000.0)
    assert density(p, 2000.0) == pytest.approx(0.5)


def test_negative_density_rejected():
    with pytest.raises(ValueError, match="negative"):
        DendriticFieldParams(alpha=2.0, b=1.0)
    DendriticFieldParams(alpha=2.0, b=1.0, c=0.1 / 2000.0)  # cos stays near 1 over the field
    for bad in ({"p_max": 1.0}, {"p_max": 0.0}, {"tau": 0.0}, {"e_unit": -1.0}, {"gp_sigma": 0.0}):
        with pytest.raises(ValueError):
            DendriticFieldParams(**bad)


def test_parent_and_presence_probabilities():
    p = DendriticFieldParams(alpha=1.0, b=1.0, c=1.0, field_radius=10.0)  # density 2 at r=0
    assert parent_probability(p, 0.0, 0.0) == 0.0
    assert parent_probability(p, 0.0, 1.0) == 1.0
    assert dendrite_presence(p, 0.0, 1.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-15)
    assert dendrite_presence(p, 0.0, 1.0, 0.0) == pytest.approx(0.3989, abs=5e-5)
    with pytest.raises(ValueError):
        parent_probability(p, 0.0, -1.0)


# --- activation and response -------------------------------------------------


def test_pmf_examples():
    assert activation_pmf(2.5, 0) == pytest.approx(math.exp(-2.5), rel=1e-14)
    assert activation_pmf(1.0, 1) == pytest.approx(math.exp(-1.0), rel=1e-14)
    assert activation_pmf(1.0, 1) == pytest.approx(0.36788, abs=5e-6)
    for bad in ((-1.0, 1), (1.0, -1), (1.0, 1.5)):
        with pytest.raises(ValueError):
            activation_pmf(*bad)


@pytest.mark.parametrize("lam", [0.0, 0.5, 3.0, 20.0])
def test_pmf_normalizes(lam):
    assert abs(np.sum(activation_pmf(lam, np.arange(0, 201))) - 1.0) <= 1e-10


def test_response_examples():
    p = DendriticFieldParams(p_max=0.5, tau=0.02)
    assert response(p, 2, 0.02) == pytest.approx(2 * 0.5 * (1 - math.exp(-1)), abs=1e-15)
    assert response(p, 2, 0.02) == pytest.approx(0.6321, abs=5e-5)
    assert response(p, 0, 0.1) == 0.0
    assert response(p, 3, math.inf) == 1.5
    assert response(p, 3, 10.0) == pytest.approx(1.5, abs=1e-12)
    assert response(p, 3, 10.0, moving=True) == pytest.approx(2.0, abs=1e-12)
    for dt in (0.0, -1.0):
        with pytest.raises(ValueError):
            response_probability(p, dt)


@given(st.floats(1e-4, 10), st.floats(1e-4, 10))
def test_response_probability_monotone_below_asymptote(a, b):
    p = DendriticFieldParams()
    lo, hi = sorted((a, b))
    assert response_probability(p, lo) <= response_probability(p, hi) <= p.p_max


def test_series_examples():
    p = DendriticFieldParams(p_max=0.5)
    assert expected_extra_activations(p, 0.0).value == 0.0
    got = expected_extra_activations(p, 1.0, cutoff=50)
    assert got.value == pytest.approx(series_oracle(1.0, 0.5, 50), abs=1e-14)
    # closed form of the infinite series: lam - lam q exp(-lam p)
    assert got.value == pytest.approx(1.0 - 0.5 * math.exp(-0.5), abs=1e-12)
    assert got.tail_bound < 1e-40
    near_one = DendriticFieldParams(p_max=1 - 1e-12)
    assert expected_extra_activations(near_one, 4.0).value == pytest.approx(4.0, abs=1e-9)
    with pytest.raises(ValueError):
        expected_extra_activations(p, 1.0, cutoff=0)


def test_series_tail_bound_covers_truncation():
    p = DendriticFieldParams(p_max=0.3)
    short = expected_extra_activations(p, 30.0, cutoff=25)
    full = expected_extra_activations(p, 30.0, cutoff=400)
    assert 0 < full.value - short.value <= short.tail_bound


def test_energy_accumulation():
    assert accumulate_energy(2.0, 1.0, 0.0) == 2.0
    assert accumulate_energy(0.0, 1.0, 1.0) == 1.0
    trace = energy_trace(0.5, 2.0, [0.25] * 8)
    assert trace[-1] == pytest.approx(0.5 + 8 * 2.0 * 0.25)
    assert np.all(np.diff(trace) >= 0)
    with pytest.raises(ValueError):
        accumulate_energy(0.0, 1.0, 1.5)
    assert n_subsets(20, 3) == 6


# --- one-stage versus two-stage ----------------------------------------------


def test_two_stage_examples():
    inst = TwoStageInstance(np.array([0.5, 0.5]), np.array([0.2, 0.4]))
    assert one_stage(inst) == pytest.approx(0.3, abs=1e-15)
    assert two_stage(inst) == pytest.approx(0.52, abs=1e-15)
    zero = TwoStageInstance(np.array([0.3, 0.7]), np.zeros(2))
    assert one_stage(zero) == two_stage(zero) == 0.0
    sure = TwoStageInstance(np.array([0.9, 0.1]), np.array([0.1, 1.0]))
    assert two_stage(sure) == 1.0 >= one_stage(sure)
    single = TwoStageInstance(np.array([1.0]), np.array([0.37]))
    assert one_stage(single) == two_stage(single) == 0.37


def test_instance_validation():
    for p, e in (([0.5, 0.6], [0.1, 0.1]), ([-0.5, 1.5], [0.1, 0.1]), ([1.0], [1.2]), ([1.0], [0.1, 0.2]), ([], [])):
        with pytest.raises(ValueError):
            TwoStageInstance(np.array(p), np.array(e))


@st.composite
def instances(draw):
    n = draw(st.integers(1, 20))
    w = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n)))
    if w.sum() == 0:
        w = np.ones(n)
    p = w / w.sum()
    p[-1] = 1.0 - p[:-1].sum()
    if p[-1] < 0:
        p = np.full(n, 1.0 / n)
    e = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n)))
    return TwoStageInstance(p, e)


@given(instances())
def test_two_stage_dominates(inst):
    assert one_stage(inst) <= two_stage(inst) + 1e-12


@given(instances(), st.data())
def test_two_stage_monotone_and_one_stage_linear(inst, data):
    i = data.draw(st.integers(0, inst.n_subsets - 1))
    bump = data.draw(st.floats(0.0, 1.0))
    e2 = inst.e.copy()
    e2[i] = max(e2[i], bump)
    raised = TwoStageInstance(inst.p, e2)
    assert two_stage(raised) >= two_stage(inst) - 1e-15
    half = TwoStageInstance(inst.p, inst.e / 2)
    assert one_stage(half) == pytest.approx(one_stage(inst) / 2, abs=1e-15)


def test_grid_is_exhaustive():
    grid = list(grid_instances())
    assert len(grid) == 125
    assert all(one_stage(g) <= two_stage(g) + 1e-12 for g in grid)


def test_verification_report():
    t = time.perf_counter()
    rep = verify_proposition(100_000, (1, 20), 7)
    assert time.perf_counter() - t < 10
    assert rep.passed and rep.violations == 0 and rep.grid_violations == 0
    assert rep.trials == 100_000 and rep.grid_cases == 125
    assert rep.max_gap <= 1e-12 and rep.counterexample is None
    d = json.loads(rep.to_json())
    assert d["seed"] == 7 and d["passed"] is True and d["n_subsets_range"] == [1, 20]
    assert verify_proposition(500, (1, 5), 3).to_dict() == verify_proposition(500, (1, 5), 3).to_dict()


def test_single_subset_margin_is_zero():
    rep = verify_proposition(200, (1, 1), 1, include_grid=False)
    assert rep.passed and rep.max_gap == pytest.approx(0.0, abs=1e-15)


def test_verification_argument_errors():
    with pytest.raises(ValueError):
        verify_proposition(0)
    with pytest.raises(ValueError):
        verify_proposition(10, (3, 2))
