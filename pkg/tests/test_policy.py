import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from types import SimpleNamespace

from screening.dist import Empirical, PointMass, Uniform
from screening.errors import DomainError
from screening.policy import (
    Budgets,
    ScreeningPolicy,
    band_ranks,
    evaluate_two_stage,
    no_screening_policy,
    no_screening_threshold,
    uniform_closed_form,
)
from screening.solver import fixed_point_solve


def test_budgets_validation():
    Budgets(0.0, 0.35)
    Budgets(0.35, 0.35)
    for a, b in [(0.4, 0.35), (-0.1, 0.3), (0.1, 0.0), (0.1, 1.0)]:
        with pytest.raises(DomainError):
            Budgets(a, b)
    assert Budgets(0.3, 0.5).in_guaranteed_regime
    assert not Budgets(0.5, 0.6).in_guaranteed_regime


def test_no_screening_threshold_examples():
    assert no_screening_threshold(Uniform(), Budgets(0, 0.35)) == pytest.approx(0.65)
    assert no_screening_threshold(PointMass(0.5), Budgets(0, 0.35)) == 0.5
    assert no_screening_threshold(Empirical([0.1, 0.4, 0.6, 0.9]), Budgets(0, 0.5)) == 0.4


def test_uniform_closed_form_examples():
    p = uniform_closed_form(Budgets(0.35, 0.35))
    assert p.q_beta == pytest.approx(0.9058, abs=5e-5)
    assert p.q_alpha == pytest.approx(0.5558, abs=5e-5)
    p = uniform_closed_form(Budgets(0.0, 0.35))
    assert p.q_beta == pytest.approx(0.65) and p.q_alpha == pytest.approx(0.65)
    p = uniform_closed_form(Budgets(0.1, 0.35))
    assert p.q_beta == pytest.approx(0.71667, abs=5e-6)
    assert p.q_alpha == pytest.approx(0.61667, abs=5e-6)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0, 1))
def test_uniform_closed_form_meets_budgets(beta, frac):
    # the allocation budget integrates to beta directly, not through the solver
    alpha = beta * frac
    assume(1 - beta - alpha + alpha * alpha / 2 > 0)  # budget not saturated
    p = uniform_closed_form(Budgets(alpha, beta))
    assert p.q_beta - p.q_alpha == pytest.approx(alpha, abs=1e-12)
    spent = (p.q_beta**2 - p.q_alpha**2) / 2 + (1 - p.q_beta)
    assert spent == pytest.approx(beta, abs=1e-12)
    assert p.q_alpha - 1e-12 <= p.q_tilde_beta <= p.q_beta + 1e-12


def test_saturated_budget_is_rejected():
    with pytest.raises(DomainError):
        uniform_closed_form(Budgets(0.375, 0.75))


def test_policy_dict_round_trip():
    p = uniform_closed_form(Budgets(0.1, 0.35))
    assert ScreeningPolicy.from_dict(p.to_dict()) == p


def pop(mu, y):
    return SimpleNamespace(mu=np.asarray(mu, float), y=np.asarray(y))


def test_all_negative_population_gets_nothing_from_the_band():
    n = 1000
    mu = np.linspace(0, 1, n)
    p = uniform_closed_form(Budgets(0.35, 0.35))
    res = evaluate_two_stage(p, pop(mu, np.zeros(n, int)))
    assert res.precision == 0.0
    assert not set(res.allocated_idx) & set(res.screened_idx)


def test_no_screening_precision_on_uniform_grid():
    n = 100_000
    mu = (np.arange(n) + 0.5) / n
    # expected outcomes: the mean score of the allocated units is the precision
    p = no_screening_policy(Uniform(), Budgets(0, 0.35))
    start, stop = band_ranks(p, n)
    assert start == stop == n - 35_000
    assert mu[stop:].mean() == pytest.approx(0.825, abs=1e-6)


def test_point_mass_two_stage_precision():
    n = 200_000
    rng = np.random.default_rng(3)
    y = (rng.random(n) < 0.5).astype(int)
    d = Empirical(np.full(n, 0.5))
    p, _ = fixed_point_solve(d, Budgets(0.35, 0.35))
    res = evaluate_two_stage(p, pop(np.full(n, 0.5), y))
    assert res.precision == pytest.approx(0.75, abs=0.01)


def test_band_ranks_on_four_points():
    d = Empirical([0.1, 0.4, 0.6, 0.9])
    p, _ = fixed_point_solve(d, Budgets(0.25, 0.5))
    assert band_ranks(p, 4) == (2, 3)
