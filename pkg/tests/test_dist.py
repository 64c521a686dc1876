import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import integrate, stats

from screening.dist import (
    Beta,
    Empirical,
    PointMass,
    Uniform,
    band_mean,
    cdf,
    parse_distribution,
    partial_expectation,
    quantile,
    read_score_file,
)
from screening.errors import DegenerateBandError, DomainError, InputFormatError

FOUR = Empirical([0.1, 0.4, 0.6, 0.9])


def test_cdf_examples():
    assert cdf(Uniform(), 0.65) == pytest.approx(0.65)
    assert cdf(PointMass(0.5), 0.4) == 0.0
    assert cdf(PointMass(0.5), 0.5) == 1.0
    assert cdf(Beta(10), 0.5) == pytest.approx(0.5, abs=1e-15)


def test_quantile_examples():
    assert quantile(Uniform(), 0.75) == pytest.approx(0.75)
    assert quantile(FOUR, 0.5) == 0.4
    for q in np.linspace(0, 1, 21):
        assert quantile(Beta(1), q) == pytest.approx(q, abs=1e-14)


def test_partial_expectation_matches_quadrature():
    assert partial_expectation(Uniform(), 0.65, 1.0) == pytest.approx(0.28875, abs=1e-14)
    quad, _ = integrate.quad(lambda x: x, 0.65, 1.0)
    assert partial_expectation(Uniform(), 0.65, 1.0) == pytest.approx(quad, abs=1e-12)
    assert partial_expectation(Uniform(), 0, 1) == pytest.approx(0.5)


@pytest.mark.parametrize("d", [Uniform(), Beta(10), Beta(0.1), PointMass(0.5), FOUR])
def test_empty_interval_has_no_mass(d):
    assert partial_expectation(d, 0.3, 0.3) == 0.0


@pytest.mark.parametrize("t", [0.1, 2.0, 10.0, 100.0])
@pytest.mark.parametrize("a,b", [(0.0, 0.3), (0.2, 0.6), (0.45, 0.55), (0.6, 1.0)])
def test_beta_partial_expectation_quadrature(t, a, b):
    ref = stats.beta(t, t)
    quad, _ = integrate.quad(lambda x: x * ref.pdf(x), a, b, limit=200, points=[0.5])
    assert partial_expectation(Beta(t), a, b) == pytest.approx(quad, abs=1e-8)


def test_band_mean_examples():
    assert band_mean(Uniform(), 0.2, 0.6) == pytest.approx(0.4)
    assert band_mean(PointMass(0.5), 0.4, 0.6) == 0.5
    assert band_mean(FOUR, 0.3, 0.7) == pytest.approx(0.5)
    with pytest.raises(DegenerateBandError):
        band_mean(FOUR, 0.41, 0.59)


def test_domain_errors():
    with pytest.raises(DomainError):
        cdf(Uniform(), 1.5)
    with pytest.raises(DomainError):
        quantile(Uniform(), -0.1)
    with pytest.raises(DomainError):
        partial_expectation(Uniform(), 0.7, 0.2)
    with pytest.raises(DomainError):
        Beta(0)
    with pytest.raises(DomainError):
        PointMass(1.2)
    with pytest.raises(DomainError):
        Empirical([])


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0, 100.0])
def test_beta_quantile_inverts_cdf(t):
    d = Beta(t)
    for q in [2.0**-40, 2.0**-30, 2.0**-14, 2.0**-7, 0.25, 0.5]:  # 1 - q exact
        assert d.cdf(d.quantile(q)) == pytest.approx(q, rel=1e-9, abs=1e-300)
        # upper half by reflection; 1 - tiny rounds to 1.0 so compare there
        assert d.quantile(1 - q) == pytest.approx(1 - d.quantile(q), abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 200), st.floats(0, 1), st.floats(0, 1))
def test_beta_cdf_monotone_and_symmetric(t, x, y):
    assume(1.0 - (1.0 - x) == x)  # reflection must be exact in floating point
    d = Beta(t)
    lo, hi = min(x, y), max(x, y)
    assert d.cdf(lo) <= d.cdf(hi) + 1e-15
    assert d.cdf(x) + d.cdf(1 - x) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.floats(0, 1), st.floats(0, 1))
def test_empirical_quantile_integral_matches_partial_expectation(scores, u, v):
    d = Empirical(scores)
    lo, hi = min(u, v), max(u, v)
    qi = d.quantile_integral(lo, hi)
    assert 0.0 <= qi <= (hi - lo) + 1e-12
    # the whole range integrates to the mean
    assert d.quantile_integral(0, 1) == pytest.approx(float(np.mean(scores)), abs=1e-12)
    # partial expectation over the full range too
    assert d.partial_expectation(-0.0, 1.0) + (d.cdf(0.0) * 0) == pytest.approx(
        float(np.sum(np.array(scores)[np.array(scores) > 0]) / len(scores)), abs=1e-12
    )


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([Uniform(), Beta(0.3), Beta(4), PointMass(0.3)]), st.floats(0, 1), st.floats(0, 1))
def test_quantile_integral_additive(d, u, v):
    lo, hi = min(u, v), max(u, v)
    mid = 0.5 * (lo + hi)
    assert d.quantile_integral(lo, mid) + d.quantile_integral(mid, hi) == pytest.approx(
        d.quantile_integral(lo, hi), abs=1e-12
    )


def test_empirical_ties_are_stable():
    d = Empirical([0.5, 0.2, 0.5, 0.5])
    assert list(d.order) == [1, 0, 2, 3]
    assert not d.sorted_scores.flags.writeable


def test_parse_distribution(tmp_path):
    assert isinstance(parse_distribution("uniform"), Uniform)
    assert parse_distribution("beta:t=10") == Beta(10.0)
    assert parse_distribution("pointmass:c=0.5") == PointMass(0.5)
    p = tmp_path / "s.csv"
    p.write_text("id,score\na,0.1\nb,0.9\n")
    d = parse_distribution(f"scores:{p}")
    assert d.n == 2 and d.ids == ("a", "b")
    for bad in ["beta", "beta:c=1", "beta:t=x", "gauss", "pointmass:c="]:
        with pytest.raises(DomainError):
            parse_distribution(bad)


@pytest.mark.parametrize(
    "body,line",
    [
        ("id,score\na,0.1,3\n", 2),
        ("id,score\na,0.1\n,0.3\n", 3),
        ("id,score\na,0.1\na,0.3\n", 3),
        ("id,score\na,zero\n", 2),
        ("id,score\na,0.1\nb,1.5\n", 3),
        ("id,score\na,nan\n", 2),
        ("identifier,score\na,0.1\n", 1),
    ],
)
def test_score_file_errors_name_the_line(tmp_path, body, line):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(InputFormatError) as info:
        read_score_file(p)
    assert info.value.line == line
    assert f":{line}:" in str(info.value)


def test_label_file_rejects_non_binary(tmp_path):
    p = tmp_path / "lab.csv"
    p.write_text("id,label\na,1\nb,0.5\n")
    with pytest.raises(InputFormatError):
        read_score_file(p, "label", allowed={0.0, 1.0})


def test_empty_file(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(InputFormatError):
        read_score_file(p)
    p.write_text("id,score\n")
    with pytest.raises(InputFormatError):
        read_score_file(p)
