import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import builtin_chains
from oracles import (
    central_binomial_exact,
    central_binomial_return,
    enumerate_lattice_returns,
    first_return_biased,
)
from branchwalk.chains import make_biased_walk, make_finite, make_simple_walk
from branchwalk.series import (
    BudgetExceeded,
    DegenerateFit,
    InsufficientData,
    NegativeFirstReturn,
    ReturnSeries,
    abel_consistency,
    beta_from_f,
    compute_series,
    default_tails,
    first_return_inversion,
    fit_tail,
    green_sum,
    read_series_csv,
    return_probabilities_dp,
    write_series_csv,
)


def test_dp_symmetric_walk_small():
    s = return_probabilities_dp(make_biased_walk(0.5), 4)
    expected = [float(central_binomial_exact(n)) for n in range(5)]
    assert expected == [1, 0, 0.5, 0, 0.375]
    np.testing.assert_allclose(s.p, expected, rtol=0, atol=1e-15)
    assert s.f is None


def test_dp_finite_examples(self_loop, period_two):
    np.testing.assert_array_equal(return_probabilities_dp(self_loop, 3).p, [1, 1, 1, 1])
    np.testing.assert_array_equal(return_probabilities_dp(period_two, 4).p, [1, 0, 1, 0, 1])


@pytest.mark.parametrize("p", [0.5, 0.3, 0.9])
def test_dp_matches_binomial(p):
    s = return_probabilities_dp(make_biased_walk(p), 300)
    ref = [central_binomial_return(n, p) for n in range(301)]
    np.testing.assert_allclose(s.p, ref, rtol=1e-11, atol=1e-300)


@pytest.mark.parametrize("d, n_max", [(2, 8), (3, 6)])
def test_dp_matches_path_enumeration(d, n_max):
    s = return_probabilities_dp(make_simple_walk(d), n_max)
    ref = [float(x) for x in enumerate_lattice_returns(d, n_max)]
    np.testing.assert_allclose(s.p, ref, rtol=1e-13, atol=0)


def test_dp_finite_matches_matrix_power(lazy_three):
    s = return_probabilities_dp(lazy_three, 30)
    P = lazy_three.matrix
    ref = [np.linalg.matrix_power(P, n)[0, 0] for n in range(31)]
    np.testing.assert_allclose(s.p, ref, rtol=1e-12)


def test_dp_budget_guard():
    with pytest.raises(BudgetExceeded):
        return_probabilities_dp(make_simple_walk(4), 100)
    with pytest.raises(ValueError):
        return_probabilities_dp(make_biased_walk(0.5), 0)


def test_odd_entries_vanish_exactly():
    s = compute_series(make_simple_walk(3), 30)
    assert np.all(s.p[1::2] == 0.0)
    assert np.all(s.f[1::2] == 0.0)


def test_inversion_examples(self_loop, period_two):
    s = first_return_inversion(ReturnSeries(make_biased_walk(0.5), np.array([1, 0, 0.5, 0, 0.375])))
    assert s.f[2] == 0.5
    # f4 = p4 - f2 p2
    assert s.f[4] == pytest.approx(0.375 - 0.5 * 0.5, abs=1e-15)
    loop = first_return_inversion(return_probabilities_dp(self_loop, 3))
    np.testing.assert_array_equal(loop.f[1:], [1, 0, 0])
    flip = first_return_inversion(return_probabilities_dp(period_two, 4))
    np.testing.assert_array_equal(flip.f[1:], [0, 1, 0, 0])


@pytest.mark.parametrize("p", [0.5, 0.3, 0.7])
def test_inversion_matches_catalan_first_return(p):
    s = compute_series(make_biased_walk(p), 400)
    ref = [first_return_biased(n, p) for n in range(401)]
    np.testing.assert_allclose(s.f, ref, rtol=1e-9, atol=1e-300)


def test_inversion_rejects_inconsistent_series():
    with pytest.raises(NegativeFirstReturn):
        first_return_inversion(ReturnSeries(make_biased_walk(0.5), np.array([1.0, 0.5, 0.0])))


def test_inversion_clamps_rounding_noise():
    p = np.array([1.0, 0.5, 0.25 - 5e-11])
    with pytest.warns(RuntimeWarning):
        s = first_return_inversion(ReturnSeries(make_biased_walk(0.5), p))
    assert s.f[2] == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        s = first_return_inversion(ReturnSeries(make_biased_walk(0.5), np.array([1.0, 0.5, 0.25 - 1e-13])))
    assert s.f[2] == 0.0


@pytest.mark.parametrize("chain", builtin_chains(), ids=repr)
def test_series_invariants(chain):
    s = compute_series(chain, 40)
    assert s.p[0] == 1.0
    assert np.all((s.p >= 0) & (s.p <= 1))
    assert np.all((s.f >= 0) & (s.f <= 1))
    assert s.f[1:].sum() <= 1 + 1e-9
    assert np.all(s.f <= s.p + 1e-15)
    for n in range(1, s.n_max + 1):
        renewal = sum(s.f[k] * s.p[n - k] for k in range(1, n + 1))
        assert abs(renewal - s.p[n]) <= 1e-10


@pytest.mark.parametrize("chain", builtin_chains(), ids=repr)
def test_truncated_generating_function_identity(chain):
    # the acceptance suite runs N = 200
    N, a = 120, 0.5
    s = compute_series(chain, N)
    pw = a ** np.arange(N + 1)
    P = float(pw @ s.p)
    F = float(pw[1:] @ s.f[1:])
    assert abs(P * (1 - F) - 1) < 1e-10


@settings(max_examples=25)
@given(st.floats(0.01, 0.99))
def test_series_symmetric_in_p(p):
    a = return_probabilities_dp(make_biased_walk(p), 60).p
    b = return_probabilities_dp(make_biased_walk(1 - p), 60).p
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-300)


def test_power_law_fit_symmetric_walk():
    s = return_probabilities_dp(make_biased_walk(0.5), 10000)
    tail = fit_tail(s, (1000, 10000), "power_law")
    # p_2m ~ 1/sqrt(pi m)
    assert tail.exponent == pytest.approx(0.5, abs=0.02)
    assert tail.coefficient == pytest.approx(1 / math.sqrt(math.pi), rel=1e-3)
    assert math.isinf(tail.tail_mass)


def test_geometric_fit_ratio():
    s = compute_series(make_biased_walk(0.3), 400)
    tail = fit_tail(s, (100, 400), "geometric")
    assert tail.target == "f"
    assert tail.ratio == pytest.approx(4 * 0.3 * 0.7, abs=0.01)


def test_fit_errors(self_loop):
    s = compute_series(self_loop, 40)
    with pytest.raises(DegenerateFit):
        fit_tail(s, (2, 40), "geometric")
    with pytest.raises(InsufficientData):
        fit_tail(compute_series(make_biased_walk(0.5), 40), (30, 40))
    with pytest.raises(InsufficientData):
        fit_tail(compute_series(make_biased_walk(0.5), 40), (0, 80))


def test_tail_mass_matches_direct_sum():
    s = compute_series(make_biased_walk(0.4), 400)
    tail = fit_tail(s, (200, 400), "geometric")
    far = compute_series(make_biased_walk(0.4), 3000)
    assert tail.tail_mass == pytest.approx(far.f[401:].sum(), rel=1e-3)


@pytest.mark.parametrize("p", [0.3, 0.7])
def test_beta_geometric_tail(p):
    s = compute_series(make_biased_walk(p), 2000)
    _, f_tail = default_tails(s)
    beta = beta_from_f(s, f_tail)
    assert beta.value == pytest.approx(1 - abs(1 - 2 * p), abs=1e-6)
    assert beta.lower_bound <= beta.value <= 1


def test_beta_z3():
    s = compute_series(make_simple_walk(3), 60)
    _, f_tail = default_tails(s)
    beta = beta_from_f(s, f_tail)
    assert f_tail.kind == "power_law"
    assert beta.value == pytest.approx(0.34, abs=0.01)
    assert beta.method == "series_tail"


def test_beta_self_loop(self_loop):
    beta = beta_from_f(compute_series(self_loop, 10))
    assert beta.value == 1.0 and beta.lower_bound == 1.0


def test_beta_requires_f_tail():
    s = compute_series(make_biased_walk(0.3), 200)
    p_tail, _ = default_tails(s)
    with pytest.raises(ValueError):
        beta_from_f(s, p_tail)


def test_green_self_loop(self_loop):
    g = green_sum(compute_series(self_loop, 10))
    assert math.isinf(g.G) and g.verdict == "recurrent"


def test_green_symmetric_walk_recurrent():
    s = compute_series(make_biased_walk(0.5), 2000)
    p_tail, _ = default_tails(s)
    assert p_tail.exponent == pytest.approx(0.5, abs=0.02)
    assert green_sum(s, p_tail).verdict == "recurrent"


def test_green_z2_recurrent():
    s = compute_series(make_simple_walk(2), 200)
    p_tail, _ = default_tails(s)
    assert green_sum(s, p_tail).verdict == "recurrent"


def test_green_z3_cross_check():
    s = compute_series(make_simple_walk(3), 60)
    p_tail, f_tail = default_tails(s)
    g = green_sum(s, p_tail)
    beta = beta_from_f(s, f_tail)
    assert g.verdict == "transient"
    assert g.G == pytest.approx(1.516, abs=0.01)
    assert g.beta_tilde == pytest.approx(0.34, abs=0.01)
    # G = 1 / (1 - beta)
    assert abs(g.G - 1 / (1 - beta.value)) <= g.uncertainty + beta.uncertainty / (1 - beta.value) ** 2


def test_green_transient_biased_walk():
    s = compute_series(make_biased_walk(0.3), 2000)
    p_tail, _ = default_tails(s)
    g = green_sum(s, p_tail)
    assert g.verdict == "transient"
    assert g.G == pytest.approx(1 / (1 - 0.6), abs=1e-9)


def test_green_degenerate_walk():
    g = green_sum(compute_series(make_biased_walk(1.0), 50))
    assert g.verdict == "transient" and g.G == 1.0 and g.beta_tilde == 0.0


def test_abel_self_loop():
    s = compute_series(make_finite([[1.0]]), 10000)
    table = abel_consistency(s, [0.5, 0.9, 0.99])
    sums = [v for _, v in table.rows]
    np.testing.assert_allclose(sums, [1.0, 9.0, 99.0], rtol=1e-12)
    assert sums[0] < sums[1] < sums[2]
    assert table.monotone and table.bounded


def test_abel_transient_ladder_approaches_mu_one():
    s = compute_series(make_biased_walk(0.3), 2000)
    p_tail, _ = default_tails(s)
    table = abel_consistency(s, [0.9, 0.99, 0.999, 0.9999, 0.999999], p_tail)
    sums = [v for _, v in table.rows]
    assert table.monotone and table.bounded
    assert all(v < 1.5 for v in sums)
    assert 1.5 - sums[-1] < 1e-4
    assert table.bound == pytest.approx(1.5, abs=1e-9)


def test_abel_single_row():
    s = compute_series(make_biased_walk(0.5), 100)
    table = abel_consistency(s, [0.7])
    assert len(table.rows) == 1 and table.monotone


@given(st.floats(0.01, 0.98), st.floats(0.001, 0.5))
def test_abel_monotone_property(a, gap):
    b = min(a + gap, 0.999)
    s = compute_series(make_simple_walk(2), 40)
    table = abel_consistency(s, [a, b])
    assert table.monotone and table.bounded


def test_csv_roundtrip(tmp_path):
    s = compute_series(make_biased_walk(0.3), 50)
    path = tmp_path / "s.csv"
    write_series_csv(s, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "n,p_n,f_n"
    assert lines[3] == f"2,{format(s.p[2], '.17g')},{format(s.f[2], '.17g')}"
    back = read_series_csv(path, s.chain)
    np.testing.assert_array_equal(back.p, s.p)
    np.testing.assert_array_equal(back.f, s.f)


@pytest.mark.parametrize("d, n_max", [(1, 60), (2, 40), (3, 24), (4, 10)])
def test_folded_dp_matches_full_box(d, n_max):
    from branchwalk.series import _lattice_dp

    w = 1.0 / (2 * d)
    full = _lattice_dp([w] * d, [w] * d, n_max)
    np.testing.assert_allclose(return_probabilities_dp(make_simple_walk(d), n_max).p, full, rtol=1e-13, atol=1e-300)
