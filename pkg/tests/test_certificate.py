import math
import warnings

import mpmath
import numpy as np
import pytest

from bdfvac.certificate import (
    C_INF,
    alpha_b,
    c6,
    c_inf,
    c_m,
    c_r,
    c_r_profile,
    c_r_profile_limit,
    check_conditions,
    constants_table,
    euclidean_power_integral,
    f_prime,
    inequality_suite,
    k_p,
    k_p_quadrature,
    kappa,
    kappa_sequence,
    kappa_sqrt_fit,
    log_integral,
    log_integral_closed,
    s_pq,
)
from bdfvac.lattice import LatticeSpec


@pytest.mark.parametrize("p, expected", [(2, 0.5), (3, 1 / math.pi), (4, 0.25)])
def test_k_p_values(p, expected):
    assert k_p(p) == pytest.approx(expected, rel=1e-14)
    assert k_p_quadrature(p) == pytest.approx(expected, rel=1e-11)


@pytest.mark.parametrize("p", [1.5, 2.5, 7.0])
def test_k_p_methods_agree(p):
    assert k_p(p) == pytest.approx(k_p_quadrature(p), rel=1e-10)


def test_k_p_domain():
    with pytest.raises(ValueError):
        k_p(1.0)


def test_euclidean_power_integral():
    assert euclidean_power_integral(4) == pytest.approx(math.pi**2, rel=1e-11)
    for q in (3.5, 5.0, 6.0):
        assert euclidean_power_integral(q) == pytest.approx(
            euclidean_power_integral(q, "closed"), rel=1e-10
        )
    with pytest.raises(ValueError):
        euclidean_power_integral(3.0)
    assert s_pq(6, 6) == pytest.approx(
        4 * math.pi * (2 * math.pi) ** -0.5 * euclidean_power_integral(6, "closed") ** (1 / 6)
    )


def test_c_m_printed_value():
    assert abs(c_m() - 2.1589) <= 5e-4


def test_c_m_against_mpmath():
    mpmath.mp.dps = 30
    f = lambda t: t**2 / ((1 + 4 * t**2) ** (mpmath.mpf(2) / 3) * (1 + t**2))
    # The tail decays like t^(-4/3); map it to (0, 1] with t = 1/s.
    tail = mpmath.quad(lambda s: f(1 / s) / s**2, [0, mpmath.mpf("1e-6"), mpmath.mpf("1e-3"), 1])
    ref = 2 * mpmath.sqrt(mpmath.quad(f, [0, 1]) + tail)
    assert c_m() == pytest.approx(float(ref), rel=1e-11)


def test_sharp_sobolev_constant():
    # Talenti: S = 3 (pi/2)^(4/3), C_6 = S^(-1/2).
    assert c6() == pytest.approx(1 / math.sqrt(3 * (math.pi / 2) ** (4 / 3)), rel=1e-14)
    assert c_inf() == C_INF == pytest.approx(0.28209479177387814)


def test_c_r_profile_tends_to_limit():
    for theta in (0.5, 0.8, 1.0):
        assert c_r_profile(2e4, theta) == pytest.approx(c_r_profile_limit(theta), rel=1e-4)
    # For theta > 1 the approach is only algebraic, like x^(1 - theta).
    assert c_r_profile(2e4, 1.5) == pytest.approx(c_r_profile_limit(1.5), rel=1e-2)
    assert c_r_profile_limit(1.0) == pytest.approx(math.pi**3 / 2)
    assert c_r_profile_limit(1.0 + 1e-5) == pytest.approx(math.pi**3 / 2, rel=1e-8)
    with pytest.raises(ValueError):
        c_r_profile(1.0, 2.0)


def test_c_r_value():
    # The supremum sits at |x| -> infinity and the infimum at theta = 1, giving pi/4.
    assert c_r() == pytest.approx(math.pi / 4, rel=1e-9)
    assert c_r_profile(0.0, 1.0) < c_r_profile_limit(1.0)


def test_log_integral():
    for cutoff in (0.5, 3.0, 10.0, 1e3):
        assert log_integral(cutoff) == pytest.approx(log_integral_closed(cutoff), rel=1e-10)
        if cutoff >= 3:
            assert log_integral(cutoff) <= 2 * math.pi * math.log(cutoff)


def test_kappa_values():
    assert kappa(2) == pytest.approx(5.925, abs=1e-3)
    assert kappa(3) == pytest.approx(9.951, abs=1e-3)
    assert kappa(4) == pytest.approx(1.782, abs=1e-3)
    with pytest.raises(ValueError):
        kappa(1)
    with pytest.raises(ValueError):
        kappa(1, 2.0)
    with pytest.raises(ValueError):
        kappa(0)
    # kappa_1 grows like sqrt(log L).
    assert kappa(1, 1e12) > kappa(1, 1e6) > kappa(1, 10.0)


def test_kappa_sequence():
    seq = kappa_sequence(100)
    assert seq.shape == (99,)
    with pytest.raises(ValueError):
        seq[0] = 0.0
    ns = np.arange(5, 101)
    assert np.all(np.diff(seq[3:] / ns) < 0)
    big = np.arange(50, 201)
    k = kappa_sqrt_fit()
    assert k > 0
    np.testing.assert_allclose(kappa_sequence()[big - 2] / (k * np.sqrt(big)), 1.0, rtol=0.05)


def test_f_prime():
    assert f_prime(0.0) == (0.0, 0.0)
    val, tail = f_prime(1e-3)
    assert val == pytest.approx(2 * kappa(2) * 1e-3 + 3 * kappa(3) * 1e-6, rel=1e-3)
    assert tail < 1e-300
    with pytest.raises(ValueError):
        f_prime(1.0)


def test_alpha_b_behaviour():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        a = [alpha_b(c, 0.5).alpha_b for c in (1e6, 1e8, 1e10, 1e12)]
    assert all(x > y for x, y in zip(a, a[1:]))
    bs = [alpha_b(3.0, b).alpha_b for b in (0.02, 0.05, 0.1, 0.2)]
    assert all(x > y for x, y in zip(bs, bs[1:]))
    res = alpha_b(10.0, 0.3)
    assert 0.3 < res.x_opt < 1 and res.radius == pytest.approx(res.x_opt / res.a_max)
    with pytest.raises(ValueError):
        alpha_b(10.0, 1.0)


def test_check_conditions():
    ok = check_conditions(0.01, 3.0, 0.2, 0.05)
    assert ok.passed and ok.ball_radius > 0
    assert ok.to_dict()["passed"] is True
    weak = check_conditions(1.0, 3.0, 5.0, 0.05)
    assert not weak.weak_field and not weak.passed
    small = check_conditions(0.01, 2.0, 0.2, 0.05)
    assert not small.passed and small.notes
    zero = check_conditions(0.0, 3.0, 0.2, 0.05)
    assert zero.passed
    with pytest.raises(ValueError):
        check_conditions(float("nan"), 3.0, 0.2, 0.05)


def test_constants_table():
    tab = constants_table(10.0).to_dict()
    assert tab["C_R"] == pytest.approx(math.pi / 4, rel=1e-9)
    assert tab["K"]["2"] == pytest.approx(0.5, rel=1e-15)
    assert len(tab["kappa_tail"]) == 16
    with pytest.raises(ValueError):
        constants_table(1.0)


def test_inequality_suite_small():
    out = inequality_suite(2000, 20, seed=3, kernel_lattice=LatticeSpec(2, 1.0, 1.0))
    assert out["passed"]
    assert out["checks"]["estim_fraction"]["samples"] == 2000
    assert out["checks"]["exchange_bound"]["worst_ratio"] < 1
    again = inequality_suite(2000, 20, seed=3, kernel_lattice=LatticeSpec(2, 1.0, 1.0))
    assert again == out


def test_k_p_decreasing():
    ps = [1.5, 2.0, 2.5, 3.0, 4.0, 6.0]
    vals = [k_p(p) for p in ps]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert s_pq(6, 6) > 0 and c6() > 0


def test_sobolev_on_gaussians():
    # u = exp(-a x^2): ||u||_6 = (pi/(6a))^(1/4), ||grad u||_2^2 = 3a (pi/(2a))^(3/2).
    for a in (0.1, 1.0, 7.0):
        lhs = (math.pi / (6 * a)) ** 0.25
        grad = math.sqrt(3 * a * (math.pi / (2 * a)) ** 1.5)
        assert lhs <= c6() * grad


def test_kappa_one_asymptote():
    lam = 1e12
    assert kappa(1, lam) / math.sqrt(math.log(lam)) == pytest.approx(
        c_r() * math.sqrt(2 / math.pi), rel=1e-12
    )


def test_kappa_four_formula():
    from bdfvac.certificate import _base_constants

    c = _base_constants()
    expected = 4 * c["C_R"] * k_p(2) * c["C_Q"] * math.sqrt(2) + 2 * math.sqrt(math.pi) * c["C_rho_4"]
    assert kappa(4) == pytest.approx(expected, rel=1e-14)


def test_a_function_endpoints():
    from bdfvac.certificate import _a_function

    k1 = kappa(1, 10.0)
    assert _a_function(0.3, 0.3, k1, 500) == 0.0
    assert _a_function(1 - 1e-4, 0.3, k1, 500) < 1e-3 * alpha_b(10.0, 0.3).a_max


def test_alpha_bound_boundary():
    ab = alpha_b(3.0, 0.05)
    below = check_conditions(0.999 * ab.alpha_b, 3.0, 0.0, 0.05)
    above = check_conditions(1.001 * ab.alpha_b, 3.0, 0.0, 0.05)
    assert below.alpha_bound and not above.alpha_bound
