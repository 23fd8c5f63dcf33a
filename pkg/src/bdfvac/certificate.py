"""Constants of the contraction estimate and the resulting existence certificate.

Everything here is a pure function of its arguments.  The expensive
constants are memoised.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special

from .dirac import pair_trace
from .lattice import LatticeSpec, build_lattice, c_norm, energy_scale

__all__ = [
    "C_INF",
    "k_p",
    "k_p_quadrature",
    "euclidean_power_integral",
    "s_pq",
    "c_m",
    "c_r",
    "c_r_profile",
    "c_r_profile_limit",
    "c6",
    "c_inf",
    "kappa",
    "kappa_sequence",
    "kappa_sqrt_fit",
    "f_prime",
    "alpha_b",
    "AlphaBound",
    "Certificate",
    "ConstantsTable",
    "check_conditions",
    "constants_table",
    "log_integral",
    "log_integral_closed",
    "inequality_suite",
]

C_INF = 1.0 / (2.0 * np.sqrt(np.pi))
MIN_CUTOFF = 3.0
DEFAULT_NMAX = 500


def k_p(p):
    """``K_p = (1/2pi) \\int d eta / (1 + eta^2)^(p/2)`` via the Beta function."""
    if not p > 1:
        raise ValueError(f"K_p needs p > 1, got {p}")
    return np.sqrt(np.pi) * special.gamma(0.5 * (p - 1)) / special.gamma(0.5 * p) / (2.0 * np.pi)


def k_p_quadrature(p):
    """Same integral by adaptive quadrature, as an independent check."""
    if not p > 1:
        raise ValueError(f"K_p needs p > 1, got {p}")
    val, _ = integrate.quad(lambda t: (1.0 + t * t) ** (-0.5 * p), 0.0, np.inf, epsabs=0.0, epsrel=1e-13)
    return val / np.pi


def euclidean_power_integral(q, method="quad"):
    """``\\int_{R^3} du / E(u)^q`` for ``q > 3``.

    ``method="quad"`` integrates radially; ``"closed"`` uses
    ``2 pi Gamma(3/2) Gamma((q-3)/2) / Gamma(q/2)``.
    """
    if not q > 3:
        raise ValueError(f"the integral diverges for q <= 3, got {q}")
    if method == "closed":
        return 2.0 * np.pi * special.gamma(1.5) * special.gamma(0.5 * (q - 3)) / special.gamma(0.5 * q)
    val, _ = integrate.quad(lambda r: r * r * (1.0 + r * r) ** (-0.5 * q), 0.0, np.inf, epsabs=0.0, epsrel=1e-13)
    return 4.0 * np.pi * val


def s_pq(p, q):
    """``S_{p,q} = 4 pi (2 pi)^(-3/p) (\\int du / E(u)^q)^(1/p)``."""
    return 4.0 * np.pi * (2.0 * np.pi) ** (-3.0 / p) * euclidean_power_integral(q) ** (1.0 / p)


@lru_cache(maxsize=None)
def c_m():
    """``C_M = 2 (\\int_0^inf t^2 dt / (E(2t)^(4/3) E(t)^2))^(1/2)``."""

    def f(t):
        return t * t / ((1.0 + 4.0 * t * t) ** (2.0 / 3.0) * (1.0 + t * t))

    head, _ = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=1e-13)
    tail, _ = integrate.quad(f, 1.0, np.inf, epsabs=0.0, epsrel=1e-13, limit=400)
    return 2.0 * np.sqrt(head + tail)


def c6():
    """Sharp Sobolev constant in ``||u||_6 <= C_6 ||grad u||_2`` on R^3.

    Closed form ``(1/sqrt(3 pi)) (4/sqrt(pi))^(1/3)``.
    """
    return (4.0 / np.sqrt(np.pi)) ** (1.0 / 3.0) / np.sqrt(3.0 * np.pi)


def c_inf():
    """``1/(2 sqrt(pi))``."""
    return C_INF


def c_r_profile(x, theta):
    """``E(2x)^theta \\int du / (E(2u)^(1+theta) |u - x|^2)`` for ``|x| = x``.

    The angular integral is done analytically:
    ``\\int dOmega / |u - x|^2 = (2 pi / (u x)) log|(u + x)/(u - x)|``.
    """
    if not 0 < theta < 2:
        raise ValueError("theta must lie in (0, 2)")
    p = 0.5 * (1.0 + theta)
    if x == 0.0:
        val, _ = integrate.quad(lambda u: (1.0 + 4.0 * u * u) ** (-p), 0.0, np.inf, epsabs=0.0, epsrel=1e-12)
        return 4.0 * np.pi * val

    def f(u):
        return u * np.log(abs((u + x) / (u - x))) * (1.0 + 4.0 * u * u) ** (-p)

    a, _ = integrate.quad(f, 0.0, x, epsabs=0.0, epsrel=1e-12, limit=200)
    b, _ = integrate.quad(f, x, 2.0 * x + 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    c, _ = integrate.quad(f, 2.0 * x + 1.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    return (1.0 + 4.0 * x * x) ** (0.5 * theta) * 2.0 * np.pi / x * (a + b + c)


def c_r_profile_limit(theta):
    """Limit of :func:`c_r_profile` as ``x -> infinity``: ``pi^2 cot(pi theta/2)/(1 - theta)``."""
    if abs(theta - 1.0) < 1e-7:
        return 0.5 * np.pi**3
    return np.pi**2 / np.tan(0.5 * np.pi * theta) / (1.0 - theta)


def _profile_sup(theta, n_scan=24):
    # Scan on x = t/(1-t) so the point at infinity is included exactly.
    ts = np.linspace(0.0, 1.0, n_scan + 1)[:-1]
    xs = ts / (1.0 - ts)
    vals = [c_r_profile(x, theta) for x in xs] + [c_r_profile_limit(theta)]
    i = int(np.argmax(vals))
    if i == len(vals) - 1 or i == 0:
        return vals[i]
    lo, hi = ts[i - 1], ts[i + 1]
    res = optimize.minimize_scalar(
        lambda t: -c_r_profile(t / (1.0 - t), theta), bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-6},
    )
    return max(vals[i], -res.fun)


@lru_cache(maxsize=None)
def c_r():
    """``C_R = (1/2pi^2) inf_theta sup_x E(2x)^theta \\int du / (E(2u)^(1+theta) |u - x|^2)``.

    The inner supremum is taken over a compactified profile scan with local
    refinement and includes the ``x -> infinity`` limit; the outer infimum is
    a bounded scalar search over ``theta``.
    """
    res = optimize.minimize_scalar(
        _profile_sup, bounds=(0.2, 1.8), method="bounded", options={"xatol": 1e-6}
    )
    return float(res.fun / (2.0 * np.pi**2))


@lru_cache(maxsize=None)
def _base_constants():
    s6 = s_pq(6, 6)
    s65 = s_pq(6, 5)
    s64 = s_pq(6, 4)
    cm = c_m()
    cr = c_r()
    c_6 = c6()
    u = s6 * c_6 / (2.0 * np.sqrt(np.pi))
    cq = np.sqrt(2.0) * u**3
    c_rho = s6 * c_6 / (4.0 * np.pi) * u**5
    c_rho4 = k_p(2) * s6 * c_6 / np.pi * u**2
    c_q2 = max(
        2.0**1.5 * k_p(1.5),
        s6 * c_6 * k_p(1.5) / np.sqrt(2.0 * np.pi),
        np.sqrt(5.0) * s65 * cm * c_6 / (np.pi * np.sqrt(2.0)),
    )
    c_rho2 = max(s6 * c_6 / (2.0 * np.pi), s65 * cm * c_6 / (np.pi**1.5 * np.sqrt(2.0)))
    c_rho3 = 15.0 * cm * s6 * s64**2 * c_6**4 / (np.pi * (4.0 * np.pi * C_INF) ** 3)
    return {
        "S_6": s6,
        "S_6_5": s65,
        "S_6_4": s64,
        "C_M": cm,
        "C_R": cr,
        "C_6": c_6,
        "C_Q": cq,
        "C_rho": c_rho,
        "C_rho_2": c_rho2,
        "C_rho_3": c_rho3,
        "C_rho_4": c_rho4,
        "C_Q_2": c_q2,
    }


def _check_lambda(cutoff):
    if cutoff is None or not cutoff >= MIN_CUTOFF:
        raise ValueError(f"the estimates need cutoff >= {MIN_CUTOFF}, got {cutoff}")


def kappa(n, cutoff=None):
    """Coefficient of ``alpha^n`` in the contraction estimate.

    Parameters
    ----------
    n : int
        Order, at least 1.
    cutoff : float
        Needed (and at least 3) for ``n = 1`` only; the higher orders do not
        depend on it.
    """
    if n < 1 or int(n) != n:
        raise ValueError("order must be a positive integer")
    c = _base_constants()
    cr = c["C_R"]
    if n == 1:
        _check_lambda(cutoff)
        lg = np.log(cutoff)
        return max(
            cr * np.sqrt(2.0 / np.pi) * np.sqrt(lg),
            np.sqrt(2.0) * cr + np.sqrt(lg) / (2.0**1.5 * np.sqrt(np.pi)),
        )
    if cutoff is not None:
        _check_lambda(cutoff)
    sq2 = np.sqrt(2.0)
    if n == 2:
        return c["C_Q_2"] * cr * sq2 + 2.0 * np.sqrt(np.pi) * c["C_rho_2"]
    if n == 3:
        return 3.0 * cr * k_p(1.5) * c["C_Q"] * sq2 + 2.0 * np.sqrt(np.pi) * c["C_rho_3"]
    if n == 4:
        return 4.0 * cr * k_p(2) * c["C_Q"] * sq2 + 2.0 * np.sqrt(np.pi) * c["C_rho_4"]
    return n * cr * k_p(0.5 * n) * c["C_Q"] * sq2 + 2.0 * n * k_p(0.5 * (n + 1)) * c["C_rho"] * np.sqrt(np.pi)


@lru_cache(maxsize=None)
def kappa_sequence(n_max=DEFAULT_NMAX):
    """``kappa_n`` for ``n = 2 .. n_max`` as a read-only array."""
    arr = np.array([kappa(n) for n in range(2, n_max + 1)])
    arr.setflags(write=False)
    return arr


def kappa_sqrt_fit(lo=50, hi=200):
    """Least-squares ``K`` in ``kappa_n ~ K sqrt(n)`` over ``lo <= n <= hi``."""
    ns = np.arange(lo, hi + 1)
    ks = kappa_sequence(max(hi, DEFAULT_NMAX))[ns - 2]
    s = np.sqrt(ns)
    return float(np.dot(s, ks) / np.dot(s, s))


def f_prime(x, n_max=DEFAULT_NMAX):
    """``f'(x) = sum_{n >= 2} n kappa_n x^(n-1)`` with a tail majorant.

    For ``n > n_max`` the bound ``kappa_n <= kappa_{n_max} n / n_max`` (valid
    because ``kappa_n / n`` decreases) and a ratio bound on ``n^2 x^(n-1)``
    give the tail.

    Returns
    -------
    value : float
        Partial sum plus tail bound.
    tail : float
        The tail bound alone.
    """
    if not 0 <= x < 1:
        raise ValueError("f' is evaluated on [0, 1)")
    ks = kappa_sequence(n_max)
    ns = np.arange(2, n_max + 1)
    partial = float(np.sum(ns * ks * x ** (ns - 1)))
    big = n_max + 1
    ratio = ((big + 1.0) / big) ** 2 * x
    if ratio >= 1:
        return np.inf, np.inf
    tail = ks[-1] / n_max * big**2 * x**n_max / (1.0 - ratio)
    return partial + tail, tail


@dataclass(frozen=True)
class AlphaBound:
    """Result of the coupling-bound optimisation.

    Attributes
    ----------
    alpha_b : float
        ``min(a(x_opt), 1 / (pi/4 + R_b))``.
    x_opt : float
        Maximiser of ``a(x) = (x - b)/(kappa_1 x + x f'(x))`` on ``[b, 1)``.
    radius : float
        ``R_b = x_opt / a(x_opt)``.
    a_max : float
    tail_ratio : float
        Tail bound of ``f'`` relative to ``f'`` at ``x_opt``.
    """

    alpha_b: float
    x_opt: float
    radius: float
    a_max: float
    tail_ratio: float


def _a_function(x, b, k1, n_max):
    fp, _ = f_prime(x, n_max)
    return (x - b) / (k1 * x + x * fp)


def alpha_b(cutoff, b, n_max=DEFAULT_NMAX):
    """Largest coupling covered by the contraction argument.

    Parameters
    ----------
    cutoff : float
        At least 3.
    b : float
        Weak-field level in ``(0, 1)``.

    Returns
    -------
    AlphaBound
    """
    _check_lambda(cutoff)
    if not 0 < b < 1:
        raise ValueError("b must lie in (0, 1)")
    k1 = kappa(1, cutoff)
    hi = 1.0 - 1e-9
    res = optimize.minimize_scalar(
        lambda x: -_a_function(x, b, k1, n_max), bounds=(b, hi), method="bounded",
        options={"xatol": 1e-10},
    )
    x = float(res.x)
    a = _a_function(x, b, k1, n_max)
    fp, tail = f_prime(x, n_max)
    ratio = tail / fp if fp > 0 else 0.0
    if ratio > 1e-6:
        warnings.warn(f"series tail is {ratio:.2e} of f' at the optimum", RuntimeWarning)
    radius = x / a
    return AlphaBound(min(a, 1.0 / (np.pi / 4.0 + radius)), x, radius, a, ratio)


def _banach_ball(alpha, cutoff, n_norm, n_max):
    """Smallest ``R`` satisfying the invariant-ball inequalities, or ``None``."""
    k1 = kappa(1, cutoff)
    src = 2.0 * np.sqrt(np.pi) * n_norm
    if alpha == 0:
        return src
    bprime = alpha * src
    if bprime >= 1:
        return None

    def h(x):
        fp, _ = f_prime(x, n_max)
        return x - bprime - alpha * x * (k1 + fp)

    res = optimize.minimize_scalar(lambda x: -h(x), bounds=(bprime, 1.0 - 1e-9), method="bounded",
                                   options={"xatol": 1e-12})
    if -res.fun < 0:
        return None
    lo = bprime
    if h(lo) >= 0:
        x = lo
    else:
        x = optimize.brentq(h, lo, float(res.x), xtol=1e-14)
    radius = x / alpha
    if alpha > 1.0 / (np.pi / 4.0 + radius):
        return None
    return radius


@dataclass
class Certificate:
    """Sufficient conditions for a unique stable vacuum and a contracting iteration."""

    alpha: float
    cutoff: float
    n_norm: float
    b: float
    weak_field: bool
    alpha_bound: bool
    banach_ball: bool
    alpha_b: float = float("nan")
    x_opt: float = float("nan")
    radius_b: float = float("nan")
    ball_radius: float = float("nan")
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return self.weak_field and self.alpha_bound and self.banach_ball

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def check_conditions(alpha, cutoff, n, b, n_max=DEFAULT_NMAX):
    """Evaluate the sufficient conditions for a given coupling, cutoff and source.

    Parameters
    ----------
    alpha : float
    cutoff : float
    n : DensityField or float
        External density, or directly its ``C``-norm.
    b : float
        Weak-field level in ``(0, 1)``.

    Returns
    -------
    Certificate
        Always returned; flags are false with a note when the estimates do
        not apply.
    """
    n_norm = float(n) if np.isscalar(n) else c_norm(n)
    if not (np.isfinite(alpha) and np.isfinite(cutoff) and np.isfinite(n_norm) and np.isfinite(b)):
        raise ValueError("inputs must be finite")
    cert = Certificate(alpha, cutoff, n_norm, b, False, False, False)
    if cutoff < MIN_CUTOFF:
        cert.notes.append(f"estimates need cutoff >= {MIN_CUTOFF}")
        return cert
    if not 0 < b < 1:
        cert.notes.append("b must lie in (0, 1)")
        return cert
    cert.weak_field = bool(2.0 * np.sqrt(np.pi) * alpha * n_norm <= b)
    ab = alpha_b(cutoff, b, n_max)
    cert.alpha_b, cert.x_opt, cert.radius_b = ab.alpha_b, ab.x_opt, ab.radius
    cert.alpha_bound = bool(alpha <= ab.alpha_b)
    radius = _banach_ball(alpha, cutoff, n_norm, n_max)
    cert.banach_ball = radius is not None
    if radius is not None:
        cert.ball_radius = radius
    return cert


@dataclass
class ConstantsTable:
    """Named constants, with ``kappa_1`` and the bound at a chosen cutoff."""

    C_inf: float
    C_6: float
    C_R: float
    C_M: float
    S: dict
    K: dict
    kappa_1: float
    kappa_2: float
    kappa_3: float
    kappa_4: float
    kappa_tail: list
    kappa_sqrt_K: float
    n_max: int
    cutoff: float

    def to_dict(self):
        return asdict(self)


def constants_table(cutoff=10.0, n_max=DEFAULT_NMAX):
    """Collect every constant; ``kappa_tail`` lists ``kappa_n`` for ``n = 5 .. 20``."""
    _check_lambda(cutoff)
    s_pairs = [(2, 4), (6, 4), (6, 5), (6, 6)]
    return ConstantsTable(
        C_inf=C_INF,
        C_6=c6(),
        C_R=c_r(),
        C_M=c_m(),
        S={f"{p},{q}": s_pq(p, q) for p, q in s_pairs},
        K={str(p): k_p(p) for p in (1.5, 2, 2.5, 3)},
        kappa_1=kappa(1, cutoff),
        kappa_2=kappa(2),
        kappa_3=kappa(3),
        kappa_4=kappa(4),
        kappa_tail=[kappa(n) for n in range(5, 21)],
        kappa_sqrt_K=kappa_sqrt_fit(),
        n_max=n_max,
        cutoff=float(cutoff),
    )


def log_integral(cutoff):
    """``\\int_{|u| <= L} du / (E(2u) E(u)^2)`` by radial quadrature."""
    val, _ = integrate.quad(
        lambda u: u * u / (np.sqrt(1.0 + 4.0 * u * u) * (1.0 + u * u)), 0.0, cutoff,
        epsabs=0.0, epsrel=1e-12, limit=200,
    )
    return 4.0 * np.pi * val


def log_integral_closed(cutoff):
    """Closed form ``4 pi (argsh(2L)/2 - artanh(sqrt(3) L / sqrt(1 + 4 L^2)) / sqrt(3))``."""
    s3 = np.sqrt(3.0)
    return 4.0 * np.pi * (
        0.5 * np.arcsinh(2.0 * cutoff)
        - np.arctanh(s3 * cutoff / np.sqrt(1.0 + 4.0 * cutoff * cutoff)) / s3
    )


def _random_vectors(rng, n):
    """Vectors with log-uniform moduli over ``[1e-3, 1e3]`` and isotropic directions."""
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = 10.0 ** rng.uniform(-3, 3, size=n)
    return d * r[:, None]


def _counterexamples(mask, payload, limit=5):
    idx = np.flatnonzero(~mask)[:limit]
    return [{k: np.asarray(v)[i].tolist() for k, v in payload.items()} for i in idx]


def inequality_suite(sample_count=100_000, kernel_count=1000, seed=0, kernel_lattice=None, rtol=1e-12):
    """Random-sample verification of the elementary inequalities used by the estimates.

    Parameters
    ----------
    sample_count : int
        Random points per pointwise inequality.
    kernel_count : int
        Random lattice kernels for the exchange bound; ``0`` skips it.
    seed : int
    kernel_lattice : LatticeSpec, optional
        Lattice for the kernel check; defaults to 4 points per axis, unit spacing, cutoff 2.
    rtol : float
        Relative slack absorbing floating-point rounding.

    Returns
    -------
    dict
        One entry per inequality with ``samples``, ``failures``, ``worst_ratio``
        (largest left/right ratio) and up to five counterexamples; ``passed``
        summarises all.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    rng = np.random.default_rng(seed)
    results = {}

    def record(name, lhs, rhs, payload):
        ok = lhs <= rhs * (1.0 + rtol)
        results[name] = {
            "samples": int(lhs.size),
            "failures": int(np.count_nonzero(~ok)),
            "worst_ratio": float(np.max(lhs / rhs)),
            "counterexamples": _counterexamples(ok, payload),
        }

    xi = _random_vectors(rng, sample_count)
    eta = _random_vectors(rng, sample_count)
    e_xi, e_diff, e_eta = energy_scale(xi), energy_scale(xi - eta), energy_scale(eta)
    for s in (0.5, 1.0, 2.0, 3.0):
        delta = s if s < 1 else s - 1.0
        record(f"peetre_sum[s={s}]", e_xi**s, 2.0**delta * (e_diff**s + e_eta**s), {"xi": xi, "eta": eta})
        for sign in (1.0, -1.0):
            t = sign * s
            record(
                f"peetre_prod[s={t}]",
                e_xi**t,
                2.0 ** abs(t) * e_diff**t * e_eta ** abs(t),
                {"xi": xi, "eta": eta},
            )

    p = _random_vectors(rng, sample_count)
    q = _random_vectors(rng, sample_count)
    # Mix in nearby pairs so the small-difference regime is probed.
    near = rng.random(sample_count) < 0.5
    q[near] = p[near] + _random_vectors(rng, int(near.sum())) * 1e-2
    frac = energy_scale(p + q) / (energy_scale(p) ** 2 * energy_scale(p - q) ** 2)
    record("estim_fraction", frac, np.full(sample_count, 2.0), {"p": p, "q": q})

    pt = pair_trace(p, q)
    bound = np.minimum(np.sum((p - q) ** 2, axis=1) / (2.0 * energy_scale(0.5 * (p + q)) ** 2), 2.0)
    # pair_trace suffers cancellation for nearly equal arguments; allow an absolute floor.
    record("estim_M", pt, bound + 4.0 * np.finfo(float).eps, {"p": p, "q": q})

    eta_s = np.abs(10.0 ** rng.uniform(-3, 3, size=sample_count)) * rng.choice([-1.0, 1.0], sample_count)
    lhs = 1.0 / (np.sqrt(energy_scale(p) ** 2 + eta_s**2) * np.sqrt(energy_scale(q) ** 2 + eta_s**2))
    rhs = 2.0 / (energy_scale(p + q) * np.sqrt(1.0 + eta_s**2))
    record("trick", lhs, rhs, {"p": p, "q": q, "eta": eta_s})

    lams = np.array([3.0, 10.0, 100.0])
    record(
        "estim_Log",
        np.array([log_integral(x) for x in lams]),
        2.0 * np.pi * np.log(lams),
        {"cutoff": lams},
    )

    if kernel_count:
        from .operators import KernelOperator, exchange_kernel, q_norm, r_norm

        spec = kernel_lattice or LatticeSpec(4, 1.0, 2.0)
        lat = build_lattice(spec)
        cr = c_r()
        lhs = np.empty(kernel_count)
        rhs = np.empty(kernel_count)
        for i in range(kernel_count):
            a = rng.standard_normal((lat.dim, lat.dim)) + 1j * rng.standard_normal((lat.dim, lat.dim))
            if i % 2:
                a = 0.5 * (a + a.conj().T)
            op = KernelOperator(lat, a)
            lhs[i] = r_norm(exchange_kernel(op))
            rhs[i] = cr * q_norm(op)
        record("exchange_bound", lhs, rhs, {"index": np.arange(kernel_count)})

    return {"passed": all(r["failures"] == 0 for r in results.values()), "checks": results}
