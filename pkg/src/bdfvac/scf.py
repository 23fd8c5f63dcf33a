"""Fixed-point iterations for the self-consistent polarized vacuum.

Two schemes are available:

``plain``
    ``Q_{j+1} = chi_(-inf,0)(D0 + alpha (rho_{Q_j} - n) * 1/|x| - alpha R_{Q_j}) - P0``.
``preconditioned``
    Carries the total density ``rho'`` as a separate unknown; the new
    projector is built from ``rho'_j`` and the density is mixed with the
    Fourier multiplier ``L = (1 + alpha B(k))^-1``:
    ``rho'_{j+1} = L rho'_{Q_{j+1}} + (1 - L) rho'_j``.  ``B`` is the
    first-order response of the lattice model by default, or the continuum
    function of ``|k|``.

Both start from ``(Q, rho') = (0, -n)`` and stop when the increment in the
product norm ``C_R sqrt(2) ||dQ||_Q + 2 sqrt(pi) ||d rho'||_C`` drops below
the tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from .certificate import c_r
from .dirac import free_operator, p0_projector
from .energy import (
    EnergyBreakdown,
    bdf_energy,
    gap_lower_bound,
    is_admissible,
    mean_field_operator,
)
from .exceptions import Diverged, GapCollapse, MaxIterExceeded
from .lattice import LatticeSpec, build_lattice, c_norm, coulomb_product, source_density
from .operators import (
    KernelOperator,
    density_of,
    exchange_kernel,
    exchange_pairing,
    q_norm,
    vacuum_charge,
)
from .response import lattice_response, response_on_lattice

__all__ = [
    "SCHEMES",
    "PRECONDITIONERS",
    "SourceSpec",
    "SolverConfig",
    "IterationRecord",
    "SolverReport",
    "negative_spectral_projector",
    "iterate_plain",
    "iterate_preconditioned",
    "solve",
    "verify_solution",
    "fit_geometric_rate",
]

logger = logging.getLogger(__name__)

SCHEMES = ("plain", "preconditioned")
PRECONDITIONERS = ("lattice", "continuum")


@dataclass(frozen=True)
class SourceSpec:
    """External density profile."""

    profile: str = "gaussian"
    charge: float = 1.0
    width: float = 1.0

    def density(self, lattice):
        return source_density(lattice, self.charge, self.width, self.profile)


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one self-consistent solve.

    Parameters
    ----------
    alpha : float
        Coupling constant, non-negative.
    lattice : LatticeSpec
    source : SourceSpec
    scheme : {"plain", "preconditioned"}
    preconditioner : {"lattice", "continuum"}
        Response function inside the mixing multiplier.
    exchange : bool
        Keep the exchange term; ``False`` solves the reduced problem.
    tol : float
        Stopping threshold on the product-norm increment.
    max_iter : int
    gap_tol : float
        Smallest admissible ``|eigenvalue|`` of the mean-field operator.
    divergence_window : int
        Consecutive increment growths that abort the run.
    verify_samples : int
        Random admissible perturbations used by the optimality check.
    seed : int
        Seed of the verification sampler.
    """

    alpha: float
    lattice: LatticeSpec
    source: SourceSpec = field(default_factory=SourceSpec)
    scheme: str = "preconditioned"
    preconditioner: str = "lattice"
    exchange: bool = True
    tol: float = 1e-8
    max_iter: int = 200
    gap_tol: float = 1e-6
    divergence_window: int = 5
    verify_samples: int = 100
    seed: int = 0

    def validate(self):
        if not self.alpha >= 0:
            raise ValueError("alpha must be non-negative")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(
                f"preconditioner must be one of {PRECONDITIONERS}, got {self.preconditioner!r}"
            )
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if not self.gap_tol >= 0:
            raise ValueError("gap_tol must be non-negative")
        self.lattice.validate()
        return self

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class IterationRecord:
    """Diagnostics of one iterate."""

    iteration: int
    x_increment: float
    energy: EnergyBreakdown
    charge: float
    min_abs_eig: float

    def to_row(self):
        return {
            "iter": self.iteration,
            "x_increment": self.x_increment,
            "energy_total": self.energy.total,
            "energy_kinetic": self.energy.kinetic,
            "energy_direct": self.energy.direct,
            "energy_exchange": self.energy.exchange,
            "charge": self.charge,
            "min_abs_eig": self.min_abs_eig,
        }


@dataclass
class SolverReport:
    """Outcome of :func:`solve`.

    Attributes
    ----------
    verdict : str
        ``"converged"``, ``"max_iter"``, ``"diverged"`` or ``"gap_collapse"``.
    q, rho_prime : KernelOperator, DensityField
        Last iterate.
    records : list of IterationRecord
    rate : float or None
        Fitted geometric contraction rate of the increments.
    diagnostics : dict
        Output of :func:`verify_solution` for converged runs.
    """

    config: SolverConfig
    q: KernelOperator
    rho_prime: object
    source: object
    records: list = field(default_factory=list)
    verdict: str = "max_iter"
    message: str = ""
    rate: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.verdict == "converged"

    @property
    def increments(self):
        return np.array([r.x_increment for r in self.records])

    @property
    def energy(self):
        return self.records[-1].energy if self.records else None

    @property
    def iterations(self):
        return len(self.records)

    @property
    def density(self):
        """Induced density ``rho_Q`` of the last iterate."""
        return density_of(self.q)

    def raise_for_verdict(self):
        if self.verdict == "max_iter":
            raise MaxIterExceeded(self.message or "iteration budget exhausted")
        if self.verdict == "diverged":
            raise Diverged(self.message or "increments kept growing")
        if self.verdict == "gap_collapse":
            raise GapCollapse(self.diagnostics.get("min_abs_eig", np.nan), self.config.gap_tol)

    def summary(self):
        last = self.records[-1] if self.records else None
        return {
            "verdict": self.verdict,
            "message": self.message,
            "iterations": self.iterations,
            "final_increment": last.x_increment if last else None,
            "rate": self.rate,
            "energy": last.energy.to_dict() if last else None,
            "charge": last.charge if last else None,
            "min_abs_eig": last.min_abs_eig if last else None,
        }


def negative_spectral_projector(h, gap_tol=1e-6, return_spectrum=False):
    """Projector onto the negative spectral subspace of a Hermitian operator.

    Raises
    ------
    GapCollapse
        If some eigenvalue has modulus below ``gap_tol``.
    """
    w, u = linalg.eigh(h.matrix, driver="evr", check_finite=False)
    min_abs = float(np.min(np.abs(w)))
    if min_abs < gap_tol:
        raise GapCollapse(min_abs, gap_tol)
    neg = u[:, w < 0]
    p = KernelOperator(h.lattice, neg @ neg.conj().T)
    if return_spectrum:
        return p, w
    return p


@dataclass
class _State:
    q: KernelOperator
    rho_prime: object
    r_q: KernelOperator | None


def _next_projector(state, n, config, ctx):
    alpha = config.alpha
    d = mean_field_operator(state.q, state.rho_prime, alpha, config.exchange, ctx["d0"], state.r_q)
    p, w = negative_spectral_projector(d, config.gap_tol, return_spectrum=True)
    q_new = p - ctx["p0"]
    return q_new, float(np.min(np.abs(w)))


def _exchange_of(q, config):
    if config.exchange and config.alpha != 0:
        return exchange_kernel(q)
    return None


def _context(lattice, config):
    ctx = {"p0": p0_projector(lattice), "d0": free_operator(lattice), "c_r": c_r()}
    if config.scheme == "preconditioned":
        if config.preconditioner == "lattice":
            b = lattice_response(lattice)
        else:
            b = response_on_lattice(lattice)
        ctx["mixing"] = 1.0 / (1.0 + config.alpha * b)
    return ctx


def iterate_plain(state, n, config, ctx):
    """One step of the plain scheme; ``rho'`` is always ``rho_Q - n``."""
    q_new, gap = _next_projector(state, n, config, ctx)
    rho_new = density_of(q_new) - n
    return _State(q_new, rho_new, _exchange_of(q_new, config)), gap


def iterate_preconditioned(state, n, config, ctx):
    """One step of the preconditioned scheme with density mixing."""
    q_new, gap = _next_projector(state, n, config, ctx)
    target = density_of(q_new) - n
    mix = ctx["mixing"]
    rho_new = target.multiply(mix) + state.rho_prime.multiply(1.0 - mix)
    return _State(q_new, rho_new, _exchange_of(q_new, config)), gap


def fit_geometric_rate(increments, floor=1e-13):
    """Least-squares geometric rate of a sequence of increments.

    Increments at or below ``floor`` (relative to the first one) and the very
    first increment are excluded; at least two points are needed.
    """
    inc = np.asarray(increments, dtype=float)
    if inc.size < 3 or inc[0] <= 0:
        return None
    idx = np.arange(inc.size)
    keep = (idx >= 1) & (inc > floor * inc[0]) & (inc > 0)
    if np.count_nonzero(keep) < 2:
        return None
    slope = np.polyfit(idx[keep], np.log(inc[keep]), 1)[0]
    return float(np.exp(slope))


def solve(config, lattice=None, n=None, initial=None, callback=None, verify=True):
    """Run the chosen fixed-point scheme.

    Parameters
    ----------
    config : SolverConfig
    lattice : Lattice, optional
        Reuse an existing lattice with matching specification.
    n : DensityField, optional
        External density; built from ``config.source`` by default.
    initial : tuple (KernelOperator, DensityField), optional
        Warm start; defaults to ``(0, -n)``.
    callback : callable, optional
        Called as ``callback(record, q, rho_prime)`` after every iterate.
    verify : bool
        Run :func:`verify_solution` after convergence.

    Returns
    -------
    SolverReport
        Failures are reported through ``verdict`` rather than raised.
    """
    config.validate()
    if lattice is None:
        lattice = build_lattice(config.lattice)
    elif lattice.spec != config.lattice:
        raise ValueError("lattice does not match the configuration")
    if n is None:
        n = config.source.density(lattice)
    ctx = _context(lattice, config)
    if initial is None:
        q0 = KernelOperator.zeros(lattice)
        rho0 = -n
    else:
        q0, rho0 = initial
        if config.scheme == "plain":
            rho0 = density_of(q0) - n
    state = _State(q0, rho0, _exchange_of(q0, config))
    step = iterate_plain if config.scheme == "plain" else iterate_preconditioned
    report = SolverReport(config, q0, rho0, n)
    growth = 0
    prev_inc = np.inf
    for it in range(1, config.max_iter + 1):
        try:
            new, gap = step(state, n, config, ctx)
        except GapCollapse as exc:
            report.verdict = "gap_collapse"
            report.message = str(exc)
            report.diagnostics = {"min_abs_eig": exc.min_abs_eig}
            logger.info("gap collapse at iteration %d: %s", it, exc)
            break
        dq = new.q - state.q
        inc = ctx["c_r"] * np.sqrt(2.0) * q_norm(dq) + 2.0 * np.sqrt(np.pi) * c_norm(
            new.rho_prime - state.rho_prime
        )
        energy = bdf_energy(new.q, n, config.alpha, config.exchange, new.r_q, projector=True)
        charge = vacuum_charge(new.q, ctx["p0"])["str"]
        rec = IterationRecord(it, float(inc), energy, charge, gap)
        report.records.append(rec)
        state = new
        report.q, report.rho_prime = state.q, state.rho_prime
        logger.debug("iter %d increment %.3e energy %.6e", it, inc, energy.total)
        if callback is not None:
            callback(rec, state.q, state.rho_prime)
        if inc <= config.tol:
            report.verdict = "converged"
            break
        growth = growth + 1 if inc > prev_inc else 0
        prev_inc = inc
        if growth >= config.divergence_window:
            report.verdict = "diverged"
            report.message = f"increment grew {growth} times in a row"
            break
    else:
        report.verdict = "max_iter"
        report.message = f"no convergence in {config.max_iter} iterations"
    report.rate = fit_geometric_rate(report.increments)
    if report.converged and verify:
        report.diagnostics = verify_solution(report, n=n, ctx=ctx)
    return report


def verify_solution(report, n=None, ctx=None, samples=None, seed=None):
    """Post-solution checks.

    Returns
    -------
    dict
        ``commutator`` (Frobenius norm of ``[P, D_Q]``, pass if at most
        ten times the tolerance), ``charge`` (integer and zero when
        ``||Q|| < 1``), ``stability`` (``alpha d pi / 4 <= 1`` with
        ``d = 1/(1 - alpha (2 sqrt(pi) ||rho'||_C + sqrt(2) C_R ||Q||_Q))``),
        ``optimality`` (energy change of random admissible perturbations at
        least ``-10 tol``) and ``lower_bound``.
    """
    config = report.config
    q = report.q
    lat = q.lattice
    if n is None:
        n = report.source
    if ctx is None:
        ctx = _context(lat, config)
    samples = config.verify_samples if samples is None else samples
    seed = config.seed if seed is None else seed
    tol = config.tol
    alpha = config.alpha
    p0 = ctx["p0"]
    rho_true = density_of(q) - n
    d = mean_field_operator(q, rho_true, alpha, config.exchange, ctx["d0"])
    p = p0 + q
    comm = p.commutator(d).hs_norm()
    out = {"commutator": {"value": comm, "threshold": 10.0 * tol, "passed": bool(comm <= 10.0 * tol)}}

    charge = vacuum_charge(q, p0)
    op_norm = float(np.max(np.abs(linalg.eigh(q.matrix, eigvals_only=True, driver="evr"))))
    small = op_norm < 1.0
    charge_ok = charge["is_integer"] and (charge["integer"] == 0 or not small)
    out["charge"] = {**charge, "operator_norm": op_norm, "passed": bool(charge_ok)}

    gap = gap_lower_bound(q, rho_true, alpha, ctx["c_r"])
    if gap is None:
        out["stability"] = {"d": None, "passed": False}
    else:
        dval = 1.0 / gap
        out["stability"] = {"d": dval, "value": alpha * dval * np.pi / 4.0, "passed": bool(alpha * dval * np.pi / 4.0 <= 1.0)}

    out["optimality"] = _optimality_sampling(q, p, d, n, alpha, config.exchange, samples, seed, tol)

    e = bdf_energy(q, n, alpha, config.exchange, projector=True).total
    floor = -0.5 * alpha * coulomb_product(n, n)
    out["lower_bound"] = {
        "energy": e,
        "floor": floor,
        "admissible": is_admissible(q, p0),
        "passed": bool(e >= floor - 10.0 * tol),
    }
    out["passed"] = all(v["passed"] for v in out.values() if isinstance(v, dict))
    return out


def _optimality_sampling(q, p, d, n, alpha, exchange, samples, seed, tol):
    """Energy change under random particle-hole rotations of the projector ``p``.

    Each sample replaces an occupied unit vector ``v`` by
    ``cos(t) v + sin(t) w`` with ``w`` unoccupied, which keeps ``P0 + Q + gamma``
    a projector and hence admissible.  The change is evaluated with the exact
    quadratic expansion around ``Q``.
    """
    lat = q.lattice
    rng = np.random.default_rng(seed)
    w, u = linalg.eigh(p.matrix, driver="evr", check_finite=False)
    occ = u[:, w > 0.5]
    emp = u[:, w <= 0.5]
    worst = np.inf
    for _ in range(samples):
        v = occ @ (rng.standard_normal(occ.shape[1]) + 1j * rng.standard_normal(occ.shape[1]))
        x = emp @ (rng.standard_normal(emp.shape[1]) + 1j * rng.standard_normal(emp.shape[1]))
        v /= np.linalg.norm(v)
        x /= np.linalg.norm(x)
        t = 10.0 ** rng.uniform(-3, 0) * 0.5 * np.pi
        v2 = np.cos(t) * v + np.sin(t) * x
        gamma = KernelOperator(lat, np.outer(v2, v2.conj()) - np.outer(v, v.conj()))
        linear = float(np.real(np.vdot(v2, d.matrix @ v2) - np.vdot(v, d.matrix @ v)))
        rho_g = density_of(gamma)
        change = linear + 0.5 * alpha * coulomb_product(rho_g, rho_g)
        if exchange:
            change -= 0.5 * alpha * exchange_pairing(gamma)
        worst = min(worst, change)
    if samples == 0:
        worst = 0.0
    return {"samples": samples, "min_energy_change": float(worst), "passed": bool(worst >= -10.0 * tol)}
