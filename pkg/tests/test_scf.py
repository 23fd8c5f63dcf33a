import numpy as np
import pytest

from bdfvac.exceptions import Diverged, GapCollapse, MaxIterExceeded
from bdfvac.lattice import DensityField, LatticeSpec, build_lattice, c_norm, coulomb_product
from bdfvac.operators import KernelOperator, density_of
from bdfvac.scf import (
    IterationRecord,
    SolverConfig,
    SourceSpec,
    fit_geometric_rate,
    negative_spectral_projector,
    solve,
    verify_solution,
)
from bdfvac.dirac import free_operator, p0_projector

SPEC = LatticeSpec(4, 1.0, 2.0)


@pytest.fixture(scope="module")
def lattice():
    return build_lattice(SPEC)


@pytest.fixture(scope="module")
def solved(lattice):
    cfg = SolverConfig(0.1, SPEC, verify_samples=50)
    return solve(cfg, lattice)


def test_negative_projector_of_free_operator(lattice):
    p = negative_spectral_projector(free_operator(lattice))
    np.testing.assert_allclose(p.matrix, p0_projector(lattice).matrix, atol=1e-12)
    with pytest.raises(GapCollapse) as info:
        negative_spectral_projector(free_operator(lattice), gap_tol=1.5)
    assert info.value.min_abs_eig == pytest.approx(1.0)


def test_fit_geometric_rate():
    assert fit_geometric_rate([1.0, 0.5**1, 0.5**2, 0.5**3, 0.5**4]) == pytest.approx(0.5)
    assert fit_geometric_rate([1.0, 0.1]) is None
    assert fit_geometric_rate([1.0, 1e-20, 1e-30]) is None


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(-1.0, SPEC).validate()
    with pytest.raises(ValueError):
        SolverConfig(0.1, SPEC, scheme="anderson").validate()
    with pytest.raises(ValueError):
        SolverConfig(0.1, SPEC, preconditioner="none").validate()
    with pytest.raises(ValueError):
        SolverConfig(0.1, SPEC, max_iter=0).validate()
    with pytest.raises(ValueError):
        SolverConfig(0.1, LatticeSpec(3, 1.0, 1.0)).validate()


def test_zero_source_gives_free_vacuum(lattice):
    cfg = SolverConfig(0.3, SPEC, SourceSpec(charge=0.0))
    rep = solve(cfg, lattice)
    assert rep.converged and rep.iterations == 1
    assert rep.energy.total == pytest.approx(0.0, abs=1e-12)
    assert rep.q.hs_norm() < 1e-12


def test_zero_coupling(lattice):
    rep = solve(SolverConfig(0.0, SPEC), lattice)
    assert rep.converged
    assert rep.q.hs_norm() < 1e-12 and rep.energy.total == pytest.approx(0.0, abs=1e-14)


def test_converged_solution(solved, lattice):
    rep = solved
    assert rep.converged and rep.iterations <= 10
    assert rep.increments[-1] <= 1e-8
    assert rep.diagnostics["passed"], rep.diagnostics
    n = rep.source
    floor = -0.5 * 0.1 * coulomb_product(n, n)
    assert floor <= rep.energy.total <= 0
    assert abs(rep.records[-1].charge) <= 1e-9
    np.testing.assert_allclose(
        rep.rho_prime.values, (rep.density - n).values, atol=1e-8
    )
    # The vacuum screens: induced density opposes the source at k = 0 neighbours.
    assert c_norm(rep.rho_prime) < c_norm(n)
    summary = rep.summary()
    assert summary["verdict"] == "converged" and summary["iterations"] == rep.iterations
    row = rep.records[0].to_row()
    assert list(row) == [
        "iter", "x_increment", "energy_total", "energy_kinetic", "energy_direct",
        "energy_exchange", "charge", "min_abs_eig",
    ]


def test_schemes_reach_same_vacuum(solved, lattice):
    plain = solve(SolverConfig(0.1, SPEC, scheme="plain"), lattice, verify=False)
    cont = solve(SolverConfig(0.1, SPEC, preconditioner="continuum"), lattice, verify=False)
    for rep in (plain, cont):
        assert rep.converged
        np.testing.assert_allclose(rep.q.matrix, solved.q.matrix, atol=1e-8)


def test_reduced_problem_preconditioning(lattice):
    # Without exchange the lattice preconditioner removes the linear error term.
    plain = solve(SolverConfig(0.5, SPEC, scheme="plain", exchange=False), lattice, verify=False)
    pre = solve(SolverConfig(0.5, SPEC, exchange=False), lattice, verify=False)
    assert plain.converged and pre.converged
    assert pre.iterations < plain.iterations
    assert pre.rate <= plain.rate


def test_warm_start_and_callback(solved, lattice):
    seen = []
    rep = solve(
        SolverConfig(0.1, SPEC),
        lattice,
        initial=(solved.q, solved.rho_prime),
        callback=lambda rec, q, rho: seen.append(rec),
        verify=False,
    )
    assert rep.converged and rep.iterations == 1
    assert len(seen) == 1 and isinstance(seen[0], IterationRecord)


def test_lattice_mismatch_rejected():
    with pytest.raises(ValueError):
        solve(SolverConfig(0.1, SPEC), build_lattice(LatticeSpec(2, 1.0, 1.0)))


def test_max_iter_verdict(lattice):
    rep = solve(SolverConfig(0.5, SPEC, max_iter=2), lattice)
    assert rep.verdict == "max_iter" and rep.iterations == 2
    assert rep.diagnostics == {}
    with pytest.raises(MaxIterExceeded):
        rep.raise_for_verdict()


def test_diverged_verdict(lattice):
    cfg = SolverConfig(3.0, SPEC, SourceSpec(charge=20.0), scheme="plain", max_iter=60)
    rep = solve(cfg, lattice)
    assert rep.verdict == "diverged"
    with pytest.raises(Diverged):
        rep.raise_for_verdict()


def test_gap_collapse_verdict(lattice):
    rep = solve(SolverConfig(0.1, SPEC, gap_tol=1.5), lattice)
    assert rep.verdict == "gap_collapse" and rep.iterations == 0
    with pytest.raises(GapCollapse) as info:
        rep.raise_for_verdict()
    # The source pulls the smallest level just below the free gap edge.
    assert 0.99 < info.value.min_abs_eig < 1.0


def test_verification_flags_a_wrong_state(solved, lattice):
    bad = type(solved)(solved.config, solved.q * 1.5, solved.rho_prime, solved.source)
    diag = verify_solution(bad, samples=10)
    assert not diag["commutator"]["passed"]
    assert not diag["passed"]


def test_determinism(lattice):
    a = solve(SolverConfig(0.1, SPEC, verify_samples=10), lattice)
    b = solve(SolverConfig(0.1, SPEC, verify_samples=10), lattice)
    np.testing.assert_array_equal(a.q.matrix, b.q.matrix)
    assert a.diagnostics == b.diagnostics
