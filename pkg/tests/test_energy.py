import numpy as np
import pytest

from bdfvac.dirac import free_operator, lambda_projectors, p0_projector
from bdfvac.energy import (
    bdf_energy,
    expand_around,
    gap_lower_bound,
    is_admissible,
    kinetic_term,
    lower_bound_check,
    mean_field_operator,
    random_admissible,
)
from bdfvac.lattice import DensityField, coulomb_product, random_density, source_density
from bdfvac.operators import KernelOperator, charge_conjugate, density_of, random_hermitian


def _spinor(lattice, mode, sign):
    plus, minus = lambda_projectors(lattice.modes[mode])
    proj = plus if sign > 0 else minus
    v = proj @ np.array([1.0, 0.4, -0.2j, 0.3])
    u = np.zeros(lattice.dim, dtype=complex)
    u[4 * mode : 4 * mode + 4] = v / np.linalg.norm(v)
    return u


def test_vacuum_has_zero_energy(small_lattice):
    n = source_density(small_lattice, 1.0, 1.0)
    e = bdf_energy(KernelOperator.zeros(small_lattice), n, 0.3)
    assert e.total == 0.0 and e.direct == 0.0


def test_kinetic_of_particle_and_hole(small_lattice):
    lat = small_lattice
    mode = 7
    u = _spinor(lat, mode, +1)
    w = _spinor(lat, mode, -1)
    particle = KernelOperator(lat, np.outer(u, u.conj()))
    hole = KernelOperator(lat, -np.outer(w, w.conj()))
    assert kinetic_term(particle) == pytest.approx(lat.mode_energy[mode])
    assert kinetic_term(hole) == pytest.approx(lat.mode_energy[mode])


def test_kinetic_matches_dense_trace(small_lattice, rng):
    g = random_hermitian(small_lattice, rng)
    dense = np.trace(free_operator(small_lattice).matrix @ g.matrix).real
    assert kinetic_term(g) == pytest.approx(dense, rel=1e-12)


def _projector_difference(lattice, rng, scale):
    h = free_operator(lattice).matrix + random_hermitian(lattice, rng, scale).matrix
    w, u = np.linalg.eigh(h)
    neg = u[:, w < 0]
    return KernelOperator(lattice, neg @ neg.conj().T - p0_projector(lattice).matrix)


def test_kinetic_projector_form(small_lattice, rng):
    q = _projector_difference(small_lattice, rng, 0.5)
    assert kinetic_term(q, projector=True) == pytest.approx(kinetic_term(q), rel=1e-10)
    assert kinetic_term(q, projector=True) > 0
    n = source_density(small_lattice, 1.0, 1.0)
    e = bdf_energy(q, n, 0.2)
    e_proj = bdf_energy(q, n, 0.2, projector=True)
    assert e_proj.total == pytest.approx(e.total, rel=1e-10)


def test_kinetic_projector_form_is_conjugation_exact(small_lattice, rng):
    q = _projector_difference(small_lattice, rng, 1e-3)
    qc = charge_conjugate(q)
    assert kinetic_term(qc, projector=True) == pytest.approx(
        kinetic_term(q, projector=True), rel=1e-13
    )


def test_energy_terms(small_lattice, rng):
    g = random_hermitian(small_lattice, rng, 0.2)
    n = source_density(small_lattice, 1.0, 1.0)
    alpha = 0.1
    e = bdf_energy(g, n, alpha)
    rho = density_of(g)
    assert e.direct_external == pytest.approx(-alpha * coulomb_product(rho, n))
    assert e.direct_self == pytest.approx(0.5 * alpha * coulomb_product(rho, rho))
    assert e.exchange < 0
    assert bdf_energy(g, n, alpha, exchange=False).exchange == 0.0
    assert e.total == pytest.approx(sum(v for k, v in e.to_dict().items() if k != "total"))
    with pytest.raises(ValueError):
        bdf_energy(g, n, -1.0)


def test_energy_charge_conjugation_symmetry(small_lattice, rng):
    g = random_hermitian(small_lattice, rng, 0.2)
    n = source_density(small_lattice, 1.0, 0.8)
    e1 = bdf_energy(g, n, 0.2).total
    e2 = bdf_energy(charge_conjugate(g), -n, 0.2).total
    assert e2 == pytest.approx(e1, rel=1e-12)


def test_quadratic_expansion(small_lattice, rng):
    n = source_density(small_lattice, 1.0, 1.0)
    for exchange in (True, False):
        q = random_hermitian(small_lattice, rng, 0.3)
        g = random_hermitian(small_lattice, rng, 0.3)
        res, info = expand_around(q, g, n, 0.4, exchange)
        assert res <= 1e-12 * (1 + abs(info["energy_q"]))


def test_mean_field_operator(small_lattice, rng):
    q = random_hermitian(small_lattice, rng, 0.1)
    rho = random_density(small_lattice, rng)
    d = mean_field_operator(q, rho, 0.1)
    assert d.hermitian_defect() < 1e-13
    free = mean_field_operator(q, DensityField.zeros(small_lattice), 0.0)
    np.testing.assert_array_equal(free.matrix, free_operator(small_lattice).matrix)


def test_admissibility(small_lattice, rng):
    p0 = p0_projector(small_lattice)
    assert is_admissible(KernelOperator.zeros(small_lattice), p0)
    assert not is_admissible(KernelOperator.identity(small_lattice), p0)
    for _ in range(3):
        assert is_admissible(random_admissible(small_lattice, rng, 0.5, p0), p0)


@pytest.mark.parametrize("alpha", [0.1, 0.5, 4 / np.pi])
def test_lower_bound(small_lattice, rng, alpha):
    n = source_density(small_lattice, 2.0, 0.7)
    p0 = p0_projector(small_lattice)
    for _ in range(5):
        g = random_admissible(small_lattice, rng, 1.0, p0)
        out = lower_bound_check(g, n, alpha, p0=p0)
        assert out["admissible"] and out["bound_holds"]


def test_lower_bound_rejects_large_alpha(small_lattice):
    with pytest.raises(ValueError):
        lower_bound_check(KernelOperator.zeros(small_lattice), DensityField.zeros(small_lattice), 1.5)


def test_gap_lower_bound(small_lattice):
    zero = KernelOperator.zeros(small_lattice)
    assert gap_lower_bound(zero, DensityField.zeros(small_lattice), 0.5) == 1.0
    big = source_density(small_lattice, 100.0, 1.0)
    assert gap_lower_bound(zero, big, 1.0) is None


def test_zero_coupling_is_kinetic(small_lattice, rng):
    g = random_hermitian(small_lattice, rng, 0.2)
    n = source_density(small_lattice, 1.0, 1.0)
    assert bdf_energy(g, n, 0.0).total == kinetic_term(g)


def test_nonnegative_without_source(small_lattice, rng):
    zero = DensityField.zeros(small_lattice)
    p0 = p0_projector(small_lattice)
    for _ in range(5):
        g = random_admissible(small_lattice, rng, 1.0, p0)
        assert bdf_energy(g, zero, 4 / np.pi).total >= -1e-12


def test_furry_operator(small_lattice):
    from bdfvac.operators import potential_operator

    n = source_density(small_lattice, 1.0, 1.0)
    d = mean_field_operator(KernelOperator.zeros(small_lattice), -n, 0.3)
    ref = free_operator(small_lattice).matrix - 0.3 * potential_operator(n).matrix
    np.testing.assert_allclose(d.matrix, ref, atol=1e-15)


def test_expansion_trivial_cases(small_lattice, rng):
    n = source_density(small_lattice, 1.0, 1.0)
    q = random_hermitian(small_lattice, rng, 0.3)
    res, info = expand_around(q, KernelOperator.zeros(small_lattice), n, 0.4)
    assert res == 0.0 or res < 1e-15
    res, info = expand_around(q, -q, n, 0.4)
    assert info["lhs"] == 0.0 and res <= 1e-12
