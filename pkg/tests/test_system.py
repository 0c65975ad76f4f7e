import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fraclap.grid import GridFunction, GridSpec, laplacian_dd, sample_rhs
from fraclap.ratapprox import RationalModel, fit_rational, fit_rational_order, spectrum_interval
from fraclap.refsolve import builtin_field, rational_solution, solve_shifted
from fraclap.system import build_combined, eta1_estimate, recover_hadamard, solve_combined


def _sin(spec):
    return sample_rhs(builtin_field("sin", spec), spec)


def test_single_pole_structure():
    spec = GridSpec(M=5)
    f = _sin(spec)
    model = RationalModel(poles=np.array([2.0]), residues=np.array([0.7]), c_inf=0.1)
    system = build_combined(spec, model, f)
    n = spec.size
    A = laplacian_dd(spec).dense()
    expected = np.block([[A + 2.0 * np.eye(n), np.zeros((n, n))], [np.zeros((n, n)), np.eye(n)]])
    np.testing.assert_allclose(system.Htilde.toarray(), expected)
    np.testing.assert_allclose(system.F_tilde, np.concatenate([0.7 * f.values, 0.1 * f.values]))


def test_blocks_match_independent_shifted_solves():
    spec = GridSpec(M=8)
    f = _sin(spec)
    model = fit_rational_order(0.5, spectrum_interval(1, spec.h), 4)
    system = build_combined(spec, model, f)
    blocks = system.blocks(solve_combined(system))
    for l in range(4):
        ref = model.residues[l] * solve_shifted(spec, model.poles[l], f).values
        assert np.max(np.abs(blocks[l] - ref)) <= 1e-10
    np.testing.assert_allclose(blocks[4], model.c_inf * f.values, atol=1e-14)
    assert np.all(blocks[5:] == 0.0)


def test_trailing_zero_blocks_of_rhs():
    spec = GridSpec(M=5, d=2)
    model = fit_rational_order(0.3, spectrum_interval(2, spec.h), 4)
    system = build_combined(spec, model, _sin(spec))
    F = system.blocks(system.F_tilde)
    assert np.all(F[system.N_r + 1:] == 0)
    assert F.shape == (8, spec.size)


def test_non_power_of_two_model_is_padded():
    spec = GridSpec(M=9)
    model = RationalModel(poles=np.array([1.0, 2.0, 3.0]), residues=np.ones(3))
    system = build_combined(spec, model, _sin(spec))
    assert system.N_r == 4 and system.n_r == 2


def test_grid_mismatch_rejected():
    with pytest.raises(ValueError):
        build_combined(GridSpec(M=5), RationalModel(poles=np.zeros(1), residues=np.ones(1)), _sin(GridSpec(M=9)))


def test_two_point_hadamard_recovery():
    x, y = np.array([1.0, 2.0]), np.array([3.0, -5.0])
    np.testing.assert_allclose(recover_hadamard(np.concatenate([x, y]), 0), x + y)


def test_hadamard_recovery_of_zero():
    assert not np.any(recover_hadamard(np.zeros(16), 2))


def test_hadamard_recovery_equals_rational_solution():
    spec = GridSpec(M=8)
    f = _sin(spec)
    model = fit_rational_order(0.5, spectrum_interval(1, spec.h), 4)
    system = build_combined(spec, model, f)
    u = recover_hadamard(solve_combined(system), system.n_r, spec)
    assert np.max(np.abs(u.values - rational_solution(model, spec, f).values)) <= 1e-12


def test_hadamard_length_checked():
    with pytest.raises(ValueError):
        recover_hadamard(np.zeros(7), 1)


def test_eta1_single_term():
    spec = GridSpec(M=9)
    f = _sin(spec)
    model = RationalModel(poles=np.array([0.0]), residues=np.array([1.0]))
    system = build_combined(spec, model, f)
    x = solve_combined(system)
    eta, bound = eta1_estimate(x, recover_hadamard(x, 0), model, 1)
    assert eta == pytest.approx(math.sqrt(2), rel=1e-12)
    assert bound == pytest.approx(math.sqrt(2) * 1.0 * 8.0 / 1.0)


def test_eta1_zero_solution_rejected():
    model = RationalModel(poles=np.array([0.0]), residues=np.array([1.0]))
    with pytest.raises(ZeroDivisionError):
        eta1_estimate(np.zeros(6), np.zeros(3), model, 1)


def test_combined_inverse_has_unit_norm():
    spec = GridSpec(M=5)
    model = fit_rational_order(0.5, spectrum_interval(1, spec.h), 2)
    Ht = build_combined(spec, model, _sin(spec)).Htilde.toarray()
    assert np.linalg.norm(np.linalg.inv(Ht), 2) <= 1.0 + 1e-12


@settings(max_examples=15, deadline=None)
@given(s=st.floats(0.1, 0.9), d=st.integers(1, 2), seed=st.integers(0, 10**6))
def test_recovery_is_linear_and_exact(s, d, seed):
    spec = GridSpec(M=5, d=d)
    model = fit_rational(s, spectrum_interval(d, spec.h), tol=1e-6)
    f = GridFunction(np.random.default_rng(seed).standard_normal(spec.size), spec)
    system = build_combined(spec, model, f)
    u = recover_hadamard(solve_combined(system), system.n_r)
    ref = rational_solution(model, spec, f).values
    assert np.max(np.abs(u - ref)) <= 1e-12 * max(1.0, np.abs(ref).max())
