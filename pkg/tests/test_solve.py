import numpy as np
import pytest

from fracheat.errors import ContractError
from fracheat.fields import (SpaceTimeField, random_smooth_field,
                             to_frequency, truncate_time)
from fracheat.operators import apply_Hs
from fracheat.solve import (RTOL_SOLVE, SourceFunction, bilinear_form,
                            boundedness_ratio, bump_source, coercivity_ratio,
                            raised_cosine, solve, solve_field,
                            verify_wellposedness)


def _mode_source(sys, grid, horizon, amplitudes, t_half=1.5, power=5):
    """Admissible source with prescribed per-mode amplitudes (mode 0 free)."""
    window = raised_cosine(grid.times(), 0.0, t_half, power)
    coeffs = np.zeros((sys.K, grid.n_t))
    for k, a in amplitudes.items():
        coeffs[k] = a * window
    samples = sys.synthesize(coeffs)
    return SourceFunction(sys, grid, tuple(range(sys.n_nodes)),
                          (-t_half, t_half), samples, horizon)


def test_zero_source_gives_zero(unit_circle, grid_small):
    src = _mode_source(unit_circle, grid_small, 3.0, {})
    report = solve(src, 0.5)
    assert report.solution.norm() == 0.0
    assert report.residual_norm == 0.0
    assert report.past_violation_norm == 0.0


def test_manufactured_pair_recovery(unit_circle, grid_small):
    # w smooth, compact in [-T/2, T/2], no zero-bin content; f = H^s w.
    # The solve must reproduce w on M x (-T, T) to 1e-8 relative.
    rng = np.random.default_rng(70)
    s = 0.5
    T = 3.0
    window = raised_cosine(grid_small.times(), 0.0, T / 2.0, 5)
    coeffs = np.zeros((unit_circle.K, grid_small.n_t))
    for k in range(1, 10):
        coeffs[k] = rng.standard_normal() * window * np.cos(
            (k + 1) * grid_small.times())
    w = SpaceTimeField(unit_circle, grid_small, coeffs)
    f_field = apply_Hs(w, s)
    u_T, _ = solve_field(f_field, s, T)
    err = (u_T - w).norm((-T, T), open_window=True)
    assert err < 1e-8 * w.norm()


def test_solution_vanishes_in_past(unit_circle, grid_mid):
    # calibrated decayed source (eigenvalues 9): past leakage and residual
    # both reach the periodization floor
    src = _mode_source(unit_circle, grid_mid, 5.0, {5: 1.0, 6: 0.7}, t_half=2.0)
    report = solve(src, 0.5)
    assert report.past_violation_norm < 1e-8 * report.f_norm
    assert not report.flagged


def test_unit_mass_source_flags_residual(unit_circle, grid_mid):
    # a positive unit-mass bump carries zero-mode content whose branch-point
    # tail dominates periodization; the solve flags, it does not fail
    src = bump_source(unit_circle, grid_mid, 5.0, center=[1.0], radius=0.8,
                      t_center=0.0, t_halfwidth=2.0)
    report = solve(src, 0.5)
    assert report.flagged
    assert report.residual_rel > RTOL_SOLVE


def test_solver_linearity(unit_circle, grid_small):
    f = _mode_source(unit_circle, grid_small, 3.0, {1: 1.0, 4: -0.3})
    h = _mode_source(unit_circle, grid_small, 3.0, {2: 0.5, 5: 1.2})
    a, b = 2.0, -1.25
    combo = f.scaled(a) + h.scaled(b)
    s = 0.6
    u_combo = solve(combo, s).solution
    u_f = solve(f, s).solution
    u_h = solve(h, s).solution
    lin = SpaceTimeField(unit_circle, grid_small,
                         a * u_f.coeffs + b * u_h.coeffs)
    assert (u_combo - lin).norm() < 1e-12 * max(u_combo.norm(), 1e-300)


def test_repeat_solve_bit_identical(unit_circle, grid_small):
    src = _mode_source(unit_circle, grid_small, 3.0, {1: 1.0, 3: 0.5})
    a = solve(src, 0.5).solution
    b = solve(src, 0.5).solution
    assert np.array_equal(a.coeffs, b.coeffs)


def test_solution_causality(unit_circle, grid_small):
    # perturbing f only at t in (t0, T) leaves the solution unchanged
    # on M x (-T, t0)
    T, t0, s = 3.0, 0.5, 0.5
    base = _mode_source(unit_circle, grid_small, T, {1: 1.0, 2: 0.4},
                        t_half=2.0)
    pert_window = raised_cosine(grid_small.times(), 1.7, 1.0, 5)
    coeffs = np.zeros((unit_circle.K, grid_small.n_t))
    coeffs[3] = 0.7 * pert_window
    pert = SourceFunction(unit_circle, grid_small,
                          tuple(range(unit_circle.n_nodes)), (0.5, 2.9),
                          unit_circle.synthesize(coeffs), T)
    u1 = solve(base, s).solution
    u2 = solve(base + pert, s).solution
    d = (u2 - u1).norm((-T, t0), open_window=True)
    assert d < 1e-6 * u1.norm()


def test_bilinear_form_two_factor_agreement(unit_circle, grid_small):
    rng = np.random.default_rng(71)
    u = random_smooth_field(unit_circle, grid_small, rng)
    v = random_smooth_field(unit_circle, grid_small, rng)
    s = 0.5
    a = bilinear_form(u, v, s, via="symbol")
    b = bilinear_form(u, v, s, via="factors")
    assert abs(a - b) < 1e-12 * abs(a)


def test_boundedness_and_coercivity_random_fields(unit_circle, grid_small):
    rng = np.random.default_rng(72)
    for s in (0.25, 0.5, 0.75, 0.99):
        floor = np.cos(s * np.pi / 2.0)
        for _ in range(10):
            u = random_smooth_field(unit_circle, grid_small, rng)
            v = random_smooth_field(unit_circle, grid_small, rng)
            assert boundedness_ratio(u, v, s) <= 1.0 + 1e-9
            assert coercivity_ratio(u, s) >= floor - 1e-9


def test_coercivity_tightens_as_s_vanishes(unit_circle, grid_small):
    rng = np.random.default_rng(73)
    u = random_smooth_field(unit_circle, grid_small, rng)
    assert coercivity_ratio(u, 0.01) > 0.999


def test_bilinear_diagonal_imaginary_cancellation(unit_circle, grid_small):
    # real fields have rho-symmetric |u_hat|; the odd sine part cancels over
    # every {rho, -rho} pair.  The self-paired Nyquist bin has no partner on
    # the even grid, so it is zeroed to expose the exact cancellation.
    from fracheat.fields import FrequencyField, from_frequency

    rng = np.random.default_rng(74)
    u = random_smooth_field(unit_circle, grid_small, rng, real_valued=True)
    hat = to_frequency(u).coeffs.copy()
    hat[:, grid_small.n_t // 2] = 0.0
    u = from_frequency(FrequencyField(unit_circle, grid_small, hat))
    B = bilinear_form(u, u, 0.5)
    assert abs(B.imag) < 1e-10 * abs(B.real)


def test_verify_wellposedness_small(unit_circle, grid_small):
    rep = verify_wellposedness(unit_circle, grid_small, 3.0, 0.5, trials=5,
                               seed=1)
    assert rep.all_coercive
    assert rep.all_bounded
    assert rep.coercivity_floor == pytest.approx(np.cos(np.pi / 4))


def test_source_invariants():
    import numpy as np
    from fracheat.manifolds import FlatTorus, build_eigensystem
    from fracheat.fields import TimeGrid

    model = FlatTorus(metric=((1.0,),), periods=(2.0 * np.pi,))
    sys = build_eigensystem(model, 4, quadrature_n=32)
    grid = TimeGrid.for_horizon(T=2.0, pad_factor=4, n_t=64)
    good = np.zeros((32, 64))
    mask = grid.time_mask((-1.0, 1.0))
    good[:, mask] = 1.0
    SourceFunction(sys, grid, tuple(range(32)), (-1.0, 1.0), good, 2.0)
    with pytest.raises(ContractError):
        SourceFunction(sys, grid, tuple(range(32)), (-3.0, 1.0), good, 2.0)
    bad = good.copy()
    bad[:, 0] = 1.0   # nonzero outside declared support
    with pytest.raises(ContractError):
        SourceFunction(sys, grid, tuple(range(32)), (-1.0, 1.0), bad, 2.0)
    with pytest.raises(ContractError):
        SourceFunction(sys, grid, (), (-1.0, 1.0), good, 2.0)


def test_mean_free_bump_requires_no_mass_normalization(unit_circle,
                                                       grid_small):
    with pytest.raises(ContractError):
        bump_source(unit_circle, grid_small, 3.0, center=[1.0], radius=0.5,
                    t_center=0.0, t_halfwidth=1.0, mean_free=True,
                    normalize="unit_mass")
    src = bump_source(unit_circle, grid_small, 3.0, center=[1.0], radius=0.5,
                      t_center=0.0, t_halfwidth=1.0, mean_free=True,
                      normalize=None)
    # zero spatial mean at every time
    hat = to_frequency(src.field).coeffs
    assert np.abs(hat[0]).max() < 1e-12 * np.abs(hat).max()


def test_source_addition_partial_overlap(unit_circle, grid_small):
    a = bump_source(unit_circle, grid_small, 3.0, center=[1.0], radius=0.5,
                    t_center=-0.5, t_halfwidth=0.8, normalize=None)
    b = bump_source(unit_circle, grid_small, 3.0, center=[1.3], radius=0.5,
                    t_center=0.5, t_halfwidth=0.8, normalize=None)
    c = a + b
    assert set(c.node_indices) == set(a.node_indices) | set(b.node_indices)
    # summed samples agree with scattering both sources onto the full grid
    full = np.zeros((unit_circle.n_nodes, grid_small.n_t))
    for src in (a, b):
        for i, n in enumerate(src.node_indices):
            full[n] += src.samples[i]
    for i, n in enumerate(c.node_indices):
        assert np.array_equal(c.samples[i], full[n])
