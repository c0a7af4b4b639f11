"""Diagonal spectral calculus for the nonlocal parabolic operator.

Every operator here acts bin-wise on mode-frequency coefficients through a
symbol m(rho, lambda).  The fractional power uses the principal branch on
the closed right half plane: for lambda >= 0,

    (i rho + lambda)^s = (rho^2 + lambda^2)^{s/2} exp(i s atan2(rho, lambda)),

so the argument stays in [-pi/2, pi/2] and Re of the symbol keeps the
cos(s pi / 2) coercivity margin.  The adjoint symbol is the complex
conjugate, matching time reversal on the symmetric grid.
"""

import numpy as np
from scipy.special import roots_jacobi

from .errors import ContractError
from .fields import (FrequencyField, SpaceTimeField, from_frequency,
                     to_frequency, truncate_time)


class SpectralMultiplier:
    """A complex symbol m(rho, lambda) applied diagonally to fields."""

    def __init__(self, symbol, descriptor):
        self.symbol = symbol
        self.descriptor = descriptor

    def table(self, eigenvalues, frequencies):
        """Symbol values on the (K, N_t) bin grid."""
        lam = np.asarray(eigenvalues, dtype=float)[:, None]
        rho = np.asarray(frequencies, dtype=float)[None, :]
        return self.symbol(rho, lam)

    def __mul__(self, other):
        return SpectralMultiplier(
            lambda rho, lam: self.symbol(rho, lam) * other.symbol(rho, lam),
            "(%s)*(%s)" % (self.descriptor, other.descriptor))


def _principal_power(z, s):
    """z^s on the closed right half plane with 0^s := 0 for s != 0."""
    z = np.asarray(z, dtype=complex)
    out = np.zeros(np.broadcast(z, z).shape, dtype=complex)
    nz = np.abs(z) > 0
    out[nz] = z[nz] ** s
    return out


def frac_power(s):
    """Symbol (i rho + lambda)^s of H^s."""
    return SpectralMultiplier(
        lambda rho, lam: _principal_power(lam + 1j * rho, s),
        "FracPower(%g)" % s)


def adjoint_frac_power(s):
    """Symbol (-i rho + lambda)^s of the adjoint H^s_*."""
    return SpectralMultiplier(
        lambda rho, lam: _principal_power(lam - 1j * rho, s),
        "AdjointFracPower(%g)" % s)


def semigroup(tau):
    """Symbol exp(-tau (i rho + lambda)) of the evolution semigroup."""
    if tau < 0:
        raise ContractError("semigroup requires tau >= 0")
    return SpectralMultiplier(
        lambda rho, lam: np.exp(-tau * (lam + 1j * rho)) *
        np.ones_like(rho + lam, dtype=complex),
        "Semigroup(%g)" % tau)


def dc_cell_average(s, drho, n_quad=16):
    """Regularized value of (i rho)^{-s} averaged over the zero-frequency cell.

    The symbol is locally integrable for s < 1, so the average over
    [-drho/2, drho/2] is the consistent value for the otherwise singular
    (k=0, rho=0) bin.  The |rho|^{-s} singularity is absorbed into the
    quadrature weight (Gauss-Jacobi, 16 points), leaving only the constant
    phase factors to integrate: the odd imaginary parts cancel and the cell
    average is real and positive.
    """
    half = 0.5 * drho
    x, w = roots_jacobi(n_quad, 0.0, -s)
    rho = half * 0.5 * (1.0 + x)           # nodes in (0, half)
    scale = (half / 2.0) ** (1.0 - s)
    # int_0^half rho^{-s} g(rho) drho with g smooth; g here is e^{-i s pi/2}
    one_side = scale * np.sum(w * np.exp(-1j * s * np.pi / 2.0)
                              * np.ones_like(rho))
    avg = 2.0 * np.real(one_side) / drho
    return complex(avg)


def inv_frac_power(s, drho):
    """Symbol (i rho + lambda)^{-s} with the regularized zero bin."""
    dc = dc_cell_average(s, drho)

    def symbol(rho, lam):
        z = lam + 1j * rho
        out = np.full(np.broadcast(z, z).shape, dc, dtype=complex)
        nz = np.abs(z) > 0
        out[nz] = z[nz] ** (-s)
        return out

    return SpectralMultiplier(symbol, "InvFracPower(%g)" % s)


def apply_multiplier(u, m):
    """Apply a spectral multiplier to a field (new field, input untouched)."""
    uhat = to_frequency(u)
    tab = m.table(u.sys.eigenvalues, u.grid.frequencies())
    out = FrequencyField(u.sys, u.grid, uhat.coeffs * tab, u.real_valued)
    return from_frequency(out)


def apply_Hs(u, s):
    """Fractional parabolic operator H^s = (d/dt - Delta_g)^s, s in (0, 1)."""
    return apply_multiplier(u, frac_power(s))


def apply_Hs_adjoint(v, s):
    """Adjoint operator H^s_* = (-d/dt - Delta_g)^s."""
    return apply_multiplier(v, adjoint_frac_power(s))


def apply_H_minus_s(f, s):
    """Inverse power H^{-s} with the regularized zero-frequency bin."""
    return apply_multiplier(f, inv_frac_power(s, f.grid.drho))


def heat_semigroup_apply(u, tau, path="multiplier"):
    """Heat semigroup e^{-tau H} u.

    Two equivalent realizations: the diagonal multiplier, or a time shift
    by tau (frequency-domain phase) followed by per-mode damping
    exp(-tau lambda_k).  tau == 0 returns the field unchanged.
    """
    if tau < 0:
        raise ContractError("semigroup requires tau >= 0")
    if tau == 0:
        return u
    if path == "multiplier":
        return apply_multiplier(u, semigroup(tau))
    if path == "shift":
        uhat = to_frequency(u)
        shifted = uhat.coeffs * np.exp(-1j * tau * u.grid.frequencies())[None, :]
        shifted_field = from_frequency(
            FrequencyField(u.sys, u.grid, shifted, u.real_valued))
        damped = shifted_field.coeffs \
            * np.exp(-tau * u.sys.eigenvalues)[:, None]
        return SpaceTimeField(u.sys, u.grid, damped, u.real_valued)
    raise ContractError("unknown semigroup path %r" % path)


def time_reverse(u):
    """Time reversal t -> -t on the symmetric grid (node 0 is fixed)."""
    idx = (-np.arange(u.grid.n_t)) % u.grid.n_t
    return SpaceTimeField(u.sys, u.grid, u.coeffs[:, idx], u.real_valued)


def pairing(u, v):
    """Duality pairing <u, v> = int sum_k u_hat_k conj(v_hat_k) drho."""
    uh = to_frequency(u)
    vh = to_frequency(v)
    return complex(np.sum(uh.coeffs * np.conj(vh.coeffs)) * u.grid.drho)


def causality_check(u, s, T):
    """Deviation of H^s u from H^s (chi_{(-inf, T]} u) on M x (-T, T).

    The continuum operator depends only on the past, so the deviation is
    zero up to grid periodization; the max absolute synthesized deviation
    over all quadrature nodes and window times is returned.
    """
    full = apply_Hs(u, s)
    trunc = apply_Hs(truncate_time(u, (-np.inf, T)), s)
    diff = full - trunc
    tmask = u.grid.open_mask((-T, T))
    vals = u.sys.synthesize(diff.coeffs[:, tmask])
    return float(np.abs(vals).max())
