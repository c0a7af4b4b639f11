"""Heat kernel of the spatial semigroup and the singular kernel K_s.

The kernel is the truncated spectral sum

    e^{-tau L}(x, z) = sum_{k<K} e^{-tau lambda_k} phi_k(x) phi_k(z),

symmetric by construction.  Spectral truncation makes very small tau
oscillatory; below the trust floor tau_min(K) (where the last retained mode
still contributes more than a fixed fraction of the leading term) values are
returned with a warning, never clipped: clipping would break the
stochastic-completeness identity int e^{-tau L}(x, z) dz = 1 that the
inverse harness relies on.
"""

import warnings

import numpy as np
from scipy.special import gamma as Gamma

from .errors import ContractError, TruncationWarning

# Contribution ratio of the last retained mode defining the trust floor.
TRUST_RATIO = 1e-3


class HeatKernelEvaluator:
    """Evaluate the truncated heat kernel on quadrature nodes."""

    def __init__(self, sys):
        self.sys = sys
        lam_max = sys.eigenvalues[-1]
        self.tau_min = (np.log(1.0 / TRUST_RATIO) / lam_max
                        if lam_max > 0 else 0.0)

    def values(self, x_indices, z_indices, tau, warn=True):
        """Kernel matrix e^{-tau L}(x_i, z_j), shape (len(x), len(z)).

        For identical index sets the result is made bitwise symmetric by
        mirroring the upper triangle (the summand is symmetric; only BLAS
        accumulation order would break exact equality).
        """
        if tau <= 0:
            raise ContractError("heat kernel requires tau > 0")
        if warn and tau < self.tau_min:
            warnings.warn(
                "tau=%g is below the truncation trust floor tau_min=%g"
                % (tau, self.tau_min), TruncationWarning, stacklevel=2)
        xi = np.atleast_1d(x_indices)
        zi = np.atleast_1d(z_indices)
        phi_x = self.sys.mode_matrix(xi)
        damp = np.exp(-tau * self.sys.eigenvalues)
        if np.array_equal(xi, zi):
            half = phi_x * np.sqrt(damp)[:, None]
            M = half.T @ half
            upper = np.triu(M)
            return upper + np.triu(M, 1).T
        phi_z = self.sys.mode_matrix(zi)
        return (phi_x * damp[:, None]).T @ phi_z

    def mass_integrals(self, x_indices, tau, warn=True):
        """Quadrature of int e^{-tau L}(x, z) dV(z) for each x (should be 1)."""
        ker = self.values(x_indices, np.arange(self.sys.n_nodes), tau, warn)
        return ker @ self.sys.weights

    def min_value(self, tau, warn=True):
        """Most negative kernel value over the full node grid (ripple probe)."""
        ker = self.values(np.arange(self.sys.n_nodes),
                          np.arange(self.sys.n_nodes), tau, warn)
        return float(ker.min())


def heat_kernel(sys, x_indices, z_indices, tau, warn=True):
    """Functional wrapper over ``HeatKernelEvaluator.values``."""
    return HeatKernelEvaluator(sys).values(x_indices, z_indices, tau, warn)


def kernel_Ks(sys, x_indices, z_indices, tau, s, warn=True):
    """Singular kernel K_s(x, z; tau) = e^{-tau L}(x, z) / (Gamma(-s) tau^{1+s}).

    Negative for s in (0, 1) wherever the heat kernel is positive.
    """
    ker = heat_kernel(sys, x_indices, z_indices, tau, warn)
    return ker / (Gamma(-s) * tau ** (1.0 + s))


def circle_distance(sys, x_indices, z_indices):
    """Geodesic distance matrix between circle quadrature nodes."""
    if sys.dim != 1:
        raise ContractError("circle_distance needs a one-dimensional model")
    x = sys.nodes[np.atleast_1d(x_indices), 0]
    z = sys.nodes[np.atleast_1d(z_indices), 0]
    period = float(getattr(sys.model, "period", None) or sys.model.periods[0])
    d = np.abs(x[:, None] - z[None, :])
    d = np.minimum(d, period - d)
    # flat metric scales coordinates into lengths
    if hasattr(sys.model, "metric_matrix"):
        d = d * np.sqrt(sys.model.metric_matrix[0, 0])
    return d


def gaussian_envelope_fit(sys, taus, x_index=0, rel_floor=3e-4,
                          max_distance=None):
    """Fit log k = log C - (dim/2) log tau - d^2/(c tau) by least squares.

    Points with kernel values below ``rel_floor`` of the per-tau maximum are
    excluded (below that the truncated spectral sum is dominated by the
    missing modes, not by the Gaussian decay), as are distances beyond
    ``max_distance`` where wrap-around images pollute the Gaussian regime.
    Returns (C, c, r_squared, n_points).
    """
    evaluator = HeatKernelEvaluator(sys)
    dmat = circle_distance(sys, [x_index], np.arange(sys.n_nodes))[0]
    if max_distance is None:
        period = float(getattr(sys.model, "period", None)
                       or sys.model.periods[0])
        max_distance = period / 3.0
    ys, feats = [], []
    half = sys.dim / 2.0
    for tau in taus:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TruncationWarning)
            ker = evaluator.values([x_index], np.arange(sys.n_nodes), tau)[0]
        sel = (ker > rel_floor * ker.max()) & (dmat <= max_distance)
        ys.append(np.log(ker[sel]) + half * np.log(tau))
        feats.append(dmat[sel] ** 2 / tau)
    y = np.concatenate(ys)
    q = np.concatenate(feats)
    A = np.column_stack([np.ones_like(q), -q])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fit = A @ coef
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot
    C = float(np.exp(coef[0]))
    c = float(1.0 / coef[1])
    return C, c, r2, len(y)


def representation_apply(u, s, node_indices, time_indices, n_tau=960,
                         tau_lo=1e-7, tau_hi=60.0):
    """H^s u at selected points through the singular-kernel representation.

    Evaluates int_0^oo int_M K_s(x, z; tau) (u(z, t - tau) - u(x, t)) dz dtau
    with the spatial integral collapsed through the spectral form of the
    kernel: int K_s(x, z; tau) u(z, t - tau) dz picks up e^{-tau lambda_k}
    on each mode of the time-shifted field.  The time shift is the exact
    frequency-domain phase; the tau integral uses log-spaced panels plus an
    analytic small-tau Taylor head.

    Independent of the multiplier path: no fractional power is evaluated.
    """
    from .balakrishnan import BalakrishnanQuadrature
    from .fields import to_frequency

    grid = u.grid
    sys = u.sys
    node_indices = np.atleast_1d(node_indices)
    time_indices = np.atleast_1d(time_indices)
    quad = BalakrishnanQuadrature(sigma_lo=tau_lo, sigma_split=tau_hi,
                                  n_panels=n_tau // 8, n_gauss=8)
    taus, wts = quad.core_rule()

    uhat = to_frequency(u).coeffs
    rho = grid.frequencies()
    lam = sys.eigenvalues
    phi = sys.mode_matrix(node_indices)      # (K, n_x)
    u_at = sys.synthesize(u.coeffs[:, time_indices], node_indices)

    acc = np.zeros((len(node_indices), len(time_indices)), dtype=complex)
    alt = np.ones(grid.n_t)
    alt[1::2] = -1.0
    scale = grid.drho * grid.n_t / np.sqrt(2.0 * np.pi)
    for tau, w in zip(taus, wts):
        shift = np.exp(-1j * tau * rho)[None, :]
        shifted = scale * np.fft.ifft(alt[None, :] * (uhat * shift), axis=1)
        damped = shifted[:, time_indices] * np.exp(-tau * lam)[:, None]
        vals = phi.T @ damped                # e^{-tau L} u(., t - tau) at x
        acc += w * tau ** (-1.0 - s) * (vals - u_at)
    # analytic head: (e^{-tau H} - 1) u ~ -tau (d/dt - Delta) u + tau^2/2 ...
    zsym = lam[:, None] + 1j * rho[None, :]
    head_tab = np.zeros_like(zsym, dtype=complex)
    for j in range(1, 4):
        head_tab += (-zsym) ** j / Gamma(j + 1) * tau_lo ** (j - s) / (j - s)
    head_hat = uhat * head_tab
    head_time = scale * np.fft.ifft(alt[None, :] * head_hat, axis=1)
    acc += phi.T @ head_time[:, time_indices]
    # tail: every retained nonzero mode has decayed by tau_hi, so only the
    # "-u(x, t)" term integrates on, giving -u tau_hi^{-s} / s
    acc += -(tau_hi ** (-s) / s) * u_at
    return acc / Gamma(-s)
