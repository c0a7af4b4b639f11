"""Space-time fields as per-mode time traces on a padded periodic grid.

A field u(x, t) is stored mode-major as complex traces u_k(t_j) on a uniform
grid covering [-T_grid, T_grid).  The physical experiment horizon T is
smaller than T_grid by the pad factor; all sources live in (-T, T) and the
pad buffers the periodic wrap-around of their responses.

The time Fourier transform uses the symmetric 1/sqrt(2 pi) normalization
   u_hat(rho) = (1/sqrt(2 pi)) int e^{-i rho t} u(t) dt
realized as a phase-corrected FFT; the discrete round trip is exact to
machine precision and Parseval holds with the cell measures dt and drho.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConstructionError, ContractError

REAL_TOL = 1e-10


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on [-half_width, half_width) with N_t samples."""

    half_width: float
    n_t: int

    def __post_init__(self):
        if self.half_width <= 0:
            raise ConstructionError("half_width must be positive")
        if self.n_t < 2 or self.n_t % 2 != 0:
            raise ConstructionError("N_t must be even and at least 2")

    @classmethod
    def for_horizon(cls, T, pad_factor=4, n_t=1024):
        """Grid whose half width is pad_factor times the horizon T."""
        if pad_factor < 2:
            raise ConstructionError("pad_factor must be at least 2")
        return cls(half_width=pad_factor * T, n_t=n_t)

    @property
    def dt(self):
        return 2.0 * self.half_width / self.n_t

    @property
    def drho(self):
        return np.pi / self.half_width

    def times(self):
        return -self.half_width + self.dt * np.arange(self.n_t)

    def frequencies(self):
        """Angular frequency nodes in FFT ordering."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_t, d=self.dt)

    def nearest_index(self, t):
        """Nearest grid node to time t (snapping rule for interval ends)."""
        j = int(np.round((t + self.half_width) / self.dt))
        return min(max(j, 0), self.n_t - 1)

    def time_mask(self, interval):
        """Boolean mask of nodes inside the closed snapped interval.

        Endpoints snap to the nearest node (half-sample uncertainty);
        infinities select the corresponding grid end.
        """
        a, b = interval
        if a == -np.inf:
            lo = 0
        else:
            lo = self.nearest_index(a)
        if b == np.inf:
            hi = self.n_t - 1
        else:
            hi = self.nearest_index(b)
        mask = np.zeros(self.n_t, dtype=bool)
        if b >= a:
            mask[lo:hi + 1] = True
        return mask

    def open_mask(self, interval):
        """Mask of nodes strictly inside an open interval (no snapping)."""
        a, b = interval
        t = self.times()
        return (t > a) & (t < b)


@dataclass(frozen=True)
class Cylinder:
    """Open cylinder: a spatial patch (node indices) times a time interval."""

    node_indices: tuple
    t_interval: tuple

    def __post_init__(self):
        idx = np.asarray(self.node_indices, dtype=int)
        if idx.size == 0:
            raise ConstructionError("cylinder patch must be nonempty")
        ta, tb = self.t_interval
        if not ta < tb:
            raise ConstructionError("cylinder needs t_a < t_b")
        object.__setattr__(self, "node_indices", tuple(int(i) for i in idx))
        object.__setattr__(self, "t_interval", (float(ta), float(tb)))


class SpaceTimeField:
    """Immutable field value: per-mode complex traces u_k(t_j)."""

    def __init__(self, sys, grid, coeffs, real_valued=False):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (sys.K, grid.n_t):
            raise ContractError("coeffs must have shape (K, N_t) = (%d, %d)"
                                % (sys.K, grid.n_t))
        coeffs = coeffs.copy()
        coeffs.flags.writeable = False
        self.sys = sys
        self.grid = grid
        self.coeffs = coeffs
        self.real_valued = bool(real_valued)

    def __add__(self, other):
        self._check_compatible(other)
        return SpaceTimeField(self.sys, self.grid, self.coeffs + other.coeffs,
                              self.real_valued and other.real_valued)

    def __sub__(self, other):
        self._check_compatible(other)
        return SpaceTimeField(self.sys, self.grid, self.coeffs - other.coeffs,
                              self.real_valued and other.real_valued)

    def __mul__(self, scalar):
        return SpaceTimeField(self.sys, self.grid, self.coeffs * scalar,
                              self.real_valued and np.isreal(scalar))

    __rmul__ = __mul__

    def _check_compatible(self, other):
        if other.sys is not self.sys or other.grid != self.grid:
            raise ContractError("fields live on different systems or grids")

    def norm(self, interval=None, open_window=False):
        """L2 norm over M x (time window); modes are orthonormal in space.

        With ``open_window`` the interval is taken strictly (no endpoint
        snapping), as in measurements over M x (-T, T).
        """
        if interval is None:
            block = self.coeffs
        else:
            mask = (self.grid.open_mask(interval) if open_window
                    else self.grid.time_mask(interval))
            block = self.coeffs[:, mask]
        return float(np.sqrt(np.sum(np.abs(block) ** 2) * self.grid.dt))

    def values(self, node_indices=None, time_indices=None):
        """Synthesized point values u(x_i, t_j)."""
        c = self.coeffs if time_indices is None else self.coeffs[:, time_indices]
        return self.sys.synthesize(c, node_indices)


class FrequencyField:
    """Mode-frequency coefficients u_hat_k(rho_m), FFT frequency ordering."""

    def __init__(self, sys, grid, coeffs, real_valued=False):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (sys.K, grid.n_t):
            raise ContractError("coeffs must have shape (K, N_t)")
        coeffs = coeffs.copy()
        coeffs.flags.writeable = False
        self.sys = sys
        self.grid = grid
        self.coeffs = coeffs
        self.real_valued = bool(real_valued)

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2) * self.grid.drho))


def _alternation(n):
    alt = np.ones(n)
    alt[1::2] = -1.0
    return alt


def to_frequency(u):
    """Time Fourier transform of a field, exact inverse of from_frequency.

    With nodes t_j = -T_grid + j dt the continuum phase e^{i rho_m T_grid}
    reduces to (-1)^m, so the transform is an FFT with an alternating sign.
    """
    alt = _alternation(u.grid.n_t)
    hat = (u.grid.dt / np.sqrt(2.0 * np.pi)) * alt[None, :] \
        * np.fft.fft(u.coeffs, axis=1)
    return FrequencyField(u.sys, u.grid, hat, u.real_valued)


def from_frequency(uhat):
    """Inverse time Fourier transform back to time samples."""
    grid = uhat.grid
    alt = _alternation(grid.n_t)
    scale = grid.drho * grid.n_t / np.sqrt(2.0 * np.pi)
    coeffs = scale * np.fft.ifft(alt[None, :] * uhat.coeffs, axis=1)
    return SpaceTimeField(uhat.sys, grid, coeffs, uhat.real_valued)


def sobolev_weight(lam, rho, a, flavor="inhomogeneous"):
    """Per-bin Sobolev weight of order ``a``.

    inhomogeneous: (1 + rho^2 + lam^2)^{a/2}
    homogeneous:   (rho^2 + lam^2)^{a/2}, with the (0, 0) bin weight 0
                   (for negative orders the homogeneous weight is singular
                   there; the zero convention keeps norms finite).
    """
    lam = np.asarray(lam, dtype=float)
    rho = np.asarray(rho, dtype=float)
    mod2 = lam[:, None] ** 2 + rho[None, :] ** 2
    if flavor == "inhomogeneous":
        return (1.0 + mod2) ** (a / 2.0)
    if flavor == "homogeneous":
        w = np.zeros_like(mod2)
        nz = mod2 > 0
        w[nz] = mod2[nz] ** (a / 2.0)
        return w
    raise ContractError("unknown norm flavor %r" % flavor)


def sobolev_norm(u, a, flavor="inhomogeneous"):
    """Discrete space-time Sobolev norm of order ``a``."""
    uhat = u if isinstance(u, FrequencyField) else to_frequency(u)
    w = sobolev_weight(u.sys.eigenvalues, u.grid.frequencies(), a, flavor)
    return float(np.sqrt(np.sum(w * np.abs(uhat.coeffs) ** 2) * u.grid.drho))


def truncate_time(u, intervals):
    """Pointwise product with the indicator of a union of time intervals.

    ``intervals`` is one (a, b) pair or a list of pairs; endpoints snap to
    the nearest grid node and infinities are allowed.  Idempotent.
    """
    if isinstance(intervals, tuple) and np.isscalar(intervals[0]):
        intervals = [intervals]
    mask = np.zeros(u.grid.n_t, dtype=bool)
    for iv in intervals:
        mask |= u.grid.time_mask(iv)
    return SpaceTimeField(u.sys, u.grid, u.coeffs * mask[None, :],
                          u.real_valued)


def restrict(u, cyl):
    """Synthesized samples of ``u`` on an open cylinder.

    Returns (values, node_indices, time_indices) with values of shape
    (len(node_indices), len(time_indices)).  The time window is open
    (strict inequalities); use infinities to cover the whole grid.
    """
    tidx = np.nonzero(u.grid.open_mask(cyl.t_interval))[0]
    nidx = np.asarray(cyl.node_indices, dtype=int)
    if tidx.size == 0 or nidx.size == 0:
        raise ContractError("cylinder does not intersect the grid")
    if nidx.min() < 0 or nidx.max() >= u.sys.n_nodes:
        raise ContractError("cylinder node indices out of range")
    vals = u.sys.synthesize(u.coeffs[:, tidx], nidx)
    return vals, nidx, tidx


def imaginary_ripple(u, node_indices=None):
    """Largest synthesized imaginary part relative to the field magnitude."""
    vals = u.values(node_indices)
    mag = np.abs(vals).max()
    if mag == 0:
        return 0.0
    return float(np.abs(vals.imag).max() / mag)


def field_from_mode_traces(sys, grid, traces, real_valued=True):
    """Build a field from a {mode index: trace array} mapping."""
    coeffs = np.zeros((sys.K, grid.n_t), dtype=complex)
    for k, tr in traces.items():
        coeffs[k] = tr
    return SpaceTimeField(sys, grid, coeffs, real_valued)


def random_smooth_field(sys, grid, rng, mode_decay=0.5, freq_decay=0.05,
                        mean_free=False, real_valued=True):
    """Seeded random field with exponential spectral decay (smooth in x, t).

    Spectral amplitudes fall like exp(-mode_decay*sqrt(lam))*
    exp(-freq_decay*|rho|), which keeps high-symbol bins negligible.
    """
    rho = grid.frequencies()
    lam = sys.eigenvalues
    envelope = np.exp(-mode_decay * np.sqrt(lam))[:, None] \
        * np.exp(-freq_decay * np.abs(rho))[None, :]
    re = rng.standard_normal((sys.K, grid.n_t))
    im = rng.standard_normal((sys.K, grid.n_t))
    hat = envelope * (re + 1j * im)
    if mean_free:
        hat[0] = 0.0
    field = from_frequency(FrequencyField(sys, grid, hat))
    if real_valued:
        coeffs = field.coeffs.real
        return SpaceTimeField(sys, grid, coeffs, real_valued=True)
    return field
