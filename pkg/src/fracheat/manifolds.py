"""Truncated eigensystems of the Laplace-Beltrami operator on closed models.

Two model families are supported:

* ``FlatTorus``: constant SPD metric on a rectangular period lattice.
  Eigenvalues are dual-lattice quadratic forms, eigenfunctions real
  sine/cosine combinations, both known in closed form.
* ``VariableCircle``: a circle with metric ``gamma(x) dx^2`` for a strictly
  positive smooth periodic profile.  Eigenpairs come from a self-adjoint
  Fourier-Galerkin discretization of the weak form
  ``int gamma^{-1/2} u' v' dx`` against the volume form ``gamma^{1/2} dx``.

Quadrature is the uniform trapezoidal rule on the periodic fundamental
domain, which integrates trigonometric polynomials exactly up to the
Nyquist limit; all orthonormality statements below rely on that exactness.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConstructionError, ContractError, NumericalError

# Orthonormality tolerance used by invariant checks and diagnostics.
EPS_ORTH = 1e-10

# Relative gap below which eigenvalues are treated as one degenerate cluster.
DEGENERATE_GAP = 1e-9

# Cache the dense mode matrix only below this entry count.
_MODE_MATRIX_CACHE_LIMIT = 1 << 22


def _next_pow2(n):
    p = 1
    while p < n:
        p *= 2
    return p


@dataclass(frozen=True)
class FlatTorus:
    """Flat torus R^d / (period lattice) with constant metric ``metric``."""

    metric: tuple
    periods: tuple

    def __post_init__(self):
        g = np.asarray(self.metric, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ConstructionError("metric must be a square matrix")
        if not np.allclose(g, g.T, rtol=0, atol=1e-14 * max(1.0, np.abs(g).max())):
            raise ConstructionError("metric must be symmetric")
        evals = np.linalg.eigvalsh(g)
        if evals.min() <= 0:
            raise ConstructionError(
                "metric must be positive definite (eigenvalues %s)" % evals)
        periods = np.asarray(self.periods, dtype=float)
        if periods.ndim != 1 or len(periods) != g.shape[0]:
            raise ConstructionError("periods must match metric dimension")
        if periods.min() <= 0:
            raise ConstructionError("periods must be positive")
        object.__setattr__(self, "metric", tuple(map(tuple, g)))
        object.__setattr__(self, "periods", tuple(periods))

    @property
    def dim(self):
        return len(self.periods)

    @property
    def metric_matrix(self):
        return np.array(self.metric, dtype=float)


@dataclass(frozen=True)
class VariableCircle:
    """Circle of coordinate period ``period`` with metric gamma(x) dx^2.

    ``gamma`` is a real Fourier coefficient list [a0, a1, b1, a2, b2, ...]
    meaning a0 + sum_j (a_j cos(2 pi j x / L) + b_j sin(2 pi j x / L)).
    """

    gamma: tuple
    period: float = 2.0 * np.pi

    def __post_init__(self):
        c = np.asarray(self.gamma, dtype=float)
        if c.ndim != 1 or len(c) == 0:
            raise ConstructionError("gamma must be a nonempty coefficient list")
        if self.period <= 0:
            raise ConstructionError("period must be positive")
        object.__setattr__(self, "gamma", tuple(c))

    @classmethod
    def from_samples(cls, samples, period=2.0 * np.pi):
        """Build the profile from uniform samples via their Fourier series.

        The sample count bounds the recovered harmonics; aliasing beyond
        the Nyquist limit is the caller's responsibility.
        """
        samples = np.asarray(samples, dtype=float)
        n = len(samples)
        if n < 2:
            raise ConstructionError("need at least two gamma samples")
        spec = np.fft.rfft(samples) / n
        coeffs = [spec[0].real]
        for j in range(1, len(spec)):
            scale = 1.0 if 2 * j == n else 2.0
            coeffs.extend([scale * spec[j].real, -scale * spec[j].imag])
        return cls(gamma=tuple(coeffs), period=period)

    @property
    def dim(self):
        return 1

    def gamma_values(self, x):
        """Evaluate gamma at coordinates ``x``."""
        c = np.asarray(self.gamma)
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, c[0])
        w = 2.0 * np.pi / self.period
        for j in range(1, (len(c) + 1) // 2 + 1):
            ia, ib = 2 * j - 1, 2 * j
            if ia < len(c):
                out = out + c[ia] * np.cos(w * j * x)
            if ib < len(c):
                out = out + c[ib] * np.sin(w * j * x)
        return out

    def gamma_derivative(self, x):
        """Evaluate gamma'(x) analytically from the coefficients."""
        c = np.asarray(self.gamma)
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        w = 2.0 * np.pi / self.period
        for j in range(1, (len(c) + 1) // 2 + 1):
            ia, ib = 2 * j - 1, 2 * j
            if ia < len(c):
                out = out - c[ia] * w * j * np.sin(w * j * x)
            if ib < len(c):
                out = out + c[ib] * w * j * np.cos(w * j * x)
        return out


class _TorusBasis:
    """Closed-form sine/cosine eigenbasis of a flat torus."""

    def __init__(self, model, lattice, kinds, volume):
        self.model = model
        self.lattice = lattice            # (K, d) integer dual indices
        self.kinds = kinds                # 0 const, 1 cos, 2 sin
        self.volume = volume
        periods = np.asarray(model.periods)
        self.xi = 2.0 * np.pi * lattice / periods[None, :]

    def values(self, k_indices, points):
        """Mode values, shape (len(k_indices), len(points))."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        phase = self.xi[k_indices] @ pts.T
        out = np.empty_like(phase)
        kinds = self.kinds[k_indices]
        c0 = 1.0 / np.sqrt(self.volume)
        c1 = np.sqrt(2.0 / self.volume)
        out[kinds == 0] = c0
        out[kinds == 1] = c1 * np.cos(phase[kinds == 1])
        out[kinds == 2] = c1 * np.sin(phase[kinds == 2])
        return out


class _GalerkinBasis:
    """Eigenbasis given by coefficient columns in a real trig basis."""

    def __init__(self, model, coeffs, volume):
        self.model = model
        self.coeffs = coeffs              # (n_basis, K)
        self.volume = volume

    def values(self, k_indices, points):
        pts = np.asarray(points, dtype=float).reshape(-1)
        B = _trig_rows(self.coeffs.shape[0], self.model.period, pts)
        return (self.coeffs[:, k_indices].T @ B)


def _trig_rows(n_basis, period, x):
    """Rows of the real trig basis 1, cos(wx), sin(wx), cos(2wx), ... at x."""
    w = 2.0 * np.pi / period
    B = np.empty((n_basis, len(x)))
    B[0] = 1.0
    for p in range(1, n_basis):
        j = (p + 1) // 2
        if p % 2 == 1:
            B[p] = np.cos(w * j * x)
        else:
            B[p] = np.sin(w * j * x)
    return B


def _trig_rows_derivative(n_basis, period, x):
    w = 2.0 * np.pi / period
    D = np.empty((n_basis, len(x)))
    D[0] = 0.0
    for p in range(1, n_basis):
        j = (p + 1) // 2
        if p % 2 == 1:
            D[p] = -w * j * np.sin(w * j * x)
        else:
            D[p] = w * j * np.cos(w * j * x)
    return D


class EigenSystem:
    """Truncated eigensystem of -Delta_g plus spatial quadrature.

    Attributes:
        eigenvalues: nondecreasing array of length K, eigenvalues[0] == 0.
        nodes: (n_nodes, dim) quadrature node coordinates.
        weights: (n_nodes,) quadrature weights realizing the volume measure.
        volume: total measure of the model.
        grid_shape: per-dimension node counts of the tensor quadrature grid.
    """

    def __init__(self, model, eigenvalues, basis, nodes, weights, grid_shape):
        self.model = model
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)
        self.eigenvalues.flags.writeable = False
        self._basis = basis
        self.nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
        self.nodes.flags.writeable = False
        self.weights = np.asarray(weights, dtype=float)
        self.weights.flags.writeable = False
        self.grid_shape = tuple(grid_shape)
        self.volume = basis.volume
        self._mode_matrix = None

    @property
    def K(self):
        return len(self.eigenvalues)

    @property
    def n_nodes(self):
        return len(self.weights)

    @property
    def dim(self):
        return self.nodes.shape[1]

    def evaluate_mode(self, k, points):
        """Value of eigenfunction ``k`` at arbitrary coordinate ``points``."""
        vals = self._basis.values(np.atleast_1d(k), np.atleast_2d(points))
        return vals[0] if np.isscalar(k) else vals

    def mode_matrix(self, node_indices=None):
        """Matrix Phi[k, i] of eigenfunction values at quadrature nodes."""
        if node_indices is None:
            if self._mode_matrix is not None:
                return self._mode_matrix
            phi = self._basis.values(np.arange(self.K), self.nodes)
            if self.K * self.n_nodes <= _MODE_MATRIX_CACHE_LIMIT:
                phi.flags.writeable = False
                self._mode_matrix = phi
            return phi
        idx = np.asarray(node_indices, dtype=int)
        if self._mode_matrix is not None:
            return self._mode_matrix[:, idx]
        return self._basis.values(np.arange(self.K), self.nodes[idx])

    def _node_chunks(self):
        chunk = max(1, _MODE_MATRIX_CACHE_LIMIT // max(1, self.K))
        for lo in range(0, self.n_nodes, chunk):
            yield np.arange(lo, min(lo + chunk, self.n_nodes))

    def project(self, samples, node_indices=None):
        """Mode coefficients (f, phi_k) of samples given at quadrature nodes.

        With ``node_indices`` the samples are treated as supported on those
        nodes only (exactly zero elsewhere).
        """
        samples = np.asarray(samples)
        if node_indices is None:
            if samples.shape[0] != self.n_nodes:
                raise ContractError("expected %d samples, got %d"
                                    % (self.n_nodes, samples.shape[0]))
            if self.K * self.n_nodes > _MODE_MATRIX_CACHE_LIMIT:
                out = 0
                for idx in self._node_chunks():
                    out = out + self.project(samples[idx], idx)
                return out
            w = self.weights
            phi = self.mode_matrix()
        else:
            idx = np.asarray(node_indices, dtype=int)
            if samples.shape[0] != len(idx):
                raise ContractError("sample/node index length mismatch")
            w = self.weights[idx]
            phi = self.mode_matrix(idx)
        return phi @ (w[:, None] * samples if samples.ndim > 1 else w * samples)

    def synthesize(self, coeffs, node_indices=None):
        """Point values sum_k c_k phi_k(x_i) at (selected) quadrature nodes."""
        coeffs = np.asarray(coeffs)
        if node_indices is None and self.K * self.n_nodes > _MODE_MATRIX_CACHE_LIMIT:
            parts = [self.mode_matrix(idx).T @ coeffs
                     for idx in self._node_chunks()]
            return np.concatenate(parts, axis=0)
        phi = self.mode_matrix(node_indices)
        return phi.T @ coeffs

    def inner_product(self, f, h):
        """Quadrature approximation of (f, h) = int f conj(h) dV_g."""
        f = np.asarray(f)
        h = np.asarray(h)
        if f.shape != (self.n_nodes,) or h.shape != (self.n_nodes,):
            raise ContractError("samples must have length %d" % self.n_nodes)
        return np.sum(self.weights * f * np.conj(h))

    def gram_matrix(self):
        phi = self.mode_matrix()
        return (phi * self.weights[None, :]) @ phi.T

    def gram_deviation(self):
        return np.abs(self.gram_matrix() - np.eye(self.K)).max()

    def node_multi_index(self):
        """Map flat node index -> tensor multi-index (C order)."""
        return np.stack(np.unravel_index(np.arange(self.n_nodes),
                                         self.grid_shape), axis=1)


def inner_product(f, h, sys):
    """Module-level alias for ``EigenSystem.inner_product``."""
    return sys.inner_product(f, h)


def _cluster_spans(lam):
    """Index spans of numerically degenerate eigenvalue clusters."""
    spans = []
    start = 0
    for i in range(1, len(lam) + 1):
        if i == len(lam) or lam[i] - lam[i - 1] > DEGENERATE_GAP * (1.0 + lam[i]):
            spans.append((start, i))
            start = i
    return spans


def _torus_quadrature(model, lattice, quadrature_n):
    d = model.dim
    periods = np.asarray(model.periods)
    if quadrature_n is None:
        nmax = np.abs(lattice).max(axis=0) if len(lattice) else np.zeros(d)
        npts = [max(32, _next_pow2(int(2 * m + 2))) for m in nmax]
    else:
        npts = [int(n) for n in np.broadcast_to(quadrature_n, (d,))]
    axes = [np.arange(n) * (L / n) for n, L in zip(npts, periods)]
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.reshape(-1) for m in mesh], axis=1)
    detg = np.linalg.det(model.metric_matrix)
    cell = np.prod([L / n for n, L in zip(npts, periods)]) * np.sqrt(detg)
    weights = np.full(nodes.shape[0], cell)
    return nodes, weights, tuple(npts)


def _enumerate_torus_lattice(model, K):
    """K smallest dual-lattice modes with deterministic degenerate ordering."""
    d = model.dim
    periods = np.asarray(model.periods)
    ginv = np.linalg.inv(model.metric_matrix)

    R = max(2, int(np.ceil(K ** (1.0 / d))) + 2)
    while True:
        rng = np.arange(-R, R + 1)
        mesh = np.meshgrid(*([rng] * d), indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        # one representative per {xi, -xi} pair: first nonzero entry positive
        keep = np.zeros(len(pts), dtype=bool)
        for i, p in enumerate(pts):
            nzs = p[p != 0]
            keep[i] = len(nzs) == 0 or nzs[0] > 0
        reps = pts[keep]
        xi = 2.0 * np.pi * reps / periods[None, :]
        lam = np.einsum("ij,jk,ik->i", xi, ginv, xi)

        order = sorted(range(len(reps)), key=lambda i: (lam[i], tuple(reps[i])))
        lam_sorted = lam[order]
        # cluster-aware tie break: lexicographic on the dual-lattice index
        spans = _cluster_spans(lam_sorted)
        final = []
        for a, b in spans:
            final.extend(sorted(order[a:b], key=lambda i: tuple(reps[i])))

        modes = []   # (lattice vector, kind, eigenvalue)
        for i in final:
            if np.all(reps[i] == 0):
                modes.append((reps[i], 0, lam[i]))
            else:
                modes.append((reps[i], 1, lam[i]))
                modes.append((reps[i], 2, lam[i]))
            if len(modes) >= K:
                break
        if len(modes) < K:
            R *= 2
            continue
        # boundary safety: the K-th eigenvalue must be below anything outside
        kth = modes[K - 1][2]
        boundary = np.abs(pts).max(axis=1) == R
        xi_b = 2.0 * np.pi * pts[boundary] / periods[None, :]
        lam_b = np.einsum("ij,jk,ik->i", xi_b, ginv, xi_b)
        if lam_b.min() <= kth:
            R *= 2
            continue
        lattice = np.array([m[0] for m in modes[:K]], dtype=int)
        kinds = np.array([m[1] for m in modes[:K]], dtype=int)
        eig = np.einsum("ij,jk,ik->i",
                        2.0 * np.pi * lattice / periods[None, :], ginv,
                        2.0 * np.pi * lattice / periods[None, :])
        return lattice, kinds, eig


def _build_torus(model, K, quadrature_n):
    lattice, kinds, eig = _enumerate_torus_lattice(model, K)
    volume = float(np.sqrt(np.linalg.det(model.metric_matrix))
                   * np.prod(model.periods))
    nodes, weights, shape = _torus_quadrature(model, lattice, quadrature_n)
    basis = _TorusBasis(model, lattice, kinds, volume)
    return EigenSystem(model, eig, basis, nodes, weights, shape)


def _canonicalize_cluster(block):
    """Deterministic orthogonal rotation of a degenerate eigenvector block.

    Makes the submatrix at the block's dominant coefficient rows lower
    triangular with positive diagonal, so the returned basis does not depend
    on the arbitrary rotation produced by the eigensolver.
    """
    n, c = block.shape
    if c == 1:
        p = np.argmax(np.abs(block[:, 0]))
        return block * np.sign(block[p, 0])
    energy = np.sum(block ** 2, axis=1)
    rows = np.argsort(-energy, kind="stable")[:c]
    rows = np.sort(rows)
    S = block[rows]                      # (c, c)
    q, r = np.linalg.qr(S.T)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    rotated = block @ (q * signs[None, :])
    return rotated


def _build_variable_circle(model, K, galerkin_n, quadrature_n):
    if galerkin_n is None:
        galerkin_n = 4 * K
    if galerkin_n < 4 * K:
        raise ConstructionError(
            "galerkin_N must be at least 4*K (got %d < %d)" % (galerkin_n, 4 * K))
    J = galerkin_n // 2
    n_basis = 2 * J + 1
    L = model.period
    if quadrature_n is None:
        nq = max(256, _next_pow2(4 * J + 4))
    else:
        nq = int(np.atleast_1d(quadrature_n)[0])
    x = np.arange(nq) * (L / nq)
    gam = model.gamma_values(x)
    gmin = gam.min()
    if gmin <= 0:
        raise ConstructionError(
            "gamma must be strictly positive at quadrature nodes "
            "(min %.3e)" % gmin)
    dx = L / nq

    B = _trig_rows(n_basis, L, x)
    D = _trig_rows_derivative(n_basis, L, x)
    A = (D * (dx / np.sqrt(gam))[None, :]) @ D.T
    M = (B * (dx * np.sqrt(gam))[None, :]) @ B.T
    A = 0.5 * (A + A.T)
    M = 0.5 * (M + M.T)

    try:
        lam, C = scipy.linalg.eigh(A, M)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError("generalized eigensolver failed: %s" % exc)

    lam = lam[:K]
    C = C[:, :K]
    scale = max(1.0, abs(lam[-1]))
    resid = np.linalg.norm(A @ C - M @ C @ np.diag(lam)) / np.linalg.norm(A)
    if resid > 1e-8:
        raise NumericalError("Galerkin eigenproblem residual too large",
                             residual=float(resid))
    if abs(lam[0]) > 1e-9 * scale:
        raise NumericalError("constant mode eigenvalue did not vanish",
                             lambda0=float(lam[0]))

    volume = float(np.sum(dx * np.sqrt(gam)))
    lam[0] = 0.0
    # exact constant mode, positive normalization
    C[:, 0] = 0.0
    C[0, 0] = 1.0 / np.sqrt(volume)
    for a, b in _cluster_spans(lam):
        if a == 0 and b == 1:
            continue
        C[:, a:b] = _canonicalize_cluster(C[:, a:b])

    weights = dx * np.sqrt(gam)
    basis = _GalerkinBasis(model, C, volume)
    nodes = x.reshape(-1, 1)
    return EigenSystem(model, lam, basis, nodes, weights, (nq,))


def build_eigensystem(model, K, galerkin_n=None, quadrature_n=None):
    """Build the K-mode eigensystem of -Delta_g for a manifold model.

    Args:
        model: ``FlatTorus`` or ``VariableCircle``.
        K: number of retained modes (K >= 1).
        galerkin_n: Galerkin truncation for ``VariableCircle`` (default 4K).
        quadrature_n: per-dimension quadrature node count override.
    """
    if K < 1:
        raise ContractError("K must be at least 1")
    if isinstance(model, FlatTorus):
        return _build_torus(model, K, quadrature_n)
    if isinstance(model, VariableCircle):
        return _build_variable_circle(model, K, galerkin_n, quadrature_n)
    raise ConstructionError("unknown manifold model %r" % (model,))
