"""Linearized (Born) initial guess from low-frequency boundary data.

Testing the scattered-field equation against plane waves ``e^{ik x·d_t}``
turns weak-scattering data into samples of the Fourier transform of ``q`` at
``ξ = -k(d_inc + d_test)``.  Rows of the operator are ordered by incident
index first, then test index.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

logger = logging.getLogger(__name__)


@dataclass
class BornSystem:
    """Dense Born operator ``A`` (pairs x active cells) with its data ``f``."""

    operator: np.ndarray
    rhs: np.ndarray
    k: float
    alpha: float

    def solve(self):
        return tikhonov_solve(self.operator, self.rhs, self.alpha)


def _directions(angles):
    angles = np.asarray(angles, dtype=float)
    return np.column_stack([np.cos(angles), np.sin(angles)])


def _check_angles(angles):
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    if angles.size == 0:
        raise ValueError("at least one angle is required")
    if len(np.unique(np.round(np.mod(angles, 2 * np.pi), 14))) != len(angles):
        raise ValueError("angles must be distinct")
    return angles


def assemble_born_operator(grid, k, angles):
    """Midpoint-rule matrix with entries ``k² exp(ik x_c·(d_inc + d_test)) |c|``.

    Parameters
    ----------
    grid : ReconGrid
        Columns follow the active cells of ``grid`` (``grid.points`` order).
    k : float
    angles : array_like
        Used for both incident and test directions.
    """
    angles = _check_angles(angles)
    pts = grid.points
    if len(pts) == 0:
        raise ValueError("grid has no active cells")
    d = _directions(angles)
    xi = (d[:, None, :] + d[None, :, :]).reshape(-1, 2)  # (inc, test) pairs
    return k**2 * grid.cell_area * np.exp(1j * k * (xi @ pts.T))


def born_rhs(traces, k, angles, radius=1.0):
    """Boundary-integral data for every (incident, test) pair.

    ``traces[i]`` is the scattered-field trace for incidence ``angles[i]``;
    all traces must share one set of equispaced quadrature angles.
    Integrals over Γ use the trapezoidal rule.
    """
    angles = _check_angles(angles)
    if len(traces) != len(angles):
        raise KeyError(f"{len(traces)} traces for {len(angles)} incidence angles")
    t = traces[0].angles
    for tr in traces[1:]:
        if tr.angles.shape != t.shape or not np.array_equal(tr.angles, t):
            raise ValueError("traces do not share one quadrature-angle set")
    normal = np.column_stack([np.cos(t), np.sin(t)])
    x = radius * normal
    w = 2 * np.pi * radius / len(t)
    d = _directions(angles)
    e_test = np.exp(1j * k * d @ x.T)  # (test, J)
    n_dot = d @ normal.T  # (dir, J)
    u = np.array([tr.dirichlet for tr in traces])  # (inc, J)
    du = np.array([tr.neumann for tr in traces])
    f = w * (u @ (1j * k * n_dot * e_test).T - du @ e_test.T)
    # incident-incident term; zero in exact arithmetic, kept at quadrature accuracy
    phase = e_test[:, None, :] * e_test[None, :, :]
    f += w * np.sum(phase * 1j * k * (n_dot[None, :, :] - n_dot[:, None, :]), axis=2)
    return f.reshape(-1)


def largest_singular_value_sq(a, iterations=30):
    """Power-iteration estimate of ``σ_max(A)²`` (deterministic start)."""
    v = np.ones(a.shape[1], dtype=complex) / np.sqrt(a.shape[1])
    est = 0.0
    for _ in range(iterations):
        w = a.conj().T @ (a @ v)
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return 0.0
        v = w / est
    return est


def default_alpha(a, factor=1e-2):
    return factor * largest_singular_value_sq(a)


def tikhonov_solve(a, f, alpha):
    """Minimizer of ``‖Aq - f‖² + α‖q‖²``, i.e. ``(A*A + αI)⁻¹ A* f``.

    The smaller of the two equivalent Hermitian systems is factorized
    (``A*(AA* + αI)⁻¹ f`` when rows < columns).
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    a = np.asarray(a, dtype=complex)
    f = np.asarray(f, dtype=complex)
    ah = a.conj().T
    if a.shape[0] < a.shape[1]:
        gram = a @ ah
        gram[np.diag_indices_from(gram)] += alpha
        return ah @ cho_solve(cho_factor(gram), f)
    gram = ah @ a
    gram[np.diag_indices_from(gram)] += alpha
    return cho_solve(cho_factor(gram), ah @ f)


def born_system(grid, traces, k, angles, alpha=None, radius=1.0):
    a = assemble_born_operator(grid, k, angles)
    f = born_rhs(traces, k, angles, radius)
    if alpha is None:
        alpha = default_alpha(a)
    logger.info("Born system at k=%g: %d pairs x %d cells, alpha=%.3e", k, *a.shape, alpha)
    return BornSystem(a, f, float(k), float(alpha))


def born_initial_sigma(grid, traces, k, angles, alpha=None, bounds=(None, None),
                       support=None, radius=1.0):
    """Conductivity initializer ``σ₀ = k·Im(q₀)`` on the grid.

    ``bounds`` clamps the values; ``support`` is an optional boolean mask
    outside of which σ₀ is zeroed.
    """
    system = born_system(grid, traces, k, angles, alpha, radius)
    q0 = system.solve()
    sigma = np.zeros((grid.n, grid.n))
    sigma[grid.inside] = k * q0.imag
    lo, hi = bounds
    if lo is not None or hi is not None:
        sigma = np.clip(sigma, lo, hi)
    if support is not None:
        sigma[~support] = 0.0
    sigma[~grid.inside] = 0.0
    return sigma, system
