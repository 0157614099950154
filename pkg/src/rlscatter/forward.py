"""Direct and adjoint Helmholtz solves on a disk.

Two forward models are provided for the medium equation

    Δu^s + k²(1+q) u^s = -k² q u^i   in Ω,

* the first-order absorbing boundary condition ``∂u^s/∂n - ik u^s = 0`` on Γ
  (:func:`solve_scattered_abc`), and
* an exact exterior coupling in which the interior P1 solution is matched on
  Γ to an outgoing Hankel series (:func:`couple_fem_bem`,
  :class:`CoupledSolver`).

The coupled model represents the interior scattered field as
``G_i λ + F``: ``G_i`` is the interior Robin solution operator
(``∂w/∂n + ikw = λ``), ``F`` carries the volume source with homogeneous
Robin data, and the exterior field is ``G_e λ``.  Matching Dirichlet values
at 2N equispaced points on Γ determines the Fourier coefficients of ``λ``.
"""

import csv
import logging
import warnings
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import specfun
from .mesh import check_resolution

logger = logging.getLogger(__name__)

TRACE_HEADER = ["theta_inc", "k", "t", "re_u", "im_u", "re_dudn", "im_dudn"]
COND_WARN = 1e12
EXTRA_MODES = 8

# 7-point degree-5 rule on the reference triangle (barycentric, weight)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_W1, _W2 = 0.132394152788506, 0.125939180544827
QUAD_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
QUAD_W = np.array([0.225, _W1, _W1, _W1, _W2, _W2, _W2])

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(4)
SUBDIVISION = 8


def _subdivided_rule(levels):
    """The 7-point rule replicated on a regular ``levels²`` subdivision."""
    corners = []
    for i in range(levels):
        for j in range(levels - i):
            a = np.array([i, j]) / levels
            corners.append([a, a + [1 / levels, 0], a + [0, 1 / levels]])
            if i + j < levels - 1:
                b = a + [1 / levels, 1 / levels]
                corners.append([b, b - [0, 1 / levels], b - [1 / levels, 0]])
    corners = np.array(corners)  # (S, 3, 2) in (xi, eta)
    pts = np.einsum("qk,skd->sqd", QUAD_BARY, corners).reshape(-1, 2)
    bary = np.column_stack([1 - pts.sum(axis=1), pts])
    w = np.tile(QUAD_W, len(corners)) / len(corners)
    return bary, w


class SolverError(RuntimeError):
    """Linear solve failed (singular or near-resonant system)."""


class AccuracyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class IncidentWave:
    """Plane wave ``exp(ik x·d)`` with ``d = (cos angle, sin angle)``."""

    k: float
    angle: float

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"wavenumber must be positive, got {self.k}")

    @property
    def direction(self):
        return np.array([np.cos(self.angle), np.sin(self.angle)])

    def field(self, points):
        points = np.asarray(points, dtype=float)
        return np.exp(1j * self.k * points @ self.direction)

    def gradient(self, points):
        return 1j * self.k * self.field(points)[..., None] * self.direction


@dataclass
class BoundaryTrace:
    """Dirichlet and outward normal-derivative samples on Γ."""

    angles: np.ndarray
    dirichlet: np.ndarray
    neumann: np.ndarray

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        self.dirichlet = np.asarray(self.dirichlet, dtype=complex)
        self.neumann = np.asarray(self.neumann, dtype=complex)
        if not (len(self.angles) == len(self.dirichlet) == len(self.neumann)):
            raise ValueError("trace arrays must have equal length")
        if np.any(np.diff(self.angles) <= 0) or (
            len(self.angles) and (self.angles[0] < 0 or self.angles[-1] >= 2 * np.pi)
        ):
            raise ValueError("trace angles must be strictly increasing in [0, 2pi)")


@dataclass
class HelmholtzSystem:
    matrix: sp.csc_matrix
    load: np.ndarray
    k: float


@dataclass
class CouplingResult:
    """Output of a coupled solve for one incident wave.

    ``total_field`` and ``scattered_field`` are nodal; ``trace`` holds the
    scattered field on Γ at the 2N collocation angles.
    """

    total_field: np.ndarray
    scattered_field: np.ndarray
    lambda_coefficients: np.ndarray
    trace: BoundaryTrace
    k: float
    radius: float

    @property
    def orders(self):
        n_half = len(self.lambda_coefficients) // 2
        return np.arange(-n_half, n_half)

    def exterior(self, points):
        """Scattered field outside Γ from the Hankel series."""
        return exterior_hankel_eval(self.k, self.radius, self.lambda_coefficients, points)

    def scattered_on_boundary(self, angles):
        r = self.radius
        pts = np.column_stack([r * np.cos(angles), r * np.sin(angles)])
        return self.exterior(pts)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------
class _MeshOperators:
    """q-independent FEM data for one mesh."""

    def __init__(self, mesh):
        v = mesh.vertices
        t = mesh.triangles
        nv = mesh.n_vertices
        p = v[t]
        area = mesh.signed_areas()
        # gradients of barycentric coordinates, (T, 3, 2)
        grads = np.empty((len(t), 3, 2))
        for i in range(3):
            a = p[:, (i + 1) % 3]
            b = p[:, (i + 2) % 3]
            grads[:, i, 0] = (a[:, 1] - b[:, 1]) / (2 * area)
            grads[:, i, 1] = (b[:, 0] - a[:, 0]) / (2 * area)
        ke = np.einsum("tid,tjd->tij", grads, grads) * area[:, None, None]
        self.rows = np.repeat(t, 3, axis=1).ravel()
        self.cols = np.tile(t, (1, 3)).ravel()
        self.shape = (nv, nv)
        self.stiffness = self._coo(ke.ravel()).tocsc()
        self.area = area
        self.triangles = t
        self.quad_points = np.einsum("qk,tkd->tqd", QUAD_BARY, p)
        self.quad_weights = area[:, None] * QUAD_W[None, :]
        self._fine = None
        self._p = p

        loop = mesh.boundary_loop
        a, b = loop, np.roll(loop, -1)
        length = np.linalg.norm(v[b] - v[a], axis=1)
        br = np.concatenate([a, a, b, b])
        bc = np.concatenate([a, b, a, b])
        bv = np.concatenate([length / 3, length / 6, length / 6, length / 3])
        self.boundary_mass = sp.coo_matrix((bv, (br, bc)), shape=self.shape).tocsc()
        self.boundary_edges = (a, b, length)
        self.boundary_angles = mesh.boundary_angles
        self.loop = loop
        self.n_vertices = nv

    def _coo(self, vals):
        return sp.coo_matrix((vals, (self.rows, self.cols)), shape=self.shape)

    def mass(self, coef):
        """Exact P1 mass matrix with P1 coefficient ``coef``."""
        c = np.asarray(coef)[self.triangles]  # (T, 3)
        s = c.sum(axis=1)
        a = self.area
        me = (a / 60)[:, None, None] * (c[:, :, None] + c[:, None, :] + s[:, None, None])
        diag = (a / 30)[:, None] * (2 * c + s[:, None])
        idx = np.arange(3)
        me[:, idx, idx] = diag
        return self._coo(me.ravel()).tocsc()

    def volume_load(self, coef, values):
        """∫ coef·values·φ_j with coef nodal (P1) and values at quadrature points."""
        c_q = np.asarray(coef)[self.triangles] @ QUAD_BARY.T  # (T, Q)
        return self.integrate_basis(c_q * values, QUAD_BARY, self.quad_weights)

    def integrate_basis(self, values, bary, weights, tri=None):
        """∫ f φ_j for ``f`` sampled at the quadrature points (T, Q).

        ``tri`` restricts the sum to a subset of triangles (rows of ``values``).
        """
        contrib = (values * weights) @ bary  # (T, 3)
        idx = self.triangles if tri is None else self.triangles[tri]
        out = np.zeros(self.n_vertices, dtype=complex)
        np.add.at(out, idx.ravel(), contrib.ravel())
        return out

    @property
    def fine(self):
        """(bary, points, weights) of the subdivided rule, for callable coefficients."""
        if self._fine is None:
            bary, w = _subdivided_rule(SUBDIVISION)
            pts = np.einsum("qk,tkd->tqd", bary, self._p)
            self._fine = (bary, pts, self.area[:, None] * w[None, :])
        return self._fine

    def weighted_mass(self, values, bary, weights, tri=None):
        """∫ f φ_i φ_j for ``f`` sampled at quadrature points."""
        me = np.einsum("tq,qi,qj->tij", values * weights, bary, bary)
        if tri is None:
            return self._coo(me.ravel()).tocsc()
        t = self.triangles[tri]
        rows = np.repeat(t, 3, axis=1).ravel()
        cols = np.tile(t, (1, 3)).ravel()
        return sp.coo_matrix((me.ravel(), (rows, cols)), shape=self.shape).tocsc()

    def nodal_at_quad(self, values):
        return np.asarray(values)[self.triangles] @ QUAD_BARY.T

    def boundary_load(self, func):
        """∮ f φ_j ds for ``f`` a function of the polar angle, on chord edges."""
        a, b, length = self.boundary_edges
        ta = self.boundary_angles_of(a)
        tb = self.boundary_angles_of(b)
        tb = np.where(tb <= ta, tb + 2 * np.pi, tb)
        s = 0.5 * (_GAUSS_X + 1)  # (G,)
        w = 0.5 * _GAUSS_W
        # chord points projected radially share the angle of the linear-in-angle map
        ang = ta[:, None] + s[None, :] * (tb - ta)[:, None]
        fv = func(ang)  # (E, G)
        wa = (fv * (1 - s) * w).sum(axis=1) * length
        wb = (fv * s * w).sum(axis=1) * length
        out = np.zeros(self.n_vertices, dtype=complex)
        np.add.at(out, a, wa)
        np.add.at(out, b, wb)
        return out

    def boundary_angles_of(self, verts):
        pos = {int(v): i for i, v in enumerate(self.loop)}
        return self.boundary_angles[[pos[int(v)] for v in verts]]

    def boundary_eval_matrix(self, angles):
        """Sparse (P, V) matrix: linear-in-angle interpolation along Γ."""
        ang = np.mod(np.asarray(angles, dtype=float), 2 * np.pi)
        bang = self.boundary_angles
        nb = len(bang)
        ext = np.concatenate([bang, [bang[0] + 2 * np.pi]])
        shifted = np.where(ang < bang[0], ang + 2 * np.pi, ang)
        j = np.clip(np.searchsorted(ext, shifted, side="right") - 1, 0, nb - 1)
        s = (shifted - ext[j]) / (ext[j + 1] - ext[j])
        rows = np.concatenate([np.arange(len(ang))] * 2)
        cols = np.concatenate([self.loop[j], self.loop[(j + 1) % nb]])
        vals = np.concatenate([1 - s, s])
        return sp.csr_matrix((vals, (rows, cols)), shape=(len(ang), self.n_vertices))


_OPERATOR_CACHE = weakref.WeakKeyDictionary()


def operators(mesh):
    ops = _OPERATOR_CACHE.get(mesh)
    if ops is None:
        ops = _MeshOperators(mesh)
        _OPERATOR_CACHE[mesh] = ops
    return ops


class Coefficient:
    """Scatterer given as nodal P1 values or as a callable ``q(points)``.

    Callables are sampled at the 7-point rule.  With ``resolve_jumps`` the
    triangles on which ``q`` is not constant are integrated with a
    subdivided rule instead, so discontinuous scatterers are resolved below
    the mesh scale.
    """

    def __init__(self, mesh, q, conjugate=False, resolve_jumps=True):
        self.mesh = mesh
        self._ops = operators(mesh)
        self.conjugate = conjugate
        self.nodal = None
        self.func = None
        self.rough = np.zeros(0, dtype=int)
        self.fine_values = np.zeros((0, 0), dtype=complex)
        if callable(q):
            self.func = q
            ops = self._ops
            pts = ops.quad_points
            vals = np.asarray(q(pts.reshape(-1, 2)), dtype=complex).reshape(pts.shape[:2])
            if resolve_jumps:
                _, fpts, _ = ops.fine
                fine = np.asarray(q(fpts.reshape(-1, 2)), dtype=complex).reshape(fpts.shape[:2])
                rough = np.flatnonzero(np.any(fine != fine[:, :1], axis=1))
                # constant triangles: the 7-point rule with the exact constant
                vals = np.repeat(fine[:, :1], vals.shape[1], axis=1)
                self.rough = rough
                self.fine_values = fine[rough]
                vals[rough] = 0.0
            self.quad_values = vals
            self.is_zero = not (np.any(vals) or np.any(self.fine_values))
            if conjugate:
                self.quad_values = np.conj(self.quad_values)
                self.fine_values = np.conj(self.fine_values)
        else:
            nodal = _check_nodal(mesh, q)
            self.nodal = np.conj(nodal) if conjugate else nodal
            self.is_zero = not np.any(nodal)

    def conj(self):
        out = Coefficient.__new__(Coefficient)
        out.__dict__.update(self.__dict__)
        if self.nodal is not None:
            out.nodal = np.conj(self.nodal)
        else:
            out.quad_values = np.conj(self.quad_values)
            out.fine_values = np.conj(self.fine_values)
        out.conjugate = not self.conjugate
        return out

    def mass(self):
        """∫ (1+q) φ_i φ_j."""
        ops = self._ops
        if self.nodal is not None:
            return ops.mass(1.0 + self.nodal)
        m = ops.mass(np.ones(self.mesh.n_vertices))
        m = m + ops.weighted_mass(self.quad_values, QUAD_BARY, ops.quad_weights)
        if len(self.rough):
            bary, _, w = ops.fine
            m = m + ops.weighted_mass(self.fine_values, bary, w[self.rough], self.rough)
        return m

    def load(self, func):
        """∫ q·f·φ_j with ``f`` a function of points evaluated exactly."""
        ops = self._ops
        if self.nodal is not None:
            return ops.volume_load(self.nodal, func(ops.quad_points))
        out = ops.integrate_basis(self.quad_values * func(ops.quad_points), QUAD_BARY,
                                  ops.quad_weights)
        if len(self.rough):
            bary, pts, w = ops.fine
            r = self.rough
            out += ops.integrate_basis(self.fine_values * func(pts[r]), bary, w[r], r)
        return out

    def nodal_values(self):
        if self.nodal is not None:
            return self.nodal
        vals = np.asarray(self.func(self.mesh.vertices), dtype=complex)
        return np.conj(vals) if self.conjugate else vals


def as_coefficient(mesh, q):
    return q if isinstance(q, Coefficient) else Coefficient(mesh, q)


def _check_nodal(mesh, q, name="q"):
    q = np.asarray(q, dtype=complex)
    if q.shape != (mesh.n_vertices,):
        raise ValueError(f"{name} has shape {q.shape}, mesh has {mesh.n_vertices} vertices")
    return q


def helmholtz_matrix(mesh, q, k, robin_sign=-1):
    """K - k² M_{1+q} + robin_sign·ik B as CSC.

    ``robin_sign=-1`` is the absorbing condition ∂u/∂n - iku = 0;
    ``robin_sign=+1`` is the Robin operator ∂w/∂n + ikw = data.
    """
    ops = operators(mesh)
    m = as_coefficient(mesh, q).mass()
    return (ops.stiffness - k**2 * m + robin_sign * 1j * k * ops.boundary_mass).tocsc()


def scattering_load(mesh, q, wave):
    """k² ∫ q u^i φ_j, with u^i evaluated exactly at quadrature points."""
    return wave.k**2 * as_coefficient(mesh, q).load(wave.field)


def assemble_system(mesh, q, k, wave=None):
    """Discrete absorbing-boundary Helmholtz system for scatterer ``q``.

    The matrix is ``∫∇φ_i·∇φ_j - k²∫(1+q)φ_iφ_j - ik∮φ_iφ_j``; the load is
    ``k²∫ q u^i φ_j`` when an incident wave is given, zero otherwise.  ``q``
    is a nodal array or a callable of points.
    """
    q = as_coefficient(mesh, q)
    if not k > 0:
        raise ValueError("k must be positive")
    matrix = helmholtz_matrix(mesh, q, k, robin_sign=-1)
    if wave is None:
        load = np.zeros(mesh.n_vertices, dtype=complex)
    else:
        load = scattering_load(mesh, q, wave)
    return HelmholtzSystem(matrix, load, k)


def _factor(matrix, k, mesh):
    try:
        lu = splu(matrix)
    except RuntimeError as exc:
        raise SolverError(f"factorization failed at k={k}, h={mesh.h:.4g}: {exc}") from exc
    return lu


def _solve(lu, rhs, k, mesh):
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError(f"non-finite solution at k={k}, h={mesh.h:.4g} (near resonance?)")
    return x


def solve_scattered_abc(mesh, q, wave):
    """Scattered field with the first-order absorbing boundary condition."""
    check_resolution(mesh, wave.k)
    system = assemble_system(mesh, q, wave.k, wave)
    if not np.any(system.load):
        return np.zeros(mesh.n_vertices, dtype=complex)
    lu = _factor(system.matrix, wave.k, mesh)
    return _solve(lu, system.load, wave.k, mesh)


def incident_trace(wave, trace_angles, r):
    """Dirichlet and outward normal derivative of the plane wave on ``|x| = r``."""
    t = np.asarray(trace_angles, dtype=float)
    pts = r * np.column_stack([np.cos(t), np.sin(t)])
    u = wave.field(pts)
    n_dot_d = np.cos(t - wave.angle)
    return BoundaryTrace(t, u, 1j * wave.k * n_dot_d * u)


def solve_robin(mesh, q, k, robin_data):
    """Solve Δw + k²(1+q)w = 0 with ∂w/∂n + ikw = data on Γ.

    ``robin_data`` is indexed like ``mesh.boundary_loop``.
    """
    data = np.asarray(robin_data, dtype=complex)
    if data.shape != (len(mesh.boundary_loop),):
        raise ValueError("robin_data must have one value per boundary vertex")
    ops = operators(mesh)
    g = np.zeros(mesh.n_vertices, dtype=complex)
    g[mesh.boundary_loop] = data
    rhs = ops.boundary_mass @ g
    if not np.any(rhs):
        return np.zeros(mesh.n_vertices, dtype=complex)
    lu = _factor(helmholtz_matrix(mesh, q, k, robin_sign=+1), k, mesh)
    return _solve(lu, rhs, k, mesh)


def trig_interpolant(values):
    """Trigonometric interpolant of equispaced samples on [0, 2pi)."""
    values = np.asarray(values, dtype=complex)
    m = len(values)
    c = np.fft.fft(values) / m
    freqs = np.fft.fftfreq(m, d=1.0 / m)
    if m % 2 == 0:
        # split the Nyquist mode symmetrically so real data stay real
        nyq = m // 2
        c = np.append(c, c[nyq] / 2)
        c[nyq] /= 2
        freqs = np.append(freqs, nyq)
        freqs[m // 2] = -nyq

    def f(t):
        t = np.asarray(t, dtype=float)
        return np.exp(1j * t[..., None] * freqs) @ c

    return f


class AdjointSolver:
    """Adjoint problem Δψ + k²(1+q̄)ψ = 0, ∂ψ/∂n + ikψ = k²·R on Γ.

    One factorization serves any number of residuals.  Only real
    wavenumbers are supported.
    """

    def __init__(self, mesh, q, k):
        self.mesh = mesh
        self.k = float(k)
        qbar = as_coefficient(mesh, q).conj()
        self._lu = _factor(helmholtz_matrix(mesh, qbar, self.k, robin_sign=+1), self.k, mesh)

    def solve(self, residuals, residual_angles=None):
        """``residuals`` is (n,) or (n, m): per boundary vertex, or equispaced
        samples at ``residual_angles`` (trigonometrically interpolated onto Γ)."""
        residuals = np.asarray(residuals, dtype=complex)
        if residual_angles is None or residuals.ndim == 1:
            load = adjoint_load(self.mesh, self.k, residuals, residual_angles)
        else:
            load = np.column_stack([
                adjoint_load(self.mesh, self.k, residuals[:, j], residual_angles)
                for j in range(residuals.shape[1])
            ])
        return _solve(self._lu, load, self.k, self.mesh)


def solve_adjoint(mesh, q, k, residual, residual_angles=None):
    """Adjoint field ψ for one residual; see :class:`AdjointSolver`."""
    return AdjointSolver(mesh, q, k).solve(residual, residual_angles)


def adjoint_load(mesh, k, residual, residual_angles=None):
    ops = operators(mesh)
    residual = np.asarray(residual, dtype=complex)
    if residual_angles is None:
        if residual.shape[0] != len(mesh.boundary_loop):
            raise ValueError("residual must have one value per boundary vertex")
        g = np.zeros((mesh.n_vertices,) + residual.shape[1:], dtype=complex)
        g[mesh.boundary_loop] = residual
        return k**2 * (ops.boundary_mass @ g)
    f = trig_interpolant(residual)
    return k**2 * ops.boundary_load(f)


def domain_inner_product(mesh, delta_q, wave, scattered, psi):
    """Volume pairing ``⟨δq, conj(ũ)ψ⟩_Ω = ∫_Ω δq (u^i + u^s) conj(ψ) dx``.

    Evaluated with P1 interpolants of the nodal
    fields, the exact incident wave, and the subdivided quadrature rule.
    This is the volume side of the adjoint identity
    ``⟨DM δq, R⟩_Γ = ⟨δq, conj(ũ)ψ⟩_Ω``.
    """
    ops = operators(mesh)
    bary, pts, weights = ops.fine
    tri = mesh.triangles

    def at(values):
        return np.asarray(values)[tri] @ bary.T

    total = wave.field(pts.reshape(-1, 2)).reshape(weights.shape) + at(scattered)
    return complex(np.sum(weights * at(delta_q) * total * np.conj(at(psi))))


# ---------------------------------------------------------------------------
# exterior Hankel series and coupling
# ---------------------------------------------------------------------------
def _mode_orders(n_coeffs):
    if n_coeffs % 2:
        raise ValueError("coefficient list must have even length 2N (orders -N..N-1)")
    half = n_coeffs // 2
    return np.arange(-half, half)


def exterior_factors(k, r_gamma, orders):
    """(1/k)·H_n(k r_Γ)/(H_n'(k r_Γ) + i H_n(k r_Γ)): G_e(e^{inθ}) on Γ."""
    x = k * r_gamma
    h = specfun.hankel1(orders, x)
    dh = specfun.hankel1_derivative(orders, x)
    return h / (k * (dh + 1j * h))


def exterior_hankel_eval(k, r_gamma, coeffs, points, derivative=False):
    """Outgoing field ``G_e λ`` at points with ``|x| >= r_gamma``.

    ``coeffs`` are the Fourier coefficients a_n of λ for n = -N..N-1.
    With ``derivative=True`` returns ``(w, ∂w/∂r)``.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    orders = _mode_orders(len(coeffs))
    points = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.linalg.norm(points, axis=1)
    if np.any(r < r_gamma * (1 - 1e-12)):
        raise ValueError("exterior evaluation point inside Γ")
    theta = np.arctan2(points[:, 1], points[:, 0])
    x0 = k * r_gamma
    denom = k * (specfun.hankel1_derivative(orders, x0) + 1j * specfun.hankel1(orders, x0))
    kr = k * r[:, None]
    terms = coeffs / denom * np.exp(1j * orders * theta[:, None])
    w_terms = terms * specfun.hankel1(orders, kr)
    partial = np.abs(w_terms.sum(axis=1))
    last = np.abs(w_terms[:, [0, -1]]).max(axis=1)
    if np.any(last > 1e-12 * np.maximum(partial, 1e-300)):
        logger.debug("Hankel series may be truncated: last term/partial sum up to %.2e",
                     float(np.max(last / np.maximum(partial, 1e-300))))
    w = w_terms.sum(axis=1)
    if not derivative:
        return w
    dw = (terms * k * specfun.hankel1_derivative(orders, kr)).sum(axis=1)
    return w, dw


def collocation_angles(n_modes):
    return np.pi * np.arange(2 * n_modes) / n_modes


class CoupledSolver:
    """Exterior-coupled forward solver for a fixed (mesh, q, k).

    The interior Robin factorization, the 2N interior responses to the
    Fourier modes and the dense collocation matrix depend only on
    ``(mesh, q, k, N)`` and are shared by every incident angle.
    """

    def __init__(self, mesh, q, k, n_modes=None):
        self.mesh = mesh
        self.q = as_coefficient(mesh, q)
        self.k = float(k)
        check_resolution(mesh, self.k)
        r = mesh.radius
        n_min = int(np.ceil(k * r)) + EXTRA_MODES
        if n_modes is None:
            n_modes = n_min
        if n_modes < n_min:
            raise ValueError(f"N={n_modes} < ceil(k r)+{EXTRA_MODES}={n_min}")
        self.n_modes = int(n_modes)
        self.orders = np.arange(-self.n_modes, self.n_modes)
        self.angles = collocation_angles(self.n_modes)
        ops = operators(mesh)
        self._ops = ops
        self._lu = _factor(helmholtz_matrix(mesh, self.q, k, robin_sign=+1), k, mesh)
        self._eval = ops.boundary_eval_matrix(self.angles)

        orders = self.orders
        loads = np.column_stack([
            ops.boundary_load(lambda t, n=n: np.exp(1j * n * t)) for n in orders
        ])
        self._gi_modes = _solve(self._lu, loads, k, mesh)  # (V, 2N)
        self._ge = exterior_factors(self.k, r, orders)
        fourier = np.exp(1j * np.outer(self.angles, orders))  # (2N, 2N)
        self._fourier = fourier
        self.matrix = self._eval @ self._gi_modes - fourier * self._ge
        cond = np.linalg.cond(self.matrix)
        if cond > COND_WARN:
            warnings.warn(f"coupling system condition {cond:.2e} at k={k}", AccuracyWarning)
        self._dense_lu = _dense_lu(self.matrix)

    def solve(self, angles):
        """Coupled solutions for a list of incidence angles."""
        angles = np.atleast_1d(np.asarray(angles, dtype=float))
        if self.q.is_zero:
            return [self._zero_result(a) for a in angles]
        ops = self._ops
        loads = np.column_stack([
            scattering_load(self.mesh, self.q, IncidentWave(self.k, a)) for a in angles
        ])
        f = _solve(self._lu, loads, self.k, self.mesh)  # (V, A)
        coeffs = _dense_solve(self._dense_lu, -(self._eval @ f))  # (2N, A)
        us = self._gi_modes @ coeffs + f
        results = []
        for j, a in enumerate(angles):
            wave = IncidentWave(self.k, a)
            ui = wave.field(self.mesh.vertices)
            lam = self._fourier @ coeffs[:, j]
            dir_s = self._fourier @ (self._ge * coeffs[:, j])
            trace = BoundaryTrace(self.angles, dir_s, lam - 1j * self.k * dir_s)
            results.append(CouplingResult(ui + us[:, j], us[:, j], coeffs[:, j], trace,
                                          self.k, self.mesh.radius))
        return results

    def _zero_result(self, angle):
        wave = IncidentWave(self.k, angle)
        nv = self.mesh.n_vertices
        zeros = np.zeros(2 * self.n_modes, dtype=complex)
        trace = BoundaryTrace(self.angles, zeros.copy(), zeros.copy())
        return CouplingResult(wave.field(self.mesh.vertices), np.zeros(nv, dtype=complex),
                              zeros, trace, self.k, self.mesh.radius)


def _dense_lu(a):
    from scipy.linalg import lu_factor

    return lu_factor(a)


def _dense_solve(lu, b):
    from scipy.linalg import lu_solve

    return lu_solve(lu, b)


def couple_fem_bem(mesh, q, wave, n_modes=None):
    """Coupled interior/exterior solve for one incident wave."""
    return CoupledSolver(mesh, q, wave.k, n_modes).solve([wave.angle])[0]


# ---------------------------------------------------------------------------
# linearization
# ---------------------------------------------------------------------------
def frechet_apply(mesh, q, delta_q, wave):
    """Derivative of the ABC scattering map: Δv + k²(1+q)v = -k²δq(u^i + u^s)."""
    q = as_coefficient(mesh, q)
    dq = _check_nodal(mesh, delta_q, "delta_q")
    ops = operators(mesh)
    k = wave.k
    lu = _factor(helmholtz_matrix(mesh, q, k, robin_sign=-1), k, mesh)
    us = np.zeros(mesh.n_vertices, dtype=complex)
    if not q.is_zero:
        us = _solve(lu, scattering_load(mesh, q, wave), k, mesh)
    if not np.any(dq):
        return np.zeros(mesh.n_vertices, dtype=complex)
    total_q = wave.field(ops.quad_points) + ops.nodal_at_quad(us)
    load = k**2 * ops.volume_load(dq, total_q)
    return _solve(lu, load, k, mesh)


# ---------------------------------------------------------------------------
# trace files
# ---------------------------------------------------------------------------
def write_trace(path, trace, theta_inc, k):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for t, u, du in zip(trace.angles, trace.dirichlet, trace.neumann):
            w.writerow([f"{v:.16e}" for v in (theta_inc, k, t, u.real, u.imag, du.real, du.imag)])


def read_trace(path):
    """Return ``(trace, theta_inc, k)`` from a trace CSV."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = np.array([[float(x) for x in row] for row in reader])
    if len(rows) == 0:
        raise ValueError(f"{path}: empty trace")
    theta_inc, k = rows[0, 0], rows[0, 1]
    trace = BoundaryTrace(rows[:, 2], rows[:, 3] + 1j * rows[:, 4], rows[:, 5] + 1j * rows[:, 6])
    return trace, theta_inc, k
