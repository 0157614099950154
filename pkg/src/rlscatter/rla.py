"""Recursive linearization: frequency continuation with Landweber updates.

At each wavenumber of an increasing ladder the current conductivity is
improved by a few sweeps.  A sweep solves, for every incident angle, the
coupled forward problem at the current iterate and an adjoint problem
driven by the boundary residual, then applies the angle-averaged update

    δq = β/n_θ · Σ_θ conj(ũ_θ) ψ_θ,     δσ = k·Im(δq).
"""

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import born, forward
from .forward import AdjointSolver, CoupledSolver, SolverError
from .grid import write_grid
from .synth import relative_error

logger = logging.getLogger(__name__)

frechet_apply = forward.frechet_apply


class DatasetGapError(ValueError):
    """The dataset lacks wavenumbers required by the schedule."""

    def __init__(self, gaps):
        self.gaps = list(gaps)
        super().__init__("dataset has no complete data at k = "
                         + ", ".join(f"{k:g}" for k in self.gaps))


@dataclass
class ContinuationSchedule:
    """Wavenumber ladder and per-step relaxation.

    ``beta=None`` selects ``beta_scale / k²`` at each wavenumber.
    """

    wavenumbers: list
    sweeps_per_k: int = 3
    beta: float = None
    beta_scale: float = 2.0

    def __post_init__(self):
        ks = np.asarray(self.wavenumbers, dtype=float)
        if ks.size == 0 or np.any(ks <= 0) or np.any(np.diff(ks) <= 0):
            raise ValueError("wavenumbers must be positive and strictly increasing")
        if self.sweeps_per_k < 1:
            raise ValueError("sweeps_per_k must be at least 1")
        self.wavenumbers = [float(k) for k in ks]

    def beta_at(self, k):
        return self.beta if self.beta is not None else self.beta_scale / k**2


def frequency_schedule(k_min, k_max, step, **kwargs):
    """Arithmetic ladder from ``k_min`` by ``step``, ending exactly at ``k_max``."""
    if not 0 < k_min < k_max:
        raise ValueError("need 0 < k_min < k_max")
    if not step > 0:
        raise ValueError("step must be positive")
    ks = []
    i = 0
    while True:
        k = round(k_min + i * step, 12)
        if k >= k_max - 1e-12 * k_max:
            break
        ks.append(k)
        i += 1
    ks.append(float(k_max))
    return ContinuationSchedule(ks, **kwargs)


@dataclass
class LogRecord:
    """``residual_l2`` is the misfit entering the sweep; ``rel_error`` is the
    error after it.  Sweep 0 is the Born initializer."""

    k: float
    sweep: int
    residual_l2: float
    rel_error: float = None
    real_part: float = 0.0


@dataclass
class ReconstructionState:
    sigma: np.ndarray
    k_index: int = 0
    log: list = field(default_factory=list)

    def copy(self):
        return ReconstructionState(self.sigma.copy(), self.k_index, list(self.log))


def landweber_update(u_tilde, psi, beta):
    """Pointwise ``β·conj(ũ)·ψ``; 2-D inputs are averaged over columns (angles)."""
    u_tilde = np.asarray(u_tilde)
    psi = np.asarray(psi)
    if u_tilde.shape != psi.shape:
        raise ValueError(f"field shapes differ: {u_tilde.shape} vs {psi.shape}")
    prod = np.conj(u_tilde) * psi
    if prod.ndim == 2:
        prod = prod.mean(axis=1)
    return beta * prod


class Reconstructor:
    """Sweeps over a fixed mesh, grid and dataset.

    Parameters
    ----------
    mesh : Mesh
        Reconstruction mesh (forward and adjoint solves).
    grid : ReconGrid
        Grid holding the conductivity state.
    dataset : ScatteringDataset
    support_radius : float
        Updates are zeroed outside this radius.
    truth : ndarray, optional
        True σ on ``grid``; enables the relative-error column.
    """

    def __init__(self, mesh, grid, dataset, support_radius=0.95, truth=None, n_modes=None):
        self.mesh = mesh
        self.grid = grid
        self.dataset = dataset
        self.mask = grid.mask(support_radius)
        self.truth = truth
        self.n_modes = n_modes
        self.angles = np.asarray(dataset.angles, dtype=float)

    def error(self, sigma):
        if self.truth is None:
            return None
        return relative_error(sigma, self.truth, self.grid.inside)

    def _q(self, sigma, k):
        return 1j * self.grid.to_mesh(sigma, self.mesh) / k

    def _n_modes(self, k):
        if self.n_modes is None:
            return None
        return max(self.n_modes, int(np.ceil(k * self.mesh.radius)) + forward.EXTRA_MODES)

    def residuals(self, sigma, k):
        """Forward results at the iterate and data-minus-prediction on Γ.

        Returns ``(results, R, weights)`` with ``R`` of shape (J, n_θ) at the
        dataset's quadrature angles.
        """
        q = self._q(sigma, k)
        solver = CoupledSolver(self.mesh, q, k, self._n_modes(k))
        results = solver.solve(self.angles)
        data = self.dataset.traces_at(k)
        t = data[0].angles
        pred = np.column_stack([r.scattered_on_boundary(t) for r in results])
        meas = np.column_stack([d.dirichlet for d in data])
        w = 2 * np.pi * self.mesh.radius / len(t)
        return results, meas - pred, w

    def misfit(self, sigma, k):
        _, res, w = self.residuals(sigma, k)
        return float(np.sqrt(w * np.sum(np.abs(res) ** 2)))

    def update(self, sigma, k, beta):
        """One averaged Landweber step; returns ``(δσ grid, misfit, Re δq norm)``."""
        results, res, w = self.residuals(sigma, k)
        t = self.dataset.traces_at(k)[0].angles
        psi = AdjointSolver(self.mesh, self._q(sigma, k), k).solve(res, t)
        u = np.column_stack([r.total_field for r in results])
        dq = landweber_update(u, psi, beta)
        dsigma = self.grid.from_mesh(self.mesh, k * dq.imag)
        dsigma[~self.mask] = 0.0
        misfit = float(np.sqrt(w * np.sum(np.abs(res) ** 2)))
        return dsigma, misfit, float(np.linalg.norm(dq.real))

    def sweep(self, state, k, beta, sweep_index=1):
        """Apply one update at ``k``; on solver failure the state is returned unchanged."""
        try:
            dsigma, misfit, re_norm = self.update(state.sigma, k, beta)
        except (SolverError, np.linalg.LinAlgError) as exc:
            logger.error("sweep at k=%g aborted: %s", k, exc)
            return state
        new = state.copy()
        new.sigma = state.sigma + dsigma
        new.log.append(LogRecord(k, sweep_index, misfit, self.error(new.sigma), re_norm))
        logger.info("k=%-6g sweep %d  misfit %.4e  rel.err %s", k, sweep_index, misfit,
                    "n/a" if new.log[-1].rel_error is None else f"{new.log[-1].rel_error:.4f}")
        return new

    def born_start(self, k, alpha=None):
        sigma, system = born.born_initial_sigma(
            self.grid, self.dataset.traces_at(k), k, self.angles, alpha=alpha,
            support=self.mask, radius=self.mesh.radius,
        )
        misfit = self.misfit(sigma, k)
        state = ReconstructionState(sigma, 0, [LogRecord(k, 0, misfit, self.error(sigma))])
        logger.info("Born start at k=%g: alpha %.3e, misfit %.4e", k, system.alpha, misfit)
        return state

    def run(self, schedule, alpha=None, initial=None, snapshot_dir=None):
        """Born initialization (unless ``initial`` σ is given), then the ladder."""
        gaps = self.dataset.missing(schedule.wavenumbers)
        if gaps:
            raise DatasetGapError(gaps)
        ks = schedule.wavenumbers
        if initial is None:
            state = self.born_start(ks[0], alpha)
        else:
            sigma = np.where(self.mask, np.asarray(initial, dtype=float), 0.0)
            state = ReconstructionState(sigma, 0, [])
        if snapshot_dir:
            os.makedirs(snapshot_dir, exist_ok=True)
        for idx, k in enumerate(ks):
            state.k_index = idx
            for s in range(schedule.sweeps_per_k):
                state = self.sweep(state, k, schedule.beta_at(k), s + 1)
            if snapshot_dir:
                write_grid(os.path.join(snapshot_dir, f"sigma_k{idx:03d}.csv"), self.grid,
                           state.sigma)
        return state


def write_log(path, log):
    with open(path, "w") as f:
        f.write("k,sweep,residual_l2,rel_error\n")
        for r in log:
            err = "" if r.rel_error is None else f"{r.rel_error:.16e}"
            f.write(f"{r.k:.16e},{r.sweep},{r.residual_l2:.16e},{err}\n")


def read_log(path):
    import csv

    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != ["k", "sweep", "residual_l2", "rel_error"]:
            raise ValueError(f"{path}: not a convergence log")
        return [LogRecord(float(r["k"]), int(r["sweep"]), float(r["residual_l2"]),
                          float(r["rel_error"]) if r["rel_error"] else None) for r in reader]
