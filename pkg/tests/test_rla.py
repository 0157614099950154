import os

import numpy as np
import pytest

from checks import landweber_identity_gap, taylor_slope
from conftest import bump
from rlscatter import ReconGrid, generate_disk_mesh, refine
from rlscatter import forward as F
from rlscatter import rla
from rlscatter.forward import SolverError
from rlscatter.rla import (ContinuationSchedule, DatasetGapError, LogRecord, Reconstructor,
                           frequency_schedule, landweber_update, read_log, write_log)
from rlscatter.synth import Phantom, generate_data


# ---------------------------------------------------------------------------
# schedule
# ---------------------------------------------------------------------------
def test_schedule_examples():
    assert frequency_schedule(0.5, 2.0, 0.5).wavenumbers == [0.5, 1.0, 1.5, 2.0]
    ks = frequency_schedule(0.5, 10.1, 0.8).wavenumbers
    assert ks[-1] == 10.1 and ks[:3] == [0.5, 1.3, 2.1]
    assert np.all(np.diff(ks) > 0)
    eps = 1e-6
    assert frequency_schedule(1.0, 1.0 + eps, 5.0).wavenumbers == [1.0, 1.0 + eps]


def test_schedule_errors_and_beta():
    with pytest.raises(ValueError):
        frequency_schedule(1.0, 2.0, 0.0)
    with pytest.raises(ValueError):
        frequency_schedule(2.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        ContinuationSchedule([1.0, 1.0])
    with pytest.raises(ValueError):
        ContinuationSchedule([1.0], sweeps_per_k=0)
    assert ContinuationSchedule([2.0], beta_scale=2.0).beta_at(2.0) == 0.5
    assert ContinuationSchedule([2.0], beta=0.3).beta_at(2.0) == 0.3


# ---------------------------------------------------------------------------
# linearization and the Landweber step
# ---------------------------------------------------------------------------
def test_frechet_zero_and_linear(mesh_k2):
    wave = F.IncidentWave(2.0, 0.4)
    q = 0.1j * bump()(mesh_k2.vertices)
    assert not np.any(rla.frechet_apply(mesh_k2, q, np.zeros(mesh_k2.n_vertices), wave))
    dq = 0.02j * bump((-0.2, 0.1), 0.1)(mesh_k2.vertices)
    v1 = rla.frechet_apply(mesh_k2, q, dq, wave)
    v2 = rla.frechet_apply(mesh_k2, q, 2 * dq, wave)
    np.testing.assert_allclose(v2, 2 * v1, rtol=1e-12, atol=1e-14)


def test_taylor_remainder_is_second_order(mesh_k2):
    assert 1.7 <= taylor_slope(mesh_k2) <= 2.3


def test_landweber_examples():
    rng = np.random.default_rng(0)
    u = rng.normal(size=(10, 3)) + 1j * rng.normal(size=(10, 3))
    psi = rng.normal(size=(10, 3)) + 1j * rng.normal(size=(10, 3))
    assert not np.any(landweber_update(u, np.zeros_like(psi), 0.7))
    np.testing.assert_array_equal(landweber_update(u, psi, 1.4), 2 * landweber_update(u, psi, 0.7))
    np.testing.assert_allclose(landweber_update(u, psi, 1.0), np.mean(np.conj(u) * psi, axis=1))
    with pytest.raises(ValueError):
        landweber_update(u, psi[:5], 1.0)


def test_single_angle_identity():
    coarse = landweber_identity_gap(2 * np.pi / (24 * 2.0))
    fine = landweber_identity_gap(2 * np.pi / (48 * 2.0))
    assert fine <= 1e-3
    assert fine < coarse


# ---------------------------------------------------------------------------
# sweeps on a small Example 2 problem
# ---------------------------------------------------------------------------
KS = [1.0, 2.0, 3.0]


@pytest.fixture(scope="module")
def example2():
    mesh = generate_disk_mesh(1.0, 2 * np.pi / (10 * KS[-1]))
    grid = ReconGrid(32)
    angles = 2 * np.pi * np.arange(16) / 16
    data = generate_data(Phantom("example2"), KS, angles, refine(mesh))
    truth = Phantom("example2").on_grid(grid)
    return Reconstructor(mesh, grid, data, 0.95, truth)


@pytest.fixture(scope="module")
def born_state(example2):
    return example2.born_start(KS[0])


def test_one_sweep_decreases_residual(example2, born_state):
    after = example2.sweep(born_state, KS[0], 2.0 / KS[0] ** 2)
    assert len(after.log) == 2
    assert example2.misfit(after.sigma, KS[0]) < born_state.log[0].residual_l2


def test_more_sweeps_never_increase_final_residual(example2, born_state):
    def final_misfit(n):
        state = born_state
        for s in range(n):
            state = example2.sweep(state, KS[0], 2.0 / KS[0] ** 2, s + 1)
        return example2.misfit(state.sigma, KS[0])

    three, six = final_misfit(3), final_misfit(6)
    assert six <= three * (1 + 1e-12)


def test_update_is_descent_direction(example2, born_state):
    sigma = born_state.sigma
    for k in KS:
        beta = 2.0 / k**2
        base = example2.misfit(sigma, k)
        dsigma, _, _ = example2.update(sigma, k, beta)
        for _ in range(4):
            if example2.misfit(sigma + dsigma, k) < base:
                break
            beta /= 2
            dsigma, _, _ = example2.update(sigma, k, beta)
        assert example2.misfit(sigma + dsigma, k) < base, k
        sigma = sigma + dsigma


def test_support_confinement_and_snapshots(example2, tmp_path):
    state = example2.run(ContinuationSchedule(KS[:2], sweeps_per_k=1),
                         snapshot_dir=tmp_path / "snap")
    assert np.all(state.sigma[~example2.mask] == 0)
    assert np.all(np.isfinite(state.sigma))
    assert sorted(os.listdir(tmp_path / "snap")) == ["sigma_k000.csv", "sigma_k001.csv"]
    assert [r.sweep for r in state.log] == [0, 1, 1]
    assert state.log[-1].rel_error <= state.log[0].rel_error


def test_fixed_point_of_consistent_data(example2):
    """Data generated from the iterate itself on the reconstruction mesh."""
    rec, k = example2, KS[1]
    grid = rec.grid
    sigma = np.where(rec.mask, 0.5 * rec.truth + 0.02 * grid.X, 0.0)
    phantom = Phantom("grid", grid, sigma)
    n_modes = int(np.ceil(k)) + F.EXTRA_MODES
    data = generate_data(phantom, [k], rec.angles, rec.mesh, n_modes=n_modes)
    own = Reconstructor(rec.mesh, grid, data, 0.95)
    dsigma, misfit, _ = own.update(sigma, k, 2.0 / k**2)
    assert misfit <= 1e-12
    assert np.linalg.norm(dsigma) <= 1e-6 * np.linalg.norm(sigma)


def test_dataset_gap_is_reported(example2):
    with pytest.raises(DatasetGapError) as info:
        example2.run(ContinuationSchedule([1.0, 5.0]))
    assert info.value.gaps == [5.0]


def test_solver_failure_leaves_state_unchanged(example2, born_state, monkeypatch):
    class Broken:
        def __init__(self, *a, **kw):
            raise SolverError("singular system")

    monkeypatch.setattr(rla, "CoupledSolver", Broken)
    after = example2.sweep(born_state, KS[0], 1.0)
    assert after is born_state
    assert len(born_state.log) == 1


def test_log_roundtrip(tmp_path):
    log = [LogRecord(1.0, 0, 0.25, 0.5), LogRecord(1.5, 1, 0.125, None)]
    write_log(tmp_path / "log.csv", log)
    back = read_log(tmp_path / "log.csv")
    assert [(r.k, r.sweep, r.residual_l2, r.rel_error) for r in back] == \
        [(1.0, 0, 0.25, 0.5), (1.5, 1, 0.125, None)]
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_log(tmp_path / "bad.csv")
