import filecmp
import os

import mpmath as mp
import numpy as np
import pytest

from rlscatter import ReconGrid, generate_disk_mesh, refine
from rlscatter.synth import (Phantom, add_noise, example1_sigma, example2_q, generate_data,
                             load_dataset, relative_error, save_dataset, trace_filename)


def sigma1_reference(x, y):
    x, y = mp.mpf(x), mp.mpf(y)
    return float(mp.mpf("0.3") * (1 - x) ** 2 * mp.e ** (-x * x - (y + 1) ** 2)
                 - (x / 5 - x**3 - y**5) * mp.e ** (-(x * x + y * y))
                 - mp.e ** (-(x + 1) ** 2 - y * y) / 30)


def test_example1_stated_values():
    """Stated seven-digit values; the closed form gives 0.0981012 and -0.0723906."""
    assert example1_sigma(0.0, 0.0) == pytest.approx(0.0981006, abs=5e-8)
    assert example1_sigma(0.0, -1.0) == pytest.approx(-0.0723899, abs=5e-8)


def test_example1_values():
    assert example1_sigma(0.0, 0.0) == pytest.approx(0.3 / np.e - 1 / (30 * np.e), rel=1e-15)
    for x, y in [(0.0, -1.0), (0.3, -0.2), (-1.0, 0.0), (1.7, 2.2)]:
        assert example1_sigma(x, y) == pytest.approx(sigma1_reference(x, y), rel=1e-13)
    # the third term alone at (-1, 0)
    third = example1_sigma(-1.0, 0.0) - (0.3 * 4 * np.exp(-2.0) - (-0.2 + 1) * np.exp(-1.0))
    assert third == pytest.approx(-1 / 30, rel=1e-12)
    # phantom value at the origin uses the scaled argument (0, -1)
    assert Phantom("example1").sigma(np.zeros((1, 2)))[0] == example1_sigma(0.0, -1.0)


def test_example2_values():
    assert example2_q(0.25, 0.0, 12.1) == pytest.approx(0.2j / 12.1)
    assert example2_q(0.0, 0.0, 3.0) == 0
    assert example2_q(-0.25, 0.19, 2.0) == pytest.approx(0.1j)
    with pytest.raises(ValueError):
        example2_q(0.0, 0.0, 0.0)


def ring(r, n=720):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


def test_example2_compact_support():
    ph = Phantom("example2")
    for r in (0.95, 0.99):
        assert np.all(ph.sigma(ring(r)) == 0)


def test_example1_compact_support():
    """Required: below 1e-3 of its maximum for |x| >= 0.95."""
    ph = Phantom("example1")
    g = ReconGrid(128)
    peak = np.abs(g.sample(ph.sigma)).max()
    edge = float(np.abs(ph.sigma(ring(0.95))).max())
    assert edge <= 1e-3 * peak, f"|sigma| reaches {edge:.3f} at r = 0.95 (max {peak:.3f})"


@pytest.fixture(scope="module")
def small_setup():
    mesh = refine(generate_disk_mesh(1.0, 0.3))
    angles = 2 * np.pi * np.arange(4) / 4
    return mesh, angles


def test_zero_phantom_gives_zero_traces(small_setup):
    mesh, angles = small_setup
    ds = generate_data(Phantom("zero"), [1.0, 2.0], angles, mesh)
    assert max(np.abs(tr.dirichlet).max() for tr in ds.traces.values()) <= 1e-8
    assert not ds.partial


def test_generation_is_deterministic(tmp_path, small_setup):
    mesh, angles = small_setup
    for name in ("a", "b"):
        ds = generate_data(Phantom("example2"), [1.0, 2.5], angles, mesh)
        save_dataset(ds, tmp_path / name)
    names = sorted(os.listdir(tmp_path / "a"))
    assert len(names) == 2 * 4 + 1
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names,
                                               shallow=False)
    assert not mismatch and not errors


def test_dataset_roundtrip_and_gaps(tmp_path, small_setup):
    mesh, angles = small_setup
    ds = generate_data(Phantom("example1"), [1.5], angles, mesh)
    save_dataset(ds, tmp_path / "d")
    assert (tmp_path / "d" / trace_filename(1.5, 3)).exists()
    back = load_dataset(tmp_path / "d")
    assert back.wavenumbers == [1.5]
    for key, tr in ds.traces.items():
        assert np.array_equal(back.traces[key].dirichlet, tr.dirichlet)
    assert back.missing([1.5, 2.0]) == [2.0]
    os.remove(tmp_path / "d" / trace_filename(1.5, 2))
    assert load_dataset(tmp_path / "d").missing([1.5]) == [1.5]
    with pytest.raises(KeyError):
        back.trace(3.0, 0)


def trace_spectrum(h, k=2.0):
    mesh = refine(generate_disk_mesh(1.0, h))
    ds = generate_data(Phantom("example2"), [k], [0.0], mesh, n_modes=24)
    coef = np.abs(np.fft.fft(ds.trace(k, 0).dirichlet)) / 48
    return np.abs(np.fft.fftfreq(48, 1 / 48)), coef


def test_example2_trace_mode_decay():
    n, coef = trace_spectrum(0.15)
    tail, peak = float(coef[n > 2.0 + 5].max()), float(coef.max())
    assert tail <= 1e-6 * peak, f"tail {tail:.2e} vs peak {peak:.2e}"


def test_example2_trace_tail_is_discretization_floor():
    """The tail is a polygon artefact (period 6 of the boundary ring) that
    shrinks under refinement; the physical modes decay through |n| = 4."""
    n, coarse = trace_spectrum(0.15)
    _, fine = trace_spectrum(0.075)
    assert np.all(np.diff([fine[n == j].max() for j in range(5)]) < 0)
    assert fine[n > 7].max() <= 1e-3 * fine.max()
    assert fine[n > 7].max() <= 0.5 * coarse[n > 7].max()


def test_example2_reflection_symmetry():
    """y -> -y symmetry: incidence along x gives an even trace in t."""
    mesh = refine(generate_disk_mesh(1.0, 0.15))
    ds = generate_data(Phantom("example2"), [3.0], [0.0], mesh)
    tr = ds.trace(3.0, 0)
    m = len(tr.angles)
    flipped = tr.dirichlet[(-np.arange(m)) % m]
    assert np.linalg.norm(flipped - tr.dirichlet) <= 1e-2 * np.linalg.norm(tr.dirichlet)


def test_noise_model(small_setup):
    mesh, angles = small_setup
    ds = generate_data(Phantom("example2"), [2.0], angles, mesh)
    assert add_noise(ds, 0.0, 3).traces == ds.traces
    a = add_noise(ds, 0.02, 3)
    b = add_noise(ds, 0.02, 3)
    c = add_noise(ds, 0.02, 4)
    key = (2.0, 1)
    assert np.array_equal(a.traces[key].dirichlet, b.traces[key].dirichlet)
    assert not np.array_equal(a.traces[key].dirichlet, c.traces[key].dirichlet)
    ratio = a.traces[key].dirichlet / ds.traces[key].dirichlet
    np.testing.assert_allclose(ratio.imag, 0, atol=1e-12)
    assert a.meta["seed"] == "3" and a.meta["generator"] == "MT19937"
    with pytest.raises(ValueError):
        add_noise(ds, -0.1, 1)


def test_noise_mean_absolute_deviation():
    from rlscatter.forward import BoundaryTrace
    from rlscatter.synth import ScatteringDataset

    t = 2 * np.pi * np.arange(5000) / 5000
    ones = np.ones(5000, dtype=complex)
    ds = ScatteringDataset([1.0], np.array([0.0]), {(1.0, 0): BoundaryTrace(t, ones, ones)})
    noisy = add_noise(ds, 0.02, 11).traces[(1.0, 0)]
    dev = np.abs(np.concatenate([noisy.dirichlet, noisy.neumann]) - 1)
    assert dev.size >= 10_000
    assert dev.mean() == pytest.approx(0.01, rel=0.1)


def test_relative_error():
    rng = np.random.default_rng(0)
    truth = rng.normal(size=(8, 8))
    assert relative_error(truth, truth) == 0
    assert relative_error(np.zeros_like(truth), truth) == pytest.approx(1.0)
    assert relative_error(1.1 * truth, truth) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        relative_error(truth, np.zeros_like(truth))
    with pytest.raises(ValueError):
        relative_error(truth, truth[:4])
