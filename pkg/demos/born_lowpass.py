"""The Born initial guess sees only low spatial frequencies.

Synthetic data for the two-disk phantom at k = 1 are inverted with the
linearized model.  The result is a blurred image whose values we print along
the line y = 0, next to the truth.

    python3 demos/born_lowpass.py
"""

import numpy as np

from rlscatter import ReconGrid, generate_disk_mesh, refine
from rlscatter.born import born_initial_sigma
from rlscatter.synth import Phantom, generate_data, relative_error

k = 1.0
angles = 2 * np.pi * np.arange(32) / 32
phantom = Phantom("example2")

data_mesh = refine(generate_disk_mesh(1.0, 2 * np.pi / (20 * k)))
data = generate_data(phantom, [k], angles, data_mesh)

grid = ReconGrid(64)
sigma0, system = born_initial_sigma(grid, data.traces_at(k), k, angles,
                                    support=grid.mask(0.95))
truth = phantom.on_grid(grid)
print(f"Tikhonov alpha = {system.alpha:.3e}")
print(f"relative error of the Born guess: {relative_error(sigma0, truth, grid.inside):.3f}")

xs, rec = grid.cross_section(sigma0, 0.0)
_, tru = grid.cross_section(truth, 0.0)
for x, r, t in list(zip(xs, rec, tru))[::4]:
    print(f"  x = {x:+.3f}   born {r:+.4f}   truth {t:+.4f}")
