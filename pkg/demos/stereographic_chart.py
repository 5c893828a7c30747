"""
Stereographic chart
===================

A band-limited field on the sphere is pulled back to the plane. The measure
and Laplacian identities of the chart hold to roundoff, while the conjugated
rotation only approaches a translation as R grows.

Run: ``python demos/stereographic_chart.py``
"""

# %%
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from pphi2.gaussian import GaussianSampler
from pphi2.sphere import SpectralField, n_coeffs
from pphi2.stereo import (
    PlaneGrid,
    disk_test_set,
    laplacian_identity_residual,
    measure_identity_residual,
    pushforward_field,
    translation_defect,
)

OUT = Path(__file__).with_suffix(".png")
rng = np.random.default_rng(0)

# %%
for R in (1.0, 4.0):
    phi = SpectralField(R, 6, rng.standard_normal(n_coeffs(6)))
    pts = rng.uniform(-2 * R, 2 * R, (30, 2))
    print(f"R={R:g}: measure residual {measure_identity_residual(phi):.1e}, "
          f"Laplacian residual {laplacian_identity_residual(phi, pts):.1e}")

# %%
# Defect of the conjugated rotation against the translation by alpha.
pts = disk_test_set(2.0)
Rs = np.array([8.0, 16.0, 32.0, 64.0])
for order in (0, 1, 2):
    d = [translation_defect(R, 1.0, pts, order) for R in Rs]
    print(f"order {order}: log-log slope {np.polyfit(np.log(Rs), np.log(d), 1)[0]:.3f}")

# %%
# One free-field sample at R=4 seen through the chart.
R, N = 4.0, 2.0
X = GaussianSampler.free(R, N, seed=3).sample(1)[0]
L = int(round(np.sqrt(X.size))) - 1
f = pushforward_field(SpectralField(R, L, X), PlaneGrid(16.0, 256))
fig, ax = plt.subplots(figsize=(4.5, 4))
im = ax.imshow(f.values.T, origin="lower", extent=(-8, 8, -8, 8), cmap="RdBu_r")
fig.colorbar(im, ax=ax)
ax.set_title("free field, R=4, N=2")
fig.tight_layout()
fig.savefig(OUT, dpi=100)
print(f"wrote {OUT}")
