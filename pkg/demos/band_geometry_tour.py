"""Bands, curvature, moment and Chern numbers for a few rational fluxes."""
import numpy as np

from hofsc import DegeneracyError, FluxRational, band_data, chern_number
from hofsc.band_geometry import band_ranges

for text in ("1/3", "2/5", "1/4"):
    flux = FluxRational.parse(text)
    print(f"flux {flux}")
    try:
        ranges = band_ranges(flux)
        cherns = [chern_number(flux, j).chern for j in range(1, flux.q + 1)]
    except DegeneracyError as exc:  # even q: the middle bands touch
        print(f"  skipped: {exc}")
        continue
    for j, ((lo, hi), c) in enumerate(zip(ranges, cherns), start=1):
        bd = band_data(flux, j, 32)
        print(f"  band {j}: [{lo:+.4f}, {hi:+.4f}]  chern {c:+d}  "
              f"max|Omega| {np.abs(bd.omega).max():.3f}  max|M| {np.abs(bd.moment).max():.3f}")
