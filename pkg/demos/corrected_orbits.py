"""Compare orbits of the plain and the corrected band dynamics in a weak periodic potential."""
import numpy as np

from hofsc import ClassicalSystem, FluxRational, PotentialSpec, integrate

flux = FluxRational(1, 3)
V = PotentialSpec.cosines([(0.25, (1, 0), 0.0)])
z0 = np.array([0.0, 0.0, 0.3, 0.2])
for eps in (0.1, 0.05, 0.025):
    plain = ClassicalSystem(flux, 1, eps, 1.0, V, geometric=False)
    corrected = ClassicalSystem(flux, 1, eps, 1.0, V)
    a = integrate(plain, z0, 5.0, dt=0.01)
    b = integrate(corrected, z0, 5.0, dt=0.01)
    gap = np.max(np.linalg.norm(a.states[:, :2] - b.states[:, :2], axis=1))
    print(f"eps={eps:<6} max position gap {gap:.4f}  energy drift {b.energy_drift():.1e}")
