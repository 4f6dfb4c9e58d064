"""Error ladders of the equilibrium trace and the Heisenberg evolution against eps."""
import logging

from hofsc.quantum_oracle import Scenario, egorov_compare, equilibrium_compare

logging.basicConfig(level=logging.INFO, format="%(message)s")

eq = equilibrium_compare(Scenario(sizes=(24, 48, 96)))
print(f"equilibrium: slope {eq.fit.slope:.3f}, without corrections {eq.ablation_fit.slope:.3f}")

dyn = egorov_compare(Scenario(sizes=(48, 96, 192)))
print(f"dynamics:    slope {dyn.fit.slope:.3f}, without corrections {dyn.ablation_fit.slope:.3f}")
