"""A free Gaussian packet spreading on the line.

The numerically propagated width is compared against the analytic law
sigma(t) = sigma0 * sqrt(1 + (hbar t / 2 m sigma0^2)^2), and norm and
energy are tracked to show the propagator is unitary.
"""

import numpy as np

from bohmlab import (Grid1D, PotentialModel, PropagatorConfig, WaveFunction,
                     build_hamiltonian, evolve_store, expectation)

grid = Grid1D(-30.0, 30.0, 512)
psi0 = WaveFunction.gaussian(grid, width=1.0)
pot = PotentialModel("free")
h = build_hamiltonian(grid, pot)

ev = evolve_store(psi0, pot, PropagatorConfig(0.005, steps_per_output=40), 3.0)

print("free Gaussian, sigma0 = 1")
print(f"{'t':>6} {'width':>10} {'analytic':>10} {'norm-1':>10} {'<H>-E0':>10}")
e0 = expectation(h, psi0)
for i, t in enumerate(ev.times):
    psi = ev.psi(i)
    width = np.sqrt(np.sum(grid.x ** 2 * psi.density()) * grid.dx)
    analytic = np.sqrt(1.0 + (t / 2.0) ** 2)
    print(f"{t:6.2f} {width:10.6f} {analytic:10.6f} "
          f"{psi.norm() - 1:10.2e} {expectation(h, psi) - e0:10.2e}")
