# # Robin eigenvalues, DtN eigenvalues and the Dirichlet limit
#
# A form system is four matrices: the form `A`, the Gram matrix `M`, a trace
# map `J` and the boundary Gram matrix `Mb`. Everything below is built from
# that quadruple, so a 2x2 example is enough to see the moving parts.

# In[1]:

import numpy as np

from friedlab.spectral_framework import (FormSystem, birman_schwinger_check, dirichlet_spectrum,
                                         dtn_spectrum, neumann_spectrum, robin_sweep)

fs = FormSystem(np.diag([1.0, 2.0]), np.eye(2), np.array([[1.0, 0.0]]), np.array([[1.0]]))
print("Neumann:  ", neumann_spectrum(fs).eigenvalues)
print("Dirichlet:", dirichlet_spectrum(fs).eigenvalues)


# The first basis vector carries the whole trace. Pushing `mu` to minus
# infinity penalizes it until its eigenvalue `1 - mu` passes 2, and the
# bottom of the Robin spectrum settles on the Dirichlet value.

# In[2]:

grid = np.concatenate([[0.0], -np.logspace(-1, 6, 8)])
sweep = robin_sweep(fs, grid)
for mu, spec in zip(sweep.grid, sweep.spectra):
    print(f"mu = {mu:>12.4g}   lambda = {spec.eigenvalues}")
print("monotone violations:", sweep.monotone_violations)


# The DtN map is the scalar `1 - lam` here. It blows up at the Dirichlet
# eigenvalue 2, which the solver reports instead of returning garbage.

# In[3]:

for lam in (0.0, 0.5, 1.5, 1.999999):
    d = dtn_spectrum(fs, lam)
    print(f"lam = {lam:<9} N_lam = {d.eigenvalues}  near resonance: {d.resonance_flag}")


# Birman-Schwinger: `lam` is a Robin eigenvalue at `mu` exactly when `mu` is
# a DtN eigenvalue at `lam`. The check runs both directions.

# In[4]:

rep = birman_schwinger_check(fs, -0.5)
for p in rep.pairs:
    print(p)
