# # Stokes: kernels, interlacing and plane-wave witnesses
#
# The Neumann Stokes problem keeps the rigid motions its form cannot see:
# two constant fields for the plain gradient form, and the rotation as well
# once the transposed gradient is added with `alpha = 1`.

# In[1]:

import numpy as np

from friedlab import friedlander_lab as lab
from friedlab import mesh as meshlib
from friedlab import stokes_problems as sp_

mesh = meshlib.generate("square", 1 / 8)
for alpha in (0.0, 1.0):
    prob = sp_.build_stokes(mesh, alpha)
    print(f"alpha = {alpha}:", sp_.solve_spectrum(prob, "neumann", 5).eigenvalues)


# Only one boundary direction is lost to the divergence constraint, the
# normal flux. The reduced trace map has rank `k - 1`.

# In[2]:

prob = sp_.build_stokes(mesh)
print("boundary dofs:", prob.k, " rank of J Z:", sp_.trace_rank(prob))


# Interlacing with Richardson margins, on the L-shape this time.

# In[3]:

rep = lab.run_friedlander("lshape", "stokes", 1.0, h=1 / 8, n_max=6)
print("gaps:     ", np.round(rep.gaps, 3))
print("estimates:", np.round(rep.error_estimates, 3))
print("verdict:  ", rep.verdict)


# The witness `b exp(i omega . x)` with `b` orthogonal to `omega` solves the
# shifted Stokes equations with zero pressure at `lam = |omega|^2`, so its
# DtN form is zero in the continuum. The discrete value shrinks with `h`.

# In[4]:

b = np.array([1.0, -1.0]) / np.sqrt(2)
study = lab.witness_study("square", "stokes", 0.0, [1 / 4, 1 / 8, 1 / 16], np.array([np.pi, np.pi]), b)
print("normalized |(N phi, phi)|:", study["normalized"])
print("observed orders:", study["orders"])
