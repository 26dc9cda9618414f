# # Neumann below Dirichlet on the unit square
#
# For the Laplacian on the unit square both spectra are known in closed
# form, `pi^2 (m^2 + n^2)`. That makes it the natural place to see how much
# the Richardson margins cost before trusting them on Stokes.

# In[1]:

import numpy as np

from friedlab import friedlander_lab as lab

rep = lab.run_friedlander("square", "laplacian", h=1 / 16, n_max=10)
exact_N = lab.square_laplacian_eigenvalues(11, "neumann")
exact_D = lab.square_laplacian_eigenvalues(10, "dirichlet")


# In[2]:

print(" n   lam_N(n+1)   exact      lam_D(n)    exact      gap     estimate")
for n in range(1, 11):
    print(f"{n:2d}  {rep.neumann[n]:10.5f} {exact_N[n]:10.5f}  {rep.dirichlet[n - 1]:10.5f} "
          f"{exact_D[n - 1]:10.5f}  {rep.gaps[n - 1]:8.4f}  {rep.error_estimates[n - 1]:.2e}")
print("verdict:", rep.verdict)


# The gap for `n = 1` is `2 pi^2 - pi^2`. At `n = 2` the Dirichlet value
# `5 pi^2` is compared with the second copy of the double Neumann value
# `pi^2`. Every gap is many times the estimate, which with the default
# order `p = 1` is deliberately loose.

# In[3]:

ratio = rep.gaps / rep.error_estimates
print("smallest gap / estimate:", ratio.min())


# The estimate is honest: P2 eigenvalues converge at order 4, visible in a
# three-level study.

# In[4]:

study = lab.convergence_study("square", "laplacian", 0.0, [0.25, 0.125, 0.0625], 1,
                              exact=2 * np.pi ** 2)
print("errors:", study.errors)
print("observed orders:", study.orders)
