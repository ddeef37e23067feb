"""Warm-up: one diffusing line, then the chi=1 SOLEDGE relaxation system.

The heat equation u_t = D u_xx with u(0) = cos x is the simplest stochastic
solution: average the initial datum over Brownian endpoints.  At x=0, D=1/2,
t=1 the answer is e^{-1/2}.

Inside the obstacle (chi=1) SOLEDGE is linear and solved in closed form;
the finite-difference oracle is an independent check.
"""
import math

from solbranch.heat import estimate_heat
from solbranch.oracles import soledge_fd_point
from solbranch.soledge import SoledgeParams, solve_chi1

e = estimate_heat("cos(x)", x=0.0, t=1.0, diffusion=0.5, n_samples=100_000, seed=1)
print(f"heat:  {e.mean:.5f} +- {e.standard_error:.5f}   exact {math.exp(-0.5):.5f}")

p = SoledgeParams(q=2.0, D=0.1, nu=0.1, eta=1.0, Gamma0=1.0)
init = ("2 + 0.2*cos(theta)", "0")
for t in (0.1, 0.5, 2.0):
    n, g = solve_chi1(p, *init, (0.3, 0.7), t)
    fn, fg = soledge_fd_point(p, *init, (0.3, 0.7), t, chi=1)
    # Gamma relaxes towards Gamma0 = 1 as 1 - e^{-t/eta}
    print(f"chi=1 t={t:4}: N {n:.8f} (fd {fn.value:.8f})   Gamma {g:.8f} (1-e^-t {1 - math.exp(-t):.8f})")
