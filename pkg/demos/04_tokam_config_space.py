"""TOKAM-2D in configuration space, first Picard iterate.

Trees are cut after one branching (max_depth=1), which makes the
expectation equal to the first Duhamel iterate.  The quadrature oracle
computes that iterate two ways: with the heat semigroup acting on
Omega = Psi/h (what the sampled equations do) and on Psi itself.  The two
differ because 1/h does not commute with the Laplacian.
"""
from solbranch.picard_tokam import tokam_picard
from solbranch.tokam import TokamParams, estimate_tokam

p = TokamParams(sigma=1.0, Lambda=0.0, g=0.5)
init = ("1 + 0.1*exp(-(x1^2+x2^2))", "0.1*exp(-(x1^2+x2^2))")
x, t = (0.7, 0.4), 0.1

om_n, om_O = tokam_picard(p, *init, x, t, form="omega")
ps_n, ps_O = tokam_picard(p, *init, x, t, form="psi")
print(f"oracle, Omega form: n {om_n.value:.6f}  Omega {om_O.value:.6f}")
print(f"oracle, Psi form:   n {ps_n.value:.6f}  Omega {ps_O.value:.6f}")

for species in ("n", "Omega"):
    e = estimate_tokam(p, *init, species, x, t, n_samples=20_000, seed=5, max_depth=1)
    print(f"engine {species:5}: {e.mean:.6f} +- {e.standard_error:.6f}")

full = estimate_tokam(p, *init, "Omega", x, t, n_samples=20_000, seed=6)
print(f"full trees, Omega: {full.mean:.6f} +- {full.standard_error:.6f}  (rejected {full.n_rejected})")
