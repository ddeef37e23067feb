"""TOKAM-2D in Fourier space: a single mode k without a grid.

chi = F/gamma and zeta = Phi/gamma are complex; the majorizing Gaussian
gamma turns every convolution into a density over child momenta that sum to
the parent momentum.  For real fields the transforms satisfy
f(-k) = conj f(k), which the estimates reproduce within noise.

The path weights are heavy tailed: now and then one large tree dominates a
run (the zeta run at -k below has one) and its stderr jumps with it.  Always
read a gap against the stderr of both runs.
"""
from solbranch.fourier import FourierParams, estimate_fourier
from solbranch.picard_tokam import fourier_picard

p = FourierParams(sigma=1.0, Lambda=0.0, g=0.5)
init_chi = ("0.3*exp(-(k1^2+k2^2))", "0.1*k1*exp(-(k1^2+k2^2))")
init_zeta = ("0.3*exp(-(k1^2+k2^2)/2)", "0.05*k2*exp(-(k1^2+k2^2)/2)")
k, t = (0.8, 0.5), 0.05

for species in ("chi", "zeta"):
    plus = estimate_fourier(p, init_chi, init_zeta, species, k, t, 20_000, seed=1)
    minus = estimate_fourier(p, init_chi, init_zeta, species, (-k[0], -k[1]), t, 20_000, seed=2)
    gap = abs(plus.mean - minus.mean.conjugate())
    err = (plus.standard_error ** 2 + minus.standard_error ** 2) ** 0.5
    print(f"{species:4}  f(k) = {plus.mean:.5f}   conj f(-k) = {minus.mean.conjugate():.5f}   "
          f"gap {gap:.1e}  (combined stderr {err:.1e})")

chi1, zeta1 = fourier_picard(p, ("0.3*exp(-(k1^2+k2^2))", "0"), ("0.3*exp(-(k1^2+k2^2)/2)", "0"), k, t)
for name, o in (("chi", chi1), ("zeta", zeta1)):
    e = estimate_fourier(p, ("0.3*exp(-(k1^2+k2^2))", "0"), ("0.3*exp(-(k1^2+k2^2)/2)", "0"),
                         name, k, t, 20_000, seed=3, max_depth=1)
    print(f"depth 1 {name:4}: engine {e.mean:.5f}   oracle {o.value:.5f}")
