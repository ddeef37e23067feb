"""Why the default interrupt scheme is not the literal one.

Read literally, a line either reaches time zero (weight 1/p) or is
interrupted, and the full product of weights multiplies the combined leaf
values.  Along a chain of k interrupts the weight grows like (t/(q(1-p)))^k
times 1/p per leaf while its probability decays only like (1-p)^k, so the
second moment of the path value diverges.  Sample means jump by orders of
magnitude between runs and overflow for small p.

The "control" scheme lets every line also reach time zero and adds the
interrupt term as a correction with probability 1-p.  Same expectation,
finite variance.
"""
import warnings

from solbranch.oracles import soledge_fd_point
from solbranch.soledge import SoledgeParams, estimate_soledge

init = ("2 + 0.2*cos(theta)", "0.2*sin(theta)")
point, t = (0.3, 0.7), 0.2
ref = soledge_fd_point(SoledgeParams(q=2.0), *init, point, t)[0].value
print(f"finite differences N = {ref:.6f}\n")

warnings.simplefilter("ignore", RuntimeWarning)
print(f"{'scheme':8} {'p':>4} {'mean':>14} {'stderr':>12}")
for scheme in ("literal", "control"):
    for p in (0.3, 0.5, 0.7):
        prm = SoledgeParams(q=2.0, D=0.1, nu=0.1, p_survive=p, scheme=scheme)
        e = estimate_soledge(prm, *init, point, t, 20_000, seed=1, max_jet_order=24, species="N")
        print(f"{scheme:8} {p:4} {e.mean:14.6g} {e.standard_error:12.3g}")
