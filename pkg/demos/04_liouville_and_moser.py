"""Two diagnostics that do not need a sweep.

First, bounded solutions on ever larger boxes flatten out near the origin,
the finite-size face of the Liouville property.  Second, the exponents of
the Moser iteration obey a simple recursion that we print as a table.
"""
from anisoharnack.norms import NormModel
from anisoharnack.verify import liouville_experiment, moser_geometric_sum, moser_schedule

for rho, gamma in ((NormModel.euclidean(2), 2.0), (NormModel.ell_p(4.0, 2), 3.0)):
    rows = liouville_experiment(rho, gamma, [1, 2, 4, 8])
    print(f"{rho!r}, gamma = {gamma}")
    for L, osc in rows:
        print(f"   box [-{L:g}, {L:g}]^2: oscillation on the unit ball {osc:.5f}")

n, gamma = 4, 2.0
print(f"\nMoser schedule for n = {n}, gamma = {gamma}:")
for row in moser_schedule(n, gamma, 5):
    print(f"   k = {row.k}: beta = {row.beta:g}, exponent = {row.exponent:g}, "
          f"radius = {row.radius:.5f}")
print(f"sum of chi^-i = {moser_geometric_sum(n, gamma):.12f} (n / gamma = {n / gamma})")
