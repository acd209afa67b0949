"""Constant-free Harnack ratios over a family of random positive solutions.

The inequalities come with unspecified constants, so we cannot check them
directly.  What we can check is that the ratio lhs / rhs stays bounded
over many instances and does not drift when the mesh is refined.
"""
from anisoharnack.verify import SweepSpec, sweep

spec = SweepSpec(norm="ellp(4)", gamma=2.0, seeds=tuple(range(10)), resolutions=(32, 64))
report = sweep(spec)

for check in ("harnack", "weak_harnack", "caccioppoli", "sup_bound"):
    for N in spec.resolutions:
        s = report.summary(check, N)
        print(f"{check:>13} N={N:>3}: max {s['max_ratio']:.5f} (at {s['max_witness']}), "
              f"min {s['min_ratio']:.5f}")

print("\nfitted decay exponents:", report.fitted)
print("drift alarms:", report.alarms or "none")
