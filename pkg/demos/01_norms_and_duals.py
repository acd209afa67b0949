"""A tour of the anisotropic norms.

Run with ``python demos/01_norms_and_duals.py``.
"""
import numpy as np

from anisoharnack.norms import DualMode, DualNorm, NormModel, ellipticity_bounds, parse_norm

# Each norm family is a gauge rho(x, xi) on gradient directions.  The text
# grammar accepted by the configuration files also builds them.
norms = {
    "euclidean": NormModel.euclidean(2),
    "ell^4": NormModel.ell_p(4.0, 2),
    "rotated ell^4": NormModel.rotated_ell_p_2d(4.0, np.pi / 6),
    "variable exponent": parse_norm("varexp(1.5, 3.5, tilt)", 2),
}

x = np.array([0.2, -0.1])
xi = np.array([1.0, 0.5])
for name, rho in norms.items():
    print(f"{name:>18}: rho(x, xi) = {rho.eval(x, xi):.6f}")

# The dual norm is available in closed form for every family.  A numeric
# dual (sampling the unit sphere, then polishing) reproduces it, which is
# a useful sanity check when adding a new family.
rho = norms["rotated ell^4"]
zeta = np.array([0.3, -1.2])
analytic = rho.dual_model().eval(x, zeta)
numeric = DualNorm(rho, DualMode.NUMERIC, directions=2048).eval(x, zeta)
print(f"\ndual of the rotated ell^4 norm: analytic {analytic:.10f}, numeric {numeric:.10f}")

# Fenchel: xi . zeta <= rho(xi) rho_*(zeta), with equality when zeta is
# the gradient of rho at xi.
g = rho.grad(x, xi)
print(f"xi . D rho(xi) = {xi @ g:.12f}  vs  rho(xi) = {rho.eval(x, xi):.12f}")
print(f"rho_*(D rho(xi)) = {rho.dual_model().eval(x, g):.12f}")

# Ellipticity constants nu |xi| <= rho <= Lambda |xi| over a box.
b = ellipticity_bounds(norms["ell^4"], ([-1, -1], [1, 1]))
print(f"\nell^4 ellipticity: nu = {b.nu:.6f} (2^-1/4 = {2 ** -0.25:.6f}), Lambda = {b.Lambda}")
