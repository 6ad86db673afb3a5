"""How much can we certify about a nonlinear feedback loop?

An affine model gets an exact operator norm. A model built from tanh, sin
and cos gets an interval bound on its Jacobian. Anything the interval rules
cannot handle (here a division) only gets a sampled estimate, which is a
lower bound and never counts as a certificate.
"""
from cyclicscm import certify, expr_model
from cyclicscm.contraction import estimate_kappa_sampled
from cyclicscm.errors import Uncertifiable

smooth = expr_model(
    ["x", "y", "z"],
    ["0.4*tanh(y) - 0.2*sin(z) + e_x", "0.3*cos(x) + 0.5 + e_y", "0.6*tanh(x + y) + e_z"],
    [1.0, 1.0, 1.0],
)
for p in (1, 2, "inf"):
    cert = certify(smooth, p)
    print(f"p={p!s:>3}: kappa <= {cert.kappa:.4f} ({cert.method}, certified={cert.is_certified})")

rational = expr_model(["x", "y"], ["0.5 / (1 + y*y) + e_x", "0.5*x + e_y"], [1.0, 1.0])
try:
    certify(rational, 2)
except Uncertifiable as err:
    print("interval rules give up:", err)
est = estimate_kappa_sampled(rational, 2, n_pairs=20_000, seed=0)
print(f"sampled estimate kappa >= {est.kappa:.4f} (certified={est.is_certified})")
