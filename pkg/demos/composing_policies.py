"""Stacking policy changes.

A shift-scale intervention replaces a mechanism f_j by a*f_j + b. Applying
several in a row is the same as applying one folded intervention, and as
long as every stage has |a| <= 1 the contraction constant cannot grow.
"""
import numpy as np

from cyclicscm import apply_shift_scale, certify, linear_model
from cyclicscm.interventions import check_composition_bound, compose, ss

model = linear_model(["C", "I"], [[0.0, 0.5], [0.4, 0.0]], [1.0, 0.5], [0.04, 0.04])
stages = [ss(model, "I", 0.8, 1.0), ss(model, "C", 0.9, -0.2), ss(model, "I", 0.5, 0.3)]

step_by_step = model
for iv in stages:
    step_by_step = apply_shift_scale(step_by_step, iv)
    print(f"after {iv.targets}: kappa = {certify(step_by_step, 2).kappa:.4f}")

folded = compose(stages)
print("folded intervention:", folded.as_dict())
once = apply_shift_scale(model, folded)
for got, want in zip(once.linear_form(), step_by_step.linear_form()):
    assert np.allclose(got, want)
print("sequential and folded models agree")

report = check_composition_bound(stages + [ss(model, "C", 1.5, 0.0)])
print("adding a stage with a = 1.5, bounded stages:", report.guarantee_holds)
