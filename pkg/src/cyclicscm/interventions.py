"""Shift-scale interventions ``f_j -> a_j * f_j + b_j`` and their composition.

A hard intervention ``do(x_j := v)`` is the case ``a_j = 0, b_j = v``.
Interventions are plain data; applying one returns a new model.
"""
from __future__ import annotations

from dataclasses import dataclass

from . import expr as ex
from .model import ExprMechanism, LinearRow, ScmModel, ensure_valid


@dataclass(frozen=True)
class Intervention:
    """Ordered ``(index, scale, shift)`` triples, at most one per coordinate."""

    targets: tuple = ()

    def __post_init__(self):
        targets = tuple((int(j), float(a), float(b)) for j, a, b in self.targets)
        idx = [j for j, _, _ in targets]
        if len(set(idx)) != len(idx):
            raise ValueError(f"coordinate targeted twice: {idx}")
        object.__setattr__(self, "targets", targets)

    @classmethod
    def identity(cls) -> "Intervention":
        return cls(())

    @classmethod
    def from_names(cls, model: ScmModel, triples) -> "Intervention":
        return cls(tuple((model.index(name), a, b) for name, a, b in triples))

    def a_max(self) -> float:
        return max((abs(a) for _, a, _ in self.targets), default=0.0)

    def as_dict(self) -> dict:
        return {j: (a, b) for j, a, b in self.targets}

    def check_range(self, n: int) -> None:
        for j, _, _ in self.targets:
            if not 0 <= j < n:
                raise IndexError(f"intervention target {j} outside 0..{n - 1}")


def ss(model: ScmModel, name: str, a: float, b: float) -> Intervention:
    """Single shift-scale intervention on the variable called ``name``."""
    return Intervention(((model.index(name), a, b),))


def do(model: ScmModel, name: str, value: float) -> Intervention:
    return Intervention(((model.index(name), 0.0, value),))


def _scale_mechanism(mech, a, b):
    if isinstance(mech, LinearRow):
        return LinearRow(tuple(a * c for c in mech.coefficients), a * mech.offset + b,
                         a * mech.noise_coefficient, mech.noise_index)
    if a == 0:
        return ExprMechanism(ex.Constant(b))
    node = ex.Binary("add", ex.Binary("mul", ex.Constant(a), mech.node), ex.Constant(b))
    return ExprMechanism(node)


def apply_shift_scale(model: ScmModel, iv: Intervention) -> ScmModel:
    """Return a copy of ``model`` with each targeted mechanism replaced by ``a f + b``.

    Affine rows scale their coefficients and noise gain by ``a``; expression
    mechanisms are wrapped as ``a * (f) + b`` (or collapse to the constant
    ``b`` when ``a = 0``).
    """
    ensure_valid(model)
    iv.check_range(model.n)
    mechs = list(model.mechanisms)
    for j, a, b in iv.targets:
        mechs[j] = _scale_mechanism(mechs[j], a, b)
    return ScmModel(model.endogenous_names, tuple(mechs), model.noise)


def do_intervention(model: ScmModel, j, value: float) -> ScmModel:
    """Hard intervention fixing coordinate ``j`` (index or name) at ``value``."""
    if isinstance(j, str):
        j = model.index(j)
    return apply_shift_scale(model, Intervention(((j, 0.0, value),)))


def compose(ivs) -> Intervention:
    """Fold a sequence of interventions into one equivalent intervention.

    Applying ``(a1, b1)`` then ``(a2, b2)`` to the same coordinate gives
    ``a2 (a1 f + b1) + b2``, i.e. ``(a2 a1, a2 b1 + b2)``.
    """
    ivs = list(ivs)
    if not ivs:
        raise ValueError("compose needs at least one intervention")
    acc = {}
    for iv in ivs:
        for j, a, b in iv.targets:
            a0, b0 = acc.get(j, (1.0, 0.0))
            acc[j] = (a * a0, a * b0 + b)
    return Intervention(tuple((j, a, b) for j, (a, b) in acc.items()))


def inverse(iv: Intervention) -> Intervention:
    """Intervention undoing ``iv``; every scale must be nonzero."""
    if any(a == 0 for _, a, _ in iv.targets):
        raise ValueError("hard interventions have no inverse")
    return Intervention(tuple((j, 1.0 / a, -b / a) for j, a, b in iv.targets))


@dataclass(frozen=True)
class CompositionReport:
    a_comp: dict           # coordinate -> composed |a|
    stage_max: dict        # coordinate -> largest stage-wise |a|
    guarantee_holds: bool  # every stage-wise |a| <= 1, so kappa is preserved

    @property
    def needs_kappa_max(self) -> bool:
        return not self.guarantee_holds


def check_composition_bound(ivs) -> CompositionReport:
    """Check whether every stage scales by at most one in absolute value.

    If so the composed scales are also bounded by one and any contraction
    constant carries over to the intervened model. Otherwise the caller must
    fall back to ``kappa_after_intervention`` with the composed intervention.
    """
    ivs = list(ivs)
    stage_max = {}
    for iv in ivs:
        for j, a, _ in iv.targets:
            stage_max[j] = max(stage_max.get(j, 0.0), abs(a))
    a_comp = {}
    if ivs:
        a_comp = {j: abs(a) for j, a, _ in compose(ivs).targets}
    holds = all(v <= 1 for v in stage_max.values())
    return CompositionReport(a_comp, stage_max, holds)
