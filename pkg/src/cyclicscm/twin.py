"""Twin networks and counterfactual queries.

The twin of a model holds two copies of the endogenous variables, a factual
copy and a primed counterfactual copy, driven by one shared noise vector.
Intervening on the primed copy and solving both at the same noise gives the
joint law of factual and counterfactual outcomes. For affine models with
invertible noise gains the same answer is available pointwise by
abduction, action and prediction; ``verify_twin_aap_equivalence`` checks
the two routes against each other.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_solve

from . import expr as ex
from .contraction import certify
from .interventions import Intervention, apply_shift_scale
from .model import ExprMechanism, LinearRow, NoiseSpec, ScmModel, ensure_valid
from .solver import (DEFAULT_TOL, abduct_noise_linear, linear_solve, picard_solve,
                     require_contractive, resolvent, sample_noise, solve_batch)

PRIME = "'"


@dataclass(frozen=True)
class TwinModel:
    """Two copies of ``base`` sharing its exogenous noise.

    ``factual`` and ``counterfactual`` are the (possibly intervened) unprimed
    and primed copies. ``noise_map[j]`` is the exogenous index the primed copy
    uses for the base's exogenous term ``j``; it is the identity, which makes
    the sharing explicit and checkable.
    """

    base: ScmModel
    factual: ScmModel
    counterfactual: ScmModel
    noise_map: tuple

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def names(self) -> tuple:
        return self.base.endogenous_names + primed_names(self.base)

    def flatten(self) -> ScmModel:
        """Stacked ``2n``-coordinate model ``(x, x')`` with shared noise terms."""
        n = self.n
        names = self.names
        unprimed_map = {k: (k, names[k]) for k in range(n)}
        primed_map = {k: (n + k, names[n + k]) for k in range(n)}
        exo = self.base.exogenous_names
        noise_map = {k: (j, exo[j]) for k, j in enumerate(self.noise_map)}
        mechs = []
        for copy, var_map, shift in ((self.factual, unprimed_map, 0),
                                     (self.counterfactual, primed_map, n)):
            for i, mech in enumerate(copy.mechanisms):
                if isinstance(mech, LinearRow):
                    j = self.noise_map[copy.noise_index(i)]
                    coefs = [0.0] * (2 * n)
                    coefs[shift:shift + n] = mech.coefficients
                    mechs.append(LinearRow(tuple(coefs), mech.offset,
                                           mech.noise_coefficient, j))
                else:
                    mechs.append(ExprMechanism(ex.remap(mech.node, var_map, noise_map)))
        noise = NoiseSpec(self.base.noise.means, self.base.noise.variances,
                          self.base.exogenous_names)
        return ScmModel(names, tuple(mechs), noise)

    def noise_gains(self) -> np.ndarray:
        """Noise gain of every stacked coordinate (affine rows only)."""
        _, _, D = self.flatten().linear_form()
        return np.abs(D).sum(axis=1)


def primed_names(model: ScmModel) -> tuple:
    return tuple(name + PRIME for name in model.endogenous_names)


def build_twin(model: ScmModel) -> TwinModel:
    ensure_valid(model)
    return TwinModel(model, model, model, tuple(range(model.n_noise)))


def intervene_twin(twin: TwinModel, iv_unprimed: Intervention = None,
                   iv_primed: Intervention = None) -> TwinModel:
    """Intervene on each copy independently.

    The usual counterfactual query leaves the factual copy alone and applies
    the policy to the primed copy only.
    """
    factual, counterfactual = twin.factual, twin.counterfactual
    if iv_unprimed is not None and iv_unprimed.targets:
        factual = apply_shift_scale(factual, iv_unprimed)
    if iv_primed is not None and iv_primed.targets:
        counterfactual = apply_shift_scale(counterfactual, iv_primed)
    return TwinModel(twin.base, factual, counterfactual, twin.noise_map)


def counterfactual_twin(model: ScmModel, iv: Intervention) -> TwinModel:
    """Twin with ``iv`` applied to the primed copy only."""
    return intervene_twin(build_twin(model), None, iv)


def certify_twin(twin: TwinModel, p=2):
    """Contraction certificate of the stacked twin system.

    The copies do not interact, so the stacked constant is the larger of the
    two copies' constants.
    """
    return certify(twin.flatten(), p)


def solve_twin(twin: TwinModel, e, certificate=None, tol=DEFAULT_TOL) -> np.ndarray:
    """Solve both copies at shared noise ``e`` (one row or a batch).

    Returns states ``(x, x')`` stacked on the last axis.
    """
    e = np.asarray(e, dtype=float)
    batch = e if e.ndim == 2 else e[None, :]
    x = solve_batch(twin.factual, batch, certificate, tol)
    xp = solve_batch(twin.counterfactual, batch, certificate, tol)
    out = np.concatenate([x, xp], axis=-1)
    return out if e.ndim == 2 else out[0]


@dataclass(frozen=True)
class CounterfactualMap:
    """Affine response ``x_obs -> matrix @ x_obs + offset``."""

    matrix: np.ndarray
    offset: np.ndarray
    names: tuple = ()

    def __call__(self, x_obs):
        return np.asarray(x_obs, dtype=float) @ self.matrix.T + self.offset

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist(), "offset": self.offset.tolist(),
                "names": list(self.names)}


def counterfactual_map_linear(model: ScmModel, iv: Intervention) -> CounterfactualMap:
    """Closed-form counterfactual response of an affine model.

    With ``e(x) = D^{-1}((I - A) x - b)`` and the intervened parameters
    ``A', b', D'``, the counterfactual state is ``(I - A')^{-1}(b' + D' e(x))``.

    Raises
    ------
    SingularSystem, DegenerateNoise
    """
    ensure_valid(model)
    intervened = apply_shift_scale(model, iv)
    A, b, _ = model.linear_form()
    _, b2, D2 = intervened.linear_form()
    n = model.n
    # columns of E are e(x) for unit x, so e(x) = E @ x + e0
    e0 = abduct_noise_linear(model, np.zeros(n))
    E = abduct_noise_linear(model, np.eye(n)).T - e0[:, None]
    lu = resolvent(intervened)
    matrix = lu_solve(lu, D2 @ E)
    offset = lu_solve(lu, b2 + D2 @ e0)
    return CounterfactualMap(matrix, offset, primed_names(model))


def counterfactual_aap(model: ScmModel, iv: Intervention, x_obs=None, e=None,
                       tol=DEFAULT_TOL) -> np.ndarray:
    """Counterfactual state by abduction, action and prediction.

    The noise is recovered from ``x_obs`` (affine models with nonzero gains)
    unless ``e`` is given directly; the intervened model is then solved at
    that noise.
    """
    if e is None:
        if x_obs is None:
            raise ValueError("need an observation or a noise vector")
        e = abduct_noise_linear(model, x_obs)
    intervened = apply_shift_scale(model, iv)
    if intervened.is_linear:
        return linear_solve(intervened, e)
    return picard_solve(intervened, e, tol=tol).x_star


def counterfactual_sample(twin: TwinModel, n: int, seed=0, certificate=None,
                          allow_uncertified=False) -> np.ndarray:
    """Joint draws of ``(x, x')``, shape ``(n, 2 * twin.n)``.

    Each row uses one noise draw for both copies.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if certificate is None:
        certificate = require_contractive(twin.flatten(), None, allow_uncertified)
    e = sample_noise(twin.base, n, seed)
    if n == 0:
        return np.zeros((0, 2 * twin.n))
    return solve_twin(twin, e, certificate)


@dataclass(frozen=True)
class EquivalenceReport:
    n_obs: int
    max_discrepancy: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_discrepancy <= self.tol


def verify_twin_aap_equivalence(model: ScmModel, iv: Intervention, n_obs=1000, seed=0,
                                tol=1e-9) -> EquivalenceReport:
    """Compare twin-network and abduction-action-prediction answers.

    Observations are drawn from the model itself. The twin route solves the
    stacked ``2n`` system at the abducted noise; the other route solves the
    intervened ``n`` system directly.
    """
    flat = counterfactual_twin(model, iv).flatten()
    x_obs = sample_noise_solutions(model, n_obs, seed)
    e = abduct_noise_linear(model, x_obs)
    twin_states = linear_solve(flat, e)
    n = model.n
    gaps = [np.max(np.abs(twin_states[:, :n] - x_obs), initial=0.0)]
    aap = counterfactual_aap(model, iv, e=e)
    gaps.append(np.max(np.abs(twin_states[:, n:] - aap), initial=0.0))
    return EquivalenceReport(n_obs, float(max(gaps)), tol)


def sample_noise_solutions(model: ScmModel, n: int, seed) -> np.ndarray:
    return linear_solve(model, sample_noise(model, n, seed))
