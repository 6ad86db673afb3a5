"""Sub-Gaussian tail bounds for counterfactual functionals.

If the structural map contracts with constant ``kappa`` and is 1-Lipschitz in
the noise, the solution map is ``1/(1 - kappa)``-Lipschitz. Gaussian noise
with covariance below ``sigma2 * I`` then makes every 1-Lipschitz functional
of ``(x, x')`` sub-Gaussian with proxy ``sigma2 / (1 - kappa)**2``, times
``d**(2/p - 1)`` when distances are measured in ``l_p`` with ``p < 2``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .contraction import parse_p
from .errors import InvalidSpec, KappaNotContractive, NonLinearModel
from .model import ScmModel
from .solver import sample_noise
from .twin import TwinModel, certify_twin, counterfactual_sample, solve_twin


def norm_correction(p, d: int) -> float:
    """``||I||_{2->p}`` in dimension ``d``."""
    p = parse_p(p)
    if p >= 2:
        return 1.0
    return d ** (1.0 / p - 0.5)


@dataclass(frozen=True)
class TailBoundSpec:
    kappa: float
    sigma2: float
    p: float = 2
    d: int = 1

    def validate(self):
        if not 0 <= self.kappa < 1:
            raise InvalidSpec(f"kappa must lie in [0, 1), got {self.kappa}")
        if not self.sigma2 > 0:
            raise InvalidSpec(f"sigma2 must be positive, got {self.sigma2}")
        return self

    def proxy(self) -> float:
        self.validate()
        return self.sigma2 * norm_correction(self.p, self.d) ** 2 / (1 - self.kappa) ** 2

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "sigma2": self.sigma2,
                "p": "inf" if self.p == math.inf else self.p, "d": self.d,
                "proxy": self.proxy()}


def tail_bound(spec: TailBoundSpec, t: float) -> float:
    """Upper bound on ``P(h - E h >= t)`` for 1-Lipschitz ``h``."""
    if not t > 0:
        raise ValueError("t must be positive")
    return math.exp(-t * t / (2 * spec.proxy()))


def lipschitz_constant_solution_map(kappa: float) -> float:
    if not 0 <= kappa < 1:
        raise KappaNotContractive(f"kappa = {kappa} is not below 1")
    return 1.0 / (1.0 - kappa)


@dataclass(frozen=True)
class LipschitzFunctional:
    """A 1-Lipschitz (in l_2) functional of the stacked state ``(x, x')``.

    ``kind`` is ``projection`` (coordinate ``index`` of the stacked state),
    ``scaled_difference`` (``(x_k - x'_k)/sqrt(2)`` for ``k = index``) or
    ``scaled_mean`` (sum of all ``2n`` coordinates over ``sqrt(2n)``).
    """

    kind: str
    index: int = 0
    sign: float = 1.0
    label: str = ""

    def __call__(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        if self.kind == "projection":
            val = states[..., self.index]
        elif self.kind == "scaled_difference":
            n = states.shape[-1] // 2
            val = (states[..., self.index] - states[..., n + self.index]) / math.sqrt(2)
        elif self.kind == "scaled_mean":
            val = states.sum(axis=-1) / math.sqrt(states.shape[-1])
        else:
            raise ValueError(f"unknown functional {self.kind!r}")
        return self.sign * val

    def negated(self) -> "LipschitzFunctional":
        label = self.label[1:] if self.label.startswith("-") else "-" + self.label
        return LipschitzFunctional(self.kind, self.index, -self.sign, label)


def projection(k: int, label="") -> LipschitzFunctional:
    return LipschitzFunctional("projection", k, 1.0, label or f"proj:{k}")


def scaled_difference(k: int, label="") -> LipschitzFunctional:
    return LipschitzFunctional("scaled_difference", k, 1.0, label or f"diff:{k}")


def scaled_mean() -> LipschitzFunctional:
    return LipschitzFunctional("scaled_mean", 0, 1.0, "mean")


def parse_functional(text: str, model: ScmModel) -> LipschitzFunctional:
    """``proj:NAME`` (``NAME`` may carry a prime), ``diff:NAME`` or ``mean``."""
    text = text.strip()
    if text == "mean":
        return scaled_mean()
    kind, _, name = text.partition(":")
    if kind == "proj":
        primed = name.endswith("'")
        k = model.index(name[:-1] if primed else name)
        return projection(k + model.n if primed else k, text)
    if kind == "diff":
        return scaled_difference(model.index(name), text)
    raise ValueError(f"unknown functional {text!r}; use proj:NAME, diff:NAME or mean")


@dataclass(frozen=True)
class TailRow:
    t: float
    empirical: float
    bound: float
    slack: float
    passed: bool

    def to_dict(self) -> dict:
        return {"t": self.t, "empirical": self.empirical, "bound": self.bound,
                "slack": self.slack, "pass": self.passed}


@dataclass(frozen=True)
class TailCheckReport:
    functional: str
    spec: TailBoundSpec
    n: int
    seed: int
    rows: tuple

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_dict(self) -> dict:
        return {"functional": self.functional, "spec": self.spec.to_dict(), "n": self.n,
                "seed": self.seed, "pass": self.passed,
                "rows": [r.to_dict() for r in self.rows]}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["functional", "t", "empirical", "bound"])
            for r in self.rows:
                writer.writerow([self.functional, repr(r.t), repr(r.empirical), repr(r.bound)])


def tail_rows(values, spec: TailBoundSpec, t_grid):
    """Compare exceedance frequencies of centred ``values`` against the bound."""
    values = np.asarray(values, dtype=float)
    n = values.size
    dev = values - values.mean()
    rows = []
    for t in t_grid:
        bound = tail_bound(spec, t)
        freq = float(np.count_nonzero(dev >= t)) / n
        slack = 3.0 * math.sqrt(freq * (1.0 - freq) / n)
        rows.append(TailRow(float(t), freq, bound, slack, freq <= bound + slack))
    return rows


def empirical_tail_check(twin: TwinModel, h: LipschitzFunctional, spec: TailBoundSpec,
                         t_grid=(0.2, 0.4, 0.6, 0.8), n=500_000, seed=0,
                         two_sided=False, samples=None) -> TailCheckReport:
    """Monte Carlo check of the sub-Gaussian bound for ``h`` on the intervened twin.

    For each ``t`` the frequency of ``h - mean(h) >= t`` must not exceed the
    bound plus ``3 sqrt(q (1 - q) / n)``. With ``two_sided`` the check is
    repeated for ``-h``. Pre-drawn ``samples`` may be passed to reuse one
    Monte Carlo run across functionals.
    """
    spec.validate()
    if any(not t > 0 for t in t_grid):
        raise ValueError("every t must be positive")
    if samples is None:
        samples = counterfactual_sample(twin, n, seed, allow_uncertified=True)
    rows = tail_rows(h(samples), spec, t_grid)
    label = h.label or h.kind
    if two_sided:
        rows += tail_rows(h.negated()(samples), spec, t_grid)
        label += " (two-sided)"
    return TailCheckReport(label, spec, len(samples), seed, tuple(rows))


@dataclass(frozen=True)
class NoiseLipschitzReport:
    passed: bool
    constant: float
    offending: tuple = ()


def verify_noise_lipschitz_linear(model: ScmModel) -> NoiseLipschitzReport:
    """Check ``||f(x, e1) - f(x, e2)||_2 <= ||e1 - e2||_2`` for an affine model.

    The noise enters as ``D e``, so the condition is ``||D||_2 <= 1``. With one
    noise term per variable that is ``max |noise_coefficient| <= 1``.
    """
    if not model.is_linear:
        raise NonLinearModel("noise Lipschitz check needs affine mechanisms")
    _, _, D = model.linear_form()
    constant = float(np.linalg.norm(D, 2)) if D.size else 0.0
    column_gain = np.sqrt((D * D).sum(axis=0))
    names = model.exogenous_names
    offending = tuple(names[j] for j in np.flatnonzero(column_gain > 1))
    if constant > 1 and not offending:
        offending = tuple(names)
    return NoiseLipschitzReport(constant <= 1, constant, offending)


def noise_sigma2(twin: TwinModel) -> float:
    """Variance proxy of the effective noise ``D e`` entering each coordinate."""
    flat = twin.flatten()
    if flat.is_linear:
        _, _, D = flat.linear_form()
        eff = (D * D) * np.asarray(flat.noise.variances)
        return float(eff.sum(axis=1).max())
    return flat.noise.sigma_proxy()


def tail_spec_for_twin(twin: TwinModel, p=2, kappa=None) -> TailBoundSpec:
    """Spec built from the twin's certificate (or a given ``kappa``) and noise."""
    if kappa is None:
        kappa = certify_twin(twin, p).kappa
    return TailBoundSpec(float(kappa), noise_sigma2(twin), parse_p(p), twin.base.n_noise)


@dataclass(frozen=True)
class SolutionMapCheck:
    max_ratio: float
    lipschitz_bound: float

    @property
    def passed(self) -> bool:
        return self.max_ratio <= self.lipschitz_bound * (1 + 1e-9)


def check_solution_map_lipschitz(twin: TwinModel, kappa: float, n_pairs=10_000,
                                 seed=0) -> SolutionMapCheck:
    """Largest ``||Phi(e1) - Phi(e2)||_2 / ||e1 - e2||_2`` over random noise pairs."""
    rng = np.random.default_rng(seed)
    d = twin.base.n_noise
    scale = np.resize(np.array([1.0, 10.0, 100.0]), n_pairs)[:, None]
    e1 = sample_noise(twin.base, n_pairs, rng) + rng.standard_normal((n_pairs, d)) * scale
    e2 = sample_noise(twin.base, n_pairs, rng) + rng.standard_normal((n_pairs, d)) * scale
    diff = np.linalg.norm(solve_twin(twin, e1) - solve_twin(twin, e2), axis=1)
    ratio = diff / np.linalg.norm(e1 - e2, axis=1)
    return SolutionMapCheck(float(ratio.max()), lipschitz_constant_solution_map(kappa))
