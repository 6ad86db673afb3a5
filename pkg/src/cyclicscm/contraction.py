"""Global l_p contraction certificates.

Three tiers, from strongest to weakest:

* exact operator norms for affine models (``certify_linear``),
* interval derivative bounds for expression models (``bound_expr_lipschitz``),
* a seeded sampling estimate that is a lower bound only and never certifies
  anything (``estimate_kappa_sampled``).

A certified constant below one means the structural map is a contraction in
``x`` uniformly over the noise, so every subsystem has a unique solution.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import expr as ex
from .errors import NumericalFailure, Uncertifiable
from .model import ExprMechanism, LinearRow, ScmModel, ensure_valid

LINEAR_OPERATOR_NORM = "linear-operator-norm"
LINEAR_FROBENIUS_BOUND = "linear-frobenius-bound"
INTERVAL_BOUND = "interval-bound"
SAMPLED_ESTIMATE = "sampled-estimate"
USER_ASSERTED = "user-asserted"
CERTIFIED_METHODS = (LINEAR_OPERATOR_NORM, LINEAR_FROBENIUS_BOUND, INTERVAL_BOUND)

POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000
SAMPLING_RADII = (1.0, 10.0, 100.0)


@dataclass(frozen=True)
class ContractionCertificate:
    """Contraction constant ``kappa`` in the ``l_p`` norm and how it was obtained.

    ``scale_factor`` is the largest intervention scale folded into ``kappa``
    (1 when no intervention inflated it). ``frobenius_bound`` is set for
    ``p = 2`` linear certificates.
    """

    p: float
    kappa: float
    method: str
    is_certified: bool
    frobenius_bound: Optional[float] = None
    scale_factor: float = 1.0

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")
        if self.method == SAMPLED_ESTIMATE and self.is_certified:
            raise ValueError("a sampled estimate cannot be certified")

    @property
    def simple_guaranteed(self) -> bool:
        """True when the model is provably simple (uniquely solvable on every subset)."""
        trusted = self.is_certified or self.method == USER_ASSERTED
        return trusted and self.kappa < 1

    def to_dict(self) -> dict:
        out = {"p": norm_label(self.p), "kappa": self.kappa, "method": self.method,
               "is_certified": self.is_certified}
        if self.frobenius_bound is not None:
            out["frobenius_bound"] = self.frobenius_bound
        if self.scale_factor != 1.0:
            out["scale_factor"] = self.scale_factor
            out["simple_guaranteed"] = self.simple_guaranteed
        return out


def user_asserted(kappa: float, p=2) -> ContractionCertificate:
    """Certificate for a constant the caller vouches for."""
    return ContractionCertificate(parse_p(p), float(kappa), USER_ASSERTED, False)


def parse_p(p) -> float:
    if isinstance(p, str):
        p = p.strip().lower()
        if p in ("inf", "infinity", "oo"):
            return math.inf
        p = float(p)
    p = float(p)
    if p not in (1.0, 2.0, math.inf):
        raise ValueError(f"norm index must be 1, 2 or inf, got {p}")
    return p


def norm_label(p) -> str:
    return "inf" if p == math.inf else str(int(p))


def vector_norm(v, p, axis=-1):
    return np.linalg.norm(v, ord=p, axis=axis)


def spectral_norm_power(M, tol=POWER_TOL, max_iter=POWER_MAX_ITER):
    """Largest singular value of ``M`` by power iteration on ``M^T M``.

    Returns ``(sigma, converged)``. The stopping test is the relative change
    of the Rayleigh quotient.
    """
    M = np.asarray(M, dtype=float)
    G = M.T @ M
    n = G.shape[0]
    if n == 0 or not np.any(G):
        return 0.0, True
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = G @ v
        w_norm = np.linalg.norm(w)
        if w_norm == 0:
            # start vector fell into the null space
            v = rng.standard_normal(n)
            v /= np.linalg.norm(v)
            continue
        v = w / w_norm
        lam_new = float(v @ G @ v)
        if abs(lam_new - lam) <= tol * max(lam_new, 1e-300):
            return math.sqrt(max(lam_new, 0.0)), True
        lam = lam_new
    return math.sqrt(max(lam, 0.0)), False


def matrix_kappa(B, p):
    """Operator norm of ``B`` for ``p`` in {1, 2, inf}.

    Returns ``(kappa, method, frobenius)``; the Frobenius norm is returned
    (and used as a fallback) only for ``p = 2``.
    """
    B = np.asarray(B, dtype=float)
    if B.size == 0:
        return 0.0, LINEAR_OPERATOR_NORM, (0.0 if p == 2 else None)
    if p == 1:
        return float(np.abs(B).sum(axis=0).max()), LINEAR_OPERATOR_NORM, None
    if p == math.inf:
        return float(np.abs(B).sum(axis=1).max()), LINEAR_OPERATOR_NORM, None
    frob = float(np.sqrt((B * B).sum()))
    sigma, converged = spectral_norm_power(B)
    if not converged:
        return frob, LINEAR_FROBENIUS_BOUND, frob
    return sigma, LINEAR_OPERATOR_NORM, frob


def certify_linear(model: ScmModel, p=2) -> ContractionCertificate:
    """Exact contraction constant of an affine model: the operator norm of A."""
    p = parse_p(p)
    ensure_valid(model)
    A, _, _ = model.linear_form()
    kappa, method, frob = matrix_kappa(A, p)
    return ContractionCertificate(p, kappa, method, True, frobenius_bound=frob)


# ---------------------------------------------------------------------------
# interval derivative bounds
# ---------------------------------------------------------------------------

def _state_free(node) -> bool:
    return not any(isinstance(nd, ex.VarRef) for nd in ex.walk(node))


def _magnitude(node) -> float:
    """Upper bound on |node| over all x and e for a state-free subtree."""
    if isinstance(node, ex.Constant):
        return abs(node.value)
    if isinstance(node, ex.NoiseRef):
        return math.inf
    if isinstance(node, ex.Unary):
        inner = _magnitude(node.child)
        return inner if node.op == "neg" else (1.0 if node.op == "cos" else min(1.0, inner))
    if isinstance(node, ex.Binary):
        left, right = _magnitude(node.left), _magnitude(node.right)
        if node.op in ("add", "sub"):
            return left + right
        if node.op == "mul":
            if left == 0 or right == 0:
                return 0.0
            return left * right
        raise Uncertifiable("division in mechanism")
    raise Uncertifiable(f"cannot bound {type(node).__name__}")


def _derivative_bounds(node, n):
    """Vector ``g`` with ``g[k] >= sup |d node / d x_k|``."""
    if isinstance(node, (ex.Constant, ex.NoiseRef)):
        return np.zeros(n)
    if isinstance(node, ex.VarRef):
        g = np.zeros(n)
        g[node.index] = 1.0
        return g
    if isinstance(node, ex.Unary):
        # |neg'| = |tanh'| <= 1, |sin'| <= 1, |cos'| <= 1
        return _derivative_bounds(node.child, n)
    if node.op in ("add", "sub"):
        return _derivative_bounds(node.left, n) + _derivative_bounds(node.right, n)
    if node.op == "div":
        raise Uncertifiable("division in mechanism; supply a user-asserted kappa")
    left_free, right_free = _state_free(node.left), _state_free(node.right)
    if left_free and right_free:
        return np.zeros(n)
    if not (left_free or right_free):
        raise Uncertifiable("product of two state-dependent factors")
    scale_node, var_node = (node.left, node.right) if left_free else (node.right, node.left)
    scale = _magnitude(scale_node)
    if not math.isfinite(scale):
        raise Uncertifiable("state multiplied by an unbounded noise term")
    return scale * _derivative_bounds(var_node, n)


def derivative_bound_matrix(model: ScmModel) -> np.ndarray:
    """Matrix ``B`` with ``B[i, k] >= sup |d f_i / d x_k|`` over all x and e."""
    ensure_valid(model)
    n = model.n
    B = np.zeros((n, n))
    for i, mech in enumerate(model.mechanisms):
        if isinstance(mech, LinearRow):
            B[i] = np.abs(mech.coefficients)
        else:
            B[i] = _derivative_bounds(mech.node, n)
    return B


def bound_expr_lipschitz(model: ScmModel, p=2) -> ContractionCertificate:
    """Certify contraction of an expression model from derivative bounds.

    Since ``|J(x, e)| <= B`` entrywise everywhere, ``||J||_p <= ||B||_p`` and
    the mean value inequality gives a global Lipschitz constant.

    Raises
    ------
    Uncertifiable
        If a mechanism contains a division, a product of two state-dependent
        factors, or a state term scaled by unbounded noise.
    """
    p = parse_p(p)
    B = derivative_bound_matrix(model)
    kappa, method, frob = matrix_kappa(B, p)
    if method == LINEAR_FROBENIUS_BOUND:
        return ContractionCertificate(p, kappa, method, True, frobenius_bound=frob)
    return ContractionCertificate(p, kappa, INTERVAL_BOUND, True, frobenius_bound=frob)


def certify(model: ScmModel, p=2) -> ContractionCertificate:
    """Strongest available certificate: exact for affine models, interval otherwise."""
    if model.is_linear:
        return certify_linear(model, p)
    return bound_expr_lipschitz(model, p)


def estimate_kappa_sampled(model: ScmModel, p=2, n_pairs=10_000, seed=0) -> ContractionCertificate:
    """Empirical lower bound on the contraction constant.

    Pairs ``(x, y)`` are standard normal vectors scaled by radii cycling
    through 1, 10 and 100; the noise is drawn from the model. The result is
    never certified.
    """
    p = parse_p(p)
    if n_pairs < 1:
        raise ValueError("n_pairs must be at least 1")
    ensure_valid(model)
    rng = np.random.default_rng(seed)
    n, d = model.n, model.n_noise
    radii = np.resize(np.asarray(SAMPLING_RADII), n_pairs)[:, None]
    x = rng.standard_normal((n_pairs, n)) * radii
    y = rng.standard_normal((n_pairs, n)) * radii
    e = (np.asarray(model.noise.means)
         + rng.standard_normal((n_pairs, d)) * np.sqrt(model.noise.variances))
    with np.errstate(all="ignore"):
        fx = model.evaluate(x, e)
        fy = model.evaluate(y, e)
    if not (np.all(np.isfinite(fx)) and np.all(np.isfinite(fy))):
        raise NumericalFailure("non-finite mechanism value while sampling")
    num = vector_norm(fx - fy, p)
    den = vector_norm(x - y, p)
    keep = den > 0
    kappa = float(np.max(num[keep] / den[keep])) if np.any(keep) else 0.0
    return ContractionCertificate(p, kappa, SAMPLED_ESTIMATE, False)


def kappa_after_intervention(cert: ContractionCertificate, intervention) -> ContractionCertificate:
    """Contraction constant after a shift-scale intervention.

    Scales with ``|a| <= 1`` keep the constant; otherwise it grows to
    ``max|a| * kappa`` and simplicity holds only if that stays below one.
    """
    a_max = intervention.a_max()
    if a_max <= 1:
        return cert
    return dataclasses.replace(cert, kappa=a_max * cert.kappa,
                               scale_factor=cert.scale_factor * a_max)
