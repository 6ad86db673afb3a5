"""Solving ``x = f(x, e)``: Picard iteration, subsystems, and the affine closed form."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .contraction import certify, parse_p, vector_norm
from .errors import (DegenerateNoise, Diverged, KappaNotContractive, MaxIterExceeded,
                     NotContractive, SingularSystem, Uncertifiable)
from .model import ScmModel, ensure_valid

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000
DIVERGENCE_FACTOR = 1e6
PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a fixed-point solve.

    ``x_star`` has the shape of the starting point (a batch solves all rows
    at once and reports the worst row). ``steps`` holds the successive
    differences ``||x_{k+1} - x_k||_p``.
    """

    x_star: np.ndarray
    iterations: int
    residual: float
    converged: bool
    p: float
    steps: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {"x_star": np.asarray(self.x_star).tolist(), "iterations": self.iterations,
                "residual": self.residual, "converged": self.converged,
                "p": "inf" if self.p == math.inf else int(self.p)}


def _kappa_value(kappa) -> Optional[float]:
    if kappa is None:
        return None
    value = getattr(kappa, "kappa", kappa)
    return float(value) if value < 1 else None


def _worst(values):
    values = np.atleast_1d(values)
    if not np.all(np.isfinite(values)):
        return math.inf, int(np.flatnonzero(~np.isfinite(values))[0])
    k = int(np.argmax(values))
    return float(values[k]), k


def _iterate(F, x0, p, tol, max_iter, kappa, strict=True):
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    k_val = _kappa_value(kappa)
    # a-priori Banach bound: ||x_{k+1} - x*|| <= kappa/(1-kappa) ||x_{k+1} - x_k||
    threshold = tol if k_val is None else tol * (1 - k_val) / max(k_val, 1e-12)

    x = np.asarray(x0, dtype=float)
    fx = F(x)
    steps = []
    first = None
    for it in range(1, max_iter + 1):
        x_new = fx
        step, row = _worst(vector_norm(x_new - x, p))
        steps.append(step)
        if not math.isfinite(step):
            raise Diverged("non-finite iterate", row if x.ndim > 1 else None)
        if first is None and step > 0:
            first = step
        if first is not None and step > DIVERGENCE_FACTOR * first:
            raise Diverged(f"successive difference grew from {first:.3g} to {step:.3g}",
                           row if x.ndim > 1 else None)
        x = x_new
        fx = F(x)
        if step <= threshold:
            residual, row = _worst(vector_norm(x - fx, p))
            if residual <= tol:
                return SolveReport(x, it, residual, True, p, tuple(steps))
    residual, row = _worst(vector_norm(x - fx, p))
    if strict:
        raise MaxIterExceeded(f"no convergence after {max_iter} iterations "
                              f"(residual {residual:.3g})", row if x.ndim > 1 else None)
    return SolveReport(x, max_iter, residual, False, p, tuple(steps))


def picard_solve(model: ScmModel, e=None, x0=None, p=2, tol=DEFAULT_TOL,
                 max_iter=DEFAULT_MAX_ITER, kappa=None, strict=True) -> SolveReport:
    """Fixed point of ``x -> f(x, e)`` by Picard iteration.

    Parameters
    ----------
    model : ScmModel
    e : array_like, optional
        Noise, shape ``(d,)`` or a batch ``(m, d)``; defaults to zeros.
    x0 : array_like, optional
        Starting point; defaults to zeros.
    p : {1, 2, inf}
        Norm used for the stopping rule and the reported residual.
    tol : float
        Target accuracy. When ``kappa < 1`` is supplied (a float or a
        certificate) iteration stops once the Banach a-priori bound places
        the iterate within ``tol`` of the fixed point; otherwise it stops on
        successive differences.
    kappa : float or ContractionCertificate, optional
    strict : bool
        Raise ``MaxIterExceeded`` instead of returning an unconverged report.

    Raises
    ------
    Diverged
        Non-finite iterate or successive differences growing by 1e6.
    MaxIterExceeded
    """
    ensure_valid(model)
    p = parse_p(p)
    e = np.zeros(model.n_noise) if e is None else np.asarray(e, dtype=float)
    if x0 is None:
        x0 = np.zeros(e.shape[:-1] + (model.n,))
    return _iterate(lambda x: model.evaluate(x, e), x0, p, tol, max_iter, kappa, strict)


def iteration_bound(kappa: float, initial_step: float, tol: float) -> int:
    """Smallest ``n`` with ``kappa**n * initial_step / (1 - kappa) <= tol``."""
    if not 0 <= kappa < 1:
        raise KappaNotContractive(f"kappa = {kappa} is not below 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if initial_step == 0:
        return 0

    def ok(n):
        return kappa ** n * initial_step / (1 - kappa) <= tol

    if ok(0):
        return 0
    if kappa == 0:
        return 1
    n = max(0, math.ceil(math.log(tol * (1 - kappa) / initial_step) / math.log(kappa)))
    while n > 0 and ok(n - 1):
        n -= 1
    while not ok(n):
        n += 1
    return n


def solve_subset(model: ScmModel, O, x_rest, e=None, p=2, tol=DEFAULT_TOL,
                 max_iter=DEFAULT_MAX_ITER, kappa=None, x0=None, strict=True) -> SolveReport:
    """Solve only the coordinates in ``O`` with the others held at ``x_rest``.

    ``x_rest`` is either a full-length state (entries in ``O`` ignored) or
    the values of the remaining coordinates in increasing index order. The
    report's ``x_star`` has one entry per element of ``sorted(O)``.
    """
    ensure_valid(model)
    p = parse_p(p)
    O = sorted(set(int(i) for i in O))
    if not O:
        raise ValueError("O must be nonempty")
    if not all(0 <= i < model.n for i in O):
        raise IndexError(f"subset {O} outside 0..{model.n - 1}")
    rest = [i for i in range(model.n) if i not in O]
    x_rest = np.asarray(x_rest, dtype=float)
    base = np.zeros(model.n)
    if x_rest.shape == (model.n,):
        base[rest] = x_rest[rest]
    elif x_rest.shape == (len(rest),):
        base[rest] = x_rest
    else:
        raise ValueError(f"x_rest must have length {model.n} or {len(rest)}")
    e = np.zeros(model.n_noise) if e is None else np.asarray(e, dtype=float)

    def F(u):
        full = base.copy()
        full[O] = u
        return model.evaluate(full, e, rows=O)

    u0 = np.zeros(len(O)) if x0 is None else np.asarray(x0, dtype=float)
    return _iterate(F, u0, p, tol, max_iter, kappa, strict)


# ---------------------------------------------------------------------------
# affine models
# ---------------------------------------------------------------------------

def _factor(M):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        warnings.simplefilter("ignore", RuntimeWarning)
        lu, piv = lu_factor(M, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if pivots.size and pivots.min() < PIVOT_TOL:
        raise SingularSystem(f"pivot {pivots.min():.3g} below {PIVOT_TOL}")
    return lu, piv


def resolvent(model: ScmModel):
    """LU factors of ``I - A`` (partial pivoting)."""
    A, _, _ = model.linear_form()
    return _factor(np.eye(model.n) - A)


def linear_solve(model: ScmModel, e=None) -> np.ndarray:
    """Solve ``(I - A) x = b + D e``; ``e`` may be a batch ``(m, d)``.

    Raises
    ------
    SingularSystem
        If a pivot falls below 1e-12.
    """
    ensure_valid(model)
    A, b, D = model.linear_form()
    e = np.zeros(model.n_noise) if e is None else np.asarray(e, dtype=float)
    rhs = b + e @ D.T
    if model.n == 0:
        return rhs
    lu = resolvent(model)
    return lu_solve(lu, rhs.T).T


@dataclass(frozen=True)
class LinearMoments:
    mean: np.ndarray
    covariance: np.ndarray

    def correlation(self) -> np.ndarray:
        s = np.sqrt(np.diag(self.covariance))
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.covariance / np.outer(s, s)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "covariance": self.covariance.tolist(),
                "correlation": np.nan_to_num(self.correlation()).tolist()}


def linear_moments(model: ScmModel) -> LinearMoments:
    """Mean and covariance of the solution of an affine model with Gaussian noise."""
    ensure_valid(model)
    A, b, D = model.linear_form()
    lu = resolvent(model)
    mean = lu_solve(lu, b + D @ np.asarray(model.noise.means))
    M = lu_solve(lu, D)
    cov = M @ np.diag(model.noise.variances) @ M.T
    cov = 0.5 * (cov + cov.T)
    return LinearMoments(mean, cov)


def abduct_noise_linear(model: ScmModel, x_obs) -> np.ndarray:
    """Noise consistent with the observation: ``e = D^{-1}((I - A) x - b)``.

    Raises
    ------
    DegenerateNoise
        If some coordinate has zero noise gain (or two coordinates share one
        noise term), so the noise is not identified.
    """
    ensure_valid(model)
    A, b, D = model.linear_form()
    idx = [model.noise_index(i) for i in range(model.n)]
    gains = np.array([model.mechanisms[i].noise_coefficient for i in range(model.n)])
    zero = [model.endogenous_names[i] for i in range(model.n) if gains[i] == 0]
    if zero:
        raise DegenerateNoise(f"zero noise coefficient for {', '.join(zero)}; "
                              "the noise cannot be recovered from the observation")
    if sorted(idx) != list(range(model.n_noise)):
        raise DegenerateNoise("noise terms are not in one-to-one correspondence with variables")
    x_obs = np.asarray(x_obs, dtype=float)
    r = x_obs - x_obs @ A.T - b
    e = np.empty(x_obs.shape[:-1] + (model.n_noise,))
    e[..., idx] = r / gains
    return e


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_noise(model: ScmModel, n: int, seed) -> np.ndarray:
    """``n`` independent draws of the exogenous noise, shape ``(n, d)``."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, model.n_noise))
    return np.asarray(model.noise.means) + z * np.sqrt(model.noise.variances)


def require_contractive(model: ScmModel, certificate=None, allow_uncertified=False):
    """Return a usable certificate or raise ``NotContractive``."""
    if certificate is None:
        try:
            certificate = certify(model, 2)
        except Uncertifiable as err:
            if allow_uncertified:
                return None
            raise NotContractive(f"model cannot be certified: {err}") from err
    if not certificate.simple_guaranteed and not allow_uncertified:
        raise NotContractive(f"kappa = {certificate.kappa:.6g} ({certificate.method}) "
                             "does not certify a contraction")
    return certificate


def solve_batch(model: ScmModel, e, certificate=None, tol=DEFAULT_TOL,
                max_iter=DEFAULT_MAX_ITER) -> np.ndarray:
    """Solve for every noise row of ``e``; affine models use the closed form."""
    e = np.asarray(e, dtype=float)
    if e.shape[0] == 0:
        return np.zeros((0, model.n))
    if model.is_linear:
        return linear_solve(model, e)
    kappa = certificate if certificate is not None and certificate.kappa < 1 else None
    p = certificate.p if kappa is not None else 2
    return picard_solve(model, e, p=p, tol=tol, max_iter=max_iter, kappa=kappa).x_star


def sample_observational(model: ScmModel, n: int, seed=0, certificate=None,
                         allow_uncertified=False) -> np.ndarray:
    """Draw ``n`` solutions of the model, shape ``(n, model.n)``.

    Requires a contraction certificate (computed when not given) unless
    ``allow_uncertified`` is set.
    """
    ensure_valid(model)
    if n < 0:
        raise ValueError("n must be nonnegative")
    certificate = require_contractive(model, certificate, allow_uncertified)
    return solve_batch(model, sample_noise(model, n, seed), certificate)


def write_csv(path, header, rows) -> None:
    """Write a sample matrix with full float precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in np.asarray(rows, dtype=float):
            writer.writerow([repr(float(v)) for v in row])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in r] for r in reader]
    return header, np.asarray(rows, dtype=float).reshape(-1, len(header))
