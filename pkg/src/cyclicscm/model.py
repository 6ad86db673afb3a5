"""SCM data model, structural validation, parent extraction and model files.

A model is the tuple (endogenous names, one mechanism per coordinate,
independent Gaussian noise). Every variable takes values in the whole real
line. Mechanisms are either affine rows or expression trees, and the two
kinds may be mixed freely within one model.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import expr as ex
from .errors import (ExprError, InvalidModel, ModelParseError, ModelSchemaError,
                     NonLinearModel)


@dataclass(frozen=True)
class LinearRow:
    """``x_i = coefficients . x + offset + noise_coefficient * e_j``.

    ``noise_index`` selects ``j``; ``None`` means the row's own coordinate,
    which is the only option the model file format can express.
    """

    coefficients: tuple
    offset: float = 0.0
    noise_coefficient: float = 1.0
    noise_index: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "coefficients",
                           tuple(float(c) for c in self.coefficients))


@dataclass(frozen=True)
class ExprMechanism:
    node: ex.ExprNode


Mechanism = Union[LinearRow, ExprMechanism]


@dataclass(frozen=True)
class NoiseSpec:
    """Independent Gaussian noise, ``N(means, diag(variances))``.

    ``names`` defaults to ``"e_" + variable`` for each endogenous variable.
    """

    means: tuple
    variances: tuple
    names: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "means", tuple(float(v) for v in self.means))
        object.__setattr__(self, "variances", tuple(float(v) for v in self.variances))
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))

    def sigma_proxy(self) -> float:
        """Smallest sigma^2 with diag(variances) <= sigma^2 I."""
        return max(self.variances, default=0.0)


@dataclass(frozen=True)
class ScmModel:
    """Immutable structural causal model ``x = f(x, e)``."""

    endogenous_names: tuple
    mechanisms: tuple
    noise: NoiseSpec

    def __post_init__(self):
        object.__setattr__(self, "endogenous_names", tuple(self.endogenous_names))
        object.__setattr__(self, "mechanisms", tuple(self.mechanisms))

    @property
    def n(self) -> int:
        return len(self.endogenous_names)

    @property
    def exogenous_names(self) -> tuple:
        if self.noise.names is not None:
            return self.noise.names
        return tuple("e_" + name for name in self.endogenous_names)

    @property
    def n_noise(self) -> int:
        return len(self.noise.means)

    def index(self, name: str) -> int:
        try:
            return self.endogenous_names.index(name)
        except ValueError:
            raise KeyError(f"unknown variable {name!r}") from None

    def symbols(self) -> dict:
        table = {name: ("var", i) for i, name in enumerate(self.endogenous_names)}
        table.update({name: ("noise", j) for j, name in enumerate(self.exogenous_names)})
        return table

    @property
    def is_linear(self) -> bool:
        return all(isinstance(m, LinearRow) for m in self.mechanisms)

    def noise_index(self, i: int) -> int:
        mech = self.mechanisms[i]
        return i if mech.noise_index is None else mech.noise_index

    @cached_property
    def _linear(self):
        n, d = self.n, self.n_noise
        A = np.zeros((n, n))
        b = np.zeros(n)
        D = np.zeros((n, d))
        for i, mech in enumerate(self.mechanisms):
            A[i] = mech.coefficients
            b[i] = mech.offset
            D[i, self.noise_index(i)] = mech.noise_coefficient
        for arr in (A, b, D):
            arr.setflags(write=False)
        return A, b, D

    def linear_form(self):
        """Return ``(A, b, D)`` with ``f(x, e) = A x + b + D e``.

        Raises
        ------
        NonLinearModel
            If any mechanism is an expression.
        """
        if not self.is_linear:
            bad = [self.endogenous_names[i] for i, m in enumerate(self.mechanisms)
                   if not isinstance(m, LinearRow)]
            raise NonLinearModel(f"expression mechanisms for {', '.join(bad)}")
        return self._linear

    def evaluate(self, x, e, rows: Optional[Sequence[int]] = None):
        """Evaluate ``f(x, e)`` (or only the coordinates in ``rows``).

        Coordinates live on the last axis of ``x`` and ``e``; leading axes are
        treated as a batch.
        """
        x = np.asarray(x, dtype=float)
        e = np.asarray(e, dtype=float)
        if self.is_linear:
            A, b, D = self._linear
            if rows is not None:
                rows = list(rows)
                A, b, D = A[rows], b[rows], D[rows]
            return x @ A.T + b + e @ D.T
        rows = range(self.n) if rows is None else rows
        out = []
        for i in rows:
            mech = self.mechanisms[i]
            if isinstance(mech, LinearRow):
                val = (x @ np.asarray(mech.coefficients) + mech.offset
                       + mech.noise_coefficient * e[..., self.noise_index(i)])
            else:
                val = ex.eval_expr(mech.node, x, e)
            out.append(np.broadcast_to(val, x.shape[:-1]))
        return np.stack(out, axis=-1) if out else np.zeros(x.shape[:-1] + (0,))


def linear_model(names, A, b, variances, noise_coefficients=None, means=None) -> ScmModel:
    """Convenience constructor for ``x = A x + b + diag(noise_coefficients) e``."""
    n = len(names)
    A = np.asarray(A, dtype=float).reshape(n, n)
    b = np.asarray(b, dtype=float).reshape(n)
    g = np.ones(n) if noise_coefficients is None else np.asarray(noise_coefficients, float)
    mechs = tuple(LinearRow(tuple(A[i]), float(b[i]), float(g[i])) for i in range(n))
    means = (0.0,) * n if means is None else tuple(means)
    return ScmModel(tuple(names), mechs, NoiseSpec(means, tuple(variances)))


def expr_model(names, formulas, variances, means=None) -> ScmModel:
    """Build a model whose mechanisms are all parsed from formula strings."""
    n = len(names)
    means = (0.0,) * n if means is None else tuple(means)
    skeleton = ScmModel(tuple(names), (), NoiseSpec(means, tuple(variances)))
    table = skeleton.symbols()
    mechs = tuple(ExprMechanism(ex.parse_expr(f, table)) for f in formulas)
    return ScmModel(tuple(names), mechs, skeleton.noise)


# ---------------------------------------------------------------------------
# validation and parents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def _finite(v) -> bool:
    return isinstance(v, (int, float)) and math.isfinite(v)


def validate_model(model: ScmModel) -> ValidationReport:
    """Check structural well-formedness; never raises."""
    out = []
    names = tuple(model.endogenous_names)
    n = len(names)
    if any(not isinstance(nm, str) or not nm for nm in names):
        out.append("empty variable name")
    if len(set(names)) != n:
        dupes = sorted({nm for nm in names if names.count(nm) > 1}, key=str)
        out.append(f"duplicate variable names: {', '.join(map(str, dupes))}")
    if len(model.mechanisms) != n:
        out.append(f"mechanism count mismatch: {len(model.mechanisms)} mechanisms "
                   f"for {n} variables")

    noise = model.noise
    d = len(noise.means)
    if len(noise.variances) != d:
        out.append("noise means and variances differ in length")
    if noise.names is None and d != n:
        out.append(f"noise dimension mismatch: {d} exogenous terms for {n} variables")
    if noise.names is not None and len(noise.names) != d:
        out.append("noise names and means differ in length")
    for j, v in enumerate(noise.variances):
        if not _finite(v) or v < 0:
            out.append(f"noise variance {j} must be finite and nonnegative, got {v}")
    for j, m in enumerate(noise.means):
        if not _finite(m):
            out.append(f"noise mean {j} is not finite")

    exo = model.exogenous_names if (noise.names is not None or d == n) else ()
    for i, mech in enumerate(model.mechanisms):
        label = names[i] if i < n else f"#{i}"
        if isinstance(mech, LinearRow):
            if len(mech.coefficients) != n:
                out.append(f"mechanism {label}: coefficient vector has length "
                           f"{len(mech.coefficients)}, expected {n}")
            if not all(_finite(c) for c in mech.coefficients):
                out.append(f"mechanism {label}: non-finite coefficient")
            if not (_finite(mech.offset) and _finite(mech.noise_coefficient)):
                out.append(f"mechanism {label}: non-finite offset or noise coefficient")
            j = i if mech.noise_index is None else mech.noise_index
            if not 0 <= j < d:
                out.append(f"mechanism {label}: noise index {j} out of range")
        elif isinstance(mech, ExprMechanism):
            for node in ex.walk(mech.node):
                if isinstance(node, ex.VarRef):
                    if not (0 <= node.index < n and names[node.index] == node.name):
                        out.append(f"mechanism {label}: unresolved symbol {node.name!r}")
                elif isinstance(node, ex.NoiseRef):
                    if not (0 <= node.index < len(exo) and exo[node.index] == node.name):
                        out.append(f"mechanism {label}: unresolved symbol {node.name!r}")
                elif isinstance(node, ex.Constant) and not _finite(node.value):
                    out.append(f"mechanism {label}: non-finite constant")
        else:
            out.append(f"mechanism {label}: unknown mechanism type {type(mech).__name__}")
    return ValidationReport(tuple(out))


def ensure_valid(model: ScmModel) -> ScmModel:
    report = validate_model(model)
    if not report.ok:
        raise InvalidModel(report.violations)
    return model


@dataclass(frozen=True)
class ParentSet:
    """Per coordinate: referenced endogenous and exogenous indices."""

    endogenous: tuple
    exogenous: tuple

    def names(self, model: ScmModel, i: int) -> set:
        return ({model.endogenous_names[k] for k in self.endogenous[i]}
                | {model.exogenous_names[j] for j in self.exogenous[i]})


def syntactic_parents(model: ScmModel) -> ParentSet:
    """Parents as the symbols each mechanism mentions.

    This is a superset of the semantic parents: a coefficient that cancels
    out algebraically is still reported.
    """
    endo, exo = [], []
    for i, mech in enumerate(model.mechanisms):
        if isinstance(mech, LinearRow):
            endo.append(frozenset(k for k, c in enumerate(mech.coefficients) if c != 0))
            exo.append(frozenset([model.noise_index(i)] if mech.noise_coefficient != 0 else []))
        else:
            nodes = list(ex.walk(mech.node))
            endo.append(frozenset(nd.index for nd in nodes if isinstance(nd, ex.VarRef)))
            exo.append(frozenset(nd.index for nd in nodes if isinstance(nd, ex.NoiseRef)))
    return ParentSet(tuple(endo), tuple(exo))


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

def model_to_dict(model: ScmModel) -> dict:
    ensure_valid(model)
    if model.noise.names is not None and model.noise.names != model.exogenous_names:
        raise ModelSchemaError("noise", "custom exogenous names cannot be serialized")
    mechs = []
    for i, mech in enumerate(model.mechanisms):
        if isinstance(mech, LinearRow):
            if mech.noise_index not in (None, i):
                raise ModelSchemaError(f"mechanisms[{i}]", "shared noise cannot be serialized")
            mechs.append({"type": "linear", "coefficients": list(mech.coefficients),
                          "offset": mech.offset,
                          "noise_coefficient": mech.noise_coefficient})
        else:
            mechs.append({"type": "expr", "formula": ex.to_string(mech.node)})
    return {
        "variables": list(model.endogenous_names),
        "mechanisms": mechs,
        "noise": {"means": list(model.noise.means),
                  "variances": list(model.noise.variances)},
    }


def dumps_model(model: ScmModel) -> str:
    return json.dumps(model_to_dict(model), indent=2) + "\n"


def _number(value, fieldname):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelSchemaError(fieldname, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ModelSchemaError(fieldname, "must be finite")
    return float(value)


def _numbers(value, fieldname, length=None):
    if not isinstance(value, list):
        raise ModelSchemaError(fieldname, "expected a list of numbers")
    if length is not None and len(value) != length:
        raise ModelSchemaError(fieldname, f"expected {length} entries, got {len(value)}")
    return tuple(_number(v, f"{fieldname}[{k}]") for k, v in enumerate(value))


def model_from_dict(data) -> ScmModel:
    if not isinstance(data, dict):
        raise ModelSchemaError("<root>", "expected a JSON object")
    for key in ("variables", "mechanisms", "noise"):
        if key not in data:
            raise ModelSchemaError(key, "missing")
    names = data["variables"]
    if not isinstance(names, list) or not all(isinstance(v, str) and v for v in names):
        raise ModelSchemaError("variables", "expected a list of nonempty strings")
    if len(set(names)) != len(names):
        raise ModelSchemaError("variables", "names must be unique")
    n = len(names)
    noise = data["noise"]
    if not isinstance(noise, dict):
        raise ModelSchemaError("noise", "expected an object")
    for key in ("means", "variances"):
        if key not in noise:
            raise ModelSchemaError(f"noise.{key}", "missing")
    means = _numbers(noise["means"], "noise.means", n)
    variances = _numbers(noise["variances"], "noise.variances", n)
    if any(v < 0 for v in variances):
        raise ModelSchemaError("noise.variances", "must be nonnegative")
    spec = NoiseSpec(means, variances)

    raw = data["mechanisms"]
    if not isinstance(raw, list):
        raise ModelSchemaError("mechanisms", "expected a list")
    if len(raw) != n:
        raise ModelSchemaError("mechanisms", f"expected {n} mechanisms, got {len(raw)}")
    table = ScmModel(tuple(names), (), spec).symbols()
    mechs = []
    for i, m in enumerate(raw):
        where = f"mechanisms[{i}]"
        if not isinstance(m, dict) or m.get("type") not in ("linear", "expr"):
            raise ModelSchemaError(f"{where}.type", "expected 'linear' or 'expr'")
        if m["type"] == "linear":
            coefs = _numbers(m.get("coefficients"), f"{where}.coefficients", n)
            mechs.append(LinearRow(coefs,
                                   _number(m.get("offset", 0.0), f"{where}.offset"),
                                   _number(m.get("noise_coefficient", 1.0),
                                           f"{where}.noise_coefficient")))
        else:
            formula = m.get("formula")
            if not isinstance(formula, str):
                raise ModelSchemaError(f"{where}.formula", "expected a string")
            try:
                mechs.append(ExprMechanism(ex.parse_expr(formula, table)))
            except ExprError as err:
                raise ModelSchemaError(f"{where}.formula", str(err)) from err
    return ScmModel(tuple(names), tuple(mechs), spec)


def loads_model(text: str) -> ScmModel:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ModelParseError(err.msg, err.lineno, err.colno) from err
    return model_from_dict(data)


def load_model(path) -> ScmModel:
    return loads_model(Path(path).read_text(encoding="utf-8"))


def save_model(model: ScmModel, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")
