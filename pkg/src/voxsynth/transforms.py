"""Reversible per-column encodings for generator training.

Continuous columns are normalized mode-specifically: an EM-fitted Gaussian
mixture assigns each value a mode (sampled from posterior responsibilities)
and a scalar offset ``alpha = (value - mu_mode) / (4 * sigma_mode)`` clipped
to [-1, 1].  Discrete columns become one-hot blocks.  A Gaussian-copula
pre-transform (empirical CDF -> standard normal) can be composed in front of
the mixture step for the copula-flavored generator.

All constants here (mode-weight pruning at 0.005, k-means++ EM init, the
midpoint empirical-CDF convention, the probability clip at 1/(2n)) are
implementation choices, documented where they apply.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr

from .errors import ParseError, SchemaMismatch
from .rng import derive_seed, spawn
from .tabular import CONTINUOUS, Column, Schema, Table

SIGMA_FLOOR = 1e-6
WEIGHT_PRUNE = 0.005
EM_MAX_ITER = 100
EM_TOL = 1e-6


# ---------------------------------------------------------------------------
# Standard-normal quantile
# ---------------------------------------------------------------------------

# Acklam's rational approximation of the inverse normal CDF (|relative
# error| < 1.15e-9 on its own), refined by one Halley step against the
# exact CDF, which brings it to machine precision.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def norm_quantile(p):
    """Inverse standard-normal CDF for p in (0, 1), vectorized."""
    p = np.asarray(p, dtype=np.float64)
    scalar = p.ndim == 0
    p = np.atleast_1d(p)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("norm_quantile requires probabilities in (0, 1)")

    x = np.empty_like(p)
    low = p < _P_LOW
    high = p > 1.0 - _P_LOW
    mid = ~(low | high)

    if np.any(low):
        q = np.sqrt(-2.0 * np.log(p[low]))
        x[low] = _tail_poly(q)
    if np.any(high):
        q = np.sqrt(-2.0 * np.log(1.0 - p[high]))
        x[high] = -_tail_poly(q)
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        num = ((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x[mid] = num * q / den

    # One Halley refinement: e = Phi(x) - p, with Phi from scipy (exact).
    e = ndtr(x) - p
    u = e * np.sqrt(2.0 * np.pi) * np.exp(x * x / 2.0)
    x = x - u / (1.0 + x * u / 2.0)
    return float(x[0]) if scalar else x


def _tail_poly(q):
    num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
    den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
    return num / den


# ---------------------------------------------------------------------------
# Variational-style Gaussian mixture normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VgmModel:
    """Retained mixture modes, sorted by mean ascending.

    Invariants: weights sum to 1 within 1e-9, every std >= SIGMA_FLOOR.
    """

    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    @property
    def n_modes(self) -> int:
        return len(self.weights)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VgmModel":
        return cls(
            weights=np.asarray(d["weights"], dtype=np.float64),
            means=np.asarray(d["means"], dtype=np.float64),
            stds=np.asarray(d["stds"], dtype=np.float64),
        )


def fit_vgm(column, max_modes: int = 10, seed: int = 0) -> VgmModel:
    """Fit a Gaussian mixture to one column by EM with BIC mode selection.

    Plain EM cannot shrink surplus components to zero the way the
    variational-Bayes mixture it stands in for does, so the mode count is
    chosen by fitting K = 1..max_modes (k-means++ seeded, at most 100 EM
    iterations, converged when the log-likelihood improves by < 1e-6) and
    keeping the K with the lowest BIC (ties to the smaller K).  Components
    of the winning fit with weight < 0.005 are pruned and the rest
    renormalized.  Each fit asserts its log-likelihood is nondecreasing.

    A constant column degenerates to a single mode with std SIGMA_FLOOR.
    """
    x = np.asarray(column, dtype=np.float64).ravel()
    if x.size == 0:
        raise ParseError(0, "<column>", "cannot fit a mixture to an empty column")
    if not np.all(np.isfinite(x)):
        raise ParseError(int(np.flatnonzero(~np.isfinite(x))[0]), "<column>",
                         "non-finite value")
    if max_modes < 1:
        raise ValueError("max_modes must be >= 1")

    n = x.size
    k_cap = int(min(max_modes, np.unique(x).size))
    if k_cap == 1 or float(np.std(x)) == 0.0:
        return VgmModel(
            weights=np.array([1.0]),
            means=np.array([float(np.mean(x))]),
            stds=np.array([max(float(np.std(x)), SIGMA_FLOOR)]),
        )

    best = None
    best_bic = np.inf
    for k in range(1, k_cap + 1):
        weights, means, stds, ll = _em_fit(x, k, spawn(seed, "vgm-init", str(k)))
        bic = -2.0 * ll + (3 * k - 1) * np.log(n)
        if bic < best_bic - 1e-9:
            best_bic = bic
            best = (weights, means, stds)

    weights, means, stds = best
    keep = weights >= WEIGHT_PRUNE
    weights, means, stds = weights[keep], means[keep], stds[keep]
    weights = weights / weights.sum()
    order = np.argsort(means, kind="stable")
    return VgmModel(weights=weights[order], means=means[order], stds=stds[order])


def _em_fit(x: np.ndarray, k: int, rng: np.random.Generator):
    """One EM run with k components; returns (weights, means, stds, loglik)."""
    n = x.size
    means = _kmeanspp_centers(x, k, rng)
    stds = np.full(k, max(float(np.std(x)), SIGMA_FLOOR))
    weights = np.full(k, 1.0 / k)

    prev_ll = -np.inf
    ll = prev_ll
    for _ in range(EM_MAX_ITER):
        log_comp = (
            -0.5 * ((x[:, None] - means[None, :]) / stds[None, :]) ** 2
            - np.log(stds[None, :])
            - 0.5 * np.log(2.0 * np.pi)
            + np.log(weights[None, :])
        )
        log_norm = logsumexp(log_comp, axis=1)
        ll = float(np.sum(log_norm))
        assert ll >= prev_ll - 1e-9 * (1.0 + abs(prev_ll)), \
            f"EM log-likelihood decreased: {prev_ll} -> {ll}"
        resp = np.exp(log_comp - log_norm[:, None])

        mass = resp.sum(axis=0)
        safe = np.maximum(mass, 1e-12)
        weights = mass / n
        means = (resp * x[:, None]).sum(axis=0) / safe
        var = (resp * (x[:, None] - means[None, :]) ** 2).sum(axis=0) / safe
        stds = np.maximum(np.sqrt(var), SIGMA_FLOOR)

        if ll - prev_ll < EM_TOL and np.isfinite(prev_ll):
            break
        prev_ll = ll
    return weights, means, stds, ll


def _kmeanspp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding over scalar values (no Lloyd iterations)."""
    centers = [x[rng.integers(len(x))]]
    for _ in range(k - 1):
        d2 = np.min((x[:, None] - np.asarray(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0.0:  # all remaining points coincide with a center
            centers.append(centers[-1])
            continue
        probs = d2 / total
        centers.append(x[np.searchsorted(np.cumsum(probs), rng.random())])
    return np.asarray(centers, dtype=np.float64)


def vgm_encode(model: VgmModel, values, seed: int = 0):
    """Encode values as (alpha in [-1, 1], mode index).

    The mode is sampled from the posterior responsibilities of each value
    (not argmax), preserving multimodality in the encoded distribution;
    alpha is the offset within the selected mode, clipped to [-1, 1].
    """
    x = np.atleast_1d(np.asarray(values, dtype=np.float64))
    log_comp = (
        -0.5 * ((x[:, None] - model.means[None, :]) / model.stds[None, :]) ** 2
        - np.log(model.stds[None, :])
        + np.log(model.weights[None, :])
    )
    log_norm = logsumexp(log_comp, axis=1)
    resp = np.exp(log_comp - log_norm[:, None])
    cum = np.cumsum(resp, axis=1)
    cum[:, -1] = 1.0  # guard rounding so searchsorted never overflows
    rng = spawn(seed, "vgm-mode")
    u = rng.random(len(x))
    modes = (cum < u[:, None]).sum(axis=1)
    alpha = (x - model.means[modes]) / (4.0 * model.stds[modes])
    alpha = np.clip(alpha, -1.0, 1.0)
    if np.ndim(values) == 0:
        return float(alpha[0]), int(modes[0])
    return alpha, modes


def vgm_decode(model: VgmModel, alpha, mode):
    """Invert the mode-specific normalization: mu_mode + 4 * sigma_mode * alpha."""
    a = np.asarray(alpha, dtype=np.float64)
    m = np.asarray(mode, dtype=np.intp)
    if np.any(m < 0) or np.any(m >= model.n_modes):
        raise IndexError(f"mode index out of range (model has {model.n_modes} modes)")
    out = model.means[m] + 4.0 * model.stds[m] * a
    return float(out) if np.ndim(alpha) == 0 and np.ndim(mode) == 0 else out


# ---------------------------------------------------------------------------
# Gaussian copula marginal transform
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CopulaModel:
    """Empirical-CDF marginal transform for one continuous column.

    The CDF uses the midpoint convention F(x_(i)) = (i - 0.5) / n with
    linear interpolation between order statistics (tied values share their
    averaged rank).  Probabilities are clipped symmetrically to
    [eps, 1 - eps] with eps = 1 / (2n), so the Gaussian image is bounded.
    """

    knots: np.ndarray   # strictly increasing unique sample values
    probs: np.ndarray   # strictly increasing averaged midpoint ranks
    eps: float

    @classmethod
    def fit(cls, column) -> "CopulaModel":
        x = np.asarray(column, dtype=np.float64).ravel()
        if x.size == 0:
            raise ParseError(0, "<column>", "cannot fit a copula to an empty column")
        n = x.size
        order = np.sort(x)
        ranks = (np.arange(1, n + 1) - 0.5) / n
        knots, start = np.unique(order, return_index=True)
        # average the midpoint ranks over each run of tied values
        stops = np.append(start[1:], n)
        probs = np.array([ranks[a:b].mean() for a, b in zip(start, stops)])
        return cls(knots=knots, probs=probs, eps=1.0 / (2.0 * n))

    def to_gaussian(self, values):
        p = np.interp(np.asarray(values, dtype=np.float64), self.knots, self.probs)
        p = np.clip(p, self.eps, 1.0 - self.eps)
        return norm_quantile(p)

    def from_gaussian(self, z):
        p = ndtr(np.asarray(z, dtype=np.float64))
        p = np.clip(p, self.eps, 1.0 - self.eps)
        out = np.interp(p, self.probs, self.knots)
        return float(out) if np.ndim(z) == 0 else out

    def to_dict(self) -> dict:
        return {"knots": self.knots.tolist(), "probs": self.probs.tolist(),
                "eps": self.eps}

    @classmethod
    def from_dict(cls, d: dict) -> "CopulaModel":
        return cls(knots=np.asarray(d["knots"], dtype=np.float64),
                   probs=np.asarray(d["probs"], dtype=np.float64),
                   eps=float(d["eps"]))


def copula_map(model: CopulaModel, value, direction: str):
    """Map between data space and Gaussian space through the empirical CDF."""
    if direction == "to_gaussian":
        out = model.to_gaussian(value)
        return float(out) if np.ndim(value) == 0 else out
    if direction == "from_gaussian":
        return model.from_gaussian(value)
    raise ValueError(f"unknown direction {direction!r}")


# ---------------------------------------------------------------------------
# Whole-table codec
# ---------------------------------------------------------------------------

@dataclass
class ColumnCodec:
    name: str
    kind: str                      # "continuous" | "discrete"
    vgm: VgmModel | None = None
    copula: CopulaModel | None = None
    categories: tuple | None = None

    @property
    def width(self) -> int:
        if self.kind == CONTINUOUS:
            return 1 + self.vgm.n_modes
        return len(self.categories)


class TableCodec:
    """Fitted per-column encoders mapping a Table to a continuous matrix.

    Encoded row layout, in schema order: each continuous column contributes
    ``[alpha, one-hot mode indicators]``; each discrete column contributes
    its one-hot block.  ``decode`` inverts ``encode`` row-wise.
    """

    VERSION = 1

    def __init__(self, schema: Schema, columns: list[ColumnCodec]):
        self.schema = schema
        self.columns = columns
        self.width = sum(c.width for c in columns)

    @classmethod
    def fit(cls, table: Table, max_modes: int = 10, seed: int = 0,
            use_copula: bool = False) -> "TableCodec":
        """Fit every column; with ``use_copula`` continuous columns are first
        mapped through their empirical-CDF Gaussian transform, and the
        mixture is fitted on the Gaussian image."""
        codecs = []
        for col in table.schema.columns:
            if col.kind == CONTINUOUS:
                values = table.column(col.name)
                copula = CopulaModel.fit(values) if use_copula else None
                fit_values = copula.to_gaussian(values) if use_copula else values
                vgm = fit_vgm(fit_values, max_modes=max_modes,
                              seed=derive_seed(seed, "codec", col.name))
                codecs.append(ColumnCodec(col.name, CONTINUOUS, vgm=vgm, copula=copula))
            else:
                codecs.append(ColumnCodec(col.name, "discrete",
                                          categories=tuple(table.categories[col.name])))
        return cls(table.schema, codecs)

    def _check_schema(self, table: Table) -> None:
        if table.schema.names != self.schema.names:
            raise SchemaMismatch(
                f"codec fitted on columns {self.schema.names}, got {table.schema.names}"
            )
        for mine, theirs in zip(self.schema.columns, table.schema.columns):
            if mine.kind != theirs.kind:
                raise SchemaMismatch(f"column {mine.name!r}: kind changed")

    def encode(self, table: Table, seed: int = 0) -> np.ndarray:
        """Encode a schema-compatible table into an (n, width) matrix."""
        self._check_schema(table)
        n = table.n_rows
        out = np.zeros((n, self.width))
        pos = 0
        for cc in self.columns:
            if cc.kind == CONTINUOUS:
                values = table.column(cc.name)
                if cc.copula is not None and n:
                    values = cc.copula.to_gaussian(values)
                alpha, modes = vgm_encode(cc.vgm, values,
                                          seed=derive_seed(seed, "encode", cc.name))
                out[:, pos] = alpha
                out[np.arange(n), pos + 1 + modes] = 1.0
            else:
                index = {c: i for i, c in enumerate(cc.categories)}
                for r, v in enumerate(table.column(cc.name).tolist()):
                    if v not in index:
                        raise ParseError(r, cc.name, f"unknown category {v!r}")
                    out[r, pos + index[v]] = 1.0
            pos += cc.width
        return out

    def decode(self, matrix: np.ndarray) -> Table:
        """Invert :meth:`encode`: mode/category blocks are read by argmax."""
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != self.width:
            raise SchemaMismatch(
                f"expected width {self.width}, got {matrix.shape}"
            )
        n = matrix.shape[0]
        data = {}
        cats = {}
        pos = 0
        for cc in self.columns:
            block = matrix[:, pos:pos + cc.width]
            if cc.kind == CONTINUOUS:
                alpha = np.clip(block[:, 0], -1.0, 1.0)
                modes = np.argmax(block[:, 1:], axis=1) if n else np.empty(0, np.intp)
                values = vgm_decode(cc.vgm, alpha, modes) if n else np.empty(0)
                if cc.copula is not None and n:
                    values = cc.copula.from_gaussian(values)
                data[cc.name] = np.asarray(values, dtype=np.float64)
            else:
                idx = np.argmax(block, axis=1) if n else np.empty(0, np.intp)
                data[cc.name] = np.asarray([cc.categories[i] for i in idx], dtype=object)
                cats[cc.name] = tuple(cc.categories)
            pos += cc.width
        return Table(self.schema, data, categories=cats)

    # -- serialization (versioned JSON dict, field order as written) -----

    def to_dict(self) -> dict:
        cols = []
        for cc in self.columns:
            entry = {"name": cc.name, "kind": cc.kind}
            if cc.kind == CONTINUOUS:
                entry["vgm"] = cc.vgm.to_dict()
                entry["copula"] = None if cc.copula is None else cc.copula.to_dict()
            else:
                entry["categories"] = list(cc.categories)
            cols.append(entry)
        return {
            "version": self.VERSION,
            "schema": schema_to_dict(self.schema),
            "columns": cols,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TableCodec":
        if d.get("version") != cls.VERSION:
            raise SchemaMismatch(f"unsupported codec version {d.get('version')}")
        schema = schema_from_dict(d["schema"])
        cols = []
        for entry in d["columns"]:
            if entry["kind"] == CONTINUOUS:
                cols.append(ColumnCodec(
                    entry["name"], CONTINUOUS,
                    vgm=VgmModel.from_dict(entry["vgm"]),
                    copula=(None if entry["copula"] is None
                            else CopulaModel.from_dict(entry["copula"])),
                ))
            else:
                cols.append(ColumnCodec(entry["name"], "discrete",
                                        categories=tuple(entry["categories"])))
        return cls(schema, cols)


def transform_table(codec: TableCodec, table_or_matrix, direction: str, seed: int = 0):
    """Encode a Table to its training matrix, or decode a matrix back."""
    if direction == "encode":
        return codec.encode(table_or_matrix, seed=seed)
    if direction == "decode":
        return codec.decode(table_or_matrix)
    raise ValueError(f"unknown direction {direction!r}")


def schema_to_dict(schema: Schema) -> dict:
    return {
        "columns": [
            {"name": c.name, "kind": c.kind, "unit": c.unit,
             "categories": None if c.categories is None else list(c.categories)}
            for c in schema.columns
        ],
        "target_column": schema.target_column,
        "group_column": schema.group_column,
    }


def schema_from_dict(d: dict) -> Schema:
    cols = tuple(
        Column(e["name"], e["kind"], unit=e.get("unit", ""),
               categories=None if e.get("categories") is None else tuple(e["categories"]))
        for e in d["columns"]
    )
    return Schema(cols, target_column=d["target_column"],
                  group_column=d.get("group_column"))
