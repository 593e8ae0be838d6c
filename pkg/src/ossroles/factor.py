"""Standardization, principal-axis factoring, oblique rotation and factor scores."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateMatrix, NoFactorsRetained, SchemaError, SingularCorrelation
from .metrics import METRIC_COLUMNS, METRIC_DESCRIPTIONS, MetricsMatrix
from .rotation import rotate_oblimin

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
HEYWOOD_CAP = 1.0 - 1e-6
STRONG_LOADING = 0.5
MODERATE_LOADING = 0.3

DEFAULT_ACTIVITY_LABELS = (
    "Knowledge Sharing",
    "Code Contribution",
    "Issue Coordination",
    "Progress Control",
    "Code Tweaking",
    "Issue Reporting",
)


@dataclass
class StandardizedMatrix:
    values: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    kept_columns: list[int]
    pruned: dict[int, str] = field(default_factory=dict)
    column_names: list[str] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Apply the fitted column selection and scaling to new rows."""
        X = np.asarray(X, dtype=float)[:, self.kept_columns]
        return (X - self.means) / self.sds


def standardize(
    matrix: MetricsMatrix | np.ndarray, column_names: Sequence[str] | None = None
) -> StandardizedMatrix:
    """Z-score every column with the population sd, pruning (numerically) constant columns."""
    if isinstance(matrix, MetricsMatrix):
        X = matrix.to_array()
        column_names = list(METRIC_COLUMNS)
    else:
        X = np.asarray(matrix, dtype=float)
    n, p = X.shape
    names = list(column_names) if column_names is not None else [f"x{i + 1}" for i in range(p)]
    if n < 2:
        raise DegenerateMatrix(f"need at least 2 rows to standardize, got {n}")

    kept, pruned = [], {}
    for j in range(p):
        col = X[:, j]
        scale = max(1.0, float(np.max(np.abs(col))))
        if np.ptp(col) <= 1e-12 * scale:
            pruned[j] = "zero variance"
            log.warning("pruning constant column %s", names[j])
        else:
            kept.append(j)
    if len(kept) < 2:
        raise DegenerateMatrix(f"only {len(kept)} non-constant column(s) remain")

    Xk = X[:, kept]
    means = Xk.mean(axis=0)
    centered = Xk - means
    sds = np.sqrt(np.mean(centered * centered, axis=0))
    Z = centered / sds
    # second pass removes the residual rounding in mean and variance
    m2 = Z.mean(axis=0)
    Z = Z - m2
    s2 = np.sqrt(np.mean(Z * Z, axis=0))
    Z = Z / s2
    return StandardizedMatrix(
        values=Z,
        means=means + m2 * sds,
        sds=sds * s2,
        kept_columns=kept,
        pruned=pruned,
        column_names=[names[j] for j in kept],
    )


def correlation(z: StandardizedMatrix | np.ndarray) -> np.ndarray:
    Z = z.values if isinstance(z, StandardizedMatrix) else np.asarray(z, dtype=float)
    R = Z.T @ Z / Z.shape[0]
    R = (R + R.T) / 2.0
    np.fill_diagonal(R, 1.0)
    return R


def kaiser_count(eigenvalues: Sequence[float], threshold: float = 1.0) -> int:
    return int(np.sum(np.asarray(eigenvalues) > threshold))


def squared_multiple_correlations(R: np.ndarray) -> np.ndarray:
    try:
        inv = np.linalg.inv(R)
        if not np.all(np.isfinite(inv)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        inv = np.linalg.pinv(R)
    with np.errstate(divide="ignore"):
        smc = 1.0 - 1.0 / np.diag(inv)
    return np.clip(np.nan_to_num(smc, nan=HEYWOOD_CAP), 0.0, HEYWOOD_CAP)


@dataclass
class PafResult:
    loadings: np.ndarray
    eigenvalues: np.ndarray
    communalities: np.ndarray
    k: int
    iterations: int
    converged: bool


def flip_signs(loadings: np.ndarray) -> np.ndarray:
    """Column signs making each column's largest-magnitude entry positive."""
    idx = np.argmax(np.abs(loadings), axis=0)
    signs = np.sign(loadings[idx, np.arange(loadings.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def paf(R: np.ndarray, max_iter: int = 100, tol: float = 1e-3, n_factors: int | None = None) -> PafResult:
    """Iterated principal-axis factoring of a correlation matrix.

    The factor count defaults to the number of eigenvalues of ``R`` itself
    strictly above 1.0. Communalities start at the squared multiple
    correlations and are iterated until their largest change is below ``tol``.
    """
    R = np.asarray(R, dtype=float)
    eigenvalues = np.linalg.eigvalsh(R)[::-1]
    k = kaiser_count(eigenvalues) if n_factors is None else n_factors
    if k == 0:
        raise NoFactorsRetained("no correlation-matrix eigenvalue exceeds 1.0")

    h2 = squared_multiple_correlations(R)
    converged = False
    loadings = np.zeros((R.shape[0], k))
    it = 0
    for it in range(1, max_iter + 1):
        reduced = R.copy()
        np.fill_diagonal(reduced, h2)
        vals, vecs = np.linalg.eigh(reduced)
        vals, vecs = vals[::-1][:k], vecs[:, ::-1][:, :k]
        loadings = vecs * np.sqrt(np.clip(vals, 0.0, None))
        new_h2 = np.minimum(np.sum(loadings**2, axis=1), HEYWOOD_CAP)
        delta = np.max(np.abs(new_h2 - h2))
        h2 = new_h2
        if delta < tol:
            converged = True
            break
    if not converged:
        log.warning("PAF did not converge in %d iterations", max_iter)
    # Heywood rows are rescaled so that the row sum of squares matches the cap
    row_ss = np.sum(loadings**2, axis=1)
    over = row_ss > HEYWOOD_CAP
    if np.any(over):
        loadings[over] *= np.sqrt(HEYWOOD_CAP / row_ss[over])[:, None]
    loadings = loadings * flip_signs(loadings)
    return PafResult(loadings, eigenvalues, np.sum(loadings**2, axis=1), k, it, converged)


def paf_extract(
    z: StandardizedMatrix, max_iter: int = 100, tol: float = 1e-3
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(unrotated loadings, eigenvalues, communalities)`` for standardized data."""
    res = paf(correlation(z), max_iter=max_iter, tol=tol)
    return res.loadings, res.eigenvalues, res.communalities


def rotate_oblique(loadings: np.ndarray, max_iter: int = 1000, tol: float = 1e-5) -> tuple[np.ndarray, np.ndarray]:
    res = rotate_oblimin(loadings, gamma=0.0, max_iter=max_iter, tol=tol)
    return res.pattern, res.phi


def score_weights(R: np.ndarray, structure: np.ndarray) -> np.ndarray:
    """Regression scoring weights ``R^-1 S``, with a small ridge when ``R`` is ill-conditioned."""
    R = np.asarray(R, dtype=float)
    if np.linalg.cond(R) > 1e12:
        log.warning("correlation matrix ill-conditioned, adding 1e-8 ridge")
        R = R + 1e-8 * np.eye(R.shape[0])
    try:
        W = np.linalg.solve(R, structure)
    except np.linalg.LinAlgError as exc:
        raise SingularCorrelation("correlation matrix is singular even with ridge") from exc
    if not np.all(np.isfinite(W)):
        raise SingularCorrelation("non-finite scoring weights")
    return W


def factor_scores(z: StandardizedMatrix | np.ndarray, loadings: np.ndarray, phi: np.ndarray,
                  R: np.ndarray | None = None) -> np.ndarray:
    """Thurstone regression scores ``Z R^-1 (Λ Φ)``."""
    Z = z.values if isinstance(z, StandardizedMatrix) else np.asarray(z, dtype=float)
    if R is None:
        R = correlation(Z)
    return Z @ score_weights(R, loadings @ phi)


@dataclass(frozen=True)
class ActivityLabels:
    """Factor index (1-based) to activity name; unnamed factors read ``FactorN``."""

    names: Mapping[int, str] = field(default_factory=dict)

    @classmethod
    def from_list(cls, names: Sequence[str]) -> "ActivityLabels":
        return cls({i + 1: n for i, n in enumerate(names)})

    @classmethod
    def defaults(cls) -> "ActivityLabels":
        return cls.from_list(DEFAULT_ACTIVITY_LABELS)

    def name(self, index: int) -> str:
        return self.names.get(index) or f"Factor{index}"

    def for_model(self, k: int) -> list[str]:
        return [self.name(i + 1) for i in range(k)]


@dataclass
class FactorModel:
    k: int
    eigenvalues: np.ndarray
    loadings: np.ndarray
    phi: np.ndarray
    communalities: np.ndarray
    scores: np.ndarray
    column_names: list[str]
    kept_columns: list[int]
    unrotated: np.ndarray
    paf_converged: bool = True
    rotation_converged: bool = True

    @property
    def uniqueness(self) -> np.ndarray:
        return 1.0 - self.communalities

    @property
    def variance_explained(self) -> float:
        return float(np.mean(self.communalities))

    @property
    def structure(self) -> np.ndarray:
        return self.loadings @ self.phi

    def to_json(self, labels: ActivityLabels | None = None) -> dict:
        labels = labels or ActivityLabels()
        return {
            "schema_version": SCHEMA_VERSION,
            "k": self.k,
            "factor_labels": labels.for_model(self.k),
            "column_names": self.column_names,
            "kept_columns": self.kept_columns,
            "eigenvalues": self.eigenvalues.tolist(),
            "loadings": self.loadings.tolist(),
            "phi": self.phi.tolist(),
            "communalities": self.communalities.tolist(),
            "uniqueness": self.uniqueness.tolist(),
            "variance_explained": self.variance_explained,
            "paf_converged": self.paf_converged,
            "rotation_converged": self.rotation_converged,
        }


def fit_factor_model(
    z: StandardizedMatrix,
    max_iter: int = 100,
    tol: float = 1e-3,
    rotation_max_iter: int = 1000,
    rotation_tol: float = 1e-5,
) -> FactorModel:
    R = correlation(z)
    res = paf(R, max_iter=max_iter, tol=tol)
    rot = rotate_oblimin(res.loadings, max_iter=rotation_max_iter, tol=rotation_tol)
    if not rot.converged:
        log.warning("oblimin rotation did not converge in %d iterations", rotation_max_iter)
    pattern, phi = rot.pattern, rot.phi
    # order factors by pattern sum of squares, then fix signs
    order = np.argsort(-np.sum(pattern**2, axis=0), kind="stable")
    pattern, phi = pattern[:, order], phi[np.ix_(order, order)]
    signs = flip_signs(pattern)
    pattern = pattern * signs
    phi = phi * np.outer(signs, signs)
    np.fill_diagonal(phi, 1.0)
    scores = factor_scores(z, pattern, phi, R)
    return FactorModel(
        k=res.k,
        eigenvalues=res.eigenvalues,
        loadings=pattern,
        phi=phi,
        communalities=res.communalities,
        scores=scores,
        column_names=list(z.column_names),
        kept_columns=list(z.kept_columns),
        unrotated=res.loadings,
        paf_converged=res.converged,
        rotation_converged=rot.converged,
    )


def congruence(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Tucker congruence between the columns of ``a`` and ``b`` (k_a x k_b)."""
    num = a.T @ b
    den = np.sqrt(np.outer(np.sum(a * a, axis=0), np.sum(b * b, axis=0)))
    return num / den


def matched_congruence(estimated: np.ndarray, planted: np.ndarray) -> np.ndarray:
    """Per planted factor, |congruence| with its best-matching estimated column (one-to-one)."""
    from itertools import permutations

    C = np.abs(congruence(estimated, planted))
    k = planted.shape[1]
    best, best_perm = -1.0, None
    for perm in permutations(range(estimated.shape[1]), k):
        total = sum(C[perm[j], j] for j in range(k))
        if total > best:
            best, best_perm = total, perm
    return np.array([C[best_perm[j], j] for j in range(k)])


def loading_flag(value: float) -> str:
    """Display flag for a loading: strong above 0.5, moderate above 0.3 up to 0.5."""
    if value > STRONG_LOADING:
        return "strong"
    if value > MODERATE_LOADING:
        return "moderate"
    return ""


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _metric_label(name: str) -> str:
    if name in METRIC_COLUMNS:
        return METRIC_DESCRIPTIONS[METRIC_COLUMNS.index(name)]
    return name


def report_factors(model: FactorModel, labels: ActivityLabels | None, directory: str | Path) -> tuple[Path, Path]:
    """Write ``loadings.csv`` (pattern, flags, h², u²) and ``phi.csv`` into ``directory``."""
    labels = labels or ActivityLabels()
    names = labels.for_model(model.k)
    directory = Path(directory)
    loadings_path, phi_path = directory / "loadings.csv", directory / "phi.csv"
    with loadings_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "description", *names, "h2", "u2", *(f"{n} flag" for n in names)])
        for i, col in enumerate(model.column_names):
            row = model.loadings[i]
            w.writerow([
                col,
                _metric_label(col),
                *map(_fmt, row),
                _fmt(model.communalities[i]),
                _fmt(model.uniqueness[i]),
                *(loading_flag(v) for v in row),
            ])
    with phi_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["factor", *names])
        for i, n in enumerate(names):
            w.writerow([n, *map(_fmt, model.phi[i])])
    return loadings_path, phi_path


def read_loadings_csv(path: str | Path) -> tuple[list[str], list[str], np.ndarray, np.ndarray, np.ndarray, list[list[str]]]:
    """Parse a loadings CSV into ``(metrics, factor_names, loadings, h2, u2, flags)``."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    if header[:2] != ["metric", "description"] or "h2" not in header:
        raise SchemaError(f"{path}: not a loadings table")
    h2_at = header.index("h2")
    names = header[2:h2_at]
    k = len(names)
    metrics = [r[0] for r in rows[1:]]
    L = np.array([[float(x) for x in r[2:h2_at]] for r in rows[1:]]).reshape(-1, k)
    h2 = np.array([float(r[h2_at]) for r in rows[1:]])
    u2 = np.array([float(r[h2_at + 1]) for r in rows[1:]])
    flags = [r[h2_at + 2:h2_at + 2 + k] for r in rows[1:]]
    return metrics, names, L, h2, u2, flags


def load_model_json(path: str | Path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"{path}: schema_version {data.get('schema_version')!r}, expected {SCHEMA_VERSION}")
    return data
