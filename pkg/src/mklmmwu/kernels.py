"""Base kernel family and on-demand signed Gram columns.

A bound accessor serves columns of G_i = Y (K_i + ridge I) Y / r_i for each
kernel i without ever materializing an n x n matrix: column j costs
O(n * cost(kernel)) and the whole working set stays O(m * n).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset
from .errors import DegenerateKernel

#: Gaussian bandwidths 2^0, 2^(1/2), ..., 2^4.
GAUSSIAN_BANDWIDTHS = tuple(float(2.0 ** (k / 2.0)) for k in range(9))
POLYNOMIAL_DEGREES = (1, 2, 3)


@dataclass(frozen=True)
class KernelSpec:
    """One base kernel: Gaussian exp(-|x-z|^2 / (2 sigma^2)) or (x.z + 1)^degree.

    `feature` restricts evaluation to a single coordinate (None = all).
    `r` (trace normalizer) and `ridge` (2-norm soft-margin diagonal) are
    filled in by `bind` once the spec is attached to a training set.
    """

    kind: str  # "gaussian" | "poly"
    param: float  # bandwidth sigma or polynomial degree
    feature: int | None = None
    r: float | None = None
    ridge: float = 0.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "poly"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian" and not self.param > 0.0:
            raise ValueError("gaussian bandwidth must be positive")
        if self.kind == "poly":
            if self.param < 1 or self.param != int(self.param):
                raise ValueError("polynomial degree must be a positive integer")
        if self.ridge < 0.0:
            raise ValueError("ridge must be nonnegative")
        if self.r is not None and not self.r > 0.0:
            raise ValueError("trace normalizer must be positive")


def _int_power(base: np.ndarray, degree: int) -> np.ndarray:
    """base**degree by repeated multiplication, identical on every code path."""
    out = base.copy()
    for _ in range(degree - 1):
        out *= base
    return out


def eval_kernel(spec: KernelSpec, x, z) -> float:
    """Raw kernel value (no trace normalization, no ridge)."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if spec.feature is not None:
        x = x[spec.feature : spec.feature + 1]
        z = z[spec.feature : spec.feature + 1]
    if spec.kind == "gaussian":
        diff = x - z
        return float(np.exp(-float(diff @ diff) / (2.0 * spec.param**2)))
    out = base = float(x @ z) + 1.0
    for _ in range(int(spec.param) - 1):
        out *= base
    return float(out)


def make_default_family(d: int, per_feature: bool = False) -> list[KernelSpec]:
    """3 polynomial kernels (degree 1..3) plus 9 Gaussians per block.

    With `per_feature` the 12-kernel block is repeated once per feature
    index, each block restricted to that single feature (12*d specs).
    """
    if d < 1:
        raise ValueError("d must be at least 1")

    def block(feature):
        specs = [KernelSpec("poly", float(p), feature) for p in POLYNOMIAL_DEGREES]
        specs += [KernelSpec("gaussian", bw, feature) for bw in GAUSSIAN_BANDWIDTHS]
        return specs

    if not per_feature:
        return block(None)
    family: list[KernelSpec] = []
    for f in range(d):
        family.extend(block(f))
    return family


def bind(specs, dataset: Dataset, C: float | None = None, margin_mode: str = "hard") -> "GramAccessor":
    """Attach specs to a training set: fix ridge and the unit-trace normalizer.

    Ridge is 1/C in 2-norm soft-margin mode and 0 in hard-margin mode; it is
    added to the kernel diagonal before trace normalization so the effective
    G_i keeps trace exactly 1.
    """
    if margin_mode not in ("hard", "l2"):
        raise ValueError(f"margin_mode must be 'hard' or 'l2', got {margin_mode!r}")
    if margin_mode == "l2":
        if C is None or not C > 0.0:
            raise ValueError("2-norm soft margin requires C > 0")
        ridge = 1.0 / C
    else:
        ridge = 0.0
    pts = dataset.points
    if pts.min(initial=0.0) < -1e-9 or pts.max(initial=0.0) > 1.0 + 1e-9:
        raise ValueError("dataset must be scaled to [0,1] before binding")
    n = dataset.n
    row_sq = np.einsum("ij,ij->i", pts, pts)
    bound = []
    for spec in specs:
        if spec.kind == "gaussian":
            diag_sum = float(n)  # exp(0) on the diagonal
        elif spec.feature is None:
            diag_sum = float(_int_power(row_sq + 1.0, int(spec.param)).sum())
        else:
            diag_sum = float(_int_power(np.square(pts[:, spec.feature]) + 1.0, int(spec.param)).sum())
        r = diag_sum + n * ridge
        if not r > 0.0:
            raise DegenerateKernel(f"trace normalizer {r} for spec {spec}")
        bound.append(replace(spec, r=r, ridge=ridge))
    return GramAccessor(bound, dataset)


class GramAccessor:
    """Immutable column server for the signed, regularized, trace-normalized Grams.

    Column j of kernel i has entries y_j * y_k * (kappa_i(x_j, x_k)
    + ridge * [j == k]) / r_i. Specs are grouped by (kind, feature scope) so
    `signed_columns_all` produces the full (m, n) column block with a handful
    of vectorized passes.
    """

    def __init__(self, bound_specs, dataset: Dataset):
        self.specs = tuple(bound_specs)
        self.dataset = dataset
        self.m = len(self.specs)
        self.n = dataset.n
        if self.m == 0:
            raise ValueError("at least one kernel spec is required")
        self._X = np.ascontiguousarray(dataset.points)
        self._Xt = np.ascontiguousarray(self._X.T)
        self._y = np.ascontiguousarray(dataset.labels)
        self._row_sq = np.einsum("ij,ij->i", self._X, self._X)
        self._inv_r = np.array([1.0 / s.r for s in self.specs])
        self._ridge = np.array([s.ridge for s in self.specs])

        ga, pa, gf, pf = [], [], [], []
        for i, s in enumerate(self.specs):
            if s.kind == "gaussian":
                (ga if s.feature is None else gf).append(i)
            else:
                (pa if s.feature is None else pf).append(i)
        self._ga_rows = np.array(ga, dtype=np.intp)
        self._ga_coef = np.array([-0.5 / self.specs[i].param ** 2 for i in ga])
        self._pa_rows = np.array(pa, dtype=np.intp)
        self._pa_deg = np.array([float(self.specs[i].param) for i in pa])
        self._gf_rows = np.array(gf, dtype=np.intp)
        self._gf_coef = np.array([-0.5 / self.specs[i].param ** 2 for i in gf])
        self._gf_feat = np.array([self.specs[i].feature for i in gf], dtype=np.intp)
        self._pf_rows = np.array(pf, dtype=np.intp)
        self._pf_deg = np.array([float(self.specs[i].param) for i in pf])
        self._pf_feat = np.array([self.specs[i].feature for i in pf], dtype=np.intp)

    @property
    def labels(self) -> np.ndarray:
        return self._y

    def signed_column(self, i: int, j: int) -> np.ndarray:
        """Column j of kernel i, one vectorized pass over the n points."""
        spec = self.specs[i]
        X = self._X
        x = X[j]
        if spec.kind == "gaussian":
            if spec.feature is None:
                sqd = (self._row_sq + self._row_sq[j]) - 2.0 * (X @ x)
            else:
                sqd = np.square(X[:, spec.feature] - x[spec.feature])
            col = np.exp(sqd * (-0.5 / spec.param**2))
        else:
            if spec.feature is None:
                base = (X @ x) + 1.0
            else:
                base = X[:, spec.feature] * x[spec.feature] + 1.0
            col = _int_power(base, int(spec.param))
        col[j] += spec.ridge
        col *= 1.0 / spec.r
        col *= self._y * self._y[j]
        return col

    def signed_columns_all(self, j: int, out: np.ndarray | None = None) -> np.ndarray:
        """Column j of every kernel as an (m, n) block; `out` enables buffer reuse."""
        if out is None:
            out = np.empty((self.m, self.n))
        X = self._X
        x = X[j]
        if self._ga_rows.size or self._pa_rows.size:
            dot = X @ x
        if self._ga_rows.size:
            sqd = (self._row_sq + self._row_sq[j]) - 2.0 * dot
            out[self._ga_rows] = np.exp(self._ga_coef[:, None] * sqd[None, :])
        if self._pa_rows.size:
            base = dot + 1.0
            cur = base.copy()
            top = int(self._pa_deg.max())
            for deg in range(1, top + 1):
                for row in self._pa_rows[self._pa_deg == deg]:
                    out[row] = cur
                if deg < top:
                    cur *= base
        if self._gf_rows.size:
            d2t = np.square(self._Xt - x[:, None])  # (d, n), rows contiguous
            base = d2t[self._gf_feat]
            base *= self._gf_coef[:, None]
            np.exp(base, out=base)
            out[self._gf_rows] = base
        if self._pf_rows.size:
            prod_t = self._Xt * x[:, None]
            base = prod_t[self._pf_feat] + 1.0
            cur = base.copy()
            block = np.empty_like(base)
            top = int(self._pf_deg.max())
            for deg in range(1, top + 1):
                mask = self._pf_deg == deg
                if mask.any():
                    block[mask] = cur[mask]
                if deg < top:
                    cur *= base
            out[self._pf_rows] = block
        out[:, j] += self._ridge
        out *= self._inv_r[:, None]
        out *= (self._y * self._y[j])[None, :]
        return out

    def dense_signed_gram(self, i: int) -> np.ndarray:
        """Full G_i assembled column by column. Test/oracle support only."""
        if self.n > 512:
            raise ValueError("dense Gram assembly is capped at n <= 512")
        return np.column_stack([self.signed_column(i, j) for j in range(self.n)])


def signed_column(accessor: GramAccessor, i: int, j: int) -> np.ndarray:
    return accessor.signed_column(i, j)


def combined_kernel_row(specs, coeffs, X_ref: np.ndarray, x: np.ndarray) -> np.ndarray:
    """sum_i coeffs[i] * kappa_i(X_ref[k], x) for every reference row k.

    Raw kernel values: no ridge, no label signs. Used by prediction, where
    coeffs is mu_i / r_i.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    k = X_ref.shape[0]
    acc = np.zeros(k)
    ga, pa, gf, pf = [], [], [], []
    for i, s in enumerate(specs):
        if coeffs[i] == 0.0:
            continue
        if s.kind == "gaussian":
            (ga if s.feature is None else gf).append(i)
        else:
            (pa if s.feature is None else pf).append(i)
    if ga or pa:
        dot = X_ref @ x
    if ga:
        sqd = np.einsum("ij,ij->i", X_ref, X_ref) + float(x @ x) - 2.0 * dot
        coef = np.array([-0.5 / specs[i].param ** 2 for i in ga])
        acc += coeffs[ga] @ np.exp(coef[:, None] * sqd[None, :])
    if pa:
        base = dot + 1.0
        cur = base.copy()
        degs = [int(specs[i].param) for i in pa]
        for deg in range(1, max(degs) + 1):
            for i, spec_deg in zip(pa, degs):
                if spec_deg == deg:
                    acc += coeffs[i] * cur
            if deg < max(degs):
                cur *= base
    if gf:
        feats = np.array([specs[i].feature for i in gf], dtype=np.intp)
        coef = np.array([-0.5 / specs[i].param ** 2 for i in gf])
        base = np.square(X_ref[:, feats] - x[feats])
        base *= coef[None, :]
        np.exp(base, out=base)
        acc += base @ coeffs[gf]
    if pf:
        feats = np.array([specs[i].feature for i in pf], dtype=np.intp)
        degs = np.array([int(specs[i].param) for i in pf])
        base = X_ref[:, feats] * x[feats] + 1.0
        cur = base.copy()
        top = int(degs.max())
        for deg in range(1, top + 1):
            mask = degs == deg
            if mask.any():
                acc += cur[:, mask] @ coeffs[np.array(pf)[mask]]
            if deg < top:
                cur *= base
    return acc
