"""Covariance algebra over labelled positive-definite matrices.

Conditional covariances are Schur complements, regression coefficients are
ratios of them.  The array-level helpers accept stacks of matrices with shape
``(..., p, p)`` so that the Monte Carlo harness can evaluate an estimator on
thousands of sample covariances at once with the same code path used for a
single population matrix.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import CovarianceError, SingularBlockError

__all__ = [
    "CovarianceMatrix",
    "COND_LIMIT",
    "conditional_cov",
    "conditional_var",
    "partial_corr",
    "regression_coeffs",
    "implied_covariance",
    "IdentityResiduals",
    "regression_identity_residuals",
    "parse_covariance_csv",
    "read_covariance_csv",
    "format_covariance_csv",
]

COND_LIMIT = 1e12
SYMMETRY_TOL = 1e-9
PD_RATIO = 1e-10


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Symmetric positive-definite matrix with one label per row/column.

    Input is symmetrised by averaging with its transpose after checking that
    the asymmetry is below 1e-9.  Correlation matrices are accepted as is.
    """

    labels: tuple[str, ...]
    entries: np.ndarray

    def __post_init__(self):
        labels = tuple(str(v) for v in self.labels)
        m = np.array(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise CovarianceError(f"covariance must be square, got shape {m.shape}")
        if len(labels) != m.shape[0]:
            raise CovarianceError(f"{len(labels)} labels for a {m.shape[0]}x{m.shape[0]} matrix")
        if len(set(labels)) != len(labels):
            raise CovarianceError("covariance labels must be distinct")
        if not np.all(np.isfinite(m)):
            raise CovarianceError("covariance has non-finite entries")
        asym = np.max(np.abs(m - m.T)) if m.size else 0.0
        if asym > SYMMETRY_TOL:
            raise CovarianceError(f"covariance is not symmetric (max asymmetry {asym:.3g})")
        m = (m + m.T) / 2.0
        w = np.linalg.eigvalsh(m)
        if m.size and not w[0] > PD_RATIO * w[-1]:
            raise CovarianceError(
                f"covariance is not positive definite (eigenvalues {w[0]:.3g} .. {w[-1]:.3g})"
            )
        m.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "entries", m)
        object.__setattr__(self, "_pos", {v: i for i, v in enumerate(labels)})

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index(self, names) -> list[int]:
        out = []
        for v in ordered(self, names):
            if v not in self._pos:
                raise CovarianceError(f"unknown variable {v!r} (have {', '.join(self.labels)})")
            out.append(self._pos[v])
        return out

    def __getitem__(self, key) -> float:
        a, b = key
        i, j = self.index([a, b])
        return float(self.entries[i, j])

    def __contains__(self, v) -> bool:
        return v in self._pos

    def sub(self, names) -> "CovarianceMatrix":
        names = ordered(self, names)
        idx = self.index(names)
        return CovarianceMatrix(tuple(names), self.entries[np.ix_(idx, idx)])

    def rescale(self, v: str, c: float) -> "CovarianceMatrix":
        """Covariance of the variables after multiplying ``v`` by ``c``."""
        d = np.ones(self.dim)
        d[self.index([v])[0]] = c
        return CovarianceMatrix(self.labels, self.entries * np.outer(d, d))

    def __eq__(self, other):
        if not isinstance(other, CovarianceMatrix):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.entries, other.entries)

    def __repr__(self):
        return f"CovarianceMatrix(labels={self.labels!r})"


def ordered(cov: CovarianceMatrix, names) -> list[str]:
    """Turn a variable-set argument into an ordered list.

    Lists and tuples keep their order (it matters for vector quantities);
    unordered sets follow the matrix label order.
    """
    if names is None:
        return []
    if isinstance(names, str):
        return [names]
    if isinstance(names, (set, frozenset)):
        pos = cov._pos
        return sorted(names, key=lambda v: (pos.get(v, len(pos)), v))
    return list(names)


# --------------------------------------------------------------------------
# array level


def _take(S: np.ndarray, ia, ib) -> np.ndarray:
    return S[..., ia, :][..., :, ib]


def spd_solve(M: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``M X = B`` for symmetric ``M`` through its eigendecomposition.

    Returns the solution and the condition number of ``M`` (``inf`` when ``M``
    is not positive definite).  Works on stacks.
    """
    w, V = np.linalg.eigh(M)
    lo = w[..., 0]
    hi = w[..., -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(lo > 0, hi / np.where(lo > 0, lo, 1.0), np.inf)
        Vt_B = np.swapaxes(V, -1, -2) @ B
        X = V @ (Vt_B / w[..., :, None])
    return X, cond


def schur(S: np.ndarray, ia, ib, ic) -> tuple[np.ndarray, np.ndarray]:
    """``S_AB - S_AC S_CC^{-1} S_CB`` and the condition number of ``S_CC``."""
    block = _take(S, ia, ib)
    if len(ic) == 0:
        return block, np.ones(S.shape[:-2])
    X, cond = spd_solve(_take(S, ic, ic), _take(S, ic, ib))
    return block - _take(S, ia, ic) @ X, cond


def regress(S: np.ndarray, iy, ix, ic) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients of ``y`` on ``X`` given ``C``; shape ``(..., |X|)`` for scalar ``y``.

    ``iy`` is a single index.  The returned condition number is the worse of
    the conditioning block and the conditional regressor block.
    """
    idx = list(ix) + [iy]
    k = len(ix)
    block, cond_c = schur(S, idx, idx, ic)
    sxx = block[..., :k, :k]
    sxy = block[..., :k, k:]
    beta, cond_x = spd_solve(sxx, sxy)
    return beta[..., 0], np.maximum(cond_c, cond_x)


def _guard(cond, what: str):
    c = float(np.max(cond))
    if not c <= COND_LIMIT:
        raise SingularBlockError(f"{what} is numerically singular (condition number {c:.3g})")


# --------------------------------------------------------------------------
# labelled API


def conditional_cov(cov: CovarianceMatrix, A, B, given=()) -> np.ndarray:
    """Conditional covariance block ``Sigma_{AB.C}`` as a 2-D array ordered like ``A`` and ``B``.

    ``given`` must be disjoint from ``A`` and ``B``; an empty ``given``
    returns the marginal block unchanged.
    """
    a, b, c = ordered(cov, A), ordered(cov, B), ordered(cov, given)
    overlap = set(c) & (set(a) | set(b))
    if overlap:
        raise CovarianceError(f"conditioning set overlaps the target variables: {sorted(overlap)}")
    block, cond = schur(cov.entries, cov.index(a), cov.index(b), cov.index(c))
    _guard(cond, f"conditioning block {c}")
    return block


def conditional_var(cov: CovarianceMatrix, a: str, given=()) -> float:
    return float(conditional_cov(cov, [a], [a], given)[0, 0])


def partial_corr(cov: CovarianceMatrix, a: str, b: str, given=()) -> float:
    block = conditional_cov(cov, [a, b], [a, b], given)
    return float(block[0, 1] / np.sqrt(block[0, 0] * block[1, 1]))


def regression_coeffs(cov: CovarianceMatrix, y: str, X, given=()) -> np.ndarray:
    """Population regression coefficients of ``y`` on ``X`` adjusting for ``given``.

    Returns a vector ordered as ``X``.  For a single regressor this is
    ``sigma_{xy.C} / sigma_{xx.C}``.
    """
    x, c = ordered(cov, X), ordered(cov, given)
    if not x:
        raise CovarianceError("regression needs at least one regressor")
    if y in x or y in c or set(x) & set(c):
        raise CovarianceError("response, regressors and conditioning set must be disjoint")
    beta, cond = regress(cov.entries, cov.index([y])[0], cov.index(x), cov.index(c))
    _guard(cond, f"regressor block {x} given {c}")
    return beta


def implied_covariance(G) -> CovarianceMatrix:
    """Covariance of the vertices of a fully parameterised path diagram.

    With ``A[child, parent]`` holding the path coefficients and ``D`` the
    diagonal of error variances, the structural equations give
    ``(I - A)^{-1} D (I - A)^{-T}``.
    """
    if not G.is_parameterized:
        missing = []
        coefs = G.coefficients or {}
        evars = G.error_variances or {}
        missing += [f"{a}->{b}" for a, b in G.arrows if (a, b) not in coefs]
        missing += [v for v in G.vertices if v not in evars]
        raise CovarianceError(f"diagram is missing parameters: {', '.join(missing)}")
    p = len(G.vertices)
    A = np.zeros((p, p))
    for (a, b), coef in (G.coefficients or {}).items():
        A[G.index(b), G.index(a)] = coef
    D = np.diag([G.error_variances[v] for v in G.vertices])
    B = np.linalg.inv(np.eye(p) - A)
    S = B @ D @ B.T
    return CovarianceMatrix(G.vertices, (S + S.T) / 2.0)


class IdentityResiduals(NamedTuple):
    """Left minus right side of three regression identities.

    ``omitted_variable``
        ``b_yx.S - (b_yx.ST + b_yT.xS b_Tx.S)``
    ``variance_decomposition``
        ``s_yy.xS - (s_yy - b_yx.S^2 s_xx - 2 b_yx.S b_yS.x s_Sx - b_yS.x S_SS b_yS.x')``
    ``conditional_decomposition``
        ``s_yy.xS - (s_yy.x - b_yS.x S_SS.x b_yS.x')``
    """

    omitted_variable: float
    variance_decomposition: float
    conditional_decomposition: float


def regression_identity_residuals(cov: CovarianceMatrix, x: str, y: str, S=(), T=()) -> IdentityResiduals:
    """Self-test of the algebra layer; every residual is zero up to rounding on any PD matrix."""
    S, T = ordered(cov, S), ordered(cov, T)
    if set(S) & set(T) or {x, y} & (set(S) | set(T)):
        raise CovarianceError("x, y, S and T must be pairwise disjoint")

    b_yx_s = regression_coeffs(cov, y, [x], S)[0]
    if T:
        b_yx_st = regression_coeffs(cov, y, [x], S + T)[0]
        b_yt_xs = regression_coeffs(cov, y, T, [x] + S)
        b_tx_s = np.array([regression_coeffs(cov, t, [x], S)[0] for t in T])
        r3 = b_yx_s - (b_yx_st + b_yt_xs @ b_tx_s)
    else:
        r3 = 0.0

    s_yy_xs = conditional_var(cov, y, [x] + S)
    s_yy = cov[y, y]
    s_xx = cov[x, x]
    if S:
        b_ys_x = regression_coeffs(cov, y, S, [x])
        i_s = cov.index(S)
        i_x = cov.index([x])[0]
        s_sx = cov.entries[i_s, i_x]
        S_ss = cov.entries[np.ix_(i_s, i_s)]
        S_ss_x = conditional_cov(cov, S, S, [x])
        rhs4 = s_yy - b_yx_s**2 * s_xx - 2 * b_yx_s * (b_ys_x @ s_sx) - b_ys_x @ S_ss @ b_ys_x
        rhs5 = conditional_var(cov, y, [x]) - b_ys_x @ S_ss_x @ b_ys_x
    else:
        rhs4 = s_yy - b_yx_s**2 * s_xx
        rhs5 = conditional_var(cov, y, [x])
    return IdentityResiduals(float(r3), float(s_yy_xs - rhs4), float(s_yy_xs - rhs5))


# --------------------------------------------------------------------------
# CSV


def parse_covariance_csv(text: str) -> CovarianceMatrix:
    """First line: comma-separated labels; then one matrix row per line."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise CovarianceError("empty covariance file")
    labels = [s.strip() for s in lines[0].split(",")]
    rows = []
    for lineno, ln in enumerate(lines[1:], start=2):
        cells = [s.strip() for s in ln.split(",")]
        if len(cells) != len(labels):
            raise CovarianceError(
                f"line {lineno}: expected {len(labels)} values, found {len(cells)}"
            )
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise CovarianceError(f"line {lineno}: {exc}") from None
    if len(rows) != len(labels):
        raise CovarianceError(f"expected {len(labels)} matrix rows, found {len(rows)}")
    return CovarianceMatrix(tuple(labels), np.array(rows))


def read_covariance_csv(path) -> CovarianceMatrix:
    with open(path, encoding="utf-8") as fh:
        return parse_covariance_csv(fh.read())


def format_covariance_csv(cov: CovarianceMatrix) -> str:
    # repr() gives the shortest string that round-trips the float exactly
    buf = io.StringIO()
    buf.write(",".join(cov.labels) + "\n")
    for row in cov.entries:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()
