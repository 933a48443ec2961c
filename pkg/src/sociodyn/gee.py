"""Logistic marginal models fitted by generalized estimating equations.

The working correlation is applied within *blocks* of observations:

* ``independence`` -- every row is its own block.
* ``exchangeable`` -- a block is a cluster (ego); one common correlation.
* ``unstructured`` -- correlations indexed by within-cluster position and
  estimated entrywise from Pearson residuals. With ``index="slot"`` (the
  default) a block is one ego-day and positions are the two daily slots;
  with ``index="day_slot"`` a block is the whole cluster and positions are
  all observed ``(day, slot)`` pairs.

Inference always uses the cluster-robust (sandwich) covariance with
clusters = egos, whatever the working correlation.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import special, stats

from .config import TERMS
from .transitions import INTERCEPT, Design

log = logging.getLogger(__name__)

KINDS = ("independence", "exchangeable", "unstructured")
CLAMP = 0.99


class FitError(RuntimeError):
    pass


class NonConvergence(FitError):
    pass


class RankDeficient(FitError):
    pass


class CompleteSeparation(FitError):
    pass


class QICCUndefined(ValueError):
    pass


@dataclass
class WorkingCorrelation:
    """Estimated working correlation.

    ``matrix`` is indexed by position (slot or ``(day, slot)``) for the
    unstructured kind, is 2x2 with the common value for exchangeable and
    None for independence. ``flagged`` lists position pairs observed in
    fewer than two clusters (their entry is set to 0).
    """

    kind: str
    matrix: np.ndarray | None = None
    positions: tuple = ()
    flagged: list = field(default_factory=list)
    value: float = 0.0


@dataclass
class ModelFit:
    terms: tuple[str, ...]
    params: np.ndarray
    bse: np.ndarray
    pvalues: np.ndarray
    cov_robust: np.ndarray
    cov_naive: np.ndarray
    quasi_loglik: float
    qic: float
    qicc: float
    trace_term: float
    n_clusters: int
    n_rows: int
    converged: bool
    iterations: int
    correlation: WorkingCorrelation
    fitted: np.ndarray = field(repr=False, default=None)

    def coef(self, term: str) -> float:
        """Coefficient of ``term``, 0.0 if the term is not in the model."""
        return float(self.params[self.terms.index(term)]) if term in self.terms else 0.0

    def pvalue(self, term: str) -> float:
        return float(self.pvalues[self.terms.index(term)]) if term in self.terms else 1.0

    @property
    def is_null(self) -> bool:
        return self.terms == (INTERCEPT,)

    def as_dict(self) -> dict:
        return {
            "terms": list(self.terms),
            "coefficients": [float(v) for v in self.params],
            "robust_se": [_finite_or_none(float(v)) for v in self.bse],
            "p_values": [_finite_or_none(float(v)) for v in self.pvalues],
            "qicc": _finite_or_none(self.qicc),
            "qic": _finite_or_none(self.qic),
            "quasi_loglik": float(self.quasi_loglik),
            "n_clusters": self.n_clusters,
            "n_rows": self.n_rows,
            "converged": self.converged,
            "iterations": self.iterations,
            "correlation": {
                "kind": self.correlation.kind,
                "positions": [list(p) if isinstance(p, tuple) else p for p in self.correlation.positions],
                "matrix": None if self.correlation.matrix is None else self.correlation.matrix.round(12).tolist(),
                "flagged": [list(map(_jsonable, f)) for f in self.correlation.flagged],
            },
        }


def _nan(x) -> float:
    return math.nan if x is None else float(x)


def fit_from_dict(data: Mapping) -> ModelFit:
    """Rebuild a :class:`ModelFit` from :meth:`ModelFit.as_dict` output.

    Only the diagonal of the robust covariance survives the round trip.
    """
    params = np.array(data["coefficients"], dtype=float)
    bse = np.array([_nan(v) for v in data["robust_se"]])
    c = data.get("correlation") or {"kind": "independence"}
    matrix = None if c.get("matrix") is None else np.array(c["matrix"], dtype=float)
    positions = tuple(tuple(p) if isinstance(p, list) else p for p in c.get("positions", ()))
    wc = WorkingCorrelation(c["kind"], matrix, positions, [tuple(f) for f in c.get("flagged", [])])
    return ModelFit(
        terms=tuple(data["terms"]),
        params=params,
        bse=bse,
        pvalues=np.array([_nan(v) for v in data["p_values"]]),
        cov_robust=np.diag(bse**2),
        cov_naive=np.full((len(params), len(params)), np.nan),
        quasi_loglik=_nan(data.get("quasi_loglik")),
        qic=_nan(data.get("qic")),
        qicc=_nan(data.get("qicc")),
        trace_term=math.nan,
        n_clusters=int(data.get("n_clusters", 0)),
        n_rows=int(data.get("n_rows", 0)),
        converged=bool(data.get("converged", True)),
        iterations=int(data.get("iterations", 0)),
        correlation=wc,
    )


def _jsonable(x):
    return list(x) if isinstance(x, tuple) else x


def _finite_or_none(x):
    return float(x) if math.isfinite(x) else None


# ------------------------------------------------------------------ blocks


@dataclass
class _Blocks:
    """Rows grouped into correlation blocks sharing a position pattern."""

    patterns: list[tuple]  # position pattern per group
    rows: list[np.ndarray]  # (m, s) row indices per group
    block_cluster: list[np.ndarray]  # (m,) cluster code per block
    positions: tuple  # position labels
    n_clusters: int


def _make_blocks(design: Design, kind: str, index: str) -> _Blocks:
    codes, cluster = np.unique(design.cluster, return_inverse=True)
    n = design.n_rows
    if kind == "independence":
        key = np.arange(n)
        pos = np.zeros(n, dtype=np.int64)
        labels: tuple = (0,)
    elif kind == "exchangeable":
        key = cluster
        pos = np.zeros(n, dtype=np.int64)
        labels = (0,)
    elif kind == "unstructured":
        if index == "slot":
            _, key = np.unique(np.stack([cluster, design.day]), axis=1, return_inverse=True)
            key = key.ravel()
            pos = design.slot.astype(np.int64)
            labels = (0, 1)
        elif index == "day_slot":
            key = cluster
            pairs = sorted(set(zip(design.day.tolist(), design.slot.tolist())))
            lookup = {p: i for i, p in enumerate(pairs)}
            pos = np.array([lookup[p] for p in zip(design.day.tolist(), design.slot.tolist())], dtype=np.int64)
            labels = tuple(pairs)
        else:
            raise ValueError(f"unknown index {index!r}")
    else:
        raise ValueError(f"unknown correlation kind {kind!r}")

    order = np.lexsort((pos, key))
    ks, ps = key[order], pos[order]
    if kind == "unstructured" and np.any((np.diff(ks) == 0) & (np.diff(ps) == 0)):
        raise ValueError("repeated position within a block; check (day, slot) uniqueness per cluster")
    starts = np.flatnonzero(np.r_[True, np.diff(ks) != 0])
    sizes = np.diff(np.r_[starts, n])
    width = int(sizes.max())
    rank = np.arange(n) - np.repeat(starts, sizes)
    block = np.repeat(np.arange(starts.size), sizes)
    # padded (block, rank) tables of row indices and positions
    idx = np.full((starts.size, width), -1, dtype=np.int64)
    idx[block, rank] = order
    if kind == "unstructured":
        sig = np.full((starts.size, width), -1, dtype=np.int64)
        sig[block, rank] = ps
    else:
        sig = sizes[:, None]
    uniq, inverse = np.unique(sig, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    patterns, rows, bcl = [], [], []
    for g, u in enumerate(uniq):
        size = int(np.count_nonzero(u >= 0)) if kind == "unstructured" else int(u[0])
        stack = idx[inverse == g, :size]
        patterns.append(tuple(u[:size].tolist()) if kind == "unstructured" else (size,))
        rows.append(stack)
        bcl.append(cluster[stack[:, 0]])
    return _Blocks(patterns, rows, bcl, labels, len(codes))


def design_blocks(design: Design, corr: str, index: str = "slot") -> tuple[_Blocks, _Blocks]:
    """Correlation blocks and independence blocks for ``design``'s rows."""
    corr = corr.lower()
    blocks = _make_blocks(design, corr, index)
    indep = _make_blocks(design, "independence", index) if corr != "independence" else blocks
    return blocks, indep


# ---------------------------------------------------- correlation estimates


def _nearest_correlation(R: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    w, v = np.linalg.eigh(R)
    if w.min() >= floor:
        return R
    w = np.maximum(w, floor)
    R = (v * w) @ v.T
    d = np.sqrt(np.diag(R))
    R = R / np.outer(d, d)
    np.fill_diagonal(R, 1.0)
    return R


def estimate_unstructured_correlation(
    residuals: np.ndarray,
    positions: np.ndarray,
    blocks: np.ndarray,
    clusters: np.ndarray | None = None,
    n_positions: int | None = None,
) -> WorkingCorrelation:
    """Pairwise moment estimate of an unstructured working correlation.

    Parameters
    ----------
    residuals : (n,) Pearson residuals.
    positions : (n,) integer position (slot) of each residual.
    blocks : (n,) block id; only residuals sharing a block are paired.
    clusters : (n,) cluster id used to count support (defaults to blocks).

    Entry ``(j, k)`` is ``sum(e_j e_k) / sqrt(sum(e_j^2) sum(e_k^2))`` over
    blocks observing both positions, clamped to ``[-0.99, 0.99]``. Pairs
    seen in fewer than two clusters are set to 0 and flagged.
    """
    e = np.asarray(residuals, dtype=float)
    pos = np.asarray(positions, dtype=np.int64)
    blk = np.asarray(blocks)
    cl = blk if clusters is None else np.asarray(clusters)
    K = int(pos.max()) + 1 if n_positions is None else n_positions
    _, bcode = np.unique(blk, return_inverse=True)
    _, ccode = np.unique(cl, return_inverse=True)
    nb = bcode.max() + 1 if len(bcode) else 0
    grid = np.full((nb, K), np.nan)
    grid[bcode, pos] = e
    cgrid = np.full(nb, -1)
    cgrid[bcode] = ccode
    R = np.eye(K)
    flagged = []
    for j in range(K):
        for k in range(j + 1, K):
            both = ~np.isnan(grid[:, j]) & ~np.isnan(grid[:, k])
            if len(np.unique(cgrid[both])) < 2:
                flagged.append((j, k))
                continue
            a, b = grid[both, j], grid[both, k]
            den = math.sqrt(float(a @ a) * float(b @ b))
            r = float(a @ b) / den if den > 0 else 0.0
            R[j, k] = R[k, j] = min(max(r, -CLAMP), CLAMP)
    return WorkingCorrelation("unstructured", R, tuple(range(K)), flagged)


def _estimate_correlation(kind, e, blocks: _Blocks, n_params: int) -> WorkingCorrelation:
    if kind == "independence":
        return WorkingCorrelation("independence")
    if kind == "exchangeable":
        num = 0.0
        npairs = 0
        for rows in blocks.rows:
            s = rows.shape[1]
            if s < 2:
                continue
            eb = e[rows]
            tot = eb.sum(axis=1)
            num += float(np.sum(tot**2 - np.sum(eb**2, axis=1)))
            npairs += rows.shape[0] * s * (s - 1)
        n = len(e)
        phi = float(e @ e) / max(n - n_params, 1)
        alpha = num / npairs / phi if npairs and phi > 0 else 0.0
        smax = max(p[0] for p in blocks.patterns)
        lower = -1.0 / (smax - 1) + 1e-6 if smax > 1 else -CLAMP
        alpha = min(max(alpha, max(lower, -CLAMP)), CLAMP)
        return WorkingCorrelation("exchangeable", np.array([[1.0, alpha], [alpha, 1.0]]), (0, 1), [], alpha)
    # unstructured
    K = len(blocks.positions)
    pos = np.empty(len(e), dtype=np.int64)
    blk = np.empty(len(e), dtype=np.int64)
    cl = np.empty(len(e), dtype=np.int64)
    b0 = 0
    for pattern, rows, bcl in zip(blocks.patterns, blocks.rows, blocks.block_cluster):
        m = rows.shape[0]
        pos[rows] = np.asarray(pattern)[None, :]
        blk[rows] = (b0 + np.arange(m))[:, None]
        cl[rows] = bcl[:, None]
        b0 += m
    wc = estimate_unstructured_correlation(e, pos, blk, cl, K)
    wc.matrix = _nearest_correlation(wc.matrix)
    wc.positions = blocks.positions
    wc.flagged = [(blocks.positions[j], blocks.positions[k]) for j, k in wc.flagged]
    return wc


def _pattern_corr(wc: WorkingCorrelation, pattern: tuple) -> np.ndarray:
    if wc.kind == "independence":
        return np.eye(pattern[0])
    if wc.kind == "exchangeable":
        s = pattern[0]
        return np.full((s, s), wc.value) + (1 - wc.value) * np.eye(s)
    idx = np.asarray(pattern)
    return wc.matrix[np.ix_(idx, idx)]


# -------------------------------------------------------------------- core


def _quasi_loglik(y, mu) -> float:
    mu = np.clip(mu, 1e-300, 1 - 1e-16)
    return float(np.sum(special.xlogy(y, mu) + special.xlog1py(1 - y, -mu)))


def _pass(X, y, beta, wc: WorkingCorrelation, blocks: _Blocks):
    """One sweep: bread, score and per-cluster score contributions."""
    eta = X @ beta
    mu = special.expit(eta)
    v = mu * (1 - mu)
    sv = np.sqrt(np.maximum(v, 1e-300))
    Xt = X * sv[:, None]
    e = (y - mu) / sv
    p = X.shape[1]
    bread = np.zeros((p, p))
    score = np.zeros(p)
    per_cluster = np.zeros((blocks.n_clusters, p))
    for pattern, rows, bcl in zip(blocks.patterns, blocks.rows, blocks.block_cluster):
        Rinv = np.linalg.inv(_pattern_corr(wc, pattern))
        Xb = Xt[rows]  # (m, s, p)
        Z = np.einsum("st,mtp->msp", Rinv, Xb)
        bread += np.einsum("msp,msq->pq", Xb, Z)
        Ub = np.einsum("msp,ms->mp", Z, e[rows])
        score += Ub.sum(axis=0)
        np.add.at(per_cluster, bcl, Ub)
    return mu, e, bread, score, per_cluster


def _solve(A, b):
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(A, b, rcond=None)[0]


def fit_gee_logistic(
    design: Design,
    corr: str = "unstructured",
    *,
    index: str = "slot",
    tol: float = 1e-8,
    maxiter: int = 100,
    start: np.ndarray | None = None,
    blocks: tuple | None = None,
) -> ModelFit:
    """Fit a logit-link GEE to a binary design.

    Parameters
    ----------
    design : Design
        Rows with cluster, day and slot labels.
    corr : {"independence", "exchangeable", "unstructured"}
    index : {"slot", "day_slot"}
        Position index for the unstructured working correlation.
    tol : float
        Convergence when the largest absolute coefficient change is below.
    maxiter : int
        Iteration cap.
    blocks : tuple, optional
        Precomputed ``(blocks, independence blocks)`` from
        :func:`design_blocks`; they depend on the rows only, so a
        sequence of fits on column subsets can share them.

    Raises
    ------
    RankDeficient, NonConvergence, CompleteSeparation
    """
    corr = corr.lower()
    if corr not in KINDS:
        raise ValueError(f"unknown correlation kind {corr!r}")
    X = np.asarray(design.exog, dtype=float)
    y = np.asarray(design.endog, dtype=float)
    n, p = X.shape
    if np.linalg.matrix_rank(X) < p:
        raise RankDeficient(f"design with terms {design.terms} is rank deficient")
    if blocks is None:
        blocks = design_blocks(design, corr, index)
    blocks, indep = blocks
    if blocks.n_clusters < 2:
        raise FitError("need at least two clusters")
    wc_ind = WorkingCorrelation("independence")

    if start is not None:
        beta = np.asarray(start, dtype=float).copy()
    else:
        ybar = min(max(y.mean(), 1e-3), 1 - 1e-3)
        beta = np.zeros(p)
        beta[0] = math.log(ybar / (1 - ybar))

    wc = wc_ind
    converged = False
    it = 0
    ll = _quasi_loglik(y, special.expit(X @ beta))
    for it in range(1, maxiter + 1):
        mu, e, bread, score, _ = _pass(X, y, beta, wc, blocks if wc.kind == corr else indep)
        step = _solve(bread, score)
        new = beta + step
        ll_new = _quasi_loglik(y, special.expit(X @ new))
        slack = 1e-10 * (1 + abs(ll)) if wc.kind == "independence" else 1.0 + 0.01 * abs(ll)
        halvings = 0
        while (not math.isfinite(ll_new) or ll_new < ll - slack) and halvings < 30:
            step = step / 2
            new = beta + step
            ll_new = _quasi_loglik(y, special.expit(X @ new))
            halvings += 1
        delta = float(np.max(np.abs(new - beta)))
        beta, ll = new, ll_new
        eta = X @ beta
        if np.any((np.abs(eta) > 40) & ((eta > 0) == (y > 0.5))):
            raise CompleteSeparation("fitted probabilities saturate (coefficients diverge)")
        if corr != "independence":
            mu_new = special.expit(eta)
            e_new = (y - mu_new) / np.sqrt(np.maximum(mu_new * (1 - mu_new), 1e-300))
            wc = _estimate_correlation(corr, e_new, blocks, p)
        if delta < tol and wc.kind == corr:
            converged = True
            break
    if not converged:
        if np.max(np.abs(X @ beta)) > 15:
            raise CompleteSeparation("coefficients diverge without converging")
        raise NonConvergence(f"no convergence within {maxiter} iterations")

    mu, e, bread, score, per_cluster = _pass(X, y, beta, wc, blocks)
    bread_inv = np.linalg.inv(bread)
    meat = per_cluster.T @ per_cluster
    cov = bread_inv @ meat @ bread_inv
    cov = (cov + cov.T) / 2
    bse = np.sqrt(np.maximum(np.diag(cov), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = beta / bse
    pvalues = np.where(bse > 0, 2 * stats.norm.sf(np.abs(z)), np.nan)

    fit = ModelFit(
        terms=tuple(design.terms),
        params=beta,
        bse=bse,
        pvalues=pvalues,
        cov_robust=cov,
        cov_naive=bread_inv,
        quasi_loglik=_quasi_loglik(y, mu),
        qic=math.nan,
        qicc=math.nan,
        trace_term=math.nan,
        n_clusters=blocks.n_clusters,
        n_rows=n,
        converged=True,
        iterations=it,
        correlation=wc,
        fitted=mu,
    )
    fit.trace_term = _trace_term(fit, design)
    fit.qic = -2 * fit.quasi_loglik + 2 * fit.trace_term
    try:
        fit.qicc = qicc(fit, design)
    except QICCUndefined as exc:
        log.warning("%s", exc)
    return fit


def _trace_term(fit: ModelFit, design: Design) -> float:
    """trace(Omega_I V_R) with Omega_I the independence-model information."""
    X = design.exog
    mu = special.expit(X @ fit.params)
    v = mu * (1 - mu)
    omega = (X * v[:, None]).T @ X
    return float(np.trace(omega @ fit.cov_robust))


def qicc(fit: ModelFit, design: Design, corrected: bool = True) -> float:
    """Quasi-likelihood information criterion (lower is better).

    ``QIC = -2 Q(mu; I) + 2 trace(Omega_I V_R)`` where ``Q`` is the binomial
    quasi-likelihood of the fitted means under independence, ``Omega_I``
    the independence-model information and ``V_R`` the robust covariance.
    With ``corrected`` the small-sample term ``2p(p+1)/(n-p-1)`` is added
    (p = number of coefficients including the intercept).

    Raises
    ------
    QICCUndefined
        ``n_rows <= p + 1`` with ``corrected``.
    """
    X = design.exog
    y = design.endog
    mu = special.expit(X @ fit.params)
    q = _quasi_loglik(y, mu)
    value = -2 * q + 2 * _trace_term(fit, design)
    if not corrected:
        return value
    n, p = X.shape
    if n <= p + 1:
        raise QICCUndefined(f"QICC undefined for n_rows={n} <= p+1={p + 1}")
    return value + 2 * p * (p + 1) / (n - p - 1)


# ---------------------------------------------------------- model selection


@dataclass(frozen=True)
class SelectionStep:
    term: str
    p_value: float
    qicc_before: float
    qicc_after: float


@dataclass
class SelectionTrace:
    steps: list[SelectionStep] = field(default_factory=list)
    final_terms: tuple[str, ...] = ()
    submodel_qicc: float = math.nan
    null_qicc: float = math.nan
    chosen: str = "SubModel"  # SubModel | NullModel
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "steps": [
                {"dropped": s.term, "p_value": s.p_value, "qicc_before": s.qicc_before, "qicc_after": s.qicc_after}
                for s in self.steps
            ],
            "final_terms": list(self.final_terms),
            "submodel_qicc": _finite_or_none(self.submodel_qicc),
            "null_qicc": _finite_or_none(self.null_qicc),
            "chosen": self.chosen,
            "notes": list(self.notes),
        }


def _drop_key(term: str, p: float):
    # largest p first, then interactions, then name
    return (-p, 0 if "*" in term else 1, term)


def backward_eliminate(
    design: Design,
    terms: Sequence[str] = TERMS,
    corr: str = "unstructured",
    alpha: float = 0.05,
    *,
    index: str = "slot",
    corrected: bool = True,
    tol: float = 1e-8,
    maxiter: int = 100,
) -> tuple[ModelFit, SelectionTrace]:
    """QICC-guided backward elimination followed by a null-model check.

    Starting from ``terms``, the least significant term with p > ``alpha``
    is dropped and the model refitted; the drop is kept only if QICC
    decreases, otherwise the loop stops. The surviving sub-model is then
    compared with the intercept-only model and the smaller QICC wins
    (ties go to the null model).
    """
    trace = SelectionTrace()
    blocks = design_blocks(design, corr, index)

    def fit(ts, warm=None):
        start = None
        if warm is not None:
            # previous estimates minus the dropped term
            start = np.array([warm.coef(t) for t in design.select(ts).terms])
        f = fit_gee_logistic(design.select(ts), corr, index=index, tol=tol, maxiter=maxiter, start=start, blocks=blocks)
        if not corrected:
            f.qicc = f.qic
        return f

    try:
        null = fit(())
    except FitError as exc:
        raise FitError(f"null model failed: {exc}") from exc
    trace.null_qicc = null.qicc

    try:
        current = fit(tuple(terms))
    except FitError as exc:
        trace.notes.append(f"full model failed ({type(exc).__name__}: {exc}); using null model")
        trace.final_terms = null.terms
        trace.chosen = "NullModel"
        return null, trace

    while True:
        cands = []
        for t in current.terms:
            if t == INTERCEPT:
                continue
            pv = current.pvalue(t)
            if not math.isfinite(pv):
                pv = 1.0
            if pv > alpha:
                cands.append((_drop_key(t, pv), t, pv))
        if not cands:
            break
        _, term, pv = min(cands)
        remaining = tuple(t for t in current.terms if t not in (INTERCEPT, term))
        try:
            cand = fit(remaining, warm=current)
        except FitError as exc:
            trace.notes.append(f"refit without {term} failed ({type(exc).__name__}); stopping")
            break
        if cand.qicc < current.qicc:
            trace.steps.append(SelectionStep(term, pv, current.qicc, cand.qicc))
            current = cand
        else:
            break

    trace.submodel_qicc = current.qicc
    if current.is_null or null.qicc <= current.qicc:
        trace.final_terms = null.terms
        trace.chosen = "NullModel"
        return null, trace
    trace.final_terms = current.terms
    return current, trace
