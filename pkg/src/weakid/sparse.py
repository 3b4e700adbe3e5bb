"""Sequential thresholded least squares with threshold selection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from weakid.errors import NumericalError, RankDeficientError

DEFAULT_LAMBDAS = np.logspace(-4, 0, 40)


@dataclass
class SparseResult:
    w: np.ndarray
    support: np.ndarray
    lambda_star: float
    residual: float
    degenerate: bool = False
    iterations: int = 0
    loss_curve: list = field(default_factory=list)
    active_history: list = field(default_factory=list)


def _restricted_lstsq(G, b, active):
    sub = G[:, active]
    if sub.shape[0] < sub.shape[1]:
        raise RankDeficientError(f"{sub.shape[0]} rows for {sub.shape[1]} active columns")
    coef, _, rank, sv = np.linalg.lstsq(sub, b, rcond=None)
    if rank < sub.shape[1]:
        cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
        raise RankDeficientError(f"active column set of size {sub.shape[1]} has rank {rank}", cond)
    return coef


def _residual(G, b, w):
    nb = np.linalg.norm(b)
    r = np.linalg.norm(G @ w - b)
    return float(r / nb) if nb > 0 else float(r)


def _bounds(G, b, lam):
    ratio = np.linalg.norm(b) / np.maximum(np.linalg.norm(G, axis=0), np.finfo(float).tiny)
    lower = lam * np.maximum(1.0, ratio)
    upper = np.minimum(1.0, ratio) / lam if lam > 0 else np.full(ratio.size, np.inf)
    return lower, upper


def stls(G, b, lam: float, max_iter: int | None = None, rule: str = "relative") -> SparseResult:
    """Alternate restricted least squares and hard thresholding.

    ``rule="bounds"`` keeps coefficient j while
    ``lam * max(1, |b|/|G_j|) <= |w_j| <= min(1, |b|/|G_j|) / lam``.
    ``rule="relative"`` keeps it while ``|w_j| >= lam * max|w|``. Iteration
    stops once the active set is stable; the returned ``w`` is the
    least-squares solution on the final support.
    """
    G = np.asarray(G, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    J = G.shape[1]
    active = np.arange(J)
    history = [active.copy()]
    max_iter = J + 1 if max_iter is None else max_iter
    w = np.zeros(J)
    if rule == "bounds":
        lower, upper = _bounds(G, b, lam)
    elif rule != "relative":
        raise ValueError(f"unknown threshold rule {rule!r}")
    it = 0
    while True:
        it += 1
        coef = _restricted_lstsq(G, b, active)
        mag = np.abs(coef)
        if rule == "bounds":
            keep = (mag >= lower[active]) & (mag <= upper[active])
        else:
            keep = mag >= lam * mag.max() if mag.max() > 0 else np.zeros(mag.size, bool)
        keep &= mag > 0
        if keep.all() or it >= max_iter:
            w[:] = 0.0
            w[active] = coef
            break
        active = active[keep]
        history.append(active.copy())
        if active.size == 0:
            return SparseResult(np.zeros(J), active, float(lam), _residual(G, b, np.zeros(J)),
                                degenerate=True, iterations=it, active_history=history)
    support = np.flatnonzero(w)
    return SparseResult(w, support, float(lam), _residual(G, b, w), iterations=it,
                        active_history=history)


def loss(result: SparseResult, J: int, gamma: float = 1.0) -> float:
    return result.residual + gamma * result.support.size / J


def select_lambda(G, b, lambdas=None, gamma: float = 1.0, rule: str = "relative") -> SparseResult:
    """Pick the threshold minimizing ``residual + gamma * |support| / J``.

    Ties go to the larger threshold. Degenerate (all-zero) fits are skipped
    unless every threshold is degenerate.
    """
    lambdas = DEFAULT_LAMBDAS if lambdas is None else np.asarray(lambdas, dtype=float)
    if lambdas.size == 0:
        raise ValueError("empty lambda grid")
    J = np.asarray(G).shape[1]
    curve = []
    best = None
    best_loss = np.inf
    for lam in lambdas:
        res = stls(G, b, float(lam), rule=rule)
        L = loss(res, J, gamma)
        curve.append((float(lam), L))
        if res.degenerate:
            continue
        if L <= best_loss:
            best, best_loss = res, L
    if best is None:
        raise NumericalError("every threshold zeroed all coefficients")
    best.loss_curve = curve
    return best
