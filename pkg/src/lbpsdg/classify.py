"""Multiclass SVM (linear / exponential chi-square kernels) and LOSO evaluation.

Binary machines are trained by SMO on a precomputed kernel matrix with
second-order working-set selection; multiclass prediction is one-vs-one
majority voting, ties going to the lowest class index.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

CHI_EPS = 1e-12
KERNELS = ("linear", "chi_square")

log = logging.getLogger(__name__)


class DegenerateFoldError(ValueError):
    """A LOSO training split holds fewer than two classes."""


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "linear"
    gamma: float | str = "auto"
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}; expected one of {KERNELS}")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.gamma != "auto" and not float(self.gamma) > 0:
            raise ValueError("gamma must be positive or 'auto'")


def _as_array(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=np.float64)


def chi_square_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise ``sum (a_i - b_i)^2 / (a_i + b_i + 1e-12)`` between rows of a and b."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if (a < 0).any() or (b < 0).any():
        raise ValueError("chi-square kernel needs non-negative features")
    out = np.empty((a.shape[0], b.shape[0]))
    for i, row in enumerate(a):
        diff = row - b
        out[i] = (diff * diff / (row + b + CHI_EPS)).sum(axis=1)
    return out


def auto_gamma(x: np.ndarray) -> float:
    """1 / mean pairwise chi-square distance (pairs i < j)."""
    d = chi_square_distances(x, x)
    iu = np.triu_indices(len(x), k=1)
    mean = d[iu].mean() if len(iu[0]) else 0.0
    return 1.0 / mean if mean > 0 else 1.0


def kernel_matrix(a, b, kind: str, gamma: float | None = None) -> np.ndarray:
    a, b = np.atleast_2d(_as_array(a)), np.atleast_2d(_as_array(b))
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if kind == "linear":
        return a @ b.T
    return np.exp(-gamma * chi_square_distances(a, b))


def kernel_value(a, b, k: KernelSpec) -> float:
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if k.kind == "linear":
        return float(a @ b)
    if k.gamma == "auto":
        raise ValueError("resolve gamma before evaluating a single chi-square kernel value")
    return float(kernel_matrix(a, b, "chi_square", float(k.gamma))[0, 0])


def smo_solve(K: np.ndarray, y: np.ndarray, c: float, tol: float = 1e-3, max_iter: int = 1_000_000):
    """Soft-margin dual SVM by SMO. Returns ``(alpha, rho, iterations)``.

    Decision function: ``sum_i alpha_i y_i K(x_i, x) - rho``.
    """
    n = len(y)
    y = y.astype(np.float64)
    Q = K * np.outer(y, y)
    qd = np.diag(K).copy()
    alpha = np.zeros(n)
    grad = -np.ones(n)
    it = 0
    while it < max_iter:
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
        score = -y * grad
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        gmax = score[i]
        gmin = score[low].min()
        if gmax - gmin < tol:
            break
        cand = low & (score < gmax)
        b = gmax - score[cand]
        a = qd[i] + qd[cand] - 2.0 * K[i, cand]
        a = np.where(a > 0, a, 1e-12)
        j = int(np.flatnonzero(cand)[np.argmin(-(b * b) / a)])
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = qd[i] + qd[j] + 2.0 * Q[i, j]
            quad = quad if quad > 0 else 1e-12
            delta = (-grad[i] - grad[j]) / quad
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > c:
                    ni, nj = c, c - diff
            elif nj > c:
                nj, ni = c, c + diff
        else:
            quad = qd[i] + qd[j] - 2.0 * Q[i, j]
            quad = quad if quad > 0 else 1e-12
            delta = (grad[i] - grad[j]) / quad
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > c:
                if ni > c:
                    ni, nj = c, total - c
            elif nj < 0:
                nj, ni = 0.0, total
            if total > c:
                if nj > c:
                    nj, ni = c, total - c
            elif ni < 0:
                ni, nj = 0.0, total
        grad += Q[:, i] * (ni - ai) + Q[:, j] * (nj - aj)
        alpha[i], alpha[j] = ni, nj
        it += 1
    if it >= max_iter:
        log.warning("SMO stopped at max_iter=%d before reaching tol=%g; scaling the features may help",
                    max_iter, tol)
    yg = y * grad
    free = (alpha > 0) & (alpha < c)
    if free.any():
        rho = float(yg[free].mean())
    else:
        ub = np.inf
        lb = -np.inf
        at_up = ((y > 0) & (alpha >= c)) | ((y < 0) & (alpha <= 0))
        at_low = ((y > 0) & (alpha <= 0)) | ((y < 0) & (alpha >= c))
        if at_up.any():
            lb = yg[at_up].max()
        if at_low.any():
            ub = yg[at_low].min()
        rho = float((ub + lb) / 2) if np.isfinite(ub) and np.isfinite(lb) else float(ub if np.isfinite(ub) else lb)
    return alpha, rho, it


@dataclass
class BinaryMachine:
    pos: int
    neg: int
    index: np.ndarray
    coef: np.ndarray
    rho: float
    iterations: int


@dataclass
class SvmModel:
    classes: list
    kernel: str
    gamma: float | None
    c: float
    train_x: np.ndarray
    machines: list = field(default_factory=list)

    def decision_votes(self, x) -> np.ndarray:
        x = np.atleast_2d(_as_array(x))
        K = kernel_matrix(x, self.train_x, self.kernel, self.gamma)
        votes = np.zeros((len(x), len(self.classes)), dtype=np.int64)
        for m in self.machines:
            f = K[:, m.index] @ m.coef - m.rho
            win = np.where(f > 0, m.pos, m.neg)
            np.add.at(votes, (np.arange(len(x)), win), 1)
        return votes

    def predict(self, x) -> list:
        votes = self.decision_votes(x)
        # argmax returns the first maximum: ties go to the lowest class index
        return [self.classes[k] for k in votes.argmax(axis=1)]


def train(features, labels, k: KernelSpec, tol: float = 1e-3, max_iter: int = 1_000_000) -> SvmModel:
    """One-vs-one SVM over the sorted set of labels."""
    x = np.atleast_2d(np.asarray([_as_array(f) for f in features]))
    labels = list(labels)
    if len(labels) != len(x):
        raise ValueError("features and labels differ in length")
    if not np.isfinite(x).all():
        raise ValueError("non-finite feature values")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError("training needs at least two classes")
    if k.kind == "chi_square":
        gamma = auto_gamma(x) if k.gamma == "auto" else float(k.gamma)
    else:
        gamma = None
    K = kernel_matrix(x, x, k.kind, gamma)
    lab = np.array([classes.index(l) for l in labels])
    model = SvmModel(classes, k.kind, gamma, float(k.c), x)
    for a, b in combinations(range(len(classes)), 2):
        idx = np.flatnonzero((lab == a) | (lab == b))
        y = np.where(lab[idx] == a, 1.0, -1.0)
        alpha, rho, its = smo_solve(K[np.ix_(idx, idx)], y, float(k.c), tol, max_iter)
        keep = alpha > 0
        model.machines.append(BinaryMachine(a, b, idx[keep], (alpha * y)[keep], rho, its))
    return model


# -- leave-one-subject-out -------------------------------------------------------

@dataclass
class FoldResult:
    held_out_subject: str
    per_sample: list
    sample_index: list = field(default_factory=list)
    skipped: bool = False

    @property
    def fold_accuracy(self) -> float:
        if not self.per_sample:
            return float("nan")
        return sum(t == p for t, p in self.per_sample) / len(self.per_sample)

    def to_dict(self) -> dict:
        return {
            "held_out_subject": self.held_out_subject,
            "n_test": len(self.per_sample),
            "fold_accuracy": self.fold_accuracy,
            "skipped": self.skipped,
            "samples": [{"index": i, "true": t, "pred": p}
                        for i, (t, p) in zip(self.sample_index, self.per_sample)],
        }


@dataclass
class EvalReport:
    classes: list
    confusion: np.ndarray
    folds: list

    @property
    def overall_rr(self) -> float:
        total = self.confusion.sum()
        return float(np.trace(self.confusion) / total) if total else float("nan")

    @property
    def macro_fold_rr(self) -> float:
        accs = [f.fold_accuracy for f in self.folds if f.per_sample]
        return float(np.mean(accs)) if accs else float("nan")

    def to_dict(self) -> dict:
        return {
            "overall_rr": self.overall_rr,
            "macro_fold_rr": self.macro_fold_rr,
            "classes": list(self.classes),
            "confusion": self.confusion.tolist(),
            "folds": [f.to_dict() for f in self.folds],
        }


def loso_splits(subjects):
    """Yield ``(subject, train_idx, test_idx)`` per distinct subject, sorted by id."""
    subjects = np.asarray([str(s) for s in subjects])
    for s in sorted(set(subjects.tolist())):
        test = np.flatnonzero(subjects == s)
        train_idx = np.flatnonzero(subjects != s)
        yield s, train_idx, test


def loso_evaluate(features, labels, subjects, k: KernelSpec, skip_degenerate: bool = False) -> EvalReport:
    """Leave-one-subject-out evaluation pooled into one confusion matrix."""
    x = np.atleast_2d(np.asarray([_as_array(f) for f in features]))
    labels = [str(l) for l in labels]
    subjects = [str(s) for s in subjects]
    if len(set(subjects)) < 2:
        raise ValueError("LOSO needs at least two subjects")
    classes = sorted(set(labels))
    pos = {c: i for i, c in enumerate(classes)}
    conf = np.zeros((len(classes), len(classes)), dtype=np.int64)
    folds = []
    lab = np.array(labels)
    for subject, tr, te in loso_splits(subjects):
        if len(set(lab[tr].tolist())) < 2:
            if not skip_degenerate:
                raise DegenerateFoldError(f"fold '{subject}': training split has a single class")
            folds.append(FoldResult(subject, [], [], skipped=True))
            continue
        model = train(x[tr], lab[tr].tolist(), k)
        pred = model.predict(x[te])
        pairs = list(zip(lab[te].tolist(), pred))
        for t, p in pairs:
            conf[pos[t], pos[p]] += 1
        folds.append(FoldResult(subject, pairs, te.tolist()))
    return EvalReport(classes, conf, folds)


def relative_rr(rr_sdg: float, rr_top: float) -> float:
    """Recognition rate of the concatenated feature minus that of the baseline."""
    for v in (rr_sdg, rr_top):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"recognition rates must lie in [0, 1], got {v}")
    return rr_sdg - rr_top
