"""Distances, soft memberships, the deep k-Means objective, and Lloyd's k-Means."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DegenerateInputError
from .nn import DenseNetwork, GradientBundle, backward, forward, l2_penalty, reconstruction_loss

SQUARED_EUCLIDEAN = "squared_euclidean"
COSINE = "cosine"
DISTANCE_KINDS = (SQUARED_EUCLIDEAN, COSINE)

SOFTMAX = "parameterized_softmax"
FUZZY = "fuzzy_cmeans"
MEMBERSHIP_KINDS = (SOFTMAX, FUZZY)

# value of alpha at which each membership becomes a hard assignment
HARD_LIMIT_ALPHA = {SOFTMAX: float("inf"), FUZZY: 1.0}

FUZZY_MIN_DISTANCE = 1e-12


@dataclass
class ClusterModel:
    representatives: np.ndarray  # (K, p)
    distance_kind: str = SQUARED_EUCLIDEAN
    membership_kind: str = SOFTMAX

    def __post_init__(self):
        self.representatives = np.asarray(self.representatives, dtype=np.float64)
        if self.representatives.ndim != 2 or self.representatives.shape[0] < 2:
            raise ValueError("need a (K, p) representative matrix with K >= 2")
        if not np.all(np.isfinite(self.representatives)):
            raise ValueError("representatives must be finite")
        if self.distance_kind not in DISTANCE_KINDS:
            raise ValueError(f"unknown distance kind {self.distance_kind!r}")
        if self.membership_kind not in MEMBERSHIP_KINDS:
            raise ValueError(f"unknown membership kind {self.membership_kind!r}")

    @property
    def n_clusters(self) -> int:
        return self.representatives.shape[0]


# ------------------------------------------------------------------ distances

def _check_nonzero(norms: np.ndarray, what: str) -> None:
    if np.any(norms == 0):
        raise ValueError(f"cosine distance undefined for zero {what}")


def distance(h, r, kind: str = SQUARED_EUCLIDEAN) -> float:
    h = np.asarray(h, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if h.shape != r.shape:
        raise ValueError(f"dimension mismatch {h.shape} vs {r.shape}")
    if kind == SQUARED_EUCLIDEAN:
        diff = h - r
        return float(diff @ diff)
    if kind == COSINE:
        nh, nr = np.linalg.norm(h), np.linalg.norm(r)
        _check_nonzero(np.array([nh, nr]), "vector")
        return float(np.clip(1.0 - (h @ r) / (nh * nr), 0.0, 2.0))
    raise ValueError(f"unknown distance kind {kind!r}")


def distance_matrix(H: np.ndarray, R: np.ndarray, kind: str = SQUARED_EUCLIDEAN) -> np.ndarray:
    """Pairwise distances, shape (len(H), len(R))."""
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    R = np.atleast_2d(np.asarray(R, dtype=np.float64))
    if H.shape[1] != R.shape[1]:
        raise ValueError(f"dimension mismatch {H.shape[1]} vs {R.shape[1]}")
    if kind == SQUARED_EUCLIDEAN:
        diff = H[:, None, :] - R[None, :, :]
        return np.einsum("ikp,ikp->ik", diff, diff)
    if kind == COSINE:
        nh = np.linalg.norm(H, axis=1)
        nr = np.linalg.norm(R, axis=1)
        _check_nonzero(nh, "embedding")
        _check_nonzero(nr, "representative")
        return np.clip(1.0 - (H @ R.T) / np.outer(nh, nr), 0.0, 2.0)
    raise ValueError(f"unknown distance kind {kind!r}")


def assign_clusters(H: np.ndarray, R: np.ndarray, kind: str = SQUARED_EUCLIDEAN) -> np.ndarray:
    # np.argmin returns the first minimum, i.e. lowest index on ties
    return np.argmin(distance_matrix(H, R, kind), axis=1)


def closest_representative(h, model: ClusterModel) -> int:
    return int(assign_clusters(np.asarray(h)[None, :], model.representatives, model.distance_kind)[0])


# ---------------------------------------------------------------- memberships

def _softmax_neg(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax of ``-scores`` with min-shift stabilization."""
    shifted = scores - scores.min(axis=-1, keepdims=True)
    e = np.exp(-shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_membership(distances, alpha: float) -> np.ndarray:
    d = np.asarray(distances, dtype=np.float64)
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if alpha == 0:
        return np.full_like(d, 1.0 / d.shape[-1])
    return _softmax_neg(alpha * d)


def fuzzy_membership(distances, alpha: float) -> np.ndarray:
    """Fuzzy C-Means membership ``(sum_k' (f_k / f_k')^(2/(alpha-1)))^-1``."""
    d = np.asarray(distances, dtype=np.float64)
    if not alpha > 1:
        raise ValueError("fuzzy membership requires alpha > 1")
    if np.any(d < FUZZY_MIN_DISTANCE):
        raise DegenerateInputError("fuzzy membership undefined when a representative coincides with a point")
    m = 2.0 / (alpha - 1.0)
    return _softmax_neg(m * np.log(d))


def membership(distances, alpha: float, kind: str = SOFTMAX) -> np.ndarray:
    if kind == SOFTMAX:
        return softmax_membership(distances, alpha)
    if kind == FUZZY:
        return fuzzy_membership(distances, alpha)
    raise ValueError(f"unknown membership kind {kind!r}")


# ------------------------------------------------------------ clustering loss

def clustering_loss(H: np.ndarray, R: np.ndarray, alpha: float, distance_kind: str = SQUARED_EUCLIDEAN,
                    membership_kind: str = SOFTMAX, with_grad: bool = True):
    """Per-row soft k-Means loss ``sum_k f(h, r_k) G_k(h)`` and its gradients.

    Returns ``(losses, grad_H, grad_R)`` where the gradients are those of
    ``losses.sum()``; both include the dependence of G on H and R.
    """
    D = distance_matrix(H, R, distance_kind)
    G = membership(D, alpha, membership_kind)
    L = np.sum(D * G, axis=1)
    if not with_grad:
        return L, None, None
    # dL_i/dD_ik = G_ik (1 - s_ik (D_ik - L_i)), s the local sharpness of G wrt D
    if membership_kind == SOFTMAX:
        W = G * (1.0 - alpha * (D - L[:, None]))
    else:
        m = 2.0 / (alpha - 1.0)
        W = G * (1.0 - m * (D - L[:, None]) / D)

    if distance_kind == SQUARED_EUCLIDEAN:
        grad_H = 2.0 * (H * W.sum(axis=1)[:, None] - W @ R)
        grad_R = 2.0 * (R * W.sum(axis=0)[:, None] - W.T @ H)
    else:
        nh = np.linalg.norm(H, axis=1)[:, None]
        nr = np.linalg.norm(R, axis=1)[:, None]
        Hn, Rn = H / nh, R / nr
        C = Hn @ Rn.T
        WC = W * C
        grad_H = -(W @ Rn - WC.sum(axis=1)[:, None] * Hn) / nh
        grad_R = -(W.T @ Hn - WC.sum(axis=0)[:, None] * Rn) / nr
    return L, grad_H, grad_R


def _objective(batch, net: DenseNetwork, model: ClusterModel, alpha: float, lam: float,
               weight_decay: float, with_grad: bool):
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    batch = np.asarray(batch, dtype=np.float64)
    n = batch.shape[0]
    H, A, cache = forward(net, batch)
    rec, grad_A = reconstruction_loss(batch, A)
    L, grad_H, grad_R = clustering_loss(H, model.representatives, alpha, model.distance_kind,
                                        model.membership_kind, with_grad)
    clus = float(L.sum() / n)
    penalty, pen_grads = l2_penalty(net, weight_decay) if weight_decay else (0.0, None)
    total = rec + lam * clus + penalty
    diagnostics = {"total": total, "reconstruction": rec, "clustering": clus, "penalty": penalty}
    if not with_grad:
        return total, diagnostics, None
    scale = lam / n
    grads = backward(net, cache, scale * grad_H, grad_A)
    grads.representatives = scale * grad_R
    if pen_grads is not None:
        grads = grads + pen_grads
    return total, diagnostics, grads


def dkm_objective(batch, net: DenseNetwork, model: ClusterModel, alpha: float, lam: float,
                  weight_decay: float = 0.0) -> tuple[float, dict]:
    """Batch-averaged reconstruction error plus ``lam`` times the soft clustering loss."""
    total, diagnostics, _ = _objective(batch, net, model, alpha, lam, weight_decay, with_grad=False)
    return total, diagnostics


def dkm_gradients(batch, net: DenseNetwork, model: ClusterModel, alpha: float, lam: float,
                  weight_decay: float = 0.0) -> GradientBundle:
    return _objective(batch, net, model, alpha, lam, weight_decay, with_grad=True)[2]


def dkm_loss_and_gradients(batch, net, model, alpha, lam, weight_decay=0.0):
    return _objective(batch, net, model, alpha, lam, weight_decay, with_grad=True)


# ------------------------------------------------------------------- k-Means

class KMeansResult(NamedTuple):
    representatives: np.ndarray
    assignment: np.ndarray
    inertia: float
    n_iter: int
    inertia_trace: list[float]


def kmeans_pp_init(data: np.ndarray, n_clusters: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding: each new center drawn proportionally to its squared
    distance from the nearest center already chosen."""
    X = np.asarray(data, dtype=np.float64)
    n = X.shape[0]
    if n < n_clusters:
        raise ValueError(f"need at least {n_clusters} points, got {n}")
    chosen = [int(rng.integers(n))]
    closest = distance_matrix(X, X[chosen[0]][None, :])[:, 0]
    for _ in range(1, n_clusters):
        total = closest.sum()
        if total <= 0:
            raise DegenerateInputError("fewer distinct points than requested clusters")
        idx = int(rng.choice(n, p=closest / total))
        chosen.append(idx)
        closest = np.minimum(closest, distance_matrix(X, X[idx][None, :])[:, 0])
    return X[chosen].copy()


def lloyd_kmeans(data: np.ndarray, n_clusters: int, init: np.ndarray, max_iters: int = 300,
                 tol: float = 1e-10) -> KMeansResult:
    X = np.asarray(data, dtype=np.float64)
    if X.shape[0] < n_clusters:
        raise ValueError(f"need at least {n_clusters} points, got {X.shape[0]}")
    centers = np.array(init, dtype=np.float64, copy=True)
    if centers.shape != (n_clusters, X.shape[1]):
        raise ValueError(f"init must have shape {(n_clusters, X.shape[1])}, got {centers.shape}")
    trace: list[float] = []
    assign = None
    n_iter = 0
    for n_iter in range(1, max_iters + 1):
        D = distance_matrix(X, centers)
        new_assign = np.argmin(D, axis=1)
        trace.append(float(D[np.arange(len(X)), new_assign].sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        new_centers = centers.copy()
        counts = np.bincount(assign, minlength=n_clusters)
        own = D[np.arange(len(X)), assign]
        taken: set[int] = set()
        for k in range(n_clusters):
            if counts[k]:
                new_centers[k] = X[assign == k].mean(axis=0)
            else:
                # reseed an empty cluster on the point worst served by its centroid
                order = np.argsort(-own, kind="stable")
                i = next(int(j) for j in order if int(j) not in taken)
                taken.add(i)
                new_centers[k] = X[i]
        shift = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if shift < tol:
            break
    D = distance_matrix(X, centers)
    assign = np.argmin(D, axis=1)
    inertia = float(D[np.arange(len(X)), assign].sum())
    return KMeansResult(centers, assign, inertia, n_iter, trace)


def kmeans(data: np.ndarray, n_clusters: int, rng: np.random.Generator, max_iters: int = 300) -> KMeansResult:
    return lloyd_kmeans(data, n_clusters, kmeans_pp_init(data, n_clusters, rng), max_iters)


# ------------------------------------------------------------------------ io

def save_representatives(path: str | Path, R: np.ndarray) -> None:
    np.savetxt(path, np.atleast_2d(R), delimiter=",", fmt="%.17g")


def load_representatives(path: str | Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
