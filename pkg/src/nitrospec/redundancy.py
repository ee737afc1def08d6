"""Redundant-band removal: complete-linkage clustering on 1 - |corr|."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_THRESHOLD = 0.08


class RedundancyError(ValueError):
    pass


def correlation_matrix(X: np.ndarray) -> np.ndarray:
    """Pearson correlation between the columns of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise RedundancyError("need a 2-D matrix with at least 2 rows")
    Xc = X - X.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", Xc, Xc))
    zero = np.nonzero(~(norms > 0))[0]
    if zero.size:
        raise RedundancyError(f"band {int(zero[0])} has zero variance")
    U = Xc / norms
    C = np.clip(U.T @ U, -1.0, 1.0)
    np.fill_diagonal(C, 1.0)
    return C


def to_distance(corr: np.ndarray) -> np.ndarray:
    d = 1.0 - np.abs(np.asarray(corr, dtype=float))
    d = np.clip(0.5 * (d + d.T), 0.0, 1.0)
    np.fill_diagonal(d, 0.0)
    return d


@dataclass(frozen=True)
class ClusterSet:
    clusters: tuple  # tuple of sorted tuples of band indices, ordered by smallest member
    threshold: float

    def __len__(self) -> int:
        return len(self.clusters)


def complete_linkage(d: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> ClusterSet:
    """Agglomerate while the closest pair of clusters is within ``threshold``.

    Cluster distance is the largest member-to-member distance. Each active
    cluster lives in the slot of its smallest member; among equally close
    pairs the lowest (slot_i, slot_j) merges first.
    """
    d = np.asarray(d, dtype=float)
    p = d.shape[0]
    if d.shape != (p, p):
        raise RedundancyError("distance matrix must be square")
    D = d.copy()
    np.fill_diagonal(D, np.inf)
    D[np.tril_indices(p)] = np.inf
    full = np.maximum(d, d.T)
    members = {i: [i] for i in range(p)}
    active = np.ones(p, dtype=bool)
    while len(members) > 1:
        flat = int(np.argmin(D))
        i, j = divmod(flat, p)
        if not D[i, j] <= threshold:
            break
        # Lance-Williams update for complete linkage
        merged = np.maximum(full[i], full[j])
        full[i, :] = merged
        full[:, i] = merged
        full[i, i] = 0.0
        active[j] = False
        members[i].extend(members.pop(j))
        D[j, :] = np.inf
        D[:, j] = np.inf
        upper = np.arange(p) > i
        D[i, upper & active] = merged[upper & active]
        lower = np.arange(p) < i
        D[lower & active, i] = merged[lower & active]
    clusters = tuple(tuple(sorted(members[k])) for k in sorted(members))
    return ClusterSet(clusters=clusters, threshold=float(threshold))


def select_representatives(cs: ClusterSet, X: np.ndarray, y: np.ndarray) -> list[int]:
    """Per cluster, the band with the largest |corr(band, y)|; sorted ascending."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    yc = y - y.mean()
    ny = np.sqrt(yc @ yc)
    if not ny > 0:
        raise RedundancyError("target has zero variance")
    Xc = X - X.mean(axis=0)
    nx = np.sqrt(np.einsum("ij,ij->j", Xc, Xc))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.abs(Xc.T @ yc) / (nx * ny)
    r = np.where(nx > 0, r, 0.0)
    reps = []
    for cluster in cs.clusters:
        idx = np.asarray(cluster, dtype=int)
        reps.append(int(idx[np.argmax(r[idx])]))
    return sorted(reps)


def remove_redundant(X: np.ndarray, y: np.ndarray,
                     threshold: float = DEFAULT_THRESHOLD) -> tuple[ClusterSet, list[int]]:
    cs = complete_linkage(to_distance(correlation_matrix(X)), threshold)
    return cs, select_representatives(cs, X, y)
