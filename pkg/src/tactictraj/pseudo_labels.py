"""Unsupervised team-tactic pseudo labels via K-means on team motion."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .errors import ArgumentError
from .numeric import SeededRng
from .scenes import Scene


def team_motion_features(scenes: Sequence[Scene], teams: Sequence[int]) -> np.ndarray:
    """Flattened per-team trajectories relative to each player's first position."""
    rows = []
    for s in scenes:
        for team in teams:
            members = s.team_members(team)
            rel = s.positions[members] - s.positions[members, :1]
            rows.append(rel.reshape(-1))
    return np.asarray(rows, dtype=np.float64).reshape(len(rows), -1)


def kmeans(x: np.ndarray, k: int, rng: SeededRng, max_iter: int = 100, tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd iterations from k-means++ seeding; returns (labels, centroids)."""
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = ((x - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centroids[c] = x[idx]
        d2 = np.minimum(d2, ((x - centroids[c]) ** 2).sum(axis=1))
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        dist = ((x[:, None, :] - centroids[None]) ** 2).sum(axis=-1)
        labels = dist.argmin(axis=1)
        new = centroids.copy()
        for c in range(k):
            members = x[labels == c]
            if len(members):
                new[c] = members.mean(axis=0)
        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).max()
        centroids = new
        if shift < tol:
            break
    dist = ((x[:, None, :] - centroids[None]) ** 2).sum(axis=-1)
    return dist.argmin(axis=1), centroids


def kmeans_pseudo_labels(scenes: Sequence[Scene], k: int = 16, seed: int = 0, teams: Sequence[int] | None = None) -> np.ndarray:
    """Cluster team motion patterns; returns labels of shape (n_scenes, n_teams).

    Cluster ids are arbitrary; only the induced partition is meaningful.
    """
    if k < 2:
        raise ArgumentError(f"k-means needs k >= 2, got {k}")
    if teams is None:
        teams = sorted({t for s in scenes for t in s.team_of if t >= 0})
    n_teams = len(scenes) * len(teams)
    if n_teams < k:
        raise ArgumentError(f"{n_teams} team samples cannot fill {k} clusters")
    feats = team_motion_features(scenes, teams)
    labels, _ = kmeans(feats, k, SeededRng(seed, ("kmeans",)))
    return labels.reshape(len(scenes), len(teams))
