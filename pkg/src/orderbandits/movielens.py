"""Offline pipeline from MovieLens-style rating CSVs to bandit instances.

Stages: ingest (activity thresholds, one genre per movie), per-user genre
means, Kendall-tau k-means into latent states, per-user projection onto the
assigned state's total order (unit weights, then a minimum gap), and the
well-specified / misspecified / mixed instance settings:

  A      means = projected user means (respect the assigned order)
  B      means = raw rating averages (may violate every order)
  mix(a) means = a * raw + (1 - a) * projected

The whole pipeline is a pure function of (input files, seed, m).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .environments import BanditInstance
from .errors import MalformedCsv, UnknownGenre
from .orders import StateModelSet, TotalOrder, load_state_orders, save_state_orders
from .projection import EmpiricalStats, project_onto_order

logger = logging.getLogger(__name__)

# 18 named genres plus the placeholder for genre-less movies.
GENRES = (
    "Action", "Adventure", "Animation", "Children", "Comedy", "Crime",
    "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror", "Musical",
    "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western", "None",
)
GENRE_INDEX = {g: i for i, g in enumerate(GENRES)}
# Labels that occur in the raw data but are not part of the canonical arm
# set; they are stripped from a movie's genre list before assignment.
IGNORED_GENRE_LABELS = frozenset({"IMAX"})
NO_GENRES_LABEL = "(no genres listed)"

MIN_GAP = 0.01
DEFAULT_SIGMA = 2.0

K = len(GENRES)
_PAIR_I, _PAIR_J = map(
    np.array, zip(*[(i, j) for i in range(K) for j in range(i + 1, K)])
)


@dataclass(frozen=True)
class RatingRecord:
    user_id: int
    movie_id: int
    rating: float
    genre: str


@dataclass
class UserProfile:
    user_id: int
    raw_means: np.ndarray
    imputed: np.ndarray  # True where the genre mean was backfilled
    assigned_state: int | None = None
    projected_means: np.ndarray | None = None


@dataclass
class ClusterModel:
    """Latent states from clustering: per-state order, assignment, and the
    centroid mean vectors (averages of member projected means) used by the
    known-means baselines."""

    centroids: np.ndarray
    orders: list[TotalOrder]
    assignment: dict[int, int]

    @property
    def m(self) -> int:
        return len(self.orders)

    def model_set(self) -> StateModelSet:
        return StateModelSet(
            [o.as_partial_order for o in self.orders], mean_vectors=self.centroids
        )


def _read_rows(path, required: tuple[str, ...]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in required):
            raise MalformedCsv(1, f"{path}: header must include {required}")
        for row in reader:
            yield reader.line_num, row


def _assign_movie_genres(movies_path, rng: np.random.Generator) -> dict[int, str]:
    """One genre per movie: the single listed genre, a uniform choice among
    several, or "None" when nothing canonical is listed."""
    genre_of: dict[int, str] = {}
    for line_num, row in _read_rows(movies_path, ("movieId", "genres")):
        try:
            movie_id = int(row["movieId"])
        except ValueError:
            raise MalformedCsv(line_num, f"bad movieId {row['movieId']!r}") from None
        raw = row["genres"].strip()
        labels = [] if raw == NO_GENRES_LABEL or not raw else raw.split("|")
        labels = [g for g in labels if g not in IGNORED_GENRE_LABELS]
        for g in labels:
            if g not in GENRE_INDEX:
                raise UnknownGenre(f"movie {movie_id}: unknown genre {g!r}")
        if not labels:
            genre_of[movie_id] = "None"
        elif len(labels) == 1:
            genre_of[movie_id] = labels[0]
        else:
            genre_of[movie_id] = labels[int(rng.integers(len(labels)))]
    return genre_of


def ingest_ratings(
    ratings_path,
    movies_path,
    seed: int = 0,
    min_movie_ratings: int = 200,
    min_user_ratings: int = 200,
) -> list[RatingRecord]:
    """Parse and filter ratings: movies below the rating threshold go first,
    then users below the (post-filter) rating threshold."""
    rng = np.random.default_rng(seed)
    genre_of = _assign_movie_genres(movies_path, rng)

    rows: list[tuple[int, int, float]] = []
    movie_counts: dict[int, int] = {}
    for line_num, row in _read_rows(ratings_path, ("userId", "movieId", "rating")):
        try:
            user_id = int(row["userId"])
            movie_id = int(row["movieId"])
            rating = float(row["rating"])
        except ValueError:
            raise MalformedCsv(line_num, f"unparseable rating row {row!r}") from None
        if not 0.5 <= rating <= 5.0:
            raise MalformedCsv(line_num, f"rating {rating} outside [0.5, 5.0]")
        if movie_id not in genre_of:
            raise MalformedCsv(line_num, f"movieId {movie_id} not in movies file")
        rows.append((user_id, movie_id, rating))
        movie_counts[movie_id] = movie_counts.get(movie_id, 0) + 1

    kept_movies = {m for m, n in movie_counts.items() if n >= min_movie_ratings}
    user_counts: dict[int, int] = {}
    for user_id, movie_id, _ in rows:
        if movie_id in kept_movies:
            user_counts[user_id] = user_counts.get(user_id, 0) + 1
    kept_users = {u for u, n in user_counts.items() if n >= min_user_ratings}

    return [
        RatingRecord(u, mv, r, genre_of[mv])
        for u, mv, r in rows
        if mv in kept_movies and u in kept_users
    ]


def compute_user_means(records: list[RatingRecord]) -> list[UserProfile]:
    """Per (user, genre) rating means; genres a user never rated are imputed
    with the user's global mean rating and flagged."""
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, np.ndarray] = {}
    for rec in records:
        if rec.user_id not in sums:
            sums[rec.user_id] = np.zeros(K)
            counts[rec.user_id] = np.zeros(K, dtype=np.int64)
        g = GENRE_INDEX[rec.genre]
        sums[rec.user_id][g] += rec.rating
        counts[rec.user_id][g] += 1

    profiles = []
    for user_id in sorted(sums):
        s, n = sums[user_id], counts[user_id]
        global_mean = s.sum() / n.sum()
        means = np.where(n > 0, s / np.maximum(n, 1), global_mean)
        profiles.append(UserProfile(user_id, means, imputed=(n == 0)))
    return profiles


def _positions(x: np.ndarray) -> np.ndarray:
    """Rank position per arm (0 = best), ties broken by lower index."""
    order = sorted(range(len(x)), key=lambda a: (-x[a], a))
    pos = np.empty(len(x), dtype=np.int64)
    pos[order] = np.arange(len(x))
    return pos


def _pair_codes(X: np.ndarray) -> np.ndarray:
    """Boolean "i ranked above j" code per (i < j) pair, one row per vector."""
    pos = np.stack([_positions(row) for row in np.atleast_2d(X)])
    return pos[:, _PAIR_I] < pos[:, _PAIR_J]


def kendall_tau_distance(x, y) -> int:
    """Number of discordant pairs between the rankings induced by x and y
    (ties broken by genre index before counting)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("vectors must have equal length")
    if len(x) == K:
        cx, cy = _pair_codes(x)[0], _pair_codes(y)[0]
        return int((cx != cy).sum())
    px, py = _positions(x), _positions(y)
    return sum(
        1
        for i in range(len(x))
        for j in range(i + 1, len(x))
        if (px[i] < px[j]) != (py[i] < py[j])
    )


def _project_with_gap(raw: np.ndarray, order: TotalOrder) -> np.ndarray:
    """Unit-weight projection onto the order, then enforce a minimum gap by
    walking down the permutation (a minimal order-preserving perturbation)."""
    stats = EmpiricalStats(np.ones(len(raw), dtype=np.int64), raw)
    fitted = project_onto_order(stats, order.as_partial_order).projected.copy()
    p = order.permutation
    for j in range(1, len(p)):
        fitted[p[j]] = min(fitted[p[j]], fitted[p[j - 1]] - MIN_GAP)
    return fitted


def cluster_users(
    profiles: list[UserProfile], m: int, seed: int = 0, max_iter: int = 100
) -> ClusterModel:
    """Lloyd iteration under Kendall-tau distance on raw genre means.

    Emptied clusters are reseeded with the user farthest from its assigned
    centroid.  Duplicate induced orders are merged (reducing effective m).
    Side effect: fills each profile's assigned_state and projected_means.
    """
    n = len(profiles)
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}], got {m}")
    rng = np.random.default_rng(seed)
    X = np.stack([p.raw_means for p in profiles])
    user_codes = _pair_codes(X)

    centroids = X[rng.choice(n, size=m, replace=False)].copy()
    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        # reseeding is capped: data with fewer distinct rankings than m
        # cannot fill every cluster, and such clusters are dropped below
        for _attempt in range(m + 1):
            dist = (user_codes[:, None, :] != _pair_codes(centroids)[None, :, :]).sum(-1)
            new_assign = dist.argmin(axis=1)
            empty = [s for s in range(m) if not (new_assign == s).any()]
            if not empty:
                break
            farthest = int(dist[np.arange(n), new_assign].argmax())
            centroids[empty[0]] = X[farthest]
        if (new_assign == assign).all():
            break
        assign = new_assign
        for s in range(m):
            members = assign == s
            if members.any():
                centroids[s] = X[members].mean(axis=0)

    # orders from the final non-empty centroids; merge identical orders
    survivor_ids = sorted({int(s) for s in assign})
    survivors: list[tuple[int, ...]] = []
    remap = {}
    for s in survivor_ids:
        perm = tuple(sorted(range(K), key=lambda a: (-centroids[s][a], a)))
        if perm in survivors:
            remap[s] = survivors.index(perm)
        else:
            remap[s] = len(survivors)
            survivors.append(perm)
    if len(survivors) < m:
        logger.info("reduced %d requested states to %d distinct populated orders",
                    m, len(survivors))
    orders = [TotalOrder(p) for p in survivors]

    assignment = {}
    for i, profile in enumerate(profiles):
        s = remap[int(assign[i])]
        profile.assigned_state = s
        profile.projected_means = _project_with_gap(profile.raw_means, orders[s])
        assignment[profile.user_id] = s

    final_centroids = np.stack([
        np.stack([p.projected_means for p in profiles if p.assigned_state == s]).mean(0)
        for s in range(len(orders))
    ])
    return ClusterModel(final_centroids, orders, assignment)


def setting_means(raw, projected, setting: str, alpha: float | None = None) -> np.ndarray:
    if setting == "A":
        return np.asarray(projected, dtype=float)
    if setting == "B":
        return np.asarray(raw, dtype=float)
    if setting == "mix":
        if alpha is None or not 0.0 <= alpha <= 1.0:
            raise ValueError("mix setting needs alpha in [0, 1]")
        return alpha * np.asarray(raw, dtype=float) + (1.0 - alpha) * np.asarray(
            projected, dtype=float
        )
    raise ValueError(f"unknown setting {setting!r}")


def build_setting(
    profiles: list[UserProfile],
    clusters: ClusterModel,
    setting: str,
    alpha: float | None = None,
    sigma: float = DEFAULT_SIGMA,
) -> list[BanditInstance]:
    """Bandit instances for every user under the requested setting, in
    ascending user_id order."""
    instances = []
    for p in sorted(profiles, key=lambda p: p.user_id):
        means = setting_means(p.raw_means, p.projected_means, setting, alpha)
        instances.append(
            BanditInstance(means, sigma, true_state=p.assigned_state, seed=p.user_id)
        )
    return instances


def count_violations(instance_means, order) -> int:
    """Closure relations (a, b) whose required mean ordering is strictly
    violated by the instance means."""
    means = np.asarray(instance_means, dtype=float)
    closure = order.as_partial_order.closure if isinstance(order, TotalOrder) else order.closure
    strict = closure & ~np.eye(len(means), dtype=bool)
    return int((strict & (means[:, None] < means[None, :])).sum())


def write_processed(
    out_dir,
    profiles: list[UserProfile],
    clusters: ClusterModel,
    setting: str,
    alpha: float | None,
    sigma: float,
    seed: int,
) -> dict[str, Path]:
    """Emit the processed-instances directory: instances.csv (one row per
    user: id, state, raw means, projected means), states.txt in the order
    text format, centroids.csv, and meta.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "instances": out / "instances.csv",
        "states": out / "states.txt",
        "centroids": out / "centroids.csv",
        "meta": out / "meta.json",
    }
    header = (
        ["user_id", "state"]
        + [f"raw_{i}" for i in range(K)]
        + [f"proj_{i}" for i in range(K)]
    )
    with open(paths["instances"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for p in sorted(profiles, key=lambda p: p.user_id):
            writer.writerow(
                [p.user_id, p.assigned_state]
                + [repr(float(v)) for v in p.raw_means]
                + [repr(float(v)) for v in p.projected_means]
            )
    save_state_orders([o.as_partial_order for o in clusters.orders], paths["states"])
    with open(paths["centroids"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state"] + [f"mean_{i}" for i in range(K)])
        for s in range(clusters.m):
            writer.writerow([s] + [repr(float(v)) for v in clusters.centroids[s]])
    meta = {
        "k": K,
        "m": clusters.m,
        "setting": setting,
        "alpha": alpha,
        "sigma": sigma,
        "seed": seed,
        "genres": list(GENRES),
    }
    paths["meta"].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return paths


def load_processed(out_dir) -> tuple[list[BanditInstance], StateModelSet, dict]:
    """Rebuild instances and the state model set from a processed directory."""
    out = Path(out_dir)
    meta = json.loads((out / "meta.json").read_text())
    orders = load_state_orders(out / "states.txt")
    with open(out / "centroids.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    centroids = np.array(
        [[float(row[f"mean_{i}"]) for i in range(meta["k"])] for row in rows]
    )
    models = StateModelSet(orders, mean_vectors=centroids)
    instances = []
    with open(out / "instances.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            raw = np.array([float(row[f"raw_{i}"]) for i in range(meta["k"])])
            proj = np.array([float(row[f"proj_{i}"]) for i in range(meta["k"])])
            means = setting_means(raw, proj, meta["setting"], meta["alpha"])
            instances.append(
                BanditInstance(
                    means,
                    meta["sigma"],
                    true_state=int(row["state"]),
                    seed=int(row["user_id"]),
                )
            )
    return instances, models, meta


def prepare_movielens(
    ratings_path,
    movies_path,
    m: int,
    setting: str,
    out_dir,
    alpha: float | None = None,
    sigma: float = DEFAULT_SIGMA,
    seed: int = 0,
    min_movie_ratings: int = 200,
    min_user_ratings: int = 200,
) -> dict[str, Path]:
    """End-to-end pipeline: ingest, means, cluster, project, write."""
    records = ingest_ratings(
        ratings_path, movies_path, seed=seed,
        min_movie_ratings=min_movie_ratings, min_user_ratings=min_user_ratings,
    )
    profiles = compute_user_means(records)
    clusters = cluster_users(profiles, m, seed=seed)
    # validate the requested setting's parameters before writing
    setting_means(profiles[0].raw_means, profiles[0].projected_means, setting, alpha)
    return write_processed(out_dir, profiles, clusters, setting, alpha, sigma, seed)
