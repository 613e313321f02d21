"""Retrieval protocol: full-ranking metrics, random baseline, pool task.

Rankings run over the whole gallery in both directions. Ranks use
pessimistic tie handling (tied items count as ranked higher), so reported
metrics are a lower bound for degenerate scorers.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .validation import check_matrix, check_unit_rows

RECALL_KS = (1, 5, 10)
DIRECTIONS = ("t2i", "i2t")


@dataclass
class EvalReport:
    """Recall rates and median rank for one retrieval direction."""

    direction: str
    r_at: dict[int, float]
    median_rank: float
    n_queries: int


def score_all(text_projections: np.ndarray, vis_projections: np.ndarray) -> np.ndarray:
    """Pairwise cosine matrix (n_text x n_img) of unit-norm projections."""
    T = check_matrix(text_projections, "text_projections")
    V = check_matrix(vis_projections, "vis_projections")
    if T.shape[1] != V.shape[1]:
        raise ValueError(
            f"projection dims differ: text {T.shape[1]} vs vis {V.shape[1]}"
        )
    check_unit_rows(T, "text_projections")
    check_unit_rows(V, "vis_projections")
    return np.clip(T @ V.T, -1.0, 1.0)


def rank_queries(scores: np.ndarray, direction: str) -> np.ndarray:
    """Rank of the ground-truth item for each query.

    The matrix must be square with the true pairing on the diagonal.
    rank = 1 + number of non-true items scoring >= the true item.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != scores.shape[1]:
        raise ValueError(f"score matrix must be square, got {scores.shape}")
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    if direction == "i2t":
        scores = scores.T
    true_scores = np.diagonal(scores)
    # s_kk >= s_kk always holds, so subtract the self-comparison.
    return (scores >= true_scores[:, None]).sum(axis=1).astype(np.int64)


def recall_at_k(ranks: np.ndarray, k: int) -> float:
    """Fraction of queries whose true item ranks within the top k."""
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ValueError("ranks must be nonempty")
    return float(np.count_nonzero(ranks <= k) / ranks.size)


def median_rank(ranks: np.ndarray) -> float:
    """Middle order statistic; mean of the two central ranks for even n."""
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ValueError("ranks must be nonempty")
    return float(np.median(ranks))


def evaluate_scores(scores: np.ndarray) -> dict[str, EvalReport]:
    """Both-direction reports for a square score matrix."""
    reports = {}
    for direction in DIRECTIONS:
        ranks = rank_queries(scores, direction)
        reports[direction] = EvalReport(
            direction=direction,
            r_at={k: recall_at_k(ranks, k) for k in RECALL_KS},
            median_rank=median_rank(ranks),
            n_queries=int(ranks.size),
        )
    return reports


def random_baseline(n: int, trials: int = 1000, seed: int = 0) -> dict[str, EvalReport]:
    """Expected metrics of a uniform-random scorer on n query/item pairs.

    Each trial draws a fresh n x n uniform score matrix and runs the full
    ranking protocol; per-trial metrics are averaged.
    """
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be positive")
    rng = np.random.default_rng(seed)
    sums = {d: {"r": {k: 0.0 for k in RECALL_KS}, "mr": 0.0} for d in DIRECTIONS}
    for _ in range(trials):
        scores = rng.random((n, n))
        for direction in DIRECTIONS:
            ranks = rank_queries(scores, direction)
            for k in RECALL_KS:
                sums[direction]["r"][k] += recall_at_k(ranks, k)
            sums[direction]["mr"] += median_rank(ranks)
    return {
        d: EvalReport(
            direction=d,
            r_at={k: sums[d]["r"][k] / trials for k in RECALL_KS},
            median_rank=sums[d]["mr"] / trials,
            n_queries=n,
        )
        for d in DIRECTIONS
    }


@dataclass
class PoolTask:
    """Pick-the-painting-from-ten task configuration."""

    level: str  # "easy" | "difficult"
    pool_size: int = 10
    n_queries: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.level not in ("easy", "difficult"):
            raise ValueError(f"level must be 'easy' or 'difficult', got {self.level!r}")
        if self.pool_size < 2:
            raise ValueError("pool_size must be >= 2")


@dataclass
class PoolReport:
    level: str
    accuracy: float
    n_answered: int
    n_skipped: int
    per_type: dict[str, float]
    seed: int


def pool_eval(
    scores: np.ndarray,
    type_values: list[str],
    task: PoolTask,
) -> PoolReport:
    """Accuracy of picking the true image from a pool of candidates.

    scores[k, j] scores text k against image j over the aligned test set.
    Easy pools draw distractors uniformly; difficult pools draw them from
    images sharing the query's type value, skipping queries whose type
    has too few members. The true image sits last in the pool, so score
    ties resolve against the scorer.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if scores.shape != (n, n):
        raise ValueError(f"score matrix must be square, got {scores.shape}")
    if len(type_values) != n:
        raise ValueError("type_values must align with the score matrix")

    rng = np.random.default_rng(task.seed)
    by_type: dict[str, np.ndarray] = {}
    for t in set(type_values):
        by_type[t] = np.array([i for i, v in enumerate(type_values) if v == t])

    replace = task.n_queries > n
    queries = rng.choice(n, size=task.n_queries, replace=replace)

    n_correct = 0
    n_answered = 0
    n_skipped = 0
    per_type_hits: dict[str, list[int]] = {}
    for k in queries:
        k = int(k)
        if task.level == "easy":
            candidates = np.delete(np.arange(n), k)
        else:
            same = by_type[type_values[k]]
            candidates = same[same != k]
        if candidates.size < task.pool_size - 1:
            n_skipped += 1
            continue
        distractors = rng.choice(candidates, size=task.pool_size - 1, replace=False)
        pool = np.concatenate([distractors, [k]])
        predicted = pool[int(np.argmax(scores[k, pool]))]
        hit = int(predicted == k)
        n_correct += hit
        n_answered += 1
        per_type_hits.setdefault(type_values[k], []).append(hit)

    return PoolReport(
        level=task.level,
        accuracy=n_correct / n_answered if n_answered else float("nan"),
        n_answered=n_answered,
        n_skipped=n_skipped,
        per_type={t: sum(h) / len(h) for t, h in sorted(per_type_hits.items())},
        seed=task.seed,
    )


def report_csv(reports: dict[str, EvalReport], pool: PoolReport | None = None) -> str:
    """CSV rows of (metric, direction, value)."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["metric", "direction", "value"])
    for direction, report in reports.items():
        for k in RECALL_KS:
            writer.writerow([f"r@{k}", direction, f"{report.r_at[k]:.6g}"])
        writer.writerow(["median_rank", direction, f"{report.median_rank:.6g}"])
        writer.writerow(["n_queries", direction, report.n_queries])
    if pool is not None:
        writer.writerow([f"pool_{pool.level}_accuracy", "t2i", f"{pool.accuracy:.6g}"])
        for type_value, acc in pool.per_type.items():
            writer.writerow([f"pool_{pool.level}_accuracy[{type_value}]", "t2i", f"{acc:.6g}"])
    return out.getvalue()


def report_table(name: str, reports: dict[str, EvalReport]) -> str:
    """Fixed-width table: R@1, R@5, R@10, MR for each direction."""
    header = (
        f"{'':16s}  {'Text-to-Image':>30s}  {'Image-to-Text':>30s}\n"
        f"{'Model':16s}  {'R@1':>6s} {'R@5':>6s} {'R@10':>6s} {'MR':>8s}"
        f"  {'R@1':>6s} {'R@5':>6s} {'R@10':>6s} {'MR':>8s}"
    )
    t2i, i2t = reports["t2i"], reports["i2t"]
    row = f"{name:16s}"
    for rep in (t2i, i2t):
        row += (
            f"  {rep.r_at[1]:>6.4f} {rep.r_at[5]:>6.4f} {rep.r_at[10]:>6.4f}"
            f" {rep.median_rank:>8.1f}"
        )
    return header + "\n" + row
