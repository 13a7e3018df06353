"""Clustering agreement metrics: pair-counting F1, Jaccard, and NMI.

All three are computed from the integer contingency table of two
partitions of the same id set.  NMI uses arithmetic-mean normalization:
2 I(X;Y) / (H(X) + H(Y)).
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping

Partition = Mapping[str, Iterable[str]]


def _clusters(partition: Partition, name: str) -> list[set[str]]:
    clusters = [set(ids) for ids in partition.values()]
    covered: set[str] = set()
    total = 0
    for cluster in clusters:
        total += len(cluster)
        covered |= cluster
    if total != len(covered):
        raise ValueError(f"{name} partition assigns some id to more than one cluster")
    return [c for c in clusters if c]


def clustering_metrics(
    predicted: Partition, truth: Partition
) -> tuple[float, float, float]:
    """(F1, Jaccard, NMI) between two partitions of the same ids.

    Pairs are unordered co-clustered id pairs.  If neither partition
    co-clusters any pair (all singletons), the pair metrics are 1 by
    convention; likewise NMI is 1 when both partitions carry zero entropy.
    """
    pred = _clusters(predicted, "predicted")
    true = _clusters(truth, "truth")
    pred_ids = set().union(*pred) if pred else set()
    true_ids = set().union(*true) if true else set()
    if pred_ids != true_ids:
        raise ValueError(
            "partitions cover different ids "
            f"(predicted {len(pred_ids)}, truth {len(true_ids)})"
        )
    n = len(pred_ids)
    if n == 0:
        raise ValueError("partitions are empty")

    contingency = [[len(p & t) for t in true] for p in pred]
    tp = sum(math.comb(c, 2) for row in contingency for c in row)
    pairs_pred = sum(math.comb(len(p), 2) for p in pred)
    pairs_true = sum(math.comb(len(t), 2) for t in true)
    fp = pairs_pred - tp
    fn = pairs_true - tp

    if pairs_pred == 0 and pairs_true == 0:
        f1, jaccard = 1.0, 1.0
    else:
        precision = tp / pairs_pred if pairs_pred else 0.0
        recall = tp / pairs_true if pairs_true else 0.0
        f1 = (
            2.0 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
        jaccard = tp / (tp + fp + fn) if tp + fp + fn > 0 else 0.0

    h_pred = -sum(len(p) / n * math.log(len(p) / n) for p in pred)
    h_true = -sum(len(t) / n * math.log(len(t) / n) for t in true)
    mutual = 0.0
    for i, p in enumerate(pred):
        for j, t in enumerate(true):
            c = contingency[i][j]
            if c:
                mutual += c / n * math.log(n * c / (len(p) * len(t)))
    if h_pred == 0.0 and h_true == 0.0:
        nmi = 1.0
    else:
        nmi = 2.0 * mutual / (h_pred + h_true)
    return f1, jaccard, nmi


def load_partition(path: str) -> dict[str, set[str]]:
    """Read ``id<TAB>cluster`` lines into a cluster -> ids mapping."""
    clusters: dict[str, set[str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(
                    f"{path}:{line_no}: expected 'id<TAB>cluster', got {line!r}"
                )
            clusters.setdefault(parts[1], set()).add(parts[0])
    if not clusters:
        raise ValueError(f"{path}: partition file is empty")
    return clusters
