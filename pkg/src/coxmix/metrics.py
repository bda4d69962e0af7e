"""Clustering quality scores.

Purity compares predicted labels against known ground truth.  Clustering
consistency scores stability across repeated train/test trials when no
truth exists: a pair of accounts placed together in one trial should be
placed together in the others.  Cross-trial label equality is meaningless
without a common labeling, so trials are first aligned to the first trial
by greedy maximum-overlap matching; this alignment is a convention of
this implementation, not part of the displayed formula.
"""

import numpy as np

from .exceptions import DataDomainError

__all__ = [
    "TrialSet",
    "argmax_labels",
    "purity",
    "align_labels",
    "clustering_consistency",
]


def argmax_labels(posterior):
    """Hard 1-based labels from posterior rows; ties go to the lower index."""
    post = np.asarray(posterior, dtype=float)
    if post.ndim != 2 or post.shape[1] < 1:
        raise DataDomainError("posterior must be a 2-d matrix")
    return np.argmax(post, axis=1).astype(np.int64) + 1


def _as_labels(values, name):
    arr = np.asarray(values)
    if arr.ndim != 1 or arr.size == 0:
        raise DataDomainError("%s must be a non-empty label vector" % name)
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.rint(arr)
        if not np.array_equal(rounded, arr):
            raise DataDomainError("%s must hold integer labels" % name)
        arr = rounded
    arr = arr.astype(np.int64)
    if arr.min() < 1:
        raise DataDomainError("%s labels must be >= 1" % name)
    return arr


def _contingency(a, b):
    # overlap counts between label values of two equal-length vectors
    width = int(max(a.max(), b.max()))
    table = np.zeros((width, width), dtype=np.int64)
    np.add.at(table, (a - 1, b - 1), 1)
    return table


def purity(pred, truth):
    """Fraction of accounts in the majority true class of their cluster.

    For each predicted cluster take the size of its largest overlap with
    any true cluster; purity is the total over clusters divided by n.
    """
    pred = _as_labels(pred, "pred")
    truth = _as_labels(truth, "truth")
    if pred.size != truth.size:
        raise DataDomainError(
            "label vectors differ in length (%d vs %d)" % (pred.size, truth.size)
        )
    table = _contingency(pred, truth)
    return float(table.max(axis=1).sum()) / pred.size


def align_labels(reference, labels):
    """Relabel ``labels`` to best match ``reference`` by greedy overlap.

    Repeatedly maps the label pair with the largest remaining overlap
    onto each other; labels left unmatched keep distinct spare indices.
    """
    reference = _as_labels(reference, "reference")
    labels = _as_labels(labels, "labels")
    if reference.size != labels.size:
        raise DataDomainError("label vectors differ in length")
    table = _contingency(reference, labels).astype(float)
    width = table.shape[0]
    mapping = np.full(width, -1, dtype=np.int64)
    used = np.zeros(width, dtype=bool)
    for _ in range(width):
        flat = int(np.argmax(table))
        ref_c, lab_c = divmod(flat, width)
        if table[ref_c, lab_c] < 0:
            break
        mapping[lab_c] = ref_c + 1
        used[ref_c] = True
        table[ref_c, :] = -1.0
        table[:, lab_c] = -1.0
    spare = iter(np.flatnonzero(~used) + 1)
    for lab_c in range(width):
        if mapping[lab_c] < 0:
            mapping[lab_c] = next(spare)
    return mapping[labels - 1]


class TrialSet:
    """Labels from K repeated clustering trials over the same accounts.

    ``labels`` has one row per trial covering every account (trained on
    the trial's train fold, predicted on the rest).  ``test_sets``
    optionally records each trial's held-out account indices.
    """

    __slots__ = ("labels", "test_sets")

    def __init__(self, labels, test_sets=None):
        labels = np.asarray(labels)
        if labels.ndim != 2 or labels.shape[0] < 2:
            raise DataDomainError("need a (K, n) label matrix with K >= 2")
        self.labels = np.stack([_as_labels(row, "trial") for row in labels])
        if test_sets is not None:
            n = self.labels.shape[1]
            if len(test_sets) != self.labels.shape[0]:
                raise DataDomainError("one test set per trial required")
            cleaned = []
            for idx in test_sets:
                idx = np.asarray(idx, dtype=np.int64)
                if idx.size and (
                    idx.min() < 0 or idx.max() >= n or np.unique(idx).size != idx.size
                ):
                    raise DataDomainError("test indices must be distinct and in range")
                cleaned.append(idx)
            test_sets = cleaned
        self.test_sets = test_sets

    @property
    def K(self):
        return self.labels.shape[0]

    @property
    def n(self):
        return self.labels.shape[1]


def clustering_consistency(trials, align=True):
    """Worst-trial average pairwise agreement across trials.

    For each trial k, every ordered pair of accounts sharing a cluster in
    trial k counts a hit when the second account carries the same label
    in another trial k'; hits are averaged over pairs and other trials,
    and the minimum over k is returned.  With ``align`` the trials are
    first relabeled against trial 1.
    """
    if not isinstance(trials, TrialSet):
        trials = TrialSet(trials)
    labels = trials.labels
    K, n = labels.shape
    if align:
        aligned = labels.copy()
        for k in range(1, K):
            aligned[k] = align_labels(aligned[0], aligned[k])
        labels = aligned
    width = int(labels.max())
    sizes = np.zeros((K, width), dtype=np.int64)
    for k in range(K):
        sizes[k] = np.bincount(labels[k] - 1, minlength=width)
    pair_counts = (sizes * (sizes - 1)).sum(axis=1)
    for k in range(K):
        if pair_counts[k] == 0:
            raise DataDomainError(
                "trial %d has no same-cluster pairs" % (k + 1)
            )
    worst = np.inf
    for k in range(K):
        hits = 0.0
        for kp in range(K):
            if kp == k:
                continue
            overlap_diag = np.array(
                [
                    np.count_nonzero((labels[k] == c + 1) & (labels[kp] == c + 1))
                    for c in range(width)
                ]
            )
            hits += float(((sizes[k] - 1) * overlap_diag).sum())
        worst = min(worst, hits / ((K - 1) * pair_counts[k]))
    return float(worst)
