"""Combining per-classifier score tables into one decision.

Soft votes weight each classifier's score vector and take the argmax;
argmax ties resolve to the lowest class index.  Weight vectors only need
to be non-negative and not all zero: scaling every weight by the same
positive factor never changes the argmax, so callers may pass integer or
normalized weights interchangeably.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from .errors import ValidationError

# Returned by hard_vote_absolute when no class holds a strict majority.
REJECT = -1

# Rows of grid points evaluated per task during search.  Fixed so chunk
# boundaries (and therefore float reduction order) never depend on the
# worker count.
_SEARCH_CHUNK = 1024


def _check_scores(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 3:
        raise ValidationError(f"scores must be (n_models, n_samples, n_classes), got {scores.shape}")
    return scores


def _check_weights(weights, n_models: int) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (n_models,):
        raise ValidationError(f"expected {n_models} weights, got shape {weights.shape}")
    if np.any(weights < 0):
        raise ValidationError("weights must be non-negative")
    if not np.any(weights > 0):
        raise ValidationError("weights must not all be zero")
    return weights


def combined_scores(scores, weights) -> np.ndarray:
    """Weighted sum of score tensors: (n_models, n, l) -> (n, l)."""
    scores = _check_scores(scores)
    weights = _check_weights(weights, scores.shape[0])
    return np.tensordot(weights, scores, axes=([0], [0]))


def weighted_soft_vote(scores, weights) -> np.ndarray:
    """Class index per sample from weighted score averaging."""
    return np.argmax(combined_scores(scores, weights), axis=1)


def model_outputs(scores) -> np.ndarray:
    """Each classifier's own argmax decision: (n_models, n, l) -> (n_models, n)."""
    return np.argmax(_check_scores(scores), axis=2)


def hard_vote_relative(scores) -> np.ndarray:
    """Plurality over per-classifier decisions; ties go to the lowest class."""
    scores = _check_scores(scores)
    n_models, n_samples, n_classes = scores.shape
    votes = np.argmax(scores, axis=2)
    counts = np.zeros((n_samples, n_classes), dtype=np.int64)
    for i in range(n_models):
        np.add.at(counts, (np.arange(n_samples), votes[i]), 1)
    return np.argmax(counts, axis=1)


def hard_vote_absolute(scores) -> np.ndarray:
    """Strict-majority vote: REJECT (-1) when no class exceeds half the votes."""
    scores = _check_scores(scores)
    n_models, n_samples, n_classes = scores.shape
    votes = np.argmax(scores, axis=2)
    counts = np.zeros((n_samples, n_classes), dtype=np.int64)
    for i in range(n_models):
        np.add.at(counts, (np.arange(n_samples), votes[i]), 1)
    winner = np.argmax(counts, axis=1)
    top = counts[np.arange(n_samples), winner]
    out = np.where(2 * top > n_models, winner, REJECT)
    return out.astype(np.int64)


def metric_weights(values) -> np.ndarray:
    """Normalize per-classifier metric values into voting weights."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or len(values) == 0:
        raise ValidationError("values must be a non-empty 1-d array")
    if np.any(values <= 0):
        raise ValidationError("metric values must be strictly positive")
    return values / values.sum()


def logodds_weights(accuracies) -> np.ndarray:
    """Weights proportional to log(p / (1 - p)) of each classifier's accuracy.

    These are the weights under which weighted voting agrees with the
    combined Bayes-optimal decision for independent classifiers.  A
    classifier at or below coin-flip accuracy gets weight 0.
    """
    accuracies = np.asarray(accuracies, dtype=np.float64)
    if accuracies.ndim != 1 or len(accuracies) == 0:
        raise ValidationError("accuracies must be a non-empty 1-d array")
    if np.any(accuracies <= 0) or np.any(accuracies >= 1):
        raise ValidationError("accuracies must lie strictly between 0 and 1")
    raw = np.log(accuracies / (1.0 - accuracies))
    raw = np.maximum(raw, 0.0)
    total = raw.sum()
    if total <= 0:
        raise ValidationError("no classifier is better than chance; weights are undefined")
    return raw / total


def bayes_combined_scores(scores, accuracies, priors) -> np.ndarray:
    """Per-class decision scores log P(c_j) + sum_i h_ij * log(p_i/(1-p_i)).

    `scores` may be raw probabilities or one-hot indicator outputs; the
    indicator case reproduces the independent-classifier posterior up to
    an additive constant.
    """
    scores = _check_scores(scores)
    n_models, _, n_classes = scores.shape
    accuracies = np.asarray(accuracies, dtype=np.float64)
    if accuracies.shape != (n_models,):
        raise ValidationError(f"expected {n_models} accuracies, got shape {accuracies.shape}")
    if np.any(accuracies <= 0) or np.any(accuracies >= 1):
        raise ValidationError("accuracies must lie strictly between 0 and 1")
    priors = np.asarray(priors, dtype=np.float64)
    if priors.shape != (n_classes,):
        raise ValidationError(f"expected {n_classes} priors, got shape {priors.shape}")
    if np.any(priors <= 0) or abs(float(priors.sum()) - 1.0) > 1e-9:
        raise ValidationError("priors must be positive and sum to 1")
    logodds = np.log(accuracies / (1.0 - accuracies))
    return np.log(priors)[None, :] + np.tensordot(logodds, scores, axes=([0], [0]))


def one_hot_outputs(scores) -> np.ndarray:
    """Indicator tensor of each classifier's argmax decision."""
    scores = _check_scores(scores)
    votes = np.argmax(scores, axis=2)
    out = np.zeros_like(scores)
    m, n = votes.shape
    out[np.repeat(np.arange(m), n), np.tile(np.arange(n), m), votes.ravel()] = 1.0
    return out


def prune(values: dict[str, float], keep: int) -> list[str]:
    """Keep the `keep` best classifiers by value, ties by model_id.

    Returns kept ids in the input's original order.
    """
    if keep < 1 or keep > len(values):
        raise ValidationError(f"keep must be in [1, {len(values)}], got {keep}")
    ranked = sorted(values, key=lambda mid: (-values[mid], mid))
    kept = set(ranked[:keep])
    return [mid for mid in values if mid in kept]


def parse_step(step) -> Fraction:
    """Grid step as an exact fraction; 1/step must be a positive integer."""
    if isinstance(step, Fraction):
        frac = step
    else:
        try:
            frac = Fraction(str(step))
        except (ValueError, ZeroDivisionError):
            raise ValidationError(f"cannot parse step '{step}'") from None
    if frac <= 0 or frac > 1:
        raise ValidationError(f"step must be in (0, 1], got {frac}")
    q = Fraction(1) / frac
    if q.denominator != 1:
        raise ValidationError(f"1/step must be an integer, got 1/{frac} = {q}")
    return frac


def grid_size(step, n_models: int) -> int:
    """Number of weight vectors on the simplex grid: C(q + T - 1, T - 1)."""
    q = int(Fraction(1) / parse_step(step))
    return math.comb(q + n_models - 1, n_models - 1)


def weight_grid(step, n_models: int) -> np.ndarray:
    """All non-negative integer vectors of length n_models summing to 1/step.

    Rows are in ascending lexicographic order.  Dividing a row by 1/step
    gives the corresponding normalized weight vector exactly.
    """
    if n_models < 1:
        raise ValidationError("n_models must be at least 1")
    q = int(Fraction(1) / parse_step(step))
    if n_models == 1:
        return np.array([[q]], dtype=np.int64)
    cuts = np.array(list(combinations(range(q + n_models - 1), n_models - 1)), dtype=np.int64)
    padded = np.concatenate(
        [
            np.full((len(cuts), 1), -1, dtype=np.int64),
            cuts,
            np.full((len(cuts), 1), q + n_models - 1, dtype=np.int64),
        ],
        axis=1,
    )
    return np.diff(padded, axis=1) - 1


@dataclass(frozen=True)
class SearchResult:
    """Outcome of an exhaustive grid search over voting weights.

    Weights are stored as exact grid fractions numerators[i]/denominator;
    `correct` is the integer objective count on the searched split.
    """

    numerators: tuple[int, ...]
    denominator: int
    correct: int
    n_samples: int
    tie_count: int
    evaluated_count: int

    @property
    def best_weights(self) -> np.ndarray:
        return np.array(self.numerators, dtype=np.float64) / self.denominator

    @property
    def best_objective(self) -> float:
        return self.correct / self.n_samples

    def weight_fractions(self) -> list[str]:
        return [str(Fraction(n, self.denominator)) for n in self.numerators]


def _search_chunk(grid_chunk, scores, truth):
    # grid numerators are small ints, exact as float64
    combined = np.tensordot(grid_chunk.astype(np.float64), scores, axes=([1], [0]))
    preds = np.argmax(combined, axis=2)
    correct = (preds == truth[None, :]).sum(axis=1)
    best = int(correct.max())
    first = int(np.argmax(correct))
    ties = int((correct == best).sum())
    return best, first, ties


def search_weights(scores, truth, step="0.01", workers: int = 1) -> SearchResult:
    """Exhaustively score every grid weight vector; return the best.

    The result is deterministic and independent of `workers`: the grid is
    evaluated in fixed chunks, correctness is compared as integer counts,
    and among ties the lexicographically smallest numerator vector wins.
    """
    scores = _check_scores(scores)
    truth = np.asarray(truth, dtype=np.int64)
    n_models, n_samples, _ = scores.shape
    if truth.shape != (n_samples,):
        raise ValidationError(f"expected {n_samples} truth labels, got shape {truth.shape}")
    if n_samples == 0:
        raise ValidationError("cannot search over zero samples")
    if workers < 1:
        raise ValidationError(f"workers must be at least 1, got {workers}")
    frac = parse_step(step)
    grid = weight_grid(frac, n_models)
    chunks = [grid[i : i + _SEARCH_CHUNK] for i in range(0, len(grid), _SEARCH_CHUNK)]

    if workers == 1:
        results = [_search_chunk(chunk, scores, truth) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: _search_chunk(c, scores, truth), chunks))

    best = -1
    best_index = -1
    tie_count = 0
    for chunk_no, (local_best, local_first, local_ties) in enumerate(results):
        if local_best > best:
            best = local_best
            best_index = chunk_no * _SEARCH_CHUNK + local_first
            tie_count = local_ties
        elif local_best == best:
            tie_count += local_ties
    numerators = tuple(int(v) for v in grid[best_index])
    return SearchResult(
        numerators=numerators,
        denominator=int(Fraction(1) / frac),
        correct=best,
        n_samples=n_samples,
        tie_count=tie_count,
        evaluated_count=len(grid),
    )
