"""Decoding metrics (additive and type-dependent) and the DMC.

A per-letter score q(x, y) takes values in R U {-inf}; -inf marks forbidden
(x, y) pairs and is stored as an IEEE -inf inside ``scores`` together with an
explicit boolean mask.  Arithmetic rules used throughout:

- -inf + finite = -inf,
- a decoder comparing -inf with -inf sees a tie,
- (-inf) - (-inf) inside a metric difference is indeterminate and raises.

+inf scores are rejected.  Scores are natural-log values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .probability import CondDist, JointDist


class IndeterminateMetricError(ArithmeticError):
    """Raised for (-inf) - (-inf) inside a metric difference."""


@dataclass(frozen=True)
class Metric:
    """|X| x |Y| array of extended-real per-letter scores."""

    scores: np.ndarray

    def __init__(self, scores):
        arr = np.asarray(scores, dtype=float)
        if arr.ndim != 2:
            raise ValueError("Metric: expected a 2-D score array")
        if np.any(np.isposinf(arr)) or np.any(np.isnan(arr)):
            raise ValueError("Metric: +inf / NaN scores are not allowed")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "scores", arr)

    @property
    def neg_inf_mask(self) -> np.ndarray:
        return np.isneginf(self.scores)

    @property
    def shape(self):
        return self.scores.shape

    def is_finite(self) -> bool:
        return not bool(self.neg_inf_mask.any())

    def to_json_dict(self) -> dict:
        m = self.neg_inf_mask
        finite = np.where(m, 0.0, self.scores)
        return {
            "x_alphabet": list(range(self.shape[0])),
            "y_alphabet": list(range(self.shape[1])),
            "scores": finite.tolist(),
            "neg_inf_mask": m.astype(int).tolist(),
        }

    @staticmethod
    def from_json_dict(d: dict) -> "Metric":
        scores = np.asarray(d["scores"], dtype=float)
        mask = np.asarray(d.get("neg_inf_mask", np.zeros_like(scores)), dtype=bool)
        scores = np.where(mask, -np.inf, scores)
        return Metric(scores)

    @staticmethod
    def load(path) -> "Metric":
        with open(path) as f:
            return Metric.from_json_dict(json.load(f))


@dataclass(frozen=True)
class Dmc:
    """Discrete memoryless channel W(y|x)."""

    w: CondDist

    def __init__(self, w):
        if not isinstance(w, CondDist):
            w = CondDist(w)
        if w.undefined_rows:
            raise ValueError("Dmc: every input row must be defined")
        object.__setattr__(self, "w", w)

    @property
    def n_inputs(self) -> int:
        return self.w.n_inputs

    @property
    def n_outputs(self) -> int:
        return self.w.n_outputs

    def matrix(self) -> np.ndarray:
        return self.w.rows

    @staticmethod
    def from_json_dict(d: dict) -> "Dmc":
        return Dmc(CondDist(np.asarray(d["w"], dtype=float)))

    def to_json_dict(self) -> dict:
        return {"w": self.matrix().tolist()}

    @staticmethod
    def load(path) -> "Dmc":
        with open(path) as f:
            return Dmc.from_json_dict(json.load(f))


def ml_metric(w: Dmc) -> Metric:
    """Maximum-likelihood metric q(x,y) = log W(y|x), with W = 0 mapped to -inf."""
    m = w.matrix()
    with np.errstate(divide="ignore"):
        return Metric(np.where(m > 0, np.log(np.where(m > 0, m, 1.0)), -np.inf))


def metric_expectation(q: Metric, joint: JointDist) -> float:
    """E q(X,Y) under a two-axis joint; -inf iff mass sits on a -inf pair."""
    if joint.probs.shape != q.shape:
        raise ValueError(f"metric_expectation: joint shape {joint.probs.shape} vs metric {q.shape}")
    p = joint.probs
    if np.any((p > 0) & q.neg_inf_mask):
        return -np.inf
    finite = np.where(q.neg_inf_mask, 0.0, q.scores)
    return float((p * finite).sum())


def metric_diff(q: Metric, joint: JointDist, first="XT", second="X", y_axis="Y") -> float:
    """E q(first, Y) - E q(second, Y) on the named marginals of a joint.

    The two expectations are taken under the same joint; (-inf) - (-inf)
    raises IndeterminateMetricError instead of pretending to be 0.
    """
    ja = metric_expectation(q, joint.marginal((first, y_axis)))
    jb = metric_expectation(q, joint.marginal((second, y_axis)))
    if np.isneginf(ja) and np.isneginf(jb):
        raise IndeterminateMetricError("metric_diff: -inf minus -inf")
    if np.isneginf(ja):
        return -np.inf
    if np.isneginf(jb):
        return np.inf
    return ja - jb


@dataclass(frozen=True)
class TypeDependentMetric:
    """Metric that depends on (x, y) sequences only through their joint type.

    ``evaluator`` maps a JointDist over X x Y to a real; ``convex`` is the
    caller's declaration that the evaluator is convex in P(y|x) for fixed
    P(x), which the symmetric-set membership test requires.
    """

    evaluator: Callable[[JointDist], float]
    convex: bool = False

    def __call__(self, joint: JointDist) -> float:
        return float(self.evaluator(joint))

    @staticmethod
    def from_additive(q: Metric, convex: bool = True) -> "TypeDependentMetric":
        # an additive metric is affine in the joint, hence convex
        return TypeDependentMetric(lambda j: metric_expectation(q, j), convex=convex)
