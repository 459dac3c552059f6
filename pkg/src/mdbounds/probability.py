"""Finite-alphabet probability primitives.

Distributions, row-stochastic conditionals, labelled joint arrays, and the
information measures everything else is built from.  Conventions:

- all information quantities are in nats (convert to bits only when reporting),
- 0 * log 0 = 0 and 0 * log(0/0) = 0,
- alphabets are small (< ~10 symbols), so everything is a dense float64 array,
- all objects are immutable after construction and all operations are pure.

Inputs that fail the simplex invariants (entry >= 0, sum == 1 within
``SIMPLEX_TOL``) are rejected, not silently renormalized; callers that really
want renormalization must ask for it explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIMPLEX_TOL = 1e-9
# Slack for harmless floating-point dust produced by internal arithmetic.
_NEG_EPS = 1e-12


class InvalidDistributionError(ValueError):
    """A probability vector/array violates nonnegativity or normalization."""


class UndefinedRowError(LookupError):
    """Access to a conditional row whose conditioning symbol has probability zero."""


def _as_prob_array(values, name: str, renormalize: bool = False) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise InvalidDistributionError(f"{name}: empty distribution")
    if np.any(arr < -_NEG_EPS):
        raise InvalidDistributionError(
            f"{name}: negative entry {arr.min():.3e} at {np.unravel_index(arr.argmin(), arr.shape)}"
        )
    arr = np.maximum(arr, 0.0)
    total = arr.sum()
    if renormalize:
        if total <= 0:
            raise InvalidDistributionError(f"{name}: cannot renormalize zero mass")
        arr = arr / total
    elif abs(total - 1.0) > SIMPLEX_TOL:
        raise InvalidDistributionError(f"{name}: entries sum to {total!r}, not 1 (tol {SIMPLEX_TOL})")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FinDist:
    """Probability vector over a finite alphabet (indexed 0..k-1)."""

    probs: np.ndarray

    def __init__(self, probs, renormalize: bool = False):
        object.__setattr__(self, "probs", _as_prob_array(probs, "FinDist", renormalize))

    def __len__(self) -> int:
        return self.probs.shape[0]

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)

    @staticmethod
    def uniform(k: int) -> "FinDist":
        return FinDist(np.full(k, 1.0 / k))

    @staticmethod
    def point_mass(k: int, i: int) -> "FinDist":
        p = np.zeros(k)
        p[i] = 1.0
        return FinDist(p)


@dataclass(frozen=True)
class CondDist:
    """Row-stochastic matrix: one FinDist per conditioning symbol.

    Rows listed in ``undefined_rows`` carry no probabilistic meaning (they
    arise from conditioning on zero-probability symbols); reading them raises
    ``UndefinedRowError`` and every consumer must skip them.
    """

    rows: np.ndarray
    undefined_rows: frozenset = field(default_factory=frozenset)

    def __init__(self, rows, undefined_rows=(), renormalize: bool = False):
        arr = np.asarray(rows, dtype=float)
        if arr.ndim != 2:
            raise InvalidDistributionError("CondDist: expected a 2-D array")
        undefined = frozenset(int(i) for i in undefined_rows)
        checked = arr.copy()
        for i in range(arr.shape[0]):
            if i in undefined:
                continue
            checked[i] = _as_prob_array(arr[i], f"CondDist row {i}", renormalize)
        checked.setflags(write=False)
        object.__setattr__(self, "rows", checked)
        object.__setattr__(self, "undefined_rows", undefined)

    @property
    def n_inputs(self) -> int:
        return self.rows.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.rows.shape[1]

    def row(self, i: int) -> FinDist:
        if i in self.undefined_rows:
            raise UndefinedRowError(f"row {i} is conditioned on a zero-probability symbol")
        return FinDist(self.rows[i])

    def matrix(self) -> np.ndarray:
        """Dense row matrix; undefined rows are returned as stored (callers must mask)."""
        return self.rows

    @staticmethod
    def identity(k: int) -> "CondDist":
        return CondDist(np.eye(k))


@dataclass(frozen=True)
class JointDist:
    """Dense joint array over a product alphabet with named axes (e.g. ('X','Z'))."""

    probs: np.ndarray
    axes: tuple

    def __init__(self, probs, axes, renormalize: bool = False):
        arr = _as_prob_array(probs, "JointDist", renormalize)
        axes = tuple(axes)
        if len(axes) != arr.ndim:
            raise ValueError(f"JointDist: {arr.ndim} array dims but {len(axes)} axis names")
        if len(set(axes)) != len(axes):
            raise ValueError(f"JointDist: duplicate axis names {axes}")
        object.__setattr__(self, "probs", arr)
        object.__setattr__(self, "axes", axes)

    def axis(self, name: str) -> int:
        try:
            return self.axes.index(name)
        except ValueError:
            raise KeyError(f"no axis {name!r} in {self.axes}") from None

    def marginal(self, keep) -> "JointDist":
        """Marginalize onto the named axes, in the order given."""
        keep = tuple(keep)
        drop = tuple(i for i, a in enumerate(self.axes) if a not in keep)
        arr = self.probs.sum(axis=drop) if drop else self.probs
        remaining = tuple(a for a in self.axes if a in keep)
        arr = np.moveaxis(arr, [remaining.index(k) for k in keep], range(len(keep)))
        return JointDist(arr, keep)

    def fin(self) -> FinDist:
        if self.probs.ndim != 1:
            raise ValueError("fin() requires a single-axis joint")
        return FinDist(self.probs)

    def conditional(self, target: str, given: str) -> CondDist:
        """P(target | given) from a two-axis joint; zero-probability rows flagged undefined."""
        j = self.marginal((given, target))
        m = j.probs
        row_sums = m.sum(axis=1)
        undefined = [i for i, s in enumerate(row_sums) if s <= 0]
        safe = np.where(row_sums > 0, row_sums, 1.0)
        return CondDist(m / safe[:, None], undefined_rows=undefined)


def compose(p: FinDist, c: CondDist, axes=("X", "Z")) -> JointDist:
    """Joint P(x) * C(z|x).  Undefined rows of ``c`` must have p(x) = 0."""
    if len(p) != c.n_inputs:
        raise ValueError(f"compose: |p|={len(p)} vs channel inputs {c.n_inputs}")
    for i in c.undefined_rows:
        if p.probs[i] > 0:
            raise UndefinedRowError(f"compose: p({i}) > 0 but channel row {i} is undefined")
    return JointDist(p.probs[:, None] * c.rows, axes)


def chain(c1: CondDist, c2: CondDist) -> CondDist:
    """Cascade (c1 then c2): rows (c1 @ c2)."""
    if c1.n_outputs != c2.n_inputs:
        raise ValueError("chain: alphabet mismatch")
    return CondDist(c1.rows @ c2.rows, undefined_rows=c1.undefined_rows)


def bayes_reverse(joint: JointDist, given: str) -> CondDist:
    """Reverse conditional P(other | given) of a two-axis joint.

    Rows conditioned on zero-probability symbols are marked undefined rather
    than fabricated.
    """
    if len(joint.axes) != 2:
        raise ValueError("bayes_reverse expects a two-axis joint")
    other = next(a for a in joint.axes if a != given)
    return joint.conditional(other, given)


def attach(joint: JointDist, kernel: np.ndarray, given, new_axis: str) -> JointDist:
    """Extend a joint with a conditional kernel P(new | given-axes).

    ``kernel`` has shape (sizes of `given` axes..., |new|) and rows summing to
    one wherever the conditioning event has positive probability.
    """
    given = tuple(given)
    order = given + tuple(a for a in joint.axes if a not in given)
    base = np.moveaxis(joint.probs, [joint.axis(a) for a in order], range(len(order)))
    k = np.asarray(kernel, dtype=float)
    expand = base.reshape(base.shape + (1,)) * k.reshape(
        k.shape[: len(given)] + (1,) * (len(order) - len(given)) + (k.shape[-1],)
    )
    return JointDist(expand, order + (new_axis,), renormalize=False)


# --- information measures -------------------------------------------------


def _xlogx(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)


def entropy(p) -> float:
    """Shannon entropy -sum p log p in nats."""
    arr = p.probs if isinstance(p, FinDist) else np.asarray(p, dtype=float)
    return float(-_xlogx(arr).sum())


def entropy_joint(j: JointDist) -> float:
    return float(-_xlogx(j.probs).sum())


def mutual_information(joint: JointDist) -> float:
    """I(A;B) of a two-axis joint, in nats (clamped at 0)."""
    if joint.probs.ndim != 2:
        raise ValueError("mutual_information expects a two-axis joint")
    p = joint.probs
    pa = p.sum(axis=1)
    pb = p.sum(axis=0)
    prod = np.outer(pa, pb)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p / np.where(prod > 0, prod, 1.0), 1.0)), 0.0)
    return max(float(terms.sum()), 0.0)


def mutual_information_pc(p: FinDist, c: CondDist) -> float:
    return mutual_information(compose(p, c))


def conditional_divergence(v: CondDist, q: CondDist, p: FinDist) -> float:
    """D(V || Q | P) in nats; +inf when V has support outside Q on a P-positive row."""
    if v.rows.shape != q.rows.shape or len(p) != v.n_inputs:
        raise ValueError("conditional_divergence: alphabet mismatch")
    total = 0.0
    for x in p.support:
        xi = int(x)
        vr = v.row(xi).probs
        qr = q.row(xi).probs
        if np.any((vr > 0) & (qr <= 0)):
            return np.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(vr > 0, vr * np.log(np.where(vr > 0, vr / np.where(qr > 0, qr, 1.0), 1.0)), 0.0)
        total += p.probs[xi] * t.sum()
    return float(total)


def kl_divergence(p: FinDist, q: FinDist) -> float:
    """D(p || q) in nats; +inf on an absolute-continuity failure."""
    pp, qq = p.probs, q.probs
    if np.any((pp > 0) & (qq <= 0)):
        return np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(pp > 0, pp * np.log(np.where(pp > 0, pp / np.where(qq > 0, qq, 1.0), 1.0)), 0.0)
    return float(t.sum())
