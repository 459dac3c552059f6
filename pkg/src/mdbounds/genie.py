"""Exact small-blocklength simulation of mismatched decoding, the list-genie
construction, and the method-of-types oracles used to validate the bounds'
defining inequalities.

Decoding conventions: the per-letter scores accumulate along the block, the
decoder takes an argmax, ties are broken uniformly between the maximizers and
their (t-1)/t error weight is computed analytically in exact mode, never
sampled.  -inf scores rank below all finite values; -inf against -inf is a tie
(IEEE comparisons give exactly these semantics).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .membership import MarginalMismatchError, TwoOutputChannel
from .metrics import Metric
from .probability import CondDist, FinDist, JointDist

EXACT_BUDGET = 10**8


class EnumerationBudgetError(RuntimeError):
    """Exact enumeration would exceed the configured budget; use Monte Carlo."""


# --------------------------------------------------------------------------
# codebooks and joint types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Codebook:
    """Constant-composition codeword list over the input alphabet 0..nx-1."""

    codewords: np.ndarray  # (M, n) ints
    nx: int

    def __init__(self, codewords, nx: Optional[int] = None):
        arr = np.asarray(codewords, dtype=int)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError("codewords must be a nonempty (M, n) array")
        if nx is None:
            nx = int(arr.max()) + 1
        counts = _composition_counts(arr[0], nx)
        for i in range(1, arr.shape[0]):
            if not np.array_equal(_composition_counts(arr[i], nx), counts):
                raise ValueError(f"codeword {i} breaks the constant-composition requirement")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "codewords", arr)
        object.__setattr__(self, "nx", int(nx))

    @property
    def size(self) -> int:
        return self.codewords.shape[0]

    @property
    def n(self) -> int:
        return self.codewords.shape[1]

    @property
    def rate(self) -> float:
        return math.log(self.size) / self.n

    @property
    def composition(self) -> FinDist:
        return FinDist(_composition_counts(self.codewords[0], self.nx) / self.n)

    def to_json_dict(self) -> dict:
        return {"n": self.n, "codewords": self.codewords.tolist()}

    @staticmethod
    def from_json_dict(d: dict, nx: Optional[int] = None) -> "Codebook":
        cb = Codebook(d["codewords"], nx=nx)
        if cb.n != d.get("n", cb.n):
            raise ValueError("codebook n field disagrees with codeword length")
        return cb

    @staticmethod
    def load(path, nx: Optional[int] = None) -> "Codebook":
        with open(path) as f:
            return Codebook.from_json_dict(json.load(f), nx=nx)


def _composition_counts(seq: np.ndarray, k: int) -> np.ndarray:
    return np.bincount(np.asarray(seq, dtype=int), minlength=k)


def joint_type_counts(x_seq, z_seq, nx: int, nz: int) -> np.ndarray:
    """Integer (nx, nz) pair-count matrix of two equal-length sequences."""
    x = np.asarray(x_seq, dtype=int)
    z = np.asarray(z_seq, dtype=int)
    if x.shape != z.shape:
        raise ValueError("sequences must have equal length")
    flat = np.bincount(x * nz + z, minlength=nx * nz)
    return flat.reshape(nx, nz)


def counts_to_joint(counts: np.ndarray, axes=("X", "Z")) -> JointDist:
    c = np.asarray(counts, dtype=float)
    return JointDist(c / c.sum(), axes)


def _as_counts(joint_type, n: int, nx: int, nz: int) -> np.ndarray:
    """Accept either an integer count matrix or an order-n JointDist/array."""
    arr = joint_type.probs if isinstance(joint_type, JointDist) else np.asarray(joint_type)
    if arr.shape != (nx, nz):
        raise ValueError(f"joint type shape {arr.shape}, expected {(nx, nz)}")
    if np.issubdtype(arr.dtype, np.integer):
        counts = arr.astype(int)
        if counts.sum() != n:
            raise ValueError("joint type counts do not sum to n")
        return counts
    counts = np.rint(arr * n).astype(int)
    if not np.allclose(counts / n, arr, atol=1e-9) or counts.sum() != n:
        raise ValueError("joint type is not an order-n empirical distribution")
    return counts


class TypeIndex:
    """Cache of joint empirical distributions of (codeword, z-sequence) pairs."""

    def __init__(self, cb: Codebook, nz: int):
        self.cb = cb
        self.nz = nz
        self.n = cb.n
        self._table: dict = {}

    def counts(self, message: int, z_seq) -> np.ndarray:
        key = (int(message), bytes(np.asarray(z_seq, dtype=np.uint8)))
        hit = self._table.get(key)
        if hit is None:
            hit = joint_type_counts(self.cb.codewords[message], z_seq, self.cb.nx, self.nz)
            self._table[key] = hit
        return hit

    def joint_type(self, message: int, z_seq) -> JointDist:
        return counts_to_joint(self.counts(message, z_seq))


def type_class_size(counts) -> int:
    """|T_n(P)| for an integer composition (multinomial coefficient)."""
    c = np.asarray(counts, dtype=int).ravel()
    n = int(c.sum())
    out = 1
    rem = n
    for k in c:
        out *= math.comb(rem, int(k))
        rem -= int(k)
    return out


def log_type_class_size(counts) -> float:
    c = np.asarray(counts, dtype=float).ravel()
    n = c.sum()
    return float(math.lgamma(n + 1) - sum(math.lgamma(k + 1) for k in c))


# --------------------------------------------------------------------------
# decoders
# --------------------------------------------------------------------------


def _block_scores(cb: Codebook, q: Metric, y_seq) -> np.ndarray:
    """Per-message accumulated scores for one received block, (M,) floats."""
    y = np.asarray(y_seq, dtype=int)
    s = np.zeros(cb.size)
    for k in range(cb.n):
        s += q.scores[cb.codewords[:, k], y[k]]
    return s


def plain_decode(cb: Codebook, y_seq, q: Metric) -> FinDist:
    """Distribution of the decoded message: uniform over the metric argmax."""
    s = _block_scores(cb, q, y_seq)
    top = s == s.max()
    return FinDist(top / top.sum())


def build_list(cb: Codebook, z_seq, joint_type) -> list:
    """Indices of all codewords whose joint type with ``z_seq`` equals the target."""
    z = np.asarray(z_seq, dtype=int)
    shape = joint_type.probs.shape if isinstance(joint_type, JointDist) else np.asarray(joint_type).shape
    nz = shape[1]
    counts = _as_counts(joint_type, cb.n, cb.nx, nz)
    out = []
    for i in range(cb.size):
        if np.array_equal(joint_type_counts(cb.codewords[i], z, cb.nx, nz), counts):
            out.append(i)
    return out


def genie_decode(cb: Codebook, y_seq, z_seq, joint_type, q: Metric) -> FinDist:
    """Uniform distribution over the metric argmax restricted to the genie list."""
    members = build_list(cb, z_seq, joint_type)
    if not members:
        raise ValueError("genie_decode: empty list (the true codeword's type always belongs)")
    s = _block_scores(cb, q, y_seq)
    sub = s[members]
    top = sub == sub.max()
    probs = np.zeros(cb.size)
    probs[np.asarray(members)[top]] = 1.0 / top.sum()
    return FinDist(probs)


# --------------------------------------------------------------------------
# exact and Monte Carlo block error
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SimResult:
    p_error: float
    mode: str  # exact / monte_carlo
    decoder: str  # plain / genie
    std_err: Optional[float] = None
    samples: Optional[int] = None
    seed: Optional[int] = None

    def to_json_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None or k in ("p_error", "mode", "decoder")}


def _enumerate_seqs(k: int, n: int) -> np.ndarray:
    return np.array(list(itertools.product(range(k), repeat=n)), dtype=int).reshape(-1, n)


def _score_matrix(cb: Codebook, q: Metric, ys: np.ndarray) -> np.ndarray:
    """S[m, iy] accumulated scores over all enumerated y-sequences."""
    m = cb.size
    s = np.zeros((m, ys.shape[0]))
    for k in range(cb.n):
        s += q.scores[cb.codewords[:, k]][:, ys[:, k]]
    return s


def _seq_weights(rows: np.ndarray, symbols: np.ndarray, seqs: np.ndarray) -> np.ndarray:
    """prod_k rows[symbols[k], seqs[:, k]] for per-position row-stochastic rows."""
    out = np.ones(seqs.shape[0])
    for k in range(symbols.shape[0]):
        out = out * rows[symbols[k]][seqs[:, k]]
    return out


def _tie_error_weights(s: np.ndarray, members=None) -> np.ndarray:
    """Analytic error weight per (member, y): 1 - 1{in argmax}/|argmax|."""
    sub = s if members is None else s[members]
    smax = sub.max(axis=0, keepdims=True)
    top = sub == smax
    cnt = top.sum(axis=0, keepdims=True)
    return 1.0 - top / cnt


def exact_error(cb: Codebook, w2: TwoOutputChannel, q: Metric, decoder: str = "plain",
                budget: int = EXACT_BUDGET) -> SimResult:
    """Exact average block error probability by full output enumeration.

    The plain decoder marginalizes z analytically and enumerates only y-space;
    the genie decoder conditions each draw on the true joint type of
    (codeword, z) and enumerates (y, z) jointly.
    """
    if decoder not in ("plain", "genie"):
        raise ValueError(f"unknown decoder {decoder!r}")
    ny, nz, n, m = w2.ny, w2.nz, cb.n, cb.size
    points = m * ny**n * (nz**n if decoder == "genie" else 1)
    if points > budget:
        raise EnumerationBudgetError(
            f"{points:.3g} enumeration points exceed the budget {budget:.3g}; use monte_carlo_error"
        )
    ys = _enumerate_seqs(ny, n)
    s = _score_matrix(cb, q, ys)

    if decoder == "plain":
        wmat = w2.marginal_y().rows
        weights = _tie_error_weights(s)
        pe = 0.0
        for i in range(m):
            py = _seq_weights(wmat, cb.codewords[i], ys)
            pe += float(py @ weights[i])
        return SimResult(pe / m, "exact", "plain")

    zs = _enumerate_seqs(nz, n)
    pyxz = np.where(np.isnan(w2.pyxz), 0.0, w2.pyxz)
    pzx = w2.pzx.rows
    tindex = TypeIndex(cb, nz)
    pe = 0.0
    for iz in range(zs.shape[0]):
        z = zs[iz]
        pz = np.ones(m)
        for k in range(n):
            pz = pz * pzx[cb.codewords[:, k], z[k]]
        live = np.flatnonzero(pz > 0)
        if live.size == 0:
            continue
        type_keys = {}
        for i in live:
            key = tindex.counts(int(i), z).tobytes()
            type_keys.setdefault(key, []).append(int(i))
        for members in type_keys.values():
            weights = _tie_error_weights(s, members)
            for row, i in enumerate(members):
                if pz[i] <= 0:
                    continue
                v = _seq_weights_rows(pyxz[cb.codewords[i], z], ys)
                pe += pz[i] * float(v @ weights[row])
    return SimResult(pe / m, "exact", "genie")


def monte_carlo_error(cb: Codebook, w2: TwoOutputChannel, q: Metric, decoder: str,
                      samples: int, seed: int) -> SimResult:
    """Unbiased Monte Carlo estimate with binomial standard error."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if decoder not in ("plain", "genie"):
        raise ValueError(f"unknown decoder {decoder!r}")
    rng = np.random.default_rng(seed)
    n, m = cb.n, cb.size
    pzx = w2.pzx.rows
    pyxz = np.where(np.isnan(w2.pyxz), 0.0, w2.pyxz)
    wy = w2.marginal_y().rows
    tindex = TypeIndex(cb, w2.nz)
    errors = 0
    for _ in range(samples):
        msg = int(rng.integers(m))
        x = cb.codewords[msg]
        if decoder == "plain":
            y = np.array([_sample_row(rng, wy[x[k]]) for k in range(n)])
            dist = plain_decode(cb, y, q)
        else:
            z = np.array([_sample_row(rng, pzx[x[k]]) for k in range(n)])
            y = np.array([_sample_row(rng, pyxz[x[k], z[k]]) for k in range(n)])
            dist = genie_decode(cb, y, z, tindex.counts(msg, z), q)
        decoded = int(rng.choice(m, p=dist.probs))
        errors += decoded != msg
    p = errors / samples
    se = math.sqrt(p * (1 - p) / samples)
    return SimResult(p, "monte_carlo", decoder, std_err=se, samples=samples, seed=seed)


def _sample_row(rng: np.random.Generator, row: np.ndarray) -> int:
    return int(np.searchsorted(np.cumsum(row), rng.random(), side="right"))


def smooth_two_output(ch: TwoOutputChannel, n: int) -> TwoOutputChannel:
    """Mix the z-generation kernel with the uniform distribution, weight 1/n.

    The absolute-continuity device used by the finite-blocklength analysis; it
    leaves the y-marginal untouched.
    """
    joint = ch.joint_rows()  # (x, y, z)
    wy = joint.sum(axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        z_given_xy = np.where(wy[:, :, None] > 0, joint / np.where(wy[:, :, None] > 0, wy[:, :, None], 1.0),
                              1.0 / ch.nz)
    eps = 1.0 / n
    smoothed = (1 - eps) * z_given_xy + eps / ch.nz
    return TwoOutputChannel.from_joint_rows(wy[:, :, None] * smoothed)


# --------------------------------------------------------------------------
# pairwise lower bound (conditional on z and the joint type)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PairwiseBoundReport:
    list_size: int
    lhs_union: float          # error prob. with ties counted as errors
    lhs_uniform_tie: float    # error prob. of the actual uniform-tie decoder
    rhs_pairwise: float
    holds: bool
    meta: dict = field(default_factory=dict)


def pairwise_lower_bound_check(cb: Codebook, w2: TwoOutputChannel, q: Metric,
                               z_seq, joint_type) -> PairwiseBoundReport:
    """Check the conditional pairwise lower bound on the list-decoding error.

    Both sides are computed by exact enumeration over y.  The left side uses
    the union error event {some other list member scores >= the transmitted
    one}, which is the quantity the bound controls; the uniform-tie decoder
    error is reported alongside.  For a single-element list the right side is
    0 and the inequality is vacuous.
    """
    z = np.asarray(z_seq, dtype=int)
    members = build_list(cb, z, joint_type)
    ell = len(members)
    if ell == 0:
        raise ValueError("empty list: joint type unreachable from this codebook and z")
    ys = _enumerate_seqs(w2.ny, cb.n)
    s = _score_matrix(cb, q, ys)[members]  # (ell, Ny)
    pyxz = np.where(np.isnan(w2.pyxz), 0.0, w2.pyxz)
    v = np.zeros((ell, ys.shape[0]))
    for row, i in enumerate(members):
        v[row] = _seq_weights_rows(pyxz[cb.codewords[i], z], ys)
    if ell == 1:
        return PairwiseBoundReport(1, 0.0, 0.0, 0.0, True, {"note": "vacuous at |L| = 1"})

    # rhs: average pairwise error probability over ordered pairs
    rhs = 0.0
    for a in range(ell):
        ge = (s >= s[a][None, :])
        for b in range(ell):
            if b == a:
                continue
            rhs += float(v[a] @ ge[b])
    rhs /= ell * (ell - 1)

    union = np.zeros(ell)
    for a in range(ell):
        others = np.any(np.delete(s, a, axis=0) >= s[a][None, :], axis=0)
        union[a] = float(v[a] @ others)
    lhs_union = float(union.mean())
    weights = _tie_error_weights(s)
    lhs_tie = float(np.mean([v[a] @ weights[a] for a in range(ell)]))
    return PairwiseBoundReport(ell, lhs_union, lhs_tie, rhs, lhs_union >= rhs - 1e-12)


def _seq_weights_rows(rows_per_pos: np.ndarray, seqs: np.ndarray) -> np.ndarray:
    out = np.ones(seqs.shape[0])
    for k in range(rows_per_pos.shape[0]):
        out = out * rows_per_pos[k][seqs[:, k]]
    return out


# --------------------------------------------------------------------------
# the divergence-minimization oracles behind the exponent machinery
# --------------------------------------------------------------------------


def _omega_tables(p_xzx: JointDist, w_yxz, q: Metric):
    """Common setup: positive-mass cells, per-cell W rows, score differences."""
    p = p_xzx.marginal(("X", "Z", "XT")).probs
    nx, nz, nxt = p.shape
    if nxt != nx:
        raise MarginalMismatchError("competitor axis must share the input alphabet")
    pxz = p.sum(axis=2)          # (X, Z)
    pxtz = p.sum(axis=0).T       # (XT, Z)
    if not np.allclose(pxz, pxtz, atol=1e-9):
        raise MarginalMismatchError("omega requires matching (X, Z) and (XT, Z) marginals")
    w = w_yxz.rows.reshape(nx, nz, -1) if isinstance(w_yxz, CondDist) else np.asarray(w_yxz, dtype=float)
    w = np.where(np.isnan(w), 0.0, w)
    ny = w.shape[2]
    cells = [(x, z, t) for x in range(nx) for z in range(nz) for t in range(nx) if p[x, z, t] > 0]
    d = np.empty((len(cells), ny))
    for idx, (x, z, t) in enumerate(cells):
        d[idx] = q.scores[t] - q.scores[x]
    return p, cells, w, d, ny


def omega(p_xzx: JointDist, w_yxz, q: Metric, tol: float = 1e-9) -> float:
    """Minimum conditional divergence to W over output kernels whose lifted
    joint scores the competitor at least as well as the input.

    Solved through the Lagrangian dual: for multiplier lam >= 0 the inner
    minimizer is the per-cell tilting W e^{lam d} (normalized), so the dual is
    a concave scalar function maximized by bracketed search.  Returns +inf
    when no kernel with finite divergence satisfies the constraint.
    """
    from scipy.optimize import minimize_scalar
    from scipy.special import logsumexp

    p, cells, w, d, ny = _omega_tables(p_xzx, w_yxz, q)
    if not cells:
        raise MarginalMismatchError("omega: degenerate joint with no mass")
    mass = np.array([p[c] for c in cells])

    # -inf scores: the input side forces an auto-satisfied constraint (value ~0),
    # the competitor side just shrinks the admissible output support.
    support = []
    for idx, (x, z, t) in enumerate(cells):
        sup = w[x, z] > 0
        if np.any(sup & np.isneginf(q.scores[x])):
            return 0.0  # mass near such outputs voids the score comparison at no divergence cost
        supualified = sup & ~np.isneginf(q.scores[t])
        if not np.any(sup & ~np.isneginf(q.scores[t])):
            return np.inf
        support.append(sup & ~np.isneginf(q.scores[t]))
    support = np.array(support)

    max_attain = float(sum(m * d[i][support[i]].max() for i, m in enumerate(mass)))
    if max_attain < -tol:
        return np.inf
    logw = np.where(support, np.log(np.where(support, w[[c[0] for c in cells], [c[1] for c in cells]], 1.0)), -np.inf)

    def phi(lam: float) -> float:
        return float(-(mass * logsumexp(logw + lam * np.where(support, d, 0.0), axis=1)).sum())

    def slope(lam: float) -> float:
        t = logw + lam * np.where(support, d, 0.0)
        t = t - t.max(axis=1, keepdims=True)
        e = np.where(support, np.exp(t), 0.0)
        ed = (e * np.where(support, d, 0.0)).sum(axis=1) / e.sum(axis=1)
        return -float((mass * ed).sum())

    if slope(0.0) <= 0:
        return 0.0  # W itself satisfies the constraint
    hi = 1.0
    while slope(hi) > 0 and hi < 1e6:
        hi *= 4.0
    res = minimize_scalar(lambda lam: -phi(lam), bounds=(0.0, hi), method="bounded",
                          options={"xatol": 1e-12})
    return max(float(phi(res.x)), 0.0)


def omega_n(p_xzx: JointDist, w_yxz, q: Metric, n: int, budget: int = 2 * 10**6) -> float:
    """The same minimum restricted to empirical output kernels of order n.

    ``p_xzx`` must itself be an order-n type.  Enumerates per-cell integer
    compositions of the cell counts over the output alphabet and minimizes
    exactly; +inf when no admissible type exists.
    """
    p, cells, w, d, ny = _omega_tables(p_xzx, w_yxz, q)
    counts = np.rint(np.array([p[c] for c in cells]) * n).astype(int)
    if not np.allclose(counts / n, [p[c] for c in cells], atol=1e-9) or counts.sum() != n:
        raise ValueError("p_xzx is not an order-n empirical distribution")

    per_cell = []
    total = 1
    for idx, c in enumerate(counts):
        comps = _compositions(int(c), ny)
        total *= len(comps)
        if total > budget:
            raise EnumerationBudgetError(f"type enumeration exceeds {budget} candidates")
        wrow = w[cells[idx][0], cells[idx][1]]
        dv, sv = [], []
        for comp in comps:
            k = np.asarray(comp, dtype=float)
            vc = k / c if c > 0 else k
            if np.any((k > 0) & (wrow <= 0)):
                dval = np.inf
            else:
                with np.errstate(divide="ignore", invalid="ignore"):
                    dval = float(np.where(k > 0, k / n * np.log(np.where(k > 0, (k / c) / np.where(wrow > 0, wrow, 1.0), 1.0)), 0.0).sum())
            neg = np.any((k > 0) & np.isneginf(d[idx]))
            pos_inf = np.any((k > 0) & np.isposinf(d[idx]))
            if neg and pos_inf:
                sval = np.nan
            elif neg:
                sval = -np.inf
            elif pos_inf:
                sval = np.inf
            else:
                sval = float((k / n * d[idx]).sum())
            dv.append(dval)
            sv.append(sval)
        per_cell.append((np.array(dv), np.array(sv)))

    best = np.inf
    for combo in itertools.product(*[range(len(dv)) for dv, _ in per_cell]):
        dtot = sum(per_cell[i][0][j] for i, j in enumerate(combo))
        if dtot >= best:
            continue
        stot = 0.0
        ok = True
        for i, j in enumerate(combo):
            sval = per_cell[i][1][j]
            if np.isnan(sval):
                ok = False
                break
            stot += sval
        if ok and stot >= -1e-12:
            best = dtot
    return float(best)


def _compositions(total: int, parts: int):
    """All integer compositions of ``total`` into ``parts`` nonnegative parts."""
    if parts == 1:
        return [(total,)]
    out = []
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            out.append((first,) + rest)
    return out


# --------------------------------------------------------------------------
# list-size experiment
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ListSizeReport:
    empirical: float
    analytic_lower_bound: float
    threshold: float
    trials: int
    std_err: float
    holds: bool
    seed: int


def conditional_type_samples(rng: np.random.Generator, x_seq: np.ndarray, counts: np.ndarray,
                             trials: int) -> np.ndarray:
    """Uniform samples from the conditional type class of z given x.

    For each input symbol the required multiset of z symbols is laid out on
    that symbol's positions and shuffled (independent permutations per class
    give exactly the uniform distribution on the class).
    """
    n = x_seq.shape[0]
    nx, nz = counts.shape
    zs = np.empty((trials, n), dtype=int)
    for a in range(nx):
        pos = np.flatnonzero(x_seq == a)
        if counts[a].sum() != pos.size:
            raise ValueError("joint type unreachable: counts row disagrees with composition")
        template = np.repeat(np.arange(nz), counts[a])
        if pos.size == 0:
            continue
        perm = np.argsort(rng.random((trials, pos.size)), axis=1)
        zs[:, pos] = template[perm]
    return zs


def list_size_experiment(cb: Codebook, w_zx: CondDist, joint_type, tau: float,
                         trials: int, seed: int, chunk: int = 2000) -> ListSizeReport:
    """Empirical tail of the genie list size against its analytic lower bound.

    Conditioned on the joint type, the transmitted codeword is uniform on the
    codebook and z is uniform on the conditional type class, so the experiment
    samples exactly from the conditional law.  The analytic bound is
    1 - (n+1)^(|X||Z|-1) exp(-n [R - I(type) - tau]).
    """
    n, m, nx = cb.n, cb.size, cb.nx
    nz = w_zx.n_outputs
    counts = _as_counts(joint_type, n, nx, nz)
    comp = _composition_counts(cb.codewords[0], nx)
    if not np.array_equal(counts.sum(axis=1), comp):
        raise ValueError("joint type unreachable from the codebook composition")
    from .probability import mutual_information

    i_type = mutual_information(counts_to_joint(counts))
    rate = cb.rate
    analytic = 1.0 - (n + 1) ** (nx * nz - 1) * math.exp(-n * (rate - i_type - tau))
    threshold = math.exp(n * tau)

    rng = np.random.default_rng(seed)
    onehot = np.eye(nx, dtype=np.int64)[cb.codewords]  # (M, n, nx)
    hits = 0
    done = 0
    while done < trials:
        t = min(chunk, trials - done)
        msgs = rng.integers(m, size=t)
        sizes = np.empty(t, dtype=int)
        for a, grp in _group_by_message(msgs):
            zs = conditional_type_samples(rng, cb.codewords[a], counts, grp.size)
            zoh = np.eye(nz, dtype=np.int64)[zs]  # (g, n, nz)
            cmat = np.einsum("mka,gkb->gmab", onehot, zoh)
            match = np.all(cmat == counts[None, None], axis=(2, 3))
            sizes[grp] = match.sum(axis=1)
        hits += int((sizes >= threshold - 1e-9).sum())
        done += t
    p = hits / trials
    se = math.sqrt(max(p * (1 - p), 1e-12) / trials)
    holds = (analytic <= 0) or (p >= analytic - 4 * se)
    return ListSizeReport(p, analytic, threshold, trials, se, holds, seed)


def _group_by_message(msgs: np.ndarray):
    for a in np.unique(msgs):
        yield int(a), np.flatnonzero(msgs == a)
