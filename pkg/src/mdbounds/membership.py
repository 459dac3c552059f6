"""Membership oracles for the channel sets behind each capacity/exponent bound.

A two-output channel P(y,z|x) is stored factored as P(z|x) and P(y|x,z); rows
of P(y|x,z) conditioned on (x,z) pairs with P(z|x) = 0 carry no meaning and
are excluded from every membership sum.

The sets tested here, from hardest to easiest:

- base set       min over auxiliary kernels P(u|x,z) of the quadratic
                 functional ``delta_q`` must be >= 0 (nonconvex inner problem,
                 decided heuristically + by witness lifting from the pairwise
                 set),
- pairwise set   for every z and every pair of inputs supported given z, the
                 cross matrix entry D_z(a, b) must be >= 0 ("tilde"),
- symmetric sets two LP-decidable relaxations over symmetric couplings
                 ("tilde_sym" without, "sym" with diagonal floor constraints),
- psd set        every per-z cross matrix positive semidefinite; with a zero
                 diagonal this collapses to the matrix being identically zero,
- zero-pattern set ("gamma")  a pure support condition linking two metrics,
- comparison sets ("theta_star", "m_max")  LP sets from prior constructions,
  used to reproduce the numbers this tool improves on.

Every OUT verdict carries a certificate that re-evaluates to a negative
margin via ``recheck_certificate``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .metrics import IndeterminateMetricError, Metric, TypeDependentMetric
from .probability import (
    CondDist,
    FinDist,
    InvalidDistributionError,
    JointDist,
    SIMPLEX_TOL,
    compose,
)

LP_TOL = 1e-8
PSD_TOL = 1e-9
PAIR_TOL = 1e-9
WQ_TOL = 1e-7
GAMMA_MAX_TOL = 1e-12


class InternalCheckError(RuntimeError):
    """A structural self-check failed (indicates a bug, not bad input)."""


class MarginalMismatchError(ValueError):
    """Joint/conditional marginals do not agree where the operation needs them to."""


# --------------------------------------------------------------------------
# two-output channels
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoOutputChannel:
    """Channel P(y,z|x) factored as pzx: X->Z and pyxz indexed [x][z][y].

    ``pyxz`` rows for (x,z) with pzx(z|x) = 0 are unconstrained; they are
    stored as NaN and must never enter a sum.
    """

    pzx: CondDist
    pyxz: np.ndarray
    unconstrained: frozenset

    def __init__(self, pzx, pyxz):
        if not isinstance(pzx, CondDist):
            pzx = CondDist(pzx)
        arr = np.asarray(pyxz, dtype=float)
        if arr.ndim != 3:
            raise InvalidDistributionError("pyxz must be [x][z][y]")
        nx, nz = pzx.n_inputs, pzx.n_outputs
        if arr.shape[:2] != (nx, nz):
            raise InvalidDistributionError(
                f"pyxz leading shape {arr.shape[:2]} does not match pzx {(nx, nz)}"
            )
        arr = arr.copy()
        dead = []
        for x in range(nx):
            for z in range(nz):
                if pzx.rows[x, z] <= 0:
                    dead.append((x, z))
                    arr[x, z, :] = np.nan
                else:
                    row = arr[x, z]
                    if np.any(np.isnan(row)):
                        raise InvalidDistributionError(f"pyxz row {(x, z)} required but missing")
                    if np.any(row < -1e-12) or abs(row.sum() - 1.0) > SIMPLEX_TOL:
                        raise InvalidDistributionError(f"pyxz row {(x, z)} is not a distribution")
                    arr[x, z] = np.maximum(row, 0.0)
        arr.setflags(write=False)
        object.__setattr__(self, "pzx", pzx)
        object.__setattr__(self, "pyxz", arr)
        object.__setattr__(self, "unconstrained", frozenset(dead))

    @property
    def nx(self) -> int:
        return self.pzx.n_inputs

    @property
    def nz(self) -> int:
        return self.pzx.n_outputs

    @property
    def ny(self) -> int:
        return self.pyxz.shape[2]

    def joint_rows(self) -> np.ndarray:
        """P(y,z|x) as an [x][y][z] array (NaN rows contribute zero mass)."""
        pyxz = np.where(np.isnan(self.pyxz), 0.0, self.pyxz)
        return np.einsum("xz,xzy->xyz", self.pzx.rows, pyxz)

    def marginal_y(self) -> CondDist:
        return CondDist(self.joint_rows().sum(axis=2))

    def to_json_dict(self) -> dict:
        py = [
            [None if (x, z) in self.unconstrained else self.pyxz[x, z].tolist() for z in range(self.nz)]
            for x in range(self.nx)
        ]
        return {"pzx": self.pzx.rows.tolist(), "pyxz": py}

    @staticmethod
    def from_json_dict(d: dict) -> "TwoOutputChannel":
        pzx = np.asarray(d["pzx"], dtype=float)
        raw = d["pyxz"]
        nx, nz = pzx.shape
        ny = None
        for x in range(nx):
            for z in range(nz):
                if raw[x][z] is not None:
                    ny = len(raw[x][z])
                    break
            if ny is not None:
                break
        if ny is None:
            raise InvalidDistributionError("pyxz contains no defined rows")
        arr = np.full((nx, nz, ny), np.nan)
        for x in range(nx):
            for z in range(nz):
                if raw[x][z] is not None:
                    arr[x, z] = np.asarray(raw[x][z], dtype=float)
        return TwoOutputChannel(pzx, arr)

    @staticmethod
    def load(path) -> "TwoOutputChannel":
        with open(path) as f:
            return TwoOutputChannel.from_json_dict(json.load(f))

    @staticmethod
    def from_joint_rows(rows) -> "TwoOutputChannel":
        """Build from P(y,z|x) given as an [x][y][z] array."""
        rows = np.asarray(rows, dtype=float)
        nx, ny, nz = rows.shape
        pzx = rows.sum(axis=1)
        pyxz = np.full((nx, nz, ny), np.nan)
        for x in range(nx):
            for z in range(nz):
                if pzx[x, z] > 0:
                    pyxz[x, z] = rows[x, :, z] / pzx[x, z]
        return TwoOutputChannel(CondDist(pzx), pyxz)

    @staticmethod
    def copy_channel(w) -> "TwoOutputChannel":
        """Z = Y duplicate of a DMC (pyxz(y|x,z) = 1{y=z}); member of every set."""
        m = w.matrix() if hasattr(w, "matrix") else np.asarray(w, dtype=float)
        nx, ny = m.shape
        pyxz = np.full((nx, ny, ny), np.nan)
        for x in range(nx):
            for z in range(ny):
                if m[x, z] > 0:
                    pyxz[x, z] = np.eye(ny)[z]
        return TwoOutputChannel(CondDist(m), pyxz)


def _metric_scores(q) -> np.ndarray:
    if isinstance(q, Metric):
        return q.scores
    return Metric(q).scores


def pair_score_table(ch: TwoOutputChannel, q) -> np.ndarray:
    """g[xt, x, z] = sum_y P(y|x,z) q(xt, y); NaN on unconstrained rows, -inf allowed."""
    scores = _metric_scores(q)
    nx, nz, ny = ch.nx, ch.nz, ch.ny
    g = np.full((nx, nx, nz), np.nan)
    for x in range(nx):
        for z in range(nz):
            if (x, z) in ch.unconstrained:
                continue
            row = ch.pyxz[x, z]
            for xt in range(nx):
                qs = scores[xt]
                if np.any((row > 0) & np.isneginf(qs)):
                    g[xt, x, z] = -np.inf
                else:
                    g[xt, x, z] = float(row @ np.where(np.isneginf(qs), 0.0, qs))
    return g


# --------------------------------------------------------------------------
# cross matrices and verdicts
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DqMatrix:
    """Per-z symmetric |X| x |X| cross matrices with zero diagonal.

    Entries touching an unconstrained row are NaN and carried in ``undefined``.
    """

    per_z: tuple
    undefined: tuple

    def matrix(self, z: int) -> np.ndarray:
        return self.per_z[z]


def build_dq(ch: TwoOutputChannel, q) -> DqMatrix:
    """D_z(i,j) = sum_y [P(y|i,z) - P(y|j,z)] [q(j,y) - q(i,y)].

    Symmetric with zero diagonal by construction.  A -inf score paired with
    positive probability makes the entry -inf.
    """
    g = pair_score_table(ch, q)
    mats, undef = [], []
    for z in range(ch.nz):
        m = np.zeros((ch.nx, ch.nx))
        u = np.zeros((ch.nx, ch.nx), dtype=bool)
        for i in range(ch.nx):
            for j in range(i + 1, ch.nx):
                if (i, z) in ch.unconstrained or (j, z) in ch.unconstrained:
                    m[i, j] = m[j, i] = np.nan
                    u[i, j] = u[j, i] = True
                    continue
                # D = [g(j;i,z) - g(i;i,z)] + [g(i;j,z) - g(j;j,z)]
                terms = (g[j, i, z], -g[i, i, z], g[i, j, z], -g[j, j, z])
                if any(np.isneginf(t) for t in (g[j, i, z], g[i, j, z])) or any(
                    np.isneginf(t) for t in (g[i, i, z], g[j, j, z])
                ):
                    neg = np.isneginf(g[j, i, z]) or np.isneginf(g[i, j, z])
                    pos = np.isneginf(g[i, i, z]) or np.isneginf(g[j, j, z])
                    if neg and pos:
                        raise IndeterminateMetricError(f"cross entry ({i},{j}) at z={z}: -inf minus -inf")
                    m[i, j] = m[j, i] = -np.inf if neg else np.inf
                    continue
                val = float(sum(terms))
                m[i, j] = m[j, i] = val
        m.setflags(write=False)
        mats.append(m)
        undef.append(u)
    return DqMatrix(tuple(mats), tuple(undef))


@dataclass(frozen=True)
class MembershipVerdict:
    set_name: str
    status: str  # IN / OUT / UNKNOWN
    numeric_margin: float
    certificate: Optional[dict] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status == "OUT" and self.certificate is None:
            raise InternalCheckError("OUT verdict without certificate")

    def to_json_dict(self) -> dict:
        return {
            "set": self.set_name,
            "status": self.status,
            "margin": self.numeric_margin,
            "certificate": self.certificate,
            "meta": self.meta,
        }


def _supported_inputs(ch: TwoOutputChannel, z: int, px: Optional[FinDist]) -> list:
    if px is None:
        return [x for x in range(ch.nx) if ch.pzx.rows[x, z] > 0]
    return [x for x in range(ch.nx) if px.probs[x] * ch.pzx.rows[x, z] > 0]


def member_psd(ch: TwoOutputChannel, q, px: Optional[FinDist] = None) -> MembershipVerdict:
    """PSD-set membership: every per-z cross matrix (restricted to inputs that
    can produce z) must be PSD; with a zero diagonal this is equivalent to the
    matrix vanishing, and both reads of the test are cross-checked.

    ``px`` optionally narrows the support; omitting it checks the channel-only
    condition, which is the one a P_X-free certificate needs.
    """
    dq = build_dq(ch, q)
    found = False
    worst = np.inf
    cert = None
    for z in range(ch.nz):
        sup = _supported_inputs(ch, z, px)
        if len(sup) < 2:
            continue
        sub = dq.per_z[z][np.ix_(sup, sup)]
        if np.any(np.isinf(sub)):
            i, j = np.argwhere(np.isinf(sub))[0]
            return MembershipVerdict(
                "Wpsd", "OUT", -np.inf,
                {"z": z, "pair": [sup[i], sup[j]],
                 "entry": "-inf" if np.isneginf(sub[i, j]) else "+inf"},
            )
        found = True
        max_abs = float(np.abs(sub[~np.eye(len(sup), dtype=bool)]).max())
        eigvals, eigvecs = np.linalg.eigh(sub)
        min_eig = float(eigvals[0])
        # zero-diagonal sandwich: -(k-1) max|entry| <= min_eig <= -max|entry|,
        # so the eigenvalue test and the entry test cannot disagree in sign
        k = len(sup)
        if max_abs > 0 and not (-(k - 1) * max_abs - 1e-9 <= min_eig <= -max_abs + 1e-9):
            raise InternalCheckError("eigenvalue/entry tests disagree beyond numerical slack")
        margin = -max_abs
        if margin < worst:
            worst = margin
            off = np.abs(sub - np.diag(np.diag(sub)))
            ij = np.unravel_index(off.argmax(), sub.shape)
            cert = {
                "z": z,
                "pair": [sup[ij[0]], sup[ij[1]]],
                "entry": float(sub[ij]),
                "min_eigenvalue": min_eig,
                "eigenvector": eigvecs[:, 0].tolist(),
                "inputs": sup,
            }
    if not found:
        return MembershipVerdict("Wpsd", "IN", np.inf, meta={"note": "no z with two supported inputs"})
    status = "IN" if worst >= -PSD_TOL else "OUT"
    return MembershipVerdict("Wpsd", status, worst, cert if status == "OUT" else None,
                             meta={"worst": cert})


def member_tilde(ch: TwoOutputChannel, q, px: FinDist) -> MembershipVerdict:
    """Pairwise-set membership at input distribution ``px``.

    The quadratic form sum_{x,xt} V(x)V(xt) D_z(x,xt) over distributions V
    supported inside supp P(X|Z=z) is nonnegative iff every supported
    off-diagonal entry is: the diagonal is zero, so a uniform distribution on
    a violating pair witnesses any negative entry.
    """
    pxz = compose(px, ch.pzx).probs
    pz = pxz.sum(axis=0)
    dq = build_dq(ch, q)
    found = False
    worst = np.inf
    cert = None
    for z in range(ch.nz):
        if pz[z] <= 0:
            continue
        sup = [x for x in range(ch.nx) if pxz[x, z] > 0]
        for ai in range(len(sup)):
            for bi in range(ai + 1, len(sup)):
                a, b = sup[ai], sup[bi]
                found = True
                val = dq.per_z[z][a, b]
                margin = -np.inf if np.isneginf(val) else float(val)
                if margin < worst:
                    worst = margin
                    v = np.zeros(ch.nx)
                    v[a] = v[b] = 0.5
                    cert = {"z": z, "pair": [a, b], "entry": margin, "witness_v": v.tolist()}
    if not found:
        return MembershipVerdict("Wtilde", "IN", np.inf, meta={"note": "no supported pairs"})
    status = "IN" if worst >= -PAIR_TOL else "OUT"
    return MembershipVerdict("Wtilde", status, worst, cert if status == "OUT" else None,
                             meta={"worst_pair": cert})


# --------------------------------------------------------------------------
# LP memberships (symmetric and comparison sets)
# --------------------------------------------------------------------------


def _lp_min(c, A_eq, b_eq, bounds):
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if not res.success:
        raise InternalCheckError(f"LP unexpectedly failed: {res.message}")
    return float(res.fun), res.x


def _base_metric_value(ch: TwoOutputChannel, q, pxz: np.ndarray):
    """E q(X,Y) under pxz x P(y|x,z); -inf propagates."""
    g = pair_score_table(ch, q)
    total = 0.0
    for x in range(ch.nx):
        for z in range(ch.nz):
            if pxz[x, z] <= 0:
                continue
            v = g[x, x, z]
            if np.isneginf(v):
                return -np.inf
            total += pxz[x, z] * v
    return total


def _sym_lp_arrays(ch, q, px, diagonal_floor: bool):
    """Assemble the symmetric-coupling LP in variables V(xt, x, z)."""
    nx, nz = ch.nx, ch.nz
    pxz = compose(px, ch.pzx).probs
    pz = pxz.sum(axis=0)
    g = pair_score_table(ch, q)

    def vid(xt, x, z):
        return (xt * nx + x) * nz + z

    nvar = nx * nx * nz
    cost = np.zeros(nvar)
    neg_cells = []
    ub = np.ones(nvar)
    for xt in range(nx):
        for x in range(nx):
            for z in range(nz):
                if pxz[x, z] <= 0:
                    ub[vid(xt, x, z)] = 0.0  # forced off the support
                    continue
                val = g[xt, x, z]
                if np.isneginf(val):
                    neg_cells.append(vid(xt, x, z))
                else:
                    cost[vid(xt, x, z)] = val
    rows, rhs = [], []
    for x in range(nx):
        for z in range(nz):
            r = np.zeros(nvar)
            for xt in range(nx):
                r[vid(xt, x, z)] = 1.0
            rows.append(r)
            rhs.append(pxz[x, z])
    for xt in range(nx):
        for x in range(xt + 1, nx):
            for z in range(nz):
                r = np.zeros(nvar)
                r[vid(xt, x, z)] = 1.0
                r[vid(x, xt, z)] = -1.0
                rows.append(r)
                rhs.append(0.0)
    lb = np.zeros(nvar)
    if diagonal_floor:
        for x in range(nx):
            for z in range(nz):
                if pz[z] > 0 and pxz[x, z] > 0:
                    lb[vid(x, x, z)] = pxz[x, z] ** 2 / pz[z]
    return cost, np.array(rows), np.array(rhs), lb, ub, neg_cells, pxz, vid


def member_sym(ch: TwoOutputChannel, q, px: FinDist, variant: str = "sym") -> MembershipVerdict:
    """Symmetric-coupling membership via a small LP.

    variant 'tilde_sym': min over symmetric V(xt,x,z) with V_{XZ} pinned.
    variant 'sym': additionally V(x,x,z) >= P(x|z) * P_{XZ}(x,z).

    Accepts a TypeDependentMetric declared convex; the additive path stays an
    LP because Y is integrated out through the fixed P(y|x,z).
    """
    if variant not in ("sym", "tilde_sym"):
        raise ValueError(f"unknown variant {variant!r}")
    name = "Wsym" if variant == "sym" else "WtildeSym"
    if isinstance(q, TypeDependentMetric):
        return _member_sym_type_dependent(ch, q, px, variant, name)

    cost, A, b, lb, ub, neg_cells, pxz, vid = _sym_lp_arrays(ch, q, px, variant == "sym")
    base = _base_metric_value(ch, q, pxz)
    if np.isneginf(base):
        return MembershipVerdict(name, "UNKNOWN", np.nan,
                                 meta={"reason": "E q(X,Y) = -inf; objective indeterminate"})
    bounds = list(zip(lb, ub))
    if neg_cells:
        # can any feasible coupling put mass on a -inf scored cell?
        probe = np.zeros_like(cost)
        probe[neg_cells] = -1.0
        val, x = _lp_min(probe, A, b, bounds)
        if -val > LP_TOL:
            nx, nz = ch.nx, ch.nz
            return MembershipVerdict(
                name, "OUT", -np.inf,
                {"v_xtxz": x.reshape(nx, nx, nz).tolist(), "objective": "-inf",
                 "neg_inf_mass": -val},
            )
        for i in neg_cells:
            bounds[i] = (0.0, 0.0)
    opt, xval = _lp_min(cost, A, b, bounds)
    opt -= base
    nx, nz = ch.nx, ch.nz
    v = xval.reshape(nx, nx, nz)
    status = "IN" if opt >= -LP_TOL else "OUT"
    cert = {"v_xtxz": v.tolist(), "objective": opt} if status == "OUT" else None
    return MembershipVerdict(name, status, float(opt), cert, meta={"variant": variant})


def _member_sym_type_dependent(ch, q: TypeDependentMetric, px, variant, name):
    if not q.convex:
        raise ValueError("type-dependent membership requires a metric declared convex")
    from scipy.optimize import minimize

    nx, nz, ny = ch.nx, ch.nz, ch.ny
    pxz = compose(px, ch.pzx).probs
    pz = pxz.sum(axis=0)
    pyxz = np.where(np.isnan(ch.pyxz), 0.0, ch.pyxz)
    pxy = np.einsum("xz,xzy->xy", pxz, pyxz)
    base = q(JointDist(pxy, ("X", "Y"), renormalize=True))

    def vxty(v):
        return np.einsum("txz,xzy->ty", v.reshape(nx, nx, nz), pyxz)

    def obj(flat):
        m = np.maximum(vxty(flat), 0.0)  # SLSQP iterates may carry dust
        s = m.sum()
        m = m / s if s > 0 else np.full_like(m, 1.0 / m.size)
        return q(JointDist(m, ("XT", "Y"), renormalize=True)) - base

    cons = []
    for x in range(nx):
        for z in range(nz):
            idx = [(t * nx + x) * nz + z for t in range(nx)]
            cons.append({"type": "eq", "fun": lambda f, idx=idx, r=pxz[x, z]: f[idx].sum() - r})
    for t in range(nx):
        for x in range(t + 1, nx):
            for z in range(nz):
                a, bidx = (t * nx + x) * nz + z, (x * nx + t) * nz + z
                cons.append({"type": "eq", "fun": lambda f, a=a, b=bidx: f[a] - f[b]})
    lo = np.zeros(nx * nx * nz)
    if variant == "sym":
        for x in range(nx):
            for z in range(nz):
                if pz[z] > 0:
                    lo[(x * nx + x) * nz + z] = pxz[x, z] ** 2 / pz[z]
    start = np.zeros((nx, nx, nz))
    for x in range(nx):
        start[x, x, :] = pxz[x, :]
    res = minimize(obj, start.ravel(), method="SLSQP", constraints=cons,
                   bounds=[(l, 1.0) for l in lo], options={"maxiter": 500, "ftol": 1e-12})
    opt = float(res.fun)
    status = "IN" if opt >= -LP_TOL else "OUT"
    cert = {"v_xtxz": res.x.reshape(nx, nx, nz).tolist(), "objective": opt} if status == "OUT" else None
    return MembershipVerdict(name, status, opt, cert,
                             meta={"variant": variant, "metric": "type_dependent"})


def member_comparison_sets(ch: TwoOutputChannel, q, px: FinDist, which: str) -> MembershipVerdict:
    """Membership in the comparison sets 'theta_star' or 'm_max' (LPs)."""
    if which not in ("theta_star", "m_max"):
        raise ValueError(f"unknown comparison set {which!r}")
    nx, nz, ny = ch.nx, ch.nz, ch.ny
    pxz = compose(px, ch.pzx).probs
    base = _base_metric_value(ch, q, pxz)
    name = "ThetaStar" if which == "theta_star" else "Mmax"
    if np.isneginf(base):
        return MembershipVerdict(name, "UNKNOWN", np.nan,
                                 meta={"reason": "E q(X,Y) = -inf; objective indeterminate"})
    scores = _metric_scores(q)
    pyxz = np.where(np.isnan(ch.pyxz), 0.0, ch.pyxz)

    if which == "m_max":
        # variables V(xt, x, z), Markov xt-(x,z)-y built in
        g = pair_score_table(ch, q)

        def vid(xt, x, z):
            return (xt * nx + x) * nz + z

        nvar = nx * nx * nz
        cost = np.zeros(nvar)
        neg_cells = []
        ub = np.ones(nvar)
        for xt in range(nx):
            for x in range(nx):
                for z in range(nz):
                    if pxz[x, z] <= 0:
                        ub[vid(xt, x, z)] = 0.0
                        continue
                    val = g[xt, x, z]
                    if np.isneginf(val):
                        neg_cells.append(vid(xt, x, z))
                    else:
                        cost[vid(xt, x, z)] = val
        rows, rhs = [], []
        for x in range(nx):
            for z in range(nz):
                r = np.zeros(nvar)
                for xt in range(nx):
                    r[vid(xt, x, z)] = 1.0
                rows.append(r)
                rhs.append(pxz[x, z])
        for xt in range(nx):
            for z in range(nz):
                r = np.zeros(nvar)
                for x in range(nx):
                    r[vid(xt, x, z)] = 1.0
                rows.append(r)
                rhs.append(pxz[xt, z])
        shape = (nx, nx, nz)
        key = "v_xtxz"
    else:
        # variables V(xt, x, y, z), no Markov constraint
        pxyz = np.einsum("xz,xzy->xyz", pxz, pyxz)

        def vid(xt, x, y, z):
            return ((xt * nx + x) * ny + y) * nz + z

        nvar = nx * nx * ny * nz
        cost = np.zeros(nvar)
        neg_cells = []
        ub = np.ones(nvar)
        for xt in range(nx):
            for x in range(nx):
                for y in range(ny):
                    for z in range(nz):
                        if pxyz[x, y, z] <= 0:
                            ub[vid(xt, x, y, z)] = 0.0
                            continue
                        val = scores[xt, y]
                        if np.isneginf(val):
                            neg_cells.append(vid(xt, x, y, z))
                        else:
                            cost[vid(xt, x, y, z)] = val
        rows, rhs = [], []
        for x in range(nx):
            for y in range(ny):
                for z in range(nz):
                    r = np.zeros(nvar)
                    for xt in range(nx):
                        r[vid(xt, x, y, z)] = 1.0
                    rows.append(r)
                    rhs.append(pxyz[x, y, z])
        for xt in range(nx):
            for z in range(nz):
                r = np.zeros(nvar)
                for x in range(nx):
                    for y in range(ny):
                        r[vid(xt, x, y, z)] = 1.0
                rows.append(r)
                rhs.append(pxz[xt, z])
        shape = (nx, nx, ny, nz)
        key = "v_xtxyz"

    A, b = np.array(rows), np.array(rhs)
    bounds = [(0.0, u) for u in ub]
    if neg_cells:
        probe = np.zeros(nvar)
        probe[neg_cells] = -1.0
        val, xsol = _lp_min(probe, A, b, bounds)
        if -val > LP_TOL:
            return MembershipVerdict(name, "OUT", -np.inf,
                                     {key: xsol.reshape(shape).tolist(), "objective": "-inf"})
        for i in neg_cells:
            bounds[i] = (0.0, 0.0)
    opt, xsol = _lp_min(cost, A, b, bounds)
    opt -= base
    status = "IN" if opt >= -LP_TOL else "OUT"
    cert = {key: xsol.reshape(shape).tolist(), "objective": float(opt)} if status == "OUT" else None
    return MembershipVerdict(name, status, float(opt), cert, meta={"set": which})


# --------------------------------------------------------------------------
# the base (auxiliary-kernel) set
# --------------------------------------------------------------------------


def delta_q(pxzu: JointDist, pyxz, q) -> float:
    """The quadratic functional over an auxiliary joint P(x,z,u).

    Sum over (x,z,u,xt,y) of P(u,z) P(x|u,z) P(xt|u,z) P(y|x,z)
    [q(xt,y) - q(x,y)], with the conditionals obtained by Bayes reversal of
    the supplied joint.
    """
    for ax in ("X", "Z", "U"):
        pxzu.axis(ax)
    arr = pxzu.marginal(("U", "Z", "X")).probs  # (U, Z, X)
    nu, nz, nx = arr.shape
    py = pyxz.rows.reshape(nx, nz, -1) if isinstance(pyxz, CondDist) else np.asarray(pyxz, dtype=float)
    pxz_mass = arr.sum(axis=0).T  # (X, Z)
    if np.any((pxz_mass > 0) & np.isnan(py).any(axis=2)):
        raise MarginalMismatchError("delta_q: P(y|x,z) undefined on a positive-mass (x,z) pair")
    py = np.where(np.isnan(py), 0.0, py)
    puz = arr.sum(axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        x_given_uz = np.where(puz[:, :, None] > 0, arr / np.where(puz[:, :, None] > 0, puz[:, :, None], 1.0), 0.0)
    # lifted joint over (XT, X, Z, Y)
    j = np.einsum("uz,uzx,uzt,xzy->txzy", puz, x_given_uz, x_given_uz, py)
    total = j.sum()
    if total <= 0:
        raise InvalidDistributionError("delta_q: degenerate joint")
    from .metrics import metric_diff

    joint = JointDist(j / total, ("XT", "X", "Z", "Y"), renormalize=True)
    return float(metric_diff(q, joint)) * float(total)


def lift_pair_witness(ch: TwoOutputChannel, px: FinDist, z_star: int, a: int, b: int) -> JointDist:
    """Lift a violating pair (a,b) at z_star to an auxiliary joint P(x,z,u).

    The conditional P(X|U=u0, Z=z_star) becomes uniform on {a, b}; every other
    (u, z) cell is a point mass, so only the violating pair contributes to the
    functional.
    """
    pxz = compose(px, ch.pzx).probs
    nx, nz = pxz.shape
    nu = nx + 1
    u_pair = nx
    pxz_cond = pxz  # joint mass P(x, z)
    joint = np.zeros((nx, nz, nu))
    for x in range(nx):
        for z in range(nz):
            if pxz_cond[x, z] <= 0:
                continue
            if z == z_star and x in (a, b):
                pz = pxz_cond[:, z].sum()
                alpha = 2.0 * min(pxz_cond[a, z], pxz_cond[b, z]) / pz  # mixture weight of the pair cell
                put = 0.5 * alpha * pz  # mass routed to (u_pair, x, z), equal for x = a, b
                joint[x, z, u_pair] = put
                joint[x, z, x] = pxz_cond[x, z] - put
            else:
                joint[x, z, x] = pxz_cond[x, z]
    return JointDist(joint, ("X", "Z", "U"))


@dataclass(frozen=True)
class WqBudget:
    restarts: int = 64
    iterations: int = 500
    seed: int = 0


def _wq_heuristic(ch: TwoOutputChannel, q, px: FinDist, budget: WqBudget):
    """Batched projected-gradient minimization of the kernel functional.

    Returns (best value, best kernel as P(u|x,z) of shape (X, Z, U)).
    Cells with a -inf pair score on supported inputs are resolved before
    calling this (they force the minimum to -inf).
    """
    from .optimize import project_rows_to_simplex

    pxz = compose(px, ch.pzx).probs
    nx, nz = pxz.shape
    nu = nx * nx * nz
    dq = build_dq(ch, q)
    d = np.zeros((nx, nx, nz))
    for z in range(nz):
        m = dq.per_z[z]
        d[:, :, z] = np.where(np.isnan(m), 0.0, m)
    sup_w = (pxz[:, None, :] > 0) & (pxz[None, :, :] > 0)
    d = np.where(sup_w, d, 0.0)

    rng_seeds = np.random.SeedSequence(budget.seed).spawn(budget.restarts)
    ks = np.stack(
        [np.random.default_rng(s).dirichlet(np.ones(nu), size=(nx, nz)) for s in rng_seeds]
    )  # (B, X, Z, U)
    # deterministic extra start: uniform kernel
    ks[0] = np.full((nx, nz, nu), 1.0 / nu)
    scale = 1.0 / (1.0 + np.abs(d).max())

    def value_and_grad(k):
        mu = np.einsum("xz,bxzu->buxz", pxz, k)
        nuz = mu.sum(axis=2)  # (B, U, Z)
        safe = np.where(nuz > 0, nuz, 1.0)
        inner = np.einsum("buxz,butz,xtz->buz", mu, mu, d)  # quadratic in mu
        h = 0.5 * inner / safe
        val = h.sum(axis=(1, 2))
        gm = np.einsum("butz,xtz->buxz", mu, d) / safe[:, :, None, :] - (h / safe)[:, :, None, :]
        gk = pxz[None, :, :, None] * np.moveaxis(gm, 1, 3)  # (B, X, Z, U)
        return val, gk

    best_val = np.full(budget.restarts, np.inf)
    best_k = ks.copy()
    for t in range(budget.iterations):
        val, gk = value_and_grad(ks)
        improved = val < best_val
        best_val = np.where(improved, val, best_val)
        best_k[improved] = ks[improved]
        step = scale / np.sqrt(t + 1.0)
        ks = project_rows_to_simplex(ks - step * gk)
    val, _ = value_and_grad(ks)
    improved = val < best_val
    best_val = np.where(improved, val, best_val)
    best_k[improved] = ks[improved]
    i = int(best_val.argmin())
    return float(best_val[i]), best_k[i]


def member_wq(ch: TwoOutputChannel, q, px: FinDist, budget: WqBudget = WqBudget()) -> MembershipVerdict:
    """Membership in the base set, decided as far as soundness allows.

    IN is returned via the pairwise-set inclusion (a pairwise member is a base
    member).  A pairwise violation is lifted to an explicit auxiliary kernel
    whose functional value is negative, giving a certified OUT.  Otherwise a
    seeded multi-start projected-gradient search hunts for a negative kernel;
    absence of a counterexample is reported as UNKNOWN with the budget, never
    as a certified IN (the inner problem is nonconvex).
    """
    tilde = member_tilde(ch, q, px)
    if tilde.status == "IN":
        return MembershipVerdict("W_q", "IN", tilde.numeric_margin,
                                 meta={"via": "pairwise-set inclusion"})
    pxz = compose(px, ch.pzx).probs
    if tilde.status == "OUT":
        cert = tilde.certificate
        pxzu = lift_pair_witness(ch, px, cert["z"], *cert["pair"])
        val = delta_q(pxzu, ch.pyxz, q)
        if val < -WQ_TOL:
            return MembershipVerdict(
                "W_q", "OUT", float(val),
                {"p_xzu": pxzu.probs.tolist(), "delta": float(val),
                 "lifted_from": cert},
                meta={"via": "pairwise witness lifting"},
            )
    # -inf diagonal score on the support makes E q(X,Y) = -inf: indeterminate
    g = pair_score_table(ch, q)
    for z in range(ch.nz):
        for x in range(ch.nx):
            if pxz[x, z] > 0 and np.isneginf(g[x, x, z]):
                return MembershipVerdict(
                    "W_q", "UNKNOWN", np.nan, None,
                    meta={"reason": "E q(X,Y) = -inf; functional indeterminate"},
                )
    # -inf off-diagonal pair scores reachable on the support force the minimum to -inf
    for z in range(ch.nz):
        for x in range(ch.nx):
            for xt in range(ch.nx):
                if xt == x:
                    continue
                if pxz[x, z] > 0 and pxz[xt, z] > 0 and np.isneginf(g[xt, x, z]):
                    pxzu = lift_pair_witness(ch, px, z, min(x, xt), max(x, xt))
                    return MembershipVerdict(
                        "W_q", "OUT", -np.inf,
                        {"p_xzu": pxzu.probs.tolist(), "delta": "-inf",
                         "neg_inf_cell": [xt, x, z]},
                        meta={"via": "-inf pair score"},
                    )
    val, kernel = _wq_heuristic(ch, q, px, budget)
    if val < -WQ_TOL:
        joint = JointDist(np.einsum("xz,xzu->xzu", pxz, kernel), ("X", "Z", "U"), renormalize=True)
        return MembershipVerdict(
            "W_q", "OUT", float(val),
            {"p_xzu": joint.probs.tolist(), "delta": float(val)},
            meta={"via": "multistart search", "budget": vars(budget)},
        )
    return MembershipVerdict(
        "W_q", "UNKNOWN", float(val), None,
        meta={"leaning": "IN", "note": "no counterexample found", "budget": vars(budget)},
    )


# --------------------------------------------------------------------------
# zero-pattern set
# --------------------------------------------------------------------------


def gamma_dominated_mask(q, rho) -> np.ndarray:
    """Boolean [x][y][z] mask of cells forced to zero for the pattern set."""
    qs = _metric_scores(q)
    rs = _metric_scores(rho)
    with np.errstate(invalid="ignore"):
        s = rs[:, None, :] - qs[:, :, None]  # (x, y, z)
    if np.any(np.isnan(s)):
        raise IndeterminateMetricError("gamma pattern: -inf minus -inf score difference")
    m = s.max(axis=0, keepdims=True)
    # IEEE semantics do the right thing at +-inf: -inf < -inf and inf < inf are False
    return s < m - GAMMA_MAX_TOL


def member_gamma(ch: TwoOutputChannel, q, rho) -> MembershipVerdict:
    """Zero-pattern membership: strictly dominated (x,y,z) cells carry no mass."""
    if _metric_scores(rho).shape[0] != ch.nx:
        raise MarginalMismatchError("rho must be defined over X x Z")
    dominated = gamma_dominated_mask(q, rho)
    joint = ch.joint_rows()  # (x, y, z)
    viol = np.where(dominated, joint, 0.0)
    worst = float(viol.max())
    if worst > 0:
        x, y, z = np.unravel_index(viol.argmax(), viol.shape)
        return MembershipVerdict(
            "Gamma", "OUT", -worst,
            {"triple": [int(x), int(y), int(z)], "mass": worst},
        )
    return MembershipVerdict("Gamma", "IN", 0.0, meta={"pattern_cells": int(dominated.sum())})


# --------------------------------------------------------------------------
# certificate re-evaluation
# --------------------------------------------------------------------------


def recheck_certificate(ch: TwoOutputChannel, q, verdict: MembershipVerdict,
                        px: FinDist = None, rho=None) -> float:
    """Recompute the margin of an OUT certificate from its witness payload."""
    if verdict.status != "OUT":
        raise ValueError("recheck_certificate expects an OUT verdict")
    cert = verdict.certificate
    name = verdict.set_name
    if name in ("Wpsd", "Wtilde"):
        dq = build_dq(ch, q)
        a, b = cert["pair"]
        val = dq.per_z[cert["z"]][a, b]
        return -np.inf if np.isneginf(val) else (float(val) if name == "Wtilde" else -abs(float(val)))
    if name in ("Wsym", "WtildeSym", "Mmax"):
        v = np.asarray(cert["v_xtxz"], dtype=float)
        g = pair_score_table(ch, q)
        pxz = compose(px, ch.pzx).probs
        base = _base_metric_value(ch, q, pxz)
        gm = np.where(np.isnan(g), 0.0, g)
        if np.any((v > 0) & np.isneginf(g)):
            return -np.inf
        return float(np.einsum("txz,txz->", v, np.where(np.isneginf(gm), 0.0, gm)) - base)
    if name == "ThetaStar":
        v = np.asarray(cert["v_xtxyz"], dtype=float)
        scores = _metric_scores(q)
        pxz = compose(px, ch.pzx).probs
        base = _base_metric_value(ch, q, pxz)
        s = scores[:, None, :, None]
        if np.any((v > 0) & np.isneginf(np.broadcast_to(s, v.shape))):
            return -np.inf
        return float((v * np.where(np.isneginf(s), 0.0, s)).sum() - base)
    if name == "W_q":
        if cert.get("delta") == "-inf":
            return -np.inf
        pxzu = JointDist(np.asarray(cert["p_xzu"], dtype=float), ("X", "Z", "U"), renormalize=True)
        return float(delta_q(pxzu, ch.pyxz, q))
    if name == "Gamma":
        x, y, z = cert["triple"]
        return -float(ch.joint_rows()[x, y, z])
    raise ValueError(f"no recheck rule for set {name!r}")
