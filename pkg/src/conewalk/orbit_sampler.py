"""Group-case engine: radial random matrices on p x q space and their walks.

A radial random matrix with radial part s is X = Q s, where Q is a Haar
frame on the Stiefel manifold of orthonormal q-frames in F^p.  The walk
S_n = X_1 + ... + X_n is tracked either

* directly, accumulating the running p x q sum ("direct"), or
* through its radial part alone ("polar"): conditionally on the past, the
  radial part a of S_{n-1} couples to the new increment only through
  V = U* Q, the top q x q block of a Haar frame, giving the exact update
  a^2 <- a^2 + s^2 + a V s + s V* a.  This costs O(q^3) per step
  regardless of p, which makes dimensions like p = 1e5 feasible.

Both routes sample the same trajectory law; "direct" is the literal
construction and serves as the oracle in equivalence tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cone_linalg as cl
from .errors import NumericalFailureError
from .radial_laws import RadialLaw, _std_entries

# "auto" walk method switches from the literal p x q accumulation to the
# polar recursion above this dimension
DIRECT_P_LIMIT = 64


def sample_stiefel_frame(p: int, q: int, field: str, rng: np.random.Generator,
                         size=None) -> np.ndarray:
    """Haar-distributed orthonormal q-frame(s) in F^p.

    Gaussian matrix followed by thin QR with the R-diagonal phase forced
    positive, which makes the factorization unique and the law exactly
    invariant under left multiplication by any fixed unitary.
    """
    if p < q:
        raise ValueError("stiefel frame requires p >= q")
    n = 1 if size is None else int(size)
    g = _std_entries(rng, (n, p, q), field)
    qmat, r = np.linalg.qr(g)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    mod = np.abs(diag)
    safe = np.where(mod > 0, mod, 1.0)
    phase = np.where(mod > 0, diag / safe, 1.0)
    qmat = qmat * np.conj(phase)[..., None, :]
    return qmat if size is not None else qmat[0]


def stiefel_block(p: int, q: int, field: str, rng: np.random.Generator,
                  size=None) -> np.ndarray:
    """Exact law of the top q x q block of a Haar frame, in O(q^3) per draw.

    With G = [G1; G2] Gaussian (G1 the top q x q block), the polar frame is
    G (G*G)^{-1/2} and its top block is V = G1 (G1*G1 + W)^{-1/2} where
    W = G2*G2 is Wishart with p - q degrees of freedom; W is drawn by the
    Bartlett factorization, so p never enters the matrix sizes.
    """
    if p < q:
        raise ValueError("stiefel block requires p >= q")
    if p == q:
        # the block is the whole frame: a Haar unitary, best taken from QR
        return sample_stiefel_frame(p, q, field, rng, size)
    n = 1 if size is None else int(size)
    g1 = _std_entries(rng, (n, q, q), field)
    m = cl.herm_part(np.swapaxes(np.conj(g1), -1, -2) @ g1)
    dof = p - q
    if dof > 0:
        if dof >= q:
            w = _wishart_bartlett(q, dof, field, rng, n)
        else:
            g2 = _std_entries(rng, (n, dof, q), field)
            w = cl.herm_part(np.swapaxes(np.conj(g2), -1, -2) @ g2)
        m = m + w
    v = g1 @ _inv_sqrt_psd(m)
    return v if size is not None else v[0]


def _wishart_bartlett(q: int, dof: int, field: str, rng: np.random.Generator,
                      n: int) -> np.ndarray:
    """Wishart(I_q, dof) draws via the Bartlett factorization (dof >= q)."""
    a = np.zeros((n, q, q), dtype=cl.field_dtype(field))
    for i in range(q):
        if field == cl.REAL:
            a[:, i, i] = np.sqrt(rng.chisquare(dof - i, n))
        else:
            a[:, i, i] = np.sqrt(rng.gamma(dof - i, 1.0, n))
        if i > 0:
            a[:, i, :i] = _std_entries(rng, (n, i), field)
    return cl.herm_part(a @ np.swapaxes(np.conj(a), -1, -2))


def _inv_sqrt_psd(m: np.ndarray) -> np.ndarray:
    w, u = np.linalg.eigh(m)
    w = np.maximum(w, 1e-300)
    return np.einsum("...ik,...k,...jk->...ij", u, 1.0 / np.sqrt(w), np.conj(u))


def radial_projection_coeff(p: int, field: str, rng: np.random.Generator,
                            size) -> np.ndarray:
    """Real part of the q = 1 Haar block: the projection of a uniform unit
    vector in F^p onto a fixed direction.

    Density proportional to (1 - w^2)^{(d(p-1) - 1)/2} on (-1, 1).  Real
    p = 3 is exactly uniform, real p = 5 has the closed-form inverse CDF
    w = 2 sin(arcsin(u)/3); the general case uses w = g / sqrt(g^2 + c)
    with c chi-square (gamma over C) independent of the Gaussian g.
    """
    if field == cl.REAL:
        if p == 1:
            return np.sign(rng.standard_normal(size))
        if p == 3:
            return rng.uniform(-1.0, 1.0, size)
        if p == 5:
            return 2.0 * np.sin(np.arcsin(rng.uniform(-1.0, 1.0, size)) / 3.0)
        g = rng.standard_normal(size)
        c = rng.chisquare(p - 1, size)
        return g / np.sqrt(g * g + c)
    # complex: only Re(V) enters the q = 1 radial recursion
    re = rng.standard_normal(size)
    im = rng.standard_normal(size)
    g2 = 0.5 * (re * re + im * im)
    c = rng.gamma(p - 1, 1.0, size) if p > 1 else 0.0
    return (re / np.sqrt(2.0)) / np.sqrt(g2 + c)


def sample_radial_matrix(law: RadialLaw, p: int, rng: np.random.Generator,
                         size=None) -> np.ndarray:
    """Radial random matrix X = Q s with Q Haar and s ~ law independent.

    By construction (X*X)^{1/2} equals the drawn radial part exactly.
    """
    if p < law.q:
        raise ValueError("radial matrix requires p >= q")
    n = 1 if size is None else int(size)
    qmat = sample_stiefel_frame(p, law.q, law.field, rng, n)
    s = law.sample(rng, n)
    x = qmat @ s
    return x if size is not None else x[0]


def wishart_sample(p: int, q: int, field: str, rng: np.random.Generator,
                   size=None) -> np.ndarray:
    """G*G / p for a standard Gaussian p x q matrix G; mean is I_q.

    This is the p-degrees-of-freedom Wishart limit element appearing in
    the fixed-n, large-p analysis, normalized to unit mean.
    """
    n = 1 if size is None else int(size)
    g = _std_entries(rng, (n, p, q), field)
    w = cl.herm_part(np.swapaxes(np.conj(g), -1, -2) @ g) / p
    return w if size is not None else w[0]


@dataclass(frozen=True)
class GroupWalkConfig:
    """Parameters of a group-case radial walk."""

    p: int
    q: int
    field: str
    n_steps: int
    law: RadialLaw
    checkpoints: tuple[int, ...]
    method: str = "auto"

    def __post_init__(self):
        cl.check_field(self.field)
        if self.q < 1 or self.p < 1:
            raise ValueError("p and q must be positive")
        if self.q > 1 and self.p < self.q:
            raise ValueError("matrix walks require p >= q")
        if self.law.q != self.q or self.law.field != self.field:
            raise ValueError("law dimensions do not match the walk")
        cps = tuple(int(c) for c in self.checkpoints)
        if not cps or list(cps) != sorted(set(cps)):
            raise ValueError("checkpoints must be nonempty, sorted, unique")
        if cps[0] < 1 or cps[-1] > self.n_steps:
            raise ValueError("checkpoints must lie in [1, n_steps]")
        if self.method not in ("auto", "direct", "polar"):
            raise ValueError("method must be auto, direct or polar")
        object.__setattr__(self, "checkpoints", cps)

    def resolved_method(self) -> str:
        if self.method != "auto":
            return self.method
        return "direct" if self.p <= DIRECT_P_LIMIT else "polar"


@dataclass(frozen=True)
class WalkTrajectory:
    """Checkpointed squared radial parts of a batch of walks.

    values has shape (checkpoints, replicates) holding ||S_n||^2 when
    q = 1, else (checkpoints, replicates, q, q) holding S_n* S_n.
    """

    steps: tuple[int, ...]
    q: int
    values: np.ndarray

    def tr_squared(self) -> np.ndarray:
        """tr(S_n* S_n) per checkpoint and replicate, always real."""
        if self.q == 1:
            return self.values
        return np.trace(self.values, axis1=-2, axis2=-1).real

    def replicate_count(self) -> int:
        return self.values.shape[1]


def run_group_walks(cfg: GroupWalkConfig, rng: np.random.Generator,
                    replicates: int) -> WalkTrajectory:
    """Simulate a batch of independent group-case walks.

    The accumulated state is a single running p x q sum (direct) or the
    q x q radial part (polar); increments are never materialized as a
    history.
    """
    method = cfg.resolved_method()
    with np.errstate(over="ignore", invalid="ignore"):
        if cfg.q == 1:
            values = _walk_q1(cfg, rng, replicates, method)
        else:
            values = _walk_matrix(cfg, rng, replicates, method)
    if not np.all(np.isfinite(values if cfg.q == 1 else values.view(np.float64))):
        raise NumericalFailureError("walk accumulation overflowed", payload=None)
    return WalkTrajectory(steps=cfg.checkpoints, q=cfg.q, values=values)


def run_group_walk(cfg: GroupWalkConfig, rng: np.random.Generator) -> WalkTrajectory:
    """Single-trajectory convenience wrapper."""
    return run_group_walks(cfg, rng, 1)


def _walk_q1(cfg, rng, n, method):
    cps = cfg.checkpoints
    out = np.empty((len(cps), n))
    k = 0
    if method == "direct":
        s = np.zeros((n, cfg.p), dtype=cl.field_dtype(cfg.field))
        for step in range(1, cfg.n_steps + 1):
            g = _std_entries(rng, (n, cfg.p), cfg.field)
            norm = np.sqrt(np.sum(np.abs(g) ** 2, axis=1))
            r = cfg.law.sample_scalar(rng, n)
            s += g * (r / norm)[:, None]
            if step == cps[k]:
                out[k] = np.sum(np.abs(s) ** 2, axis=1)
                k += 1
                if k == len(cps):
                    break
    else:
        a = np.zeros(n)
        for step in range(1, cfg.n_steps + 1):
            r = cfg.law.sample_scalar(rng, n)
            w = radial_projection_coeff(cfg.p, cfg.field, rng, n)
            a = np.sqrt(np.maximum(a * a + r * r + 2.0 * a * r * w, 0.0))
            if step == cps[k]:
                out[k] = a * a
                k += 1
                if k == len(cps):
                    break
    return out


def _walk_matrix(cfg, rng, n, method):
    cps = cfg.checkpoints
    q = cfg.q
    out = np.empty((len(cps), n, q, q), dtype=cl.field_dtype(cfg.field))
    k = 0
    if method == "direct":
        s = np.zeros((n, cfg.p, q), dtype=cl.field_dtype(cfg.field))
        for step in range(1, cfg.n_steps + 1):
            frames = sample_stiefel_frame(cfg.p, q, cfg.field, rng, n)
            incr = frames @ cfg.law.sample(rng, n)
            s += incr
            if step == cps[k]:
                out[k] = cl.herm_part(np.swapaxes(np.conj(s), -1, -2) @ s)
                k += 1
                if k == len(cps):
                    break
    else:
        a = np.zeros((n, q, q), dtype=cl.field_dtype(cfg.field))
        for step in range(1, cfg.n_steps + 1):
            smat = cfg.law.sample(rng, n)
            v = stiefel_block(cfg.p, q, cfg.field, rng, n)
            avs = a @ v @ smat
            t2 = a @ a + smat @ smat + avs + np.swapaxes(np.conj(avs), -1, -2)
            a = cl.psd_sqrt(cl.clamp_psd(cl.herm_part(t2)))
            if step == cps[k]:
                out[k] = a @ a
                k += 1
                if k == len(cps):
                    break
    return out
