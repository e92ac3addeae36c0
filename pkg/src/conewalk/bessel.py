"""General-index engine on the PSD cone.

The convolution of two point masses at r and s is the law of

    t = sqrt(r^2 + s^2 + s v r + r v* s)

with v drawn from the density proportional to det(I - v v*)^(mu - rho) on
the contraction ball D_q = {v : v*v < I}, rho = d(q - 1/2) + 1.  The big
index mu interpolates the group cases mu = p d / 2; as mu -> infinity the
convolution degenerates to the deterministic semigroup rule
t = sqrt(r^2 + s^2).

The contraction sampler is exact rejection sampling.  For exponent
e = mu - rho >= 1/2 the proposal is Gaussian with coordinate variance
1/(2e) and acceptance det(I - v v*)^e * exp(e <v, v>), which is a valid
probability because log det(I - M) <= -tr M for 0 <= M < I.  For
0 <= e < 1/2 the proposal is uniform on D_q (rejection from the enclosing
Frobenius ball) with acceptance det(I - v v*)^e <= 1.  Indices below rho
would need an unbounded acceptance ratio and are rejected up front.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import cone_linalg as cl
from .errors import NumericalFailureError, SamplerStallError, StableRangeError
from .orbit_sampler import WalkTrajectory
from .radial_laws import RadialLaw, _std_entries

# series evaluation of the one-dimensional character
_SERIES_F64_MAX = 12.0   # float64 term-recurrence is reliable up to here
_SERIES_ARG_MAX = 200.0  # beyond this the validated accuracy claim ends


@dataclass(frozen=True)
class BesselParam:
    """Index triple (mu, q, d) with the critical index rho = d(q-1/2)+1.

    The convolution exists for mu > rho - 1; the large-index comparison
    bounds additionally need mu >= 2 rho, which callers of those bounds
    assert via require_lemma_range().
    """

    mu: float
    q: int
    d: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError("d must be 1 (real) or 2 (complex)")
        if self.q < 1:
            raise ValueError("q must be positive")
        if not self.mu > self.rho - 1:
            raise ValueError(
                f"mu={self.mu} outside the existence range mu > rho-1 = {self.rho - 1}")

    @property
    def rho(self) -> float:
        return self.d * (self.q - 0.5) + 1.0

    @property
    def field(self) -> str:
        return cl.REAL if self.d == 1 else cl.COMPLEX

    def require_lemma_range(self) -> None:
        if self.mu < 2 * self.rho:
            raise ValueError(
                f"mu={self.mu} below the comparison-bound range mu >= 2*rho = {2 * self.rho}")


def sample_contraction(param: BesselParam, rng: np.random.Generator, size=None,
                       _stall_window: int = 10**7,
                       _stall_rate: float = 1e-6) -> np.ndarray:
    """Draw matrices from the contraction density on D_q, shape (size, q, q)."""
    flat = _sample_contraction_flat(param, rng, 1 if size is None else int(size),
                                    _stall_window, _stall_rate)
    if param.q == 1:
        out = flat.reshape(-1, 1, 1)
    else:
        out = flat
    return out if size is not None else out[0]


def _sample_contraction_flat(param, rng, n, stall_window, stall_rate):
    """Core rejection loop; returns (n,) scalars for q = 1, else (n, q, q)."""
    e = param.mu - param.rho
    if e < 0:
        raise ValueError(
            f"contraction sampler requires mu >= rho (mu={param.mu}, rho={param.rho}); "
            "for rho-1 < mu < rho the uniform-proposal acceptance is unbounded")
    q, field = param.q, param.field
    if q == 1:
        out = np.empty(n, dtype=cl.field_dtype(field))
    else:
        out = np.empty((n, q, q), dtype=cl.field_dtype(field))
    filled = 0
    proposals = 0
    accepts = 0
    while filled < n:
        k = int(min(max(2 * (n - filled), 1024), 4_000_000))
        v = _propose(e, q, field, rng, k)
        in_ball, logdet, tr = _ball_stats(v, q)
        if e >= 0.5:
            # validity of the Gaussian envelope: log det(I-vv*) + tr(v v*) <= 0
            gap = np.where(in_ball, logdet + tr, 0.0)
            assert np.all(gap <= 1e-9), "rejection envelope violated"
            log_acc = e * gap
        else:
            log_acc = e * np.where(in_ball, logdet, 0.0)
        u = rng.random(k)
        acc = in_ball & (np.log(u) < log_acc)
        take = min(int(np.count_nonzero(acc)), n - filled)
        if take:
            out[filled:filled + take] = v[acc][:take]
            filled += take
        proposals += k
        accepts += int(np.count_nonzero(acc))
        if proposals >= stall_window and accepts < stall_rate * proposals:
            raise SamplerStallError(param.mu, param.q, proposals, accepts)
    return out


def _propose(e, q, field, rng, k):
    dim = (1 if field == cl.REAL else 2) * q * q
    if e >= 0.5:
        scale = 1.0 / math.sqrt(2.0 * e)
        if q == 1:
            if field == cl.REAL:
                return scale * rng.standard_normal(k)
            return scale * (rng.standard_normal(k) + 1j * rng.standard_normal(k))
        if field == cl.REAL:
            return scale * rng.standard_normal((k, q, q))
        return scale * (rng.standard_normal((k, q, q))
                        + 1j * rng.standard_normal((k, q, q)))
    # uniform on the Frobenius ball of radius sqrt(q) enclosing D_q
    x = rng.standard_normal((k, dim))
    radius = math.sqrt(q) * rng.random(k) ** (1.0 / dim)
    x *= (radius / np.sqrt(np.sum(x * x, axis=1)))[:, None]
    if q == 1:
        return x[:, 0] if field == cl.REAL else x[:, 0] + 1j * x[:, 1]
    if field == cl.REAL:
        return x.reshape(k, q, q)
    return x[:, :q * q].reshape(k, q, q) + 1j * x[:, q * q:].reshape(k, q, q)


def _ball_stats(v, q):
    """(membership of D_q, log det(I - v v*), tr(v v*)) per candidate."""
    if q == 1:
        lam = np.abs(v) ** 2
        in_ball = lam < 1.0
        logdet = np.log1p(-np.where(in_ball, lam, 0.0))
        return in_ball, logdet, lam
    if q == 2:
        # closed forms: for M = v v*, det(I-M) = 1 - tr M + det M and
        # (2x2 hermitian) I-M is PD iff its trace and determinant are positive
        trm = np.sum(np.abs(v) ** 2, axis=(-2, -1))
        detv = v[..., 0, 0] * v[..., 1, 1] - v[..., 0, 1] * v[..., 1, 0]
        detm = np.abs(detv) ** 2
        det_i = 1.0 - trm + detm
        in_ball = (det_i > 0.0) & (2.0 - trm > 0.0)
        logdet = np.log(np.where(in_ball, det_i, 1.0))
        return in_ball, logdet, trm
    m = np.einsum("...ij,...kj->...ik", v, np.conj(v))
    lam = np.linalg.eigvalsh(cl.herm_part(m))
    lam = np.maximum(lam, 0.0)
    in_ball = lam[..., -1] < 1.0
    safe = np.where(in_ball[..., None], lam, 0.0)
    logdet = np.sum(np.log1p(-safe), axis=-1)
    return in_ball, logdet, np.sum(lam, axis=-1)


def _convolve_given_v(r, s, v):
    """t^2 = r^2 + s^2 + s v r + r v* s for stacked hermitian r, s."""
    svr = s @ v @ r
    return cl.herm_part(r @ r + s @ s + svr + np.swapaxes(np.conj(svr), -1, -2))


def convolve_points(r: np.ndarray, s: np.ndarray, param: BesselParam,
                    rng: np.random.Generator, size=None) -> np.ndarray:
    """One draw (or a batch) from the convolution of point masses at r, s."""
    n = 1 if size is None else int(size)
    r = np.asarray(r, dtype=cl.field_dtype(param.field))
    s = np.asarray(s, dtype=cl.field_dtype(param.field))
    if r.ndim == 0:
        r = r.reshape(1, 1)
    if s.ndim == 0:
        s = s.reshape(1, 1)
    v = sample_contraction(param, rng, n)
    t2 = _convolve_given_v(r, s, v)
    t = cl.psd_sqrt(cl.clamp_psd(t2))
    return t if size is not None else t[0]


def convolve_points_scalar(r, s, param: BesselParam, rng: np.random.Generator,
                           size=None) -> np.ndarray:
    """q = 1 fast path: t = sqrt(r^2 + s^2 + 2 r s Re v) on plain floats."""
    if param.q != 1:
        raise ValueError("scalar convolution requires q = 1")
    n = 1 if size is None else int(size)
    v = _sample_contraction_flat(param, rng, n, 10**7, 1e-6)
    w = v.real if param.d == 2 else v
    r = np.asarray(r, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    t = np.sqrt(np.maximum(r * r + s * s + 2.0 * r * s * w, 0.0))
    return t if size is not None else float(t[0])


def semigroup_convolve(r: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Deterministic large-index limit sqrt(r^2 + s^2)."""
    r = np.asarray(r)
    s = np.asarray(s)
    if r.ndim == 0 and s.ndim == 0:
        return np.sqrt(r * r + s * s)
    return cl.psd_sqrt(cl.clamp_psd(cl.herm_part(r @ r + s @ s)))


def kappa_mu(param: BesselParam, n_samples: int,
             rng: np.random.Generator) -> tuple[float, float]:
    """Importance-sampling estimate of the normalization constant.

    kappa = integral over D_q of det(I - v*v)^(mu-rho) dv.  The sampler
    never needs it (rejection is self-normalizing); this exists for
    validation against quadrature.  Returns (estimate, standard error).
    """
    e = param.mu - param.rho
    if e < 0:
        raise ValueError("kappa estimation requires mu >= rho")
    q, field = param.q, param.field
    dim = (1 if field == cl.REAL else 2) * q * q
    if e >= 0.5:
        const = (math.pi / e) ** (dim / 2.0)
    else:
        const = (math.pi ** (dim / 2.0)) * (math.sqrt(q) ** dim) / math.gamma(dim / 2.0 + 1.0)
    total = 0.0
    total_sq = 0.0
    done = 0
    chunk = 1_000_000
    while done < n_samples:
        k = min(chunk, n_samples - done)
        v = _propose(e, q, field, rng, k)
        in_ball, logdet, tr = _ball_stats(v, q)
        if e >= 0.5:
            g = np.where(in_ball, np.exp(e * (logdet + tr)), 0.0)
        else:
            g = np.where(in_ball, np.exp(e * logdet), 0.0)
        total += float(np.sum(g))
        total_sq += float(np.sum(g * g))
        done += k
    mean = total / n_samples
    var = max(total_sq / n_samples - mean * mean, 0.0)
    return const * mean, const * math.sqrt(var / n_samples)


def kappa_quadrature_1d(mu: float, d: int = 1) -> float:
    """q = 1 reference value of kappa by adaptive quadrature."""
    from scipy.integrate import quad

    rho = d * 0.5 + 1.0
    if mu < rho:
        raise ValueError("quadrature reference requires mu >= rho")
    if d == 1:
        val, _ = quad(lambda t: (1.0 - t * t) ** (mu - 1.5), -1.0, 1.0)
    else:
        val, _ = quad(lambda t: 2.0 * math.pi * t * (1.0 - t * t) ** (mu - 2.0), 0.0, 1.0)
    return val


@dataclass(frozen=True)
class BesselWalkConfig:
    """Parameters of a random walk under the index-mu convolution."""

    param: BesselParam
    law: RadialLaw
    n_steps: int
    checkpoints: tuple[int, ...]

    def __post_init__(self):
        if self.law.q != self.param.q or self.law.field != self.param.field:
            raise ValueError("law dimensions do not match the walk parameter")
        cps = tuple(int(c) for c in self.checkpoints)
        if not cps or list(cps) != sorted(set(cps)):
            raise ValueError("checkpoints must be nonempty, sorted, unique")
        if cps[0] < 1 or cps[-1] > self.n_steps:
            raise ValueError("checkpoints must lie in [1, n_steps]")
        object.__setattr__(self, "checkpoints", cps)


def run_bessel_walks(cfg: BesselWalkConfig, rng: np.random.Generator,
                     replicates: int) -> WalkTrajectory:
    """Simulate a batch of walks: S_0 = 0 and each step convolves the
    current state with a fresh increment from the law."""
    cps = cfg.checkpoints
    q = cfg.param.q
    k = 0
    if q == 1:
        out = np.empty((len(cps), replicates))
        a = np.zeros(replicates)
        for step in range(1, cfg.n_steps + 1):
            s = cfg.law.sample_scalar(rng, replicates)
            v = _sample_contraction_flat(cfg.param, rng, replicates, 10**7, 1e-6)
            w = v.real if cfg.param.d == 2 else v
            a = np.sqrt(np.maximum(a * a + s * s + 2.0 * a * s * w, 0.0))
            if step == cps[k]:
                out[k] = a * a
                k += 1
                if k == len(cps):
                    break
    else:
        out = np.empty((len(cps), replicates, q, q), dtype=cl.field_dtype(cfg.param.field))
        a = np.zeros((replicates, q, q), dtype=cl.field_dtype(cfg.param.field))
        for step in range(1, cfg.n_steps + 1):
            s = cfg.law.sample(rng, replicates)
            v = sample_contraction(cfg.param, rng, replicates)
            t2 = _convolve_given_v(a, s, v)
            a = cl.psd_sqrt(cl.clamp_psd(t2))
            if step == cps[k]:
                out[k] = a @ a
                k += 1
                if k == len(cps):
                    break
    if not np.all(np.isfinite(out if q == 1 else out.view(np.float64))):
        raise NumericalFailureError("walk accumulation overflowed", payload=None)
    return WalkTrajectory(steps=cps, q=q, values=out)


def run_bessel_walk(cfg: BesselWalkConfig, rng: np.random.Generator) -> WalkTrajectory:
    return run_bessel_walks(cfg, rng, 1)


# -- one-dimensional characters ---------------------------------------------


def bessel_character_1d(mu: float, r, s) -> np.ndarray | float:
    """The q = 1 character value j_{mu-1}(r s) = 0F1(mu; -(r s)^2 / 4).

    Series summation with the term-ratio recurrence; float64 for small
    arguments, arbitrary precision (same recurrence) where float64 would
    lose the cancellation battle.  Validated relative accuracy 1e-10 for
    r s <= 50; arguments beyond _SERIES_ARG_MAX raise StableRangeError.
    """
    if mu <= 0:
        raise ValueError("character requires mu > 0")
    x = np.asarray(r, dtype=np.float64) * np.asarray(s, dtype=np.float64)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if np.any(x < 0):
        raise ValueError("character arguments must be nonnegative")
    if np.any(x > _SERIES_ARG_MAX):
        raise StableRangeError(
            f"argument {float(np.max(x)):.3g} beyond validated range {_SERIES_ARG_MAX}")
    out = np.empty_like(x)
    small = x <= _SERIES_F64_MAX
    if np.any(small):
        out[small] = _j_series_f64(mu, x[small])
    for i in np.nonzero(~small)[0]:
        out[i] = _j_series_mp(mu, float(x[i]))
    return float(out[0]) if scalar else out


def _j_series_f64(mu: float, x: np.ndarray) -> np.ndarray:
    if x.size == 0:
        return np.empty_like(x)
    z = -0.25 * x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    k = 0
    # terms decay once k exceeds |x|/2; cap is generous
    kmax = int(np.ceil(np.max(x, initial=0.0))) + 60
    while k < kmax:
        term = term * z / ((mu + k) * (k + 1.0))
        total += term
        k += 1
        if np.max(np.abs(term)) < 1e-18 * max(np.max(np.abs(total)), 1e-300):
            break
    return total


def _j_series_mp(mu: float, x: float) -> float:
    import mpmath as mp

    # digits must absorb both the alternating-term cancellation (max term
    # grows like e^x) and the smallness of the oscillation amplitude
    # Gamma(mu) (2/x)^(mu-1) / sqrt(x)
    amp_digits = max(0.0, (mu - 1.0) * math.log10(max(x, 2.0) / 2.0)
                     - math.lgamma(mu) / math.log(10.0))
    dps = 30 + int(0.45 * x + amp_digits)
    with mp.workdps(dps):
        mu_mp = mp.mpf(mu)
        z = -mp.mpf(x) ** 2 / 4
        term = mp.mpf(1)
        total = mp.mpf(1)
        tiny = mp.mpf(10) ** (-dps)
        k = 0
        while True:
            term = term * z / ((mu_mp + k) * (k + 1))
            total += term
            k += 1
            if k > x / 2 and abs(term) < tiny * max(abs(total), tiny):
                break
        return float(total)


# -- large-index comparison -------------------------------------------------


@dataclass(frozen=True)
class ClippedQuadraticForm:
    """Test function f(x) = min(Re tr(x^2 P), cap) for PSD direction P.

    |f(sqrt(a)) - f(sqrt(b))| <= ||P||_F * ||a - b||, so the function is
    root-Lipschitz with constant ||P||_F.
    """

    direction: np.ndarray
    cap: float

    @property
    def lipschitz(self) -> float:
        return float(cl.frob_norm(self.direction))

    def value_from_square(self, x2: np.ndarray) -> np.ndarray:
        x2 = np.asarray(x2)
        if x2.ndim == 0 or (x2.ndim == 1):
            d00 = float(np.asarray(self.direction).reshape(-1)[0].real)
            return np.minimum(d00 * x2, self.cap)
        quad = np.einsum("...ij,ji->...", x2, self.direction).real
        return np.minimum(quad, self.cap)


def root_lipschitz_gap(law: RadialLaw, param: BesselParam, n: int,
                       f: ClippedQuadraticForm, reps: int,
                       rng: np.random.Generator) -> tuple[float, float]:
    """Paired Monte Carlo estimate of |E f(S_n^mu) - E f(S_n^semigroup)|.

    Both compositions consume the same increment draws; only the walk
    composition rule differs, so the difference isolates the index-mu
    correction.  Returns (gap, standard error of the paired difference).
    """
    diffs = paired_composition_diffs(law, param, n, f, reps, rng)
    gap = abs(float(np.mean(diffs)))
    se = float(np.std(diffs, ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    return gap, se


def paired_composition_diffs(law: RadialLaw, param: BesselParam, n: int,
                             f: ClippedQuadraticForm, reps: int,
                             rng: np.random.Generator) -> np.ndarray:
    """Per-replicate f(S_n with index-mu composition) - f(S_n with the
    semigroup composition), both walks fed the same increments."""
    param.require_lemma_range()
    q = param.q
    if q == 1:
        s = np.asarray(law.sample_scalar(rng, (reps, n)), dtype=np.float64)
        bullet_sq = np.sum(s * s, axis=1)
        a = np.zeros(reps)
        for kstep in range(n):
            v = _sample_contraction_flat(param, rng, reps, 10**7, 1e-6)
            w = v.real if param.d == 2 else v
            sk = s[:, kstep]
            a = np.sqrt(np.maximum(a * a + sk * sk + 2.0 * a * sk * w, 0.0))
        star_sq = a * a
    else:
        s = law.sample(rng, reps * n).reshape(reps, n, q, q)
        bullet_sq = cl.herm_part(np.einsum("rnij,rnjk->rik", s, s))
        a = np.zeros((reps, q, q), dtype=cl.field_dtype(param.field))
        for kstep in range(n):
            v = sample_contraction(param, rng, reps)
            t2 = _convolve_given_v(a, s[:, kstep], v)
            a = cl.psd_sqrt(cl.clamp_psd(t2))
        star_sq = cl.herm_part(a @ a)
    return np.asarray(f.value_from_square(star_sq) - f.value_from_square(bullet_sq),
                      dtype=np.float64)
