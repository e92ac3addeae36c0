"""Catalogue of sampleable radial laws on the PSD cone with moment metadata.

A law is a probability measure on the cone of PSD q x q matrices; scalar
laws embed as 1 x 1 matrices so the q = 1 case and the matrix case share
one interface.  Every shipped variant has a finite fourth moment.

Moment conventions: m_k is the k-th moment of the Hilbert-Schmidt norm,
sigma2 is the matrix-valued second moment E[s^2], and sigma2_image_cov is
the covariance of vec(s^2) in the orthonormal hermitian coordinates of
:mod:`cone_linalg` (the limit covariance of the large-index CLTs).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cone_linalg as cl
from .errors import ConfigError

KINDS = (
    "point_mass",
    "finite_mixture",
    "two_point",
    "log_normal",
    "uniform",
    "wishart_root",
)

_SCALAR_KINDS = ("two_point", "log_normal", "uniform")

# deterministic stream for Monte Carlo moment estimation
_MC_SEED = 927121


@dataclass(frozen=True)
class MomentData:
    """Moment metadata of a radial law.

    exactness is "analytic" or "monte_carlo"; Monte Carlo entries carry
    the sample count and a dict of standard errors.
    """

    q: int
    field: str
    m1: float
    m2: float
    m3: float
    m4: float
    sigma2: np.ndarray
    sigma2_image_cov: np.ndarray
    exactness: str
    mc_samples: int | None = None
    mc_std_error: dict | None = None

    def __post_init__(self):
        slack = 1e-9 * (1.0 + self.m2 + self.m4)
        if self.m1**2 > self.m2 + slack or self.m2**2 > self.m4 + slack:
            raise ValueError("moment data violates Cauchy-Schwarz ordering")
        if abs(cl.trace_herm(self.sigma2) - self.m2) > 1e-8 * (1.0 + self.m2):
            raise ValueError("tr(sigma2) != m2")
        wmin = float(np.linalg.eigvalsh(cl.herm_part(self.sigma2))[0])
        if wmin < -1e-9 * (1.0 + self.m2):
            raise ValueError("sigma2 is not PSD")

    @property
    def sigma4(self) -> float:
        """(m2)^2; the sigma^4 appearing in the q = 1 moment identities."""
        return self.m2**2


@dataclass(frozen=True)
class RadialLaw:
    """A sampleable radial law.  Use the classmethod constructors."""

    kind: str
    q: int
    field: str
    atom: np.ndarray | None = None
    atoms: np.ndarray | None = None
    weights: np.ndarray | None = None
    a: float | None = None
    b: float | None = None
    p_a: float | None = None
    log_mean: float | None = None
    log_sd: float | None = None
    lo: float | None = None
    hi: float | None = None
    scale: np.ndarray | None = None
    dof: int | None = None

    # -- constructors ------------------------------------------------------

    @classmethod
    def point_mass(cls, atom, field: str = cl.REAL) -> "RadialLaw":
        atom = _as_psd_atom(atom, field)
        return cls(kind="point_mass", q=atom.shape[-1], field=field, atom=atom)

    @classmethod
    def finite_mixture(cls, atoms, weights, field: str = cl.REAL) -> "RadialLaw":
        atoms = np.stack([_as_psd_atom(s, field) for s in atoms])
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (atoms.shape[0],):
            raise ValueError("weights must match the number of atoms")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1 within 1e-12")
        return cls(kind="finite_mixture", q=atoms.shape[-1], field=field,
                   atoms=atoms, weights=weights)

    @classmethod
    def two_point(cls, a: float, b: float, p_a: float, field: str = cl.REAL) -> "RadialLaw":
        if a < 0 or b < 0:
            raise ValueError("two_point atoms must be nonnegative")
        if not 0.0 <= p_a <= 1.0:
            raise ValueError("p_a must be a probability")
        return cls(kind="two_point", q=1, field=field, a=float(a), b=float(b), p_a=float(p_a))

    @classmethod
    def log_normal(cls, log_mean: float, log_sd: float, field: str = cl.REAL) -> "RadialLaw":
        if log_sd <= 0:
            raise ValueError("log_sd must be positive")
        return cls(kind="log_normal", q=1, field=field,
                   log_mean=float(log_mean), log_sd=float(log_sd))

    @classmethod
    def uniform(cls, lo: float, hi: float, field: str = cl.REAL) -> "RadialLaw":
        if lo < 0 or hi <= lo:
            raise ValueError("uniform law requires 0 <= lo < hi")
        return cls(kind="uniform", q=1, field=field, lo=float(lo), hi=float(hi))

    @classmethod
    def wishart_root(cls, scale, dof: int, field: str = cl.REAL) -> "RadialLaw":
        scale = _as_psd_atom(scale, field)
        q = scale.shape[-1]
        if dof < q:
            raise ValueError("wishart_root requires dof >= q")
        return cls(kind="wishart_root", q=q, field=field, scale=scale, dof=int(dof))

    # -- sampling ----------------------------------------------------------

    def sample_scalar(self, rng: np.random.Generator, size=None) -> np.ndarray | float:
        """Draw radii as plain floats (q = 1 laws only)."""
        if self.q != 1:
            raise ValueError("scalar sampling requires q = 1")
        if self.kind == "point_mass":
            val = float(self.atom[0, 0].real)
            return val if size is None else np.full(size, val)
        if self.kind == "finite_mixture":
            vals = self.atoms[:, 0, 0].real.astype(np.float64)
            idx = rng.choice(len(vals), size=size, p=self.weights)
            return vals[idx]
        if self.kind == "two_point":
            u = rng.random(size)
            return np.where(u < self.p_a, self.a, self.b)
        if self.kind == "log_normal":
            return np.exp(rng.normal(self.log_mean, self.log_sd, size))
        if self.kind == "uniform":
            return rng.uniform(self.lo, self.hi, size)
        if self.kind == "wishart_root":
            s00 = float(self.scale[0, 0].real)
            if self.field == cl.REAL:
                g2 = rng.chisquare(self.dof, size)
            else:
                g2 = rng.gamma(self.dof, 1.0, size)
            return np.sqrt(s00 * g2)
        raise ValueError(f"unknown law kind {self.kind!r}")

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        """Draw PSD matrices of shape (size, q, q) (or (q, q) for size None)."""
        if self.kind == "point_mass":
            if size is None:
                return self.atom.copy()
            return np.broadcast_to(self.atom, (size,) + self.atom.shape).copy()
        if self.kind == "finite_mixture":
            idx = rng.choice(len(self.weights), size=size, p=self.weights)
            return self.atoms[idx]
        if self.kind in _SCALAR_KINDS:
            r = self.sample_scalar(rng, size)
            out = np.asarray(r, dtype=np.float64).reshape(np.shape(r) + (1, 1))
            if self.field == cl.COMPLEX:
                out = out.astype(np.complex128)
            return out if size is not None else out.reshape(1, 1)
        if self.kind == "wishart_root":
            n = 1 if size is None else int(size)
            root = cl.psd_sqrt(self.scale)
            g = _std_entries(rng, (n, self.dof, self.q), self.field)
            g = g @ root
            gram = cl.herm_part(np.swapaxes(np.conj(g), -1, -2) @ g)
            out = cl.psd_sqrt(cl.clamp_psd(gram))
            return out if size is not None else out[0]
        raise ValueError(f"unknown law kind {self.kind!r}")

    # -- serialization ------------------------------------------------------

    def to_spec(self) -> dict:
        """JSON-able canonical description (inverse of from_spec)."""
        spec: dict = {"kind": self.kind, "q": self.q, "field": self.field}
        if self.kind == "point_mass":
            spec["atom"] = _matrix_to_json(self.atom, self.field)
        elif self.kind == "finite_mixture":
            spec["atoms"] = [_matrix_to_json(s, self.field) for s in self.atoms]
            spec["weights"] = [float(w) for w in self.weights]
        elif self.kind == "two_point":
            spec.update(a=self.a, b=self.b, p_a=self.p_a)
        elif self.kind == "log_normal":
            spec.update(log_mean=self.log_mean, log_sd=self.log_sd)
        elif self.kind == "uniform":
            spec.update(lo=self.lo, hi=self.hi)
        elif self.kind == "wishart_root":
            spec["scale"] = _matrix_to_json(self.scale, self.field)
            spec["dof"] = self.dof
        return spec


def law_from_spec(spec: dict) -> RadialLaw:
    """Build a law from its JSON description (the harness law sub-schema).

    Matrix-valued entries accept either "atom"/"atoms"/"scale" (the matrix
    itself) or the squared variants "atom_squared"/"atoms_squared" (the PSD
    square root is taken at parse time).  Scalars are accepted for q = 1.
    """
    if not isinstance(spec, dict):
        raise ConfigError("law", "law spec must be an object")
    kind = spec.get("kind")
    if kind not in KINDS:
        raise ConfigError("law.kind", f"unknown law kind {kind!r}; expected one of {KINDS}")
    field = spec.get("field", cl.REAL)
    cl.check_field(field)
    try:
        if kind == "point_mass":
            atom = _matrix_from_spec(spec, "atom", field)
            return RadialLaw.point_mass(atom, field=field)
        if kind == "finite_mixture":
            if "atoms_squared" in spec:
                atoms = [cl.psd_sqrt(cl.clamp_psd(_to_matrix(s, field)))
                         for s in spec["atoms_squared"]]
            elif "atoms" in spec:
                atoms = [_to_matrix(s, field) for s in spec["atoms"]]
            else:
                raise ConfigError("law.atoms", "finite_mixture needs 'atoms' or 'atoms_squared'")
            return RadialLaw.finite_mixture(atoms, spec["weights"], field=field)
        if kind == "two_point":
            return RadialLaw.two_point(spec["a"], spec["b"], spec["p_a"], field=field)
        if kind == "log_normal":
            return RadialLaw.log_normal(spec["log_mean"], spec["log_sd"], field=field)
        if kind == "uniform":
            return RadialLaw.uniform(spec["lo"], spec["hi"], field=field)
        if kind == "wishart_root":
            scale = _matrix_from_spec(spec, "scale", field)
            return RadialLaw.wishart_root(scale, spec["dof"], field=field)
    except KeyError as exc:
        raise ConfigError(f"law.{exc.args[0]}", "missing required law parameter") from exc
    except ValueError as exc:
        raise ConfigError("law", str(exc)) from exc
    raise ConfigError("law.kind", f"unhandled law kind {kind!r}")


def normalize_matrix_spec(value, field: str):
    """Validated, hermitized echo of a matrix config entry.

    Idempotent (hermitizing a hermitian matrix is exact), so canonical
    configs containing matrices round-trip byte-identically.
    """
    return _matrix_to_json(_to_matrix(value, field), field)


def normalize_law_spec(spec: dict) -> dict:
    """Canonical JSON form of a law spec: validated, defaults filled,
    matrix payloads hermitized but never reconstructed through an
    eigenbasis (so canonicalization is idempotent)."""
    law = law_from_spec(spec)  # full validation
    kind = spec["kind"]
    field = spec.get("field", cl.REAL)
    out = {"kind": kind, "q": law.q, "field": field}
    if "q" in spec and int(spec["q"]) != law.q:
        raise ConfigError("law.q", f"declared q={spec['q']} but payload implies q={law.q}")
    if kind == "point_mass":
        key = "atom_squared" if "atom_squared" in spec else "atom"
        out[key] = normalize_matrix_spec(spec[key], field)
    elif kind == "finite_mixture":
        key = "atoms_squared" if "atoms_squared" in spec else "atoms"
        out[key] = [normalize_matrix_spec(s, field) for s in spec[key]]
        out["weights"] = [float(w) for w in spec["weights"]]
    elif kind == "two_point":
        out.update(a=float(spec["a"]), b=float(spec["b"]), p_a=float(spec["p_a"]))
    elif kind == "log_normal":
        out.update(log_mean=float(spec["log_mean"]), log_sd=float(spec["log_sd"]))
    elif kind == "uniform":
        out.update(lo=float(spec["lo"]), hi=float(spec["hi"]))
    elif kind == "wishart_root":
        key = "scale_squared" if "scale_squared" in spec else "scale"
        out[key] = normalize_matrix_spec(spec[key], field)
        out["dof"] = int(spec["dof"])
    return out


def moments(law: RadialLaw, mc_samples: int = 10**6, mc_seed: int = _MC_SEED) -> MomentData:
    """Moment metadata; analytic where closed forms exist, else Monte Carlo.

    The Monte Carlo branch (wishart_root) uses a private deterministic
    stream so the metadata is reproducible and independent of any walk
    simulation that consumes it.
    """
    if law.kind == "point_mass":
        return _atomic_moments(law, law.atom[None, ...], np.array([1.0]))
    if law.kind == "finite_mixture":
        return _atomic_moments(law, law.atoms, law.weights)
    if law.kind in _SCALAR_KINDS:
        mk = _scalar_raw_moments(law)
        sigma2 = np.array([[mk[2]]])
        img = np.array([[mk[4] - mk[2] ** 2]])
        return MomentData(q=1, field=law.field, m1=mk[1], m2=mk[2], m3=mk[3], m4=mk[4],
                          sigma2=sigma2 if law.field == cl.REAL else sigma2.astype(np.complex128),
                          sigma2_image_cov=img, exactness="analytic")
    if law.kind == "wishart_root":
        return _mc_moments(law, mc_samples, mc_seed)
    raise ValueError(f"unknown law kind {law.kind!r}")


# -- helpers ---------------------------------------------------------------


def _as_psd_atom(s, field: str) -> np.ndarray:
    mat = _to_matrix(s, field)
    return cl.clamp_psd(mat)


def _to_matrix(s, field: str) -> np.ndarray:
    arr = np.asarray(s)
    if np.iscomplexobj(arr):
        if field == cl.REAL:
            raise ValueError("complex entries in a real-field matrix")
    elif field == cl.COMPLEX:
        arr = np.asarray(arr, dtype=np.float64)
        # JSON form of complex matrices: entries as [re, im] pairs
        if arr.ndim == 3 and arr.shape[-1] == 2:
            arr = arr[..., 0] + 1j * arr[..., 1]
    arr = arr.astype(cl.field_dtype(field))
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    return cl.herm_part(arr)


def _matrix_from_spec(spec: dict, key: str, field: str) -> np.ndarray:
    if f"{key}_squared" in spec:
        return cl.psd_sqrt(cl.clamp_psd(_to_matrix(spec[f"{key}_squared"], field)))
    return _to_matrix(spec[key], field)


def _matrix_to_json(mat: np.ndarray, field: str):
    if field == cl.REAL:
        return [[float(x) for x in row] for row in np.asarray(mat).real]
    return [[[float(x.real), float(x.imag)] for x in row] for row in np.asarray(mat)]


def _std_entries(rng: np.random.Generator, shape, field: str) -> np.ndarray:
    """I.i.d. standard entries with E|g|^2 = 1 over the given field."""
    if field == cl.REAL:
        return rng.standard_normal(shape)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)


def _scalar_raw_moments(law: RadialLaw) -> dict[int, float]:
    ks = (1, 2, 3, 4)
    if law.kind == "two_point":
        return {k: law.p_a * law.a**k + (1 - law.p_a) * law.b**k for k in ks}
    if law.kind == "log_normal":
        return {k: float(np.exp(k * law.log_mean + 0.5 * k**2 * law.log_sd**2)) for k in ks}
    if law.kind == "uniform":
        lo, hi = law.lo, law.hi
        return {k: (hi ** (k + 1) - lo ** (k + 1)) / ((k + 1) * (hi - lo)) for k in ks}
    raise ValueError(law.kind)


def _atomic_moments(law: RadialLaw, atoms: np.ndarray, weights: np.ndarray) -> MomentData:
    sq = np.einsum("nij,njk->nik", atoms, atoms)
    norms = cl.frob_norm(atoms)
    mk = [float(np.sum(weights * norms**k)) for k in (1, 2, 3, 4)]
    sigma2 = cl.herm_part(np.einsum("n,nij->ij", weights, sq))
    vec = cl.vectorize_herm(sq, law.field)
    mean_vec = weights @ vec
    img = np.einsum("n,ni,nj->ij", weights, vec, vec) - np.outer(mean_vec, mean_vec)
    img = 0.5 * (img + img.T)
    return MomentData(q=law.q, field=law.field, m1=mk[0], m2=mk[1], m3=mk[2], m4=mk[3],
                      sigma2=sigma2, sigma2_image_cov=img, exactness="analytic")


def _mc_moments(law: RadialLaw, n_samples: int, seed: int) -> MomentData:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    dim = cl.herm_vec_dim(law.q, law.field)
    cnt = 0
    s_norm = np.zeros(4)
    s_norm2 = np.zeros(4)
    s_vec = np.zeros(dim)
    s_outer = np.zeros((dim, dim))
    s_sq = np.zeros((law.q, law.q), dtype=cl.field_dtype(law.field))
    chunk = 200_000
    while cnt < n_samples:
        k = min(chunk, n_samples - cnt)
        s = law.sample(rng, k)
        sq = cl.herm_part(np.einsum("nij,njk->nik", s, s))
        h = cl.frob_norm(s)
        pw = np.stack([h, h**2, h**3, h**4])
        s_norm += pw.sum(axis=1)
        s_norm2 += (pw**2).sum(axis=1)
        vec = cl.vectorize_herm(sq, law.field)
        s_vec += vec.sum(axis=0)
        s_outer += vec.T @ vec
        s_sq += sq.sum(axis=0)
        cnt += k
    mk = s_norm / cnt
    se = np.sqrt(np.maximum(s_norm2 / cnt - mk**2, 0.0) / cnt)
    sigma2 = cl.herm_part(s_sq / cnt)
    mean_vec = s_vec / cnt
    img = s_outer / cnt - np.outer(mean_vec, mean_vec)
    img = 0.5 * (img + img.T)
    # keep tr(sigma2) == m2 exactly consistent with the same sample
    m2 = float(cl.trace_herm(sigma2))
    return MomentData(
        q=law.q, field=law.field,
        m1=float(mk[0]), m2=m2, m3=float(mk[2]), m4=float(mk[3]),
        sigma2=sigma2, sigma2_image_cov=img, exactness="monte_carlo",
        mc_samples=cnt,
        mc_std_error={"m1": float(se[0]), "m2": float(se[1]),
                      "m3": float(se[2]), "m4": float(se[3])},
    )
