"""
Discrete-equivalent RD-MUD observation model.

    z = G R b + u              (matched-filter bank, u ~ N(0, sigma^2 G))
    y = A R b + w              (RD-MUD front-end, cov(w) = sigma^2 A G^-1 A^H)

Types here are immutable after construction: arrays are stored read-only and
every sampler is a pure function of its explicit seed.
"""

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .error_handling import (
    DimensionMismatchError,
    SingularGramError,
    WhiteningUndefinedError,
)
from .rng import as_generator

GRAM_CONDITION_LIMIT = 1e12
EIGEN_FLOOR = 1e-12
UNIT_NORM_TOLERANCE = 1e-12

NOISE_ANALOG = "analog"
NOISE_CIRCULAR = "circular"
NOISE_CONVENTIONS = (NOISE_ANALOG, NOISE_CIRCULAR)


def _frozen(values, dtype=None) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


def fingerprint(values: np.ndarray) -> str:
    """Short content hash used as a matrix id in provenance records."""
    array = np.ascontiguousarray(values)
    digest = hashlib.sha1(array.tobytes())
    digest.update(str(array.shape).encode())
    digest.update(str(array.dtype).encode())
    return digest.hexdigest()[:12]


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True)
class SymbolVector:
    """Ternary symbol vector b with its active set."""
    entries: np.ndarray
    support: Tuple[int, ...]

    def __post_init__(self):
        entries = _frozen(self.entries, dtype=np.int8)
        if entries.ndim != 1:
            raise DimensionMismatchError("symbol vector must be one-dimensional")
        if not np.isin(entries, (-1, 0, 1)).all():
            raise ValueError("symbol entries must be in {-1, 0, +1}")
        support = tuple(sorted(int(n) for n in self.support))
        if support != tuple(int(n) for n in np.flatnonzero(entries)):
            raise ValueError("support must be exactly the nonzero entries")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "support", support)

    @classmethod
    def from_support(cls, n_users: int, support: Sequence[int], signs: Sequence[int]) -> "SymbolVector":
        entries = np.zeros(n_users, dtype=np.int8)
        entries[list(support)] = signs
        return cls(entries=entries, support=tuple(support))

    @property
    def N(self) -> int:
        return self.entries.shape[0]

    @property
    def K(self) -> int:
        return len(self.support)


@dataclass(frozen=True)
class AmplitudeProfile:
    """Channel gains r_n, R = diag(r)."""
    gains: np.ndarray

    def __post_init__(self):
        gains = _frozen(self.gains, dtype=float)
        if gains.ndim != 1:
            raise DimensionMismatchError("gains must be one-dimensional")
        if np.any(gains == 0):
            raise ValueError("gains must be nonzero on every index")
        object.__setattr__(self, "gains", gains)

    @classmethod
    def constant(cls, n_users: int, value: float = 1.0) -> "AmplitudeProfile":
        return cls(np.full(n_users, float(value)))

    @property
    def N(self) -> int:
        return self.gains.shape[0]

    def _on(self, support: Optional[Sequence[int]]) -> np.ndarray:
        magnitudes = np.abs(self.gains)
        if support is None:
            return magnitudes
        return magnitudes[list(support)]

    def r_max(self, support: Optional[Sequence[int]] = None) -> float:
        return float(self._on(support).max())

    def r_min(self, support: Optional[Sequence[int]] = None) -> float:
        return float(self._on(support).min())

    def sorted_gains(self, support: Optional[Sequence[int]] = None) -> np.ndarray:
        """|r^(1)| >= |r^(2)| >= ... over the support."""
        return np.sort(self._on(support))[::-1]


@dataclass(frozen=True)
class GramMatrix:
    """Signature crosscorrelation matrix G (symmetric positive definite)."""
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DimensionMismatchError(f"Gram matrix must be square, got {values.shape}")
        if not np.allclose(values, values.T, rtol=0, atol=1e-12 * max(1.0, np.abs(values).max())):
            raise SingularGramError("Gram matrix is not symmetric")
        eigenvalues = linalg.eigvalsh(values)
        lam_min, lam_max = float(eigenvalues[0]), float(eigenvalues[-1])
        if lam_min <= 0 or lam_max / lam_min > GRAM_CONDITION_LIMIT:
            raise SingularGramError(
                f"Gram matrix is singular or ill-conditioned (eigenvalues {lam_min:.3g}..{lam_max:.3g})"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "lambda_min", lam_min)
        object.__setattr__(self, "lambda_max", lam_max)

    @classmethod
    def identity(cls, n_users: int) -> "GramMatrix":
        return cls(np.eye(n_users))

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def lambda_max_inv(self) -> float:
        """lambda_max(G^-1) = 1 / lambda_min(G)."""
        return 1.0 / self.lambda_min

    @property
    def lambda_min_inv(self) -> float:
        return 1.0 / self.lambda_max

    @property
    def has_unit_diagonal(self) -> bool:
        return bool(np.allclose(np.diag(self.values), 1.0, rtol=0, atol=1e-12))

    @cached_property
    def cholesky(self) -> np.ndarray:
        """Lower factor L_G with G = L_G L_G^T."""
        factor = linalg.cholesky(self.values, lower=True)
        factor.setflags(write=False)
        return factor

    @cached_property
    def id(self) -> str:
        return fingerprint(self.values)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """G^-1 rhs through the Cholesky factor; complex rhs split into parts."""
        rhs = np.asarray(rhs)
        if rhs.shape[0] != self.N:
            raise DimensionMismatchError(f"cannot apply {self.N}x{self.N} G^-1 to {rhs.shape}")
        factor = (self.cholesky, True)
        if np.iscomplexobj(rhs):
            return linalg.cho_solve(factor, rhs.real) + 1j * linalg.cho_solve(factor, rhs.imag)
        return linalg.cho_solve(factor, rhs)

    def inverse_sqrt_apply(self, g: np.ndarray) -> np.ndarray:
        """L_G^-T g, a draw with covariance G^-1 when g is white."""
        return linalg.solve_triangular(self.cholesky, g, lower=True, trans="T")


@dataclass(frozen=True)
class MeasurementMatrix:
    """M x N front-end coefficient matrix A with unit-norm columns."""
    values: np.ndarray
    kind: str = "explicit"
    tolerance: float = UNIT_NORM_TOLERANCE

    def __post_init__(self):
        values = np.asarray(self.values)
        if not np.iscomplexobj(values):
            values = values.astype(float)
        values = _frozen(values)
        if values.ndim != 2:
            raise DimensionMismatchError(f"measurement matrix must be 2-D, got {values.shape}")
        norms = np.linalg.norm(values, axis=0)
        worst = float(np.abs(norms - 1.0).max()) if norms.size else 0.0
        if worst > self.tolerance:
            raise ValueError(f"columns must have unit norm (worst deviation {worst:.3g})")
        object.__setattr__(self, "values", values)

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    @cached_property
    def coherence(self) -> float:
        from .matrix_factory import coherence
        return coherence(self)

    @cached_property
    def id(self) -> str:
        return fingerprint(self.values)


@dataclass(frozen=True)
class NoiseModel:
    """Front-end noise covariance sigma^2 A G^-1 A^H and a factor L with L L^H = covariance."""
    sigma2: float
    covariance: np.ndarray
    factor: np.ndarray

    @property
    def M(self) -> int:
        return self.covariance.shape[0]


@dataclass(frozen=True)
class FrontEndObservation:
    """Front-end output y with the provenance it was drawn under."""
    y: np.ndarray
    provenance: dict = field(default_factory=dict)


# ============================================================================
# HELPERS
# ============================================================================

def matrix_values(A: Union[MeasurementMatrix, np.ndarray]) -> np.ndarray:
    return A.values if isinstance(A, MeasurementMatrix) else np.asarray(A)


def gain_values(R: Union[AmplitudeProfile, np.ndarray, Sequence[float]]) -> np.ndarray:
    return R.gains if isinstance(R, AmplitudeProfile) else np.asarray(R, dtype=float)


def symbol_values(b: Union[SymbolVector, np.ndarray, Sequence[int]]) -> np.ndarray:
    return b.entries if isinstance(b, SymbolVector) else np.asarray(b)


def _check_dims(A: np.ndarray, G: GramMatrix):
    if A.shape[1] != G.N:
        raise DimensionMismatchError(f"A has {A.shape[1]} columns but G is {G.N}x{G.N}")


def noise_shape(A, G: GramMatrix) -> np.ndarray:
    """A G^-1 A^H (noise covariance divided by sigma^2)."""
    values = matrix_values(A)
    _check_dims(values, G)
    shape = values @ G.solve(values.conj().T)
    return 0.5 * (shape + shape.conj().T)


def row_energy(A) -> float:
    """max_n a_n^H A A^H a_n, the noise amplification term of tau."""
    values = matrix_values(A)
    gram = values.conj().T @ values
    return float(np.max(np.sum(np.abs(gram) ** 2, axis=0)))


def noise_amplification(A, G: GramMatrix) -> np.ndarray:
    """Per-user noise variance factor a_n^H A G^-1 A^H a_n."""
    values = matrix_values(A)
    projected = values.conj().T @ noise_shape(values, G) @ values
    return np.real(np.diag(projected))


def _hermitian_factor(covariance: np.ndarray) -> np.ndarray:
    """Cholesky factor, or an eigen-based factor when the covariance is only PSD."""
    try:
        return linalg.cholesky(covariance, lower=True)
    except linalg.LinAlgError:
        eigenvalues, vectors = linalg.eigh(covariance)
        eigenvalues = np.clip(eigenvalues, 0.0, None)
        return vectors * np.sqrt(eigenvalues)


# ============================================================================
# OPERATIONS
# ============================================================================

def noise_covariance(A, G: GramMatrix, sigma2: float) -> NoiseModel:
    """NoiseModel with covariance sigma^2 A G^-1 A^H."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    values = matrix_values(A)
    _check_dims(values, G)
    M = values.shape[0]
    dtype = complex if np.iscomplexobj(values) else float
    if sigma2 == 0:
        zeros = np.zeros((M, M), dtype=dtype)
        return NoiseModel(0.0, _frozen(zeros), _frozen(zeros))
    covariance = sigma2 * noise_shape(values, G)
    return NoiseModel(float(sigma2), _frozen(covariance), _frozen(_hermitian_factor(covariance)))


def draw_noise(A, G: GramMatrix, sigma2: float, rng: np.random.Generator,
               count: Optional[int] = None, convention: str = NOISE_ANALOG,
               model: Optional[NoiseModel] = None) -> np.ndarray:
    """Front-end noise draws: length M, or M x count when count is given.

    analog:   w = sigma A L_G^-T g,  g ~ N(0, I_N) real
    circular: w = L g,               g circular complex, E[g g^H] = I_M
    """
    values = matrix_values(A)
    _check_dims(values, G)
    shape = (G.N,) if count is None else (G.N, count)
    if convention == NOISE_ANALOG:
        g = rng.standard_normal(shape)
        if sigma2 == 0:
            return values @ np.zeros(shape)
        return np.sqrt(sigma2) * (values @ G.inverse_sqrt_apply(g))
    if convention == NOISE_CIRCULAR:
        M = values.shape[0]
        shape = (M,) if count is None else (M, count)
        g = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
        if model is None:
            model = noise_covariance(values, G, sigma2)
        return model.factor @ g
    raise ValueError(f"unknown noise convention {convention!r}")


def sample_front_end(A, G: GramMatrix, R, b, sigma2: float, seed,
                     convention: str = NOISE_ANALOG) -> FrontEndObservation:
    """y = A R b + w, with w drawn deterministically from seed."""
    values = matrix_values(A)
    gains = gain_values(R)
    symbols = symbol_values(b)
    _check_dims(values, G)
    if gains.shape[0] != values.shape[1] or symbols.shape[0] != values.shape[1]:
        raise DimensionMismatchError("R and b must have one entry per column of A")
    rng = as_generator(seed)
    signal = values @ (gains * symbols)
    y = signal + draw_noise(values, G, sigma2, rng, convention=convention)
    provenance = {
        "A": fingerprint(values),
        "G": G.id,
        "R": tuple(float(r) for r in gains),
        "b": tuple(int(s) for s in symbols),
        "sigma2": float(sigma2),
        "seed": seed if isinstance(seed, (int, np.integer)) else None,
        "noise": convention,
    }
    return FrontEndObservation(_frozen(y), provenance)


def sample_mf_bank(G: GramMatrix, R, b, sigma2: float, seed) -> np.ndarray:
    """z = G R b + u with u = sigma L_G g ~ N(0, sigma^2 G).

    Uses the same draw as the analog front-end noise, so y = A G^-1 z holds
    for a shared seed.
    """
    gains = gain_values(R)
    symbols = symbol_values(b)
    if gains.shape[0] != G.N or symbols.shape[0] != G.N:
        raise DimensionMismatchError("R and b must have one entry per user")
    rng = as_generator(seed)
    g = rng.standard_normal(G.N)
    u = np.sqrt(sigma2) * (G.cholesky @ g) if sigma2 > 0 else np.zeros(G.N)
    return G.values @ (gains * symbols) + u


def whitening_transform(A, G: GramMatrix) -> Tuple[np.ndarray, np.ndarray]:
    """(A_w, W) with W = (A G^-1 A^H)^(-1/2); A_w columns are not renormalized."""
    values = matrix_values(A)
    shape = noise_shape(values, G)
    eigenvalues, vectors = linalg.eigh(shape)
    floor = EIGEN_FLOOR * max(float(eigenvalues[-1]), 0.0)
    if eigenvalues[0] <= floor:
        raise WhiteningUndefinedError(
            f"A G^-1 A^H is rank deficient (smallest eigenvalue {eigenvalues[0]:.3g})"
        )
    W = (vectors / np.sqrt(eigenvalues)) @ vectors.conj().T
    W = 0.5 * (W + W.conj().T)
    return W @ values, W
