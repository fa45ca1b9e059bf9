"""
Measurement and Gram matrix generation.

Measurement matrices: Gaussian, random partial DFT, Kerdock (mutually
unbiased bases from Z4-valued quadratic forms over GF(2^n)), or loaded from
RDMUD-MAT files. Gram matrices: Gold-code formula, seeded spectrum, identity.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from . import rng as streams
from .error_handling import (
    ConfigError,
    DimensionMismatchError,
    UndefinedCoherenceError,
    UnsupportedDimensionError,
)
from .logging_config import log_matrix_search
from .model_core import GramMatrix, MeasurementMatrix, matrix_values
from .storage import MatrixStore, read_matrix

MATRIX_KINDS = ("gaussian", "partial-dft", "kerdock", "file")

# Irreducible polynomials for GF(2^n), keyed by n (bit i = coefficient of x^i)
FIELD_POLYNOMIALS = {
    4: 0b10011,
    6: 0b1000011,
    8: 0x11D,
    10: 0x409,
    12: 0x1053,
}

_COHERENCE_BLOCK = 2048
_QUARTER_TURNS = np.array([1.0, 1.0j, -1.0, -1.0j])


@dataclass(frozen=True)
class MatrixRecipe:
    """How to produce a measurement matrix, including min-coherence search."""
    kind: str
    M: int
    N: int
    seed: int = 0
    search_count: int = 1
    path: Optional[str] = None
    normalize: bool = False

    def __post_init__(self):
        if self.kind not in MATRIX_KINDS:
            raise ConfigError(f"unknown matrix kind {self.kind!r}; expected one of {MATRIX_KINDS}")
        if self.search_count < 0:
            raise ConfigError("search_count must be nonnegative")
        if self.kind == "file":
            if not self.path:
                raise ConfigError("file recipes need a path")
            return
        if not 1 <= self.M <= self.N:
            raise ConfigError(f"need 1 <= M <= N, got M={self.M}, N={self.N}")
        if self.kind == "kerdock":
            kerdock_order(self.M)
            if self.N > self.M ** 2:
                raise ConfigError(f"kerdock {self.M}x{self.M ** 2} has fewer than N={self.N} columns")


@dataclass(frozen=True)
class SpectrumSpec:
    """Eigenvalues of a Gram matrix with a random orthogonal eigenbasis."""
    eigenvalues: Tuple[float, ...]
    seed: int = 0

    def __post_init__(self):
        values = tuple(float(v) for v in self.eigenvalues)
        if not values:
            raise ConfigError("spectrum needs at least one eigenvalue")
        if min(values) <= 0:
            raise ConfigError("spectrum eigenvalues must be positive")
        object.__setattr__(self, "eigenvalues", values)

    @classmethod
    def linear(cls, N: int, denominator: float, seed: int = 0) -> "SpectrumSpec":
        """{1/d, 2/d, ..., N/d}."""
        return cls(tuple(k / denominator for k in range(1, N + 1)), seed)


@dataclass
class MinCoherenceSearch:
    """Outcome of a min-coherence search: the winner and every candidate's mu."""
    best: MeasurementMatrix
    best_index: int
    coherences: List[float] = field(default_factory=list)

    @property
    def best_coherence(self) -> float:
        return self.coherences[self.best_index]


def _generator(seed, index: int = 0) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return streams.stream_generator(int(seed), streams.MATRIX, index)


def _check_size(M: int, N: int):
    if not 1 <= M <= N:
        raise ConfigError(f"need 1 <= M <= N, got M={M}, N={N}")


# ============================================================================
# MEASUREMENT MATRICES
# ============================================================================

def gen_gaussian(M: int, N: int, seed=0, index: int = 0) -> MeasurementMatrix:
    """i.i.d. standard normal entries, columns scaled to unit norm."""
    _check_size(M, N)
    draws = _generator(seed, index).standard_normal((M, N))
    return MeasurementMatrix(draws / np.linalg.norm(draws, axis=0), kind="gaussian")


def gen_partial_dft(M: int, N: int, seed=0, index: int = 0) -> MeasurementMatrix:
    """M distinct rows of the N-point DFT matrix e^{i 2 pi n m / N}, divided by sqrt(M)."""
    _check_size(M, N)
    rows = np.sort(_generator(seed, index).choice(N, size=M, replace=False))
    phases = np.outer(rows, np.arange(N)) % N
    values = np.exp(2j * np.pi * phases / N) / np.sqrt(M)
    return MeasurementMatrix(values, kind="partial-dft")


def kerdock_order(M: int) -> int:
    """n with M = 2^n, for the supported sizes M = 2^(m+1), m odd, m >= 3."""
    n = int(M).bit_length() - 1
    if M < 2 or (1 << n) != M or n not in FIELD_POLYNOMIALS:
        supported = sorted(1 << k for k in FIELD_POLYNOMIALS)
        raise UnsupportedDimensionError(f"kerdock construction needs M in {supported}, got {M}")
    return n


def _gf_mul(a: int, b: int, n: int, poly: int) -> int:
    product = 0
    while b:
        if b & 1:
            product ^= a
        b >>= 1
        a <<= 1
        if a >> n:
            a ^= poly
    return product


def _gf_trace(z: int, n: int, poly: int) -> int:
    total = 0
    power = z
    for _ in range(n):
        total ^= power
        power = _gf_mul(power, power, n, poly)
    # The trace lands in GF(2), so only the constant bit can be set
    return total & 1


def _trace_forms(n: int, labels: Sequence[int]) -> np.ndarray:
    """Symmetric binary matrices S_a[j, k] = Tr(a alpha^(j+k)), one per label a."""
    poly = FIELD_POLYNOMIALS[n]
    powers = [1]
    for _ in range(2 * n - 2):
        powers.append(_gf_mul(powers[-1], 2, n, poly))
    hankel = np.add.outer(np.arange(n), np.arange(n))
    forms = np.empty((len(labels), n, n), dtype=np.int64)
    for i, a in enumerate(labels):
        traces = np.array([_gf_trace(_gf_mul(a, p, n, poly), n, poly) for p in powers])
        forms[i] = traces[hankel]
    return forms


def _kerdock_columns(M: int, columns: np.ndarray) -> np.ndarray:
    """Columns a*M + b: entries i^(x^T S_a x + 2 b.x) / sqrt(M) for x in GF(2)^n."""
    n = kerdock_order(M)
    bits = (np.arange(M)[:, None] >> np.arange(n)) & 1
    labels, basis_index = np.unique(columns // M, return_inverse=True)
    forms = _trace_forms(n, labels)
    quadratic = np.einsum("xj,ajk,xk->ax", bits, forms, bits) % 4
    signs = (bits @ bits[columns % M].T) % 2
    exponents = (quadratic[basis_index].T + 2 * signs) % 4
    return _QUARTER_TURNS[exponents] / np.sqrt(M)


def _subset_indices(total: int, count: int, seed) -> np.ndarray:
    if not 1 <= count <= total:
        raise ConfigError(f"cannot select {count} of {total} columns")
    if isinstance(seed, np.random.Generator):
        generator = seed
    else:
        generator = streams.stream_generator(int(seed), streams.SUBSELECT)
    return np.sort(generator.choice(total, size=count, replace=False))


def gen_kerdock(M: int, count: Optional[int] = None, seed=0) -> MeasurementMatrix:
    """M x M^2 Kerdock matrix with coherence 1/sqrt(M), or `count` random columns of it.

    With count given, only the selected columns are computed; the selection is
    the one subselect_columns(gen_kerdock(M), count, seed) makes.
    """
    n_columns = M * M
    kerdock_order(M)
    if count is None or count == n_columns:
        columns = np.arange(n_columns)
    else:
        columns = _subset_indices(n_columns, count, seed)
    return MeasurementMatrix(_kerdock_columns(M, columns), kind="kerdock")


def subselect_columns(A, count: int, seed=0) -> MeasurementMatrix:
    """`count` distinct columns chosen uniformly at random, kept in original order."""
    values = matrix_values(A)
    indices = _subset_indices(values.shape[1], count, seed)
    kind = A.kind if isinstance(A, MeasurementMatrix) else "explicit"
    return MeasurementMatrix(values[:, indices], kind=kind)


def load_matrix(path, normalize: bool = False) -> MeasurementMatrix:
    """Read an RDMUD-MAT file; columns are rescaled only when normalize is set."""
    values = read_matrix(path)
    norms = np.linalg.norm(values, axis=0)
    if np.any(norms == 0):
        raise ConfigError(f"{path}: matrix has a zero column")
    if normalize:
        values = values / norms
    elif np.abs(norms - 1.0).max() > 1e-12:
        raise ConfigError(f"{path}: columns are not unit norm (use --normalize)")
    return MeasurementMatrix(values, kind="file")


def generate_candidate(recipe: MatrixRecipe, index: int = 0) -> MeasurementMatrix:
    """Candidate `index` of a recipe; each index has its own random stream."""
    if recipe.kind == "gaussian":
        return gen_gaussian(recipe.M, recipe.N, recipe.seed, index)
    if recipe.kind == "partial-dft":
        return gen_partial_dft(recipe.M, recipe.N, recipe.seed, index)
    if recipe.kind == "kerdock":
        if recipe.N == recipe.M ** 2:
            return gen_kerdock(recipe.M)
        subset = streams.stream_generator(recipe.seed, streams.SUBSELECT, index)
        return gen_kerdock(recipe.M, recipe.N, subset)
    return load_matrix(recipe.path, recipe.normalize)


def _coherence_chunk(recipe: MatrixRecipe, start: int, stop: int) -> List[float]:
    return [coherence(generate_candidate(recipe, i)) for i in range(start, stop)]


def coherence_search(recipe: MatrixRecipe, workers: int = 1) -> MinCoherenceSearch:
    """Draw recipe.search_count candidates and keep the least coherent.

    Candidates may be scored in parallel; the reduction runs in index order,
    so the earliest candidate wins ties whatever the worker count.
    """
    count = max(recipe.search_count, 1)
    if recipe.kind == "file" or (recipe.kind == "kerdock" and recipe.N == recipe.M ** 2):
        count = 1

    if workers <= 1 or count < 2 * workers:
        coherences = _coherence_chunk(recipe, 0, count)
    else:
        chunk = -(-count // (4 * workers))
        bounds = [(s, min(s + chunk, count)) for s in range(0, count, chunk)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_coherence_chunk, [recipe] * len(bounds), *zip(*bounds))
            coherences = [mu for part in parts for mu in part]

    best_index = 0
    for i, mu in enumerate(coherences):
        if mu < coherences[best_index]:
            best_index = i

    best = generate_candidate(recipe, best_index)
    log_matrix_search(recipe.kind, recipe.M, recipe.N, count, coherences[best_index], best_index)
    return MinCoherenceSearch(best=best, best_index=best_index, coherences=coherences)


def search_min_coherence(recipe: MatrixRecipe, workers: int = 1) -> MeasurementMatrix:
    """Least coherent of recipe.search_count candidates."""
    if recipe.search_count < 1:
        raise ConfigError("min-coherence search needs search_count >= 1")
    return coherence_search(recipe, workers).best


def recipe_key(recipe: MatrixRecipe) -> str:
    """Store key naming everything that determines the generated matrix."""
    key = f"{recipe.kind}-{recipe.M}x{recipe.N}-seed{recipe.seed}-search{max(recipe.search_count, 1)}"
    return key + "-normalized" if recipe.normalize else key


def build_matrix(recipe: MatrixRecipe, workers: int = 1,
                 store: Optional[MatrixStore] = None) -> MeasurementMatrix:
    """Single draw for search_count <= 1, otherwise the min-coherence winner.

    With a store, a matrix generated earlier for the same recipe is reused
    and a new one is saved, so a long search runs once.
    """
    if store is None or recipe.kind == "file":
        if recipe.search_count <= 1:
            return generate_candidate(recipe, 0)
        return search_min_coherence(recipe, workers)

    key = recipe_key(recipe)
    cached = store.get(key)
    if cached is not None:
        return MeasurementMatrix(cached, kind=recipe.kind)
    A = build_matrix(recipe, workers)
    store.put(key, A.values, {
        "kind": recipe.kind,
        "M": A.M,
        "N": A.N,
        "seed": recipe.seed,
        "search_count": recipe.search_count,
        "mu": A.coherence if A.N > 1 else None,
    })
    return A


# ============================================================================
# COHERENCE
# ============================================================================

def coherence(A) -> float:
    """max over n != l of |a_n^H a_l|, computed blockwise for wide matrices."""
    values = matrix_values(A)
    if values.ndim != 2:
        raise DimensionMismatchError("coherence needs a 2-D matrix")
    N = values.shape[1]
    if N < 2:
        raise UndefinedCoherenceError("coherence needs at least two columns")

    worst = 0.0
    conj = values.conj().T
    for start in range(0, N, _COHERENCE_BLOCK):
        stop = min(start + _COHERENCE_BLOCK, N)
        block = np.abs(conj[start:stop] @ values)
        block[np.arange(stop - start), np.arange(start, stop)] = 0.0
        worst = max(worst, float(block.max()))
    return min(worst, 1.0)


def welch_bound(M: int, N: int) -> float:
    """sqrt((N - M) / (M (N - 1))); zero when N <= M."""
    if M < 1:
        raise ConfigError("M must be positive")
    if N <= M:
        return 0.0
    return float(np.sqrt((N - M) / (M * (N - 1))))


# ============================================================================
# GRAM MATRICES
# ============================================================================

def gram_identity(N: int) -> GramMatrix:
    return GramMatrix.identity(N)


def gram_gold(N: int, L: int = 1023) -> GramMatrix:
    """((L+1)/L) I - (1/L) 11^T restricted to N x N."""
    if N < 1 or L < 1:
        raise ConfigError("N and L must be positive")
    if N > L + 2:
        raise UnsupportedDimensionError(f"Gold codes of length {L} support at most {L + 2} users, got {N}")
    values = ((L + 1) / L) * np.eye(N) - np.full((N, N), 1.0 / L)
    return GramMatrix(values)


def random_orthogonal(N: int, seed=0) -> np.ndarray:
    """Q from the QR of a Gaussian matrix, columns sign-fixed so diag(R) > 0."""
    if isinstance(seed, np.random.Generator):
        generator = seed
    else:
        generator = streams.stream_generator(int(seed), streams.SPECTRUM)
    q, r = linalg.qr(generator.standard_normal((N, N)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def gram_from_spectrum(spec: SpectrumSpec) -> GramMatrix:
    """G = U diag(eigenvalues) U^T; the diagonal is not forced to one."""
    eigenvalues = np.asarray(spec.eigenvalues)
    U = random_orthogonal(len(eigenvalues), spec.seed)
    values = (U * eigenvalues) @ U.T
    return GramMatrix(0.5 * (values + values.T))
