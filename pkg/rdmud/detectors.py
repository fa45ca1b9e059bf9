"""
RD-MUD detectors.

All detectors work on the real parts of the correlations a_n^H y and decide
symbols with sgn(r_n * statistic), where sgn(0) = 0. They are pure functions
of their inputs and safe to call concurrently on shared matrices.
"""

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .error_handling import (
    ConfigError,
    DimensionMismatchError,
    ExhaustiveSearchRefusedError,
    LeastSquaresSingularError,
    SingularMMSEError,
    WhiteningUndefinedError,
)
from .logging_config import log_detector_diagnostic
from .model_core import GramMatrix, gain_values, matrix_values, noise_shape, whitening_transform

FAMILIES = ("rdd", "rddt", "rddf", "rddft", "rd-ls", "rd-mmse", "rd-ml", "decorrelator")
SYMBOL_STAGES = ("sign", "ls", "mmse")

ML_MAX_N = 14
_ML_CHUNK = 3 ** 10
_MMSE_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class DetectionResult:
    """Detected support, symbols and diagnostics."""
    support: Tuple[int, ...]
    symbols: np.ndarray
    iterations: int = 0
    scores: Optional[np.ndarray] = None
    reselections: int = 0

    def matches(self, support: Sequence[int], symbols: np.ndarray) -> Tuple[bool, bool]:
        """(support correct, symbol vector correct) against the truth."""
        support_ok = tuple(sorted(self.support)) == tuple(sorted(int(n) for n in support))
        return support_ok, bool(np.array_equal(self.symbols, np.asarray(symbols)))


@dataclass(frozen=True)
class DetectorSpec:
    """Which detector to run and its parameters."""
    family: str
    K: Optional[int] = None
    xi: Optional[float] = None
    eps: Optional[float] = None
    whiten: bool = False
    symbol_stage: str = "sign"
    ml_max_n: int = ML_MAX_N

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown detector {self.family!r}; expected one of {FAMILIES}")
        if self.symbol_stage not in SYMBOL_STAGES:
            raise ConfigError(f"unknown symbol stage {self.symbol_stage!r}")
        if self.symbol_stage != "sign" and self.family not in ("rddf", "rddft"):
            raise ConfigError("symbol_stage applies to rddf and rddft only")
        if self.family in ("rdd", "rddf") and self.K is None:
            raise ConfigError(f"{self.family} needs K")
        if self.family == "rddt" and self.xi is None:
            raise ConfigError("rddt needs xi")
        if self.family == "rddft" and self.eps is None:
            raise ConfigError("rddft needs eps")
        if self.family in ("rd-ls", "rd-mmse") and self.K is None and self.xi is None:
            raise ConfigError(f"{self.family} needs K (top-K support) or xi (threshold support)")
        if self.K is not None and self.K < 1:
            raise ConfigError("K must be at least 1")
        for name in ("xi", "eps"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.family == "decorrelator" and self.whiten:
            raise ConfigError("the decorrelator works on the MF bank and cannot be whitened")

    @property
    def label(self) -> str:
        name = self.family
        if self.symbol_stage != "sign":
            name += f"-{self.symbol_stage}"
        if self.whiten:
            name += "-w"
        return name

    def with_threshold(self, value: float) -> "DetectorSpec":
        """Copy with the family's threshold (xi or eps) replaced."""
        if self.family in ("rddt", "rd-ls", "rd-mmse"):
            return replace(self, xi=value)
        if self.family == "rddft":
            return replace(self, eps=value)
        raise ConfigError(f"{self.family} has no threshold to tune")


# ============================================================================
# HELPERS
# ============================================================================

def correlations(y: np.ndarray, A) -> np.ndarray:
    """Re[a_n^H y] for every column."""
    values = matrix_values(A)
    y = np.asarray(y)
    if y.shape[0] != values.shape[0]:
        raise DimensionMismatchError(f"y has length {y.shape[0]} but A has {values.shape[0]} rows")
    return np.real(values.conj().T @ y)


def _sgn(x: np.ndarray) -> np.ndarray:
    return np.sign(x).astype(np.int8)


def _check_gains(gains: np.ndarray, N: int):
    if gains.shape[0] != N:
        raise DimensionMismatchError(f"R has {gains.shape[0]} entries but A has {N} columns")


def _top_k(stats: np.ndarray, K: int) -> np.ndarray:
    """Indices of the K largest |stats|, lower index first among ties."""
    if K > stats.shape[0]:
        raise ConfigError(f"K={K} exceeds N={stats.shape[0]}")
    order = np.argsort(-np.abs(stats), kind="stable")
    return np.sort(order[:K])


def _sign_result(stats: np.ndarray, gains: np.ndarray, support: np.ndarray) -> DetectionResult:
    symbols = np.zeros(stats.shape[0], dtype=np.int8)
    symbols[support] = _sgn(gains[support] * stats[support])
    return DetectionResult(tuple(int(n) for n in support), symbols, iterations=0, scores=stats)


# ============================================================================
# ONE-SHOT DETECTORS
# ============================================================================

def rdd(y, A, R, K: int) -> DetectionResult:
    """Reduced-dimension decorrelator: top-K |Re[a_n^H y]| then signs."""
    stats = correlations(y, A)
    gains = gain_values(R)
    _check_gains(gains, stats.shape[0])
    return _sign_result(stats, gains, _top_k(stats, K))


def rddt(y, A, R, xi: float) -> DetectionResult:
    """Thresholded RDD: every user with |Re[a_n^H y]| > xi."""
    if xi <= 0:
        raise ConfigError("xi must be positive")
    stats = correlations(y, A)
    gains = gain_values(R)
    _check_gains(gains, stats.shape[0])
    return _sign_result(stats, gains, np.flatnonzero(np.abs(stats) > xi))


def rd_ls_symbols(y, A, R, support: Sequence[int]) -> np.ndarray:
    """Least-squares symbols sgn(r_n Re[(A_I^H A_I)^-1 A_I^H y]_n) on the support."""
    values = matrix_values(A)
    gains = gain_values(R)
    symbols = np.zeros(values.shape[1], dtype=np.int8)
    support = np.asarray(sorted(support), dtype=int)
    if support.size == 0:
        return symbols
    A_I = values[:, support]
    if support.size > values.shape[0]:
        raise LeastSquaresSingularError(f"{support.size} columns cannot be independent in {values.shape[0]} dimensions")
    estimate, _, rank, _ = linalg.lstsq(A_I, np.asarray(y))
    if rank < support.size:
        raise LeastSquaresSingularError(f"columns on the support have rank {rank} < {support.size}")
    symbols[support] = _sgn(gains[support] * np.real(estimate))
    return symbols


def rd_mmse_symbols(y, A, G: Optional[GramMatrix], R, sigma2: float, support: Sequence[int],
                    shape: Optional[np.ndarray] = None) -> np.ndarray:
    """Linear MMSE symbols on the support.

    M_bar = R_I A_I^H (A_I R_I^2 A_I^H + sigma^2 C)^-1 with C = A G^-1 A^H,
    or the given noise shape C (the identity after whitening).
    """
    values = matrix_values(A)
    gains = gain_values(R)
    symbols = np.zeros(values.shape[1], dtype=np.int8)
    support = np.asarray(sorted(support), dtype=int)
    if support.size == 0:
        return symbols
    if shape is None:
        if G is None:
            raise ConfigError("rd-mmse needs G or an explicit noise shape")
        shape = noise_shape(values, G)
    A_I = values[:, support]
    r_I = gains[support]
    system = (A_I * r_I ** 2) @ A_I.conj().T + sigma2 * shape
    if np.linalg.cond(system) > _MMSE_CONDITION_LIMIT:
        raise SingularMMSEError("MMSE system matrix is singular")
    try:
        solved = linalg.solve(system, np.asarray(y), assume_a="her")
    except linalg.LinAlgError as e:
        raise SingularMMSEError(f"MMSE system matrix is singular: {e}") from None
    estimate = r_I * (A_I.conj().T @ solved)
    symbols[support] = _sgn(r_I * np.real(estimate))
    return symbols


# ============================================================================
# DECISION FEEDBACK
# ============================================================================

def _feedback_loop(y, A, R, max_iterations: int, eps: Optional[float], symbol_stage: str,
                   G: Optional[GramMatrix], sigma2: Optional[float],
                   shape: Optional[np.ndarray]) -> DetectionResult:
    values = matrix_values(A)
    gains = gain_values(R)
    y = np.asarray(y)
    N = values.shape[1]
    _check_gains(gains, N)
    if symbol_stage == "mmse" and sigma2 is None:
        raise ConfigError("mmse symbol stage needs sigma2")

    b = np.zeros(N, dtype=np.int8)
    selected = []
    reselections = 0
    iterations = 0
    initial = correlations(y, values)

    while iterations < max_iterations:
        # Residual from the fed-back hard symbols, recomputed from scratch
        residual = y - values @ (gains * b)
        stats = correlations(residual, values)
        n = int(np.argmax(np.abs(stats)))
        if eps is not None and abs(stats[n]) < eps:
            break
        if n in selected:
            reselections += 1
        else:
            selected.append(n)
        b[n] = np.sign(gains[n] * stats[n])
        if symbol_stage == "ls":
            b = rd_ls_symbols(y, values, gains, selected)
        elif symbol_stage == "mmse":
            b = rd_mmse_symbols(y, values, G, gains, sigma2, selected, shape=shape)
        iterations += 1

    if reselections:
        log_detector_diagnostic("rddf", {"reselections": reselections, "iterations": iterations})
    return DetectionResult(tuple(sorted(selected)), b, iterations=iterations,
                           scores=initial, reselections=reselections)


def rddf(y, A, R, K: int, symbol_stage: str = "sign", G: Optional[GramMatrix] = None,
         sigma2: Optional[float] = None, shape: Optional[np.ndarray] = None) -> DetectionResult:
    """Decision feedback: K matching-pursuit steps feeding back binary symbols.

    With symbol_stage "ls" or "mmse" the symbols on the current support are
    re-detected jointly after every selection.
    """
    N = matrix_values(A).shape[1]
    if not 1 <= K <= N:
        raise ConfigError(f"K={K} must lie in [1, N={N}]")
    return _feedback_loop(y, A, R, K, None, symbol_stage, G, sigma2, shape)


def rddft(y, A, R, eps: float, symbol_stage: str = "sign", G: Optional[GramMatrix] = None,
          sigma2: Optional[float] = None, shape: Optional[np.ndarray] = None) -> DetectionResult:
    """Decision feedback until max |Re[a_n^H v]| < eps, at most N iterations."""
    if eps <= 0:
        raise ConfigError("eps must be positive")
    N = matrix_values(A).shape[1]
    return _feedback_loop(y, A, R, N, eps, symbol_stage, G, sigma2, shape)


# ============================================================================
# EXHAUSTIVE ML
# ============================================================================

def _ml_terms(y, A, R, shape: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """h = Re[(AR)^H C^-1 y] and Q = Re[(AR)^H C^-1 AR]."""
    AR = matrix_values(A) * gain_values(R)
    try:
        solved = linalg.solve(shape, np.column_stack([np.asarray(y), AR]), assume_a="her")
    except linalg.LinAlgError as e:
        raise WhiteningUndefinedError(f"noise shape A G^-1 A^H is singular: {e}") from None
    h = np.real(AR.conj().T @ solved[:, 0])
    Q = np.real(AR.conj().T @ solved[:, 1:])
    return h, 0.5 * (Q + Q.T)


def ml_objective(b, y, A, R, shape: np.ndarray) -> float:
    """2 Re[y^H C^-1 A R b] - b^T R A^H C^-1 A R b for a ternary b."""
    h, Q = _ml_terms(y, A, R, shape)
    b = np.asarray(b, dtype=float)
    return float(2.0 * h @ b - b @ Q @ b)


def _ternary_block(start: int, stop: int, N: int) -> np.ndarray:
    """Rows start..stop-1 of itertools.product((-1, 0, 1), repeat=N)."""
    index = np.arange(start, stop, dtype=np.int64)
    place = 3 ** np.arange(N - 1, -1, -1, dtype=np.int64)
    return ((index[:, None] // place) % 3 - 1).astype(np.int8)


def rd_ml(y, A, G: Optional[GramMatrix], R, max_n: int = ML_MAX_N, K: Optional[int] = None,
          shape: Optional[np.ndarray] = None) -> DetectionResult:
    """Exhaustive maximum likelihood over {-1, 0, 1}^N.

    Candidates are scanned in itertools.product((-1, 0, 1)) order and the
    first maximizer wins. With K given only |support| = K is searched.
    """
    values = matrix_values(A)
    N = values.shape[1]
    if N > max_n:
        raise ExhaustiveSearchRefusedError(f"RD-ML over 3^{N} candidates refused (limit N <= {max_n})")
    if K is not None and not 0 <= K <= N:
        raise ConfigError(f"K={K} must lie in [0, N={N}]")
    if shape is None:
        if G is None:
            raise ConfigError("rd-ml needs G or an explicit noise shape")
        shape = noise_shape(values, G)
    h, Q = _ml_terms(y, values, R, shape)

    best_score = -np.inf
    best = np.zeros(N, dtype=np.int8)
    total = 3 ** N
    for start in range(0, total, _ML_CHUNK):
        block = _ternary_block(start, min(start + _ML_CHUNK, total), N)
        candidates = block.astype(float)
        scores = 2.0 * candidates @ h - np.einsum("ij,jk,ik->i", candidates, Q, candidates)
        if K is not None:
            scores[np.count_nonzero(block, axis=1) != K] = -np.inf
        i = int(np.argmax(scores))
        if scores[i] > best_score:
            best_score = float(scores[i])
            best = block[i].copy()

    support = tuple(int(n) for n in np.flatnonzero(best))
    return DetectionResult(support, best, iterations=0, scores=correlations(y, values))


# ============================================================================
# BASELINE AND WHITENING
# ============================================================================

def conventional_decorrelator(z, G: GramMatrix, R) -> np.ndarray:
    """sgn(r_n [G^-1 z]_n) on the matched-filter bank output, all users active."""
    gains = gain_values(R)
    _check_gains(gains, G.N)
    return _sgn(gains * G.solve(np.asarray(z, dtype=float)))


def detect(spec: DetectorSpec, y, A, R, G: Optional[GramMatrix] = None,
           sigma2: Optional[float] = None, shape: Optional[np.ndarray] = None) -> DetectionResult:
    """Run the detector named by spec on (y, A). Whitening is handled by apply_whitened."""
    if spec.whiten:
        return apply_whitened(spec, y, A, G, R, sigma2)
    family = spec.family
    if family == "rdd":
        return rdd(y, A, R, spec.K)
    if family == "rddt":
        return rddt(y, A, R, spec.xi)
    if family == "rddf":
        return rddf(y, A, R, spec.K, spec.symbol_stage, G, sigma2, shape)
    if family == "rddft":
        return rddft(y, A, R, spec.eps, spec.symbol_stage, G, sigma2, shape)
    if family in ("rd-ls", "rd-mmse"):
        first = rdd(y, A, R, spec.K) if spec.K is not None else rddt(y, A, R, spec.xi)
        if family == "rd-ls":
            symbols = rd_ls_symbols(y, A, R, first.support)
        else:
            if sigma2 is None:
                raise ConfigError("rd-mmse needs sigma2")
            symbols = rd_mmse_symbols(y, A, G, R, sigma2, first.support, shape=shape)
        return DetectionResult(first.support, symbols, scores=first.scores)
    if family == "rd-ml":
        return rd_ml(y, A, G, R, spec.ml_max_n, spec.K, shape=shape)
    if G is None:
        raise ConfigError("decorrelator needs G")
    symbols = conventional_decorrelator(y, G, R)
    return DetectionResult(tuple(int(n) for n in np.flatnonzero(symbols)), symbols)


def apply_whitened(spec: DetectorSpec, y, A, G: GramMatrix, R, sigma2: Optional[float] = None,
                   whitening: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> DetectionResult:
    """Run spec on (W y, A_w) with W = (A G^-1 A^H)^(-1/2); R, K, xi and eps are unchanged."""
    if G is None:
        raise ConfigError("whitening needs G")
    A_w, W = whitening if whitening is not None else whitening_transform(A, G)
    identity = np.eye(A_w.shape[0])
    return detect(replace(spec, whiten=False), W @ np.asarray(y), A_w, R, G, sigma2, shape=identity)
