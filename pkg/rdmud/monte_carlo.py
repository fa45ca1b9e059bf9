"""
Monte Carlo Estimation
Probability-of-error estimates, sweeps, threshold tuning and the noise-event
check. Every trial draws from its own (master seed, "trial", index) stream,
so results do not depend on worker count or chunking and every detector sees
the same random numbers for a given trial.
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from . import rng as streams
from .detectors import DetectorSpec, apply_whitened, detect
from .error_handling import ConfigError, DetectorErrorHandler
from .logging_config import log_estimate, log_worker_chunk
from .matrix_factory import (
    MatrixRecipe,
    SpectrumSpec,
    build_matrix,
    gram_from_spectrum,
    gram_gold,
    gram_identity,
)
from .model_core import (
    NOISE_ANALOG,
    NOISE_CONVENTIONS,
    GramMatrix,
    MeasurementMatrix,
    draw_noise,
    noise_covariance,
    noise_shape,
    row_energy,
    whitening_transform,
)
from .storage import MatrixStore
from .theory_bounds import BoundParams, implied_pe_bound, tau

GRAM_KINDS = ("identity", "gold", "spectrum", "file")
AMPLITUDE_KINDS = ("constant", "uniform")
SWEEP_VARIABLES = ("M", "K", "N", "sigma2", "detector")
OUTER_VARIABLES = ("N", "K", "sigma2", "matrix_kind", "gram")
CI_METHODS = ("normal", "exact")

_Z95 = 1.959963984540054


# ============================================================================
# SPECS
# ============================================================================

@dataclass(frozen=True)
class GramSpec:
    """Recipe for G: identity, Gold-code formula, seeded spectrum or a file."""
    kind: str = "identity"
    L: int = 1023
    eigenvalues: Optional[Tuple[float, ...]] = None
    eigen_denominator: Optional[float] = None
    seed: int = 0
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in GRAM_KINDS:
            raise ConfigError(f"unknown gram kind {self.kind!r}; expected one of {GRAM_KINDS}")
        if self.kind == "spectrum" and self.eigenvalues is None and self.eigen_denominator is None:
            raise ConfigError("spectrum gram needs eigenvalues or eigen_denominator")
        if self.kind == "file" and not self.path:
            raise ConfigError("file gram needs a path")

    def build(self, N: int) -> GramMatrix:
        if self.kind == "identity":
            return gram_identity(N)
        if self.kind == "gold":
            return gram_gold(N, self.L)
        if self.kind == "spectrum":
            if self.eigenvalues is not None:
                if len(self.eigenvalues) != N:
                    raise ConfigError(f"spectrum has {len(self.eigenvalues)} eigenvalues but N={N}")
                return gram_from_spectrum(SpectrumSpec(self.eigenvalues, self.seed))
            return gram_from_spectrum(SpectrumSpec.linear(N, self.eigen_denominator, self.seed))
        from .storage import read_matrix
        values = np.real(read_matrix(self.path))
        if values.shape != (N, N):
            raise ConfigError(f"{self.path}: Gram matrix is {values.shape}, expected {N}x{N}")
        return GramMatrix(values)


@dataclass(frozen=True)
class AmplitudeRule:
    """Channel gains: constant r, or uniform[lo, hi] redrawn every trial."""
    kind: str = "constant"
    value: float = 1.0
    low: float = 1.0
    high: float = 1.0

    def __post_init__(self):
        if self.kind not in AMPLITUDE_KINDS:
            raise ConfigError(f"unknown amplitude rule {self.kind!r}")
        if self.kind == "constant" and self.value == 0:
            raise ConfigError("constant gain must be nonzero")
        if self.kind == "uniform" and not 0 < self.low <= self.high:
            raise ConfigError("uniform gains need 0 < low <= high")

    @property
    def r_min(self) -> float:
        return abs(self.value) if self.kind == "constant" else self.low

    @property
    def r_max(self) -> float:
        return abs(self.value) if self.kind == "constant" else self.high

    def draw(self, N: int, generator: np.random.Generator) -> np.ndarray:
        if self.kind == "constant":
            return np.full(N, float(self.value))
        return generator.uniform(self.low, self.high, size=N)


@dataclass(frozen=True)
class TrialSpec:
    """Everything a Monte Carlo trial needs besides its index."""
    N: int
    K: int
    matrix: Union[MatrixRecipe, MeasurementMatrix]
    detector: DetectorSpec
    gram: GramSpec = field(default_factory=GramSpec)
    amplitude: AmplitudeRule = field(default_factory=AmplitudeRule)
    sigma2: float = 0.005
    master_seed: int = 0
    noise: str = NOISE_ANALOG
    fixed_support: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if not 1 <= self.K <= self.N:
            raise ConfigError(f"need 1 <= K <= N, got K={self.K}, N={self.N}")
        if self.sigma2 < 0:
            raise ConfigError("sigma2 must be nonnegative")
        if self.noise not in NOISE_CONVENTIONS:
            raise ConfigError(f"unknown noise convention {self.noise!r}")
        if self.matrix.N != self.N:
            raise ConfigError(f"matrix has {self.matrix.N} columns but N={self.N}")
        if self.detector.family == "decorrelator" and self.K != self.N:
            raise ConfigError("the decorrelator baseline assumes every user is active (K = N)")
        if self.fixed_support is not None:
            support = tuple(sorted(set(int(n) for n in self.fixed_support)))
            if len(support) != self.K or support[0] < 0 or support[-1] >= self.N:
                raise ConfigError("fixed_support needs K distinct indices in [0, N)")
            object.__setattr__(self, "fixed_support", support)

    @property
    def matrix_kind(self) -> str:
        return self.matrix.kind


# ============================================================================
# CONTEXT AND TRIALS
# ============================================================================

class TrialContext:
    """Per-spec quantities computed once and shared by every trial."""

    def __init__(self, spec: TrialSpec, workers: int = 1, store: Optional[MatrixStore] = None):
        self.spec = spec
        if isinstance(spec.matrix, MeasurementMatrix):
            self.A = spec.matrix
        else:
            self.A = build_matrix(spec.matrix, workers, store)
        self.G = spec.gram.build(spec.N)
        self.shape = noise_shape(self.A, self.G)
        self.noise_model = (
            noise_covariance(self.A, self.G, spec.sigma2) if spec.noise != NOISE_ANALOG else None
        )

    @cached_property
    def whitening(self) -> Tuple[np.ndarray, np.ndarray]:
        return whitening_transform(self.A, self.G)

    @property
    def mu(self) -> float:
        return self.A.coherence


@dataclass
class TrialOutcome:
    support_correct: bool
    symbols_correct: bool
    failed: bool = False
    reselections: int = 0
    iterations: int = 0

    @property
    def joint_error(self) -> bool:
        return not (self.support_correct and self.symbols_correct)


@dataclass
class TrialTally:
    """Associative sum of trial outcomes."""
    trials: int = 0
    support_errors: int = 0
    symbol_errors_given_support: int = 0
    joint_errors: int = 0
    detector_failures: int = 0
    reselections: int = 0
    iterations: int = 0

    def add(self, outcome: TrialOutcome):
        self.trials += 1
        if outcome.failed:
            # No detected support to compare, so only the joint error counts
            self.joint_errors += 1
            self.detector_failures += 1
            return
        if not outcome.support_correct:
            self.support_errors += 1
        elif not outcome.symbols_correct:
            self.symbol_errors_given_support += 1
        if outcome.joint_error:
            self.joint_errors += 1
        self.reselections += outcome.reselections
        self.iterations += outcome.iterations

    def merge(self, other: "TrialTally") -> "TrialTally":
        return TrialTally(*(a + b for a, b in zip(self._counts(), other._counts())))

    def _counts(self):
        return (self.trials, self.support_errors, self.symbol_errors_given_support, self.joint_errors,
                self.detector_failures, self.reselections, self.iterations)


@dataclass
class PeEstimate:
    """Probability-of-error estimate with its error decomposition."""
    trials: int
    support_errors: int
    symbol_errors_given_support: int
    joint_errors: int
    pe: float
    ci_half_width: float
    conditional_symbol_error: Optional[float]
    ci_low: float = 0.0
    ci_high: float = 1.0
    ci_method: str = "normal"
    detector_failures: int = 0
    reselections: int = 0
    mean_iterations: float = 0.0

    @classmethod
    def from_tally(cls, tally: TrialTally, ci_method: str = "normal") -> "PeEstimate":
        if tally.trials < 1:
            raise ConfigError("an estimate needs at least one trial")
        n = tally.trials
        x = tally.joint_errors
        pe = x / n
        low, high = confidence_interval(x, n, ci_method)
        correct_support = n - tally.support_errors - tally.detector_failures
        conditional = tally.symbol_errors_given_support / correct_support if correct_support else None
        return cls(
            trials=n,
            support_errors=tally.support_errors,
            symbol_errors_given_support=tally.symbol_errors_given_support,
            joint_errors=x,
            pe=pe,
            ci_half_width=(high - low) / 2.0 if ci_method == "exact" else _Z95 * math.sqrt(pe * (1 - pe) / n),
            conditional_symbol_error=conditional,
            ci_low=low,
            ci_high=high,
            ci_method=ci_method,
            detector_failures=tally.detector_failures,
            reselections=tally.reselections,
            mean_iterations=tally.iterations / n,
        )


def confidence_interval(errors: int, trials: int, method: str = "normal") -> Tuple[float, float]:
    """95% interval for a binomial proportion: normal approximation or Clopper-Pearson."""
    if method not in CI_METHODS:
        raise ConfigError(f"unknown CI method {method!r}")
    p = errors / trials
    if method == "normal":
        half = _Z95 * math.sqrt(p * (1 - p) / trials)
        return max(0.0, p - half), min(1.0, p + half)
    low = 0.0 if errors == 0 else float(stats.beta.ppf(0.025, errors, trials - errors + 1))
    high = 1.0 if errors == trials else float(stats.beta.ppf(0.975, errors + 1, trials - errors))
    return low, high


def draw_instance(spec: TrialSpec, generator: np.random.Generator):
    """Active set, symbols and gains for one trial, in a fixed draw order."""
    if spec.fixed_support is not None:
        support = np.asarray(spec.fixed_support)
    else:
        support = np.sort(generator.choice(spec.N, size=spec.K, replace=False))
    symbols = np.zeros(spec.N, dtype=np.int8)
    symbols[support] = generator.choice(np.array([-1, 1], dtype=np.int8), size=spec.K)
    gains = spec.amplitude.draw(spec.N, generator)
    return support, symbols, gains


def run_trial(spec: TrialSpec, trial_index: int, context: Optional[TrialContext] = None,
              handler: Optional[DetectorErrorHandler] = None) -> TrialOutcome:
    """One trial: draw the instance, observe, detect, compare with the truth."""
    context = context or TrialContext(spec)
    handler = handler or DetectorErrorHandler(spec.detector.label)
    generator = streams.stream_generator(spec.master_seed, streams.TRIAL, trial_index)
    support, symbols, gains = draw_instance(spec, generator)
    detector = spec.detector

    if detector.family == "decorrelator":
        # MF bank z = G R b + sigma L_G g, the same g the analog front end would use
        g = generator.standard_normal(spec.N)
        z = context.G.values @ (gains * symbols) + math.sqrt(spec.sigma2) * (context.G.cholesky @ g)
        call = lambda: detect(detector, z, context.A, gains, context.G)
    else:
        y = context.A.values @ (gains * symbols) + draw_noise(
            context.A, context.G, spec.sigma2, generator,
            convention=spec.noise, model=context.noise_model,
        )
        if detector.whiten:
            call = lambda: apply_whitened(detector, y, context.A, context.G, gains, spec.sigma2,
                                          whitening=context.whitening)
        else:
            call = lambda: detect(detector, y, context.A, gains, context.G, spec.sigma2,
                                  shape=context.shape)

    result = handler.wrap(call, additional_info={"trial": trial_index})
    if result is None:
        return TrialOutcome(False, False, failed=True)
    support_ok, symbols_ok = result.matches(support, symbols)
    return TrialOutcome(support_ok, symbols_ok, reselections=result.reselections,
                        iterations=result.iterations)


def _run_chunk(spec: TrialSpec, context: TrialContext, start: int, stop: int) -> TrialTally:
    started = time.time()
    tally = TrialTally()
    handler = DetectorErrorHandler(spec.detector.label)
    for index in range(start, stop):
        tally.add(run_trial(spec, index, context, handler))
    log_worker_chunk(start, stop, tally.joint_errors, time.time() - started,
                     handler.stats() if handler.total_failures else None)
    return tally


def _chunks(n_trials: int, workers: int, chunk_size: Optional[int]) -> List[Tuple[int, int]]:
    if chunk_size is None:
        chunk_size = max(1, -(-n_trials // (4 * max(workers, 1))))
    return [(s, min(s + chunk_size, n_trials)) for s in range(0, n_trials, chunk_size)]


def estimate_pe(spec: TrialSpec, n_trials: int, workers: int = 1, chunk_size: Optional[int] = None,
                ci_method: str = "normal", context: Optional[TrialContext] = None) -> PeEstimate:
    """Aggregate trials 0..n_trials-1 with A fixed across trials."""
    if n_trials < 1:
        raise ConfigError("n_trials must be at least 1")
    if ci_method not in CI_METHODS:
        raise ConfigError(f"unknown CI method {ci_method!r}")
    context = context or TrialContext(spec, workers)
    if spec.detector.whiten:
        # Computed once here so workers receive it instead of each rebuilding it
        context.whitening
    bounds = _chunks(n_trials, workers, chunk_size)

    if workers <= 1 or len(bounds) == 1:
        parts = [_run_chunk(spec, context, start, stop) for start, stop in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(
                _run_chunk, [spec] * len(bounds), [context] * len(bounds), *zip(*bounds)
            ))

    total = TrialTally()
    for part in parts:
        total = total.merge(part)
    return PeEstimate.from_tally(total, ci_method)


# ============================================================================
# SWEEPS AND TUNING
# ============================================================================

def _with_detector_k(detector: DetectorSpec, K: int) -> DetectorSpec:
    if detector.family == "decorrelator" or detector.K is None:
        return detector
    return replace(detector, K=K)


def with_value(spec: TrialSpec, variable: str, value) -> TrialSpec:
    """Copy of spec with one sweep variable set."""
    if variable == "M":
        if not isinstance(spec.matrix, MatrixRecipe):
            raise ConfigError("M sweeps need a matrix recipe, not a fixed matrix")
        return replace(spec, matrix=replace(spec.matrix, M=int(value)))
    if variable == "N":
        if not isinstance(spec.matrix, MatrixRecipe):
            raise ConfigError("N sweeps need a matrix recipe, not a fixed matrix")
        N = int(value)
        K = N if spec.detector.family == "decorrelator" else spec.K
        return replace(spec, N=N, K=K, matrix=replace(spec.matrix, N=N),
                       detector=_with_detector_k(spec.detector, K))
    if variable == "K":
        K = int(value)
        return replace(spec, K=K, detector=_with_detector_k(spec.detector, K))
    if variable == "sigma2":
        return replace(spec, sigma2=float(value))
    if variable == "detector":
        if not isinstance(value, DetectorSpec):
            raise ConfigError("detector sweeps take DetectorSpec values")
        return replace(spec, detector=_with_detector_k(value, spec.K))
    if variable == "matrix_kind":
        if not isinstance(spec.matrix, MatrixRecipe):
            raise ConfigError("matrix_kind sweeps need a matrix recipe")
        return replace(spec, matrix=replace(spec.matrix, kind=str(value)))
    if variable == "gram":
        if not isinstance(value, GramSpec):
            raise ConfigError("gram sweeps take GramSpec values")
        return replace(spec, gram=value)
    raise ConfigError(f"unknown sweep variable {variable!r}")


def _display(value) -> Any:
    if isinstance(value, DetectorSpec):
        return value.label
    if isinstance(value, GramSpec):
        return value.kind
    return value


def estimate_row(spec: TrialSpec, context: TrialContext, estimate: PeEstimate,
                 sweep_var: str, sweep_value) -> Dict[str, Any]:
    """One CSV row in the sweep schema."""
    return {
        "sweep_var": sweep_var,
        "sweep_value": _display(sweep_value),
        "detector": spec.detector.label,
        "N": spec.N,
        "M": context.A.M,
        "K": spec.K,
        "sigma2": spec.sigma2,
        "gram": spec.gram.kind,
        "matrix_kind": spec.matrix_kind,
        "mu": context.mu if context.A.N > 1 else None,
        "trials": estimate.trials,
        "support_errors": estimate.support_errors,
        "joint_errors": estimate.joint_errors,
        "pe": estimate.pe,
        "ci_halfwidth": estimate.ci_half_width,
        "cond_symbol_err": estimate.conditional_symbol_error,
        "detector_failures": estimate.detector_failures,
        "master_seed": spec.master_seed,
    }


@dataclass
class TuneResult:
    threshold: float
    estimate: PeEstimate
    grid: List[float] = field(default_factory=list)
    estimates: List[PeEstimate] = field(default_factory=list)


def tune_threshold(spec: TrialSpec, grid: Sequence[float], n_trials: int, family: Optional[str] = None,
                   workers: int = 1, ci_method: str = "normal",
                   context: Optional[TrialContext] = None) -> TuneResult:
    """Pick the threshold with the smallest pe over grid; ties go to the smaller threshold.

    Every grid point reuses the same trial streams, so comparisons are made on
    common random numbers.
    """
    values = sorted(float(v) for v in grid)
    if not values:
        raise ConfigError("threshold grid is empty")
    family = family or spec.detector.family
    if family not in ("rddt", "rddft"):
        raise ConfigError(f"cannot tune a threshold for {family}")
    base = spec.detector
    if base.family != family:
        base = DetectorSpec(family, xi=values[0] if family == "rddt" else None,
                            eps=values[0] if family == "rddft" else None,
                            whiten=base.whiten,
                            symbol_stage=base.symbol_stage if family == "rddft" else "sign")
    context = context or TrialContext(spec, workers)

    estimates = []
    best = 0
    for i, value in enumerate(values):
        trial_spec = replace(spec, detector=base.with_threshold(value))
        estimates.append(estimate_pe(trial_spec, n_trials, workers, ci_method=ci_method, context=context))
        if estimates[i].pe < estimates[best].pe:
            best = i
    return TuneResult(values[best], estimates[best], values, estimates)


def sweep(spec: TrialSpec, variable: str, values: Sequence, n_trials: int,
          detectors: Optional[Sequence[DetectorSpec]] = None,
          outer: Optional[Tuple[str, Sequence]] = None,
          tune_grids: Optional[Dict[str, Sequence[float]]] = None,
          workers: int = 1, ci_method: str = "normal",
          store: Optional[MatrixStore] = None) -> List[Dict[str, Any]]:
    """One estimate per (outer value, value, detector), as CSV rows in a fixed order.

    One matrix is built (searched) per sweep point and shared by every
    detector at that point; a store keeps searched matrices across runs.
    Threshold detectors named in tune_grids are tuned per point on the grid
    for their family. Detector K follows the point's K.
    """
    if variable not in SWEEP_VARIABLES:
        raise ConfigError(f"unknown sweep variable {variable!r}; expected one of {SWEEP_VARIABLES}")
    if outer is not None and outer[0] not in OUTER_VARIABLES:
        raise ConfigError(f"unknown outer variable {outer[0]!r}; expected one of {OUTER_VARIABLES}")
    detectors = list(detectors or [spec.detector])
    tune_grids = tune_grids or {}

    rows = []
    outer_points = [(None, None)] if outer is None else [(outer[0], v) for v in outer[1]]
    for outer_var, outer_value in outer_points:
        base = spec if outer_var is None else with_value(spec, outer_var, outer_value)
        for value in values:
            point = with_value(base, variable, value)
            if variable == "detector":
                point_detectors = [point.detector]
            else:
                point_detectors = [_with_detector_k(d, point.K) for d in detectors]
            context = TrialContext(point, workers, store)
            for detector in point_detectors:
                trial_spec = replace(point, detector=detector)
                if detector.family == "decorrelator" and trial_spec.K != trial_spec.N:
                    raise ConfigError("the decorrelator baseline assumes every user is active (K = N)")
                started = time.time()
                if detector.family in tune_grids:
                    tuned = tune_threshold(trial_spec, tune_grids[detector.family], n_trials,
                                           workers=workers, ci_method=ci_method, context=context)
                    trial_spec = replace(trial_spec, detector=detector.with_threshold(tuned.threshold))
                    estimate = tuned.estimate
                else:
                    estimate = estimate_pe(trial_spec, n_trials, workers, ci_method=ci_method,
                                           context=context)
                log_estimate(detector.label, variable, _display(value), estimate.pe,
                             estimate.trials, time.time() - started)
                rows.append(estimate_row(trial_spec, context, estimate, variable, value))
    return rows


# ============================================================================
# NOISE EVENT
# ============================================================================

@dataclass
class EventEstimate:
    """Empirical P{max_n |a_n^H w| >= tau} against its analytic bound."""
    trials: int
    violations: int
    rate: float
    tau: float
    bound: float
    ci_half_width: float


def estimate_event_g(A, G: GramMatrix, sigma2: float, alpha: float, n_trials: int,
                     master_seed: int = 0, noise: str = NOISE_ANALOG) -> EventEstimate:
    """Noise-only trials counting max_n |a_n^H w| >= tau."""
    if n_trials < 1:
        raise ConfigError("n_trials must be at least 1")
    matrix = A if isinstance(A, MeasurementMatrix) else MeasurementMatrix(A)
    params = BoundParams.uniform(
        alpha, matrix.N, 1, sigma2, matrix.coherence,
        lambda_max_ginv=G.lambda_max_inv,
        row_energy=row_energy(matrix),
    )
    threshold = tau(params)
    model = noise_covariance(matrix, G, sigma2) if noise != NOISE_ANALOG else None

    violations = 0
    if sigma2 > 0:
        adjoint = matrix.values.conj().T
        for index in range(n_trials):
            generator = streams.stream_generator(master_seed, streams.EVENT, index)
            w = draw_noise(matrix, G, sigma2, generator, convention=noise, model=model)
            if np.max(np.abs(adjoint @ w)) >= threshold:
                violations += 1
    rate = violations / n_trials
    return EventEstimate(
        trials=n_trials,
        violations=violations,
        rate=rate,
        tau=threshold,
        bound=implied_pe_bound(alpha, matrix.N),
        ci_half_width=_Z95 * math.sqrt(rate * (1 - rate) / n_trials),
    )
