"""
Closed-form performance guarantees for RDD and RDDF.

Natural logarithms throughout. Bounds whose preconditions fail evaluate to
math.inf ("no guarantee") rather than raising, so sweeps can report them.
"""

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from .error_handling import ConfigError
from .model_core import GramMatrix, gain_values, matrix_values, row_energy


@dataclass(frozen=True)
class BoundParams:
    """Inputs of the noise threshold tau and the recovery conditions."""
    alpha: float
    N: int
    K: int
    sigma2: float
    mu: float
    r_min: float
    r_max: float
    sorted_gains: Tuple[float, ...]
    lambda_max_ginv: float = 1.0
    row_energy: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.N < 1 or not 1 <= self.K <= self.N:
            raise ConfigError(f"need 1 <= K <= N, got K={self.K}, N={self.N}")
        if self.sigma2 < 0:
            raise ConfigError("sigma2 must be nonnegative")
        if not 0.0 <= self.mu <= 1.0:
            raise ConfigError(f"coherence must lie in [0, 1], got {self.mu}")
        if not 0 < self.r_min <= self.r_max:
            raise ConfigError("need 0 < r_min <= r_max")
        gains = tuple(sorted((abs(float(g)) for g in self.sorted_gains), reverse=True))
        if len(gains) != self.K:
            raise ConfigError(f"sorted_gains needs K={self.K} entries, got {len(gains)}")
        object.__setattr__(self, "sorted_gains", gains)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @classmethod
    def uniform(cls, alpha: float, N: int, K: int, sigma2: float, mu: float, r: float = 1.0,
                lambda_max_ginv: float = 1.0, row_energy: float = 1.0) -> "BoundParams":
        """Equal gains r on every active user."""
        r = abs(r)
        return cls(alpha, N, K, sigma2, mu, r, r, (r,) * K, lambda_max_ginv, row_energy)

    @classmethod
    def gain_range(cls, alpha: float, N: int, K: int, sigma2: float, mu: float, r_min: float,
                   r_max: float, lambda_max_ginv: float = 1.0, row_energy: float = 1.0) -> "BoundParams":
        """Gains anywhere in [r_min, r_max], with the ordered gains that minimize the eps range.

        The k-th term of the eps upper end is r^(k) (1 - (K-k) mu): r_max where
        the factor is negative, r_min elsewhere. The factor grows with k, so
        the choice is a valid descending order.
        """
        r_min, r_max = abs(r_min), abs(r_max)
        gains = tuple(r_max if 1.0 - (K - k) * mu < 0 else r_min for k in range(1, K + 1))
        return cls(alpha, N, K, sigma2, mu, r_min, r_max, gains, lambda_max_ginv, row_energy)

    @classmethod
    def from_instance(cls, A, G: GramMatrix, gains, K: int, sigma2: float, alpha: float,
                      support: Optional[Sequence[int]] = None) -> "BoundParams":
        """Measure mu, lambda_max(G^-1) and the row energy from concrete matrices.

        Gains are taken over support when given, otherwise over the K weakest
        users (the worst case for the conditions).
        """
        from .matrix_factory import coherence

        values = matrix_values(A)
        r = np.abs(gain_values(gains))
        if support is not None:
            active = r[list(support)]
        else:
            active = np.sort(r)[:K]
        return cls(
            alpha=alpha, N=values.shape[1], K=K, sigma2=sigma2, mu=coherence(values),
            r_min=float(active.min()), r_max=float(r.max() if support is None else active.max()),
            sorted_gains=tuple(float(g) for g in active),
            lambda_max_ginv=G.lambda_max_inv, row_energy=row_energy(values),
        )

    def row_energy_in_bracket(self, tolerance: float = 1e-9) -> bool:
        """1 <= row energy <= 1 + (N-1) mu^2."""
        upper = 1.0 + (self.N - 1) * self.mu ** 2
        return 1.0 - tolerance <= self.row_energy <= upper + tolerance


@dataclass(frozen=True)
class ConditionReport:
    tau: float
    lhs: float
    rhs: float
    holds: bool
    implied_pe_bound: float


def tau(params: BoundParams) -> float:
    """sigma sqrt(2 (1 + alpha) ln N) sqrt(lambda_max(G^-1)) sqrt(row energy)."""
    return (params.sigma * math.sqrt(2.0 * (1.0 + params.alpha) * math.log(params.N))
            * math.sqrt(params.lambda_max_ginv) * math.sqrt(params.row_energy))


def implied_pe_bound(alpha: float, N: int) -> float:
    """N^-alpha [pi (1 + alpha) ln N]^-1/2; the conditions hold with at least 1 minus this."""
    log_n = math.log(N)
    if log_n == 0:
        return math.inf
    return N ** (-alpha) / math.sqrt(math.pi * (1.0 + alpha) * log_n)


def _report(params: BoundParams, lhs: float) -> ConditionReport:
    t = tau(params)
    rhs = 2.0 * t
    return ConditionReport(t, lhs, rhs, lhs >= rhs, implied_pe_bound(params.alpha, params.N))


def check_rdd_condition(params: BoundParams) -> ConditionReport:
    """|r_min| - (2K-1) mu |r_max| >= 2 tau."""
    lhs = params.r_min - (2 * params.K - 1) * params.mu * params.r_max
    return _report(params, lhs)


def check_rddf_condition(params: BoundParams) -> ConditionReport:
    """|r_min| - (2K-1) mu |r_min| >= 2 tau."""
    lhs = params.r_min - (2 * params.K - 1) * params.mu * params.r_min
    return _report(params, lhs)


def xi_range(params: BoundParams, K0: Optional[int] = None) -> Optional[Tuple[float, float]]:
    """(K0 mu |r_max| + tau, |r_min| - (K0-1) mu |r_max| - tau), or None when empty."""
    K0 = params.K if K0 is None else K0
    t = tau(params)
    lower = K0 * params.mu * params.r_max + t
    upper = params.r_min - (K0 - 1) * params.mu * params.r_max - t
    return (lower, upper) if lower < upper else None


def eps_range(params: BoundParams) -> Optional[Tuple[float, float]]:
    """(tau, min_k |r^(k)| (1 - (K-k) mu) - tau), or None when empty."""
    t = tau(params)
    K = params.K
    upper = min(g * (1.0 - (K - k) * params.mu) for k, g in enumerate(params.sorted_gains, start=1)) - t
    return (t, upper) if t < upper else None


def snr_min(params: BoundParams) -> float:
    """|r_min|^2 / (sigma^2 lambda_max(G^-1))."""
    if params.sigma2 == 0:
        return math.inf
    return params.r_min ** 2 / (params.sigma2 * params.lambda_max_ginv)


def snr_min_db(params: BoundParams) -> float:
    return 10.0 * math.log10(snr_min(params))


def beta1(params: BoundParams) -> float:
    """[1 - (2K-1) mu |r_max|/|r_min|]^2 / row energy; nan when the base is negative."""
    base = 1.0 - (2 * params.K - 1) * params.mu * params.r_max / params.r_min
    if base < 0:
        return math.nan
    return base ** 2 / params.row_energy


def beta2(params: BoundParams) -> float:
    """[1 - (2K-1) mu]^2 / row energy; nan unless the base is positive."""
    base = 1.0 - (2 * params.K - 1) * params.mu
    if base <= 0:
        return math.nan
    return base ** 2 / params.row_energy


def _pe_bound(N: int, snr: float, beta: float) -> float:
    if math.isnan(beta) or beta == 0:
        return math.inf
    if math.isinf(snr):
        return 0.0
    x = snr * beta
    return (2.0 * N / math.sqrt(math.pi)) * (x / 2.0) ** -0.5 * math.exp(-x / 8.0)


def pe_bound_rdd(params: BoundParams) -> float:
    return _pe_bound(params.N, snr_min(params), beta1(params))


def pe_bound_rddf(params: BoundParams) -> float:
    return _pe_bound(params.N, snr_min(params), beta2(params))


def pe_bound_decorrelator(snr: float, N: int) -> float:
    """Union bound (N / (2 sqrt(pi))) (SNR/2)^-1/2 exp(-SNR/2)."""
    if snr <= 0:
        return math.inf
    if math.isinf(snr):
        return 0.0
    return (N / (2.0 * math.sqrt(math.pi))) * (snr / 2.0) ** -0.5 * math.exp(-snr / 2.0)


def dft_coherence_bound(M: int, N: int, c: float) -> Tuple[float, float]:
    """(sqrt(4 (2 ln N + c) / M), 1 - 2 e^-c): partial-DFT coherence bound and its probability floor."""
    if M < 1 or N < 1:
        raise ConfigError("M and N must be positive")
    return math.sqrt(4.0 * (2.0 * math.log(N) + c) / M), 1.0 - 2.0 * math.exp(-c)


def snr_requirement(N: int) -> float:
    """8 ln N, the SNR_min below which the bounds are vacuous."""
    return 8.0 * math.log(N)


def q_function(x):
    """Gaussian tail Q(x) = P{Z > x}."""
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def decorrelator_user_error(gains, sigma2: float, G: GramMatrix) -> np.ndarray:
    """Per-user decorrelator error Q(|r_n| / (sigma sqrt([G^-1]_nn)))."""
    r = np.abs(gain_values(gains))
    if sigma2 == 0:
        return np.zeros_like(r)
    ginv_diag = np.diag(G.solve(np.eye(G.N)))
    return q_function(r / np.sqrt(sigma2 * ginv_diag))


def summarize(params: BoundParams, K0: Optional[int] = None) -> Dict[str, object]:
    """Every quantity the bounds report prints, in display order."""
    rdd_report = check_rdd_condition(params)
    rddf_report = check_rddf_condition(params)
    snr = snr_min(params)
    return {
        "tau": rdd_report.tau,
        "snr_min": snr,
        "snr_min_db": snr_min_db(params) if snr > 0 else -math.inf,
        "snr_requirement": snr_requirement(params.N),
        "rdd_condition_lhs": rdd_report.lhs,
        "rdd_condition_holds": rdd_report.holds,
        "rddf_condition_lhs": rddf_report.lhs,
        "rddf_condition_holds": rddf_report.holds,
        "condition_rhs": rdd_report.rhs,
        "implied_pe_bound": rdd_report.implied_pe_bound,
        "xi_range": xi_range(params, K0),
        "eps_range": eps_range(params),
        "beta1": beta1(params),
        "beta2": beta2(params),
        "pe_bound_rdd": pe_bound_rdd(params),
        "pe_bound_rddf": pe_bound_rddf(params),
        "pe_bound_decorrelator": pe_bound_decorrelator(snr, params.N),
        "row_energy": params.row_energy,
        "row_energy_in_bracket": params.row_energy_in_bracket(),
    }
