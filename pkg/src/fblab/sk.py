"""PAM-plus-feedback-refinement coding (Schalkwijk-Kailath scheme).

Time 0 sends one of M equally likely PAM points; the remaining n-1 uses run
the Elias recursion on the time-0 noise so the receiver ends up with the
equivalent observation X_0 + U_n, where U_n is Gaussian with variance
1/(1+S_1)^{n-1}.  With the energy split S_0 = S_1 + 1, S_1 = S - 1/n the
post-normalization half-distance is

    gamma_n = (1/2) sqrt(12 S_0 (1+S_1)^{n-1} / (M^2-1))
            = sqrt(3 (1 + S - 1/n)^n / (M^2-1))        (when n S > 1)

and the block error probability is exactly 2 (M-1)/M Q(gamma_n).  Relaxing
step by step (M^2-1 -> M^2, the bracket bound (1-1/(1+n))^{n/2} >= e^{-1/2},
then sqrt(3/e) >= 1) gives the chain

    P_e <= 2 Q(gamma_n) <= 2 Q(sqrt(3/e) e^{n(C-R)}) <= 2 Q(e^{n(C-R)}),

valid for n S >= 1 with M = ceil(e^{nR}).  The infinite-bandwidth variant
replaces (n, S) by power P = 2WS and duration T with C_inf = P/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import RngContract, TowerReal, gaussian_tail_tower, log_q, q
from .report import SchemeReport, Stopwatch, clopper_pearson, mean_and_stderr, run_chunked

# Above this block-rate product, ceil(e^{nR}) is not materialized; planners
# use ln M = nR, whose ceiling correction is below double precision.
_MAX_EXACT_LN_M = 40.0


def capacity(S: float) -> float:
    """AWGN capacity (1/2) ln(1 + S) nats per use."""
    if S < 0:
        raise ValueError("S must be >= 0")
    return 0.5 * math.log1p(S)


def pam_size_for_rate(n: int, rate: float) -> int:
    """M = ceil(e^{n R}).  A 1e-9 guard treats near-integer e^{nR} as exact."""
    if n * rate > _MAX_EXACT_LN_M:
        raise OverflowError("e^{nR} too large to materialize; use log_pam_size")
    return max(2, math.ceil(math.exp(n * rate) - 1e-9))


def log_pam_size(n: int, rate: float) -> tuple[float, float]:
    """(ln M, ln(M^2 - 1)) for M = ceil(e^{nR}), exact when M fits."""
    if n * rate <= _MAX_EXACT_LN_M:
        m = pam_size_for_rate(n, rate)
        ln_m = math.log(m)
        return ln_m, 2.0 * ln_m + math.log1p(-1.0 / (m * m))
    ln_m = n * rate
    return ln_m, 2.0 * ln_m


@dataclass(frozen=True)
class PamConstellation:
    """M-point PAM a_m = m - (M+1)/2, m = 1..M: zero mean, unit spacing."""

    M: int

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("M must be >= 2")

    def points(self) -> np.ndarray:
        return np.arange(1, self.M + 1, dtype=float) - (self.M + 1) / 2.0

    @property
    def sigma0_sq(self) -> float:
        return (self.M * self.M - 1) / 12.0


@dataclass(frozen=True)
class SkParams:
    """Block length n, average energy S per use, alphabet size M.

    Derived energy split: s1 = max(0, S - 1/n) for each refinement use and
    s0 = s1 + 1 at time 0 (s0 = nS when nS <= 1), so s0 + (n-1) s1 = nS.
    """

    n: int
    S: float
    M: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.S > 0:
            raise ValueError("S must be positive")
        if self.M < 2:
            raise ValueError("M must be >= 2")

    @property
    def s1(self) -> float:
        return max(0.0, self.S - 1.0 / self.n)

    @property
    def s0(self) -> float:
        return self.s1 + 1.0 if self.s1 > 0.0 else self.n * self.S

    @property
    def sigma0_sq(self) -> float:
        return PamConstellation(self.M).sigma0_sq

    @property
    def d0(self) -> float:
        return math.sqrt(self.s0 / self.sigma0_sq)


def sk_log_gamma(params: SkParams) -> float:
    """ln gamma_n, always evaluated in the log domain."""
    p = params
    ln_m2m1 = math.log(p.M) * 2.0 + math.log1p(-1.0 / (p.M * p.M)) \
        if p.M > 3_000_000 else math.log(p.M * p.M - 1.0)
    return (-math.log(2.0)
            + 0.5 * (math.log(12.0) + math.log(p.s0)
                     + (p.n - 1) * math.log1p(p.s1) - ln_m2m1))


def sk_gamma(params: SkParams) -> float:
    """gamma_n as a float (inf when it overflows; see sk_log_gamma)."""
    lg = sk_log_gamma(params)
    return math.exp(lg) if lg < 709.0 else math.inf


def sk_pe_from_gamma(M: int, gamma: float) -> float:
    """Exact block error probability 2 (M-1)/M Q(gamma)."""
    if M < 2 or gamma < 0:
        raise ValueError("need M >= 2 and gamma >= 0")
    return 2.0 * (M - 1) / M * q(gamma)


def sk_pe_exact(params: SkParams) -> float:
    return sk_pe_from_gamma(params.M, sk_gamma(params))


def sk_pe_exact_tower(params: SkParams) -> TowerReal:
    """Exact error probability in the extended range."""
    tail = gaussian_tail_tower(sk_log_gamma(params))
    return tail.scale(2.0 * (params.M - 1) / params.M)


@dataclass(frozen=True)
class SkBoundChain:
    """Exact value and the two relaxed upper bounds, extended-range."""

    pe_exact: TowerReal
    two_q_gamma: TowerReal
    bound_a: TowerReal   # 2 Q(sqrt(3/e) e^{n(C-R)})
    bound_b: TowerReal   # 2 Q(e^{n(C-R)})
    log_gamma: float
    n_delta: float       # n (C - R)


def sk_pe_upper_chain(n: int, S: float, rate: float) -> SkBoundChain:
    """Evaluate the chain P_e <= 2Q(gamma_n) <= bound_a <= bound_b.

    Requires n S >= 1 (the bracket relaxation needs it) and rate > 0.
    M is ceil(e^{n rate}); when it is too large to materialize, ln M = nR
    and the (M-1)/M factor collapses to 1, both below double resolution.
    """
    if n * S < 1.0:
        raise ValueError("chain requires n*S >= 1")
    if not rate > 0:
        raise ValueError("rate must be positive")
    n_delta = n * (capacity(S) - rate)
    s1 = max(0.0, S - 1.0 / n)
    s0 = s1 + 1.0 if s1 > 0.0 else n * S
    _, ln_m2m1 = log_pam_size(n, rate)
    lg = (-math.log(2.0)
          + 0.5 * (math.log(12.0) + math.log(s0)
                   + (n - 1) * math.log1p(s1) - ln_m2m1))
    if n * rate <= _MAX_EXACT_LN_M:
        m_int = pam_size_for_rate(n, rate)
        scale_exact = 2.0 * (m_int - 1) / m_int
    else:
        scale_exact = 2.0
    tail_gamma = gaussian_tail_tower(lg)
    return SkBoundChain(
        pe_exact=tail_gamma.scale(scale_exact),
        two_q_gamma=tail_gamma.scale(2.0),
        bound_a=gaussian_tail_tower(0.5 * math.log(3.0) - 0.5 + n_delta).scale(2.0),
        bound_b=gaussian_tail_tower(n_delta).scale(2.0),
        log_gamma=lg,
        n_delta=n_delta,
    )


def sk_simulate(params: SkParams, trials: int, rng: RngContract) -> SchemeReport:
    """Monte Carlo run of the full scheme with maximum-likelihood decision.

    Decision ties at cell boundaries resolve to the lower index.  Reports
    empirical error rate with a 95% Clopper-Pearson interval, per-use
    energy, and the U_n / X_0 sample correlation (uncorrelatedness check).
    """
    p = params
    n, M = p.n, p.M
    d0 = p.d0
    s1 = p.s1
    offset = (M + 1) / 2.0

    sigma_sq_path = [1.0]
    for _ in range(n - 1):
        sigma_sq_path.append(sigma_sq_path[-1] / (1.0 + s1))

    def chunk(gen: np.random.Generator, size: int) -> dict:
        m = gen.integers(1, M + 1, size=size)
        u0 = m - offset
        x0 = u0 * d0
        z0 = gen.standard_normal(size)
        u = z0.copy()
        step_e = np.zeros(n - 1)
        if s1 > 0.0:
            g = math.sqrt(s1)
            for i in range(n - 1):
                sigma = math.sqrt(sigma_sq_path[i])
                x = (g / sigma) * u
                y = x + gen.standard_normal(size)
                u = u - (sigma * g / (1.0 + s1)) * y
                step_e[i] = (x * x).sum()
        y_eq = x0 + u
        idx = np.ceil(y_eq / d0 + offset - 0.5)
        np.clip(idx, 1, M, out=idx)
        err = int((idx != m).sum())
        x0_sq = x0 * x0
        return {
            "errors": err,
            "x0_sum": x0_sq.sum(), "x0_sumsq": (x0_sq * x0_sq).sum(),
            "step_e": step_e,
            "su": u.sum(), "sx": x0.sum(), "sux": (u * x0).sum(),
            "suu": (u * u).sum(), "sxx": (x0 * x0).sum(),
        }

    with Stopwatch() as sw:
        acc = run_chunked(trials, rng, chunk)

    errors = int(acc["errors"])
    pe_hat = errors / trials
    ci = clopper_pearson(errors, trials, 0.95)
    e0, e0_se = mean_and_stderr(acc["x0_sum"], acc["x0_sumsq"], trials)
    per_use = [e0] + [float(v) / trials for v in acc["step_e"]]

    mu_u = acc["su"] / trials
    mu_x = acc["sx"] / trials
    cov = acc["sux"] / trials - mu_u * mu_x
    var_u = acc["suu"] / trials - mu_u * mu_u
    var_x = acc["sxx"] / trials - mu_x * mu_x
    corr = cov / math.sqrt(var_u * var_x) if var_u > 0 and var_x > 0 else 0.0

    gamma = sk_gamma(p)
    return SchemeReport(
        scheme="sk",
        params={"n": n, "snr": p.S, "M": M, "s0": p.s0, "s1": s1, "d0": d0},
        analytic={"gamma": gamma, "pe": sk_pe_exact(p),
                  "log_pe": math.log(2.0 * (M - 1) / M) + _log_q_safe(gamma)},
        empirical={"pe": pe_hat, "corr_un_x0": corr,
                   "corr_stderr": 1.0 / math.sqrt(trials)},
        energy={"per_use": per_use, "total": math.fsum(per_use),
                "budget": n * p.S},
        trials=trials,
        errors=errors,
        ci95=ci,
        seed=rng.seed,
        stream_id=rng.stream_id,
        wall_clock_s=sw.elapsed,
    )


def _log_q_safe(x: float) -> float:
    if x <= 0.0:
        return math.log(0.5)
    if math.isinf(x):
        return -math.inf
    return log_q(x)


# ---------------------------------------------------------------------------
# Infinite-bandwidth limit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BroadbandParams:
    """Power P (= 2WS), duration T, target rate R_inf; C_inf = P/2."""

    power: float
    duration: float
    rate_inf: float

    def __post_init__(self):
        if not (self.power > 0 and self.duration > 0):
            raise ValueError("power and duration must be positive")
        if self.rate_inf < 0:
            raise ValueError("rate_inf must be >= 0")

    @property
    def c_inf(self) -> float:
        return self.power / 2.0


@dataclass(frozen=True)
class BroadbandBound:
    """Lower bounds on gamma for the finite-n broadband scheme.

    full: sqrt(3) exp[PT/2 - 1/2 - (PT)^2/(4n) - T R_inf].
    simplified: exp[T (C_inf - R_inf)], valid once n >= 6 (PT)^2 because the
    quadratic penalty is then at most 1/24 and the leading constant stays
    above 1.
    """

    log_full: float
    quad_penalty: float
    simplified_valid: bool
    log_simplified: float | None

    @property
    def full(self) -> float:
        return math.exp(self.log_full) if self.log_full < 709.0 else math.inf

    @property
    def simplified(self) -> float | None:
        if self.log_simplified is None:
            return None
        return math.exp(self.log_simplified) if self.log_simplified < 709.0 else math.inf


def broadband_gamma_bound(bb: BroadbandParams, n: int) -> BroadbandBound:
    if n < 1:
        raise ValueError("n must be >= 1")
    pt = bb.power * bb.duration
    quad = pt * pt / (4.0 * n)
    log_full = 0.5 * math.log(3.0) + pt / 2.0 - 0.5 - quad - bb.duration * bb.rate_inf
    ok = n >= 6.0 * pt * pt
    log_simplified = bb.duration * (bb.c_inf - bb.rate_inf) if ok else None
    return BroadbandBound(
        log_full=log_full,
        quad_penalty=quad,
        simplified_valid=ok,
        log_simplified=log_simplified,
    )
