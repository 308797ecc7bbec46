"""Feedback transmission of a Gaussian source value (Elias scheme).

The transmitter scales the current estimation error to the per-use energy
budget, the receiver applies the MMSE correction, and the error variance
contracts by 1/(1+S_i) per use.  With a total budget of n*S the uniform
split is optimal and the final MSE sigma1^2/(1+S)^n meets the Gaussian
rate-distortion bound with equality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngContract
from .report import SchemeReport, Stopwatch, mean_and_stderr, run_chunked


@dataclass(frozen=True)
class ChannelConfig:
    """Unit-variance AWGN channel used n times at average power S."""

    n: int
    S: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.S > 0:
            raise ValueError("S must be positive")


@dataclass(frozen=True)
class EnergySchedule:
    """Per-use energies s_1..s_n; zero entries are allowed (skipped uses)."""

    s: tuple[float, ...]

    def __post_init__(self):
        if len(self.s) == 0:
            raise ValueError("schedule must be non-empty")
        if any(si < 0 for si in self.s):
            raise ValueError("energies must be >= 0")
        object.__setattr__(self, "s", tuple(float(si) for si in self.s))

    @property
    def total(self) -> float:
        return math.fsum(self.s)

    def check_budget(self, config: ChannelConfig) -> None:
        budget = config.n * config.S
        if len(self.s) != config.n:
            raise ValueError("schedule length must equal n")
        if self.total > budget * (1.0 + 1e-12):
            raise ValueError("schedule exceeds energy budget n*S")


def uniform_schedule(config: ChannelConfig) -> EnergySchedule:
    return EnergySchedule(s=(config.S,) * config.n)


def elias_analytic_mse(sigma1_sq: float, schedule: EnergySchedule) -> float:
    """Final MSE sigma1^2 / prod(1 + s_i)."""
    if not sigma1_sq > 0:
        raise ValueError("sigma1_sq must be positive")
    log_prod = math.fsum(math.log1p(si) for si in schedule.s)
    return sigma1_sq * math.exp(-log_prod)


def rate_distortion_floor(sigma1_sq: float, d: float) -> float:
    """R(d) = (1/2) ln(sigma1^2 / d) nats for a Gaussian source."""
    if not 0 < d <= sigma1_sq:
        raise ValueError("need 0 < d <= sigma1_sq")
    return 0.5 * math.log(sigma1_sq / d)


@dataclass
class EliasTrace:
    """Single-trial record; all per-step quantities, feedback-exact."""

    schedule: tuple[float, ...]
    sigma_sq: list[float] = field(default_factory=list)  # length n+1
    u: list[float] = field(default_factory=list)         # length n+1
    x: list[float] = field(default_factory=list)
    y: list[float] = field(default_factory=list)
    estimate: list[float] = field(default_factory=list)


def _step_scale(sigma_sq: float, s_i: float) -> tuple[float, float]:
    """Transmit gain sqrt(s_i)/sigma_i and receiver gain sigma_i*sqrt(s_i)/(1+s_i)."""
    sigma = math.sqrt(sigma_sq)
    g_tx = math.sqrt(s_i) / sigma
    g_rx = sigma * math.sqrt(s_i) / (1.0 + s_i)
    return g_tx, g_rx

def elias_trace(config: ChannelConfig, schedule: EnergySchedule,
                sigma1_sq: float, rng: RngContract) -> EliasTrace:
    schedule.check_budget(config)
    gen = rng.generator()
    trace = EliasTrace(schedule=schedule.s)
    sigma_sq = float(sigma1_sq)
    u = math.sqrt(sigma1_sq) * float(gen.standard_normal())
    trace.sigma_sq.append(sigma_sq)
    trace.u.append(u)
    for s_i in schedule.s:
        g_tx, g_rx = _step_scale(sigma_sq, s_i)
        x = g_tx * u
        y = x + float(gen.standard_normal())
        est = g_rx * y
        u = u - est
        sigma_sq = sigma_sq / (1.0 + s_i)
        trace.x.append(x)
        trace.y.append(y)
        trace.estimate.append(est)
        trace.u.append(u)
        trace.sigma_sq.append(sigma_sq)
    return trace


def elias_simulate(config: ChannelConfig, schedule: EnergySchedule,
                   sigma1_sq: float, trials: int, rng: RngContract) -> SchemeReport:
    """Monte Carlo run; reports final MSE, per-step variances, energy audit."""
    schedule.check_budget(config)
    if not sigma1_sq > 0:
        raise ValueError("sigma1_sq must be positive")
    n = config.n
    s = schedule.s

    sigma_sq_path = [float(sigma1_sq)]
    for s_i in s:
        sigma_sq_path.append(sigma_sq_path[-1] / (1.0 + s_i))

    def chunk(gen: np.random.Generator, size: int) -> dict:
        u = math.sqrt(sigma1_sq) * gen.standard_normal(size)
        x_sum = np.zeros(n)
        x_sumsq = np.zeros(n)
        u_sum = np.zeros(n + 1)
        u_sumsq = np.zeros(n + 1)
        u_sum[0] = u.sum()
        u_sumsq[0] = (u * u).sum()
        e_trial = np.zeros(size)
        for i, s_i in enumerate(s):
            g_tx, g_rx = _step_scale(sigma_sq_path[i], s_i)
            x = g_tx * u
            y = x + gen.standard_normal(size)
            u = u - g_rx * y
            xx = x * x
            x_sum[i] = xx.sum()
            x_sumsq[i] = (xx * xx).sum()
            e_trial += xx
            u_sum[i + 1] = u.sum()
            u_sumsq[i + 1] = (u * u).sum()
        uu = u * u
        return {
            "x_sum": x_sum, "x_sumsq": x_sumsq,
            "u_sum": u_sum, "u_sumsq": u_sumsq,
            "mse_sum": uu.sum(), "mse_sumsq": (uu * uu).sum(),
            "e_sum": e_trial.sum(), "e_sumsq": (e_trial * e_trial).sum(),
        }

    with Stopwatch() as sw:
        acc = run_chunked(trials, rng, chunk)

    mse, mse_se = mean_and_stderr(acc["mse_sum"], acc["mse_sumsq"], trials)
    e_tot, e_se = mean_and_stderr(acc["e_sum"], acc["e_sumsq"], trials)
    per_use = [acc["x_sum"][i] / trials for i in range(n)]
    var_u = [acc["u_sumsq"][i] / trials - (acc["u_sum"][i] / trials) ** 2
             for i in range(n + 1)]

    return SchemeReport(
        scheme="elias",
        params={"n": n, "snr": config.S, "sigma1_sq": sigma1_sq,
                "schedule": list(s)},
        analytic={
            "mse": elias_analytic_mse(sigma1_sq, schedule),
            "sigma_sq_path": sigma_sq_path,
            "rd_rate_at_mse": rate_distortion_floor(
                sigma1_sq, elias_analytic_mse(sigma1_sq, schedule)),
        },
        empirical={"mse": mse, "mse_stderr": mse_se, "var_u": var_u},
        energy={"per_use": per_use, "total": e_tot, "total_stderr": e_se,
                "budget": config.n * config.S},
        trials=trials,
        seed=rng.seed,
        stream_id=rng.stream_id,
        wall_clock_s=sw.elapsed,
    )
