"""Extended-range scalar arithmetic, Gaussian tail evaluation, reproducible RNG.

Error probabilities of feedback coding schemes decay like iterated
exponentials, far below anything a float can hold.  This module provides:

* :class:`TowerReal` -- a positive scalar that is either an ordinary float
  ("moderate" band, [1e-300, 1e300]) or an exp-tower ``sign * g_k(seed)``
  bookkeeping record, where ``g_k`` is the k-fold iterated exponential and
  the record stores the magnitude of ``ln v``.
* ``q`` / ``log_q`` -- upper Gaussian tail Q(x) and its logarithm.  ``q`` is
  accurate to better than 1e-12 relative for |x| <= 8 and defers to
  ``exp(log_q(x))`` above.  ``log_q`` uses the Mills-ratio continued
  fraction for x > 8 and never underflows for float x up to ~1e150.
* :class:`RngContract` -- a (seed, stream_id) pair that reproduces
  bitwise-identical Gaussian sequences and supports deterministic stream
  splitting for parallel work.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG10_E = math.log10(math.e)

# Moderate band of TowerReal.  Values outside it are kept as exp-towers.
MODERATE_MIN = 1e-300
MODERATE_MAX = 1e300
_LN_MODERATE_MAX = math.log(MODERATE_MAX)

# Q evaluation switches from erfc to the continued-fraction log path here;
# both routes agree to better than 1e-12 relative at the seam.
Q_SWITCHOVER = 8.0


# ---------------------------------------------------------------------------
# Gaussian tail
# ---------------------------------------------------------------------------

def q(x: float) -> float:
    """Upper Gaussian tail Q(x) = P(N(0,1) > x).

    Direct erfc evaluation for x <= 8 (>= 12 significant digits), otherwise
    exp(log_q(x)), which underflows to 0.0 beyond x ~ 38.6 as a float must.
    """
    x = float(x)
    if x <= Q_SWITCHOVER:
        return 0.5 * math.erfc(x / _SQRT2)
    return math.exp(log_q(x))


def _log_q_cf(x: float) -> float:
    """ln Q(x) via the Mills-ratio continued fraction, for x > 0.

    Q(x) = phi(x) / D(x) with D = x + 1/(x + 2/(x + 3/(x + ...))).  The
    backward recurrence below converges to float precision for x >= 8 well
    within 64 levels; the dominant -x^2/2 term makes the relative error of
    the *logarithm* far below 1e-9 out to x = 1e6 and beyond.
    """
    t = x
    for k in range(64, 0, -1):
        t = x + k / t
    return -0.5 * x * x - _LOG_SQRT_2PI - math.log(t)


def log_q(x: float) -> float:
    """ln Q(x) for x > 0 without underflow.

    Satisfies the sandwich
    ``-x^2/2 - ln(x sqrt(2 pi)) - 1/x^2 <= log_q(x) <= -x^2/2 - ln(x sqrt(2 pi))``
    and agrees with ln(q(x)) to better than 1e-9 relative across the x = 8
    switch-over.
    """
    x = float(x)
    if x <= 0.0:
        raise ValueError("log_q requires x > 0")
    if x <= Q_SWITCHOVER:
        return math.log(0.5 * math.erfc(x / _SQRT2))
    return _log_q_cf(x)


# ---------------------------------------------------------------------------
# TowerReal
# ---------------------------------------------------------------------------

def _normalize_log_magnitude(m: float) -> tuple[int, float]:
    """Write m = g_height(seed) with seed in [1, e).  Requires m >= e."""
    height = 0
    while m >= math.e:
        m = math.log(m)
        height += 1
    return height, m


@dataclass(frozen=True)
class TowerReal:
    """Positive extended-range scalar.

    Exactly one representation is active:

    * moderate: ``value`` is a float in [1e-300, 1e300]; ``height == 0``.
    * exp-tower: ``value is None`` and ``|ln v| = g_height(seed)`` with
      ``sign = +1`` for v > 1 and ``-1`` for v < 1.  After normalization
      ``seed`` lies in the canonical band [1, e) and ``height >= 1``; the
      band tiles (e, inf) so the representation is unique and ``ln`` maps
      band k to band k-1 by pure bookkeeping.

    There is deliberately no addition: sums of same-height towers are not
    representable without leaving the format, and no consumer needs them.
    """

    value: float | None
    sign: int = 0
    height: int = 0
    seed: float = 0.0

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_float(cls, v: float) -> "TowerReal":
        v = float(v)
        if not v > 0.0 or math.isinf(v):
            raise ValueError("TowerReal is positive and finite")
        if MODERATE_MIN <= v <= MODERATE_MAX:
            return cls(value=v)
        return cls.from_ln(math.log(v))

    @classmethod
    def from_ln(cls, ln_v: float) -> "TowerReal":
        """Value e**ln_v for any float ln_v."""
        ln_v = float(ln_v)
        if math.isnan(ln_v) or math.isinf(ln_v):
            raise ValueError("ln value must be finite")
        if abs(ln_v) <= _LN_MODERATE_MAX:
            return cls(value=math.exp(ln_v))
        height, seed = _normalize_log_magnitude(abs(ln_v))
        return cls(value=None, sign=1 if ln_v > 0 else -1, height=height, seed=seed)

    # -- queries -----------------------------------------------------------

    @property
    def is_moderate(self) -> bool:
        return self.value is not None

    def __float__(self) -> float:
        if self.value is not None:
            return self.value
        return math.inf if self.sign > 0 else 0.0

    def ln_float(self) -> float | None:
        """Signed ln of the value as a float, or None when it exceeds floats."""
        if self.value is not None:
            return math.log(self.value)
        m = self._log_magnitude_float()
        return None if m is None else self.sign * m

    def _log_magnitude_float(self) -> float | None:
        """g_height(seed) as a float if representable, else None."""
        if self.value is not None:
            return abs(math.log(self.value))
        m = self.seed
        for _ in range(self.height):
            if m > _LN_MODERATE_MAX:
                return None
            m = math.exp(m)
        return m

    # -- arithmetic --------------------------------------------------------

    def exp(self) -> "TowerReal":
        """e**self (self read as a positive magnitude).

        Once the exponent is itself an exp-tower the operation is exact
        height bookkeeping: |ln e^t| = t, so the record's height rises by
        one and the seed is untouched.
        """
        if self.value is not None:
            if self.value <= _LN_MODERATE_MAX:
                return TowerReal(value=math.exp(self.value))
            height, seed = _normalize_log_magnitude(self.value)
            return TowerReal(value=None, sign=1, height=height, seed=seed)
        if self.sign < 0:
            # t < 1e-300, so e^t rounds to 1.
            return TowerReal(value=1.0)
        return TowerReal(value=None, sign=1, height=self.height + 1, seed=self.seed)

    def reciprocal(self) -> "TowerReal":
        if self.value is not None:
            return TowerReal(value=1.0 / self.value)
        return TowerReal(value=None, sign=-self.sign, height=self.height, seed=self.seed)

    def scale(self, c: float) -> "TowerReal":
        """Multiply by a float c > 0.

        Exact while the result stays moderate or while |ln v| is itself a
        float (the factor is absorbed into the level-1 logarithm).  For
        towers whose level-1 logarithm exceeds floats the factor shifts the
        seed by less than 1e-250 relative and is dropped; the stored seed
        cannot resolve it.
        """
        c = float(c)
        if not c > 0.0 or math.isinf(c):
            raise ValueError("scale factor must be positive and finite")
        if self.value is not None:
            p = self.value * c
            if MODERATE_MIN <= p <= MODERATE_MAX:
                return TowerReal(value=p)
            return TowerReal.from_ln(math.log(self.value) + math.log(c))
        m = self._log_magnitude_float()
        if m is None:
            return self
        return TowerReal.from_ln(self.sign * m + math.log(c))

    # -- ordering ----------------------------------------------------------

    def _cmp(self, other: "TowerReal") -> int:
        a, b = self, other
        if a.value is not None and b.value is not None:
            return (a.value > b.value) - (a.value < b.value)
        if a.value is not None or b.value is not None:
            mod, tower, flip = (a, b, -1) if a.value is not None else (b, a, 1)
            m = tower._log_magnitude_float()
            if m is not None:
                lm = math.log(mod.value)
                lt = tower.sign * m
                return flip * ((lt > lm) - (lt < lm))
            return flip * tower.sign
        if a.sign != b.sign:
            return 1 if a.sign > b.sign else -1
        key_a, key_b = (a.height, a.seed), (b.height, b.seed)
        if key_a == key_b:
            return 0
        bigger_mag = 1 if key_a > key_b else -1
        return bigger_mag * a.sign

    def __lt__(self, other):
        return self._cmp(_as_tower(other)) < 0

    def __le__(self, other):
        return self._cmp(_as_tower(other)) <= 0

    def __gt__(self, other):
        return self._cmp(_as_tower(other)) > 0

    def __ge__(self, other):
        return self._cmp(_as_tower(other)) >= 0

    # -- rendering ---------------------------------------------------------

    def _render_levels(self) -> tuple[int, float]:
        """Depth j >= 1 and the float value of level j of the log chain.

        Level 1 is |ln v|, level i+1 is ln(level i); the returned level is
        the shallowest one that fits in a float.
        """
        if self.value is None:
            # Walk down from the seed: level (height - i + 1) equals g_i(seed).
            level_vals = [self.seed]
            m = self.seed
            while m <= _LN_MODERATE_MAX:
                m = math.exp(m)
                level_vals.append(m)
            # level_vals[i] = g_i(seed); level index of g_i is height - i + 1.
            best = len(level_vals) - 1
            return self.height - best + 1, level_vals[best]
        raise ValueError("moderate values render as plain floats")

    def render(self) -> str:
        """Canonical string form; parseable by :meth:`parse`.

        ``exp-tower(sign, k, s)`` denotes exp applied k times to s, inverted
        when sign is ``neg``: the value is ``g_k(s)**(+/-1)``.
        """
        if self.value is not None:
            return repr(self.value)
        depth, level = self._render_levels()
        word = "pos" if self.sign > 0 else "neg"
        return f"exp-tower({word}, {depth}, {level!r})"

    def human(self) -> str:
        """Short human form, e.g. ``e^-1618.18`` or ``e^-e^1618.18``."""
        if self.value is not None:
            return f"{self.value:.6g}"
        depth, level = self._render_levels()
        s = "-" if self.sign < 0 else ""
        return f"e^{s}" + "e^" * (depth - 1) + f"{level:.6g}"

    _PARSE_RE = re.compile(
        r"exp-tower\(\s*(pos|neg)\s*,\s*(\d+)\s*,\s*([-+0-9.eE]+)\s*\)"
    )

    @classmethod
    def parse(cls, text: str) -> "TowerReal":
        text = text.strip()
        m = cls._PARSE_RE.fullmatch(text)
        if m is None:
            return cls.from_float(float(text))
        sign_word, depth, level = m.group(1), int(m.group(2)), float(m.group(3))
        t = tower_g(depth, level)
        return t if sign_word == "pos" else t.reciprocal()

    def log10_chain(self) -> list[float | None]:
        """Iterated log10 of max(v, 1/v): entry i is the (i+1)-fold log10,
        None until it fits in a float; the chain stops at the first finite
        entry.  Useful for plotting magnitudes of deep towers.
        """
        if self.value is not None:
            v = self.value
            big = max(v, 1.0 / v)
            return [math.log10(big)]
        depth, level = self._render_levels()
        if depth == 1:
            return [level * _LOG10_E]
        return [None] * (depth - 1) + [level * _LOG10_E + math.log10(_LOG10_E)]


def _as_tower(x) -> TowerReal:
    if isinstance(x, TowerReal):
        return x
    return TowerReal.from_float(x)


def tower_g(k: int, x: float) -> TowerReal:
    """g_k(x), the k-fold iterated exponential, as a TowerReal.

    g_0(x) = x requires x > 0 here because TowerReal holds positive values
    only; for k >= 1 any finite float x is accepted.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return TowerReal.from_float(x)
    t = TowerReal.from_ln(x)
    k -= 1
    while k > 0 and t.value is not None:
        t = t.exp()
        k -= 1
    if k > 0:
        if t.sign > 0:
            t = TowerReal(value=None, sign=1, height=t.height + k, seed=t.seed)
        else:
            # Value below 1e-300: one exp brings it back to ~1.
            t = t.exp()
            k -= 1
            while k > 0 and t.value is not None:
                t = t.exp()
                k -= 1
            if k > 0:
                t = TowerReal(value=None, sign=1, height=t.height + k, seed=t.seed)
    return t


def tower_compare(a, b) -> int:
    """Total order on TowerReals: -1, 0, +1 for a < b, a == b, a > b."""
    return _as_tower(a)._cmp(_as_tower(b))


def tower_scale(a, c: float) -> TowerReal:
    """c * a for a TowerReal a and positive float c."""
    return _as_tower(a).scale(c)


def gaussian_tail_tower(ln_x: float) -> TowerReal:
    """Q(e**ln_x) as a TowerReal, for arguments given by their logarithm.

    Used by bound chains whose Q arguments grow like e^{n(C-R)} and overflow
    floats long before the bound itself is interesting.  Monotone
    nonincreasing in ln_x across all branch switches.
    """
    ln_x = float(ln_x)
    if ln_x <= math.log(Q_SWITCHOVER):
        return TowerReal.from_float(q(math.exp(ln_x)))
    if ln_x <= 340.0:
        # x^2/2 still fits in a float: use the continued-fraction log.
        return TowerReal.from_ln(_log_q_cf(math.exp(ln_x)))
    # |ln Q| = x^2/2 * (1 + eps) with eps <= 2(ln x + 1)/x^2 < 1e-290:
    # below the resolution of the level-1 logarithm, so only x^2/2 survives.
    return TowerReal.from_ln(2.0 * ln_x - math.log(2.0)).exp().reciprocal()


# ---------------------------------------------------------------------------
# RNG contract
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def mix64(*parts: int) -> int:
    """Deterministic 64-bit mix (splitmix64 chain) of integer parts.

    Used to derive per-row sweep seeds from (base seed, grid indices).
    """
    h = 0x9E3779B97F4A7C15
    for p in parts:
        h = (h ^ (p & _MASK64)) & _MASK64
        h = (h + 0x9E3779B97F4A7C15) & _MASK64
        z = h
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        h = z ^ (z >> 31)
    return h


@dataclass(frozen=True)
class RngContract:
    """Reproducible random source: (seed, stream_id) -> Gaussian stream.

    The generator is numpy's PCG64 keyed by SeedSequence(seed, spawn_key=
    (stream_id,)); Gaussians come from ``Generator.standard_normal``
    (ziggurat).  Identical (seed, stream_id) therefore reproduce
    bitwise-identical sequences, and distinct stream ids are statistically
    independent.  Parallel chunks use ``chunk_generator`` with the chunk
    index appended to the spawn key, which keeps results independent of the
    worker count.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & _MASK64)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.default_rng(ss)

    def chunk_generator(self, chunk: int) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.stream_id, int(chunk))
        )
        return np.random.default_rng(ss)

    def spawn(self, k: int) -> "RngContract":
        return RngContract(seed=self.seed, stream_id=mix64(self.stream_id, k))
