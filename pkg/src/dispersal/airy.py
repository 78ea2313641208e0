"""Airy function Ai, the constant A0, and the boundary-layer profile eta*.

Ai and Ai' use the Maclaurin series near the origin and the classical
Poincare asymptotic expansions (truncated at their smallest term) further
out.  The profile

    eta*(s) = Ai(a1^(1/3) s - A0) / Z,   Z = int_0^inf Ai(a1^(1/3) s - A0) ds,

solves ``eta'' + (a0 - a1 s) eta = 0`` with ``eta'(0) = 0`` and unit mass,
where ``a0 = a1^(2/3) A0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import BracketFailure, InvalidA1, OutOfRange

AI0 = 3.0 ** (-2.0 / 3.0) / math.gamma(2.0 / 3.0)
AIP0 = -(3.0 ** (-1.0 / 3.0)) / math.gamma(1.0 / 3.0)
SUPPORTED = 20.0
# Switch points balance the two error sources.  On x > 0 the series loses
# relative accuracy like eps*exp(2 zeta) to cancellation while the asymptotic
# error falls like exp(-2 zeta); they cross near x = 5.6 at ~1e-9.  On x < 0
# the cancellation is only eps*exp(zeta), so the series is kept out to 6.5.
SERIES_RADIUS = 6.5
POSITIVE_RADIUS = 5.6
_SQRT_PI = math.sqrt(math.pi)


def _series(x):
    """Maclaurin series for (Ai, Ai')."""
    x3 = x * x * x
    f = fp = g = gp = 0.0
    tf, tg, tgp = 1.0, x, 1.0
    tfp = 0.5 * x * x
    k = 0
    while True:
        f += tf
        g += tg
        fp += tfp
        gp += tgp
        k += 1
        tf *= x3 / ((3 * k - 1) * (3 * k))
        tg *= x3 / ((3 * k) * (3 * k + 1))
        tfp *= x3 / ((3 * k) * (3 * k + 2))
        tgp *= x3 / ((3 * k - 2) * (3 * k))
        small = 1e-18 * max(abs(f), abs(g), abs(fp), abs(gp), 1.0)
        if k > 3 and max(abs(tf), abs(tg), abs(tfp), abs(tgp)) < small:
            break
    return AI0 * f + AIP0 * g, AI0 * fp + AIP0 * gp


def _coefficients(zeta, kmax=80):
    """u_k/zeta^k and v_k/zeta^k up to the smallest term of the u series."""
    u, v = [1.0], [1.0]
    uk = 1.0
    for k in range(1, kmax):
        uk *= (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / ((2 * k - 1) * 216.0 * k)
        tu = uk / zeta**k
        if abs(tu) > abs(u[-1]):
            break
        u.append(tu)
        v.append(-(6 * k + 1) / (6 * k - 1) * tu)
    return u, v


def _asymptotic(x):
    """Large-|x| expansions for (Ai, Ai'); valid for any |x| >~ 5."""
    if x > 0:
        zeta = 2.0 / 3.0 * x**1.5
        u, v = _coefficients(zeta)
        su = math.fsum((-1) ** k * t for k, t in enumerate(u))
        sv = math.fsum((-1) ** k * t for k, t in enumerate(v))
        e = math.exp(-zeta) / (2.0 * _SQRT_PI)
        return e * su / x**0.25, -e * sv * x**0.25
    t = -x
    zeta = 2.0 / 3.0 * t**1.5
    u, v = _coefficients(zeta)
    ue = math.fsum((-1) ** (k // 2) * c for k, c in enumerate(u) if k % 2 == 0)
    uo = math.fsum((-1) ** (k // 2) * c for k, c in enumerate(u) if k % 2 == 1)
    ve = math.fsum((-1) ** (k // 2) * c for k, c in enumerate(v) if k % 2 == 0)
    vo = math.fsum((-1) ** (k // 2) * c for k, c in enumerate(v) if k % 2 == 1)
    c, s = math.cos(zeta - math.pi / 4), math.sin(zeta - math.pi / 4)
    ai = (c * ue + s * uo) / (_SQRT_PI * t**0.25)
    aip = t**0.25 * (s * ve - c * vo) / _SQRT_PI
    return ai, aip


def _airy_pair(x):
    inside = x <= POSITIVE_RADIUS if x >= 0 else -x <= SERIES_RADIUS
    return _series(x) if inside else _asymptotic(x)


def _check(x):
    if not abs(x) <= SUPPORTED:
        raise OutOfRange(f"Airy evaluation supported for |x| <= {SUPPORTED}, got {x}")


def airy_ai(x: float) -> float:
    x = float(x)
    _check(x)
    return _airy_pair(x)[0]


def airy_ai_prime(x: float) -> float:
    x = float(x)
    _check(x)
    return _airy_pair(x)[1]


def find_A0(tol: float = 1e-14) -> float:
    """|first negative zero of Ai'|, by bracketed root finding on [-2, 0]."""
    lo, hi = -2.0, 0.0
    if not airy_ai_prime(lo) > 0 > airy_ai_prime(hi):
        raise BracketFailure("Ai' does not change sign on [-2, 0]")
    return -brentq(airy_ai_prime, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)


A0 = find_A0()


def _ai_unbounded(z):
    # past the supported window Ai < 1e-26; leading asymptotic term is plenty
    if z > SUPPORTED:
        zeta = 2.0 / 3.0 * z**1.5
        return math.exp(-zeta) / (2.0 * _SQRT_PI * z**0.25), -math.exp(-zeta) * z**0.25 / (2.0 * _SQRT_PI)
    return _airy_pair(z)


@dataclass(frozen=True, eq=False)
class AiryProfile:
    """Unit-mass Airy boundary-layer profile ``eta*`` with sampled values."""

    a1: float
    a0: float
    s: np.ndarray
    values: np.ndarray
    slope: np.ndarray
    normalization: float
    tail_bound: float

    @property
    def s_max(self) -> float:
        return float(self.s[-1])

    @property
    def inflection(self) -> float:
        return self.a0 / self.a1

    def _args(self, s):
        return self.a1 ** (1.0 / 3.0) * np.asarray(s, dtype=float) - A0

    def __call__(self, s):
        z = self._args(s)
        out = np.vectorize(lambda t: _ai_unbounded(t)[0], otypes=[float])(z)
        return out / self.normalization

    def derivative(self, s):
        z = self._args(s)
        out = np.vectorize(lambda t: _ai_unbounded(t)[1], otypes=[float])(z)
        return self.a1 ** (1.0 / 3.0) * out / self.normalization

    def second_derivative(self, s):
        """From the ODE: eta'' = -(a0 - a1 s) eta."""
        s = np.asarray(s, dtype=float)
        return -(self.a0 - self.a1 * s) * self(s)

    def mass(self, K: float) -> float:
        """``int_0^K eta*(s) ds``."""
        if K <= 0:
            return 0.0
        c = self.a1 ** (1.0 / 3.0)
        # Ai < 1e-26 past SUPPORTED, so clipping there loses nothing
        val, _ = quad(lambda z: _ai_unbounded(z)[0], -A0, min(c * K - A0, SUPPORTED), limit=200,
                      epsabs=1e-14, epsrel=1e-12)
        return val / (c * self.normalization)

    def quantile(self, p: float) -> float:
        """Smallest ``K`` with ``mass(K) = p``."""
        if not 0 < p < 1:
            raise ValueError("p must lie in (0, 1)")
        hi = max(self.s_max, 1.0)
        while self.mass(hi) < p:
            hi *= 2
        return brentq(lambda k: self.mass(k) - p, 0.0, hi, xtol=1e-12)

    def l2_normalized(self):
        """The positive multiple of eta* with unit L2 norm, and its L1 mass."""
        c = self.a1 ** (1.0 / 3.0)
        sq, _ = quad(lambda z: _ai_unbounded(z)[0] ** 2, -A0, np.inf, limit=200,
                     epsabs=1e-15, epsrel=1e-12)
        l2 = math.sqrt(sq / c) / self.normalization
        return (lambda s: self(s) / l2), 1.0 / l2


def default_s_max(a1: float) -> float:
    return (12.0 + A0) * a1 ** (-1.0 / 3.0)


def build_eta_star(a1: float, s_max: float | None = None, samples: int = 2001) -> AiryProfile:
    """Sample eta* on ``[0, s_max]``; the mass integral is completed past s_max.

    The tail beyond the sample window is added using ``int_z^inf Ai ~ Ai(z)/sqrt(z)``
    and the size of that correction is reported as ``tail_bound``.
    """
    if not a1 > 0:
        raise InvalidA1(f"a1 must be positive, got {a1}")
    s_max = default_s_max(a1) if s_max is None else float(s_max)
    c = a1 ** (1.0 / 3.0)
    z_max = c * s_max - A0
    if z_max <= 0 or _ai_unbounded(z_max)[0] > 1e-12:
        raise ValueError(f"s_max={s_max} too small: Ai({z_max:.3g}) must be below 1e-12")
    head, _ = quad(lambda z: _ai_unbounded(z)[0], -A0, z_max, limit=400,
                   epsabs=1e-15, epsrel=1e-13)
    ai_end = _ai_unbounded(z_max)[0]
    tail = ai_end / math.sqrt(z_max)
    Z = (head + tail) / c
    s = np.linspace(0.0, s_max, samples)
    pairs = [_ai_unbounded(t) for t in c * s - A0]
    vals = np.array([p[0] for p in pairs]) / Z
    slope = c * np.array([p[1] for p in pairs]) / Z
    return AiryProfile(float(a1), float(c * c * A0), s, vals, slope, float(Z), float(tail / c / Z))
