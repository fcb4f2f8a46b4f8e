"""Reproducible per-path random streams for the simulation kernels.

Each path gets its own xoshiro256++ generator whose state is derived from
(master_seed, stream_index) through a splitmix64 splitter, so results are
bit-identical for a fixed master seed no matter how many worker threads run
the paths.  Normals come from a ziggurat sampler whose tables are solved at
import time (layer closure via bisection) rather than transcribed.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)
_STREAM_MULT = U64(0xD2B74407B1CE6E93)
_INV_2_53 = 1.1102230246251565e-16  # 2**-53


# --------------------------------------------------------------------------- #
# Ziggurat tables (128 layers of equal area over exp(-x^2/2), x >= 0)
# --------------------------------------------------------------------------- #

def _zig_closure(r: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Build layer tables for tail start ``r``; returns (closure residual, X, F)."""
    n = 128
    phi_r = math.exp(-0.5 * r * r)
    tail = math.sqrt(math.pi / 2.0) * math.erfc(r / math.sqrt(2.0))
    v = r * phi_r + tail
    x = np.zeros(n + 1)
    f = np.zeros(n + 1)
    x[1] = r
    f[1] = phi_r
    for i in range(1, n):
        f[i + 1] = f[i] + v / x[i]
        if f[i + 1] >= 1.0:
            # layers exhausted early: residual positive by the overshoot
            x[i + 1:] = 0.0
            f[i + 1:] = f[i + 1]
            break
        x[i + 1] = math.sqrt(-2.0 * math.log(f[i + 1]))
    x[0] = v / phi_r
    f[0] = f[1]
    return f[n] - 1.0, x, f


def _build_ziggurat() -> tuple[np.ndarray, np.ndarray, float]:
    lo, hi = 3.3, 3.6
    res_lo = _zig_closure(lo)[0]
    res_hi = _zig_closure(hi)[0]
    if res_lo * res_hi >= 0.0:
        raise RuntimeError("ziggurat closure bracket failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        res_mid = _zig_closure(mid)[0]
        if res_mid == 0.0 or hi - lo < 1e-15:
            break
        if res_lo * res_mid < 0.0:
            hi = mid
        else:
            lo, res_lo = mid, res_mid
    r = 0.5 * (lo + hi)
    residual, x, f = _zig_closure(r)
    if abs(residual) > 1e-9:
        raise RuntimeError(f"ziggurat closure residual too large: {residual}")
    x[128] = 0.0
    f[128] = 1.0
    return x, f, r


ZIG_X, ZIG_F, ZIG_R = _build_ziggurat()


# --------------------------------------------------------------------------- #
# Numba stream primitives
# --------------------------------------------------------------------------- #

@njit(cache=True, inline="always")
def _rotl(x, k):
    return U64((x << U64(k)) | (x >> U64(64 - k)))


@njit(cache=True, inline="always")
def _splitmix(state):
    state = U64(state + _GOLDEN)
    z = state
    z = U64((z ^ (z >> U64(30))) * _MIX1)
    z = U64((z ^ (z >> U64(27))) * _MIX2)
    return state, U64(z ^ (z >> U64(31)))


@njit(cache=True)
def seed_state(master_seed, stream_index):
    """xoshiro256++ state for one stream of a master seed (splitmix splitter)."""
    s = U64(U64(master_seed) ^ U64(U64(stream_index) * _STREAM_MULT))
    s, s0 = _splitmix(s)
    s, s1 = _splitmix(s)
    s, s2 = _splitmix(s)
    s, s3 = _splitmix(s)
    if s0 == U64(0) and s1 == U64(0) and s2 == U64(0) and s3 == U64(0):
        s0 = _GOLDEN
    return s0, s1, s2, s3


@njit(cache=True, inline="always")
def next_u64(s0, s1, s2, s3):
    result = U64(_rotl(U64(s0 + s3), 23) + s0)
    t = U64(s1 << U64(17))
    s2 = U64(s2 ^ s0)
    s3 = U64(s3 ^ s1)
    s1 = U64(s1 ^ s2)
    s0 = U64(s0 ^ s3)
    s2 = U64(s2 ^ t)
    s3 = _rotl(s3, 45)
    return result, s0, s1, s2, s3


@njit(cache=True, inline="always")
def to_unit(u):
    """Map a u64 to the open interval (0, 1) using the top 53 bits."""
    return (np.float64(u >> U64(11)) + 0.5) * _INV_2_53


@njit(cache=True, inline="always")
def next_unit(s0, s1, s2, s3):
    u, s0, s1, s2, s3 = next_u64(s0, s1, s2, s3)
    return to_unit(u), s0, s1, s2, s3


@njit(cache=True, inline="always")
def next_exponential(s0, s1, s2, s3):
    u, s0, s1, s2, s3 = next_unit(s0, s1, s2, s3)
    return -math.log(u), s0, s1, s2, s3


@njit(cache=True, inline="always")
def next_normal(s0, s1, s2, s3, zx, zf, zr):
    """Standard normal via the ziggurat; layer bits, sign bit and mantissa bits
    are taken from disjoint parts of one u64 draw."""
    while True:
        u64, s0, s1, s2, s3 = next_u64(s0, s1, s2, s3)
        i = np.int64(u64 & U64(127))
        sign = -1.0 if (u64 >> U64(7)) & U64(1) else 1.0
        u = to_unit(u64)
        x = u * zx[i]
        if x < zx[i + 1]:
            return sign * x, s0, s1, s2, s3
        if i == 0:
            while True:
                u1, s0, s1, s2, s3 = next_unit(s0, s1, s2, s3)
                u2, s0, s1, s2, s3 = next_unit(s0, s1, s2, s3)
                xt = -math.log(u1) / zr
                yt = -math.log(u2)
                if yt + yt >= xt * xt:
                    return sign * (zr + xt), s0, s1, s2, s3
        else:
            u2, s0, s1, s2, s3 = next_unit(s0, s1, s2, s3)
            if zf[i] + u2 * (zf[i + 1] - zf[i]) < math.exp(-0.5 * x * x):
                return sign * x, s0, s1, s2, s3


@njit(cache=True, inline="always")
def exp_small(u):
    """exp(u) specialized for |u| <= 0.03 (degree-7 Taylor, ~1e-17 relative);
    falls back to libm outside that range."""
    if u > 0.03 or u < -0.03:
        return math.exp(u)
    return 1.0 + u * (1.0 + u * 0.5 * (1.0 + u * 0.3333333333333333 * (
        1.0 + u * 0.25 * (1.0 + u * 0.2 * (1.0 + u * 0.16666666666666666 * (
            1.0 + u * 0.14285714285714285))))))
