"""Per-channel first-order coupling matrices and second-order kernels.

The first-order coupling of each noise source to the signal pair is a 2x2
matrix-valued transfer function B(w); every channel here decomposes as

    B(w) = B_inf + C1 / (kappa0 - i w) + C2 / (conj(kappa0) - i w),

with constant matrices (B_inf, C1, C2).  That decomposition is what the
residue engine needs, so it is exposed directly.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from .errors import NotTuned, UnsupportedChannel
from .linear import green_time, sigma_tn_offdiag_time
from .params import ChannelKind, NoiseChannel, OpoParams

_E12 = np.array([[0.0, 1.0], [0.0, 0.0]])
_E21 = np.array([[0.0, 0.0], [1.0, 0.0]])
_SZ = np.array([[1.0, 0.0], [0.0, -1.0]])


def b1_split(kind: ChannelKind, params: OpoParams):
    """(B_inf, C1, C2) decomposition of the channel coupling matrix."""
    e = params.e_mag
    th = params.vartheta
    k0 = complex(params.kappa0_hat)
    ep, em = cmath.exp(-1j * th), cmath.exp(1j * th)
    zero = np.zeros((2, 2), dtype=complex)
    if kind is ChannelKind.CHI_PUMP:
        return zero, e * _E12.astype(complex), zero.copy()
    if kind is ChannelKind.PUMP_AMPLITUDE:
        return zero, ep * e * k0 * _E12, em * e * np.conj(k0) * _E21
    if kind is ChannelKind.PUMP_PHASE:
        return 0.5j * _SZ.astype(complex), 1j * ep * e * _E12, -1j * em * e * _E21
    if kind is ChannelKind.CRYSTAL_TEMPERATURE:
        return (ep * e * _E12 + em * e * _E21), zero, zero.copy()
    if kind is ChannelKind.CAVITY_DETUNING:
        # Off-diagonal sign follows the pump response to its own -i g dnu
        # source (detuning retards pump and signal together); the opposite
        # sign flips the interference with the diagonal part and makes the
        # cumulant weight grow with the pump linewidth instead of falling.
        return -1j * _SZ.astype(complex), -1j * ep * e * _E12, 1j * em * e * _E21
    raise UnsupportedChannel(
        f"{kind.value} enters only as a direct source, not through B"
    )


def b1_channel(kind: ChannelKind, w, params: OpoParams) -> np.ndarray:
    """Coupling matrix B(w) of one noise channel at (possibly complex) w."""
    b_inf, c1, c2 = b1_split(kind, params)
    d0 = params.kappa0_hat - 1j * w
    d0d = np.conj(params.kappa0_hat) - 1j * w
    return b_inf + c1 / d0 + c2 / d0d


def b2_mean(
    params: OpoParams,
    channels: list[NoiseChannel],
    phase_noise_quadratic: bool = False,
) -> complex:
    """Second-order mean pump shift, as displayed for the tuned device:

        -g_chi^2 / (2 (1-E^2)) - g_phase E / kappa0 - g_nu^2 E / kappa0^2.

    The pump-phase term is linear in its weight as displayed; pass
    ``phase_noise_quadratic=True`` for the g_phase^2 reading (suspected typo).
    """
    if not params.is_tuned:
        raise NotTuned("closed form stated for a tuned device")
    e = params.e_mag
    k0 = complex(params.kappa0_hat).real
    total = 0.0
    for ch in channels:
        if ch.weight == 0:
            continue
        if ch.kind is ChannelKind.CHI_SIGNAL:
            total += -(ch.weight**2) / (2.0 * (1.0 - e**2))
        elif ch.kind is ChannelKind.PUMP_PHASE:
            g = ch.weight**2 if phase_noise_quadratic else ch.weight
            total += -g * e / k0
        elif ch.kind is ChannelKind.CAVITY_DETUNING:
            total += -(ch.weight**2) * e / k0**2
    return complex(total)


def b11_kernel(
    dtau: float, params: OpoParams, channels: list[NoiseChannel]
) -> np.ndarray:
    """Regular part of the second-order memory kernel <B(tau) G(s) B(tau - s)>
    at s = dtau >= 0, summed over channels with their g^2 weights.

    Frozen (delta-like) channels contribute B(0) G(s) B(0); white channels
    contribute the closed-form inverse transform of B(w) G(s) B(-w) (their
    equal-time delta part lives in :func:`b11_delta_weight`); band channels
    are averaged over their spectrum numerically.
    """
    if dtau < 0:
        raise ValueError("dtau must be >= 0")
    if not params.is_tuned:
        raise NotTuned("kernel assembly uses the tuned time-domain propagator")
    g = green_time(dtau, params)
    k0 = complex(params.kappa0_hat)
    k0d = np.conj(k0)
    out = np.zeros((2, 2), dtype=complex)
    for ch in channels:
        if ch.weight == 0 or ch.kind is ChannelKind.CHI_SIGNAL:
            continue
        w2 = ch.weight**2
        b_inf, c1, c2 = b1_split(ch.kind, params)
        if ch.spectrum.variant == "delta":
            b0 = b_inf + c1 / k0 + c2 / k0d
            out += w2 * (b0 @ g @ b0)
        elif ch.spectrum.variant == "white":
            r1 = b_inf + c1 / (2 * k0) + c2 / (k0 + k0d)
            r2 = b_inf + c1 / (k0 + k0d) + c2 / (2 * k0d)
            out += w2 * (
                cmath.exp(-k0 * dtau) * (c1 @ g @ r1)
                + cmath.exp(-k0d * dtau) * (c2 @ g @ r2)
            )
        else:  # uniform band: numeric average over the band
            wm = ch.spectrum.w_max
            nodes, weights = np.polynomial.legendre.leggauss(40)
            ws = nodes * wm
            acc = np.zeros((2, 2), dtype=complex)
            for wv, gw in zip(ws, weights):
                bw = b_inf + c1 / (k0 - 1j * wv) + c2 / (k0d - 1j * wv)
                bmw = b_inf + c1 / (k0 + 1j * wv) + c2 / (k0d + 1j * wv)
                acc += gw * cmath.exp(-1j * wv * dtau) * (bw @ g @ bmw)
            out += w2 * acc / 2.0  # Gauss weights sum to 2 over [-1, 1]
    return out


def b11_delta_weight(params: OpoParams, channels: list[NoiseChannel]) -> np.ndarray:
    """Coefficient of delta(dtau) in the white-noise part of the kernel,
    (1/2) B_inf B_inf per channel (the half comes from the causal edge)."""
    out = np.zeros((2, 2), dtype=complex)
    for ch in channels:
        if ch.weight == 0 or ch.kind is ChannelKind.CHI_SIGNAL:
            continue
        if ch.spectrum.variant == "white":
            b_inf, _, _ = b1_split(ch.kind, params)
            out += 0.5 * ch.weight**2 * (b_inf @ b_inf)
    return out


def delta_b2(dtau: float, params: OpoParams) -> complex:
    """Pump back-action memory kernel -E^2 kappa0 G0(s) <a(s) a^dag(0)> at
    s = dtau >= 0 (tuned closed form)."""
    if not params.is_tuned:
        raise NotTuned("closed form stated for a tuned device")
    if dtau < 0:
        raise ValueError("dtau must be >= 0")
    e = params.e_mag
    if e == 0:
        return 0.0 + 0.0j
    k0 = complex(params.kappa0_hat).real
    return complex(
        -(e**2) * k0 * math.exp(-k0 * dtau) * sigma_tn_offdiag_time(dtau, params)
    )
