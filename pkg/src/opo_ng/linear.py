"""Linearized response: Green's matrices and the time-normal-ordered spectrum.

All matrix-valued functions return 2x2 complex numpy arrays in the
(a, a^dagger) basis; see :mod:`opo_ng.params` for the index convention.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NotTuned, ZeroPump
from .params import OpoParams, TUNED_TOL

_SELF_CHECK_FREQS = (0.137, 0.71, 1.618, 3.3, 7.77)


@dataclass(frozen=True)
class CharFrequencies:
    """Characteristic frequencies of the linearized signal system (both in the
    upper half plane below threshold)."""

    omega_plus: complex
    omega_minus: complex


def delta_sig(omega, params: OpoParams):
    """Signal inverse susceptibility kappa_hat - i omega."""
    return params.kappa_hat - 1j * omega


def delta_sig_dag(omega, params: OpoParams):
    """Conjugate-parameter partner: conj(kappa_hat) - i omega (same -i omega)."""
    return np.conj(params.kappa_hat) - 1j * omega


def delta_pump(omega, params: OpoParams):
    return params.kappa0_hat - 1j * omega


def delta_pump_dag(omega, params: OpoParams):
    return np.conj(params.kappa0_hat) - 1j * omega


def dtilde(omega, params: OpoParams):
    """Characteristic polynomial D(omega) = Delta Delta^dd - E^2."""
    return delta_sig(omega, params) * delta_sig_dag(omega, params) - params.e_mag**2


def char_freqs(params: OpoParams) -> CharFrequencies:
    """omega_pm = i (cos psi -/+ sqrt(E^2 - sin^2 psi)), with a factorization
    self-check D(w) = -(w + w_plus)(w + w_minus) at a few fixed frequencies."""
    e, psi = params.e_mag, params.psi
    root = cmath.sqrt(e**2 - math.sin(psi) ** 2)
    wp = 1j * (math.cos(psi) - root)
    wm = 1j * (math.cos(psi) + root)
    for w in _SELF_CHECK_FREQS:
        lhs = dtilde(w, params)
        rhs = -(w + wp) * (w + wm)
        if abs(lhs - rhs) > 1e-9 * max(1.0, abs(lhs)):
            raise AssertionError("characteristic-polynomial factorization failed")
    return CharFrequencies(omega_plus=wp, omega_minus=wm)


def green_freq(mode: str, omega, params: OpoParams) -> np.ndarray:
    """Frequency-domain Green's matrix for 'signal' or 'pump'."""
    if mode == "signal":
        d = dtilde(omega, params)
        e = params.e_mag
        th = params.vartheta
        return (
            np.array(
                [
                    [delta_sig_dag(omega, params), cmath.exp(-1j * th) * e],
                    [cmath.exp(1j * th) * e, delta_sig(omega, params)],
                ]
            )
            / d
        )
    if mode == "pump":
        return np.array(
            [
                [1.0 / delta_pump(omega, params), 0.0],
                [0.0, 1.0 / delta_pump_dag(omega, params)],
            ]
        )
    raise ValueError(f"unknown mode {mode!r}")


def green_time(tau: float, params: OpoParams) -> np.ndarray:
    """Time-domain signal Green's matrix (tuned device only).

    Causal: exactly zero for tau < 0; identity at tau = 0 (right limit).
    """
    if not params.is_tuned:
        raise NotTuned("time-domain closed form is available only for a tuned device")
    if tau < 0:
        return np.zeros((2, 2), dtype=complex)
    e = params.e_mag
    ch, sh = math.cosh(e * tau), math.sinh(e * tau)
    return math.exp(-tau) * np.array([[ch, sh], [sh, ch]], dtype=complex)


def green_pump_time(tau: float, params: OpoParams) -> np.ndarray:
    """Time-domain pump Green's matrix, exp(-kappa0 tau) per component."""
    if tau < 0:
        return np.zeros((2, 2), dtype=complex)
    return np.array(
        [
            [cmath.exp(-params.kappa0_hat * tau), 0.0],
            [0.0, cmath.exp(-np.conj(params.kappa0_hat) * tau)],
        ]
    )


def sigma_tn_numerator(omega, params: OpoParams) -> np.ndarray:
    """Numerator matrix of the tuned time-normal-ordered spectrum.

    sigma11_tn = sigma_tn_numerator / [(w^2 - w_+^2)(w^2 - w_-^2)].
    """
    e = params.e_mag
    if e <= 0:
        raise ZeroPump("time-normal-ordered spectrum carries 1/E factors")
    diag = 4.0 * (1.0 + e**2 + omega**2) / (2.0 * e)
    return np.array([[diag, 4.0], [4.0, diag]], dtype=complex)


def sigma11_tn(omega, params: OpoParams) -> np.ndarray:
    """Time-normal-ordered first-order spectrum, argument-oriented as the
    two-pole construction writes it (value at -omega; even in omega for the
    tuned case).  Use :func:`sigma11_tn_spectrum` for the plain-argument form.
    """
    if params.e_mag <= 0:
        raise ZeroPump("sigma11_tn undefined at zero excitation")
    cf = char_freqs(params)
    wp, wm = cf.omega_plus, cf.omega_minus
    den = (omega**2 - wp**2) * (omega**2 - wm**2)
    if params.is_tuned:
        return sigma_tn_numerator(omega, params) / den
    warnings.warn(
        "detuned sigma11_tn uses the two-pole construction (experimental for psi != 0)",
        stacklevel=2,
    )
    pref = 1.0 / (wp**2 - wm**2)
    return pref * (
        _sigma_n_at(-wp, params) / (omega**2 - wp**2)
        - _sigma_n_at(-wm, params) / (omega**2 - wm**2)
    )


def sigma11_tn_spectrum(omega, params: OpoParams) -> np.ndarray:
    """Argument-flipped helper: the spectrum as a function of +omega."""
    return sigma11_tn(-omega, params)


def _sigma_n_at(z, params: OpoParams) -> np.ndarray:
    """Normally-ordered numerator matrix evaluated at a (complex) frequency.

    The conjugate entry uses the pointwise conjugate of the aa entry, the only
    reading that reproduces the tuned closed form at the pole locations.
    """
    e = params.e_mag
    th = params.vartheta
    aa = 4.0 * delta_sig_dag(z, params) / (cmath.exp(-1j * th) * e)
    dd = 4.0 * np.conj(delta_sig_dag(z, params)) / (cmath.exp(1j * th) * e)
    return np.array([[aa, 4.0], [4.0, dd]], dtype=complex)


def squeezed_spectral_density(omega, params: OpoParams) -> float:
    """Normally ordered squeezed-quadrature density (negative below vacuum):
    -1 / (E ((1+E)^2 + w^2)) for the tuned device."""
    s = sigma11_tn(omega, params)
    val = 0.25 * (-s[0, 0] + s[0, 1] + s[1, 0] - s[1, 1])
    return float(val.real)


def antisqueezed_spectral_density(omega, params: OpoParams) -> float:
    """+1 / (E ((1-E)^2 + w^2)) for the tuned device."""
    s = sigma11_tn(omega, params)
    val = 0.25 * (s[0, 0] + s[0, 1] + s[1, 0] + s[1, 1])
    return float(val.real)


def integrated_squeezed_variance(params: OpoParams) -> float:
    """(1/2pi) Int S_sq dw = -1 / (2 E (1+E))."""
    e = params.e_mag
    if e <= 0:
        raise ZeroPump("undefined at zero excitation")
    return -1.0 / (2.0 * e * (1.0 + e))


def integrated_antisqueezed_variance(params: OpoParams) -> float:
    """(1/2pi) Int S_anti dw = +1 / (2 E (1-E))."""
    e = params.e_mag
    if e <= 0:
        raise ZeroPump("undefined at zero excitation")
    return 1.0 / (2.0 * e * (1.0 - e))


def sigma_tn_lag0(params: OpoParams) -> np.ndarray:
    """Equal-time time-normal-ordered moment matrix (tuned closed form):
    diag 1/(E(1-E^2)), off-diagonal 1/(1-E^2)."""
    e = params.e_mag
    if e <= 0:
        raise ZeroPump("undefined at zero excitation")
    d = 1.0 / (e * (1.0 - e**2))
    o = 1.0 / (1.0 - e**2)
    return np.array([[d, o], [o, d]], dtype=complex)


def sigma_tn_offdiag_time(tau: float, params: OpoParams) -> float:
    """Time-domain <a(tau) a^dag(0)> (time-normal ordered, tuned), even in tau:
    (1/2E) [exp(-(1-E)|t|)/(1-E) - exp(-(1+E)|t|)/(1+E)]."""
    e = params.e_mag
    if e <= 0:
        raise ZeroPump("undefined at zero excitation")
    t = abs(tau)
    return (
        math.exp(-(1 - e) * t) / (1 - e) - math.exp(-(1 + e) * t) / (1 + e)
    ) / (2 * e)


def quadrature_vector(theta: float) -> np.ndarray:
    """Homodyne contraction vector theta = (exp(-i theta), exp(i theta)) / 2."""
    return 0.5 * np.array([cmath.exp(-1j * theta), cmath.exp(1j * theta)])
