"""Kurtosis excess of the filtered output quadratures by residue calculus.

The fourth-cumulant weight of each noise source is an integral over the noise
frequency w of a product of two filtered cross-correlation spectra; those
spectra are themselves frequency integrals whose integrands are rational, so
both layers are evaluated as sums over the simple poles in the upper half
plane.  Direct adaptive quadrature of both layers is kept alongside as the
cross-check path.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import (
    AboveThreshold,
    DegeneratePole,
    NotTuned,
    QuadratureFailure,
    ZeroPump,
)
from .linear import quadrature_vector
from .params import (
    CHANNEL_ORDER,
    ChannelKind,
    DetectionFilter,
    NoiseChannel,
    OpoParams,
    SpectrumModel,
    validity_check,
)
from .perturbation import b1_split

_POLE_TOL = 1e-9


@dataclass(frozen=True)
class UpsilonCoeffs:
    """cos(4 theta), cos(2 theta), constant decomposition of Upsilon(theta)."""

    u4: float
    u2: float
    u0: float

    def reconstruct(self, theta: float) -> float:
        return (
            self.u4 * math.cos(4 * theta)
            + self.u2 * math.cos(2 * theta)
            + self.u0
        )


@dataclass(frozen=True)
class DriftModel:
    """Slow detuning drift across a quadrature scan.

    nu_p = alpha (theta - theta0) detunes pump and signal, suppressing the
    effective excitation from its resonant value e0.
    """

    e0: float
    alpha: float
    theta0: float
    gamma_s: float = 1.5
    gamma_p: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.e0 < 1.0:
            raise ValueError("e0 must satisfy 0 <= e0 < 1")
        if self.gamma_s <= 0 or self.gamma_p <= 0:
            raise ValueError("linewidths must be positive")


@dataclass(frozen=True)
class KurtosisCurve:
    thetas: tuple
    values: tuple
    per_channel: dict = field(default_factory=dict)
    excitations: tuple = ()


def filter_fourier(omega, filt: DetectionFilter) -> complex:
    """Two-pole transform of the exponential-cosine detection window; the
    poles sit at +/- Omega_f - i gamma_f, strictly below the real axis."""
    om_p = filt.omega_f - 1j * filt.gamma_f
    om_m = -filt.omega_f - 1j * filt.gamma_f
    return 0.5j * (1.0 / (omega - om_m) + 1.0 / (omega - om_p))


def default_spectrum(kind: ChannelKind, mu_band: float = 0.05) -> SpectrumModel:
    if kind in (ChannelKind.CHI_PUMP, ChannelKind.PUMP_PHASE, ChannelKind.CHI_SIGNAL):
        return SpectrumModel.white()
    if kind is ChannelKind.PUMP_AMPLITUDE:
        return SpectrumModel.uniform_band(mu_band)
    return SpectrumModel.delta_like()


def _sigma_tn_num(omega, e) -> np.ndarray:
    d = 2.0 * (1.0 + e**2 + omega**2) / e
    return np.array([[d, 4.0], [4.0, d]], dtype=complex)


class _Engine:
    """Pole bookkeeping shared by the residue evaluations at fixed parameters."""

    def __init__(self, params: OpoParams, filt: DetectionFilter):
        if not params.is_tuned:
            raise NotTuned("the residue engine is assembled for tuned parameters")
        if params.e_mag <= 0:
            raise ZeroPump("upsilon engine needs E > 0")
        self.params = params
        self.filt = filt
        e = params.e_mag
        self.e = e
        self.k0 = complex(params.kappa0_hat).real
        self.wp = 1j * (1.0 - e)
        self.wm = 1j * (1.0 + e)
        self.Op = filt.omega_f - 1j * filt.gamma_f
        self.Om = -filt.omega_f - 1j * filt.gamma_f
        self.omega_l = (self.wp, self.wm, -self.Op, -self.Om)
        for w in self.omega_l:
            if w.imag <= 0:
                raise AssertionError("upper-half-plane pole bookkeeping violated")
        self._check_distinct(self.omega_l, "omega-plane poles")
        self.f_mwp = filter_fourier(-self.wp, filt)
        self.f_mwm = filter_fourier(-self.wm, filt)
        self.den = (
            2 * self.wp * (self.wp**2 - self.wm**2),
            2 * self.wm * (self.wm**2 - self.wp**2),
            (self.Op**2 - self.wp**2) * (self.Op**2 - self.wm**2),
            (self.Om**2 - self.wp**2) * (self.Om**2 - self.wm**2),
        )
        self.s_tn = tuple(_sigma_tn_num(wl, e) for wl in self.omega_l)

    @staticmethod
    def _check_distinct(points, context):
        pts = list(points)
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if abs(pts[i] - pts[j]) < _POLE_TOL * (1 + abs(pts[i])):
                    raise DegeneratePole(
                        f"{context}: {pts[i]:.6g} and {pts[j]:.6g} coincide"
                    )

    def dt(self, z):
        return (1.0 - 1j * z) ** 2 - self.e**2

    def dg(self, z) -> np.ndarray:
        return np.array(
            [[1.0 - 1j * z, self.e], [self.e, 1.0 - 1j * z]], dtype=complex
        )

    def f(self, z):
        return filter_fourier(z, self.filt)

    def h_values(self, w):
        """The four residues of H(w, omega) at the upper omega poles."""
        fm = (self.f_mwp, self.f_mwm)
        return (
            self.f(self.wp + w) * fm[0] / (self.dt(w + self.wp) * self.den[0]),
            self.f(self.wm + w) * fm[1] / (self.dt(w + self.wm) * self.den[1]),
            -0.5j * self.f(w - self.Op) / (self.dt(w - self.Op) * self.den[2]),
            -0.5j * self.f(w - self.Om) / (self.dt(w - self.Om) * self.den[3]),
        )

    def h_tilde(self, w, omega):
        """Full two-variable kernel for the quadrature oracle."""
        return (
            self.f(omega + w)
            * self.f(-omega)
            / (
                self.dt(w + omega)
                * (omega**2 - self.wp**2)
                * (omega**2 - self.wm**2)
            )
        )

    def h_pole_tables(self):
        """Per-l lists of (w0, r) with w0 the upper-half w-plane pole of
        H_l(-w) and r = Res_{u=-w0} H_l(u); the residue of H_l(-w) is -r.
        Every w0 must sit strictly above the real axis (asserted below)."""
        wp, wm, Op, Om = self.wp, self.wm, self.Op, self.Om
        dwpm = wp - wm
        tables = []
        tables.append(
            [
                (2 * wp, self.f_mwp * self.f_mwp / (dwpm * self.den[0])),
                (wp + wm, self.f_mwm * self.f_mwp / (-dwpm * self.den[0])),
                (wp - Op, 0.5j * self.f_mwp / (self.dt(Op) * self.den[0])),
                (wp - Om, 0.5j * self.f_mwp / (self.dt(Om) * self.den[0])),
            ]
        )
        tables.append(
            [
                (2 * wm, self.f_mwm * self.f_mwm / (-dwpm * self.den[1])),
                (wp + wm, self.f_mwp * self.f_mwm / (dwpm * self.den[1])),
                (wm - Op, 0.5j * self.f_mwm / (self.dt(Op) * self.den[1])),
                (wm - Om, 0.5j * self.f_mwm / (self.dt(Om) * self.den[1])),
            ]
        )
        tables.append(
            [
                (wp - Op, -0.5j * self.f_mwp / (dwpm * self.den[2])),
                (wm - Op, -0.5j * self.f_mwm / (-dwpm * self.den[2])),
                (-2 * Op, 0.25 / (self.dt(Op) * self.den[2])),
                (-Op - Om, 0.25 / (self.dt(Om) * self.den[2])),
            ]
        )
        tables.append(
            [
                (wp - Om, -0.5j * self.f_mwp / (dwpm * self.den[3])),
                (wm - Om, -0.5j * self.f_mwm / (-dwpm * self.den[3])),
                (-2 * Om, 0.25 / (self.dt(Om) * self.den[3])),
                (-Om - Op, 0.25 / (self.dt(Op) * self.den[3])),
            ]
        )
        for tab in tables:
            for w0, _ in tab:
                if w0.imag <= 0:
                    raise AssertionError(
                        f"noise-frequency pole {w0:.6g} not in the upper plane"
                    )
        return tables


def _b_matrix(kind, w, params):
    b_inf, c1, c2 = b1_split(kind, params)
    d0 = params.kappa0_hat - 1j * w
    d0d = np.conj(params.kappa0_hat) - 1j * w
    if abs(d0) < 1e-12 or abs(d0d) < 1e-12:
        raise DegeneratePole("w coincides with a pump-response pole")
    return b_inf + c1 / d0 + c2 / d0d


def varsigma(kind: ChannelKind, w, params: OpoParams, filt: DetectionFilter) -> np.ndarray:
    """Filtered first/second-order cross-spectrum matrix by the four-pole
    residue sum (the pump-response factor is cancelled analytically, so the
    result is regular at the pump pole of the prefactor)."""
    eng = _Engine(params, filt)
    return _varsigma_eng(eng, kind, w)


def _varsigma_eng(eng: _Engine, kind: ChannelKind, w) -> np.ndarray:
    bmat = _b_matrix(kind, w, eng.params)
    acc = np.zeros((2, 2), dtype=complex)
    for hl, wl, s in zip(eng.h_values(w), eng.omega_l, eng.s_tn):
        m = eng.dg(w + wl) @ bmat @ s
        acc += hl * (m + m.T)
    return 1j * acc


def varsigma_quad(
    kind: ChannelKind, w, params: OpoParams, filt: DetectionFilter, rel_tol=1e-9
) -> np.ndarray:
    """Direct adaptive quadrature of the omega integral (oracle path)."""
    eng = _Engine(params, filt)
    bmat = _b_matrix(kind, w, params)

    def integrand(omega):
        m = eng.dg(w + omega) @ bmat @ _sigma_tn_num(omega, eng.e)
        return eng.h_tilde(w, omega) * (m + m.T)

    out = np.zeros((2, 2), dtype=complex)
    worst = 0.0
    for i in range(2):
        for j in range(2):
            re, ere = quad(
                lambda o: integrand(o)[i, j].real, -np.inf, np.inf,
                limit=400, epsrel=rel_tol, epsabs=1e-13,
            )
            im, eim = quad(
                lambda o: integrand(o)[i, j].imag, -np.inf, np.inf,
                limit=400, epsrel=rel_tol, epsabs=1e-13,
            )
            worst = max(worst, ere, eim)
            out[i, j] = re + 1j * im
    if worst > 1e-4 * max(np.max(np.abs(out)), 1e-12):
        raise QuadratureFailure("varsigma quadrature did not converge")
    return out / (2 * math.pi)


def _phi(eng: _Engine, kind: ChannelKind, w, th: np.ndarray) -> complex:
    """Scalar contraction theta^T varsigma(w) theta on the residue path."""
    bmat = _b_matrix(kind, w, eng.params)
    acc = 0.0 + 0.0j
    for hl, wl, s in zip(eng.h_values(w), eng.omega_l, eng.s_tn):
        m = eng.dg(w + wl) @ bmat @ s
        acc += hl * (th @ m @ th)
    return 2j * acc


def _upsilon_white_residues(eng: _Engine, kind: ChannelKind, th: np.ndarray) -> complex:
    params = eng.params
    b_inf, c1, c2 = b1_split(kind, params)
    c_pole = c1 + c2  # tuned: both pump poles coincide at w = i kappa0
    has_b_pole = bool(np.any(np.abs(c_pole) > 0))
    # A location shared between different l-terms is an ordinary sum of simple
    # residues; a genuine degeneracy is a repeat within one term's pole list,
    # or the pump pole landing on any of them (second-order pole of the
    # product).
    tables = eng.h_pole_tables()
    for tab in tables:
        eng._check_distinct([w0 for w0, _ in tab], "w-plane poles of one term")
    if has_b_pole:
        bp = 1j * eng.k0
        for tab in tables:
            for w0, _ in tab:
                if abs(w0 - bp) < _POLE_TOL * (1 + abs(bp)):
                    raise DegeneratePole(
                        f"pump pole {bp:.6g} coincides with filter/system pole {w0:.6g}"
                    )

    total = 0.0 + 0.0j
    for l, wl in enumerate(eng.omega_l):
        s = eng.s_tn[l]
        for w0, r in tables[l]:
            bmat = _b_matrix(kind, -w0, params)
            m = eng.dg(-w0 + wl) @ bmat @ s
            res_phi_minus = 1j * (-r) * 2.0 * (th @ m @ th)
            total += res_phi_minus * _phi(eng, kind, w0, th)
    if has_b_pole:
        w0 = 1j * eng.k0
        res_b = -1j * c_pole
        acc = 0.0 + 0.0j
        for hl, wl, s in zip(eng.h_values(-w0), eng.omega_l, eng.s_tn):
            m = eng.dg(-w0 + wl) @ res_b @ s
            acc += hl * 2.0 * (th @ m @ th)
        total += (1j * acc) * _phi(eng, kind, w0, th)
    return 1j * total


def upsilon_theta(
    channel: NoiseChannel | ChannelKind,
    theta: float,
    params: OpoParams,
    filt: DetectionFilter,
    spectrum: SpectrumModel | None = None,
    degenerate_fallback: bool = False,
    rel_tol: float = 1e-8,
) -> float:
    """Fourth-cumulant weight of one noise source at quadrature phase theta.

    Delta-like spectra use the zero-frequency value, white ones the residue
    sum over the noise-frequency poles, and uniform bands adaptive quadrature
    across the band.
    """
    if isinstance(channel, NoiseChannel):
        kind, spectrum = channel.kind, channel.spectrum
    else:
        kind = channel
        spectrum = spectrum or default_spectrum(kind)
    try:
        eng = _Engine(params, filt)
        return _upsilon_dispatch(eng, kind, theta, spectrum, rel_tol)
    except DegeneratePole:
        if not degenerate_fallback:
            raise
        warnings.warn(
            "degenerate pole configuration; averaging over a +/-3e-7 relative "
            "pump-damping split",
            stacklevel=2,
        )
        vals = []
        for eps in (3e-7, -3e-7):
            p2 = OpoParams(
                kappa0_hat=complex(params.kappa0_hat).real * (1 + eps),
                e_mag=params.e_mag,
                gamma1_hat=params.gamma1_hat,
                g_chi=params.g_chi,
            )
            f2 = DetectionFilter(filt.omega_f, filt.gamma_f * (1 + eps))
            eng = _Engine(p2, f2)
            vals.append(_upsilon_dispatch(eng, kind, theta, spectrum, rel_tol))
        return 0.5 * (vals[0] + vals[1])


def _upsilon_dispatch(eng, kind, theta, spectrum, rel_tol) -> float:
    th = quadrature_vector(theta)
    if spectrum.variant == "delta":
        val = _phi(eng, kind, 0.0, th)
        _check_real(val * val, "delta-like upsilon")
        return float((val * val).real)
    if spectrum.variant == "white":
        val = _upsilon_white_residues(eng, kind, th)
        # The pump-vacuum channel pairs its coupling matrix with itself, which
        # leaves an even imaginary component in the noise-frequency integrand;
        # the physical weight is the real part.  Real-noise channels must come
        # out real on their own.
        if kind is not ChannelKind.CHI_PUMP:
            _check_real(val, "white-noise upsilon")
        return float(val.real)
    wmax = spectrum.w_max

    def integrand(w):
        return (_phi(eng, kind, -w, th) * _phi(eng, kind, w, th)).real

    val, err = quad(integrand, -wmax, wmax, limit=400, epsrel=rel_tol, epsabs=1e-14)
    if err > 1e-4 * max(abs(val), 1e-12):
        raise QuadratureFailure("band upsilon quadrature did not converge")
    return val / (2 * wmax)


def upsilon_white_quad(
    kind: ChannelKind,
    theta: float,
    params: OpoParams,
    filt: DetectionFilter,
    rel_tol: float = 1e-9,
) -> float:
    """Oracle: white-noise upsilon by adaptive quadrature over the real
    noise-frequency axis (the spectra inside stay on the residue path)."""
    eng = _Engine(params, filt)
    th = quadrature_vector(theta)

    def integrand(w):
        return (_phi(eng, kind, -w, th) * _phi(eng, kind, w, th)).real

    val, err = quad(integrand, -np.inf, np.inf, limit=400, epsrel=rel_tol)
    if err > 1e-4 * max(abs(val), 1e-12):
        raise QuadratureFailure("white upsilon quadrature did not converge")
    return val / (2 * math.pi)


def _check_real(val, context):
    if abs(val.imag) > 1e-7 * max(abs(val.real), 1e-12):
        warnings.warn(
            f"{context}: imaginary residue leakage {val.imag:.3e} at real part "
            f"{val.real:.3e}",
            stacklevel=3,
        )


def upsilon_coeffs(
    channel: NoiseChannel | ChannelKind,
    params: OpoParams,
    filt: DetectionFilter,
    spectrum: SpectrumModel | None = None,
    degenerate_fallback: bool = False,
) -> UpsilonCoeffs:
    """(u4, u2, u0) from evaluations at theta = 0, pi/4, pi/2."""
    u_0 = upsilon_theta(channel, 0.0, params, filt, spectrum, degenerate_fallback)
    u_q = upsilon_theta(channel, math.pi / 4, params, filt, spectrum, degenerate_fallback)
    u_h = upsilon_theta(channel, math.pi / 2, params, filt, spectrum, degenerate_fallback)
    return UpsilonCoeffs(
        u4=0.25 * (u_0 + u_h) - 0.5 * u_q,
        u2=0.5 * (u_0 - u_h),
        u0=0.25 * (u_0 + u_h) + 0.5 * u_q,
    )


def linear_filtered_variance(
    theta: float,
    params: OpoParams,
    filt: DetectionFilter,
    method: str = "residues",
) -> float:
    """Filtered time-normal-ordered variance of the first-order quadrature."""
    eng = _Engine(params, filt)
    e = eng.e

    def n_theta(omega):
        return math.cos(2 * theta) * (1 + e**2 + omega**2) / e + 2.0

    def n_theta_c(z):
        return math.cos(2 * theta) * (1 + e**2 + z**2) / e + 2.0

    if method == "residues":
        wp, wm, Op, Om = eng.wp, eng.wm, eng.Op, eng.Om
        f = eng.f
        total = (
            f(wp) * eng.f_mwp * n_theta_c(wp) / (2 * wp * (wp**2 - wm**2))
            + f(wm) * eng.f_mwm * n_theta_c(wm) / (2 * wm * (wm**2 - wp**2))
            - 0.5j * f(-Op) * n_theta_c(-Op) / ((Op**2 - wp**2) * (Op**2 - wm**2))
            - 0.5j * f(-Om) * n_theta_c(-Om) / ((Om**2 - wp**2) * (Om**2 - wm**2))
        )
        val = 1j * total
        _check_real(val, "linear filtered variance")
        return float(val.real)
    if method == "quad":
        def integrand(omega):
            fv = filter_fourier(omega, filt)
            quartic = (omega**2 - eng.wp**2) * (omega**2 - eng.wm**2)
            return ((fv * filter_fourier(-omega, filt)).real * n_theta(omega)
                    / quartic.real)

        val, err = quad(integrand, -np.inf, np.inf, limit=400, epsrel=1e-10)
        if err > 1e-6 * max(abs(val), 1e-12):
            raise QuadratureFailure("filtered-variance quadrature did not converge")
        return val / (2 * math.pi)
    raise ValueError(f"unknown method {method!r}")


def kurtosis_total(
    theta: float,
    channels: list[NoiseChannel],
    params: OpoParams,
    filt: DetectionFilter,
    degenerate_fallback: bool = True,
    experimental_variance: float | None = None,
    warn_validity: bool = True,
) -> float:
    """Weighted sum of the per-channel fourth-cumulant contributions over the
    squared linear filtered variance.  Channels are accumulated in a fixed
    canonical order so results do not depend on the input ordering."""
    if warn_validity:
        report = validity_check(params, channels)
        if not report.valid:
            warnings.warn(
                f"perturbative validity margin {report.margin:.3e} <= 0",
                stacklevel=2,
            )
    denom = (
        experimental_variance
        if experimental_variance is not None
        else linear_filtered_variance(theta, params, filt)
    )
    total = 0.0
    for ch in sorted(channels, key=lambda c: CHANNEL_ORDER.index(c.kind)):
        if ch.weight == 0 or ch.kind is ChannelKind.CHI_SIGNAL:
            continue
        ups = upsilon_theta(
            ch, theta, params, filt, degenerate_fallback=degenerate_fallback
        )
        total += ch.weight**2 * ups / denom**2
    return total


def excitation_with_detuning(drift: DriftModel, theta: float) -> float:
    """|E(theta)| from the resonance value and the drift-induced detuning."""
    nu = drift.alpha * (theta - drift.theta0)
    return drift.e0 / math.sqrt(
        (1 + 4 * nu**2 / drift.gamma_s**2) * (1 + nu**2 / drift.gamma_p**2)
    )


def kurtosis_curve_with_drift(
    thetas,
    drift: DriftModel,
    channels: list[NoiseChannel],
    filt: DetectionFilter,
    kappa0_hat: complex,
    gamma1_hat: float = 0.45,
    g_chi: float = 1e-6,
    degenerate_fallback: bool = True,
    experimental_variance: float | None = None,
) -> KurtosisCurve:
    """Kurtosis excess across a quadrature scan with the excitation rebuilt
    from the drift model at each phase; unequal peak heights appear for
    alpha != 0."""
    values, excs = [], []
    per_channel: dict[str, list] = {
        ch.kind.value: []
        for ch in channels
        if ch.weight > 0 and ch.kind is not ChannelKind.CHI_SIGNAL
    }
    for th in thetas:
        e = excitation_with_detuning(drift, th)
        if e >= 1.0:
            raise AboveThreshold(f"drift pushes |E| = {e} >= 1 at theta = {th}")
        p = OpoParams(
            kappa0_hat=kappa0_hat, e_mag=e, gamma1_hat=gamma1_hat, g_chi=g_chi
        )
        denom = (
            experimental_variance
            if experimental_variance is not None
            else linear_filtered_variance(th, p, filt)
        )
        total = 0.0
        for ch in sorted(channels, key=lambda c: CHANNEL_ORDER.index(c.kind)):
            if ch.weight == 0 or ch.kind is ChannelKind.CHI_SIGNAL:
                continue
            contrib = (
                ch.weight**2
                * upsilon_theta(ch, th, p, filt, degenerate_fallback=degenerate_fallback)
                / denom**2
            )
            per_channel[ch.kind.value].append(contrib)
            total += contrib
        values.append(total)
        excs.append(e)
        if not math.isfinite(total):
            raise QuadratureFailure(f"non-finite kurtosis at theta = {th}")
    return KurtosisCurve(
        thetas=tuple(thetas),
        values=tuple(values),
        per_channel={k: tuple(v) for k, v in per_channel.items()},
        excitations=tuple(excs),
    )
