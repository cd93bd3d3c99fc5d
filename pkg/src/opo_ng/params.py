"""Device parameters, noise channels, and normalization to dimensionless units.

Conventions used throughout the package: time is normalized to the signal mean
decay rate kappa (tau = kappa * t), so every rate is dimensionless.  The signal
complex damping has unit modulus, kappa_hat = exp(-i psi); the pump one is
``kappa0_hat``.  The excitation ``e_mag`` is the pump amplitude over its
oscillation threshold, strictly below 1.  Field correlation matrices are 2x2
complex arrays in the (a, a^dagger) basis, ordered

    [[<a a>,      <a a^dag>],
     [<a^dag a>,  <a^dag a^dag>]].
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import AboveThreshold, NonPositiveRate, ParseError

TUNED_TOL = 1e-12

# Default channel weights: midpoints of the typical operating ranges.
DEFAULT_G_MU = 3e-2
DEFAULT_G_PHASE = 1e-3
DEFAULT_G_NU = 1e-3
DEFAULT_G_TEMP = 5e-5
DEFAULT_G_CHI = 1e-6
DEFAULT_MU_BAND = 0.05  # 1 MHz technical-noise band at kappa ~ 20 MHz


class ChannelKind(Enum):
    CHI_SIGNAL = "chi_signal"
    CHI_PUMP = "chi_pump"
    PUMP_AMPLITUDE = "pump_amplitude"
    PUMP_PHASE = "pump_phase"
    CAVITY_DETUNING = "cavity_detuning"
    CRYSTAL_TEMPERATURE = "crystal_temperature"


WHITE_ONLY = {ChannelKind.CHI_SIGNAL, ChannelKind.CHI_PUMP, ChannelKind.PUMP_PHASE}
DELTA_ONLY = {ChannelKind.CAVITY_DETUNING, ChannelKind.CRYSTAL_TEMPERATURE}

# Canonical accumulation order for multi-channel sums (determinism contract).
CHANNEL_ORDER = (
    ChannelKind.CHI_SIGNAL,
    ChannelKind.CHI_PUMP,
    ChannelKind.PUMP_AMPLITUDE,
    ChannelKind.PUMP_PHASE,
    ChannelKind.CAVITY_DETUNING,
    ChannelKind.CRYSTAL_TEMPERATURE,
)


@dataclass(frozen=True)
class SpectrumModel:
    """Normalized spectral density S(w) of a unit-strength noise source.

    'white':        S(w) = 1 for all w (delta-correlated in time).
    'uniform_band': S(w) = pi / w_max on |w| <= w_max, else 0, so that the
                    process variance (1/2pi) Int S dw equals 1.
    'delta':        zero-frequency limit of the band (frozen over the
                    correlation times of interest), unit variance.
    """

    variant: str
    w_max: float | None = None

    def __post_init__(self):
        if self.variant not in ("white", "uniform_band", "delta"):
            raise ValueError(f"unknown spectrum variant {self.variant!r}")
        if self.variant == "uniform_band":
            if self.w_max is None or self.w_max <= 0:
                raise ValueError("uniform_band requires w_max > 0")

    @classmethod
    def white(cls) -> "SpectrumModel":
        return cls("white")

    @classmethod
    def uniform_band(cls, w_max: float) -> "SpectrumModel":
        return cls("uniform_band", w_max)

    @classmethod
    def delta_like(cls) -> "SpectrumModel":
        return cls("delta")

    def density(self, w: float) -> float:
        """S(w) for the two extended variants; the delta variant has no density."""
        if self.variant == "white":
            return 1.0
        if self.variant == "uniform_band":
            return math.pi / self.w_max if abs(w) <= self.w_max else 0.0
        raise ValueError("delta-like spectrum has no pointwise density")


@dataclass(frozen=True)
class NoiseChannel:
    kind: ChannelKind
    weight: float
    spectrum: SpectrumModel

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("channel weight must be >= 0")
        if self.kind in WHITE_ONLY and self.spectrum.variant != "white":
            raise ValueError(f"{self.kind.value} must carry a white spectrum")
        if self.kind in DELTA_ONLY and self.spectrum.variant != "delta":
            raise ValueError(f"{self.kind.value} must carry a delta-like spectrum")


@dataclass(frozen=True)
class OpoParams:
    """Dimensionless device parameters of the degenerate OPO below threshold."""

    kappa0_hat: complex
    e_mag: float
    psi: float = 0.0
    psi0: float = 0.0
    gamma1_hat: float = 0.45
    g_chi: float = DEFAULT_G_CHI

    def __post_init__(self):
        if not 0.0 <= self.e_mag < 1.0:
            raise ValueError("e_mag must satisfy 0 <= e_mag < 1 (below threshold)")
        if complex(self.kappa0_hat).real <= 0:
            raise ValueError("kappa0_hat must have positive real part")
        if self.gamma1_hat <= 0:
            raise ValueError("gamma1_hat must be positive")
        if self.g_chi <= 0:
            raise ValueError("g_chi must be positive")

    @property
    def is_tuned(self) -> bool:
        return (
            abs(self.psi) <= TUNED_TOL
            and abs(self.psi0) <= TUNED_TOL
            and abs(complex(self.kappa0_hat).imag) <= TUNED_TOL
        )

    @property
    def kappa_hat(self) -> complex:
        """Signal complex damping normalized to kappa: unit modulus, phase -psi."""
        return cmath.exp(-1j * self.psi)

    @property
    def vartheta(self) -> float:
        """Loss-phase combination entering the off-diagonal couplings."""
        return self.psi - 0.5 * self.psi0


@dataclass(frozen=True)
class DetectionFilter:
    """Homodyne detection window: analysis frequency and inverse integration time."""

    omega_f: float
    gamma_f: float

    def __post_init__(self):
        if self.gamma_f <= 0:
            raise ValueError("gamma_f must be positive")


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    margin: float
    per_channel: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RawInputs:
    """Physical (unnormalized) device parameters, all rates in the same units.

    Detunings may be nonzero; signal and idler are the degenerate pair, so a
    single signal damping/detuning describes both.
    """

    gamma_signal: float
    gamma_pump: float
    pump_amplitude: float
    chi: float
    gamma_mirror: float
    nu_signal: float = 0.0
    nu_pump: float = 0.0


def normalize_params(raw: RawInputs) -> OpoParams:
    """Map raw physical inputs to the dimensionless parameter set.

    kappa is the mean signal decay |kappa_1 + kappa_2|/2 (degenerate: |kappa_s|);
    the threshold is eps_th = |kappa_0| sqrt(|kappa_1 kappa_2|) / (2 |chi|).
    The internal signal rescaling r_j is absorbed here and never exposed.
    """
    if raw.gamma_signal <= 0 or raw.gamma_pump <= 0 or raw.gamma_mirror <= 0:
        raise NonPositiveRate("all damping rates must be positive")
    if raw.chi <= 0:
        raise NonPositiveRate("nonlinear coupling chi must be positive")
    if raw.pump_amplitude < 0:
        raise ValueError("pump amplitude must be >= 0")

    kappa_s = raw.gamma_signal - 1j * raw.nu_signal
    kappa_p = raw.gamma_pump - 1j * raw.nu_pump
    kappa = abs(kappa_s)  # |kappa_1 + kappa_2| / 2 with kappa_1 = kappa_2

    eps_th = abs(kappa_p) * abs(kappa_s) / (2.0 * raw.chi)
    if raw.pump_amplitude >= eps_th:
        raise AboveThreshold(
            f"pump amplitude {raw.pump_amplitude} >= threshold {eps_th}"
        )

    kappa0_hat = kappa_p / kappa
    psi = math.atan2(raw.nu_signal, raw.gamma_signal)
    psi0 = -cmath.phase(kappa0_hat)
    g_chi = raw.chi / math.sqrt(2.0 * abs(kappa_p) * kappa)
    return OpoParams(
        kappa0_hat=kappa0_hat,
        e_mag=raw.pump_amplitude / eps_th,
        psi=psi,
        psi0=psi0,
        gamma1_hat=raw.gamma_mirror / kappa,
        g_chi=g_chi,
    )


def validity_check(params: OpoParams, channels: list[NoiseChannel]) -> ValidityReport:
    """Perturbative-hierarchy guard: valid iff 1 - E > g^2 for every channel."""
    slack = 1.0 - params.e_mag
    per = {}
    worst = 0.0
    for ch in sorted(channels, key=lambda c: CHANNEL_ORDER.index(c.kind)):
        g2 = ch.weight**2
        worst = max(worst, g2)
        per[ch.kind.value] = {
            "g_squared": g2,
            "ok": slack > g2,
            "source_orders": _source_order_scales(params, ch.weight),
        }
    return ValidityReport(valid=slack > worst, margin=slack - worst, per_channel=per)


def _source_order_scales(params: OpoParams, g: float) -> tuple[float, float, float]:
    """Order-of-magnitude scalings of the first three source moments.

    <s1 s1> = O(g_chi^2), <s2 s2> = O(g_chi^2 g^2 / (1-E)),
    <s3 s3> = O(g_chi^2 g^4 / (1-E)^2).
    """
    gx2 = params.g_chi**2
    slack = max(1.0 - params.e_mag, 1e-300)
    return (gx2, gx2 * g**2 / slack, gx2 * g**4 / slack**2)


def default_channels(
    params: OpoParams,
    g_mu: float = DEFAULT_G_MU,
    g_phase: float = DEFAULT_G_PHASE,
    g_nu: float = DEFAULT_G_NU,
    g_temp: float = DEFAULT_G_TEMP,
    mu_band: float = DEFAULT_MU_BAND,
) -> list[NoiseChannel]:
    """All six sources with default weights; quantum channels weigh g_chi."""
    return [
        NoiseChannel(ChannelKind.CHI_SIGNAL, params.g_chi, SpectrumModel.white()),
        NoiseChannel(ChannelKind.CHI_PUMP, params.g_chi, SpectrumModel.white()),
        NoiseChannel(ChannelKind.PUMP_AMPLITUDE, g_mu, SpectrumModel.uniform_band(mu_band)),
        NoiseChannel(ChannelKind.PUMP_PHASE, g_phase, SpectrumModel.white()),
        NoiseChannel(ChannelKind.CAVITY_DETUNING, g_nu, SpectrumModel.delta_like()),
        NoiseChannel(ChannelKind.CRYSTAL_TEMPERATURE, g_temp, SpectrumModel.delta_like()),
    ]


CONFIG_KEYS = (
    "kappa0_hat",
    "e_mag",
    "psi",
    "psi0",
    "gamma1_hat",
    "g_chi",
    "g_mu",
    "g_phase",
    "g_nu",
    "g_temp",
    "spectrum_mu_band",
)


def load_config(path: str | Path) -> tuple[OpoParams, list[NoiseChannel]]:
    """Parse a flat ``key = value`` config file into params and channels.

    Unknown keys are rejected with their line number; missing keys fall back
    to defaults (e_mag and kappa0_hat are required).
    """
    values: dict[str, complex | float] = {}
    for lineno, rawline in enumerate(Path(path).read_text().splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", line=lineno)
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise ParseError(f"unknown key {key!r}", line=lineno)
        try:
            parsed = complex(val.strip().replace(" ", ""))
        except ValueError:
            raise ParseError(f"cannot parse value for {key!r}", line=lineno) from None
        values[key] = parsed if key == "kappa0_hat" else parsed.real
    for required in ("kappa0_hat", "e_mag"):
        if required not in values:
            raise ParseError(f"missing required key {required!r}")
    params = OpoParams(
        kappa0_hat=values["kappa0_hat"],
        e_mag=float(values["e_mag"]),
        psi=float(values.get("psi", 0.0)),
        psi0=float(values.get("psi0", 0.0)),
        gamma1_hat=float(values.get("gamma1_hat", 0.45)),
        g_chi=float(values.get("g_chi", DEFAULT_G_CHI)),
    )
    channels = default_channels(
        params,
        g_mu=float(values.get("g_mu", DEFAULT_G_MU)),
        g_phase=float(values.get("g_phase", DEFAULT_G_PHASE)),
        g_nu=float(values.get("g_nu", DEFAULT_G_NU)),
        g_temp=float(values.get("g_temp", DEFAULT_G_TEMP)),
        mu_band=float(values.get("spectrum_mu_band", DEFAULT_MU_BAND)),
    )
    return params, channels
