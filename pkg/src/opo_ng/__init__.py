"""Non-Gaussian statistics of a below-threshold degenerate OPO.

Analytic pipeline (residue calculus) for the kurtosis excess of filtered
homodyne quadratures under quantum and classical parameter noise, closed-form
and quadrature paths for the nonlinear squeezing corrections, and an
independent Monte Carlo phase-space oracle.
"""

__version__ = "0.1.0"

from .params import (  # noqa: F401
    ChannelKind,
    DetectionFilter,
    NoiseChannel,
    OpoParams,
    RawInputs,
    SpectrumModel,
    ValidityReport,
    default_channels,
    load_config,
    normalize_params,
    validity_check,
)
