"""Command-line front-end: lambda | upsilon | kurtosis | mc | fit | figs.

Every output starts with a run-manifest header (comment lines); bodies are
delimited text in full double precision and are reproducible for identical
manifests up to the timestamp line.

Exit codes: 0 success, 1 usage, 2 numerical non-convergence, 3 I/O or parse.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .errors import (
    DegeneratePole,
    EmptyDataset,
    NonConvergence,
    OpoNgError,
    ParseError,
    QuadratureFailure,
)
from .fitting import emit_figure_data, fit_drift_model, load_records
from .intracavity import lambda_nl, lambda_ppse_ratio
from .kurtosis import (
    DriftModel,
    default_spectrum,
    kurtosis_curve_with_drift,
    upsilon_theta,
)
from .mc import McConfig, run_mc_kurtosis
from .params import (
    ChannelKind,
    DetectionFilter,
    NoiseChannel,
    OpoParams,
    SpectrumModel,
    default_channels,
    load_config,
)

_LAMBDA_CHANNELS = (
    ChannelKind.CHI_PUMP,
    ChannelKind.PUMP_AMPLITUDE,
    ChannelKind.PUMP_PHASE,
    ChannelKind.CAVITY_DETUNING,
    ChannelKind.CRYSTAL_TEMPERATURE,
)


@dataclass(frozen=True)
class RunManifest:
    subcommand: str
    settings: dict
    seed: int | None = None
    version: str = ""
    timestamp: float = 0.0

    def header_lines(self):
        lines = [
            f"# opo-ng {self.version or __version__}",
            f"# subcommand: {self.subcommand}",
            f"# timestamp: {self.timestamp or time.time():.3f}",
        ]
        if self.seed is not None:
            lines.append(f"# seed: {self.seed}")
        for key in sorted(self.settings):
            lines.append(f"# {key}: {self.settings[key]}")
        return lines


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17e}"
    return str(value)


def _write_table(manifest: RunManifest, columns, rows, out_path=None):
    lines = manifest.header_lines()
    lines.append("\t".join(columns))
    for row in rows:
        lines.append("\t".join(_fmt(v) for v in row))
    text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _channel_kind(name: str) -> ChannelKind:
    aliases = {
        "chi0": ChannelKind.CHI_PUMP,
        "chi_pump": ChannelKind.CHI_PUMP,
        "mu": ChannelKind.PUMP_AMPLITUDE,
        "pump_amplitude": ChannelKind.PUMP_AMPLITUDE,
        "phase": ChannelKind.PUMP_PHASE,
        "pump_phase": ChannelKind.PUMP_PHASE,
        "nu": ChannelKind.CAVITY_DETUNING,
        "cavity_detuning": ChannelKind.CAVITY_DETUNING,
        "temp": ChannelKind.CRYSTAL_TEMPERATURE,
        "crystal_temperature": ChannelKind.CRYSTAL_TEMPERATURE,
    }
    try:
        return aliases[name.lower()]
    except KeyError:
        raise SystemExit(1) from None


def _resolve_params(args) -> tuple[OpoParams, list[NoiseChannel]]:
    if getattr(args, "config", None):
        return load_config(args.config)
    params = OpoParams(kappa0_hat=args.kappa0, e_mag=args.e)
    return params, default_channels(params)


def _filter_of(args) -> DetectionFilter:
    return DetectionFilter(omega_f=args.omega_f, gamma_f=args.gamma_f)


def build_parser() -> _Parser:
    parser = _Parser(prog="opo-ng", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand")

    def add_common(p, config=True):
        p.add_argument("--e", type=float, default=0.9, help="normalized excitation")
        p.add_argument("--kappa0", type=float, default=2.0, help="pump damping / kappa")
        p.add_argument("--omega-f", type=float, default=0.3)
        p.add_argument("--gamma-f", type=float, default=0.15)
        p.add_argument("--out", default=None, help="output file (default stdout)")
        if config:
            p.add_argument("--config", default=None, help="key=value config file")

    p_lambda = sub.add_parser("lambda", help="nonlinear squeezing corrections")
    add_common(p_lambda, config=False)

    p_ups = sub.add_parser("upsilon", help="fourth-cumulant weight vs theta")
    add_common(p_ups)
    p_ups.add_argument("--channel", required=True)
    p_ups.add_argument("--theta-grid", type=int, default=81)

    p_kur = sub.add_parser("kurtosis", help="kurtosis excess vs theta")
    add_common(p_kur)
    p_kur.add_argument("--theta-grid", type=int, default=81)
    p_kur.add_argument(
        "--drift", default=None, help="alpha,theta0,e0 drift parameters"
    )
    p_kur.add_argument(
        "--experimental-variance", type=float, default=None,
        help="normalize by this measured variance instead of the computed one",
    )

    p_mc = sub.add_parser("mc", help="Monte Carlo kurtosis estimate")
    add_common(p_mc)
    p_mc.add_argument("--channel", required=True)
    p_mc.add_argument("--samples", type=int, default=100_000)
    p_mc.add_argument("--seed", type=int, default=12345)
    p_mc.add_argument("--dt", type=float, default=0.02)
    p_mc.add_argument("--theta", type=float, default=0.0)
    p_mc.add_argument("--weight", type=float, default=0.01)

    p_fit = sub.add_parser("fit", help="fit the drift model to records")
    add_common(p_fit)
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--init", required=True, help="e0,alpha,theta0,g")
    p_fit.add_argument("--weighted", action="store_true")

    p_figs = sub.add_parser("figs", help="figure-reproduction tables")
    add_common(p_figs)
    p_figs.add_argument("--which", required=True)
    return parser


def _cmd_lambda(args) -> int:
    params = OpoParams(kappa0_hat=args.kappa0, e_mag=args.e)
    manifest = RunManifest(
        "lambda", {"E": args.e, "kappa0": args.kappa0}
    )
    rows = [
        (kind.value, args.e, args.kappa0, lambda_nl(kind, params))
        for kind in _LAMBDA_CHANNELS
    ]
    rows.append(("ppse_ratio", args.e, args.kappa0, lambda_ppse_ratio(params)))
    _write_table(manifest, ["channel", "E", "kappa0", "lambda"], rows, args.out)
    return 0


def _cmd_upsilon(args) -> int:
    kind = _channel_kind(args.channel)
    params, _ = _resolve_params(args)
    filt = _filter_of(args)
    spectrum = default_spectrum(kind)
    thetas = np.linspace(-math.pi / 2, math.pi / 2, args.theta_grid)
    manifest = RunManifest(
        "upsilon",
        {
            "channel": kind.value,
            "E": params.e_mag,
            "kappa0": params.kappa0_hat,
            "omega_f": filt.omega_f,
            "gamma_f": filt.gamma_f,
        },
    )
    rows = [
        (float(t), upsilon_theta(kind, float(t), params, filt, spectrum,
                                 degenerate_fallback=True))
        for t in thetas
    ]
    _write_table(manifest, ["theta", "upsilon"], rows, args.out)
    return 0


def _cmd_kurtosis(args) -> int:
    params, channels = _resolve_params(args)
    filt = _filter_of(args)
    thetas = [float(t) for t in np.linspace(-math.pi, math.pi, args.theta_grid)]
    if args.drift:
        alpha, theta0, e0 = (float(x) for x in args.drift.split(","))
        drift = DriftModel(e0=e0, alpha=alpha, theta0=theta0)
    else:
        drift = DriftModel(e0=params.e_mag, alpha=0.0, theta0=0.0)
    curve = kurtosis_curve_with_drift(
        thetas,
        drift,
        channels,
        filt,
        complex(params.kappa0_hat).real,
        gamma1_hat=params.gamma1_hat,
        g_chi=params.g_chi,
        experimental_variance=args.experimental_variance,
    )
    manifest = RunManifest(
        "kurtosis",
        {
            "kappa0": params.kappa0_hat,
            "drift": f"{drift.alpha},{drift.theta0},{drift.e0}",
            "omega_f": filt.omega_f,
            "gamma_f": filt.gamma_f,
        },
    )
    names = sorted(curve.per_channel)
    columns = ["theta", "k_total"] + [f"k_{n}" for n in names]
    rows = []
    for i, t in enumerate(curve.thetas):
        rows.append(
            [t, curve.values[i]] + [curve.per_channel[n][i] for n in names]
        )
    _write_table(manifest, columns, rows, args.out)
    return 0


def _cmd_mc(args) -> int:
    kind = _channel_kind(args.channel)
    params, _ = _resolve_params(args)
    filt = _filter_of(args)
    channel = NoiseChannel(kind, args.weight, default_spectrum(kind))
    mc = McConfig(n_samples=args.samples, dt=args.dt, seed=args.seed)
    n_workers = int(os.environ.get("OPO_NG_THREADS", "1"))
    est = run_mc_kurtosis(params, channel, args.theta, filt, mc, n_workers=n_workers)
    manifest = RunManifest(
        "mc",
        {
            "channel": kind.value,
            "E": params.e_mag,
            "kappa0": params.kappa0_hat,
            "dt": args.dt,
            "weight": args.weight,
        },
        seed=args.seed,
    )
    _write_table(
        manifest,
        ["theta", "k_hat", "stderr", "n"],
        [(args.theta, est.k_hat, est.stderr, est.n_effective)],
        args.out,
    )
    return 0


def _cmd_fit(args) -> int:
    records = load_records(args.data)
    e0, alpha, theta0, g = (float(x) for x in args.init.split(","))
    filt = _filter_of(args)
    result = fit_drift_model(
        records,
        (DriftModel(e0=e0, alpha=alpha, theta0=theta0), g),
        filt,
        kappa0_hat=args.kappa0,
        weighted=args.weighted,
    )
    manifest = RunManifest(
        "fit", {"data": args.data, "init": args.init, "kappa0": args.kappa0}
    )
    rows = [
        ("e0", result.drift.e0, result.half_widths["e0"]),
        ("alpha", result.drift.alpha, result.half_widths["alpha"]),
        ("theta0", result.drift.theta0, result.half_widths["theta0"]),
        ("g_mu", result.g_mu, result.half_widths["g_mu"]),
        ("residual", result.residual, 0.0),
    ]
    _write_table(manifest, ["parameter", "value", "half_width"], rows, args.out)
    return 0


def _cmd_figs(args) -> int:
    table = emit_figure_data(args.which, filt=_filter_of(args), kappa0_hat=args.kappa0)
    manifest = RunManifest("figs", {"which": args.which, "kappa0": args.kappa0})
    _write_table(manifest, table["columns"], table["rows"], args.out)
    return 0


_DISPATCH = {
    "lambda": _cmd_lambda,
    "upsilon": _cmd_upsilon,
    "kurtosis": _cmd_kurtosis,
    "mc": _cmd_mc,
    "fit": _cmd_fit,
    "figs": _cmd_figs,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.subcommand:
        parser.print_usage()
        return 1
    try:
        return _DISPATCH[args.subcommand](args)
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except (NonConvergence, QuadratureFailure, DegeneratePole) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (ParseError, EmptyDataset, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 3
    except OpoNgError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


def main() -> None:
    raise SystemExit(run())
