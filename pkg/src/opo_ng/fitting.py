"""Experimental-record ingestion, drift-model fitting, and figure tables."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import EmptyDataset, NonConvergence, ParseError
from .intracavity import lambda_nl
from .kurtosis import (
    DriftModel,
    default_spectrum,
    excitation_with_detuning,
    kurtosis_curve_with_drift,
    linear_filtered_variance,
    upsilon_coeffs,
    upsilon_theta,
)
from .params import ChannelKind, DetectionFilter, NoiseChannel, OpoParams, SpectrumModel

_COLUMNS = ("theta", "k", "variance", "e2", "theta_err", "k_err")


@dataclass(frozen=True)
class ExperimentRecord:
    theta: float
    kurtosis: float
    variance: float | None = None
    e_squared: float | None = None
    theta_err: float | None = None
    k_err: float | None = None


@dataclass(frozen=True)
class FitResult:
    drift: DriftModel
    g_mu: float
    residual: float
    half_widths: dict
    n_evaluations: int


def load_records(path) -> list[ExperimentRecord]:
    """Read header-tagged delimited text (comma or whitespace separated).

    Rows violating the record invariants are skipped with a warning carrying
    their line numbers; a file with no valid rows raises EmptyDataset.
    """
    lines = open(path).read().splitlines()
    header = None
    records = []
    rejected = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p for p in line.replace(",", " ").split() if p]
        if header is None:
            header = [p.lower() for p in parts]
            unknown = [c for c in header if c not in _COLUMNS]
            if unknown or "theta" not in header or "k" not in header:
                raise ParseError(f"bad header {parts!r}", line=lineno)
            continue
        if len(parts) != len(header):
            raise ParseError(
                f"expected {len(header)} fields, got {len(parts)}", line=lineno
            )
        vals = {}
        for col, (name, text) in enumerate(zip(header, parts), start=1):
            try:
                vals[name] = float(text)
            except ValueError:
                raise ParseError(
                    f"cannot parse field {name!r}", line=lineno, column=col
                ) from None
        rec = ExperimentRecord(
            theta=vals["theta"],
            kurtosis=vals["k"],
            variance=vals.get("variance"),
            e_squared=vals.get("e2"),
            theta_err=vals.get("theta_err"),
            k_err=vals.get("k_err"),
        )
        if not (-math.pi < rec.theta <= math.pi) or (
            rec.k_err is not None and rec.k_err < 0
        ):
            rejected.append(lineno)
            continue
        records.append(rec)
    if header is None:
        raise EmptyDataset(f"{path}: no header found")
    if rejected:
        warnings.warn(f"rejected rows at lines {rejected}", stacklevel=2)
    if not records:
        raise EmptyDataset(f"{path}: no valid records")
    return records


def _model_curve(
    thetas,
    e0,
    alpha,
    theta0,
    g_mu,
    filt,
    kappa0_hat,
    variances=None,
    mu_band: float = 0.05,
):
    """Pump-amplitude-channel kurtosis at each theta with the drifting
    excitation; normalized by measured variances when supplied."""
    drift = DriftModel(e0=e0, alpha=alpha, theta0=theta0)
    spectrum = SpectrumModel.uniform_band(mu_band)
    out = np.empty(len(thetas))
    for i, th in enumerate(thetas):
        e = excitation_with_detuning(drift, th)
        if not 0 < e < 1:
            return None
        p = OpoParams(kappa0_hat=kappa0_hat, e_mag=e)
        ups = upsilon_theta(ChannelKind.PUMP_AMPLITUDE, th, p, filt, spectrum)
        denom = (
            variances[i]
            if variances is not None and variances[i] is not None
            else linear_filtered_variance(th, p, filt)
        )
        out[i] = g_mu**2 * ups / denom**2
    return out


class MuCurveModel:
    """Fast forward model for the pump-amplitude kurtosis curve.

    The cumulant weight decomposes as u4(E) cos4t + u2(E) cos2t + u0(E) and
    the filtered variance as V1(E) cos2t + V2(E); both are smooth in E, so
    they are tabulated once on a log(1-E) grid (with the (1-E)^2 divergence
    taken out) and interpolated.  Objective evaluations then cost numpy
    arithmetic only.  Agreement with the direct evaluation is 1e-5 relative
    (covered by tests)."""

    def __init__(self, filt, kappa0_hat, mu_band=0.05, e_lo=0.3, e_hi=0.9995,
                 n_nodes=160):
        from scipy.interpolate import CubicSpline

        self.filt = filt
        self.kappa0_hat = kappa0_hat
        spectrum = SpectrumModel.uniform_band(mu_band)
        x = np.linspace(math.log(1 - e_hi), math.log(1 - e_lo), n_nodes)
        es = 1.0 - np.exp(x)
        tamed = lambda arr, e: np.asarray(arr) * (1 - e) ** 2
        u_rows, v_rows = [], []
        for e in es:
            p = OpoParams(kappa0_hat=kappa0_hat, e_mag=float(e))
            co = upsilon_coeffs(ChannelKind.PUMP_AMPLITUDE, p, filt, spectrum)
            v_quarter = linear_filtered_variance(math.pi / 4, p, filt)
            v_zero = linear_filtered_variance(0.0, p, filt)
            u_rows.append(tamed([co.u4, co.u2, co.u0], e))
            v_rows.append(tamed([v_zero - v_quarter, v_quarter], e))
        self._u = CubicSpline(x, np.array(u_rows), axis=0)
        self._v = CubicSpline(x, np.array(v_rows), axis=0)
        self.e_lo, self.e_hi = e_lo, e_hi

    def curve(self, thetas, e0, alpha, theta0, g_mu, variances=None):
        drift = DriftModel(e0=e0, alpha=alpha, theta0=theta0)
        es = np.array([excitation_with_detuning(drift, t) for t in thetas])
        if es.min() <= self.e_lo or es.max() >= self.e_hi:
            return None
        x = np.log(1.0 - es)
        scale = (1.0 - es) ** 2
        u4, u2, u0 = (self._u(x) / scale[:, None]).T
        v1, v2 = (self._v(x) / scale[:, None]).T
        thetas = np.asarray(thetas)
        ups = u4 * np.cos(4 * thetas) + u2 * np.cos(2 * thetas) + u0
        if variances is not None:
            denom = np.asarray(variances, dtype=float)
        else:
            denom = v1 * np.cos(2 * thetas) + v2
        return g_mu**2 * ups / denom**2


def fit_drift_model(
    records: list[ExperimentRecord],
    init: tuple[DriftModel, float],
    filt: DetectionFilter,
    kappa0_hat: float,
    weighted: bool = False,
    max_iter: int = 400,
) -> FitResult:
    """Least-squares fit of (e0, alpha, theta0, g_mu) with a derivative-free
    simplex inside box constraints; threshold violations are penalized, not
    fatal.  Curvature-based half-widths flag flat directions as infinite."""
    if len(records) < 8:
        raise ValueError("need at least 8 records")
    thetas = np.array([r.theta for r in records])
    if np.ptp(thetas) <= math.pi / 2:
        raise ValueError("records must span more than half a period")
    ks = np.array([r.kurtosis for r in records])
    have_var = all(r.variance is not None for r in records)
    variances = [r.variance for r in records] if have_var else None
    if weighted:
        # multiplicative-error data: inverse-variance weighting at the model
        # point is relative least squares (residuals stay O(noise) even at
        # the curve dips)
        errs = np.array([r.k_err if r.k_err else np.nan for r in records])
        if np.isnan(errs).any():
            raise ValueError("weighted fit needs k_err on every record")
    drift0, g0 = init
    x0 = np.array([drift0.e0, drift0.alpha, drift0.theta0, g0])
    bounds = [(0.31, 1 - 1e-3), (0.0, 0.1), (-math.pi, math.pi), (1e-6, 0.1)]
    fast = MuCurveModel(filt, kappa0_hat)
    n_eval = 0

    def objective(x, relative=None):
        nonlocal n_eval
        n_eval += 1
        model = fast.curve(thetas, *x, variances=variances)
        if model is None:
            return 1e6
        if weighted if relative is None else relative:
            return float(np.sum((ks / model - 1.0) ** 2))
        return float(np.sum((model - ks) ** 2))

    # The drift asymmetry is a subtle feature and the relative-error surface
    # is rugged around the curve dips, so a plain local simplex regularly
    # falls into spurious basins.  The interpolated model makes objective
    # evaluations cheap; prescan a coarse (alpha, theta0) grid around the
    # init, then run the simplex from the few best candidates.
    alphas = np.array([0.0, 0.25, 0.5, 1.0, 2.0, 4.0]) * max(x0[1], 0.005)
    theta0s = np.concatenate(([x0[2]], np.linspace(-math.pi, math.pi, 9)[:-1],
                              [math.pi]))
    scan = []
    for a in alphas:
        for t0 in theta0s:
            x = np.array([x0[0], min(a, 0.1), t0, x0[3]])
            scan.append((objective(x), tuple(x)))
    scan.sort(key=lambda s: s[0])
    starts = [x0] + [np.array(x) for _, x in scan[:3]]

    best = None
    for start in starts:
        res = minimize(
            objective,
            np.clip(start, *zip(*bounds)),
            method="Nelder-Mead",
            bounds=bounds,
            options={"maxiter": max_iter, "xatol": 1e-7, "fatol": 1e-14},
        )
        if best is None or res.fun < best.fun:
            best = res
    if weighted:
        # The relative stage pins the amplitude pair (e0, g) precisely but
        # leaves the correlated drift pair (alpha, theta0) on a shallow
        # ridge; the absolute residuals concentrate where the drift acts, so
        # alternate: absolute over (alpha, theta0), relative over (e0, g).
        x = best.x.copy()
        for _ in range(3):
            sub = minimize(
                lambda y: objective(
                    np.array([x[0], y[0], y[1], x[3]]), relative=False
                ),
                x[1:3],
                method="Nelder-Mead",
                bounds=bounds[1:3],
                options={"maxiter": max_iter, "xatol": 1e-8, "fatol": 1e-16},
            )
            x[1:3] = sub.x
            sub = minimize(
                lambda y: objective(
                    np.array([y[0], x[1], x[2], y[1]]), relative=True
                ),
                x[[0, 3]],
                method="Nelder-Mead",
                bounds=[bounds[0], bounds[3]],
                options={"maxiter": max_iter, "xatol": 1e-8, "fatol": 1e-16},
            )
            x[[0, 3]] = sub.x
        if objective(x) <= best.fun:
            best.x, best.fun = x, objective(x)
    res = minimize(
        objective,
        best.x,
        method="Nelder-Mead",
        bounds=bounds,
        options={"maxiter": max_iter, "xatol": 1e-7, "fatol": 1e-14},
    )
    polished = res.fun <= best.fun + 1e-12 * (1.0 + abs(best.fun))
    if res.fun > best.fun:
        res = best
    if not (res.success or polished):
        raise NonConvergence(f"simplex did not converge in {max_iter} iterations")
    xopt, fopt = res.x, float(res.fun)
    names = ("e0", "alpha", "theta0", "g_mu")
    dof = max(len(records) - 4, 1)
    scale = max(fopt / dof, 1e-30)
    half_widths = {}
    for i, name in enumerate(names):
        h = max(1e-4 * max(abs(xopt[i]), 1e-3), 1e-6)
        xp, xm = xopt.copy(), xopt.copy()
        xp[i] += h
        xm[i] -= h
        curv = (objective(xp) + objective(xm) - 2 * fopt) / h**2
        half_widths[name] = (
            math.sqrt(2.0 * scale / curv) if curv > 1e-12 * scale else math.inf
        )
    drift = DriftModel(e0=xopt[0], alpha=xopt[1], theta0=xopt[2])
    return FitResult(
        drift=drift,
        g_mu=float(xopt[3]),
        residual=fopt,
        half_widths=half_widths,
        n_evaluations=n_eval,
    )


# --- figure tables ---------------------------------------------------------

_FIG_CHANNELS = (
    ChannelKind.CHI_PUMP,
    ChannelKind.PUMP_AMPLITUDE,
    ChannelKind.PUMP_PHASE,
    ChannelKind.CAVITY_DETUNING,
    ChannelKind.CRYSTAL_TEMPERATURE,
)


def emit_figure_data(
    figure: str,
    filt: DetectionFilter = DetectionFilter(0.3, 0.15),
    kappa0_hat: float = 2.0,
    g_mu: float = 0.007,
) -> dict:
    """Deterministic delimited tables reproducing the published curves."""
    fig = figure.lower()
    if fig == "fig1":
        es = np.linspace(0.01, 0.999, 120)
        cols = ["E"]
        for k0 in (5.0, 10.0):
            for kind in _FIG_CHANNELS:
                cols.append(f"lambda_{kind.value}_k{int(k0)}")
        rows = []
        for e in es:
            row = [e]
            for k0 in (5.0, 10.0):
                p = OpoParams(kappa0_hat=k0, e_mag=float(e))
                row += [lambda_nl(kind, p) for kind in _FIG_CHANNELS]
            rows.append(row)
        return {"columns": cols, "rows": rows}
    if fig == "fig2":
        thetas = np.arange(-100, 101) * (math.pi / 200.0)
        cols = ["theta"]
        coeff = {}
        for kind in _FIG_CHANNELS:
            for e in (0.71, 0.87, 0.975):
                p = OpoParams(kappa0_hat=kappa0_hat, e_mag=e)
                coeff[(kind, e)] = upsilon_coeffs(
                    kind, p, filt, default_spectrum(kind), degenerate_fallback=True
                )
                cols.append(f"{kind.value}_E{e}")
        rows = []
        for th in thetas:
            row = [th]
            for kind in _FIG_CHANNELS:
                for e in (0.71, 0.87, 0.975):
                    row.append(coeff[(kind, e)].reconstruct(float(th)))
            rows.append(row)
        return {"columns": cols, "rows": rows}
    if fig == "fig3":
        k0s = np.linspace(2.0, 10.0, 17)
        cols = ["kappa0"] + [f"max_upsilon_{k.value}" for k in _FIG_CHANNELS]
        rows = []
        for k0 in k0s:
            p = OpoParams(kappa0_hat=float(k0), e_mag=0.975)
            row = [float(k0)]
            for kind in _FIG_CHANNELS:
                uc = upsilon_coeffs(
                    kind, p, filt, default_spectrum(kind), degenerate_fallback=True
                )
                grid = np.arange(-100, 101) * (math.pi / 200.0)
                row.append(max(uc.reconstruct(float(t)) for t in grid))
            rows.append(row)
        return {"columns": cols, "rows": rows}
    if fig == "fig4":
        one_minus_e2 = np.geomspace(0.03, 0.5, 15)
        cols = ["one_minus_E2", "upsilon0_chi_pump", "upsilon0_pump_amplitude"]
        rows = []
        for x in one_minus_e2:
            e = math.sqrt(1.0 - float(x))
            p = OpoParams(kappa0_hat=kappa0_hat, e_mag=e)
            u_chi = upsilon_coeffs(
                ChannelKind.CHI_PUMP, p, filt, SpectrumModel.white(),
                degenerate_fallback=True,
            )
            u_mu = upsilon_coeffs(
                ChannelKind.PUMP_AMPLITUDE, p, filt,
                default_spectrum(ChannelKind.PUMP_AMPLITUDE),
            )
            rows.append([float(x), u_chi.u0, u_mu.u0])
        return {"columns": cols, "rows": rows}
    if fig == "fig5":
        drift = DriftModel(e0=0.932, alpha=0.013, theta0=math.pi)
        thetas = np.linspace(-math.pi, math.pi, 101)[:-1]
        channel = NoiseChannel(
            ChannelKind.PUMP_AMPLITUDE, g_mu, SpectrumModel.uniform_band(0.05)
        )
        curve = kurtosis_curve_with_drift(
            [float(t) for t in thetas], drift, [channel], filt, kappa0_hat
        )
        return {
            "columns": ["theta", "k_theta", "excitation"],
            "rows": [
                [t, v, e]
                for t, v, e in zip(curve.thetas, curve.values, curve.excitations)
            ],
        }
    if fig == "fig6":
        e2_grid = sorted(set(np.linspace(0.45, 0.97, 27)) | {0.5, 0.7, 0.8, 0.9, 0.95})
        rows = []
        for e2 in e2_grid:
            e = math.sqrt(e2)
            p = OpoParams(kappa0_hat=kappa0_hat, e_mag=e)
            uc = upsilon_coeffs(
                ChannelKind.PUMP_AMPLITUDE, p, filt,
                default_spectrum(ChannelKind.PUMP_AMPLITUDE),
            )
            rows.append([e2, g_mu**2 * uc.u0])
        return {"columns": ["E2", "g2_upsilon0_pump_amplitude"], "rows": rows}
    raise ValueError(f"unknown figure {figure!r}")
