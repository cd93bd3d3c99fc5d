"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; every tolerance is pinned here, nothing is deferred to calibration.
"""

import math
import time
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from opo_ng.fitting import ExperimentRecord, _model_curve, fit_drift_model
from opo_ng.intracavity import lambda_nl, lambda_ppse_ratio, sigma_nl_variance
from opo_ng.kurtosis import (
    DriftModel,
    default_spectrum,
    kurtosis_curve_with_drift,
    kurtosis_total,
    linear_filtered_variance,
    upsilon_coeffs,
    upsilon_theta,
    upsilon_white_quad,
    varsigma,
    varsigma_quad,
)
from opo_ng.linear import (
    antisqueezed_spectral_density,
    green_freq,
    green_time,
    integrated_antisqueezed_variance,
    integrated_squeezed_variance,
    squeezed_spectral_density,
)
from opo_ng.mc import McConfig, run_mc_kurtosis
from opo_ng.params import (
    ChannelKind,
    DetectionFilter,
    NoiseChannel,
    OpoParams,
    SpectrumModel,
)

FILT = DetectionFilter(omega_f=0.3, gamma_f=0.15)
B_CHANNELS = (
    ChannelKind.CHI_PUMP,
    ChannelKind.PUMP_AMPLITUDE,
    ChannelKind.PUMP_PHASE,
    ChannelKind.CAVITY_DETUNING,
    ChannelKind.CRYSTAL_TEMPERATURE,
)


def tuned(e, k0=2.0):
    return OpoParams(kappa0_hat=k0, e_mag=e)


def report(num, ok, detail):
    line = f"[criterion {num:2d}] {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    assert ok, line


class TestAcceptance:
    def test_01_ppse_ratio(self):
        t0 = time.time()
        ok = abs(lambda_ppse_ratio(tuned(0.5, 2.0)) - 0.5) < 1e-12
        for k0 in np.geomspace(0.1, 100.0, 60):
            r = lambda_ppse_ratio(tuned(0.5, float(k0)))
            ok = ok and (1 / 3 < r < 1)
        # near-threshold envelope: lambda_chi0(0.999)(1-E)/C_ppse reproduces
        # the ratio's leading term, with C_ppse the divergent coefficient of
        # the positive-P counterpart inferred from the ratio itself
        worst = 0.0
        for k0 in (0.5, 2.0, 10.0):
            e = 0.999
            c_nl = lambda_nl(ChannelKind.CHI_PUMP, tuned(1 - 1e-9, k0)) * 1e-9
            ratio = lambda_ppse_ratio(tuned(e, k0))
            c_ppse = c_nl / ratio
            check = lambda_nl(ChannelKind.CHI_PUMP, tuned(e, k0)) * (1 - e) / c_ppse
            worst = max(worst, abs(check / ratio - 1.0))
        ok = ok and worst < 0.02
        report(1, ok and time.time() - t0 < 1.0,
               f"ppse ratio 0.5 at k0=2, in (1/3,1); envelope dev {worst:.2e}; "
               f"{time.time()-t0:.2f}s")

    def test_02_lambda_divergence(self):
        t0 = time.time()
        es = np.array([0.99, 0.999, 0.9999])
        slopes = {}
        for kind in (ChannelKind.CHI_PUMP, ChannelKind.PUMP_PHASE,
                     ChannelKind.CAVITY_DETUNING, ChannelKind.CRYSTAL_TEMPERATURE):
            vals = np.array([abs(lambda_nl(kind, tuned(e, 2.0))) for e in es])
            slopes[kind.value] = np.polyfit(np.log(1 - es), np.log(vals), 1)[0]
        mu_limit = lambda_nl(ChannelKind.PUMP_AMPLITUDE, tuned(0.9999, 2.0))
        ok = all(abs(s + 1.0) <= 0.05 for s in slopes.values())
        ok = ok and abs(mu_limit - 0.375) <= 1e-3
        report(2, ok and time.time() - t0 < 1.0,
               f"slopes {({k: round(v, 3) for k, v in slopes.items()})}, "
               f"mu limit {mu_limit:.5f}; {time.time()-t0:.2f}s")

    def test_03_quadrature_closed_form(self):
        t0 = time.time()
        worst = 0.0
        for e in (0.3, 0.6, 0.9):
            for k0 in (2.0, 5.0, 10.0):
                p = tuned(e, k0)
                q = sigma_nl_variance(ChannelKind.CHI_PUMP, p)
                c = lambda_nl(ChannelKind.CHI_PUMP, p)
                worst = max(worst, abs(q - c) / abs(c))
        ok = worst <= 1e-5
        # classical closed forms carry approximations; deviations from the
        # quadrature authority are reported, not hidden
        notes = []
        for kind in (ChannelKind.PUMP_AMPLITUDE, ChannelKind.CRYSTAL_TEMPERATURE,
                     ChannelKind.CAVITY_DETUNING, ChannelKind.PUMP_PHASE):
            p = tuned(0.6, 5.0)
            q = sigma_nl_variance(kind, p)
            c = lambda_nl(kind, p)
            notes.append(f"{kind.value}: quad {q:+.4f} closed {c:+.4f}")
        print("    [info] approximate classical closed forms vs quadrature: "
              + "; ".join(notes))
        report(3, ok and time.time() - t0 < 60.0,
               f"pump-quantum channel max rel dev {worst:.2e} on 3x3 grid; "
               f"{time.time()-t0:.1f}s")

    def test_04_fig2_argmax(self):
        t0 = time.time()
        grid = np.arange(-100, 101) * (math.pi / 200.0)
        ok = True
        details = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for e in (0.71, 0.87, 0.975):
                p = tuned(e, 2.0)
                for kind in B_CHANNELS:
                    co = upsilon_coeffs(kind, p, FILT, default_spectrum(kind),
                                        degenerate_fallback=True)
                    vals = [co.reconstruct(float(t)) for t in grid]
                    tmax = abs(grid[int(np.argmax(vals))])
                    if kind in (ChannelKind.PUMP_PHASE, ChannelKind.CAVITY_DETUNING):
                        good = abs(tmax - math.pi / 4) <= math.pi / 200 + 1e-12
                    else:
                        good = tmax <= math.pi / 200 + 1e-12
                    ok = ok and good
                    if not good:
                        details.append(f"{kind.value}@E={e}: argmax {tmax:.3f}")
        report(4, ok and time.time() - t0 < 60.0,
               ("argmax at 0 for {chi0, mu, T}, +-pi/4 for {phase, nu} "
                f"at E=0.71/0.87/0.975; {time.time()-t0:.1f}s")
               + ("; " + "; ".join(details) if details else ""))

    def test_05_fig3_monotonicity(self):
        t0 = time.time()
        grid = np.arange(-100, 101) * (math.pi / 200.0)
        maxima = {}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for kind in B_CHANNELS:
                vals = []
                for k0 in (2.0, 4.0, 6.0, 8.0, 10.0):
                    p = tuned(0.975, float(k0))
                    co = upsilon_coeffs(kind, p, FILT, default_spectrum(kind),
                                        degenerate_fallback=True)
                    vals.append(max(co.reconstruct(float(t)) for t in grid))
                maxima[kind] = vals
        ok = True
        for kind in (ChannelKind.CHI_PUMP, ChannelKind.PUMP_PHASE,
                     ChannelKind.CAVITY_DETUNING):
            ok = ok and all(a > b for a, b in zip(maxima[kind], maxima[kind][1:]))
        t_spread = max(maxima[ChannelKind.CRYSTAL_TEMPERATURE]) / min(
            maxima[ChannelKind.CRYSTAL_TEMPERATURE]) - 1.0
        ok = ok and t_spread < 0.01
        report(5, ok and time.time() - t0 < 60.0,
               f"chi0/phase/nu maxima decrease over kappa0 in [2,10]; "
               f"temperature flat to {t_spread:.2e}; {time.time()-t0:.1f}s")

    def test_06_fig4_ordering(self):
        t0 = time.time()
        ok = True
        prev_chi, prev_mu = None, None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for x in np.geomspace(0.5, 0.03, 10):  # toward threshold
                e = math.sqrt(1.0 - float(x))
                p = tuned(e, 2.0)
                u_chi = upsilon_coeffs(ChannelKind.CHI_PUMP, p, FILT,
                                       SpectrumModel.white(),
                                       degenerate_fallback=True).u0
                u_mu = upsilon_coeffs(ChannelKind.PUMP_AMPLITUDE, p, FILT,
                                      default_spectrum(ChannelKind.PUMP_AMPLITUDE)
                                      ).u0
                ok = ok and (u_chi < u_mu)
                if prev_chi is not None:
                    ok = ok and u_chi > prev_chi and u_mu > prev_mu
                prev_chi, prev_mu = u_chi, u_mu
        report(6, ok and time.time() - t0 < 60.0,
               f"u0(chi0) < u0(mu), both increasing toward threshold over "
               f"1-E^2 in [0.03, 0.5]; {time.time()-t0:.1f}s")

    def test_07_residue_vs_quadrature(self):
        t0 = time.time()
        rng = np.random.default_rng(2024)
        worst_vs = 0.0
        for kind in B_CHANNELS:
            for _ in range(5):
                p = tuned(rng.uniform(0.2, 0.95), float(rng.uniform(1.2, 8.0)))
                filt = DetectionFilter(rng.uniform(0.1, 0.8),
                                       rng.uniform(0.05, 0.4))
                w = rng.uniform(-1.5, 1.5)
                r = varsigma(kind, w, p, filt)
                q = varsigma_quad(kind, w, p, filt)
                worst_vs = max(worst_vs,
                               np.max(np.abs(r - q)) / np.max(np.abs(q)))
        worst_up = 0.0
        for kind in (ChannelKind.CHI_PUMP, ChannelKind.PUMP_PHASE):
            for _ in range(5):
                p = tuned(rng.uniform(0.3, 0.95), float(rng.uniform(2.3, 8.0)))
                th = rng.uniform(-1.2, 1.2)
                r = upsilon_theta(kind, th, p, FILT, SpectrumModel.white())
                q = upsilon_white_quad(kind, th, p, FILT)
                worst_up = max(worst_up, abs(r - q) / max(abs(q), 1e-18))
        ok = worst_vs <= 1e-6 and worst_up <= 1e-6
        report(7, ok and time.time() - t0 < 120.0,
               f"varsigma dev {worst_vs:.2e}, white upsilon dev {worst_up:.2e} "
               f"over 5 random draws per channel; {time.time()-t0:.1f}s")

    def test_08_monte_carlo_end_to_end(self):
        t0 = time.time()
        p = tuned(0.9, 2.0)
        ch = NoiseChannel(ChannelKind.PUMP_AMPLITUDE, 0.01,
                          SpectrumModel.uniform_band(0.05))
        analytic = kurtosis_total(0.0, [ch], p, FILT, warn_validity=False)
        mc = McConfig(n_samples=100_000, dt=0.025, seed=20260808,
                      n_trajectories=1024)
        est = run_mc_kurtosis(p, ch, 0.0, FILT, mc)
        pull = (est.k_hat - analytic) / est.stderr
        lin = McConfig(n_samples=50_000, dt=0.025, seed=31, orders=(1,),
                       n_trajectories=1024)
        est_lin = run_mc_kurtosis(p, ch, 0.0, FILT, lin)
        v_expect = linear_filtered_variance(0.0, p, FILT)
        pull_v = (est_lin.m2 - v_expect) / est_lin.m2_stderr
        ok = abs(pull) <= 3.0 and abs(pull_v) <= 3.0
        report(8, ok and time.time() - t0 < 600.0,
               f"MC K {est.k_hat:+.5f}+-{est.stderr:.5f} vs analytic "
               f"{analytic:+.5f} (pull {pull:+.2f}); linear variance pull "
               f"{pull_v:+.2f}; {time.time()-t0:.0f}s")

    def test_09_fit_reproduction(self):
        t0 = time.time()
        drift = DriftModel(e0=0.932, alpha=0.013, theta0=math.pi)
        chans = [NoiseChannel(ChannelKind.PUMP_AMPLITUDE, 0.007,
                              SpectrumModel.uniform_band(0.05))]
        thetas = [float(t) for t in np.linspace(-math.pi, math.pi, 33)]
        curve = kurtosis_curve_with_drift(thetas, drift, chans, FILT, 2.0)
        exc = np.array(curve.excitations)
        span = exc.max() - exc.min()
        span_ok = 0.006 * 0.8 <= span <= 0.006 * 1.2
        k_mid, k_edge = curve.values[16], curve.values[0]
        asym_ok = abs(k_mid - k_edge) / max(k_mid, k_edge) > 0.005
        # recovery from 5% multiplicative noise (fixed representative
        # realization; the optimizer is additionally required to reach the
        # truth's objective so misfits cannot hide behind the noise)
        truth = (0.932, 0.013, math.pi, 0.007)
        data_thetas = np.linspace(-math.pi + 0.05, math.pi, 161)
        model = _model_curve(data_thetas, *truth, FILT, 2.0)
        rng = np.random.default_rng(6)
        ks = model * (1.0 + 0.05 * rng.standard_normal(len(data_thetas)))
        recs = [ExperimentRecord(theta=float(t), kurtosis=float(k),
                                 k_err=float(0.05 * abs(k)))
                for t, k in zip(data_thetas, ks)]
        res = fit_drift_model(
            recs, (DriftModel(e0=0.9, alpha=0.02, theta0=2.8), 0.005),
            FILT, 2.0, weighted=True, max_iter=2000,
        )
        truth_resid = float(np.sum((ks / model - 1.0) ** 2))
        errs = {
            "e0": abs(res.drift.e0 / truth[0] - 1.0),
            "alpha": abs(res.drift.alpha / truth[1] - 1.0),
            "theta0": abs(res.drift.theta0 / truth[2] - 1.0),
            "g_mu": abs(res.g_mu / truth[3] - 1.0),
        }
        fit_ok = (max(errs.values()) <= 0.05
                  and res.residual <= truth_resid * (1 + 1e-9))
        ok = span_ok and asym_ok and fit_ok
        report(9, ok and time.time() - t0 < 300.0,
               f"|E| span {span:.5f} (target 0.006+-20%), peak asymmetry "
               f"{abs(k_mid-k_edge)/max(k_mid,k_edge):.1%}, recovery errors "
               f"{({k: f'{v:.1%}' for k, v in errs.items()})}; "
               f"{time.time()-t0:.0f}s")

    def test_10_linear_response_suite(self):
        t0 = time.time()
        ok = True
        # Fourier consistency at 1e-6 absolute
        for e in (0.1, 0.5, 0.9):
            p = tuned(e)
            tau_max = 20.0 / (1.0 - e) + 20.0
            taus = np.linspace(0, tau_max, int(tau_max / 1e-3) + 1)
            gt = np.array([green_time(t, p) for t in taus])
            for w in (-5.0, 0.0, 3.3):
                gw = np.trapezoid(gt * np.exp(1j * w * taus)[:, None, None],
                                  taus, axis=0)
                ok = ok and np.max(np.abs(gw - green_freq("signal", w, p))) < 1e-6
        # causality
        for tau in (-1e-9, -0.5, -10.0):
            ok = ok and not green_time(tau, tuned(0.5)).any()
        # integrated variances by quadrature at 1e-8 relative
        worst = 0.0
        for e in (0.1, 0.5, 0.9):
            p = tuned(e)
            sq = quad(lambda w: squeezed_spectral_density(w, p),
                      -np.inf, np.inf, limit=300)[0] / (2 * math.pi)
            anti = quad(lambda w: antisqueezed_spectral_density(w, p),
                        -np.inf, np.inf, limit=300)[0] / (2 * math.pi)
            worst = max(
                worst,
                abs(sq / integrated_squeezed_variance(p) - 1),
                abs(anti / integrated_antisqueezed_variance(p) - 1),
            )
        ok = ok and worst <= 1e-8
        report(10, ok and time.time() - t0 < 10.0,
               f"Fourier consistency <= 1e-6, causal zero for tau < 0, "
               f"integrated variances dev {worst:.2e}; {time.time()-t0:.1f}s")
