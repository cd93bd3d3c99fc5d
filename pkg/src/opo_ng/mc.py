"""Monte Carlo verification of the analytic kurtosis pipeline.

First-order statistics are synthesized with two independent real
Ornstein-Uhlenbeck components assembled into an independent-conjugate pair
(beta, beta_dag); their cross-spectra reproduce the time-normal-ordered
first-order spectrum exactly, so classical moments of the surrogate estimate
the normally ordered moments the analytic formulas compute.  Second-order
fields are propagated through the per-channel coupling matrices, the
detection filter is applied as two one-pole recursions, and the kurtosis
excess is estimated with batch-means errors.

Every trajectory owns a counter-based random stream keyed by its global
index, so results are bitwise independent of batching and worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVariance, TrajectoryTooShort, ZeroPump
from .params import ChannelKind, DetectionFilter, NoiseChannel, OpoParams

N_COSINES = 256
_BAND_NODE_SPACING = 1.0  # coarse grid for the slow band-limited pump path
_CHUNK_STEPS = 2048


@dataclass(frozen=True)
class McConfig:
    n_samples: int = 100_000
    dt: float = 0.02
    burn_in: float | None = None
    seed: int = 12345
    orders: tuple = (1, 2)
    n_trajectories: int = 1024

    def __post_init__(self):
        if self.n_samples < 1000:
            raise ValueError("need at least 10^3 samples")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_trajectories < 1:
            raise ValueError("need at least one trajectory")
        if not set(self.orders) <= {1, 2}:
            raise ValueError("orders must be a subset of {1, 2}")

    def resolved_burn_in(self, params: OpoParams) -> float:
        floor = 10.0 / (1.0 - params.e_mag)
        if self.burn_in is None:
            return floor
        if self.burn_in < floor:
            raise ValueError(f"burn_in must be >= {floor} (slowest relaxation)")
        return self.burn_in

    def check_dt(self, params: OpoParams):
        cap = 0.05 / (1.0 + params.e_mag)
        if self.dt > cap:
            raise ValueError(f"dt={self.dt} exceeds resolution cap {cap}")


@dataclass(frozen=True)
class KurtosisEstimate:
    k_hat: float
    stderr: float
    n_effective: int
    m2: float = float("nan")
    m2_stderr: float = float("nan")
    m2_imag: float = 0.0
    m4_imag: float = 0.0


@dataclass
class LinearFields:
    """Materialized first-order trajectories, shape (n_traj, n_steps)."""

    dt: float
    taus: np.ndarray
    u: np.ndarray
    v: np.ndarray
    pump_mu: np.ndarray | None = None
    pump_phase: np.ndarray | None = None
    phase_white: np.ndarray | None = None
    frozen: dict = field(default_factory=dict)

    @property
    def beta(self) -> np.ndarray:
        return 0.5 * (self.u - self.v)

    @property
    def beta_dag(self) -> np.ndarray:
        return 0.5 * (self.u + self.v)


def _rng_for(seed: int, traj: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(traj,)))
    )


def _ou_coeffs(params: OpoParams, dt: float):
    e = params.e_mag
    if e <= 0:
        raise ZeroPump("surrogate synthesis needs E > 0")
    a1, a2 = 1.0 - e, 1.0 + e
    var_u, var_v = 2.0 / (e * a1), 2.0 / (e * a2)
    r1, r2 = math.exp(-a1 * dt), math.exp(-a2 * dt)
    s1 = math.sqrt(var_u * (1.0 - r1 * r1))
    s2 = math.sqrt(var_v * (1.0 - r2 * r2))
    return (r1, s1, var_u), (r2, s2, var_v)


def _expm_step(params: OpoParams, dt: float) -> np.ndarray:
    e = params.e_mag
    ch, sh = math.cosh(e * dt), math.sinh(e * dt)
    return math.exp(-dt) * np.array([[ch, sh], [sh, ch]])


def _mu_tables(rng, spectrum, k0):
    """Cosine decomposition of the pump-filtered band path: equally spaced
    frequencies, random phases, each passed through kappa0/(kappa0 - i w)."""
    w_max = spectrum.w_max
    freqs = (np.arange(N_COSINES) + 0.5) * (w_max / N_COSINES)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=N_COSINES)
    h = k0 / (k0 - 1j * freqs)
    gain = math.sqrt(2.0 / N_COSINES) * np.abs(h)
    shift = phases - np.angle(h)
    return freqs, gain, shift


def synthesize_linear_fields(
    params: OpoParams,
    mc: McConfig,
    duration: float,
    channels: tuple[NoiseChannel, ...] = (),
    n_trajectories: int | None = None,
    start_traj: int = 0,
) -> LinearFields:
    """Materialize first-order surrogate trajectories plus the first-order
    pump paths of the enabled classical channels (short runs / tests)."""
    mc.check_dt(params)
    n_traj = n_trajectories or mc.n_trajectories
    n_steps = int(round(duration / mc.dt)) + 1
    taus = np.arange(n_steps) * mc.dt
    (r1, s1, vu), (r2, s2, vv) = _ou_coeffs(params, mc.dt)
    fields = LinearFields(
        dt=mc.dt,
        taus=taus,
        u=np.empty((n_traj, n_steps)),
        v=np.empty((n_traj, n_steps)),
    )
    k0 = complex(params.kappa0_hat).real
    mu_ch = next((c for c in channels if c.kind is ChannelKind.PUMP_AMPLITUDE), None)
    phase_ch = next((c for c in channels if c.kind is ChannelKind.PUMP_PHASE), None)
    frozen_kinds = [
        c.kind
        for c in channels
        if c.kind in (ChannelKind.CAVITY_DETUNING, ChannelKind.CRYSTAL_TEMPERATURE)
    ]
    if mu_ch is not None:
        fields.pump_mu = np.empty((n_traj, n_steps))
    if phase_ch is not None:
        fields.pump_phase = np.empty((n_traj, n_steps))
        fields.phase_white = np.empty((n_traj, n_steps))
    for kind in frozen_kinds:
        fields.frozen[kind] = np.empty(n_traj)
    rho0 = math.exp(-k0 * mc.dt)
    for t in range(n_traj):
        rng = _rng_for(mc.seed, start_traj + t)
        if mu_ch is not None:
            freqs, gain, shift = _mu_tables(rng, mu_ch.spectrum, k0)
            fields.pump_mu[t] = (
                gain[:, None] * np.cos(freqs[:, None] * taus[None, :] + shift[:, None])
            ).sum(axis=0)
        for kind in frozen_kinds:
            fields.frozen[kind][t] = rng.standard_normal()
        xi = rng.standard_normal((n_steps, 2))
        ut = np.empty(n_steps)
        vt = np.empty(n_steps)
        ut[0] = math.sqrt(vu) * xi[0, 0]
        vt[0] = math.sqrt(vv) * xi[0, 1]
        for k in range(1, n_steps):
            ut[k] = r1 * ut[k - 1] + s1 * xi[k, 0]
            vt[k] = r2 * vt[k - 1] + s2 * xi[k, 1]
        fields.u[t], fields.v[t] = ut, vt
        if phase_ch is not None:
            # the same binned white path drives the instantaneous signal
            # rotation and the pump response, so their cross terms are right
            eta = rng.standard_normal(n_steps)
            amp = math.sqrt(mc.dt * rho0)
            ft = np.empty(n_steps)
            ft[0] = math.sqrt(1.0 / (2.0 * k0)) * eta[0]
            for k in range(1, n_steps):
                ft[k] = rho0 * ft[k - 1] + amp * eta[k]
            fields.pump_phase[t] = ft
            fields.phase_white[t] = eta / math.sqrt(mc.dt)
    return fields


def b_sequence(fields: LinearFields, channel: NoiseChannel, params: OpoParams):
    """Time-resolved entries (b11, b12, b21, b22) of the coupling matrix along
    the trajectories, channel weight included."""
    e, g = params.e_mag, channel.weight
    k0 = complex(params.kappa0_hat).real
    shape = fields.u.shape
    zero = np.zeros(shape, dtype=complex)
    kind = channel.kind
    if kind is ChannelKind.PUMP_AMPLITUDE:
        p = (e * g) * fields.pump_mu.astype(complex)
        return zero, p, p, zero
    if kind is ChannelKind.CRYSTAL_TEMPERATURE:
        c = np.broadcast_to(fields.frozen[kind][:, None], shape)
        p = (e * g) * c.astype(complex)
        return zero, p, p, zero
    if kind is ChannelKind.CAVITY_DETUNING:
        c = np.broadcast_to(fields.frozen[kind][:, None], shape).astype(complex)
        d = -1j * g * c
        off = -1j * g * (e / k0) * c
        return d, off, -off, -d
    raise ValueError(f"no Monte Carlo coupling for {kind}")


def second_order_response(
    fields: LinearFields,
    channel: NoiseChannel,
    params: OpoParams,
    mc: McConfig,
) -> np.ndarray:
    """Second-order field (2, n_traj, n_steps): propagator convolved with the
    coupling applied to the first-order field."""
    b11, b12, b21, b22 = b_sequence(fields, channel, params)
    beta, beta_dag = fields.beta, fields.beta_dag
    f1 = b11 * beta + b12 * beta_dag
    f2 = b21 * beta + b22 * beta_dag
    ead = _expm_step(params, fields.dt)
    n_traj, n_steps = f1.shape
    a = np.zeros((2, n_traj), dtype=complex)
    out = np.zeros((2, n_traj, n_steps), dtype=complex)
    half_dt = 0.5 * fields.dt
    for k in range(1, n_steps):
        f_prev = np.stack([f1[:, k - 1], f2[:, k - 1]])
        f_now = np.stack([f1[:, k], f2[:, k]])
        a = ead @ a + half_dt * (ead @ f_prev + f_now)
        out[:, :, k] = a
    return out


def filtered_quadrature(
    fields: LinearFields,
    alpha2: np.ndarray | None,
    theta: float,
    filt: DetectionFilter,
    params: OpoParams,
    burn_in: float,
    orders: tuple = (1, 2),
) -> np.ndarray:
    """One complex detector sample per decorrelated window per trajectory."""
    dt = fields.dt
    n_steps = fields.u.shape[1]
    warm_steps = int(math.ceil((burn_in + 8.0 / filt.gamma_f) / dt))
    stride = max(1, int(round(10.0 / filt.gamma_f / dt)))
    if n_steps <= warm_steps + stride:
        raise TrajectoryTooShort(
            f"need more than {warm_steps + stride} steps, have {n_steps}"
        )
    th1 = 0.5 * complex(math.cos(theta), -math.sin(theta))
    th2 = 0.5 * complex(math.cos(theta), math.sin(theta))
    x = th1 * fields.beta + th2 * fields.beta_dag
    if 2 in orders and alpha2 is not None:
        x = x + th1 * alpha2[0] + th2 * alpha2[1]
    ep = np.exp(complex(-filt.gamma_f, filt.omega_f) * dt)
    em = np.exp(complex(-filt.gamma_f, -filt.omega_f) * dt)
    zp = np.zeros(x.shape[0], dtype=complex)
    zm = np.zeros(x.shape[0], dtype=complex)
    half_dt = 0.5 * dt
    samples = []
    for k in range(1, n_steps):
        zp = ep * zp + half_dt * (ep * x[:, k - 1] + x[:, k])
        zm = em * zm + half_dt * (em * x[:, k - 1] + x[:, k])
        if k >= warm_steps and (k - warm_steps) % stride == 0:
            samples.append(0.5 * (zp + zm))
    return np.array(samples).T.reshape(-1)


def sample_kurtosis(samples: np.ndarray, n_batches: int = 20) -> KurtosisEstimate:
    """Kurtosis excess of the surrogate samples with batch-means errors.

    Moments are real parts of <V^k>; the imaginary parts are reported as
    diagnostics and must vanish within noise.
    """
    samples = np.asarray(samples)
    n = samples.size
    if n < 1000:
        raise ValueError("need at least 10^3 samples")
    v2, v4 = samples**2, samples**4
    m2c, m4c = v2.mean(), v4.mean()
    m2, m4 = m2c.real, m4c.real
    sem2 = float(np.std(v2.real, ddof=1) / math.sqrt(n))
    if abs(m2) <= 3.0 * sem2:
        raise DegenerateVariance(
            f"second moment {m2:.3e} consistent with zero (sem {sem2:.3e})"
        )
    k_hat = (m4 - 3.0 * m2 * m2) / (3.0 * m2 * m2)
    usable = (n // n_batches) * n_batches
    b2 = v2.real[:usable].reshape(n_batches, -1).mean(axis=1)
    b4 = v4.real[:usable].reshape(n_batches, -1).mean(axis=1)
    bk = (b4 - 3.0 * b2**2) / (3.0 * b2**2)
    stderr = float(np.std(bk, ddof=1) / math.sqrt(n_batches))
    return KurtosisEstimate(
        k_hat=float(k_hat),
        stderr=stderr,
        n_effective=n,
        m2=float(m2),
        m2_stderr=sem2,
        m2_imag=float(m2c.imag),
        m4_imag=float(m4c.imag),
    )


class _StreamRunner:
    """Chunked-in-time trajectory batch: constant memory in the run length."""

    def __init__(self, params, channel, theta, filt, mc, traj_lo, traj_hi, n_steps):
        self.params, self.channel, self.filt, self.mc = params, channel, filt, mc
        self.dt = mc.dt
        self.n = traj_hi - traj_lo
        self.n_steps = n_steps
        e = params.e_mag
        self.k0 = complex(params.kappa0_hat).real
        (self.r1, self.s1, vu), (self.r2, self.s2, vv) = _ou_coeffs(params, mc.dt)
        self.ead = _expm_step(params, mc.dt)
        self.th1 = 0.5 * complex(math.cos(theta), -math.sin(theta))
        self.th2 = 0.5 * complex(math.cos(theta), math.sin(theta))
        self.ep = np.exp(complex(-filt.gamma_f, filt.omega_f) * mc.dt)
        self.em = np.exp(complex(-filt.gamma_f, -filt.omega_f) * mc.dt)
        self.rngs = [_rng_for(mc.seed, t) for t in range(traj_lo, traj_hi)]
        kind = channel.kind
        self.mode = "none"
        if 2 in mc.orders and channel.weight > 0:
            if kind is ChannelKind.PUMP_AMPLITUDE:
                self.mode = "mu"
            elif kind in (ChannelKind.CRYSTAL_TEMPERATURE, ChannelKind.CAVITY_DETUNING):
                self.mode = "frozen"
            elif kind is ChannelKind.PUMP_PHASE:
                self.mode = "phase"
            else:
                raise ValueError(f"no Monte Carlo coupling for {kind}")
        if self.mode == "mu":
            tabs = [_mu_tables(r, channel.spectrum, self.k0) for r in self.rngs]
            self.mu_freqs = tabs[0][0]
            self.mu_gain = np.stack([t[1] for t in tabs])
            self.mu_shift = np.stack([t[2] for t in tabs])
        elif self.mode == "frozen":
            self.c = np.array([r.standard_normal() for r in self.rngs])
        elif self.mode == "phase":
            self.rho0 = math.exp(-self.k0 * mc.dt)
            self.phase_amp = math.sqrt(mc.dt * self.rho0)
            self.fpump = np.array(
                [math.sqrt(1.0 / (2.0 * self.k0)) * r.standard_normal()
                 for r in self.rngs]
            )
        # stationary first-order start
        x0 = np.stack([r.standard_normal(2) for r in self.rngs])
        self.u = math.sqrt(vu) * x0[:, 0]
        self.v = math.sqrt(vv) * x0[:, 1]
        self.a2 = np.zeros((2, self.n), dtype=complex)
        self.zp = np.zeros(self.n, dtype=complex)
        self.zm = np.zeros(self.n, dtype=complex)
        self.f_prev = np.zeros((2, self.n), dtype=complex)
        self.x_prev = self._x_of(self.u, self.v, self.a2)

    def _mu_path_nodes(self, t0, t1):
        nodes = np.arange(t0, t1 + 2 * _BAND_NODE_SPACING, _BAND_NODE_SPACING)
        args = self.mu_freqs[None, :, None] * nodes[None, None, :] + self.mu_shift[:, :, None]
        return nodes, (self.mu_gain[:, :, None] * np.cos(args)).sum(axis=1)

    def _b_apply(self, beta, beta_dag, p):
        """f = B . (beta, beta_dag) for the active channel at path value p."""
        e, g = self.params.e_mag, self.channel.weight
        kind = self.channel.kind
        if kind is ChannelKind.PUMP_AMPLITUDE:
            off = (e * g) * p
            return off * beta_dag + 0j, off * beta + 0j
        if kind is ChannelKind.CRYSTAL_TEMPERATURE:
            off = (e * g) * self.c
            return off * beta_dag + 0j, off * beta + 0j
        if kind is ChannelKind.PUMP_PHASE:
            varpi, fp = p
            d = 0.5j * g * varpi
            off = 1j * g * e * fp
            return d * beta + off * beta_dag, -off * beta - d * beta_dag
        d = -1j * g * self.c
        off = -1j * g * (e / self.k0) * self.c
        return d * beta + off * beta_dag, -off * beta - d * beta_dag

    def _x_of(self, u, v, a2):
        beta, beta_dag = 0.5 * (u - v), 0.5 * (u + v)
        x = self.th1 * beta + self.th2 * beta_dag
        if 2 in self.mc.orders:
            x = x + self.th1 * a2[0] + self.th2 * a2[1]
        return x

    def run(self, warm_steps, stride, per_traj):
        dt, half_dt = self.dt, 0.5 * self.dt
        samples = np.empty((per_traj, self.n), dtype=complex)
        n_collected = 0
        step = 0
        while step < self.n_steps and n_collected < per_traj:
            cs = min(_CHUNK_STEPS, self.n_steps - step)
            n_cols = 3 if self.mode == "phase" else 2
            noise = np.empty((self.n, cs, n_cols))
            for t, rng in enumerate(self.rngs):
                noise[t] = rng.standard_normal((cs, n_cols))
            if self.mode == "mu":
                t0 = step * dt
                nodes, pvals = self._mu_path_nodes(t0, (step + cs) * dt)
            for k in range(cs):
                self.u = self.r1 * self.u + self.s1 * noise[:, k, 0]
                self.v = self.r2 * self.v + self.s2 * noise[:, k, 1]
                beta, beta_dag = 0.5 * (self.u - self.v), 0.5 * (self.u + self.v)
                if self.mode != "none":
                    if self.mode == "mu":
                        tau = (step + k + 1) * dt
                        fidx = (tau - nodes[0]) / _BAND_NODE_SPACING
                        i0 = int(fidx)
                        frac = fidx - i0
                        p = (1 - frac) * pvals[:, i0] + frac * pvals[:, i0 + 1]
                    elif self.mode == "phase":
                        eta = noise[:, k, 2]
                        self.fpump = self.rho0 * self.fpump + self.phase_amp * eta
                        p = (eta / math.sqrt(dt), self.fpump)
                    else:
                        p = None
                    f1, f2 = self._b_apply(beta, beta_dag, p)
                    f_now = np.stack([f1, f2])
                    self.a2 = self.ead @ self.a2 + half_dt * (
                        self.ead @ self.f_prev + f_now
                    )
                    self.f_prev = f_now
                x = self._x_of(self.u, self.v, self.a2)
                self.zp = self.ep * self.zp + half_dt * (self.ep * self.x_prev + x)
                self.zm = self.em * self.zm + half_dt * (self.em * self.x_prev + x)
                self.x_prev = x
                global_step = step + k + 1
                if (
                    global_step >= warm_steps
                    and (global_step - warm_steps) % stride == 0
                    and n_collected < per_traj
                ):
                    samples[n_collected] = 0.5 * (self.zp + self.zm)
                    n_collected += 1
            step += cs
        if n_collected < per_traj:
            raise TrajectoryTooShort(
                f"collected {n_collected} of {per_traj} windows"
            )
        return samples  # (per_traj, n) window-major


def run_mc_kurtosis(
    params: OpoParams,
    channel: NoiseChannel,
    theta: float,
    filt: DetectionFilter,
    mc: McConfig,
    n_workers: int = 1,
) -> KurtosisEstimate:
    """End-to-end estimate: synthesize, propagate, filter, window, estimate."""
    mc.check_dt(params)
    burn = mc.resolved_burn_in(params)
    stride = max(1, int(round(10.0 / filt.gamma_f / mc.dt)))
    warm_steps = int(math.ceil((burn + 8.0 / filt.gamma_f) / mc.dt))
    n_traj = mc.n_trajectories
    per_traj = int(math.ceil(mc.n_samples / n_traj))
    n_steps = warm_steps + per_traj * stride + 1

    def work(bounds):
        lo, hi = bounds
        runner = _StreamRunner(params, channel, theta, filt, mc, lo, hi, n_steps)
        return runner.run(warm_steps, stride, per_traj)

    if n_workers <= 1:
        parts = [work((0, n_traj))]
    else:
        edges = np.linspace(0, n_traj, n_workers + 1, dtype=int)
        ranges = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
        with ThreadPoolExecutor(max_workers=n_workers) as ex:
            parts = list(ex.map(work, ranges))
    # (per_traj, n_traj) in global trajectory order, flattened trajectory-major
    # so batch-means blocks are whole-trajectory groups (independent) and the
    # sample sequence is identical for every worker split.
    samples = np.concatenate(parts, axis=1).T.reshape(-1)[: mc.n_samples]
    return sample_kurtosis(samples)
