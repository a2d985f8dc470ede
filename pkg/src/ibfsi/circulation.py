"""Lumped driving and loading: LV pressure waveform and three-element
Windkessel afterload.

Pressures are in mmHg, flows in ml/s, time in seconds.  The Windkessel
stores the pressure across its compliance and is advanced by backward
Euler, which is unconditionally stable at any coupling step:

    C dP/dt = Q - P / R_p        ->   P' = (P + dt Q / C) / (1 + dt/(R_p C))
    P_ao = P' + Q R_c
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation

MMHG_TO_CGS = 1333.223874  # dyn/cm^2 per mmHg


@dataclass
class WindkesselState:
    """Characteristic resistance, peripheral resistance, compliance, and the
    pressure currently stored on the compliance."""

    Rc: float
    Rp: float
    C: float
    P_stored: float = 0.0

    def __post_init__(self):
        if self.Rc <= 0 or self.Rp <= 0 or self.C <= 0:
            raise ContractViolation("Windkessel parameters must be positive")
        if not np.isfinite(self.P_stored):
            raise ContractViolation("stored pressure must be finite")


def advance_windkessel(w, Q, dt):
    """One backward-Euler update; returns (new state, aortic pressure)."""
    if dt <= 0:
        raise ContractViolation("dt must be positive")
    P_new = (w.P_stored + dt * Q / w.C) / (1.0 + dt / (w.Rp * w.C))
    new = WindkesselState(w.Rc, w.Rp, w.C, P_new)
    return new, P_new + Q * w.Rc


@dataclass(frozen=True)
class DrivingWaveform:
    """Periodic ventricular pressure: diastolic baseline with a smooth
    systolic pulse (sin^2 rise and fall over the systolic fraction)."""

    period: float = 0.9
    peak: float = 130.0
    baseline: float = 10.0
    systole_fraction: float = 0.4

    def __post_init__(self):
        if self.period <= 0 or not 0 < self.systole_fraction < 1:
            raise ContractViolation("invalid waveform timing")
        if self.baseline < 0 or self.peak < self.baseline:
            raise ContractViolation("waveform pressures must satisfy 0 <= base <= peak")


def lv_pressure(t, wf):
    """Ventricular driving pressure at time t (periodic, C1, min >= 0)."""
    t = np.asarray(t, dtype=float)
    phase = np.mod(t, wf.period)
    t_sys = wf.systole_fraction * wf.period
    pulse = np.where(
        phase < t_sys,
        np.sin(np.pi * phase / t_sys) ** 2,
        0.0,
    )
    out = wf.baseline + (wf.peak - wf.baseline) * pulse
    return float(out) if out.ndim == 0 else out


@dataclass
class SampledWaveform:
    """Periodic linear interpolation of a sampled (t, p) curve."""

    times: np.ndarray
    pressures: np.ndarray

    @property
    def period(self):
        return float(self.times[-1])

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path) as f:
            header = f.readline()
            if "t" not in header:
                raise ContractViolation(f"unrecognized waveform header: {header!r}")
            for line in f:
                if line.strip():
                    t, p = line.split(",")
                    rows.append((float(t), float(p)))
        arr = np.array(rows)
        return cls(arr[:, 0], arr[:, 1])


def sampled_pressure(t, wf):
    phase = np.mod(t, wf.period)
    return float(np.interp(phase, wf.times, wf.pressures))


def hemodynamic_summary(t, Q, period):
    """Per-cycle flow metrics from a (t, Q) series covering >= 1 period.

    The flow is split pointwise into forward and backward parts before
    trapezoidal integration, so stroke - regurgitant = net exactly.
    Returns a dict with per-cycle lists and whole-series aggregates.
    """
    t = np.asarray(t, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if t.ndim != 1 or t.shape != Q.shape or t.size < 3:
        raise ContractViolation("need matching 1D time and flow arrays")
    if t[-1] - t[0] < period * (1.0 - 1e-9):
        raise ContractViolation("need at least one full period of data")
    n_cycles = int(np.floor((t[-1] - t[0]) / period + 1e-9))
    stroke, regurg, net, peak = [], [], [], []
    for c in range(n_cycles):
        lo = t[0] + c * period
        hi = lo + period
        mask = (t >= lo - 1e-12) & (t <= hi + 1e-12)
        tc, qc = t[mask], Q[mask]
        q_fwd = np.maximum(qc, 0.0)
        q_bwd = np.maximum(-qc, 0.0)
        stroke.append(float(np.trapezoid(q_fwd, tc)))
        regurg.append(float(np.trapezoid(q_bwd, tc)))
        net.append(float(np.trapezoid(qc, tc)))
        peak.append(float(np.max(qc)))
    stroke_mean = float(np.mean(stroke))
    return {
        "cycles": n_cycles,
        "stroke_volume_ml": stroke,
        "regurgitant_volume_ml": regurg,
        "net_volume_ml": net,
        "peak_flow_ml_s": peak,
        "stroke_volume_mean_ml": stroke_mean,
        "cardiac_output_l_min": float(np.mean(net)) / period * 60.0 / 1000.0,
        "regurgitant_fraction": (
            float(np.mean(regurg)) / stroke_mean if stroke_mean > 0 else float("nan")
        ),
    }
