import numpy as np
import pytest

from ibfsi.circulation import (
    DrivingWaveform,
    SampledWaveform,
    WindkesselState,
    advance_windkessel,
    hemodynamic_summary,
    lv_pressure,
    sampled_pressure,
)
from ibfsi.errors import ContractViolation


def test_windkessel_zero_flow_decay():
    w = WindkesselState(Rc=0.05, Rp=1.0, C=1.0, P_stored=100.0)
    # discrete factor 1/(1 + dt/(Rp C)) per step
    w1, p_ao = advance_windkessel(w, 0.0, 0.1)
    assert w1.P_stored == pytest.approx(100.0 / 1.1, rel=1e-14)
    assert p_ao == pytest.approx(w1.P_stored)
    # over time the discrete decay tracks exp(-t/(Rp C)) to O(dt)
    w = WindkesselState(Rc=0.05, Rp=2.0, C=0.5, P_stored=80.0)
    dt, t_final = 1e-4, 0.5
    state = w
    for _ in range(int(t_final / dt)):
        state, _ = advance_windkessel(state, 0.0, dt)
    assert state.P_stored == pytest.approx(80.0 * np.exp(-t_final / 1.0), rel=1e-3)


def test_windkessel_constant_flow_equilibrium():
    w = WindkesselState(Rc=0.07, Rp=1.3, C=1.7, P_stored=0.0)
    Q = 50.0
    for _ in range(4000):
        w, p_ao = advance_windkessel(w, Q, 0.01)
    assert p_ao == pytest.approx(Q * (w.Rc + w.Rp), rel=1e-6)


def test_windkessel_hand_computed_step():
    w = WindkesselState(Rc=0.1, Rp=10.0, C=0.1, P_stored=100.0)  # Rp C = 1 s
    w1, _ = advance_windkessel(w, 0.0, 0.1)
    assert w1.P_stored == pytest.approx(100.0 / 1.1, abs=1e-12)


def test_windkessel_unconditionally_stable():
    for dt in (1e-6, 0.1, 10.0, 1e4):
        factor = 1.0 / (1.0 + dt / (1.0 * 1.0))
        assert abs(factor) < 1.0


def test_lv_waveform_periodic_and_bounded():
    wf = DrivingWaveform(period=0.9, peak=130.0, baseline=10.0)
    ts = np.linspace(0.0, 0.9, 500)
    for t in ts[::50]:
        assert lv_pressure(t, wf) == pytest.approx(lv_pressure(t + 0.9, wf), abs=1e-12)
    vals = np.array([lv_pressure(t, wf) for t in ts])
    assert vals.min() >= 0.0
    assert vals.min() == pytest.approx(10.0)
    # configured peak is attained at mid-systole
    t_peak = 0.5 * wf.systole_fraction * wf.period
    assert lv_pressure(t_peak, wf) == pytest.approx(130.0, abs=1e-12)
    assert vals.max() <= 130.0 + 1e-12


def test_sampled_waveform_round_trip(tmp_path):
    path = tmp_path / "wave.csv"
    path.write_text("t,p_mmHg\n0.0,10\n0.2,80\n0.5,40\n0.8,10\n")
    wf = SampledWaveform.from_csv(path)
    assert sampled_pressure(0.2, wf) == pytest.approx(80.0)
    assert sampled_pressure(0.2 + wf.period, wf) == pytest.approx(80.0)
    assert sampled_pressure(0.35, wf) == pytest.approx(60.0)


def test_summary_constant_flow():
    t = np.linspace(0.0, 1.0, 201)
    Q = np.full_like(t, 100.0)
    s = hemodynamic_summary(t, Q, period=1.0)
    assert s["stroke_volume_ml"][0] == pytest.approx(100.0, rel=1e-12)
    assert s["regurgitant_volume_ml"][0] == 0.0
    assert s["cardiac_output_l_min"] == pytest.approx(6.0, rel=1e-12)


def test_summary_sine_wave_forward_backward():
    omega = 2 * np.pi
    t = np.linspace(0.0, 1.0, 20001)
    Q = np.sin(omega * t)
    s = hemodynamic_summary(t, Q, period=1.0)
    assert s["stroke_volume_ml"][0] == pytest.approx(2.0 / omega, rel=1e-6)
    assert s["regurgitant_volume_ml"][0] == pytest.approx(2.0 / omega, rel=1e-6)
    assert abs(s["net_volume_ml"][0]) < 1e-12


def test_summary_matches_trapezoid_oracle():
    rng = np.random.default_rng(3)
    t = np.sort(rng.uniform(0.0, 2.0, 400))
    t[0], t[-1] = 0.0, 2.0
    Q = rng.standard_normal(t.size)
    s = hemodynamic_summary(t, Q, period=1.0)
    for c in range(2):
        mask = (t >= c * 1.0 - 1e-12) & (t <= (c + 1) * 1.0 + 1e-12)
        fwd = np.trapezoid(np.maximum(Q[mask], 0.0), t[mask])
        bwd = np.trapezoid(np.maximum(-Q[mask], 0.0), t[mask])
        assert s["stroke_volume_ml"][c] == pytest.approx(fwd, abs=1e-10)
        assert s["regurgitant_volume_ml"][c] == pytest.approx(bwd, abs=1e-10)
        # bookkeeping identity
        assert s["stroke_volume_ml"][c] - s["regurgitant_volume_ml"][c] == pytest.approx(
            s["net_volume_ml"][c], abs=1e-12
        )


def test_summary_requires_full_period():
    t = np.linspace(0.0, 0.5, 50)
    with pytest.raises(ContractViolation):
        hemodynamic_summary(t, np.ones_like(t), period=1.0)


def test_state_validation():
    with pytest.raises(ContractViolation):
        WindkesselState(Rc=-1.0, Rp=1.0, C=1.0)
    with pytest.raises(ContractViolation):
        DrivingWaveform(period=0.9, peak=5.0, baseline=10.0)
