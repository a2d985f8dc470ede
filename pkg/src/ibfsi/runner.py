"""Scene assembly from config files, the run loop, and checkpointing.

Config files are JSON with sections `scene`, `grid`, `fluid`, `solid`,
`leaflets`, `windkessel`, `lv`, `output`, and `run`.  Stress-like solid
parameters (c, beta_s) are given in kPa and converted to CGS internally;
pressures are mmHg, lengths cm, times seconds.

The time series is kept in memory (one row per `timeseries_every` steps)
and rewritten wholesale at flush points, which makes restarted runs
byte-identical to uninterrupted ones.  Checkpoints are npz archives of
the marching state only (no derived caches): velocity and its AB2
history, structure positions, Windkessel pressure, counters, and the
accumulated time-series rows.
"""

from __future__ import annotations

import json
import os
import zipfile

import numpy as np

from .circulation import (
    DrivingWaveform,
    SampledWaveform,
    WindkesselState,
    hemodynamic_summary,
)
from .constitutive import KPA_TO_CGS, ConstitutiveLaw
from .errors import CheckpointError, ConfigError
from .fesolid import FEMesh
from .geometry import (
    BERDAJS_ANGLES,
    ChannelValveSpec,
    LeafletSpec,
    RootSpec,
    TubeSpec,
    make_channel_leaflet_2d,
    make_leaflet_membranes,
    make_root,
    make_tube,
)
from .fiber import TetherSet
from .grid import BoundarySpec, GridSpec, write_snapshot
from .kernels import get_kernel
from .stepper import (
    CirculationCoupling,
    FEBody,
    Scene,
    SimulationState,
    step,
)

CHECKPOINT_VERSION = "ibfsi-checkpoint-1"


# ---------------------------------------------------------------------------
# configuration


class RunConfig:
    """Validated run configuration (see module docstring for the schema)."""

    def __init__(self, raw, base_dir="."):
        self.raw = raw
        self.base_dir = base_dir
        grid = raw.get("grid")
        if not grid:
            raise ConfigError("missing `grid` section")
        try:
            self.grid = GridSpec(
                tuple(grid["dims"]), float(grid["h"]),
                tuple(grid.get("origin", (0.0,) * len(grid["dims"]))),
            )
        except Exception as exc:
            raise ConfigError(f"invalid grid: {exc}")
        fluid = raw.get("fluid", {})
        self.rho = float(fluid.get("rho", 1.0))
        self.mu = float(fluid.get("mu", 0.04))
        self.dt = float(fluid.get("dt", 0.0))
        self.krylov_tol = float(fluid.get("krylov_tol", 1e-9))
        if self.dt <= 0:
            raise ConfigError("fluid.dt must be positive")
        if self.rho <= 0 or self.mu <= 0:
            raise ConfigError("fluid.rho and fluid.mu must be positive")
        run = raw.get("run", {})
        self.kernel = get_kernel(raw.get("kernel", "ib4"))
        self.cycles = run.get("cycles")
        self.steps = run.get("steps")
        if self.cycles is None and self.steps is None:
            raise ConfigError("run section needs `steps` or `cycles`")
        if self.cycles is not None and int(self.cycles) < 1:
            raise ConfigError("run.cycles must be >= 1")
        if self.steps is not None and int(self.steps) < 1:
            raise ConfigError("run.steps must be >= 1")
        out = raw.get("output", {})
        self.timeseries_every = int(out.get("timeseries_every", 1))
        self.snapshot_every = int(out.get("snapshot_every", 0))
        self.checkpoint_every = int(out.get("checkpoint_every", 0))
        self.flush_every = int(out.get("flush_every", 1000))
        self.probes = out.get("probes", [])
        scene = raw.get("scene", {})
        self.scene_type = scene.get("type", "quiescent")
        wf_csv = raw.get("lv", {}).get("waveform_csv")
        if wf_csv is not None:
            path = os.path.join(self.base_dir, wf_csv)
            if not os.path.exists(path):
                raise ConfigError(f"waveform file not found: {path}")

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as f:
                raw = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}")
        return cls(raw, base_dir=os.path.dirname(os.path.abspath(path)))

    def total_steps(self):
        if self.steps is not None:
            return int(self.steps)
        period = float(self.raw.get("lv", {}).get("period_s", 0.9))
        return int(round(int(self.cycles) * period / self.dt))

    def period(self):
        return float(self.raw.get("lv", {}).get("period_s", 0.9))


def _law_from_config(section):
    c = float(section.get("c_kPa", 12.8)) * KPA_TO_CGS
    b = float(section.get("b", 6.9))
    beta = float(section.get("beta_s_kPa", 2.5e4)) * KPA_TO_CGS
    return ConstitutiveLaw(c=c, b=b, beta_s=beta)


def _waveform_from_config(cfg):
    lv = cfg.raw.get("lv", {})
    csv = lv.get("waveform_csv")
    if csv is not None:
        return SampledWaveform.from_csv(os.path.join(cfg.base_dir, csv))
    return DrivingWaveform(
        period=float(lv.get("period_s", 0.9)),
        peak=float(lv.get("peak_mmHg", 130.0)),
        baseline=float(lv.get("baseline_mmHg", 10.0)),
        systole_fraction=float(lv.get("systole_fraction", 0.4)),
    )


def _windkessel_from_config(cfg):
    wk = cfg.raw.get("windkessel", {})
    return WindkesselState(
        Rc=float(wk.get("Rc", 0.05)),
        Rp=float(wk.get("Rp", 1.0)),
        C=float(wk.get("C", 1.5)),
        P_stored=float(wk.get("P0", 0.0)),
    )


def build_scene(cfg):
    """Construct the Scene named by the config's scene.type."""
    g = cfg.grid
    params = cfg.raw.get("scene", {})
    kind = cfg.scene_type
    if kind == "quiescent":
        return Scene(grid=g, bc=BoundarySpec.no_slip(g.dim), rho=cfg.rho, mu=cfg.mu,
                     kernel=cfg.kernel)
    if kind == "channel_valve_2d":
        leaf = cfg.raw.get("leaflets", {})
        spec = ChannelValveSpec(
            length=g.extent(0), height=g.extent(1),
            leaflet_x=float(leaf.get("x", 0.3 * g.extent(0))),
            leaflet_length=float(leaf.get("length", 0.55 * g.extent(1))),
            n_nodes=int(leaf.get("n_nodes", 33)),
            k_stretch=float(leaf.get("k_stretch", 4.0e5)),
            c_bend=float(leaf.get("c_bend", 40.0)),
            k_tether=float(leaf.get("k_tether", 4.0e6)),
            tilt_deg=float(leaf.get("tilt_deg", 12.0)),
            two_leaflets=bool(leaf.get("two_leaflets", True)),
            wall_margin=float(leaf.get("wall_margin", 2.2 * g.h)),
            seat_upstream=float(leaf.get("seat_upstream", 0.6)),
            seat_downstream=float(leaf.get("seat_downstream", 0.3)),
            seat_spacing=float(leaf.get("seat_spacing", 0.5 * g.h)),
            anchor_stagger=float(leaf.get("anchor_stagger", 0.0)),
            post_offset=float(leaf.get("post_offset", 0.0)),
            post_half_span=float(leaf.get("post_half_span", 0.35)),
            throat_half=float(leaf.get("throat_half", 0.0)),
            sinus_length=float(leaf.get("sinus_length", 0.55)),
            sinus_depth=float(leaf.get("sinus_depth", 0.25)),
        )
        walls, leaflets, tethers = make_channel_leaflet_2d(spec)
        circ = CirculationCoupling(_waveform_from_config(cfg), _windkessel_from_config(cfg))
        return Scene(
            grid=g, bc=BoundarySpec.channel(g.dim), rho=cfg.rho, mu=cfg.mu,
            kernel=cfg.kernel, fiber_meshes=walls + leaflets, tethers=tethers,
            circulation=circ,
        )
    if kind == "pressurized_ring_2d":
        solid = cfg.raw.get("solid", {})
        law = _law_from_config(solid)
        r_in = float(solid.get("inner_radius", 0.6))
        thick = float(solid.get("thickness", 0.05))
        stretch = float(solid.get("stretch", 1.10))
        center = np.array(solid.get("center", (0.5 * g.extent(0), 0.5 * g.extent(1))))
        mesh = make_tube(TubeSpec(
            inner_radius=r_in, thickness=thick,
            n_radial=int(solid.get("n_radial", 2)),
            n_theta=int(solid.get("n_theta", 48)),
            center=tuple(center),
        ))
        rel = mesh.nodes - center
        r_ref = np.linalg.norm(rel, axis=1)
        r_cur = np.sqrt(r_ref ** 2 + r_in ** 2 * (stretch ** 2 - 1.0))
        mesh.displace(center + rel * (r_cur / r_ref)[:, None])
        return Scene(grid=g, bc=BoundarySpec.no_slip(g.dim), rho=cfg.rho, mu=cfg.mu,
                     kernel=cfg.kernel, fe_bodies=[FEBody(mesh, law)])
    if kind == "root_3d":
        solid = cfg.raw.get("solid", {})
        law = _law_from_config(solid)
        root = RootSpec(
            aortic_diameter=float(solid.get("aortic_diameter", 3.0)),
            sinus_diameter=float(solid.get("sinus_diameter", 3.5)),
            thickness=float(solid.get("thickness", 0.2)),
            length=float(solid.get("length", 7.0)),
            sinus_angles=tuple(solid.get(
                "sinus_angles",
                (120.0, 120.0, 120.0) if solid.get("symmetric", True)
                else BERDAJS_ANGLES,
            )),
            symmetric=bool(solid.get("symmetric", True)),
            n_radial=int(solid.get("n_radial", 1)),
            n_theta=int(solid.get("n_theta", 12)),
            n_axial=int(solid.get("n_axial", 6)),
            center=tuple(solid.get("center", (0.0, 0.0, 0.0))),
        )
        mesh = make_root(root)
        tags = mesh.tags
        # orient the vessel along x (the duct axis of the box): (x,y,z) <- (z,x,y)
        offset = np.array(solid.get("offset", (0.0, 0.0, 0.0)))
        mesh = FEMesh(mesh.nodes[:, [2, 0, 1]] + offset, mesh.elems)
        mesh.tags = tags
        fiber_meshes, tethers = [], []
        leaf_cfg = cfg.raw.get("leaflets", {})
        if leaf_cfg.get("enabled", True):
            spec = LeafletSpec(
                root=root,
                n_span=int(leaf_cfg.get("n_span", 9)),
                n_radial=int(leaf_cfg.get("n_radial", 5)),
                coapt_radius=float(leaf_cfg.get("coapt_radius", 0.3)),
                coapt_height=float(leaf_cfg.get("coapt_height", 0.97)),
                k_commissural=float(leaf_cfg.get("k_commissural", 1.0e4)),
                stiffness_ratio=float(leaf_cfg.get("stiffness_ratio", 10.0)),
                c_bend=float(leaf_cfg.get("c_bend", 1.0)),
            )
            k_tether = float(leaf_cfg.get("k_tether", 1e5))
            # generator order alternates (commissural, radial) per sector;
            # the attachment curve is row (0, :) of the commissural lattice
            # and column (:, 0) of the radial lattice
            for idx, m in enumerate(make_leaflet_membranes(spec)):
                m.x = m.x[:, :, [2, 0, 1]] + offset
                m.rest = m.x.copy()
                fiber_meshes.append(m)
                nq, nr = m.shape
                if idx % 2 == 0:
                    ids = [(0, j) for j in range(nr)]
                else:
                    ids = [(i, 0) for i in range(nq)]
                targets = np.array([m.x[i, j] for i, j in ids])
                tethers.append(TetherSet(ids, targets, k_tether))
        # semi-rigid outflow tract: anchor the end rings of the vessel
        anchor_ids = np.concatenate([tags["end_lo"], tags["end_hi"]])
        anchor_k = float(solid.get("anchor_k", 1.0e5))
        circ = CirculationCoupling(_waveform_from_config(cfg), _windkessel_from_config(cfg))
        return Scene(
            grid=g, bc=BoundarySpec.channel(g.dim), rho=cfg.rho, mu=cfg.mu,
            kernel=cfg.kernel, fiber_meshes=fiber_meshes, tethers=tethers,
            fe_bodies=[FEBody(mesh, law, anchor_ids=anchor_ids, anchor_k=anchor_k)],
            circulation=circ,
        )
    raise ConfigError(f"unknown scene type {kind!r}")


# ---------------------------------------------------------------------------
# probes


def _probe_columns(scene, probes):
    cols = []
    for p in probes:
        name = p["name"]
        kind = p.get("kind", "fiber")
        if kind in ("fiber", "solid"):
            for c in "xyz"[: scene.grid.dim]:
                cols.append(f"probe_{name}_d{c}")
        else:
            for c in "xyz"[: scene.grid.dim]:
                cols.append(f"probe_{name}_u{c}")
    return cols


def _probe_values(scene, state, probes, initials):
    vals = []
    for p, init in zip(probes, initials):
        kind = p.get("kind", "fiber")
        if kind == "fiber":
            m = scene.fiber_meshes[int(p.get("mesh", 0))]
            i, j = p["node"]
            vals.extend((m.x[int(i), int(j)] - init).tolist())
        elif kind == "solid":
            body = scene.fe_bodies[int(p.get("mesh", 0))]
            vals.extend((body.mesh.current[int(p["node"])] - init).tolist())
        else:
            from .transfer import interpolate_faces

            u = interpolate_faces(
                state.u, np.asarray([p["point"]], dtype=float), scene.grid,
                scene.bc, scene.kernel,
            )
            vals.extend(u[0].tolist())
    return vals


def _probe_initials(scene, probes):
    out = []
    for p in probes:
        kind = p.get("kind", "fiber")
        if kind == "fiber":
            m = scene.fiber_meshes[int(p.get("mesh", 0))]
            i, j = p["node"]
            out.append(m.x[int(i), int(j)].copy())
        elif kind == "solid":
            body = scene.fe_bodies[int(p.get("mesh", 0))]
            out.append(body.mesh.current[int(p["node"])].copy())
        else:
            out.append(None)
    return out


# ---------------------------------------------------------------------------
# checkpointing


def checkpoint(state, rows, cfg, path):
    """Write the marching state (and time-series rows) to an npz archive."""
    payload = {
        "version": np.array(CHECKPOINT_VERSION),
        "config_json": np.array(json.dumps(cfg.raw, sort_keys=True)),
        "t": np.array(state.t),
        "n": np.array(state.n),
        "q_outlet": np.array(state.q_outlet),
        "stroke_acc": np.array(getattr(state, "stroke_acc", 0.0)),
        "rows": np.array(rows, dtype=float) if rows else np.zeros((0,)),
    }
    for d, part in enumerate(state.u.parts):
        payload[f"u{d}"] = part
    if state.u_prev is not None:
        for d, part in enumerate(state.u_prev.parts):
            payload[f"uprev{d}"] = part
    for i, m in enumerate(state.scene.fiber_meshes):
        payload[f"fiber{i}"] = m.x
    for i, body in enumerate(state.scene.fe_bodies):
        payload[f"solid{i}"] = body.mesh.current
    if state.scene.circulation is not None:
        payload["wk_P"] = np.array(state.scene.circulation.windkessel.P_stored)
    tmp = f"{path}.tmp.npz"
    np.savez(tmp, **payload)
    os.replace(tmp, path)


def restore(path, cfg=None):
    """Rebuild a SimulationState (plus accumulated rows) from a checkpoint."""
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}")
    if "version" not in data or str(data["version"]) != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version mismatch: {data.get('version', 'missing')}"
        )
    raw = json.loads(str(data["config_json"]))
    if cfg is None:
        cfg = RunConfig(raw)
    scene = build_scene(cfg)
    state = SimulationState(scene, cfg.dt, tol=cfg.krylov_tol)
    from .grid import StaggeredField

    state.u = StaggeredField(
        [data[f"u{d}"] for d in range(scene.grid.dim)], scene.grid
    )
    if "uprev0" in data:
        state.u_prev = StaggeredField(
            [data[f"uprev{d}"] for d in range(scene.grid.dim)], scene.grid
        )
    for i, m in enumerate(scene.fiber_meshes):
        m.x = data[f"fiber{i}"]
    for i, body in enumerate(scene.fe_bodies):
        body.mesh.current = data[f"solid{i}"]
    if scene.circulation is not None and "wk_P" in data:
        wk = scene.circulation.windkessel
        scene.circulation.windkessel = WindkesselState(
            wk.Rc, wk.Rp, wk.C, float(data["wk_P"])
        )
    state.t = float(data["t"])
    state.n = int(data["n"])
    state.q_outlet = float(data["q_outlet"])
    state.stroke_acc = float(data["stroke_acc"])
    rows = [list(r) for r in data["rows"]] if data["rows"].size else []
    return state, rows, cfg


# ---------------------------------------------------------------------------
# the run loop


def _format_row(row):
    return ",".join(repr(float(v)) for v in row)


def _write_timeseries(path, header, rows):
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(_format_row(row) + "\n")


def run(cfg, out_dir, restore_path=None):
    """Execute a configured run; writes timeseries.csv and friends."""
    os.makedirs(out_dir, exist_ok=True)
    if restore_path is not None:
        state, rows, cfg = restore(restore_path, cfg)
        scene = state.scene
    else:
        scene = build_scene(cfg)
        state = SimulationState(scene, cfg.dt, tol=cfg.krylov_tol)
        state.stroke_acc = 0.0
        rows = []
    probes = cfg.probes
    initials = _probe_initials(scene, probes)
    header = ["t", "p_lv_mmHg", "p_ao_mmHg", "q_valve_ml_s", "stroke_volume_ml"]
    header += _probe_columns(scene, probes)
    total = cfg.total_steps()
    ts_path = os.path.join(out_dir, "timeseries.csv")
    snap_dir = os.path.join(out_dir, "snapshots")
    x_open = not scene.bc.is_periodic(0)
    while state.n < total:
        step(state)
        q = state.q_outlet if scene.circulation is not None else (
            state.solver.outflow_flux(state.u, axis=0, hi=True) if x_open else 0.0
        )
        state.stroke_acc += max(q, 0.0) * cfg.dt
        if state.n % cfg.timeseries_every == 0:
            row = [state.t, state.p_lv, state.p_ao, q, state.stroke_acc]
            row += _probe_values(scene, state, probes, initials)
            rows.append(row)
        if cfg.snapshot_every and state.n % cfg.snapshot_every == 0:
            os.makedirs(snap_dir, exist_ok=True)
            names = "uvw"[: scene.grid.dim]
            for d, nm in enumerate(names):
                write_snapshot(
                    os.path.join(snap_dir, f"step{state.n:07d}_{nm}.txt"),
                    state.u.parts[d], scene.grid, nm,
                )
            write_snapshot(
                os.path.join(snap_dir, f"step{state.n:07d}_p.txt"),
                state.p, scene.grid, "cell",
            )
        if cfg.checkpoint_every and state.n % cfg.checkpoint_every == 0:
            checkpoint(state, rows, cfg, os.path.join(out_dir, "checkpoint.npz"))
        if state.n % cfg.flush_every == 0:
            _write_timeseries(ts_path, header, rows)
    _write_timeseries(ts_path, header, rows)
    if cfg.checkpoint_every:
        checkpoint(state, rows, cfg, os.path.join(out_dir, "checkpoint.npz"))
    if scene.circulation is not None and rows:
        arr = np.array(rows)
        period = cfg.period()
        if arr[-1, 0] - arr[0, 0] >= period:
            summary = hemodynamic_summary(arr[:, 0], arr[:, 3], period)
            with open(os.path.join(out_dir, "summary.csv"), "w") as f:
                keys = sorted(summary)
                f.write(",".join(keys) + "\n")
                f.write(",".join(str(summary[k]) for k in keys) + "\n")
    return state, rows
