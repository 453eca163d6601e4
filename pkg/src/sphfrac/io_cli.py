"""Config parsing, snapshot/probe/checkpoint output and the CLI runner.

Snapshots are legacy-ASCII VTK polydata point clouds (one file per
phase) so any common viewer can load them; probes are plain CSV with a
fixed numeric format, making repeat runs byte-identical; checkpoints
are compressed npz dumps that, together with the deterministic scene
builders, restore a run mid-flight.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, fields

import numpy as np
import yaml

from .integrator import StepConfig, run
from .materials import MaterialParams
from .scenes import (SCENE_NAMES, SceneSpec, build_scene, evaluate_probes,
                     resolve, scene_defaults)
from .solid import von_mises

CHECKPOINT_VERSION = 1

# CSV column units, keyed by channel name prefix match.
_UNITS = {
    "time": "s", "tau": "-", "toe_x": "m", "toe_x_over_H": "-",
    "disp_x": "m", "disp_y": "m", "disp_z": "m",
    "tip_x": "m", "tip_y": "m", "tip_z": "m", "tip_speed": "m/s",
    "szz_upstream": "Pa", "szz_downstream": "Pa",
    "max_damage": "-", "n_failed": "-", "n_fragments": "-",
    "frag_min_z": "m", "frag_max_x": "m", "upper_detached": "-",
}


class ConfigError(ValueError):
    """Raised for malformed or contradictory run configuration."""


@dataclass
class RunConfig:
    spec: SceneSpec
    out_dir: str = "out"
    snapshot_every: int = 1000
    probe_every: int = 20
    checkpoint_every: int = 0
    cfl: float = 0.25
    deterministic: bool = True

    def __post_init__(self):
        if self.snapshot_every < 1:
            raise ConfigError("snapshot_every must be >= 1")
        if self.probe_every < 1:
            raise ConfigError("probe_every must be >= 1")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0 (0 = off)")
        if not 0.0 < self.cfl <= 0.5:
            raise ConfigError(f"cfl must lie in (0, 0.5], got {self.cfl}")


_MAT_KEYS = {f.name for f in fields(MaterialParams)}
_SCENE_KEYS = {"name", "dp", "h_ratio", "dt", "t_end", "scale"}
_COUPLING_KEYS = {"cfl"}
_OUTPUT_KEYS = {"dir", "snapshot_every", "probe_every", "checkpoint_every",
                "deterministic"}


def _reject_unknown(section, given, allowed):
    bad = sorted(set(given) - allowed)
    if bad:
        raise ConfigError(
            f"unknown key(s) {bad} in section '{section}'; "
            f"allowed: {sorted(allowed)}"
        )


def parse_config(text):
    """Parse a YAML run document into a RunConfig.

    Sections: scene (name plus discretization), fluid and solid
    (material overrides), coupling, output. Unknown sections or keys
    are rejected rather than ignored, so typos cannot silently fall
    back to defaults.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"config syntax error{where}: {e}") from e
    if doc is None:
        raise ConfigError("empty config document")
    if not isinstance(doc, dict):
        raise ConfigError(f"config root must be a mapping, got {type(doc).__name__}")
    _reject_unknown("<root>", doc, {"scene", "fluid", "solid", "coupling",
                                    "output"})

    scene = doc.get("scene") or {}
    if not isinstance(scene, dict) or "name" not in scene:
        raise ConfigError("config needs scene.name")
    _reject_unknown("scene", scene, _SCENE_KEYS)
    name = scene["name"]
    if name not in SCENE_NAMES:
        raise ConfigError(f"unknown scene {name!r}; choose from {SCENE_NAMES}")
    for key in ("dp", "t_end"):
        v = scene.get(key)
        if v is not None and (not isinstance(v, (int, float)) or v <= 0):
            raise ConfigError(f"scene.{key} must be positive, got {v!r}")
    dt = scene.get("dt")
    if dt is not None and not (dt == "cfl" or (isinstance(dt, (int, float))
                                               and dt > 0)):
        raise ConfigError(f"scene.dt must be positive or 'cfl', got {dt!r}")

    overrides = {}
    for sec in ("fluid", "solid"):
        over = doc.get(sec) or {}
        _reject_unknown(sec, over, _MAT_KEYS)
        if over:
            overrides[sec] = dict(over)
    if "scale" in scene:
        overrides["scale"] = float(scene["scale"])

    spec = SceneSpec(name=name, dp=scene.get("dp"),
                     h_ratio=scene.get("h_ratio"), dt=dt,
                     t_end=scene.get("t_end"), overrides=overrides)

    coupling = doc.get("coupling") or {}
    _reject_unknown("coupling", coupling, _COUPLING_KEYS)
    output = doc.get("output") or {}
    _reject_unknown("output", output, _OUTPUT_KEYS)
    return RunConfig(
        spec=spec,
        out_dir=output.get("dir", "out"),
        snapshot_every=int(output.get("snapshot_every", 1000)),
        probe_every=int(output.get("probe_every", 20)),
        checkpoint_every=int(output.get("checkpoint_every", 0)),
        cfl=float(coupling.get("cfl", 0.25)),
        deterministic=bool(output.get("deterministic", True)),
    )


def _fmt(x):
    return "%.17g" % x


def _write_vtk(path, store, solid_extra):
    n = store.n
    lines = [
        "# vtk DataFile Version 3.0",
        f"sphfrac {store.phase.name.lower()} snapshot",
        "ASCII",
        "DATASET POLYDATA",
        f"POINTS {n} double",
    ]
    lines.extend(" ".join(_fmt(c) for c in row) for row in store.pos)
    lines.append(f"VERTICES {n} {2 * n}")
    lines.extend(f"1 {i}" for i in range(n))
    lines.append(f"POINT_DATA {n}")
    vmag = np.sqrt((store.vel * store.vel).sum(axis=1))
    channels = [
        ("velocity_magnitude", "double", vmag),
        ("pressure", "double", store.p),
        ("phase_id", "int", np.full(n, int(store.phase))),
    ]
    if solid_extra:
        channels += [
            ("von_mises", "double", von_mises(store.S)),
            ("sigma_zz", "double", store.S[:, 2] - store.p),
            ("damage", "double", store.damage),
        ]
    for cname, ctype, arr in channels:
        lines.append(f"SCALARS {cname} {ctype} 1")
        lines.append("LOOKUP_TABLE default")
        if ctype == "int":
            lines.extend(str(int(v)) for v in arr)
        else:
            lines.extend(_fmt(v) for v in arr)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_snapshot(state, out_dir):
    """Write one VTK point cloud per non-empty phase; update the manifest.

    Returns the manifest entry. Empty phases are recorded under
    "missing" so post-processing can tell absence from I/O failure.
    """
    os.makedirs(out_dir, exist_ok=True)
    tag = f"{state.step_count:08d}"
    entry = {"step": state.step_count, "time": state.time, "files": {},
             "missing": []}
    for pname, store in (("fluid", state.fluid), ("solid", state.solid),
                         ("wall", state.wall)):
        if store is None or store.n == 0:
            entry["missing"].append(pname)
            continue
        fname = f"{pname}_{tag}.vtk"
        _write_vtk(os.path.join(out_dir, fname), store, pname == "solid")
        entry["files"][pname] = fname
    mpath = os.path.join(out_dir, "manifest.json")
    manifest = {"format": "vtk-ascii-polydata", "snapshots": []}
    if os.path.exists(mpath):
        with open(mpath) as fh:
            manifest = json.load(fh)
    manifest["snapshots"] = [s for s in manifest["snapshots"]
                             if s["step"] != state.step_count]
    manifest["snapshots"].append(entry)
    manifest["snapshots"].sort(key=lambda s: s["step"])
    with open(mpath, "w") as fh:
        json.dump(manifest, fh, indent=1)
    return entry


def read_snapshot(path):
    """Parse a snapshot written by write_snapshot back into arrays."""
    out = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    i = lines.index(next(l for l in lines if l.startswith("POINTS")))
    n = int(lines[i].split()[1])
    out["points"] = np.array(
        [[float(c) for c in lines[i + 1 + k].split()] for k in range(n)]
    )
    j = i + 1 + n
    while j < len(lines):
        if lines[j].startswith("SCALARS"):
            cname = lines[j].split()[1]
            vals = [float(lines[j + 2 + k]) for k in range(n)]
            out[cname] = np.array(vals)
            j += 2 + n
        else:
            j += 1
    return out


def write_probe_series(records, path):
    """Dump probe records as CSV: header names channels with units."""
    if not records:
        raise ValueError("no probe records to write")
    times = [r.time for r in records]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("probe times must increase strictly")
    names = list(records[0].values)
    header = ",".join(
        ["time [s]"] + [f"{c} [{_UNITS.get(c, '?')}]" for c in names]
    )
    rows = [header]
    for r in records:
        cells = [f"{r.time:.10e}"] + [f"{r.values[c]:.10e}" for c in names]
        rows.append(",".join(cells))
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
    return path


def read_probe_series(path):
    """Inverse of write_probe_series: dict of channel name -> array."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    names = [h.split(" [")[0] for h in header]
    return {name: data[:, k] for k, name in enumerate(names)}


def _spec_json(spec):
    d = {"name": spec.name, "dp": spec.dp, "h_ratio": spec.h_ratio,
         "dt": "cfl" if spec.dt is None else spec.dt, "t_end": spec.t_end,
         "overrides": spec.overrides}
    return json.dumps(d)


def save_checkpoint(state, spec, path):
    """Full-state binary dump; spec travels along so a load can rebuild
    the static scene (walls, springs layout) deterministically."""
    arrays = {
        "version": np.int64(CHECKPOINT_VERSION),
        "spec_json": np.array(_spec_json(resolve(spec))),
        "time": np.float64(state.time),
        "step_count": np.int64(state.step_count),
        "dt_last": np.float64(state.dt_last),
        "load_ramp": np.float64(state.load_ramp),
    }
    for pname, store in (("fluid", state.fluid), ("solid", state.solid)):
        if store is None:
            continue
        arrays[f"{pname}_pos"] = store.pos
        arrays[f"{pname}_vel"] = store.vel
        arrays[f"{pname}_rho"] = store.rho
        arrays[f"{pname}_p"] = store.p
        if pname == "solid":
            arrays["solid_S"] = store.S
            arrays["solid_eps"] = store.eps
            arrays["solid_damage"] = store.damage
    sp = state.springs
    if sp is not None:
        arrays["springs_f"] = sp.f
        arrays["springs_fail_step"] = sp.fail_step
        arrays["springs_fail_time"] = sp.fail_time
        arrays["springs_failed_count"] = sp.failed_count
        arrays["springs_first_failure"] = np.float64(sp.first_failure_time)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    np.savez_compressed(path, **arrays)
    return path


def load_checkpoint(path):
    """Rebuild the scene and overlay the saved dynamic fields.

    Returns (state, spec). Relies on builder determinism: particle
    ordering and spring layout are reproduced, so only time-evolved
    arrays need restoring.
    """
    data = np.load(path)
    if int(data["version"]) != CHECKPOINT_VERSION:
        raise ValueError(
            f"checkpoint version {int(data['version'])} not supported"
        )
    d = json.loads(data["spec_json"].item())
    spec = SceneSpec(name=d["name"], dp=d["dp"], h_ratio=d["h_ratio"],
                     dt=d["dt"], t_end=d["t_end"], overrides=d["overrides"])
    state = build_scene(spec)
    for pname, store in (("fluid", state.fluid), ("solid", state.solid)):
        if store is None:
            continue
        if store.n != data[f"{pname}_pos"].shape[0]:
            raise ValueError(f"checkpoint {pname} count mismatch")
        store.pos[:] = data[f"{pname}_pos"]
        store.vel[:] = data[f"{pname}_vel"]
        store.rho[:] = data[f"{pname}_rho"]
        store.p[:] = data[f"{pname}_p"]
        if pname == "solid":
            store.S[:] = data["solid_S"]
            store.eps[:] = data["solid_eps"]
            store.damage[:] = data["solid_damage"]
    if state.springs is not None:
        sp = state.springs
        sp.f[:] = data["springs_f"]
        sp.fail_step[:] = data["springs_fail_step"]
        sp.fail_time[:] = data["springs_fail_time"]
        sp.failed_count[:] = data["springs_failed_count"]
        sp.first_failure_time = float(data["springs_first_failure"])
    state.time = float(data["time"])
    state.step_count = int(data["step_count"])
    state.dt_last = float(data["dt_last"])
    state.load_ramp = float(data["load_ramp"])
    return state, resolve(spec)


def run_simulation(cfg, log=None):
    """Execute a configured run; returns (state, probe records).

    Probes sample at fixed step cadence starting with t = 0; snapshots
    at their own cadence plus start and end; a final checkpoint is
    always written so fracture chronology survives the run.
    """
    t_wall = time.perf_counter()
    spec = resolve(cfg.spec)
    state = build_scene(spec)
    os.makedirs(cfg.out_dir, exist_ok=True)
    records = [evaluate_probes(state, spec)]
    write_snapshot(state, cfg.out_dir)
    stepcfg = StepConfig(dt=spec.dt, cfl_number=cfg.cfl, t_end=spec.t_end)

    def on_step(st):
        k = st.step_count
        if k % cfg.probe_every == 0 or st.time >= spec.t_end - 1e-15:
            records.append(evaluate_probes(st, spec))
            if log is not None:
                dmax = (float(st.solid.damage.max())
                        if st.solid is not None and st.solid.n else 0.0)
                log(f"step {k} time {st.time:.6e} "
                    f"vmax {st.max_speed():.3e} dmax {dmax:.3f}")
        if k % cfg.snapshot_every == 0:
            write_snapshot(st, cfg.out_dir)
        if cfg.checkpoint_every and k % cfg.checkpoint_every == 0:
            save_checkpoint(st, spec,
                            os.path.join(cfg.out_dir, f"checkpoint_{k:08d}.npz"))

    run(state, stepcfg, on_step=on_step)
    if records[-1].time < state.time:
        records.append(evaluate_probes(state, spec))
    write_snapshot(state, cfg.out_dir)
    write_probe_series(records, os.path.join(cfg.out_dir, "probes.csv"))
    save_checkpoint(state, spec, os.path.join(cfg.out_dir, "checkpoint.npz"))
    with open(os.path.join(cfg.out_dir, "meta.json"), "w") as fh:
        json.dump({"spec": json.loads(_spec_json(spec)),
                   "steps": state.step_count, "t_final": state.time,
                   "cfl": cfg.cfl,
                   "elapsed_s": time.perf_counter() - t_wall}, fh, indent=1)
    return state, records


def _build_parser():
    p = argparse.ArgumentParser(
        prog="sphfrac",
        description="Coupled WCSPH fluid / pseudo-spring solid simulator",
    )
    sub = p.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run a scene or a YAML config")
    runp.add_argument("target", help="scene name or path to config file")
    runp.add_argument("--dp", type=float)
    runp.add_argument("--h-ratio", type=float)
    runp.add_argument("--dt", help="seconds, or 'cfl' for the adaptive step")
    runp.add_argument("--t-end", type=float)
    runp.add_argument("--out", default=None)
    runp.add_argument("--snapshot-every", type=int, default=None)
    runp.add_argument("--probe-every", type=int, default=None)
    runp.add_argument("--checkpoint-every", type=int, default=None)
    runp.add_argument("--cfl", type=float, default=None)
    sub.add_parser("list-scenes", help="print available scenes")
    valp = sub.add_parser("validate", help="check a config without running")
    valp.add_argument("config")
    return p


def _load_target(args):
    if os.path.exists(args.target):
        with open(args.target) as fh:
            cfg = parse_config(fh.read())
    else:
        if args.target not in SCENE_NAMES:
            raise ConfigError(
                f"unknown scene or missing config file {args.target!r}"
            )
        cfg = RunConfig(spec=SceneSpec(name=args.target))
    spec = cfg.spec
    dt = spec.dt
    if args.dt is not None:
        dt = args.dt if args.dt == "cfl" else float(args.dt)
        if dt != "cfl" and dt <= 0:
            raise ConfigError(f"--dt must be positive or 'cfl', got {args.dt}")
    spec = SceneSpec(
        name=spec.name,
        dp=args.dp if args.dp is not None else spec.dp,
        h_ratio=args.h_ratio if args.h_ratio is not None else spec.h_ratio,
        dt=dt,
        t_end=args.t_end if args.t_end is not None else spec.t_end,
        overrides=spec.overrides,
    )
    return RunConfig(
        spec=spec,
        out_dir=args.out if args.out is not None else cfg.out_dir,
        snapshot_every=(args.snapshot_every if args.snapshot_every is not None
                        else cfg.snapshot_every),
        probe_every=(args.probe_every if args.probe_every is not None
                     else cfg.probe_every),
        checkpoint_every=(args.checkpoint_every
                          if args.checkpoint_every is not None
                          else cfg.checkpoint_every),
        cfl=args.cfl if args.cfl is not None else cfg.cfl,
        deterministic=cfg.deterministic,
    )


def run_cli(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "list-scenes":
            for name in SCENE_NAMES:
                dp, hr, dt, t_end = scene_defaults(name)
                print(f"{name:18s} dp={dp:g} h/dp={hr:g} dt={dt:g} "
                      f"t_end={t_end:g}")
            return 0
        if args.command == "validate":
            with open(args.config) as fh:
                cfg = parse_config(fh.read())
            spec = resolve(cfg.spec)
            dt = "cfl" if spec.dt is None else f"{spec.dt:g}"
            print(f"ok: scene={spec.name} dp={spec.dp:g} "
                  f"h/dp={spec.h_ratio:g} dt={dt} t_end={spec.t_end:g} "
                  f"out={cfg.out_dir}")
            return 0
        cfg = _load_target(args)
        state, records = run_simulation(cfg, log=print)
        print(f"done: {state.step_count} steps to t={state.time:.6e}, "
              f"outputs in {cfg.out_dir}")
        return 0
    except (ConfigError, ValueError, OSError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
