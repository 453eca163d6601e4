"""Quick look at a finished run directory: chronology and key gauges.

Usage: python3 tools/analyze_run.py runs/plate05
"""

import json
import sys
from pathlib import Path

import numpy as np

from sphfrac.io_cli import load_checkpoint, read_probe_series
from sphfrac.scenes import detect_branching


def main(run_dir):
    d = Path(run_dir)
    probes = read_probe_series(d / "probes.csv")
    meta = json.loads((d / "meta.json").read_text())
    print(f"scene {meta['spec']['name']}  dp={meta['spec']['dp']}  "
          f"steps={meta['steps']}  t_final={meta['t_final']:.6g}  "
          f"elapsed={meta.get('elapsed_s', float('nan')):.0f}s")
    t = probes["time"]
    for name, vals in probes.items():
        if name == "time":
            continue
        finite = vals[np.isfinite(vals)]
        if not len(finite):
            print(f"  {name}: all-nan")
            continue
        print(f"  {name}: first {vals[0]:.4g} last {vals[-1]:.4g} "
              f"min {finite.min():.4g} max {finite.max():.4g}")
    for name in ("max_damage", "n_fragments", "upper_detached", "n_failed"):
        if name in probes:
            nz = np.flatnonzero(np.nan_to_num(probes[name]) > 0)
            if len(nz):
                print(f"  first {name}>0 at t={t[nz[0]]:.6g}")
    ck = d / "checkpoint.npz"
    if ck.exists():
        state, spec = load_checkpoint(ck)
        if state.springs is not None:
            sp = state.springs
            print(f"  springs: {sp.n_failed}/{len(sp.f)} failed, "
                  f"first failure t={sp.first_failure_time:.6g}")
            ctx = state.probe_ctx
            if "crack_plane_y" in ctx:
                br, onset = detect_branching(
                    sp, ctx["pos0"], spec.dp, ctx["crack_plane_y"],
                    ctx["tip0"][0])
                print(f"  branching: {br} onset={onset:.6g}")


if __name__ == "__main__":
    main(sys.argv[1])
