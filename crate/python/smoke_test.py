"""Smoke test for the railscope extension module."""

import math
import pathlib
import sys
import tempfile

import railscope

ROOT = pathlib.Path(__file__).resolve().parents[1]


def main() -> int:
    fp = railscope.Floorplan.from_path(ROOT / "scenarios" / "small.fp")
    rows, cols = fp.shape
    assert rows > 0 and cols > 0
    total = sum(fp.footprint_fraction(r) for r in fp.rail_ids)
    assert 0.0 < total <= 1.0
    again = railscope.Floorplan.parse(fp.to_toml())
    for rail in fp.rail_ids:
        assert again.footprint(rail) == fp.footprint(rail)

    plan = railscope.ScanPlan(8000, 12000)
    assert plan.positions == 96_000_000
    assert abs(plan.t_scan_days - 111.111) < 0.01
    assert abs(plan.masked_speedup(0.25) - 4.0) < 1e-12

    fps, f = 100.0, 5.0
    series = [0.7 * math.sin(2 * math.pi * f * k / fps + 0.4) for k in range(400)]
    amp, phase = railscope.demodulate_series(series, fps, f)
    assert abs(amp - 0.7) < 1e-9 and abs(phase - 0.4) < 1e-9

    try:
        railscope.Floorplan.parse("not a floorplan")
    except railscope.RailscopeError:
        pass
    else:
        raise AssertionError("bad floorplan accepted")

    with tempfile.TemporaryDirectory() as tmp:
        sim = railscope.simulate(ROOT / "scenarios" / "small_lit.toml", pathlib.Path(tmp) / "sim")
        report = railscope.analyze(sim, pathlib.Path(tmp) / "analysis")
        assert report.rail_id == "core"
        assert 0.0 < report.affected_fraction < 1.0
        assert report.iou is not None and report.iou > 0.5

    print("railscope smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
