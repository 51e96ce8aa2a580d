import json
import subprocess
import sys

import numpy as np
import pytest

from ldpmean_plots import NoDataError, PlotSpec, SchemaError, aggregate, load_frame, render
from ldpmean_plots.cli import main

HEADER = "mechanism,eps,bits,n,d,round,k,r_k,l2_error,wall_ms"


def synth_csv(path, mechanisms=("rrsc", "privunitg", "sqkr", "mmrc"),
              eps_values=(1, 2, 3, 4, 5, 6), rounds=10):
    """Sweep-schema CSV shaped like the desk-scale benchmark output."""
    rng = np.random.default_rng(0)
    lines = [HEADER]
    base = {"rrsc": 0.9, "privunitg": 0.8, "sqkr": 3.0, "mmrc": 1.9}
    for mech in mechanisms:
        for eps in eps_values:
            bits = "" if mech == "privunitg" else str(eps)
            k = "1" if mech == "rrsc" else ("0" if mech == "mmrc" else "")
            r_k = "5.5" if mech in ("rrsc", "mmrc") else ""
            for rnd in range(rounds):
                err = base[mech] / eps * (1.0 + 0.05 * rng.standard_normal())
                lines.append(
                    f"{mech},{eps},{bits},1000,100,{rnd},{k},{r_k},{err:.9g},{rng.uniform(1, 9):.9g}"
                )
    path.write_text("\n".join(lines) + "\n")
    return path


class TestRender:
    def test_four_series_png(self, tmp_path):
        csv = synth_csv(tmp_path / "sweep.csv")
        out = tmp_path / "fig.png"
        render(PlotSpec(csv_path=str(csv), x_axis="eps", out_path=str(out)))
        assert out.exists() and out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
        stats = aggregate(load_frame(str(csv)), "eps")
        assert sorted(stats["mechanism"].unique()) == ["mmrc", "privunitg", "rrsc", "sqkr"]
        assert (stats["count"] == 10).all()

    def test_rerender_pixel_stable(self, tmp_path):
        csv = synth_csv(tmp_path / "sweep.csv")
        a = tmp_path / "a.png"
        b = tmp_path / "b.png"
        render(PlotSpec(csv_path=str(csv), x_axis="eps", out_path=str(a)))
        render(PlotSpec(csv_path=str(csv), x_axis="eps", out_path=str(b)))
        assert a.read_bytes() == b.read_bytes()

    def test_single_mechanism(self, tmp_path):
        csv = synth_csv(tmp_path / "one.csv", mechanisms=("rrsc",))
        out = tmp_path / "one.png"
        render(PlotSpec(csv_path=str(csv), x_axis="eps", out_path=str(out)))
        assert out.exists()

    def test_filter_and_logy(self, tmp_path):
        csv = synth_csv(tmp_path / "f.csv")
        out = tmp_path / "f.png"
        spec = PlotSpec(
            csv_path=str(csv), x_axis="eps", out_path=str(out),
            filters={"mechanism": "rrsc", "n": "1000"}, logy=True,
        )
        render(spec)
        assert out.exists()

    def test_missing_column_is_schema_error(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("mechanism,eps,bits,n,d,round\nrrsc,1,1,10,5,0\n")
        with pytest.raises(SchemaError):
            render(PlotSpec(csv_path=str(path), x_axis="eps", out_path=str(tmp_path / "x.png")))

    def test_empty_selection_is_no_data(self, tmp_path):
        csv = synth_csv(tmp_path / "s.csv")
        spec = PlotSpec(
            csv_path=str(csv), x_axis="eps", out_path=str(tmp_path / "x.png"),
            filters={"mechanism": "nope"},
        )
        with pytest.raises(NoDataError):
            render(spec)

    def test_unknown_filter_column(self, tmp_path):
        csv = synth_csv(tmp_path / "u.csv")
        spec = PlotSpec(
            csv_path=str(csv), x_axis="eps", out_path=str(tmp_path / "x.png"),
            filters={"bogus": "1"},
        )
        with pytest.raises(SchemaError):
            render(spec)

    def test_bits_axis_drops_unbounded_mechanisms(self, tmp_path):
        csv = synth_csv(tmp_path / "b.csv")
        out = tmp_path / "b.png"
        render(PlotSpec(csv_path=str(csv), x_axis="bits", out_path=str(out)))
        assert out.exists()


class TestCli:
    def test_ok_and_exit_codes(self, tmp_path):
        csv = synth_csv(tmp_path / "cli.csv")
        out = tmp_path / "cli.png"
        assert main(["--csv", str(csv), "--x", "eps", "--out", str(out)]) == 0
        assert out.exists()
        assert main(["--csv", str(tmp_path / "none.csv"), "--x", "eps", "--out", str(out)]) == 1
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        assert main(["--csv", str(bad), "--x", "eps", "--out", str(out)]) == 2
        assert main(["--csv", str(csv), "--x", "eps", "--out", str(out),
                     "--filter", "mechanism=nope"]) == 2
        assert main(["--csv", str(csv), "--x", "bogus", "--out", str(out)]) == 1
        assert main(["--csv", str(csv), "--x", "eps", "--out", str(out),
                     "--filter", "noequals"]) == 1

    def test_renders_real_harness_output(self, tmp_path):
        # end-to-end through the primary's external interface: run a tiny
        # sweep via its CLI, then render the file it wrote
        config = {
            "mechanisms": ["rrsc", "privunitg", "sqkr", "mmrc"],
            "eps": [1, 2],
            "bits": "eq_eps",
            "n": 16,
            "d": 10,
            "rounds": 2,
            "calib_trials": 20000,
            "seed": 3,
            "out": str(tmp_path / "real.csv"),
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(config))
        proc = subprocess.run(
            [sys.executable, "-m", "ldpmean.cli", "sweep", "--config", str(cfg_path),
             "--calib-cache", str(tmp_path / "cache.json")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        out = tmp_path / "real.png"
        assert main(["--csv", config["out"], "--x", "eps", "--out", str(out)]) == 0
        assert out.exists()
