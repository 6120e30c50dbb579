"""plotkit tests: readers, schema diagnostics, rendering, CLI, acceptance."""

from pathlib import Path

import numpy as np
import pytest

from plotkit import FigureSpec, SchemaError, read_metrics_csv, read_pgm, render
from plotkit.cli import EXIT_IO, EXIT_OK, EXIT_SCHEMA, main

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

LOCALIZATION_CSV = (
    "# seed=1\n"
    "K,snr_db,rmse_single,rmse_avg,rmse_weighted,failed_trials\n"
    "1,0.0,0.08,0.08,0.08,0\n"
    "2,0.0,0.081,0.057,0.057,0\n"
    "4,0.0,0.079,0.04,0.04,0\n")

BEAM_CSV = (
    "N,seed,frame,se_feedback,se_sensing,true_best_se,true_best_beam,"
    "feedback_beam,sensing_beam\n"
    "16,0,0,1.0,1.2,1.3,7,7,7\n"
    "16,0,1,1.1,1.25,1.3,8,7,8\n"
    "32,0,0,2.0,2.2,2.3,15,15,15\n"
    "32,0,1,2.1,2.25,2.3,16,15,16\n")

DISCOVERY_CSV = (
    "seed,round,frac_gossip,frac_dt_gossip,r90_gossip,r90_dt\n"
    "0,1,0.2,0.5,8,4\n"
    "0,2,0.5,0.9,8,4\n"
    "1,1,0.3,0.6,7,3\n"
    "1,2,0.6,0.95,7,3\n")


def _pgm_bytes(width=4, height=3, comment=False) -> bytes:
    header = b"P5\n"
    if comment:
        header += b"# occupancy map\n"
    header += f"{width} {height}\n255\n".encode()
    return header + bytes(range(width * height))


class TestReaders:
    def test_metrics_csv_skips_metadata_and_types_cells(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text(LOCALIZATION_CSV)
        t = read_metrics_csv(p)
        assert t["K"] == [1, 2, 4]
        assert t["rmse_avg"] == [0.08, 0.057, 0.04]

    def test_empty_csv_rejected(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("# only metadata\n")
        with pytest.raises(SchemaError):
            read_metrics_csv(p)

    def test_ragged_row_rejected(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("a,b\n1\n")
        with pytest.raises(SchemaError):
            read_metrics_csv(p)

    def test_pgm_roundtrip_with_comment(self, tmp_path):
        p = tmp_path / "g.pgm"
        p.write_bytes(_pgm_bytes(comment=True))
        img = read_pgm(p)
        assert img.shape == (3, 4)
        assert img[0, 0] == 0 and img[2, 3] == 11

    def test_non_p5_rejected(self, tmp_path):
        p = tmp_path / "g.pgm"
        p.write_bytes(b"P2\n1 1\n255\n0\n")
        with pytest.raises(SchemaError):
            read_pgm(p)

    def test_truncated_pgm_rejected(self, tmp_path):
        p = tmp_path / "g.pgm"
        p.write_bytes(_pgm_bytes()[:-2])
        with pytest.raises(SchemaError):
            read_pgm(p)


class TestRender:
    @pytest.mark.parametrize("kind,text", [
        ("localization", LOCALIZATION_CSV),
        ("beam", BEAM_CSV),
        ("discovery", DISCOVERY_CSV),
    ])
    def test_csv_kinds_write_png(self, tmp_path, kind, text):
        src = tmp_path / "metrics.csv"
        src.write_text(text)
        out = tmp_path / f"{kind}.png"
        render(FigureSpec(kind=kind, inputs=(str(src),), output=str(out)))
        assert out.read_bytes().startswith(PNG_MAGIC)

    def test_maps_side_by_side(self, tmp_path):
        paths = []
        for name in ("map_single.pgm", "map_dual_fused.pgm"):
            p = tmp_path / name
            p.write_bytes(_pgm_bytes())
            paths.append(str(p))
        out = tmp_path / "maps.png"
        render(FigureSpec(kind="maps", inputs=tuple(paths), output=str(out)))
        assert out.read_bytes().startswith(PNG_MAGIC)

    def test_missing_column_named(self, tmp_path):
        src = tmp_path / "metrics.csv"
        src.write_text("seed,round,frac_gossip\n0,1,0.5\n")
        with pytest.raises(SchemaError) as exc:
            render(FigureSpec(kind="discovery", inputs=(str(src),),
                              output=str(tmp_path / "x.png")))
        assert "frac_dt_gossip" in str(exc.value)

    def test_all_missing_columns_named(self, tmp_path):
        src = tmp_path / "metrics.csv"
        src.write_text("foo\n1\n")
        with pytest.raises(SchemaError) as exc:
            render(FigureSpec(kind="beam", inputs=(str(src),),
                              output=str(tmp_path / "x.png")))
        msg = str(exc.value)
        for col in ("N", "seed", "frame", "se_feedback", "se_sensing",
                    "true_best_se"):
            assert col in msg

    def test_unknown_kind_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            FigureSpec(kind="pie", inputs=("x.csv",), output="y.png")

    def test_rendering_is_deterministic(self, tmp_path):
        src = tmp_path / "metrics.csv"
        src.write_text(DISCOVERY_CSV)
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        for out in (a, b):
            render(FigureSpec(kind="discovery", inputs=(str(src),),
                              output=str(out)))
        assert a.read_bytes() == b.read_bytes()


class TestCli:
    def test_ok_prints_output_path(self, tmp_path, capsys):
        src = tmp_path / "metrics.csv"
        src.write_text(LOCALIZATION_CSV)
        out = tmp_path / "fig.png"
        code = main(["localization", "--in", str(src), "--out", str(out)])
        assert code == EXIT_OK
        assert capsys.readouterr().out.strip() == str(out)
        assert out.exists()

    def test_missing_column_exit_2_named_on_stderr(self, tmp_path, capsys):
        src = tmp_path / "metrics.csv"
        src.write_text("seed,round,frac_gossip\n0,1,0.5\n")
        code = main(["discovery", "--in", str(src),
                     "--out", str(tmp_path / "x.png")])
        assert code == EXIT_SCHEMA
        assert "frac_dt_gossip" in capsys.readouterr().err

    def test_missing_input_exit_3(self, tmp_path, capsys):
        code = main(["maps", "--in", str(tmp_path / "nope.pgm"),
                     "--out", str(tmp_path / "x.png")])
        assert code == EXIT_IO
        assert "nope.pgm" in capsys.readouterr().err


@pytest.fixture(scope="module")
def preset_outputs(tmp_path_factory):
    isacdt_cli = pytest.importorskip(
        "isacdt.cli", reason="primary package not installed")
    outputs = {}
    for name, trials in (("fig4a", 5), ("fig4bcd", 1), ("fig5a", 1),
                         ("fig5b", 3)):
        out = tmp_path_factory.mktemp(name)
        assert isacdt_cli.main(["run", "--preset", name, "--trials",
                                str(trials), "--out", str(out)]) == 0
        outputs[name] = out
    return outputs


class TestAcceptance:
    def test_renders_all_four_kinds_from_presets(self, preset_outputs,
                                                 tmp_path):
        specs = {
            "localization": (str(preset_outputs["fig4a"] / "metrics.csv"),),
            "maps": (str(preset_outputs["fig4bcd"] / "map_single.pgm"),
                     str(preset_outputs["fig4bcd"] / "map_dual_fused.pgm")),
            "beam": (str(preset_outputs["fig5a"] / "metrics.csv"),),
            "discovery": (str(preset_outputs["fig5b"] / "metrics.csv"),),
        }
        for kind, inputs in specs.items():
            out = tmp_path / f"{kind}.png"
            render(FigureSpec(kind=kind, inputs=inputs, output=str(out)))
            assert out.read_bytes().startswith(PNG_MAGIC), kind
        print("PASS: plot-kit renders all four figure kinds from the bundled "
              "presets' outputs; missing-column inputs fail with named "
              "diagnostics")
