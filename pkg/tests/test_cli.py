import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from pyramidseg.cli import main
from pyramidseg.raster import load_image, load_labels

DATA = Path(__file__).parent / "data"


def run(argv):
    """Exit code of ``main``, counting argparse's SystemExit."""
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code


@pytest.fixture
def scene(tmp_path):
    assert main(["synth", "--fixture", "landscape", "--name", "land", "--out-dir", str(tmp_path)]) == 0
    return tmp_path / "land.pgm"


def test_synth_custom_rects(tmp_path, capsys):
    code = main(
        ["synth", "--width", "20", "--height", "10", "--background", "30", "--rect", "2,2,5,5,200",
         "--noise", "2", "--seed", "9", "--out-dir", str(tmp_path)]
    )
    assert code == 0
    img = load_image(tmp_path / "scene.pgm")
    assert (img.width, img.height) == (20, 10)
    truth = load_labels(tmp_path / "scene.truth.labels")
    assert truth.max() == 1 and (truth == 1).sum() == 25
    assert "2 regions" in capsys.readouterr().out


def test_segment_writes_levels_and_report(scene, tmp_path, capsys):
    out = tmp_path / "seg"
    assert main(["segment", str(scene), "--out-dir", str(out)]) == 0
    report = json.loads((out / "segment_report.json").read_text())
    assert report["config"]["tol"] == 10.0
    levels = {lv["level"]: lv for lv in report["levels"]}
    assert levels[0]["regions"] == 4 and all(lv["converged"] for lv in levels.values())
    for lv in levels:
        labels = load_labels(out / f"level_{lv}.labels")
        assert labels.shape == (levels[lv]["height"], levels[lv]["width"])
        assert (out / f"level_{lv}.pgm").exists()
    assert "level 0: 128x128 regions=4 converged" in capsys.readouterr().out


def test_config_file_and_flag_precedence(scene, tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("tol: 30\nmax-sweeps: 4\n")
    out = tmp_path / "seg"
    assert main(["segment", str(scene), "--config", str(cfg), "--tol", "12", "--out-dir", str(out)]) == 0
    echoed = json.loads((out / "segment_report.json").read_text())["config"]
    assert echoed["tol"] == 12.0 and echoed["max_sweeps"] == 4


def test_describe_then_reconstruct(scene, tmp_path, capsys):
    out = tmp_path / "desc"
    assert main(["describe", str(scene), "--out-dir", str(out)]) == 0
    stack = json.loads((out / "stack.json").read_text())
    assert stack["format"] == "pyramidseg-description-stack"
    capsys.readouterr()
    recon = tmp_path / "recon.pgm"
    assert main(["reconstruct", str(out / "stack.json"), "--level", "0", "-o", str(recon), "--original", str(scene)]) == 0
    assert "max_abs_error=0.000000 mean_abs_error=0.000000" in capsys.readouterr().out
    assert recon.read_bytes() == scene.read_bytes()


def test_annotate_writes_tsv(scene, tmp_path, capsys):
    out = tmp_path / "ann"
    assert main(["annotate", str(scene), str(DATA / "landscape_kb.yaml"), "--out-dir", str(out)]) == 0
    rows = (out / "annotations.tsv").read_text().splitlines()
    assert rows[0] == "region\tword\tsimilarity\tscene\tcontext_score"
    assert sorted(r.split("\t")[1] for r in rows[1:]) == ["ground", "horizon", "sky", "sun"]
    assert all(r.endswith("\tlandscape\t1.000000") for r in rows[1:])


def test_annotate_empty_kb_gives_header_only(scene, tmp_path):
    kb = tmp_path / "empty.yaml"
    kb.write_text("")
    out = tmp_path / "ann"
    assert main(["annotate", str(scene), str(kb), "--out-dir", str(out)]) == 0
    assert (out / "annotations.tsv").read_text() == "region\tword\tsimilarity\tscene\tcontext_score\n"


@pytest.mark.parametrize(
    "argv, code",
    [
        ([], 1),
        (["segment"], 1),
        (["segment", "{scene}", "--tol", "-1"], 1),
        (["segment", "{scene}", "--tol", "abc"], 1),
        (["segment", "{missing}"], 2),
        (["segment", "{bad}"], 3),
        (["annotate", "{scene}", "{badkb}"], 3),
        (["annotate", "{scene}", "{missing}"], 2),
        (["annotate", "{scene}", "{binary}"], 3),
        (["synth", "--rect", "1,2,3"], 1),
        (["synth", "--width", "4", "--height", "4", "--rect", "2,2,5,5,10"], 1),
    ],
)
def test_exit_codes(scene, tmp_path, argv, code):
    (tmp_path / "bad.pgm").write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
    (tmp_path / "bad.yaml").write_text("prototypes:\n  - word: a\n    predicates: []\n")
    subs = {
        "{scene}": str(scene),
        "{missing}": str(tmp_path / "missing.pgm"),
        "{bad}": str(tmp_path / "bad.pgm"),
        "{badkb}": str(tmp_path / "bad.yaml"),
        "{binary}": str(tmp_path / "bad.pgm"),
    }
    assert run([subs.get(a, a) for a in argv] + ["--out-dir", str(tmp_path / "o")] * (len(argv) > 1)) == code


def test_bad_level_is_data_error(scene, tmp_path):
    out = tmp_path / "desc"
    main(["describe", str(scene), "--out-dir", str(out)])
    assert main(["reconstruct", str(out / "stack.json"), "--level", "9", "-o", str(tmp_path / "r.pgm")]) == 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "pyramidseg", "synth", "--fixture", "three-rect", "--out-dir", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    truth = load_labels(tmp_path / "scene.truth.labels")
    assert len(np.unique(truth)) == 4


def test_unwritable_out_dir_is_io_error(scene, tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["segment", str(scene), "--out-dir", str(blocker / "sub")]) == 2
    assert "file" in capsys.readouterr().err


def test_missing_input_names_the_path(tmp_path, capsys):
    assert main(["segment", str(tmp_path / "ghost.pgm"), "--out-dir", str(tmp_path)]) == 2
    assert "ghost.pgm" in capsys.readouterr().err
