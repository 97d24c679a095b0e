import json
import subprocess
import sys

import numpy as np
import pytest

from tdiht import io as cio
from tdiht.cli import main, parse_grid, parse_snr, parse_step
from tdiht.recovery import AdaptiveStep, ConstantStep


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _config(err):
    return json.loads(err.strip().splitlines()[0])


def test_flag_parsers():
    assert parse_grid("3x5") == (3, 5)
    assert parse_step("adaptive") == AdaptiveStep()
    assert parse_step("constant:0.5") == ConstantStep(0.5)
    assert parse_snr("none") is None
    assert parse_snr("ratio:20") == 20
    assert parse_snr("db:20") == pytest.approx(10.0)


def test_gen_frame_size_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.cosf", tmp_path / "b.cosf"
    code, out, err = run(capsys, "gen-frame", "--d", "120", "--p", "144", "--seed", "7", "--out", str(a))
    assert code == 0
    assert a.stat().st_size == 5 + 9 + 144 * 120 * 8
    assert _config(err)["seed"] == 7
    run(capsys, "gen-frame", "--d", "120", "--p", "144", "--seed", "7", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_gen_frame_square_is_orthogonal(tmp_path, capsys):
    path = tmp_path / "f.cosf"
    code, out, _ = run(capsys, "gen-frame", "--d", "4", "--p", "4", "--seed", "1", "--out", str(path))
    bounds = json.loads(out)
    assert code == 0
    assert bounds["A"] == pytest.approx(1) and bounds["B"] == pytest.approx(1)
    omega = cio.read_cosf1(path)
    assert np.allclose(omega.T @ omega, np.eye(4), atol=1e-12)


def test_gen_frame_usage_errors(tmp_path, capsys):
    assert run(capsys, "gen-frame", "--d", "5", "--p", "4", "--out", str(tmp_path / "x"))[0] == 1
    with pytest.raises(SystemExit) as info:
        main(["gen-frame", "--d", "5"])
    assert info.value.code == 1


def test_gen_frame_io_error(tmp_path, capsys):
    code, _, err = run(capsys, "gen-frame", "--d", "3", "--p", "4", "--seed", "1",
                       "--out", str(tmp_path / "missing" / "f.cosf"))
    assert code == 3 and "I/O error" in err


def test_default_seed_is_printed(tmp_path, capsys):
    path = tmp_path / "f.cosf"
    _, _, err = run(capsys, "gen-frame", "--d", "3", "--p", "4", "--out", str(path))
    seed = _config(err)["seed"]
    replay = tmp_path / "g.cosf"
    run(capsys, "gen-frame", "--d", "3", "--p", "4", "--seed", str(seed), "--out", str(replay))
    assert path.read_bytes() == replay.read_bytes()


def test_phase_one_cell(capsys):
    code, out, err = run(capsys, "phase", "--d", "20", "--p", "24", "--grid", "1x1", "--trials", "1",
                         "--seed", "3")
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 2 and lines[0] == "delta,rho,success_rate,mean_iterations"
    assert _config(err)["grid"] == "1x1"


def test_phase_writes_file(tmp_path, capsys):
    path = tmp_path / "p.csv"
    code, out, _ = run(capsys, "phase", "--d", "20", "--p", "24", "--grid", "2x3", "--trials", "1",
                       "--seed", "3", "--step", "constant:1", "--out", str(path))
    assert code == 0 and out == ""
    assert len(path.read_text().strip().splitlines()) == 7


@pytest.mark.parametrize("argv", [
    ["phase", "--algorithm", "bogus"],
    ["phase", "--grid", "3by3"],
    ["phase", "--step", "constant:-1"],
    ["phase", "--trials", "0"],
])
def test_phase_usage_errors(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 1


def test_recover_small_phantom(tmp_path, capsys):
    out_img, report = tmp_path / "r.pgm", tmp_path / "r.json"
    code, out, err = run(capsys, "recover", "--image", "phantom:64", "--mask", "radial:30",
                         "--threshold", "0.01", "--snr", "none", "--seed", "1",
                         "--out", str(out_img), "--report", str(report))
    assert code == 0
    doc = json.loads(report.read_text())
    assert doc == json.loads(out)
    assert doc["psnr"] >= 60 and doc["seed"] == 1
    assert cio.read_pgm(out_img).shape == (64, 64)
    assert _config(err)["snr"] == "none"


def test_recover_pgm_and_pbm_inputs(tmp_path, capsys):
    from tdiht.linops import radial_mask
    from tdiht.signals import shepp_logan

    cio.write_pgm(tmp_path / "in.pgm", shepp_logan(32))
    cio.write_pbm(tmp_path / "m.pbm", radial_mask(32, 20))
    code, out, _ = run(capsys, "recover", "--image", str(tmp_path / "in.pgm"),
                       "--mask", str(tmp_path / "m.pbm"), "--snr", "db:30", "--seed", "2",
                       "--max-iter", "50")
    assert code == 0
    assert json.loads(out)["iterations"] <= 50


def test_recover_missing_image_leaves_no_outputs(tmp_path, capsys):
    code, _, _ = run(capsys, "recover", "--image", str(tmp_path / "nope.pgm"), "--mask", "radial:18",
                     "--out", str(tmp_path / "o.pgm"), "--report", str(tmp_path / "o.json"))
    assert code == 3
    assert list(tmp_path.iterdir()) == []


def test_recover_mask_mismatch(tmp_path, capsys):
    from tdiht.linops import radial_mask

    cio.write_pbm(tmp_path / "m.pbm", radial_mask(16, 4))
    code, _, _ = run(capsys, "recover", "--image", "phantom:32", "--mask", str(tmp_path / "m.pbm"))
    assert code == 1


def test_recover_bad_snr():
    with pytest.raises(SystemExit) as info:
        main(["recover", "--image", "phantom:32", "--mask", "radial:4", "--snr", "loud:3"])
    assert info.value.code == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_recover_divergence_exit_code(tmp_path, capsys):
    code, _, err = run(capsys, "recover", "--image", "phantom:16", "--mask", "radial:4",
                       "--step", "constant:1e200", "--max-iter", "1000", "--seed", "0",
                       "--out", str(tmp_path / "o.pgm"))
    assert code == 2 and "numerical" in err
    assert list(tmp_path.iterdir()) == []


def test_rip_identity_and_mc_vs_brute(tmp_path, capsys):
    frame = tmp_path / "f.cosf"
    run(capsys, "gen-frame", "--d", "8", "--p", "10", "--seed", "1", "--out", str(frame))
    code, out, _ = run(capsys, "rip", "--frame", str(frame), "--m", "identity", "--k", "2",
                       "--method", "brute")
    assert code == 0 and json.loads(out)["delta"] <= 1e-12
    _, mc, _ = run(capsys, "rip", "--frame", str(frame), "--m", "6", "--k", "2", "--method", "mc",
                   "--trials", "30", "--seed", "4")
    _, brute, _ = run(capsys, "rip", "--frame", str(frame), "--m", "6", "--k", "2",
                      "--method", "brute", "--seed", "4")
    mc, brute = json.loads(mc), json.loads(brute)
    assert set(mc) == {"k", "delta", "method", "trials", "seed"}
    assert mc["delta"] <= brute["delta"]


def test_rip_budget_exceeded(tmp_path, capsys):
    frame = tmp_path / "f.cosf"
    # C(40, 6) is about 3.8 million supports
    run(capsys, "gen-frame", "--d", "30", "--p", "40", "--seed", "1", "--out", str(frame))
    code, _, err = run(capsys, "rip", "--frame", str(frame), "--m", "10", "--k", "6",
                       "--method", "brute", "--seed", "1")
    assert code == 1 and "budget" in err


def test_rip_bad_frame_file(tmp_path, capsys):
    bad = tmp_path / "bad.cosf"
    bad.write_bytes(b"nonsense")
    assert run(capsys, "rip", "--frame", str(bad), "--m", "3", "--k", "1")[0] == 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "tdiht", "phase", "--algorithm", "bogus"],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert "usage" in proc.stderr
