import csv
import subprocess
import sys

import numpy as np
import pytest

from oltae.cli import main, read_estimates
from oltae.scenario import ingest_correspondences, read_truth


@pytest.fixture(autouse=True)
def _no_env(monkeypatch):
    monkeypatch.delenv("OLTAE_OUT_DIR", raising=False)


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["generate", "--out", str(out)]) == 0
    assert main(["estimate", "--out", str(out)]) == 0
    return out


def _cfg(path):
    return dict(line.split(" = ", 1) for line in path.read_text().splitlines())


def test_generate_defaults(run_dir):
    frames = ingest_correspondences(run_dir / "correspondences.txt")
    assert len(frames) == 24
    assert len(read_truth(run_dir / "truth.txt")) == 24
    assert _cfg(run_dir / "generate.cfg")["seed"] == "7"


def test_generate_too_few_frames(tmp_path):
    assert main(["generate", "--frames", "1", "--out", str(tmp_path)]) == 2


def test_generate_is_reproducible(tmp_path, run_dir):
    assert main(["generate", "--seed", "7", "--out", str(tmp_path)]) == 0
    for name in ("correspondences.txt", "truth.txt"):
        assert (tmp_path / name).read_bytes() == (run_dir / name).read_bytes()
    assert main(["generate", "--seed", "8", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "correspondences.txt").read_bytes() != \
        (run_dir / "correspondences.txt").read_bytes()


def test_rerun_from_echoed_config(tmp_path, run_dir):
    first = tmp_path / "first"
    assert main(["generate", "--seed", "3", "--frames", "4", "--points", "12",
                 "--out", str(first)]) == 0
    cfg = (first / "generate.cfg").read_text().replace(str(first), str(tmp_path / "again"))
    (tmp_path / "again.cfg").write_text(cfg)
    assert main(["generate", "--config", str(tmp_path / "again.cfg")]) == 0
    assert (tmp_path / "again" / "correspondences.txt").read_bytes() == \
        (first / "correspondences.txt").read_bytes()


def test_flag_overrides_config(tmp_path):
    (tmp_path / "c.cfg").write_text(f"frames = 5\nout = {tmp_path / 'o'}\n")
    assert main(["generate", "--config", str(tmp_path / "c.cfg"), "--frames", "3"]) == 0
    assert len(ingest_correspondences(tmp_path / "o" / "correspondences.txt")) == 2


def test_bad_config_key(tmp_path):
    (tmp_path / "c.cfg").write_text("colour = blue\n")
    assert main(["generate", "--config", str(tmp_path / "c.cfg"), "--out", str(tmp_path)]) == 2


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("OLTAE_OUT_DIR", str(tmp_path / "env"))
    assert main(["generate", "--frames", "3"]) == 0
    assert (tmp_path / "env" / "correspondences.txt").exists()


def test_estimate_noise_free(tmp_path):
    assert main(["generate", "--sigma", "0", "--frames", "6", "--out", str(tmp_path)]) == 0
    assert main(["estimate", "--path", "double", "--out", str(tmp_path)]) == 0
    truth = read_truth(tmp_path / "truth.txt")
    rows = read_estimates(tmp_path / "estimates.csv")["double"]
    for k, row in rows.items():
        est = np.array([float(row[c]) for c in ("q1", "q2", "q3", "t1", "t2", "t3")])
        ref = np.concatenate([truth[k].q, truth[k].t])
        assert np.abs(est - ref).max() < 1e-9


def test_estimate_all_paths_bit_exact(run_dir):
    table = read_estimates(run_dir / "estimates.csv")
    assert set(table) == {"double", "fixed", "hwsim"}
    for k in table["fixed"]:
        fx, hw = table["fixed"][k], table["hwsim"][k]
        for c in ("qp1_raw", "qp2_raw", "qp3_raw"):
            assert fx[c] == hw[c] and fx[c] != ""
        assert int(hw["status_word"]) == 1
        assert int(hw["modeled_cycles"]) > 0


def test_estimate_joint_path(tmp_path, run_dir):
    out = tmp_path / "j"
    assert main(["estimate", "--path", "joint", "--input", str(run_dir / "correspondences.txt"),
                 "--out", str(out)]) == 0
    joint = read_estimates(out / "estimates.csv")["joint"]
    dp = read_estimates(run_dir / "estimates.csv")["double"]
    for k in dp:
        for c in ("q1", "q2", "q3"):
            assert abs(float(joint[k][c]) - float(dp[k][c])) < 1e-9


def test_estimate_manual_scaling(tmp_path, run_dir):
    base = ["estimate", "--path", "fixed", "--input", str(run_dir / "correspondences.txt"),
            "--scale-mode", "manual"]
    assert main(base + ["--out", str(tmp_path)]) == 2  # alpha/beta missing
    assert main(base + ["--alpha", "0.0078125", "--beta", "0.5", "--out", str(tmp_path)]) == 0


def test_estimate_missing_input(tmp_path):
    assert main(["estimate", "--input", str(tmp_path / "none.txt"), "--out", str(tmp_path)]) == 2


def test_estimate_degenerate_is_numeric_error(tmp_path):
    lines = ["oltae-corr v1", "frame 0"]
    lines += [f"{k} {k} {k} {k} {k} {k + 1} 0.1" for k in range(5)]
    (tmp_path / "c.txt").write_text("\n".join(lines) + "\n")
    assert main(["estimate", "--path", "double", "--input", str(tmp_path / "c.txt"),
                 "--out", str(tmp_path)]) == 3


def test_compare_default_within_bound(tmp_path, run_dir):
    out = tmp_path / "cmp"
    args = ["compare", "--estimates", str(run_dir / "estimates.csv"),
            "--truth", str(run_dir / "truth.txt"), "--out", str(out)]
    assert main(args) == 0
    summary = _cfg(out / "summary.txt")
    assert float(summary["max_rel_dev_percent"]) <= 7.0
    with (out / "report.csv").open() as fh:
        assert len(list(csv.reader(fh))) == 25
    assert main(args + ["--max-dev-percent", "0.0001"]) == 4


def test_compare_identical_paths(tmp_path, run_dir):
    assert main(["compare", "--estimates", str(run_dir / "estimates.csv"),
                 "--reference", "fixed", "--candidate", "hwsim", "--out", str(tmp_path)]) == 0
    assert float(_cfg(tmp_path / "summary.txt")["max_rel_dev_all_percent"]) == 0.0


def test_compare_missing_path(tmp_path, run_dir):
    assert main(["compare", "--estimates", str(run_dir / "estimates.csv"),
                 "--candidate", "joint", "--out", str(tmp_path)]) == 2


def test_report_plotdata(tmp_path, run_dir):
    assert main(["compare", "--estimates", str(run_dir / "estimates.csv"),
                 "--out", str(tmp_path)]) == 0
    assert main(["report", "--out", str(tmp_path)]) == 0
    dev = np.loadtxt(tmp_path / "report_reldev.dat")
    assert dev.shape == (24, 7)


def test_hwsim_trace(tmp_path, run_dir):
    assert main(["hwsim-trace", "--input", str(run_dir / "correspondences.txt"), "--frame", "2",
                 "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "hwsim_trace_frame2.txt").read_text().splitlines()
    assert lines[1] == "W in 0000 0x00000028"
    assert sum(line.startswith("W in") for line in lines) == 1 + 7 * 40
    raws = lines[-1].split()[2:5]
    fixed = read_estimates(run_dir / "estimates.csv")["fixed"][2]
    assert raws == [fixed["qp1_raw"], fixed["qp2_raw"], fixed["qp3_raw"]]
    assert main(["hwsim-trace", "--input", str(run_dir / "correspondences.txt"),
                 "--frame", "99", "--out", str(tmp_path)]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "oltae", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "hwsim-trace" in res.stdout
