import json
import subprocess
import sys

import numpy as np
import pytest

from concolic_dnn.cli import main
from concolic_dnn.network import forward, save_model

from conftest import dense_net


@pytest.fixture
def workspace(tmp_path):
    """Model + refs + seed files ready for a CLI run."""
    net = dense_net([4, 8, 8, 3], seed=1)
    model = tmp_path / "model.json"
    save_model(net, str(model))
    rng = np.random.default_rng(2)
    inputs = rng.uniform(0, 1, (300, 4))
    labels = np.array([forward(net, x).label for x in inputs])
    refs = tmp_path / "refs"
    refs.mkdir()
    np.save(refs / "inputs.npy", inputs)
    np.save(refs / "labels.npy", labels)
    seeds = tmp_path / "seeds.npy"
    np.save(seeds, rng.uniform(0, 1, 4))
    return {"net": net, "model": model, "refs": refs, "seeds": seeds, "dir": tmp_path}


def base_args(ws, out, extra=()):
    return [
        "--model", str(ws["model"]),
        "--criterion", "nc",
        "--seeds", str(ws["seeds"]),
        "--refs", str(ws["refs"]),
        "--out", str(out),
        "--rng-seed", "3",
        *extra,
    ]


class TestRunCommand:
    def test_full_run_produces_artifacts(self, workspace, capsys):
        out = workspace["dir"] / "out"
        code = main(base_args(workspace, out))
        assert code == 0
        assert (out / "report.json").exists()
        assert (out / "suite" / "manifest.json").exists()
        report = json.loads((out / "report.json").read_text())
        assert report["config"]["criterion"] == "nc"
        printed = capsys.readouterr().out
        assert "coverage" in printed

    def test_config_error_exit_code(self, workspace):
        out = workspace["dir"] / "out2"
        args = base_args(workspace, out)
        args[args.index("nc")] = "ssc"
        args += ["--norm", "l0"]
        assert main(args) == 2

    def test_missing_refs_exit_code(self, workspace):
        out = workspace["dir"] / "out3"
        args = base_args(workspace, out)
        args[args.index(str(workspace["refs"]))] = str(workspace["dir"] / "nowhere")
        assert main(args) == 2

    def test_dump_lp_writes_problems(self, workspace):
        out = workspace["dir"] / "out4"
        code = main(base_args(workspace, out, extra=["--dump-lp"]))
        assert code == 0
        lp_files = list((out / "lp").glob("*.lp"))
        assert lp_files
        text = lp_files[0].read_text()
        assert text.startswith("Minimize")

    def test_lipschitz_run_writes_csv(self, workspace):
        out = workspace["dir"] / "out5"
        args = base_args(workspace, out)
        args[args.index("nc")] = "lipschitz"
        args += ["--lip-c", "0.05", "--lip-delta", "0.1", "--timeout", "120"]
        code = main(args)
        assert code == 0
        csv = (out / "lipschitz.csv").read_text().strip().splitlines()
        assert csv[0] == "seed,method,best_ratio,satisfied,forward_evals"
        assert len(csv) > 1

    def test_timeout_exit_code(self, workspace):
        out = workspace["dir"] / "out7"
        args = base_args(workspace, out, extra=["--timeout", "0.000001"])
        assert main(args) == 3

    def test_seed_directory_input(self, workspace):
        seed_dir = workspace["dir"] / "seed_dir"
        seed_dir.mkdir()
        rng = np.random.default_rng(4)
        for i in range(2):
            np.save(seed_dir / f"s{i}.npy", rng.uniform(0, 1, 4))
        out = workspace["dir"] / "out6"
        args = base_args(workspace, out)
        args[args.index(str(workspace["seeds"]))] = str(seed_dir)
        assert main(args) == 0


class TestCrossProcessDeterminism:
    def test_fresh_interpreters_agree_byte_for_byte(self, workspace):
        blobs = []
        for i, name in enumerate(("pa", "pb")):
            out = workspace["dir"] / name
            proc = subprocess.run(
                [sys.executable, "-m", "concolic_dnn.cli", *base_args(workspace, out)],
                capture_output=True,
                env={"PYTHONHASHSEED": str(i), "PATH": "/usr/bin:/bin"},
            )
            assert proc.returncode == 0, proc.stderr.decode()
            blobs.append((out / "report.json").read_bytes())
        assert blobs[0] == blobs[1]


class TestVerifyCommand:
    def run_first(self, workspace, out):
        assert main(base_args(workspace, out)) == 0

    def test_verify_passes_on_honest_artifacts(self, workspace, capsys):
        out = workspace["dir"] / "vout"
        self.run_first(workspace, out)
        code = main([
            "verify", "--out", str(out),
            "--model", str(workspace["model"]),
            "--refs", str(workspace["refs"]),
        ])
        assert code == 0
        assert "verified" in capsys.readouterr().out

    def test_verify_detects_tampered_record(self, workspace):
        out = workspace["dir"] / "vout2"
        self.run_first(workspace, out)
        report = json.loads((out / "report.json").read_text())
        if not report["adversarial"]:
            pytest.skip("run produced no adversarial examples to tamper with")
        entry = report["adversarial"][0]
        ref_inputs = np.load(workspace["refs"] / "inputs.npy")
        # overwrite the stored input with its nearest reference: labels now agree
        np.save(out / "adversarial" / entry["file"], ref_inputs[entry["nearest_index"]])
        code = main([
            "verify", "--out", str(out),
            "--model", str(workspace["model"]),
            "--refs", str(workspace["refs"]),
        ])
        assert code == 1
