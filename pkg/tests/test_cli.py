import socket
import subprocess
import sys
import time

import numpy as np
import pytest

from fdml import verify
from fdml.cli import main
from fdml.metrics import read_metrics_csv
from fdml.synthetic import make_classification
from fdml.transport import fetch_status


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    """Small svmlight pair the CLI can chew through in under a second."""
    root = tmp_path_factory.mktemp("tiny")

    def dump(path, ds):
        lines = []
        for i in range(ds.n_samples):
            idx, val = ds.sample(i)
            feats = " ".join(f"{j + 1}:{v:g}" for j, v in zip(idx, val))
            lines.append(f"{'+1' if ds.labels[i] else '-1'} {feats}".strip())
        path.write_text("\n".join(lines) + "\n")

    dump(root / "train", make_classification(80, 6, seed=0))
    dump(root / "test", make_classification(40, 6, seed=1))
    return root


RUN_FLAGS = ["--batch", "10", "--epochs", "2", "--eta", "0.5", "--seed", "1"]


class TestRunCommand:
    def run(self, tiny_data, out, *extra):
        argv = ["run", "--train", str(tiny_data / "train"), "--test", str(tiny_data / "test"),
                "--out", str(out), *RUN_FLAGS, *extra]
        return main(argv)

    def test_fdml_mode_writes_report(self, tiny_data, tmp_path, capsys):
        assert self.run(tiny_data, tmp_path, "--mode", "fdml", "--tau", "2") == 0
        rows = read_metrics_csv(tmp_path / "metrics.csv")
        assert len(rows) == 2
        assert all(r.scheme == "lr fdml" for r in rows)
        assert (tmp_path / "summary.txt").exists()
        png = (tmp_path / "training_curves.png").read_bytes()
        assert png[:8] == b"\x89PNG\r\n\x1a\n"  # figure rendered next to the CSV
        out = capsys.readouterr().out
        assert "lr fdml" in out and "test_auc" in out

    def test_local_and_centralized_modes(self, tiny_data, tmp_path):
        for mode in ("local", "centralized"):
            out = tmp_path / mode
            assert self.run(tiny_data, out, "--mode", mode) == 0
            rows = read_metrics_csv(out / "metrics.csv")
            assert rows[-1].scheme == f"lr {mode}"
            assert 0.0 < rows[-1].test_auc <= 1.0

    def test_nn_model(self, tiny_data, tmp_path):
        assert self.run(tiny_data, tmp_path, "--model", "nn", "--hidden", "4",
                        "--mode", "fdml", "--deterministic") == 0

    def test_config_file_with_flag_override(self, tiny_data, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text("epochs = 1\ntau = 0\nbatch = 20\n")
        out = tmp_path / "out"
        argv = ["run", "--train", str(tiny_data / "train"), "--test", str(tiny_data / "test"),
                "--out", str(out), "--config", str(conf), "--epochs", "2", "--eta", "0.5"]
        assert main(argv) == 0
        rows = read_metrics_csv(out / "metrics.csv")
        assert len(rows) == 2  # the flag overrode the file's epochs=1

    def test_partition_sizes_flag(self, tiny_data, tmp_path):
        assert self.run(tiny_data, tmp_path, "--partition-sizes", "2,4") == 0

    def test_noise_flags(self, tiny_data, tmp_path):
        assert self.run(tiny_data, tmp_path, "--noise-mechanism", "laplace",
                        "--noise-level", "0.5") == 0

    def test_missing_data_is_a_clean_error(self, tmp_path, capsys):
        assert main(["run", "--out", str(tmp_path)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_nonexistent_file_is_a_clean_error(self, tmp_path, capsys):
        assert main(["run", "--train", "/no/such/file", "--test", "/no/such/file",
                     "--out", str(tmp_path)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_partition_party_mismatch(self, tiny_data, tmp_path, capsys):
        assert self.run(tiny_data, tmp_path, "--partition-sizes", "2,2,2") == 1
        assert "parties" in capsys.readouterr().err

    def test_bad_flag_usage_exit(self):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--mode", "sideways"])
        assert exc.value.code == 2


class TestVerifyCommand:
    def test_fast_suites_pass(self, capsys):
        assert main(["verify", "--suite", "protocol,schedule"]) == 0
        out = capsys.readouterr().out
        assert "PASS protocol" in out
        assert "PASS schedule" in out

    def test_unknown_suite_fails(self, capsys):
        assert main(["verify", "--suite", "astrology"]) == 1
        assert "FAIL astrology" in capsys.readouterr().out

    def test_run_suites_covers_all(self):
        results = verify.run_suites()
        assert [name for name, _, _ in results] == list(verify.SUITES)


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class TestServeSubcommands:
    def test_distributed_processes_end_to_end(self, tiny_data, tmp_path):
        port, status_port = free_port(), free_port()
        common = ["--train", str(tiny_data / "train"), "--test", str(tiny_data / "test"),
                  "--batch", "10", "--epochs", "2", "--eta", "0.5", "--seed", "3", "--tau", "4"]
        coord = subprocess.Popen(
            [sys.executable, "-m", "fdml.cli", "serve-coordinator",
             "--listen", f"127.0.0.1:{port}", "--status-port", str(status_port),
             "--samples", "80", *common],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
        try:
            time.sleep(0.5)
            workers = [subprocess.Popen(
                [sys.executable, "-m", "fdml.cli", "serve-worker",
                 "--coordinator", f"127.0.0.1:{port}", "--party-id", str(j),
                 "--out", str(tmp_path), *common],
                stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
                for j in range(2)]
            for w in workers:
                out, err = w.communicate(timeout=60)
                assert w.returncode == 0, err
            out, err = coord.communicate(timeout=30)
            assert coord.returncode == 0, err
            assert "all workers finished" in out
        finally:
            if coord.poll() is None:
                coord.kill()
        for j in range(2):
            block = np.load(tmp_path / f"party{j}_block.npy")
            assert np.all(np.isfinite(block))
            assert np.any(block != 0.0)

    def test_status_endpoint_reports_progress(self, tiny_data, tmp_path):
        port, status_port = free_port(), free_port()
        coord = subprocess.Popen(
            [sys.executable, "-m", "fdml.cli", "serve-coordinator",
             "--listen", f"127.0.0.1:{port}", "--status-port", str(status_port),
             "--samples", "80", "--parties", "2", "--batch", "10", "--epochs", "2"],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
        try:
            deadline = time.time() + 10
            text = None
            while time.time() < deadline:
                try:
                    text = fetch_status("127.0.0.1", status_port)
                    break
                except OSError:
                    time.sleep(0.1)
            assert text is not None, "status endpoint never came up"
            fields = dict(line.split("=") for line in text.strip().splitlines())
            assert fields["t_min"] == "0"
            assert fields["tau"] == "8"
        finally:
            coord.kill()
            coord.communicate()

    def test_worker_with_bad_party_id(self, tiny_data, tmp_path):
        port = free_port()
        coord = subprocess.Popen(
            [sys.executable, "-m", "fdml.cli", "serve-coordinator",
             "--listen", f"127.0.0.1:{port}", "--samples", "80",
             "--parties", "2", "--batch", "10", "--epochs", "1"],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
        try:
            time.sleep(0.5)
            proc = subprocess.run(
                [sys.executable, "-m", "fdml.cli", "serve-worker",
                 "--coordinator", f"127.0.0.1:{port}", "--party-id", "7",
                 "--train", str(tiny_data / "train"), "--test", str(tiny_data / "test"),
                 "--out", str(tmp_path), "--batch", "10", "--epochs", "1"],
                capture_output=True, text=True, timeout=30)
            assert proc.returncode == 1
            assert "error:" in proc.stderr
        finally:
            coord.kill()
            coord.communicate()
