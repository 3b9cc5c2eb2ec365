import json
import subprocess
import sys

import pytest

from twinsearch.cli import main
from twinsearch.runstore import RunStore, TrialLine
from twinsearch.scheduler import SchedulerPolicy


RUN_FLAGS = [
    "--n-lr", "5", "--n-wd", "5",
    "--epochs", "8", "--batch-size", "32",
    "--hidden", "12",
    "--n-train", "80", "--n-val", "16", "--n-test", "300",
    "--input-dim", "6", "--n-classes", "2", "--class-sep", "3.0", "--label-noise", "0.0",
    "--jobs", "1",
]


def run_cli(tmp_path, *args):
    return main(["--store-root", str(tmp_path / "runs"), *args])


def artifact(tmp_path, run_id, name):
    return tmp_path / "runs" / run_id / name


class TestRun:
    def test_smoke_writes_all_artifacts(self, tmp_path, capsys):
        code = run_cli(tmp_path, "run", "--run-id", "demo", *RUN_FLAGS)
        assert code == 0
        for name in ("manifest.json", "matrices.json", "selection.json", "decisions.jsonl"):
            assert artifact(tmp_path, "demo", name).exists()
        out = capsys.readouterr().out
        assert "selected cell" in out
        doc = json.loads(artifact(tmp_path, "demo", "selection.json").read_text())
        cell = doc["selection"]["cell"]
        assert 0 <= cell["row"] < 5 and 0 <= cell["col"] < 5

    def test_same_seed_reruns_identical_artifacts(self, tmp_path):
        assert run_cli(tmp_path, "run", "--run-id", "a", *RUN_FLAGS) == 0
        assert run_cli(tmp_path, "run", "--run-id", "b", *RUN_FLAGS) == 0
        for name in ("matrices.json", "selection.json"):
            a = artifact(tmp_path, "a", name).read_bytes()
            b = artifact(tmp_path, "b", name).read_bytes()
            assert a == b

    def test_hb_decision_log_alive_counts(self, tmp_path):
        code = run_cli(
            tmp_path,
            "run",
            "--run-id", "hb",
            "--scheduler", "hb", "--stop-fraction", "0.25", "--eta", "2", "--grace", "0.05",
            "--n-lr", "10", "--n-wd", "10",
            "--epochs", "20", "--hidden", "8",
            "--n-train", "60", "--n-val", "0", "--n-test", "100",
            "--input-dim", "4", "--n-classes", "2", "--class-sep", "4.0", "--label-noise", "0.0",
            "--jobs", "2",
        )
        assert code == 0
        lines = [
            json.loads(l)
            for l in artifact(tmp_path, "hb", "decisions.jsonl").read_text().splitlines()
        ]
        by_rung = {}
        for d in lines:
            if d["rung"] is not None:
                by_rung.setdefault(d["rung"], []).append(d["decision"])
        # ladder for T=20, grace 5%: [1, 2, 4, ...]; halvings at 1 and 2
        assert len(by_rung[1]) == 100
        assert by_rung[1].count("continue") == 50
        assert len(by_rung[2]) == 50
        assert by_rung[2].count("continue") == 25

    def test_usage_error_exit_code(self, tmp_path, capsys):
        code = run_cli(tmp_path, "run", "--run-id", "bad", "--lr-low", "-1.0", *RUN_FLAGS)
        assert code == 1
        assert "lr_low" in capsys.readouterr().err

    def test_unknown_flag_exit_code(self, tmp_path):
        assert run_cli(tmp_path, "run", "--run-id", "x", "--bogus", "1") == 1

    def test_duplicate_run_id_is_storage_error(self, tmp_path):
        assert run_cli(tmp_path, "run", "--run-id", "dup", *RUN_FLAGS) == 0
        assert run_cli(tmp_path, "run", "--run-id", "dup", *RUN_FLAGS) == 3


class TestSelect:
    def test_online_offline_equivalence(self, tmp_path):
        assert run_cli(tmp_path, "run", "--run-id", "r", *RUN_FLAGS) == 0
        online = artifact(tmp_path, "r", "selection.json").read_bytes()
        assert run_cli(tmp_path, "select", "r") == 0
        offline = artifact(tmp_path, "r", "selection.json").read_bytes()
        assert online == offline

    def test_reselect_is_idempotent(self, tmp_path):
        assert run_cli(tmp_path, "run", "--run-id", "r", *RUN_FLAGS) == 0
        assert run_cli(tmp_path, "select", "r") == 0
        first = artifact(tmp_path, "r", "selection.json").read_bytes()
        assert run_cli(tmp_path, "select", "r") == 0
        assert artifact(tmp_path, "r", "selection.json").read_bytes() == first

    def test_external_fixture_run(self, tmp_path, capsys):
        # hand-authored 3x3 run: no trainer involved
        from twinsearch.grid import build_log_grid

        store = RunStore(tmp_path / "runs")
        grid = build_log_grid(1e-4, 1e-2, 3, 1e-4, 1e-2, 3)
        store.create_run(
            "ext",
            {"grid": grid.to_dict(), "scheduler": SchedulerPolicy("fifo", 2).to_dict(), "task": "external", "seeds": {}},
        )
        losses = [[0.9, 0.5, 0.4], [0.8, 0.2, 0.1], [0.9, 0.6, 0.5]]
        norms = [[3.0, 2.5, 2.0], [2.8, 2.2, 1.8], [3.1, 2.6, 2.1]]
        for r in range(3):
            for c in range(3):
                for epoch in range(2):
                    store.append_trial_line(
                        "ext",
                        TrialLine(
                            r, c, epoch,
                            losses[r][c] + (0.1 if epoch == 0 else 0.0),
                            norms[r][c],
                            status="completed" if epoch == 1 else "running",
                        ),
                    )
        assert run_cli(tmp_path, "select", "ext") == 0
        out = capsys.readouterr().out
        assert "selected cell" in out and "lr=" in out

    def test_incomplete_run_exit_2_lists_cells(self, tmp_path, capsys):
        from twinsearch.grid import build_log_grid

        store = RunStore(tmp_path / "runs")
        grid = build_log_grid(1e-4, 1e-2, 2, 1e-4, 1e-2, 2)
        store.create_run(
            "partial",
            {"grid": grid.to_dict(), "scheduler": SchedulerPolicy("fifo", 5).to_dict(), "task": "external", "seeds": {}},
        )
        store.append_trial_line("partial", TrialLine(0, 0, 0, 1.0, 2.0))
        assert run_cli(tmp_path, "select", "partial") == 2
        assert "incomplete" in capsys.readouterr().err

    def test_quickshift_overrides_change_segmentation(self, tmp_path, capsys):
        assert run_cli(tmp_path, "run", "--run-id", "r", *RUN_FLAGS) == 0
        assert run_cli(tmp_path, "select", "r") == 0
        default_out = capsys.readouterr().out
        assert run_cli(tmp_path, "select", "r", "--kernel-size", "5", "--max-dist", "5") == 0
        large_out = capsys.readouterr().out
        def regions(s):
            return int(s.rsplit("regions=", 1)[1].split()[0])
        assert regions(large_out) <= regions(default_out)


class TestBaselineAndEval:
    def test_baseline_requires_flag_for_oracle(self, tmp_path, capsys):
        assert run_cli(tmp_path, "run", "--run-id", "r", *RUN_FLAGS) == 0
        code = run_cli(tmp_path, "baseline", "r", "--methods", "oracle")
        assert code == 1
        assert "allow-test-metrics" in capsys.readouterr().err

    def test_baseline_selts_selvs_without_flag(self, tmp_path):
        assert run_cli(tmp_path, "run", "--run-id", "r", *RUN_FLAGS) == 0
        assert run_cli(tmp_path, "baseline", "r", "--methods", "selts,selvs") == 0
        doc = json.loads(artifact(tmp_path, "r", "baselines.json").read_text())
        assert [s["method"] for s in doc["selections"]] == ["selts", "selvs"]

    def test_eval_writes_report(self, tmp_path):
        assert run_cli(tmp_path, "run", "--run-id", "r", *RUN_FLAGS) == 0
        assert run_cli(tmp_path, "eval", "r", "--allow-test-metrics") == 0
        doc = json.loads(artifact(tmp_path, "r", "eval_report.json").read_text())
        assert "oracle" in doc["mae"]
        assert doc["mae"]["oracle"] == 0.0
        assert all(v >= 0 for v in doc["mae"].values())

    def test_eval_without_flag_is_usage_error(self, tmp_path):
        assert run_cli(tmp_path, "eval", "whatever") == 1


class TestPlot:
    @pytest.fixture()
    def completed_run(self, tmp_path):
        assert run_cli(tmp_path, "run", "--run-id", "r", *RUN_FLAGS) == 0
        return tmp_path

    @pytest.mark.parametrize("target", ["psi", "theta", "labels", "norm-vs-test"])
    def test_targets_render(self, completed_run, target, tmp_path):
        out = tmp_path / f"{target}.svg"
        assert run_cli(completed_run, "plot", "r", "--target", target, "--out", str(out)) == 0
        text = out.read_text()
        assert text.startswith("<svg") and text.rstrip().endswith("</svg>")

    def test_psi_heatmap_has_grid_cells_and_ticks(self, completed_run, tmp_path):
        out = tmp_path / "psi.svg"
        run_cli(completed_run, "plot", "r", "--target", "psi", "--out", str(out))
        text = out.read_text()
        assert text.count('stroke="#ffffff"') == 25
        assert "5e-5" in text and "5e-1" in text

    def test_plot_byte_stable(self, completed_run, tmp_path):
        out_a, out_b = tmp_path / "a.svg", tmp_path / "b.svg"
        run_cli(completed_run, "plot", "r", "--target", "labels", "--out", str(out_a))
        run_cli(completed_run, "plot", "r", "--target", "labels", "--out", str(out_b))
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_missing_artifact_exit_2(self, tmp_path):
        assert run_cli(tmp_path, "plot", "ghost", "--target", "psi", "--out", str(tmp_path / "x.svg")) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "twinsearch.cli", "--help"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "run" in proc.stdout and "select" in proc.stdout
