import json
import os

import numpy as np
import pytest

from ingsl import tensor as T
from ingsl.cli import default_battery, main, parse_config, run_gradcheck_battery
from ingsl.errors import ConfigError
from ingsl.graph import Graph, load_bundle, save_bundle


def strip_wall_time(obj):
    if isinstance(obj, dict):
        return {k: strip_wall_time(v) for k, v in obj.items() if "wall_time" not in k}
    if isinstance(obj, list):
        return [strip_wall_time(v) for v in obj]
    return obj


SBM_SPEC = {
    "block_sizes": [12, 12],
    "p_in": 0.4,
    "p_out": 0.03,
    "feature_dim": 4,
    "feature_noise": 0.5,
    "seed": 5,
}


def write_config(tmp_path, **overrides):
    cfg = {
        "dataset": {"sbm": SBM_SPEC},
        "k": 5,
        "reduction_levels": [0.5],
        "beta": 0.5,
        "seeds": [0, 1],
        "modes": ["ingsl", "similarity_only"],
        "epochs": 12,
        "patience": 6,
        "hidden": 8,
    }
    cfg.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


class TestConfigParsing:
    def test_defaults_fill_in(self):
        cfg = parse_config({"dataset": {"sbm": SBM_SPEC}})
        assert cfg.k == 30 and cfg.lr == 1e-2 and cfg.hidden == 128
        assert cfg.modes == ["ingsl"] and cfg.seeds == [0]

    def test_unknown_top_key_rejected(self):
        with pytest.raises(ConfigError, match="learning_rate"):
            parse_config({"dataset": {"sbm": SBM_SPEC}, "learning_rate": 0.1})

    def test_unknown_sbm_key_rejected(self):
        bad = dict(SBM_SPEC, extra=1)
        with pytest.raises(ConfigError, match="extra"):
            parse_config({"dataset": {"sbm": bad}})

    def test_unknown_noise_key_rejected(self):
        with pytest.raises(ConfigError, match="nois"):
            parse_config({"dataset": {"sbm": SBM_SPEC}, "noise": {"noise_level": 1}})

    def test_lr_range_enforced(self):
        with pytest.raises(ConfigError, match="lr"):
            parse_config({"dataset": {"sbm": SBM_SPEC}, "lr": 0.1})

    def test_reduction_range(self):
        with pytest.raises(ConfigError):
            parse_config({"dataset": {"sbm": SBM_SPEC}, "reduction_levels": [1.0]})

    def test_mode_singular_accepted(self):
        cfg = parse_config({"dataset": {"sbm": SBM_SPEC}, "mode": "random_prune"})
        assert cfg.modes == ["random_prune"]

    def test_dataset_shape(self):
        with pytest.raises(ConfigError):
            parse_config({"dataset": {"sbm": SBM_SPEC, "bundle": "x"}})
        with pytest.raises(ConfigError):
            parse_config({})

    def test_empty_seeds(self):
        with pytest.raises(ConfigError):
            parse_config({"dataset": {"sbm": SBM_SPEC}, "seeds": []})


class TestTrainCommand:
    def test_report_schema_and_csv(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert set(report) == {"version", "config", "cells", "aggregates"}
        assert len(report["cells"]) == 2 * 1 * 2  # modes x levels x seeds
        for cell in report["cells"]:
            assert 0.0 <= cell["test_acc"] <= 1.0
            assert cell["edges_final"] <= cell["edges_candidate"]
        agg = report["aggregates"]["ingsl"]["0.5"]
        assert agg["n_seeds"] == 2 and "std_test_acc" in agg
        lines = (out / "cells.csv").read_text().splitlines()
        assert lines[0] == "mode,r,seed,test_acc,edges_final,edge_multiple,flops"
        assert len(lines) == 5

    def test_single_seed_no_std(self, tmp_path):
        cfg = write_config(tmp_path, seeds=[3], modes=["random_prune"])
        out = tmp_path / "out"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        agg = json.loads((out / "report.json").read_text())["aggregates"]
        assert "std_test_acc" not in agg["random_prune"]["0.5"]

    def test_determinism_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, seeds=[0], modes=["ingsl"])
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["train", "--config", str(cfg), "--out", str(a)]) == 0
        assert main(["train", "--config", str(cfg), "--out", str(b)]) == 0
        ra = strip_wall_time(json.loads((a / "report.json").read_text()))
        rb = strip_wall_time(json.loads((b / "report.json").read_text()))
        assert json.dumps(ra, sort_keys=True) == json.dumps(rb, sort_keys=True)
        assert (a / "cells.csv").read_text() == (b / "cells.csv").read_text()

    def test_thread_parallelism_matches_serial(self, tmp_path):
        cfg = write_config(tmp_path, seeds=[0, 1], modes=["similarity_only"])
        a, b = tmp_path / "serial", tmp_path / "parallel"
        old = os.environ.get("INGSL_THREADS")
        try:
            os.environ["INGSL_THREADS"] = "1"
            assert main(["train", "--config", str(cfg), "--out", str(a)]) == 0
            os.environ["INGSL_THREADS"] = "2"
            assert main(["train", "--config", str(cfg), "--out", str(b)]) == 0
        finally:
            if old is None:
                os.environ.pop("INGSL_THREADS", None)
            else:
                os.environ["INGSL_THREADS"] = old
        ra = strip_wall_time(json.loads((a / "report.json").read_text()))
        rb = strip_wall_time(json.loads((b / "report.json").read_text()))
        assert json.dumps(ra, sort_keys=True) == json.dumps(rb, sort_keys=True)

    def test_seed_flag_overrides(self, tmp_path):
        cfg = write_config(tmp_path, seeds=[0, 1, 2], modes=["random_prune"])
        out = tmp_path / "out"
        assert main(["train", "--config", str(cfg), "--out", str(out), "--seed", "7"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert [c["seed"] for c in report["cells"]] == [7]

    def test_noise_config_runs(self, tmp_path):
        cfg = write_config(
            tmp_path,
            seeds=[0],
            modes=["ingsl"],
            noise={"add_ratio": 0.1, "del_ratio": 0.2, "feature_mask_ratio": 0.1},
        )
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0

    def test_bundle_dataset(self, tmp_path):
        gen_cfg = tmp_path / "gen.json"
        gen_cfg.write_text(json.dumps({"sbm": SBM_SPEC}))
        bundle = tmp_path / "bundle"
        assert main(["gen-sbm", "--config", str(gen_cfg), "--out", str(bundle)]) == 0
        cfg = write_config(tmp_path, dataset={"bundle": str(bundle)}, seeds=[0], modes=["ingsl"])
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0


class TestExitCodes:
    def test_missing_config_is_config_error(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1

    def test_usage_error_is_config_error(self):
        assert main(["train"]) == 1

    def test_unknown_key_is_config_error(self, tmp_path):
        cfg = write_config(tmp_path, bogus=1)
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_numeric_divergence_exit_two(self, tmp_path):
        g = Graph(
            features=np.full((6, 2), 1e308),
            labels=[0, 1, 0, 1, 0, 1],
            edges=[(0, 1), (2, 3), (4, 5), (1, 2)],
            train_mask=[1, 1, 0, 0, 0, 0],
            val_mask=[0, 0, 1, 1, 0, 0],
            test_mask=[0, 0, 0, 0, 1, 1],
        )
        save_bundle(g, tmp_path / "bad")
        cfg = write_config(
            tmp_path, dataset={"bundle": str(tmp_path / "bad")}, seeds=[0], modes=["ingsl"], k=2
        )
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_sweep_single_level_rejected(self, tmp_path):
        cfg = write_config(tmp_path, reduction_levels=[0.5])
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


class TestSweep:
    def test_row_accounting(self, tmp_path):
        cfg = write_config(tmp_path, reduction_levels=[0.3, 0.6], seeds=[0], epochs=8)
        out = tmp_path / "out"
        assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "mode,r,mean_test_acc,std_test_acc,mean_edges_final,mean_edge_multiple"
        assert len(lines) - 1 == 2 * 2  # modes x levels

    def test_random_prune_accuracy_non_increasing_in_r(self, tmp_path):
        # With a sparse original graph and informative candidates, dropping
        # more random candidate edges costs accuracy on average.
        cfg = write_config(
            tmp_path,
            dataset={
                "sbm": {
                    "block_sizes": [20, 20, 20],
                    "p_in": 0.04,
                    "p_out": 0.005,
                    "feature_dim": 6,
                    "feature_noise": 0.2,
                    "seed": 11,
                }
            },
            k=4,
            hidden=16,
            metric="cosine",
            modes=["random_prune"],
            reduction_levels=[0.2, 0.8],
            seeds=[0, 1, 2, 3, 4],
            epochs=60,
            patience=20,
        )
        out = tmp_path / "out"
        assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
        agg = json.loads((out / "report.json").read_text())["aggregates"]["random_prune"]
        assert agg["0.2"]["mean_test_acc"] >= agg["0.8"]["mean_test_acc"]


class TestVerifyLemmas:
    def test_single_trial_completes(self, tmp_path, capsys):
        assert main(["verify-lemmas", "--trials", "1", "--seed", "0"]) == 0
        out = capsys.readouterr().out
        assert "0 violations" in out

    def test_byte_identical_reports(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["verify-lemmas", "--trials", "40", "--seed", "2", "--out", str(a)]) == 0
        assert main(["verify-lemmas", "--trials", "40", "--seed", "2", "--out", str(b)]) == 0
        assert (a / "lemmas.json").read_bytes() == (b / "lemmas.json").read_bytes()


class TestGradcheck:
    def test_fresh_build_all_pass(self, tmp_path):
        a = tmp_path / "a"
        assert main(["gradcheck", "--seed", "0", "--out", str(a)]) == 0
        payload = json.loads((a / "gradcheck.json").read_text())
        assert payload["all_pass"] is True
        assert len(payload["rows"]) == len(default_battery(0))

    def test_byte_identical_reports(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["gradcheck", "--seed", "1", "--out", str(a)]) == 0
        assert main(["gradcheck", "--seed", "1", "--out", str(b)]) == 0
        assert (a / "gradcheck.json").read_bytes() == (b / "gradcheck.json").read_bytes()

    def test_corrupted_backward_reported_as_failure(self):
        # Negative control: an op whose backward rule is deliberately wrong.
        def corrupt_square_check():
            x = T.parameter(np.array([1.0, 2.0, 3.0]))

            def broken_square(t):
                out = T.Tensor(t.data**2)
                return T.record_op(out, (t,), lambda g: (3.0 * t.data * g,), "broken")

            return T.gradient_check(lambda p: T.sum_all(broken_square(p)), [x])

        rows, ok = run_gradcheck_battery(
            list(default_battery(0)) + [("broken_square", corrupt_square_check)]
        )
        assert not ok
        failed = [r for r in rows if not r["pass"]]
        assert [r["op"] for r in failed] == ["broken_square"]


class TestDiagnoseRedundancy:
    def test_identical_feature_ring_profile_is_one(self, tmp_path):
        # Ring graph, identical features: aggregation is degree-regular so all
        # embeddings coincide and every profile entry is 1.0.
        n = 9
        edges = [(i, (i + 1) % n) for i in range(n)]
        edges = [(min(a, b), max(a, b)) for a, b in edges]
        g = Graph(
            features=np.ones((n, 3)),
            labels=[i % 3 for i in range(n)],
            edges=sorted(edges),
            train_mask=[i % 3 == 0 for i in range(n)],
            val_mask=[i % 3 == 1 for i in range(n)],
            test_mask=[i % 3 == 2 for i in range(n)],
        )
        save_bundle(g, tmp_path / "ring")
        cfg = write_config(
            tmp_path, dataset={"bundle": str(tmp_path / "ring")}, k=3, epochs=3, seeds=[0]
        )
        out = tmp_path / "diag"
        code = main(
            ["diagnose-redundancy", "--config", str(cfg), "--out", str(out), "--k-values", "2,3"]
        )
        assert code == 0
        lines = (out / "redundancy.csv").read_text().splitlines()
        assert lines[0] == "k,mean_pairwise_cosine"
        assert len(lines) == 3
        for line in lines[1:]:
            assert abs(float(line.split(",")[1]) - 1.0) < 1e-9


class TestGenSbm:
    def test_bundle_roundtrip(self, tmp_path):
        gen_cfg = tmp_path / "gen.json"
        gen_cfg.write_text(json.dumps({"sbm": SBM_SPEC}))
        out = tmp_path / "bundle"
        assert main(["gen-sbm", "--config", str(gen_cfg), "--out", str(out)]) == 0
        g = load_bundle(out)
        assert g.n == 24 and g.classes == 2
