import numpy as np
import pytest

from oodkit import (
    ClassifierHead,
    FeatureBank,
    parse_eval_table,
    read_bank,
    write_bank,
)
from oodkit.cli import main


def make_benchmark(tmp_path, seed=0, n_bank=300, n_eval=120, d=6, K=3):
    """Bank + ID/OOD eval sets: Gaussian clusters with a head trained on
    the bank; OOD samples come from novel clusters at the same scale."""
    tmp_path.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((K, d)) * 2.0
    ood_centers = rng.standard_normal((K, d)) * 2.0 + 2.5

    def sample(n, cs):
        labels = rng.integers(0, K, n)
        feats = cs[labels] + 0.3 * rng.standard_normal((n, d)) + 1.5
        return feats, labels

    bank_feats, bank_labels = sample(n_bank, centers)
    from oodkit.toy import fit_softmax_head

    head = fit_softmax_head(
        FeatureBank(features=bank_feats, K=K, labels=bank_labels), iters=500
    )
    id_feats, _ = sample(n_eval, centers)
    ood_feats, _ = sample(n_eval, ood_centers)
    paths = {}
    for name, feats, labels in (
        ("bank", bank_feats, bank_labels),
        ("id", id_feats, None),
        ("ood", ood_feats, None),
    ):
        bank = FeatureBank(
            features=feats, K=K, logits=head.logits(feats), labels=labels
        )
        path = tmp_path / f"{name}.oodb"
        write_bank(bank, head, path)
        paths[name] = path
    return paths


class TestBankCommand:
    def test_subsample_and_provenance(self, tmp_path, capsys):
        paths = make_benchmark(tmp_path)
        out = tmp_path / "sub.oodb"
        code = main(
            ["bank", "--bank", str(paths["bank"]), "--alpha", "10",
             "--seed", "3", "--out", str(out)]
        )
        assert code == 0
        sub, head = read_bank(out)
        assert sub.n == 30 and head is not None
        meta = (tmp_path / "sub.oodb.meta").read_text()
        assert "alpha_percent: 10.0" in meta and "seed: 3" in meta
        assert "PCG64" in meta

    def test_alpha_100_keeps_all_rows(self, tmp_path):
        paths = make_benchmark(tmp_path)
        out = tmp_path / "all.oodb"
        assert main(["bank", "--bank", str(paths["bank"]), "--alpha", "100",
                     "--seed", "0", "--out", str(out)]) == 0
        original, _ = read_bank(paths["bank"])
        sub, _ = read_bank(out)
        np.testing.assert_array_equal(sub.features, original.features)

    def test_rerun_same_seed_identical_bytes(self, tmp_path):
        paths = make_benchmark(tmp_path)
        a, b = tmp_path / "a.oodb", tmp_path / "b.oodb"
        for out in (a, b):
            main(["bank", "--bank", str(paths["bank"]), "--alpha", "5",
                  "--seed", "11", "--out", str(out)])
        assert a.read_bytes() == b.read_bytes()


class TestEvalCommand:
    def run_eval(self, paths, tmp_path, scores="energy", extra=(), ood=None):
        out = tmp_path / "table.tsv"
        ood_args = []
        for name, path in (ood or [("shifted", paths["ood"])]):
            ood_args += ["--ood", f"{name}={path}"]
        code = main(
            ["eval", "--bank", str(paths["bank"]), "--id", str(paths["id"])]
            + ood_args
            + ["--scores", scores, "--out", str(out), *extra]
        )
        return code, out

    def test_single_score_single_ood(self, tmp_path, capsys):
        paths = make_benchmark(tmp_path)
        code, out = self.run_eval(paths, tmp_path)
        assert code == 0
        table = parse_eval_table(out.read_text())
        assert len(table.rows) == 1
        data_row = table.rows[0]
        avg_row = table.average_rows()[0]
        assert (avg_row.fpr95, avg_row.auroc, avg_row.aupr) == (
            data_row.fpr95, data_row.auroc, data_row.aupr,
        )
        # stdout carries the human table
        assert "average" in capsys.readouterr().out

    def test_id_equals_ood_gives_half_auroc(self, tmp_path):
        paths = make_benchmark(tmp_path)
        code, out = self.run_eval(
            paths, tmp_path, scores="energy,knn,nnguide",
            ood=[("self", paths["id"])],
        )
        assert code == 0
        for row in parse_eval_table(out.read_text()).rows:
            assert row.auroc == pytest.approx(0.5, abs=1e-9)

    def test_swapping_ood_sets_permutes_rows(self, tmp_path):
        paths = make_benchmark(tmp_path)
        other = make_benchmark(tmp_path / "o", seed=9)
        ood_a = [("x", paths["ood"]), ("y", other["ood"])]
        ood_b = [("y", other["ood"]), ("x", paths["ood"])]
        _, out_a = self.run_eval(paths, tmp_path, ood=ood_a)
        table_a = parse_eval_table(out_a.read_text())
        _, out_b = self.run_eval(paths, tmp_path, ood=ood_b)
        table_b = parse_eval_table(out_b.read_text())
        assert {r.ood_set: r for r in table_a.rows} == {
            r.ood_set: r for r in table_b.rows
        }
        assert table_a.average_rows() == table_b.average_rows()

    def test_distance_scores_separate_novel_clusters(self, tmp_path):
        paths = make_benchmark(tmp_path)
        code, out = self.run_eval(paths, tmp_path, scores="knn,mahalanobis,nnguide")
        table = parse_eval_table(out.read_text())
        by_score = {r.score: r for r in table.rows}
        # novel clusters are the distance detectors' favorable geometry
        assert by_score["knn"].auroc > 0.9
        assert by_score["mahalanobis"].auroc > 0.9
        assert 0.0 <= by_score["nnguide"].auroc <= 1.0

    def test_react_flag(self, tmp_path):
        paths = make_benchmark(tmp_path)
        code, out = self.run_eval(paths, tmp_path, scores="energy",
                                  extra=["--react=90"])
        assert code == 0

    def test_vim_dim_flag(self, tmp_path):
        paths = make_benchmark(tmp_path)
        code, out = self.run_eval(paths, tmp_path, scores="vim",
                                  extra=["--vim-dim", "2"])
        assert code == 0
        assert parse_eval_table(out.read_text()).rows[0].score == "vim"

    def test_table_format_output(self, tmp_path):
        paths = make_benchmark(tmp_path)
        code, out = self.run_eval(paths, tmp_path, extra=["--format", "table"])
        assert out.read_text().startswith("score")

    def test_unknown_score_is_usage_error(self, tmp_path):
        paths = make_benchmark(tmp_path)
        code, _ = self.run_eval(paths, tmp_path, scores="odin")
        assert code == 2

    def test_missing_file_is_data_error(self, tmp_path):
        paths = make_benchmark(tmp_path)
        code = main(
            ["eval", "--bank", str(tmp_path / "nope.oodb"),
             "--id", str(paths["id"]), "--ood", f"x={paths['ood']}"]
        )
        assert code == 3

    def test_corrupt_file_is_data_error(self, tmp_path):
        paths = make_benchmark(tmp_path)
        bad = tmp_path / "bad.oodb"
        bad.write_bytes(b"XXXX" + paths["bank"].read_bytes()[4:])
        code = main(
            ["eval", "--bank", str(bad), "--id", str(paths["id"]),
             "--ood", f"x={paths['ood']}", "--scores", "energy"]
        )
        assert code == 3

    def test_dimension_mismatch_is_data_error(self, tmp_path):
        paths = make_benchmark(tmp_path)
        other = make_benchmark(tmp_path / "o", seed=1, d=4)
        code = main(
            ["eval", "--bank", str(paths["bank"]), "--id", str(other["id"]),
             "--ood", f"x={paths['ood']}", "--scores", "energy"]
        )
        assert code == 3

    def test_csv_ingestion(self, tmp_path):
        paths = make_benchmark(tmp_path)
        bank, _ = read_bank(paths["id"])
        csv_path = tmp_path / "id.csv"
        lines = []
        for i in range(bank.n):
            cells = [repr(float(v)) for v in bank.features[i]] + [
                repr(float(v)) for v in bank.logits[i]
            ]
            lines.append(",".join(cells))
        csv_path.write_text("\n".join(lines) + "\n")
        out = tmp_path / "t.tsv"
        code = main(
            ["eval", "--bank", str(paths["bank"]), "--id", str(csv_path),
             "--ood", f"x={paths['ood']}", "--scores", "energy",
             "--csv-features", str(bank.d), "--csv-logits", str(bank.K),
             "--out", str(out)]
        )
        assert code == 0


class TestSweepCommand:
    def test_grid_rows(self, tmp_path, capsys):
        paths = make_benchmark(tmp_path)
        out = tmp_path / "sweep.tsv"
        code = main(
            ["sweep", "--bank", str(paths["bank"]), "--id", str(paths["id"]),
             "--ood", f"x={paths['ood']}", "--k-list", "1,5",
             "--alpha-list", "50,100", "--seed", "0", "--out", str(out)]
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "alpha\tk\tk_used\tood\tfpr95\tauroc\taupr"
        # 2 alphas x 2 ks x (1 ood + 1 average)
        assert len(lines) == 1 + 8

    def test_single_cell_matches_eval_on_presubsampled_bank(self, tmp_path):
        paths = make_benchmark(tmp_path)
        sub_path = tmp_path / "sub.oodb"
        main(["bank", "--bank", str(paths["bank"]), "--alpha", "50",
              "--seed", "4", "--out", str(sub_path)])
        eval_out = tmp_path / "eval.tsv"
        main(["eval", "--bank", str(sub_path), "--id", str(paths["id"]),
              "--ood", f"x={paths['ood']}", "--scores", "nnguide",
              "--k", "5", "--out", str(eval_out)])
        sweep_out = tmp_path / "sweep.tsv"
        main(["sweep", "--bank", str(paths["bank"]), "--id", str(paths["id"]),
              "--ood", f"x={paths['ood']}", "--k-list", "5",
              "--alpha-list", "50", "--seed", "4", "--out", str(sweep_out)])
        eval_row = parse_eval_table(eval_out.read_text()).rows[0]
        sweep_line = sweep_out.read_text().splitlines()[1].split("\t")
        assert float(sweep_line[4]) == eval_row.fpr95
        assert float(sweep_line[5]) == eval_row.auroc
        assert float(sweep_line[6]) == eval_row.aupr

    def test_k_clamped_and_flagged(self, tmp_path, capsys):
        paths = make_benchmark(tmp_path, n_bank=40)
        out = tmp_path / "s.tsv"
        code = main(
            ["sweep", "--bank", str(paths["bank"]), "--id", str(paths["id"]),
             "--ood", f"x={paths['ood']}", "--k-list", "5000",
             "--alpha-list", "100", "--seed", "0", "--out", str(out)]
        )
        assert code == 0
        line = out.read_text().splitlines()[1].split("\t")
        assert line[1] == "5000" and line[2] == "40"
        assert "clamped" in capsys.readouterr().err


class TestBenchCommand:
    def test_zero_repeats_is_empty_report(self, capsys):
        code = main(["bench", "--n", "50", "--d", "8", "--repeats", "0"])
        assert code == 0
        assert "nothing measured" in capsys.readouterr().out

    def test_report_shape(self, capsys):
        code = main(
            ["bench", "--n", "200", "--d", "16", "--queries", "64",
             "--repeats", "1", "--threads", "2"]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "qps" in out
        assert "identical across thread counts: yes" in out


class TestToyCommand:
    def test_emits_grids_and_summary(self, tmp_path, capsys):
        out_dir = tmp_path / "toy"
        code = main(
            ["toy", "--out", str(out_dir), "--scores", "energy,nnguide",
             "--n-per-class", "60", "--resolution", "8", "--seed", "1"]
        )
        assert code == 0
        for name in ("energy", "nnguide"):
            assert (out_dir / f"{name}.pgm").exists()
            assert (out_dir / f"{name}.csv").exists()
        assert "auroc" in capsys.readouterr().out


class TestUsageErrors:
    def test_no_ood_given(self, tmp_path):
        paths = make_benchmark(tmp_path)
        code = main(
            ["eval", "--bank", str(paths["bank"]), "--id", str(paths["id"]),
             "--scores", "energy"]
        )
        assert code == 2

    def test_argparse_usage_exit(self):
        with pytest.raises(SystemExit) as err:
            main(["eval"])  # missing required args
        assert err.value.code == 2
