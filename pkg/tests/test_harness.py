"""Data exchange, experiment configuration, synthesis, and the CLI."""
import json
import warnings

import numpy as np
import pytest

from flowcamo.core import ValidationError
from flowcamo.harness import synth
from flowcamo.harness.cli import main
from flowcamo.harness.csvio import (
    CsvParseError,
    dataset_to_csv,
    ingest_csv,
    read_signature_csv,
    signatures_to_csv,
)
from flowcamo.harness.experiment import ExperimentConfig
from flowcamo.profiler import make_identities, signature_batch


class TestDatasetCsv:
    def test_round_trip_bit_identical(self, small_dataset, tmp_path):
        path = str(tmp_path / "ds.csv")
        dataset_to_csv(small_dataset, path)
        back = ingest_csv(path, small_dataset.schema, small_dataset.class_labels)
        np.testing.assert_array_equal(back.X, small_dataset.X)
        np.testing.assert_array_equal(back.y, small_dataset.y)
        assert back.class_labels == small_dataset.class_labels

    def test_label_inference_sorted(self, small_dataset, tmp_path):
        path = str(tmp_path / "ds.csv")
        dataset_to_csv(small_dataset, path)
        back = ingest_csv(path, small_dataset.schema)
        assert back.class_labels == tuple(sorted(small_dataset.class_labels))

    def test_bad_header_reports_line(self, pool_schema, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("# a comment\nwrong,header\n")
        with pytest.raises(CsvParseError) as err:
            ingest_csv(str(path), pool_schema)
        assert err.value.line == 2

    def test_non_numeric_cell_reports_line_and_column(self, small_dataset, tmp_path):
        path = tmp_path / "ds.csv"
        dataset_to_csv(small_dataset, str(path))
        lines = path.read_text().splitlines()
        cells = lines[3].split(",")
        cells[1] = "oops"
        lines[3] = ",".join(cells)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CsvParseError) as err:
            ingest_csv(str(path), small_dataset.schema)
        assert err.value.line == 4
        assert err.value.column == small_dataset.schema.names[1]

    def test_out_of_range_cell_rejected(self, small_dataset, tmp_path):
        path = tmp_path / "ds.csv"
        dataset_to_csv(small_dataset, str(path))
        lines = path.read_text().splitlines()
        cells = lines[2].split(",")
        cells[0] = repr(float(small_dataset.schema.highs[0]) * 10)
        lines[2] = ",".join(cells)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CsvParseError) as err:
            ingest_csv(str(path), small_dataset.schema)
        assert err.value.column == small_dataset.schema.names[0]

    def test_unknown_label_rejected(self, small_dataset, tmp_path):
        path = str(tmp_path / "ds.csv")
        dataset_to_csv(small_dataset, path)
        with pytest.raises(ValidationError):
            ingest_csv(path, small_dataset.schema, class_labels=("only_one",))

    def test_empty_file_rejected(self, pool_schema, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("# nothing here\n")
        with pytest.raises(CsvParseError):
            ingest_csv(str(path), pool_schema)


class TestSignatureCsv:
    def test_round_trip(self, tmp_path):
        idents = make_identities(4, seed=3)
        P, Csi, y = signature_batch(idents, 6, noise_seed=2)
        labels = tuple(f"device_{i:02d}" for i in range(4))
        path = str(tmp_path / "sigs.csv")
        signatures_to_csv(P, Csi, y, labels, path)
        P2, Csi2, y2, labels2 = read_signature_csv(path)
        np.testing.assert_array_equal(P2, P)
        np.testing.assert_array_equal(Csi2, Csi)
        np.testing.assert_array_equal(y2, y)
        assert labels2 == labels

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "sigs.csv"
        path.write_text("a,b,c\n")
        with pytest.raises(CsvParseError):
            read_signature_csv(str(path))


class TestExperimentConfig:
    def test_unknown_keys_rejected(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.from_dict({"seed": 1, "not_a_field": 2})

    def test_from_file_with_overrides(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"seed": 5, "n_classes": 12}))
        cfg = ExperimentConfig.from_file(str(path), {"seed": 9})
        assert cfg.seed == 9  # override wins
        assert cfg.n_classes == 12

    def test_round_trip_preserves_hash(self):
        cfg = ExperimentConfig(seed=7, rows_per_class=50)
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again == cfg
        assert again.config_hash() == cfg.config_hash()

    def test_hash_sensitive_to_fields(self):
        assert (
            ExperimentConfig(seed=1).config_hash()
            != ExperimentConfig(seed=2).config_hash()
        )


class TestSynthesis:
    def test_generation_deterministic(self, profiles, pool_schema):
        a = synth.generate_dataset(profiles, rows_per_class=20, seed=3, schema=pool_schema)
        b = synth.generate_dataset(profiles, rows_per_class=20, seed=3, schema=pool_schema)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.y, b.y)

    def test_seed_changes_data(self, profiles, pool_schema):
        a = synth.generate_dataset(profiles, rows_per_class=20, seed=3, schema=pool_schema)
        b = synth.generate_dataset(profiles, rows_per_class=20, seed=4, schema=pool_schema)
        assert not np.array_equal(a.X, b.X)

    def test_rows_in_schema_range(self, small_dataset, pool_schema):
        assert np.all(small_dataset.X >= pool_schema.lows)
        assert np.all(small_dataset.X <= pool_schema.highs)

    def test_default_profiles_separable(self, profiles):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert synth.check_separability(profiles)

    def test_collapsed_profiles_warn(self, pool_schema):
        p = synth.default_profiles(pool_schema, n_classes=4, separability=0.01)
        with pytest.warns(UserWarning):
            assert not synth.check_separability(p)

    def test_type_helpers(self, profiles):
        cams = synth.classes_of_type(profiles, "camera")
        assert cams
        assert synth.type_of_class(profiles, cams[0]) == "camera"


class TestCli:
    def test_gen_data_and_ingest(self, tmp_path, capsys):
        out = str(tmp_path / "d.csv")
        rc = main([
            "gen-data", "--out", out, "--n-classes", "4",
            "--rows-per-class", "10", "--seed", "3",
        ])
        assert rc == 0
        rc = main(["ingest", out])
        assert rc == 0
        assert "4 classes" in capsys.readouterr().out

    def test_train_target_and_substitute(self, tmp_path, capsys):
        data = str(tmp_path / "d.csv")
        main(["gen-data", "--out", data, "--n-classes", "4",
              "--rows-per-class", "30", "--seed", "3"])
        model = str(tmp_path / "tree.npz")
        rc = main(["train-target", "--data", data, "--kind", "decision_tree",
                   "--out", model, "--seed", "3"])
        assert rc == 0
        sub = str(tmp_path / "sub.npz")
        rc = main(["train-substitute", "--data", data, "--target", model,
                   "--out", sub, "--epochs", "5", "--seed", "3"])
        assert rc == 0
        assert "oracle agreement" in capsys.readouterr().out

    def test_run_tiny_pipeline(self, tmp_path, capsys):
        out_dir = str(tmp_path / "out")
        rc = main([
            "run", "--out-dir", out_dir, "--n-classes", "4",
            "--rows-per-class", "20", "--substitute-epochs", "4",
            "--generator-epochs", "4", "--no-defense", "--no-spoof",
            "--seed", "3",
        ])
        assert rc == 0
        txt = capsys.readouterr().out
        for name in ("table1.csv", "table2.csv", "manifest.txt"):
            assert name in txt

    def test_bad_input_is_an_error_exit(self, tmp_path, capsys):
        missing = str(tmp_path / "nope.csv")
        rc = main(["train-target", "--data", missing, "--kind", "svm",
                   "--out", str(tmp_path / "m.npz")])
        assert rc != 0
