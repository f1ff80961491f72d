import importlib
import os
import sys
import tempfile
import unittest
from pathlib import Path
from unittest import mock

import numpy as np


class ConfigStorageTests(unittest.TestCase):
    def setUp(self) -> None:
        self.tempdir = tempfile.TemporaryDirectory()
        self.addCleanup(self.tempdir.cleanup)
        self.home = Path(self.tempdir.name)
        self.env_patch = mock.patch.dict(os.environ, {"DRIVEPROFILE_HOME": str(self.home)})
        self.env_patch.start()
        self.addCleanup(self.env_patch.stop)
        # Reload modules so they pick up the new DRIVEPROFILE_HOME; put the originals back after.
        reloaded = ["driveprofile.config", "driveprofile.storage"]
        originals = {mod: sys.modules.get(mod) for mod in reloaded}
        self.addCleanup(self._restore_modules, originals)
        for mod in reloaded:
            if mod in sys.modules:
                del sys.modules[mod]
        self.config = importlib.import_module("driveprofile.config")
        self.storage = importlib.import_module("driveprofile.storage")
        self.errors = importlib.import_module("driveprofile.errors")
        self.lstm = importlib.import_module("driveprofile.lstm")
        self.models = importlib.import_module("driveprofile.models")

    @staticmethod
    def _restore_modules(originals) -> None:
        package = importlib.import_module("driveprofile")
        for name, module in originals.items():
            if module is None:
                sys.modules.pop(name, None)
                continue
            sys.modules[name] = module
            setattr(package, name.rsplit(".", 1)[1], module)

    def test_config_respects_env_home(self) -> None:
        self.assertEqual(self.config.DEFAULT_CONFIG_PATH, self.home / "run.toml")
        cfg = self.config.load_config()
        self.assertEqual(cfg.run_dir, self.home / "runs" / "default")
        self.assertEqual(cfg.train.optimizer.learning_rate, 1e-3)
        self.assertEqual(cfg.eval.window_sizes, [200, 100, 50, 25])
        self.assertEqual(set(cfg.provenance.values()), {"default"})

    def test_starter_file_then_flags_take_precedence(self) -> None:
        path = self.config.write_starter_config(
            self.home / "run.toml", ["normal"], ["aggressive_brake"], "runs/a"
        )
        cfg = self.config.load_config(path, ["train.epochs=3", "optim.learning_rate=0.01"])
        self.assertEqual(cfg.train.epochs, 3)
        self.assertEqual(cfg.train.optimizer.learning_rate, 0.01)
        self.assertEqual(cfg.train.batch_size, 64)
        self.assertEqual(cfg.provenance["train.epochs"], "flag")
        self.assertEqual(cfg.provenance["train.batch_size"], "file")
        # Relative paths resolve against the config file's folder.
        self.assertEqual(cfg.data.train_sessions, [self.home / "normal"])
        self.assertEqual(cfg.run_dir, self.home / "runs" / "a")
        echo = cfg.to_dict()
        self.assertEqual(echo["optim"]["learning_rate"], 0.01)
        self.assertEqual(echo["provenance"]["optim.learning_rate"], "flag")

    def test_invalid_values_raise_config_error(self) -> None:
        for override in ["train.epochs=0", 'train.epochs="many"', "nope.key=1", "train.nope=1"]:
            with self.assertRaises(self.errors.ConfigError):
                self.config.load_config(None, [override])
        with self.assertRaises(self.errors.ConfigError):
            self.config.load_config(self.home / "missing.toml")
        broken = self.home / "broken.toml"
        broken.write_text("[train\nepochs = 3", encoding="utf-8")
        with self.assertRaises(self.errors.ConfigError) as ctx:
            self.config.load_config(broken)
        self.assertEqual(ctx.exception.exit_code, 2)

    def test_checkpoint_round_trip_is_byte_identical(self) -> None:
        model = self.lstm.init_model(5, 2, seed=3, dense_size=4, window_size=7)
        first = self.home / "a.bin"
        second = self.home / "b.bin"
        sha = self.storage.save_checkpoint(model, first)
        loaded = self.storage.load_checkpoint(first)
        self.assertEqual(self.storage.save_checkpoint(loaded, second), sha)
        self.assertEqual(first.read_bytes(), second.read_bytes())
        self.assertEqual(loaded.window_size, 7)
        self.assertEqual(loaded.dense_size, 4)
        for name, tensor in model.params.items():
            np.testing.assert_array_equal(loaded.params[name], tensor)

    def test_corrupt_checkpoint_is_rejected(self) -> None:
        path = self.home / "model.bin"
        self.storage.save_checkpoint(self.lstm.init_model(2, 1, seed=0), path)
        payload = path.read_bytes()
        path.write_bytes(b"XXXXXXXX" + payload[8:])
        with self.assertRaises(self.errors.ModelError):
            self.storage.load_checkpoint(path)
        path.write_bytes(payload[:-8])
        with self.assertRaises(self.errors.ModelError):
            self.storage.load_checkpoint(path)

    def test_scaler_round_trip_is_bit_exact(self) -> None:
        rng = np.random.default_rng(0)
        low = rng.normal(size=12)
        params = self.models.ScalerParams(
            minimum=low, maximum=low + rng.uniform(0.1, 1.0, size=12), provenance="abc"
        )
        path = self.home / "scaler.toml"
        self.storage.save_scaler(params, path)
        loaded = self.storage.load_scaler(path)
        np.testing.assert_array_equal(loaded.minimum, params.minimum)
        np.testing.assert_array_equal(loaded.maximum, params.maximum)
        self.assertEqual(loaded.channels, params.channels)
        self.assertEqual(loaded.provenance, "abc")

    def test_manifest_recovers_from_corrupt_json(self) -> None:
        path = self.home / "manifest.json"
        self.storage.save_manifest({"b": 1, "a": [1.5, 2]}, path)
        self.assertEqual(self.storage.load_manifest(path), {"a": [1.5, 2], "b": 1})
        path.write_text("{not valid json", encoding="utf-8")
        with self.assertRaises(self.errors.DataError):
            self.storage.load_manifest(path)
        self.assertTrue(path.with_suffix(".bak").exists())

    def test_scores_round_trip(self) -> None:
        Behavior = self.models.Behavior
        records = [
            self.models.ScoreRecord(origin=50, error=0.1 + 0.2, label=Behavior.NORMAL, session="s"),
            self.models.ScoreRecord(origin=51, error=1e-17, label=Behavior.AGGR_BRAKE, session="s"),
        ]
        path = self.home / "scores.csv"
        self.storage.save_scores(records, path, decisions=["normal", "aggressive"])
        self.assertEqual(self.storage.load_scores(path), records)
        self.assertIn("decision", path.read_text(encoding="utf-8").splitlines()[0])


if __name__ == "__main__":
    unittest.main()
