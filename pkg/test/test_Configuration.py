import json
import os
import tempfile
import unittest
from unittest import mock

from harmonic.Errors import ConfigurationError
from utils import Configuration

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def with_changes(**changes):
    with open(os.path.join(ROOT, "config.example.json"), encoding="UTF-8") as file:
        data = json.load(file)
    data.update(changes)
    return json.dumps(data)


class RunConfigTest(unittest.TestCase):

    def test_example_config(self):
        cfg = Configuration.load_run_config(os.path.join(ROOT, "config.example.json"))
        self.assertEqual([p.z for p in cfg.punctures], [-3.0, 3.0])
        grid = cfg.grid_spec()
        self.assertEqual((grid.z_min, grid.z_max, grid.n_z), (-60.0, 60.0, 384))
        self.assertEqual(cfg.solver.options().linear_solver, "direct")
        self.assertEqual(cfg.puncture_config().N, 2)

    def test_defaults(self):
        cfg = Configuration.load_run_config(None)
        self.assertEqual(cfg.punctures, [])
        self.assertEqual(cfg.grid.n_rho, 160)
        self.assertIsNone(cfg.output_dir)

    def test_rejections(self):
        bad = [
            "{not json",
            with_changes(unknown_key=1),
            with_changes(schema_version=2),
            with_changes(punctures=[{"z": 0.0, "J": 0.0}]),
            with_changes(punctures=[{"z": 1.0, "J": 1.0}, {"z": -1.0, "J": 1.0}]),
            with_changes(punctures=[{"z": 0.0, "J": 1.0}, {"z": 0.015, "J": 1.0}]),
            with_changes(punctures=[{"z": 0.0, "J": 1.0}], grid={"n_rho": 16, "n_z": 16}),
            with_changes(spectral={"b_list": [1.0]}),
            with_changes(spectral={"modes": [-1]}),
            with_changes(solver={"linear_solver": "cg"}),
            with_changes(grid={"n_rho": 2}),
        ]
        for text in bad:
            with self.assertRaises(ConfigurationError, msg=text[:80]):
                Configuration.parse_run_config(text)

    def test_unreadable_file(self):
        with self.assertRaises(ConfigurationError):
            Configuration.load_run_config(os.path.join(ROOT, "no_such_config.json"))

    def test_hash(self):
        a = Configuration.parse_run_config(with_changes())
        b = Configuration.parse_run_config(with_changes())
        c = Configuration.parse_run_config(with_changes(seed=1))
        self.assertEqual(Configuration.config_hash(a), Configuration.config_hash(b))
        self.assertNotEqual(Configuration.config_hash(a), Configuration.config_hash(c))
        self.assertEqual(len(Configuration.config_hash(a)), 64)


class AppSettingsTest(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        path = os.path.join(self.tmp.name, "config.json")
        patches = [mock.patch.object(Configuration, "CONFIG_FILE", path),
                   mock.patch.object(Configuration, "MASTER_CONFIG", dict()),
                   mock.patch.object(Configuration, "MASTER_LOADED", False)]
        for patch in patches:
            patch.start()
            self.addCleanup(patch.stop)
        self.path = path

    def test_defaults_are_written_back(self):
        self.assertEqual(Configuration.get_var("METRICS_FILE", "metrics.prom"), "metrics.prom")
        with open(self.path, encoding="UTF-8") as file:
            self.assertEqual(json.load(file), {"METRICS_FILE": "metrics.prom"})

    def test_existing_values_win(self):
        with open(self.path, "w", encoding="UTF-8") as file:
            json.dump({"commands": ["Solve"]}, file)
        self.assertEqual(Configuration.get_var("commands", Configuration.DEFAULT_COMMANDS), ["Solve"])


if __name__ == "__main__":
    unittest.main()
