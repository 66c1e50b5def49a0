import json
import os

import click

from utils import Configuration, Logging, Utils
from utils.Logging import TCol


class BaseCommand:
    name = None

    def __init__(self, app):
        self.app = app

    @property
    def metrics(self):
        return self.app.metrics

    def click_command(self) -> click.Command:
        raise NotImplementedError

    def run(self, cfg: Configuration.RunConfig, out_dir, **options) -> int:
        raise NotImplementedError

    def output(self, out_dir, name):
        return os.path.join(out_dir, name)

    def invoke(self, **options) -> int:
        """Runs the command with manifest, error.json and metrics export around it; returns the exit code."""
        app = self.app
        out_dir = app.output_dir()
        os.makedirs(out_dir, exist_ok=True)
        manifest = Utils.Manifest(self.name, None, app.seed)
        status = "ok"
        try:
            cfg = app.run_config()
            manifest.data["config_hash"] = Configuration.config_hash(cfg)
            manifest.data["seed"] = app.seed if app.seed is not None else cfg.seed
            Logging.info(f"run {TCol.cOkCyan}{self.name}{TCol.cEnd} -> {out_dir}")
            code = self.run(cfg, out_dir, **options) or 0
            if code:
                status = "failed"
        except Exception as e:
            record = Utils.log_exception(f"{self.name} failed", e, command=self.name, **options)
            Utils.save_to_disk(os.path.join(out_dir, "error"), record)
            click.echo(json.dumps(record), err=True)
            code = record["exit_code"]
            status = record["type"]
        manifest.finish(out_dir, status)
        app.export_metrics(out_dir)
        return code
