import importlib
import os
import sys

import click
import sentry_sdk
from prometheus_client import CollectorRegistry

from harmonic.Errors import ConfigurationError
from utils import Configuration, Logging, Utils
from utils.Logging import TCol
from utils.PrometheusMon import PrometheusMon


class Kerrflow:
    def __init__(self):
        self.metrics_reg = CollectorRegistry()
        self.metrics = PrometheusMon(self)
        self.commands = dict()
        self.options = dict(config=None, out=None, seed=None, quiet=False)
        self._run_config = None
        self.loaded = False
        self.cli = build_cli(self)

    def load_commands(self):
        for name in Configuration.get_var("commands", Configuration.DEFAULT_COMMANDS):
            try:
                Logging.info(f"load command {TCol.cOkCyan}{name}{TCol.cEnd}")
                module = importlib.import_module("commands." + name)
                module.setup(self)
                Logging.info(f"\t{TCol.cOkGreen}loaded{TCol.cEnd}")
            except Exception as e:
                Utils.log_exception(f"Failed to load command {name}", e)
        Logging.info(f"{TCol.cBold}{TCol.cOkGreen}Command loading complete{TCol.cEnd}{TCol.cEnd}")
        self.loaded = True

    def add_command(self, command):
        self.commands[command.name] = command
        self.cli.add_command(command.click_command())

    def run_config(self) -> Configuration.RunConfig:
        if self._run_config is None:
            self._run_config = Configuration.load_run_config(self.options["config"])
        return self._run_config

    @property
    def seed(self):
        return self.options["seed"]

    def output_dir(self):
        if self.options["out"]:
            return self.options["out"]
        try:
            configured = self.run_config().output_dir
        except ConfigurationError:
            # reported by the command itself
            configured = None
        return configured or Configuration.get_var("default_output_dir", "out")

    def export_metrics(self, out_dir):
        name = Configuration.get_var("METRICS_FILE", "metrics.prom")
        if name:
            self.metrics.export(self, os.path.join(out_dir, name))

    def run(self, args=None) -> int:
        try:
            code = self.cli.main(args=args, prog_name=Utils.TOOL_NAME, standalone_mode=False)
        except click.exceptions.Abort:
            Logging.warn("aborted")
            return 1
        except click.ClickException as e:
            e.show()
            return 2
        return code or 0


def build_cli(app: Kerrflow):
    @click.group(name=Utils.TOOL_NAME)
    @click.option("--config", "config", type=click.Path(dir_okay=False), default=None,
                  help="Run configuration JSON.")
    @click.option("--out", "out", type=click.Path(file_okay=False), default=None, help="Output directory.")
    @click.option("--seed", "seed", type=int, default=None, help="Overrides the configured seed.")
    @click.option("--quiet", is_flag=True, default=False, help="Only log warnings and errors to stdout.")
    @click.version_option(Utils.VERSION, prog_name=Utils.TOOL_NAME)
    def cli(config, out, seed, quiet):
        Logging.init(quiet)
        app.options.update(config=config, out=out, seed=seed, quiet=quiet)
        app._run_config = None

    return cli


def before_send(event, hint):
    if 'exc_info' in hint:
        exc_type, exc_value, tb = hint['exc_info']
        if isinstance(exc_value, ConfigurationError):
            return
    return event


def main(args=None):
    Logging.init()
    Logging.info(f"Launching {Utils.TOOL_NAME} {Utils.VERSION}")

    dsn = Configuration.get_var('SENTRY_DSN', '')
    dsn_env = Configuration.get_var('SENTRY_ENV', 'Dev')
    Logging.info(f"DSN info - dsn:{dsn} env:{dsn_env}")

    if dsn != '':
        sentry_sdk.init(dsn, before_send=before_send, environment=dsn_env)

    app = Kerrflow()
    app.load_commands()
    return app.run(args)


if __name__ == '__main__':
    sys.exit(main())
