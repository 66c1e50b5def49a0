import click
import numpy as np

from commands.BaseCommand import BaseCommand
from commands.Solve import FIELD_HEADER
from harmonic import HalfplaneSolver, KerrLibrary, ModelMaps
from utils import Lang, Logging, Utils
from utils.Converters import RangedInt

F_HEADER = ["b", "f3", "f4", "f", "df3", "df4"]


def f_table(n):
    """f-functions on n interior points of a uniform grid over (−1, 1)."""
    b = np.linspace(-1.0, 1.0, n + 2)[1:-1]
    f3, f4 = KerrLibrary.f3(b), KerrLibrary.f4(b)
    return np.column_stack([b, f3, f4, f3 + f4, KerrLibrary.df3(b), KerrLibrary.df4(b)])


class KerrDump(BaseCommand):
    name = "kerr-dump"

    def click_command(self):
        @click.command(name=self.name, help="Dump closed-form Kerr data and the f-function table.")
        @click.option("--J", "J", type=float, default=None, help="Single puncture at z=0 with this angular momentum.")
        @click.option("--n", "n", type=RangedInt(min=1, max=100000), default=199, show_default=True,
                      help="Number of b samples in the f table.")
        def kerr_dump(J, n):
            return self.invoke(J=J, n=n)

        return kerr_dump

    def run(self, cfg, out_dir, J=None, n=199):
        if J is not None:
            config = HalfplaneSolver.PunctureConfig.from_lists([0.0], [J])
            grid = cfg.grid.spec(0.0)
        else:
            config = cfg.puncture_config()
            grid = cfg.grid_spec()
            if config.N == 0:
                config = HalfplaneSolver.PunctureConfig.from_lists([0.0], [1.0])
        problem = HalfplaneSolver.discretize(config, grid)
        F = HalfplaneSolver.sample_field(problem, ModelMaps.superposition(config))
        Utils.save_to_disk(self.output(out_dir, "kerr_field"), HalfplaneSolver.field_table(F), "csv", FIELD_HEADER)
        Utils.save_to_disk(self.output(out_dir, "f_table"), f_table(n), "csv", F_HEADER)
        Logging.info(Lang.get_string("kerr_dump/done", punctures=config.N, samples=n))
        return 0


def setup(app):
    app.add_command(KerrDump(app))
