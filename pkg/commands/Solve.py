import click

from commands.BaseCommand import BaseCommand
from harmonic import EnergyDefects, HalfplaneSolver
from utils import Lang, Logging, Utils

FIELD_HEADER = ["rho", "z", "U", "v", "res_U", "res_v"]


class Solve(BaseCommand):
    name = "solve"

    def click_command(self):
        @click.command(name=self.name, help="Solve the configured puncture problem and write field and summary.")
        @click.option("--radius-factor", type=float, default=4.0, show_default=True,
                      help="Semicircle radius for the defect integrals, in excision radii.")
        def solve(radius_factor):
            return self.invoke(radius_factor=radius_factor)

        return solve

    def run(self, cfg, out_dir, radius_factor=4.0):
        config = cfg.puncture_config()
        problem = HalfplaneSolver.discretize(config, cfg.grid_spec())
        F = HalfplaneSolver.solve(problem, cfg.solver.options(), metrics=self.metrics)
        Utils.save_to_disk(self.output(out_dir, "field"), HalfplaneSolver.field_table(F), "csv", FIELD_HEADER)
        if not F.converged or F.residual_norm >= cfg.solver.tol:
            Logging.warn(Lang.get_string("solve/tolerance_missed", residual=F.residual_norm, tol=cfg.solver.tol))
            return 1
        summary = EnergyDefects.summary(F, radius_factor)
        self.metrics.energy_last.set(summary["energy"])
        Utils.save_to_disk(self.output(out_dir, "summary"), summary)
        Logging.info(Lang.get_string("solve/done", energy=summary["energy"], bound=summary["mass_bound"],
                                     sqrt_j=summary["sqrt_J_total"]))
        if not summary["mass_bound_satisfied"]:
            Logging.warn(Lang.get_string("solve/bound_violated", bound=summary["mass_bound"],
                                         sqrt_j=summary["sqrt_J_total"]))
        return 0


def setup(app):
    app.add_command(Solve(app))
