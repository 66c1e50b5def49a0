import click

from commands.BaseCommand import BaseCommand
from harmonic import PunctureFlow
from harmonic.Errors import FlowError
from utils import Lang, Logging, Utils


class Flow(BaseCommand):
    name = "flow"

    def click_command(self):
        @click.command(name=self.name, help="Integrate the puncture flow from the configured punctures.")
        @click.option("--t-max", type=float, default=None, help="Overrides flow.t_max.")
        def flow(t_max):
            return self.invoke(t_max=t_max)

        return flow

    def write_trajectory(self, out_dir, stem, traj: PunctureFlow.FlowTrajectory):
        header, rows = PunctureFlow.trajectory_table(traj)
        Utils.save_to_disk(self.output(out_dir, stem), rows, "csv", header)
        Utils.save_to_disk(self.output(out_dir, f"{stem}.events"), [e.to_dict() for e in traj.events], "jsonl")
        for k, child in enumerate(traj.children):
            self.write_trajectory(out_dir, f"{stem}.cluster{k}", child)

    def run(self, cfg, out_dir, t_max=None):
        flow_cfg = cfg.flow.model_dump()
        if t_max is not None:
            flow_cfg["t_max"] = t_max
        opts = PunctureFlow.FlowOptions(**flow_cfg)
        config = cfg.puncture_config()
        grid = cfg.grid_spec()
        ctx = PunctureFlow.SolverContext(grid, cfg.solver.options(), config.potential_shift, self.metrics)
        initial = PunctureFlow.initial_state(config.zs, config.Js, ctx)
        traj = PunctureFlow.run_flow(initial, ctx, opts, grid, self.metrics)
        self.write_trajectory(out_dir, "trajectory", traj)

        summary = PunctureFlow.flow_summary(traj)
        summary["monotonicity"] = PunctureFlow.monotonicity(traj, opts.energy_tol)
        try:
            summary["dissipation"] = PunctureFlow.dissipation_check(traj, opts.energy_tol).to_dict()
        except FlowError as e:
            summary["dissipation"] = None
            Logging.info(f"dissipation check skipped: {e}")
        Utils.save_to_disk(self.output(out_dir, "flow_summary"), summary)
        Logging.info(Lang.get_string("flow/done", steps=len(traj.states), reason=traj.terminated_by,
                                     energy=summary["E_final"]))
        return 0


def setup(app):
    app.add_command(Flow(app))
