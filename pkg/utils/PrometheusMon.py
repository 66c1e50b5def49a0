import prometheus_client as prom


class PrometheusMon:
    def __init__(self, app) -> None:
        # registry=None keeps the metrics out of the process-wide default registry
        self.solves_started = prom.Counter("solves_started", "Number of half-plane solves started", registry=None)
        self.solves_converged = prom.Counter("solves_converged", "Number of solves that converged", registry=None)
        self.solves_failed = prom.Counter("solves_failed", "Number of solves that raised", registry=None)
        self.newton_iterations = prom.Histogram("newton_iterations", "Newton iterations per b round",
                                                buckets=(0, 1, 2, 3, 5, 8, 13, 21, 34, 60), registry=None)
        self.b_rounds = prom.Counter("b_rounds", "Excision parameter rounds", registry=None)
        self.solve_seconds = prom.Histogram("solve_seconds", "Wall time per solve",
                                            buckets=(0.1, 0.5, 1, 2, 5, 10, 30, 60, 120, 300, 600), registry=None)

        self.flow_steps = prom.Counter("flow_steps", "Accepted puncture flow steps", registry=None)
        self.flow_events = prom.Counter("flow_events", "Flow events by kind", ["kind"], registry=None)
        self.spectral_solves = prom.Counter("spectral_solves", "Spherical eigenproblems solved", registry=None)
        self.energy_last = prom.Gauge("energy_last", "Renormalized energy of the latest solved field", registry=None)
        self.verify_suites = prom.Counter("verify_suites", "Verification suites run", ["suite", "verdict"],
                                          registry=None)

        app.metrics_reg.register(self.solves_started)
        app.metrics_reg.register(self.solves_converged)
        app.metrics_reg.register(self.solves_failed)
        app.metrics_reg.register(self.newton_iterations)
        app.metrics_reg.register(self.b_rounds)
        app.metrics_reg.register(self.solve_seconds)
        app.metrics_reg.register(self.flow_steps)
        app.metrics_reg.register(self.flow_events)
        app.metrics_reg.register(self.spectral_solves)
        app.metrics_reg.register(self.energy_last)
        app.metrics_reg.register(self.verify_suites)

    def export(self, app, path):
        """Writes the registry in textfile-collector format."""
        with open(path, "wb") as file:
            file.write(prom.generate_latest(app.metrics_reg))
