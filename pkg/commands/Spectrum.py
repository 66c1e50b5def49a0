import click

from commands.BaseCommand import BaseCommand
from harmonic import SpectralLinearized
from harmonic.KerrLibrary import TangentMap
from utils import Lang, Logging, Utils
from utils.Converters import OpenInterval, RangedInt


class Spectrum(BaseCommand):
    name = "spectrum"

    def click_command(self):
        @click.command(name=self.name, help="Eigenvalues of the spherical linearized operator at tangent maps.")
        @click.option("--b", "b_values", type=OpenInterval(-1.0, 1.0), multiple=True,
                      help="Tangent parameter, repeatable; overrides spectral.b_list.")
        @click.option("--mode", "modes", type=RangedInt(min=0), multiple=True,
                      help="Azimuthal mode, repeatable; overrides spectral.modes.")
        def spectrum(b_values, modes):
            return self.invoke(b_values=list(b_values), modes=list(modes))

        return spectrum

    def run(self, cfg, out_dir, b_values=None, modes=None):
        spec = cfg.spectral
        b_list = b_values or spec.b_list
        mode_list = modes or spec.modes
        seed = self.app.seed if self.app.seed is not None else cfg.seed
        rows = []
        details = []
        for m in mode_list:
            for b in b_list:
                problem = SpectralLinearized.assemble(TangentMap(a=spec.a, b=b), spec.n_theta, m)
                result = SpectralLinearized.eigen(problem, spec.k)
                self.metrics.spectral_solves.inc()
                rows.append(SpectralLinearized.spectrum_row(b, m, result))
                exponents = [SpectralLinearized.decay_exponents(mu) if mu >= 0 else None
                             for mu in result.eigenvalues]
                details.append({"m": m, "b": b, "eigenvalues": result.eigenvalues.tolist(),
                                "beta_bar_sup": result.beta_bar_sup, "decay_exponents": exponents,
                                "antisymmetric_norm": SpectralLinearized.antisymmetric_norm(problem),
                                "antisymmetric_rayleigh": SpectralLinearized.antisymmetric_rayleigh(
                                    problem, seed=seed)})
                Logging.info(Lang.get_string("spectrum/row", m=m, b=b, mu1=result.eigenvalues[0]))
        Utils.save_to_disk(self.output(out_dir, "spectrum"), rows, "csv", SpectralLinearized.spectrum_header(spec.k))
        Utils.save_to_disk(self.output(out_dir, "spectrum"), {"a": spec.a, "n_theta": spec.n_theta, "rows": details})
        return 0


def setup(app):
    app.add_command(Spectrum(app))
