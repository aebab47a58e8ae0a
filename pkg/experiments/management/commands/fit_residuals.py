"""
Laplace versus Gaussian fit of standardized depth and height residuals
"""
from core.choices import DistributionFamily
from core.distributions import STANDARD_MEMBERS, ResidualHistogram, fit_error
from core.simulator import simulate_run, standardized_residuals
from core.training import toy_fit
from experiments.command_base import ExperimentCommand
from experiments.serializers import load_simulation

HISTOGRAM_HEADER = ('quantity', 'center', 'density', 'laplace_pdf', 'gauss_pdf')

MIN_FIT_RESIDUALS = 1000


def beta_fit(values, loss):
    """(mu, sigma) of the configured beta-NLL fitted to standardized residuals, None when too few"""
    if len(values) < MIN_FIT_RESIDUALS:
        return None
    result = toy_fit(values, beta=loss.beta, family=loss.family)
    return {
        'family': loss.family.value,
        'beta': loss.beta,
        'mu_hat': result.mu_hat,
        'sigma_hat': result.sigma_hat,
        'loss': result.loss,
    }


class Command(ExperimentCommand):
    help = 'Fit standardized residual histograms of depth, 2D height and 3D height'

    def add_command_arguments(self, parser):
        parser.add_argument('--input', help='simulation.json to read diagnostics from; simulates when omitted')
        parser.add_argument('--scenes', type=int, default=2000, help='Scenes to simulate without --input')
        parser.add_argument('--no-bias', action='store_true', help='Simulate with the bias stream disabled')

    def requires_seed(self, options):
        return not options['input']

    def config_overrides(self, options):
        return {'noise': {'bias_sigma': 0.0}} if options['no_bias'] else {}

    def run(self, config, writer, options):
        if options['input']:
            _, runs = load_simulation(options['input'])
            diagnostics = [diag for run in runs for diag in run.diagnostics]
        else:
            results = simulate_run(options['seed'], options['scenes'], config.scene, config.noise, config.iounc)
            diagnostics = [diag for result in results for diag in result.diagnostics]

        residuals = standardized_residuals(diagnostics)
        fits, rows = {}, []
        laplace = STANDARD_MEMBERS[DistributionFamily.LAPLACE]
        gauss = STANDARD_MEMBERS[DistributionFamily.GAUSS]
        for quantity in ('depth', 'h2d', 'h3d'):
            histogram = ResidualHistogram.from_values(residuals[quantity])
            fits[quantity] = {
                'count': histogram.count,
                'laplace_error': fit_error(histogram, DistributionFamily.LAPLACE),
                'gauss_error': fit_error(histogram, DistributionFamily.GAUSS),
            }
            fits[quantity]['preferred'] = (
                DistributionFamily.LAPLACE.value
                if fits[quantity]['laplace_error'] < fits[quantity]['gauss_error']
                else DistributionFamily.GAUSS.value
            )
            fits[quantity]['beta_fit'] = beta_fit(residuals[quantity], config.loss)
            for center, density in zip(histogram.centers, histogram.densities):
                rows.append([quantity, center, density, laplace.pdf(center), gauss.pdf(center)])

        writer.json('residuals.json', {'objects': len(diagnostics), 'fits': fits})
        writer.csv('histograms.csv', HISTOGRAM_HEADER, rows)
        for quantity, fit in fits.items():
            self.stdout.write(
                f'{quantity:<6} laplace={fit["laplace_error"]:.5f} gauss={fit["gauss_error"]:.5f} -> {fit["preferred"]}'
            )
        return f'Fitted residuals of {len(diagnostics)} objects'
