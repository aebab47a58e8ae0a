"""
Project one pair of height beliefs to a depth belief, optionally checked by Monte Carlo
"""
from core.propagation import DepthBelief, HeightBeliefs, legacy_geu, mc_oracle_sharded, propagate
from experiments.command_base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Propagate 2D/3D height beliefs through the projection and add the bias stream'

    def add_command_arguments(self, parser):
        parser.add_argument('--h2d', type=float, required=True, help='2D height mean (px)')
        parser.add_argument('--sigma-h2d', type=float, default=0.0, help='2D height std (px)')
        parser.add_argument('--h3d', type=float, required=True, help='3D height mean (m)')
        parser.add_argument('--sigma-h3d', type=float, default=0.0, help='3D height std (m)')
        parser.add_argument('--mu-b', type=float, default=0.0, help='Bias mean (m)')
        parser.add_argument('--sigma-b', type=float, default=0.0, help='Bias std (m)')
        parser.add_argument('--f', type=float, help='Focal length (px); defaults to the configured camera')
        parser.add_argument('--mc', type=int, default=0, help='Monte-Carlo sample count (0 disables the check)')
        parser.add_argument('--shards', type=int, default=4, help='Independent Monte-Carlo substreams')

    def requires_seed(self, options):
        return options['mc'] > 0

    def run(self, config, writer, options):
        f = options['f'] or config.scene.camera.f
        beliefs = HeightBeliefs.from_values(options['h2d'], options['sigma_h2d'], options['h3d'], options['sigma_h3d'])
        mu_p, sigma_p = propagate(beliefs, f)
        depth = DepthBelief.compose(mu_p, sigma_p, options['mu_b'], options['sigma_b'])
        legacy_mu, legacy_sigma = legacy_geu(beliefs.h2d.mu, beliefs.h3d, f)

        result = {
            'f': f,
            'beliefs': {
                'mu_h2d': beliefs.h2d.mu, 'sigma_h2d': beliefs.h2d.sigma,
                'mu_h3d': beliefs.h3d.mu, 'sigma_h3d': beliefs.h3d.sigma,
            },
            'depth': depth.to_dict(),
            'legacy': {'mu_p': legacy_mu, 'sigma_p': legacy_sigma},
            'monte_carlo': None,
        }
        summary = f'mu_d={depth.mu_d:.4f} m, sigma_d={depth.sigma_d:.4f} m'
        if options['mc'] > 0:
            estimate = mc_oracle_sharded(beliefs, f, options['mc'], options['seed'], shards=options['shards'])
            relative = abs(estimate.std - sigma_p) / sigma_p if sigma_p > 0 else None
            result['monte_carlo'] = {
                'mean': estimate.mean,
                'std': estimate.std,
                'count': estimate.count,
                'rejected': estimate.rejected,
                'rejection_rate': estimate.rejection_rate,
                'relative_std_gap': relative,
            }
            summary += f', Monte-Carlo std={estimate.std:.4f} m'
        writer.json('propagation.json', result)
        return summary
