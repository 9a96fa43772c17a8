"""
Run the whole analysis described by a config file.

Usage examples:
    lossbudget pipeline --config fixture:tripole1_config.json --out tripole1/
    lossbudget pipeline --config analysis.json --seed 3 --mc-samples 20000 --out run/
"""
from lossbudget.budget import render_budget_text
from lossbudget.management.base import AnalysisCommand
from lossbudget.pipeline import load_config, run_pipeline


class Command(AnalysisCommand):
    help = 'Fit, solve and budget in one run; all artifacts land in --out'

    def add_arguments(self, parser):
        parser.add_argument(
            '--config',
            type=str,
            required=True,
            help='Analysis config JSON; relative paths resolve against its directory'
        )
        parser.add_argument(
            '--seed',
            type=int,
            default=None,
            help='Override the config seed (also reseeds a synthetic scenario)'
        )
        parser.add_argument(
            '--nbar',
            type=float,
            default=None,
            help='Override the photon number at which loss factors are solved'
        )
        parser.add_argument(
            '--mc-samples',
            type=int,
            default=None,
            help='Override the number of Monte Carlo samples'
        )
        self.add_out_argument(parser)

    def run(self, *args, **options):
        config = load_config(self.path(options['config']))
        result = run_pipeline(config, out=options['out'], seed=options['seed'],
                              nbar=options['nbar'], mc_samples=options['mc_samples'])
        for fit in result.tls_fits.values():
            if fit.degenerate:
                self.warn(f'{fit.mode}: degenerate TLS fit ({fit.reason})')
        self.stdout.write(render_budget_text(result.budget))
        self.success(f'Artifacts written to {result.out}')
