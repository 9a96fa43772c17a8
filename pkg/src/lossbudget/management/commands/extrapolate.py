"""
Extrapolate a participation to infinite mesh density.

Usage examples:
    lossbudget extrapolate passes.csv
    lossbudget extrapolate passes.csv --tail-points 4 --dimension 2 --out conv/
"""
from lossbudget.management.base import AnalysisCommand
from lossbudget.participation import extrapolate_convergence
from lossbudget.serializers import ConvergenceResultSerializer
from lossbudget.utils import atomic_output_dir, read_convergence_csv, write_json


class Command(AnalysisCommand):
    help = 'Extrapolate a mesh-convergence series (CSV n_elements,p) to p_inf'

    def add_arguments(self, parser):
        parser.add_argument(
            'series',
            type=str,
            help='Convergence CSV file'
        )
        parser.add_argument(
            '--tail-points',
            type=int,
            default=None,
            help='Passes used by the 1/n fit (default: a third of the series, at least 3)'
        )
        parser.add_argument(
            '--dimension',
            type=int,
            default=3,
            help='Dimension of the mesh, used to report the convergence order (default: 3)'
        )
        self.add_out_argument(parser, required=False)

    def run(self, *args, **options):
        series = read_convergence_csv(self.path(options['series']), dimension=options['dimension'])
        result = extrapolate_convergence(series, options['tail_points'])
        data = ConvergenceResultSerializer(result).data
        if options['out']:
            with atomic_output_dir(options['out']) as tmp:
                write_json(tmp / 'convergence.json', data)

        self.stdout.write(f'p_inf {result.p_infinity} (1/n fit over the last '
                          f'{result.tail_points} passes)')
        if result.power_law is not None:
            law = result.power_law
            self.stdout.write(f'power law: p_inf {law.p_infinity}, order {law.order:.3g}')
        else:
            self.warn('power-law fit did not converge')
