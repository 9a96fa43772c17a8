"""
Invert a participation matrix for loss factors.

Usage examples:
    # Tripole: solve three loss factors from three modes, package losses known
    lossbudget solve --participations fixture:participations.json \\
        --loss-factors fixture:package_loss_factors.json \\
        --tls-fits tls/tls_fits.json --solve-for re_surface,bulk,package_seam --out solved/

    # Segmented resonator: attribute the unexplained loss to the Re-Al seams
    lossbudget solve --participations fixture:participations.json \\
        --loss-factors fixture:loss_factors.json --q-int segmented=2.0e6:0.1e6 \\
        --remainder segmented:re_al --out remainder/
"""
from pathlib import Path

from django.core.management.base import CommandError

from lossbudget import conf
from lossbudget.management.base import AnalysisCommand, parse_labels, parse_pairs
from lossbudget.pipeline import (inverse_q, load_library, load_participations,
                                 solve_and_attribute, solve_report)
from lossbudget.serializers import LossFactorSerializer, TlsFitSerializer, load_mapping
from lossbudget.utils import atomic_output_dir, write_json


def parse_q_int(pairs):
    """``{'D1': '1.7e6:0.1e6'}`` -> ``{'D1': [1.7e6, 0.1e6]}``."""
    parsed = {}
    for mode, text in pairs.items():
        try:
            parsed[mode] = [float(v) for v in text.split(':')]
        except ValueError:
            raise CommandError(f'--q-int {mode}: expected VALUE or VALUE:SIGMA, got {text!r}')
        if not 1 <= len(parsed[mode]) <= 2:
            raise CommandError(f'--q-int {mode}: expected VALUE or VALUE:SIGMA, got {text!r}')
    return parsed


class Command(AnalysisCommand):
    help = 'Solve P Gamma = K for loss factors, with optional remainder attribution'

    def add_arguments(self, parser):
        parser.add_argument(
            '--participations',
            type=str,
            required=True,
            help='Participation table JSON'
        )
        parser.add_argument(
            '--loss-factors',
            type=str,
            help='Loss-factor library JSON; entries not solved for are subtracted as known'
        )
        parser.add_argument(
            '--tls-fits',
            type=str,
            help='TLS fits JSON as written by fit-tls'
        )
        parser.add_argument(
            '--q-int',
            action='append',
            metavar='MODE=VALUE[:SIGMA]',
            help='Measured Q_int of a mode (repeatable)'
        )
        parser.add_argument(
            '--solve-for',
            action='append',
            help='Loss factors to solve for, comma separated or repeated'
        )
        parser.add_argument(
            '--remainder',
            type=str,
            metavar='MODE:TARGET',
            help='Attribute the unexplained loss of MODE to TARGET'
        )
        parser.add_argument(
            '--mc-samples',
            type=int,
            default=None,
            help='Monte Carlo samples for the uncertainties (default: linear propagation)'
        )
        parser.add_argument(
            '--seed',
            type=int,
            default=None,
            help='Seed of the Monte Carlo generator'
        )
        parser.add_argument(
            '--nbar',
            type=float,
            default=1.0,
            help='Photon number at which TLS fits are evaluated (default: 1)'
        )
        self.add_out_argument(parser)

    def run(self, *args, **options):
        solve_for = parse_labels(options['solve_for'])
        remainder = None
        if options['remainder']:
            mode, sep, target = options['remainder'].partition(':')
            if not sep or not mode or not target:
                raise CommandError(f'--remainder expects MODE:TARGET, got {options["remainder"]!r}')
            remainder = {'mode': mode, 'target': target}
        if not solve_for and remainder is None:
            raise CommandError('give --solve-for, --remainder or both')

        table, _ = load_participations(self.path(options['participations']))
        library = []
        if options['loss_factors']:
            library = load_library(self.path(options['loss_factors']),
                                   mechanisms=table.mechanism_labels)
        tls_fits = {}
        if options['tls_fits']:
            tls_fits = load_mapping(TlsFitSerializer, self.path(options['tls_fits']))
        q_int = parse_q_int(parse_pairs(options['q_int'], '--q-int'))

        modes = [m for m in table.mode_labels if m in tls_fits or m in q_int]
        if not modes:
            raise CommandError('no measured mode matches the participation table')
        k = inverse_q(modes, tls_fits, q_int, options['nbar'])

        mc_samples = options['mc_samples']
        seed = options['seed']
        solve, estimate, gammas = solve_and_attribute(
            table, k, library, solve_for, remainder,
            mc_samples=conf.get('MC_SAMPLES') if mc_samples is None else mc_samples,
            seed=conf.get('SEED') if seed is None else seed)

        with atomic_output_dir(options['out']) as tmp:
            write_json(tmp / 'solve_report.json',
                       solve_report(k, solve, estimate, options['nbar']))
            write_json(tmp / 'loss_factors.json',
                       LossFactorSerializer(list(gammas.values()), many=True).data)

        if solve is not None:
            self.stdout.write(f'condition number {solve.condition_number:.3g} ({solve.method})')
        for est in ([] if solve is None else list(solve)) + ([] if estimate is None else [estimate]):
            if est.bounded:
                self.stdout.write(f'{est.label}: < {est.upper_bound:.3g} {est.unit}')
            else:
                self.stdout.write(f'{est.label}: {est.value:.4g} ± {est.sigma:.2g} {est.unit}')
        self.success(f'Loss factors written to {Path(options["out"])}')
