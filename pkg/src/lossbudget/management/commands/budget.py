"""
Loss budgets from a participation table and a loss-factor library.

Usage examples:
    # Transmon budget at 5 GHz
    lossbudget budget --participations fixture:participations.json \\
        --loss-factors fixture:loss_factors.json --mode transmon --frequency-hz 5e9 --out budget/

    # Compare two modes; writes one budget per mode and comparison.txt
    lossbudget budget --participations fixture:participations.json \\
        --loss-factors fixture:loss_factors.json --mode D1 --mode transmon \\
        --frequency-hz 5e9 --out compare/

    # Transfer a surface loss factor measured on another participation scale
    lossbudget budget ... --surface-correction al_surface=0.21
"""
import math
from pathlib import Path

from django.core.management.base import CommandError

from lossbudget import conf
from lossbudget.budget import budget_compare, budget_to_frame, render_budget_text
from lossbudget.management.base import AnalysisCommand, parse_labels
from lossbudget.pipeline import budget_for_mode, load_library, load_participations
from lossbudget.serializers import LossBudgetSerializer
from lossbudget.utils import atomic_output_dir, write_frame, write_json


def parse_corrections(values):
    """``['al_surface', 'x=0.3']`` -> ``{'al_surface': <default>, 'x': 0.3}``."""
    corrections = {}
    for value in values or ():
        label, sep, text = value.partition('=')
        try:
            corrections[label] = float(text) if sep else conf.get('SURFACE_CORRECTION')
        except ValueError:
            raise CommandError(f'--surface-correction expects LABEL[=C], got {value!r}')
    return corrections


class Command(AnalysisCommand):
    help = 'Build the loss budget of one or more modes'

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
            required=True,
            help='Loss-factor library JSON, e.g. loss_factors.json from solve or pipeline'
        )
        parser.add_argument(
            '--mode',
            action='append',
            help='Mode to budget (repeatable; two or more also write comparison.txt)'
        )
        frequency = parser.add_mutually_exclusive_group(required=True)
        frequency.add_argument(
            '--frequency-hz',
            type=float,
            help='Mode frequency in Hz, used for T1'
        )
        frequency.add_argument(
            '--omega',
            type=float,
            help='Angular mode frequency in rad/s, used for T1'
        )
        parser.add_argument(
            '--surface-correction',
            action='append',
            metavar='LABEL[=C]',
            help='Divide a loss factor by (1 + C) before budgeting '
                 '(C defaults to LOSSBUDGET_SURFACE_CORRECTION)'
        )
        parser.add_argument(
            '--threshold',
            type=float,
            default=None,
            help='Shares below this percentage print as "<threshold"'
        )
        self.add_out_argument(parser)

    def run(self, *args, **options):
        modes = parse_labels(options['mode'])
        if not modes:
            raise CommandError('give at least one --mode')
        omega = options['omega']
        if omega is None:
            omega = 2 * math.pi * options['frequency_hz']
        threshold = options['threshold']
        if threshold is None:
            threshold = conf.get('SHARE_THRESHOLD')

        table, _ = load_participations(self.path(options['participations']))
        library = load_library(self.path(options['loss_factors']),
                               corrections=parse_corrections(options['surface_correction']),
                               mechanisms=table.mechanism_labels)
        gammas = {g.label: g for g in library}
        budgets = [budget_for_mode(table, gammas, mode, omega) for mode in modes]
        comparison = budget_compare(budgets) if len(budgets) > 1 else None

        with atomic_output_dir(options['out']) as tmp:
            for budget in budgets:
                stem = 'budget' if len(budgets) == 1 else f'budget_{budget.mode}'
                write_json(tmp / f'{stem}.json', LossBudgetSerializer(budget).data)
                (tmp / f'{stem}.txt').write_text(render_budget_text(budget, threshold))
                write_frame(tmp / f'{stem}.csv', budget_to_frame(budget))
            if comparison is not None:
                (tmp / 'comparison.txt').write_text(comparison.to_text(threshold))

        for budget in budgets:
            self.stdout.write(f'{budget.mode}:')
            self.stdout.write(render_budget_text(budget, threshold))
        if comparison is not None:
            self.stdout.write(comparison.to_text(threshold))
        self.success(f'Budgets written to {Path(options["out"])}')
