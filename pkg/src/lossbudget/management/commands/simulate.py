"""
Generate synthetic power sweeps and S21 traces with known ground truth.

Usage examples:
    # Sweep CSVs for every mode of the bundled Tripole-1 reconstruction
    lossbudget simulate --scenario fixture:tripole1_scenario.json --out sim/

    # Also write one S21 trace per grid point, with power sidecars
    lossbudget simulate --scenario scenario.json --seed 7 --traces --out sim/
"""
from dataclasses import replace
from pathlib import Path

from lossbudget.management.base import AnalysisCommand
from lossbudget.serializers import SyntheticScenarioSerializer, load
from lossbudget.synthetic import generate_power_sweep, generate_s21
from lossbudget.utils import atomic_output_dir, write_s21_csv, write_sweep_csv


class Command(AnalysisCommand):
    help = 'Write synthetic sweeps (and traces) for a scenario JSON'

    def add_arguments(self, parser):
        parser.add_argument(
            '--scenario',
            type=str,
            required=True,
            help='Synthetic scenario JSON'
        )
        parser.add_argument(
            '--seed',
            type=int,
            default=None,
            help='Override the scenario seed'
        )
        parser.add_argument(
            '--traces',
            action='store_true',
            help='Write an S21 trace CSV for every mode and grid point'
        )
        self.add_out_argument(parser)

    def run(self, *args, **options):
        scenario = load(SyntheticScenarioSerializer, self.path(options['scenario']))
        if options['seed'] is not None:
            scenario = replace(scenario, seed=options['seed'])

        written = 0
        with atomic_output_dir(options['out']) as tmp:
            for truth in scenario.modes:
                write_sweep_csv(tmp / f'{truth.label}.csv',
                                generate_power_sweep(scenario, truth.label))
                written += 1
                if not options['traces']:
                    continue
                traces_dir = tmp / 'traces'
                traces_dir.mkdir(exist_ok=True)
                for i, nbar in enumerate(scenario.nbar_grid):
                    trace = generate_s21(scenario, truth.label, float(nbar))
                    write_s21_csv(traces_dir / f'{truth.label}_{i:03d}.csv', trace)
                    written += 1

        self.success(f'{written} files for {len(scenario.modes)} modes written to '
                     f'{Path(options["out"])} (seed {scenario.seed})')
