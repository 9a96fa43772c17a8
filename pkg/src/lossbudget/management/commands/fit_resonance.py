"""
Fit hanger-mode S21 traces and, optionally, a T1 decay.

Usage examples:
    # Fit traces; powers come from the x.json sidecar next to each x.csv
    lossbudget fit-resonance d1_-120dbm.csv d1_-100dbm.csv --out fits/

    # Same input power for every trace
    lossbudget fit-resonance d1.csv --power-dbm -130 --out fits/

    # T1 decay of a qubit at 5 GHz
    lossbudget fit-resonance --decay t1.csv --frequency-hz 5e9 --out fits/
"""
import math
from pathlib import Path

from django.core.management.base import CommandError

from lossbudget.management.base import AnalysisCommand
from lossbudget.pipeline import fit_traces
from lossbudget.resonance import fit_t1_decay
from lossbudget.serializers import DecayFitSerializer, ResonanceFitSerializer
from lossbudget.tls import tls_sweep_from_fits
from lossbudget.utils import (atomic_output_dir, dbm_to_watts, read_decay_csv, read_s21_csv,
                              write_json, write_sweep_csv)


class Command(AnalysisCommand):
    help = 'Fit S21 traces (CSV freq_hz,re,im) and T1 decays (CSV delay_s,population)'

    def add_arguments(self, parser):
        parser.add_argument(
            'traces',
            nargs='*',
            type=str,
            help='S21 trace CSV files'
        )
        parser.add_argument(
            '--power-dbm',
            type=float,
            help='Input power at the device in dBm, used for every trace'
        )
        parser.add_argument(
            '--decay',
            type=str,
            help='Population decay CSV to fit for T1'
        )
        parser.add_argument(
            '--frequency-hz',
            type=float,
            help='Mode frequency, used to turn T1 into Q_int'
        )
        self.add_out_argument(parser)

    def run(self, *args, **options):
        if not options['traces'] and not options['decay']:
            raise CommandError('give at least one trace or --decay')
        power = None if options['power_dbm'] is None else dbm_to_watts(options['power_dbm'])

        traces = [read_s21_csv(self.path(p), input_power=power) for p in options['traces']]
        fits = fit_traces(traces)
        decay = None
        if options['decay']:
            decay = fit_t1_decay(read_decay_csv(self.path(options['decay'])))
        omega = None if options['frequency_hz'] is None else 2 * math.pi * options['frequency_hz']

        with atomic_output_dir(options['out']) as tmp:
            if fits:
                write_json(tmp / 'resonance_fits.json', ResonanceFitSerializer(fits, many=True).data)
                if all(f.input_power is not None for f in fits):
                    write_sweep_csv(tmp / 'sweep.csv', tls_sweep_from_fits(fits))
                else:
                    self.warn('some traces have no input power; sweep.csv not written')
            if decay is not None:
                write_json(tmp / 'decay_fit.json',
                           DecayFitSerializer(decay, context={'omega': omega}).data)

        for fit in fits:
            self.stdout.write(f'{fit.label}: f0 {fit.f0:.9g} Hz, Q_int {fit.q_int}, '
                              f'Q_ext {fit.q_ext}')
        if decay is not None:
            self.stdout.write(f'T1 {decay.t1.value * 1e6:.4g} ± {decay.t1.sigma * 1e6:.2g} us')
        self.success(f'Fits written to {Path(options["out"])}')
