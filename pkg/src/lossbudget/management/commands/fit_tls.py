"""
Fit the power-dependent TLS model to power sweeps.

Usage examples:
    # One sweep per mode; the mode label is the file name without extension
    lossbudget fit-tls D1.csv D2.csv C.csv --out tls/

    # Report Q_int at 10 photons instead of the single-photon value
    lossbudget fit-tls D1.csv --nbar 10 --out tls/
"""
from pathlib import Path

from lossbudget.management.base import AnalysisCommand
from lossbudget.serializers import TlsFitSerializer
from lossbudget.tls import fit_tls, qint_at
from lossbudget.utils import atomic_output_dir, read_sweep_csv, write_json


class Command(AnalysisCommand):
    help = 'Fit power sweeps (CSV nbar,q_int,sigma_q) with the TLS loss model'

    def add_arguments(self, parser):
        parser.add_argument(
            'sweeps',
            nargs='+',
            type=str,
            help='Power sweep CSV files, one per mode'
        )
        parser.add_argument(
            '--nbar',
            type=float,
            default=1.0,
            help='Photon number at which Q_int is reported (default: 1)'
        )
        self.add_out_argument(parser)

    def run(self, *args, **options):
        fits = {}
        for value in options['sweeps']:
            path = self.path(value)
            fits[path.stem] = fit_tls(read_sweep_csv(path), mode=path.stem)

        context = {'nbar': options['nbar']}
        with atomic_output_dir(options['out']) as tmp:
            write_json(tmp / 'tls_fits.json',
                       {mode: TlsFitSerializer(fit, context=context).data
                        for mode, fit in fits.items()})

        for mode, fit in fits.items():
            line = f'{mode}: Q_int({options["nbar"]:g}) {qint_at(fit, options["nbar"])}'
            if fit.degenerate:
                self.warn(f'{line} (degenerate: {fit.reason})')
            else:
                self.stdout.write(line)
        self.success(f'TLS fits written to {Path(options["out"])}')
