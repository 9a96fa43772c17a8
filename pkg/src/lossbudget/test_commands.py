import io
import tempfile
from contextlib import redirect_stdout
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from . import main
from .serializers import SyntheticScenarioSerializer, load
from .synthetic import generate_power_sweep
from .utils import fixture_path, read_json, write_sweep_csv


class CommandTestCase(SimpleTestCase):

    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.tmp = Path(tmp.name)

    def call(self, name, *args, **options):
        out = io.StringIO()
        call_command(name, *args, stdout=out, **options)
        return out.getvalue()


class ChainTests(CommandTestCase):
    """Test simulate, fit_resonance, fit_tls, solve and budget run one after another."""

    def test_tripole_chain(self):
        """Test the Tripole-1 analysis done one command at a time."""
        sim = self.tmp / 'sim'
        self.call('simulate', scenario='fixture:tripole1_scenario.json', traces=True,
                  out=str(sim))
        for mode in ('D1', 'D2', 'C'):
            self.assertTrue((sim / f'{mode}.csv').exists())
        traces = sorted((sim / 'traces').glob('D1_*.csv'))
        self.assertEqual(len(traces), 15)
        self.assertTrue(traces[0].with_suffix('.json').exists())

        fits = self.tmp / 'fits'
        output = self.call('fit_resonance', *map(str, traces[:6]), out=str(fits))
        self.assertIn('Q_int', output)
        self.assertEqual(len(read_json(fits / 'resonance_fits.json')), 6)
        self.assertTrue((fits / 'sweep.csv').exists())

        tls = self.tmp / 'tls'
        self.call('fit_tls', *(str(sim / f'{m}.csv') for m in ('D1', 'D2', 'C')), out=str(tls))
        self.assertEqual(sorted(read_json(tls / 'tls_fits.json')), ['C', 'D1', 'D2'])

        solved = self.tmp / 'solved'
        output = self.call('solve', participations='fixture:participations.json',
                           loss_factors='fixture:package_loss_factors.json',
                           tls_fits=str(tls / 'tls_fits.json'),
                           solve_for=['re_surface,bulk,package_seam'], out=str(solved))
        self.assertIn('condition number', output)
        library = {g['label']: g for g in read_json(solved / 'loss_factors.json')}
        self.assertAlmostEqual(library['re_surface']['value'] / 3.855e-4, 1.0, delta=0.01)
        self.assertEqual(library['package_ma']['source'], 'transferred:package coaxial resonators')
        report = read_json(solved / 'solve_report.json')
        self.assertEqual(report['solve']['modes'], ['D1', 'D2', 'C'])

        budget = self.tmp / 'budget'
        self.call('budget', participations='fixture:participations.json',
                  loss_factors=str(solved / 'loss_factors.json'), mode=['D1'],
                  frequency_hz=5e9, out=str(budget))
        data = read_json(budget / 'budget.json')
        rows = {r['label']: r for r in data['rows']}
        self.assertAlmostEqual(rows['re_surface']['share'], 94.83, delta=0.1)
        self.assertTrue((budget / 'budget.txt').exists())
        self.assertTrue((budget / 'budget.csv').exists())


class BudgetCommandTests(CommandTestCase):
    """Test the budget command."""

    options = {'participations': 'fixture:participations.json',
               'loss_factors': 'fixture:loss_factors.json'}

    def test_single_mode(self):
        """Test the transmon budget printed and written."""
        out = self.tmp / 'budget'
        output = self.call('budget', mode=['transmon'], frequency_hz=5e9, out=str(out),
                           **self.options)
        self.assertIn('Predicted Q_int: 9.2e+06', output)
        self.assertIn('al_surface', (out / 'budget.txt').read_text())

    def test_comparison(self):
        """Test that two modes give one budget each plus a comparison table."""
        out = self.tmp / 'compare'
        self.call('budget', mode=['segmented', 'transmon'], frequency_hz=5e9, out=str(out),
                  **self.options)
        self.assertTrue((out / 'budget_segmented.json').exists())
        self.assertTrue((out / 'budget_transmon.json').exists())
        self.assertIn('transmon (%)', (out / 'comparison.txt').read_text())

    def test_surface_correction(self):
        """Test that a correction without a value uses the configured default."""
        out = self.tmp / 'corrected'
        self.call('budget', mode=['transmon'], omega=2 * np.pi * 5e9, out=str(out),
                  surface_correction=['al_surface'], **self.options)
        rows = {r['label']: r for r in read_json(out / 'budget.json')['rows']}
        self.assertAlmostEqual(rows['al_surface']['gamma'] / (8.7e-4 / 1.21), 1.0)

    def test_mode_required(self):
        """Test that at least one mode must be given."""
        with self.assertRaisesMessage(CommandError, '--mode'):
            self.call('budget', frequency_hz=5e9, out=str(self.tmp / 'x'), **self.options)

    def test_unknown_mode(self):
        """Test that an unknown mode is a command error naming the label."""
        out = self.tmp / 'x'
        with self.assertRaisesMessage(CommandError, 'LabelMismatchError'):
            self.call('budget', mode=['D9'], frequency_hz=5e9, out=str(out), **self.options)
        self.assertFalse(out.exists())


class SolveCommandTests(CommandTestCase):
    """Test the solve command on direct quality factors."""

    def test_remainder(self):
        """Test the segmented-resonator remainder from a single Q_int."""
        out = self.tmp / 'remainder'
        output = self.call('solve', participations='fixture:participations.json',
                           loss_factors='fixture:loss_factors.json',
                           q_int=['segmented=2.0e6'], remainder='segmented:re_al', out=str(out))
        self.assertIn('re_al', output)
        report = read_json(out / 'solve_report.json')
        self.assertAlmostEqual(report['remainder']['value'] / 2.284e-12, 1.0, delta=2e-3)
        self.assertEqual(report['remainder']['source'], 'remainder')

    def test_needs_a_task(self):
        """Test that solve without --solve-for or --remainder is rejected."""
        with self.assertRaises(CommandError):
            self.call('solve', participations='fixture:participations.json',
                      q_int=['D1=1.7e6'], out=str(self.tmp / 'x'))

    def test_bad_quality_factor(self):
        """Test that a malformed --q-int is rejected."""
        with self.assertRaisesMessage(CommandError, '--q-int'):
            self.call('solve', participations='fixture:participations.json',
                      loss_factors='fixture:loss_factors.json', q_int=['segmented=abc'],
                      remainder='segmented:re_al', out=str(self.tmp / 'x'))


class PipelineCommandTests(CommandTestCase):
    """Test the pipeline command."""

    def test_transmon(self):
        """Test a budget-only pipeline run."""
        out = self.tmp / 'run'
        output = self.call('pipeline', config='fixture:transmon_config.json', out=str(out))
        self.assertIn('Artifacts written', output)
        self.assertTrue((out / 'budget.json').exists())

    def test_missing_config(self):
        """Test that a missing config file is a command error and writes nothing."""
        out = self.tmp / 'run'
        with self.assertRaisesMessage(CommandError, 'file not found'):
            self.call('pipeline', config=str(self.tmp / 'nowhere.json'), out=str(out))
        self.assertFalse(out.exists())


class SmallCommandTests(CommandTestCase):
    """Test extrapolate, simulate and the decay fit."""

    def write_series(self):
        path = self.tmp / 'passes.csv'
        n = [1e4, 2e4, 4e4, 8e4, 1.6e5, 3.2e5]
        path.write_text('n_elements,p\n' + ''.join(f'{x!r},{0.948 - 50 / x!r}\n' for x in n))
        return path

    def test_extrapolate(self):
        """Test the extrapolated participation printed and written."""
        out = self.tmp / 'conv'
        output = self.call('extrapolate', str(self.write_series()), out=str(out))
        self.assertIn('p_inf 0.948', output)
        data = read_json(out / 'convergence.json')
        self.assertAlmostEqual(data['p_infinity']['value'], 0.948, places=9)

    def test_simulate_is_deterministic(self):
        """Test that two simulations with one seed write identical sweeps."""
        first, second = self.tmp / 'a', self.tmp / 'b'
        for out in (first, second):
            self.call('simulate', scenario='fixture:tripole1_scenario.json', seed=4, out=str(out))
        self.assertEqual((first / 'D1.csv').read_bytes(), (second / 'D1.csv').read_bytes())
        self.assertFalse((first / 'traces').exists())

    def test_decay(self):
        """Test a T1 decay fit converted to Q at 5 GHz."""
        delay = np.linspace(0, 1.5e-3, 60)
        population = 0.9 * np.exp(-delay / 300e-6) + 0.05
        path = self.tmp / 't1.csv'
        path.write_text('delay_s,population\n' + ''.join(
            f'{d!r},{p!r}\n' for d, p in zip(delay, population)))
        out = self.tmp / 'fits'
        output = self.call('fit_resonance', decay=str(path), frequency_hz=5e9, out=str(out))
        self.assertIn('T1 300', output)
        data = read_json(out / 'decay_fit.json')
        self.assertAlmostEqual(data['q_int']['value'] / (2 * np.pi * 5e9 * 300e-6), 1.0,
                               delta=1e-6)

    def test_hyphenated_verb(self):
        """Test that the console script accepts hyphenated command names."""
        scenario = load(SyntheticScenarioSerializer, fixture_path('tripole1_scenario.json'))
        sweep = self.tmp / 'D1.csv'
        write_sweep_csv(sweep, generate_power_sweep(scenario, 'D1'))
        out = self.tmp / 'tls'
        with redirect_stdout(io.StringIO()) as stdout:
            main(['lossbudget', 'fit-tls', str(sweep), '--out', str(out)])
        self.assertIn('D1: Q_int(1)', stdout.getvalue())
        self.assertEqual(list(read_json(out / 'tls_fits.json')), ['D1'])
