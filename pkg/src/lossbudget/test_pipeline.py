import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from .exceptions import ConfigurationError, LabelMismatchError
from .pipeline import load_config, load_participations, run_pipeline
from .tls import eval_tls
from .utils import fixture_path, read_json, write_json

ARTIFACTS = ('budget.csv', 'budget.json', 'budget.txt', 'config.json', 'loss_factors.json',
             'resonance_fits.json', 'solve_report.json', 'tls_fits.json')


class PipelineTestCase(SimpleTestCase):

    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.tmp = Path(tmp.name)

    def write_config(self, **data):
        path = self.tmp / 'config.json'
        write_json(path, data)
        return load_config(path)


class TransmonPipelineTests(PipelineTestCase):
    """Test a budget-only run from the bundled loss-factor library."""

    def test_budget(self):
        """Test the predicted transmon Q_int."""
        result = run_pipeline(load_config(fixture_path('transmon_config.json')))
        self.assertIsNone(result.solve)
        self.assertIsNone(result.inverse_q)
        self.assertEqual(result.budget.mode, 'transmon')
        self.assertAlmostEqual(result.budget.q_int.value / 9.2e6, 1.0, delta=1e-3)
        self.assertAlmostEqual(result.budget.q_int.sigma / 1.38e6, 1.0, delta=0.01)
        self.assertAlmostEqual(result.budget.omega, 2 * math.pi * 5e9)

    def test_artifacts(self):
        """Test that every artifact is written."""
        out = self.tmp / 'run'
        result = run_pipeline(load_config(fixture_path('transmon_config.json')), out=out)
        self.assertEqual(result.out, out)
        for name in ARTIFACTS:
            self.assertTrue((out / name).exists(), name)
        self.assertFalse((out / 'convergence.json').exists())
        budget = read_json(out / 'budget.json')
        self.assertEqual(budget['mode'], 'transmon')
        self.assertEqual(read_json(out / 'config.json')['target_mode'], 'transmon')

    def test_surface_correction(self):
        """Test that a configured correction rescales the aluminium surface loss factor."""
        config = self.write_config(participations='fixture:participations.json',
                                   loss_factors='fixture:loss_factors.json',
                                   target_mode='transmon', frequency_hz=5e9,
                                   surface_correction={'al_surface': 0.21})
        result = run_pipeline(config)
        self.assertAlmostEqual(result.loss_factor('al_surface').value / (8.7e-4 / 1.21), 1.0)
        self.assertGreater(result.budget.q_int.value, 9.2e6)


class TripolePipelineTests(PipelineTestCase):
    """Test the synthetic Tripole-1 run from traces to budget."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.config = load_config(fixture_path('tripole1_config.json'))
        cls.result = run_pipeline(cls.config)

    def test_fits(self):
        """Test that every mode was fitted from its traces."""
        self.assertEqual(sorted(self.result.tls_fits), ['C', 'D1', 'D2'])
        self.assertEqual(len(self.result.resonance_fits['D1']), 15)
        self.assertAlmostEqual(self.result.budget.omega / (2 * math.pi * 5e9), 1.0, delta=1e-6)

    def test_solved_loss_factors(self):
        """Test that the surface loss factor comes back near its single-photon value."""
        surface = self.result.solve['re_surface']
        self.assertEqual(self.result.solve.labels, ('re_surface', 'bulk', 'package_seam'))
        self.assertLess(abs(surface.value - 3.9e-4), 0.1e-4)
        self.assertEqual(self.result.loss_factor('re_surface'), surface)
        self.assertEqual(self.result.loss_factor('package_ma').provenance,
                         'transferred:package coaxial resonators')

    def test_budget_consistent_with_measurement(self):
        """Test that the D1 budget reproduces the measured D1 loss."""
        measured = self.result.inverse_q.value('D1')
        self.assertAlmostEqual(self.result.budget.total_inverse_q.value / measured, 1.0,
                               delta=1e-6)

    def test_deterministic_artifacts(self):
        """Test that two runs with the same seed write identical files."""
        first, second = self.tmp / 'first', self.tmp / 'second'
        run_pipeline(self.config, out=first)
        run_pipeline(self.config, out=second)
        for name in ARTIFACTS:
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes(), name)

    def test_nbar_override(self):
        """Test that solving at high photon number lowers the surface loss factor."""
        config = load_config(fixture_path('tripole1_config.json'))
        config.scenario = None
        config.omega = 2 * math.pi * 5e9
        nbar = np.logspace(-1, 6, 15)
        for mode, fit in self.result.tls_fits.items():
            q = 1.0 / eval_tls(fit, nbar)
            sweep = self.tmp / f'{mode}.csv'
            sweep.write_text('nbar,q_int,sigma_q\n' + ''.join(
                f'{n!r},{v!r},{0.01 * v!r}\n' for n, v in zip(nbar, q)))
            config.sweeps[mode] = sweep
        low = run_pipeline(config)
        high = run_pipeline(config, nbar=1e5)
        self.assertEqual(high.config.nbar, 1e5)
        self.assertGreater(low.solve['re_surface'].value, high.solve['re_surface'].value)


class ConfigTests(PipelineTestCase):
    """Test config validation and failure handling."""

    def test_missing_file(self):
        """Test that a config naming a missing file is rejected before anything runs."""
        write_json(self.tmp / 'config.json', {'participations': 'nowhere.json',
                                              'target_mode': 'D1'})
        with self.assertRaises(ConfigurationError) as ctx:
            load_config(self.tmp / 'config.json')
        self.assertIn('nowhere.json', str(ctx.exception))

    def test_failed_run_writes_nothing(self):
        """Test that a run failing after loading leaves no output directory."""
        config = self.write_config(participations='fixture:participations.json',
                                   loss_factors='fixture:loss_factors.json',
                                   target_mode='nonexistent', frequency_hz=5e9)
        out = self.tmp / 'out'
        with self.assertRaises(LabelMismatchError):
            run_pipeline(config, out=out)
        self.assertFalse(out.exists())
        self.assertEqual([p.name for p in self.tmp.iterdir()], ['config.json'])

    def test_unmeasured_mode(self):
        """Test that solving needs a measurement for every listed mode."""
        config = self.write_config(participations='fixture:participations.json',
                                   loss_factors='fixture:package_loss_factors.json',
                                   target_mode='D1', frequency_hz=5e9, modes=['D1', 'D2', 'C'],
                                   q_int={'D1': [1.7e6], 'D2': [17.2e6]},
                                   solve_for=['re_surface', 'bulk', 'package_seam'])
        with self.assertRaises(ConfigurationError):
            run_pipeline(config)

    def test_direct_quality_factors(self):
        """Test a solve from configured Q_int values instead of sweeps."""
        config = self.write_config(participations='fixture:participations.json',
                                   loss_factors='fixture:package_loss_factors.json',
                                   target_mode='D1', frequency_hz=5e9,
                                   q_int={'D1': [1.7e6], 'D2': [17.2e6], 'C': [8.2e6]},
                                   solve_for=['re_surface', 'bulk', 'package_seam'])
        result = run_pipeline(config)
        self.assertEqual(result.solve.mode_labels, ('D1', 'D2', 'C'))
        self.assertAlmostEqual(result.solve['re_surface'].value / 3.855e-4, 1.0, delta=0.01)


class ConvergencePipelineTests(PipelineTestCase):
    """Test participations replaced by mesh-converged values."""

    def write_series(self, limit=0.9):
        n = [1e4, 2e4, 4e4, 8e4, 1.6e5, 3.2e5]
        path = self.tmp / 'bulk_transmon.csv'
        path.write_text('n_elements,p\n' + ''.join(f'{x!r},{limit - 50 / x!r}\n' for x in n))
        return path

    def test_override(self):
        """Test that the extrapolated value replaces the table entry."""
        entry = {'mode': 'transmon', 'mechanism': 'bulk', 'path': str(self.write_series())}
        table, results = load_participations(fixture_path('participations.json'), [entry])
        self.assertAlmostEqual(table.value('transmon', 'bulk'), 0.9, places=9)
        self.assertAlmostEqual(table.value('D1', 'bulk'), 0.91)
        self.assertIn(('transmon', 'bulk'), results)

    def test_convergence_artifact(self):
        """Test that a run with overrides writes convergence.json."""
        config = self.write_config(participations='fixture:participations.json',
                                   loss_factors='fixture:loss_factors.json',
                                   target_mode='transmon', frequency_hz=5e9,
                                   convergence=[{'mode': 'transmon', 'mechanism': 'bulk',
                                                 'path': str(self.write_series())}])
        out = self.tmp / 'out'
        result = run_pipeline(config, out=out)
        self.assertAlmostEqual(result.budget.row('bulk').participation, 0.9, places=9)
        entries = read_json(out / 'convergence.json')
        self.assertEqual(entries[0]['mode'], 'transmon')
        self.assertEqual(entries[0]['mechanism'], 'bulk')


class RemainderPipelineTests(PipelineTestCase):
    """Test attributing the segmented resonator's leftover loss to the Re-Al seams."""

    def test_segmented(self):
        """Test the remainder and a budget that closes on the measured Q_int."""
        config = self.write_config(participations='fixture:participations.json',
                                   loss_factors='fixture:loss_factors.json',
                                   target_mode='segmented', frequency_hz=5e9,
                                   q_int={'segmented': [2.0e6]},
                                   remainder={'mode': 'segmented', 'target': 're_al'})
        out = self.tmp / 'out'
        result = run_pipeline(config, out=out)
        self.assertIsNone(result.solve)
        self.assertEqual(result.remainder.provenance, 'remainder')
        self.assertAlmostEqual(result.remainder.value / 2.284e-12, 1.0, delta=2e-3)
        self.assertEqual(result.loss_factor('re_al'), result.remainder)
        self.assertAlmostEqual(result.budget.q_int.value / 2.0e6, 1.0, delta=1e-9)
        report = read_json(out / 'solve_report.json')
        self.assertEqual(report['remainder']['label'], 're_al')
        self.assertIsNone(report['solve'])
