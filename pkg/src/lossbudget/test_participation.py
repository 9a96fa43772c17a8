import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from .exceptions import (ConfigurationError, GridMismatchError, InsufficientPointsError,
                         KindMismatchError, NonConvergentError, NonPositiveCorrectionError,
                         NonPositiveInputError, PositionOutOfRangeError, UnitMismatchError,
                         ZeroDenominatorError, ZeroLocalFieldError, ZeroTotalEnergyError)
from .models import (ConvergenceSeries, FieldIntegrals, LossFactorEstimate, ParticipationTable,
                     SeamGeometry)
from .participation import (EPSILON_0, MU_0, aggregate_surface, aggregate_table,
                            apply_donut_to_edge, apply_stitching, donut_to_edge_factor,
                            extrapolate_convergence, integrate_profile,
                            participation_from_integrals, rescale_loss_factor,
                            seam_admittance_distributed, seam_admittance_lumped,
                            stitch_local_to_global, uniform_seam_positions)
from .serializers import FieldIntegralsSerializer, ParticipationTableSerializer, load
from .utils import fixture_path, write_json


class FieldIntegralTests(SimpleTestCase):
    """Test participations computed from exported field integrals."""

    def test_metal_substrate(self):
        """Test the thin-interface participation of a metal-substrate surface."""
        fi = FieldIntegrals(kind='metal_substrate', integral=2.0e3, total_electric_energy=1e-6)
        expected = 10.0 * 3e-9 * EPSILON_0 * 2.0e3 / 1e-6
        self.assertAlmostEqual(participation_from_integrals(fi) / expected, 1.0, places=12)

    def test_metal_air_divides_by_permittivity(self):
        """Test that the metal-air interface divides by its permittivity."""
        fi = FieldIntegrals(kind='metal_air', integral=2.0e3, total_electric_energy=1e-6)
        ms = FieldIntegrals(kind='metal_substrate', integral=2.0e3, total_electric_energy=1e-6)
        ratio = participation_from_integrals(ms) / participation_from_integrals(fi)
        self.assertAlmostEqual(ratio, 100.0)

    def test_bulk_is_energy_ratio(self):
        """Test that bulk participation is the stored-energy fraction."""
        fi = FieldIntegrals(kind='bulk', integral=0.9e-6, total_electric_energy=1e-6)
        self.assertAlmostEqual(participation_from_integrals(fi), 0.9)

    def test_magnetic_kinds(self):
        """Test the conductor and seam definitions."""
        conductor = FieldIntegrals(kind='conductor', integral=1e-3, total_magnetic_energy=2e-6,
                                   omega=1e10)
        seam = FieldIntegrals(kind='seam', integral=1e-3, total_magnetic_energy=2e-6, omega=1e10)
        self.assertAlmostEqual(participation_from_integrals(conductor),
                               1e-3 / (MU_0 * 1e10 * 2e-6))
        self.assertAlmostEqual(participation_from_integrals(seam), 1e-3 / (1e10 * 2e-6))

    def test_missing_normalization(self):
        """Test that kind-specific inputs are required and energies must be positive."""
        with self.assertRaises(KindMismatchError):
            participation_from_integrals(FieldIntegrals(kind='seam', integral=1.0,
                                                        total_electric_energy=1.0))
        with self.assertRaises(ZeroTotalEnergyError):
            participation_from_integrals(FieldIntegrals(kind='bulk', integral=1.0,
                                                        total_electric_energy=0.0))
        with self.assertRaises(KindMismatchError):
            FieldIntegrals(kind='volume', integral=1.0)


class FieldIntegralRecordTests(SimpleTestCase):
    """Test field-integral bundles read from JSON records."""

    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.path = Path(tmp.name) / 'integrals.json'

    def test_defaults_and_participations(self):
        """Test that records without interface parameters take the configured defaults."""
        write_json(self.path, [
            {'label': 'substrate', 'kind': 'bulk', 'integral': 0.9e-6,
             'total_electric_energy': 1e-6},
            {'label': 'ms', 'kind': 'metal_substrate', 'integral': 2.0e3,
             'total_electric_energy': 1e-6, 'thickness': 2e-9},
        ])
        bulk, ms = load(FieldIntegralsSerializer, self.path, many=True)
        self.assertEqual(bulk.label, 'substrate')
        self.assertEqual(bulk.thickness, 3e-9)
        self.assertEqual(bulk.rel_permittivity, 10.0)
        self.assertAlmostEqual(participation_from_integrals(bulk), 0.9)
        expected = 10.0 * 2e-9 * EPSILON_0 * 2.0e3 / 1e-6
        self.assertAlmostEqual(participation_from_integrals(ms) / expected, 1.0, places=12)

    def test_rejected_record(self):
        """Test that an invalid record names the file."""
        write_json(self.path, [{'kind': 'bulk', 'integral': 1.0, 'thickness': -1.0}])
        with self.assertRaises(ConfigurationError) as ctx:
            load(FieldIntegralsSerializer, self.path, many=True)
        self.assertIn('integrals.json', str(ctx.exception))

    def test_donut_to_edge(self):
        """Test the edge correction of a donut participation."""
        factor = donut_to_edge_factor(3.0, 4.0)
        self.assertAlmostEqual(apply_donut_to_edge(1e-4, factor), 0.75e-4)
        with self.assertRaises(ZeroDenominatorError):
            donut_to_edge_factor(1.0, 0.0)

    def test_donut_to_edge_square_root_edge_field(self):
        """Test the factor for a field diverging as r^-1/2 towards the film edge."""
        edge_r = np.geomspace(1e-8, 1e-6, 2001)
        donut_r = np.geomspace(1e-6, 1e-5, 2001)
        # |E| ~ r^-1/2 gives an energy density ~ 1/r
        edge = integrate_profile(edge_r, (edge_r ** -0.5) ** 2)
        donut = integrate_profile(donut_r, (donut_r ** -0.5) ** 2)
        factor = donut_to_edge_factor(edge, donut)
        self.assertAlmostEqual(factor / (math.log(100) / math.log(10)), 1.0, delta=1e-6)
        self.assertAlmostEqual(apply_donut_to_edge(1e-4, factor) / 2e-4, 1.0, delta=1e-6)

    def test_integrate_profile(self):
        """Test the Simpson integral of a sampled energy density."""
        x = np.linspace(0, 1, 11)
        self.assertAlmostEqual(integrate_profile(x, x ** 2), 1 / 3)
        with self.assertRaises(GridMismatchError):
            integrate_profile(x, x[:-1])


class SeamAdmittanceTests(SimpleTestCase):
    """Test seam admittances per unit length."""

    def test_lumped(self):
        """Test a seam in a 283 ohm lumped element 10 um wide."""
        y = seam_admittance_lumped(SeamGeometry(impedance=283.0, width=1e-5))
        self.assertAlmostEqual(y, 706.7, delta=0.1)

    def test_lumped_open(self):
        """Test that an infinite impedance carries no seam current."""
        self.assertEqual(seam_admittance_lumped(SeamGeometry(impedance=math.inf, width=1e-5)), 0.0)

    def test_distributed(self):
        """Test 628 seams spread along a 12.58 mm half-wave strip."""
        length = 12.58e-3
        positions = uniform_seam_positions(length, 628)
        self.assertEqual(len(positions), 628)
        y = seam_admittance_distributed(SeamGeometry(impedance=215.0, width=10e-6,
                                                     length=length, positions=positions))
        self.assertAlmostEqual(y / 9.298e4, 1.0, delta=1e-3)

    def test_distributed_matches_direct_sum(self):
        """Test 628 seams against a seam-by-seam summation."""
        length, width, impedance = 12.58e-3, 10e-6, 215.0
        positions = uniform_seam_positions(length, 628)
        y = seam_admittance_distributed(SeamGeometry(impedance=impedance, width=width,
                                                     length=length, positions=positions))
        direct = math.fsum(2.0 / (math.pi * impedance * width) * math.sin(math.pi * z / length) ** 2
                           for z in positions)
        self.assertAlmostEqual(y / direct, 1.0, delta=1e-12)

    def test_distributed_node(self):
        """Test that a seam at the current node of the strip contributes nothing."""
        y = seam_admittance_distributed(SeamGeometry(impedance=50.0, width=1e-5, length=1e-2,
                                                     positions=(0.0,)))
        self.assertAlmostEqual(y, 0.0)

    def test_position_outside_strip(self):
        """Test that positions beyond the strip are rejected."""
        with self.assertRaises(PositionOutOfRangeError):
            seam_admittance_distributed(SeamGeometry(impedance=50.0, width=1e-5, length=1e-2,
                                                     positions=(2e-2,)))


class StitchingTests(SimpleTestCase):
    """Test local-to-global stitching."""

    def test_constant_ratio(self):
        """Test a global field twice the local one along the line."""
        x = np.linspace(0, 1e-6, 20)
        local = np.linspace(1.0, 3.0, 20)
        result = stitch_local_to_global((x, 2 * local), (x, local))
        self.assertAlmostEqual(result.factor, 2.0)
        self.assertAlmostEqual(result.sigma, 0.0)
        self.assertEqual(result.n_samples, 20)
        self.assertEqual(apply_stitching({'re_ms': 1e-4}, result, squared=True)['re_ms'], 4e-4)
        np.testing.assert_allclose(apply_stitching([1.0, 2.0], result), [2.0, 4.0])

    def test_jittered_ratio(self):
        """Test a global field 1.3 times the local one with 5% point-wise jitter."""
        x = np.linspace(0, 1e-6, 400)
        local = 1.0 + 0.5 * np.sin(np.linspace(0, 3, 400))
        jitter = np.random.default_rng(7).uniform(-0.05, 0.05, 400)
        result = stitch_local_to_global((x, 1.3 * local * (1 + jitter)), (x, local))
        self.assertAlmostEqual(result.factor / 1.3, 1.0, delta=0.01)
        self.assertGreater(result.sigma, 0)
        self.assertLess(abs(result.factor - 1.3), 5 * result.sigma)
        self.assertAlmostEqual(result.factor_squared, result.factor ** 2)

    def test_grid_mismatch(self):
        """Test that profiles on different grids are rejected."""
        x = np.linspace(0, 1, 10)
        with self.assertRaises(GridMismatchError):
            stitch_local_to_global((x, np.ones(10)), (x * 2, np.ones(10)))

    def test_zero_local_field(self):
        """Test that a vanishing local field is rejected."""
        x = np.linspace(0, 1, 10)
        local = np.ones(10)
        local[4] = 0.0
        with self.assertRaises(ZeroLocalFieldError):
            stitch_local_to_global((x, np.ones(10)), (x, local))


class ConvergenceTests(SimpleTestCase):
    """Test mesh-convergence extrapolation."""

    def make_series(self, offset=50.0):
        n = np.array([1e4, 2e4, 4e4, 8e4, 1.6e5, 3.2e5])
        return ConvergenceSeries(n_elements=n, p=0.948 - offset / n)

    def test_linear_intercept(self):
        """Test that an exact 1/n series extrapolates to its intercept."""
        result = extrapolate_convergence(self.make_series())
        self.assertAlmostEqual(result.p_infinity.value, 0.948, places=9)
        self.assertEqual(result.tail_points, 3)
        self.assertAlmostEqual(result.slope, -50.0, places=5)

    def test_power_law(self):
        """Test that the power-law fit recovers exponent 1 and order 3 in 3D."""
        power_law = extrapolate_convergence(self.make_series()).power_law
        self.assertIsNotNone(power_law)
        self.assertAlmostEqual(power_law.exponent, 1.0, delta=1e-3)
        self.assertAlmostEqual(power_law.order, 3.0, delta=3e-3)
        self.assertAlmostEqual(power_law.p_infinity.value, 0.948, delta=1e-6)

    def test_power_law_fractional_exponents(self):
        """Test that power laws with c/d of 1/3 and 2/3 extrapolate to p_inf within 0.5%."""
        n = 1e4 * 2.0 ** np.arange(8)
        for exponent in (1 / 3, 2 / 3):
            series = ConvergenceSeries(n_elements=n, p=0.948 - 0.1 * (n / n[0]) ** -exponent)
            power_law = extrapolate_convergence(series).power_law
            self.assertIsNotNone(power_law)
            self.assertAlmostEqual(power_law.p_infinity.value / 0.948, 1.0, delta=5e-3,
                                   msg=f'c/d = {exponent:.3f}')
            self.assertAlmostEqual(power_law.exponent, exponent, delta=1e-3)

    def test_converging_from_above(self):
        """Test a series that decreases towards an intercept below every pass."""
        series = self.make_series(offset=-50.0)
        result = extrapolate_convergence(series)
        self.assertAlmostEqual(result.p_infinity.value, 0.948, places=9)
        self.assertLess(result.p_infinity.value, series.p.min())
        self.assertAlmostEqual(result.slope, 50.0, places=5)

    def test_tail_points(self):
        """Test the tail length bounds."""
        series = self.make_series()
        self.assertEqual(extrapolate_convergence(series, tail_points=6).tail_points, 6)
        with self.assertRaises(InsufficientPointsError):
            extrapolate_convergence(series, tail_points=2)
        with self.assertRaises(InsufficientPointsError):
            extrapolate_convergence(series, tail_points=7)

    def test_short_series(self):
        """Test that fewer than four passes are rejected."""
        with self.assertRaises(InsufficientPointsError):
            ConvergenceSeries(n_elements=[1, 2, 3], p=[0.1, 0.2, 0.3])

    def test_oscillating_tail(self):
        """Test that a non-monotonic tail is reported as non-convergent."""
        series = ConvergenceSeries(n_elements=[1e4, 2e4, 4e4, 8e4, 1.6e5],
                                   p=[0.90, 0.93, 0.95, 0.94, 0.96])
        with self.assertRaises(NonConvergentError):
            extrapolate_convergence(series)


class AggregationTests(SimpleTestCase):
    """Test surface aggregation and loss-factor rescaling."""

    def test_aggregate_surface(self):
        """Test the film total of three interfaces."""
        self.assertAlmostEqual(aggregate_surface(6.7e-5, 6.4e-4, 7.4e-4), 1.447e-3)
        with self.assertRaises(NonPositiveInputError):
            aggregate_surface(-1e-5, 1e-4, 1e-4)

    def test_fixture_table_groups(self):
        """Test that the bundled table collapses into re_surface and al_surface columns."""
        table = load(ParticipationTableSerializer, fixture_path('participations.json'))
        self.assertIn('re_ms', table.mechanism_labels)
        aggregated = table.aggregate()
        self.assertNotIn('re_ms', aggregated.mechanism_labels)
        self.assertEqual(aggregated.mechanism_labels[:3], ('bulk', 're_surface', 'al_surface'))
        self.assertAlmostEqual(aggregated.value('D1', 're_surface'), 1.447e-3)
        self.assertEqual(aggregated.value('D1', 'al_surface'), 0.0)
        self.assertAlmostEqual(aggregated.value('transmon', 'al_surface'), 4.78e-5)
        self.assertEqual(aggregated.unit('re_al'), 'S/m')

    def test_group_unit_mismatch(self):
        """Test that a group may not mix units."""
        table = ParticipationTable(mode_labels=['a'], mechanism_labels=['x', 'y'],
                                   values=[[1.0, 2.0]], units=['dimensionless', 'S/m'])
        with self.assertRaises(UnitMismatchError):
            aggregate_table(table, {'xy': ('x', 'y')})

    def test_rescale(self):
        """Test a transferred surface loss factor divided by 1.21."""
        gamma = LossFactorEstimate(label='al_surface', value=10.5e-4, sigma=2.9e-4,
                                   provenance='transferred:film study')
        scaled = rescale_loss_factor(gamma, 0.21)
        self.assertAlmostEqual(scaled.value / 8.678e-4, 1.0, delta=1e-3)
        self.assertAlmostEqual(scaled.sigma / 2.397e-4, 1.0, delta=1e-3)
        self.assertIn('rescaled', scaled.provenance)
        self.assertIs(rescale_loss_factor(gamma, 0.0), gamma)
        with self.assertRaises(NonPositiveCorrectionError):
            rescale_loss_factor(gamma, -0.1)
