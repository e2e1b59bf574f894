import unittest
import json
import tempfile
import shutil
from pathlib import Path
import sys
sys.path.insert(0, str(Path(__file__).parent.parent))
from src.evaluation import RepresentationComparison, calculate_statistics
from src.metrics import ShapeMetrics, write_metrics_csv


def metrics(values):
    return [ShapeMetrics(max_ed=v * 2, mete=v, mers=v * 0.5, frechet=v * 1.5) for v in values]


class TestCalculateStatistics(unittest.TestCase):

    def test_empty(self):
        stats = calculate_statistics([], [])
        self.assertEqual(stats['control_mean'], 0.0)
        self.assertEqual(stats['p_value'], 1.0)
        self.assertFalse(stats['significant'])

    def test_clear_improvement(self):
        control = [7.0, 6.5, 7.2, 6.8, 7.1, 6.9]
        treatment = [3.1, 3.4, 3.0, 3.3, 3.2, 3.5]
        stats = calculate_statistics(control, treatment)
        self.assertLess(stats['difference'], 0)
        self.assertTrue(stats['significant'])
        lo, hi = stats['confidence_interval_95']
        self.assertLess(lo, stats['difference'])
        self.assertLess(hi, 0)

    def test_constant_samples(self):
        stats = calculate_statistics([1.0, 1.0, 1.0], [1.0, 1.0, 1.0])
        self.assertEqual(stats['p_value'], 1.0)
        self.assertFalse(stats['significant'])

    def test_single_values(self):
        stats = calculate_statistics([2.0], [1.0])
        self.assertEqual(stats['difference'], -1.0)
        self.assertEqual(stats['difference_pct'], -50.0)
        self.assertEqual(stats['p_value'], 1.0)


class TestRepresentationComparison(unittest.TestCase):

    def setUp(self):
        self.test_dir = Path(tempfile.mkdtemp())
        self.comparison = RepresentationComparison(metrics([6.0, 7.0, 8.0, 7.5]), metrics([3.0, 3.5, 2.5, 3.2]))

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_analyze(self):
        analysis = self.comparison.analyze()
        self.assertEqual(set(analysis['metrics']), {'max_ed', 'mete', 'mers', 'frechet'})
        self.assertEqual(analysis['summary']['total_metrics'], 4)
        self.assertEqual(analysis['summary']['significant_improvements'], 4)

    def test_summary_table_includes_published_rows(self):
        rows = self.comparison.summary_table()
        self.assertEqual([r[0] for r in rows], ['cartesian', 'spherical', 'cartesian (published)', 'spherical (published)'])
        self.assertEqual(rows[3][2], '3.28 ± 2.59')

    def test_from_csv(self):
        control = write_metrics_csv(self.test_dir / 'metrics_cartesian.csv', list(enumerate(metrics([1.0, 2.0]))))
        treatment = write_metrics_csv(self.test_dir / 'metrics_spherical.csv', list(enumerate(metrics([0.5]))))
        comparison = RepresentationComparison.from_csv(control, treatment)
        self.assertEqual(comparison.metric_values('control', 'mete'), [1.0, 2.0])
        self.assertEqual(comparison.metric_values('treatment', 'max_ed'), [1.0])

    def test_export(self):
        analysis_path, report_path = self.comparison.export_analysis(self.test_dir / 'out')
        with open(analysis_path) as f:
            analysis = json.load(f)
        self.assertEqual(analysis['control'], 'cartesian')
        report = report_path.read_text()
        self.assertIn('| METE |', report)
        self.assertIn('Significant improvements', report)
if __name__ == '__main__':
    unittest.main()
