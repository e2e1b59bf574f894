import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import numpy as np
from scipy import stats
from src.metrics import METRIC_FIELDS, REFERENCE_SHAPE_COMPARISON, ShapeMetrics, read_metrics_csv, summarize_metrics
logger = logging.getLogger(__name__)

METRIC_LABELS = {'max_ed': 'MaxED', 'mete': 'METE', 'mers': 'MERS', 'frechet': 'Frechet'}


def calculate_statistics(control_values: Sequence[float], treatment_values: Sequence[float]) -> Dict[str, Any]:
    """Welch t-test of treatment against control; difference is treatment - control."""
    if len(control_values) == 0 or len(treatment_values) == 0:
        return {'control_mean': 0.0, 'control_std': 0.0, 'treatment_mean': 0.0, 'treatment_std': 0.0, 'difference': 0.0, 'difference_pct': 0.0, 't_statistic': 0.0, 'p_value': 1.0, 'significant': False, 'confidence_interval_95': (0.0, 0.0), 'sample_size_control': len(control_values), 'sample_size_treatment': len(treatment_values)}
    control_mean = float(np.mean(control_values))
    treatment_mean = float(np.mean(treatment_values))
    difference = treatment_mean - control_mean
    difference_pct = difference / control_mean * 100 if control_mean != 0 else 0.0
    if len(control_values) > 1 and len(treatment_values) > 1:
        t_stat, p_value = stats.ttest_ind(treatment_values, control_values, equal_var=False)
        se_diff = np.sqrt(stats.sem(control_values) ** 2 + stats.sem(treatment_values) ** 2)
    else:
        t_stat, p_value, se_diff = (0.0, 1.0, 0.0)
    if not np.isfinite(p_value):
        # identical constant samples
        t_stat, p_value = (0.0, 1.0)
    ci_95 = (difference - 1.96 * se_diff, difference + 1.96 * se_diff)
    return {'control_mean': control_mean, 'control_std': float(np.std(control_values)), 'treatment_mean': treatment_mean, 'treatment_std': float(np.std(treatment_values)), 'difference': float(difference), 'difference_pct': float(difference_pct), 't_statistic': float(t_stat), 'p_value': float(p_value), 'significant': bool(p_value < 0.05), 'confidence_interval_95': (float(ci_95[0]), float(ci_95[1])), 'sample_size_control': len(control_values), 'sample_size_treatment': len(treatment_values)}


class RepresentationComparison:
    """Cartesian (control) vs spherical (treatment) shape metrics; lower is better."""

    def __init__(self, control: Sequence[ShapeMetrics], treatment: Sequence[ShapeMetrics], control_name: str='cartesian', treatment_name: str='spherical'):
        self.control = list(control)
        self.treatment = list(treatment)
        self.control_name = control_name
        self.treatment_name = treatment_name

    @classmethod
    def from_csv(cls, control_path: Union[str, Path], treatment_path: Union[str, Path], **kwargs) -> 'RepresentationComparison':
        control = [m for _, m in read_metrics_csv(control_path)]
        treatment = [m for _, m in read_metrics_csv(treatment_path)]
        return cls(control, treatment, **kwargs)

    def metric_values(self, group: str, metric_name: str) -> List[float]:
        rows = self.control if group == 'control' else self.treatment
        return [float(getattr(m, metric_name)) for m in rows]

    def analyze(self, metrics: Optional[List[str]]=None) -> Dict[str, Any]:
        metrics = metrics or list(METRIC_FIELDS)
        analysis = {'control': self.control_name, 'treatment': self.treatment_name, 'sample_size_control': len(self.control), 'sample_size_treatment': len(self.treatment), 'metrics': {}}
        for metric in metrics:
            analysis['metrics'][metric] = calculate_statistics(self.metric_values('control', metric), self.metric_values('treatment', metric))
        improvements = sum((1 for m in analysis['metrics'].values() if m['significant'] and m['difference'] < 0))
        analysis['summary'] = {'significant_improvements': improvements, 'total_metrics': len(metrics)}
        logger.info(f'Compared {len(self.control)} {self.control_name} vs {len(self.treatment)} {self.treatment_name} frame(s): {improvements}/{len(metrics)} significant improvement(s)')
        return analysis

    def summary_table(self) -> List[List[str]]:
        """Rows of mean +- std per representation, followed by the published real-data values."""
        rows = []
        for name, group in ((self.control_name, self.control), (self.treatment_name, self.treatment)):
            summary = summarize_metrics(group)
            rows.append([name] + [f'{summary[k][0]:.2f} ± {summary[k][1]:.2f}' for k in METRIC_FIELDS])
        for name in (self.control_name, self.treatment_name):
            reference = REFERENCE_SHAPE_COMPARISON.get(name)
            if reference:
                rows.append([f'{name} (published)'] + [f'{reference[k][0]:.2f} ± {reference[k][1]:.2f}' for k in METRIC_FIELDS])
        return rows

    def generate_report(self, analysis: Dict[str, Any]) -> str:
        report = f"# Shape comparison: {analysis['control']} vs {analysis['treatment']}\n\n- **{analysis['control']}:** {analysis['sample_size_control']} frames\n- **{analysis['treatment']}:** {analysis['sample_size_treatment']} frames\n\n| Metric | {analysis['control']} (mm) | {analysis['treatment']} (mm) | Difference | 95% CI | p-value |\n|--------|------|------|------------|--------|---------|\n"
        for metric, s in analysis['metrics'].items():
            lo, hi = s['confidence_interval_95']
            report += f"| {METRIC_LABELS.get(metric, metric)} | {s['control_mean']:.3f} ± {s['control_std']:.3f} | {s['treatment_mean']:.3f} ± {s['treatment_std']:.3f} | {s['difference']:+.3f} ({s['difference_pct']:+.1f}%) | [{lo:+.3f}, {hi:+.3f}] | {s['p_value']:.4f} |\n"
        report += f"\n- **Significant improvements:** {analysis['summary']['significant_improvements']}/{analysis['summary']['total_metrics']} metrics\n"
        return report

    def export_analysis(self, output_dir: Union[str, Path]) -> Tuple[Path, Path]:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        analysis = self.analyze()
        analysis_path = output_dir / 'comparison.json'
        with open(analysis_path, 'w') as f:
            json.dump(analysis, f, indent=2)
            f.write('\n')
        report_path = output_dir / 'comparison.md'
        report_path.write_text(self.generate_report(analysis))
        return (analysis_path, report_path)
