import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import logging
from pathlib import Path
from typing import Dict, Sequence, Tuple, Union
import numpy as np
from src.schemas.chart_spec import ChartSpec, Series
logger = logging.getLogger(__name__)

# fixed ids and no creation date, so identical inputs give identical SVG bytes
matplotlib.rcParams['svg.hashsalt'] = 'wirerecon'
matplotlib.rcParams['svg.fonttype'] = 'none'


class ChartGenerator:

    def __init__(self, figsize: tuple=(8, 4.5)):
        self.figsize = figsize
        self.default_colors = ['#3498DB', '#E74C3C', '#2ECC71', '#F39C12', '#9B59B6', '#1ABC9C']

    def generate(self, chart_spec: ChartSpec, output_path: Union[str, Path]) -> Path:
        fig, ax = plt.subplots(figsize=self.figsize)
        if chart_spec.type == 'line':
            self._generate_line(ax, chart_spec)
        elif chart_spec.type == 'band':
            self._generate_band(ax, chart_spec)
        elif chart_spec.type == 'bar':
            self._generate_bar(ax, chart_spec)
        else:
            raise ValueError(f'Unsupported chart type: {chart_spec.type}')
        ax.set_title(chart_spec.title, fontsize=13, fontweight='bold')
        if chart_spec.x_label:
            ax.set_xlabel(chart_spec.x_label)
        if chart_spec.y_label:
            ax.set_ylabel(chart_spec.y_label)
        if chart_spec.log_y:
            ax.set_yscale('log')
        ax.grid(True, alpha=0.3, linestyle='--')
        ax.spines['top'].set_visible(False)
        ax.spines['right'].set_visible(False)
        if len(chart_spec.series) > 1 or chart_spec.type == 'bar':
            ax.legend(frameon=False)
        fig.tight_layout()
        output_path = Path(output_path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(output_path, format='svg', metadata={'Date': None})
        plt.close(fig)
        logger.debug(f'Wrote chart {chart_spec.title!r} to {output_path}')
        return output_path

    def _color(self, i: int) -> str:
        return self.default_colors[i % len(self.default_colors)]

    def _generate_line(self, ax, spec: ChartSpec):
        for i, s in enumerate(spec.series):
            ax.plot(s.x, s.y, color=self._color(i), linewidth=2, label=s.label)

    def _generate_band(self, ax, spec: ChartSpec):
        for i, s in enumerate(spec.series):
            y = np.asarray(s.y)
            ax.plot(s.x, y, color=self._color(i), linewidth=2, label=s.label)
            if s.spread is not None:
                spread = np.asarray(s.spread)
                ax.fill_between(s.x, y - spread, y + spread, color=self._color(i), alpha=0.25, linewidth=0)

    def _generate_bar(self, ax, spec: ChartSpec):
        n = len(spec.series)
        width = 0.8 / n
        x = np.arange(len(spec.series[0].x))
        for i, s in enumerate(spec.series):
            ax.bar(x + (i - (n - 1) / 2) * width, s.y, width, yerr=s.spread, color=self._color(i), label=s.label, capsize=3)
        if spec.categories:
            ax.set_xticks(x)
            ax.set_xticklabels(spec.categories)

    def generate_profile_chart(self, summary: Dict[str, np.ndarray], output_path: Union[str, Path], title: str='Reprojection error per sample index') -> Path:
        index = [float(i) for i in summary['index']]
        series = [Series(label='Camera A', x=index, y=list(summary['mean_a']), spread=list(summary['std_a'])), Series(label='Camera B', x=index, y=list(summary['mean_b']), spread=list(summary['std_b']))]
        return self.generate(ChartSpec(type='band', title=title, x_label='Index (from tip)', y_label='Error (px)', series=series), output_path)

    def generate_training_curve(self, log: Sequence[Dict[str, float]], output_path: Union[str, Path], title: str='Training loss') -> Path:
        epochs = [float(row['epoch']) for row in log]
        series = [Series(label='train', x=epochs, y=[row['train_loss'] for row in log]), Series(label='validation', x=epochs, y=[row['val_loss'] for row in log])]
        return self.generate(ChartSpec(type='line', title=title, x_label='Epoch', y_label='Loss', series=series, log_y=all((row['train_loss'] > 0 and row['val_loss'] > 0 for row in log))), output_path)

    def generate_metric_comparison(self, summaries: Dict[str, Dict[str, Tuple[float, float]]], output_path: Union[str, Path], title: str='Shape comparison') -> Path:
        metrics = list(next(iter(summaries.values())).keys())
        x = [float(i) for i in range(len(metrics))]
        series = [Series(label=name, x=x, y=[s[m][0] for m in metrics], spread=[s[m][1] for m in metrics]) for name, s in summaries.items()]
        return self.generate(ChartSpec(type='bar', title=title, x_label='Metric', y_label='Distance (mm)', series=series, categories=metrics), output_path)
