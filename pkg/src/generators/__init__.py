from .chart_generator import ChartGenerator
__all__ = ['ChartGenerator']
