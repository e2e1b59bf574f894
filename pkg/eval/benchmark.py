import argparse
import json
import logging
import time
from pathlib import Path
from typing import Any, Dict
import sys
sys.path.insert(0, str(Path(__file__).parent.parent))
from src.config import Config
from src.evaluation import RepresentationComparison
from src.metrics import summarize_metrics, write_metrics_csv
from src.ml import TrainingConfig, evaluate_model, train, write_log_csv
from src.ml.dataset import split_dataset
from src.synthetic import make_desk_dataset
logger = logging.getLogger(__name__)


class BenchmarkRunner:
    """Desk-scale Cartesian vs spherical benchmark on one seeded synthetic split."""

    def __init__(self, n_sequences: int=200, max_epochs: int=100, seed: int=0, output_dir: str='./eval/results'):
        self.n_sequences = n_sequences
        self.max_epochs = max_epochs
        self.seed = seed
        self.output_dir = Path(output_dir)

    def config(self, representation: str) -> TrainingConfig:
        return TrainingConfig(representation=representation, max_epochs=self.max_epochs, max_segments=16, lr=0.005, seed=self.seed, scheduler_patience=5, early_stop_patience=15)

    def run_variant(self, representation: str, train_set, test_set) -> Dict[str, Any]:
        cfg = self.config(representation)
        start = time.time()
        result = train(train_set, cfg)
        elapsed = time.time() - start
        metrics = evaluate_model(result.params, test_set, cfg.radius, cfg.stop_threshold)
        write_log_csv(self.output_dir / f'training_log_{representation}.csv', result.log)
        write_metrics_csv(self.output_dir / f'metrics_{representation}.csv', list(enumerate(metrics)))
        print(f'  {representation}: {len(result.log)} epochs in {elapsed:.1f}s, loss {result.initial_train_loss:.4f} -> {result.final_train_loss:.4f}')
        return {'metrics': metrics, 'summary': summarize_metrics(metrics), 'epochs': len(result.log), 'seconds': round(elapsed, 2)}

    def run(self) -> Dict[str, Any]:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        data = make_desk_dataset(self.n_sequences, max_segments=16, seed=self.seed)
        train_set, test_set = split_dataset(data, 0.2, seed=self.seed + 1)
        print(f'Benchmark: {len(train_set)} training / {len(test_set)} held-out sequences')
        results = {rep: self.run_variant(rep, train_set, test_set) for rep in ('cartesian', 'spherical')}
        comparison = RepresentationComparison(results['cartesian']['metrics'], results['spherical']['metrics'])
        comparison.export_analysis(self.output_dir)
        for row in comparison.summary_table():
            print('  ' + ' | '.join(row))
        summary = {rep: {'summary': r['summary'], 'epochs': r['epochs'], 'seconds': r['seconds']} for rep, r in results.items()}
        with open(self.output_dir / 'benchmark.json', 'w') as f:
            json.dump(summary, f, indent=2)
        return summary


def main():
    parser = argparse.ArgumentParser(description='Desk-scale representation benchmark')
    parser.add_argument('--sequences', type=int, default=200)
    parser.add_argument('--epochs', type=int, default=100)
    parser.add_argument('--seed', type=int, default=Config.SEED)
    parser.add_argument('--output-dir', default='./eval/results')
    args = parser.parse_args()
    Config.configure_logging()
    BenchmarkRunner(args.sequences, args.epochs, args.seed, args.output_dir).run()


if __name__ == '__main__':
    main()
