import datetime

import hydra
import polars as pl
import wandb

from experiments import metrics, datasets
from reltrack import AnalysisConfig, RelativeAutomorphism

@hydra.main(version_base=None, config_path="../../config", config_name="config")
def main(config):
    dataset_name = config['data']['dataset']
    method = config['model']['method']
    analysis = AnalysisConfig(**config['analysis'])

    wandb.init(
        # set the wandb project where this run will be logged
        project=config['wandb']['project'],
        mode=config['wandb']['mode'],

        # track hyperparameters and run metadata
        config={
            'dataset_name': dataset_name,
            'method': method,
            **analysis.to_dict(),
        }
    )

    spec = datasets.load_dataset(dataset_name)
    relative = RelativeAutomorphism.from_spec(spec, analysis)

    start_time = datetime.datetime.now()
    if method == 'analyze':
        report = relative.analyze()
        results = {
            'stretch_factor': report['stretch_factor'],
            'rtt_passed': report['rtt']['passed'],
            'certified': report.get('certificate', {}).get('verdict') == 'certified_necessary_conditions',
        }
    elif method == 'currents':
        report = relative.ns_experiment(config['model']['alpha'])
        report.to_frame().write_csv(f'./data/{dataset_name}_currents.csv')
        results = {
            'ratio_error': metrics.ratio_error(report.ratios, report.pf_value),
            'ratio_converged_at': metrics.first_converged(report.ratios, report.pf_value, 1e-3),
            'distance_decay_rate': metrics.distance_decay_rate(report.distances),
            'eventually_decreasing': report.eventually_decreasing,
        }
    elif method == 'trees':
        tree_name = config['model']['tree']
        if tree_name in ('tg', 'tg-pf'):
            tree = relative.tree('pf' if tree_name == 'tg-pf' else 'unit')
        else:
            tree = datasets.load_dataset(tree_name).to_tree()
        report = relative.tree_ns_experiment(tree, list(config['model']['sample']))
        report.to_frame().write_csv(f'./data/{dataset_name}_spectra.csv')
        drift = metrics.spectrum_drift(report.spectra)
        results = {
            'final_drift': float(drift[-1]) if len(drift) else None,
            'cauchy': report.cauchy,
            'contained': report.contained,
            'max_enclosure_width': max(metrics.enclosure_widths(report.enclosures).values()),
        }
    else:
        raise ValueError(f'Unknown method: {method}')
    end_time = datetime.datetime.now()

    results['wall_time'] = (end_time - start_time).total_seconds()
    wandb.log(results)
    pl.DataFrame([results]).write_csv(f'./data/{dataset_name}_{method}_summary.csv')
    wandb.finish()


if __name__ == '__main__':
    main()
