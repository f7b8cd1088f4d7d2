import os

import wandb

def get_latest_runs(project):
    api = wandb.Api()
    runs = api.runs(project)

    latest_by_dataset = {}
    for run in runs:
        if run.state == "finished":
            method = run.config.get('method')
            dataset = run.config.get('dataset_name')
            if dataset not in latest_by_dataset:
                latest_by_dataset[dataset] = {}
            if method not in latest_by_dataset[dataset] or run.created_at > latest_by_dataset[dataset][method].created_at:
                latest_by_dataset[dataset][method] = run

    return latest_by_dataset

def generate_latex_table(runs_data):
    """
    Generate a LaTeX table of the convergence experiments, one block of rows per example.

    Args:
        runs_data (dict): dataset -> method -> run, as returned by get_latest_runs.

    Returns:
        str: Formatted LaTeX table string
    """
    latex_table = [
        "\\begin{tabular}{llcccc}",
        "\\hline",
        "\\textbf{Example} & \\textbf{Experiment} & \\textbf{Ratio error} & "
        "\\textbf{Decay rate} & \\textbf{Final drift} & \\textbf{Wall time} \\\\",
        "\\hline"
    ]

    methods = ['currents', 'trees']
    metrics = ['ratio_error', 'distance_decay_rate', 'final_drift', 'wall_time']

    for dataset in sorted(runs_data):
        latex_table.append(f"{dataset} & & & & & \\\\")
        for method in methods:
            row_parts = ["& ", method]
            run = runs_data[dataset].get(method)
            for metric in metrics:
                value = run.summary.get(metric) if run is not None else None
                row_parts.append(f"& {value:.3g}" if value is not None else "& -")
            row_parts.append("\\\\")
            latex_table.append("".join(row_parts))
        latex_table.append("\\hline")

    latex_table.append("\\end{tabular}")
    return "\n".join(latex_table)

def main():
    latest_runs = get_latest_runs("relative-train-tracks")
    latex_table = generate_latex_table(latest_runs)

    with open(os.path.join('.', 'data', 'convergence_table.tex'), 'w') as f:
        f.write(latex_table)

if __name__ == '__main__':
    main()
