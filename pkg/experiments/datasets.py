from collections.abc import Iterable
import os

import polars as pl

from reltrack.specfile import asset_path, load_spec

EXAMPLES = {
    'example': 'example.tt',
    'fibonacci': 'fibonacci.tt',
}

TREES = {
    'example_tree': 'example_tree.tt',
    'counterexample_k2': 'counterexample_k2.tt',
    'limit_example_k2': 'limit_example_k2.tt',
    'hnn_limit': 'hnn_limit.tt',
}

def load_dataset(name):
    if isinstance(name, str):
        return _load_one_dataset(name)
    elif isinstance(name, Iterable):
        return [_load_one_dataset(n) for n in name]
    else:
        raise ValueError(f'Unknown dataset: {name}')

def _load_one_dataset(name):
    if name in EXAMPLES:
        path = asset_path(EXAMPLES[name])
    elif name in TREES:
        path = asset_path(TREES[name])
    elif os.path.exists(name):
        path = name
    else:
        raise ValueError(f'Unknown dataset: {name}')
    return load_spec(path)

def list_datasets():
    rows = []
    for kind, names in (('automorphism', EXAMPLES), ('tree', TREES)):
        for name, filename in names.items():
            spec = load_spec(asset_path(filename))
            rows.append({
                'name': name,
                'kind': kind,
                'rank': spec.basis.rank,
                'factors': len(spec.basis.blocks),
            })
    return pl.DataFrame(rows)
