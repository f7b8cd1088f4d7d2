import numpy as np

def ratio_error(ratios, pf_value):
    if len(ratios) == 0:
        return np.nan
    return float(np.abs(np.asarray(ratios) - pf_value)[-1])

def first_converged(values, target, tol):
    """Index of the first entry after which every value stays within tol of target."""
    errors = np.abs(np.asarray(values, dtype=float) - target)
    for i in range(len(errors)):
        if np.all(errors[i:] <= tol):
            return i
    return None

def distance_decay_rate(distances):
    """Geometric mean of successive distance quotients, ignoring zeros."""
    d = np.asarray(distances, dtype=float)
    if len(d) < 2:
        return np.nan
    quotients = d[1:][d[:-1] > 0] / d[:-1][d[:-1] > 0]
    quotients = quotients[quotients > 0]
    if len(quotients) == 0:
        return 0.0
    return float(np.exp(np.mean(np.log(quotients))))

def spectrum_drift(spectra):
    """Sup-norm difference between consecutive normalized spectra."""
    s = np.asarray(spectra, dtype=float)
    if len(s) < 2:
        return np.array([])
    return np.max(np.abs(s[1:] - s[:-1]), axis=1)

def enclosure_widths(enclosures):
    return {g: float(e.upper - e.lower) for g, e in enclosures.items()}
