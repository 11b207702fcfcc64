import numpy as np
from scipy.stats import chi2 as chi2_dist


def chi_square_pvalue(samples, bin_edges, bin_probs):
    """Chi-square goodness-of-fit p-value for binned samples vs probabilities."""
    counts, _ = np.histogram(samples, bins=bin_edges)
    probs = np.asarray(bin_probs, dtype=float)
    probs = probs / probs.sum()
    expected = probs * counts.sum()
    keep = expected >= 5.0
    stat = float(np.sum((counts[keep] - expected[keep]) ** 2 / expected[keep]))
    dof = int(keep.sum()) - 1
    return float(chi2_dist.sf(stat, dof))


def bin_probs_from_density(density_fn, bin_edges, fine=64):
    """Integrate a 1-d density over each bin with a fine trapezoid rule."""
    probs = []
    for lo, hi in zip(bin_edges[:-1], bin_edges[1:]):
        xs = np.linspace(lo, hi, fine)
        probs.append(np.trapezoid(density_fn(xs), xs))
    return np.asarray(probs)
