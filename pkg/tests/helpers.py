import numpy as np


def ks_tolerance(n1, n2=None, level=1.63):
    """Null 99% quantile of the KS statistic for the given sample sizes."""
    effective = n1 if n2 is None else n1 * n2 / (n1 + n2)
    return level / np.sqrt(effective)
