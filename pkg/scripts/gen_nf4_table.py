"""One-time computation of the vendored 4-bit NormalFloat table.

Prints the quantile-midpoint construction at full float64 precision, plus the
scipy cross-check.  The output of this script is frozen into viz.nf4 as
NF4_VALUES; runtime quantization consults that constant, never this formula.
"""

import numpy as np

from viz.nf4 import normal_float_values


def main():
    values = normal_float_values(4)
    print("NF4_VALUES: tuple[float, ...] = (")
    for v in values:
        print(f"    {v!r},")
    print(")")

    try:
        from scipy.stats import norm
    except ImportError:
        print("# scipy unavailable; cross-check skipped")
        return
    n, half, delta = 16, 8, 1.0 / 32.0
    neg_q = norm.ppf(np.linspace(delta, 0.5, half + 1))
    neg_mid = (neg_q[:-1] + neg_q[1:]) / 2.0
    pos_q = norm.ppf(np.linspace(0.5, 1.0 - delta, half))
    pos_mid = (pos_q[:-1] + pos_q[1:]) / 2.0
    check = np.concatenate([neg_mid / abs(neg_mid[0]), [0.0],
                            pos_mid / pos_mid[-1]])
    diff = float(np.max(np.abs(check - np.array(values))))
    print(f"# scipy cross-check max abs diff: {diff:.3e}")


if __name__ == "__main__":
    main()
