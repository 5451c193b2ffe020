"""Build the pre-expanded cgd design matrix used by the tests and examples.

The source table is `survival::cgd` as shipped in the `rdatasets` Python
package. The design mirrors the R model formula

    Surv(tstart, tstop, status) ~ treat + sex + ns(age, 3) + height + weight
        + inherit + steroids + propylac + hos.cat

with treatment contrasts and R's natural-spline basis (interior knots at the
1/3 and 2/3 quantiles of age, boundary knots at its range, no intercept).

Usage: python3 tools/make_cgd_fixture.py crates/core/data/cgd.csv
"""

import lzma
import os
import pickle
import sys

import numpy as np
from scipy.interpolate import BSpline


def load_cgd():
    import rdatasets  # noqa: F401  (pip install rdatasets)

    path = os.path.join(os.path.dirname(rdatasets.__file__), "_data", "survival", "cgd.pkl.compress")
    with open(path, "rb") as fh:
        return pickle.loads(lzma.decompress(fh.read()))


def spline_design(knots, x, order=4, deriv=0):
    n_basis = len(knots) - order
    out = np.zeros((len(x), n_basis))
    for j in range(n_basis):
        coef = np.zeros(n_basis)
        coef[j] = 1.0
        spl = BSpline(knots, coef, order - 1, extrapolate=True)
        out[:, j] = spl(x, nu=deriv) if deriv else spl(x)
    # right boundary: R evaluates the last basis function as 1 at the upper knot
    if deriv == 0:
        at_hi = x == knots[-1]
        out[at_hi, :] = 0.0
        out[at_hi, -1] = 1.0
    return out


def natural_spline(x, df=3):
    x = np.asarray(x, dtype=float)
    inner = np.quantile(x, np.linspace(0, 1, df + 1)[1:-1])  # type 7, as R
    lo, hi = x.min(), x.max()
    knots = np.concatenate([[lo] * 4, inner, [hi] * 4])
    basis = spline_design(knots, x)[:, 1:]
    const = spline_design(knots, np.array([lo, hi]), deriv=2)[:, 1:]
    q, _ = np.linalg.qr(const.T, mode="complete")
    return (basis @ q)[:, 2:]


def main(out_path):
    df = load_cgd()
    ns = natural_spline(df["age"].to_numpy())
    hos_levels = ["US:NIH", "US:other", "Europe:Amsterdam", "Europe:other"]
    cols = {
        "id": df["id"].astype(int),
        "tstart": df["tstart"].astype(float),
        "tstop": df["tstop"].astype(float),
        "status": df["status"].astype(int),
        "treat_rIFN_g": (df["treat"] == "rIFN-g").astype(float),
        "sex_female": (df["sex"] == "female").astype(float),
        "ns_age_1": ns[:, 0],
        "ns_age_2": ns[:, 1],
        "ns_age_3": ns[:, 2],
        "height": df["height"].astype(float),
        "weight": df["weight"].astype(float),
        "inherit_autosomal": (df["inherit"] == "autosomal").astype(float),
        "steroids": df["steroids"].astype(float),
        "propylac": df["propylac"].astype(float),
    }
    for level in hos_levels[1:]:
        name = "hos_cat_" + level.replace(":", "_")
        cols[name] = (df["hos.cat"] == level).astype(float)

    names = list(cols)
    with open(out_path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(len(df)):
            row = []
            for name in names:
                v = cols[name].iloc[i] if hasattr(cols[name], "iloc") else cols[name][i]
                if name in ("id", "status"):
                    row.append(str(int(v)))
                else:
                    row.append(repr(float(v)))
            fh.write(",".join(row) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "cgd.csv")
