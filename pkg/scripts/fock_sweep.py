"""Multiplicity of the eigenvalue 1 of the weighted d-bar Laplacian on C^n versus truncation degree.

The eigenspace at 1 contains zbar_j times every holomorphic polynomial, so its
multiplicity keeps growing with the basis: the numerical trace of an infinite
dimensional eigenspace.  Writes a CSV table and a step plot.

Usage::

    python scripts/fock_sweep.py --n 2 --max-degree 7 --out out/fock_sweep
"""
import argparse
import csv
from math import comb
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from wlaplab.eigensolve import first_nonzero, spectrum  # noqa: E402
from wlaplab.operators import MonomialFock, assemble  # noqa: E402
from wlaplab.spaces import make_space  # noqa: E402


def expected_multiplicity(n: int, d: int) -> int:
    """Monomials z^a zbar^b with |b| = 1 and |a| + 1 <= d."""
    return n * comb(d - 1 + n, n)


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--n", type=int, default=2, help="complex dimension")
    parser.add_argument("--max-degree", type=int, default=6)
    parser.add_argument("--out", default="out/fock_sweep")
    args = parser.parse_args(argv)

    space = make_space(f"complex-gaussian:n={args.n}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for d in range(1, args.max_degree + 1):
        op = assemble(space, MonomialFock(d, args.n))
        lam, mult = first_nonzero(spectrum(op, op.cardinality))
        rows.append((d, op.cardinality, lam, mult, expected_multiplicity(args.n, d)))
        print(f"degree {d}: basis {op.cardinality:4d}  lambda_1 = {lam:.12f}  "
              f"multiplicity {mult} (predicted {rows[-1][-1]})")

    with open(out / "fock_sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["degree", "cardinality", "lambda1", "multiplicity", "predicted"])
        w.writerows(rows)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.step([r[0] for r in rows], [r[3] for r in rows], where="mid", marker="o", label="computed")
    ax.plot([r[0] for r in rows], [r[4] for r in rows], "k--", lw=0.8, label="n C(d-1+n, n)")
    ax.set_xlabel("truncation degree d")
    ax.set_ylabel("multiplicity of lambda = 1")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "fock_sweep.png", dpi=120)
    print(f"wrote {out / 'fock_sweep.csv'} and {out / 'fock_sweep.png'}")


if __name__ == "__main__":
    main()
