#!/usr/bin/env python3
"""
Small helper script to write a synthetic CSV file (columns ``y,x`` and, for the partially
linear model, ``w``) drawn from one of the designs of the coverage study. The file can be
fed straight into the ``fit``, ``ci`` and ``plm`` commands of ``series-inference``.
"""

from argparse import ArgumentDefaultsHelpFormatter, ArgumentParser

import numpy as np
import pandas as pd

from series_inference.sim_harness import dgp_sample
from series_inference.worker_helper import index_rng

MODEL = 1
OBSERVATIONS = 200
THETA = 1.0
OUTPUT = "data.csv"


def main() -> int:
    parser = ArgumentParser(
        formatter_class=ArgumentDefaultsHelpFormatter, description=__doc__
    )
    parser.add_argument(
        "-m", "--model", type=int, choices=[1, 2, 3], default=MODEL, help="Design"
    )
    parser.add_argument(
        "-n", "--observations", type=int, default=OBSERVATIONS, help="Sample size"
    )
    parser.add_argument("-s", "--seed", type=int, default=0)
    parser.add_argument(
        "--homoskedastic", action="store_true", help="Use standard normal errors"
    )
    parser.add_argument(
        "--theta",
        type=float,
        default=None,
        help=f"""Adds a column w = x + N(0, 1) entering y with this coefficient, e.g.
        {THETA}""",
    )
    parser.add_argument("-o", "--output", default=OUTPUT, help="Target file")
    args = parser.parse_args()

    data, _ = dgp_sample(
        args.model, args.observations, not args.homoskedastic, index_rng(args.seed, 0)
    )
    frame = pd.DataFrame({"y": data.y, "x": data.x})
    if args.theta is not None:
        w = data.x + index_rng(args.seed, 1).standard_normal(data.n)
        frame["y"] = data.y + args.theta * w
        frame["w"] = w
    frame.to_csv(args.output, index=False, float_format="%.10g")
    print(f"Wrote {len(frame)} observations to {args.output}")
    return 0


if __name__ == "__main__":
    exit(main())
