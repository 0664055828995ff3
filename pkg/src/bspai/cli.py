"""Command line front end.

Three subcommands:

``run``     execute an experiment spec and emit a result table
``info``    print size, nnz and condition estimates for a matrix file
``verify``  quick self-checks of the storage/apply error bounds
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import harness
from .bucketed import (BucketScheme, apply_error_bound, bspmv, build_buckets,
                       c_constant, normwise_backward_error, storage_ratio)
from .precision import round_vec
from .sparsemat import (cond2_transpose, kappa_inf, norm_inf, norm_max,
                        read_matrix_market)


def _cmd_run(args) -> int:
    spec = harness.parse_spec_file(args.spec)
    if args.format:
        spec.out_format = args.format
    rows = harness.run_experiment(spec)
    text = harness.emit_table(rows, spec.out_format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        print(text)
    failed = [r for r in rows if r.error]
    return 1 if failed else 0


def _cmd_info(args) -> int:
    a = read_matrix_market(args.matrix)
    print(f"file:        {args.matrix}")
    print(f"size:        {a.n_rows} x {a.n_cols}")
    print(f"nnz:         {a.nnz}")
    print(f"norm_inf:    {norm_inf(a):.6e}")
    print(f"norm_max:    {norm_max(a):.6e}")
    if a.n_rows == a.n_cols:
        try:
            print(f"kappa_inf:   {kappa_inf(a):.6e}")
        except Exception as exc:
            print(f"kappa_inf:   unavailable ({exc})")
        try:
            print(f"cond2(A^T):  {cond2_transpose(a):.6e}")
        except Exception as exc:
            print(f"cond2(A^T):  unavailable ({exc})")
    return 0


def _verify_matrix(a, name: str, failures: list) -> None:
    rng = np.random.default_rng(7)
    n = a.n_cols
    schemes = [
        BucketScheme(("double", "single", "half", "drop"), 2.0 ** -16),
        BucketScheme(("double", "single", "drop"), 2.0 ** -12),
        BucketScheme(("single", "half", "drop"), 2.0 ** -8),
    ]
    for scheme in schemes:
        ba = build_buckets(a, scheme)
        bound = apply_error_bound(ba)
        worst = 0.0
        for _ in range(25):
            x = round_vec(rng.standard_normal(n), scheme.precisions[0])
            y = bspmv(ba, x)
            try:
                err = normwise_backward_error(a, x, y)
            except ValueError:
                continue
            worst = max(worst, err)
        tag = f"{name} q={scheme.q} eps={scheme.eps_target:.1e}"
        if worst <= bound:
            print(f"[PASS] {tag}: max backward error {worst:.3e} "
                  f"<= bound {bound:.3e}")
        else:
            print(f"[FAIL] {tag}: max backward error {worst:.3e} "
                  f"> bound {bound:.3e}")
            failures.append(tag)


def _cmd_verify(args) -> int:
    if not args.bounds:
        print("nothing to verify (use --bounds)", file=sys.stderr)
        return 2
    failures: list = []
    ran = 0

    mdir = args.matrix_dir
    if mdir and os.path.isdir(mdir):
        for fn in sorted(os.listdir(mdir)):
            if not fn.endswith(".mtx"):
                continue
            path = os.path.join(mdir, fn)
            try:
                a = read_matrix_market(path)
            except Exception as exc:
                print(f"[FAIL] {fn}: unreadable ({exc})")
                failures.append(fn)
                continue
            if a.n_rows != a.n_cols or a.n_rows > 2000:
                continue
            _verify_matrix(a, fn, failures)
            ran += 1

    if ran == 0:
        # no usable corpus: fall back to a seeded synthetic matrix
        from .sparsemat import SparseMatrix

        rng = np.random.default_rng(11)
        n = 60
        rows, cols, vals = [], [], []
        for i in range(n):
            rows.append(i)
            cols.append(i)
            vals.append(4.0 + rng.random())
            for _ in range(3):
                j = int(rng.integers(0, n))
                if j != i:
                    rows.append(i)
                    cols.append(j)
                    vals.append(float(rng.normal(scale=10.0 **
                                                 -rng.integers(0, 6))))
        try:
            a = SparseMatrix.from_coo(n, n, rows, cols, vals)
        except ValueError:
            # duplicate coordinates from the random draw: thin them out
            seen = {}
            for i, j, v in zip(rows, cols, vals):
                seen[(i, j)] = v
            ij = sorted(seen)
            a = SparseMatrix.from_coo(n, n, [t[0] for t in ij],
                                      [t[1] for t in ij],
                                      [seen[t] for t in ij])
        _verify_matrix(a, "synthetic(n=60)", failures)

    print()
    if failures:
        print(f"{len(failures)} check(s) failed")
        return 1
    print("all checks passed")
    return 0


def _cmd_c_const(args) -> int:
    a = read_matrix_market(args.matrix)
    scheme = BucketScheme(tuple(args.ladder.split(",")),
                          harness.parse_number(args.eps))
    ba = build_buckets(a, scheme)
    print(f"occupancy totals: {ba.occupancy_totals()}")
    print(f"c (squared):      {c_constant(ba):.6e}")
    print(f"c (linear):       {c_constant(ba, squared=False):.6e}")
    print(f"storage fraction: {100.0 * storage_ratio(ba):.2f}%")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="bspai",
        description="adaptive-precision sparse approximate inverse toolkit")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="run an experiment spec file")
    p_run.add_argument("--spec", required=True, help="spec file path")
    p_run.add_argument("--out", help="write the table here instead of stdout")
    p_run.add_argument("--format", choices=("md", "csv", "json"),
                       help="override the output format from the spec")
    p_run.set_defaults(func=_cmd_run)

    p_info = sub.add_parser("info", help="describe a Matrix Market file")
    p_info.add_argument("matrix", help="path to a .mtx file")
    p_info.set_defaults(func=_cmd_info)

    p_ver = sub.add_parser("verify", help="self-check the error bounds")
    p_ver.add_argument("--bounds", action="store_true",
                       help="check the matvec backward error bound")
    p_ver.add_argument("--matrix-dir",
                       default=os.environ.get("BSPAI_MATRIX_DIR",
                                              "data/matrices"),
                       help="directory of .mtx files (synthetic fallback)")
    p_ver.set_defaults(func=_cmd_verify)

    p_cc = sub.add_parser("constants", help="print growth constants")
    p_cc.add_argument("matrix", help="path to a .mtx file")
    p_cc.add_argument("--ladder", default="double,single,half,drop")
    p_cc.add_argument("--eps", default="2^-16")
    p_cc.set_defaults(func=_cmd_c_const)

    args = ap.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
