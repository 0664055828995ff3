"""Benchmark harness: run solver sweeps over matrix files and emit tables.

An ExperimentSpec names a precision setting, a list of Matrix Market files,
and the bucketing budgets to sweep. Each matrix produces one result row per
budget (bucketed preconditioner) plus one uniform baseline row. Rows render
to markdown, csv, or json with occupancy and iteration tuples written as
"total(a, b, c)". Per-matrix failures are captured in their row so one bad
input cannot sink a sweep; everything is deterministic, so re-running a
spec reproduces its output byte for byte.

Three settings are built in, named by their (build, working, residual)
precision triples: ddq and sdq refine in double with quad-surrogate
residuals (bucket ladder double/single/half/drop), ssd refines in single
with double residuals (ladder single/half/drop). The GMRES tolerance
derives from the working precision: 1e-8 in double, 1e-4 in single.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .bucketed import BucketScheme
from .precision import round_vec
from .refine import IrConfig, bspai_gmres_ir, reference_solution, spai_gmres_ir
from .sparsemat import read_matrix_market
from .spai import SpaiConfig, spai_right_preconditioner

__all__ = [
    "SETTINGS",
    "ExperimentSpec",
    "ResultRow",
    "run_experiment",
    "emit_table",
    "rows_from_json",
    "parse_spec_file",
    "parse_number",
    "format_pow2",
    "default_eps_table",
]

SETTINGS = {
    "ddq": {
        "fmt_f": "double", "fmt_w": "double", "fmt_r": "quad",
        "ladder": ("double", "single", "half", "drop"),
        "eps_b": (2.0 ** -53, 2.0 ** -37),
        "tau": 1e-8,
    },
    "ssd": {
        "fmt_f": "single", "fmt_w": "single", "fmt_r": "double",
        "ladder": ("single", "half", "drop"),
        "eps_b": (2.0 ** -24, 2.0 ** -18),
        "tau": 1e-4,
    },
    "sdq": {
        "fmt_f": "single", "fmt_w": "double", "fmt_r": "quad",
        "ladder": ("double", "single", "half", "drop"),
        "eps_b": (2.0 ** -53, 2.0 ** -37),
        "tau": 1e-8,
    },
}


def parse_number(text) -> float:
    """Float parser that also accepts powers of two written like 2^-53."""
    if isinstance(text, (int, float)):
        return float(text)
    text = text.strip()
    if text.startswith("2^"):
        return float(2.0 ** int(text[2:]))
    return float(text)


def format_pow2(x: float) -> str:
    if x > 0:
        e = round(math.log2(x))
        if 2.0 ** e == x:
            return f"2^{e}"
    return repr(x)


def _normalize_name(name: str) -> str:
    return name.replace("_", "").lower()


def default_eps_table(setting: str) -> dict:
    """Bundled per-matrix SPAI tolerances for a setting."""
    cp = configparser.ConfigParser()
    with resources.files("bspai").joinpath("data/defaults.ini").open() as f:
        cp.read_file(f)
    section = f"spai_eps.{setting}"
    if section not in cp:
        section = "spai_eps.ddq"  # sdq refines in double, reuse its tolerances
    return {k: float(v) for k, v in cp[section].items()}


@dataclass
class ExperimentSpec:
    matrices: list
    setting: str = "ddq"
    eps_b: list | None = None
    ladder: list | None = None
    norm_choice: str = "max-abs"
    tau: float | None = None
    eps_spai: dict = field(default_factory=dict)
    eps_default: float = 0.5
    alpha: int = 5
    beta: int = 8
    i_max: int = 10
    initial_pattern: str = "identity"
    out_format: str = "md"

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}")
        base = SETTINGS[self.setting]
        if self.eps_b is None:
            self.eps_b = list(base["eps_b"])
        if self.ladder is None:
            self.ladder = list(base["ladder"])
        if self.tau is None:
            self.tau = base["tau"]

    def resolve_eps(self, matrix_name: str) -> float:
        table = dict(default_eps_table(self.setting))
        table.update({k: float(v) for k, v in self.eps_spai.items()})
        wanted = _normalize_name(matrix_name)
        for k, v in table.items():
            if _normalize_name(k) == wanted:
                return v
        return self.eps_default


@dataclass
class ResultRow:
    matrix: str
    label: str
    eps_spai: float
    kappa: float | None = None
    nnz: int | None = None
    occupancies: list | None = None
    storage_pct: float | None = None
    iterations_total: int | None = None
    iterations_per_step: list | None = None
    converged: bool | None = None
    error: str | None = None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _tuple_cell(total, parts):
    if parts is None:
        return str(total)
    return f"{total}({', '.join(str(p) for p in parts)})"


def _row_cells(row: ResultRow):
    if row.error is not None:
        return [row.matrix, row.label, "", "", "", "", f"failed: {row.error}"]
    note = "" if row.converged else "not converged"
    return [
        row.matrix,
        row.label,
        f"{row.kappa:.1e}",
        _tuple_cell(row.nnz, row.occupancies),
        f"{row.storage_pct:.1f}%",
        _tuple_cell(row.iterations_total, row.iterations_per_step),
        note,
    ]


_HEADER = ["matrix", "preconditioner", "kappa(MA)", "nnz", "storage",
           "gmres its/step", "note"]


def emit_table(rows, out_format: str = "md") -> str:
    """Render rows as markdown, csv, or json text."""
    if out_format == "json":
        return json.dumps({"rows": [r.to_dict() for r in rows]}, indent=1)
    cells = [_row_cells(r) for r in rows]
    if out_format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(_HEADER)
        w.writerows(cells)
        return buf.getvalue()
    if out_format == "md":
        widths = [
            max(len(_HEADER[c]), *(len(row[c]) for row in cells)) if cells
            else len(_HEADER[c])
            for c in range(len(_HEADER))
        ]
        def line(vals):
            return "| " + " | ".join(v.ljust(w) for v, w in zip(vals, widths)) + " |"
        out = [line(_HEADER), line(["-" * w for w in widths])]
        out.extend(line(c) for c in cells)
        return "\n".join(out) + "\n"
    raise ValueError(f"unknown output format {out_format!r}")


def rows_from_json(text: str):
    return [ResultRow.from_dict(d) for d in json.loads(text)["rows"]]


def run_experiment(spec: ExperimentSpec):
    """Run the sweep and return one ResultRow per (matrix, preconditioner)."""
    base = SETTINGS[spec.setting]
    rows = []
    for path in spec.matrices:
        name = Path(path).stem
        eps = spec.resolve_eps(name)
        try:
            a = read_matrix_market(path)
            spai_cfg = SpaiConfig(
                eps=eps, alpha=spec.alpha, beta=spec.beta,
                initial_pattern=spec.initial_pattern, build_fmt=base["fmt_f"],
            )
            m = spai_right_preconditioner(a, spai_cfg)
            b = np.full(a.n_rows, 1.0 / math.sqrt(a.n_rows))
            b_u = round_vec(b, base["fmt_w"])
            x_ref = reference_solution(a, b_u)
        except Exception as exc:  # noqa: BLE001 - reported in the row
            rows.append(ResultRow(matrix=name, label="-", eps_spai=eps,
                                  error=str(exc)))
            continue
        for eps_b in spec.eps_b:
            label = f"BSPAI(eps_b={format_pow2(eps_b)})"
            try:
                cfg = IrConfig(
                    spai=spai_cfg,
                    bucket=BucketScheme(tuple(spec.ladder), eps_b,
                                        spec.norm_choice),
                    fmt_f=base["fmt_f"], fmt_w=base["fmt_w"],
                    fmt_r=base["fmt_r"], tol=spec.tau, i_max=spec.i_max,
                )
                rep = bspai_gmres_ir(a, b, cfg, x_ref=x_ref, precomputed_m=m)
                rows.append(_report_row(name, label, eps, rep))
            except Exception as exc:  # noqa: BLE001
                rows.append(ResultRow(matrix=name, label=label, eps_spai=eps,
                                      error=str(exc)))
        label = f"SPAI(eps={eps})"
        try:
            cfg = IrConfig(
                spai=spai_cfg, bucket=None,
                fmt_f=base["fmt_f"], fmt_w=base["fmt_w"], fmt_r=base["fmt_r"],
                tol=spec.tau, i_max=spec.i_max,
            )
            rep = spai_gmres_ir(a, b, cfg, x_ref=x_ref, precomputed_m=m)
            row = _report_row(name, label, eps, rep)
            # baseline rows show the full-ladder tuple with one live bucket
            row.occupancies = [rep.precond_nnz] + [0] * (len(spec.ladder) - 1)
            rows.append(row)
        except Exception as exc:  # noqa: BLE001
            rows.append(ResultRow(matrix=name, label=label, eps_spai=eps,
                                  error=str(exc)))
    return rows


def parse_spec_file(path) -> ExperimentSpec:
    """Read an experiment spec from a plain key-value sections file.

    Layout::

        [experiment]
        setting = ddq
        matrices = data/matrices/steam1.mtx, data/matrices/cage5.mtx
        format = md
        # optional: eps_b = 2^-53, 2^-37 / ladder = double, single, half, drop
        # optional: tau, norm, i_max

        [spai]
        # optional: alpha, beta, eps_default, initial_pattern

        [spai_eps]
        # optional per-matrix overrides: steam1 = 0.1
    """
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise FileNotFoundError(f"spec file not found: {path}")
    if "experiment" not in cp:
        raise ValueError("spec file needs an [experiment] section")
    exp = cp["experiment"]
    if "matrices" not in exp:
        raise ValueError("[experiment] must list matrices")
    matrices = [t.strip() for t in exp["matrices"].replace("\n", ",").split(",")
                if t.strip()]
    kwargs = {
        "matrices": matrices,
        "setting": exp.get("setting", "ddq"),
        "out_format": exp.get("format", "md"),
        "norm_choice": exp.get("norm", "max-abs"),
    }
    if "eps_b" in exp:
        kwargs["eps_b"] = [parse_number(t) for t in exp["eps_b"].split(",")]
    if "ladder" in exp:
        kwargs["ladder"] = [t.strip() for t in exp["ladder"].split(",")]
    if "tau" in exp:
        kwargs["tau"] = parse_number(exp["tau"])
    if "i_max" in exp:
        kwargs["i_max"] = int(exp["i_max"])
    if "spai" in cp:
        sp = cp["spai"]
        if "alpha" in sp:
            kwargs["alpha"] = int(sp["alpha"])
        if "beta" in sp:
            kwargs["beta"] = int(sp["beta"])
        if "eps_default" in sp:
            kwargs["eps_default"] = float(sp["eps_default"])
        if "initial_pattern" in sp:
            kwargs["initial_pattern"] = sp["initial_pattern"]
    if "spai_eps" in cp:
        kwargs["eps_spai"] = {k: float(v) for k, v in cp["spai_eps"].items()}
    return ExperimentSpec(**kwargs)


def _report_row(name, label, eps, rep):
    return ResultRow(
        matrix=name,
        label=label,
        eps_spai=eps,
        kappa=rep.kappa_ma,
        nnz=rep.precond_nnz,
        occupancies=rep.occupancies,
        storage_pct=rep.storage * 100.0,
        iterations_total=rep.total_iterations,
        iterations_per_step=rep.iterations_per_step(),
        converged=rep.converged,
    )
