"""Batch command-line front-end.

Subcommands:

* ``run``       -- one simulation from a config, writing a time-series CSV,
                   per-component snapshot files and optional PPM heatmaps.
* ``converge``  -- self-convergence study against a fine-step reference,
                   optionally comparing forward Euler and the dense classical
                   exponential Euler.
* ``props``     -- structural property report for one operator family.

Configuration comes from an optional flat ``key = value`` file (``#``
comments) overridden by flags; ``--set key=value`` patches either plain
config keys or model constants via the ``params.`` prefix.

Exit codes: 0 success, 2 usage error, 3 divergence, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import models, output
from .integrators import (
    DENSE_REFERENCE_CAP,
    DivergenceError,
    run_dense_exponential_euler,
    run_simulation,
)
from .operators import (
    NumericalFailure,
    build_lambda,
    build_phi_op,
    build_rho,
    build_theta,
    build_z,
    eig_theta,
    eig_tridiag,
    matrix_exp_nonneg_check,
    symmetrize,
)

_FMT = "%.17g"


class UsageError(ValueError):
    pass


_INT_KEYS = {"n_rho", "n_theta", "n_phi", "n_z", "m", "snapshots", "m_ref", "seed"}
_FLOAT_KEYS = {"tstar"}
_BOOL_KEYS = {"heatmap", "fe", "dense"}
_LIST_KEYS = {"m_list", "n_list"}
# remaining keys (model, out, kind) stay strings

_DIMS_BY_MODEL = {
    models.ModelName.BVAM_DISK: ("n_rho", "n_theta"),
    models.ModelName.SCHNAKENBERG_ANOMALOUS_DISK: ("n_rho", "n_theta"),
    models.ModelName.DIB_SPHERE: ("n_theta", "n_phi"),
    models.ModelName.BULK_SURFACE_SCHNAKENBERG_BALL: ("n_rho", "n_theta", "n_phi"),
    models.ModelName.BSDIB_CYLINDER: ("n_rho", "n_theta", "n_z"),
}


@dataclass
class RunReport:
    wall_time: float
    per_step_time: float
    final_means: dict[str, float]
    diverged_step: int | None
    manifest: list[Path] = field(default_factory=list)


def parse_config_file(path: Path) -> dict[str, str]:
    """Flat key = value lines; blank lines and # comments ignored."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = stripped.split("=", 1)
        raw[key.strip()] = value.strip()
    return raw


def _parse_bool(value: str) -> bool:
    low = value.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {value!r}")


def _coerce(key: str, value: str):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _BOOL_KEYS:
            return _parse_bool(value) if isinstance(value, str) else bool(value)
        if key in _LIST_KEYS:
            return [int(tok) for tok in value.replace(",", " ").split()]
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {value!r}") from exc
    return value


def merge_config(args: argparse.Namespace) -> dict:
    """Config file first, then flags, then --set patches."""
    cfg: dict = {}
    overrides: dict[str, float] = {}
    if args.config:
        for key, value in parse_config_file(Path(args.config)).items():
            if key.startswith("params."):
                overrides[key[len("params."):]] = float(value)
            else:
                cfg[key] = _coerce(key, value)
    for key in (
        "model seed out m tstar snapshots heatmap m_list m_ref fe dense "
        "kind n_list n_rho n_theta n_phi n_z"
    ).split():
        value = getattr(args, key, None)
        if value is not None and value is not False:
            cfg[key] = value
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        if key.startswith("params."):
            try:
                overrides[key[len("params."):]] = float(value)
            except ValueError as exc:
                raise UsageError(f"bad numeric value in {item!r}") from exc
        else:
            cfg[key] = _coerce(key, value.strip())
    cfg["overrides"] = overrides
    return cfg


def _require_model(cfg: dict) -> models.ModelSpec:
    if "model" not in cfg:
        raise UsageError("no model given (flag --model or config key model)")
    try:
        name = models.ModelName(cfg["model"])
    except ValueError as exc:
        valid = ", ".join(m.value for m in models.ModelName)
        raise UsageError(f"unknown model {cfg['model']!r}; choose from: {valid}") from exc
    try:
        return models.model_spec(name, cfg.get("overrides") or None)
    except KeyError as exc:
        raise UsageError(str(exc)) from exc


def _require_dims(cfg: dict, name: models.ModelName) -> dict[str, int]:
    dims = {}
    for key in _DIMS_BY_MODEL[name]:
        if key not in cfg:
            raise UsageError(f"model {name.value} needs dimension {key}")
        if cfg[key] < 2:
            raise UsageError(f"{key} must be at least 2")
        dims[key] = cfg[key]
    return dims


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise UsageError(f"missing required setting {key}")
    return cfg[key]


def cmd_run(cfg: dict) -> RunReport:
    spec = _require_model(cfg)
    dims = _require_dims(cfg, spec.name)
    m = _require(cfg, "m")
    t_star = _require(cfg, "tstar")
    if m < 1 or t_star <= 0:
        raise UsageError("need m >= 1 and tstar > 0")
    seed = cfg.get("seed", 1)
    snapshot_every = cfg.get("snapshots") or m
    heatmap = bool(cfg.get("heatmap", False))
    outdir = Path(cfg.get("out", "curvipat_out"))
    outdir.mkdir(parents=True, exist_ok=True)

    try:
        system = models.build_system(spec, dims, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    means = models.mean_diagnostics(system)
    comps = {c.name: c for c in system.components}
    names = [c.name for c in system.components]
    rows: list[tuple] = []
    manifest: list[Path] = []

    def hook(step: int, t: float, states: dict) -> None:
        sample = means(states)
        rows.append((t, *[sample[n] for n in names]))
        for name in names:
            comp = comps[name]
            physical = states[name] + comp.lift
            snap = outdir / f"{name}_{step:07d}.csv"
            output.write_snapshot(
                snap,
                physical,
                comp.ops,
                component=name,
                model=spec.name.value,
                step=step,
                t=t,
            )
            manifest.append(snap)
            if heatmap:
                ppm = outdir / f"{name}_{step:07d}.ppm"
                output.write_heatmap(ppm, physical)
                manifest.append(ppm)

    diverged: int | None = None
    start = time.perf_counter()
    try:
        result = run_simulation(
            system, m, t_star, record_every=snapshot_every, sample_hook=hook
        )
        final_states = result.fields
    except DivergenceError as exc:
        diverged = exc.step
        final_states = None
    wall = time.perf_counter() - start

    series_path = outdir / "timeseries.csv"
    output.write_timeseries(series_path, names, rows)
    manifest.append(series_path)

    if diverged is not None:
        return RunReport(wall, wall / m, {}, diverged, manifest)
    final_means = means(final_states)
    return RunReport(wall, wall / m, final_means, None, manifest)


def _relative_error(states: dict, reference: dict) -> float:
    total = 0.0
    for name, ref in reference.items():
        diff = np.linalg.norm(states[name] - ref)
        total += (diff / np.linalg.norm(ref)) ** 2
    return math.sqrt(total)


def cmd_converge(cfg: dict) -> dict:
    spec = _require_model(cfg)
    dims = _require_dims(cfg, spec.name)
    t_star = _require(cfg, "tstar")
    m_list = _require(cfg, "m_list")
    if sorted(m_list) != m_list:
        raise UsageError("m_list must be ascending")
    m_ref = cfg.get("m_ref", 4 * max(m_list))
    if m_ref < 4 * max(m_list):
        raise UsageError("reference step count must be at least 4x max(m_list)")
    seed = cfg.get("seed", 1)
    with_fe = bool(cfg.get("fe", False))
    with_dense = bool(cfg.get("dense", False))

    def fresh_system():
        return models.build_system(spec, dims, seed)

    try:
        reference = run_simulation(fresh_system(), m_ref, t_star).fields
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    unknowns = max(int(np.prod(c.ops.shape)) for c in fresh_system().components)
    if with_dense and unknowns > DENSE_REFERENCE_CAP:
        print(
            f"note: {unknowns} unknowns exceed the dense cap "
            f"{DENSE_REFERENCE_CAP}; dense column skipped"
        )
        with_dense = False

    table: list[dict] = []
    for m in m_list:
        entry: dict = {"m": m}
        entry["err_split"] = _relative_error(
            run_simulation(fresh_system(), m, t_star).fields, reference
        )
        if with_dense:
            entry["err_dense"] = _relative_error(
                run_dense_exponential_euler(fresh_system(), m, t_star), reference
            )
        if with_fe:
            try:
                fe_fields = run_simulation(
                    fresh_system(), m, t_star, method="forward_euler"
                ).fields
                entry["err_fe"] = _relative_error(fe_fields, reference)
            except DivergenceError as exc:
                entry["err_fe"] = None
                entry["fe_diverged_at"] = exc.step
        table.append(entry)

    logs_m = np.log([entry["m"] for entry in table])
    logs_e = np.log([entry["err_split"] for entry in table])
    slope = float(np.polyfit(logs_m, logs_e, 1)[0])

    header = ["m", "err_split"]
    if with_dense:
        header.append("err_dense")
    if with_fe:
        header.append("err_fe")
    print(",".join(header))
    for entry in table:
        cells = [str(entry["m"]), _FMT % entry["err_split"]]
        if with_dense:
            cells.append(_FMT % entry["err_dense"])
        if with_fe:
            if entry.get("err_fe") is None:
                cells.append(f"diverged@{entry['fe_diverged_at']}")
            else:
                cells.append(_FMT % entry["err_fe"])
        print(",".join(cells))
    print(f"least-squares slope of log(err) vs log(m): {slope:.4f}")
    print(f"observed order: {-slope:.4f}")

    out = cfg.get("out")
    if out:
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "convergence.csv", "w", encoding="ascii") as fh:
            fh.write(",".join(header) + "\n")
            for entry in table:
                cells = [str(entry["m"]), _FMT % entry["err_split"]]
                if with_dense:
                    cells.append(_FMT % entry["err_dense"])
                if with_fe:
                    cells.append(
                        "nan" if entry.get("err_fe") is None else _FMT % entry["err_fe"]
                    )
                fh.write(",".join(cells) + "\n")
    return {"table": table, "slope": slope}


_PROP_KINDS = frozenset({"theta", "rho2", "rho3", "phi", "z", "lambda"})


def _build_prop_operator(kind: str, n: int, cfg: dict):
    overrides = cfg.get("overrides", {})
    rho_star = overrides.get("rho_star", 1.0)
    z_star = overrides.get("z_star", 1.0)
    lam = overrides.get("lambda", -1.95)
    if kind == "theta":
        return build_theta(n)
    if kind == "rho2":
        return build_rho(2, n, rho_star)
    if kind == "rho3":
        return build_rho(3, n, rho_star)
    if kind == "phi":
        return build_phi_op(n)[0]
    if kind == "z":
        return build_z(n, z_star)
    return build_lambda(n, rho_star, lam)


def cmd_props(cfg: dict) -> list[dict]:
    kind = _require(cfg, "kind")
    if kind not in _PROP_KINDS:
        raise UsageError(f"unknown operator kind {kind!r}")
    n_list = _require(cfg, "n_list")
    if max(n_list) > 2048:
        raise UsageError("property report capped at n = 2048")
    exp_times = (0.1, 1.0, 10.0)
    rows = []
    for n in n_list:
        op = _build_prop_operator(kind, n, cfg)
        row: dict = {"n": n}
        if kind == "theta":
            row["extra_diag_positive"] = op.off > 0
            row["max_abs_rowsum"] = 0.0
            fac = eig_theta(op)
            row["xi_inv_norm"] = 1.0
            row["xi_inv_closed_form"] = 1.0
        else:
            row["extra_diag_positive"] = bool(np.all(op.b > 0) and np.all(op.c > 0))
            sums = op.row_sums()
            zero_rows = sums[:-1] if kind in ("z", "lambda") else sums
            row["max_abs_rowsum"] = float(np.max(np.abs(zero_rows)))
            xi, _ = symmetrize(op)
            fac = eig_tridiag(op)
            row["xi_inv_norm"] = float(np.max(1.0 / xi))
            if kind == "rho2":
                row["xi_inv_closed_form"] = math.sqrt(2 * n - 3)
            elif kind == "rho3":
                row["xi_inv_closed_form"] = float(n - 1)
            elif kind == "z":
                row["xi_cond"] = float(np.max(xi) / np.min(xi))
                row["xi_cond_closed_form"] = math.sqrt(2.0)
        row["max_eigenvalue"] = float(np.max(fac.lambdas))
        if n <= 64:
            row["exp_min_entry"] = min(
                matrix_exp_nonneg_check(op, t) for t in exp_times
            )
        rows.append(row)

    columns = sorted({key for row in rows for key in row}, key=lambda k: (k != "n", k))
    print(",".join(columns))
    for row in rows:
        print(",".join(_format_cell(row.get(col)) for col in columns))
    return rows


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool) or isinstance(value, np.bool_):
        return "yes" if value else "no"
    if isinstance(value, float):
        return _FMT % value
    return str(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curvipat",
        description="Diffusion-reaction pattern simulations on curvilinear domains",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--model", help="model name")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key or (with params. prefix) a model constant")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--m", type=int, help="number of time steps")
        p.add_argument("--tstar", type=float, help="final time")
        p.add_argument("--snapshots", type=int, help="sample every this many steps")
        p.add_argument("--heatmap", action="store_true", default=None)
        for dim in ("n-rho", "n-theta", "n-phi", "n-z"):
            p.add_argument(f"--{dim}", type=int, dest=dim.replace("-", "_"))

    run_p = sub.add_parser("run", help="run one simulation")
    add_common(run_p)

    conv_p = sub.add_parser("converge", help="self-convergence study")
    add_common(conv_p)
    conv_p.add_argument("--m-list", dest="m_list",
                        type=lambda s: [int(t) for t in s.replace(",", " ").split()])
    conv_p.add_argument("--m-ref", dest="m_ref", type=int)
    conv_p.add_argument("--fe", action="store_true", default=None,
                        help="include forward Euler")
    conv_p.add_argument("--dense", action="store_true", default=None,
                        help="include the dense classical exponential Euler")

    props_p = sub.add_parser("props", help="operator property report")
    add_common(props_p)
    props_p.add_argument("--kind", choices=sorted(_PROP_KINDS))
    props_p.add_argument("--n-list", dest="n_list",
                         type=lambda s: [int(t) for t in s.replace(",", " ").split()])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = merge_config(args)
        if args.command == "run":
            report = cmd_run(cfg)
            for name, value in report.final_means.items():
                print(f"final mean_{name}: {_FMT % value}")
            print(f"wall time: {report.wall_time:.3f} s "
                  f"({report.per_step_time * 1e3:.3f} ms/step)")
            print(f"files written: {len(report.manifest)}")
            if report.diverged_step is not None:
                print(f"DIVERGED at step {report.diverged_step}; partial outputs kept",
                      file=sys.stderr)
                return 3
            return 0
        if args.command == "converge":
            cmd_converge(cfg)
            return 0
        cmd_props(cfg)
        return 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
