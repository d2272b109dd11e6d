"""Config-driven experiment runner.

Usage::

    wlaplab verify --config configs/gaussian2.toml --out out/
    wlaplab spectrum --config configs/fano_round.toml --eigs 12
    wlaplab toric --polytope configs/triangle.json
    wlaplab list-spaces
    wlaplab plot --report out/report.json --out out/

Checks run in the fixed order spectrum, bounds, selfadjoint, identities,
holomorphy, toric.  Exit status is 0 when every check passes (SKIPPED does
not fail a run), 1 when one fails and 2 for an invalid configuration.  The
JSON report is written in every case.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import sympy as sp

from . import __version__
from .errors import ConfigInvalid, NoSpectrumData, WlapError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = "1.0"
CHECK_ORDER = ("spectrum", "bounds", "selfadjoint", "identities", "holomorphy", "toric")


@dataclass(frozen=True)
class Tolerances:
    solver: float = 1e-8
    cluster: float = 1e-6
    zero: float = 1e-8  # relative to the spectral radius
    identity: float = 1e-8
    bound_slack: float = 1e-6
    holomorphy: float = 1e-6


@dataclass(frozen=True)
class ExperimentConfig:
    space: str
    basis: str | None = None
    eigs: int = 12
    checks: tuple[str, ...] = ("all",)
    tolerances: Tolerances = field(default_factory=Tolerances)
    out: str = "out"
    csv: bool = True
    seed: int = 0
    polytope: str | None = None
    declared_bound: float | None = None
    sweep: tuple[str, ...] = ()
    allow_product_soliton: bool = False
    export_matrices: bool = False

    def validate(self) -> "ExperimentConfig":
        t = self.tolerances
        if any(not (isinstance(v, (int, float)) and v > 0) for v in asdict(t).values()):
            raise ConfigInvalid("all tolerances must be positive")
        if self.eigs < 1:
            raise ConfigInvalid("eigs must be >= 1")
        if self.seed < 0:
            raise ConfigInvalid("seed must be a non-negative integer")
        unknown = set(self.checks) - set(CHECK_ORDER) - {"all"}
        if unknown:
            raise ConfigInvalid(f"unknown checks {sorted(unknown)}")
        if self.space == "toric" and not self.polytope:
            raise ConfigInvalid("toric runs need a polytope file")
        return self

    def requested(self) -> tuple[str, ...]:
        if "all" in self.checks:
            return CHECK_ORDER
        return tuple(c for c in CHECK_ORDER if c in self.checks)


def _space_descriptor(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, dict) and "kind" in value:
        params = ",".join(f"{k}={';'.join(map(str, v)) if isinstance(v, list) else v}"
                          for k, v in value.items() if k != "kind")
        return f"{value['kind']}:{params}" if params else value["kind"]
    raise ConfigInvalid("space must be a descriptor string or a table with 'kind'")


def load_config(path: str | None, overrides: dict) -> ExperimentConfig:
    """Read a TOML config (optional) and apply flag overrides; flags win."""
    data: dict = {}
    if path:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
        base = Path(path).parent
        if isinstance(data.get("polytope"), str) and not Path(data["polytope"]).is_absolute():
            candidate = base / data["polytope"]
            if candidate.exists():
                data["polytope"] = str(candidate)
    data.update({k: v for k, v in overrides.items() if v is not None})
    if "space" not in data:
        raise ConfigInvalid("config needs a 'space'")
    tol = data.pop("tolerances", {}) or {}
    if "tol" in data:
        tol = {**tol, "solver": data.pop("tol"), "identity": tol.get("identity", 1e-8)}
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    extra = set(data) - known - {"output"}
    if extra:
        raise ConfigInvalid(f"unknown config keys {sorted(extra)}")
    output = data.pop("output", {}) or {}
    try:
        tolerances = Tolerances(**tol)
        cfg = ExperimentConfig(
            space=_space_descriptor(data["space"]),
            basis=data.get("basis"),
            eigs=int(data.get("eigs", 12)),
            checks=tuple([data["checks"]] if isinstance(data.get("checks"), str)
                         else data.get("checks", ("all",))),
            tolerances=tolerances,
            out=str(data.get("out", output.get("dir", "out"))),
            csv=bool(output.get("csv", data.get("csv", True))),
            seed=int(data.get("seed", 0)),
            polytope=data.get("polytope"),
            declared_bound=data.get("declared_bound"),
            sweep=tuple(data.get("sweep", ())),
            allow_product_soliton=bool(data.get("allow_product_soliton", False)),
            export_matrices=bool(data.get("export_matrices", False)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(str(exc)) from exc
    return cfg.validate()


# ================================================================ checks

def _status(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


class _Run:
    """State shared by the checks of one experiment."""

    def __init__(self, cfg: ExperimentConfig):
        from .operators import assemble, default_basis, make_basis
        from .spaces import make_space

        self.cfg = cfg
        self.space = None
        self.op = None
        self.result = None
        if cfg.space != "toric":
            try:
                self.space = make_space(cfg.space)
                self.basis = make_basis(cfg.basis, self.space) if cfg.basis else default_basis(
                    self.space)
            except WlapError as exc:
                raise ConfigInvalid(f"{type(exc).__name__}: {exc}") from exc
            self.op = assemble(self.space, self.basis)

    def need_spectrum(self):
        from .eigensolve import spectrum

        if self.result is None:
            t = self.cfg.tolerances
            count = min(self.cfg.eigs, self.op.cardinality)
            self.result = spectrum(self.op, count, t.solver, cluster_tol=t.cluster,
                                   seed=self.cfg.seed)
        return self.result

    def zero_tol(self):
        return self.cfg.tolerances.zero * max(self.need_spectrum().spectral_radius, 1.0)

    # ---------------------------------------------------------------- individual checks

    def check_spectrum(self):
        from .eigensolve import first_nonzero, spectrum
        from .operators import assemble, make_basis

        r = self.need_spectrum()
        details = r.summary()
        floor = -1e-10 * max(r.spectral_radius, 1.0)
        ok = bool(np.all(r.eigenvalues >= floor))
        details["nonnegativity"] = f"min eigenvalue {float(r.eigenvalues.min())!r} >= {floor!r}"
        if self.cfg.sweep:
            rows = []
            for desc in self.cfg.sweep:
                op = assemble(self.space, make_basis(desc, self.space))
                res = spectrum(op, op.cardinality if op.cardinality <= 400 else self.cfg.eigs,
                               self.cfg.tolerances.solver, cluster_tol=self.cfg.tolerances.cluster)
                lam, mult = first_nonzero(res, self.cfg.tolerances.zero
                                          * max(res.spectral_radius, 1.0))
                rows.append({"basis": desc, "cardinality": op.cardinality, "lambda1": lam,
                             "multiplicity": mult})
            mults = [row["multiplicity"] for row in rows]
            details["sweep"] = rows
            details["sweep_nondecreasing"] = all(a <= b for a, b in zip(mults, mults[1:]))
            ok = ok and details["sweep_nondecreasing"]
        return _status(ok), details

    def check_bounds(self):
        from .eigensolve import (check_lower_bound, first_nonzero_cluster, splitting_certificate)

        r = self.need_spectrum()
        rep = check_lower_bound(r, self.space, bound=self.cfg.declared_bound,
                                slack=self.cfg.tolerances.bound_slack, zero_tol=self.zero_tol())
        details = rep.to_dict()
        status = rep.status
        if not self.space.is_complex and self.space.flat_dim and abs(
                rep.lambda1 - self.space.ric_f_lower_bound) <= rep.slack:
            c = first_nonzero_cluster(r, self.zero_tol())
            certs = [splitting_certificate(self.space, r, i, tolerance=1e-6,
                                           zero_tol=self.zero_tol()).to_dict()
                     for i in c.members]
            details["splitting"] = certs
            if any(x["verdict"] != "PASS" for x in certs):
                status = "FAIL"
        return status, details

    def check_selfadjoint(self):
        from .operators import selfadjointness_report

        rep = selfadjointness_report(self.op, pairs=100, seed=self.cfg.seed)
        return rep.verdict, rep.to_dict()

    def check_identities(self):
        from .geometry import ComplexFlat, EmbeddedGeometry
        from .identities import (bochner_residual_real, complex_identity_residual,
                                 harmonic_expressions, lsi_deficit, normalize_lsi,
                                 soliton_identity_residual)
        from .spaces import SpaceKind

        s = self.space
        tol = self.cfg.tolerances.identity
        reports = []
        if s.kind is SpaceKind.GAUSSIAN:
            x = EmbeddedGeometry(s).t
            y = x[1] if len(x) > 1 else x[0]
            family = [x[0], x[0] ** 2, x[0] ** 3 * y, x[0] * y ** 2 + y ** 4, x[0] ** 4]
            reports += [bochner_residual_real(s, u, tol=tol) for u in family]
            reports.append(soliton_identity_residual(s))
            for eps in (0.0, 0.1, 0.3, 1.0, -2.0):
                reports.append(lsi_deficit(s, normalize_lsi(s, 1 + eps * x[0]), tol=tol))
        elif s.kind is SpaceKind.SPHERE and not s.is_complex:
            for ell in (1, 2, 3):
                reports += [bochner_residual_real(s, u, tol=tol)
                            for u in harmonic_expressions(s, ell)]
        elif s.kind is SpaceKind.PRODUCT:
            g = EmbeddedGeometry(s)
            family = [g.t[0], g.t[0] ** 2, g.x[0] * g.t[0], g.x[0] ** 2 - g.x[1] ** 2]
            reports += [bochner_residual_real(s, u, tol=tol) for u in family]
            if self.cfg.allow_product_soliton:
                reports.append(soliton_identity_residual(s, allow_product=True))
        elif s.kind is SpaceKind.COMPLEX_GAUSSIAN:
            g = ComplexFlat(s.complex_dim)
            syms = g.z + g.zb
            import itertools

            for e in itertools.product(range(5), repeat=len(syms)):
                if sum(e) <= 4:
                    u = sp.Mul(*[a**k for a, k in zip(syms, e)])
                    reports.append(complex_identity_residual(s, u, tol=tol))
        else:
            return "SKIPPED", {"reason": "no symbolic identity suite for this space"}
        worst = max(reports, key=lambda r: r.max_residual / r.tolerance)
        status = _status(all(r.passed for r in reports))
        return status, {"count": len(reports), "worst": worst.to_dict(),
                        "reports": [r.to_dict() for r in reports]}

    def check_holomorphy(self):
        from .eigensolve import first_nonzero_cluster
        from .geometry import ComplexFlat
        from .holomorphic import (FanoFunction, field_gram, futaki_from_eigenfunction,
                                  futaki_from_potential, holomorphy_defect,
                                  rotation_eigenfunction)
        from .operators import apply
        from .spaces import SpaceKind, complex_gaussian_rule

        s = self.space
        tol = self.cfg.tolerances.holomorphy
        if s.kind is SpaceKind.FANO_CP1:
            r = self.need_spectrum()
            c = first_nonzero_cluster(r, self.zero_tol())
            fns = [FanoFunction.from_spectrum(r, i) for i in c.members]
            reps = [holomorphy_defect(s, f, tol).to_dict() for f in fns]
            rot = rotation_eigenfunction(s, r)
            f1 = futaki_from_eigenfunction(s, rot, tol)
            f2 = futaki_from_potential(s)
            det = abs(np.linalg.det(field_gram(s, fns)))
            ok = (all(x["verdict"] == "PASS" for x in reps) and abs(f1) <= tol
                  and abs(f2) <= tol and abs(f1 - f2) <= tol)
            return _status(ok), {"lambda1": c.value, "multiplicity": c.multiplicity,
                                 "eigenfunctions": reps, "futaki_eigenfunction": f1,
                                 "futaki_potential": f2, "futaki_agreement": abs(f1 - f2),
                                 "field_gram_determinant": det}
        if s.kind is SpaceKind.COMPLEX_GAUSSIAN:
            g = ComplexFlat(s.complex_dim)
            rule = complex_gaussian_rule(s, 6)
            reps = []
            other = g.z[1] if s.complex_dim > 1 else sp.Integer(1)
            for j in range(5):
                u = g.zb[0] * other**j
                vals = apply(s, u, rule.nodes) + g.lambdify(u)(rule.nodes)
                rep = holomorphy_defect(s, u, tol).to_dict()
                rep["u"] = sp.sstr(u)
                rep["apply_residual"] = float(np.max(np.abs(vals)))
                reps.append(rep)
            ok = all(x["verdict"] == "PASS" and x["apply_residual"] <= 1e-10 for x in reps)
            return _status(ok), {"eigenfunctions": reps}
        return "SKIPPED", {"reason": "holomorphy checks need fano-cp1 or complex-gaussian"}

    def check_toric(self):
        from .toric import dump_polytope, futaki_vanishes, load_polytope, volume

        if not self.cfg.polytope:
            return "SKIPPED", {"reason": "no polytope file"}
        try:
            text = Path(self.cfg.polytope).read_text()
        except OSError as exc:
            raise ConfigInvalid(f"cannot read polytope: {exc}") from exc
        p = load_polytope(text)
        verdict = futaki_vanishes(p)
        d = verdict.to_dict()
        d["vertices"] = json.loads(dump_polytope(p))["vertices"]
        d["volume_check"] = str(volume(p))
        return "PASS", d


def _write_csv(path: Path, result) -> None:
    cluster_of = {}
    for cid, c in enumerate(result.clusters):
        for i in c.members:
            cluster_of[i] = (cid, c.multiplicity)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "eigenvalue", "cluster_id", "multiplicity", "residual"])
        for i, lam in enumerate(result.eigenvalues):
            cid, mult = cluster_of[i]
            w.writerow([i, repr(float(lam)), cid, mult, repr(float(result.residuals[i]))])


def export_matrix(path: Path, A, name: str) -> None:
    """Dense matrix as text: header lines, then one entry per line in column-major order."""
    A = np.asarray(A)
    cplx = np.iscomplexobj(A)
    with open(path, "w") as fh:
        fh.write(f"# wlaplab matrix {name}\n# rows {A.shape[0]} cols {A.shape[1]}\n")
        fh.write(f"# order column-major\n# field {'complex (re im)' if cplx else 'real'}\n")
        for v in A.ravel(order="F"):
            fh.write(f"{v.real!r} {v.imag!r}\n" if cplx else f"{float(v)!r}\n")


def run(cfg: ExperimentConfig) -> tuple[dict, int]:
    """Execute the requested checks; returns (report, exit status) and writes the files."""
    t0 = time.perf_counter()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    checks = []
    run_state = _Run(cfg)
    for name in cfg.requested():
        if cfg.space == "toric" and name != "toric":
            checks.append({"name": name, "status": "SKIPPED",
                           "details": {"reason": "toric-only run"}})
            continue
        try:
            status, details = getattr(run_state, f"check_{name}")()
        except ConfigInvalid:
            raise
        except WlapError as exc:
            status, details = "FAIL", {"error": type(exc).__name__, "message": str(exc)}
        checks.append({"name": name, "status": status, "details": _json_safe(details)})
    failed = [c["name"] for c in checks if c["status"] == "FAIL"]
    report = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "config": _json_safe(asdict(cfg)),
        "checks": checks,
        "failed": failed,
        "status": "FAIL" if failed else "PASS",
        "wall_time": time.perf_counter() - t0,
    }
    if run_state.result is not None:
        report["spectrum"] = _json_safe(run_state.result.summary())
        if cfg.csv:
            _write_csv(out / "spectrum.csv", run_state.result)
    if cfg.export_matrices and run_state.op is not None:
        export_matrix(out / "stiffness.txt", run_state.op.stiffness, "stiffness")
        export_matrix(out / "gram.txt", run_state.op.gram, "gram")
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report, (1 if failed else 0)


# ================================================================ catalog and plots

def list_spaces() -> str:
    from .spaces import list_spaces as _ls

    return _ls()


def emit_plots(report: dict, path) -> list[Path]:
    """Eigenvalue ladder and, when a sweep is present, multiplicity versus truncation degree."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    summary = report.get("spectrum") if isinstance(report, dict) else None
    if not summary or not summary.get("eigenvalues"):
        raise NoSpectrumData("report has no spectrum data")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    vals = summary["eigenvalues"]
    fig, ax = plt.subplots(figsize=(4, 5))
    for c in summary["clusters"]:
        ax.hlines(c["value"], 0, 1, color="k")
        ax.text(1.05, c["value"], f"x{c['multiplicity']}", va="center", fontsize=8)
    ax.set_xlim(0, 1.4)
    ax.set_xticks([])
    ax.set_ylabel("eigenvalue")
    ax.set_title(report.get("config", {}).get("space", ""), fontsize=9)
    ax.set_ylim(min(vals) - 0.1, max(vals) + 0.1)
    for ext in ("png", "svg"):
        p = out / f"ladder.{ext}"
        fig.savefig(p, metadata={"Date": None} if ext == "svg" else None)
        written.append(p)
    plt.close(fig)
    sweep = next((c["details"].get("sweep") for c in report.get("checks", [])
                  if c.get("name") == "spectrum" and "sweep" in c.get("details", {})), None)
    if sweep:
        fig, ax = plt.subplots(figsize=(5, 4))
        xs = [row["cardinality"] for row in sweep]
        ax.step(range(len(sweep)), [row["multiplicity"] for row in sweep], where="mid", marker="o")
        ax.set_xticks(range(len(sweep)), [row["basis"] for row in sweep], rotation=20, fontsize=8)
        ax.set_ylabel("multiplicity of the first nonzero cluster")
        ax.set_title(f"basis sizes {xs}", fontsize=8)
        fig.tight_layout()
        for ext in ("png", "svg"):
            p = out / f"multiplicity.{ext}"
            fig.savefig(p, metadata={"Date": None} if ext == "svg" else None)
            written.append(p)
        plt.close(fig)
    return written


# ================================================================ entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wlaplab", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML experiment config")
        p.add_argument("--out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, help="seed for random probes and start vectors")
        p.add_argument("--tol", type=float, help="solver tolerance")
        p.add_argument("--eigs", type=int, help="number of eigenpairs")
        p.add_argument("--space", help="space descriptor, overrides the config")
        p.add_argument("--basis", help="basis descriptor, overrides the config")

    for name, help_ in (("spectrum", "solve and tabulate the spectrum"),
                        ("verify", "run the configured checks")):
        p = sub.add_parser(name, help=help_)
        common(p)
        if name == "verify":
            p.add_argument("--checks", help="comma separated subset of " + ",".join(CHECK_ORDER))
            p.add_argument("--declared-bound", type=float, help="override the catalog bound")
    p = sub.add_parser("toric", help="barycenter test of a moment polytope")
    common(p)
    p.add_argument("--polytope", help="polytope JSON file")
    sub.add_parser("list-spaces", help="print the catalog")
    p = sub.add_parser("plot", help="plots from a JSON report")
    p.add_argument("--report", required=True)
    p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-spaces":
        sys.stdout.write(list_spaces())
        return 0
    if args.command == "plot":
        try:
            report = json.loads(Path(args.report).read_text())
            files = emit_plots(report, args.out or Path(args.report).parent)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        except NoSpectrumData as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        for f in files:
            print(f)
        return 0
    overrides = {"out": args.out, "seed": args.seed, "tol": args.tol, "eigs": args.eigs,
                 "space": args.space, "basis": args.basis}
    if args.command == "spectrum":
        overrides["checks"] = ["spectrum"]
    elif args.command == "toric":
        overrides["checks"] = ["toric"]
        overrides["polytope"] = args.polytope
        if args.space is None and not args.config:
            overrides["space"] = "toric"
    else:
        if args.checks:
            overrides["checks"] = [c.strip() for c in args.checks.split(",") if c.strip()]
        overrides["declared_bound"] = args.declared_bound
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "toric" and cfg.space != "toric":
            cfg = replace(cfg, space="toric")
        report, code = run(cfg)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for c in report["checks"]:
        print(f"{c['name']:<12} {c['status']}")
    print(f"report: {Path(cfg.out) / 'report.json'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
