"""Config-driven experiment runner.

A run is described by a TOML document::

    dimension = 2
    output = "out"

    [domain]
    primitives = [{kind = "ball", center = [0.0, 0.0], radius = 0.2}]
    # minkowski = 0.1          (domain becomes primitives + B_0.1)

    [mesh]
    h = 0.0125
    align = [{e = [1.0, 0.0], offset = 0.0}]

    [[tasks]]
    type = "solve"
    kind = "torsion"

    [[tasks]]
    type = "verify"
    audit = "radial"

Unknown keys are rejected.  Outputs land in the output directory: field
CSVs, optional matrix dumps, ``report.txt`` (AUDIT lines and a final RESULT
line), ``audits.json`` and ``run.log``, which alone carries timestamps.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import qualcheck as qc
from .assembly import FormMatrices, assemble_alt, assemble_def, quadratic_form_direct, route_discrepancy, write_matrix
from .audit import AuditEntry
from .errors import (BoundaryOutsideGrid, EmptyGrid, GridNotSymmetric, LogLapError, ParseError,
                     PointOutsideDomain, SolverError, ValidationError)
from .geometry import Ball, DiscreteField, Domain, Ellipse, Grid, ReflectionFrame, Rect, build_grid, critical_value
from .kernel import QuadratureSpec, constants
from .solve import Nonlinearity, SolveOutcome, solve_poisson, solve_semilinear, write_field_csv
from .spectral import eigs, faber_krahn_check, lambda1

EXIT_PASS, EXIT_CONFIG, EXIT_AUDIT, EXIT_SOLVER = 0, 1, 2, 3

_TOP = {"dimension", "output", "domain", "mesh", "quadrature", "nonlinearity", "tolerances", "tasks", "dump"}
_DOMAIN = {"primitives", "minkowski"}
_PRIMS = {"ball": {"kind", "center", "radius"}, "rect": {"kind", "lo", "hi"},
          "ellipse": {"kind", "center", "axes"}}
_MESH = {"h", "align", "origin"}
_ALIGN = {"e", "offset"}
_QUAD = {"gauss_order", "subdivision_levels", "angular_nodes", "cutoff_refine"}
_NONLIN = {"kind", "params"}
_TOL = {"tol_mp", "band_cap", "slope_floor", "newton_tol", "max_iter", "route_tol"}
_DUMP = {"matrices"}
_TASKS = {"operator_check": set(), "eigs": {"k"}, "solve": {"kind", "g"}, "verify": {"audit"}}
_AUDITS = {
    "gnn": {"e", "lam"},
    "radial": {"center"},
    "hopf": {"center", "radius", "refine"},
    "interior_hopf": {"e", "lam", "Q", "slope_floor"},
    "parallel": {"reference_osc", "reference_radius"},
    "mp_small": {"V_inf"},
    "faber_krahn": set(),
    "strong_mp": set(),
    "moving_plane": {"e", "lambdas"},
}
# audits that read the most recent solution field
_NEEDS_SOLVE = {"gnn", "radial", "hopf", "interior_hopf", "parallel", "strong_mp", "moving_plane"}
_DEFAULT_TOL = {"band_cap": 10.0, "newton_tol": 1e-10, "max_iter": 50, "route_tol": 1e-3}


@dataclass
class TaskSpec:
    type: str
    options: dict = field(default_factory=dict)


@dataclass
class Config:
    dimension: int
    domain: Domain
    h: float
    align: list[ReflectionFrame]
    origin: tuple[float, ...] | None
    quadrature: QuadratureSpec
    nonlinearity: Nonlinearity | None
    tolerances: dict
    tasks: list[TaskSpec]
    output: str = "out"
    dump_matrices: bool = False


# ------------------------------------------------------------------ parsing


def _key_line(text: str | None, path: list) -> int | None:
    """Best-effort line number of the key at ``path`` in the TOML text."""
    if not text:
        return None
    lines = text.splitlines()
    key = str(path[-1])
    pat = re.compile(r"(^|[\s{,.])" + re.escape(key) + r"\s*=")
    sections = [p for p in path[:-1] if isinstance(p, str)]
    start, stop = 0, len(lines)
    if sections:
        header = ".".join(sections)
        nth = next((p for p in path if isinstance(p, int)), 0)
        seen = -1
        for i, ln in enumerate(lines):
            s = ln.strip()
            if s in (f"[{header}]", f"[[{header}]]"):
                seen += 1
                if seen == nth or s == f"[{header}]":
                    start = i
                    break
        for j in range(start + 1, len(lines)):
            if lines[j].strip().startswith("["):
                stop = j
                break
    for i in range(start, stop):
        if pat.search(lines[i]):
            return i + 1
    dotted = ".".join(str(p) for p in path if isinstance(p, str))
    for i, ln in enumerate(lines):
        if dotted in ln or pat.search(ln):
            return i + 1
    return None


class _Reader:
    def __init__(self, text: str | None):
        self.text = text

    def check_keys(self, table, allowed: set, path: list) -> None:
        if not isinstance(table, dict):
            raise ValidationError(_name(path), "expected a table")
        for k in table:
            if k not in allowed:
                full = path + [k]
                raise ParseError(_key_line(self.text, full), f"unknown key '{_name(full)}'")


def _name(path: list) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else p)
    return out or "<root>"


def _num(v, path, positive=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(_name(path), f"expected a number, got {v!r}")
    if positive and not v > 0:
        raise ValidationError(_name(path), f"must be positive, got {v}")
    return float(v)


def _int(v, path, lo=1) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ValidationError(_name(path), f"expected an integer >= {lo}, got {v!r}")
    return v


def _vec(v, path, dim) -> tuple[float, ...]:
    if isinstance(v, (int, float)) and not isinstance(v, bool) and dim == 1:
        v = [v]
    if not isinstance(v, list) or len(v) != dim:
        raise ValidationError(_name(path), f"expected a list of {dim} numbers, got {v!r}")
    return tuple(_num(t, path) for t in v)


def _unit(v, path, dim) -> tuple[float, ...]:
    e = np.array(_vec(v, path, dim))
    n = float(np.linalg.norm(e))
    if n == 0:
        raise ValidationError(_name(path), "direction must be nonzero")
    return tuple(float(t) for t in e / n)


def _primitive(d, path, dim, rd: _Reader):
    if not isinstance(d, dict) or "kind" not in d:
        raise ValidationError(_name(path), "primitive needs a 'kind'")
    kind = d["kind"]
    if kind not in _PRIMS:
        raise ValidationError(_name(path + ["kind"]), f"unknown primitive {kind!r}")
    rd.check_keys(d, _PRIMS[kind], path)
    for k in sorted(_PRIMS[kind] - {"kind"}):
        if k not in d:
            raise ValidationError(_name(path + [k]), "missing")
    try:
        if kind == "ball":
            return Ball(_vec(d["center"], path + ["center"], dim), _num(d["radius"], path + ["radius"], True))
        if kind == "rect":
            return Rect(_vec(d["lo"], path + ["lo"], dim), _vec(d["hi"], path + ["hi"], dim))
        if dim != 2:
            raise ValidationError(_name(path), "ellipses need dimension 2")
        return Ellipse(_vec(d["center"], path + ["center"], dim), _vec(d["axes"], path + ["axes"], dim))
    except ValueError as exc:
        raise ValidationError(_name(path), str(exc)) from exc


def config_from_dict(raw: dict, text: str | None = None) -> Config:
    """Validate a decoded document and apply defaults."""
    rd = _Reader(text)
    rd.check_keys(raw, _TOP, [])
    for req in ("dimension", "domain", "mesh"):
        if req not in raw:
            raise ValidationError(req, "missing")
    dim = _int(raw["dimension"], ["dimension"])
    if dim not in (1, 2):
        raise ValidationError("dimension", f"must be 1 or 2, got {dim}")

    dom = raw["domain"]
    rd.check_keys(dom, _DOMAIN, ["domain"])
    prims = dom.get("primitives")
    if not isinstance(prims, list) or not prims:
        raise ValidationError("domain.primitives", "expected a non-empty list of primitives")
    pieces = [_primitive(p, ["domain", "primitives", i], dim, rd) for i, p in enumerate(prims)]
    domain = Domain.union(*pieces)
    if "minkowski" in dom:
        domain = Domain.minkowski(domain, _num(dom["minkowski"], ["domain", "minkowski"], True))

    mesh = raw["mesh"]
    rd.check_keys(mesh, _MESH, ["mesh"])
    if "h" not in mesh:
        raise ValidationError("mesh.h", "missing")
    h = _num(mesh["h"], ["mesh", "h"], True)
    align = []
    for i, a in enumerate(mesh.get("align", [])):
        p = ["mesh", "align", i]
        rd.check_keys(a, _ALIGN, p)
        fr = ReflectionFrame(_unit(a.get("e"), p + ["e"], dim), _num(a.get("offset", 0.0), p + ["offset"]))
        if fr.axis() is None:
            raise ValidationError(_name(p + ["e"]), "alignment planes must be axis-parallel")
        align.append(fr)
    origin = _vec(mesh["origin"], ["mesh", "origin"], dim) if "origin" in mesh else None

    qd = raw.get("quadrature", {})
    rd.check_keys(qd, _QUAD, ["quadrature"])
    quad = QuadratureSpec(**{k: _int(v, ["quadrature", k]) for k, v in qd.items()})

    nonlin = None
    if "nonlinearity" in raw:
        nl = raw["nonlinearity"]
        rd.check_keys(nl, _NONLIN, ["nonlinearity"])
        params = nl.get("params", [])
        if not isinstance(params, list):
            raise ValidationError("nonlinearity.params", "expected a list")
        try:
            nonlin = Nonlinearity(str(nl.get("kind")), tuple(_num(t, ["nonlinearity", "params"]) for t in params))
        except ValueError as exc:
            raise ValidationError("nonlinearity", str(exc)) from exc

    tol = dict(_DEFAULT_TOL)
    tt = raw.get("tolerances", {})
    rd.check_keys(tt, _TOL, ["tolerances"])
    for k, v in tt.items():
        tol[k] = _int(v, ["tolerances", k]) if k == "max_iter" else _num(v, ["tolerances", k], True)

    dump = raw.get("dump", {})
    rd.check_keys(dump, _DUMP, ["dump"])
    dump_m = dump.get("matrices", False)
    if not isinstance(dump_m, bool):
        raise ValidationError("dump.matrices", "expected true or false")

    tasks = _tasks(raw.get("tasks", []), dim, domain, nonlin, rd)
    out = raw.get("output", "out")
    if not isinstance(out, str) or not out:
        raise ValidationError("output", "expected a directory name")
    return Config(dim, domain, h, align, origin, quad, nonlin, tol, tasks, out, dump_m)


def _tasks(raw_tasks, dim, domain: Domain, nonlin, rd: _Reader) -> list[TaskSpec]:
    if not isinstance(raw_tasks, list) or not raw_tasks:
        raise ValidationError("tasks", "at least one task is required")
    out: list[TaskSpec] = []
    solved = False
    for i, t in enumerate(raw_tasks):
        p = ["tasks", i]
        if not isinstance(t, dict) or t.get("type") not in _TASKS:
            raise ValidationError(_name(p + ["type"]), f"expected one of {sorted(_TASKS)}")
        kind = t["type"]
        allowed = {"type"} | _TASKS[kind]
        if kind == "verify":
            audit = t.get("audit")
            if audit not in _AUDITS:
                raise ValidationError(_name(p + ["audit"]), f"expected one of {sorted(_AUDITS)}")
            allowed |= _AUDITS[audit]
        rd.check_keys(t, allowed, p)
        opts = {k: v for k, v in t.items() if k != "type"}
        if kind == "eigs":
            opts["k"] = _int(opts.get("k", 1), p + ["k"])
        elif kind == "solve":
            sk = opts.setdefault("kind", "torsion")
            if sk not in ("torsion", "poisson", "semilinear"):
                raise ValidationError(_name(p + ["kind"]), f"unknown solve kind {sk!r}")
            if sk == "semilinear" and nonlin is None:
                raise ValidationError(_name(p + ["kind"]), "semilinear solve needs a [nonlinearity] section")
            opts["g"] = _num(opts.get("g", 1.0), p + ["g"])
            solved = True
        elif kind == "verify":
            _check_audit(opts, p, dim, domain, solved)
        out.append(TaskSpec(kind, opts))
    return out


def _single_ball(domain: Domain) -> Ball | None:
    if domain.mode == "union" and len(domain.pieces) == 1 and isinstance(domain.pieces[0], Ball):
        return domain.pieces[0]
    return None


def _check_audit(opts: dict, p: list, dim: int, domain: Domain, solved: bool) -> None:
    audit = opts["audit"]
    if audit in _NEEDS_SOLVE and not solved:
        raise ValidationError(_name(p + ["audit"]), f"verify {audit} requires an earlier solve task")
    e1 = [1.0] + [0.0] * (dim - 1)
    if audit in ("gnn", "interior_hopf", "moving_plane"):
        opts["e"] = _unit(opts.get("e", e1), p + ["e"], dim)
        if ReflectionFrame(opts["e"]).axis() is None:
            raise ValidationError(_name(p + ["e"]), "direction must be a lattice axis")
    if "lam" in opts:
        opts["lam"] = _num(opts["lam"], p + ["lam"])
    if audit == "moving_plane":
        lams = opts.get("lambdas")
        if not isinstance(lams, list) or not lams:
            raise ValidationError(_name(p + ["lambdas"]), "expected a non-empty list")
        opts["lambdas"] = [_num(v, p + ["lambdas"]) for v in lams]
    if audit in ("radial", "hopf"):
        ball = _single_ball(domain)
        if "center" in opts:
            opts["center"] = _vec(opts["center"], p + ["center"], dim)
        elif ball is not None:
            opts["center"] = tuple(ball.center)
        else:
            raise ValidationError(_name(p + ["center"]), "required unless the domain is a single ball")
        if audit == "hopf":
            if "radius" in opts:
                opts["radius"] = _num(opts["radius"], p + ["radius"], True)
            elif ball is not None:
                opts["radius"] = ball.radius
            else:
                raise ValidationError(_name(p + ["radius"]), "required unless the domain is a single ball")
            refine = opts.setdefault("refine", False)
            if not isinstance(refine, bool):
                raise ValidationError(_name(p + ["refine"]), "expected true or false")
    if audit == "interior_hopf":
        if "Q" in opts:
            opts["Q"] = _vec(opts["Q"], p + ["Q"], dim)
        if "slope_floor" in opts:
            opts["slope_floor"] = _num(opts["slope_floor"], p + ["slope_floor"])
    if audit == "parallel":
        if domain.mode != "minkowski" or dim != 2:
            raise ValidationError(_name(p + ["audit"]), "parallel audit needs a 2D domain with minkowski radius")
        for k in ("reference_osc", "reference_radius"):
            if k in opts:
                opts[k] = _num(opts[k], p + [k], True)
    if audit == "mp_small":
        opts["V_inf"] = _num(opts.get("V_inf", 1.0), p + ["V_inf"])
        if opts["V_inf"] < 0:
            raise ValidationError(_name(p + ["V_inf"]), "must be nonnegative")


def parse_config(text: str) -> Config:
    """Parse a TOML document into a validated Config."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ParseError(int(m.group(1)) if m else None, str(exc)) from exc
    return config_from_dict(raw, text)


# ------------------------------------------------------------------ running


def _fmt(v: float) -> str:
    return f"{v:.12g}"


class _Runner:
    def __init__(self, cfg: Config, out: Path, threads: int | None, seed: int, log: logging.Logger):
        self.cfg, self.out, self.threads, self.seed, self.log = cfg, out, threads, seed, log
        self.K = constants(cfg.dimension)
        self.lines: list[str] = []
        self.audits: list[AuditEntry] = []
        self.grid: Grid | None = None
        self._F: FormMatrices | None = None
        self.solution: SolveOutcome | None = None
        self.solve_opts: dict | None = None
        self.lam1: float | None = None
        self.task = 0

    # planes every verify task needs on the lattice, in task order
    def _planes(self) -> list[ReflectionFrame]:
        planes = list(self.cfg.align)
        dom = self.cfg.domain
        for t in self.cfg.tasks:
            o = t.options
            if t.type != "verify":
                continue
            a = o["audit"]
            if a == "gnn":
                e = np.array(o["e"])
                lam = o.get("lam", 0.5 * (dom.support(e) - dom.support(-e)))
                o["lam"] = float(lam)
                planes.append(ReflectionFrame(o["e"], o["lam"]))
            elif a == "interior_hopf":
                if "lam" not in o:
                    o["lam"] = critical_value(dom, o["e"])
                planes.append(ReflectionFrame(o["e"], o["lam"]))
            elif a == "moving_plane":
                planes += [ReflectionFrame(o["e"], lam) for lam in o["lambdas"]]
        return planes

    def grid_at(self, h: float, domain: Domain | None = None) -> Grid:
        origin = self.cfg.origin if domain is None else None
        return build_grid(domain or self.cfg.domain, h, self._planes_cache, origin=origin)

    @property
    def F(self) -> FormMatrices:
        if self._F is None:
            self._F = assemble_alt(self.grid, self.K, self.cfg.quadrature, threads=self.threads)
            self.log.info("assembled %d cells", self.grid.n)
            if self.cfg.dump_matrices:
                write_matrix(self.out / f"{self.task:02d}_stiffness.txt", self._F.A)
                write_matrix(self.out / f"{self.task:02d}_mass_diag.txt", self._F.m[:, None])
        return self._F

    def record(self, entry: AuditEntry) -> None:
        self.audits.append(entry)
        self.lines.append(entry.line())
        if entry.theorem:
            self.lines.append(f"  theorem: {entry.theorem}")
        if entry.reason:
            self.lines.append(f"  reason: {entry.reason}")
        self.log.info("%s", entry.line())

    def run(self) -> int:
        cfg = self.cfg
        try:
            self._planes_cache = self._planes()
            self.grid = self.grid_at(cfg.h)
        except (EmptyGrid, GridNotSymmetric, ValueError) as exc:
            return self.finish(EXIT_CONFIG, exc)
        self.lines.append(f"GRID dimension={cfg.dimension} h={_fmt(cfg.h)} cells={self.grid.n}")
        for i, t in enumerate(cfg.tasks):
            self.log.info("task %d: %s %s", i, t.type, t.options)
            self.task = i
            try:
                getattr(self, f"_task_{t.type}")(i, t.options)
            except SolverError as exc:
                return self.finish(EXIT_SOLVER, exc)
            except (GridNotSymmetric, BoundaryOutsideGrid, PointOutsideDomain, EmptyGrid) as exc:
                return self.finish(EXIT_CONFIG, exc)
        failed = any(a.verdict == "fail" for a in self.audits)
        return self.finish(EXIT_AUDIT if failed else EXIT_PASS)

    def finish(self, code: int, exc: Exception | None = None) -> int:
        if exc is not None:
            self.lines.append(f"ERROR {type(exc).__name__}: {exc}")
            self.log.error("%s: %s", type(exc).__name__, exc)
        self.lines.append(f"RESULT {'pass' if code == EXIT_PASS else 'fail'}")
        _write_text(self.out / "report.txt", "\n".join(self.lines) + "\n")
        blob = json.dumps([a.to_dict() for a in self.audits], indent=2, sort_keys=True)
        _write_text(self.out / "audits.json", blob + "\n")
        self.log.info("exit code %d", code)
        return code

    # -- tasks

    def _task_operator_check(self, i: int, o: dict) -> None:
        Fa = self.F
        Fd = assemble_def(self.grid, self.K, self.cfg.quadrature, threads=self.threads)
        disc = route_discrepancy(Fa, Fd)
        rng = np.random.default_rng(self.seed)
        v = rng.standard_normal(self.grid.n)
        qa = float(v @ Fa.A @ v)
        form = abs(quadratic_form_direct(Fa, v) - qa) / abs(qa)
        self.record(AuditEntry.evaluate(
            "operator_check", {"route_discrepancy": disc, "form_mismatch": form},
            {"route_discrepancy": ("<=", self.cfg.tolerances["route_tol"]), "form_mismatch": ("<=", 1e-10)},
            theorem="equivalence of the two representations of the Dirichlet form"))

    def _task_eigs(self, i: int, o: dict) -> None:
        k = min(o["k"], self.grid.n)
        pairs = eigs(self.F, k)
        self.lam1 = pairs[0].lam
        self.lines.append(f"EIGS k={k} " + " ".join(f"lambda_{j + 1}={_fmt(p.lam)}" for j, p in enumerate(pairs)))
        for j, p in enumerate(pairs):
            write_field_csv(self.out / f"{i:02d}_eig_{j + 1}.csv", p.phi)

    def _solve_on(self, F: FormMatrices, o: dict) -> SolveOutcome:
        kind = o["kind"]
        if kind == "semilinear":
            return solve_semilinear(F, self.cfg.nonlinearity, tol=self.cfg.tolerances["newton_tol"],
                                    max_iter=self.cfg.tolerances["max_iter"])
        return solve_poisson(F, 1.0 if kind == "torsion" else o["g"])

    def _task_solve(self, i: int, o: dict) -> None:
        res = self._solve_on(self.F, o)
        self.solution, self.solve_opts = res, o
        self.lines.append(f"SOLVE kind={o['kind']} iterations={res.iterations} "
                          f"residual={res.residual_norm:.3e} min={_fmt(res.positivity_min)} "
                          f"max={_fmt(res.u.sup_norm())}")
        write_field_csv(self.out / f"{i:02d}_solve_{o['kind']}.csv", res.u)

    def _nonlinearity(self) -> Nonlinearity:
        o = self.solve_opts
        if o["kind"] == "semilinear":
            return self.cfg.nonlinearity
        return Nonlinearity.const(1.0 if o["kind"] == "torsion" else o["g"])

    def _solve_elsewhere(self, h: float, domain: Domain | None = None) -> DiscreteField:
        g = self.grid_at(h, domain)
        F = assemble_alt(g, self.K, self.cfg.quadrature, threads=self.threads)
        return self._solve_on(F, self.solve_opts).u

    def _task_verify(self, i: int, o: dict) -> None:
        a = o["audit"]
        u = self.solution.u if self.solution is not None else None
        tol = self.cfg.tolerances
        if a == "moving_plane":
            for entry in qc.moving_plane_audit(u, o["e"], o["lambdas"], self._nonlinearity(), tol.get("tol_mp")):
                self.record(entry)
        elif a == "gnn":
            self.record(qc.gnn_symmetry_audit(u, o["e"], o["lam"], self._nonlinearity()))
        elif a == "radial":
            self.record(qc.radial_audit(u, o["center"]))
        elif a == "hopf":
            B = Ball(o["center"], o["radius"])
            refined = self._solve_elsewhere(self.cfg.h / 2) if o["refine"] else None
            self.record(qc.hopf_rate_audit(u, B, refined, tol["band_cap"]))
        elif a == "interior_hopf":
            frame = ReflectionFrame(o["e"], o["lam"])
            state = qc.moving_plane_state(u, o["e"], o["lam"], self._nonlinearity())
            floor = o.get("slope_floor", tol.get("slope_floor"))
            self.record(qc.interior_hopf_audit(state, frame, o.get("Q"), floor))
        elif a == "parallel":
            self.record(self._parallel(u, o))
        elif a == "strong_mp":
            self.record(qc.strong_mp_audit(u))
        elif a == "mp_small":
            lam = self.lam1 if self.lam1 is not None else lambda1(self.F)
            self.record(qc.small_measure_audit(self.F, o["V_inf"], lam))
        elif a == "faber_krahn":
            self.record(faber_krahn_check(self.cfg.domain, self.cfg.h, self.cfg.quadrature, self.threads))

    def _parallel(self, u: DiscreteField, o: dict) -> AuditEntry:
        dom = self.cfg.domain
        G, R = dom.base, dom.radius
        ref = o.get("reference_osc")
        if ref is None and _single_ball(G) is None:
            pieces = G.pieces
            if len(pieces) == 1 and isinstance(pieces[0], Ellipse):
                r = o.get("reference_radius", math.sqrt(pieces[0].axes[0] * pieces[0].axes[1]))
                c = pieces[0].center
            else:
                lo, hi = G.bbox()
                c, r = tuple(0.5 * (lo + hi)), o.get("reference_radius", 0.25 * float(np.sum(hi - lo)))
            Gb = Domain.union(Ball(c, r))
            ub = self._solve_elsewhere(self.cfg.h, Domain.minkowski(Gb, R))
            ref = qc.parallel_surface_audit(ub, Gb, R).metrics["osc"]
            self.lines.append(f"REFERENCE parallel ball_radius={_fmt(r)} osc={_fmt(ref)}")
        return qc.parallel_surface_audit(u, G, R, ref)


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def _logger(path: Path) -> logging.Logger:
    log = logging.getLogger(f"loglap.run.{path.resolve()}")
    log.setLevel(logging.INFO)
    log.propagate = False
    for hd in list(log.handlers):
        hd.close()
        log.removeHandler(hd)
    hd = logging.FileHandler(path, mode="w", encoding="utf-8")
    hd.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(hd)
    return log


def run_experiment(cfg: Config, out: str | Path | None = None, threads: int | None = None, seed: int = 0) -> int:
    """Execute the tasks of ``cfg`` and return the exit code."""
    outdir = Path(out if out is not None else cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    log = _logger(outdir / "run.log")
    try:
        return _Runner(cfg, outdir, threads, seed, log).run()
    finally:
        for hd in list(log.handlers):
            hd.close()
            log.removeHandler(hd)


def _config_error(outdir: Path, exc: Exception) -> int:
    outdir.mkdir(parents=True, exist_ok=True)
    _write_text(outdir / "report.txt", f"ERROR {type(exc).__name__}: {exc}\nRESULT fail\n")
    print(f"error: {exc}", file=sys.stderr)
    return EXIT_CONFIG


# ------------------------------------------------------------ flag forms


def _parse_primitive(spec: str) -> dict:
    """'ball:cx[,cy]:r', 'rect:lo:hi', 'ellipse:cx,cy:a,b' or 'interval:a:b'."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValidationError("--domain", f"cannot parse {spec!r}")
    kind = parts[0]
    try:
        a = [float(t) for t in parts[1].split(",")]
        b = [float(t) for t in parts[2].split(",")]
    except ValueError as exc:
        raise ValidationError("--domain", f"cannot parse {spec!r}") from exc
    if kind == "ball":
        return {"kind": "ball", "center": a, "radius": b[0]}
    if kind in ("rect", "interval"):
        return {"kind": "rect", "lo": a, "hi": b}
    if kind == "ellipse":
        return {"kind": "ellipse", "center": a, "axes": b}
    raise ValidationError("--domain", f"unknown primitive {kind!r}")


def _floats(s: str) -> list[float]:
    return [float(t) for t in s.split(",")]


def _flags_to_dict(args) -> dict:
    prims = [_parse_primitive(s) for s in args.domain]
    dim = len(prims[0].get("center", prims[0].get("lo")))
    raw: dict = {"dimension": dim, "domain": {"primitives": prims}, "mesh": {"h": args.h}}
    if args.minkowski is not None:
        raw["domain"]["minkowski"] = args.minkowski
    if args.align:
        raw["mesh"]["align"] = []
        for s in args.align:
            e, _, off = s.partition(":")
            raw["mesh"]["align"].append({"e": _floats(e), "offset": float(off or 0.0)})
    if args.dump_matrices:
        raw["dump"] = {"matrices": True}
    if args.nonlinearity:
        kind, _, ps = args.nonlinearity.partition(":")
        raw["nonlinearity"] = {"kind": kind, "params": _floats(ps) if ps else []}
    if args.command == "eigs":
        raw["tasks"] = [{"type": "eigs", "k": args.k}]
    elif args.command == "solve":
        raw["tasks"] = [{"type": "solve", "kind": args.kind, "g": args.g}]
    else:
        task: dict = {"type": "verify", "audit": args.audit}
        if args.e:
            task["e"] = _floats(args.e)
        if args.lambdas:
            task["lambdas"] = _floats(args.lambdas)
        if args.center:
            task["center"] = _floats(args.center)
        if args.V_inf is not None:
            task["V_inf"] = args.V_inf
        if args.refine:
            task["refine"] = True
        tasks = [task]
        if args.audit in _NEEDS_SOLVE:
            tasks.insert(0, {"type": "solve", "kind": args.kind, "g": args.g})
        raw["tasks"] = tasks
    return raw


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="loglap", description="Logarithmic Laplacian experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default: config 'output' or ./out)")
    common.add_argument("--threads", type=int, default=None, help="worker threads for table assembly")
    common.add_argument("--seed", type=int, default=0, help="seed for random-vector checks")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run a TOML config")
    r.add_argument("config", type=Path)

    geo = argparse.ArgumentParser(add_help=False)
    geo.add_argument("--domain", action="append", required=True,
                     help="primitive: ball:cx[,cy]:r | rect:lo:hi | ellipse:cx,cy:a,b | interval:a:b")
    geo.add_argument("--minkowski", type=float, default=None, help="parallel-set radius R")
    geo.add_argument("--h", type=float, required=True, help="cell size")
    geo.add_argument("--align", action="append", default=[], help="alignment plane e1[,e2]:offset")
    geo.add_argument("--nonlinearity", default=None, help="kind:p1,p2,... for semilinear solves")
    geo.add_argument("--dump-matrices", action="store_true", help="write stiffness and mass dumps")

    e = sub.add_parser("eigs", parents=[common, geo], help="first eigenpairs")
    e.add_argument("--k", type=int, default=1)
    s = sub.add_parser("solve", parents=[common, geo], help="Dirichlet solve")
    s.add_argument("--kind", default="torsion", choices=["torsion", "poisson", "semilinear"])
    s.add_argument("--g", type=float, default=1.0, help="constant right-hand side for poisson")
    v = sub.add_parser("verify", parents=[common, geo], help="solve, then run one audit")
    v.add_argument("audit", choices=sorted(_AUDITS))
    v.add_argument("--kind", default="torsion", choices=["torsion", "poisson", "semilinear"])
    v.add_argument("--g", type=float, default=1.0)
    v.add_argument("--e", default=None, help="direction e1[,e2]")
    v.add_argument("--lambdas", default=None, help="comma-separated plane positions")
    v.add_argument("--center", default=None)
    v.add_argument("--V-inf", dest="V_inf", type=float, default=None)
    v.add_argument("--refine", action="store_true", help="hopf: also solve at h/2 and compare bands")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    fallback = Path(args.out or "out")
    try:
        if args.command == "run":
            try:
                text = args.config.read_text(encoding="utf-8")
            except OSError as exc:
                raise ValidationError("config", str(exc)) from exc
            cfg = parse_config(text)
        else:
            cfg = config_from_dict(_flags_to_dict(args))
    except (ParseError, ValidationError) as exc:
        return _config_error(fallback, exc)
    except (LogLapError, ValueError) as exc:
        return _config_error(fallback, ValidationError("config", str(exc)))
    code = run_experiment(cfg, args.out, args.threads, args.seed)
    print((Path(args.out or cfg.output) / "report.txt").read_text(encoding="utf-8"), end="")
    return code


if __name__ == "__main__":
    sys.exit(main())
