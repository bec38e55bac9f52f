"""Configured, reproducible runs of every experiment verb.

A run is described by an :class:`ExperimentConfig`.  Its hash (sha256 of
the canonical JSON of every field except the output directory) is written
into each output, so equal hashes and equal library versions give
byte-identical CSV and JSON payloads.  Only ``manifest.json`` carries the
wall time.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from . import io as gio
from .gbm_sim import (
    CONTROL_KINDS,
    VolatilityBand,
    ito_lift,
    quadratic_variation,
    sample_control,
    sample_gbm_path,
    simulate_ensemble,
    stratonovich_lift,
)
from .rough_core import GridPath, TimeGrid, chen_defect, level2_function, sample_triples

VERBS = ("simulate", "lift", "integrate", "integrals", "gexp", "roughness", "norris",
         "tails", "acceptance")
OUTPUT_ENV = "GROUGH_OUTPUT_DIR"
DEFAULT_OUTPUT = "grough_out"


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` maps field names to messages."""

    def __init__(self, errors: dict[str, str]):
        self.errors = dict(errors)
        super().__init__("invalid config: " + "; ".join(f"{k}: {v}" for k, v in errors.items()))


class AcceptanceFailure(RuntimeError):
    def __init__(self, manifest: "RunManifest", failed: list[int]):
        self.manifest = manifest
        self.failed = failed
        super().__init__(f"acceptance criteria failed: {failed}")


# name -> (phi, phi', phi''), vectorised over arrays
PAYOFFS: dict[str, tuple[Callable, Callable, Callable]] = {
    "identity": (lambda x: x, lambda x: np.ones_like(x), lambda x: np.zeros_like(x)),
    "square": (lambda x: x ** 2, lambda x: 2 * x, lambda x: 2 * np.ones_like(x)),
    "neg_square": (lambda x: -x ** 2, lambda x: -2 * x, lambda x: -2 * np.ones_like(x)),
    "cube": (lambda x: x ** 3, lambda x: 3 * x ** 2, lambda x: 6 * x),
    "quartic": (lambda x: x ** 4, lambda x: 4 * x ** 3, lambda x: 12 * x ** 2),
    "abs": (np.abs, np.sign, lambda x: np.zeros_like(x)),
    "call": (lambda x: np.maximum(x, 0.0), lambda x: (x > 0).astype(float),
             lambda x: np.zeros_like(x)),
    "sin": (np.sin, np.cos, lambda x: -np.sin(x)),
}


@dataclass
class ExperimentConfig:
    """Everything a run depends on.  ``params`` holds verb-specific settings."""

    verb: str
    sigma_low: float = 0.5
    sigma_high: float = 1.0
    control_levels: int = 2
    dim: int = 1
    T: float = 1.0
    n_steps: int = 2 ** 12
    alpha: float = 0.4
    theta: float = 0.55
    seed: int = 0
    n_paths: int = 1
    kind: str = "piecewise_constant"
    params: dict = field(default_factory=dict)
    output_dir: str | None = None

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError({k: "unknown field" for k in unknown})
        if "verb" not in data:
            raise ConfigError({"verb": "missing"})
        return cls(**data)

    @classmethod
    def from_file(cls, file) -> "ExperimentConfig":
        try:
            data = json.loads(Path(file).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError({"config": f"cannot read {file}: {exc}"}) from None
        if not isinstance(data, dict):
            raise ConfigError({"config": "top level must be a JSON object"})
        return cls.from_mapping(data)

    def hashed_fields(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("output_dir")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(gio.to_jsonable(self.hashed_fields()), sort_keys=True,
                          separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def band(self) -> VolatilityBand:
        if self.dim == 1:
            return VolatilityBand(self.sigma_low, self.sigma_high, self.control_levels)
        return VolatilityBand.isotropic(self.sigma_low, self.sigma_high, self.dim,
                                        self.control_levels)

    def grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.n_steps)

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)

    def validate(self) -> None:
        err: dict[str, str] = {}
        if self.verb not in VERBS:
            err["verb"] = f"must be one of {', '.join(VERBS)}"
        if not (isinstance(self.sigma_low, (int, float)) and isinstance(self.sigma_high, (int, float))
                and 0 < self.sigma_low <= self.sigma_high):
            err["sigma_low"] = "need 0 < sigma_low <= sigma_high"
        if not (isinstance(self.control_levels, int) and self.control_levels >= 2):
            err["control_levels"] = "must be an integer >= 2"
        if not (isinstance(self.dim, int) and self.dim >= 1):
            err["dim"] = "must be a positive integer"
        if not (isinstance(self.T, (int, float)) and self.T > 0):
            err["T"] = "must be positive"
        if not (isinstance(self.n_steps, int) and self.n_steps >= 2):
            err["n_steps"] = "must be an integer >= 2"
        if not (isinstance(self.alpha, (int, float)) and 1 / 3 < self.alpha < 1 / 2):
            err["alpha"] = "must lie in (1/3, 1/2)"
        if not (isinstance(self.theta, (int, float)) and 0 < self.theta < 1):
            err["theta"] = "must lie in (0, 1)"
        if not (isinstance(self.seed, int) and self.seed >= 0):
            err["seed"] = "must be a non-negative integer"
        if not (isinstance(self.n_paths, int) and self.n_paths >= 1):
            err["n_paths"] = "must be a positive integer"
        if self.kind not in CONTROL_KINDS or self.kind == "feedback_bang_bang":
            err["kind"] = "must be constant or piecewise_constant"
        if not isinstance(self.params, dict):
            err["params"] = "must be a mapping"
        elif not err:
            err.update(_VERB_CHECKS.get(self.verb, lambda c: {})(self))
        if err:
            raise ConfigError(err)


def _is_pow2_depth_ok(n_steps: int, n_max: int) -> bool:
    return n_max >= 1 and n_steps % (2 ** n_max) == 0


def _payoff_check(c: ExperimentConfig) -> dict:
    name = c.params.get("phi", "square")
    return {} if name in PAYOFFS else {"params.phi": f"must be one of {', '.join(PAYOFFS)}"}


def _check_gexp(c):
    err = _payoff_check(c)
    if c.params.get("method", "pde") not in ("pde", "mc"):
        err["params.method"] = "must be pde or mc"
    if c.params.get("method", "pde") == "pde" and c.dim != 1:
        err["dim"] = "the PDE route supports d = 1 only"
    if c.params.get("method") == "mc" and c.n_paths < 100:
        err["n_paths"] = "insufficient sample: need at least 100 paths for mc"
    return err


def _check_roughness(c):
    n_max = c.params.get("n_max", 8)
    if not _is_pow2_depth_ok(c.n_steps, n_max):
        return {"params.n_max": f"2^n_max must divide n_steps={c.n_steps}"}
    return {}


def _check_norris(c):
    err = _check_roughness(c)
    if c.theta >= 2 * c.alpha:
        err["theta"] = "hypothesis violated: theta must be below 2*alpha"
    return err


def _check_tails(c):
    err = _check_roughness(c)
    eps = c.params.get("eps_grid", [])
    if not eps:
        err["params.eps_grid"] = "empty eps_grid"
    elif any(e <= 0 or e >= 1 / (2 * c.T ** c.theta) for e in eps):
        err["params.eps_grid"] = f"values must lie in (0, {1 / (2 * c.T ** c.theta):g})"
    return err


def _check_integrate(c):
    err = _payoff_check(c)
    if c.dim != 1:
        err["dim"] = "integrate supports d = 1 integrands F(B)"
    return err


_VERB_CHECKS = {"gexp": _check_gexp, "roughness": _check_roughness, "norris": _check_norris,
                "tails": _check_tails, "integrate": _check_integrate,
                "integrals": _check_integrate}


@dataclass
class RunManifest:
    verb: str
    config_hash: str
    version: str
    wall_time: float
    outputs: dict[str, str]
    output_dir: str
    summary: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class _Writer:
    """Collects outputs of one run; every JSON payload is stamped with the hash."""

    def __init__(self, root: Path, cfg_hash: str):
        self.root = root
        self.hash = cfg_hash
        self.files: list[Path] = []

    def csv(self, name: str, header, rows) -> None:
        self.files.append(gio.write_csv(rows, header, self.root / name))

    def path(self, name: str, path: GridPath) -> None:
        self.files.append(gio.write_path_csv(path, self.root / name))

    def level2(self, name: str, rp) -> None:
        self.files.append(gio.write_level2_csv(rp.level2, self.root / name))

    def json(self, name: str, payload: dict) -> None:
        body = dict(payload, config_hash=self.hash, version=__version__)
        self.files.append(gio.write_json(body, self.root / name))


def _one_path(c: ExperimentConfig, index: int = 0) -> GridPath:
    ctrl = sample_control(c.band(), c.kind, c.seed, c.grid(), path_index=index)
    return sample_gbm_path(ctrl, c.seed, index).b


def _run_simulate(c: ExperimentConfig, w: _Writer) -> dict:
    grid = c.grid()
    finals = []
    for idx, bs in simulate_ensemble(c.band(), grid, c.n_paths, c.seed, kind=c.kind):
        for i, b in zip(idx, bs):
            gp = GridPath(grid, b)
            w.path(f"paths/path_{i:05d}.csv", gp)
            finals.append([int(i), *b[-1], float(quadratic_variation(gp).qv[-1].trace())])
    w.csv("terminal.csv", ["path_index"] + [f"b{k + 1}" for k in range(c.dim)] + ["qv_trace"],
          finals)
    summary = {"n_paths": c.n_paths, "n_steps": c.n_steps}
    w.json("simulate.json", summary)
    return summary


def _run_lift(c: ExperimentConfig, w: _Writer) -> dict:
    src = c.params.get("path_file")
    b = gio.load_path_csv(src) if src else _one_path(c)
    ito = ito_lift(b)
    strat = stratonovich_lift(ito, quadratic_variation(b))
    triples = sample_triples(b.n_steps, int(c.params.get("n_triples", 200)), c.seed)
    w.path("path.csv", b)
    w.level2("level2_ito.csv", ito)
    w.level2("level2_stratonovich.csv", strat)
    summary = {
        "chen_defect_ito": chen_defect(b, level2_function(ito), triples),
        "chen_defect_stratonovich": chen_defect(b, level2_function(strat), triples),
        "n_triples": len(triples), "sup_norm": b.sup_norm()}
    w.json("lift.json", summary)
    return summary


def _run_integrate(c: ExperimentConfig, w: _Writer) -> dict:
    from .rough_integral import (controlled_lift_smooth, dyadic_partitions,
                                 ito_vs_rough_equivalence)
    b = _one_path(c)
    rp = ito_lift(b)
    f, df, _ = PAYOFFS[c.params.get("phi", "square")]
    cp = controlled_lift_smooth(f, df, rp)
    parts = dyadic_partitions(c.n_steps, c.params.get("levels"))
    rep = ito_vs_rough_equivalence(cp, rp, parts)
    w.csv("equivalence.csv", ["modulus", "value", "difference"],
          zip(rep.moduli, rep.rough_values[:, 0], rep.differences))
    summary = {"ito_value": rep.ito_value, "fitted_order": rep.fitted_order,
               "phi": c.params.get("phi", "square")}
    w.json("integrate.json", summary)
    return summary


def _run_integrals(c: ExperimentConfig, w: _Writer) -> dict:
    from .stochastic_integrals import (cross_variation, ito_integral, midpoint_convergence,
                                       stratonovich_integral)
    b = _one_path(c)
    f, _, _ = PAYOFFS[c.params.get("phi", "square")]
    y = GridPath(b.grid, f(b.values))
    ito = ito_integral(y, b).values[:, 0]
    strat = stratonovich_integral(y, b).values[:, 0]
    cv = cross_variation(y, b).values[:, 0, 0]
    w.csv("integrals.csv", ["t", "ito", "stratonovich", "cross_variation"],
          zip(b.grid.times, ito, strat, cv))
    rep = midpoint_convergence(y, b)
    w.csv("midpoint.csv", ["modulus", "gap"], zip(rep.moduli, rep.gaps))
    summary = {"ito": ito[-1], "stratonovich": strat[-1], "midpoint_order": rep.fitted_order,
               "midpoint_exact": rep.exact}
    w.json("integrals.json", summary)
    return summary


def _run_gexp(c: ExperimentConfig, w: _Writer) -> dict:
    from .g_expectation import lower_expectation, upper_expectation
    name = c.params.get("phi", "square")
    phi = PAYOFFS[name][0]
    method = c.params.get("method", "pde")
    kw: dict[str, Any] = {}
    if method == "pde":
        kw.update({k: c.params[k] for k in ("nx", "dt", "L") if k in c.params})
    else:
        kw.update(n_paths=c.n_paths, seed=c.seed, n_steps=c.params.get("mc_steps", 64))
    up = upper_expectation(phi, c.band(), method, c.T, **kw)
    lo = lower_expectation(phi, c.band(), method, c.T, **kw)
    summary = {"phi": name, "method": method, "t": c.T, "value": up.value,
               "ci_halfwidth": up.ci_halfwidth, "lower_value": lo.value,
               "lower_ci_halfwidth": lo.ci_halfwidth, "diagnostics": up.diagnostics}
    w.json("gexp.json", summary)
    return {k: summary[k] for k in ("phi", "method", "value", "lower_value")}


def _run_roughness(c: ExperimentConfig, w: _Writer) -> dict:
    from .roughness_norris import dyadic_roughness
    n_max = int(c.params.get("n_max", 8))
    grid = c.grid()
    rows, lows = [], []
    for idx, bs in simulate_ensemble(c.band(), grid, c.n_paths, c.seed, kind=c.kind):
        for i, b in zip(idx, bs):
            r = dyadic_roughness(GridPath(grid, b), c.theta, n_max, c.params.get("mesh"))
            rows.append([int(i), r.D_theta, r.L_theta_lower, *r.per_level_minima])
            lows.append(r.L_theta_lower)
    w.csv("roughness.csv", ["path_index", "D_theta", "L_theta_lower"]
          + [f"level_{n}" for n in range(1, n_max + 1)], rows)
    summary = {"theta": c.theta, "n_max": n_max, "min_L_lower": min(lows),
               "fraction_positive": float(np.mean(np.array(lows) > 0))}
    w.json("roughness.json", summary)
    return summary


def _run_norris(c: ExperimentConfig, w: _Writer) -> dict:
    from .rough_integral import identity_integrand
    from .roughness_norris import (dyadic_roughness, norris_diagnostic, norris_scaling_fit,
                                   scaling_family, uniqueness_check)
    b = _one_path(c)
    rp = ito_lift(b)
    n_max = int(c.params.get("n_max", 8))
    rough = dyadic_roughness(b, c.theta, n_max)
    y = identity_integrand(rp)
    z = GridPath(b.grid, np.ones((c.n_steps + 1, 1)))
    lams = c.params.get("lambdas", [1.0, 1e-1, 1e-2, 1e-3, 1e-4])
    reps = [norris_diagnostic(yy, zz, rp, c.theta, c.alpha, roughness=rough)
            for yy, zz in scaling_family(y, z, lams)]
    fit = norris_scaling_fit(reps)
    w.csv("norris.csv", ["lambda", "sup_I", "sup_Y", "sup_Z", "R"],
          [[lam, r.sup_norm_I, r.sup_norm_Y, r.sup_norm_Z, r.R_quantity]
           for lam, r in zip(lams, reps)])
    pert = float(c.params.get("perturbation", 1e-6))
    u = uniqueness_check(y, z, y + y.scaled(pert), z.scaled(1 + pert), rp, c.theta, c.alpha,
                         fit=fit, n_max=n_max)
    summary = {"fit": dataclasses.asdict(fit), "uniqueness": {
        "status": u.status, "deviation": u.deviation, "integral_gap": u.integral_gap,
        "tolerance": u.tolerance}, "L_theta_lower": rough.L_theta_lower}
    w.json("norris.json", summary)
    return summary


def _run_tails(c: ExperimentConfig, w: _Writer) -> dict:
    from .roughness_norris import exponential_tail_check, roughness_tail_experiment
    eps = np.asarray(c.params["eps_grid"], dtype=float)
    tab = roughness_tail_experiment(c.band(), c.theta, eps, c.n_paths, c.grid(),
                                    int(c.params.get("n_max", 8)), c.seed)
    w.csv("roughness_tail.csv", ["eps", "frequency"], zip(tab.eps, tab.frequency))
    exp_eps = np.asarray(c.params.get("exp_eps_grid", [0.1, 0.2, 0.3, 0.4, 0.5]), dtype=float)
    ex = exponential_tail_check(c.band(), exp_eps, c.n_paths, c.grid(), c.seed)
    rows = []
    for li, law in enumerate(ex.laws):
        for k, e in enumerate(ex.eps):
            rows.append([json.dumps(law), e, ex.per_law[li, k], ex.ci_halfwidth[li, k],
                         ex.bound[k], ex.reference_bound[k], bool(ex.violations[li, k])])
    w.csv("exponential_tail.csv", ["law", "eps", "frequency", "ci_halfwidth", "bound",
                                   "reference_bound", "violation"], rows)
    summary = {"tail_slope": tab.slope, "tail_r2": tab.r2, "tail_usable_points": tab.n_usable,
               "exponential_bound_passed": ex.passed}
    w.json("tails.json", summary)
    return summary


def _run_acceptance(c: ExperimentConfig, w: _Writer) -> dict:
    from .acceptance import run_criteria
    only = c.params.get("criteria")
    results = run_criteria(only, scale=c.params.get("scale", "desk"))
    w.csv("acceptance.csv", ["criterion", "name", "passed", "seconds", "detail"],
          [[r.number, r.name, r.passed, r.seconds, r.detail] for r in results])
    summary = {"passed": [r.number for r in results if r.passed],
               "failed": [r.number for r in results if not r.passed]}
    w.json("acceptance.json", dict(summary, results=[r.as_dict() for r in results]))
    return summary


_DISPATCH = {"simulate": _run_simulate, "lift": _run_lift, "integrate": _run_integrate,
             "integrals": _run_integrals, "gexp": _run_gexp, "roughness": _run_roughness,
             "norris": _run_norris, "tails": _run_tails, "acceptance": _run_acceptance}


def run(config: ExperimentConfig) -> RunManifest:
    """Validate, dispatch, write outputs plus ``manifest.json`` and return the manifest.

    Raises :class:`ConfigError` for invalid configs, :class:`AcceptanceFailure`
    when the acceptance verb finds failing criteria, and lets numerical errors
    from the modules propagate.
    """
    config.validate()
    root = config.resolved_output_dir()
    root.mkdir(parents=True, exist_ok=True)
    cfg_hash = config.config_hash()
    writer = _Writer(root, cfg_hash)
    start = time.perf_counter()
    summary = _DISPATCH[config.verb](config, writer)
    writer.json("config.json", {"config": config.hashed_fields()})
    wall = time.perf_counter() - start
    outputs = {str(p.relative_to(root)): sha256_file(p) for p in sorted(writer.files)}
    manifest = RunManifest(config.verb, cfg_hash, __version__, wall, outputs, str(root),
                           gio.to_jsonable(summary))
    gio.write_json(manifest.as_dict(), root / "manifest.json")
    if config.verb == "acceptance" and summary["failed"]:
        raise AcceptanceFailure(manifest, summary["failed"])
    return manifest
