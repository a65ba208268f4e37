"""JSON run configurations: parsing with line-anchored errors, building, running."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from . import verify as vf
from .ensemble import (
    Ensemble,
    HamiltonianSet,
    ensemble_from_json,
    perturbed_hamiltonians,
    random_hermitian,
    sample_haar,
    sample_perturbed,
    sample_with_diameter,
)
from .integrate import METHODS, IntegratorConfig, TrajectoryRecord, integrate

__all__ = [
    "CHECKS",
    "ConfigError",
    "RunConfig",
    "RunResult",
    "parse_config",
    "load_config",
    "resolve_config_path",
    "run_config",
]

CHECKS = ("diameter_decay", "cubic_envelope", "practical_sync", "equilibration", "commutator_limits")
INIT_TYPES = ("haar", "perturbed", "file")
HAMILTONIAN_TYPES = ("none", "shared", "perturbed", "file")
INTEGRATOR_DEFAULTS = {
    "method": "lie_midpoint",
    "dt": 1e-2,
    "t_final": 1.0,
    "record_every": 1,
    "retract_every": 1,
    "unitarity_tol": 1e-8,
    "early_exit": False,
}
OUTPUT_DEFAULTS = {"csv": "trajectory.csv", "report": "report.json", "snapshot": None}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` points at the offending field when known."""

    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        self.source = source
        self.line = line
        self.detail = message
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


def _locate(text: str, keys: list[str]) -> int | None:
    """Line of the last key in ``keys``, searching each key after the previous one."""
    pos = 0
    found = None
    for key in keys:
        i = text.find(f'"{key}"', pos)
        if i < 0:
            break
        pos = found = i
    if found is None:
        return None
    return text.count("\n", 0, found) + 1


class _Checker:
    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def fail(self, where: str, message: str):
        keys = [k for k in where.split(".") if k]
        raise ConfigError(f"{where}: {message}", self.source, _locate(self.text, keys))

    def section(self, data: dict, name: str, required: bool = True) -> dict:
        if name not in data:
            if required:
                self.fail(name, "missing section")
            return {}
        if not isinstance(data[name], dict):
            self.fail(name, "must be an object")
        return data[name]

    def unknown(self, data: dict, allowed, where: str):
        for key in data:
            if key not in allowed:
                self.fail(f"{where}.{key}" if where else key, "unknown field")

    def number(self, data, key, where, default=None, positive=False, nonneg=False):
        if key not in data:
            if default is None:
                self.fail(f"{where}.{key}", "missing")
            return default
        v = data[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
            self.fail(f"{where}.{key}", "must be a finite number")
        if positive and not v > 0:
            self.fail(f"{where}.{key}", "must be positive")
        if nonneg and v < 0:
            self.fail(f"{where}.{key}", "must be nonnegative")
        return float(v)

    def integer(self, data, key, where, default=None, minimum=None):
        if key not in data:
            if default is None:
                self.fail(f"{where}.{key}", "missing")
            return default
        v = data[key]
        if isinstance(v, bool) or not isinstance(v, int):
            self.fail(f"{where}.{key}", "must be an integer")
        if minimum is not None and v < minimum:
            self.fail(f"{where}.{key}", f"must be >= {minimum}")
        return v

    def choice(self, data, key, where, options, default=None):
        v = data.get(key, default)
        if v not in options:
            self.fail(f"{where}.{key}", f"must be one of {', '.join(options)}")
        return v


@dataclass
class RunConfig:
    """Normalized configuration; every default is filled in.

    ``base_dir`` anchors relative input paths (the config file's directory).
    """

    model: dict
    init: dict
    integrator: dict
    outputs: dict = field(default_factory=lambda: dict(OUTPUT_DEFAULTS))
    checks: list = field(default_factory=list)
    base_dir: Path = field(default=Path("."), compare=False)

    def to_dict(self) -> dict:
        return {
            "model": copy.deepcopy(self.model),
            "init": copy.deepcopy(self.init),
            "integrator": dict(self.integrator),
            "outputs": dict(self.outputs),
            "checks": list(self.checks),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def with_seed(self, seed: int) -> RunConfig:
        """Copy with every seed replaced (used by the LOHE_LAB_SEED override)."""
        out = copy.deepcopy(self)
        if "seed" in out.init:
            out.init["seed"] = seed
        ham = out.model["hamiltonian"]
        for key in ("seed", "base_seed"):
            if key in ham:
                ham[key] = seed
        return out

    # -- builders ------------------------------------------------------------

    def _path(self, p: str) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def build_initial(self) -> Ensemble:
        ini = self.init
        if ini["type"] == "file":
            E = ensemble_from_json(json.loads(self._path(ini["path"]).read_text(encoding="utf-8")))
            if ini.get("d") not in (None, E.dim) or ini.get("N") not in (None, E.size):
                raise ConfigError(f"init: file holds N={E.size}, d={E.dim}")
            return E
        d, N = ini["d"], ini["N"]
        if ini["type"] == "haar":
            return sample_haar(d, N, ini["seed"])
        U0 = np.eye(d, dtype=np.complex128)
        if "diameter_sq" in ini:
            return sample_with_diameter(U0, ini["diameter_sq"], d, N, ini["seed"])
        return sample_perturbed(U0, ini["epsilon"], d, N, ini["seed"])

    def build_hamiltonians(self, d: int, N: int) -> HamiltonianSet | None:
        ham = self.model["hamiltonian"]
        kind = ham["type"]
        if kind == "none":
            return None
        if kind == "shared":
            return HamiltonianSet(random_hermitian(d, ham["seed"], ham["norm"]))
        if kind == "perturbed":
            H0 = random_hermitian(d, ham["base_seed"], ham["base_norm"])
            return perturbed_hamiltonians(H0, ham["target_DH"], N, ham["seed"])
        arr = np.asarray(json.loads(self._path(ham["path"]).read_text(encoding="utf-8")), dtype=float)
        if arr.shape[-1] != 2:
            raise ConfigError("model.hamiltonian: file entries must be [re, im] pairs")
        return HamiltonianSet(arr[..., 0] + 1j * arr[..., 1])

    def build_model(self, d: int, N: int) -> dyn.ModelSpec:
        m = self.model
        return dyn.ModelSpec(m["kind"], tuple(m["kappas"]), m["m"], self.build_hamiltonians(d, N))

    def build_integrator(self) -> IntegratorConfig:
        return IntegratorConfig(identities=True, **self.integrator)


def parse_config(text: str, source: str = "<config>", base_dir: Path | str = ".") -> RunConfig:
    """Parse and validate a run configuration held in ``text``."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", source, exc.lineno) from None
    ck = _Checker(text, source)
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object", source, 1)
    ck.unknown(data, ("model", "init", "integrator", "outputs", "checks"), "")

    # model
    m = ck.section(data, "model")
    ck.unknown(m, ("kind", "m", "kappas", "hamiltonian"), "model")
    kind = ck.choice(m, "kind", "model", dyn.FLOW_KINDS)
    kappas = m.get("kappas")
    if not isinstance(kappas, list) or not kappas:
        ck.fail("model.kappas", "must be a nonempty list of numbers")
    for k in kappas:
        if isinstance(k, bool) or not isinstance(k, (int, float)) or not np.isfinite(k):
            ck.fail("model.kappas", "must be a nonempty list of numbers")
    kappas = [float(k) for k in kappas]
    order = ck.integer(m, "m", "model", default=1, minimum=1)
    if kind in ("cubic", "monomial") and len(kappas) != 1:
        ck.fail("model.kappas", f"{kind} flow takes exactly one kappa")
    if kind == "cubic":
        order = 1
    elif kind in ("polynomial", "dyadic"):
        order = len(kappas)
    ham_in = ck.section(m, "hamiltonian", required=False) if "hamiltonian" in m else {"type": "none"}
    htype = ck.choice(ham_in, "type", "model.hamiltonian", HAMILTONIAN_TYPES, default="none")
    ham = {"type": htype}
    where = "model.hamiltonian"
    if htype == "none":
        ck.unknown(ham_in, ("type",), where)
    elif htype == "shared":
        ck.unknown(ham_in, ("type", "seed", "norm"), where)
        ham["seed"] = ck.integer(ham_in, "seed", where, minimum=0)
        ham["norm"] = ck.number(ham_in, "norm", where, default=1.0, nonneg=True)
    elif htype == "perturbed":
        ck.unknown(ham_in, ("type", "seed", "target_DH", "base_seed", "base_norm"), where)
        ham["seed"] = ck.integer(ham_in, "seed", where, minimum=0)
        ham["target_DH"] = ck.number(ham_in, "target_DH", where, nonneg=True)
        ham["base_seed"] = ck.integer(ham_in, "base_seed", where, default=0, minimum=0)
        ham["base_norm"] = ck.number(ham_in, "base_norm", where, default=1.0, nonneg=True)
    else:
        ck.unknown(ham_in, ("type", "path"), where)
        if not isinstance(ham_in.get("path"), str):
            ck.fail(f"{where}.path", "must be a string")
        ham["path"] = ham_in["path"]
    model = {"kind": kind, "m": order, "kappas": kappas, "hamiltonian": ham}

    # init
    i_in = ck.section(data, "init")
    itype = ck.choice(i_in, "type", "init", INIT_TYPES)
    init = {"type": itype}
    if itype == "file":
        ck.unknown(i_in, ("type", "path", "d", "N"), "init")
        if not isinstance(i_in.get("path"), str):
            ck.fail("init.path", "must be a string")
        init["path"] = i_in["path"]
        for key in ("d", "N"):
            if key in i_in:
                init[key] = ck.integer(i_in, key, "init", minimum=1)
    else:
        allowed = ("type", "d", "N", "seed")
        if itype == "perturbed":
            allowed += ("epsilon", "diameter_sq")
        ck.unknown(i_in, allowed, "init")
        init["d"] = ck.integer(i_in, "d", "init", minimum=1)
        init["N"] = ck.integer(i_in, "N", "init", minimum=1)
        init["seed"] = ck.integer(i_in, "seed", "init", minimum=0)
        if itype == "perturbed":
            if ("epsilon" in i_in) == ("diameter_sq" in i_in):
                ck.fail("init", "perturbed init takes exactly one of epsilon, diameter_sq")
            key = "epsilon" if "epsilon" in i_in else "diameter_sq"
            init[key] = ck.number(i_in, key, "init", nonneg=True)

    # integrator
    g_in = ck.section(data, "integrator")
    ck.unknown(g_in, INTEGRATOR_DEFAULTS, "integrator")
    integ = {
        "method": ck.choice(g_in, "method", "integrator", METHODS, default="lie_midpoint"),
        "dt": ck.number(g_in, "dt", "integrator", default=INTEGRATOR_DEFAULTS["dt"], positive=True),
        "t_final": ck.number(g_in, "t_final", "integrator", default=1.0, positive=True),
        "record_every": ck.integer(g_in, "record_every", "integrator", default=1, minimum=1),
        "retract_every": ck.integer(g_in, "retract_every", "integrator", default=1, minimum=1),
        "unitarity_tol": ck.number(g_in, "unitarity_tol", "integrator", default=1e-8, positive=True),
        "early_exit": bool(g_in.get("early_exit", False)),
    }
    if not isinstance(g_in.get("early_exit", False), bool):
        ck.fail("integrator.early_exit", "must be true or false")
    try:
        IntegratorConfig(**integ)
    except ValueError as exc:
        ck.fail("integrator.t_final", str(exc))

    # outputs and checks
    o_in = ck.section(data, "outputs", required=False)
    ck.unknown(o_in, OUTPUT_DEFAULTS, "outputs")
    outputs = dict(OUTPUT_DEFAULTS)
    for key in OUTPUT_DEFAULTS:
        if key in o_in:
            if o_in[key] is not None and not isinstance(o_in[key], str):
                ck.fail(f"outputs.{key}", "must be a string or null")
            outputs[key] = o_in[key]
    checks = data.get("checks", [])
    if not isinstance(checks, list):
        ck.fail("checks", "must be a list")
    for c in checks:
        if c not in CHECKS:
            ck.fail("checks", f"unknown check {c!r}; choose from {', '.join(CHECKS)}")

    cfg = RunConfig(model, init, integ, outputs, list(checks), Path(base_dir))
    for where, sec in (("init.path", init), ("model.hamiltonian.path", ham)):
        if "path" in sec and not cfg._path(sec["path"]).is_file():
            ck.fail(where, f"file not found: {sec['path']}")
    try:
        dyn.ModelSpec(kind, tuple(kappas), order)
    except ValueError as exc:
        ck.fail("model", str(exc))
    return cfg


def resolve_config_path(name: str | Path) -> Path:
    """A real file path, or the name of a bundled config (with or without .json)."""
    p = Path(name)
    if p.exists():
        return p
    bundled = resources.files("lohe_lab") / "configs"
    for candidate in (str(name), f"{name}.json"):
        ref = bundled / candidate
        if "/" not in candidate and ref.is_file():
            return Path(str(ref))
    raise FileNotFoundError(f"no such config: {name}")


def load_config(name: str | Path) -> RunConfig:
    path = resolve_config_path(name)
    return parse_config(path.read_text(encoding="utf-8"), str(path), path.parent)


@dataclass
class RunResult:
    trajectory: TrajectoryRecord
    verdicts: list = field(default_factory=list)
    refusals: dict = field(default_factory=dict)
    by_check: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)


def _run_check(name: str, traj: TrajectoryRecord) -> list[vf.Verdict]:
    M = traj.model
    if name == "diameter_decay":
        return [vf.check_diameter_decay(traj, vf.EnvelopeParams.for_trajectory(traj))]
    if name == "practical_sync":
        return [vf.check_practical_sync(traj, vf.EnvelopeParams.for_trajectory(traj))]
    if name == "cubic_envelope":
        if M.kind != "cubic" and not (M.kind in ("monomial", "polynomial") and M.coefficients[1:] == ()):
            raise vf.PreconditionError("the cubic envelope applies to the cubic flow only")
        if not M.homogeneous:
            raise vf.PreconditionError("the cubic envelope needs a homogeneous run")
        return [vf.check_cubic_envelope(traj, M.kappas[0])]
    if name == "equilibration":
        return [vf.check_equilibration(traj)]
    return vf.check_commutator_limits(traj, M)


def run_config(cfg: RunConfig) -> RunResult:
    """Integrate the configured run and evaluate its checks.

    A check whose hypotheses do not hold is recorded in ``refusals`` instead of
    producing a verdict.
    """
    E0 = cfg.build_initial()
    model = cfg.build_model(E0.dim, E0.size)
    traj = integrate(E0, model, cfg.build_integrator())
    result = RunResult(traj)
    for name in cfg.checks:
        try:
            found = _run_check(name, traj)
            result.by_check[name] = found
            result.verdicts += found
        except vf.PreconditionError as exc:
            result.refusals[name] = str(exc)
    return result
