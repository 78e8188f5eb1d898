"""Run configuration: flat ``dotted.key = value`` text with ``#`` comments.

The format needs no structured-format dependency and diffs cleanly in CI.
Unknown keys are rejected with a line/column diagnostic.  ``parse_config_text``
and :meth:`RunConfig.to_text` round-trip exactly, which the run report relies
on for its config echo.
"""

from __future__ import annotations

import dataclasses

from . import maglaw as ml
from .energies import PhysicalParams
from .grid import DomainSpec
from .saddle import SaddleOptions


class ConfigError(Exception):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column


def _parse_bool(text: str) -> bool:
    if text.lower() in ("true", "yes", "1"):
        return True
    if text.lower() in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


# key -> (parser, default); None defaults mean "resolved at build time".
_KEYS: dict[str, tuple] = {
    "domain.dim": (int, 2),
    "domain.L": (lambda s: [float(x) for x in s.split(",")], [1.0]),
    "domain.n_horizontal": (lambda s: [int(x) for x in s.split(",")], [16]),
    "domain.n_z": (int, 32),
    "law.kind": (str, "linear"),
    "law.mu": (float, 2.0),
    "law.Ms": (float, 1.0),
    "law.gamma": (float, 1.0),
    "physics.b": (float, 1.0),
    "physics.tau": (float, 0.1),
    "physics.mu_drive": (lambda s: None if s == "auto" else float(s), None),
    "physics.p0_override": (lambda s: None if s == "auto" else float(s), None),
    "inner.tol": (float, 1e-10),
    "inner.max_iter": (int, 20000),
    "outer.tol": (float, 1e-7),
    "outer.max_iter": (int, 40000),
    "saddle.tol_gap": (float, 1e-3),
    "saddle.max_sweeps": (int, 40),
    "saddle.theta": (float, 0.5),
    "verify.n_probes": (int, 20),
    "verify.tol": (float, 1e-9),
    "run.deterministic": (_parse_bool, False),
    "run.seed": (int, 0),
    "run.threads": (int, 1),
    "output.dir": (str, "out"),
    "output.formats": (lambda s: [x.strip() for x in s.split(",") if x.strip()], ["csv", "png"]),
}

_FORMATS = {"csv", "grid", "png"}


@dataclasses.dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def replace(self, **updates) -> "RunConfig":
        vals = dict(self.values)
        for key, val in updates.items():
            if key not in _KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            vals[key] = val
        return RunConfig(vals)

    def to_text(self) -> str:
        lines = []
        for key in _KEYS:
            val = self.values[key]
            lines.append(f"{key} = {'auto' if val is None else _fmt(val)}")
        return "\n".join(lines) + "\n"

    # --- builders -----------------------------------------------------------
    def domain_spec(self) -> DomainSpec:
        return DomainSpec(dim=self.values["domain.dim"],
                          extents=tuple(self.values["domain.L"]),
                          n_horizontal=tuple(self.values["domain.n_horizontal"]),
                          n_z=self.values["domain.n_z"])

    def law(self) -> ml.MagnetizationLaw:
        kind = self.values["law.kind"]
        if kind == "linear":
            return ml.MagnetizationLaw.linear(self.values["law.mu"])
        if kind == "langevin":
            return ml.MagnetizationLaw.langevin(self.values["law.Ms"], self.values["law.gamma"])
        raise ConfigError(f"law.kind must be linear or langevin, got {kind!r}")

    def params(self) -> PhysicalParams:
        law = self.law()
        mu_drive = self.values["physics.mu_drive"]
        if mu_drive is None:
            mu_drive = float(ml.permeability(law, 1.0))
        p0 = self.values["physics.p0_override"]
        if p0 is None:
            p0 = ml.pressure_constant(law)
        try:
            return PhysicalParams(b=self.values["physics.b"], tau=self.values["physics.tau"],
                                  mu_drive=mu_drive, p0=p0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def saddle_options(self) -> SaddleOptions:
        return SaddleOptions(tol_gap=self.values["saddle.tol_gap"],
                             max_sweeps=self.values["saddle.max_sweeps"],
                             theta=self.values["saddle.theta"],
                             inner_tol=self.values["inner.tol"],
                             inner_max_iter=self.values["inner.max_iter"],
                             outer_tol=self.values["outer.tol"],
                             outer_max_iter=self.values["outer.max_iter"])

    def validate(self) -> None:
        try:
            spec = self.domain_spec()
            self.law()
            self.params()
        except (ValueError, ConfigError) as exc:
            raise ConfigError(str(exc)) from exc
        if spec.dim - 1 != len(self.values["domain.L"]):
            raise ConfigError("domain.L must have dim-1 entries")
        bad = set(self.values["output.formats"]) - _FORMATS
        if bad:
            raise ConfigError(f"unknown output formats {sorted(bad)}; known: {sorted(_FORMATS)}")
        for key in ("inner.tol", "outer.tol", "saddle.tol_gap", "verify.tol"):
            if not self.values[key] > 0.0:
                raise ConfigError(f"{key} must be positive")
        if not 0.0 < self.values["saddle.theta"] <= 1.0:
            raise ConfigError("saddle.theta must lie in (0, 1]")


def default_config() -> RunConfig:
    return RunConfig({key: default for key, (_, default) in _KEYS.items()})


def parse_config_text(text: str) -> RunConfig:
    values = {key: default for key, (_, default) in _KEYS.items()}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line.strip()!r}",
                              line=lineno, column=len(line))
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}", line=lineno,
                              column=raw.find(key) + 1)
        parser, _ = _KEYS[key]
        try:
            values[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", line=lineno,
                              column=raw.find("=") + 2)
    cfg = RunConfig(values)
    cfg.validate()
    return cfg


def parse_config_file(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)
