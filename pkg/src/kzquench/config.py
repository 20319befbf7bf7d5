"""Experiment configuration files (TOML) and their validation."""

from __future__ import annotations

import hashlib
import json
import re
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
import tomli
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from . import models
from .observables import KINDS


class ConfigError(ValueError):
    """Invalid experiment configuration; ``diagnostics`` holds one line per problem."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(self.diagnostics))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Section):
    family: Literal["ising_afm", "potts3_fm"]
    L: Optional[int] = None
    sizes: Optional[List[int]] = None
    J: float = 1.0
    preset: Optional[str] = None
    presets: Optional[List[str]] = None
    edge_fields: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]] = None
    topology: Literal["open", "periodic"] = "open"

    @model_validator(mode="after")
    def _check(self):
        if (self.L is None) == (self.sizes is None):
            raise ValueError("give exactly one of 'L' or 'sizes'")
        if self.presets is not None and (self.preset is not None or self.edge_fields is not None):
            raise ValueError("'presets' excludes 'preset' and 'edge_fields'")
        if self.preset is not None and self.edge_fields is not None:
            raise ValueError("give either 'preset' or 'edge_fields', not both")
        for p in (self.presets or []) + ([self.preset] if self.preset else []):
            if p not in models.BOUNDARY_PRESETS[self.family]:
                raise ValueError(f"unknown boundary preset {p!r} for {self.family}")
        return self

    def lengths(self):
        return list(self.sizes) if self.sizes else [self.L]

    def preset_names(self):
        if self.presets:
            return list(self.presets)
        return [self.preset or "custom"]

    def spec(self, L, preset):
        if preset != "custom":
            return models.ModelSpec.from_preset(self.family, L, preset, J=self.J)
        return models.ModelSpec(self.family, L, J=self.J, edge_fields=self.edge_fields,
                                topology=self.topology)


class ScheduleSection(_Section):
    h_start: float = 2.0
    h_end: Optional[float] = None
    endpoints: Optional[List[float]] = None
    rates: Optional[List[float]] = None
    rate_min: Optional[float] = None
    rate_max: Optional[float] = None
    n_rates: Optional[int] = None
    dt: float = 0.1
    measurement_stride: int = 0

    @model_validator(mode="after")
    def _check(self):
        if self.h_end is not None and self.endpoints is not None:
            raise ValueError("give either 'h_end' or 'endpoints'")
        generated = (self.rate_min, self.rate_max, self.n_rates)
        if self.rates is None and None in generated:
            raise ValueError("give 'rates' or all of 'rate_min', 'rate_max', 'n_rates'")
        if self.rates is not None and any(g is not None for g in generated):
            raise ValueError("'rates' excludes the log-spaced generator keys")
        if any(r <= 0 for r in self.rate_list()):
            raise ValueError("sweep rates must be positive")
        for h in self.endpoint_list():
            if not h < self.h_start:
                raise ValueError("endpoints must lie below h_start")
        return self

    def rate_list(self):
        if self.rates is not None:
            return sorted(float(r) for r in self.rates)
        return np.geomspace(self.rate_min, self.rate_max, self.n_rates).tolist()

    def endpoint_list(self):
        if self.endpoints is not None:
            return list(self.endpoints)
        return [0.0 if self.h_end is None else self.h_end]


class EngineSection(_Section):
    kind: Literal["mps", "exact"] = "mps"
    max_bond: Union[int, List[int]] = 300
    sv_cutoff: float = 1e-6
    dmrg_energy_tol: float = 1e-9
    dmrg_max_sweeps: int = 40

    @model_validator(mode="after")
    def _check(self):
        if any(D < 1 for D in self.bond_dims()):
            raise ValueError("max_bond must be positive")
        if not 0 <= self.sv_cutoff < 1:
            raise ValueError("sv_cutoff must lie in [0, 1)")
        return self

    def bond_dims(self):
        return list(self.max_bond) if isinstance(self.max_bond, list) else [self.max_bond]


class AnalysisSection(_Section):
    kinds: Optional[List[str]] = None
    fit: bool = True
    fractions: List[float] = [0.0, 0.45]
    min_points: int = 5
    slope_tol: float = 0.1
    window: Optional[Tuple[int, int]] = None


class OutputSection(_Section):
    directory: str = "results"
    snapshots: bool = False
    workers: Optional[int] = None


class ExperimentConfig(_Section):
    name: str = "experiment"
    model: ModelSection
    schedule: ScheduleSection
    engine: EngineSection = EngineSection()
    analysis: AnalysisSection = AnalysisSection()
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _check(self):
        fam = self.model.family
        for k in self.analysis.kinds or []:
            if k not in KINDS[fam]:
                raise ValueError(f"observable {k!r} not defined for {fam}")
        for L in self.model.lengths():
            for preset in self.model.preset_names():
                spec = self.model.spec(L, preset)
                if self.engine.kind == "exact" and spec.d**L > models.MAX_EXACT_DIM:
                    raise ValueError(f"exact engine refuses L={L}: dimension {spec.d**L} "
                                     f"exceeds {models.MAX_EXACT_DIM}")
                if self.engine.kind == "mps" and spec.topology == "periodic":
                    raise ValueError("periodic chains need engine.kind = 'exact'")
        return self

    def config_hash(self):
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _line_of(text, loc):
    """Best-effort line number of the innermost key named in ``loc``."""
    keys = [k for k in loc if isinstance(k, str)]
    if not keys:
        return None
    section = keys[0] if len(keys) > 1 else None
    in_section = section is None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if stripped.startswith("["):
            in_section = section is None or stripped.strip("[]").strip() == section
            continue
        if in_section and re.match(rf"{re.escape(keys[-1])}\s*=", stripped):
            return lineno
    return None


def parse_config(text, source="<config>"):
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError([f"{source}: {exc}"]) from None
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        diags = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            line = _line_of(text, err["loc"])
            where = f"{source}:{line}" if line else source
            diags.append(f"{where}: {loc}: {err['msg']}")
        raise ConfigError(diags) from None


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))
