"""INI run configuration: parsing, validation and object construction.

Every key is checked against its owning module before a run starts and
unknown sections or keys are rejected.  ``#`` starts a comment.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, MagnlsError
from .field import ComplexField, Grid, l2_norm
from .nonlinearity import NonlinearitySpec
from .potential import PotentialSpec
from .propagator import SolverConfig


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    return tuple(float(p) for p in text.replace(";", ",").split(",") if p.strip())


def _ints(text):
    return tuple(int(p) for p in text.replace(";", ",").split(",") if p.strip())


def _opt_float(text):
    return None if text.strip().lower() in ("none", "off", "") else float(text)


def _int(text):
    return int(text.strip())


# section -> key -> (parser, default)
SCHEMA = {
    "grid": {
        "dim": (_int, 2),
        "n": (_int, 128),
        "length": (float, 20.0),
    },
    "potential": {
        "kind": (str, "zero"),
        "b0": (float, 0.0),
        "bump_amplitude": (float, 0.0),
        "bump_width": (float, 1.0),
        "bump_center": (_floats, (0.0, 0.0)),
        "modulation": (str, "none"),
        "mod_amplitude": (float, 0.0),
        "mod_frequency": (float, 1.0),
        "epsilon_decay": (float, 1.0),
        "gauge_amplitude": (float, 0.0),
        "gauge_width": (float, 1.0),
        "gauge_center": (_floats, (0.0, 0.0)),
        "audit_bound": (float, 10.0),
        "audit_t0": (float, 0.0),
        "audit_t1": (float, 1.0),
    },
    "nonlinearity": {
        "g": (str, "power"),
        "sigma": (float, 1.0),
        "sign": (_int, 1),
        "gamma": (float, 0.0),
    },
    "solver": {
        "b": (float, 1.0),
        "dt": (float, 1e-3),
        "t_end": (float, 0.1),
        "scheme": (str, "strang"),
        "cn_tolerance": (float, 1e-10),
        "cn_max_iterations": (_int, 500),
        "ladder": (str, "none"),
        "m": (_int, 0),
        "n_pieces": (_int, 0),
        "snapshot_stride": (_int, 1),
        "linear_solver": (str, "auto"),
        "blowup_factor": (float, 1e3),
        "leakage_tol": (_opt_float, 1e-6),
        "initial_leakage_tol": (_opt_float, 1e-10),
    },
    "initial": {
        "profile": (str, "gaussian"),
        "amplitude": (float, 1.0),
        "width": (float, 1.0),
        "center": (_floats, (0.0, 0.0)),
        "wavenumber": (_floats, (0.0, 0.0)),
        "l2_norm": (_opt_float, None),
    },
    "wkb": {
        "t_end": (float, 0.5),
        "dt": (_opt_float, None),
        "cfl": (float, 0.5),
        "dealiasing": (str, "two_thirds"),
        "shock_ceiling": (float, 1e3),
        "phase": (str, "zero"),
        "phase_k": (_floats, (0.0, 0.0)),
        "b_list": (_floats, (4.0, 8.0, 16.0)),
        "direct_points_per_b": (_int, 0),
        "phase_per_step": (float, 0.02),
        "delta_exponent": (float, -0.5),
        "threshold": (float, 1.0),
        "instability_t_end": (float, 0.1),
        "instability_steps": (_int, 2000),
        "instability_samples": (_int, 400),
        "symmetrizer_samples": (_int, 1000),
    },
    "sweep": {
        "m_list": (_ints, (1, 2, 4, 8)),
        "n_list": (_ints, (2, 4, 8, 16)),
        "dt_levels": (_int, 3),
    },
    "output": {
        "dir": (str, "run"),
        "snapshots": (_bool, True),
    },
}

INITIAL_PROFILES = ("gaussian", "plane_wave", "zero")
WKB_PHASES = ("zero", "linear", "cosine")


@dataclass
class RunConfig:
    """Parsed configuration; ``values[section][key]`` holds typed values."""

    values: dict
    source: str = ""
    explicit: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.values[section]

    # builders ---------------------------------------------------------------

    def grid(self) -> Grid:
        g = self["grid"]
        return _wrap("grid", None, lambda: Grid(g["dim"], g["n"], g["length"]))

    def potential(self) -> PotentialSpec:
        p = self["potential"]
        keys = ("kind", "b0", "bump_amplitude", "bump_width", "modulation", "mod_amplitude", "mod_frequency",
                "epsilon_decay", "gauge_amplitude", "gauge_width")
        kw = {k: p[k] for k in keys}
        kw["bump_center"] = _pad(p["bump_center"])
        kw["gauge_center"] = _pad(p["gauge_center"])
        spec = _wrap("potential", None, lambda: PotentialSpec(**kw))
        grid = self.grid()
        _wrap("potential", "kind", lambda: spec.validate_for(grid))
        return spec

    def nonlinearity(self) -> NonlinearitySpec:
        n = self["nonlinearity"]
        if n["g"] != "power":
            raise ConfigError("only g = power can be configured from a file", "nonlinearity", "g")
        return _wrap("nonlinearity", None,
                     lambda: NonlinearitySpec(g_kind="power", sigma=n["sigma"], sign=n["sign"], gamma=n["gamma"]))

    def solver(self, **overrides) -> SolverConfig:
        s = dict(self["solver"])
        s.update(overrides)
        ladder = s["ladder"]
        if ladder == "piecewise":
            ladder = "piecewise_A"
        kw = dict(b=s["b"], dt=s["dt"], t_end=s["t_end"], scheme=s["scheme"], cn_tolerance=s["cn_tolerance"],
                  cn_max_iterations=s["cn_max_iterations"], ladder=ladder, ladder_m=s["m"],
                  ladder_n=s["n_pieces"], snapshot_stride=s["snapshot_stride"],
                  linear_solver=s["linear_solver"], blowup_factor=s["blowup_factor"],
                  leakage_tol=s["leakage_tol"], initial_leakage_tol=s["initial_leakage_tol"],
                  keep_snapshots=s.get("keep_snapshots", True))
        return _wrap("solver", None, lambda: SolverConfig(**kw))

    def amplitude_function(self):
        """``a0(*coords)`` without the WKB phase, evaluable on any grid."""
        ini = self["initial"]
        profile = ini["profile"]
        dim = self["grid"]["dim"]
        center = _pad(ini["center"])[:dim]
        k = _pad(ini["wavenumber"])[:dim]
        amp, w = ini["amplitude"], ini["width"]

        def a0(*coords):
            if profile == "zero":
                return np.zeros(coords[0].shape, dtype=complex)
            phase = sum(kk * x for kk, x in zip(k, coords))
            if profile == "plane_wave":
                return amp * np.exp(1j * phase)
            r2 = sum((x - c) ** 2 for x, c in zip(coords, center))
            return amp * np.exp(-r2 / w**2) * np.exp(1j * phase)

        target = ini["l2_norm"]
        if target is None or profile == "zero":
            return a0
        grid = self.grid()
        scale = target / l2_norm(a0(*grid.coords()), grid)
        return lambda *coords: scale * a0(*coords)

    def initial_field(self, grid: Grid | None = None) -> ComplexField:
        grid = grid or self.grid()
        return ComplexField(grid, self.amplitude_function()(*grid.coords()))

    def phase_function(self):
        """``S(*coords)``; ``cosine`` is the periodic phase ``-k (L/2π)² cos(2πx/L)``, close to ``k x²/2`` near 0."""
        w = self["wkb"]
        dim = self["grid"]["dim"]
        k = _pad(w["phase_k"])[:dim]
        kind = w["phase"]
        scale = self["grid"]["length"] / (2.0 * np.pi)

        def S(*coords):
            if kind == "zero":
                return np.zeros(coords[0].shape)
            if kind == "linear":
                return sum(kk * x for kk, x in zip(k, coords))
            return sum(-kk * scale**2 * np.cos(x / scale) for kk, x in zip(k, coords))

        return S

    def phase_gradient(self):
        """Exact ``∇S(*coords)``; the linear phase is not periodic, its gradient is."""
        w = self["wkb"]
        dim = self["grid"]["dim"]
        k = _pad(w["phase_k"])[:dim]
        kind = w["phase"]
        scale = self["grid"]["length"] / (2.0 * np.pi)

        def grad(*coords):
            if kind == "zero":
                return tuple(np.zeros(coords[0].shape) for _ in coords)
            if kind == "linear":
                return tuple(np.full(coords[0].shape, kk) for kk in k)
            return tuple(kk * scale * np.sin(x / scale) for kk, x in zip(k, coords))

        return grad

    def validate(self):
        """Build every object once so that errors surface before any run."""
        grid = self.grid()
        self.potential()
        self.nonlinearity()
        self.solver()
        ini = self["initial"]
        if ini["profile"] not in INITIAL_PROFILES:
            raise ConfigError(f"unknown profile {ini['profile']!r}", "initial", "profile")
        if ini["width"] <= 0:
            raise ConfigError("width must be positive", "initial", "width")
        w = self["wkb"]
        if w["phase"] not in WKB_PHASES:
            raise ConfigError(f"unknown phase {w['phase']!r}", "wkb", "phase")
        if w["dealiasing"] != "two_thirds":
            raise ConfigError("only two_thirds dealiasing is available", "wkb", "dealiasing")
        if not 0 < w["cfl"] <= 1:
            raise ConfigError("cfl must lie in (0, 1]", "wkb", "cfl")
        if not w["t_end"] > 0:
            raise ConfigError("t_end must be positive", "wkb", "t_end")
        if any(b <= 0 for b in w["b_list"]):
            raise ConfigError("b values must be positive", "wkb", "b_list")
        sw = self["sweep"]
        if any(m < 1 for m in sw["m_list"]) or any(n < 1 for n in sw["n_list"]):
            raise ConfigError("sweep entries must be >= 1", "sweep", None)
        if sw["dt_levels"] < 2:
            raise ConfigError("dt_levels must be >= 2", "sweep", "dt_levels")
        if ini["profile"] != "zero":
            self.initial_field(grid)
        return self

    def as_dict(self) -> dict:
        return {s: {k: (list(v) if isinstance(v, tuple) else v) for k, v in kv.items()}
                for s, kv in self.values.items()}


def _pad(seq, n=2):
    seq = tuple(seq)
    return seq + (0.0,) * (n - len(seq)) if len(seq) < n else seq


def _wrap(section, key, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except (MagnlsError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc), section, key) from exc


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    parser = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                       interpolation=None, strict=True)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {source}: {exc}") from exc

    values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    explicit = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError("unknown section", section)
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError("unknown key", section, key)
            conv = SCHEMA[section][key][0]
            try:
                val = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value {raw!r}: {exc}", section, key) from exc
            if isinstance(val, float) and not math.isfinite(val):
                raise ConfigError(f"non-finite value {raw!r}", section, key)
            values[section][key] = val
            explicit.setdefault(section, set()).add(key)
    return RunConfig(values, text, explicit)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path)).validate()
