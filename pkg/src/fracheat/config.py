"""Experiment configuration: TOML parsing, validation, and serialization.

A config file is a nested-table TOML document; every command takes one.
Dotted-path overrides (``--grid.N_t=2048``) are applied to the raw mapping
before validation.  Validation errors name the offending field path.

Blocks:

    [manifold] / [manifold1] + [manifold2]
        kind = "flat_torus" | "variable_circle"
        metric = [[...]]         (row-major, flat_torus)
        gamma = [a0, a1, b1, ...] (variable_circle Fourier coefficients)
        periods = [...]          (flat_torus) / period = L (variable_circle)
    [spectral]   K, galerkin_N, quadrature_n
    [grid]       T, pad_factor, N_t
    [operator]   s
    [source]     center, radius, t_center, t_halfwidth, spatial_power,
                 time_power, normalize, mean_free
    [apply]      operator = "Hs"|"Hinv"|"semigroup"|"balakrishnan", tau,
                 input (field path base)
    [harness]    patch/omega1/omega2 = {box = [[lo, hi], ...]}, m_max,
                 tau_grid = {lo, hi, n}, eta_grid = {lo, hi, n},
                 thresholds = {distinguished, consistent}, probe_time_index
    [output]     directory, formats
"""

import copy
import io
from dataclasses import dataclass, field, asdict

try:
    import tomllib
except ModuleNotFoundError:          # Python 3.10
    import tomli as tomllib

import numpy as np

from .errors import UsageError
from .fields import TimeGrid
from .manifolds import FlatTorus, VariableCircle, build_eigensystem


@dataclass(frozen=True)
class ManifoldConfig:
    kind: str
    metric: tuple = ()
    gamma: tuple = ()
    periods: tuple = ()
    period: float = 0.0
    quadrature_n: tuple = ()     # per-model override of spectral.quadrature_n


@dataclass(frozen=True)
class SpectralConfig:
    K: int = 64
    galerkin_N: int = 0          # 0 means the 4K default
    quadrature_n: tuple = ()


@dataclass(frozen=True)
class GridConfig:
    T: float = 3.0
    pad_factor: int = 4
    N_t: int = 1024


@dataclass(frozen=True)
class OperatorConfig:
    s: float = 0.5


@dataclass(frozen=True)
class SourceConfig:
    center: tuple = (0.0,)
    radius: float = 0.5
    t_center: float = 0.0
    t_halfwidth: float = 0.0     # 0 means T/2
    spatial_power: int = 4
    time_power: int = 4
    normalize: str = "unit_mass"
    mean_free: bool = False


@dataclass(frozen=True)
class ApplyConfig:
    operator: str = "Hs"
    tau: float = 1.0
    input: str = ""
    dump_symbol: bool = False


@dataclass(frozen=True)
class RegionConfig:
    box: tuple = ()
    indices: tuple = ()


@dataclass(frozen=True)
class HarnessConfig:
    patch: RegionConfig = field(default_factory=RegionConfig)
    omega1: RegionConfig = field(default_factory=RegionConfig)
    omega2: RegionConfig = field(default_factory=RegionConfig)
    m_max: int = 8
    tau_lo: float = 0.05
    tau_hi: float = 10.0
    tau_n: int = 40
    eta_lo: float = 0.25
    eta_hi: float = 8.0
    eta_n: int = 24
    threshold_distinguished: float = 1e-5
    threshold_consistent: float = 1e-8
    probe_time_index: int = 0    # 0 means the window midpoint
    stencil_order: int = 8


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    formats: tuple = ("csv", "json")


@dataclass(frozen=True)
class ExperimentConfig:
    manifolds: tuple                 # one or two ManifoldConfig
    spectral: SpectralConfig
    grid: GridConfig
    operator: OperatorConfig
    source: SourceConfig
    apply: ApplyConfig
    harness: HarnessConfig
    output: OutputConfig


def _manifold_from_raw(block, path):
    kind = block.get("kind")
    qn = tuple(int(n) for n in np.atleast_1d(block.get("quadrature_n", ())))
    declared_dim = block.get("dim")
    if kind == "flat_torus":
        if "metric" not in block:
            raise UsageError("missing config field %s.metric" % path)
        metric = block["metric"]
        try:
            arr = np.asarray(metric, dtype=float)
            if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
                raise ValueError
        except (ValueError, TypeError):
            raise UsageError("%s.metric must be a square row-major matrix"
                             % path)
        if not np.allclose(arr, arr.T, rtol=0,
                           atol=1e-14 * max(1.0, np.abs(arr).max())) \
                or np.linalg.eigvalsh(arr).min() <= 0:
            raise UsageError("%s.metric must be symmetric positive definite"
                             % path)
        periods = block.get("periods")
        if periods is None:
            raise UsageError("missing config field %s.periods" % path)
        if declared_dim is not None and int(declared_dim) != arr.shape[0]:
            raise UsageError("%s.dim does not match the metric dimension"
                             % path)
        return ManifoldConfig(kind=kind, metric=tuple(map(tuple, arr)),
                              periods=tuple(float(p) for p in periods),
                              quadrature_n=qn)
    if kind == "variable_circle":
        gamma = block.get("gamma") or block.get("metric")
        if gamma is None:
            raise UsageError("missing config field %s.gamma" % path)
        try:
            g = tuple(float(v) for v in np.asarray(gamma, float).ravel())
        except (ValueError, TypeError):
            raise UsageError("%s.gamma must be a Fourier coefficient list"
                             % path)
        period = float(block.get("period", 2.0 * np.pi))
        if declared_dim is not None and int(declared_dim) != 1:
            raise UsageError("%s.dim must be 1 for a variable circle" % path)
        return ManifoldConfig(kind=kind, gamma=g, period=period,
                              quadrature_n=qn)
    raise UsageError("%s.kind must be 'flat_torus' or 'variable_circle'"
                     % path)


def _region_from_raw(block, path):
    if block is None:
        return RegionConfig()
    if "indices" in block:
        return RegionConfig(indices=tuple(int(i) for i in block["indices"]))
    if "box" in block:
        box = block["box"]
        try:
            arr = np.asarray(box, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2:
                raise ValueError
        except (ValueError, TypeError):
            raise UsageError("%s.box must be a list of [lo, hi] pairs" % path)
        return RegionConfig(box=tuple(map(tuple, arr)))
    raise UsageError("%s must declare 'box' or 'indices'" % path)


def parse_config(raw):
    """Validate a raw mapping into an ExperimentConfig."""
    if "manifold" in raw:
        manifolds = (_manifold_from_raw(raw["manifold"], "manifold"),)
    elif "manifold1" in raw and "manifold2" in raw:
        manifolds = (_manifold_from_raw(raw["manifold1"], "manifold1"),
                     _manifold_from_raw(raw["manifold2"], "manifold2"))
    else:
        raise UsageError("missing config field manifold "
                         "(or manifold1/manifold2)")

    sp = raw.get("spectral", {})
    spectral = SpectralConfig(
        K=int(sp.get("K", 64)),
        galerkin_N=int(sp.get("galerkin_N", 0)),
        quadrature_n=tuple(int(n) for n in np.atleast_1d(
            sp.get("quadrature_n", ()))))
    if spectral.K < 1:
        raise UsageError("spectral.K must be at least 1")

    gr = raw.get("grid", {})
    grid = GridConfig(T=float(gr.get("T", 3.0)),
                      pad_factor=int(gr.get("pad_factor", 4)),
                      N_t=int(gr.get("N_t", 1024)))
    if grid.T <= 0:
        raise UsageError("grid.T must be positive")
    if grid.N_t % 2 != 0 or grid.N_t < 2:
        raise UsageError("grid.N_t must be even and at least 2")
    if grid.pad_factor < 2:
        raise UsageError("grid.pad_factor must be at least 2")

    op = raw.get("operator", {})
    operator = OperatorConfig(s=float(op.get("s", 0.5)))
    if not 0.0 < operator.s < 1.0:
        raise UsageError("operator.s must lie in (0, 1)")

    so = raw.get("source", {})
    source = SourceConfig(
        center=tuple(float(c) for c in np.atleast_1d(so.get("center", (0.0,)))),
        radius=float(so.get("radius", 0.5)),
        t_center=float(so.get("t_center", 0.0)),
        t_halfwidth=float(so.get("t_halfwidth", 0.0)),
        spatial_power=int(so.get("spatial_power", 4)),
        time_power=int(so.get("time_power", 4)),
        normalize=str(so.get("normalize", "unit_mass")),
        mean_free=bool(so.get("mean_free", False)))

    ap = raw.get("apply", {})
    apply_cfg = ApplyConfig(operator=str(ap.get("operator", "Hs")),
                            tau=float(ap.get("tau", 1.0)),
                            input=str(ap.get("input", "")),
                            dump_symbol=bool(ap.get("dump_symbol", False)))
    if apply_cfg.operator not in ("Hs", "Hinv", "semigroup", "balakrishnan"):
        raise UsageError("apply.operator must be one of "
                         "Hs, Hinv, semigroup, balakrishnan")

    ha = raw.get("harness", {})
    tau_grid = ha.get("tau_grid", {})
    eta_grid = ha.get("eta_grid", {})
    thresholds = ha.get("thresholds", {})
    harness = HarnessConfig(
        patch=_region_from_raw(ha.get("patch"), "harness.patch"),
        omega1=_region_from_raw(ha.get("omega1"), "harness.omega1"),
        omega2=_region_from_raw(ha.get("omega2"), "harness.omega2"),
        m_max=int(ha.get("m_max", 8)),
        tau_lo=float(tau_grid.get("lo", 0.05)),
        tau_hi=float(tau_grid.get("hi", 10.0)),
        tau_n=int(tau_grid.get("n", 40)),
        eta_lo=float(eta_grid.get("lo", 0.25)),
        eta_hi=float(eta_grid.get("hi", 8.0)),
        eta_n=int(eta_grid.get("n", 24)),
        threshold_distinguished=float(thresholds.get("distinguished", 1e-5)),
        threshold_consistent=float(thresholds.get("consistent", 1e-8)),
        probe_time_index=int(ha.get("probe_time_index", 0)),
        stencil_order=int(ha.get("stencil_order", 8)))

    ou = raw.get("output", {})
    output = OutputConfig(directory=str(ou.get("directory", "out")),
                          formats=tuple(ou.get("formats", ("csv", "json"))))

    return ExperimentConfig(manifolds=manifolds, spectral=spectral,
                            grid=grid, operator=operator, source=source,
                            apply=apply_cfg, harness=harness, output=output)


def load_config(path, overrides=()):
    """Read a TOML config file and apply dotted-path overrides."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise UsageError("config file not found: %s" % path)
    except tomllib.TOMLDecodeError as exc:
        raise UsageError("config parse error in %s: %s" % (path, exc))
    raw = apply_overrides(raw, overrides)
    return parse_config(raw)


def apply_overrides(raw, overrides):
    """Apply ``key.path=value`` overrides; values parse as TOML literals."""
    raw = copy.deepcopy(raw)
    for ov in overrides:
        if "=" not in ov:
            raise UsageError("override %r is not of the form key.path=value"
                             % ov)
        key, _, val = ov.partition("=")
        key = key.strip().lstrip("-")
        try:
            parsed = tomllib.loads("v = %s" % val)["v"]
        except tomllib.TOMLDecodeError:
            parsed = val.strip()
        cur = raw
        parts = key.split(".")
        for part in parts[:-1]:
            cur = cur.setdefault(part, {})
            if not isinstance(cur, dict):
                raise UsageError("override path %s crosses a non-table" % key)
        cur[parts[-1]] = parsed
    return raw


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, str):
        return '"%s"' % v.replace("\\", "\\\\").replace('"', '\\"')
    if isinstance(v, (list, tuple)):
        return "[%s]" % ", ".join(_toml_value(x) for x in v)
    raise UsageError("cannot serialize config value %r" % (v,))


def _emit_table(out, name, mapping):
    scalars = {k: v for k, v in mapping.items() if not isinstance(v, dict)}
    tables = {k: v for k, v in mapping.items() if isinstance(v, dict)}
    if scalars or not tables:
        out.write("[%s]\n" % name)
        for k, v in scalars.items():
            out.write("%s = %s\n" % (k, _toml_value(v)))
        out.write("\n")
    for k, v in tables.items():
        _emit_table(out, "%s.%s" % (name, k), v)


def config_to_raw(cfg):
    """Back to the plain mapping form (inverse of parse for round trips)."""
    raw = {}
    if len(cfg.manifolds) == 1:
        names = ["manifold"]
    else:
        names = ["manifold1", "manifold2"]
    for name, mc in zip(names, cfg.manifolds):
        block = {"kind": mc.kind}
        if mc.kind == "flat_torus":
            block["metric"] = [list(r) for r in mc.metric]
            block["periods"] = list(mc.periods)
        else:
            block["gamma"] = list(mc.gamma)
            block["period"] = mc.period
        if mc.quadrature_n:
            block["quadrature_n"] = list(mc.quadrature_n)
        raw[name] = block
    raw["spectral"] = {"K": cfg.spectral.K,
                       "galerkin_N": cfg.spectral.galerkin_N,
                       "quadrature_n": list(cfg.spectral.quadrature_n)}
    raw["grid"] = {"T": cfg.grid.T, "pad_factor": cfg.grid.pad_factor,
                   "N_t": cfg.grid.N_t}
    raw["operator"] = {"s": cfg.operator.s}
    raw["source"] = {"center": list(cfg.source.center),
                     "radius": cfg.source.radius,
                     "t_center": cfg.source.t_center,
                     "t_halfwidth": cfg.source.t_halfwidth,
                     "spatial_power": cfg.source.spatial_power,
                     "time_power": cfg.source.time_power,
                     "normalize": cfg.source.normalize,
                     "mean_free": cfg.source.mean_free}
    raw["apply"] = {"operator": cfg.apply.operator, "tau": cfg.apply.tau,
                    "input": cfg.apply.input,
                    "dump_symbol": cfg.apply.dump_symbol}
    h = cfg.harness
    hblock = {"m_max": h.m_max,
              "tau_grid": {"lo": h.tau_lo, "hi": h.tau_hi, "n": h.tau_n},
              "eta_grid": {"lo": h.eta_lo, "hi": h.eta_hi, "n": h.eta_n},
              "thresholds": {"distinguished": h.threshold_distinguished,
                             "consistent": h.threshold_consistent},
              "probe_time_index": h.probe_time_index,
              "stencil_order": h.stencil_order}
    for nm, region in (("patch", h.patch), ("omega1", h.omega1),
                       ("omega2", h.omega2)):
        if region.indices:
            hblock[nm] = {"indices": list(region.indices)}
        elif region.box:
            hblock[nm] = {"box": [list(b) for b in region.box]}
    raw["harness"] = hblock
    raw["output"] = {"directory": cfg.output.directory,
                     "formats": list(cfg.output.formats)}
    return raw


def serialize_config(cfg):
    """TOML text whose parse equals ``cfg`` (round-trip property)."""
    out = io.StringIO()
    for name, block in config_to_raw(cfg).items():
        _emit_table(out, name, block)
    return out.getvalue()


def build_manifold(mc):
    if mc.kind == "flat_torus":
        return FlatTorus(metric=mc.metric, periods=mc.periods)
    return VariableCircle(gamma=mc.gamma, period=mc.period)


def build_system(cfg, which=0):
    """EigenSystem for manifold block ``which`` of a parsed config."""
    mc = cfg.manifolds[which]
    model = build_manifold(mc)
    gal = cfg.spectral.galerkin_N or None
    qn = mc.quadrature_n or cfg.spectral.quadrature_n or None
    return build_eigensystem(model, cfg.spectral.K, galerkin_n=gal,
                             quadrature_n=qn)


def build_grid(cfg):
    return TimeGrid.for_horizon(cfg.grid.T, cfg.grid.pad_factor, cfg.grid.N_t)


def region_nodes(sys, region, name):
    """Resolve a RegionConfig to flat node indices."""
    from .harness import nodes_in_box

    if region.indices:
        idx = np.asarray(region.indices, dtype=int)
    elif region.box:
        box = np.asarray(region.box, dtype=float)
        idx = nodes_in_box(sys, box[:, 0], box[:, 1])
    else:
        raise UsageError("harness.%s is not configured" % name)
    if idx.size == 0:
        raise UsageError("harness.%s selects no quadrature nodes" % name)
    return idx
