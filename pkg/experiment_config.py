"""
Experiment config files: YAML documents with a mandatory schema_version,
validated before any computation and completed from the defaults in
config.yaml.

    schema_version: 1
    problem:  {name, dims, N, epsilon, nu, a1, a2, forcing, initial_data: {kind, gamma, seed}}
    scheme:   {name, c2}
    study:    {T, taus | tau_max + levels, norms, reference: {kind, scheme, refinement}}
    defect:   {k, t_values | t_max + levels, beta1}
    solve:    {T, tau, snapshots}
    output:   {directory, formats}

Norm entries are `max`, `c1_discrete`, `holder` or
`{holder: {exponent, samples, seed}}`.
"""

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import yaml

from analysis import NormKind, ReferenceSpec
from integrators import SCHEME_NAMES, SPLIT_SCHEMES
from problems import InitialDataSpec
from utils import ConfigurationError, config_hash, load_config, logger

SCHEMA_VERSION = 1
PROBLEM_NAMES = ("allen_cahn", "burgers", "heat", "linear_forced", "scalar_split")
OUTPUT_FORMATS = ("csv",)

_ALLOWED_KEYS = {
    "": {"schema_version", "problem", "scheme", "study", "defect", "solve", "output"},
    "problem": {"name", "dims", "N", "epsilon", "nu", "a1", "a2", "forcing", "initial_data"},
    "problem.initial_data": {"kind", "gamma", "seed"},
    "scheme": {"name", "c2"},
    "study": {"T", "taus", "tau_max", "levels", "norms", "reference"},
    "study.reference": {"kind", "scheme", "refinement"},
    "defect": {"k", "t_values", "t_max", "levels", "beta1"},
    "solve": {"T", "tau", "snapshots"},
    "output": {"directory", "formats"},
}


@dataclass(frozen=True)
class ProblemConfig:
    name: str
    dims: int
    N: int
    epsilon: float
    nu: float
    a1: float
    a2: float
    forcing: Tuple[float, ...]
    initial_data: InitialDataSpec

    @property
    def split_capable(self):
        return self.name == "scalar_split" or self.dims == 2


@dataclass(frozen=True)
class SchemeConfig:
    name: str
    c2: float


@dataclass(frozen=True)
class StudyConfig:
    T: float
    taus: Optional[List[float]]
    norms: List[NormKind]
    reference: ReferenceSpec


@dataclass(frozen=True)
class DefectConfig:
    k: int
    t_values: Optional[List[float]]
    beta1: Optional[float]


@dataclass(frozen=True)
class SolveConfig:
    T: float
    tau: Optional[float]
    snapshots: int


@dataclass(frozen=True)
class OutputConfig:
    directory: Optional[str]
    formats: List[str]


@dataclass
class ExperimentConfig:
    problem: ProblemConfig
    scheme: SchemeConfig
    study: StudyConfig
    defect: DefectConfig
    solve: SolveConfig
    output: OutputConfig
    resolved: dict = field(repr=False)
    source: Optional[str] = None

    @property
    def config_hash(self):
        return config_hash(self.resolved)

    def dump_resolved(self):
        """YAML echo of the resolved config; parses back to the same config."""
        return yaml.safe_dump(self.resolved, sort_keys=True, default_flow_style=False)


def _check_keys(block, path):
    if not isinstance(block, dict):
        where = path or "top level"
        raise ConfigurationError(f"{where}: expected a mapping, got {type(block).__name__}")
    unknown = set(block) - _ALLOWED_KEYS[path]
    if unknown:
        where = path or "top level"
        raise ConfigurationError(f"{where}: unknown keys {', '.join(sorted(map(str, unknown)))}")


def _validate_keys(raw):
    _check_keys(raw, "")
    for name in ("problem", "scheme", "study", "defect", "solve", "output"):
        if name in raw and raw[name] is not None:
            _check_keys(raw[name], name)
    if isinstance(raw.get("problem"), dict) and raw["problem"].get("initial_data") is not None:
        _check_keys(raw["problem"]["initial_data"], "problem.initial_data")
    if isinstance(raw.get("study"), dict) and raw["study"].get("reference") is not None:
        _check_keys(raw["study"]["reference"], "study.reference")


def _merge(defaults, overrides):
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _number(value, path, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{path}: expected a number, got {value!r}")
    if kind is int:
        if float(value) != int(value):
            raise ConfigurationError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _ladder(block, list_key, max_key, path):
    """Explicit list, or max·2^-j for j = 0..levels-1."""
    if list_key in block and max_key in block:
        raise ConfigurationError(f"{path}: give either {list_key} or {max_key}/levels, not both")
    if list_key in block:
        values = block[list_key]
        if not isinstance(values, list) or not values:
            raise ConfigurationError(f"{path}.{list_key}: expected a nonempty list")
        return [_number(v, f"{path}.{list_key}") for v in values]
    if max_key in block:
        top = _number(block[max_key], f"{path}.{max_key}")
        levels = _number(block.get("levels", 1), f"{path}.levels", int)
        if levels < 1:
            raise ConfigurationError(f"{path}.levels must be >= 1, got {levels}")
        return [top / 2 ** j for j in range(levels)]
    if "levels" in block:
        raise ConfigurationError(f"{path}.levels needs {max_key}")
    return None


def _parse_norms(entries, gamma, norm_defaults):
    if not isinstance(entries, list) or not entries:
        raise ConfigurationError("study.norms: expected a nonempty list")
    samples = int(norm_defaults.get("holder_samples", 2000))
    seed = int(norm_defaults.get("holder_seed", 0))
    norms = []
    for entry in entries:
        if isinstance(entry, str):
            if entry == "holder":
                norms.append(NormKind("holder", exponent=2.0 * gamma, samples=samples, seed=seed))
            else:
                norms.append(NormKind(entry))
        elif isinstance(entry, dict) and set(entry) == {"holder"}:
            options = entry["holder"] or {}
            unknown = set(options) - {"exponent", "samples", "seed"}
            if unknown:
                raise ConfigurationError(f"study.norms.holder: unknown keys {', '.join(sorted(unknown))}")
            norms.append(NormKind(
                "holder",
                exponent=_number(options.get("exponent", 2.0 * gamma), "study.norms.holder.exponent"),
                samples=_number(options.get("samples", samples), "study.norms.holder.samples", int),
                seed=_number(options.get("seed", seed), "study.norms.holder.seed", int)))
        else:
            raise ConfigurationError(f"study.norms: unrecognized entry {entry!r}")
    labels = [n.label for n in norms]
    if len(set(labels)) != len(labels):
        raise ConfigurationError(f"study.norms: duplicate norm in {labels}")
    return norms


def parse_experiment_config(raw, source=None, seed=None, defaults=None):
    """
    Validate a raw config mapping and resolve it against the package defaults.

    Args:
        raw (dict): parsed YAML document
        source (str): file the document came from, for messages
        seed (int): overrides problem.initial_data.seed when given
        defaults (dict): package config, loaded from config.yaml when omitted

    Returns:
        ExperimentConfig
    """
    if raw is None:
        raise ConfigurationError(f"{source or 'config'}: empty document")
    _validate_keys(raw)
    version = raw.get("schema_version")
    if version is None:
        raise ConfigurationError("schema_version is mandatory")
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")

    package = defaults if defaults is not None else load_config()
    base = {"schema_version": SCHEMA_VERSION, **copy.deepcopy(package.get("defaults", {}))}
    raw = copy.deepcopy(raw)
    if seed is not None:
        raw.setdefault("problem", {}).setdefault("initial_data", {})["seed"] = int(seed)
    resolved = _merge(base, {k: v for k, v in raw.items() if v is not None})

    p = resolved.get("problem", {})
    if "name" not in p:
        raise ConfigurationError("problem.name is mandatory")
    if p["name"] not in PROBLEM_NAMES:
        raise ConfigurationError(f"unknown problem {p['name']!r}; expected one of {', '.join(PROBLEM_NAMES)}")
    init = p.get("initial_data", {})
    initial_data = InitialDataSpec(
        kind=init.get("kind", "pyramid"),
        gamma=_number(init.get("gamma", 0.5), "problem.initial_data.gamma"),
        seed=_number(init.get("seed", 0), "problem.initial_data.seed", int))
    forcing = p.get("forcing", [])
    if not isinstance(forcing, list):
        raise ConfigurationError("problem.forcing: expected a list of coefficients")
    problem = ProblemConfig(
        name=p["name"],
        dims=_number(p.get("dims", 2), "problem.dims", int),
        N=_number(p.get("N", 64), "problem.N", int),
        epsilon=_number(p.get("epsilon", 0.1), "problem.epsilon"),
        nu=_number(p.get("nu", 0.05), "problem.nu"),
        a1=_number(p.get("a1", -1.0), "problem.a1"),
        a2=_number(p.get("a2", -1.0), "problem.a2"),
        forcing=tuple(_number(g, "problem.forcing") for g in forcing),
        initial_data=initial_data)
    if problem.dims not in (1, 2):
        raise ConfigurationError(f"problem.dims must be 1 or 2, got {problem.dims}")
    if problem.name == "burgers" and problem.dims != 2:
        raise ConfigurationError("burgers is only defined on the 2D grid")
    if problem.forcing and problem.name != "linear_forced" and problem.name != "scalar_split":
        raise ConfigurationError(f"problem.forcing is not used by {problem.name}")

    s = resolved.get("scheme", {})
    scheme = SchemeConfig(name=s.get("name", "expeuler"), c2=_number(s.get("c2", 0.5), "scheme.c2"))
    if scheme.name not in SCHEME_NAMES:
        raise ConfigurationError(f"unknown scheme {scheme.name!r}; expected one of {', '.join(SCHEME_NAMES)}")
    if not (0.0 < scheme.c2 <= 1.0):
        raise ConfigurationError(f"scheme.c2 must lie in (0, 1], got {scheme.c2}")
    if scheme.name in SPLIT_SCHEMES and not problem.split_capable:
        raise ConfigurationError(f"split scheme {scheme.name} needs a 2D split-capable problem")

    st = resolved.get("study", {})
    ref = st.get("reference", {})
    reference = ReferenceSpec(
        kind=ref.get("kind", "fine_step"),
        scheme=ref.get("scheme", "erk2"),
        refinement=_number(ref.get("refinement", 32), "study.reference.refinement", int))
    if reference.scheme not in SCHEME_NAMES:
        raise ConfigurationError(f"unknown reference scheme {reference.scheme!r}")
    if reference.scheme in SPLIT_SCHEMES and not problem.split_capable:
        raise ConfigurationError(f"split reference scheme {reference.scheme} needs a 2D split-capable problem")
    study = StudyConfig(
        T=_number(st.get("T", 0.1), "study.T"),
        taus=_ladder(st, "taus", "tau_max", "study"),
        norms=_parse_norms(st.get("norms", ["max"]), initial_data.gamma, package.get("norms", {})),
        reference=reference)

    d = resolved.get("defect", {})
    beta1 = d.get("beta1")
    defect = DefectConfig(
        k=_number(d.get("k", 1), "defect.k", int),
        t_values=_ladder(d, "t_values", "t_max", "defect"),
        beta1=None if beta1 is None else _number(beta1, "defect.beta1"))

    so = resolved.get("solve", {})
    solve = SolveConfig(
        T=_number(so.get("T", study.T), "solve.T"),
        tau=None if so.get("tau") is None else _number(so["tau"], "solve.tau"),
        snapshots=_number(so.get("snapshots", 0), "solve.snapshots", int))
    if solve.snapshots < 0:
        raise ConfigurationError(f"solve.snapshots must be >= 0, got {solve.snapshots}")

    o = resolved.get("output", {})
    formats = o.get("formats", ["csv"])
    if not isinstance(formats, list) or any(f not in OUTPUT_FORMATS for f in formats):
        raise ConfigurationError(f"output.formats must be a list drawn from {', '.join(OUTPUT_FORMATS)}")
    output = OutputConfig(directory=o.get("directory"), formats=list(formats))

    logger.debug(f"Resolved config from {source or '<mapping>'}")
    return ExperimentConfig(problem=problem, scheme=scheme, study=study, defect=defect,
                            solve=solve, output=output, resolved=resolved, source=source)


def load_experiment_config(path, seed=None):
    """
    Read and validate an experiment config file.

    Raises:
        OSError: the file cannot be read
        ConfigurationError: the document is not valid YAML or fails validation
    """
    path = Path(path)
    with open(path, 'r') as file:
        text = file.read()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"{path}: invalid YAML: {e}")
    logger.info(f"Loaded experiment config {path}")
    return parse_experiment_config(raw, source=str(path), seed=seed)
