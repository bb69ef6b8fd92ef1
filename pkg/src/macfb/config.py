"""Experiment configuration: a single TOML file describing problem, channel, and run.

Layout:

    [problem]   x1_size, x2_size, z_size, m1, m2, log_base, prior
    [channel]   exactly one of: matrix (row-major by (x1,x2)), file, generator
    [run]       horizon, objective, seed, trials, rational, oracle, lambda, lambdas
    [caps]      nodes, strategies, histories, policies
    [fixed_point] grid_resolution, mode, discount, tol, max_iter
    [output]    dir
"""

import dataclasses
import json
import os
import sys
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .capacity import HISTORY_CAP, POLICY_CAP, LambdaWeights
from .costs import COST_KINDS
from .dp import DEFAULT_NODE_CAP, DEFAULT_STRATEGY_CAP
from .errors import ConfigError
from .model import (
    Channel,
    ProblemSpec,
    identity_pair_channel,
    random_channel,
    uniform_channel,
    validate_channel,
    xor_bsc_channel,
)

GENERATORS = ("uniform", "identity-pair", "xor-bsc", "random")
OBJECTIVES = COST_KINDS
FP_MODES = ("discounted", "average")


@dataclasses.dataclass
class ChannelSource:
    """Exactly one of matrix / file / generator describes where Q comes from."""

    matrix: Optional[list] = None
    file: Optional[str] = None
    generator: Optional[str] = None
    p: Optional[float] = None
    seed: Optional[int] = None

    def kind(self) -> str:
        present = [
            name
            for name, v in (("matrix", self.matrix), ("file", self.file), ("generator", self.generator))
            if v is not None
        ]
        if len(present) != 1:
            raise ConfigError(f"channel needs exactly one of matrix/file/generator, got {present or 'none'}")
        return present[0]


@dataclasses.dataclass
class ExperimentConfig:
    spec: ProblemSpec
    channel: ChannelSource
    horizon: int
    objective: str = "error_probability"
    seed: int = 0
    trials: int = 10_000
    rational: bool = False
    oracle: bool = False
    lam: Optional[LambdaWeights] = None
    lambdas: Optional[list] = None
    weights: Optional[dict] = None
    node_cap: int = DEFAULT_NODE_CAP
    strategy_cap: int = DEFAULT_STRATEGY_CAP
    history_cap: int = HISTORY_CAP
    policy_cap: int = POLICY_CAP
    grid_resolution: int = 10
    fp_mode: str = "discounted"
    discount: float = 0.9
    fp_tol: float = 1e-10
    fp_max_iter: int = 10_000
    out_dir: Optional[str] = None
    base_dir: str = "."

    def validate(self):
        if self.horizon < 1:
            raise ConfigError("run.horizon must be a positive integer")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"run.objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.trials < 1:
            raise ConfigError("run.trials must be positive")
        for name in ("node_cap", "strategy_cap", "history_cap", "policy_cap"):
            if getattr(self, name) < 1:
                raise ConfigError(f"caps.{name} must be positive")
        if self.fp_mode not in FP_MODES:
            raise ConfigError(f"fixed_point.mode must be one of {FP_MODES}")
        if not 0.0 < self.discount < 1.0:
            raise ConfigError("fixed_point.discount must lie in (0, 1)")
        if self.grid_resolution < 2:
            raise ConfigError("fixed_point.grid_resolution must be at least 2")
        if self.fp_tol <= 0 or self.fp_max_iter < 1:
            raise ConfigError("fixed_point.tol and max_iter must be positive")
        self.channel.kind()
        return self


def _require(table: dict, section: str, key: str):
    if key not in table:
        raise ConfigError(f"missing required key [{section}] {key}")
    return table[key]


def _opt_int(table, section, key, default):
    v = table.get(key, default)
    if not isinstance(v, int) or isinstance(v, bool):
        raise ConfigError(f"[{section}] {key} must be an integer")
    return v


def _lambda_from(value, where: str) -> LambdaWeights:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"{where} must be a 3-element list")
    try:
        return LambdaWeights(float(value[0]), float(value[1]), float(value[2]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def from_toml(path: str) -> ExperimentConfig:
    """Parse and validate an experiment description."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from exc
    return from_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)))


def from_dict(raw: dict, base_dir: str = ".") -> ExperimentConfig:
    for section in raw:
        if section not in ("problem", "channel", "run", "caps", "fixed_point", "output"):
            raise ConfigError(f"unknown config section [{section}]")
    prob = raw.get("problem")
    if not isinstance(prob, dict):
        raise ConfigError("missing [problem] section")
    prior = prob.get("prior", "uniform")
    if prior != "uniform":
        raise ConfigError(f"problem.prior only supports 'uniform', got {prior!r}")
    try:
        spec = ProblemSpec(
            x1_size=_require(prob, "problem", "x1_size"),
            x2_size=_require(prob, "problem", "x2_size"),
            z_size=_require(prob, "problem", "z_size"),
            m1=_require(prob, "problem", "m1"),
            m2=_require(prob, "problem", "m2"),
            log_base=prob.get("log_base", "bits"),
        )
    except ValueError as exc:
        raise ConfigError(f"[problem]: {exc}") from exc

    chan = raw.get("channel")
    if not isinstance(chan, dict):
        raise ConfigError("missing [channel] section")
    known = {"matrix", "file", "generator", "p", "seed"}
    stray = set(chan) - known
    if stray:
        raise ConfigError(f"unknown [channel] keys: {sorted(stray)}")
    source = ChannelSource(
        matrix=chan.get("matrix"),
        file=chan.get("file"),
        generator=chan.get("generator"),
        p=chan.get("p"),
        seed=chan.get("seed"),
    )
    kind = source.kind()
    if kind == "generator":
        if source.generator not in GENERATORS:
            raise ConfigError(f"channel.generator must be one of {GENERATORS}, got {source.generator!r}")
        if source.generator == "xor-bsc" and source.p is None:
            raise ConfigError("channel.generator 'xor-bsc' requires key p")
        if source.generator == "random" and source.seed is None:
            raise ConfigError("channel.generator 'random' requires key seed")
        if source.generator in ("uniform", "identity-pair") and (source.p is not None or source.seed is not None):
            raise ConfigError(f"channel.generator {source.generator!r} takes no parameters")
    elif source.p is not None or source.seed is not None:
        raise ConfigError("channel keys p/seed only apply to generator channels")

    run = raw.get("run")
    if not isinstance(run, dict):
        raise ConfigError("missing [run] section")
    horizon = _require(run, "run", "horizon")
    if not isinstance(horizon, int) or isinstance(horizon, bool):
        raise ConfigError("run.horizon must be an integer")
    lam = run.get("lambda")
    lambdas = run.get("lambdas")
    caps = raw.get("caps", {})
    fp = raw.get("fixed_point", {})
    out = raw.get("output", {})

    cfg = ExperimentConfig(
        spec=spec,
        channel=source,
        horizon=horizon,
        objective=run.get("objective", "error_probability"),
        seed=_opt_int(run, "run", "seed", 0),
        trials=_opt_int(run, "run", "trials", 10_000),
        rational=bool(run.get("rational", False)),
        oracle=bool(run.get("oracle", False)),
        lam=None if lam is None else _lambda_from(lam, "run.lambda"),
        lambdas=None if lambdas is None else [_lambda_from(v, "run.lambdas") for v in lambdas],
        weights=run.get("weights"),
        node_cap=_opt_int(caps, "caps", "nodes", DEFAULT_NODE_CAP),
        strategy_cap=_opt_int(caps, "caps", "strategies", DEFAULT_STRATEGY_CAP),
        history_cap=_opt_int(caps, "caps", "histories", HISTORY_CAP),
        policy_cap=_opt_int(caps, "caps", "policies", POLICY_CAP),
        grid_resolution=_opt_int(fp, "fixed_point", "grid_resolution", 10),
        fp_mode=fp.get("mode", "discounted"),
        discount=float(fp.get("discount", 0.9)),
        fp_tol=float(fp.get("tol", 1e-10)),
        fp_max_iter=_opt_int(fp, "fixed_point", "max_iter", 10_000),
        out_dir=out.get("dir"),
        base_dir=base_dir,
    )
    return cfg.validate()


def resolve_channel(cfg: ExperimentConfig) -> Channel:
    """Materialize the channel matrix from whichever source the config names."""
    src = cfg.channel
    kind = src.kind()
    if kind == "generator":
        if src.generator == "uniform":
            return uniform_channel(cfg.spec)
        if src.generator == "identity-pair":
            return identity_pair_channel(cfg.spec)
        if src.generator == "xor-bsc":
            return xor_bsc_channel(cfg.spec, float(src.p))
        return random_channel(cfg.spec, int(src.seed))
    if kind == "matrix":
        rows = np.asarray(src.matrix, dtype=float)
        if rows.ndim != 2 or rows.shape != (cfg.spec.x1_size * cfg.spec.x2_size, cfg.spec.z_size):
            raise ConfigError(
                f"channel.matrix must be {cfg.spec.x1_size * cfg.spec.x2_size} rows "
                f"(row-major by (x1, x2)) of length {cfg.spec.z_size}"
            )
        q = rows.reshape(cfg.spec.x1_size, cfg.spec.x2_size, cfg.spec.z_size)
        return validate_channel(cfg.spec, q)
    path = src.file if os.path.isabs(src.file) else os.path.join(cfg.base_dir, src.file)
    if not os.path.exists(path):
        raise ConfigError(f"channel.file does not exist: {path}")
    with open(path) as fh:
        data = json.load(fh)
    q = np.asarray(data, dtype=float)
    if q.shape != (cfg.spec.x1_size, cfg.spec.x2_size, cfg.spec.z_size):
        raise ConfigError(f"channel file {path} has shape {q.shape}, expected "
                          f"({cfg.spec.x1_size}, {cfg.spec.x2_size}, {cfg.spec.z_size})")
    return validate_channel(cfg.spec, q)


def _toml_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize config value {v!r}")


def to_toml(cfg: ExperimentConfig) -> str:
    """Render the config back to TOML text; from_dict(parse(text)) is equivalent."""
    lines = ["[problem]"]
    s = cfg.spec
    for k, v in (("x1_size", s.x1_size), ("x2_size", s.x2_size), ("z_size", s.z_size),
                 ("m1", s.m1), ("m2", s.m2), ("log_base", s.log_base)):
        lines.append(f"{k} = {_toml_scalar(v)}")
    lines.append("")
    lines.append("[channel]")
    src = cfg.channel
    for k in ("matrix", "file", "generator", "p", "seed"):
        v = getattr(src, k)
        if v is not None:
            lines.append(f"{k} = {_toml_scalar(v)}")
    lines.append("")
    lines.append("[run]")
    lines.append(f"horizon = {cfg.horizon}")
    lines.append(f"objective = {_toml_scalar(cfg.objective)}")
    lines.append(f"seed = {cfg.seed}")
    lines.append(f"trials = {cfg.trials}")
    lines.append(f"rational = {_toml_scalar(cfg.rational)}")
    lines.append(f"oracle = {_toml_scalar(cfg.oracle)}")
    if cfg.lam is not None:
        lines.append(f"lambda = {_toml_scalar([cfg.lam.l1, cfg.lam.l2, cfg.lam.l3])}")
    if cfg.lambdas is not None:
        rendered = [[l.l1, l.l2, l.l3] for l in cfg.lambdas]
        lines.append(f"lambdas = {_toml_scalar(rendered)}")
    lines.append("")
    lines.append("[caps]")
    lines.append(f"nodes = {cfg.node_cap}")
    lines.append(f"strategies = {cfg.strategy_cap}")
    lines.append(f"histories = {cfg.history_cap}")
    lines.append(f"policies = {cfg.policy_cap}")
    lines.append("")
    lines.append("[fixed_point]")
    lines.append(f"grid_resolution = {cfg.grid_resolution}")
    lines.append(f"mode = {_toml_scalar(cfg.fp_mode)}")
    lines.append(f"discount = {_toml_scalar(cfg.discount)}")
    lines.append(f"tol = {_toml_scalar(cfg.fp_tol)}")
    lines.append(f"max_iter = {cfg.fp_max_iter}")
    if cfg.out_dir is not None:
        lines.append("")
        lines.append("[output]")
        lines.append(f"dir = {_toml_scalar(cfg.out_dir)}")
    return "\n".join(lines) + "\n"
