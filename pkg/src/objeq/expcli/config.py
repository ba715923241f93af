"""INI-style scenario configuration.

Example::

    [scenario]
    experiment = sbs-scaling
    seed = 7
    output = results/sbs
    instances = 1

    [dims]
    system = 2
    env = 2, 2, 2, 2, 2, 2

    [hamiltonian]
    family = iid-star

    [time]
    window_multiples = 1000
    samples = 4000

    [partition]
    sizes = 1, 2, 3, 4, 5, 6

    [tolerances]
    bound_slack = 1e-9

A relative ``output`` is resolved against the directory holding the config.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import qops
from ..errors import ConfigParseError, DimensionOverflow

EXPERIMENTS = ("impossibility", "standard-model", "sbs-scaling", "equilibration-bounds", "custom")

FAMILIES = {
    "impossibility": ("conditional", "star"),
    "standard-model": ("von-neumann",),
    "sbs-scaling": ("iid-star", "star"),
    "equilibration-bounds": ("gue",),
    "custom": ("file",),
}

DEFAULT_TOLERANCES = {
    "bound_slack": 1e-9,
    "mutual_information": 1e-10,
    "product_distance": 1e-10,
    "product_law": 1e-10,
    "linearity_residual": 1e-9,
    "cq_distance": 1e-10,
    "gap_rel": 1e-8,
}

SECTIONS = {
    "scenario": {"experiment", "seed", "output", "instances"},
    "dims": {"system", "env"},
    "hamiltonian": {"family", "coupling_min", "coupling_max", "spec_file"},
    "time": {"window_multiples", "samples"},
    "partition": {"sizes"},
    "tolerances": set(DEFAULT_TOLERANCES),
}


@dataclass(frozen=True)
class ScenarioConfig:
    experiment: str
    seed: int
    system_dim: int
    env_dims: tuple[int, ...]
    output_path: str
    instances: int = 1
    family: str = ""
    coupling_range: tuple[float, float] = (0.5, 1.5)
    spec_file: str | None = None
    window_multiples: tuple[float, ...] = (1000.0,)
    samples: int = 4000
    partition_sizes: tuple[int, ...] = ()
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    source: str | None = None

    @property
    def d_E(self) -> int:
        return int(np.prod(self.env_dims))

    @property
    def total_dim(self) -> int:
        return self.system_dim * self.d_E

    def with_overrides(self, *, seed: int | None = None, output_path: str | None = None) -> "ScenarioConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if output_path is not None:
            changes["output_path"] = str(output_path)
        return replace(self, **changes)

    def echo(self) -> dict:
        """Deterministic description of the run; the output location is excluded."""
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "instances": self.instances,
            "system_dim": self.system_dim,
            "env_dims": list(self.env_dims),
            "family": self.family,
            "coupling_range": list(self.coupling_range),
            "spec_file": self.spec_file,
            "window_multiples": list(self.window_multiples),
            "samples": self.samples,
            "partition_sizes": list(self.partition_sizes),
            "tolerances": dict(sorted(self.tolerances.items())),
        }


def _line_index(text: str) -> dict[tuple[str, str], int]:
    """Map ``(section, key)`` and ``(section, "")`` to 1-based line numbers."""
    where: dict[tuple[str, str], int] = {}
    section = ""
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, ""), n)
            continue
        key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
        where.setdefault((section, key), n)
    return where


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, lines: dict):
        self.parser = parser
        self.lines = lines

    def fail(self, message: str, section: str, key: str = ""):
        raise ConfigParseError(message, line=self.lines.get((section, key)), field=f"{section}.{key}" if key else section)

    def raw(self, section: str, key: str, default=None, *, required: bool = False):
        if self.parser.has_option(section, key):
            return self.parser.get(section, key).strip()
        if required:
            self.fail("missing required field", section, key)
        return default

    def integer(self, section: str, key: str, default=None, *, required: bool = False, minimum: int | None = None):
        value = self.raw(section, key, required=required)
        if value is None:
            return default
        try:
            out = int(value, 0)
        except ValueError:
            self.fail(f"expected an integer, got {value!r}", section, key)
        if minimum is not None and out < minimum:
            self.fail(f"must be >= {minimum}, got {out}", section, key)
        return out

    def real(self, section: str, key: str, default=None):
        value = self.raw(section, key)
        if value is None:
            return default
        try:
            out = float(value)
        except ValueError:
            self.fail(f"expected a number, got {value!r}", section, key)
        if not np.isfinite(out):
            self.fail(f"must be finite, got {value!r}", section, key)
        return out

    def int_list(self, section: str, key: str, default=None, *, required: bool = False, minimum: int = 1):
        value = self.raw(section, key, required=required)
        if value is None:
            return default
        try:
            items = tuple(int(v, 0) for v in re.split(r"[,\s]+", value) if v)
        except ValueError:
            self.fail(f"expected a comma-separated list of integers, got {value!r}", section, key)
        if not items or min(items) < minimum:
            self.fail(f"entries must be >= {minimum}", section, key)
        return items

    def real_list(self, section: str, key: str, default=None):
        value = self.raw(section, key)
        if value is None:
            return default
        try:
            items = tuple(float(v) for v in re.split(r"[,\s]+", value) if v)
        except ValueError:
            self.fail(f"expected a comma-separated list of numbers, got {value!r}", section, key)
        if not items or min(items) <= 0:
            self.fail("entries must be positive", section, key)
        return items


def parse_config(text: str, source: str | None = None) -> ScenarioConfig:
    """Parse and validate configuration text.

    Raises:
        ConfigParseError: with the offending line and field.
        DimensionOverflow: if the total dimension exceeds the active limit.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.DuplicateOptionError as exc:
        raise ConfigParseError(f"duplicate option {exc.option!r}", line=exc.lineno, field=f"{exc.section}.{exc.option}") from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigParseError(f"duplicate section {exc.section!r}", line=exc.lineno, field=exc.section) from exc
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigParseError("content before the first section header", line=exc.lineno) from exc
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigParseError("malformed line", line=line) from exc
    r = _Reader(parser, _line_index(text))

    for section in parser.sections():
        if section not in SECTIONS:
            r.fail("unknown section", section)
        for key in parser.options(section):
            if key not in SECTIONS[section]:
                r.fail("unknown field", section, key)

    experiment = r.raw("scenario", "experiment", required=True)
    if experiment not in EXPERIMENTS:
        r.fail(f"experiment must be one of {', '.join(EXPERIMENTS)}", "scenario", "experiment")
    seed = r.integer("scenario", "seed", required=True, minimum=0)
    output = r.raw("scenario", "output", required=True)
    instances = r.integer("scenario", "instances", 1, minimum=1)

    system_dim = r.integer("dims", "system", required=True, minimum=2)
    env_dims = r.int_list("dims", "env", required=True, minimum=2)

    family = r.raw("hamiltonian", "family", FAMILIES[experiment][0])
    if family not in FAMILIES[experiment]:
        r.fail(f"family for {experiment} must be one of {', '.join(FAMILIES[experiment])}", "hamiltonian", "family")
    c_lo = r.real("hamiltonian", "coupling_min", 0.5)
    c_hi = r.real("hamiltonian", "coupling_max", 1.5)
    if c_hi < c_lo:
        r.fail("coupling_max must be >= coupling_min", "hamiltonian", "coupling_max")
    spec_file = r.raw("hamiltonian", "spec_file")
    if experiment == "custom" and spec_file is None:
        r.fail("custom experiments need a Hamiltonian file", "hamiltonian", "spec_file")
    if spec_file is not None and source is not None and not Path(spec_file).is_absolute():
        spec_file = str(Path(source).parent / spec_file)

    windows = r.real_list("time", "window_multiples", (1000.0,))
    samples = r.integer("time", "samples", 4000, minimum=1)

    sizes = r.int_list("partition", "sizes", None)
    if sizes is None:
        sizes = tuple(range(1, len(env_dims) + 1))
    if max(sizes) > len(env_dims):
        r.fail(f"group size exceeds the {len(env_dims)} environment factors", "partition", "sizes")

    tolerances = dict(DEFAULT_TOLERANCES)
    for key in SECTIONS["tolerances"]:
        value = r.real("tolerances", key)
        if value is not None:
            if value < 0:
                r.fail("tolerances must be non-negative", "tolerances", key)
            tolerances[key] = value

    if source is not None and not Path(output).is_absolute():
        output = str(Path(source).parent / output)

    config = ScenarioConfig(
        experiment=experiment,
        seed=seed,
        system_dim=system_dim,
        env_dims=env_dims,
        output_path=output,
        instances=instances,
        family=family,
        coupling_range=(c_lo, c_hi),
        spec_file=spec_file,
        window_multiples=windows,
        samples=samples,
        partition_sizes=tuple(sorted(set(sizes))),
        tolerances=tolerances,
        source=source,
    )
    if config.total_dim > qops.get_max_dim():
        raise DimensionOverflow(
            f"total dimension {config.total_dim} exceeds max_dim {qops.get_max_dim()} (line {r.lines.get(('dims', 'env'))})"
        )
    return config


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_config(text, source=str(path))
