"""Run configuration: flat ``section.key = value`` files plus command-line overrides."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from tvsar.dsp import DspPriors, OffsetPolicy
from tvsar.errors import InvalidArgument
from tvsar.model import SarStructure
from tvsar.samplers import GibbsConfig, SvPriors

__all__ = ["ConfigError", "RunConfig", "parse_config_text", "load_config", "DEFAULTS"]


class ConfigError(InvalidArgument):
    """Malformed or unknown configuration entry."""


def _ints(text):
    return tuple(int(v) for v in str(text).replace(",", " ").split())


def _opt_float(text):
    return None if str(text).lower() in ("", "none", "auto") else float(text)


def _bool(text):
    v = str(text).lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default)
DEFAULTS = {
    "model.seasons": (_ints, (1, 12)),
    "model.orders": (_ints, (1, 1)),
    "sampler.kind": (str, "ffbsx"),
    "sampler.draws": (int, 10000),
    "sampler.burnin": (int, 3000),
    "sampler.thin": (int, 10),
    "sampler.particles": (int, 100),
    "sampler.ess_min": (_opt_float, None),
    "sampler.warmup_draws": (int, 500),
    "sampler.jacobian": (str, "ad"),
    "sampler.init": (str, "default"),
    "sampler.log_every": (int, 100),
    "dsp.offset": (str, "fixed:1e-16"),
    "dsp.mu0": (float, -15.0),
    "dsp.sigma0": (float, 3.0),
    "dsp.kappa0": (float, 0.5),
    "dsp.psi0": (float, 0.3),
    "noise.sv": (_bool, False),
    "noise.v0": (float, 3.0),
    "noise.sv_mean_sd": (float, 10.0),
    "noise.sv_phi0": (float, 0.9),
    "noise.sv_phi_sd": (float, 0.1),
    "noise.sv_var_dof": (float, 5.0),
    "noise.sv_var_scale": (float, 0.1),
    "data.detrend": (int, 0),
    "run.seed": (int, 0),
    "spectrum.n_omegas": (int, 314),
    "spectrum.omega_min": (float, 0.01),
    "lps.split": (int, 0),
    "lps.refit_every": (int, 12),
    "lps.regular": (_ints, ()),
    "lps.seasonal": (_ints, ()),
}


def parse_config_text(text, source="<config>"):
    """Parse ``section.key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = DEFAULTS[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return values


def load_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read(), str(path))


@dataclass
class RunConfig:
    """Fully resolved settings of one run."""

    values: dict = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.values) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
        merged = {k: d for k, (_, d) in DEFAULTS.items()}
        merged.update(self.values)
        self.values = merged
        # build eagerly so bad values fail before any computation
        self.structure = self._structure()
        self.gibbs = self._gibbs()
        if self.values["data.detrend"] < 0:
            raise ConfigError("data.detrend must be 0 (off) or a positive window")

    def __getitem__(self, key):
        return self.values[key]

    def _structure(self):
        try:
            return SarStructure(self["model.seasons"], self["model.orders"])
        except InvalidArgument as exc:
            raise ConfigError(f"model: {exc}") from None

    def _gibbs(self, **overrides):
        v = self.values
        try:
            cfg = GibbsConfig(
                draws=v["sampler.draws"], burnin=v["sampler.burnin"], thin=v["sampler.thin"],
                sampler=v["sampler.kind"], particles=v["sampler.particles"],
                ess_min=v["sampler.ess_min"], warmup_draws=v["sampler.warmup_draws"],
                offset=OffsetPolicy.parse(v["dsp.offset"]),
                dsp_priors=DspPriors(v["dsp.mu0"], v["dsp.sigma0"], v["dsp.kappa0"], v["dsp.psi0"]),
                noise="sv" if v["noise.sv"] else "static", v0=v["noise.v0"],
                sv_priors=SvPriors(None, v["noise.sv_mean_sd"], v["noise.sv_phi0"],
                                   v["noise.sv_phi_sd"], v["noise.sv_var_dof"],
                                   v["noise.sv_var_scale"]),
                jacobian=v["sampler.jacobian"], init=v["sampler.init"], seed=v["run.seed"],
                log_every=v["sampler.log_every"], **overrides)
        except InvalidArgument as exc:
            raise ConfigError(str(exc)) from None
        return cfg

    def with_orders(self, orders):
        values = dict(self.values)
        values["model.orders"] = tuple(orders)
        return RunConfig(values)

    def canonical(self):
        """JSON-ready dict with sorted keys and lists instead of tuples."""
        return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(self.values.items())}

    def sha256(self):
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()
