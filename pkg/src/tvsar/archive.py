"""On-disk draws archive: one CSV per block plus ``manifest.json``.

Numbers are written with 17 significant digits so they reload exactly.
Timings are not part of the archive (they would break byte-identity); the
CLI writes them to ``run_log.jsonl`` alongside it.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from tvsar import __version__
from tvsar.config import ConfigError, RunConfig
from tvsar.errors import StaleArchive
from tvsar.model import SarStructure
from tvsar.samplers import PosteriorDraws

__all__ = ["save_archive", "load_archive", "file_sha256", "RUN_LOG"]

RUN_LOG = "run_log.jsonl"
_FMT = "%.17g"


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write(path, header, rows, int_cols):
    fmt = ["%d"] * int_cols + [_FMT] * (rows.shape[1] - int_cols)
    np.savetxt(path, rows, fmt=fmt, delimiter=",", header=",".join(header), comments="")


def _path_rows(arr, times):
    # (draws, T+1, r) -> rows of (draw, t, values...)
    n, T1, r = arr.shape
    d = np.repeat(np.arange(n), T1)
    t = np.tile(times, n)
    return np.column_stack([d, t, arr.reshape(n * T1, r)])


def save_archive(draws, directory, config):
    """Write ``draws`` to ``directory``; ``config`` is a :class:`RunConfig`."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    names = draws.structure.coefficient_names()
    n = draws.n_draws
    files = {}

    _write(out / "theta.csv", ["draw", "t"] + names, _path_rows(draws.theta, draws.times), 2)
    _write(out / "h.csv", ["draw", "t"] + names, _path_rows(draws.h, draws.times), 2)
    idx = np.arange(n)[:, None]
    _write(out / "mu.csv", ["draw"] + names, np.hstack([idx, draws.mu]), 1)
    _write(out / "kappa.csv", ["draw"] + names, np.hstack([idx, draws.kappa]), 1)
    if draws.noise == "sv":
        sig = draws.sigma[:, :, None]
        _write(out / "sigma.csv", ["draw", "t", "sigma"], _path_rows(sig, draws.times[1:]), 2)
        _write(out / "sv_params.csv", ["draw", "mean", "persistence", "variance"],
               np.hstack([idx, draws.sv_params]), 1)
    else:
        _write(out / "sigma.csv", ["draw", "sigma"], np.column_stack([np.arange(n), draws.sigma]), 1)
    rates = np.column_stack([draws.times, draws.update_rates])
    _write(out / "update_rates.csv", ["t"] + names, rates, 1)

    for p in sorted(out.glob("*.csv")):
        files[p.name] = file_sha256(p)

    manifest = {
        "format": "tvsar-draws/1",
        "version": __version__,
        "structure": draws.structure.to_dict(),
        "times": [int(draws.times[0]), int(draws.times[-1])],
        "n_draws": int(n),
        "noise": draws.noise,
        "seed": int(draws.seed),
        "config": config.canonical(),
        "config_sha256": config.sha256(),
        "resample_count": int(draws.resample_count),
        "degenerate_events": int(draws.degenerate_events),
        "mean_update_rate": dict(zip(names, map(float, draws.update_rates.mean(axis=0)))),
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _read(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def load_archive(directory):
    """Load and verify an archive; returns ``(PosteriorDraws, manifest)``.

    Raises :class:`StaleArchive` if a file is missing or its hash (or the
    config hash) does not match the manifest.
    """
    d = Path(directory)
    try:
        manifest = json.loads((d / "manifest.json").read_text())
    except FileNotFoundError:
        raise StaleArchive(f"{d}: no manifest.json") from None
    try:
        cfg = RunConfig({k: tuple(v) if isinstance(v, list) else v
                                for k, v in manifest["config"].items()})
    except ConfigError as exc:
        raise StaleArchive(f"{d}: manifest config is invalid: {exc}") from None
    if cfg.sha256() != manifest.get("config_sha256"):
        raise StaleArchive(f"{d}: config hash does not match the manifest")
    for name, digest in manifest["files"].items():
        p = d / name
        if not p.exists():
            raise StaleArchive(f"{d}: missing {name}")
        if file_sha256(p) != digest:
            raise StaleArchive(f"{d}: {name} has changed since it was written")

    st = SarStructure(manifest["structure"]["seasons"], manifest["structure"]["orders"])
    n, r = manifest["n_draws"], st.r
    first, last = manifest["times"]
    times = np.arange(first, last + 1)
    T1 = times.size

    def paths(name):
        a = _read(d / name)
        return a[:, 2:].reshape(n, T1, r)

    mu = _read(d / "mu.csv")[:, 1:].reshape(n, r)
    kappa = _read(d / "kappa.csv")[:, 1:].reshape(n, r)
    sv = None
    if manifest["noise"] == "sv":
        sigma = _read(d / "sigma.csv")[:, 2].reshape(n, T1 - 1)
        sv = _read(d / "sv_params.csv")[:, 1:]
    else:
        sigma = _read(d / "sigma.csv")[:, 1]
    rates = _read(d / "update_rates.csv")[:, 1:].reshape(T1, r)
    draws = PosteriorDraws(
        structure=st, times=times, theta=paths("theta.csv"), h=paths("h.csv"),
        sigma=sigma, mu=mu, kappa=kappa, update_rates=rates, noise=manifest["noise"],
        sv_params=sv, seed=manifest["seed"], resample_count=manifest["resample_count"],
        degenerate_events=manifest["degenerate_events"])
    return draws, manifest
