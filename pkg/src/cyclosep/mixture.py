"""Mixture synthesis: y = s + kappa * b + sigma * z with latent offsets.

Each record draws a source offset uniform over the source period, an
interferer offset uniform over the interferer period, and an interference
gain kappa from a discrete prior, then adds circular white noise at level
sigma.  Records are reproducible individually: record i of a dataset uses
the substream ``SeedSequence(seed, spawn_key=(i,))`` and a fixed draw
order (tau_s, tau_b, kappa index, source window, interferer window,
noise), so it does not depend on how many records surround it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import SourceModel, complex_normal, model_from_config, model_to_config
from .models import sample_source_batch

__all__ = [
    "MixtureConfig",
    "MixtureRecord",
    "MixtureBatch",
    "sir_to_kappa",
    "kappa_to_sir",
    "synthesize",
    "synthesize_batch",
    "make_dataset",
    "config_to_dict",
    "config_from_dict",
]


def sir_to_kappa(sir_db: float) -> float:
    """Interference amplitude for a signal-to-interference ratio in dB.

    SIR is a power ratio of 1 / kappa^2 for unit-power sources, so
    kappa = 10 ** (-sir_db / 20).
    """
    return 10.0 ** (-sir_db / 20.0)


def kappa_to_sir(kappa: float) -> float:
    if kappa <= 0.0:
        raise ValueError(f"kappa must be positive to express an SIR, got {kappa}")
    return float(-20.0 * np.log10(kappa))


@dataclass(frozen=True)
class MixtureConfig:
    """Mixture description: two models, window length, noise, kappa prior.

    ``kappa_levels`` is a tuple of (kappa, prior) pairs; the kappas must
    be strictly positive and distinct, the priors nonnegative with sum 1
    within 1e-12.  ``sigma`` has no default on purpose: every synthesis
    run states its noise level explicitly.  An interference-free mixture
    is expressed with a zero-generator interference model, not kappa = 0.
    """

    source: SourceModel
    interference: SourceModel
    n: int
    sigma: float
    kappa_levels: tuple = field(default=((1.0, 1.0),))

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"window length must be >= 1, got {self.n}")
        if not np.isfinite(self.sigma) or self.sigma < 0.0:
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        if len(self.kappa_levels) == 0:
            raise ValueError("kappa_levels must not be empty")
        levels = tuple((float(k), float(p)) for k, p in self.kappa_levels)
        for k, p in levels:
            if k <= 0.0:
                raise ValueError(f"kappa levels must be strictly positive, got {k}")
            if p < 0.0:
                raise ValueError(f"priors must be nonnegative, got {p}")
        if len({k for k, _ in levels}) != len(levels):
            raise ValueError("kappa levels must be distinct")
        total = sum(p for _, p in levels)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"priors must sum to 1 within 1e-12, got {total!r}")
        object.__setattr__(self, "kappa_levels", levels)

    @property
    def kappas(self) -> np.ndarray:
        return np.array([k for k, _ in self.kappa_levels])

    @property
    def priors(self) -> np.ndarray:
        return np.array([p for _, p in self.kappa_levels])


@dataclass
class MixtureRecord:
    """One observation window with its clean source and latent draw.

    Latents are None for records imported from files that omit them.
    """

    y: np.ndarray
    s: np.ndarray
    tau_s: int | None
    tau_b: int | None
    kappa: float | None


@dataclass
class MixtureBatch:
    """Column-stacked records: y and s are (n, count), latents are (count,)."""

    y: np.ndarray
    s: np.ndarray
    tau_s: np.ndarray
    tau_b: np.ndarray
    kappa: np.ndarray

    @property
    def count(self) -> int:
        return self.y.shape[1]


def synthesize_batch(
    config: MixtureConfig,
    count: int,
    rng: np.random.Generator,
    kappa: float | None = None,
) -> MixtureBatch:
    """Draw ``count`` records from one stream, vectorized.

    Latents first (tau_s, tau_b, kappa indices for the whole batch), then
    source windows grouped by offset, interferer windows grouped by
    offset, then noise.  Pass ``kappa`` to pin the gain for every record
    (the kappa prior draw is skipped entirely), as sweeps over fixed
    interference levels do.
    """
    ps, pb = config.source.period, config.interference.period
    tau_s = rng.integers(0, ps, size=count)
    tau_b = rng.integers(0, pb, size=count)
    if kappa is None:
        idx = rng.choice(len(config.kappa_levels), size=count, p=config.priors)
        kap = config.kappas[idx]
    else:
        kap = np.full(count, float(kappa))

    n = config.n
    s = np.empty((n, count), dtype=np.complex128)
    for tau in np.unique(tau_s):
        cols = np.flatnonzero(tau_s == tau)
        s[:, cols] = sample_source_batch(config.source, int(tau), n, cols.size, rng)
    b = np.empty((n, count), dtype=np.complex128)
    for tau in np.unique(tau_b):
        cols = np.flatnonzero(tau_b == tau)
        b[:, cols] = sample_source_batch(config.interference, int(tau), n, cols.size, rng)

    y = s + kap[None, :] * b
    if config.sigma > 0.0:
        y = y + config.sigma * complex_normal(rng, (n, count))
    return MixtureBatch(y=y, s=s, tau_s=tau_s, tau_b=tau_b, kappa=kap)


def synthesize(config: MixtureConfig, rng: np.random.Generator) -> MixtureRecord:
    """Draw a single record; the batch path with count 1."""
    batch = synthesize_batch(config, 1, rng)
    return MixtureRecord(
        y=batch.y[:, 0],
        s=batch.s[:, 0],
        tau_s=int(batch.tau_s[0]),
        tau_b=int(batch.tau_b[0]),
        kappa=float(batch.kappa[0]),
    )


def make_dataset(config: MixtureConfig, count: int, seed: int) -> list[MixtureRecord]:
    """Draw ``count`` records, one child stream per record.

    Record i comes from ``SeedSequence(seed, spawn_key=(i,))``, so any
    record can be regenerated in isolation and datasets sharing a seed
    agree on their common prefix.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    records = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        records.append(synthesize(config, rng))
    return records


def config_to_dict(config: MixtureConfig) -> dict:
    return {
        "source": model_to_config(config.source),
        "interference": model_to_config(config.interference),
        "n": config.n,
        "sigma": config.sigma,
        "kappa_levels": [
            {"kappa": k, "sir_db": kappa_to_sir(k), "prior": p}
            for k, p in config.kappa_levels
        ],
    }


def config_from_dict(data: dict) -> MixtureConfig:
    """Build a config from parsed JSON.

    Levels may specify ``kappa`` directly or ``sir_db``; ``prior`` may be
    omitted from every level, which means uniform.
    """
    for key in ("source", "interference", "n", "sigma", "kappa_levels"):
        if key not in data:
            raise ValueError(f"mixture config lacks required entry {key!r}")
    raw_levels = data["kappa_levels"]
    if not raw_levels:
        raise ValueError("kappa_levels must not be empty")
    kappas = []
    priors = []
    for entry in raw_levels:
        has_kappa = entry.get("kappa") is not None
        has_sir = entry.get("sir_db") is not None
        if has_kappa:
            k = float(entry["kappa"])
            if has_sir and abs(sir_to_kappa(float(entry["sir_db"])) - k) > 1e-9 * max(k, 1.0):
                raise ValueError(
                    f"level specifies inconsistent kappa {k} and sir_db {entry['sir_db']}"
                )
        elif has_sir:
            k = sir_to_kappa(float(entry["sir_db"]))
        else:
            raise ValueError("each kappa level needs 'kappa' or 'sir_db'")
        kappas.append(k)
        priors.append(entry.get("prior"))
    if any(p is None for p in priors):
        if not all(p is None for p in priors):
            raise ValueError("give a prior for every level or for none")
        priors = [1.0 / len(kappas)] * len(kappas)
    return MixtureConfig(
        source=model_from_config(data["source"]),
        interference=model_from_config(data["interference"]),
        n=int(data["n"]),
        sigma=float(data["sigma"]),
        kappa_levels=tuple(zip(kappas, priors)),
    )
