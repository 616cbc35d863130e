"""Monte Carlo benchmark: sweep interference levels, score estimators, emit curves.

Each kappa level of the mixture config is one sweep point.  Records for
level i come from the substream ``SeedSequence(seed, spawn_key=(i,))``
with kappa pinned to that level's value, so every (config, seed) pair
maps to exactly one curve table.  MSE is averaged in the linear domain
over trials, then reported as 10*log10; standard errors are propagated
into dB with the delta method.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .estimators import (
    DEFAULT_BUDGET_BYTES,
    GridBudgetError,
    build_filter_bank,
    build_lmmse_from_marginals,
    lmmse_estimate,
    mmse_estimate,
    oracle_estimate_direct,
)
from .mixture import MixtureConfig, config_to_dict, kappa_to_sir, synthesize_batch
from .models import marginal_covariance

__all__ = [
    "ESTIMATOR_NAMES",
    "BenchmarkConfig",
    "CurveCell",
    "CurveTable",
    "run_benchmark",
    "emit_curves",
    "parse_curves",
    "PROFILE_NAMES",
    "make_profile",
]

#: estimators the harness knows how to run, in canonical output order
ESTIMATOR_NAMES = ("lmmse", "lmmse_known_kappa", "oracle", "mmse")

CSV_HEADER = "estimator,sir_db,mse_db,stderr_db,trials"


@dataclass(frozen=True)
class BenchmarkConfig:
    """One sweep: a mixture, a trial count per level, and an estimator set.

    ``estimators`` keeps the caller's order in the output table.
    ``out_path`` is carried for callers that emit directly; run_benchmark
    itself never touches the filesystem.
    """

    mixture: MixtureConfig
    trials: int
    estimators: tuple = ESTIMATOR_NAMES
    seed: int = 0
    budget_bytes: int = DEFAULT_BUDGET_BYTES
    out_path: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        names = tuple(self.estimators)
        if len(names) == 0:
            raise ValueError("estimator selection must not be empty")
        for name in names:
            if name not in ESTIMATOR_NAMES:
                raise ValueError(
                    f"unknown estimator {name!r}; choose from {ESTIMATOR_NAMES}"
                )
        if len(set(names)) != len(names):
            raise ValueError(f"estimator selection has duplicates: {names}")
        object.__setattr__(self, "estimators", names)


@dataclass(frozen=True)
class CurveCell:
    """One (estimator, SIR) point of a benchmark curve."""

    estimator: str
    sir_db: float
    mse_db: float
    stderr_db: float
    trials: int


@dataclass(frozen=True)
class CurveTable:
    """Benchmark output: cells in (estimator, level) order plus run metadata."""

    cells: tuple
    metadata: dict = field(default_factory=dict)

    def cell(self, estimator: str, sir_db: float) -> CurveCell:
        for c in self.cells:
            if c.estimator == estimator and c.sir_db == sir_db:
                return c
        raise KeyError(f"no cell for ({estimator!r}, {sir_db})")

    def estimators(self) -> tuple:
        seen = []
        for c in self.cells:
            if c.estimator not in seen:
                seen.append(c.estimator)
        return tuple(seen)


def _db_stats(err: np.ndarray) -> tuple[float, float]:
    """Mean MSE in dB and its delta-method standard error.

    ``err`` holds per-trial per-sample squared errors.  A single trial
    has no spread to estimate, so its standard error is reported as 0.0.
    """
    mean = float(err.mean())
    if err.size > 1:
        se_lin = float(err.std(ddof=1)) / np.sqrt(err.size)
        se_db = (10.0 / np.log(10.0)) * se_lin / mean
    else:
        se_db = 0.0
    return 10.0 * float(np.log10(mean)), se_db


def run_benchmark(config: BenchmarkConfig) -> CurveTable:
    """Sweep every kappa level and score the selected estimators.

    Per level, ``trials`` fresh records are drawn with kappa pinned;
    the per-record squared error ||shat - s||^2 / N is averaged in the
    linear domain.  A filter-bank that exceeds the memory budget drops
    ``mmse`` from the run and leaves a notice in the metadata instead of
    failing the sweep.
    """
    mix = config.mixture
    n = mix.n
    selected = list(config.estimators)
    notices = []

    needs_marginals = "lmmse" in selected or "lmmse_known_kappa" in selected
    if needs_marginals:
        cs_marg = marginal_covariance(mix.source, n)
        cb_marg = marginal_covariance(mix.interference, n)
    if "lmmse" in selected:
        prior_filter = build_lmmse_from_marginals(
            cs_marg, cb_marg, mix.kappa_levels, mix.sigma
        )
    bank = None
    if "mmse" in selected:
        try:
            bank = build_filter_bank(
                mix.source, mix.interference, mix.kappa_levels, mix.sigma, n,
                budget_bytes=config.budget_bytes,
            )
        except GridBudgetError as exc:
            selected.remove("mmse")
            notices.append(f"mmse omitted: {exc}")
            if not selected:
                raise ValueError(
                    "no estimator left to run: the only selected estimator "
                    f"was dropped ({exc})"
                ) from exc

    results = {name: [] for name in selected}
    for li, (kappa, _) in enumerate(mix.kappa_levels):
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(li,)))
        batch = synthesize_batch(mix, config.trials, rng, kappa=kappa)
        # nanodecibel rounding keeps stated sweep levels exact after the
        # kappa -> SIR -> kappa round trip
        sir_db = round(kappa_to_sir(kappa), 9)
        for name in selected:
            if name == "lmmse":
                shat = lmmse_estimate(prior_filter, batch.y)
            elif name == "lmmse_known_kappa":
                level_filter = build_lmmse_from_marginals(
                    cs_marg, cb_marg, ((kappa, 1.0),), mix.sigma
                )
                shat = lmmse_estimate(level_filter, batch.y)
            elif name == "oracle":
                shat = oracle_estimate_direct(
                    mix.source, mix.interference, mix.sigma,
                    batch.y, batch.tau_s, batch.tau_b, batch.kappa,
                )
            else:
                shat = mmse_estimate(bank, batch.y)
            err = np.sum(np.abs(shat - batch.s) ** 2, axis=0) / n
            mse_db, se_db = _db_stats(err)
            results[name].append(
                CurveCell(estimator=name, sir_db=sir_db, mse_db=mse_db,
                          stderr_db=se_db, trials=config.trials)
            )

    cells = tuple(c for name in selected for c in results[name])
    metadata = {
        "estimators": selected,
        "mixture": config_to_dict(mix),
        "notices": notices,
        "seed": config.seed,
        "trials": config.trials,
        "version": __version__,
    }
    return CurveTable(cells=cells, metadata=metadata)


def _format_float(x: float) -> str:
    return f"{x:.17g}"


def emit_curves(table: CurveTable, path, fmt: str = "csv") -> None:
    """Write a curve table as CSV (cells only) or JSON (cells + metadata).

    CSV rows carry full 17-significant-digit precision so parsing them
    back reproduces every float bit-exactly.  Output uses UTF-8 and LF
    line endings on every platform.
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")
    if len(table.cells) == 0:
        raise ValueError("refusing to emit an empty curve table")
    if fmt == "csv":
        lines = [CSV_HEADER]
        for c in table.cells:
            lines.append(
                f"{c.estimator},{_format_float(c.sir_db)},{_format_float(c.mse_db)},"
                f"{_format_float(c.stderr_db)},{c.trials}"
            )
        body = "\n".join(lines) + "\n"
    else:
        payload = {
            "cells": [
                {
                    "estimator": c.estimator,
                    "sir_db": c.sir_db,
                    "mse_db": c.mse_db,
                    "stderr_db": c.stderr_db,
                    "trials": c.trials,
                }
                for c in table.cells
            ],
            "metadata": table.metadata,
        }
        body = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(body)


def parse_curves(path, fmt: str | None = None) -> CurveTable:
    """Read a curve file back; ``fmt`` defaults to the file extension."""
    path = str(path)
    if fmt is None:
        fmt = "json" if path.endswith(".json") else "csv"
    if fmt == "csv":
        with open(path, encoding="utf-8") as fh:
            lines = [line.rstrip("\n") for line in fh if line.strip()]
        if not lines or lines[0] != CSV_HEADER:
            raise ValueError(
                f"not a curve file: expected header {CSV_HEADER!r}, "
                f"got {lines[0] if lines else 'empty file'!r}"
            )
        cells = []
        for line in lines[1:]:
            name, sir, mse, se, trials = line.split(",")
            cells.append(CurveCell(estimator=name, sir_db=float(sir),
                                   mse_db=float(mse), stderr_db=float(se),
                                   trials=int(trials)))
        return CurveTable(cells=tuple(cells), metadata={})
    if fmt == "json":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        cells = tuple(
            CurveCell(estimator=c["estimator"], sir_db=float(c["sir_db"]),
                      mse_db=float(c["mse_db"]), stderr_db=float(c["stderr_db"]),
                      trials=int(c["trials"]))
            for c in payload["cells"]
        )
        return CurveTable(cells=cells, metadata=payload.get("metadata", {}))
    raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")


# ---------------------------------------------------------------------------
# canned experiment profiles

PROFILE_NAMES = ("s51", "s52", "s52-reduced")


def _uniform_levels(sirs) -> tuple:
    from .mixture import sir_to_kappa

    prior = 1.0 / len(sirs)
    return tuple((sir_to_kappa(s), prior) for s in sirs)


def _block_buffer(period: int, n: int) -> int:
    """Smallest multiple of the period covering every offset window."""
    return -((n + period - 1) // -period) * period


def make_profile(
    name: str,
    *,
    sigma: float | None = None,
    trials: int | None = None,
    estimators: tuple | None = None,
    seed: int = 0,
    budget_bytes: int = DEFAULT_BUDGET_BYTES,
    out_path: str | None = None,
) -> BenchmarkConfig:
    """Build a canned sweep configuration.

    ``s51``: two random block sources (periods 11 and 5) at window 256,
    five SIR levels spanning [-6, 6] dB.  ``s52``: a root-raised-cosine
    source against an OFDM interferer at window 1280 over [-30, 3] dB in
    1.5 dB steps; its posterior grid is far past the default memory
    budget, so mmse is expected to drop out with a notice.
    ``s52-reduced`` is the same sweep at window 320 for quick runs.
    Defaults (overridable): 1000 trials, all estimators, noise 0.5 for
    the block profile and 0.1 for the others.
    """
    from .models import make_block_model, make_ofdm_model, make_rrc_model

    if name == "s51":
        n = 256
        source = make_block_model(11, block_seed=11,
                                  buffer_len=_block_buffer(11, n + 10))
        interference = make_block_model(5, block_seed=5,
                                        buffer_len=_block_buffer(5, n + 4))
        sirs = np.linspace(-6.0, 6.0, 5)
        default_sigma = 0.5
    elif name in ("s52", "s52-reduced"):
        n = 1280 if name == "s52" else 320
        source = make_rrc_model(sps=16, span_symbols=8, rolloff=0.5)
        interference = make_ofdm_model(n_subcarriers=64, cp_length=16)
        sirs = -30.0 + 1.5 * np.arange(23)
        default_sigma = 0.1
    else:
        raise ValueError(f"unknown profile {name!r}; choose from {PROFILE_NAMES}")

    mixture = MixtureConfig(
        source=source,
        interference=interference,
        n=n,
        sigma=default_sigma if sigma is None else sigma,
        kappa_levels=_uniform_levels(sirs),
    )
    return BenchmarkConfig(
        mixture=mixture,
        trials=1000 if trials is None else trials,
        estimators=ESTIMATOR_NAMES if estimators is None else tuple(estimators),
        seed=seed,
        budget_bytes=budget_bytes,
        out_path=out_path,
    )
