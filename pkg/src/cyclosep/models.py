"""Cyclostationary complex-Gaussian source models.

Three source families, all zero-mean circular complex Gaussian and
wide-sense cyclostationary with an integer period P:

``BlockCovModel``
    A long generator buffer built from independent P-sample blocks, each
    block the image of CN(0, I) symbols under a fixed P x P matrix drawn
    once from a seeded stream.  The covariance of the buffer is block
    diagonal with the same P x P block repeated.

``RRCModel``
    Single-carrier linear modulation: CN(0, 1) symbols shaped by a
    root-raised-cosine pulse at an integer number of samples per symbol.
    The period equals the samples-per-symbol factor.

``OFDMModel``
    Symbols drawn CN(0, 1) on a set of active subcarriers, converted to
    time domain per OFDM block and prefixed cyclically.  The period
    equals the block length (subcarriers plus cyclic prefix).

A window of N samples taken at offset ``tau`` into a realization is
Gaussian with the conditional covariance ``conditional_covariance(model,
tau, n)``.  Averaging that covariance over one full period of offsets
gives the stationarized marginal covariance, which is Toeplitz.

All models carry a ``power_scale`` amplitude factor; the factory
functions choose it so the marginal covariance has unit diagonal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "BlockCovModel",
    "RRCModel",
    "OFDMModel",
    "SourceModel",
    "rrc_taps",
    "make_block_model",
    "make_rrc_model",
    "make_ofdm_model",
    "normalize_power",
    "sample_source",
    "sample_source_batch",
    "conditional_covariance",
    "marginal_covariance",
    "model_to_config",
    "model_from_config",
    "save_model",
    "load_model",
]

#: absolute tolerance for the Toeplitz self-check on marginal covariances
TOEPLITZ_TOL = 1e-12


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Draw CN(0, 1) variates: independent real/imag parts, variance 1/2 each."""
    z = rng.standard_normal(size=tuple(shape) + (2,))
    return np.sqrt(0.5) * (z[..., 0] + 1j * z[..., 1])


@dataclass(frozen=True, eq=False)
class BlockCovModel:
    """Block-structured source built from a repeating P x P generator block.

    The generator buffer stacks ``buffer_len // period`` independent
    blocks, each ``block @ a`` with ``a`` CN(0, I).  ``block`` is drawn
    once, CN(0, 1) per entry, from a stream seeded by ``block_seed``.
    Sampling windows must satisfy ``tau + n <= buffer_len``.
    """

    period: int
    buffer_len: int
    block_seed: int
    block: np.ndarray
    power_scale: float = 1.0

    def __post_init__(self):
        if self.period < 1:
            raise ValueError(f"period must be >= 1, got {self.period}")
        if self.buffer_len < self.period or self.buffer_len % self.period != 0:
            raise ValueError(
                f"buffer_len must be a positive multiple of period, got "
                f"{self.buffer_len} with period {self.period}"
            )
        if self.block.shape != (self.period, self.period):
            raise ValueError(
                f"block must be {self.period} x {self.period}, got {self.block.shape}"
            )

    @property
    def kind(self) -> str:
        return "block"


@dataclass(frozen=True, eq=False)
class RRCModel:
    """Single-carrier source: CN(0, 1) symbols through a root-raised-cosine pulse.

    ``taps`` holds the pulse sampled at ``t = k / sps`` for
    ``k = -span_symbols * sps / 2 .. +span_symbols * sps / 2``.
    """

    sps: int
    span_symbols: int
    rolloff: float
    taps: np.ndarray
    power_scale: float = 1.0

    def __post_init__(self):
        if self.sps < 1:
            raise ValueError(f"sps must be >= 1, got {self.sps}")
        if self.span_symbols < 1 or self.span_symbols % 2 != 0:
            raise ValueError(
                f"span_symbols must be a positive even integer, got {self.span_symbols}"
            )
        if not 0.0 < self.rolloff <= 1.0:
            raise ValueError(f"rolloff must lie in (0, 1], got {self.rolloff}")
        expected = self.span_symbols * self.sps + 1
        if self.taps.shape != (expected,):
            raise ValueError(f"taps must have length {expected}, got {self.taps.shape}")

    @property
    def period(self) -> int:
        return self.sps

    @property
    def kind(self) -> str:
        return "rrc"


@dataclass(frozen=True, eq=False)
class OFDMModel:
    """Multicarrier source with cyclic prefix.

    Each block carries CN(0, 1) symbols on ``active_set`` out of
    ``n_subcarriers`` subcarriers; the time-domain block of
    ``n_subcarriers`` samples is preceded by its last ``cp_length``
    samples, giving a period of ``n_subcarriers + cp_length``.
    """

    n_subcarriers: int
    cp_length: int
    active_set: tuple
    power_scale: float = 1.0

    def __post_init__(self):
        if self.n_subcarriers < 1:
            raise ValueError(f"n_subcarriers must be >= 1, got {self.n_subcarriers}")
        if not 0 <= self.cp_length < self.n_subcarriers:
            raise ValueError(
                f"cp_length must lie in [0, n_subcarriers), got {self.cp_length}"
            )
        if len(self.active_set) == 0:
            raise ValueError("active_set must not be empty")
        acts = tuple(int(a) for a in self.active_set)
        if acts != tuple(sorted(set(acts))):
            raise ValueError("active_set must be strictly increasing")
        if acts[0] < 0 or acts[-1] >= self.n_subcarriers:
            raise ValueError(
                f"active_set entries must lie in [0, {self.n_subcarriers}), got {acts}"
            )

    @property
    def period(self) -> int:
        return self.n_subcarriers + self.cp_length

    @property
    def kind(self) -> str:
        return "ofdm"


SourceModel = BlockCovModel | RRCModel | OFDMModel


def rrc_taps(rolloff: float, sps: int, span_symbols: int) -> np.ndarray:
    """Root-raised-cosine pulse sampled at ``sps`` samples per symbol.

    Parameters
    ----------
    rolloff : float
        Excess-bandwidth factor in (0, 1].
    sps : int
        Samples per symbol.
    span_symbols : int
        Total pulse support in symbols (even); the returned filter has
        ``span_symbols * sps + 1`` taps centered on t = 0.

    Returns
    -------
    ndarray
        Real tap vector scaled to unit energy (sum of squares 1).  The
        two removable singularities of the closed form (t = 0 and
        |t| = 1 / (4 * rolloff)) use their analytic limits.
    """
    if not 0.0 < rolloff <= 1.0:
        raise ValueError(f"rolloff must lie in (0, 1], got {rolloff}")
    if sps < 1:
        raise ValueError(f"sps must be >= 1, got {sps}")
    if span_symbols < 1 or span_symbols % 2 != 0:
        raise ValueError(f"span_symbols must be a positive even integer, got {span_symbols}")
    half = span_symbols * sps // 2
    t = np.arange(-half, half + 1, dtype=np.float64) / sps
    b = rolloff

    g = np.empty_like(t)
    at0 = t == 0.0
    # |1 - (4 b t)^2| ~ 0 marks the second removable singularity
    den_factor = 1.0 - (4.0 * b * t) ** 2
    at_sing = (np.abs(den_factor) < 1e-10) & ~at0

    with np.errstate(divide="ignore", invalid="ignore"):
        num = np.sin(np.pi * t * (1.0 - b)) + 4.0 * b * t * np.cos(np.pi * t * (1.0 + b))
        g = num / (np.pi * t * den_factor)

    g[at0] = 1.0 - b + 4.0 * b / np.pi
    if np.any(at_sing):
        c = np.pi / (4.0 * b)
        lim = (b / np.sqrt(2.0)) * (
            (1.0 + 2.0 / np.pi) * np.sin(c) + (1.0 - 2.0 / np.pi) * np.cos(c)
        )
        g[at_sing] = lim
    if not np.all(np.isfinite(g)):
        raise RuntimeError(
            f"non-finite pulse taps for rolloff={rolloff}, sps={sps}; "
            f"singularity handling failed"
        )
    return g / np.sqrt(np.sum(g**2))


def _raw_power(model: SourceModel) -> float:
    """Mean marginal-covariance diagonal at power_scale = 1."""
    if isinstance(model, BlockCovModel):
        return float(np.trace(model.block @ model.block.conj().T).real) / model.period
    if isinstance(model, RRCModel):
        return float(np.sum(model.taps**2)) / model.sps
    if isinstance(model, OFDMModel):
        return len(model.active_set) / model.n_subcarriers
    raise TypeError(f"unsupported model type {type(model)!r}")


def normalize_power(model: SourceModel) -> SourceModel:
    """Return a copy whose marginal covariance has unit diagonal.

    The returned model's ``power_scale`` is 1 / sqrt(raw power), where
    raw power is the mean marginal variance of the unscaled model, so
    normalizing an already normalized model is a no-op and scaling a
    model by 2 in amplitude halves the resulting ``power_scale``.
    """
    p0 = _raw_power(model)
    if p0 <= 0.0:
        raise ValueError(f"model has nonpositive raw power {p0}")
    return replace(model, power_scale=1.0 / np.sqrt(p0))


def make_block_model(period: int, block_seed: int, buffer_len: int | None = None) -> BlockCovModel:
    """Draw a unit-power block model with a CN(0, 1) generator block.

    The block entries come from ``default_rng(SeedSequence(block_seed))``
    so the model is fully determined by its config.
    """
    if buffer_len is None:
        buffer_len = 50 * period
    rng = np.random.default_rng(np.random.SeedSequence(block_seed))
    block = complex_normal(rng, (period, period))
    return normalize_power(
        BlockCovModel(period=period, buffer_len=buffer_len, block_seed=block_seed, block=block)
    )


def make_rrc_model(sps: int = 16, span_symbols: int = 8, rolloff: float = 0.5) -> RRCModel:
    """Unit-power single-carrier model with root-raised-cosine shaping."""
    taps = rrc_taps(rolloff, sps, span_symbols)
    return normalize_power(
        RRCModel(sps=sps, span_symbols=span_symbols, rolloff=rolloff, taps=taps)
    )


def make_ofdm_model(
    n_subcarriers: int = 64, cp_length: int = 16, active_set=None
) -> OFDMModel:
    """Unit-power OFDM model; by default every subcarrier except DC is active."""
    if active_set is None:
        active_set = tuple(range(1, n_subcarriers))
    return normalize_power(
        OFDMModel(
            n_subcarriers=n_subcarriers,
            cp_length=cp_length,
            active_set=tuple(int(a) for a in active_set),
        )
    )


def _check_window(model: SourceModel, tau: int, n: int) -> None:
    p = model.period
    if not 0 <= tau < p:
        raise ValueError(f"tau must lie in [0, {p}), got {tau}")
    if n < 1:
        raise ValueError(f"window length must be >= 1, got {n}")
    if isinstance(model, BlockCovModel) and tau + n > model.buffer_len:
        raise ValueError(
            f"window [tau, tau + n) = [{tau}, {tau + n}) exceeds the model buffer "
            f"of length {model.buffer_len}"
        )


def _rrc_symbol_matrix(model: RRCModel, tau: int, n: int):
    """Matrix mapping symbol vector to the window s[tau : tau + n].

    Returns (gamma, p_lo) with gamma[i, j] = g[tau + i - (p_lo + j) * sps]
    over every symbol index whose pulse intersects the window.
    """
    half = model.span_symbols * model.sps // 2
    p_lo = -((half - tau) // model.sps)  # ceil((tau - half) / sps)
    p_hi = (tau + n - 1 + half) // model.sps
    cols = p_hi - p_lo + 1
    k = (
        (tau + np.arange(n))[:, None]
        - (p_lo + np.arange(cols))[None, :] * model.sps
        + half
    )
    valid = (k >= 0) & (k <= 2 * half)
    gamma = np.where(valid, model.taps[np.clip(k, 0, 2 * half)], 0.0)
    return gamma, p_lo


def _ofdm_subcarrier_corr(model: OFDMModel, n: int) -> np.ndarray:
    """Correlation D[d] = (1/N_sc) sum over active l of exp(2j pi l d / N_sc),
    tabulated for lags d = -(n-1) .. n-1 (index shift n - 1)."""
    lags = np.arange(-(n - 1), n)
    ells = np.asarray(model.active_set, dtype=np.float64)
    phases = np.exp(2j * np.pi * np.outer(lags, ells) / model.n_subcarriers)
    return phases.sum(axis=1) / model.n_subcarriers


def sample_source_batch(
    model: SourceModel, tau: int, n: int, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``count`` independent windows of length ``n`` at offset ``tau``.

    Returns an (n, count) complex128 array; column c is realization c.
    All randomness comes from ``rng``.
    """
    _check_window(model, tau, n)
    scale = model.power_scale

    if isinstance(model, BlockCovModel):
        p = model.period
        nb = -((tau + n) // -p)  # blocks touching the window
        symbols = complex_normal(rng, (p, nb * count))
        blocks = (model.block @ symbols).reshape(p, nb, count)
        buffer = blocks.transpose(1, 0, 2).reshape(nb * p, count)
        return scale * buffer[tau : tau + n]

    if isinstance(model, RRCModel):
        gamma, _ = _rrc_symbol_matrix(model, tau, n)
        symbols = complex_normal(rng, (gamma.shape[1], count))
        return scale * (gamma @ symbols)

    if isinstance(model, OFDMModel):
        nsc, ncp, nb_len = model.n_subcarriers, model.cp_length, model.period
        n_sym = (tau + n - 1) // nb_len + 1
        spectrum = np.zeros((nsc, n_sym, count), dtype=np.complex128)
        spectrum[list(model.active_set)] = complex_normal(
            rng, (len(model.active_set), n_sym, count)
        )
        body = np.sqrt(nsc) * np.fft.ifft(spectrum, axis=0)
        # sample m of a block reads body index (m - cp) mod N_sc, which
        # makes the first cp samples a copy of the last cp samples
        idx = (np.arange(nb_len) - ncp) % nsc
        buffer = body[idx].transpose(1, 0, 2).reshape(n_sym * nb_len, count)
        return scale * buffer[tau : tau + n]

    raise TypeError(f"unsupported model type {type(model)!r}")


def sample_source(model: SourceModel, tau: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw one window of length ``n`` at offset ``tau``; returns shape (n,)."""
    return sample_source_batch(model, tau, n, 1, rng)[:, 0]


def conditional_covariance(model: SourceModel, tau: int, n: int) -> np.ndarray:
    """Covariance of an n-sample window at offset ``tau``.

    ``tau`` may be any nonnegative integer; it is reduced modulo the
    model period, which is exact because the process statistics repeat
    with that period.  The result is Hermitian positive semidefinite.
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    tau = tau % model.period
    _check_window(model, tau, n)
    scale2 = model.power_scale**2

    if isinstance(model, BlockCovModel):
        bbh = model.block @ model.block.conj().T
        pos = tau + np.arange(n)
        idx = pos % model.period
        blk = pos // model.period
        cov = bbh[np.ix_(idx, idx)] * (blk[:, None] == blk[None, :])
        return scale2 * cov

    if isinstance(model, RRCModel):
        gamma, _ = _rrc_symbol_matrix(model, tau, n)
        return scale2 * (gamma @ gamma.T).astype(np.complex128)

    if isinstance(model, OFDMModel):
        corr = _ofdm_subcarrier_corr(model, n)
        pos = tau + np.arange(n)
        blk = pos // model.period
        diff = pos[:, None] - pos[None, :] + (n - 1)
        cov = corr[diff] * (blk[:, None] == blk[None, :])
        return scale2 * cov

    raise TypeError(f"unsupported model type {type(model)!r}")


def marginal_covariance(model: SourceModel, n: int) -> np.ndarray:
    """Stationarized covariance: the conditional covariance averaged over
    one period of offsets.  Toeplitz by construction; this is verified
    entrywise to ``TOEPLITZ_TOL`` and a violation raises ``RuntimeError``.

    For a ``BlockCovModel`` the window must fit the buffer at every
    offset, so ``n + period - 1 <= buffer_len`` is required.
    """
    p = model.period
    acc = np.zeros((n, n), dtype=np.complex128)
    for tau in range(p):
        acc += conditional_covariance(model, tau, n)
    acc /= p
    if n > 1:
        dev = np.max(np.abs(acc[1:, 1:] - acc[:-1, :-1]))
        if dev > TOEPLITZ_TOL:
            raise RuntimeError(
                f"marginal covariance deviates from Toeplitz by {dev:.3e} "
                f"(tolerance {TOEPLITZ_TOL:.1e}); internal inconsistency"
            )
    return acc


def model_to_config(model: SourceModel) -> dict:
    """JSON-ready description; the block matrix is represented by its seed."""
    if isinstance(model, BlockCovModel):
        return {
            "kind": "block",
            "period": model.period,
            "buffer_len": model.buffer_len,
            "block_seed": model.block_seed,
            "power_scale": float(model.power_scale),
        }
    if isinstance(model, RRCModel):
        return {
            "kind": "rrc",
            "sps": model.sps,
            "span_symbols": model.span_symbols,
            "rolloff": model.rolloff,
            "power_scale": float(model.power_scale),
        }
    if isinstance(model, OFDMModel):
        return {
            "kind": "ofdm",
            "n_subcarriers": model.n_subcarriers,
            "cp_length": model.cp_length,
            "active_subcarriers": list(model.active_set),
            "power_scale": float(model.power_scale),
        }
    raise TypeError(f"unsupported model type {type(model)!r}")


def model_from_config(config: dict) -> SourceModel:
    """Inverse of ``model_to_config``; block matrices are redrawn from the seed."""
    try:
        kind = config["kind"]
    except KeyError:
        raise ValueError("model config lacks a 'kind' entry") from None
    scale = float(config.get("power_scale", 1.0))
    if kind == "block":
        rng = np.random.default_rng(np.random.SeedSequence(int(config["block_seed"])))
        period = int(config["period"])
        block = complex_normal(rng, (period, period))
        return BlockCovModel(
            period=period,
            buffer_len=int(config["buffer_len"]),
            block_seed=int(config["block_seed"]),
            block=block,
            power_scale=scale,
        )
    if kind == "rrc":
        sps = int(config["sps"])
        span = int(config["span_symbols"])
        rolloff = float(config["rolloff"])
        return RRCModel(
            sps=sps,
            span_symbols=span,
            rolloff=rolloff,
            taps=rrc_taps(rolloff, sps, span),
            power_scale=scale,
        )
    if kind == "ofdm":
        return OFDMModel(
            n_subcarriers=int(config["n_subcarriers"]),
            cp_length=int(config["cp_length"]),
            active_set=tuple(int(a) for a in config["active_subcarriers"]),
            power_scale=scale,
        )
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model: SourceModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_config(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> SourceModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_config(json.load(fh))
