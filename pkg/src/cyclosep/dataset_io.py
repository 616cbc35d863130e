"""Binary containers: datasets, covariance matrices, filter banks.

All integers little-endian.  Dataset layout ("CSDS"):

    header  <4sIIQI   magic, version, n, record count, flags (bit 0: latents)
    record  y then s, each n complex64 (re, im float32 pairs)
            if latents: <IId  tau_s, tau_b, kappa

A JSON sidecar (same filename + ".json") carries free-form metadata and
is written with sorted keys so repeated exports are byte-identical.

Covariance layout ("CSCV"): header <4sIII (magic, version, n, reserved),
then the n x n complex128 matrix row-major.

Filter-bank layout ("CSFB"): header <4sIII, then <IIId (source period,
interferer period, kappa count, sigma), kappas, log priors, log
determinants, source conditional covariances, Cholesky factors.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .estimators import FilterBank
from .mixture import MixtureRecord

__all__ = [
    "FormatError",
    "export_dataset",
    "import_dataset",
    "write_covariance",
    "read_covariance",
    "write_filter_bank",
    "read_filter_bank",
]

DATASET_MAGIC = b"CSDS"
DATASET_VERSION = 1
_DATASET_HEADER = struct.Struct("<4sIIQI")
_LATENT = struct.Struct("<IId")
FLAG_LATENTS = 1

COV_MAGIC = b"CSCV"
COV_VERSION = 1
_COV_HEADER = struct.Struct("<4sIII")

BANK_MAGIC = b"CSFB"
BANK_VERSION = 1
_BANK_HEADER = struct.Struct("<4sIII")
_BANK_SHAPE = struct.Struct("<IIId")


class FormatError(ValueError):
    """A container file that does not match its declared layout."""


def export_dataset(records, path, include_latents=False, metadata=None):
    """Write records to ``path`` and metadata to ``path + '.json'``.

    With ``include_latents`` every record must carry its latent triple.
    """
    records = list(records)
    n = records[0].y.shape[0] if records else 0
    flags = FLAG_LATENTS if include_latents else 0
    with open(path, "wb") as fh:
        fh.write(_DATASET_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, n,
                                      len(records), flags))
        for i, rec in enumerate(records):
            if rec.y.shape != (n,) or rec.s.shape != (n,):
                raise ValueError(f"record {i} has window length "
                                 f"{rec.y.shape[0]}, expected {n}")
            fh.write(np.ascontiguousarray(rec.y, dtype="<c8").tobytes())
            fh.write(np.ascontiguousarray(rec.s, dtype="<c8").tobytes())
            if include_latents:
                if rec.tau_s is None or rec.tau_b is None or rec.kappa is None:
                    raise ValueError(f"record {i} lacks latents but "
                                     f"include_latents was requested")
                fh.write(_LATENT.pack(rec.tau_s, rec.tau_b, rec.kappa))
    side = dict(metadata) if metadata else {}
    # Container-derived facts override carried-over metadata; a re-export
    # that strips latents must not inherit the old sidecar's flag.
    side.update({"n": n, "count": len(records),
                 "latents": bool(include_latents)})
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)
        fh.write("\n")


def import_dataset(path):
    """Read a dataset; returns (records, metadata or None).

    Windows come back as complex128 (the file stores complex64).  Header
    and byte counts are validated; mismatch raises ``FormatError``.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _DATASET_HEADER.size:
        raise FormatError(f"file too short for a dataset header: {len(raw)} bytes")
    magic, version, n, count, flags = _DATASET_HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {DATASET_MAGIC!r}")
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    has_latents = bool(flags & FLAG_LATENTS)
    rec_bytes = 2 * n * 8 + (_LATENT.size if has_latents else 0)
    expected = _DATASET_HEADER.size + count * rec_bytes
    if len(raw) != expected:
        raise FormatError(
            f"dataset of {count} records with n={n} should be {expected} "
            f"bytes, file has {len(raw)}"
        )
    records = []
    off = _DATASET_HEADER.size
    for _ in range(count):
        y = np.frombuffer(raw, dtype="<c8", count=n, offset=off).astype(np.complex128)
        off += n * 8
        s = np.frombuffer(raw, dtype="<c8", count=n, offset=off).astype(np.complex128)
        off += n * 8
        if has_latents:
            tau_s, tau_b, kappa = _LATENT.unpack_from(raw, off)
            off += _LATENT.size
        else:
            tau_s = tau_b = kappa = None
        records.append(MixtureRecord(y=y, s=s, tau_s=tau_s, tau_b=tau_b, kappa=kappa))
    metadata = None
    try:
        with open(str(path) + ".json", encoding="utf-8") as fh:
            metadata = json.load(fh)
    except FileNotFoundError:
        pass
    return records, metadata


def write_covariance(path, matrix):
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"covariance must be square, got shape {matrix.shape}")
    n = matrix.shape[0]
    with open(path, "wb") as fh:
        fh.write(_COV_HEADER.pack(COV_MAGIC, COV_VERSION, n, 0))
        fh.write(np.ascontiguousarray(matrix, dtype="<c16").tobytes())


def read_covariance(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _COV_HEADER.size:
        raise FormatError(f"file too short for a covariance header: {len(raw)} bytes")
    magic, version, n, _ = _COV_HEADER.unpack_from(raw)
    if magic != COV_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {COV_MAGIC!r}")
    if version != COV_VERSION:
        raise FormatError(f"unsupported covariance version {version}")
    expected = _COV_HEADER.size + n * n * 16
    if len(raw) != expected:
        raise FormatError(f"covariance of order {n} should be {expected} bytes, "
                          f"file has {len(raw)}")
    mat = np.frombuffer(raw, dtype="<c16", count=n * n, offset=_COV_HEADER.size)
    return mat.reshape(n, n).copy()


def write_filter_bank(path, bank):
    with open(path, "wb") as fh:
        fh.write(_BANK_HEADER.pack(BANK_MAGIC, BANK_VERSION, bank.n, 0))
        fh.write(_BANK_SHAPE.pack(bank.period_s, bank.period_b,
                                  len(bank.kappas), bank.sigma))
        fh.write(np.asarray(bank.kappas, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(bank.log_prior, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(bank.logdets, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(bank.cs_mats, dtype="<c16").tobytes())
        fh.write(np.ascontiguousarray(bank.factors, dtype="<c16").tobytes())


def read_filter_bank(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    base = _BANK_HEADER.size + _BANK_SHAPE.size
    if len(raw) < base:
        raise FormatError(f"file too short for a filter-bank header: {len(raw)} bytes")
    magic, version, n, _ = _BANK_HEADER.unpack_from(raw)
    if magic != BANK_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {BANK_MAGIC!r}")
    if version != BANK_VERSION:
        raise FormatError(f"unsupported filter-bank version {version}")
    ps, pb, nk, sigma = _BANK_SHAPE.unpack_from(raw, _BANK_HEADER.size)
    size = ps * pb * nk
    expected = base + nk * 8 + size * 8 * 2 + ps * n * n * 16 + size * n * n * 16
    if len(raw) != expected:
        raise FormatError(f"filter bank with grid {size} at n={n} should be "
                          f"{expected} bytes, file has {len(raw)}")

    def take(dtype, count, off):
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=off)
        return arr, off + count * arr.itemsize

    off = base
    kappas, off = take("<f8", nk, off)
    log_prior, off = take("<f8", size, off)
    logdets, off = take("<f8", size, off)
    cs_flat, off = take("<c16", ps * n * n, off)
    fac_flat, off = take("<c16", size * n * n, off)
    return FilterBank(
        n=n,
        sigma=sigma,
        period_s=ps,
        period_b=pb,
        kappas=tuple(kappas.tolist()),
        log_prior=log_prior.copy(),
        grid_tau_s=np.repeat(np.arange(ps), pb * nk),
        grid_tau_b=np.tile(np.repeat(np.arange(pb), nk), ps),
        grid_kappa=np.tile(kappas.copy(), ps * pb),
        factors=fac_flat.reshape(size, n, n).copy(),
        logdets=logdets.copy(),
        cs_mats=cs_flat.reshape(ps, n, n).copy(),
    )
