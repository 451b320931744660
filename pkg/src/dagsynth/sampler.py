"""Sampling, dataset completion, and the resampling baseline.

Sampling copies the conditional-input columns verbatim into the output (the
model only ever sees their encoded form) and decodes fresh generator output
for everything else. Work proceeds in chunks so completing a very large
table never materializes more than two chunks of model-space rows at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import ColumnCollision, EmptyStratum, InputError, SchemaMismatch
from .generator import make_noise
from .schema import DataTable, TableSchema, decode, encode_blocks
from .seeding import derive_seed
from .trainer import ModelCheckpoint

DEFAULT_CHUNK_SIZE = 10_000


@dataclass
class ChunkInstrument:
    """Counts model-space rows held in memory by the chunked pipeline."""

    current_rows: int = 0
    peak_rows: int = 0
    chunks: list[int] = field(default_factory=list)

    def acquire(self, n: int) -> None:
        self.current_rows += n
        self.peak_rows = max(self.peak_rows, self.current_rows)

    def release(self, n: int) -> None:
        self.current_rows -= n


def _generate_chunks(
    ckpt: ModelCheckpoint,
    ci_table: DataTable | None,
    n_rows: int,
    seed: int,
    chunk_size: int,
    instrument: ChunkInstrument | None,
):
    """Yield (start, stop, decoded_generated_table) per chunk."""
    graph = ckpt.graph
    gen_encoders = ckpt.encoders.subset(ckpt.generated_names)
    dtype = ckpt.config.torch_dtype
    ckpt.generator.eval()
    for chunk_no, start in enumerate(range(0, n_rows, chunk_size)):
        stop = min(start + chunk_size, n_rows)
        size = stop - start
        if instrument is not None:
            instrument.acquire(size)  # encoded conditional-input chunk
            instrument.chunks.append(size)
        if ci_table is not None:
            chunk = ci_table.take(np.arange(start, stop))
            blocks = encode_blocks(
                chunk, ckpt.encoders, names=ckpt.ci_names,
                seed=derive_seed(seed, f"ci-noise-{chunk_no}"),
            )
            ci_batch = {
                name: torch.from_numpy(block).to(dtype) for name, block in blocks.items()
            }
        else:
            ci_batch = {}
        noise = make_noise(
            graph, size, ckpt.config.d_z, derive_seed(seed, f"noise-{chunk_no}"), dtype=dtype
        )
        with torch.no_grad():
            fake = ckpt.generator(noise, ci_batch)
        if instrument is not None:
            instrument.acquire(size)  # encoded generated chunk
        decoded = decode(fake.numpy().astype(np.float64), gen_encoders)
        if instrument is not None:
            instrument.release(2 * size)
        yield start, stop, decoded


def sample(
    ckpt: ModelCheckpoint,
    ci_source: DataTable | None = None,
    n_rows: int | None = None,
    seed: int = 0,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    instrument: ChunkInstrument | None = None,
) -> DataTable:
    """Generate one synthetic row per conditional-input row.

    The output has the trained schema's columns: conditional-input columns
    are the input values copied bit-for-bit, all other columns are decoded
    generator output. Models trained without conditional inputs take
    ``n_rows`` instead of ``ci_source``.
    """
    ci_names = ckpt.ci_names
    if ci_names:
        if ci_source is None:
            raise InputError("this model is conditional: pass ci_source")
        for name in ci_names:
            if name not in ci_source.schema:
                raise SchemaMismatch(f"ci_source lacks conditional-input column {name!r}")
        ci_table = ci_source.select(ci_names)
        total = ci_table.n_rows
    else:
        if n_rows is None:
            raise InputError("this model is unconditional: pass n_rows")
        ci_table = None
        total = int(n_rows)

    out_schema = ckpt.schema.subset(ci_names + ckpt.generated_names)
    gen_parts: dict[str, list[np.ndarray]] = {n: [] for n in ckpt.generated_names}
    for _, _, decoded in _generate_chunks(ckpt, ci_table, total, seed, chunk_size, instrument):
        for name in ckpt.generated_names:
            gen_parts[name].append(decoded.columns[name])

    columns: dict[str, np.ndarray] = {}
    for name in ci_names:
        columns[name] = ci_table.columns[name]
    for name in ckpt.generated_names:
        empty = np.zeros(0) if not out_schema[name].is_categorical else np.zeros(0, dtype=object)
        columns[name] = np.concatenate(gen_parts[name]) if gen_parts[name] else empty
    return DataTable(out_schema, columns)


def complete(
    ckpt: ModelCheckpoint,
    distributor: DataTable,
    seed: int = 0,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    instrument: ChunkInstrument | None = None,
) -> DataTable:
    """Extend a low-detail table with generated high-detail columns.

    The distributor must contain every conditional-input column; all of its
    columns (including extras the model never saw) pass through untouched,
    and the generated columns are appended. A name collision between
    generated variables and distributor columns is an error.
    """
    ci_names = ckpt.ci_names
    for name in ci_names:
        if name not in distributor.schema:
            raise SchemaMismatch(f"distributor lacks conditional-input column {name!r}")
    collisions = set(ckpt.generated_names) & set(distributor.schema.names)
    if collisions:
        raise ColumnCollision(collisions)

    generated = sample(
        ckpt,
        ci_source=distributor if ci_names else None,
        n_rows=None if ci_names else distributor.n_rows,
        seed=seed,
        chunk_size=chunk_size,
        instrument=instrument,
    )

    out_specs = tuple(distributor.schema.variables) + tuple(
        ckpt.schema[n] for n in ckpt.generated_names
    )
    columns = dict(distributor.columns)
    for name in ckpt.generated_names:
        columns[name] = generated.columns[name]
    return DataTable(TableSchema(out_specs), columns)


def oversample_baseline(
    feeder: DataTable, strata_var: str, targets: dict, seed: int = 0
) -> DataTable:
    """Resample the feeder with replacement, stratum by stratum, until each
    stratum holds its target count."""
    col = feeder.column(strata_var)
    rng = np.random.default_rng(seed)
    picked: list[np.ndarray] = []
    for stratum in targets:
        count = int(targets[stratum])
        if count < 0:
            raise InputError(f"target count for stratum {stratum!r} must be >= 0")
        if count == 0:
            continue
        pool = np.flatnonzero(col == stratum)
        if len(pool) == 0:
            raise EmptyStratum(str(stratum))
        picked.append(rng.choice(pool, size=count, replace=True))
    if picked:
        indices = np.concatenate(picked)
    else:
        indices = np.zeros(0, dtype=np.int64)
    return feeder.take(indices)
