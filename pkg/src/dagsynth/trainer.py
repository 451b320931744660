"""Adversarial training loop and checkpointing.

Each batch draws one set of row indices; the same rows supply both the
conditional-input columns fed to the generator and the real complementary
columns fed to the critic, so the critic always judges correctly paired
(condition, outcome) rows. The critic takes ``n_critic`` update steps per
generator step. Checkpoints are a directory holding a human-readable
``meta.json`` and one binary array archive, and round-trip byte-for-byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .dag import Dag, GeneratorGraph, build_graph
from .discriminator import Critic, adversarial_losses, gradient_penalty
from .errors import CorruptCheckpoint, InputError, NonFiniteLoss, VersionMismatch
from .generator import DagGenerator, GeneratorDims
from .schema import DataTable, EncoderSet, TableSchema, encode_blocks, fit_encoders
from .seeding import derive_seed

CHECKPOINT_FORMAT_VERSION = "1"

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 1000
    batch_size: int = 500
    learning_rate: float = 2e-4
    adam_betas: tuple[float, float] = (0.5, 0.9)
    n_critic: int = 2
    gp_lambda: float = 10.0
    seed: int = 0
    d_z: int = 32
    d_h: int = 64
    d_f: int = 48
    discriminator_conditioning: bool = True
    checkpoint_every: int = 100
    n_modes: int = 5
    smoothing: float = 0.2
    dtype: str = "float32"

    def __post_init__(self):
        positives = {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "n_critic": self.n_critic,
            "checkpoint_every": self.checkpoint_every,
            "n_modes": self.n_modes,
            "d_z": self.d_z,
            "d_h": self.d_h,
            "d_f": self.d_f,
        }
        for name, value in positives.items():
            if value <= 0:
                raise InputError(f"config field {name} must be positive, got {value}")
        if self.gp_lambda < 0:
            raise InputError("gp_lambda must be non-negative")
        if self.dtype not in _DTYPES:
            raise InputError(f"dtype must be one of {sorted(_DTYPES)}")

    @property
    def dims(self) -> GeneratorDims:
        return GeneratorDims(self.d_z, self.d_h, self.d_f)

    @property
    def torch_dtype(self):
        return _DTYPES[self.dtype]

    def to_json(self) -> dict:
        data = asdict(self)
        data["adam_betas"] = list(self.adam_betas)
        return data

    @classmethod
    def from_json(cls, data: dict) -> "TrainingConfig":
        kwargs = dict(data)
        if "adam_betas" in kwargs:
            kwargs["adam_betas"] = tuple(kwargs["adam_betas"])
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(kwargs) - known
        if unknown:
            raise InputError(f"unknown config fields: {sorted(unknown)}")
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "TrainingConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class TraceRow:
    epoch: int
    step: int
    loss_d: float
    loss_g: float
    gp: float
    critic_steps: int


def write_trace_csv(trace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "step", "loss_D", "loss_G", "gp"])
        for row in trace:
            writer.writerow([row.epoch, row.step, repr(row.loss_d), repr(row.loss_g), repr(row.gp)])


@dataclass
class ModelCheckpoint:
    schema: TableSchema
    dag: Dag
    conditional_inputs: tuple[str, ...]
    graph: GeneratorGraph
    encoders: EncoderSet
    generator: DagGenerator
    discriminator: Critic
    config: TrainingConfig
    epoch: int = 0
    rng_state: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))

    @property
    def generated_names(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.graph.generated)

    @property
    def ci_names(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.graph.conditional)


def _critic_input_width(generator: DagGenerator, encoders: EncoderSet, config: TrainingConfig,
                        ci_names) -> int:
    width = generator.generated_width
    if config.discriminator_conditioning:
        width += sum(encoders.width(n) for n in ci_names)
    return width


def _as_tensor(array: np.ndarray, dtype) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(array)).to(dtype)


def train(
    feeder: DataTable,
    dag: Dag,
    conditional_inputs,
    config: TrainingConfig,
    checkpoint_dir=None,
    on_batch=None,
) -> tuple[ModelCheckpoint, list[TraceRow]]:
    """Train a generator on the feeder table.

    ``on_batch(epoch, step, ci_indices, real_indices)`` is called once per
    generator step with the row indices actually used, for instrumentation.
    Returns the final checkpoint and the per-step loss trace.
    """
    ci = tuple(dict.fromkeys(conditional_inputs))  # dedup, keep order
    for name in ci:
        if name not in feeder.schema:
            raise InputError(f"conditional input {name!r} is not a feeder variable")
    if config.batch_size > feeder.n_rows:
        raise InputError(
            f"batch_size {config.batch_size} exceeds the number of rows {feeder.n_rows}"
        )

    graph = build_graph(dag, ci, feeder.schema)
    encoders = fit_encoders(feeder, config.n_modes, config.smoothing, seed=config.seed)
    dtype = config.torch_dtype

    generator = DagGenerator(graph, encoders, config.dims, dtype=dtype).init_parameters(
        derive_seed(config.seed, "generator-init")
    )
    gen_names = [n.name for n in graph.generated]
    ci_names = [n.name for n in graph.conditional]
    critic = Critic(
        _critic_input_width(generator, encoders, config, ci_names), dtype=dtype
    ).init_parameters(derive_seed(config.seed, "critic-init"))

    opt_g = torch.optim.Adam(
        generator.parameters(), lr=config.learning_rate, betas=config.adam_betas
    )
    opt_d = torch.optim.Adam(critic.parameters(), lr=config.learning_rate, betas=config.adam_betas)

    noise_gen = torch.Generator().manual_seed(derive_seed(config.seed, "noise"))
    gp_gen = torch.Generator().manual_seed(derive_seed(config.seed, "gp"))

    def fresh_noise(n_rows: int) -> dict[str, torch.Tensor]:
        return {
            name: torch.randn(n_rows, config.d_z, generator=noise_gen, dtype=dtype)
            for name in gen_names
        }

    def critic_input(gen_mat: torch.Tensor, ci_mat: torch.Tensor | None) -> torch.Tensor:
        if config.discriminator_conditioning and ci_mat is not None:
            return torch.cat([gen_mat, ci_mat], dim=1)
        return gen_mat

    trace: list[TraceRow] = []
    gstep = 0
    n = feeder.n_rows
    for epoch in range(1, config.epochs + 1):
        blocks = encode_blocks(
            feeder, encoders, names=gen_names + ci_names,
            seed=derive_seed(config.seed, f"encode-{epoch}"),
        )
        real_all = _as_tensor(np.concatenate([blocks[g] for g in gen_names], axis=1), dtype)
        ci_all = (
            _as_tensor(np.concatenate([blocks[c] for c in ci_names], axis=1), dtype)
            if ci_names
            else None
        )
        ci_block_t = {c: _as_tensor(blocks[c], dtype) for c in ci_names}

        perm = np.random.default_rng(derive_seed(config.seed, f"shuffle-{epoch}")).permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            idx_t = torch.from_numpy(idx)
            real_batch = real_all[idx_t]
            ci_cat = ci_all[idx_t] if ci_all is not None else None
            ci_batch = {c: ci_block_t[c][idx_t] for c in ci_names}
            gstep += 1
            if on_batch is not None:
                on_batch(epoch, gstep, idx, idx)

            last_d = last_gp = 0.0
            for _ in range(config.n_critic):
                with torch.no_grad():
                    fake = generator(fresh_noise(len(idx)), ci_batch)
                real_in = critic_input(real_batch, ci_cat)
                fake_in = critic_input(fake, ci_cat)
                gp = gradient_penalty(critic, real_in, fake_in, gp_gen)
                loss_d, _ = adversarial_losses(
                    critic(real_in), critic(fake_in), gp, config.gp_lambda
                )
                if not torch.isfinite(loss_d):
                    raise NonFiniteLoss(gstep, f"critic loss {float(loss_d.detach())}")
                opt_d.zero_grad()
                loss_d.backward()
                opt_d.step()
                last_d, last_gp = float(loss_d.detach()), float(gp.detach())

            fake = generator(fresh_noise(len(idx)), ci_batch)
            loss_g = -critic(critic_input(fake, ci_cat)).mean()
            if not torch.isfinite(loss_g):
                raise NonFiniteLoss(gstep, f"generator loss {float(loss_g.detach())}")
            opt_g.zero_grad()
            loss_g.backward()
            opt_g.step()

            trace.append(
                TraceRow(epoch, gstep, last_d, float(loss_g.detach()), last_gp, config.n_critic)
            )

        if checkpoint_dir is not None and epoch % config.checkpoint_every == 0:
            snapshot = ModelCheckpoint(
                feeder.schema, dag, ci, graph, encoders, generator, critic, config,
                epoch=epoch, rng_state=_rng_state_array(noise_gen),
            )
            save_checkpoint(snapshot, checkpoint_dir)

    ckpt = ModelCheckpoint(
        feeder.schema, dag, ci, graph, encoders, generator, critic, config,
        epoch=config.epochs, rng_state=_rng_state_array(noise_gen),
    )
    if checkpoint_dir is not None:
        save_checkpoint(ckpt, checkpoint_dir)
    return ckpt, trace


# ---------------------------------------------------------------------------
# Checkpoint serialization
# ---------------------------------------------------------------------------


def _rng_state_array(gen: torch.Generator) -> np.ndarray:
    return gen.get_state().numpy().astype(np.uint8)


def _canonical_meta_bytes(meta: dict) -> bytes:
    trimmed = {k: v for k, v in meta.items() if k != "content_hash"}
    return json.dumps(trimmed, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(ckpt: ModelCheckpoint, directory) -> None:
    """Write ``meta.json`` plus ``params.npz``; save -> load -> save is
    byte-identical."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    arrays: dict[str, np.ndarray] = {}
    for key, value in ckpt.generator.state_dict().items():
        arrays[f"generator/{key}"] = value.detach().cpu().numpy()
    for key, value in ckpt.discriminator.state_dict().items():
        arrays[f"discriminator/{key}"] = value.detach().cpu().numpy()
    arrays["rng_state"] = ckpt.rng_state

    buffer = io.BytesIO()
    np.savez(buffer, **{k: arrays[k] for k in sorted(arrays)})
    npz_bytes = buffer.getvalue()

    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "schema": ckpt.schema.to_json(),
        "dag": ckpt.dag.to_json(ckpt.conditional_inputs),
        "encoders": ckpt.encoders.to_json(),
        "config": ckpt.config.to_json(),
        "epoch": ckpt.epoch,
    }
    digest = hashlib.sha256(_canonical_meta_bytes(meta) + npz_bytes).hexdigest()
    meta["content_hash"] = digest

    with open(directory / "params.npz", "wb") as fh:
        fh.write(npz_bytes)
    with open(directory / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(directory) -> ModelCheckpoint:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    npz_path = directory / "params.npz"
    if not meta_path.exists() or not npz_path.exists():
        raise CorruptCheckpoint(f"{directory}: not a checkpoint directory")
    try:
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{meta_path}: unreadable metadata ({exc})")

    version = str(meta.get("format_version", "?"))
    if version != CHECKPOINT_FORMAT_VERSION:
        raise VersionMismatch(version, CHECKPOINT_FORMAT_VERSION)

    npz_bytes = npz_path.read_bytes()
    digest = hashlib.sha256(_canonical_meta_bytes(meta) + npz_bytes).hexdigest()
    if digest != meta.get("content_hash"):
        raise CorruptCheckpoint(f"{directory}: content hash mismatch")

    try:
        archive = np.load(io.BytesIO(npz_bytes))
        arrays = {k: archive[k] for k in archive.files}
    except Exception as exc:
        raise CorruptCheckpoint(f"{npz_path}: unreadable array archive ({exc})")

    schema = TableSchema.from_json(meta["schema"])
    dag = Dag.from_edges(
        [tuple(e) for e in meta["dag"]["edges"]], nodes=meta["dag"].get("nodes")
    )
    ci = tuple(meta["dag"].get("conditional_inputs", []))
    config = TrainingConfig.from_json(meta["config"])
    encoders = EncoderSet.from_json(schema, meta["encoders"])
    graph = build_graph(dag, ci, schema)

    dtype = config.torch_dtype
    generator = DagGenerator(graph, encoders, config.dims, dtype=dtype)
    gen_state = {
        k.removeprefix("generator/"): torch.from_numpy(v)
        for k, v in arrays.items()
        if k.startswith("generator/")
    }
    generator.load_state_dict(gen_state)
    ci_names = [n.name for n in graph.conditional]
    critic = Critic(_critic_input_width(generator, encoders, config, ci_names), dtype=dtype)
    disc_state = {
        k.removeprefix("discriminator/"): torch.from_numpy(v)
        for k, v in arrays.items()
        if k.startswith("discriminator/")
    }
    critic.load_state_dict(disc_state)

    return ModelCheckpoint(
        schema=schema,
        dag=dag,
        conditional_inputs=ci,
        graph=graph,
        encoders=encoders,
        generator=generator,
        discriminator=critic,
        config=config,
        epoch=int(meta["epoch"]),
        rng_state=arrays["rng_state"].astype(np.uint8),
    )
