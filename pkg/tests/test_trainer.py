"""Training loop bookkeeping and checkpoint round-trips."""

import json

import numpy as np
import pytest
import torch

from conftest import make_toy_table, toy_dag
from dagsynth.errors import CorruptCheckpoint, InputError, VersionMismatch
from dagsynth.sampler import sample
from dagsynth.trainer import (
    TrainingConfig,
    load_checkpoint,
    save_checkpoint,
    train,
    write_trace_csv,
)

QUICK = dict(
    epochs=3, batch_size=500, d_z=8, d_h=12, d_f=8, n_modes=2, checkpoint_every=2, seed=123
)


@pytest.fixture(scope="module")
def quick_run():
    table = make_toy_table(2000, seed=11)
    config = TrainingConfig(**QUICK)
    seen = []
    ckpt, trace = train(
        table, toy_dag(), ("x",), config,
        on_batch=lambda epoch, step, ci_idx, real_idx: seen.append((epoch, step, ci_idx, real_idx)),
    )
    return table, config, ckpt, trace, seen


class TestTrainLoop:
    def test_generator_step_count(self, quick_run):
        _, config, _, trace, _ = quick_run
        # ceil(2000 / 500) = 4 batches per epoch, 3 epochs.
        assert len(trace) == 12

    def test_critic_step_count(self, quick_run):
        _, config, _, trace, _ = quick_run
        assert sum(row.critic_steps for row in trace) == 24

    def test_losses_finite(self, quick_run):
        _, _, _, trace, _ = quick_run
        for row in trace:
            assert np.isfinite(row.loss_d)
            assert np.isfinite(row.loss_g)
            assert np.isfinite(row.gp)

    def test_row_aligned_pairing(self, quick_run):
        # The same indices must feed the generator's conditional inputs and
        # the critic's real rows.
        _, _, _, _, seen = quick_run
        assert seen
        for _, _, ci_idx, real_idx in seen:
            assert np.array_equal(ci_idx, real_idx)

    def test_epoch_shuffle_partitions_rows(self, quick_run):
        table, _, _, _, seen = quick_run
        by_epoch: dict[int, list] = {}
        for epoch, _, ci_idx, _ in seen:
            by_epoch.setdefault(epoch, []).append(ci_idx)
        for batches in by_epoch.values():
            combined = np.sort(np.concatenate(batches))
            assert np.array_equal(combined, np.arange(table.n_rows))

    def test_batch_size_precondition(self):
        table = make_toy_table(100, seed=0)
        with pytest.raises(InputError):
            train(table, toy_dag(), ("x",), TrainingConfig(epochs=1, batch_size=500))

    def test_unknown_ci_rejected(self):
        table = make_toy_table(100, seed=0)
        with pytest.raises(InputError):
            train(
                table, toy_dag(), ("nope",), TrainingConfig(epochs=1, batch_size=50, n_modes=2)
            )

    def test_deterministic_loss_trace(self):
        torch.set_num_threads(1)
        table = make_toy_table(600, seed=2)
        config = TrainingConfig(
            epochs=2, batch_size=300, d_z=6, d_h=8, d_f=6, n_modes=2, seed=7, dtype="float64"
        )
        _, trace_a = train(table, toy_dag(), ("x",), config)
        _, trace_b = train(table, toy_dag(), ("x",), config)
        assert trace_a == trace_b

    def test_trace_csv(self, quick_run, tmp_path):
        _, _, _, trace, _ = quick_run
        path = tmp_path / "trace.csv"
        write_trace_csv(trace, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,step,loss_D,loss_G,gp"
        assert len(lines) == len(trace) + 1


class TestConfig:
    def test_positive_fields_enforced(self):
        with pytest.raises(InputError):
            TrainingConfig(epochs=0)
        with pytest.raises(InputError):
            TrainingConfig(batch_size=-1)

    def test_json_round_trip(self):
        config = TrainingConfig(**QUICK)
        assert TrainingConfig.from_json(config.to_json()) == config

    def test_unknown_field_rejected(self):
        with pytest.raises(InputError):
            TrainingConfig.from_json({"epoch": 5})


class TestCheckpoint:
    def test_round_trip_preserves_sampled_output(self, quick_run, tmp_path):
        table, _, ckpt, _, _ = quick_run
        save_checkpoint(ckpt, tmp_path / "ckpt")
        loaded = load_checkpoint(tmp_path / "ckpt")
        original = sample(ckpt, ci_source=table, seed=99)
        reloaded = sample(loaded, ci_source=table, seed=99)
        assert original.equal(reloaded)

    def test_save_load_save_is_byte_identical(self, quick_run, tmp_path):
        _, _, ckpt, _, _ = quick_run
        dir_a, dir_b = tmp_path / "a", tmp_path / "b"
        save_checkpoint(ckpt, dir_a)
        save_checkpoint(load_checkpoint(dir_a), dir_b)
        assert (dir_a / "meta.json").read_bytes() == (dir_b / "meta.json").read_bytes()
        assert (dir_a / "params.npz").read_bytes() == (dir_b / "params.npz").read_bytes()

    def test_truncated_weights_detected(self, quick_run, tmp_path):
        _, _, ckpt, _, _ = quick_run
        save_checkpoint(ckpt, tmp_path / "ckpt")
        npz = tmp_path / "ckpt" / "params.npz"
        npz.write_bytes(npz.read_bytes()[:-40])
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(tmp_path / "ckpt")

    def test_newer_format_version_rejected(self, quick_run, tmp_path):
        _, _, ckpt, _, _ = quick_run
        save_checkpoint(ckpt, tmp_path / "ckpt")
        meta_path = tmp_path / "ckpt" / "meta.json"
        meta = json.loads(meta_path.read_text())
        meta["format_version"] = "999"
        meta_path.write_text(json.dumps(meta))
        with pytest.raises(VersionMismatch) as err:
            load_checkpoint(tmp_path / "ckpt")
        assert "999" in str(err.value)
        assert "1" in str(err.value)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(tmp_path / "nothing")

    def test_periodic_snapshots_written(self, tmp_path):
        table = make_toy_table(400, seed=3)
        config = TrainingConfig(
            epochs=2, batch_size=200, d_z=6, d_h=8, d_f=6, n_modes=2, checkpoint_every=1
        )
        ckpt, _ = train(table, toy_dag(), ("x",), config, checkpoint_dir=tmp_path / "snap")
        assert (tmp_path / "snap" / "meta.json").exists()
        loaded = load_checkpoint(tmp_path / "snap")
        assert loaded.epoch == 2
