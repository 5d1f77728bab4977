"""Checkpoint format: exact sizes, round trips, corruption handling."""

import os

import numpy as np
import pytest

from mfinception.activations import PER_FEATURE_MAP
from mfinception.autograd import Tensor
from mfinception.checkpoint import (
    HEADER_BYTES,
    MAGIC,
    deserialize_model,
    persisted_scalars,
    serialize_model,
)
from mfinception.config import preset
from mfinception.errors import StructuralError
from mfinception.network import build_network
from mfinception.sampler import SamplePlan, baseline_assignment, sample_one
from mfinception.stats import arch_stats

TINY = dict(width_multiplier=1 / 32, input_resolution=(32, 32))


def small_plan(dtype=np.float32, granularity=None, seed=5):
    cfg = preset("cmi1", **TINY)
    if granularity is None:
        assignment = sample_one(SamplePlan(arch=cfg, num_models=1, base_seed=seed), 0)
    else:
        assignment = sample_one(
            SamplePlan(arch=cfg, num_models=1, base_seed=seed,
                       granularity=granularity), 0)
    return build_network(cfg, assignment, init_seed=seed, dtype=dtype)


def test_file_size_is_parameter_count_times_4_plus_header(tmp_path):
    plan = small_plan()
    path = tmp_path / "m.ckpt"
    serialize_model(plan, path)
    st = arch_stats(plan)
    size = os.path.getsize(path)
    assert size == st.parameter_count * 4 + HEADER_BYTES
    assert size == st.serialized_bytes
    assert persisted_scalars(plan) == st.parameter_count


def test_round_trip_restores_everything(tmp_path):
    plan = small_plan()
    # train-ish mutation so buffers differ from init (variances stay positive)
    for name, buf in plan.buffers():
        noise = np.random.default_rng(0).standard_normal(buf.shape).astype(buf.dtype)
        buf += np.abs(noise) if name.endswith("running_var") else noise
    path = tmp_path / "m.ckpt"
    serialize_model(plan, path)
    back = deserialize_model(path)

    assert back.config == plan.config
    assert back.assignment == plan.assignment
    for (n1, p1), (n2, p2) in zip(plan.parameters(), back.parameters()):
        assert n1 == n2
        assert np.array_equal(p1.data, p2.data)
    for (n1, b1), (n2, b2) in zip(plan.buffers(), back.buffers()):
        assert n1 == n2
        assert np.array_equal(b1, b2)

    x = Tensor(np.random.default_rng(1).uniform(0, 1, (2, 3, 32, 32)).astype(np.float32))
    assert np.array_equal(plan.forward(x, training=False).data,
                          back.forward(x, training=False).data)


def test_round_trip_per_feature_map(tmp_path):
    plan = small_plan(granularity=PER_FEATURE_MAP)
    path = tmp_path / "m.ckpt"
    serialize_model(plan, path)
    back = deserialize_model(path)
    assert back.assignment == plan.assignment
    assert back.assignment.granularity == PER_FEATURE_MAP


def test_float64_uses_8_bytes_per_element(tmp_path):
    plan = small_plan(dtype=np.float64)
    path = tmp_path / "m.ckpt"
    serialize_model(plan, path)
    st = arch_stats(plan, bytes_per_element=8)
    assert os.path.getsize(path) == st.parameter_count * 8 + HEADER_BYTES
    back = deserialize_model(path)
    assert back.head_dense.weight.data.dtype == np.float64


def test_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    serialize_model(small_plan(), a)
    serialize_model(small_plan(), b)
    assert a.read_bytes() == b.read_bytes()


def test_corrupted_magic_rejected(tmp_path):
    path = tmp_path / "m.ckpt"
    serialize_model(small_plan(), path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"ELF\x7f"
    path.write_bytes(bytes(raw))
    with pytest.raises(StructuralError):
        deserialize_model(path)


def test_truncated_body_rejected(tmp_path):
    path = tmp_path / "m.ckpt"
    serialize_model(small_plan(), path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 100])
    with pytest.raises(StructuralError):
        deserialize_model(path)


def test_truncated_header_rejected(tmp_path):
    path = tmp_path / "m.ckpt"
    path.write_bytes(MAGIC + b"\x00" * 100)
    with pytest.raises(StructuralError):
        deserialize_model(path)


def test_trailing_garbage_rejected(tmp_path):
    path = tmp_path / "m.ckpt"
    serialize_model(small_plan(), path)
    with open(path, "ab") as fh:
        fh.write(b"\x00" * 16)
    with pytest.raises(StructuralError):
        deserialize_model(path)
