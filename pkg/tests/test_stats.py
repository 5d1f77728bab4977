"""Model accounting: parameters, FLOPs, serialized size."""

import numpy as np
import pytest

from mfinception import kernels
from mfinception.autograd import Tensor
from mfinception.config import full_preset, preset
from mfinception.errors import StructuralError
from mfinception.layers import Conv2d
from mfinception.network import build_network
from mfinception.sampler import baseline_assignment
from mfinception.stats import arch_stats, summary

SMALL = dict(width_multiplier=0.125, input_resolution=(64, 64))


def built(name, **kw):
    cfg = preset(name, **{**SMALL, **kw})
    return build_network(cfg, baseline_assignment(cfg), init_seed=0)


def test_single_conv_parameter_closed_form():
    conv = Conv2d(16, 32, (3, 3), rng=np.random.default_rng(0), dtype=np.float32)
    total = sum(p.data.size for _, p in conv.parameters())
    assert total == 3 * 3 * 16 * 32 + 32 == 4640


def test_parameter_count_equals_sum_of_state_array_sizes():
    plan = built("cmi1")
    st = arch_stats(plan)
    want = sum(p.data.size for _, p in plan.parameters())
    want += sum(b.size for _, b in plan.buffers())
    assert st.parameter_count == want


def test_flops_match_instrumented_forward():
    # independent oracle: count MACs by intercepting every kernel call
    plan = built("cmi1")
    st = arch_stats(plan)
    macs = []
    orig = kernels.conv2d_forward

    def counting(x, w, b, stride, padding):
        y = orig(x, w, b, stride, padding)
        per_image = (y.shape[1] * y.shape[2] * y.shape[3]
                     * w.shape[1] * w.shape[2] * w.shape[3])
        macs.append(per_image)
        return y

    kernels.conv2d_forward = counting
    try:
        x = Tensor(np.zeros((1, 3, 64, 64), dtype=np.float32))
        plan.forward(x, training=False)
    finally:
        kernels.conv2d_forward = orig
    dense_macs = plan.head_dense.weight.data.shape[0] * plan.head_dense.weight.data.shape[1]
    assert st.flops_per_image == sum(macs) + dense_macs


def test_ordering_cmi1_cmi2_cmi3_mi():
    stats = [arch_stats(built(n)) for n in ("cmi1", "cmi2", "cmi3", "mi")]
    params = [s.parameter_count for s in stats]
    flops = [s.flops_per_image for s in stats]
    size = [s.serialized_bytes for s in stats]
    assert params == sorted(params) and len(set(params)) == 4
    assert flops == sorted(flops) and len(set(flops)) == 4
    assert size == sorted(size) and len(set(size)) == 4


def test_ordering_holds_at_other_widths():
    for wm in (1 / 32, 0.5):
        stats = [
            arch_stats(built(n, width_multiplier=wm, input_resolution=(64, 64)))
            for n in ("cmi1", "cmi2", "cmi3", "mi")
        ]
        params = [s.parameter_count for s in stats]
        assert params == sorted(params) and len(set(params)) == 4


def test_serialized_bytes_formula():
    plan = built("cmi2")
    st4 = arch_stats(plan, bytes_per_element=4)
    st8 = arch_stats(plan, bytes_per_element=8)
    assert st4.serialized_bytes == st4.parameter_count * 4 + 65536
    assert st8.serialized_bytes == st8.parameter_count * 8 + 65536
    assert st4.parameter_count == st8.parameter_count


def test_width_half_shrinks_total_parameters_roughly_4x():
    full = arch_stats(built("cmi1", width_multiplier=1.0,
                            input_resolution=(64, 64)))
    half = arch_stats(built("cmi1", width_multiplier=0.5,
                            input_resolution=(64, 64)))
    ratio = full.parameter_count / half.parameter_count
    assert 3.4 < ratio < 4.6


def test_flops_scale_with_resolution():
    a = arch_stats(built("cmi1", input_resolution=(64, 64)))
    b = arch_stats(built("cmi1", input_resolution=(128, 128)))
    assert b.flops_per_image > 3 * a.flops_per_image  # ~4x area


def test_summary_document_fields():
    plan = built("cmi1")
    doc = summary(plan)
    for key in ("k", "m", "n", "mode", "cb_count", "activation_count",
                "parameter_count", "flops_per_image", "serialized_bytes",
                "per_segment_cb_counts"):
        assert key in doc, key
    assert doc["cb_count"] == 58
    assert doc["per_segment_cb_counts"]["stem"] == 11
    assert sum(doc["per_segment_cb_counts"].values()) == 58


def test_full_preset_segment_budget():
    cfg = full_preset(width_multiplier=1 / 32, input_resolution=(32, 32))
    plan = build_network(cfg, baseline_assignment(cfg), init_seed=0)
    per = arch_stats(plan).per_segment_cb_counts
    assert per == {"stem": 11, "inception_a": 28, "reduction_a": 4,
                   "inception_b": 70, "reduction_b": 6, "inception_c": 30}


def test_bad_bytes_per_element_rejected():
    plan = built("cmi1")
    with pytest.raises(StructuralError):
        arch_stats(plan, bytes_per_element=3)
