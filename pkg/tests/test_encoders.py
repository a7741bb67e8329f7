import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from mmrgraph.core import ParameterStore, finite_diff_check, make_rng, ops
from mmrgraph.exceptions import ShapeError
from mmrgraph.nn.encoders import assemble_nodes, global_encode, modal_encode, positional_encode


def test_zero_attention_weights_give_uniform_mask():
    rng = make_rng(0)
    g = rng.standard_normal((3, 3, 5))
    out, mask = global_encode(g, np.zeros((5, 1)), None, np.eye(5), np.zeros(5), activation=False)
    np.testing.assert_allclose(mask.data, np.full((9, 1), 1 / 9), rtol=0, atol=1e-15)
    expected = (1 + 1 / 9) * g.reshape(9, 5).mean(axis=0)
    np.testing.assert_allclose(out.data, expected, rtol=1e-13, atol=1e-15)


def test_zero_map_gives_fc_bias():
    bias = np.array([0.5, -0.25, 2.0])
    rng = make_rng(1)
    out, _ = global_encode(np.zeros((3, 3, 4)), rng.standard_normal((4, 1)), None, rng.standard_normal((4, 3)), bias, activation=False)
    np.testing.assert_array_equal(out.data, bias)


@pytest.mark.parametrize("attended", [True, False])
@pytest.mark.parametrize("activation", [True, False])
def test_global_encode_matches_step_by_step_oracle(attended, activation):
    rng = make_rng(2)
    for _ in range(10):
        g = rng.standard_normal((3, 3, 8))
        aw = rng.standard_normal((8, 1)) if attended else None
        fw, fb = rng.standard_normal((8, 6)), rng.standard_normal(6)
        out, mask = global_encode(g, aw, None, fw, fb, activation=activation)
        ref, ref_mask = oracles.global_encode(g.tolist(), oracles.as_lists(aw), fw.tolist(), fb.tolist(), activation)
        np.testing.assert_allclose(out.data, ref, rtol=0, atol=1e-12)
        if attended:
            np.testing.assert_allclose(mask.data[:, 0], ref_mask, rtol=0, atol=1e-15)
        else:
            assert mask is None


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 30.0))
def test_attention_mask_is_a_distribution(seed, scale):
    rng = make_rng(seed)
    g = scale * rng.standard_normal((2, 3, 3, 4))
    _, mask = global_encode(g, rng.standard_normal((4, 1)), None, rng.standard_normal((4, 2)), np.zeros(2))
    assert (mask.data > 0).all()
    np.testing.assert_allclose(mask.data.sum(axis=-2), 1.0, rtol=0, atol=1e-12)


def test_modal_encode_zero_row_and_padding():
    rng = make_rng(3)
    w = rng.standard_normal((4, 5))
    np.testing.assert_array_equal(modal_encode(np.zeros((1, 4)), w, np.zeros(5)).data, np.zeros((1, 5)))
    b = rng.standard_normal(5)
    rows = np.vstack([rng.standard_normal((2, 4)), np.zeros((3, 4))])
    out = modal_encode(rows, w, b).data
    expected = np.where(b > 0, b, 0.01 * b)
    for i in range(2, 5):
        np.testing.assert_array_equal(out[i], expected)


def test_modal_encode_matches_loop_oracle():
    rng = make_rng(4)
    for _ in range(20):
        x, w, b = rng.standard_normal((2, 4)), rng.standard_normal((4, 3)), rng.standard_normal(3)
        ref = oracles.leaky_rows(oracles.affine_rows(x.tolist(), w.tolist(), b.tolist()))
        np.testing.assert_allclose(modal_encode(x, w, b).data, ref, rtol=0, atol=1e-13)


def test_modal_encode_width_mismatch():
    with pytest.raises(ShapeError):
        modal_encode(np.ones((2, 3)), np.ones((4, 2)), np.zeros(2))


def test_positional_encode_cases():
    rng = make_rng(5)
    w = rng.standard_normal((4, 8))
    assert not positional_encode(np.zeros((1, 4)), w, np.zeros(8)).data.any()
    box = rng.uniform(size=4)
    codes = positional_encode(np.stack([box, box]), w, rng.standard_normal(8)).data
    np.testing.assert_array_equal(codes[0], codes[1])
    boxes, b = rng.uniform(size=(6, 4)), rng.standard_normal(8)
    ref = oracles.leaky_rows(oracles.affine_rows(boxes.tolist(), w.tolist(), b.tolist()))
    np.testing.assert_allclose(positional_encode(boxes, w, b).data, ref, rtol=0, atol=1e-13)
    with pytest.raises(ValueError):
        positional_encode(np.array([[0.0, 0.0, 1.5, 1.0]]), w, b)
    with pytest.raises(ShapeError):
        positional_encode(np.zeros((2, 3)), w, b)


def test_assemble_nodes_full_scale_shape():
    nodes = assemble_nodes(np.zeros((36, 1920)), np.zeros((15, 1920)), np.zeros((51, 128)))
    assert nodes.shape == (51, 2048)
    assert not nodes.data.any()


def test_assemble_nodes_layout_and_row_swap():
    rng = make_rng(6)
    regions, texts, pos = rng.standard_normal((3, 5)), rng.standard_normal((2, 5)), rng.standard_normal((5, 2))
    nodes = assemble_nodes(regions, texts, pos).data
    np.testing.assert_array_equal(nodes[:3, :5], regions)
    np.testing.assert_array_equal(nodes[3:, :5], texts)
    np.testing.assert_array_equal(nodes[:, 5:], pos)
    swap = [1, 0, 2]
    swapped = assemble_nodes(regions[swap], texts, pos[[1, 0, 2, 3, 4]]).data
    np.testing.assert_array_equal(swapped, nodes[[1, 0, 2, 3, 4]])


def test_assemble_nodes_zero_codes_when_boxes_are_off():
    nodes = assemble_nodes(np.ones((2, 3)), None, None, pos_width=4).data
    assert nodes.shape == (2, 7)
    assert not nodes[:, 3:].any()
    with pytest.raises(ShapeError):
        assemble_nodes(np.ones((2, 3)), np.ones((1, 3)), np.zeros((2, 4)))
    with pytest.raises(ShapeError):
        assemble_nodes()


def test_encoders_are_row_wise():
    rng = make_rng(7)
    w, b = rng.standard_normal((4, 3)), rng.standard_normal(3)
    x = rng.standard_normal((5, 4))
    base = modal_encode(x, w, b).data
    x2 = x.copy()
    x2[2] += 1.0
    moved = modal_encode(x2, w, b).data
    changed = np.flatnonzero(np.abs(moved - base).sum(axis=1))
    assert changed.tolist() == [2]


def test_encoder_gradients_pass_finite_differences():
    rng = make_rng(8)
    g = rng.standard_normal((2, 3, 3, 6))
    rows = rng.standard_normal((2, 4, 5))
    boxes = rng.uniform(size=(2, 4, 4))
    params = ParameterStore(
        {
            "attn.w": rng.standard_normal((6, 1)),
            "fc.w": rng.standard_normal((6, 3)),
            "fc.b": rng.standard_normal(3),
            "mod.w": rng.standard_normal((5, 3)),
            "mod.b": rng.standard_normal(3),
            "pos.w": rng.standard_normal((4, 2)),
            "pos.b": rng.standard_normal(2),
        }
    )

    def loss(p):
        out, _ = global_encode(g, p["attn.w"], None, p["fc.w"], p["fc.b"])
        nodes = assemble_nodes(modal_encode(rows, p["mod.w"], p["mod.b"]), None, positional_encode(boxes, p["pos.w"], p["pos.b"]))
        return ops.add(ops.sum(ops.sum(out, axis=-1), axis=0), ops.sum(ops.reshape(nodes, (-1,)), axis=0))

    report = finite_diff_check(loss, params, tol=1e-6)
    assert report.passed, report.errors
