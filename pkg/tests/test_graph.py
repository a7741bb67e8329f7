import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from mmrgraph.core import ParameterStore, finite_diff_check, make_rng, ops
from mmrgraph.exceptions import ShapeError
from mmrgraph.nn.graph import affinity, gcn_layer, mmr_forward


def random_layers(rng, k, d, layers, gamma_bias=True, scale=0.3):
    params = {}
    for l in range(layers):
        params[f"gcn.{l}.phi.w"] = scale * rng.standard_normal((d, d))
        params[f"gcn.{l}.phi.b"] = scale * rng.standard_normal(d)
        params[f"gcn.{l}.gamma.w"] = scale * rng.standard_normal((d, d))
        if gamma_bias:
            params[f"gcn.{l}.gamma.b"] = scale * rng.standard_normal(d)
        params[f"gcn.{l}.w_g"] = scale * rng.standard_normal((d, d))
        params[f"gcn.{l}.w_r"] = scale * rng.standard_normal((k, k))
    return params


def oracle_layers(params, layers):
    out = []
    for l in range(layers):
        out.append(
            {
                "phi_w": params[f"gcn.{l}.phi.w"].tolist(),
                "phi_b": params[f"gcn.{l}.phi.b"].tolist(),
                "gamma_w": params[f"gcn.{l}.gamma.w"].tolist(),
                "gamma_b": params[f"gcn.{l}.gamma.b"].tolist() if f"gcn.{l}.gamma.b" in params else None,
                "w_g": params[f"gcn.{l}.w_g"].tolist(),
                "w_r": params[f"gcn.{l}.w_r"].tolist(),
            }
        )
    return out


# -- affinity ---------------------------------------------------------------------


def test_affinity_orthonormal_gram():
    r = affinity(np.eye(2), np.eye(2), np.zeros(2), np.eye(2), np.zeros(2))
    np.testing.assert_array_equal(r.data, np.eye(2))


def test_affinity_zero_nodes():
    rng = make_rng(0)
    r = affinity(np.zeros((4, 3)), rng.standard_normal((3, 3)), np.zeros(3), rng.standard_normal((3, 3)), np.zeros(3))
    assert not r.data.any()


@pytest.mark.parametrize("normalize", ["raw", "row-softmax"])
def test_affinity_matches_double_loop(normalize):
    rng = make_rng(1)
    for _ in range(30):
        v = rng.standard_normal((3, 4))
        pw, pb, gw, gb = rng.standard_normal((4, 4)), rng.standard_normal(4), rng.standard_normal((4, 4)), rng.standard_normal(4)
        ref = oracles.affinity(v.tolist(), pw.tolist(), pb.tolist(), gw.tolist(), gb.tolist(), normalize)
        np.testing.assert_allclose(affinity(v, pw, pb, gw, gb, normalize).data, ref, rtol=0, atol=1e-10)


def test_affinity_scales_with_phi():
    rng = make_rng(2)
    v, pw, gw, gb = rng.standard_normal((5, 3)), rng.standard_normal((3, 3)), rng.standard_normal((3, 3)), rng.standard_normal(3)
    base = affinity(v, pw, None, gw, gb).data
    np.testing.assert_array_equal(affinity(v, 4.0 * pw, None, gw, gb).data, 4.0 * base)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 20.0))
def test_row_softmax_rows_sum_to_one(seed, scale):
    rng = make_rng(seed)
    v = scale * rng.standard_normal((2, 6, 4))
    r = affinity(v, rng.standard_normal((4, 4)), rng.standard_normal(4), rng.standard_normal((4, 4)), None, "row-softmax").data
    np.testing.assert_allclose(r.sum(axis=-1), 1.0, rtol=0, atol=1e-12)


def test_affinity_rejects_unknown_mode_and_width():
    with pytest.raises(ValueError):
        affinity(np.ones((2, 2)), np.eye(2), None, np.eye(2), None, "cosine")
    with pytest.raises(ShapeError):
        affinity(np.ones((2, 3)), np.eye(2), None, np.eye(2), None)


# -- gcn layer --------------------------------------------------------------------


def test_identity_layer_doubles():
    v = make_rng(3).standard_normal((3, 4))
    out = gcn_layer(v, np.eye(3), np.eye(4), np.eye(3), activation=False)
    np.testing.assert_array_equal(out.data, 2 * v)


def test_zero_affinity_is_residual_only():
    rng = make_rng(4)
    v = rng.standard_normal((3, 4))
    out = gcn_layer(v, np.zeros((3, 3)), rng.standard_normal((4, 4)), rng.standard_normal((3, 3)), activation=False)
    np.testing.assert_array_equal(out.data, v)


@pytest.mark.parametrize("activation", [True, False])
def test_gcn_layer_matches_triple_loop(activation):
    rng = make_rng(5)
    for _ in range(30):
        v, r = rng.standard_normal((3, 4)), rng.standard_normal((3, 3))
        wg, wr = rng.standard_normal((4, 4)), rng.standard_normal((3, 3))
        ref = oracles.gcn_layer(v.tolist(), r.tolist(), wg.tolist(), wr.tolist(), activation)
        np.testing.assert_allclose(gcn_layer(v, r, wg, wr, activation).data, ref, rtol=0, atol=1e-10)


def test_gcn_layer_shape_checks():
    with pytest.raises(ShapeError):
        gcn_layer(np.ones((3, 2)), np.eye(2), np.eye(2), np.eye(3))
    with pytest.raises(ShapeError):
        gcn_layer(np.ones((3, 2)), np.eye(3), np.eye(2), np.eye(2))


# -- stacked reasoning --------------------------------------------------------------


def test_single_identity_layer_doubles():
    # nodes e1, e2 under identity projections give R = I
    params = {
        "gcn.0.phi.w": np.eye(2),
        "gcn.0.phi.b": np.zeros(2),
        "gcn.0.gamma.w": np.eye(2),
        "gcn.0.gamma.b": np.zeros(2),
        "gcn.0.w_g": np.eye(2),
        "gcn.0.w_r": np.eye(2),
    }
    np.testing.assert_array_equal(mmr_forward(np.eye(2), params, 1).data, 2 * np.eye(2))


@pytest.mark.parametrize("normalize", ["raw", "row-softmax"])
@pytest.mark.parametrize("activation", ["all-but-last", "all", "none"])
def test_mmr_forward_matches_straight_line_recurrence(normalize, activation):
    rng = make_rng(7)
    k, d, layers = 10, 16, 3
    for _ in range(5):
        params = random_layers(rng, k, d, layers, gamma_bias=normalize == "raw", scale=0.06)
        v = rng.standard_normal((k, d))
        ref = oracles.mmr_forward(v.tolist(), oracle_layers(params, layers), normalize, activation)
        out = mmr_forward(v, params, layers, normalize=normalize, activation=activation).data
        np.testing.assert_allclose(out, ref, rtol=0, atol=1e-10)


def test_shared_affinity_reuses_first_matrix():
    rng = make_rng(8)
    params = random_layers(rng, 4, 3, 1)
    params.update({"gcn.1.w_g": rng.standard_normal((3, 3)), "gcn.1.w_r": rng.standard_normal((4, 4))})
    v = rng.standard_normal((4, 3))
    trace = {}
    mmr_forward(v, params, 2, shared_affinity=True, trace=trace)
    r0, r1 = trace["affinity"]
    assert r0 is r1
    expected = affinity(v, params["gcn.0.phi.w"], params["gcn.0.phi.b"], params["gcn.0.gamma.w"], params["gcn.0.gamma.b"])
    np.testing.assert_array_equal(r0.data, expected.data)


def test_unknown_activation_schedule():
    with pytest.raises(ValueError):
        mmr_forward(np.ones((2, 2)), {}, 1, activation="some")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.sampled_from(["raw", "row-softmax"]))
def test_permutation_equivariance_with_identity_wr(seed, k, normalize):
    rng = make_rng(seed)
    d, layers = 5, 3
    params = random_layers(rng, k, d, layers, scale=0.3)
    for l in range(layers):
        params[f"gcn.{l}.w_r"] = np.eye(k)
    v = rng.standard_normal((k, d))
    perm = rng.permutation(k)
    out = mmr_forward(v, params, layers, normalize=normalize).data
    out_perm = mmr_forward(v[perm], params, layers, normalize=normalize).data
    np.testing.assert_allclose(out_perm, out[perm], rtol=1e-12, atol=1e-12)


def test_padded_zero_nodes_stay_zero():
    rng = make_rng(9)
    k, d, layers = 8, 6, 4
    params = random_layers(rng, k, d, layers)
    for l in range(layers):
        params[f"gcn.{l}.phi.b"] = np.zeros(d)
        params[f"gcn.{l}.gamma.b"] = np.zeros(d)
        params[f"gcn.{l}.w_r"] = np.eye(k)
    v = rng.standard_normal((k, d))
    v[5:] = 0.0
    out = mmr_forward(v, params, layers).data
    assert not out[5:].any()
    assert out[:5].any()


@pytest.mark.parametrize("normalize", ["raw", "row-softmax"])
@pytest.mark.parametrize("shared", [False, True])
def test_gcn_gradients_with_general_wr(normalize, shared):
    rng = make_rng(10)
    k, d, layers = 4, 3, 2
    params = ParameterStore(random_layers(rng, k, d, layers, gamma_bias=normalize == "raw", scale=0.5))
    if shared:
        for name in [n for n in params if n.startswith("gcn.1.") and ("phi" in n or "gamma" in n)]:
            del params[name]
    v = rng.standard_normal((2, k, d))
    probe = rng.standard_normal((2, k, d))

    def loss(p):
        out = mmr_forward(v, p, layers, normalize=normalize, shared_affinity=shared)
        return ops.sum(ops.reshape(ops.multiply(out, probe), (-1,)), axis=0)

    report = finite_diff_check(loss, params)
    assert report.passed, report.errors
