import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmrgraph.core import (
    LEAKY_GAIN,
    ParameterStore,
    Tape,
    Tensor,
    finite_diff_check,
    make_rng,
    ops,
    primitive_forward,
    reverse_accumulate,
    seeded_init,
)
from mmrgraph.core.gradcheck import relative_error
from mmrgraph.exceptions import (
    GradientCheckError,
    NonFiniteError,
    ShapeError,
    TapeError,
    UnknownOpError,
)


def central_difference(f, x, h=1e-6):
    """Independent gradient oracle on plain numpy arrays."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


def grad_of(build, *arrays):
    with Tape() as tape:
        leaves = [tape.watch(a) for a in arrays]
        loss = build(*leaves)
    grads = reverse_accumulate(tape, loss)
    return [grads[t.node] for t in leaves]


# -- primitive forward examples ------------------------------------------------


def test_matmul_identity():
    a = make_rng(3).standard_normal((3, 3))
    np.testing.assert_array_equal(ops.matmul(np.eye(3), a).data, a)


def test_leaky_relu_slope():
    assert ops.leaky_relu(np.array([-1.0])).data[0] == -0.01
    assert ops.leaky_relu(np.array([2.5])).data[0] == 2.5


@given(st.floats(-50, 50), st.floats(-20, 20))
def test_softmax_shift_invariance(c, s):
    a = ops.softmax(np.array([c, c + s])).data
    b = ops.softmax(np.array([0.0, s])).data
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_softmax_normalised(seed):
    x = make_rng(seed).normal(scale=10.0, size=(4, 7))
    y = ops.softmax(x, axis=-1).data
    assert (y > 0).all()
    np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-12)


def test_dropout_eval_is_identity():
    x = make_rng(1).standard_normal((5, 6))
    np.testing.assert_array_equal(ops.dropout(x, 0.3, train=False).data, x)


def test_dropout_train_inverted_scaling():
    x = np.ones((200, 200))
    y = ops.dropout(x, 0.3, train=True, rng=make_rng(2)).data
    kept = y != 0
    np.testing.assert_allclose(y[kept], 1 / 0.7)
    assert abs(kept.mean() - 0.7) < 0.01


def test_shape_mismatch_raises():
    with pytest.raises(ShapeError):
        ops.matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ShapeError):
        ops.multiply(np.ones(3), np.ones(4))
    with pytest.raises(ShapeError):
        ops.affine(np.ones((2, 3)), np.ones((3, 4)), np.ones(3))


def test_non_finite_is_hard_error():
    with pytest.raises(NonFiniteError):
        ops.log(np.array([0.0, 1.0]))
    with pytest.raises(NonFiniteError):
        ops.multiply(np.array([1e308]), np.array([1e308]))


def test_unknown_op():
    with pytest.raises(UnknownOpError):
        primitive_forward("convolve", np.ones(2))


def test_tensor_does_not_freeze_caller_array():
    a = np.zeros(3)
    Tensor(a)
    a[0] = 1.0  # still writable


# -- reverse accumulation --------------------------------------------------------


def test_product_rule():
    gx, gy = grad_of(lambda x, y: ops.sum(ops.multiply(x, y), axis=0), np.array([2.0]), np.array([5.0]))
    assert gx[0] == 5.0 and gy[0] == 2.0


def test_mean_adjoint():
    (g,) = grad_of(lambda v: ops.mean(v, axis=0), np.arange(7.0))
    np.testing.assert_allclose(g, np.full(7, 1 / 7))


def test_softmax_of_matmul_matches_finite_differences():
    rng = make_rng(11)
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    weights = rng.standard_normal((3, 2))

    def build(x, y):
        s = ops.softmax(ops.matmul(x, y), axis=-1)
        return ops.sum(ops.sum(ops.multiply(s, Tensor(weights)), axis=-1), axis=0)

    def plain(x, y):
        z = x @ y
        e = np.exp(z - z.max(axis=-1, keepdims=True))
        return float(((e / e.sum(axis=-1, keepdims=True)) * weights).sum())

    ga, gb = grad_of(build, a, b)
    assert relative_error(central_difference(lambda x: plain(x, b), a), ga) < 1e-6
    assert relative_error(central_difference(lambda y: plain(a, y), b), gb) < 1e-6


PRIMITIVE_CASES = {
    "matmul": (lambda a, b: ops.matmul(a, b), [(2, 3, 4), (4, 5)]),
    "add": (lambda a, b: ops.add(a, b), [(3, 4), (4,)]),
    "subtract": (lambda a, b: ops.subtract(a, b), [(3, 4), (3, 1)]),
    "multiply": (lambda a, b: ops.multiply(a, b), [(3, 4), (3, 4)]),
    "broadcast_multiply": (lambda a, b: ops.broadcast_multiply(a, b), [(2, 3, 4), (2, 3, 1)]),
    "concat": (lambda a, b: ops.concat([a, b], axis=-2), [(2, 3, 4), (2, 2, 4)]),
    "reshape": (lambda a: ops.reshape(a, (6, 2)), [(3, 4)]),
    "mean": (lambda a: ops.mean(a, axis=1), [(3, 4, 2)]),
    "sum": (lambda a: ops.sum(a, axis=0), [(3, 4)]),
    "transpose": (lambda a: ops.transpose(a), [(2, 3, 4)]),
    "affine": (lambda x, w, b: ops.affine(x, w, b), [(2, 3, 4), (4, 5), (5,)]),
    "leaky_relu": (lambda a: ops.leaky_relu(a), [(5, 4)]),
    "softmax": (lambda a: ops.softmax(a, axis=-2), [(2, 5, 3)]),
    "log": (lambda a: ops.log(ops.softmax(a), floor=1e-12), [(3, 4)]),
    "dropout_eval": (lambda a: ops.dropout(a, 0.3, train=False), [(3, 4)]),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVE_CASES))
def test_primitive_gradients_match_central_differences(name):
    build, shapes = PRIMITIVE_CASES[name]
    rng = make_rng(sum(map(ord, name)))
    arrays = [rng.standard_normal(s) for s in shapes]
    # keep leaky-relu inputs away from the kink
    arrays = [np.where(np.abs(a) < 1e-3, 0.5, a) for a in arrays]
    probe = rng.standard_normal(build(*arrays).shape)

    def scalar(*xs):
        return ops.sum(ops.reshape(ops.broadcast_multiply(build(*xs), Tensor(probe)), (-1,)), axis=0)

    ad = grad_of(scalar, *arrays)
    for i in range(len(arrays)):
        def f(x, i=i):
            args = list(arrays)
            args[i] = x
            return scalar(*args).item()

        fd = central_difference(f, arrays[i])
        assert relative_error(fd, ad[i]) < 1e-6, name


def test_dropout_train_gradient_uses_mask():
    x = make_rng(0).standard_normal((4, 4))
    with Tape() as tape:
        leaf = tape.watch(x)
        y = ops.dropout(leaf, 0.5, train=True, rng=make_rng(9))
        loss = ops.sum(ops.reshape(y, (-1,)), axis=0)
    g = reverse_accumulate(tape, loss)[leaf.node]
    np.testing.assert_array_equal(g, y.data / np.where(x == 0, 1, x) * (y.data != 0))


def test_untouched_leaf_gets_zero_gradient():
    with Tape() as tape:
        x = tape.watch(np.ones(3))
        unused = tape.watch(np.ones((2, 2)))
        loss = ops.sum(x, axis=0)
    grads = reverse_accumulate(tape, loss)
    np.testing.assert_array_equal(grads[unused.node], np.zeros((2, 2)))


def test_loss_must_be_scalar_on_tape():
    with Tape() as tape:
        x = tape.watch(np.ones(3))
        y = ops.leaky_relu(x)
    with pytest.raises(ShapeError):
        reverse_accumulate(tape, y)
    with pytest.raises(TapeError):
        reverse_accumulate(Tape(), ops.sum(np.ones(3), axis=0))


def test_tape_is_topologically_ordered_and_replays_bitwise():
    rng = make_rng(5)
    with Tape() as tape:
        x = tape.watch(rng.standard_normal((3, 4)))
        w = tape.watch(rng.standard_normal((4, 4)))
        h = ops.dropout(ops.leaky_relu(ops.matmul(x, w)), 0.3, train=True, rng=rng)
        ops.sum(ops.mean(ops.softmax(h), axis=0), axis=0)
    for rec in tape.records:
        assert all(i is None or i < rec.output for i in rec.inputs)
    replayed = tape.replay()
    for orig, again in zip(tape.values, replayed):
        assert orig.tobytes() == again.tobytes()


def test_constants_are_not_recorded():
    with Tape() as tape:
        ops.add(np.ones(2), np.ones(2))
    assert tape.records == []


# -- finite-difference checker ------------------------------------------------------


def test_gradcheck_quadratic():
    params = ParameterStore({"x": np.array([3.0])})
    report = finite_diff_check(lambda p: ops.sum(ops.multiply(p["x"], p["x"]), axis=0), params, step=1e-6, tol=1e-9)
    assert report.passed, report.errors
    assert report.max_error < 1e-9


def test_gradcheck_constant_function():
    params = ParameterStore({"x": np.array([1.0, 2.0])})
    report = finite_diff_check(lambda p: ops.sum(Tensor(np.ones(2)), axis=0), params)
    assert report.max_error == 0.0 and report.passed


def test_gradcheck_detects_nondeterminism():
    params = ParameterStore({"x": np.array([1.0])})
    rng = make_rng(0)

    def noisy(p):
        return ops.sum(ops.add(p["x"], Tensor(rng.standard_normal(1))), axis=0)

    with pytest.raises(GradientCheckError):
        finite_diff_check(noisy, params)


def test_gradcheck_rejects_bad_step():
    with pytest.raises(ValueError):
        finite_diff_check(lambda p: ops.sum(p["x"], axis=0), ParameterStore({"x": np.ones(1)}), step=0.0)


# -- initialisation ------------------------------------------------------------------


def test_seeded_init_deterministic():
    a = seeded_init((5, 7), 5, make_rng(42), LEAKY_GAIN)
    b = seeded_init((5, 7), 5, make_rng(42), LEAKY_GAIN)
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("gain", [1.0, LEAKY_GAIN])
def test_seeded_init_bound(gain):
    fan_in = 9
    w = seeded_init((fan_in, 300), fan_in, make_rng(1), gain)
    bound = gain * np.sqrt(6 / fan_in)
    assert np.abs(w).max() <= bound
    assert np.abs(w).max() > 0.9 * bound


def test_seeded_init_zero_fan_in():
    with pytest.raises(ValueError):
        seeded_init((2, 2), 0, make_rng(0))


def test_rng_stream_is_reproducible():
    assert make_rng(7, 1).random(4).tobytes() == make_rng(7, 1).random(4).tobytes()
    assert make_rng(7, 1).random(4).tobytes() != make_rng(7, 2).random(4).tobytes()
    with pytest.raises(ValueError):
        make_rng(2**64)
