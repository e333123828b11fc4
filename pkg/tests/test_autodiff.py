import math

import numpy as np
import pytest

from semdep.autodiff import (AdamState, ParamTensor, Tape, adam_step,
                             clip_global_norm, finite_diff_check, glorot_bound,
                             glorot_init)


def test_glorot_bound_3x3_is_one():
    rng = np.random.default_rng(0)
    m = glorot_init(3, 3, rng)
    assert glorot_bound(3, 3) == 1.0
    assert np.all(np.abs(m) <= 1.0)


def test_glorot_bound_200x100():
    assert glorot_bound(200, 100) == pytest.approx(math.sqrt(6.0 / 300.0))
    assert glorot_bound(200, 100) == pytest.approx(0.1414213562, abs=1e-9)


def test_glorot_all_draws_within_bound():
    rng = np.random.default_rng(1)
    m = glorot_init(500, 200, rng)  # 1e5 draws
    assert m.size == 100000
    assert np.all(np.abs(m) <= glorot_bound(500, 200))
    assert abs(m.mean()) < 0.005


def test_glorot_rejects_empty():
    with pytest.raises(ValueError):
        glorot_init(0, 3, np.random.default_rng(0))


def test_backward_tanh_at_zero():
    p = ParamTensor("x", np.zeros(()))
    tape = Tape()
    y = tape.tanh(tape.param(p))
    tape.backward(y)
    assert p.grad == pytest.approx(1.0)


def test_backward_inner_self():
    v = np.array([1.5, -2.0, 0.25])
    p = ParamTensor("x", v)
    tape = Tape()
    x = tape.param(p)
    y = tape.inner(x, x)
    tape.backward(y)
    assert np.allclose(p.grad, 2 * v)


def test_backward_two_uses_accumulate():
    p = ParamTensor("x", np.array([1.0, 2.0]))
    a = np.array([3.0, 5.0])
    b = np.array([-1.0, 4.0])
    tape = Tape()
    x = tape.param(p)
    y = tape.add(tape.inner(x, tape.const(a)), tape.inner(x, tape.const(b)))
    tape.backward(y)
    assert np.allclose(p.grad, a + b)


def test_backward_mlp_matches_finite_differences():
    rng = np.random.default_rng(3)
    w1 = ParamTensor("w1", rng.standard_normal((5, 4)) * 0.5)
    b1 = ParamTensor("b1", rng.standard_normal(5) * 0.1)
    w2 = ParamTensor("w2", rng.standard_normal((3, 5)) * 0.5)
    b2 = ParamTensor("b2", rng.standard_normal(3) * 0.1)
    x = rng.standard_normal(4)
    c = rng.standard_normal(3)
    params = [w1, b1, w2, b2]

    def forward():
        tape = Tape()
        h = tape.tanh(tape.add(tape.matvec(tape.param(w1), tape.const(x)),
                               tape.param(b1)))
        o = tape.tanh(tape.add(tape.matvec(tape.param(w2), h),
                               tape.param(b2)))
        return tape, tape.inner(o, tape.const(c))

    tape, out = forward()
    tape.backward(out)
    err = finite_diff_check(lambda: float(forward()[1].value), params)
    assert err < 1e-4


@pytest.mark.parametrize("op", ["matvec", "add", "addn", "sub", "scale",
                                "concat", "tanh", "logistic", "mul", "inner",
                                "vsum", "row"])
def test_primitive_gradients_match_finite_differences(op):
    rng = np.random.default_rng(hash(op) % 2**31)
    n = int(rng.integers(2, 16))
    m = int(rng.integers(2, 16))
    if op in ("matvec", "row"):
        p = ParamTensor("p", rng.standard_normal((m, n)))
        q = ParamTensor("q", rng.standard_normal(n))
    else:
        p = ParamTensor("p", rng.standard_normal(n))
        q = ParamTensor("q", rng.standard_normal(n))
    c = rng.standard_normal(1)[0]
    seedvec = rng.standard_normal

    def forward():
        tape = Tape()
        a, b = tape.param(p), tape.param(q)
        if op == "matvec":
            out = tape.matvec(a, b)
        elif op == "row":
            out = tape.row(a, 1)
        elif op == "add":
            out = tape.add(a, b)
        elif op == "addn":
            out = tape.addn([a, b, a])
        elif op == "sub":
            out = tape.sub(a, b)
        elif op == "scale":
            out = tape.scale(a, c)
        elif op == "concat":
            out = tape.concat([a, b])
        elif op == "tanh":
            out = tape.tanh(a)
        elif op == "logistic":
            out = tape.logistic(a)
        elif op == "mul":
            out = tape.mul(a, b)
        elif op == "inner":
            out = tape.inner(a, b)
        elif op == "vsum":
            out = tape.vsum(a)
        if out.value.shape != ():
            out = tape.inner(out, tape.const(weights[:out.value.shape[0]]))
        return tape, out

    weights = seedvec(max(m, n) + n)
    tape, out = forward()
    tape.backward(out)
    err = finite_diff_check(lambda: float(forward()[1].value), [p, q])
    assert err < 1e-4, f"{op}: {err}"


def test_shape_errors_at_record_time():
    tape = Tape()
    a = tape.const(np.zeros(3))
    b = tape.const(np.zeros(4))
    with pytest.raises(ValueError):
        tape.add(a, b)
    with pytest.raises(ValueError):
        tape.inner(a, b)
    with pytest.raises(ValueError):
        tape.matvec(a, b)


def test_adam_zero_gradient_keeps_params():
    p = ParamTensor("p", np.array([1.0, -2.0]))
    state = AdamState([p])
    adam_step([p], state, 1e-3)
    assert np.allclose(p.value, [1.0, -2.0])


def test_adam_first_step_magnitude():
    # g=1 at t=1: bias-corrected m=1, v=1, so the step is eta/(1+eps)
    p = ParamTensor("p", np.zeros(()))
    p.grad[...] = 1.0
    state = AdamState([p])
    adam_step([p], state, 1e-3)
    assert float(p.value) == pytest.approx(-1e-3, rel=1e-6)


def test_adam_deterministic():
    def run():
        rng = np.random.default_rng(5)
        p = ParamTensor("p", rng.standard_normal(4))
        state = AdamState([p])
        for _ in range(10):
            p.grad[...] = rng.standard_normal(4)
            adam_step([p], state, 1e-3)
        return p.value.copy()
    assert np.array_equal(run(), run())


def test_adam_rejects_nonfinite_gradient():
    p = ParamTensor("bad_param", np.zeros(2))
    p.grad[0] = np.nan
    with pytest.raises(ValueError, match="bad_param"):
        adam_step([p], AdamState([p]), 1e-3)


def test_clip_below_norm_unchanged():
    g = [np.array([0.3, 0.4])]
    norm = clip_global_norm(g, 1.0)
    assert norm == pytest.approx(0.5)
    assert np.allclose(g[0], [0.3, 0.4])


def test_clip_34_to_unit():
    g = [np.array([3.0, 4.0])]
    clip_global_norm(g, 1.0)
    assert np.allclose(g[0], [0.6, 0.8])


def test_clip_postcondition_norm():
    rng = np.random.default_rng(6)
    for _ in range(50):
        gs = [rng.standard_normal(int(rng.integers(1, 6))) * 3 for _ in range(3)]
        clip_global_norm(gs, 1.0)
        total = math.sqrt(sum(float(np.sum(g * g)) for g in gs))
        assert total <= 1.0 + 1e-12


def test_finite_diff_linear_function():
    p = ParamTensor("p", np.array([1.0, 2.0, 3.0]))
    c = np.array([0.5, -1.5, 2.5])
    p.grad[...] = c
    err = finite_diff_check(lambda: float(c @ p.value), [p])
    assert err < 1e-10


def test_finite_diff_tanh_chain_depth_4():
    p = ParamTensor("p", np.array([0.3, -0.4]))

    def forward():
        tape = Tape()
        x = tape.param(p)
        for _ in range(4):
            x = tape.tanh(x)
        return tape, tape.vsum(x)

    tape, out = forward()
    tape.backward(out)
    err = finite_diff_check(lambda: float(forward()[1].value), [p])
    assert err < 1e-4


def test_finite_diff_detects_wrong_gradient():
    p = ParamTensor("p", np.array([0.7]))
    p.grad[...] = 2.0  # true gradient of sum(x) is 1
    err = finite_diff_check(lambda: float(p.value.sum()), [p])
    assert err > 0.3
