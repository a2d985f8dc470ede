import numpy as np
import pytest

from ibfsi.kernels import IB4, IB8, get_kernel, ib4, ib8, stencil_weights_1d, tensor_weight

RNG = np.random.default_rng(7)


def brute_translate_sum(kernel, r, moment=0):
    """Direct summation of sum_j (r-j)^moment * kernel(r-j) over the support."""
    j = np.arange(np.floor(r) - 8, np.floor(r) + 9)
    return float(np.sum((r - j) ** moment * kernel(r - j)))


def test_ib4_closed_form_values():
    assert ib4(0.0) == pytest.approx(0.5, abs=1e-15)
    assert ib4(1.0) == pytest.approx(0.25, abs=1e-15)
    assert ib4(2.0) == 0.0
    assert ib4(-2.0) == 0.0
    assert ib4(3.7) == 0.0


def test_ib4_defining_identities_at_zero():
    # phi(0) + 2 phi(1) = 1 together with the even/odd split fixes phi(0)
    assert ib4(0.0) + 2 * ib4(1.0) == pytest.approx(1.0, abs=1e-15)
    assert ib4(1.0) == ib4(-1.0)


def test_ib4_partition_of_unity_in_unit_interval():
    for r in RNG.uniform(0.0, 1.0, size=50):
        s = ib4(r) + ib4(r - 1.0) + ib4(r + 1.0) + ib4(r - 2.0)
        assert abs(s - 1.0) < 1e-14


@pytest.mark.parametrize("kernel", [ib4, ib8], ids=["ib4", "ib8"])
def test_partition_of_unity_and_first_moment(kernel):
    offsets = RNG.uniform(-10.0, 10.0, size=1000)
    for r in offsets:
        assert abs(brute_translate_sum(kernel, r, 0) - 1.0) < 1e-13
        assert abs(brute_translate_sum(kernel, r, 1)) < 1e-13


def test_ib4_even_odd_sums():
    for r in RNG.uniform(-3.0, 3.0, size=200):
        j = np.arange(np.floor(r) - 6, np.floor(r) + 7)
        w = ib4(r - j)
        even = float(np.sum(w[j.astype(int) % 2 == 0]))
        odd = float(np.sum(w[j.astype(int) % 2 == 1]))
        assert abs(even - 0.5) < 1e-13
        assert abs(odd - 0.5) < 1e-13


def test_ib4_nonnegative_dense_sampling():
    r = np.linspace(-2.5, 2.5, 20001)
    assert np.all(ib4(r) >= 0.0)


def test_ib8_support_and_dilation():
    assert ib8(4.0) == 0.0
    assert ib8(-4.0) == 0.0
    assert ib8(0.0) == ib4(0.0) / 2.0
    r = RNG.uniform(-5.0, 5.0, size=500)
    assert np.all(ib8(r) - ib4(r / 2.0) / 2.0 == 0.0)


def test_tensor_weight_at_origin_and_outside_support():
    assert tensor_weight((0.0, 0.0, 0.0), IB4) == pytest.approx(ib4(0.0) ** 3)
    assert tensor_weight((2.0, 0.1, -0.3), IB4) == 0.0
    assert tensor_weight((0.1, 3.0), IB4) == 0.0


def test_tensor_weight_sums_to_one_over_grid_shifts():
    # brute force over the 4^3 support
    for _ in range(20):
        r = RNG.uniform(-0.5, 0.5, size=3)
        total = 0.0
        for i in range(-3, 4):
            for j in range(-3, 4):
                for k in range(-3, 4):
                    total += tensor_weight((r[0] - i, r[1] - j, r[2] - k), IB4)
        assert abs(total - 1.0) < 1e-12


def test_stencil_weights_cover_support():
    for _ in range(50):
        r = RNG.uniform(-20.0, 20.0, size=1)[0]
        for kernel in (IB4, IB8):
            j0, w = stencil_weights_1d(r, kernel)
            assert len(w) == kernel.support_width
            assert abs(np.sum(w) - 1.0) < 1e-13
            # everything outside the returned stencil has zero weight
            assert kernel.evaluate(r - (j0 - 1)) == 0.0
            assert kernel.evaluate(r - (j0 + kernel.support_width)) == 0.0


def test_get_kernel_lookup():
    assert get_kernel("ib4") is IB4
    assert get_kernel("ib8") is IB8
    with pytest.raises(KeyError):
        get_kernel("ib6")
