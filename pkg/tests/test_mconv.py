import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import gradient_check, mconv_block_oracle

from polardemosaic import autodiff as ad
from polardemosaic.mconv import MASKS, MConvParams, mconv, mconv_block


def test_masks_partition_unity():
    assert np.array_equal(sum(MASKS), np.ones((2, 2)))
    for m in MASKS:
        assert m.sum() == 1


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_block_matches_position_oracle(hh, ww, cin, d, seed):
    rng = np.random.default_rng(seed)
    t = rng.standard_normal((2, 2 * hh, 2 * ww, cin))
    params = MConvParams.init(rng, cin, d, np.float64)
    for b in params.biases:
        b.value = rng.standard_normal(d)
    got = mconv_block(ad.Node(t), params).value
    ref = mconv_block_oracle(t, [k.value for k in params.kernels], [b.value for b in params.biases])
    np.testing.assert_allclose(got, ref, atol=1e-12)


def test_branch_only_fills_its_parity():
    rng = np.random.default_rng(0)
    params = MConvParams.init(rng, 1, 2, np.float64)
    t = ad.Node(rng.uniform(0.5, 1, (1, 4, 4, 1)))
    for r in (0, 1):
        for c in (0, 1):
            out = mconv(t, r, c, params.kernels[2 * r + c], params.biases[2 * r + c]).value
            keep = np.zeros((4, 4), bool)
            keep[r::2, c::2] = True
            assert np.all(out[0][~keep] == 0)


def test_param_names():
    p = MConvParams.init(np.random.default_rng(0), 3, 4, prefix="mconv1")
    assert sorted(p.named()) == sorted(f"mconv1.{b}.{k}" for b in range(4) for k in ("kernel", "bias"))
    assert p.depth == 4


def test_block_gradient():
    rng = np.random.default_rng(1)
    t = rng.standard_normal((1, 4, 4, 2))
    ks = [rng.standard_normal((2, 2, 2, 3)) for _ in range(4)]
    bs = [rng.standard_normal(3) for _ in range(4)]

    def build(n):
        return mconv_block(n[0], MConvParams(n[1:5], n[5:9]))

    assert gradient_check(build, [t, *ks, *bs], rng) <= 1e-5
