"""Smoke test for the Python bindings.

Build and install first, e.g. ``pip install maturin && cd crates/py && maturin develop --release``.
"""

import os
import tempfile

import eprldpc_py as ep


def main():
    gf8 = ep.Field(3)
    assert gf8.q == 8
    for a in range(1, 8):
        assert gf8.mul(a, gf8.inv(a)) == 1
    # the companion matrix of u applied to x is u*x
    rows = gf8.companion(5)
    x = 3
    applied = sum(((bin(r & x).count("1") & 1) << i) for i, r in enumerate(rows))
    assert applied == gf8.mul(5, x)

    code = ep.Code.construct(p=3, girth=6, n=60, seed=2, mode="base")
    assert code.n == 60 and code.p == 3
    assert code.girth() is None or code.girth() >= 6
    symbols, bits = code.random_codeword(seed=1, frame=0)
    assert code.is_codeword(symbols)
    assert len(bits) == 180

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "c.qalist")
        code.save(path)
        again = ep.Code.load(path)
        assert again.to_qalist() == code.to_qalist()

    out = code.decode_awgn(bits, "sepr", sigma=1e-6)
    assert out["converged"] and out["symbols"] == symbols

    csv = ep.sweep(code, "seb", "ebn0", [2.0, 3.0], min_errors=10, max_frames=256, seed=4)
    lines = csv.strip().splitlines()
    assert lines[0].startswith("channel_param,frames")
    assert len(lines) == 3
    assert csv == ep.sweep(code, "seb", "ebn0", [2.0, 3.0], min_errors=10, max_frames=256, seed=4, threads=2)

    est, se = ep.estimate_p4(3, trials=20000, seed=1)
    assert abs(est - 1 / 7) < 4 * se

    try:
        ep.Code.parse("qalist v1\nnonsense\n")
    except ValueError:
        pass
    else:
        raise AssertionError("malformed file accepted")

    print("smoke test passed:", code)


if __name__ == "__main__":
    main()
