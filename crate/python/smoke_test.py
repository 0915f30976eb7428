"""Quick end-to-end check of the qdpc_py bindings.

Build and install first:  pip install --no-build-isolation -e crates/python
Then run:                  python3 python/smoke_test.py
"""
import math

import numpy as np
import qdpc_py as q


def main():
    optics = q.Optics(size=64)
    tfs = optics.transfer_functions()
    assert len(tfs) == 2 and tfs[0].dtype == np.complex128 and tfs[0].shape == (64, 64)
    assert np.abs(tfs[0].real).max() == 0.0

    stack, gt = q.DpcStack.simulate(optics, snr_db=None, background=False)
    assert len(stack) == 2 and gt.shape == (64, 64)
    assert stack.noise_sigma() <= 1e-10

    rec = stack.reconstruct("l2", alpha=1e-6)
    print(f"l2 on clean data: rpSNR {q.rpsnr(rec, gt):.2f} dB, SSIM {q.ssim(rec, gt):.3f}")

    # The default debris layer is sized for 256 px grids; leave it out at 64.
    noisy, gt = q.DpcStack.simulate(optics, snr_db=5.0, seed=1, background=False)
    alpha, beta = noisy.auto_params()
    res = noisy.reconstruct_pd(iters=50)
    assert q.rpsnr(res["phase"], gt) > 5.0
    assert res["alpha"] == alpha and res["beta"] == beta
    assert len(res["cost_trace"]) == res["iterations"] and len(res["edges"]) == 2
    print(f"pd at 5 dB: rpSNR {q.rpsnr(res['phase'], gt):.2f} dB (alpha {alpha:.2e}, beta {beta:.2e})")

    # Rebuild a stack from plain arrays.
    again = q.DpcStack(noisy.images, optics)
    assert np.array_equal(again.images[0], noisy.images[0])

    assert q.rst_shrink(0.1, 0.1, 10.0) == 0.0
    assert math.isclose(q.rst_shrink(0.2, 0.1, 10.0), 0.16321205588285577, rel_tol=0, abs_tol=1e-12)

    learned = q.learn_pupil(q.Optics(size=32), iters=5)
    costs = learned["costs"]
    assert len(costs) == 6 and all(b >= a for a, b in zip(costs, costs[1:]))
    print(f"learned pupil: annulus energy {learned['annulus_energy']:.3f}, theta0 {learned['theta0_deg']:.1f} deg")

    try:
        q.Optics(size=64, na=-1.0).transfer_functions()
    except ValueError:
        pass
    else:
        raise AssertionError("negative NA accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
