"""Two zero-energy functions with the same boundary values on an annulus.

For the rotating Hamiltonian whose zero sets are radial segments of
half-width 2, both u = |x| - 1/2 and v = (2/5)(|x|^2 - 1/4) have H(x, Du) = 0
on 1/2 < |x| < 2 and agree on both circles, yet differ inside.  The zero sets
do not lie in a common line, which is exactly what the closeness estimate
for small slopes needs; the assumption checker reports that.

    python3 demos/counterexample.py
"""
import argparse

from absmin import solver as so
from absmin import verify as vf
from absmin.hamiltonian import SamplePlan, check_assumptions


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--h", type=float, default=0.05)
    args = ap.parse_args()

    B = so.counterexample_scenario(args.h)
    print(f"annulus grid {B.grid.shape}, h = {B.grid.h:g}")
    print(f"boundary residual |u - v|: {B.boundary_residual:.1e}")
    print(f"energies max H(x, Du): u {B.energy_u:.1e}, v {B.energy_v:.1e}")
    print(f"largest interior gap u - v: {B.interior_gap:.4f} at |x| = {B.gap_radius:.3f} "
          f"(closed form 9/40 = 0.225 at |x| = 5/4)")

    pts = B.grid.coords[B.grid.inside][::25]
    rep = check_assumptions(B.spec, SamplePlan(x_samples=pts))
    print(f"zero sets in a common line: {rep.a2_zeroset_ok} "
          f"(best-line deviation {rep.a2_plane_deviation:.3f})")
    close = vf.check_small_slope_closeness(B.grid, B.spec, B.u, B.v)
    print(f"small-slope closeness: passed={close.passed}, reason: {close.details.get('reason')}")


if __name__ == "__main__":
    main()
