"""The inexact-contraction recursion, its envelope, and its sharpness.

Everything in this package reduces to one recursion: an iteration that
contracts by c_t toward the optimum, then absorbs noise bounded by
alpha_t.  The envelope D_T^2 |w0 - w*|^2 + C_T^2 governs it -- and an
explicit adversarial construction (orthogonal coin-flipped noise)
*achieves* it exactly, so the envelope cannot be improved.  Linear decay
of the envelope requires contractions bounded below one and linearly
decaying noise; the classifier below checks both ways.
"""

import numpy as np

from deedsim import RecursionSpec, linear_rate_iff_check, recursion_bound, tightness_construction

T = 120
spec = RecursionSpec(
    c_seq=np.full(T, 0.9),
    alpha_seq=0.5 * 0.93 ** np.arange(T),
    D0=2.0,
)
series = recursion_bound(spec, T)
trace = tightness_construction(spec, np.array([2.0, 0.0, 0.0]), T, seed=0)

print("envelope vs the adversarial run that attains it (squared distances):")
print(f"{'t':>4} {'envelope':>14} {'adversarial':>14} {'rel gap':>10}")
for t in (0, 10, 30, 60, 120):
    gap = abs(trace.fgap[t] - series.bound[t]) / series.bound[t]
    print(f"{t:4d} {series.bound[t]:14.6e} {trace.fgap[t]:14.6e} {gap:10.2e}")

print("\nlinear-decay classification:")
cases = {
    "c=0.9, alpha ~ 0.95^t  ": RecursionSpec(np.full(300, 0.9), 0.95 ** np.arange(300), 1.0),
    "c=0.9, alpha ~ 1/(t+1) ": RecursionSpec(np.full(300, 0.9), 1.0 / (np.arange(300) + 1.0), 1.0),
    "c -> 1 like 1 - 1/(t+2)": RecursionSpec(1.0 - 1.0 / (np.arange(300) + 2.0), np.zeros(300), 1.0),
}
for label, s in cases.items():
    v = linear_rate_iff_check(s)
    print(
        f"  {label}: linear={str(v.is_linear):5s} "
        f"(contraction bounded: {v.contraction_bounded}, noise linear: {v.noise_linear}, "
        f"tail slope {v.slope:+.4f}, R^2 {v.r_squared:.4f})"
    )
