"""Per-task infima of the toy. Both sit on θ2 < 0, where only the quadratic
branch is active and θ1 = ±7 minimizes it, leaving a 1-D problem in θ2."""
import mpmath as mp

mp.mp.dps = 40
h = lambda t2: mp.tanh(-t2 / 2) * (mp.mpf("0.01") * (t2 + 8) ** 2 - 20)
t = mp.findroot(lambda x: mp.diff(h, x), -8.43)
print("theta2:", t)
print("task 1 infimum:", 0.1 * h(t))
print("task 2 infimum:", h(t))
