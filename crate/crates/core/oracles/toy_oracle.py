"""Independent numpy evaluation of the two-task toy, plus its Pareto front
on the 2000×2000 grid over [-12, 12]². Values printed here are frozen in the
Rust tests."""
import numpy as np


def toy(t1, t2):
    f1 = np.log(np.maximum(np.abs(0.5 * (-t1 - 7) - np.tanh(-t2)), 0.000005)) + 6
    f2 = np.log(np.maximum(np.abs(0.5 * (-t1 + 3) - np.tanh(-t2) + 2), 0.000005)) + 6
    g1 = ((-t1 + 7) ** 2 + 0.1 * (-t2 - 8) ** 2) / 10 - 20
    g2 = ((-t1 - 7) ** 2 + 0.1 * (-t2 - 8) ** 2) / 10 - 20
    c1 = np.maximum(np.tanh(0.5 * t2), 0)
    c2 = np.maximum(np.tanh(-0.5 * t2), 0)
    return 0.1 * (c1 * f1 + c2 * g1), c1 * f2 + c2 * g2


if __name__ == "__main__":
    print("losses at (-8.5, 7.5):", [repr(float(x)) for x in toy(-8.5, 7.5)])
    g = np.linspace(-12, 12, 2000)
    t1, t2 = np.meshgrid(g, g, indexing="ij")
    l1, l2 = toy(t1, t2)
    pts = np.stack([l1.ravel(), l2.ravel()], 1)
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    front, best = [], np.inf
    for a, b in pts:
        if b < best:
            front.append((a, b))
            best = b
    front = np.array(front)
    gaps = np.linalg.norm(np.diff(front, axis=0), axis=1)
    print("front points:", len(front), "max gap:", gaps.max())
