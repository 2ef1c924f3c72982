"""Independent reference values for discriminator asymptotic variances.

Dense tensor Gauss-Legendre grids (numpy) rather than the adaptive rules used
by the library. Prints trace(Sigma)/n for the two-Gaussian classification case.
"""
import numpy as np

S1, S2 = 0.1, 0.05  # variances of real / fake classes


def grid(lo, hi, k=400):
    x, w = np.polynomial.legendre.leggauss(k)
    return 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


def two_gauss(mu2, lam, n):
    lo = min(-9 * np.sqrt(S1), mu2 - 9 * np.sqrt(S2))
    hi = max(9 * np.sqrt(S1), mu2 + 9 * np.sqrt(S2))
    x, w = grid(lo, hi)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w)
    lp = -np.log(2 * np.pi * S1) - (X1**2 + X2**2) / (2 * S1)
    lq = -np.log(2 * np.pi * S2) - ((X1 - mu2) ** 2 + (X2 - mu2) ** 2) / (2 * S2)
    p, q = np.exp(lp), np.exp(lq)
    rho = np.exp(lp - lq)
    phi = np.stack([np.ones_like(X1), X1, X2, X1**2, X2**2, X1 * X2])
    def E(dens, a):
        return np.einsum("ixy,jxy,xy->ij", phi, phi, W * dens * a)
    s0 = np.zeros((6, 6)); s0[0, 0] = 1
    c = 1 + 1 / lam
    inv = np.linalg.inv
    out = {}
    out["age"] = inv(E(p, 1 / (1 + rho / lam))) - c * s0
    A = E(p, 1.0); out["kl"] = inv(A) @ E(p, 1 + rho / lam) @ inv(A) - c * s0
    A = E(q, 1.0); out["revkl"] = inv(A) @ E(q, 1 / rho + 1 / lam) @ inv(A) - c * s0
    A = E(p, 1 / (1 + rho)); out["js"] = inv(A) @ E(p, (1 + rho / lam) / (1 + rho) ** 2) @ inv(A) - c * s0
    A = E(p, rho**-0.5); out["h2"] = inv(A) @ E(p, 1 / rho + 1 / lam) @ inv(A) - c * s0
    return {k: np.trace(v) / n for k, v in out.items()}


if __name__ == "__main__":
    for mu2 in (0.0, 0.3, 0.5):
        r = two_gauss(mu2, 10.0, 1e4)
        print(mu2, " ".join(f"{k}={v:.5g}" for k, v in r.items()))
