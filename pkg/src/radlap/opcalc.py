"""Singular values, trace norms and trace identities in a weighted inner
product, at dense matrix scale.

An SPD matrix G turns C^n into the Hilbert space with <x, y>_G = y^H G x; an
operator T on that space is unitarily equivalent to L^H T L^{-H} on Euclidean
C^n, where G = L L^H is the Cholesky factorization.  Singular values, the
operator norm and the nuclear norm are computed in that frame.  The trace
needs no frame at all: conjugation preserves it, and it equals the eigenvalue
sum at finite dimension.

Everything here runs at dimensions of a few hundred; the infinite-dimensional
counterparts of these facts are covered by the heat-trace tail estimates, not
by this module.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

BOUND_RTOL = 1e-6
BOUND_ATOL = 1e-12


def _cholesky_ip(ip: np.ndarray) -> np.ndarray:
    ip = np.asarray(ip)
    if ip.ndim != 2 or ip.shape[0] != ip.shape[1]:
        raise ValueError("inner product must be a square matrix")
    scale = np.abs(ip).max()
    if not np.allclose(ip, ip.conj().T, rtol=0.0, atol=1e-12 * max(scale, 1.0)):
        raise ValueError("inner product must be symmetric positive definite")
    try:
        return np.linalg.cholesky(ip)
    except np.linalg.LinAlgError:
        raise ValueError("inner product must be symmetric positive definite")


def _euclidean_frame(matrix: np.ndarray, ip=None) -> np.ndarray:
    """L^H T L^{-H}, the Euclidean realization of T in the ip geometry."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("operator must be a square matrix")
    if ip is None:
        return matrix
    L = _cholesky_ip(ip)
    if L.shape[0] != matrix.shape[0]:
        raise ValueError("operator and inner product sizes differ")
    right = sla.solve_triangular(L, matrix.conj().T, lower=True).conj().T
    return L.conj().T @ right


def singular_values(matrix, ip=None) -> np.ndarray:
    """Singular values in the ip geometry, descending."""
    return sla.svdvals(_euclidean_frame(matrix, ip))


def operator_norm(matrix, ip=None) -> float:
    sig = singular_values(matrix, ip)
    return float(sig[0]) if len(sig) else 0.0


def nuclear_norm(matrix, ip=None) -> float:
    return float(np.sum(singular_values(matrix, ip)))


def trace(matrix):
    """Frame-independent: Tr(L^H T L^{-H}) = Tr(T) = sum of eigenvalues."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("operator must be a square matrix")
    val = complex(np.trace(matrix))
    return val.real if abs(val.imag) <= 1e-14 * (1.0 + abs(val)) else val


@dataclass
class FiniteOperator:
    """A dense operator together with the SPD matrix of its inner product."""

    matrix: np.ndarray
    inner_product: np.ndarray | None = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix)
        if self.inner_product is not None:
            self.inner_product = np.asarray(self.inner_product)
            _cholesky_ip(self.inner_product)

    def singular_values(self) -> np.ndarray:
        return singular_values(self.matrix, self.inner_product)

    def operator_norm(self) -> float:
        return operator_norm(self.matrix, self.inner_product)

    def nuclear_norm(self) -> float:
        return nuclear_norm(self.matrix, self.inner_product)

    def trace(self):
        return trace(self.matrix)


def _entry(name, lhs, rhs, **extra):
    entry = {"bound_name": name, "lhs": float(lhs), "rhs": float(rhs),
             "slack": float(rhs - lhs),
             "pass": bool(lhs <= rhs * (1.0 + BOUND_RTOL) + BOUND_ATOL)}
    entry.update(extra)
    return entry


def metric_distortion(ip_a, ip_b) -> float:
    """The eps with ||x||_b / ||x||_a in [1-eps, 1+eps], from the extreme
    generalized eigenvalues of the (ip_b, ip_a) pencil."""
    ratios = np.sqrt(sla.eigvalsh(np.asarray(ip_b), np.asarray(ip_a)))
    return float(max(1.0 - ratios[0], ratios[-1] - 1.0, 0.0))


def norm_inequality_suite(A, T, B, ip=None, ip_other=None) -> list:
    """Bound entries for the trace-norm facts on one concrete instance.

    Always checks ||A T B||_1 <= ||A|| ||T||_1 ||B|| in the ip geometry.
    Given a second inner product, also checks the two-metric comparison
    (1-eps)/(1+eps) sigma_n(T)_other <= sigma_n(T)_ip for every n, with eps
    the measured distortion between the two geometries.
    """
    lhs = nuclear_norm(np.asarray(A) @ np.asarray(T) @ np.asarray(B), ip)
    rhs = operator_norm(A, ip) * nuclear_norm(T, ip) * operator_norm(B, ip)
    entries = [_entry("product_trace_norm", lhs, rhs)]
    if ip_other is None:
        return entries

    eps = metric_distortion(ip, ip_other)
    if eps >= 1.0:
        raise ValueError("geometries too far apart: distortion >= 1")
    sig_here = singular_values(T, ip)
    sig_there = singular_values(T, ip_other)
    factor = (1.0 - eps) / (1.0 + eps)
    # worst index of the sandwich, reported as a single entry
    gaps = sig_here - factor * sig_there
    worst = int(np.argmin(gaps))
    entries.append(_entry("singular_value_two_metric_sandwich",
                          factor * sig_there[worst], sig_here[worst],
                          eps=eps, index=worst))
    return entries
