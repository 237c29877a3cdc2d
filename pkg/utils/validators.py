"""
Argument validation utilities
Checks arrays and parameters before they reach the numerical core
"""

from typing import Iterable, Sequence, Tuple

import numpy as np

from core.errors import ArgumentError


class ArrayValidator:
    """
    Validates matrices, index lists and scalar parameters

    Each check comes in two flavours:
    - check_*: returns (is_valid, error_message), error empty when valid
    - require_*: raises ArgumentError with the message when invalid
    """

    # Tolerance used when checking that a PMF sums to one
    PMF_SUM_TOLERANCE = 1e-9

    # Tolerance for orthonormal-column checks
    ORTHONORMAL_TOLERANCE = 1e-8

    @staticmethod
    def check_pmf(pmf: np.ndarray, tolerance: float = PMF_SUM_TOLERANCE) -> Tuple[bool, str]:
        """
        Check that a matrix is a probability mass function over entries

        Args:
            pmf: Candidate m x n matrix
            tolerance: Allowed deviation of the total mass from 1

        Returns:
            Tuple of (is_valid, error_message)
        """
        if pmf.ndim != 2:
            return False, f"PMF must be a matrix, got {pmf.ndim} dimensions"

        if not np.all(np.isfinite(pmf)):
            return False, "PMF contains non-finite entries"

        if np.any(pmf < 0):
            return False, "PMF contains negative entries"

        total = float(pmf.sum())
        if abs(total - 1.0) > tolerance:
            return False, f"PMF sums to {total!r}, expected 1 within {tolerance:g}"

        return True, ""

    @staticmethod
    def check_orthonormal(
        basis: np.ndarray, tolerance: float = ORTHONORMAL_TOLERANCE
    ) -> Tuple[bool, str]:
        """
        Check that a matrix has orthonormal columns

        Args:
            basis: m x d matrix
            tolerance: Max entrywise deviation of basis^T basis from I_d

        Returns:
            Tuple of (is_valid, error_message)
        """
        if basis.ndim != 2:
            return False, "basis must be a matrix"

        gram = basis.T @ basis
        deviation = float(np.max(np.abs(gram - np.eye(basis.shape[1])), initial=0.0))
        if deviation > tolerance:
            return False, f"columns are not orthonormal (max |U^T U - I| = {deviation:.3e})"

        return True, ""

    @staticmethod
    def check_entries(entries: np.ndarray, m: int, n: int) -> Tuple[bool, str]:
        """
        Check that an (k, 2) integer array indexes an m x n matrix

        Args:
            entries: Array of (row, column) pairs
            m: Row count
            n: Column count

        Returns:
            Tuple of (is_valid, error_message)
        """
        if entries.ndim != 2 or entries.shape[1] != 2:
            return False, f"entries must have shape (k, 2), got {entries.shape}"

        if entries.size == 0:
            return True, ""

        rows, cols = entries[:, 0], entries[:, 1]
        if rows.min() < 0 or rows.max() >= m:
            return False, f"row index out of range [0, {m})"
        if cols.min() < 0 or cols.max() >= n:
            return False, f"column index out of range [0, {n})"

        return True, ""

    @staticmethod
    def check_unit_interval(value: float, name: str, open_ends: bool = False) -> Tuple[bool, str]:
        """
        Check that a scalar lies in [0, 1] (or (0, 1) when open_ends)

        Returns:
            Tuple of (is_valid, error_message)
        """
        if not np.isfinite(value):
            return False, f"{name} must be finite"
        if open_ends and not 0.0 < value < 1.0:
            return False, f"{name} must lie in (0, 1), got {value}"
        if not open_ends and not 0.0 <= value <= 1.0:
            return False, f"{name} must lie in [0, 1], got {value}"
        return True, ""

    @staticmethod
    def require_pmf(pmf: np.ndarray, tolerance: float = PMF_SUM_TOLERANCE) -> np.ndarray:
        """Raise ArgumentError unless `pmf` is a valid PMF; returns it as float array"""
        pmf = np.asarray(pmf, dtype=float)
        ok, error = ArrayValidator.check_pmf(pmf, tolerance)
        if not ok:
            raise ArgumentError(error)
        return pmf

    @staticmethod
    def require_orthonormal(basis: np.ndarray, name: str = "basis") -> np.ndarray:
        """Raise ArgumentError unless `basis` has orthonormal columns"""
        basis = np.asarray(basis, dtype=float)
        ok, error = ArrayValidator.check_orthonormal(basis)
        if not ok:
            raise ArgumentError(f"{name}: {error}")
        return basis

    @staticmethod
    def require_entries(entries: Iterable[Sequence[int]], m: int, n: int) -> np.ndarray:
        """Convert `entries` to an int64 (k, 2) array, raising on bad shape or range"""
        array = np.asarray(entries, dtype=np.int64)
        if array.size == 0:
            array = array.reshape(0, 2)
        ok, error = ArrayValidator.check_entries(array, m, n)
        if not ok:
            raise ArgumentError(error)
        return array

    @staticmethod
    def require_unit_interval(value: float, name: str, open_ends: bool = False) -> float:
        """Raise ArgumentError unless `value` lies in the unit interval"""
        ok, error = ArrayValidator.check_unit_interval(value, name, open_ends)
        if not ok:
            raise ArgumentError(error)
        return float(value)

    @staticmethod
    def require_same_length(a: np.ndarray, b: np.ndarray, what: str) -> None:
        """Raise ArgumentError when two vectors differ in length or are empty"""
        if a.shape[0] != b.shape[0]:
            raise ArgumentError(f"{what}: length mismatch ({a.shape[0]} vs {b.shape[0]})")
        if a.shape[0] == 0:
            raise ArgumentError(f"{what}: at least one value is required")


# Test the validator when running this file directly
if __name__ == "__main__":
    print("=" * 60)
    print("TESTING ARRAY VALIDATOR")
    print("=" * 60)

    test_cases = [
        (np.full((2, 2), 0.25), True, "Uniform 2x2 PMF"),
        (np.array([[0.5, 0.6], [0.0, 0.0]]), False, "Mass above one"),
        (np.array([[1.5, -0.5], [0.0, 0.0]]), False, "Negative entry"),
    ]

    print("\nRunning PMF checks:\n")
    for i, (pmf, expected, description) in enumerate(test_cases, 1):
        is_valid, error = ArrayValidator.check_pmf(pmf)
        status = "PASS" if is_valid == expected else "FAIL"
        print(f"Test {i}: {description:20} -> {status} {error}")

    print("\nRunning entry checks:\n")
    good = np.array([[0, 0], [1, 2]])
    bad = np.array([[0, 3]])
    print(f"  In range:     {ArrayValidator.check_entries(good, 2, 3)}")
    print(f"  Out of range: {ArrayValidator.check_entries(bad, 2, 3)}")

    print("\n" + "=" * 60)
    print("ALL VALIDATOR TESTS COMPLETE")
    print("=" * 60)
