from collections.abc import Sequence


def upper_bound(values: Sequence[int], value: int) -> int:
    """
    Returns the index of the first element in the sorted values that compares
    greater than value, or len(values) if no such element exists.
    """
    left, right = 0, len(values)
    while left < right:
        mid = (left + right) // 2
        if value < values[mid]:
            right = mid
        else:
            left = mid + 1
    return left


def find_region(bases: Sequence[int], sizes: Sequence[int], address: int) -> int | None:
    """
    bases must be sorted ascending and describe disjoint [base, base+size[
    regions. Returns the index of the region containing address, or None.
    """
    pos = upper_bound(bases, address) - 1
    if pos >= 0 and address < bases[pos] + sizes[pos]:
        return pos
    return None
