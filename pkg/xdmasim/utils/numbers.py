from fractions import Fraction

Ratio = Fraction


def ratio(numerator: int, denominator: int) -> Ratio:
    if denominator == 0:
        raise ZeroDivisionError("ratio with zero denominator")
    return Fraction(numerator, denominator)


def as_float(value: Ratio, digits: int = 6) -> float:
    return round(float(value), digits)
