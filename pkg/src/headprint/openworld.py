"""Open-world detection statistics: FPR from TPR, base rate, Bayesian detection rate."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .errors import DegenerateError, InvalidArgumentError


@dataclass(frozen=True)
class DetectionStats:
    tpr: float
    fpr: float
    positives: int
    negatives: int


@dataclass(frozen=True)
class OpenWorldReport:
    base: float
    bdr: float
    tpr: float
    fpr: float
    in_lib_count: int | None = None
    total_count: int | None = None

    def as_dict(self, digits: int = 4) -> dict:
        """Report fields with rates rounded to ``digits`` significant digits."""
        d = asdict(self)
        for key in ("base", "bdr", "tpr", "fpr"):
            d[key] = float(f"{d[key]:.{digits}g}")
        return {k: v for k, v in d.items() if v is not None}


def _check_rate(name: str, x: float):
    if not 0.0 <= x <= 1.0:
        raise InvalidArgumentError(f"{name} must lie in [0, 1], got {x}")


def fpr_from_tpr(tpr: float, P: int, N: int) -> float:
    _check_rate("tpr", tpr)
    if N < 1:
        raise InvalidArgumentError("N must be at least 1")
    if P < 0:
        raise InvalidArgumentError("P must be nonnegative")
    return (1.0 - tpr) * P / N


def base_rate(in_lib: int, total: int) -> float:
    if not 1 <= in_lib <= total:
        raise InvalidArgumentError(f"need 1 <= in_lib <= total, got {in_lib}/{total}")
    return in_lib / total


def bdr(tpr: float, fpr: float, base: float) -> float:
    _check_rate("tpr", tpr)
    _check_rate("fpr", fpr)
    _check_rate("base", base)
    hit = tpr * base
    denom = hit + fpr * (1.0 - base)
    if denom == 0.0:
        raise DegenerateError("BDR undefined: tpr*base + fpr*(1-base) is zero")
    return hit / denom


def open_world_report(tpr: float, base: float, fpr: float | None = None,
                      P: int | None = None, N: int | None = None,
                      in_lib: int | None = None, total: int | None = None) -> OpenWorldReport:
    """BDR from either an explicit FPR or one derived from ``P`` and ``N``."""
    if fpr is None:
        if P is None or N is None:
            raise InvalidArgumentError("give either fpr or both P and N")
        fpr = fpr_from_tpr(tpr, P, N)
    return OpenWorldReport(base, bdr(tpr, fpr, base), tpr, fpr, in_lib, total)
